//! Single-excitation spin register: non-Hermitian Hamiltonian assembly and
//! Schrödinger evolution.
//!
//! The basis is `{|impurity excited⟩, |atom 1 excited⟩, ..., |atom N excited⟩}`.
//! In the rotating frame the Hamiltonian carries `-δ - iγ/2` on the diagonal
//! and the complex couplings `C = J - iΓ/2` off it; evolution follows
//! `i ∂_t ψ = H ψ`, so the norm decays monotonically (lost norm is emitted
//! photons) and is never renormalized. Counter-rotating terms annihilate every
//! single-excitation state and are omitted.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Body, Error, Result};
use crate::greens::coupling_pair;
use crate::scalar::{c, Real, C};
use crate::units::EmitterParams;

/// Complex amplitude vector over the single-excitation basis.
///
/// Index 0 is the impurity-excited state; index i ≥ 1 is lattice atom i.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState<T: Real> {
    pub amps: DVector<C<T>>,
    /// Time of the state, 1/γ0.
    pub time: T,
}

impl<T: Real> SpinState<T> {
    pub fn impurity_excited(dim: usize) -> Self {
        let mut amps = DVector::zeros(dim);
        amps[0] = c(T::one(), T::zero());
        Self {
            amps,
            time: T::zero(),
        }
    }

    pub fn from_amplitudes(amps: Vec<C<T>>, time: T) -> Self {
        Self {
            amps: DVector::from_vec(amps),
            time,
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    /// Total remaining excitation ⟨ψ|ψ⟩.
    pub fn norm_sqr(&self) -> T {
        self.amps
            .iter()
            .map(|a| a.norm_sqr())
            .fold(T::zero(), |s, x| s + x)
    }

    /// Componentwise |amps|²; index 0 is the impurity population.
    pub fn populations(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Impurity excited-state population.
    pub fn impurity_population(&self) -> T {
        self.amps[0].norm_sqr()
    }

    /// Correlators ⟨s†σ_i⟩ = conj(a_0) a_i for i = 1..N.
    pub fn correlators(&self) -> Vec<C<T>> {
        let a0c = self.amps[0].conj();
        self.amps.iter().skip(1).map(|ai| a0c * ai).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.amps
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// Dense non-Hermitian Hamiltonian over the single-excitation basis, γ0 units.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinHamiltonian<T: Real> {
    pub matrix: DMatrix<C<T>>,
}

impl<T: Real> SpinHamiltonian<T> {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The Hermitian collective decay matrix Γ with γ on the diagonal, from
    /// `H = H_J - (i/2) Γ`. Positive semidefiniteness of Γ is what makes the
    /// norm nonincreasing.
    pub fn gamma_matrix(&self) -> DMatrix<C<T>> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let h_ij = self.matrix[(i, j)];
                let h_ji_c = self.matrix[(j, i)].conj();
                // Anti-Hermitian part: (H - H†)/2 = -(i/2) Γ  =>  Γ = i (H - H†).
                let d = h_ij - h_ji_c;
                out[(i, j)] = c(-d.im, d.re);
            }
        }
        out
    }
}

/// Assembles the rotating-frame Hamiltonian at the given emitter positions.
///
/// Row/column 0 belongs to the impurity: `H[0,i] = C_Ii`, `H[i,0] = C_iI`
/// (first dipole index contracted from the left in each case). Fails if any
/// two emitters sit closer than the singularity cutoff, naming the pair.
pub fn assemble_hamiltonian<T: Real>(
    impurity_pos: &Vector3<T>,
    lattice_positions: &[Vector3<T>],
    impurity: &EmitterParams<T>,
    lattice: &EmitterParams<T>,
    k0: T,
) -> Result<SpinHamiltonian<T>> {
    let n_l = lattice_positions.len();
    let dim = n_l + 1;
    let mut matrix = DMatrix::zeros(dim, dim);
    matrix[(0, 0)] = c(-impurity.delta, -impurity.gamma / (T::one() + T::one()));
    let lat_diag = c(-lattice.delta, -lattice.gamma / (T::one() + T::one()));
    for i in 0..n_l {
        matrix[(i + 1, i + 1)] = lat_diag;
    }
    let name = |idx: usize| {
        if idx == 0 {
            Body::Impurity
        } else {
            Body::Lattice(idx - 1)
        }
    };
    for i in 0..n_l {
        let r = impurity_pos - lattice_positions[i];
        let (c_imp_i, c_i_imp) =
            coupling_pair(impurity, lattice, &r, k0).map_err(|e| promote(e, name(0), name(i + 1)))?;
        matrix[(0, i + 1)] = c_imp_i.c;
        matrix[(i + 1, 0)] = c_i_imp.c;
    }
    for i in 0..n_l {
        for j in (i + 1)..n_l {
            let r = lattice_positions[i] - lattice_positions[j];
            let (c_ij, c_ji) = coupling_pair(lattice, lattice, &r, k0)
                .map_err(|e| promote(e, name(i + 1), name(j + 1)))?;
            matrix[(i + 1, j + 1)] = c_ij.c;
            matrix[(j + 1, i + 1)] = c_ji.c;
        }
    }
    Ok(SpinHamiltonian { matrix })
}

fn promote(e: Error, a: Body, b: Body) -> Error {
    match e {
        Error::TooClose { separation, .. } => Error::CoincidentEmitters { a, b, separation },
        other => other,
    }
}

/// Advances the amplitudes by one fixed RK4 step of `∂_t ψ = -iH ψ` with the
/// Hamiltonian frozen over the step. No renormalization is applied.
pub fn evolve_spin<T: Real>(
    state: &SpinState<T>,
    hamiltonian: &SpinHamiltonian<T>,
    dt: T,
) -> Result<SpinState<T>> {
    if state.dim() != hamiltonian.dim() {
        return Err(Error::DimensionMismatch {
            expected: hamiltonian.dim(),
            got: state.dim(),
        });
    }
    assert!(dt > T::zero(), "time step must be positive");
    let deriv = |psi: &DVector<C<T>>| -> DVector<C<T>> {
        let h_psi = &hamiltonian.matrix * psi;
        h_psi.map(|z| c(z.im, -z.re)) // -i * (H ψ)
    };
    let half = dt / (T::one() + T::one());
    let sixth = dt / (T::one() + T::one() + T::one() + T::one() + T::one() + T::one());
    let k1 = deriv(&state.amps);
    let k2 = deriv(&(&state.amps + &k1 * c(half, T::zero())));
    let k3 = deriv(&(&state.amps + &k2 * c(half, T::zero())));
    let k4 = deriv(&(&state.amps + &k3 * c(dt, T::zero())));
    let two = c(T::one() + T::one(), T::zero());
    let amps = &state.amps + (k1 + k2 * two + k3 * two + k4) * c(sixth, T::zero());
    Ok(SpinState {
        amps,
        time: state.time + dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{real, to_f64};
    use crate::units::{EmitterParams, LatticeGeometry};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K0: f64 = std::f64::consts::TAU;

    fn z_params(gamma: f64, delta: f64) -> EmitterParams<f64> {
        EmitterParams::new(gamma, delta, EmitterParams::z_dipole()).unwrap()
    }

    fn circular_params() -> EmitterParams<f64> {
        EmitterParams::new(1.0, 0.0, EmitterParams::circular_dipole()).unwrap()
    }

    fn evolve_to(state: SpinState<f64>, h: &SpinHamiltonian<f64>, t: f64, dt: f64) -> SpinState<f64> {
        let steps = (t / dt).round() as usize;
        let mut s = state;
        for _ in 0..steps {
            s = evolve_spin(&s, h, dt).unwrap();
        }
        s
    }

    #[test]
    fn isolated_impurity_is_a_pure_decay_term() {
        let h = assemble_hamiltonian(
            &Vector3::zeros(),
            &[],
            &z_params(1.0, 0.0),
            &z_params(1.0, 0.0),
            K0,
        )
        .unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.matrix[(0, 0)], c(0.0, -0.5));
    }

    #[test]
    fn isolated_impurity_population_decays_exponentially() {
        let h = assemble_hamiltonian(
            &Vector3::zeros(),
            &[],
            &z_params(1.0, 0.0),
            &z_params(1.0, 0.0),
            K0,
        )
        .unwrap();
        let state = evolve_to(SpinState::impurity_excited(1), &h, 1.0, 1e-4);
        assert!((state.impurity_population() - (-1.0f64).exp()).abs() < 1e-8);
        let state = evolve_to(state, &h, 1.0, 1e-4);
        assert!((state.impurity_population() - (-2.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn off_diagonal_carries_the_pair_coupling() {
        let lattice_pos = [Vector3::new(0.5, 0.0, 0.0)];
        let h = assemble_hamiltonian(
            &Vector3::zeros(),
            &lattice_pos,
            &z_params(1.0, 0.0),
            &z_params(1.0, 0.0),
            K0,
        )
        .unwrap();
        // Γ from the frozen coupling oracle: C = J - iΓ/2 with Γ = -0.15198...
        let c01 = h.matrix[(0, 1)];
        assert_relative_eq!(-2.0 * c01.im, -0.15198177546350666, max_relative = 1e-12);
        assert_relative_eq!(c01.re, 0.21454376381294339, max_relative = 1e-12);
        assert_eq!(c01, h.matrix[(1, 0)]);
    }

    #[test]
    fn zero_detuning_makes_the_diagonal_purely_imaginary() {
        let lattice = LatticeGeometry::<f64>::new(2, 2, 0.5, 0.0, 1.0).unwrap();
        let h = assemble_hamiltonian(
            &Vector3::new(0.1, 0.05, 0.0),
            lattice.rest_positions(),
            &circular_params(),
            &circular_params(),
            K0,
        )
        .unwrap();
        for k in 0..h.dim() {
            assert_eq!(h.matrix[(k, k)].re, 0.0);
            assert!(h.matrix[(k, k)].im < 0.0);
        }
    }

    #[test]
    fn zero_hamiltonian_leaves_the_state_unchanged() {
        let h = SpinHamiltonian {
            matrix: DMatrix::zeros(3, 3),
        };
        let state = SpinState::from_amplitudes(
            vec![c(0.5, 0.1), c(-0.3, 0.2), c(0.0, 0.7)],
            0.0,
        );
        let next = evolve_spin(&state, &h, 1e-3).unwrap();
        assert_eq!(next.amps, state.amps);
    }

    #[test]
    fn symmetric_pair_decays_superradiantly() {
        // Two identical atoms, symmetric state: amplitude eigenvalue
        // -iδ - γ/2 - iC gives population decay at γ + Γ_12.
        let pos = [Vector3::new(-0.25, 0.0, 0.0), Vector3::new(0.25, 0.0, 0.0)];
        let p = z_params(1.0, 0.0);
        let pair = crate::greens::coupling(&p, &p, &(pos[0] - pos[1]), K0).unwrap();
        let rate = 1.0 + pair.gamma();

        let mut matrix = DMatrix::zeros(2, 2);
        matrix[(0, 0)] = c(0.0, -0.5);
        matrix[(1, 1)] = c(0.0, -0.5);
        matrix[(0, 1)] = pair.c;
        matrix[(1, 0)] = pair.c;
        let h = SpinHamiltonian { matrix };

        let s = 1.0 / 2.0f64.sqrt();
        let state = SpinState::from_amplitudes(vec![c(s, 0.0), c(s, 0.0)], 0.0);
        let t = 0.7;
        let evolved = evolve_to(state, &h, t, 1e-4);
        assert_relative_eq!(
            evolved.norm_sqr(),
            (-rate * t).exp(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = SpinHamiltonian {
            matrix: DMatrix::zeros(2, 2),
        };
        let state = SpinState::impurity_excited(3);
        assert!(matches!(
            evolve_spin(&state, &h, 1e-3),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn correlators_match_the_explicit_operator_oracle() {
        // ⟨ψ| s†σ_i |ψ⟩ with dense operator matrices on the basis
        // {|I⟩, |1⟩, ..., |N⟩}: s†σ_i maps |i⟩ to |I⟩.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_l = 5;
        let dim = n_l + 1;
        let mut amps: Vec<C<f64>> = (0..dim)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= c(norm, 0.0));
        let state = SpinState::from_amplitudes(amps.clone(), 0.0);

        let kappa = state.correlators();
        for i in 0..n_l {
            let mut op = DMatrix::<C<f64>>::zeros(dim, dim);
            op[(0, i + 1)] = c(1.0, 0.0);
            let psi = DVector::from_vec(amps.clone());
            let oracle = psi.dotc(&(&op * &psi));
            assert!((kappa[i] - oracle).norm_sqr().sqrt() < 1e-14);
        }
    }

    #[test]
    fn correlators_trivial_cases() {
        let state = SpinState::<f64>::impurity_excited(4);
        assert!(state.correlators().iter().all(|k| *k == c(0.0, 0.0)));

        let s = 1.0 / 2.0f64.sqrt();
        let state =
            SpinState::from_amplitudes(vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0)], 0.0);
        let kappa = state.correlators();
        assert_relative_eq!(kappa[0].re, 0.5, max_relative = 1e-15);
        assert_eq!(kappa[0].im, 0.0);
        assert_eq!(kappa[1], c(0.0, 0.0));
    }

    #[test]
    fn populations_are_modulus_squared() {
        let state = SpinState::from_amplitudes(vec![c(0.6, 0.0), c(0.0, 0.8)], 0.0);
        let pops = state.populations();
        assert_relative_eq!(pops[0], 0.36);
        assert_relative_eq!(pops[1], 0.64);
    }

    #[test]
    fn gamma_matrix_is_positive_semidefinite() {
        let lattice = LatticeGeometry::<f64>::new(3, 3, 0.45, 0.0, 1.0).unwrap();
        let h = assemble_hamiltonian(
            &Vector3::new(0.12, -0.07, 0.0),
            lattice.rest_positions(),
            &circular_params(),
            &circular_params(),
            K0,
        )
        .unwrap();
        let gamma = h.gamma_matrix();
        // Hermitian by construction; eigenvalues are real and ≥ -1e-10.
        let eig = gamma.clone().symmetric_eigen();
        for v in eig.eigenvalues.iter() {
            assert!(*v > -1e-10, "collective decay rate {v} < 0");
        }
        // Diagonal holds the bare decay rates.
        for k in 0..gamma.nrows() {
            assert_relative_eq!(gamma[(k, k)].re, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn norm_never_grows_under_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n_l = rng.gen_range(1..6);
            let mut positions: Vec<Vector3<f64>> = Vec::new();
            'placing: while positions.len() < n_l {
                let cand = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    0.0,
                );
                for p in &positions {
                    if (cand - p).norm() < 0.2 {
                        continue 'placing;
                    }
                }
                positions.push(cand);
            }
            let mut impurity_pos;
            loop {
                impurity_pos = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    0.0,
                );
                if positions.iter().all(|p| (impurity_pos - p).norm() > 0.2) {
                    break;
                }
            }
            let h = assemble_hamiltonian(
                &impurity_pos,
                &positions,
                &circular_params(),
                &circular_params(),
                K0,
            )
            .unwrap();
            let dim = n_l + 1;
            let mut amps: Vec<C<f64>> = (0..dim)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|a| *a /= c(norm, 0.0));
            let mut state = SpinState::from_amplitudes(amps, 0.0);
            let mut prev = state.norm_sqr();
            for _ in 0..200 {
                state = evolve_spin(&state, &h, 1e-4).unwrap();
                let now = state.norm_sqr();
                assert!(
                    now <= prev + 1e-10,
                    "norm grew on trial {trial}: {prev} -> {now}"
                );
                prev = now;
            }
        }
    }

    #[test]
    fn embedding_extends_the_impurity_lifetime() {
        // Impurity at the plaquette center of a circularly polarized 4×4
        // lattice outlives the isolated e^{-3} population at t = 3/γ.
        let lattice = LatticeGeometry::<f64>::new(4, 4, 0.5, 0.0, 1.0).unwrap();
        let h = assemble_hamiltonian(
            &Vector3::zeros(),
            lattice.rest_positions(),
            &circular_params(),
            &circular_params(),
            K0,
        )
        .unwrap();
        let state = evolve_to(
            SpinState::impurity_excited(17),
            &h,
            3.0,
            real::<f64>(1e-3),
        );
        let isolated = (-3.0f64).exp();
        assert!(
            to_f64(state.impurity_population()) > isolated,
            "population {} did not beat the isolated value {isolated}",
            state.impurity_population()
        );
    }
}
