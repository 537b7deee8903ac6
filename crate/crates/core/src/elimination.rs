//! Adiabatically eliminated lattice response: the impurity self-energy and
//! the effective force field across a plaquette window.
//!
//! With `z = iδ + γ/2`, `Z_ij = iJ_ij + Γ_ij/2 = i C_ij` and the impurity
//! coupling vector `Z_s`, the quasi-steady lattice response is governed by
//! `M = -((z - iω)𝟙 + Z̃_0)⁻¹`:
//!
//! ```text
//! S(r)   =  Z_s† · M · Z_s                   (apparent self-energy)
//! F_τ(r) = -2 Im[(∂_τ Z_s)ᵀ · M · Z_s]       (unit impurity population)
//! ```
//!
//! The force expression is the eliminated form of the full dynamics' force:
//! substituting the quasi-steady lattice amplitudes `a_lat = M Z_s a_0` into
//! `F_τ = -2 Re Σ_i [∂_τ C_Ii] ⟨s†σ_i⟩` yields exactly the transpose
//! contraction above, which fixes its overall sign against the integrator.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::greens::{coupling_gradient_pairs, coupling_pair};
use crate::scalar::{c, i, real, to_f64, Real, C};
use crate::units::EmitterParams;

/// Grid points closer than this to a lattice atom are masked (λ0).
pub const MASK_RADIUS_LAMBDA0: f64 = 0.05;

/// Condition-estimate ceiling for the lattice response matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Assembled inputs of the eliminated problem at fixed lattice geometry.
#[derive(Debug, Clone)]
pub struct EliminationInputs<T: Real> {
    /// z = iδ + γ/2 for the eliminated (lattice) spins.
    pub z: C<T>,
    /// Z̃_0: zero diagonal, off-diagonal iC_ij between lattice atoms.
    pub z_matrix: DMatrix<C<T>>,
    /// Spin-oscillation frequency parameter ω (γ0).
    pub omega: T,
}

impl<T: Real> EliminationInputs<T> {
    /// Builds z and Z̃_0 from the lattice geometry and parameters.
    ///
    /// The damping entering the resolvent is the eliminated lattice block's,
    /// so z uses the lattice γ and δ (identical to the impurity's wherever
    /// the reference protocols apply).
    pub fn new(
        lattice_positions: &[Vector3<T>],
        lattice: &EmitterParams<T>,
        omega: T,
        k0: T,
    ) -> Result<Self> {
        let n = lattice_positions.len();
        let params = vec![lattice.clone(); n];
        let couplings = coupling_gradient_pairs(lattice_positions, &params, k0)?;
        let mut z_matrix = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    z_matrix[(a, b)] = i::<T>() * couplings.get(a, b).expect("off-diagonal").c;
                }
            }
        }
        let two = T::one() + T::one();
        Ok(Self {
            z: c(lattice.gamma / two, lattice.delta),
            z_matrix,
            omega,
        })
    }

    /// `(z - iω)𝟙 + Z̃_0`, the matrix whose negated inverse is M.
    pub fn response_matrix(&self) -> DMatrix<C<T>> {
        let n = self.z_matrix.nrows();
        let shift = self.z - i::<T>() * c(self.omega, T::zero());
        let mut a = self.z_matrix.clone();
        for k in 0..n {
            a[(k, k)] += shift;
        }
        a
    }
}

/// LU-factorized response with a cheap condition estimate.
pub struct ResponseSolver<T: Real> {
    lu: nalgebra::LU<C<T>, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition_estimate: f64,
}

impl<T: Real> ResponseSolver<T> {
    pub fn new(inputs: &EliminationInputs<T>) -> Result<Self> {
        let a = inputs.response_matrix();
        let lu = a.lu();
        let u = lu.u();
        let mut max_d = T::zero();
        let mut min_d = T::max_value().unwrap_or(T::one());
        for k in 0..u.nrows() {
            let m = nalgebra::ComplexField::modulus(u[(k, k)]);
            if m > max_d {
                max_d = m;
            }
            if m < min_d {
                min_d = m;
            }
        }
        let condition_estimate = if min_d > T::zero() {
            to_f64(max_d / min_d)
        } else {
            f64::INFINITY
        };
        if !(condition_estimate < MAX_CONDITION) {
            return Err(Error::NearSingular {
                cond: condition_estimate,
            });
        }
        Ok(Self {
            lu,
            condition_estimate,
        })
    }

    /// `M v = -((z - iω)𝟙 + Z̃_0)⁻¹ v`.
    pub fn apply_m(&self, v: &DVector<C<T>>) -> DVector<C<T>> {
        let mut solved = self.lu.solve(v).expect("condition estimate admitted the solve");
        solved.iter_mut().for_each(|x| *x = -*x);
        solved
    }
}

/// Impurity-lattice coupling vectors at one impurity position: both index
/// orders and the gradient of the row vector.
struct ImpurityVectors<T: Real> {
    /// Z_row, components iC_Ii (impurity dipole contracted from the left).
    row: DVector<C<T>>,
    /// Z_col, components iC_iI.
    col: DVector<C<T>>,
    /// In-plane gradient of Z_row with respect to the impurity position.
    grad_row: [DVector<C<T>>; 2],
}

fn impurity_vectors<T: Real>(
    impurity_pos: &Vector3<T>,
    lattice_positions: &[Vector3<T>],
    impurity: &EmitterParams<T>,
    lattice: &EmitterParams<T>,
    k0: T,
) -> Result<ImpurityVectors<T>> {
    let n = lattice_positions.len();
    let mut row = DVector::zeros(n);
    let mut col = DVector::zeros(n);
    let mut gx = DVector::zeros(n);
    let mut gy = DVector::zeros(n);
    let iu = i::<T>();
    for (k, pos) in lattice_positions.iter().enumerate() {
        let r = impurity_pos - pos;
        let (c_imp_k, c_k_imp) = coupling_pair(impurity, lattice, &r, k0)?;
        row[k] = iu * c_imp_k.c;
        col[k] = iu * c_k_imp.c;
        gx[k] = iu * c_imp_k.grad_c.x;
        gy[k] = iu * c_imp_k.grad_c.y;
    }
    Ok(ImpurityVectors {
        row,
        col,
        grad_row: [gx, gy],
    })
}

/// Apparent self-energy `S = Z_s† M Z_s` at one impurity position.
pub fn self_energy<T: Real>(
    impurity_pos: &Vector3<T>,
    lattice_positions: &[Vector3<T>],
    impurity: &EmitterParams<T>,
    lattice: &EmitterParams<T>,
    omega: T,
    k0: T,
) -> Result<C<T>> {
    if lattice_positions.is_empty() {
        return Ok(c(T::zero(), T::zero()));
    }
    let inputs = EliminationInputs::new(lattice_positions, lattice, omega, k0)?;
    let solver = ResponseSolver::new(&inputs)?;
    let vecs = impurity_vectors(impurity_pos, lattice_positions, impurity, lattice, k0)?;
    let m_col = solver.apply_m(&vecs.col);
    Ok(vecs.row.dotc(&m_col))
}

/// Eigenvalues of `z𝟙 + Z̃_0`: the lattice spin normal modes whose magnitudes
/// set the time-scale separation the elimination relies on.
pub fn eliminated_mode_frequencies<T: Real>(
    lattice_positions: &[Vector3<T>],
    lattice: &EmitterParams<T>,
    k0: T,
) -> Result<Vec<C<T>>> {
    if lattice_positions.is_empty() {
        return Ok(Vec::new());
    }
    let inputs = EliminationInputs::new(lattice_positions, lattice, T::zero(), k0)?;
    let a = inputs.response_matrix();
    let schur = a.schur();
    let eig = schur.eigenvalues().expect(
        "complex Schur form is triangular, eigenvalues are its diagonal",
    );
    Ok(eig.iter().copied().collect())
}

/// Rectangular sampling window in the lattice plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldWindow<T: Real> {
    pub min: Vector2<T>,
    pub max: Vector2<T>,
}

/// Self-energy and effective force sampled on a uniform grid.
///
/// Row-major storage with x fastest; `mask` marks points inside the
/// singular neighborhood of a lattice atom (their samples are zeroed).
#[derive(Debug, Clone)]
pub struct FieldMap<T: Real> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    pub self_energy: Vec<C<T>>,
    pub force: Vec<Vector2<T>>,
    pub mask: Vec<bool>,
    pub omega: T,
    pub mask_radius: T,
    pub condition_estimate: f64,
}

impl<T: Real> FieldMap<T> {
    pub fn resolution(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.xs.len() + ix
    }
}

/// Samples `S` and the unit-population effective force over `window` with
/// `resolution ≥ 2` points per axis. The lattice response is factorized once
/// and reused across grid points; masked points are data, not failures.
pub fn effective_force_field<T: Real>(
    window: FieldWindow<T>,
    resolution: (usize, usize),
    lattice_positions: &[Vector3<T>],
    impurity: &EmitterParams<T>,
    lattice: &EmitterParams<T>,
    omega: T,
    k0: T,
) -> Result<FieldMap<T>> {
    assert!(
        resolution.0 >= 2 && resolution.1 >= 2,
        "field map needs at least 2 samples per axis"
    );
    let inputs = EliminationInputs::new(lattice_positions, lattice, omega, k0)?;
    let solver = ResponseSolver::new(&inputs)?;
    let mask_radius = real::<T>(MASK_RADIUS_LAMBDA0);

    let axis = |lo: T, hi: T, n: usize| -> Vec<T> {
        let step = (hi - lo) / real::<T>((n - 1) as f64);
        (0..n).map(|k| lo + step * real::<T>(k as f64)).collect()
    };
    let xs = axis(window.min.x, window.max.x, resolution.0);
    let ys = axis(window.min.y, window.max.y, resolution.1);

    let mut self_energy = Vec::with_capacity(xs.len() * ys.len());
    let mut force = Vec::with_capacity(xs.len() * ys.len());
    let mut mask = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let pos = Vector3::new(x, y, T::zero());
            let masked = lattice_positions
                .iter()
                .any(|p| (pos - p).norm() < mask_radius);
            if masked {
                self_energy.push(c(T::zero(), T::zero()));
                force.push(Vector2::zeros());
                mask.push(true);
                continue;
            }
            let vecs = impurity_vectors(&pos, lattice_positions, impurity, lattice, k0)?;
            let m_col = solver.apply_m(&vecs.col);
            let s = vecs.row.dotc(&m_col);
            let two = T::one() + T::one();
            let fx = -two * vecs.grad_row[0].dot(&m_col).im;
            let fy = -two * vecs.grad_row[1].dot(&m_col).im;
            self_energy.push(s);
            force.push(Vector2::new(fx, fy));
            mask.push(false);
        }
    }
    Ok(FieldMap {
        xs,
        ys,
        self_energy,
        force,
        mask,
        omega,
        mask_radius,
        condition_estimate: solver.condition_estimate,
    })
}
