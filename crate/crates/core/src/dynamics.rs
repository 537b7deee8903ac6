//! Self-consistent integration of the coupled spin-motion system: Schrödinger
//! evolution of the spin register, light-induced dipole forces on the impurity
//! and, optionally, mobile lattice atoms in harmonic traps.
//!
//! Forces derive from per-pair interaction energies. For the pair (m, n) with
//! coupling C_mn and correlator w_mn = ⟨σ_m†σ_n⟩ the pair energy is
//! `E_mn = 2 Re[C_mn w_mn]`; the force on m is `-∇_m E_mn` (correlators frozen)
//! and the force on n is its exact negative. The full complex gradient enters,
//! so the dissipative Γ-gradient contributes alongside the coherent J part,
//! and every pair conserves momentum identically. For the impurity pair this
//! reduces to `F_τ = -2 Re Σ_i [∂_τ C_Ii] ⟨s†σ_i⟩`.
//!
//! In reduced units (lengths λ0, momenta ħk0, times 1/γ0) the kinematics read
//! `dr/dt = (ω_rec/π) p` and `dp/dt = F/(2π)` per in-plane component.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::config::{Integrator, SimulationConfig};
use crate::error::{Body, Error, Result};
use crate::greens::{coupling_pair, CouplingMatrix, CouplingSample};
use crate::scalar::{c, real, to_f64, Real, C};
use crate::spin::{SpinHamiltonian, SpinState};
use crate::units::{LatticeGeometry, UnitSystem};

/// Full semiclassical state: spin amplitudes plus classical kinematics.
///
/// z components stay exactly zero: the update rules never write them.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T: Real> {
    pub spin: SpinState<T>,
    /// Impurity position, λ0.
    pub impurity_r: Vector3<T>,
    /// Impurity momentum, ħk0.
    pub impurity_p: Vector3<T>,
    /// Lattice positions, λ0. Equal to the rest positions while pinned.
    pub lattice_r: Vec<Vector3<T>>,
    /// Lattice momenta, ħk0. Zero and frozen while pinned.
    pub lattice_p: Vec<Vector3<T>>,
    /// Time, 1/γ0.
    pub t: T,
}

impl<T: Real> SystemState<T> {
    pub fn is_finite(&self) -> bool {
        let v3 = |v: &Vector3<T>| v.x.is_finite() && v.y.is_finite() && v.z.is_finite();
        self.spin.is_finite()
            && v3(&self.impurity_r)
            && v3(&self.impurity_p)
            && self.lattice_r.iter().all(v3)
            && self.lattice_p.iter().all(v3)
    }
}

/// Why a trajectory stopped. Runtime failures are recorded here rather than
/// aborting, so partial trajectories stay available.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    /// Ran to t_final.
    Completed { time: f64 },
    /// Impurity left the escape radius around the lattice center.
    Escaped { time: f64, radius: f64 },
    /// Total remaining excitation fell below the configured floor.
    PopulationFloor { time: f64, floor: f64 },
    /// Two bodies fell below the singularity cutoff (error tag).
    Collision {
        time: f64,
        body_a: String,
        body_b: String,
        separation: f64,
    },
    /// State stopped being finite (error tag).
    NonFinite { time: f64 },
}

impl Termination {
    pub fn is_error(&self) -> bool {
        matches!(self, Termination::Collision { .. } | Termination::NonFinite { .. })
    }

    pub fn time(&self) -> f64 {
        match self {
            Termination::Completed { time }
            | Termination::Escaped { time, .. }
            | Termination::PopulationFloor { time, .. }
            | Termination::Collision { time, .. }
            | Termination::NonFinite { time } => *time,
        }
    }
}

/// Sampled trajectory: one row per sample, cadence `sample_interval · dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T: Real> {
    pub times: Vec<T>,
    /// Impurity in-plane positions.
    pub positions: Vec<Vector2<T>>,
    /// Impurity in-plane momenta.
    pub momenta: Vec<Vector2<T>>,
    pub impurity_population: Vec<T>,
    /// Per-lattice-atom populations, one row per sample.
    pub lattice_populations: Vec<Vec<T>>,
    /// Spin norm² per sample.
    pub norm_sqr: Vec<T>,
    /// Lattice in-plane positions per sample; present for mobile runs.
    pub lattice_positions: Option<Vec<Vec<Vector2<T>>>>,
    pub termination: Termination,
    /// Sample spacing in time, 1/γ0.
    pub sample_dt: T,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Time derivative of a [`SystemState`].
struct Derivative<T: Real> {
    damps: DVector<C<T>>,
    dr_imp: Vector3<T>,
    dp_imp: Vector3<T>,
    dr_lat: Vec<Vector3<T>>,
    dp_lat: Vec<Vector3<T>>,
}

fn offset_state<T: Real>(base: &SystemState<T>, k: &Derivative<T>, h: T) -> SystemState<T> {
    let ch = c(h, T::zero());
    SystemState {
        spin: SpinState {
            amps: &base.spin.amps + &k.damps * ch,
            time: base.spin.time + h,
        },
        impurity_r: base.impurity_r + k.dr_imp * h,
        impurity_p: base.impurity_p + k.dp_imp * h,
        lattice_r: base
            .lattice_r
            .iter()
            .zip(&k.dr_lat)
            .map(|(r, d)| r + d * h)
            .collect(),
        lattice_p: base
            .lattice_p
            .iter()
            .zip(&k.dp_lat)
            .map(|(p, d)| p + d * h)
            .collect(),
        t: base.t + h,
    }
}

/// Force on the impurity from the coupling-gradient matrix (emitter 0 is the
/// impurity): `F_τ = -2 Re Σ_i [∂_τ C_Ii] ⟨s†σ_i⟩`, in-plane components only.
pub fn impurity_force<T: Real>(
    state: &SystemState<T>,
    couplings: &CouplingMatrix<T>,
) -> Vector2<T> {
    let kappa = state.spin.correlators();
    let two = T::one() + T::one();
    let mut f = Vector2::zeros();
    for (i, k) in kappa.iter().enumerate() {
        let sample = couplings
            .get(0, i + 1)
            .expect("off-diagonal coupling present");
        f.x -= two * (sample.grad_c.x * k).re;
        f.y -= two * (sample.grad_c.y * k).re;
    }
    f
}

/// Dipole plus trap forces on every lattice atom (mobile-lattice mode).
///
/// Dipole terms are the exact reactions of the per-pair energies: the
/// impurity pair contributes `+2 Re[∂C_Ii ⟨s†σ_i⟩]` to atom i, and lattice
/// pair (i, j) with i < j contributes `∓2 Re[∂C_ij ⟨σ_i†σ_j⟩]` to i and j.
pub fn lattice_forces<T: Real>(
    state: &SystemState<T>,
    couplings: &CouplingMatrix<T>,
    geometry: &LatticeGeometry<T>,
) -> Vec<Vector2<T>> {
    let n_l = state.lattice_r.len();
    let amps = &state.spin.amps;
    let kappa = state.spin.correlators();
    let two = T::one() + T::one();
    let mut forces = vec![Vector2::<T>::zeros(); n_l];

    for i in 0..n_l {
        let sample = couplings
            .get(0, i + 1)
            .expect("off-diagonal coupling present");
        forces[i].x += two * (sample.grad_c.x * kappa[i]).re;
        forces[i].y += two * (sample.grad_c.y * kappa[i]).re;
    }
    for i in 0..n_l {
        for j in (i + 1)..n_l {
            let w_ij = amps[i + 1].conj() * amps[j + 1];
            let sample = couplings
                .get(i + 1, j + 1)
                .expect("off-diagonal coupling present");
            let fx = two * (sample.grad_c.x * w_ij).re;
            let fy = two * (sample.grad_c.y * w_ij).re;
            forces[i].x -= fx;
            forces[i].y -= fy;
            forces[j].x += fx;
            forces[j].y += fy;
        }
    }
    let stiffness = geometry.lattice_mass_reduced()
        * geometry.trap_frequency
        * geometry.trap_frequency;
    for i in 0..n_l {
        let d = state.lattice_r[i] - geometry.rest_positions()[i];
        forces[i].x -= stiffness * d.x;
        forces[i].y -= stiffness * d.y;
    }
    forces
}

/// Owns the per-trajectory integration machinery.
///
/// A pinned lattice keeps its coupling block constant, so the Hamiltonian
/// template is assembled once and only the impurity row/column is refreshed
/// at each stage evaluation.
pub struct Engine<T: Real> {
    config: SimulationConfig<T>,
    k0: T,
    /// Hamiltonian scratch; lattice block pre-filled in pinned mode.
    h: DMatrix<C<T>>,
    imp_velocity: T,
    lat_velocity: T,
    force_factor: T,
    trap_stiffness: T,
    escape_radius: T,
    mobile: bool,
}

impl<T: Real> Engine<T> {
    pub fn new(config: &SimulationConfig<T>) -> Result<Self> {
        config.validate()?;
        let k0 = config.units.k0_reduced();
        let n = config.lattice.atom_count() + 1;
        let mut h = DMatrix::zeros(n, n);
        let two = T::one() + T::one();
        h[(0, 0)] = c(
            -config.impurity_params.delta,
            -config.impurity_params.gamma / two,
        );
        let lat_diag = c(
            -config.lattice_params.delta,
            -config.lattice_params.gamma / two,
        );
        for i in 1..n {
            h[(i, i)] = lat_diag;
        }
        // Lattice block at rest positions; also validates pair separations.
        let rest = config.lattice.rest_positions();
        for i in 0..rest.len() {
            for j in (i + 1)..rest.len() {
                let r = rest[i] - rest[j];
                let (c_ij, c_ji) =
                    coupling_pair(&config.lattice_params, &config.lattice_params, &r, k0)
                        .map_err(|e| promote_pair(e, i, j, T::zero()))?;
                h[(i + 1, j + 1)] = c_ij.c;
                h[(j + 1, i + 1)] = c_ji.c;
            }
        }
        let geometry = &config.lattice;
        Ok(Self {
            k0,
            imp_velocity: UnitSystem::velocity_factor(config.units.omega_rec),
            lat_velocity: UnitSystem::velocity_factor(geometry.lattice_omega_rec),
            force_factor: UnitSystem::<T>::force_factor(),
            trap_stiffness: geometry.lattice_mass_reduced()
                * geometry.trap_frequency
                * geometry.trap_frequency,
            escape_radius: config.effective_escape_radius(),
            mobile: config.mobile_lattice,
            h,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &SimulationConfig<T> {
        &self.config
    }

    /// Starting state from the config's initial conditions.
    pub fn initial_state(&self) -> SystemState<T> {
        let rest = self.config.lattice.rest_positions().to_vec();
        let n_l = rest.len();
        SystemState {
            spin: self.config.initial_spin_state(),
            impurity_r: self.config.initial_position,
            impurity_p: self.config.initial_momentum,
            lattice_r: rest,
            lattice_p: vec![Vector3::zeros(); n_l],
            t: T::zero(),
        }
    }

    /// Couplings and forces at the given state.
    fn derivative(&mut self, state: &SystemState<T>) -> Result<Derivative<T>> {
        let n_l = state.lattice_r.len();
        let amps = &state.spin.amps;
        let a0_conj = amps[0].conj();
        let two = T::one() + T::one();

        let mut f_imp = Vector2::<T>::zeros();
        let mut f_lat = vec![Vector2::<T>::zeros(); if self.mobile { n_l } else { 0 }];

        // Impurity row/column and the impurity-lattice pair forces.
        for i in 0..n_l {
            let r = state.impurity_r - state.lattice_r[i];
            let (c_imp_i, c_i_imp) = coupling_pair(
                &self.config.impurity_params,
                &self.config.lattice_params,
                &r,
                self.k0,
            )
            .map_err(|e| promote_impurity(e, i, state.t))?;
            self.h[(0, i + 1)] = c_imp_i.c;
            self.h[(i + 1, 0)] = c_i_imp.c;
            let kappa_i = a0_conj * amps[i + 1];
            let fx = two * (c_imp_i.grad_c.x * kappa_i).re;
            let fy = two * (c_imp_i.grad_c.y * kappa_i).re;
            f_imp.x -= fx;
            f_imp.y -= fy;
            if self.mobile {
                f_lat[i].x += fx;
                f_lat[i].y += fy;
            }
        }

        // Lattice block: constant while pinned, rebuilt when mobile.
        if self.mobile {
            for i in 0..n_l {
                for j in (i + 1)..n_l {
                    let r = state.lattice_r[i] - state.lattice_r[j];
                    let (c_ij, c_ji) = coupling_pair(
                        &self.config.lattice_params,
                        &self.config.lattice_params,
                        &r,
                        self.k0,
                    )
                    .map_err(|e| promote_pair(e, i, j, state.t))?;
                    self.h[(i + 1, j + 1)] = c_ij.c;
                    self.h[(j + 1, i + 1)] = c_ji.c;
                    let w_ij = amps[i + 1].conj() * amps[j + 1];
                    let fx = two * (c_ij.grad_c.x * w_ij).re;
                    let fy = two * (c_ij.grad_c.y * w_ij).re;
                    f_lat[i].x -= fx;
                    f_lat[i].y -= fy;
                    f_lat[j].x += fx;
                    f_lat[j].y += fy;
                }
            }
        }

        let h_psi = &self.h * amps;
        let damps = h_psi.map(|z| c(z.im, -z.re));

        let dr_imp = Vector3::new(
            self.imp_velocity * state.impurity_p.x,
            self.imp_velocity * state.impurity_p.y,
            T::zero(),
        );
        let dp_imp = Vector3::new(
            self.force_factor * f_imp.x,
            self.force_factor * f_imp.y,
            T::zero(),
        );

        let (dr_lat, dp_lat) = if self.mobile {
            let rest = self.config.lattice.rest_positions();
            let dr = state
                .lattice_p
                .iter()
                .map(|p| Vector3::new(self.lat_velocity * p.x, self.lat_velocity * p.y, T::zero()))
                .collect();
            let dp = (0..n_l)
                .map(|i| {
                    let d = state.lattice_r[i] - rest[i];
                    Vector3::new(
                        self.force_factor * (f_lat[i].x - self.trap_stiffness * d.x),
                        self.force_factor * (f_lat[i].y - self.trap_stiffness * d.y),
                        T::zero(),
                    )
                })
                .collect();
            (dr, dp)
        } else {
            (vec![Vector3::zeros(); n_l], vec![Vector3::zeros(); n_l])
        };

        Ok(Derivative {
            damps,
            dr_imp,
            dp_imp,
            dr_lat,
            dp_lat,
        })
    }

    /// One step of the configured integrator.
    pub fn step(&mut self, state: &SystemState<T>) -> Result<SystemState<T>> {
        let next = match self.config.integrator {
            Integrator::Rk4 => self.step_rk4(state)?,
            Integrator::SplitEuler => self.step_split_euler(state)?,
        };
        if !next.is_finite() {
            return Err(Error::NonFinite {
                time: to_f64(next.t),
            });
        }
        Ok(next)
    }

    /// Classical RK4 on the full coupled vector field; couplings and forces
    /// are re-evaluated at every internal stage at the stage positions.
    fn step_rk4(&mut self, state: &SystemState<T>) -> Result<SystemState<T>> {
        let dt = self.config.dt;
        let half = dt / (T::one() + T::one());
        let k1 = self.derivative(state)?;
        let y2 = offset_state(state, &k1, half);
        let k2 = self.derivative(&y2)?;
        let y3 = offset_state(state, &k2, half);
        let k3 = self.derivative(&y3)?;
        let y4 = offset_state(state, &k3, dt);
        let k4 = self.derivative(&y4)?;

        let sixth = dt / real::<T>(6.0);
        let third = dt / real::<T>(3.0);
        let mut next = offset_state(state, &k1, sixth);
        next = offset_state(&next, &k2, third);
        next = offset_state(&next, &k3, third);
        next = offset_state(&next, &k4, sixth);
        next.t = state.t + dt;
        next.spin.time = next.t;
        Ok(next)
    }

    /// First-order split scheme: spin substep under the frozen Hamiltonian,
    /// then an Euler kinematics update with start-of-step forces.
    fn step_split_euler(&mut self, state: &SystemState<T>) -> Result<SystemState<T>> {
        let dt = self.config.dt;
        let k = self.derivative(state)?;
        // Spin: RK4 under the Hamiltonian frozen at the step's start; the
        // splitting itself is what limits the order.
        let frozen = SpinHamiltonian {
            matrix: self.h.clone(),
        };
        let spin = crate::spin::evolve_spin(&state.spin, &frozen, dt)?;
        let mut next = SystemState {
            spin,
            impurity_r: state.impurity_r + k.dr_imp * dt,
            impurity_p: state.impurity_p + k.dp_imp * dt,
            lattice_r: state
                .lattice_r
                .iter()
                .zip(&k.dr_lat)
                .map(|(r, d)| r + d * dt)
                .collect(),
            lattice_p: state
                .lattice_p
                .iter()
                .zip(&k.dp_lat)
                .map(|(p, d)| p + d * dt)
                .collect(),
            t: state.t + dt,
        };
        next.spin.time = next.t;
        Ok(next)
    }

    fn check_termination(&self, state: &SystemState<T>) -> Option<Termination> {
        let r = (state.impurity_r.x * state.impurity_r.x
            + state.impurity_r.y * state.impurity_r.y)
            .sqrt();
        if r > self.escape_radius {
            return Some(Termination::Escaped {
                time: to_f64(state.t),
                radius: to_f64(self.escape_radius),
            });
        }
        if state.spin.norm_sqr() < self.config.population_floor {
            return Some(Termination::PopulationFloor {
                time: to_f64(state.t),
                floor: to_f64(self.config.population_floor),
            });
        }
        None
    }
}

fn promote_pair<T: Real>(e: Error, i: usize, j: usize, t: T) -> Error {
    match e {
        Error::TooClose { separation, .. } => Error::Collision {
            a: Body::Lattice(i),
            b: Body::Lattice(j),
            separation,
            time: to_f64(t),
        },
        other => other,
    }
}

fn promote_impurity<T: Real>(e: Error, i: usize, t: T) -> Error {
    match e {
        Error::TooClose { separation, .. } => Error::Collision {
            a: Body::Impurity,
            b: Body::Lattice(i),
            separation,
            time: to_f64(t),
        },
        other => other,
    }
}

/// Runs a full deterministic trajectory to t_final or a termination event.
pub fn run_trajectory<T: Real>(config: &SimulationConfig<T>) -> Result<TrajectoryRecord<T>> {
    let mut engine = Engine::new(config)?;
    run_with_engine(&mut engine)
}

/// Runs the mobile-lattice trajectory plus a pinned-lattice reference from
/// identical initial conditions. Requires `mobile_lattice = true`.
pub fn run_trajectory_mobile<T: Real>(
    config: &SimulationConfig<T>,
) -> Result<(TrajectoryRecord<T>, TrajectoryRecord<T>)> {
    if !config.mobile_lattice {
        return Err(Error::Validation {
            field: "mobile_lattice".into(),
            detail: "mobile-lattice run requested with mobile_lattice = false".into(),
        });
    }
    let mobile = run_trajectory(config)?;
    let mut pinned_config = config.clone();
    pinned_config.mobile_lattice = false;
    let pinned = run_trajectory(&pinned_config)?;
    Ok((mobile, pinned))
}

/// Drives an engine from its initial state, sampling on the configured
/// cadence. Runtime failures terminate the run and are tagged on the record.
pub fn run_with_engine<T: Real>(engine: &mut Engine<T>) -> Result<TrajectoryRecord<T>> {
    let config = engine.config().clone();
    let steps = config.step_count();
    let interval = config.sample_interval;
    let mobile = config.mobile_lattice;

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        positions: Vec::new(),
        momenta: Vec::new(),
        impurity_population: Vec::new(),
        lattice_populations: Vec::new(),
        norm_sqr: Vec::new(),
        lattice_positions: mobile.then(Vec::new),
        termination: Termination::Completed {
            time: to_f64(config.t_final),
        },
        sample_dt: config.dt * real(interval as f64),
    };

    let mut state = engine.initial_state();
    sample(&mut record, &state);

    for step_idx in 1..=steps {
        state = match engine.step(&state) {
            Ok(next) => next,
            Err(Error::Collision {
                a,
                b,
                separation,
                time,
            }) => {
                record.termination = Termination::Collision {
                    time,
                    body_a: a.to_string(),
                    body_b: b.to_string(),
                    separation,
                };
                return Ok(record);
            }
            Err(Error::NonFinite { time }) => {
                record.termination = Termination::NonFinite { time };
                return Ok(record);
            }
            Err(other) => return Err(other),
        };
        // Keep exact sample times on the uniform grid.
        state.t = config.dt * real(step_idx as f64);
        state.spin.time = state.t;
        if step_idx % interval == 0 {
            sample(&mut record, &state);
        }
        if let Some(reason) = engine.check_termination(&state) {
            record.termination = reason;
            return Ok(record);
        }
    }
    Ok(record)
}

fn sample<T: Real>(record: &mut TrajectoryRecord<T>, state: &SystemState<T>) {
    record.times.push(state.t);
    record
        .positions
        .push(Vector2::new(state.impurity_r.x, state.impurity_r.y));
    record
        .momenta
        .push(Vector2::new(state.impurity_p.x, state.impurity_p.y));
    let pops = state.spin.populations();
    record.impurity_population.push(pops[0]);
    record.lattice_populations.push(pops[1..].to_vec());
    record.norm_sqr.push(state.spin.norm_sqr());
    if let Some(lat) = record.lattice_positions.as_mut() {
        lat.push(
            state
                .lattice_r
                .iter()
                .map(|r| Vector2::new(r.x, r.y))
                .collect(),
        );
    }
}

/// Interaction energy of the impurity with the lattice at frozen correlators:
/// `E(r^I) = 2 Re Σ_i C_Ii(r^I) ⟨s†σ_i⟩`. The impurity force is its negative
/// position gradient; finite differences of this function are the independent
/// oracle for the force path.
pub fn interaction_energy<T: Real>(
    impurity_pos: &Vector3<T>,
    state: &SystemState<T>,
    impurity: &crate::units::EmitterParams<T>,
    lattice: &crate::units::EmitterParams<T>,
    k0: T,
) -> Result<T> {
    let kappa = state.spin.correlators();
    let two = T::one() + T::one();
    let mut e = T::zero();
    for (i, pos) in state.lattice_r.iter().enumerate() {
        let r = impurity_pos - pos;
        let sample: CouplingSample<T> = crate::greens::coupling(impurity, lattice, &r, k0)?;
        e += two * (sample.c * kappa[i]).re;
    }
    Ok(e)
}
