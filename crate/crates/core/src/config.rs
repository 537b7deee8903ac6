//! Simulation configuration: JSON file schema, validation, `--set` overrides
//! and the canonical config hash.
//!
//! The file format is a flat JSON object. Physical keys carry their unit as a
//! suffix: `_lambda0` for lengths, `_gamma0` for rates and inverse times,
//! `_hbark0` for momenta. Times are given as t·γ0. Every key is optional;
//! defaults describe a 4×4 lattice with spacing a = 0.5 λ0, circular
//! polarization on all emitters, δ = 0, γ = γ0 and ω_rec = 2π² γ0.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{c, real, to_f64, Real, C};
use crate::spin::SpinState;
use crate::units::{EmitterParams, LatticeGeometry, UnitSystem};

/// How the spin register starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpin<T: Real> {
    /// Impurity excited, lattice in the ground state.
    ImpurityExcited,
    /// Explicit amplitudes over the single-excitation basis (impurity first).
    Custom(Vec<C<T>>),
}

/// Time-stepping scheme for the coupled spin-motion system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta on the full coupled vector field.
    Rk4,
    /// First-order split scheme: spin substep at frozen positions, then a
    /// kinematics update with start-of-step forces. Kept as a cross-check.
    SplitEuler,
}

/// Validated runtime configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<T: Real> {
    pub units: UnitSystem<T>,
    pub lattice: LatticeGeometry<T>,
    pub lattice_params: EmitterParams<T>,
    pub impurity_params: EmitterParams<T>,
    /// Initial impurity position, λ0.
    pub initial_position: Vector3<T>,
    /// Initial impurity momentum, ħk0.
    pub initial_momentum: Vector3<T>,
    pub initial_spin: InitialSpin<T>,
    /// Time step, 1/γ0.
    pub dt: T,
    /// Total integration time, 1/γ0.
    pub t_final: T,
    pub mobile_lattice: bool,
    /// Steps between trajectory samples.
    pub sample_interval: usize,
    /// Reserved for sweep shuffling; the dynamics are deterministic.
    pub rng_seed: u64,
    pub integrator: Integrator,
    /// Escape radius in λ0; `None` derives 1.5× the lattice circumradius.
    pub escape_radius: Option<T>,
    /// Run terminates when the total remaining excitation norm² drops below
    /// this floor.
    pub population_floor: T,
    /// Centered moving-average width (samples) for exit-time detection.
    pub exit_smoothing_samples: usize,
}

impl<T: Real> SimulationConfig<T> {
    /// Number of fixed steps covering `t_final` (rounded to a multiple of dt).
    pub fn step_count(&self) -> usize {
        let n = to_f64(self.t_final / self.dt).round();
        n.max(1.0) as usize
    }

    /// Escape radius actually used by the integrator: 1.5× the lattice
    /// circumradius, floored at 1.5 spacings for degenerate lattices.
    pub fn effective_escape_radius(&self) -> T {
        self.escape_radius.unwrap_or_else(|| {
            let scale = self.lattice.circumradius().max(self.lattice.spacing);
            real::<T>(1.5) * scale
        })
    }

    /// Builds the starting spin state over the single-excitation basis.
    pub fn initial_spin_state(&self) -> SpinState<T> {
        let n = self.lattice.atom_count() + 1;
        match &self.initial_spin {
            InitialSpin::ImpurityExcited => SpinState::impurity_excited(n),
            InitialSpin::Custom(amps) => SpinState::from_amplitudes(amps.clone(), T::zero()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= T::zero() {
            return Err(Error::Validation {
                field: "dt_gamma0".into(),
                detail: "time step must be positive".into(),
            });
        }
        if self.t_final < self.dt {
            return Err(Error::Validation {
                field: "t_final_gamma0".into(),
                detail: "total time must be at least one time step".into(),
            });
        }
        if self.sample_interval == 0 {
            return Err(Error::Validation {
                field: "sample_interval".into(),
                detail: "sampling cadence must be at least 1 step".into(),
            });
        }
        if self.initial_position.z != T::zero() || self.initial_momentum.z != T::zero() {
            return Err(Error::Validation {
                field: "initial_position_lambda0/initial_momentum_hbark0".into(),
                detail: "impurity confined to lattice plane (z components must be 0)".into(),
            });
        }
        if let Some(r) = self.escape_radius {
            if r <= T::zero() {
                return Err(Error::Validation {
                    field: "escape_radius_lambda0".into(),
                    detail: "escape radius must be positive".into(),
                });
            }
        }
        if self.population_floor < T::zero() {
            return Err(Error::Validation {
                field: "population_floor".into(),
                detail: "population floor must be nonnegative".into(),
            });
        }
        if self.exit_smoothing_samples == 0 || self.exit_smoothing_samples % 2 == 0 {
            return Err(Error::Validation {
                field: "exit_smoothing_samples".into(),
                detail: "smoothing width must be a positive odd sample count".into(),
            });
        }
        if let InitialSpin::Custom(amps) = &self.initial_spin {
            let expected = self.lattice.atom_count() + 1;
            if amps.len() != expected {
                return Err(Error::Validation {
                    field: "initial_spin".into(),
                    detail: format!(
                        "custom amplitudes need {expected} entries (impurity + lattice), got {}",
                        amps.len()
                    ),
                });
            }
            let norm2: T = amps.iter().map(|a| a.norm_sqr()).fold(T::zero(), |s, x| s + x);
            if norm2 > T::one() + real(1e-9) {
                return Err(Error::Validation {
                    field: "initial_spin".into(),
                    detail: format!("amplitudes norm² = {} exceeds 1", to_f64(norm2)),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Raw file schema
// ---------------------------------------------------------------------------

/// Dipole given either as a named preset or explicit complex components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DipoleSpec {
    Preset(String),
    Components([[f64; 2]; 3]),
}

impl DipoleSpec {
    pub fn resolve<T: Real>(&self, field: &str) -> Result<Vector3<C<T>>> {
        match self {
            DipoleSpec::Preset(name) => match name.as_str() {
                "circular" => Ok(EmitterParams::circular_dipole()),
                "z" => Ok(EmitterParams::z_dipole()),
                "x" => Ok(EmitterParams::x_dipole()),
                "diagonal" => Ok(EmitterParams::diagonal_dipole()),
                other => Err(Error::Validation {
                    field: field.into(),
                    detail: format!(
                        "unknown polarization preset `{other}` \
                         (expected circular, z, x or diagonal)"
                    ),
                }),
            },
            DipoleSpec::Components(rows) => Ok(Vector3::new(
                c(real(rows[0][0]), real(rows[0][1])),
                c(real(rows[1][0]), real(rows[1][1])),
                c(real(rows[2][0]), real(rows[2][1])),
            )),
        }
    }
}

/// Initial spin in the file: the string `"impurity_excited"` or
/// `{"custom": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawInitialSpin {
    Named(String),
    Custom { custom: Vec<[f64; 2]> },
}

fn default_lambda0() -> f64 {
    1.0
}
fn default_gamma0() -> f64 {
    1.0
}
fn default_omega_rec() -> f64 {
    2.0 * std::f64::consts::PI * std::f64::consts::PI
}
fn default_n() -> usize {
    4
}
fn default_spacing() -> f64 {
    0.5
}
fn default_dipole() -> DipoleSpec {
    DipoleSpec::Preset("circular".into())
}
fn default_gamma() -> f64 {
    1.0
}
fn default_vec3() -> [f64; 3] {
    [0.0; 3]
}
fn default_spin() -> RawInitialSpin {
    RawInitialSpin::Named("impurity_excited".into())
}
fn default_dt() -> f64 {
    1e-4
}
fn default_t_final() -> f64 {
    3.0
}
fn default_sample_interval() -> usize {
    50
}
fn default_integrator() -> Integrator {
    Integrator::Rk4
}
fn default_population_floor() -> f64 {
    1e-6
}
fn default_exit_smoothing() -> usize {
    11
}

/// Flat on-disk schema. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default = "default_omega_rec")]
    pub omega_rec_gamma0: f64,
    #[serde(default = "default_n")]
    pub lattice_nx: usize,
    #[serde(default = "default_n")]
    pub lattice_ny: usize,
    #[serde(default = "default_spacing")]
    pub spacing_lambda0: f64,
    #[serde(default)]
    pub trap_frequency_gamma0: f64,
    /// Defaults to `omega_rec_gamma0` (equal impurity and lattice masses).
    #[serde(default)]
    pub lattice_omega_rec_gamma0: Option<f64>,
    #[serde(default = "default_gamma")]
    pub lattice_gamma_gamma0: f64,
    #[serde(default)]
    pub lattice_delta_gamma0: f64,
    #[serde(default = "default_dipole")]
    pub lattice_dipole: DipoleSpec,
    #[serde(default = "default_gamma")]
    pub impurity_gamma_gamma0: f64,
    #[serde(default)]
    pub impurity_delta_gamma0: f64,
    #[serde(default = "default_dipole")]
    pub impurity_dipole: DipoleSpec,
    #[serde(default = "default_vec3")]
    pub initial_position_lambda0: [f64; 3],
    #[serde(default = "default_vec3")]
    pub initial_momentum_hbark0: [f64; 3],
    #[serde(default = "default_spin")]
    pub initial_spin: RawInitialSpin,
    #[serde(default = "default_dt")]
    pub dt_gamma0: f64,
    #[serde(default = "default_t_final")]
    pub t_final_gamma0: f64,
    #[serde(default)]
    pub mobile_lattice: bool,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default)]
    pub escape_radius_lambda0: Option<f64>,
    #[serde(default = "default_population_floor")]
    pub population_floor: f64,
    #[serde(default = "default_exit_smoothing")]
    pub exit_smoothing_samples: usize,
}

impl Default for RawConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty object yields defaults")
    }
}

impl RawConfig {
    /// Key names accepted by the schema, for `--set` validation.
    pub const KEYS: &'static [&'static str] = &[
        "lambda0",
        "gamma0",
        "omega_rec_gamma0",
        "lattice_nx",
        "lattice_ny",
        "spacing_lambda0",
        "trap_frequency_gamma0",
        "lattice_omega_rec_gamma0",
        "lattice_gamma_gamma0",
        "lattice_delta_gamma0",
        "lattice_dipole",
        "impurity_gamma_gamma0",
        "impurity_delta_gamma0",
        "impurity_dipole",
        "initial_position_lambda0",
        "initial_momentum_hbark0",
        "initial_spin",
        "dt_gamma0",
        "t_final_gamma0",
        "mobile_lattice",
        "sample_interval",
        "rng_seed",
        "integrator",
        "escape_radius_lambda0",
        "population_floor",
        "exit_smoothing_samples",
    ];

    pub fn into_config<T: Real>(self) -> Result<SimulationConfig<T>> {
        let units = UnitSystem::new(
            real(self.lambda0),
            real(self.gamma0),
            real(self.omega_rec_gamma0),
        )?;
        let lattice = LatticeGeometry::new(
            self.lattice_nx,
            self.lattice_ny,
            real(self.spacing_lambda0),
            real(self.trap_frequency_gamma0),
            real(self.lattice_omega_rec_gamma0.unwrap_or(self.omega_rec_gamma0)),
        )?;
        let lattice_params = EmitterParams::new(
            real(self.lattice_gamma_gamma0),
            real(self.lattice_delta_gamma0),
            self.lattice_dipole.resolve("lattice_dipole")?,
        )?;
        let impurity_params = EmitterParams::new(
            real(self.impurity_gamma_gamma0),
            real(self.impurity_delta_gamma0),
            self.impurity_dipole.resolve("impurity_dipole")?,
        )?;
        let initial_spin = match &self.initial_spin {
            RawInitialSpin::Named(name) if name == "impurity_excited" => {
                InitialSpin::ImpurityExcited
            }
            RawInitialSpin::Named(other) => {
                return Err(Error::Validation {
                    field: "initial_spin".into(),
                    detail: format!(
                        "unknown initial spin `{other}` (expected impurity_excited or custom)"
                    ),
                })
            }
            RawInitialSpin::Custom { custom } => InitialSpin::Custom(
                custom
                    .iter()
                    .map(|[re, im]| c(real(*re), real(*im)))
                    .collect(),
            ),
        };
        let config = SimulationConfig {
            units,
            lattice,
            lattice_params,
            impurity_params,
            initial_position: Vector3::new(
                real(self.initial_position_lambda0[0]),
                real(self.initial_position_lambda0[1]),
                real(self.initial_position_lambda0[2]),
            ),
            initial_momentum: Vector3::new(
                real(self.initial_momentum_hbark0[0]),
                real(self.initial_momentum_hbark0[1]),
                real(self.initial_momentum_hbark0[2]),
            ),
            initial_spin,
            dt: real(self.dt_gamma0),
            t_final: real(self.t_final_gamma0),
            mobile_lattice: self.mobile_lattice,
            sample_interval: self.sample_interval,
            rng_seed: self.rng_seed,
            integrator: self.integrator,
            escape_radius: self.escape_radius_lambda0.map(real),
            population_floor: real(self.population_floor),
            exit_smoothing_samples: self.exit_smoothing_samples,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_config<T: Real>(config: &SimulationConfig<T>) -> Self {
        let dipole_raw = |d: &Vector3<C<T>>| {
            DipoleSpec::Components([
                [to_f64(d.x.re), to_f64(d.x.im)],
                [to_f64(d.y.re), to_f64(d.y.im)],
                [to_f64(d.z.re), to_f64(d.z.im)],
            ])
        };
        RawConfig {
            lambda0: to_f64(config.units.lambda0),
            gamma0: to_f64(config.units.gamma0),
            omega_rec_gamma0: to_f64(config.units.omega_rec),
            lattice_nx: config.lattice.nx,
            lattice_ny: config.lattice.ny,
            spacing_lambda0: to_f64(config.lattice.spacing),
            trap_frequency_gamma0: to_f64(config.lattice.trap_frequency),
            lattice_omega_rec_gamma0: Some(to_f64(config.lattice.lattice_omega_rec)),
            lattice_gamma_gamma0: to_f64(config.lattice_params.gamma),
            lattice_delta_gamma0: to_f64(config.lattice_params.delta),
            lattice_dipole: dipole_raw(&config.lattice_params.dipole),
            impurity_gamma_gamma0: to_f64(config.impurity_params.gamma),
            impurity_delta_gamma0: to_f64(config.impurity_params.delta),
            impurity_dipole: dipole_raw(&config.impurity_params.dipole),
            initial_position_lambda0: [
                to_f64(config.initial_position.x),
                to_f64(config.initial_position.y),
                to_f64(config.initial_position.z),
            ],
            initial_momentum_hbark0: [
                to_f64(config.initial_momentum.x),
                to_f64(config.initial_momentum.y),
                to_f64(config.initial_momentum.z),
            ],
            initial_spin: match &config.initial_spin {
                InitialSpin::ImpurityExcited => RawInitialSpin::Named("impurity_excited".into()),
                InitialSpin::Custom(amps) => RawInitialSpin::Custom {
                    custom: amps
                        .iter()
                        .map(|a| [to_f64(a.re), to_f64(a.im)])
                        .collect(),
                },
            },
            dt_gamma0: to_f64(config.dt),
            t_final_gamma0: to_f64(config.t_final),
            mobile_lattice: config.mobile_lattice,
            sample_interval: config.sample_interval,
            rng_seed: config.rng_seed,
            integrator: config.integrator,
            escape_radius_lambda0: config.escape_radius.map(to_f64),
            population_floor: to_f64(config.population_floor),
            exit_smoothing_samples: config.exit_smoothing_samples,
        }
    }
}

/// Parses config text, reporting schema violations with field context.
pub fn parse_config<T: Real>(text: &str, origin: &str) -> Result<SimulationConfig<T>> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.into(),
        detail: e.to_string(),
    })?;
    raw.into_config()
}

/// Loads and validates a config file.
pub fn load_config<T: Real>(path: &Path) -> Result<SimulationConfig<T>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Loads a config applying `key=value` overrides before validation.
///
/// Values are parsed as JSON when possible and fall back to bare strings, so
/// `--set t_final_gamma0=1.5` and `--set lattice_dipole=z` both work.
pub fn load_config_with_overrides<T: Real>(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<SimulationConfig<T>> {
    let mut value: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.display().to_string(),
                detail: e.to_string(),
            })?
        }
        None => serde_json::json!({}),
    };
    let obj = value.as_object_mut().ok_or_else(|| Error::Parse {
        path: path.map(|p| p.display().to_string()).unwrap_or_default(),
        detail: "config root must be a JSON object".into(),
    })?;
    for entry in overrides {
        let (key, val) = entry.split_once('=').ok_or_else(|| Error::BadOverride {
            entry: entry.clone(),
        })?;
        if !RawConfig::KEYS.contains(&key) {
            return Err(Error::UnknownKey { key: key.into() });
        }
        let parsed = serde_json::from_str::<serde_json::Value>(val)
            .unwrap_or_else(|_| serde_json::Value::String(val.to_string()));
        obj.insert(key.to_string(), parsed);
    }
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.map(|p| p.display().to_string()).unwrap_or_default(),
        detail: e.to_string(),
    })?;
    raw.into_config()
}

/// Serializes the resolved config in canonical form.
pub fn serialize_config<T: Real>(config: &SimulationConfig<T>) -> String {
    serde_json::to_string_pretty(&RawConfig::from_config(config))
        .expect("config serialization cannot fail")
}

/// SHA-256 over the canonical resolved serialization; stable across platforms
/// and identical for configs that resolve to the same values.
pub fn config_hash<T: Real>(config: &SimulationConfig<T>) -> String {
    let canonical = serde_json::to_string(&RawConfig::from_config(config))
        .expect("config serialization cannot fail");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
