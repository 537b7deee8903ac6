//! Nondimensional unit system and the physical parameter types shared by all
//! modules.
//!
//! Program units: lengths in λ0 (transition wavelength), rates in γ0
//! (reference decay rate), times in 1/γ0, momenta in ħk0, with ħ = 1 and
//! k0 λ0 = 2π. The impurity mass is derived from the recoil frequency via
//! ω_rec = ħk0²/(2m). With those reductions the kinematics read
//!
//! ```text
//! dr̃/dt̃ = (ω̃_rec/π) p̃          dp̃/dt̃ = F̃/(2π)
//! ```
//!
//! per in-plane component, where tildes denote reduced quantities (ω̃_rec in
//! γ0, F̃ in γ0·ħk0-free form, i.e. couplings in γ0 and gradients in γ0/λ0).

use nalgebra::{Vector3, Matrix3};

use crate::error::{Error, Result};
use crate::scalar::{c, real, to_f64, Real, C};

/// Tolerance on the unit norm of a dipole polarization vector.
pub const DIPOLE_NORM_TOL: f64 = 1e-12;

/// The scale constants tying program units to physical ones.
///
/// `lambda0` and `gamma0` are both 1 in ordinary runs; keeping them explicit
/// lets the dimensional-consistency tests scale the unit system and verify
/// that every nondimensional output is unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem<T: Real> {
    /// Transition wavelength, the length unit.
    pub lambda0: T,
    /// Reference single-atom decay rate, the rate unit.
    pub gamma0: T,
    /// Impurity recoil frequency in units of γ0.
    pub omega_rec: T,
}

impl<T: Real> UnitSystem<T> {
    pub fn new(lambda0: T, gamma0: T, omega_rec: T) -> Result<Self> {
        if lambda0 <= T::zero() {
            return Err(Error::Validation {
                field: "lambda0".into(),
                detail: "wavelength must be positive".into(),
            });
        }
        if gamma0 <= T::zero() {
            return Err(Error::Validation {
                field: "gamma0".into(),
                detail: "reference rate must be positive".into(),
            });
        }
        if omega_rec <= T::zero() {
            return Err(Error::Validation {
                field: "omega_rec_gamma0".into(),
                detail: "recoil frequency must be positive".into(),
            });
        }
        Ok(Self {
            lambda0,
            gamma0,
            omega_rec,
        })
    }

    /// Wavenumber k0 = 2π/λ0, in absolute units.
    pub fn k0(&self) -> T {
        T::two_pi() / self.lambda0
    }

    /// Wavenumber in program units (λ0 = 1), exactly 2π.
    pub fn k0_reduced(&self) -> T {
        T::two_pi()
    }

    /// Mass in reduced units ħ/(γ0 λ0²): (2π)²/(2 ω̃_rec).
    pub fn mass_reduced(&self) -> T {
        derived_mass(self.omega_rec, self.k0_reduced())
    }

    /// dr̃/dt̃ per unit p̃ for a body with recoil frequency `omega_rec` (γ0).
    pub fn velocity_factor(omega_rec: T) -> T {
        omega_rec / T::pi()
    }

    /// dp̃/dt̃ per unit reduced force, 1/(k0 λ0) = 1/(2π).
    pub fn force_factor() -> T {
        T::one() / T::two_pi()
    }
}

/// Mass ħk0²/(2 ω_rec) in the unit system implied by the arguments (ħ = 1).
pub fn derived_mass<T: Real>(omega_rec: T, k0: T) -> T {
    assert!(
        omega_rec > T::zero(),
        "recoil frequency must be positive, got {omega_rec}"
    );
    k0 * k0 / (omega_rec + omega_rec)
}

/// Decay rate, detuning and transition dipole of one two-level emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterParams<T: Real> {
    /// Excited-state decay rate, in γ0.
    pub gamma: T,
    /// Detuning in the rotating frame, in γ0.
    pub delta: T,
    /// Complex unit polarization vector.
    pub dipole: Vector3<C<T>>,
}

impl<T: Real> EmitterParams<T> {
    pub fn new(gamma: T, delta: T, dipole: Vector3<C<T>>) -> Result<Self> {
        if gamma < T::zero() {
            return Err(Error::Validation {
                field: "gamma".into(),
                detail: format!("decay rate must be nonnegative, got {}", to_f64(gamma)),
            });
        }
        let norm2 = dipole.dotc(&dipole).re;
        if (norm2 - T::one()).abs() > real(DIPOLE_NORM_TOL) {
            return Err(Error::Validation {
                field: "dipole".into(),
                detail: format!(
                    "polarization not unit norm (|d|² = {:.12})",
                    to_f64(norm2)
                ),
            });
        }
        Ok(Self {
            gamma,
            delta,
            dipole,
        })
    }

    /// Circular in-plane polarization (1, i, 0)/√2.
    pub fn circular_dipole() -> Vector3<C<T>> {
        let s = T::one() / real::<T>(2.0).sqrt();
        Vector3::new(c(s, T::zero()), c(T::zero(), s), c(T::zero(), T::zero()))
    }

    /// Linear polarization along z, (0, 0, 1).
    pub fn z_dipole() -> Vector3<C<T>> {
        Vector3::new(
            c(T::zero(), T::zero()),
            c(T::zero(), T::zero()),
            c(T::one(), T::zero()),
        )
    }

    /// Linear polarization along x, (1, 0, 0).
    pub fn x_dipole() -> Vector3<C<T>> {
        Vector3::new(
            c(T::one(), T::zero()),
            c(T::zero(), T::zero()),
            c(T::zero(), T::zero()),
        )
    }

    /// Linear polarization along the in-plane diagonal, (1, 1, 0)/√2.
    pub fn diagonal_dipole() -> Vector3<C<T>> {
        let s = T::one() / real::<T>(2.0).sqrt();
        Vector3::new(c(s, T::zero()), c(s, T::zero()), c(T::zero(), T::zero()))
    }
}

/// Centered square lattice of two-level emitters in the z = 0 plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGeometry<T: Real> {
    pub nx: usize,
    pub ny: usize,
    /// Lattice spacing in λ0.
    pub spacing: T,
    /// Trap frequency in γ0; 0 means a pinned lattice.
    pub trap_frequency: T,
    /// Recoil frequency defining the lattice atom mass, in γ0.
    pub lattice_omega_rec: T,
    rest_positions: Vec<Vector3<T>>,
}

impl<T: Real> LatticeGeometry<T> {
    pub fn new(
        nx: usize,
        ny: usize,
        spacing: T,
        trap_frequency: T,
        lattice_omega_rec: T,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Validation {
                field: "lattice_nx/lattice_ny".into(),
                detail: "lattice needs at least one atom per axis".into(),
            });
        }
        if spacing <= T::zero() {
            return Err(Error::Validation {
                field: "spacing_lambda0".into(),
                detail: "lattice spacing must be positive".into(),
            });
        }
        if trap_frequency < T::zero() {
            return Err(Error::Validation {
                field: "trap_frequency_gamma0".into(),
                detail: "trap frequency must be nonnegative".into(),
            });
        }
        if lattice_omega_rec <= T::zero() {
            return Err(Error::Validation {
                field: "lattice_omega_rec_gamma0".into(),
                detail: "lattice recoil frequency must be positive".into(),
            });
        }
        let half_x = real::<T>((nx - 1) as f64) / real(2.0);
        let half_y = real::<T>((ny - 1) as f64) / real(2.0);
        let mut rest_positions = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                rest_positions.push(Vector3::new(
                    (real::<T>(ix as f64) - half_x) * spacing,
                    (real::<T>(iy as f64) - half_y) * spacing,
                    T::zero(),
                ));
            }
        }
        Ok(Self {
            nx,
            ny,
            spacing,
            trap_frequency,
            lattice_omega_rec,
            rest_positions,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Rest positions on the centered grid, z = 0, row-major in (iy, ix).
    pub fn rest_positions(&self) -> &[Vector3<T>] {
        &self.rest_positions
    }

    /// Center of the plaquette nearest the lattice center: the origin when
    /// both atom counts are even, shifted by a/2 along any odd axis.
    pub fn central_plaquette_center(&self) -> Vector3<T> {
        let half = self.spacing / real(2.0);
        let x = if self.nx % 2 == 0 { T::zero() } else { half };
        let y = if self.ny % 2 == 0 { T::zero() } else { half };
        Vector3::new(x, y, T::zero())
    }

    /// Half-width of a plaquette, a/2.
    pub fn plaquette_half_width(&self) -> T {
        self.spacing / real(2.0)
    }

    /// Largest rest-position distance from the lattice center.
    pub fn circumradius(&self) -> T {
        self.rest_positions
            .iter()
            .map(|r| r.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Lattice atom mass in reduced units, from the lattice recoil frequency.
    pub fn lattice_mass_reduced(&self) -> T {
        derived_mass(self.lattice_omega_rec, T::two_pi())
    }
}

/// In-plane rotation by 90° about a center, for equivariance checks.
pub fn rotate90_about<T: Real>(p: &Vector3<T>, center: &Vector3<T>) -> Vector3<T> {
    let d = p - center;
    Vector3::new(center.x - d.y, center.y + d.x, p.z)
}

/// Mirror about the main diagonal (x ↔ y) through a center.
pub fn mirror_diagonal_about<T: Real>(p: &Vector3<T>, center: &Vector3<T>) -> Vector3<T> {
    let d = p - center;
    Vector3::new(center.x + d.y, center.y + d.x, p.z)
}

/// Frobenius-style max-abs difference between two complex tensors.
pub fn tensor_max_abs_diff<T: Real>(a: &Matrix3<C<T>>, b: &Matrix3<C<T>>) -> T {
    let mut max = T::zero();
    for idx in 0..9 {
        let d = nalgebra::ComplexField::modulus(a[idx] - b[idx]);
        if d > max {
            max = d;
        }
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mass_from_recoil_frequency() {
        let two_pi_sq = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let k0 = std::f64::consts::TAU;
        // ω_rec = 2π²γ0 with k0 = 2π gives unit mass.
        assert_relative_eq!(derived_mass(two_pi_sq, k0), 1.0, max_relative = 1e-15);
        // ω_rec = π² doubles it.
        assert_relative_eq!(
            derived_mass(std::f64::consts::PI.powi(2), k0),
            2.0,
            max_relative = 1e-15
        );
        // Light-particle limit.
        assert!(derived_mass(1e12, k0) < 1e-10);
    }

    #[test]
    #[should_panic(expected = "recoil frequency must be positive")]
    fn mass_rejects_nonpositive_recoil() {
        derived_mass(0.0, std::f64::consts::TAU);
    }

    #[test]
    fn unit_system_invariants() {
        let units = UnitSystem::new(2.0, 0.5, 19.0).unwrap();
        assert_relative_eq!(units.k0() * units.lambda0, std::f64::consts::TAU);
        assert!(units.mass_reduced() > 0.0);
        assert!(UnitSystem::<f64>::new(-1.0, 1.0, 1.0).is_err());
        assert!(UnitSystem::<f64>::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn dipole_norm_is_validated() {
        let bad = Vector3::new(c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let err = EmitterParams::<f64>::new(1.0, 0.0, bad).unwrap_err();
        assert!(err.to_string().contains("polarization not unit norm"));
        for d in [
            EmitterParams::<f64>::circular_dipole(),
            EmitterParams::z_dipole(),
            EmitterParams::x_dipole(),
            EmitterParams::diagonal_dipole(),
        ] {
            assert!((d.dotc(&d).re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lattice_grid_is_centered_and_planar() {
        let lattice = LatticeGeometry::new(4, 4, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(lattice.atom_count(), 16);
        let rest = lattice.rest_positions();
        // Centered: coordinates sum to zero; every atom in the z = 0 plane.
        let sum: Vector3<f64> = rest.iter().sum();
        assert!(sum.norm() < 1e-12);
        assert!(rest.iter().all(|r| r.z == 0.0));
        // Corners sit at ±0.75.
        assert_relative_eq!(lattice.circumradius(), (2.0 * 0.75f64.powi(2)).sqrt());
        assert_eq!(lattice.central_plaquette_center(), Vector3::zeros());
        // Grid structure: position(i,j) = ((i - 1.5)a, (j - 1.5)a, 0).
        assert_relative_eq!(rest[0].x, -0.75);
        assert_relative_eq!(rest[0].y, -0.75);
        assert_relative_eq!(rest[5].x, -0.25);
        assert_relative_eq!(rest[5].y, -0.25);
    }

    #[test]
    fn odd_lattice_offsets_plaquette_center() {
        let lattice = LatticeGeometry::new(3, 4, 0.5, 0.0, 1.0).unwrap();
        let center = lattice.central_plaquette_center();
        assert_relative_eq!(center.x, 0.25);
        assert_relative_eq!(center.y, 0.0);
    }
}
