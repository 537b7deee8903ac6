//! Free-space dyadic Green's tensor, its analytic spatial gradient, and the
//! pairwise coherent/dissipative couplings they induce between emitters.
//!
//! In Cartesian components, with `x = k|r|` and `r̂ = r/|r|`,
//!
//! ```text
//! G_ab(r, k) = e^{ix}/(4π|r|) [ (1 + i/x - 1/x²) δ_ab - (1 + 3i/x - 3/x²) r̂_a r̂_b ]
//! ```
//!
//! The delta-function contact term is never evaluated: interactions only enter
//! at finite separations and self-energies appear as explicit `-iγ/2` diagonal
//! entries in the spin Hamiltonian. Couplings follow
//!
//! ```text
//! J  = -(3π √(γ_m γ_n)/k) d_m† · Re G · d_n
//! Γ  =  (6π √(γ_m γ_n)/k) d_m† · Im G · d_n
//! C  =  J - iΓ/2 = -(3π √(γ_m γ_n)/k) d_m† · G · d_n
//! ```
//!
//! with the wavenumber standing in for the transition frequency (c = 1).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Body, Error, Result};
use crate::scalar::{c, real, to_f64, Real, C};
use crate::units::EmitterParams;

/// Separations below this multiple of the wavelength raise a singularity error.
pub const MIN_SEPARATION_LAMBDA0: f64 = 1e-9;

/// 3×3 complex tensor over the generic scalar.
pub type ComplexTensor3<T> = Matrix3<C<T>>;

/// Pairwise coupling between two emitters together with its spatial gradient
/// taken with respect to the displacement argument (first emitter's position).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSample<T: Real> {
    /// Complex coupling C = J - iΓ/2.
    pub c: C<T>,
    /// Componentwise gradient of C.
    pub grad_c: Vector3<C<T>>,
}

impl<T: Real> CouplingSample<T> {
    /// Coherent part J. Real-valued whenever both emitters carry the same
    /// (or any real/circular) dipole; the imaginary remainder is in `c`.
    pub fn j(&self) -> T {
        self.c.re
    }

    /// Dissipative part Γ, from C = J - iΓ/2.
    pub fn gamma(&self) -> T {
        -(self.c.im + self.c.im)
    }
}

/// Scalar radial coefficients shared by the tensor and its gradient.
struct RadialParts<T: Real> {
    inv_r: T,
    /// e^{ix} (1 + i/x - 1/x²), the transverse coefficient.
    coef_a: C<T>,
    /// e^{ix} (1 + 3i/x - 3/x²), the longitudinal coefficient.
    coef_b: C<T>,
    cos_x: T,
    sin_x: T,
}

/// (sin x - x cos x)/x² without catastrophic cancellation at small x.
///
/// Direct evaluation loses ~x⁻² digits; the series keeps the imaginary part
/// of the tensor (and hence Γ) accurate down to sub-nanometer separations.
fn sin_minus_xcos_over_x2<T: Real>(x: T, sin_x: T, cos_x: T) -> T {
    if x < real(0.5) {
        // x/3 - x³/30 + x⁵/840 - x⁷/45360 + x⁹/3991680
        let x2 = x * x;
        let mut term = x / real(3.0);
        let mut acc = term;
        term *= -x2 / real(10.0); // -> -x³/30
        acc += term;
        term *= -x2 / real(28.0); // -> +x⁵/840
        acc += term;
        term *= -x2 / real(54.0); // -> -x⁷/45360
        acc += term;
        term *= -x2 / real(88.0); // -> +x⁹/3991680
        acc += term;
        acc
    } else {
        (sin_x - x * cos_x) / (x * x)
    }
}

fn radial_parts<T: Real>(radius: T, k0: T) -> Result<RadialParts<T>> {
    let lambda0 = T::two_pi() / k0;
    let limit = real::<T>(MIN_SEPARATION_LAMBDA0) * lambda0;
    if radius < limit {
        return Err(Error::TooClose {
            separation: to_f64(radius),
            limit: to_f64(limit),
        });
    }
    let x = k0 * radius;
    let (sin_x, cos_x) = x.sin_cos();
    let inv_x = T::one() / x;
    let inv_x2 = inv_x * inv_x;
    let w = sin_minus_xcos_over_x2(x, sin_x, cos_x);
    // Re[e^{ix}(1 + n·i/x - n/x²)] = cos - n sin/x - n cos/x²  (n = 1, 3)
    // Im[e^{ix}(1 + n·i/x - n/x²)] = sin - n (sin - x cos)/x²
    let coef_a = c(
        cos_x - sin_x * inv_x - cos_x * inv_x2,
        sin_x - w,
    );
    let coef_b = c(
        cos_x - (sin_x * inv_x + cos_x * inv_x2) * real(3.0),
        sin_x - w * real(3.0),
    );
    Ok(RadialParts {
        inv_r: T::one() / radius,
        coef_a,
        coef_b,
        cos_x,
        sin_x,
    })
}

/// Free-space dyadic Green's tensor at displacement `r` and wavenumber `k0`.
///
/// Symmetric in its Cartesian indices and even in `r`. Fails with a
/// singularity error below [`MIN_SEPARATION_LAMBDA0`] wavelengths.
pub fn green_tensor<T: Real>(r: &Vector3<T>, k0: T) -> Result<ComplexTensor3<T>> {
    let radius = r.norm();
    let parts = radial_parts(radius, k0)?;
    Ok(assemble_tensor(r, &parts))
}

fn assemble_tensor<T: Real>(r: &Vector3<T>, parts: &RadialParts<T>) -> ComplexTensor3<T> {
    let pref = parts.inv_r / (real::<T>(2.0) * T::two_pi());
    let unit = r * parts.inv_r;
    let mut g = Matrix3::zeros();
    for a in 0..3 {
        for b in a..3 {
            let mut entry = -parts.coef_b * (unit[a] * unit[b]);
            if a == b {
                entry += parts.coef_a;
            }
            entry *= pref;
            g[(a, b)] = entry;
            g[(b, a)] = entry;
        }
    }
    g
}

/// Analytic spatial gradient of the Green's tensor: `[∂_x G, ∂_y G, ∂_z G]`.
///
/// Obtained by direct differentiation of the closed form, writing
/// `G_ab = f(|r|) δ_ab + g(|r|) r_a r_b`:
///
/// ```text
/// ∂_t G_ab = f'(r) r̂_t δ_ab + g'(r) r̂_t r_a r_b + g(r) (δ_at r_b + r_a δ_bt)
/// f'(r) =  e^{ikr}/4π · [ ik/r   - 2/r²  - 3i/(kr³)  + 3/(k²r⁴) ]
/// g'(r) = -e^{ikr}/4π · [ ik/r³  - 6/r⁴  - 15i/(kr⁵) + 15/(k²r⁶) ]
/// g(r)  = -e^{ikr}/4π · [ 1/r³   + 3i/(kr⁴) - 3/(k²r⁵) ]
/// ```
pub fn green_tensor_gradient<T: Real>(
    r: &Vector3<T>,
    k0: T,
) -> Result<[ComplexTensor3<T>; 3]> {
    let radius = r.norm();
    let parts = radial_parts(radius, k0)?;
    Ok(assemble_gradient(r, k0, &parts))
}

fn assemble_gradient<T: Real>(
    r: &Vector3<T>,
    k0: T,
    parts: &RadialParts<T>,
) -> [ComplexTensor3<T>; 3] {
    let four_pi = real::<T>(2.0) * T::two_pi();
    let inv_r = parts.inv_r;
    let inv_r2 = inv_r * inv_r;
    let inv_r3 = inv_r2 * inv_r;
    let inv_k = T::one() / k0;
    let exp_ix = c(parts.cos_x, parts.sin_x);

    // f'(r), without the e^{ikr}/4π prefactor.
    let fp = c(
        -(inv_r2 + inv_r2) + real::<T>(3.0) * inv_k * inv_k * inv_r2 * inv_r2,
        k0 * inv_r - real::<T>(3.0) * inv_k * inv_r3,
    );
    // g'(r), without prefactor (sign already included).
    let gp = c(
        real::<T>(6.0) * inv_r2 * inv_r2 - real::<T>(15.0) * inv_k * inv_k * inv_r3 * inv_r3,
        -k0 * inv_r3 + real::<T>(15.0) * inv_k * inv_r2 * inv_r3,
    );
    // g(r) = -e^{ix} v(r)/4π with v = (1 + 3i/x - 3/x²)/r³, i.e. -coef_b/(4πr³);
    // coef_b already carries the cancellation-guarded imaginary part.
    let gv = -parts.coef_b * inv_r3;

    let fp = exp_ix * fp / four_pi;
    let gp = exp_ix * gp / four_pi;
    let gv = gv / four_pi;

    let unit = r * inv_r;
    let mut out = [Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros()];
    for t in 0..3 {
        let rt_hat = unit[t];
        for a in 0..3 {
            for b in a..3 {
                let mut entry = gp * (rt_hat * r[a] * r[b]);
                if a == b {
                    entry += fp * rt_hat;
                }
                if a == t {
                    entry += gv * r[b];
                }
                if b == t {
                    entry += gv * r[a];
                }
                out[t][(a, b)] = entry;
                out[t][(b, a)] = entry;
            }
        }
    }
    out
}

/// `d_m† · A · d_n` for a complex tensor and two dipole vectors.
fn contract<T: Real>(d_m: &Vector3<C<T>>, a: &ComplexTensor3<T>, d_n: &Vector3<C<T>>) -> C<T> {
    d_m.dotc(&(a * d_n))
}

/// Coupling between emitters `m` and `n` at displacement `r_mn = r_m - r_n`,
/// with `d_m†` contracted from the left.
pub fn coupling<T: Real>(
    m: &EmitterParams<T>,
    n: &EmitterParams<T>,
    r_mn: &Vector3<T>,
    k0: T,
) -> Result<CouplingSample<T>> {
    let radius = r_mn.norm();
    let parts = radial_parts(radius, k0)?;
    let g = assemble_tensor(r_mn, &parts);
    let dg = assemble_gradient(r_mn, k0, &parts);
    let pref = -real::<T>(3.0) * T::pi() * (m.gamma * n.gamma).sqrt() / k0;
    Ok(CouplingSample {
        c: contract(&m.dipole, &g, &n.dipole) * pref,
        grad_c: Vector3::new(
            contract(&m.dipole, &dg[0], &n.dipole) * pref,
            contract(&m.dipole, &dg[1], &n.dipole) * pref,
            contract(&m.dipole, &dg[2], &n.dipole) * pref,
        ),
    })
}

/// Both orderings of a pair from a single tensor evaluation.
///
/// Returns `(C_mn, C_nm)` where each sample's gradient is taken with respect
/// to its own first emitter's position; evenness of the tensor gives
/// `C_nm(r_nm) = d_n† G(r_mn) d_m` and flips the gradient sign.
pub fn coupling_pair<T: Real>(
    m: &EmitterParams<T>,
    n: &EmitterParams<T>,
    r_mn: &Vector3<T>,
    k0: T,
) -> Result<(CouplingSample<T>, CouplingSample<T>)> {
    let radius = r_mn.norm();
    let parts = radial_parts(radius, k0)?;
    let g = assemble_tensor(r_mn, &parts);
    let dg = assemble_gradient(r_mn, k0, &parts);
    let pref = -real::<T>(3.0) * T::pi() * (m.gamma * n.gamma).sqrt() / k0;
    let grad_mn = Vector3::new(
        contract(&m.dipole, &dg[0], &n.dipole) * pref,
        contract(&m.dipole, &dg[1], &n.dipole) * pref,
        contract(&m.dipole, &dg[2], &n.dipole) * pref,
    );
    let grad_nm = Vector3::new(
        -contract(&n.dipole, &dg[0], &m.dipole) * pref,
        -contract(&n.dipole, &dg[1], &m.dipole) * pref,
        -contract(&n.dipole, &dg[2], &m.dipole) * pref,
    );
    Ok((
        CouplingSample {
            c: contract(&m.dipole, &g, &n.dipole) * pref,
            grad_c: grad_mn,
        },
        CouplingSample {
            c: contract(&n.dipole, &g, &m.dipole) * pref,
            grad_c: grad_nm,
        },
    ))
}

/// Dense matrix of pairwise couplings; the diagonal stays empty.
#[derive(Debug, Clone)]
pub struct CouplingMatrix<T: Real> {
    n: usize,
    entries: Vec<Option<CouplingSample<T>>>,
}

impl<T: Real> CouplingMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Entry `(i, j)`: coupling for displacement `r_i - r_j`. `None` on the
    /// diagonal (no self-coupling).
    pub fn get(&self, i: usize, j: usize) -> Option<&CouplingSample<T>> {
        self.entries[i * self.n + j].as_ref()
    }
}

/// Batched pairwise couplings and gradients for Hamiltonian/force assembly.
///
/// Entry `(i, j)` holds the coupling for displacement `r_i - r_j` with
/// `d_i†` on the left. Coincident emitters fail naming the pair.
pub fn coupling_gradient_pairs<T: Real>(
    positions: &[Vector3<T>],
    params: &[EmitterParams<T>],
    k0: T,
) -> Result<CouplingMatrix<T>> {
    assert_eq!(
        positions.len(),
        params.len(),
        "one parameter set per emitter"
    );
    let n = positions.len();
    let mut entries = vec![None; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r_ij = positions[i] - positions[j];
            let (c_ij, c_ji) =
                coupling_pair(&params[i], &params[j], &r_ij, k0).map_err(|e| match e {
                    Error::TooClose { separation, .. } => Error::CoincidentEmitters {
                        a: Body::Lattice(i),
                        b: Body::Lattice(j),
                        separation,
                    },
                    other => other,
                })?;
            entries[i * n + j] = Some(c_ij);
            entries[j * n + i] = Some(c_ji);
        }
    }
    Ok(CouplingMatrix { n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn params_z() -> EmitterParams<f64> {
        EmitterParams::new(1.0, 0.0, EmitterParams::z_dipole()).unwrap()
    }

    fn params_circular() -> EmitterParams<f64> {
        EmitterParams::new(1.0, 0.0, EmitterParams::circular_dipole()).unwrap()
    }

    const K0: f64 = std::f64::consts::TAU;

    #[test]
    fn tensor_matches_direct_substitution_at_half_wavelength() {
        // Frozen by independent substitution into the closed form at k0·r = π:
        // G_yy = -(1/2π)(1 + i/π - 1/π²), G_xx = -(1/2π)(2/π² - 2i/π).
        let g = green_tensor(&Vector3::new(0.5, 0.0, 0.0), K0).unwrap();
        assert_relative_eq!(g[(1, 1)].re, -0.14302917587529559, max_relative = 1e-13);
        assert_relative_eq!(g[(1, 1)].im, -0.050660591821168886, max_relative = 1e-13);
        assert_relative_eq!(g[(0, 0)].re, -0.032251534433199489, max_relative = 1e-13);
        assert_relative_eq!(g[(0, 0)].im, 0.10132118364233777, max_relative = 1e-13);
        assert_eq!(g[(2, 2)], g[(1, 1)]);
        // Transverse displacement leaves off-diagonals empty.
        assert_eq!(g[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn tensor_is_even_and_symmetric() {
        let r = Vector3::new(0.3, 0.4, 0.0);
        let g = green_tensor(&r, K0).unwrap();
        let g_neg = green_tensor(&(-r), K0).unwrap();
        assert_eq!(g, g_neg);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(g[(a, b)], g[(b, a)]);
            }
        }
    }

    #[test]
    fn tensor_rejects_singular_separation() {
        let err = green_tensor(&Vector3::new(1e-10, 0.0, 0.0), K0).unwrap_err();
        assert!(matches!(err, Error::TooClose { .. }));
    }

    #[test]
    fn gradient_is_odd() {
        let r = Vector3::new(0.5, 0.2, 0.0);
        let dg = green_tensor_gradient(&r, K0).unwrap();
        let dg_neg = green_tensor_gradient(&(-r), K0).unwrap();
        for t in 0..3 {
            for idx in 0..9 {
                let diff = (dg[t][idx] + dg_neg[t][idx]).norm_sqr().sqrt();
                assert!(diff < 1e-14, "component {t}/{idx} not odd: {diff}");
            }
        }
    }

    /// Central finite difference of the tensor, the gradient's oracle.
    fn fd_gradient(r: &Vector3<f64>, k0: f64, h: f64) -> [ComplexTensor3<f64>; 3] {
        let mut out = [Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros()];
        for t in 0..3 {
            let mut dr = Vector3::zeros();
            dr[t] = h;
            let plus = green_tensor(&(r + dr), k0).unwrap();
            let minus = green_tensor(&(r - dr), k0).unwrap();
            out[t] = (plus - minus) / c(2.0 * h, 0.0);
        }
        out
    }

    fn max_rel_gradient_error(r: &Vector3<f64>, k0: f64, h: f64) -> f64 {
        let analytic = green_tensor_gradient(r, k0).unwrap();
        let numeric = fd_gradient(r, k0, h);
        let mut scale = 0.0f64;
        for t in 0..3 {
            for idx in 0..9 {
                scale = scale.max(analytic[t][idx].norm_sqr().sqrt());
            }
        }
        let mut worst = 0.0f64;
        for t in 0..3 {
            for idx in 0..9 {
                let diff = (analytic[t][idx] - numeric[t][idx]).norm_sqr().sqrt();
                worst = worst.max(diff / scale);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_on_axis() {
        let err = max_rel_gradient_error(&Vector3::new(0.5, 0.0, 0.0), K0, 1e-6);
        assert!(err < 1e-6, "gradient/FD mismatch: {err}");
    }

    #[test]
    fn gradient_matches_finite_differences_off_plane_component() {
        // ∂_z at an in-plane displacement exercises the δ_at/δ_bt terms.
        let err = max_rel_gradient_error(&Vector3::new(0.4, 0.3, 0.0), K0, 1e-6);
        assert!(err < 1e-6, "gradient/FD mismatch: {err}");
    }

    #[test]
    fn coupling_gamma_matches_frozen_value_for_z_dipoles() {
        // (6π/k0) Im G_zz at r = 0.5 λ0; frozen from the direct substitution.
        let p = params_z();
        let sample = coupling(&p, &p, &Vector3::new(0.5, 0.0, 0.0), K0).unwrap();
        assert_relative_eq!(sample.gamma(), -0.15198177546350666, max_relative = 1e-12);
        assert_relative_eq!(sample.j(), 0.21454376381294339, max_relative = 1e-12);
        // Five-decimal cross-check of the documented value.
        assert_relative_eq!(sample.gamma(), -0.15198, max_relative = 1e-4);
    }

    #[test]
    fn gamma_tends_to_single_atom_decay_at_zero_separation() {
        let p = params_z();
        // Γ(r) = γ + O((kr)²); Richardson in r² over the two smallest radii.
        let gamma_at = |r: f64| {
            coupling(&p, &p, &Vector3::new(0.0, r, 0.0), K0)
                .unwrap()
                .gamma()
        };
        let (r1, r2) = (1e-5, 1e-6);
        let (g1, g2) = (gamma_at(r1), gamma_at(r2));
        let extrap = (g2 * r1 * r1 - g1 * r2 * r2) / (r1 * r1 - r2 * r2);
        assert!((extrap - 1.0).abs() < 1e-6, "Γ(0) extrapolation: {extrap}");
        assert!((gamma_at(1e-4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coupling_is_reciprocal_for_identical_circular_dipoles() {
        let p = params_circular();
        let r = Vector3::new(0.31, -0.22, 0.0);
        let fwd = coupling(&p, &p, &r, K0).unwrap();
        let bwd = coupling(&p, &p, &(-r), K0).unwrap();
        assert_relative_eq!(fwd.c.re, bwd.c.re, max_relative = 1e-14);
        assert_relative_eq!(fwd.c.im, bwd.c.im, max_relative = 1e-14);
    }

    #[test]
    fn circular_coupling_depends_only_on_in_plane_distance() {
        let p = params_circular();
        let d = 0.37;
        let base = coupling(&p, &p, &Vector3::new(d, 0.0, 0.0), K0).unwrap();
        for k in 1..8 {
            let phi = 0.71 * k as f64;
            let r = Vector3::new(d * phi.cos(), d * phi.sin(), 0.0);
            let rot = coupling(&p, &p, &r, K0).unwrap();
            assert!((rot.c - base.c).norm_sqr().sqrt() < 1e-12);
        }
    }

    #[test]
    fn far_field_amplitude_is_bounded() {
        for k in 0..40 {
            let radius = 1.0 + 99.0 * (k as f64) / 39.0;
            let g = green_tensor(&Vector3::new(radius, 0.0, 0.0), K0).unwrap();
            let mut max_abs = 0.0f64;
            for idx in 0..9 {
                max_abs = max_abs.max(g[idx].norm_sqr().sqrt());
            }
            assert!(
                max_abs * 4.0 * std::f64::consts::PI * radius < 3.0,
                "far field grows at r = {radius}"
            );
        }
    }

    #[test]
    fn pair_matrix_matches_scalar_calls() {
        let positions = [
            Vector3::new(0.25, 0.0, 0.0),
            Vector3::new(-0.25, 0.0, 0.0),
            Vector3::new(0.1, 0.45, 0.0),
        ];
        let params = vec![params_circular(); 3];
        let matrix = coupling_gradient_pairs(&positions, &params, K0).unwrap();
        assert!(matrix.get(0, 0).is_none());
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let direct = coupling(
                    &params[i],
                    &params[j],
                    &(positions[i] - positions[j]),
                    K0,
                )
                .unwrap();
                let entry = matrix.get(i, j).unwrap();
                assert!((entry.c - direct.c).norm_sqr().sqrt() < 1e-14);
                for t in 0..3 {
                    assert!((entry.grad_c[t] - direct.grad_c[t]).norm_sqr().sqrt() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pair_matrix_names_coincident_pair() {
        let positions = [Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.1, 0.0, 0.0)];
        let params = vec![params_z(); 2];
        let err = coupling_gradient_pairs(&positions, &params, K0).unwrap_err();
        match err {
            Error::CoincidentEmitters {
                a: Body::Lattice(0),
                b: Body::Lattice(1),
                ..
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g64 = green_tensor(&Vector3::new(0.5f64, 0.0, 0.0), std::f64::consts::TAU).unwrap();
        let g32 = green_tensor(&Vector3::new(0.5f32, 0.0, 0.0), std::f32::consts::TAU).unwrap();
        assert!((g32[(1, 1)].re as f64 - g64[(1, 1)].re).abs() < 1e-6);
    }
}
