//! Principal-value fractional Laplacian, Riesz potentials and the Gagliardo
//! quadratic form.
//!
//! All three reduce to radial integrals `∫_0^∞ ρ^{-1-2s} D(ρ) dρ` (or
//! `ρ^{2s-1}`) of spherical means about the evaluation point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{operator_constant, Params};
use crate::error::{Error, Result};
use crate::field::{Field, Lattice, Tail};
use crate::geometry::{axis_point, ball_integral, dist, norm, origin, radial_breaks, sphere_mean, Integrand, Sphere};
use crate::quad::{integrate, integrate_graded, integrate_power_tail, Tol};
use crate::special::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvQuadratureScheme {
    /// Below this radius the even difference is replaced by its Taylor fit.
    pub inner_radius: f64,
    /// Even order of the fit (2 uses `ρ^2`, 4 adds `ρ^4`, ...).
    pub inner_order: usize,
    /// Panel budget of the adaptive far-field rule.
    pub outer_nodes: usize,
    /// Radius beyond which the power-tail map is used; by default twice the
    /// extent of the sampled region as seen from the evaluation point.
    pub tail_cutoff: Option<f64>,
    pub rel_tol: f64,
}

impl PvQuadratureScheme {
    pub fn for_field(u: &Field) -> Self {
        Self { inner_radius: u.spacing(), inner_order: 4, outer_nodes: 256, tail_cutoff: None, rel_tol: 1e-10 }
    }

    pub fn validate(&self, u: &Field) -> Result<()> {
        if !(self.inner_radius > 0.0) || self.inner_radius > u.spacing() * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "inner radius {} must lie in (0, h = {}]",
                self.inner_radius,
                u.spacing()
            )));
        }
        if self.inner_order < 2 || self.inner_order % 2 == 1 || self.inner_order > 8 {
            return Err(Error::InvalidParams(format!("inner order {} must be even and in [2, 8]", self.inner_order)));
        }
        if self.outer_nodes < 64 {
            return Err(Error::InvalidParams(format!("outer_nodes {} < 64", self.outer_nodes)));
        }
        if let Some(c) = self.tail_cutoff {
            if !(c > self.inner_radius) {
                return Err(Error::InvalidParams("tail cutoff must exceed the inner radius".into()));
            }
        }
        Ok(())
    }

    fn tol(&self) -> Tol {
        Tol::new(1e-14, self.rel_tol, self.outer_nodes)
    }
}

/// Coefficients `c_k` (k = 1..m) of `D(ρ) ≈ Σ c_k (ρ/ε)^{2k}` from samples at
/// `ε 2^{-j}`, `j = 0..m-1`.
fn even_fit(samples: &[f64]) -> Vec<f64> {
    let m = samples.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (j, row) in a.iter_mut().enumerate() {
        let z = 4f64.powi(-(j as i32));
        for k in 0..m {
            row[k] = z.powi(k as i32 + 1);
        }
        row[m] = samples[j];
    }
    // Gaussian elimination with partial pivoting; m <= 4
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..m).map(|k| a[k][m] / a[k][k]).collect()
}

/// `∫_0^∞ ρ^{-1-2s} D(ρ) dρ` for `D(ρ) = O(ρ^2)` at the origin.
pub(crate) fn pv_radial<D: Fn(f64) -> f64>(
    d: D,
    two_s: f64,
    eps: f64,
    order: usize,
    breaks: &[f64],
    cutoff: f64,
    tol: Tol,
) -> f64 {
    let m = order / 2;
    let samples: Vec<f64> = (0..m).map(|j| d(eps * 0.5f64.powi(j as i32))).collect();
    let coef = even_fit(&samples);
    let inner: f64 = coef.iter().enumerate().map(|(k, c)| c / (2.0 * (k as f64 + 1.0) - two_s)).sum::<f64>() * eps.powf(-two_s);
    let cutoff = cutoff.max(2.0 * eps);
    let outer = integrate(|r| r.powf(-1.0 - two_s) * d(r), eps, cutoff, breaks, tol).value;
    let tail = integrate_power_tail(&d, cutoff, two_s, breaks, tol).value;
    inner + outer + tail
}

fn effective_eps(u: &Field, x: &[f64], eps: f64) -> f64 {
    // keep the Taylor zone clear of non-smooth features
    let mut e = eps;
    for sp in u.features() {
        let gap = (dist(x, &sp.center) - sp.radius).abs();
        if gap > 1e-9 * eps {
            e = e.min(0.5 * gap);
        }
    }
    e
}

fn default_cutoff(u: &Field, x: &[f64], breaks: &[f64]) -> f64 {
    let reach = breaks.iter().cloned().fold(u.domain_radius() * (u.dim() as f64).sqrt() + norm(x), f64::max);
    2.0 * reach
}

/// `(-Δ)^s u(x)`.
pub fn frac_laplacian(u: &Field, x: &[f64], p: &Params, scheme: &PvQuadratureScheme) -> Result<f64> {
    scheme.validate(u)?;
    if x.len() != u.dim() || u.dim() != p.n {
        return Err(Error::InvalidParams("point and field dimensions differ".into()));
    }
    let ux = u.eval(x);
    if !ux.is_finite() {
        return Err(Error::SingularSample(format!("u({x:?}) = {ux}")));
    }
    let n = p.n;
    let tol = scheme.tol();
    let inner_tol = tol.inner();
    let f = |y: &[f64]| u.eval(y);
    let g = u.integrand(&f);
    let d = |rho: f64| ux - sphere_mean(n, x, rho, &g, inner_tol);
    let breaks = u.breaks_from(x);
    let cutoff = scheme.tail_cutoff.unwrap_or_else(|| default_cutoff(u, x, &breaks));
    let eps = effective_eps(u, x, scheme.inner_radius);
    let pv = pv_radial(d, 2.0 * p.s, eps, scheme.inner_order, &breaks, cutoff, tol);
    let v = operator_constant(p) * sphere_area(n) * pv;
    if !v.is_finite() {
        return Err(Error::SingularSample(format!("non-finite principal value at {x:?}")));
    }
    Ok(v)
}

/// [`frac_laplacian`] at many points, in input order.
pub fn frac_laplacian_many(u: &Field, xs: &[Vec<f64>], p: &Params, scheme: &PvQuadratureScheme) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| frac_laplacian(u, x, p, scheme)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCalibration {
    pub lambda: f64,
    /// `(max - min) / mean` of the per-radius estimates.
    pub spread: f64,
    pub radii: Vec<f64>,
    pub estimates: Vec<f64>,
}

pub const CALIBRATION_TOLERANCE: f64 = 1e-3;

/// Calibrate the radii list, `0.1 .. 2` log-spaced.
pub fn calibration_radii(count: usize) -> Vec<f64> {
    (0..count).map(|i| 0.1 * 20f64.powf(i as f64 / (count as f64 - 1.0))).collect()
}

/// `λ` with `|x|^{2s} (-Δ)^s(-2s log|·|)(x) ≡ λ`, averaged over 20 radii.
pub fn calibrate_singular_constant(p: &Params) -> Result<SingularCalibration> {
    calibrate_singular_constant_at(p, &calibration_radii(20))
}

pub fn calibrate_singular_constant_at(p: &Params, radii: &[f64]) -> Result<SingularCalibration> {
    if !p.riesz_admissible() {
        return Err(Error::InvalidParams(format!("calibration needs n > 2s (n={}, s={})", p.n, p.s)));
    }
    let lattice = Lattice::Radial { n: p.n, r_min: 1e-3, r_max: 10.0, count: 64 };
    let v = crate::corpus::log_profile(p, 0.0, lattice)?;
    let estimates: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let scheme = PvQuadratureScheme {
                inner_radius: (0.05 * r).min(v.spacing()),
                inner_order: 4,
                outer_nodes: 400,
                tail_cutoff: None,
                rel_tol: 1e-11,
            };
            frac_laplacian(&v, &axis_point(p.n, r), p, &scheme).map(|l| l * r.powf(2.0 * p.s))
        })
        .collect::<Result<_>>()?;
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let (lo, hi) = estimates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let spread = (hi - lo) / mean.abs();
    if !(spread <= CALIBRATION_TOLERANCE) || !(mean > 0.0) {
        return Err(Error::Calibration { spread, tolerance: CALIBRATION_TOLERANCE });
    }
    Ok(SingularCalibration { lambda: mean, spread, radii: radii.to_vec(), estimates })
}

/// `normalizer · ∫_{B_r(c)} |x - y|^{2s-n} f(y) dy`.
pub fn riesz_potential(f: &Field, c: &[f64], r: f64, x: &[f64], p: &Params, normalizer: f64) -> Result<f64> {
    riesz_lifted(f, c, r, x, 0.0, p, normalizer, Tol::new(1e-14, 1e-10, 400))
}

/// `normalizer · ∫_{B_r(c)} (|x - y|^2 + t^2)^{-(n-2s)/2} f(y) dy` for `t >= 0`.
#[allow(clippy::too_many_arguments)]
pub fn riesz_lifted(f: &Field, c: &[f64], r: f64, x: &[f64], t: f64, p: &Params, normalizer: f64, tol: Tol) -> Result<f64> {
    if !p.riesz_admissible() {
        return Err(Error::InvalidParams(format!("Riesz kernel needs n > 2s (n={}, s={})", p.n, p.s)));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be nonnegative")));
    }
    let n = p.n;
    let two_s = 2.0 * p.s;
    let masked = |y: &[f64]| if dist(y, c) < r { f.eval(y) } else { 0.0 };
    let mut feats = f.features().to_vec();
    feats.insert(0, Sphere::new(c.to_vec(), r));
    let centre = f.radial_center().filter(|q| dist(q, c) <= 1e-14);
    let g = Integrand::new(&masked, centre, &feats);
    let inner = tol.inner();
    let reach = dist(x, c) + r;
    // ρ = τ^{1/(2s)} absorbs the kernel: ρ^{2s-1} dρ = dτ / (2s)
    let mut tb: Vec<f64> = radial_breaks(x, &feats).into_iter().filter(|&b| b < reach).map(|b| b.powf(two_s)).collect();
    if t > 0.0 && t < reach {
        tb.push(t.powf(two_s));
    }
    let damp = |rho: f64| if t == 0.0 { 1.0 } else { (rho * rho / (rho * rho + t * t)).powf((n as f64 - two_s) / 2.0) };
    let v = integrate_graded(
        |tau| {
            let rho = tau.powf(1.0 / two_s);
            let m = sphere_mean(n, x, rho, &g, inner);
            // a node rounded onto an integrable point singularity
            if m.is_finite() { damp(rho) * m } else { 0.0 }
        },
        0.0,
        reach.powf(two_s),
        &tb,
        tol,
    )
    .value;
    Ok(normalizer * sphere_area(n) / two_s * v)
}

/// Radius of a ball containing the support of a zero-tail field.
fn support_radius(phi: &Field) -> f64 {
    let bound = phi.domain_radius() * if phi.is_radial_mode() { 1.0 } else { (phi.dim() as f64).sqrt() };
    let h = phi.spacing();
    let seen = phi.samples().filter(|(_, v)| *v != 0.0).map(|(x, _)| norm(&x)).fold(0.0, f64::max);
    if seen == 0.0 { bound } else { (seen + 2.0 * h).min(bound) }
}

/// `∫_{|y| > R} |x - y|^{-n-2s} dy` for `|x| < R`.
fn exterior_kernel(n: usize, x: &[f64], big_r: f64, two_s: f64, tol: Tol) -> f64 {
    let a = norm(x);
    if n == 1 {
        return ((big_r - a).powf(-two_s) + (big_r + a).powf(-two_s)) / two_s;
    }
    let o = origin(n);
    let ind = |y: &[f64]| if norm(y) > big_r { 1.0 } else { 0.0 };
    let feats = [Sphere::new(o.clone(), big_r)];
    let g = Integrand::new(&ind, Some(&o), &feats);
    let lo = big_r - a;
    let hi = big_r + a;
    let mid = integrate(|rho| rho.powf(-1.0 - two_s) * sphere_mean(n, x, rho, &g, tol.inner()), lo, hi, &[], tol).value;
    sphere_area(n) * (mid + hi.powf(-two_s) / two_s)
}

/// `(c/2) ∫∫ (φ(x) - φ(y))^2 / |x - y|^{n+2s}`.
pub fn gagliardo_form(phi: &Field, p: &Params) -> Result<f64> {
    if phi.tail() != Tail::Zero {
        return Err(Error::NonzeroTail);
    }
    let n = p.n;
    let two_s = 2.0 * p.s;
    let big_r = support_radius(phi);
    let tol = Tol::new(1e-13, 1e-8, 300);
    let area = sphere_area(n);
    let h = phi.spacing();
    let local = |x: &[f64]| -> f64 {
        let px = phi.eval(x);
        let sq = |y: &[f64]| {
            let d = px - phi.eval(y);
            d * d
        };
        let g = phi.integrand(&sq);
        let itol = tol.inner();
        let d = |rho: f64| sphere_mean(n, x, rho, &g, itol.inner());
        let breaks = phi.breaks_from(x);
        let cut = norm(x) + big_r;
        let mut brk = breaks.clone();
        brk.retain(|&b| b < cut);
        let eps = effective_eps(phi, x, h);
        let m = 2;
        let samples: Vec<f64> = (0..m).map(|j| d(eps * 0.5f64.powi(j))).collect();
        let coef = even_fit(&samples);
        let inner: f64 = coef.iter().enumerate().map(|(k, c)| c / (2.0 * (k as f64 + 1.0) - two_s)).sum::<f64>() * eps.powf(-two_s);
        let outer = if cut > eps { integrate(|r| r.powf(-1.0 - two_s) * d(r), eps, cut, &brk, itol).value } else { 0.0 };
        let tail = px * px * cut.max(eps).powf(-two_s) / two_s;
        area * (inner + outer + tail) + px * px * exterior_kernel(n, x, big_r, two_s, itol)
    };
    let g = phi.integrand(&local);
    let total = ball_integral(n, &origin(n), big_r, &g, tol);
    Ok(0.5 * operator_constant(p) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::special::gamma;

    #[test]
    fn constant_has_zero_laplacian() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::constant(&p, 3.0).unwrap();
        let sc = PvQuadratureScheme::for_field(&u);
        assert!(frac_laplacian(&u, &[0.2], &p, &sc).unwrap().abs() < 1e-8);
        let p2 = Params::new(2, 0.3).unwrap();
        let u2 = corpus::constant(&p2, -1.0).unwrap();
        let sc2 = PvQuadratureScheme::for_field(&u2);
        assert!(frac_laplacian(&u2, &[0.2, 0.1], &p2, &sc2).unwrap().abs() < 1e-8);
    }

    #[test]
    fn dyda_profile_is_flat_on_the_ball() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::dyda_profile(&p).unwrap();
        let sc = PvQuadratureScheme::for_field(&u);
        let xs: Vec<Vec<f64>> = [0.0, 0.3, -0.3, 0.6, -0.6].iter().map(|&x| vec![x]).collect();
        let v = frac_laplacian_many(&u, &xs, &p, &sc).unwrap();
        // closed form 2^{2s} Γ(1+s) Γ(n/2+s) / Γ(n/2)
        let s = p.s;
        let exact = 4f64.powf(s) * gamma(1.0 + s).unwrap() * gamma(0.5 + s).unwrap() / gamma(0.5).unwrap();
        for w in &v {
            assert!((w - exact).abs() < 1e-5 * exact, "{v:?} vs {exact}");
        }
    }

    #[test]
    fn log_profile_homogeneity() {
        let p = Params::new(1, 0.25).unwrap();
        let v = corpus::log_profile(&p, 0.0, corpus::default_lattice(1)).unwrap();
        let sc = PvQuadratureScheme::for_field(&v);
        let a = frac_laplacian(&v, &[0.4], &p, &sc).unwrap();
        let b = frac_laplacian(&v, &[0.8], &p, &sc).unwrap();
        assert!((b / a - 2f64.powf(-0.5)).abs() < 1e-4 * 2f64.powf(-0.5));
        assert!(matches!(frac_laplacian(&v, &[0.0], &p, &sc), Err(Error::SingularSample(_))));
    }

    fn golden_closed_form(n: usize, s: f64) -> f64 {
        let h = n as f64 / 2.0;
        4f64.powf(s) * gamma(h).unwrap() * gamma(1.0 + s).unwrap() / gamma(h - s).unwrap()
    }

    #[test]
    fn calibration_matches_closed_form() {
        for &(n, s) in &[(1, 0.25), (1, 0.09), (2, 0.5), (3, 0.25)] {
            let p = Params::new(n, s).unwrap();
            let c = calibrate_singular_constant(&p).unwrap();
            let exact = golden_closed_form(n, s);
            assert!(c.spread < 1e-6, "n={n} s={s} spread {}", c.spread);
            assert!((c.lambda - exact).abs() < 1e-6 * exact, "n={n} s={s}: {} vs {exact}", c.lambda);
        }
        assert!(calibrate_singular_constant(&Params::new(1, 0.7).unwrap()).is_err());
    }

    #[test]
    fn riesz_of_indicator() {
        let p = Params::new(1, 0.25).unwrap();
        let one = corpus::constant(&p, 1.0).unwrap();
        let v = riesz_potential(&one, &[0.0], 1.0, &[0.0], &p, 1.0).unwrap();
        assert!((v - 4.0).abs() < 1e-8, "{v}");
        let zero = corpus::constant(&p, 0.0).unwrap();
        assert_eq!(riesz_potential(&zero, &[0.0], 1.0, &[0.3], &p, 1.0).unwrap(), 0.0);
        // off-centre: ∫_{-1}^{1} |0.5-y|^{-1/2} = 2(√1.5 + √0.5)
        let w = riesz_potential(&one, &[0.0], 1.0, &[0.5], &p, 1.0).unwrap();
        let exact = 2.0 * (1.5f64.sqrt() + 0.5f64.sqrt());
        assert!((w - exact).abs() < 1e-7, "{w} vs {exact}");
    }

    #[test]
    fn riesz_in_three_dimensions() {
        // ∫_{B_1} |y|^{2s-3} dy = 4π / (2s)
        let p = Params::new(3, 0.5).unwrap();
        let one = corpus::constant(&p, 1.0).unwrap();
        let v = riesz_potential(&one, &[0.0; 3], 1.0, &[0.0; 3], &p, 1.0).unwrap();
        assert!((v - 4.0 * std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn tent_form_matches_fourier_side() {
        let p = Params::new(1, 0.5).unwrap();
        let phi = corpus::tent(&p).unwrap();
        let v = gagliardo_form(&phi, &p).unwrap();
        // (1/2π) ∫ |ξ| |φ̂|^2 with φ̂(ξ) = (sin(ξ/2) / (ξ/2))^2
        let four = crate::quad::integrate_to_infinity(
            |xi: f64| {
                if xi == 0.0 {
                    return 0.0;
                }
                let q = (0.5 * xi).sin() / (0.5 * xi);
                xi * q.powi(4)
            },
            0.0,
            &[],
            Tol::new(1e-12, 1e-10, 2000),
        )
        .value
            / std::f64::consts::PI;
        assert!((v - four).abs() < 1e-3 * four, "{v} vs {four}");
        assert!((v - 4.0 * 2f64.ln() / std::f64::consts::PI).abs() < 1e-3);
        let v2 = gagliardo_form(&phi.affine(2.0, 0.0), &p).unwrap();
        assert!((v2 / v - 4.0).abs() < 1e-6);
        assert_eq!(gagliardo_form(&corpus::constant(&p, 0.0).unwrap(), &p).unwrap(), 0.0);
        assert!(matches!(gagliardo_form(&corpus::constant(&p, 1.0).unwrap(), &p), Err(Error::NonzeroTail)));
    }
}
