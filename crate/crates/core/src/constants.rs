//! Problem parameters and every normalizing constant derived from them.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_power_tail, Tol};
use crate::special::{beta, gamma, sphere_area};

/// Ambient dimension `n` and fractional order `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub s: f64,
}

impl Params {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("dimension must be at least 1".into()));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("order s = {s} must lie in (0, 1)")));
        }
        Ok(Self { n, s })
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// Exponent `1 - 2s` of the extension weight `t^{1-2s}`.
    pub fn weight_exponent(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    /// Riesz-type kernels `|x|^{2s-n}` need `n > 2s`.
    pub fn riesz_admissible(&self) -> bool {
        self.dim() > 2.0 * self.s
    }
}

/// Normalizing constants. `c_ns` is the closed form
/// `2^{2s-1} Γ((n+2s)/2) / (π^{n/2} |Γ(-s)|)`; the operator itself is
/// normalized with `c_ns_operator = 2 c_ns`, which is the constant for
/// which the symbol is `|ξ|^{2s}` and the extension trace constant is
/// exactly `kappa_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub c_ns: f64,
    pub c_ns_operator: f64,
    pub kappa_s: f64,
    pub d_ns: f64,
    pub c_s: f64,
    /// `C(n,s)` of the half-space Riesz potential; `None` when `n <= 2s`.
    pub c_ns_riesz: Option<f64>,
    /// `c(n,s)` with `c (-Δ)^s |x|^{2s-n} = δ`; `None` when `n <= 2s`.
    pub c_ns_fund: Option<f64>,
    pub certificates: ConstantCertificates,
}

/// Relative residuals of the defining identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCertificates {
    /// `|∫ P(X, y) dy - 1|` by direct quadrature.
    pub poisson_mass: f64,
    /// Polar-angle quadrature of `∫_{D_1} t^{1-2s}` against the Beta form.
    pub half_ball_weight: f64,
    /// Agreement of `C(n,s)` (trace identity) and `c(n,s)` (fundamental solution).
    pub riesz_vs_fundamental: Option<f64>,
}

pub const CERTIFICATE_TOLERANCE: f64 = 1e-6;

/// `|∫ P((x,t), y) dy - 1|` at one node, by radial quadrature about `x`.
/// Independent of `x` by translation; `t` sets the scale.
pub fn poisson_mass_residual(p: &Params, d_ns: f64, t: f64) -> f64 {
    let n = p.dim();
    let s = p.s;
    let area = sphere_area(p.n);
    let dens = |rho: f64| area * rho.powf(n - 1.0) * d_ns * t.powf(2.0 * s) / (rho * rho + t * t).powf((n + 2.0 * s) / 2.0);
    let tol = Tol::new(1e-15, 1e-12, 500);
    let inner = integrate(dens, 0.0, t, &[], tol).value;
    // beyond t: dens(ρ) = ρ^{-1-2s} h(ρ)
    let outer = integrate_power_tail(|rho| dens(rho) * rho.powf(1.0 + 2.0 * s), t, 2.0 * s, &[], tol).value;
    (inner + outer - 1.0).abs()
}

/// `c_s` via the one-dimensional polar-angle reduction, by quadrature.
pub fn half_ball_weight_quadrature(p: &Params) -> f64 {
    let n = p.dim();
    let a = p.weight_exponent();
    let tol = Tol::new(1e-15, 1e-13, 800);
    let near = integrate(|phi: f64| phi.cos().powf(a) * phi.sin().powf(n - 1.0), 0.0, PI / 4.0, &[], tol).value;
    // on [π/4, π/2] substitute v = cos(φ)^{1+a} to absorb the endpoint power
    let vmax = FRAC_1_SQRT_2.powf(1.0 + a);
    let far = integrate(|v: f64| (1.0 - v.powf(2.0 / (1.0 + a))).powf((n - 2.0) / 2.0), 0.0, vmax, &[], tol).value
        / (1.0 + a);
    let ang = near + far;
    sphere_area(p.n) / (n + 1.0 + a) * ang
}

/// `4^s Γ(n/2+s) / (π^{n/2} |Γ(-s)|)`, the constant in front of the
/// principal-value integral.
pub fn operator_constant(p: &Params) -> f64 {
    let h = p.dim() / 2.0;
    let s = p.s;
    // Γ(-s) has no pole for s in (0, 1)
    4f64.powf(s) * gamma(h + s).unwrap() / (PI.powf(h) * gamma(-s).unwrap().abs())
}

pub fn constants(p: &Params) -> Result<ConstantSet> {
    let n = p.dim();
    let s = p.s;
    let h = n / 2.0;
    let c_ns = 2f64.powf(2.0 * s - 1.0) * gamma(h + s)? / (PI.powf(h) * gamma(-s)?.abs());
    let c_ns_operator = 2.0 * c_ns;
    let kappa_s = gamma(1.0 - s)? / (2f64.powf(2.0 * s - 1.0) * gamma(s)?);
    // ∫ P = d |S^{n-1}| B(n/2, s) / 2
    let d_ns = 2.0 / (sphere_area(p.n) * beta(h, s)?);
    // ∫_{D_1} t^{1-2s} = |S^{n-1}| B(n/2, 1-s) / (2 (n+2-2s))
    let c_s = sphere_area(p.n) * beta(h, 1.0 - s)? / (2.0 * (n + 2.0 - 2.0 * s));

    let (c_ns_riesz, c_ns_fund, riesz_cert) = if p.riesz_admissible() {
        // trace of (|x-y|^2+t^2)^{-(n-2s)/2}: (n-2s) |S^{n-1}| B(n/2, 1-s)/2
        let trace = (n - 2.0 * s) * sphere_area(p.n) * 0.5 * beta(h, 1.0 - s)?;
        let big = kappa_s / trace;
        let small = gamma(h - s)? / (4f64.powf(s) * PI.powf(h) * gamma(s)?);
        (Some(big), Some(small), Some(((big - small) / small).abs()))
    } else {
        (None, None, None)
    };

    let poisson_mass = poisson_mass_residual(p, d_ns, 1.0);
    let half_ball_weight = ((half_ball_weight_quadrature(p) - c_s) / c_s).abs();
    let certificates = ConstantCertificates { poisson_mass, half_ball_weight, riesz_vs_fundamental: riesz_cert };
    for (what, r) in [
        ("poisson kernel mass", Some(poisson_mass)),
        ("half-ball weight", Some(half_ball_weight)),
        ("riesz normalizer", riesz_cert),
    ] {
        if let Some(r) = r {
            if !(r <= CERTIFICATE_TOLERANCE) {
                return Err(Error::Certificate { what: what.into(), residual: r, tolerance: CERTIFICATE_TOLERANCE });
            }
        }
    }
    let set = ConstantSet { c_ns, c_ns_operator, kappa_s, d_ns, c_s, c_ns_riesz, c_ns_fund, certificates };
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(Params::new(0, 0.5).is_err());
        assert!(Params::new(1, 0.0).is_err());
        assert!(Params::new(1, 1.0).is_err());
    }

    #[test]
    fn half_order_line() {
        let c = constants(&Params::new(1, 0.5).unwrap()).unwrap();
        assert!((c.kappa_s - 1.0).abs() < 1e-12);
        assert!((c.c_ns - 1.0 / (2.0 * PI)).abs() < 1e-10);
        assert!((c.c_s - PI / 2.0).abs() < 1e-12);
        // harmonic extension in the half-plane: d = 1/π
        assert!((c.d_ns - 1.0 / PI).abs() < 1e-12);
        assert!(c.c_ns_riesz.is_none());
    }

    #[test]
    fn riesz_normalizers_agree() {
        for &(n, s) in &[(1, 0.25), (2, 0.5), (3, 0.75), (3, 0.25)] {
            let c = constants(&Params::new(n, s).unwrap()).unwrap();
            let a = c.c_ns_riesz.unwrap();
            let b = c.c_ns_fund.unwrap();
            assert!(((a - b) / b).abs() < 1e-12, "n={n} s={s}: {a} vs {b}");
        }
    }

    #[test]
    fn all_positive_and_continuous_in_s() {
        for n in 1..=4 {
            let mut prev: Option<ConstantSet> = None;
            let mut s = 0.1;
            while s < 0.96 {
                let c = constants(&Params::new(n, s).unwrap()).unwrap();
                for v in [c.c_ns, c.kappa_s, c.d_ns, c.c_s] {
                    assert!(v > 0.0 && v.is_finite());
                }
                if let Some(q) = prev {
                    for (a, b) in [(c.c_ns, q.c_ns), (c.kappa_s, q.kappa_s), (c.d_ns, q.d_ns), (c.c_s, q.c_s)] {
                        assert!(((a - b) / b).abs() < 0.15, "jump at n={n} s={s}");
                    }
                }
                prev = Some(c);
                s += 0.005;
            }
        }
    }

    #[test]
    fn poisson_mass_is_one() {
        for &(n, s) in &[(1, 0.3), (2, 0.7), (3, 0.5)] {
            let p = Params::new(n, s).unwrap();
            let c = constants(&p).unwrap();
            for &t in &[1e-3, 0.1, 1.0, 7.5] {
                assert!(poisson_mass_residual(&p, c.d_ns, t) < 1e-9);
            }
        }
    }
}
