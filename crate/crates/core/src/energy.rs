//! The two-term energy `r^{2s-n} ∫_{B_r} e^u + r^{4s-n-2} ∫_{D_r} t^{1-2s} e^{ū}`,
//! its behaviour under rescaling and its decay across scales.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::Params;
use crate::error::{Error, Result};
use crate::extension::ExtensionField;
use crate::field::{ln_exp_ball_integral, rescale, Field};
use crate::geometry::{ball_integral, dist, origin, Integrand, Point};
use crate::quad::{integrate, Tol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub x0: Point,
    pub r: f64,
    pub boundary_term: f64,
    pub bulk_term: f64,
    pub total: f64,
}

/// Smallest admissible scale, in lattice cells.
pub const MIN_CELLS: f64 = 4.0;
pub const DEFAULT_THETA: f64 = 0.5;

/// Ratio at which a regular point halves its energy with margin:
/// `θ^{2s} = 1/3`.
pub fn calibrated_theta(p: &Params) -> f64 {
    3f64.powf(-1.0 / (2.0 * p.s))
}

fn energy_tol() -> Tol {
    Tol::new(1e-14, 1e-6, 300)
}

/// `ln ∫_{D_r(x0)} t^{1-2s} e^{ū}`, with `t = r v^3` so that the weight and
/// the power-law corrections of `ū` near `t = 0` become smooth in `v`.
fn ln_bulk(u: &Field, ext: &ExtensionField, x0: &[f64], r: f64, p: &Params) -> f64 {
    let n = p.n;
    let a = 1.0 - 2.0 * p.s;
    let mut shift = u.eval(x0);
    for (x, v) in u.samples() {
        if v.is_finite() && dist(&x, x0) <= r {
            shift = if shift.is_finite() { shift.max(v) } else { v };
        }
    }
    if !shift.is_finite() {
        shift = 0.0;
    }
    let tol = energy_tol();
    let ext = ext.with_tol(Tol::new(1e-15, 1e-8, 300));
    let centre = u.radial_center().map(|c| c.to_vec());
    let feats: Vec<_> = u.features().iter().filter(|sp| sp.radius == 0.0).cloned().collect();
    let v = integrate(
        |v: f64| {
            if v <= 0.0 || v >= 1.0 {
                return 0.0;
            }
            let t = r * v * v * v;
            let f = |x: &[f64]| (ext.value_at(x, t) - shift).exp();
            let g = Integrand::new(&f, centre.as_deref(), &feats);
            let jac = 3.0 * r * v * v * t.powf(a);
            jac * ball_integral(n, x0, (r * r - t * t).sqrt(), &g, tol.inner())
        },
        0.0,
        1.0,
        &[],
        tol,
    )
    .value;
    shift + v.ln()
}

/// `𝓔(u, x0, r)`.
pub fn energy(u: &Field, ext: &ExtensionField, x0: &[f64], r: f64, p: &Params) -> Result<EnergyReport> {
    if x0.len() != p.n || u.dim() != p.n {
        return Err(Error::InvalidParams("centre, field and n disagree in dimension".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParams(format!("radius {r} must be positive")));
    }
    let limit = MIN_CELLS * u.spacing();
    if r < limit * (1.0 - 1e-12) {
        return Err(Error::ScaleUnderflow { scale: r, limit });
    }
    if !u.contains_ball(x0, r) {
        return Err(Error::OutsideDomain(format!("B_{r}({x0:?}) exceeds the sampled region")));
    }
    if r > ext.t_max {
        return Err(Error::OutsideDomain(format!("D_{r} exceeds the extension height {}", ext.t_max)));
    }
    let n = p.dim();
    let s = p.s;
    let lb = ln_exp_ball_integral(u, 1.0, x0, r, energy_tol());
    let boundary_term = ((2.0 * s - n) * r.ln() + lb).exp();
    let lk = ln_bulk(u, ext, x0, r, p);
    let bulk_term = ((4.0 * s - n - 2.0) * r.ln() + lk).exp();
    if !(boundary_term.is_finite() && bulk_term.is_finite()) {
        return Err(Error::Overflow(format!("energy at r = {r} is not finite")));
    }
    Ok(EnergyReport { x0: x0.to_vec(), r, boundary_term, bulk_term, total: boundary_term + bulk_term })
}

/// `|𝓔(u^λ, 0, r) - 𝓔(u, x0, λr)| / 𝓔(u, x0, λr)`.
pub fn energy_rescaling_check(u: &Field, x0: &[f64], lambda: f64, r: f64, p: &Params) -> Result<f64> {
    let ul = rescale(u, x0, lambda, p)?;
    let e_small = energy(u, &ExtensionField::kernel_only(u, p)?, x0, lambda * r, p)?;
    let e_resc = energy(&ul, &ExtensionField::kernel_only(&ul, p)?, &origin(p.n), r, p)?;
    Ok((e_resc.total - e_small.total).abs() / e_small.total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub x0: Point,
    pub theta: f64,
    pub scales: Vec<f64>,
    pub energies: Vec<f64>,
    /// `halved[k]`: `𝓔(r_{k+1}) <= 𝓔(r_k) / 2`.
    pub halved: Vec<bool>,
    /// Least-squares slope of `log 𝓔` against `log r`.
    pub alpha_fit: f64,
}

pub fn decay_series(
    u: &Field,
    ext: &ExtensionField,
    x0: &[f64],
    r0: f64,
    theta: f64,
    k_max: usize,
    p: &Params,
) -> Result<DecaySeries> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParams(format!("θ = {theta} must lie in (0, 1)")));
    }
    if k_max < 3 {
        return Err(Error::InvalidParams("a decay series needs at least 4 scales".into()));
    }
    let scales: Vec<f64> = (0..=k_max).map(|k| r0 * theta.powi(k as i32)).collect();
    let limit = MIN_CELLS * u.spacing();
    let smallest = *scales.last().unwrap();
    if smallest < limit * (1.0 - 1e-12) {
        return Err(Error::ScaleUnderflow { scale: smallest, limit });
    }
    let energies: Vec<f64> =
        scales.par_iter().map(|&r| energy(u, ext, x0, r, p).map(|e| e.total)).collect::<Result<_>>()?;
    let halved = energies.windows(2).map(|w| w[1] <= 0.5 * w[0]).collect();
    let alpha_fit = log_slope(&scales, &energies);
    Ok(DecaySeries { x0: x0.to_vec(), theta, scales, energies, halved, alpha_fit })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

impl DecaySeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,r_k,energy,halved\n");
        for k in 0..self.scales.len() {
            let flag = if k == 0 { String::new() } else { self.halved[k - 1].to_string() };
            let _ = writeln!(out, "{k},{},{},{flag}", self.scales[k], self.energies[k]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::field::{Lattice, Tail};
    use crate::nonlocal::calibrate_singular_constant;
    use std::f64::consts::PI;

    fn kernel(u: &Field, p: &Params) -> ExtensionField {
        ExtensionField::kernel_only(u, p).unwrap()
    }

    #[test]
    fn zero_field_energy() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::constant(&p, 0.0).unwrap();
        let e = energy(&u, &kernel(&u, &p), &[0.0], 1.0, &p).unwrap();
        assert!((e.boundary_term - 2.0).abs() < 1e-10);
        assert!((e.bulk_term - PI / 2.0).abs() < 1e-7, "{e:?}");
        assert!((e.total - (2.0 + PI / 2.0)).abs() < 1e-7);
        let tiny = corpus::constant(&p, -40.0).unwrap();
        assert!(energy(&tiny, &kernel(&tiny, &p), &[0.0], 1.0, &p).unwrap().total < 1e-15);
        assert!(matches!(energy(&u, &kernel(&u, &p), &[0.0], 0.01, &p), Err(Error::ScaleUnderflow { .. })));
        assert!(matches!(energy(&u, &kernel(&u, &p), &[3.5], 1.0, &p), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn golden_energy_is_scale_free() {
        let p = Params::new(1, 0.25).unwrap();
        let cal = calibrate_singular_constant(&p).unwrap();
        let u = corpus::log_profile(&p, cal.lambda.ln(), corpus::default_lattice(1)).unwrap();
        let ext = kernel(&u, &p);
        let a = energy(&u, &ext, &[0.0], 1.0, &p).unwrap().total;
        let b = energy(&u, &ext, &[0.0], 0.25, &p).unwrap().total;
        assert!((a - b).abs() < 1e-3 * a, "{a} {b}");
        let r = energy_rescaling_check(&u, &[0.0], 0.4, 1.0, &p).unwrap();
        assert!(r < 1e-3, "{r}");
    }

    #[test]
    fn bump_rescaling() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::bump(&p).unwrap();
        assert!(energy_rescaling_check(&u, &[0.0], 1.0, 1.0, &p).unwrap() < 1e-12);
        let r = energy_rescaling_check(&u, &[0.3], 0.5, 1.0, &p).unwrap();
        assert!(r < 1e-3, "{r}");
    }

    #[test]
    fn zero_field_decays_with_slope_2s() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::constant(&p, 0.0).unwrap();
        let d = decay_series(&u, &kernel(&u, &p), &[0.0], 2.0, 0.5, 4, &p).unwrap();
        assert!((d.alpha_fit - 1.0).abs() < 0.05, "{d:?}");
        assert_eq!(d.to_csv().lines().count(), 6);
        assert!(matches!(
            decay_series(&u, &kernel(&u, &p), &[0.0], 1.0, 0.5, 6, &p),
            Err(Error::ScaleUnderflow { .. })
        ));
    }

    #[test]
    fn bump_halves_at_calibrated_theta() {
        let p = Params::new(1, 0.5).unwrap();
        let u = Field::from_fn(Lattice::Grid { n: 1, half_width: 2.0, per_axis: 513 }, Tail::Zero, |x| {
            0.5 * (-x[0] * x[0]).exp()
        })
        .unwrap();
        let th = calibrated_theta(&p);
        let d = decay_series(&u, &kernel(&u, &p), &[0.0], 1.0, th, 3, &p).unwrap();
        assert!(d.halved.iter().all(|&h| h), "{d:?}");
    }
}
