//! The decomposition `ū = v̄ + w̄`, the estimates built on it, the `u1 + u2`
//! split, and the singular-set detector.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::constants::{constants, Params};
use crate::error::{Error, Result};
use crate::extension::{delta_certificate, neumann_trace_on, ExtensionField};
use crate::field::{ln_exp_ball_integral, lp_ball_norm, morrey_norm, Field, MorreyDatum, Tail};
use crate::geometry::{dist, half_ball_rule, norm, origin, sphere_rule, HalfBallNode, Point, Sphere};
use crate::nonlocal::{frac_laplacian, riesz_lifted, riesz_potential, PvQuadratureScheme};
use crate::quad::{graded_rule, Tol};

/// Interpolation exponent of the `L^2` estimate, slightly above 2.
pub const L2_INTERPOLATION_P: f64 = 2.2;
/// Threshold calibrated on the golden profile for `(n, s, p) = (1, 0.09, 2)`.
pub const DEFAULT_EPSILON_P: f64 = 1.8;
pub const HARNACK_SLACK: f64 = 1e-4;
pub const SPLIT_TOLERANCE: f64 = 5e-2;

const INNER_TOL: Tol = Tol::new(1e-14, 1e-9, 300);

/// `γ` with `1/2 = γ + (1 - γ)/p`.
pub fn l2_gamma(p: f64) -> f64 {
    (0.5 - 1.0 / p) / (1.0 - 1.0 / p)
}

fn exp_field(u: &Field) -> Field {
    let me = u.clone();
    u.with_evaluator(Tail::Zero, move |x| me.eval(x).exp())
}

fn weighted_sum(vals: &[(f64, f64)]) -> f64 {
    // (weight, log value); log-shifted so large exponents do not overflow
    let top = vals.iter().map(|v| v.1).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return 0.0;
    }
    let acc: f64 = vals.iter().map(|(w, l)| w * (l - top).exp()).sum();
    acc * top.exp()
}

/// Fixed rule on `B_r(c)`: graded Gauss in the radius times [`sphere_rule`].
fn ball_rule(n: usize, c: &[f64], r: f64, panels: usize, m: usize) -> Vec<(Point, f64)> {
    if n == 1 {
        return graded_rule(c[0] - r, c[0] + r, &[c[0]], panels, m).into_iter().map(|(x, w)| (vec![x], w)).collect();
    }
    let dirs = sphere_rule(n, m.div_ceil(2));
    let mut out = Vec::new();
    for (rho, wr) in graded_rule(0.0, r, &[], panels, m) {
        for (d, wd) in &dirs {
            out.push((c.iter().zip(d).map(|(a, b)| a + rho * b).collect(), wr * wd * rho.powi(n as i32 - 1)));
        }
    }
    out
}

// ---------------------------------------------------------------- v̄ / w̄

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionTraces {
    /// `max |trace v̄ - κ e^u| / (κ max e^u)` over the checked nodes.
    pub v_trace_residual: f64,
    /// `max |trace w̄| / (κ max e^u)`.
    pub w_trace: f64,
    pub checked_nodes: usize,
    /// Larger of the two extrapolation certificates.
    pub certificate: f64,
    pub min_v_bar: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub base: Field,
    pub density: Field,
    pub ext: ExtensionField,
    pub r: f64,
    pub params: Params,
    /// `C(n, s)`.
    pub normalizer: f64,
    /// On the grid of `ext`, same indexing as `ext.values`.
    pub v_bar: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub traces: DecompositionTraces,
}

impl Decomposition {
    /// `v̄(x, t)`, `t >= 0`.
    pub fn v_at(&self, x: &[f64], t: f64) -> f64 {
        riesz_lifted(&self.density, &origin(self.params.n), self.r, x, t, &self.params, self.normalizer, INNER_TOL)
            .unwrap_or(f64::NAN)
    }

    /// `w̄(x, t)`; at `t = 0` this is `u - v`.
    pub fn w_at(&self, x: &[f64], t: f64) -> f64 {
        let ub = if t == 0.0 { self.base.eval(x) } else { self.ext.kernel.clone().with_tol(INNER_TOL).extend_at(&self.base, x, t) };
        ub - self.v_at(x, t)
    }
}

/// `v̄ = C ∫_{B_r} e^u (|x-y|^2 + t^2)^{-(n-2s)/2}`, `w̄ = ū - v̄` on the grid
/// of `ext`, with both Neumann traces checked on `B_{r/2}` away from point
/// singularities.
pub fn decompose(u: &Field, ext: &ExtensionField, r: f64, p: &Params) -> Result<Decomposition> {
    let n = p.n;
    if !(r > 0.0) || !u.contains_ball(&origin(n), r) {
        return Err(Error::OutsideDomain(format!("B_{r} is not inside the sampled region")));
    }
    if ext.x_nodes.is_empty() {
        return Err(Error::InvalidParams("decomposition needs an extension grid".into()));
    }
    let consts = constants(p)?;
    let big_c = consts
        .c_ns_riesz
        .ok_or_else(|| Error::InvalidParams(format!("decomposition needs n > 2s (n={n}, s={})", p.s)))?;
    let density = exp_field(u);
    let nt = ext.t_nodes.len();
    let o = origin(n);
    let tol = Tol::new(1e-14, 1e-11, 400);
    let v_bar: Vec<f64> = (0..ext.values.len())
        .into_par_iter()
        .map(|k| riesz_lifted(&density, &o, r, &ext.x_nodes[k / nt], ext.t_nodes[k % nt], p, big_c, tol))
        .collect::<Result<_>>()?;
    let w_bar: Vec<f64> = ext.values.iter().zip(&v_bar).map(|(a, b)| a - b).collect();

    let points: Vec<Sphere> = u.features().iter().filter(|sp| sp.radius == 0.0).cloned().collect();
    let keep = |x: &[f64]| {
        norm(x) <= 0.5 * r * (1.0 + 1e-12)
            && u.eval(x).is_finite()
            && points.iter().all(|sp| dist(x, &sp.center) >= 0.1 * r)
    };
    let kappa = consts.kappa_s;
    let checked: Vec<Point> = ext.x_nodes.iter().filter(|x| keep(x)).cloned().collect();
    let traces = if checked.is_empty() {
        DecompositionTraces { v_trace_residual: 0.0, w_trace: 0.0, checked_nodes: 0, certificate: 0.0, min_v_bar: 0.0 }
    } else {
        let mut ev = ext.clone();
        ev.values = v_bar.clone();
        let tv = neumann_trace_on(&ev, p, &keep)?;
        let tu = neumann_trace_on(ext, p, &keep)?;
        let emax = checked.iter().map(|x| density.eval(x)).fold(0.0, f64::max);
        let scale = (kappa * emax).max(f64::MIN_POSITIVE);
        let mut vr: f64 = 0.0;
        let mut wr: f64 = 0.0;
        for ((x, a), b) in tv.x_nodes.iter().zip(&tv.values).zip(&tu.values) {
            vr = vr.max((a - kappa * density.eval(x)).abs() / scale);
            wr = wr.max((b - a).abs() / scale);
        }
        DecompositionTraces {
            v_trace_residual: vr,
            w_trace: wr,
            checked_nodes: checked.len(),
            certificate: tv.certificate.max(tu.certificate),
            min_v_bar: 0.0,
        }
    };
    let min_v_bar = v_bar.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Decomposition {
        base: u.clone(),
        density,
        ext: ext.clone(),
        r,
        params: *p,
        normalizer: big_c,
        v_bar,
        w_bar,
        traces: DecompositionTraces { min_v_bar, ..traces },
    })
}

// ---------------------------------------------------------------- Harnack

fn harnack_rule(p: &Params) -> Vec<HalfBallNode> {
    half_ball_rule(p.n, p.weight_exponent(), 3, 8)
}

fn scaled_half_ball(rule: &[HalfBallNode], x: &[f64], rho: f64, f: &(dyn Fn(&[f64], f64) -> f64 + Sync)) -> f64 {
    let vals: Vec<(f64, f64)> = rule
        .par_iter()
        .map(|nd| {
            let y: Point = x.iter().zip(&nd.y).map(|(a, b)| a + rho * b).collect();
            (nd.weight, f(&y, rho * nd.t))
        })
        .collect();
    weighted_sum(&vals)
}

/// `ρ^{2s-n-2} ∫_{D_ρ(x)} t^{1-2s} e^{w̄}`.
pub fn harnack_ratio(dec: &Decomposition, x: &[f64], rho: f64, p: &Params) -> Result<f64> {
    if x.len() != p.n {
        return Err(Error::InvalidParams("point has the wrong dimension".into()));
    }
    let big_r = dec.r - norm(x);
    if !(rho > 0.0 && rho < big_r) {
        return Err(Error::Radius(format!("ρ = {rho} must lie in (0, r - |x|) = (0, {big_r})")));
    }
    // the rule is scale-free: the ρ-powers cancel against the Jacobian
    Ok(scaled_half_ball(&harnack_rule(p), x, rho, &|y, t| dec.w_at(y, t)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub x: Point,
    pub rhos: Vec<f64>,
    pub ratios: Vec<f64>,
    pub c_s: f64,
    /// `c_s e^{w(x)}`.
    pub lower_bound: f64,
    /// `R^{2s-n-2} ∫_{D_R(x)} t^{1-2s} e^{ū}` with `R` just inside `r - |x|`.
    pub upper_bound: f64,
    pub monotone: bool,
    pub above_lower_bound: bool,
}

/// [`harnack_ratio`] along increasing `rhos`, with the two-sided bound.
pub fn harnack_sequence(dec: &Decomposition, x: &[f64], rhos: &[f64], p: &Params) -> Result<HarnackReport> {
    let mut rhos = rhos.to_vec();
    rhos.sort_by(f64::total_cmp);
    let ratios: Vec<f64> = rhos.iter().map(|&r| harnack_ratio(dec, x, r, p)).collect::<Result<_>>()?;
    let c_s = constants(p)?.c_s;
    let lower_bound = c_s * dec.w_at(x, 0.0).exp();
    let big_r = (dec.r - norm(x)) * (1.0 - 1e-9);
    let ext = dec.ext.kernel.clone().with_tol(INNER_TOL);
    let upper_bound = scaled_half_ball(&harnack_rule(p), x, big_r, &|y, t| ext.extend_at(&dec.base, y, t));
    let slack = HARNACK_SLACK * c_s;
    let monotone = ratios.windows(2).all(|w| w[1] >= w[0] - slack);
    let above_lower_bound = ratios.iter().all(|&v| v >= lower_bound - slack);
    Ok(HarnackReport { x: x.to_vec(), rhos, ratios, c_s, lower_bound, upper_bound, monotone, above_lower_bound })
}

// ---------------------------------------------------------------- Jensen

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenReport {
    pub alpha: f64,
    /// `∫_{D_{1/2}} t^{1-2s} e^{α ū}`.
    pub lhs: f64,
    /// `‖e^{αu}‖_{L^1(B_1)}`.
    pub rhs_linear: f64,
    /// `‖e^{αu}‖_{L^1(B_1)}^δ`.
    pub rhs_delta: f64,
    pub delta_used: f64,
    /// `lhs / (rhs_linear + rhs_delta)`.
    pub measured_constant: f64,
}

/// Jensen-type bound with `δ` taken from [`delta_certificate`].
pub fn jensen_bound_check(u: &Field, ext: &ExtensionField, alpha: f64, p: &Params) -> Result<JensenReport> {
    let delta = delta_certificate(p)?.delta;
    jensen_bound_check_with(u, ext, alpha, delta, p)
}

pub fn jensen_bound_check_with(u: &Field, ext: &ExtensionField, alpha: f64, delta: f64, p: &Params) -> Result<JensenReport> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("α = {alpha} must be positive")));
    }
    let o = origin(p.n);
    let rhs_linear = lp_ball_norm(u, alpha, &o, 1.0, true)?;
    let kernel = ext.kernel.clone().with_tol(INNER_TOL);
    let half = 0.5f64;
    let scale = half.powf(p.dim() + 1.0 + p.weight_exponent());
    let lhs = scale * scaled_half_ball(&harnack_rule(p), &o, half, &|y, t| alpha * kernel.extend_at(u, y, t));
    if !lhs.is_finite() {
        return Err(Error::Overflow(format!("∫ t^a e^(α ū) over D_1/2 is {lhs}")));
    }
    let rhs_delta = rhs_linear.powf(delta);
    let den = rhs_linear + rhs_delta;
    let measured_constant = if den > 0.0 { lhs / den } else { 0.0 };
    Ok(JensenReport { alpha, lhs, rhs_linear, rhs_delta, delta_used: delta, measured_constant })
}

// ---------------------------------------------------------------- L^2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Report {
    pub r: f64,
    /// `‖v‖_{L^2(B_r)}`.
    pub v_norm: f64,
    /// `‖t^{(1-2s)/2} v̄‖_{L^2(D_r)}`.
    pub v_bar_norm: f64,
    pub lhs: f64,
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    pub interpolation_p: f64,
    /// `‖e^u‖_{L^1}^γ ‖e^u‖_{L^2}^{1-γ}`.
    pub rhs: f64,
    pub measured_constant: f64,
}

pub fn l2_estimate_check(u: &Field, dec: &Decomposition, r: f64, p: &Params) -> Result<L2Report> {
    let o = origin(p.n);
    if !(r > 0.0) || !u.contains_ball(&o, r) {
        return Err(Error::OutsideDomain(format!("B_{r} is not inside the sampled region")));
    }
    let pts = ball_rule(p.n, &o, r, 3, 10);
    // collect before summing so the result does not depend on the thread count
    let v_sq: f64 = pts.par_iter().map(|(x, w)| w * dec.v_at(x, 0.0).powi(2)).collect::<Vec<_>>().iter().sum();
    let scale = r.powf(p.dim() + 1.0 + p.weight_exponent());
    let rule = harnack_rule(p);
    let vb_sq: f64 = rule
        .par_iter()
        .map(|nd| {
            let y: Point = nd.y.iter().map(|v| r * v).collect();
            nd.weight * dec.v_at(&y, r * nd.t).powi(2)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * scale;
    let v_norm = v_sq.sqrt();
    let v_bar_norm = vb_sq.sqrt();
    let l1 = lp_ball_norm(u, 1.0, &o, r, true)?;
    let l2 = lp_ball_norm(u, 2.0, &o, r, true)?.sqrt();
    let gamma = l2_gamma(L2_INTERPOLATION_P);
    let rhs = l1.powf(gamma) * l2.powf(1.0 - gamma);
    let lhs = v_norm + v_bar_norm;
    let measured_constant = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(L2Report { r, v_norm, v_bar_norm, lhs, l1, l2, gamma, interpolation_p: L2_INTERPOLATION_P, rhs, measured_constant })
}

// ---------------------------------------------------------------- Morrey–Riesz

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorreyRieszReport {
    pub delta: f64,
    /// `max_{x ∈ B_1} ∫_{B_1} |x-y|^{2s-n} |f|` over lattice points.
    pub lhs: f64,
    pub argmax: Point,
    pub morrey: MorreyDatum,
    /// `2^δ + (n - 2s) 2^δ / δ`.
    pub proof_constant: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn riesz_morrey_constant(p: &Params, delta: f64) -> f64 {
    let d = 2f64.powf(delta);
    d + (p.dim() - 2.0 * p.s) * d / delta
}

pub fn riesz_morrey_check(f: &Field, delta: f64, p: &Params) -> Result<MorreyRieszReport> {
    if !(delta > 0.0 && delta < 2.0 * p.s) {
        return Err(Error::InvalidParams(format!("δ = {delta} must lie in (0, 2s)")));
    }
    let o = origin(p.n);
    if !f.contains_ball(&o, 3.0) {
        return Err(Error::OutsideDomain("B_3 is not inside the sampled region".into()));
    }
    let me = f.clone();
    let af = f.with_evaluator(Tail::Zero, move |x| me.eval(x).abs());
    let mut centres: Vec<Point> = f.nodes().into_iter().filter(|x| norm(x) <= 1.0 + 1e-12).collect();
    if centres.is_empty() {
        centres.push(o.clone());
    }
    let vals: Vec<f64> = centres.par_iter().map(|x| riesz_potential(&af, &o, 1.0, x, p, 1.0)).collect::<Result<_>>()?;
    let (k, lhs) = vals.iter().cloned().enumerate().fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let morrey = morrey_norm(f, p.dim() / (2.0 * p.s - delta), 3.0);
    let proof_constant = riesz_morrey_constant(p, delta);
    let rhs = proof_constant * morrey.norm_value;
    let slack = rhs - lhs;
    let holds = lhs <= rhs * (1.0 + 1e-9) + 1e-12;
    Ok(MorreyRieszReport { delta, lhs, argmax: centres[k].clone(), morrey, proof_constant, rhs, slack, holds })
}

// ---------------------------------------------------------------- u1 + u2

#[derive(Debug, Clone)]
pub struct Split {
    pub u1: Field,
    pub u2: Field,
    pub checked_points: Vec<Point>,
    /// `max |(-Δ)^s u2| / max e^u` over the checked points.
    pub harmonicity_residual: f64,
    /// `max |(-Δ)^s u - e^u| / max e^u`; bounds the residual from below
    /// whenever `u` is not a solution.
    pub equation_defect: f64,
    /// `max |u1 + u2 - u|` over the lattice.
    pub reconstruction_error: f64,
}

/// Split on the lattice points of `B_{1/4}` where `u` is finite.
pub fn u1_u2_split(u: &Field, p: &Params) -> Result<Split> {
    let pts: Vec<Point> = u.nodes().into_iter().filter(|x| norm(x) <= 0.25 + 1e-12 && u.eval(x).is_finite()).collect();
    u1_u2_split_on(u, p, &pts)
}

pub fn u1_u2_split_on(u: &Field, p: &Params, points: &[Point]) -> Result<Split> {
    let n = p.n;
    let o = origin(n);
    if !u.contains_ball(&o, 0.5) {
        return Err(Error::OutsideDomain("B_1/2 is not inside the sampled region".into()));
    }
    let c = constants(p)?
        .c_ns_fund
        .ok_or_else(|| Error::InvalidParams(format!("the split needs n > 2s (n={n}, s={})", p.s)))?;
    let density = exp_field(u);
    let u1_eval = {
        let d = density.clone();
        let o = o.clone();
        let p = *p;
        move |x: &[f64]| riesz_lifted(&d, &o, 0.5, x, 0.0, &p, c, INNER_TOL).unwrap_or(f64::NAN)
    };
    let nodes = u.nodes();
    let u1_vals: Vec<f64> = nodes.par_iter().map(|x| u1_eval(x)).collect();
    let mut feats = u.features().to_vec();
    feats.push(Sphere::new(o.clone(), 0.5));
    let about_origin = u.radial_center().is_some_and(|q| norm(q) <= 1e-14);
    let tidy = |f: Field| {
        let f = f.with_features(feats.clone());
        if about_origin { f.with_radial_center(o.clone()) } else { f.without_radial_center() }
    };
    let u1f = u1_eval.clone();
    let u1 = tidy(u.with_evaluator_values(Tail::Zero, u1_vals.clone(), move |x| u1f(x))?);
    let u2_vals: Vec<f64> = u.values().iter().zip(&u1_vals).map(|(a, b)| a - b).collect();
    let base = u.clone();
    let u2 = tidy(u.with_evaluator_values(u.tail(), u2_vals.clone(), move |x| base.eval(x) - u1_eval(x))?);
    let reconstruction_error = u
        .values()
        .iter()
        .zip(u1_vals.iter().zip(&u2_vals))
        .filter(|(a, _)| a.is_finite())
        .map(|(a, (b, d))| (b + d - a).abs())
        .fold(0.0, f64::max);

    let scheme = PvQuadratureScheme { rel_tol: 1e-7, ..PvQuadratureScheme::for_field(u) };
    let fl2: Vec<f64> = points.par_iter().map(|x| frac_laplacian(&u2, x, p, &scheme)).collect::<Result<_>>()?;
    let fl: Vec<f64> = points.par_iter().map(|x| frac_laplacian(u, x, p, &scheme)).collect::<Result<_>>()?;
    let emax = points.iter().map(|x| density.eval(x)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let harmonicity_residual = fl2.iter().map(|v| v.abs()).fold(0.0, f64::max) / emax;
    let equation_defect = points.iter().zip(&fl).map(|(x, v)| (v - density.eval(x)).abs()).fold(0.0, f64::max) / emax;
    Ok(Split { u1, u2, checked_points: points.to_vec(), harmonicity_residual, equation_defect, reconstruction_error })
}

// ---------------------------------------------------------------- detector

/// Box-counting dimension, or `Empty` for an empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxDimension {
    Empty,
    Value(f64),
}

impl BoxDimension {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoxDimension::Empty => None,
            BoxDimension::Value(v) => Some(*v),
        }
    }
}

impl Serialize for BoxDimension {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BoxDimension::Empty => s.serialize_str("empty"),
            BoxDimension::Value(v) => s.serialize_f64(*v),
        }
    }
}

/// Least-squares slope of `log N(ℓ)` against `log(1/ℓ)`, with boxes
/// anchored at the componentwise minimum of the set. A set whose count
/// does not change over the scales (a finite set) has dimension 0.
pub fn box_dimension(points: &[Point], scales: &[f64]) -> Result<BoxDimension> {
    let mut ls: Vec<f64> = scales.to_vec();
    ls.sort_by(f64::total_cmp);
    ls.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if ls.len() < 3 || ls.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::DegenerateFit(format!("box counting needs three positive scales, got {}", ls.len())));
    }
    if points.is_empty() {
        return Ok(BoxDimension::Empty);
    }
    let n = points[0].len();
    let anchor: Vec<f64> = (0..n).map(|d| points.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min)).collect();
    let counts: Vec<f64> = ls
        .iter()
        .map(|&l| {
            let boxes: BTreeSet<Vec<i64>> = points
                .iter()
                .map(|x| x.iter().zip(&anchor).map(|(a, b)| ((a - b) / l + 1e-9).floor() as i64).collect())
                .collect();
            boxes.len() as f64
        })
        .collect();
    if counts.windows(2).all(|w| w[0] == w[1]) {
        return Ok(BoxDimension::Value(0.0));
    }
    let xs: Vec<f64> = ls.iter().map(|l| -l.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(BoxDimension::Value((sxy / sxx).max(0.0)))
}

/// `r^{2ps-n} ∫_{B_r(x)} e^{p u}`.
pub fn scaled_mass(u: &Field, x: &[f64], r: f64, p_exponent: f64, p: &Params) -> f64 {
    ln_scaled_mass(u, x, r, p_exponent, p).exp()
}

fn ln_scaled_mass(u: &Field, x: &[f64], r: f64, p_exponent: f64, p: &Params) -> f64 {
    let l = ln_exp_ball_integral(u, p_exponent, x, r, Tol::new(1e-300, 1e-9, 300));
    l + (2.0 * p_exponent * p.s - p.dim()) * r.ln()
}

/// `h 2^k` for `k = -6..=1`.
pub fn default_scales(u: &Field) -> Vec<f64> {
    let h = u.spacing();
    (-6..=1).map(|k| h * 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedPoint {
    pub x: Point,
    /// Smallest tested scale; the mass exceeds the threshold at every scale.
    pub min_violating_scale: f64,
    /// Smallest scaled mass over the tested scales.
    pub min_scaled_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSetReport {
    pub flagged: Vec<FlaggedPoint>,
    pub p_exponent: f64,
    pub epsilon_p: f64,
    pub scales: Vec<f64>,
    pub box_scales: Vec<f64>,
    pub box_dimension: BoxDimension,
    pub dimension_method: String,
}

impl SingularSetReport {
    pub fn flagged_points(&self) -> Vec<Point> {
        self.flagged.iter().map(|f| f.x.clone()).collect()
    }

    pub fn to_csv(&self, n: usize) -> String {
        let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
        out.push_str("min_violating_scale\n");
        for f in &self.flagged {
            for v in &f.x {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", f.min_violating_scale);
        }
        out
    }
}

/// Flag every lattice point whose scaled `e^{pu}`-mass exceeds `epsilon_p`
/// at every tested scale. Only points whose largest ball lies in the sampled
/// region are tested; radial profiles are also tested at the origin.
pub fn detect_singular(u: &Field, p_exponent: f64, epsilon_p: f64, scales: &[f64], p: &Params) -> Result<SingularSetReport> {
    if scales.is_empty() {
        return Err(Error::EmptyScales);
    }
    if !(1.0..5.0).contains(&p_exponent) {
        return Err(Error::InvalidParams(format!("exponent p = {p_exponent} must lie in [1, 5)")));
    }
    if !(epsilon_p > 0.0) {
        return Err(Error::InvalidParams(format!("threshold {epsilon_p} must be positive")));
    }
    let mut sc = scales.to_vec();
    if sc.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParams("scales must be positive".into()));
    }
    sc.sort_by(f64::total_cmp);
    let top = *sc.last().unwrap();
    let mut nodes = u.nodes();
    // a radial profile has no node at its centre of symmetry
    if u.is_radial_mode() {
        nodes.insert(0, origin(p.n));
    }
    let candidates: Vec<Point> = nodes.into_iter().filter(|x| u.contains_ball(x, top)).collect();
    if candidates.is_empty() {
        return Err(Error::OutsideDomain(format!("no lattice point admits a ball of radius {top}")));
    }
    let ln_eps = epsilon_p.ln();
    let flagged: Vec<FlaggedPoint> = candidates
        .par_iter()
        .filter_map(|x| {
            let mut lowest = f64::INFINITY;
            // the smallest scale rejects smooth points fastest
            for &r in &sc {
                let l = ln_scaled_mass(u, x, r, p_exponent, p);
                if !(l > ln_eps) {
                    return None;
                }
                lowest = lowest.min(l);
            }
            Some(FlaggedPoint { x: x.clone(), min_violating_scale: sc[0], min_scaled_mass: lowest.exp() })
        })
        .collect();
    let h = u.spacing();
    let mut box_scales: Vec<f64> = sc.iter().cloned().filter(|&r| r >= h * (1.0 - 1e-9)).collect();
    if box_scales.len() < 3 {
        box_scales = vec![h, 2.0 * h, 4.0 * h];
    }
    let pts: Vec<Point> = flagged.iter().map(|f| f.x.clone()).collect();
    let box_dimension = box_dimension(&pts, &box_scales)?;
    Ok(SingularSetReport {
        flagged,
        p_exponent,
        epsilon_p,
        scales: sc,
        box_scales,
        box_dimension,
        dimension_method: "box counting over the lattice (in place of Hausdorff dimension)".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::extension::{default_t_nodes, poisson_extend};
    use crate::nonlocal::calibrate_singular_constant;

    fn golden(p: &Params) -> Field {
        let lam = calibrate_singular_constant(p).unwrap().lambda;
        corpus::log_profile(p, lam.ln(), corpus::default_lattice(p.n)).unwrap()
    }

    #[test]
    fn gamma_from_interpolation() {
        assert!((l2_gamma(2.2) - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn box_counting() {
        assert_eq!(box_dimension(&[], &[1.0, 2.0, 4.0]).unwrap(), BoxDimension::Empty);
        assert_eq!(box_dimension(&[vec![0.5, 0.5]], &[1.0, 2.0, 4.0]).unwrap(), BoxDimension::Value(0.0));
        assert!(box_dimension(&[vec![0.5]], &[1.0, 2.0]).is_err());
        let h = 1.0 / 64.0;
        let line: Vec<Point> = (0..257).map(|i| vec![i as f64 * h, 0.25]).collect();
        let d = box_dimension(&line, &[h, 2.0 * h, 4.0 * h, 8.0 * h]).unwrap().value().unwrap();
        assert!((d - 1.0).abs() < 0.1, "{d}");
        assert_eq!(serde_json::to_string(&BoxDimension::Empty).unwrap(), "\"empty\"");
    }

    #[test]
    fn riesz_morrey_constant_field() {
        let p = Params::new(1, 0.4).unwrap();
        let one = corpus::constant(&p, 1.0).unwrap();
        let r = riesz_morrey_check(&one, 0.2, &p).unwrap();
        // max at the centre: 2 / (2s)
        assert!((r.lhs - 2.0 / 0.8).abs() < 1e-6, "{}", r.lhs);
        assert!(r.holds && r.slack > 0.0);
        let zero = corpus::constant(&p, 0.0).unwrap();
        let z = riesz_morrey_check(&zero, 0.2, &p).unwrap();
        assert!(z.lhs == 0.0 && z.rhs == 0.0 && z.holds);
        assert!(riesz_morrey_check(&one, 0.8, &p).is_err());
    }

    #[test]
    fn detector_on_golden_and_smooth() {
        let p = Params::new(1, 0.09).unwrap();
        let g = golden(&p);
        let sc = default_scales(&g);
        let rep = detect_singular(&g, 2.0, DEFAULT_EPSILON_P, &sc, &p).unwrap();
        assert_eq!(rep.flagged_points(), vec![vec![0.0]]);
        assert!(rep.box_dimension.value().unwrap() <= 0.1);
        // scale-free mass at the singular point: λ^2 |S^0| / (1 - 4s)
        let lam = calibrate_singular_constant(&p).unwrap().lambda;
        let m = scaled_mass(&g, &[0.0], sc[3], 2.0, &p);
        assert!((m - 2.0 * lam * lam / 0.64).abs() < 1e-6 * m, "{m}");
        let zero = corpus::constant(&p, 0.0).unwrap();
        let z = detect_singular(&zero, 2.0, DEFAULT_EPSILON_P, &sc, &p).unwrap();
        assert!(z.flagged.is_empty() && z.box_dimension == BoxDimension::Empty);
        assert!(matches!(detect_singular(&zero, 2.0, 1.0, &[], &p), Err(Error::EmptyScales)));
    }

    #[test]
    fn decomposition_of_a_cold_field() {
        let p = Params::new(1, 0.25).unwrap();
        let u = corpus::constant(&p, -40.0).unwrap();
        let ext = poisson_extend(&u, &p, &default_t_nodes(&u)).unwrap();
        let d = decompose(&u, &ext, 0.5, &p).unwrap();
        assert!(d.v_bar.iter().all(|&v| v > 0.0 && v < 1e-15));
        assert!(d.w_bar.iter().zip(&ext.values).all(|(w, u)| w <= u && (w - u).abs() < 1e-13));
    }

    #[test]
    fn harnack_on_constants() {
        // w̄ ≡ c exactly when v̄ is negligible
        let p = Params::new(1, 0.25).unwrap();
        let u = corpus::constant(&p, -40.0).unwrap();
        let ext = poisson_extend(&u, &p, &default_t_nodes(&u)).unwrap();
        let d = decompose(&u, &ext, 0.9, &p).unwrap();
        let c_s = constants(&p).unwrap().c_s;
        let rep = harnack_sequence(&d, &[0.1], &[0.05, 0.2], &p).unwrap();
        for v in &rep.ratios {
            assert!((v / (c_s * (-40f64).exp()) - 1.0).abs() < 1e-6, "{v}");
        }
        assert!(matches!(harnack_ratio(&d, &[0.5], 0.5, &p), Err(Error::Radius(_))));
    }

    #[test]
    fn jensen_on_zero() {
        let p = Params::new(1, 0.5).unwrap();
        let u = corpus::constant(&p, 0.0).unwrap();
        let ext = ExtensionField::kernel_only(&u, &p).unwrap();
        let r = jensen_bound_check_with(&u, &ext, 1.0, 0.5, &p).unwrap();
        // lhs = c_s 2^{-(n+2-2s)}, rhs = |B_1| (1 + 1)
        let c_s = constants(&p).unwrap().c_s;
        assert!((r.lhs - c_s / 4.0).abs() < 1e-6, "{}", r.lhs);
        assert!((r.rhs_linear - 2.0).abs() < 1e-9 && (r.rhs_delta - 2f64.sqrt()).abs() < 1e-9);
        assert!(r.measured_constant < 1.0);
    }

    #[test]
    fn detector_equivariance_and_monotonicity() {
        let p = Params::new(1, 0.09).unwrap();
        let lam = calibrate_singular_constant(&p).unwrap().lambda;
        let shifted = corpus::log_profile_at(&p, lam.ln(), vec![0.5], corpus::default_lattice(1)).unwrap();
        let g = golden(&p);
        let sc = default_scales(&g);
        let a = detect_singular(&shifted, 2.0, DEFAULT_EPSILON_P, &sc, &p).unwrap();
        assert_eq!(a.flagged_points(), vec![vec![0.5]]);
        // a lower threshold can only add points
        let lo = detect_singular(&g, 2.0, 1.0, &sc, &p).unwrap();
        let hi = detect_singular(&g, 2.0, DEFAULT_EPSILON_P, &sc, &p).unwrap();
        let lo_set: Vec<Point> = lo.flagged_points();
        assert!(hi.flagged_points().iter().all(|x| lo_set.contains(x)));
        assert!(a.to_csv(1).starts_with("x1,min_violating_scale\n0.5,"));
    }

    #[test]
    fn scaled_mass_under_rescaling() {
        // M(u^λ, x, r) = M(u, x0 + λx, λr)
        let p = Params::new(1, 0.3).unwrap();
        let u = corpus::bump(&p).unwrap();
        let (x0, lam) = (0.3, 0.5);
        let ul = crate::field::rescale(&u, &[x0], lam, &p).unwrap();
        for &(x, r) in &[(0.2, 0.25), (-0.4, 0.1)] {
            let a = scaled_mass(&ul, &[x], r, 2.0, &p);
            let b = scaled_mass(&u, &[x0 + lam * x], lam * r, 2.0, &p);
            assert!((a - b).abs() < 1e-8 * b, "{a} {b}");
        }
    }

    #[test]
    fn golden_decomposition_and_split() {
        let p = Params::new(1, 0.09).unwrap();
        let g = golden(&p);
        let ext = poisson_extend(&g, &p, &default_t_nodes(&g)).unwrap();
        let d = decompose(&g, &ext, 0.9, &p).unwrap();
        assert!(d.traces.w_trace < 1e-2 && d.traces.v_trace_residual < 1e-2, "{:?}", d.traces);
        assert!(d.traces.min_v_bar > 0.0);
        let h = harnack_sequence(&d, &[0.2], &[0.05, 0.1, 0.2, 0.4], &p).unwrap();
        assert!(h.monotone && h.above_lower_bound && h.ratios[3] <= h.upper_bound, "{h:?}");
        let s = u1_u2_split_on(&g, &p, &[vec![0.125], vec![-0.25]]).unwrap();
        assert!(s.harmonicity_residual < SPLIT_TOLERANCE, "{}", s.harmonicity_residual);
        assert!(s.reconstruction_error < 1e-12);
    }

    #[test]
    fn split_residual_is_the_equation_defect() {
        let p = Params::new(1, 0.25).unwrap();
        let u = corpus::bump(&p).unwrap();
        let s = u1_u2_split_on(&u, &p, &[vec![0.0], vec![0.25]]).unwrap();
        assert!((s.harmonicity_residual - s.equation_defect).abs() < 1e-6, "{} {}", s.harmonicity_residual, s.equation_defect);
    }

    #[test]
    fn l2_constant_is_amplitude_free() {
        let p = Params::new(1, 0.25).unwrap();
        let mut cs = Vec::new();
        for c in [-2.0, 0.0, 2.0] {
            let u = corpus::constant(&p, c).unwrap();
            let ext = poisson_extend(&u, &p, &default_t_nodes(&u)).unwrap();
            let d = decompose(&u, &ext, 0.5, &p).unwrap();
            cs.push(l2_estimate_check(&u, &d, 0.5, &p).unwrap().measured_constant);
        }
        let (lo, hi) = cs.iter().fold((f64::INFINITY, 0.0f64), |a, &c| (a.0.min(c), a.1.max(c)));
        assert!(hi / lo < 2.0, "{cs:?}");
        let cold = corpus::constant(&p, -40.0).unwrap();
        let ext = poisson_extend(&cold, &p, &default_t_nodes(&cold)).unwrap();
        let d = decompose(&cold, &ext, 0.5, &p).unwrap();
        let r = l2_estimate_check(&cold, &d, 0.5, &p).unwrap();
        assert!(r.lhs < 1e-15 && r.rhs < 1e-15);
    }
}
