//! Stability margins: the Gagliardo form against `∫ e^u φ^2`, the
//! extended-variable version, and the Farina-type estimate with weight
//! `e^{2αū}`. Verdicts are relative to a fixed test-function family.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{constants, Params};
use crate::error::{Error, Result};
use crate::extension::ExtensionField;
use crate::field::{Field, Lattice, Tail};
use crate::geometry::{ball_integral, dist, sphere_rule, Integrand, Point, Sphere};
use crate::nonlocal::gagliardo_form;
use crate::quad::{graded_rule, integrate, Tol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    /// `(1 - |x-c|/R)_+`
    Tent,
    /// `(1 - |x-c|^2/R^2)_+^3`
    Bump,
    /// 1 on `B_{R/2}(c)`, quintic smoothstep down to 0 at `R`.
    Plateau,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Tent, TestKind::Bump, TestKind::Plateau];

    pub fn label(&self) -> &'static str {
        match self {
            TestKind::Tent => "tent",
            TestKind::Bump => "bump",
            TestKind::Plateau => "plateau",
        }
    }
}

fn smoothstep(z: f64) -> (f64, f64, f64) {
    let z = z.clamp(0.0, 1.0);
    (z * z * z * (10.0 - 15.0 * z + 6.0 * z * z), 30.0 * z * z * (1.0 - z) * (1.0 - z), 60.0 * z * (1.0 - z) * (1.0 - 2.0 * z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestKind,
    pub center: Point,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(kind: TestKind, center: Point, radius: f64) -> Self {
        Self { kind, center, radius }
    }

    pub fn id(&self) -> String {
        let c: Vec<String> = self.center.iter().map(|v| format!("{v}")).collect();
        format!("{}(c=[{}],R={})", self.kind.label(), c.join(","), self.radius)
    }

    fn plateau_radius(&self) -> f64 {
        0.5 * self.radius
    }

    /// Radial profile `f(ρ), f'(ρ), f''(ρ)`.
    pub fn profile(&self, rho: f64) -> (f64, f64, f64) {
        let r = self.radius;
        if rho >= r {
            return (0.0, 0.0, 0.0);
        }
        match self.kind {
            TestKind::Tent => (1.0 - rho / r, -1.0 / r, 0.0),
            TestKind::Bump => {
                let q = rho / r;
                let a = 1.0 - q * q;
                (a * a * a, -6.0 * q * a * a / r, -6.0 * a * (1.0 - 5.0 * q * q) / (r * r))
            }
            TestKind::Plateau => {
                let a = self.plateau_radius();
                if rho <= a {
                    return (1.0, 0.0, 0.0);
                }
                let w = r - a;
                let (s, s1, s2) = smoothstep((r - rho) / w);
                (s, -s1 / w, s2 / (w * w))
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile(dist(x, &self.center)).0
    }

    pub fn grad_sq(&self, x: &[f64]) -> f64 {
        self.profile(dist(x, &self.center)).1.powi(2)
    }

    /// Absolutely continuous part of `Δ(φ^2)`.
    pub fn laplacian_sq(&self, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let rho = dist(x, &self.center);
        let (f, f1, f2) = self.profile(rho);
        let radial = if rho > 0.0 {
            2.0 * f * f1 / rho
        } else {
            match self.kind {
                // f'/ρ → f''(0) for even profiles
                TestKind::Bump | TestKind::Plateau => 2.0 * f * f2,
                TestKind::Tent => 0.0,
            }
        };
        2.0 * (f1 * f1 + f * f2) + (n - 1.0) * radial
    }

    /// Weight of `δ_c` in `Δ(φ^2)`: the one-dimensional tent kink.
    pub fn laplacian_sq_atom(&self) -> f64 {
        match (self.kind, self.center.len()) {
            (TestKind::Tent, 1) => -4.0 / self.radius,
            _ => 0.0,
        }
    }

    pub fn features(&self) -> Vec<Sphere> {
        let c = self.center.clone();
        match self.kind {
            TestKind::Tent => vec![Sphere::point(c.clone()), Sphere::new(c, self.radius)],
            TestKind::Bump => vec![Sphere::new(c, self.radius)],
            TestKind::Plateau => vec![Sphere::new(c.clone(), self.plateau_radius()), Sphere::new(c, self.radius)],
        }
    }

    pub fn to_field(&self, lattice: Lattice) -> Result<Field> {
        let me = self.clone();
        let f = Field::from_fn(lattice, Tail::Zero, move |x| me.value(x))?;
        Ok(f.with_radial_center(self.center.clone()).with_features(self.features()))
    }
}

/// `η(t) = 1` for `t <= a`, quintic smoothstep down to 0 at `t = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
}

impl Cutoff {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b > a) {
            return Err(Error::InvalidParams(format!("cutoff needs 0 <= a < b, got a={a} b={b}")));
        }
        Ok(Self { a, b })
    }

    /// `(η, η', η'')`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.a {
            return (1.0, 0.0, 0.0);
        }
        if t >= self.b {
            return (0.0, 0.0, 0.0);
        }
        let w = self.b - self.a;
        let (s, s1, s2) = smoothstep((self.b - t) / w);
        (s, -s1 / w, s2 / (w * w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub quadratic_term: f64,
    pub potential_term: f64,
    pub margin: f64,
    pub test_function_id: String,
}

impl StabilityReport {
    fn new(quadratic_term: f64, potential_term: f64, id: String) -> Self {
        Self { quadratic_term, potential_term, margin: quadratic_term - potential_term, test_function_id: id }
    }
}

fn check_support(u: &Field, phi: &TestFunction) -> Result<()> {
    if phi.center.len() != u.dim() {
        return Err(Error::InvalidParams("test function and field differ in dimension".into()));
    }
    if !u.contains_ball(&phi.center, phi.radius) {
        return Err(Error::Support(format!("{} leaves the sampled region", phi.id())));
    }
    Ok(())
}

/// `∫ e^{k u} φ^{2}` over the support of `φ`.
fn weighted_potential(u: &Field, phi: &TestFunction, k: f64) -> f64 {
    let mut shift: f64 = f64::NEG_INFINITY;
    for (x, v) in u.samples() {
        if v.is_finite() && dist(&x, &phi.center) < phi.radius {
            shift = shift.max(k * v);
        }
    }
    if !shift.is_finite() {
        shift = 0.0;
    }
    let f = |x: &[f64]| {
        let ph = phi.value(x);
        if ph == 0.0 {
            return 0.0;
        }
        (k * u.eval(x) - shift).exp() * ph * ph
    };
    let mut feats = phi.features();
    feats.extend(u.features().iter().filter(|sp| sp.radius == 0.0).cloned());
    let centre = u.radial_center().filter(|q| dist(q, &phi.center) <= 1e-14);
    let g = Integrand::new(&f, centre, &feats);
    let v = ball_integral(u.dim(), &phi.center, phi.radius, &g, Tol::new(1e-15, 1e-9, 300));
    v * shift.exp()
}

/// `(c/2) ∫∫ (φ(x)-φ(y))^2 / |x-y|^{n+2s}` against `∫ e^u φ^2`.
pub fn stability_margin(u: &Field, phi: &TestFunction, p: &Params) -> Result<StabilityReport> {
    check_support(u, phi)?;
    let q = gagliardo_form(&phi.to_field(lattice_of(u))?, p)?;
    stability_margin_with(u, phi, q)
}

/// As [`stability_margin`] with a precomputed quadratic term.
pub fn stability_margin_with(u: &Field, phi: &TestFunction, quadratic: f64) -> Result<StabilityReport> {
    check_support(u, phi)?;
    Ok(StabilityReport::new(quadratic, weighted_potential(u, phi, 1.0), phi.id()))
}

/// A lattice covering the same region as `u`.
pub fn lattice_of(u: &Field) -> Lattice {
    use crate::field::Layout;
    match u.layout() {
        Layout::Grid { n, half_width, per_axis, .. } => Lattice::Grid { n: *n, half_width: *half_width, per_axis: *per_axis },
        Layout::Radial { n, radii } => {
            Lattice::Radial { n: *n, r_min: radii[0], r_max: *radii.last().unwrap(), count: radii.len() }
        }
    }
}

fn weighted_t_integral<F: Fn(f64) -> f64>(f: F, a: f64, eta: &Cutoff) -> f64 {
    integrate(|t| if t > 0.0 { t.powf(a) * f(t) } else { 0.0 }, 0.0, eta.b, &[eta.a], Tol::new(1e-15, 1e-11, 300)).value
}

/// `∫ t^{1-2s} |∇(φη)|^2` against `κ_s ∫ e^u φ^2`.
pub fn extended_stability_margin(u: &Field, phi: &TestFunction, eta: &Cutoff, p: &Params) -> Result<StabilityReport> {
    check_support(u, phi)?;
    let a = p.weight_exponent();
    let n = p.n;
    let tol = Tol::new(1e-15, 1e-10, 300);
    let feats = phi.features();
    let g1 = |x: &[f64]| phi.grad_sq(x);
    let g0 = |x: &[f64]| phi.value(x).powi(2);
    let grad = ball_integral(n, &phi.center, phi.radius, &Integrand::new(&g1, Some(&phi.center), &feats), tol);
    let mass = ball_integral(n, &phi.center, phi.radius, &Integrand::new(&g0, Some(&phi.center), &feats), tol);
    let e0 = weighted_t_integral(|t| eta.eval(t).0.powi(2), a, eta);
    let e1 = weighted_t_integral(|t| eta.eval(t).1.powi(2), a, eta);
    let lhs = grad * e0 + mass * e1;
    let kappa = constants(p)?.kappa_s;
    Ok(StabilityReport::new(lhs, kappa * weighted_potential(u, phi, 1.0), phi.id()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarinaReport {
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `2 ∫ t^{1-2s} e^{2αū} |∇Φ|^2`
    pub gradient_term: f64,
    /// `-½ ∫ e^{2αū} ∇·[t^{1-2s} ∇Φ^2]`
    pub divergence_term: f64,
    /// `∫ t^{1-2s} e^{2αū} Φ^2`, the scale of the plateau region.
    pub plateau_mass: f64,
    pub test_function_id: String,
}

/// Nodes and weights for `∫_{B_R(c)}` in polar form about `c`.
fn ball_rule(phi: &TestFunction, extra: &[Sphere], panels: usize, m: usize) -> Vec<(Point, f64)> {
    let n = phi.center.len();
    let c = &phi.center;
    let r = phi.radius;
    if n == 1 {
        let mut breaks: Vec<f64> = Vec::new();
        for sp in phi.features().iter().chain(extra) {
            breaks.push(sp.center[0] - sp.radius);
            breaks.push(sp.center[0] + sp.radius);
        }
        return graded_rule(c[0] - r, c[0] + r, &breaks, panels, m).into_iter().map(|(x, w)| (vec![x], w)).collect();
    }
    let radial_breaks: Vec<f64> = phi.features().iter().map(|sp| sp.radius).collect();
    let radial = graded_rule(0.0, r, &radial_breaks, panels, m);
    let dirs = sphere_rule(n, m);
    let mut out = Vec::with_capacity(radial.len() * dirs.len());
    for (rho, wr) in &radial {
        for (d, wd) in &dirs {
            let x: Point = c.iter().zip(d).map(|(ci, di)| ci + rho * di).collect();
            out.push((x, wr * wd * rho.powi(n as i32 - 1)));
        }
    }
    out
}

/// Evaluate both sides of the Farina estimate for every `α` in `alphas`,
/// sharing one tensor rule and one set of `ū` values.
pub fn farina_check(
    u: &Field,
    ext: &ExtensionField,
    phi: &TestFunction,
    eta: &Cutoff,
    alphas: &[f64],
    p: &Params,
) -> Result<Vec<FarinaReport>> {
    check_support(u, phi)?;
    if !(eta.a > 0.0) {
        return Err(Error::CutoffNotFlat);
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 2.0)) {
        return Err(Error::InvalidParams(format!("α = {a} must lie in (0, 2)")));
    }
    let kappa = constants(p)?.kappa_s;
    let a = p.weight_exponent();
    let ext = ext.with_tol(Tol::new(1e-15, 1e-8, 300));
    let point_feats: Vec<Sphere> = u.features().iter().filter(|sp| sp.radius == 0.0).cloned().collect();
    let xr = ball_rule(phi, &point_feats, 4, 10);
    // t = b v^3 flattens the weight and the small-t behaviour of ū
    let vb = (eta.a / eta.b).cbrt();
    let tr: Vec<(f64, f64)> = graded_rule(0.0, 1.0, &[vb], 6, 10)
        .into_iter()
        .map(|(v, w)| (eta.b * v * v * v, w * 3.0 * eta.b * v * v))
        .filter(|(t, _)| *t > 0.0)
        .collect();

    struct Node {
        ubar: f64,
        grad: f64,
        div: f64,
        mass: f64,
    }
    let pairs: Vec<(usize, usize)> = (0..xr.len()).flat_map(|i| (0..tr.len()).map(move |j| (i, j))).collect();
    let nodes: Vec<Node> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, wx) = (&xr[i].0, xr[i].1);
            let (t, wt) = tr[j];
            let (ph, dph, lph2) = (phi.value(x), phi.grad_sq(x), phi.laplacian_sq(x));
            let (e, e1, e2) = eta.eval(t);
            let w = wx * wt;
            let ta = t.powf(a);
            let grad = w * ta * (dph * e * e + ph * ph * e1 * e1);
            // ∇·[t^a ∇(φ^2 η^2)] = t^a η^2 Δφ^2 + φ^2 (t^a (η^2)')'
            let eta2_d1 = 2.0 * e * e1;
            let eta2_d2 = 2.0 * (e1 * e1 + e * e2);
            let div = w * (ta * e * e * lph2 + ph * ph * (a * t.powf(a - 1.0) * eta2_d1 + ta * eta2_d2));
            let mass = w * ta * ph * ph * e * e;
            let ubar = if grad == 0.0 && div == 0.0 && mass == 0.0 { 0.0 } else { ext.value_at(x, t) };
            Node { ubar, grad, div, mass }
        })
        .collect();
    let atom = phi.laplacian_sq_atom();
    let atom_vals: Vec<(f64, f64)> = if atom != 0.0 {
        tr.par_iter().map(|&(t, wt)| (ext.value_at(&phi.center, t), wt * t.powf(a) * eta.eval(t).0.powi(2) * atom)).collect()
    } else {
        Vec::new()
    };
    let top = nodes.iter().map(|nd| nd.ubar).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    alphas
        .iter()
        .map(|&alpha| {
            let k = 2.0 * alpha;
            let shift = if top.is_finite() { k * top } else { 0.0 };
            let (mut g, mut d, mut m) = (0.0, 0.0, 0.0);
            for nd in &nodes {
                let wgt = (k * nd.ubar - shift).exp();
                g += wgt * nd.grad;
                d += wgt * nd.div;
                m += wgt * nd.mass;
            }
            for (ub, w) in &atom_vals {
                d += (k * ub - shift).exp() * w;
            }
            let scale = shift.exp();
            let gradient_term = 2.0 * g * scale;
            let divergence_term = -0.5 * d * scale;
            let rhs = gradient_term + divergence_term;
            let lhs = (2.0 - alpha) * kappa * weighted_potential(u, phi, 1.0 + 2.0 * alpha);
            Ok(FarinaReport {
                alpha,
                lhs,
                rhs,
                slack: rhs - lhs,
                gradient_term,
                divergence_term,
                plateau_mass: m * scale,
                test_function_id: phi.id(),
            })
        })
        .collect()
}

/// Test functions at the given widths and centres.
pub fn family(kind: TestKind, centers: &[Point], widths: &[f64]) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for c in centers {
        for &w in widths {
            out.push(TestFunction::new(kind, c.clone(), w));
        }
    }
    out
}

/// Default sweep: widths `{0.5, 1, 2}`, centres `{-1, -0.5, 0, 0.5, 1} e_1`.
pub fn default_family(n: usize, kind: TestKind) -> Vec<TestFunction> {
    let centers: Vec<Point> = [-1.0, -0.5, 0.0, 0.5, 1.0]
        .iter()
        .map(|&c| {
            let mut x = vec![0.0; n];
            x[0] = c;
            x
        })
        .collect();
    family(kind, &centers, &[0.5, 1.0, 2.0])
}

/// Quadratic terms of a family, computed once and shared across fields.
#[derive(Debug, Clone)]
pub struct FamilyForms {
    pub functions: Vec<TestFunction>,
    pub quadratic: Vec<f64>,
}

impl FamilyForms {
    pub fn new(functions: Vec<TestFunction>, lattice: &Lattice, p: &Params) -> Result<Self> {
        let quadratic = functions
            .par_iter()
            .map(|f| gagliardo_form(&f.to_field(lattice.clone())?, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { functions, quadratic })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySweep {
    pub reports: Vec<StabilityReport>,
    pub centers: Vec<Point>,
    pub widths: Vec<f64>,
    /// Every margin nonnegative; relative to this family only.
    pub stable_on_family: bool,
}

pub fn stability_sweep(u: &Field, forms: &FamilyForms) -> Result<FamilySweep> {
    let reports: Vec<StabilityReport> = forms
        .functions
        .par_iter()
        .zip(&forms.quadratic)
        .map(|(f, q)| stability_margin_with(u, f, *q))
        .collect::<Result<_>>()?;
    let stable_on_family = reports.iter().all(|r| r.margin >= 0.0);
    Ok(FamilySweep {
        reports,
        centers: forms.functions.iter().map(|f| f.center.clone()).collect(),
        widths: forms.functions.iter().map(|f| f.radius).collect(),
        stable_on_family,
    })
}

impl FamilySweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("center,width,margin\n");
        for ((c, w), r) in self.centers.iter().zip(&self.widths).zip(&self.reports) {
            let cs: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{w},{}", cs.join(" "), r.margin);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn tent(c: f64, r: f64) -> TestFunction {
        TestFunction::new(TestKind::Tent, vec![c], r)
    }

    #[test]
    fn profiles_are_consistent() {
        // finite-difference check of f', f''
        for kind in TestKind::ALL {
            let f = TestFunction::new(kind, vec![0.0], 1.5);
            for &r in &[0.2, 0.6, 0.9, 1.2] {
                let h = 1e-5;
                let (v, d1, d2) = f.profile(r);
                let (vp, _, _) = f.profile(r + h);
                let (vm, _, _) = f.profile(r - h);
                assert!(((vp - vm) / (2.0 * h) - d1).abs() < 1e-6, "{kind:?} {r}");
                assert!(((vp - 2.0 * v + vm) / (h * h) - d2).abs() < 1e-3, "{kind:?} {r}");
            }
        }
        let c = Cutoff::new(0.5, 1.5).unwrap();
        assert_eq!(c.eval(0.2), (1.0, 0.0, 0.0));
        assert_eq!(c.eval(2.0), (0.0, 0.0, 0.0));
        let (v, d1, _) = c.eval(1.0);
        assert!((v - 0.5).abs() < 1e-12 && d1 < 0.0);
    }

    #[test]
    fn trivial_margins() {
        let p = Params::new(1, 0.5).unwrap();
        let cold = corpus::constant(&p, -40.0).unwrap();
        let r = stability_margin(&cold, &tent(0.0, 1.0), &p).unwrap();
        assert!(r.potential_term < 1e-15 && (r.margin - r.quadratic_term).abs() < 1e-15 && r.margin > 0.0);
        // tent form at s = 1/2: 4 ln 2 / π
        assert!((r.quadratic_term - 4.0 * 2f64.ln() / std::f64::consts::PI).abs() < 1e-3);
        let zero = stability_margin_with(&cold, &tent(0.0, 1.0), 0.0).unwrap();
        assert_eq!(zero.quadratic_term, 0.0);
        assert!(matches!(stability_margin(&cold, &tent(3.5, 1.0), &p), Err(Error::Support(_))));
        let ext = extended_stability_margin(&cold, &tent(0.0, 1.0), &Cutoff::new(0.5, 1.0).unwrap(), &p).unwrap();
        assert!(ext.margin > 0.0 && ext.potential_term < 1e-15);
    }

    #[test]
    fn margin_scales_quadratically() {
        let p = Params::new(1, 0.3).unwrap();
        let u = corpus::bump(&p).unwrap();
        let f = TestFunction::new(TestKind::Bump, vec![0.2], 1.0);
        let a = stability_margin(&u, &f, &p).unwrap();
        let field2 = f.to_field(lattice_of(&u)).unwrap().affine(2.0, 0.0);
        let q2 = gagliardo_form(&field2, &p).unwrap();
        assert!((q2 / a.quadratic_term - 4.0).abs() < 1e-9);
    }

    #[test]
    fn farina_trivial_cases() {
        let p = Params::new(1, 0.5).unwrap();
        let cold = corpus::constant(&p, -40.0).unwrap();
        let ext = ExtensionField::kernel_only(&cold, &p).unwrap();
        let eta = Cutoff::new(0.5, 1.0).unwrap();
        let r = farina_check(&cold, &ext, &tent(0.0, 1.0), &eta, &[0.5, 1.999], &p).unwrap();
        for x in &r {
            assert!(x.lhs < 1e-30);
            assert!((x.slack - x.rhs).abs() < 1e-30 + 1e-12 * x.rhs.abs());
        }
        assert!(r[1].slack >= -1e-3 * r[1].rhs.abs());
        assert!(matches!(
            farina_check(&cold, &ext, &tent(0.0, 1.0), &Cutoff::new(0.0, 1.0).unwrap(), &[0.5], &p),
            Err(Error::CutoffNotFlat)
        ));
    }

    #[test]
    fn farina_terms_match_adaptive_quadrature() {
        // u ≡ 0: ū ≡ 0, so rhs reduces to explicit integrals of Φ
        let p = Params::new(1, 0.5).unwrap();
        let zero = corpus::constant(&p, 0.0).unwrap();
        let ext = ExtensionField::kernel_only(&zero, &p).unwrap();
        let eta = Cutoff::new(0.3, 1.2).unwrap();
        let f = TestFunction::new(TestKind::Bump, vec![0.0], 1.0);
        let r = &farina_check(&zero, &ext, &f, &eta, &[0.7], &p).unwrap()[0];
        let tol = Tol::new(1e-15, 1e-11, 300);
        let gx = integrate(|x| f.grad_sq(&[x]), -1.0, 1.0, &[], tol).value;
        let mx = integrate(|x| f.value(&[x]).powi(2), -1.0, 1.0, &[], tol).value;
        let et = integrate(|t| eta.eval(t).0.powi(2), 0.0, 1.2, &[0.3], tol).value;
        let e1 = integrate(|t| eta.eval(t).1.powi(2), 0.0, 1.2, &[0.3], tol).value;
        let want = 2.0 * (gx * et + mx * e1);
        assert!((r.gradient_term - want).abs() < 1e-8 * want, "{} {want}", r.gradient_term);
        // with weight 1 the divergence integrates to zero (compact support, η flat at 0)
        assert!(r.divergence_term.abs() < 1e-8 * want, "{}", r.divergence_term);
    }
}
