//! The acceptance battery: one entry per criterion, each a list of
//! measured values judged against fixed bounds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::{constants, poisson_mass_residual, Params};
use crate::corpus::{self, default_lattice, radial_lattice};
use crate::energy::{energy, energy_rescaling_check};
use crate::error::{Error, Result};
use crate::extension::{
    default_t_nodes, delta_certificate, kappa, neumann_trace, poisson_extend, poisson_extend_window,
    residual_refinement, ExtensionField,
};
use crate::field::{Field, Lattice, Tail};
use crate::geometry::{axis_point, origin, Point};
use crate::nonlocal::{calibrate_singular_constant, frac_laplacian_many, PvQuadratureScheme};
use crate::oracle::{golden_lambda_mc, half_ball_weight_mc};
use crate::regularity::{
    decompose, default_scales, detect_singular, harnack_sequence, jensen_bound_check_with, riesz_morrey_check,
    u1_u2_split, BoxDimension, DEFAULT_EPSILON_P, HARNACK_SLACK, SPLIT_TOLERANCE,
};
use crate::stability::{
    default_family, farina_check, lattice_of, stability_sweep, Cutoff, FamilyForms, TestFunction, TestKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

fn check(name: impl Into<String>, value: f64, relation: Relation, bound: f64) -> Check {
    let passed = match relation {
        Relation::AtMost => value <= bound,
        Relation::AtLeast => value >= bound,
    };
    Check { name: name.into(), value, relation, bound, passed }
}

fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Check {
    check(name, value, Relation::AtMost, bound)
}

fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Check {
    check(name, value, Relation::AtLeast, bound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    /// Set when the criterion is known not to hold for the inputs it names.
    pub known_limitation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite report serializes");
        s.push('\n');
        s
    }

    /// Failing criteria that are not documented limitations.
    pub fn unexpected_failures(&self) -> Vec<&CriterionResult> {
        self.criteria.iter().filter(|c| !c.passed && c.known_limitation.is_none()).collect()
    }
}

pub const CRITERIA: [(&str, &str); 12] = [
    ("AC1", "constants"),
    ("AC2", "operator sanity"),
    ("AC3", "golden solution"),
    ("AC4", "extension"),
    ("AC5", "energy"),
    ("AC6", "harnack monotonicity"),
    ("AC7", "jensen bound"),
    ("AC8", "farina estimate"),
    ("AC9", "morrey-riesz"),
    ("AC10", "split"),
    ("AC11", "detector"),
    ("AC12", "determinism"),
];

const SPLIT_LIMITATION: &str = "(-Δ)^s u2 equals the equation defect (-Δ)^s u - e^u on B_1/4; the smooth corpus fields are not \
     solutions, so the bound cannot hold for them (equation_defect checks record the defect)";

fn pp(n: usize, s: f64) -> Result<Params> {
    Params::new(n, s)
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn rel_spread(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (hi - lo) / mean.abs()
}

fn golden(p: &Params, lattice: Lattice) -> Result<(f64, Field)> {
    let cal = calibrate_singular_constant(p)?;
    Ok((cal.lambda, corpus::log_profile(p, cal.lambda.ln(), lattice)?))
}

fn exp_density(u: &Field) -> Field {
    let me = u.clone();
    let tail = match u.tail() {
        Tail::Constant(c) => Tail::Constant(c.exp()),
        _ => Tail::Constant(1.0),
    };
    u.with_evaluator(tail, move |x| me.eval(x).exp())
}

fn ac1(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let half = constants(&pp(1, 0.5)?)?;
    out.push(at_most("kappa_half_abs_error", (half.kappa_s - 1.0).abs(), 1e-12));
    out.push(at_most("c_1_half_abs_error", (half.c_ns - 1.0 / (2.0 * PI)).abs(), 1e-10));
    let ts: Vec<f64> = (0..10).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 9.0)).collect();
    for (k, &(n, s)) in [(1, 0.25), (1, 0.5), (2, 0.3), (3, 0.75)].iter().enumerate() {
        let p = pp(n, s)?;
        let c = constants(&p)?;
        let mass = max_of(ts.iter().map(|&t| poisson_mass_residual(&p, c.d_ns, t)));
        out.push(at_most(format!("poisson_mass_residual(n={n},s={s})"), mass, 1e-6));
        let mc = half_ball_weight_mc(&p, 400_000, seed.wrapping_add(k as u64));
        out.push(at_most(format!("c_s_monte_carlo_sigmas(n={n},s={s})"), mc.sigmas_from(c.c_s), 3.0));
    }
    Ok(out)
}

fn ac2() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cases: [(usize, f64, f64, Vec<Point>); 3] = [
        (1, 0.5, 3.0, vec![vec![0.0], vec![0.2], vec![-0.7], vec![1.3]]),
        (1, 0.25, -1.0, vec![vec![0.0], vec![0.5]]),
        (2, 0.3, 2.0, vec![vec![0.2, 0.1], vec![-0.5, 0.0]]),
    ];
    for (n, s, c, xs) in cases {
        let p = pp(n, s)?;
        let u = corpus::constant(&p, c)?;
        let v = frac_laplacian_many(&u, &xs, &p, &PvQuadratureScheme::for_field(&u))?;
        out.push(at_most(format!("constant_abs(n={n},s={s})"), max_of(v.iter().map(|x| x.abs())), 1e-8));
    }
    let xs: Vec<Point> = (0..9).map(|i| vec![-0.8 + 0.2 * i as f64]).collect();
    for s in [0.25, 0.5, 0.75] {
        let p = pp(1, s)?;
        let u = corpus::dyda_profile(&p)?;
        let v = frac_laplacian_many(&u, &xs, &p, &PvQuadratureScheme::for_field(&u))?;
        out.push(at_most(format!("dyda_relative_spread(s={s})"), rel_spread(&v), 1e-3));
    }
    Ok(out)
}

fn annulus_points(n: usize) -> Vec<Point> {
    let radii: Vec<f64> = (0..9).map(|i| 0.2 + 0.1 * i as f64).collect();
    let mut pts: Vec<Point> = Vec::new();
    for &r in &radii {
        pts.push(axis_point(n, r));
        if n == 1 {
            pts.push(vec![-r]);
        } else {
            pts.push(vec![r / (n as f64).sqrt(); n]);
        }
    }
    pts
}

fn ac3(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (k, &(n, s)) in [(1, 0.09), (1, 0.25), (3, 0.25)].iter().enumerate() {
        let p = pp(n, s)?;
        let (lambda, u) = golden(&p, radial_lattice(n))?;
        let pts = annulus_points(n);
        let fl = frac_laplacian_many(&u, &pts, &p, &PvQuadratureScheme::for_field(&u))?;
        let res = max_of(pts.iter().zip(&fl).map(|(x, v)| {
            let e = u.eval(x).exp();
            (v - e).abs() / e
        }));
        out.push(at_most(format!("golden_relative_residual(n={n},s={s})"), res, 1e-3));
        let mc = golden_lambda_mc(&p, 400, 8, seed.wrapping_add(100 + k as u64))?;
        out.push(at_most(format!("lambda_vs_monte_carlo(n={n},s={s})"), (mc.mean - lambda).abs() / lambda, 1e-3));
    }
    Ok(out)
}

fn ac4() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for s in [0.5, 0.25] {
        let p = pp(1, s)?;
        let u = corpus::constant(&p, 1.0)?;
        let e = poisson_extend(&u, &p, &default_t_nodes(&u))?;
        out.push(at_most(format!("constant_extension_abs(s={s})"), max_of(e.values.iter().map(|v| (v - 1.0).abs())), 1e-6));
    }
    let p = pp(1, 0.5)?;
    let u = corpus::bump(&p)?;
    let e = poisson_extend_window(&u, &p, &default_t_nodes(&u), 0.25)?;
    let tr = neumann_trace(&e, &p)?;
    let kap = kappa(&p)?;
    let sc = PvQuadratureScheme::for_field(&u);
    let fl = frac_laplacian_many(&u, &tr.x_nodes, &p, &sc)?;
    let rel = max_of(tr.values.iter().zip(&fl).map(|(v, f)| (v - kap * f).abs() / (kap * f).abs()));
    out.push(at_most("bump_trace_relative_error", rel, 1e-2));
    let v = Field::from_fn(Lattice::Grid { n: 1, half_width: 4.0, per_axis: 129 }, Tail::Zero, |x| 0.5 * (-x[0] * x[0]).exp())?;
    let (coarse, fine) = residual_refinement(&v, &p, 0.5)?;
    out.push(at_least("pde_residual_refinement_ratio", coarse / fine, 1.8));
    Ok(out)
}

fn ac5(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.5)?;
    let zero = corpus::constant(&p, 0.0)?;
    let e0 = energy(&zero, &ExtensionField::kernel_only(&zero, &p)?, &[0.0], 1.0, &p)?;
    out.push(at_most("zero_field_energy_abs_error", (e0.total - (2.0 + PI / 2.0)).abs(), 1e-4));

    let u = corpus::bump(&p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(200));
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x0 = rng.gen_range(-0.5..0.5);
        let lambda = rng.gen_range(0.3..=1.0);
        let r = rng.gen_range(0.5..1.0);
        worst = worst.max(energy_rescaling_check(&u, &[x0], lambda, r, &p)?);
    }
    out.push(at_most("rescaling_identity_residual_max", worst, 1e-3));

    let pg = pp(1, 0.25)?;
    let (_, g) = golden(&pg, default_lattice(1))?;
    let ext = ExtensionField::kernel_only(&g, &pg)?;
    let totals: Vec<f64> = [0.2, 0.6, 2.0].iter().map(|&r| energy(&g, &ext, &[0.0], r, &pg).map(|e| e.total)).collect::<Result<_>>()?;
    out.push(at_most("golden_energy_relative_spread", rel_spread(&totals), 1e-3));
    Ok(out)
}

fn named(p: &Params, names: &[&str]) -> Result<Vec<(String, Field)>> {
    Ok(corpus::smooth_corpus(p)?.into_iter().filter(|(k, _)| names.contains(&k.as_str())).collect())
}

fn ac6() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.25)?;
    let rhos = [0.05, 0.1, 0.2, 0.4];
    let slack = HARNACK_SLACK * constants(&p)?.c_s;
    for (name, u) in named(&p, &["const_-2", "bump", "low_bump"])? {
        let ext = poisson_extend(&u, &p, &default_t_nodes(&u))?;
        let dec = decompose(&u, &ext, 0.9, &p)?;
        for x in [0.0, 0.1, -0.2, 0.3] {
            let h = harnack_sequence(&dec, &[x], &rhos, &p)?;
            let step = h.ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let low = h.ratios.iter().map(|v| v - h.lower_bound).fold(f64::INFINITY, f64::min);
            out.push(at_least(format!("{name}@{x}:min_step"), step, -slack));
            out.push(at_least(format!("{name}@{x}:min_over_lower_bound"), low, -slack));
        }
    }
    Ok(out)
}

fn ac7() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.25)?;
    let delta = delta_certificate(&p)?;
    out.push(at_least("delta", delta.delta, f64::MIN_POSITIVE));
    out.push(at_most("delta_refinement_change", delta.refinement_change, 1e-3));
    let smooth = corpus::smooth_corpus(&p)?;
    let mut families: Vec<(&str, Vec<(String, Field)>)> = vec![("constant", Vec::new()), ("gaussian", Vec::new())];
    for (k, u) in smooth {
        let i = if k.starts_with("const") { 0 } else { 1 };
        families[i].1.push((k, u));
    }
    families.push(("golden", vec![("golden".into(), golden(&p, default_lattice(1))?.1)]));
    for (fam, members) in families {
        let mut reps = Vec::new();
        for (k, u) in &members {
            let ext = ExtensionField::kernel_only(u, &p)?;
            reps.push((k.clone(), jensen_bound_check_with(u, &ext, 1.0, delta.delta, &p)?));
        }
        let c = max_of(reps.iter().map(|(_, r)| r.measured_constant));
        out.push(at_least(format!("{fam}:measured_constant_finite"), if c.is_finite() { 1.0 } else { 0.0 }, 1.0));
        for (k, r) in reps {
            out.push(at_most(format!("{fam}/{k}:lhs_minus_bound"), r.lhs - c * (r.rhs_linear + r.rhs_delta), 0.0));
        }
    }
    Ok(out)
}

fn ac8() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.25)?;
    let corpus = corpus::smooth_corpus(&p)?;
    let lattice = lattice_of(&corpus[0].1);
    let forms: Vec<FamilyForms> =
        TestKind::ALL.iter().map(|&k| FamilyForms::new(default_family(1, k), &lattice, &p)).collect::<Result<_>>()?;
    let eta = Cutoff::new(0.5, 1.0)?;
    let alphas = [0.25, 0.5, 1.0, 1.5];
    let mut stable = 0usize;
    for (name, u) in &corpus {
        let mut is_stable = true;
        for f in &forms {
            is_stable &= stability_sweep(u, f)?.stable_on_family;
        }
        if !is_stable {
            continue;
        }
        stable += 1;
        let ext = ExtensionField::kernel_only(u, &p)?;
        for kind in TestKind::ALL {
            let phi = TestFunction::new(kind, origin(1), 1.0);
            for r in farina_check(u, &ext, &phi, &eta, &alphas, &p)? {
                out.push(at_least(format!("{name}/{}/alpha={}:slack_over_rhs", phi.id(), r.alpha), r.slack / r.rhs.abs(), -1e-3));
            }
        }
    }
    out.insert(0, at_least("stable_members", stable as f64, 1.0));
    Ok(out)
}

fn ac9() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.25)?;
    let mut densities: Vec<(String, Field)> = corpus::smooth_corpus(&p)?.into_iter().map(|(k, u)| (format!("exp({k})"), exp_density(&u))).collect();
    densities.push(("tent".into(), corpus::tent(&p)?));
    for (name, f) in &densities {
        for delta in [0.2, 0.4] {
            let r = riesz_morrey_check(f, delta, &p)?;
            out.push(at_most(format!("{name}/delta={delta}:lhs_over_rhs"), r.lhs / r.rhs, 1.0));
        }
    }
    Ok(out)
}

fn ac10() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.25)?;
    for (name, u) in corpus::smooth_corpus(&p)? {
        let sp = u1_u2_split(&u, &p)?;
        out.push(at_most(format!("{name}:reconstruction_error"), sp.reconstruction_error, 1e-12));
        out.push(at_most(format!("{name}:harmonicity_residual"), sp.harmonicity_residual, SPLIT_TOLERANCE));
        // informational: the residual cannot drop below the defect
        out.push(at_least(format!("{name}:equation_defect"), sp.equation_defect, 0.0));
    }
    Ok(out)
}

fn flagged(u: &Field, p: &Params) -> Result<crate::regularity::SingularSetReport> {
    detect_singular(u, 2.0, DEFAULT_EPSILON_P, &default_scales(u), p)
}

fn ac11() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = pp(1, 0.09)?;
    for (name, u) in corpus::smooth_corpus(&p)? {
        out.push(at_most(format!("{name}:flagged_count"), flagged(&u, &p)?.flagged.len() as f64, 0.0));
    }
    let cal = calibrate_singular_constant(&p)?;
    let g = corpus::log_profile(&p, cal.lambda.ln(), default_lattice(1))?;
    let rep = flagged(&g, &p)?;
    let pts = rep.flagged_points();
    out.push(at_most("golden:flagged_count_minus_one", (pts.len() as f64 - 1.0).abs(), 0.0));
    out.push(at_most("golden:flagged_offset", max_of(pts.iter().map(|x| x[0].abs())), 0.0));
    let dim = match rep.box_dimension {
        BoxDimension::Empty => f64::NAN,
        BoxDimension::Value(v) => v,
    };
    out.push(at_most("golden:box_dimension", dim, 0.1));
    let shift = 0.5;
    let moved = corpus::log_profile_at(&p, cal.lambda.ln(), vec![shift], default_lattice(1))?;
    let mpts = flagged(&moved, &p)?.flagged_points();
    let mismatch = if mpts.len() == pts.len() {
        max_of(pts.iter().zip(&mpts).map(|(a, b)| (b[0] - (a[0] + shift)).abs())).max(0.0)
    } else {
        f64::INFINITY
    };
    out.push(at_most("translation_mismatch", mismatch, 0.0));
    Ok(out)
}

fn run_one(id: usize, seed: u64) -> Result<Vec<Check>> {
    match id {
        1 => ac1(seed),
        2 => ac2(),
        3 => ac3(seed),
        4 => ac4(),
        5 => ac5(seed),
        6 => ac6(),
        7 => ac7(),
        8 => ac8(),
        9 => ac9(),
        10 => ac10(),
        11 => ac11(),
        _ => Err(Error::InvalidParams(format!("no criterion AC{id}"))),
    }
}

fn result(id: usize, checks: Result<Vec<Check>>) -> CriterionResult {
    let (code, title) = CRITERIA[id - 1];
    let known_limitation = (id == 10).then(|| SPLIT_LIMITATION.to_string());
    match checks {
        Ok(checks) => CriterionResult {
            id: code.into(),
            title: title.into(),
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            checks,
            error: None,
            known_limitation,
        },
        Err(e) => CriterionResult {
            id: code.into(),
            title: title.into(),
            passed: false,
            checks: Vec::new(),
            error: Some(e.to_string()),
            known_limitation,
        },
    }
}

/// Run the selected criteria (1-based ids; empty selects all). Criterion 12
/// reruns the others (all of them if it is selected alone) and compares the
/// serialized reports byte for byte.
pub fn run_suite(seed: u64, select: &[usize]) -> Result<SuiteReport> {
    run_suite_with(seed, select, |_| {})
}

/// [`run_suite`], calling `progress` after every criterion.
pub fn run_suite_with(seed: u64, select: &[usize], mut progress: impl FnMut(&CriterionResult)) -> Result<SuiteReport> {
    if let Some(bad) = select.iter().find(|&&i| !(1..=12).contains(&i)) {
        return Err(Error::InvalidParams(format!("no criterion AC{bad}")));
    }
    let ids: Vec<usize> = if select.is_empty() { (1..=12).collect() } else { select.to_vec() };
    let mut base: Vec<usize> = ids.iter().copied().filter(|&i| i != 12).collect();
    if base.is_empty() {
        base = (1..=11).collect();
    }
    let battery = |progress: &mut dyn FnMut(&CriterionResult)| -> Vec<CriterionResult> {
        base.iter()
            .map(|&i| {
                let r = result(i, run_one(i, seed));
                progress(&r);
                r
            })
            .collect()
    };
    let mut criteria = battery(&mut progress);
    if ids.contains(&12) {
        let first = SuiteReport { seed, passed: false, criteria: criteria.clone() }.to_json();
        let second = SuiteReport { seed, passed: false, criteria: battery(&mut |_| {}) }.to_json();
        let differing = first.lines().zip(second.lines()).filter(|(a, b)| a != b).count()
            + first.lines().count().abs_diff(second.lines().count());
        let r = result(12, Ok(vec![at_most("differing_report_lines", differing as f64, 0.0)]));
        progress(&r);
        if !select.is_empty() && !select.iter().any(|&i| i != 12) {
            criteria.clear();
        }
        criteria.push(r);
    }
    let passed = criteria.iter().all(|c| c.passed);
    Ok(SuiteReport { seed, criteria, passed })
}
