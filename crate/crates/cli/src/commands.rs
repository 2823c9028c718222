use std::path::Path;

use fracgel::constants::{constants, CERTIFICATE_TOLERANCE};
use fracgel::corpus::radial_lattice;
use fracgel::energy::{decay_series, energy, DEFAULT_THETA, MIN_CELLS};
use fracgel::extension::{
    default_t_nodes, delta_certificate, extension_pde_residual, poisson_extend, poisson_extend_window,
    KERNEL_MASS_TOLERANCE,
};
use fracgel::field::csv_header_params;
use fracgel::geometry::origin;
use fracgel::nonlocal::{calibrate_singular_constant, frac_laplacian, PvQuadratureScheme, CALIBRATION_TOLERANCE};
use fracgel::quad::Tol;
use fracgel::regularity::{
    decompose, default_scales, detect_singular, harnack_sequence, jensen_bound_check_with, riesz_morrey_check,
    u1_u2_split, DEFAULT_EPSILON_P, HARNACK_SLACK, SPLIT_TOLERANCE,
};
use fracgel::report::{hash_input, Provenance, QuadOverrides, Report, RunConfig};
use fracgel::stability::{default_family, farina_check, lattice_of, stability_sweep, Cutoff, FamilyForms, TestFunction, TestKind};
use fracgel::suite::run_suite;
use fracgel::{Error, ExtensionField, Field, Params, Result};
use serde_json::{json, Value};

use crate::{Cli, Command, Kind};

pub struct Outcome {
    pub report: Report,
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: RunConfig,
    params: Params,
}

/// Non-default flags, recorded in the run configuration.
fn recorded_args(cli: &Cli) -> std::collections::BTreeMap<String, Value> {
    let mut m = std::collections::BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    if !cli.x0.is_empty() {
        put("x0", json!(cli.x0));
    }
    if let Some(v) = cli.r {
        put("r", json!(v));
    }
    if !cli.rho.is_empty() {
        put("rho", json!(cli.rho));
    }
    if let Some(v) = cli.p {
        put("p", json!(v));
    }
    if !cli.alpha.is_empty() {
        put("alpha", json!(cli.alpha));
    }
    if !cli.delta.is_empty() {
        put("delta", json!(cli.delta));
    }
    if let Some(v) = cli.theta {
        put("theta", json!(v));
    }
    if let Some(v) = cli.k_max {
        put("k_max", json!(v));
    }
    if let Some(v) = cli.eps {
        put("eps", json!(v));
    }
    if !cli.scales.is_empty() {
        put("scales", json!(cli.scales));
    }
    if let Some(k) = cli.kind {
        put("kind", json!(format!("{k:?}").to_lowercase()));
    }
    if !cli.only.is_empty() {
        put("only", json!(cli.only));
    }
    m
}

fn resolve_params(cli: &Cli) -> Result<Params> {
    let header = match &cli.input {
        Some(path) => Some(csv_header_params(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let n = cli.n.or(header.map(|h| h.0)).unwrap_or(1);
    let s = cli.s.or(header.and_then(|h| h.1)).unwrap_or(0.5);
    Params::new(n, s)
}

impl Ctx<'_> {
    fn input(&self) -> Result<Field> {
        let path = self.cli.input.as_ref().ok_or_else(|| Error::InvalidParams("--input is required".into()))?;
        Field::load_csv(path, &self.params)
    }

    fn x0(&self) -> Result<Vec<f64>> {
        if self.cli.x0.is_empty() {
            return Ok(origin(self.params.n));
        }
        if self.cli.x0.len() != self.params.n {
            return Err(Error::InvalidParams(format!("--x0 has {} coordinates, n = {}", self.cli.x0.len(), self.params.n)));
        }
        Ok(self.cli.x0.clone())
    }

    fn tol(&self, default: Tol) -> Tol {
        Tol::new(self.cli.tol_abs.unwrap_or(default.abs), self.cli.tol_rel.unwrap_or(default.rel), default.max_panels)
    }

    fn kernel_ext(&self, u: &Field) -> Result<ExtensionField> {
        let e = ExtensionField::kernel_only(u, &self.params)?;
        Ok(if self.cli.tol_abs.is_some() || self.cli.tol_rel.is_some() { e.with_tol(self.tol(e.kernel.tol)) } else { e })
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        if let Some(dir) = &self.cli.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(Path::new(dir).join(name), content)?;
        }
        Ok(())
    }

    fn report(&self, value: Value, tolerance: Option<f64>, passed: bool, certificate: Value) -> Result<Report> {
        let inputs = self.config.inputs.iter().map(hash_input).collect::<Result<_>>()?;
        Ok(Report {
            operation: self.config.subcommand.clone(),
            params: Some(self.params),
            value,
            tolerance,
            passed,
            certificate,
            provenance: Provenance::new(&self.config, inputs),
        })
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn kind_of(k: Kind) -> TestKind {
    match k {
        Kind::Tent => TestKind::Tent,
        Kind::Bump => TestKind::Bump,
        Kind::Plateau => TestKind::Plateau,
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let params = resolve_params(cli)?;
    let mut config = RunConfig::new(cli.command.name());
    config.params = Some(params);
    config.inputs = cli.input.iter().map(|p| p.display().to_string()).collect();
    config.args = recorded_args(cli);
    config.quadrature = QuadOverrides { abs: cli.tol_abs, rel: cli.tol_rel };
    if let Some(t) = cli.tol_check {
        config.tolerances.insert("check".into(), t);
    }
    config.out_dir = cli.out.as_ref().map(|p| p.display().to_string());
    config.seed = cli.seed;
    config.serial = cli.serial;
    let ctx = Ctx { cli, config, params };
    let report = dispatch(&ctx)?;
    ctx.write(&format!("{}.json", cli.command.name()), &report.to_json())?;
    Ok(Outcome { report })
}

fn dispatch(ctx: &Ctx) -> Result<Report> {
    let p = &ctx.params;
    let cli = ctx.cli;
    match cli.command {
        Command::Constants => {
            let c = constants(p)?;
            ctx.report(to_value(&c), Some(CERTIFICATE_TOLERANCE), true, to_value(&c.certificates))
        }
        Command::Flap => {
            let u = ctx.input()?;
            let x = ctx.x0()?;
            let base = PvQuadratureScheme::for_field(&u);
            let scheme = PvQuadratureScheme { rel_tol: cli.tol_rel.unwrap_or(base.rel_tol), ..base };
            let v = frac_laplacian(&u, &x, p, &scheme)?;
            ctx.report(json!({ "x": x, "value": v }), Some(scheme.rel_tol), true, json!({ "rel_tol": scheme.rel_tol }))
        }
        Command::Extend => {
            let u = ctx.input()?;
            let window = cli.r.unwrap_or(1.0);
            let e = poisson_extend_window(&u, p, &default_t_nodes(&u), window)?;
            let pde = extension_pde_residual(&e, p);
            ctx.write("extension.csv", &e.to_csv())?;
            let value = json!({
                "window": window,
                "x_nodes": e.x_nodes.len(),
                "t_nodes": e.t_nodes,
                "pde_residual": pde,
            });
            let passed = e.mass_residual <= KERNEL_MASS_TOLERANCE;
            ctx.report(value, Some(KERNEL_MASS_TOLERANCE), passed, json!({ "kernel_mass_residual": e.mass_residual }))
        }
        Command::Energy => {
            let u = ctx.input()?;
            let e = energy(&u, &ctx.kernel_ext(&u)?, &ctx.x0()?, cli.r.unwrap_or(1.0), p)?;
            ctx.report(to_value(&e), None, true, Value::Null)
        }
        Command::Decay => {
            let u = ctx.input()?;
            let theta = cli.theta.unwrap_or(DEFAULT_THETA);
            let r0 = cli.r.unwrap_or(1.0);
            // by default stop at the last resolvable scale, at most four steps
            let resolvable = ((r0 / (MIN_CELLS * u.spacing())).ln() / (1.0 / theta).ln()).floor();
            let k_max = cli.k_max.unwrap_or_else(|| if resolvable >= 1.0 { (resolvable as usize).min(4) } else { 0 });
            let d = decay_series(&u, &ctx.kernel_ext(&u)?, &ctx.x0()?, r0, theta, k_max, p)?;
            ctx.write("decay.csv", &d.to_csv())?;
            ctx.report(to_value(&d), None, true, Value::Null)
        }
        Command::Stability => {
            let u = ctx.input()?;
            let kinds: Vec<TestKind> = match cli.kind {
                Some(k) => vec![kind_of(k)],
                None => TestKind::ALL.to_vec(),
            };
            let lattice = lattice_of(&u);
            let mut sweeps = serde_json::Map::new();
            let mut stable = true;
            for k in kinds {
                let forms = FamilyForms::new(default_family(p.n, k), &lattice, p)?;
                let sw = stability_sweep(&u, &forms)?;
                ctx.write(&format!("stability_{}.csv", k.label()), &sw.to_csv())?;
                stable &= sw.stable_on_family;
                sweeps.insert(k.label().into(), to_value(&sw));
            }
            // instability is a finding, not a failed check
            ctx.report(json!({ "stable_on_family": stable, "sweeps": sweeps }), None, true, Value::Null)
        }
        Command::Farina => {
            let u = ctx.input()?;
            let phi = TestFunction::new(kind_of(cli.kind.unwrap_or(Kind::Bump)), ctx.x0()?, cli.r.unwrap_or(1.0));
            let alphas = if cli.alpha.is_empty() { vec![0.25, 0.5, 1.0, 1.5] } else { cli.alpha.clone() };
            let reports = farina_check(&u, &ctx.kernel_ext(&u)?, &phi, &Cutoff::new(0.5, 1.0)?, &alphas, p)?;
            let tol = ctx.config.tolerance("check", 1e-3);
            let worst = reports.iter().map(|r| r.slack / r.rhs.abs()).fold(f64::INFINITY, f64::min);
            ctx.report(to_value(&reports), Some(tol), worst >= -tol, json!({ "min_slack_over_rhs": worst }))
        }
        Command::Decompose => {
            let u = ctx.input()?;
            let ext = poisson_extend(&u, p, &default_t_nodes(&u))?;
            let d = decompose(&u, &ext, cli.r.unwrap_or(0.9), p)?;
            let value = json!({ "r": d.r, "normalizer": d.normalizer, "traces": to_value(&d.traces) });
            ctx.report(value, None, true, json!({ "extrapolation": d.traces.certificate }))
        }
        Command::Harnack => {
            let u = ctx.input()?;
            let ext = poisson_extend(&u, p, &default_t_nodes(&u))?;
            let d = decompose(&u, &ext, cli.r.unwrap_or(0.9), p)?;
            let rhos = if cli.rho.is_empty() { vec![0.05, 0.1, 0.2, 0.4] } else { cli.rho.clone() };
            let h = harnack_sequence(&d, &ctx.x0()?, &rhos, p)?;
            let passed = h.monotone && h.above_lower_bound;
            ctx.report(to_value(&h), Some(HARNACK_SLACK), passed, json!({ "extrapolation": d.traces.certificate }))
        }
        Command::Jensen => {
            let u = ctx.input()?;
            let delta = delta_certificate(p)?;
            let alphas = if cli.alpha.is_empty() { vec![1.0] } else { cli.alpha.clone() };
            let ext = ctx.kernel_ext(&u)?;
            let reps = alphas.iter().map(|&a| jensen_bound_check_with(&u, &ext, a, delta.delta, p)).collect::<Result<Vec<_>>>()?;
            ctx.report(to_value(&reps), None, true, to_value(&delta))
        }
        Command::Morrey => {
            let f = ctx.input()?;
            let deltas = if cli.delta.is_empty() { vec![p.s] } else { cli.delta.clone() };
            let reps = deltas.iter().map(|&d| riesz_morrey_check(&f, d, p)).collect::<Result<Vec<_>>>()?;
            let passed = reps.iter().all(|r| r.holds);
            ctx.report(to_value(&reps), None, passed, Value::Null)
        }
        Command::Split => {
            let u = ctx.input()?;
            let sp = u1_u2_split(&u, p)?;
            ctx.write("u1.csv", &sp.u1.to_csv_with_order(p.s))?;
            ctx.write("u2.csv", &sp.u2.to_csv_with_order(p.s))?;
            let tol = ctx.config.tolerance("check", SPLIT_TOLERANCE);
            let value = json!({
                "checked_points": sp.checked_points.len(),
                "harmonicity_residual": sp.harmonicity_residual,
                "equation_defect": sp.equation_defect,
                "reconstruction_error": sp.reconstruction_error,
            });
            let cert = json!({ "reconstruction_error": sp.reconstruction_error });
            ctx.report(value, Some(tol), sp.harmonicity_residual <= tol, cert)
        }
        Command::Detect => {
            let u = ctx.input()?;
            let scales = if cli.scales.is_empty() { default_scales(&u) } else { cli.scales.clone() };
            let rep = detect_singular(&u, cli.p.unwrap_or(2.0), cli.eps.unwrap_or(DEFAULT_EPSILON_P), &scales, p)?;
            ctx.write("flagged.csv", &rep.to_csv(p.n))?;
            ctx.report(to_value(&rep), None, true, Value::Null)
        }
        Command::Golden => {
            let cal = calibrate_singular_constant(p)?;
            let u = fracgel::corpus::log_profile(p, cal.lambda.ln(), radial_lattice(p.n))?;
            ctx.write("golden.csv", &u.to_csv_with_order(p.s))?;
            ctx.report(to_value(&cal), Some(CALIBRATION_TOLERANCE), true, json!({ "spread": cal.spread }))
        }
        Command::Suite => {
            let r = run_suite(cli.seed, &cli.only)?;
            let passed = r.passed;
            ctx.report(to_value(&r), None, passed, Value::Null)
        }
    }
}
