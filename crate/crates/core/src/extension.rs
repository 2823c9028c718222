//! Caffarelli–Silvestre extension by Poisson-kernel quadrature, the boundary
//! mass `g(x, t)`, the weighted Neumann trace and the PDE residual.
//!
//! With `y = x + tσω` the Poisson integral becomes
//! `ū(x,t) = u(x) + d|S| ∫_0^∞ σ^{n-1} (1+σ^2)^{-(n+2s)/2} (⨍_{∂B_{tσ}(x)} u - u(x)) dσ`,
//! so the unit mass of the kernel is built in and checked separately.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{constants, Params};
use crate::error::{Error, Result};
use crate::field::{Field, Layout};
use crate::geometry::{axis_point, norm, origin, sphere_mean, Integrand, Point, Sphere};
use crate::quad::{integrate, integrate_graded, integrate_power_tail, Tol};
use crate::special::{beta, sphere_area};

pub const KERNEL_MASS_TOLERANCE: f64 = 1e-6;
pub const GRADING_RATIO: f64 = 1.3;
pub const DEFAULT_T_MAX: f64 = 2.0;

/// Geometric nodes from `t_min` to `t_max` with ratio at most `ratio`; the
/// ratio is shrunk so the last step lands exactly on `t_max`.
pub fn graded_t_nodes(t_min: f64, t_max: f64, ratio: f64) -> Vec<f64> {
    let steps = ((t_max / t_min).ln() / ratio.ln()).ceil().max(1.0) as usize;
    let q = (t_max / t_min).powf(1.0 / steps as f64);
    let mut out: Vec<f64> = (0..steps).map(|k| t_min * q.powi(k as i32)).collect();
    out.push(t_max);
    out
}

/// Default nodes for a base field of spacing `h`: `h/4 .. 2`, ratio 1.3.
pub fn default_t_nodes(u: &Field) -> Vec<f64> {
    graded_t_nodes(u.spacing() / 4.0, DEFAULT_T_MAX, GRADING_RATIO)
}

/// Kernel evaluator of `ū` at arbitrary `(x, t)`.
#[derive(Debug, Clone)]
pub struct PoissonKernel {
    pub n: usize,
    pub s: f64,
    pub d_ns: f64,
    pub tol: Tol,
}

impl PoissonKernel {
    pub fn new(p: &Params) -> Result<Self> {
        let d_ns = 2.0 / (sphere_area(p.n) * beta(p.dim() / 2.0, p.s)?);
        Ok(Self { n: p.n, s: p.s, d_ns, tol: Tol::new(1e-13, 1e-10, 400) })
    }

    pub fn with_tol(mut self, tol: Tol) -> Self {
        self.tol = tol;
        self
    }

    fn radial_weight(&self, sigma: f64) -> f64 {
        let n = self.n as f64;
        sigma.powf(n - 1.0) * (1.0 + sigma * sigma).powf(-(n + 2.0 * self.s) / 2.0)
    }

    /// `(σ^2/(1+σ^2))^{(n+2s)/2}`: the weight with `σ^{-1-2s}` factored out.
    fn tail_weight(&self, sigma: f64) -> f64 {
        let q = sigma * sigma / (1.0 + sigma * sigma);
        q.powf((self.n as f64 + 2.0 * self.s) / 2.0)
    }

    /// `∫_0^cut f`, with `[1, cut]` integrated in `ln σ` so that features
    /// spread over many decades of `σ` cost only a few panels each.
    fn head_integral<F: Fn(f64) -> f64>(&self, f: F, cut: f64, breaks: &[f64]) -> f64 {
        let near = integrate_graded(&f, 0.0, 1.0, breaks, self.tol).value;
        let lb: Vec<f64> = breaks.iter().filter(|&&b| b > 1.0).map(|b| b.ln()).collect();
        let far = integrate_graded(
            |w: f64| {
                let s = w.exp();
                s * f(s)
            },
            0.0,
            cut.ln(),
            &lb,
            self.tol,
        )
        .value;
        near + far
    }

    fn sigma_breaks(&self, u: &Field, x: &[f64], t: f64) -> (Vec<f64>, f64) {
        let b: Vec<f64> = u.breaks_from(x).into_iter().map(|r| r / t).collect();
        let reach = b.iter().cloned().fold(1.0, f64::max);
        (b, 2.0 * reach)
    }

    /// `∫ σ^{n-1}(1+σ^2)^{-(n+2s)/2} dσ` by the same rule used for `ū`,
    /// compared with `1 / (d |S|)`.
    pub fn mass_residual(&self, u: &Field, x: &[f64], t: f64) -> f64 {
        let (b, cut) = self.sigma_breaks(u, x, t);
        let head = self.head_integral(|s| self.radial_weight(s), cut, &b);
        let tail = integrate_power_tail(|s| self.tail_weight(s), cut, 2.0 * self.s, &b, self.tol).value;
        ((head + tail) * self.d_ns * sphere_area(self.n) - 1.0).abs()
    }

    /// `ū(x, t)` for `t > 0`.
    pub fn extend_at(&self, u: &Field, x: &[f64], t: f64) -> f64 {
        let n = self.n;
        let ux = u.eval(x);
        let centred = ux.is_finite();
        let shift = if centred { ux } else { 0.0 };
        let f = |y: &[f64]| u.eval(y);
        let g = u.integrand(&f);
        let inner = self.tol.inner();
        let diff = |sigma: f64| sphere_mean(n, x, t * sigma, &g, inner) - shift;
        let (b, cut) = self.sigma_breaks(u, x, t);
        let head = self.head_integral(|s| self.radial_weight(s) * diff(s), cut, &b);
        let tail = integrate_power_tail(|s| self.tail_weight(s) * diff(s), cut, 2.0 * self.s, &b, self.tol).value;
        shift + self.d_ns * sphere_area(n) * (head + tail)
    }
}

/// Geometry of the `x`-part of an extension grid.
#[derive(Debug, Clone, PartialEq)]
pub enum XLattice {
    /// Tensor sub-lattice of a full-grid base: `per_axis^n` nodes, spacing `h`.
    Grid { n: usize, spacing: f64, per_axis: usize },
    /// Radii along the first axis of a radial base.
    Radial { n: usize, radii: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ExtensionField {
    pub base: Field,
    pub params: Params,
    pub kernel: PoissonKernel,
    pub x_lattice: XLattice,
    pub x_nodes: Vec<Point>,
    pub t_nodes: Vec<f64>,
    /// `values[ix * t_nodes.len() + it]`.
    pub values: Vec<f64>,
    pub t_max: f64,
    /// Largest kernel-mass residual over the constructed nodes.
    pub mass_residual: f64,
}

fn window_nodes(u: &Field, window: f64) -> (XLattice, Vec<Point>) {
    match u.layout() {
        Layout::Grid { n, half_width, spacing, per_axis } => {
            let idx: Vec<usize> = (0..*per_axis)
                .filter(|&i| (-half_width + i as f64 * spacing).abs() <= window + 1e-9 * spacing)
                .collect();
            let coords: Vec<f64> = idx.iter().map(|&i| -half_width + i as f64 * spacing).collect();
            let m = coords.len();
            let mut nodes = Vec::with_capacity(m.pow(*n as u32));
            for k in 0..m.pow(*n as u32) {
                let mut p = vec![0.0; *n];
                let mut r = k;
                for d in (0..*n).rev() {
                    p[d] = coords[r % m];
                    r /= m;
                }
                nodes.push(p);
            }
            (XLattice::Grid { n: *n, spacing: *spacing, per_axis: m }, nodes)
        }
        Layout::Radial { n, radii } => {
            let r: Vec<f64> = radii.iter().cloned().filter(|&r| r <= window).collect();
            let nodes = r.iter().map(|&ri| axis_point(*n, ri)).collect();
            (XLattice::Radial { n: *n, radii: r }, nodes)
        }
    }
}

/// Extension on the base nodes with `|x|_∞ <= window` (radius for radial bases).
pub fn poisson_extend_window(u: &Field, p: &Params, t_nodes: &[f64], window: f64) -> Result<ExtensionField> {
    if t_nodes.is_empty() || t_nodes.iter().any(|&t| !(t > 0.0)) || t_nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("t-nodes must be positive and increasing".into()));
    }
    if u.dim() != p.n {
        return Err(Error::InvalidParams("field dimension differs from n".into()));
    }
    let kernel = PoissonKernel::new(p)?;
    let (x_lattice, x_nodes) = window_nodes(u, window);
    let nt = t_nodes.len();
    let cells: Vec<(usize, usize)> = (0..x_nodes.len()).flat_map(|i| (0..nt).map(move |j| (i, j))).collect();
    let out: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let x = &x_nodes[i];
            let t = t_nodes[j];
            (kernel.extend_at(u, x, t), kernel.mass_residual(u, x, t))
        })
        .collect();
    let mass_residual = out.iter().map(|v| v.1).fold(0.0, f64::max);
    if !(mass_residual <= KERNEL_MASS_TOLERANCE) {
        return Err(Error::Certificate { what: "Poisson kernel mass".into(), residual: mass_residual, tolerance: KERNEL_MASS_TOLERANCE });
    }
    Ok(ExtensionField {
        base: u.clone(),
        params: *p,
        kernel,
        x_lattice,
        x_nodes,
        t_nodes: t_nodes.to_vec(),
        values: out.into_iter().map(|v| v.0).collect(),
        t_max: *t_nodes.last().unwrap(),
        mass_residual,
    })
}

/// Extension over the base nodes in `[-1, 1]^n` (or `|x| <= 1`).
pub fn poisson_extend(u: &Field, p: &Params, t_nodes: &[f64]) -> Result<ExtensionField> {
    poisson_extend_window(u, p, t_nodes, 1.0f64.min(u.domain_radius()))
}

impl ExtensionField {
    /// An extension without a precomputed grid; only [`Self::value_at`] is
    /// meaningful.
    pub fn kernel_only(u: &Field, p: &Params) -> Result<ExtensionField> {
        Ok(ExtensionField {
            base: u.clone(),
            params: *p,
            kernel: PoissonKernel::new(p)?,
            x_lattice: XLattice::Grid { n: p.n, spacing: u.spacing(), per_axis: 0 },
            x_nodes: Vec::new(),
            t_nodes: Vec::new(),
            values: Vec::new(),
            t_max: f64::INFINITY,
            mass_residual: 0.0,
        })
    }

    pub fn value(&self, ix: usize, it: usize) -> f64 {
        self.values[ix * self.t_nodes.len() + it]
    }

    /// `ū(x, t)` at an arbitrary point by direct kernel quadrature.
    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        self.kernel.extend_at(&self.base, x, t)
    }

    /// Same extension with looser quadrature, for nested integrals.
    pub fn with_tol(&self, tol: Tol) -> ExtensionField {
        let mut e = self.clone();
        e.kernel.tol = tol;
        e
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let n = self.params.n;
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "{},t,ubar", cols.join(","));
        for (ix, x) in self.x_nodes.iter().enumerate() {
            for (it, t) in self.t_nodes.iter().enumerate() {
                let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "{},{t},{}", xs.join(","), self.value(ix, it));
            }
        }
        out
    }

    /// Grid neighbours of node `ix` along each axis, if interior.
    fn neighbours(&self, ix: usize) -> Option<Vec<(usize, usize)>> {
        match &self.x_lattice {
            XLattice::Grid { n, per_axis, .. } => {
                let m = *per_axis;
                let mut out = Vec::with_capacity(*n);
                let mut stride = 1;
                for d in (0..*n).rev() {
                    let k = (ix / stride) % m;
                    if k == 0 || k + 1 == m {
                        return None;
                    }
                    out.push((ix - stride, ix + stride));
                    stride *= m;
                    let _ = d;
                }
                Some(out)
            }
            XLattice::Radial { radii, .. } => (ix > 0 && ix + 1 < radii.len()).then(|| vec![(ix - 1, ix + 1)]),
        }
    }

    /// `Δ_x ū` at an interior node.
    fn x_laplacian(&self, ix: usize, it: usize) -> Option<f64> {
        let nb = self.neighbours(ix)?;
        let c = self.value(ix, it);
        match &self.x_lattice {
            XLattice::Grid { spacing, .. } => {
                let h2 = spacing * spacing;
                Some(nb.iter().map(|&(a, b)| (self.value(a, it) + self.value(b, it) - 2.0 * c) / h2).sum())
            }
            XLattice::Radial { n, radii } => {
                let (a, b) = nb[0];
                let (r0, r1, r2) = (radii[a], radii[ix], radii[b]);
                let (ua, ub) = (self.value(a, it), self.value(b, it));
                let (h1, h2) = (r1 - r0, r2 - r1);
                let d2 = 2.0 * (h1 * ub - (h1 + h2) * c + h2 * ua) / (h1 * h2 * (h1 + h2));
                let d1 = (h1 * h1 * ub + (h2 * h2 - h1 * h1) * c - h2 * h2 * ua) / (h1 * h2 * (h1 + h2));
                Some(d2 + (*n as f64 - 1.0) / r1 * d1)
            }
        }
    }
}

// ---------------------------------------------------------------- g(x, t)

/// `g(x, t) = ∫_{B_R} P((x,t), y) dy`.
pub fn boundary_mass_at(p: &Params, region_radius: f64, x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be positive")));
    }
    let kernel = PoissonKernel::new(p)?;
    let n = p.n;
    let o = origin(n);
    let a = norm(x);
    let ind = |y: &[f64]| if norm(y) < region_radius { 1.0 } else { 0.0 };
    let feats = [Sphere::new(o.clone(), region_radius)];
    let g = Integrand::new(&ind, Some(&o), &feats);
    let tol = Tol::new(1e-14, 1e-11, 400);
    let frac = |sigma: f64| {
        let rho = t * sigma;
        if rho + a <= region_radius {
            1.0
        } else if rho >= region_radius + a {
            0.0
        } else if n == 1 {
            0.5 * (ind(&[x[0] + rho]) + ind(&[x[0] - rho]))
        } else {
            sphere_mean(n, x, rho, &g, tol.inner())
        }
    };
    let lo = (region_radius - a).abs() / t;
    let hi = (region_radius + a) / t;
    let v = integrate(|s| kernel.radial_weight(s) * frac(s), 0.0, hi, &[lo], tol).value;
    Ok(kernel.d_ns * sphere_area(n) * v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCertificate {
    /// `min g` over the closure of `D_{1/2}` (with `g = 1` on `t = 0`).
    pub delta: f64,
    pub resolution: usize,
    /// Change between the last two refinements.
    pub refinement_change: f64,
}

/// `min_{(x,t) ∈ D̄_{1/2}} g(x, t)` for `B_1`, refined until stable to 1e-3.
pub fn delta_certificate(p: &Params) -> Result<DeltaCertificate> {
    // g depends on x only through |x|
    let grid_min = |m: usize| -> Result<f64> {
        let pts: Vec<(f64, f64)> = (0..=m)
            .flat_map(|i| (1..=m).map(move |j| (0.5 * i as f64 / m as f64, 0.5 * j as f64 / m as f64)))
            .filter(|(r, t)| r * r + t * t <= 0.25 + 1e-12)
            .collect();
        let vals: Vec<f64> = pts.par_iter().map(|&(r, t)| boundary_mass_at(p, 1.0, &axis_point(p.n, r), t)).collect::<Result<_>>()?;
        Ok(vals.into_iter().fold(1.0, f64::min))
    };
    let mut m = 8;
    let mut prev = grid_min(m)?;
    loop {
        m *= 2;
        let cur = grid_min(m)?;
        let change = (cur - prev).abs();
        if change < 1e-3 || m >= 256 {
            return Ok(DeltaCertificate { delta: cur, resolution: m, refinement_change: change });
        }
        prev = cur;
    }
}

/// Largest `r0` with `g(x, t) >= 1 - δ0` for `|x| <= 1/2` and `0 < t <= r0`,
/// measured on a radial grid of 65 points.
pub fn measured_r0(p: &Params, delta0: f64) -> Result<f64> {
    let rs: Vec<f64> = (0..=64).map(|i| 0.5 * i as f64 / 64.0).collect();
    let worst = |t: f64| -> Result<f64> {
        let v: Vec<f64> = rs.par_iter().map(|&r| boundary_mass_at(p, 1.0, &axis_point(p.n, r), t)).collect::<Result<_>>()?;
        Ok(v.into_iter().fold(1.0, f64::min))
    };
    let target = 1.0 - delta0;
    let mut lo = 0.0;
    let mut t = 1e-6;
    if worst(t)? < target {
        return Ok(0.0);
    }
    // march outwards, then bisect the first crossing
    while t < 10.0 {
        let next = t * 1.5;
        if worst(next)? < target {
            lo = t;
            let mut hi = next;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if worst(mid)? >= target { lo = mid } else { hi = mid }
            }
            return Ok(lo);
        }
        t = next;
        lo = t;
    }
    Ok(lo)
}

// ---------------------------------------------------------------- trace

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannTrace {
    pub x_nodes: Vec<Point>,
    pub values: Vec<f64>,
    /// Number of node pairs combined per estimate.
    pub order: usize,
    /// `|estimate - estimate from the next three pairs|` per node.
    pub spread: Vec<f64>,
    /// `max spread / scale` (scale = largest |value|, floored).
    pub certificate: f64,
}

pub const TRACE_TOLERANCE: f64 = 1e-2;

/// Solve the 3x3 system `q_k = T + A τ_k^{2-2s} + B τ_k^2` for `T`.
fn richardson3(q: [f64; 3], tau: [f64; 3], s: f64) -> f64 {
    let a: Vec<[f64; 4]> = (0..3).map(|k| [1.0, tau[k].powf(2.0 - 2.0 * s), tau[k] * tau[k], q[k]]).collect();
    let mut m = [a[0], a[1], a[2]];
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    m[0][3] / m[0][0]
}

/// `-lim t^{1-2s} ∂_t ū` on the `x`-lattice.
pub fn neumann_trace(ext: &ExtensionField, p: &Params) -> Result<NeumannTrace> {
    neumann_trace_on(ext, p, &|_| true)
}

/// [`neumann_trace`] restricted to the lattice nodes accepted by `keep`.
pub fn neumann_trace_on(ext: &ExtensionField, p: &Params, keep: &dyn Fn(&[f64]) -> bool) -> Result<NeumannTrace> {
    let s = p.s;
    let ts = &ext.t_nodes;
    let small = ts.iter().filter(|&&t| t < 0.1 * ext.t_max).count();
    if small < 4 || ts.len() < 5 {
        return Err(Error::InvalidParams(format!("need at least 4 t-nodes below {}, have {small}", 0.1 * ext.t_max)));
    }
    let two_s = 2.0 * s;
    let pair = |ix: usize, k: usize| -> (f64, f64) {
        let (t1, t2) = (ts[k], ts[k + 1]);
        let q = -two_s * (ext.value(ix, k + 1) - ext.value(ix, k)) / (t2.powf(two_s) - t1.powf(two_s));
        (q, (t1 * t2).sqrt())
    };
    let mut values = Vec::new();
    let mut spread = Vec::new();
    let mut nodes = Vec::new();
    for ix in (0..ext.x_nodes.len()).filter(|&i| keep(&ext.x_nodes[i])) {
        nodes.push(ext.x_nodes[ix].clone());
        let est = |k0: usize| {
            let (a, b, c) = (pair(ix, k0), pair(ix, k0 + 1), pair(ix, k0 + 2));
            richardson3([a.0, b.0, c.0], [a.1, b.1, c.1], s)
        };
        let v = est(0);
        values.push(v);
        spread.push((v - est(1)).abs());
    }
    let finite: Vec<(f64, f64)> = values.iter().zip(&spread).filter(|(v, _)| v.is_finite()).map(|(a, b)| (*a, *b)).collect();
    let scale = finite.iter().map(|v| v.0.abs()).fold(0.0, f64::max).max(1e-8);
    let certificate = finite.iter().map(|v| v.1).fold(0.0, f64::max) / scale;
    if !(certificate <= TRACE_TOLERANCE) {
        return Err(Error::Extrapolation { spread: certificate });
    }
    Ok(NeumannTrace { x_nodes: nodes, values, order: 3, spread, certificate })
}

// ---------------------------------------------------------------- residual

/// `max |A + B| / max (|A| + |B|)` over interior nodes, where
/// `A = t^{1-2s} Δ_x ū` and `B = ∂_t(t^{1-2s} ∂_t ū) = t^{1-2s}(ū_tt + (1-2s) ū_t / t)` by finite
/// differences.
/// The denominator is floored at `1e-6` of the field scale
/// `t^{1-2s} |ū| / Δ^2`, so round-off on exact solutions reads as zero.
/// Nodes whose stencil touches a non-finite value are skipped.
pub fn extension_pde_residual(ext: &ExtensionField, p: &Params) -> f64 {
    let a = 1.0 - 2.0 * p.s;
    let ts = &ext.t_nodes;
    let hx = match &ext.x_lattice {
        XLattice::Grid { spacing, .. } => *spacing,
        XLattice::Radial { radii, .. } => radii.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
    };
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for ix in 0..ext.x_nodes.len() {
        for it in 1..ts.len().saturating_sub(1) {
            let Some(lap) = ext.x_laplacian(ix, it) else { continue };
            let (t0, t1, t2) = (ts[it - 1], ts[it], ts[it + 1]);
            let (u0, u1, u2) = (ext.value(ix, it - 1), ext.value(ix, it), ext.value(ix, it + 1));
            // three-point derivatives; second order on geometric grids
            let (h1, h2) = (t1 - t0, t2 - t1);
            let d2 = 2.0 * (h1 * u2 - (h1 + h2) * u1 + h2 * u0) / (h1 * h2 * (h1 + h2));
            let d1 = (h1 * h1 * u2 + (h2 * h2 - h1 * h1) * u1 - h2 * h2 * u0) / (h1 * h2 * (h1 + h2));
            let bt = t1.powf(a) * (d2 + a / t1 * d1);
            let at = t1.powf(a) * lap;
            if !(at.is_finite() && bt.is_finite()) {
                continue;
            }
            num = num.max((at + bt).abs());
            den = den.max(at.abs() + bt.abs());
            let step = hx.min(t1 - t0);
            scale = scale.max(t1.powf(a) * u1.abs() / (step * step));
        }
    }
    let floor = 1e-6 * scale;
    if num == 0.0 {
        return 0.0;
    }
    num / den.max(floor).max(f64::MIN_POSITIVE)
}

/// Residual for `ext` and for the extension of the refined base: spacing
/// halved in `x`, grading ratio `√ratio` in `t`. Returns `(coarse, fine)`.
pub fn residual_refinement(u: &Field, p: &Params, window: f64) -> Result<(f64, f64)> {
    let coarse = poisson_extend_window(u, p, &default_t_nodes(u), window)?;
    let fine_u = u.refined()?;
    let fine_t = graded_t_nodes(fine_u.spacing() / 4.0, DEFAULT_T_MAX, GRADING_RATIO.sqrt());
    let fine = poisson_extend_window(&fine_u, p, &fine_t, window)?;
    Ok((extension_pde_residual(&coarse, p), extension_pde_residual(&fine, p)))
}

/// Constants for callers that need `κ_s` alongside a trace.
pub fn kappa(p: &Params) -> Result<f64> {
    Ok(constants(p)?.kappa_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::field::{Lattice, Tail};
    use crate::nonlocal::{calibrate_singular_constant, frac_laplacian, PvQuadratureScheme};

    fn p(n: usize, s: f64) -> Params {
        Params::new(n, s).unwrap()
    }

    #[test]
    fn constant_extends_to_itself() {
        let pp = p(1, 0.5);
        let u = corpus::constant(&pp, 1.0).unwrap();
        let e = poisson_extend(&u, &pp, &default_t_nodes(&u)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!(e.mass_residual < 1e-6);
        let tr = neumann_trace(&e, &pp).unwrap();
        assert!(tr.values.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(extension_pde_residual(&e, &pp), 0.0);
    }

    #[test]
    fn indicator_extension_is_boundary_mass() {
        let pp = p(1, 0.5);
        let u = Field::from_fn(corpus::default_lattice(1), Tail::Zero, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 })
            .unwrap()
            .with_features(vec![Sphere::new(vec![0.0], 1.0)]);
        let k = PoissonKernel::new(&pp).unwrap();
        let mut prev = 1.0;
        for &t in &[0.05, 0.2, 0.7, 2.0] {
            let v = k.extend_at(&u, &[0.0], t);
            let g = boundary_mass_at(&pp, 1.0, &[0.0], t).unwrap();
            assert!(v > 0.0 && v < 1.0 && v < prev);
            // half-plane harmonic measure: (2/π) atan(1/t)
            let exact = 2.0 / std::f64::consts::PI * (1.0 / t).atan();
            assert!((v - exact).abs() < 1e-8 && (g - exact).abs() < 1e-9, "t={t}: {v} {g} {exact}");
            prev = v;
        }
    }

    #[test]
    fn boundary_mass_limits_and_delta() {
        let pp = p(1, 0.5);
        assert!(boundary_mass_at(&pp, 1.0, &[0.3], 1e-6).unwrap() > 0.99);
        assert!(boundary_mass_at(&pp, 1.0, &[0.0], 10.0).unwrap() < boundary_mass_at(&pp, 1.0, &[0.0], 0.1).unwrap());
        let d = delta_certificate(&pp).unwrap();
        assert!(d.delta > 0.0 && d.refinement_change < 1e-3, "{d:?}");
        // worst point is x = 1/2 on the rim or the top of the half disc
        let g = boundary_mass_at(&pp, 1.0, &[0.0], 0.5).unwrap();
        assert!(d.delta <= g + 1e-12);
        let r0 = measured_r0(&pp, 0.1).unwrap();
        assert!(r0 > 0.0 && r0 < 0.5);
        for &r in &[0.0, 0.25, 0.5] {
            assert!(boundary_mass_at(&pp, 1.0, &[r], r0 * 0.99).unwrap() >= 0.9);
        }
    }

    #[test]
    fn boundary_mass_in_three_dimensions() {
        let pp = p(3, 0.4);
        let a = boundary_mass_at(&pp, 1.0, &[0.2, 0.0, 0.0], 0.3).unwrap();
        let b = boundary_mass_at(&pp, 1.0, &[0.0, 0.2, 0.0], 0.3).unwrap();
        assert!((a - b).abs() < 1e-12 && a > 0.0 && a < 1.0);
    }

    #[test]
    fn bump_trace_matches_operator() {
        let pp = p(1, 0.5);
        let u = corpus::bump(&pp).unwrap();
        let e = poisson_extend_window(&u, &pp, &default_t_nodes(&u), 0.25).unwrap();
        let tr = neumann_trace(&e, &pp).unwrap();
        let kap = kappa(&pp).unwrap();
        let sc = PvQuadratureScheme::for_field(&u);
        for (x, v) in tr.x_nodes.iter().zip(&tr.values) {
            let fl = frac_laplacian(&u, x, &pp, &sc).unwrap();
            assert!((v - kap * fl).abs() < 1e-2 * (kap * fl).abs(), "x={x:?}: {v} vs {}", kap * fl);
        }
    }

    #[test]
    fn golden_trace_on_annulus() {
        let pp = p(1, 0.25);
        let cal = calibrate_singular_constant(&pp).unwrap();
        let u = corpus::log_profile(&pp, cal.lambda.ln(), corpus::default_lattice(1)).unwrap();
        let e = poisson_extend_window(&u, &pp, &default_t_nodes(&u), 0.6).unwrap();
        let kap = kappa(&pp).unwrap();
        let tr = neumann_trace_on(&e, &pp, &|x| (0.3..=0.6).contains(&norm(x))).unwrap();
        assert!(!tr.x_nodes.is_empty());
        for (x, v) in tr.x_nodes.iter().zip(&tr.values) {
            let want = kap * u.eval(x).exp();
            assert!((v - want).abs() < 1e-2 * want, "x={x:?}: {v} vs {want}");
        }
    }

    #[test]
    fn affine_extension_has_zero_residual() {
        let pp = p(1, 0.7);
        let u = Field::from_fn(corpus::default_lattice(1), Tail::Zero, |x| x[0]).unwrap();
        let e = poisson_extend(&u, &pp, &default_t_nodes(&u)).unwrap();
        let r = extension_pde_residual(&e, &pp);
        assert!(r < 1e-8, "{r}");
        for (ix, x) in e.x_nodes.iter().enumerate() {
            assert!((e.value(ix, 3) - x[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn residual_converges_under_refinement() {
        let pp = p(1, 0.5);
        let u = Field::from_fn(Lattice::Grid { n: 1, half_width: 4.0, per_axis: 129 }, Tail::Zero, |x| {
            0.5 * (-x[0] * x[0]).exp()
        })
        .unwrap();
        let (c, f) = residual_refinement(&u, &pp, 0.5).unwrap();
        assert!(c / f >= 1.8, "{c} {f}");
    }

    #[test]
    fn ordered_data_give_ordered_extensions() {
        let pp = p(2, 0.3);
        let lat = Lattice::Grid { n: 2, half_width: 2.0, per_axis: 17 };
        let u = Field::from_fn(lat.clone(), Tail::Zero, |x| (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        let v = Field::from_fn(lat, Tail::Zero, |x| (-(x[0] * x[0] + x[1] * x[1])).exp() + 0.1 * (-(x[0] - 0.5f64).powi(2)).exp())
            .unwrap();
        let t = graded_t_nodes(0.05, 2.0, 1.8);
        let eu = poisson_extend_window(&u, &pp, &t, 0.5).unwrap();
        let ev = poisson_extend_window(&v, &pp, &t, 0.5).unwrap();
        for (a, b) in eu.values.iter().zip(&ev.values) {
            assert!(a <= b && *a <= 1.0 + 1e-9 && *a >= 0.0);
        }
        assert!(eu.to_csv().lines().count() == 1 + eu.values.len());
    }
}
