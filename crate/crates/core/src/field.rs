//! Sampled scalar fields on `R^n` with analytic far-field tails, CSV I/O and
//! the norms used throughout the toolkit.
//!
//! A field is either a uniform lattice on `[-L, L]^n` (`n <= 3`) or a radial
//! profile on log-spaced radii. Fields built from a closure keep it and are
//! evaluated exactly off the lattice; fields read from files interpolate
//! linearly (in `log r` for radial profiles).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::Params;
use crate::error::{Error, Result};
use crate::geometry::{axis_point, ball_integral, dist, norm, origin, radial_breaks, sphere_mean, Integrand, Point, Sphere};
use crate::quad::{integrate, integrate_power_tail, Tol};
use crate::special::sphere_area;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Far-field model used outside the sampled region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tail {
    Zero,
    Constant(f64),
    /// `a log|x| + b`
    Log { a: f64, b: f64 },
}

impl Tail {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Tail::Zero => 0.0,
            Tail::Constant(c) => c,
            Tail::Log { a, b } => a * r.ln() + b,
        }
    }

    fn kind(&self) -> (&'static str, f64, f64) {
        match *self {
            Tail::Zero => ("zero", 0.0, 0.0),
            Tail::Constant(c) => ("const", 0.0, c),
            Tail::Log { a, b } => ("log", a, b),
        }
    }

    /// Tail of `u^λ(x) = u(x0 + λx) + 2s log λ`, ignoring the shift `x0`.
    fn rescaled(&self, lambda: f64, s: f64) -> Tail {
        let shift = 2.0 * s * lambda.ln();
        match *self {
            Tail::Zero => Tail::Constant(shift),
            Tail::Constant(c) => Tail::Constant(c + shift),
            Tail::Log { a, b } => Tail::Log { a, b: b + (a + 2.0 * s) * lambda.ln() },
        }
    }

    fn mapped(&self, scale: f64, offset: f64) -> Tail {
        match *self {
            Tail::Zero if offset == 0.0 => Tail::Zero,
            Tail::Zero => Tail::Constant(offset),
            Tail::Constant(c) => Tail::Constant(scale * c + offset),
            Tail::Log { a, b } => Tail::Log { a: scale * a, b: scale * b + offset },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Nodes `-L + i h`, `i = 0..per_axis`, on every axis.
    Grid { n: usize, half_width: f64, spacing: f64, per_axis: usize },
    /// Radii `r_1 < ... < r_m` along any ray.
    Radial { n: usize, radii: Vec<f64> },
}

#[derive(Clone)]
pub struct Field {
    layout: Layout,
    values: Vec<f64>,
    tail: Tail,
    source: Option<PointFn>,
    radial_center: Option<Point>,
    features: Vec<Sphere>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("layout", &self.layout)
            .field("tail", &self.tail)
            .field("exact", &self.source.is_some())
            .field("radial_center", &self.radial_center)
            .finish()
    }
}

/// Which geometry a closure-built field is sampled on.
#[derive(Debug, Clone, PartialEq)]
pub enum Lattice {
    Grid { n: usize, half_width: f64, per_axis: usize },
    Radial { n: usize, r_min: f64, r_max: f64, count: usize },
}

impl Lattice {
    fn layout(&self) -> Result<Layout> {
        match *self {
            Lattice::Grid { n, half_width, per_axis } => {
                if !(1..=3).contains(&n) {
                    return Err(Error::InvalidParams(format!("full grids need n <= 3, got {n}")));
                }
                if per_axis < 2 || half_width <= 0.0 {
                    return Err(Error::InvalidParams("degenerate grid".into()));
                }
                let spacing = 2.0 * half_width / (per_axis as f64 - 1.0);
                Ok(Layout::Grid { n, half_width, spacing, per_axis })
            }
            Lattice::Radial { n, r_min, r_max, count } => {
                if count < 2 || !(r_min > 0.0 && r_max > r_min) {
                    return Err(Error::InvalidParams("degenerate radial lattice".into()));
                }
                let q = (r_max / r_min).ln() / (count as f64 - 1.0);
                let radii = (0..count).map(|i| r_min * (q * i as f64).exp()).collect();
                Ok(Layout::Radial { n, radii })
            }
        }
    }
}

impl Layout {
    pub fn dim(&self) -> usize {
        match self {
            Layout::Grid { n, .. } | Layout::Radial { n, .. } => *n,
        }
    }

    fn node_count(&self) -> usize {
        match self {
            Layout::Grid { n, per_axis, .. } => per_axis.pow(*n as u32),
            Layout::Radial { radii, .. } => radii.len(),
        }
    }

    fn node(&self, idx: usize) -> Point {
        match self {
            Layout::Grid { n, half_width, spacing, per_axis } => {
                let mut p = vec![0.0; *n];
                let mut k = idx;
                for d in (0..*n).rev() {
                    p[d] = -half_width + (k % per_axis) as f64 * spacing;
                    k /= per_axis;
                }
                p
            }
            Layout::Radial { n, radii } => axis_point(*n, radii[idx]),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Layout::Grid { half_width, spacing, .. } => {
                if *spacing > half_width / 8.0 + 1e-12 {
                    return Err(Error::Schema(format!("grid spacing {spacing} exceeds L/8 = {}", half_width / 8.0)));
                }
            }
            Layout::Radial { radii, .. } => {
                if radii.len() < 16 {
                    return Err(Error::Schema(format!("radial profiles need at least 16 radii, got {}", radii.len())));
                }
                if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Schema("radii must be positive and strictly increasing".into()));
                }
            }
        }
        Ok(())
    }
}

impl Field {
    /// Sample `f` on `lattice`, keeping it for exact evaluation. Non-finite
    /// samples are kept and mark singular lattice points.
    pub fn from_fn<F>(lattice: Lattice, tail: Tail, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let layout = lattice.layout()?;
        layout.validate()?;
        let values = (0..layout.node_count()).map(|i| f(&layout.node(i))).collect();
        let radial_center = matches!(layout, Layout::Radial { .. }).then(|| origin(layout.dim()));
        Ok(Self { layout, values, tail, source: Some(Arc::new(f)), radial_center, features: Vec::new() })
    }

    /// Declare the closure radially symmetric about `center`.
    pub fn with_radial_center(mut self, center: Point) -> Self {
        self.radial_center = Some(center);
        self
    }

    /// Declare spheres across which the field is not smooth.
    pub fn with_features(mut self, features: Vec<Sphere>) -> Self {
        self.features = features;
        self
    }

    pub fn from_grid_samples(n: usize, half_width: f64, per_axis: usize, values: Vec<f64>, tail: Tail) -> Result<Self> {
        let layout = Lattice::Grid { n, half_width, per_axis }.layout()?;
        layout.validate()?;
        if values.len() != layout.node_count() {
            return Err(Error::Schema(format!("expected {} samples, got {}", layout.node_count(), values.len())));
        }
        Ok(Self { layout, values, tail, source: None, radial_center: None, features: Vec::new() })
    }

    pub fn from_radial_samples(n: usize, radii: Vec<f64>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        let layout = Layout::Radial { n, radii };
        layout.validate()?;
        if values.len() != layout.node_count() {
            return Err(Error::Schema("radii and values differ in length".into()));
        }
        let rmax = match &layout {
            Layout::Radial { radii, .. } => *radii.last().unwrap(),
            _ => unreachable!(),
        };
        Ok(Self {
            layout,
            values,
            tail,
            source: None,
            radial_center: Some(origin(n)),
            // the centre is a break: profiles may diverge there
            features: vec![Sphere::point(origin(n)), Sphere::new(origin(n), rmax)],
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_exact(&self) -> bool {
        self.source.is_some()
    }

    pub fn radial_center(&self) -> Option<&[f64]> {
        self.radial_center.as_deref()
    }

    pub fn features(&self) -> &[Sphere] {
        &self.features
    }

    pub fn is_radial_mode(&self) -> bool {
        matches!(self.layout, Layout::Radial { .. })
    }

    /// Lattice spacing; for radial profiles the smallest radial gap.
    pub fn spacing(&self) -> f64 {
        match &self.layout {
            Layout::Grid { spacing, .. } => *spacing,
            Layout::Radial { radii, .. } => radii.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
        }
    }

    /// Radius of the largest origin-centred ball inside the sampled region.
    pub fn domain_radius(&self) -> f64 {
        match &self.layout {
            Layout::Grid { half_width, .. } => *half_width,
            Layout::Radial { radii, .. } => *radii.last().unwrap(),
        }
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.layout.node_count()).map(|i| self.layout.node(i)).collect()
    }

    /// Nodes with their sample values.
    pub fn samples(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        (0..self.layout.node_count()).map(move |i| (self.layout.node(i), self.values[i]))
    }

    /// Whether `B_r(c)` lies in the sampled region.
    pub fn contains_ball(&self, c: &[f64], r: f64) -> bool {
        let slack = 1e-12 * (1.0 + r);
        match &self.layout {
            Layout::Grid { half_width, .. } => c.iter().all(|x| x.abs() + r <= half_width + slack),
            Layout::Radial { radii, .. } => norm(c) + r <= radii.last().unwrap() + slack,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(f) = &self.source {
            return f(x);
        }
        match &self.layout {
            Layout::Grid { n, half_width, spacing, per_axis } => {
                if x.iter().any(|v| v.abs() > *half_width) {
                    return self.tail.value(norm(x));
                }
                let mut base = [0usize; 3];
                let mut frac = [0.0; 3];
                for d in 0..*n {
                    let pos = (x[d] + half_width) / spacing;
                    let i = (pos.floor() as usize).min(per_axis - 2);
                    base[d] = i;
                    frac[d] = pos - i as f64;
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << n) {
                    let mut w = 1.0;
                    let mut idx = 0;
                    for d in 0..*n {
                        let bit = (corner >> (n - 1 - d)) & 1;
                        w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                        idx = idx * per_axis + base[d] + bit;
                    }
                    if w != 0.0 {
                        acc += w * self.values[idx];
                    }
                }
                acc
            }
            Layout::Radial { radii, .. } => {
                let r = norm(x);
                let m = radii.len();
                if r > radii[m - 1] {
                    return self.tail.value(r);
                }
                if r == 0.0 {
                    // limit of the log-linear extrapolation below r_1
                    let slope = self.values[1] - self.values[0];
                    return if slope == 0.0 { self.values[0] } else { f64::INFINITY.copysign(-slope) };
                }
                let lr = r.ln();
                let k = match radii.binary_search_by(|v| v.total_cmp(&r)) {
                    Ok(k) => return self.values[k],
                    Err(0) => 0,
                    Err(k) => (k - 1).min(m - 2),
                };
                let (l0, l1) = (radii[k].ln(), radii[k + 1].ln());
                let w = (lr - l0) / (l1 - l0);
                (1.0 - w) * self.values[k] + w * self.values[k + 1]
            }
        }
    }

    /// Pointwise transform `scale * u + offset`.
    pub fn affine(&self, scale: f64, offset: f64) -> Field {
        let me = self.clone();
        let values = self.values.iter().map(|v| scale * v + offset).collect();
        Field {
            layout: self.layout.clone(),
            values,
            tail: self.tail.mapped(scale, offset),
            source: Some(Arc::new(move |x: &[f64]| scale * me.eval(x) + offset)),
            radial_center: self.radial_center.clone(),
            features: self.features.clone(),
        }
    }

    /// Positive part `u_+`.
    pub fn positive_part(&self) -> Field {
        let me = self.clone();
        Field {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            tail: match self.tail {
                Tail::Constant(c) => Tail::Constant(c.max(0.0)),
                t => t,
            },
            source: Some(Arc::new(move |x: &[f64]| me.eval(x).max(0.0))),
            radial_center: self.radial_center.clone(),
            features: self.features.clone(),
        }
    }

    /// A field on the same lattice with a different exact evaluator.
    pub fn with_evaluator<F>(&self, tail: Tail, f: F) -> Field
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let values = self.nodes().iter().map(|x| f(x)).collect();
        Field {
            layout: self.layout.clone(),
            values,
            tail,
            source: Some(Arc::new(f)),
            radial_center: self.radial_center.clone(),
            features: self.features.clone(),
        }
    }

    /// As [`Self::with_evaluator`] with node values supplied by the caller;
    /// they must agree with `f` at the nodes.
    pub fn with_evaluator_values<F>(&self, tail: Tail, values: Vec<f64>, f: F) -> Result<Field>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if values.len() != self.values.len() {
            return Err(Error::Schema(format!("expected {} node values, got {}", self.values.len(), values.len())));
        }
        Ok(Field {
            layout: self.layout.clone(),
            values,
            tail,
            source: Some(Arc::new(f)),
            radial_center: self.radial_center.clone(),
            features: self.features.clone(),
        })
    }

    pub fn without_radial_center(mut self) -> Self {
        self.radial_center = None;
        self
    }

    /// Resample a closure-built field on a lattice with half the spacing.
    pub fn refined(&self) -> Result<Field> {
        let f = self
            .source
            .clone()
            .ok_or_else(|| Error::InvalidParams("only closure-built fields can be refined".into()))?;
        let layout = match &self.layout {
            Layout::Grid { n, half_width, spacing, per_axis } => {
                Layout::Grid { n: *n, half_width: *half_width, spacing: spacing / 2.0, per_axis: 2 * per_axis - 1 }
            }
            Layout::Radial { n, radii } => {
                let mut r = Vec::with_capacity(2 * radii.len() - 1);
                for w in radii.windows(2) {
                    r.push(w[0]);
                    r.push((w[0] * w[1]).sqrt());
                }
                r.push(*radii.last().unwrap());
                Layout::Radial { n: *n, radii: r }
            }
        };
        let values = (0..layout.node_count()).map(|i| f(&layout.node(i))).collect();
        Ok(Field { layout, values, tail: self.tail, source: Some(f), radial_center: self.radial_center.clone(), features: self.features.clone() })
    }

    pub fn integrand<'a>(&'a self, f: &'a dyn Fn(&[f64]) -> f64) -> Integrand<'a> {
        Integrand::new(f, self.radial_center(), &self.features)
    }

    /// Default quadrature breakpoints relative to `x`, including the edge of
    /// the sampled region.
    pub fn breaks_from(&self, x: &[f64]) -> Vec<f64> {
        let mut b = radial_breaks(x, &self.features);
        let n = self.dim();
        let r = self.domain_radius();
        b.extend(radial_breaks(x, &[Sphere::new(origin(n), r)]));
        if !self.is_radial_mode() && !self.is_exact() {
            b.extend(radial_breaks(x, &[Sphere::new(origin(n), r * (n as f64).sqrt())]));
        }
        if n == 1 && !self.is_exact() {
            // the interpolant kinks at every node; splitting there keeps each panel smooth
            for i in 0..self.layout.node_count() {
                let d = (self.layout.node(i)[0] - x[0]).abs();
                if d > 0.0 && d <= r {
                    b.push(d);
                }
            }
        }
        b
    }
}

// ---------------------------------------------------------------- CSV

fn parse_header(line: &str) -> Result<std::collections::HashMap<String, String>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Schema("first line must be a '# key=value' header".into()))?;
    let mut map = std::collections::HashMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Schema(format!("malformed header token '{tok}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

/// Dimension and, when recorded, the order `s` from a CSV header.
pub fn csv_header_params(text: &str) -> Result<(usize, Option<f64>)> {
    let head = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| Error::Schema("empty input".into()))?;
    let map = parse_header(head)?;
    let n = header_num(&map, "n")? as usize;
    let s = if map.contains_key("s") { Some(header_num(&map, "s")?) } else { None };
    Ok((n, s))
}

fn header_num(map: &std::collections::HashMap<String, String>, key: &str) -> Result<f64> {
    let v = map.get(key).ok_or_else(|| Error::Schema(format!("header lacks '{key}'")))?;
    v.parse::<f64>().map_err(|_| Error::Schema(format!("header '{key}={v}' is not a number")))
}

fn parse_tail(map: &std::collections::HashMap<String, String>) -> Result<Tail> {
    let kind = map.get("tail").map(String::as_str).unwrap_or("zero");
    let num = |k: &str| -> Result<f64> {
        match map.get(k) {
            None => Ok(0.0),
            Some(v) => v.parse::<f64>().map_err(|_| Error::TailModel(format!("{k}={v} is not a number"))),
        }
    };
    let a = num("tail_a")?;
    let b = num("tail_b")?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::TailModel("tail coefficients must be finite".into()));
    }
    match kind {
        "zero" => Ok(Tail::Zero),
        "const" | "constant" => Ok(Tail::Constant(b)),
        "log" => Ok(Tail::Log { a, b }),
        other => Err(Error::TailModel(format!("unknown tail kind '{other}' (expected zero, const or log)"))),
    }
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() != width {
        return Err(Error::Schema(format!("line {lineno}: expected {width} columns, got {}", cols.len())));
    }
    let mut out = Vec::with_capacity(width);
    for c in cols {
        let v: f64 = c.parse().map_err(|_| Error::Schema(format!("line {lineno}: '{c}' is not a number")))?;
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { line: lineno });
        }
        out.push(v);
    }
    Ok(out)
}

impl Field {
    pub fn parse_csv(text: &str, p: &Params) -> Result<Field> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::Schema("empty input".into()))?;
        let map = parse_header(head)?;
        let n = header_num(&map, "n")? as usize;
        if n != p.n {
            return Err(Error::Schema(format!("file has n={n} but parameters request n={}", p.n)));
        }
        let tail = parse_tail(&map)?;
        match map.get("mode").map(String::as_str) {
            Some("full") => {
                let l = header_num(&map, "L")?;
                let h = header_num(&map, "h")?;
                let cells = 2.0 * l / h;
                if !(cells.is_finite() && cells >= 1.0) || (cells - cells.round()).abs() > 1e-6 {
                    return Err(Error::Schema(format!("2L/h = {cells} is not an integer")));
                }
                let m = cells.round() as usize + 1;
                let layout = Layout::Grid { n, half_width: l, spacing: 2.0 * l / (m - 1) as f64, per_axis: m };
                layout.validate()?;
                let expected = layout.node_count();
                let mut values = vec![f64::NAN; expected];
                let mut count = 0;
                for (i, line) in lines {
                    let row = parse_row(line, i + 1, n + 1)?;
                    count += 1;
                    if count > expected {
                        return Err(Error::Schema(format!("n={n} grid with {m} nodes per axis expects {expected} rows, got more")));
                    }
                    let mut idx = 0;
                    for d in 0..n {
                        let pos = (row[d] + l) / layout_spacing(&layout);
                        let k = pos.round();
                        if (pos - k).abs() > 1e-6 || k < 0.0 || k >= m as f64 {
                            return Err(Error::Schema(format!("line {}: coordinate {} is not a lattice node", i + 1, row[d])));
                        }
                        idx = idx * m + k as usize;
                    }
                    values[idx] = row[n];
                }
                if count != expected {
                    return Err(Error::Schema(format!("n={n} grid with {m} nodes per axis expects {expected} rows, got {count}")));
                }
                if values.iter().any(|v| v.is_nan()) {
                    return Err(Error::Schema("duplicate lattice rows".into()));
                }
                Ok(Field { layout, values, tail, source: None, radial_center: None, features: Vec::new() })
            }
            Some("radial") => {
                let mut radii = Vec::new();
                let mut values = Vec::new();
                for (i, line) in lines {
                    let row = parse_row(line, i + 1, 2)?;
                    radii.push(row[0]);
                    values.push(row[1]);
                }
                Field::from_radial_samples(n, radii, values, tail)
            }
            other => Err(Error::Schema(format!("unknown mode {other:?} (expected full or radial)"))),
        }
    }

    /// [`Field::to_csv`] with the order `s` recorded as an extra header key.
    pub fn to_csv_with_order(&self, s: f64) -> String {
        let csv = self.to_csv();
        let (head, rest) = csv.split_once('\n').unwrap_or((&csv, ""));
        format!("{head} s={s}\n{rest}")
    }

    pub fn load_csv(path: impl AsRef<Path>, p: &Params) -> Result<Field> {
        let text = std::fs::read_to_string(path)?;
        Field::parse_csv(&text, p)
    }

    pub fn to_csv(&self) -> String {
        let (kind, a, b) = self.tail.kind();
        let mut out = String::new();
        match &self.layout {
            Layout::Grid { n, half_width, spacing, .. } => {
                let _ = writeln!(out, "# mode=full n={n} L={half_width} h={spacing} tail={kind} tail_a={a} tail_b={b}");
                for (x, v) in self.samples() {
                    let coords: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
                    let _ = writeln!(out, "{},{v}", coords.join(","));
                }
            }
            Layout::Radial { n, radii } => {
                let _ = writeln!(out, "# mode=radial n={n} tail={kind} tail_a={a} tail_b={b}");
                for (r, v) in radii.iter().zip(&self.values) {
                    let _ = writeln!(out, "{r},{v}");
                }
            }
        }
        out
    }
}

fn layout_spacing(l: &Layout) -> f64 {
    match l {
        Layout::Grid { spacing, .. } => *spacing,
        Layout::Radial { .. } => unreachable!(),
    }
}

// ---------------------------------------------------------------- norms

const NORM_TOL: Tol = Tol::new(1e-13, 1e-9, 400);

/// `∫ |u(x)| / (1 + |x|^{n+2s}) dx` over `R^n`.
pub fn ls_norm(u: &Field, p: &Params) -> f64 {
    let n = u.dim();
    let s = p.s;
    let area = sphere_area(n);
    let o = origin(n);
    let absu = |x: &[f64]| u.eval(x).abs();
    let g = u.integrand(&absu);
    let inner_tol = NORM_TOL.inner();
    let mean = |rho: f64| sphere_mean(n, &o, rho, &g, inner_tol);
    let breaks = u.breaks_from(&o);
    let cut = breaks.iter().cloned().fold(u.domain_radius(), f64::max) * 1.5;
    let nn = n as f64;
    let inner = integrate(|r| area * r.powf(nn - 1.0) / (1.0 + r.powf(nn + 2.0 * s)) * mean(r), 0.0, cut, &breaks, NORM_TOL);
    let outer = integrate_power_tail(
        |r| {
            let q = r.powf(nn + 2.0 * s);
            area * q / (1.0 + q) * mean(r)
        },
        cut,
        2.0 * s,
        &[],
        NORM_TOL,
    );
    inner.value + outer.value
}

/// Shift for exponential integrals: the largest finite `p·u` seen on lattice
/// nodes inside the ball and at its centre.
fn log_shift(u: &Field, exponent: f64, c: &[f64], r: f64) -> f64 {
    let mut m = exponent * u.eval(c);
    if !m.is_finite() {
        m = f64::NEG_INFINITY;
    }
    for (x, v) in u.samples() {
        if dist(&x, c) <= r && v.is_finite() {
            m = m.max(exponent * v);
        }
    }
    if m.is_finite() { m } else { 0.0 }
}

/// `ln ∫_{B_r(c)} e^{p u}`, accumulated with a max shift.
pub fn ln_exp_ball_integral(u: &Field, exponent: f64, c: &[f64], r: f64, tol: Tol) -> f64 {
    let shift = log_shift(u, exponent, c, r);
    let f = |x: &[f64]| {
        let v = exponent * u.eval(x) - shift;
        if v == f64::INFINITY { f64::INFINITY } else { v.exp() }
    };
    let n = u.dim();
    let mut feats = u.features().to_vec();
    for (x, v) in u.samples() {
        if !v.is_finite() && dist(&x, c) <= r {
            feats.push(Sphere::point(x));
        }
    }
    let g = Integrand::new(&f, u.radial_center(), &feats);
    let i = ball_integral(n, c, r, &g, tol);
    shift + i.ln()
}

/// `∫_{B_r(c)} |u|^p`, or `∫_{B_r(c)} e^{p u}` when `exponentiate` is set.
pub fn lp_ball_norm(u: &Field, exponent: f64, c: &[f64], r: f64, exponentiate: bool) -> Result<f64> {
    if !u.contains_ball(c, r) {
        return Err(Error::OutsideDomain(format!("ball of radius {r} at {c:?}")));
    }
    if exponentiate {
        let l = ln_exp_ball_integral(u, exponent, c, r, NORM_TOL);
        let v = l.exp();
        if !v.is_finite() {
            return Err(Error::Overflow(format!("exp integral has log {l}")));
        }
        Ok(v)
    } else {
        let f = |x: &[f64]| u.eval(x).abs().powf(exponent);
        let g = u.integrand(&f);
        Ok(ball_integral(u.dim(), c, r, &g, NORM_TOL))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyDatum {
    pub p: f64,
    pub domain_radius: f64,
    pub norm_value: f64,
    pub argmax_center: f64,
    pub argmax_radius: f64,
}

/// Dyadic radii `2R, R, R/2, ...` down to the lattice spacing.
pub fn dyadic_radii(domain_radius: f64, finest: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 2.0 * domain_radius;
    while r >= finest * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// `sup ∫_{Ω ∩ B_r(x)} |f| / r^{n(1-1/p)}` with `Ω = B_R`, over lattice
/// centres in `Ω` and dyadic radii.
pub fn morrey_norm(f: &Field, p: f64, domain_radius: f64) -> MorreyDatum {
    use rayon::prelude::*;
    let n = f.dim();
    let o = origin(n);
    let expo = n as f64 * (1.0 - 1.0 / p);
    let mut centers: Vec<Point> = if f.is_radial_mode() {
        let mut v = vec![o.clone()];
        for (x, _) in f.samples() {
            if norm(&x) < domain_radius {
                v.push(x);
            }
        }
        v
    } else {
        f.nodes().into_iter().filter(|x| norm(x) <= domain_radius * (1.0 + 1e-12)).collect()
    };
    if centers.is_empty() {
        centers.push(o.clone());
    }
    let radii = dyadic_radii(domain_radius, f.spacing());
    let mut feats = f.features().to_vec();
    feats.push(Sphere::new(o.clone(), domain_radius));
    let absf = |y: &[f64]| if norm(y) < domain_radius { f.eval(y).abs() } else { 0.0 };
    let best: Vec<(f64, f64, f64)> = centers
        .par_iter()
        .map(|c| {
            let g = Integrand::new(&absf, f.radial_center(), &feats);
            let mut top = (0.0, 0.0, 0.0);
            for &r in &radii {
                let v = ball_integral(n, c, r, &g, Tol::new(1e-12, 1e-8, 200)) / r.powf(expo);
                if v > top.0 {
                    top = (v, norm(c), r);
                }
            }
            top
        })
        .collect();
    let mut top = (0.0, 0.0, 0.0);
    for b in best {
        if b.0 > top.0 {
            top = b;
        }
    }
    MorreyDatum { p, domain_radius, norm_value: top.0, argmax_center: top.1, argmax_radius: top.2 }
}

/// `u^λ(x) = u(x0 + λx) + 2s log λ`, resampled on the same lattice.
pub fn rescale(u: &Field, x0: &[f64], lambda: f64, p: &Params) -> Result<Field> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParams(format!("rescaling factor {lambda} must lie in (0, 1]")));
    }
    if x0.len() != u.dim() {
        return Err(Error::InvalidParams("centre has the wrong dimension".into()));
    }
    if !u.contains_ball(x0, 0.0) {
        return Err(Error::OutsideDomain(format!("rescaling window centre {x0:?} lies outside the sampled region")));
    }
    let shift = 2.0 * p.s * lambda.ln();
    let base = u.clone();
    let c: Vec<f64> = x0.to_vec();
    let eval = move |x: &[f64]| {
        let y: Vec<f64> = x.iter().zip(&c).map(|(xi, ci)| ci + lambda * xi).collect();
        base.eval(&y) + shift
    };
    let map_point = |q: &[f64]| -> Point { q.iter().zip(x0).map(|(a, b)| (a - b) / lambda).collect() };
    let mut out = u.with_evaluator(u.tail().rescaled(lambda, p.s), eval);
    out.radial_center = u.radial_center().map(map_point);
    out.features = u.features().iter().map(|sp| Sphere::new(map_point(&sp.center), sp.radius / lambda)).collect();
    if out.radial_center.is_some() && out.is_radial_mode() && norm(x0) > 0.0 {
        // radial-mode storage assumes symmetry about the origin
        out.values = out.nodes().iter().map(|x| out.eval(x)).collect();
    }
    Ok(out)
}

/// Largest ratio `‖u^λ_+‖_{L_s} / (1 + ‖u_+‖_{L_s})` over the given pairs.
pub fn ls_rescaling_constant(u: &Field, pairs: &[(Point, f64)], p: &Params) -> Result<f64> {
    let base = 1.0 + ls_norm(&u.positive_part(), p);
    let mut worst: f64 = 0.0;
    for (x0, lambda) in pairs {
        let ul = rescale(u, x0, *lambda, p)?;
        worst = worst.max(ls_norm(&ul.positive_part(), p) / base);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid1(c: f64) -> Field {
        Field::from_fn(Lattice::Grid { n: 1, half_width: 4.0, per_axis: 129 }, Tail::Constant(c), move |_| c).unwrap()
    }

    #[test]
    fn ls_norm_of_one_on_the_line() {
        let p = Params::new(1, 0.5).unwrap();
        let v = ls_norm(&grid1(1.0), &p);
        assert!((v - PI).abs() < 1e-4 * PI, "{v}");
        assert_eq!(ls_norm(&grid1(0.0), &p), 0.0);
    }

    #[test]
    fn ls_norm_homogeneous() {
        let p = Params::new(2, 0.3).unwrap();
        let u = Field::from_fn(Lattice::Grid { n: 2, half_width: 2.0, per_axis: 33 }, Tail::Zero, |x| {
            (1.0 - norm(x).powi(2)).max(0.0)
        })
        .unwrap()
        .with_radial_center(origin(2))
        .with_features(vec![Sphere::new(origin(2), 1.0)]);
        let a = ls_norm(&u, &p);
        let b = ls_norm(&u.affine(2.0, 0.0), &p);
        assert!((b / a - 2.0).abs() < 1e-9);
    }

    #[test]
    fn exp_ball_integrals() {
        let u = grid1(0.0);
        assert!((lp_ball_norm(&u, 1.0, &[0.0], 1.0, true).unwrap() - 2.0).abs() < 1e-12);
        assert!((lp_ball_norm(&u, 2.0, &[0.0], 1.0, true).unwrap() - 2.0).abs() < 1e-12);
        let s = 0.1;
        let sing = Field::from_fn(Lattice::Grid { n: 1, half_width: 2.0, per_axis: 64 }, Tail::Log { a: -2.0 * s, b: 0.0 }, move |x| {
            -2.0 * s * x[0].abs().ln()
        })
        .unwrap()
        .with_features(vec![Sphere::point(vec![0.0])]);
        let v = lp_ball_norm(&sing, 2.0, &[0.0], 1.0, true).unwrap();
        assert!((v - 2.0 / 0.6).abs() < 1e-6, "{v}");
        assert!(matches!(lp_ball_norm(&sing, 2.0, &[1.5], 1.0, true), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn morrey_of_indicator() {
        let f = Field::from_fn(Lattice::Grid { n: 1, half_width: 3.0, per_axis: 97 }, Tail::Constant(1.0), |_| 1.0).unwrap();
        let m = morrey_norm(&f, 2.0, 3.0);
        assert!((m.norm_value - 2.0 * 3f64.sqrt()).abs() < 1e-8, "{m:?}");
        let m3 = morrey_norm(&f.affine(3.0, 0.0), 2.0, 3.0);
        assert!((m3.norm_value / m.norm_value - 3.0).abs() < 1e-9);
        assert_eq!(morrey_norm(&grid1(0.0), 2.0, 3.0).norm_value, 0.0);
    }

    #[test]
    fn rescale_identity_and_singular_profile() {
        let p = Params::new(1, 0.3).unwrap();
        let u = Field::from_fn(Lattice::Grid { n: 1, half_width: 2.0, per_axis: 64 }, Tail::Zero, |x| (x[0] * 3.0).sin()).unwrap();
        let same = rescale(&u, &[0.0], 1.0, &p).unwrap();
        for (a, b) in u.values().iter().zip(same.values()) {
            assert_eq!(a, b);
        }
        let s = p.s;
        let sing = Field::from_fn(Lattice::Grid { n: 1, half_width: 2.0, per_axis: 64 }, Tail::Log { a: -2.0 * s, b: 0.0 }, move |x| {
            -2.0 * s * x[0].abs().ln()
        })
        .unwrap();
        let r = rescale(&sing, &[0.0], 0.37, &p).unwrap();
        for (a, b) in sing.values().iter().zip(r.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rescale(&u, &[0.0], 1.5, &p).is_err());
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let p = Params::new(2, 0.5).unwrap();
        let u = Field::from_fn(Lattice::Grid { n: 2, half_width: 1.0, per_axis: 33 }, Tail::Constant(0.5), |x| x[0] - x[1])
            .unwrap();
        let text = u.to_csv();
        let back = Field::parse_csv(&text, &p).unwrap();
        assert_eq!(back.values(), u.values());
        assert!((back.eval(&[0.01, 0.3]) - (0.01 - 0.3)).abs() < 1e-12);

        // 33^3 rows for n = 2
        let mut bad = String::from("# mode=full n=2 L=1 h=0.0625 tail=zero\n");
        for _ in 0..33 * 33 * 33 {
            bad.push_str("0,0,0\n");
        }
        assert!(matches!(Field::parse_csv(&bad, &p), Err(Error::Schema(_))));

        let p1 = Params::new(1, 0.5).unwrap();
        let mut nan = String::from("# mode=radial n=1 tail=zero\n");
        for i in 0..20 {
            let v = if i == 7 { "NaN".to_string() } else { "0".into() };
            nan.push_str(&format!("{},{}\n", 0.1 * (i + 1) as f64, v));
        }
        assert!(matches!(Field::parse_csv(&nan, &p1), Err(Error::NonFiniteSample { .. })));
        let badtail = "# mode=radial n=1 tail=cubic\n";
        assert!(matches!(Field::parse_csv(badtail, &p1), Err(Error::TailModel(_))));
    }

    #[test]
    fn radial_csv_with_log_tail() {
        let p = Params::new(3, 0.25).unwrap();
        let s = p.s;
        let mut text = format!("# mode=radial n=3 tail=log tail_a={} tail_b=0\n", -2.0 * s);
        for i in 0..32 {
            let r = 0.01 * 1.2f64.powi(i);
            text.push_str(&format!("{r},{}\n", -2.0 * s * r.ln()));
        }
        let u = Field::parse_csv(&text, &p).unwrap();
        assert!(u.is_radial_mode());
        assert_eq!(u.tail(), Tail::Log { a: -0.5, b: 0.0 });
        // log-linear interpolation reproduces the profile exactly
        let x = [0.0, 0.05, 0.0];
        assert!((u.eval(&x) - (-2.0 * s * 0.05f64.ln())).abs() < 1e-12);
        assert!((u.eval(&[0.0, 0.0, 100.0]) - (-2.0 * s * 100f64.ln())).abs() < 1e-12);
        // extrapolation below r_1 diverges at the centre
        assert!((u.eval(&[0.001, 0.0, 0.0]) - (-2.0 * s * 0.001f64.ln())).abs() < 1e-12);
        assert_eq!(u.eval(&[0.0; 3]), f64::INFINITY);
        let tagged = u.to_csv_with_order(s);
        assert_eq!(csv_header_params(&tagged).unwrap(), (3, Some(0.25)));
        assert_eq!(csv_header_params(&u.to_csv()).unwrap(), (3, None));
        assert_eq!(Field::parse_csv(&tagged, &p).unwrap().values(), u.values());
    }
}
