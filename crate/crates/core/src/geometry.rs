//! Spherical means, ball and half-ball integrals in `R^n`.
//!
//! An integrand is a point function plus optional structure: a radial centre
//! (the function depends only on `|y - q|`) and a list of spheres across which
//! it is not smooth. Radial integrands reduce every spherical mean to one polar
//! angle in any dimension; general integrands are supported for `n <= 3`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quad::{gauss_legendre, graded_rule, integrate, integrate_graded, Tol};
use crate::special::sphere_area;

pub type Point = Vec<f64>;

/// A sphere `|y - center| = radius`; radius zero marks a point singularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Point,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn point(center: Point) -> Self {
        Self { center, radius: 0.0 }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn origin(n: usize) -> Point {
    vec![0.0; n]
}

pub fn axis_point(n: usize, r: f64) -> Point {
    let mut p = vec![0.0; n];
    p[0] = r;
    p
}

pub struct Integrand<'a> {
    pub f: &'a dyn Fn(&[f64]) -> f64,
    pub radial_center: Option<&'a [f64]>,
    pub features: &'a [Sphere],
}

impl<'a> Integrand<'a> {
    pub fn new(f: &'a dyn Fn(&[f64]) -> f64, radial_center: Option<&'a [f64]>, features: &'a [Sphere]) -> Self {
        Self { f, radial_center, features }
    }
}

/// Distances `ρ` from `x` at which the sphere `∂B_ρ(x)` touches a feature.
pub fn radial_breaks(x: &[f64], features: &[Sphere]) -> Vec<f64> {
    let mut out = Vec::new();
    for sp in features {
        let d = dist(x, &sp.center);
        out.push((sp.radius - d).abs());
        out.push(sp.radius + d);
    }
    out.retain(|r| *r > 0.0 && r.is_finite());
    out
}

/// Breakpoints along a line `c + τ e_1` (one dimension only).
fn line_breaks(features: &[Sphere]) -> Vec<f64> {
    let mut out = Vec::new();
    for sp in features {
        out.push(sp.center[0] - sp.radius);
        out.push(sp.center[0] + sp.radius);
    }
    out
}

fn orthonormal_pair(e: &[f64]) -> Vec<f64> {
    // unit vector orthogonal to e
    let n = e.len();
    let mut k = 0;
    for i in 0..n {
        if e[i].abs() < e[k].abs() {
            k = i;
        }
    }
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    let dot: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
    for i in 0..n {
        v[i] -= dot * e[i];
    }
    let nv = norm(&v);
    v.iter().map(|a| a / nv).collect()
}

fn sin_power_normalizer(n: usize) -> f64 {
    // ∫_0^π sin^{n-2}θ dθ
    sphere_area(n) / sphere_area(n - 1)
}

/// Average of the integrand over `∂B_ρ(x)`.
pub fn sphere_mean(n: usize, x: &[f64], rho: f64, g: &Integrand, tol: Tol) -> f64 {
    let f = g.f;
    if rho == 0.0 {
        return f(x);
    }
    if n == 1 {
        return 0.5 * (f(&[x[0] + rho]) + f(&[x[0] - rho]));
    }
    let mut y = vec![0.0; n];
    if let Some(q) = g.radial_center {
        let d = dist(x, q);
        if d <= 1e-14 * (1.0 + rho) {
            y.copy_from_slice(q);
            y[0] += rho;
            return f(&y);
        }
        let e: Vec<f64> = x.iter().zip(q).map(|(a, b)| (a - b) / d).collect();
        let e_perp = orthonormal_pair(&e);
        let mut breaks = Vec::new();
        for sp in g.features {
            if dist(&sp.center, q) <= 1e-12 {
                let c = (sp.radius * sp.radius - d * d - rho * rho) / (2.0 * d * rho);
                if c > -1.0 && c < 1.0 {
                    breaks.push(c.acos());
                }
            }
        }
        let w = sin_power_normalizer(n);
        let pw = n as f64 - 2.0;
        let r = integrate(
            |th: f64| {
                let (sn, cs) = th.sin_cos();
                for i in 0..n {
                    y[i] = x[i] + rho * (cs * e[i] + sn * e_perp[i]);
                }
                let wt = if n == 2 { 1.0 } else { sn.powf(pw) };
                wt * f(&y)
            },
            0.0,
            PI,
            &breaks,
            tol,
        );
        return r.value / w;
    }
    match n {
        2 => {
            let mut breaks = Vec::new();
            for sp in g.features {
                let v = [x[0] - sp.center[0], x[1] - sp.center[1]];
                let nv = norm(&v);
                if nv == 0.0 {
                    continue;
                }
                let k = (sp.radius * sp.radius - nv * nv - rho * rho) / (2.0 * rho * nv);
                if k > -1.0 && k < 1.0 {
                    let pv = v[1].atan2(v[0]);
                    let a = k.acos();
                    for phi in [pv + a, pv - a] {
                        breaks.push(phi.rem_euclid(2.0 * PI));
                    }
                }
            }
            let r = integrate(
                |phi: f64| {
                    let (sn, cs) = phi.sin_cos();
                    y[0] = x[0] + rho * cs;
                    y[1] = x[1] + rho * sn;
                    f(&y)
                },
                0.0,
                2.0 * PI,
                &breaks,
                tol,
            );
            r.value / (2.0 * PI)
        }
        3 => {
            // polar axis towards the first feature centre
            let axis = g
                .features
                .iter()
                .find_map(|sp| {
                    let d = dist(x, &sp.center);
                    (d > 0.0).then(|| sp.center.iter().zip(x).map(|(c, a)| (c - a) / d).collect::<Vec<_>>())
                })
                .unwrap_or_else(|| vec![0.0, 0.0, 1.0]);
            let u = orthonormal_pair(&axis);
            let v = [
                axis[1] * u[2] - axis[2] * u[1],
                axis[2] * u[0] - axis[0] * u[2],
                axis[0] * u[1] - axis[1] * u[0],
            ];
            let mut breaks = Vec::new();
            if let Some(sp) = g.features.first() {
                let d = dist(x, &sp.center);
                if d > 0.0 {
                    // |x + ρω - c|² = d² + ρ² - 2dρ cosθ
                    let c = (d * d + rho * rho - sp.radius * sp.radius) / (2.0 * d * rho);
                    if c > -1.0 && c < 1.0 {
                        breaks.push(c.acos());
                    }
                }
            }
            let inner = tol.inner();
            let r = integrate(
                |th: f64| {
                    let (st, ct) = th.sin_cos();
                    let mut y = [0.0; 3];
                    let ring = integrate(
                        |phi: f64| {
                            let (sp, cp) = phi.sin_cos();
                            for i in 0..3 {
                                y[i] = x[i] + rho * (ct * axis[i] + st * (cp * u[i] + sp * v[i]));
                            }
                            f(&y)
                        },
                        0.0,
                        2.0 * PI,
                        &[],
                        inner,
                    );
                    st * ring.value
                },
                0.0,
                PI,
                &breaks,
                tol,
            );
            r.value / (4.0 * PI)
        }
        _ => panic!("non-radial spherical means are limited to n <= 3"),
    }
}

/// `∫_{B_R(c)} f`.
pub fn ball_integral(n: usize, c: &[f64], radius: f64, g: &Integrand, tol: Tol) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    if n == 1 {
        let f = g.f;
        return integrate_graded(|y| f(&[y]), c[0] - radius, c[0] + radius, &line_breaks(g.features), tol).value;
    }
    let area = sphere_area(n);
    let inner = tol.inner();
    let breaks = radial_breaks(c, g.features);
    let pw = n as f64 - 1.0;
    integrate(|rho| area * rho.powf(pw) * sphere_mean(n, c, rho, g, inner), 0.0, radius, &breaks, tol).value
}

/// `∫_{D_r(x0)} t^{a} F(x, t) dx dt` over the half ball
/// `{ |(x - x0, t)| < r, t > 0 }`. `slice(t)` returns the integrand in `x`.
pub fn half_ball_integral<S>(n: usize, x0: &[f64], r: f64, weight_exp: f64, slice: S, tol: Tol) -> f64
where
    S: Fn(f64, &[f64]) -> f64,
{
    half_ball_integral_with(n, x0, r, weight_exp, &slice, None, &[], &[], tol)
}

/// As [`half_ball_integral`], carrying structure of the `x`-integrand and
/// extra breakpoints in `t`.
#[allow(clippy::too_many_arguments)]
pub fn half_ball_integral_with(
    n: usize,
    x0: &[f64],
    r: f64,
    weight_exp: f64,
    slice: &dyn Fn(f64, &[f64]) -> f64,
    radial_center: Option<&[f64]>,
    features: &[Sphere],
    t_breaks: &[f64],
    tol: Tol,
) -> f64 {
    let inner = tol.inner();
    integrate(
        |t: f64| {
            if t <= 0.0 || t >= r {
                return 0.0;
            }
            let rad = (r * r - t * t).sqrt();
            let f = |x: &[f64]| slice(t, x);
            let g = Integrand::new(&f, radial_center, features);
            t.powf(weight_exp) * ball_integral(n, x0, rad, &g, inner)
        },
        0.0,
        r,
        t_breaks,
        tol,
    )
    .value
}

/// Product rule on `S^{n-1}` (weights sum to `|S^{n-1}|`); `m` sets the
/// resolution. `S^{n-1}` is sliced along the last axis, with weight
/// `(1 - z^2)^{(n-3)/2}` on each slice.
pub fn sphere_rule(n: usize, m: usize) -> Vec<(Point, f64)> {
    match n {
        0 => panic!("sphere rule in dimension 0"),
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let k = 8 * m;
            (0..k)
                .map(|i| {
                    let th = 2.0 * PI * (i as f64 + 0.5) / k as f64;
                    (vec![th.cos(), th.sin()], 2.0 * PI / k as f64)
                })
                .collect()
        }
        _ => {
            let (gx, gw) = gauss_legendre(4 * m);
            let lower = sphere_rule(n - 1, m);
            let mut out = Vec::with_capacity(gx.len() * lower.len());
            for (z, wz) in gx.iter().zip(&gw) {
                let rad = (1.0 - z * z).sqrt();
                let wz = wz * (1.0 - z * z).powf((n as f64 - 3.0) / 2.0);
                for (d, wd) in &lower {
                    let mut x: Point = d.iter().map(|v| rad * v).collect();
                    x.push(*z);
                    out.push((x, wz * wd));
                }
            }
            out
        }
    }
}

/// One node of [`half_ball_rule`]: `(y, t)` in `D_1` with weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfBallNode {
    pub y: Point,
    pub t: f64,
    pub weight: f64,
}

/// Fixed rule for `∫_{D_1} t^a F(y, t)`, `D_1 = {|(y, t)| < 1, t > 0}`, in
/// polar form about the origin; the weights carry `t^a` and sum to
/// `∫_{D_1} t^a`.
pub fn half_ball_rule(n: usize, a: f64, panels: usize, m: usize) -> Vec<HalfBallNode> {
    let radial = graded_rule(0.0, 1.0, &[], panels, m);
    // polar angle from the t-axis; near t = 0 substitute w = cos^{1+a}
    let mut polar: Vec<(f64, f64, f64)> = graded_rule(0.0, 0.25 * PI, &[], panels, m)
        .into_iter()
        .map(|(ph, w)| {
            let (sp, cp) = ph.sin_cos();
            (sp, cp, w * cp.powf(a) * sp.powi(n as i32 - 1))
        })
        .collect();
    let wmax = std::f64::consts::FRAC_1_SQRT_2.powf(1.0 + a);
    for (w, ww) in graded_rule(0.0, wmax, &[], panels, m) {
        let cp = w.powf(1.0 / (1.0 + a));
        let sp = (1.0 - cp * cp).sqrt();
        polar.push((sp, cp, ww * sp.powf(n as f64 - 2.0) / (1.0 + a)));
    }
    let dirs = sphere_rule(n, m.div_ceil(2).max(1));
    let mut out = Vec::with_capacity(radial.len() * polar.len() * dirs.len());
    for (sg, ws) in &radial {
        for &(sp, cp, wp) in &polar {
            let w = ws * sg.powf(n as f64 + a) * wp;
            if !(w > 0.0) {
                continue;
            }
            for (d, wd) in &dirs {
                out.push(HalfBallNode { y: d.iter().map(|v| sg * sp * v).collect(), t: sg * cp, weight: w * wd });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_rules_integrate_weights() {
        use crate::constants::{constants, Params};
        for n in 1..=4 {
            let w: f64 = sphere_rule(n, 3).iter().map(|v| v.1).sum();
            assert!((w - sphere_area(n)).abs() < 1e-3 * sphere_area(n), "n={n}: {w}");
            // second moment of one coordinate: |S^{n-1}| / n
            let m2: f64 = sphere_rule(n, 3).iter().map(|v| v.1 * v.0[0] * v.0[0]).sum();
            assert!((m2 - sphere_area(n) / n as f64).abs() < 1e-3, "n={n}: {m2}");
        }
        for &(n, s) in &[(1, 0.25), (1, 0.75), (2, 0.5), (3, 0.3)] {
            let p = Params::new(n, s).unwrap();
            let c = constants(&p).unwrap().c_s;
            let w: f64 = half_ball_rule(n, p.weight_exponent(), 3, 10).iter().map(|v| v.weight).sum();
            assert!((w - c).abs() < 1e-5 * c, "n={n} s={s}: {w} vs {c}");
        }
    }

    #[test]
    fn ball_volumes() {
        let one = |_: &[f64]| 1.0;
        let tol = Tol::new(1e-13, 1e-11, 200);
        for n in 1..=3 {
            let exact = sphere_area(n) / n as f64 * 2f64.powi(n as i32);
            let c = vec![0.3; n];
            let g = Integrand::new(&one, None, &[]);
            let v = ball_integral(n, &c, 2.0, &g, tol);
            assert!((v - exact).abs() < 1e-9 * exact, "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn radial_reduction_matches_general_rule() {
        // f(y) = exp(-|y - q|^2), ball not centred at q
        let q = vec![0.4, -0.2, 0.1];
        let f = |y: &[f64]| (-dist(y, &q).powi(2)).exp();
        let c = vec![-0.1, 0.2, 0.3];
        let tol = Tol::new(1e-13, 1e-10, 200);
        for n in 2..=3 {
            let qn = &q[..n];
            let cn = &c[..n];
            let fr = |y: &[f64]| (-dist(y, qn).powi(2)).exp();
            let a = ball_integral(n, cn, 1.2, &Integrand::new(&fr, Some(qn), &[]), tol);
            let b = ball_integral(n, cn, 1.2, &Integrand::new(&fr, None, &[]), tol);
            assert!((a - b).abs() < 1e-8 * b, "n={n}: {a} vs {b}");
        }
        let _ = f;
    }

    #[test]
    fn radial_mean_in_high_dimension() {
        // mean of |y|^2 over ∂B_ρ(x) is |x|^2 + ρ^2 in any dimension
        for n in [2usize, 4, 7] {
            let q = origin(n);
            let f = |y: &[f64]| norm(y).powi(2);
            let x = axis_point(n, 0.7);
            let m = sphere_mean(n, &x, 0.5, &Integrand::new(&f, Some(&q), &[]), Tol::default());
            assert!((m - (0.49 + 0.25)).abs() < 1e-10, "n={n}: {m}");
        }
    }

    #[test]
    fn half_disk_area() {
        let v = half_ball_integral(1, &[0.0], 1.0, 0.0, |_, _| 1.0, Tol::new(1e-12, 1e-10, 200));
        assert!((v - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn ball_with_singular_point() {
        // ∫_{B_1} |y|^{-1} over R^2 = 2π
        let q = origin(2);
        let f = |y: &[f64]| 1.0 / norm(y);
        let feats = [Sphere::point(q.clone())];
        let v = ball_integral(2, &[0.0, 0.0], 1.0, &Integrand::new(&f, Some(&q), &feats), Tol::default());
        assert!((v - 2.0 * PI).abs() < 1e-8, "{v}");
    }
}
