//! Reference fields used by the examples, the acceptance suite and the CLI.

use crate::constants::Params;
use crate::error::Result;
use crate::field::{Field, Lattice, Tail};
use crate::geometry::{dist, norm, origin, Point, Sphere};

/// Default full-grid lattice for closure-built fields: `[-4, 4]^n`.
pub fn default_lattice(n: usize) -> Lattice {
    let per_axis = match n {
        1 => 257,
        2 => 65,
        _ => 33,
    };
    Lattice::Grid { n, half_width: 4.0, per_axis }
}

/// Radial lattice for radially symmetric fields in any dimension.
pub fn radial_lattice(n: usize) -> Lattice {
    Lattice::Radial { n, r_min: 1e-3, r_max: 8.0, count: 1025 }
}

fn lattice_for(p: &Params) -> Lattice {
    if p.n <= 3 { default_lattice(p.n) } else { radial_lattice(p.n) }
}

pub fn constant(p: &Params, c: f64) -> Result<Field> {
    let tail = if c == 0.0 { Tail::Zero } else { Tail::Constant(c) };
    Ok(Field::from_fn(lattice_for(p), tail, move |_| c)?.with_radial_center(origin(p.n)))
}

/// `A exp(-|x - c|^2 / w^2)`.
pub fn gaussian_bump(p: &Params, amplitude: f64, width: f64, center: Point) -> Result<Field> {
    let c = center.clone();
    let f = Field::from_fn(lattice_for(p), Tail::Zero, move |x| amplitude * (-(dist(x, &c) / width).powi(2)).exp())?;
    Ok(f.with_radial_center(center))
}

/// The bump used throughout the examples: `0.5 exp(-|x|^2)`.
pub fn bump(p: &Params) -> Result<Field> {
    gaussian_bump(p, 0.5, 1.0, origin(p.n))
}

/// `(1 - |x|^2)_+^s`.
pub fn dyda_profile(p: &Params) -> Result<Field> {
    let s = p.s;
    let f = Field::from_fn(lattice_for(p), Tail::Zero, move |x| (1.0 - norm(x).powi(2)).max(0.0).powf(s))?;
    Ok(f.with_radial_center(origin(p.n)).with_features(vec![Sphere::new(origin(p.n), 1.0)]))
}

/// `-2s log|x| + ln_lambda`; `+inf` at the origin.
pub fn log_profile(p: &Params, ln_lambda: f64, lattice: Lattice) -> Result<Field> {
    log_profile_at(p, ln_lambda, origin(p.n), lattice)
}

/// [`log_profile`] translated to `center`.
pub fn log_profile_at(p: &Params, ln_lambda: f64, center: Point, lattice: Lattice) -> Result<Field> {
    let s = p.s;
    let c = center.clone();
    let f = Field::from_fn(lattice, Tail::Log { a: -2.0 * s, b: ln_lambda }, move |x| -2.0 * s * dist(x, &c).ln() + ln_lambda)?;
    Ok(f.with_radial_center(center.clone()).with_features(vec![Sphere::point(center)]))
}

/// `max(0, 1 - |x|)`.
pub fn tent(p: &Params) -> Result<Field> {
    let f = Field::from_fn(lattice_for(p), Tail::Zero, |x| (1.0 - norm(x)).max(0.0))?;
    let o = origin(p.n);
    Ok(f.with_radial_center(o.clone()).with_features(vec![Sphere::point(o.clone()), Sphere::new(o, 1.0)]))
}

/// Named smooth members of the corpus.
pub fn smooth_corpus(p: &Params) -> Result<Vec<(String, Field)>> {
    let mut shifted = origin(p.n);
    shifted[0] = 0.3;
    Ok(vec![
        ("const_-2".into(), constant(p, -2.0)?),
        ("const_0".into(), constant(p, 0.0)?),
        ("bump".into(), bump(p)?),
        ("bump_shifted".into(), gaussian_bump(p, 0.8, 0.7, shifted)?),
        ("low_bump".into(), gaussian_bump(p, -1.0, 1.5, origin(p.n))?),
    ])
}
