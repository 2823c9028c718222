//! Seeded Monte-Carlo estimates used as independent cross-checks of the
//! quadrature-based constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{operator_constant, Params};
use crate::error::{Error, Result};
use crate::special::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl McEstimate {
    /// `|mean - exact|` in units of the standard error.
    pub fn sigmas_from(&self, exact: f64) -> f64 {
        (self.mean - exact).abs() / self.std_err
    }
}

fn summarize(xs: &[f64], samples: usize) -> McEstimate {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    McEstimate { mean, std_err: (var / m).sqrt(), samples }
}

/// `∫_{D_1} t^{1-2s}` by sampling `t` from the density `∝ t^{1-2s}` and
/// `y` uniformly in the cube.
pub fn half_ball_weight_mc(p: &Params, samples: usize, seed: u64) -> McEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = p.weight_exponent();
    let scale = 2f64.powi(p.n as i32) / (1.0 + a);
    // batch means keep the error estimate cheap
    let batches = 64;
    let per = (samples / batches).max(1);
    let means: Vec<f64> = (0..batches)
        .map(|_| {
            let mut hits = 0usize;
            for _ in 0..per {
                let t: f64 = rng.gen::<f64>().powf(1.0 / (1.0 + a));
                let mut r2 = t * t;
                for _ in 0..p.n {
                    let y: f64 = rng.gen_range(-1.0..1.0);
                    r2 += y * y;
                }
                if r2 < 1.0 {
                    hits += 1;
                }
            }
            scale * hits as f64 / per as f64
        })
        .collect();
    summarize(&means, batches * per)
}

/// `ln((1+ρ²)² - 4ρ²z²)`, the sum of `ln|e_1 ± ρω|²` for `ω·e_1 = z`.
fn ln_pair(rho: f64, z: f64) -> f64 {
    if rho <= 1.0 {
        ((1.0 + rho * rho).powi(2) - 4.0 * rho * rho * z * z).ln()
    } else {
        let q = 1.0 / (rho * rho);
        4.0 * rho.ln() + ((1.0 + q).powi(2) - 4.0 * z * z * q).ln()
    }
}

/// `λ = |x|^{2s} (-Δ)^s(-2s log|·|)(x)` at `x = e_1`, by stratified sampling
/// of the polar form `C |S^{n-1}| ∫ ρ^{-1-2s} D(ρ) dρ` with `D` the sphere
/// mean of the difference, antithetic in `ω ↦ -ω`. Supports `n <= 3`.
pub fn golden_lambda_mc(p: &Params, strata: usize, replicates: usize, seed: u64) -> Result<McEstimate> {
    if p.n > 3 {
        return Err(Error::InvalidParams(format!("sampling oracle supports n <= 3, got {}", p.n)));
    }
    if replicates < 2 || strata == 0 {
        return Err(Error::InvalidParams("need at least two replicates and one stratum".into()));
    }
    let s = p.s;
    let n = p.n;
    let z_of = |w: f64| match n {
        1 => 1.0,
        2 => (std::f64::consts::PI * w).cos(),
        _ => 2.0 * w - 1.0,
    };
    // D(ρ, z) = u(e_1) - mean of u over e_1 ± ρω with u = -2s log|·|
    let d = |rho: f64, z: f64| 0.5 * s * ln_pair(rho, z);
    let front = operator_constant(p) * sphere_area(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / strata as f64;
    let mut reps = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut near = 0.0;
        let mut far = 0.0;
        for i in 0..strata {
            for j in 0..strata {
                let v = (i as f64 + rng.gen::<f64>()) * h;
                let w = (j as f64 + rng.gen::<f64>()) * h;
                let z = z_of(w);
                let g = v.powf(-1.0 - 2.0 * s) * d(v, z);
                if g.is_finite() {
                    near += g;
                }
                let v2 = (i as f64 + rng.gen::<f64>()) * h;
                let w2 = (j as f64 + rng.gen::<f64>()) * h;
                // ρ = τ^{-1/(2s)} on (1, ∞): ρ^{-1-2s} dρ = dτ / (2s)
                let rho = v2.powf(-1.0 / (2.0 * s));
                let g2 = d(rho, z_of(w2)) / (2.0 * s);
                if g2.is_finite() {
                    far += g2;
                }
            }
        }
        reps.push(front * (near + far) * h * h);
    }
    Ok(summarize(&reps, 2 * replicates * strata * strata))
}
