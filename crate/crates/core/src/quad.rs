//! Adaptive quadrature on finite intervals.
//!
//! Thin layer over the double-exponential rule from the `quadrature` crate:
//! an interval whose error estimate misses the relative target is bisected
//! and retried, down to a fixed depth. Intervals spanning several orders of
//! magnitude above 0 are split at their geometric mean instead.

use thiserror::Error;

const MAX_DEPTH: u32 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate}, error {error_estimate}")]
pub struct QuadratureError {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub error_estimate: f64,
}

/// Integrate `f` over `[lo, hi]` to relative tolerance `rel_tol`.
///
/// Integrands may have integrable endpoint singularities; non-finite samples
/// are treated as zero by the underlying rule.
pub fn integrate<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    if hi <= lo {
        return Ok(0.0);
    }
    // A coarse first pass fixes the absolute scale for the tolerance.
    let coarse = quadrature::integrate(&f, lo, hi, 1e-3);
    let scale = coarse.integral.abs().max(1e-300);
    let target = rel_tol * scale;
    let mut worst = 0.0_f64;
    let value = refine(&f, lo, hi, target, 0, &mut worst);
    if worst > target {
        return Err(QuadratureError {
            lo,
            hi,
            estimate: value,
            error_estimate: worst,
        });
    }
    Ok(value)
}

fn refine<F>(f: &F, lo: f64, hi: f64, target: f64, depth: u32, worst: &mut f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let out = quadrature::integrate(f, lo, hi, target);
    if out.error_estimate <= target || depth >= MAX_DEPTH {
        if out.error_estimate > target {
            *worst = worst.max(out.error_estimate);
        }
        return out.integral;
    }
    // near-singular behaviour at a small positive endpoint needs log-scale splits
    let mid = if lo > 0.0 && hi > 64.0 * lo {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    };
    refine(f, lo, mid, 0.5 * target, depth + 1, worst) + refine(f, mid, hi, 0.5 * target, depth + 1, worst)
}

/// `exp(x) * E1(x)` for `x > 0`, where `E1` is the exponential integral.
pub fn scaled_exp_integral_e1(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    assert!(x > 0.0, "E1 needs a positive argument");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}
