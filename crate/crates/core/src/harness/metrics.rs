use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::cost::{Cost, LocalCost};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "k,epsilon,consensus_err,track_err";

/// One row of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// `‖Σ_i ∇f_{i,k}(x̄_k)‖²`.
    pub epsilon: f64,
    /// `‖x_k - 1 ⊗ x̄_k‖`.
    pub consensus_err: f64,
    /// `‖x̄_k - x*_k‖`.
    pub track_err: f64,
}

/// Squared norm of the aggregate gradient at `x̄`.
pub fn epsilon_metric(costs: &[LocalCost], k: usize, xbar: &DVector<f64>) -> f64 {
    costs
        .iter()
        .fold(DVector::zeros(xbar.len()), |acc, c| acc + c.gradient(k, xbar))
        .norm_squared()
}

/// Distance of the stacked estimate from its agent average.
pub fn consensus_error(x: &DVector<f64>, xbar: &DVector<f64>) -> f64 {
    let n = xbar.len();
    (0..x.len() / n)
        .map(|i| (x.rows(i * n, n) - xbar).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Largest value over the final `⌈fraction·len⌉` entries.
pub fn tail_max(values: &[f64], fraction: f64) -> f64 {
    let take = ((values.len() as f64 * fraction).ceil() as usize).min(values.len());
    values[values.len() - take..]
        .iter()
        .fold(f64::NEG_INFINITY, |a, &v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v) })
}

/// Steady-state error: worst `ε_k` once the first fifth of the run has passed.
pub fn asymptotic_error(epsilon: &[f64]) -> f64 {
    tail_max(epsilon, 0.8)
}

/// Minimizer of `Σ_i f_{i,k}` by damped Newton iterations from a warm start.
pub fn aggregate_minimizer(costs: &[LocalCost], k: usize, start: &DVector<f64>) -> Result<DVector<f64>> {
    let n = start.len();
    let mut x = start.clone();
    for _ in 0..50 {
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for c in costs {
            g += c.gradient(k, &x);
            h += c.hessian(k, &x);
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Singular("aggregate Hessian not positive definite".into()))?
            .solve(&g);
        x -= &step;
        if step.amax() <= 1e-14 * x.amax().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// `x` with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.k,
            format_float(r.epsilon),
            format_float(r.consensus_err),
            format_float(r.track_err)
        )?;
    }
    Ok(())
}
