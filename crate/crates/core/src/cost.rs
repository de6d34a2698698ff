//! Time-varying local costs and their gradient oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the time-varying linear term `b_{i,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Constant,
    Ramp,
    Sine,
    SineSquared,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Constant,
        SignalKind::Ramp,
        SignalKind::Sine,
        SignalKind::SineSquared,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Constant => "constant",
            SignalKind::Ramp => "ramp",
            SignalKind::Sine => "sine",
            SignalKind::SineSquared => "sine_squared",
        }
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" | "const" => Ok(SignalKind::Constant),
            "ramp" => Ok(SignalKind::Ramp),
            "sine" | "sin" => Ok(SignalKind::Sine),
            "sine_squared" | "sine2" | "sin2" => Ok(SignalKind::SineSquared),
            other => Err(Error::Argument(format!("unknown signal '{other}'"))),
        }
    }
}

/// Deterministic generator of `b_k`: `b̄`, `k·b̄`, `sin(νk)·d` or `sin²(νk)·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGenerator {
    pub kind: SignalKind,
    pub vector: DVector<f64>,
    pub nu: f64,
}

impl SignalGenerator {
    pub fn new(kind: SignalKind, vector: DVector<f64>, nu: f64) -> Self {
        Self { kind, vector, nu }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn scalar(&self, k: usize) -> f64 {
        let k = k as f64;
        match self.kind {
            SignalKind::Constant => 1.0,
            SignalKind::Ramp => k,
            SignalKind::Sine => (self.nu * k).sin(),
            SignalKind::SineSquared => (self.nu * k).sin().powi(2),
        }
    }

    pub fn value(&self, k: usize) -> DVector<f64> {
        &self.vector * self.scalar(k)
    }
}

/// A differentiable local cost `f_k : R^n -> R`.
pub trait Cost {
    fn dim(&self) -> usize;
    fn value(&self, k: usize, x: &DVector<f64>) -> f64;
    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
}

/// `½ xᵀA x + ⟨b_k, x⟩` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticAgentCost {
    pub a: DMatrix<f64>,
    pub signal: SignalGenerator,
    eig_lo: f64,
    eig_hi: f64,
}

impl QuadraticAgentCost {
    pub fn new(a: DMatrix<f64>, signal: SignalGenerator) -> Result<Self> {
        let (eig_lo, eig_hi) = spd_bounds(&a)?;
        if signal.dim() != a.nrows() {
            return Err(Error::Argument("signal and Hessian dimensions differ".into()));
        }
        Ok(Self { a, signal, eig_lo, eig_hi })
    }

    /// `(λ_min, λ_max)` of `A`.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        (self.eig_lo, self.eig_hi)
    }
}

impl Cost for QuadraticAgentCost {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + self.signal.value(k).dot(x)
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.a * x;
        g.axpy(self.signal.scalar(k), &self.signal.vector, 1.0);
        g
    }
}

/// `½ xᵀA x + ⟨b, x⟩ + sin(νk)·log(1 + exp(cᵀx))` with constant `b` and unit `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonQuadraticAgentCost {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub nu: f64,
}

impl NonQuadraticAgentCost {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, nu: f64) -> Result<Self> {
        spd_bounds(&a)?;
        if (c.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("c must be a unit vector, |c| = {}", c.norm())));
        }
        if b.len() != a.nrows() || c.len() != a.nrows() {
            return Err(Error::Argument("cost dimensions differ".into()));
        }
        Ok(Self { a, b, c, nu })
    }
}

/// Logistic function, evaluated without overflow for either sign of `t`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl Cost for NonQuadraticAgentCost {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        let s = (self.nu * k as f64).sin();
        0.5 * x.dot(&(&self.a * x)) + self.b.dot(x) + s * softplus(self.c.dot(x))
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let s = (self.nu * k as f64).sin();
        let mut g = &self.a * x + &self.b;
        g.axpy(s * logistic(self.c.dot(x)), &self.c, 1.0);
        g
    }
}

/// A local cost of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalCost {
    Quadratic(QuadraticAgentCost),
    NonQuadratic(NonQuadraticAgentCost),
}

impl LocalCost {
    /// Hessian of the quadratic part; exact for quadratic costs.
    pub fn nominal_hessian(&self) -> &DMatrix<f64> {
        match self {
            LocalCost::Quadratic(q) => &q.a,
            LocalCost::NonQuadratic(q) => &q.a,
        }
    }

    /// Exact Hessian at time `k`.
    pub fn hessian(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            LocalCost::Quadratic(q) => q.a.clone(),
            LocalCost::NonQuadratic(q) => {
                let s = (q.nu * k as f64).sin();
                let p = logistic(q.c.dot(x));
                &q.a + &q.c * q.c.transpose() * (s * p * (1.0 - p))
            }
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticAgentCost> {
        match self {
            LocalCost::Quadratic(q) => Some(q),
            LocalCost::NonQuadratic(_) => None,
        }
    }
}

impl Cost for LocalCost {
    fn dim(&self) -> usize {
        match self {
            LocalCost::Quadratic(q) => q.dim(),
            LocalCost::NonQuadratic(q) => q.dim(),
        }
    }

    fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        match self {
            LocalCost::Quadratic(q) => q.value(k, x),
            LocalCost::NonQuadratic(q) => q.value(k, x),
        }
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalCost::Quadratic(q) => q.gradient(k, x),
            LocalCost::NonQuadratic(q) => q.gradient(k, x),
        }
    }
}

fn spd_bounds(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Argument("Hessian must be square and non-empty".into()));
    }
    if (a - a.transpose()).amax() > 1e-10 * a.amax().max(1.0) {
        return Err(Error::Argument("Hessian must be symmetric".into()));
    }
    let ev = a.clone().symmetric_eigen().eigenvalues;
    let lo = ev.min();
    let hi = ev.max();
    if lo <= 0.0 {
        return Err(Error::Argument(format!("Hessian not positive definite (λ_min = {lo})")));
    }
    Ok((lo, hi))
}

/// Minimizer of `Σ_i f_{i,k}`: `x* = -(Σ A_i)⁻¹ Σ b_{i,k}`.
pub fn optimal_point(costs: &[QuadraticAgentCost], k: usize) -> Result<DVector<f64>> {
    let first = costs
        .first()
        .ok_or_else(|| Error::Argument("no costs given".into()))?;
    let n = first.dim();
    let mut a_sum = DMatrix::zeros(n, n);
    let mut b_sum = DVector::zeros(n);
    for c in costs {
        a_sum += &c.a;
        b_sum.axpy(c.signal.scalar(k), &c.signal.vector, 1.0);
    }
    let chol = a_sum
        .cholesky()
        .ok_or_else(|| Error::Singular("aggregate Hessian not positive definite".into()))?;
    Ok(-chol.solve(&b_sum))
}

/// `V Λ Vᵀ` with `V` orthogonal (QR of a seeded Gaussian matrix) and `Λ ~ U[lo, hi]`.
pub fn random_spd(n: usize, lo: f64, hi: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Argument(format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = g.qr().q();
    let lambda = DVector::from_fn(n, |_, _| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    });
    let m = &v * DMatrix::from_diagonal(&lambda) * v.transpose();
    Ok((&m + m.transpose()) * 0.5)
}

/// Seeded Gaussian direction normalized to unit length.
pub fn random_unit_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Seeded standard Gaussian vector.
pub fn random_gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Max componentwise error between central differences and the analytic gradient,
/// relative to `max(|g_i|, 1)`.
pub fn finite_difference_check(cost: &dyn Cost, k: usize, x: &DVector<f64>, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let g = cost.gradient(k, x);
    let mut worst = 0.0_f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = cost.value(k, &probe);
        probe[i] = x[i] - h;
        let down = cost.value(k, &probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
    }
    worst
}
