//! Closed-loop iterations: the internal-model (structured) algorithm and the plain
//! gradient-tracking (unstructured) recursion it generalizes.

use nalgebra::{DMatrix, DVector};

use crate::consensus::ConsensusTriplet;
use crate::cost::{Cost, LocalCost};
use crate::error::{Error, Result};
use crate::internal_model::Realization;

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Sparse `M ⊗ I_n`: each agent only reads the blocks of its graph neighbours.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl LocalOperator {
    pub fn new(base: &DMatrix<f64>, n: usize) -> Self {
        let rows = (0..base.nrows())
            .map(|i| {
                (0..base.ncols())
                    .filter(|&j| base[(i, j)] != 0.0)
                    .map(|j| (j, base[(i, j)]))
                    .collect()
            })
            .collect();
        Self { n, rows }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    /// Agents whose blocks agent `i` reads.
    pub fn support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i].iter().map(|(j, _)| *j)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(x.len());
        for (i, row) in self.rows.iter().enumerate() {
            let mut blk = out.rows_mut(i * n, n);
            for &(j, a) in row {
                blk.axpy(a, &x.rows(j * n, n), 1.0);
            }
        }
        out
    }
}

/// The network problem: costs and consensus operators.
#[derive(Debug, Clone)]
pub struct Network {
    pub n: usize,
    pub costs: Vec<LocalCost>,
    w1: LocalOperator,
    w2sq: LocalOperator,
    w3: LocalOperator,
}

impl Network {
    pub fn new(triplet: &ConsensusTriplet, costs: Vec<LocalCost>) -> Result<Self> {
        if costs.len() != triplet.agents() {
            return Err(Error::Argument("one cost per agent required".into()));
        }
        if costs.iter().any(|c| c.dim() != triplet.n) {
            return Err(Error::Argument("cost dimension differs from the triplet lift".into()));
        }
        let n = triplet.n;
        Ok(Self {
            n,
            costs,
            w1: LocalOperator::new(&triplet.w1, n),
            w2sq: LocalOperator::new(&triplet.w2sq, n),
            w3: LocalOperator::new(&triplet.w3, n),
        })
    }

    pub fn agents(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.agents() * self.n
    }

    /// Stacked local gradients `(∇f_{i,k}(x_i))_i`.
    pub fn gradients(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut g = DVector::zeros(x.len());
        for (i, c) in self.costs.iter().enumerate() {
            let xi = x.rows(i * n, n).into_owned();
            g.rows_mut(i * n, n).copy_from(&c.gradient(k, &xi));
        }
        g
    }

    /// Agent average `x̄ = (1/N) Σ_i x_i`.
    pub fn average(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut avg = DVector::zeros(n);
        for i in 0..self.agents() {
            avg += x.rows(i * n, n);
        }
        avg / self.agents() as f64
    }
}

/// A discrete-time distributed algorithm driven by time-varying costs.
pub trait Algorithm {
    /// Current primal estimate `x_k` (stacked over agents).
    fn output(&self) -> DVector<f64>;

    /// Consumes the costs at time `k` and advances to `k + 1`.
    fn step(&mut self, k: usize) -> Result<()>;

    /// Norm of the full internal state, used for divergence detection.
    fn state_norm(&self) -> f64;
}

/// Controller parameters of the structured algorithm.
#[derive(Debug, Clone)]
pub struct ControllerParams {
    pub mu: f64,
    pub tau: f64,
    pub realization: Realization,
    pub h: DVector<f64>,
}

/// Internal-model algorithm in substituted dual coordinates: both controllers see the local
/// gradients `g_x = μ∇f_k(y) + W3 y + u` and `g_ω = W2² y`, run `ξ⁺ = F ξ + G g`, and return
/// `y = H ξ`, `u = -τ H ω`. The primal estimate is `x = W1 y`.
#[derive(Debug, Clone)]
pub struct Structured {
    net: Network,
    params: ControllerParams,
    /// `m × (N n)`: column `c` holds the controller state of coordinate `c`.
    xi: DMatrix<f64>,
    omega: DMatrix<f64>,
    y: DVector<f64>,
    u: DVector<f64>,
}

impl Structured {
    pub fn new(net: Network, params: ControllerParams) -> Result<Self> {
        let m = params.realization.order();
        if params.h.len() != m || m == 0 {
            return Err(Error::Argument("gain length must equal the model order".into()));
        }
        let d = net.dim();
        Ok(Self {
            net,
            params,
            xi: DMatrix::zeros(m, d),
            omega: DMatrix::zeros(m, d),
            y: DVector::zeros(d),
            u: DVector::zeros(d),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Output of the primal controller before the `W1` combination.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn advance(f: &DMatrix<f64>, g: &DVector<f64>, state: &mut DMatrix<f64>, input: &DVector<f64>) {
        let mut next = f * &*state;
        next += g * input.transpose();
        *state = next;
    }
}

impl Algorithm for Structured {
    fn output(&self) -> DVector<f64> {
        self.net.w1.apply(&self.y)
    }

    fn step(&mut self, k: usize) -> Result<()> {
        let p = &self.params;
        let mut gx = self.net.gradients(k, &self.y) * p.mu;
        if !self.net.w3.is_zero() {
            gx += self.net.w3.apply(&self.y);
        }
        gx += &self.u;
        let gw = self.net.w2sq.apply(&self.y);
        let (f, g) = (&p.realization.f, &p.realization.g);
        Self::advance(f, g, &mut self.xi, &gx);
        Self::advance(f, g, &mut self.omega, &gw);
        self.y = (p.h.transpose() * &self.xi).transpose();
        self.u = (p.h.transpose() * &self.omega).transpose() * -p.tau;
        check_divergence(k, self.state_norm())
    }

    fn state_norm(&self) -> f64 {
        (self.xi.norm_squared() + self.omega.norm_squared()).sqrt()
    }
}

/// Gradient-tracking recursion `z = x - (μ∇f_k(x) + v + W3 x)`, `v⁺ = v + W2² z`, `x⁺ = W1 z`.
#[derive(Debug, Clone)]
pub struct Unstructured {
    net: Network,
    mu: f64,
    x: DVector<f64>,
    v: DVector<f64>,
}

impl Unstructured {
    pub fn new(net: Network, mu: f64) -> Self {
        let d = net.dim();
        Self {
            net,
            mu,
            x: DVector::zeros(d),
            v: DVector::zeros(d),
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
}

impl Algorithm for Unstructured {
    fn output(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn step(&mut self, k: usize) -> Result<()> {
        let mut z = &self.x - self.net.gradients(k, &self.x) * self.mu - &self.v;
        if !self.net.w3.is_zero() {
            z -= self.net.w3.apply(&self.x);
        }
        self.v += self.net.w2sq.apply(&z);
        self.x = self.net.w1.apply(&z);
        check_divergence(k, self.state_norm())
    }

    fn state_norm(&self) -> f64 {
        (self.x.norm_squared() + self.v.norm_squared()).sqrt()
    }
}

fn check_divergence(step: usize, norm: f64) -> Result<()> {
    if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { step, norm });
    }
    Ok(())
}

/// Runs `steps` iterations, handing `(k, x_k)` to `observe` before each step consumes `f_k`.
pub fn run_simulation<A: Algorithm + ?Sized>(
    alg: &mut A,
    steps: usize,
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<()> {
    for k in 0..steps {
        observe(k, &alg.output());
        alg.step(k)?;
    }
    Ok(())
}
