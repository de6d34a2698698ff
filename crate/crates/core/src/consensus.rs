//! Consensus matrix triplets `(W1, W2², W3)` of the unified gradient-tracking family.
//!
//! Triplets are stored as their `N×N` base matrices; every lifted operator is
//! `M ⊗ I_n` and is applied block-wise to stacked per-agent vectors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;

/// Eigenvalues below this (relative to the largest) count as zero in rank tests.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletName {
    AugDgm,
    ExactDiffusion,
    Diging,
    Extra,
    Custom,
}

impl TripletName {
    pub const TABLE: [TripletName; 4] = [
        TripletName::AugDgm,
        TripletName::ExactDiffusion,
        TripletName::Diging,
        TripletName::Extra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TripletName::AugDgm => "aug_dgm",
            TripletName::ExactDiffusion => "exact_diffusion",
            TripletName::Diging => "diging",
            TripletName::Extra => "extra",
            TripletName::Custom => "custom",
        }
    }
}

impl fmt::Display for TripletName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TripletName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "aug_dgm" | "augdgm" => Ok(TripletName::AugDgm),
            "exact_diffusion" => Ok(TripletName::ExactDiffusion),
            "diging" => Ok(TripletName::Diging),
            "extra" => Ok(TripletName::Extra),
            other => Err(Error::Argument(format!("unknown triplet '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTriplet {
    pub name: TripletName,
    /// Per-agent dimension used for the Kronecker lift.
    pub n: usize,
    pub w1: DMatrix<f64>,
    pub w2sq: DMatrix<f64>,
    pub w3: DMatrix<f64>,
}

/// Builds the Table-1 triplet for the given mixing matrix.
pub fn build_triplet(name: TripletName, w: &WeightMatrix, n: usize) -> Result<ConsensusTriplet> {
    if n == 0 {
        return Err(Error::Argument("per-agent dimension must be positive".into()));
    }
    w.check_stochastic()?;
    let w = w.matrix();
    let dim = w.nrows();
    let id = DMatrix::<f64>::identity(dim, dim);
    let lap = &id - w;
    let (w1, w2sq, w3) = match name {
        TripletName::AugDgm => (w * w, &lap * &lap, DMatrix::zeros(dim, dim)),
        TripletName::ExactDiffusion => ((&id + w) * 0.5, &lap * 0.5, DMatrix::zeros(dim, dim)),
        TripletName::Diging => (id.clone(), &lap * &lap, &id - w * w),
        TripletName::Extra => (id.clone(), &lap * 0.5, &lap * 0.5),
        TripletName::Custom => {
            return Err(Error::Argument(
                "custom triplets are built with ConsensusTriplet::custom".into(),
            ))
        }
    };
    Ok(ConsensusTriplet {
        name,
        n,
        w1,
        w2sq,
        w3,
    })
}

impl ConsensusTriplet {
    pub fn custom(w1: DMatrix<f64>, w2sq: DMatrix<f64>, w3: DMatrix<f64>, n: usize) -> Result<Self> {
        let dim = w1.nrows();
        for m in [&w1, &w2sq, &w3] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Argument("triplet matrices must share one square shape".into()));
            }
        }
        Ok(Self {
            name: TripletName::Custom,
            n,
            w1,
            w2sq,
            w3,
        })
    }

    /// Number of agents.
    pub fn agents(&self) -> usize {
        self.w1.nrows()
    }

    pub fn lifted_dim(&self) -> usize {
        self.agents() * self.n
    }

    /// `M ⊗ I_n` as a dense matrix.
    pub fn lift(&self, base: &DMatrix<f64>) -> DMatrix<f64> {
        base.kronecker(&DMatrix::<f64>::identity(self.n, self.n))
    }

    pub fn w1_lifted(&self) -> DMatrix<f64> {
        self.lift(&self.w1)
    }

    pub fn w2sq_lifted(&self) -> DMatrix<f64> {
        self.lift(&self.w2sq)
    }

    pub fn w3_lifted(&self) -> DMatrix<f64> {
        self.lift(&self.w3)
    }

    /// Whether `W3` is identically zero.
    pub fn w3_is_zero(&self) -> bool {
        self.w3.iter().all(|&v| v == 0.0)
    }

    /// Exports the three base matrices as CSV blocks.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (label, m) in [("W1", &self.w1), ("W2sq", &self.w2sq), ("W3", &self.w3)] {
            out.push_str(&format!("# {label} ({}, n={})\n", self.name, self.n));
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }
}

/// `(M ⊗ I_n) x` for a stacked vector `x` of `N` blocks of length `n`.
pub fn apply_lifted(base: &DMatrix<f64>, n: usize, x: &DVector<f64>) -> DVector<f64> {
    let agents = base.nrows();
    let mut out = DVector::zeros(agents * n);
    for i in 0..agents {
        for j in 0..agents {
            let a = base[(i, j)];
            if a != 0.0 {
                for r in 0..n {
                    out[i * n + r] += a * x[j * n + r];
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletReport {
    pub w2sq_symmetric_psd: bool,
    pub w2sq_kills_consensus: bool,
    /// Rank of the base `W2²` equals `N - 1`, so its null space is exactly the consensus subspace.
    pub w2sq_rank_exact: bool,
    pub w3_ok: bool,
    pub w1_doubly_stochastic: bool,
    pub failures: Vec<String>,
}

impl TripletReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn sym_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).amax() <= tol
}

/// Checks the structural conditions on a triplet. Never panics; failures are listed in the report.
pub fn validate_triplet(t: &ConsensusTriplet) -> TripletReport {
    let mut failures = Vec::new();
    let dim = t.agents();
    let ones = DVector::from_element(dim, 1.0);
    let scale = |m: &DMatrix<f64>| m.amax().max(1.0);

    let w2_ev = sym_eigs(&t.w2sq);
    let w2_scale = scale(&t.w2sq);
    let w2sq_symmetric_psd =
        is_symmetric(&t.w2sq, 1e-12 * w2_scale) && w2_ev.first().is_none_or(|&v| v >= -1e-10 * w2_scale);
    if !w2sq_symmetric_psd {
        failures.push("W2² is not symmetric positive semidefinite".into());
    }
    let w2sq_kills_consensus = (&t.w2sq * &ones).amax() <= 1e-12 * w2_scale;
    if !w2sq_kills_consensus {
        failures.push("W2² does not annihilate the consensus subspace".into());
    }
    let top = w2_ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let rank = w2_ev.iter().filter(|v| v.abs() > RANK_TOL * top.max(1e-300)).count();
    let w2sq_rank_exact = dim <= 1 || rank == dim - 1;
    if !w2sq_rank_exact {
        failures.push(format!(
            "rank of W2² is {} (expected {}): null space larger than consensus",
            rank * t.n,
            (dim.saturating_sub(1)) * t.n
        ));
    }

    let w3_ok = if t.w3_is_zero() {
        true
    } else {
        let ev = sym_eigs(&t.w3);
        let s = scale(&t.w3);
        let psd = is_symmetric(&t.w3, 1e-12 * s) && ev.first().is_none_or(|&v| v >= -1e-10 * s);
        let kills = (&t.w3 * &ones).amax() <= 1e-12 * s;
        if !psd {
            failures.push("W3 is not symmetric positive semidefinite".into());
        }
        if !kills {
            failures.push("W3 does not annihilate the consensus subspace".into());
        }
        psd && kills
    };

    let mut w1_doubly_stochastic = true;
    for i in 0..dim {
        let r = t.w1.row(i).sum();
        let c = t.w1.column(i).sum();
        if (r - 1.0).abs() > 1e-12 || (c - 1.0).abs() > 1e-12 {
            w1_doubly_stochastic = false;
        }
    }
    if !w1_doubly_stochastic {
        failures.push("W1 is not doubly stochastic".into());
    }

    TripletReport {
        w2sq_symmetric_psd,
        w2sq_kills_consensus,
        w2sq_rank_exact,
        w3_ok,
        w1_doubly_stochastic,
        failures,
    }
}

/// Real gain interval `[lo, hi]` the controller is synthesized for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainInterval {
    pub lo: f64,
    pub hi: f64,
}

impl GainInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(Error::Argument(format!(
                "gain interval [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `points` evenly spaced gains including both endpoints.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        if points < 2 || self.lo == self.hi {
            return vec![self.lo, self.hi];
        }
        (0..points)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (points - 1) as f64)
            .collect()
    }
}

fn hessian_bounds(hessians: &[DMatrix<f64>]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in hessians {
        if !is_symmetric(a, 1e-10 * a.amax().max(1.0)) {
            return Err(Error::Argument("Hessian block is not symmetric".into()));
        }
        let ev = sym_eigs(a);
        lo = lo.min(ev[0]);
        hi = hi.max(*ev.last().unwrap());
    }
    if hessians.is_empty() || lo <= 0.0 {
        return Err(Error::Argument(format!(
            "Hessian blocks must be positive definite (smallest eigenvalue {lo})"
        )));
    }
    Ok((lo, hi))
}

/// Conservative gain interval from Weyl's inequality on `μ·blkdiag(A_i) + W3 + τ·W2²`.
pub fn gain_relevant_spectrum(
    t: &ConsensusTriplet,
    hessians: &[DMatrix<f64>],
    mu: f64,
    tau: f64,
) -> Result<GainInterval> {
    if mu <= 0.0 || tau <= 0.0 {
        return Err(Error::Argument("mu and tau must be positive".into()));
    }
    if hessians.len() != t.agents() {
        return Err(Error::Argument("one Hessian block per agent required".into()));
    }
    let (a_lo, a_hi) = hessian_bounds(hessians)?;
    let w3_ev = sym_eigs(&t.w3);
    let w2_ev = sym_eigs(&t.w2sq);
    if w3_ev[0] < -1e-10 || w2_ev[0] < -1e-10 {
        return Err(Error::Argument("W2² and W3 must be positive semidefinite".into()));
    }
    let w3_max = w3_ev.last().unwrap().max(0.0);
    let w2_max = w2_ev.last().unwrap().max(0.0);
    GainInterval::new(mu * a_lo, mu * a_hi + w3_max + tau * w2_max)
}

/// Orthonormal basis (columns) of the complement of the all-ones vector in `R^N` (Helmert basis).
pub fn consensus_complement_basis(agents: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(agents, agents.saturating_sub(1));
    for k in 1..agents {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Eigenvalues of the loop operator the internal model sees on quadratic problems.
///
/// With outputs `(H ξ, H ω̃)` the local gradients are `[[P, -τI], [W2², 0]]` applied to them,
/// `P = μ·blkdiag(A_i) + W3`. The dual block is restricted to `range(W2)`, the only subspace a
/// zero-initialized substituted dual state can reach. The full closed loop is then similar to the
/// union over these gains `l` of `F + l·G·H`.
pub fn loop_gain_spectrum(
    t: &ConsensusTriplet,
    hessians: &[DMatrix<f64>],
    mu: f64,
    tau: f64,
) -> Result<Vec<Complex64>> {
    if hessians.len() != t.agents() {
        return Err(Error::Argument("one Hessian block per agent required".into()));
    }
    let n = t.n;
    let agents = t.agents();
    let d = agents * n;
    let dq = (agents - 1) * n;
    let mut p = t.w3_lifted();
    for (i, a) in hessians.iter().enumerate() {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Argument("Hessian block dimension mismatch".into()));
        }
        let mut blk = p.view_mut((i * n, i * n), (n, n));
        blk += a * mu;
    }
    let q = consensus_complement_basis(agents).kronecker(&DMatrix::<f64>::identity(n, n));
    let mut op = DMatrix::zeros(d + dq, d + dq);
    op.view_mut((0, 0), (d, d)).copy_from(&p);
    if dq > 0 {
        op.view_mut((0, d), (d, dq)).copy_from(&(&q * -tau));
        op.view_mut((d, 0), (dq, d)).copy_from(&(q.transpose() * t.w2sq_lifted()));
    }
    Ok(crate::spectrum::eigenvalues(&op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_graph, metropolis_weights, Graph, GraphKind};

    fn cycle_w(n: usize) -> WeightMatrix {
        metropolis_weights(&make_graph(GraphKind::Cycle, n).unwrap())
    }

    #[test]
    fn table_one_entries() {
        let w = cycle_w(5);
        let wm = w.matrix();
        let id = DMatrix::<f64>::identity(5, 5);
        let lap = &id - wm;
        let t = build_triplet(TripletName::AugDgm, &w, 2).unwrap();
        assert_eq!(t.w1, wm * wm);
        assert_eq!(t.w2sq, &lap * &lap);
        assert!(t.w3_is_zero());
        let t = build_triplet(TripletName::Diging, &w, 2).unwrap();
        assert_eq!(t.w1, id);
        assert_eq!(t.w3, &id - wm * wm);
        let t = build_triplet(TripletName::Extra, &w, 2).unwrap();
        assert_eq!(t.w2sq, &lap * 0.5);
        assert_eq!(t.w3, &lap * 0.5);
        let t = build_triplet(TripletName::ExactDiffusion, &w, 2).unwrap();
        assert_eq!(t.w1, (&id + wm) * 0.5);
        assert!(t.w3_is_zero());
        assert_eq!(t.lift(&t.w1).nrows(), 10);
    }

    #[test]
    fn rejects_non_stochastic_weights() {
        let mut m = cycle_w(4).matrix().clone();
        m[(0, 1)] += 0.1;
        let err = build_triplet(TripletName::Extra, &WeightMatrix::from_matrix(m), 1);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn table_triplets_validate_on_cycle() {
        for name in TripletName::TABLE {
            let t = build_triplet(name, &cycle_w(10), 3).unwrap();
            let report = validate_triplet(&t);
            assert!(report.passed(), "{name}: {:?}", report.failures);
            assert_eq!(t.w3_is_zero(), matches!(name, TripletName::AugDgm | TripletName::ExactDiffusion));
        }
    }

    #[test]
    fn disconnected_weights_fail_null_space_check() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let t = build_triplet(TripletName::Diging, &metropolis_weights(&g), 2).unwrap();
        let report = validate_triplet(&t);
        assert!(!report.w2sq_rank_exact);
        assert!(!report.passed());
    }

    #[test]
    fn lifted_application_matches_dense_kronecker() {
        let t = build_triplet(TripletName::Diging, &cycle_w(4), 3).unwrap();
        let x = DVector::from_iterator(12, (0..12).map(|i| (i as f64).sin()));
        let dense = t.w3_lifted() * &x;
        let fast = apply_lifted(&t.w3, 3, &x);
        assert!((dense - fast).amax() < 1e-14);
    }

    #[test]
    fn weyl_interval_examples() {
        let w1 = DMatrix::identity(2, 2);
        let w2sq = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let t = ConsensusTriplet::custom(w1, w2sq, DMatrix::zeros(2, 2), 2).unwrap();
        let hs = vec![DMatrix::identity(2, 2); 2];
        let iv = gain_relevant_spectrum(&t, &hs, 0.1, 1.0).unwrap();
        assert!((iv.lo - 0.1).abs() < 1e-12 && (iv.hi - 2.1).abs() < 1e-12);

        let single = build_triplet(TripletName::AugDgm, &WeightMatrix::from_matrix(DMatrix::identity(1, 1)), 2).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0]));
        let iv = gain_relevant_spectrum(&single, &[a], 1.0, 1.0).unwrap();
        assert!((iv.lo - 1.0).abs() < 1e-12 && (iv.hi - 5.0).abs() < 1e-12);
    }

    #[test]
    fn weyl_interval_rejects_indefinite_hessian() {
        let t = build_triplet(TripletName::Extra, &cycle_w(3), 1).unwrap();
        let bad = vec![DMatrix::from_element(1, 1, -1.0); 3];
        assert!(gain_relevant_spectrum(&t, &bad, 0.1, 1.0).is_err());
    }

    #[test]
    fn helmert_basis_is_orthonormal_complement() {
        let q = consensus_complement_basis(6);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::<f64>::identity(5, 5)).amax() < 1e-14);
        let ones = DVector::from_element(6, 1.0);
        assert!((q.transpose() * ones).amax() < 1e-14);
    }

    #[test]
    fn loop_spectrum_single_agent_is_scaled_hessian() {
        let t = build_triplet(TripletName::Diging, &WeightMatrix::from_matrix(DMatrix::identity(1, 1)), 2).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let mut ev: Vec<f64> = loop_gain_spectrum(&t, &[a], 0.5, 1.0).unwrap().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loop_spectrum_has_no_zero_gain_and_positive_real_parts() {
        let w = cycle_w(6);
        for name in TripletName::TABLE {
            let t = build_triplet(name, &w, 1).unwrap();
            let hs: Vec<_> = (0..6).map(|i| DMatrix::from_element(1, 1, 1.0 + i as f64 * 0.5)).collect();
            let ev = loop_gain_spectrum(&t, &hs, 0.1, 0.3).unwrap();
            assert_eq!(ev.len(), 11);
            for l in ev {
                assert!(l.norm() > 1e-6 && l.re > 0.0, "{name}: {l}");
            }
        }
    }
}
