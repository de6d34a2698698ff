//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use ctrlopt::consensus::ConsensusTriplet;
use ctrlopt::cost::{Cost, LocalCost};

/// Symmetric square root of a positive semidefinite matrix via its eigendecomposition.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// The structured algorithm written in the original dual coordinates with an explicit `W2`,
/// dense Kronecker lifts, and per-coordinate controller states.
pub struct LiteralStructured {
    pub costs: Vec<LocalCost>,
    pub n: usize,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub h: DVector<f64>,
    pub mu: f64,
    pub tau: f64,
    xi: Vec<DVector<f64>>,
    omega: Vec<DVector<f64>>,
}

impl LiteralStructured {
    pub fn new(
        t: &ConsensusTriplet,
        costs: Vec<LocalCost>,
        f: DMatrix<f64>,
        g: DVector<f64>,
        h: DVector<f64>,
        mu: f64,
        tau: f64,
    ) -> Self {
        let d = t.lifted_dim();
        let m = f.nrows();
        Self {
            costs,
            n: t.n,
            w1: t.w1_lifted(),
            w2: psd_sqrt(&t.w2sq).kronecker(&DMatrix::identity(t.n, t.n)),
            w3: t.w3_lifted(),
            f,
            g,
            h,
            mu,
            tau,
            xi: vec![DVector::zeros(m); d],
            omega: vec![DVector::zeros(m); d],
        }
    }

    fn y(&self) -> DVector<f64> {
        DVector::from_iterator(self.xi.len(), self.xi.iter().map(|s| self.h.dot(s)))
    }

    pub fn output(&self) -> DVector<f64> {
        &self.w1 * self.y()
    }

    pub fn step(&mut self, k: usize) {
        let y = self.y();
        let lambda = DVector::from_iterator(self.omega.len(), self.omega.iter().map(|s| -self.tau * self.h.dot(s)));
        let n = self.n;
        let mut grad = DVector::zeros(y.len());
        for (i, c) in self.costs.iter().enumerate() {
            let yi = y.rows(i * n, n).into_owned();
            grad.rows_mut(i * n, n).copy_from(&c.gradient(k, &yi));
        }
        let gx = grad * self.mu + &self.w3 * &y + &self.w2 * &lambda;
        let gw = &self.w2 * &y;
        for (c, s) in self.xi.iter_mut().enumerate() {
            *s = &self.f * &*s + &self.g * gx[c];
        }
        for (c, s) in self.omega.iter_mut().enumerate() {
            *s = &self.f * &*s + &self.g * gw[c];
        }
    }
}

/// Rounds needed to spread information across the graph: longest shortest path,
/// computed by Floyd–Warshall on the adjacency matrix.
pub fn floyd_warshall_diameter(adj: &[Vec<bool>]) -> Option<usize> {
    let n = adj.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let worst = d.iter().flatten().copied().max()?;
    (worst < inf).then_some(worst)
}
