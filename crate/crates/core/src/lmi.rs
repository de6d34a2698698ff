//! Small dense semidefinite feasibility solver used for controller synthesis.
//!
//! Problems are homogeneous: each block is `Σ_i x_i A_i` with symmetric `A_i`. The solver
//! maximizes the common margin `t` with every block `⪰ t·I` over the unit ball `‖x‖ ≤ 1`,
//! following the central path of a log-det barrier with damped Newton steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Homogeneous linear matrix inequality `Σ_i x_i A_{b,i} ≻ 0` for every block `b`.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    nvars: usize,
    blocks: Vec<Vec<DMatrix<f64>>>,
}

impl LmiProblem {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            blocks: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Adds a block given one symmetric coefficient matrix per variable.
    pub fn add_block(&mut self, coeffs: Vec<DMatrix<f64>>) -> Result<()> {
        if coeffs.len() != self.nvars {
            return Err(Error::Argument("one coefficient matrix per variable required".into()));
        }
        let dim = coeffs.first().map_or(0, |a| a.nrows());
        for a in &coeffs {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::Argument("block coefficients must share one square shape".into()));
            }
            if (a - a.transpose()).amax() > 1e-12 {
                return Err(Error::Argument("block coefficients must be symmetric".into()));
            }
        }
        self.blocks.push(coeffs);
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Evaluates block `b` at `x`.
    pub fn evaluate(&self, b: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let coeffs = &self.blocks[b];
        let dim = coeffs[0].nrows();
        let mut m = DMatrix::zeros(dim, dim);
        for (xi, a) in x.iter().zip(coeffs) {
            if *xi != 0.0 {
                m += a * *xi;
            }
        }
        m
    }

    /// Smallest eigenvalue over all blocks at `x`.
    pub fn min_eigenvalue(&self, x: &DVector<f64>) -> f64 {
        (0..self.blocks.len())
            .map(|b| self.evaluate(b, x).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Output of an LMI solve: a point in the unit ball and its margin.
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub x: DVector<f64>,
    /// Smallest eigenvalue over all blocks at `x`.
    pub margin: f64,
}

/// Anything that can maximize the LMI margin over the unit ball.
pub trait LmiSolver {
    fn solve(&self, problem: &LmiProblem) -> Result<LmiSolution>;
}

/// Primal log-det barrier method.
#[derive(Debug, Clone)]
pub struct BarrierSolver {
    /// Duality-gap bound at which the central path is abandoned.
    pub gap_tol: f64,
    /// Factor by which the barrier weight grows between centring steps.
    pub growth: f64,
    pub max_newton: usize,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            growth: 8.0,
            max_newton: 60,
        }
    }
}

/// Barrier value, gradient and Hessian at `z = (x, t)`; `None` outside the domain.
fn barrier_terms(
    p: &LmiProblem,
    z: &DVector<f64>,
    weight: f64,
) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let q = p.nvars;
    let x = z.rows(0, q).into_owned();
    let t = z[q];
    let r = x.norm_squared();
    if r >= 1.0 {
        return None;
    }
    let mut value = -weight * t - (1.0 - r).ln();
    let mut grad = DVector::zeros(q + 1);
    let mut hess = DMatrix::zeros(q + 1, q + 1);
    grad[q] = -weight;
    let s = 1.0 - r;
    for i in 0..q {
        grad[i] += 2.0 * x[i] / s;
        hess[(i, i)] += 2.0 / s;
        for j in 0..q {
            hess[(i, j)] += 4.0 * x[i] * x[j] / (s * s);
        }
    }
    for b in 0..p.blocks.len() {
        let mut m = p.evaluate(b, &x);
        let dim = m.nrows();
        for k in 0..dim {
            m[(k, k)] -= t;
        }
        let chol = Cholesky::<f64, Dyn>::new(m)?;
        let l = chol.l();
        value -= 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        // Whitened coefficients L⁻¹ A_i L⁻ᵀ; the last one belongs to t (A = -I).
        let whiten = |a: &DMatrix<f64>| -> DMatrix<f64> {
            let y = l.solve_lower_triangular(a).expect("Cholesky factor is invertible");
            l.solve_lower_triangular(&y.transpose()).expect("Cholesky factor is invertible")
        };
        let mut white: Vec<DMatrix<f64>> = p.blocks[b].iter().map(whiten).collect();
        white.push(-whiten(&DMatrix::identity(dim, dim)));
        for i in 0..=q {
            grad[i] -= white[i].trace();
            for j in i..=q {
                let h = white[i].dot(&white[j]);
                hess[(i, j)] += h;
                if i != j {
                    hess[(j, i)] += h;
                }
            }
        }
    }
    Some((value, grad, hess))
}

impl LmiSolver for BarrierSolver {
    fn solve(&self, problem: &LmiProblem) -> Result<LmiSolution> {
        let q = problem.nvars;
        if q == 0 || problem.blocks.is_empty() {
            return Err(Error::Argument("empty LMI".into()));
        }
        let degree: usize = 1 + problem.blocks.iter().map(|b| b[0].nrows()).sum::<usize>();
        let mut z = DVector::zeros(q + 1);
        z[q] = -1.0;
        let mut weight = 1.0;
        loop {
            for _ in 0..self.max_newton {
                let (value, grad, hess) = barrier_terms(problem, &z, weight)
                    .ok_or_else(|| Error::Synthesis("barrier iterate left the domain".into()))?;
                let step = match Cholesky::new(hess.clone()) {
                    Some(c) => -c.solve(&grad),
                    None => -hess.pseudo_inverse(1e-14).map_err(|e| Error::Synthesis(e.into()))? * &grad,
                };
                let decrement = -grad.dot(&step);
                if decrement < 1e-12 {
                    break;
                }
                let mut alpha = 1.0;
                let mut accepted = false;
                while alpha > 1e-12 {
                    let trial = &z + &step * alpha;
                    if let Some((v, _, _)) = barrier_terms(problem, &trial, weight) {
                        if v <= value - 0.25 * alpha * decrement {
                            z = trial;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if degree as f64 / weight < self.gap_tol {
                break;
            }
            weight *= self.growth;
        }
        let x = z.rows(0, q).into_owned();
        let margin = problem.min_eigenvalue(&x);
        Ok(LmiSolution { x, margin })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn diagonal_problem_has_closed_form_optimum() {
        // Blocks diag(x0, x1): best margin on the unit ball is 1/√2 at x = (1, 1)/√2.
        let mut p = LmiProblem::new(2);
        p.add_block(vec![diag(&[1.0, 0.0]), diag(&[0.0, 1.0])]).unwrap();
        let sol = BarrierSolver::default().solve(&p).unwrap();
        let r = 0.5_f64.sqrt();
        assert!((sol.margin - r).abs() < 1e-6, "{}", sol.margin);
        assert!((sol.x[0] - r).abs() < 1e-5 && (sol.x[1] - r).abs() < 1e-5);
    }

    #[test]
    fn infeasible_problem_reports_negative_margin() {
        // x ⪰ 0 and -x ⪰ 0 cannot both hold strictly.
        let mut p = LmiProblem::new(1);
        p.add_block(vec![diag(&[1.0])]).unwrap();
        p.add_block(vec![diag(&[-1.0])]).unwrap();
        let sol = BarrierSolver::default().solve(&p).unwrap();
        assert!(sol.margin <= 1e-9);
    }

    #[test]
    fn off_diagonal_coupling() {
        // [[x0, x1], [x1, x0]] ⪰ t I is maximized at x = (1, 0) with t = 1.
        let mut p = LmiProblem::new(2);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        p.add_block(vec![DMatrix::identity(2, 2), a1]).unwrap();
        let sol = BarrierSolver::default().solve(&p).unwrap();
        assert!((sol.margin - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_asymmetric_coefficients() {
        let mut p = LmiProblem::new(1);
        assert!(p.add_block(vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])]).is_err());
        assert!(p.add_block(vec![]).is_err());
    }
}
