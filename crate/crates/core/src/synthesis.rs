//! Output-gain synthesis for the internal-model controller `(F, G, H)`.
//!
//! The gain `H` must make `F + l·G·H` Schur stable for every loop gain `l` the plant presents.
//! A convex certificate handles a real interval of gains; a minimax refinement then handles the
//! complex loop gains of the actual saddle dynamics, which the interval does not cover.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::consensus::GainInterval;
use crate::error::{Error, Result};
use crate::internal_model::Realization;
use crate::lmi::{LmiProblem, LmiSolver};

/// Required stability margin: every certified radius must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-4;

/// Strictness shift applied to the vertex inequalities.
pub const LMI_SHIFT: f64 = 1e-6;

/// Gains below this modulus are directions the controller never acts on.
const NEGLIGIBLE_GAIN: f64 = 1e-9;

/// Monic closed-loop polynomial of `F + l·G·H` (companion `F`, `G = e_m`), low order first.
fn closed_loop_coeffs(real: &Realization, h: &[f64], gain: Complex64) -> Vec<Complex64> {
    let m = real.order();
    (0..m)
        .map(|l| Complex64::new(-real.f[(m - 1, l)], 0.0) - gain * h[l])
        .collect()
}

fn poly_root_radius(c: &[Complex64]) -> f64 {
    match c.len() {
        0 => 0.0,
        1 => c[0].norm(),
        2 => {
            // z² + c1 z + c0
            let disc = (c[1] * c[1] - c[0] * 4.0).sqrt();
            let r1 = (-c[1] + disc) * 0.5;
            let r2 = (-c[1] - disc) * 0.5;
            r1.norm().max(r2.norm())
        }
        m => {
            let mut comp = DMatrix::<Complex64>::zeros(m, m);
            for i in 0..m - 1 {
                comp[(i, i + 1)] = Complex64::new(1.0, 0.0);
            }
            for (l, cl) in c.iter().enumerate() {
                comp[(m - 1, l)] = -cl;
            }
            match comp.clone().try_schur(1e-14, 10_000).and_then(|s| s.eigenvalues()) {
                Some(ev) => ev.iter().map(|z| z.norm()).fold(0.0, f64::max),
                None => f64::INFINITY,
            }
        }
    }
}

/// Spectral radius of `F + l·G·H` for a possibly complex gain `l`.
pub fn closed_loop_radius(real: &Realization, h: &DVector<f64>, gain: Complex64) -> f64 {
    poly_root_radius(&closed_loop_coeffs(real, h.as_slice(), gain))
}

/// Largest closed-loop radius over a set of gains.
pub fn max_radius(real: &Realization, h: &DVector<f64>, gains: &[Complex64]) -> f64 {
    gains
        .iter()
        .map(|&l| closed_loop_radius(real, h, l))
        .fold(0.0, f64::max)
}

/// Largest radius over `points` evenly spaced real gains spanning the interval.
pub fn verify_robust_stability(
    real: &Realization,
    h: &DVector<f64>,
    interval: &GainInterval,
    points: usize,
) -> f64 {
    let grid: Vec<Complex64> = interval.grid(points).into_iter().map(|l| Complex64::new(l, 0.0)).collect();
    max_radius(real, h, &grid)
}

/// Gain placing every closed-loop pole at the origin for the single gain `l`.
pub fn deadbeat_gain(real: &Realization, l: f64) -> DVector<f64> {
    let m = real.order();
    DVector::from_fn(m, |i, _| -real.f[(m - 1, i)] / l)
}

/// Vertex inequalities `[[P_v, F S + l_v G R], [·ᵀ, S + Sᵀ - P_v]] ≻ 0` in the variables
/// `(S, R, P_lo, P_hi)`; any feasible point gives `H = R S⁻¹`.
pub fn lmi_problem(real: &Realization, interval: &GainInterval) -> Result<LmiProblem> {
    let m = real.order();
    if m == 0 {
        return Err(Error::Argument("empty realization".into()));
    }
    let vertices = if interval.lo == interval.hi {
        vec![interval.lo]
    } else {
        vec![interval.lo, interval.hi]
    };
    let nsym = m * (m + 1) / 2;
    let ns = m * m;
    let nvars = ns + m + vertices.len() * nsym;
    let mut problem = LmiProblem::new(nvars);
    for (v, &gain) in vertices.iter().enumerate() {
        let mut coeffs = vec![DMatrix::zeros(2 * m, 2 * m); nvars];
        let put_offdiag = |a: &mut DMatrix<f64>, block: &DMatrix<f64>| {
            for i in 0..m {
                for j in 0..m {
                    a[(i, m + j)] += block[(i, j)];
                    a[(m + j, i)] += block[(i, j)];
                }
            }
        };
        // S entries: F S in the off-diagonal block, S + Sᵀ in the lower-right block.
        for i in 0..m {
            for j in 0..m {
                let a = &mut coeffs[i * m + j];
                let mut e = DMatrix::zeros(m, m);
                e[(i, j)] = 1.0;
                put_offdiag(a, &(&real.f * &e));
                a[(m + i, m + j)] += 1.0;
                a[(m + j, m + i)] += 1.0;
            }
        }
        // R entries: l_v G R.
        for j in 0..m {
            let mut e = DMatrix::zeros(1, m);
            e[(0, j)] = gain;
            let gr = &real.g * e;
            put_offdiag(&mut coeffs[ns + j], &gr);
        }
        // P_v entries: +P_v upper-left, -P_v lower-right.
        let mut idx = ns + m + v * nsym;
        for i in 0..m {
            for j in i..m {
                let a = &mut coeffs[idx];
                let mut set = |r: usize, c: usize, val: f64| {
                    a[(r, c)] += val;
                    if r != c {
                        a[(c, r)] += val;
                    }
                };
                set(i, j, 1.0);
                set(m + i, m + j, -1.0);
                idx += 1;
            }
        }
        problem.add_block(coeffs)?;
    }
    Ok(problem)
}

/// Result of the convex synthesis step.
#[derive(Debug, Clone)]
pub struct LmiCertificate {
    pub h: DVector<f64>,
    /// Smallest vertex eigenvalue at the normalized solution.
    pub margin: f64,
}

/// Solves the vertex inequalities and recovers `H = R S⁻¹`.
pub fn synthesize_lmi(
    real: &Realization,
    interval: &GainInterval,
    solver: &dyn LmiSolver,
) -> Result<LmiCertificate> {
    let m = real.order();
    let problem = lmi_problem(real, interval)?;
    let sol = solver.solve(&problem)?;
    // Independent re-check of the returned point.
    let margin = problem.min_eigenvalue(&sol.x);
    if margin <= LMI_SHIFT {
        return Err(Error::Synthesis(format!(
            "vertex inequalities infeasible on [{}, {}] (margin {margin:e})",
            interval.lo, interval.hi
        )));
    }
    let s = DMatrix::from_fn(m, m, |i, j| sol.x[i * m + j]);
    let r = DMatrix::from_fn(1, m, |_, j| sol.x[m * m + j]);
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("LMI solution has singular S".into()))?;
    let h = (r * s_inv).row(0).transpose();
    Ok(LmiCertificate { h, margin })
}

/// Minimax objective: largest closed-loop radius over the certification gains.
struct RadiusObjective<'a> {
    real: &'a Realization,
    gains: &'a [Complex64],
}

impl CostFunction for RadiusObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, h: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self
            .gains
            .iter()
            .map(|&l| poly_root_radius(&closed_loop_coeffs(self.real, h, l)))
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOptions {
    /// Nelder–Mead restarts per seed.
    pub restarts: usize,
    pub max_iters: u64,
    /// Real gains sampled from the interval during the search.
    pub search_points: usize,
    /// Real gains used for the final certificate.
    pub verify_points: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: 800,
            search_points: 41,
            verify_points: 200,
        }
    }
}

fn radii(real: &Realization, h: &[f64], gains: &[Complex64]) -> Vec<f64> {
    gains
        .iter()
        .map(|&l| poly_root_radius(&closed_loop_coeffs(real, h, l)))
        .collect()
}

/// Nelder–Mead restarts with shrinking initial simplices on a fixed gain set.
fn polish(real: &Realization, gains: &[Complex64], mut x: Vec<f64>, opts: &SearchOptions) -> Result<(Vec<f64>, f64)> {
    let m = x.len();
    let mut fx = RadiusObjective { real, gains }
        .cost(&x)
        .map_err(|e| Error::Synthesis(e.to_string()))?;
    for restart in 0..opts.restarts {
        let scale = 0.2 / (1 + restart) as f64;
        let mut simplex = vec![x.clone()];
        for i in 0..m {
            let mut v = x.clone();
            v[i] += scale * x[i].abs().max(1e-3);
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-14)
            .map_err(|e| Error::Synthesis(e.to_string()))?;
        let res = Executor::new(RadiusObjective { real, gains }, solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run()
            .map_err(|e| Error::Synthesis(e.to_string()))?;
        if let Some(p) = res.state().get_best_param() {
            let c = res.state().get_best_cost();
            if c < fx {
                x = p.clone();
                fx = c;
            }
        }
    }
    Ok((x, fx))
}

/// Gains examined first: the worst ones for the starting point plus the extreme moduli.
const INITIAL_ACTIVE: usize = 12;
/// Violating gains added per exchange round.
const EXCHANGE_BATCH: usize = 8;
const EXCHANGE_ROUNDS: usize = 12;

fn worst_indices(r: &[f64], skip: &[usize], count: usize, above: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..r.len()).filter(|i| !skip.contains(i) && r[*i] > above).collect();
    idx.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// Minimizes the worst radius over `gains` starting from each seed; returns the best gain found.
///
/// Uses an exchange scheme: the search runs on a small active subset of gains, and the gains
/// violating the current optimum are added until the subset optimum holds for the full set.
pub fn minimax_search(
    real: &Realization,
    gains: &[Complex64],
    seeds: &[DVector<f64>],
    opts: &SearchOptions,
) -> Result<(DVector<f64>, f64)> {
    if gains.is_empty() {
        return Err(Error::Argument("no gains to certify".into()));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for seed in seeds {
        let mut x: Vec<f64> = seed.iter().copied().collect();
        let r0 = radii(real, &x, gains);
        let mut active = worst_indices(&r0, &[], INITIAL_ACTIVE, f64::NEG_INFINITY);
        let by_modulus = |a: &usize, b: &usize| gains[*a].norm().total_cmp(&gains[*b].norm());
        for extreme in [(0..gains.len()).min_by(by_modulus), (0..gains.len()).max_by(by_modulus)].into_iter().flatten() {
            if !active.contains(&extreme) {
                active.push(extreme);
            }
        }
        let mut fx = f64::INFINITY;
        for _ in 0..EXCHANGE_ROUNDS {
            let subset: Vec<Complex64> = active.iter().map(|&i| gains[i]).collect();
            let (xs, f_active) = polish(real, &subset, x.clone(), opts)?;
            x = xs;
            let r = radii(real, &x, gains);
            fx = r.iter().copied().fold(0.0, f64::max);
            let add = worst_indices(&r, &active, EXCHANGE_BATCH, f_active + 1e-12);
            if add.is_empty() {
                break;
            }
            active.extend(add);
        }
        if best.as_ref().is_none_or(|(_, b)| fx < *b) {
            best = Some((x, fx));
        }
    }
    let (x, fx) = best.ok_or_else(|| Error::Synthesis("no search seeds".into()))?;
    Ok((DVector::from_vec(x), fx))
}

/// How the final gain was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainOrigin {
    Lmi,
    Refined,
}

/// A certified output gain.
#[derive(Debug, Clone, Serialize)]
pub struct Controller {
    pub h: Vec<f64>,
    pub interval: GainInterval,
    /// Worst radius over the loop gains and the verification grid.
    pub radius: f64,
    /// Smallest vertex eigenvalue of the convex certificate, if it was feasible.
    pub lmi_margin: Option<f64>,
    pub origin: GainOrigin,
}

impl Controller {
    pub fn gain(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.h)
    }
}

/// Keeps one representative per conjugate pair and drops negligible or repeated gains.
pub fn reduce_gains(gains: &[Complex64]) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for &l in gains {
        if l.norm() < NEGLIGIBLE_GAIN {
            continue;
        }
        let l = if l.im < 0.0 { l.conj() } else { l };
        if !out.iter().any(|g| (g - l).norm() <= 1e-10 * l.norm().max(1.0)) {
            out.push(l);
        }
    }
    out
}

/// Full pipeline: convex certificate on the interval (when feasible), deadbeat seeds, and a
/// minimax refinement over the loop gains and the interval.
pub fn synthesize(
    real: &Realization,
    interval: &GainInterval,
    loop_gains: &[Complex64],
    solver: &dyn LmiSolver,
    opts: &SearchOptions,
) -> Result<Controller> {
    let loop_gains = reduce_gains(loop_gains);
    let lmi = synthesize_lmi(real, interval, solver).ok();
    let certify = |h: &DVector<f64>| {
        max_radius(real, h, &loop_gains).max(verify_robust_stability(real, h, interval, opts.verify_points))
    };

    let mut seeds = Vec::new();
    if let Some(c) = &lmi {
        let rho = certify(&c.h);
        if loop_gains.is_empty() && rho < 1.0 - STABILITY_MARGIN {
            return Ok(Controller {
                h: c.h.iter().copied().collect(),
                interval: *interval,
                radius: rho,
                lmi_margin: Some(c.margin),
                origin: GainOrigin::Lmi,
            });
        }
        seeds.push(c.h.clone());
    }
    for l in [interval.lo, interval.midpoint(), (interval.lo * interval.hi).sqrt(), interval.hi] {
        seeds.push(deadbeat_gain(real, l));
    }

    let mut gains: Vec<Complex64> = loop_gains.clone();
    gains.extend(interval.grid(opts.search_points).into_iter().map(|l| Complex64::new(l, 0.0)));
    let (h, _) = minimax_search(real, &gains, &seeds, opts)?;
    let rho = certify(&h);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Synthesis(format!(
            "no stabilizing gain found (best worst-case radius {rho:.6})"
        )));
    }
    Ok(Controller {
        h: h.iter().copied().collect(),
        interval: *interval,
        radius: rho,
        lmi_margin: lmi.map(|c| c.margin),
        origin: GainOrigin::Refined,
    })
}
