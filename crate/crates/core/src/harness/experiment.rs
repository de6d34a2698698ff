use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::{build_triplet, gain_relevant_spectrum, loop_gain_spectrum, ConsensusTriplet, TripletName};
use crate::cost::{
    random_gaussian_vector, random_spd, random_unit_vector, LocalCost, NonQuadraticAgentCost,
    QuadraticAgentCost, SignalGenerator, SignalKind,
};
use crate::dynamics::{run_simulation, Algorithm, ControllerParams, Network, Structured, Unstructured};
use crate::error::{Error, Result};
use crate::graph::{make_graph, metropolis_weights, Graph};
use crate::internal_model::{
    companion_realization, distributed_common_denominator, model_for_signal, perturbed_sine_model,
    poly_from_roots, ModelKind, MonicPolynomial, Realization,
};
use crate::lmi::BarrierSolver;
use crate::synthesis::{synthesize, Controller, SearchOptions};

use super::config::{CostFamily, ExperimentConfig, ModelSpec};
use super::metrics::{aggregate_minimizer, asymptotic_error, consensus_error, epsilon_metric, write_trace, TraceRow};

/// Everything a run needs, built once from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub triplet: ConsensusTriplet,
    pub costs: Vec<LocalCost>,
    /// Common denominator every agent ends up with.
    pub model: MonicPolynomial,
    pub realization: Realization,
}

fn signal_model(kind: SignalKind) -> ModelKind {
    match kind {
        SignalKind::Constant => ModelKind::Constant,
        SignalKind::Ramp => ModelKind::Ramp,
        SignalKind::Sine => ModelKind::Sine,
        SignalKind::SineSquared => ModelKind::SineSquared,
    }
}

/// Local model each agent starts from.
fn local_model(cfg: &ExperimentConfig) -> MonicPolynomial {
    match cfg.model {
        ModelSpec::Exact => model_for_signal(signal_model(cfg.signal), cfg.nu),
        ModelSpec::Perturbed { e } => perturbed_sine_model(cfg.nu, e),
        ModelSpec::Approx { harmonics } => model_for_signal(ModelKind::Approx { harmonics }, cfg.nu),
    }
}

fn build_costs(cfg: &ExperimentConfig) -> Result<Vec<LocalCost>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.dim;
    let shared_c = random_unit_vector(n, rng.random());
    (0..cfg.agents)
        .map(|_| {
            let a = random_spd(n, cfg.hessian_lo, cfg.hessian_hi, rng.random())?;
            let v = random_gaussian_vector(n, rng.random());
            Ok(match cfg.cost {
                CostFamily::Quadratic => {
                    LocalCost::Quadratic(QuadraticAgentCost::new(a, SignalGenerator::new(cfg.signal, v, cfg.nu))?)
                }
                CostFamily::NonQuadratic => {
                    LocalCost::NonQuadratic(NonQuadraticAgentCost::new(a, v, shared_c.clone(), cfg.nu)?)
                }
            })
        })
        .collect()
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = make_graph(cfg.graph, cfg.agents).map_err(|e| e.in_stage("graph"))?;
        let w = metropolis_weights(&graph);
        let triplet = build_triplet(cfg.triplet, &w, cfg.dim).map_err(|e| e.in_stage("triplet"))?;
        let costs = build_costs(cfg).map_err(|e| e.in_stage("costs"))?;

        let locals = vec![local_model(cfg); cfg.agents];
        let rounds = graph.diameter().map_err(|e| e.in_stage("model"))?;
        let sets = distributed_common_denominator(&graph, &locals, rounds).map_err(|e| e.in_stage("model"))?;
        let model = poly_from_roots(&sets[0]).map_err(|e| e.in_stage("model"))?;
        let realization = companion_realization(&model);
        Ok(Self {
            config: cfg.clone(),
            graph,
            triplet,
            costs,
            model,
            realization,
        })
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(&self.triplet, self.costs.clone())
    }

    /// Synthesizes the output gain for this setup's loop.
    pub fn controller(&self, opts: &SearchOptions) -> Result<Controller> {
        let hessians: Vec<_> = self.costs.iter().map(|c| c.nominal_hessian().clone()).collect();
        let (mu, tau) = (self.config.mu(), self.config.tau());
        let run = || -> Result<Controller> {
            let interval = gain_relevant_spectrum(&self.triplet, &hessians, mu, tau)?;
            let gains = loop_gain_spectrum(&self.triplet, &hessians, mu, tau)?;
            synthesize(&self.realization, &interval, &gains, &BarrierSolver::default(), opts)
        };
        run().map_err(|e| e.in_stage("synthesis"))
    }

    pub fn structured(&self, controller: &Controller) -> Result<Structured> {
        let params = ControllerParams {
            mu: self.config.mu(),
            tau: self.config.tau(),
            realization: self.realization.clone(),
            h: controller.gain(),
        };
        Structured::new(self.network()?, params)
    }

    pub fn unstructured(&self) -> Result<Unstructured> {
        Ok(Unstructured::new(self.network()?, self.config.mu_unstructured()))
    }
}

/// Trace of one algorithm run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    pub asymptotic: f64,
}

impl RunOutput {
    pub fn epsilon(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.epsilon).collect()
    }
}

/// Simulates `alg` for the configured horizon, recording the metrics before each step.
pub fn trace<A: Algorithm>(setup: &Setup, alg: &mut A) -> Result<RunOutput> {
    let costs = &setup.costs;
    let n = setup.config.dim;
    let agents = setup.config.agents;
    let mut rows = Vec::with_capacity(setup.config.steps);
    let mut optimum = DVector::zeros(n);
    let mut failure = None;
    let result = run_simulation(alg, setup.config.steps, |k, x| {
        let mut xbar = DVector::zeros(n);
        for i in 0..agents {
            xbar += x.rows(i * n, n);
        }
        xbar /= agents as f64;
        match aggregate_minimizer(costs, k, &optimum) {
            Ok(opt) => optimum = opt,
            Err(e) => failure = Some(e),
        }
        rows.push(TraceRow {
            k,
            epsilon: epsilon_metric(costs, k, &xbar),
            consensus_err: consensus_error(x, &xbar),
            track_err: (&xbar - &optimum).norm(),
        });
    });
    if let Some(e) = failure {
        return Err(e.in_stage("metrics"));
    }
    result.map_err(|e| e.in_stage("simulation"))?;
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    Ok(RunOutput {
        asymptotic: asymptotic_error(&eps),
        rows,
    })
}

fn write_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).in_stage("output"))?;
    write_trace(BufWriter::new(file), rows).map_err(|e| e.in_stage("output"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::from(e).in_stage("output"))
}

/// Result of a single configured run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub triplet: TripletName,
    pub signal: SignalKind,
    pub mu: f64,
    pub tau: f64,
    pub mu_unstructured: f64,
    pub model: Vec<f64>,
    pub controller: Controller,
    pub structured_asymptotic: f64,
    pub unstructured_asymptotic: Option<f64>,
}

/// Structured run plus the unstructured baseline; writes traces and a summary when `out` is set.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary> {
    let setup = Setup::build(cfg)?;
    let controller = setup.controller(&SearchOptions::default())?;
    let structured = trace(&setup, &mut setup.structured(&controller)?)?;
    // A divergent baseline is reported as missing rather than aborting the run.
    let unstructured = trace(&setup, &mut setup.unstructured()?).ok();
    let summary = RunSummary {
        triplet: cfg.triplet,
        signal: cfg.signal,
        mu: cfg.mu(),
        tau: cfg.tau(),
        mu_unstructured: cfg.mu_unstructured(),
        model: setup.model.coeffs().to_vec(),
        controller,
        structured_asymptotic: structured.asymptotic,
        unstructured_asymptotic: unstructured.as_ref().map(|u| u.asymptotic),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("output"))?;
        write_csv(&dir.join("structured.csv"), &structured.rows)?;
        if let Some(u) = &unstructured {
            write_csv(&dir.join("unstructured.csv"), &u.rows)?;
        }
        write_text(&dir.join("config.toml"), &cfg.to_toml())?;
        write_text(&dir.join("summary.toml"), &to_toml(&summary))?;
    }
    Ok(summary)
}

fn to_toml<T: Serialize>(v: &T) -> String {
    toml::to_string(v).unwrap_or_else(|e| format!("# summary unavailable: {e}\n"))
}

#[derive(Debug, Clone, Serialize)]
pub struct TripletComparison {
    pub triplet: TripletName,
    pub structured: Option<f64>,
    pub unstructured: Option<f64>,
    pub radius: Option<f64>,
}

/// Runs every built-in triplet on the configured problem; failures become missing values.
pub fn compare_triplets(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<TripletComparison>> {
    let results: Vec<TripletComparison> = TripletName::TABLE
        .par_iter()
        .map(|&triplet| {
            let cfg = ExperimentConfig { triplet, ..cfg.clone() };
            match run_experiment(&cfg, None) {
                Ok(s) => TripletComparison {
                    triplet,
                    structured: Some(s.structured_asymptotic),
                    unstructured: s.unstructured_asymptotic,
                    radius: Some(s.controller.radius),
                },
                Err(_) => TripletComparison {
                    triplet,
                    structured: None,
                    unstructured: None,
                    radius: None,
                },
            }
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("output"))?;
        let mut text = String::from("triplet,structured,unstructured,radius\n");
        for r in &results {
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.triplet,
                opt(r.structured),
                opt(r.unstructured),
                opt(r.radius)
            ));
        }
        write_text(&dir.join("compare.csv"), &text)?;
    }
    Ok(results)
}

fn opt(v: Option<f64>) -> String {
    v.map(super::metrics::format_float).unwrap_or_default()
}

/// Evenly spaced perturbation magnitudes in `[0, max]`.
pub fn perturbation_grid(max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        p => (0..p).map(|i| max * i as f64 / (p - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub e: f64,
    /// `None` when synthesis or simulation failed at this point.
    pub structured: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub unstructured: Option<f64>,
}

/// Structured error under a perturbed sine model, one independent run per magnitude.
pub fn sweep_perturbation(cfg: &ExperimentConfig, values: &[f64], out: Option<&Path>) -> Result<SweepReport> {
    let base = Setup::build(&ExperimentConfig {
        signal: SignalKind::Sine,
        model: ModelSpec::Exact,
        ..cfg.clone()
    })?;
    let unstructured = trace(&base, &mut base.unstructured()?).ok().map(|u| u.asymptotic);
    let points: Vec<SweepPoint> = values
        .par_iter()
        .map(|&e| {
            let cfg = ExperimentConfig {
                signal: SignalKind::Sine,
                model: ModelSpec::Perturbed { e },
                ..cfg.clone()
            };
            let run = || -> Result<(f64, f64)> {
                let setup = Setup::build(&cfg)?;
                let c = setup.controller(&SearchOptions::default())?;
                let r = trace(&setup, &mut setup.structured(&c)?)?;
                Ok((r.asymptotic, c.radius))
            };
            match run() {
                Ok((a, rho)) => SweepPoint { e, structured: Some(a), radius: Some(rho) },
                Err(_) => SweepPoint { e, structured: None, radius: None },
            }
        })
        .collect();
    let report = SweepReport { points, unstructured };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("output"))?;
        let mut text = String::from("e,structured,radius,unstructured\n");
        for p in &report.points {
            text.push_str(&format!(
                "{},{},{},{}\n",
                super::metrics::format_float(p.e),
                opt(p.structured),
                opt(p.radius),
                opt(report.unstructured)
            ));
        }
        write_text(&dir.join("sweep.csv"), &text)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct NonQuadraticRow {
    pub harmonics: usize,
    pub structured: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonQuadraticReport {
    pub rows: Vec<NonQuadraticRow>,
    pub unstructured: Option<f64>,
}

/// Structured runs with approximate models of increasing order on the non-quadratic problem.
pub fn run_nonquadratic(cfg: &ExperimentConfig, harmonics: &[usize], out: Option<&Path>) -> Result<NonQuadraticReport> {
    let base_cfg = ExperimentConfig {
        cost: CostFamily::NonQuadratic,
        model: ModelSpec::Approx { harmonics: harmonics.first().copied().unwrap_or(1) },
        ..cfg.clone()
    };
    let base = Setup::build(&base_cfg)?;
    let unstructured_run = trace(&base, &mut base.unstructured()?).ok();
    let runs: Vec<(usize, Option<(RunOutput, f64)>)> = harmonics
        .par_iter()
        .map(|&l| {
            let cfg = ExperimentConfig {
                model: ModelSpec::Approx { harmonics: l },
                ..base_cfg.clone()
            };
            let run = || -> Result<(RunOutput, f64)> {
                let setup = Setup::build(&cfg)?;
                let c = setup.controller(&SearchOptions::default())?;
                Ok((trace(&setup, &mut setup.structured(&c)?)?, c.radius))
            };
            (l, run().ok())
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("output"))?;
        for (l, r) in &runs {
            if let Some((r, _)) = r {
                write_csv(&dir.join(format!("structured_L{l}.csv")), &r.rows)?;
            }
        }
        if let Some(u) = &unstructured_run {
            write_csv(&dir.join("unstructured.csv"), &u.rows)?;
        }
    }
    let report = NonQuadraticReport {
        rows: runs
            .iter()
            .map(|(l, r)| NonQuadraticRow {
                harmonics: *l,
                structured: r.as_ref().map(|(o, _)| o.asymptotic),
                radius: r.as_ref().map(|(_, rho)| *rho),
            })
            .collect(),
        unstructured: unstructured_run.map(|u| u.asymptotic),
    };
    if let Some(dir) = out {
        let mut text = String::from("harmonics,structured,radius,unstructured\n");
        for r in &report.rows {
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.harmonics,
                opt(r.structured),
                opt(r.radius),
                opt(report.unstructured)
            ));
        }
        write_text(&dir.join("nonquadratic.csv"), &text)?;
    }
    Ok(report)
}
