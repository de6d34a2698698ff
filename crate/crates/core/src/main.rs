use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctrlopt::consensus::TripletName;
use ctrlopt::cost::{SignalGenerator, SignalKind};
use ctrlopt::harness::{
    compare_triplets, perturbation_grid, run_experiment, run_nonquadratic, sweep_perturbation, ExperimentConfig,
    ModelSpec, Setup,
};
use ctrlopt::internal_model::roots_of;
use ctrlopt::synthesis::SearchOptions;
use ctrlopt::{Error, Result};

#[derive(Parser)]
#[command(name = "ctrlopt", version, about = "Internal-model controllers for online distributed optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for traces and summaries.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for costs, signals and random graphs.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of iterations.
    #[arg(long = "T")]
    steps: Option<usize>,
    /// Gradient step size.
    #[arg(long)]
    mu: Option<f64>,
    /// Dual step size.
    #[arg(long)]
    tau: Option<f64>,
    /// aug_dgm, exact_diffusion, diging or extra.
    #[arg(long)]
    triplet: Option<TripletName>,
    /// constant, ramp, sine or sine_squared.
    #[arg(long)]
    signal: Option<SignalKind>,
    /// Signal frequency.
    #[arg(long)]
    nu: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Structured run plus the unstructured baseline.
    Run {
        #[command(flatten)]
        common: Common,
        /// Use an approximate model with this many harmonics.
        #[arg(long = "L")]
        harmonics: Option<usize>,
        /// Use a sine model perturbed by this amount.
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Every consensus triplet on the same problem.
    CompareTriplets {
        #[command(flatten)]
        common: Common,
    },
    /// Asymptotic error against the size of a model perturbation.
    SweepPerturbation {
        #[command(flatten)]
        common: Common,
        /// Largest perturbation of the sweep.
        #[arg(long, default_value_t = 0.1)]
        perturb: f64,
        /// Number of sweep points, zero included.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Approximate models of increasing order on a non-quadratic problem.
    Nonquadratic {
        #[command(flatten)]
        common: Common,
        /// Harmonic counts to compare.
        #[arg(long = "L", value_delimiter = ',', default_values_t = vec![1, 2, 3])]
        harmonics: Vec<usize>,
    },
    /// Synthesize and certify the output gain only.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long = "L")]
        harmonics: Option<usize>,
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Check that the internal model annihilates the configured signal.
    CheckModel {
        #[command(flatten)]
        common: Common,
        #[arg(long = "L")]
        harmonics: Option<usize>,
        #[arg(long)]
        perturb: Option<f64>,
    },
}

fn load(common: &Common, preset: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => preset,
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.steps {
        cfg.steps = v;
    }
    if common.mu.is_some() {
        cfg.mu = common.mu;
    }
    if common.tau.is_some() {
        cfg.tau = common.tau;
    }
    if let Some(v) = common.triplet {
        cfg.triplet = v;
    }
    if let Some(v) = common.signal {
        cfg.signal = v;
    }
    if let Some(v) = common.nu {
        cfg.nu = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_model(mut cfg: ExperimentConfig, harmonics: Option<usize>, perturb: Option<f64>) -> Result<ExperimentConfig> {
    match (harmonics, perturb) {
        (Some(_), Some(_)) => return Err(Error::Argument("--L and --perturb are exclusive".into())),
        (Some(l), None) => cfg.model = ModelSpec::Approx { harmonics: l },
        (None, Some(e)) => cfg.model = ModelSpec::Perturbed { e },
        (None, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, harmonics, perturb } => {
            let cfg = with_model(load(&common, ExperimentConfig::default())?, harmonics, perturb)?;
            let s = run_experiment(&cfg, common.out.as_deref())?;
            println!(
                "{} {}: structured {:.6e} (radius {:.6}), unstructured {}",
                s.triplet,
                s.signal,
                s.structured_asymptotic,
                s.controller.radius,
                show(s.unstructured_asymptotic)
            );
        }
        Command::CompareTriplets { common } => {
            let cfg = load(&common, ExperimentConfig::default())?;
            for r in compare_triplets(&cfg, common.out.as_deref())? {
                println!(
                    "{:<16} structured {:>14} unstructured {:>14} radius {}",
                    r.triplet.as_str(),
                    show(r.structured),
                    show(r.unstructured),
                    show(r.radius)
                );
            }
        }
        Command::SweepPerturbation { common, perturb, points } => {
            let cfg = load(&common, ExperimentConfig::perturbation())?;
            let report = sweep_perturbation(&cfg, &perturbation_grid(perturb, points), common.out.as_deref())?;
            for p in &report.points {
                println!("e {:.4}: structured {}", p.e, show(p.structured));
            }
            println!("unstructured {}", show(report.unstructured));
        }
        Command::Nonquadratic { common, harmonics } => {
            let cfg = load(&common, ExperimentConfig::nonquadratic())?;
            let report = run_nonquadratic(&cfg, &harmonics, common.out.as_deref())?;
            for r in &report.rows {
                println!("L {}: structured {} (radius {})", r.harmonics, show(r.structured), show(r.radius));
            }
            println!("unstructured {}", show(report.unstructured));
        }
        Command::Synthesize { common, harmonics, perturb } => {
            let cfg = with_model(load(&common, ExperimentConfig::default())?, harmonics, perturb)?;
            let setup = Setup::build(&cfg)?;
            let c = setup.controller(&SearchOptions::default())?;
            println!("model    {}", setup.model);
            println!("interval [{:.6}, {:.6}]", c.interval.lo, c.interval.hi);
            println!("H        {:?}", c.h);
            println!("radius   {:.8}", c.radius);
            println!("lmi      {}", show(c.lmi_margin));
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                let text = toml::to_string(&c).map_err(|e| Error::Config(e.to_string()))?;
                std::fs::write(dir.join("controller.toml"), text)?;
            }
        }
        Command::CheckModel { common, harmonics, perturb } => {
            let cfg = with_model(load(&common, ExperimentConfig::default())?, harmonics, perturb)?;
            let setup = Setup::build(&cfg)?;
            let signal = SignalGenerator::new(cfg.signal, nalgebra::DVector::zeros(1), cfg.nu);
            let samples: Vec<f64> = (0..cfg.steps).map(|k| signal.scalar(k)).collect();
            let scale = samples.iter().fold(1.0_f64, |a, s| a.max(s.abs()));
            let residue = setup.model.annihilation_residue(&samples) / scale;
            println!("model   {}", setup.model);
            for (re, im, m) in roots_of(&setup.model).to_wire() {
                println!("root    {re:+.12} {im:+.12}i  x{m}");
            }
            println!("residue {residue:.3e}");
            if residue > 1e-8 {
                return Err(Error::Argument(format!(
                    "model does not annihilate the {} signal (relative residue {residue:.3e})",
                    cfg.signal
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
