//! Command-line front end. `run` parses, validates every flag, then executes
//! inside a rayon pool of the requested size and returns the exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::graph::{load_bundle, save_bundle, write_file};
use crate::harness::{
    disparity_csv, run_biased_selection, run_bound_audit, run_bound_audit_world, run_disparity, run_noisy, ModelKind,
    TrialPlan,
};
use crate::pac_bayes::BoundConfig;
use crate::subgroup::{CentralityKind, SplitKind};
use crate::synth::{gen_assumption_world, gen_homophilous, is_world_dir, load_world, save_world, HomophilyConfig, WorldConfig, WorldLayout};
use crate::train::TrainConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "gnnfair", version, about = "Subgroup accuracy audits and PAC-Bayesian subgroup bounds for aggregation-then-MLP graph models")]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print a summary line per run to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Accuracy per subgroup over repeated trials.
    Audit(AuditArgs),
    /// Per-subgroup generalization bounds.
    Bound(BoundArgs),
    /// Noisy-feature and biased-selection experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Write synthetic bundles.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Sgc,
    Mlp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Agg,
    Geodesic,
    Degree,
    Closeness,
    Betweenness,
    Pagerank,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CentralityArg {
    Degree,
    Closeness,
    Betweenness,
    Pagerank,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Line,
    Scattered,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "sgc")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "agg")]
    split: SplitArg,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    groups: u64,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training nodes sampled per class.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    train_per_class: u64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    val: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    test: u64,
    #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    patience: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    /// Number of MLP layers.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Margin; defaults to the median training margin floored at 0.1.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Defaults to N_0^(2 alpha).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Lipschitz constant of the label distribution (ignored on assumption worlds).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Monte-Carlo draws for the discrepancy terms; 0 skips them.
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Clean versus noise-injected features.
    Noisy {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        alpha: f64,
    },
    /// Uniform versus centrality-biased training selection.
    Biased {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum, default_value = "pagerank")]
        centrality: CentralityArg,
        #[arg(long)]
        dominant_class: usize,
    },
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Homophilous block-model bundle.
    Homophily {
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u64).range(1..))]
        n_per_class: u64,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0.01)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.001)]
        inter_p: f64,
        #[arg(long, default_value_t = 1.0)]
        center_sep: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0.0)]
        degree_heterogeneity: f64,
        #[arg(long, default_value_t = 1)]
        communities: usize,
        #[arg(long, default_value_t = 0.0)]
        community_sep: f64,
        #[arg(long, default_value_t = 1.0)]
        cross_community: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Allow writing into a non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Edgeless world with known label distribution and near sets.
    AssumptionWorld {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        n0: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        sm: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        dim: u64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 10.0)]
        spread: f64,
        #[arg(long, value_enum, default_value = "line")]
        layout: LayoutArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(flag: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("error: {flag}: {msg}"))
}

impl PlanArgs {
    fn to_plan(&self) -> Result<TrialPlan, Failure> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(usage("--lr", "learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(usage("--weight-decay", "weight decay must be non-negative"));
        }
        if self.groups > self.test {
            return Err(usage("--groups", "cannot exceed --test"));
        }
        let model = match self.model {
            ModelArg::Sgc => ModelKind::SgcForm,
            ModelArg::Mlp => ModelKind::Mlp,
        };
        let split = match self.split {
            SplitArg::Agg => SplitKind::AggDistance,
            SplitArg::Geodesic => SplitKind::Geodesic,
            SplitArg::Degree => SplitKind::Degree,
            SplitArg::Closeness => SplitKind::Closeness,
            SplitArg::Betweenness => SplitKind::Betweenness,
            SplitArg::Pagerank => SplitKind::Pagerank,
        };
        Ok(TrialPlan {
            split,
            groups: self.groups as usize,
            trials: self.trials as usize,
            train_per_class: self.train_per_class as usize,
            val_count: self.val as usize,
            test_count: self.test as usize,
            seed: self.seed,
            train: TrainConfig {
                learning_rate: self.lr,
                weight_decay: self.weight_decay,
                max_epochs: self.epochs as usize,
                patience: self.patience as usize,
                seed: self.seed,
                hidden_width: self.hidden as usize,
                depth: self.depth as usize,
            },
            ..TrialPlan::new(model)
        })
    }
}

impl BoundArgs {
    fn to_config(&self) -> Result<BoundConfig, Failure> {
        if let Some(g) = self.gamma {
            if g == 0.0 {
                return Err(usage("--gamma", "gamma = 0 makes the covering count undefined; use a positive margin"));
            }
            if !(g > 0.0) || !g.is_finite() {
                return Err(usage("--gamma", "gamma must be positive"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 0.25) {
            return Err(usage("--alpha", "alpha must be in (0, 0.25)"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(usage("--lambda", "lambda must be positive"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(usage("--delta", "delta must be in (0, 1)"));
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(usage("--c", "c must be non-negative"));
        }
        if self.mc_samples != 0 && self.mc_samples < 100 {
            return Err(usage("--mc-samples", "use 0 to skip or at least 100 draws"));
        }
        Ok(BoundConfig {
            gamma: self.gamma,
            alpha: self.alpha,
            lambda: self.lambda,
            delta: self.delta,
            c: self.c,
            mc_samples: self.mc_samples,
            seed: self.plan.seed,
        })
    }
}

fn check_out_dir(out: &Path, force: bool) -> Result<(), Failure> {
    if out.exists() {
        if !out.is_dir() {
            return Err(usage("--out", format!("{} exists and is not a directory", out.display())));
        }
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| Failure::Runtime(e.to_string()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(usage("--out", format!("{} is not empty; pass --force to overwrite", out.display())));
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::from(Error::io(parent, e)))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --threads: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Audit(a) => {
            let plan = a.plan.to_plan()?;
            let bundle = load_bundle(&a.plan.bundle)?;
            let report = run_disparity(&bundle, &plan)?;
            write_json(&a.plan.out, &report)?;
            write_file(&sibling(&a.plan.out, ".csv"), disparity_csv(&report).as_bytes())?;
            if cli.verbose {
                eprintln!(
                    "audit: {} trials, group accuracies {:?}, mean rho {:?}",
                    report.trials, report.group_mean_accuracy, report.mean_spearman
                );
            }
        }
        Command::Bound(b) => {
            let plan = b.plan.to_plan()?;
            let cfg = b.to_config()?;
            let report = if is_world_dir(&b.plan.bundle) {
                run_bound_audit_world(&load_world(&b.plan.bundle)?, &plan, &cfg)?
            } else {
                run_bound_audit(&load_bundle(&b.plan.bundle)?, &plan, &cfg)?
            };
            write_json(&b.plan.out, &report)?;
            if cli.verbose {
                eprintln!(
                    "bound: {} trials, ordering violations {}, covered fraction {}",
                    report.trials, report.ordering_violations, report.frac_trials_covered
                );
            }
        }
        Command::Experiment(ExperimentCommand::Noisy { plan, alpha }) => {
            if !(*alpha >= 0.0) || !alpha.is_finite() {
                return Err(usage("--alpha", "alpha must be non-negative"));
            }
            let p = plan.to_plan()?;
            let bundle = load_bundle(&plan.bundle)?;
            let report = run_noisy(&bundle, &p, *alpha)?;
            write_json(&plan.out, &report)?;
            write_file(&sibling(&plan.out, ".clean.csv"), disparity_csv(&report.clean).as_bytes())?;
            write_file(&sibling(&plan.out, ".noisy.csv"), disparity_csv(&report.noisy).as_bytes())?;
            if cli.verbose {
                eprintln!(
                    "noisy: mean rho clean {:?}, noisy {:?}",
                    report.clean.mean_spearman, report.noisy.mean_spearman
                );
            }
        }
        Command::Experiment(ExperimentCommand::Biased { plan, centrality, dominant_class }) => {
            let p = plan.to_plan()?;
            let bundle = load_bundle(&plan.bundle)?;
            if *dominant_class >= bundle.num_classes() {
                return Err(usage(
                    "--dominant-class",
                    format!("must be below the class count {}", bundle.num_classes()),
                ));
            }
            let kind = match centrality {
                CentralityArg::Degree => CentralityKind::Degree,
                CentralityArg::Closeness => CentralityKind::Closeness,
                CentralityArg::Betweenness => CentralityKind::Betweenness,
                CentralityArg::Pagerank => CentralityKind::Pagerank,
            };
            let report = run_biased_selection(&bundle, &p, kind, *dominant_class)?;
            write_json(&plan.out, &report)?;
            if cli.verbose {
                let ratios: Vec<_> = report.classes.iter().map(|c| c.mean_ratio).collect();
                eprintln!("biased: mean FPR ratios per class {ratios:?}");
            }
        }
        Command::Synth(SynthCommand::Homophily {
            n_per_class,
            classes,
            dim,
            intra_p,
            inter_p,
            center_sep,
            noise_std,
            degree_heterogeneity,
            communities,
            community_sep,
            cross_community,
            seed,
            out,
            force,
        }) => {
            check_out_dir(out, *force)?;
            let cfg = HomophilyConfig {
                n_per_class: *n_per_class as usize,
                num_classes: *classes,
                dim: *dim,
                intra_p: *intra_p,
                inter_p: *inter_p,
                center_sep: *center_sep,
                noise_std: *noise_std,
                degree_heterogeneity: *degree_heterogeneity,
                communities_per_class: *communities,
                community_sep: *community_sep,
                cross_community: *cross_community,
                seed: *seed,
            };
            let bundle = gen_homophilous(&cfg).map_err(|e| Failure::Usage(format!("error: synth homophily: {e}")))?;
            save_bundle(&bundle, out)?;
            if cli.verbose {
                eprintln!("synth: {} nodes, {} edges -> {}", bundle.num_nodes(), bundle.edges().len(), out.display());
            }
        }
        Command::Synth(SynthCommand::AssumptionWorld { n0, sm, dim, eps, c, classes, spread, layout, seed, out, force }) => {
            check_out_dir(out, *force)?;
            if !(*eps >= 0.0) || !eps.is_finite() {
                return Err(usage("--eps", "must be finite and non-negative"));
            }
            if !spread.is_finite() || *spread <= 2.0 * eps {
                return Err(usage("--spread", "infeasible geometry: spread must exceed 2 * eps"));
            }
            if !(*c >= 0.0) || !c.is_finite() {
                return Err(usage("--c", "must be finite and non-negative"));
            }
            if *classes < 2 {
                return Err(usage("--classes", "need at least 2 classes"));
            }
            let cfg = WorldConfig {
                n_0: *n0 as usize,
                s_m: *sm as usize,
                dim: *dim as usize,
                epsilon_m: *eps,
                c: *c,
                num_classes: *classes,
                spread: *spread,
                layout: match layout {
                    LayoutArg::Line => WorldLayout::Line,
                    LayoutArg::Scattered => WorldLayout::Scattered,
                },
                seed: *seed,
            };
            let world = gen_assumption_world(&cfg)?;
            save_world(&world, out)?;
            if cli.verbose {
                eprintln!("synth: assumption world with {} nodes -> {}", world.bundle.num_nodes(), out.display());
            }
        }
    }
    Ok(())
}
