//! Command-line entry point: `gen`, `train`, `eval`, `gradcheck`, `dtw-test`.

mod config;

pub use config::{RunConfig, TrainMethod, KEYS};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::align::{ctw_fit, optimality_sweep, transience_fit, TrainRun};
use crate::error::{invalid, Error, Result};
use crate::eval::{evaluate_dataset, pooled_alignment_error, ranking_csv, report_csv, Comparison};
use crate::losses::suite::{run_suite, suite_names, SuiteConfig};
use crate::net::checkpoint;
use crate::rng::{stream, Stream};
use crate::seqcore::io::write_path_csv;
use crate::seqcore::{FeatureSequence, FittedPipeline};
use crate::synth::{generate_dataset, read_split, write_dataset, SynthPair};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "transience", version, about = "Align multi-view time series with learned projections and DTW")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// key=value config file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed (overrides the `seed` key)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the `out_dir` key)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override one config key; repeatable, applied after --config
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset
    Gen,
    /// Align the training pairs of a dataset
    Train {
        /// Dataset root (overrides `data_dir`)
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Dependence loss: cca | mmi | contrastive (overrides `loss`)
        #[arg(long)]
        loss: Option<String>,
        /// transience | ctw (overrides `method`)
        #[arg(long)]
        variant: Option<String>,
    },
    /// Compare alignment variants on generated or stored data
    Eval {
        /// Evaluate a stored dataset instead of generating one per seed
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Comma list of variants (overrides `variants`)
        #[arg(long)]
        variants: Option<String>,
    },
    /// Check analytic loss gradients against finite differences
    Gradcheck {
        /// Only entries matching this name, base loss or family (e.g. cca, objective)
        #[arg(long)]
        loss: Option<String>,
        /// Perturb the named entry's gradient to exercise the failure path
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Compare DTW with exhaustive search on random cost matrices
    DtwTest,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let keys = RunConfig::describe_keys();
    let command = Cli::command().after_help(keys.clone()).after_long_help(keys);
    let cli = match command.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn build_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        cfg.apply_file(path)?;
    }
    for assignment in &global.set {
        cfg.apply(assignment)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    match command {
        Command::Train { data, loss, variant } => {
            if let Some(d) = data {
                cfg.data_dir = d.clone();
            }
            if let Some(l) = loss {
                cfg.set("loss", l)?;
            }
            if let Some(v) = variant {
                cfg.set("method", v)?;
            }
        }
        Command::Eval { data, variants } => {
            if let Some(d) = data {
                cfg.data_dir = d.clone();
            }
            if let Some(v) = variants {
                cfg.set("variants", v)?;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global, &cli.command)?;
    match cli.command {
        Command::Gen => cmd_gen(&cfg),
        Command::Train { .. } => cmd_train(&cfg),
        Command::Eval { data, .. } => cmd_eval(&cfg, data.is_some()),
        Command::Gradcheck { loss, corrupt } => cmd_gradcheck(&cfg, loss.as_deref(), corrupt),
        Command::DtwTest => cmd_dtw_test(&cfg),
    }
}

fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let data = generate_dataset(&cfg.spec, cfg.seed)?;
    write_dataset(&cfg.out_dir, &data)?;
    println!("wrote {} train and {} test pairs to {}", data.train.len(), data.test.len(), cfg.out_dir.display());
    Ok(())
}

fn load_split(root: &Path, split: &str) -> Result<Vec<SynthPair>> {
    if !root.join(split).is_dir() {
        return Err(invalid(format!("no `{split}` split under {}", root.display())));
    }
    let pairs = read_split(root, split)?;
    if pairs.is_empty() {
        return Err(invalid(format!("`{split}` split under {} is empty", root.display())));
    }
    Ok(pairs)
}

fn format_projection(weights: &DMatrix<f64>, bias: &nalgebra::DVector<f64>) -> String {
    let mut out = String::from("# one latent dimension per row: weights..., bias\n");
    for r in 0..weights.nrows() {
        let row: Vec<String> = weights.row(r).iter().chain(std::iter::once(&bias[r])).map(f64::to_string).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn write_model(dir: &Path, cfg: &RunConfig, run: &TrainRun) -> Result<()> {
    match cfg.method {
        TrainMethod::Transience => checkpoint::save(&dir.join("checkpoint.bin"), &run.stack),
        TrainMethod::Ctw => {
            for (name, net) in [("projection_x.txt", &run.stack.encoder_x), ("projection_y.txt", &run.stack.encoder_y)] {
                let layer = &net.layers()[0];
                fs::write(dir.join(name), format_projection(&layer.weights, &layer.bias))?;
            }
            Ok(())
        }
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let pairs = load_split(&cfg.data_dir, "train")?;
    let s = &cfg.settings;
    let fitted = FittedPipeline::fit(&s.pipeline, pairs.iter().map(|p| (&p.x, &p.y)))?;
    let features: Vec<(FeatureSequence, FeatureSequence)> =
        pairs.iter().map(|p| Ok((fitted.apply_x(&p.x)?, fitted.apply_y(&p.y)?))).collect::<Result<_>>()?;
    let train = crate::align::TrainConfig { seed: cfg.seed, ..s.train.clone() };
    let run = match cfg.method {
        TrainMethod::Transience => transience_fit(&features, &s.loss, &train)?,
        TrainMethod::Ctw => ctw_fit(&features, &train)?,
    };

    fs::create_dir_all(cfg.out_dir.join("paths"))?;
    write_model(&cfg.out_dir, cfg, &run)?;
    for (i, path) in run.paths.iter().enumerate() {
        write_path_csv(&cfg.out_dir.join("paths").join(format!("pair_{i:03}.csv")), path)?;
    }
    fs::write(cfg.out_dir.join("history.csv"), run.history_csv())?;

    let error = pooled_alignment_error(run.paths.iter().zip(&pairs).map(|(p, d)| (p, d.true_map.as_slice())))?;
    println!(
        "outer iterations {} (converged: {}), DTW cost {} -> {}, mean deviation from truth {:.3} frames",
        run.history.len(),
        run.converged,
        run.initial.dtw_cost_total,
        run.final_cost(),
        error.mean_abs_deviation
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, stored: bool) -> Result<()> {
    let comparison = if stored {
        let train = load_split(&cfg.data_dir, "train")?;
        let test = load_split(&cfg.data_dir, "test")?;
        Comparison::from_reports(evaluate_dataset(&train, &test, &cfg.variants, cfg.seed, &cfg.settings)?)
    } else {
        let mut reports = Vec::new();
        for offset in 0..cfg.seeds as u64 {
            let seed = cfg.seed.wrapping_add(offset);
            let data = generate_dataset(&cfg.spec, seed)?;
            reports.extend(evaluate_dataset(&data.train, &data.test, &cfg.variants, seed, &cfg.settings)?);
        }
        Comparison::from_reports(reports)
    };
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("report.csv"), report_csv(&comparison.reports))?;
    fs::write(cfg.out_dir.join("ranking.csv"), ranking_csv(&comparison))?;
    for (i, r) in comparison.ranking.iter().enumerate() {
        println!("{:>2}. {:<20} median deviation {:.3}  median MSE {:.5}", i + 1, r.variant, r.median_mean_abs_dev, r.median_downstream_mse);
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &RunConfig, filter: Option<&str>, corrupt: Option<String>) -> Result<()> {
    if let Some(name) = &corrupt {
        if !suite_names().contains(name) {
            return Err(invalid(format!("cannot corrupt unknown entry `{name}`")));
        }
    }
    let suite = SuiteConfig { trials: cfg.grad_trials, tolerance: cfg.grad_tolerance, seed: cfg.seed, corrupt, ..Default::default() };
    let entries = run_suite(&suite, filter)?;
    if entries.is_empty() {
        return Err(invalid(format!("no gradient check matches `{}`", filter.unwrap_or_default())));
    }
    for e in &entries {
        println!("{:<32} max relative error {:.3e}  {}", e.name, e.max_rel_error, if e.passed { "ok" } else { "FAIL" });
    }
    let failed: Vec<&str> = entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!("gradient check failed for {} (tolerance {:e})", failed.join(", "), cfg.grad_tolerance)))
    }
}

fn cmd_dtw_test(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let report = optimality_sweep(cfg.dtw_trials, cfg.dtw_max_side, &mut stream(cfg.seed, Stream::Check))?;
    println!(
        "{} matrices up to {side}x{side}, {} mismatches, {:.2}s",
        report.matrices,
        report.mismatches.len(),
        start.elapsed().as_secs_f64(),
        side = cfg.dtw_max_side
    );
    match report.mismatches.first() {
        None => Ok(()),
        Some(m) => Err(Error::CheckFailed(format!(
            "DTW cost {} differs from exhaustive optimum {} on a {}x{} matrix",
            m.dtw_cost, m.brute_force_cost, m.shape.0, m.shape.1
        ))),
    }
}
