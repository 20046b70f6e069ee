//! Command-line driver.
//!
//! Exit codes: 0 success, 1 solver/IO failure or failed verification,
//! 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mrp_core::{dampen, Pattern, SparsityConfig, StrategyCombo};

use crate::config::{parse_block_size, parse_list, parse_pattern, parse_strategy, ConfigError};
use crate::manifest::{LayerEntry, Manifest, StatisticSource};
use crate::model::{load_npy, load_statistic, prune_model, prune_single, save_text, RunError, RunOptions};
use crate::npy::Dtype;
use crate::report::{LayerStatus, MaskFile, RunReport};
use crate::sweep::{sweep, to_csv, SweepGrid};
use crate::synth::{write_dump, SynthSpec};
use crate::verify::{verify, TOLERANCE};

#[derive(Debug, Parser)]
#[command(name = "mrp", version, about = "Layer-wise post-training pruning with closed-form multiple-removal compensation")]
pub struct Cli {
    /// Worker threads; 0 uses every available core
    #[arg(long, global = true, env = "MRP_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prune one layer, or every layer of a manifest
    Prune(PruneArgs),
    /// Check a pruned tensor against the brute-force oracle on sampled rows
    Verify(VerifyArgs),
    /// Sweep the dampening ratio and calibration sample count
    Sweep(SweepArgs),
    /// Write a seeded synthetic dump with correlated calibration data
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "statistic", multiple = false)]
pub struct StatisticArgs {
    /// Calibration activations (m×B NPY, one row per input feature)
    #[arg(long, value_name = "NPY")]
    pub calib: Option<PathBuf>,

    /// Precomputed undamped 2·x·xᵀ (m×m NPY), instead of --calib
    #[arg(long, value_name = "NPY")]
    pub hessian: Option<PathBuf>,
}

impl StatisticArgs {
    fn source(&self) -> Option<StatisticSource> {
        match (&self.calib, &self.hessian) {
            (Some(c), None) => Some(StatisticSource::Calibration(c.clone())),
            (None, Some(h)) => Some(StatisticSource::Hessian(h.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "sparsity_pattern", required = true, multiple = false)]
pub struct PatternArgs {
    /// Unstructured pruning rate in [0, 1]
    #[arg(long, value_name = "ALPHA")]
    pub sparsity: Option<f64>,

    /// Semi-structured N:M pattern, e.g. 2:4
    #[arg(long, value_name = "N:M")]
    pub pattern: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,

    /// Mask selection strategy (m needs an N:M pattern)
    #[arg(long, value_name = "s|m", default_value = "s")]
    pub mask: String,

    /// Compensation strategy
    #[arg(long, value_name = "s|m", default_value = "m")]
    pub comp: String,

    /// Columns per block, or "all"
    #[arg(long, value_name = "INT|all", default_value = "all")]
    pub block_size: String,

    /// Dampening ratio, relative to the mean diagonal
    #[arg(long, value_name = "GAMMA", default_value_t = 0.01)]
    pub damp: f64,
}

impl SolverArgs {
    fn config(&self) -> Result<SparsityConfig, ConfigError> {
        let combo = StrategyCombo { mask: parse_strategy(&self.mask)?, comp: parse_strategy(&self.comp)? };
        let block_size = parse_block_size(&self.block_size)?;
        let pattern = match (&self.pattern.sparsity, &self.pattern.pattern) {
            (Some(alpha), None) => Pattern::Unstructured { alpha: *alpha },
            (None, Some(p)) => Pattern::SemiStructured(parse_pattern(p)?),
            _ => return Err(ConfigError("exactly one of --sparsity or --pattern is required".into())),
        };
        let cfg = SparsityConfig { pattern, block_size, combo, gamma_rel: self.damp };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Weight matrix (n×m NPY)
    #[arg(long, value_name = "NPY", required_unless_present = "manifest", conflicts_with = "manifest")]
    pub weights: Option<PathBuf>,

    #[command(flatten)]
    pub statistic: StatisticArgs,

    /// Pruned weight output (with --weights)
    #[arg(long, value_name = "NPY", requires = "weights")]
    pub out: Option<PathBuf>,

    /// Mask output as JSON (with --weights)
    #[arg(long, value_name = "JSON", requires = "weights")]
    pub mask_out: Option<PathBuf>,

    /// Layer name in the report (with --weights) [default: file stem of --weights]
    #[arg(long, requires = "weights")]
    pub name: Option<String>,

    /// Layer manifest; prunes every listed layer in order
    #[arg(long, value_name = "JSON", conflicts_with_all = ["calib", "hessian"])]
    pub manifest: Option<PathBuf>,

    /// Output directory for manifest runs
    #[arg(long, value_name = "DIR", requires = "manifest")]
    pub out_dir: Option<PathBuf>,

    /// Also write <layer>.mask.json next to each output (manifest runs)
    #[arg(long, requires = "manifest")]
    pub write_masks: bool,

    /// Stop at the first failing layer (manifest runs)
    #[arg(long, requires = "manifest")]
    pub fail_fast: bool,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Run report (JSON)
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,

    /// On-disk precision of the pruned tensors
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,

    /// Write null timings so identical runs produce identical reports
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Original weight matrix (n×m NPY)
    #[arg(long, value_name = "NPY")]
    pub weights: PathBuf,

    #[command(flatten)]
    pub statistic: StatisticArgs,

    /// Pruned weight matrix to check
    #[arg(long, value_name = "NPY")]
    pub pruned: PathBuf,

    /// Mask JSON written by prune; without it the mask is read off the zeros of --pruned
    #[arg(long, value_name = "JSON")]
    pub mask: Option<PathBuf>,

    /// Number of rows to sample (at least 1)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,

    /// Row sampling seed
    #[arg(long)]
    pub seed: u64,

    /// Dampening ratio, relative to the mean diagonal
    #[arg(long, value_name = "GAMMA", default_value_t = 0.01)]
    pub damp: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("axes").required(true).multiple(true).args(["damp_grid", "calib_counts"]))]
pub struct SweepArgs {
    /// Layer manifest
    #[arg(long, value_name = "JSON")]
    pub manifest: PathBuf,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Comma-separated dampening ratios [default: --damp]
    #[arg(long, value_name = "LIST")]
    pub damp_grid: Option<String>,

    /// Comma-separated calibration column counts [default: every column]
    #[arg(long, value_name = "LIST")]
    pub calib_counts: Option<String>,

    /// Seed for calibration subsampling
    #[arg(long)]
    pub seed: u64,

    /// CSV output: gamma_rel, n_calib, predicted_loss, measured_error_damped
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for tensors and manifest.json
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Number of layers
    #[arg(long, default_value_t = 1)]
    pub layers: usize,

    /// Output features per layer
    #[arg(long, default_value_t = 64)]
    pub rows: usize,

    /// Input features per layer
    #[arg(long, default_value_t = 128)]
    pub cols: usize,

    /// Calibration columns per layer
    #[arg(long, default_value_t = 512)]
    pub samples: usize,

    /// Correlation between neighbouring input features
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,

    /// Seed of the first layer; layer i uses seed + i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    Failed(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_report(report: &RunReport, path: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = path {
        save_text(&report.to_json(), path)?;
    }
    Ok(())
}

fn cmd_prune(args: &PruneArgs) -> Result<String, CliError> {
    let cfg = args.solver.config()?;
    let opts = RunOptions {
        dtype: args.dtype.into(),
        timings: !args.no_timings,
        fail_fast: args.fail_fast,
        write_masks: args.write_masks,
    };

    if let Some(manifest_path) = &args.manifest {
        let out_dir = args.out_dir.as_deref().ok_or_else(|| usage("--manifest needs --out-dir"))?;
        let manifest = Manifest::load(manifest_path).map_err(RunError::from)?;
        let report = prune_model(&manifest, &cfg, out_dir, &opts)?;
        write_report(&report, args.report.as_deref())?;
        let t = &report.totals;
        if t.layers_failed > 0 {
            let failed: Vec<String> = report
                .layers
                .iter()
                .filter(|l| l.status == LayerStatus::Failed)
                .map(|l| format!("{}: {}", l.layer_name, l.error.as_deref().unwrap_or("")))
                .collect();
            return Err(CliError::Failed(format!(
                "{} of {} layers failed\n  {}",
                t.layers_failed,
                report.layers.len(),
                failed.join("\n  ")
            )));
        }
        return Ok(format!(
            "pruned {} layers: sparsity {:.6}, predicted loss {:e}, measured error {:e}",
            t.layers_ok, t.achieved_sparsity, t.predicted_loss, t.measured_error_damped
        ));
    }

    let weights = args.weights.clone().ok_or_else(|| usage("--weights or --manifest is required"))?;
    let src = args.statistic.source().ok_or_else(|| usage("--weights needs --calib or --hessian"))?;
    let out = args.out.as_deref().ok_or_else(|| usage("--weights needs --out"))?;
    let name = args.name.clone().unwrap_or_else(|| {
        weights.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "layer".into())
    });
    let (calibration, hessian) = match src {
        StatisticSource::Calibration(p) => (Some(p), None),
        StatisticSource::Hessian(p) => (None, Some(p)),
    };
    let entry = LayerEntry { name, weights, calibration, hessian, overrides: Default::default() };
    let record = prune_single(&entry, &cfg, out, args.mask_out.as_deref(), &opts)?;
    let report = RunReport::new(vec![record]);
    write_report(&report, args.report.as_deref())?;
    let l = &report.layers[0];
    Ok(format!(
        "{} [{}]: sparsity {:.6}, predicted loss {:e}, measured error {:e}",
        l.layer_name,
        l.config.combo,
        l.achieved_sparsity.unwrap_or(0.0),
        l.predicted_loss.unwrap_or(0.0),
        l.measured_error_damped.unwrap_or(0.0)
    ))
}

fn cmd_verify(args: &VerifyArgs) -> Result<String, CliError> {
    if !(args.damp >= 0.0 && args.damp.is_finite()) {
        return Err(usage("--damp must be finite and non-negative"));
    }
    let src = args.statistic.source().ok_or_else(|| usage("verify needs --calib or --hessian"))?;
    let w = load_npy(&args.weights)?;
    let pruned = load_npy(&args.pruned)?;
    let mask = match &args.mask {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| RunError::Io { path: path.clone(), source })?;
            let file: MaskFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
            Some(file.into_mask().map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let name = "verify";
    let solver = |source| RunError::Solver { layer: name.into(), source };
    let g_raw = load_statistic(name, &src, w.cols())?;
    let h = dampen(&g_raw, args.damp).map_err(solver)?;
    let outcome = verify(&w, &pruned, mask.as_ref(), &h, args.rows as usize, args.seed).map_err(solver)?;

    let summary = format!(
        "rows checked: {}\nmax delta deviation: {:e}\nmax objective relative error: {:e}\ntolerance: {:e}",
        outcome.rows_checked.len(),
        outcome.max_delta_deviation,
        outcome.max_objective_rel_error,
        TOLERANCE
    );
    if let Some((r, c)) = outcome.violation {
        return Err(CliError::Failed(format!(
            "masked entry ({r}, {c}) of the pruned tensor is nonzero ({:e})\n{summary}",
            pruned[(r, c)]
        )));
    }
    if !outcome.passed() {
        return Err(CliError::Failed(format!("closed form disagrees with the oracle\n{summary}")));
    }
    Ok(format!("ok\n{summary}"))
}

fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let cfg = args.solver.config()?;
    let gammas = match &args.damp_grid {
        Some(list) => {
            let g: Vec<f64> = parse_list(list)?;
            if g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(usage("--damp-grid entries must be finite and non-negative"));
            }
            g.into_iter().map(Some).collect()
        }
        None => Vec::new(),
    };
    let counts = match &args.calib_counts {
        Some(list) => {
            let c: Vec<usize> = parse_list(list)?;
            if c.contains(&0) {
                return Err(usage("--calib-counts entries must be positive"));
            }
            c.into_iter().map(Some).collect()
        }
        None => Vec::new(),
    };
    let manifest = Manifest::load(&args.manifest).map_err(RunError::from)?;
    let grid = SweepGrid { gammas, calib_counts: counts, seed: args.seed };
    let points = sweep(&manifest, &cfg, &grid)?;
    save_text(&to_csv(&points), &args.out)?;
    Ok(format!("wrote {} grid points to {}", points.len(), args.out.display()))
}

fn cmd_synth(args: &SynthArgs) -> Result<String, CliError> {
    if args.rows == 0 || args.cols == 0 || args.samples == 0 || args.layers == 0 {
        return Err(usage("--layers, --rows, --cols and --samples must be positive"));
    }
    if args.rho.is_nan() || args.rho.abs() >= 1.0 {
        return Err(usage("--rho must lie in (-1, 1)"));
    }
    let spec = SynthSpec { rows: args.rows, cols: args.cols, samples: args.samples, rho: args.rho, seed: args.seed };
    let path = write_dump(&args.out_dir, &spec, args.layers)
        .map_err(|e| CliError::Failed(format!("{}: {e}", args.out_dir.display())))?;
    Ok(format!("wrote {}", path.display()))
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Prune(_) => "prune",
        Command::Verify(_) => "verify",
        Command::Sweep(_) => "sweep",
        Command::Synth(_) => "synth",
    }
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Prune(a) => cmd_prune(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = subcommand_name(&cli.command);
            let sub_cmd = cmd.find_subcommand_mut(sub).expect("subcommand exists");
            let _ = sub_cmd.error(clap::error::ErrorKind::ValueValidation, msg).print();
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrp_core::BlockSize;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_shows_defaults() {
        let mut cmd = Cli::command();
        cmd.build();
        let help = cmd.find_subcommand_mut("prune").unwrap().render_long_help().to_string();
        for needle in ["[default: 0.01]", "[default: all]", "[default: s]", "[default: m]", "[default: f64]", "MRP_THREADS"] {
            assert!(help.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn config_from_flags() {
        let cli = Cli::try_parse_from(["mrp", "sweep", "--manifest", "m.json", "--pattern", "2:4", "--damp-grid", "0.1", "--seed", "1", "--out", "o.csv"]).unwrap();
        let Command::Sweep(args) = cli.command else { panic!() };
        let cfg = args.solver.config().unwrap();
        assert_eq!(cfg.combo, StrategyCombo::SM);
        assert_eq!(cfg.block_size, BlockSize::All);
        assert_eq!(cfg.gamma_rel, 0.01);

        let cli = Cli::try_parse_from(["mrp", "prune", "--weights", "w", "--calib", "x", "--out", "p", "--sparsity", "0.5", "--mask", "m"]).unwrap();
        let Command::Prune(args) = cli.command else { panic!() };
        assert!(matches!(args.solver.config(), Err(ConfigError(_))));
    }

    #[test]
    fn parse_level_usage_errors() {
        let bad = [
            vec!["mrp", "prune", "--weights", "w", "--calib", "x", "--out", "p"],
            vec!["mrp", "prune", "--weights", "w", "--calib", "x", "--out", "p", "--sparsity", "0.5", "--pattern", "2:4"],
            vec!["mrp", "prune", "--weights", "w", "--calib", "x", "--hessian", "g", "--out", "p", "--sparsity", "0.5"],
            vec!["mrp", "verify", "--weights", "w", "--calib", "x", "--pruned", "p", "--rows", "0", "--seed", "1"],
            vec!["mrp", "sweep", "--manifest", "m", "--sparsity", "0.5", "--seed", "1", "--out", "o"],
        ];
        for args in bad {
            let err = Cli::try_parse_from(&args).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }
}
