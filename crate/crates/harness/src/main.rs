use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vqadv::{NormBudget, StepRule, ThresholdRule};
use vqadv_harness::sweep::{sweep_table, SweepRow};
use vqadv_harness::{
    audit_outputs, gen_synthetic, run_experiment, sweep, AttackChoice, DatasetManifest, ExperimentConfig,
    ExperimentReport, GenConfig, HarnessError, MosFallback, Result, ScorerChoice, SweepAxis,
};

/// Adversarial robustness experiments for video quality scorers.
#[derive(Parser)]
#[command(name = "vqadv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack every video in a manifest and write report, traces and videos.
    Attack(ExperimentArgs),
    /// Repeat an attack over several values of one setting.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// T, N, ratio or step_rule.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Generate a synthetic dataset with a manifest.
    Gen(GenArgs),
    /// Recheck written adversarial videos against the perturbation budget.
    Audit(ExperimentArgs),
    /// Print a stored report.json or sweep.json.
    Report {
        /// Output directory or JSON file.
        path: PathBuf,
    },
}

/// Experiment settings. Flags override values loaded from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// whitebox, blackbox or pixel_baseline.
    #[arg(long, value_parser = parse_attack)]
    attack: Option<AttackChoice>,
    /// tv, conv[:SEED], const:VALUE or bridge:ADDRESS.
    #[arg(long, value_parser = parse_scorer)]
    scorer: Option<ScorerChoice>,
    /// median, midpoint:LOWER:UPPER or explicit:VALUE.
    #[arg(long, value_parser = parse_threshold)]
    threshold_rule: Option<ThresholdRule>,
    /// require or clean_score.
    #[arg(long, value_parser = parse_mos_fallback)]
    mos_fallback: Option<MosFallback>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    perturb_ratio: Option<f64>,
    #[arg(long)]
    global_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Frames per round (T), for both attacks.
    #[arg(long)]
    frames_per_round: Option<usize>,
    /// White-box iterations per round (K).
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    /// steepest_descent or adaptive_moments.
    #[arg(long, value_parser = parse_step_rule)]
    step_rule: Option<StepRule>,
    #[arg(long)]
    eps_l2: Option<f64>,
    #[arg(long)]
    eps_linf: Option<f64>,
    /// Black-box queries per round (N).
    #[arg(long)]
    queries_per_round: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    patch_h: Option<usize>,
    #[arg(long)]
    patch_w: Option<usize>,
    #[arg(long)]
    max_total_queries: Option<u64>,
    /// Seed of the selected attack.
    #[arg(long)]
    attack_seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    /// Destination directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON generator configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    brightness_spread: Option<f64>,
    /// Scorer whose clean output becomes the MOS.
    #[arg(long, value_parser = parse_scorer)]
    scorer: Option<ScorerChoice>,
}

fn parse_attack(s: &str) -> std::result::Result<AttackChoice, String> {
    match s.replace('-', "_").as_str() {
        "whitebox" | "white_box" => Ok(AttackChoice::Whitebox),
        "blackbox" | "black_box" => Ok(AttackChoice::Blackbox),
        "pixel_baseline" | "pixel" => Ok(AttackChoice::PixelBaseline),
        _ => Err(format!("unknown attack {s:?}")),
    }
}

fn parse_scorer(s: &str) -> std::result::Result<ScorerChoice, String> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
    let number = |a: Option<&str>| -> std::result::Result<f64, String> {
        a.ok_or_else(|| format!("scorer {kind} needs a value"))?
            .parse()
            .map_err(|_| format!("bad scorer argument in {s:?}"))
    };
    match kind {
        "tv" => Ok(ScorerChoice::Tv),
        "conv" => Ok(ScorerChoice::Conv {
            seed: arg.map_or(Ok(0), |a| a.parse().map_err(|_| format!("bad conv seed in {s:?}")))?,
        }),
        "const" => Ok(ScorerChoice::Const { value: number(arg)? }),
        "bridge" => match arg {
            Some(address) if !address.is_empty() => Ok(ScorerChoice::Bridge {
                address: address.to_string(),
            }),
            _ => Err("bridge scorer needs an address".into()),
        },
        _ => Err(format!("unknown scorer {s:?}")),
    }
}

fn parse_threshold(s: &str) -> std::result::Result<ThresholdRule, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("bad number in {s:?}"));
    match parts.as_slice() {
        ["median"] => Ok(ThresholdRule::MedianOfBatch),
        ["midpoint", lo, hi] => Ok(ThresholdRule::MidpointOfRange {
            lower: num(lo)?,
            upper: num(hi)?,
        }),
        ["explicit", t] => Ok(ThresholdRule::Explicit { threshold: num(t)? }),
        _ => Err(format!("unknown threshold rule {s:?}")),
    }
}

fn parse_mos_fallback(s: &str) -> std::result::Result<MosFallback, String> {
    match s.replace('-', "_").as_str() {
        "require" => Ok(MosFallback::Require),
        "clean_score" => Ok(MosFallback::CleanScore),
        _ => Err(format!("unknown MOS fallback {s:?}")),
    }
}

fn parse_step_rule(s: &str) -> std::result::Result<StepRule, String> {
    match s.replace('-', "_").as_str() {
        "steepest_descent" | "sgd" => Ok(StepRule::SteepestDescent),
        "adaptive_moments" | "adam" => Ok(StepRule::AdaptiveMoments),
        _ => Err(format!("unknown step rule {s:?}")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_json(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            manifest => cfg.manifest,
            attack => cfg.attack,
            scorer => cfg.scorer,
            threshold_rule => cfg.threshold_rule,
            mos_fallback => cfg.mos_fallback,
            output_dir => cfg.output_dir,
            perturb_ratio => cfg.perturb_ratio,
            global_seed => cfg.global_seed,
            workers => cfg.workers,
            iterations => cfg.whitebox.iterations,
            step_size => cfg.whitebox.step_size,
            step_rule => cfg.whitebox.step_rule,
            eps_l2 => cfg.whitebox.budget.eps_l2,
            eps_linf => cfg.whitebox.budget.eps_linf,
            queries_per_round => cfg.blackbox.queries_per_round,
            gamma => cfg.blackbox.gamma,
            patch_h => cfg.blackbox.patch_h,
            patch_w => cfg.blackbox.patch_w,
        }
        if let Some(t) = self.frames_per_round {
            cfg.whitebox.frames_per_round = t;
            cfg.blackbox.frames_per_round = t;
        }
        if self.max_total_queries.is_some() {
            cfg.blackbox.max_total_queries = self.max_total_queries;
        }
        if let Some(seed) = self.attack_seed {
            match cfg.attack {
                AttackChoice::Whitebox => cfg.whitebox.seed = seed,
                AttackChoice::Blackbox | AttackChoice::PixelBaseline => cfg.blackbox.seed = seed,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl GenArgs {
    fn resolve(&self) -> Result<GenConfig> {
        let mut cfg: GenConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => GenConfig::default(),
        };
        if let Some(v) = self.count {
            cfg.count = v;
        }
        if let Some(v) = self.frames {
            cfg.frames = v;
        }
        if let Some(v) = self.height {
            cfg.height = v;
        }
        if let Some(v) = self.width {
            cfg.width = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.sigma_max {
            cfg.sigma_max = v;
        }
        if let Some(v) = self.brightness_spread {
            cfg.brightness_spread = v;
        }
        if let Some(v) = &self.scorer {
            cfg.scorer = v.clone();
        }
        Ok(cfg)
    }
}

fn audit(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let budget: NormBudget = cfg.audit_budget();
    let rows = audit_outputs(&manifest, &cfg.output_dir, &budget)?;
    if rows.is_empty() {
        return Err(HarnessError::Config(format!(
            "no adversarial videos found in {}",
            cfg.output_dir.display()
        )));
    }
    println!("{:<24} {:>12} {:>12}  ok", "id", "pixel_l2", "linf");
    for r in &rows {
        println!("{:<24} {:>12.3e} {:>12.3e}  {}", r.id, r.pixel_l2, r.linf, r.within_budget);
    }
    let bad: Vec<&str> = rows.iter().filter(|r| !r.within_budget).map(|r| r.id.as_str()).collect();
    if bad.is_empty() {
        println!("{} videos within eps_l2 {} / eps_linf {}", rows.len(), budget.eps_l2, budget.eps_linf);
        Ok(())
    } else {
        Err(HarnessError::InvariantBreach(format!("over budget: {}", bad.join(", "))))
    }
}

fn report(path: &Path) -> Result<()> {
    let file = if path.is_dir() {
        ["report.json", "sweep.json"]
            .iter()
            .map(|name| path.join(name))
            .find(|p| p.is_file())
            .ok_or_else(|| HarnessError::Config(format!("no report.json or sweep.json in {}", path.display())))?
    } else {
        path.to_path_buf()
    };
    let value: serde_json::Value = read_json(&file)?;
    if value.is_array() {
        let rows: Vec<SweepRow> = read_json(&file)?;
        let axis = rows.first().map_or(SweepAxis::T, |r| r.axis);
        print!("{}", sweep_table(axis, &rows));
    } else {
        let report = ExperimentReport::load(&file)?;
        print!("{}", report.to_text());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Attack(args) => {
            let cfg = args.resolve()?;
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_text());
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Sweep {
            experiment,
            axis,
            values,
        } => {
            let cfg = experiment.resolve()?;
            let rows = sweep(&cfg, axis, &values)?;
            print!("{}", sweep_table(axis, &rows));
        }
        Command::Gen(args) => {
            let cfg = args.resolve()?;
            let manifest = gen_synthetic(&cfg, &args.out)?;
            println!(
                "wrote {} videos and manifest.json to {}",
                manifest.entries.len(),
                args.out.display()
            );
        }
        Command::Audit(args) => audit(&args)?,
        Command::Report { path } => report(&path)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
