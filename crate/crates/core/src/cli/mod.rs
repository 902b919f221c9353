//! The `cfsr` command line: argument parsing, settings files, run manifests
//! and the experiment grids behind `reproduce`.

mod config;
mod manifest;
mod reproduce;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::{FileConfig, ReproduceConfig};
pub use manifest::RunManifest;
pub use reproduce::{run_experiment, Experiment, ExperimentOutput};

use crate::constopt::fitted_tree;
use crate::data::Dataset;
use crate::error::Error;
use crate::expr::{evaluate, ExpressionTree, TokenPool};
use crate::reward::{combined_reward, norm_complexity, nrmse};
use crate::rng;
use crate::search::{ghr_pool, gm_pool, krauss_pool, mpe, run_search, Method};
use crate::traffic::{add_noise, generate_dataset, target_expression, CarFollowingModel, GenerateConfig, NoiseSpec};
use crate::vis::{run_vis, InteractionReport, Scenario, SelectionMode};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CFSR_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "cfsr", version, about = "Symbolic regression of car-following models")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "cfsr-out")]
    pub out: PathBuf,
    /// JSON settings file (or a run manifest); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Simulate a leader/follower dataset.
    Generate(GenerateArgs),
    /// Rank variable interactions and propose scenarios.
    Vis(VisArgs),
    /// Search for an expression.
    Search(SearchArgs),
    /// Score a given expression on a dataset.
    Eval(EvalArgs),
    /// Run one of the experiment grids.
    Reproduce(ReproduceArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Vis(_) => "vis",
            Command::Search(_) => "search",
            Command::Eval(_) => "eval",
            Command::Reproduce(_) => "reproduce",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// krauss, gm or ghr.
    #[arg(long, default_value = "krauss")]
    pub model: String,
    /// Target noise as a fraction of the target's standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Vehicle parameter override such as `a_max=3.0`; repeatable.
    #[arg(long = "param")]
    pub params: Vec<String>,
    /// File stem of the CSV (defaults to the model name).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct VisArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of elbow cuts.
    #[arg(long)]
    pub cuts: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Token pool JSON; the built-in pool of the dataset's model otherwise.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value = "vis-dsr-gp")]
    pub method: Method,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Scenario number (from 1) taken from `--vis-report`.
    #[arg(long)]
    pub scenario: Option<usize>,
    #[arg(long)]
    pub vis_report: Option<PathBuf>,
    /// Manual scenario: combinations separated by `;`, variables by `,`,
    /// e.g. `v_f;v_l;ds;ds,v_l,v_f`.
    #[arg(long)]
    pub sets: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// `auto` (the dataset's generating model), `none`, or a prefix expression.
    #[arg(long, default_value = "auto")]
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Prefix expression; `const` placeholders are fitted first.
    #[arg(long)]
    pub expr: String,
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Scales seed count and epoch budget.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Use this interaction report instead of running the detector.
    #[arg(long)]
    pub vis_report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, settings or inputs: exit code 2.
    Usage(String),
    /// Anything else: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    if let Some(n) = cli.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialised; --jobs ignored");
        }
    }
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", RunManifest::path_in(&cli.out, &manifest.command).display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command line and returns the manifest it wrote.
pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let (command, mut config, config_path, seed) = match &cli.command {
        Command::Rerun(a) => {
            let m = RunManifest::read(&a.manifest).map_err(|e| usage(format!("{}: {e}", a.manifest.display())))?;
            (m.invocation, m.config, m.config_path, cli.seed.unwrap_or(m.seed))
        }
        other => {
            let config = match &cli.config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            };
            (other.clone(), config, cli.config.clone(), cli.seed.unwrap_or(0))
        }
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    let outputs = match &command {
        Command::Generate(a) => cmd_generate(a, &mut config, seed, out)?,
        Command::Vis(a) => cmd_vis(a, &mut config, seed, out)?,
        Command::Search(a) => cmd_search(a, &mut config, seed, out)?,
        Command::Eval(a) => cmd_eval(a, &config, seed, out)?,
        Command::Reproduce(a) => cmd_reproduce(a, &mut config, seed, out)?,
        Command::Rerun(_) => return Err(usage("a manifest cannot point at another rerun")),
    };
    let manifest = RunManifest {
        command: command.name().to_string(),
        invocation: command,
        config_path,
        config,
        seed,
        outputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(usage(format!("dataset {} does not exist", path.display())));
    }
    Ok(Dataset::read_csv(path)?)
}

fn read_pool(path: &Path) -> CliResult<TokenPool> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read pool {}: {e}", path.display())))?;
    TokenPool::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_text(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// The model that generated `data`, read from its sidecar.
pub fn dataset_model(data: &Dataset) -> Option<CarFollowingModel> {
    data.meta
        .params
        .as_ref()
        .and_then(|p| serde_json::from_value::<GenerateConfig>(p.clone()).ok())
        .map(|g| g.model)
        .or_else(|| data.meta.model.as_deref().and_then(|m| m.parse().ok()))
}

/// Built-in pool for `model` as used by `method`.
pub fn default_pool(model: CarFollowingModel, method: Method) -> TokenPool {
    match model {
        CarFollowingModel::Krauss => krauss_pool(method.structural_constraints(), (10, 40)),
        CarFollowingModel::Gm { .. } => gm_pool(),
        CarFollowingModel::Ghr { .. } => ghr_pool(),
    }
}

/// Parses `v_f;v_l;ds,v_l,v_f` into a scenario.
pub fn parse_sets(text: &str) -> CliResult<Scenario> {
    let s: Scenario = text
        .split(';')
        .map(|set| set.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect::<Vec<_>>())
        .filter(|set| !set.is_empty())
        .collect();
    if s.is_empty() {
        return Err(usage("--sets names no variables"));
    }
    Ok(s)
}

fn apply_params(cfg: &mut GenerateConfig, params: &[String]) -> CliResult<()> {
    let mut v = serde_json::to_value(cfg.vehicle).map_err(|e| CliError::Runtime(e.to_string()))?;
    for p in params {
        let (key, value) = p.split_once('=').ok_or_else(|| usage(format!("--param `{p}` is not key=value")))?;
        let value: f64 = value.trim().parse().map_err(|_| usage(format!("--param `{p}` has a non-numeric value")))?;
        let slot = v
            .get_mut(key.trim())
            .ok_or_else(|| usage(format!("unknown vehicle parameter `{key}`")))?;
        *slot = serde_json::json!(value);
    }
    cfg.vehicle = serde_json::from_value(v).map_err(|e| usage(e.to_string()))?;
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, config: &mut FileConfig, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    let model: CarFollowingModel = a.model.parse()?;
    let g = &mut config.generate;
    if g.model.name() != model.name() {
        g.model = model;
    }
    g.seed = seed;
    if let Some(n) = a.pairs {
        g.n_pairs = n;
    }
    if let Some(h) = a.horizon {
        g.horizon = h;
    }
    apply_params(g, &a.params)?;
    let noise = NoiseSpec::new(a.noise.unwrap_or(0.0), rng::derive_seed(seed, "generate-noise", 0));
    noise.validate()?;
    let data = add_noise(&generate_dataset(g)?, &noise)?;
    let stem = a.name.clone().unwrap_or_else(|| model.name().to_string());
    let csv = out.join(format!("{stem}.csv"));
    data.write_csv(&csv)?;
    let sidecar = data.write_sidecar(&csv)?;
    log::info!("{} rows written to {}", data.n_rows(), csv.display());
    Ok(vec![csv, sidecar])
}

fn cmd_vis(a: &VisArgs, config: &mut FileConfig, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    let data = read_dataset(&a.data)?;
    let v = &mut config.vis;
    v.net.seed = seed;
    if let Some(e) = a.epochs {
        v.net.epochs = e;
    }
    if let Some(k) = a.cuts {
        v.selection = SelectionMode::AutoElbow { cuts: k };
    }
    let (report, _, trace) = run_vis(&data, v)?;
    let json = write_text(out.join("vis_report.json"), &report.to_json())?;
    let csv = out.join("vis_strengths.csv");
    report.write_csv(&csv)?;
    let mut loss = String::from("epoch,train_mse,validation_mse\n");
    for (i, (t, v)) in trace.train.iter().zip(&trace.validation).enumerate() {
        loss.push_str(&format!("{},{t:?},{v:?}\n", i + 1));
    }
    let loss = write_text(out.join("vis_loss.csv"), &loss)?;
    for (i, s) in report.scenarios.iter().enumerate() {
        let sets: Vec<String> = s.iter().map(|c| c.join(",")).collect();
        println!("scenario #{}: {}", i + 1, sets.join("; "));
    }
    Ok(vec![json, csv, loss])
}

fn search_scenario(a: &SearchArgs) -> CliResult<Option<Scenario>> {
    if let Some(text) = &a.sets {
        return parse_sets(text).map(Some);
    }
    if let Some(path) = &a.vis_report {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let report: InteractionReport =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let n = a.scenario.unwrap_or(1);
        return report
            .scenario(n)
            .cloned()
            .map(Some)
            .ok_or_else(|| usage(format!("the report has no scenario #{n}")));
    }
    Ok(None)
}

fn cmd_search(a: &SearchArgs, config: &mut FileConfig, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    let pool = a.pool.as_deref().map(read_pool).transpose()?;
    let data = read_dataset(&a.data)?;
    let model = dataset_model(&data);
    let pool = match (pool, model) {
        (Some(p), _) => p,
        (None, Some(m)) => default_pool(m, a.method),
        (None, None) => return Err(usage("the dataset has no known model; pass --pool")),
    };
    let scenario = search_scenario(a)?;
    if a.method == Method::VisDsrGp && scenario.is_none() {
        return Err(usage("vis-dsr-gp needs --vis-report or --sets"));
    }
    let cfg = &mut config.search;
    cfg.seed = seed;
    cfg.apply_method(a.method, scenario);
    if let (Some(b), Method::VisDsrGp) = (a.beta, a.method) {
        cfg.reward.beta = b;
    }
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    if let Some(b) = a.batch {
        cfg.batch = b;
    }
    let target = match a.target.as_str() {
        "none" => None,
        "auto" => model.map(target_expression),
        text => Some(ExpressionTree::parse_prefix(text, Some(&pool)).map_err(|e| usage(format!("--target: {e}")))?),
    };
    let report = run_search(&data, &pool, cfg, target.as_ref())?;
    let json = write_text(out.join("search_report.json"), &report.to_json())?;
    let trace = write_text(out.join("search_trace.jsonl"), &report.trace_jsonl())?;
    match &report.best {
        Some(b) => println!(
            "best: {} (nrmse {}, complexity {}, recovered {})",
            b.infix,
            b.nrmse.map_or("n/a".into(), |e| format!("{e:.3e}")),
            b.complexity,
            report.recovered.map_or("n/a".into(), |r| r.to_string())
        ),
        None => println!("no valid expression found"),
    }
    Ok(vec![json, trace])
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    expression: String,
    complexity: usize,
    nrmse: f64,
    mpe: Option<f64>,
    reward: f64,
    constants: std::collections::BTreeMap<usize, f64>,
}

fn cmd_eval(a: &EvalArgs, config: &FileConfig, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    let pool = a.pool.as_deref().map(read_pool).transpose()?;
    let data = read_dataset(&a.data)?;
    let pool = pool.or_else(|| dataset_model(&data).map(|m| default_pool(m, Method::VisDsrGp)));
    let tree = ExpressionTree::parse_prefix(&a.expr, pool.as_ref()).map_err(|e| usage(format!("--expr: {e}")))?;
    let fit_cfg = crate::constopt::ConstFitConfig {
        seed,
        ..config.search.const_fit.clone()
    };
    let (tree, _) = fitted_tree(&tree, &data, &fit_cfg).map_err(|e| CliError::Runtime(format!("cannot evaluate: {e}")))?;
    let pred = evaluate(&tree, &data).map_err(|e| CliError::Runtime(format!("cannot evaluate: {e}")))?;
    let l_e = nrmse(&pred, data.target())?;
    let r = &config.search.reward;
    let out_v = EvalOutput {
        expression: tree.infix(),
        complexity: tree.complexity(),
        nrmse: l_e,
        mpe: mpe(&pred, data.clean_target()),
        reward: combined_reward(l_e, norm_complexity(tree.complexity(), r.p_min, r.p_max)),
        constants: tree.constants().clone(),
    };
    let text = serde_json::to_string_pretty(&out_v).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(vec![write_text(out.join("eval.json"), &text)?])
}

fn cmd_reproduce(a: &ReproduceArgs, config: &mut FileConfig, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    if let Some(s) = a.scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(usage("--scale must be positive"));
        }
        config.reproduce.scale = s;
    }
    let vis = match &a.vis_report {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let dir = out.join(a.experiment.name());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    let result = run_experiment(a.experiment, config, seed, vis, &dir)?;
    print!("{}", result.best_table);
    Ok(result.files)
}

impl ValueEnum for Experiment {
    fn value_variants<'a>() -> &'a [Self] {
        &Experiment::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_manual_sets() {
        let s = parse_sets("v_f; v_l ;ds,v_l,v_f;").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[2], vec!["ds", "v_l", "v_f"]);
        assert!(parse_sets(" ; ").is_err());
    }

    #[test]
    fn unknown_model_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(["cfsr", "generate", "--model", "idm", "--out", out]), 2);
        assert_eq!(main_with_args(["cfsr", "generate", "--noise", "0.5", "--out", out]), 2);
    }

    #[test]
    fn param_overrides() {
        let mut g = GenerateConfig::default();
        apply_params(&mut g, &["a_max=3.0".into()]).unwrap();
        assert_eq!(g.vehicle.a_max, 3.0);
        assert!(apply_params(&mut g, &["speed=1".into()]).is_err());
        assert!(apply_params(&mut g, &["a_max".into()]).is_err());
    }
}
