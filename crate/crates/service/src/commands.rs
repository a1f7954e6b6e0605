//! The `rdqmap` subcommands.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rdqmap_core::canonical_json;
use rdqmap_core::explain::{explain_with, render_chart, render_svg, ExplainRequest, ExplanationBundle};
use rdqmap_core::llm::{build_prompt_with_palette, ChatMode, PromptBundle};
use rdqmap_core::qmap::{select_global, ConvApproximator, ConvSettings, Heads, TabularApproximator};
use rdqmap_core::scene::{Action, GridScene, Pixel, Scenario, ScenarioConfig, DEFAULT_PALETTE};
use rdqmap_core::trainer::{
    evaluate_policy, metrics_jsonl, mix_seed, oracle_action, train, train_monolithic, EvalReport, TrainMode,
    DEFAULT_CHOICES_PER_RUN, DEFAULT_EVAL_RUNS,
};

use crate::api::{self, AppState};
use crate::config::{ApproximatorKind, RepoConfig};
use crate::model::{save_checkpoint, Model};
use crate::{read_text, remote, write_text, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "rdqmap", version, about = "Train, evaluate and explain reward-decomposed Q-Map agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene and write it as JSON.
    GenScene(GenSceneArgs),
    /// Train an approximator; writes a checkpoint and a JSON-lines metrics log.
    Train(TrainArgs),
    /// Measure the correct-choice rate of a checkpoint.
    Eval(EvalArgs),
    /// Explain the greedy decision in a scene.
    Explain(ExplainArgs),
    /// Ask a question about an explanation bundle.
    Chat(ChatArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Grasp,
    Land,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Grasp => Scenario::Grasp,
            ScenarioArg::Land => Scenario::Land,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Decomposed,
    Monolithic,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Decomposed => TrainMode::Decomposed,
            ModeArg::Monolithic => TrainMode::Monolithic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    /// Greedy actions of the checkpoint.
    Model,
    /// Always a best-reward action (sanity check: 100%).
    Oracle,
    /// Uniformly random pixels.
    Random,
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Take generator settings from this config when its scenario matches.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.mode` from the config.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Checkpoint path; defaults to `<paths.checkpoints>/<scenario>-<mode>-seed<seed>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics path; defaults to `<checkpoint stem>.metrics.jsonl` beside `--out`, else under `paths.logs`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EVAL_RUNS)]
    pub runs: usize,
    /// Decisions per run.
    #[arg(long, default_value_t = DEFAULT_CHOICES_PER_RUN)]
    pub choices: usize,
    #[arg(long, default_value_t = 0xE7A1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Model)]
    pub policy: PolicyArg,
    /// Used when the checkpoint does not record its scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path; defaults to the checkpoint path with `.eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["checkpoint", "qmaps"])))]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A fixed `QMapSet` JSON file instead of a checkpoint.
    #[arg(long)]
    pub qmaps: Option<PathBuf>,
    #[arg(long)]
    pub scene: PathBuf,
    /// Candidate pair to contrast, e.g. `Selected,B`. Repeatable.
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<(String, String)>,
    /// Extra pixel to explain as `u,v`; labelled P1, P2, ... Repeatable.
    #[arg(long = "pixel", value_parser = parse_pixel)]
    pub pixels: Vec<Pixel>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub question: String,
    #[arg(long, conflicts_with = "remote")]
    pub stub: bool,
    /// Use the configured endpoint; the key comes from `chat.credential_env`.
    #[arg(long)]
    pub remote: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the scenario implied by the bundle's component names.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Conversation file; defaults to `transcript.json` next to the bundle.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["checkpoint", "qmaps"])))]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub qmaps: Option<PathBuf>,
    /// Scene loaded at startup.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => Ok((a.trim().to_string(), b.trim().to_string())),
        _ => Err(format!("expected FIRST,SECOND, got '{s}'")),
    }
}

fn parse_pixel(s: &str) -> Result<Pixel, String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected u,v, got '{s}'"))?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    Ok(Pixel::new(n(u)?, n(v)?))
}

fn load_config(path: Option<&Path>) -> Result<RepoConfig, ServiceError> {
    path.map(RepoConfig::load).unwrap_or_else(|| Ok(RepoConfig::default()))
}

pub fn run(cli: Cli) -> Result<(), ServiceError> {
    match cli.command {
        Command::GenScene(a) => {
            let path = gen_scene(&a)?;
            println!("wrote {}", path.display());
        }
        Command::Train(a) => {
            let (ckpt, metrics) = train_cmd(&a)?;
            println!("wrote {} and {}", ckpt.display(), metrics.display());
        }
        Command::Eval(a) => {
            let (report, path) = eval_cmd(&a)?;
            println!(
                "correct-choice rate {:.1}% +/- {:.1} over {} runs; report {}",
                100.0 * report.mean,
                100.0 * report.std,
                report.runs.len(),
                path.display()
            );
        }
        Command::Explain(a) => {
            let bundle = explain_cmd(&a)?;
            println!("{}", bundle.texts.shallow);
            for c in &bundle.texts.contrastive {
                println!("{}", c.text);
            }
            println!("artifacts in {}", a.out_dir.display());
        }
        Command::Chat(a) => println!("{}", chat_cmd(&a)?),
        Command::Serve(a) => serve_cmd(&a)?,
    }
    Ok(())
}

pub fn gen_scene(args: &GenSceneArgs) -> Result<PathBuf, ServiceError> {
    let scenario = Scenario::from(args.scenario);
    let config = load_config(args.config.as_deref())?.scenario;
    let config = if config.scenario() == scenario {
        config
    } else {
        ScenarioConfig::default_for(scenario)
    };
    let scene = config.generate(args.seed)?;
    write_text(&args.out, &scene.to_json())?;
    Ok(args.out.clone())
}

pub fn train_cmd(args: &TrainArgs) -> Result<(PathBuf, PathBuf), ServiceError> {
    let repo = load_config(args.config.as_deref())?;
    let mut cfg = repo.train.clone();
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.steps {
        cfg.total_steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let sc = repo.scenario.clone();
    let mode_name = match cfg.mode {
        TrainMode::Decomposed => "decomposed",
        TrainMode::Monolithic => "monolithic",
    };
    let out = args.out.clone().unwrap_or_else(|| {
        repo.paths
            .checkpoints
            .join(format!("{}-{mode_name}-seed{}.json", sc.scenario().name(), cfg.seed))
    });
    let metrics_path = args.metrics.clone().unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let name = format!("{stem}.metrics.jsonl");
        // An explicit checkpoint path keeps its log beside it.
        match &args.out {
            Some(p) => p.with_file_name(name),
            None => repo.paths.logs.join(name),
        }
    });
    let heads = match cfg.mode {
        TrainMode::Decomposed => Heads::new(sc.component_names(), sc.weights()),
        TrainMode::Monolithic => Heads::total(),
    };
    let gen = sc.clone();
    let base = cfg.seed;
    let factory = move |ep: u64| gen.generate(mix_seed(base, ep, 0));
    let metrics = match repo.model.kind {
        ApproximatorKind::Conv => {
            let init = ConvApproximator::new(heads, sc.channels(), ConvSettings::default(), repo.model.init_seed);
            let ckpt = match cfg.mode {
                TrainMode::Decomposed => train(factory, &cfg, init)?,
                TrainMode::Monolithic => train_monolithic(factory, &cfg, init)?,
            };
            save_checkpoint(&out, &ckpt, Some(sc.clone()))?;
            ckpt.metrics
        }
        ApproximatorKind::Tabular => {
            let init = TabularApproximator::new(heads, cfg.learning_rate);
            let ckpt = match cfg.mode {
                TrainMode::Decomposed => train(factory, &cfg, init)?,
                TrainMode::Monolithic => train_monolithic(factory, &cfg, init)?,
            };
            save_checkpoint(&out, &ckpt, Some(sc.clone()))?;
            ckpt.metrics
        }
    };
    write_text(&metrics_path, &metrics_jsonl(&metrics))?;
    Ok((out, metrics_path))
}

#[derive(Debug, Serialize)]
struct EvalFile<'a> {
    checkpoint: String,
    scenario: Scenario,
    policy: PolicyArg,
    runs: usize,
    choices_per_run: usize,
    seed: u64,
    mean: f64,
    std: f64,
    per_run: &'a [rdqmap_core::trainer::RunResult],
}

pub fn eval_cmd(args: &EvalArgs) -> Result<(EvalReport, PathBuf), ServiceError> {
    if args.runs == 0 || args.choices == 0 {
        return Err(ServiceError::Usage("--runs and --choices must be positive".into()));
    }
    let (model, file) = Model::load_checkpoint(&args.checkpoint)?;
    let sc = match file.scenario {
        Some(sc) => sc,
        None => load_config(args.config.as_deref())?.scenario,
    };
    model.check_scenario(&sc)?;
    let report = match args.policy {
        PolicyArg::Model => evaluate_policy(
            |scene: &GridScene| {
                let q = model.qmaps(scene).expect("scenario checked above");
                select_global(&q, None, scene.scenario.primitive()).expect("unmasked selection cannot fail")
            },
            &sc,
            args.runs,
            args.choices,
            args.seed,
        )?,
        PolicyArg::Oracle => evaluate_policy(
            oracle_action,
            &sc,
            args.runs,
            args.choices,
            args.seed,
        )?,
        PolicyArg::Random => {
            let mut n = 0u64;
            evaluate_policy(
                |scene: &GridScene| {
                    n += 1;
                    random_action(scene, mix_seed(args.seed, n, 0x52))
                },
                &sc,
                args.runs,
                args.choices,
                args.seed,
            )?
        }
    };
    let out = args.out.clone().unwrap_or_else(|| args.checkpoint.with_extension("eval.json"));
    let record = EvalFile {
        checkpoint: args.checkpoint.display().to_string(),
        scenario: sc.scenario(),
        policy: args.policy,
        runs: args.runs,
        choices_per_run: args.choices,
        seed: args.seed,
        mean: report.mean,
        std: report.std,
        per_run: &report.runs,
    };
    write_text(&out, &serde_json::to_string_pretty(&record).expect("report serializes"))?;
    Ok((report, out))
}

fn random_action(scene: &GridScene, draw: u64) -> Action {
    let n = (scene.width * scene.height) as u64;
    let p = Pixel::from_index((draw % n) as usize, scene.width);
    Action::new(scene.scenario.primitive(), p.u, p.v)
}

/// Writes `bundle.json`, `rdx.json`, `chart.json`, `chart.svg` and
/// `texts.txt` into the output directory.
pub fn explain_cmd(args: &ExplainArgs) -> Result<ExplanationBundle, ServiceError> {
    let model = match (&args.checkpoint, &args.qmaps) {
        (Some(path), None) => Model::load_checkpoint(path)?.0,
        (None, Some(path)) => Model::load_qmaps(path)?,
        _ => return Err(ServiceError::Usage("give exactly one of --checkpoint or --qmaps".into())),
    };
    let scene = GridScene::from_json(&read_text(&args.scene)?)?;
    let q = model.qmaps(&scene)?;
    let request = ExplainRequest {
        pixels: args.pixels.clone(),
        pairs: if args.pairs.is_empty() {
            None
        } else {
            Some(args.pairs.clone())
        },
    };
    let bundle = explain_with(&q, &scene, &request)?;
    let chart = render_chart(&bundle);
    let dir = &args.out_dir;
    write_text(&dir.join("bundle.json"), &bundle.to_json())?;
    write_text(&dir.join("rdx.json"), &canonical_json(&bundle.rdx))?;
    write_text(&dir.join("chart.json"), &canonical_json(&chart))?;
    write_text(&dir.join("chart.svg"), &render_svg(&chart))?;
    let mut texts = bundle.texts.shallow.clone();
    texts.push('\n');
    for c in &bundle.texts.contrastive {
        texts.push_str(&c.text);
        texts.push('\n');
    }
    write_text(&dir.join("texts.txt"), &texts)?;
    Ok(bundle)
}

/// Landing components are named after surface properties; anything else is
/// treated as grasping.
pub fn infer_scenario(bundle: &ExplanationBundle) -> Scenario {
    let land = bundle.components.names.iter().any(|n| n == "flat" || n == "colored");
    if land {
        Scenario::Land
    } else {
        Scenario::Grasp
    }
}

pub fn chat_cmd(args: &ChatArgs) -> Result<String, ServiceError> {
    let repo = load_config(args.config.as_deref())?;
    let bundle: ExplanationBundle = serde_json::from_str(&read_text(&args.bundle)?)
        .map_err(|e| ServiceError::Usage(format!("{}: not an explanation bundle: {e}", args.bundle.display())))?;
    let scenario = args.scenario.map(Scenario::from).unwrap_or_else(|| infer_scenario(&bundle));
    let mode = if args.remote {
        ChatMode::Remote
    } else if args.stub {
        ChatMode::Stub
    } else {
        repo.chat.mode
    };
    let transcript_path = args.transcript.clone().unwrap_or_else(|| {
        args.bundle
            .parent()
            .map(|d| d.join("transcript.json"))
            .unwrap_or_else(|| PathBuf::from("transcript.json"))
    });
    let mut conversation = if transcript_path.exists() {
        serde_json::from_str::<PromptBundle>(&read_text(&transcript_path)?)
            .map_err(|e| ServiceError::Usage(format!("{}: not a transcript: {e}", transcript_path.display())))?
    } else {
        let palette: Vec<String> = if repo.scenario.scenario() == scenario {
            match &repo.scenario {
                ScenarioConfig::Grasp(c) => c.palette.clone(),
                ScenarioConfig::Land(c) => c.palette.clone(),
            }
        } else {
            DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect()
        };
        build_prompt_with_palette(scenario, &bundle, &palette)
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| ServiceError::Usage(format!("runtime: {e}")))?;
    let answer = runtime.block_on(remote::chat(&repo.chat, mode, &mut conversation, &bundle, &args.question))?;
    write_text(&transcript_path, &serde_json::to_string_pretty(&conversation).expect("transcript serializes"))?;
    Ok(answer)
}

pub fn serve_cmd(args: &ServeArgs) -> Result<(), ServiceError> {
    let repo = load_config(args.config.as_deref())?;
    let scene = args
        .scene
        .as_deref()
        .map(|p| read_text(p).and_then(|t| Ok(GridScene::from_json(&t)?)))
        .transpose()?;
    let (model, scenario) = match (&args.checkpoint, &args.qmaps) {
        (Some(path), None) => {
            let (model, file) = Model::load_checkpoint(path)?;
            (model, file.scenario.unwrap_or(repo.scenario.clone()))
        }
        (None, Some(path)) => {
            let sc = match &scene {
                Some(s) if s.scenario != repo.scenario.scenario() => ScenarioConfig::default_for(s.scenario),
                _ => repo.scenario.clone(),
            };
            (Model::load_qmaps(path)?, sc)
        }
        _ => return Err(ServiceError::Usage("give exactly one of --checkpoint or --qmaps".into())),
    };
    let mut state = AppState::new(model, scenario, repo.chat.clone())?;
    if let Some(scene) = scene {
        state = state.with_scene(scene)?;
    }
    let bind = args.bind.clone().unwrap_or(repo.service.bind.clone());
    let port = args.port.unwrap_or(repo.service.port);
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| ServiceError::Usage(format!("bad bind address {bind}:{port}: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Usage(format!("runtime: {e}")))?;
    runtime.block_on(api::serve(Arc::new(state), addr))
}
