//! `egoexo` command-line entry point.

mod ablate;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use egoexo::labelgen::{
    build_pseudolabels, build_pseudolabels_from_detections, read_labels, write_labels, ScoreConfig,
};
use egoexo::metrics::EvalResult;
use egoexo::pipeline::{
    evaluate, finetune, pretrain, Aggregation, EvalMetric, TrainConfig, TrainData, TrainOutcome,
    Trainer,
};
use egoexo::teachers::{read_detections_jsonl, write_detections_jsonl, Teachers};
use egoexo::video_data::{generate_dataset, read_dataset, write_dataset, DatasetSpec, Split};
use egoexo::{Checkpoint32, Error};

use ablate::{ablation_csv, AblationResult, AblationRow};
use manifest::{hash_inputs, hash_outputs, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Data(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 usage, 3 data, 4 numeric failure, 5 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io { .. } => 5,
            CliError::Core(e) => match e.root() {
                Error::InvalidArgument(_) | Error::Config(_) => 2,
                Error::NumericFailure { .. } => 4,
                Error::Io { .. } => 5,
                _ => 3,
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "egoexo",
    version,
    about = "Ego-Exo pre-training on synthetic video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Run the teachers and write the pseudo-label archive.
    GenLabels(GenLabelsArgs),
    /// Pre-train a backbone with the action and distillation losses.
    Pretrain(PretrainArgs),
    /// Fine-tune on the downstream split.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint and print a JSON result.
    Eval(EvalArgs),
    /// Pre-train and evaluate each row of the task ablation grid.
    Ablate(AblateArgs),
    /// Print a fully resolved configuration as JSON.
    DumpConfig(DumpConfigArgs),
    /// Recompute the hashes recorded in a run directory's manifest.
    VerifyManifest(VerifyArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run directory holding run_manifest.json.
    dir: PathBuf,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset spec JSON; missing keys take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenLabelsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Interaction-map grid as t,h,w; must match the backbone feature map.
    #[arg(long, default_value = "8,8,8", value_parser = parse_grid)]
    grid: [usize; 3],
    /// Softmax temperature for Ego- and Object-Score.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    det_threshold: f64,
    #[arg(long, default_value_t = 2)]
    n_clips_ego: usize,
    /// Frames fed to the object teacher; all frames when omitted.
    #[arg(long)]
    n_frames_obj: Option<usize>,
    #[arg(long, default_value_t = 8)]
    clip_length: usize,
    #[arg(long, default_value_t = 1)]
    clip_stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Detection JSONL to use instead of running the detector.
    #[arg(long)]
    detections: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainIo {
    #[arg(long)]
    data: PathBuf,
    /// Pseudo-label archive; required when any distillation loss is on.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Flat JSON training config; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    io: TrainIo,
    /// Continue from a checkpoint of this same run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug)]
#[group(id = "init", required = true, multiple = false, args = ["ckpt", "scratch"])]
struct FinetuneArgs {
    #[command(flatten)]
    io: TrainIo,
    /// Pre-trained checkpoint whose backbone initializes the model.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Start from random initialization.
    #[arg(long)]
    scratch: bool,
    /// Keep the interaction loss during fine-tuning; overrides the config.
    #[arg(long, value_enum)]
    aux_int: Option<OnOff>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Map,
    Top1,
    Top5,
}

impl From<MetricArg> for EvalMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Map => EvalMetric::Map,
            MetricArg::Top1 => EvalMetric::Top1,
            MetricArg::Top5 => EvalMetric::Top5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggArg {
    Mean,
    TemporalMax,
}

impl From<AggArg> for Aggregation {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => Aggregation::Mean,
            AggArg::TemporalMax => Aggregation::TemporalMax,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Pretrain,
    FinetuneTrain,
    FinetuneVal,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Pretrain => Split::Pretrain,
            SplitArg::FinetuneTrain => Split::FinetuneTrain,
            SplitArg::FinetuneVal => Split::FinetuneVal,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EvalOpts {
    #[arg(long, value_enum, default_value_t = MetricArg::Map)]
    metric: MetricArg,
    /// Uniformly spaced clips per video.
    #[arg(long, default_value_t = 10)]
    n_clips: usize,
    #[arg(long, value_enum, default_value_t = AggArg::Mean)]
    agg: AggArg,
    #[arg(long, value_enum, default_value_t = SplitArg::FinetuneVal)]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    opts: EvalOpts,
    /// Also write eval.json and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    io: TrainIo,
    /// Fine-tuning config; defaults to the pre-training config.
    #[arg(long)]
    finetune_config: Option<PathBuf>,
    /// Comma-separated subset of none,ego,obj,int,all,hand_only,object_only.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "none,ego,obj,int,all,hand_only,object_only"
    )]
    rows: Vec<AblationRow>,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConfigKind {
    Train,
    Dataset,
    Labels,
}

#[derive(Args, Debug)]
struct DumpConfigArgs {
    #[arg(long, value_enum, default_value_t = ConfigKind::Train)]
    kind: ConfigKind,
    /// Config file to validate and print with defaults filled in.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [t, h, w] if t > 0 && h > 0 && w > 0 => Ok([t, h, w]),
        _ => Err(format!("expected three positive integers t,h,w, got {s:?}")),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_train_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => Ok(TrainConfig::from_json(&read_text(p)?)?),
        None => Ok(TrainConfig::default()),
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::Core(Error::Config(format!("{}: {e}", p.display())))),
        None => Ok(T::default()),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    Ok(egoexo::format::write_atomic(path, text.as_bytes())?)
}

fn to_value<T: Serialize>(v: &T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

/// Collects what a command ran on and writes its manifest last.
struct Run {
    command: &'static str,
    started: Instant,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Run {
            command,
            started: Instant::now(),
        }
    }

    fn finish(
        self,
        out: &Path,
        config: serde_json::Value,
        seed: u64,
        inputs: &[&Path],
    ) -> CliResult<()> {
        RunManifest {
            command: self.command.into(),
            argv: std::env::args().collect(),
            config,
            seed,
            inputs: hash_inputs(inputs)?,
            outputs: hash_outputs(out)?,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
        .write(out)
    }
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let run = Run::start("gen-data");
    let spec: DatasetSpec = load_json(a.spec.as_deref())?;
    spec.validate()?;
    let dataset = generate_dataset(&spec, a.seed)?;
    write_dataset(&dataset, &a.out)?;
    let inputs: Vec<&Path> = a.spec.iter().map(PathBuf::as_path).collect();
    run.finish(&a.out, to_value(&spec)?, a.seed, &inputs)
}

#[derive(Serialize)]
struct LabelsRunConfig<'a> {
    score: &'a ScoreConfig,
    grid: [usize; 3],
}

fn gen_labels(a: GenLabelsArgs) -> CliResult<()> {
    let run = Run::start("gen-labels");
    let dataset = read_dataset(&a.dataset)?;
    let config = ScoreConfig {
        beta: a.beta,
        n_clips_ego: a.n_clips_ego,
        n_frames_obj: a.n_frames_obj,
        det_threshold: a.det_threshold,
        clip_length: a.clip_length,
        clip_stride: a.clip_stride,
    };
    let teachers = Teachers::stubs(&dataset.spec);
    let videos: Vec<_> = dataset.videos.iter().collect();
    let mut inputs = vec![a.dataset.as_path()];
    let (labels, detections) = match &a.detections {
        Some(path) => {
            let dets = read_detections_jsonl(path)?;
            inputs.push(path);
            let labels = build_pseudolabels_from_detections(
                &videos, &teachers, &config, a.grid, &dets, a.seed,
            )?;
            (labels, dets)
        }
        None => build_pseudolabels(&videos, &teachers, &config, a.grid, a.seed)?,
    };
    write_labels(&labels, &a.out)?;
    write_detections_jsonl(&a.out.join("detections.jsonl"), &detections)?;
    let resolved = LabelsRunConfig {
        score: &config,
        grid: a.grid,
    };
    run.finish(&a.out, to_value(&resolved)?, a.seed, &inputs)
}

fn steps_csv(outcome: &TrainOutcome<f32>) -> String {
    let mut s = String::from("epoch,step,lr,l_act,l_ego,l_obj,l_int,l_total\n");
    for r in &outcome.steps {
        let p = &r.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.step, r.lr, p.l_act, p.l_ego, p.l_obj, p.l_int, p.l_total
        ));
    }
    s
}

fn save_outcome(outcome: &TrainOutcome<f32>, out: &Path) -> CliResult<()> {
    outcome.checkpoint.save(out)?;
    write_file(
        &out.join("metrics.csv"),
        &egoexo::pipeline::metrics_csv(&outcome.history),
    )?;
    write_file(&out.join("steps.csv"), &steps_csv(outcome))
}

fn load_labels(path: Option<&Path>) -> CliResult<Option<egoexo::labelgen::PseudoLabelSet>> {
    path.map(read_labels).transpose().map_err(CliError::from)
}

fn train_inputs<'a>(io: &'a TrainIo, extra: &[&'a Path]) -> Vec<&'a Path> {
    let mut v = vec![io.data.as_path()];
    v.extend(io.labels.as_deref());
    v.extend(io.config.as_deref());
    v.extend_from_slice(extra);
    v
}

fn pretrain_cmd(a: PretrainArgs) -> CliResult<()> {
    let run = Run::start("pretrain");
    let config = load_train_config(a.io.config.as_deref())?;
    let dataset = read_dataset(&a.io.data)?;
    let labels = load_labels(a.io.labels.as_deref())?;
    let outcome = match &a.resume {
        Some(dir) => {
            let ckpt = Checkpoint32::load(dir)?;
            let data = TrainData::from_dataset(&dataset, Split::Pretrain, labels.as_ref());
            let mut t = Trainer::resume(&ckpt, data, &config)?;
            t.run()?;
            TrainOutcome {
                checkpoint: t.checkpoint()?,
                history: t.history,
                steps: t.steps,
            }
        }
        None => pretrain::<f32>(&dataset, labels.as_ref(), &config)?,
    };
    save_outcome(&outcome, &a.io.out)?;
    let extra: Vec<&Path> = a.resume.iter().map(PathBuf::as_path).collect();
    run.finish(
        &a.io.out,
        to_value(&config)?,
        config.seed,
        &train_inputs(&a.io, &extra),
    )
}

fn finetune_cmd(a: FinetuneArgs) -> CliResult<()> {
    let run = Run::start("finetune");
    let mut config = load_train_config(a.io.config.as_deref())?;
    if let Some(aux) = a.aux_int {
        config.aux_in_finetune = aux == OnOff::On;
    }
    let dataset = read_dataset(&a.io.data)?;
    let labels = load_labels(a.io.labels.as_deref())?;
    let init = a.ckpt.as_deref().map(Checkpoint32::load).transpose()?;
    let outcome = finetune(init.as_ref(), &dataset, labels.as_ref(), &config)?;
    save_outcome(&outcome, &a.io.out)?;
    let extra: Vec<&Path> = a.ckpt.iter().map(PathBuf::as_path).collect();
    run.finish(
        &a.io.out,
        to_value(&config)?,
        config.seed,
        &train_inputs(&a.io, &extra),
    )
}

/// Metric values scaled to percent for reporting.
fn percent(mut r: EvalResult) -> EvalResult {
    r.value *= 100.0;
    if let Some(pc) = &mut r.per_class {
        pc.iter_mut().flatten().for_each(|v| *v *= 100.0);
    }
    r
}

fn run_eval(
    model: &egoexo::Model32,
    config: &TrainConfig,
    dataset: &egoexo::video_data::Dataset,
    opts: &EvalOpts,
) -> CliResult<EvalResult> {
    let videos = dataset.split(opts.split.into());
    let r = evaluate(
        model,
        &videos,
        opts.metric.into(),
        opts.n_clips,
        config.clip_length,
        config.clip_stride,
        opts.agg.into(),
    )?;
    Ok(percent(r))
}

#[derive(Serialize)]
struct EvalRunConfig {
    metric: EvalMetric,
    n_clips: usize,
    aggregation: Aggregation,
    split: Split,
}

fn eval_run_config(o: &EvalOpts) -> EvalRunConfig {
    EvalRunConfig {
        metric: o.metric.into(),
        n_clips: o.n_clips,
        aggregation: o.agg.into(),
        split: o.split.into(),
    }
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let run = Run::start("eval");
    let ckpt = Checkpoint32::load(&a.ckpt)?;
    let dataset = read_dataset(&a.data)?;
    let result = run_eval(&ckpt.model, &ckpt.train_config, &dataset, &a.opts)?;
    let text = serde_json::to_string(&result).map_err(Error::from)?;
    println!("{text}");
    if let Some(out) = &a.out {
        write_file(&out.join("eval.json"), &format!("{text}\n"))?;
        run.finish(
            out,
            to_value(&eval_run_config(&a.opts))?,
            ckpt.train_config.seed,
            &[a.ckpt.as_path(), a.data.as_path()],
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AblateRunConfig<'a> {
    pretrain: &'a TrainConfig,
    finetune: &'a TrainConfig,
    rows: Vec<&'static str>,
    eval: EvalRunConfig,
}

/// Every row shares the dataset, label archive, seeds and fine-tuning
/// recipe; only the pre-training task switches differ.
fn ablate_cmd(a: AblateArgs) -> CliResult<()> {
    let run = Run::start("ablate");
    let base = load_train_config(a.io.config.as_deref())?;
    let ft_config = match &a.finetune_config {
        Some(p) => load_train_config(Some(p))?,
        None => base.clone(),
    };
    if a.rows.is_empty() {
        return Err(CliError::Usage("--rows is empty".into()));
    }
    let dataset = read_dataset(&a.io.data)?;
    let labels = read_labels(
        a.io.labels
            .as_deref()
            .ok_or_else(|| CliError::Usage("ablate needs --labels".into()))?,
    )?;
    let mut results = Vec::with_capacity(a.rows.len());
    for &row in &a.rows {
        let config = row.apply(&base);
        let pre = pretrain::<f32>(&dataset, Some(&labels), &config)?;
        let ft = finetune(Some(&pre.checkpoint), &dataset, Some(&labels), &ft_config)?;
        let r = run_eval(&ft.checkpoint.model, &ft_config, &dataset, &a.eval)?;
        eprintln!("{row}: {} = {:.3}", r.metric, r.value);
        results.push(AblationResult {
            row,
            config,
            metric: r.metric,
            value: r.value,
            n: r.n,
        });
    }
    let csv = ablation_csv(&results);
    print!("{csv}");
    write_file(&a.io.out.join("ablation.csv"), &csv)?;
    let resolved = AblateRunConfig {
        pretrain: &base,
        finetune: &ft_config,
        rows: a.rows.iter().map(|r| r.name()).collect(),
        eval: eval_run_config(&a.eval),
    };
    let extra: Vec<&Path> = a.finetune_config.iter().map(PathBuf::as_path).collect();
    run.finish(
        &a.io.out,
        to_value(&resolved)?,
        base.seed,
        &train_inputs(&a.io, &extra),
    )
}

fn dump_config(a: DumpConfigArgs) -> CliResult<()> {
    let p = a.config.as_deref();
    let value = match a.kind {
        ConfigKind::Train => to_value(&load_train_config(p)?)?,
        ConfigKind::Dataset => {
            let spec: DatasetSpec = load_json(p)?;
            spec.validate()?;
            to_value(&spec)?
        }
        ConfigKind::Labels => {
            let c: ScoreConfig = load_json(p)?;
            c.validate()?;
            to_value(&c)?
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&value).map_err(Error::from)?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::GenLabels(a) => gen_labels(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::DumpConfig(a) => dump_config(a),
        Command::VerifyManifest(a) => RunManifest::read(&a.dir).and_then(|m| m.verify(&a.dir)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
