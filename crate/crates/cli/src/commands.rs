//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use nowcast::conditional::{calibrate_threshold, train_conditional, ConditionalForecaster, MemberInit};
use nowcast::ensemble::{combine, fit_weights, parse_weights, write_weights, EnsembleDesign, Method, WeightedEnsemble};
use nowcast::forecaster::{checkpoint, load_checkpoint, save_checkpoint, train, Forecaster};
use nowcast::gsq::{read_gridseq, write_gridseq};
use nowcast::metrics::{compare_table, MetricsReport, MseAccumulator};
use nowcast::predict::{Persistence, Predictor};
use nowcast::render::{render_strip, RenderOptions};
use nowcast::store::{read_dataset, write_dataset};
use nowcast::synth::generate_synthetic;
use nowcast::{Dataset, GridSequence, SamplePair, Split};

use crate::config::{ConditionalMode, RunConfig, ThresholdSetting};

pub const RUN_CONFIG: &str = "run.conf";
pub const MODEL_FILE: &str = "model.nck";
pub const CONDITIONAL_FILE: &str = "conditional.ncc";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const TABLE_FILE: &str = "table.txt";

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Run configuration (key = value); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Common {
    pub fn new(config: Option<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Common {
            config,
            seed: None,
            out: out.into(),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("config {}", p.display()))?,
            None => RunConfig::default(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }

    /// Creates the output directory and writes the resolved configuration,
    /// prefixed with the command and its data flags as comments.
    fn start(&self, command: &str, flags: &[(&str, String)], cfg: &RunConfig) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let mut text = format!("# nowcast {command}\n");
        for (k, v) in flags {
            let _ = writeln!(text, "# --{k} {v}");
        }
        text.push_str(&cfg.to_text());
        let path = self.out.join(RUN_CONFIG);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn data_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match flag.as_ref().or(cfg.data_dir.as_ref()) {
        Some(d) => Ok(d.clone()),
        None => bail!("no dataset given (use --data or data.dir)"),
    }
}

fn load_data(dir: &Path) -> Result<Dataset> {
    read_dataset(dir).with_context(|| format!("dataset {}", dir.display()))
}

fn split_samples(data: &Dataset, split: Split) -> Result<Vec<&SamplePair>> {
    let s: Vec<&SamplePair> = data.split(split).collect();
    if s.is_empty() {
        return Err(nowcast::Error::Statistics(format!("{split} split is empty")).into());
    }
    Ok(s)
}

#[derive(Args, Clone, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
}

pub fn gen_data(args: &GenDataArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    args.common.start("gen-data", &[], &cfg)?;
    let data = generate_synthetic(&cfg.synth)?;
    write_dataset(&args.common.out, &data)?;
    Ok(format!(
        "wrote {} train, {} validation, {} test samples to {}",
        data.split_len(Split::Train),
        data.split_len(Split::Validation),
        data.split_len(Split::Test),
        args.common.out.display()
    ))
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory; overrides `data.dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

pub fn train_cmd(args: &TrainArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let dir = data_dir(&args.data, &cfg)?;
    let data = load_data(&dir)?;
    args.common.start("train", &[("data", dir.display().to_string())], &cfg)?;
    let out = &args.common.out;
    let spec = cfg.forecaster_spec(&data)?;
    let mut msg = String::new();

    let base = if cfg.conditional.mode == ConditionalMode::FromScratch {
        None
    } else {
        let mut model = Forecaster::<f32>::build(&spec, cfg.model.seed)?;
        let log = train(&mut model, &data, &cfg.train)?;
        save_checkpoint(out.join(MODEL_FILE), &model)?;
        fs::write(out.join("train_log.txt"), log.to_text())?;
        let last = log.epochs.last().expect("at least one epoch");
        let _ = write!(
            msg,
            "trained {} parameters on {} samples: train loss {:.6e}",
            model.parameter_count(),
            log.samples,
            last.train_loss
        );
        if let Some(v) = last.val_loss {
            let _ = write!(msg, ", validation loss {v:.6e}");
        }
        Some(model)
    };

    if cfg.conditional.mode != ConditionalMode::Off {
        let name = &cfg.conditional.channel;
        let channel = data
            .channel_index(name)
            .ok_or_else(|| nowcast::Error::Config(format!("conditional.channel {name:?} not in dataset")))?;
        let threshold = match cfg.conditional.threshold {
            ThresholdSetting::Calibrate => calibrate_threshold(&data, channel)?,
            ThresholdSetting::Fixed(t) => t,
        };
        let init = match &base {
            Some(m) => MemberInit::Pretrained(m),
            None => MemberInit::Scratch {
                spec: spec.clone(),
                dry_seed: cfg.model.seed,
                wet_seed: cfg.model.seed.wrapping_add(1),
            },
        };
        let (cf, log) = train_conditional(&data, threshold, channel, init, &cfg.member_train_config())?;
        cf.save(out.join(CONDITIONAL_FILE))?;
        fs::write(
            out.join("conditional_log.txt"),
            format!("threshold = {threshold}\n{}", log.to_text()),
        )?;
        if !msg.is_empty() {
            msg.push('\n');
        }
        let _ = write!(
            msg,
            "conditional threshold {threshold:.6}: {} dry / {} wet training samples",
            log.dry_samples, log.wet_samples
        );
    }
    Ok(msg)
}

/// Loads a forecaster (`.nck`), conditional pair (`.ncc`) or the keyword `persistence`.
pub fn load_predictor(spec: &str, t_out: usize) -> Result<Box<dyn Predictor>> {
    if spec == "persistence" {
        return Ok(Box::new(Persistence { t_out }));
    }
    let bytes = fs::read(spec).with_context(|| format!("model {spec}"))?;
    let p: Box<dyn Predictor> = if bytes.starts_with(b"NCC1") {
        Box::new(ConditionalForecaster::decode(&bytes).with_context(|| format!("model {spec}"))?)
    } else {
        Box::new(checkpoint::decode(&bytes).with_context(|| format!("model {spec}"))?)
    };
    Ok(p)
}

fn target_steps(data: &Dataset) -> Result<usize> {
    Ok(data
        .shapes()
        .ok_or_else(|| nowcast::Error::Statistics("dataset is empty".into()))?
        .1
        .t)
}

pub fn prediction_path(dir: &Path, split: Split, index: usize) -> PathBuf {
    dir.join(split.as_str()).join(format!("{index:06}.pred.gsq"))
}

/// Reads precomputed predictions for every sample of `split`, restoring the
/// variable names of the matching targets.
pub fn read_predictions(dir: &Path, data: &Dataset, split: Split) -> Result<Vec<GridSequence>> {
    data.split(split)
        .enumerate()
        .map(|(i, s)| {
            let path = prediction_path(dir, split, i);
            let p = read_gridseq(&path).with_context(|| format!("prediction {}", path.display()))?;
            if p.dims() != s.target.dims() {
                return Err(nowcast::Error::Shape(format!(
                    "{}: prediction {} vs target {}",
                    path.display(),
                    p.dims(),
                    s.target.dims()
                ))
                .into());
            }
            Ok(p.with_variable_names(s.target.variable_names().to_vec())?)
        })
        .collect()
}

#[derive(Args, Clone, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "validation")]
    pub split: Split,
    /// Checkpoint (`.nck`, `.ncc`) or `persistence`; repeat with --weights for an ensemble.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Precomputed prediction directories combined with --weights.
    #[arg(long = "preds")]
    pub preds: Vec<PathBuf>,
    /// Ensemble weights file written by fit-ensemble.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

pub fn predict_cmd(args: &PredictArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let dir = data_dir(&args.data, &cfg)?;
    let data = load_data(&dir)?;
    let samples = split_samples(&data, args.split)?;
    let weights = match &args.weights {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("weights {}", p.display()))?;
            Some(parse_weights(&text).with_context(|| format!("weights {}", p.display()))?.1)
        }
        None => None,
    };
    let members = args.models.len() + args.preds.len();
    if members == 0 {
        bail!("predict needs --model or --preds");
    }
    if !args.models.is_empty() && !args.preds.is_empty() {
        bail!("--model and --preds cannot be mixed");
    }
    if members > 1 && weights.is_none() {
        bail!("{members} members given without --weights");
    }
    if !args.preds.is_empty() && weights.is_none() {
        bail!("--preds needs --weights");
    }
    let mut flags = vec![("data", dir.display().to_string()), ("split", args.split.to_string())];
    flags.extend(args.models.iter().map(|m| ("model", m.clone())));
    flags.extend(args.preds.iter().map(|p| ("preds", p.display().to_string())));
    flags.extend(args.weights.iter().map(|w| ("weights", w.display().to_string())));
    args.common.start("predict", &flags, &cfg)?;
    let t_out = target_steps(&data)?;
    let inputs: Vec<&GridSequence> = samples.iter().map(|s| &s.input).collect();

    let preds = if !args.models.is_empty() {
        let loaded = args
            .models
            .iter()
            .map(|m| load_predictor(m, t_out))
            .collect::<Result<Vec<_>>>()?;
        match weights {
            Some(w) => WeightedEnsemble::new(loaded, w)?.predict_many(&inputs)?,
            None => loaded[0].predict_many(&inputs)?,
        }
    } else {
        let w = weights.expect("checked above");
        if w.len() != args.preds.len() {
            return Err(nowcast::Error::Config(format!(
                "{} weights for {} prediction directories",
                w.len(),
                args.preds.len()
            ))
            .into());
        }
        let member_preds = args
            .preds
            .iter()
            .map(|d| read_predictions(d, &data, args.split))
            .collect::<Result<Vec<_>>>()?;
        (0..samples.len())
            .map(|i| {
                let ps: Vec<&GridSequence> = member_preds.iter().map(|m| &m[i]).collect();
                combine(&ps, &w.weights)
            })
            .collect::<nowcast::Result<Vec<_>>>()?
    };
    let dir = args.common.out.join(args.split.as_str());
    fs::create_dir_all(&dir)?;
    for (i, p) in preds.iter().enumerate() {
        write_gridseq(prediction_path(&args.common.out, args.split, i), p)?;
    }
    Ok(format!("wrote {} predictions to {}", preds.len(), dir.display()))
}

fn unique_names(paths: &[PathBuf], given: &[String]) -> Result<Vec<String>> {
    if !given.is_empty() {
        if given.len() != paths.len() {
            bail!("{} names for {} members", given.len(), paths.len());
        }
        return Ok(given.to_vec());
    }
    let mut names: Vec<String> = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let base = p
            .file_name()
            .map(|s| s.to_string_lossy().replace(char::is_whitespace, "_"))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("member{i}"));
        let name = if names.contains(&base) { format!("{base}_{i}") } else { base };
        names.push(name);
    }
    Ok(names)
}

#[derive(Args, Clone, Debug)]
pub struct FitEnsembleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split whose targets the weights are fitted to.
    #[arg(long, default_value = "validation")]
    pub split: Split,
    /// Prediction directory of one member (repeat per member).
    #[arg(long = "preds", required = true)]
    pub preds: Vec<PathBuf>,
    /// Member names for the weights file (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Overrides `ensemble.method`.
    #[arg(long)]
    pub method: Option<Method>,
}

pub fn fit_ensemble_cmd(args: &FitEnsembleArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let dir = data_dir(&args.data, &cfg)?;
    let data = load_data(&dir)?;
    let samples = split_samples(&data, args.split)?;
    let names = unique_names(&args.preds, &args.names)?;
    let method = args.method.unwrap_or(cfg.ensemble.method);
    let mut flags = vec![("data", dir.display().to_string()), ("split", args.split.to_string())];
    flags.extend(args.preds.iter().map(|p| ("preds", p.display().to_string())));
    flags.push(("names", names.join(",")));
    flags.push(("method", method.to_string()));
    args.common.start("fit-ensemble", &flags, &cfg)?;
    let member_preds = args
        .preds
        .iter()
        .map(|d| read_predictions(d, &data, args.split))
        .collect::<Result<Vec<_>>>()?;
    let mut design = EnsembleDesign::new(member_preds.len());
    for (i, s) in samples.iter().enumerate() {
        let ps: Vec<&GridSequence> = member_preds.iter().map(|m| &m[i]).collect();
        design.accumulate(&ps, &s.target)?;
    }
    let w = fit_weights(&design, method, cfg.ensemble.lambda_rule())?;
    let path = args.common.out.join(WEIGHTS_FILE);
    fs::write(&path, write_weights(&names, &w)?)?;

    let mut msg = format!("{method} weights written to {}\n", path.display());
    for (j, n) in names.iter().enumerate() {
        let mut one_hot = vec![0.0; names.len()];
        one_hot[j] = 1.0;
        let _ = writeln!(msg, "  {n}: weight {:.6}, fit mse {:.6e}", w.weights[j], design.mse_of(&one_hot)?);
    }
    let _ = write!(msg, "  ensemble fit mse {:.6e}, weight sum {:.6}", design.mse_of(&w.weights)?, w.sum());
    Ok(msg)
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "validation")]
    pub split: Split,
    /// Prediction directory to score (repeatable).
    #[arg(long = "preds")]
    pub preds: Vec<PathBuf>,
    /// Checkpoint or `persistence` to run and score (repeatable).
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Report identifiers, in order: --preds entries first, then --model entries.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
}

fn default_id(s: &str) -> String {
    Path::new(s)
        .file_stem()
        .map(|x| x.to_string_lossy().into_owned())
        .unwrap_or_else(|| s.to_string())
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let dir = data_dir(&args.data, &cfg)?;
    let data = load_data(&dir)?;
    let samples = split_samples(&data, args.split)?;
    let total = args.preds.len() + args.models.len();
    if total == 0 {
        bail!("evaluate needs --preds or --model");
    }
    let mut ids: Vec<String> = args
        .preds
        .iter()
        .map(|p| default_id(&p.to_string_lossy()))
        .chain(args.models.iter().map(|m| default_id(m)))
        .collect();
    if !args.ids.is_empty() {
        if args.ids.len() != total {
            bail!("{} ids for {total} entries", args.ids.len());
        }
        ids = args.ids.clone();
    }
    let mut flags = vec![("data", dir.display().to_string()), ("split", args.split.to_string())];
    flags.extend(args.preds.iter().map(|p| ("preds", p.display().to_string())));
    flags.extend(args.models.iter().map(|m| ("model", m.clone())));
    flags.push(("ids", ids.join(",")));
    args.common.start("evaluate", &flags, &cfg)?;
    let t_out = target_steps(&data)?;
    let inputs: Vec<&GridSequence> = samples.iter().map(|s| &s.input).collect();
    let mut reports = Vec::with_capacity(total);
    let mut all_preds = Vec::with_capacity(total);
    for d in &args.preds {
        all_preds.push(read_predictions(d, &data, args.split)?);
    }
    for m in &args.models {
        all_preds.push(load_predictor(m, t_out)?.predict_many(&inputs)?);
    }
    for (id, preds) in ids.iter().zip(&all_preds) {
        let mut acc = MseAccumulator::new();
        for (p, s) in preds.iter().zip(&samples) {
            acc.add(p, &s.target)?;
        }
        let report = acc.report(id.clone())?;
        fs::write(args.common.out.join(format!("{id}.report")), report.to_kv().to_text())?;
        reports.push(report);
    }
    let table = compare_table(&reports);
    fs::write(args.common.out.join(TABLE_FILE), &table)?;
    Ok(table.trim_end().to_string())
}

/// Reads a report file written by `evaluate`.
pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).with_context(|| format!("report {}", path.display()))?;
    Ok(MetricsReport::from_kv(&nowcast::kv::KeyValues::parse(&text)?)?)
}

#[derive(Args, Clone, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "validation")]
    pub split: Split,
    /// Sample indices within the split.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub index: Vec<usize>,
    /// Prediction directory; mutually exclusive with --model.
    #[arg(long)]
    pub preds: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Variable to draw (default: first).
    #[arg(long)]
    pub channel: Option<String>,
    /// Variable whose iso-contour is overlaid.
    #[arg(long)]
    pub contour: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub contour_level: f64,
}

pub fn render_cmd(args: &RenderArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let dir = data_dir(&args.data, &cfg)?;
    let data = load_data(&dir)?;
    let samples = split_samples(&data, args.split)?;
    let lookup = |name: &Option<String>| -> Result<Option<usize>> {
        name.as_ref()
            .map(|n| {
                data.channel_index(n)
                    .ok_or_else(|| nowcast::Error::Config(format!("variable {n:?} not in dataset")).into())
            })
            .transpose()
    };
    let opts = RenderOptions {
        channel: lookup(&args.channel)?.unwrap_or(0),
        contour_channel: lookup(&args.contour)?,
        contour_level: args.contour_level,
    };
    for &i in &args.index {
        if i >= samples.len() {
            bail!("index {i} out of range for {} {} samples", samples.len(), args.split);
        }
    }
    let model = match (&args.preds, &args.model) {
        (Some(_), Some(_)) => bail!("--preds and --model are mutually exclusive"),
        (None, None) => bail!("render needs --preds or --model"),
        (None, Some(m)) => Some(load_predictor(m, target_steps(&data)?)?),
        (Some(_), None) => None,
    };
    let mut flags = vec![("data", dir.display().to_string()), ("split", args.split.to_string())];
    flags.extend(args.preds.iter().map(|p| ("preds", p.display().to_string())));
    flags.extend(args.model.iter().map(|m| ("model", m.clone())));
    args.common.start("render", &flags, &cfg)?;
    let mut written = Vec::new();
    for &i in &args.index {
        let s = samples[i];
        let pred = match (&model, &args.preds) {
            (Some(m), _) => m.predict(&s.input)?,
            (None, Some(d)) => {
                let path = prediction_path(d, args.split, i);
                read_gridseq(&path)
                    .with_context(|| format!("prediction {}", path.display()))?
                    .with_variable_names(s.target.variable_names().to_vec())?
            }
            (None, None) => unreachable!(),
        };
        let img = render_strip(&s.input, &s.target, &pred, &opts)?;
        let path = args.common.out.join(format!("{}_{i:06}.pgm", args.split));
        img.write(&path)?;
        written.push(path.display().to_string());
    }
    Ok(format!("wrote {}", written.join(", ")))
}

/// Loads a plain forecaster checkpoint.
pub fn load_forecaster(path: &Path) -> Result<Forecaster<f32>> {
    load_checkpoint(path).with_context(|| format!("checkpoint {}", path.display()))
}

/// Exit status for an error chain: 2 missing file, 3 format, 4 numeric, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nowcast::Error>() {
            return match e {
                nowcast::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                nowcast::Error::Format { .. } => 3,
                nowcast::Error::Numeric(_) => 4,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
    }
    1
}
