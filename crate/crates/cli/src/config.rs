//! Run configuration shared by every subcommand.
//!
//! One key=value file holds all sections (`synth.*`, `model.*`, `train.*`,
//! `optimizer.*`, `conditional.*`, `ensemble.*`); unknown keys are rejected.
//! The top-level `seed` is the default for `synth.seed`, `model.seed` and
//! `train.seed`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nowcast::conditional::REFERENCE_THRESHOLD;
use nowcast::ensemble::{LambdaRule, Method, DEFAULT_LAMBDA_SCALE};
use nowcast::forecaster::{ForecasterSpec, TrainConfig};
use nowcast::kv::{join_list, KeyValues};
use nowcast::nn::GateType;
use nowcast::synth::SynthConfig;
use nowcast::{Dataset, Error, Result};

const SYNTH_PREFIX: &str = "synth.";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Deep,
    Shallow,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deep" => Ok(Preset::Deep),
            "shallow" => Ok(Preset::Shallow),
            _ => Err(Error::Config(format!("unknown model.preset {s:?} (expected deep or shallow)"))),
        }
    }
}

impl Preset {
    fn as_str(&self) -> &'static str {
        match self {
            Preset::Deep => "deep",
            Preset::Shallow => "shallow",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub preset: Preset,
    /// Per-level channel counts; also fixes the number of levels.
    pub channels: Option<Vec<usize>>,
    pub gate: Option<GateType>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionalMode {
    Off,
    FromPretrained,
    FromScratch,
}

impl FromStr for ConditionalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(ConditionalMode::Off),
            "from_pretrained" => Ok(ConditionalMode::FromPretrained),
            "from_scratch" => Ok(ConditionalMode::FromScratch),
            _ => Err(Error::Config(format!(
                "unknown conditional.mode {s:?} (expected off, from_pretrained or from_scratch)"
            ))),
        }
    }
}

impl ConditionalMode {
    fn as_str(&self) -> &'static str {
        match self {
            ConditionalMode::Off => "off",
            ConditionalMode::FromPretrained => "from_pretrained",
            ConditionalMode::FromScratch => "from_scratch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdSetting {
    /// Median of the per-sample training maxima.
    Calibrate,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalConfig {
    pub mode: ConditionalMode,
    pub threshold: ThresholdSetting,
    /// Name of the rain variable used for dispatch.
    pub channel: String,
    /// Member training epochs; defaults to `train.epochs`.
    pub epochs: Option<usize>,
    /// Member learning rate; defaults to `optimizer.lr`.
    pub lr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub method: Method,
    pub lambda_scale: f64,
}

impl EnsembleConfig {
    pub fn lambda_rule(&self) -> LambdaRule {
        LambdaRule::Relative(self.lambda_scale)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub conditional: ConditionalConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_kv(&KeyValues::new()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        // synth.*, train.* and optimizer.* keys go to their own readers
        let mut synth_kv = KeyValues::new();
        let mut train_kv = KeyValues::new();
        let mut rest = KeyValues::new();
        for (k, v) in kv.iter() {
            if let Some(sub) = k.strip_prefix(SYNTH_PREFIX) {
                synth_kv.set(sub, v);
            } else if k.starts_with("train.") || k.starts_with("optimizer.") {
                train_kv.set(k, v);
            } else {
                rest.set(k, v);
            }
        }
        let mut r = rest.reader();
        let seed: u64 = r.or("seed", 0)?;
        if synth_kv.get("seed").is_none() {
            synth_kv.set("seed", seed);
        }
        if train_kv.get("train.seed").is_none() {
            train_kv.set("train.seed", seed);
        }
        let synth = SynthConfig::from_kv(&synth_kv)?;
        let mut tr = train_kv.reader();
        let train = TrainConfig::read_kv(&mut tr)?;
        tr.finish()?;
        let data_dir = r.opt::<String>("data.dir")?.map(PathBuf::from);

        let model = ModelConfig {
            preset: r.or("model.preset", Preset::Shallow)?,
            channels: r.list("model.channels")?,
            gate: r.opt("model.gate")?,
            seed: r.or("model.seed", seed)?,
        };

        let threshold = match r.or("conditional.threshold", "auto".to_string())?.as_str() {
            "auto" => ThresholdSetting::Calibrate,
            "reference" => ThresholdSetting::Fixed(REFERENCE_THRESHOLD),
            v => ThresholdSetting::Fixed(
                v.parse()
                    .map_err(|_| Error::Config(format!("conditional.threshold: cannot parse {v:?}")))?,
            ),
        };
        let default_channel = synth
            .rain_channels
            .first()
            .cloned()
            .unwrap_or_else(|| "crr_intensity".into());
        let conditional = ConditionalConfig {
            mode: r.or("conditional.mode", ConditionalMode::Off)?,
            threshold,
            channel: r.or("conditional.channel", default_channel)?,
            epochs: r.opt("conditional.epochs")?,
            lr: r.opt("conditional.lr")?,
        };
        let ensemble = EnsembleConfig {
            method: r.or("ensemble.method", Method::Ridge)?,
            lambda_scale: r.or("ensemble.lambda_scale", DEFAULT_LAMBDA_SCALE)?,
        };
        r.finish()?;
        if let Some(ch) = &model.channels {
            if ch.contains(&0) {
                return Err(Error::Config("model.channels must be positive".into()));
            }
        }
        if !(ensemble.lambda_scale >= 0.0) {
            return Err(Error::Config("ensemble.lambda_scale must be non-negative".into()));
        }
        Ok(RunConfig {
            seed,
            data_dir,
            synth,
            model,
            train,
            conditional,
            ensemble,
        })
    }

    /// Every resolved key, defaults included; parsing it back gives `self`.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("seed", self.seed);
        if let Some(d) = &self.data_dir {
            kv.set("data.dir", d.display());
        }
        for (k, v) in self.synth.to_kv().iter() {
            kv.set(format!("{SYNTH_PREFIX}{k}"), v);
        }
        kv.set("model.preset", self.model.preset.as_str());
        if let Some(ch) = &self.model.channels {
            kv.set("model.channels", join_list(ch));
        }
        if let Some(g) = self.model.gate {
            kv.set("model.gate", g);
        }
        kv.set("model.seed", self.model.seed);
        self.train.write_kv(&mut kv);
        kv.set("conditional.mode", self.conditional.mode.as_str());
        match self.conditional.threshold {
            ThresholdSetting::Calibrate => kv.set("conditional.threshold", "auto"),
            ThresholdSetting::Fixed(t) => kv.set("conditional.threshold", t),
        }
        kv.set("conditional.channel", &self.conditional.channel);
        if let Some(e) = self.conditional.epochs {
            kv.set("conditional.epochs", e);
        }
        if let Some(lr) = self.conditional.lr {
            kv.set("conditional.lr", lr);
        }
        kv.set("ensemble.method", self.ensemble.method);
        kv.set("ensemble.lambda_scale", self.ensemble.lambda_scale);
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// Model shape for `data`, from the preset and overrides.
    pub fn forecaster_spec(&self, data: &Dataset) -> Result<ForecasterSpec> {
        let (din, dout) = data
            .shapes()
            .ok_or_else(|| Error::Statistics("dataset is empty".into()))?;
        let mut spec = match self.model.preset {
            Preset::Deep => ForecasterSpec::deep(din.c, din.h, din.w, din.t, dout.t),
            Preset::Shallow => ForecasterSpec::shallow(din.c, din.h, din.w, din.t, dout.t),
        };
        spec.out_channels = dout.c;
        if let Some(ch) = &self.model.channels {
            spec = spec.with_channels(ch.clone());
        }
        if let Some(g) = self.model.gate {
            spec = spec.with_gate(g);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Training settings for conditional members.
    pub fn member_train_config(&self) -> TrainConfig {
        let mut cfg = self.train.clone();
        if let Some(e) = self.conditional.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.conditional.lr {
            cfg.optimizer.lr = lr;
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = "seed = 7\ndata.dir = /tmp/x\nsynth.n_train = 10\nmodel.channels = 4,6\nmodel.gate = conv\n\
                    train.epochs = 3\noptimizer.lr = 0.01\nconditional.mode = from_pretrained\n\
                    conditional.threshold = 0.1\nconditional.epochs = 2\nensemble.method = constrained\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.synth.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.model.seed, 7);
        assert_eq!(cfg.conditional.threshold, ThresholdSetting::Fixed(0.1));
        assert_eq!(cfg.member_train_config().epochs, 2);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["bogus = 1\n", "synth.bogus = 1\n", "train.bogus = 1\n", "optimizer.bogus = 2\n"] {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(err.to_string().contains("bogus"), "{err}");
        }
    }

    #[test]
    fn seed_override_applies_everywhere() {
        let cfg = RunConfig::parse("synth.seed = 3\n").unwrap().with_seed(11);
        assert_eq!((cfg.synth.seed, cfg.model.seed, cfg.train.seed), (11, 11, 11));
    }
}
