use crate::error::{config_err, shape_err, Result};
use crate::kv::{join_list, KeyValues, KvReader};
use crate::nn::GateType;

pub const DEEP_CHANNELS: [usize; 4] = [32, 48, 64, 80];

/// Architecture of a multiscale encoder-forecaster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForecasterSpec {
    /// Number of resolution levels; level `l` runs at `H / 2^l`.
    pub levels: usize,
    /// Hidden channels per level, finest first.
    pub channels: Vec<usize>,
    pub gate_type: GateType,
    pub t_in: usize,
    pub t_out: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ForecasterSpec {
    /// Four-level model with the default channel schedule.
    pub fn deep(in_channels: usize, height: usize, width: usize, t_in: usize, t_out: usize) -> Self {
        ForecasterSpec {
            levels: 4,
            channels: DEEP_CHANNELS.to_vec(),
            gate_type: GateType::Residual,
            t_in,
            t_out,
            in_channels,
            out_channels: in_channels,
            height,
            width,
        }
    }

    /// The deep model with its deepest level removed.
    pub fn shallow(in_channels: usize, height: usize, width: usize, t_in: usize, t_out: usize) -> Self {
        Self::deep(in_channels, height, width, t_in, t_out).without_deepest_level()
    }

    pub fn without_deepest_level(&self) -> Self {
        let mut s = self.clone();
        s.levels = s.levels.saturating_sub(1);
        s.channels.pop();
        s
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Self {
        self.levels = channels.len();
        self.channels = channels;
        self
    }

    pub fn with_gate(mut self, gate_type: GateType) -> Self {
        self.gate_type = gate_type;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(config_err!("levels must be at least 2, got {}", self.levels));
        }
        if self.channels.len() != self.levels {
            return Err(config_err!(
                "{} channel counts for {} levels",
                self.channels.len(),
                self.levels
            ));
        }
        if self.channels.contains(&0) {
            return Err(config_err!("channel counts must be positive"));
        }
        if self.t_in == 0 || self.t_out == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(config_err!("t_in, t_out, in_channels and out_channels must be positive"));
        }
        let f = 1usize << (self.levels - 1);
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(f) || !self.width.is_multiple_of(f) {
            return Err(shape_err!(
                "grid {}x{} not divisible by 2^(levels-1) = {f}",
                self.height,
                self.width
            ));
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("model.levels", self.levels);
        kv.set("model.channels", join_list(&self.channels));
        kv.set("model.gate", self.gate_type);
        kv.set("model.t_in", self.t_in);
        kv.set("model.t_out", self.t_out);
        kv.set("model.in_channels", self.in_channels);
        kv.set("model.out_channels", self.out_channels);
        kv.set("model.height", self.height);
        kv.set("model.width", self.width);
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        self.write_kv(&mut kv);
        kv
    }

    /// Reads `model.*` keys; every key is required.
    pub fn read_kv(r: &mut KvReader<'_>) -> Result<Self> {
        let spec = ForecasterSpec {
            levels: r.req("model.levels")?,
            channels: r.list("model.channels")?.ok_or_else(|| config_err!("missing model.channels"))?,
            gate_type: r.req("model.gate")?,
            t_in: r.req("model.t_in")?,
            t_out: r.req("model.t_out")?,
            in_channels: r.req("model.in_channels")?,
            out_channels: r.req("model.out_channels")?,
            height: r.req("model.height")?,
            width: r.req("model.width")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut r = kv.reader();
        let s = Self::read_kv(&mut r)?;
        r.finish()?;
        Ok(s)
    }
}
