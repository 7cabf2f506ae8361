//! Synthetic advecting-field generator.
//!
//! Each sample carries isotropic Gaussian blobs on a periodic grid that are
//! advected by a per-sample velocity (bilinear shift) and smoothed by repeated
//! passes of a 3×3 binomial kernel. Rain-like channels are derived by keeping
//! only the part of the field above a per-frame quantile, so their background
//! is exactly zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config_err, Result};
use crate::grid::{Dataset, Dims, GridSequence, SamplePair, Split};
use crate::kv::{join_list, KeyValues};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub height: usize,
    pub width: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub channels: Vec<String>,
    /// Channel names treated as rain (zero background, sparse positive blobs).
    pub rain_channels: Vec<String>,
    pub n_blobs: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Each velocity component is drawn uniformly from `[-velocity_max, velocity_max]` px/frame.
    pub velocity_max: f64,
    /// Std-dev of the per-frame random-walk perturbation of the velocity.
    pub velocity_noise: f64,
    /// Binomial smoothing passes per frame.
    pub diffusion: u32,
    /// Minimum fraction of exactly-zero pixels in every rain frame.
    pub rain_sparsity: f64,
    /// Upper bound of the per-sample rain gain; the gain is uniform in `[0.1, 1] * rain_intensity`.
    pub rain_intensity: f64,
    /// Multiplies the raining fraction `1 - rain_sparsity` in the validation split.
    pub val_rain_factor: f64,
    pub step_minutes: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 256,
            n_validation: 64,
            n_test: 0,
            height: 32,
            width: 32,
            t_in: 4,
            t_out: 8,
            channels: vec!["temperature".into()],
            rain_channels: vec!["crr_intensity".into()],
            n_blobs: 3,
            sigma_min: 2.0,
            sigma_max: 5.0,
            amplitude_min: 0.3,
            amplitude_max: 1.0,
            velocity_max: 1.0,
            velocity_noise: 0.0,
            diffusion: 0,
            rain_sparsity: 0.9,
            rain_intensity: 1.0,
            val_rain_factor: 1.0,
            step_minutes: 15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.t_in == 0 || self.t_out == 0 {
            return Err(config_err!("height, width, t_in and t_out must be positive"));
        }
        if self.n_train + self.n_validation + self.n_test == 0 {
            return Err(config_err!("at least one sample required"));
        }
        if self.channels.is_empty() {
            return Err(config_err!("at least one channel required"));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(config_err!("duplicate channel {c:?}"));
            }
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(config_err!("need 0 < sigma_min <= sigma_max"));
        }
        if !(0.0 <= self.amplitude_min && self.amplitude_min <= self.amplitude_max) {
            return Err(config_err!("need 0 <= amplitude_min <= amplitude_max"));
        }
        if !(self.velocity_max >= 0.0 && self.velocity_noise >= 0.0) {
            return Err(config_err!("velocity_max and velocity_noise must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rain_sparsity) {
            return Err(config_err!("rain_sparsity must lie in [0, 1]"));
        }
        if !(self.rain_intensity >= 0.0 && self.val_rain_factor >= 0.0) {
            return Err(config_err!("rain_intensity and val_rain_factor must be non-negative"));
        }
        if self.step_minutes == 0 {
            return Err(config_err!("step_minutes must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("n_train", self.n_train);
        kv.set("n_validation", self.n_validation);
        kv.set("n_test", self.n_test);
        kv.set("height", self.height);
        kv.set("width", self.width);
        kv.set("t_in", self.t_in);
        kv.set("t_out", self.t_out);
        kv.set("channels", join_list(&self.channels));
        kv.set("rain_channels", join_list(&self.rain_channels));
        kv.set("n_blobs", self.n_blobs);
        kv.set("sigma_min", self.sigma_min);
        kv.set("sigma_max", self.sigma_max);
        kv.set("amplitude_min", self.amplitude_min);
        kv.set("amplitude_max", self.amplitude_max);
        kv.set("velocity_max", self.velocity_max);
        kv.set("velocity_noise", self.velocity_noise);
        kv.set("diffusion", self.diffusion);
        kv.set("rain_sparsity", self.rain_sparsity);
        kv.set("rain_intensity", self.rain_intensity);
        kv.set("val_rain_factor", self.val_rain_factor);
        kv.set("step_minutes", self.step_minutes);
        kv.set("seed", self.seed);
        kv
    }

    /// Starts from the defaults and overrides every key present; unknown keys are errors.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = SynthConfig::default();
        let mut r = kv.reader();
        let cfg = SynthConfig {
            n_train: r.or("n_train", d.n_train)?,
            n_validation: r.or("n_validation", d.n_validation)?,
            n_test: r.or("n_test", d.n_test)?,
            height: r.or("height", d.height)?,
            width: r.or("width", d.width)?,
            t_in: r.or("t_in", d.t_in)?,
            t_out: r.or("t_out", d.t_out)?,
            channels: r.list("channels")?.unwrap_or(d.channels),
            rain_channels: r.list("rain_channels")?.unwrap_or(d.rain_channels),
            n_blobs: r.or("n_blobs", d.n_blobs)?,
            sigma_min: r.or("sigma_min", d.sigma_min)?,
            sigma_max: r.or("sigma_max", d.sigma_max)?,
            amplitude_min: r.or("amplitude_min", d.amplitude_min)?,
            amplitude_max: r.or("amplitude_max", d.amplitude_max)?,
            velocity_max: r.or("velocity_max", d.velocity_max)?,
            velocity_noise: r.or("velocity_noise", d.velocity_noise)?,
            diffusion: r.or("diffusion", d.diffusion)?,
            rain_sparsity: r.or("rain_sparsity", d.rain_sparsity)?,
            rain_intensity: r.or("rain_intensity", d.rain_intensity)?,
            val_rain_factor: r.or("val_rain_factor", d.val_rain_factor)?,
            step_minutes: r.or("step_minutes", d.step_minutes)?,
            seed: r.or("seed", d.seed)?,
        };
        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn is_rain(&self, channel: &str) -> bool {
        self.rain_channels.iter().any(|c| c == channel)
    }

    fn sparsity(&self, split: Split) -> f64 {
        match split {
            Split::Validation => {
                (1.0 - (1.0 - self.rain_sparsity) * self.val_rain_factor).clamp(0.0, 1.0)
            }
            _ => self.rain_sparsity,
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.n_train + cfg.n_validation + cfg.n_test);
    for (split, n) in [
        (Split::Train, cfg.n_train),
        (Split::Validation, cfg.n_validation),
        (Split::Test, cfg.n_test),
    ] {
        for i in 0..n {
            samples.push(generate_sample(cfg, split, i)?);
        }
    }
    Dataset::new(samples)
}

/// Samples are seeded by `(seed, split, index)`, so growing one split leaves
/// the samples of every other split untouched.
pub fn generate_sample(cfg: &SynthConfig, split: Split, index: usize) -> Result<SamplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((split as u64) << 40) | index as u64);

    let (h, w) = (cfg.height, cfg.width);
    let t_total = cfg.t_in + cfg.t_out;
    let c = cfg.channels.len();

    let mut velocity = if cfg.velocity_max > 0.0 {
        [
            rng.random_range(-cfg.velocity_max..=cfg.velocity_max),
            rng.random_range(-cfg.velocity_max..=cfg.velocity_max),
        ]
    } else {
        [0.0, 0.0]
    };
    let noise = if cfg.velocity_noise > 0.0 {
        Some(Normal::new(0.0, cfg.velocity_noise).expect("positive std-dev"))
    } else {
        None
    };

    // one advected base field per non-rain channel; rain channels with no
    // non-rain channel to draw from get their own
    let first_base = cfg.channels.iter().position(|n| !cfg.is_rain(n));
    let mut sources: Vec<usize> = Vec::with_capacity(c);
    let mut fields: Vec<Vec<f64>> = Vec::new();
    for name in &cfg.channels {
        if cfg.is_rain(name) {
            match first_base {
                Some(_) => sources.push(usize::MAX),
                None => {
                    sources.push(fields.len());
                    fields.push(render_blobs(cfg, &mut rng));
                }
            }
        } else {
            sources.push(fields.len());
            fields.push(render_blobs(cfg, &mut rng));
        }
    }
    if let Some(b) = first_base {
        let base_idx = sources[b];
        for s in sources.iter_mut().filter(|s| **s == usize::MAX) {
            *s = base_idx;
        }
    }
    let rain_gain = cfg.rain_intensity * rng.random_range(0.1..=1.0);
    let sparsity = cfg.sparsity(split);

    let mut data = vec![0.0f32; t_total * h * w * c];
    let mut scratch = vec![0.0f64; h * w];
    for t in 0..t_total {
        if t > 0 {
            if let Some(n) = &noise {
                velocity[0] += n.sample(&mut rng);
                velocity[1] += n.sample(&mut rng);
            }
            for f in fields.iter_mut() {
                shift_bilinear(f, &mut scratch, h, w, velocity);
                for _ in 0..cfg.diffusion {
                    diffuse(f, &mut scratch, h, w);
                }
            }
        }
        for (ch, name) in cfg.channels.iter().enumerate() {
            let field = &fields[sources[ch]];
            let frame = &mut data[t * h * w * c..(t + 1) * h * w * c];
            if cfg.is_rain(name) {
                let q = lower_quantile(field, sparsity);
                for (p, &v) in field.iter().enumerate() {
                    let r = if v > q { rain_gain * (v - q) } else { 0.0 };
                    frame[p * c + ch] = r.clamp(0.0, 1.0) as f32;
                }
            } else {
                for (p, &v) in field.iter().enumerate() {
                    frame[p * c + ch] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
    }

    let frame_len = h * w * c;
    let target = data.split_off(cfg.t_in * frame_len);
    let names = cfg.channels.clone();
    let input = GridSequence::new(Dims::new(cfg.t_in, h, w, c), data, names.clone(), cfg.step_minutes)?;
    let target = GridSequence::new(Dims::new(cfg.t_out, h, w, c), target, names, cfg.step_minutes)?;
    SamplePair::new(input, target, split)
}

fn render_blobs(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let mut field = vec![0.0f64; h * w];
    for _ in 0..cfg.n_blobs {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let sigma = rng.random_range(cfg.sigma_min..=cfg.sigma_max);
        let amp = rng.random_range(cfg.amplitude_min..=cfg.amplitude_max);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in 0..h {
            let dy = periodic_dist(y as f64, cy, h as f64);
            for x in 0..w {
                let dx = periodic_dist(x as f64, cx, w as f64);
                field[y * w + x] += amp * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    field
}

fn periodic_dist(a: f64, b: f64, n: f64) -> f64 {
    let d = (a - b).abs() % n;
    d.min(n - d)
}

/// `out(y, x) = in(y - vy, x - vx)` with bilinear interpolation and periodic wrap.
fn shift_bilinear(field: &mut [f64], scratch: &mut [f64], h: usize, w: usize, v: [f64; 2]) {
    let [vy, vx] = v;
    let (fy0, fx0) = ((-vy).floor(), (-vx).floor());
    let (ay, ax) = (-vy - fy0, -vx - fx0);
    let (oy, ox) = (fy0 as i64, fx0 as i64);
    for y in 0..h {
        let y0 = (y as i64 + oy).rem_euclid(h as i64) as usize;
        let y1 = (y0 + 1) % h;
        for x in 0..w {
            let x0 = (x as i64 + ox).rem_euclid(w as i64) as usize;
            let x1 = (x0 + 1) % w;
            scratch[y * w + x] = (1.0 - ay) * ((1.0 - ax) * field[y0 * w + x0] + ax * field[y0 * w + x1])
                + ay * ((1.0 - ax) * field[y1 * w + x0] + ax * field[y1 * w + x1]);
        }
    }
    field.copy_from_slice(scratch);
}

/// One pass of the normalized [1 2 1]⊗[1 2 1] kernel, periodic boundary.
fn diffuse(field: &mut [f64], scratch: &mut [f64], h: usize, w: usize) {
    for y in 0..h {
        let (ym, yp) = ((y + h - 1) % h, (y + 1) % h);
        for x in 0..w {
            let (xm, xp) = ((x + w - 1) % w, (x + 1) % w);
            let row = |r: usize| field[r * w + xm] + 2.0 * field[r * w + x] + field[r * w + xp];
            scratch[y * w + x] = (row(ym) + 2.0 * row(y) + row(yp)) / 16.0;
        }
    }
    field.copy_from_slice(scratch);
}

/// Value below or at which at least `ceil(q * n)` entries lie; `0` when `q * n` rounds to none.
fn lower_quantile(values: &[f64], q: f64) -> f64 {
    let k = (q * values.len() as f64).ceil() as usize;
    if k == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[k.min(sorted.len()) - 1]
}
