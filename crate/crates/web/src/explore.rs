//! Plain-Rust logic behind the browser demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nowcast::conditional::{calibrate_threshold, route_for, Route};
use nowcast::ensemble::{equal_weights, solve_constrained, solve_ridge, EnsembleDesign, LambdaRule};
use nowcast::render::{render_sequence, Image, RenderOptions};
use nowcast::synth::{generate_sample, generate_synthetic, SynthConfig};
use nowcast::{Result, Split};

#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams {
    pub seed: u64,
    pub size: usize,
    pub frames: usize,
    pub n_blobs: usize,
    pub velocity_max: f64,
    pub velocity_noise: f64,
    pub diffusion: u32,
    pub rain_sparsity: f64,
    /// Draw the rain channel instead of the base field.
    pub show_rain: bool,
    /// Overlay the 0.5 iso-contour of the displayed channel.
    pub contour: bool,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            seed: 0,
            size: 32,
            frames: 8,
            n_blobs: 3,
            velocity_max: 1.0,
            velocity_noise: 0.0,
            diffusion: 0,
            rain_sparsity: 0.9,
            show_rain: false,
            contour: false,
        }
    }
}

/// One synthetic sequence drawn as a horizontal strip of frames.
pub fn field_strip(p: &FieldParams) -> Result<Image> {
    let cfg = SynthConfig {
        n_train: 1,
        n_validation: 0,
        height: p.size,
        width: p.size,
        t_in: p.frames,
        t_out: 1,
        channels: vec!["field".into(), "rain".into()],
        rain_channels: vec!["rain".into()],
        n_blobs: p.n_blobs,
        velocity_max: p.velocity_max,
        velocity_noise: p.velocity_noise,
        diffusion: p.diffusion,
        rain_sparsity: p.rain_sparsity,
        seed: p.seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let sample = generate_sample(&cfg, Split::Train, 0)?;
    let channel = usize::from(p.show_rain);
    render_sequence(
        &sample.input,
        &RenderOptions {
            channel,
            contour_channel: p.contour.then_some(channel),
            contour_level: 0.5,
        },
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Routing {
    /// Per-sample input maxima of the rain channel, train split.
    pub maxima: Vec<f64>,
    pub calibrated: f64,
    pub dry: usize,
    pub wet: usize,
}

/// Routes `n` synthetic training samples at `threshold`; a non-positive
/// threshold means "use the calibrated one".
pub fn routing(seed: u64, n: usize, sparsity: f64, threshold: f64) -> Result<Routing> {
    let cfg = SynthConfig {
        n_train: n,
        n_validation: 0,
        height: 16,
        width: 16,
        t_in: 4,
        t_out: 1,
        channels: vec!["crr_intensity".into()],
        rain_sparsity: sparsity,
        seed,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    let calibrated = calibrate_threshold(&data, 0)?;
    let tau = if threshold > 0.0 { threshold } else { calibrated };
    let maxima: Vec<f64> = data.split(Split::Train).map(|s| s.input_max(0) as f64).collect();
    let dry = data
        .split(Split::Train)
        .filter(|s| route_for(s.input_max(0), tau) == Route::Dry)
        .count();
    Ok(Routing {
        wet: maxima.len() - dry,
        maxima,
        calibrated,
        dry,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleFit {
    pub equal: Vec<f64>,
    pub ridge: Vec<f64>,
    pub constrained: Vec<f64>,
    pub member_mse: Vec<f64>,
    /// Fit-set MSE of the equal, ridge and constrained combinations.
    pub ensemble_mse: [f64; 3],
    pub lambda: f64,
}

/// Members are the truth plus a fixed bias and uniform noise of the given
/// amplitude, over `n` random pixels.
pub fn ensemble_fit(seed: u64, biases: &[f64], noises: &[f64], lambda_scale: f64, n: usize) -> Result<EnsembleFit> {
    if biases.len() != noises.len() || biases.is_empty() {
        return Err(nowcast::Error::Config("one bias and one noise level per member".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f32> = (0..n).map(|_| rng.random::<f32>()).collect();
    let cols: Vec<Vec<f32>> = biases
        .iter()
        .zip(noises)
        .map(|(&b, &a)| {
            y.iter()
                .map(|&v| (v as f64 + b + a * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0) as f32)
                .collect()
        })
        .collect();
    let mut design = EnsembleDesign::new(cols.len());
    let xs: Vec<&[f32]> = cols.iter().map(|c| c.as_slice()).collect();
    design.accumulate_values(&xs, &y)?;
    let rule = LambdaRule::Relative(lambda_scale);
    let equal = equal_weights(cols.len())?;
    let ridge = solve_ridge(&design, rule)?;
    let constrained = solve_constrained(&design, rule)?;
    let member_mse = (0..cols.len())
        .map(|j| {
            let mut e = vec![0.0; cols.len()];
            e[j] = 1.0;
            design.mse_of(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleFit {
        ensemble_mse: [
            design.mse_of(&equal.weights)?,
            design.mse_of(&ridge.weights)?,
            design.mse_of(&constrained.weights)?,
        ],
        lambda: ridge.lambda,
        equal: equal.weights,
        ridge: ridge.weights,
        constrained: constrained.weights,
        member_mse,
    })
}
