//! Two forecasters dispatched on the maximum rain rate of the input.
//!
//! Inputs whose rain maximum is strictly below the threshold go to the dry
//! member, everything else (including ties) to the wet member.

use std::path::Path;

use crate::error::{config_err, Error, Result};
use crate::forecaster::{checkpoint, train, Forecaster, ForecasterSpec, TrainConfig, TrainLog};
use crate::grid::{Dataset, GridSequence, Split};
use crate::predict::Predictor;

/// Threshold found for the competition data on the normalized scale.
pub const REFERENCE_THRESHOLD: f64 = 0.026;

const MAGIC: &[u8; 4] = b"NCC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Dry,
    Wet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalForecaster {
    threshold: f64,
    channel: usize,
    dry: Forecaster<f32>,
    wet: Forecaster<f32>,
}

pub fn route_for(max: f32, threshold: f64) -> Route {
    if (max as f64) < threshold {
        Route::Dry
    } else {
        Route::Wet
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(config_err!("threshold must lie in (0, 1), got {threshold}"))
    }
}

fn check_channel(channel: usize, channels: usize) -> Result<()> {
    if channel < channels {
        Ok(())
    } else {
        Err(config_err!("rain channel {channel} missing from {channels}-channel input"))
    }
}

impl ConditionalForecaster {
    pub fn new(threshold: f64, channel: usize, dry: Forecaster<f32>, wet: Forecaster<f32>) -> Result<Self> {
        check_threshold(threshold)?;
        let (a, b) = (dry.spec(), wet.spec());
        if (a.t_in, a.t_out, a.in_channels, a.out_channels, a.height, a.width)
            != (b.t_in, b.t_out, b.in_channels, b.out_channels, b.height, b.width)
        {
            return Err(config_err!("conditional members have incompatible input/output shapes"));
        }
        check_channel(channel, a.in_channels)?;
        Ok(ConditionalForecaster {
            threshold,
            channel,
            dry,
            wet,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn dry(&self) -> &Forecaster<f32> {
        &self.dry
    }

    pub fn wet(&self) -> &Forecaster<f32> {
        &self.wet
    }

    pub fn member(&self, route: Route) -> &Forecaster<f32> {
        match route {
            Route::Dry => &self.dry,
            Route::Wet => &self.wet,
        }
    }

    pub fn dispatch(&self, input: &GridSequence) -> Result<Route> {
        check_channel(self.channel, input.dims().c)?;
        Ok(route_for(input.channel_max(self.channel), self.threshold))
    }

    pub fn predict_conditional(&self, input: &GridSequence) -> Result<GridSequence> {
        self.member(self.dispatch(input)?).predict(input)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&self.threshold.to_le_bytes());
        out.extend_from_slice(&(self.channel as u32).to_le_bytes());
        for m in [&self.dry, &self.wet] {
            let blob = checkpoint::encode(m);
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::format("magic", "not a conditional checkpoint"))?;
        let (head, mut rest) = rest
            .split_at_checked(12)
            .ok_or_else(|| Error::format("header", "truncated conditional header"))?;
        let threshold = f64::from_le_bytes(head[..8].try_into().unwrap());
        let channel = u32::from_le_bytes(head[8..].try_into().unwrap()) as usize;
        let mut members = Vec::with_capacity(2);
        for _ in 0..2 {
            let (len, tail) = rest
                .split_at_checked(8)
                .ok_or_else(|| Error::format("member", "truncated member length"))?;
            let len = u64::from_le_bytes(len.try_into().unwrap()) as usize;
            let (blob, tail) = tail
                .split_at_checked(len)
                .ok_or_else(|| Error::format("member", "truncated member checkpoint"))?;
            members.push(checkpoint::decode(blob)?);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(Error::format("member", format!("{} trailing bytes", rest.len())));
        }
        let wet = members.pop().unwrap();
        let dry = members.pop().unwrap();
        ConditionalForecaster::new(threshold, channel, dry, wet)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

impl Predictor for ConditionalForecaster {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        self.predict_conditional(input)
    }

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        let routes = inputs.iter().map(|x| self.dispatch(x)).collect::<Result<Vec<_>>>()?;
        let mut out: Vec<Option<GridSequence>> = vec![None; inputs.len()];
        for route in [Route::Dry, Route::Wet] {
            let idx: Vec<usize> = (0..inputs.len()).filter(|&i| routes[i] == route).collect();
            if idx.is_empty() {
                continue;
            }
            let batch: Vec<&GridSequence> = idx.iter().map(|&i| inputs[i]).collect();
            for (i, p) in idx.into_iter().zip(self.member(route).predict_many(&batch)?) {
                out[i] = Some(p);
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }
}

/// Median of the per-sample input maxima of `channel` over the train split
/// (mean of the two middle values for an even count).
pub fn calibrate_threshold(data: &Dataset, channel: usize) -> Result<f64> {
    let mut maxima: Vec<f64> = data
        .split(Split::Train)
        .map(|s| {
            check_channel(channel, s.input.dims().c)?;
            Ok(s.input_max(channel) as f64)
        })
        .collect::<Result<_>>()?;
    if maxima.is_empty() {
        return Err(Error::Statistics("cannot calibrate on an empty train split".into()));
    }
    maxima.sort_by(f64::total_cmp);
    let n = maxima.len();
    Ok(if n % 2 == 1 {
        maxima[n / 2]
    } else {
        0.5 * (maxima[n / 2 - 1] + maxima[n / 2])
    })
}

/// Splits every split of `data` into (dry, wet) parts.
pub fn route_dataset(data: &Dataset, threshold: f64, channel: usize) -> Result<(Dataset, Dataset)> {
    for s in data.samples() {
        check_channel(channel, s.input.dims().c)?;
    }
    let dry = data.filter(|s| route_for(s.input_max(channel), threshold) == Route::Dry);
    let wet = data.filter(|s| route_for(s.input_max(channel), threshold) == Route::Wet);
    Ok((dry, wet))
}

/// How the two members are initialized before training on their subsets.
#[derive(Clone, Debug)]
pub enum MemberInit<'a> {
    /// Both members start as copies of a model trained on the whole dataset.
    Pretrained(&'a Forecaster<f32>),
    /// Fresh random initialization.
    Scratch {
        spec: ForecasterSpec,
        dry_seed: u64,
        wet_seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalLog {
    pub dry_samples: usize,
    pub wet_samples: usize,
    pub dry: TrainLog,
    pub wet: TrainLog,
}

impl ConditionalLog {
    pub fn to_text(&self) -> String {
        format!(
            "dry_samples = {}\nwet_samples = {}\n# dry\n{}# wet\n{}",
            self.dry_samples,
            self.wet_samples,
            self.dry.to_text(),
            self.wet.to_text()
        )
    }
}

/// Builds the (dry, wet) starting points.
pub fn init_members(init: &MemberInit<'_>) -> Result<(Forecaster<f32>, Forecaster<f32>)> {
    match init {
        MemberInit::Pretrained(base) => Ok(((*base).clone(), (*base).clone())),
        MemberInit::Scratch {
            spec,
            dry_seed,
            wet_seed,
        } => Ok((Forecaster::build(spec, *dry_seed)?, Forecaster::build(spec, *wet_seed)?)),
    }
}

/// Trains each member only on the training samples routed to it.
pub fn train_conditional(
    data: &Dataset,
    threshold: f64,
    channel: usize,
    init: MemberInit<'_>,
    cfg: &TrainConfig,
) -> Result<(ConditionalForecaster, ConditionalLog)> {
    check_threshold(threshold)?;
    let (dry_data, wet_data) = route_dataset(data, threshold, channel)?;
    let dry_samples = dry_data.split_len(Split::Train);
    let wet_samples = wet_data.split_len(Split::Train);
    if dry_samples == 0 || wet_samples == 0 {
        return Err(config_err!(
            "threshold {threshold} routes {dry_samples} dry and {wet_samples} wet training samples; both members need data"
        ));
    }
    let (mut dry, mut wet) = init_members(&init)?;
    let dry_log = train(&mut dry, &dry_data, cfg)?;
    let wet_log = train(&mut wet, &wet_data, cfg)?;
    let cf = ConditionalForecaster::new(threshold, channel, dry, wet)?;
    Ok((
        cf,
        ConditionalLog {
            dry_samples,
            wet_samples,
            dry: dry_log,
            wet: wet_log,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, SamplePair};
    use crate::nn::GateType;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn spec() -> ForecasterSpec {
        ForecasterSpec {
            levels: 2,
            channels: vec![3, 4],
            gate_type: GateType::Conv,
            t_in: 2,
            t_out: 2,
            in_channels: 1,
            out_channels: 1,
            height: 4,
            width: 4,
        }
    }

    fn constant(v: f32) -> GridSequence {
        GridSequence::from_data(Dims::new(2, 4, 4, 1), vec![v; 32]).unwrap()
    }

    fn pair(a: u64, b: u64, tau: f64) -> ConditionalForecaster {
        let s = spec();
        ConditionalForecaster::new(tau, 0, Forecaster::build(&s, a).unwrap(), Forecaster::build(&s, b).unwrap()).unwrap()
    }

    #[test]
    fn dispatch_is_strictly_less_than() {
        let cf = pair(0, 1, REFERENCE_THRESHOLD);
        assert_eq!(cf.dispatch(&constant(0.0)).unwrap(), Route::Dry);
        assert_eq!(cf.dispatch(&constant(0.03)).unwrap(), Route::Wet);
        assert_eq!(route_for(0.026f32, 0.026f32 as f64), Route::Wet);
        let mut v = vec![0.0; 32];
        v[31] = 0.5;
        let spike = GridSequence::from_data(Dims::new(2, 4, 4, 1), v).unwrap();
        assert_eq!(cf.dispatch(&spike).unwrap(), Route::Wet);
        let two = GridSequence::from_data(Dims::new(2, 4, 4, 2), vec![0.0; 64]).unwrap();
        let bad = ConditionalForecaster { channel: 3, ..cf.clone() };
        assert!(matches!(bad.dispatch(&two), Err(Error::Config(_))));
    }

    #[test]
    fn predictions_come_from_one_member() {
        let cf = pair(0, 1, 0.1);
        let dry_in = constant(0.0);
        let wet_in = constant(0.9);
        assert_eq!(cf.predict(&dry_in).unwrap(), cf.dry().predict(&dry_in).unwrap());
        assert_eq!(cf.predict(&wet_in).unwrap(), cf.wet().predict(&wet_in).unwrap());
        let many = cf.predict_many(&[&wet_in, &dry_in, &wet_in]).unwrap();
        assert_eq!(many[0], cf.wet().predict(&wet_in).unwrap());
        assert_eq!(many[1], cf.dry().predict(&dry_in).unwrap());

        let same = pair(5, 5, 0.1);
        for x in [&dry_in, &wet_in] {
            assert_eq!(same.predict(x).unwrap(), same.dry().predict(x).unwrap());
        }
    }

    #[test]
    fn invalid_threshold_rejected() {
        let s = spec();
        for tau in [0.0, 1.0, -0.1, f64::NAN] {
            let m = Forecaster::build(&s, 0).unwrap();
            assert!(ConditionalForecaster::new(tau, 0, m.clone(), m).is_err());
        }
    }

    fn with_maxima(maxima: &[f32]) -> Dataset {
        let samples = maxima
            .iter()
            .map(|&m| {
                let mut v = vec![0.0; 32];
                v[7] = m;
                let x = GridSequence::from_data(Dims::new(2, 4, 4, 1), v).unwrap();
                SamplePair::new(x, constant(0.0), Split::Train).unwrap()
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn calibration_is_median() {
        let t = calibrate_threshold(&with_maxima(&[0.3, 0.1, 0.2]), 0).unwrap();
        assert_eq!(t, 0.2f32 as f64);
        let t = calibrate_threshold(&with_maxima(&[0.25, 0.5, 0.75, 1.0]), 0).unwrap();
        assert_eq!(t, 0.625);
        let d = with_maxima(&[0.4; 5]);
        let t = calibrate_threshold(&d, 0).unwrap();
        assert_eq!(t, 0.4f32 as f64);
        let (dry, wet) = route_dataset(&d, t, 0).unwrap();
        assert_eq!((dry.len(), wet.len()), (0, 5));
        assert!(matches!(calibrate_threshold(&with_maxima(&[]), 0), Err(Error::Statistics(_))));
    }

    #[test]
    fn calibration_splits_synthetic_train_evenly() {
        let data = generate_synthetic(&SynthConfig {
            n_train: 120,
            n_validation: 0,
            height: 8,
            width: 8,
            t_in: 2,
            t_out: 1,
            channels: vec!["crr_intensity".into()],
            ..SynthConfig::default()
        })
        .unwrap();
        let t = calibrate_threshold(&data, 0).unwrap();
        let (dry, wet) = route_dataset(&data, t, 0).unwrap();
        assert_eq!(dry.len() + wet.len(), 120);
        let frac = dry.len() as f64 / 120.0;
        assert!((0.45..=0.55).contains(&frac), "{frac}");
    }

    #[test]
    fn training_partitions_and_initializes() {
        let data = with_maxima(&[0.05, 0.1, 0.6, 0.7, 0.8]);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let base = Forecaster::build(&spec(), 9).unwrap();
        let (dry, wet) = init_members(&MemberInit::Pretrained(&base)).unwrap();
        assert_eq!(dry, base);
        assert_eq!(wet, base);
        let (cf, log) = train_conditional(&data, 0.5, 0, MemberInit::Pretrained(&base), &cfg).unwrap();
        assert_eq!((log.dry_samples, log.wet_samples), (2, 3));
        assert_ne!(cf.dry(), &base);

        let scratch = MemberInit::Scratch {
            spec: spec(),
            dry_seed: 1,
            wet_seed: 2,
        };
        let (a, b) = init_members(&scratch).unwrap();
        assert_ne!(a, b);
        let err = train_conditional(&data, 0.9, 0, scratch, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn container_round_trip() {
        let cf = pair(3, 4, 0.3);
        let bytes = cf.encode();
        assert_eq!(ConditionalForecaster::decode(&bytes).unwrap(), cf);
        assert!(ConditionalForecaster::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(ConditionalForecaster::decode(b"NCK1").is_err());
    }
}
