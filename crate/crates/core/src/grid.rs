//! Gridded frame sequences, sample pairs and datasets.
//!
//! Values are normalized to `[0, 1]` and laid out T-major, then H, W, C.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(t: usize, h: usize, w: usize, c: usize) -> Self {
        Dims { t, h, w, c }
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn len(&self) -> usize {
        self.t * self.frame_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same spatial size and channel count, frame count ignored.
    pub fn same_grid(&self, other: &Dims) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.t, self.h, self.w, self.c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSequence {
    dims: Dims,
    data: Vec<f32>,
    variable_names: Vec<String>,
    step_minutes: u32,
}

pub fn default_variable_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("ch{i}")).collect()
}

impl GridSequence {
    pub fn new(
        dims: Dims,
        data: Vec<f32>,
        variable_names: Vec<String>,
        step_minutes: u32,
    ) -> Result<Self> {
        if dims.t == 0 || dims.h == 0 || dims.w == 0 || dims.c == 0 {
            return Err(shape_err!("all dimensions must be positive, got {dims}"));
        }
        if data.len() != dims.len() {
            return Err(shape_err!(
                "expected {} values for {dims}, got {}",
                dims.len(),
                data.len()
            ));
        }
        if variable_names.len() != dims.c {
            return Err(shape_err!(
                "{} variable names for {} channels",
                variable_names.len(),
                dims.c
            ));
        }
        if step_minutes == 0 {
            return Err(config_err!("step_minutes must be positive"));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Numeric(format!(
                "value {v} at flat index {i} outside [0, 1]"
            )));
        }
        Ok(GridSequence {
            dims,
            data,
            variable_names,
            step_minutes,
        })
    }

    /// Builds a sequence with `ch0..chN` names and a 15 minute step.
    pub fn from_data(dims: Dims, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, data, default_variable_names(dims.c), 15)
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::from_data(dims, vec![0.0; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn with_variable_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dims.c {
            return Err(shape_err!(
                "{} variable names for {} channels",
                names.len(),
                self.dims.c
            ));
        }
        self.variable_names = names;
        Ok(self)
    }

    pub fn with_step_minutes(mut self, step: u32) -> Result<Self> {
        if step == 0 {
            return Err(config_err!("step_minutes must be positive"));
        }
        self.step_minutes = step;
        Ok(self)
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.variable_names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.dims.h + y) * self.dims.w + x) * self.dims.c + c
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(t, y, x, c)]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Iterator over every value of channel `c`, all frames and pixels.
    pub fn channel_values(&self, c: usize) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().skip(c).step_by(self.dims.c).copied()
    }

    pub fn channel_max(&self, c: usize) -> f32 {
        self.channel_values(c).fold(0.0, f32::max)
    }

    /// Sub-sequence of frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.dims.t {
            return Err(shape_err!(
                "frame range {start}..{end} invalid for {} frames",
                self.dims.t
            ));
        }
        let n = self.dims.frame_len();
        Ok(GridSequence {
            dims: Dims { t: end - start, ..self.dims },
            data: self.data[start * n..end * n].to_vec(),
            variable_names: self.variable_names.clone(),
            step_minutes: self.step_minutes,
        })
    }

    /// Checks that `other` has identical dims (including frame count).
    pub fn check_same_shape(&self, other: &GridSequence) -> Result<()> {
        if self.dims != other.dims {
            return Err(shape_err!("shape {} vs {}", self.dims, other.dims));
        }
        Ok(())
    }

    pub fn augment(&self, transform: Transform) -> Result<Self> {
        let Dims { t, h, w, c } = self.dims;
        if matches!(transform, Transform::Rot90 | Transform::Rot270) && h != w {
            return Err(shape_err!(
                "{} requires a square grid, got {h}x{w}",
                transform.as_str()
            ));
        }
        let mut out = vec![0.0f32; self.data.len()];
        for ti in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let (sy, sx) = transform.source(y, x, h, w);
                    let dst = self.index(ti, y, x, 0);
                    let src = self.index(ti, sy, sx, 0);
                    out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
                }
            }
        }
        Ok(GridSequence {
            data: out,
            ..self.clone()
        })
    }
}

/// Spatial symmetry applied identically to every frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    MirrorH,
    MirrorV,
    Rot90,
    Rot180,
    Rot270,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::MirrorH,
        Transform::MirrorV,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::MirrorH => "mirror_h",
            Transform::MirrorV => "mirror_v",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
        }
    }

    /// Source pixel of destination `(y, x)`. Rotations are counter-clockwise.
    fn source(&self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (y, x),
            Transform::MirrorH => (y, w - 1 - x),
            Transform::MirrorV => (h - 1 - y, x),
            Transform::Rot90 => (x, w - 1 - y),
            Transform::Rot180 => (h - 1 - y, w - 1 - x),
            Transform::Rot270 => (h - 1 - x, y),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| config_err!("unknown transform {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(config_err!("unknown split {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub input: GridSequence,
    pub target: GridSequence,
    pub split: Split,
}

impl SamplePair {
    pub fn new(input: GridSequence, target: GridSequence, split: Split) -> Result<Self> {
        let (a, b) = (input.dims(), target.dims());
        if !a.same_grid(&b) {
            return Err(shape_err!("input {a} and target {b} grids differ"));
        }
        if input.variable_names() != target.variable_names() {
            return Err(shape_err!("input and target variable names differ"));
        }
        if input.step_minutes() != target.step_minutes() {
            return Err(shape_err!("input and target time steps differ"));
        }
        Ok(SamplePair {
            input,
            target,
            split,
        })
    }

    pub fn augment(&self, transform: Transform) -> Result<Self> {
        Ok(SamplePair {
            input: self.input.augment(transform)?,
            target: self.target.augment(transform)?,
            split: self.split,
        })
    }

    /// Maximum of channel `c` over every input frame and pixel.
    pub fn input_max(&self, c: usize) -> f32 {
        self.input.channel_max(c)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<SamplePair>,
}

impl Dataset {
    pub fn new(samples: Vec<SamplePair>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (di, dt) = (first.input.dims(), first.target.dims());
            for (i, s) in samples.iter().enumerate() {
                if s.input.dims() != di || s.target.dims() != dt {
                    return Err(shape_err!(
                        "sample {i} has shapes {}/{} but sample 0 has {di}/{dt}",
                        s.input.dims(),
                        s.target.dims()
                    ));
                }
                if s.input.variable_names() != first.input.variable_names() {
                    return Err(shape_err!("sample {i} variable names differ from sample 0"));
                }
            }
        }
        Ok(Dataset { samples })
    }

    pub fn samples(&self) -> &[SamplePair] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SamplePair> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.samples.first().map(|s| s.input.variable_names())
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.samples.first().and_then(|s| s.input.channel_index(name))
    }

    /// Input and target shapes shared by every sample.
    pub fn shapes(&self) -> Option<(Dims, Dims)> {
        self.samples
            .first()
            .map(|s| (s.input.dims(), s.target.dims()))
    }

    /// Keeps only samples for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&SamplePair) -> bool) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Arithmetic mean of one channel over all input and target frames of a split.
    pub fn channel_mean(&self, split: Split, channel: usize) -> Result<f64> {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for s in self.split(split) {
            if channel >= s.input.dims().c {
                return Err(config_err!(
                    "channel {channel} out of range for {} channels",
                    s.input.dims().c
                ));
            }
            for seq in [&s.input, &s.target] {
                for v in seq.channel_values(channel) {
                    sum += v as f64;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::Statistics(format!("split {split} is empty")));
        }
        Ok(sum / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: Dims) -> GridSequence {
        let n = dims.len();
        let data = (0..n).map(|i| i as f32 / n as f32).collect();
        GridSequence::from_data(dims, data).unwrap()
    }

    #[test]
    fn rejects_out_of_range_values() {
        let err = GridSequence::from_data(Dims::new(1, 1, 2, 1), vec![0.5, 1.5]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(GridSequence::from_data(Dims::new(1, 1, 2, 1), vec![0.5, f32::NAN]).is_err());
        assert!(GridSequence::from_data(Dims::new(0, 1, 2, 1), vec![]).is_err());
    }

    #[test]
    fn mirror_is_involution() {
        let s = ramp(Dims::new(2, 3, 4, 2));
        for t in [Transform::MirrorH, Transform::MirrorV, Transform::Rot180] {
            assert_eq!(s.augment(t).unwrap().augment(t).unwrap(), s);
        }
        assert_eq!(s.augment(Transform::Identity).unwrap(), s);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let s = ramp(Dims::new(2, 5, 5, 3));
        let mut r = s.clone();
        for _ in 0..4 {
            r = r.augment(Transform::Rot90).unwrap();
        }
        assert_eq!(r, s);
        let back = s
            .augment(Transform::Rot90)
            .unwrap()
            .augment(Transform::Rot270)
            .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rot90_moves_corner_counter_clockwise() {
        // top-right corner goes to top-left
        let mut data = vec![0.0; 4];
        data[1] = 1.0;
        let s = GridSequence::from_data(Dims::new(1, 2, 2, 1), data).unwrap();
        let r = s.augment(Transform::Rot90).unwrap();
        assert_eq!(r.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn_needs_square_grid() {
        let s = ramp(Dims::new(1, 2, 3, 1));
        assert!(matches!(s.augment(Transform::Rot90), Err(Error::Shape(_))));
        assert!(matches!(s.augment(Transform::Rot270), Err(Error::Shape(_))));
        assert!(s.augment(Transform::Rot180).is_ok());
    }

    #[test]
    fn channel_mean_forced_arithmetic() {
        let seq = |v: Vec<f32>| GridSequence::from_data(Dims::new(1, 1, 1, 1), v).unwrap();
        let d = Dataset::new(vec![SamplePair::new(seq(vec![0.2]), seq(vec![0.4]), Split::Train).unwrap()])
            .unwrap();
        assert!((d.channel_mean(Split::Train, 0).unwrap() - 0.3).abs() < 1e-7);
        assert!(matches!(
            d.channel_mean(Split::Validation, 0),
            Err(Error::Statistics(_))
        ));
        assert!(d.channel_mean(Split::Train, 3).is_err());
    }

    #[test]
    fn split_names_parse() {
        for s in Split::ALL {
            assert_eq!(s.as_str().parse::<Split>().unwrap(), s);
        }
        for t in Transform::ALL {
            assert_eq!(t.as_str().parse::<Transform>().unwrap(), t);
        }
        assert!("sideways".parse::<Transform>().is_err());
    }
}
