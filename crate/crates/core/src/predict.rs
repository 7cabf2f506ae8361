//! Common interface over single models, baselines, conditional pairs and ensembles.

use crate::error::Result;
use crate::forecaster::{persistence_baseline, Forecaster};
use crate::grid::GridSequence;

pub trait Predictor {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence>;

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        inputs.iter().map(|x| self.predict(x)).collect()
    }
}

impl Predictor for Forecaster<f32> {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        Forecaster::predict(self, input)
    }

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        // keep batches small so activations stay cache friendly
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(16) {
            out.extend(self.predict_batch(chunk)?);
        }
        Ok(out)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        (**self).predict(input)
    }

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        (**self).predict_many(inputs)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        (**self).predict(input)
    }

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        (**self).predict_many(inputs)
    }
}

/// Repeats the last observed frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Persistence {
    pub t_out: usize,
}

impl Predictor for Persistence {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        persistence_baseline(input, self.t_out)
    }
}
