//! Mean squared error and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Dataset, GridSequence, SamplePair, Split};
use crate::kv::KeyValues;
use crate::predict::Predictor;

/// Mean squared difference over all frames and pixels, optionally restricted
/// to one channel.
pub fn mse(pred: &GridSequence, truth: &GridSequence, channel: Option<usize>) -> Result<f64> {
    let (sum, count) = squared_error(pred, truth, channel)?;
    Ok(sum / count as f64)
}

fn squared_error(pred: &GridSequence, truth: &GridSequence, channel: Option<usize>) -> Result<(f64, usize)> {
    if pred.dims() != truth.dims() {
        return Err(shape_err!("prediction {} vs truth {}", pred.dims(), truth.dims()));
    }
    let c = pred.dims().c;
    let sq = |(p, t): (&f32, &f32)| {
        let d = *p as f64 - *t as f64;
        d * d
    };
    match channel {
        None => Ok((pred.data().iter().zip(truth.data()).map(sq).sum(), pred.data().len())),
        Some(ch) if ch < c => {
            let it = pred.data().iter().zip(truth.data()).skip(ch).step_by(c);
            Ok((it.map(sq).sum(), pred.data().len() / c))
        }
        Some(ch) => Err(shape_err!("channel {ch} out of range for {c} channels")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub id: String,
    pub per_variable: BTreeMap<String, f64>,
    pub aggregate: f64,
    pub samples: usize,
}

impl MetricsReport {
    /// Builds a report whose aggregate is the unweighted mean of the entries.
    pub fn new(id: impl Into<String>, per_variable: BTreeMap<String, f64>, samples: usize) -> Result<Self> {
        if per_variable.is_empty() {
            return Err(Error::Statistics("report has no variables".into()));
        }
        let aggregate = per_variable.values().sum::<f64>() / per_variable.len() as f64;
        Ok(MetricsReport {
            id: id.into(),
            per_variable,
            aggregate,
            samples,
        })
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("id", &self.id);
        kv.set("samples", self.samples);
        for (name, v) in &self.per_variable {
            kv.set(format!("{name}.mse"), format!("{v:.12e}"));
        }
        kv.set("aggregate", format!("{:.12e}", self.aggregate));
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut per_variable = BTreeMap::new();
        for (k, v) in kv.iter() {
            if let Some(name) = k.strip_suffix(".mse") {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::format("report", format!("bad value for {k}: {v:?}")))?;
                per_variable.insert(name.to_string(), x);
            }
        }
        let id = kv.get("id").unwrap_or("model").to_string();
        let samples = kv
            .get("samples")
            .map(|s| s.parse().map_err(|_| Error::format("report", "bad samples")))
            .transpose()?
            .unwrap_or(0);
        MetricsReport::new(id, per_variable, samples)
    }
}

/// Accumulates per-variable squared errors over (prediction, truth) pairs.
#[derive(Clone, Debug, Default)]
pub struct MseAccumulator {
    names: Vec<String>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    samples: usize,
}

impl MseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pred: &GridSequence, truth: &GridSequence) -> Result<()> {
        if self.samples == 0 {
            self.names = truth.variable_names().to_vec();
            self.sums = vec![0.0; self.names.len()];
            self.counts = vec![0; self.names.len()];
        } else if truth.variable_names() != self.names.as_slice() {
            return Err(shape_err!("variable names differ between samples"));
        }
        for c in 0..self.names.len() {
            let (s, n) = squared_error(pred, truth, Some(c))?;
            self.sums[c] += s;
            self.counts[c] += n;
        }
        self.samples += 1;
        Ok(())
    }

    pub fn report(&self, id: impl Into<String>) -> Result<MetricsReport> {
        if self.samples == 0 {
            return Err(Error::Statistics("no samples evaluated".into()));
        }
        let per_variable = self
            .names
            .iter()
            .zip(self.sums.iter().zip(&self.counts))
            .map(|(n, (s, c))| (n.clone(), s / *c as f64))
            .collect();
        MetricsReport::new(id, per_variable, self.samples)
    }
}

/// Evaluates `predictor` on every sample of `split`.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    data: &Dataset,
    split: Split,
    id: &str,
) -> Result<MetricsReport> {
    let samples: Vec<&SamplePair> = data.split(split).collect();
    if samples.is_empty() {
        return Err(Error::Statistics(format!("{split} split is empty")));
    }
    let mut acc = MseAccumulator::new();
    for chunk in samples.chunks(32) {
        let inputs: Vec<&GridSequence> = chunk.iter().map(|s| &s.input).collect();
        let preds = predictor.predict_many(&inputs)?;
        for (p, s) in preds.iter().zip(chunk) {
            acc.add(p, &s.target)?;
        }
    }
    acc.report(id)
}

/// Text table, one row per report sorted by id; `*` marks the column minimum.
pub fn compare_table(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<&MetricsReport> = reports.iter().collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let mut columns: Vec<String> = Vec::new();
    for r in &rows {
        for k in r.per_variable.keys() {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    columns.push("aggregate".into());
    let value = |r: &MetricsReport, col: &str| -> Option<f64> {
        if col == "aggregate" {
            Some(r.aggregate)
        } else {
            r.per_variable.get(col).copied()
        }
    };
    let best: Vec<Option<f64>> = columns
        .iter()
        .map(|c| rows.iter().filter_map(|r| value(r, c)).reduce(f64::min))
        .collect();

    let id_width = rows.iter().map(|r| r.id.len()).chain(["model".len()]).max().unwrap_or(5);
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(13)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<id_width$}", "model");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');
    for r in &rows {
        let _ = write!(out, "{:<id_width$}", r.id);
        for ((c, w), b) in columns.iter().zip(&widths).zip(&best) {
            let cell = match value(r, c) {
                Some(v) if Some(v) == *b => format!("{v:.6e}*"),
                Some(v) => format!("{v:.6e} "),
                None => "- ".to_string(),
            };
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Mean absolute finite difference along both grid axes, per frame, for one
/// channel. Higher values mean sharper fields.
pub fn gradient_magnitude(seq: &GridSequence, channel: usize) -> Vec<f64> {
    let d = seq.dims();
    (0..d.t)
        .map(|t| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in 0..d.h {
                for x in 0..d.w {
                    let v = seq.get(t, y, x, channel) as f64;
                    if x + 1 < d.w {
                        sum += (seq.get(t, y, x + 1, channel) as f64 - v).abs();
                        n += 1;
                    }
                    if y + 1 < d.h {
                        sum += (seq.get(t, y + 1, x, channel) as f64 - v).abs();
                        n += 1;
                    }
                }
            }
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use crate::predict::Persistence;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn seq(values: Vec<f32>, c: usize) -> GridSequence {
        let n = values.len() / c;
        GridSequence::from_data(Dims::new(1, 1, n, c), values).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = seq(vec![0.25, 0.5, 0.625, 0.75], 2);
        assert_eq!(mse(&a, &a, None).unwrap(), 0.0);
        let b = seq(a.data().iter().map(|v| v + 0.1).collect(), 2);
        assert!((mse(&a, &b, None).unwrap() - 0.01).abs() < 1e-7);
        let e = seq(a.data().iter().map(|v| v + 0.125).collect(), 2);
        assert_eq!(mse(&a, &e, None).unwrap(), 0.015625);
        let c = seq(vec![0.25, 0.6, 0.625, 0.75], 2);
        assert!((mse(&a, &c, Some(1)).unwrap() - 0.005).abs() < 1e-7);
        assert_eq!(mse(&a, &c, Some(0)).unwrap(), 0.0);
        assert!(mse(&a, &c, Some(2)).is_err());
        assert!(mse(&a, &seq(vec![0.0; 2], 1), None).is_err());
    }

    #[test]
    fn persistence_on_static_data_is_exact() {
        let data = generate_synthetic(&SynthConfig {
            n_train: 2,
            n_validation: 3,
            height: 8,
            width: 8,
            velocity_max: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let r = evaluate(&Persistence { t_out: 8 }, &data, Split::Validation, "persistence").unwrap();
        assert_eq!(r.samples, 3);
        assert!(r.per_variable.values().all(|&v| v == 0.0), "{r:?}");
        assert!(evaluate(&Persistence { t_out: 8 }, &data, Split::Test, "p").is_err());
    }

    #[test]
    fn aggregate_is_mean() {
        let m: BTreeMap<String, f64> = [("a".to_string(), 0.1), ("b".to_string(), 0.3)].into();
        let r = MetricsReport::new("x", m, 4).unwrap();
        assert!((r.aggregate - 0.2).abs() < 1e-12);
        let back = MetricsReport::from_kv(&KeyValues::parse(&r.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back.id, "x");
        assert_eq!(back.samples, 4);
        for (k, v) in &r.per_variable {
            assert!((back.per_variable[k] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn table_orders_and_marks_best() {
        let mk = |id: &str, a: f64| {
            MetricsReport::new(id, [("rain".to_string(), a)].into(), 1).unwrap()
        };
        let t = compare_table(&[mk("zeta", 0.1), mk("alpha", 0.2)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("alpha"));
        assert!(lines[2].starts_with("zeta"));
        assert!(lines[2].contains('*') && !lines[1].contains('*'));
        assert_eq!(compare_table(&[mk("only", 0.5)]).lines().count(), 2);
    }

    #[test]
    fn gradient_magnitude_of_flat_field_is_zero() {
        let s = GridSequence::from_data(Dims::new(2, 3, 3, 1), vec![0.5; 18]).unwrap();
        assert_eq!(gradient_magnitude(&s, 0), vec![0.0, 0.0]);
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let s = GridSequence::from_data(Dims::new(1, 3, 3, 1), v).unwrap();
        assert!((gradient_magnitude(&s, 0)[0] - 4.0 / 12.0).abs() < 1e-12);
    }
}
