//! Ensemble weights fitted by least squares over streamed member predictions.
//!
//! The design accumulates `A = XᵀX`, `b = Xᵀy` and `yᵀy` pixel by pixel in
//! 64-bit, so `X` (one row per pixel, one column per member) is never stored.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, shape_err, Error, Result};
use crate::grid::GridSequence;
use crate::predict::Predictor;

/// Default ridge strength relative to the mean diagonal of `A`.
pub const DEFAULT_LAMBDA_SCALE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleDesign {
    p: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    yy: f64,
    n: u64,
}

impl EnsembleDesign {
    pub fn new(p: usize) -> Self {
        EnsembleDesign {
            p,
            a: vec![0.0; p * p],
            b: vec![0.0; p],
            yy: 0.0,
            n: 0,
        }
    }

    pub fn members(&self) -> usize {
        self.p
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Row-major `p×p` Gram matrix.
    pub fn gram(&self) -> &[f64] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn target_energy(&self) -> f64 {
        self.yy
    }

    /// Adds one row per element: `xs[k][i]` is member `k`'s value at position `i`.
    pub fn accumulate_values(&mut self, xs: &[&[f32]], y: &[f32]) -> Result<()> {
        if xs.len() != self.p {
            return Err(config_err!("design has {} members, got {} predictions", self.p, xs.len()));
        }
        if let Some(x) = xs.iter().find(|x| x.len() != y.len()) {
            return Err(shape_err!("prediction length {} vs truth length {}", x.len(), y.len()));
        }
        let p = self.p;
        let mut row = vec![0.0f64; p];
        for (i, &yv) in y.iter().enumerate() {
            for (r, x) in row.iter_mut().zip(xs) {
                *r = x[i] as f64;
            }
            let yv = yv as f64;
            for j in 0..p {
                let rj = row[j];
                self.b[j] += rj * yv;
                // fill the upper triangle, mirrored below after the loop
                for k in j..p {
                    self.a[j * p + k] += rj * row[k];
                }
            }
            self.yy += yv * yv;
        }
        for j in 0..p {
            for k in 0..j {
                self.a[j * p + k] = self.a[k * p + j];
            }
        }
        self.n += y.len() as u64;
        Ok(())
    }

    pub fn accumulate(&mut self, member_preds: &[&GridSequence], truth: &GridSequence) -> Result<()> {
        for m in member_preds {
            if m.dims() != truth.dims() {
                return Err(shape_err!("member prediction {} vs truth {}", m.dims(), truth.dims()));
            }
        }
        let xs: Vec<&[f32]> = member_preds.iter().map(|m| m.data()).collect();
        self.accumulate_values(&xs, truth.data())
    }

    /// Adds a partial design built over other samples.
    pub fn merge(&mut self, other: &EnsembleDesign) -> Result<()> {
        if other.p != self.p {
            return Err(config_err!("cannot merge designs with {} and {} members", self.p, other.p));
        }
        self.a.iter_mut().zip(&other.a).for_each(|(x, y)| *x += y);
        self.b.iter_mut().zip(&other.b).for_each(|(x, y)| *x += y);
        self.yy += other.yy;
        self.n += other.n;
        Ok(())
    }

    /// Mean squared error of the (unclipped) weighted sum over the accumulated rows.
    pub fn mse_of(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.p {
            return Err(config_err!("{} weights for {} members", w.len(), self.p));
        }
        if self.n == 0 {
            return Err(Error::Statistics("empty design".into()));
        }
        let mut quad = 0.0;
        for j in 0..self.p {
            for k in 0..self.p {
                quad += w[j] * self.a[j * self.p + k] * w[k];
            }
        }
        let lin: f64 = w.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        Ok(((self.yy - 2.0 * lin + quad) / self.n as f64).max(0.0))
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.p).map(|j| self.a[j * self.p + j]).sum::<f64>() / self.p.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    /// `λ = scale · mean(diag A)`.
    Relative(f64),
    Absolute(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Relative(DEFAULT_LAMBDA_SCALE)
    }
}

impl LambdaRule {
    pub fn lambda(&self, design: &EnsembleDesign) -> Result<f64> {
        let l = match *self {
            LambdaRule::Relative(s) => s * design.mean_diagonal(),
            LambdaRule::Absolute(l) => l,
        };
        if l >= 0.0 && l.is_finite() {
            Ok(l)
        } else {
            Err(config_err!("lambda must be finite and non-negative, got {l}"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Equal,
    Ridge,
    Constrained,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Equal => "equal",
            Method::Ridge => "ridge",
            Method::Constrained => "constrained",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(Method::Equal),
            "ridge" => Ok(Method::Ridge),
            "constrained" => Ok(Method::Constrained),
            _ => Err(config_err!("unknown ensemble method {s:?} (expected equal, ridge or constrained)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub method: Method,
    pub lambda: f64,
    /// Lagrange multiplier of the sum constraint.
    pub mu: Option<f64>,
}

impl WeightVector {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn equal_weights(p: usize) -> Result<WeightVector> {
    if p == 0 {
        return Err(config_err!("an ensemble needs at least one member"));
    }
    Ok(WeightVector {
        weights: vec![1.0 / p as f64; p],
        method: Method::Equal,
        lambda: 0.0,
        mu: None,
    })
}

/// Solves `M x = v` (row-major `M`) by Gaussian elimination with partial pivoting.
pub fn solve_dense(m: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = v.len();
    if m.len() != n * n {
        return Err(shape_err!("matrix with {} entries is not {n}x{n}", m.len()));
    }
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !scale.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite linear system".into()));
    }
    let tol = 1e-12 * scale;
    let mut a = m.to_vec();
    let mut x = v.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if !(a[piv * n + col].abs() > tol) {
            return Err(Error::Numeric(format!("singular system (pivot {:e} in column {col})", a[piv * n + col])));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (x[r] - s) / a[r * n + r];
    }
    Ok(x)
}

fn regularized(design: &EnsembleDesign, rule: LambdaRule) -> Result<(Vec<f64>, f64)> {
    if design.p == 0 {
        return Err(config_err!("an ensemble needs at least one member"));
    }
    if design.n == 0 {
        return Err(Error::Statistics("no rows accumulated".into()));
    }
    let lambda = rule.lambda(design)?;
    let mut a = design.a.clone();
    for j in 0..design.p {
        a[j * design.p + j] += lambda;
    }
    Ok((a, lambda))
}

/// `w = (A + λI)⁻¹ b`.
pub fn solve_ridge(design: &EnsembleDesign, rule: LambdaRule) -> Result<WeightVector> {
    let (a, lambda) = regularized(design, rule)?;
    Ok(WeightVector {
        weights: solve_dense(&a, &design.b)?,
        method: Method::Ridge,
        lambda,
        mu: None,
    })
}

/// Minimizes the regularized squared error subject to `Σw = 1` through the
/// bordered system `[[A+λI, −q/2], [qᵀ, 0]] [w; μ] = [b; 1]`.
pub fn solve_constrained(design: &EnsembleDesign, rule: LambdaRule) -> Result<WeightVector> {
    let (a, lambda) = regularized(design, rule)?;
    let p = design.p;
    let n = p + 1;
    let mut m = vec![0.0; n * n];
    for j in 0..p {
        m[j * n..j * n + p].copy_from_slice(&a[j * p..(j + 1) * p]);
        m[j * n + p] = -0.5;
        m[p * n + j] = 1.0;
    }
    let mut v = design.b.clone();
    v.push(1.0);
    let mut sol = solve_dense(&m, &v)?;
    let mu = sol.pop();
    Ok(WeightVector {
        weights: sol,
        method: Method::Constrained,
        lambda,
        mu,
    })
}

pub fn fit_weights(design: &EnsembleDesign, method: Method, rule: LambdaRule) -> Result<WeightVector> {
    match method {
        Method::Equal => equal_weights(design.p),
        Method::Ridge => solve_ridge(design, rule),
        Method::Constrained => solve_constrained(design, rule),
    }
}

/// Pixelwise weighted sum of member predictions, clipped to `[0, 1]`.
pub fn combine(preds: &[&GridSequence], weights: &[f64]) -> Result<GridSequence> {
    if preds.is_empty() || preds.len() != weights.len() {
        return Err(config_err!("{} predictions for {} weights", preds.len(), weights.len()));
    }
    let first = preds[0];
    for p in preds {
        first.check_same_shape(p)?;
    }
    let mut acc = vec![0.0f64; first.data().len()];
    for (p, &w) in preds.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(p.data()) {
            *a += w * v as f64;
        }
    }
    let data = acc.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    GridSequence::new(first.dims(), data, first.variable_names().to_vec(), first.step_minutes())
}

/// Members combined with fixed weights.
pub struct WeightedEnsemble<P> {
    members: Vec<P>,
    weights: WeightVector,
}

impl<P: Predictor> WeightedEnsemble<P> {
    pub fn new(members: Vec<P>, weights: WeightVector) -> Result<Self> {
        if members.is_empty() || members.len() != weights.len() {
            return Err(config_err!("{} members for {} weights", members.len(), weights.len()));
        }
        Ok(WeightedEnsemble { members, weights })
    }

    pub fn members(&self) -> &[P] {
        &self.members
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }
}

impl<P: Predictor> Predictor for WeightedEnsemble<P> {
    fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        Ok(self.predict_many(&[input])?.remove(0))
    }

    fn predict_many(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.predict_many(inputs))
            .collect::<Result<Vec<_>>>()?;
        (0..inputs.len())
            .map(|i| {
                let preds: Vec<&GridSequence> = per_member.iter().map(|p| &p[i]).collect();
                combine(&preds, &self.weights.weights)
            })
            .collect()
    }
}

/// Accumulates a design by running every member on every sample.
pub fn design_from_predictors<P: Predictor>(
    members: &[P],
    samples: &[(&GridSequence, &GridSequence)],
) -> Result<EnsembleDesign> {
    let mut design = EnsembleDesign::new(members.len());
    let inputs: Vec<&GridSequence> = samples.iter().map(|s| s.0).collect();
    let per_member = members
        .iter()
        .map(|m| m.predict_many(&inputs))
        .collect::<Result<Vec<_>>>()?;
    for (i, (_, truth)) in samples.iter().enumerate() {
        let preds: Vec<&GridSequence> = per_member.iter().map(|p| &p[i]).collect();
        design.accumulate(&preds, truth)?;
    }
    Ok(design)
}

/// Weights file: one `name weight` line per member followed by
/// `lambda`, `method`, `sum` and (constrained only) `mu` lines.
pub fn write_weights(names: &[String], w: &WeightVector) -> Result<String> {
    if names.len() != w.len() {
        return Err(config_err!("{} names for {} weights", names.len(), w.len()));
    }
    let reserved = ["lambda", "method", "sum", "mu"];
    let mut out = String::new();
    for (n, v) in names.iter().zip(&w.weights) {
        if n.is_empty() || n.contains(char::is_whitespace) || reserved.contains(&n.as_str()) {
            return Err(config_err!("invalid member name {n:?}"));
        }
        out.push_str(&format!("{n} {v:.17e}\n"));
    }
    out.push_str(&format!("lambda {:.17e}\n", w.lambda));
    out.push_str(&format!("method {}\n", w.method));
    out.push_str(&format!("sum {:.17e}\n", w.sum()));
    if let Some(mu) = w.mu {
        out.push_str(&format!("mu {mu:.17e}\n"));
    }
    Ok(out)
}

pub fn parse_weights(text: &str) -> Result<(Vec<String>, WeightVector)> {
    let mut names = Vec::new();
    let mut weights = Vec::new();
    let (mut lambda, mut method, mut mu) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::format("weights", format!("line {}: expected `name value`", i + 1)))?;
        let value = value.trim();
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::format("weights", format!("line {}: bad number {value:?}", i + 1)))
        };
        match key {
            "lambda" => lambda = Some(num()?),
            "mu" => mu = Some(num()?),
            "sum" => {
                num()?;
            }
            "method" => method = Some(value.parse::<Method>().map_err(|e| Error::format("weights", e.to_string()))?),
            _ => {
                names.push(key.to_string());
                weights.push(num()?);
            }
        }
    }
    if weights.is_empty() {
        return Err(Error::format("weights", "no member weights"));
    }
    let method = method.ok_or_else(|| Error::format("weights", "missing method line"))?;
    Ok((
        names,
        WeightVector {
            weights,
            method,
            lambda: lambda.unwrap_or(0.0),
            mu,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    fn design(rows: &[&[f32]], y: &[f32]) -> EnsembleDesign {
        let p = rows[0].len();
        let cols: Vec<Vec<f32>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let xs: Vec<&[f32]> = cols.iter().map(|c| c.as_slice()).collect();
        let mut d = EnsembleDesign::new(p);
        d.accumulate_values(&xs, y).unwrap();
        d
    }

    #[test]
    fn accumulate_outer_products() {
        let d = design(&[&[1.0, 0.0]], &[1.0]);
        assert_eq!(d.gram(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.rhs(), &[1.0, 0.0]);
        let mut e = EnsembleDesign::new(2);
        e.accumulate_values(&[&[], &[]], &[]).unwrap();
        assert_eq!(e, EnsembleDesign::new(2));
        let d = design(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]], &[1.0, 1.0, 2.0]);
        assert_eq!(d.gram(), &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(d.rhs(), &[3.0, 3.0]);
    }

    #[test]
    fn dense_solver() {
        assert_eq!(solve_dense(&[1.0, 0.0, 0.0, 1.0], &[4.0, 5.0]).unwrap(), vec![4.0, 5.0]);
        let x = solve_dense(&[2.0, 1.0, 1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(matches!(solve_dense(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0]), Err(Error::Numeric(_))));
        // needs a row swap
        let x = solve_dense(&[0.0, 1.0, 1.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
        assert!(solve_dense(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ridge_examples() {
        let mut id = EnsembleDesign::new(2);
        id.accumulate_values(&[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0]).unwrap();
        let w = solve_ridge(&id, LambdaRule::Absolute(0.0)).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);

        let d = design(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]], &[1.0, 1.0, 2.0]);
        let w = solve_ridge(&d, LambdaRule::default()).unwrap();
        assert_eq!(w.lambda, 1e-4 * 2.0);
        assert!(w.weights.iter().all(|v| (v - 1.0).abs() < 1e-3), "{w:?}");

        let dup = design(&[&[0.2, 0.2], &[0.7, 0.7], &[0.4, 0.4]], &[0.3, 0.6, 0.5]);
        let w = solve_ridge(&dup, LambdaRule::default()).unwrap();
        // elimination order breaks the symmetry only at rounding level
        assert!((w.weights[0] - w.weights[1]).abs() <= 1e-12 * w.weights[0].abs(), "{w:?}");
        assert!(solve_ridge(&EnsembleDesign::new(2), LambdaRule::default()).is_err());
    }

    #[test]
    fn constrained_examples() {
        let d = design(&[&[1.0, 0.0], &[0.0, 2.0]], &[1.0, 1.0]);
        let w = solve_constrained(&d, LambdaRule::Absolute(0.0)).unwrap();
        assert!((w.weights[0] - 0.6).abs() < 1e-12 && (w.weights[1] - 0.4).abs() < 1e-12, "{w:?}");
        assert!(w.mu.is_some());

        let one = design(&[&[0.3], &[0.9]], &[0.1, 0.2]);
        assert!((solve_constrained(&one, LambdaRule::default()).unwrap().weights[0] - 1.0).abs() < 1e-12);

        let dup = design(&[&[0.2, 0.2], &[0.7, 0.7]], &[0.3, 0.6]);
        let w = solve_constrained(&dup, LambdaRule::default()).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12 && (w.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mse_of_matches_direct_computation() {
        let d = design(&[&[0.1, 0.5], &[0.3, 0.2], &[0.9, 0.6]], &[0.2, 0.4, 0.7]);
        let w = [0.3, 0.6];
        let rows = [[0.1f32, 0.5], [0.3, 0.2], [0.9, 0.6]];
        let y = [0.2f32, 0.4, 0.7];
        let direct: f64 = rows
            .iter()
            .zip(y)
            .map(|(r, y)| (w[0] * r[0] as f64 + w[1] * r[1] as f64 - y as f64).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((d.mse_of(&w).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn combine_weights_and_clips() {
        let a = GridSequence::from_data(Dims::new(1, 1, 2, 1), vec![0.2, 0.9]).unwrap();
        let b = GridSequence::from_data(Dims::new(1, 1, 2, 1), vec![0.4, 0.9]).unwrap();
        let c = combine(&[&a, &b], &[0.5, 0.5]).unwrap();
        assert!((c.data()[0] - 0.3).abs() < 1e-7);
        assert_eq!(combine(&[&a, &b], &[1.0, 0.0]).unwrap(), a);
        assert_eq!(combine(&[&a, &b], &[1.0, 1.0]).unwrap().data()[1], 1.0);
        assert!(combine(&[&a, &b], &[1.0]).is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let w = WeightVector {
            weights: vec![0.25, 0.8, -0.0664],
            method: Method::Constrained,
            lambda: 1e-5,
            mu: Some(-0.01),
        };
        let names: Vec<String> = ["deep", "shallow", "cond"].iter().map(|s| s.to_string()).collect();
        let text = write_weights(&names, &w).unwrap();
        assert!(text.contains("method constrained\n"));
        let (n2, w2) = parse_weights(&text).unwrap();
        assert_eq!(n2, names);
        assert_eq!(w2, w);

        let eq = equal_weights(3).unwrap();
        let text = write_weights(&names, &eq).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("3.33333333")).count(), 3);
        assert!(!text.contains("mu "));
        assert!(write_weights(&["sum".to_string()], &equal_weights(1).unwrap()).is_err());
        assert!(parse_weights("a 1\n").is_err());
        assert!(parse_weights("a x\nmethod equal\n").is_err());
    }
}
