//! Adam and AdaBelief with bias correction and optional decoupled weight decay.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::kv::{KeyValues, KvReader};
use crate::nn::{ParameterStore, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Adam,
    AdaBelief,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Adam => "adam",
            Method::AdaBelief => "adabelief",
        }
    }

    pub fn default_eps(&self) -> f64 {
        match self {
            Method::Adam => 1e-7,
            Method::AdaBelief => 1e-14,
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
            "adam" => Ok(Method::Adam),
            "adabelief" => Ok(Method::AdaBelief),
            _ => Err(config_err!("unknown optimizer {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adabelief()
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        OptimizerConfig {
            method,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: method.default_eps(),
            weight_decay: 0.0,
        }
    }

    pub fn adam() -> Self {
        Self::with_method(Method::Adam)
    }

    pub fn adabelief() -> Self {
        Self::with_method(Method::AdaBelief)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err!("optimizer.lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err!("optimizer.{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(config_err!("optimizer.eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(config_err!("optimizer.weight_decay must be non-negative"));
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("optimizer.method", self.method);
        kv.set("optimizer.lr", self.lr);
        kv.set("optimizer.beta1", self.beta1);
        kv.set("optimizer.beta2", self.beta2);
        kv.set("optimizer.eps", self.eps);
        kv.set("optimizer.weight_decay", self.weight_decay);
    }

    /// Reads the `optimizer.*` keys; `eps` defaults per method.
    pub fn read_kv(r: &mut KvReader<'_>) -> Result<Self> {
        let method: Method = r.or("optimizer.method", Method::AdaBelief)?;
        let d = Self::with_method(method);
        let cfg = OptimizerConfig {
            method,
            lr: r.or("optimizer.lr", d.lr)?,
            beta1: r.or("optimizer.beta1", d.beta1)?,
            beta2: r.or("optimizer.beta2", d.beta2)?,
            eps: r.or("optimizer.eps", d.eps)?,
            weight_decay: r.or("optimizer.weight_decay", d.weight_decay)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_finite<T: Real>(grads: &[T]) -> Result<()> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite gradient at index {i}"))),
        None => Ok(()),
    }
}

fn check_lengths<T>(params: &[T], grads: &[T], m: &[T], s: &[T]) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || s.len() != n {
        return Err(Error::Shape(format!(
            "optimizer buffers {}/{}/{}/{} differ",
            n,
            grads.len(),
            m.len(),
            s.len()
        )));
    }
    Ok(())
}

/// One Adam update at step `t` (already incremented, `t >= 1`).
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params, grads, m, v)?;
    check_finite(grads)?;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let decay = T::one() - T::lit(cfg.lr * cfg.weight_decay);
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        if cfg.weight_decay > 0.0 {
            params[i] *= decay;
        }
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One AdaBelief update at step `t`; `eps` is also added inside the belief accumulator.
pub fn adabelief_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    s: &mut [T],
    t: u64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params, grads, m, s)?;
    check_finite(grads)?;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let decay = T::one() - T::lit(cfg.lr * cfg.weight_decay);
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        let dev = g - m[i];
        s[i] = b2 * s[i] + (one - b2) * dev * dev + eps;
        let m_hat = m[i] / c1;
        let s_hat = s[i] / c2;
        if cfg.weight_decay > 0.0 {
            params[i] *= decay;
        }
        params[i] -= lr * m_hat / (s_hat.sqrt() + eps);
    }
    Ok(())
}

/// First and second moment buffers for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub t: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T> {
    pub cfg: OptimizerConfig,
    pub state: OptimizerState<T>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig, store: &ParameterStore<T>) -> Result<Self> {
        cfg.validate()?;
        let zeros = |p: &crate::nn::params::Param<T>| vec![T::zero(); p.value.len()];
        Ok(Optimizer {
            state: OptimizerState {
                t: 0,
                first: store.params().iter().map(zeros).collect(),
                second: store.params().iter().map(zeros).collect(),
            },
            cfg,
        })
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Applies one update using the gradients currently held by `store`.
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        if store.len() != self.state.first.len() {
            return Err(Error::Shape("optimizer state does not match parameter store".into()));
        }
        for p in store.params() {
            check_finite(&p.grad).map_err(|e| Error::Numeric(format!("{}: {e}", p.name)))?;
        }
        self.state.t += 1;
        let t = self.state.t;
        for ((p, m), s) in store
            .params_mut()
            .iter_mut()
            .zip(&mut self.state.first)
            .zip(&mut self.state.second)
        {
            match self.cfg.method {
                Method::Adam => adam_step(&mut p.value, &p.grad, m, s, t, &self.cfg)?,
                Method::AdaBelief => adabelief_step(&mut p.value, &p.grad, m, s, t, &self.cfg)?,
            }
        }
        Ok(())
    }
}
