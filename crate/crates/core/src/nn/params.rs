use rand::Rng;

use crate::error::{config_err, shape_err, Result};

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Named parameter tensors with paired gradient buffers, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<T>) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(config_err!("duplicate parameter name {name:?}"));
        }
        let len: usize = shape.iter().product();
        if value.len() != len {
            return Err(shape_err!(
                "parameter {name}: {} values for shape {shape:?}",
                value.len()
            ));
        }
        self.params.push(Param {
            name,
            shape: shape.to_vec(),
            grad: vec![T::zero(); len],
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Uniform in `±gain·sqrt(3 / fan_in)`, i.e. variance `gain² / fan_in`.
    pub fn add_scaled_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
        let value = (0..len)
            .map(|_| T::lit(rng.random_range(-bound..=bound)))
            .collect();
        self.add(name, shape, value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        self.add(name, shape, vec![T::zero(); len])
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].grad
    }

    /// Value of `weight` with mutable gradients of `weight` and `bias`.
    pub(crate) fn conv_buffers(&mut self, weight: ParamId, bias: ParamId) -> (&[T], &mut [T], &mut [T]) {
        let [w, b] = self
            .params
            .get_disjoint_mut([weight.0, bias.0])
            .expect("distinct parameter ids");
        (&w.value, &mut w.grad, &mut b.grad)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn flat_values(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.count() {
            return Err(shape_err!(
                "{} flat values for {} parameters",
                values.len(),
                self.count()
            ));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| {
                let g = g.to_f64().unwrap();
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies every gradient by `s`.
    pub fn scale_grads(&mut self, s: T) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: conv(&p.value),
                    grad: conv(&p.grad),
                })
                .collect(),
        }
    }
}
