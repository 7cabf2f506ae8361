//! Convolutional GRU cell.
//!
//! ```text
//! z  = σ(G_z([x, h]))
//! r  = σ(G_r([x, h]))
//! h̃  = tanh(G_h([x, r ⊙ h]))
//! h' = (1 - z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Each gate transform `G` is either a single 3×3 convolution or, for the
//! residual variant, a 3×3 projection followed by a [`ResidualBlock`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{config_err, shape_err, Error, Result};

use super::act::{sigmoid_backward, sigmoid_inplace, tanh_backward, tanh_inplace};
use super::conv::Conv2d;
use super::params::ParameterStore;
use super::residual::{ResidualBlock, ResidualCache};
use super::tensor::Tensor4;
use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateType {
    Conv,
    Residual,
}

impl GateType {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateType::Conv => "conv",
            GateType::Residual => "residual",
        }
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(GateType::Conv),
            "residual" => Ok(GateType::Residual),
            _ => Err(config_err!("unknown gate type {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum GateTransform {
    Conv(Conv2d),
    Residual { proj: Conv2d, block: ResidualBlock },
}

#[derive(Clone, Debug)]
enum GateCache<T> {
    Conv,
    Residual { block: ResidualCache<T> },
}

impl GateTransform {
    fn new<T: Real>(
        store: &mut ParameterStore<T>,
        name: &str,
        gate: GateType,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(match gate {
            GateType::Conv => GateTransform::Conv(Conv2d::new(store, name, 3, cin, cout, rng)?),
            GateType::Residual => GateTransform::Residual {
                proj: Conv2d::new(store, &format!("{name}.proj"), 3, cin, cout, rng)?,
                block: ResidualBlock::new(store, &format!("{name}.res"), cout, rng)?,
            },
        })
    }

    fn param_count(&self) -> usize {
        match self {
            GateTransform::Conv(c) => c.param_count(),
            GateTransform::Residual { proj, block } => proj.param_count() + block.param_count(),
        }
    }

    fn forward<T: Real>(&self, store: &ParameterStore<T>, x: &Tensor4<T>) -> Result<(Tensor4<T>, GateCache<T>)> {
        match self {
            GateTransform::Conv(c) => Ok((c.forward(store, x)?, GateCache::Conv)),
            GateTransform::Residual { proj, block } => {
                let proj_out = proj.forward(store, x)?;
                let (out, bc) = block.forward(store, &proj_out)?;
                Ok((out, GateCache::Residual { block: bc }))
            }
        }
    }

    fn backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        x: &Tensor4<T>,
        cache: &GateCache<T>,
        g: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        match (self, cache) {
            (GateTransform::Conv(c), GateCache::Conv) => c.backward(store, x, g),
            (GateTransform::Residual { proj, block }, GateCache::Residual { block: bc }) => {
                let gp = block.backward(store, bc, g)?;
                proj.backward(store, x, &gp)
            }
            _ => Err(shape_err!("gate cache does not match gate type")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGru {
    pub input_channels: usize,
    pub hidden_channels: usize,
    pub gate_type: GateType,
    update: GateTransform,
    reset: GateTransform,
    candidate: GateTransform,
}

/// Activations saved by [`ConvGru::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct GruCache<T> {
    h: Tensor4<T>,
    xh: Tensor4<T>,
    xrh: Tensor4<T>,
    z: Tensor4<T>,
    r: Tensor4<T>,
    cand: Tensor4<T>,
    gz: GateCache<T>,
    gr: GateCache<T>,
    gc: GateCache<T>,
}

impl<T: Real> GruCache<T> {
    /// Shape of the hidden state this step consumed and produced.
    pub fn state_shape(&self) -> [usize; 4] {
        self.h.shape()
    }
}

impl ConvGru {
    /// Registers `<name>.z`, `<name>.r` and `<name>.h` gate parameters.
    /// `input_channels` may be zero for a cell driven by its state alone.
    pub fn new<T: Real>(
        store: &mut ParameterStore<T>,
        name: &str,
        input_channels: usize,
        hidden_channels: usize,
        gate_type: GateType,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if hidden_channels == 0 {
            return Err(config_err!("GRU {name}: hidden channels must be positive"));
        }
        let cin = input_channels + hidden_channels;
        Ok(ConvGru {
            input_channels,
            hidden_channels,
            gate_type,
            update: GateTransform::new(store, &format!("{name}.z"), gate_type, cin, hidden_channels, rng)?,
            reset: GateTransform::new(store, &format!("{name}.r"), gate_type, cin, hidden_channels, rng)?,
            candidate: GateTransform::new(store, &format!("{name}.h"), gate_type, cin, hidden_channels, rng)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.update.param_count() + self.reset.param_count() + self.candidate.param_count()
    }

    fn check<T: Real>(&self, x: &Tensor4<T>, h: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.input_channels || h.channels() != self.hidden_channels || !x.same_spatial(h) {
            return Err(shape_err!(
                "GRU expects x(.., {}) and h(.., {}) on one grid, got {:?} and {:?}",
                self.input_channels,
                self.hidden_channels,
                x.shape(),
                h.shape()
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParameterStore<T>,
        x: &Tensor4<T>,
        h: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, GruCache<T>)> {
        self.check(x, h)?;
        let xh = Tensor4::concat_channels(x, h)?;
        let (mut z, gz) = self.update.forward(store, &xh)?;
        sigmoid_inplace(z.data_mut());
        let (mut r, gr) = self.reset.forward(store, &xh)?;
        sigmoid_inplace(r.data_mut());
        let rh = r.zip_map(h, |a, b| a * b)?;
        let xrh = Tensor4::concat_channels(x, &rh)?;
        let (mut cand, gc) = self.candidate.forward(store, &xrh)?;
        tanh_inplace(cand.data_mut());
        let mut h_new = h.clone();
        for ((hn, &zv), &cv) in h_new.data_mut().iter_mut().zip(z.data()).zip(cand.data()) {
            *hn = (T::one() - zv) * *hn + zv * cv;
        }
        Ok((
            h_new,
            GruCache {
                h: h.clone(),
                xh,
                xrh,
                z,
                r,
                cand,
                gz,
                gr,
                gc,
            },
        ))
    }

    /// Returns `(grad_x, grad_h)` and accumulates parameter gradients.
    pub fn backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        cache: &GruCache<T>,
        grad_h_new: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Tensor4<T>)> {
        grad_h_new.check_shape(cache.h.shape(), "GRU grad_h")?;
        let ci = self.input_channels;
        let n = grad_h_new.len();
        let (g, h, z, c) = (grad_h_new.data(), cache.h.data(), cache.z.data(), cache.cand.data());
        let mut dz = vec![T::zero(); n];
        let mut dc = vec![T::zero(); n];
        let mut dh = vec![T::zero(); n];
        for i in 0..n {
            dz[i] = g[i] * (c[i] - h[i]);
            dc[i] = g[i] * z[i];
            dh[i] = g[i] * (T::one() - z[i]);
        }
        let shape = cache.h.shape();

        tanh_backward(&mut dc, c);
        let dc = Tensor4::from_vec(shape, dc)?;
        let dxrh = self.candidate.backward(store, &cache.xrh, &cache.gc, &dc)?;
        let (mut dx, drh) = dxrh.split_channels(ci);
        let mut dr = drh.zip_map(&cache.h, |a, b| a * b)?;
        for ((d, &a), &rv) in dh.iter_mut().zip(drh.data()).zip(cache.r.data()) {
            *d += a * rv;
        }

        sigmoid_backward(dr.data_mut(), cache.r.data());
        let dxh_r = self.reset.backward(store, &cache.xh, &cache.gr, &dr)?;
        sigmoid_backward(&mut dz, z);
        let dz = Tensor4::from_vec(shape, dz)?;
        let mut dxh = self.update.backward(store, &cache.xh, &cache.gz, &dz)?;
        dxh.add_assign(&dxh_r)?;

        let (dx2, dh2) = dxh.split_channels(ci);
        dx.add_assign(&dx2)?;
        let mut dh = Tensor4::from_vec(shape, dh)?;
        dh.add_assign(&dh2)?;
        Ok((dx, dh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor4<f64> {
        let n: usize = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    fn cell(gate: GateType, cin: usize, ch: usize, seed: u64) -> (ParameterStore<f64>, ConvGru) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let gru = ConvGru::new(&mut store, "g", cin, ch, gate, &mut rng).unwrap();
        (store, gru)
    }

    #[test]
    fn zero_weights_halve_state() {
        for gate in [GateType::Conv, GateType::Residual] {
            let (mut store, gru) = cell(gate, 2, 3, 0);
            for p in store.params_mut() {
                p.value.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let x = random([1, 4, 4, 2], -1.0, 1.0, &mut rng);
            let h = random([1, 4, 4, 3], -1.0, 1.0, &mut rng);
            let (h1, _) = gru.forward(&store, &x, &h).unwrap();
            for (a, b) in h1.data().iter().zip(h.data()) {
                assert!((a - 0.5 * b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn saturated_update_gate_carries_state() {
        let (mut store, gru) = cell(GateType::Conv, 2, 3, 1);
        let bz = store.id("g.z.bias").unwrap();
        store.value_mut(bz).iter_mut().for_each(|v| *v = -60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random([1, 4, 4, 2], -1.0, 1.0, &mut rng);
        let h = random([1, 4, 4, 3], -1.0, 1.0, &mut rng);
        let (h1, _) = gru.forward(&store, &x, &h).unwrap();
        for (a, b) in h1.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn state_stays_in_unit_box() {
        let (store, gru) = cell(GateType::Residual, 1, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = random([1, 6, 6, 2], -1.0, 1.0, &mut rng);
        for _ in 0..10 {
            let x = random([1, 6, 6, 1], -5.0, 5.0, &mut rng);
            h = gru.forward(&store, &x, &h).unwrap().0;
            assert!(h.data().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn shape_mismatch() {
        let (store, gru) = cell(GateType::Conv, 2, 3, 3);
        let x = Tensor4::zeros(1, 4, 4, 2);
        assert!(gru.forward(&store, &x, &Tensor4::zeros(1, 4, 4, 2)).is_err());
        assert!(gru.forward(&store, &x, &Tensor4::zeros(1, 2, 4, 3)).is_err());
    }

    #[test]
    fn stateless_input_cell() {
        let (store, gru) = cell(GateType::Conv, 0, 2, 4);
        let h = Tensor4::filled([1, 2, 2, 2], 0.3);
        let (h1, _) = gru.forward(&store, &Tensor4::zeros(1, 2, 2, 0), &h).unwrap();
        assert_eq!(h1.shape(), [1, 2, 2, 2]);
    }

    fn check_gradients(gate: GateType, seed: u64) {
        let (cin, ch) = (2, 3);
        let (mut store, gru) = cell(gate, cin, ch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for p in store.params_mut() {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
        }
        let x = random([2, 4, 4, cin], -1.0, 1.0, &mut rng);
        let h = random([2, 4, 4, ch], -1.0, 1.0, &mut rng);
        let g = random([2, 4, 4, ch], -1.0, 1.0, &mut rng);
        let (np, nx) = (store.count(), x.len());
        let mut theta = store.flat_values();
        theta.extend_from_slice(x.data());
        theta.extend_from_slice(h.data());
        let report = grad_check(
            &mut theta,
            |t| {
                let mut s = store.clone();
                s.set_flat_values(&t[..np])?;
                s.zero_grad();
                let xt = Tensor4::from_vec(x.shape(), t[np..np + nx].to_vec())?;
                let ht = Tensor4::from_vec(h.shape(), t[np + nx..].to_vec())?;
                let (y, cache) = gru.forward(&s, &xt, &ht)?;
                let loss = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let (gx, gh) = gru.backward(&mut s, &cache, &g)?;
                let mut flat = s.flat_grads();
                flat.extend_from_slice(gx.data());
                flat.extend_from_slice(gh.data());
                Ok((loss, flat))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{gate}: {report:?}");
    }

    #[test]
    fn conv_gate_gradients() {
        check_gradients(GateType::Conv, 20);
    }

    #[test]
    fn residual_gate_gradients() {
        check_gradients(GateType::Residual, 21);
    }
}
