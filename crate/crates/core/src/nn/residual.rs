use rand::Rng;

use crate::error::Result;

use super::act::{leaky_relu_backward, leaky_relu_inplace};
use super::conv::Conv2d;
use super::params::ParameterStore;
use super::tensor::Tensor4;
use super::{Real, LEAKY_SLOPE};

/// `out = x + conv2(leaky(conv1(x)))`, channel count preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct ResidualCache<T> {
    x: Tensor4<T>,
    pre: Tensor4<T>,
    act: Tensor4<T>,
}

impl ResidualBlock {
    pub fn new<T: Real>(store: &mut ParameterStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(ResidualBlock {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), 3, channels, channels, rng)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), 3, channels, channels, rng)?,
            slope: LEAKY_SLOPE,
        })
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, x: &Tensor4<T>) -> Result<(Tensor4<T>, ResidualCache<T>)> {
        let pre = self.conv1.forward(store, x)?;
        let mut act = pre.clone();
        leaky_relu_inplace(act.data_mut(), T::lit(self.slope));
        let mut out = self.conv2.forward(store, &act)?;
        out.add_assign(x)?;
        Ok((
            out,
            ResidualCache {
                x: x.clone(),
                pre,
                act,
            },
        ))
    }

    pub fn backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        cache: &ResidualCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let mut g = self.conv2.backward(store, &cache.act, grad_out)?;
        leaky_relu_backward(g.data_mut(), cache.pre.data(), T::lit(self.slope));
        let mut gx = self.conv1.backward(store, &cache.x, &g)?;
        gx.add_assign(grad_out)?;
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<f64> {
        let n: usize = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_convs_skip_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParameterStore::<f64>::new();
        let block = ResidualBlock::new(&mut store, "r", 3, &mut rng).unwrap();
        for p in store.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random([1, 4, 4, 3], &mut rng);
        assert_eq!(block.forward(&store, &x).unwrap().0, x);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::<f64>::new();
        let block = ResidualBlock::new(&mut store, "r", 2, &mut rng).unwrap();
        let x = Tensor4::zeros(1, 4, 4, 2);
        assert!(block.forward(&store, &x).unwrap().0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::<f64>::new();
        let block = ResidualBlock::new(&mut store, "r", 2, &mut rng).unwrap();
        assert!(block.forward(&store, &Tensor4::zeros(1, 4, 4, 3)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::<f64>::new();
        let block = ResidualBlock::new(&mut store, "r", 3, &mut rng).unwrap();
        // non-zero biases so the rectifier sees both signs
        for p in store.params_mut() {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
        let x = random([2, 4, 4, 3], &mut rng);
        let g = random([2, 4, 4, 3], &mut rng);
        let np = store.count();
        let mut theta = store.flat_values();
        theta.extend_from_slice(x.data());
        let report = grad_check(
            &mut theta,
            |t| {
                let mut s = store.clone();
                s.set_flat_values(&t[..np])?;
                s.zero_grad();
                let xt = Tensor4::from_vec(x.shape(), t[np..].to_vec())?;
                let (y, cache) = block.forward(&s, &xt)?;
                let loss = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let gx = block.backward(&mut s, &cache, &g)?;
                let mut flat = s.flat_grads();
                flat.extend_from_slice(gx.data());
                Ok((loss, flat))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
