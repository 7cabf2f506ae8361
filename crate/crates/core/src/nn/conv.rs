//! Stride-1, same-padded 2-D convolution with odd square kernels.
//!
//! Kernels are laid out `[K, K, Cin, Cout]` so the innermost loops run over
//! contiguous output (forward, weight gradient) or input (data gradient) channels.

use rand::Rng;

use crate::error::{shape_err, Result};

use super::params::{ParamId, ParameterStore};
use super::tensor::Tensor4;
use super::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_kernel: Vec<T>,
    pub grad_bias: Vec<T>,
}

fn check_kernel<T: Real>(x: &Tensor4<T>, kernel: &[T], bias_len: usize, k: usize, cout: usize) -> Result<()> {
    if k.is_multiple_of(2) {
        return Err(shape_err!("kernel size must be odd, got {k}"));
    }
    let cin = x.channels();
    if kernel.len() != k * k * cin * cout {
        return Err(shape_err!(
            "kernel has {} weights, expected {k}x{k}x{cin}x{cout} = {}",
            kernel.len(),
            k * k * cin * cout
        ));
    }
    if bias_len != cout {
        return Err(shape_err!("bias has {bias_len} entries for {cout} output channels"));
    }
    Ok(())
}

pub fn conv2d_forward<T: Real>(x: &Tensor4<T>, kernel: &[T], bias: &[T], k: usize, cout: usize) -> Result<Tensor4<T>> {
    check_kernel(x, kernel, bias.len(), k, cout)?;
    let [n, h, w, _] = x.shape();
    let mut out = Tensor4::zeros(n, h, w, cout);
    forward_into(x, kernel, bias, k, cout, out.data_mut());
    Ok(out)
}

fn forward_into<T: Real>(x: &Tensor4<T>, kernel: &[T], bias: &[T], k: usize, cout: usize, out: &mut [T]) {
    let [n, h, w, cin] = x.shape();
    let p = (k / 2) as isize;
    let xd = x.data();
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let o = &mut out[((ni * h + y) * w + xx) * cout..][..cout];
                o.copy_from_slice(bias);
                if cin == 0 {
                    continue;
                }
                for ky in 0..k {
                    let iy = y as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = xx as isize + kx as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xin = &xd[((ni * h + iy as usize) * w + ix as usize) * cin..][..cin];
                        let wk = &kernel[(ky * k + kx) * cin * cout..][..cin * cout];
                        for (&xv, wrow) in xin.iter().zip(wk.chunks_exact(cout)) {
                            if xv == T::zero() {
                                continue;
                            }
                            for (ov, &wv) in o.iter_mut().zip(wrow) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of `sum(grad_out ⊙ conv(x))`.
pub fn conv2d_backward<T: Real>(grad_out: &Tensor4<T>, x: &Tensor4<T>, kernel: &[T], k: usize) -> Result<ConvGrads<T>> {
    let [n, h, w, cin] = x.shape();
    let cout = grad_out.channels();
    check_kernel(x, kernel, cout, k, cout)?;
    grad_out.check_shape([n, h, w, cout], "conv2d grad_out")?;
    let mut grad_x = Tensor4::zeros(n, h, w, cin);
    let mut grad_kernel = vec![T::zero(); kernel.len()];
    let mut grad_bias = vec![T::zero(); cout];
    backward_into(grad_out, x, kernel, k, Some(grad_x.data_mut()), &mut grad_kernel, &mut grad_bias);
    Ok(ConvGrads {
        grad_x,
        grad_kernel,
        grad_bias,
    })
}

/// Accumulates (`+=`) into the weight and bias gradients; `gx` is accumulated too when given.
fn backward_into<T: Real>(
    g: &Tensor4<T>,
    x: &Tensor4<T>,
    kernel: &[T],
    k: usize,
    gx: Option<&mut [T]>,
    gw: &mut [T],
    gb: &mut [T],
) {
    let [n, h, w, cin] = x.shape();
    let cout = g.channels();
    let p = (k / 2) as isize;
    let (gd, xd) = (g.data(), x.data());

    for gpx in gd.chunks_exact(cout.max(1)).take(n * h * w) {
        for (b, &gv) in gb.iter_mut().zip(gpx) {
            *b += gv;
        }
    }
    if cin == 0 {
        return;
    }

    // weight gradient
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let gpx = &gd[((ni * h + y) * w + xx) * cout..][..cout];
                for ky in 0..k {
                    let iy = y as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = xx as isize + kx as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xin = &xd[((ni * h + iy as usize) * w + ix as usize) * cin..][..cin];
                        let gwk = &mut gw[(ky * k + kx) * cin * cout..][..cin * cout];
                        for (&xv, gwrow) in xin.iter().zip(gwk.chunks_exact_mut(cout)) {
                            if xv == T::zero() {
                                continue;
                            }
                            for (a, &gv) in gwrow.iter_mut().zip(gpx) {
                                *a += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }

    let Some(gx) = gx else { return };
    // data gradient through the transposed kernel [K, K, Cout, Cin]
    let mut wt = vec![T::zero(); kernel.len()];
    for kk in 0..k * k {
        for ci in 0..cin {
            for co in 0..cout {
                wt[(kk * cout + co) * cin + ci] = kernel[(kk * cin + ci) * cout + co];
            }
        }
    }
    for ni in 0..n {
        for iy in 0..h {
            for ix in 0..w {
                let gxp = &mut gx[((ni * h + iy) * w + ix) * cin..][..cin];
                for ky in 0..k {
                    let oy = iy as isize + p - ky as isize;
                    if oy < 0 || oy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ox = ix as isize + p - kx as isize;
                        if ox < 0 || ox >= w as isize {
                            continue;
                        }
                        let gpx = &gd[((ni * h + oy as usize) * w + ox as usize) * cout..][..cout];
                        let wtk = &wt[(ky * k + kx) * cout * cin..][..cout * cin];
                        for (&gv, wrow) in gpx.iter().zip(wtk.chunks_exact(cin)) {
                            if gv == T::zero() {
                                continue;
                            }
                            for (a, &wv) in gxp.iter_mut().zip(wrow) {
                                *a += gv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution layer whose weights live in a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    /// Registers `<name>.weight` (fan-in scaled uniform) and `<name>.bias` (zeros).
    pub fn new<T: Real>(
        store: &mut ParameterStore<T>,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(shape_err!("kernel size must be odd, got {k}"));
        }
        let weight = store.add_scaled_uniform(format!("{name}.weight"), &[k, k, cin, cout], k * k * cin, 1.0, rng)?;
        let bias = store.add_zeros(format!("{name}.bias"), &[cout])?;
        Ok(Conv2d {
            k,
            cin,
            cout,
            weight,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.k * self.k * self.cin * self.cout + self.cout
    }

    fn check_input<T: Real>(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.cin {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.cin,
                x.channels()
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let [n, h, w, _] = x.shape();
        let mut out = Tensor4::zeros(n, h, w, self.cout);
        forward_into(x, store.value(self.weight), store.value(self.bias), self.k, self.cout, out.data_mut());
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient with respect to `x`.
    pub fn backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        x: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let [n, h, w, _] = x.shape();
        grad_out.check_shape([n, h, w, self.cout], "conv grad_out")?;
        let mut gx = Tensor4::zeros(n, h, w, self.cin);
        let (wv, gw, gb) = store.conv_buffers(self.weight, self.bias);
        backward_into(grad_out, x, wv, self.k, Some(gx.data_mut()), gw, gb);
        Ok(gx)
    }

    /// Like [`Conv2d::backward`] but skips the input gradient (for network inputs).
    pub fn backward_params_only<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        x: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<()> {
        self.check_input(x)?;
        let [n, h, w, _] = x.shape();
        grad_out.check_shape([n, h, w, self.cout], "conv grad_out")?;
        let (wv, gw, gb) = store.conv_buffers(self.weight, self.bias);
        backward_into(grad_out, x, wv, self.k, None, gw, gb);
        Ok(())
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

    fn identity_kernel(c: usize) -> Vec<f64> {
        let mut k = vec![0.0; c * c];
        for i in 0..c {
            k[i * c + i] = 1.0;
        }
        k
    }

    #[test]
    fn one_by_one_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random([2, 3, 4, 3], &mut rng);
        let y = conv2d_forward(&x, &identity_kernel(3), &[0.0; 3], 1, 3).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random([1, 4, 4, 2], &mut rng);
        let y = conv2d_forward(&x, &[0.0; 3 * 3 * 2 * 2], &[0.5, -1.5], 3, 2).unwrap();
        for px in y.data().chunks(2) {
            assert_eq!(px, &[0.5, -1.5]);
        }
    }

    #[test]
    fn ones_kernel_on_one_hot() {
        let mut x = Tensor4::<f64>::zeros(1, 5, 5, 1);
        x.data_mut()[2 * 5 + 2] = 1.0;
        let y = conv2d_forward(&x, &[1.0; 9], &[0.0], 3, 1).unwrap();
        for yy in 0..5 {
            for xx in 0..5 {
                let expect = if (1..=3).contains(&yy) && (1..=3).contains(&xx) { 1.0 } else { 0.0 };
                assert_eq!(y.at(0, yy, xx, 0), expect, "({yy},{xx})");
            }
        }
        // hot pixel on the corner: zero padding clips the plateau to 2x2
        let mut c = Tensor4::<f64>::zeros(1, 5, 5, 1);
        c.data_mut()[0] = 1.0;
        let y = conv2d_forward(&c, &[1.0; 9], &[0.0], 3, 1).unwrap();
        assert_eq!(y.data().iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor4::<f64>::zeros(1, 3, 3, 2);
        assert!(conv2d_forward(&x, &[0.0; 9], &[0.0], 3, 1).is_err());
        assert!(conv2d_forward(&x, &[0.0; 8], &[0.0], 2, 1).is_err());
        let g = Tensor4::<f64>::zeros(1, 3, 3, 1);
        assert!(conv2d_backward(&g, &x, &[0.0; 9], 3).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([1, 4, 4, 2], &mut rng);
        let kernel: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = Tensor4::zeros(1, 4, 4, 2);
        let grads = conv2d_backward(&g, &x, &kernel, 3).unwrap();
        assert!(grads.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_kernel.iter().all(|&v| v == 0.0));
        assert!(grads.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random([1, 3, 3, 2], &mut rng);
        let g = random([1, 3, 3, 2], &mut rng);
        let grads = conv2d_backward(&g, &x, &identity_kernel(2), 1).unwrap();
        assert_eq!(grads.grad_x, g);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([2, 5, 4, 3], &mut rng);
        let y = random([2, 5, 4, 3], &mut rng);
        let kernel: Vec<f64> = (0..9 * 3 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let combo = x.zip_map(&y, |u, v| a * u + b * v).unwrap();
        let lhs = conv2d_forward(&combo, &kernel, &[0.0; 2], 3, 2).unwrap();
        let cx = conv2d_forward(&x, &kernel, &[0.0; 2], 3, 2).unwrap();
        let cy = conv2d_forward(&y, &kernel, &[0.0; 2], 3, 2).unwrap();
        for ((l, u), v) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            let r = a * u + b * v;
            assert!((l - r).abs() <= 1e-12 * r.abs().max(1.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (k, cin, cout) = (3, 2, 3);
        let x = random([2, 4, 5, cin], &mut rng);
        let g = random([2, 4, 5, cout], &mut rng);
        let kernel: Vec<f64> = (0..k * k * cin * cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nx = x.len();
        let nk = kernel.len();
        let mut theta: Vec<f64> = x.data().to_vec();
        theta.extend(&kernel);
        theta.extend(&bias);
        let report = grad_check(
            &mut theta,
            |t| {
                let xt = Tensor4::from_vec(x.shape(), t[..nx].to_vec())?;
                let kt = &t[nx..nx + nk];
                let bt = &t[nx + nk..];
                let y = conv2d_forward(&xt, kt, bt, k, cout)?;
                let loss = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let grads = conv2d_backward(&g, &xt, kt, k)?;
                let mut flat = grads.grad_x.into_vec();
                flat.extend(grads.grad_kernel);
                flat.extend(grads.grad_bias);
                Ok((loss, flat))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        // exact linearity: only rounding error remains
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn layer_registers_named_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::<f32>::new();
        let conv = Conv2d::new(&mut store, "c", 3, 1, 1, &mut rng).unwrap();
        assert_eq!(conv.param_count(), 10);
        assert_eq!(store.count(), 10);
        assert!(store.id("c.weight").is_some() && store.id("c.bias").is_some());
        let x = Tensor4::<f32>::zeros(1, 4, 4, 2);
        assert!(conv.forward(&store, &x).is_err());
    }
}
