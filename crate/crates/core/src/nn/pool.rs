//! 2× spatial resampling between encoder/forecaster levels.

use crate::error::{shape_err, Result};

use super::tensor::Tensor4;
use super::Real;

/// 2×2 mean pooling.
pub fn downsample2<T: Real>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, h, w, c] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("downsample2 needs even H and W, got {h}x{w}"));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor4::zeros(n, ho, wo, c);
    let quarter = T::lit(0.25);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for y in 0..ho {
            for xx in 0..wo {
                let o = &mut od[((ni * ho + y) * wo + xx) * c..][..c];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let src = &xd[((ni * h + 2 * y + dy) * w + 2 * xx + dx) * c..][..c];
                    for (a, &b) in o.iter_mut().zip(src) {
                        *a += b;
                    }
                }
                o.iter_mut().for_each(|v| *v *= quarter);
            }
        }
    }
    Ok(out)
}

pub fn downsample2_backward<T: Real>(grad_out: &Tensor4<T>) -> Tensor4<T> {
    let up = upsample2(grad_out);
    let quarter = T::lit(0.25);
    up.map(|v| v * quarter)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, h, w, c] = x.shape();
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Tensor4::zeros(n, ho, wo, c);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for y in 0..ho {
            for xx in 0..wo {
                let src = &xd[((ni * h + y / 2) * w + xx / 2) * c..][..c];
                od[((ni * ho + y) * wo + xx) * c..][..c].copy_from_slice(src);
            }
        }
    }
    out
}

/// Sums each 2×2 block of the gradient.
pub fn upsample2_backward<T: Real>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let d = downsample2(grad_out)?;
    let four = T::lit(4.0);
    Ok(d.map(|v| v * four))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let x = Tensor4::<f64>::zeros(1, 8, 8, 3);
        let d = downsample2(&x).unwrap();
        assert_eq!(d.shape(), [1, 4, 4, 3]);
        assert_eq!(upsample2(&d).shape(), [1, 8, 8, 3]);
        assert!(downsample2(&Tensor4::<f64>::zeros(1, 3, 4, 1)).is_err());
    }

    #[test]
    fn constant_round_trip() {
        let x = Tensor4::filled([2, 6, 4, 2], 0.37f64);
        assert_eq!(upsample2(&downsample2(&x).unwrap()), x);
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let data = (0..64).map(|i| ((i / 8 + i % 8) % 2) as f64).collect();
        let x = Tensor4::from_vec([1, 8, 8, 1], data).unwrap();
        assert!(downsample2(&x).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn adjoint_identities() {
        // <down(x), g> = <x, down^T(g)> and likewise for up
        let x = Tensor4::from_vec([1, 4, 4, 2], (0..32).map(|v| (v as f64 * 0.31).sin()).collect()).unwrap();
        let g = Tensor4::from_vec([1, 2, 2, 2], (0..8).map(|v| (v as f64 * 0.77).cos()).collect()).unwrap();
        let dot = |a: &Tensor4<f64>, b: &Tensor4<f64>| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
        let lhs = dot(&downsample2(&x).unwrap(), &g);
        let rhs = dot(&x, &downsample2_backward(&g));
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs = dot(&upsample2(&g), &x);
        let rhs = dot(&g, &upsample2_backward(&x).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
