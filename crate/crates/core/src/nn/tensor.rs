use crate::error::{shape_err, Result};

use super::Real;

/// Dense N×H×W×C tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Tensor4 {
            n,
            h,
            w,
            c,
            data: vec![T::zero(); n * h * w * c],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let [n, h, w, c] = shape;
        if data.len() != n * h * w * c {
            return Err(shape_err!(
                "{} values for shape {shape:?} ({} expected)",
                data.len(),
                n * h * w * c
            ));
        }
        Ok(Tensor4 { n, h, w, c, data })
    }

    pub fn filled(shape: [usize; 4], v: T) -> Self {
        let [n, h, w, c] = shape;
        Tensor4 {
            n,
            h,
            w,
            c,
            data: vec![v; n * h * w * c],
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }

    /// Number of N·H·W positions.
    #[inline]
    pub fn pixels(&self) -> usize {
        self.n * self.h * self.w
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> T {
        self.data[((n * self.h + y) * self.w + x) * self.c + c]
    }

    pub fn check_shape(&self, shape: [usize; 4], what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(shape_err!(
                "{what}: expected {shape:?}, got {:?}",
                self.shape()
            ));
        }
        Ok(())
    }

    pub fn same_spatial(&self, other: &Self) -> bool {
        self.n == other.n && self.h == other.h && self.w == other.w
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err!(
                "add {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Elementwise combination of two equal-shape tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape_err!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        Ok(Tensor4 {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if !a.same_spatial(b) {
            return Err(shape_err!(
                "concat {:?} with {:?}",
                a.shape(),
                b.shape()
            ));
        }
        let c = a.c + b.c;
        let mut data = Vec::with_capacity(a.pixels() * c);
        for p in 0..a.pixels() {
            data.extend_from_slice(&a.data[p * a.c..(p + 1) * a.c]);
            data.extend_from_slice(&b.data[p * b.c..(p + 1) * b.c]);
        }
        Ok(Tensor4 { c, data, ..*a })
    }

    /// Inverse of [`Tensor4::concat_channels`]: first `ca` channels, then the rest.
    pub fn split_channels(&self, ca: usize) -> (Self, Self) {
        let cb = self.c - ca;
        let mut a = Vec::with_capacity(self.pixels() * ca);
        let mut b = Vec::with_capacity(self.pixels() * cb);
        for px in self.data.chunks_exact(self.c.max(1)).take(self.pixels()) {
            a.extend_from_slice(&px[..ca]);
            b.extend_from_slice(&px[ca..]);
        }
        (
            Tensor4 { c: ca, data: a, ..*self },
            Tensor4 { c: cb, data: b, ..*self },
        )
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_inverse() {
        let a = Tensor4::from_vec([1, 2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let b = Tensor4::from_vec([1, 2, 2, 1], (10..14).map(|v| v as f64).collect()).unwrap();
        let ab = Tensor4::concat_channels(&a, &b).unwrap();
        assert_eq!(&ab.data()[..3], &[0.0, 1.0, 10.0]);
        let (a2, b2) = ab.split_channels(2);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn concat_with_empty_channels() {
        let a = Tensor4::<f32>::zeros(1, 2, 2, 0);
        let b = Tensor4::from_vec([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ab = Tensor4::concat_channels(&a, &b).unwrap();
        assert_eq!(ab, b);
        let (e, b2) = ab.split_channels(0);
        assert_eq!(e.shape(), [1, 2, 2, 0]);
        assert_eq!(b2, b);
    }

    #[test]
    fn mismatched_shapes() {
        let a = Tensor4::<f32>::zeros(1, 2, 2, 1);
        let b = Tensor4::<f32>::zeros(1, 3, 2, 1);
        assert!(Tensor4::concat_channels(&a, &b).is_err());
        assert!(a.zip_map(&b, |x, y| x + y).is_err());
        assert!(Tensor4::<f32>::from_vec([1, 1, 1, 2], vec![0.0]).is_err());
    }
}
