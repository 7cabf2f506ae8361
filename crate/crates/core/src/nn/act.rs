//! Pointwise nonlinearities. Backward helpers take the saved forward output
//! (sigmoid, tanh) or input (leaky rectifier).

use super::Real;

#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_inplace<T: Real>(xs: &mut [T]) {
    xs.iter_mut().for_each(|v| *v = sigmoid(*v));
}

pub fn tanh_inplace<T: Real>(xs: &mut [T]) {
    xs.iter_mut().for_each(|v| *v = v.tanh());
}

#[inline]
pub fn leaky_relu<T: Real>(v: T, slope: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * slope
    }
}

pub fn leaky_relu_inplace<T: Real>(xs: &mut [T], slope: T) {
    xs.iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
}

/// `g *= y (1 - y)` where `y = sigmoid(x)`.
pub fn sigmoid_backward<T: Real>(g: &mut [T], y: &[T]) {
    for (g, &y) in g.iter_mut().zip(y) {
        *g *= y * (T::one() - y);
    }
}

/// `g *= 1 - y²` where `y = tanh(x)`.
pub fn tanh_backward<T: Real>(g: &mut [T], y: &[T]) {
    for (g, &y) in g.iter_mut().zip(y) {
        *g *= T::one() - y * y;
    }
}

/// `g *= (x > 0 ? 1 : slope)` using the pre-activation `x`.
pub fn leaky_relu_backward<T: Real>(g: &mut [T], x: &[T], slope: T) {
    for (g, &x) in g.iter_mut().zip(x) {
        if x <= T::zero() {
            *g *= slope;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-1000.0f64) >= 0.0 && sigmoid(-1000.0f64) < 1e-300);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        for v in [0.3f64, 2.0, 7.5] {
            assert!((sigmoid(v) + sigmoid(-v) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_helpers() {
        let x = [0.4f64, -0.7];
        let h = 1e-6;
        let mut g = [1.0, 1.0];
        let y: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
        sigmoid_backward(&mut g, &y);
        for (i, &v) in x.iter().enumerate() {
            let fd = (sigmoid(v + h) - sigmoid(v - h)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-9);
        }
        let mut g = [1.0, 1.0];
        let y: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
        tanh_backward(&mut g, &y);
        assert!((g[1] - (1.0 - (-0.7f64).tanh().powi(2))).abs() < 1e-15);
        let mut g = [1.0, 1.0];
        leaky_relu_backward(&mut g, &x, 0.2);
        assert_eq!(g, [1.0, 0.2]);
    }
}
