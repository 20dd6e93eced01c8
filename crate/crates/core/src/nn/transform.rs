//! Value compression and the two-hot categorical representation.

use crate::scalar::Scalar;

/// Slope of the linear term that keeps the compression invertible.
pub const SCALE_EPS: f64 = 1e-3;

/// `sign(x) (sqrt(|x| + 1) - 1) + eps x`.
pub fn scale_transform<T: Scalar>(x: T) -> T {
    let eps = T::lit(SCALE_EPS);
    // signum(0) is 1 for floats, but the bracket vanishes there
    x.signum() * ((x.abs() + T::one()).sqrt() - T::one()) + eps * x
}

/// Closed-form inverse of [`scale_transform`].
pub fn inverse_scale<T: Scalar>(y: T) -> T {
    let eps = T::lit(SCALE_EPS);
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    // with s = sqrt(|x| + 1): eps s^2 + s - (1 + eps + |y|) = 0, solved for
    // d = s - 1 in rationalized form to avoid cancellation near 0
    let a = y.abs();
    let root = (one + four * eps * (one + eps + a)).sqrt();
    let d = two * a / (root + one + two * eps);
    y.signum() * d * (d + two)
}

/// Integer support `-n..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportSpec {
    pub n: usize,
}

impl SupportSpec {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "support half-width must be at least 1");
        SupportSpec { n }
    }

    pub fn size(&self) -> usize {
        2 * self.n + 1
    }

    /// Whether `b` lies outside the support and will be clamped.
    pub fn saturates(&self, b: f64) -> bool {
        b.abs() > self.n as f64
    }
}

/// Two-hot weights of `b` (clamped into `[-n, n]`) on its neighbouring atoms.
pub fn to_categorical<T: Scalar>(b: T, spec: SupportSpec) -> Vec<T> {
    let n = T::from_usize(spec.n).expect("small support");
    let b = b.max(-n).min(n);
    let mut out = vec![T::zero(); spec.size()];
    let lo = b.floor();
    let frac = b - lo;
    let k = (lo + n).to_usize().expect("inside support");
    if frac == T::zero() {
        out[k] = T::one();
    } else {
        out[k] = T::one() - frac;
        out[k + 1] = frac;
    }
    out
}

/// Expectation of the support under `probs`.
pub fn from_categorical<T: Scalar>(probs: &[T], spec: SupportSpec) -> T {
    debug_assert_eq!(probs.len(), spec.size());
    let n = spec.n as f64;
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * T::lit(i as f64 - n))
        .sum()
}
