use crate::net::{HiddenActivation, OutputActivation};
use crate::tensor::Scalar;

/// Activation applied to one layer's outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    /// Normalizes across the layer's outputs at each position.
    Softmax,
}

impl From<HiddenActivation> for Activation {
    fn from(a: HiddenActivation) -> Self {
        match a {
            HiddenActivation::Identity => Self::Identity,
            HiddenActivation::Tanh => Self::Tanh,
            HiddenActivation::Relu => Self::Relu,
        }
    }
}

impl From<OutputActivation> for Activation {
    fn from(a: OutputActivation) -> Self {
        match a {
            OutputActivation::Identity => Self::Identity,
            OutputActivation::Softmax => Self::Softmax,
        }
    }
}

impl Activation {
    pub fn is_pointwise(self) -> bool {
        self != Self::Softmax
    }

    /// Pointwise application. Softmax is not pointwise and passes values through.
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Self::Identity | Self::Softmax => v,
            Self::Tanh => v.tanh(),
            Self::Relu => v.max(T::zero()),
        }
    }

    /// Applies the activation to a whole output vector in place.
    pub fn apply_vec<T: Scalar>(self, values: &mut [T]) {
        match self {
            Self::Softmax => softmax(values),
            _ => values.iter_mut().for_each(|v| *v = self.apply(*v)),
        }
    }
}

/// Numerically stable softmax in place.
pub fn softmax<T: Scalar>(values: &mut [T]) {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in values.iter_mut() {
        *v = *v / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut v = [0.0f32, 0.0];
        softmax(&mut v);
        assert_eq!(v, [0.5, 0.5]);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut v = [1000.0f64, 1000.0, 999.0];
        softmax(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[0] > v[2]);
    }

    #[test]
    fn pointwise() {
        assert_eq!(Activation::Relu.apply(-2.0f32), 0.0);
        assert_eq!(Activation::Relu.apply(2.0f32), 2.0);
        assert_eq!(Activation::Identity.apply(-3.5f64), -3.5);
        assert!((Activation::Tanh.apply(0.5f64) - 0.5f64.tanh()).abs() == 0.0);
    }
}
