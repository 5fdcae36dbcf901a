//! Activation functions evaluable for value and first derivative.
//!
//! Every activation is a small immutable descriptor. Parameter validation
//! happens once, at construction or parse time, so evaluation never fails.
//!
//! Kink conventions: ReLU, LeakyReLU and RePU return the `z > 0` branch of
//! the derivative only for strictly positive inputs, so `σ'(0)` is `0` for
//! ReLU/RePU and `α` for LeakyReLU. MRePU returns `0` at `z = -1`, where
//! both one-sided derivatives vanish for `p >= 2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Perceptron,
    Sigmoid,
    Tanh,
    Sin,
    Relu,
    LeakyRelu,
    Softplus,
    Swish,
    Gelu,
    Repu,
    Mrepu,
    Linear,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 12] = [
        ActivationKind::Perceptron,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Sin,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Softplus,
        ActivationKind::Swish,
        ActivationKind::Gelu,
        ActivationKind::Repu,
        ActivationKind::Mrepu,
        ActivationKind::Linear,
    ];

    fn name(self) -> &'static str {
        match self {
            ActivationKind::Perceptron => "perceptron",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sin => "sin",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Swish => "swish",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Repu => "repu",
            ActivationKind::Mrepu => "mrepu",
            ActivationKind::Linear => "linear",
        }
    }
}

/// A validated activation function.
///
/// `p` is only meaningful for RePU/MRePU and `alpha` only for LeakyReLU;
/// both are zero for every other kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Activation {
    kind: ActivationKind,
    p: u32,
    alpha: f64,
}

impl Activation {
    /// Builds a parameter-free activation. Fails for RePU, MRePU and
    /// LeakyReLU, which need [`Activation::repu`], [`Activation::mrepu`]
    /// or [`Activation::leaky_relu`].
    pub fn simple(kind: ActivationKind) -> Result<Self> {
        match kind {
            ActivationKind::Repu | ActivationKind::Mrepu | ActivationKind::LeakyRelu => Err(
                Error::Config(format!("activation `{}` requires a parameter", kind.name())),
            ),
            _ => Ok(Self { kind, p: 0, alpha: 0.0 }),
        }
    }

    pub fn relu() -> Self {
        Self { kind: ActivationKind::Relu, p: 0, alpha: 0.0 }
    }

    pub fn linear() -> Self {
        Self { kind: ActivationKind::Linear, p: 0, alpha: 0.0 }
    }

    pub fn tanh() -> Self {
        Self { kind: ActivationKind::Tanh, p: 0, alpha: 0.0 }
    }

    pub fn repu(p: u32) -> Result<Self> {
        if p < 1 {
            return Err(Error::Config("RePU requires p >= 1".into()));
        }
        Ok(Self { kind: ActivationKind::Repu, p, alpha: 0.0 })
    }

    pub fn mrepu(p: u32) -> Result<Self> {
        if p < 2 {
            return Err(Error::Config("MRePU requires p >= 2".into()));
        }
        Ok(Self { kind: ActivationKind::Mrepu, p, alpha: 0.0 })
    }

    pub fn leaky_relu(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Config("LeakyReLU alpha must be finite".into()));
        }
        Ok(Self { kind: ActivationKind::LeakyRelu, p: 0, alpha })
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// Power order of RePU/MRePU, `None` for other kinds.
    pub fn order(&self) -> Option<u32> {
        matches!(self.kind, ActivationKind::Repu | ActivationKind::Mrepu).then_some(self.p)
    }

    pub fn alpha(&self) -> Option<f64> {
        (self.kind == ActivationKind::LeakyRelu).then_some(self.alpha)
    }

    /// Points where the activation or its derivative is not smooth.
    pub fn kinks(&self) -> &'static [f64] {
        match self.kind {
            ActivationKind::Perceptron
            | ActivationKind::Relu
            | ActivationKind::LeakyRelu
            | ActivationKind::Repu => &[0.0],
            ActivationKind::Mrepu => &[-1.0],
            _ => &[],
        }
    }

    /// True for kinds that are non-decreasing on the whole real line.
    pub fn is_monotone(&self) -> bool {
        match self.kind {
            ActivationKind::Perceptron
            | ActivationKind::Sigmoid
            | ActivationKind::Tanh
            | ActivationKind::Relu
            | ActivationKind::Softplus
            | ActivationKind::Repu
            | ActivationKind::Linear => true,
            ActivationKind::LeakyRelu => self.alpha >= 0.0,
            _ => false,
        }
    }

    /// σ(z).
    #[inline]
    pub fn eval<T: Scalar>(&self, z: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self.kind {
            ActivationKind::Perceptron => {
                if z >= zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Sin => z.sin(),
            ActivationKind::Relu => {
                if z >= zero {
                    z
                } else {
                    zero
                }
            }
            ActivationKind::LeakyRelu => {
                if z >= zero {
                    z
                } else {
                    T::lit(self.alpha) * z
                }
            }
            ActivationKind::Softplus => z.max(zero) + (-z.abs()).exp().ln_1p(),
            ActivationKind::Swish => z * sigmoid(z),
            ActivationKind::Gelu => z * normal_cdf(z),
            ActivationKind::Repu => {
                if z >= zero {
                    ipow(z, self.p)
                } else {
                    zero
                }
            }
            ActivationKind::Mrepu => {
                if z >= -one {
                    z * ipow(z + one, self.p)
                } else {
                    zero
                }
            }
            ActivationKind::Linear => z,
        }
    }

    /// σ'(z), with the kink conventions described in the module docs.
    #[inline]
    pub fn eval_deriv<T: Scalar>(&self, z: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self.kind {
            ActivationKind::Perceptron => zero,
            ActivationKind::Sigmoid => {
                let s = sigmoid(z);
                s * (one - s)
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                one - t * t
            }
            ActivationKind::Sin => z.cos(),
            ActivationKind::Relu => {
                if z > zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::LeakyRelu => {
                if z > zero {
                    one
                } else {
                    T::lit(self.alpha)
                }
            }
            ActivationKind::Softplus => sigmoid(z),
            ActivationKind::Swish => {
                let s = sigmoid(z);
                s + z * s * (one - s)
            }
            ActivationKind::Gelu => normal_cdf(z) + z * normal_pdf(z),
            ActivationKind::Repu => {
                if z > zero {
                    T::lit(self.p as f64) * ipow(z, self.p - 1)
                } else {
                    zero
                }
            }
            ActivationKind::Mrepu => {
                if z > -one {
                    ipow(z + one, self.p - 1) * (T::lit((self.p + 1) as f64) * z + one)
                } else {
                    zero
                }
            }
            ActivationKind::Linear => one,
        }
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    let one = T::one();
    if z >= T::zero() {
        one / (one + (-z).exp())
    } else {
        let e = z.exp();
        e / (one + e)
    }
}

fn normal_cdf<T: Scalar>(z: T) -> T {
    let half = T::lit(0.5);
    half + half * (z * T::FRAC_1_SQRT_2()).erf()
}

fn normal_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::lit(0.5);
    inv_sqrt_2pi * (-(z * z) * T::lit(0.5)).exp()
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActivationKind::Repu | ActivationKind::Mrepu => {
                write!(f, "{}:p={}", self.kind.name(), self.p)
            }
            ActivationKind::LeakyRelu => write!(f, "leaky_relu:alpha={}", self.alpha),
            _ => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Parses `name[:key=value[,key=value]]`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, params) = match lower.split_once(':') {
            Some((n, rest)) => (n.trim(), rest.trim()),
            None => (lower.as_str(), ""),
        };
        let mut p: Option<u32> = None;
        let mut alpha: Option<f64> = None;
        for item in params.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed activation parameter `{item}`")))?;
            match key.trim() {
                "p" => {
                    p = Some(value.trim().parse().map_err(|_| {
                        Error::Config(format!("activation order `{value}` is not a positive integer"))
                    })?)
                }
                "alpha" => {
                    alpha = Some(value.trim().parse().map_err(|_| {
                        Error::Config(format!("activation slope `{value}` is not a number"))
                    })?)
                }
                other => {
                    return Err(Error::Config(format!("unknown activation parameter `{other}`")))
                }
            }
        }
        let kind = match name {
            "perceptron" | "step" => ActivationKind::Perceptron,
            "sigmoid" => ActivationKind::Sigmoid,
            "tanh" => ActivationKind::Tanh,
            "sin" => ActivationKind::Sin,
            "relu" => ActivationKind::Relu,
            "leaky_relu" | "leakyrelu" => ActivationKind::LeakyRelu,
            "softplus" => ActivationKind::Softplus,
            "swish" | "silu" => ActivationKind::Swish,
            "gelu" => ActivationKind::Gelu,
            "repu" => ActivationKind::Repu,
            "mrepu" => ActivationKind::Mrepu,
            "linear" | "identity" => ActivationKind::Linear,
            other => return Err(Error::Config(format!("unknown activation `{other}`"))),
        };
        let unused = |what: &str| Error::Config(format!("activation `{name}` takes no `{what}` parameter"));
        match kind {
            ActivationKind::Repu | ActivationKind::Mrepu => {
                if alpha.is_some() {
                    return Err(unused("alpha"));
                }
                let p = p.ok_or_else(|| Error::Config(format!("activation `{name}` requires p")))?;
                if kind == ActivationKind::Repu {
                    Activation::repu(p)
                } else {
                    Activation::mrepu(p)
                }
            }
            ActivationKind::LeakyRelu => {
                if p.is_some() {
                    return Err(unused("p"));
                }
                let alpha = alpha
                    .ok_or_else(|| Error::Config("activation `leaky_relu` requires alpha".into()))?;
                Activation::leaky_relu(alpha)
            }
            _ => {
                if p.is_some() {
                    return Err(unused("p"));
                }
                if alpha.is_some() {
                    return Err(unused("alpha"));
                }
                Activation::simple(kind)
            }
        }
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

/// `x^n` by repeated multiplication; `n` is a small activation order.
#[inline]
fn ipow<T: Scalar>(x: T, n: u32) -> T {
    let mut acc = T::one();
    for _ in 0..n {
        acc = acc * x;
    }
    acc
}
