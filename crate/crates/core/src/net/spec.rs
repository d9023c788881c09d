use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::OpKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn op(self) -> OpKind {
        match self {
            Activation::Tanh => OpKind::Tanh,
            Activation::Relu => OpKind::Relu,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::UnknownKind {
                what: "activation",
                name: other.to_string(),
            }),
        }
    }
}

/// Shape of the network: an input lift to `width`, `n_blocks` residual +
/// diffusion blocks, and an output head with `n_classes` logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub n_blocks: usize,
    pub width: usize,
    pub n_classes: usize,
    pub activation: Activation,
    /// Floor added to every diffusion scale.
    pub eps: f64,
}

impl NetworkSpec {
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(input_dim: usize, n_blocks: usize, width: usize, n_classes: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            n_blocks,
            width,
            n_classes,
            activation: Activation::Tanh,
            eps: Self::DEFAULT_EPS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 1 {
            return Err(Error::InvalidArgument("network needs at least one block".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("network needs at least two classes".into()));
        }
        if self.input_dim == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("input_dim and width must be positive".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps floor must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// Names every field that differs from `other`.
    pub fn diff(&self, other: &Self) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($f:ident) => {
                if self.$f != other.$f {
                    out.push(format!("{}: {} vs {}", stringify!($f), self.$f, other.$f));
                }
            };
        }
        cmp!(input_dim);
        cmp!(n_blocks);
        cmp!(width);
        cmp!(n_classes);
        cmp!(activation);
        cmp!(eps);
        out
    }
}
