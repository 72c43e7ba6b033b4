//! Dense row-major tensor storage used by the tape.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{numel, Real};
use crate::{Error, Result};

/// A dense tensor node. Gradient storage is allocated lazily by `backward`.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub data: Vec<Real>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Option<Vec<Real>>,
}

impl Tensor {
    pub fn new(data: Vec<Real>, shape: Vec<usize>, requires_grad: bool) -> Result<Self> {
        if data.len() != numel(&shape) {
            return Err(Error::dim(
                "tensor",
                format!("data length {} does not match shape {:?}", data.len(), shape),
            ));
        }
        Ok(Tensor { data, shape, requires_grad, grad: None })
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor { data: vec![0.0; numel(&shape)], shape, requires_grad, grad: None }
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn(shape: Vec<usize>, std: Real, rng: &mut impl Rng) -> Self {
        let data = (0..numel(&shape))
            .map(|_| {
                let z: Real = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor { data, shape, requires_grad: true, grad: None }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("{what}: non-finite value {v} at index {i}")));
            }
        }
        Ok(())
    }
}
