//! Inverted dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QacnnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Entries are `1/keep` with probability `keep`, else 0.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(shape: &[usize], keep: f64, rng: &mut R) -> Result<Tensor<T>> {
    check_keep(keep)?;
    let len = shape.iter().product();
    if keep == 1.0 {
        return Ok(Tensor::ones(shape));
    }
    let scale = T::of(1.0 / keep);
    let data = (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

pub(crate) fn check_keep(keep: f64) -> Result<()> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(QacnnError::Config(format!("dropout keep probability {keep} must lie in (0, 1]")));
    }
    Ok(())
}

/// Mask source for one training forward pass. Each example gets its own stream
/// derived from `(seed, epoch, example index)`, so results do not depend on
/// scheduling.
#[derive(Debug)]
pub struct Dropout {
    keep: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(keep: f64, seed: u64, epoch: u64, example: u64) -> Result<Self> {
        check_keep(keep)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ example);
        Ok(Dropout { keep, rng })
    }

    pub fn keep(&self) -> f64 {
        self.keep
    }

    pub(crate) fn mask<T: Real>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        dropout_mask(shape, self.keep, &mut self.rng)
    }
}
