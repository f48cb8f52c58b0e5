//! Probability-averaging ensembles of identically configured models.

use crate::error::{QacnnError, Result};
use crate::model::Model;
use crate::real::Real;
use crate::similarity::SimilarityMaps;
use crate::tensor::Tensor;
use crate::training::LabeledMaps;

/// Fails unless every model shares the first model's configuration and variant.
pub fn check_compatible<T: Real>(models: &[Model<T>]) -> Result<()> {
    let first = models
        .first()
        .ok_or_else(|| QacnnError::InvalidArgument("ensemble needs at least one model".into()))?;
    for (i, m) in models.iter().enumerate().skip(1) {
        if m.config != first.config || m.variant != first.variant {
            return Err(QacnnError::InvalidArgument(format!(
                "ensemble member {i} ({}) does not match member 0 ({}) in configuration",
                m.variant, first.variant
            )));
        }
    }
    Ok(())
}

/// Arithmetic mean of the members' choice probabilities, accumulated in `f64`.
pub fn ensemble_predict<T: Real>(models: &[Model<T>], maps: &SimilarityMaps<T>) -> Result<Tensor<f64>> {
    check_compatible(models)?;
    let mut mean = vec![0.0; models[0].config.choices];
    for m in models {
        let p = m.predict_maps(maps)?;
        mean.iter_mut().zip(p.probs.data()).for_each(|(a, &b)| *a += b.as_f64());
    }
    let n = models.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(Tensor::vector(mean))
}

/// Fraction of examples where the averaged distribution's argmax is the label.
pub fn ensemble_accuracy<T: Real>(models: &[Model<T>], data: &[LabeledMaps<T>]) -> Result<f64> {
    let mut correct = 0;
    for (i, ex) in data.iter().enumerate() {
        let label = ex
            .label
            .ok_or_else(|| QacnnError::Data(format!("example {i} has no answer label")))?;
        if ensemble_predict(models, &ex.maps)?.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}
