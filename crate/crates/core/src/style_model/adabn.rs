//! Domain adaptation by re-estimating batch-normalization statistics.

use super::classifier::StyleClassifier;
use crate::corpus::FeatureBundle;
use crate::error::{Error, Result};
use crate::nn::Mat;

/// Returns a copy of `model` whose normalization running mean/variance are
/// the statistics of its pre-normalization activations over `target`. Every
/// other value is copied unchanged.
pub fn adapt_bn(model: &StyleClassifier, target: &[FeatureBundle]) -> Result<StyleClassifier> {
    if target.is_empty() {
        return Err(Error::invalid("adaptation needs a non-empty target corpus"));
    }
    let refs: Vec<&FeatureBundle> = target.iter().collect();
    adapt_bn_with_activations(model, &model.pre_bn_activations(&refs)?)
}

/// As [`adapt_bn`], from precomputed pre-normalization activations.
pub fn adapt_bn_with_activations(model: &StyleClassifier, z: &Mat) -> Result<StyleClassifier> {
    if z.rows == 0 {
        return Err(Error::invalid("adaptation needs a non-empty target corpus"));
    }
    if z.cols != model.config.joint_dim() {
        return Err(Error::Shape(format!("activation width {} != {}", z.cols, model.config.joint_dim())));
    }
    let mean = z.col_means();
    let mut var = vec![0.0; z.cols];
    for r in 0..z.rows {
        for (c, v) in z.row(r).iter().enumerate() {
            var[c] += (v - mean[c]) * (v - mean[c]);
        }
    }
    var.iter_mut().for_each(|v| *v /= z.rows as f64);
    let mut out = model.clone();
    out.running_mean = mean;
    out.running_var = var;
    Ok(out)
}

/// Inference-mode output of the normalization layer for activations `z`.
pub fn bn_outputs(model: &StyleClassifier, z: &Mat) -> Mat {
    let (g, b) = (model.gamma(), model.beta());
    let eps = model.config.bn_eps;
    let mut out = z.clone();
    for r in 0..out.rows {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = g[c] * (*v - model.running_mean[c]) / (model.running_var[c] + eps).sqrt() + b[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style_model::classifier::tests::{random_bundle, small_config};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn only_running_statistics_change() {
        let cfg = small_config();
        let model = StyleClassifier::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target: Vec<_> = (0..6).map(|i| random_bundle(&mut rng, &cfg, 2 + i, 1 + i % 2)).collect();
        let adapted = adapt_bn(&model, &target).unwrap();
        assert_eq!(adapted.params, model.params);
        assert_eq!(adapted.config, model.config);
        assert_ne!(adapted.running_mean, model.running_mean);
        assert!(adapt_bn(&model, &[]).is_err());
    }

    #[test]
    fn shifted_target_centres_on_beta() {
        let cfg = small_config();
        let mut model = StyleClassifier::new(cfg.clone()).unwrap();
        let joint = cfg.joint_dim();
        let beta = model.params.position("bn.beta").unwrap();
        model.params.values[beta.0] = Mat::from_vec(1, joint, (0..joint).map(|i| i as f64 * 0.1 - 0.3).collect());
        let z = Mat::from_vec(50, joint, (0..50 * joint).map(|i| ((i * 7919) % 113) as f64 / 20.0 + 3.0).collect());
        let adapted = adapt_bn_with_activations(&model, &z).unwrap();
        let y = bn_outputs(&adapted, &z);
        for (m, b) in y.col_means().iter().zip(adapted.beta()) {
            assert!((m - b).abs() < 1e-9);
        }
    }
}
