use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mse, PipelineError, Sample};
use crate::model::{Batch, ForecastModel, ModelError};
use crate::numerics::{Adam, Mode, NumericsError, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            decay: 1e-6,
            dropout: 0.7,
            batch_size: 16,
            epochs: 80,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Every problem found, as `(key, message)`.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(("lr".into(), format!("must be a positive number, got {}", self.lr)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            out.push(("decay".into(), format!("must be >= 0, got {}", self.decay)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(("dropout".into(), format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 {
            out.push(("batch_size".into(), "must be at least 1".into()));
        }
        if self.epochs == 0 {
            out.push(("epochs".into(), "must be at least 1".into()));
        }
        out
    }
}

fn batch_of(samples: &[&Sample]) -> Result<(Batch, Tensor), PipelineError> {
    let feats: Vec<&Tensor> = samples.iter().map(|s| &s.features).collect();
    let batch = Batch::new(&feats, samples.iter().map(|s| s.calendar).collect())?;
    let targets: Vec<f64> = samples.iter().flat_map(|s| s.target.iter().copied()).collect();
    let n = targets.len();
    Ok((batch, Tensor::from_vec(n, 1, targets)?))
}

/// Mini-batch Adam on scaled samples; returns the mean training loss of each epoch.
///
/// The sample order is reshuffled every epoch from `config.seed`, which also
/// drives dropout. The model's dropout rate is set from `config`.
pub fn train(
    model: &mut ForecastModel,
    samples: &[Sample],
    stack: &[Arc<Tensor>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, PipelineError> {
    if let Some((k, m)) = config.problems().into_iter().next() {
        return Err(PipelineError::Empty(format!("train config {k}: {m}")));
    }
    if samples.is_empty() {
        return Err(PipelineError::Empty("no training samples".into()));
    }
    model.config.dropout = config.dropout;
    let names = model.names().to_vec();
    let mut adam = Adam::new(config.lr, config.decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let picked: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (batch, targets) = batch_of(&picked)?;
            let non_finite = || PipelineError::NonFiniteLoss { epoch: epoch + 1, batch: b + 1 };
            let (loss, grads) = match model.loss_and_grads(&batch, &targets, stack, Mode::Train, &mut rng) {
                Ok(v) => v,
                Err(ModelError::Numerics(NumericsError::NonFinite(_))) => return Err(non_finite()),
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() {
                return Err(non_finite());
            }
            adam.update(model.params_mut(), &grads, &names)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / samples.len() as f64;
        on_epoch(epoch + 1, mean);
        curve.push(mean);
    }
    Ok(curve)
}

/// Clamped inference predictions, one vector per sample.
pub fn predict_samples(
    model: &ForecastModel,
    samples: &[Sample],
    stack: &[Arc<Tensor>],
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(16) {
        let picked: Vec<&Sample> = chunk.iter().collect();
        let (batch, _) = batch_of(&picked)?;
        let pred = model.predict(&batch, stack)?;
        let n = pred.len() / chunk.len();
        out.extend(pred.chunks(n).map(|c| c.to_vec()));
    }
    Ok(out)
}

/// Inference-mode MSE before clamping, the quantity training minimizes.
pub fn dataset_mse(model: &ForecastModel, samples: &[Sample], stack: &[Arc<Tensor>]) -> Result<f64, PipelineError> {
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for chunk in samples.chunks(16) {
        let picked: Vec<&Sample> = chunk.iter().collect();
        let (batch, targets) = batch_of(&picked)?;
        pred.extend(model.forward_raw(&batch, stack)?);
        actual.extend_from_slice(targets.data());
    }
    mse(&pred, &actual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CalendarEncoding;
    use crate::graphs::{AdjacencyStack, ODPair};
    use crate::model::{CellType, ModelConfig, ModelDims};
    use crate::numerics::Activation;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden_temporal: 3,
            hidden_spatial: 3,
            encoder_blocks: 1,
            decoder_blocks: 1,
            activation: Activation::Tanh,
            dropout: 0.0,
            cell: CellType::Gru,
            ..ModelConfig::default()
        }
    }

    fn dataset(n: usize, count: usize, zero: bool) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..count)
            .map(|i| {
                let x = Tensor::from_vec(n, 4, (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let target = (0..n)
                    .map(|r| if zero { 0.0 } else { 1.0 + x.get(r, 3) + 0.5 * x.get(r, 0) })
                    .collect();
                Sample {
                    index: i,
                    timestamp: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
                    features: x,
                    calendar: CalendarEncoding::new([0; 6]).unwrap(),
                    target,
                }
            })
            .collect()
    }

    fn stack(n: usize) -> Vec<Arc<Tensor>> {
        let pairs = (0..n).map(|i| ODPair::new(i, &format!("o{i}"), "d")).collect();
        AdjacencyStack::identity(pairs).normalized().to_vec()
    }

    fn model(n: usize) -> ForecastModel {
        let dims = ModelDims { n_od: n, features: 4, embedding: false };
        ForecastModel::init(&tiny_config(), dims, 5).unwrap()
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.decay, c.dropout, c.batch_size, c.epochs), (5e-5, 1e-6, 0.7, 16, 80));
        assert!(c.problems().is_empty());
        let bad = TrainConfig { batch_size: 0, dropout: 1.0, ..c };
        let keys: Vec<String> = bad.problems().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["dropout", "batch_size"]);
    }

    #[test]
    fn same_seed_same_curve() {
        let data = dataset(5, 20, false);
        let cfg = TrainConfig { lr: 1e-2, dropout: 0.3, epochs: 4, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut m = model(5);
            let curve = train(&mut m, &data, &stack(5), &cfg, |_, _| {}).unwrap();
            (curve, m)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn zero_targets_with_zero_head() {
        let data = dataset(5, 16, true);
        let mut m = model(5);
        m.set_param("head.w", Tensor::zeros(3, 1)).unwrap();
        let cfg = TrainConfig { lr: 1e-3, dropout: 0.0, epochs: 1, ..TrainConfig::default() };
        let curve = train(&mut m, &data, &stack(5), &cfg, |_, _| {}).unwrap();
        assert!(curve[0] < 1e-20);
    }

    #[test]
    fn loss_decreases() {
        let data = dataset(5, 32, false);
        let mut m = model(5);
        let before = dataset_mse(&m, &data, &stack(5)).unwrap();
        let cfg = TrainConfig { lr: 1e-2, dropout: 0.0, epochs: 150, ..TrainConfig::default() };
        train(&mut m, &data, &stack(5), &cfg, |_, _| {}).unwrap();
        let after = dataset_mse(&m, &data, &stack(5)).unwrap();
        assert!(after < 0.2 * before, "{before} -> {after}");
    }

    #[test]
    fn non_finite_loss_names_epoch_and_batch() {
        let mut data = dataset(5, 20, false);
        data[3].target[0] = f64::NAN;
        let mut m = model(5);
        let cfg = TrainConfig { epochs: 2, dropout: 0.0, ..TrainConfig::default() };
        let err = train(&mut m, &data, &stack(5), &cfg, |_, _| {}).unwrap_err();
        assert!(matches!(err, PipelineError::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn predictions_clamped_and_split_per_sample() {
        let data = dataset(5, 20, false);
        let m = model(5);
        let p = predict_samples(&m, &data, &stack(5)).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|v| v.len() == 5 && v.iter().all(|&x| x >= 0.0)));
    }
}
