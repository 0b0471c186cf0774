use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TrainConfig, CLASS_COUNT};
use super::instances::{ModelInput, TrainingInstance};
use super::params::ModelParams;
use super::ModelError;
use crate::scalar::Scalar;

/// Result of a training run: new parameters plus the mean loss of each epoch.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub epoch_losses: Vec<f64>,
}

/// A frame classifier the adaptation and calibration layers can drive.
///
/// [`ModelParams`] is the real implementation; tests plug in scripted models.
pub trait SequenceModel<T: Scalar>: Clone + Send + Sync + Sized {
    fn config(&self) -> &ModelConfig;

    fn predict(&self, input: ModelInput<'_, T>) -> Result<[T; CLASS_COUNT], ModelError>;

    /// Fine-tunes a copy of `self` on exactly `data`; `self` is untouched.
    fn fit(
        &self,
        data: &[TrainingInstance<T>],
        cfg: &TrainConfig,
    ) -> Result<Trained<Self>, ModelError>;
}

impl<T: Scalar> SequenceModel<T> for ModelParams<T> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn predict(&self, input: ModelInput<'_, T>) -> Result<[T; CLASS_COUNT], ModelError> {
        self.forward(input)
    }

    fn fit(
        &self,
        data: &[TrainingInstance<T>],
        cfg: &TrainConfig,
    ) -> Result<Trained<Self>, ModelError> {
        train(self, data, cfg)
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Mean cross-entropy over `data` and its gradient.
    pub fn loss_and_gradient(
        &self,
        data: &[TrainingInstance<T>],
    ) -> Result<(T, ModelParams<T>), ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let mut grad = ModelParams::zeros(self.config)?;
        let scale = T::one() / T::lit(data.len() as f64);
        let mut loss = T::zero();
        for inst in data {
            self.check_input(&inst.input())?;
            check_target(inst.target)?;
            loss = loss + self.accumulate_gradient(inst.input(), inst.target, scale, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    /// Mean cross-entropy over `data`, forward only.
    pub fn mean_loss(&self, data: &[TrainingInstance<T>]) -> Result<T, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let mut total = T::zero();
        for inst in data {
            check_target(inst.target)?;
            let p = self.forward(inst.input())?;
            total = total - p[inst.target as usize].ln();
        }
        Ok(total / T::lit(data.len() as f64))
    }
}

fn check_target(target: u8) -> Result<(), ModelError> {
    if target as usize >= CLASS_COUNT {
        return Err(ModelError::InvalidClass(target));
    }
    Ok(())
}

/// Mini-batch gradient descent on mean cross-entropy.
///
/// Each epoch visits `data` in an order shuffled by a generator seeded from
/// `cfg.seed`, in batches of `cfg.batch_size` (the last may be smaller). The
/// returned loss trace holds, per epoch, the mean of the per-instance losses
/// observed during that epoch.
pub fn train<T: Scalar>(
    model: &ModelParams<T>,
    data: &[TrainingInstance<T>],
    cfg: &TrainConfig,
) -> Result<Trained<ModelParams<T>>, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    for inst in data {
        model.check_input(&inst.input())?;
        check_target(inst.target)?;
    }
    let mut params = model.clone();
    let mut grad = ModelParams::zeros(model.config)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr = T::lit(cfg.learning_rate);
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.fill_zero();
            let scale = T::one() / T::lit(batch.len() as f64);
            let mut batch_loss = 0.0;
            for &i in batch {
                let inst = &data[i];
                batch_loss += params
                    .accumulate_gradient(inst.input(), inst.target, scale, &mut grad)
                    .to_f64_lossy();
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            params.add_scaled(&grad, -lr);
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    if !params.is_finite() {
        return Err(ModelError::NonFiniteLoss {
            epoch: cfg.max_epochs - 1,
            batch: data.len().div_ceil(cfg.batch_size) - 1,
        });
    }
    Ok(Trained {
        model: params,
        epoch_losses,
    })
}
