use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backprop, cross_entropy, images_to_input, run};
use super::{lit, ModelWeights, Scalar, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::label::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight of the old value in the batch-norm running averages.
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bn_momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParams(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::InvalidParams("invalid Adam hyperparameters".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidParams("bn momentum outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Mean loss and accuracy over one epoch, measured on the training batches
/// as they were seen (train-mode forward passes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(shapes: &[&[T]]) -> Self {
        Self {
            m: shapes.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: shapes.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2): (T, T) = (lit(cfg.beta1), lit(cfg.beta2));
        let lr: T = lit(cfg.learning_rate);
        let eps: T = lit(cfg.epsilon);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Mini-batch Adam on sparse categorical cross-entropy. Samples are shuffled
/// every epoch from `config.seed`; dropout masks come from the same stream,
/// so a fixed seed reproduces the final weights bit for bit.
pub fn train<T: Scalar>(
    mut model: ModelWeights<T>,
    data: &[(&GrayImage, Label)],
    config: &TrainConfig,
) -> Result<(ModelWeights<T>, Vec<EpochStats>)> {
    config.validate()?;
    model.config.validate()?;
    for class in [Label::Live, Label::Spoof] {
        if !data.iter().any(|(_, l)| *l == class) {
            return Err(Error::Dataset(format!("no {class} training samples")));
        }
    }
    let side = model.config.input_side;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.trainable());
    let momentum: T = lit(config.bn_momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&GrayImage> = batch.iter().map(|&i| data[i].0).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].1.index()).collect();
            let input = images_to_input::<T>(&images, side)?;
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let pass = run(&model, input, batch.len(), true, Some(&mut dropout_rng));
            let loss = cross_entropy(&pass, &labels).to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            correct += labels
                .iter()
                .enumerate()
                .filter(|(i, &y)| {
                    let p = &pass.probs[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
                    let predicted = if p[0] > p[1] { 0 } else { 1 };
                    predicted == y
                })
                .count();
            let grads = backprop(&model, &pass, &labels, true);
            for (block, (mean, var)) in model.blocks.iter_mut().zip(&pass.batch_moments) {
                for c in 0..mean.len() {
                    block.running_mean[c] =
                        momentum * block.running_mean[c] + (T::one() - momentum) * mean[c];
                    block.running_var[c] =
                        momentum * block.running_var[c] + (T::one() - momentum) * var[c];
                }
            }
            adam.update(model.trainable_mut(), &grads, config);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        info!(
            "epoch {epoch}/{}: loss {:.4} accuracy {:.4}",
            config.epochs, stats.loss, stats.accuracy
        );
        history.push(stats);
    }
    Ok((model, history))
}
