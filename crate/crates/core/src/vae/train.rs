use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::loss::{loss_and_gradient, LossBreakdown, LossWeights};
use super::model::{EncodeResult, VaeModel};
use super::real::Real;
use crate::error::{Error, Result};
use crate::latent::{LatentVector, LATENT_DIM};
use crate::segmap::SegMap;

/// Optimizer and objective settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub adversarial_weight: f64,
    pub kl_weight: f64,
    /// False trains a plain autoencoder on `mu`.
    pub variational: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 6e-5,
            weight_decay: 0.01,
            adversarial_weight: 0.1,
            kl_weight: 1.0,
            variational: true,
            epochs: 50,
            batch_size: 16,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings that converge on the 64x64 synthetic corpus within minutes;
    /// a unit KL weight collapses the posterior at this scale.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            kl_weight: 1e-3,
            epochs: 60,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            kl_weight: self.kl_weight,
            adversarial_weight: self.adversarial_weight,
            variational: self.variational,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.learning_rate, self.weight_decay, self.adversarial_weight, self.kl_weight];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("rates and weights must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(num_params: usize, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step<R: Real>(&mut self, params: &mut [R], grad: &[R]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        let lr = self.learning_rate;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = g.as_f64();
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = (*m / bc1) / (libm::sqrt(*v / bc2) + self.epsilon);
            let pv = p.as_f64();
            *p = R::of_f64(pv - lr * update - lr * self.weight_decay * pv);
        }
    }
}

/// Mean objective over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: VaeModel<f32>,
    pub log: Vec<EpochLog>,
}

/// [`train_with`] without a progress callback.
pub fn train(corpus: &[SegMap], arch: Architecture, config: &TrainConfig) -> Result<Trained> {
    train_with(corpus, arch, config, |_| {})
}

/// Trains a fresh model end to end; everything random (initialization,
/// shuffling, reparameterization noise) derives from `config.rng_seed`.
pub fn train_with(
    corpus: &[SegMap],
    arch: Architecture,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Trained> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let model = VaeModel::<f32>::init(arch, &mut rng)?;
    train_from(model, corpus, config, &mut rng, &mut on_epoch)
}

/// Continues training `model` with the given rng.
pub fn train_from<G: Rng + ?Sized>(
    mut model: VaeModel<f32>,
    corpus: &[SegMap],
    config: &TrainConfig,
    rng: &mut G,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Trained> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = config.weights();
    let mut opt = AdamW::new(model.num_params(), config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut sum = LossBreakdown::default();
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SegMap> = chunk.iter().map(|&i| &corpus[i]).collect();
            let (l, grad) = loss_and_gradient(&model, &batch, &weights, rng)?;
            if !l.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: l.total,
                });
            }
            opt.step(model.params_mut(), &grad);
            let w = batch.len() as f64;
            sum.reconstruction += l.reconstruction * w;
            sum.kl += l.kl * w;
            sum.adversarial += l.adversarial * w;
            sum.total += l.total * w;
            seen += batch.len();
        }
        let n = seen as f64;
        let entry = EpochLog {
            epoch,
            loss: LossBreakdown {
                reconstruction: sum.reconstruction / n,
                kl: sum.kl / n,
                adversarial: sum.adversarial / n,
                total: sum.total / n,
            },
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(Trained { model, log })
}

/// `z = mu + exp(log_var / 2) * eps` with `eps ~ N(0, I)` drawn from `rng`.
pub fn reparameterize<G: Rng + ?Sized>(enc: &EncodeResult, rng: &mut G) -> LatentVector {
    let mut z = enc.mu;
    for l in 0..LATENT_DIM {
        let e: f64 = StandardNormal.sample(rng);
        let sigma = libm::exp(0.5 * enc.log_var[l] as f64);
        z[l] = (enc.mu[l] as f64 + sigma * e) as f32;
    }
    z
}
