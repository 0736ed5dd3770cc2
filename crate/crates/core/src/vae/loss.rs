use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arch::NUM_CLASSES;
use super::model::{Upstream, VaeModel};
use super::real::Real;
use crate::error::{Error, Result};
use crate::segmap::SegMap;

/// Terms of the training objective, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean per-pixel categorical cross-entropy.
    pub reconstruction: f64,
    /// Closed-form KL(q(z|x) || N(0, I)), summed over latent dimensions.
    pub kl: f64,
    /// Squared error of the slice-position regression.
    pub adversarial: f64,
    pub total: f64,
}

/// Weights of the objective's terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl_weight: f64,
    pub adversarial_weight: f64,
    /// Sample `z = mu + sigma * eps`; when false the decoder sees `mu`.
    pub variational: bool,
}

/// Draws the reparameterization noise for a batch (`latent x batch`).
pub(crate) fn draw_eps<R: Real, G: Rng + ?Sized>(len: usize, rng: &mut G) -> Vec<R> {
    (0..len)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            R::of_f64(e)
        })
        .collect()
}

/// Regression target: slice index normalized to [0, 1].
pub(crate) fn slice_target(map: &SegMap) -> f64 {
    map.slice_position()
}

/// Objective value and, when `want_grad`, its gradient in parameter layout.
pub(crate) fn evaluate<R: Real, G: Rng + ?Sized>(
    model: &VaeModel<R>,
    batch: &[&SegMap],
    weights: &LossWeights,
    rng: &mut G,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<R>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = batch.len();
    let lat = model.arch().latent_dim;
    let n = model.arch().grid;
    let plane = n * n;
    let x = model.one_hot(batch)?;
    let eps = weights.variational.then(|| draw_eps::<R, G>(lat * b, rng));
    let trace = model.forward(&x, b, eps.as_deref());

    // Reconstruction.
    let logits = trace.logits();
    let scale = 1.0 / (b * plane) as f64;
    let mut recon = 0.0f64;
    let mut d_logits = want_grad.then(|| vec![R::zero(); logits.len()]);
    for (bi, map) in batch.iter().enumerate() {
        for (p, &label) in map.labels().iter().enumerate() {
            let idx = |c: usize| (c * b + bi) * plane + p;
            let mut v = [0.0f64; NUM_CLASSES];
            for (c, vc) in v.iter_mut().enumerate() {
                *vc = logits[idx(c)].as_f64();
            }
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = v.iter().map(|&l| libm::exp(l - max)).sum();
            let lse = max + libm::log(sum);
            recon += lse - v[label as usize];
            if let Some(d) = d_logits.as_mut() {
                for c in 0..NUM_CLASSES {
                    let soft = libm::exp(v[c] - lse);
                    let target = if c == label as usize { 1.0 } else { 0.0 };
                    d[idx(c)] = R::of_f64((soft - target) * scale);
                }
            }
        }
    }
    recon *= scale;

    // KL of the diagonal Gaussian posterior against the unit prior.
    let mut kl = 0.0f64;
    for i in 0..lat * b {
        let mu = trace.mu[i].as_f64();
        let lv = trace.log_var[i].as_f64();
        kl += -0.5 * (1.0 + lv - mu * mu - libm::exp(lv));
    }
    kl /= b as f64;

    // Slice-position regression.
    let mut adv = 0.0f64;
    for (bi, map) in batch.iter().enumerate() {
        let r = trace.adv[bi].as_f64() - slice_target(map);
        adv += r * r;
    }
    adv /= b as f64;

    let total = recon + weights.kl_weight * kl + weights.adversarial_weight * adv;
    let breakdown = LossBreakdown {
        reconstruction: recon,
        kl,
        adversarial: adv,
        total,
    };
    if !want_grad {
        return Ok((breakdown, None));
    }

    let kw = weights.kl_weight / b as f64;
    let d_mu: Vec<R> = trace
        .mu
        .iter()
        .map(|&m| R::of_f64(kw * m.as_f64()))
        .collect();
    let d_lv: Vec<R> = trace
        .log_var
        .iter()
        .map(|&lv| R::of_f64(kw * 0.5 * (libm::exp(lv.as_f64()) - 1.0)))
        .collect();
    let aw = weights.adversarial_weight * 2.0 / b as f64;
    let d_adv: Vec<R> = batch
        .iter()
        .enumerate()
        .map(|(bi, map)| R::of_f64(aw * (trace.adv[bi].as_f64() - slice_target(map))))
        .collect();
    let mut grad = vec![R::zero(); model.num_params()];
    model.backward(
        &trace,
        &Upstream {
            logits: d_logits.as_deref().expect("allocated when want_grad"),
            mu: &d_mu,
            log_var: &d_lv,
            adv: &d_adv,
        },
        &mut grad,
    );
    Ok((breakdown, Some(grad)))
}

/// Objective on one batch; the reparameterization noise comes from `rng`.
pub fn loss<R: Real, G: Rng + ?Sized>(
    model: &VaeModel<R>,
    batch: &[&SegMap],
    weights: &LossWeights,
    rng: &mut G,
) -> Result<LossBreakdown> {
    evaluate(model, batch, weights, rng, false).map(|(l, _)| l)
}

/// Objective and its analytic gradient with respect to every parameter.
pub fn loss_and_gradient<R: Real, G: Rng + ?Sized>(
    model: &VaeModel<R>,
    batch: &[&SegMap],
    weights: &LossWeights,
    rng: &mut G,
) -> Result<(LossBreakdown, Vec<R>)> {
    evaluate(model, batch, weights, rng, true).map(|(l, g)| (l, g.expect("requested")))
}
