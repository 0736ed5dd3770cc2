use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::segmap::SegMap;

fn random_maps(n: usize, count: usize, seed: u64) -> Vec<SegMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let labels = (0..n * n).map(|_| rng.random_range(0..4u8)).collect();
            SegMap::from_labels(n, labels)
                .unwrap()
                .with_slice(i as u32 % 5, 5)
                .unwrap()
        })
        .collect()
}

fn weights(variational: bool) -> LossWeights {
    LossWeights {
        kl_weight: 0.7,
        adversarial_weight: 0.3,
        variational,
    }
}

fn check_gradient(variational: bool) {
    let arch = Architecture::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = VaeModel::<f64>::init(arch, &mut rng).unwrap();
    // Nonzero biases so every path carries signal.
    for p in model.params_mut().iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let maps = random_maps(8, 3, 5);
    let batch: Vec<&SegMap> = maps.iter().collect();
    let w = weights(variational);
    let noise = || ChaCha8Rng::seed_from_u64(99);
    let (_, grad) = loss_and_gradient(&model, &batch, &w, &mut noise()).unwrap();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..model.num_params() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = loss(&model, &batch, &w, &mut noise()).unwrap().total;
        model.params_mut()[i] = orig - h;
        let down = loss(&model, &batch, &w, &mut noise()).unwrap().total;
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-12);
        worst = worst.max(err);
    }
    assert!(worst <= 1e-3, "worst relative gradient error {worst}");
}

#[test]
fn analytic_gradient_matches_central_differences() {
    check_gradient(true);
}

#[test]
fn analytic_gradient_matches_without_sampling() {
    check_gradient(false);
}

#[test]
fn kl_is_non_negative_and_zero_for_zero_model() {
    let maps = random_maps(8, 4, 1);
    let batch: Vec<&SegMap> = maps.iter().collect();
    let zero = VaeModel::<f64>::zeros(Architecture::tiny()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = loss(&zero, &batch, &weights(true), &mut rng).unwrap();
    assert_eq!(l.kl, 0.0);
    // Uniform logits give log(4) cross-entropy per pixel.
    assert!((l.reconstruction - 4f64.ln()).abs() < 1e-12);
    let model = VaeModel::<f64>::init(Architecture::tiny(), &mut rng).unwrap();
    let l = loss(&model, &batch, &weights(true), &mut rng).unwrap();
    assert!(l.kl >= 0.0);
}

#[test]
fn slice_head_gradient_reaches_encoder() {
    let arch = Architecture::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = VaeModel::<f64>::init(arch.clone(), &mut rng).unwrap();
    let maps = random_maps(8, 2, 2);
    let batch: Vec<&SegMap> = maps.iter().collect();
    let only_adv = LossWeights {
        kl_weight: 0.0,
        adversarial_weight: 1.0,
        variational: false,
    };
    let with_adv = loss_and_gradient(&model, &batch, &only_adv, &mut rng).unwrap().1;
    let enc0 = &model.layout().tensors[0];
    assert_eq!(enc0.name, "enc0.weight");
    assert!(with_adv[enc0.range()].iter().any(|g| g.abs() > 0.0));
}

#[test]
fn float_and_double_models_agree() {
    let arch = Architecture::halving(16, 32, &[4, 8, 8, 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m32 = VaeModel::<f32>::init(arch, &mut rng).unwrap();
    let m64 = m32.cast::<f64>();
    let map = &random_maps(16, 1, 9)[0];
    let a = m32.encode(map).unwrap();
    let b = m64.encode(map).unwrap();
    for l in 0..32 {
        assert!((a.mu[l] - b.mu[l]).abs() < 1e-4);
    }
}

#[test]
fn encode_and_decode_are_deterministic() {
    let arch = Architecture::halving(16, 32, &[4, 8, 8, 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = VaeModel::<f32>::init(arch, &mut rng).unwrap();
    let map = &random_maps(16, 1, 3)[0];
    let e1 = model.encode(map).unwrap();
    let e2 = model.encode(map).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(model.decode(&e1.mu).unwrap(), model.decode(&e2.mu).unwrap());
    // Batched and single decoding agree.
    let batch = model.decode_batch(&[e1.mu, crate::LatentVector::ZERO]).unwrap();
    assert_eq!(batch[0], model.decode(&e1.mu).unwrap());
}

#[test]
fn zero_model_decodes_to_background() {
    let model = VaeModel::<f32>::zeros(Architecture::halving(16, 32, &[4, 8, 8, 8])).unwrap();
    let map = model.decode(&crate::LatentVector::ZERO).unwrap();
    assert!(map.labels().iter().all(|&l| l == 0));
}

#[test]
fn non_finite_latent_rejected() {
    let model = VaeModel::<f32>::zeros(Architecture::halving(16, 32, &[4, 8, 8, 8])).unwrap();
    let mut z = crate::LatentVector::ZERO;
    z[3] = f32::NAN;
    assert!(matches!(model.decode(&z), Err(crate::Error::NonFinite(_))));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let maps = random_maps(16, 6, 7);
    let arch = Architecture::halving(16, 32, &[4, 8, 8, 8]);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 2,
        batch_size: 4,
        rng_seed: 8,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init = VaeModel::<f32>::init(arch.clone(), &mut rng).unwrap();
    let trained = train(&maps, arch, &cfg).unwrap();
    assert_eq!(trained.model.params(), init.params());
    assert_eq!(trained.log.len(), 2);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let maps = random_maps(16, 8, 7);
    let arch = Architecture::halving(16, 32, &[4, 8, 8, 8]);
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 15,
        batch_size: 4,
        kl_weight: 0.01,
        rng_seed: 21,
        ..TrainConfig::default()
    };
    let a = train(&maps, arch.clone(), &cfg).unwrap();
    let b = train(&maps, arch, &cfg).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert!(a.log.last().unwrap().loss.total < a.log[0].loss.total);
}

#[test]
fn reparameterize_uses_variance() {
    let enc = EncodeResult {
        mu: crate::LatentVector::ZERO,
        log_var: [f32::NEG_INFINITY; 32],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(reparameterize(&enc, &mut rng), crate::LatentVector::ZERO);
}
