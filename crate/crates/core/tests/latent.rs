use anatomy_warden_core::augment::{
    accept_all, fit_parzen, fit_proposal, parzen_density, rejection_sample,
    rejection_sample_streams, Proposal, SamplerConfig,
};
use anatomy_warden_core::nn::LatentIndex;
use anatomy_warden_core::vae::{reparameterize, EncodeResult};
use anatomy_warden_core::{Error, LatentVector, LATENT_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_latents(n: usize, seed: u64) -> Vec<LatentVector> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut z = LatentVector::ZERO;
            for l in 0..LATENT_DIM {
                let e: f64 = StandardNormal.sample(&mut r);
                z[l] = e as f32;
            }
            z
        })
        .collect()
}

/// Straight-line Silverman bandwidth from the definition.
fn silverman_by_hand(zs: &[LatentVector]) -> f64 {
    let n = zs.len() as f64;
    let d = LATENT_DIM as f64;
    let mut std_sum = 0.0;
    for l in 0..LATENT_DIM {
        let mean = zs.iter().map(|z| z[l] as f64).sum::<f64>() / n;
        let var = zs.iter().map(|z| (z[l] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        std_sum += var.sqrt();
    }
    (std_sum / d) * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0))
}

/// `(1/N) sum_i N(z; z_i, h^2 I)` summed term by term.
fn density_by_hand(zs: &[LatentVector], h: f64, q: &LatentVector) -> f64 {
    let d = LATENT_DIM as f64;
    let norm = (2.0 * std::f64::consts::PI * h * h).powf(-d / 2.0);
    zs.iter()
        .map(|c| {
            let sq: f64 = (0..LATENT_DIM).map(|l| (q[l] as f64 - c[l] as f64).powi(2)).sum();
            norm * (-sq / (2.0 * h * h)).exp()
        })
        .sum::<f64>()
        / zs.len() as f64
}

#[test]
fn silverman_bandwidth_matches_hand_computation() {
    let zs = normal_latents(100, 1);
    let p = fit_parzen(&zs).unwrap();
    let want = silverman_by_hand(&zs);
    assert!((p.bandwidth() - want).abs() <= 1e-9 * want);
    assert_eq!(fit_parzen(&[zs[0], zs[0]]), Err(Error::DegenerateBandwidth));
}

#[test]
fn density_matches_direct_summation() {
    // Spread-out centres keep the densities away from underflow.
    let zs: Vec<LatentVector> = normal_latents(50, 2)
        .into_iter()
        .map(|mut z| {
            z.0.iter_mut().for_each(|v| *v *= 0.05);
            z
        })
        .collect();
    let p = fit_parzen(&zs).unwrap();
    let h = p.bandwidth();
    let mut r = rng(3);
    let mut checked = 0;
    for i in 0..1000 {
        let mut q = zs[i % zs.len()];
        for l in 0..LATENT_DIM {
            q[l] += (r.random::<f64>() - 0.5) as f32 * h as f32;
        }
        let want = density_by_hand(&zs, h, &q);
        let got = parzen_density(&p, &q);
        assert!(want > 0.0 && want.is_finite());
        assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

#[test]
fn density_peaks_at_training_points() {
    let zs = normal_latents(100, 4);
    let p = fit_parzen(&zs).unwrap();
    let h = p.bandwidth() as f32;
    for z in zs.iter().take(20) {
        let mut off = *z;
        off[0] += 10.0 * h;
        assert!(p.log_density(z) >= p.log_density(&off));
    }
}

#[test]
fn proposal_fits_standard_normal_latents() {
    let zs = normal_latents(1000, 5);
    let p = fit_parzen(&zs).unwrap();
    let q = fit_proposal(&zs, &p).unwrap();
    for l in 0..LATENT_DIM {
        assert!(q.mean[l].abs() < 0.1, "mean {l}: {}", q.mean[l]);
        assert!((q.variance[l] - 1.0).abs() < 0.1, "var {l}: {}", q.variance[l]);
    }
    assert!(q.m() > 1.0);
    // M Q covers P at every training point.
    for z in &zs {
        assert!(p.log_density(z) <= q.log_m + q.log_density(z) + 1e-9);
    }
}

#[test]
fn impossible_indicator_aborts_with_nothing_accepted() {
    let zs = normal_latents(64, 6);
    let p = fit_parzen(&zs).unwrap();
    let config = SamplerConfig {
        window: 2_000,
        ..SamplerConfig::default()
    };
    let never = |zs: &[LatentVector]| Ok(vec![false; zs.len()]);
    let r = rejection_sample(10, &p, Proposal::Mixture, &mut { never }, &config, &mut rng(0));
    assert!(matches!(r, Err(Error::AcceptanceCollapse { .. })));
}

#[test]
fn sampler_is_deterministic_and_exact_in_count() {
    let zs = normal_latents(64, 7);
    let p = fit_parzen(&zs).unwrap();
    let config = SamplerConfig::default();
    // Accept only codes with a positive first coordinate.
    let half = |zs: &[LatentVector]| Ok(zs.iter().map(|z| z[0] > 0.0).collect());
    let run = |seed, streams| {
        rejection_sample_streams(777, &p, Proposal::Mixture, &mut { half }, &config, seed, streams)
            .unwrap()
    };
    let (a, sa) = run(11, 3);
    let (b, sb) = run(11, 3);
    assert_eq!(a, b);
    assert_eq!((sa.draws, sa.accepted), (sb.draws, sb.accepted));
    assert_eq!(a.len(), 777);
    assert!(a.iter().all(|z| z[0] > 0.0));
    assert_ne!(run(12, 3).0, a);
}

#[test]
fn forced_acceptance_reproduces_mixture_mean() {
    let zs = normal_latents(200, 8);
    let p = fit_parzen(&zs).unwrap();
    let n = 20_000;
    let (out, stats) = rejection_sample(
        n,
        &p,
        Proposal::Mixture,
        &mut accept_all,
        &SamplerConfig::default(),
        &mut rng(9),
    )
    .unwrap();
    assert_eq!(stats.accepted as usize, n);
    let mean = p.mean();
    let h2 = p.bandwidth() * p.bandwidth();
    for l in 0..LATENT_DIM {
        // Mixture variance: spread of the centres plus the kernel's h^2.
        let centre_var = zs.iter().map(|z| (z[l] as f64 - mean[l]).powi(2)).sum::<f64>() / zs.len() as f64;
        let se = ((centre_var + h2) / n as f64).sqrt();
        let got = out.iter().map(|z| z[l] as f64).sum::<f64>() / n as f64;
        assert!((got - mean[l]).abs() <= 3.0 * se + 1e-6, "dim {l}: {got} vs {}", mean[l]);
    }
}

#[test]
fn reparameterization_moments() {
    let enc = EncodeResult {
        mu: LatentVector::ZERO,
        log_var: [0.0; LATENT_DIM],
    };
    let mut r = rng(10);
    let n = 100_000;
    let mut sum = [0.0f64; LATENT_DIM];
    let mut sq = [0.0f64; LATENT_DIM];
    for _ in 0..n {
        let z = reparameterize(&enc, &mut r);
        for l in 0..LATENT_DIM {
            sum[l] += z[l] as f64;
            sq[l] += (z[l] as f64).powi(2);
        }
    }
    for l in 0..LATENT_DIM {
        let mean = sum[l] / n as f64;
        let var = sq[l] / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02 && (0.97..=1.03).contains(&var), "{l}: {mean} {var}");
    }
    let a = reparameterize(&enc, &mut rng(1));
    assert_eq!(a, reparameterize(&enc, &mut rng(1)));
}

fn naive_nearest(data: &[LatentVector], q: &LatentVector) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, z) in data.iter().enumerate() {
        let d: f64 = (0..LATENT_DIM).map(|l| (z[l] as f64 - q[l] as f64).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

#[test]
fn nearest_matches_naive_scan() {
    let data = normal_latents(20_000, 11);
    let index = LatentIndex::bulk_load(&data).unwrap();
    assert_eq!(index.as_flat().len(), 20_000 * LATENT_DIM);
    for (k, q) in normal_latents(10_000, 12).iter().enumerate() {
        let n = index.nearest(q).unwrap();
        assert_eq!(n.id, naive_nearest(&data, q), "query {k}");
        assert_eq!(n.vector, data[n.id]);
    }
    let single = LatentIndex::bulk_load(&data[..1]).unwrap();
    assert_eq!(single.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nearest_is_exact_on_near_duplicates(seed in any::<u64>(), n in 1usize..300, jitter in 0.0f32..1e-3) {
        // Clustered vectors stress the single-precision pre-filter.
        let base = normal_latents(1, seed)[0];
        let mut r = rng(seed ^ 1);
        let data: Vec<LatentVector> = (0..n).map(|_| {
            let mut z = base;
            for l in 0..LATENT_DIM {
                z[l] += jitter * (r.random::<f32>() - 0.5);
            }
            z
        }).collect();
        let index = LatentIndex::bulk_load(&data).unwrap();
        let mut q = base;
        q[0] += jitter;
        prop_assert_eq!(index.nearest(&q).unwrap().id, naive_nearest(&data, &q));
    }
}
