//! Acceptance criteria, run in order. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use anatomy_warden::formats::load_corpus;
use anatomy_warden::pipeline::{
    cmd_augment, cmd_calibrate, cmd_check, cmd_corrupt, cmd_repair, cmd_synth, cmd_train, load_thresholds,
    register_all,
};
use anatomy_warden::binary::{load_index, load_model};
use anatomy_warden_core::anatomy::{calibrate_thresholds, is_valid, Thresholds};
use anatomy_warden_core::augment::{accept_all, fit_basis, rejection_sample, Proposal, ProposalKind, SamplerConfig};
use anatomy_warden_core::eval::{dice, hausdorff, interpolation_study, EVAL_CLASSES};
use anatomy_warden_core::nn::LatentIndex;
use anatomy_warden_core::repair::{bisect_alpha, repair_map, DICHOTOMIC_ITERATIONS};
use anatomy_warden_core::synth::{
    corrupt, generate_corpus, random_spec, CorruptionKind, CorruptionSpec, ParamsDistribution,
};
use anatomy_warden_core::vae::{loss, loss_and_gradient, train, Architecture, LossWeights, TrainConfig, VaeModel};
use anatomy_warden_core::{Class, LatentVector, RegistrationMode, SegMap, LATENT_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempfile::TempDir;

const MODE: RegistrationMode = RegistrationMode::Translation;
const TRAIN_MAPS: usize = 1_000;
const INDEX_SIZE: usize = 100_000;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn maps_in(dir: &Path) -> Vec<(PathBuf, SegMap)> {
    load_corpus(dir).expect("corpus loads")
}

/// Desk model, thresholds and index built through the command pipeline.
struct Desk {
    dir: TempDir,
    corpus: Vec<SegMap>,
    registered: Vec<SegMap>,
    th: Thresholds,
    model: VaeModel<f32>,
    index: LatentIndex,
    config: TrainConfig,
}

impl Desk {
    fn at(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn desk() -> &'static Desk {
    static D: OnceLock<Desk> = OnceLock::new();
    D.get_or_init(|| {
        let t = Instant::now();
        let dir = TempDir::new().unwrap();
        let at = |n: &str| dir.path().join(n);
        cmd_synth(TRAIN_MAPS, 1, 64, &at("corpus")).unwrap();
        cmd_calibrate(&at("corpus"), &at("th.json")).unwrap();
        let config = TrainConfig::desk();
        cmd_train(&at("corpus"), &config, MODE, &at("model.bin")).unwrap();
        let stats = cmd_augment(
            &at("corpus"),
            &at("model.bin"),
            &at("th.json"),
            INDEX_SIZE,
            ProposalKind::Mixture,
            MODE,
            7,
            &at("index.bin"),
        )
        .unwrap();
        let corpus: Vec<SegMap> = maps_in(&at("corpus")).into_iter().map(|(_, m)| m).collect();
        let registered = register_all(&corpus, MODE).unwrap();
        let d = Desk {
            th: load_thresholds(&at("th.json")).unwrap(),
            model: load_model(&at("model.bin")).unwrap(),
            index: load_index(&at("index.bin")).unwrap(),
            corpus,
            registered,
            config,
            dir,
        };
        let recon: f64 = d
            .registered
            .iter()
            .map(|m| {
                let r = d.model.decode(&d.model.encode(m).unwrap().mu).unwrap();
                Class::STRUCTURES
                    .iter()
                    .map(|&c| dice(&r.mask(c), &m.mask(c)).unwrap())
                    .sum::<f64>()
                    / 3.0
            })
            .sum::<f64>()
            / d.registered.len() as f64;
        note(&format!(
            "desk fixture: {} maps, {} epochs, index {} ({} of {} corpus codes valid, {} draws), \
             mean reconstruction Dice {recon:.3}, built in {:.0}s",
            TRAIN_MAPS,
            d.config.epochs,
            stats.index_size,
            stats.valid_corpus_latents,
            stats.corpus_latents,
            stats.draws,
            t.elapsed().as_secs_f64()
        ));
        d
    })
}

fn note(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "  {line}");
    let _ = out.flush();
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Originals, corrupted copies and repairs of 500 fresh maps.
struct Repaired {
    original: Vec<SegMap>,
    corrupted: Vec<SegMap>,
    output: Vec<Option<SegMap>>,
}

fn repaired() -> &'static Repaired {
    static R: OnceLock<Repaired> = OnceLock::new();
    R.get_or_init(|| {
        let d = desk();
        cmd_synth(500, 2, 64, &d.at("fresh")).unwrap();
        let corruptions = cmd_corrupt(&d.at("fresh"), 3, 2..=6, &d.at("bad")).unwrap();
        assert_eq!(corruptions.len(), 500, "every map takes a corruption");
        let records = cmd_repair(
            &d.at("bad"),
            &d.at("model.bin"),
            &d.at("index.bin"),
            &d.at("th.json"),
            MODE,
            &d.at("fixed"),
        )
        .unwrap();
        let original: Vec<SegMap> = maps_in(&d.at("fresh")).into_iter().map(|(_, m)| m).collect();
        let corrupted: Vec<SegMap> = maps_in(&d.at("bad")).into_iter().map(|(_, m)| m).collect();
        let output = records
            .iter()
            .map(|r| r.error.is_none().then(|| anatomy_warden::formats::load_segmap(&r.output).unwrap()))
            .collect();
        Repaired {
            original,
            corrupted,
            output,
        }
    })
}

fn zero_invalid_guarantee() -> Verdict {
    let d = desk();
    let r = repaired();
    let failed = r.output.iter().filter(|o| o.is_none()).count();
    let already_valid = r.corrupted.iter().filter(|m| is_valid(m, &d.th)).count();
    let checked = cmd_check(&d.at("fixed"), &d.at("th.json")).unwrap();
    let invalid = checked.iter().filter(|c| !c.report.is_valid()).count();
    verdict(
        failed == 0 && invalid == 0 && checked.len() == 500,
        format!(
            "{} outputs checked, {invalid} invalid, {failed} repairs failed ({already_valid} corrupted maps were already valid)",
            checked.len()
        ),
    )
}

fn bounded_distortion() -> Verdict {
    let r = repaired();
    let mut increase_px: [Vec<f64>; 3] = Default::default();
    let mut drops = Vec::new();
    let mut loss_vs_original = Vec::new();
    for ((orig, bad), out) in r.original.iter().zip(&r.corrupted).zip(&r.output) {
        let Some(out) = out else { continue };
        let px = 0.5 * (orig.spacing_mm.0 + orig.spacing_mm.1);
        for (k, &c) in EVAL_CLASSES.iter().enumerate() {
            let (mo, mb, mr) = (orig.mask(c), bad.mask(c), out.mask(c));
            if let (Ok(after), Ok(before)) = (
                hausdorff(&mr, &mo, orig.spacing_mm),
                hausdorff(&mb, &mo, orig.spacing_mm),
            ) {
                increase_px[k].push((after - before) / px);
            }
            let before = dice(&mb, &mo).unwrap();
            let after = dice(&mr, &mo).unwrap();
            drops.push(before - after);
            loss_vs_original.push(1.0 - after);
        }
    }
    let medians: Vec<f64> = increase_px.iter().map(|v| median(v.clone())).collect();
    let mean_drop = drops.iter().sum::<f64>() / drops.len() as f64;
    let mean_loss = loss_vs_original.iter().sum::<f64>() / loss_vs_original.len() as f64;
    verdict(
        medians.iter().all(|&m| m <= 2.0) && mean_drop <= 0.05,
        format!(
            "median HD increase LV/MYO/RV {:.2}/{:.2}/{:.2} px, mean Dice drop vs corrupted {mean_drop:.4} \
             (1 - Dice vs original {mean_loss:.4})",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn ablation_ordering() -> Verdict {
    let d = desk();
    let heldout = generate_corpus(500, &ParamsDistribution::default(), &Thresholds::STRUCTURAL, &mut rng(4)).unwrap();
    let heldout_registered = register_all(&heldout, MODE).unwrap();
    let study = |model: &VaeModel<f32>, maps: &[SegMap]| {
        interpolation_study(model, maps, &d.th, 200, 25, &mut rng(5)).unwrap().percent_invalid
    };
    let plain = TrainConfig {
        variational: false,
        kl_weight: 0.0,
        adversarial_weight: 0.0,
        ..d.config
    };
    let vae = TrainConfig {
        adversarial_weight: 0.0,
        ..d.config
    };
    let a_model = train(&d.corpus, Architecture::desk(), &plain).unwrap().model;
    let a = study(&a_model, &heldout);
    let b_model = train(&d.corpus, Architecture::desk(), &vae).unwrap().model;
    let b = study(&b_model, &heldout);
    let c = study(&d.model, &heldout_registered);
    verdict(
        c < b && b < a && c <= 10.0,
        format!("invalid interpolants: autoencoder {a:.2}%, VAE unregistered {b:.2}%, registered aVAE {c:.2}%"),
    )
}

fn sampling_soundness() -> Verdict {
    let d = desk();
    let invalid = d.index.iter().filter(|z| !is_valid(&d.model.decode(z).unwrap(), &d.th)).count();

    let basis = fit_basis(&d.registered, &d.model, &d.th).unwrap();
    let p = &basis.parzen;
    let n = 20_000;
    let (out, _) = rejection_sample(
        n,
        p,
        Proposal::Mixture,
        &mut accept_all,
        &SamplerConfig::default(),
        &mut rng(6),
    )
    .unwrap();
    let centres = &basis.corpus_latents;
    let mean = p.mean();
    let h2 = p.bandwidth() * p.bandwidth();
    let mut worst = 0.0f64;
    for l in 0..LATENT_DIM {
        let var = centres.iter().map(|z| (z[l] as f64 - mean[l]).powi(2)).sum::<f64>() / centres.len() as f64 + h2;
        let se = (var / n as f64).sqrt();
        let got = out.iter().map(|z| z[l] as f64).sum::<f64>() / n as f64;
        worst = worst.max((got - mean[l]).abs() / se);
    }
    let valid_share = basis.valid_corpus_latents.len() as f64 / basis.corpus_latents.len() as f64;
    verdict(
        invalid == 0 && d.index.len() >= INDEX_SIZE && worst <= 3.0,
        format!(
            "{} of {} index codes decode invalid; forced acceptance worst mean offset {worst:.2} SE; \
             {:.1}% of training codes decode valid",
            invalid,
            d.index.len(),
            100.0 * valid_share
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut r = rng(8);
    let mut mismatches = Vec::new();
    let grids = 1_500;
    for i in 0..grids {
        let (rows, cols) = oracle::random_shape(&mut r);
        let a = oracle::random_grid(&mut r, rows, cols);
        let b = oracle::random_grid(&mut r, rows, cols);
        for m in oracle::compare_all(&a, &b) {
            mismatches.push(format!("grid {i}: {m}"));
        }
    }
    if let Some(first) = mismatches.first() {
        note(first);
    }
    verdict(
        mismatches.is_empty(),
        format!("{grids} grid pairs up to 32x32, {} mismatches", mismatches.len()),
    )
}

fn gradient_check() -> Verdict {
    let mut worst = 0.0f64;
    for variational in [true, false] {
        let mut r = rng(11);
        let mut model = VaeModel::<f64>::init(Architecture::tiny(), &mut r).unwrap();
        for p in model.params_mut().iter_mut() {
            *p += r.random_range(-0.05..0.05);
        }
        let maps: Vec<SegMap> = (0..3)
            .map(|i| {
                let labels = (0..64).map(|_| r.random_range(0..4u8)).collect();
                SegMap::from_labels(8, labels).unwrap().with_slice(i, 5).unwrap()
            })
            .collect();
        let batch: Vec<&SegMap> = maps.iter().collect();
        let w = LossWeights {
            kl_weight: 0.7,
            adversarial_weight: 0.3,
            variational,
        };
        let noise = || rng(99);
        let (_, grad) = loss_and_gradient(&model, &batch, &w, &mut noise()).unwrap();
        let h = 1e-5;
        for i in 0..model.num_params() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let up = loss(&model, &batch, &w, &mut noise()).unwrap().total;
            model.params_mut()[i] = orig - h;
            let down = loss(&model, &batch, &w, &mut noise()).unwrap().total;
            model.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = numeric.abs().max(grad[i].abs()).max(1e-12);
            worst = worst.max((numeric - grad[i]).abs() / scale);
        }
    }
    verdict(
        worst <= 1e-3,
        format!("worst relative error {worst:.2e} over both sampling modes"),
    )
}

fn dichotomic_contract() -> Verdict {
    let s = bisect_alpha(|a| Ok(a >= 0.3), DICHOTOMIC_ITERATIONS).unwrap();
    let width = s.hi - s.lo;
    verdict(
        s.alpha == 0.3125 && s.evaluations() == 6 && width == 1.0 / 32.0,
        format!("alpha {}, {} evaluations, bracket width {width}", s.alpha, s.evaluations()),
    )
}

fn gaussian_latents(n: usize, seed: u64) -> Vec<LatentVector> {
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

fn million() -> &'static (Vec<LatentVector>, LatentIndex) {
    static M: OnceLock<(Vec<LatentVector>, LatentIndex)> = OnceLock::new();
    M.get_or_init(|| {
        let data = gaussian_latents(1_000_000, 12);
        let index = LatentIndex::bulk_load(&data).unwrap();
        (data, index)
    })
}

/// Naive double-precision scan for a block of queries; strict `<` keeps the
/// lowest id on ties.
fn oracle_nearest(data: &[LatentVector], queries: &[LatentVector]) -> Vec<usize> {
    let qs: Vec<[f64; LATENT_DIM]> = queries.iter().map(|q| q.0.map(f64::from)).collect();
    let mut best = vec![(f64::INFINITY, 0usize); qs.len()];
    for (id, z) in data.iter().enumerate() {
        let z = z.0.map(f64::from);
        for (q, b) in qs.iter().zip(best.iter_mut()) {
            let mut d = 0.0;
            for l in 0..LATENT_DIM {
                let t = z[l] - q[l];
                d += t * t;
            }
            if d < b.0 {
                *b = (d, id);
            }
        }
    }
    best.into_iter().map(|(_, id)| id).collect()
}

fn nn_exactness() -> Verdict {
    let (data, index) = million();
    let queries = gaussian_latents(10_000, 13);
    let t = Instant::now();
    let got: Vec<usize> = queries.iter().map(|q| index.nearest(q).unwrap().id).collect();
    let rate = queries.len() as f64 / t.elapsed().as_secs_f64();
    let mut mismatches = 0;
    for (block, ids) in queries.chunks(64).zip(got.chunks(64)) {
        mismatches += oracle_nearest(data, block).iter().zip(ids).filter(|(a, b)| a != b).count();
    }
    verdict(
        mismatches == 0 && rate >= 20.0,
        format!("10000 queries on 1e6 codes, {mismatches} mismatches, {rate:.1} queries/s single-threaded"),
    )
}

fn mean_repair_seconds(maps: &[SegMap], model: &VaeModel<f32>, index: &LatentIndex, th: &Thresholds) -> (f64, usize) {
    let t = Instant::now();
    let mut full = 0;
    for m in maps {
        match repair_map(m, model, index, th, MODE) {
            Ok(r) => full += usize::from(r.decoder_calls >= 6),
            Err(_) => full += 1,
        }
    }
    (t.elapsed().as_secs_f64() / maps.len() as f64, full)
}

fn repair_latency() -> Verdict {
    let d = desk();
    let r = repaired();
    let invalid: Vec<SegMap> = r.corrupted.iter().filter(|m| !is_valid(m, &d.th)).cloned().collect();
    let (desk_s, _) = mean_repair_seconds(&invalid, &d.model, &d.index, &d.th);

    // Paper-scale network against a million codes. An untrained decoder
    // rarely yields valid shapes, so most slices take the full search.
    let (dist, arch) = anatomy_warden::pipeline::scale_for(256).unwrap();
    let big = generate_corpus(12, &dist, &Thresholds::STRUCTURAL, &mut rng(14)).unwrap();
    let th = calibrate_thresholds(&big).unwrap();
    let mut cr = rng(15);
    let bad: Vec<SegMap> = big
        .iter()
        .filter_map(|m| corrupt(m, &random_spec(&mut cr, 2..=6)).ok())
        .filter(|m| !is_valid(m, &th))
        .collect();
    let model = VaeModel::<f32>::init(arch, &mut rng(16)).unwrap();
    let (paper_s, full) = mean_repair_seconds(&bad, &model, &million().1, &th);
    verdict(
        desk_s <= 0.2 && paper_s <= 1.5,
        format!(
            "desk {:.1} ms/slice over {} slices; paper scale {:.3} s/slice over {} slices ({} with the full search)",
            1e3 * desk_s,
            invalid.len(),
            paper_s,
            bad.len(),
            full
        ),
    )
}

/// Per-class overlap after repairing a myocardial hole, on the desk model.
fn myo_hole_example() -> Verdict {
    let d = desk();
    let maps = generate_corpus(100, &ParamsDistribution::default(), &Thresholds::STRUCTURAL, &mut rng(17)).unwrap();
    let (mut checked, mut invalid) = (0, 0);
    let mut worse = [0usize; 3];
    let mut worst_loss = [0.0f64; 3];
    for (i, m) in maps.iter().enumerate() {
        let spec = CorruptionSpec {
            kind: CorruptionKind::HoleMyo,
            magnitude_px: 3,
            rng_seed: i as u64,
        };
        let Ok(bad) = corrupt(m, &spec) else { continue };
        let r = repair_map(&bad, &d.model, &d.index, &d.th, MODE).unwrap();
        invalid += usize::from(!is_valid(&r.output, &d.th));
        for (k, c) in EVAL_CLASSES.into_iter().enumerate() {
            let before = dice(&bad.mask(c), &m.mask(c)).unwrap();
            let after = dice(&r.output.mask(c), &m.mask(c)).unwrap();
            worse[k] += usize::from(after < before - 0.05);
            worst_loss[k] = worst_loss[k].max(before - after);
        }
        checked += 1;
    }
    verdict(
        invalid == 0 && worse == [0; 3] && checked >= 90,
        format!(
            "{checked} maps with a MYO hole, {invalid} invalid outputs; Dice lost more than 0.05 for LV/MYO/RV \
             in {}/{}/{} maps, worst loss {:.3}/{:.3}/{:.3}",
            worse[0], worse[1], worse[2], worst_loss[0], worst_loss[1], worst_loss[2]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("1 zero-invalid guarantee", zero_invalid_guarantee),
        ("2 bounded distortion", bounded_distortion),
        ("3 ablation ordering", ablation_ordering),
        ("4 rejection-sampling soundness", sampling_soundness),
        ("5 oracle equivalence", oracle_equivalence),
        ("6 gradient check", gradient_check),
        ("7 dichotomic-search contract", dichotomic_contract),
        ("8 nearest-neighbour exactness and throughput", nn_exactness),
        ("9 repair latency", repair_latency),
        ("example: MYO hole repair keeps overlap", myo_hole_example),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        failed += usize::from(!v.pass);
        println!(
            "{} {name}: {} [{:.0}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} failed");
        ExitCode::FAILURE
    }
}
