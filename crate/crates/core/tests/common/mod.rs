//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

use bellsim::coupling::JointSpec;
use bellsim::enumerate::enumerate_postselected;
use bellsim::estimators::{chsh, estimate_postselected, no_signalling, CellEstimate, CorrelationSet};
use bellsim::model::{
    numbered_atoms, DiscreteDistribution, ExperimentModel, FiniteModel, JointInstrument, ModelBody,
    Outcome, ResponseTable, Setting, StationSetting, Variant,
};
use bellsim::streams::{
    coincidences_to_csv_string, generate_streams, pair_coincidences_with, Schedule, SettingRule,
};
use proptest::test_runner::{Config, RngSeed};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Property-test config with a fixed seed, so statistical checks are
/// reproducible run to run.
pub fn fixed_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed_be11),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Probabilities from small integer weights, so sums are well conditioned.
pub fn random_probs(rng: &mut (impl Rng + ?Sized), n: usize) -> Vec<f64> {
    let w: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=9)).collect();
    let total: u32 = w.iter().sum();
    w.iter().map(|&v| f64::from(v) / f64::from(total)).collect()
}

fn random_outcome(rng: &mut (impl Rng + ?Sized), zero_rate: f64) -> Outcome {
    if rng.gen::<f64>() < zero_rate {
        Outcome::Zero
    } else if rng.gen::<bool>() {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

pub struct Shape {
    pub variant: Variant,
    pub zero_rate: f64,
    pub max_instrument: usize,
}

/// Random finite model with two settings per station (labels 1 and 2) and
/// a source of at most 12 atoms.
pub fn random_finite_model(rng: &mut impl Rng, shape: &Shape) -> ExperimentModel {
    let n1 = rng.gen_range(1..=4usize);
    let n2 = rng.gen_range(1..=3usize);
    let mut pairs: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    let keep = rng.gen_range(1..=pairs.len().min(12));
    for i in 0..keep {
        let j = rng.gen_range(i..pairs.len());
        pairs.swap(i, j);
    }
    pairs.truncate(keep);
    pairs.sort_unstable();
    let probs = random_probs(rng, pairs.len());
    let station = |n_source: usize, rng: &mut dyn rand::RngCore| -> Vec<StationSetting> {
        [1, 2]
            .iter()
            .map(|&s| {
                let k = if shape.variant == Variant::M3 { 2 } else { rng.gen_range(1..=shape.max_instrument) };
                let mut outcomes = Vec::new();
                for _ in 0..n_source * k {
                    outcomes.push(random_outcome(rng, shape.zero_rate));
                }
                StationSetting {
                    setting: Setting(s),
                    instrument: DiscreteDistribution::new(numbered_atoms(k), random_probs(rng, k)),
                    response: ResponseTable::from_rows(n_source, k, outcomes).unwrap(),
                }
            })
            .collect()
    };
    let alice = station(n1, rng);
    let bob = station(n2, rng);
    let mut joint = Vec::new();
    if shape.variant == Variant::M3 {
        for &(x, y) in &[(1, 1), (1, 2), (2, 1), (2, 2)] {
            let pa = alice[x as usize - 1].instrument.probs[0];
            let pb = bob[y as usize - 1].instrument.probs[0];
            let t = rng.gen_range((pa + pb - 1.0).max(0.0)..=pa.min(pb));
            joint.push(JointInstrument {
                pair: bellsim::model::SettingPair::new(x, y),
                dist: DiscreteDistribution::new(
                    vec![(0, 0), (0, 1), (1, 0), (1, 1)],
                    vec![t, (pa - t).max(0.0), (pb - t).max(0.0), (1.0 - pa - pb + t).max(0.0)],
                ),
            });
        }
    }
    ExperimentModel {
        variant: shape.variant,
        body: ModelBody::Finite(FiniteModel {
            lambda1: numbered_atoms(n1),
            lambda2: numbered_atoms(n2),
            source: DiscreteDistribution::new(pairs, probs),
            alice,
            bob,
            joint,
        }),
    }
}

pub fn random_lhvm(rng: &mut impl Rng) -> ExperimentModel {
    random_finite_model(
        rng,
        &Shape {
            variant: Variant::Lhvm,
            zero_rate: 0.0,
            max_instrument: 2,
        },
    )
}

/// Pair table entry bounds: `p(a, b) ≥ 0` for all signs.
pub fn correlator_range(ea: f64, eb: f64) -> (f64, f64) {
    ((ea + eb).abs() - 1.0, 1.0 - (ea - eb).abs())
}

/// Random spec with consistent marginals and valid pair tables. A third
/// of the draws use zero marginals, where the CHSH boundary matters most.
pub fn random_well_posed_spec(rng: &mut impl Rng) -> JointSpec {
    let zero = rng.gen_range(0..3) == 0;
    let mut s = || if zero { 0.0 } else { rng.gen_range(-1.0..=1.0) };
    let a = [s(), s()];
    let b = [s(), s()];
    let mut e = [0.0; 4];
    for (i, slot) in e.iter_mut().enumerate() {
        let (lo, hi) = correlator_range(a[i / 2], b[i % 2]);
        *slot = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    }
    JointSpec::consistent(e, a, b)
}

pub fn within_se(est: f64, se: f64, exact: f64, k: f64) -> bool {
    (est - exact).abs() <= k * se + 1e-12
}

/// Largest |estimate − exact| / SE over every cell quantity; cells whose
/// SE is zero must match exactly.
pub fn worst_z(cells: &[CellEstimate], exact: impl Fn(&CellEstimate) -> [f64; 3]) -> f64 {
    let mut worst = 0.0f64;
    for c in cells {
        let want = exact(c);
        for ((est, se), w) in [(c.e_ab, c.se_ab), (c.e_a, c.se_a), (c.e_b, c.se_b)].into_iter().zip(want) {
            let d = (est - w).abs();
            let z = if se > 0.0 {
                d / se
            } else if d <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    worst
}

pub const PIPELINE_WINDOW_NS: u64 = 1_000;

/// Artifacts of one streams → pairing → estimation run.
pub struct PipelineRun {
    pub post: CorrelationSet,
    pub coincidences_csv: String,
    pub reports: String,
    pub worst_z: f64,
}

pub fn run_pipeline(model: &ExperimentModel, n_windows: u64, seed: u64) -> PipelineRun {
    let sched = Schedule::windows(n_windows, PIPELINE_WINDOW_NS, SettingRule::Random).unwrap();
    let (sa, sb) = generate_streams(model, &sched, 1.0, seed).unwrap();
    let pairing = pair_coincidences_with(&sa, &sb, PIPELINE_WINDOW_NS, sched.resolver(model, seed)).unwrap();
    let post = estimate_postselected(&pairing.records).unwrap();
    let worst = worst_z(&post.cells, |c| {
        let r = enumerate_postselected(model, c.sp).unwrap();
        [r.e_ab, r.e_a, r.e_b]
    });
    let mut reports = post.to_json();
    reports.push_str(&post.to_csv());
    reports.push_str(&chsh(&post).unwrap().to_json());
    reports.push_str(&no_signalling(&post).unwrap().to_json());
    PipelineRun {
        coincidences_csv: coincidences_to_csv_string(&pairing.records),
        post,
        reports,
        worst_z: worst,
    }
}
