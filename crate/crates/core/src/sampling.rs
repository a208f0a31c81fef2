//! Seeded Monte Carlo sampling of single trials.
//!
//! Randomness enters only through the λ draws; outcomes are deterministic
//! functions of the drawn values. Every trial gets its own generator keyed by
//! `(master seed, domain, a, b)`, so results do not depend on evaluation
//! order or thread count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    validate_model, DiscreteDistribution, ExperimentModel, ModelBody, Outcome, SettingPair, Station,
};
use crate::quantum::equal_outcome_probability;
use crate::{Error, Result};

/// Key space separators for [`split_rng`].
pub mod domain {
    pub const TRIAL: u64 = 1;
    pub const WINDOW: u64 = 2;
    pub const SETTINGS: u64 = 3;
}

/// Independent generator for `(seed, domain, a, b)`; the four words form the
/// ChaCha key directly.
pub fn split_rng(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, domain, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One simulated trial. Unlike paired coincidence records, `(0, 0)` is a
/// legal outcome here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub index: u64,
    pub sp: SettingPair,
    pub a: Outcome,
    pub b: Outcome,
}

fn weighted<T>(d: &DiscreteDistribution<T>) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(d.probs.iter().copied())
        .map_err(|e| Error::InvalidModel(format!("cannot sample distribution: {e}")))
}

enum Compiled {
    Finite {
        source: WeightedIndex<f64>,
        alice: Vec<WeightedIndex<f64>>,
        bob: Vec<WeightedIndex<f64>>,
        joint: Vec<(SettingPair, WeightedIndex<f64>)>,
    },
    Quantum,
    Sampled,
}

/// A validated model with precomputed sampling tables.
pub struct ModelSampler<'m> {
    model: &'m ExperimentModel,
    compiled: Compiled,
}

impl<'m> ModelSampler<'m> {
    pub fn new(model: &'m ExperimentModel) -> Result<Self> {
        validate_model(model).into_result()?;
        let compiled = match &model.body {
            ModelBody::Finite(m) => Compiled::Finite {
                source: weighted(&m.source)?,
                alice: m.alice.iter().map(|s| weighted(&s.instrument)).collect::<Result<_>>()?,
                bob: m.bob.iter().map(|s| weighted(&s.instrument)).collect::<Result<_>>()?,
                joint: m
                    .joint
                    .iter()
                    .map(|j| Ok((j.pair, weighted(&j.dist)?)))
                    .collect::<Result<_>>()?,
            },
            ModelBody::Quantum(_) => Compiled::Quantum,
            ModelBody::Sampled(_) => Compiled::Sampled,
        };
        Ok(Self { model, compiled })
    }

    pub fn model(&self) -> &ExperimentModel {
        self.model
    }

    pub fn sample<R: Rng + ?Sized>(&self, sp: SettingPair, rng: &mut R) -> Result<(Outcome, Outcome)> {
        match (&self.compiled, &self.model.body) {
            (
                Compiled::Finite {
                    source,
                    alice,
                    bob,
                    joint,
                },
                ModelBody::Finite(m),
            ) => {
                let xi = m
                    .alice
                    .iter()
                    .position(|s| s.setting == sp.x)
                    .ok_or(Error::UnknownSetting {
                        station: Station::A,
                        setting: sp.x,
                    })?;
                let yi = m
                    .bob
                    .iter()
                    .position(|s| s.setting == sp.y)
                    .ok_or(Error::UnknownSetting {
                        station: Station::B,
                        setting: sp.y,
                    })?;
                let (l1, l2) = m.source.atoms[source.sample(rng)];
                let (u, v) = match joint.iter().find(|(p, _)| *p == sp) {
                    Some((_, w)) => {
                        let jd = &m.joint_for(sp).expect("compiled from model").dist;
                        jd.atoms[w.sample(rng)]
                    }
                    None => (alice[xi].sample(rng), bob[yi].sample(rng)),
                };
                Ok((
                    m.alice[xi].response.get(l1, u),
                    m.bob[yi].response.get(l2, v),
                ))
            }
            (Compiled::Quantum, ModelBody::Quantum(q)) => {
                let ta = q.angle(Station::A, sp.x)?;
                let tb = q.angle(Station::B, sp.y)?;
                let a = if rng.gen::<bool>() {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                };
                let same = rng.gen::<f64>() < equal_outcome_probability(ta, tb);
                let b = match (same, a) {
                    (true, a) => a,
                    (false, Outcome::Plus) => Outcome::Minus,
                    (false, _) => Outcome::Plus,
                };
                Ok((a, b))
            }
            (Compiled::Sampled, ModelBody::Sampled(s)) => {
                self.model.ensure_pair(sp)?;
                let mut dyn_rng = RngRef(rng);
                let (l1, l2) = (s.source)(&mut dyn_rng);
                let (lx, ly) = (s.instruments)(sp, &mut dyn_rng);
                Ok(((s.alice_response)(sp.x, l1, lx), (s.bob_response)(sp.y, l2, ly)))
            }
            _ => unreachable!("compiled form always matches the model body"),
        }
    }
}

/// Adapter so an unsized `Rng` can be handed to sampler closures.
struct RngRef<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngRef<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Draws one trial. Prefer [`ModelSampler`] in loops; this recompiles the
/// sampling tables on every call.
pub fn sample_trial<R: Rng + ?Sized>(
    model: &ExperimentModel,
    sp: SettingPair,
    rng: &mut R,
) -> Result<(Outcome, Outcome)> {
    ModelSampler::new(model)?.sample(sp, rng)
}

/// `n_per_pair` trials for every declared setting pair, ordered by pair then
/// trial index. Trial `t` of pair `p` uses `split_rng(seed, TRIAL, p, t)`.
pub fn monte_carlo(model: &ExperimentModel, n_per_pair: u64, seed: u64) -> Result<Vec<Trial>> {
    let sampler = ModelSampler::new(model)?;
    let pairs = model.setting_pairs();
    let mut out = Vec::with_capacity(pairs.len() * n_per_pair as usize);
    for (p, &sp) in pairs.iter().enumerate() {
        let chunk: Vec<Trial> = (0..n_per_pair)
            .into_par_iter()
            .map(|t| {
                let mut rng = split_rng(seed, domain::TRIAL, p as u64, t);
                let (a, b) = sampler.sample(sp, &mut rng)?;
                Ok(Trial { index: t, sp, a, b })
            })
            .collect::<Result<_>>()?;
        out.extend(chunk);
    }
    Ok(out)
}
