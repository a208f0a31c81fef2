//! Exact evaluation by enumeration over finite λ-spaces.
//!
//! For a setting pair `(x, y)` every point `λ = (λ₁, λ₂, λ_x, λ_y)` carries
//! weight `p_x(λ_x) p_y(λ_y) p(λ₁, λ₂)` (independent instruments) or
//! `p_xy(λ_x, λ_y) p(λ₁, λ₂)` (M3). The raw expectations sum over the whole
//! space; the post-selected ones restrict to points where both outcomes are
//! non-zero and divide by `C_xy = p(A_x B_y ≠ 0)`.

use serde::{Deserialize, Serialize};

use crate::model::{ExperimentModel, FiniteModel, ModelBody, Outcome, SettingPair, Station};
use crate::quantum::quantum_reference_correlation;
use crate::{Error, Result};

/// Exact expectations for one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub e_ab: f64,
    pub e_a: f64,
    pub e_b: f64,
    /// `C_xy = p(A_x B_y ≠ 0)`.
    pub c_xy: f64,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Default)]
struct Moments {
    total: Sum,
    ab: Sum,
    a: Sum,
    b: Sum,
    post_weight: Sum,
    post_ab: Sum,
    post_a: Sum,
    post_b: Sum,
}

impl Moments {
    fn push(&mut self, w: f64, a: Outcome, b: Outcome) {
        let (av, bv) = (a.as_f64(), b.as_f64());
        self.total.add(w);
        self.ab.add(w * av * bv);
        self.a.add(w * av);
        self.b.add(w * bv);
        if a.is_click() && b.is_click() {
            self.post_weight.add(w);
            self.post_ab.add(w * av * bv);
            self.post_a.add(w * av);
            self.post_b.add(w * bv);
        }
    }
}

/// Calls `visit(weight, a, b)` for every point of `Λ_xy` with non-zero weight.
pub fn for_each_point(
    model: &FiniteModel,
    sp: SettingPair,
    mut visit: impl FnMut(f64, Outcome, Outcome),
) -> Result<()> {
    let alice = model.station_setting(Station::A, sp.x)?;
    let bob = model.station_setting(Station::B, sp.y)?;
    let joint = model.joint_for(sp);
    for (&(l1, l2), p_src) in model.source.iter() {
        if p_src == 0.0 {
            continue;
        }
        match joint {
            Some(j) => {
                for (&(u, v), p_uv) in j.dist.iter() {
                    let w = p_uv * p_src;
                    if w != 0.0 {
                        visit(w, alice.response.get(l1, u), bob.response.get(l2, v));
                    }
                }
            }
            None => {
                for (u, p_u) in alice.instrument.probs.iter().copied().enumerate() {
                    if p_u == 0.0 {
                        continue;
                    }
                    let a = alice.response.get(l1, u);
                    for (v, p_v) in bob.instrument.probs.iter().copied().enumerate() {
                        let w = p_u * p_v * p_src;
                        if w != 0.0 {
                            visit(w, a, bob.response.get(l2, v));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn moments(model: &FiniteModel, sp: SettingPair) -> Result<Moments> {
    let mut m = Moments::default();
    for_each_point(model, sp, |w, a, b| m.push(w, a, b))?;
    Ok(m)
}

fn quantum_exact(model: &ExperimentModel, sp: SettingPair) -> Result<Option<ExactResult>> {
    let ModelBody::Quantum(q) = &model.body else {
        return Ok(None);
    };
    let ta = q.angle(Station::A, sp.x)?;
    let tb = q.angle(Station::B, sp.y)?;
    Ok(Some(ExactResult {
        e_ab: quantum_reference_correlation(ta, tb),
        e_a: 0.0,
        e_b: 0.0,
        c_xy: 1.0,
    }))
}

/// Unconditional expectations over the full `Λ_xy`, zero outcomes included.
///
/// Weights are divided by their enumerated total (within 1e−9 of 1 for a
/// valid model), so a model without zero outcomes has `c_xy = 1` exactly.
pub fn enumerate_raw(model: &ExperimentModel, sp: SettingPair) -> Result<ExactResult> {
    if let Some(r) = quantum_exact(model, sp)? {
        return Ok(r);
    }
    let finite = model.finite().ok_or(Error::NonFiniteSpace)?;
    let m = moments(finite, sp)?;
    let total = m.total.value();
    if total <= 0.0 {
        return Err(Error::DegenerateConditioning(sp));
    }
    Ok(ExactResult {
        e_ab: m.ab.value() / total,
        e_a: m.a.value() / total,
        e_b: m.b.value() / total,
        c_xy: m.post_weight.value() / total,
    })
}

/// Expectations conditioned on `A_x B_y ≠ 0`.
pub fn enumerate_postselected(model: &ExperimentModel, sp: SettingPair) -> Result<ExactResult> {
    if let Some(r) = quantum_exact(model, sp)? {
        return Ok(r);
    }
    let finite = model.finite().ok_or(Error::NonFiniteSpace)?;
    let m = moments(finite, sp)?;
    let post = m.post_weight.value();
    if post <= 0.0 {
        return Err(Error::DegenerateConditioning(sp));
    }
    Ok(ExactResult {
        e_ab: m.post_ab.value() / post,
        e_a: m.post_a.value() / post,
        e_b: m.post_b.value() / post,
        c_xy: post / m.total.value(),
    })
}
