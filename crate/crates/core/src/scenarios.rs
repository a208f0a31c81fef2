//! Ready-made models with known exact answers.
//!
//! Expected tables are written out by hand (rational values, or closed-form
//! cosines for the quantum reference) and are independent of the
//! enumeration code; [`Scenario::verify`] checks one against the other.
//!
//! The M2 and M3 demos are constructions of this crate. The M2 demo is a
//! detection-loophole model: each setting pair only ever registers double
//! clicks on one source value, so post-selection picks a different
//! sub-ensemble per pair. The M3 demo correlates the two instrument
//! variables differently for each setting pair while keeping their
//! marginals fixed.

use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_postselected, enumerate_raw, ExactResult};
use crate::estimators::{chsh, no_signalling, Conditioning, CorrelationSet};
use crate::model::{
    numbered_atoms, AnalyzerAngle, Atom, DiscreteDistribution, ExperimentModel, FiniteModel,
    JointInstrument, ModelBody, Outcome, QuantumModel, ResponseTable, Setting, SettingPair,
    StationSetting, Variant,
};
use crate::quantum::{quantum_reference_correlation, CANONICAL_ANGLES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCell {
    pub sp: SettingPair,
    pub raw: ExactResult,
    pub post: ExactResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub cells: Vec<ExpectedCell>,
    pub s_max_abs_raw: f64,
    pub s_max_abs_post: f64,
    /// Largest |no-signalling delta| of the post-selected table.
    pub max_delta_post: f64,
    /// 0 for rational tables (bit-exact), otherwise the analytic tolerance.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ExperimentModel,
    pub expected: Option<Expected>,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    if tol == 0.0 {
        a == b
    } else {
        (a - b).abs() <= tol
    }
}

impl Scenario {
    /// Recomputes every expected number by enumeration.
    pub fn verify(&self) -> Result<()> {
        let Some(exp) = &self.expected else {
            return Ok(());
        };
        let tol = exp.tolerance;
        let mismatch = |what: String, want: f64, got: f64| {
            Error::ConstructionInvalid(format!("{}: {what}: expected {want}, got {got}", self.name))
        };
        for cell in &exp.cells {
            for (label, want, got) in [
                ("raw", cell.raw, enumerate_raw(&self.model, cell.sp)?),
                ("post", cell.post, enumerate_postselected(&self.model, cell.sp)?),
            ] {
                for (field, w, g) in [
                    ("e_ab", want.e_ab, got.e_ab),
                    ("e_a", want.e_a, got.e_a),
                    ("e_b", want.e_b, got.e_b),
                    ("c_xy", want.c_xy, got.c_xy),
                ] {
                    if !close(w, g, tol) {
                        return Err(mismatch(format!("{label} {field} at {}", cell.sp), w, g));
                    }
                }
            }
        }
        let raw = CorrelationSet::exact(&self.model, Conditioning::Raw)?;
        let post = CorrelationSet::exact(&self.model, Conditioning::PostSelected)?;
        let s_raw = chsh(&raw)?.s_max_abs;
        let s_post = chsh(&post)?.s_max_abs;
        let d_post = no_signalling(&post)?.max_abs_delta();
        for (what, want, got) in [
            ("raw s_max_abs", exp.s_max_abs_raw, s_raw),
            ("post-selected s_max_abs", exp.s_max_abs_post, s_post),
            ("post-selected max delta", exp.max_delta_post, d_post),
        ] {
            if !close(want, got, tol) {
                return Err(mismatch(what.into(), want, got));
            }
        }
        Ok(())
    }
}

fn exact(e_ab: f64, e_a: f64, e_b: f64, c_xy: f64) -> ExactResult {
    ExactResult { e_ab, e_a, e_b, c_xy }
}

fn sign(v: i32) -> Outcome {
    if v > 0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

fn trivial_instrument() -> DiscreteDistribution<Atom> {
    DiscreteDistribution::point(Atom::from("0"))
}

/// Die-roll model: `λ ∈ {1..6}` uniform, shared by both stations, settings
/// `x, y ∈ {1, −1}`, outcomes `a = x^λ`, `b = y^{λ+1}`.
pub fn lf_scenario() -> Scenario {
    let lambdas = numbered_atoms(6);
    let settings = [1, -1];
    let station = |offset: u32| -> Vec<StationSetting> {
        settings
            .iter()
            .map(|&s: &i32| StationSetting {
                setting: Setting(s),
                instrument: trivial_instrument(),
                response: ResponseTable::from_fn(6, 1, |l, _| sign(s.pow(l as u32 + 1 + offset))),
            })
            .collect()
    };
    let model = ExperimentModel {
        variant: Variant::Lhvm,
        body: ModelBody::Finite(FiniteModel {
            lambda1: lambdas.clone(),
            lambda2: lambdas,
            source: DiscreteDistribution::uniform((0..6).map(|i| (i, i)).collect()),
            alice: station(0),
            bob: station(1),
            joint: vec![],
        }),
    };
    // E(A_1) = 1, E(A_-1) = 0, and likewise for B; no zero outcomes.
    let table = [((1, 1), 1.0, 1.0, 1.0), ((1, -1), 0.0, 1.0, 0.0), ((-1, 1), 0.0, 0.0, 1.0), ((-1, -1), -1.0, 0.0, 0.0)];
    let cells = table
        .iter()
        .map(|&((x, y), e_ab, e_a, e_b)| {
            let r = exact(e_ab, e_a, e_b, 1.0);
            ExpectedCell {
                sp: SettingPair::new(x, y),
                raw: r,
                post: r,
            }
        })
        .collect();
    Scenario {
        name: "lf".into(),
        model,
        expected: Some(Expected {
            cells,
            s_max_abs_raw: 2.0,
            s_max_abs_post: 2.0,
            max_delta_post: 0.0,
            tolerance: 0.0,
        }),
    }
}

/// Shared two-valued λ (`p_same` = probability both halves agree) with
/// identity responses at every setting.
pub fn lhvm_socks_scenario(p_same: f64) -> Result<Scenario> {
    lhvm_socks_scenario_with(p_same, false)
}

/// As [`lhvm_socks_scenario`]; with `flip_second` both stations report
/// `−λ` at setting 2.
pub fn lhvm_socks_scenario_with(p_same: f64, flip_second: bool) -> Result<Scenario> {
    if !(0.0..=1.0).contains(&p_same) {
        return Err(Error::ConstructionInvalid(format!(
            "p_same = {p_same} is not a probability"
        )));
    }
    let lambdas = vec![Atom::from("+"), Atom::from("-")];
    let station = || -> Vec<StationSetting> {
        [1, 2]
            .iter()
            .map(|&s| {
                let flip = flip_second && s == 2;
                StationSetting {
                    setting: Setting(s),
                    instrument: trivial_instrument(),
                    response: ResponseTable::from_fn(2, 1, |l, _| {
                        let v = if l == 0 { 1 } else { -1 };
                        sign(if flip { -v } else { v })
                    }),
                }
            })
            .collect()
    };
    let same = p_same / 2.0;
    let diff = (1.0 - p_same) / 2.0;
    let model = ExperimentModel {
        variant: Variant::Lhvm,
        body: ModelBody::Finite(FiniteModel {
            lambda1: lambdas.clone(),
            lambda2: lambdas,
            source: DiscreteDistribution::new(
                vec![(0, 0), (0, 1), (1, 0), (1, 1)],
                vec![same, diff, diff, same],
            ),
            alice: station(),
            bob: station(),
            joint: vec![],
        }),
    };
    let c = 2.0 * p_same - 1.0;
    let cells = [(1, 1), (1, 2), (2, 1), (2, 2)]
        .iter()
        .map(|&(x, y)| {
            let flips = i32::from(flip_second && x == 2) + i32::from(flip_second && y == 2);
            let e_ab = if flips == 1 { -c } else { c };
            let r = exact(e_ab, 0.0, 0.0, 1.0);
            ExpectedCell {
                sp: SettingPair::new(x, y),
                raw: r,
                post: r,
            }
        })
        .collect();
    let s = 2.0 * c.abs();
    Ok(Scenario {
        name: "lhvm-socks".into(),
        model,
        expected: Some(Expected {
            cells,
            s_max_abs_raw: s,
            s_max_abs_post: s,
            max_delta_post: 0.0,
            tolerance: 1e-12,
        }),
    })
}

/// Finite M2 model whose post-selected statistics violate CHSH and
/// no-signalling while the raw ones do not.
///
/// * source: `λ ∈ {1, 2, 3, 4}` uniform, shared by both stations;
/// * Alice clicks at setting 1 iff `λ ∈ {1, 2}`, at setting 2 iff
///   `λ ∈ {3, 4}`; her instrument `λ_x ∈ {ok, flip}` with
///   `p_1(flip) = 1/8`, `p_2(flip) = 1/4` decides the sign (`flip` → −1);
/// * Bob (trivial instrument) clicks `+1` at setting 1 iff `λ ∈ {1, 3}`;
///   at setting 2 he answers `+1` for `λ = 2`, `−1` for `λ = 4`.
///
/// Each setting pair therefore sees double clicks on exactly one λ.
pub fn m2_demo_scenario() -> Result<Scenario> {
    let lambdas = numbered_atoms(4);
    let alice_inst = |p_flip: f64| {
        DiscreteDistribution::new(vec![Atom::from("ok"), Atom::from("flip")], vec![1.0 - p_flip, p_flip])
    };
    let alice_resp = |detect: [usize; 2]| {
        ResponseTable::from_fn(4, 2, move |l, u| {
            if !detect.contains(&(l + 1)) {
                Outcome::Zero
            } else if u == 0 {
                Outcome::Plus
            } else {
                Outcome::Minus
            }
        })
    };
    let bob_resp = |f: fn(usize) -> Outcome| ResponseTable::from_fn(4, 1, move |l, _| f(l + 1));
    let model = ExperimentModel {
        variant: Variant::M2,
        body: ModelBody::Finite(FiniteModel {
            lambda1: lambdas.clone(),
            lambda2: lambdas,
            source: DiscreteDistribution::uniform((0..4).map(|i| (i, i)).collect()),
            alice: vec![
                StationSetting {
                    setting: Setting(1),
                    instrument: alice_inst(0.125),
                    response: alice_resp([1, 2]),
                },
                StationSetting {
                    setting: Setting(2),
                    instrument: alice_inst(0.25),
                    response: alice_resp([3, 4]),
                },
            ],
            bob: vec![
                StationSetting {
                    setting: Setting(1),
                    instrument: trivial_instrument(),
                    response: bob_resp(|l| if l == 1 || l == 3 { Outcome::Plus } else { Outcome::Zero }),
                },
                StationSetting {
                    setting: Setting(2),
                    instrument: trivial_instrument(),
                    response: bob_resp(|l| match l {
                        2 => Outcome::Plus,
                        4 => Outcome::Minus,
                        _ => Outcome::Zero,
                    }),
                },
            ],
            joint: vec![],
        }),
    };
    // Hand enumeration. Alice's sign has mean 3/4 at x=1 and 1/2 at x=2;
    // each pair keeps one λ of weight 1/4.
    let cells = vec![
        ExpectedCell {
            sp: SettingPair::new(1, 1),
            raw: exact(3.0 / 16.0, 3.0 / 8.0, 0.5, 0.25),
            post: exact(0.75, 0.75, 1.0, 0.25),
        },
        ExpectedCell {
            sp: SettingPair::new(1, 2),
            raw: exact(3.0 / 16.0, 3.0 / 8.0, 0.0, 0.25),
            post: exact(0.75, 0.75, 1.0, 0.25),
        },
        ExpectedCell {
            sp: SettingPair::new(2, 1),
            raw: exact(0.125, 0.25, 0.5, 0.25),
            post: exact(0.5, 0.5, 1.0, 0.25),
        },
        ExpectedCell {
            sp: SettingPair::new(2, 2),
            raw: exact(-0.125, 0.25, 0.0, 0.25),
            post: exact(-0.5, 0.5, -1.0, 0.25),
        },
    ];
    let scenario = Scenario {
        name: "m2-demo".into(),
        model,
        expected: Some(Expected {
            cells,
            s_max_abs_raw: 0.625,
            s_max_abs_post: 2.5,
            max_delta_post: 2.0,
            tolerance: 0.0,
        }),
    };
    check_m2(&scenario)?;
    Ok(scenario)
}

/// Build-time guard: raw CHSH holds, post-selected CHSH and no-signalling fail.
fn check_m2(s: &Scenario) -> Result<()> {
    let raw = CorrelationSet::exact(&s.model, Conditioning::Raw)?;
    let post = CorrelationSet::exact(&s.model, Conditioning::PostSelected)?;
    let s_raw = chsh(&raw)?.s_max_abs;
    let s_post = chsh(&post)?.s_max_abs;
    let delta = no_signalling(&post)?.max_abs_delta();
    if s_raw > 2.0 {
        return Err(Error::ConstructionInvalid(format!("raw |S| = {s_raw} exceeds 2")));
    }
    if s_post <= 2.0 {
        return Err(Error::ConstructionInvalid(format!(
            "post-selected |S| = {s_post} does not exceed 2"
        )));
    }
    if delta == 0.0 {
        return Err(Error::ConstructionInvalid(
            "post-selected marginals do not signal".into(),
        ));
    }
    Ok(())
}

/// Correlation of the instrument pair `(λ_x, λ_y)` for each setting pair of
/// the M3 demo, in `(1,1), (1,2), (2,1), (2,2)` order.
pub const M3_DEMO_INSTRUMENT_CORRELATION: [f64; 4] = [0.75, 0.75, 0.75, -0.75];

/// Finite M3 model with setting-pair dependent instrument correlations.
///
/// Source `λ ∈ {+, −}` uniform and shared; every instrument variable is
/// `±` with declared marginal 1/2 each; `A_x = λ₁·λ_x`, `B_y = λ₂·λ_y`.
/// The joint `p_xy` has `P(λ_x = λ_y) = (1 + c_xy)/2`, so `E(A_x B_y) = c_xy`.
pub fn m3_demo_scenario() -> Result<Scenario> {
    let pm = vec![Atom::from("+"), Atom::from("-")];
    let product = |src: usize, inst: usize| sign(if src == inst { 1 } else { -1 });
    let station = || -> Vec<StationSetting> {
        [1, 2]
            .iter()
            .map(|&s| StationSetting {
                setting: Setting(s),
                instrument: DiscreteDistribution::uniform(pm.clone()),
                response: ResponseTable::from_fn(2, 2, product),
            })
            .collect()
    };
    let pairs = [(1, 1), (1, 2), (2, 1), (2, 2)];
    let joint = pairs
        .iter()
        .zip(M3_DEMO_INSTRUMENT_CORRELATION)
        .map(|(&(x, y), c)| {
            let same = (1.0 + c) / 4.0;
            let diff = (1.0 - c) / 4.0;
            JointInstrument {
                pair: SettingPair::new(x, y),
                dist: DiscreteDistribution::new(
                    vec![(0, 0), (0, 1), (1, 0), (1, 1)],
                    vec![same, diff, diff, same],
                ),
            }
        })
        .collect();
    let model = ExperimentModel {
        variant: Variant::M3,
        body: ModelBody::Finite(FiniteModel {
            lambda1: pm.clone(),
            lambda2: pm.clone(),
            source: DiscreteDistribution::new(vec![(0, 0), (1, 1)], vec![0.5, 0.5]),
            alice: station(),
            bob: station(),
            joint,
        }),
    };
    let cells = pairs
        .iter()
        .zip(M3_DEMO_INSTRUMENT_CORRELATION)
        .map(|(&(x, y), c)| {
            let r = exact(c, 0.0, 0.0, 1.0);
            ExpectedCell {
                sp: SettingPair::new(x, y),
                raw: r,
                post: r,
            }
        })
        .collect();
    let scenario = Scenario {
        name: "m3-demo".into(),
        model,
        expected: Some(Expected {
            cells,
            s_max_abs_raw: 3.0,
            s_max_abs_post: 3.0,
            max_delta_post: 0.0,
            tolerance: 0.0,
        }),
    };
    check_m3(&scenario)?;
    Ok(scenario)
}

fn check_m3(s: &Scenario) -> Result<()> {
    let m = s.model.finite().expect("m3 demo is finite");
    for j in &m.joint {
        let a = &m.station_setting(crate::model::Station::A, j.pair.x)?.instrument;
        let b = &m.station_setting(crate::model::Station::B, j.pair.y)?.instrument;
        let mut ma = vec![0.0; a.len()];
        let mut mb = vec![0.0; b.len()];
        let mut product = true;
        for (&(u, v), p) in j.dist.iter() {
            ma[u] += p;
            mb[v] += p;
            product &= (p - a.probs[u] * b.probs[v]).abs() <= 1e-12;
        }
        let off = ma
            .iter()
            .zip(&a.probs)
            .chain(mb.iter().zip(&b.probs))
            .any(|(x, y)| (x - y).abs() > crate::model::PROB_TOLERANCE);
        if off {
            return Err(Error::ConstructionInvalid(format!(
                "joint marginals at {} differ from the declared instrument distributions",
                j.pair
            )));
        }
        if product {
            return Err(Error::ConstructionInvalid(format!(
                "joint instrument table at {} is a product",
                j.pair
            )));
        }
    }
    let post = CorrelationSet::exact(&s.model, Conditioning::PostSelected)?;
    let s_post = chsh(&post)?.s_max_abs;
    if s_post <= 2.0 {
        return Err(Error::ConstructionInvalid(format!("|S| = {s_post} does not exceed 2")));
    }
    Ok(())
}

/// Ideal EPRB reference with analyzer angles `[a1, a2, b1, b2]` for
/// settings 1 and 2 at each station.
pub fn quantum_scenario(angles: [f64; 4]) -> Scenario {
    let [a1, a2, b1, b2] = angles;
    let angle = |s, r| AnalyzerAngle {
        setting: Setting(s),
        radians: r,
    };
    let model = ExperimentModel {
        variant: Variant::QuantumRef,
        body: ModelBody::Quantum(QuantumModel {
            alice: vec![angle(1, a1), angle(2, a2)],
            bob: vec![angle(1, b1), angle(2, b2)],
        }),
    };
    let pairs = [((1, 1), a1, b1), ((1, 2), a1, b2), ((2, 1), a2, b1), ((2, 2), a2, b2)];
    let cells = pairs
        .iter()
        .map(|&((x, y), ta, tb)| {
            let r = exact(quantum_reference_correlation(ta, tb), 0.0, 0.0, 1.0);
            ExpectedCell {
                sp: SettingPair::new(x, y),
                raw: r,
                post: r,
            }
        })
        .collect::<Vec<_>>();
    let e: Vec<f64> = cells.iter().map(|c| c.raw.e_ab).collect();
    let s = crate::estimators::chsh_values([e[0], e[1], e[2], e[3]]);
    let s_max = crate::estimators::max_abs(&s).1;
    Scenario {
        name: "quantum".into(),
        model,
        expected: Some(Expected {
            cells,
            s_max_abs_raw: s_max,
            s_max_abs_post: s_max,
            max_delta_post: 0.0,
            tolerance: 1e-12,
        }),
    }
}

pub fn quantum_canonical_scenario() -> Scenario {
    quantum_scenario(CANONICAL_ANGLES)
}

/// Names accepted by [`by_name`].
pub const SCENARIO_NAMES: [&str; 5] = ["lf", "lhvm-socks", "m2-demo", "m3-demo", "quantum"];

/// Default knobs for parameterized scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub p_same: f64,
    pub flip_second: bool,
    pub angles: [f64; 4],
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            p_same: 1.0,
            flip_second: false,
            angles: CANONICAL_ANGLES,
        }
    }
}

pub fn by_name(name: &str, params: &ScenarioParams) -> Result<Scenario> {
    match name {
        "lf" => Ok(lf_scenario()),
        "lhvm-socks" => lhvm_socks_scenario_with(params.p_same, params.flip_second),
        "m2-demo" => m2_demo_scenario(),
        "m3-demo" => m3_demo_scenario(),
        "quantum" => Ok(quantum_scenario(params.angles)),
        other => Err(Error::ConstructionInvalid(format!(
            "unknown scenario {other:?}; known: {}",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

/// Every shipped scenario with default parameters, plus a noisy socks model.
pub fn all_scenarios() -> Result<Vec<Scenario>> {
    Ok(vec![
        lf_scenario(),
        lhvm_socks_scenario_with(0.8, true)?,
        m2_demo_scenario()?,
        m3_demo_scenario()?,
        quantum_canonical_scenario(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use std::f64::consts::PI;

    #[test]
    fn every_scenario_validates_and_verifies() {
        for s in all_scenarios().unwrap() {
            assert!(validate_model(&s.model).is_ok(), "{}", s.name);
            s.verify().unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
    }

    #[test]
    fn socks_perfect_correlation() {
        let s = lhvm_socks_scenario(1.0).unwrap();
        s.verify().unwrap();
        for c in &s.expected.as_ref().unwrap().cells {
            assert_eq!(c.post.e_ab, 1.0);
        }
        assert_eq!(s.expected.unwrap().s_max_abs_post, 2.0);
    }

    #[test]
    fn socks_half_with_flip_is_uncorrelated() {
        let s = lhvm_socks_scenario_with(0.5, true).unwrap();
        s.verify().unwrap();
        let post = CorrelationSet::exact(&s.model, Conditioning::PostSelected).unwrap();
        assert_eq!(post.correlators().unwrap(), [0.0; 4]);
    }

    #[test]
    fn socks_never_signals() {
        for p in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let s = lhvm_socks_scenario_with(p, true).unwrap();
            let post = CorrelationSet::exact(&s.model, Conditioning::PostSelected).unwrap();
            assert_eq!(no_signalling(&post).unwrap().max_abs_delta(), 0.0);
        }
    }

    #[test]
    fn socks_rejects_bad_probability() {
        assert!(matches!(lhvm_socks_scenario(1.5), Err(Error::ConstructionInvalid(_))));
    }

    #[test]
    fn wrong_expected_value_is_caught() {
        let mut s = lf_scenario();
        s.expected.as_mut().unwrap().cells[0].post.e_ab = 0.5;
        assert!(matches!(s.verify(), Err(Error::ConstructionInvalid(_))));
    }

    #[test]
    fn broken_m2_fails_its_guard() {
        let mut s = m2_demo_scenario().unwrap();
        // Bob clicks on every λ at setting 2: the sub-ensemble trick is gone.
        if let ModelBody::Finite(f) = &mut s.model.body {
            f.bob[1].response = ResponseTable::from_fn(4, 1, |_, _| Outcome::Plus);
            f.bob[0].response = ResponseTable::from_fn(4, 1, |_, _| Outcome::Plus);
        }
        assert!(matches!(check_m2(&s), Err(Error::ConstructionInvalid(_))));
    }

    #[test]
    fn quantum_orthogonal_pair() {
        let s = quantum_scenario([0.0, 0.0, PI / 2.0, 0.0]);
        let r = enumerate_raw(&s.model, SettingPair::new(1, 1)).unwrap();
        assert!((r.e_ab + 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantum_equal_angles() {
        let s = quantum_scenario([0.4; 4]);
        for c in s.expected.unwrap().cells {
            assert_eq!(c.post.e_ab, 1.0);
        }
    }

    #[test]
    fn registry_knows_every_name() {
        for n in SCENARIO_NAMES {
            assert_eq!(by_name(n, &ScenarioParams::default()).unwrap().name, n);
        }
        assert!(by_name("nope", &ScenarioParams::default()).is_err());
    }
}
