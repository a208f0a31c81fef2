//! Model definition files (TOML).
//!
//! ```toml
//! variant = "M2"            # LHVM | M1 | M2 | M3 | QuantumRef
//!
//! [source]
//! lambda1 = ["1", "2"]
//! lambda2 = ["1", "2"]
//! table = [{ l1 = "1", l2 = "1", p = 0.5 }, { l1 = "2", l2 = "2", p = "1/2" }]
//!
//! [[alice]]                 # one block per setting, same for [[bob]]
//! setting = 1
//! instrument = ["ok", "flip"]
//! probs = [0.875, 0.125]
//! responses = [{ source = "1", instrument = "ok", outcome = 1 }, ...]
//!
//! [[joint]]                 # M3 only: p_xy(λ_x, λ_y) per setting pair
//! x = 1
//! y = 1
//! table = [{ a = "ok", b = "ok", p = 0.5 }, ...]
//!
//! [quantum]                 # QuantumRef only
//! alice = [{ setting = 1, radians = 0.0 }, ...]
//! bob = [{ setting = 1, radians = 0.39269908169872414 }, ...]
//! ```
//!
//! Probabilities may be written as numbers or as `"n/d"` strings. Every
//! `(source atom, instrument atom)` pair needs exactly one response row.
//! Saving writes shortest round-trip decimals, so `load(save(m)) == m`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    AnalyzerAngle, Atom, DiscreteDistribution, ExperimentModel, FiniteModel, JointInstrument,
    ModelBody, Outcome, QuantumModel, ResponseTable, Setting, SettingPair, StationSetting, Variant,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Prob {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Prob {
    fn value(&self) -> Result<f64> {
        match self {
            Prob::Int(i) => Ok(*i as f64),
            Prob::Num(v) => Ok(*v),
            Prob::Text(s) => {
                let bad = || Error::ModelFile(format!("probability {s:?} is neither a number nor n/d"));
                match s.split_once('/') {
                    Some((n, d)) => {
                        let n: f64 = n.trim().parse().map_err(|_| bad())?;
                        let d: f64 = d.trim().parse().map_err(|_| bad())?;
                        Ok(n / d)
                    }
                    None => s.trim().parse().map_err(|_| bad()),
                }
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    alice: Vec<StationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    bob: Vec<StationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    joint: Vec<JointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantum: Option<QuantumDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    lambda1: Vec<String>,
    lambda2: Vec<String>,
    table: Vec<SourceRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceRow {
    l1: String,
    l2: String,
    p: Prob,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationDoc {
    setting: i32,
    instrument: Vec<String>,
    probs: Vec<Prob>,
    responses: Vec<ResponseRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseRow {
    source: String,
    instrument: String,
    outcome: i8,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    x: i32,
    y: i32,
    table: Vec<JointRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRow {
    a: String,
    b: String,
    p: Prob,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantumDoc {
    alice: Vec<AnalyzerAngle>,
    bob: Vec<AnalyzerAngle>,
}

fn index_of(atoms: &[Atom], label: &str, what: &str) -> Result<usize> {
    atoms
        .iter()
        .position(|a| a.0 == label)
        .ok_or_else(|| Error::ModelFile(format!("{what}: unknown atom {label:?}")))
}

fn atoms(labels: Vec<String>) -> Vec<Atom> {
    labels.into_iter().map(Atom).collect()
}

fn station_from_doc(doc: StationDoc, source_atoms: &[Atom], name: &str) -> Result<StationSetting> {
    let ctx = format!("{name} setting {}", doc.setting);
    let inst = atoms(doc.instrument);
    let probs = doc.probs.iter().map(Prob::value).collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<Option<Outcome>> = vec![None; source_atoms.len() * inst.len()];
    for row in doc.responses {
        let s = index_of(source_atoms, &row.source, &ctx)?;
        let i = index_of(&inst, &row.instrument, &ctx)?;
        let o = Outcome::try_from(row.outcome).map_err(|e| Error::ModelFile(format!("{ctx}: {e}")))?;
        let slot = &mut cells[s * inst.len() + i];
        if slot.replace(o).is_some() {
            return Err(Error::ModelFile(format!(
                "{ctx}: duplicate response for ({}, {})",
                row.source, row.instrument
            )));
        }
    }
    let outcomes = cells
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            c.ok_or_else(|| {
                Error::ModelFile(format!(
                    "{ctx}: missing response for ({}, {})",
                    source_atoms[k / inst.len()],
                    inst[k % inst.len()]
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_inst = inst.len();
    Ok(StationSetting {
        setting: Setting(doc.setting),
        instrument: DiscreteDistribution::new(inst, probs),
        response: ResponseTable::from_rows(source_atoms.len(), n_inst, outcomes)
            .expect("dense table has the declared shape"),
    })
}

fn station_to_doc(s: &StationSetting, source_atoms: &[Atom]) -> StationDoc {
    let mut responses = Vec::with_capacity(source_atoms.len() * s.instrument.len());
    for (si, sa) in source_atoms.iter().enumerate() {
        for (ii, ia) in s.instrument.atoms.iter().enumerate() {
            responses.push(ResponseRow {
                source: sa.0.clone(),
                instrument: ia.0.clone(),
                outcome: s.response.get(si, ii).value(),
            });
        }
    }
    StationDoc {
        setting: s.setting.0,
        instrument: s.instrument.atoms.iter().map(|a| a.0.clone()).collect(),
        probs: s.instrument.probs.iter().map(|&p| Prob::Num(p)).collect(),
        responses,
    }
}

fn from_doc(doc: ModelDoc) -> Result<ExperimentModel> {
    if doc.variant == Variant::QuantumRef {
        let q = doc
            .quantum
            .ok_or_else(|| Error::ModelFile("QuantumRef model needs a [quantum] section".into()))?;
        if doc.source.is_some() || !doc.alice.is_empty() || !doc.bob.is_empty() || !doc.joint.is_empty() {
            return Err(Error::ModelFile(
                "QuantumRef model takes only a [quantum] section".into(),
            ));
        }
        return Ok(ExperimentModel {
            variant: Variant::QuantumRef,
            body: ModelBody::Quantum(QuantumModel {
                alice: q.alice,
                bob: q.bob,
            }),
        });
    }
    if doc.quantum.is_some() {
        return Err(Error::ModelFile(format!(
            "[quantum] section is only valid for QuantumRef, not {}",
            doc.variant
        )));
    }
    let src = doc
        .source
        .ok_or_else(|| Error::ModelFile("missing [source] section".into()))?;
    let lambda1 = atoms(src.lambda1);
    let lambda2 = atoms(src.lambda2);
    let mut src_atoms = Vec::with_capacity(src.table.len());
    let mut src_probs = Vec::with_capacity(src.table.len());
    for row in &src.table {
        src_atoms.push((
            index_of(&lambda1, &row.l1, "source")?,
            index_of(&lambda2, &row.l2, "source")?,
        ));
        src_probs.push(row.p.value()?);
    }
    let alice = doc
        .alice
        .into_iter()
        .map(|d| station_from_doc(d, &lambda1, "alice"))
        .collect::<Result<Vec<_>>>()?;
    let bob = doc
        .bob
        .into_iter()
        .map(|d| station_from_doc(d, &lambda2, "bob"))
        .collect::<Result<Vec<_>>>()?;
    let find = |list: &[StationSetting], s: i32, who: &str| -> Result<Vec<Atom>> {
        list.iter()
            .find(|st| st.setting == Setting(s))
            .map(|st| st.instrument.atoms.clone())
            .ok_or_else(|| Error::ModelFile(format!("joint table refers to unknown {who} setting {s}")))
    };
    let mut joint = Vec::with_capacity(doc.joint.len());
    for j in doc.joint {
        let ia = find(&alice, j.x, "alice")?;
        let ib = find(&bob, j.y, "bob")?;
        let ctx = format!("joint ({}, {})", j.x, j.y);
        let mut pairs = Vec::with_capacity(j.table.len());
        let mut probs = Vec::with_capacity(j.table.len());
        for row in &j.table {
            pairs.push((index_of(&ia, &row.a, &ctx)?, index_of(&ib, &row.b, &ctx)?));
            probs.push(row.p.value()?);
        }
        joint.push(JointInstrument {
            pair: SettingPair::new(j.x, j.y),
            dist: DiscreteDistribution::new(pairs, probs),
        });
    }
    Ok(ExperimentModel {
        variant: doc.variant,
        body: ModelBody::Finite(FiniteModel {
            lambda1,
            lambda2,
            source: DiscreteDistribution::new(src_atoms, src_probs),
            alice,
            bob,
            joint,
        }),
    })
}

fn to_doc(model: &ExperimentModel) -> Result<ModelDoc> {
    let empty = ModelDoc {
        variant: model.variant,
        source: None,
        alice: vec![],
        bob: vec![],
        joint: vec![],
        quantum: None,
    };
    match &model.body {
        ModelBody::Quantum(q) => Ok(ModelDoc {
            quantum: Some(QuantumDoc {
                alice: q.alice.clone(),
                bob: q.bob.clone(),
            }),
            ..empty
        }),
        ModelBody::Sampled(_) => Err(Error::ModelFile(
            "sampler-only models have no file representation".into(),
        )),
        ModelBody::Finite(m) => {
            let label = |atoms: &[Atom], i: usize| -> Result<String> {
                atoms
                    .get(i)
                    .map(|a| a.0.clone())
                    .ok_or_else(|| Error::ModelFile(format!("atom index {i} out of range")))
            };
            let table = m
                .source
                .iter()
                .map(|(&(i, j), p)| {
                    Ok(SourceRow {
                        l1: label(&m.lambda1, i)?,
                        l2: label(&m.lambda2, j)?,
                        p: Prob::Num(p),
                    })
                })
                .collect::<Result<_>>()?;
            let mut joint = Vec::with_capacity(m.joint.len());
            for j in &m.joint {
                let ia = &m.station_setting(crate::model::Station::A, j.pair.x)?.instrument.atoms;
                let ib = &m.station_setting(crate::model::Station::B, j.pair.y)?.instrument.atoms;
                let table = j
                    .dist
                    .iter()
                    .map(|(&(u, v), p)| {
                        Ok(JointRow {
                            a: label(ia, u)?,
                            b: label(ib, v)?,
                            p: Prob::Num(p),
                        })
                    })
                    .collect::<Result<_>>()?;
                joint.push(JointDoc {
                    x: j.pair.x.0,
                    y: j.pair.y.0,
                    table,
                });
            }
            Ok(ModelDoc {
                source: Some(SourceDoc {
                    lambda1: m.lambda1.iter().map(|a| a.0.clone()).collect(),
                    lambda2: m.lambda2.iter().map(|a| a.0.clone()).collect(),
                    table,
                }),
                alice: m.alice.iter().map(|s| station_to_doc(s, &m.lambda1)).collect(),
                bob: m.bob.iter().map(|s| station_to_doc(s, &m.lambda2)).collect(),
                joint,
                ..empty
            })
        }
    }
}

pub fn parse_model(text: &str) -> Result<ExperimentModel> {
    let doc: ModelDoc = toml::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
    from_doc(doc)
}

pub fn model_to_string(model: &ExperimentModel) -> Result<String> {
    toml::to_string(&to_doc(model)?).map_err(|e| Error::ModelFile(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ExperimentModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &ExperimentModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}
