//! Domain types for hidden-variable models of a two-station Bell test.
//!
//! A finite model carries a source distribution over `(λ₁, λ₂)`, one
//! instrument distribution per station setting (or, for M3, a joint
//! instrument table per setting pair) and a deterministic response table per
//! station setting mapping `(source λ, instrument λ)` to an [`Outcome`].
//! λ-values are opaque labelled atoms; everything internal works on indices
//! into the declared atom lists.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Normalization tolerance for probability tables.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// A single detector outcome. `Zero` means no click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Outcome {
    Minus,
    Zero,
    Plus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Minus => -1,
            Outcome::Zero => 0,
            Outcome::Plus => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn is_click(self) -> bool {
        self != Outcome::Zero
    }

    /// `+1` for non-negative input, `-1` otherwise.
    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }
}

impl TryFrom<i8> for Outcome {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Outcome::Minus),
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::Plus),
            other => Err(format!("outcome {other} is not one of -1, 0, +1")),
        }
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> i8 {
        o.value()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A station's setting label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Setting(pub i32);

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingPair {
    pub x: Setting,
    pub y: Setting,
}

impl SettingPair {
    pub fn new(x: i32, y: i32) -> Self {
        Self {
            x: Setting(x),
            y: Setting(y),
        }
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Station {
    A,
    B,
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Station::A => f.write_str("A"),
            Station::B => f.write_str("B"),
        }
    }
}

/// An opaque λ-value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom(pub String);

impl Atom {
    pub fn new(label: impl Into<String>) -> Self {
        Atom(label.into())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom(s.to_owned())
    }
}

/// Atoms labelled `"1"`, `"2"`, ... `"n"`.
pub fn numbered_atoms(n: usize) -> Vec<Atom> {
    (1..=n).map(|i| Atom(i.to_string())).collect()
}

/// Finite distribution: one weight per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T> {
    pub atoms: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T> DiscreteDistribution<T> {
    pub fn new(atoms: Vec<T>, probs: Vec<f64>) -> Self {
        Self { atoms, probs }
    }

    pub fn uniform(atoms: Vec<T>) -> Self {
        let n = atoms.len();
        Self {
            atoms,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(atom: T) -> Self {
        Self {
            atoms: vec![atom],
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.atoms.iter().zip(self.probs.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn check(&self, context: &str, out: &mut Vec<Violation>)
    where
        T: Ord + fmt::Debug,
    {
        if self.atoms.len() != self.probs.len() {
            out.push(Violation::LengthMismatch {
                context: context.to_owned(),
                atoms: self.atoms.len(),
                probs: self.probs.len(),
            });
            return;
        }
        if self.atoms.is_empty() {
            out.push(Violation::EmptyDistribution {
                context: context.to_owned(),
            });
            return;
        }
        for &p in &self.probs {
            if !p.is_finite() || p < 0.0 {
                out.push(Violation::NegativeProbability {
                    context: context.to_owned(),
                    value: p,
                });
            }
        }
        let sum = self.total();
        if sum.is_nan() || (sum - 1.0).abs() > PROB_TOLERANCE {
            out.push(Violation::Normalization {
                context: context.to_owned(),
                sum,
            });
        }
        let mut seen = BTreeSet::new();
        for a in &self.atoms {
            if !seen.insert(a) {
                out.push(Violation::DuplicateAtom {
                    context: context.to_owned(),
                    atom: format!("{a:?}"),
                });
            }
        }
    }
}

/// Deterministic response `(source index, instrument index) -> Outcome`,
/// stored densely so the map is total by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    n_source: usize,
    n_instrument: usize,
    outcomes: Vec<Outcome>,
}

impl ResponseTable {
    pub fn from_fn(
        n_source: usize,
        n_instrument: usize,
        mut f: impl FnMut(usize, usize) -> Outcome,
    ) -> Self {
        let mut outcomes = Vec::with_capacity(n_source * n_instrument);
        for s in 0..n_source {
            for i in 0..n_instrument {
                outcomes.push(f(s, i));
            }
        }
        Self {
            n_source,
            n_instrument,
            outcomes,
        }
    }

    /// Builds from a row-major outcome list (source index major).
    pub fn from_rows(n_source: usize, n_instrument: usize, outcomes: Vec<Outcome>) -> Option<Self> {
        (outcomes.len() == n_source * n_instrument).then_some(Self {
            n_source,
            n_instrument,
            outcomes,
        })
    }

    pub fn get(&self, source: usize, instrument: usize) -> Outcome {
        self.outcomes[source * self.n_instrument + instrument]
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_instrument(&self) -> usize {
        self.n_instrument
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn emits_zero(&self) -> bool {
        self.outcomes.contains(&Outcome::Zero)
    }
}

/// Everything one station needs for one of its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSetting {
    pub setting: Setting,
    /// `p_x(λ_x)`. For M3 this is the declared marginal; sampling and
    /// enumeration use the joint table instead.
    pub instrument: DiscreteDistribution<Atom>,
    pub response: ResponseTable,
}

/// Joint instrument distribution `p_xy(λ_x, λ_y)` for one setting pair.
/// Atom pairs index into the two stations' instrument atom lists.
#[derive(Debug, Clone, PartialEq)]
pub struct JointInstrument {
    pub pair: SettingPair,
    pub dist: DiscreteDistribution<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    pub lambda1: Vec<Atom>,
    pub lambda2: Vec<Atom>,
    /// `p(λ₁, λ₂)` as a distribution over index pairs into `lambda1 × lambda2`.
    pub source: DiscreteDistribution<(usize, usize)>,
    pub alice: Vec<StationSetting>,
    pub bob: Vec<StationSetting>,
    /// Only populated for M3.
    pub joint: Vec<JointInstrument>,
}

impl FiniteModel {
    pub fn station(&self, station: Station) -> &[StationSetting] {
        match station {
            Station::A => &self.alice,
            Station::B => &self.bob,
        }
    }

    pub fn station_setting(&self, station: Station, setting: Setting) -> crate::Result<&StationSetting> {
        self.station(station)
            .iter()
            .find(|s| s.setting == setting)
            .ok_or(crate::Error::UnknownSetting { station, setting })
    }

    pub fn joint_for(&self, pair: SettingPair) -> Option<&JointInstrument> {
        self.joint.iter().find(|j| j.pair == pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerAngle {
    pub setting: Setting,
    pub radians: f64,
}

/// Ideal EPRB reference: analyzer angles per setting, evaluated analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumModel {
    pub alice: Vec<AnalyzerAngle>,
    pub bob: Vec<AnalyzerAngle>,
}

impl QuantumModel {
    pub fn angle(&self, station: Station, setting: Setting) -> crate::Result<f64> {
        let list = match station {
            Station::A => &self.alice,
            Station::B => &self.bob,
        };
        list.iter()
            .find(|a| a.setting == setting)
            .map(|a| a.radians)
            .ok_or(crate::Error::UnknownSetting { station, setting })
    }
}

pub type SourceSampler = dyn Fn(&mut dyn RngCore) -> (f64, f64) + Send + Sync;
pub type InstrumentSampler = dyn Fn(SettingPair, &mut dyn RngCore) -> (f64, f64) + Send + Sync;
pub type ContinuousResponse = dyn Fn(Setting, f64, f64) -> Outcome + Send + Sync;

/// Continuous-density model, available only through samplers.
///
/// `source` draws `(λ₁, λ₂)` from `ρ(λ₁, λ₂)`, `instruments` draws
/// `(λ_x, λ_y)` from `ρ_xy`, and the responses map `(setting, source λ,
/// instrument λ)` to an outcome.
#[derive(Clone)]
pub struct SampledModel {
    pub alice_settings: Vec<Setting>,
    pub bob_settings: Vec<Setting>,
    pub source: Arc<SourceSampler>,
    pub instruments: Arc<InstrumentSampler>,
    pub alice_response: Arc<ContinuousResponse>,
    pub bob_response: Arc<ContinuousResponse>,
}

impl fmt::Debug for SampledModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledModel")
            .field("alice_settings", &self.alice_settings)
            .field("bob_settings", &self.bob_settings)
            .finish_non_exhaustive()
    }
}

impl PartialEq for SampledModel {
    fn eq(&self, other: &Self) -> bool {
        self.alice_settings == other.alice_settings
            && self.bob_settings == other.bob_settings
            && Arc::ptr_eq(&self.source, &other.source)
            && Arc::ptr_eq(&self.instruments, &other.instruments)
            && Arc::ptr_eq(&self.alice_response, &other.alice_response)
            && Arc::ptr_eq(&self.bob_response, &other.bob_response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "LHVM")]
    Lhvm,
    M1,
    M2,
    M3,
    QuantumRef,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Lhvm => "LHVM",
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::QuantumRef => "QuantumRef",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Finite(FiniteModel),
    Quantum(QuantumModel),
    Sampled(SampledModel),
}

/// A complete generative description of one Bell test.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentModel {
    pub variant: Variant,
    pub body: ModelBody,
}

impl ExperimentModel {
    pub fn settings(&self, station: Station) -> Vec<Setting> {
        match &self.body {
            ModelBody::Finite(m) => m.station(station).iter().map(|s| s.setting).collect(),
            ModelBody::Quantum(q) => match station {
                Station::A => q.alice.iter().map(|a| a.setting).collect(),
                Station::B => q.bob.iter().map(|a| a.setting).collect(),
            },
            ModelBody::Sampled(s) => match station {
                Station::A => s.alice_settings.clone(),
                Station::B => s.bob_settings.clone(),
            },
        }
    }

    /// All setting pairs in declared order, `x` major.
    pub fn setting_pairs(&self) -> Vec<SettingPair> {
        let ys = self.settings(Station::B);
        self.settings(Station::A)
            .into_iter()
            .flat_map(|x| ys.iter().map(move |&y| SettingPair { x, y }))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self.body, ModelBody::Sampled(_))
    }

    pub fn finite(&self) -> Option<&FiniteModel> {
        match &self.body {
            ModelBody::Finite(m) => Some(m),
            _ => None,
        }
    }

    pub fn ensure_pair(&self, sp: SettingPair) -> crate::Result<()> {
        if !self.settings(Station::A).contains(&sp.x) {
            return Err(crate::Error::UnknownSetting {
                station: Station::A,
                setting: sp.x,
            });
        }
        if !self.settings(Station::B).contains(&sp.y) {
            return Err(crate::Error::UnknownSetting {
                station: Station::B,
                setting: sp.y,
            });
        }
        Ok(())
    }
}

/// One problem found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("variant {variant} does not match the model body ({body})")]
    VariantMismatch { variant: Variant, body: &'static str },
    #[error("{context}: probabilities sum to {sum}")]
    Normalization { context: String, sum: f64 },
    #[error("{context}: invalid probability {value}")]
    NegativeProbability { context: String, value: f64 },
    #[error("{context}: duplicate atom {atom}")]
    DuplicateAtom { context: String, atom: String },
    #[error("{context}: {atoms} atoms but {probs} probabilities")]
    LengthMismatch {
        context: String,
        atoms: usize,
        probs: usize,
    },
    #[error("{context}: distribution has no atoms")]
    EmptyDistribution { context: String },
    #[error("{context}: atom index out of range")]
    IndexOutOfRange { context: String },
    #[error("station {station} declares {count} settings; at least 2 are required")]
    TooFewSettings { station: Station, count: usize },
    #[error("station {station} declares setting {setting} twice")]
    DuplicateSetting { station: Station, setting: Setting },
    #[error("LHVM response for station {station} setting {setting} emits 0")]
    LhvmZeroOutcome { station: Station, setting: Setting },
    #[error("response table for station {station} setting {setting} has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ResponseShape {
        station: Station,
        setting: Setting,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("M3 model has no joint instrument table for {0}")]
    MissingJoint(SettingPair),
    #[error("joint instrument table for {0} is not allowed for this variant or pair")]
    UnexpectedJoint(SettingPair),
    #[error("analyzer angle for station {station} setting {setting} is not finite")]
    NonFiniteAngle { station: Station, setting: Setting },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> crate::Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msg = self
                .violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            Err(crate::Error::InvalidModel(msg))
        }
    }
}

fn check_settings(station: Station, settings: &[Setting], out: &mut Vec<Violation>) {
    if settings.len() < 2 {
        out.push(Violation::TooFewSettings {
            station,
            count: settings.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for &s in settings {
        if !seen.insert(s) {
            out.push(Violation::DuplicateSetting { station, setting: s });
        }
    }
}

/// Lists every structural problem with `model`. An empty report means the
/// model can be enumerated and sampled.
pub fn validate_model(model: &ExperimentModel) -> ValidationReport {
    let mut out = Vec::new();
    match (&model.body, model.variant) {
        (ModelBody::Quantum(_), Variant::QuantumRef) => {}
        (ModelBody::Quantum(_), v) => out.push(Violation::VariantMismatch {
            variant: v,
            body: "analytic quantum reference",
        }),
        (_, Variant::QuantumRef) => out.push(Violation::VariantMismatch {
            variant: Variant::QuantumRef,
            body: "hidden-variable model",
        }),
        _ => {}
    }
    for station in [Station::A, Station::B] {
        check_settings(station, &model.settings(station), &mut out);
    }
    match &model.body {
        ModelBody::Finite(m) => validate_finite(model.variant, m, &mut out),
        ModelBody::Quantum(q) => {
            for (station, list) in [(Station::A, &q.alice), (Station::B, &q.bob)] {
                for a in list {
                    if !a.radians.is_finite() {
                        out.push(Violation::NonFiniteAngle {
                            station,
                            setting: a.setting,
                        });
                    }
                }
            }
        }
        ModelBody::Sampled(_) => {}
    }
    ValidationReport { violations: out }
}

fn validate_finite(variant: Variant, m: &FiniteModel, out: &mut Vec<Violation>) {
    m.source.check("source p(l1,l2)", out);
    if m
        .source
        .atoms
        .iter()
        .any(|&(i, j)| i >= m.lambda1.len() || j >= m.lambda2.len())
    {
        out.push(Violation::IndexOutOfRange {
            context: "source p(l1,l2)".into(),
        });
    }
    for (station, settings, n_src) in [
        (Station::A, &m.alice, m.lambda1.len()),
        (Station::B, &m.bob, m.lambda2.len()),
    ] {
        for s in settings {
            s.instrument
                .check(&format!("station {station} setting {} instrument", s.setting), out);
            let (rows, cols) = (s.response.n_source(), s.response.n_instrument());
            if rows != n_src || cols != s.instrument.len() {
                out.push(Violation::ResponseShape {
                    station,
                    setting: s.setting,
                    rows,
                    cols,
                    want_rows: n_src,
                    want_cols: s.instrument.len(),
                });
            }
            if variant == Variant::Lhvm && s.response.emits_zero() {
                out.push(Violation::LhvmZeroOutcome {
                    station,
                    setting: s.setting,
                });
            }
        }
    }
    let pairs: Vec<SettingPair> = m
        .alice
        .iter()
        .flat_map(|a| m.bob.iter().map(move |b| SettingPair { x: a.setting, y: b.setting }))
        .collect();
    if variant == Variant::M3 {
        for &sp in &pairs {
            if m.joint_for(sp).is_none() {
                out.push(Violation::MissingJoint(sp));
            }
        }
    }
    for j in &m.joint {
        if variant != Variant::M3 || !pairs.contains(&j.pair) {
            out.push(Violation::UnexpectedJoint(j.pair));
            continue;
        }
        let ctx = format!("joint instrument {}", j.pair);
        j.dist.check(&ctx, out);
        let (Ok(a), Ok(b)) = (
            m.station_setting(Station::A, j.pair.x),
            m.station_setting(Station::B, j.pair.y),
        ) else {
            continue;
        };
        if j
            .dist
            .atoms
            .iter()
            .any(|&(u, v)| u >= a.instrument.len() || v >= b.instrument.len())
        {
            out.push(Violation::IndexOutOfRange { context: ctx });
        }
    }
}
