//! Joint distributions of `(A_{x0}, A_{x1}, B_{y0}, B_{y1})` over `{±1}⁴`.
//!
//! Given per-pair statistics, the question is whether a single distribution
//! on the 16 sign patterns reproduces all four singleton means and all four
//! pairwise correlators. Feasibility is decided by a phase-one simplex; when
//! marginals are consistent and each pair table is a valid distribution,
//! the answer coincides with the eight CHSH inequalities.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::estimators::{chsh_values, max_abs, CorrelationSet, CHSH_PATTERNS};
use crate::model::{ExperimentModel, Outcome, Setting, Station};
use crate::simplex::phase_one;
use crate::{Error, Result};

/// Tolerance for moment matching and consistency checks.
pub const MOMENT_TOLERANCE: f64 = 1e-9;

/// Observed moments. Correlators are ordered `(x0,y0), (x0,y1), (x1,y0),
/// (x1,y1)`; `marginals_a[i][j]` is `E(A_{xi})` measured with `y_j`, and
/// `marginals_b[i][j]` is `E(B_{yj})` measured with `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    #[serde(default = "default_settings")]
    pub settings_a: [Setting; 2],
    #[serde(default = "default_settings")]
    pub settings_b: [Setting; 2],
    pub correlators: [f64; 4],
    pub marginals_a: [[f64; 2]; 2],
    pub marginals_b: [[f64; 2]; 2],
}

fn default_settings() -> [Setting; 2] {
    [Setting(1), Setting(2)]
}

impl JointSpec {
    /// Spec with setting-independent marginals `E(A_{x0}), E(A_{x1})`,
    /// `E(B_{y0}), E(B_{y1})`.
    pub fn consistent(correlators: [f64; 4], a: [f64; 2], b: [f64; 2]) -> Self {
        Self {
            settings_a: default_settings(),
            settings_b: default_settings(),
            correlators,
            marginals_a: [[a[0]; 2], [a[1]; 2]],
            marginals_b: [[b[0], b[1]], [b[0], b[1]]],
        }
    }

    pub fn with_settings(mut self, a: [Setting; 2], b: [Setting; 2]) -> Self {
        self.settings_a = a;
        self.settings_b = b;
        self
    }

    pub fn from_correlations(cs: &CorrelationSet) -> Result<Self> {
        let (settings_a, settings_b) = cs.chsh_settings()?;
        let [c00, c01, c10, c11] = cs.chsh_cells()?;
        Ok(Self {
            settings_a,
            settings_b,
            correlators: [c00.e_ab, c01.e_ab, c10.e_ab, c11.e_ab],
            marginals_a: [[c00.e_a, c01.e_a], [c10.e_a, c11.e_a]],
            marginals_b: [[c00.e_b, c01.e_b], [c10.e_b, c11.e_b]],
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Coupling(format!("spec: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.correlators
            .iter()
            .chain(self.marginals_a.iter().flatten())
            .chain(self.marginals_b.iter().flatten())
            .copied()
    }

    /// `E(A_{x0}), E(A_{x1}), E(B_{y0}), E(B_{y1})`, averaged over the two
    /// measurement contexts of each.
    pub fn singletons(&self) -> [f64; 4] {
        let avg = |v: [f64; 2]| 0.5 * (v[0] + v[1]);
        [
            avg(self.marginals_a[0]),
            avg(self.marginals_a[1]),
            avg([self.marginals_b[0][0], self.marginals_b[1][0]]),
            avg([self.marginals_b[0][1], self.marginals_b[1][1]]),
        ]
    }

    pub fn chsh_values(&self) -> [f64; 8] {
        chsh_values(self.correlators)
    }
}

/// A marginal that changes with the remote setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalOffense {
    pub station: Station,
    pub setting: Setting,
    /// Values measured under the remote station's first and second setting.
    pub values: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub consistent: bool,
    pub offending: Vec<MarginalOffense>,
}

/// True iff each station's marginal is independent of the remote setting
/// within [`MOMENT_TOLERANCE`].
pub fn marginal_consistency(spec: &JointSpec) -> MarginalCheck {
    let mut offending = Vec::new();
    for i in 0..2 {
        let a = spec.marginals_a[i];
        if (a[0] - a[1]).abs() > MOMENT_TOLERANCE {
            offending.push(MarginalOffense {
                station: Station::A,
                setting: spec.settings_a[i],
                values: a,
            });
        }
    }
    for j in 0..2 {
        let b = [spec.marginals_b[0][j], spec.marginals_b[1][j]];
        if (b[0] - b[1]).abs() > MOMENT_TOLERANCE {
            offending.push(MarginalOffense {
                station: Station::B,
                setting: spec.settings_b[j],
                values: b,
            });
        }
    }
    MarginalCheck {
        consistent: offending.is_empty(),
        offending,
    }
}

/// All eight CHSH statistics within `[−2, 2]` (up to [`MOMENT_TOLERANCE`]).
pub fn chsh_characterization(spec: &JointSpec) -> bool {
    spec.chsh_values()
        .iter()
        .all(|s| s.abs() <= 2.0 + MOMENT_TOLERANCE)
}

/// Why no joint distribution exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// An entry lies outside `[−1, 1]`.
    Range { value: f64 },
    MarginalInconsistency(MarginalOffense),
    /// The 2×2 table of pair `pair` (correlator order) would need
    /// `p(a, b) < 0`.
    PairBound {
        pair: usize,
        a: i8,
        b: i8,
        probability: f64,
    },
    Chsh {
        pattern: usize,
        signs: [i8; 4],
        value: f64,
    },
    /// Solver residual with no CHSH or bound explanation.
    Residual { residual: f64 },
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Range { value } => write!(f, "entry {value} outside [-1, 1]"),
            Certificate::MarginalInconsistency(o) => write!(
                f,
                "marginal of station {} setting {} depends on the remote setting: {} vs {}",
                o.station, o.setting, o.values[0], o.values[1]
            ),
            Certificate::PairBound {
                pair,
                a,
                b,
                probability,
            } => write!(
                f,
                "pair {pair} needs p(a={a:+}, b={b:+}) = {probability} < 0"
            ),
            Certificate::Chsh {
                pattern,
                signs,
                value,
            } => write!(f, "CHSH pattern {pattern} {signs:?}: S = {value}"),
            Certificate::Residual { residual } => write!(f, "no solution (residual {residual})"),
        }
    }
}

/// Distribution over `{±1}⁴` ordered as `(A_{x0}, A_{x1}, B_{y0}, B_{y1})`.
/// Atom `i` has component `k` equal to −1 iff bit `3 − k` of `i` is set,
/// so atom 0 is `(+1,+1,+1,+1)` and atom 15 is `(−1,−1,−1,−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourOutcomeDistribution {
    pub settings_a: [Setting; 2],
    pub settings_b: [Setting; 2],
    pub probs: [f64; 16],
}

pub fn atom(i: usize) -> [i8; 4] {
    std::array::from_fn(|k| if (i >> (3 - k)) & 1 == 1 { -1 } else { 1 })
}

pub fn atom_index(values: [i8; 4]) -> usize {
    values
        .iter()
        .fold(0, |acc, &v| (acc << 1) | usize::from(v < 0))
}

pub fn atom_label(i: usize) -> String {
    let [a, b, c, d] = atom(i);
    format!("({a:+},{b:+},{c:+},{d:+})")
}

impl FourOutcomeDistribution {
    pub fn support(&self) -> Vec<([i8; 4], f64)> {
        (0..16)
            .filter(|&i| self.probs[i] > 0.0)
            .map(|i| (atom(i), self.probs[i]))
            .collect()
    }

    fn expect(&self, f: impl Fn([i8; 4]) -> i8) -> f64 {
        (0..16).map(|i| self.probs[i] * f64::from(f(atom(i)))).sum()
    }

    /// The moments this distribution induces, as a consistent spec.
    pub fn moments(&self) -> JointSpec {
        let corr = [
            self.expect(|v| v[0] * v[2]),
            self.expect(|v| v[0] * v[3]),
            self.expect(|v| v[1] * v[2]),
            self.expect(|v| v[1] * v[3]),
        ];
        let single: [f64; 4] = std::array::from_fn(|k| self.expect(|v| v[k]));
        JointSpec::consistent(corr, [single[0], single[1]], [single[2], single[3]])
            .with_settings(self.settings_a, self.settings_b)
    }

    /// Largest absolute difference between induced and requested moments.
    pub fn max_moment_error(&self, spec: &JointSpec) -> f64 {
        let m = self.moments();
        let sing = spec.singletons();
        let ms = m.singletons();
        m.correlators
            .iter()
            .zip(&spec.correlators)
            .chain(ms.iter().zip(&sing))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// One line per atom: `label<TAB>probability`.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# atoms (A{}, A{}, B{}, B{})\n",
            self.settings_a[0], self.settings_a[1], self.settings_b[0], self.settings_b[1]
        );
        for i in 0..16 {
            let _ = writeln!(s, "{}\t{}", atom_label(i), self.probs[i]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub feasible: bool,
    pub witness: Option<FourOutcomeDistribution>,
    pub certificate: Option<Certificate>,
}

impl CouplingResult {
    fn infeasible(c: Certificate) -> Self {
        Self {
            feasible: false,
            witness: None,
            certificate: Some(c),
        }
    }
}

/// Entries of the 2×2 table `p(a, b) = (1 + a·ea + b·eb + ab·eab) / 4`.
fn pair_table(ea: f64, eb: f64, eab: f64) -> [(i8, i8, f64); 4] {
    [(1, 1), (1, -1), (-1, 1), (-1, -1)].map(|(a, b): (i8, i8)| {
        let (af, bf) = (f64::from(a), f64::from(b));
        (a, b, (1.0 + af * ea + bf * eb + af * bf * eab) / 4.0)
    })
}

/// Searches for a distribution on `{±1}⁴` matching `spec`.
pub fn coupling_feasibility(spec: &JointSpec) -> CouplingResult {
    if let Some(value) = spec.entries().find(|v| v.is_nan() || v.abs() > 1.0 + MOMENT_TOLERANCE) {
        return CouplingResult::infeasible(Certificate::Range { value });
    }
    let check = marginal_consistency(spec);
    if let Some(o) = check.offending.first() {
        return CouplingResult::infeasible(Certificate::MarginalInconsistency(*o));
    }
    let [a0, a1, b0, b1] = spec.singletons();
    let pairs = [(a0, b0), (a0, b1), (a1, b0), (a1, b1)];
    for (k, &(ea, eb)) in pairs.iter().enumerate() {
        for (a, b, p) in pair_table(ea, eb, spec.correlators[k]) {
            if p < -MOMENT_TOLERANCE {
                return CouplingResult::infeasible(Certificate::PairBound {
                    pair: k,
                    a,
                    b,
                    probability: p,
                });
            }
        }
    }

    // Rows: normalization, 4 singletons, 4 correlators.
    let component = |k: usize| -> Vec<f64> { (0..16).map(|i| f64::from(atom(i)[k])).collect() };
    let product = |k: usize, l: usize| -> Vec<f64> {
        (0..16)
            .map(|i| f64::from(atom(i)[k] * atom(i)[l]))
            .collect()
    };
    let rows = vec![
        vec![1.0; 16],
        component(0),
        component(1),
        component(2),
        component(3),
        product(0, 2),
        product(0, 3),
        product(1, 2),
        product(1, 3),
    ];
    let rhs = [
        1.0,
        a0,
        a1,
        b0,
        b1,
        spec.correlators[0],
        spec.correlators[1],
        spec.correlators[2],
        spec.correlators[3],
    ];
    let sol = phase_one(&rows, &rhs);
    if sol.residual <= MOMENT_TOLERANCE {
        let total: f64 = sol.solution.iter().sum();
        let mut probs = [0.0; 16];
        for (p, v) in probs.iter_mut().zip(&sol.solution) {
            *p = v / total;
        }
        let witness = FourOutcomeDistribution {
            settings_a: spec.settings_a,
            settings_b: spec.settings_b,
            probs,
        };
        return CouplingResult {
            feasible: true,
            witness: Some(witness),
            certificate: None,
        };
    }
    let values = spec.chsh_values();
    let (pattern, value) = max_abs(&values);
    let cert = if value > 2.0 {
        Certificate::Chsh {
            pattern,
            signs: CHSH_PATTERNS[pattern],
            value: values[pattern],
        }
    } else {
        Certificate::Residual {
            residual: sol.residual,
        }
    };
    CouplingResult::infeasible(cert)
}

/// Pushes a uniform die `λ ∈ {1..6}` through
/// `λ ↦ (1^λ, (−1)^λ, 1^{λ+1}, (−1)^{λ+1})`.
pub fn lf_coupling() -> FourOutcomeDistribution {
    let pow = |base: i8, e: u32| base.pow(e);
    let mut counts = [0u32; 16];
    for lambda in 1..=6u32 {
        let v = [pow(1, lambda), pow(-1, lambda), pow(1, lambda + 1), pow(-1, lambda + 1)];
        counts[atom_index(v)] += 1;
    }
    FourOutcomeDistribution {
        settings_a: [Setting(1), Setting(-1)],
        settings_b: [Setting(1), Setting(-1)],
        probs: counts.map(|c| f64::from(c) / 6.0),
    }
}

/// Joint distribution of all four outcome variables of a finite model with
/// independent instruments and ±1 responses: the product over the source
/// and every setting's instrument variable, mapped through the responses.
pub fn pushforward(model: &ExperimentModel) -> Result<FourOutcomeDistribution> {
    let m = model
        .finite()
        .ok_or_else(|| Error::Coupling("pushforward needs a finite model".into()))?;
    if !m.joint.is_empty() {
        return Err(Error::Coupling(
            "pushforward needs independent instrument distributions".into(),
        ));
    }
    let two = |station, n: usize| {
        if n == 2 {
            Ok(())
        } else {
            Err(Error::SettingCount { station, count: n })
        }
    };
    two(Station::A, m.alice.len())?;
    two(Station::B, m.bob.len())?;
    let mut probs = [0.0; 16];
    let sign = |o: Outcome| -> Result<i8> {
        match o {
            Outcome::Zero => Err(Error::Coupling(
                "a response emits 0; the four variables are not ±1".into(),
            )),
            o => Ok(o.value()),
        }
    };
    let (a0, a1, b0, b1) = (&m.alice[0], &m.alice[1], &m.bob[0], &m.bob[1]);
    for (&(l1, l2), p) in m.source.iter() {
        for (u0, pu0) in a0.instrument.probs.iter().enumerate() {
            for (u1, pu1) in a1.instrument.probs.iter().enumerate() {
                for (v0, pv0) in b0.instrument.probs.iter().enumerate() {
                    for (v1, pv1) in b1.instrument.probs.iter().enumerate() {
                        let w = p * pu0 * pu1 * pv0 * pv1;
                        if w == 0.0 {
                            continue;
                        }
                        let v = [
                            sign(a0.response.get(l1, u0))?,
                            sign(a1.response.get(l1, u1))?,
                            sign(b0.response.get(l2, v0))?,
                            sign(b1.response.get(l2, v1))?,
                        ];
                        probs[atom_index(v)] += w;
                    }
                }
            }
        }
    }
    Ok(FourOutcomeDistribution {
        settings_a: [a0.setting, a1.setting],
        settings_b: [b0.setting, b1.setting],
        probs,
    })
}
