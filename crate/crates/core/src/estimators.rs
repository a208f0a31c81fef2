//! Correlation, CHSH and no-signalling estimates.
//!
//! Raw estimates average over every record of a setting pair, zeros
//! included. Post-selected estimates keep only records where both stations
//! clicked and report the empirical coincidence rate `n_post / n_raw`.
//! Outcomes live in {−1, 0, +1}, so all accumulators are integer counts and
//! the fold is exact and order independent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_postselected, enumerate_raw};
use crate::model::{ExperimentModel, Outcome, Setting, SettingPair, Station};
use crate::sampling::Trial;
use crate::{Error, Result};

/// Anything that carries a setting pair and two outcomes.
pub trait Observation {
    /// `None` when a station's setting is unknown (it did not click and no
    /// setting log was available).
    fn setting_pair(&self) -> Option<SettingPair>;
    fn outcomes(&self) -> (Outcome, Outcome);
}

impl Observation for Trial {
    fn setting_pair(&self) -> Option<SettingPair> {
        Some(self.sp)
    }
    fn outcomes(&self) -> (Outcome, Outcome) {
        (self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Raw,
    PostSelected,
}

impl std::fmt::Display for Conditioning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Conditioning::Raw => "raw",
            Conditioning::PostSelected => "post_selected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Estimated,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub sp: SettingPair,
    pub e_ab: f64,
    pub e_a: f64,
    pub e_b: f64,
    pub n_post: u64,
    pub n_raw: u64,
    pub c_hat: f64,
    pub se_ab: f64,
    pub se_a: f64,
    pub se_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    pub conditioning: Conditioning,
    pub origin: Origin,
    pub alice: Vec<Setting>,
    pub bob: Vec<Setting>,
    /// One cell per setting pair, `x` major in the order of `alice`/`bob`.
    pub cells: Vec<CellEstimate>,
    /// Records skipped because a station's setting was unknown.
    pub unassigned: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    n: u64,
    sum_a: i64,
    sum_b: i64,
    sum_ab: i64,
    sq_a: u64,
    sq_b: u64,
    sq_ab: u64,
}

impl Tally {
    fn push(&mut self, a: Outcome, b: Outcome) {
        let (a, b) = (i64::from(a.value()), i64::from(b.value()));
        self.n += 1;
        self.sum_a += a;
        self.sum_b += b;
        self.sum_ab += a * b;
        self.sq_a += (a * a) as u64;
        self.sq_b += (b * b) as u64;
        self.sq_ab += (a * b * a * b) as u64;
    }
}

/// Mean and plug-in standard error `sd / √n` (`sd` with divisor `n`).
fn mean_se(n: u64, sum: i64, sq: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum as f64 / nf;
    let var = (sq as f64 / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

struct Groups {
    alice: Vec<Setting>,
    bob: Vec<Setting>,
    all: BTreeMap<SettingPair, Tally>,
    post: BTreeMap<SettingPair, Tally>,
    unassigned: u64,
}

fn group<O: Observation>(obs: &[O]) -> Groups {
    let mut alice = BTreeSet::new();
    let mut bob = BTreeSet::new();
    let mut all: BTreeMap<SettingPair, Tally> = BTreeMap::new();
    let mut post: BTreeMap<SettingPair, Tally> = BTreeMap::new();
    let mut unassigned = 0;
    for o in obs {
        let Some(sp) = o.setting_pair() else {
            unassigned += 1;
            continue;
        };
        alice.insert(sp.x);
        bob.insert(sp.y);
        let (a, b) = o.outcomes();
        all.entry(sp).or_default().push(a, b);
        if a.is_click() && b.is_click() {
            post.entry(sp).or_default().push(a, b);
        }
    }
    Groups {
        alice: alice.into_iter().collect(),
        bob: bob.into_iter().collect(),
        all,
        post,
        unassigned,
    }
}

fn build<O: Observation>(obs: &[O], conditioning: Conditioning) -> Result<CorrelationSet> {
    let g = group(obs);
    let mut cells = Vec::with_capacity(g.alice.len() * g.bob.len());
    for &x in &g.alice {
        for &y in &g.bob {
            let sp = SettingPair { x, y };
            let all = g.all.get(&sp).copied().ok_or(Error::EmptyCell(sp))?;
            let post = g.post.get(&sp).copied().unwrap_or_default();
            let used = match conditioning {
                Conditioning::Raw => all,
                Conditioning::PostSelected => post,
            };
            if used.n == 0 {
                return Err(Error::EmptyCell(sp));
            }
            let (e_ab, se_ab) = mean_se(used.n, used.sum_ab, used.sq_ab);
            let (e_a, se_a) = mean_se(used.n, used.sum_a, used.sq_a);
            let (e_b, se_b) = mean_se(used.n, used.sum_b, used.sq_b);
            cells.push(CellEstimate {
                sp,
                e_ab,
                e_a,
                e_b,
                n_post: post.n,
                n_raw: all.n,
                c_hat: post.n as f64 / all.n as f64,
                se_ab,
                se_a,
                se_b,
            });
        }
    }
    Ok(CorrelationSet {
        conditioning,
        origin: Origin::Estimated,
        alice: g.alice,
        bob: g.bob,
        cells,
        unassigned: g.unassigned,
    })
}

/// Means over all records per setting pair, zeros included.
pub fn estimate_raw<O: Observation>(records: &[O]) -> Result<CorrelationSet> {
    build(records, Conditioning::Raw)
}

/// Means over records with `a·b ≠ 0`; `c_hat` is the surviving fraction.
pub fn estimate_postselected<O: Observation>(records: &[O]) -> Result<CorrelationSet> {
    build(records, Conditioning::PostSelected)
}

impl CorrelationSet {
    /// Exact values for every declared pair of `model`, in declared order.
    pub fn exact(model: &ExperimentModel, conditioning: Conditioning) -> Result<Self> {
        let cells = model
            .setting_pairs()
            .into_iter()
            .map(|sp| {
                let r = match conditioning {
                    Conditioning::Raw => enumerate_raw(model, sp)?,
                    Conditioning::PostSelected => enumerate_postselected(model, sp)?,
                };
                Ok(CellEstimate {
                    sp,
                    e_ab: r.e_ab,
                    e_a: r.e_a,
                    e_b: r.e_b,
                    n_post: 0,
                    n_raw: 0,
                    c_hat: r.c_xy,
                    se_ab: 0.0,
                    se_a: 0.0,
                    se_b: 0.0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            conditioning,
            origin: Origin::Exact,
            alice: model.settings(Station::A),
            bob: model.settings(Station::B),
            cells,
            unassigned: 0,
        })
    }

    pub fn cell(&self, sp: SettingPair) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.sp == sp)
    }

    fn require(&self, sp: SettingPair) -> Result<&CellEstimate> {
        self.cell(sp).ok_or(Error::MissingPair(sp))
    }

    /// Reorders settings and cells, e.g. to match a model's declared order.
    pub fn with_order(mut self, alice: &[Setting], bob: &[Setting]) -> Result<Self> {
        let mut cells = Vec::with_capacity(alice.len() * bob.len());
        for &x in alice {
            for &y in bob {
                cells.push(*self.require(SettingPair { x, y })?);
            }
        }
        self.alice = alice.to_vec();
        self.bob = bob.to_vec();
        self.cells = cells;
        Ok(self)
    }

    /// The two settings per station a CHSH analysis runs over.
    pub fn chsh_settings(&self) -> Result<([Setting; 2], [Setting; 2])> {
        let two = |station, s: &[Setting]| -> Result<[Setting; 2]> {
            <[Setting; 2]>::try_from(s).map_err(|_| Error::SettingCount {
                station,
                count: s.len(),
            })
        };
        Ok((two(Station::A, &self.alice)?, two(Station::B, &self.bob)?))
    }

    /// `(x0,y0), (x0,y1), (x1,y0), (x1,y1)` cells.
    pub fn chsh_cells(&self) -> Result<[&CellEstimate; 4]> {
        let ([x0, x1], [y0, y1]) = self.chsh_settings()?;
        Ok([
            self.require(SettingPair { x: x0, y: y0 })?,
            self.require(SettingPair { x: x0, y: y1 })?,
            self.require(SettingPair { x: x1, y: y0 })?,
            self.require(SettingPair { x: x1, y: y1 })?,
        ])
    }

    pub fn correlators(&self) -> Result<[f64; 4]> {
        Ok(self.chsh_cells()?.map(|c| c.e_ab))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("correlation set serializes")
    }

    pub const CSV_HEADER: &'static str =
        "conditioning,x,y,e_ab,se_ab,e_a,se_a,e_b,se_b,n_post,n_raw,c_hat";

    /// Header plus one summary row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.conditioning,
                c.sp.x,
                c.sp.y,
                c.e_ab,
                c.se_ab,
                c.e_a,
                c.se_a,
                c.e_b,
                c.se_b,
                c.n_post,
                c.n_raw,
                c.c_hat
            );
        }
        s
    }
}

/// The eight sign patterns over `(E00, E01, E10, E11)` with an odd number
/// of minus signs, ordered by their bitmask (bit `i` set = minus on `i`).
pub const CHSH_PATTERNS: [[i8; 4]; 8] = {
    let mut out = [[0i8; 4]; 8];
    let mut mask = 0u32;
    let mut k = 0;
    while mask < 16 {
        if mask.count_ones() % 2 == 1 {
            let mut i = 0;
            while i < 4 {
                out[k][i] = if mask & (1 << i) != 0 { -1 } else { 1 };
                i += 1;
            }
            k += 1;
        }
        mask += 1;
    }
    out
};

/// All eight CHSH combinations of four correlators.
pub fn chsh_values(e: [f64; 4]) -> [f64; 8] {
    CHSH_PATTERNS.map(|signs| {
        signs
            .iter()
            .zip(e)
            .map(|(&s, v)| f64::from(s) * v)
            .sum()
    })
}

/// Index and value of the largest |S|; first index wins ties.
pub fn max_abs(values: &[f64; 8]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub conditioning: Conditioning,
    pub settings_a: [Setting; 2],
    pub settings_b: [Setting; 2],
    pub correlators: [f64; 4],
    pub patterns: [[i8; 4]; 8],
    pub s_values: [f64; 8],
    pub s_max_abs: f64,
    pub max_pattern: usize,
    pub se_s: f64,
    /// Pattern attaining `s_max_abs` when it exceeds 2.
    pub violating_pattern: Option<usize>,
}

impl ChshReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("conditioning,pattern,signs,s,se_s\n");
        for (i, (signs, v)) in self.patterns.iter().zip(self.s_values).enumerate() {
            let signs: Vec<String> = signs.iter().map(|x| format!("{x:+}")).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.conditioning,
                i,
                signs.join(" "),
                v,
                self.se_s
            );
        }
        s
    }
}

/// All eight CHSH statistics of `cs`; SE by quadrature of the correlator SEs.
pub fn chsh(cs: &CorrelationSet) -> Result<ChshReport> {
    let (settings_a, settings_b) = cs.chsh_settings()?;
    let cells = cs.chsh_cells()?;
    let correlators = cells.map(|c| c.e_ab);
    let s_values = chsh_values(correlators);
    let (max_pattern, s_max_abs) = max_abs(&s_values);
    let se_s = cells.iter().map(|c| c.se_ab * c.se_ab).sum::<f64>().sqrt();
    Ok(ChshReport {
        conditioning: cs.conditioning,
        settings_a,
        settings_b,
        correlators,
        patterns: CHSH_PATTERNS,
        s_values,
        s_max_abs,
        max_pattern,
        se_s,
        violating_pattern: (s_max_abs > 2.0).then_some(max_pattern),
    })
}

/// Change of one station's marginal when the remote setting changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalDelta {
    pub station: Station,
    /// The local setting held fixed.
    pub setting: Setting,
    /// Remote settings compared: `delta = E(first) − E(second)`.
    pub remote: [Setting; 2],
    pub delta: f64,
    /// `delta / sqrt(se₁² + se₂²)`; absent when the pooled SE is zero.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoSignallingReport {
    pub conditioning: Conditioning,
    pub delta_a: [MarginalDelta; 2],
    pub delta_b: [MarginalDelta; 2],
}

impl NoSignallingReport {
    pub fn deltas(&self) -> impl Iterator<Item = &MarginalDelta> {
        self.delta_a.iter().chain(self.delta_b.iter())
    }

    pub fn max_abs_delta(&self) -> f64 {
        self.deltas().map(|d| d.delta.abs()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("conditioning,station,setting,remote_1,remote_2,delta,z\n");
        for d in self.deltas() {
            let z = d.z.map(|z| z.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.conditioning, d.station, d.setting, d.remote[0], d.remote[1], d.delta, z
            );
        }
        s
    }
}

fn delta(station: Station, setting: Setting, remote: [Setting; 2], v: [(f64, f64); 2]) -> MarginalDelta {
    let d = v[0].0 - v[1].0;
    let pooled = (v[0].1 * v[0].1 + v[1].1 * v[1].1).sqrt();
    MarginalDelta {
        station,
        setting,
        remote,
        delta: d,
        z: (pooled > 0.0).then(|| d / pooled),
    }
}

/// Compares each station's marginal across the remote station's settings.
pub fn no_signalling(cs: &CorrelationSet) -> Result<NoSignallingReport> {
    let ([x0, x1], [y0, y1]) = cs.chsh_settings()?;
    let [c00, c01, c10, c11] = cs.chsh_cells()?;
    let a = |c: &CellEstimate| (c.e_a, c.se_a);
    let b = |c: &CellEstimate| (c.e_b, c.se_b);
    Ok(NoSignallingReport {
        conditioning: cs.conditioning,
        delta_a: [
            delta(Station::A, x0, [y0, y1], [a(c00), a(c01)]),
            delta(Station::A, x1, [y0, y1], [a(c10), a(c11)]),
        ],
        delta_b: [
            delta(Station::B, y0, [x0, x1], [b(c00), b(c10)]),
            delta(Station::B, y1, [x0, x1], [b(c01), b(c11)]),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: i32, y: i32, a: i8, b: i8) -> Trial {
        Trial {
            index: 0,
            sp: SettingPair::new(x, y),
            a: Outcome::try_from(a).unwrap(),
            b: Outcome::try_from(b).unwrap(),
        }
    }

    fn exact_set(e: [f64; 4]) -> CorrelationSet {
        let pairs = [(1, 1), (1, 2), (2, 1), (2, 2)];
        CorrelationSet {
            conditioning: Conditioning::PostSelected,
            origin: Origin::Exact,
            alice: vec![Setting(1), Setting(2)],
            bob: vec![Setting(1), Setting(2)],
            cells: pairs
                .iter()
                .zip(e)
                .map(|(&(x, y), e_ab)| CellEstimate {
                    sp: SettingPair::new(x, y),
                    e_ab,
                    e_a: 0.0,
                    e_b: 0.0,
                    n_post: 0,
                    n_raw: 0,
                    c_hat: 1.0,
                    se_ab: 0.0,
                    se_a: 0.0,
                    se_b: 0.0,
                })
                .collect(),
            unassigned: 0,
        }
    }

    #[test]
    fn patterns_have_odd_minus_count() {
        let mut seen = BTreeSet::new();
        for p in CHSH_PATTERNS {
            assert_eq!(p.iter().filter(|&&s| s < 0).count() % 2, 1);
            assert!(seen.insert(p));
        }
        assert_eq!(CHSH_PATTERNS[0], [-1, 1, 1, 1]);
    }

    #[test]
    fn all_plus_records_have_zero_se() {
        let recs: Vec<Trial> = (0..10).map(|_| t(1, 1, 1, 1)).collect();
        let cs = estimate_raw(&recs).unwrap();
        let c = cs.cell(SettingPair::new(1, 1)).unwrap();
        assert_eq!((c.e_ab, c.se_ab), (1.0, 0.0));
    }

    #[test]
    fn two_record_raw_arithmetic() {
        let recs = [t(1, 1, 1, 0), t(1, 1, 0, -1)];
        let c = estimate_raw(&recs).unwrap().cells[0];
        assert_eq!((c.e_ab, c.e_a, c.e_b), (0.0, 0.5, -0.5));
        assert_eq!((c.n_post, c.n_raw, c.c_hat), (0, 2, 0.0));
    }

    #[test]
    fn postselection_keeps_double_clicks() {
        let recs = [t(1, 1, 1, 1), t(1, 1, 1, 0), t(1, 1, 0, -1)];
        let c = estimate_postselected(&recs).unwrap().cells[0];
        assert_eq!(c.e_ab, 1.0);
        assert_eq!(c.n_post, 1);
        assert_eq!(c.c_hat, 1.0 / 3.0);
    }

    #[test]
    fn zero_free_records_estimate_identically() {
        let recs = [t(1, 1, 1, 1), t(1, 1, -1, 1), t(1, 1, 1, -1)];
        let raw = estimate_raw(&recs).unwrap();
        let post = estimate_postselected(&recs).unwrap();
        assert_eq!(raw.cells, post.cells);
    }

    #[test]
    fn all_zero_containing_records_is_empty_cell() {
        let recs = [t(1, 1, 1, 0), t(1, 1, 0, -1)];
        assert!(matches!(estimate_postselected(&recs), Err(Error::EmptyCell(_))));
    }

    #[test]
    fn missing_combination_is_empty_cell() {
        let recs = [t(1, 1, 1, 1), t(2, 2, 1, 1)];
        assert!(matches!(estimate_raw(&recs), Err(Error::EmptyCell(_))));
    }

    #[test]
    fn plug_in_standard_error() {
        // ab = +1, +1, -1, -1: mean 0, sd 1, se 1/2
        let recs = [t(1, 1, 1, 1), t(1, 1, -1, -1), t(1, 1, 1, -1), t(1, 1, -1, 1)];
        let c = estimate_raw(&recs).unwrap().cells[0];
        assert_eq!(c.e_ab, 0.0);
        assert_eq!(c.se_ab, 0.5);
    }

    #[test]
    fn chsh_of_lf_values_is_two() {
        let r = chsh(&exact_set([1.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(r.s_max_abs, 2.0);
        assert_eq!(r.violating_pattern, None);
    }

    #[test]
    fn chsh_of_zeros_is_zero() {
        assert_eq!(chsh(&exact_set([0.0; 4])).unwrap().s_max_abs, 0.0);
    }

    #[test]
    fn chsh_flags_violation() {
        let r = chsh(&exact_set([1.0, 1.0, 1.0, -1.0])).unwrap();
        assert_eq!(r.s_max_abs, 4.0);
        assert_eq!(r.violating_pattern, Some(r.max_pattern));
        let signs = CHSH_PATTERNS[r.max_pattern];
        assert!(signs == [1, 1, 1, -1] || signs == [-1, -1, -1, 1]);
    }

    #[test]
    fn chsh_missing_pair() {
        let mut cs = exact_set([0.0; 4]);
        cs.cells.pop();
        assert!(matches!(chsh(&cs), Err(Error::MissingPair(_))));
    }

    #[test]
    fn chsh_needs_two_settings() {
        let recs = [t(1, 1, 1, 1), t(2, 1, 1, 1), t(3, 1, 1, 1)];
        let cs = estimate_raw(&recs).unwrap();
        assert!(matches!(chsh(&cs), Err(Error::SettingCount { .. })));
    }

    #[test]
    fn no_signalling_deltas_and_z() {
        let mut cs = exact_set([0.0; 4]);
        cs.cells[0].e_a = 0.2;
        cs.cells[1].e_a = 0.1;
        cs.cells[0].se_a = 0.03;
        cs.cells[1].se_a = 0.04;
        let r = no_signalling(&cs).unwrap();
        assert!((r.delta_a[0].delta - 0.1).abs() < 1e-15);
        assert!((r.delta_a[0].z.unwrap() - 0.1 / 0.05).abs() < 1e-12);
        assert_eq!(r.delta_a[1].delta, 0.0);
        assert_eq!(r.delta_a[1].z, None);
    }

    #[test]
    fn reorder_preserves_cells() {
        let recs = [t(1, 1, 1, 1), t(1, -1, 1, -1), t(-1, 1, -1, 1), t(-1, -1, 1, 1)];
        let cs = estimate_raw(&recs).unwrap();
        assert_eq!(cs.alice, vec![Setting(-1), Setting(1)]);
        let cs = cs.with_order(&[Setting(1), Setting(-1)], &[Setting(1), Setting(-1)]).unwrap();
        assert_eq!(cs.correlators().unwrap(), [1.0, -1.0, -1.0, 1.0]);
    }
}
