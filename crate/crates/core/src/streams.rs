//! Click streams, coincidence windows and the time-tag file format.
//!
//! Time is cut into fixed aligned bins `[kW, (k+1)W)`. Within a bin each
//! station contributes its earliest click (later ones are dropped and
//! counted); a station without a click contributes outcome 0. Bins where
//! neither station clicked produce no record.
//!
//! Time-tag files hold one event per line, `timestamp_ns<TAB>setting<TAB>outcome`
//! with outcome `+1` or `-1`; lines starting with `#` are comments. Coincidence
//! files are CSV with header `window,x,y,a,b`; an empty `x` or `y` means that
//! station's setting is unknown for that window.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::Observation;
use crate::model::{ExperimentModel, Outcome, Setting, SettingPair, Station};
use crate::sampling::{domain, split_rng, ModelSampler};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub t: u64,
    pub setting: Setting,
    /// Always `Plus` or `Minus`; no detection means no event.
    pub value: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickStream {
    pub station: Station,
    pub events: Vec<ClickEvent>,
}

impl ClickStream {
    pub fn new(station: Station) -> Self {
        Self {
            station,
            events: Vec::new(),
        }
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].t <= w[1].t)
    }

    fn check_sorted(&self) -> Result<()> {
        match self.events.windows(2).position(|w| w[0].t > w[1].t) {
            Some(i) => Err(Error::UnsortedStream {
                station: self.station,
                index: i + 1,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub window: u64,
    pub x: Option<Setting>,
    pub y: Option<Setting>,
    pub a: Outcome,
    pub b: Outcome,
}

impl Observation for CoincidenceRecord {
    fn setting_pair(&self) -> Option<SettingPair> {
        Some(SettingPair {
            x: self.x?,
            y: self.y?,
        })
    }
    fn outcomes(&self) -> (Outcome, Outcome) {
        (self.a, self.b)
    }
}

/// How each window's settings are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingRule {
    Fixed(SettingPair),
    /// Cycles through all pairs, `x` major.
    RoundRobin,
    /// Each station draws uniformly from its settings, independently.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub duration_ns: u64,
    pub window_ns: u64,
    pub rule: SettingRule,
}

impl Schedule {
    pub fn new(duration_ns: u64, window_ns: u64, rule: SettingRule) -> Result<Self> {
        let s = Self {
            duration_ns,
            window_ns,
            rule,
        };
        s.validate()?;
        Ok(s)
    }

    /// `n` windows of width `window_ns`.
    pub fn windows(n: u64, window_ns: u64, rule: SettingRule) -> Result<Self> {
        Self::new(n.saturating_mul(window_ns), window_ns, rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_ns == 0 {
            return Err(Error::InvalidSchedule("window width must be positive".into()));
        }
        if self.duration_ns < self.window_ns {
            return Err(Error::InvalidSchedule(format!(
                "duration {} ns is shorter than the window width {} ns",
                self.duration_ns, self.window_ns
            )));
        }
        Ok(())
    }

    pub fn n_windows(&self) -> u64 {
        self.duration_ns / self.window_ns
    }

    /// Settings active in window `k`. Random choices use their own key
    /// space, so they can be recomputed without replaying the trials.
    pub fn setting_for_window(&self, k: u64, alice: &[Setting], bob: &[Setting], seed: u64) -> SettingPair {
        match self.rule {
            SettingRule::Fixed(sp) => sp,
            SettingRule::RoundRobin => {
                let i = (k % (alice.len() * bob.len()) as u64) as usize;
                SettingPair {
                    x: alice[i / bob.len()],
                    y: bob[i % bob.len()],
                }
            }
            SettingRule::Random => {
                let mut rng = split_rng(seed, domain::SETTINGS, k, 0);
                SettingPair {
                    x: alice[rng.gen_range(0..alice.len())],
                    y: bob[rng.gen_range(0..bob.len())],
                }
            }
        }
    }

    /// Resolver suitable for [`pair_coincidences_with`].
    pub fn resolver<'a>(&'a self, model: &ExperimentModel, seed: u64) -> impl Fn(u64) -> SettingPair + 'a {
        let alice = model.settings(Station::A);
        let bob = model.settings(Station::B);
        move |k| self.setting_for_window(k, &alice, &bob, seed)
    }
}

/// Simulates both stations window by window.
///
/// Window `k` uses `split_rng(seed, WINDOW, k, 0)` to sample one trial, then
/// thins each station's click independently with probability
/// `1 − detection_rate` and places surviving clicks uniformly inside the bin.
pub fn generate_streams(
    model: &ExperimentModel,
    sched: &Schedule,
    detection_rate: f64,
    seed: u64,
) -> Result<(ClickStream, ClickStream)> {
    sched.validate()?;
    if !(0.0..=1.0).contains(&detection_rate) {
        return Err(Error::InvalidSchedule(format!(
            "detection rate {detection_rate} is outside [0, 1]"
        )));
    }
    let sampler = ModelSampler::new(model)?;
    let alice = model.settings(Station::A);
    let bob = model.settings(Station::B);
    if let SettingRule::Fixed(sp) = sched.rule {
        model.ensure_pair(sp)?;
    }
    let w = sched.window_ns;
    let per_window: Vec<[Option<ClickEvent>; 2]> = (0..sched.n_windows())
        .into_par_iter()
        .map(|k| {
            let sp = sched.setting_for_window(k, &alice, &bob, seed);
            let mut rng = split_rng(seed, domain::WINDOW, k, 0);
            let (a, b) = sampler.sample(sp, &mut rng)?;
            let keep_a = rng.gen::<f64>() < detection_rate;
            let keep_b = rng.gen::<f64>() < detection_rate;
            let ta = k * w + rng.gen_range(0..w);
            let tb = k * w + rng.gen_range(0..w);
            let ev = |keep: bool, value: Outcome, t: u64, setting: Setting| {
                (keep && value.is_click()).then_some(ClickEvent { t, setting, value })
            };
            Ok([ev(keep_a, a, ta, sp.x), ev(keep_b, b, tb, sp.y)])
        })
        .collect::<Result<_>>()?;
    let mut sa = ClickStream::new(Station::A);
    let mut sb = ClickStream::new(Station::B);
    for [ea, eb] in per_window {
        sa.events.extend(ea);
        sb.events.extend(eb);
    }
    Ok((sa, sb))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub records: Vec<CoincidenceRecord>,
    /// Same-bin clicks discarded after the earliest one, per station.
    pub dropped_a: u64,
    pub dropped_b: u64,
}

struct Binned {
    window: u64,
    setting: Setting,
    value: Outcome,
}

fn bin(stream: &ClickStream, w: u64) -> Result<(Vec<Binned>, u64)> {
    stream.check_sorted()?;
    let mut out: Vec<Binned> = Vec::new();
    let mut dropped = 0;
    for e in &stream.events {
        let k = e.t / w;
        match out.last() {
            Some(last) if last.window == k => {
                if last.setting != e.setting {
                    return Err(Error::SettingConflict {
                        window: k,
                        station: stream.station,
                        first: last.setting,
                        second: e.setting,
                    });
                }
                dropped += 1;
            }
            _ => out.push(Binned {
                window: k,
                setting: e.setting,
                value: e.value,
            }),
        }
    }
    Ok((out, dropped))
}

fn pair_impl(
    sa: &ClickStream,
    sb: &ClickStream,
    w: u64,
    resolve: Option<&dyn Fn(u64) -> SettingPair>,
) -> Result<Pairing> {
    if w == 0 {
        return Err(Error::InvalidSchedule("window width must be positive".into()));
    }
    let (ba, dropped_a) = bin(sa, w)?;
    let (bb, dropped_b) = bin(sb, w)?;
    let mut records = Vec::with_capacity(ba.len().max(bb.len()));
    let (mut i, mut j) = (0, 0);
    while i < ba.len() || j < bb.len() {
        let ka = ba.get(i).map_or(u64::MAX, |e| e.window);
        let kb = bb.get(j).map_or(u64::MAX, |e| e.window);
        let k = ka.min(kb);
        let ea = (ka == k).then(|| &ba[i]);
        let eb = (kb == k).then(|| &bb[j]);
        let fallback = resolve.map(|f| f(k));
        records.push(CoincidenceRecord {
            window: k,
            x: ea.map(|e| e.setting).or(fallback.map(|sp| sp.x)),
            y: eb.map(|e| e.setting).or(fallback.map(|sp| sp.y)),
            a: ea.map_or(Outcome::Zero, |e| e.value),
            b: eb.map_or(Outcome::Zero, |e| e.value),
        });
        i += usize::from(ea.is_some());
        j += usize::from(eb.is_some());
    }
    Ok(Pairing {
        records,
        dropped_a,
        dropped_b,
    })
}

/// Pairs two sorted streams into per-window records. A station that did
/// not click in a window has an unknown setting there.
pub fn pair_coincidences(sa: &ClickStream, sb: &ClickStream, w: u64) -> Result<Pairing> {
    pair_impl(sa, sb, w, None)
}

/// As [`pair_coincidences`], filling settings of silent stations from
/// `resolve(window)`.
pub fn pair_coincidences_with(
    sa: &ClickStream,
    sb: &ClickStream,
    w: u64,
    resolve: impl Fn(u64) -> SettingPair,
) -> Result<Pairing> {
    pair_impl(sa, sb, w, Some(&resolve))
}

fn parse_outcome(s: &str) -> Option<Outcome> {
    match s {
        "+1" | "1" => Some(Outcome::Plus),
        "-1" => Some(Outcome::Minus),
        _ => None,
    }
}

/// Parses a time-tag document. Blank lines are ignored.
pub fn parse_timetag<R: Read>(reader: R, station: Station) -> Result<ClickStream> {
    let mut stream = ClickStream::new(station);
    let mut prev: Option<u64> = None;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [t, setting, outcome] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let t: u64 = t
            .parse()
            .map_err(|_| err(format!("timestamp {t:?} is not a non-negative integer")))?;
        let setting: i32 = setting
            .parse()
            .map_err(|_| err(format!("setting {setting:?} is not an integer")))?;
        let value = parse_outcome(outcome)
            .ok_or_else(|| err(format!("outcome {outcome:?} is not +1 or -1")))?;
        if let Some(p) = prev {
            if t < p {
                return Err(Error::NonMonotonicTimestamps {
                    line: line_no,
                    t,
                    prev: p,
                });
            }
        }
        prev = Some(t);
        stream.events.push(ClickEvent {
            t,
            setting: Setting(setting),
            value,
        });
    }
    Ok(stream)
}

pub fn ingest_timetag_file(path: impl AsRef<Path>, station: Station) -> Result<ClickStream> {
    parse_timetag(File::open(path)?, station)
}

pub fn write_timetag<W: Write>(stream: &ClickStream, mut out: W) -> Result<()> {
    writeln!(out, "# station {}", stream.station)?;
    for e in &stream.events {
        let v = if e.value == Outcome::Plus { "+1" } else { "-1" };
        writeln!(out, "{}\t{}\t{}", e.t, e.setting, v)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    window: u64,
    x: Option<i32>,
    y: Option<i32>,
    a: i8,
    b: i8,
}

pub fn write_coincidences_csv<W: Write>(records: &[CoincidenceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            window: r.window,
            x: r.x.map(|s| s.0),
            y: r.y.map(|s| s.0),
            a: r.a.value(),
            b: r.b.value(),
        })?;
    }
    if records.is_empty() {
        w.write_record(["window", "x", "y", "a", "b"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn coincidences_to_csv_string(records: &[CoincidenceRecord]) -> String {
    let mut buf = Vec::new();
    write_coincidences_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_coincidences_csv<R: Read>(input: R) -> Result<Vec<CoincidenceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["window", "x", "y", "a", "b"] {
        return Err(Error::Parse {
            line: 1,
            reason: "header must be window,x,y,a,b".into(),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = out.len() + 2;
        let outcome = |v: i8| {
            Outcome::try_from(v).map_err(|reason| Error::Parse { line, reason })
        };
        let (a, b) = (outcome(row.a)?, outcome(row.b)?);
        if !a.is_click() && !b.is_click() {
            return Err(Error::Parse {
                line,
                reason: "record has no click at either station".into(),
            });
        }
        out.push(CoincidenceRecord {
            window: row.window,
            x: row.x.map(Setting),
            y: row.y.map(Setting),
            a,
            b,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, setting: i32, v: i8) -> ClickEvent {
        ClickEvent {
            t,
            setting: Setting(setting),
            value: Outcome::try_from(v).unwrap(),
        }
    }

    fn stream(station: Station, events: Vec<ClickEvent>) -> ClickStream {
        ClickStream { station, events }
    }

    #[test]
    fn empty_streams_pair_to_nothing() {
        let p = pair_coincidences(&ClickStream::new(Station::A), &ClickStream::new(Station::B), 10).unwrap();
        assert!(p.records.is_empty());
    }

    #[test]
    fn single_sided_click() {
        let sa = stream(Station::A, vec![ev(5, 1, 1)]);
        let p = pair_coincidences(&sa, &ClickStream::new(Station::B), 10).unwrap();
        assert_eq!(p.records.len(), 1);
        let r = p.records[0];
        assert_eq!((r.window, r.a, r.b), (0, Outcome::Plus, Outcome::Zero));
        assert_eq!((r.x, r.y), (Some(Setting(1)), None));
    }

    #[test]
    fn earliest_click_wins_and_drops_are_counted() {
        let sa = stream(Station::A, vec![ev(3, 1, 1), ev(7, 1, -1)]);
        let sb = stream(Station::B, vec![ev(12, 2, -1)]);
        let p = pair_coincidences(&sa, &sb, 10).unwrap();
        let summary: Vec<_> = p.records.iter().map(|r| (r.window, r.a, r.b)).collect();
        assert_eq!(
            summary,
            vec![(0, Outcome::Plus, Outcome::Zero), (1, Outcome::Zero, Outcome::Minus)]
        );
        assert_eq!((p.dropped_a, p.dropped_b), (1, 0));
    }

    #[test]
    fn resolver_fills_silent_station() {
        let sa = stream(Station::A, vec![ev(5, 1, 1)]);
        let p = pair_coincidences_with(&sa, &ClickStream::new(Station::B), 10, |_| SettingPair::new(1, 2)).unwrap();
        assert_eq!(p.records[0].y, Some(Setting(2)));
    }

    #[test]
    fn unsorted_stream_is_rejected() {
        let sa = stream(Station::A, vec![ev(9, 1, 1), ev(3, 1, 1)]);
        assert!(matches!(
            pair_coincidences(&sa, &ClickStream::new(Station::B), 10),
            Err(Error::UnsortedStream { index: 1, .. })
        ));
    }

    #[test]
    fn conflicting_settings_in_one_bin() {
        let sa = stream(Station::A, vec![ev(1, 1, 1), ev(2, 2, 1)]);
        assert!(matches!(
            pair_coincidences(&sa, &ClickStream::new(Station::B), 10),
            Err(Error::SettingConflict { window: 0, .. })
        ));
    }

    #[test]
    fn timetag_parsing() {
        let doc = "# header\n1\t1\t+1\n5\t2\t-1\n\n9\t1\t1\n";
        let s = parse_timetag(doc.as_bytes(), Station::A).unwrap();
        assert_eq!(s.events, vec![ev(1, 1, 1), ev(5, 2, -1), ev(9, 1, 1)]);
        assert!(parse_timetag("".as_bytes(), Station::A).unwrap().events.is_empty());
    }

    #[test]
    fn timetag_bad_outcome_names_line() {
        let doc = "1\t1\t+1\n2\t1\t2\n";
        match parse_timetag(doc.as_bytes(), Station::B) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timetag_non_monotonic() {
        let doc = "10\t1\t+1\n2\t1\t+1\n";
        assert!(matches!(
            parse_timetag(doc.as_bytes(), Station::B),
            Err(Error::NonMonotonicTimestamps { line: 2, t: 2, prev: 10 })
        ));
    }

    #[test]
    fn timetag_write_then_parse() {
        let s = stream(Station::B, vec![ev(0, -1, 1), ev(0, -1, -1), ev(77, 1, 1)]);
        let mut buf = Vec::new();
        write_timetag(&s, &mut buf).unwrap();
        assert_eq!(parse_timetag(buf.as_slice(), Station::B).unwrap(), s);
    }

    #[test]
    fn csv_layout() {
        let recs = vec![
            CoincidenceRecord {
                window: 0,
                x: Some(Setting(1)),
                y: None,
                a: Outcome::Plus,
                b: Outcome::Zero,
            },
            CoincidenceRecord {
                window: 3,
                x: Some(Setting(-1)),
                y: Some(Setting(2)),
                a: Outcome::Minus,
                b: Outcome::Plus,
            },
        ];
        let text = coincidences_to_csv_string(&recs);
        assert_eq!(text, "window,x,y,a,b\n0,1,,1,0\n3,-1,2,-1,1\n");
        assert_eq!(read_coincidences_csv(text.as_bytes()).unwrap(), recs);
        assert_eq!(coincidences_to_csv_string(&[]), "window,x,y,a,b\n");
    }

    #[test]
    fn csv_garbage_names_line() {
        let text = "window,x,y,a,b\n0,1,1,1,1\nnot,a,row,at,all\n";
        assert!(matches!(
            read_coincidences_csv(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "window,x,y,a,b\n0,1,1,1,1\n1,1,1,0,0\n";
        assert!(matches!(
            read_coincidences_csv(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(100, 0, SettingRule::RoundRobin).is_err());
        assert!(Schedule::new(5, 10, SettingRule::RoundRobin).is_err());
        assert_eq!(Schedule::new(105, 10, SettingRule::RoundRobin).unwrap().n_windows(), 10);
    }

    #[test]
    fn round_robin_cycles_pairs() {
        let s = Schedule::windows(8, 10, SettingRule::RoundRobin).unwrap();
        let (a, b) = ([Setting(1), Setting(2)], [Setting(1), Setting(2)]);
        let pairs: Vec<_> = (0..5).map(|k| s.setting_for_window(k, &a, &b, 0)).collect();
        assert_eq!(pairs[0], SettingPair::new(1, 1));
        assert_eq!(pairs[1], SettingPair::new(1, 2));
        assert_eq!(pairs[3], SettingPair::new(2, 2));
        assert_eq!(pairs[4], SettingPair::new(1, 1));
    }
}
