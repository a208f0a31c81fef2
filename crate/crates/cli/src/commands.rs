use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use bellsim::coupling::{coupling_feasibility, JointSpec};
use bellsim::estimators::{estimate_postselected, estimate_raw, Conditioning, CorrelationSet};
use bellsim::model::{validate_model, ExperimentModel, Station};
use bellsim::modelfile::{load_model, model_to_string};
use bellsim::scenarios::{by_name, ScenarioParams, SCENARIO_NAMES};
use bellsim::streams::{
    coincidences_to_csv_string, generate_streams, ingest_timetag_file, pair_coincidences,
    pair_coincidences_with, read_coincidences_csv, write_timetag, CoincidenceRecord, Schedule,
    SettingRule,
};
use bellsim::model::SettingPair;

use crate::config::FileConfig;
use crate::error::{io_error, CliError, EXIT_MODEL};
use crate::report::{Analysis, Artifacts};
use crate::{AnalyzeArgs, CouplingArgs, ScenarioArgs, SimulateArgs, SourceArgs};

fn exact_len<const N: usize>(v: Vec<f64>, what: &str) -> Result<[f64; N], CliError> {
    let n = v.len();
    v.try_into()
        .map_err(|_| CliError::config(format!("{what} needs exactly {N} comma-separated values, got {n}")))
}

/// Looks up a built-in scenario; an unknown name is a config error.
fn named_scenario(name: &str, p: &ScenarioParams) -> Result<bellsim::scenarios::Scenario, CliError> {
    if !SCENARIO_NAMES.contains(&name) {
        return Err(CliError::config(format!(
            "unknown scenario {name:?}; known: {}",
            SCENARIO_NAMES.join(", ")
        )));
    }
    by_name(name, p).map_err(|e| CliError::from_lib("scenario", e))
}

const DEFAULT_WINDOWS: u64 = 100_000;
const DEFAULT_WINDOW_NS: u64 = 1_000;

struct LoadedModel {
    label: String,
    model: ExperimentModel,
}

fn params(p_same: Option<f64>, flip: bool, angles: Option<Vec<f64>>, file: &FileConfig) -> Result<ScenarioParams, CliError> {
    let mut p = ScenarioParams::default();
    if let Some(v) = p_same.or(file.p_same) {
        p.p_same = v;
    }
    p.flip_second = flip || file.flip_second.unwrap_or(false);
    if let Some(a) = angles {
        p.angles = exact_len(a, "angles")?;
    } else if let Some(a) = file.angles {
        p.angles = a;
    }
    Ok(p)
}

/// Resolves `--scenario` / `--model` (flags first, then the config file).
fn load_source(src: SourceArgs, file: &FileConfig) -> Result<Option<LoadedModel>, CliError> {
    let scenario = src.scenario.clone().or_else(|| match &src.model {
        Some(_) => None,
        None => file.scenario.clone(),
    });
    let model_path = src.model.clone().or_else(|| match &scenario {
        Some(_) => None,
        None => file.model.clone(),
    });
    if let Some(name) = scenario {
        let p = params(src.p_same, src.flip_second, src.angles, file)?;
        let s = named_scenario(&name, &p)?;
        return Ok(Some(LoadedModel {
            label: format!("scenario {} ({})", s.name, s.model.variant),
            model: s.model,
        }));
    }
    let Some(path) = model_path else {
        return Ok(None);
    };
    let context = path.display().to_string();
    let model = load_model(&path).map_err(|e| CliError::from_lib(&context, e))?;
    let report = validate_model(&model);
    if !report.is_ok() {
        let mut msg = format!("{context}: model failed validation");
        for v in &report.violations {
            let _ = write!(msg, "\n  {v}");
        }
        return Err(CliError {
            code: EXIT_MODEL,
            message: msg,
        });
    }
    Ok(Some(LoadedModel {
        label: format!("model {} ({})", context, model.variant),
        model,
    }))
}

fn parse_rule(text: &str) -> Result<SettingRule, CliError> {
    let bad = || CliError::config(format!("rule {text:?}: expected random, round-robin or fixed:X,Y"));
    match text {
        "random" => Ok(SettingRule::Random),
        "round-robin" => Ok(SettingRule::RoundRobin),
        other => {
            let pair = other.strip_prefix("fixed:").ok_or_else(bad)?;
            let (x, y) = pair.split_once(',').ok_or_else(bad)?;
            let x = x.trim().parse().map_err(|_| bad())?;
            let y = y.trim().parse().map_err(|_| bad())?;
            Ok(SettingRule::Fixed(SettingPair::new(x, y)))
        }
    }
}

/// Raw and post-selected analyses of a record set, written and summarized.
/// `order` puts cells in a model's declared setting order.
fn analyze_records(
    records: &[CoincidenceRecord],
    order: Option<&ExperimentModel>,
    header: String,
    out: &mut Artifacts,
) -> Result<(), CliError> {
    let arrange = |cs: CorrelationSet| -> bellsim::Result<CorrelationSet> {
        match order {
            Some(m) => cs.with_order(&m.settings(Station::A), &m.settings(Station::B)),
            None => Ok(cs),
        }
    };
    let raw = estimate_raw(records).and_then(arrange);
    let raw = Analysis::new(raw.map_err(|e| CliError::from_lib("raw analysis", e))?)?;
    let post = estimate_postselected(records).and_then(arrange);
    let post = Analysis::new(post.map_err(|e| CliError::from_lib("post-selected analysis", e))?)?;
    raw.write(out)?;
    post.write(out)?;
    let mut summary = header;
    let _ = writeln!(
        summary,
        "records {}, unassigned {}\n",
        records.len(),
        raw.set.unassigned
    );
    summary.push_str(&raw.summary());
    summary.push('\n');
    summary.push_str(&post.summary());
    out.write("summary.txt", &summary)?;
    print!("{summary}");
    println!("\nartifacts in {}: {}", out.dir().display(), out.written().join(", "));
    Ok(())
}

pub fn simulate(args: SimulateArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let loaded = load_source(args.source, file)?
        .ok_or_else(|| CliError::config("simulate needs --scenario or --model"))?;
    let seed = args
        .seed
        .or(file.seed)
        .ok_or_else(|| CliError::config("seed required (--seed or `seed` in the config file)"))?;
    let window_ns = args.window_ns.or(file.window_ns).unwrap_or(DEFAULT_WINDOW_NS);
    if window_ns == 0 {
        return Err(CliError::config("window_ns must be positive"));
    }
    let rule = parse_rule(args.rule.as_deref().or(file.rule.as_deref()).unwrap_or("random"))?;
    let sched = match (args.windows, args.duration_ns) {
        (Some(n), _) => Schedule::windows(n, window_ns, rule),
        (None, Some(d)) => Schedule::new(d, window_ns, rule),
        (None, None) => match (file.windows, file.duration_ns) {
            (Some(n), _) => Schedule::windows(n, window_ns, rule),
            (None, Some(d)) => Schedule::new(d, window_ns, rule),
            (None, None) => Schedule::windows(DEFAULT_WINDOWS, window_ns, rule),
        },
    }
    .map_err(|e| CliError::from_lib("schedule", e))?;
    let rate = args.detection_rate.or(file.detection_rate).unwrap_or(1.0);
    let model = &loaded.model;
    let (sa, sb) = generate_streams(model, &sched, rate, seed).map_err(|e| CliError::from_lib("simulate", e))?;
    let pairing = pair_coincidences_with(&sa, &sb, window_ns, sched.resolver(model, seed))?;

    let mut out = Artifacts::create(out_dir)?;
    if args.write_streams || file.write_streams.unwrap_or(false) {
        for (name, s) in [("alice.tt", &sa), ("bob.tt", &sb)] {
            let mut buf = Vec::new();
            write_timetag(s, &mut buf)?;
            out.write(name, &String::from_utf8(buf).expect("time tags are ASCII"))?;
        }
    }
    out.write("coincidences.csv", &coincidences_to_csv_string(&pairing.records))?;
    let header = format!(
        "bellsim simulate: {}, seed {seed}\nwindows {} (W = {window_ns} ns, rule {:?}), detection rate {rate}\n\
         clicks A {} / B {}, dropped A {} / B {}, ",
        loaded.label,
        sched.n_windows(),
        sched.rule,
        sa.events.len(),
        sb.events.len(),
        pairing.dropped_a,
        pairing.dropped_b,
    );
    analyze_records(&pairing.records, Some(model), header, &mut out)
}

pub fn analyze(args: AnalyzeArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let coincidences = args.coincidences.or_else(|| match &args.alice {
        Some(_) => None,
        None => file.coincidences.clone(),
    });
    let mut out;
    let (records, header) = if let Some(path) = coincidences {
        let ctx = path.display().to_string();
        let f = File::open(&path).map_err(|e| io_error(&path, e))?;
        let records = read_coincidences_csv(f).map_err(|e| CliError::from_lib(&ctx, e))?;
        out = Artifacts::create(out_dir)?;
        (records, format!("bellsim analyze: coincidences {ctx}\n"))
    } else {
        let alice: PathBuf = args
            .alice
            .or_else(|| file.alice.clone())
            .ok_or_else(|| CliError::config("analyze needs --coincidences or --alice and --bob"))?;
        let bob: PathBuf = args
            .bob
            .or_else(|| file.bob.clone())
            .ok_or_else(|| CliError::config("analyze needs --bob with --alice"))?;
        let w = args
            .window_ns
            .or(file.window_ns)
            .ok_or_else(|| CliError::config("window_ns required for time-tag input"))?;
        let sa = ingest_timetag_file(&alice, Station::A)
            .map_err(|e| CliError::from_lib(&alice.display().to_string(), e))?;
        let sb = ingest_timetag_file(&bob, Station::B)
            .map_err(|e| CliError::from_lib(&bob.display().to_string(), e))?;
        let p = pair_coincidences(&sa, &sb, w).map_err(|e| CliError::from_lib("pairing", e))?;
        out = Artifacts::create(out_dir)?;
        out.write("coincidences.csv", &coincidences_to_csv_string(&p.records))?;
        let header = format!(
            "bellsim analyze: time tags {} and {} (W = {w} ns)\nclicks A {} / B {}, dropped A {} / B {}, ",
            alice.display(),
            bob.display(),
            sa.events.len(),
            sb.events.len(),
            p.dropped_a,
            p.dropped_b
        );
        (p.records, header)
    };
    analyze_records(&records, None, header, &mut out)
}

fn pair_of(v: Option<Vec<f64>>, file: Option<[f64; 2]>, what: &str) -> Result<[f64; 2], CliError> {
    match v {
        Some(v) => exact_len(v, what),
        None => Ok(file.unwrap_or([0.0; 2])),
    }
}

pub fn check_coupling(args: CouplingArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let inline: Option<[f64; 4]> = args
        .correlators
        .clone()
        .map(|v| exact_len(v, "correlators"))
        .transpose()?;
    let (spec, origin) = if let Some(path) = args.spec.clone() {
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let spec = JointSpec::from_toml(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        (spec, format!("spec {}", path.display()))
    } else if let Some(c) = inline {
        let a = pair_of(args.marginals_a, file.marginals_a, "marginals-a")?;
        let b = pair_of(args.marginals_b, file.marginals_b, "marginals-b")?;
        (JointSpec::consistent(c, a, b), "inline values".to_string())
    } else if let Some(loaded) = load_source(args.source, file)? {
        let cs = CorrelationSet::exact(&loaded.model, Conditioning::PostSelected)?;
        (JointSpec::from_correlations(&cs)?, format!("exact post-selected moments of {}", loaded.label))
    } else if let Some(path) = file.spec.clone() {
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let spec = JointSpec::from_toml(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        (spec, format!("spec {}", path.display()))
    } else if let Some(c) = file.correlators {
        let a = file.marginals_a.unwrap_or([0.0; 2]);
        let b = file.marginals_b.unwrap_or([0.0; 2]);
        (JointSpec::consistent(c, a, b), "config values".to_string())
    } else {
        return Err(CliError::config(
            "check-coupling needs --spec, --correlators, --scenario or --model",
        ));
    };

    let result = coupling_feasibility(&spec);
    let mut out = Artifacts::create(out_dir)?;
    out.write("spec.toml", &spec.to_toml())?;
    out.write(
        "coupling.json",
        &serde_json::to_string_pretty(&result).expect("result serializes"),
    )?;
    let mut text = format!("bellsim check-coupling: {origin}\n");
    if let Some(w) = &result.witness {
        out.write("witness.txt", &w.to_text())?;
        let _ = writeln!(text, "feasible; witness support:");
        for (atom, p) in w.support() {
            let _ = writeln!(text, "  {atom:?}\t{p}");
        }
        let _ = writeln!(text, "max moment error {:e}", w.max_moment_error(&spec));
    } else {
        let cert = result
            .certificate
            .as_ref()
            .map_or_else(String::new, ToString::to_string);
        let _ = writeln!(text, "infeasible: {cert}");
    }
    out.write("coupling.txt", &text)?;
    print!("{text}");
    Ok(())
}

pub fn scenario(args: ScenarioArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let name = args
        .name
        .or_else(|| file.scenario.clone())
        .ok_or_else(|| CliError::config("scenario name required"))?;
    let src = SourceArgs {
        scenario: Some(name.clone()),
        model: None,
        p_same: args.p_same,
        flip_second: args.flip_second,
        angles: args.angles,
    };
    let p = params(src.p_same, src.flip_second, src.angles.clone(), file)?;
    let s = named_scenario(&name, &p)?;
    s.verify()?;
    let mut out = Artifacts::create(out_dir)?;
    let model_file = format!("{}.toml", s.name);
    out.write(&model_file, &model_to_string(&s.model)?)?;
    let mut text = format!("scenario {} ({}): expected tables verified by enumeration\n", s.name, s.model.variant);
    if let Some(exp) = &s.expected {
        let _ = writeln!(
            text,
            "{:<10} {:<22} {:<22} {:<22} {:<22} {:<22} {:<22} {:<22}",
            "pair", "c_xy", "raw e_ab", "raw e_a", "raw e_b", "post e_ab", "post e_a", "post e_b"
        );
        for c in &exp.cells {
            let _ = writeln!(
                text,
                "{:<10} {:<22} {:<22} {:<22} {:<22} {:<22} {:<22} {:<22}",
                c.sp.to_string(),
                c.raw.c_xy,
                c.raw.e_ab,
                c.raw.e_a,
                c.raw.e_b,
                c.post.e_ab,
                c.post.e_a,
                c.post.e_b
            );
        }
        let _ = writeln!(
            text,
            "s_max_abs raw {}, post-selected {}; post-selected max |delta| {}",
            exp.s_max_abs_raw, exp.s_max_abs_post, exp.max_delta_post
        );
        out.write(
            "expected.json",
            &serde_json::to_string_pretty(exp).expect("expected table serializes"),
        )?;
    }
    let _ = writeln!(text, "model file: {}", out.path(&model_file).display());
    print!("{text}");
    Ok(())
}

pub fn list_scenarios() {
    let about = [
        ("lf", "die-roll local model, settings 1 and -1; CHSH holds with equality"),
        ("lhvm-socks", "shared ±1 source (--p-same, --flip-second)"),
        ("m2-demo", "detection-loophole model: post-selection violates CHSH and no-signalling"),
        ("m3-demo", "setting-pair dependent instrument correlations, |S| = 3"),
        ("quantum", "ideal singlet reference (--angles a1,a2,b1,b2)"),
    ];
    for (name, text) in about {
        println!("{name:<12} {text}");
    }
}
