//! Artifact emission and the printed summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bellsim::estimators::{chsh, no_signalling, ChshReport, CorrelationSet, NoSignallingReport};
use bellsim::Error;

use crate::error::{io_error, CliError, EXIT_EMPTY_CELL};

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Gnuplot two-column data plus a `.caption` sidecar.
    pub fn plot(&mut self, name: &str, columns: [&str; 2], rows: &[(String, f64, f64)], caption: &str) -> Result<(), CliError> {
        let mut dat = format!("# {}\t{}\n", columns[0], columns[1]);
        for (label, x, y) in rows {
            let _ = writeln!(dat, "{x}\t{y}\t# {label}");
        }
        self.write(&format!("{name}.dat"), &dat)?;
        self.write(&format!("{name}.caption"), &format!("{caption}\n"))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// CHSH and no-signalling reports of one correlation set.
pub struct Analysis {
    pub set: CorrelationSet,
    pub chsh: ChshReport,
    pub no_signalling: NoSignallingReport,
}

impl Analysis {
    /// Data that never exercised two settings per station is reported as
    /// missing cells, not as a bad model.
    pub fn new(set: CorrelationSet) -> Result<Self, CliError> {
        let chsh = chsh(&set).map_err(|e| {
            let missing = matches!(e, Error::SettingCount { .. });
            let mut err = CliError::from(e);
            if missing {
                err.code = EXIT_EMPTY_CELL;
            }
            err
        })?;
        let no_signalling = no_signalling(&set)?;
        Ok(Self {
            set,
            chsh,
            no_signalling,
        })
    }

    pub fn write(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let tag = self.set.conditioning.to_string();
        out.write(&format!("correlations_{tag}.json"), &self.set.to_json())?;
        out.write(&format!("correlations_{tag}.csv"), &self.set.to_csv())?;
        out.write(&format!("chsh_{tag}.json"), &self.chsh.to_json())?;
        out.write(&format!("chsh_{tag}.csv"), &self.chsh.to_csv())?;
        out.write(&format!("no_signalling_{tag}.json"), &self.no_signalling.to_json())?;
        out.write(&format!("no_signalling_{tag}.csv"), &self.no_signalling.to_csv())?;
        let cells: Vec<(String, f64, f64)> = self
            .set
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.sp.to_string(), i as f64, c.e_ab))
            .collect();
        out.plot(
            &format!("correlators_{tag}"),
            ["cell", "e_ab"],
            &cells,
            &format!(
                "{tag} correlators E(A_x B_y) per setting pair, in the order of correlations_{tag}.csv"
            ),
        )?;
        let patterns: Vec<(String, f64, f64)> = self
            .chsh
            .patterns
            .iter()
            .zip(self.chsh.s_values)
            .enumerate()
            .map(|(i, (signs, s))| (format!("{signs:?}"), i as f64, s))
            .collect();
        out.plot(
            &format!("chsh_{tag}"),
            ["pattern", "S"],
            &patterns,
            &format!("{tag} CHSH statistic for each of the 8 sign patterns; local bound |S| = 2"),
        )
    }

    /// Table block of the summary. Numbers use the same formatting as the
    /// CSV artifacts, so printed and written values agree.
    pub fn summary(&self) -> String {
        let mut s = format!("[{}]\n", self.set.conditioning);
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8} {:<22} {:<22} {:<22} {:<22}",
            "pair", "n_post", "n_raw", "c_hat", "e_ab", "e_a", "e_b"
        );
        for c in &self.set.cells {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>8} {:<22} {:<22} {:<22} {:<22}",
                c.sp.to_string(),
                c.n_post,
                c.n_raw,
                c.c_hat,
                c.e_ab,
                c.e_a,
                c.e_b
            );
        }
        let r = &self.chsh;
        let verdict = match (r.violating_pattern, r.se_s > 0.0) {
            (None, _) => "within |S| <= 2".to_string(),
            (Some(_), true) => format!("exceeds 2 by {:.2} SE", (r.s_max_abs - 2.0) / r.se_s),
            (Some(_), false) => "exceeds 2".to_string(),
        };
        let _ = writeln!(
            s,
            "CHSH s_max_abs = {} (pattern {} {:?}, se {}) {verdict}",
            r.s_max_abs, r.max_pattern, r.patterns[r.max_pattern], r.se_s
        );
        let _ = writeln!(s, "no-signalling max |delta| = {}", self.no_signalling.max_abs_delta());
        for d in self.no_signalling.deltas() {
            let z = d.z.map_or_else(|| "n/a".to_string(), |z| z.to_string());
            let _ = writeln!(
                s,
                "  station {} setting {}: delta {} (z {z})",
                d.station, d.setting, d.delta
            );
        }
        s
    }
}
