//! Run reports: line-delimited JSON records plus a plain-text summary.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use sabra_core::stats::Verdict;

use crate::config::{Derived, ExperimentKind, Settings};

/// Build version recorded in every report; replay refuses other versions.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const REPORT_FILE: &str = "report.ndjson";
pub const SUMMARY_FILE: &str = "summary.txt";

/// One pass/fail/inconclusive comparison. Descriptive outputs carry no
/// threshold and always pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Stable label of the property being checked.
    pub anchor: String,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, anchor: &str, statistic: f64, threshold: f64, verdict: Verdict) -> Self {
        Check {
            name: name.into(),
            anchor: anchor.to_string(),
            statistic: Some(statistic),
            threshold: Some(threshold),
            verdict,
            detail: None,
        }
    }

    /// Passes iff `statistic <= threshold`; a NaN statistic fails.
    pub fn at_most(name: impl Into<String>, anchor: &str, statistic: f64, threshold: f64) -> Self {
        Check::new(
            name,
            anchor,
            statistic,
            threshold,
            Verdict::from_pass(statistic <= threshold),
        )
    }

    pub fn descriptive(name: impl Into<String>, anchor: &str, statistic: Option<f64>) -> Self {
        Check {
            name: name.into(),
            anchor: anchor.to_string(),
            statistic,
            threshold: None,
            verdict: Verdict::Pass,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    /// Worker threads the run used.
    pub shards: usize,
    pub config: Settings,
    pub derived: Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub verdict: Verdict,
    pub wall_clock_s: f64,
    /// Set when an error stopped the run before all checks were made.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(Box<Header>),
    Check(Check),
    Footer(Footer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub header: Header,
    pub checks: Vec<Check>,
    pub footer: Footer,
}

impl RunReport {
    pub fn verdict(&self) -> Verdict {
        self.footer.verdict
    }

    pub fn write_ndjson(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        let mut line = |r: &Record| -> Result<()> {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&Record::Header(Box::new(self.header.clone())))?;
        for c in &self.checks {
            line(&Record::Check(c.clone()))?;
        }
        line(&Record::Footer(self.footer.clone()))?;
        out.flush()?;
        Ok(())
    }

    pub fn read_ndjson(path: &Path) -> Result<RunReport> {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (mut header, mut footer, mut checks) = (None, None, Vec::new());
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
            match record {
                Record::Header(h) if header.is_none() => header = Some(*h),
                Record::Header(_) => bail!("{}: duplicate header record", path.display()),
                Record::Check(c) => checks.push(c),
                Record::Footer(f) => footer = Some(f),
            }
        }
        Ok(RunReport {
            header: header.ok_or_else(|| anyhow!("{}: missing header record", path.display()))?,
            checks,
            footer: footer.ok_or_else(|| anyhow!("{}: missing footer record", path.display()))?,
        })
    }

    pub fn summary(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "experiment  {}", h.experiment);
        let _ = writeln!(s, "version     {}", h.version);
        let _ = writeln!(s, "config      {}", h.config_hash);
        let _ = writeln!(s, "seed        {}", h.seed);
        let _ = writeln!(s, "shards      {}", h.shards);
        let _ = writeln!(s, "beta        {}", h.derived.beta);
        let _ = writeln!(s);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<12} {:<40} statistic {:<12} threshold {:<12} [{}]",
                c.verdict.as_str().to_uppercase(),
                c.name,
                fmt_opt(c.statistic),
                fmt_opt(c.threshold),
                c.anchor
            );
        }
        let _ = writeln!(s);
        if let Some(e) = &self.footer.error {
            let _ = writeln!(s, "error       {e}");
        }
        let _ = writeln!(
            s,
            "verdict     {}{} ({:.2} s)",
            self.footer.verdict,
            if self.footer.truncated { ", truncated" } else { "" },
            self.footer.wall_clock_s
        );
        s
    }

    /// Writes `report.ndjson` and `summary.txt` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        self.write_ndjson(&dir.join(REPORT_FILE))?;
        std::fs::write(dir.join(SUMMARY_FILE), self.summary())
            .with_context(|| format!("writing {}", dir.join(SUMMARY_FILE).display()))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

/// Exit status: 0 when every check passed, 1 on any failure, 2 when the worst
/// outcome is inconclusive.
pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}
