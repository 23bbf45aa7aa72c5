//! Command-line harness: configuration, experiment dispatch, artifacts and
//! replay.

pub mod config;
pub mod experiments;
pub mod output;
pub mod report;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use sabra_core::stats::Verdict;

use config::{ExperimentConfig, Settings};
use report::{Check, Footer, Header, RunReport, VERSION};

/// Runs `cfg` on a pool of `shards` worker threads (the global default when
/// `None`), writes all artifacts into `dir` and returns the report. Module
/// errors are recorded in a truncated report and returned as errors.
pub fn execute(cfg: &ExperimentConfig, dir: &Path, shards: Option<usize>) -> Result<RunReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = shards {
        if n == 0 {
            bail!("--shards must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building worker pool")?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let start = Instant::now();
    let (threads, result) = pool.install(|| (rayon::current_num_threads(), experiments::run(cfg, dir)));
    let mut settings = cfg.settings.clone();
    settings.out = None;
    let header = Header {
        version: VERSION.to_string(),
        experiment: cfg.kind,
        config_hash: cfg.hash(),
        seed: cfg.settings.seed,
        shards: threads,
        config: settings,
        derived: cfg.derived(),
    };
    let wall_clock_s = start.elapsed().as_secs_f64();
    let (checks, footer, error) = match result {
        Ok(checks) => {
            let verdict = Verdict::combine(checks.iter().map(|c| c.verdict));
            (
                checks,
                Footer {
                    verdict,
                    wall_clock_s,
                    truncated: false,
                    error: None,
                },
                None,
            )
        }
        Err(e) => {
            let e = e.context(format!("experiment `{}`", cfg.kind));
            let footer = Footer {
                verdict: Verdict::Fail,
                wall_clock_s,
                truncated: true,
                error: Some(format!("{e:#}")),
            };
            (Vec::new(), footer, Some(e))
        }
    };
    let report = RunReport { header, checks, footer };
    report.persist(dir)?;
    match error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Outcome of re-running a recorded report.
#[derive(Debug, Clone)]
pub struct Replay {
    pub original: RunReport,
    pub rerun: RunReport,
    pub checks: Vec<Check>,
}

impl Replay {
    pub fn verdict(&self) -> Verdict {
        Verdict::combine(self.checks.iter().map(|c| c.verdict))
    }
}

/// Re-runs the experiment recorded in `report_path` into `dir` and compares
/// verdicts. Statistics are also required to be bit-identical when both runs
/// used one worker thread with the same seed. `seed` overrides the recorded
/// seed, in which case only verdicts are compared.
pub fn replay(report_path: &Path, dir: &Path, shards: Option<usize>, seed: Option<u64>) -> Result<Replay> {
    let original = RunReport::read_ndjson(report_path)?;
    let h = &original.header;
    if h.version != VERSION {
        bail!(
            "refusing to replay: report was produced by version {} but this build is {VERSION}; \
             results are only reproducible with the same build",
            h.version
        );
    }
    if original.footer.truncated {
        bail!(
            "refusing to replay: the recorded run was truncated ({})",
            original.footer.error.as_deref().unwrap_or("error")
        );
    }
    let mut settings: Settings = h.config.clone();
    if let Some(s) = seed {
        settings.seed = s;
    }
    let same_seed = settings.seed == h.seed;
    let cfg = ExperimentConfig::resolve(h.experiment, settings).context("recorded configuration")?;
    if same_seed && cfg.hash() != h.config_hash {
        bail!(
            "recorded configuration does not hash to the recorded config hash {}",
            h.config_hash
        );
    }
    let rerun = execute(&cfg, dir, shards)?;

    let names_match = original.checks.len() == rerun.checks.len()
        && original.checks.iter().zip(&rerun.checks).all(|(a, b)| a.name == b.name);
    let disagreements = original
        .checks
        .iter()
        .zip(&rerun.checks)
        .filter(|(a, b)| a.verdict != b.verdict)
        .count();
    let mut checks = vec![Check::new(
        "verdicts",
        "replay:verdicts",
        disagreements as f64,
        0.0,
        Verdict::from_pass(names_match && disagreements == 0),
    )
    .with_detail(format!(
        "{} recorded checks, {disagreements} differing verdicts",
        original.checks.len()
    ))];
    if same_seed && h.shards == 1 && rerun.header.shards == 1 {
        let differing = original
            .checks
            .iter()
            .zip(&rerun.checks)
            .filter(|(a, b)| !same_bits(a.statistic, b.statistic) || !same_bits(a.threshold, b.threshold))
            .count();
        checks.push(
            Check::new(
                "statistics",
                "replay:bit-identical",
                differing as f64,
                0.0,
                Verdict::from_pass(names_match && differing == 0),
            )
            .with_detail("single-threaded runs must reproduce every number exactly"),
        );
    }
    Ok(Replay {
        original,
        rerun,
        checks,
    })
}

fn same_bits(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}
