//! The experiments behind each subcommand. Each returns its checks and writes
//! its artifacts into the output directory.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use sabra_core::dynamics::{simulate_with, Initial, Scheme, SimConfig};
use sabra_core::measure::{mc_expectations, sample_with};
use sabra_core::rng::{fill_normals, sample_block_stream, stream, SAMPLES, SAMPLE_BLOCK};
use sabra_core::sabra::{evaluate_b, trilinear_form};
use sabra_core::space::apply_power;
use sabra_core::stats::{
    autocorrelation_series, fitted_decay_rate, invariance_test, semigroup_decay_check, tail_decay_report,
    ComponentCheck, Verdict, AUTOCORR_BATCHES, Z_THRESHOLD,
};
use sabra_core::{Error, ShellState};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{cell, SnapshotWriter, Table, TRAJECTORY_FILE};
use crate::report::Check;

/// Scaled residual tolerance for the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Relative residual tolerance for the β condition on `(a, b, λ)`.
pub const BETA_CONDITION_TOL: f64 = 1e-12;
/// Relative tolerance of the fitted tail rate.
pub const TAIL_RATE_REL_TOL: f64 = 0.05;
/// Relative tolerance of the Wick tail against its closed form.
pub const TAIL_CLOSED_FORM_TOL: f64 = 1e-12;

pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    match cfg.kind {
        ExperimentKind::VerifyAlgebra => verify_algebra(cfg),
        ExperimentKind::SampleMeasure => sample_measure(cfg, dir),
        ExperimentKind::Simulate => simulate(cfg, dir),
        ExperimentKind::InvarianceTest => invariance(cfg, dir),
        ExperimentKind::TailDecay => tail_decay(cfg, dir),
        ExperimentKind::SemigroupDecay => semigroup(cfg, dir),
        ExperimentKind::InviscidConservation => inviscid(cfg, dir),
        ExperimentKind::Autocorr => autocorr(cfg, dir),
    }
}

fn component_name(j: usize) -> String {
    format!("x[{},{}]", j / 2 + 1, j % 2 + 1)
}

fn verify_algebra(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let sp = *cfg.measure.spectral();
    let c = &cfg.coeffs;
    let m = sp.shells();
    let k_top = sp.wavenumber(m);
    let mut worst = [0.0f64; 3];
    let mut buf = vec![[0.0; 2]; m];
    for i in 0..cfg.settings.triples {
        let mut rng = stream(cfg.settings.seed, SAMPLES | i as u64);
        let mut draw = || -> Result<ShellState> {
            fill_normals(&mut rng, &mut buf);
            Ok(ShellState::new(sp, buf.clone())?)
        };
        let (u, v, w) = (draw()?, draw()?, draw()?);
        let (nu, nv, nw) = (u.norm(), v.norm(), w.norm());
        let anti = (trilinear_form(&u, &v, &w, c)? + trilinear_form(&u, &w, &v, c)?).abs();
        let energy = trilinear_form(&u, &v, &v, c)?.abs();
        let sbeta = evaluate_b(&u, &u, c)?.dot(&apply_power(&u, c.beta()))?.abs();
        worst[0] = worst[0].max(anti / (k_top * nu * nv * nw));
        worst[1] = worst[1].max(energy / (k_top * nu * nv * nv));
        worst[2] = worst[2].max(sbeta / (k_top.powf(1.0 + 2.0 * c.beta()) * nu.powi(3)));
    }
    let n = cfg.settings.triples;
    Ok(vec![
        Check::at_most(
            "beta condition",
            "identity:beta-condition",
            c.beta_condition_residual(),
            BETA_CONDITION_TOL,
        ),
        Check::at_most("antisymmetry", "identity:antisymmetry", worst[0], IDENTITY_TOL).with_detail(format!(
            "max of |<B(u,v),w> + <B(u,w),v>| / (k_M |u||v||w|) over {n} triples"
        )),
        Check::at_most("energy", "identity:energy", worst[1], IDENTITY_TOL)
            .with_detail(format!("max of |<B(u,v),v>| / (k_M |u||v|^2) over {n} triples")),
        Check::at_most("s_beta", "identity:s-beta", worst[2], IDENTITY_TOL).with_detail(format!(
            "max of |<B(u,u),A^beta u>| / (k_M^(1+2beta) |u|^3) over {n} draws"
        )),
    ])
}

fn sample_measure(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let s = &cfg.settings;
    let p = &cfg.measure;
    let n_max = s.n_max.unwrap_or(p.spectral().shells());
    let k = 2 * n_max;

    // The first `sample_rows` draws, identical to the first Monte Carlo draws.
    let mut rows = SnapshotWriter::create(&dir.join("samples.csv"), "draw", p.spectral().shells())?;
    let mut rng = sample_block_stream(s.seed, 0);
    for i in 0..s.sample_rows.min(s.samples) {
        if i > 0 && i % SAMPLE_BLOCK == 0 {
            rng = sample_block_stream(s.seed, (i / SAMPLE_BLOCK) as u64);
        }
        rows.row(i as f64, &sample_with(p, &mut rng))?;
    }
    rows.finish()?;

    // Per component: x², x⁴, x⁶, x⁸.
    let est = mc_expectations(
        |x, out| {
            for j in 0..k {
                let v2 = x.component(j / 2 + 1, j % 2 + 1).powi(2);
                out[4 * j] = v2;
                out[4 * j + 1] = v2 * v2;
                out[4 * j + 2] = v2 * v2 * v2;
                out[4 * j + 3] = (v2 * v2).powi(2);
            }
        },
        4 * k,
        p,
        s.samples,
        s.seed,
    )?;
    let n = s.samples as f64;
    let mut table = Table::create(
        &dir.join("variance.csv"),
        &[
            "shell",
            "comp",
            "expected",
            "variance",
            "variance_se",
            "z_variance",
            "excess_kurtosis",
            "kurtosis_se",
            "z_kurtosis",
        ],
    )?;
    let mut checks = Vec::with_capacity(2 * k);
    for j in 0..k {
        let expected = p.variance(j / 2 + 1);
        let m = &est[4 * j..4 * j + 4];
        let z_var = m[0].z_score(expected);
        let (m2, m4, m6, m8) = (m[0].estimate, m[1].estimate, m[2].estimate, m[3].estimate);
        // Delta method for m4/m2² with known zero mean.
        let psi2 = m8 / m2.powi(4) - 4.0 * m4 * m6 / m2.powi(5) + 4.0 * m4.powi(3) / m2.powi(6);
        let kurt = m4 / (m2 * m2) - 3.0;
        let kurt_se = ((psi2 - (m4 / (m2 * m2)).powi(2)) / n).sqrt();
        let z_kurt = kurt / kurt_se;
        table.row(&[
            (j / 2 + 1).to_string(),
            (j % 2 + 1).to_string(),
            expected.to_string(),
            m2.to_string(),
            m[0].std_error.to_string(),
            z_var.to_string(),
            kurt.to_string(),
            kurt_se.to_string(),
            z_kurt.to_string(),
        ])?;
        let name = component_name(j);
        checks.push(
            Check::at_most(format!("variance {name}"), "measure:variance", z_var.abs(), Z_THRESHOLD)
                .with_detail(format!("{m2:.6e} vs 1/(nu lambda_n^beta) = {expected:.6e}, |z|")),
        );
        checks.push(
            Check::at_most(
                format!("kurtosis {name}"),
                "measure:kurtosis",
                z_kurt.abs(),
                Z_THRESHOLD,
            )
            .with_detail(format!("excess kurtosis {kurt:.3e}, |z|")),
        );
    }
    table.finish()?;
    Ok(checks)
}

/// Streams member 0 of `sim` into `trajectory.csv`, calling `observe` on every
/// snapshot. On error the file ends with a truncation marker.
fn stream_member(sim: &SimConfig, dir: &Path, mut observe: impl FnMut(f64, &ShellState)) -> Result<usize> {
    let mut writer = SnapshotWriter::create(&dir.join(TRAJECTORY_FILE), "t", sim.spectral().shells())?;
    let mut io_error = None;
    let result = simulate_with(sim, &Initial::Stationary, 0, |t, s| {
        if let Err(e) = writer.row(t, s) {
            io_error = Some(e);
            return Err(Error::Precondition("trajectory output failed".into()));
        }
        observe(t, s);
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    match result {
        Ok(_) => {
            let rows = writer.rows();
            writer.finish()?;
            Ok(rows)
        }
        Err(e) => {
            writer.truncate(&e.to_string())?;
            Err(e.into())
        }
    }
}

fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let sim = cfg.sim();
    let mut energy = (0.0, 0.0);
    let rows = stream_member(sim, dir, |_, s| {
        let e = s.norm().powi(2);
        energy.0 += e;
        energy.1 = e;
    })?;
    let mut checks = vec![
        Check::descriptive("snapshots", "dynamics:completed", Some(rows as f64)),
        Check::descriptive("final energy", "dynamics:energy", Some(energy.1)),
        Check::descriptive("mean energy", "dynamics:energy", Some(energy.0 / rows as f64)),
    ];
    if sim.scheme.is_stochastic() {
        checks.push(Check::descriptive(
            "stationary mean energy",
            "measure:mean-energy",
            Some(cfg.measure.mean_energy()),
        ));
    }
    Ok(checks)
}

/// Trajectory snapshots of one member, kept even when the run stops early.
struct MemberRun {
    times: Vec<f64>,
    states: Vec<ShellState>,
    error: Option<Error>,
}

fn run_member(sim: &SimConfig, member: u64) -> MemberRun {
    let (mut times, mut states) = (Vec::new(), Vec::new());
    let error = simulate_with(sim, &Initial::Stationary, member, |t, s| {
        times.push(t);
        states.push(s.clone());
        Ok(())
    })
    .err();
    MemberRun { times, states, error }
}

fn write_member(run: &MemberRun, shells: usize, dir: &Path) -> Result<()> {
    let mut w = SnapshotWriter::create(&dir.join(TRAJECTORY_FILE), "t", shells)?;
    for (t, s) in run.times.iter().zip(&run.states) {
        w.row(*t, s)?;
    }
    match &run.error {
        Some(e) => w.truncate(&e.to_string()),
        None => w.finish(),
    }
}

fn invariance(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let sim = cfg.sim();
    let shells = sim.spectral().shells();
    let n_max = cfg.settings.n_max.unwrap_or(shells);
    let members = cfg.settings.ensemble.max(1);

    // Workers return only their reports; member 0 also keeps its snapshots.
    let results: Vec<(Option<MemberRun>, std::result::Result<_, Error>)> = (0..members)
        .into_par_iter()
        .map(|m| {
            let run = run_member(sim, m as u64);
            let report = match &run.error {
                Some(e) => Err(e.clone()),
                None => invariance_test(&run.states, &cfg.measure, n_max),
            };
            ((m == 0).then_some(run), report)
        })
        .collect();
    if let Some(run) = &results[0].0 {
        write_member(run, shells, dir)?;
    }
    let mut reports = Vec::with_capacity(members);
    for (m, (_, r)) in results.into_iter().enumerate() {
        match r {
            Ok(r) => reports.push(r),
            Err(Error::InsufficientData { ess, required }) => {
                return Ok(vec![Check::new(
                    "effective samples",
                    "stationarity:sample-size",
                    ess,
                    required,
                    Verdict::Inconclusive,
                )
                .with_detail(format!("member {m}; lengthen t_end or reduce stride"))]);
            }
            Err(e) => return Err(anyhow::Error::new(e).context(format!("ensemble member {m}"))),
        }
    }

    let pooled: Vec<ComponentCheck> = (0..reports[0].checks.len())
        .map(|j| pool(reports.iter().map(|r| &r.checks[j])))
        .collect();
    let min_ess = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(|c| c.effective_samples))
        .fold(f64::INFINITY, f64::min);
    let mut checks = vec![Check::new(
        "effective samples",
        "stationarity:sample-size",
        min_ess,
        sabra_core::stats::MIN_EFFECTIVE_SAMPLES,
        Verdict::Pass,
    )
    .with_detail(format!(
        "smallest per-member effective sample size over {members} member(s)"
    ))];
    let mut table = Table::create(
        &dir.join("invariance.csv"),
        &[
            "shell",
            "comp",
            "expected",
            "variance",
            "variance_se",
            "z_variance",
            "excess_kurtosis",
            "kurtosis_se",
            "z_kurtosis",
            "effective_samples",
        ],
    )?;
    for c in &pooled {
        table.row(&[
            c.shell.to_string(),
            c.comp.to_string(),
            c.expected_variance.to_string(),
            c.variance.to_string(),
            c.variance_se.to_string(),
            c.z_variance.to_string(),
            c.excess_kurtosis.to_string(),
            c.kurtosis_se.to_string(),
            c.z_kurtosis.to_string(),
            c.effective_samples.to_string(),
        ])?;
        let name = format!("x[{},{}]", c.shell, c.comp);
        checks.push(
            Check::at_most(
                format!("variance {name}"),
                "stationarity:variance",
                c.z_variance.abs(),
                Z_THRESHOLD,
            )
            .with_detail(format!("{:.6e} vs {:.6e}, |z|", c.variance, c.expected_variance)),
        );
        checks.push(
            Check::at_most(
                format!("kurtosis {name}"),
                "stationarity:kurtosis",
                c.z_kurtosis.abs(),
                Z_THRESHOLD,
            )
            .with_detail(format!("excess kurtosis {:.3e}, |z|", c.excess_kurtosis)),
        );
    }
    table.finish()?;
    Ok(checks)
}

/// Combines independent per-member estimates of the same component by
/// averaging, with standard errors added in quadrature.
fn pool<'a>(checks: impl Iterator<Item = &'a ComponentCheck>) -> ComponentCheck {
    let all: Vec<&ComponentCheck> = checks.collect();
    if all.len() == 1 {
        return *all[0];
    }
    let k = all.len() as f64;
    let mean = |f: fn(&ComponentCheck) -> f64| all.iter().map(|c| f(c)).sum::<f64>() / k;
    let se = |f: fn(&ComponentCheck) -> f64| all.iter().map(|c| f(c).powi(2)).sum::<f64>().sqrt() / k;
    let first = all[0];
    let variance = mean(|c| c.variance);
    let variance_se = se(|c| c.variance_se);
    let excess_kurtosis = mean(|c| c.excess_kurtosis);
    let kurtosis_se = se(|c| c.kurtosis_se);
    ComponentCheck {
        shell: first.shell,
        comp: first.comp,
        variance,
        expected_variance: first.expected_variance,
        variance_se,
        z_variance: (variance - first.expected_variance) / variance_se,
        excess_kurtosis,
        kurtosis_se,
        z_kurtosis: excess_kurtosis / kurtosis_se,
        effective_samples: all.iter().map(|c| c.effective_samples).sum(),
    }
}

/// `(4/ν²) [a² λ^{-2β} (k_m^{2-4β} + k_{m+1}^{2-4β}) + b² k_m^{2-4β}]`.
fn tail_closed_form(cfg: &ExperimentConfig, m: usize) -> f64 {
    let sp = cfg.measure.spectral();
    let (c, beta, nu) = (&cfg.coeffs, cfg.coeffs.beta(), cfg.measure.nu());
    let e = 2.0 - 4.0 * beta;
    let (km, km1) = (sp.wavenumber(m).powf(e), sp.wavenumber(m + 1).powf(e));
    4.0 / (nu * nu) * (c.a().powi(2) * sp.lambda().powf(-2.0 * beta) * (km + km1) + c.b().powi(2) * km)
}

fn tail_decay(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let s = &cfg.settings;
    let m_max = s.m_max.expect("resolved");
    let r = tail_decay_report(&cfg.coeffs, &cfg.measure, s.m_min..=m_max, s.samples, s.seed)?;
    let mut checks = Vec::new();
    let rate = if r.predicted_log_rate == 0.0 {
        Check::at_most("tail rate", "tail:rate", r.fitted_log_rate.abs(), IDENTITY_TOL)
    } else {
        Check::at_most(
            "tail rate",
            "tail:rate",
            (r.fitted_log_rate / r.predicted_log_rate - 1.0).abs(),
            TAIL_RATE_REL_TOL,
        )
    };
    checks.push(rate.with_detail(format!(
        "fitted log-rate per shell {:.6} vs (2 - 4 beta) ln lambda = {:.6}",
        r.fitted_log_rate, r.predicted_log_rate
    )));
    let mut table = Table::create(
        &dir.join("tail.csv"),
        &["m", "exact", "closed_form", "monte_carlo", "mc_std_error", "z"],
    )?;
    let mut worst_closed = 0.0f64;
    for row in &r.rows {
        let closed = tail_closed_form(cfg, row.m);
        worst_closed = worst_closed.max((row.exact / closed - 1.0).abs());
        table.row(&[
            row.m.to_string(),
            row.exact.to_string(),
            closed.to_string(),
            cell(row.monte_carlo.map(|e| e.estimate)),
            cell(row.monte_carlo.map(|e| e.std_error)),
            cell(row.z_score()),
        ])?;
        if let Some(z) = row.z_score() {
            checks.push(
                Check::at_most(
                    format!("tail monte carlo m={}", row.m),
                    "tail:monte-carlo",
                    z.abs(),
                    Z_THRESHOLD,
                )
                .with_detail(format!("exact {:.6e}, |z|", row.exact)),
            );
        }
    }
    table.finish()?;
    checks.insert(
        1,
        Check::at_most(
            "tail closed form",
            "tail:closed-form",
            worst_closed,
            TAIL_CLOSED_FORM_TOL,
        )
        .with_detail("max relative difference of the Wick tail from its closed form"),
    );
    Ok(checks)
}

fn semigroup(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let s = &cfg.settings;
    let phi = s.observable.polynomial();
    let r = semigroup_decay_check(cfg.sim(), &phi, &s.times, s.outer, s.n_rep)?;
    let mut table = Table::create(
        &dir.join("semigroup.csv"),
        &[
            "t",
            "estimate",
            "std_error",
            "bound",
            "relative_se",
            "threshold",
            "verdict",
        ],
    )?;
    let mut checks = Vec::with_capacity(r.points.len());
    for p in &r.points {
        table.row(&[
            p.t.to_string(),
            p.estimate.to_string(),
            p.std_error.to_string(),
            p.bound.to_string(),
            p.relative_se.to_string(),
            p.threshold.to_string(),
            p.verdict.to_string(),
        ])?;
        checks.push(
            Check::new(
                format!("decay t={}", p.t),
                "semigroup:decay-bound",
                p.estimate,
                p.threshold,
                p.verdict,
            )
            .with_detail(format!(
                "bound e^(-lambda_1 t) Var(phi) = {:.6e}, std error {:.3e}",
                p.bound, p.std_error
            )),
        );
    }
    table.finish()?;
    Ok(checks)
}

fn inviscid(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let sim = cfg.sim();
    let sp = *sim.spectral();
    let weights: Vec<f64> = (1..=sp.shells())
        .map(|n| sp.eigenvalue(n).powf(cfg.coeffs.beta()))
        .collect();
    let invariants = |s: &ShellState| {
        s.shells()
            .iter()
            .zip(&weights)
            .fold((0.0, 0.0), |(e, sb), ([x, y], w)| {
                let q = x * x + y * y;
                (e + q, sb + w * q)
            })
    };
    let mut start = None;
    let mut drift = (0.0f64, 0.0f64);
    stream_member(sim, dir, |_, s| {
        let (e, sb) = invariants(s);
        let (e0, sb0) = *start.get_or_insert((e, sb));
        drift.0 = drift.0.max((e / e0 - 1.0).abs());
        drift.1 = drift.1.max((sb / sb0 - 1.0).abs());
    })
    .context("inviscid run")?;
    let tol = cfg.settings.tolerance;
    Ok(vec![
        Check::at_most("energy drift", "inviscid:energy", drift.0, tol)
            .with_detail("max relative change of |u|^2 over recorded snapshots"),
        Check::at_most("s_beta drift", "inviscid:s-beta", drift.1, tol)
            .with_detail("max relative change of <A^beta u,u> over recorded snapshots"),
    ])
}

fn autocorr(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let sim = cfg.sim();
    let sp = *sim.spectral();
    let n_max = cfg.settings.n_max.unwrap_or(sp.shells());
    let run = run_member(sim, 0);
    write_member(&run, sp.shells(), dir)?;
    if let Some(e) = run.error {
        return Err(e.into());
    }
    let sample_dt = sim.dt * sim.stride as f64;
    let lags = &cfg.settings.lags;
    let mut table = Table::create(
        &dir.join("autocorr.csv"),
        &["shell", "lag", "value", "std_error", "ou_exact"],
    )?;
    let mut checks = Vec::new();
    for n in 1..=n_max {
        let series: Vec<f64> = run.states.iter().map(|s| s.component(n, 1)).collect();
        let name = format!("x[{n},1]");
        let est = match autocorrelation_series(&name, &series, sample_dt, lags, AUTOCORR_BATCHES) {
            Ok(e) => e,
            Err(Error::InsufficientData { ess, required }) => {
                checks.push(Check::new(
                    format!("effective samples {name}"),
                    "autocorr:sample-size",
                    ess,
                    required,
                    Verdict::Inconclusive,
                ));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let rate = cfg.measure.nu() * sim.epsilon * sp.eigenvalue(n);
        for ((lag, v), se) in est.lags.iter().zip(&est.values).zip(&est.std_errors) {
            let exact = (-rate * lag).exp();
            table.row(&[
                n.to_string(),
                lag.to_string(),
                v.to_string(),
                se.to_string(),
                exact.to_string(),
            ])?;
            if sim.scheme == Scheme::OuExact && *lag > 0.0 {
                let z = if v == &exact { 0.0 } else { (v - exact) / se };
                checks.push(
                    Check::at_most(
                        format!("ou autocorrelation {name} lag={lag}"),
                        "ou:autocorrelation",
                        z.abs(),
                        Z_THRESHOLD,
                    )
                    .with_detail(format!("{v:.4e} vs e^(-nu eps lambda_n tau) = {exact:.4e}, |z|")),
                );
            }
        }
        if sim.scheme != Scheme::OuExact {
            checks.push(
                Check::descriptive(
                    format!("decay rate {name}"),
                    "autocorr:decay-rate",
                    fitted_decay_rate(&est),
                )
                .with_detail(format!("linear rate nu eps lambda_n = {rate:.4e}")),
            );
        }
    }
    table.finish()?;
    Ok(checks)
}
