//! The table-producing subcommands: coefficient curves (`rates`), reference
//! population curves (`decay`), and stochastic unraveling runs (`simulate`).

use qjump_core::ensemble::{
    population, run_ensemble, EnsembleConfig, EnsembleError, UnravelingMode, UnravelingSpec,
};
use qjump_core::jc::{self, JCParams, RateFunction};
use qjump_core::linear::{c64, excited, DensityMatrix};
use qjump_core::master::{
    exact_jc_density, integrate, jc_general_spec, jc_lindblad_spec, TclOrder,
};
use qjump_core::pdp::PdpError;

use crate::config::{ModeArg, RunConfig};
use crate::error::CliError;
use crate::output::emit_table;

/// Decay rate of the configured order, for rate-sign audits of jump logs.
fn order_rate_function(p: JCParams, order: TclOrder) -> RateFunction {
    match order {
        TclOrder::Tcl2 => jc::gamma2(p),
        TclOrder::Tcl4 => jc::gamma4_detuned(p),
        TclOrder::Exact => jc::exact_rates(p).0,
    }
}

/// Emit the decay-rate and Lamb-shift coefficients at second order, fourth
/// order, and exactly, on the configured grid. Flags negative γ⁽⁴⁾ stretches
/// in a trailing comment.
pub fn cmd_rates(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.validate()?;
    let grid = cfg.grid();
    let g2 = jc::gamma2(p);
    let g4 = jc::gamma4_detuned(p);
    let s2 = jc::s2(p);
    let s4 = jc::s4_sampled(p, cfg.tmax);
    let (g_exact, s_exact) = jc::exact_rates(p);

    let ts = cfg.time_scale();
    let rs = cfg.rate_scale();
    let mut rows = Vec::with_capacity(grid.len());
    let mut negative: Vec<f64> = Vec::new();
    for &t in &grid {
        let gamma4 = g4.value(t);
        if gamma4 < 0.0 {
            negative.push(t);
        }
        let ge = g_exact.try_value(t).map_err(|e| CliError::Runtime(e.to_string()))?;
        let se = s_exact.try_value(t).map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push(vec![
            t * ts,
            g2.value(t) * rs,
            gamma4 * rs,
            ge * rs,
            s2.value(t) * rs,
            s4.value(t) * rs,
            se * rs,
        ]);
    }

    let mut trailing = Vec::new();
    if !negative.is_empty() {
        trailing.push(format!(
            "gamma4 < 0 at {} of {} grid points (first at t = {:.6}, last at t = {:.6})",
            negative.len(),
            grid.len(),
            negative[0] * ts,
            negative[negative.len() - 1] * ts,
        ));
    }
    emit_table(
        cfg.out.as_deref(),
        &["t", "gamma2", "gamma4", "gamma_exact", "s2", "s4", "s_exact"],
        &rows,
        &trailing,
    )?;
    Ok(())
}

/// Emit a reference excited-state population curve: either the master
/// equation integrated at the configured order (`ode`) or the exact density
/// matrix (`exact-density`), next to the Markov decay law e^{−γ₀t}.
pub fn cmd_decay(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.validate()?;
    let grid = cfg.grid();
    let rho11: Vec<f64> = match cfg.mode {
        ModeArg::Ode => {
            let spec =
                jc_general_spec(p, cfg.order.to_core(), cfg.include_shift, cfg.tmax);
            let rho0 = DensityMatrix::pure(&excited());
            integrate(&spec, &rho0, &grid, cfg.substeps)?.population(0)
        }
        ModeArg::ExactDensity => {
            exact_jc_density(p, c64(0.0, 0.0), &grid)?.population(0)
        }
        other => {
            return Err(CliError::usage(format!(
                "decay supports --mode ode or --mode exact-density (got {other})"
            )))
        }
    };

    let ts = cfg.time_scale();
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .zip(&rho11)
        .map(|(&t, &r)| {
            let markov = (-cfg.gamma0 * t).exp();
            vec![t * ts, r, markov, r - markov]
        })
        .collect();
    emit_table(
        cfg.out.as_deref(),
        &["t", "rho11", "rho11_markov", "deviation"],
        &rows,
        &[],
    )?;
    Ok(())
}

/// Run a trajectory ensemble (standard or doubled unraveling) and emit the
/// estimated excited-state population with its standard error and its
/// deviation from the Markov decay law, plus a jump-count summary.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.validate()?;
    let grid = cfg.grid();
    let order = cfg.order.to_core();
    let (spec, mode) = match cfg.mode {
        ModeArg::Standard => (
            UnravelingSpec::Standard(jc_lindblad_spec(
                p,
                order,
                cfg.include_shift,
                cfg.tmax,
            )),
            UnravelingMode::Standard,
        ),
        ModeArg::Doubled => (
            UnravelingSpec::Doubled(jc_general_spec(
                p,
                order,
                cfg.include_shift,
                cfg.tmax,
            )),
            UnravelingMode::Doubled,
        ),
        other => {
            return Err(CliError::usage(format!(
                "simulate supports --mode standard or --mode doubled (got {other})"
            )))
        }
    };

    let mut ecfg =
        EnsembleConfig::new(cfg.ntraj, cfg.seed, grid.clone(), cfg.substeps, mode);
    ecfg.deterministic_reduction = cfg.deterministic_reduction;

    let psi0 = excited();
    let run = || run_ensemble(&spec, &psi0, &ecfg);
    let est = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    }
    .map_err(|e| match e {
        EnsembleError::Pdp(PdpError::NegativeRate { channel, t, rate }) => {
            CliError::usage(format!(
                "rate of channel {channel} is negative at t = {t:.6} (gamma = {rate:.6}): \
                 the standard unraveling is undefined on this grid; rerun with --mode doubled"
            ))
        }
        other => other.into(),
    })?;

    let pop = population(&est, 0);
    let deviation = pop.markov_deviation(cfg.gamma0);
    let ts = cfg.time_scale();
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .map(|k| vec![grid[k] * ts, pop.mean[k], pop.stderr[k], deviation[k]])
        .collect();

    let total_jumps = est.jump_events.len();
    let mut trailing = vec![format!(
        "trajectories: {}, total jumps: {}, mean jumps per trajectory: {:.4}",
        est.n_traj,
        total_jumps,
        total_jumps as f64 / est.n_traj as f64,
    )];
    match mode {
        UnravelingMode::Doubled => {
            let rate = order_rate_function(p, order);
            let mut at_negative = 0usize;
            for ev in &est.jump_events {
                let g = rate
                    .try_value(ev.time)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                if g < 0.0 {
                    at_negative += 1;
                }
            }
            trailing.push(format!("jumps at negative rate: {at_negative}"));
        }
        UnravelingMode::Standard => {
            trailing.push(format!("max norm drift: {:.3e}", est.max_norm_drift));
        }
    }

    emit_table(
        cfg.out.as_deref(),
        &["t", "rho11_mean", "rho11_stderr", "deviation_mean"],
        &rows,
        &trailing,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::OrderArg;
    use std::path::PathBuf;

    fn read_rows(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
        let text = std::fs::read_to_string(path).unwrap();
        let mut header = Vec::new();
        let mut rows = Vec::new();
        let mut comments = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                if header.is_empty() {
                    header = rest.split(',').map(|s| s.trim().to_string()).collect();
                } else {
                    comments.push(rest.trim().to_string());
                }
            } else {
                rows.push(
                    line.split(',').map(|v| v.trim().parse().unwrap()).collect(),
                );
            }
        }
        (header, rows, comments)
    }

    fn base_config(out: PathBuf) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.out = Some(out);
        cfg.points = 11;
        cfg
    }

    #[test]
    fn rates_table_has_zero_first_row_and_asymptotes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rates.csv");
        let mut cfg = base_config(path.clone());
        cfg.tmax = 40.0;
        cfg.points = 81;
        cmd_rates(&cfg).unwrap();
        let (header, rows, comments) = read_rows(&path);
        assert_eq!(
            header,
            ["t", "gamma2", "gamma4", "gamma_exact", "s2", "s4", "s_exact"]
        );
        assert_eq!(rows.len(), 81);
        // t = 0: every coefficient vanishes.
        for col in 1..7 {
            assert!(rows[0][col].abs() < 1e-12, "column {col} nonzero at t=0");
        }
        // Large-t resonant asymptotes: γ² → 1, γ⁴ → 1.1, γ_exact → 1.12702.
        let last = rows.last().unwrap();
        assert!((last[1] - 1.0).abs() < 1e-6);
        assert!((last[2] - 1.1).abs() < 1e-6);
        assert!((last[3] - 1.1270166537925831).abs() < 1e-4);
        // Resonant rates never go negative: no flag comment.
        assert!(comments.is_empty());
    }

    #[test]
    fn rates_table_flags_negative_gamma4_when_detuned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rates.csv");
        let mut cfg = base_config(path.clone());
        cfg.gamma0 = 65.0;
        cfg.lambda = 19.5;
        cfg.delta = 156.0;
        cfg.tmax = 0.5;
        cfg.points = 251;
        cmd_rates(&cfg).unwrap();
        let (_, rows, comments) = read_rows(&path);
        assert!(rows.iter().any(|r| r[2] < 0.0));
        assert_eq!(comments.len(), 1);
        assert!(comments[0].contains("gamma4 < 0"));
    }

    #[test]
    fn scaled_output_rescales_times_and_rates_but_not_populations() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.csv");
        let scaled = dir.path().join("scaled.csv");
        let mut cfg = base_config(raw.clone());
        cfg.gamma0 = 65.0;
        cfg.lambda = 19.5;
        cfg.delta = 156.0;
        cfg.tmax = 0.2;
        cmd_rates(&cfg).unwrap();
        cfg.out = Some(scaled.clone());
        cfg.scaled = true;
        cmd_rates(&cfg).unwrap();
        let (_, raw_rows, _) = read_rows(&raw);
        let (_, scaled_rows, _) = read_rows(&scaled);
        for (r, s) in raw_rows.iter().zip(&scaled_rows) {
            assert!((s[0] - r[0] * 65.0).abs() <= 1e-9 * r[0].abs().max(1.0) * 65.0);
            for col in 1..7 {
                assert!(
                    (s[col] - r[col] / 65.0).abs() <= 1e-12 * r[col].abs().max(1.0)
                );
            }
        }
    }

    #[test]
    fn decay_modes_agree_on_the_exactly_solvable_curve() {
        let dir = tempfile::tempdir().unwrap();
        let ode = dir.path().join("ode.csv");
        let exact = dir.path().join("exact.csv");
        let mut cfg = base_config(ode.clone());
        cfg.order = OrderArg::Exact;
        cfg.points = 31;
        cfg.substeps = 40;
        cmd_decay(&cfg).unwrap();
        cfg.out = Some(exact.clone());
        cfg.mode = ModeArg::ExactDensity;
        cmd_decay(&cfg).unwrap();
        let (header, ode_rows, _) = read_rows(&ode);
        let (_, exact_rows, _) = read_rows(&exact);
        assert_eq!(header, ["t", "rho11", "rho11_markov", "deviation"]);
        assert_eq!(ode_rows[0][1], 1.0);
        assert_eq!(ode_rows[0][3], 0.0);
        for (o, e) in ode_rows.iter().zip(&exact_rows) {
            assert!((o[1] - e[1]).abs() < 1e-6, "ODE vs exact at t = {}", o[0]);
            // deviation column is rho11 − markov (up to the 12-digit format).
            assert!((o[3] - (o[1] - o[2])).abs() < 1e-11);
        }
    }

    #[test]
    fn decay_rejects_simulation_modes() {
        let mut cfg = RunConfig::default();
        cfg.mode = ModeArg::Standard;
        let err = cmd_decay(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("ode"));
    }

    #[test]
    fn simulate_standard_tracks_the_ode_curve() {
        let dir = tempfile::tempdir().unwrap();
        let sim = dir.path().join("sim.csv");
        let ode = dir.path().join("ode.csv");
        let mut cfg = base_config(sim.clone());
        cfg.mode = ModeArg::Standard;
        cfg.points = 13;
        cfg.tmax = 3.0;
        cfg.ntraj = 4000;
        cfg.seed = 11;
        cmd_simulate(&cfg).unwrap();
        cfg.out = Some(ode.clone());
        cfg.mode = ModeArg::Ode;
        cfg.substeps = 40;
        cmd_decay(&cfg).unwrap();
        let (header, sim_rows, comments) = read_rows(&sim);
        let (_, ode_rows, _) = read_rows(&ode);
        assert_eq!(header, ["t", "rho11_mean", "rho11_stderr", "deviation_mean"]);
        assert_eq!(sim_rows[0][1], 1.0);
        assert_eq!(sim_rows[0][2], 0.0);
        for (s, o) in sim_rows.iter().zip(&ode_rows).skip(1) {
            let band = 4.0 * s[2].max(1e-4);
            assert!(
                (s[1] - o[1]).abs() < band,
                "Monte Carlo off the ODE at t = {}: {} vs {}",
                s[0],
                s[1],
                o[1]
            );
        }
        assert!(comments.iter().any(|c| c.starts_with("trajectories: 4000")));
        assert!(comments.iter().any(|c| c.starts_with("max norm drift")));
    }

    #[test]
    fn simulate_standard_refuses_negative_rate_grids() {
        let mut cfg = RunConfig::default();
        cfg.mode = ModeArg::Standard;
        cfg.gamma0 = 65.0;
        cfg.lambda = 19.5;
        cfg.delta = 156.0;
        cfg.tmax = 0.5;
        cfg.points = 51;
        cfg.ntraj = 10;
        let err = cmd_simulate(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--mode doubled"), "{err}");
    }

    #[test]
    fn simulate_doubled_counts_negative_rate_jumps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.csv");
        let mut cfg = base_config(path.clone());
        cfg.mode = ModeArg::Doubled;
        cfg.gamma0 = 65.0;
        cfg.lambda = 19.5;
        cfg.delta = 156.0;
        cfg.tmax = 0.1;
        cfg.points = 6;
        cfg.substeps = 60;
        cfg.ntraj = 300;
        cfg.seed = 5;
        cmd_simulate(&cfg).unwrap();
        let (_, rows, comments) = read_rows(&path);
        assert_eq!(rows.len(), 6);
        let neg = comments
            .iter()
            .find(|c| c.starts_with("jumps at negative rate:"))
            .expect("negative-rate jump count missing");
        let count: usize = neg.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(count > 0, "expected some jumps in the negative-rate window");
    }

    #[test]
    fn simulate_is_reproducible_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let one = dir.path().join("one.csv");
        let four = dir.path().join("four.csv");
        let mut cfg = base_config(one.clone());
        cfg.mode = ModeArg::Standard;
        cfg.ntraj = 600;
        cfg.points = 7;
        cfg.workers = Some(1);
        cmd_simulate(&cfg).unwrap();
        cfg.out = Some(four.clone());
        cfg.workers = Some(4);
        cmd_simulate(&cfg).unwrap();
        let a = std::fs::read(&one).unwrap();
        let b = std::fs::read(&four).unwrap();
        assert_eq!(a, b, "same seed must give byte-identical tables");
    }
}
