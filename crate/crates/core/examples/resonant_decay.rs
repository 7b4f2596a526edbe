//! Drive the full library flow end to end: build the resonant model, run a
//! Monte Carlo ensemble, and print the excited population against the
//! deterministic integrator at each grid point.

use qjump_core::ensemble::{population, run_ensemble, EnsembleConfig, UnravelingMode, UnravelingSpec};
use qjump_core::jc::JCParams;
use qjump_core::linear::{excited, DensityMatrix};
use qjump_core::master::{integrate, jc_lindblad_spec, lindblad_to_general, TclOrder};

fn main() {
    let p = JCParams::resonant(1.0, 5.0).expect("valid parameters");
    let lind = jc_lindblad_spec(p, TclOrder::Tcl4, true, 3.0);
    let grid: Vec<f64> = (0..31).map(|k| 3.0 * k as f64 / 30.0).collect();

    let reference = integrate(
        &lindblad_to_general(&lind),
        &DensityMatrix::pure(&excited()),
        &grid,
        40,
    )
    .expect("reference integration");

    let cfg = EnsembleConfig::new(20_000, 7, grid.clone(), 10, UnravelingMode::Standard);
    let est = run_ensemble(&UnravelingSpec::Standard(lind), &excited(), &cfg)
        .expect("ensemble run");
    let pop = population(&est, 0);

    println!("# t, rho11_mc, rho11_ode, |diff|, 3*stderr");
    let mut worst = 0.0_f64;
    for (k, t) in grid.iter().enumerate() {
        let mc = pop.mean[k];
        let ode = reference.states[k].entry(0, 0).re;
        let diff = (mc - ode).abs();
        let band = 3.0 * pop.stderr[k];
        worst = worst.max(if band > 0.0 { diff / band } else { 0.0 });
        println!("{t:.3}  {mc:.6}  {ode:.6}  {diff:.2e}  {band:.2e}");
    }
    println!(
        "# jumps: {}, max norm drift: {:.2e}, worst |diff|/3stderr: {worst:.3}",
        est.jump_events.len(),
        est.max_norm_drift
    );
}
