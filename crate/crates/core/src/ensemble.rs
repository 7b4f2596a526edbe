//! Trajectory-batch execution and density-matrix estimation.
//!
//! The ensemble mean of |ψ_k⟩⟨ψ_k| (standard unraveling) or |φ_k⟩⟨ψ_k|
//! (doubled unraveling) estimates the density matrix ρ(t); per-entry
//! standard errors come from one-pass Welford accumulation over the
//! independent trajectories. Trajectories are partitioned into fixed-size
//! chunks handed to worker threads; with `deterministic_reduction` the
//! chunk partials are merged by a pairwise tree in trajectory order, making
//! the result bit-identical for any worker count.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linear::{DensityMatrix, PairState, StateVector};
use crate::master::{GeneralSpec, LindbladSpec};
use crate::pdp::{
    DoubledPropagator, JumpEvent, JumpTiming, PdpError, RandomSource, StandardPropagator,
};

/// Which unraveling generates the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnravelingMode {
    /// States in ℋ; requires non-negative rates; mean of |ψ⟩⟨ψ|.
    Standard,
    /// Pairs in ℋ⊕ℋ; rates of either sign; mean of |φ⟩⟨ψ|.
    Doubled,
}

impl std::fmt::Display for UnravelingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnravelingMode::Standard => write!(f, "standard"),
            UnravelingMode::Doubled => write!(f, "doubled"),
        }
    }
}

/// The master-equation specification matching the chosen unraveling.
#[derive(Clone)]
pub enum UnravelingSpec {
    Standard(LindbladSpec),
    Doubled(GeneralSpec),
}

impl UnravelingSpec {
    pub fn mode(&self) -> UnravelingMode {
        match self {
            UnravelingSpec::Standard(_) => UnravelingMode::Standard,
            UnravelingSpec::Doubled(_) => UnravelingMode::Doubled,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            UnravelingSpec::Standard(s) => s.dim(),
            UnravelingSpec::Doubled(s) => s.dim(),
        }
    }
}

/// Batch configuration.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_traj: u64,
    pub master_seed: u64,
    pub grid: Vec<f64>,
    pub substeps: usize,
    pub mode: UnravelingMode,
    /// Fix the summation order (pairwise tree over chunks in trajectory
    /// order) so results are bit-identical across worker schedules.
    pub deterministic_reduction: bool,
    /// Trajectories per work unit.
    pub chunk: usize,
    /// Jump-timing scheme passed through to the propagator.
    pub timing: JumpTiming,
}

impl EnsembleConfig {
    pub fn new(
        n_traj: u64,
        master_seed: u64,
        grid: Vec<f64>,
        substeps: usize,
        mode: UnravelingMode,
    ) -> Self {
        Self {
            n_traj,
            master_seed,
            grid,
            substeps,
            mode,
            deterministic_reduction: true,
            chunk: 1024,
            timing: JumpTiming::default(),
        }
    }
}

/// Errors from batch configuration and execution.
#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Pdp(#[from] PdpError),
    #[error("n_traj must be >= 1")]
    ZeroTrajectories,
    #[error("chunk size must be >= 1")]
    ZeroChunk,
    #[error("config requests {requested} mode but the spec is for {supplied} mode")]
    ModeMismatch { requested: UnravelingMode, supplied: UnravelingMode },
}

/// The estimated density matrix with per-entry statistics.
///
/// `stderr[k][r*dim + c]` is the standard error of entry (r, c) at grid
/// point k: √(s²/n) with s² the per-trajectory sample variance of the
/// complex entry (real and imaginary fluctuations combined). The estimate
/// is reported raw — see [`hermitize`] for the symmetrized copy.
#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub rho_mean: Vec<DensityMatrix>,
    pub stderr: Vec<Vec<f64>>,
    pub n_traj: u64,
    /// Every jump of every trajectory (trajectory order under
    /// deterministic reduction), for jump statistics and rate-sign audits.
    pub jump_events: Vec<JumpEvent>,
    /// Worst pre-renormalization norm drift over all trajectories
    /// (standard mode; 0 in doubled mode).
    pub max_norm_drift: f64,
}

impl EnsembleEstimate {
    pub fn dim(&self) -> usize {
        self.rho_mean.first().map_or(0, |m| m.dim())
    }

    pub fn stderr_entry(&self, point: usize, row: usize, col: usize) -> f64 {
        self.stderr[point][row * self.dim() + col]
    }
}

/// Replace each mean with (ρ + ρ†)/2. Populations change only by the
/// discard of their statistical imaginary part; the raw estimate stays
/// available in the input.
pub fn hermitize(est: &EnsembleEstimate) -> EnsembleEstimate {
    let mut out = est.clone();
    for rho in &mut out.rho_mean {
        *rho = rho.hermitized();
    }
    out
}

/// One diagonal entry of the estimate as a real time series.
#[derive(Debug, Clone)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl PopulationSeries {
    /// Deviation from the Markov decay law: mean(t) − e^{−γ₀t}.
    pub fn markov_deviation(&self, gamma0: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.mean)
            .map(|(t, m)| m - (-gamma0 * t).exp())
            .collect()
    }
}

/// Real part of diagonal entry `index` with its standard error.
pub fn population(est: &EnsembleEstimate, index: usize) -> PopulationSeries {
    assert!(index < est.dim(), "population index out of range");
    let mean = est.rho_mean.iter().map(|rho| rho.entry(index, index).re).collect();
    let stderr =
        (0..est.times.len()).map(|k| est.stderr_entry(k, index, index)).collect();
    PopulationSeries { times: est.times.clone(), mean, stderr }
}

// ---------------------------------------------------------------------------
// Welford/Chan accumulation.
// ---------------------------------------------------------------------------

/// One-pass mean and scatter for a vector of complex samples: after n
/// samples, `mean` is the sample mean and `m2[i]` = Σ|x_i − mean_i|².
struct Accumulator {
    count: u64,
    mean: Vec<Complex64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![Complex64::ZERO; len], m2: vec![0.0; len] }
    }

    fn begin_sample(&mut self) {
        self.count += 1;
    }

    /// Welford update of component `idx` with this sample's value.
    #[inline]
    fn update(&mut self, idx: usize, x: Complex64) {
        let delta = x - self.mean[idx];
        let new_mean = self.mean[idx] + delta / self.count as f64;
        self.m2[idx] += (delta.conj() * (x - new_mean)).re;
        self.mean[idx] = new_mean;
    }

    /// Chan's parallel combination of two disjoint-sample accumulators.
    fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * (nb / n);
            self.m2[i] += other.m2[i] + delta.norm_sqr() * (na * nb / n);
        }
        self.count += other.count;
        self
    }

    fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.m2.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|&m2| (m2 / (n - 1.0) / n).sqrt()).collect()
    }
}

// ---------------------------------------------------------------------------
// Batch execution.
// ---------------------------------------------------------------------------

enum Prepared {
    Standard(StandardPropagator, StateVector),
    Doubled(DoubledPropagator, PairState),
}

struct ChunkResult {
    acc: Accumulator,
    jumps: Vec<JumpEvent>,
    max_norm_drift: f64,
}

impl ChunkResult {
    fn empty(len: usize) -> Self {
        Self { acc: Accumulator::new(len), jumps: Vec::new(), max_norm_drift: 0.0 }
    }

    fn merge(mut self, mut other: Self) -> Self {
        self.acc = self.acc.merge(other.acc);
        self.jumps.append(&mut other.jumps);
        self.max_norm_drift = self.max_norm_drift.max(other.max_norm_drift);
        self
    }
}

fn run_chunk(
    prepared: &Prepared,
    cfg: &EnsembleConfig,
    dim: usize,
    first: u64,
    last: u64,
) -> Result<ChunkResult, EnsembleError> {
    let points = cfg.grid.len();
    let mut out = ChunkResult::empty(points * dim * dim);
    for k in first..last {
        let mut rng = RandomSource::for_trajectory(cfg.master_seed, k);
        match prepared {
            Prepared::Standard(prop, psi0) => {
                let traj = prop.simulate(psi0, &mut rng, cfg.timing)?;
                out.acc.begin_sample();
                for (p, state) in traj.states.iter().enumerate() {
                    let a = state.amplitudes();
                    let base = p * dim * dim;
                    for r in 0..dim {
                        for c in 0..dim {
                            out.acc.update(base + r * dim + c, a[r] * a[c].conj());
                        }
                    }
                }
                out.jumps.extend_from_slice(&traj.jumps);
                out.max_norm_drift = out.max_norm_drift.max(traj.max_norm_drift);
            }
            Prepared::Doubled(prop, theta0) => {
                let traj = prop.simulate(theta0, &mut rng, cfg.timing)?;
                out.acc.begin_sample();
                for (p, state) in traj.states.iter().enumerate() {
                    let phi = state.phi.amplitudes();
                    let psi = state.psi.amplitudes();
                    let base = p * dim * dim;
                    for r in 0..dim {
                        for c in 0..dim {
                            out.acc.update(base + r * dim + c, phi[r] * psi[c].conj());
                        }
                    }
                }
                out.jumps.extend_from_slice(&traj.jumps);
            }
        }
    }
    Ok(out)
}

/// Pairwise tree over chunk partials in chunk order: merge adjacent pairs
/// until one remains. Fixed shape → fixed floating-point result.
fn merge_tree(mut level: Vec<ChunkResult>, len: usize) -> ChunkResult {
    if level.is_empty() {
        return ChunkResult::empty(len);
    }
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().unwrap()
}

/// Run `cfg.n_traj` trajectories of `spec` from `psi0` (doubled mode starts
/// from the symmetric pair θ₀ = (ψ₀, ψ₀)) and return the density-matrix
/// estimate. Work is parallelized over the current rayon pool; install a
/// dedicated pool around this call to control the worker count.
pub fn run_ensemble(
    spec: &UnravelingSpec,
    psi0: &StateVector,
    cfg: &EnsembleConfig,
) -> Result<EnsembleEstimate, EnsembleError> {
    if cfg.n_traj == 0 {
        return Err(EnsembleError::ZeroTrajectories);
    }
    if cfg.chunk == 0 {
        return Err(EnsembleError::ZeroChunk);
    }
    if cfg.mode != spec.mode() {
        return Err(EnsembleError::ModeMismatch {
            requested: cfg.mode,
            supplied: spec.mode(),
        });
    }
    let dim = spec.dim();
    let prepared = match spec {
        UnravelingSpec::Standard(s) => Prepared::Standard(
            StandardPropagator::new(s, &cfg.grid, cfg.substeps)?,
            psi0.clone(),
        ),
        UnravelingSpec::Doubled(s) => Prepared::Doubled(
            DoubledPropagator::new(s, &cfg.grid, cfg.substeps)?,
            PairState::symmetric(psi0.clone()),
        ),
    };

    let n_chunks = (cfg.n_traj as usize).div_ceil(cfg.chunk);
    let bounds: Vec<(u64, u64)> = (0..n_chunks)
        .map(|c| {
            let first = (c * cfg.chunk) as u64;
            (first, cfg.n_traj.min(first + cfg.chunk as u64))
        })
        .collect();

    let len = cfg.grid.len() * dim * dim;
    let total = if cfg.deterministic_reduction {
        // Collect per-chunk results in chunk order, then merge by a fixed
        // pairwise tree: the result is independent of thread scheduling.
        let partials: Vec<ChunkResult> = bounds
            .par_iter()
            .map(|&(first, last)| run_chunk(&prepared, cfg, dim, first, last))
            .collect::<Result<_, _>>()?;
        merge_tree(partials, len)
    } else {
        bounds
            .par_iter()
            .map(|&(first, last)| run_chunk(&prepared, cfg, dim, first, last))
            .try_reduce(|| ChunkResult::empty(len), |a, b| Ok(a.merge(b)))?
    };

    let mut rho_mean = Vec::with_capacity(cfg.grid.len());
    let mut stderr = Vec::with_capacity(cfg.grid.len());
    let all_stderr = total.acc.stderr();
    for p in 0..cfg.grid.len() {
        let base = p * dim * dim;
        rho_mean.push(DensityMatrix::new(
            dim,
            total.acc.mean[base..base + dim * dim].to_vec(),
        ));
        stderr.push(all_stderr[base..base + dim * dim].to_vec());
    }
    Ok(EnsembleEstimate {
        times: cfg.grid.clone(),
        rho_mean,
        stderr,
        n_traj: cfg.n_traj,
        jump_events: total.jumps,
        max_norm_drift: total.max_norm_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jc::JCParams;
    use crate::linear::{c64, excited, Operator};
    use crate::master::{
        integrate, jc_general_spec, jc_lindblad_spec, LindbladChannel, TclOrder,
    };
    use crate::linear::sigma_minus;
    use approx::assert_abs_diff_eq;

    fn grid(t_max: f64, points: usize) -> Vec<f64> {
        (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
    }

    fn bits_of(est: &EnsembleEstimate) -> Vec<u64> {
        let mut bits = Vec::new();
        for rho in &est.rho_mean {
            for e in rho.entries() {
                bits.push(e.re.to_bits());
                bits.push(e.im.to_bits());
            }
        }
        for se in &est.stderr {
            bits.extend(se.iter().map(|x| x.to_bits()));
        }
        for j in &est.jump_events {
            bits.push(j.time.to_bits());
            bits.push(j.channel as u64);
            bits.push(j.channel_weight.to_bits());
        }
        bits
    }

    #[test]
    fn single_trajectory_zero_rate_is_exact() {
        let spec = UnravelingSpec::Standard(
            crate::master::LindbladSpec::new(
                Operator::zeros(2),
                vec![LindbladChannel::with_constant_rate(sigma_minus(), 0.0)],
            )
            .unwrap(),
        );
        let cfg = EnsembleConfig::new(1, 5, grid(2.0, 9), 8, UnravelingMode::Standard);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        for (rho, se) in est.rho_mean.iter().zip(&est.stderr) {
            assert_eq!(rho.entry(0, 0), c64(1.0, 0.0));
            assert_eq!(rho.entry(1, 1), c64(0.0, 0.0));
            assert!(se.iter().all(|&x| x == 0.0));
        }
        assert!(est.jump_events.is_empty());
    }

    #[test]
    fn initial_point_is_estimated_exactly() {
        // Every trajectory starts at ψ₀, so the t = 0 estimate is
        // outer(ψ₀, ψ₀) with zero spread — exactly, not just approximately.
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p, TclOrder::Tcl4, true, 2.0));
        let cfg = EnsembleConfig::new(64, 11, grid(2.0, 6), 12, UnravelingMode::Standard);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        assert_eq!(est.rho_mean[0].entry(0, 0), c64(1.0, 0.0));
        assert_eq!(est.rho_mean[0].entry(0, 1), c64(0.0, 0.0));
        assert!(est.stderr[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn standard_mode_keeps_unit_trace() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p, TclOrder::Tcl4, true, 3.0));
        let cfg = EnsembleConfig::new(300, 7, grid(3.0, 13), 10, UnravelingMode::Standard);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        for rho in &est.rho_mean {
            assert!((rho.trace().re - 1.0).abs() <= 1e-9);
            assert!(rho.trace().im.abs() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_reduction_is_bit_identical_across_pools() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p, TclOrder::Tcl4, true, 2.0));
        let mut cfg = EnsembleConfig::new(97, 21, grid(2.0, 9), 8, UnravelingMode::Standard);
        cfg.chunk = 16; // several chunks so scheduling could matter
        let runs: Vec<Vec<u64>> = [1usize, 3]
            .iter()
            .map(|&workers| {
                let pool =
                    rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
                let est = pool.install(|| run_ensemble(&spec, &excited(), &cfg)).unwrap();
                bits_of(&est)
            })
            .collect();
        assert_eq!(runs[0], runs[1], "estimates must not depend on the worker count");
    }

    #[test]
    fn chunked_merge_matches_single_chunk() {
        // Chan's combination over many chunks must reproduce the plain
        // single-pass statistics up to rounding.
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p, TclOrder::Tcl4, true, 2.0));
        let mut one = EnsembleConfig::new(60, 3, grid(2.0, 7), 8, UnravelingMode::Standard);
        one.chunk = 60;
        let mut many = one.clone();
        many.chunk = 7;
        let est_one = run_ensemble(&spec, &excited(), &one).unwrap();
        let est_many = run_ensemble(&spec, &excited(), &many).unwrap();
        for (a, b) in est_one.rho_mean.iter().zip(&est_many.rho_mean) {
            assert!(a.max_abs_diff(b).unwrap() <= 1e-13);
        }
        for (a, b) in est_one.stderr.iter().zip(&est_many.stderr) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn resonant_ensemble_tracks_the_ode_solution() {
        // Monte Carlo vs the deterministic integrator on the same master
        // equation: every grid point within a few standard errors.
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let lind = jc_lindblad_spec(p, TclOrder::Tcl4, true, 3.0);
        let g = grid(3.0, 16);
        let reference = integrate(
            &crate::master::lindblad_to_general(&lind),
            &DensityMatrix::pure(&excited()),
            &g,
            40,
        )
        .unwrap();
        let spec = UnravelingSpec::Standard(lind);
        let cfg = EnsembleConfig::new(2000, 2024, g, 10, UnravelingMode::Standard);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        let pop = population(&est, 0);
        for (k, (m, se)) in pop.mean.iter().zip(&pop.stderr).enumerate() {
            let reference_pop = reference.states[k].entry(0, 0).re;
            let band = 3.0 * se.max(1e-4);
            assert!(
                (m - reference_pop).abs() <= band,
                "point {k}: MC {m:.5} vs ODE {reference_pop:.5} ± {band:.5}"
            );
        }
    }

    #[test]
    fn doubled_negative_jump_flips_the_ground_population_sign() {
        // Trajectories that jump while the rate is negative contribute
        // negatively to ρ₀₀ from then on: the φ component carries the rate.
        let p = JCParams::new(65.0, 19.5, 156.0).unwrap();
        let gen = jc_general_spec(p, TclOrder::Tcl4, false, 0.5);
        let g4 = crate::jc::gamma4_detuned(p);
        let g = grid(0.12, 13);
        let prop = DoubledPropagator::new(&gen, &g, 40).unwrap();
        let theta0 = PairState::symmetric(excited());
        let mut negative_jumpers = 0;
        for k in 0..400 {
            let mut rng = RandomSource::for_trajectory(31, k);
            let traj = prop.simulate(&theta0, &mut rng, JumpTiming::default()).unwrap();
            let Some(jump) = traj.jumps.first() else { continue };
            if g4.value(jump.time) >= 0.0 {
                continue;
            }
            negative_jumpers += 1;
            for (t, state) in traj.times.iter().zip(&traj.states) {
                if *t > jump.time {
                    let rho = state.outer();
                    assert!(
                        rho.entry(1, 1).re < 0.0,
                        "ground-ground contribution must be negative after a \
                         negative-rate jump (t = {t})"
                    );
                }
            }
        }
        assert!(
            negative_jumpers >= 20,
            "expected a sizable share of negative-rate jumps, got {negative_jumpers}/400"
        );
    }

    #[test]
    fn doubled_estimate_hermitizes_cleanly() {
        let p = JCParams::new(65.0, 19.5, 156.0).unwrap();
        let spec = UnravelingSpec::Doubled(jc_general_spec(p, TclOrder::Tcl4, false, 0.2));
        let cfg = EnsembleConfig::new(500, 99, grid(0.2, 9), 40, UnravelingMode::Doubled);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        let sym = hermitize(&est);
        for (k, (raw, h)) in est.rho_mean.iter().zip(&sym.rho_mean).enumerate() {
            // Hermitization only discards the statistical asymmetry, which
            // is bounded by the reported spread.
            let scale: f64 =
                est.stderr[k].iter().cloned().fold(0.0, f64::max).max(1e-12);
            assert!(raw.max_abs_diff(h).unwrap() <= 5.0 * scale);
            for r in 0..2 {
                for c in 0..2 {
                    let a = h.entry(r, c);
                    let b = h.entry(c, r).conj();
                    assert!((a - b).norm() <= 1e-15);
                }
            }
        }
        // Standard-mode estimates are Hermitian termwise already.
        let p_res = JCParams::resonant(1.0, 5.0).unwrap();
        let std_spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p_res, TclOrder::Tcl4, true, 1.0));
        let std_cfg = EnsembleConfig::new(50, 4, grid(1.0, 5), 10, UnravelingMode::Standard);
        let std_est = run_ensemble(&std_spec, &excited(), &std_cfg).unwrap();
        let std_sym = hermitize(&std_est);
        for (raw, h) in std_est.rho_mean.iter().zip(&std_sym.rho_mean) {
            assert!(raw.max_abs_diff(h).unwrap() <= 1e-15);
        }
    }

    #[test]
    fn config_errors_are_reported() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let lind = jc_lindblad_spec(p, TclOrder::Tcl4, true, 1.0);
        let spec = UnravelingSpec::Standard(lind);
        let mut cfg = EnsembleConfig::new(0, 1, grid(1.0, 5), 10, UnravelingMode::Standard);
        assert!(matches!(
            run_ensemble(&spec, &excited(), &cfg),
            Err(EnsembleError::ZeroTrajectories)
        ));
        cfg.n_traj = 10;
        cfg.mode = UnravelingMode::Doubled;
        assert!(matches!(
            run_ensemble(&spec, &excited(), &cfg),
            Err(EnsembleError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn markov_deviation_starts_at_zero_and_peaks_early() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec =
            UnravelingSpec::Standard(jc_lindblad_spec(p, TclOrder::Tcl4, true, 3.0));
        let cfg = EnsembleConfig::new(3000, 8, grid(3.0, 13), 10, UnravelingMode::Standard);
        let est = run_ensemble(&spec, &excited(), &cfg).unwrap();
        let pop = population(&est, 0);
        let dev = pop.markov_deviation(1.0);
        assert_eq!(dev[0], 0.0);
        // γ(t) < γ₀ at early times, so the exact population decays slower
        // than the Markov law: the deviation is positive once t > 0.
        assert!(dev[1] > 0.0 && dev[2] > 0.0);
    }
}
