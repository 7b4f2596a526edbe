//! Piecewise-deterministic jump-process propagation of single trajectories.
//!
//! Between jumps the state follows a deterministic nonlinear flow; jumps
//! fire as an inhomogeneous Poisson process with state-dependent channel
//! intensities. Two unravelings are implemented:
//!
//! * **standard** (states in ℋ, [`LindbladSpec`]): drift
//!   dψ/dt = −iH(t)ψ − ½Σ_i[γ_i(t)+iS_i(t)]L_i†L_iψ + ½Σ_iγ_i(t)‖L_iψ‖²ψ,
//!   jump ψ → L_iψ/‖L_iψ‖ at intensity γ_i(t)‖L_iψ‖². Requires γ_i(t) ≥ 0;
//!   the ensemble mean of |ψ⟩⟨ψ| solves the master equation.
//! * **doubled** (pairs θ = (φ, ψ) in ℋ⊕ℋ, [`GeneralSpec`]): drift
//!   dθ/dt = [F(t) + ½Σ_i‖J_iθ‖²/‖θ‖²]θ with F = diag(A, B) and
//!   J_i = diag(C_i, D_i), jump θ → (‖θ‖/‖J_iθ‖)J_iθ at intensity
//!   ‖J_iθ‖²/‖θ‖². Well-defined for rate functions of either sign; the
//!   ensemble mean of |φ⟩⟨ψ| solves the general master equation.
//!
//! Jump times are generated by integrated-intensity inversion: draw
//! u ∈ (0,1), accumulate Λ(t) = ∫λ_tot by the trapezoid rule on substep
//! endpoints, and locate the crossing Λ = −ln u inside a substep by
//! bisection on the quadratically interpolated Λ. A first-order per-step
//! Bernoulli variant is kept behind [`JumpTiming`] for cross-checks.
//!
//! [`StandardPropagator`] and [`DoubledPropagator`] precompile a
//! (spec, grid, substeps) triple: all scalar coefficients are tabulated at
//! the fixed RK4 stage times once, so propagating each trajectory does no
//! coefficient re-evaluation on the regular schedule (closures are still
//! called directly for the rare partial steps after a jump). Build one
//! propagator per run and share it across workers.

use num_complex::Complex64;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linear::{LinearError, Operator, PairState, StateVector};
use crate::master::{GeneralSpec, LindbladSpec, MasterError};

/// Errors from trajectory propagation.
#[derive(Debug, Error)]
pub enum PdpError {
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    /// The standard unraveling's intensities γ_i(t)‖L_iψ‖² require
    /// non-negative rates.
    #[error("rate of channel {channel} is negative at t = {t} (gamma = {rate}): the standard unraveling is undefined there; use the doubled-space scheme")]
    NegativeRate { channel: usize, t: f64, rate: f64 },
    /// L_iψ (or J_iθ) vanished where a jump was requested.
    #[error("jump target has zero norm (channel {channel} at t = {t})")]
    ZeroJumpTarget { channel: usize, t: f64 },
    #[error("initial state component norms must be 1 (deviation {deviation:.3e})")]
    NotNormalized { deviation: f64 },
    #[error("time grid must be strictly increasing and non-empty")]
    BadGrid,
    #[error("substeps must be >= 1")]
    BadSubsteps,
}

/// Deterministic uniform-variate stream: ChaCha8 keyed by a 64-bit seed,
/// with a 64-bit stream id selecting an independent substream. Per-trajectory
/// randomness is derived as (master seed, trajectory index) — reproducible
/// across platforms and parallel schedules by construction.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RandomSource {
    /// Stream 0 of a seed.
    pub fn new(seed: u64) -> Self {
        Self::for_trajectory(seed, 0)
    }

    /// The independent stream for one trajectory of an ensemble.
    pub fn for_trajectory(master_seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory);
        Self { rng, seed: master_seed, stream: trajectory }
    }

    /// Uniform variate in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

/// One jump of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Time at which the jump fired.
    pub time: f64,
    /// Index of the triggering channel.
    pub channel: usize,
    /// The channel intensity at the jump: γ_i‖L_iψ‖² (standard) or
    /// ‖J_iθ‖²/‖θ‖² (doubled), in rate units.
    pub channel_weight: f64,
}

/// A single propagated trajectory: the state at every grid point plus the
/// full jump log and the randomness identity that produced it.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub jumps: Vec<JumpEvent>,
    pub seed: u64,
    pub stream: u64,
    /// Worst |‖ψ‖ − 1| observed before the per-substep renormalization
    /// (standard scheme; the doubled scheme is never renormalized and
    /// reports 0).
    pub max_norm_drift: f64,
}

/// How jump times are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpTiming {
    /// Integrated-intensity inversion (exact waiting-time law up to
    /// quadrature error; the default).
    #[default]
    IntensityInversion,
    /// First-order scheme: one Bernoulli flip with probability λ(t)·h per
    /// substep. O(h)-biased; kept for cross-checking.
    BernoulliPerStep,
}

// ---------------------------------------------------------------------------
// Pointwise operations (direct coefficient evaluation).
// ---------------------------------------------------------------------------

/// Standard-unraveling drift dψ/dt = −iG(ψ, t) evaluated at one point. The
/// nonlinear compensation term assumes ‖ψ‖ = 1. Fails only if a coefficient
/// fails to evaluate.
pub fn drift_standard(
    spec: &LindbladSpec,
    t: f64,
    psi: &StateVector,
) -> Result<StateVector, PdpError> {
    let dim = spec.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    standard_deriv_direct(spec, t, psi.amplitudes(), &mut out, &mut scratch)?;
    Ok(StateVector::new(out))
}

fn standard_deriv_direct(
    spec: &LindbladSpec,
    t: f64,
    y: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut [Complex64],
) -> Result<(), PdpError> {
    out.fill(Complex64::new(0.0, 0.0));
    spec.hamiltonian().apply_scaled_slice(Complex64::new(0.0, -1.0), y, out);
    let mut nonlinear = 0.0;
    for ch in spec.channels() {
        let gamma = ch.rate(t)?;
        let shift = ch.shift(t)?;
        // L†L ψ, reused for both the linear term and ‖Lψ‖² = ⟨ψ|L†Lψ⟩.
        let ltl = ch.op().adjoint().matmul(ch.op()).expect("spec dims are validated");
        ltl.apply_slice(y, scratch);
        let weight: f64 =
            y.iter().zip(scratch.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        let coeff = Complex64::new(-0.5 * gamma, -0.5 * shift);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += coeff * s;
        }
        nonlinear += gamma * weight;
    }
    let half_nl = Complex64::new(0.5 * nonlinear, 0.0);
    for (o, v) in out.iter_mut().zip(y.iter()) {
        *o += half_nl * v;
    }
    Ok(())
}

/// Standard-unraveling jump ψ → L_iψ/‖L_iψ‖.
pub fn jump_standard(
    spec: &LindbladSpec,
    channel: usize,
    psi: &StateVector,
) -> Result<StateVector, PdpError> {
    let op = spec.channels()[channel].op();
    let target = op.apply(psi)?;
    target.normalized().map_err(|_| PdpError::ZeroJumpTarget { channel, t: f64::NAN })
}

/// Standard-unraveling channel intensities λ_i(t) = γ_i(t)‖L_iψ‖². Errors
/// on negative rates, directing the caller to the doubled scheme.
pub fn jump_intensity_standard(
    spec: &LindbladSpec,
    t: f64,
    psi: &StateVector,
) -> Result<Vec<f64>, PdpError> {
    spec.channels()
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let gamma = ch.rate(t)?;
            if gamma < 0.0 {
                return Err(PdpError::NegativeRate { channel: i, t, rate: gamma });
            }
            Ok(gamma * ch.op().apply(psi)?.norm_sq())
        })
        .collect()
}

/// Doubled-space drift dθ/dt = [F(t) + ½Σ_i‖J_iθ‖²/‖θ‖²]θ at one point.
pub fn drift_doubled(
    spec: &GeneralSpec,
    t: f64,
    theta: &PairState,
) -> Result<PairState, PdpError> {
    let dim = spec.dim();
    let y = flatten_pair(theta);
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * dim];
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    doubled_deriv_direct(spec, t, &y, &mut out, &mut scratch)?;
    Ok(unflatten_pair(&out))
}

fn doubled_deriv_direct(
    spec: &GeneralSpec,
    t: f64,
    y: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut [Complex64],
) -> Result<(), PdpError> {
    let dim = spec.dim();
    let (phi, psi) = y.split_at(dim);
    out.fill(Complex64::new(0.0, 0.0));
    {
        let (out_phi, out_psi) = out.split_at_mut(dim);
        spec.a_op().accumulate_apply(t, phi, out_phi)?;
        spec.b_op().accumulate_apply(t, psi, out_psi)?;
    }
    let norm_sq: f64 = y.iter().map(|a| a.norm_sqr()).sum();
    let mut intensity_sum = 0.0;
    for (c_op, d_op) in spec.pairs() {
        scratch.fill(Complex64::new(0.0, 0.0));
        c_op.accumulate_apply(t, phi, scratch)?;
        let mut j_norm_sq: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
        scratch.fill(Complex64::new(0.0, 0.0));
        d_op.accumulate_apply(t, psi, scratch)?;
        j_norm_sq += scratch.iter().map(|a| a.norm_sqr()).sum::<f64>();
        intensity_sum += j_norm_sq / norm_sq;
    }
    let half = Complex64::new(0.5 * intensity_sum, 0.0);
    for (o, v) in out.iter_mut().zip(y.iter()) {
        *o += half * v;
    }
    Ok(())
}

/// Doubled-space jump θ → (‖θ‖/‖J_iθ‖)·J_iθ at time t; preserves ‖θ‖.
pub fn jump_doubled(
    spec: &GeneralSpec,
    channel: usize,
    t: f64,
    theta: &PairState,
) -> Result<PairState, PdpError> {
    let dim = spec.dim();
    let y = flatten_pair(theta);
    let mut target = vec![Complex64::new(0.0, 0.0); 2 * dim];
    apply_pair_op(spec, channel, t, &y, &mut target)?;
    let j_norm = target.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if j_norm <= 0.0 {
        return Err(PdpError::ZeroJumpTarget { channel, t });
    }
    let factor = Complex64::new(theta.norm_sq().sqrt() / j_norm, 0.0);
    for v in &mut target {
        *v *= factor;
    }
    Ok(unflatten_pair(&target))
}

/// J_iθ = (C_i(t)φ, D_i(t)ψ), written into `out`.
fn apply_pair_op(
    spec: &GeneralSpec,
    channel: usize,
    t: f64,
    y: &[Complex64],
    out: &mut [Complex64],
) -> Result<(), PdpError> {
    let dim = spec.dim();
    let (c_op, d_op) = &spec.pairs()[channel];
    let (phi, psi) = y.split_at(dim);
    out.fill(Complex64::new(0.0, 0.0));
    let (out_phi, out_psi) = out.split_at_mut(dim);
    c_op.accumulate_apply(t, phi, out_phi)?;
    d_op.accumulate_apply(t, psi, out_psi)?;
    Ok(())
}

/// Doubled-space channel intensities λ_i(t) = ‖J_iθ‖²/‖θ‖² — non-negative
/// by construction for rate functions of either sign.
pub fn jump_intensity_doubled(
    spec: &GeneralSpec,
    t: f64,
    theta: &PairState,
) -> Result<Vec<f64>, PdpError> {
    let dim = spec.dim();
    let y = flatten_pair(theta);
    let norm_sq = theta.norm_sq();
    let mut scratch = vec![Complex64::new(0.0, 0.0); 2 * dim];
    (0..spec.pairs().len())
        .map(|i| {
            apply_pair_op(spec, i, t, &y, &mut scratch)?;
            Ok(scratch.iter().map(|a| a.norm_sqr()).sum::<f64>() / norm_sq)
        })
        .collect()
}

fn flatten_pair(theta: &PairState) -> Vec<Complex64> {
    let mut y = Vec::with_capacity(2 * theta.dim());
    y.extend_from_slice(theta.phi.amplitudes());
    y.extend_from_slice(theta.psi.amplitudes());
    y
}

fn unflatten_pair(y: &[Complex64]) -> PairState {
    let dim = y.len() / 2;
    PairState::new(
        StateVector::new(y[..dim].to_vec()),
        StateVector::new(y[dim..].to_vec()),
    )
    .expect("halves share dim by construction")
}

// ---------------------------------------------------------------------------
// Stage schedule and coefficient tables.
// ---------------------------------------------------------------------------

/// The fixed times at which RK4 evaluates coefficients for a (grid,
/// substeps) pair: for global substep j, index 2j is its start, 2j+1 its
/// midpoint and 2j+2 its end (= start of substep j+1).
struct Schedule {
    grid: Vec<f64>,
    substeps: usize,
    stage_times: Vec<f64>,
}

impl Schedule {
    fn new(grid: &[f64], substeps: usize) -> Result<Self, PdpError> {
        if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PdpError::BadGrid);
        }
        if substeps == 0 {
            return Err(PdpError::BadSubsteps);
        }
        let intervals = grid.len() - 1;
        let total = intervals * substeps;
        let mut stage_times = vec![0.0; 2 * total + 1];
        stage_times[0] = grid[0];
        for w in 0..intervals {
            let h = (grid[w + 1] - grid[w]) / substeps as f64;
            for s in 0..substeps {
                let j = w * substeps + s;
                let start = grid[w] + s as f64 * h;
                stage_times[2 * j + 1] = start + 0.5 * h;
                // Snap the last substep of the interval onto the grid point
                // so recorded times match the requested grid exactly.
                stage_times[2 * j + 2] =
                    if s + 1 == substeps { grid[w + 1] } else { start + h };
            }
        }
        Ok(Self { grid: grid.to_vec(), substeps, stage_times })
    }

    fn substep_start(&self, j: usize) -> f64 {
        self.stage_times[2 * j]
    }

    fn substep_len(&self, j: usize) -> f64 {
        self.stage_times[2 * j + 2] - self.stage_times[2 * j]
    }
}

// ---------------------------------------------------------------------------
// Mode abstraction: what differs between the standard and doubled schemes.
// ---------------------------------------------------------------------------

/// Scheme-specific pieces of the trajectory driver. Indexed variants read
/// precompiled coefficient tables (infallible: validated at build); direct
/// variants evaluate the coefficient closures at arbitrary times (used for
/// the partial steps around jumps).
trait Mode {
    type State: Clone;

    fn flat_len(&self) -> usize;
    fn component_dim(&self) -> usize;
    fn validate_initial(&self, state: &Self::State) -> Result<(), PdpError>;
    fn flatten(&self, state: &Self::State) -> Vec<Complex64>;
    fn unflatten(&self, y: &[Complex64]) -> Self::State;

    fn deriv_indexed(&self, stage: usize, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]);
    fn deriv_direct(&self, t: f64, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) -> Result<(), PdpError>;

    fn intensities_indexed(&self, stage: usize, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]);
    fn intensities_direct(&self, t: f64, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]) -> Result<(), PdpError>;

    fn apply_jump(&self, t: f64, channel: usize, y: &mut Vec<Complex64>) -> Result<(), PdpError>;

    /// Post-substep normalization hook; returns |‖state‖ − 1| before the
    /// correction (standard scheme) or 0 (doubled scheme, never rescaled).
    fn renormalize(&self, y: &mut [Complex64]) -> f64;

    fn channel_count(&self) -> usize;
}

// ---------------------------------------------------------------------------
// Standard-unraveling propagator.
// ---------------------------------------------------------------------------

struct StandardChannel {
    op: Operator,
    ltl: Operator,
    /// γ_i and S_i at every stage time (rates validated non-negative).
    rate_table: Vec<f64>,
    shift_table: Vec<f64>,
}

/// Precompiled standard-unraveling run: spec × grid × substeps with all
/// rate/shift values tabulated at the RK4 stage times. Immutable and
/// shareable across worker threads; one instance propagates any number of
/// trajectories.
pub struct StandardPropagator {
    spec: LindbladSpec,
    schedule: Schedule,
    channels: Vec<StandardChannel>,
}

impl StandardPropagator {
    /// Builds the stage tables, rejecting the run up front if any channel
    /// rate is negative anywhere on the schedule (the standard unraveling is
    /// undefined there — use the doubled scheme).
    pub fn new(spec: &LindbladSpec, grid: &[f64], substeps: usize) -> Result<Self, PdpError> {
        let schedule = Schedule::new(grid, substeps)?;
        let channels = spec
            .channels()
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                let mut rate_table = Vec::with_capacity(schedule.stage_times.len());
                let mut shift_table = Vec::with_capacity(schedule.stage_times.len());
                for &t in &schedule.stage_times {
                    let gamma = ch.rate(t)?;
                    if gamma < 0.0 {
                        return Err(PdpError::NegativeRate { channel: i, t, rate: gamma });
                    }
                    rate_table.push(gamma);
                    shift_table.push(ch.shift(t)?);
                }
                Ok(StandardChannel {
                    op: ch.op().clone(),
                    ltl: ch.op().adjoint().matmul(ch.op())?,
                    rate_table,
                    shift_table,
                })
            })
            .collect::<Result<Vec<_>, PdpError>>()?;
        Ok(Self { spec: spec.clone(), schedule, channels })
    }

    /// Propagate one trajectory from `psi0` (which must be normalized).
    pub fn simulate(
        &self,
        psi0: &StateVector,
        rng: &mut RandomSource,
        timing: JumpTiming,
    ) -> Result<TrajectoryRecord<StateVector>, PdpError> {
        run_trajectory(self, &self.schedule, psi0, rng, timing)
    }

    fn deriv_with(
        &self,
        coeffs: impl Fn(usize) -> (f64, f64),
        y: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        out.fill(Complex64::new(0.0, 0.0));
        self.spec.hamiltonian().apply_scaled_slice(Complex64::new(0.0, -1.0), y, out);
        let mut nonlinear = 0.0;
        for (i, ch) in self.channels.iter().enumerate() {
            let (gamma, shift) = coeffs(i);
            ch.ltl.apply_slice(y, scratch);
            let weight: f64 =
                y.iter().zip(scratch.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            let coeff = Complex64::new(-0.5 * gamma, -0.5 * shift);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += coeff * s;
            }
            nonlinear += gamma * weight;
        }
        let half_nl = Complex64::new(0.5 * nonlinear, 0.0);
        for (o, v) in out.iter_mut().zip(y.iter()) {
            *o += half_nl * v;
        }
    }
}

impl Mode for StandardPropagator {
    type State = StateVector;

    fn flat_len(&self) -> usize {
        self.spec.dim()
    }

    fn component_dim(&self) -> usize {
        self.spec.dim()
    }

    fn validate_initial(&self, state: &Self::State) -> Result<(), PdpError> {
        let deviation = (state.norm() - 1.0).abs();
        if deviation > 1e-9 {
            return Err(PdpError::NotNormalized { deviation });
        }
        Ok(())
    }

    fn flatten(&self, state: &Self::State) -> Vec<Complex64> {
        state.amplitudes().to_vec()
    }

    fn unflatten(&self, y: &[Complex64]) -> Self::State {
        StateVector::new(y.to_vec())
    }

    fn deriv_indexed(&self, stage: usize, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        self.deriv_with(
            |i| (self.channels[i].rate_table[stage], self.channels[i].shift_table[stage]),
            y,
            out,
            scratch,
        );
    }

    fn deriv_direct(&self, t: f64, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) -> Result<(), PdpError> {
        // Evaluate and validate the rates first, then reuse the shared form.
        let mut coeffs = Vec::with_capacity(self.channels.len());
        for (i, ch) in self.spec.channels().iter().enumerate() {
            let gamma = ch.rate(t)?;
            if gamma < 0.0 {
                return Err(PdpError::NegativeRate { channel: i, t, rate: gamma });
            }
            coeffs.push((gamma, ch.shift(t)?));
        }
        self.deriv_with(|i| coeffs[i], y, out, scratch);
        Ok(())
    }

    fn intensities_indexed(&self, stage: usize, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]) {
        for (i, ch) in self.channels.iter().enumerate() {
            ch.op.apply_slice(y, scratch);
            let norm_sq: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
            out[i] = ch.rate_table[stage] * norm_sq;
        }
    }

    fn intensities_direct(&self, t: f64, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]) -> Result<(), PdpError> {
        for (i, (ch, data)) in self.spec.channels().iter().zip(&self.channels).enumerate() {
            let gamma = ch.rate(t)?;
            if gamma < 0.0 {
                return Err(PdpError::NegativeRate { channel: i, t, rate: gamma });
            }
            data.op.apply_slice(y, scratch);
            let norm_sq: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
            out[i] = gamma * norm_sq;
        }
        Ok(())
    }

    fn apply_jump(&self, t: f64, channel: usize, y: &mut Vec<Complex64>) -> Result<(), PdpError> {
        let mut target = vec![Complex64::new(0.0, 0.0); y.len()];
        self.channels[channel].op.apply_slice(y, &mut target);
        let norm = target.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(PdpError::ZeroJumpTarget { channel, t });
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        for v in &mut target {
            *v *= inv;
        }
        *y = target;
        Ok(())
    }

    fn renormalize(&self, y: &mut [Complex64]) -> f64 {
        let norm = y.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let drift = (norm - 1.0).abs();
        if norm > 0.0 {
            let inv = Complex64::new(1.0 / norm, 0.0);
            for v in y.iter_mut() {
                *v *= inv;
            }
        }
        drift
    }

    fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

// ---------------------------------------------------------------------------
// Doubled-space propagator.
// ---------------------------------------------------------------------------

struct TermTable {
    op: Operator,
    /// Coefficient at every stage time.
    table: Vec<Complex64>,
}

/// Precompiled doubled-space run, mirroring [`StandardPropagator`]: every
/// scalar coefficient of A, B, C_i, D_i is tabulated at the stage times.
pub struct DoubledPropagator {
    spec: GeneralSpec,
    schedule: Schedule,
    a_terms: Vec<TermTable>,
    b_terms: Vec<TermTable>,
    pair_terms: Vec<(Vec<TermTable>, Vec<TermTable>)>,
}

impl DoubledPropagator {
    /// Builds the stage tables; any coefficient-evaluation failure (for
    /// example the square root of a negative rate in a symmetric-reduction
    /// spec) surfaces here, before any trajectory runs.
    pub fn new(spec: &GeneralSpec, grid: &[f64], substeps: usize) -> Result<Self, PdpError> {
        let schedule = Schedule::new(grid, substeps)?;
        let build = |op: &crate::master::TimeOperator| -> Result<Vec<TermTable>, PdpError> {
            op.terms()
                .iter()
                .map(|(f, k)| {
                    let table = schedule
                        .stage_times
                        .iter()
                        .map(|&t| f(t).map_err(PdpError::from))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(TermTable { op: k.clone(), table })
                })
                .collect()
        };
        let a_terms = build(spec.a_op())?;
        let b_terms = build(spec.b_op())?;
        let pair_terms = spec
            .pairs()
            .iter()
            .map(|(c, d)| Ok((build(c)?, build(d)?)))
            .collect::<Result<Vec<_>, PdpError>>()?;
        Ok(Self { spec: spec.clone(), schedule, a_terms, b_terms, pair_terms })
    }

    /// Propagate one trajectory from `theta0` (both components normalized;
    /// use θ₀ = (ψ₀, ψ₀) to unravel a pure initial state).
    pub fn simulate(
        &self,
        theta0: &PairState,
        rng: &mut RandomSource,
        timing: JumpTiming,
    ) -> Result<TrajectoryRecord<PairState>, PdpError> {
        run_trajectory(self, &self.schedule, theta0, rng, timing)
    }

    fn apply_terms_indexed(
        terms: &[TermTable],
        stage: usize,
        v: &[Complex64],
        out: &mut [Complex64],
    ) {
        for term in terms {
            term.op.apply_scaled_slice(term.table[stage], v, out);
        }
    }
}

impl Mode for DoubledPropagator {
    type State = PairState;

    fn flat_len(&self) -> usize {
        2 * self.spec.dim()
    }

    fn component_dim(&self) -> usize {
        self.spec.dim()
    }

    fn validate_initial(&self, state: &Self::State) -> Result<(), PdpError> {
        let deviation = (state.phi.norm() - 1.0).abs().max((state.psi.norm() - 1.0).abs());
        if deviation > 1e-9 {
            return Err(PdpError::NotNormalized { deviation });
        }
        Ok(())
    }

    fn flatten(&self, state: &Self::State) -> Vec<Complex64> {
        flatten_pair(state)
    }

    fn unflatten(&self, y: &[Complex64]) -> Self::State {
        unflatten_pair(y)
    }

    fn deriv_indexed(&self, stage: usize, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let dim = self.spec.dim();
        let (phi, psi) = y.split_at(dim);
        out.fill(Complex64::new(0.0, 0.0));
        {
            let (out_phi, out_psi) = out.split_at_mut(dim);
            Self::apply_terms_indexed(&self.a_terms, stage, phi, out_phi);
            Self::apply_terms_indexed(&self.b_terms, stage, psi, out_psi);
        }
        let norm_sq: f64 = y.iter().map(|a| a.norm_sqr()).sum();
        let mut intensity_sum = 0.0;
        for (c_terms, d_terms) in &self.pair_terms {
            scratch.fill(Complex64::new(0.0, 0.0));
            Self::apply_terms_indexed(c_terms, stage, phi, scratch);
            let mut j_norm_sq: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
            scratch.fill(Complex64::new(0.0, 0.0));
            Self::apply_terms_indexed(d_terms, stage, psi, scratch);
            j_norm_sq += scratch.iter().map(|a| a.norm_sqr()).sum::<f64>();
            intensity_sum += j_norm_sq / norm_sq;
        }
        let half = Complex64::new(0.5 * intensity_sum, 0.0);
        for (o, v) in out.iter_mut().zip(y.iter()) {
            *o += half * v;
        }
    }

    fn deriv_direct(&self, t: f64, y: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) -> Result<(), PdpError> {
        doubled_deriv_direct(&self.spec, t, y, out, scratch)
    }

    fn intensities_indexed(&self, stage: usize, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]) {
        let dim = self.spec.dim();
        let (phi, psi) = y.split_at(dim);
        let norm_sq: f64 = y.iter().map(|a| a.norm_sqr()).sum();
        for (i, (c_terms, d_terms)) in self.pair_terms.iter().enumerate() {
            scratch.fill(Complex64::new(0.0, 0.0));
            Self::apply_terms_indexed(c_terms, stage, phi, scratch);
            let mut j_norm_sq: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
            scratch.fill(Complex64::new(0.0, 0.0));
            Self::apply_terms_indexed(d_terms, stage, psi, scratch);
            j_norm_sq += scratch.iter().map(|a| a.norm_sqr()).sum::<f64>();
            out[i] = j_norm_sq / norm_sq;
        }
    }

    fn intensities_direct(&self, t: f64, y: &[Complex64], scratch: &mut [Complex64], out: &mut [f64]) -> Result<(), PdpError> {
        let dim = self.spec.dim();
        let norm_sq: f64 = y.iter().map(|a| a.norm_sqr()).sum();
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * dim];
        let _ = scratch;
        for i in 0..self.spec.pairs().len() {
            apply_pair_op(&self.spec, i, t, y, &mut buf)?;
            out[i] = buf.iter().map(|a| a.norm_sqr()).sum::<f64>() / norm_sq;
        }
        Ok(())
    }

    fn apply_jump(&self, t: f64, channel: usize, y: &mut Vec<Complex64>) -> Result<(), PdpError> {
        let mut target = vec![Complex64::new(0.0, 0.0); y.len()];
        apply_pair_op(&self.spec, channel, t, y, &mut target)?;
        let j_norm = target.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if j_norm <= 0.0 {
            return Err(PdpError::ZeroJumpTarget { channel, t });
        }
        let norm = y.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let factor = Complex64::new(norm / j_norm, 0.0);
        for v in &mut target {
            *v *= factor;
        }
        *y = target;
        Ok(())
    }

    fn renormalize(&self, _y: &mut [Complex64]) -> f64 {
        // The doubled scheme's norm dynamics are part of the estimator; no
        // rescaling between jumps.
        0.0
    }

    fn channel_count(&self) -> usize {
        self.spec.pairs().len()
    }
}

// ---------------------------------------------------------------------------
// The trajectory driver (shared between modes).
// ---------------------------------------------------------------------------

struct Scratch {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    stage: Vec<Complex64>,
    chan: Vec<Complex64>,
    lam: Vec<f64>,
}

impl Scratch {
    fn new(flat_len: usize, component_dim: usize, channels: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            k1: vec![z; flat_len],
            k2: vec![z; flat_len],
            k3: vec![z; flat_len],
            k4: vec![z; flat_len],
            stage: vec![z; flat_len],
            chan: vec![z; component_dim.max(1)],
            lam: vec![0.0; channels],
        }
    }
}

fn axpy(out: &mut [Complex64], a: f64, x: &[Complex64], y: &[Complex64]) {
    let a = Complex64::new(a, 0.0);
    for ((o, xv), yv) in out.iter_mut().zip(x.iter()).zip(y.iter()) {
        *o = *xv + a * *yv;
    }
}

/// One RK4 step of length h using tabulated coefficients at global substep j
/// (stages 2j, 2j+1, 2j+1, 2j+2).
fn rk4_indexed<M: Mode>(mode: &M, j: usize, h: f64, y: &mut [Complex64], s: &mut Scratch) {
    mode.deriv_indexed(2 * j, y, &mut s.k1, &mut s.chan);
    axpy(&mut s.stage, 0.5 * h, y, &s.k1);
    mode.deriv_indexed(2 * j + 1, &s.stage, &mut s.k2, &mut s.chan);
    axpy(&mut s.stage, 0.5 * h, y, &s.k2);
    mode.deriv_indexed(2 * j + 1, &s.stage, &mut s.k3, &mut s.chan);
    axpy(&mut s.stage, h, y, &s.k3);
    mode.deriv_indexed(2 * j + 2, &s.stage, &mut s.k4, &mut s.chan);
    let w = h / 6.0;
    for i in 0..y.len() {
        y[i] += Complex64::new(w, 0.0)
            * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// One RK4 step of length h with coefficients evaluated at arbitrary times
/// (partial steps around jumps).
fn rk4_direct<M: Mode>(
    mode: &M,
    t: f64,
    h: f64,
    y: &mut [Complex64],
    s: &mut Scratch,
) -> Result<(), PdpError> {
    mode.deriv_direct(t, y, &mut s.k1, &mut s.chan)?;
    axpy(&mut s.stage, 0.5 * h, y, &s.k1);
    mode.deriv_direct(t + 0.5 * h, &s.stage, &mut s.k2, &mut s.chan)?;
    axpy(&mut s.stage, 0.5 * h, y, &s.k2);
    mode.deriv_direct(t + 0.5 * h, &s.stage, &mut s.k3, &mut s.chan)?;
    axpy(&mut s.stage, h, y, &s.k3);
    mode.deriv_direct(t + h, &s.stage, &mut s.k4, &mut s.chan)?;
    let w = h / 6.0;
    for i in 0..y.len() {
        y[i] += Complex64::new(w, 0.0)
            * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
    Ok(())
}

/// Find δ ∈ (0, len] with Λ(δ) = target − cum, where Λ is the integral of
/// the linearly interpolated intensity: Λ(δ) = δλ₀ + δ²(λ₁−λ₀)/(2·len).
/// Bisection to absolute time tolerance `tol`.
fn locate_crossing(cum: f64, target: f64, lam0: f64, lam1: f64, len: f64, tol: f64) -> f64 {
    let need = target - cum;
    let integral = |d: f64| d * lam0 + d * d * (lam1 - lam0) / (2.0 * len);
    let (mut lo, mut hi) = (0.0, len);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if integral(mid) < need {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Select a channel by cumulative-intensity inversion with one uniform
/// variate; fixed channel ordering for deterministic replay.
fn select_channel(lam: &[f64], u: f64) -> usize {
    let total: f64 = lam.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    for (i, &l) in lam.iter().enumerate() {
        cum += l;
        if cum >= target {
            return i;
        }
    }
    lam.len() - 1
}

fn run_trajectory<M: Mode>(
    mode: &M,
    schedule: &Schedule,
    initial: &M::State,
    rng: &mut RandomSource,
    timing: JumpTiming,
) -> Result<TrajectoryRecord<M::State>, PdpError> {
    mode.validate_initial(initial)?;
    let n_channels = mode.channel_count();
    let mut s = Scratch::new(mode.flat_len(), mode.component_dim(), n_channels);
    let mut y = mode.flatten(initial);
    let mut y_start = y.clone();

    let mut states = Vec::with_capacity(schedule.grid.len());
    states.push(initial.clone());
    let mut jumps = Vec::new();
    let mut max_norm_drift = 0.0_f64;

    // Waiting-time machinery (intensity-inversion timing).
    let mut target = -rng.uniform().ln();
    let mut cum = 0.0;
    mode.intensities_indexed(0, &y, &mut s.chan, &mut s.lam);
    let mut lam_prev: f64 = s.lam.iter().sum();

    let intervals = schedule.grid.len() - 1;
    for w in 0..intervals {
        for sub in 0..schedule.substeps {
            let j = w * schedule.substeps + sub;
            let t0 = schedule.substep_start(j);
            let h = schedule.substep_len(j);
            match timing {
                JumpTiming::IntensityInversion => {
                    y_start.copy_from_slice(&y);
                    rk4_indexed(mode, j, h, &mut y, &mut s);
                    mode.intensities_indexed(2 * (j + 1), &y, &mut s.chan, &mut s.lam);
                    let lam_end: f64 = s.lam.iter().sum();

                    // Resolve zero or more jumps inside (t0, t0+h].
                    let mut seg_t = t0;
                    let mut seg_len = h;
                    let mut lam0 = lam_prev;
                    let mut lam1 = lam_end;
                    loop {
                        let increment = 0.5 * seg_len * (lam0 + lam1);
                        if cum + increment < target {
                            cum += increment;
                            break;
                        }
                        let delta =
                            locate_crossing(cum, target, lam0, lam1, seg_len, h * 1e-3);
                        let t_jump = seg_t + delta;
                        // State at the jump: re-flow the saved segment-start
                        // state by δ.
                        y.copy_from_slice(&y_start);
                        if delta > 0.0 {
                            rk4_direct(mode, seg_t, delta, &mut y, &mut s)?;
                        }
                        mode.intensities_direct(t_jump, &y, &mut s.chan, &mut s.lam)?;
                        let channel = select_channel(&s.lam, rng.uniform());
                        let weight = s.lam[channel];
                        mode.apply_jump(t_jump, channel, &mut y)?;
                        jumps.push(JumpEvent { time: t_jump, channel, channel_weight: weight });
                        target = -rng.uniform().ln();
                        cum = 0.0;
                        // Continue the flow over the remainder of the substep.
                        seg_len = seg_t + seg_len - t_jump;
                        seg_t = t_jump;
                        y_start.copy_from_slice(&y);
                        mode.intensities_direct(seg_t, &y, &mut s.chan, &mut s.lam)?;
                        lam0 = s.lam.iter().sum();
                        if seg_len > 0.0 {
                            rk4_direct(mode, seg_t, seg_len, &mut y, &mut s)?;
                        }
                        mode.intensities_direct(seg_t + seg_len, &y, &mut s.chan, &mut s.lam)?;
                        lam1 = s.lam.iter().sum();
                    }
                    lam_prev = lam1;
                }
                JumpTiming::BernoulliPerStep => {
                    mode.intensities_indexed(2 * j, &y, &mut s.chan, &mut s.lam);
                    let lam_total: f64 = s.lam.iter().sum();
                    if rng.uniform() < lam_total * h {
                        let channel = select_channel(&s.lam, rng.uniform());
                        let weight = s.lam[channel];
                        mode.apply_jump(t0, channel, &mut y)?;
                        jumps.push(JumpEvent { time: t0, channel, channel_weight: weight });
                    } else {
                        rk4_indexed(mode, j, h, &mut y, &mut s);
                    }
                }
            }
            max_norm_drift = max_norm_drift.max(mode.renormalize(&mut y));
        }
        states.push(mode.unflatten(&y));
    }

    Ok(TrajectoryRecord {
        times: schedule.grid.clone(),
        states,
        jumps,
        seed: rng.seed(),
        stream: rng.stream(),
        max_norm_drift,
    })
}

// ---------------------------------------------------------------------------
// One-shot entry points (build a propagator internally).
// ---------------------------------------------------------------------------

/// Propagate one standard-unraveling trajectory with intensity-inversion
/// jump timing. For many trajectories over one run, build a
/// [`StandardPropagator`] once and call its `simulate` instead.
pub fn simulate_standard(
    spec: &LindbladSpec,
    psi0: &StateVector,
    grid: &[f64],
    rng: &mut RandomSource,
    substeps: usize,
) -> Result<TrajectoryRecord<StateVector>, PdpError> {
    StandardPropagator::new(spec, grid, substeps)?.simulate(psi0, rng, JumpTiming::default())
}

/// Propagate one doubled-space trajectory with intensity-inversion jump
/// timing. For many trajectories over one run, build a
/// [`DoubledPropagator`] once and call its `simulate` instead.
pub fn simulate_doubled(
    spec: &GeneralSpec,
    theta0: &PairState,
    grid: &[f64],
    rng: &mut RandomSource,
    substeps: usize,
) -> Result<TrajectoryRecord<PairState>, PdpError> {
    DoubledPropagator::new(spec, grid, substeps)?.simulate(theta0, rng, JumpTiming::default())
}
