//! Time-local master equations and their deterministic reference solutions.
//!
//! Two specification layers describe the generator of the reduced dynamics:
//!
//! * [`LindbladSpec`] — Lindblad structure with time-dependent coefficients,
//!   dρ/dt = −i[H, ρ] + Σ_i γ_i(t)(L_iρL_i† − ½{L_i†L_i, ρ})
//!         − (i/2) Σ_i S_i(t)[L_i†L_i, ρ],
//!   where the rates γ_i(t) may go negative (the spec layer does not forbid
//!   it; the standard unraveling does);
//! * [`GeneralSpec`] — the most general linear time-local form,
//!   dρ/dt = A(t)ρ + ρB†(t) + Σ_i C_i(t)ρD_i†(t),
//!   which is what the doubled-space unraveling consumes.
//!
//! Two reductions connect them: [`lindblad_to_general`] (the symmetric
//! choice C_i = D_i = √γ_i·L_i, defined only for non-negative rates) and
//! [`split_rate_general`] (the asymmetric choice C_i = γ_i·L_i, D_i = L_i,
//! valid for rates of either sign). Both produce the identical right-hand
//! side wherever the first is defined.
//!
//! [`integrate`] is a fixed-step RK4 reference integrator for
//! [`GeneralSpec`]; [`exact_jc_density`] evaluates the closed exact solution
//! of the damped Jaynes–Cummings model on a grid; [`jc_lindblad_spec`] wires
//! the model coefficients of [`crate::jc`] into a ready-to-run spec at a
//! chosen perturbative order.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::jc::{self, JCParams, JcError, RateFunction};
use crate::linear::{c64, DensityMatrix, LinearError, Operator};

/// Errors from spec construction, coefficient evaluation and integration.
#[derive(Debug, Error)]
pub enum MasterError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Rate(#[from] JcError),
    /// The symmetric (standard-unraveling) reduction needs √γ_i(t).
    #[error("negative rate gamma({t}) = {rate}: the symmetric reduction needs sqrt(gamma) and is undefined there; use the split-rate (doubled-space) form instead")]
    NegativeRate { t: f64, rate: f64 },
    #[error("time grid must be strictly increasing and non-empty")]
    BadGrid,
    #[error("substeps must be >= 1")]
    BadSubsteps,
    #[error("initial ground amplitude must satisfy |c0| <= 1, got |c0| = {norm}")]
    BadInitialAmplitude { norm: f64 },
}

/// Real scalar coefficient of time; evaluation may fail (e.g. exact rates
/// below their amplitude floor).
pub type RealFn = Arc<dyn Fn(f64) -> Result<f64, MasterError> + Send + Sync>;

/// Complex scalar coefficient of time used inside [`TimeOperator`] terms.
pub(crate) type CoeffFn = Arc<dyn Fn(f64) -> Result<Complex64, MasterError> + Send + Sync>;

/// Wrap a constant as a [`RealFn`].
pub fn constant_fn(value: f64) -> RealFn {
    Arc::new(move |_| Ok(value))
}

/// Wrap a model coefficient from [`crate::jc`] as a [`RealFn`].
pub fn rate_fn(rate: RateFunction) -> RealFn {
    Arc::new(move |t| rate.try_value(t).map_err(MasterError::from))
}

/// An operator-valued function of time, stored as a linear combination
/// Σ_m f_m(t)·K_m of constant matrices with scalar coefficients.
///
/// Every generator in scope has this shape, and it keeps hot-path
/// application allocation-free: [`TimeOperator::accumulate_apply`] evaluates
/// the coefficients and applies the constant matrices directly onto slices.
#[derive(Clone)]
pub struct TimeOperator {
    dim: usize,
    terms: Vec<(CoeffFn, Operator)>,
}

impl TimeOperator {
    /// The zero operator function.
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// A constant operator.
    pub fn constant(op: Operator) -> Self {
        let one: CoeffFn = Arc::new(|_| Ok(Complex64::new(1.0, 0.0)));
        Self { dim: op.dim(), terms: vec![(one, op)] }
    }

    /// A single term f(t)·K with a complex, possibly failing coefficient.
    pub fn with_coefficient(
        f: impl Fn(f64) -> Result<Complex64, MasterError> + Send + Sync + 'static,
        op: Operator,
    ) -> Self {
        Self { dim: op.dim(), terms: vec![(Arc::new(f), op)] }
    }

    /// A single term f(t)·K with an infallible real coefficient.
    pub fn real_coefficient(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        op: Operator,
    ) -> Self {
        Self::with_coefficient(move |t| Ok(c64(f(t), 0.0)), op)
    }

    /// Append another term; all terms must share the dimension.
    pub fn push_term(
        &mut self,
        f: impl Fn(f64) -> Result<Complex64, MasterError> + Send + Sync + 'static,
        op: Operator,
    ) -> Result<(), MasterError> {
        if op.dim() != self.dim {
            return Err(LinearError::DimensionMismatch {
                context: "TimeOperator term",
                expected: self.dim,
                got: op.dim(),
            }
            .into());
        }
        self.terms.push((Arc::new(f), op));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The (coefficient, matrix) terms, for engines that pre-tabulate
    /// coefficients on a fixed stage schedule.
    pub(crate) fn terms(&self) -> &[(CoeffFn, Operator)] {
        &self.terms
    }

    /// out += (Σ_m f_m(t)·K_m)·v, allocation-free.
    pub fn accumulate_apply(
        &self,
        t: f64,
        v: &[Complex64],
        out: &mut [Complex64],
    ) -> Result<(), MasterError> {
        for (f, op) in &self.terms {
            op.apply_scaled_slice(f(t)?, v, out);
        }
        Ok(())
    }

    /// Materialize the matrix at time t.
    pub fn matrix(&self, t: f64) -> Result<Operator, MasterError> {
        let mut acc = Operator::zeros(self.dim);
        for (f, op) in &self.terms {
            acc = acc.add(&op.scaled(f(t)?))?;
        }
        Ok(acc)
    }
}

/// One decay channel of a Lindblad-form master equation: jump operator L,
/// decay rate γ(t) and Lamb-shift coefficient S(t).
#[derive(Clone)]
pub struct LindbladChannel {
    op: Operator,
    rate: RealFn,
    shift: RealFn,
}

impl LindbladChannel {
    pub fn new(op: Operator, rate: RealFn, shift: RealFn) -> Self {
        Self { op, rate, shift }
    }

    /// Channel with constant rate and no shift.
    pub fn with_constant_rate(op: Operator, gamma: f64) -> Self {
        Self::new(op, constant_fn(gamma), constant_fn(0.0))
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn rate(&self, t: f64) -> Result<f64, MasterError> {
        (self.rate)(t)
    }

    pub fn shift(&self, t: f64) -> Result<f64, MasterError> {
        (self.shift)(t)
    }
}

/// Master equation in Lindblad form with time-dependent coefficients.
#[derive(Clone)]
pub struct LindbladSpec {
    hamiltonian: Operator,
    channels: Vec<LindbladChannel>,
}

impl LindbladSpec {
    /// All operators must share one dimension.
    pub fn new(
        hamiltonian: Operator,
        channels: Vec<LindbladChannel>,
    ) -> Result<Self, MasterError> {
        let dim = hamiltonian.dim();
        for ch in &channels {
            if ch.op.dim() != dim {
                return Err(LinearError::DimensionMismatch {
                    context: "Lindblad channel operator",
                    expected: dim,
                    got: ch.op.dim(),
                }
                .into());
            }
        }
        Ok(Self { hamiltonian, channels })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[LindbladChannel] {
        &self.channels
    }
}

/// The most general linear time-local master equation,
/// dρ/dt = A(t)ρ + ρB†(t) + Σ_i C_i(t)ρD_i†(t).
#[derive(Clone)]
pub struct GeneralSpec {
    a_op: TimeOperator,
    b_op: TimeOperator,
    pairs: Vec<(TimeOperator, TimeOperator)>,
}

impl GeneralSpec {
    /// All operator functions must share one dimension.
    pub fn new(
        a_op: TimeOperator,
        b_op: TimeOperator,
        pairs: Vec<(TimeOperator, TimeOperator)>,
    ) -> Result<Self, MasterError> {
        let dim = a_op.dim();
        let check = |got: usize, context: &'static str| -> Result<(), MasterError> {
            if got != dim {
                return Err(LinearError::DimensionMismatch { context, expected: dim, got }.into());
            }
            Ok(())
        };
        check(b_op.dim(), "GeneralSpec B operator")?;
        for (c, d) in &pairs {
            check(c.dim(), "GeneralSpec C operator")?;
            check(d.dim(), "GeneralSpec D operator")?;
        }
        Ok(Self { a_op, b_op, pairs })
    }

    pub fn dim(&self) -> usize {
        self.a_op.dim()
    }

    pub fn a_op(&self) -> &TimeOperator {
        &self.a_op
    }

    pub fn b_op(&self) -> &TimeOperator {
        &self.b_op
    }

    pub fn pairs(&self) -> &[(TimeOperator, TimeOperator)] {
        &self.pairs
    }
}

/// The drift part shared by both reductions:
/// A(t) = B(t) = −iH − ½ Σ_k [γ_k(t) + i·S_k(t)] L_k†L_k.
fn drift_operator(spec: &LindbladSpec) -> TimeOperator {
    let mut a = TimeOperator::constant(spec.hamiltonian.scaled(c64(0.0, -1.0)));
    for ch in spec.channels() {
        let ltl = ch.op.adjoint().matmul(&ch.op).expect("dims checked at construction");
        let rate = ch.rate.clone();
        let shift = ch.shift.clone();
        a.push_term(
            move |t| Ok(c64(-0.5 * rate(t)?, -0.5 * shift(t)?)),
            ltl,
        )
        .expect("dims checked at construction");
    }
    a
}

/// Symmetric reduction to the general form: C_i(t) = D_i(t) = √γ_i(t)·L_i.
///
/// The square root makes the jump factors undefined at negative rates;
/// evaluating the resulting spec at such a time signals
/// [`MasterError::NegativeRate`]. Use [`split_rate_general`] for rate
/// functions that go negative.
pub fn lindblad_to_general(spec: &LindbladSpec) -> GeneralSpec {
    let a = drift_operator(spec);
    let pairs = spec
        .channels()
        .iter()
        .map(|ch| {
            let rate = ch.rate.clone();
            let sqrt_rate = move |t: f64| -> Result<Complex64, MasterError> {
                let g = rate(t)?;
                if g < 0.0 {
                    return Err(MasterError::NegativeRate { t, rate: g });
                }
                Ok(c64(g.sqrt(), 0.0))
            };
            let c = TimeOperator::with_coefficient(sqrt_rate, ch.op.clone());
            (c.clone(), c)
        })
        .collect();
    GeneralSpec { a_op: a.clone(), b_op: a, pairs }
}

/// Asymmetric reduction to the general form: C_i(t) = γ_i(t)·L_i and
/// D_i(t) = L_i. Defined for rates of either sign, and produces the same
/// right-hand side as [`lindblad_to_general`] wherever both are defined
/// (C ρ D† = γ·LρL† either way).
pub fn split_rate_general(spec: &LindbladSpec) -> GeneralSpec {
    let a = drift_operator(spec);
    let pairs = spec
        .channels()
        .iter()
        .map(|ch| {
            let rate = ch.rate.clone();
            let c = TimeOperator::with_coefficient(
                move |t| Ok(c64(rate(t)?, 0.0)),
                ch.op.clone(),
            );
            let d = TimeOperator::constant(ch.op.clone());
            (c, d)
        })
        .collect();
    GeneralSpec { a_op: a.clone(), b_op: a, pairs }
}

/// Right-hand side A(t)ρ + ρB†(t) + Σ_i C_i(t)ρD_i†(t).
pub fn general_rhs(
    spec: &GeneralSpec,
    t: f64,
    rho: &DensityMatrix,
) -> Result<DensityMatrix, MasterError> {
    let dim = spec.dim();
    if rho.dim() != dim {
        return Err(LinearError::DimensionMismatch {
            context: "general_rhs density matrix",
            expected: dim,
            got: rho.dim(),
        }
        .into());
    }
    let a = spec.a_op.matrix(t)?;
    let b = spec.b_op.matrix(t)?;
    let mut out = DensityMatrix::zeros(dim);
    for j in 0..dim {
        for k in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..dim {
                acc += a.entry(j, m) * rho.entry(m, k) + rho.entry(j, m) * b.entry(k, m).conj();
            }
            out.set_entry(j, k, acc);
        }
    }
    for (c_op, d_op) in spec.pairs() {
        let c = c_op.matrix(t)?;
        let d = d_op.matrix(t)?;
        // out_jk += Σ_{m,n} C_jm ρ_mn conj(D_kn)
        for j in 0..dim {
            for k in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..dim {
                    let c_jm = c.entry(j, m);
                    if c_jm == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for n in 0..dim {
                        acc += c_jm * rho.entry(m, n) * d.entry(k, n).conj();
                    }
                }
                out.set_entry(j, k, out.entry(j, k) + acc);
            }
        }
    }
    Ok(out)
}

/// A density matrix sampled on a time grid.
#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl DensityTrajectory {
    /// Real part of a diagonal entry along the trajectory.
    pub fn population(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|rho| rho.entry(index, index).re).collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<(), MasterError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MasterError::BadGrid);
    }
    Ok(())
}

/// Fixed-step classical RK4 integration of the general master equation,
/// recording the state at every grid point. Each grid interval is divided
/// into `substeps` equal steps; coefficient functions are evaluated at the
/// stage times t, t+h/2 and t+h.
pub fn integrate(
    spec: &GeneralSpec,
    rho0: &DensityMatrix,
    grid: &[f64],
    substeps: usize,
) -> Result<DensityTrajectory, MasterError> {
    check_grid(grid)?;
    if substeps == 0 {
        return Err(MasterError::BadSubsteps);
    }
    let mut states = Vec::with_capacity(grid.len());
    let mut rho = rho0.clone();
    states.push(rho.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            let k1 = general_rhs(spec, t, &rho)?;
            let mut y2 = rho.clone();
            y2.add_scaled(c64(0.5 * h, 0.0), &k1)?;
            let k2 = general_rhs(spec, t + 0.5 * h, &y2)?;
            let mut y3 = rho.clone();
            y3.add_scaled(c64(0.5 * h, 0.0), &k2)?;
            let k3 = general_rhs(spec, t + 0.5 * h, &y3)?;
            let mut y4 = rho.clone();
            y4.add_scaled(c64(h, 0.0), &k3)?;
            let k4 = general_rhs(spec, t + h, &y4)?;
            let sixth = h / 6.0;
            rho.add_scaled(c64(sixth, 0.0), &k1)?;
            rho.add_scaled(c64(2.0 * sixth, 0.0), &k2)?;
            rho.add_scaled(c64(2.0 * sixth, 0.0), &k3)?;
            rho.add_scaled(c64(sixth, 0.0), &k4)?;
        }
        states.push(rho.clone());
    }
    Ok(DensityTrajectory { times: grid.to_vec(), states })
}

/// Exact density matrix of the damped Jaynes–Cummings model on a grid, for
/// the one-excitation family of initial states c₁(0)|1⟩ + c₀|0⟩ with
/// c₁(0) = √(1−|c₀|²) chosen real non-negative:
///
///   ρ₁₁(t) = |c₁(t)|², ρ₁₀(t) = c₁(t)c₀*, ρ₀₀(t) = 1 − |c₁(t)|²,
///
/// with c₁(t) the exact amplitude (ground-state population includes the
/// emitted-photon sector, keeping the trace exactly 1).
pub fn exact_jc_density(
    p: JCParams,
    c0: Complex64,
    grid: &[f64],
) -> Result<DensityTrajectory, MasterError> {
    check_grid(grid)?;
    let c0_sq = c0.norm_sqr();
    if c0_sq > 1.0 + 1e-12 {
        return Err(MasterError::BadInitialAmplitude { norm: c0.norm() });
    }
    let c1_0 = (1.0 - c0_sq).max(0.0).sqrt();
    let amp = jc::exact_amplitude(p);
    let states = grid
        .iter()
        .map(|&t| {
            let c1 = c1_0 * amp.c1(t);
            let pop = c1.norm_sqr();
            let coh = c1 * c0.conj();
            let mut rho = DensityMatrix::zeros(2);
            rho.set_entry(0, 0, c64(pop, 0.0));
            rho.set_entry(0, 1, coh);
            rho.set_entry(1, 0, coh.conj());
            rho.set_entry(1, 1, c64(1.0 - pop, 0.0));
            rho
        })
        .collect();
    Ok(DensityTrajectory { times: grid.to_vec(), states })
}

/// Perturbative order (or exactness) of the model coefficients wired into a
/// simulation spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TclOrder {
    /// Second-order (Born) coefficients γ⁽²⁾, S⁽²⁾.
    Tcl2,
    /// Fourth-order coefficients γ⁽⁴⁾, S⁽⁴⁾.
    Tcl4,
    /// Exact rates from the amplitude solution.
    Exact,
}

/// Lindblad-form spec of the damped Jaynes–Cummings model at a chosen order:
/// H = 0 (interaction picture), one σ⁻ channel with rate γ(t) and shift
/// S(t) of that order.
///
/// `include_shift` keeps or drops the Lamb-shift coefficient: with it the
/// drift matches the full time-convolutionless generator; without it the
/// drift keeps only the decay part (the form the doubled-space operators are
/// usually quoted in). The shift only rotates coherences — populations are
/// identical either way.
///
/// `t_max` bounds the window over which the fourth-order shift is sampled
/// (S⁽⁴⁾ has no closed form; see [`jc::s4_sampled`]); it is unused at the
/// other orders, and evaluations beyond it clamp.
pub fn jc_lindblad_spec(
    p: JCParams,
    order: TclOrder,
    include_shift: bool,
    t_max: f64,
) -> LindbladSpec {
    let zero = constant_fn(0.0);
    let (rate, shift): (RealFn, RealFn) = match order {
        TclOrder::Tcl2 => (
            rate_fn(jc::gamma2(p)),
            if include_shift { rate_fn(jc::s2(p)) } else { zero },
        ),
        TclOrder::Tcl4 => (
            rate_fn(jc::gamma4_detuned(p)),
            if include_shift { rate_fn(jc::s4_sampled(p, t_max)) } else { zero },
        ),
        TclOrder::Exact => {
            let (gamma, s) = jc::exact_rates(p);
            (rate_fn(gamma), if include_shift { rate_fn(s) } else { zero })
        }
    };
    let channel = LindbladChannel::new(crate::linear::sigma_minus(), rate, shift);
    LindbladSpec::new(Operator::zeros(2), vec![channel]).expect("fixed dims")
}

/// [`jc_lindblad_spec`] pushed through the sign-safe reduction — the spec
/// the doubled-space unraveling runs on.
pub fn jc_general_spec(
    p: JCParams,
    order: TclOrder,
    include_shift: bool,
    t_max: f64,
) -> GeneralSpec {
    split_rate_general(&jc_lindblad_spec(p, order, include_shift, t_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{excited, ground, sigma_minus, sigma_plus};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(t_max: f64, points: usize) -> Vec<f64> {
        (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
    }

    fn excited_density() -> DensityMatrix {
        DensityMatrix::pure(&excited())
    }

    fn constant_decay_spec(gamma: f64) -> LindbladSpec {
        LindbladSpec::new(
            Operator::zeros(2),
            vec![LindbladChannel::with_constant_rate(sigma_minus(), gamma)],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_reduction_produces_expected_operators() {
        let spec = constant_decay_spec(0.7);
        let gen = lindblad_to_general(&spec);
        // A = −(γ/2)σ⁺σ⁻ (excited projector): diag(−0.35, 0).
        let a = gen.a_op().matrix(1.3).unwrap();
        assert_abs_diff_eq!(a.entry(0, 0).re, -0.35, epsilon = 1e-15);
        assert_abs_diff_eq!(a.entry(0, 0).im, 0.0);
        assert_abs_diff_eq!(a.entry(1, 1).re, 0.0);
        // C = D = √γ σ⁻.
        let (c, d) = &gen.pairs()[0];
        let cm = c.matrix(0.0).unwrap();
        assert_abs_diff_eq!(cm.entry(1, 0).re, 0.7_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            cm.max_abs_diff(&d.matrix(0.0).unwrap()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_rate_is_pure_unitary() {
        let h = crate::linear::excited_projector();
        let spec = LindbladSpec::new(
            h.clone(),
            vec![LindbladChannel::with_constant_rate(sigma_minus(), 0.0)],
        )
        .unwrap();
        let gen = lindblad_to_general(&spec);
        let a = gen.a_op().matrix(0.5).unwrap();
        assert_abs_diff_eq!(
            a.max_abs_diff(&h.scaled(c64(0.0, -1.0))).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let (c, _) = &gen.pairs()[0];
        assert_abs_diff_eq!(c.matrix(0.5).unwrap().max_abs_diff(&Operator::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_reduction_rejects_negative_rates_at_evaluation() {
        let spec = LindbladSpec::new(
            Operator::zeros(2),
            vec![LindbladChannel::new(
                sigma_minus(),
                Arc::new(|t| Ok(1.0 - t)), // negative for t > 1
                constant_fn(0.0),
            )],
        )
        .unwrap();
        let gen = lindblad_to_general(&spec);
        assert!(gen.pairs()[0].0.matrix(0.5).is_ok());
        let err = gen.pairs()[0].0.matrix(2.0);
        assert!(matches!(err, Err(MasterError::NegativeRate { .. })));
        // The split-rate reduction handles the same spec at the same time.
        let split = split_rate_general(&spec);
        let c = split.pairs()[0].0.matrix(2.0).unwrap();
        assert_abs_diff_eq!(c.entry(1, 0).re, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn reductions_share_one_rhs_where_both_defined() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec = jc_lindblad_spec(p, TclOrder::Tcl4, true, 5.0);
        let sym = lindblad_to_general(&spec);
        let split = split_rate_general(&spec);
        let mut rho = DensityMatrix::zeros(2);
        rho.set_entry(0, 0, c64(0.6, 0.0));
        rho.set_entry(0, 1, c64(0.2, -0.1));
        rho.set_entry(1, 0, c64(0.2, 0.1));
        rho.set_entry(1, 1, c64(0.4, 0.0));
        for t in [0.0, 0.3, 1.7] {
            let r1 = general_rhs(&sym, t, &rho).unwrap();
            let r2 = general_rhs(&split, t, &rho).unwrap();
            assert!(r1.max_abs_diff(&r2).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn rhs_trivial_cases() {
        // A = B = 0, no pairs → zero.
        let gen = GeneralSpec::new(TimeOperator::zero(2), TimeOperator::zero(2), vec![]).unwrap();
        let rho = excited_density();
        assert_abs_diff_eq!(general_rhs(&gen, 0.0, &rho).unwrap().max_abs(), 0.0);

        // Constant decay γ = g from the excited state: dρ₁₁/dt = −g, dρ₀₀/dt = +g.
        let g = 0.83;
        let gen = lindblad_to_general(&constant_decay_spec(g));
        let rhs = general_rhs(&gen, 0.0, &excited_density()).unwrap();
        assert_abs_diff_eq!(rhs.entry(0, 0).re, -g, epsilon = 1e-15);
        assert_abs_diff_eq!(rhs.entry(1, 1).re, g, epsilon = 1e-15);

        // Ground state is stationary.
        let ground_rho = DensityMatrix::pure(&ground());
        assert_abs_diff_eq!(general_rhs(&gen, 0.0, &ground_rho).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn integrator_reproduces_exponential_decay() {
        let gamma = 1.0;
        let gen = lindblad_to_general(&constant_decay_spec(gamma));
        let grid = grid(1.0, 11);
        // substeps chosen so h = 1e-3/γ.
        let traj = integrate(&gen, &excited_density(), &grid, 100).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(rho.entry(0, 0).re, (-gamma * t).exp(), epsilon = 1e-8);
            assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn integrator_converges_at_fourth_order() {
        // Halving the step should shrink the error against the exact JC
        // solution by ≈16×.
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let gen = jc_general_spec(p, TclOrder::Exact, true, 3.0);
        let grid = grid(1.0, 6);
        let exact = exact_jc_density(p, c64(0.0, 0.0), &grid).unwrap();
        let max_err = |substeps: usize| -> f64 {
            let traj = integrate(&gen, &excited_density(), &grid, substeps).unwrap();
            traj.states
                .iter()
                .zip(&exact.states)
                .map(|(a, b)| a.max_abs_diff(b).unwrap())
                .fold(0.0, f64::max)
        };
        let coarse = max_err(4);
        let fine = max_err(8);
        let ratio = coarse / fine;
        assert!(
            (8.0..40.0).contains(&ratio),
            "expected ≈16× error reduction per halving, got {ratio:.2} (coarse {coarse:.3e}, fine {fine:.3e})"
        );
    }

    #[test]
    fn route_equivalence_on_positive_rate_window() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let spec = jc_lindblad_spec(p, TclOrder::Tcl4, true, 5.0);
        let grid = grid(5.0, 51);
        let a = integrate(&lindblad_to_general(&spec), &excited_density(), &grid, 40).unwrap();
        let b = integrate(&split_rate_general(&spec), &excited_density(), &grid, 40).unwrap();
        for (ra, rb) in a.states.iter().zip(&b.states) {
            assert!(ra.max_abs_diff(rb).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn exact_density_matches_ode_with_exact_rates() {
        // Two independent exact routes: the amplitude formula vs. RK4 on the
        // Lindblad spec carrying the exact rates.
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let grid = grid(3.0, 31);
        let by_amplitude = exact_jc_density(p, c64(0.0, 0.0), &grid).unwrap();
        let gen = jc_general_spec(p, TclOrder::Exact, true, 3.0);
        let by_ode = integrate(&gen, &excited_density(), &grid, 60).unwrap();
        for (ra, rb) in by_amplitude.states.iter().zip(&by_ode.states) {
            assert!(ra.max_abs_diff(rb).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn exact_density_trivial_initials() {
        let p = JCParams::new(65.0, 19.5, 156.0).unwrap();
        let grid = grid(0.5, 6);
        // Fully excited at t = 0.
        let traj = exact_jc_density(p, c64(0.0, 0.0), &grid).unwrap();
        assert_abs_diff_eq!(traj.states[0].entry(0, 0).re, 1.0, epsilon = 1e-15);
        // Ground state is stationary.
        let traj = exact_jc_density(p, c64(1.0, 0.0), &grid).unwrap();
        for rho in &traj.states {
            assert_abs_diff_eq!(rho.entry(1, 1).re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(rho.entry(0, 0).re, 0.0, epsilon = 1e-15);
        }
        // |c0| > 1 is rejected.
        assert!(exact_jc_density(p, c64(1.2, 0.0), &grid).is_err());
    }

    #[test]
    fn tcl4_population_beats_tcl2() {
        let p = JCParams::resonant(1.0, 5.0).unwrap();
        let grid = grid(3.0, 61);
        let exact = exact_jc_density(p, c64(0.0, 0.0), &grid).unwrap();
        let deviation = |order: TclOrder| -> f64 {
            let gen = jc_general_spec(p, order, true, 3.0);
            let traj = integrate(&gen, &excited_density(), &grid, 40).unwrap();
            traj.population(0)
                .iter()
                .zip(exact.population(0))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let d2 = deviation(TclOrder::Tcl2);
        let d4 = deviation(TclOrder::Tcl4);
        assert!(d4 < d2, "fourth order ({d4:.3e}) must beat second order ({d2:.3e})");
    }

    #[test]
    fn shift_switch_leaves_populations_unchanged() {
        let p = JCParams::new(65.0, 19.5, 156.0).unwrap();
        let grid = grid(0.5, 26);
        let with = integrate(
            &jc_general_spec(p, TclOrder::Tcl4, true, 0.5),
            &excited_density(),
            &grid,
            60,
        )
        .unwrap();
        let without = integrate(
            &jc_general_spec(p, TclOrder::Tcl4, false, 0.5),
            &excited_density(),
            &grid,
            60,
        )
        .unwrap();
        for (ra, rb) in with.states.iter().zip(&without.states) {
            assert_abs_diff_eq!(
                ra.entry(0, 0).re,
                rb.entry(0, 0).re,
                epsilon = 1e-12
            );
        }
    }

    proptest! {
        /// Both reductions conserve trace and Hermiticity of the right-hand
        /// side for arbitrary Hermitian ρ and both signs of the rate.
        #[test]
        fn rhs_preserves_trace_and_hermiticity(
            a in -1.0..1.0f64,
            re in -1.0..1.0f64,
            im in -1.0..1.0f64,
            rate in -2.0..2.0f64,
            shift in -1.0..1.0f64,
            t in 0.0..3.0f64,
        ) {
            let mut rho = DensityMatrix::zeros(2);
            rho.set_entry(0, 0, c64(a, 0.0));
            rho.set_entry(0, 1, c64(re, im));
            rho.set_entry(1, 0, c64(re, -im));
            rho.set_entry(1, 1, c64(1.0 - a, 0.0));
            let spec = LindbladSpec::new(
                Operator::zeros(2),
                vec![
                    LindbladChannel::new(sigma_minus(), constant_fn(rate), constant_fn(shift)),
                    LindbladChannel::with_constant_rate(sigma_plus(), 0.4),
                ],
            ).unwrap();
            let gen = split_rate_general(&spec);
            let rhs = general_rhs(&gen, t, &rho).unwrap();
            prop_assert!(rhs.trace().norm() <= 1e-12);
            prop_assert!(rhs.max_abs_diff(&rhs.hermitized()).unwrap() <= 1e-12);
        }
    }
}
