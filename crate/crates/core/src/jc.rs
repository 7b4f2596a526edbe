//! Time-dependent coefficients of the damped Jaynes–Cummings model.
//!
//! A two-level atom couples to a single damped cavity mode; tracing out the
//! mode leaves a time-local master equation for the atom whose decay rate
//! γ(t) and Lamb-shift coefficient S(t) depend on three parameters: the
//! Markovian decay rate γ₀, the bath memory width λ (inverse correlation
//! time) and the detuning Δ between atom and cavity.
//!
//! The bath correlation function is exponential,
//! f(τ) = ½ γ₀λ e^{−λτ} e^{iΔτ} = ½ (Φ(τ) + iΨ(τ)), and this module provides
//!
//! * the memory kernels Φ, Ψ ([`kernels`]),
//! * the second-order (Born) coefficients γ⁽²⁾, S⁽²⁾ in closed form
//!   ([`gamma2`], [`s2`]),
//! * the fourth-order coefficients: closed forms for γ⁽⁴⁾ on and off
//!   resonance ([`gamma4_resonant`], [`gamma4_detuned`]) and quadrature
//!   evaluation of the underlying ordered triple integrals for both γ⁽⁴⁾ and
//!   S⁽⁴⁾ ([`gamma4_quadrature`], [`s4`]) — the quadrature routes serve as
//!   independent oracles for the closed forms,
//! * the exact coefficients from the excited-amplitude integro-differential
//!   equation, solved as a local ODE system ([`exact_amplitude`],
//!   [`exact_rates`]), together with resonant closed-form references
//!   ([`resonant_amplitude_closed`], [`resonant_rate_closed`]).
//!
//! Everything here is a pure function of (parameters, time); the returned
//! [`RateFunction`] handles are `Send + Sync` and freely callable from
//! concurrent workers.

use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use thiserror::Error;

use crate::quad::{gl8, integrate_panels, panel_count};

/// Errors from parameter validation and coefficient evaluation.
#[derive(Debug, Error)]
pub enum JcError {
    /// γ₀ or λ outside the open positive half-line.
    #[error("model parameters must satisfy gamma0 > 0 and lambda > 0 (got gamma0 = {gamma0}, lambda = {lambda})")]
    InvalidParams { gamma0: f64, lambda: f64 },
    /// A resonance-only formula was requested at nonzero detuning.
    #[error("formula is valid on resonance only (delta = 0), got delta = {delta}")]
    NotResonant { delta: f64 },
    /// The exact rates lose meaning once the excited amplitude has decayed
    /// below the floor: γ(t) = −2 Re ċ₁/c₁ divides by c₁.
    #[error("excited amplitude |c1({t})| = {magnitude:.3e} fell below the floor {floor:.3e}; exact rates are singular there")]
    AmplitudeFloor { t: f64, magnitude: f64, floor: f64 },
}

/// Parameters of the damped Jaynes–Cummings model.
///
/// `gamma0` is the Markovian (flat-spectrum) decay rate, `lambda` the
/// spectral width of the Lorentzian coupling (inverse bath memory time) and
/// `delta` the atom–cavity detuning. `gamma0` and `lambda` must be positive;
/// `delta` may take any sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JCParams {
    pub gamma0: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl JCParams {
    /// Validated constructor.
    pub fn new(gamma0: f64, lambda: f64, delta: f64) -> Result<Self, JcError> {
        if !(gamma0 > 0.0) || !(lambda > 0.0) || !delta.is_finite() {
            return Err(JcError::InvalidParams { gamma0, lambda });
        }
        Ok(Self { gamma0, lambda, delta })
    }

    /// Resonant parameter set (Δ = 0).
    pub fn resonant(gamma0: f64, lambda: f64) -> Result<Self, JcError> {
        Self::new(gamma0, lambda, 0.0)
    }

    /// True when the atom is exactly on resonance with the mode.
    pub fn is_resonant(&self) -> bool {
        self.delta == 0.0
    }

    /// Kernel amplitude κ = γ₀λ = Φ(0).
    fn kappa(&self) -> f64 {
        self.gamma0 * self.lambda
    }

    /// Δ/λ, the dimensionless detuning that organizes the closed forms.
    fn detuning_ratio(&self) -> f64 {
        self.delta / self.lambda
    }
}

/// The real memory kernels Φ(τ) = γ₀λ e^{−λτ} cos Δτ and
/// Ψ(τ) = γ₀λ e^{−λτ} sin Δτ (real and imaginary part of twice the bath
/// correlation function).
#[derive(Debug, Clone, Copy)]
pub struct MemoryKernel {
    p: JCParams,
}

impl MemoryKernel {
    /// Even (cosine) kernel Φ(τ); Φ(0) = γ₀λ.
    pub fn phi(&self, tau: f64) -> f64 {
        self.p.kappa() * (-self.p.lambda * tau).exp() * (self.p.delta * tau).cos()
    }

    /// Odd (sine) kernel Ψ(τ); vanishes identically on resonance.
    pub fn psi(&self, tau: f64) -> f64 {
        if self.p.is_resonant() {
            return 0.0;
        }
        self.p.kappa() * (-self.p.lambda * tau).exp() * (self.p.delta * tau).sin()
    }
}

/// Kernel pair for a parameter set.
pub fn kernels(p: JCParams) -> MemoryKernel {
    MemoryKernel { p }
}

/// Which coefficient a [`RateFunction`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// Second-order decay rate γ⁽²⁾(t).
    Gamma2,
    /// Fourth-order decay rate γ⁽⁴⁾(t).
    Gamma4,
    /// Second-order Lamb-shift coefficient S⁽²⁾(t).
    S2,
    /// Fourth-order Lamb-shift coefficient S⁽⁴⁾(t).
    S4,
    /// Exact decay rate γ(t) = −2 Re ċ₁/c₁.
    GammaExact,
    /// Exact shift S(t) = −2 Im ċ₁/c₁.
    SExact,
}

type RateClosure = dyn Fn(f64) -> Result<f64, JcError> + Send + Sync;

/// A real coefficient of the time-local generator, tagged with what it is.
///
/// Closed-form and sampled coefficients never fail; the exact rates return
/// [`JcError::AmplitudeFloor`] once |c₁| drops below their floor, which
/// [`RateFunction::value`] turns into a panic (use [`RateFunction::try_value`]
/// where the floor is reachable).
#[derive(Clone)]
pub struct RateFunction {
    kind: RateKind,
    f: Arc<RateClosure>,
}

impl std::fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateFunction").field("kind", &self.kind).finish()
    }
}

impl RateFunction {
    fn infallible(kind: RateKind, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { kind, f: Arc::new(move |t| Ok(f(t))) }
    }

    fn fallible(
        kind: RateKind,
        f: impl Fn(f64) -> Result<f64, JcError> + Send + Sync + 'static,
    ) -> Self {
        Self { kind, f: Arc::new(f) }
    }

    /// Which coefficient this evaluates.
    pub fn kind(&self) -> RateKind {
        self.kind
    }

    /// Evaluate, propagating evaluation errors (only the exact rates have any).
    pub fn try_value(&self, t: f64) -> Result<f64, JcError> {
        (self.f)(t)
    }

    /// Evaluate, panicking on evaluation errors. Infallible for every kind
    /// except `GammaExact`/`SExact`, whose callers are expected to have
    /// validated their time window (see [`exact_rates`]).
    pub fn value(&self, t: f64) -> f64 {
        match (self.f)(t) {
            Ok(v) => v,
            Err(e) => panic!("rate evaluation failed at t = {t}: {e}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Second order (Born approximation).
// ---------------------------------------------------------------------------

/// Long-time limit of γ⁽²⁾: γ₀λ²/(λ² + Δ²).
pub fn gamma2_limit(p: JCParams) -> f64 {
    p.gamma0 * p.lambda * p.lambda / (p.lambda * p.lambda + p.delta * p.delta)
}

/// Long-time limit of S⁽²⁾: γ₀λΔ/(λ² + Δ²) = (Δ/λ)·γ⁽²⁾(∞).
pub fn s2_limit(p: JCParams) -> f64 {
    p.detuning_ratio() * gamma2_limit(p)
}

/// Second-order decay rate, γ⁽²⁾(t) = ∫₀ᵗ Φ(τ) dτ, in closed form:
/// γ_M · [1 − e^{−λt}(cos Δt − (Δ/λ) sin Δt)] with γ_M = γ₀λ²/(λ²+Δ²).
pub fn gamma2(p: JCParams) -> RateFunction {
    let gm = gamma2_limit(p);
    let r = p.detuning_ratio();
    RateFunction::infallible(RateKind::Gamma2, move |t| {
        let (s, c) = (p.delta * t).sin_cos();
        gm * (1.0 - (-p.lambda * t).exp() * (c - r * s))
    })
}

/// Second-order shift coefficient, S⁽²⁾(t) = ∫₀ᵗ Ψ(τ) dτ, in closed form:
/// γ_M · [Δ/λ − e^{−λt}(sin Δt + (Δ/λ) cos Δt)]. Identically zero on
/// resonance.
pub fn s2(p: JCParams) -> RateFunction {
    if p.is_resonant() {
        return RateFunction::infallible(RateKind::S2, |_| 0.0);
    }
    let gm = gamma2_limit(p);
    let r = p.detuning_ratio();
    RateFunction::infallible(RateKind::S2, move |t| {
        let (s, c) = (p.delta * t).sin_cos();
        gm * (r - (-p.lambda * t).exp() * (s + r * c))
    })
}

// ---------------------------------------------------------------------------
// Fourth order: closed forms.
// ---------------------------------------------------------------------------

/// Fourth-order decay rate on resonance, in the overflow-safe form
/// γ₀(1 − e^{−λt}) + (γ₀²/λ)[(1 − e^{−2λt})/2 − λt·e^{−λt}].
///
/// (The textbook way of writing the correction, sinh(λt)e^{−λt}, overflows
/// for λt ≳ 710 even though the product is bounded by ½.)
///
/// Errors with [`JcError::NotResonant`] off resonance; use
/// [`gamma4_detuned`], which is valid for every Δ including 0.
pub fn gamma4_resonant(p: JCParams) -> Result<RateFunction, JcError> {
    if !p.is_resonant() {
        return Err(JcError::NotResonant { delta: p.delta });
    }
    let g0 = p.gamma0;
    let lam = p.lambda;
    Ok(RateFunction::infallible(RateKind::Gamma4, move |t| {
        let e1 = (-lam * t).exp();
        let second = g0 * (1.0 - e1);
        let fourth = (g0 * g0 / lam) * (0.5 * (1.0 - e1 * e1) - lam * t * e1);
        second + fourth
    }))
}

/// Fourth-order decay rate at arbitrary detuning (closed form).
///
/// γ⁽⁴⁾(t) = γ⁽²⁾(t) + q·B(t) with q = γ₀²λ⁵ / [2(λ²+Δ²)³], r = Δ/λ and
///
/// B(t) = (1−3r²)(1 − e^{−2λt} cos 2Δt)
///      + e^{−λt} [ −2(1−r⁴)·λt·cos Δt + 4(1+r²)·Δt·sin Δt ]
///      + r(3−r²)·e^{−2λt} sin 2Δt.
///
/// Reduces to [`gamma4_resonant`] at Δ = 0 and stays finite for all t ≥ 0
/// (every term carries a decaying exponential or is bounded).
pub fn gamma4_detuned(p: JCParams) -> RateFunction {
    let second = gamma2(p);
    let r = p.detuning_ratio();
    let denom = p.lambda * p.lambda + p.delta * p.delta;
    let q = p.gamma0 * p.gamma0 * p.lambda.powi(5) / (2.0 * denom * denom * denom);
    let r2 = r * r;
    RateFunction::infallible(RateKind::Gamma4, move |t| {
        let e1 = (-p.lambda * t).exp();
        let e2 = e1 * e1;
        let (s1, c1) = (p.delta * t).sin_cos();
        let (s2t, c2t) = (2.0 * p.delta * t).sin_cos();
        let brace = (1.0 - 3.0 * r2) * (1.0 - e2 * c2t)
            + e1 * (-2.0 * (1.0 - r2 * r2) * p.lambda * t * c1
                + 4.0 * (1.0 + r2) * p.delta * t * s1)
            + r * (3.0 - r2) * e2 * s2t;
        second.value(t) + q * brace
    })
}

/// Long-time limit of γ⁽⁴⁾: γ⁽²⁾(∞) + q·(1 − 3(Δ/λ)²).
///
/// Negative-definite asymptotic rates (possible for |Δ| > λ·√ ̄(…)) never occur
/// in the regimes treated here, but the limit itself is valid for all Δ.
pub fn gamma4_limit(p: JCParams) -> f64 {
    let r = p.detuning_ratio();
    let denom = p.lambda * p.lambda + p.delta * p.delta;
    let q = p.gamma0 * p.gamma0 * p.lambda.powi(5) / (2.0 * denom * denom * denom);
    gamma2_limit(p) + q * (1.0 - 3.0 * r * r)
}

// ---------------------------------------------------------------------------
// Fourth order: quadrature oracle for the ordered triple integrals.
//
// Both fourth-order coefficients are ½ × an ordered triple integral over
// 0 ≤ t₃ ≤ t₂ ≤ t₁ ≤ t of sums of kernel products with arguments
// (t−t₂, t₁−t₃) and (t−t₃, t₁−t₂):
//
//   γ⁽⁴⁾ − γ⁽²⁾ = ½ ∭ [Φ(t−t₂)Φ(t₁−t₃) − Ψ(t−t₂)Ψ(t₁−t₃)
//                      + Φ(t−t₃)Φ(t₁−t₂) − Ψ(t−t₃)Ψ(t₁−t₂)]
//   S⁽⁴⁾ − S⁽²⁾ = ½ ∭ [Φ(t−t₂)Ψ(t₁−t₃) + Ψ(t−t₂)Φ(t₁−t₃)
//                      + Φ(t−t₃)Ψ(t₁−t₂) + Ψ(t−t₃)Φ(t₁−t₂)]
//
// (both are the real/imaginary parts of 2∭ f(t−t₂)f(t₁−t₃) + f(t−t₃)f(t₁−t₂)
// with f = ½(Φ+iΨ), which follows from expanding the exact amplitude
// equation ċ₁ = −∫₀ᵗ f(t−s) c₁(s) ds to fourth order in the coupling).
//
// A literal three-deep Gauss–Legendre nest costs O(N³) kernel evaluations;
// the evaluator below gets the same panel-by-panel Gauss–Legendre result in
// O(N) by factoring each kernel with the trig addition theorem,
//
//   Φ(a−u) = e^{−λa}[cos Δa · E_c(u) + sin Δa · E_s(u)],
//   Ψ(a−u) = e^{−λa}[sin Δa · E_c(u) − cos Δa · E_s(u)],
//   E_c(u) = e^{λu} cos Δu,  E_s(u) = e^{λu} sin Δu,
//
// so every nested integral becomes a cumulative integral of E_c, E_s and
// their weighted products. Three prefix "ladders" are accumulated on a
// uniform panel grid over [0, t]:
//
//   A_x(τ)    = ∫₀^τ E_x(u) du                       (x ∈ {c, s})
//   B_{xy}(τ) = ∫₀^τ E_x(u) A_y(u) du                (4 combinations)
//   R_{g,xy}  = ∫₀^T e^{−λs} trig_g(Δs) B_{xy}(s) ds (g ∈ {cos, sin})
//
// in terms of which, writing p_c/p_s for the cos Δt/sin Δt coefficients of
// the outer kernel P and q for those of Q:
//
//   T_PQ := ∭ P(t−t₂) Q(t₁−t₃) = κ²e^{−λt} Σ_x p_x V_Q^x,
//       V_Q^x = Σ_y q-weighted R_{g,xy}   (q_y(t₁) pairs trig_g with A_y)
//   U_PQ := ∭ P(t−t₃) Q(t₁−t₂) = κ²e^{−λt} Σ_y p_y W_Q^y,
//       W_Q^y = Σ_x q-weighted R_{g,xy}   (q_x(t₁) pairs trig_g with E_x)
//
// The slow literal evaluator (`quad::triple_simplex`) stays in the test
// suite as a cross-check that the ladder reproduces it to ~1e-9.
// ---------------------------------------------------------------------------

/// Index helpers for the B/R ladders: 0 = cc, 1 = cs, 2 = sc, 3 = ss, where
/// the first letter is the E_x factor and the second the A_y factor.
const fn bidx(x: usize, y: usize) -> usize {
    2 * x + y
}

/// Cumulative Gauss–Legendre ladders for the kernel triple integrals on a
/// uniform segment grid over [0, len]; see the module-internal notes above.
struct KernelLadder {
    p: JCParams,
    dt: f64,
    segments: usize,
    /// R_{g,xy} at segment boundaries, g ∈ {cos, sin}, xy indexed by
    /// [`bidx`]. (The A and B ladders are construction scaffolding; only R
    /// enters the evaluation.)
    r: [[Vec<f64>; 4]; 2],
}

impl KernelLadder {
    /// Build the ladders over [0, len] with the panel rule
    /// max(32, ⌈8·λ·len⌉) · resolution segments (8-node Gauss–Legendre on
    /// each segment at every level).
    fn build(p: JCParams, len: f64, resolution: u32) -> Self {
        let segments = panel_count(p.lambda, len, resolution);
        let dt = len / segments as f64;
        // Growing factor E_x(u) = e^{λu}·(cos Δu, sin Δu)_x and damped trig
        // weight w_g(s) = e^{−λs}·(cos Δs, sin Δs)_g.
        let e_x = move |x: usize, u: f64| {
            let grow = (p.lambda * u).exp();
            if x == 0 { grow * (p.delta * u).cos() } else { grow * (p.delta * u).sin() }
        };
        let w_g = move |g: usize, s: f64| {
            let damp = (-p.lambda * s).exp();
            if g == 0 { damp * (p.delta * s).cos() } else { damp * (p.delta * s).sin() }
        };

        let mut a = [vec![0.0; segments + 1], vec![0.0; segments + 1]];
        for k in 1..=segments {
            let (lo, hi) = ((k - 1) as f64 * dt, k as f64 * dt);
            a[0][k] = a[0][k - 1] + gl8(|u| e_x(0, u), lo, hi);
            a[1][k] = a[1][k - 1] + gl8(|u| e_x(1, u), lo, hi);
        }

        let a_at = |a: &[Vec<f64>; 2], x: usize, u: f64| -> f64 {
            let k = ((u / dt) as usize).min(segments - 1);
            a[x][k] + gl8(|v| e_x(x, v), k as f64 * dt, u)
        };

        let mut b: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; segments + 1]);
        for k in 1..=segments {
            let (lo, hi) = ((k - 1) as f64 * dt, k as f64 * dt);
            for x in 0..2 {
                for y in 0..2 {
                    let i = bidx(x, y);
                    b[i][k] = b[i][k - 1] + gl8(|u| e_x(x, u) * a_at(&a, y, u), lo, hi);
                }
            }
        }

        let b_at = |b: &[Vec<f64>; 4], x: usize, y: usize, u: f64| -> f64 {
            let k = ((u / dt) as usize).min(segments - 1);
            b[bidx(x, y)][k] + gl8(|v| e_x(x, v) * a_at(&a, y, v), k as f64 * dt, u)
        };

        let mut r: [[Vec<f64>; 4]; 2] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; segments + 1]));
        for k in 1..=segments {
            let (lo, hi) = ((k - 1) as f64 * dt, k as f64 * dt);
            for g in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        let i = bidx(x, y);
                        r[g][i][k] = r[g][i][k - 1]
                            + gl8(|s| w_g(g, s) * b_at(&b, x, y, s), lo, hi);
                    }
                }
            }
        }

        Self { p, dt, segments, r }
    }

    /// Boundary time of segment k.
    fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Triple-integral parts (γ-combination, S-combination) at boundary k.
    fn triples_at(&self, k: usize) -> (f64, f64) {
        debug_assert!(k <= self.segments);
        let t = self.time_at(k);
        let p = self.p;
        let kappa2 = p.kappa() * p.kappa();
        let damp = (-p.lambda * t).exp();
        let (s_t, c_t) = (p.delta * t).sin_cos();
        let rr = |g: usize, x: usize, y: usize| self.r[g][bidx(x, y)][k];

        // V_Q^x: inner kernel Q(t₁−t₃) expanded over A_y with weights q_y(t₁).
        // Q = Φ pairs (cos·A_c + sin·A_s); Q = Ψ pairs (sin·A_c − cos·A_s).
        let v_phi = [rr(0, 0, 0) + rr(1, 0, 1), rr(0, 1, 0) + rr(1, 1, 1)];
        let v_psi = [rr(1, 0, 0) - rr(0, 0, 1), rr(1, 1, 0) - rr(0, 1, 1)];
        // W_Q^y: inner kernel Q(t₁−t₂) expanded over E_x with weights q_x(t₁).
        let w_phi = [rr(0, 0, 0) + rr(1, 1, 0), rr(0, 0, 1) + rr(1, 1, 1)];
        let w_psi = [rr(1, 0, 0) - rr(0, 1, 0), rr(1, 0, 1) - rr(0, 1, 1)];

        // Outer-kernel coefficients: P = Φ → (cos Δt, sin Δt); P = Ψ →
        // (sin Δt, −cos Δt).
        let combine = |inner: &[f64; 2], p_c: f64, p_s: f64| {
            kappa2 * damp * (p_c * inner[0] + p_s * inner[1])
        };
        let t_phi_phi = combine(&v_phi, c_t, s_t);
        let t_psi_psi = combine(&v_psi, s_t, -c_t);
        let t_phi_psi = combine(&v_psi, c_t, s_t);
        let t_psi_phi = combine(&v_phi, s_t, -c_t);
        let u_phi_phi = combine(&w_phi, c_t, s_t);
        let u_psi_psi = combine(&w_psi, s_t, -c_t);
        let u_phi_psi = combine(&w_psi, c_t, s_t);
        let u_psi_phi = combine(&w_phi, s_t, -c_t);

        let triple_gamma = 0.5 * (t_phi_phi - t_psi_psi + u_phi_phi - u_psi_psi);
        let triple_s = 0.5 * (t_psi_phi + t_phi_psi + u_psi_phi + u_phi_psi);
        (triple_gamma, triple_s)
    }

    /// Triple-integral parts at the final boundary (the full interval).
    fn triples(&self) -> (f64, f64) {
        self.triples_at(self.segments)
    }
}

/// Fourth-order decay rate by direct quadrature of its integral
/// representation (single integral of Φ plus the ordered kernel triple
/// integral). Independent oracle for [`gamma4_resonant`] /
/// [`gamma4_detuned`]; costs a ladder build per call.
pub fn gamma4_quadrature(p: JCParams, t: f64) -> f64 {
    gamma4_quadrature_with_resolution(p, t, 1)
}

/// [`gamma4_quadrature`] with the panel density multiplied by `resolution`
/// (convergence studies).
pub fn gamma4_quadrature_with_resolution(p: JCParams, t: f64, resolution: u32) -> f64 {
    assert!(t >= 0.0, "time must be non-negative, got {t}");
    if t == 0.0 {
        return 0.0;
    }
    let kern = kernels(p);
    let second = integrate_panels(|u| kern.phi(u), 0.0, t, panel_count(p.lambda, t, resolution));
    let (triple_gamma, _) = KernelLadder::build(p, t, resolution).triples();
    second + triple_gamma
}

/// Fourth-order Lamb-shift coefficient S⁽⁴⁾(t): closed-form S⁽²⁾ plus the
/// ordered kernel triple integral evaluated by quadrature (no closed form
/// exists for the latter). Identically zero on resonance, where Ψ ≡ 0 kills
/// both parts.
pub fn s4(p: JCParams, t: f64) -> f64 {
    s4_with_resolution(p, t, 1)
}

/// [`s4`] with the panel density multiplied by `resolution`.
pub fn s4_with_resolution(p: JCParams, t: f64, resolution: u32) -> f64 {
    assert!(t >= 0.0, "time must be non-negative, got {t}");
    if p.is_resonant() || t == 0.0 {
        return 0.0;
    }
    let (_, triple_s) = KernelLadder::build(p, t, resolution).triples();
    s2(p).value(t) + triple_s
}

// ---------------------------------------------------------------------------
// Sampled S⁽⁴⁾ for use inside simulations.
// ---------------------------------------------------------------------------

/// A rate sampled on a uniform grid with cubic interpolation in between.
/// Used for S⁽⁴⁾, whose pointwise evaluation (a fresh quadrature ladder per
/// call) is far too costly inside ODE stages and trajectory drifts.
struct SampledRate {
    dt: f64,
    values: Vec<f64>,
}

impl SampledRate {
    /// Piecewise-cubic evaluation: Catmull–Rom in the interior, one-sided
    /// cubic Lagrange on the first and last segments. O(h⁴) accurate
    /// everywhere.
    fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        debug_assert!(n >= 4, "sampled rate needs at least 4 points");
        let x = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let k = (x as usize).min(n - 2);
        let u = x - k as f64;
        let v = &self.values;
        if k == 0 || k == n - 2 {
            // Cubic Lagrange through the four points nearest the edge,
            // evaluated at local coordinate s ∈ [0, 3].
            let base = if k == 0 { 0 } else { n - 4 };
            let s = x - base as f64;
            let mut acc = 0.0;
            for (j, &vj) in v[base..base + 4].iter().enumerate() {
                let mut w = 1.0;
                for m in 0..4 {
                    if m != j {
                        w *= (s - m as f64) / (j as f64 - m as f64);
                    }
                }
                acc += w * vj;
            }
            acc
        } else {
            let (p0, p1, p2, p3) = (v[k - 1], v[k], v[k + 1], v[k + 2]);
            0.5 * (2.0 * p1
                + u * ((p2 - p0)
                    + u * ((2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3)
                        + u * (3.0 * (p1 - p2) + p3 - p0))))
        }
    }
}

/// S⁽⁴⁾ as a cheap, reusable [`RateFunction`] over [0, t_max]: one quadrature
/// ladder build at 4× panel density samples the triple integral at every
/// segment boundary, with cubic interpolation (error ≲ 1e-4·γ₀, phase-only
/// effect) in between. Evaluations beyond t_max clamp to the last sample.
pub fn s4_sampled(p: JCParams, t_max: f64) -> RateFunction {
    assert!(t_max > 0.0, "sampling window must be positive, got {t_max}");
    if p.is_resonant() {
        return RateFunction::infallible(RateKind::S4, |_| 0.0);
    }
    // 5% margin so interpolation near t_max never touches the clamped edge.
    let len = 1.05 * t_max;
    let ladder = KernelLadder::build(p, len, 4);
    let s2_closed = s2(p);
    let values: Vec<f64> = (0..=ladder.segments)
        .map(|k| {
            let (_, triple_s) = ladder.triples_at(k);
            s2_closed.value(ladder.time_at(k)) + triple_s
        })
        .collect();
    let table = SampledRate { dt: ladder.dt, values };
    RateFunction::infallible(RateKind::S4, move |t| table.eval(t))
}

// ---------------------------------------------------------------------------
// Exact solution: excited amplitude and exact rates.
// ---------------------------------------------------------------------------

/// Exact excited-state amplitude c₁(t) of the atom–mode system.
///
/// c₁ obeys the memory-kernel equation ċ₁(t) = −∫₀ᵗ f(t−s) c₁(s) ds with
/// f(τ) = ½γ₀λ e^{−(λ−iΔ)τ}, which for this exponential kernel closes into
/// the local linear system
///
///   ċ₁ = −(γ₀λ/2)·b,   ḃ = c₁ − (λ−iΔ)·b,   c₁(0) = 1, b(0) = 0,
///
/// (b(t) = ∫₀ᵗ e^{−(λ−iΔ)(t−s)} c₁(s) ds). The system is integrated by
/// classic fourth-order Runge–Kutta on a fixed step chosen from the stiffest
/// scale (global error ≲ 1e-10 over the windows used here), with the table
/// extended lazily and cubic-Hermite interpolation between nodes. Values are
/// cached behind a lock, so a single instance is cheap to share across
/// threads.
pub struct ExactAmplitude {
    p: JCParams,
    h: f64,
    table: RwLock<AmpTable>,
}

struct AmpTable {
    c1: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl ExactAmplitude {
    const EXTEND_BLOCK: usize = 8192;

    fn new(p: JCParams) -> Self {
        let scale = p.lambda.max(p.delta.abs()).max(p.kappa().sqrt());
        let h = 2.0e-3 / scale;
        let table = AmpTable { c1: vec![Complex64::new(1.0, 0.0)], b: vec![Complex64::new(0.0, 0.0)] };
        Self { p, h, table: RwLock::new(table) }
    }

    /// One RK4 step of the (c₁, b) system.
    fn step(&self, c1: Complex64, b: Complex64) -> (Complex64, Complex64) {
        let half_kappa = 0.5 * self.p.kappa();
        let mu = Complex64::new(self.p.lambda, -self.p.delta);
        let f = |c: Complex64, b: Complex64| (-half_kappa * b, c - mu * b);
        let h = self.h;
        let (k1c, k1b) = f(c1, b);
        let (k2c, k2b) = f(c1 + 0.5 * h * k1c, b + 0.5 * h * k1b);
        let (k3c, k3b) = f(c1 + 0.5 * h * k2c, b + 0.5 * h * k2b);
        let (k4c, k4b) = f(c1 + h * k3c, b + h * k3b);
        (
            c1 + (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c),
            b + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
        )
    }

    /// Grow the table until it covers `t`.
    fn ensure(&self, t: f64) {
        let needed = (t / self.h).ceil() as usize + 2;
        if self.table.read().expect("amplitude table lock").c1.len() > needed {
            return;
        }
        let mut table = self.table.write().expect("amplitude table lock");
        while table.c1.len() <= needed {
            let target = table.c1.len() + Self::EXTEND_BLOCK;
            let (mut c1, mut b) = (*table.c1.last().unwrap(), *table.b.last().unwrap());
            while table.c1.len() < target {
                (c1, b) = self.step(c1, b);
                table.c1.push(c1);
                table.b.push(b);
            }
        }
    }

    /// Interpolate a table column with cubic Hermite using the analytic
    /// derivative at the nodes. `deriv(c1, b)` must return d(column)/dt.
    fn interp(
        &self,
        t: f64,
        column: impl Fn(&AmpTable, usize) -> Complex64,
        deriv: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Complex64 {
        assert!(t >= 0.0 && t.is_finite(), "time must be finite and non-negative, got {t}");
        self.ensure(t);
        let table = self.table.read().expect("amplitude table lock");
        let k = ((t / self.h) as usize).min(table.c1.len() - 2);
        let tau = t / self.h - k as f64;
        let (p0, p1) = (column(&table, k), column(&table, k + 1));
        let m0 = deriv(table.c1[k], table.b[k]);
        let m1 = deriv(table.c1[k + 1], table.b[k + 1]);
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let (h00, h10, h01, h11) =
            (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + tau, -2.0 * t3 + 3.0 * t2, t3 - t2);
        h00 * p0 + (h10 * self.h) * m0 + h01 * p1 + (h11 * self.h) * m1
    }

    /// Excited amplitude c₁(t); c₁(0) = 1 and |c₁(t)| ≤ 1.
    pub fn c1(&self, t: f64) -> Complex64 {
        let half_kappa = 0.5 * self.p.kappa();
        self.interp(t, |tab, k| tab.c1[k], |_, b| -half_kappa * b)
    }

    /// Time derivative ċ₁(t) = −(γ₀λ/2)·b(t).
    pub fn c1_dot(&self, t: f64) -> Complex64 {
        let half_kappa = 0.5 * self.p.kappa();
        let mu = Complex64::new(self.p.lambda, -self.p.delta);
        let b = self.interp(t, |tab, k| tab.b[k], move |c, b| c - mu * b);
        -half_kappa * b
    }

    /// The parameters this amplitude was built for.
    pub fn params(&self) -> JCParams {
        self.p
    }
}

/// Exact excited-amplitude solver for a parameter set.
pub fn exact_amplitude(p: JCParams) -> ExactAmplitude {
    ExactAmplitude::new(p)
}

/// Default floor on |c₁| below which the exact rates refuse to evaluate.
pub const EXACT_RATE_FLOOR: f64 = 1e-12;

/// Exact decay rate and shift, γ(t) = −2 Re ċ₁/c₁ and S(t) = −2 Im ċ₁/c₁,
/// with the default amplitude floor [`EXACT_RATE_FLOOR`].
pub fn exact_rates(p: JCParams) -> (RateFunction, RateFunction) {
    exact_rates_with_floor(p, EXACT_RATE_FLOOR)
}

/// [`exact_rates`] with a caller-chosen floor on |c₁| (the rates diverge at
/// zeros of c₁, which exist off the weak-coupling regime; evaluation below
/// the floor returns [`JcError::AmplitudeFloor`]).
pub fn exact_rates_with_floor(p: JCParams, floor: f64) -> (RateFunction, RateFunction) {
    let amp = Arc::new(exact_amplitude(p));
    let log_deriv = move |t: f64| -> Result<Complex64, JcError> {
        let c1 = amp.c1(t);
        let magnitude = c1.norm();
        if magnitude < floor {
            return Err(JcError::AmplitudeFloor { t, magnitude, floor });
        }
        Ok(amp.c1_dot(t) / c1)
    };
    let ld_gamma = log_deriv.clone();
    let gamma = RateFunction::fallible(RateKind::GammaExact, move |t| {
        ld_gamma(t).map(|z| -2.0 * z.re)
    });
    let shift = RateFunction::fallible(RateKind::SExact, move |t| {
        log_deriv(t).map(|z| -2.0 * z.im)
    });
    (gamma, shift)
}

/// Closed-form resonant excited amplitude (real):
///
/// * λ² > 2γ₀λ: c₁ = e^{−λt/2}[cosh(dt/2) + (λ/d)sinh(dt/2)], d = √(λ²−2γ₀λ),
///   written with decaying exponentials only;
/// * λ² < 2γ₀λ: same with d = iω, ω = √(2γ₀λ−λ²) (trig form);
/// * λ = 2γ₀: the confluent limit e^{−λt/2}(1 + λt/2).
///
/// Reference oracle for [`exact_amplitude`]; resonance only.
pub fn resonant_amplitude_closed(p: JCParams, t: f64) -> Result<f64, JcError> {
    if !p.is_resonant() {
        return Err(JcError::NotResonant { delta: p.delta });
    }
    let lam = p.lambda;
    let d2 = lam * lam - 2.0 * p.gamma0 * lam;
    let value = if d2 > 0.0 {
        let d = d2.sqrt();
        // e^{−λt/2}[cosh + (λ/d)sinh] = ½[(1+λ/d)e^{(d−λ)t/2} + (1−λ/d)e^{−(d+λ)t/2}]
        0.5 * ((1.0 + lam / d) * (0.5 * (d - lam) * t).exp()
            + (1.0 - lam / d) * (-0.5 * (d + lam) * t).exp())
    } else if d2 < 0.0 {
        let w = (-d2).sqrt();
        (-0.5 * lam * t).exp() * ((0.5 * w * t).cos() + (lam / w) * (0.5 * w * t).sin())
    } else {
        (-0.5 * lam * t).exp() * (1.0 + 0.5 * lam * t)
    };
    Ok(value)
}

/// Closed-form resonant exact decay rate:
///
///   γ(t) = 2γ₀λ sinh(dt/2) / [d cosh(dt/2) + λ sinh(dt/2)],
///
/// in decaying-exponential form for real d, trig form for imaginary d and
/// the confluent limit γ₀λt/(1 + λt/2) at d = 0. Resonance only.
pub fn resonant_rate_closed(p: JCParams, t: f64) -> Result<f64, JcError> {
    if !p.is_resonant() {
        return Err(JcError::NotResonant { delta: p.delta });
    }
    let lam = p.lambda;
    let two_kappa = 2.0 * p.gamma0 * lam;
    let d2 = lam * lam - two_kappa;
    let value = if d2 > 0.0 {
        let d = d2.sqrt();
        let e = (-d * t).exp();
        two_kappa * (1.0 - e) / (d * (1.0 + e) + lam * (1.0 - e))
    } else if d2 < 0.0 {
        let w = (-d2).sqrt();
        let (s, c) = (0.5 * w * t).sin_cos();
        two_kappa * s / (w * c + lam * s)
    } else {
        two_kappa * 0.5 * t / (1.0 + 0.5 * lam * t)
    };
    Ok(value)
}
