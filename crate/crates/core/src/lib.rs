//! Stochastic wave-function unraveling of time-local quantum master
//! equations.
//!
//! The crate simulates open-system dynamics by averaging pure-state
//! trajectories instead of integrating density matrices:
//!
//! * [`linear`] — small dense complex vectors/matrices and the two-level
//!   basis conventions used throughout;
//! * [`quad`] — Gauss–Legendre panel quadrature, including a literal
//!   ordered-triple-integral evaluator used as a cross-check oracle;
//! * [`jc`] — decay rate γ(t) and Lamb-shift coefficient S(t) of the damped
//!   Jaynes–Cummings model: second order, fourth order (closed forms and
//!   quadrature oracles) and exact, the model used to validate everything
//!   else;
//! * [`master`] — time-local master equations (Lindblad form with
//!   time-dependent rates, and the general two-operator form that covers
//!   negative rates via a doubled state space), plus a deterministic RK4
//!   reference integrator;
//! * [`pdp`] — the piecewise-deterministic jump process: deterministic drift
//!   between jumps, jump intensities, waiting-time sampling and single
//!   trajectories, in both the standard and the doubled-space unraveling;
//! * [`ensemble`] — reproducible parallel Monte-Carlo averaging with
//!   streaming mean/variance accumulators.
//!
//! Named end-to-end checks wiring the layers together live in the `qjump`
//! command-line crate (`qjump validate`).

pub mod ensemble;
pub mod jc;
pub mod master;
pub mod pdp;
pub mod linear;
pub mod quad;
