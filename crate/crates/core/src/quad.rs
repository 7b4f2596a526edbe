//! Deterministic Gauss-Legendre quadrature on panel subdivisions.
//!
//! The memory-kernel integrands in this crate are products of decaying
//! exponentials and trigonometrics whose natural length scale is 1/λ, so the
//! panel count is tied to λ·(interval length): `panel_count` uses
//! max(32, ⌈8·λ·len⌉) panels of an 8-point rule, which resolves roughly one
//! radian of kernel phase per panel with plenty of headroom. A `resolution`
//! multiplier scales the panel density so callers can assert convergence by
//! doubling.

/// Abscissae of the 8-point Gauss-Legendre rule on [-1, 1] (positive half;
/// the rule is symmetric).
const GL8_X: [f64; 4] = [
    0.18343464249564980494,
    0.52553240991632898582,
    0.79666647741362673959,
    0.96028985649753623168,
];

/// Weights paired with `GL8_X`.
const GL8_W: [f64; 4] = [
    0.36268378337836198297,
    0.31370664587788728734,
    0.22238103445337447054,
    0.10122853629037625915,
];

/// 8-point Gauss-Legendre quadrature of `f` over [a, b] (single panel).
/// Exact for polynomials up to degree 15.
pub fn gl8<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..4 {
        let dx = half * GL8_X[k];
        acc += GL8_W[k] * (f(mid - dx) + f(mid + dx));
    }
    acc * half
}

/// Panel count for an interval of length `len` whose integrand varies on the
/// scale `rate_scale` (a frequency-like quantity, 1/time): at least 32, and at
/// least 8 panels per unit of `rate_scale · len`, times `resolution`.
pub fn panel_count(rate_scale: f64, len: f64, resolution: u32) -> usize {
    let base = (8.0 * rate_scale * len).ceil().max(32.0) as usize;
    base * resolution.max(1) as usize
}

/// Composite 8-point Gauss-Legendre quadrature of `f` over [a, b] with
/// `panels` equal panels.
pub fn integrate_panels<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 1);
    if a == b {
        return 0.0;
    }
    let width = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        acc += gl8(&mut f, lo, lo + width);
    }
    acc
}

/// Reference evaluation of the ordered triple integral
///
///   ∫₀ᵗ dt₁ ∫₀^{t₁} dt₂ ∫₀^{t₂} dt₃ f(t₁, t₂, t₃)
///
/// by straightforwardly nested Gauss-Legendre panels, each level sized by
/// `panel_count(rate_scale, len, resolution)` for its own interval length.
/// Cost grows with the cube of the node count — this is the slow, obviously
/// correct evaluator kept around to cross-check the fast kernel-specific one.
pub fn triple_simplex<F: Fn(f64, f64, f64) -> f64>(
    f: F,
    t: f64,
    rate_scale: f64,
    resolution: u32,
) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let outer = |t1: f64| {
        let mid = |t2: f64| {
            integrate_panels(|t3| f(t1, t2, t3), 0.0, t2, panel_count(rate_scale, t2, resolution))
        };
        integrate_panels(mid, 0.0, t1, panel_count(rate_scale, t1, resolution))
    };
    integrate_panels(outer, 0.0, t, panel_count(rate_scale, t, resolution))
}
