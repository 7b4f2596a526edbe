//! Minimal dense complex linear algebra for small Hilbert spaces.
//!
//! Everything is stored as flat row-major `Vec<Complex64>`; the dimensions in
//! this crate are tiny (2 for a qubit, 4 for a doubled pair), so there is no
//! point in sparse storage or an external matrix library.
//!
//! Two-level basis convention used throughout the crate: index 0 is the
//! excited state |1⟩ and index 1 is the ground state |0⟩. Consequently
//! σ⁺σ⁻ = diag(1, 0), σ⁻ maps index 0 to index 1, and the excited-state
//! population of a density matrix is its (0,0) entry.

use num_complex::Complex64;
use thiserror::Error;

/// Shorthand for building a complex number.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("operator must be square: {rows} rows x {cols} cols")]
    NotSquare { rows: usize, cols: usize },
    #[error("cannot normalize a zero vector")]
    ZeroNorm,
}

/// A pure state: complex amplitudes in a fixed orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        assert!(!amplitudes.is_empty(), "state vector must have dimension >= 1");
        Self { amplitudes }
    }

    /// The basis state |k⟩ in a `dim`-dimensional space.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim);
        let mut amplitudes = vec![Complex64::ZERO; dim];
        amplitudes[k] = Complex64::ONE;
        Self { amplitudes }
    }

    pub fn zero(dim: usize) -> Self {
        Self { amplitudes: vec![Complex64::ZERO; dim] }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64, LinearError> {
        check_dim("inner", self.dim(), other.dim())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { amplitudes: self.amplitudes.iter().map(|a| a * factor).collect() }
    }

    pub fn normalized(&self) -> Result<Self, LinearError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(LinearError::ZeroNorm);
        }
        Ok(self.scaled(c64(1.0 / n, 0.0)))
    }
}

/// A pair (φ, ψ) of states of the same base space, i.e. one vector in the
/// doubled space ℋ ⊕ ℋ. The first component propagates "kets" and the second
/// "bras" of the relative states |φ⟩⟨ψ|.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub phi: StateVector,
    pub psi: StateVector,
}

impl PairState {
    pub fn new(phi: StateVector, psi: StateVector) -> Result<Self, LinearError> {
        check_dim("PairState::new", phi.dim(), psi.dim())?;
        Ok(Self { phi, psi })
    }

    /// The symmetric pair (ψ, ψ) used as the doubled image of a single state.
    pub fn symmetric(psi: StateVector) -> Self {
        Self { phi: psi.clone(), psi }
    }

    /// Dimension of the base space (half the doubled dimension).
    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    /// Combined norm²: ‖φ‖² + ‖ψ‖².
    pub fn norm_sq(&self) -> f64 {
        self.phi.norm_sq() + self.psi.norm_sq()
    }

    /// The relative operator |φ⟩⟨ψ| this pair contributes to the ensemble.
    pub fn outer(&self) -> DensityMatrix {
        outer(&self.phi, &self.psi).expect("components have equal dimension")
    }
}

/// A dense square operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>,
}

impl Operator {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), dim * dim, "operator storage must be dim*dim");
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.entries[k * dim + k] = Complex64::ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn set_entry(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    /// Matrix-vector product self · v.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector, LinearError> {
        check_dim("Operator::apply", self.dim, v.dim())?;
        let mut out = StateVector::zero(self.dim);
        self.apply_slice(v.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }

    /// Matrix-vector product on raw slices; lengths must already match.
    #[inline]
    pub fn apply_slice(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (row, out_k) in out.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            let base = row * self.dim;
            for (col, vk) in v.iter().enumerate() {
                acc += self.entries[base + col] * vk;
            }
            *out_k = acc;
        }
    }

    /// Matrix-vector product accumulated into `out` with a scalar factor:
    /// out += factor · self · v.
    #[inline]
    pub fn apply_scaled_slice(&self, factor: Complex64, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (row, out_k) in out.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            let base = row * self.dim;
            for (col, vk) in v.iter().enumerate() {
                acc += self.entries[base + col] * vk;
            }
            *out_k += factor * acc;
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinearError> {
        check_dim("Operator::matmul", self.dim, other.dim)?;
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..d {
                    out.entries[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[j * d + i] = self.entries[i * d + j].conj();
            }
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|e| e * factor).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinearError> {
        check_dim("Operator::add", self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self.entries[k * self.dim + k]).sum()
    }

    /// max |a_jk − b_jk|, a convenient metric for tests and tolerances.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, LinearError> {
        check_dim("Operator::max_abs_diff", self.dim, other.dim)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// A (not necessarily Hermitian) density-matrix-like object: ensemble means
/// of |φ⟩⟨ψ| land here, and only after hermitization is it a physical state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), dim * dim, "density storage must be dim*dim");
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::ZERO; dim * dim] }
    }

    /// Pure-state density |ψ⟩⟨ψ| (unnormalized if ψ is).
    pub fn pure(psi: &StateVector) -> Self {
        outer(psi, psi).expect("equal dims")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Complex64] {
        &mut self.entries
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn set_entry(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self.entries[k * self.dim + k]).sum()
    }

    /// (ρ + ρ†)/2.
    pub fn hermitized(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[i * d + j] =
                    0.5 * (self.entries[i * d + j] + self.entries[j * d + i].conj());
            }
        }
        out
    }

    /// self += factor · other (entrywise), used by integrators and estimators.
    pub fn add_scaled(&mut self, factor: Complex64, other: &Self) -> Result<(), LinearError> {
        check_dim("DensityMatrix::add_scaled", self.dim, other.dim)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|e| e * factor).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, LinearError> {
        check_dim("DensityMatrix::max_abs_diff", self.dim, other.dim)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }
}

/// The rank-one operator |φ⟩⟨ψ| with entries φ_j ψ_k*.
pub fn outer(phi: &StateVector, psi: &StateVector) -> Result<DensityMatrix, LinearError> {
    check_dim("outer", phi.dim(), psi.dim())?;
    let d = phi.dim();
    let mut entries = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            entries.push(phi.amplitudes()[j] * psi.amplitudes()[k].conj());
        }
    }
    Ok(DensityMatrix::new(d, entries))
}

#[inline]
fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<(), LinearError> {
    if expected == got {
        Ok(())
    } else {
        Err(LinearError::DimensionMismatch { context, expected, got })
    }
}

// ---------------------------------------------------------------------------
// Two-level helpers. Basis ordering: index 0 = excited |1⟩, index 1 = ground
// |0⟩ (see module docs).
// ---------------------------------------------------------------------------

/// |1⟩, the excited state (basis index 0).
pub fn excited() -> StateVector {
    StateVector::basis(2, 0)
}

/// |0⟩, the ground state (basis index 1).
pub fn ground() -> StateVector {
    StateVector::basis(2, 1)
}

/// Lowering operator σ⁻ = |0⟩⟨1|: maps the excited index 0 to the ground
/// index 1.
pub fn sigma_minus() -> Operator {
    let mut m = Operator::zeros(2);
    m.set_entry(1, 0, Complex64::ONE);
    m
}

/// Raising operator σ⁺ = |1⟩⟨0|.
pub fn sigma_plus() -> Operator {
    let mut m = Operator::zeros(2);
    m.set_entry(0, 1, Complex64::ONE);
    m
}

/// σ⁺σ⁻ = diag(1, 0), the projector onto the excited state.
pub fn excited_projector() -> Operator {
    let mut m = Operator::zeros(2);
    m.set_entry(0, 0, Complex64::ONE);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn basis_ordering() {
        // excited = index 0, ground = index 1
        assert_eq!(excited().amplitudes()[0], Complex64::ONE);
        assert_eq!(ground().amplitudes()[1], Complex64::ONE);
        // σ⁺σ⁻ = diag(1, 0)
        let n = excited_projector();
        assert_eq!(n.entry(0, 0), Complex64::ONE);
        assert_eq!(n.entry(1, 1), Complex64::ZERO);
        // σ⁻ |excited⟩ = |ground⟩, σ⁻ |ground⟩ = 0
        let lowered = sigma_minus().apply(&excited()).unwrap();
        assert_eq!(lowered, ground());
        assert_eq!(sigma_minus().apply(&ground()).unwrap().norm(), 0.0);
        // and σ⁺σ⁻ agrees with the product of its factors
        let product = sigma_plus().matmul(&sigma_minus()).unwrap();
        assert_eq!(product, excited_projector());
    }

    #[test]
    fn identity_apply_is_noop() {
        let v = StateVector::new(vec![c64(0.3, -0.1), c64(0.7, 0.4)]);
        let w = Operator::identity(2).apply(&v).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn apply_rejects_mismatched_dims() {
        let v = StateVector::basis(3, 0);
        let err = Operator::identity(2).apply(&v).unwrap_err();
        assert!(matches!(err, LinearError::DimensionMismatch { expected: 2, got: 3, .. }));
    }

    #[test]
    fn outer_entries_and_trace() {
        let phi = StateVector::new(vec![c64(1.0, 0.0), c64(0.0, 1.0)]);
        let psi = StateVector::new(vec![c64(0.5, 0.0), c64(0.5, 0.5)]);
        let m = outer(&phi, &psi).unwrap();
        // entries are φ_j ψ_k*
        assert_eq!(m.entry(0, 0), c64(0.5, 0.0));
        assert_eq!(m.entry(0, 1), c64(0.5, -0.5));
        assert_eq!(m.entry(1, 0), c64(0.0, 0.5));
        assert_eq!(m.entry(1, 1), c64(0.5, 0.5));
        // tr |φ⟩⟨ψ| = ⟨ψ|φ⟩
        let tr = m.trace();
        let ip = psi.inner(&phi).unwrap();
        assert_abs_diff_eq!(tr.re, ip.re, epsilon = 1e-15);
        assert_abs_diff_eq!(tr.im, ip.im, epsilon = 1e-15);
    }

    #[test]
    fn hermitized_is_hermitian_and_fixes_nothing_hermitian() {
        let m = DensityMatrix::new(2, vec![c64(1.0, 0.0), c64(0.2, 0.3), c64(0.1, -0.1), c64(0.5, 0.0)]);
        let h = m.hermitized();
        for i in 0..2 {
            for j in 0..2 {
                let a = h.entry(i, j);
                let b = h.entry(j, i).conj();
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-15);
                assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-15);
            }
        }
        let already = DensityMatrix::pure(&excited());
        assert_eq!(already.hermitized(), already);
    }

    #[test]
    fn adjoint_and_matmul() {
        let a = Operator::new(2, vec![c64(1.0, 1.0), c64(0.0, 2.0), c64(3.0, 0.0), c64(0.0, -1.0)]);
        let adj = a.adjoint();
        assert_eq!(adj.entry(0, 1), c64(3.0, 0.0));
        assert_eq!(adj.entry(1, 0), c64(0.0, -2.0));
        // (AB)† = B†A†
        let b = Operator::new(2, vec![c64(0.0, 0.5), c64(1.0, 0.0), c64(0.0, 0.0), c64(2.0, 2.0)]);
        let lhs = a.matmul(&b).unwrap().adjoint();
        let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-14);
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map(
            "non-zero state",
            move |parts| {
                let v = StateVector::new(parts.iter().map(|&(re, im)| c64(re, im)).collect());
                (v.norm() > 1e-3).then_some(v)
            },
        )
    }

    proptest! {
        #[test]
        fn outer_trace_is_norm_sq(v in arb_state(3)) {
            let tr = DensityMatrix::pure(&v).trace();
            prop_assert!((tr.re - v.norm_sq()).abs() <= 1e-12 * v.norm_sq());
            prop_assert!(tr.im.abs() <= 1e-12 * v.norm_sq());
        }

        #[test]
        fn outer_is_bilinear_in_phi(a in arb_state(3), b in arb_state(3), psi in arb_state(3),
                                    re in -1.0f64..1.0, im in -1.0f64..1.0) {
            // outer(a + s·b, ψ) = outer(a, ψ) + s·outer(b, ψ)
            let s = c64(re, im);
            let sum = StateVector::new(
                a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + s * y).collect(),
            );
            let lhs = outer(&sum, &psi).unwrap();
            let mut rhs = outer(&a, &psi).unwrap();
            rhs.add_scaled(s, &outer(&b, &psi).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }

        #[test]
        fn normalized_has_unit_norm(v in arb_state(4)) {
            let n = v.normalized().unwrap().norm();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pair_norm_sq_adds_components(a in arb_state(2), b in arb_state(2)) {
            let pair = PairState::new(a.clone(), b.clone()).unwrap();
            let direct = a.norm_sq() + b.norm_sq();
            prop_assert!((pair.norm_sq() - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }
}
