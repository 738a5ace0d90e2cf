//! Dense state and operator arithmetic on small qubit registers.
//!
//! Qubit 0 is the leftmost tensor factor and the most significant bit of a
//! basis-state label. Every other module inherits this ordering.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Hard cap on the number of qubits of any dense object.
pub const MAX_QUBITS: usize = 16;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

pub(crate) fn check_cap(what: &'static str, requested: usize, limit: usize) -> Result<()> {
    if requested > limit {
        return Err(Error::Resource {
            what,
            requested,
            limit,
        });
    }
    Ok(())
}

/// Named numerical tolerances. All are overridable from the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Entrywise bound on `A - A†` for Hermitian operators.
    pub hermitian: f64,
    /// Entrywise bound on `A†A - I` for unitaries.
    pub unitary: f64,
    /// Deviation of a state norm or density-matrix trace from 1.
    pub normalization: f64,
    /// Most negative eigenvalue accepted for a density matrix.
    pub psd: f64,
    /// Imaginary part of an expectation value above which we refuse to answer.
    pub imag_residue: f64,
    /// Eigenpair residual target for the spectral solvers.
    pub residual: f64,
    /// Eigenvalue gap under which two eigenvalues count as degenerate.
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-10,
            unitary: 1e-10,
            normalization: 1e-10,
            psd: 1e-10,
            imag_residue: 1e-8,
            residual: 1e-8,
            degeneracy: 1e-9,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 7] = [
        "hermitian",
        "unitary",
        "normalization",
        "psd",
        "imag_residue",
        "residual",
        "degeneracy",
    ];

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::arg(format!(
                "tolerance {name} must be finite and >= 0"
            )));
        }
        let slot = match name {
            "hermitian" => &mut self.hermitian,
            "unitary" => &mut self.unitary,
            "normalization" => &mut self.normalization,
            "psd" => &mut self.psd,
            "imag_residue" => &mut self.imag_residue,
            "residual" => &mut self.residual,
            "degeneracy" => &mut self.degeneracy,
            _ => {
                return Err(Error::arg(format!(
                    "unknown tolerance '{name}' (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }
}

/// Largest entrywise modulus of `a - b`.
pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub(crate) fn unitarity_defect(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    max_abs_diff(&(m.adjoint() * m), &DMatrix::identity(d, d))
}

/// Register partition `input ⊗ ancilla ⊗ clock`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    pub n_input: usize,
    pub n_ancilla: usize,
    pub n_clock: usize,
}

impl RegisterLayout {
    pub fn new(n_input: usize, n_ancilla: usize, n_clock: usize) -> Self {
        RegisterLayout {
            n_input,
            n_ancilla,
            n_clock,
        }
    }

    pub fn total(&self) -> usize {
        self.n_input + self.n_ancilla + self.n_clock
    }

    /// Qubits the circuit itself acts on.
    pub fn work(&self) -> usize {
        self.n_input + self.n_ancilla
    }

    pub fn input_qubits(&self) -> std::ops::Range<usize> {
        0..self.n_input
    }

    pub fn ancilla_qubits(&self) -> std::ops::Range<usize> {
        self.n_input..self.work()
    }

    pub fn clock_qubits(&self) -> std::ops::Range<usize> {
        self.work()..self.total()
    }

    /// Layout index of clock qubit `t`, with clock qubits numbered `1..=L`.
    pub fn clock_index(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.n_clock);
        self.work() + t - 1
    }

    pub fn with_clock(&self, n_clock: usize) -> Self {
        RegisterLayout { n_clock, ..*self }
    }
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: DVector<C64>,
}

impl PureState {
    pub fn new(num_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        Self::new_with(num_qubits, amplitudes, &Tolerances::default())
    }

    pub fn new_with(num_qubits: usize, amplitudes: Vec<C64>, tol: &Tolerances) -> Result<Self> {
        check_cap("pure state", num_qubits, MAX_QUBITS)?;
        if amplitudes.len() != 1 << num_qubits {
            return Err(Error::Dimension {
                expected: 1 << num_qubits,
                actual: amplitudes.len(),
            });
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > tol.normalization {
            return Err(Error::Numerical(format!(
                "state norm² is {norm_sqr}, expected 1"
            )));
        }
        Ok(PureState {
            num_qubits,
            amplitudes: DVector::from_vec(amplitudes),
        })
    }

    /// Normalizes `amplitudes`; fails on the zero vector.
    pub fn normalized(num_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let mut v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero vector".into()));
        }
        v.unscale_mut(norm);
        Self::new(num_qubits, v.data.into())
    }

    pub(crate) fn from_vector_unchecked(num_qubits: usize, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << num_qubits);
        PureState {
            num_qubits,
            amplitudes,
        }
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_cap("pure state", num_qubits, MAX_QUBITS)?;
        if index >= 1 << num_qubits {
            return Err(Error::arg(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut v = DVector::zeros(1 << num_qubits);
        v[index] = ONE;
        Ok(PureState::from_vector_unchecked(num_qubits, v))
    }

    /// Computational basis state from a bit string, qubit 0 first.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        Self::basis(bits.len(), index)
    }

    /// Haar-random state from normalized complex Gaussians.
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Self {
        let dim = 1 << num_qubits;
        let mut v = DVector::from_fn(dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = v.norm();
        v.unscale_mut(norm);
        PureState::from_vector_unchecked(num_qubits, v)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            num_qubits: self.num_qubits,
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {}\n", self.num_qubits);
        for a in self.amplitudes.iter() {
            push_complex(&mut out, *a);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (n, values, first_line) = read_entries(text)?;
        let dim = 1usize << n;
        if values.len() != dim {
            return Err(Error::parse(
                first_line,
                format!("expected {dim} amplitudes, found {}", values.len()),
            ));
        }
        PureState::new(n, values)
    }
}

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(num_qubits: usize, matrix: DMatrix<C64>) -> Result<Self> {
        Self::new_with(num_qubits, matrix, &Tolerances::default())
    }

    pub fn new_with(num_qubits: usize, matrix: DMatrix<C64>, tol: &Tolerances) -> Result<Self> {
        check_cap("density matrix", num_qubits, MAX_QUBITS)?;
        let dim = 1 << num_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        let herm = hermiticity_defect(&matrix);
        if herm > tol.hermitian {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.normalization || tr.im.abs() > tol.normalization {
            return Err(Error::Numerical(format!("density matrix trace is {tr}")));
        }
        let min_eig = hermitian_eigenvalues(&matrix)[0];
        if min_eig < -tol.psd {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(DensityMatrix { num_qubits, matrix })
    }

    /// For matrices produced by trace-preserving maps of valid states.
    pub(crate) fn from_matrix_unchecked(num_qubits: usize, matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(matrix.nrows(), 1 << num_qubits);
        DensityMatrix { num_qubits, matrix }
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        check_cap("density matrix", num_qubits, MAX_QUBITS)?;
        let dim = 1 << num_qubits;
        let m = DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        Ok(DensityMatrix::from_matrix_unchecked(num_qubits, m))
    }

    /// Random mixed state of the given rank (Ginibre ensemble).
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rank: usize, rng: &mut R) -> Self {
        let dim = 1 << num_qubits;
        let g = DMatrix::from_fn(dim, rank.max(1), |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let mut m = &g * g.adjoint();
        let tr = m.trace();
        m.unscale_mut(tr.re);
        DensityMatrix::from_matrix_unchecked(num_qubits, m)
    }

    /// Convex combination `Σ w_i ρ_i`; weights must be nonnegative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::arg("empty mixture"))?.1;
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(
                "mixture weights must be nonnegative and sum to 1",
            ));
        }
        let mut m = DMatrix::zeros(first.dim(), first.dim());
        for (w, rho) in parts {
            if rho.num_qubits != first.num_qubits {
                return Err(Error::Dimension {
                    expected: first.num_qubits,
                    actual: rho.num_qubits,
                });
            }
            m += &rho.matrix * C64::new(*w, 0.0);
        }
        Ok(DensityMatrix::from_matrix_unchecked(first.num_qubits, m))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        partial_trace(self, keep)
    }

    pub fn to_text(&self) -> String {
        matrix_to_text(self.num_qubits, &self.matrix)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (n, m) = matrix_from_text(text)?;
        DensityMatrix::new(n, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// A square operator on `num_qubits` qubits, tagged with what has been verified about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    num_qubits: usize,
    matrix: DMatrix<C64>,
    kind: OperatorKind,
}

impl Operator {
    pub fn new(num_qubits: usize, matrix: DMatrix<C64>, kind: OperatorKind) -> Result<Self> {
        Self::new_with(num_qubits, matrix, kind, &Tolerances::default())
    }

    pub fn new_with(
        num_qubits: usize,
        matrix: DMatrix<C64>,
        kind: OperatorKind,
        tol: &Tolerances,
    ) -> Result<Self> {
        check_cap("operator", num_qubits, MAX_QUBITS)?;
        let dim = 1 << num_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        match kind {
            OperatorKind::Hermitian => {
                let defect = hermiticity_defect(&matrix);
                if defect > tol.hermitian {
                    return Err(Error::Numerical(format!(
                        "operator not Hermitian (defect {defect:e})"
                    )));
                }
            }
            OperatorKind::Unitary => {
                let defect = unitarity_defect(&matrix);
                if defect > tol.unitary {
                    return Err(Error::Numerical(format!(
                        "operator not unitary (defect {defect:e})"
                    )));
                }
            }
            OperatorKind::General => {}
        }
        Ok(Operator {
            num_qubits,
            matrix,
            kind,
        })
    }

    pub(crate) fn from_matrix_unchecked(
        num_qubits: usize,
        matrix: DMatrix<C64>,
        kind: OperatorKind,
    ) -> Self {
        Operator {
            num_qubits,
            matrix,
            kind,
        }
    }

    pub fn identity(num_qubits: usize) -> Result<Self> {
        check_cap("operator", num_qubits, MAX_QUBITS)?;
        let dim = 1 << num_qubits;
        Ok(Operator::from_matrix_unchecked(
            num_qubits,
            DMatrix::identity(dim, dim),
            OperatorKind::Unitary,
        ))
    }

    pub fn random_hermitian<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Self {
        let dim = 1 << num_qubits;
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        Operator::from_matrix_unchecked(num_qubits, h, OperatorKind::Hermitian)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Operator {
        Operator::from_matrix_unchecked(self.num_qubits, self.matrix.adjoint(), self.kind)
    }

    /// Operator product `self · rhs`.
    pub fn compose(&self, rhs: &Operator) -> Result<Operator> {
        if self.num_qubits != rhs.num_qubits {
            return Err(Error::Dimension {
                expected: self.num_qubits,
                actual: rhs.num_qubits,
            });
        }
        let kind = if self.kind == OperatorKind::Unitary && rhs.kind == OperatorKind::Unitary {
            OperatorKind::Unitary
        } else {
            OperatorKind::General
        };
        Ok(Operator::from_matrix_unchecked(
            self.num_qubits,
            &self.matrix * &rhs.matrix,
            kind,
        ))
    }

    pub fn apply(&self, state: &PureState) -> Result<DVector<C64>> {
        if state.num_qubits != self.num_qubits {
            return Err(Error::Dimension {
                expected: self.num_qubits,
                actual: state.num_qubits,
            });
        }
        Ok(&self.matrix * &state.amplitudes)
    }

    /// Applies a unitary operator and returns the resulting state.
    pub fn evolve(&self, state: &PureState) -> Result<PureState> {
        if self.kind != OperatorKind::Unitary {
            return Err(Error::arg("evolve requires a unitary operator"));
        }
        let v = self.apply(state)?;
        Ok(PureState::from_vector_unchecked(self.num_qubits, v))
    }

    pub fn norm(&self) -> f64 {
        operator_norm(self)
    }

    pub fn to_text(&self) -> String {
        matrix_to_text(self.num_qubits, &self.matrix)
    }

    pub fn from_text(text: &str, kind: OperatorKind) -> Result<Self> {
        let (n, m) = matrix_from_text(text)?;
        Operator::new(n, m, kind)
    }
}

/// `a ⊗ b` with `a` on the leading qubits.
pub trait TensorProduct: Sized {
    fn tensor(&self, rhs: &Self) -> Result<Self>;
}

impl TensorProduct for PureState {
    fn tensor(&self, rhs: &Self) -> Result<Self> {
        let n = self.num_qubits + rhs.num_qubits;
        check_cap("tensor product", n, MAX_QUBITS)?;
        Ok(PureState::from_vector_unchecked(
            n,
            self.amplitudes.kronecker(&rhs.amplitudes),
        ))
    }
}

impl TensorProduct for DensityMatrix {
    fn tensor(&self, rhs: &Self) -> Result<Self> {
        let n = self.num_qubits + rhs.num_qubits;
        check_cap("tensor product", n, MAX_QUBITS)?;
        Ok(DensityMatrix::from_matrix_unchecked(
            n,
            self.matrix.kronecker(&rhs.matrix),
        ))
    }
}

impl TensorProduct for Operator {
    fn tensor(&self, rhs: &Self) -> Result<Self> {
        let n = self.num_qubits + rhs.num_qubits;
        check_cap("tensor product", n, MAX_QUBITS)?;
        let kind = if self.kind == rhs.kind {
            self.kind
        } else {
            OperatorKind::General
        };
        Ok(Operator::from_matrix_unchecked(
            n,
            self.matrix.kronecker(&rhs.matrix),
            kind,
        ))
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

/// Reduced state on the qubits in `keep`, ordered by ascending index.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::arg("partial trace needs at least one kept qubit"));
    }
    let n = rho.num_qubits;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&q) = kept.iter().find(|&&q| q >= n) {
        return Err(Error::arg(format!("qubit {q} out of range for {n} qubits")));
    }
    if kept.len() == n {
        return Ok(rho.clone());
    }
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    let kept_offsets = offsets(&kept, n);
    let traced_offsets = offsets(&traced, n);
    let dk = kept_offsets.len();
    let m = &rho.matrix;
    let mut out = DMatrix::zeros(dk, dk);
    for b in 0..dk {
        for a in 0..dk {
            let mut acc = ZERO;
            for &e in &traced_offsets {
                acc += m[(kept_offsets[a] | e, kept_offsets[b] | e)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(kept.len(), out))
}

/// `tr(ρA)` for Hermitian `A`.
pub fn expectation(rho: &DensityMatrix, a: &Operator) -> Result<f64> {
    expectation_with(rho, a, &Tolerances::default())
}

pub fn expectation_with(rho: &DensityMatrix, a: &Operator, tol: &Tolerances) -> Result<f64> {
    if rho.dim() != a.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: rho.dim(),
        });
    }
    if a.kind != OperatorKind::Hermitian {
        let defect = hermiticity_defect(&a.matrix);
        if defect > tol.hermitian {
            return Err(Error::arg("expectation requires a Hermitian operator"));
        }
    }
    trace_product(&rho.matrix, &a.matrix, tol)
}

/// `Σ_ij ρ_ij A_ji` with the imaginary residue checked.
pub(crate) fn trace_product(rho: &DMatrix<C64>, a: &DMatrix<C64>, tol: &Tolerances) -> Result<f64> {
    let dim = rho.nrows();
    let mut acc = ZERO;
    for i in 0..dim {
        for j in 0..dim {
            acc += rho[(i, j)] * a[(j, i)];
        }
    }
    if acc.im.abs() > tol.imag_residue {
        return Err(Error::Numerical(format!(
            "expectation has imaginary residue {:e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// faer's self-adjoint eigensolver pinned to QR iteration at every size.
fn self_adjoint_qr<T: faer::traits::ComplexField>(
    a: faer::MatRef<'_, T>,
    vectors: bool,
) -> (faer::diag::Diag<T>, Option<faer::Mat<T>>) {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::evd::{self, ComputeEigenvectors, SelfAdjointEvdParams};

    let n = a.nrows();
    let mut params = faer::Spec::<SelfAdjointEvdParams, T>::new(faer::Auto::<T>::auto());
    params.recursion_threshold = usize::MAX;
    let compute = if vectors {
        ComputeEigenvectors::Yes
    } else {
        ComputeEigenvectors::No
    };
    let par = faer::get_global_parallelism();
    let mut s = faer::diag::Diag::<T>::zeros(n);
    let mut u = vectors.then(|| faer::Mat::<T>::zeros(n, n));
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<T>(n, compute, par, params));
    evd::self_adjoint_evd(
        a,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut buf),
        params,
    )
    .expect("self-adjoint eigendecomposition of a finite matrix");
    (s, u)
}

fn to_faer(m: &DMatrix<C64>) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        faer::c64::new(z.re, z.im)
    })
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (as columns) of a
/// Hermitian matrix. Only the lower triangle is read.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let (s, u) = self_adjoint_qr(to_faer(m).as_ref(), true);
    let u = u.expect("vectors requested");
    let values = (0..n).map(|j| s[j].re).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| {
        let z = u[(i, j)];
        C64::new(z.re, z.im)
    });
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let (s, _) = self_adjoint_qr(to_faer(m).as_ref(), false);
    let mut v: Vec<f64> = (0..m.nrows()).map(|j| s[j].re).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Real symmetric counterpart of [`hermitian_eigen`].
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let (s, u) = self_adjoint_qr(fm.as_ref(), true);
    let u = u.expect("vectors requested");
    (
        (0..n).map(|j| s[j]).collect(),
        DMatrix::from_fn(n, n, |i, j| u[(i, j)]),
    )
}

/// Largest singular value.
pub fn operator_norm(a: &Operator) -> f64 {
    if a.kind == OperatorKind::Hermitian {
        return hermitian_eigenvalues(&a.matrix)
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()));
    }
    a.matrix
        .clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Full-register index offsets of every basis state of the sub-register `qubits`
/// (given in the order their bits should appear in the local index).
pub(crate) fn offsets(qubits: &[usize], n: usize) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|local| {
            qubits.iter().enumerate().fold(0usize, |acc, (i, &q)| {
                let bit = (local >> (k - 1 - i)) & 1;
                acc | (bit << (n - 1 - q))
            })
        })
        .collect()
}

pub(crate) fn support_mask(qubits: &[usize], n: usize) -> usize {
    qubits.iter().fold(0, |acc, &q| acc | (1 << (n - 1 - q)))
}

/// Applies a local operator in place to a state vector of `n` qubits.
pub(crate) fn apply_local(vec: &mut [C64], n: usize, op: &DMatrix<C64>, support: &[usize]) {
    let offs = offsets(support, n);
    let mask = support_mask(support, n);
    let k = offs.len();
    let mut buf = vec![ZERO; k];
    for base in 0..vec.len() {
        if base & mask != 0 {
            continue;
        }
        for (slot, &o) in buf.iter_mut().zip(&offs) {
            *slot = vec[base | o];
        }
        for (a, &oa) in offs.iter().enumerate() {
            let mut acc = ZERO;
            for (b, x) in buf.iter().enumerate() {
                acc += op[(a, b)] * x;
            }
            vec[base | oa] = acc;
        }
    }
}

/// `out += weight · (op embedded on support) · input`.
pub(crate) fn add_local_matvec(
    out: &mut [C64],
    input: &[C64],
    n: usize,
    weight: f64,
    op: &DMatrix<C64>,
    support: &[usize],
) {
    let offs = offsets(support, n);
    let mask = support_mask(support, n);
    let w = C64::new(weight, 0.0);
    for base in 0..input.len() {
        if base & mask != 0 {
            continue;
        }
        for (a, &oa) in offs.iter().enumerate() {
            let mut acc = ZERO;
            for (b, &ob) in offs.iter().enumerate() {
                acc += op[(a, b)] * input[base | ob];
            }
            out[base | oa] += w * acc;
        }
    }
}

/// `target += weight · (op embedded on support)`.
pub(crate) fn add_local_dense(
    target: &mut DMatrix<C64>,
    n: usize,
    weight: f64,
    op: &DMatrix<C64>,
    support: &[usize],
) {
    let offs = offsets(support, n);
    let mask = support_mask(support, n);
    let w = C64::new(weight, 0.0);
    for base in 0..target.nrows() {
        if base & mask != 0 {
            continue;
        }
        for (b, &ob) in offs.iter().enumerate() {
            for (a, &oa) in offs.iter().enumerate() {
                let v = op[(a, b)];
                if v != ZERO {
                    target[(base | oa, base | ob)] += w * v;
                }
            }
        }
    }
}

/// `M ↦ U M U†` for a local `U`, applied column by column.
pub(crate) fn conjugate_local(m: &mut DMatrix<C64>, n: usize, u: &DMatrix<C64>, support: &[usize]) {
    let dim = m.nrows();
    for col in m.as_mut_slice().chunks_mut(dim) {
        apply_local(col, n, u, support);
    }
    m.adjoint_mut();
    for col in m.as_mut_slice().chunks_mut(dim) {
        apply_local(col, n, u, support);
    }
    m.adjoint_mut();
}

/// Reorders a local operator given on `support` (arbitrary order) so that it acts on
/// the same qubits listed in ascending order. Returns the sorted support.
pub(crate) fn sort_support(op: &DMatrix<C64>, support: &[usize]) -> (DMatrix<C64>, Vec<usize>) {
    let k = support.len();
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    if sorted == support {
        return (op.clone(), sorted);
    }
    // position of each original qubit in the sorted order
    let pos: Vec<usize> = support
        .iter()
        .map(|q| sorted.iter().position(|s| s == q).unwrap())
        .collect();
    let remap = |local: usize| -> usize {
        (0..k).fold(0, |acc, i| {
            let bit = (local >> (k - 1 - i)) & 1;
            acc | (bit << (k - 1 - pos[i]))
        })
    };
    let dim = 1 << k;
    let mut out = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            out[(remap(a), remap(b))] = op[(a, b)];
        }
    }
    (out, sorted)
}

// ---------------------------------------------------------------------------
// text format: `qubits N` then one `re im` pair per line, row-major

/// Round-trip float formatting used by every text output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn push_complex(out: &mut String, z: C64) {
    let _ = writeln!(out, "{} {}", fmt_f64(z.re), fmt_f64(z.im));
}

pub(crate) fn push_matrix_entries(out: &mut String, m: &DMatrix<C64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            push_complex(out, m[(i, j)]);
        }
    }
}

pub fn matrix_to_text(num_qubits: usize, m: &DMatrix<C64>) -> String {
    let mut out = format!("qubits {num_qubits}\n");
    push_matrix_entries(&mut out, m);
    out
}

pub fn matrix_from_text(text: &str) -> Result<(usize, DMatrix<C64>)> {
    let (n, values, first_line) = read_entries(text)?;
    let dim = 1usize << n;
    if values.len() != dim * dim {
        return Err(Error::parse(
            first_line,
            format!(
                "expected {} matrix entries, found {}",
                dim * dim,
                values.len()
            ),
        ));
    }
    Ok((n, DMatrix::from_row_slice(dim, dim, &values)))
}

/// Content lines with their 1-based line numbers, comments and blanks removed.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub(crate) fn parse_complex(line_no: usize, line: &str) -> Result<C64> {
    let mut it = line.split_whitespace();
    let (re, im) = match (it.next(), it.next(), it.next()) {
        (Some(re), Some(im), None) => (re, im),
        _ => return Err(Error::parse(line_no, "expected `re im`")),
    };
    let re: f64 = re
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad number '{re}'")))?;
    let im: f64 = im
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad number '{im}'")))?;
    Ok(C64::new(re, im))
}

fn read_entries(text: &str) -> Result<(usize, Vec<C64>, usize)> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing `qubits N` header"))?;
    let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["qubits", n] => n
            .parse::<usize>()
            .map_err(|_| Error::parse(line_no, format!("bad qubit count '{n}'")))?,
        _ => return Err(Error::parse(line_no, "missing `qubits N` header")),
    };
    check_cap("text object", n, MAX_QUBITS)?;
    let values = lines
        .map(|(no, line)| parse_complex(no, line))
        .collect::<Result<Vec<_>>>()?;
    Ok((n, values, line_no))
}
