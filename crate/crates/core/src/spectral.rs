//! Assembly of local Hamiltonians and their low-lying spectra.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::circuit::Circuit;
use crate::clockham::{self, LocalHamiltonian, TermPart};
use crate::error::{Error, Result};
use crate::qcore::{self, check_cap, fmt_f64, PureState, Tolerances, C64, ZERO};

pub const DENSE_QUBIT_CAP: usize = 12;
pub const SPARSE_QUBIT_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Dense,
    Sparse,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Builds from triplets; duplicates are summed in input order.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn matvec(&self, v: &[C64], out: &mut [C64]) {
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for row in 0..self.dim {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                m[(row, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssembledMatrix {
    Dense(DMatrix<C64>),
    Sparse(SparseMatrix),
}

impl AssembledMatrix {
    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            AssembledMatrix::Dense(m) => m.clone(),
            AssembledMatrix::Sparse(s) => s.to_dense(),
        }
    }
}

pub fn assemble(h: &LocalHamiltonian, representation: Representation) -> Result<AssembledMatrix> {
    Ok(match representation {
        Representation::Dense => AssembledMatrix::Dense(assemble_dense(h)?),
        Representation::Sparse => AssembledMatrix::Sparse(assemble_sparse(h)?),
    })
}

/// `Σ_j w_j · term_j ⊗ I`, summed in term order.
pub fn assemble_dense(h: &LocalHamiltonian) -> Result<DMatrix<C64>> {
    let n = h.num_qubits();
    check_cap("dense assembly", n, DENSE_QUBIT_CAP)?;
    let mut m = DMatrix::zeros(1 << n, 1 << n);
    for t in h.terms() {
        qcore::add_local_dense(&mut m, n, t.weight(), t.matrix(), t.support());
    }
    Ok(m)
}

pub fn assemble_sparse(h: &LocalHamiltonian) -> Result<SparseMatrix> {
    let n = h.num_qubits();
    check_cap("sparse assembly", n, SPARSE_QUBIT_CAP)?;
    let dim = 1usize << n;
    let mut triplets = Vec::new();
    for t in h.terms() {
        let offs = qcore::offsets(t.support(), n);
        let mask = qcore::support_mask(t.support(), n);
        let w = C64::new(t.weight(), 0.0);
        for base in (0..dim).filter(|b| b & mask == 0) {
            for (a, &oa) in offs.iter().enumerate() {
                for (b, &ob) in offs.iter().enumerate() {
                    let v = t.matrix()[(a, b)];
                    if v != ZERO {
                        triplets.push((base | oa, base | ob, w * v));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(dim, triplets))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dense,
    Iterative,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dense => "dense",
            Method::Iterative => "iterative",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Method::Dense),
            "iterative" | "sparse" | "lanczos" => Ok(Method::Iterative),
            other => Err(format!("unknown method '{other}' (dense|iterative)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// How many of the lowest eigenvalues to report.
    pub num_eigenvalues: usize,
    pub seed: u64,
    /// Krylov dimension per restart.
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tolerances: Tolerances,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Dense,
            num_eigenvalues: 1,
            seed: 0,
            krylov_dim: 200,
            max_restarts: 50,
            tolerances: Tolerances::default(),
        }
    }
}

impl SolverConfig {
    pub fn iterative(seed: u64) -> Self {
        SolverConfig {
            method: Method::Iterative,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub min_eigenvalue: f64,
    /// Lowest eigenvalues, ascending. The iterative path resolves each
    /// eigenvalue once regardless of degeneracy.
    pub spectrum: Vec<f64>,
    pub ground_state: PureState,
    pub method: Method,
    /// `‖H v − λ_min v‖`.
    pub residual: f64,
    pub seed: u64,
}

impl SpectralReport {
    pub fn to_text(&self) -> String {
        let spectrum: Vec<String> = self.spectrum.iter().map(|&e| fmt_f64(e)).collect();
        format!(
            "lambda_min {}\nspectrum {}\nmethod {}\nresidual {}\nseed {}\n",
            fmt_f64(self.min_eigenvalue),
            spectrum.join(" "),
            self.method,
            fmt_f64(self.residual),
            self.seed
        )
    }
}

fn residual_norm(h: &LocalHamiltonian, v: &[C64], lambda: f64) -> f64 {
    let hv = h.apply(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - b * lambda).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn min_eigenvalue(h: &LocalHamiltonian, cfg: &SolverConfig) -> Result<SpectralReport> {
    match cfg.method {
        Method::Dense => dense_min_eigenvalue(h, cfg),
        Method::Iterative => lanczos_min_eigenvalue(h, cfg),
    }
}

/// Full eigendecomposition of the assembled matrix: eigenvalues ascending and
/// the matching eigenvectors as columns.
pub fn dense_eigen(h: &LocalHamiltonian) -> Result<(Vec<f64>, DMatrix<C64>)> {
    Ok(qcore::hermitian_eigen(&assemble_dense(h)?))
}

fn dense_min_eigenvalue(h: &LocalHamiltonian, cfg: &SolverConfig) -> Result<SpectralReport> {
    let (values, vectors) = dense_eigen(h)?;
    let ground: DVector<C64> = vectors.column(0).into_owned();
    let lambda = values[0];
    let residual = residual_norm(h, ground.as_slice(), lambda);
    let k = cfg.num_eigenvalues.clamp(1, values.len());
    Ok(SpectralReport {
        min_eigenvalue: lambda,
        spectrum: values[..k].to_vec(),
        ground_state: PureState::normalized(h.num_qubits(), ground.data.into())?,
        method: Method::Dense,
        residual,
        seed: cfg.seed,
    })
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted Lanczos with full reorthogonalization and a matrix-free matvec.
fn lanczos_min_eigenvalue(h: &LocalHamiltonian, cfg: &SolverConfig) -> Result<SpectralReport> {
    let n = h.num_qubits();
    check_cap("iterative solver", n, SPARSE_QUBIT_CAP)?;
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut start: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let m_max = cfg.krylov_dim.clamp(2, dim);
    let tol = cfg.tolerances.residual;
    let mut best: Option<(f64, f64, Vec<C64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut w = vec![ZERO; dim];

    for _ in 0..=cfg.max_restarts {
        let s = norm(&start);
        let mut basis: Vec<Vec<C64>> = vec![start.iter().map(|x| x / s).collect()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..m_max {
            h.apply_into(&basis[j], &mut w);
            iterations += 1;
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // two passes of Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
            }
            let b = norm(&w);
            if j + 1 == m_max || b <= 1e-12 * a.abs().max(1.0) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }

        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let (ritz_values, s) = qcore::symmetric_eigen(&t);
        let theta = ritz_values[0];
        let mut ritz = vec![ZERO; dim];
        for (k, q) in basis.iter().take(m).enumerate() {
            let coeff = s[(k, 0)];
            for (r, qi) in ritz.iter_mut().zip(q) {
                *r += qi * coeff;
            }
        }
        let rn = norm(&ritz);
        ritz.iter_mut().for_each(|x| *x /= rn);
        let residual = residual_norm(h, &ritz, theta);
        if best.as_ref().is_none_or(|b| residual < b.1) {
            best = Some((theta, residual, ritz.clone(), ritz_values));
        }
        if residual <= tol {
            break;
        }
        start = ritz;
    }

    let (lambda, residual, ground, ritz_values) = best.expect("at least one Lanczos pass");
    if residual > tol {
        return Err(Error::Convergence {
            iterations,
            best_residual: residual,
        });
    }
    let k = cfg.num_eigenvalues.clamp(1, ritz_values.len());
    Ok(SpectralReport {
        min_eigenvalue: lambda,
        spectrum: ritz_values[..k].to_vec(),
        ground_state: PureState::normalized(n, ground)?,
        method: Method::Iterative,
        residual,
        seed: cfg.seed,
    })
}

/// `1 − cos(πk/(L+1))` for `k = 0..=L`: the spectrum of the propagation walk.
pub fn propagation_spectrum(l: usize) -> Result<Vec<f64>> {
    if l < 1 {
        return Err(Error::arg("clock length must be at least 1"));
    }
    Ok((0..=l)
        .map(|k| 1.0 - (std::f64::consts::PI * k as f64 / (l as f64 + 1.0)).cos())
        .collect())
}

/// Eigenvalues of `W†(H_prop + H_clock)W` restricted to the legal clock
/// subspace, ascending with multiplicity. On that subspace the operator is
/// `I_work ⊗ E` with `E` the clock walk, so each value repeats `2^(n+m)` times.
pub fn conjugated_propagation_spectrum(
    c: &Circuit,
    clock_penalty: Option<f64>,
) -> Result<Vec<f64>> {
    let h = clockham::compile(c, clock_penalty)?.restricted(&[
        TermPart::PropProjector,
        TermPart::PropHopping,
        TermPart::Clock,
    ]);
    let mut m = assemble_dense(&h)?;
    clockham::conjugate_w_matrix(c, &mut m, true)?;
    let legal = clockham::legal_indices(c);
    let block = DMatrix::from_fn(legal.len(), legal.len(), |i, j| m[(legal[i], legal[j])]);
    Ok(qcore::hermitian_eigenvalues(&block))
}

/// Energy thresholds `a < d < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromiseGap {
    pub a: f64,
    pub d: f64,
    pub b: f64,
}

impl PromiseGap {
    pub fn new(a: f64, d: f64, b: f64) -> Result<Self> {
        if !(b > d && d > a) {
            return Err(Error::arg(format!(
                "promise gap needs b > d > a, got ({a}, {d}, {b})"
            )));
        }
        Ok(PromiseGap { a, d, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromiseVerdict {
    /// Some eigenvalue is at most `a`.
    Low,
    /// Every eigenvalue is at least `b`.
    High,
    /// The ground energy lies strictly between `a` and `b`.
    Violated,
}

impl fmt::Display for PromiseVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromiseVerdict::Low => "low",
            PromiseVerdict::High => "high",
            PromiseVerdict::Violated => "violated",
        })
    }
}

pub fn classify(lambda_min: f64, gap: &PromiseGap) -> PromiseVerdict {
    if lambda_min <= gap.a {
        PromiseVerdict::Low
    } else if lambda_min >= gap.b {
        PromiseVerdict::High
    } else {
        PromiseVerdict::Violated
    }
}

pub fn check_promise(
    h: &LocalHamiltonian,
    gap: &PromiseGap,
    cfg: &SolverConfig,
) -> Result<(PromiseVerdict, SpectralReport)> {
    let report = min_eigenvalue(h, cfg)?;
    Ok((classify(report.min_eigenvalue, gap), report))
}
