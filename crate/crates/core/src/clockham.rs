//! Circuit-to-Hamiltonian compilation with a unary clock.
//!
//! For a circuit `U_L ⋯ U_1` on `n` input and `m` ancilla qubits we add `L` clock
//! qubits and build
//!
//! ```text
//! H = H_in + H_out + H_prop + H_clock
//! ```
//!
//! over `input ⊗ ancilla ⊗ clock`. Legal clock states are `|t̂⟩ = |1^t 0^(L-t)⟩`.
//! Clock qubit `t` (numbered from 1) lives at layout index `n + m + t - 1`.
//!
//! Every term is stored with a positive weight and a matrix of norm at most one.
//! The hopping term of the propagation part is 3-local and not positive on its own;
//! the clock penalty is what keeps the low spectrum inside the legal subspace.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::qcore::{
    self, check_cap, fmt_f64, DensityMatrix, Operator, OperatorKind, PureState, RegisterLayout,
    C64, MAX_QUBITS, ONE, ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermPart {
    In,
    Out,
    PropProjector,
    PropHopping,
    Clock,
    /// A term of a Hamiltonian that did not come from a circuit.
    Local,
}

impl TermPart {
    pub const ALL: [TermPart; 6] = [
        TermPart::In,
        TermPart::Out,
        TermPart::PropProjector,
        TermPart::PropHopping,
        TermPart::Clock,
        TermPart::Local,
    ];

    pub fn is_propagation(self) -> bool {
        matches!(self, TermPart::PropProjector | TermPart::PropHopping)
    }
}

impl fmt::Display for TermPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermPart::In => "in",
            TermPart::Out => "out",
            TermPart::PropProjector => "prop_projector",
            TermPart::PropHopping => "prop_hopping",
            TermPart::Clock => "clock",
            TermPart::Local => "local",
        })
    }
}

impl FromStr for TermPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        TermPart::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown term part '{s}'"))
    }
}

const TERM_TOL: f64 = 1e-12;

/// `weight · matrix` acting on the sorted qubits `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    part: TermPart,
    weight: f64,
    support: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl LocalTerm {
    pub fn new(
        part: TermPart,
        weight: f64,
        support: Vec<usize>,
        matrix: DMatrix<C64>,
    ) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::arg(format!(
                "term weight must be positive, got {weight}"
            )));
        }
        if support.is_empty() || support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg(format!(
                "term support must be nonempty, sorted and distinct: {support:?}"
            )));
        }
        check_cap("local term", support.len(), MAX_QUBITS)?;
        let dim = 1 << support.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: matrix.nrows(),
            });
        }
        if qcore::hermiticity_defect(&matrix) > TERM_TOL {
            return Err(Error::Numerical(format!("{part} term is not Hermitian")));
        }
        let eig = qcore::hermitian_eigenvalues(&matrix);
        let norm = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if norm > 1.0 + TERM_TOL {
            return Err(Error::Numerical(format!(
                "{part} term has norm {norm}; put the scale in the weight"
            )));
        }
        if !matches!(part, TermPart::PropHopping | TermPart::Local) {
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -TERM_TOL {
                return Err(Error::Numerical(format!(
                    "{part} term is not positive semidefinite"
                )));
            }
        }
        Ok(LocalTerm {
            part,
            weight,
            support,
            matrix,
        })
    }

    pub fn part(&self) -> TermPart {
        self.part
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn locality(&self) -> usize {
        self.support.len()
    }
}

/// A weighted sum of local terms over a fixed register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalHamiltonian {
    layout: RegisterLayout,
    terms: Vec<LocalTerm>,
}

impl LocalHamiltonian {
    pub fn new(layout: RegisterLayout, terms: Vec<LocalTerm>) -> Result<Self> {
        let n = layout.total();
        check_cap("hamiltonian", n, MAX_QUBITS)?;
        if n == 0 {
            return Err(Error::arg("hamiltonian needs at least one qubit"));
        }
        for t in &terms {
            if let Some(&q) = t.support.iter().find(|&&q| q >= n) {
                return Err(Error::arg(format!("term on qubit {q}, register has {n}")));
            }
        }
        Ok(LocalHamiltonian { layout, terms })
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.total()
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits()
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<LocalTerm> {
        self.terms
    }

    /// `Σ weight_j`, the normalization of the sampling verifier.
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn locality(&self) -> usize {
        self.terms.iter().map(|t| t.locality()).max().unwrap_or(0)
    }

    pub fn count(&self, part: TermPart) -> usize {
        self.terms.iter().filter(|t| t.part == part).count()
    }

    /// Only the terms whose part is in `parts`.
    pub fn restricted(&self, parts: &[TermPart]) -> LocalHamiltonian {
        LocalHamiltonian {
            layout: self.layout,
            terms: self
                .terms
                .iter()
                .filter(|t| parts.contains(&t.part))
                .cloned()
                .collect(),
        }
    }

    /// Matrix-free `H v`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; v.len()];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        debug_assert_eq!(v.len(), self.dim());
        out.iter_mut().for_each(|x| *x = ZERO);
        let n = self.num_qubits();
        for t in &self.terms {
            qcore::add_local_matvec(out, v, n, t.weight, &t.matrix, &t.support);
        }
    }

    /// `⟨ψ|H|ψ⟩`.
    pub fn energy(&self, psi: &PureState) -> Result<f64> {
        if psi.num_qubits() != self.num_qubits() {
            return Err(Error::Dimension {
                expected: self.num_qubits(),
                actual: psi.num_qubits(),
            });
        }
        let hv = self.apply(psi.amplitudes().as_slice());
        let e: C64 = psi
            .amplitudes()
            .iter()
            .zip(&hv)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(e.re)
    }

    /// `tr(ρ H)`, computed column by column without assembling `H`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.num_qubits() != self.num_qubits() {
            return Err(Error::Dimension {
                expected: self.num_qubits(),
                actual: rho.num_qubits(),
            });
        }
        let dim = self.dim();
        let mut h_col = vec![ZERO; dim];
        let mut acc = ZERO;
        for (j, rho_col) in rho.matrix().as_slice().chunks(dim).enumerate() {
            self.apply_into(rho_col, &mut h_col);
            acc += h_col[j];
        }
        Ok(acc.re)
    }

    pub fn to_text(&self) -> String {
        let l = self.layout;
        let mut out = format!(
            "qubits {}\nlayout {} {} {}\n",
            l.total(),
            l.n_input,
            l.n_ancilla,
            l.n_clock
        );
        for t in &self.terms {
            let qs: Vec<String> = t.support.iter().map(|q| q.to_string()).collect();
            out.push_str(&format!(
                "term {} {} {} {}\n",
                t.part,
                fmt_f64(t.weight),
                t.support.len(),
                qs.join(" ")
            ));
            qcore::push_matrix_entries(&mut out, &t.matrix);
        }
        out
    }

    pub fn parse(text: &str) -> Result<LocalHamiltonian> {
        let mut lines = qcore::content_lines(text);
        let (line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing `qubits N` header"))?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["qubits", n] => n
                .parse()
                .map_err(|_| Error::parse(line, format!("bad qubit count '{n}'")))?,
            _ => return Err(Error::parse(line, "missing `qubits N` header")),
        };
        let (line, layout_line) = lines
            .next()
            .ok_or_else(|| Error::parse(line, "missing `layout n m L` line"))?;
        let layout = match layout_line.split_whitespace().collect::<Vec<_>>()[..] {
            ["layout", a, b, c] => {
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(line, format!("bad layout count '{s}'")))
                };
                RegisterLayout::new(p(a)?, p(b)?, p(c)?)
            }
            _ => return Err(Error::parse(line, "expected `layout n m L`")),
        };
        if layout.total() != n {
            return Err(Error::parse(
                line,
                "layout does not add up to the qubit count",
            ));
        }
        let mut terms = Vec::new();
        while let Some((line, head)) = lines.next() {
            let f: Vec<&str> = head.split_whitespace().collect();
            if f.len() < 4 || f[0] != "term" {
                return Err(Error::parse(
                    line,
                    "expected `term <part> <weight> <k> <q...>`",
                ));
            }
            let part: TermPart = f[1].parse().map_err(|e| Error::parse(line, e))?;
            let weight: f64 = f[2]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad weight '{}'", f[2])))?;
            let k: usize = f[3]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad locality '{}'", f[3])))?;
            if f.len() != 4 + k {
                return Err(Error::parse(line, format!("expected {k} qubit indices")));
            }
            check_cap("local term", k, MAX_QUBITS)?;
            let support = f[4..]
                .iter()
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(line, format!("bad qubit '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            let dim = 1usize << k;
            let mut entries = Vec::with_capacity(dim * dim);
            for _ in 0..dim * dim {
                let (no, e) = lines.next().ok_or_else(|| {
                    Error::parse(line, format!("term needs {} matrix lines", dim * dim))
                })?;
                entries.push(qcore::parse_complex(no, e)?);
            }
            let term = LocalTerm::new(
                part,
                weight,
                support,
                DMatrix::from_row_slice(dim, dim, &entries),
            )
            .map_err(|e| Error::parse(line, e.to_string()))?;
            terms.push(term);
        }
        LocalHamiltonian::new(layout, terms).map_err(|e| Error::parse(1, e.to_string()))
    }
}

/// `1^t 0^(L-t)`, clock qubit 1 first.
pub fn unary_encode(t: usize, l: usize) -> Result<Vec<bool>> {
    if t > l {
        return Err(Error::arg(format!("clock time {t} exceeds length {l}")));
    }
    Ok((0..l).map(|i| i < t).collect())
}

/// A legal clock configuration `|t̂⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockState {
    t: usize,
    len: usize,
}

impl ClockState {
    pub fn new(t: usize, len: usize) -> Result<Self> {
        if t > len {
            return Err(Error::arg(format!("clock time {t} exceeds length {len}")));
        }
        Ok(ClockState { t, len })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| i < self.t).collect()
    }

    /// Basis index within the clock register.
    pub fn index(&self) -> usize {
        ((1usize << self.t) - 1) << (self.len - self.t)
    }
}

fn proj(diag: &[f64]) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        diag.len(),
        diag.iter().map(|&d| C64::new(d, 0.0)),
    ))
}

fn ket_bra(a: usize, b: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(2, 2);
    m[(a, b)] = ONE;
    m
}

/// Penalty weight used when none is given: `L^12`.
pub fn default_clock_penalty(l: usize) -> f64 {
    (l as f64).powi(12)
}

/// Compiles `c` into its clock Hamiltonian. `clock_penalty` defaults to `L^12`.
pub fn compile(c: &Circuit, clock_penalty: Option<f64>) -> Result<LocalHamiltonian> {
    let l = c.len();
    if l < 1 {
        return Err(Error::arg("circuit must have at least one gate"));
    }
    let layout = c.layout().with_clock(l);
    check_cap("compiled hamiltonian", layout.total(), MAX_QUBITS)?;
    let penalty = clock_penalty.unwrap_or_else(|| default_clock_penalty(l));
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::arg(format!(
            "clock penalty must be positive, got {penalty}"
        )));
    }
    let clk = |t: usize| layout.clock_index(t);
    let p01 = proj(&[0.0, 1.0, 0.0, 0.0]);
    let p10 = proj(&[0.0, 0.0, 1.0, 0.0]);
    let mut terms = Vec::new();

    for i in 1..=l {
        for j in i + 1..=l {
            terms.push(LocalTerm::new(
                TermPart::Clock,
                penalty,
                vec![clk(i), clk(j)],
                p01.clone(),
            )?);
        }
    }

    for a in layout.ancilla_qubits() {
        terms.push(LocalTerm::new(
            TermPart::In,
            1.0,
            vec![a, clk(1)],
            p10.clone(),
        )?);
    }

    terms.push(LocalTerm::new(
        TermPart::Out,
        1.0,
        vec![c.accept_qubit(), clk(l)],
        p01.clone(),
    )?);

    for (idx, gate) in c.gates().iter().enumerate() {
        let t = idx + 1;
        // clock reads t
        let upper = if t < l {
            (vec![clk(t), clk(t + 1)], p10.clone())
        } else {
            (vec![clk(l)], proj(&[0.0, 1.0]))
        };
        // clock reads t - 1
        let lower = if t > 1 {
            (vec![clk(t - 1), clk(t)], p10.clone())
        } else {
            (vec![clk(1)], proj(&[1.0, 0.0]))
        };
        terms.push(LocalTerm::new(
            TermPart::PropProjector,
            0.5,
            upper.0,
            upper.1,
        )?);
        terms.push(LocalTerm::new(
            TermPart::PropProjector,
            0.5,
            lower.0,
            lower.1,
        )?);

        let u = gate.matrix();
        let hop = -(u.kronecker(&ket_bra(1, 0)) + u.adjoint().kronecker(&ket_bra(0, 1)));
        let mut support = gate.targets().to_vec();
        support.push(clk(t));
        let (hop, support) = qcore::sort_support(&hop, &support);
        terms.push(LocalTerm::new(TermPart::PropHopping, 0.5, support, hop)?);
    }

    LocalHamiltonian::new(layout, terms)
}

/// Controlled-`U_t` on `(targets, clock t)`, or its inverse.
fn controlled_gate(c: &Circuit, t: usize, inverse: bool) -> (DMatrix<C64>, Vec<usize>) {
    let gate = &c.gates()[t - 1];
    let u = if inverse {
        gate.matrix().adjoint()
    } else {
        gate.matrix().clone()
    };
    let id = DMatrix::<C64>::identity(u.nrows(), u.nrows());
    let m = u.kronecker(&ket_bra(1, 1)) + id.kronecker(&ket_bra(0, 0));
    let mut support = gate.targets().to_vec();
    support.push(c.layout().with_clock(c.len()).clock_index(t));
    qcore::sort_support(&m, &support)
}

fn compiled_qubits(c: &Circuit) -> usize {
    c.work_qubits() + c.len()
}

/// Applies `W` (or `W†`) in place to a vector on the compiled register.
pub fn apply_w(c: &Circuit, v: &mut [C64], adjoint: bool) -> Result<()> {
    let n = compiled_qubits(c);
    if v.len() != 1 << n {
        return Err(Error::Dimension {
            expected: 1 << n,
            actual: v.len(),
        });
    }
    let order: Vec<usize> = if adjoint {
        (1..=c.len()).rev().collect()
    } else {
        (1..=c.len()).collect()
    };
    for t in order {
        let (m, support) = controlled_gate(c, t, adjoint);
        qcore::apply_local(v, n, &m, &support);
    }
    Ok(())
}

/// `W ρ W†` (or `W† ρ W` when `adjoint`).
pub fn conjugate_w(c: &Circuit, rho: &DensityMatrix, adjoint: bool) -> Result<DensityMatrix> {
    let n = compiled_qubits(c);
    if rho.num_qubits() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: rho.num_qubits(),
        });
    }
    let mut m = rho.matrix().clone();
    conjugate_w_matrix(c, &mut m, adjoint)?;
    Ok(DensityMatrix::from_matrix_unchecked(n, m))
}

/// `m ← W m W†`, or `W† m W` when `adjoint` is set.
pub fn conjugate_w_matrix(c: &Circuit, m: &mut DMatrix<C64>, adjoint: bool) -> Result<()> {
    let n = compiled_qubits(c);
    if m.nrows() != 1 << n || m.ncols() != 1 << n {
        return Err(Error::Dimension {
            expected: 1 << n,
            actual: m.nrows(),
        });
    }
    let order: Vec<usize> = if adjoint {
        (1..=c.len()).rev().collect()
    } else {
        (1..=c.len()).collect()
    };
    for t in order {
        let (u, support) = controlled_gate(c, t, adjoint);
        qcore::conjugate_local(m, n, &u, &support);
    }
    Ok(())
}

/// `W = W_L ⋯ W_1` with `W_t` the clock-controlled `U_t`.
pub fn build_w(c: &Circuit) -> Result<Operator> {
    let n = compiled_qubits(c);
    check_cap("W transform", n, MAX_QUBITS)?;
    let dim = 1 << n;
    let mut m = DMatrix::<C64>::identity(dim, dim);
    for col in m.as_mut_slice().chunks_mut(dim) {
        apply_w(c, col, false)?;
    }
    Ok(Operator::from_matrix_unchecked(n, m, OperatorKind::Unitary))
}

/// `(L+1)^{-1/2} Σ_t U_t⋯U_1(|input⟩⊗|0…0⟩) ⊗ |t̂⟩`.
pub fn history_state(c: &Circuit, input: &PureState) -> Result<PureState> {
    let l = c.len();
    let n = compiled_qubits(c);
    check_cap("history state", n, MAX_QUBITS)?;
    let mut snapshot = c.initial_state(input)?;
    let scale = 1.0 / ((l + 1) as f64).sqrt();
    let mut v = DVector::zeros(1 << n);
    for t in 0..=l {
        if t > 0 {
            snapshot = c.run_prefix_step(&snapshot, t)?;
        }
        let clock = ClockState::new(t, l)?.index();
        for (w, a) in snapshot.amplitudes().iter().enumerate() {
            v[(w << l) | clock] = a * scale;
        }
    }
    Ok(PureState::from_vector_unchecked(n, v))
}

/// Projector onto `span{|t̂⟩ : t = 0..L}` on the clock register alone.
pub fn legal_clock_projector(l: usize) -> Result<Operator> {
    if l < 1 {
        return Err(Error::arg("clock length must be at least 1"));
    }
    check_cap("clock projector", l, MAX_QUBITS)?;
    let mut diag = vec![ZERO; 1 << l];
    for t in 0..=l {
        diag[ClockState::new(t, l)?.index()] = ONE;
    }
    Ok(Operator::from_matrix_unchecked(
        l,
        DMatrix::from_diagonal(&DVector::from_vec(diag)),
        OperatorKind::Hermitian,
    ))
}

/// Indices of the compiled register whose clock part is legal.
pub fn legal_indices(c: &Circuit) -> Vec<usize> {
    let l = c.len();
    let mut out = Vec::with_capacity((l + 1) << c.work_qubits());
    for w in 0..1usize << c.work_qubits() {
        for t in 0..=l {
            out.push((w << l) | ClockState { t, len: l }.index());
        }
    }
    out
}

impl Circuit {
    /// Applies gate `t` (1-based) to a work-register state.
    pub(crate) fn run_prefix_step(&self, state: &PureState, t: usize) -> Result<PureState> {
        let gate = &self.gates()[t - 1];
        let mut v = state.amplitudes().clone();
        qcore::apply_local(
            v.as_mut_slice(),
            self.work_qubits(),
            gate.matrix(),
            gate.targets(),
        );
        Ok(PureState::from_vector_unchecked(self.work_qubits(), v))
    }
}
