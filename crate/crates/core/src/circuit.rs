//! Verifier circuits and their acceptance probabilities.
//!
//! A circuit acts on `input ⊗ ancilla`; the ancillas start in `|0…0⟩` and the
//! verdict is read from `accept_qubit` after the last gate (1 = accept).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qcore::{
    self, check_cap, conjugate_local, fmt_f64, DensityMatrix, Operator, OperatorKind, PureState,
    RegisterLayout, Tolerances, C64, MAX_QUBITS, ONE, ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateLabel {
    I,
    X,
    Y,
    Z,
    H,
    S,
    T,
    Cnot,
    Cz,
    U1,
    U2,
}

impl GateLabel {
    pub const NAMED: [GateLabel; 9] = [
        GateLabel::I,
        GateLabel::X,
        GateLabel::Y,
        GateLabel::Z,
        GateLabel::H,
        GateLabel::S,
        GateLabel::T,
        GateLabel::Cnot,
        GateLabel::Cz,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateLabel::Cnot | GateLabel::Cz | GateLabel::U2 => 2,
            _ => 1,
        }
    }

    pub fn is_explicit(self) -> bool {
        matches!(self, GateLabel::U1 | GateLabel::U2)
    }

    /// Standard matrix of a named gate; `None` for U1/U2.
    pub fn named_matrix(self) -> Option<DMatrix<C64>> {
        let i = C64::new(0.0, 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let one_qubit = |e: [C64; 4]| Some(DMatrix::from_row_slice(2, 2, &e));
        match self {
            GateLabel::I => one_qubit([ONE, ZERO, ZERO, ONE]),
            GateLabel::X => one_qubit([ZERO, ONE, ONE, ZERO]),
            GateLabel::Y => one_qubit([ZERO, -i, i, ZERO]),
            GateLabel::Z => one_qubit([ONE, ZERO, ZERO, -ONE]),
            GateLabel::H => {
                let a = C64::new(h, 0.0);
                one_qubit([a, a, a, -a])
            }
            GateLabel::S => one_qubit([ONE, ZERO, ZERO, i]),
            GateLabel::T => one_qubit([
                ONE,
                ZERO,
                ZERO,
                C64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
            ]),
            GateLabel::Cnot => {
                let mut m = DMatrix::identity(4, 4);
                m.swap_rows(2, 3);
                Some(m)
            }
            GateLabel::Cz => {
                let mut m = DMatrix::identity(4, 4);
                m[(3, 3)] = -ONE;
                Some(m)
            }
            GateLabel::U1 | GateLabel::U2 => None,
        }
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateLabel::I => "I",
            GateLabel::X => "X",
            GateLabel::Y => "Y",
            GateLabel::Z => "Z",
            GateLabel::H => "H",
            GateLabel::S => "S",
            GateLabel::T => "T",
            GateLabel::Cnot => "CNOT",
            GateLabel::Cz => "CZ",
            GateLabel::U1 => "U1",
            GateLabel::U2 => "U2",
        };
        f.write_str(s)
    }
}

impl FromStr for GateLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "I" => GateLabel::I,
            "X" => GateLabel::X,
            "Y" => GateLabel::Y,
            "Z" => GateLabel::Z,
            "H" => GateLabel::H,
            "S" => GateLabel::S,
            "T" => GateLabel::T,
            "CNOT" => GateLabel::Cnot,
            "CZ" => GateLabel::Cz,
            "U1" => GateLabel::U1,
            "U2" => GateLabel::U2,
            other => return Err(format!("unknown gate label '{other}'")),
        })
    }
}

/// A one- or two-qubit unitary. For two-qubit gates the first target is the
/// more significant bit of the 4×4 matrix (the control, for CNOT/CZ).
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    label: GateLabel,
    targets: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl Gate {
    pub fn named(label: GateLabel, targets: &[usize]) -> Result<Self> {
        let matrix = label
            .named_matrix()
            .ok_or_else(|| Error::arg(format!("{label} needs an explicit matrix")))?;
        Self::build(label, targets, matrix)
    }

    pub fn explicit(targets: &[usize], matrix: DMatrix<C64>) -> Result<Self> {
        let label = match targets.len() {
            1 => GateLabel::U1,
            2 => GateLabel::U2,
            n => return Err(Error::arg(format!("gates act on 1 or 2 qubits, got {n}"))),
        };
        if qcore::unitarity_defect(&matrix) > 1e-12 {
            return Err(Error::Numerical(format!("{label} matrix is not unitary")));
        }
        Self::build(label, targets, matrix)
    }

    fn build(label: GateLabel, targets: &[usize], matrix: DMatrix<C64>) -> Result<Self> {
        if targets.len() != label.arity() {
            return Err(Error::arg(format!(
                "{label} takes {} target(s), got {}",
                label.arity(),
                targets.len()
            )));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::arg(format!("{label} has duplicate targets")));
        }
        let dim = 1 << targets.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: matrix.nrows(),
            });
        }
        Ok(Gate {
            label,
            targets: targets.to_vec(),
            matrix,
        })
    }

    pub fn label(&self) -> GateLabel {
        self.label
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Same gate acting on relabelled qubits.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Gate {
        Gate {
            label: self.label,
            targets: self.targets.iter().map(|&q| map(q)).collect(),
            matrix: self.matrix.clone(),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.25;

/// A verifier `U = U_L ⋯ U_1` with its error parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    layout: RegisterLayout,
    gates: Vec<Gate>,
    accept_qubit: usize,
    epsilon: f64,
}

impl Circuit {
    pub fn new(
        n_input: usize,
        n_ancilla: usize,
        accept_qubit: usize,
        epsilon: f64,
        gates: Vec<Gate>,
    ) -> Result<Self> {
        let layout = RegisterLayout::new(n_input, n_ancilla, 0);
        let work = layout.work();
        if n_input < 1 {
            return Err(Error::arg("circuit needs at least one input qubit"));
        }
        check_cap("circuit", work, MAX_QUBITS)?;
        if gates.is_empty() {
            return Err(Error::arg("circuit needs at least one gate"));
        }
        if accept_qubit >= work {
            return Err(Error::arg(format!(
                "accept qubit {accept_qubit} out of range for {work} qubits"
            )));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0 / 3.0) {
            return Err(Error::arg(format!("epsilon {epsilon} not in (0, 1/3]")));
        }
        for (i, g) in gates.iter().enumerate() {
            if let Some(&q) = g.targets.iter().find(|&&q| q >= work) {
                return Err(Error::arg(format!(
                    "gate {} targets qubit {q}, register has {work}",
                    i + 1
                )));
            }
        }
        Ok(Circuit {
            layout,
            gates,
            accept_qubit,
            epsilon,
        })
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn n_input(&self) -> usize {
        self.layout.n_input
    }

    pub fn n_ancilla(&self) -> usize {
        self.layout.n_ancilla
    }

    pub fn work_qubits(&self) -> usize {
        self.layout.work()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of gates, the clock length `L`.
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn accept_qubit(&self) -> usize {
        self.accept_qubit
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `other` runs after `self`.
    pub fn then(&self, other: &Circuit) -> Result<Circuit> {
        if self.layout != other.layout {
            return Err(Error::arg(
                "cannot concatenate circuits with different layouts",
            ));
        }
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().cloned());
        Circuit::new(
            self.n_input(),
            self.n_ancilla(),
            other.accept_qubit,
            other.epsilon,
            gates,
        )
    }

    /// `|input⟩ ⊗ |0…0⟩` on the work register.
    pub fn initial_state(&self, input: &PureState) -> Result<PureState> {
        if input.num_qubits() != self.n_input() {
            return Err(Error::Dimension {
                expected: self.n_input(),
                actual: input.num_qubits(),
            });
        }
        let mut v = DVector::zeros(1 << self.work_qubits());
        let shift = self.n_ancilla();
        for (i, a) in input.amplitudes().iter().enumerate() {
            v[i << shift] = *a;
        }
        Ok(PureState::from_vector_unchecked(self.work_qubits(), v))
    }

    /// `U_t ⋯ U_1 |state⟩` on the work register; `t = 0` is the state itself.
    pub fn run_prefix(&self, state: &PureState, t: usize) -> Result<PureState> {
        if state.num_qubits() != self.work_qubits() {
            return Err(Error::Dimension {
                expected: self.work_qubits(),
                actual: state.num_qubits(),
            });
        }
        if t > self.len() {
            return Err(Error::arg(format!("prefix {t} longer than circuit")));
        }
        let n = self.work_qubits();
        let mut v = state.amplitudes().clone();
        for g in &self.gates[..t] {
            qcore::apply_local(v.as_mut_slice(), n, &g.matrix, &g.targets);
        }
        Ok(PureState::from_vector_unchecked(n, v))
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        parse_circuit(text)
    }

    /// Canonical text form; parsing it gives back an identical circuit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n_input {}\n", self.n_input()));
        out.push_str(&format!("n_ancilla {}\n", self.n_ancilla()));
        out.push_str(&format!("accept {}\n", self.accept_qubit));
        out.push_str(&format!("epsilon {}\n", fmt_f64(self.epsilon)));
        for g in &self.gates {
            let targets: Vec<String> = g.targets.iter().map(|q| q.to_string()).collect();
            out.push_str(&format!("gate {} {}\n", g.label, targets.join(" ")));
            if g.label.is_explicit() {
                qcore::push_matrix_entries(&mut out, &g.matrix);
            }
        }
        out
    }
}

/// Parses the line-based circuit format (`#` starts a comment).
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut n_input = None;
    let mut n_ancilla = None;
    let mut accept = None;
    let mut epsilon = None;
    let mut gates = Vec::new();
    let mut last_line = 0;
    let mut lines = qcore::content_lines(text).peekable();

    let parse_usize = |line: usize, s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::parse(line, format!("expected a nonnegative integer, got '{s}'")))
    };

    while let Some((line, content)) = lines.next() {
        last_line = line;
        let fields: Vec<&str> = content.split_whitespace().collect();
        match fields[0] {
            "n_input" | "n_ancilla" | "accept" | "epsilon" if !gates.is_empty() => {
                return Err(Error::parse(
                    line,
                    format!("'{}' after first gate", fields[0]),
                ));
            }
            "n_input" | "n_ancilla" | "accept" | "epsilon" if fields.len() != 2 => {
                return Err(Error::parse(
                    line,
                    format!("'{}' takes one value", fields[0]),
                ));
            }
            "n_input" => n_input = Some(parse_usize(line, fields[1])?),
            "n_ancilla" => n_ancilla = Some(parse_usize(line, fields[1])?),
            "accept" => accept = Some(parse_usize(line, fields[1])?),
            "epsilon" => {
                let e: f64 = fields[1]
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad epsilon '{}'", fields[1])))?;
                epsilon = Some(e);
            }
            "gate" => {
                let (Some(n_in), Some(n_anc), Some(_)) = (n_input, n_ancilla, accept) else {
                    return Err(Error::parse(
                        line,
                        "missing header: n_input, n_ancilla and accept must precede gates",
                    ));
                };
                if fields.len() < 3 {
                    return Err(Error::parse(line, "expected `gate <LABEL> <q> [<q2>]`"));
                }
                let label: GateLabel = fields[1].parse().map_err(|e| Error::parse(line, e))?;
                let targets = fields[2..]
                    .iter()
                    .map(|s| parse_usize(line, s))
                    .collect::<Result<Vec<_>>>()?;
                if targets.len() != label.arity() {
                    return Err(Error::parse(
                        line,
                        format!("{label} takes {} target(s)", label.arity()),
                    ));
                }
                if let Some(q) = targets.iter().find(|&&q| q >= n_in + n_anc) {
                    return Err(Error::parse(line, format!("target {q} out of range")));
                }
                let gate = if label.is_explicit() {
                    let dim = 1usize << label.arity();
                    let mut entries = Vec::with_capacity(dim * dim);
                    for _ in 0..dim * dim {
                        let (no, entry) = lines.next().ok_or_else(|| {
                            Error::parse(line, format!("{label} needs {} matrix lines", dim * dim))
                        })?;
                        entries.push(qcore::parse_complex(no, entry)?);
                    }
                    Gate::explicit(&targets, DMatrix::from_row_slice(dim, dim, &entries))
                } else {
                    Gate::named(label, &targets)
                };
                gates.push(gate.map_err(|e| Error::parse(line, e.to_string()))?);
            }
            other => return Err(Error::parse(line, format!("unknown directive '{other}'"))),
        }
    }

    let missing =
        |what: &str| Error::parse(last_line.max(1), format!("missing header field {what}"));
    let n_input = n_input.ok_or_else(|| missing("n_input"))?;
    let n_ancilla = n_ancilla.ok_or_else(|| missing("n_ancilla"))?;
    let accept = accept.ok_or_else(|| missing("accept"))?;
    if gates.is_empty() {
        return Err(Error::parse(last_line.max(1), "circuit has no gates"));
    }
    Circuit::new(
        n_input,
        n_ancilla,
        accept,
        epsilon.unwrap_or(DEFAULT_EPSILON),
        gates,
    )
    .map_err(|e| Error::parse(last_line, e.to_string()))
}

/// The full `2^(n+m)` unitary, `U_1` applied first.
pub fn circuit_unitary(c: &Circuit) -> Result<Operator> {
    let n = c.work_qubits();
    check_cap("circuit unitary", n, MAX_QUBITS)?;
    let dim = 1 << n;
    let mut m = DMatrix::<C64>::identity(dim, dim);
    for col in m.as_mut_slice().chunks_mut(dim) {
        for g in &c.gates {
            qcore::apply_local(col, n, &g.matrix, &g.targets);
        }
    }
    Ok(Operator::from_matrix_unchecked(n, m, OperatorKind::Unitary))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceReport {
    pub accept_probability: f64,
    /// FNV-1a over the bit patterns of the tested input state.
    pub input_state_digest: u64,
}

pub fn density_digest(rho: &DensityMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for z in rho.matrix().iter() {
        for word in [z.re.to_bits(), z.im.to_bits()] {
            for byte in word.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// `tr(U (ρ ⊗ |0…0⟩⟨0…0|) U† P1)` with `P1` projecting the accept qubit on `|1⟩`.
pub fn accept_probability(c: &Circuit, rho_input: &DensityMatrix) -> Result<AcceptanceReport> {
    if rho_input.num_qubits() != c.n_input() {
        return Err(Error::Dimension {
            expected: c.n_input(),
            actual: rho_input.num_qubits(),
        });
    }
    let n = c.work_qubits();
    let shift = c.n_ancilla();
    let dim = 1 << n;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    let src = rho_input.matrix();
    for j in 0..src.ncols() {
        for i in 0..src.nrows() {
            m[(i << shift, j << shift)] = src[(i, j)];
        }
    }
    for g in &c.gates {
        conjugate_local(&mut m, n, &g.matrix, &g.targets);
    }
    let bit = 1 << (n - 1 - c.accept_qubit);
    let p: f64 = (0..dim)
        .filter(|i| i & bit != 0)
        .map(|i| m[(i, i)].re)
        .sum();
    Ok(AcceptanceReport {
        accept_probability: p.clamp(0.0, 1.0),
        input_state_digest: density_digest(rho_input),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWitness {
    pub state: PureState,
    pub probability: f64,
    /// The top eigenvalue of the acceptance operator is not unique.
    pub degenerate: bool,
}

/// The acceptance operator `(I⊗⟨0…0|) U† P1 U (I⊗|0…0⟩)` on the input register.
pub fn acceptance_operator(c: &Circuit) -> Result<Operator> {
    let u = circuit_unitary(c)?;
    let n = c.work_qubits();
    let shift = c.n_ancilla();
    let din = 1 << c.n_input();
    let bit = 1 << (n - 1 - c.accept_qubit);
    // V = U (I ⊗ |0…0⟩): the columns of U whose ancilla bits are zero,
    // restricted to rows where the accept qubit reads 1.
    let rows: Vec<usize> = (0..1 << n).filter(|i| i & bit != 0).collect();
    let v = DMatrix::from_fn(rows.len(), din, |r, j| u.matrix()[(rows[r], j << shift)]);
    let m = v.adjoint() * v;
    Ok(Operator::from_matrix_unchecked(
        c.n_input(),
        m,
        OperatorKind::Hermitian,
    ))
}

/// The best possible input: top eigenpair of the acceptance operator.
pub fn optimal_witness(c: &Circuit) -> Result<OptimalWitness> {
    optimal_witness_with(c, &Tolerances::default())
}

pub fn optimal_witness_with(c: &Circuit, tol: &Tolerances) -> Result<OptimalWitness> {
    let m = acceptance_operator(c)?;
    let (values, vectors) = qcore::hermitian_eigen(m.matrix());
    let top = values.len() - 1;
    let degenerate = top > 0 && (values[top] - values[top - 1]).abs() <= tol.degeneracy;
    let vec = vectors.column(top).into_owned();
    let state = PureState::normalized(c.n_input(), vec.data.into())?;
    Ok(OptimalWitness {
        state,
        probability: values[top].clamp(0.0, 1.0),
        degenerate,
    })
}

/// Random circuit of named gates, for experiments and tests.
pub fn random_circuit<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_input: usize,
    n_ancilla: usize,
    len: usize,
) -> Circuit {
    let work = n_input + n_ancilla;
    let gates = (0..len)
        .map(|_| {
            let label = GateLabel::NAMED[rng.gen_range(0..GateLabel::NAMED.len())];
            if label.arity() == 2 && work >= 2 {
                let a = rng.gen_range(0..work);
                let b = (a + rng.gen_range(1..work)) % work;
                Gate::named(label, &[a, b]).unwrap()
            } else if label.arity() == 2 {
                Gate::named(GateLabel::H, &[0]).unwrap()
            } else {
                Gate::named(label, &[rng.gen_range(0..work)]).unwrap()
            }
        })
        .collect();
    Circuit::new(
        n_input,
        n_ancilla,
        rng.gen_range(0..work),
        DEFAULT_EPSILON,
        gates,
    )
    .expect("random circuit is valid by construction")
}
