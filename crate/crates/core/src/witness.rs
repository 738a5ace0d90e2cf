//! Turning low-energy states of compiled verifiers back into accepted inputs,
//! and the sampling verifier that checks a state against a local Hamiltonian.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::amplify::fractional_threshold;
use crate::circuit::{accept_probability, optimal_witness, Circuit};
use crate::clockham::{self, LocalHamiltonian, LocalTerm, TermPart};
use crate::error::{Error, Result};
use crate::qcore::{self, fmt_f64, DensityMatrix, Tolerances, C64};
use crate::seeding::{stage_rng, trial_rng};
use crate::spectral::{self, SolverConfig};
use crate::thermal::{self, Temperature};

/// How the witness is cut out of the `k`-copy input register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// One copy, chosen uniformly with the seeded generator.
    Random,
    /// The uniform mixture of all `k` single-copy restrictions.
    Average,
}

impl std::str::FromStr for Restriction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(Restriction::Random),
            "average" => Ok(Restriction::Average),
            other => Err(format!("unknown restriction '{other}' (random|average)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqmaParams {
    /// Allowed loss in acceptance probability.
    pub delta: f64,
    /// Number of verifier copies in the meta-verifier.
    pub k: usize,
    pub seed: u64,
    /// Energy the source must reach; `None` uses `(δ/2)^4/(L+1)` for the
    /// compiled meta-verifier with `L` gates.
    pub target_energy: Option<f64>,
    pub restriction: Restriction,
    pub clock_penalty: Option<f64>,
}

impl FqmaParams {
    pub fn new(delta: f64, k: usize, seed: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::arg(format!("delta must lie in (0,1), got {delta}")));
        }
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        Ok(FqmaParams {
            delta,
            k,
            seed,
            target_energy: None,
            restriction: Restriction::Random,
            clock_penalty: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WitnessFlag {
    /// The verifier accepts no input with probability above `ε`.
    NoWitnessRegime,
    /// The best acceptance probability is attained on more than one direction.
    Degenerate,
}

impl fmt::Display for WitnessFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WitnessFlag::NoWitnessRegime => "no-witness-regime",
            WitnessFlag::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessResult {
    /// State on the input register of the original circuit.
    pub witness: DensityMatrix,
    pub accept_probability: f64,
    pub energy_of_source: f64,
    pub flags: BTreeSet<WitnessFlag>,
    pub k: usize,
    pub seed: u64,
    pub target_energy: Option<f64>,
    /// Copy index used by [`Restriction::Random`].
    pub chosen_copy: Option<usize>,
}

impl WitnessResult {
    /// Density matrix followed by a commented report block.
    pub fn to_text(&self) -> String {
        let mut out = self.witness.to_text();
        out.push_str("# report\n");
        out.push_str(&format!(
            "# accept_probability {}\n",
            fmt_f64(self.accept_probability)
        ));
        out.push_str(&format!("# energy {}\n", fmt_f64(self.energy_of_source)));
        if let Some(t) = self.target_energy {
            out.push_str(&format!("# target {}\n", fmt_f64(t)));
        }
        out.push_str(&format!("# k {}\n", self.k));
        if let Some(i) = self.chosen_copy {
            out.push_str(&format!("# copy {i}\n"));
        }
        out.push_str(&format!("# seed {}\n", self.seed));
        let flags: Vec<String> = self.flags.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!(
            "# flags {}\n",
            if flags.is_empty() {
                "none".to_string()
            } else {
                flags.join(",")
            }
        ));
        out
    }
}

/// Copies of `16/δ⁴` strictly exceeded: `⌊16/δ⁴⌋ + 1`.
pub fn sufficient_k(delta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok((16.0 / delta.powi(4)).floor() as u64 + 1)
}

fn regime_flags(c: &Circuit, tol: &Tolerances) -> Result<BTreeSet<WitnessFlag>> {
    let best = crate::circuit::optimal_witness_with(c, tol)?;
    let mut flags = BTreeSet::new();
    if best.probability <= c.epsilon() {
        flags.insert(WitnessFlag::NoWitnessRegime);
    }
    if best.degenerate {
        flags.insert(WitnessFlag::Degenerate);
    }
    Ok(flags)
}

/// `σ = tr_{ancilla, clock}(W† ρ W)` on the input register of `c`, with its
/// acceptance and `tr(ρ H)` for the default compilation of `c`.
pub fn extract_witness(rho_low: &DensityMatrix, c: &Circuit) -> Result<WitnessResult> {
    let h = clockham::compile(c, None)?;
    if rho_low.num_qubits() != h.num_qubits() {
        return Err(Error::Dimension {
            expected: h.num_qubits(),
            actual: rho_low.num_qubits(),
        });
    }
    let energy = h.expectation(rho_low)?;
    let unwound = clockham::conjugate_w(c, rho_low, true)?;
    let inputs: Vec<usize> = c.layout().input_qubits().collect();
    let sigma = unwound.partial_trace(&inputs)?;
    let accept = accept_probability(c, &sigma)?.accept_probability;
    Ok(WitnessResult {
        witness: sigma,
        accept_probability: accept,
        energy_of_source: energy,
        flags: regime_flags(c, &Tolerances::default())?,
        k: 1,
        seed: 0,
        target_energy: None,
        chosen_copy: None,
    })
}

/// `k` copies of `c` side by side, run one after the other, with the
/// acceptance test replaced by a vote over the `k` accept bits.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaVerifier {
    pub circuit: Circuit,
    pub hamiltonian: LocalHamiltonian,
    pub k: usize,
    /// Minimum number of accepting copies.
    pub required_accepts: usize,
    n_input: usize,
    n_ancilla: usize,
}

impl MetaVerifier {
    /// Qubit that copy `copy` uses for qubit `q` of the original work register.
    pub fn qubit(&self, copy: usize, q: usize) -> usize {
        if q < self.n_input {
            copy * self.n_input + q
        } else {
            self.k * self.n_input + copy * self.n_ancilla + (q - self.n_input)
        }
    }

    pub fn copy_inputs(&self, copy: usize) -> Vec<usize> {
        (0..self.n_input).map(|q| self.qubit(copy, q)).collect()
    }
}

/// Accept iff more than `k(1−ε) − k^{3/4}` copies accept, and at least one.
pub fn meta_required_accepts(k: usize, epsilon: f64) -> usize {
    let x = fractional_threshold(k, epsilon);
    if x < 0.0 {
        1
    } else {
        (x.floor() as usize + 1).max(1)
    }
}

pub fn build_meta_verifier(
    c: &Circuit,
    k: usize,
    clock_penalty: Option<f64>,
) -> Result<MetaVerifier> {
    if k < 1 {
        return Err(Error::arg("k must be at least 1"));
    }
    let (n, m) = (c.n_input(), c.n_ancilla());
    let work = k * (n + m);
    qcore::check_cap("meta-verifier", work + k * c.len(), qcore::MAX_QUBITS)?;
    let map = |copy: usize, q: usize| {
        if q < n {
            copy * n + q
        } else {
            k * n + copy * m + (q - n)
        }
    };
    let mut gates = Vec::with_capacity(k * c.len());
    for copy in 0..k {
        gates.extend(c.gates().iter().map(|g| g.remapped(|q| map(copy, q))));
    }
    let circuit = Circuit::new(k * n, k * m, map(0, c.accept_qubit()), c.epsilon(), gates)?;
    let compiled = clockham::compile(&circuit, clock_penalty)?;
    let layout = compiled.layout();
    let required = meta_required_accepts(k, c.epsilon());

    // vote projector on the k accept bits and the last clock qubit
    let clock_last = layout.clock_index(circuit.len());
    let support: Vec<usize> = (0..k)
        .map(|copy| map(copy, c.accept_qubit()))
        .chain(std::iter::once(clock_last))
        .collect();
    let diag: Vec<C64> = (0..1usize << (k + 1))
        .map(|bits| {
            let clock_on = bits & 1 == 1;
            let accepts = (bits >> 1).count_ones() as usize;
            C64::new(
                if clock_on && accepts < required {
                    1.0
                } else {
                    0.0
                },
                0.0,
            )
        })
        .collect();
    let vote = LocalTerm::new(
        TermPart::Out,
        1.0,
        support,
        DMatrix::from_diagonal(&DVector::from_vec(diag)),
    )?;
    let mut terms: Vec<LocalTerm> = compiled
        .into_terms()
        .into_iter()
        .filter(|t| t.part() != TermPart::Out)
        .collect();
    terms.push(vote);
    let hamiltonian = LocalHamiltonian::new(layout, terms)?;
    Ok(MetaVerifier {
        circuit,
        hamiltonian,
        k,
        required_accepts: required,
        n_input: n,
        n_ancilla: m,
    })
}

/// Anything that prepares a state of `h` at or below a target energy.
pub trait LowEnergySource {
    fn prepare(&self, h: &LocalHamiltonian, target: f64) -> Result<DensityMatrix>;
}

impl<F> LowEnergySource for F
where
    F: Fn(&LocalHamiltonian, f64) -> Result<DensityMatrix>,
{
    fn prepare(&self, h: &LocalHamiltonian, target: f64) -> Result<DensityMatrix> {
        self(h, target)
    }
}

/// Exact ground state by dense diagonalization.
pub struct GroundStateSource;

impl LowEnergySource for GroundStateSource {
    fn prepare(&self, h: &LocalHamiltonian, _target: f64) -> Result<DensityMatrix> {
        Ok(spectral::min_eigenvalue(h, &SolverConfig::default())?
            .ground_state
            .to_density())
    }
}

/// Gibbs state at a fixed temperature.
pub struct GibbsSource(pub Temperature);

impl LowEnergySource for GibbsSource {
    fn prepare(&self, h: &LocalHamiltonian, _target: f64) -> Result<DensityMatrix> {
        Ok(thermal::gibbs_state(h, self.0)?.0)
    }
}

/// Builds the `k`-copy meta-verifier, asks `source` for a low-energy state,
/// undoes the computation and restricts to one copy's input register.
pub fn solve_fqma(
    c: &Circuit,
    params: &FqmaParams,
    source: &dyn LowEnergySource,
) -> Result<WitnessResult> {
    let meta = build_meta_verifier(c, params.k, params.clock_penalty)?;
    let target = params
        .target_energy
        .unwrap_or_else(|| (params.delta / 2.0).powi(4) / (meta.circuit.len() as f64 + 1.0));
    let rho = source.prepare(&meta.hamiltonian, target)?;
    if rho.num_qubits() != meta.hamiltonian.num_qubits() {
        return Err(Error::Dimension {
            expected: meta.hamiltonian.num_qubits(),
            actual: rho.num_qubits(),
        });
    }
    let energy = meta.hamiltonian.expectation(&rho)?;
    if energy > target {
        return Err(Error::EnergyAboveTarget {
            achieved: energy,
            target,
        });
    }
    let unwound = clockham::conjugate_w(&meta.circuit, &rho, true)?;
    let (witness, chosen) = match params.restriction {
        Restriction::Random => {
            let copy = stage_rng(params.seed, "witness/restriction").gen_range(0..params.k);
            (unwound.partial_trace(&meta.copy_inputs(copy))?, Some(copy))
        }
        Restriction::Average => {
            let parts: Vec<DensityMatrix> = (0..params.k)
                .map(|copy| unwound.partial_trace(&meta.copy_inputs(copy)))
                .collect::<Result<_>>()?;
            let w = 1.0 / params.k as f64;
            let weighted: Vec<(f64, &DensityMatrix)> = parts.iter().map(|p| (w, p)).collect();
            (DensityMatrix::mixture(&weighted)?, None)
        }
    };
    let accept = accept_probability(c, &witness)?.accept_probability;
    Ok(WitnessResult {
        witness,
        accept_probability: accept,
        energy_of_source: energy,
        flags: regime_flags(c, &Tolerances::default())?,
        k: params.k,
        seed: params.seed,
        target_energy: Some(target),
        chosen_copy: chosen,
    })
}

fn check_povm_terms(h: &LocalHamiltonian) -> Result<()> {
    for t in h.terms() {
        let e = qcore::hermitian_eigenvalues(t.matrix());
        if e.iter().any(|&x| x < -1e-12) {
            return Err(Error::arg(format!(
                "sampling verifier needs positive semidefinite terms; a {} term is not",
                t.part()
            )));
        }
    }
    if !(h.total_weight() > 0.0) {
        return Err(Error::arg("sampling verifier needs at least one term"));
    }
    Ok(())
}

/// `tr(ρ_S H_j)` for every term, from the reduced state on its support.
fn local_expectations(rho: &DensityMatrix, h: &LocalHamiltonian) -> Result<Vec<f64>> {
    if rho.num_qubits() != h.num_qubits() {
        return Err(Error::Dimension {
            expected: h.num_qubits(),
            actual: rho.num_qubits(),
        });
    }
    h.terms()
        .iter()
        .map(|t| {
            let reduced = rho.partial_trace(t.support())?;
            Ok((reduced.matrix() * t.matrix()).trace().re)
        })
        .collect()
}

/// Acceptance of the verifier that picks term `j` with probability
/// `w_j / Σw` and measures `{H_j, 1 − H_j}`, rejecting on `H_j`.
pub fn povm_verifier_accept(rho: &DensityMatrix, h: &LocalHamiltonian) -> Result<f64> {
    check_povm_terms(h)?;
    let total = h.total_weight();
    let e: f64 = local_expectations(rho, h)?
        .iter()
        .zip(h.terms())
        .map(|(x, t)| t.weight() * x)
        .sum();
    if e > total + 1e-9 {
        return Err(Error::Numerical(format!(
            "energy {e} exceeds total weight {total}"
        )));
    }
    Ok((1.0 - e / total).clamp(0.0, 1.0))
}

/// Empirical acceptance rate over `shots` runs of the two-stage measurement.
pub fn povm_verifier_sample(
    rho: &DensityMatrix,
    h: &LocalHamiltonian,
    shots: u64,
    seed: u64,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::arg("need at least one shot"));
    }
    check_povm_terms(h)?;
    let reject: Vec<f64> = local_expectations(rho, h)?
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0))
        .collect();
    let mut cumulative = Vec::with_capacity(h.terms().len());
    let mut acc = 0.0;
    for t in h.terms() {
        acc += t.weight();
        cumulative.push(acc);
    }
    let total = acc;
    let accepted: u64 = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let r = rng.gen::<f64>() * total;
            let j = cumulative
                .partition_point(|&c| c <= r)
                .min(cumulative.len() - 1);
            u64::from(rng.gen::<f64>() >= reject[j])
        })
        .sum();
    Ok(accepted as f64 / shots as f64)
}

/// The optimal witness's acceptance, for comparison with extracted states.
pub fn best_acceptance(c: &Circuit) -> Result<f64> {
    Ok(optimal_witness(c)?.probability)
}
