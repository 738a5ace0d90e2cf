//! Gibbs states of local Hamiltonians and the cooling temperatures that make
//! their mean energy decide the underlying promise problem. Boltzmann's
//! constant is 1 throughout.

use std::f64::consts::LN_2;
use std::fmt;

use nalgebra::DMatrix;

use crate::clockham::LocalHamiltonian;
use crate::error::{Error, Result};
use crate::qcore::{fmt_f64, DensityMatrix, Tolerances, C64};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::arg(format!(
                "temperature must be positive and finite, got {value}"
            )));
        }
        Ok(Temperature(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalReport {
    /// `0.0` for the zero-temperature state.
    pub temperature: f64,
    pub mean_energy: f64,
    pub partition_function: f64,
    pub log_partition_function: f64,
    /// Eigenvalues of `H`, ascending, and their Boltzmann weights.
    pub energies: Vec<f64>,
    pub populations: Vec<f64>,
    pub lambda_min: f64,
    pub e_max: f64,
    pub cutoff: Option<f64>,
    pub bound_rhs: Option<f64>,
}

impl ThermalReport {
    /// Fills in the cutoff `a + (d−a)/2` and the mean-energy bound for this
    /// temperature. No-op at zero temperature.
    pub fn attach_bound(&mut self, a: f64, d: f64, n: usize) -> Result<()> {
        if self.temperature > 0.0 {
            let t = Temperature::new(self.temperature)?;
            self.bound_rhs = Some(mean_energy_bound(a, d, n, self.e_max, t)?);
        }
        self.cutoff = Some(a + (d - a) / 2.0);
        Ok(())
    }
}

fn assemble_state(vectors: &DMatrix<C64>, populations: &[f64], n: usize) -> DensityMatrix {
    let dim = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &p) in populations.iter().enumerate() {
        scaled.column_mut(j).scale_mut(p);
    }
    let rho = &scaled * vectors.adjoint();
    debug_assert_eq!(rho.nrows(), dim);
    DensityMatrix::from_matrix_unchecked(n, rho)
}

/// `e^{−H/T}/Z` from a full eigendecomposition, with weights shifted by the
/// ground energy before exponentiation.
pub fn gibbs_state(h: &LocalHamiltonian, t: Temperature) -> Result<(DensityMatrix, ThermalReport)> {
    let (energies, vectors) = spectral::dense_eigen(h)?;
    let e0 = energies[0];
    let t = t.value();
    let weights: Vec<f64> = energies.iter().map(|e| (-(e - e0) / t).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let populations: Vec<f64> = weights.iter().map(|w| w / sum).collect();
    let log_z = -e0 / t + sum.ln();
    let mean_energy = populations.iter().zip(&energies).map(|(p, e)| p * e).sum();
    let rho = assemble_state(&vectors, &populations, h.num_qubits());
    let report = ThermalReport {
        temperature: t,
        mean_energy,
        partition_function: log_z.exp(),
        log_partition_function: log_z,
        lambda_min: e0,
        e_max: *energies.last().unwrap(),
        energies,
        populations,
        cutoff: None,
        bound_rhs: None,
    };
    Ok((rho, report))
}

/// Uniform mixture over the ground space; eigenvalues within the degeneracy
/// tolerance of the minimum count as ground states.
pub fn zero_temperature_state(
    h: &LocalHamiltonian,
    tol: &Tolerances,
) -> Result<(DensityMatrix, ThermalReport)> {
    let (energies, vectors) = spectral::dense_eigen(h)?;
    let e0 = energies[0];
    let cut = tol.degeneracy * e0.abs().max(1.0);
    let g = energies.iter().filter(|&&e| e - e0 <= cut).count();
    let populations: Vec<f64> = (0..energies.len())
        .map(|j| if j < g { 1.0 / g as f64 } else { 0.0 })
        .collect();
    let mean_energy = populations.iter().zip(&energies).map(|(p, e)| p * e).sum();
    let rho = assemble_state(&vectors, &populations, h.num_qubits());
    let report = ThermalReport {
        temperature: 0.0,
        mean_energy,
        partition_function: g as f64,
        log_partition_function: (g as f64).ln(),
        lambda_min: e0,
        e_max: *energies.last().unwrap(),
        energies,
        populations,
        cutoff: None,
        bound_rhs: None,
    };
    Ok((rho, report))
}

/// `a + (d−a)/2 + e^{n ln 2}·e^{−(d−a)/(2T)}·E_max`.
pub fn mean_energy_bound(a: f64, d: f64, n: usize, e_max: f64, t: Temperature) -> Result<f64> {
    if !(d > a) {
        return Err(Error::arg(format!("need d > a, got a={a}, d={d}")));
    }
    if n < 1 {
        return Err(Error::arg("qubit count must be at least 1"));
    }
    let tail = (n as f64 * LN_2 - (d - a) / (2.0 * t.value())).exp();
    Ok(a + (d - a) / 2.0 + tail * e_max)
}

/// `1/(n·2 ln 2·q)` where `q` is the reciprocal-gap polynomial evaluated by the caller.
pub fn fqma_temperature(n: usize, q: f64) -> Result<Temperature> {
    if n < 1 || !(q > 0.0) {
        return Err(Error::arg("fqma temperature needs n >= 1 and q > 0"));
    }
    Temperature::new(1.0 / (n as f64 * 2.0 * LN_2 * q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmaTemperature {
    /// Upper bound on the admissible temperature.
    pub temperature: Temperature,
    /// `(1+2ε)/(4(L+1))`.
    pub cutoff: f64,
    /// `1/(2(L+1))`, the decision energy.
    pub target: f64,
}

/// Cooling temperature for a compiled verifier with error `ε`, `L` gates and
/// `n` qubits in total.
pub fn qma_temperature(epsilon: f64, l: usize, n: usize) -> Result<QmaTemperature> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Regime(format!(
            "epsilon must lie in (0, 1/2) for a positive temperature, got {epsilon}"
        )));
    }
    if l < 1 || n < 1 {
        return Err(Error::arg("L and n must be at least 1"));
    }
    let lp1 = l as f64 + 1.0;
    Ok(QmaTemperature {
        temperature: Temperature::new((1.0 - 2.0 * epsilon) / (4.0 * LN_2 * lp1 * n as f64))?,
        cutoff: (1.0 + 2.0 * epsilon) / (4.0 * lp1),
        target: 1.0 / (2.0 * lp1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingTemperature {
    pub temperature: Temperature,
    /// `a + ΔE/4`.
    pub cutoff: f64,
    /// `a + ΔE/2`: mean energies above it mean no zero-cost assignment.
    pub decision: f64,
}

/// Temperature for classical Hamiltonians with spectral gap `ΔE` above the
/// ground energy `a`.
pub fn ising_np_temperature(delta_e: f64, n: usize, a: f64) -> Result<IsingTemperature> {
    if !(delta_e > 0.0) || n < 1 {
        return Err(Error::arg("need delta_e > 0 and n >= 1"));
    }
    Ok(IsingTemperature {
        temperature: Temperature::new(1.0 / (LN_2 * delta_e * n as f64))?,
        cutoff: a + delta_e / 4.0,
        decision: a + delta_e / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsVerdict {
    WitnessExists,
    NoWitness,
}

impl fmt::Display for GibbsVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GibbsVerdict::WitnessExists => "witness-exists",
            GibbsVerdict::NoWitness => "no-witness",
        })
    }
}

/// Witness exists iff the Gibbs mean energy is at most `decision_energy`.
pub fn gibbs_decide(
    h: &LocalHamiltonian,
    t: Temperature,
    decision_energy: f64,
) -> Result<(GibbsVerdict, ThermalReport)> {
    let (_, report) = gibbs_state(h, t)?;
    Ok((
        classify_mean_energy(report.mean_energy, decision_energy),
        report,
    ))
}

pub fn classify_mean_energy(mean_energy: f64, decision_energy: f64) -> GibbsVerdict {
    if mean_energy <= decision_energy {
        GibbsVerdict::WitnessExists
    } else {
        GibbsVerdict::NoWitness
    }
}

pub const CSV_HEADER: &str = "T,mean_energy,bound_rhs,Z,lambda_min,e_max,verdict";

pub fn csv_row(report: &ThermalReport, verdict: Option<GibbsVerdict>) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        fmt_f64(report.temperature),
        fmt_f64(report.mean_energy),
        report.bound_rhs.map(fmt_f64).unwrap_or_default(),
        fmt_f64(report.partition_function),
        fmt_f64(report.lambda_min),
        fmt_f64(report.e_max),
        verdict.map(|v| v.to_string()).unwrap_or_default()
    )
}

/// `count` temperatures log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<Temperature>> {
    if !(lo > 0.0 && hi >= lo) || count < 1 {
        return Err(Error::arg("log grid needs 0 < lo <= hi and count >= 1"));
    }
    if count == 1 {
        return Ok(vec![Temperature::new(lo)?]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| Temperature::new((a + (b - a) * i as f64 / (count - 1) as f64).exp()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Circuit, Gate, GateLabel};
    use crate::clockham::{compile, LocalTerm, TermPart};
    use crate::qcore::{max_abs_diff, RegisterLayout};
    use nalgebra::{DVector, SymmetricEigen};

    fn diag_h(d: &[f64]) -> LocalHamiltonian {
        let mut terms = Vec::new();
        for (q, &e) in d.iter().enumerate() {
            if e > 0.0 {
                let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
                    C64::new(0.0, 0.0),
                    C64::new(1.0, 0.0),
                ]));
                terms.push(LocalTerm::new(TermPart::Out, e, vec![q], m).unwrap());
            }
        }
        LocalHamiltonian::new(RegisterLayout::new(d.len(), 0, 0), terms).unwrap()
    }

    fn identity_h() -> LocalHamiltonian {
        let p = |b: f64| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![
                C64::new(1.0 - b, 0.0),
                C64::new(b, 0.0),
            ]))
        };
        LocalHamiltonian::new(
            RegisterLayout::new(1, 0, 0),
            vec![
                LocalTerm::new(TermPart::In, 1.0, vec![0], p(0.0)).unwrap(),
                LocalTerm::new(TermPart::In, 1.0, vec![0], p(1.0)).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn temperature_validation() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::INFINITY).is_err());
    }

    #[test]
    fn two_level_closed_form() {
        let h = diag_h(&[1.0]);
        let (rho, r) = gibbs_state(&h, Temperature::new(1.0 / LN_2).unwrap()).unwrap();
        assert!((r.populations[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((r.populations[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.mean_energy - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.partition_function - 1.5).abs() < 1e-14);
        assert!((rho.matrix()[(1, 1)].re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn high_temperature_is_maximally_mixed() {
        let h = diag_h(&[0.3, 0.7, 1.0]);
        let (rho, r) = gibbs_state(&h, Temperature::new(1e9).unwrap()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(max_abs_diff(rho.matrix(), mixed.matrix()) < 1e-8);
        let trace_over_dim = (0.3 + 0.7 + 1.0) * 4.0 / 8.0;
        assert!((r.mean_energy - trace_over_dim).abs() < 1e-8);
    }

    #[test]
    fn low_temperature_approaches_ground_state() {
        let h = diag_h(&[0.5, 1.0]);
        let (rho, r) = gibbs_state(&h, Temperature::new(1e-3).unwrap()).unwrap();
        assert!(r.mean_energy.abs() < 1e-12);
        assert!((rho.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_temperature_mixes_ground_space() {
        // ground space spanned by |00⟩ and |01⟩
        let h = diag_h(&[1.0, 0.0]);
        let (rho, r) = zero_temperature_state(&h, &Tolerances::default()).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((rho.matrix()[(1, 1)].re - 0.5).abs() < 1e-12);
        assert_eq!(r.mean_energy, 0.0);
        assert_eq!(r.temperature, 0.0);
    }

    #[test]
    fn populations_match_independent_spectrum() {
        let h = diag_h(&[0.2, 0.9, 0.4]);
        let m = spectral::assemble_dense(&h).unwrap();
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        let t = 0.37;
        let z: f64 = e.iter().map(|x| (-x / t).exp()).sum();
        let (_, r) = gibbs_state(&h, Temperature::new(t).unwrap()).unwrap();
        for (p, x) in r.populations.iter().zip(&e) {
            let expected = (-x / t).exp() / z;
            assert!((p - expected).abs() <= 1e-10 * expected);
        }
        assert!((r.populations.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((r.partition_function - z).abs() < 1e-12 * z);
    }

    #[test]
    fn mean_energy_is_monotone_in_temperature() {
        let h = diag_h(&[0.2, 0.9, 0.4, 0.1]);
        let grid = log_grid(1e-3, 1e3, 30).unwrap();
        let e: Vec<f64> = grid
            .iter()
            .map(|&t| gibbs_state(&h, t).unwrap().1.mean_energy)
            .collect();
        assert!(e.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn bound_examples() {
        let tiny = Temperature::new(1e-6).unwrap();
        assert!((mean_energy_bound(0.1, 0.3, 5, 4.0, tiny).unwrap() - 0.2).abs() < 1e-15);
        // (d−a)/(2T) = n ln 2 makes the exponential factor 1
        let (a, d, n) = (0.0, 1.0, 4usize);
        let t = Temperature::new((d - a) / (2.0 * n as f64 * LN_2)).unwrap();
        assert!((mean_energy_bound(a, d, n, 3.0, t).unwrap() - (0.5 + 3.0)).abs() < 1e-12);
        assert!(mean_energy_bound(0.3, 0.3, 1, 1.0, t).is_err());
    }

    #[test]
    fn temperature_formulas() {
        let t = fqma_temperature(10, 1.0).unwrap().value();
        assert!((t - 1.0 / (20.0 * LN_2)).abs() < 1e-15);
        assert!((t - 0.072_135).abs() < 1e-6);
        assert!((fqma_temperature(10, 2.0).unwrap().value() - t / 2.0).abs() < 1e-15);
        assert!((fqma_temperature(1, 1.0).unwrap().value() - 0.721_35).abs() < 1e-5);

        let q = qma_temperature(0.25, 3, 10).unwrap();
        assert!((q.temperature.value() - 0.5 / (4.0 * LN_2 * 4.0 * 10.0)).abs() < 1e-15);
        assert!((q.temperature.value() - 0.004_508_4).abs() < 1e-7);
        assert!((q.cutoff - 0.093_75).abs() < 1e-15);
        assert!((q.target - 0.125).abs() < 1e-15);
        let a = 0.25 / 4.0;
        assert!((q.cutoff - a - 0.5 / 16.0).abs() < 1e-15);
        assert!(qma_temperature(0.5, 3, 10).is_err());
        assert!(
            qma_temperature(0.499_999, 3, 10)
                .unwrap()
                .temperature
                .value()
                < 1e-7
        );

        let i = ising_np_temperature(1.0, 8, 0.0).unwrap();
        assert!((i.temperature.value() - 0.180_337).abs() < 1e-6);
        assert!(
            (ising_np_temperature(2.0, 8, 0.0)
                .unwrap()
                .temperature
                .value()
                - i.temperature.value() / 2.0)
                .abs()
                < 1e-15
        );
        assert_eq!(i.decision, 0.5);
        assert_eq!(i.cutoff, 0.25);
    }

    #[test]
    fn identity_is_never_a_witness() {
        for t in [0.01, 1.0, 100.0] {
            let (v, r) = gibbs_decide(&identity_h(), Temperature::new(t).unwrap(), 0.9).unwrap();
            assert_eq!(v, GibbsVerdict::NoWitness);
            assert!((r.mean_energy - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_gate_instances_are_classified() {
        let perfect = Circuit::new(
            1,
            0,
            0,
            0.25,
            vec![Gate::named(GateLabel::X, &[0]).unwrap()],
        )
        .unwrap();
        let reject = Circuit::new(
            1,
            1,
            1,
            0.25,
            vec![Gate::named(GateLabel::I, &[0]).unwrap()],
        )
        .unwrap();
        let q = qma_temperature(0.25, 1, 4).unwrap();
        let (v, _) =
            gibbs_decide(&compile(&perfect, None).unwrap(), q.temperature, q.target).unwrap();
        assert_eq!(v, GibbsVerdict::WitnessExists);
        let (v, _) =
            gibbs_decide(&compile(&reject, None).unwrap(), q.temperature, q.target).unwrap();
        assert_eq!(v, GibbsVerdict::NoWitness);
    }

    #[test]
    fn csv_row_shape() {
        let (_, mut r) = gibbs_state(&diag_h(&[1.0]), Temperature::new(0.5).unwrap()).unwrap();
        r.attach_bound(0.0, 0.5, 1).unwrap();
        let row = csv_row(&r, Some(GibbsVerdict::NoWitness));
        assert_eq!(row.split(',').count(), 7);
        assert!(row.ends_with("no-witness"));
        assert!(r.mean_energy <= r.bound_rhs.unwrap());
    }
}
