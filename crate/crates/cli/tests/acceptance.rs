//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL ...` line.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fqma_core::amplify::{self, AmplifyParams, STANDARD_EPSILONS, STANDARD_KS};
use fqma_core::circuit::{
    accept_probability, optimal_witness, random_circuit, Circuit, Gate, GateLabel,
};
use fqma_core::clockham::{compile, history_state, LocalHamiltonian, LocalTerm, TermPart};
use fqma_core::qcore::{tensor_product, DensityMatrix, Operator, PureState, RegisterLayout, C64};
use fqma_core::spectral::{self, SolverConfig};
use fqma_core::thermal::{self, GibbsVerdict};
use fqma_core::witness::{self, extract_witness};

fn report(n: usize, pass: bool, start: Instant, detail: String) {
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n}: {} ({:.2}s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn gate(label: GateLabel, q: &[usize]) -> Gate {
    Gate::named(label, q).unwrap()
}

/// Random named gates on the input register, then the first input qubit is
/// copied into the last ancilla, which is the accept qubit. Some input is
/// accepted with certainty.
fn perfect_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, l: usize) -> Circuit {
    assert!(m >= 1 && l >= 1);
    let mut gates = if l > 1 {
        random_circuit(rng, n, 0, l - 1).gates().to_vec()
    } else {
        Vec::new()
    };
    gates.push(gate(GateLabel::Cnot, &[0, n + m - 1]));
    Circuit::new(n, m, n + m - 1, 0.25, gates).unwrap()
}

/// Gates never touch the last ancilla, which is the accept qubit.
fn all_reject_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, l: usize) -> Circuit {
    assert!(m >= 1);
    let gates = random_circuit(rng, n + m - 1, 0, l).gates().to_vec();
    Circuit::new(n, m, n + m - 1, 0.25, gates).unwrap()
}

fn random_psd_term(rng: &mut ChaCha8Rng, n: usize, k: usize) -> LocalTerm {
    let mut qs: Vec<usize> = (0..n).collect();
    qs.shuffle(rng);
    let mut support = qs[..k].to_vec();
    support.sort_unstable();
    let g = Operator::random_hermitian(k, rng).into_matrix();
    let psd = &g * g.adjoint();
    let top = fqma_core::qcore::hermitian_eigenvalues(&psd)
        .last()
        .copied()
        .unwrap();
    let m: DMatrix<C64> = psd / C64::new(top, 0.0);
    LocalTerm::new(TermPart::Local, rng.gen_range(0.1..1.5), support, m).unwrap()
}

fn random_psd_hamiltonian(rng: &mut ChaCha8Rng, n: usize, terms: usize) -> LocalHamiltonian {
    let t = (0..terms)
        .map(|_| random_psd_term(rng, n, 3.min(n)))
        .collect();
    LocalHamiltonian::new(RegisterLayout::new(n, 0, 0), t).unwrap()
}

#[test]
fn criterion_01_history_energy_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(0..=4 - n);
        let l = rng.gen_range(1..=5);
        let c = random_circuit(&mut rng, n, m, l);
        let psi = PureState::random(n, &mut rng);
        let h = compile(&c, None).unwrap();
        let eta = history_state(&c, &psi).unwrap();
        let p = accept_probability(&c, &psi.to_density())
            .unwrap()
            .accept_probability;
        let expected = (1.0 - p) / (l as f64 + 1.0);
        worst = worst.max((h.energy(&eta).unwrap() - expected).abs());
    }
    let pass = worst <= 1e-9 && start.elapsed().as_secs_f64() < 60.0;
    report(
        1,
        pass,
        start,
        format!("25 circuits, max |tr(eta H) - (1-p)/(L+1)| = {worst:.3e}"),
    );
}

#[test]
fn criterion_02_perfect_witness_ground_energy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let shapes = [
        (1, 1, 1),
        (1, 1, 2),
        (2, 1, 3),
        (1, 2, 4),
        (2, 2, 4),
        (3, 1, 4),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (n, m, l) in shapes {
        let t0 = Instant::now();
        let c = perfect_instance(&mut rng, n, m, l);
        assert!((optimal_witness(&c).unwrap().probability - 1.0).abs() < 1e-12);
        let h = compile(&c, None).unwrap();
        let g = spectral::min_eigenvalue(&h, &SolverConfig::default()).unwrap();
        let w = extract_witness(&g.ground_state.to_density(), &c).unwrap();
        let ok = g.min_eigenvalue <= 1e-9
            && w.accept_probability >= 0.999
            && t0.elapsed().as_secs_f64() < 30.0;
        pass &= ok;
        lines.push(format!(
            "[{} qubits: lambda_min={:.3e} accept={:.6}]",
            h.num_qubits(),
            g.min_eigenvalue,
            w.accept_probability
        ));
    }
    report(2, pass, start, lines.join(" "));
}

#[test]
fn criterion_03_all_reject_lower_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut scaled = Vec::new();
    let mut pass = true;
    for l in 2..=5 {
        let c = all_reject_instance(&mut rng, 1, 1, l);
        assert!(optimal_witness(&c).unwrap().probability < 1e-12);
        let h = compile(&c, None).unwrap();
        let lambda = spectral::min_eigenvalue(&h, &SolverConfig::default())
            .unwrap()
            .min_eigenvalue;
        pass &= lambda > 0.0;
        scaled.push((l, lambda, lambda * (l as f64).powi(3)));
    }
    let c = scaled.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    pass &= c > 0.0;
    let detail: Vec<String> = scaled
        .iter()
        .map(|(l, lam, s)| format!("L={l}: lambda_min={lam:.4e} lambda_min*L^3={s:.4}"))
        .collect();
    report(
        3,
        pass,
        start,
        format!("{}; common constant c={c:.4}", detail.join(", ")),
    );
}

#[test]
fn criterion_04_propagation_spectrum() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    for l in 1..=6 {
        let c = random_circuit(&mut rng, 1, 1, l);
        let numeric = spectral::conjugated_propagation_spectrum(&c, None).unwrap();
        let closed = spectral::propagation_spectrum(l).unwrap();
        let mult = 1 << c.work_qubits();
        assert_eq!(numeric.len(), closed.len() * mult);
        for (i, v) in numeric.iter().enumerate() {
            worst = worst.max((v - closed[i / mult]).abs());
        }
    }
    report(
        4,
        worst <= 1e-9,
        start,
        format!("L=1..6, max deviation {worst:.3e}"),
    );
}

#[test]
fn criterion_05_povm_verifier() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst_closed: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for i in 0..20 {
        let n = rng.gen_range(3..=5);
        let terms = rng.gen_range(1..=6);
        let h = random_psd_hamiltonian(&mut rng, n, terms);
        let rho = DensityMatrix::random(n, rng.gen_range(1..=4), &mut rng);
        let assembled = spectral::assemble_dense(&h).unwrap();
        let direct = 1.0 - (rho.matrix() * assembled).trace().re / h.total_weight();
        let accept = witness::povm_verifier_accept(&rho, &h).unwrap();
        worst_closed = worst_closed.max((accept - direct).abs());
        let shots = 100_000u64;
        let rate = witness::povm_verifier_sample(&rho, &h, shots, 500 + i).unwrap();
        let se = (accept * (1.0 - accept) / shots as f64).sqrt();
        worst_sigma = worst_sigma.max((rate - accept).abs() / se.max(1e-300));
    }
    let pass = worst_closed <= 1e-12 && worst_sigma <= 3.0;
    report(
        5,
        pass,
        start,
        format!("20 pairs, closed-form gap {worst_closed:.3e}, worst sampling deviation {worst_sigma:.2} sigma"),
    );
}

#[test]
fn criterion_06_amplification_bounds() {
    let start = Instant::now();
    let mut pass = true;
    let mut rows = 0;
    for k in STANDARD_KS {
        for eps in STANDARD_EPSILONS {
            let p = AmplifyParams::new(k, eps).unwrap();
            let b = amplify::tail_bounds(&p).unwrap();
            assert!((b.threshold_l as f64) / (k as f64) < 1.0 - eps);
            pass &= b.exact_reject <= b.kl_bound;
            pass &= b.exact_reject <= (b.threshold_l as f64 + 1.0) * b.sqrt_k_bound;
            rows += 1;
        }
    }
    let mut kl_violations = 0;
    for i in 1..=100 {
        for j in 1..=100 {
            let (p, q) = (i as f64 / 101.0, j as f64 / 101.0);
            if amplify::kl_divergence(p, q) < 2.0 / std::f64::consts::LN_2 * (p - q).powi(2) - 1e-15
            {
                kl_violations += 1;
            }
        }
    }
    pass &= kl_violations == 0 && start.elapsed().as_secs_f64() < 10.0;
    report(
        6,
        pass,
        start,
        format!("{rows} (k, eps) rows, {kl_violations} KL grid violations"),
    );
}

#[test]
fn criterion_07_naive_restriction() {
    let start = Instant::now();
    let reject = amplify::naive_restriction_reject(2.0 / 3.0, 1.0 / 3.0).unwrap();
    let mut pass = reject == 1.0 / 3.0;
    // explicit k-copy products: 2k/3 always-accepted |1⟩ copies, k/3 rejected |0⟩ copies
    let good = PureState::basis(1, 1).unwrap().to_density();
    let bad = PureState::basis(1, 0).unwrap().to_density();
    let mut per_k = Vec::new();
    for k in [3usize, 6, 9] {
        let mut joint = if k / 3 > 0 { bad.clone() } else { good.clone() };
        for i in 1..k {
            joint = tensor_product(&joint, if i < k / 3 { &bad } else { &good }).unwrap();
        }
        let r: f64 = (0..k)
            .map(|i| joint.partial_trace(&[i]).unwrap().matrix()[(0, 0)].re)
            .sum::<f64>()
            / k as f64;
        pass &= (r - 1.0 / 3.0).abs() < 1e-12;
        per_k.push(format!("k={k}: {r:.15}"));
    }
    report(
        7,
        pass,
        start,
        format!("reject={reject:.15}; {}", per_k.join(", ")),
    );
}

#[test]
fn criterion_08_mean_energy_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let grid = thermal::log_grid(1e-3, 1e2, 20).unwrap();
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..50 {
        let n = rng.gen_range(3..=8);
        let terms = rng.gen_range(n..=2 * n);
        let h = random_psd_hamiltonian(&mut rng, n, terms);
        let (_, base) = thermal::gibbs_state(&h, grid[0]).unwrap();
        let a = base.lambda_min;
        let d = a + rng.gen_range(0.05..0.9) * (base.e_max - a);
        for &t in &grid {
            let (_, r) = thermal::gibbs_state(&h, t).unwrap();
            let rhs = thermal::mean_energy_bound(a, d, n, r.e_max, t).unwrap();
            checks += 1;
            if r.mean_energy > rhs {
                violations += 1;
            }
        }
    }
    report(
        8,
        violations == 0,
        start,
        format!("{checks} (H, T) points, {violations} violations"),
    );
}

#[test]
fn criterion_09_thermal_decision() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut instances: Vec<(bool, Circuit)> = Vec::new();
    for l in 1..=4 {
        instances.push((true, perfect_instance(&mut rng, 1, 1, l)));
        instances.push((false, all_reject_instance(&mut rng, 1, 1, l)));
    }
    instances.push((true, perfect_instance(&mut rng, 2, 1, 3)));
    instances.push((false, all_reject_instance(&mut rng, 2, 1, 3)));
    let mut correct = 0;
    let mut lines = Vec::new();
    for (has_witness, c) in &instances {
        let l = c.len();
        let n = c.work_qubits() + l;
        let q = thermal::qma_temperature(0.25, l, n).unwrap();
        let h = compile(c, None).unwrap();
        let (verdict, r) = thermal::gibbs_decide(&h, q.temperature, q.target).unwrap();
        let expected = if *has_witness {
            GibbsVerdict::WitnessExists
        } else {
            GibbsVerdict::NoWitness
        };
        if verdict == expected {
            correct += 1;
        }
        lines.push(format!(
            "[L={l} {} mean={:.4e} d={:.4e} -> {verdict}]",
            if *has_witness {
                "perfect"
            } else {
                "all-reject"
            },
            r.mean_energy,
            q.target
        ));
    }
    let pass = correct == instances.len() && start.elapsed().as_secs_f64() < 300.0;
    report(
        9,
        pass,
        start,
        format!("{correct}/{} correct {}", instances.len(), lines.join(" ")),
    );
}

fn run_cli(args: &[&str], dir: &Path) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_fqma"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    (out.stdout, out.status.code().unwrap_or(-1))
}

#[test]
fn criterion_10_cli_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let circuit = "n_input 1\nn_ancilla 1\naccept 1\nepsilon 0.25\ngate H 0\ngate CNOT 0 1\n";
    std::fs::write(dir.path().join("c.txt"), circuit).unwrap();
    let (h, code) = run_cli(&["compile", "c.txt"], dir.path());
    assert_eq!(code, 0);
    std::fs::write(dir.path().join("h.txt"), &h).unwrap();
    let small = random_psd_hamiltonian(&mut ChaCha8Rng::seed_from_u64(110), 4, 5);
    std::fs::write(dir.path().join("small.txt"), small.to_text()).unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["compile", "c.txt"],
        vec!["--seed", "7", "spectrum", "h.txt", "--k", "3"],
        vec![
            "--seed",
            "7",
            "spectrum",
            "small.txt",
            "--method",
            "iterative",
        ],
        vec!["--seed", "7", "witness", "c.txt", "--target", "inf"],
        vec![
            "--seed",
            "7",
            "witness",
            "c.txt",
            "--source",
            "gibbs:0.05",
            "--target",
            "inf",
        ],
        vec!["--seed", "7", "amplify", "--sweep", "--mc", "2000"],
        vec![
            "--seed",
            "7",
            "gibbs",
            "h.txt",
            "--temp",
            "0.01,0.1,1",
            "--d",
            "0.1",
            "--decide",
        ],
        vec![
            "--seed",
            "7",
            "gibbs",
            "h.txt",
            "--auto-qma",
            "0.25",
            "2",
            "5",
            "--decide",
        ],
    ];
    let mut identical = 0;
    for args in &commands {
        let (a, ca) = run_cli(args, dir.path());
        let (b, cb) = run_cli(args, dir.path());
        if ca == 0 && cb == 0 && a == b && !a.is_empty() {
            identical += 1;
        } else {
            println!("not reproducible: {args:?} (exit {ca}/{cb})");
        }
    }
    report(
        10,
        identical == commands.len(),
        start,
        format!(
            "{identical}/{} commands byte-identical on re-run",
            commands.len()
        ),
    );
}
