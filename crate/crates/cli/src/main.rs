use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use fqma_core::amplify;
use fqma_core::circuit::Circuit;
use fqma_core::clockham::{self, LocalHamiltonian, TermPart};
use fqma_core::qcore::{fmt_f64, Tolerances};
use fqma_core::seeding::derive_seed;
use fqma_core::spectral::{self, Method, PromiseGap, SolverConfig};
use fqma_core::thermal::{self, Temperature};
use fqma_core::witness::{
    self, FqmaParams, GibbsSource, GroundStateSource, LowEnergySource, Restriction,
};
use fqma_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fqma",
    version,
    about = "Compile verifier circuits to clock Hamiltonians and analyse them"
)]
struct Cli {
    /// Master seed; every random stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override a numerical tolerance, e.g. `--tolerance residual=1e-9`.
    #[arg(long = "tolerance", global = true, value_name = "NAME=VALUE")]
    tolerances: Vec<String>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a circuit file into a local Hamiltonian term list.
    Compile(CompileArgs),
    /// Lowest eigenvalues of a term-list Hamiltonian.
    Spectrum(SpectrumArgs),
    /// Prepare a low-energy state of the compiled verifier and extract a witness.
    Witness(WitnessArgs),
    /// Majority-vote rejection probabilities and tail bounds as CSV.
    Amplify(AmplifyArgs),
    /// Gibbs mean energies of a term-list Hamiltonian as CSV.
    Gibbs(GibbsArgs),
}

#[derive(Args, Debug)]
struct CompileArgs {
    circuit: PathBuf,
    /// Clock penalty weight (default L^12).
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    hamiltonian: PathBuf,
    /// Number of lowest eigenvalues to report.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// dense | iterative (alias sparse).
    #[arg(long, default_value = "dense")]
    method: Method,
    /// Classify against thresholds `a,d,b`.
    #[arg(long, value_delimiter = ',', value_name = "A,D,B")]
    promise: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct WitnessArgs {
    circuit: PathBuf,
    /// groundstate | gibbs:<T>
    #[arg(long, default_value = "groundstate")]
    source: String,
    /// Verifier copies in the meta-verifier.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Allowed acceptance loss.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Energy the source must reach (`inf` disables the check).
    #[arg(long)]
    target: Option<f64>,
    /// random | average
    #[arg(long, default_value = "random")]
    restriction: Restriction,
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args, Debug)]
struct AmplifyArgs {
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Monte Carlo shots per row (0 disables).
    #[arg(long, default_value_t = 0)]
    mc: u64,
    /// Use the grid k ∈ {16,81,256,625} × ε ∈ {0.05,0.1,0.25,1/3}.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args, Debug)]
struct GibbsArgs {
    hamiltonian: PathBuf,
    /// Temperatures to evaluate.
    #[arg(long, value_delimiter = ',', required_unless_present = "auto_qma")]
    temp: Vec<f64>,
    /// Use the cooling temperature for error `eps`, `L` gates and `n` qubits.
    #[arg(long, num_args = 3, value_names = ["EPS", "L", "N"])]
    auto_qma: Option<Vec<String>>,
    /// Report a verdict against the decision energy.
    #[arg(long)]
    decide: bool,
    /// Ground-energy parameter of the bound (default: exact lambda_min).
    #[arg(long)]
    a: Option<f64>,
    /// Target energy of the bound and decision energy.
    #[arg(long)]
    d: Option<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Argument(_)) | Some(Error::Dimension { .. }) => 2,
        Some(Error::Parse { .. }) => 3,
        Some(Error::Resource { .. }) => 4,
        Some(Error::Convergence { .. }) => 5,
        Some(Error::Numerical(_)) => 6,
        Some(Error::Regime(_)) => 7,
        Some(Error::EnergyAboveTarget { .. }) => 8,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut tol = Tolerances::default();
    for entry in &cli.tolerances {
        let (name, value) = entry
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("tolerance '{entry}' is not NAME=VALUE")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Argument(format!("tolerance value '{value}' is not a number")))?;
        tol.set(name, value)?;
    }
    let output = match &cli.command {
        Command::Compile(a) => compile(a)?,
        Command::Spectrum(a) => spectrum(a, cli.seed, &tol)?,
        Command::Witness(a) => witness_cmd(a, cli.seed)?,
        Command::Amplify(a) => amplify_cmd(a, cli.seed)?,
        Command::Gibbs(a) => gibbs(a)?,
    };
    match &cli.out {
        Some(path) => {
            fs::write(path, output).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(output.as_bytes())?,
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_circuit(path: &Path) -> anyhow::Result<Circuit> {
    Circuit::parse(&read(path)?)
        .map_err(anyhow::Error::new)
        .with_context(|| path.display().to_string())
}

fn load_hamiltonian(path: &Path) -> anyhow::Result<LocalHamiltonian> {
    LocalHamiltonian::parse(&read(path)?)
        .map_err(anyhow::Error::new)
        .with_context(|| path.display().to_string())
}

fn summary(h: &LocalHamiltonian) -> Vec<String> {
    let counts: Vec<String> = TermPart::ALL
        .iter()
        .map(|&p| format!("{p}={}", h.count(p)))
        .collect();
    let mut hist = std::collections::BTreeMap::new();
    for t in h.terms() {
        *hist.entry(t.locality()).or_insert(0usize) += 1;
    }
    let hist: Vec<String> = hist.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    vec![
        format!("terms {}", counts.join(" ")),
        format!("locality {}", hist.join(" ")),
        format!("total_weight {}", fmt_f64(h.total_weight())),
    ]
}

fn compile(a: &CompileArgs) -> anyhow::Result<String> {
    let c = load_circuit(&a.circuit)?;
    let h = clockham::compile(&c, a.penalty)?;
    let mut out = String::new();
    for line in summary(&h) {
        eprintln!("{line}");
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&h.to_text());
    Ok(out)
}

fn spectrum(a: &SpectrumArgs, seed: u64, tol: &Tolerances) -> anyhow::Result<String> {
    let h = load_hamiltonian(&a.hamiltonian)?;
    let cfg = SolverConfig {
        method: a.method,
        num_eigenvalues: a.k,
        seed: derive_seed(seed, "spectrum"),
        tolerances: *tol,
        ..SolverConfig::default()
    };
    let report = spectral::min_eigenvalue(&h, &cfg)?;
    let mut out = report.to_text();
    if let Some(p) = &a.promise {
        if p.len() != 3 {
            bail!(Error::Argument(
                "--promise takes exactly three values a,d,b".into()
            ));
        }
        let gap = PromiseGap::new(p[0], p[1], p[2])?;
        out.push_str(&format!(
            "verdict {}\n",
            spectral::classify(report.min_eigenvalue, &gap)
        ));
    }
    Ok(out)
}

fn witness_cmd(a: &WitnessArgs, seed: u64) -> anyhow::Result<String> {
    let c = load_circuit(&a.circuit)?;
    let mut params = FqmaParams::new(a.delta, a.k, derive_seed(seed, "witness"))?;
    params.restriction = a.restriction;
    params.clock_penalty = a.penalty;
    params.target_energy = a.target;
    let source: Box<dyn LowEnergySource> = match a.source.as_str() {
        "groundstate" => Box::new(GroundStateSource),
        s => match s.strip_prefix("gibbs:") {
            Some(t) => {
                let t: f64 = t
                    .parse()
                    .map_err(|_| Error::Argument(format!("bad temperature in '{s}'")))?;
                if params.target_energy.is_none() {
                    // thermal sources aim for the decision energy of the meta-verifier
                    let l = a.k * c.len();
                    params.target_energy = Some(1.0 / (2.0 * (l as f64 + 1.0)));
                }
                Box::new(GibbsSource(Temperature::new(t)?))
            }
            None => bail!(Error::Argument(format!(
                "unknown source '{s}' (groundstate | gibbs:<T>)"
            ))),
        },
    };
    let result = witness::solve_fqma(&c, &params, source.as_ref())?;
    eprintln!(
        "accept_probability {} energy {} sufficient_k {}",
        fmt_f64(result.accept_probability),
        fmt_f64(result.energy_of_source),
        witness::sufficient_k(a.delta)?
    );
    if !result.flags.is_empty() {
        let flags: Vec<String> = result.flags.iter().map(|f| f.to_string()).collect();
        eprintln!("flags {}", flags.join(","));
    }
    let mut out = result.to_text();
    out.push_str(&format!(
        "# sufficient_k {}\n",
        witness::sufficient_k(a.delta)?
    ));
    Ok(out)
}

fn amplify_cmd(a: &AmplifyArgs, seed: u64) -> anyhow::Result<String> {
    let (ks, eps) = if a.sweep {
        (
            amplify::STANDARD_KS.to_vec(),
            amplify::STANDARD_EPSILONS.to_vec(),
        )
    } else {
        if a.k.is_empty() || a.eps.is_empty() {
            bail!(Error::Argument("give --k and --eps, or --sweep".into()));
        }
        (a.k.clone(), a.eps.clone())
    };
    let rows = amplify::sweep(&ks, &eps, a.mc, derive_seed(seed, "amplify"))?;
    Ok(amplify::sweep_csv(&rows))
}

fn gibbs(a: &GibbsArgs) -> anyhow::Result<String> {
    let h = load_hamiltonian(&a.hamiltonian)?;
    let mut temps = Vec::new();
    for &t in &a.temp {
        temps.push(Temperature::new(t)?);
    }
    let mut d = a.d;
    if let Some(v) = &a.auto_qma {
        let eps: f64 = v[0]
            .parse()
            .map_err(|_| Error::Argument(format!("bad epsilon '{}'", v[0])))?;
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Argument(format!("bad count '{s}'")))
        };
        let q = thermal::qma_temperature(eps, parse_count(&v[1])?, parse_count(&v[2])?)?;
        eprintln!(
            "temperature {} cutoff {} target {}",
            fmt_f64(q.temperature.value()),
            fmt_f64(q.cutoff),
            fmt_f64(q.target)
        );
        temps.push(q.temperature);
        d = d.or(Some(q.target));
    }
    if a.decide && d.is_none() {
        bail!(Error::Argument("--decide needs --d or --auto-qma".into()));
    }
    let mut out = format!("{}\n", thermal::CSV_HEADER);
    for t in temps {
        let (_, mut report) = thermal::gibbs_state(&h, t)?;
        let lower = a.a.unwrap_or(report.lambda_min);
        if let Some(d) = d {
            if d > lower {
                report.attach_bound(lower, d, h.num_qubits())?;
            } else {
                eprintln!("bound skipped: d={d} is not above a={lower}");
            }
        }
        let verdict = d
            .filter(|_| a.decide)
            .map(|d| thermal::classify_mean_energy(report.mean_energy, d));
        out.push_str(&thermal::csv_row(&report, verdict));
        out.push('\n');
    }
    Ok(out)
}
