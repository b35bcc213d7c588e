use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hycert::bench::{compare_methods, generate, BenchConfig, MethodSpec};
use hycert::certificates::{assemble_centralized, audit_certificate, CertificateSet};
use hycert::consensus::{self, ConsensusConfig, ConsensusStatus, Method};
use hycert::model::HybridSystem;
use hycert::simulate::{
    audit_dissipation, audit_dissipation_trials, default_dt, empirical_gain, simulate, GainTrialConfig, Inputs,
    Multisine, SimConfig,
};
use hycert::symla::SdpStatus;
use hycert::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_MAX_ITER: u8 = 3;

/// Compositional dissipativity certificates for interconnected hybrid systems.
#[derive(Parser, Debug)]
#[command(name = "hycert", version)]
struct Cli {
    /// TOML file with optional [bench], [consensus] and [trials] tables.
    #[arg(long, global = true, env = "HYCERT_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "HYCERT_OUT", default_value = "hycert-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random benchmark instance.
    Generate(GenerateArgs),
    /// Certify an instance by consensus ADMM (or centrally).
    Analyze(AnalyzeArgs),
    /// Compare ADMM and accelerated ADMM with several restart periods.
    Sweep(SweepArgs),
    /// Simulate one random trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Check a certificate: LMI residuals, trajectory dissipation, empirical gain.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Instance file; generated from the bench settings when absent.
    #[arg(long, env = "HYCERT_INSTANCE")]
    instance: Option<PathBuf>,

    #[arg(long, env = "HYCERT_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Admm,
    FastAdmm,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, value_enum, env = "HYCERT_METHOD")]
    method: Option<MethodArg>,

    /// Restart period of the accelerated method; 0 disables restarts.
    #[arg(long, env = "HYCERT_RESTART")]
    restart: Option<usize>,

    #[arg(long, env = "HYCERT_RHO")]
    rho: Option<f64>,

    #[arg(long, env = "HYCERT_SMOOTHING")]
    smoothing: Option<f64>,

    #[arg(long, env = "HYCERT_MAX_ITER")]
    max_iter: Option<usize>,

    #[arg(long, env = "HYCERT_TOL")]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    #[command(flatten)]
    solver: SolverArgs,

    /// Solve the monolithic problem instead of splitting it.
    #[arg(long)]
    centralized: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    #[arg(long, default_value_t = 10.0)]
    horizon: f64,

    /// Integration step; derived from the fastest mode when absent.
    #[arg(long)]
    dt: Option<f64>,

    /// Integration steps between discrete jumps.
    #[arg(long, default_value_t = 100)]
    jump_every: usize,

    /// Certificate to audit along the trajectory.
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    #[arg(long)]
    certificate: PathBuf,

    #[arg(long)]
    trials: Option<usize>,

    /// Relative tolerance of the trajectory dissipation checks.
    #[arg(long, default_value_t = 1e-3)]
    rel_tol: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    bench: BenchConfig,
    consensus: ConsensusConfig,
    trials: GainTrialConfig,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn load_system(args: &InstanceArgs, bench: &BenchConfig) -> Result<HybridSystem, Error> {
    match &args.instance {
        Some(p) => HybridSystem::load(p),
        None => generate(&bench_with_seed(bench, args.seed)),
    }
}

fn bench_with_seed(bench: &BenchConfig, seed: Option<u64>) -> BenchConfig {
    BenchConfig {
        seed: seed.unwrap_or(bench.seed),
        ..bench.clone()
    }
}

fn apply_solver(base: &ConsensusConfig, a: &SolverArgs) -> ConsensusConfig {
    let mut cfg = base.clone();
    if let Some(m) = a.method {
        cfg.method = match m {
            MethodArg::Admm => Method::Admm,
            MethodArg::FastAdmm => Method::FastAdmm,
        };
    }
    if let Some(k) = a.restart {
        cfg.restart = (k > 0).then_some(k);
    }
    cfg.rho = a.rho.unwrap_or(cfg.rho);
    cfg.smoothing = a.smoothing.unwrap_or(cfg.smoothing);
    cfg.max_iter = a.max_iter.unwrap_or(cfg.max_iter);
    cfg.tol = a.tol.unwrap_or(cfg.tol);
    cfg
}

fn save_certificate(out: &Path, cert: &CertificateSet) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    cert.save(&out.join("certificate.toml"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn run(cli: Cli) -> Result<u8, Error> {
    let file = load_config(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Generate(a) => {
            let bench = bench_with_seed(&file.bench, a.instance.seed);
            let sys = generate(&bench)?;
            std::fs::create_dir_all(out)?;
            let meta = toml::to_string(&bench).map_err(|e| Error::Parse(e.to_string()))?;
            let header: String = meta.lines().map(|l| format!("# {l}\n")).collect();
            let path = out.join("instance.toml");
            std::fs::write(&path, format!("# generator settings\n{header}\n{}", sys.to_toml()?))?;
            println!(
                "wrote {} ({} subsystems, {} continuous states, {} discrete states)",
                path.display(),
                sys.subsystems.len(),
                sys.n_states(),
                sys.n_discrete_states()
            );
            Ok(0)
        }
        Command::Analyze(a) => {
            let sys = load_system(&a.instance, &file.bench)?;
            let cfg = apply_solver(&file.consensus, &a.solver);
            if a.centralized {
                let cp = assemble_centralized(&sys.subsystems, &sys.interconnection, &cfg.objective, &cfg.cert)?;
                let res = cp.solve(&sys.subsystems, &sys.interconnection, cfg.solver_tol)?;
                println!("status {:?}", res.solution.status);
                return match (res.solution.status, res.certificate) {
                    (SdpStatus::Infeasible, _) => Ok(EXIT_INFEASIBLE),
                    (status, Some(cert)) => {
                        println!("gamma {}  eta {}", fmt_opt(cert.gamma), fmt_opt(cert.eta));
                        println!("worst residual {:.3e}", cert.worst_residual());
                        save_certificate(out, &cert)?;
                        let ok = status == SdpStatus::Optimal && cert.worst_residual() <= cfg.solver_tol.max(1e-7);
                        Ok(if ok { 0 } else { EXIT_MAX_ITER })
                    }
                    _ => Ok(EXIT_MAX_ITER),
                };
            }
            let res = consensus::run(&sys.subsystems, &sys.interconnection, &cfg)?;
            std::fs::create_dir_all(out)?;
            res.trace.save_csv(&out.join("residuals.csv"))?;
            save_certificate(out, &res.certificate)?;
            let last = res.trace.last();
            println!(
                "{:?} after {} iterations: primal {:.3e}  dual {:.3e}",
                res.status,
                res.trace.len(),
                last.map_or(f64::NAN, |r| r.primal_residual),
                last.map_or(f64::NAN, |r| r.dual_residual)
            );
            println!("gamma {}  eta {}  certified {}", fmt_opt(res.gamma), fmt_opt(res.eta), res.certified);
            Ok(match (res.certified, res.status) {
                (true, _) => 0,
                (false, ConsensusStatus::MaxIter) => EXIT_MAX_ITER,
                (false, ConsensusStatus::Converged) => EXIT_FAILURE,
            })
        }
        Command::Sweep(a) => {
            let sys = load_system(&a.instance, &file.bench)?;
            let cfg = apply_solver(&file.consensus, &a.solver);
            let methods = match (a.solver.method, a.solver.restart) {
                (Some(_), _) | (None, Some(_)) => vec![MethodSpec {
                    method: cfg.method,
                    restart: cfg.restart,
                }],
                (None, None) => MethodSpec::standard(),
            };
            let table = compare_methods(&sys, &cfg, &methods, cfg.max_iter, Some(out))?;
            print!("{table}");
            Ok(if table.rows.iter().any(|r| r.error.is_some()) { EXIT_FAILURE } else { 0 })
        }
        Command::Simulate(a) => {
            let sys = load_system(&a.instance, &file.bench)?;
            let (models, ic) = (&sys.subsystems, &sys.interconnection);
            let dt = a.dt.unwrap_or_else(|| default_dt(models));
            let cfg = SimConfig::new(dt, a.horizon, a.jump_every);
            let mut rng = ChaCha8Rng::seed_from_u64(a.instance.seed.unwrap_or(file.trials.seed));
            let d = Multisine::random(&mut rng, ic.dims.n_d, file.trials.components, file.trials.bandwidth);
            let mu: Vec<Vec<i64>> = (0..=cfg.steps() / a.jump_every)
                .map(|_| {
                    (0..ic.dims.n_mu)
                        .map(|_| ic.mu_alphabet[rng.random_range(0..ic.mu_alphabet.len())])
                        .collect()
                })
                .collect();
            let x0: Vec<_> = models
                .iter()
                .map(|m| nalgebra::DVector::from_fn(m.n(), |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let q0: Vec<i64> = models.iter().map(|m| m.dfsm().initial()).collect();
            let inputs = Inputs::new(|t| d.eval(t), |j| mu[j.min(mu.len() - 1)].clone());
            let traj = simulate(models, ic, &inputs, &x0, &q0, &cfg)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("trajectory.csv");
            traj.save_csv(&path)?;
            println!("wrote {} ({} samples, {} jumps)", path.display(), traj.samples.len(), traj.jumps.len());
            if let Some(t) = traj.diverged {
                println!("diverged at t = {t}");
            }
            if let Some(p) = &a.certificate {
                let report = audit_dissipation(models, ic, &traj, &CertificateSet::load(p)?, 1e-3)?;
                print!("{report}");
                return Ok(if report.passed() { 0 } else { EXIT_FAILURE });
            }
            Ok(0)
        }
        Command::Audit(a) => {
            let sys = load_system(&a.instance, &file.bench)?;
            let (models, ic) = (&sys.subsystems, &sys.interconnection);
            let cert = CertificateSet::load(&a.certificate)?;
            let residuals = audit_certificate(models, ic, &cert, false)?;
            let worst = residuals.iter().map(|r| r.max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
            let trials = GainTrialConfig {
                trials: a.trials.unwrap_or(file.trials.trials),
                seed: a.instance.seed.unwrap_or(file.trials.seed),
                ..file.trials.clone()
            };
            let mut report = audit_dissipation_trials(models, ic, &cert, &trials, 1.0, a.rel_tol)?;
            report
                .checks
                .insert(0, hycert::simulate::Check::new("LMI residual (max eigenvalue)", worst, 1e-7));
            if let Some(eta) = cert.eta {
                let gain = empirical_gain(models, ic, eta, &trials)?;
                report.empirical_gain = Some(gain.max_ratio);
                report.checks.push(hycert::simulate::Check::new(
                    "empirical gain / eta",
                    gain.max_ratio / eta.max(f64::MIN_POSITIVE),
                    1.0 + trials.allowance,
                ));
            }
            print!("{report}");
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("audit.toml"), report.to_toml()?)?;
            Ok(if report.passed() { 0 } else { EXIT_FAILURE })
        }
    }
}

fn main() -> ExitCode {
    // clap's usage-error code would collide with the infeasibility code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FAILURE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::LocalInfeasible { .. } | Error::GlobalInfeasible(_) => EXIT_INFEASIBLE,
                _ => EXIT_FAILURE,
            })
        }
    }
}
