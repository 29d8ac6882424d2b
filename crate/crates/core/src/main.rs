use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use trainmon::charge_solver::{build_charge_grid, build_hamiltonian};
use trainmon::io::{self, CompareConfig, DephasingConfig, DispersionConfig, FitRequest};
use trainmon::noise::dispersion_scan;
use trainmon::Error;

/// Multi-harmonic Josephson circuit design tool.
#[derive(Parser)]
#[command(name = "trainmon", version)]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Cap on worker threads for parallel scans.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a target potential with a cosine train.
    Fit { config: PathBuf },
    /// Lowest eigenvalues of a circuit in the charge basis.
    Spectrum {
        circuit: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Convergence tolerance on transition energies, GHz.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Fixed charge cutoff instead of a convergence loop.
        #[arg(long)]
        k_max: Option<usize>,
        /// Also write the Hamiltonian as row,col,re,im.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Compare a target's spectrum with a circuit's.
    Compare { target: PathBuf, circuit: PathBuf },
    /// Scan E01/E12 over the first two loop fluxes.
    Dispersion { circuit: PathBuf, scan: PathBuf },
    /// 1/f flux-noise dephasing at the circuit's bias.
    Dephasing {
        circuit: PathBuf,
        noise: Option<PathBuf>,
    },
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    io::read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn load_circuit(path: &Path) -> anyhow::Result<trainmon::TrainmonCircuit> {
    io::read_circuit(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring thread pool")?;
    }
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match cli.command {
        Command::Fit { config } => {
            let req: FitRequest = load(&config)?;
            let res = io::run_fit(&req)?;
            write(out, "fit.json", &io::to_json(&res)?)?;
            write(out, "reconstruction.csv", &io::reconstruction_csv(&req, &res)?)?;
            println!("max relative error: {:e}", res.fit.metrics.max_rel_error);
            if let Some(r) = res.fit.metrics.correlation {
                println!("correlation: {r}");
            }
        }
        Command::Spectrum {
            circuit,
            levels,
            tol,
            k_max,
            dump_matrix,
        } => {
            let c = load_circuit(&circuit)?;
            let s = io::run_spectrum(&c, levels, tol, k_max)?;
            write(out, "spectrum.json", &io::to_json(&s)?)?;
            write(out, "eigenvalues.csv", &io::eigenvalues_csv(&s))?;
            if dump_matrix {
                let k = s.k_max_used.unwrap_or(1);
                let h = build_hamiltonian(&c, &build_charge_grid(&c.branch_set(), k, 1)?)?;
                write(out, "matrix.csv", &io::matrix_csv(&h))?;
            }
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            match (s.e01, s.e12) {
                (Some(a), Some(b)) => println!("E01 = {a} GHz, E12 = {b} GHz"),
                (Some(a), None) => println!("E01 = {a} GHz"),
                _ => println!("E0 = {} GHz", s.eigenvalues[0]),
            }
        }
        Command::Compare { target, circuit } => {
            let cfg: CompareConfig = load(&target)?;
            let c = load_circuit(&circuit)?;
            let rep = io::run_compare(&cfg, &c)?;
            write(out, "comparison.json", &io::to_json(&rep)?)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", rep.table());
        }
        Command::Dispersion { circuit, scan } => {
            let c = load_circuit(&circuit)?;
            let cfg: DispersionConfig = load(&scan)?;
            let g = dispersion_scan(&c, cfg.range1, cfg.range2, cfg.grid, &cfg.convergence)?;
            write(out, "dispersion.json", &io::to_json(&g)?)?;
            write(out, "dispersion.csv", &io::dispersion_csv(&g))?;
            write(out, "extrema.csv", &io::extrema_csv(&g))?;
            println!(
                "{} nodes, {} E01 extrema, {} E12 extrema",
                g.axis1.len() * g.axis2.len(),
                g.extrema_e01.len(),
                g.extrema_e12.len()
            );
        }
        Command::Dephasing { circuit, noise } => {
            let c = load_circuit(&circuit)?;
            let cfg: DephasingConfig = match noise {
                Some(p) => load(&p)?,
                None => DephasingConfig::default(),
            };
            let res = io::run_dephasing(&c, &cfg)?;
            write(out, "dephasing.json", &io::to_json(&res)?)?;
            if !res.sweeps.is_empty() {
                write(out, "sweep.csv", &io::sweep_csv(&res.sweeps))?;
            }
            for w in &res.report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", io::dephasing_table(&res.report));
        }
    }
    Ok(())
}

/// 3 for a degenerate fit basis, 4 for solver failures, 2 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::DegenerateBasis { .. }) => 3,
        Some(err) if err.is_solver_failure() => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
