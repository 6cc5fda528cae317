use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eerk::harness::{export_csv, run_convergence, write_csv, RunConfig};
use eerk::phi::{phi_combination, phi_dense, KrylovOptions, Tridiagonal};
use eerk::stepper::{Technique, TraceMode, STEPPER_TOL};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProblemArg {
    #[value(name = "heat1d-dd")]
    Heat1dDd,
    #[value(name = "heat1d-dn")]
    Heat1dDn,
    #[value(name = "heat2d")]
    Heat2d,
}

impl ProblemArg {
    fn label(self) -> &'static str {
        match self {
            ProblemArg::Heat1dDd => "heat1d-dd",
            ProblemArg::Heat1dDn => "heat1d-dn",
            ProblemArg::Heat2d => "heat2d",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Rk2,
    Rk2b,
    Krogstad,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TechniqueArg {
    Mol,
    Corrected,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TracesArg {
    Exact,
    Numeric,
}

/// Convergence study for exponential Runge–Kutta methods on manufactured
/// reaction–diffusion problems. Writes CSV to `--out` or standard output.
#[derive(Debug, Parser)]
#[command(name = "eerk", version)]
struct Cli {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value = "rk2")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "corrected")]
    technique: TechniqueArg,
    /// Correction order for `--technique corrected`.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    p: u8,
    #[arg(long, value_enum, default_value = "exact")]
    traces: TracesArg,
    /// Interior points per direction (default 1000 in 1D, 40 in 2D).
    #[arg(long)]
    nx: Option<usize>,
    /// Step sizes, decimals or fractions such as `1/20`, strictly decreasing.
    #[arg(long, value_delimiter = ',', value_parser = parse_step)]
    k_list: Option<Vec<f64>>,
    /// Krylov tolerance per φ-combination.
    #[arg(long, default_value_t = STEPPER_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs a randomized φ-kernel self-check with this seed before the study.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_step(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s}: step size must be positive"))
    }
}

fn default_steps(problem: ProblemArg) -> Vec<f64> {
    let denominators: &[f64] = match problem {
        ProblemArg::Heat2d => &[4.0, 8.0, 16.0, 32.0],
        _ => &[20.0, 40.0, 80.0, 160.0],
    };
    denominators.iter().map(|d| 1.0 / d).collect()
}

/// Compares the Krylov φ-combination with the dense evaluation on a random
/// right-hand side and step; returns the relative difference.
fn self_check(seed: u64) -> Result<f64, eerk::phi::PhiError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 60;
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    let op = Tridiagonal::new(vec![s; n - 1], vec![-2.0 * s; n], vec![s; n - 1]);
    let tau = rng.gen_range(1e-3..1e-1);
    let vs: Vec<DVector<f64>> = (0..3)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let krylov = phi_combination(&op, tau, &vs, &KrylovOptions::default())?;
    let a: DMatrix<f64> = op.to_dense() * tau;
    let phis = phi_dense(2, &a)?;
    let mut dense = DVector::zeros(n);
    for (l, v) in vs.iter().enumerate() {
        dense += &phis[l] * v * tau.powi(l as i32);
    }
    Ok((&krylov.w - &dense).amax() / dense.amax())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(seed) = cli.seed {
        let rel = self_check(seed)?;
        let status = if rel <= 1e-8 { "PASS" } else { "FAIL" };
        eprintln!("{status} φ self-check (seed {seed}): relative difference {rel:.2e}");
    }
    let technique = match cli.technique {
        TechniqueArg::Mol => Technique::Mol,
        TechniqueArg::Corrected => Technique::Corrected { p: cli.p as usize },
    };
    let method = match cli.method {
        MethodArg::Rk2 => "rk2",
        MethodArg::Rk2b => "rk2b",
        MethodArg::Krogstad => "krogstad",
    };
    let traces = match cli.traces {
        TracesArg::Exact => TraceMode::Exact,
        TracesArg::Numeric => TraceMode::Numeric,
    };
    let k_list = cli.k_list.unwrap_or_else(|| default_steps(cli.problem));
    let mut cfg = RunConfig::new(cli.problem.label(), method, technique, k_list)
        .with_traces(traces)
        .with_tol(cli.tol);
    cfg.nx = cli.nx;
    let report = run_convergence(&cfg)?;
    for row in &report.rows {
        let order = row.observed_order.map(|o| format!("{o:.3}")).unwrap_or_default();
        match (&row.error_max, &row.failure) {
            (Some(e), _) => eprintln!("k = {:<10.6} error = {e:.3e}  order = {order}", row.k),
            (None, Some(msg)) => eprintln!("k = {:<10.6} failed: {msg}", row.k),
            (None, None) => {}
        }
    }
    match &cli.out {
        Some(path) => export_csv(&report, path)?,
        None => write_csv(&report, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
