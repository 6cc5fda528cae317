//! Convergence studies: run one configuration over a list of step sizes,
//! measure the max-norm error at the final time and the observed orders.

use std::fs::File;
use std::path::Path;

use thiserror::Error;

use crate::phi::KrylovOptions;
use crate::problems::{by_label, BoundaryConditions, ManufacturedProblem};
use crate::space_disc::{
    assemble_1d_dirichlet, assemble_1d_dirichlet_neumann, assemble_2d_ninepoint, SemidiscreteOperators, SpaceError,
};
use crate::stepper::{integrate, Reading, StepError, Stepper, Technique, TraceMode, STEPPER_TOL};
use crate::tableau::{builtin, TableauError};

pub const CSV_HEADER: [&str; 5] = ["k", "error_max", "observed_order", "wall_seconds", "krylov_iters"];

pub const DEFAULT_NX_1D: usize = 1000;
pub const DEFAULT_NX_2D: usize = 40;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("step sizes must be positive and strictly decreasing")]
    StepSizes,
    #[error("report has no rows")]
    EmptyReport,
    #[error("efficiency table needs at least two reports")]
    TooFewReports,
    #[error("reports are for different problems ({0} and {1})")]
    MismatchedProblems(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `heat1d-dd`, `heat1d-dn` or `heat2d`.
    pub problem: String,
    pub method: String,
    pub technique: Technique,
    pub traces: TraceMode,
    pub reading: Reading,
    /// Interior points per direction; `None` selects the default grid.
    pub nx: Option<usize>,
    pub k_list: Vec<f64>,
    pub tol: f64,
}

impl RunConfig {
    pub fn new(problem: &str, method: &str, technique: Technique, k_list: Vec<f64>) -> Self {
        Self {
            problem: problem.to_string(),
            method: method.to_string(),
            technique,
            traces: TraceMode::Exact,
            reading: Reading::Corrected,
            nx: None,
            k_list,
            tol: STEPPER_TOL,
        }
    }

    pub fn with_traces(mut self, traces: TraceMode) -> Self {
        self.traces = traces;
        self
    }

    pub fn with_nx(mut self, nx: usize) -> Self {
        self.nx = Some(nx);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_reading(mut self, reading: Reading) -> Self {
        self.reading = reading;
        self
    }

    fn validate(&self) -> Result<ManufacturedProblem, HarnessError> {
        let problem = by_label(&self.problem).ok_or_else(|| HarnessError::UnknownProblem(self.problem.clone()))?;
        let ok = !self.k_list.is_empty()
            && self.k_list.iter().all(|k| *k > 0.0 && k.is_finite())
            && self.k_list.windows(2).all(|w| w[1] < w[0]);
        if !ok {
            return Err(HarnessError::StepSizes);
        }
        Ok(problem)
    }
}

/// Space discretization for a problem, with the default grid when `nx` is `None`.
pub fn discretize(problem: &ManufacturedProblem, nx: Option<usize>) -> Result<SemidiscreteOperators, SpaceError> {
    match problem.bc {
        BoundaryConditions::DirichletDirichlet => assemble_1d_dirichlet(nx.unwrap_or(DEFAULT_NX_1D)),
        BoundaryConditions::DirichletNeumann => assemble_1d_dirichlet_neumann(nx.unwrap_or(DEFAULT_NX_1D)),
        BoundaryConditions::DirichletSquare => assemble_2d_ninepoint(nx.unwrap_or(DEFAULT_NX_2D)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub k: f64,
    /// `None` when the integration failed.
    pub error_max: Option<f64>,
    pub observed_order: Option<f64>,
    /// The order uses the general formula because `k` did not halve.
    pub order_generalized: bool,
    pub wall_seconds: f64,
    pub krylov_iters: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub method: String,
    pub technique: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.error_max).collect()
    }

    /// Observed order of the last row.
    pub fn finest_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.observed_order)
    }
}

/// `log(e_prev / e) / log(k_prev / k)`; the flag is set unless `k` halved.
pub fn observed_order(k_prev: f64, e_prev: f64, k: f64, e: f64) -> (f64, bool) {
    let ratio = k_prev / k;
    if (ratio - 2.0).abs() <= 1e-12 {
        ((e_prev / e).log2(), false)
    } else {
        ((e_prev / e).ln() / ratio.ln(), true)
    }
}

/// Integrates the configuration once per step size and records the
/// max-norm error against `P_h u(T)`. Failed rows are kept with their
/// message and do not stop the study.
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceReport, HarnessError> {
    let problem = cfg.validate()?;
    let ops = discretize(&problem, cfg.nx)?;
    let tableau = builtin(&cfg.method)?;
    let opts = KrylovOptions {
        tol: cfg.tol,
        ..KrylovOptions::default()
    };
    let stepper = Stepper::new(&problem, &ops, &tableau, cfg.technique, opts)?.with_reading(cfg.reading);
    let exact = ops.project(|p| problem.u(p, problem.final_time));

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.k_list.len());
    for &k in &cfg.k_list {
        let row = match integrate(&stepper, cfg.traces, k) {
            Ok(run) => ConvergenceRow {
                k,
                error_max: Some((&run.u - &exact).amax()),
                observed_order: None,
                order_generalized: false,
                wall_seconds: run.wall_seconds,
                krylov_iters: run.total_krylov_iters(),
                failure: None,
            },
            Err(e) => {
                log::error!("k = {k}: {e}");
                ConvergenceRow {
                    k,
                    error_max: None,
                    observed_order: None,
                    order_generalized: false,
                    wall_seconds: 0.0,
                    krylov_iters: 0,
                    failure: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    for i in 1..rows.len() {
        if let (Some(e0), Some(e1)) = (rows[i - 1].error_max, rows[i].error_max) {
            let (order, generalized) = observed_order(rows[i - 1].k, e0, rows[i].k, e1);
            if generalized {
                log::warn!("k = {}: step size did not halve, order from the general formula", rows[i].k);
            }
            rows[i].observed_order = Some(order);
            rows[i].order_generalized = generalized;
        }
    }
    Ok(ConvergenceReport {
        problem: cfg.problem.clone(),
        method: cfg.method.clone(),
        technique: cfg.technique.to_string(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the report as CSV with the header [`CSV_HEADER`].
pub fn write_csv<W: std::io::Write>(report: &ConvergenceReport, out: W) -> Result<(), HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.k.to_string(),
            opt(r.error_max),
            opt(r.observed_order),
            r.wall_seconds.to_string(),
            r.krylov_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report to `path`. An empty report is an error and creates no file.
pub fn export_csv(report: &ConvergenceReport, path: &Path) -> Result<(), HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    write_csv(report, File::create(path)?)
}

/// Error against wall time for one (method, technique) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyColumn {
    pub method: String,
    pub technique: String,
    /// `(wall_seconds, error_max)` for every successful row.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyTable {
    pub problem: String,
    pub columns: Vec<EfficiencyColumn>,
}

impl EfficiencyTable {
    pub fn column(&self, method: &str, technique: &str) -> Option<&EfficiencyColumn> {
        self.columns
            .iter()
            .find(|c| c.method == method && c.technique == technique)
    }
}

/// Aligns several reports on the same problem for error-versus-time plots.
pub fn efficiency_table(reports: &[ConvergenceReport]) -> Result<EfficiencyTable, HarnessError> {
    if reports.len() < 2 {
        return Err(HarnessError::TooFewReports);
    }
    let problem = &reports[0].problem;
    if let Some(other) = reports.iter().find(|r| &r.problem != problem) {
        return Err(HarnessError::MismatchedProblems(problem.clone(), other.problem.clone()));
    }
    let columns = reports
        .iter()
        .map(|r| EfficiencyColumn {
            method: r.method.clone(),
            technique: r.technique.clone(),
            points: r
                .rows
                .iter()
                .filter_map(|row| row.error_max.map(|e| (row.wall_seconds, e)))
                .collect(),
        })
        .collect();
    Ok(EfficiencyTable {
        problem: problem.clone(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: f64, e: f64) -> ConvergenceRow {
        ConvergenceRow {
            k,
            error_max: Some(e),
            observed_order: None,
            order_generalized: false,
            wall_seconds: 0.5,
            krylov_iters: 10,
            failure: None,
        }
    }

    fn report(rows: Vec<ConvergenceRow>) -> ConvergenceReport {
        ConvergenceReport {
            problem: "heat1d-dd".into(),
            method: "rk2".into(),
            technique: "mol".into(),
            rows,
        }
    }

    #[test]
    fn halving_gives_log2() {
        let (order, flagged) = observed_order(0.1, 1e-2, 0.05, 2.5e-3);
        assert!((order - 2.0).abs() < 1e-14);
        assert!(!flagged);
        let (order, flagged) = observed_order(0.3, 9e-2, 0.1, 1e-2);
        assert!((order - 2.0).abs() < 1e-14);
        assert!(flagged);
    }

    #[test]
    fn csv_layout() {
        let mut r = report(vec![row(0.1, 1e-2), row(0.05, 2.5e-3)]);
        r.rows[1].observed_order = Some(2.0);
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "k,error_max,observed_order,wall_seconds,krylov_iters");
        assert_eq!(lines[1], "0.1,0.01,,0.5,10");
        assert_eq!(lines[2], "0.05,0.0025,2,0.5,10");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_report_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(matches!(export_csv(&report(vec![]), &path), Err(HarnessError::EmptyReport)));
        assert!(!path.exists());
    }

    #[test]
    fn invalid_step_lists_rejected() {
        for ks in [vec![], vec![0.1, 0.2], vec![0.1, 0.1], vec![-0.1]] {
            let cfg = RunConfig::new("heat1d-dd", "rk2", Technique::Mol, ks);
            assert!(matches!(run_convergence(&cfg), Err(HarnessError::StepSizes)));
        }
        let cfg = RunConfig::new("wave", "rk2", Technique::Mol, vec![0.5]);
        assert!(matches!(run_convergence(&cfg), Err(HarnessError::UnknownProblem(_))));
    }

    #[test]
    fn failed_rows_are_recorded() {
        let cfg = RunConfig::new("heat1d-dd", "rk2", Technique::Mol, vec![0.5, 0.3, 0.25]).with_nx(30);
        let r = run_convergence(&cfg).unwrap();
        assert!(r.rows[1].failure.is_some());
        assert!(r.rows[1].error_max.is_none());
        assert!(r.rows[2].error_max.is_some());
        assert!(r.rows[2].observed_order.is_none());
    }

    #[test]
    fn efficiency_table_checks_problems() {
        let a = report(vec![row(0.1, 1e-2)]);
        let t = efficiency_table(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(t.columns[0], t.columns[1]);
        assert!(matches!(efficiency_table(&[a.clone()]), Err(HarnessError::TooFewReports)));
        let mut b = a.clone();
        b.problem = "heat2d".into();
        assert!(matches!(efficiency_table(&[a, b]), Err(HarnessError::MismatchedProblems(..))));
    }
}
