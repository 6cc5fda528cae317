//! One step of an exponential Runge–Kutta method on the semidiscrete problem.
//!
//! Every stage and the update are written as
//! `e^{τA} U + Σ_l k φ_l(τA) R_l` with `τ = c_i k` for stage `i` and `τ = k`
//! for the update, and evaluated with a single [`phi_combination`] call. Each
//! slot vector `R_l` is the tableau combination of the nonlinear evaluations
//! plus `C g_c − D g_d` for boundary combinations `g_c`, `g_d` that depend on
//! the technique.
//!
//! * [`Technique::Mol`] feeds `C g(t)` (and, with a `D` lift, `D ∂(f − u̇)`)
//!   into the nonlinear term; no slot carries boundary terms.
//! * [`Technique::Corrected`] uses the simplified forms for `p = 1, 2, 3`;
//!   they need `Σ_i μ_{i,1} = 1`, `Σ_i μ_{i,l} = 0` (`l ≥ 2`) and, for
//!   `p ≥ 2`, the matching row conditions on `λ`.
//! * [`Technique::Unsimplified`] evaluates the general forms with exact
//!   traces, including the exact intermediate values `f_{n,i,1}` and
//!   `f_{n,i,2}`. It serves as a reference for the simplified forms.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use thiserror::Error;

use crate::boundary_data::{
    exact_stage_traces, exact_traces, BoundaryTraces, ExactTraceProvider, NodeTraces, NumericTraceProvider,
    StageTraces, TraceError, TraceProvider,
};
use crate::phi::{phi_combination, KrylovOptions, PhiError};
use crate::problems::ManufacturedProblem;
use crate::space_disc::{SemidiscreteOperators, SpaceError};
use crate::tableau::{check_cond_lambda, check_cond_mu, Tableau, TableauScalars};

/// Krylov tolerance used by the integrators.
pub const STEPPER_TOL: f64 = 1e-12;

/// [`KrylovOptions`] with [`STEPPER_TOL`].
pub fn stepper_krylov_options() -> KrylovOptions {
    KrylovOptions {
        tol: STEPPER_TOL,
        ..KrylovOptions::default()
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("correction order p = {p} is not supported (expected 1, 2 or 3)")]
    UnsupportedOrder { p: usize },
    #[error("tableau {name} violates the {condition} conditions (residual {residual:.2e})")]
    Condition {
        name: String,
        condition: &'static str,
        residual: f64,
    },
    #[error("the unsimplified forms need exact traces")]
    NeedsExactTraces,
    #[error("boundary traces are required by the corrected technique")]
    MissingTraces,
    #[error("step size {k} does not divide the final time {final_time}")]
    StepSize { k: f64, final_time: f64 },
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("step {n} failed: {source}")]
    AtStep {
        n: usize,
        #[source]
        source: Box<StepError>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Technique {
    Mol,
    Corrected { p: usize },
    Unsimplified { p: usize },
}

impl Technique {
    pub fn order(&self) -> Option<usize> {
        match *self {
            Technique::Mol => None,
            Technique::Corrected { p } | Technique::Unsimplified { p } => Some(p),
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technique::Mol => write!(f, "mol"),
            Technique::Corrected { p } => write!(f, "corrected-p{p}"),
            Technique::Unsimplified { p } => write!(f, "unsimplified-p{p}"),
        }
    }
}

/// Reading of the `p = 3` update boundary combinations `b_{l,c}` for `l ≥ 3`.
///
/// `Corrected` is the expansion of the general form. `Printed` keeps three
/// deviating coefficients: `c_i(Λ_i − c_i)` in front of `f_u A f`,
/// `2 f_t f_u u̇` in place of `2 f_tu u̇` and `f_u u̇²` in place of `f_uu u̇²`
/// inside the `k`-term of `b_{4,c}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reading {
    #[default]
    Corrected,
    Printed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepState {
    pub t: f64,
    pub u: DVector<f64>,
    pub k: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub u: DVector<f64>,
    pub krylov_iters: usize,
}

/// Tableau sums entering the `p = 3` update, by slot `l` (zero outside `1 ..= s`).
///
/// `Σ_i μ_{il} X_i` with
/// `X_i = (c_i/2) f_u[c_i ü + (2Λ_i − c_i) A f] + (Γ_i − c_i²/2) f_u G1 + (c_i²/2) G2`
/// splits into `xa·f_u ü + xb·f_u A f + xc·f_u G1 + xd·G2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BTermCoefficients {
    pub s: usize,
    pub m: Vec<f64>,
    pub xa: Vec<f64>,
    pub xb: Vec<f64>,
    /// `Σ_i μ_{il} c_i (Λ_i − c_i)`.
    pub xb_printed: Vec<f64>,
    pub xc: Vec<f64>,
    pub xd: Vec<f64>,
}

impl BTermCoefficients {
    pub fn new(t: &Tableau) -> Self {
        let sc = t.scalars();
        let s = t.stages();
        let slots = s + 3;
        let mut out = Self {
            s,
            m: (0..slots).map(|l| sc.m(l)).collect(),
            xa: vec![0.0; slots],
            xb: vec![0.0; slots],
            xb_printed: vec![0.0; slots],
            xc: vec![0.0; slots],
            xd: vec![0.0; slots],
        };
        for l in 1..=s {
            for i in 0..s {
                let mu = t.mu(i, l);
                let c = sc.c[i];
                out.xa[l] += mu * c * c / 2.0;
                out.xb[l] += mu * c * (2.0 * sc.big_lambda[i] - c) / 2.0;
                out.xb_printed[l] += mu * c * (sc.big_lambda[i] - c);
                out.xc[l] += mu * (sc.gamma[i] - c * c / 2.0);
                out.xd[l] += mu * c * c / 2.0;
            }
        }
        out
    }

    fn get(v: &[f64], l: usize) -> f64 {
        v.get(l).copied().unwrap_or(0.0)
    }

    /// `Σ_i μ_{il} c_i`.
    pub fn m(&self, l: usize) -> f64 {
        Self::get(&self.m, l)
    }

    fn x(&self, l: usize, n: &NodeTraces, reading: Reading) -> f64 {
        let (xb, g2) = match reading {
            Reading::Printed if l >= 2 => (Self::get(&self.xb_printed, l), n.g2_printed),
            _ => (Self::get(&self.xb, l), n.g2),
        };
        Self::get(&self.xa, l) * n.fu_uddot + xb * n.fu_af + Self::get(&self.xc, l) * n.fu_g1 + Self::get(&self.xd, l) * g2
    }
}

/// Boundary combinations of the `p = 3` update, `c[l][node]` and `d[l][node]`
/// for `l = 2 ..= s + 2`; rows `0` and `1` are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCorrectionTerms {
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

/// Evaluates `b_{l,c}` and `b_{l,d}` at every boundary node.
pub fn assemble_b_terms(
    coef: &BTermCoefficients,
    traces: &BoundaryTraces,
    k: f64,
    reading: Reading,
) -> BoundaryCorrectionTerms {
    let s = coef.s;
    let mut c = vec![Vec::new(); s + 3];
    let mut d = vec![Vec::new(); s + 3];
    for l in 2..=s + 2 {
        let (cl, dl): (Vec<f64>, Vec<f64>) = traces
            .nodes
            .iter()
            .map(|n| b_term(coef, n, l, k, reading))
            .unzip();
        c[l] = cl;
        d[l] = dl;
    }
    BoundaryCorrectionTerms { c, d }
}

fn b_term(coef: &BTermCoefficients, n: &NodeTraces, l: usize, k: f64, reading: Reading) -> (f64, f64) {
    let m = |j: usize| coef.m(j);
    match l {
        2 => (
            n.u_dot + k * m(1) * n.g1 + k * k * coef.x(1, n, reading),
            n.uddot_minus_g1() + k * m(1) * n.a_g1,
        ),
        3 => (
            m(2) * n.g1 + n.uddot_minus_g1() + k * coef.x(2, n, reading) + k * m(1) * n.a_g1,
            n.third_residual() + (m(2) - 1.0) * n.a_g1,
        ),
        4 => {
            let residual = match reading {
                Reading::Corrected => n.third_residual(),
                Reading::Printed => n.third_residual() + n.fuu_udot2 - n.fu_udot2,
            };
            (
                m(3) * n.g1 + k * (residual - n.a_g1) + k * coef.x(3, n, reading) + k * m(2) * n.a_g1,
                m(3) * n.a_g1,
            )
        }
        _ => (
            m(l - 1) * n.g1 + k * coef.x(l - 1, n, reading) + k * m(l - 2) * n.a_g1,
            m(l - 1) * n.a_g1,
        ),
    }
}

/// Boundary combinations per slot: `R_l += C c[l] − D d[l]`.
struct Lifts {
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

impl Lifts {
    fn new(slots: usize, nb: usize) -> Self {
        Self {
            c: vec![vec![0.0; nb]; slots],
            d: vec![vec![0.0; nb]; slots],
        }
    }

    fn c(&mut self, l: usize, nodes: &[NodeTraces], v: impl Fn(&NodeTraces) -> f64) {
        for (acc, n) in self.c[l].iter_mut().zip(nodes) {
            *acc += v(n);
        }
    }

    fn d(&mut self, l: usize, nodes: &[NodeTraces], v: impl Fn(&NodeTraces) -> f64) {
        for (acc, n) in self.d[l].iter_mut().zip(nodes) {
            *acc += v(n);
        }
    }

    fn c_stage(&mut self, l: usize, nodes: &[StageTraces], v: impl Fn(&StageTraces) -> f64) {
        for (acc, n) in self.c[l].iter_mut().zip(nodes) {
            *acc += v(n);
        }
    }

    fn d_stage(&mut self, l: usize, nodes: &[StageTraces], v: impl Fn(&StageTraces) -> f64) {
        for (acc, n) in self.d[l].iter_mut().zip(nodes) {
            *acc += v(n);
        }
    }

    fn add_to(&self, slots: &mut [DVector<f64>], ops: &SemidiscreteOperators) -> Result<(), SpaceError> {
        for (l, slot) in slots.iter_mut().enumerate() {
            let (gc, gd) = (&self.c[l], &self.d[l]);
            let active = gc.iter().any(|v| *v != 0.0) || (ops.has_d() && gd.iter().any(|v| *v != 0.0));
            if active {
                *slot += ops.apply_c_minus_d(gc, gd)?;
            }
        }
        Ok(())
    }
}

/// Exact traces at `t_n` and at the stages, for the unsimplified forms.
struct OracleTraces {
    now: BoundaryTraces,
    stages: Vec<Vec<StageTraces>>,
}

/// A configured method: problem, space discretization, tableau and technique.
pub struct Stepper<'a> {
    problem: &'a ManufacturedProblem,
    ops: &'a SemidiscreteOperators,
    tableau: &'a Tableau,
    scalars: TableauScalars,
    b_coef: BTermCoefficients,
    technique: Technique,
    reading: Reading,
    krylov: KrylovOptions,
}

impl<'a> Stepper<'a> {
    /// Checks the tableau conditions the technique relies on.
    pub fn new(
        problem: &'a ManufacturedProblem,
        ops: &'a SemidiscreteOperators,
        tableau: &'a Tableau,
        technique: Technique,
        krylov: KrylovOptions,
    ) -> Result<Self, StepError> {
        if let Some(p) = technique.order() {
            if !(1..=3).contains(&p) {
                return Err(StepError::UnsupportedOrder { p });
            }
            let mut checks = vec![("cond_mu", check_cond_mu(tableau))];
            if p >= 2 {
                checks.push(("cond_lambda", check_cond_lambda(tableau)));
            }
            for (condition, report) in checks {
                if !report.all_satisfied() {
                    return Err(StepError::Condition {
                        name: tableau.name().to_string(),
                        condition,
                        residual: report.max_residual(),
                    });
                }
            }
        }
        Ok(Self {
            problem,
            ops,
            tableau,
            scalars: tableau.scalars(),
            b_coef: BTermCoefficients::new(tableau),
            technique,
            reading: Reading::Corrected,
            krylov,
        })
    }

    pub fn with_reading(mut self, reading: Reading) -> Self {
        self.reading = reading;
        self
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn problem(&self) -> &ManufacturedProblem {
        self.problem
    }

    pub fn ops(&self) -> &SemidiscreteOperators {
        self.ops
    }

    pub fn b_coefficients(&self) -> &BTermCoefficients {
        &self.b_coef
    }

    /// `U_h^0 = P_h u(0)`.
    pub fn initial_state(&self) -> DVector<f64> {
        self.ops.project(|p| self.problem.u(p, 0.0))
    }

    /// `F = U.² + P h(t)`, plus the boundary forcing of the semidiscrete
    /// system for the method of lines.
    fn rhs(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>, StepError> {
        let mut f = self.ops.project(|p| self.problem.source(p, t));
        f.zip_apply(v, |fi, vi| *fi += vi * vi);
        if self.technique == Technique::Mol {
            let tr = exact_traces(self.problem, &self.ops.grid, t);
            let g = tr.field(|n| n.u);
            let minus_d = tr.field(|n| n.udot_minus_f());
            f += self.ops.apply_c_minus_d(&g, &minus_d)?;
        }
        Ok(f)
    }

    /// `e^{τA}U + Σ_l k φ_l(τA) slots[l]`.
    fn combine(&self, tau: f64, k: f64, u: &DVector<f64>, slots: &[DVector<f64>]) -> Result<StepOutput, StepError> {
        if tau == 0.0 {
            let mut w = u.clone();
            let mut fact = 1.0;
            for (l, r) in slots.iter().enumerate().skip(1) {
                fact *= l as f64;
                w.axpy(k / fact, r, 1.0);
            }
            return Ok(StepOutput { u: w, krylov_iters: 0 });
        }
        let mut vs = Vec::with_capacity(slots.len());
        vs.push(u.clone());
        for (l, r) in slots.iter().enumerate().skip(1) {
            vs.push(r * (k / tau.powi(l as i32)));
        }
        let out = phi_combination(&self.ops.a, tau, &vs, &self.krylov)?;
        Ok(StepOutput {
            u: out.w,
            krylov_iters: out.iterations,
        })
    }

    fn slot_count(&self) -> usize {
        self.tableau.stages() + 4
    }

    /// One step from `state`. `traces` are the boundary values at `state.t`;
    /// the method of lines and the unsimplified forms ignore them.
    pub fn step(&self, state: &StepState, traces: Option<&BoundaryTraces>) -> Result<StepOutput, StepError> {
        let StepState { t, ref u, k } = *state;
        let (traces, oracle) = match self.technique {
            Technique::Mol => (None, None),
            Technique::Corrected { .. } => (Some(traces.ok_or(StepError::MissingTraces)?), None),
            Technique::Unsimplified { .. } => {
                let now = exact_traces(self.problem, &self.ops.grid, t);
                let stages = exact_stage_traces(self.problem, &self.ops.grid, self.tableau, t, k);
                (None, Some(OracleTraces { now, stages }))
            }
        };
        let s = self.tableau.stages();
        let c = self.tableau.nodes();
        let nb = self.ops.boundary_len();
        let n = self.ops.dim();
        let mut fs: Vec<DVector<f64>> = Vec::with_capacity(s);
        let mut iters = 0;
        for i in 0..s {
            let mut slots = vec![DVector::zeros(n); self.slot_count()];
            for (l, slot) in slots.iter_mut().enumerate().take(s + 1).skip(1) {
                for (j, fj) in fs.iter().enumerate() {
                    let lam = self.tableau.lambda(i, j, l);
                    if lam != 0.0 {
                        slot.axpy(lam, fj, 1.0);
                    }
                }
            }
            let mut lifts = Lifts::new(self.slot_count(), nb);
            match (self.technique, traces, &oracle) {
                (Technique::Corrected { p }, Some(tr), _) => self.stage_lifts(p, i, k, &tr.nodes, &mut lifts),
                (Technique::Unsimplified { p }, _, Some(o)) => self.oracle_stage_lifts(p, i, k, o, &mut lifts),
                _ => {}
            }
            lifts.add_to(&mut slots, self.ops)?;
            let out = self.combine(c[i] * k, k, u, &slots)?;
            iters += out.krylov_iters;
            fs.push(self.rhs(t + c[i] * k, &out.u)?);
        }

        let mut slots = vec![DVector::zeros(n); self.slot_count()];
        for (l, slot) in slots.iter_mut().enumerate().take(s + 1).skip(1) {
            for (i, fi) in fs.iter().enumerate() {
                let mu = self.tableau.mu(i, l);
                if mu != 0.0 {
                    slot.axpy(mu, fi, 1.0);
                }
            }
        }
        let mut lifts = Lifts::new(self.slot_count(), nb);
        match (self.technique, traces, &oracle) {
            (Technique::Corrected { p }, Some(tr), _) => self.update_lifts(p, k, tr, &mut lifts),
            (Technique::Unsimplified { p }, _, Some(o)) => self.oracle_update_lifts(p, k, o, &mut lifts),
            _ => {}
        }
        lifts.add_to(&mut slots, self.ops)?;
        let out = self.combine(k, k, u, &slots)?;
        Ok(StepOutput {
            u: out.u,
            krylov_iters: iters + out.krylov_iters,
        })
    }

    fn stage_lifts(&self, p: usize, i: usize, k: f64, nodes: &[NodeTraces], lifts: &mut Lifts) {
        let s = self.tableau.stages();
        let ci = self.scalars.c[i];
        lifts.c(1, nodes, |n| ci * n.u);
        if p == 1 {
            return;
        }
        lifts.d(1, nodes, |n| ci * n.udot_minus_f());
        if p == 2 {
            lifts.c(2, nodes, |n| ci * ci * k * n.u_dot);
            return;
        }
        let sc = &self.scalars;
        lifts.c(2, nodes, |n| ci * k * (ci * n.u_dot + k * sc.lambda_c(i, 1) * n.g1));
        lifts.d(2, nodes, |n| ci * ci * k * n.uddot_minus_g1());
        lifts.c(3, nodes, |n| {
            ci * k * k * (ci * ci * n.u_ddot + (sc.lambda_c(i, 2) - ci * ci) * n.g1)
        });
        for l in 4..=s + 1 {
            let w = ci * k * k * sc.lambda_c(i, l - 1);
            if w != 0.0 {
                lifts.c(l, nodes, |n| w * n.g1);
            }
        }
    }

    fn update_lifts(&self, p: usize, k: f64, tr: &BoundaryTraces, lifts: &mut Lifts) {
        let s = self.tableau.stages();
        let nodes = &tr.nodes;
        let m = |l: usize| self.scalars.m(l);
        lifts.c(1, nodes, |n| n.u);
        lifts.d(1, nodes, |n| n.udot_minus_f());
        match p {
            1 => lifts.c(2, nodes, |n| k * n.u_dot),
            2 => {
                lifts.c(2, nodes, |n| k * (n.u_dot + k * m(1) * n.g1));
                lifts.d(2, nodes, |n| k * n.uddot_minus_g1());
                lifts.c(3, nodes, |n| k * k * (n.u_ddot + (m(2) - 1.0) * n.g1));
                for l in 4..=s + 1 {
                    let w = k * k * m(l - 1);
                    if w != 0.0 {
                        lifts.c(l, nodes, |n| w * n.g1);
                    }
                }
            }
            _ => {
                let b = assemble_b_terms(&self.b_coef, tr, k, self.reading);
                for l in 2..=s + 2 {
                    let w = if l == 2 { k } else { k * k };
                    for (idx, (bc, bd)) in b.c[l].iter().zip(&b.d[l]).enumerate() {
                        lifts.c[l][idx] += w * bc;
                        lifts.d[l][idx] += w * bd;
                    }
                }
            }
        }
    }

    fn oracle_stage_lifts(&self, p: usize, i: usize, k: f64, o: &OracleTraces, lifts: &mut Lifts) {
        let s = self.tableau.stages();
        let ci = self.scalars.c[i];
        let nodes = &o.now.nodes;
        lifts.c(1, nodes, |n| ci * n.u);
        if p == 1 {
            return;
        }
        lifts.d(1, nodes, |n| ci * n.a_u);
        let ck = ci * k;
        if p == 2 {
            lifts.c(2, nodes, |n| ci * ck * n.a_u);
        } else {
            lifts.c(2, nodes, |n| ci * ck * n.a_u);
            lifts.d(2, nodes, |n| ci * ck * n.a2_u);
            lifts.c(3, nodes, |n| ci * ck * ck * n.a2_u);
        }
        for j in 0..i {
            for l in 1..=s {
                let lam = self.tableau.lambda(i, j, l);
                if lam == 0.0 {
                    continue;
                }
                if p == 2 {
                    lifts.c(l + 1, nodes, |n| lam * ck * n.f);
                } else {
                    lifts.c_stage(l + 1, &o.stages[j], |st| lam * ck * st.f1);
                    lifts.d(l + 1, nodes, |n| lam * ck * n.af);
                    lifts.c(l + 2, nodes, |n| lam * ck * ck * n.af);
                }
            }
        }
    }

    fn oracle_update_lifts(&self, p: usize, k: f64, o: &OracleTraces, lifts: &mut Lifts) {
        let s = self.tableau.stages();
        let nodes = &o.now.nodes;
        lifts.c(1, nodes, |n| n.u);
        lifts.d(1, nodes, |n| n.a_u);
        lifts.c(2, nodes, |n| k * n.a_u);
        if p >= 2 {
            lifts.d(2, nodes, |n| k * n.a2_u);
            lifts.c(3, nodes, |n| k * k * n.a2_u);
        }
        if p >= 3 {
            lifts.d(3, nodes, |n| k * k * n.a3_u);
            lifts.c(4, nodes, |n| k.powi(3) * n.a3_u);
        }
        for i in 0..s {
            for l in 1..=s {
                let mu = self.tableau.mu(i, l);
                if mu == 0.0 {
                    continue;
                }
                let st = &o.stages[i];
                match p {
                    1 => lifts.c(l + 1, nodes, |n| mu * k * n.f),
                    2 => {
                        lifts.c_stage(l + 1, st, |x| mu * k * x.f1);
                        lifts.d(l + 1, nodes, |n| mu * k * n.af);
                        lifts.c(l + 2, nodes, |n| mu * k * k * n.af);
                    }
                    _ => {
                        lifts.c_stage(l + 1, st, |x| mu * k * x.f2);
                        lifts.d_stage(l + 1, st, |x| mu * k * x.a_f1);
                        lifts.c_stage(l + 2, st, |x| mu * k * k * x.a_f1);
                        lifts.d(l + 2, nodes, |n| mu * k * k * n.a2_f);
                        lifts.c(l + 3, nodes, |n| mu * k.powi(3) * n.a2_f);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    Exact,
    Numeric,
}

/// Final state and diagnostics of one integration run.
#[derive(Clone, Debug)]
pub struct Integration {
    pub u: DVector<f64>,
    pub steps: usize,
    /// Krylov vectors per step.
    pub krylov_iters: Vec<usize>,
    pub wall_seconds: f64,
}

impl Integration {
    pub fn total_krylov_iters(&self) -> usize {
        self.krylov_iters.iter().sum()
    }
}

/// Number of steps of size `k` to `final_time`, if `k` divides it.
pub fn step_count(k: f64, final_time: f64) -> Result<usize, StepError> {
    let steps = (final_time / k).round();
    if !(k > 0.0) || steps < 1.0 || (steps * k - final_time).abs() > 4.0 * f64::EPSILON * final_time {
        return Err(StepError::StepSize { k, final_time });
    }
    Ok(steps as usize)
}

/// Integrates from `P_h u(0)` to the problem's final time with step `k`.
pub fn integrate(stepper: &Stepper<'_>, mode: TraceMode, k: f64) -> Result<Integration, StepError> {
    let problem = stepper.problem();
    let grid = &stepper.ops().grid;
    let steps = step_count(k, problem.final_time)?;
    let mut provider: Option<Box<dyn TraceProvider + '_>> = match (stepper.technique(), mode) {
        (Technique::Corrected { .. }, TraceMode::Exact) => Some(Box::new(ExactTraceProvider { problem, grid })),
        (Technique::Corrected { p }, TraceMode::Numeric) => Some(Box::new(NumericTraceProvider::new(problem, grid, k, p)?)),
        (Technique::Unsimplified { .. }, TraceMode::Numeric) => return Err(StepError::NeedsExactTraces),
        _ => None,
    };
    let start = Instant::now();
    let mut state = StepState {
        t: 0.0,
        u: stepper.initial_state(),
        k,
    };
    let mut krylov_iters = Vec::with_capacity(steps);
    for n in 0..steps {
        state.t = n as f64 * k;
        let at = |e: StepError| StepError::AtStep { n, source: Box::new(e) };
        let traces = match provider.as_mut() {
            Some(p) => Some(p.traces(n, state.t, &state.u).map_err(|e| at(e.into()))?),
            None => None,
        };
        let out = stepper.step(&state, traces.as_ref()).map_err(at)?;
        state.u = out.u;
        krylov_iters.push(out.krylov_iters);
    }
    Ok(Integration {
        u: state.u,
        steps,
        krylov_iters,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
