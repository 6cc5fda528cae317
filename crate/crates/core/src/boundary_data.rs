//! Boundary quantities consumed by the corrected steppers.
//!
//! Every field of [`NodeTraces`] is the boundary operator `∂` applied to a
//! field: the value on Dirichlet nodes, the outward normal derivative on
//! Neumann nodes. Notation: `G1 = f_t + f_u u̇`,
//! `G2 = f_tt + 2 f_tu u̇ + f_uu u̇²`.

use std::collections::VecDeque;

use nalgebra::DVector;
use thiserror::Error;

use crate::jet::Jet12;
use crate::problems::{source_jet, ManufacturedProblem};
use crate::space_disc::{BoundaryKind, BoundaryNode, Grid};
use crate::tableau::Tableau;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("history holds {have} levels, stencil needs {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("numeric traces for Neumann nodes are available for p ≤ 2 only (requested p = {p})")]
    UnsupportedNeumannOrder { p: usize },
    #[error("numeric traces need four inward nodes behind every Dirichlet node")]
    MissingStencil,
    #[error("traces requested for step {got}, expected step {expected}")]
    OutOfSequence { expected: usize, got: usize },
}

/// Boundary values at one node and one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodeTraces {
    pub u: f64,
    pub u_dot: f64,
    pub u_ddot: f64,
    pub u_dddot: f64,
    pub f: f64,
    /// `∂G1`.
    pub g1: f64,
    pub af: f64,
    /// `∂A G1`.
    pub a_g1: f64,
    pub fu_g1: f64,
    pub fu_uddot: f64,
    pub fu_af: f64,
    /// `∂G2`.
    pub g2: f64,
    /// `∂(f_tt + 2 f_t f_u u̇ + f_uu u̇²)`.
    pub g2_printed: f64,
    /// `∂(f_u u̇²)`.
    pub fu_udot2: f64,
    /// `∂(f_uu u̇²)`.
    pub fuu_udot2: f64,
    /// `∂Au`, `∂A²u`, `∂A³u`, `∂A²f`; NaN when not provided.
    pub a_u: f64,
    pub a2_u: f64,
    pub a3_u: f64,
    pub a2_f: f64,
}

impl NodeTraces {
    pub fn udot_minus_f(&self) -> f64 {
        self.u_dot - self.f
    }

    pub fn uddot_minus_g1(&self) -> f64 {
        self.u_ddot - self.g1
    }

    /// `∂(u⃛ − G2 − f_u ü)`.
    pub fn third_residual(&self) -> f64 {
        self.u_dddot - self.g2 - self.fu_uddot
    }
}

/// Stage-dependent boundary values used only by the unsimplified forms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTraces {
    /// `∂f(t + c k, u + c k u̇)`.
    pub f1: f64,
    /// `∂A f(t + c k, u + c k u̇)`.
    pub a_f1: f64,
    /// `∂f_{n,i,2}`.
    pub f2: f64,
}

/// All boundary nodes at one time level, in grid order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryTraces {
    pub t: f64,
    pub nodes: Vec<NodeTraces>,
}

impl BoundaryTraces {
    pub fn field(&self, get: impl Fn(&NodeTraces) -> f64) -> Vec<f64> {
        self.nodes.iter().map(get).collect()
    }

    pub fn zeros(t: f64, len: usize) -> Self {
        Self {
            t,
            nodes: vec![NodeTraces::default(); len],
        }
    }
}

/// `∂` of a jet in the phase: the value, or the phase derivative on Neumann nodes.
fn boundary_op(node: &BoundaryNode, v: &Jet12) -> f64 {
    match node.kind {
        BoundaryKind::Dirichlet => v.value(),
        BoundaryKind::Neumann => v.derivative(1),
    }
}

/// `Δ` of a plane-wave field.
fn laplacian(dim: usize, v: &Jet12) -> Jet12 {
    v.d().d() * dim as f64
}

fn node_phase(node: &BoundaryNode, t: f64) -> f64 {
    t + node.point[0] + node.point[1]
}

/// Exact boundary values of every traced quantity at time `t`.
pub fn exact_traces(problem: &ManufacturedProblem, grid: &Grid, t: f64) -> BoundaryTraces {
    let d = problem.dim;
    let nodes = grid
        .boundary
        .iter()
        .map(|node| {
            let theta = Jet12::variable(node_phase(node, t));
            let u = problem.profile.eval(theta);
            let h = source_jet(problem.profile, d, theta);
            let (u1, u2, u3) = (u.d(), u.d().d(), u.d().d().d());
            let fu = u * 2.0;
            let f = u * u + h;
            let g1 = h.d() + fu * u1;
            let af = laplacian(d, &f);
            let g2 = h.d().d() + u1 * u1 * 2.0;
            let g2_printed = h.d().d() + h.d() * fu * u1 * 2.0 + u1 * u1 * 2.0;
            let op = |v: Jet12| boundary_op(node, &v);
            NodeTraces {
                u: op(u),
                u_dot: op(u1),
                u_ddot: op(u2),
                u_dddot: op(u3),
                f: op(f),
                g1: op(g1),
                af: op(af),
                a_g1: op(laplacian(d, &g1)),
                fu_g1: op(fu * g1),
                fu_uddot: op(fu * u2),
                fu_af: op(fu * af),
                g2: op(g2),
                g2_printed: op(g2_printed),
                fu_udot2: op(fu * u1 * u1),
                fuu_udot2: op(u1 * u1 * 2.0),
                a_u: op(laplacian(d, &u)),
                a2_u: op(laplacian(d, &laplacian(d, &u))),
                a3_u: op(laplacian(d, &laplacian(d, &laplacian(d, &u)))),
                a2_f: op(laplacian(d, &af)),
            }
        })
        .collect();
    BoundaryTraces { t, nodes }
}

/// Exact stage-dependent values for the unsimplified forms: `result[i][node]`.
pub fn exact_stage_traces(
    problem: &ManufacturedProblem,
    grid: &Grid,
    tableau: &Tableau,
    t: f64,
    k: f64,
) -> Vec<Vec<StageTraces>> {
    let d = problem.dim;
    let s = tableau.stages();
    let c = tableau.nodes();
    grid_stage_jets(grid, t, |node, theta0| {
        let theta = Jet12::variable(theta0);
        let u = problem.profile.eval(theta);
        let u1 = u.d();
        let f = u * u + source_jet(problem.profile, d, theta);
        let af = laplacian(d, &f);
        let a_u = laplacian(d, &u);
        let a2_u = laplacian(d, &a_u);
        let f1 = |ci: f64| {
            let v = u + u1 * (ci * k);
            v * v + source_jet(problem.profile, d, Jet12::variable(theta0 + ci * k))
        };
        let f1s: Vec<Jet12> = c.iter().map(|&cj| f1(cj)).collect();
        (0..s)
            .map(|i| {
                let ci = c[i];
                let mut arg = u + a_u * (ci * k) + a2_u * (0.5 * (ci * k).powi(2));
                for (j, f1j) in f1s.iter().enumerate() {
                    for l in 1..=s {
                        let lam = tableau.lambda(i, j, l);
                        if lam != 0.0 {
                            let fl = inv_factorial(l);
                            let fl1 = inv_factorial(l + 1);
                            arg = arg + (*f1j * fl + af * (ci * k * fl1)) * (k * lam);
                        }
                    }
                }
                let f2 = arg * arg + source_jet(problem.profile, d, Jet12::variable(theta0 + ci * k));
                StageTraces {
                    f1: boundary_op(node, &f1s[i]),
                    a_f1: boundary_op(node, &laplacian(d, &f1s[i])),
                    f2: boundary_op(node, &f2),
                }
            })
            .collect()
    })
}

fn grid_stage_jets(
    grid: &Grid,
    t: f64,
    per_node: impl Fn(&BoundaryNode, f64) -> Vec<StageTraces>,
) -> Vec<Vec<StageTraces>> {
    let by_node: Vec<Vec<StageTraces>> = grid.boundary.iter().map(|n| per_node(n, node_phase(n, t))).collect();
    let s = by_node.first().map_or(0, Vec::len);
    (0..s).map(|i| by_node.iter().map(|v| v[i]).collect()).collect()
}

fn inv_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc / j as f64)
}

/// Backward-difference time differentiation stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BdfKind {
    /// `(3y_n − 4y_{n−1} + y_{n−2})/(2k)`.
    First2,
    /// `(25y_n − 48y_{n−1} + 36y_{n−2} − 16y_{n−3} + 3y_{n−4})/(12k)`.
    First4,
    /// Four-point BDF applied to the sequence of three-point BDF first derivatives.
    Second4,
}

impl BdfKind {
    /// Levels of history consumed.
    pub fn width(self) -> usize {
        match self {
            BdfKind::First2 => 3,
            BdfKind::First4 => 5,
            BdfKind::Second4 => 7,
        }
    }
}

const BDF2: [f64; 3] = [3.0, -4.0, 1.0];
const BDF4: [f64; 5] = [25.0, -48.0, 36.0, -16.0, 3.0];

/// Ring buffer of per-node values at uniformly spaced time levels, newest first.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceHistory {
    pub k: f64,
    depth: usize,
    levels: VecDeque<Vec<f64>>,
}

impl TraceHistory {
    pub fn new(k: f64, depth: usize) -> Self {
        Self {
            k,
            depth: depth.max(BdfKind::Second4.width()),
            levels: VecDeque::new(),
        }
    }

    pub fn push(&mut self, values: Vec<f64>) {
        self.levels.push_front(values);
        self.levels.truncate(self.depth);
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn latest(&self) -> Option<&[f64]> {
        self.levels.front().map(Vec::as_slice)
    }

    fn combine(&self, offset: usize, weights: &[f64], scale: f64) -> Vec<f64> {
        let width = self.levels[offset].len();
        (0..width)
            .map(|node| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * self.levels[offset + j][node])
                    .sum::<f64>()
                    / scale
            })
            .collect()
    }
}

/// Time derivative at the newest level of `hist`.
pub fn bdf_time_derivative(hist: &TraceHistory, kind: BdfKind) -> Result<Vec<f64>, TraceError> {
    if hist.len() < kind.width() {
        return Err(TraceError::InsufficientHistory {
            have: hist.len(),
            need: kind.width(),
        });
    }
    let k = hist.k;
    Ok(match kind {
        BdfKind::First2 => hist.combine(0, &BDF2, 2.0 * k),
        BdfKind::First4 => hist.combine(0, &BDF4, 12.0 * k),
        BdfKind::Second4 => {
            let firsts: Vec<Vec<f64>> = (0..5).map(|o| hist.combine(o, &BDF2, 2.0 * k)).collect();
            let width = firsts[0].len();
            (0..width)
                .map(|node| BDF4.iter().zip(&firsts).map(|(w, v)| w * v[node]).sum::<f64>() / (12.0 * k))
                .collect()
        }
    })
}

/// Ratio above which the stepsize–meshsize coupling is reported.
pub const CFL_LIMIT: f64 = 1.0;

/// Supplies boundary traces at successive time levels.
pub trait TraceProvider {
    /// Traces at step `n` (time `t`), given the numerical solution `u` at that level.
    fn traces(&mut self, n: usize, t: f64, u: &DVector<f64>) -> Result<BoundaryTraces, TraceError>;
}

/// Traces from the exact solution.
pub struct ExactTraceProvider<'a> {
    pub problem: &'a ManufacturedProblem,
    pub grid: &'a Grid,
}

impl TraceProvider for ExactTraceProvider<'_> {
    fn traces(&mut self, _n: usize, t: f64, _u: &DVector<f64>) -> Result<BoundaryTraces, TraceError> {
        Ok(exact_traces(self.problem, self.grid, t))
    }
}

/// Traces from boundary data, the source, and the numerical solution.
///
/// Dirichlet values and their time derivatives, tangential derivatives along a
/// side and every source term are data. Normal derivatives come from the
/// one-sided five-point stencil applied to the numerical solution, and their
/// time derivatives from four-step BDF; the first four levels use exact
/// values. On Neumann nodes the solution value is the numerical one and its
/// time derivative comes from the initial datum, then a second-order Taylor
/// step, then two-step BDF.
pub struct NumericTraceProvider<'a> {
    problem: &'a ManufacturedProblem,
    grid: &'a Grid,
    k: f64,
    normal: TraceHistory,
    neumann: TraceHistory,
    neumann_udot: Vec<f64>,
    next: usize,
    cfl_ratio: f64,
}

impl<'a> NumericTraceProvider<'a> {
    pub fn new(problem: &'a ManufacturedProblem, grid: &'a Grid, k: f64, p: usize) -> Result<Self, TraceError> {
        let has_neumann = grid.boundary.iter().any(|b| b.kind == BoundaryKind::Neumann);
        if has_neumann && p > 2 {
            return Err(TraceError::UnsupportedNeumannOrder { p });
        }
        let missing = grid
            .boundary
            .iter()
            .any(|b| b.kind == BoundaryKind::Dirichlet && !b.corner && b.stencil.is_none());
        if missing {
            return Err(TraceError::MissingStencil);
        }
        let cfl_ratio = k / grid.h;
        if cfl_ratio > CFL_LIMIT {
            log::warn!("k/h = {cfl_ratio:.3} exceeds {CFL_LIMIT}; one-sided space differences enter the boundary terms");
        }
        Ok(Self {
            problem,
            grid,
            k,
            normal: TraceHistory::new(k, 8),
            neumann: TraceHistory::new(k, 8),
            neumann_udot: vec![f64::NAN; grid.boundary.len()],
            next: 0,
            cfl_ratio,
        })
    }

    /// `k / h`, the first-derivative coupling ratio.
    pub fn cfl_ratio(&self) -> f64 {
        self.cfl_ratio
    }

    fn normal_axis(node: &BoundaryNode) -> Option<usize> {
        node.stencil.map(|s| s.axis)
    }
}

impl TraceProvider for NumericTraceProvider<'_> {
    fn traces(&mut self, n: usize, t: f64, u: &DVector<f64>) -> Result<BoundaryTraces, TraceError> {
        if n != self.next {
            return Err(TraceError::OutOfSequence { expected: self.next, got: n });
        }
        self.next += 1;
        let pr = self.problem;
        let rt = pr.reaction();
        let d = pr.dim as f64;
        let h = self.grid.h;

        let normals: Vec<f64> = self
            .grid
            .boundary
            .iter()
            .map(|b| match b.stencil {
                Some(s) => s.derivative(pr.u(b.point, t), u, h),
                None => f64::NAN,
            })
            .collect();
        self.normal.push(normals.clone());
        let normal_dot = if self.normal.len() >= BdfKind::First4.width() {
            Some(bdf_time_derivative(&self.normal, BdfKind::First4)?)
        } else {
            None
        };

        let un: Vec<f64> = self
            .grid
            .boundary
            .iter()
            .map(|b| b.unknown.map_or(f64::NAN, |i| u[i]))
            .collect();
        self.neumann.push(un.clone());
        let neumann_dot: Vec<f64> = match n {
            0 => self
                .grid
                .boundary
                .iter()
                .map(|b| pr.u_dt(b.point, t, 1))
                .collect(),
            1 => {
                let prev = &self.neumann.levels[1];
                (0..un.len())
                    .map(|i| 2.0 * (un[i] - prev[i]) / self.k - self.neumann_udot[i])
                    .collect()
            }
            _ => bdf_time_derivative(&self.neumann, BdfKind::First2)?,
        };
        self.neumann_udot = neumann_dot.clone();

        let nodes = self
            .grid
            .boundary
            .iter()
            .enumerate()
            .map(|(idx, b)| {
                let theta = node_phase(b, t);
                let src = |m: usize| rt.source(theta, m);
                match b.kind {
                    BoundaryKind::Dirichlet => {
                        let g: [f64; 4] = std::array::from_fn(|m| pr.u_dt(b.point, t, m));
                        // Gradient and its time derivative: data along the side,
                        // stencil and BDF across it.
                        let mut grad = [0.0; 2];
                        let mut grad_dot = [0.0; 2];
                        for axis in 0..pr.dim {
                            if Self::normal_axis(b) == Some(axis) {
                                grad[axis] = normals[idx];
                                grad_dot[axis] = match &normal_dot {
                                    Some(v) => v[idx],
                                    None => pr.u_dt(b.point, t, 2),
                                };
                            } else {
                                grad[axis] = pr.u_dt(b.point, t, 1);
                                grad_dot[axis] = pr.u_dt(b.point, t, 2);
                            }
                        }
                        let grad2 = grad[0] * grad[0] + grad[1] * grad[1];
                        let grad_gdot = grad[0] * grad_dot[0] + grad[1] * grad_dot[1];
                        let (r1, r2, r3) = (rt.r_u(g[0]), rt.r_uu(g[0]), rt.r_uuu(g[0]));
                        let f = rt.r(g[0]) + src(0);
                        let g1 = src(1) + r1 * g[1];
                        let af = r2 * grad2 + r1 * (g[1] - f) + d * src(2);
                        let a_g1 = d * src(3)
                            + r3 * grad2 * g[1]
                            + r2 * (g[1] - f) * g[1]
                            + 2.0 * r2 * grad_gdot
                            + r1 * (g[2] - g1);
                        let g2 = src(2) + r2 * g[1] * g[1];
                        NodeTraces {
                            u: g[0],
                            u_dot: g[1],
                            u_ddot: g[2],
                            u_dddot: g[3],
                            f,
                            g1,
                            af,
                            a_g1,
                            fu_g1: r1 * g1,
                            fu_uddot: r1 * g[2],
                            fu_af: r1 * af,
                            g2,
                            g2_printed: src(2) + 2.0 * src(1) * r1 * g[1] + r2 * g[1] * g[1],
                            fu_udot2: r1 * g[1] * g[1],
                            fuu_udot2: r2 * g[1] * g[1],
                            a_u: g[1] - f,
                            a2_u: g[2] - g1 - af,
                            a3_u: f64::NAN,
                            a2_f: f64::NAN,
                        }
                    }
                    BoundaryKind::Neumann => {
                        let gn: [f64; 3] = std::array::from_fn(|m| pr.g(b.point, t, true, m));
                        let (uval, udot) = (un[idx], neumann_dot[idx]);
                        let r1 = rt.r_u(uval);
                        let r2 = rt.r_uu(uval);
                        let f = r1 * gn[0] + src(1);
                        let g1 = src(2) + r2 * gn[0] * udot + r1 * gn[1];
                        NodeTraces {
                            u: gn[0],
                            u_dot: gn[1],
                            u_ddot: gn[2],
                            f,
                            g1,
                            a_u: gn[1] - f,
                            u_dddot: f64::NAN,
                            af: f64::NAN,
                            a_g1: f64::NAN,
                            fu_g1: f64::NAN,
                            fu_uddot: f64::NAN,
                            fu_af: f64::NAN,
                            g2: f64::NAN,
                            g2_printed: f64::NAN,
                            fu_udot2: f64::NAN,
                            fuu_udot2: f64::NAN,
                            a2_u: f64::NAN,
                            a3_u: f64::NAN,
                            a2_f: f64::NAN,
                        }
                    }
                }
            })
            .collect();
        Ok(BoundaryTraces { t, nodes })
    }
}
