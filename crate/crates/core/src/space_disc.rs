//! Finite-difference space discretizations on the unit interval and square.
//!
//! Each assembler returns the operators of the discrete elliptic problem
//! `A U + C g = P f + D ∂f`: the interior operator `A`, the boundary lifts `C`
//! and `D` acting on one value per boundary node, and the node set on which
//! `P` samples continuous functions.

use nalgebra::DVector;
use thiserror::Error;

use crate::phi::{BandLu, BandMatrix, LinearOperator, ShiftedSolver, Tridiagonal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("grid needs at least {min} interior nodes per direction, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("boundary vector has length {found}, expected {expected}")]
    DataLength { expected: usize, found: usize },
    #[error("discrete elliptic system is singular")]
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    /// The normal derivative is prescribed; the node itself is an unknown.
    Neumann,
}

/// Five-point one-sided difference along the inward normal.
///
/// `unknowns` are the next four nodes inward; the boundary value itself is
/// supplied by the caller. The derivative along `axis` is
/// `sign · (−25u₀ + 48u₁ − 36u₂ + 16u₃ − 3u₄)/(12h)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalStencil {
    pub axis: usize,
    pub sign: f64,
    pub unknowns: [usize; 4],
}

pub const ONE_SIDED_WEIGHTS: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];

impl NormalStencil {
    pub fn derivative(&self, boundary_value: f64, u: &DVector<f64>, h: f64) -> f64 {
        let mut acc = ONE_SIDED_WEIGHTS[0] * boundary_value;
        for (w, &idx) in ONE_SIDED_WEIGHTS[1..].iter().zip(&self.unknowns) {
            acc += w * u[idx];
        }
        self.sign * acc / (12.0 * h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNode {
    pub point: [f64; 2],
    pub kind: BoundaryKind,
    /// Outward unit normal; zero vector at corners.
    pub normal: [f64; 2],
    /// Index among the unknowns (Neumann nodes only).
    pub unknown: Option<usize>,
    /// Present on Dirichlet nodes where the normal derivative is not data.
    pub stencil: Option<NormalStencil>,
    pub corner: bool,
}

/// Uniform grid on `[0, 1]` or `[0, 1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dim: usize,
    /// Interior nodes per direction.
    pub n: usize,
    pub h: f64,
    /// Coordinates of the unknowns, in storage order; `y = 0` in one dimension.
    pub points: Vec<[f64; 2]>,
    pub boundary: Vec<BoundaryNode>,
}

/// Sparse map from boundary values to grid vectors: one list of
/// `(row, weight)` per boundary node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lift {
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl Lift {
    fn apply(&self, g: &[f64], n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (col, &gv) in self.columns.iter().zip(g) {
            if gv != 0.0 {
                for &(row, w) in col {
                    out[row] += w * gv;
                }
            }
        }
        out
    }

    /// Rows touched by the lift.
    pub fn support(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.columns.iter().flatten().map(|&(r, _)| r).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

/// Compact fourth-order operator `A = B⁻¹L` held as the pair `(B, L)`.
#[derive(Clone, Debug)]
pub struct NinePoint {
    pub stiffness: BandMatrix,
    pub mass: BandMatrix,
    mass_lu: BandLu,
}

struct NinePointShifted<'a> {
    mass: &'a BandMatrix,
    lu: BandLu,
}

impl ShiftedSolver for NinePointShifted<'_> {
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(&self.mass.matvec(r))
    }
}

impl LinearOperator for NinePoint {
    fn dim(&self) -> usize {
        self.mass.dim()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mass_lu.solve(&self.stiffness.matvec(x))
    }

    /// `(I − σB⁻¹L)x = r` is solved as `(B − σL)x = Br`.
    fn shifted_solver(&self, sigma: f64) -> Option<Box<dyn ShiftedSolver + '_>> {
        let lu = BandMatrix::combine(1.0, &self.mass, -sigma, &self.stiffness).factor()?;
        Some(Box::new(NinePointShifted { mass: &self.mass, lu }))
    }

    fn mass_solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.mass_lu.solve(r))
    }
}

#[derive(Clone, Debug)]
pub enum InteriorOperator {
    Tridiagonal(Tridiagonal),
    NinePoint(NinePoint),
}

impl LinearOperator for InteriorOperator {
    fn dim(&self) -> usize {
        match self {
            Self::Tridiagonal(t) => t.dim(),
            Self::NinePoint(m) => m.dim(),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Tridiagonal(t) => t.apply(x),
            Self::NinePoint(m) => m.apply(x),
        }
    }

    fn shifted_solver(&self, sigma: f64) -> Option<Box<dyn ShiftedSolver + '_>> {
        match self {
            Self::Tridiagonal(t) => t.shifted_solver(sigma),
            Self::NinePoint(m) => m.shifted_solver(sigma),
        }
    }

    fn mass_solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Self::Tridiagonal(_) => None,
            Self::NinePoint(m) => m.mass_solve(r),
        }
    }
}

/// `A`, `C`, `D`, `P` and the grid of one space discretization.
#[derive(Clone, Debug)]
pub struct SemidiscreteOperators {
    pub grid: Grid,
    pub a: InteriorOperator,
    /// Lift of the solution data, before any mass solve.
    pub c_lift: Lift,
    /// Lift of the source data, before any mass solve; `None` when `D = 0`.
    pub d_lift: Option<Lift>,
}

impl SemidiscreteOperators {
    pub fn dim(&self) -> usize {
        self.grid.points.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.grid.boundary.len()
    }

    fn check_len(&self, g: &[f64]) -> Result<(), SpaceError> {
        if g.len() == self.boundary_len() {
            Ok(())
        } else {
            Err(SpaceError::DataLength {
                expected: self.boundary_len(),
                found: g.len(),
            })
        }
    }

    fn unmass(&self, v: DVector<f64>) -> DVector<f64> {
        self.a.mass_solve(&v).unwrap_or(v)
    }

    /// `C g`.
    pub fn apply_c(&self, g: &[f64]) -> Result<DVector<f64>, SpaceError> {
        self.check_len(g)?;
        Ok(self.unmass(self.c_lift.apply(g, self.dim())))
    }

    /// `D g`; the zero vector when `D = 0`.
    pub fn apply_d(&self, g: &[f64]) -> Result<DVector<f64>, SpaceError> {
        self.check_len(g)?;
        Ok(match &self.d_lift {
            Some(d) => self.unmass(d.apply(g, self.dim())),
            None => DVector::zeros(self.dim()),
        })
    }

    /// `C g_c − D g_d` with a single mass solve.
    pub fn apply_c_minus_d(&self, gc: &[f64], gd: &[f64]) -> Result<DVector<f64>, SpaceError> {
        self.check_len(gc)?;
        self.check_len(gd)?;
        let mut v = self.c_lift.apply(gc, self.dim());
        if let Some(d) = &self.d_lift {
            v -= d.apply(gd, self.dim());
        }
        Ok(self.unmass(v))
    }

    pub fn has_d(&self) -> bool {
        self.d_lift.is_some()
    }

    /// `P f`: samples `f` at the unknowns.
    pub fn project(&self, f: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.grid.points.iter().map(|&p| f(p)))
    }

    /// Solves `A U = P f + D ∂f − C g` for `U`, given `pf = P f`.
    pub fn elliptic_projection(
        &self,
        pf: &DVector<f64>,
        boundary_f: &[f64],
        g: &[f64],
    ) -> Result<DVector<f64>, SpaceError> {
        self.check_len(boundary_f)?;
        self.check_len(g)?;
        match &self.a {
            InteriorOperator::Tridiagonal(t) => {
                let rhs = pf + self.apply_d(boundary_f)? - self.apply_c(g)?;
                let lu = t.factor_affine(0.0, 1.0).ok_or(SpaceError::Singular)?;
                Ok(lu.solve(&rhs))
            }
            InteriorOperator::NinePoint(m) => {
                // L U = B P f + B_bd ∂f − L_bd g
                let mut rhs = m.mass.matvec(pf) - self.c_lift.apply(g, self.dim());
                if let Some(d) = &self.d_lift {
                    rhs += d.apply(boundary_f, self.dim());
                }
                let lu = m.stiffness.factor().ok_or(SpaceError::Singular)?;
                Ok(lu.solve(&rhs))
            }
        }
    }
}

/// Second-order central differences on `[0, 1]`, Dirichlet at both ends.
pub fn assemble_1d_dirichlet(n: usize) -> Result<SemidiscreteOperators, SpaceError> {
    if n < 2 {
        return Err(SpaceError::TooSmall { n, min: 2 });
    }
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    let a = Tridiagonal::new(vec![s; n - 1], vec![-2.0 * s; n], vec![s; n - 1]);
    let points = (1..=n).map(|i| [i as f64 * h, 0.0]).collect();
    let stencil = |left: bool| {
        (n >= 4).then(|| NormalStencil {
            axis: 0,
            sign: if left { 1.0 } else { -1.0 },
            unknowns: if left { [0, 1, 2, 3] } else { [n - 1, n - 2, n - 3, n - 4] },
        })
    };
    let boundary = vec![
        BoundaryNode {
            point: [0.0, 0.0],
            kind: BoundaryKind::Dirichlet,
            normal: [-1.0, 0.0],
            unknown: None,
            stencil: stencil(true),
            corner: false,
        },
        BoundaryNode {
            point: [1.0, 0.0],
            kind: BoundaryKind::Dirichlet,
            normal: [1.0, 0.0],
            unknown: None,
            stencil: stencil(false),
            corner: false,
        },
    ];
    Ok(SemidiscreteOperators {
        grid: Grid {
            dim: 1,
            n,
            h,
            points,
            boundary,
        },
        a: InteriorOperator::Tridiagonal(a),
        c_lift: Lift {
            columns: vec![vec![(0, s)], vec![(n - 1, s)]],
        },
        d_lift: None,
    })
}

/// Dirichlet at `x = 0`, Neumann at `x = 1` with a centered difference at the
/// last node, which becomes an unknown (`n + 1` unknowns).
pub fn assemble_1d_dirichlet_neumann(n: usize) -> Result<SemidiscreteOperators, SpaceError> {
    if n < 2 {
        return Err(SpaceError::TooSmall { n, min: 2 });
    }
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    let m = n + 1;
    let mut lower = vec![s; m - 1];
    lower[m - 2] = 2.0 * s;
    let a = Tridiagonal::new(lower, vec![-2.0 * s; m], vec![s; m - 1]);
    let points = (1..=m).map(|i| [i as f64 * h, 0.0]).collect();
    let boundary = vec![
        BoundaryNode {
            point: [0.0, 0.0],
            kind: BoundaryKind::Dirichlet,
            normal: [-1.0, 0.0],
            unknown: None,
            stencil: (n >= 4).then_some(NormalStencil {
                axis: 0,
                sign: 1.0,
                unknowns: [0, 1, 2, 3],
            }),
            corner: false,
        },
        BoundaryNode {
            point: [1.0, 0.0],
            kind: BoundaryKind::Neumann,
            normal: [1.0, 0.0],
            unknown: Some(m - 1),
            stencil: None,
            corner: false,
        },
    ];
    Ok(SemidiscreteOperators {
        grid: Grid {
            dim: 1,
            n,
            h,
            points,
            boundary,
        },
        a: InteriorOperator::Tridiagonal(a),
        c_lift: Lift {
            columns: vec![vec![(0, s)], vec![(m - 1, 2.0 / h)]],
        },
        d_lift: None,
    })
}

/// Fourth-order compact nine-point scheme on `[0, 1]²` with Dirichlet data on
/// all sides: `L U + L_bd g = B(P f) + B_bd ∂f`, with
/// `L = [4·(edges) + (corners) − 20·(centre)]/(6h²)` and
/// `B = (2/3)·(centre) + (1/12)·(edges)`.
///
/// Unknowns are ordered with `x` fastest. Boundary values are indexed over all
/// perimeter nodes, corners included, in the same order.
pub fn assemble_2d_ninepoint(n: usize) -> Result<SemidiscreteOperators, SpaceError> {
    if n < 3 {
        return Err(SpaceError::TooSmall { n, min: 3 });
    }
    let h = 1.0 / (n + 1) as f64;
    let lw = 1.0 / (6.0 * h * h);
    let size = n * n;
    let unknown = |ix: usize, iy: usize| -> Option<usize> {
        ((1..=n).contains(&ix) && (1..=n).contains(&iy)).then(|| (iy - 1) * n + (ix - 1))
    };

    let mut boundary = Vec::new();
    let mut boundary_index = std::collections::HashMap::new();
    for iy in 0..=n + 1 {
        for ix in 0..=n + 1 {
            if unknown(ix, iy).is_some() {
                continue;
            }
            let on_x = ix == 0 || ix == n + 1;
            let on_y = iy == 0 || iy == n + 1;
            let corner = on_x && on_y;
            let mut normal = [0.0, 0.0];
            let mut stencil = None;
            if !corner {
                if on_x {
                    let left = ix == 0;
                    normal[0] = if left { -1.0 } else { 1.0 };
                    if n >= 4 {
                        let steps: [usize; 4] = if left { [1, 2, 3, 4] } else { [n, n - 1, n - 2, n - 3] };
                        stencil = Some(NormalStencil {
                            axis: 0,
                            sign: if left { 1.0 } else { -1.0 },
                            unknowns: steps.map(|x| unknown(x, iy).expect("interior")),
                        });
                    }
                } else {
                    let bottom = iy == 0;
                    normal[1] = if bottom { -1.0 } else { 1.0 };
                    if n >= 4 {
                        let steps: [usize; 4] = if bottom { [1, 2, 3, 4] } else { [n, n - 1, n - 2, n - 3] };
                        stencil = Some(NormalStencil {
                            axis: 1,
                            sign: if bottom { 1.0 } else { -1.0 },
                            unknowns: steps.map(|y| unknown(ix, y).expect("interior")),
                        });
                    }
                }
            }
            boundary_index.insert((ix, iy), boundary.len());
            boundary.push(BoundaryNode {
                point: [ix as f64 * h, iy as f64 * h],
                kind: BoundaryKind::Dirichlet,
                normal,
                unknown: None,
                stencil,
                corner,
            });
        }
    }

    let mut stiffness = BandMatrix::zeros(size, n + 1, n + 1);
    let mut mass = BandMatrix::zeros(size, n + 1, n + 1);
    let mut c_cols = vec![Vec::new(); boundary.len()];
    let mut d_cols = vec![Vec::new(); boundary.len()];
    let mut points = Vec::with_capacity(size);
    for iy in 1..=n {
        for ix in 1..=n {
            let row = unknown(ix, iy).expect("interior");
            points.push([ix as f64 * h, iy as f64 * h]);
            stiffness.add(row, row, -20.0 * lw);
            mass.add(row, row, 2.0 / 3.0);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let edge = dx == 0 || dy == 0;
                    let (jx, jy) = ((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
                    let lv = if edge { 4.0 * lw } else { lw };
                    match unknown(jx, jy) {
                        Some(col) => {
                            stiffness.add(row, col, lv);
                            if edge {
                                mass.add(row, col, 1.0 / 12.0);
                            }
                        }
                        None => {
                            let b = boundary_index[&(jx, jy)];
                            c_cols[b].push((row, lv));
                            if edge {
                                d_cols[b].push((row, 1.0 / 12.0));
                            }
                        }
                    }
                }
            }
        }
    }
    let mass_lu = mass.factor().ok_or(SpaceError::Singular)?;
    Ok(SemidiscreteOperators {
        grid: Grid {
            dim: 2,
            n,
            h,
            points,
            boundary,
        },
        a: InteriorOperator::NinePoint(NinePoint {
            stiffness,
            mass,
            mass_lu,
        }),
        c_lift: Lift { columns: c_cols },
        d_lift: Some(Lift { columns: d_cols }),
    })
}
