//! Linear operators acting on grid vectors.

use nalgebra::{DMatrix, DVector};

/// A square linear map on grid vectors.
///
/// `shifted_solver(σ)` returns a factorization of `I − σA` when the operator can
/// provide one cheaply; the Krylov φ-evaluator then uses shift-and-invert
/// projection, which converges independently of the mesh.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    fn shifted_solver(&self, _sigma: f64) -> Option<Box<dyn ShiftedSolver + '_>> {
        None
    }

    /// Solves `B w = r` when the operator is held as `B⁻¹L`.
    fn mass_solve(&self, _r: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// A factored `I − σA`.
pub trait ShiftedSolver {
    fn solve(&self, r: &DVector<f64>) -> DVector<f64>;
}

/// Tridiagonal matrix (`lower[i] = a[i+1][i]`, `upper[i] = a[i][i+1]`).
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len() + 1, diag.len());
        assert_eq!(upper.len() + 1, diag.len());
        Self { lower, diag, upper }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.lower[i];
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }

    /// Thomas factorization of `αI + βT`. Returns `None` on a zero pivot.
    pub fn factor_affine(&self, alpha: f64, beta: f64) -> Option<ThomasFactor> {
        let n = self.diag.len();
        let lower: Vec<f64> = self.lower.iter().map(|v| beta * v).collect();
        let upper: Vec<f64> = self.upper.iter().map(|v| beta * v).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n.saturating_sub(1));
        let mut pivot = alpha + beta * self.diag[0];
        let scale = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs())) * beta.abs() + alpha.abs();
        if pivot.abs() <= 1e-14 * scale {
            return None;
        }
        pivots.push(pivot);
        for i in 1..n {
            let m = lower[i - 1] / pivot;
            multipliers.push(m);
            pivot = alpha + beta * self.diag[i] - m * upper[i - 1];
            if pivot.abs() <= 1e-14 * scale {
                return None;
            }
            pivots.push(pivot);
        }
        Some(ThomasFactor {
            pivots,
            multipliers,
            upper,
        })
    }
}

impl LinearOperator for Tridiagonal {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.diag.len();
        DVector::from_fn(n, |i, _| {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            v
        })
    }

    fn shifted_solver(&self, sigma: f64) -> Option<Box<dyn ShiftedSolver + '_>> {
        self.factor_affine(1.0, -sigma)
            .map(|f| Box::new(f) as Box<dyn ShiftedSolver>)
    }
}

#[derive(Clone, Debug)]
pub struct ThomasFactor {
    pivots: Vec<f64>,
    multipliers: Vec<f64>,
    upper: Vec<f64>,
}

impl ThomasFactor {
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.pivots.len();
        let mut y = r.clone();
        for i in 1..n {
            y[i] -= self.multipliers[i - 1] * y[i - 1];
        }
        y[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = (y[i] - self.upper[i] * y[i + 1]) / self.pivots[i];
        }
        y
    }
}

impl ShiftedSolver for ThomasFactor {
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        ThomasFactor::solve(self, r)
    }
}

/// Dense operator; used by tests and as a reference path.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square());
        Self { matrix }
    }
}

struct DenseShifted(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>);

impl ShiftedSolver for DenseShifted {
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.0.solve(r).expect("shifted matrix checked invertible")
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn shifted_solver(&self, sigma: f64) -> Option<Box<dyn ShiftedSolver + '_>> {
        let n = self.dim();
        let shifted = DMatrix::identity(n, n) - &self.matrix * sigma;
        let lu = shifted.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Box::new(DenseShifted(lu)))
    }
}

/// Operator restricted to the plain `apply` contract (no shifted solves).
pub struct ApplyOnly<'a>(pub &'a dyn LinearOperator);

impl LinearOperator for ApplyOnly<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.apply(x)
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, row-major band storage.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    /// `αA + βB` for matrices of identical shape.
    pub fn combine(alpha: f64, a: &BandMatrix, beta: f64, b: &BandMatrix) -> BandMatrix {
        assert_eq!((a.n, a.kl, a.ku), (b.n, b.kl, b.ku));
        BandMatrix {
            n: a.n,
            kl: a.kl,
            ku: a.ku,
            data: a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = self.width();
        DVector::from_fn(self.n, |i, _| {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            (lo..=hi).map(|j| row[j + self.kl - i] * x[j]).sum()
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LU factorization without pivoting; the matrices assembled here are
    /// diagonally dominant. Returns `None` on a vanishing pivot.
    pub fn factor(&self) -> Option<BandLu> {
        let mut lu = self.clone();
        let w = lu.width();
        let (kl, ku, n) = (lu.kl, lu.ku, lu.n);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = lu.data[k * w + kl];
            if pivot.abs() <= 1e-14 * scale {
                return None;
            }
            let imax = (k + kl).min(n - 1);
            let jmax = (k + ku).min(n - 1);
            for i in k + 1..=imax {
                let idx_ik = i * w + k + kl - i;
                let m = lu.data[idx_ik] / pivot;
                lu.data[idx_ik] = m;
                if m == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let a_kj = lu.data[k * w + j + kl - k];
                    lu.data[i * w + j + kl - i] -= m * a_kj;
                }
            }
        }
        Some(BandLu { lu })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let m = &self.lu;
        let w = m.width();
        let n = m.n;
        let mut y = r.clone();
        for i in 0..n {
            let lo = i.saturating_sub(m.kl);
            let mut s = y[i];
            for j in lo..i {
                s -= m.data[i * w + j + m.kl - i] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.ku).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=hi {
                s -= m.data[i * w + j + m.kl - i] * y[j];
            }
            y[i] = s / m.data[i * w + m.kl];
        }
        y
    }
}
