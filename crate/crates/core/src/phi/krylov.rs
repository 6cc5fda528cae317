//! Arnoldi projection and the action of φ-function combinations.

use nalgebra::{DMatrix, DVector};

use super::dense::expm;
use super::operator::LinearOperator;
use super::PhiError;

/// Krylov settings for [`phi_combination`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Relative tolerance on the result.
    pub tol: f64,
    /// Largest subspace dimension.
    pub m_max: usize,
    /// Shift parameter γ of the shift-and-invert projection, relative to τ.
    pub shift: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            m_max: 100,
            shift: 0.1,
        }
    }
}

/// Orthonormal basis `V` and Hessenberg matrix `H` with `A V_m = V_{m+1} H`.
#[derive(Clone, Debug)]
pub struct KrylovBasis {
    /// `m + 1` columns unless the process broke down.
    pub v: Vec<DVector<f64>>,
    /// `(m + 1) × m`.
    pub h: DMatrix<f64>,
    pub m: usize,
    pub breakdown: bool,
}

impl KrylovBasis {
    /// Square `H_m`.
    pub fn h_square(&self) -> DMatrix<f64> {
        self.h.view((0, 0), (self.m, self.m)).into_owned()
    }
}

const BREAKDOWN: f64 = 1e-14;

/// Modified Gram–Schmidt Arnoldi with one reorthogonalization pass, driven one
/// column at a time.
struct ArnoldiProcess<F> {
    apply: F,
    v: Vec<DVector<f64>>,
    h: Vec<Vec<f64>>,
    norm_estimate: f64,
    breakdown: bool,
}

impl<F: FnMut(&DVector<f64>) -> DVector<f64>> ArnoldiProcess<F> {
    fn new(apply: F, start: &DVector<f64>) -> Result<(Self, f64), PhiError> {
        let beta = start.norm();
        if beta == 0.0 || !beta.is_finite() {
            return Err(PhiError::ZeroStartVector);
        }
        Ok((
            Self {
                apply,
                v: vec![start / beta],
                h: Vec::new(),
                norm_estimate: 0.0,
                breakdown: false,
            },
            beta,
        ))
    }

    fn dim(&self) -> usize {
        self.h.len()
    }

    /// Adds one column; returns the subdiagonal entry.
    fn step(&mut self) -> f64 {
        let j = self.h.len();
        let mut w = (self.apply)(&self.v[j]);
        self.norm_estimate = self.norm_estimate.max(w.norm());
        let mut col = vec![0.0; j + 2];
        for _pass in 0..2 {
            for (i, vi) in self.v.iter().enumerate() {
                let c = vi.dot(&w);
                col[i] += c;
                w.axpy(-c, vi, 1.0);
            }
        }
        let hnext = w.norm();
        col[j + 1] = hnext;
        self.h.push(col);
        if hnext <= BREAKDOWN * self.norm_estimate.max(f64::MIN_POSITIVE) {
            self.breakdown = true;
        } else {
            self.v.push(w / hnext);
        }
        hnext
    }

    fn h_square(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |i, j| self.h[j].get(i).copied().unwrap_or(0.0))
    }

    fn into_basis(self) -> KrylovBasis {
        let m = self.h.len();
        let h = DMatrix::from_fn(m + 1, m, |i, j| self.h[j].get(i).copied().unwrap_or(0.0));
        KrylovBasis {
            v: self.v,
            h,
            m,
            breakdown: self.breakdown,
        }
    }
}

/// Runs up to `m` Arnoldi steps on `A` from `v`, stopping early on breakdown.
pub fn arnoldi(op: &dyn LinearOperator, v: &DVector<f64>, m: usize) -> Result<KrylovBasis, PhiError> {
    if v.len() != op.dim() {
        return Err(PhiError::DimensionMismatch {
            expected: op.dim(),
            found: v.len(),
        });
    }
    let (mut process, _) = ArnoldiProcess::new(|x: &DVector<f64>| op.apply(x), v)?;
    let m = m.min(op.dim()).max(1);
    while process.dim() < m && !process.breakdown {
        process.step();
    }
    Ok(process.into_basis())
}

/// Result of a φ-combination evaluation.
#[derive(Clone, Debug)]
pub struct PhiOutput {
    pub w: DVector<f64>,
    pub iterations: usize,
    pub error_estimate: f64,
}

/// Augmented operator `[[τA, W], [0, J]]` whose exponential applied to
/// `[v_0; η e_q]` carries `Σ_l τ^l φ_l(τA) v_l` in its leading block.
struct Augmented<'a> {
    op: &'a dyn LinearOperator,
    tau: f64,
    /// `cols[i] = τ^{q−i} v_{q−i} / η`.
    cols: Vec<DVector<f64>>,
    n: usize,
    q: usize,
}

impl Augmented<'_> {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let top = x.rows(0, self.n).into_owned();
        let mut out_top = self.op.apply(&top) * self.tau;
        for (i, col) in self.cols.iter().enumerate() {
            let xi = x[self.n + i];
            if xi != 0.0 {
                out_top.axpy(xi, col, 1.0);
            }
        }
        let mut out = DVector::zeros(self.n + self.q);
        out.rows_mut(0, self.n).copy_from(&out_top);
        for i in 0..self.q.saturating_sub(1) {
            out[self.n + i] = x[self.n + i + 1];
        }
        out
    }

    /// Solves `(I − γ·Aug) x = r` given a solver for `I − γτA`.
    fn shifted_solve(&self, gamma: f64, solver: &dyn super::operator::ShiftedSolver, r: &DVector<f64>) -> DVector<f64> {
        let mut tail = vec![0.0; self.q];
        for i in (0..self.q).rev() {
            tail[i] = r[self.n + i] + if i + 1 < self.q { gamma * tail[i + 1] } else { 0.0 };
        }
        let mut rhs = r.rows(0, self.n).into_owned();
        for (i, col) in self.cols.iter().enumerate() {
            if tail[i] != 0.0 {
                rhs.axpy(gamma * tail[i], col, 1.0);
            }
        }
        let top = solver.solve(&rhs);
        let mut out = DVector::zeros(self.n + self.q);
        out.rows_mut(0, self.n).copy_from(&top);
        for (i, t) in tail.into_iter().enumerate() {
            out[self.n + i] = t;
        }
        out
    }
}

fn first_column_exp(h: &DMatrix<f64>) -> Result<DVector<f64>, PhiError> {
    let e = expm(h)?;
    Ok(e.column(0).into_owned())
}

fn padded_diff_norm(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..new.len() {
        let o = if i < old.len() { old[i] } else { 0.0 };
        s += (new[i] - o).powi(2);
    }
    s.sqrt()
}

/// `w = Σ_{l=0}^{q} τ^l φ_l(τA) v_l` with `vs = [v_0, …, v_q]`.
///
/// The combination is the leading block of one exponential of an augmented
/// operator. When `A` offers shifted solves the exponential is projected on the
/// shift-and-invert Krylov space of `(I − γ·Aug)⁻¹`; otherwise on the polynomial
/// space with the residual estimate `β h_{m+1,m} |e_mᵀ e^{H_m} e_1|`.
pub fn phi_combination(
    op: &dyn LinearOperator,
    tau: f64,
    vs: &[DVector<f64>],
    opts: &KrylovOptions,
) -> Result<PhiOutput, PhiError> {
    let n = op.dim();
    if vs.is_empty() {
        return Err(PhiError::EmptyCombination);
    }
    for v in vs {
        if v.len() != n {
            return Err(PhiError::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(PhiError::InvalidStep { tau });
    }
    let q = vs.len() - 1;
    let scaled: Vec<DVector<f64>> = vs
        .iter()
        .enumerate()
        .map(|(l, v)| v * tau.powi(l as i32))
        .collect();
    let eta = scaled.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if eta == 0.0 {
        return Ok(PhiOutput {
            w: DVector::zeros(n),
            iterations: 0,
            error_estimate: 0.0,
        });
    }
    // Only the trailing nonzero slots need augmentation.
    let q = (1..=q).rev().find(|&l| scaled[l].norm() > 0.0).unwrap_or(0);
    let cols: Vec<DVector<f64>> = (0..q).map(|i| &scaled[q - i] / eta).collect();
    let aug = Augmented { op, tau, cols, n, q };
    let mut start = DVector::zeros(n + q);
    start.rows_mut(0, n).copy_from(&scaled[0]);
    if q > 0 {
        start[n + q - 1] = eta;
    }
    if start.norm() == 0.0 {
        return Ok(PhiOutput {
            w: DVector::zeros(n),
            iterations: 0,
            error_estimate: 0.0,
        });
    }

    let gamma = opts.shift;
    let solver = op.shifted_solver(gamma * tau);
    let (basis_v, y, iterations, estimate, beta) = match solver {
        Some(solver) => {
            let apply = |x: &DVector<f64>| aug.shifted_solve(gamma, solver.as_ref(), x);
            let (mut process, beta) = ArnoldiProcess::new(apply, &start)?;
            let mut prev: Option<DVector<f64>> = None;
            let mut result = None;
            let mut last_err = f64::INFINITY;
            for m in 1..=opts.m_max.min(n + q) {
                process.step();
                let ht = process.h_square(m);
                let h_inv = match ht.clone().try_inverse() {
                    Some(inv) => inv,
                    None => break,
                };
                let hm = (DMatrix::identity(m, m) - h_inv) / gamma;
                let y = first_column_exp(&hm)?;
                let ynorm = y.norm();
                if process.breakdown {
                    result = Some((y, m, 0.0));
                    break;
                }
                if let Some(p) = &prev {
                    last_err = beta * padded_diff_norm(&y, p);
                    if last_err <= opts.tol * beta * ynorm {
                        result = Some((y, m, last_err));
                        break;
                    }
                }
                prev = Some(y);
            }
            let (y, m, err) = result.ok_or(PhiError::NotConverged {
                m_max: opts.m_max,
                estimate: last_err,
            })?;
            let v = process.v;
            (v, y, m, err, beta)
        }
        None => {
            let apply = |x: &DVector<f64>| aug.apply(x);
            let (mut process, beta) = ArnoldiProcess::new(apply, &start)?;
            let mut result = None;
            let mut last_err = f64::INFINITY;
            for m in 1..=opts.m_max.min(n + q) {
                let hnext = process.step();
                let y = first_column_exp(&process.h_square(m))?;
                last_err = beta * hnext * y[m - 1].abs();
                if process.breakdown || last_err <= opts.tol * beta * y.norm() {
                    result = Some((y, m, last_err));
                    break;
                }
            }
            let (y, m, err) = result.ok_or(PhiError::NotConverged {
                m_max: opts.m_max,
                estimate: last_err,
            })?;
            let v = process.v;
            (v, y, m, err, beta)
        }
    };

    let mut w = DVector::zeros(n);
    for (j, yj) in y.iter().enumerate() {
        w.axpy(beta * yj, &basis_v[j].rows(0, n), 1.0);
    }
    Ok(PhiOutput {
        w,
        iterations,
        error_estimate: estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::dense::phi_dense;
    use crate::phi::operator::{ApplyOnly, DenseOperator, Tridiagonal};
    use crate::phi::scalar::phi_scalar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian(n: usize) -> Tridiagonal {
        let h = 1.0 / (n + 1) as f64;
        let s = 1.0 / (h * h);
        Tridiagonal::new(vec![s; n - 1], vec![-2.0 * s; n], vec![s; n - 1])
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_like_breaks_down_after_one_step() {
        let op = DenseOperator::new(DMatrix::identity(5, 5) * 2.0);
        let mut e1 = DVector::zeros(5);
        e1[0] = 1.0;
        let basis = arnoldi(&op, &e1, 1).unwrap();
        assert_eq!(basis.m, 1);
        assert!((basis.h[(0, 0)] - 2.0).abs() < 1e-15);
        assert!(basis.breakdown);
    }

    #[test]
    fn symmetric_operator_gives_tridiagonal_hessenberg() {
        let op = laplacian(60);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vec(&mut rng, 60);
        let basis = arnoldi(&op, &v, 10).unwrap();
        let h = basis.h_square();
        let scale = h.amax();
        for i in 0..10 {
            for j in 0..10 {
                if i > j + 1 || j > i + 1 {
                    assert!(h[(i, j)].abs() <= 1e-10 * scale, "H[{i},{j}]={}", h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn arnoldi_relation_and_orthonormality() {
        let n = 100;
        let op = laplacian(n);
        let v = DVector::from_element(n, 1.0);
        let basis = arnoldi(&op, &v, 20).unwrap();
        let m = basis.m;
        for i in 0..basis.v.len() {
            for j in 0..basis.v.len() {
                let d = basis.v[i].dot(&basis.v[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
        let vm = DMatrix::from_columns(&basis.v[..m]);
        let vm1 = DMatrix::from_columns(&basis.v[..m + 1]);
        let av = DMatrix::from_columns(&basis.v[..m].iter().map(|c| op.apply(c)).collect::<Vec<_>>());
        let residual = &av - vm1 * &basis.h;
        assert!(residual.amax() <= 1e-10 * av.amax());
        assert_eq!(vm.ncols(), 20);
    }

    #[test]
    fn zero_start_rejected() {
        let op = laplacian(10);
        assert!(matches!(arnoldi(&op, &DVector::zeros(10), 3), Err(PhiError::ZeroStartVector)));
    }

    #[test]
    fn only_phi0_term_gives_exponential_action() {
        let op = laplacian(50);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_vec(&mut rng, 50);
        let tau = 1e-3;
        let zero = DVector::zeros(50);
        let out = phi_combination(&op, tau, &[u.clone(), zero.clone(), zero], &KrylovOptions::default()).unwrap();
        let dense = phi_dense(0, &(op.to_dense() * tau)).unwrap();
        let expected = &dense[0] * &u;
        assert!((out.w - &expected).norm() <= 1e-9 * expected.norm());
    }

    #[test]
    fn scalar_phi1_closed_form() {
        let op = DenseOperator::new(DMatrix::from_element(1, 1, -1.0));
        let c = 2.5;
        let out = phi_combination(
            &op,
            1.0,
            &[DVector::zeros(1), DVector::from_element(1, c)],
            &KrylovOptions::default(),
        )
        .unwrap();
        let expected = c * (1.0 - (-1f64).exp());
        assert!((out.w[0] - expected).abs() < 1e-13);
    }

    #[test]
    fn polynomial_and_shift_invert_paths_agree() {
        let n = 40;
        let op = laplacian(n);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vs: Vec<_> = (0..3).map(|_| random_vec(&mut rng, n)).collect();
        let tau = 1e-4;
        let opts = KrylovOptions::default();
        let si = phi_combination(&op, tau, &vs, &opts).unwrap();
        let poly = phi_combination(&ApplyOnly(&op), tau, &vs, &opts).unwrap();
        assert!((&si.w - &poly.w).norm() <= 1e-9 * si.w.norm());
    }

    #[test]
    fn non_convergence_reported() {
        let op = laplacian(200);
        let v = DVector::from_element(200, 1.0);
        let opts = KrylovOptions {
            m_max: 3,
            ..KrylovOptions::default()
        };
        let err = phi_combination(&ApplyOnly(&op), 0.1, &[v], &opts).unwrap_err();
        assert!(matches!(err, PhiError::NotConverged { m_max: 3, .. }));
    }

    #[test]
    fn halving_tau_and_squaring_agree() {
        let n = 60;
        let op = laplacian(n);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_vec(&mut rng, n);
        let opts = KrylovOptions::default();
        let full = phi_combination(&op, 0.01, &[u.clone()], &opts).unwrap().w;
        let half = phi_combination(&op, 0.005, &[u], &opts).unwrap().w;
        let twice = phi_combination(&op, 0.005, &[half], &opts).unwrap().w;
        assert!((full - &twice).norm() <= 1e-10 * twice.norm().max(1e-300));
    }

    #[test]
    fn matches_eigendecomposition_reference() {
        let n = 30;
        let op = laplacian(n);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let vs: Vec<_> = (0..4).map(|_| random_vec(&mut rng, n)).collect();
        let tau: f64 = 0.002;
        let eig = op.to_dense().symmetric_eigen();
        let mut expected = DVector::zeros(n);
        for (l, v) in vs.iter().enumerate() {
            let coeffs = eig.eigenvectors.transpose() * v;
            let scaled = DVector::from_fn(n, |i, _| {
                coeffs[i] * tau.powi(l as i32) * phi_scalar(l, tau * eig.eigenvalues[i]).unwrap()
            });
            expected += &eig.eigenvectors * scaled;
        }
        let out = phi_combination(&op, tau, &vs, &KrylovOptions::default()).unwrap();
        assert!((out.w - &expected).norm() <= 1e-9 * expected.norm());
    }
}
