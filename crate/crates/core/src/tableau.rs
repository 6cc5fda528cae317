//! Exponential Runge–Kutta tableaux in the (λ, μ, c) form
//!
//! `a_ij(z) = Σ_l λ_{ijl} φ_l(c_i z)` and `b_i(z) = Σ_l μ_{il} φ_l(z)`.
//!
//! Coefficients are stored as exact rationals so the order and simplifying
//! conditions can be checked with zero residual.

use std::fmt::Write as _;
use std::str::FromStr;

use num_rational::{Ratio, Rational64};
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Residual at or below which a condition counts as satisfied.
pub const CONDITION_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableauError {
    #[error("unknown tableau `{0}`")]
    UnknownName(String),
    #[error("stage count must be positive")]
    NoStages,
    #[error("coefficient arrays do not match {s} stages")]
    Shape { s: usize },
    #[error("λ_{{{i},{j},{l}}} is nonzero for j ≥ i; the method must be explicit")]
    NotExplicit { i: usize, j: usize, l: usize },
    #[error("node c_{i} = {value} lies outside [0, 1]")]
    NodeOutOfRange { i: usize, value: f64 },
    #[error("Theorem requires s ≤ q ≤ 4, got s = {s}, q = {q}")]
    TheoremInapplicable { s: usize, q: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// An explicit exponential Runge–Kutta method.
///
/// Indices are zero-based for stages (`i`, `j`) and one-based for the φ-slot `l`
/// (`l = 1 … s`), matching the order of φ_l.
#[derive(Clone, Debug, PartialEq)]
pub struct Tableau {
    name: String,
    s: usize,
    order: usize,
    c: Vec<Rational64>,
    /// `lambda[i][j][l - 1]`.
    lambda: Vec<Vec<Vec<Rational64>>>,
    /// `mu[i][l - 1]`.
    mu: Vec<Vec<Rational64>>,
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

impl Tableau {
    pub fn new(
        name: impl Into<String>,
        order: usize,
        c: Vec<Rational64>,
        lambda: Vec<Vec<Vec<Rational64>>>,
        mu: Vec<Vec<Rational64>>,
    ) -> Result<Self, TableauError> {
        let s = c.len();
        if s == 0 {
            return Err(TableauError::NoStages);
        }
        let shape_ok = lambda.len() == s
            && lambda.iter().all(|row| row.len() == s && row.iter().all(|v| v.len() == s))
            && mu.len() == s
            && mu.iter().all(|row| row.len() == s);
        if !shape_ok {
            return Err(TableauError::Shape { s });
        }
        for (i, ci) in c.iter().enumerate() {
            if *ci < Rational64::zero() || *ci > Rational64::one() {
                return Err(TableauError::NodeOutOfRange {
                    i: i + 1,
                    value: to_f64(*ci),
                });
            }
        }
        for i in 0..s {
            for j in i..s {
                for l in 0..s {
                    if !lambda[i][j][l].is_zero() {
                        return Err(TableauError::NotExplicit {
                            i: i + 1,
                            j: j + 1,
                            l: l + 1,
                        });
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            s,
            order,
            c,
            lambda,
            mu,
        })
    }

    /// Builds a tableau from sparse one-based entries `(i, j, l, λ)` and `(i, l, μ)`.
    pub fn from_entries(
        name: impl Into<String>,
        order: usize,
        c: Vec<Rational64>,
        lambda: &[(usize, usize, usize, Rational64)],
        mu: &[(usize, usize, Rational64)],
    ) -> Result<Self, TableauError> {
        let s = c.len();
        if s == 0 {
            return Err(TableauError::NoStages);
        }
        let mut lam = vec![vec![vec![Rational64::zero(); s]; s]; s];
        let mut m = vec![vec![Rational64::zero(); s]; s];
        for &(i, j, l, v) in lambda {
            if !(1..=s).contains(&i) || !(1..=s).contains(&j) || !(1..=s).contains(&l) {
                return Err(TableauError::Shape { s });
            }
            lam[i - 1][j - 1][l - 1] += v;
        }
        for &(i, l, v) in mu {
            if !(1..=s).contains(&i) || !(1..=s).contains(&l) {
                return Err(TableauError::Shape { s });
            }
            m[i - 1][l - 1] += v;
        }
        Self::new(name, order, c, lam, m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn classical_order(&self) -> usize {
        self.order
    }

    pub fn c(&self, i: usize) -> f64 {
        to_f64(self.c[i])
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.c.iter().map(|v| to_f64(*v)).collect()
    }

    /// `λ_{i,j,l}`; zero for `l > s` or `l = 0`.
    pub fn lambda(&self, i: usize, j: usize, l: usize) -> f64 {
        to_f64(self.lambda_exact(i, j, l))
    }

    /// `μ_{i,l}`; zero for `l > s` or `l = 0`.
    pub fn mu(&self, i: usize, l: usize) -> f64 {
        to_f64(self.mu_exact(i, l))
    }

    pub fn lambda_exact(&self, i: usize, j: usize, l: usize) -> Rational64 {
        if l == 0 || l > self.s {
            Rational64::zero()
        } else {
            self.lambda[i][j][l - 1]
        }
    }

    pub fn mu_exact(&self, i: usize, l: usize) -> Rational64 {
        if l == 0 || l > self.s {
            Rational64::zero()
        } else {
            self.mu[i][l - 1]
        }
    }

    pub fn node_exact(&self, i: usize) -> Rational64 {
        self.c[i]
    }

    /// Replaces one μ entry; used to probe how tightly the conditions pin μ.
    pub fn with_mu(mut self, i: usize, l: usize, value: Rational64) -> Self {
        self.mu[i][l - 1] = value;
        self
    }

    /// Replaces one λ entry (`j < i`).
    pub fn with_lambda(mut self, i: usize, j: usize, l: usize, value: Rational64) -> Result<Self, TableauError> {
        if j >= i {
            return Err(TableauError::NotExplicit {
                i: i + 1,
                j: j + 1,
                l,
            });
        }
        self.lambda[i][j][l - 1] = value;
        Ok(self)
    }

    /// Per-stage residuals of `Σ_{j,l} λ_{ijl}/l! = c_i`.
    pub fn lambda_consistency(&self) -> ConditionReport {
        let mut report = ConditionReport::default();
        for i in 0..self.s {
            let mut sum = Rational64::zero();
            for j in 0..self.s {
                for l in 1..=self.s {
                    sum += self.lambda_exact(i, j, l) * inv_factorial(l);
                }
            }
            report.push(format!("lambda[{}]", i + 1), sum - self.c[i]);
        }
        report
    }

    /// Cached scalar combinations used by the corrected steppers.
    pub fn scalars(&self) -> TableauScalars {
        TableauScalars::new(self)
    }

    /// Plain-text serialization: `name`, `stages`, `order`, `c` lines followed by
    /// sparse `lambda i j l value` and `mu i l value` lines, values in decimal.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "stages {}", self.s);
        let _ = writeln!(out, "order {}", self.order);
        let cs: Vec<String> = self.c.iter().map(|v| format!("{}", to_f64(*v))).collect();
        let _ = writeln!(out, "c {}", cs.join(" "));
        for i in 0..self.s {
            for j in 0..self.s {
                for l in 1..=self.s {
                    let v = self.lambda_exact(i, j, l);
                    if !v.is_zero() {
                        let _ = writeln!(out, "lambda {} {} {} {}", i + 1, j + 1, l, to_f64(v));
                    }
                }
            }
        }
        for i in 0..self.s {
            for l in 1..=self.s {
                let v = self.mu_exact(i, l);
                if !v.is_zero() {
                    let _ = writeln!(out, "mu {} {} {}", i + 1, l, to_f64(v));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TableauError> {
        let mut name = None;
        let mut stages = None;
        let mut order = None;
        let mut c = None;
        let mut lambda = Vec::new();
        let mut mu = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.split('#').next().unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            let err = |message: &str| TableauError::Parse {
                line,
                message: message.to_string(),
            };
            let mut fields = raw.split_whitespace();
            let key = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let index = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad index `{s}`")));
            let value = |s: &str| parse_rational(s).ok_or_else(|| err(&format!("bad value `{s}`")));
            match key {
                "name" => name = Some(rest.join(" ")),
                "stages" if rest.len() == 1 => stages = Some(index(rest[0])?),
                "order" if rest.len() == 1 => order = Some(index(rest[0])?),
                "c" => c = Some(rest.iter().map(|s| value(s)).collect::<Result<Vec<_>, _>>()?),
                "lambda" if rest.len() == 4 => {
                    lambda.push((index(rest[0])?, index(rest[1])?, index(rest[2])?, value(rest[3])?))
                }
                "mu" if rest.len() == 3 => mu.push((index(rest[0])?, index(rest[1])?, value(rest[2])?)),
                _ => return Err(err(&format!("unrecognized line `{raw}`"))),
            }
        }
        let missing = |what: &str| TableauError::Parse {
            line: 0,
            message: format!("missing `{what}`"),
        };
        let name = name.ok_or_else(|| missing("name"))?;
        let stages = stages.ok_or_else(|| missing("stages"))?;
        let order = order.ok_or_else(|| missing("order"))?;
        let c = c.ok_or_else(|| missing("c"))?;
        if c.len() != stages {
            return Err(TableauError::Shape { s: stages });
        }
        Self::from_entries(name, order, c, &lambda, &mu)
    }
}

/// Parses `p/q` or a decimal literal exactly; other float syntax is rounded to
/// the nearest small rational.
fn parse_rational(s: &str) -> Option<Rational64> {
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Rational64::new(n, d));
    }
    if let Ok(v) = Rational64::from_str(s) {
        return Some(v);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if let Some((int, frac)) = body.split_once('.') {
        if !int.chars().chain(frac.chars()).all(|ch| ch.is_ascii_digit()) || frac.len() > 15 {
            return approx(s);
        }
        let digits: i64 = format!("{int}{frac}").parse().ok()?;
        let v = Rational64::new(digits, 10i64.pow(frac.len() as u32));
        return Some(if neg { -v } else { v });
    }
    approx(s)
}

fn approx(s: &str) -> Option<Rational64> {
    let v: f64 = s.parse().ok()?;
    Rational64::approximate_float(v)
}

pub(crate) fn to_f64(v: Rational64) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn inv_factorial(n: usize) -> Rational64 {
    Rational64::new(1, (1..=n as i64).product())
}

/// The built-in methods: `rk2`, `rk2b`, `krogstad`.
pub fn builtin(name: &str) -> Result<Tableau, TableauError> {
    match name {
        "rk2" => Tableau::from_entries("rk2", 2, vec![r(0, 1), r(1, 2)], &[(2, 1, 1, r(1, 2))], &[(2, 1, r(1, 1))]),
        "rk2b" => Tableau::from_entries(
            "rk2b",
            2,
            vec![r(0, 1), r(1, 2)],
            &[(2, 1, 1, r(1, 2))],
            &[(1, 1, r(1, 1)), (1, 2, r(-2, 1)), (2, 2, r(2, 1))],
        ),
        "krogstad" => Tableau::from_entries(
            "krogstad",
            4,
            vec![r(0, 1), r(1, 2), r(1, 2), r(1, 1)],
            &[
                (2, 1, 1, r(1, 2)),
                (3, 1, 1, r(1, 2)),
                (3, 1, 2, r(-1, 1)),
                (3, 2, 2, r(1, 1)),
                (4, 1, 1, r(1, 1)),
                (4, 1, 2, r(-2, 1)),
                (4, 3, 2, r(2, 1)),
            ],
            &[
                (1, 1, r(1, 1)),
                (1, 2, r(-3, 1)),
                (1, 3, r(4, 1)),
                (2, 2, r(2, 1)),
                (2, 3, r(-4, 1)),
                (3, 2, r(2, 1)),
                (3, 3, r(-4, 1)),
                (4, 2, r(-1, 1)),
                (4, 3, r(4, 1)),
            ],
        ),
        other => Err(TableauError::UnknownName(other.to_string())),
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["rk2", "rk2b", "krogstad"];

/// One named residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionResidual {
    pub name: String,
    pub residual: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionResidual>,
}

impl ConditionReport {
    fn push(&mut self, name: String, defect: Rational64) {
        let residual = to_f64(defect).abs();
        self.entries.push(ConditionResidual {
            name,
            residual,
            satisfied: residual <= CONDITION_TOL,
        });
    }

    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionResidual> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn extend(&mut self, other: ConditionReport) {
        self.entries.extend(other.entries);
    }
}

/// Residuals of `Σ_{i,l} μ_{il}/(l+r−1)! = 1/r!` for `r = 1 … q`, named `cp1` …
pub fn check_order_conditions(t: &Tableau, q: usize) -> ConditionReport {
    let mut report = ConditionReport::default();
    for rr in 1..=q {
        let mut sum = Rational64::zero();
        for i in 0..t.s {
            for l in 1..=t.s {
                sum += t.mu_exact(i, l) * inv_factorial(l + rr - 1);
            }
        }
        report.push(format!("cp{rr}"), sum - inv_factorial(rr));
    }
    report
}

/// Residuals of the μ column-sum conditions (`mu1`, `mu2`, …) and the per-stage
/// λ sums (`lambda[i,l]`), followed by the `lambda[i]` consistency residuals.
pub fn check_simplifying(t: &Tableau) -> ConditionReport {
    let mut report = ConditionReport::default();
    for l in 1..=t.s {
        let sum: Rational64 = (0..t.s).map(|i| t.mu_exact(i, l)).sum();
        let target = if l == 1 { Rational64::one() } else { Rational64::zero() };
        report.push(format!("mu{l}"), sum - target);
    }
    for i in 0..t.s {
        for l in 1..=t.s {
            let sum: Rational64 = (0..t.s).map(|j| t.lambda_exact(i, j, l)).sum();
            let target = if l == 1 { t.c[i] } else { Rational64::zero() };
            report.push(format!("lambda[{},{}]", i + 1, l), sum - target);
        }
    }
    report.extend(t.lambda_consistency());
    report
}

/// Only the μ part of [`check_simplifying`].
pub fn check_cond_mu(t: &Tableau) -> ConditionReport {
    let mut full = check_simplifying(t);
    full.entries.retain(|e| e.name.starts_with("mu"));
    full
}

/// Only the per-stage λ sums of [`check_simplifying`].
pub fn check_cond_lambda(t: &Tableau) -> ConditionReport {
    let mut full = check_simplifying(t);
    full.entries.retain(|e| e.name.starts_with("lambda[") && e.name.contains(','));
    full
}

/// Exact rational used by [`theorem1_verify`].
pub type Big = Ratio<i128>;

/// The linear system behind the column-sum result, with its exact solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Outcome {
    /// `matrix[r][l] = 1/(l+r+1)!` (zero-based `r`, `l`).
    pub matrix: Vec<Vec<Big>>,
    pub rhs: Vec<Big>,
    pub solution: Vec<Big>,
    /// Whether the solution is the first canonical vector.
    pub solution_is_e1: bool,
    /// Whether the tableau's column sums `Σ_i μ_{il}` equal the solution.
    pub column_sums_match: bool,
}

impl Theorem1Outcome {
    pub fn holds(&self) -> bool {
        self.solution_is_e1 && self.column_sums_match
    }
}

/// Forms and solves exactly the `s × s` system in the column sums implied by the
/// order conditions up to `s`, and compares with the tableau.
pub fn theorem1_verify(t: &Tableau) -> Result<Theorem1Outcome, TableauError> {
    let s = t.s;
    let q = t.order;
    if s > q || q > 4 {
        return Err(TableauError::TheoremInapplicable { s, q });
    }
    let fact = |n: usize| -> i128 { (1..=n as i128).product() };
    let matrix: Vec<Vec<Big>> = (1..=s)
        .map(|rr| (1..=s).map(|l| Big::new(1, fact(l + rr - 1))).collect())
        .collect();
    let rhs: Vec<Big> = (1..=s).map(|rr| Big::new(1, fact(rr))).collect();
    let solution = solve_exact(matrix.clone(), rhs.clone()).ok_or(TableauError::TheoremInapplicable { s, q })?;
    let solution_is_e1 = solution
        .iter()
        .enumerate()
        .all(|(i, v)| *v == if i == 0 { Big::one() } else { Big::zero() });
    let column_sums_match = (1..=s).all(|l| {
        let sum: Rational64 = (0..s).map(|i| t.mu_exact(i, l)).sum();
        Big::new(*sum.numer() as i128, *sum.denom() as i128) == solution[l - 1]
    });
    Ok(Theorem1Outcome {
        matrix,
        rhs,
        solution,
        solution_is_e1,
        column_sums_match,
    })
}

/// Gaussian elimination over the rationals.
fn solve_exact(mut a: Vec<Vec<Big>>, mut b: Vec<Big>) -> Option<Vec<Big>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&row| !a[row][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![Big::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Tableau combinations that enter the boundary corrections.
///
/// Slot indices `l` run over `1 ..= s + 2`; entries for `l > s` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TableauScalars {
    pub s: usize,
    pub c: Vec<f64>,
    /// `Σ_i μ_{il}`, index `l`.
    pub mu_sum: Vec<f64>,
    /// `Σ_i μ_{il} c_i`, index `l`.
    pub mu_c: Vec<f64>,
    /// `Γ_i = Σ_{j,l} λ_{ijl} c_j / l!`.
    pub gamma: Vec<f64>,
    /// `Λ_i = Σ_{j,l} λ_{ijl} / (l+1)!`.
    pub big_lambda: Vec<f64>,
    /// `S_{il} = Σ_j λ_{ijl} c_j`, index `[i][l]`.
    pub lambda_c: Vec<Vec<f64>>,
    /// `Σ_j λ_{ijl}`, index `[i][l]`.
    pub lambda_sum: Vec<Vec<f64>>,
}

impl TableauScalars {
    fn new(t: &Tableau) -> Self {
        let s = t.s;
        let slots = s + 3;
        let mut mu_sum = vec![0.0; slots];
        let mut mu_c = vec![0.0; slots];
        for l in 1..slots {
            let mut a = Rational64::zero();
            let mut b = Rational64::zero();
            for i in 0..s {
                a += t.mu_exact(i, l);
                b += t.mu_exact(i, l) * t.c[i];
            }
            mu_sum[l] = to_f64(a);
            mu_c[l] = to_f64(b);
        }
        let mut gamma = vec![0.0; s];
        let mut big_lambda = vec![0.0; s];
        let mut lambda_c = vec![vec![0.0; slots]; s];
        let mut lambda_sum = vec![vec![0.0; slots]; s];
        for i in 0..s {
            let mut g = Rational64::zero();
            let mut bl = Rational64::zero();
            for l in 1..slots {
                let mut sc = Rational64::zero();
                let mut ss = Rational64::zero();
                for j in 0..s {
                    let v = t.lambda_exact(i, j, l);
                    sc += v * t.c[j];
                    ss += v;
                    g += v * t.c[j] * inv_factorial(l);
                    bl += v * inv_factorial(l + 1);
                }
                lambda_c[i][l] = to_f64(sc);
                lambda_sum[i][l] = to_f64(ss);
            }
            gamma[i] = to_f64(g);
            big_lambda[i] = to_f64(bl);
        }
        Self {
            s,
            c: t.nodes(),
            mu_sum,
            mu_c,
            gamma,
            big_lambda,
            lambda_c,
            lambda_sum,
        }
    }

    /// `Σ_i μ_{il} c_i`, zero outside `1 ..= s`.
    pub fn m(&self, l: usize) -> f64 {
        self.mu_c.get(l).copied().unwrap_or(0.0)
    }

    /// `S_{il}`, zero outside `1 ..= s`.
    pub fn lambda_c(&self, i: usize, l: usize) -> f64 {
        self.lambda_c[i].get(l).copied().unwrap_or(0.0)
    }
}
