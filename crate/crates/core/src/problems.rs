//! Manufactured plane-wave problems `u_t = Δu + u² + h` on `[0, 1]^d`.
//!
//! The exact solution is `u = U(θ)` with phase `θ = t + x (+ y)`, so every
//! derivative of `u`, of the source `h` and of the reaction term is a derivative
//! in `θ` and is evaluated exactly with jets.

use crate::jet::{Jet, Jet12, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryConditions {
    /// Dirichlet at `x = 0` and `x = 1`.
    DirichletDirichlet,
    /// Dirichlet at `x = 0`, Neumann (`u_x = g₁`) at `x = 1`.
    DirichletNeumann,
    /// Dirichlet on every side of the unit square.
    DirichletSquare,
}

/// Wave profile `U`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Cosine,
    /// `U ≡ 0`: homogeneous data and no source.
    Zero,
}

impl Profile {
    pub fn eval<S: Scalar>(self, theta: S) -> S {
        match self {
            Profile::Cosine => theta.cos(),
            Profile::Zero => S::constant(0.0),
        }
    }
}

/// `f(x, t, u) = u² + h(x, t)` with its partial derivatives.
///
/// The source is folded into `f` so that `u_t = Δu + f` and the boundary
/// identities hold with the same `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionTerm {
    profile: Profile,
    dim: usize,
}

impl ReactionTerm {
    /// Nonlinearity `r(u) = u²` and its derivatives.
    pub fn r(&self, u: f64) -> f64 {
        u * u
    }

    pub fn r_u(&self, u: f64) -> f64 {
        2.0 * u
    }

    pub fn r_uu(&self, _u: f64) -> f64 {
        2.0
    }

    pub fn r_uuu(&self, _u: f64) -> f64 {
        0.0
    }

    /// `∂_θⁿ h` at phase `θ`.
    pub fn source(&self, theta: f64, n: usize) -> f64 {
        source_jet(self.profile, self.dim, Jet12::variable(theta)).derivative(n)
    }

    pub fn f(&self, p: [f64; 2], t: f64, u: f64) -> f64 {
        self.r(u) + self.source(phase(p, t), 0)
    }

    pub fn f_t(&self, p: [f64; 2], t: f64, _u: f64) -> f64 {
        self.source(phase(p, t), 1)
    }

    pub fn f_u(&self, _p: [f64; 2], _t: f64, u: f64) -> f64 {
        self.r_u(u)
    }

    pub fn f_tt(&self, p: [f64; 2], t: f64, _u: f64) -> f64 {
        self.source(phase(p, t), 2)
    }

    pub fn f_tu(&self, _p: [f64; 2], _t: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn f_uu(&self, _p: [f64; 2], _t: f64, u: f64) -> f64 {
        self.r_uu(u)
    }
}

/// `h = U' − d·U'' − U²` along the phase.
pub fn source_jet<const N: usize>(profile: Profile, dim: usize, theta: Jet<N>) -> Jet<N> {
    let u = profile.eval(theta);
    u.d() - u.d().d() * dim as f64 - u * u
}

/// Phase `θ = t + x + y`.
pub fn phase(p: [f64; 2], t: f64) -> f64 {
    t + p[0] + p[1]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedProblem {
    pub dim: usize,
    pub bc: BoundaryConditions,
    pub profile: Profile,
    pub final_time: f64,
}

impl ManufacturedProblem {
    pub fn label(&self) -> &'static str {
        match (self.bc, self.profile) {
            (BoundaryConditions::DirichletDirichlet, Profile::Cosine) => "heat1d-dd",
            (BoundaryConditions::DirichletNeumann, Profile::Cosine) => "heat1d-dn",
            (BoundaryConditions::DirichletSquare, Profile::Cosine) => "heat2d",
            (BoundaryConditions::DirichletDirichlet, Profile::Zero) => "heat1d-dd-zero",
            (BoundaryConditions::DirichletNeumann, Profile::Zero) => "heat1d-dn-zero",
            (BoundaryConditions::DirichletSquare, Profile::Zero) => "heat2d-zero",
        }
    }

    pub fn reaction(&self) -> ReactionTerm {
        ReactionTerm {
            profile: self.profile,
            dim: self.dim,
        }
    }

    /// Jet of `U` in the phase at `θ`.
    pub fn profile_jet(&self, theta: f64) -> Jet12 {
        self.profile.eval(Jet12::variable(theta))
    }

    /// `∂_tⁿ u(p, t)`.
    pub fn u_dt(&self, p: [f64; 2], t: f64, n: usize) -> f64 {
        self.profile_jet(phase(p, t)).derivative(n)
    }

    pub fn u(&self, p: [f64; 2], t: f64) -> f64 {
        self.u_dt(p, t, 0)
    }

    /// `h(p, t)`.
    pub fn source(&self, p: [f64; 2], t: f64) -> f64 {
        self.reaction().source(phase(p, t), 0)
    }

    /// Boundary datum at a boundary point: the value on Dirichlet sides,
    /// `u_x` on the Neumann side `x = 1`; `n` time derivatives.
    pub fn g(&self, p: [f64; 2], t: f64, neumann: bool, n: usize) -> f64 {
        self.profile_jet(phase(p, t)).derivative(n + usize::from(neumann))
    }
}

pub fn problem_1d(bc: BoundaryConditions) -> ManufacturedProblem {
    ManufacturedProblem {
        dim: 1,
        bc,
        profile: Profile::Cosine,
        final_time: 1.0,
    }
}

pub fn problem_2d() -> ManufacturedProblem {
    ManufacturedProblem {
        dim: 2,
        bc: BoundaryConditions::DirichletSquare,
        profile: Profile::Cosine,
        final_time: 1.0,
    }
}

/// The same problem with `u ≡ 0`.
pub fn zero_variant(p: &ManufacturedProblem) -> ManufacturedProblem {
    ManufacturedProblem {
        profile: Profile::Zero,
        ..*p
    }
}

/// Looks up a problem by its command-line label.
pub fn by_label(label: &str) -> Option<ManufacturedProblem> {
    match label {
        "heat1d-dd" => Some(problem_1d(BoundaryConditions::DirichletDirichlet)),
        "heat1d-dn" => Some(problem_1d(BoundaryConditions::DirichletNeumann)),
        "heat2d" => Some(problem_2d()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(pr: &ManufacturedProblem, p: [f64; 2], t: f64) -> f64 {
        // Closed forms for u = cos(θ): u_t = −sin θ, Δu = −d cos θ.
        let th = phase(p, t);
        let u_t = -th.sin();
        let lap = -(pr.dim as f64) * th.cos();
        u_t - lap - th.cos().powi(2) - pr.source(p, t)
    }

    #[test]
    fn source_values() {
        let p1 = problem_1d(BoundaryConditions::DirichletDirichlet);
        assert!(p1.source([0.0, 0.0], 0.0).abs() < 1e-15);
        let p2 = problem_2d();
        assert!((p2.source([0.0, 0.0], 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pde_residual_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for pr in [problem_1d(BoundaryConditions::DirichletDirichlet), problem_2d()] {
            for _ in 0..100 {
                let y = if pr.dim == 2 { rng.gen_range(0.0..1.0) } else { 0.0 };
                let p = [rng.gen_range(0.0..1.0), y];
                let t = rng.gen_range(0.0..1.0);
                assert!(residual(&pr, p, t).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn boundary_data_are_traces() {
        let dn = problem_1d(BoundaryConditions::DirichletNeumann);
        assert!((dn.g([1.0, 0.0], 0.0, true, 0) + 1f64.sin()).abs() < 1e-15);
        assert!((dn.g([0.0, 0.0], 0.0, false, 0) - 1.0).abs() < 1e-15);
        let p2 = problem_2d();
        assert!((p2.g([0.0, 0.5], 0.0, false, 0) - 0.5f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn reaction_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 1e-5;
        for pr in [problem_1d(BoundaryConditions::DirichletDirichlet), problem_2d()] {
            let rt = pr.reaction();
            for _ in 0..50 {
                let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let t = rng.gen_range(0.0..1.0);
                let u = rng.gen_range(-1.0..1.0);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1.0);
                assert!(close(rt.f_t(p, t, u), (rt.f(p, t + d, u) - rt.f(p, t - d, u)) / (2.0 * d)));
                assert!(close(rt.f_u(p, t, u), (rt.f(p, t, u + d) - rt.f(p, t, u - d)) / (2.0 * d)));
                assert!(close(rt.f_tt(p, t, u), (rt.f_t(p, t + d, u) - rt.f_t(p, t - d, u)) / (2.0 * d)));
                assert!(close(rt.f_tu(p, t, u), (rt.f_t(p, t, u + d) - rt.f_t(p, t, u - d)) / (2.0 * d)));
                assert!(close(rt.f_uu(p, t, u), (rt.f_u(p, t, u + d) - rt.f_u(p, t, u - d)) / (2.0 * d)));
            }
        }
    }

    #[test]
    fn zero_variant_has_no_data() {
        let z = zero_variant(&problem_2d());
        assert_eq!(z.u([0.3, 0.2], 0.4), 0.0);
        assert_eq!(z.source([0.3, 0.2], 0.4), 0.0);
        assert_eq!(z.reaction().f_t([0.0, 0.0], 0.1, 0.0), 0.0);
    }

    #[test]
    fn labels_round_trip() {
        for label in ["heat1d-dd", "heat1d-dn", "heat2d"] {
            assert_eq!(by_label(label).unwrap().label(), label);
        }
        assert!(by_label("wave").is_none());
    }
}
