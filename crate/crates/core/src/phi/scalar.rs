use super::PhiError;

/// Below this magnitude φ_l is summed from its Taylor series; above it the
/// upward recurrence `φ_{l+1}(z) = (φ_l(z) − 1/l!)/z` is used.
pub const TAYLOR_SWITCH: f64 = 0.5;

/// `φ_l(z) = ∫₀¹ e^{(1−θ)z} θ^{l−1}/(l−1)! dθ`, with `φ_0 = exp`.
pub fn phi_scalar(l: usize, z: f64) -> Result<f64, PhiError> {
    if !z.is_finite() {
        return Err(PhiError::OutOfRange { z });
    }
    let value = if z.abs() < TAYLOR_SWITCH {
        taylor(l, z)
    } else {
        recurrence(l, z)
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PhiError::OutOfRange { z })
    }
}

/// All of `φ_0(z) … φ_{l_max}(z)`.
pub fn phi_scalar_all(l_max: usize, z: f64) -> Result<Vec<f64>, PhiError> {
    (0..=l_max).map(|l| phi_scalar(l, z)).collect()
}

pub(crate) fn inverse_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc / j as f64)
}

fn taylor(l: usize, z: f64) -> f64 {
    let mut term = inverse_factorial(l);
    let mut sum = term;
    for j in 1..60 {
        term *= z / (j + l) as f64;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn recurrence(l: usize, z: f64) -> f64 {
    if l == 0 {
        return z.exp();
    }
    let mut phi = z.exp_m1() / z;
    for j in 1..l {
        phi = (phi - inverse_factorial(j)) / z;
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Gauss–Legendre quadrature of the defining integral.
    fn phi_quadrature(l: usize, z: f64) -> f64 {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 200;
        let width = 1.0 / panels as f64;
        let lm1_fact = 1.0 / inverse_factorial(l - 1);
        let mut sum = 0.0;
        for p in 0..panels {
            let a = p as f64 * width;
            for (x, w) in nodes {
                let theta = a + 0.5 * width * (x + 1.0);
                sum += 0.5 * width * w * ((1.0 - theta) * z).exp() * theta.powi(l as i32 - 1) / lm1_fact;
            }
        }
        sum
    }

    #[test]
    fn trivial_values() {
        assert_eq!(phi_scalar(0, 0.0).unwrap(), 1.0);
        assert!((phi_scalar(3, 0.0).unwrap() - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn phi1_at_one_matches_closed_form_and_quadrature() {
        let v = phi_scalar(1, 1.0).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((v - 1.718_281_828_459_045).abs() < 1e-15);
        assert!((v - phi_quadrature(1, 1.0)).abs() < 1e-13);
    }

    #[test]
    fn agrees_with_quadrature_across_branches() {
        for &z in &[-20.0, -3.0, -0.6, -0.4, -1e-3, 0.3, 0.55, 2.0] {
            for l in 1..=6 {
                let exact = phi_quadrature(l, z);
                let v = phi_scalar(l, z).unwrap();
                assert!(((v - exact) / exact).abs() < 1e-11, "l={l} z={z}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn branch_switch_is_continuous() {
        for l in 0..=6 {
            let below = taylor(l, TAYLOR_SWITCH);
            let above = recurrence(l, TAYLOR_SWITCH);
            assert!(((below - above) / below).abs() < 1e-10, "l={l}");
            let below = taylor(l, -TAYLOR_SWITCH);
            let above = recurrence(l, -TAYLOR_SWITCH);
            assert!(((below - above) / below).abs() < 1e-10, "l={l}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(phi_scalar(0, 1e4), Err(PhiError::OutOfRange { .. })));
        assert!(phi_scalar(2, f64::NAN).is_err());
    }

    #[test]
    fn positive_on_negative_axis() {
        for &z in &[0.0, -1e-8, -0.3, -1.0, -10.0, -1e3, -1e6] {
            assert!(phi_scalar(0, z).unwrap() >= 0.0);
            for l in 1..=7 {
                assert!(phi_scalar(l, z).unwrap() > 0.0, "l={l} z={z}");
            }
        }
    }
}
