//! Closed-form and quadrature-based reference quantities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::metrics::Pmf;
use crate::quadrature;
use crate::sampling::GaussPoissonParams;

/// Lens-area correction `a(v) = 2v^2 arccos(1/(2v)) - sqrt(4v^2 - 1)/2` for
/// `v >= 1`, zero below.
pub fn a_of_v(v: f64) -> f64 {
    if !(v >= 1.0) {
        return 0.0;
    }
    let arg = (1.0 / (2.0 * v)).clamp(-1.0, 1.0);
    2.0 * v * v * arg.acos() - 0.5 * (4.0 * v * v - 1.0).sqrt()
}

fn void_exponent(v: f64, params: &GaussPoissonParams, lens: f64) -> f64 {
    let v2 = v * v;
    -(params.p1 * PI * v2 + params.p2 * (2.0 * PI * v2 - lens))
}

/// `P(xi^{o!}(B_v) = 0)` for the Gauss-Poisson process, with the `0 <= v < 1`
/// branch (`short_range = true`, where `a(v) = 0`) or the `v >= 1` branch forced.
pub fn gp_void_prob_branch(v: f64, params: &GaussPoissonParams, short_range: bool) -> f64 {
    let total = params.p1 + 2.0 * params.p2;
    let (prefactor, lens) = if short_range {
        (total, 0.0)
    } else {
        (params.p1, a_of_v(v))
    };
    prefactor / total * void_exponent(v, params, lens).exp()
}

/// Void probability of the reduced Palm Gauss-Poisson process in `B_v`.
///
/// Piecewise in `v`: for `v >= 1` the partner of the typical point always lies
/// in the ball, so only singleton clusters contribute. The value jumps at 1.
pub fn gp_void_prob(v: f64, params: &GaussPoissonParams) -> f64 {
    let v = v.max(0.0);
    gp_void_prob_branch(v, params, v < 1.0)
}

/// Both branches evaluated at `v`: `(0 <= v < 1 form, v >= 1 form)`. At `v = 1`
/// these are the left limit and the value.
pub fn gp_void_prob_one_sided(v: f64, params: &GaussPoissonParams) -> (f64, f64) {
    (
        gp_void_prob_branch(v, params, true),
        gp_void_prob_branch(v, params, false),
    )
}

/// Density of the smallest angle of the typical Poisson-Delaunay triangle.
pub fn mardia_pdf(t: f64) -> f64 {
    if !(0.0..=PI / 3.0).contains(&t) {
        return 0.0;
    }
    (4.0 / PI * t.sin() * ((PI - 3.0 * t) * t.cos() + (3.0 * t).sin())).max(0.0)
}

pub const MARDIA_CDF_TOL: f64 = 1e-10;

pub fn mardia_cdf(t: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    quadrature::integrate(mardia_pdf, 0.0, t.min(PI / 3.0), MARDIA_CDF_TOL)
}

/// Inverse of [`mardia_cdf`] by bisection, `p` in `[0, 1]`.
pub fn mardia_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return PI / 3.0;
    }
    let (mut lo, mut hi) = (0.0, PI / 3.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mardia_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parameters of the compound Poisson limit of the small-angle exceedances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpLimitParams {
    pub tau: f64,
    /// Total mass of size-1 clumps on the unit window.
    pub pi1_mass: f64,
    /// Total mass of size-2 clumps on the unit window.
    pub pi2_mass: f64,
    /// Clump intensity.
    pub gamma: f64,
    pub cluster_law: Pmf,
}

impl CpLimitParams {
    pub fn extremal_index(&self) -> f64 {
        self.gamma / self.tau
    }

    pub fn mean_cluster_size(&self) -> f64 {
        self.cluster_law.mean()
    }

    /// `(size, mass)` pairs accepted by `metrics::cp_count_pmf`.
    pub fn cluster_masses(&self) -> [(usize, f64); 2] {
        [(1, self.pi1_mass), (2, self.pi2_mass)]
    }
}

pub fn cp_limit_params(tau: f64) -> CpLimitParams {
    assert!(tau > 0.0 && tau.is_finite(), "tau must be positive, got {tau}");
    let pi1_mass = 0.5 * tau;
    let pi2_mass = 0.25 * tau;
    let gamma = pi1_mass + pi2_mass;
    let cluster_law = Pmf::new(vec![0.0, pi1_mass / gamma, pi2_mass / gamma]).expect("two-point law");
    CpLimitParams {
        tau,
        pi1_mass,
        pi2_mass,
        gamma,
        cluster_law,
    }
}

/// `sum_{i<k} e^{-tau} tau^i / i!`, i.e. `P(Poisson(tau) <= k - 1)`.
pub fn poisson_partial_sum(tau: f64, k: usize) -> f64 {
    let mut term = (-tau).exp();
    let mut sum = 0.0;
    for i in 0..k {
        sum += term;
        term *= tau / (i + 1) as f64;
    }
    sum.min(1.0)
}

fn pn2_integrand(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 0.0;
    }
    let q = x * y / r2;
    q * q * q
}

pub const PN2_TOL: f64 = 1e-8;

/// `int_0^a int_0^a (xy / (x^2 + y^2))^3 dy dx`; equals `a^2 / 16`.
///
/// The tolerance is `PN2_TOL` relative to the square's area, so small `a` keep
/// the same relative accuracy as `a = 1`.
pub fn pn2_integral(a: f64) -> f64 {
    assert!(a > 0.0, "upper limit must be positive");
    quadrature::integrate_2d(pn2_integrand, (0.0, a), (0.0, a), PN2_TOL * a * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_of_v_values() {
        assert_eq!(a_of_v(0.5), 0.0);
        assert_eq!(a_of_v(0.999), 0.0);
        // 2 pi/3 - sqrt(3)/2
        assert!((a_of_v(1.0) - 1.228_369_698_608_756_8).abs() < 1e-14);
        assert!((a_of_v(2.0) - 8.608_436_900_118_835).abs() < 1e-13);
        let v = 100.0;
        assert!((a_of_v(v) - (PI * v * v - 2.0 * v)).abs() < 1e-3);
    }

    #[test]
    fn void_prob_values() {
        let p = GaussPoissonParams::from_p1_p2(0.5, 0.25).unwrap();
        assert_eq!(gp_void_prob(0.0, &p), 1.0);
        let pure = GaussPoissonParams::from_p1_p2(0.7, 0.0).unwrap();
        assert!((gp_void_prob(1.0, &pure) - (-0.7 * PI).exp()).abs() < 1e-15);
        // 40-digit reference.
        let v = gp_void_prob(2.0, &p);
        assert!((v / 1.500_077_682_470_434_5e-5 - 1.0).abs() < 1e-13, "{v}");
    }

    #[test]
    fn void_prob_jump_at_one() {
        let p = GaussPoissonParams::from_p1_p2(0.5, 0.25).unwrap();
        let eps = 1e-9;
        let below = gp_void_prob(1.0 - eps, &p);
        let above = gp_void_prob(1.0 + eps, &p);
        let (short, long) = gp_void_prob_one_sided(1.0, &p);
        assert!((below - short).abs() < 1e-8);
        assert!((above - long).abs() < 1e-8);
        // Prefactor drops from 1 to p1 / (p1 + 2 p2) = 1/2; a(1) enters the exponent.
        assert!((long / short - 0.5 * (0.25 * a_of_v(1.0)).exp()).abs() < 1e-12);
    }

    #[test]
    fn void_prob_monotone() {
        let p = GaussPoissonParams::from_p1_p2(0.4, 0.3).unwrap();
        let mut prev = 1.0;
        for i in 1..400 {
            let v = i as f64 * 0.01;
            let cur = gp_void_prob(v, &p);
            assert!(cur <= prev, "increase at v = {v}");
            prev = cur;
        }
    }

    #[test]
    fn mardia_pdf_values() {
        assert_eq!(mardia_pdf(0.0), 0.0);
        assert!(mardia_pdf(PI / 3.0).abs() < 1e-15);
        assert!((mardia_pdf(PI / 6.0) - (3f64.sqrt() / 2.0 + 2.0 / PI)).abs() < 1e-14);
        assert_eq!(mardia_pdf(-0.1), 0.0);
        assert_eq!(mardia_pdf(1.1), 0.0);
    }

    #[test]
    fn mardia_cdf_values() {
        assert!((mardia_cdf(PI / 3.0) - 1.0).abs() < 1e-9);
        assert_eq!(mardia_cdf(-1.0), 0.0);
        // 40-digit references.
        assert!((mardia_cdf(0.1) - 0.019_925_826_266_446_838).abs() < 1e-12);
        assert!((mardia_cdf(0.5) - 0.439_029_595_439_820_97).abs() < 1e-10);
    }

    #[test]
    fn mardia_cdf_small_angle_expansion() {
        // Series of the density: 4t - (8/3) t^3 - (12/pi) t^4 + O(t^5).
        for v in [0.001f64, 0.005, 0.01] {
            let series = 2.0 * v * v - 2.0 / 3.0 * v.powi(4) - 12.0 / (5.0 * PI) * v.powi(5);
            assert!((mardia_cdf(v) - series).abs() < 10.0 * v.powi(6), "v = {v}");
        }
        assert!((mardia_cdf(0.01) - 1.999_932_570_322_141_9e-4).abs() < 1e-15);
    }

    #[test]
    fn mardia_quantile_inverts_cdf() {
        for p in [0.01, 0.25, 0.5, 0.9, 0.999] {
            assert!((mardia_cdf(mardia_quantile(p)) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn cp_limit() {
        let c = cp_limit_params(2.0);
        assert_eq!(c.pi1_mass, 1.0);
        assert_eq!(c.pi2_mass, 0.5);
        assert_eq!(c.gamma, 1.5);
        assert!((c.cluster_law.get(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.cluster_law.get(2) - 1.0 / 3.0).abs() < 1e-15);
        for tau in [0.1, 1.0, 5.0, 17.0] {
            let c = cp_limit_params(tau);
            assert!((c.extremal_index() - 0.75).abs() < 1e-15);
            assert!((c.mean_cluster_size() - 4.0 / 3.0).abs() < 1e-15);
            assert!((c.cluster_law.get(1) * c.gamma - c.pi1_mass).abs() < 1e-15);
        }
    }

    #[test]
    fn poisson_partial_sums() {
        assert!((poisson_partial_sum(1.0, 1) - (-1f64).exp()).abs() < 1e-16);
        assert!((poisson_partial_sum(1.0, 200) - 1.0).abs() < 1e-12);
        assert!((poisson_partial_sum(2.0, 3) - 5.0 * (-2f64).exp()).abs() < 1e-15);
        assert!((poisson_partial_sum(2.0, 3) - 0.676_676_416_183_063_5).abs() < 1e-15);
    }

    #[test]
    fn pn2_values() {
        let i1 = pn2_integral(1.0);
        assert!((i1 - 0.0625).abs() < 1e-6, "{i1}");
        assert!((pn2_integral(2.0) - 4.0 * i1).abs() < 1e-6);
        let (n, tau) = (1e4_f64, 1.0);
        let v = 0.5 * (tau / n).sqrt();
        assert!((32.0 * n / tau * pn2_integral(v) - 0.5).abs() < 1e-6);
    }
}
