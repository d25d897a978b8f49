//! Closed-form and series quantities of the stationary process.

use serde::Serialize;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::marks::MarkDistribution;

/// Hard limit on the number of factors in a truncated product.
pub const MAX_TRUNCATION: u64 = 10_000_000;

/// Intensities of the original ancestors, successful and ephemeral nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntensityReport {
    pub lambda_o: f64,
    pub lambda_s: f64,
    pub lambda_e: f64,
    /// Number of factors kept in the product for `lambda_o`.
    pub truncation: u64,
    /// Bound on the log-remainder of the truncated product.
    pub error_bound: f64,
}

/// A truncated series or product with a bound on the truncation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation: u64,
    pub error_bound: f64,
}

/// Mean and second moments of `N` for geometric marks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometricMoments {
    /// `E[N] = G'(1) = 1/s`.
    pub mean: f64,
    /// `G''(1) = E[N(N-1)] = 2r / (s (1 - r^2))`.
    pub second_factorial_moment: f64,
    /// `E[N^2]`.
    pub second_moment: f64,
}

/// `P[a > i]` for `i = 0..=m`. Infinite-support laws other than geometric
/// are accumulated right to left from `P[a > m]`, which keeps the small
/// tail values accurate.
fn survival_table(dist: &MarkDistribution, m: u64) -> Vec<f64> {
    if dist.finite_support().is_some() || dist.geometric_parameter().is_some() {
        return (0..=m).map(|i| dist.survival(i)).collect();
    }
    let mut out = vec![0.0; m as usize + 1];
    out[m as usize] = dist.survival(m);
    for i in (0..m).rev() {
        out[i as usize] = out[i as usize + 1] + dist.pmf(i + 1);
    }
    out
}

/// Smallest `m >= from` with `ok(tail_mass(m))`, capped at `MAX_TRUNCATION`.
fn truncation_point(dist: &MarkDistribution, from: u64, ok: impl Fn(f64) -> bool) -> u64 {
    if ok(dist.tail_mass(from)) {
        return from;
    }
    let mut hi = from.max(1);
    while !ok(dist.tail_mass(hi)) {
        if hi >= MAX_TRUNCATION {
            return MAX_TRUNCATION;
        }
        hi = (hi * 2).min(MAX_TRUNCATION);
    }
    let mut lo = from;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(dist.tail_mass(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// First `j` with `P[a > j] <= 1/2`; beyond it `-ln(1 - x) <= 2x` applies to
/// every factor.
fn half_point(dist: &MarkDistribution) -> u64 {
    let mut j = 0;
    while dist.survival(j) > 0.5 {
        j += 1;
    }
    j
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")))
    }
}

/// `lambda_o = prod_{i>=1} P[a <= i]`, `lambda_s = 1/E[a]`,
/// `lambda_e = 1 - lambda_s`.
///
/// The product is truncated at the smallest `M` with `2 tail_mass(M) <= tol`
/// (never above [`MAX_TRUNCATION`]; the reported bound is then larger).
pub fn intensities(dist: &MarkDistribution, tol: f64) -> Result<IntensityReport> {
    check_tol(tol)?;
    if !dist.has_unit_mass() {
        return Err(Error::AssumptionViolated(
            "P[a = 1] = 0: there are no original ancestors".into(),
        ));
    }
    let m = truncation_point(dist, half_point(dist), |t| 2.0 * t <= tol);
    let surv = survival_table(dist, m);
    let log_lambda: f64 = surv[1..].iter().map(|&s| (-s).ln_1p()).sum();
    let lambda_s = 1.0 / dist.mean();
    Ok(IntensityReport {
        lambda_o: log_lambda.exp(),
        lambda_s,
        lambda_e: 1.0 - lambda_s,
        truncation: m,
        error_bound: 2.0 * dist.tail_mass(m),
    })
}

/// `E[exp(t N)] = e^t prod_{i>=1} (e^t P[a > i] + P[a <= i])`.
///
/// For `t > 0` the product is cut where `(e^t - 1) tail_mass(M) <= tol`,
/// for `t < 0` where `tail_mass(M) <= tol`. `error_bound` bounds the
/// absolute error of `value`.
pub fn population_mgf(dist: &MarkDistribution, t: f64, tol: f64) -> Result<SeriesValue> {
    check_tol(tol)?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(SeriesValue { value: 1.0, truncation: 0, error_bound: 0.0 });
    }
    let c = t.exp_m1();
    let mut rel = tol;
    loop {
        let m = if t > 0.0 {
            truncation_point(dist, 0, |x| c * x <= rel)
        } else {
            truncation_point(dist, half_point(dist), |x| x <= rel)
        };
        let surv = survival_table(dist, m);
        let log_prod: f64 = surv[1..].iter().map(|&s| (c * s).ln_1p()).sum();
        let value = (t + log_prod).exp();
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("moment generating function diverges at t = {t}")));
        }
        let tail = dist.tail_mass(m);
        // remainder factor lies in [1, exp(c tail)] for t > 0 and in
        // [exp(-2|c| tail), 1] for t < 0
        let error_bound = if t > 0.0 {
            value * (c * tail).exp_m1()
        } else {
            value * -(2.0 * c * tail).exp_m1()
        };
        // the cut is relative; tighten it once the size of the value is known
        if error_bound <= tol || m >= MAX_TRUNCATION || rel < tol * 1e-6 {
            return Ok(SeriesValue { value, truncation: m, error_bound });
        }
        rel = tol / (2.0 * value.max(1.0) * (error_bound / tol).max(1.0)).max(2.0);
    }
}

/// `G(z) = E[z^N] = z prod_{i>=1} (1 + (z - 1) r^i)` for geometric(s) marks,
/// `z` in `[-1, 2]`; the product converges for any real `z`, the range
/// only keeps the factors away from overflow.
pub fn geometric_pgf(s: f64, z: f64, tol: f64) -> Result<SeriesValue> {
    check_tol(tol)?;
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParameter(format!("geometric parameter must satisfy 0 < s <= 1, got {s}")));
    }
    if !(-1.0..=2.0).contains(&z) {
        return Err(Error::InvalidParameter(format!("z must lie in [-1, 2], got {z}")));
    }
    let r = 1.0 - s;
    let dz = (z - 1.0).abs();
    if r == 0.0 || dz == 0.0 {
        return Ok(SeriesValue { value: z, truncation: 0, error_bound: 0.0 });
    }
    // smallest M with |z - 1| r^(M+1) / (1 - r) <= tol
    let need = ((tol * s / dz).ln() / r.ln()).ceil() - 1.0;
    let m = if need.is_finite() && need > 0.0 { (need as u64).min(MAX_TRUNCATION) } else { 0 };
    let mut value = z;
    let mut ri = 1.0;
    for _ in 0..m {
        ri *= r;
        value *= 1.0 + (z - 1.0) * ri;
    }
    let rem = dz * r.powf(m as f64 + 1.0) / s;
    Ok(SeriesValue { value, truncation: m, error_bound: value.abs() * (2.0 * rem).exp_m1() })
}

/// `E[N]` and `G''(1)` for geometric(s) marks.
pub fn geometric_moments(s: f64) -> Result<GeometricMoments> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParameter(format!("geometric parameter must satisfy 0 < s <= 1, got {s}")));
    }
    let r = 1.0 - s;
    let mean = 1.0 / s;
    let second_factorial_moment = 2.0 * r / (s * (1.0 - r * r));
    Ok(GeometricMoments { mean, second_factorial_moment, second_moment: second_factorial_moment + mean })
}

/// Transition row `P[N_{n+1} = n' | N_n = k]`, `n' = 1..=k+1`, of the
/// population chain under geometric(s) marks: each of the `k` individuals
/// survives independently with probability `r` and one is born.
pub fn markov_row(s: f64, k: u64) -> Result<Vec<f64>> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!("kernel needs 0 < s < 1, got {s}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("population is at least 1".into()));
    }
    let (lr, ls) = ((1.0 - s).ln(), s.ln());
    Ok((0..=k)
        .map(|alive| (ln_binomial(k, alive) + alive as f64 * lr + (k - alive) as f64 * ls).exp())
        .collect())
}

/// Renewal sequence `u_0 = 1`, `u_k = sum_{j=1}^k P[a = j] u_{k-j}`:
/// the probability that `k` is on the orbit of `0`.
pub fn renewal_sequence(dist: &MarkDistribution, k_max: usize) -> Vec<f64> {
    let pmf: Vec<f64> = (0..=k_max as u64).map(|j| dist.pmf(j)).collect();
    let mut u = vec![0.0; k_max + 1];
    u[0] = 1.0;
    for k in 1..=k_max {
        u[k] = (1..=k).map(|j| pmf[j] * u[k - j]).sum();
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geo(s: f64) -> MarkDistribution {
        MarkDistribution::geometric(s).unwrap()
    }

    #[test]
    fn geometric_intensities() {
        let rep = intensities(&geo(0.5), 1e-12).unwrap();
        // prod (1 - 2^-i), independent digits
        assert_abs_diff_eq!(rep.lambda_o, 0.288_788_095_086_602_4, epsilon = 1e-11);
        assert_abs_diff_eq!(rep.lambda_s, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.lambda_s + rep.lambda_e, 1.0, epsilon = 1e-15);
        assert!(rep.error_bound <= 1e-12);
    }

    #[test]
    fn intensities_of_simple_laws() {
        let one = intensities(&MarkDistribution::constant(1).unwrap(), 1e-9).unwrap();
        assert_eq!((one.lambda_o, one.lambda_s, one.lambda_e), (1.0, 1.0, 0.0));
        let tp = intensities(&MarkDistribution::two_point(0.5, 2).unwrap(), 1e-9).unwrap();
        assert_abs_diff_eq!(tp.lambda_o, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tp.lambda_s, 2.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(
            intensities(&MarkDistribution::constant(2).unwrap(), 1e-9),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn zeta_intensity_matches_direct_product() {
        let d = MarkDistribution::parse("zeta:3.5").unwrap();
        let rep = intensities(&d, 1e-8).unwrap();
        let z = crate::special::hurwitz_zeta(3.5, 1.0);
        let direct: f64 = (1..200_000u64)
            .map(|i| 1.0 - crate::special::hurwitz_zeta(3.5, i as f64 + 1.0) / z)
            .product();
        assert_abs_diff_eq!(rep.lambda_o, direct, epsilon = 1e-8);
    }

    #[test]
    fn mgf_derivative_is_the_mean() {
        for spec in ["geometric:0.5", "twopoint:0.3,4", "zeta:4"] {
            let d = MarkDistribution::parse(spec).unwrap();
            let h = 1e-5;
            let up = population_mgf(&d, h, 1e-14).unwrap().value;
            let dn = population_mgf(&d, -h, 1e-14).unwrap().value;
            // E[N] = E[a] by Little's law
            assert_abs_diff_eq!((up - dn) / (2.0 * h), d.mean(), epsilon = 1e-6);
        }
    }

    #[test]
    fn mgf_truncation_is_stable() {
        let d = geo(0.5);
        for t in [-1.0, 0.5] {
            let a = population_mgf(&d, t, 1e-8).unwrap();
            let b = population_mgf(&d, t, 1e-9).unwrap();
            assert!((a.value - b.value).abs() < 2e-8);
            assert!(a.error_bound <= 1e-8);
        }
        assert_eq!(population_mgf(&d, 0.0, 1e-9).unwrap().value, 1.0);
    }

    #[test]
    fn mgf_matches_constant_population() {
        // constant(c): N = c always
        for c in [1u64, 3] {
            let d = MarkDistribution::constant(c).unwrap();
            let v = population_mgf(&d, 0.7, 1e-12).unwrap().value;
            assert_abs_diff_eq!(v, (0.7 * c as f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn capped_zeta_mgf_is_finite() {
        let d = MarkDistribution::parse("zeta:1.5,1000").unwrap();
        let v = population_mgf(&d, 1.0, 1e-9).unwrap();
        assert!(v.value.is_finite() && v.value > 1.0);
    }

    #[test]
    fn pgf_satisfies_functional_equation() {
        let s = 0.5;
        let r = 1.0 - s;
        for z in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let g = geometric_pgf(s, z, 1e-15).unwrap().value;
            let g2 = geometric_pgf(s, r * z + s, 1e-15).unwrap().value;
            assert!((g - z * g2).abs() < 1e-12, "z = {z}");
        }
        let z = 1e-9;
        let lo = intensities(&geo(s), 1e-14).unwrap().lambda_o;
        assert_abs_diff_eq!(geometric_pgf(s, z, 1e-15).unwrap().value / z, lo, epsilon = 1e-8);
    }

    #[test]
    fn pgf_matches_mgf() {
        let d = geo(0.3);
        for z in [0.2, 0.6, 0.9] {
            let g = geometric_pgf(0.3, z, 1e-14).unwrap().value;
            let m = population_mgf(&d, f64::ln(z), 1e-14).unwrap().value;
            assert_abs_diff_eq!(g, m, epsilon = 1e-12);
        }
    }

    #[test]
    fn geometric_moments_by_finite_differences() {
        for s in [0.3, 0.5, 0.8] {
            let m = geometric_moments(s).unwrap();
            let g = |z: f64| geometric_pgf(s, z, 1e-16).unwrap().value;
            let h = 1e-4;
            let d1 = (g(1.0 + h) - g(1.0 - h)) / (2.0 * h);
            assert_abs_diff_eq!(d1, m.mean, epsilon = 1e-6);
            let d2 = (g(1.0 + h) - 2.0 * g(1.0) + g(1.0 - h)) / (h * h);
            assert_abs_diff_eq!(d2, m.second_factorial_moment, epsilon = 1e-6);
        }
        let half = geometric_moments(0.5).unwrap();
        assert_abs_diff_eq!(half.second_factorial_moment, 8.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(half.second_factorial_moment, 4.0 - 1.0 / 0.75, epsilon = 1e-15);
        assert_eq!(geometric_moments(1.0).unwrap().second_factorial_moment, 0.0);
    }

    #[test]
    fn markov_rows_are_binomial() {
        for k in [1u64, 2, 5, 40] {
            let row = markov_row(0.5, k).unwrap();
            assert_eq!(row.len() as u64, k + 1);
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        let row = markov_row(0.5, 1).unwrap();
        assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 0.5, epsilon = 1e-15);
        let row = markov_row(0.25, 3).unwrap();
        // survivors ~ Bin(3, 0.75)
        assert_abs_diff_eq!(row[2], 3.0 * 0.75f64.powi(2) * 0.25, epsilon = 1e-14);
    }

    #[test]
    fn markov_stationary_law_matches_pgf() {
        // pi(n) from G by iterating the kernel from a point mass
        let s = 0.5;
        let kmax = 60;
        let mut pi = vec![0.0; kmax + 2];
        pi[1] = 1.0;
        for _ in 0..400 {
            let mut next = vec![0.0; kmax + 2];
            for k in 1..=kmax {
                if pi[k] == 0.0 {
                    continue;
                }
                for (alive, p) in markov_row(s, k as u64).unwrap().into_iter().enumerate() {
                    next[(alive + 1).min(kmax)] += pi[k] * p;
                }
            }
            pi = next;
        }
        let lo = intensities(&geo(s), 1e-14).unwrap().lambda_o;
        assert_abs_diff_eq!(pi[1], lo, epsilon = 1e-10);
        let g = geometric_pgf(s, 0.5, 1e-15).unwrap().value;
        let direct: f64 = (1..=kmax).map(|n| pi[n] * 0.5f64.powi(n as i32)).sum();
        assert_abs_diff_eq!(direct, g, epsilon = 1e-10);
    }

    #[test]
    fn renewal_sequences() {
        let u = renewal_sequence(&geo(0.5), 100);
        assert!(u[1..].iter().all(|&x| (x - 0.5).abs() < 1e-12));
        let u = renewal_sequence(&MarkDistribution::two_point(0.5, 2).unwrap(), 50);
        assert!((u[50] - 2.0 / 3.0).abs() < 1e-6);
        let u = renewal_sequence(&MarkDistribution::constant(3).unwrap(), 9);
        assert_eq!(u, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(geometric_pgf(0.0, 0.5, 1e-9).is_err());
        assert!(geometric_pgf(0.5, 2.5, 1e-9).is_err());
        // negative z is allowed; G(-1) = P[N even] - P[N odd]
        let g = geometric_pgf(0.3, -1.0, 1e-14).unwrap().value;
        let m = population_mgf(&geo(0.3), 0.0, 1e-9).unwrap().value;
        assert!(g.abs() <= m);
        assert!(markov_row(1.0, 3).is_err());
        assert!(markov_row(0.5, 0).is_err());
        assert!(intensities(&geo(0.5), 0.0).is_err());
    }
}
