//! Palm estimators with confidence intervals, and empirical checks of the
//! stationary identities.

mod chisq;
mod transport;

pub use chisq::{
    distribution_equality_test, fisher_combine, kernel_gof_test, pair_independence_test, ChiSquareTest, KernelGof,
    StateGof, MIN_STATE_VISITS,
};
pub use transport::{
    diagonal_invariance, mtp_balance, registered_functionals, EphemeralTreeMembership, MtpBalance, ParentEdge,
    ParentGap, TransportFunctional,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::population::{CycleSet, PointSample, PopulationTrace};
use crate::tree::{FamilyForest, NodeLabel};

/// Cycles needed before the regenerative estimator is used.
pub const MIN_REGENERATIVE_CYCLES: usize = 30;
/// Number of non-overlapping batches for batch means.
pub const BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regenerative,
    BatchMeans,
    /// Large-sample standard error of a test statistic.
    Asymptotic,
    Exact,
}

/// Point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub method: Method,
    /// Cycles or batches behind `se`.
    pub n_effective: usize,
    /// Truncation budget inherited from the trace.
    pub epsilon: f64,
}

impl Estimate {
    pub fn exact(value: f64, epsilon: f64) -> Self {
        Estimate { value, se: 0.0, method: Method::Exact, n_effective: 1, epsilon }
    }

    /// `|value - target| <= k se`, with a rounding allowance.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se + 1e-12 * target.abs().max(1.0)
    }

    /// `value - threshold > k se`.
    pub fn exceeds(&self, threshold: f64, k: f64) -> bool {
        self.value - threshold > k * self.se
    }

    /// `threshold - value > k se`.
    pub fn below(&self, threshold: f64, k: f64) -> bool {
        threshold - self.value > k * self.se
    }
}

/// Sample mean with the standard error of `batches` contiguous batch means.
pub fn batch_means(values: &[f64], batches: usize, epsilon: f64) -> Result<Estimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} values, need at least 2")));
    }
    let b = batches.clamp(2, n);
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &values[i * n / b..(i + 1) * n / b];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let value = values.iter().sum::<f64>() / n as f64;
    let mb = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(Estimate { value, se: (var / b as f64).sqrt(), method: Method::BatchMeans, n_effective: b, epsilon })
}

/// Ratio estimator `sum y / sum tau` over i.i.d. cycles, with the usual
/// delta-method standard error.
pub fn regenerative_ratio(y: &[f64], tau: &[f64], epsilon: f64) -> Result<Estimate> {
    let n = y.len();
    if n < 2 || tau.len() != n {
        return Err(Error::InsufficientRegenerations { found: n, needed: 2 });
    }
    let sy: f64 = y.iter().sum();
    let st: f64 = tau.iter().sum();
    let r = sy / st;
    let s2 = y.iter().zip(tau).map(|(a, t)| (a - r * t).powi(2)).sum::<f64>() / (n - 1) as f64;
    let tbar = st / n as f64;
    Ok(Estimate {
        value: r,
        se: (s2 / n as f64).sqrt() / tbar,
        method: Method::Regenerative,
        n_effective: n,
        epsilon,
    })
}

/// Time average of `g` over the core of `trace`: regenerative over `cycles`
/// when there are enough of them, else batch means over the core.
pub fn time_average<G: Fn(i64) -> f64>(
    trace: &PopulationTrace,
    cycles: Option<&CycleSet>,
    g: G,
) -> Result<Estimate> {
    let eps = trace.epsilon();
    if let Some(cs) = cycles.filter(|c| c.len() >= MIN_REGENERATIVE_CYCLES) {
        let y = cs.sums(&g);
        let tau: Vec<f64> = cs.lengths().into_iter().map(|l| l as f64).collect();
        return regenerative_ratio(&y, &tau, eps);
    }
    let (lo, hi) = trace.core().ok_or(Error::EmptyCore)?;
    let vals: Vec<f64> = (lo..=hi).map(g).collect();
    batch_means(&vals, BATCHES, eps)
}

/// Atoms per unit length on the core of `points`.
///
/// The point value is the plain ratio; its standard error comes from the
/// counts per regeneration cycle when at least
/// [`MIN_REGENERATIVE_CYCLES`] are given, else from 20 batches of the core.
pub fn empirical_intensity(points: &PointSample, cycles: Option<&CycleSet>) -> Result<Estimate> {
    let (lo, hi) = points.core();
    let len = points.core_len();
    if len == 0 {
        return Err(Error::EmptyCore);
    }
    let value = points.len() as f64 / len as f64;
    let atoms = points.atoms();
    let count = |a: i64, b: i64| (atoms.partition_point(|&x| x < b) - atoms.partition_point(|&x| x < a)) as f64;
    if let Some(cs) = cycles.filter(|c| c.len() >= MIN_REGENERATIVE_CYCLES) {
        let y: Vec<f64> = cs.cycles().iter().map(|c| count(c.start, c.end())).collect();
        let tau: Vec<f64> = cs.lengths().into_iter().map(|l| l as f64).collect();
        let ratio = regenerative_ratio(&y, &tau, points.epsilon())?;
        return Ok(Estimate { value, ..ratio });
    }
    if len < 2 {
        return Err(Error::InsufficientData("core of length 1".into()));
    }
    let b = (BATCHES as u64).min(len);
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let a = lo + (i * len / b) as i64;
            let e = lo + ((i + 1) * len / b) as i64;
            count(a, e) / (e - a) as f64
        })
        .collect();
    debug_assert!(lo + len as i64 - 1 == hi);
    let mb = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(Estimate {
        value,
        se: (var / b as f64).sqrt(),
        method: Method::BatchMeans,
        n_effective: b as usize,
        epsilon: points.epsilon(),
    })
}

/// Palm mean of `functional` over the atoms of `label`: atoms where the
/// functional is `None` (outside its guards) are skipped. Standard error by
/// batching consecutive atoms.
pub fn palm_mean<F: Fn(i64) -> Option<f64>>(forest: &FamilyForest, label: NodeLabel, functional: F) -> Result<Estimate> {
    let atoms = forest.atoms(label)?;
    let values: Vec<f64> = atoms.atoms().iter().filter_map(|&n| functional(n)).collect();
    if values.len() < 2 {
        return Err(Error::NoEligibleAtoms(format!("{label:?} atoms ({} eligible)", values.len())));
    }
    batch_means(&values, BATCHES, forest.epsilon())
}

/// `d~^e(s)`: size of the direct ephemeral tree of each successful `s > k*`.
pub fn ephemeral_tree_size(forest: &FamilyForest) -> impl Fn(i64) -> Option<f64> + '_ {
    let profiles = forest.ephemeral_profiles();
    move |s| {
        let i = forest.successful_index(s)?;
        profiles[i].as_ref().map(|p| p.iter().sum::<u64>() as f64)
    }
}

/// `l(s) = 1 + sum_j d^e_j(k_j)`, defined for successful `s` with at least
/// `max_ephemeral_depth` successful nodes to its right.
pub fn total_cousins(forest: &FamilyForest) -> impl Fn(i64) -> Option<f64> + '_ {
    let profiles = forest.ephemeral_profiles();
    let horizon = profiles.iter().flatten().map(|p| p.len() - 1).max().unwrap_or(0);
    move |s| {
        let i = forest.successful_index(s)?;
        if i + horizon >= profiles.len() {
            return None;
        }
        let mut total = 1;
        for j in 1..=horizon {
            total += profiles[i + j].as_ref().and_then(|p| p.get(j).copied()).unwrap_or(0);
        }
        Some(total as f64)
    }
}

/// `d_n(x)`, the number of degree-`n` descendants, for labeled `x`.
pub fn descendant_count(forest: &FamilyForest, n: usize) -> impl Fn(i64) -> Option<f64> + '_ {
    let row = forest.descendant_count_table(n).pop().unwrap();
    let lo = forest.window().lo();
    let guard = forest.guard();
    move |x| (x >= guard && forest.window().contains(x)).then(|| row[(x - lo) as usize] as f64)
}

/// Palm means of `d_n` under the successful and ephemeral atoms, and the
/// overall node average they decompose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PalmSplit {
    pub degree: usize,
    pub successful: Estimate,
    pub ephemeral: Estimate,
    /// Fraction of successful nodes in the labeled range.
    pub lambda_s: f64,
    /// `lambda_s E^s + (1 - lambda_s) E^e`, the plain mean over all labeled nodes.
    pub total: Estimate,
}

pub fn palm_split(forest: &FamilyForest, degree: usize) -> Result<PalmSplit> {
    let d = descendant_count(forest, degree);
    let successful = palm_mean(forest, NodeLabel::Successful, &d)?;
    let ephemeral = palm_mean(forest, NodeLabel::Ephemeral, &d)?;
    let (lo, hi) = forest.labeled_range().ok_or(Error::NoEligibleAtoms("unclassified forest".into()))?;
    let all: Vec<f64> = (lo..=hi).filter_map(&d).collect();
    let total = batch_means(&all, BATCHES, forest.epsilon())?;
    let lambda_s = forest.successful().len() as f64 / (hi - lo + 1) as f64;
    Ok(PalmSplit { degree, successful, ephemeral, lambda_s, total })
}

/// Both forms of the distance ratio identity, with their Palm ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioCheck {
    /// `E^s[sum_{n in D~^e(s)} |n - s|] / E^e[|m - n^(d)(m)|]`.
    pub d_ratio: f64,
    /// Same with cousin sets and cousin roots.
    pub l_ratio: f64,
    /// `E[a] - 1`.
    pub target: f64,
    pub d_numerator: Estimate,
    pub d_denominator: Estimate,
    pub l_numerator: Estimate,
    pub l_denominator: Estimate,
}

impl RatioCheck {
    /// Both ratios within `rel` relative error of the target.
    pub fn within(&self, rel: f64) -> bool {
        [self.d_ratio, self.l_ratio].iter().all(|r| ((r - self.target) / self.target).abs() <= rel)
    }
}

/// Distances are taken to the conditioning atom, so nothing depends on the
/// window origin.
pub fn ratio_identity_check(forest: &FamilyForest) -> Result<RatioCheck> {
    let dist = forest
        .window()
        .dist()
        .ok_or_else(|| Error::InvalidParameter("window has no mark law".into()))?;
    let (lo, hi) = forest.labeled_range().ok_or(Error::NoEligibleAtoms("unclassified forest".into()))?;
    if dist.mean() <= 1.0 || forest.successful().len() as i64 == hi - lo + 1 {
        return Err(Error::NoEphemerals);
    }
    let succ = forest.successful();
    let eps = forest.epsilon();

    let mut d_num = vec![0.0; succ.len()];
    let mut d_den = Vec::new();
    for m in lo..=hi {
        if forest.label(m) != NodeLabel::Ephemeral {
            continue;
        }
        if let Some((s, _)) = forest.ephemeral_root(m) {
            let i = forest.successful_index(s).unwrap();
            d_num[i] += (s - m) as f64;
            d_den.push((s - m) as f64);
        }
    }
    let d_numerator = batch_means(&d_num[1..], BATCHES, eps)?;
    let d_denominator = batch_means(&d_den, BATCHES, eps)?;

    let cells = forest.cousin_cells();
    let horizon = forest.max_ephemeral_depth();
    let eligible = succ.len().saturating_sub(horizon);
    let l_num: Vec<f64> = (0..eligible)
        .map(|i| cells[i].iter().map(|&m| (m - succ[i]).abs() as f64).sum())
        .collect();
    let l_den: Vec<f64> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |&m| (m - succ[i]).abs() as f64))
        .collect();
    let l_numerator = batch_means(&l_num, BATCHES, eps)?;
    let l_denominator = batch_means(&l_den, BATCHES, eps)?;

    Ok(RatioCheck {
        d_ratio: d_numerator.value / d_denominator.value,
        l_ratio: l_numerator.value / l_denominator.value,
        target: dist.mean() - 1.0,
        d_numerator,
        d_denominator,
        l_numerator,
        l_denominator,
    })
}

/// Sample autocorrelation at `lag`, with standard error `1/sqrt(n)` under
/// independence.
pub fn lag_autocorrelation(xs: &[f64], lag: usize) -> Result<Estimate> {
    let n = xs.len();
    if n <= lag + 2 {
        return Err(Error::InsufficientData(format!("{n} values for lag {lag}")));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return Ok(Estimate::exact(0.0, 0.0));
    }
    let cov: f64 = xs.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum();
    Ok(Estimate {
        value: cov / var,
        se: 1.0 / (n as f64).sqrt(),
        method: Method::Asymptotic,
        n_effective: n,
        epsilon: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::{MarkDistribution, SeedSpec};
    use crate::population::{
        burn_in, original_ancestors, population_process, regeneration_cycles, MarkWindow, PointLabel,
    };
    use crate::tree::build_forest;
    use approx::assert_abs_diff_eq;

    fn forest(spec: &str, seed: u64, len: i64) -> FamilyForest {
        let d = MarkDistribution::parse(spec).unwrap();
        let w = MarkWindow::simulate(&d, SeedSpec::new(seed), 0, len - 1).unwrap();
        let t = population_process(w, burn_in(&d, 1e-9));
        let a = original_ancestors(&t).unwrap();
        build_forest(&t, &a)
    }

    #[test]
    fn batch_means_of_constant_and_alternating() {
        let e = batch_means(&[3.0; 100], 20, 0.0).unwrap();
        assert_eq!((e.value, e.se, e.n_effective), (3.0, 0.0, 20));
        let alt: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let e = batch_means(&alt, 20, 0.0).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.se, 0.0);
        assert!(batch_means(&[1.0], 20, 0.0).is_err());
    }

    #[test]
    fn batch_means_standard_error_of_iid_values() {
        // uniform(0,1) by a fixed congruential walk: se ~ sqrt(1/12 / n)
        let mut x = 0.5f64;
        let vals: Vec<f64> = (0..20_000)
            .map(|_| {
                x = (x * 9973.0 + 0.618_033_988_7).fract();
                x
            })
            .collect();
        let e = batch_means(&vals, 20, 0.0).unwrap();
        let target = (1.0 / 12.0 / 20_000.0f64).sqrt();
        assert!(e.se > 0.3 * target && e.se < 3.0 * target, "{} vs {target}", e.se);
    }

    #[test]
    fn regenerative_ratio_exact_for_proportional_cycles() {
        let y = [2.0, 4.0, 6.0];
        let t = [1.0, 2.0, 3.0];
        let e = regenerative_ratio(&y, &t, 0.0).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.method, Method::Regenerative);
    }

    #[test]
    fn intensity_of_even_atoms() {
        let atoms: Vec<i64> = (0..50).map(|i| 2 * i).collect();
        let p = PointSample::new(atoms, (0, 99), PointLabel::Successful, 0.0).unwrap();
        let e = empirical_intensity(&p, None).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.method, Method::BatchMeans);
    }

    #[test]
    fn littles_law_and_ancestor_intensity() {
        let d = MarkDistribution::geometric(0.5).unwrap();
        let w = MarkWindow::simulate(&d, SeedSpec::new(21), 0, 199_999).unwrap();
        let t = population_process(w, burn_in(&d, 1e-9));
        let anc = original_ancestors(&t).unwrap();
        let cs = regeneration_cycles(&t, &anc).unwrap();
        let n = time_average(&t, Some(&cs), |x| t.at(x).unwrap() as f64).unwrap();
        assert_eq!(n.method, Method::Regenerative);
        assert!(n.within(2.0, 4.0), "{n:?}");
        let lo = empirical_intensity(&anc, Some(&cs)).unwrap();
        assert!(lo.within(0.288_788_095, 4.0), "{lo:?}");
    }

    #[test]
    fn constant_one_palm_means_are_exact() {
        let f = forest("constant:1", 1, 500);
        let e = palm_mean(&f, NodeLabel::Successful, ephemeral_tree_size(&f)).unwrap();
        assert_eq!((e.value, e.se), (1.0, 0.0));
        assert!(matches!(ratio_identity_check(&f), Err(Error::NoEphemerals)));
    }

    #[test]
    fn cousin_and_tree_sizes_average_to_the_mean_mark() {
        let f = forest("geometric:0.5", 31, 200_000);
        let t = palm_mean(&f, NodeLabel::Successful, ephemeral_tree_size(&f)).unwrap();
        let l = palm_mean(&f, NodeLabel::Successful, total_cousins(&f)).unwrap();
        assert!(t.within(2.0, 4.0), "{t:?}");
        assert!(l.within(2.0, 4.0), "{l:?}");
    }

    #[test]
    fn total_cousins_agrees_with_tree_walks() {
        let f = forest("geometric:0.5", 5, 5_000);
        let l = total_cousins(&f);
        let h = f.max_ephemeral_depth();
        for &s in f.successful() {
            if let Some(v) = l(s) {
                assert_eq!(v as u64, f.total_cousins(s, h).unwrap());
            }
        }
    }

    #[test]
    fn palm_split_brackets_one() {
        let f = forest("twopoint:0.5,3", 4, 200_000);
        for n in 1..=2 {
            let ps = palm_split(&f, n).unwrap();
            assert!(ps.successful.exceeds(1.0, 3.0), "{ps:?}");
            assert!(ps.ephemeral.below(1.0, 3.0), "{ps:?}");
            let mix = ps.lambda_s * ps.successful.value + (1.0 - ps.lambda_s) * ps.ephemeral.value;
            assert_abs_diff_eq!(mix, ps.total.value, epsilon = 1e-9);
            assert!(ps.total.within(1.0, 4.0));
        }
    }

    #[test]
    fn ratio_identity_for_two_point() {
        let f = forest("twopoint:0.5,2", 12, 200_000);
        let r = ratio_identity_check(&f).unwrap();
        assert_abs_diff_eq!(r.target, 0.5, epsilon = 1e-12);
        assert!(r.within(0.1), "{r:?}");
    }

    #[test]
    fn autocorrelation_basics() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = lag_autocorrelation(&xs, 1).unwrap();
        assert!(e.value < -0.95);
        assert_eq!(lag_autocorrelation(&[2.0; 10], 1).unwrap().value, 0.0);
    }
}
