//! Chi-square tests: two-sample equality, kernel goodness of fit, and
//! independence of consecutive pairs.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::markov_row;
use crate::error::{Error, Result};
use crate::population::PopulationTrace;

/// Smallest expected count per cell after merging.
const MIN_EXPECTED: f64 = 5.0;
/// States visited fewer times are left out of the kernel test.
pub const MIN_STATE_VISITS: u64 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    fn degenerate() -> Self {
        ChiSquareTest { statistic: 0.0, df: 0, p_value: 1.0 }
    }

    fn new(statistic: f64, df: usize) -> Self {
        if df == 0 {
            return Self::degenerate();
        }
        let law = ChiSquared::new(df as f64).unwrap();
        ChiSquareTest { statistic, df, p_value: law.sf(statistic).clamp(0.0, 1.0) }
    }
}

/// Fisher's method: `-2 sum ln p_i ~ chi^2(2k)`.
pub fn fisher_combine(p_values: &[f64]) -> ChiSquareTest {
    let stat: f64 = p_values.iter().map(|p| -2.0 * p.max(1e-300).ln()).sum();
    ChiSquareTest::new(stat, 2 * p_values.len())
}

/// Merges adjacent cells (in order) until each carries at least `min` of
/// `weight`; a short remainder joins the last cell. Returns cell boundaries
/// as exclusive end indices.
fn merge_cells(weights: &[f64], min: f64) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= min {
            ends.push(i + 1);
            acc = 0.0;
        }
    }
    match ends.last_mut() {
        Some(last) => *last = weights.len(),
        None if !weights.is_empty() => ends.push(weights.len()),
        None => {}
    }
    ends
}

/// Two-sample chi-square test of equal distributions on the pooled support.
pub fn distribution_equality_test(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both samples must be nonempty".into()));
    }
    let mut counts: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_default().0 += 1.0;
    }
    for &x in b {
        counts.entry(x).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let cells: Vec<(f64, f64)> = counts.into_values().collect();
    let pooled: Vec<f64> = cells.iter().map(|c| c.0 + c.1).collect();
    // expected count of the smaller sample in a cell of pooled size t is t min/n
    let ends = merge_cells(&pooled, MIN_EXPECTED * n / na.min(nb));
    if ends.len() < 2 {
        return Ok(ChiSquareTest::degenerate());
    }
    let mut stat = 0.0;
    let mut start = 0;
    for &end in &ends {
        let (oa, ob) = cells[start..end].iter().fold((0.0, 0.0), |s, c| (s.0 + c.0, s.1 + c.1));
        let t = oa + ob;
        let (ea, eb) = (na * t / n, nb * t / n);
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
        start = end;
    }
    Ok(ChiSquareTest::new(stat, ends.len() - 1))
}

/// Goodness of fit for one origin state of the population chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StateGof {
    pub state: u32,
    pub visits: u64,
    pub test: ChiSquareTest,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelGof {
    /// Fisher combination over the tested states.
    pub combined: ChiSquareTest,
    pub states: Vec<StateGof>,
}

impl KernelGof {
    pub fn p_value(&self) -> f64 {
        self.combined.p_value
    }
}

/// Compares the transitions `N_{n-1} -> N_n` on the core of `trace` with the
/// geometric(s) kernel, state by state.
pub fn kernel_gof_test(trace: &PopulationTrace, s: f64) -> Result<KernelGof> {
    let core = trace.core_values();
    if core.len() < 2 {
        return Err(Error::InsufficientData("core too short for transitions".into()));
    }
    let mut counts: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for w in core.windows(2) {
        let (k, next) = (w[0], w[1] as usize);
        let row = counts.entry(k).or_insert_with(|| vec![0.0; k as usize + 2]);
        if next >= row.len() {
            row.resize(next + 1, 0.0);
        }
        row[next] += 1.0;
    }
    let mut states = Vec::new();
    for (k, obs) in counts {
        let visits = obs.iter().sum::<f64>() as u64;
        if visits < MIN_STATE_VISITS {
            continue;
        }
        let row = markov_row(s, u64::from(k))?;
        // cells n' = 0..; mass only on 1..=k+1 under the model; an
        // observation outside gets an expected count of zero and fails hard
        let mut expected = vec![0.0; obs.len().max(row.len() + 1)];
        for (i, p) in row.iter().enumerate() {
            expected[i + 1] = p * visits as f64;
        }
        let mut observed = obs.clone();
        observed.resize(expected.len(), 0.0);
        if observed.iter().zip(&expected).any(|(o, e)| *o > 0.0 && *e == 0.0) {
            states.push(StateGof {
                state: k,
                visits,
                test: ChiSquareTest { statistic: f64::INFINITY, df: 1, p_value: 0.0 },
            });
            continue;
        }
        let ends = merge_cells(&expected, MIN_EXPECTED);
        let mut stat = 0.0;
        let mut start = 0;
        for &end in &ends {
            let o: f64 = observed[start..end].iter().sum();
            let e: f64 = expected[start..end].iter().sum();
            if e > 0.0 {
                stat += (o - e).powi(2) / e;
            }
            start = end;
        }
        if ends.len() >= 2 {
            states.push(StateGof { state: k, visits, test: ChiSquareTest::new(stat, ends.len() - 1) });
        }
    }
    if states.is_empty() {
        return Err(Error::InsufficientData(format!("no state with at least {MIN_STATE_VISITS} visits")));
    }
    let ps: Vec<f64> = states.iter().map(|st| st.test.p_value).collect();
    Ok(KernelGof { combined: fisher_combine(&ps), states })
}

/// Chi-square test of independence between the two members of the
/// non-overlapping pairs `(x_0, x_1), (x_2, x_3), ...`.
pub fn pair_independence_test(xs: &[u64]) -> Result<ChiSquareTest> {
    let pairs: Vec<(u64, u64)> = xs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let n = pairs.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("{n} pairs")));
    }
    let mut pooled: BTreeMap<u64, f64> = BTreeMap::new();
    for &(a, b) in &pairs {
        *pooled.entry(a).or_default() += 1.0;
        *pooled.entry(b).or_default() += 1.0;
    }
    let values: Vec<u64> = pooled.keys().copied().collect();
    let weights: Vec<f64> = pooled.values().copied().collect();
    // category share q needs n q^2 >= 5; start there and widen until every
    // expected count clears the threshold
    let mut min_share = (MIN_EXPECTED / n as f64).sqrt() * 1.2;
    loop {
        let ends = merge_cells(&weights, min_share * 2.0 * n as f64);
        let k = ends.len();
        if k < 2 {
            return Ok(ChiSquareTest::degenerate());
        }
        let cat = |v: u64| {
            let i = values.binary_search(&v).unwrap();
            ends.partition_point(|&e| e <= i)
        };
        let mut table = vec![vec![0.0; k]; k];
        for &(a, b) in &pairs {
            table[cat(a)][cat(b)] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let nf = n as f64;
        let min_e = rows
            .iter()
            .flat_map(|r| cols.iter().map(move |c| r * c / nf))
            .fold(f64::INFINITY, f64::min);
        if min_e < MIN_EXPECTED {
            min_share *= 1.5;
            continue;
        }
        let mut stat = 0.0;
        for i in 0..k {
            for j in 0..k {
                let e = rows[i] * cols[j] / nf;
                stat += (table[i][j] - e).powi(2) / e;
            }
        }
        return Ok(ChiSquareTest::new(stat, (k - 1) * (k - 1)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::{MarkDistribution, SeedSpec};
    use crate::population::{burn_in, population_process, MarkWindow};

    #[test]
    fn identical_samples() {
        let a: Vec<u64> = (0..500).map(|i| i % 7).collect();
        let t = distribution_equality_test(&a, &a).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_samples() {
        let t = distribution_equality_test(&[0; 1000], &[5; 1000]).unwrap();
        assert!(t.p_value < 1e-6);
        assert_eq!(t.df, 1);
    }

    #[test]
    fn single_shared_value_is_degenerate() {
        let t = distribution_equality_test(&[3; 40], &[3; 70]).unwrap();
        assert_eq!(t.p_value, 1.0);
        assert!(distribution_equality_test(&[], &[1]).is_err());
    }

    #[test]
    fn merged_cells_carry_enough_weight() {
        let ends = merge_cells(&[1.0, 2.0, 3.0, 10.0, 1.0, 1.0], 5.0);
        assert_eq!(ends, vec![3, 6]);
        assert_eq!(merge_cells(&[1.0, 1.0], 5.0), vec![2]);
    }

    #[test]
    fn fisher_of_uniform_p_values() {
        let t = fisher_combine(&[1.0, 1.0]);
        assert_eq!(t.statistic, 0.0);
        assert!(fisher_combine(&[1e-10, 0.5]).p_value < 1e-6);
    }

    #[test]
    fn kernel_fits_geometric_and_rejects_constant() {
        let d = MarkDistribution::geometric(0.5).unwrap();
        let w = MarkWindow::simulate(&d, SeedSpec::new(9), 0, 199_999).unwrap();
        let t = population_process(w, burn_in(&d, 1e-9));
        assert!(kernel_gof_test(&t, 0.5).unwrap().p_value() > 0.001);
        assert!(kernel_gof_test(&t, 0.4).unwrap().p_value() < 1e-6);

        let c = MarkDistribution::constant(2).unwrap();
        let w = MarkWindow::simulate(&c, SeedSpec::new(9), 0, 9_999).unwrap();
        let t = population_process(w, burn_in(&c, 1e-9));
        assert!(kernel_gof_test(&t, 0.5).unwrap().p_value() < 1e-6);

        let w = MarkWindow::simulate(&c, SeedSpec::new(9), 0, 20).unwrap();
        let t = population_process(w, 1);
        assert!(matches!(kernel_gof_test(&t, 0.5), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pair_independence() {
        // independent draws
        let d = MarkDistribution::geometric(0.3).unwrap();
        let xs = crate::marks::sample_marks(&d, SeedSpec::new(3), 0, 19_999);
        assert!(pair_independence_test(&xs).unwrap().p_value > 0.001);
        // second member copies the first
        let dup: Vec<u64> = xs.iter().step_by(2).flat_map(|&x| [x, x]).collect();
        assert!(pair_independence_test(&dup).unwrap().p_value < 1e-6);
    }
}
