//! Mass transport between nodes of the forest.

use serde::Serialize;

use super::{batch_means, Estimate, BATCHES};
use crate::error::{Error, Result};
use crate::marks::MarkDistribution;
use crate::population::{original_ancestors, population_process};
use crate::tree::{build_forest, FamilyForest, NodeLabel};

/// A mass function `h(n, m)` computed from the forest around `n`.
///
/// Implementations must be diagonally invariant: shifting the marks by `k`
/// shifts the mass sent from `n` to `n + k` in the same way.
pub trait TransportFunctional: Sync {
    fn name(&self) -> &'static str;

    /// `(m, h(n, m))` for every `m` receiving mass from `n`. `None` when the
    /// mass sent from `n` is not determined by the window.
    fn sent(&self, forest: &FamilyForest, n: i64) -> Option<Vec<(i64, f64)>>;

    /// Range of senders on which `sent` is determined.
    fn senders(&self, forest: &FamilyForest) -> Option<(i64, i64)>;

    /// `E[sum_m h(0, m)]` under the mark law, when known in closed form.
    fn expected(&self, dist: &MarkDistribution) -> Option<f64>;

    fn value(&self, forest: &FamilyForest, n: i64, m: i64) -> f64 {
        self.sent(forest, n)
            .and_then(|v| v.into_iter().find(|e| e.0 == m))
            .map_or(0.0, |e| e.1)
    }
}

/// `h(n, m) = 1{f(n) = m}`.
pub struct ParentEdge;

/// `h(n, m) = 1{n successful, m in D~^e(n)}`, root included.
pub struct EphemeralTreeMembership;

/// `h(n, m) = 1{f(n) = m} (m - n)`.
pub struct ParentGap;

impl TransportFunctional for ParentEdge {
    fn name(&self) -> &'static str {
        "parent_edge"
    }

    fn sent(&self, forest: &FamilyForest, n: i64) -> Option<Vec<(i64, f64)>> {
        forest.parent(n).map(|p| vec![(p, 1.0)])
    }

    fn senders(&self, forest: &FamilyForest) -> Option<(i64, i64)> {
        Some((forest.guard(), forest.window().hi()))
    }

    fn expected(&self, _: &MarkDistribution) -> Option<f64> {
        Some(1.0)
    }
}

impl TransportFunctional for EphemeralTreeMembership {
    fn name(&self) -> &'static str {
        "ephemeral_tree_membership"
    }

    fn sent(&self, forest: &FamilyForest, n: i64) -> Option<Vec<(i64, f64)>> {
        match forest.label(n) {
            NodeLabel::Unknown => None,
            NodeLabel::Ephemeral => Some(Vec::new()),
            NodeLabel::Successful => forest
                .direct_ephemeral_tree(n)
                .ok()
                .map(|t| t.members.into_iter().map(|m| (m, 1.0)).collect()),
        }
    }

    fn senders(&self, forest: &FamilyForest) -> Option<(i64, i64)> {
        forest.labeled_range().map(|(k, hi)| (k + 1, hi))
    }

    fn expected(&self, _: &MarkDistribution) -> Option<f64> {
        Some(1.0)
    }
}

impl TransportFunctional for ParentGap {
    fn name(&self) -> &'static str {
        "parent_gap"
    }

    fn sent(&self, forest: &FamilyForest, n: i64) -> Option<Vec<(i64, f64)>> {
        forest.parent(n).map(|p| vec![(p, (p - n) as f64)])
    }

    fn senders(&self, forest: &FamilyForest) -> Option<(i64, i64)> {
        Some((forest.guard(), forest.window().hi()))
    }

    fn expected(&self, dist: &MarkDistribution) -> Option<f64> {
        Some(dist.mean())
    }
}

pub fn registered_functionals() -> Vec<Box<dyn TransportFunctional>> {
    vec![Box::new(ParentEdge), Box::new(EphemeralTreeMembership), Box::new(ParentGap)]
}

/// Received and sent mass per core node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MtpBalance {
    pub name: String,
    /// Average mass received, `sum_m h(m, n)`.
    pub lhs: Estimate,
    /// Average mass sent, `sum_m h(n, m)`.
    pub rhs: Estimate,
    /// Largest `|n - m|` carrying mass among the senders.
    pub radius: i64,
    pub core: (i64, i64),
    /// Mass crossing the core boundary per core node; bounds `|lhs - rhs|`.
    pub boundary: f64,
    /// `2 radius max|h| / core length`.
    pub radius_bound: f64,
    pub target: Option<f64>,
}

impl MtpBalance {
    /// `|lhs - rhs| <= k sqrt(se_l^2 + se_r^2) + boundary`, and both sides
    /// within `k` standard errors (plus boundary) of the closed-form target.
    pub fn balanced(&self, k: f64) -> bool {
        let stat = k * self.lhs.se.hypot(self.rhs.se);
        let tol = 1e-12 * self.lhs.value.abs().max(1.0);
        let agree = (self.lhs.value - self.rhs.value).abs() <= stat + self.boundary + tol;
        let on_target = self.target.is_none_or(|t| {
            [self.lhs, self.rhs].iter().all(|e| (e.value - t).abs() <= k * e.se + self.boundary + tol)
        });
        agree && on_target
    }
}

/// Both sides of the mass transport principle for `h`, averaged over the
/// sender range shrunk by the realized support radius on both sides.
pub fn mtp_balance(forest: &FamilyForest, h: &dyn TransportFunctional) -> Result<MtpBalance> {
    let (dlo, dhi) = h.senders(forest).ok_or(Error::EmptyCore)?;
    if dlo > dhi {
        return Err(Error::EmptyCore);
    }
    let len = (dhi - dlo + 1) as usize;
    let mut sent = vec![0.0; len];
    let mut edges: Vec<(i64, i64, f64)> = Vec::new();
    let mut radius = 0;
    let mut max_h = 0.0f64;
    for n in dlo..=dhi {
        let Some(mass) = h.sent(forest, n) else {
            continue;
        };
        for (m, v) in mass {
            if v != 0.0 {
                radius = radius.max((m - n).abs());
                max_h = max_h.max(v.abs());
                sent[(n - dlo) as usize] += v;
                edges.push((n, m, v));
            }
        }
    }
    let (clo, chi) = (dlo + radius, dhi - radius);
    if clo > chi {
        return Err(Error::RadiusTooLarge { radius });
    }
    let inside = |x: i64| (clo..=chi).contains(&x);
    let mut received = vec![0.0; len];
    let mut crossing = 0.0;
    for &(n, m, v) in &edges {
        if (dlo..=dhi).contains(&m) {
            received[(m - dlo) as usize] += v;
        }
        if inside(n) != inside(m) {
            crossing += v.abs();
        }
    }
    let core_len = (chi - clo + 1) as f64;
    let a = (clo - dlo) as usize;
    let b = (chi - dlo) as usize;
    let eps = forest.epsilon();
    let lhs = batch_means(&received[a..=b], BATCHES, eps)?;
    let rhs = batch_means(&sent[a..=b], BATCHES, eps)?;
    Ok(MtpBalance {
        name: h.name().to_string(),
        lhs,
        rhs,
        radius,
        core: (clo, chi),
        boundary: crossing / core_len,
        radius_bound: 2.0 * radius as f64 * max_h / core_len,
        target: forest.window().dist().and_then(|d| h.expected(d)),
    })
}

/// Evaluates `h` on the forest and on the forest of the marks shifted by
/// `k`, and checks that every sender's mass moves along with it.
pub fn diagonal_invariance(h: &dyn TransportFunctional, forest: &FamilyForest, burn_in: u64, k: i64) -> Result<bool> {
    let shifted = forest.window().shifted(k);
    let trace = population_process(shifted, burn_in);
    let anc = original_ancestors(&trace)?;
    let moved = build_forest(&trace, &anc);
    let (lo, hi) = h.senders(forest).ok_or(Error::EmptyCore)?;
    for n in lo..=hi {
        let here = h.sent(forest, n).map(|v| v.into_iter().map(|(m, x)| (m + k, x)).collect::<Vec<_>>());
        if here != h.sent(&moved, n + k) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::SeedSpec;
    use crate::population::{burn_in, MarkWindow};

    fn forest(spec: &str, seed: u64, len: i64) -> (FamilyForest, u64) {
        let d = MarkDistribution::parse(spec).unwrap();
        let b = burn_in(&d, 1e-9);
        let w = MarkWindow::simulate(&d, SeedSpec::new(seed), 0, len - 1).unwrap();
        let t = population_process(w, b);
        let a = original_ancestors(&t).unwrap();
        (build_forest(&t, &a), b)
    }

    #[test]
    fn parent_edge_sends_exactly_one() {
        let (f, _) = forest("geometric:0.5", 2, 50_000);
        let r = mtp_balance(&f, &ParentEdge).unwrap();
        assert_eq!((r.rhs.value, r.rhs.se), (1.0, 0.0));
        assert!((r.lhs.value - r.rhs.value).abs() <= r.boundary + 1e-12);
        assert!(r.balanced(3.0), "{r:?}");
    }

    #[test]
    fn boundary_term_bounds_the_gap_exactly() {
        for spec in ["geometric:0.3", "twopoint:0.4,5", "zeta:6"] {
            let (f, _) = forest(spec, 8, 20_000);
            for h in registered_functionals() {
                let r = mtp_balance(&f, h.as_ref()).unwrap();
                assert!((r.lhs.value - r.rhs.value).abs() <= r.boundary + 1e-9, "{spec} {}", r.name);
                assert!(r.balanced(4.0), "{spec} {r:?}");
            }
        }
    }

    #[test]
    fn parent_gap_matches_brute_force_on_small_window() {
        let w = MarkWindow::from_marks(0, vec![2, 1, 3, 1, 1, 2, 1, 1, 1, 1, 2, 1]).unwrap();
        let t = population_process(w, 0);
        let a = original_ancestors(&t).unwrap();
        let f = build_forest(&t, &a);
        let r = mtp_balance(&f, &ParentGap).unwrap();
        let (clo, chi) = r.core;
        let marks = f.window().marks();
        let recv: f64 = (clo..=chi)
            .map(|n| (0..12i64).filter(|&m| m + marks[m as usize] as i64 == n).map(|m| (n - m) as f64).sum::<f64>())
            .sum();
        let sent: f64 = (clo..=chi).map(|n| marks[n as usize] as f64).sum();
        let k = (chi - clo + 1) as f64;
        assert!((r.lhs.value - recv / k).abs() < 1e-12);
        assert!((r.rhs.value - sent / k).abs() < 1e-12);
    }

    #[test]
    fn radius_too_large_is_rejected() {
        let w = MarkWindow::from_marks(0, vec![5, 1, 1, 1, 1, 1]).unwrap();
        let t = population_process(w, 0);
        let a = original_ancestors(&t).unwrap();
        let f = build_forest(&t, &a);
        assert!(matches!(mtp_balance(&f, &ParentGap), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn registered_functionals_are_diagonally_invariant() {
        let (f, b) = forest("geometric:0.5", 4, 3_000);
        for h in registered_functionals() {
            for k in [-17, 0, 1, 1_000] {
                assert!(diagonal_invariance(h.as_ref(), &f, b, k).unwrap(), "{}", h.name());
            }
        }
    }

    /// Depends on the absolute position, so a shift changes it.
    struct ToOrigin;

    impl TransportFunctional for ToOrigin {
        fn name(&self) -> &'static str {
            "to_origin"
        }
        fn sent(&self, _: &FamilyForest, n: i64) -> Option<Vec<(i64, f64)>> {
            Some(vec![(0, n as f64)])
        }
        fn senders(&self, f: &FamilyForest) -> Option<(i64, i64)> {
            Some((f.window().lo(), f.window().hi()))
        }
        fn expected(&self, _: &MarkDistribution) -> Option<f64> {
            None
        }
    }

    #[test]
    fn non_invariant_functional_detected() {
        let (f, b) = forest("geometric:0.5", 4, 500);
        assert!(!diagonal_invariance(&ToOrigin, &f, b, 3).unwrap());
        assert_eq!(ToOrigin.value(&f, 7, 0), 7.0);
    }
}
