//! Mark laws (lifespans / service times) and reproducible per-index sampling.
//!
//! A mark `a_n` is a positive integer; `f(n) = n + a_n` is both the death time
//! of individual `n` and its parent in the family tree. Every law exposes the
//! analytic primitives the rest of the crate needs: pmf, survival
//! `P[a > j]`, mean, and the tail sum `sum_{j > B} P[a > j]` that controls
//! every truncation and burn-in error.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::hurwitz_zeta;

/// Tolerance on the pmf total for built-in laws.
const PMF_SUM_TOL: f64 = 1e-12;
/// Empirical tables within this distance of 1 are renormalized.
const EMPIRICAL_RENORM_TOL: f64 = 1e-9;
/// Largest cap for which a capped zeta law is tabulated.
pub const MAX_ZETA_CAP: u64 = 1 << 22;
/// Atoms of the uncapped zeta law resolved by table lookup.
const ZETA_TABLE: u64 = 4096;

/// User-facing description of a mark law.
///
/// JSON form is internally tagged, e.g. `{"kind": "geometric", "s": 0.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    /// Point mass at `value`.
    Constant { value: u64 },
    /// Mass `p1` at 1 and `1 - p1` at `v`.
    TwoPoint { p1: f64, v: u64 },
    /// Geometric on `{1, 2, ...}` with success probability `s`.
    Geometric { s: f64 },
    /// `P[a = k]` proportional to `k^-alpha`, optionally truncated at `cap`.
    Zeta {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<u64>,
    },
    /// Explicit table of `(atom, probability)` pairs.
    Empirical { pmf: Vec<(u64, f64)> },
}

impl FromStr for DistSpec {
    type Err = Error;

    /// Parses the compact `kind:params` form used on the command line:
    /// `constant:2`, `twopoint:0.5,3`, `geometric:0.5`, `zeta:2.5[,cap]`,
    /// `empirical:1=0.25,2=0.75`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidDistribution(format!("{s:?}: {msg}"));
        let (kind, params) = s.split_once(':').ok_or_else(|| bad("expected kind:params"))?;
        let params = params.trim();
        let num = |p: &str| -> Result<f64> {
            p.trim().parse::<f64>().map_err(|_| bad(&format!("not a number: {p:?}")))
        };
        let int = |p: &str| -> Result<u64> {
            p.trim().parse::<u64>().map_err(|_| bad(&format!("not a nonnegative integer: {p:?}")))
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(DistSpec::Constant { value: int(params)? }),
            "twopoint" | "two-point" | "two_point" => {
                let (p1, v) = params.split_once(',').ok_or_else(|| bad("expected p1,v"))?;
                Ok(DistSpec::TwoPoint { p1: num(p1)?, v: int(v)? })
            }
            "geometric" | "geom" => Ok(DistSpec::Geometric { s: num(params)? }),
            "zeta" => match params.split_once(',') {
                Some((alpha, cap)) => Ok(DistSpec::Zeta { alpha: num(alpha)?, cap: Some(int(cap)?) }),
                None => Ok(DistSpec::Zeta { alpha: num(params)?, cap: None }),
            },
            "empirical" | "pmf" => {
                let mut pmf = Vec::new();
                for cell in params.split(',') {
                    let (k, p) = cell.split_once('=').ok_or_else(|| bad("expected atom=prob"))?;
                    pmf.push((int(k)?, num(p)?));
                }
                Ok(DistSpec::Empirical { pmf })
            }
            other => Err(bad(&format!("unknown kind {other:?}"))),
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Constant { value } => write!(f, "constant:{value}"),
            DistSpec::TwoPoint { p1, v } => write!(f, "twopoint:{p1},{v}"),
            DistSpec::Geometric { s } => write!(f, "geometric:{s}"),
            DistSpec::Zeta { alpha, cap: Some(cap) } => write!(f, "zeta:{alpha},{cap}"),
            DistSpec::Zeta { alpha, cap: None } => write!(f, "zeta:{alpha}"),
            DistSpec::Empirical { pmf } => {
                write!(f, "empirical:")?;
                for (i, (k, p)) in pmf.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}={p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Finite-support law stored as sorted atoms with cumulative probabilities.
#[derive(Clone, Debug)]
struct FiniteLaw {
    atoms: Vec<u64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl FiniteLaw {
    fn new(mut cells: Vec<(u64, f64)>) -> Self {
        cells.sort_by_key(|&(k, _)| k);
        let mut atoms: Vec<u64> = Vec::with_capacity(cells.len());
        let mut probs: Vec<f64> = Vec::with_capacity(cells.len());
        for (k, p) in cells {
            if p == 0.0 {
                continue;
            }
            if atoms.last() == Some(&k) {
                *probs.last_mut().unwrap() += p;
            } else {
                atoms.push(k);
                probs.push(p);
            }
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        FiniteLaw { atoms, probs, cdf }
    }

    fn pmf(&self, k: u64) -> f64 {
        match self.atoms.binary_search(&k) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    fn survival(&self, j: u64) -> f64 {
        let i = self.atoms.partition_point(|&k| k <= j);
        self.probs[i..].iter().sum()
    }

    fn tail_mass(&self, b: u64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .filter(|(&k, _)| k > b + 1)
            .map(|(&k, &p)| (k - b - 1) as f64 * p)
            .sum()
    }

    fn quantile(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        self.atoms[i.min(self.atoms.len() - 1)]
    }
}

/// Uncapped zeta law `P[a = k] = k^-alpha / zeta(alpha)`, `alpha > 2`.
#[derive(Clone, Debug)]
struct ZetaLaw {
    alpha: f64,
    norm: f64,
    /// cdf[k - 1] = P[a <= k] for k <= ZETA_TABLE
    cdf: Vec<f64>,
}

impl ZetaLaw {
    fn new(alpha: f64) -> Self {
        let norm = hurwitz_zeta(alpha, 1.0);
        let mut acc = 0.0;
        let cdf = (1..=ZETA_TABLE)
            .map(|k| {
                acc += (k as f64).powf(-alpha) / norm;
                acc
            })
            .collect();
        ZetaLaw { alpha, norm, cdf }
    }

    fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k as f64).powf(-self.alpha) / self.norm
        }
    }

    fn survival(&self, j: u64) -> f64 {
        hurwitz_zeta(self.alpha, j as f64 + 1.0) / self.norm
    }

    fn tail_mass(&self, b: u64) -> f64 {
        // sum_{k >= b+2} (k - b - 1) k^-alpha
        let q = b as f64 + 2.0;
        let v = hurwitz_zeta(self.alpha - 1.0, q) - (q - 1.0) * hurwitz_zeta(self.alpha, q);
        (v / self.norm).max(0.0)
    }

    fn quantile(&self, u: f64) -> u64 {
        if u < *self.cdf.last().unwrap() {
            return self.cdf.partition_point(|&c| c <= u) as u64 + 1;
        }
        // smallest k with P[a > k] < 1 - u
        let v = 1.0 - u;
        let mut lo = ZETA_TABLE;
        let mut hi = ZETA_TABLE * 2;
        while self.survival(hi) >= v {
            lo = hi;
            hi = hi.saturating_mul(2);
            if hi == u64::MAX {
                return hi;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.survival(mid) < v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

#[derive(Clone, Debug)]
enum Law {
    Finite(FiniteLaw),
    Geometric { s: f64, r: f64 },
    Zeta(ZetaLaw),
}

/// Validated mark law with cached mean, mass at 1 and smallest atom.
#[derive(Clone, Debug)]
pub struct MarkDistribution {
    spec: DistSpec,
    law: Law,
    mean: f64,
    p1: f64,
    min_support: u64,
}

impl MarkDistribution {
    /// Validates `spec` against the standing assumptions (positive integer
    /// support, finite mean) and caches the derived quantities.
    pub fn new(spec: DistSpec) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidDistribution(msg));
        let law = match &spec {
            DistSpec::Constant { value } => {
                if *value == 0 {
                    return invalid("constant mark must be a positive integer".into());
                }
                Law::Finite(FiniteLaw::new(vec![(*value, 1.0)]))
            }
            DistSpec::TwoPoint { p1, v } => {
                if !(0.0..=1.0).contains(p1) || p1.is_nan() {
                    return invalid(format!("two-point mass at 1 must lie in [0, 1], got {p1}"));
                }
                if *v < 2 {
                    return invalid(format!("two-point second atom must be >= 2, got {v}"));
                }
                Law::Finite(FiniteLaw::new(vec![(1, *p1), (*v, 1.0 - p1)]))
            }
            DistSpec::Geometric { s } => {
                if !(*s > 0.0 && *s <= 1.0) {
                    return invalid(format!("geometric parameter must satisfy 0 < s <= 1, got {s}"));
                }
                Law::Geometric { s: *s, r: 1.0 - s }
            }
            DistSpec::Zeta { alpha, cap } => match cap {
                Some(cap) => {
                    if *cap == 0 {
                        return invalid("zeta cap must be a positive integer".into());
                    }
                    if *cap > MAX_ZETA_CAP {
                        return invalid(format!(
                            "zeta cap {cap} exceeds the tabulation limit {MAX_ZETA_CAP}; use the uncapped law"
                        ));
                    }
                    if !alpha.is_finite() || *alpha <= 0.0 {
                        return invalid(format!("zeta exponent must be positive, got {alpha}"));
                    }
                    let raw: Vec<(u64, f64)> = (1..=*cap).map(|k| (k, (k as f64).powf(-alpha))).collect();
                    let total: f64 = raw.iter().map(|c| c.1).sum();
                    Law::Finite(FiniteLaw::new(raw.into_iter().map(|(k, w)| (k, w / total)).collect()))
                }
                None => {
                    if !alpha.is_finite() || *alpha <= 2.0 {
                        return Err(Error::AssumptionViolated(format!(
                            "uncapped zeta with exponent {alpha} has infinite mean (finite mean requires alpha > 2)"
                        )));
                    }
                    Law::Zeta(ZetaLaw::new(*alpha))
                }
            },
            DistSpec::Empirical { pmf } => {
                if pmf.is_empty() {
                    return invalid("empirical pmf is empty".into());
                }
                for &(k, p) in pmf {
                    if k == 0 {
                        return invalid("support atom 0 is not a positive integer".into());
                    }
                    if !p.is_finite() || p < 0.0 {
                        return invalid(format!("probability {p} at atom {k} is not a nonnegative number"));
                    }
                }
                let total: f64 = pmf.iter().map(|c| c.1).sum();
                if (total - 1.0).abs() > EMPIRICAL_RENORM_TOL {
                    return invalid(format!("empirical pmf sums to {total}, not 1"));
                }
                Law::Finite(FiniteLaw::new(pmf.iter().map(|&(k, p)| (k, p / total)).collect()))
            }
        };

        let (mean, p1, min_support) = match &law {
            Law::Finite(fl) => {
                let total: f64 = fl.probs.iter().sum();
                if (total - 1.0).abs() > PMF_SUM_TOL {
                    return invalid(format!("pmf sums to {total}"));
                }
                let mean = fl.atoms.iter().zip(&fl.probs).map(|(&k, &p)| k as f64 * p).sum();
                (mean, fl.pmf(1), fl.atoms[0])
            }
            Law::Geometric { s, .. } => (1.0 / s, *s, 1),
            Law::Zeta(z) => (hurwitz_zeta(z.alpha - 1.0, 1.0) / z.norm, 1.0 / z.norm, 1),
        };
        if !mean.is_finite() {
            return Err(Error::AssumptionViolated("mark law has infinite mean".into()));
        }
        Ok(MarkDistribution { spec, law, mean, p1, min_support })
    }

    /// Shorthand for `MarkDistribution::new(spec.parse()?)`.
    pub fn parse(s: &str) -> Result<Self> {
        Self::new(s.parse()?)
    }

    pub fn constant(value: u64) -> Result<Self> {
        Self::new(DistSpec::Constant { value })
    }

    pub fn geometric(s: f64) -> Result<Self> {
        Self::new(DistSpec::Geometric { s })
    }

    pub fn two_point(p1: f64, v: u64) -> Result<Self> {
        Self::new(DistSpec::TwoPoint { p1, v })
    }

    pub fn empirical(pmf: &[(u64, f64)]) -> Result<Self> {
        Self::new(DistSpec::Empirical { pmf: pmf.to_vec() })
    }

    pub fn spec(&self) -> &DistSpec {
        &self.spec
    }

    /// Expected mark `E[a]`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Mass at 1, `P[a = 1]`.
    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// Whether `P[a = 1] > 0`, the assumption behind the single-tree results.
    pub fn has_unit_mass(&self) -> bool {
        self.p1 > 0.0
    }

    /// Smallest atom of the support.
    pub fn min_support(&self) -> u64 {
        self.min_support
    }

    /// Geometric parameter `s` if this is a geometric law.
    pub fn geometric_parameter(&self) -> Option<f64> {
        match self.law {
            Law::Geometric { s, .. } => Some(s),
            _ => None,
        }
    }

    /// Largest atom, if the support is finite.
    pub fn max_support(&self) -> Option<u64> {
        match &self.law {
            Law::Finite(fl) => fl.atoms.last().copied(),
            Law::Geometric { s, .. } if *s == 1.0 => Some(1),
            _ => None,
        }
    }

    /// Finite support atoms and their probabilities, if the support is finite.
    pub fn finite_support(&self) -> Option<Vec<(u64, f64)>> {
        match &self.law {
            Law::Finite(fl) => Some(fl.atoms.iter().copied().zip(fl.probs.iter().copied()).collect()),
            _ => None,
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match &self.law {
            Law::Finite(fl) => fl.pmf(k),
            Law::Geometric { s, r } => {
                if k == 0 {
                    0.0
                } else if *r == 0.0 {
                    if k == 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    s * r.powf((k - 1) as f64)
                }
            }
            Law::Zeta(z) => z.pmf(k),
        }
    }

    /// `P[a > j]`.
    pub fn survival(&self, j: u64) -> f64 {
        match &self.law {
            Law::Finite(fl) => fl.survival(j),
            Law::Geometric { r, .. } => r.powf(j as f64),
            Law::Zeta(z) => {
                if j == 0 {
                    1.0
                } else {
                    z.survival(j)
                }
            }
        }
    }

    /// `P[a <= j]`.
    pub fn cdf(&self, j: u64) -> f64 {
        match &self.law {
            Law::Finite(fl) => {
                let i = fl.atoms.partition_point(|&k| k <= j);
                if i == 0 {
                    0.0
                } else {
                    fl.cdf[i - 1].min(1.0)
                }
            }
            _ => 1.0 - self.survival(j),
        }
    }

    /// `sum_{j > b} P[a > j]`.
    ///
    /// This is the expected number of individuals born before `-b` that are
    /// still alive at 0, hence a union bound on the probability that any
    /// lifespan started more than `b` steps earlier crosses a given time.
    pub fn tail_mass(&self, b: u64) -> f64 {
        match &self.law {
            Law::Finite(fl) => fl.tail_mass(b),
            Law::Geometric { s, r } => {
                if *r == 0.0 {
                    0.0
                } else {
                    r.powf(b as f64 + 1.0) / s
                }
            }
            Law::Zeta(z) => z.tail_mass(b),
        }
    }

    /// Inverse cdf at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> u64 {
        match &self.law {
            Law::Finite(fl) => fl.quantile(u),
            Law::Geometric { r, .. } => {
                if *r == 0.0 {
                    return 1;
                }
                // smallest k with 1 - r^k > u
                let k = ((1.0 - u).ln() / r.ln()).floor();
                let k = if k.is_finite() && k >= 0.0 { k as u64 } else { u64::MAX - 1 };
                k.saturating_add(1)
            }
            Law::Zeta(z) => z.quantile(u),
        }
    }
}

/// Seed plus stream tag; marks are a pure function of `(seed, stream, index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    /// Seed on the default mark stream.
    pub fn new(seed: u64) -> Self {
        Self::with_purpose(seed, "marks")
    }

    /// Seed on a stream identified by a purpose tag.
    pub fn with_purpose(seed: u64, purpose: &str) -> Self {
        SeedSpec { seed, stream: fnv1a64(purpose.as_bytes()) }
    }

    /// Independent seed for replication `rep` of the same purpose.
    pub fn replication(&self, rep: u64) -> Self {
        SeedSpec { seed: self.seed, stream: self.stream ^ rep.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// ChaCha word offset of the 64-bit draw assigned to `index`.
fn word_pos(index: i64) -> u128 {
    ((i128::from(index) - i128::from(i64::MIN)) as u128) * 2
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential reader of the per-index uniform stream starting at `index`.
struct IndexedUniforms {
    rng: ChaCha8Rng,
}

impl IndexedUniforms {
    fn at(seed: SeedSpec, index: i64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
        rng.set_stream(seed.stream);
        rng.set_word_pos(word_pos(index));
        IndexedUniforms { rng }
    }

    fn next(&mut self) -> f64 {
        unit_interval(self.rng.next_u64())
    }
}

/// Mark at `index`; deterministic in `(dist, seed, index)`.
pub fn sample_mark(dist: &MarkDistribution, seed: SeedSpec, index: i64) -> u64 {
    dist.quantile(IndexedUniforms::at(seed, index).next())
}

/// Marks for indices `lo..=hi`, identical to calling [`sample_mark`] per index.
pub fn sample_marks(dist: &MarkDistribution, seed: SeedSpec, lo: i64, hi: i64) -> Vec<u64> {
    if hi < lo {
        return Vec::new();
    }
    let mut u = IndexedUniforms::at(seed, lo);
    (lo..=hi).map(|_| dist.quantile(u.next())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn builtins() -> Vec<MarkDistribution> {
        [
            "constant:1",
            "constant:3",
            "twopoint:0.5,2",
            "twopoint:0.3,5",
            "geometric:0.5",
            "geometric:0.2",
            "geometric:1",
            "zeta:2.5,1000",
            "zeta:2.5",
            "zeta:3.5",
            "empirical:2=0.5,3=0.5",
            "empirical:1=0.2,4=0.3,7=0.5",
        ]
        .iter()
        .map(|s| MarkDistribution::parse(s).unwrap())
        .collect()
    }

    #[test]
    fn constructor_examples() {
        let c = MarkDistribution::constant(1).unwrap();
        assert_eq!((c.mean(), c.p1(), c.min_support()), (1.0, 1.0, 1));
        let g = MarkDistribution::geometric(0.5).unwrap();
        assert_eq!((g.mean(), g.p1(), g.min_support()), (2.0, 0.5, 1));
        let t = MarkDistribution::empirical(&[(1, 0.5), (2, 0.5)]).unwrap();
        assert_eq!((t.mean(), t.p1(), t.min_support()), (1.5, 0.5, 1));
    }

    #[test]
    fn rejects_violations() {
        assert!(matches!(
            MarkDistribution::parse("zeta:2.0"),
            Err(Error::AssumptionViolated(_))
        ));
        assert!(matches!(
            MarkDistribution::parse("zeta:1.5"),
            Err(Error::AssumptionViolated(_))
        ));
        assert!(MarkDistribution::parse("empirical:0=1").is_err());
        assert!(MarkDistribution::parse("empirical:1=-0.5,2=1.5").is_err());
        assert!(MarkDistribution::parse("empirical:1=0.5,2=0.4").is_err());
        assert!(MarkDistribution::parse("constant:0").is_err());
        assert!(MarkDistribution::parse("geometric:0").is_err());
        assert!(MarkDistribution::parse("geometric:1.5").is_err());
        assert!(MarkDistribution::parse("twopoint:0.5,1").is_err());
        assert!(MarkDistribution::parse("bogus:1").is_err());
    }

    #[test]
    fn empirical_renormalized_within_tolerance() {
        let d = MarkDistribution::parse("empirical:1=0.5,2=0.5000000001").unwrap();
        assert_relative_eq!(d.pmf(1) + d.pmf(2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn capped_zeta_any_exponent_has_finite_mean() {
        let d = MarkDistribution::parse("zeta:1.5,100").unwrap();
        assert!(d.mean().is_finite());
        assert_eq!(d.max_support(), Some(100));
    }

    #[test]
    fn spec_round_trips_through_text_and_json() {
        for d in builtins() {
            let text = d.spec().to_string();
            assert_eq!(&text.parse::<DistSpec>().unwrap(), d.spec());
            let json = serde_json::to_string(d.spec()).unwrap();
            assert_eq!(&serde_json::from_str::<DistSpec>(&json).unwrap(), d.spec());
        }
        let g: DistSpec = serde_json::from_str(r#"{"kind":"geometric","s":0.5}"#).unwrap();
        assert_eq!(g, DistSpec::Geometric { s: 0.5 });
    }

    #[test]
    fn mean_matches_direct_summation() {
        for d in builtins() {
            let direct: f64 = match d.max_support() {
                Some(m) => (1..=m).map(|k| k as f64 * d.pmf(k)).sum(),
                None => {
                    // summation to a large cutoff plus the exact remainder tail
                    let cut = 200_000u64;
                    let head: f64 = (1..=cut).map(|k| k as f64 * d.pmf(k)).sum();
                    head + (cut + 1) as f64 * d.survival(cut) + d.tail_mass(cut)
                }
            };
            assert_relative_eq!(direct, d.mean(), max_relative = 1e-10);
        }
    }

    #[test]
    fn tail_mass_examples() {
        assert_eq!(MarkDistribution::constant(1).unwrap().tail_mass(0), 0.0);
        // sum_{j>3} 2^-j = 2^-3
        assert_relative_eq!(MarkDistribution::geometric(0.5).unwrap().tail_mass(3), 0.125, epsilon = 1e-15);
        assert_eq!(MarkDistribution::two_point(0.5, 2).unwrap().tail_mass(1), 0.0);
    }

    #[test]
    fn tail_mass_matches_survival_sums() {
        for d in builtins() {
            for b in [0u64, 1, 2, 5, 17, 40] {
                let direct: f64 = match d.max_support() {
                    Some(m) => (b + 1..=m).map(|j| d.survival(j)).sum(),
                    None => {
                        let cut = b + 20_000;
                        let head: f64 = (b + 1..=cut).map(|j| d.survival(j)).sum();
                        head + d.tail_mass(cut)
                    }
                };
                assert_relative_eq!(direct, d.tail_mass(b), max_relative = 1e-9, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn tail_mass_at_zero_is_mean_minus_one_and_decreasing() {
        for d in builtins() {
            assert_relative_eq!(d.tail_mass(0), d.mean() - 1.0, max_relative = 1e-10, epsilon = 1e-14);
            let mut prev = d.tail_mass(0);
            for b in 1..200 {
                let t = d.tail_mass(b);
                assert!(t <= prev + 1e-15, "{:?} not nonincreasing at {b}", d.spec());
                prev = t;
            }
            assert!(d.tail_mass(1 << 40) < 1e-5);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_window_consistent() {
        let g = MarkDistribution::geometric(0.5).unwrap();
        let seed = SeedSpec::new(11);
        assert_eq!(sample_mark(&g, seed, 0), sample_mark(&g, seed, 0));
        let wide = sample_marks(&g, seed, -50, 50);
        let narrow = sample_marks(&g, seed, 0, 50);
        assert_eq!(&wide[50..], &narrow[..]);
        for (i, n) in (-50..=50).enumerate() {
            assert_eq!(wide[i], sample_mark(&g, seed, n));
        }
        let c = MarkDistribution::constant(2).unwrap();
        assert!(sample_marks(&c, seed, -10, 10).iter().all(|&a| a == 2));
        assert_ne!(sample_marks(&g, seed, 0, 64), sample_marks(&g, SeedSpec::new(12), 0, 64));
        assert_ne!(
            sample_marks(&g, seed, 0, 64),
            sample_marks(&g, SeedSpec::with_purpose(11, "other"), 0, 64)
        );
    }

    #[test]
    fn geometric_sample_mean_within_three_standard_errors() {
        let g = MarkDistribution::geometric(0.5).unwrap();
        let xs = sample_marks(&g, SeedSpec::new(2024), 0, 999_999);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<u64>() as f64 / n;
        // Var = r / s^2 = 2
        let se = (2.0f64 / n).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn chi_square_goodness_of_fit_for_builtins() {
        let n = 100_000usize;
        for (i, d) in builtins().into_iter().enumerate() {
            if d.max_support() == Some(d.min_support()) {
                continue;
            }
            let xs = sample_marks(&d, SeedSpec::new(77 + i as u64), 0, n as i64 - 1);
            // cells 1..K-1 plus a tail cell, K chosen so every expected count >= 5
            let mut edges = Vec::new();
            let mut k = d.min_support();
            let mut acc = 0.0;
            loop {
                let p = d.pmf(k);
                acc += p;
                if acc * n as f64 >= 5.0 && d.survival(k) * n as f64 >= 5.0 {
                    edges.push((k, acc));
                    acc = 0.0;
                }
                if d.survival(k) * (n as f64) < 5.0 {
                    break;
                }
                k += 1;
            }
            let last = edges.last().unwrap().0;
            let mut expected: Vec<f64> = edges.iter().map(|e| e.1 * n as f64).collect();
            expected.push(d.survival(last) * n as f64);
            let mut observed = vec![0.0; expected.len()];
            for &x in &xs {
                let cell = edges.partition_point(|e| e.0 < x);
                observed[cell] += 1.0;
            }
            let stat: f64 = observed
                .iter()
                .zip(&expected)
                .map(|(o, e)| (o - e) * (o - e) / e)
                .sum();
            let df = (expected.len() - 1) as f64;
            let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
            assert!(p > 0.001, "{:?}: chi2 {stat} df {df} p {p}", d.spec());
        }
    }
}
