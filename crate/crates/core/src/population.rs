//! Population process on finite windows.
//!
//! Individual `n` lives on `[n, n + a_n)`, so the number alive at `n` is one
//! (the arrival at `n`) plus the number of earlier individuals whose lifespan
//! crosses `n`. A window started empty at `L` undercounts the stationary
//! process only through lifespans that began before `L`; after a burn-in of
//! `B` steps the probability of any such crossing is at most
//! `sum_{j > B} P[a > j]`, which is carried in the trace as `epsilon`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marks::{sample_marks, MarkDistribution, SeedSpec};

/// Default cap on window length (number of marks held in memory).
pub const DEFAULT_WINDOW_CAP: u64 = 1 << 28;

/// Where the marks of a window came from.
#[derive(Clone, Debug)]
pub enum Provenance {
    Sampled { dist: MarkDistribution, seed: SeedSpec },
    Explicit,
}

/// Realized marks `a_lo..=a_hi`.
#[derive(Clone, Debug)]
pub struct MarkWindow {
    lo: i64,
    marks: Vec<u64>,
    provenance: Provenance,
}

impl MarkWindow {
    /// Samples the window `[lo, hi]` under the default memory cap.
    pub fn simulate(dist: &MarkDistribution, seed: SeedSpec, lo: i64, hi: i64) -> Result<Self> {
        Self::simulate_with_cap(dist, seed, lo, hi, DEFAULT_WINDOW_CAP)
    }

    pub fn simulate_with_cap(
        dist: &MarkDistribution,
        seed: SeedSpec,
        lo: i64,
        hi: i64,
        cap: u64,
    ) -> Result<Self> {
        if hi < lo {
            return Err(Error::EmptyWindow { lo, hi });
        }
        let len = (i128::from(hi) - i128::from(lo) + 1) as u64;
        if len > cap {
            return Err(Error::WindowTooLarge { len, cap });
        }
        Ok(MarkWindow {
            lo,
            marks: sample_marks(dist, seed, lo, hi),
            provenance: Provenance::Sampled { dist: dist.clone(), seed },
        })
    }

    /// Window with explicitly given marks starting at index `lo`.
    pub fn from_marks(lo: i64, marks: Vec<u64>) -> Result<Self> {
        if marks.is_empty() {
            return Err(Error::EmptyWindow { lo, hi: lo - 1 });
        }
        if let Some(i) = marks.iter().position(|&a| a == 0) {
            return Err(Error::InvalidParameter(format!("mark at {} is 0; marks must be positive", lo + i as i64)));
        }
        Ok(MarkWindow { lo, marks, provenance: Provenance::Explicit })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.marks.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn marks(&self) -> &[u64] {
        &self.marks
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi()
    }

    pub fn mark(&self, n: i64) -> Option<u64> {
        if self.contains(n) {
            Some(self.marks[(n - self.lo) as usize])
        } else {
            None
        }
    }

    /// `f(n) = n + a_n` for an in-window `n`.
    pub fn parent(&self, n: i64) -> Option<i64> {
        self.mark(n).map(|a| n.saturating_add(a.min(i64::MAX as u64) as i64))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dist(&self) -> Option<&MarkDistribution> {
        match &self.provenance {
            Provenance::Sampled { dist, .. } => Some(dist),
            Provenance::Explicit => None,
        }
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        match &self.provenance {
            Provenance::Sampled { seed, .. } => Some(*seed),
            Provenance::Explicit => None,
        }
    }

    /// Same marks translated by `k` (index `n` becomes `n + k`).
    pub fn shifted(&self, k: i64) -> MarkWindow {
        MarkWindow { lo: self.lo + k, marks: self.marks.clone(), provenance: Provenance::Explicit }
    }

    /// Re-samples a window that starts `extra` indices further left; the
    /// overlapping marks are unchanged.
    pub fn extend_left(&self, extra: u64) -> Result<MarkWindow> {
        match &self.provenance {
            Provenance::Sampled { dist, seed } => {
                MarkWindow::simulate(dist, *seed, self.lo - extra as i64, self.hi())
            }
            Provenance::Explicit => Err(Error::InvalidParameter(
                "only sampled windows can be extended".into(),
            )),
        }
    }
}

/// Samples `[lo, hi]`; see [`MarkWindow::simulate`].
pub fn simulate_marks(dist: &MarkDistribution, seed: SeedSpec, lo: i64, hi: i64) -> Result<MarkWindow> {
    MarkWindow::simulate(dist, seed, lo, hi)
}

/// Smallest `B` with `sum_{j > B} P[a > j] <= epsilon`.
pub fn burn_in(dist: &MarkDistribution, epsilon: f64) -> u64 {
    if dist.tail_mass(0) <= epsilon {
        return 0;
    }
    let mut lo = 0u64;
    let mut hi = 1u64;
    while dist.tail_mass(hi) > epsilon {
        lo = hi;
        if hi >= 1 << 62 {
            return u64::MAX;
        }
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if dist.tail_mass(mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Empty-start population values over a window, with their burn-in budget.
#[derive(Clone, Debug)]
pub struct PopulationTrace {
    window: Arc<MarkWindow>,
    nhat: Vec<u32>,
    burn_in: u64,
    epsilon: f64,
}

/// Computes `nhat[n] = 1 + #{L <= m < n : m + a_m > n}` in linear time.
///
/// `epsilon` is `tail_mass(dist, burn_in)` for sampled windows and 0 for
/// explicit ones (no lifespans are assumed to start before the window).
pub fn population_process(window: impl Into<Arc<MarkWindow>>, burn_in: u64) -> PopulationTrace {
    let window = window.into();
    let len = window.len();
    let mut diff = vec![0i64; len + 1];
    for (i, &a) in window.marks().iter().enumerate() {
        if a < 2 {
            continue;
        }
        // alive strictly after birth and strictly before death: [i+1, i+a-1]
        let start = i + 1;
        let end = (i as u64).saturating_add(a - 1).min(len as u64 - 1) as usize;
        if start <= end {
            diff[start] += 1;
            diff[end + 1] -= 1;
        }
    }
    let mut acc = 0i64;
    let nhat = diff[..len]
        .iter()
        .map(|d| {
            acc += d;
            (acc + 1) as u32
        })
        .collect();
    let epsilon = window.dist().map_or(0.0, |d| d.tail_mass(burn_in));
    PopulationTrace { window, nhat, burn_in, epsilon }
}

impl PopulationTrace {
    pub fn window(&self) -> &MarkWindow {
        &self.window
    }

    pub fn window_arc(&self) -> Arc<MarkWindow> {
        Arc::clone(&self.window)
    }

    pub fn nhat(&self) -> &[u32] {
        &self.nhat
    }

    pub fn at(&self, n: i64) -> Option<u32> {
        if self.window.contains(n) {
            Some(self.nhat[(n - self.window.lo()) as usize])
        } else {
            None
        }
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    /// Probability budget for any pre-window lifespan reaching the core.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// First index at which values are stationary up to `epsilon`.
    pub fn core_start(&self) -> i64 {
        self.window.lo().saturating_add(self.burn_in.min(i64::MAX as u64) as i64)
    }

    /// `[L + B, R]`, or `None` if the burn-in swallows the window.
    pub fn core(&self) -> Option<(i64, i64)> {
        let lo = self.core_start();
        let hi = self.window.hi();
        (lo <= hi).then_some((lo, hi))
    }

    /// Values on the core range.
    pub fn core_values(&self) -> &[u32] {
        match self.core() {
            Some((lo, hi)) => {
                let base = self.window.lo();
                &self.nhat[(lo - base) as usize..=(hi - base) as usize]
            }
            None => &[],
        }
    }

    /// CSV with columns `n,a_n,nhat_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Export(e.to_string());
        w.write_record(["n", "a_n", "nhat_n"]).map_err(io)?;
        for (i, (&a, &v)) in self.window.marks().iter().zip(&self.nhat).enumerate() {
            let n = self.window.lo() + i as i64;
            w.write_record([n.to_string(), a.to_string(), v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Export(e.to_string()))
    }
}

/// What the atoms of a [`PointSample`] represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    /// Times with exactly one individual alive.
    OriginalAncestor,
    /// Times at which the population equals the smallest atom `m` of the
    /// mark law (used when `P[a = 1] = 0`).
    MinimalPopulation(u64),
    Successful,
    Ephemeral,
}

/// Finite realization of a stationary point process on `core`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    atoms: Vec<i64>,
    core: (i64, i64),
    label: PointLabel,
    epsilon: f64,
}

impl PointSample {
    /// Builds a sample; atoms must be strictly increasing and inside `core`.
    pub fn new(atoms: Vec<i64>, core: (i64, i64), label: PointLabel, epsilon: f64) -> Result<Self> {
        if core.0 > core.1 {
            return Err(Error::EmptyCore);
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("atoms must be strictly increasing".into()));
        }
        if atoms.first().is_some_and(|&a| a < core.0) || atoms.last().is_some_and(|&a| a > core.1) {
            return Err(Error::InvalidParameter("atoms must lie in the core range".into()));
        }
        Ok(PointSample { atoms, core, label, epsilon })
    }

    pub fn atoms(&self) -> &[i64] {
        &self.atoms
    }

    pub fn core(&self) -> (i64, i64) {
        self.core
    }

    pub fn core_len(&self) -> u64 {
        (self.core.1 - self.core.0 + 1) as u64
    }

    pub fn label(&self) -> PointLabel {
        self.label
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, n: i64) -> bool {
        self.atoms.binary_search(&n).is_ok()
    }

    pub fn first(&self) -> Option<i64> {
        self.atoms.first().copied()
    }
}

fn level_set(trace: &PopulationTrace, level: u32, label: PointLabel) -> Result<PointSample> {
    let (lo, hi) = trace.core().ok_or(Error::EmptyCore)?;
    let base = trace.window().lo();
    let atoms = (lo..=hi)
        .filter(|&n| trace.nhat[(n - base) as usize] == level)
        .collect();
    PointSample::new(atoms, (lo, hi), label, trace.epsilon())
}

/// Original ancestors `{n in [L+B, R] : nhat[n] = 1}`.
///
/// An empty sample is returned as such; under `P[a = 1] = 0` it is always
/// empty and [`regeneration_epochs`] should be used instead.
pub fn original_ancestors(trace: &PopulationTrace) -> Result<PointSample> {
    level_set(trace, 1, PointLabel::OriginalAncestor)
}

/// Regeneration epochs of the population process: original ancestors when
/// `P[a = 1] > 0`, otherwise the times at which the population equals the
/// smallest support atom.
pub fn regeneration_epochs(trace: &PopulationTrace) -> Result<PointSample> {
    let floor = match trace.window().dist() {
        Some(d) => d.min_support(),
        None => trace.window().marks().iter().copied().min().unwrap_or(1),
    };
    if floor <= 1 {
        original_ancestors(trace)
    } else {
        let level = u32::try_from(floor).map_err(|_| Error::InvalidParameter("minimal atom too large".into()))?;
        level_set(trace, level, PointLabel::MinimalPopulation(floor))
    }
}

/// One regeneration cycle `[start, start + length)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub start: i64,
    pub length: u64,
    pub max_population: u32,
    pub population_sum: u64,
}

impl Cycle {
    pub fn end(&self) -> i64 {
        self.start + self.length as i64
    }
}

/// Cycle decomposition between consecutive regeneration epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleSet {
    cycles: Vec<Cycle>,
    epsilon: f64,
}

/// Splits the trace at consecutive atoms: cycle `j` spans `[k_j, k_{j+1})`.
pub fn regeneration_cycles(trace: &PopulationTrace, epochs: &PointSample) -> Result<CycleSet> {
    let atoms = epochs.atoms();
    if atoms.len() < 2 {
        return Err(Error::InsufficientRegenerations { found: atoms.len(), needed: 2 });
    }
    let base = trace.window().lo();
    let cycles = atoms
        .windows(2)
        .map(|w| {
            let slice = &trace.nhat[(w[0] - base) as usize..(w[1] - base) as usize];
            Cycle {
                start: w[0],
                length: (w[1] - w[0]) as u64,
                max_population: slice.iter().copied().max().unwrap_or(0),
                population_sum: slice.iter().map(|&v| u64::from(v)).sum(),
            }
        })
        .collect();
    Ok(CycleSet { cycles, epsilon: epochs.epsilon() })
}

impl CycleSet {
    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lengths(&self) -> Vec<u64> {
        self.cycles.iter().map(|c| c.length).collect()
    }

    /// `[first epoch, last epoch)`, the range tiled by the cycles.
    pub fn span(&self) -> (i64, i64) {
        (self.cycles[0].start, self.cycles.last().unwrap().end())
    }

    /// Per-cycle sums of `g(n)` over `n` in each cycle.
    pub fn sums<F: FnMut(i64) -> f64>(&self, mut g: F) -> Vec<f64> {
        self.cycles.iter().map(|c| (c.start..c.end()).map(&mut g).sum()).collect()
    }

    /// Arbitrary per-cycle functional of the cycle and its marks.
    pub fn map<T, F: FnMut(&Cycle, &[u64]) -> T>(&self, window: &MarkWindow, mut g: F) -> Vec<T> {
        self.cycles
            .iter()
            .map(|c| {
                let a = (c.start - window.lo()) as usize;
                g(c, &window.marks()[a..a + c.length as usize])
            })
            .collect()
    }

    /// CSV with columns `start,length`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Export(e.to_string());
        w.write_record(["start", "length"]).map_err(io)?;
        for c in &self.cycles {
            w.write_record([c.start.to_string(), c.length.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Export(e.to_string()))
    }
}
