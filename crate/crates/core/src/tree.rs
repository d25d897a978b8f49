//! The family forest generated by `f(n) = n + a_n` on a finite window.
//!
//! `f(n)` is the parent of `n`, so children sit to the left of their parent
//! and every node has out-degree one. Successful nodes (infinitely many
//! descendants) form the unique bi-infinite path; inside a window they are
//! exactly the orbit of the first original ancestor `k*`, because every orbit
//! started at or before `k*` passes through it. Every other labeled node is
//! ephemeral. Nodes left of `k*` keep the label `Unknown`.

use std::io::Write;
use std::sync::Arc;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{MarkWindow, PointLabel, PointSample, PopulationTrace};

/// Largest window exported as DOT.
pub const DOT_NODE_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLabel {
    Successful,
    Ephemeral,
    Unknown,
}

/// Windowed family forest with successful / ephemeral labels.
#[derive(Clone, Debug)]
pub struct FamilyForest {
    window: Arc<MarkWindow>,
    /// `L + B`: children lists are complete from here on (up to `epsilon`).
    guard: i64,
    epsilon: f64,
    child_start: Vec<usize>,
    child_list: Vec<i64>,
    labels: Vec<NodeLabel>,
    anchor: Option<i64>,
    successful: Vec<i64>,
    /// Per node: (index in `successful`, steps) of the first successful
    /// ancestor, when it lies in the window.
    roots: Vec<Option<(u32, u32)>>,
}

/// Builds the forest of `trace`'s window and labels it from the first
/// original ancestor in `ancestors`.
///
/// Without an original ancestor (empty sample, or a sample of another kind)
/// the forest is still built but every label is `Unknown`.
pub fn build_forest(trace: &PopulationTrace, ancestors: &PointSample) -> FamilyForest {
    let window = trace.window_arc();
    let lo = window.lo();
    let len = window.len();

    let mut counts = vec![0usize; len + 1];
    for n in lo..=window.hi() {
        if let Some(p) = window.parent(n).filter(|&p| window.contains(p)) {
            counts[(p - lo) as usize + 1] += 1;
        }
    }
    for i in 0..len {
        counts[i + 1] += counts[i];
    }
    let child_start = counts;
    let mut fill = child_start.clone();
    let mut child_list = vec![0i64; child_start[len]];
    for n in lo..=window.hi() {
        if let Some(p) = window.parent(n).filter(|&p| window.contains(p)) {
            let slot = &mut fill[(p - lo) as usize];
            child_list[*slot] = n;
            *slot += 1;
        }
    }

    let mut labels = vec![NodeLabel::Unknown; len];
    let mut successful = Vec::new();
    let anchor = match ancestors.label() {
        PointLabel::OriginalAncestor => ancestors.first(),
        _ => None,
    };
    if let Some(k) = anchor {
        for l in &mut labels[(k - lo) as usize..] {
            *l = NodeLabel::Ephemeral;
        }
        let mut n = k;
        while window.contains(n) {
            labels[(n - lo) as usize] = NodeLabel::Successful;
            successful.push(n);
            n = window.parent(n).unwrap();
        }
    }

    let mut roots = vec![None; len];
    if anchor.is_some() {
        let mut next_succ = successful.len();
        for i in (0..len).rev() {
            match labels[i] {
                NodeLabel::Successful => {
                    next_succ -= 1;
                    roots[i] = Some((next_succ as u32, 0));
                }
                NodeLabel::Ephemeral => {
                    let p = window.parent(lo + i as i64).unwrap();
                    if window.contains(p) {
                        roots[i] = roots[(p - lo) as usize].map(|(s, d)| (s, d + 1));
                    }
                }
                NodeLabel::Unknown => break,
            }
        }
    }

    FamilyForest {
        guard: trace.core_start(),
        epsilon: trace.epsilon(),
        window,
        child_start,
        child_list,
        labels,
        anchor,
        successful,
        roots,
    }
}

/// Cousins of `node`: members of `L_j(node) = {m : f^j(m) = f^j(node)}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Foil {
    pub node: i64,
    pub degree: usize,
    /// Common ancestor `f^j(node)`.
    pub apex: i64,
    /// All of `L_j(node)`, sorted; always contains `node`.
    pub members: Vec<i64>,
    /// Cousins of exact degree `j`: members whose `(j-1)`-th ancestor differs
    /// from that of `node`. For `j = 0` this is `{node}`.
    pub exact: Vec<i64>,
}

impl Foil {
    /// `|L_j(n)|`.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Number of cousins of exact degree `j`.
    pub fn exact_count(&self) -> usize {
        self.exact.len()
    }
}

/// Direct ephemeral tree of a successful node: the root plus every ephemeral
/// descendant whose first successful ancestor is the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EphemeralTree {
    pub root: i64,
    /// Sorted members, root included.
    pub members: Vec<i64>,
    /// `depth_counts[j - 1]` is the number of members at depth `j >= 1`.
    pub depth_counts: Vec<u64>,
}

impl EphemeralTree {
    /// Cardinality including the root.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Members at depth `j` (`j = 0` is the root).
    pub fn depth_count(&self, j: usize) -> u64 {
        match j {
            0 => 1,
            _ => self.depth_counts.get(j - 1).copied().unwrap_or(0),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth_counts.len()
    }
}

impl FamilyForest {
    pub fn window(&self) -> &MarkWindow {
        &self.window
    }

    /// Start of the range where children lists are complete.
    pub fn guard(&self) -> i64 {
        self.guard
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// First original ancestor `k*`, if any.
    pub fn anchor(&self) -> Option<i64> {
        self.anchor
    }

    pub fn is_classified(&self) -> bool {
        self.anchor.is_some()
    }

    /// `[k*, R]`, the range with exact labels.
    pub fn labeled_range(&self) -> Option<(i64, i64)> {
        self.anchor.map(|k| (k, self.window.hi()))
    }

    fn idx(&self, n: i64) -> usize {
        (n - self.window.lo()) as usize
    }

    pub fn label(&self, n: i64) -> NodeLabel {
        if self.window.contains(n) {
            self.labels[self.idx(n)]
        } else {
            NodeLabel::Unknown
        }
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn parent(&self, n: i64) -> Option<i64> {
        self.window.parent(n)
    }

    /// In-window children `{m : f(m) = n}`, increasing.
    pub fn children(&self, n: i64) -> &[i64] {
        if !self.window.contains(n) {
            return &[];
        }
        let i = self.idx(n);
        &self.child_list[self.child_start[i]..self.child_start[i + 1]]
    }

    /// Successful nodes of the window in increasing order (the orbit of `k*`).
    pub fn successful(&self) -> &[i64] {
        &self.successful
    }

    /// Position of `s` in [`Self::successful`].
    pub fn successful_index(&self, s: i64) -> Option<usize> {
        self.successful.binary_search(&s).ok()
    }

    /// `f^j(n)`, failing if the orbit leaves the window before step `j`.
    pub fn ascend(&self, n: i64, j: usize) -> Result<i64> {
        let mut x = n;
        for step in 0..j {
            if !self.window.contains(x) {
                return Err(Error::RightGuard { node: n, hi: self.window.hi(), steps: step });
            }
            x = self.window.parent(x).unwrap();
        }
        if !self.window.contains(x) {
            return Err(Error::RightGuard { node: n, hi: self.window.hi(), steps: j });
        }
        Ok(x)
    }

    fn check_left(&self, n: i64) -> Result<()> {
        if n < self.guard || !self.window.contains(n) {
            return Err(Error::LeftGuard { node: n, guard: self.guard });
        }
        Ok(())
    }

    /// `D_i(n) = {m : f^i(m) = n}`, sorted.
    pub fn descendants(&self, n: i64, i: usize) -> Result<Vec<i64>> {
        self.check_left(n)?;
        let mut level = vec![n];
        for _ in 0..i {
            let mut next = Vec::new();
            for &x in &level {
                next.extend_from_slice(self.children(x));
            }
            level = next;
            if level.is_empty() {
                break;
            }
        }
        level.sort_unstable();
        Ok(level)
    }

    /// `d_k(n)` for all `k <= max_degree` and all nodes, as `table[k][n - L]`.
    ///
    /// Entries are exact for `n >= guard` (up to `epsilon`).
    pub fn descendant_count_table(&self, max_degree: usize) -> Vec<Vec<u64>> {
        let len = self.window.len();
        let mut table = vec![vec![1u64; len]];
        for k in 1..=max_degree {
            let prev = &table[k - 1];
            let row = (0..len)
                .map(|i| {
                    self.child_list[self.child_start[i]..self.child_start[i + 1]]
                        .iter()
                        .map(|&c| prev[self.idx(c)])
                        .sum()
                })
                .collect();
            table.push(row);
        }
        table
    }

    /// Foil of degree `j` of `n`, computed by ascending `j` steps and taking
    /// the `j`-fold preimage of the apex.
    pub fn foil(&self, n: i64, j: usize) -> Result<Foil> {
        let apex = self.ascend(n, j)?;
        self.check_left(apex)?;
        let members = self.descendants(apex, j)?;
        let exact = if j == 0 {
            vec![n]
        } else {
            let below = self.ascend(n, j - 1)?;
            let shared = self.descendants(below, j - 1)?;
            members.iter().copied().filter(|m| shared.binary_search(m).is_err()).collect()
        };
        Ok(Foil { node: n, degree: j, apex, members, exact })
    }

    /// Direct ephemeral tree rooted at a successful `s > k*`.
    pub fn direct_ephemeral_tree(&self, s: i64) -> Result<EphemeralTree> {
        if self.label(s) != NodeLabel::Successful {
            return Err(Error::NotSuccessful(s));
        }
        let anchor = self.anchor.expect("successful label implies an anchor");
        // nodes left of k* are unlabeled, so the anchor's own tree is incomplete
        let guard = self.guard.max(anchor + 1);
        if s < guard {
            return Err(Error::LeftGuard { node: s, guard });
        }
        let mut members = vec![s];
        let mut depth_counts = Vec::new();
        let mut level = vec![s];
        loop {
            let next: Vec<i64> = level
                .iter()
                .flat_map(|&x| self.children(x).iter().copied())
                .filter(|&c| self.label(c) == NodeLabel::Ephemeral)
                .collect();
            if next.is_empty() {
                break;
            }
            depth_counts.push(next.len() as u64);
            members.extend_from_slice(&next);
            level = next;
        }
        members.sort_unstable();
        Ok(EphemeralTree { root: s, members, depth_counts })
    }

    /// Every direct ephemeral tree rooted in the labeled range, in root order.
    pub fn ephemeral_trees(&self) -> Vec<EphemeralTree> {
        self.successful
            .iter()
            .filter_map(|&s| self.direct_ephemeral_tree(s).ok())
            .collect()
    }

    /// First successful ancestor of a labeled node and the number of steps
    /// to reach it (`(n, 0)` for successful `n`). `None` if `n` is unlabeled
    /// or its orbit leaves the window first.
    pub fn ephemeral_root(&self, n: i64) -> Option<(i64, usize)> {
        if !self.window.contains(n) {
            return None;
        }
        self.roots[self.idx(n)].map(|(i, d)| (self.successful[i as usize], d as usize))
    }

    /// The successful node `n^(l)` whose cousin set contains `m`.
    ///
    /// If `m` first meets the successful path at `k_i` after `d` steps, its
    /// orbit is aligned step for step with that of `k_{i-d}`.
    pub fn cousin_root(&self, m: i64) -> Option<i64> {
        self.cousin_root_index(m).map(|k| self.successful[k])
    }

    fn cousin_root_index(&self, m: i64) -> Option<usize> {
        if !self.window.contains(m) {
            return None;
        }
        let (i, d) = self.roots[self.idx(m)]?;
        (i as usize).checked_sub(d as usize)
    }

    /// Depth profiles of all direct ephemeral trees, indexed like
    /// [`Self::successful`]: `profiles[i][j]` is `d^e_j` of the `i`-th
    /// successful node (`[0] = 1` for the root). The anchor's tree reaches
    /// left of `k*` and is `None`.
    pub fn ephemeral_profiles(&self) -> Vec<Option<Vec<u64>>> {
        let mut profiles: Vec<Option<Vec<u64>>> = vec![Some(vec![1]); self.successful.len()];
        if let Some(first) = profiles.first_mut() {
            *first = None;
        }
        for &(i, d) in self.roots.iter().flatten() {
            if let Some(p) = profiles[i as usize].as_mut() {
                let d = d as usize;
                if d > 0 {
                    if p.len() <= d {
                        p.resize(d + 1, 0);
                    }
                    p[d] += 1;
                }
            }
        }
        profiles
    }

    /// For every successful node (indexed like [`Self::successful`]), the
    /// ephemeral nodes in the window whose cousin root it is.
    pub fn cousin_cells(&self) -> Vec<Vec<i64>> {
        let mut cells = vec![Vec::new(); self.successful.len()];
        let Some((lo, hi)) = self.labeled_range() else {
            return cells;
        };
        for m in lo..=hi {
            if self.label(m) == NodeLabel::Ephemeral {
                if let Some(k) = self.cousin_root_index(m) {
                    cells[k].push(m);
                }
            }
        }
        cells
    }

    /// Largest depth over all complete direct ephemeral trees in the window.
    pub fn max_ephemeral_depth(&self) -> usize {
        self.ephemeral_profiles()
            .iter()
            .flatten()
            .map(|p| p.len() - 1)
            .max()
            .unwrap_or(0)
    }

    /// `l(s) = 1 + sum_{j=1}^{horizon} d^e_j(k_j)` where `k_0 = s, k_1, ...`
    /// are the successive successful nodes: the cousin count of a successful
    /// node assembled from the direct ephemeral trees to its right.
    ///
    /// Terms with `j > horizon` are assumed zero; pass a horizon at least the
    /// largest tree depth in the window.
    pub fn total_cousins(&self, s: i64, horizon: usize) -> Result<u64> {
        let i = self.successful_index(s).ok_or(Error::NotSuccessful(s))?;
        if i + horizon >= self.successful.len() {
            return Err(Error::RightGuard { node: s, hi: self.window.hi(), steps: horizon });
        }
        let mut total = 1;
        for j in 1..=horizon {
            total += self.direct_ephemeral_tree(self.successful[i + j])?.depth_count(j);
        }
        Ok(total)
    }

    /// Labeled nodes as a point sample of the given kind on `[k*, R]`.
    pub fn atoms(&self, label: NodeLabel) -> Result<PointSample> {
        let (lo, hi) = self.labeled_range().ok_or_else(|| Error::NoEligibleAtoms("unclassified forest".into()))?;
        let atoms = (lo..=hi).filter(|&n| self.label(n) == label).collect();
        let pl = match label {
            NodeLabel::Successful => PointLabel::Successful,
            NodeLabel::Ephemeral => PointLabel::Ephemeral,
            NodeLabel::Unknown => return Err(Error::InvalidParameter("unknown is not a point process".into())),
        };
        PointSample::new(atoms, (lo, hi), pl, self.epsilon)
    }

    /// DOT rendering: edges `n -> f(n)`, node colour by label.
    pub fn write_dot<W: Write>(&self, mut out: W) -> Result<()> {
        if self.window.len() > DOT_NODE_CAP {
            return Err(Error::Export(format!(
                "DOT export is limited to {DOT_NODE_CAP} nodes, window has {}",
                self.window.len()
            )));
        }
        let io = |e: std::io::Error| Error::Export(e.to_string());
        writeln!(out, "digraph family {{").map_err(io)?;
        writeln!(out, "  rankdir=RL;").map_err(io)?;
        for n in self.window.lo()..=self.window.hi() {
            let color = match self.label(n) {
                NodeLabel::Successful => "red",
                NodeLabel::Ephemeral => "blue",
                NodeLabel::Unknown => "gray",
            };
            writeln!(out, "  \"{n}\" [color={color}];").map_err(io)?;
        }
        for n in self.window.lo()..=self.window.hi() {
            let p = self.window.parent(n).unwrap();
            if self.window.contains(p) {
                writeln!(out, "  \"{n}\" -> \"{p}\";").map_err(io)?;
            }
        }
        writeln!(out, "}}").map_err(io)
    }

    /// JSON array of `{n, parent, label}`.
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Node {
            n: i64,
            parent: i64,
            label: NodeLabel,
        }
        let nodes: Vec<Node> = (self.window.lo()..=self.window.hi())
            .map(|n| Node { n, parent: self.window.parent(n).unwrap(), label: self.label(n) })
            .collect();
        serde_json::to_writer(out, &nodes).map_err(|e| Error::Export(e.to_string()))
    }
}

/// Connected components of the window graph `{(n, f(n))}` that meet
/// `[lo, hi]`. Only edges with both ends in the window are used, so `hi`
/// should leave room for orbits to merge before the right edge.
pub fn component_count(window: &MarkWindow, lo: i64, hi: i64) -> Result<usize> {
    if lo > hi || !window.contains(lo) || !window.contains(hi) {
        return Err(Error::EmptyCore);
    }
    let base = window.lo();
    let mut uf: UnionFind<usize> = UnionFind::new(window.len());
    for n in base..=window.hi() {
        let p = window.parent(n).unwrap();
        if window.contains(p) {
            uf.union((n - base) as usize, (p - base) as usize);
        }
    }
    let mut roots: Vec<usize> = (lo..=hi).map(|n| uf.find((n - base) as usize)).collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots.len())
}
