//! Per-level path storage: the geometric hop ladder, stored-path
//! representations (explicit, concatenated, hierarchical), the congestion
//! table, and the vertex -> paths inverted index.

use std::sync::Arc;

use thiserror::Error;

use crate::graph::{VertexId, VertexSet, Weight};

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("cannot extract the empty path")]
    Empty,
    #[error("leading link endpoint {0} has no stored counterpart")]
    DanglingLink(usize),
}

/// (weight, hop) pair ordered lexicographically; `INF` marks the empty path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cost {
    pub weight: Weight,
    pub hop: u32,
}

impl Cost {
    pub const INF: Cost = Cost {
        weight: f64::INFINITY,
        hop: u32::MAX,
    };
    pub const ZERO: Cost = Cost {
        weight: 0.0,
        hop: 0,
    };

    pub fn new(weight: Weight, hop: u32) -> Self {
        Cost { weight, hop }
    }

    pub fn is_inf(&self) -> bool {
        self.weight.is_infinite()
    }

    /// Cost of this path followed by `other` (infinity absorbs).
    pub fn then(self, other: Cost) -> Cost {
        if self.is_inf() || other.is_inf() {
            return Cost::INF;
        }
        Cost {
            weight: self.weight + other.weight,
            hop: self.hop.saturating_add(other.hop),
        }
    }

    pub fn then_edge(self, w: Weight) -> Cost {
        if self.is_inf() {
            return Cost::INF;
        }
        Cost {
            weight: self.weight + w,
            hop: self.hop.saturating_add(1),
        }
    }

    /// Strict lexicographic improvement: smaller weight, or equal weight and
    /// fewer hops.
    pub fn better_than(&self, other: &Cost) -> bool {
        self.weight < other.weight || (self.weight == other.weight && self.hop < other.hop)
    }
}

/// Geometric hop ladder h_i = (3/2)^i with integer budgets B_i = ceil(h_i).
#[derive(Clone, Debug)]
pub struct HopSchedule {
    pub h: f64,
    /// Index of the first level with h_i >= h.
    pub i_h: usize,
    /// Extension ceiling: first level with h_i >= n.
    pub i_max: usize,
}

impl HopSchedule {
    pub fn new(h: f64, n: usize) -> Self {
        let h = h.max(1.0);
        HopSchedule {
            h,
            i_h: Self::level_for(h),
            i_max: Self::level_for(n.max(1) as f64),
        }
    }

    /// Smallest i with (3/2)^i >= x, i.e. ceil(log_{3/2} x) for x >= 1.
    fn level_for(x: f64) -> usize {
        let mut i = 0;
        while Self::pow(i) < x {
            i += 1;
        }
        i
    }

    /// h_i, computed as an exact power each time to avoid drift.
    pub fn pow(i: usize) -> f64 {
        1.5f64.powi(i as i32)
    }

    pub fn h_i(&self, i: usize) -> f64 {
        Self::pow(i)
    }

    /// Integer iteration budget B_i = ceil(h_i).
    pub fn budget(&self, i: usize) -> u32 {
        Self::pow(i).ceil() as u32
    }

    /// Congestion charged per vertex for a level-i path: ceil(n / h_i).
    pub fn charge_unit(&self, n: usize, i: usize) -> u64 {
        (n as f64 / Self::pow(i)).ceil() as u64
    }
}

/// Stored path node. Weight and hop are cached; the representation is one of
/// the forms produced by preprocessing and repair.
#[derive(Debug)]
pub struct PathNode {
    pub cost: Cost,
    pub repr: Repr,
}

#[derive(Debug)]
pub enum Repr {
    /// The empty path of weight infinity.
    Empty,
    /// Trivial zero-hop path at a vertex.
    Vertex(VertexId),
    Edge(VertexId, VertexId),
    Explicit(Box<[VertexId]>),
    /// Left followed by right; left's last vertex equals right's first.
    Concat(Arc<PathNode>, Arc<PathNode>),
    /// Stored path traversed in reverse (paths computed on a reversed view).
    Rev(Arc<PathNode>),
    /// Head of a hierarchical per-source store chain.
    Hier {
        store: Arc<HierSourceStore>,
        target: VertexId,
    },
}

impl PathNode {
    pub fn empty() -> Arc<PathNode> {
        Arc::new(PathNode {
            cost: Cost::INF,
            repr: Repr::Empty,
        })
    }

    pub fn vertex(v: VertexId) -> Arc<PathNode> {
        Arc::new(PathNode {
            cost: Cost::ZERO,
            repr: Repr::Vertex(v),
        })
    }

    pub fn edge(u: VertexId, v: VertexId, w: Weight) -> Arc<PathNode> {
        Arc::new(PathNode {
            cost: Cost::new(w, 1),
            repr: Repr::Edge(u, v),
        })
    }

    pub fn explicit(seq: Vec<VertexId>, weight: Weight) -> Arc<PathNode> {
        debug_assert!(!seq.is_empty());
        if seq.len() == 1 {
            return PathNode::vertex(seq[0]);
        }
        Arc::new(PathNode {
            cost: Cost::new(weight, (seq.len() - 1) as u32),
            repr: Repr::Explicit(seq.into_boxed_slice()),
        })
    }

    pub fn concat(left: &Arc<PathNode>, right: &Arc<PathNode>) -> Arc<PathNode> {
        Arc::new(PathNode {
            cost: left.cost.then(right.cost),
            repr: Repr::Concat(left.clone(), right.clone()),
        })
    }

    pub fn rev(inner: &Arc<PathNode>) -> Arc<PathNode> {
        Arc::new(PathNode {
            cost: inner.cost,
            repr: Repr::Rev(inner.clone()),
        })
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.repr, Repr::Empty)
    }
}

/// Extraction output plus instrumentation for the linearity checks.
#[derive(Debug)]
pub struct Extraction {
    pub vertices: Vec<VertexId>,
    pub link_traversals: usize,
}

/// Full vertex sequence of a stored path. Errors on the empty path.
pub fn extract(p: &PathNode) -> Result<Extraction, PathError> {
    if p.is_empty() {
        return Err(PathError::Empty);
    }
    let mut out = Extraction {
        vertices: Vec::with_capacity(p.cost.hop as usize + 1),
        link_traversals: 0,
    };
    walk(p, false, &mut out)?;
    Ok(out)
}

fn walk(p: &PathNode, reversed: bool, out: &mut Extraction) -> Result<(), PathError> {
    match &p.repr {
        Repr::Empty => return Err(PathError::Empty),
        Repr::Vertex(v) => push(out, *v),
        Repr::Edge(u, v) => {
            let (a, b) = if reversed { (*v, *u) } else { (*u, *v) };
            push(out, a);
            push(out, b);
        }
        Repr::Explicit(seq) => {
            if reversed {
                for &v in seq.iter().rev() {
                    push(out, v);
                }
            } else {
                for &v in seq.iter() {
                    push(out, v);
                }
            }
        }
        Repr::Concat(l, r) => {
            let (first, second) = if reversed { (r, l) } else { (l, r) };
            walk(first, reversed, out)?;
            walk(second, reversed, out)?;
        }
        Repr::Rev(inner) => walk(inner, !reversed, out)?,
        Repr::Hier { store, target } => store.extract_into(*target, reversed, out)?,
    }
    Ok(())
}

fn push(out: &mut Extraction, v: VertexId) {
    // shared pivot between concatenated pieces appears once
    if out.vertices.last() != Some(&v) {
        out.vertices.push(v);
    }
}

/// True when the stored path visits any vertex of `banned`, without
/// materializing the sequence.
pub fn touches(p: &PathNode, banned: &VertexSet) -> bool {
    match &p.repr {
        Repr::Empty => false,
        Repr::Vertex(v) => banned.contains(*v),
        Repr::Edge(u, v) => banned.contains(*u) || banned.contains(*v),
        Repr::Explicit(seq) => seq.iter().any(|v| banned.contains(*v)),
        Repr::Concat(l, r) => touches(l, banned) || touches(r, banned),
        Repr::Rev(inner) => touches(inner, banned),
        Repr::Hier { store, target } => store.chain_touches(*target, banned),
    }
}

/// Per-vertex congestion counters with total, threshold, and the congested
/// set accumulated so far.
#[derive(Clone, Debug)]
pub struct CongestionTable {
    counters: Vec<u64>,
    pub phi: u64,
    pub tau: u64,
    pub congested: VertexSet,
    increments: u64,
}

impl CongestionTable {
    pub fn new(n_slots: usize, tau: u64) -> Self {
        CongestionTable {
            counters: vec![0; n_slots],
            phi: 0,
            tau,
            congested: VertexSet::new(n_slots),
            increments: 0,
        }
    }

    pub fn congestion(&self, v: VertexId) -> u64 {
        self.counters[v]
    }

    pub fn max_congestion(&self) -> u64 {
        self.counters.iter().copied().max().unwrap_or(0)
    }

    /// Charges `unit` to each vertex; returns the vertices that crossed
    /// tau/2 during this call (they join the congested set).
    pub fn charge_vertices(&mut self, vertices: &[VertexId], unit: u64) -> Vec<VertexId> {
        let half = self.tau / 2;
        let mut newly = Vec::new();
        for &v in vertices {
            let old = self.counters[v];
            self.counters[v] = old + unit;
            self.phi += unit;
            self.increments += unit;
            if old <= half && self.counters[v] > half {
                self.congested.insert(v);
                newly.push(v);
            }
        }
        newly
    }

    /// Replay equality: the running total matches the sum of increments.
    pub fn ledger_consistent(&self) -> bool {
        self.phi == self.increments && self.phi == self.counters.iter().sum::<u64>()
    }
}

/// Charges every distinct vertex of `path` with ceil(n / h_i); returns the
/// newly congested vertices.
pub fn charge(
    path: &PathNode,
    level: usize,
    schedule: &HopSchedule,
    n: usize,
    table: &mut CongestionTable,
) -> Result<Vec<VertexId>, PathError> {
    let unit = schedule.charge_unit(n, level);
    let mut verts = extract(path)?.vertices;
    verts.sort_unstable();
    verts.dedup();
    Ok(table.charge_vertices(&verts, unit))
}

/// One hierarchical per-source store: per level, paths to that level's
/// separator members as an explicit tail plus one leading link to a
/// higher-level stored subpath. Links are bidirectional so that membership
/// queries run in output time.
#[derive(Debug)]
pub struct HierSourceStore {
    pub source: VertexId,
    pub top_level: usize,
    entries: Vec<HierEntry>,
    /// Per level j: stored members (target, entry, collapsed-link?).
    members: Vec<Vec<Member>>,
    /// Per target slot: the head entry of the final stored path.
    heads: Vec<Option<u32>>,
    /// Vertex -> entries whose tail contains it.
    vertex_entries: Vec<Vec<u32>>,
    /// Entry -> entries linking to it, plus final targets headed by it.
    rev: Vec<RevSet>,
}

#[derive(Debug)]
pub struct HierEntry {
    pub level: usize,
    pub target: VertexId,
    pub link: Option<u32>,
    /// Vertex sequence from the link's endpoint (or the source) to `target`.
    pub tail: Vec<VertexId>,
    pub cost: Cost,
}

#[derive(Debug, Clone, Copy)]
struct Member {
    target: VertexId,
    entry: u32,
    /// True when the member reuses an entry stored at a different level.
    collapsed: bool,
}

#[derive(Debug, Default)]
struct RevSet {
    entries: Vec<u32>,
    head_targets: Vec<VertexId>,
}

pub struct HierStoreBuilder {
    store: HierSourceStore,
}

impl HierStoreBuilder {
    pub fn new(source: VertexId, n_slots: usize, top_level: usize) -> Self {
        HierStoreBuilder {
            store: HierSourceStore {
                source,
                top_level,
                entries: Vec::new(),
                members: vec![Vec::new(); top_level + 1],
                heads: vec![None; n_slots],
                vertex_entries: vec![Vec::new(); n_slots],
                rev: Vec::new(),
            },
        }
    }

    pub fn entry_cost(&self, e: u32) -> Cost {
        self.store.entries[e as usize].cost
    }

    /// Stores one separator path. `tail` runs from the link's endpoint (or
    /// the source when `link` is none) to the member vertex and must carry at
    /// least one edge.
    pub fn add_entry(
        &mut self,
        level: usize,
        link: Option<u32>,
        tail: Vec<VertexId>,
        cost: Cost,
    ) -> Result<u32, PathError> {
        debug_assert!(tail.len() >= 2);
        if let Some(l) = link {
            let le = self
                .store
                .entries
                .get(l as usize)
                .ok_or(PathError::DanglingLink(l as usize))?;
            if le.target != tail[0] {
                return Err(PathError::DanglingLink(l as usize));
            }
        } else if tail[0] != self.store.source {
            return Err(PathError::DanglingLink(tail[0]));
        }
        let id = self.store.entries.len() as u32;
        let target = *tail.last().unwrap();
        for &v in &tail {
            self.store.vertex_entries[v].push(id);
        }
        self.store.rev.push(RevSet::default());
        if let Some(l) = link {
            self.store.rev[l as usize].entries.push(id);
        }
        self.store.entries.push(HierEntry {
            level,
            target,
            link,
            tail,
            cost,
        });
        self.store.members[level].push(Member {
            target,
            entry: id,
            collapsed: false,
        });
        Ok(id)
    }

    /// Registers a member whose path is exactly an already-stored entry
    /// (pure link, collapsed so extraction always gains an edge per hop).
    pub fn add_collapsed_member(&mut self, level: usize, entry: u32) {
        let target = self.store.entries[entry as usize].target;
        self.store.members[level].push(Member {
            target,
            entry,
            collapsed: true,
        });
    }

    /// Marks the final stored path for `target`.
    pub fn set_head(&mut self, target: VertexId, entry: u32) {
        self.store.heads[target] = Some(entry);
        self.store.rev[entry as usize].head_targets.push(target);
    }

    pub fn finish(self) -> HierSourceStore {
        self.store
    }
}

impl HierSourceStore {
    pub fn head_cost(&self, target: VertexId) -> Option<Cost> {
        self.heads[target].map(|e| self.entries[e as usize].cost)
    }

    pub fn entry(&self, id: u32) -> &HierEntry {
        &self.entries[id as usize]
    }

    pub fn members_at(&self, level: usize) -> usize {
        self.members[level].len()
    }

    pub fn member_targets_at(&self, level: usize) -> impl Iterator<Item = VertexId> + '_ {
        self.members[level].iter().map(|m| m.target)
    }

    /// (explicit edges + links) stored for level j; the space ledger bounds
    /// this by (B_j + 1) * |members_j|.
    pub fn items_at(&self, level: usize) -> usize {
        let mut items = 0;
        for m in &self.members[level] {
            if m.collapsed {
                items += 1;
            } else {
                let e = &self.entries[m.entry as usize];
                items += e.tail.len() - 1 + usize::from(e.link.is_some());
            }
        }
        items
    }

    fn extract_into(
        &self,
        target: VertexId,
        reversed: bool,
        out: &mut Extraction,
    ) -> Result<(), PathError> {
        let head = self.heads[target].ok_or(PathError::Empty)?;
        if reversed {
            let mut fwd = Extraction {
                vertices: Vec::new(),
                link_traversals: 0,
            };
            self.extract_chain(head, &mut fwd)?;
            out.link_traversals += fwd.link_traversals + 1;
            for &v in fwd.vertices.iter().rev() {
                push(out, v);
            }
            return Ok(());
        }
        out.link_traversals += 1;
        self.extract_chain(head, out)
    }

    fn chain_touches(&self, target: VertexId, banned: &VertexSet) -> bool {
        let Some(mut id) = self.heads[target] else {
            return false;
        };
        loop {
            let e = &self.entries[id as usize];
            if e.tail.iter().any(|v| banned.contains(*v)) {
                return true;
            }
            match e.link {
                Some(l) => id = l,
                None => return false,
            }
        }
    }

    /// Full vertex sequence represented by one stored entry and its chain.
    pub fn extract_entry(&self, id: u32) -> Extraction {
        let mut out = Extraction {
            vertices: Vec::new(),
            link_traversals: 0,
        };
        self.extract_chain(id, &mut out)
            .expect("entry chains extract");
        out
    }

    fn extract_chain(&self, id: u32, out: &mut Extraction) -> Result<(), PathError> {
        let e = &self.entries[id as usize];
        if let Some(l) = e.link {
            out.link_traversals += 1;
            self.extract_chain(l, out)?;
            for &v in &e.tail[1..] {
                push(out, v);
            }
        } else {
            for &v in &e.tail {
                push(out, v);
            }
        }
        Ok(())
    }

    /// Targets whose stored path contains a banned vertex, via the reverse
    /// links; work is proportional to the affected chains.
    pub fn targets_through(&self, banned: &VertexSet) -> Vec<VertexId> {
        let mut seed = Vec::new();
        for u in banned.iter() {
            if u < self.vertex_entries.len() {
                seed.extend_from_slice(&self.vertex_entries[u]);
            }
        }
        let mut visited = VertexSet::new(self.entries.len());
        let mut targets = Vec::new();
        let mut stack = seed;
        while let Some(e) = stack.pop() {
            if !visited.insert(e as usize) {
                continue;
            }
            let rs = &self.rev[e as usize];
            targets.extend_from_slice(&rs.head_targets);
            stack.extend_from_slice(&rs.entries);
        }
        targets.sort_unstable();
        targets.dedup();
        targets
    }
}

/// Per-level per-pair stored paths with O(1) cost lookup.
#[derive(Clone)]
pub struct LevelPaths {
    pub n_slots: usize,
    cost: Vec<Cost>,
    path: Vec<Option<Arc<PathNode>>>,
}

impl LevelPaths {
    pub fn new(n_slots: usize) -> Self {
        LevelPaths {
            n_slots,
            cost: vec![Cost::INF; n_slots * n_slots],
            path: vec![None; n_slots * n_slots],
        }
    }

    /// Fresh collection with zero-cost diagonals for `alive` vertices.
    pub fn with_diagonal(n_slots: usize, alive: impl Iterator<Item = VertexId>) -> Self {
        let mut lp = LevelPaths::new(n_slots);
        for v in alive {
            lp.set(v, v, Cost::ZERO, Some(PathNode::vertex(v)));
        }
        lp
    }

    #[inline]
    pub fn idx(&self, s: VertexId, t: VertexId) -> usize {
        s * self.n_slots + t
    }

    #[inline]
    pub fn cost(&self, s: VertexId, t: VertexId) -> Cost {
        self.cost[self.idx(s, t)]
    }

    pub fn path(&self, s: VertexId, t: VertexId) -> Option<&Arc<PathNode>> {
        self.path[self.idx(s, t)].as_ref()
    }

    pub fn set(&mut self, s: VertexId, t: VertexId, cost: Cost, path: Option<Arc<PathNode>>) {
        let i = self.idx(s, t);
        self.cost[i] = cost;
        self.path[i] = path;
    }

    pub fn clear(&mut self, s: VertexId, t: VertexId) {
        self.set(s, t, Cost::INF, None);
    }

    /// Lexicographic improvement; returns true when the entry was replaced.
    pub fn improve(
        &mut self,
        s: VertexId,
        t: VertexId,
        cost: Cost,
        path: impl FnOnce() -> Arc<PathNode>,
    ) -> bool {
        let i = self.idx(s, t);
        if cost.better_than(&self.cost[i]) {
            self.cost[i] = cost;
            self.path[i] = Some(path());
            true
        } else {
            false
        }
    }
}

/// Inverted index over the preprocessed paths of each level.
pub enum PathIndex {
    /// Per level, per vertex: pair ids (s * n_slots + t) of paths through it.
    Explicit {
        n_slots: usize,
        per_level: Vec<Vec<Vec<u32>>>,
    },
    /// Backed by the bidirectional links of hierarchical stores:
    /// per level, per source slot, the store holding that source's paths.
    Hier {
        n_slots: usize,
        per_level: Vec<Vec<Option<Arc<HierSourceStore>>>>,
    },
}

impl PathIndex {
    pub fn new_explicit(n_slots: usize, levels: usize) -> Self {
        PathIndex::Explicit {
            n_slots,
            per_level: vec![vec![Vec::new(); n_slots]; levels],
        }
    }

    pub fn new_hier(n_slots: usize, levels: usize) -> Self {
        PathIndex::Hier {
            n_slots,
            per_level: vec![vec![None; n_slots]; levels],
        }
    }

    pub fn record_explicit(&mut self, level: usize, s: VertexId, t: VertexId, seq: &[VertexId]) {
        let PathIndex::Explicit { n_slots, per_level } = self else {
            panic!("record_explicit on hierarchical index");
        };
        let pair = (s * *n_slots + t) as u32;
        let lvl = &mut per_level[level];
        for &v in seq {
            if lvl[v].last() != Some(&pair) {
                lvl[v].push(pair);
            }
        }
    }

    pub fn record_store(&mut self, level: usize, store: Arc<HierSourceStore>) {
        let PathIndex::Hier { per_level, .. } = self else {
            panic!("record_store on explicit index");
        };
        let source = store.source;
        per_level[level][source] = Some(store);
    }

    /// Exactly the level-i preprocessed paths intersecting `banned`.
    pub fn paths_through(&self, level: usize, banned: &VertexSet) -> Vec<(VertexId, VertexId)> {
        if banned.is_empty() {
            return Vec::new();
        }
        match self {
            PathIndex::Explicit { n_slots, per_level } => {
                let mut pairs: Vec<u32> = banned
                    .iter()
                    .flat_map(|v| per_level[level][v].iter().copied())
                    .collect();
                pairs.sort_unstable();
                pairs.dedup();
                pairs
                    .into_iter()
                    .map(|p| ((p as usize) / n_slots, (p as usize) % n_slots))
                    .collect()
            }
            PathIndex::Hier { per_level, .. } => {
                let mut out = Vec::new();
                for store in per_level[level].iter().flatten() {
                    for t in store.targets_through(banned) {
                        out.push((store.source, t));
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_ratios_are_exact() {
        let s = HopSchedule::new(20.0, 100);
        for i in 1..=s.i_max {
            assert_eq!(s.h_i(i) * 2.0, s.h_i(i - 1) * 3.0);
            assert!(s.budget(i) as f64 >= s.h_i(i));
            assert!((s.budget(i) as f64) - 1.0 < s.h_i(i));
        }
        assert!(s.h_i(s.i_h) >= s.h);
        if s.i_h > 0 {
            assert!(s.h_i(s.i_h - 1) < s.h);
        }
    }

    #[test]
    fn schedule_small_h() {
        let s = HopSchedule::new(1.0, 1);
        assert_eq!(s.i_h, 0);
        assert_eq!(s.i_max, 0);
        assert_eq!(s.budget(0), 1);
        let s4 = HopSchedule::new(4.0, 40);
        assert_eq!(s4.i_h, 4); // 1.5^3 = 3.375 < 4 <= 5.0625
    }

    #[test]
    fn charge_unit_arithmetic() {
        let s = HopSchedule::new(4.0, 10);
        assert_eq!(s.charge_unit(10, 2), 5); // ceil(10 / 2.25)
        assert_eq!(s.charge_unit(10, 0), 10);
    }

    #[test]
    fn charge_path_and_threshold() {
        let s = HopSchedule::new(4.0, 10);
        let mut table = CongestionTable::new(10, 200);
        let p = PathNode::explicit(vec![0, 1, 2], 2.0);
        let newly = charge(&p, 2, &s, 10, &mut table).unwrap();
        assert!(newly.is_empty());
        assert_eq!(table.phi, 15);
        for v in 0..3 {
            assert_eq!(table.congestion(v), 5);
        }
        // push vertex 1 to 96, then one more charge of 5 crosses 100
        table.charge_vertices(&[1], 91);
        assert_eq!(table.congestion(1), 96);
        let newly = table.charge_vertices(&[1], 5);
        assert_eq!(newly, vec![1]);
        assert!(table.congested.contains(1));
        assert!(table.ledger_consistent());
    }

    #[test]
    fn per_path_charge_within_ledger_step() {
        // a level-i path of at most B_i + 1 vertices adds at most
        // (B_i + 1) * ceil(n / h_i) <= 3(n + 1) to the total
        for n in [5usize, 10, 40, 100] {
            let s = HopSchedule::new(n as f64, n);
            for i in 0..=s.i_h {
                let verts = (s.budget(i) + 1) as u64;
                assert!(
                    verts * s.charge_unit(n, i) <= 3 * (n as u64 + 1),
                    "n={n} i={i}"
                );
            }
        }
    }

    #[test]
    fn extract_edge_and_concat() {
        let e = PathNode::edge(3, 7, 1.0);
        assert_eq!(extract(&e).unwrap().vertices, vec![3, 7]);

        let a = PathNode::explicit(vec![0, 1, 2], 2.0);
        let b = PathNode::explicit(vec![2, 4], 1.0);
        let c = PathNode::concat(&a, &b);
        assert_eq!(c.cost, Cost::new(3.0, 3));
        assert_eq!(extract(&c).unwrap().vertices, vec![0, 1, 2, 4]);

        let r = PathNode::rev(&c);
        assert_eq!(extract(&r).unwrap().vertices, vec![4, 2, 1, 0]);

        assert_eq!(extract(&PathNode::empty()).unwrap_err(), PathError::Empty);
    }

    fn tiny_store() -> HierSourceStore {
        // source 0; top entry 0->1->2 at level 1, tail 2->3 linked at level 0
        let mut b = HierStoreBuilder::new(0, 5, 1);
        let top = b
            .add_entry(1, None, vec![0, 1, 2], Cost::new(2.0, 2))
            .unwrap();
        let bot = b
            .add_entry(0, Some(top), vec![2, 3], Cost::new(3.0, 3))
            .unwrap();
        b.add_collapsed_member(0, top);
        b.set_head(3, bot);
        b.set_head(2, top);
        b.finish()
    }

    #[test]
    fn hier_store_extraction_and_links() {
        let store = Arc::new(tiny_store());
        let p = PathNode {
            cost: store.head_cost(3).unwrap(),
            repr: Repr::Hier {
                store: store.clone(),
                target: 3,
            },
        };
        let ex = extract(&p).unwrap();
        assert_eq!(ex.vertices, vec![0, 1, 2, 3]);
        assert!(ex.link_traversals <= 2 * p.cost.hop as usize);
    }

    #[test]
    fn hier_store_rejects_dangling_link() {
        let mut b = HierStoreBuilder::new(0, 4, 1);
        let top = b.add_entry(1, None, vec![0, 1], Cost::new(1.0, 1)).unwrap();
        // link endpoint mismatch: tail starts at 3, link targets 1
        assert!(matches!(
            b.add_entry(0, Some(top), vec![3, 2], Cost::new(9.0, 9)),
            Err(PathError::DanglingLink(_))
        ));
        assert!(matches!(
            b.add_entry(0, Some(99), vec![1, 2], Cost::new(9.0, 9)),
            Err(PathError::DanglingLink(99))
        ));
    }

    #[test]
    fn hier_store_targets_through() {
        let store = tiny_store();
        let hit = store.targets_through(&VertexSet::from_iter(5, [1]));
        assert_eq!(hit, vec![2, 3]);
        let hit = store.targets_through(&VertexSet::from_iter(5, [3]));
        assert_eq!(hit, vec![3]);
        let hit = store.targets_through(&VertexSet::from_iter(5, [4]));
        assert!(hit.is_empty());
    }

    #[test]
    fn explicit_index_paths_through() {
        let mut idx = PathIndex::new_explicit(4, 1);
        idx.record_explicit(0, 0, 2, &[0, 1, 2]);
        idx.record_explicit(0, 0, 3, &[0, 3]);
        idx.record_explicit(0, 1, 3, &[1, 2, 3]);
        assert!(idx.paths_through(0, &VertexSet::new(4)).is_empty());
        assert_eq!(
            idx.paths_through(0, &VertexSet::from_iter(4, [2])),
            vec![(0, 2), (1, 3)]
        );
        assert_eq!(
            idx.paths_through(0, &VertexSet::from_iter(4, [0])),
            vec![(0, 2), (0, 3)]
        );
    }

    #[test]
    fn level_paths_improve_is_lexicographic() {
        let mut lp = LevelPaths::new(3);
        assert!(lp.improve(0, 1, Cost::new(5.0, 3), || PathNode::explicit(
            vec![0, 1],
            5.0
        )));
        assert!(!lp.improve(0, 1, Cost::new(5.0, 3), || unreachable!()));
        assert!(lp.improve(0, 1, Cost::new(5.0, 2), || PathNode::explicit(
            vec![0, 1],
            5.0
        )));
        assert!(lp.improve(0, 1, Cost::new(4.0, 9), || PathNode::explicit(
            vec![0, 1],
            4.0
        )));
        assert_eq!(lp.cost(0, 1), Cost::new(4.0, 9));
    }
}
