//! Preprocessing passes: bounded Bellman-Ford, the congestion-threshold
//! all-pairs pass, its space-efficient variant backed by hierarchical
//! per-source stores, and the randomized center-sampling variant with its
//! layered composition.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Graph, GraphView, VertexId, VertexSet};
use crate::hitting_set::{choose_radius, SeparatorChoice};
use crate::path_store::{
    charge, CongestionTable, Cost, HierSourceStore, HierStoreBuilder, HopSchedule, LevelPaths,
    PathIndex, PathNode,
};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocError {
    #[error("congestion threshold {tau} below the required 2n^2 = {min}")]
    TauTooSmall { tau: u64, min: u64 },
    #[error("center {0} is not alive")]
    DeadCenter(VertexId),
}

/// Result of a bounded Bellman-Ford run: per-target lexicographic
/// (weight, hop) optima over walks of at most `budget` relaxation rounds,
/// with enough state to reconstruct one optimal path per target.
pub struct BfRun {
    pub source: VertexId,
    pub budget: u32,
    pub cost: Vec<Cost>,
    kind: BfKind,
    /// Initial labels (weight, hop, tag) present at round zero.
    init: Vec<Option<(Cost, u32)>>,
}

enum BfKind {
    /// Per-vertex improvement histories: each entry records the round, the
    /// value, the relaxing predecessor, and the vertex's previous entry.
    Hist {
        head: Vec<u32>,
        hist: Vec<HistEntry>,
    },
    /// Unweighted fast path: breadth-first levels and discovery parents.
    Bfs { level: Vec<u32>, parent: Vec<u32> },
}

struct HistEntry {
    round: u32,
    cost: Cost,
    /// Relaxing predecessor; u32::MAX for round-zero labels.
    setter: u32,
    /// Previous history entry of the same vertex; u32::MAX at the start.
    prev: u32,
}

/// One reconstructed optimal path: explicit tail, preceded by the tagged
/// initial label when the walk starts from one.
pub struct BfPath {
    /// Vertex sequence from the tail head to the target (>= 1 vertex).
    pub tail: Vec<VertexId>,
    /// Tag of the initial label the walk starts from, if any.
    pub init_tag: Option<u32>,
}

impl BfRun {
    pub fn cost(&self, t: VertexId) -> Cost {
        self.cost[t]
    }

    /// First round at which the final value of `t` appeared.
    fn settle(&self, t: VertexId) -> u32 {
        match &self.kind {
            BfKind::Bfs { level, .. } => level[t],
            BfKind::Hist { head, hist } => hist[head[t] as usize].round,
        }
    }

    /// Number of explicit tail edges of the reconstructed path to `t`,
    /// without materializing it.
    pub fn path_len(&self, t: VertexId) -> Option<u32> {
        if self.cost[t].is_inf() {
            return None;
        }
        match &self.kind {
            BfKind::Bfs { level, .. } => Some(level[t]),
            BfKind::Hist { head, hist } => {
                let entry_at = |v: usize, k: u32| -> &HistEntry {
                    let mut e = &hist[head[v] as usize];
                    while e.round > k {
                        e = &hist[e.prev as usize];
                    }
                    e
                };
                let mut cur = t;
                let mut k = self.settle(cur);
                let mut moves = 0;
                loop {
                    let e = entry_at(cur, k);
                    if e.setter == u32::MAX {
                        return Some(moves);
                    }
                    moves += 1;
                    cur = e.setter as usize;
                    k = e.round - 1;
                }
            }
        }
    }

    /// Reconstructs a minimum (weight, hop) path to `t` by walking the
    /// recorded relaxation predecessors backwards.
    pub fn reconstruct(&self, t: VertexId) -> Option<BfPath> {
        if self.cost[t].is_inf() {
            return None;
        }
        let mut tail = vec![t];
        let mut cur = t;
        match &self.kind {
            BfKind::Bfs { level, parent } => {
                while level[cur] > 0 {
                    let prev = parent[cur] as usize;
                    tail.push(prev);
                    cur = prev;
                }
                tail.reverse();
                Some(BfPath {
                    tail,
                    init_tag: None,
                })
            }
            BfKind::Hist { head, hist } => {
                // entry in force for `cur` at round `k`
                let entry_at = |v: usize, k: u32| -> &HistEntry {
                    let mut e = &hist[head[v] as usize];
                    while e.round > k {
                        e = &hist[e.prev as usize];
                    }
                    e
                };
                let mut k = self.settle(cur);
                loop {
                    let e = entry_at(cur, k);
                    if e.setter == u32::MAX {
                        break;
                    }
                    tail.push(e.setter as usize);
                    cur = e.setter as usize;
                    k = e.round - 1;
                }
                tail.reverse();
                let init_tag = if cur == self.source {
                    None
                } else {
                    Some(self.init[cur].expect("walk ends at an initial label").1)
                };
                Some(BfPath { tail, init_tag })
            }
        }
    }
}

/// Flattened adjacency restricted to a view, built once and shared across
/// searches on the same view.
pub struct Csr {
    n: usize,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    visible: Vec<bool>,
    unit_weight: bool,
}

impl Csr {
    pub fn new(view: &GraphView) -> Self {
        let n = view.n_slots();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut visible = vec![false; n];
        let mut unit_weight = true;
        offsets.push(0);
        for (v, vis) in visible.iter_mut().enumerate() {
            if view.contains(v) {
                *vis = true;
                for (to, w) in view.out_edges(v) {
                    targets.push(to as u32);
                    weights.push(w);
                    unit_weight &= w == 1.0;
                }
            }
            offsets.push(targets.len() as u32);
        }
        Csr {
            n,
            offsets,
            targets,
            weights,
            visible,
            unit_weight,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.n
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.visible[v]
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.n).filter(|&v| self.visible[v])
    }

    pub fn is_unit_weight(&self) -> bool {
        self.unit_weight
    }

    #[inline]
    fn edges(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let a = self.offsets[v] as usize;
        let b = self.offsets[v + 1] as usize;
        self.targets[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&t, &w)| (t as usize, w))
    }
}

/// Hop-bounded single-source shortest paths: synchronized relaxation rounds
/// with lexicographic (weight, hop) tie-breaking. `init` seeds round zero
/// with extra labels (used by the space-efficient variant, where a label
/// stands for an already-stored subpath); `unit_weight` switches to a
/// truncated breadth-first search, valid when every edge weighs 1.
pub fn bounded_bf(
    view: &GraphView,
    source: VertexId,
    budget: u32,
    init: Vec<Option<(Cost, u32)>>,
    unit_weight: bool,
) -> BfRun {
    let csr = Csr::new(view);
    bounded_bf_on(&csr, source, budget, init, unit_weight)
}

/// Each round relaxes only out of vertices whose label changed in the
/// previous round; the per-round label values equal the full synchronized
/// relaxation's.
pub fn bounded_bf_on(
    csr: &Csr,
    source: VertexId,
    budget: u32,
    init: Vec<Option<(Cost, u32)>>,
    unit_weight: bool,
) -> BfRun {
    let n = csr.n;
    debug_assert!(csr.visible[source]);
    if unit_weight && init.iter().all(|i| i.is_none()) {
        return bounded_bfs(csr, source, budget, init);
    }
    let mut cost = vec![Cost::INF; n];
    let mut head = vec![u32::MAX; n];
    let mut hist: Vec<HistEntry> = Vec::with_capacity(n * 2);
    // returns true when this is the vertex's first improvement this round
    let push = |hist: &mut Vec<HistEntry>,
                head: &mut Vec<u32>,
                cost: &mut Vec<Cost>,
                v: usize,
                round: u32,
                c: Cost,
                setter: u32|
     -> bool {
        cost[v] = c;
        // overwrite an entry from the same round instead of stacking
        if head[v] != u32::MAX && hist[head[v] as usize].round == round {
            let slot = head[v] as usize;
            hist[slot].cost = c;
            hist[slot].setter = setter;
            false
        } else {
            let e = HistEntry {
                round,
                cost: c,
                setter,
                prev: head[v],
            };
            head[v] = hist.len() as u32;
            hist.push(e);
            true
        }
    };
    let mut frontier: Vec<(usize, Cost)> = Vec::new();
    for (v, lbl) in init.iter().enumerate() {
        if let Some((c, _)) = lbl {
            if csr.visible[v] && v != source {
                push(&mut hist, &mut head, &mut cost, v, 0, *c, u32::MAX);
                frontier.push((v, *c));
            }
        }
    }
    push(
        &mut hist,
        &mut head,
        &mut cost,
        source,
        0,
        Cost::ZERO,
        u32::MAX,
    );
    frontier.push((source, Cost::ZERO));
    frontier.sort_unstable_by_key(|&(v, _)| v);

    for round in 1..=budget {
        let mut changed: Vec<usize> = Vec::new();
        for &(u, cu) in &frontier {
            for (v, w) in csr.edges(u) {
                let cand = cu.then_edge(w);
                if cand.better_than(&cost[v])
                    && push(&mut hist, &mut head, &mut cost, v, round, cand, u as u32)
                {
                    changed.push(v);
                }
            }
        }
        if changed.is_empty() {
            break;
        }
        changed.sort_unstable();
        changed.dedup();
        frontier = changed.into_iter().map(|v| (v, cost[v])).collect();
    }
    BfRun {
        source,
        budget,
        cost,
        kind: BfKind::Hist { head, hist },
        init,
    }
}

fn bounded_bfs(csr: &Csr, source: VertexId, budget: u32, init: Vec<Option<(Cost, u32)>>) -> BfRun {
    let n = csr.n;
    let mut level = vec![u32::MAX; n];
    let mut parent = vec![u32::MAX; n];
    level[source] = 0;
    let mut frontier = vec![source];
    let mut depth = 0;
    while depth < budget && !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &u in &frontier {
            for (v, _) in csr.edges(u) {
                if level[v] == u32::MAX {
                    level[v] = depth;
                    parent[v] = u as u32;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    let cost: Vec<Cost> = level
        .iter()
        .map(|&l| {
            if l == u32::MAX {
                Cost::INF
            } else {
                Cost::new(l as f64, l)
            }
        })
        .collect();
    BfRun {
        source,
        budget,
        cost,
        kind: BfKind::Bfs { level, parent },
        init,
    }
}

/// How preprocessed paths are represented.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum StoreBackend {
    /// Explicit vertex sequences per pair and level.
    Explicit,
    /// Hierarchical per-source stores (separator tails plus links).
    Hierarchical,
}

/// Output of a preprocessing pass: per-level improving paths, the congestion
/// table with its congested set, and the inverted index.
pub struct PreprocOutput {
    /// Alive vertex count at build time (the n in charge units and bounds).
    pub n: usize,
    pub n_slots: usize,
    pub schedule: HopSchedule,
    pub table: CongestionTable,
    pub levels: Vec<LevelPaths>,
    pub index: PathIndex,
    /// True when `index` covers every stored path (randomized outputs use
    /// direct scans instead).
    pub index_complete: bool,
    /// Centers of a randomized pass; `None` for the deterministic passes,
    /// whose level-0 paths are plain edges.
    pub centers: Option<VertexSet>,
    /// Hierarchical stores, for the space-ledger checks.
    pub stores: Vec<Arc<HierSourceStore>>,
    /// Separator choices made by store construction, with their level.
    pub separators: Vec<(usize, SeparatorChoice)>,
    /// Per level: pairs whose stored path is an explicit fallback rather
    /// than a store head (the inverted index does not cover those).
    pub fallback_list: Vec<Vec<(VertexId, VertexId)>>,
    /// Largest congestion added by a single outer iteration (one root or
    /// center, all levels).
    pub max_iteration_charge: u64,
}

impl PreprocOutput {
    pub fn congested(&self) -> &VertexSet {
        &self.table.congested
    }

    /// The congestion ledger: per-vertex ceiling, total bound, congested-set
    /// bound, and replay consistency.
    pub fn check_ledger(&self) -> Result<(), String> {
        let t = &self.table;
        if t.max_congestion() > t.tau {
            return Err(format!(
                "max congestion {} exceeds tau {}",
                t.max_congestion(),
                t.tau
            ));
        }
        let n = self.n as u64;
        let bound = 3 * n * n * (n + 1) * (self.schedule.i_h as u64 + 1);
        if t.phi > bound {
            return Err(format!("phi {} exceeds ledger bound {}", t.phi, bound));
        }
        if (t.congested.len() as u64) * t.tau > 2 * t.phi {
            return Err(format!(
                "|C| = {} exceeds 2 phi / tau = {}",
                t.congested.len(),
                2 * t.phi / t.tau.max(1)
            ));
        }
        if !t.ledger_consistent() {
            return Err("ledger replay mismatch".into());
        }
        Ok(())
    }
}

fn require_tau(tau: u64, n: usize) -> Result<(), PreprocError> {
    let min = 2 * (n as u64) * (n as u64);
    if tau < min {
        return Err(PreprocError::TauTooSmall { tau, min });
    }
    Ok(())
}

/// Congestion-threshold preprocessing: for every root (ascending id) and
/// level, computes hop-bounded shortest paths on the graph minus the
/// currently congested set, stores them, and charges ceil(n/h_i) to every
/// on-path vertex. Vertices crossing tau/2 join the congested set and
/// disappear from later computations.
pub fn det_preprocessing(
    graph: &Graph,
    tau: u64,
    h: f64,
    backend: StoreBackend,
    unweighted_override: Option<bool>,
) -> Result<PreprocOutput, PreprocError> {
    let mut b = DetBuilder::new(
        Arc::new(graph.clone()),
        tau,
        h,
        backend,
        unweighted_override,
    )?;
    while !b.done() {
        b.step();
    }
    Ok(b.finish())
}

/// Resumable form of [`det_preprocessing`]: one step processes one root, so
/// a background scheduler can spread the build across updates.
pub struct DetBuilder {
    graph: Arc<Graph>,
    backend: StoreBackend,
    unit_weight: bool,
    n: usize,
    n_slots: usize,
    schedule: HopSchedule,
    table: CongestionTable,
    levels: Vec<LevelPaths>,
    index: PathIndex,
    stores: Vec<Arc<HierSourceStore>>,
    separators: Vec<(usize, SeparatorChoice)>,
    fallback_list: Vec<Vec<(VertexId, VertexId)>>,
    max_iteration_charge: u64,
    roots: Vec<VertexId>,
    cursor: usize,
    csr_cache: Option<(usize, Csr)>,
}

impl DetBuilder {
    pub fn new(
        graph: Arc<Graph>,
        tau: u64,
        h: f64,
        backend: StoreBackend,
        unweighted_override: Option<bool>,
    ) -> Result<Self, PreprocError> {
        let n = graph.alive_count();
        let n_slots = graph.n_slots();
        require_tau(tau, n)?;
        let schedule = HopSchedule::new(h, n.max(1));
        let level_count = schedule.i_h + 1;
        let unit_weight = unweighted_override.unwrap_or_else(|| graph.view().is_unit_weight());
        let levels = (0..level_count)
            .map(|_| LevelPaths::with_diagonal(n_slots, graph.alive_vertices()))
            .collect();
        let index = match backend {
            StoreBackend::Explicit => PathIndex::new_explicit(n_slots, level_count),
            StoreBackend::Hierarchical => PathIndex::new_hier(n_slots, level_count),
        };
        let roots: Vec<VertexId> = graph.alive_vertices().collect();
        Ok(DetBuilder {
            backend,
            unit_weight,
            n,
            n_slots,
            table: CongestionTable::new(n_slots, tau),
            levels,
            index,
            stores: Vec::new(),
            separators: Vec::new(),
            fallback_list: vec![Vec::new(); level_count],
            max_iteration_charge: 0,
            roots,
            cursor: 0,
            csr_cache: None,
            schedule,
            graph,
        })
    }

    fn refresh_csr(&mut self) {
        let stamp = self.table.congested.len();
        if self.csr_cache.as_ref().map(|(s, _)| *s) != Some(stamp) {
            let view = self.graph.induced_without(self.table.congested.clone());
            self.csr_cache = Some((stamp, Csr::new(&view)));
        }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn total_units(&self) -> usize {
        self.roots.len()
    }

    pub fn done(&self) -> bool {
        self.cursor >= self.roots.len()
    }

    /// Processes the next root across all levels; returns true when the
    /// whole build is complete.
    pub fn step(&mut self) -> bool {
        if self.done() {
            return true;
        }
        let s = self.roots[self.cursor];
        self.cursor += 1;
        let phi_before = self.table.phi;
        for i in 0..=self.schedule.i_h {
            if self.table.congested.contains(s) {
                continue;
            }
            self.refresh_csr();
            let csr = &self.csr_cache.as_ref().unwrap().1;
            match self.backend {
                StoreBackend::Explicit => {
                    let run = bounded_bf_on(
                        csr,
                        s,
                        self.schedule.budget(i),
                        vec![None; self.n_slots],
                        self.unit_weight,
                    );
                    let unit = self.schedule.charge_unit(self.n, i);
                    for t in csr.vertices() {
                        if t == s || run.cost(t).is_inf() {
                            continue;
                        }
                        let path = run.reconstruct(t).expect("finite cost");
                        let node = PathNode::explicit(path.tail.clone(), run.cost(t).weight);
                        debug_assert_eq!(node.cost, run.cost(t));
                        self.index.record_explicit(i, s, t, &path.tail);
                        self.levels[i].set(s, t, run.cost(t), Some(node));
                        let mut verts = path.tail;
                        verts.sort_unstable();
                        verts.dedup();
                        self.table.charge_vertices(&verts, unit);
                    }
                }
                StoreBackend::Hierarchical => {
                    let space = bf_space_efficient_on(csr, s, i, &self.schedule);
                    for (lvl, sep) in space.separators {
                        self.separators.push((lvl, sep));
                    }
                    for &t in &space.fallback_targets {
                        self.fallback_list[i].push((s, t));
                    }
                    self.index.record_store(i, space.store.clone());
                    self.stores.push(space.store);
                    for t in csr.vertices() {
                        if t == s || space.cost[t].is_inf() {
                            continue;
                        }
                        let node = space.node[t].clone().expect("finite cost");
                        self.levels[i].set(s, t, space.cost[t], Some(node.clone()));
                        charge(&node, i, &self.schedule, self.n, &mut self.table)
                            .expect("non-empty path");
                    }
                }
            }
        }
        self.max_iteration_charge = self.max_iteration_charge.max(self.table.phi - phi_before);
        self.done()
    }

    pub fn finish(self) -> PreprocOutput {
        debug_assert!(self.done());
        PreprocOutput {
            n: self.n,
            n_slots: self.n_slots,
            schedule: self.schedule,
            table: self.table,
            levels: self.levels,
            index: self.index,
            index_complete: true,
            centers: None,
            stores: self.stores,
            separators: self.separators,
            fallback_list: self.fallback_list,
            max_iteration_charge: self.max_iteration_charge,
        }
    }
}

/// Result of one space-efficient per-source pass./// Result of one space-efficient per-source pass.
pub struct SpaceBf {
    pub store: Arc<HierSourceStore>,
    /// Per target: best (weight, hop) seen at any level of the descent.
    pub cost: Vec<Cost>,
    pub node: Vec<Option<Arc<PathNode>>>,
    pub separators: Vec<(usize, SeparatorChoice)>,
    /// Targets where a higher level beat the bottom store path; those paths
    /// are materialized explicitly instead of through the store.
    pub fallback_targets: Vec<VertexId>,
}

/// Space-efficient bounded search from `source` for hop target h_i:
/// descends levels j = i..0, each level running `bounded_bf` seeded with the
/// shortcut labels installed so far, storing separator-layer paths as
/// explicit tails linked to higher-level entries. Stored paths are
/// h_i-hop-improving of length at most 3*B_i + i.
pub fn bf_space_efficient(
    view: &GraphView,
    source: VertexId,
    top_level: usize,
    schedule: &HopSchedule,
) -> SpaceBf {
    let csr = Csr::new(view);
    bf_space_efficient_on(&csr, source, top_level, schedule)
}

/// [`bf_space_efficient`] over a prebuilt adjacency, so callers can share
/// the adjacency across sources and levels.
pub fn bf_space_efficient_on(
    csr: &Csr,
    source: VertexId,
    top_level: usize,
    schedule: &HopSchedule,
) -> SpaceBf {
    let n_slots = csr.n_slots();
    let mut builder = HierStoreBuilder::new(source, n_slots, top_level);
    // shortcut labels: best stored (weight, hop) and its entry, per target
    let mut init: Vec<Option<(Cost, u32)>> = vec![None; n_slots];
    let mut best = vec![Cost::INF; n_slots];
    let mut best_level = vec![usize::MAX; n_slots];
    let mut separators = Vec::new();
    let mut runs: Vec<BfRun> = Vec::with_capacity(top_level + 1);

    for j in (0..=top_level).rev() {
        let run = bounded_bf_on(csr, source, schedule.budget(j), init.clone(), false);
        let mut hops = Vec::new();
        for t in csr.vertices() {
            if t == source || run.cost(t).is_inf() {
                continue;
            }
            if run.cost(t).better_than(&best[t]) {
                best[t] = run.cost(t);
                best_level[t] = j;
            }
            hops.push((t, run.path_len(t).expect("finite cost")));
        }
        let h_j = schedule.h_i(j);
        let members: Vec<VertexId> = if h_j > 3.0 {
            let none = VertexSet::new(n_slots);
            let choice = choose_radius(&hops, h_j / 3.0, 2.0 * h_j / 3.0, &none, n_slots)
                .expect("open interval wider than 1 contains an integer");
            let members = choice.members.iter().collect();
            separators.push((j, choice));
            members
        } else {
            hops.iter().map(|&(t, _)| t).collect()
        };
        for x in members {
            let p = run.reconstruct(x).expect("members are reached");
            if p.tail.len() == 1 {
                // pure label: reuse the linked entry so extraction always
                // gains an edge per link
                if j == 0 {
                    let e = p.init_tag.expect("non-source single-vertex tail");
                    builder.add_collapsed_member(0, e);
                    builder.set_head(x, e);
                }
                continue;
            }
            let eid = builder
                .add_entry(j, p.init_tag, p.tail, run.cost(x))
                .expect("links target stored entries");
            if j == 0 {
                builder.set_head(x, eid);
            } else {
                let better = match init[x] {
                    Some((c, _)) => run.cost(x).better_than(&c),
                    None => true,
                };
                if better {
                    init[x] = Some((run.cost(x), eid));
                }
            }
        }
        runs.push(run);
    }

    let store = Arc::new(builder.finish());
    let mut cost = vec![Cost::INF; n_slots];
    let mut node: Vec<Option<Arc<PathNode>>> = (0..n_slots).map(|_| None).collect();
    let mut fallback_targets = Vec::new();
    if csr.contains(source) {
        cost[source] = Cost::ZERO;
        node[source] = Some(PathNode::vertex(source));
    }
    for t in csr.vertices() {
        if t == source || best[t].is_inf() {
            continue;
        }
        cost[t] = best[t];
        if store.head_cost(t) == Some(best[t]) {
            node[t] = Some(Arc::new(PathNode {
                cost: best[t],
                repr: crate::path_store::Repr::Hier {
                    store: store.clone(),
                    target: t,
                },
            }));
        } else {
            // a higher level of the descent held the best value; materialize
            // that path explicitly
            fallback_targets.push(t);
            let run = &runs[top_level - best_level[t]];
            let p = run.reconstruct(t).unwrap();
            let mut seq = match p.init_tag {
                Some(e) => store.extract_entry(e).vertices,
                None => Vec::new(),
            };
            for &v in &p.tail[if seq.is_empty() { 0 } else { 1 }..] {
                seq.push(v);
            }
            debug_assert_eq!((seq.len() - 1) as u32, best[t].hop);
            node[t] = Some(PathNode::explicit(seq, best[t].weight));
        }
    }
    SpaceBf {
        store,
        cost,
        node,
        separators,
        fallback_targets,
    }
}

/// Randomized preprocessing: centers drawn uniformly from `c_in`; per center
/// and level, space-efficient searches from and to the center on the graph
/// minus the congested set; pairs strictly improved through the center are
/// rewired and charged. A vertex crossing tau/2 mid-center triggers an
/// immediate recomputation of the current center's two searches on the
/// shrunk graph, keeping prior pair improvements.
pub fn rand_preprocessing(
    graph: &Graph,
    c_in: &VertexSet,
    tau: u64,
    h: f64,
    seed: u64,
) -> Result<PreprocOutput, PreprocError> {
    let mut b = RandBuilder::new(Arc::new(graph.clone()), c_in, tau, h, seed)?;
    while !b.done() {
        b.step();
    }
    Ok(b.finish())
}

/// Resumable form of [`rand_preprocessing`]: one step processes one center.
pub struct RandBuilder {
    graph: Arc<Graph>,
    n: usize,
    n_slots: usize,
    schedule: HopSchedule,
    table: CongestionTable,
    levels: Vec<LevelPaths>,
    stores: Vec<Arc<HierSourceStore>>,
    separators: Vec<(usize, SeparatorChoice)>,
    max_iteration_charge: u64,
    rng: ChaCha8Rng,
    worklist: Vec<VertexId>,
    centers: VertexSet,
    csr_cache: Option<(usize, Csr, Csr)>,
}

impl RandBuilder {
    pub fn new(
        graph: Arc<Graph>,
        c_in: &VertexSet,
        tau: u64,
        h: f64,
        seed: u64,
    ) -> Result<Self, PreprocError> {
        let n = graph.alive_count();
        let n_slots = graph.n_slots();
        require_tau(tau, n)?;
        for v in c_in.iter() {
            if !graph.is_alive(v) {
                return Err(PreprocError::DeadCenter(v));
            }
        }
        let schedule = HopSchedule::new(h, n.max(1));
        let level_count = schedule.i_h + 1;
        let levels = (0..level_count)
            .map(|_| LevelPaths::with_diagonal(n_slots, graph.alive_vertices()))
            .collect();
        Ok(RandBuilder {
            n,
            n_slots,
            table: CongestionTable::new(n_slots, tau),
            levels,
            stores: Vec::new(),
            separators: Vec::new(),
            max_iteration_charge: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            worklist: c_in.iter().collect(),
            centers: c_in.clone(),
            csr_cache: None,
            schedule,
            graph,
        })
    }

    fn refresh_csr(&mut self) {
        let stamp = self.table.congested.len();
        if self.csr_cache.as_ref().map(|(s, _, _)| *s) != Some(stamp) {
            let view = self.graph.induced_without(self.table.congested.clone());
            self.csr_cache = Some((stamp, Csr::new(&view), Csr::new(&view.reversed())));
        }
    }

    pub fn total_units(&self) -> usize {
        self.worklist.len()
    }

    pub fn done(&self) -> bool {
        self.worklist.is_empty()
    }

    /// Draws and processes one center; returns true when done.
    pub fn step(&mut self) -> bool {
        if self.done() {
            return true;
        }
        let c = self
            .worklist
            .swap_remove(self.rng.gen_range(0..self.worklist.len()));
        let phi_before = self.table.phi;
        for i in 0..=self.schedule.i_h {
            if self.table.congested.contains(c) {
                break;
            }
            self.refresh_csr();
            let (_, fc, bc) = self.csr_cache.as_ref().unwrap();
            let mut fwd = bf_space_efficient_on(fc, c, i, &self.schedule);
            let mut bwd = bf_space_efficient_on(bc, c, i, &self.schedule);
            let alive: Vec<VertexId> = self.graph.alive_vertices().collect();
            for &s in &alive {
                for &t in &alive {
                    if s == t {
                        continue;
                    }
                    let cand = bwd.cost[s].then(fwd.cost[t]);
                    if !cand.better_than(&self.levels[i].cost(s, t)) {
                        continue;
                    }
                    let left = if s == c {
                        PathNode::vertex(c)
                    } else {
                        PathNode::rev(bwd.node[s].as_ref().unwrap())
                    };
                    let right = if t == c {
                        PathNode::vertex(c)
                    } else {
                        fwd.node[t].clone().unwrap()
                    };
                    let node = PathNode::concat(&left, &right);
                    debug_assert_eq!(node.cost, cand);
                    self.levels[i].set(s, t, cand, Some(node.clone()));
                    let newly = charge(&node, i, &self.schedule, self.n, &mut self.table)
                        .expect("non-empty");
                    if !newly.is_empty() && !self.table.congested.contains(c) {
                        // rebuild this center's searches on the shrunk graph;
                        // the scan continues with the fresh results
                        self.refresh_csr();
                        let (_, fc, bc) = self.csr_cache.as_ref().unwrap();
                        fwd = bf_space_efficient_on(fc, c, i, &self.schedule);
                        bwd = bf_space_efficient_on(bc, c, i, &self.schedule);
                    }
                }
            }
            for (lvl, sep) in fwd.separators.drain(..).chain(bwd.separators.drain(..)) {
                self.separators.push((lvl, sep));
            }
            self.stores.push(fwd.store.clone());
            self.stores.push(bwd.store.clone());
        }
        self.max_iteration_charge = self.max_iteration_charge.max(self.table.phi - phi_before);
        self.done()
    }

    pub fn finish(self) -> PreprocOutput {
        debug_assert!(self.done());
        let level_count = self.schedule.i_h + 1;
        PreprocOutput {
            n: self.n,
            n_slots: self.n_slots,
            schedule: self.schedule,
            table: self.table,
            levels: self.levels,
            index: PathIndex::new_explicit(self.n_slots, 0),
            index_complete: false,
            centers: Some(self.centers),
            stores: self.stores,
            separators: self.separators,
            fallback_list: vec![Vec::new(); level_count],
            max_iteration_charge: self.max_iteration_charge,
        }
    }
}

/// Parameters of one randomized layer.
#[derive(Clone, Debug)]
pub struct RandLevelConfig {
    pub level: usize,
    pub centers: VertexSet,
    pub tau: u64,
    /// Updates between rebuilds of this layer.
    pub rebuild_cadence: u64,
    pub c_const: f64,
}

pub struct RandLayer {
    pub config: RandLevelConfig,
    pub out: PreprocOutput,
}

fn log_n_int(n: usize) -> u64 {
    ((n.max(1) as f64).ln().ceil() as u64).max(1)
}

pub fn rand_tau(n: usize, level: usize, c_const: f64) -> u64 {
    let n_u = n as u64;
    let ln3 = log_n_int(n).pow(3) as f64;
    let raw = (c_const * ln3 * (1u64 << level) as f64 * (n_u * n_u) as f64).ceil() as u64;
    raw.max(2 * n_u * n_u)
}

pub fn rand_cadence(n: usize, level: usize) -> u64 {
    let nf = n.max(1) as f64;
    let raw = nf.powf(2.0 / 3.0) / ((1u64 << level) as f64 * nf.ln().max(1.0));
    (raw.ceil() as u64).max(1)
}

/// Builds the layered randomized structure: level 0 runs over all vertices,
/// each later level over the previous level's congested output. The constant
/// in tau_0 doubles until level 0 leaves at most n/2 vertices congested.
/// Returns the layers and the final leftover congested set.
pub fn build_layered(
    graph: &Graph,
    h: f64,
    c_const: f64,
    seed: u64,
) -> Result<(Vec<RandLayer>, VertexSet), PreprocError> {
    let mut b = LayeredBuilder::new(Arc::new(graph.clone()), h, c_const, seed)?;
    while !b.done() {
        b.step();
    }
    Ok(b.finish())
}

/// Resumable form of [`build_layered`]; one step processes one center of the
/// level currently under construction.
pub struct LayeredBuilder {
    graph: Arc<Graph>,
    h: f64,
    seed: u64,
    n: usize,
    top: usize,
    c_cur: f64,
    level: usize,
    current: Option<RandBuilder>,
    layers: Vec<RandLayer>,
}

impl LayeredBuilder {
    pub fn new(graph: Arc<Graph>, h: f64, c_const: f64, seed: u64) -> Result<Self, PreprocError> {
        let n = graph.alive_count();
        let top = {
            // ceil(lg h), via exact powers
            let mut l = 0usize;
            while (1u64 << l) < h.max(1.0).ceil() as u64 {
                l += 1;
            }
            l
        };
        let c_cur = c_const.max(1e-9);
        let all = VertexSet::from_iter(graph.n_slots(), graph.alive_vertices());
        let current = RandBuilder::new(graph.clone(), &all, rand_tau(n, 0, c_cur), h, seed)?;
        Ok(LayeredBuilder {
            graph,
            h,
            seed,
            n,
            top,
            c_cur,
            level: 0,
            current: Some(current),
            layers: Vec::new(),
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn total_units(&self) -> usize {
        (self.top + 1) * self.n.max(1)
    }

    pub fn done(&self) -> bool {
        self.current.is_none()
    }

    pub fn step(&mut self) -> bool {
        let Some(cur) = self.current.as_mut() else {
            return true;
        };
        if !cur.step() {
            return false;
        }
        let out = self.current.take().unwrap().finish();
        if self.level == 0 && self.n > 1 && out.table.congested.len() > self.n / 2 {
            // threshold too tight: double the constant and redo level 0
            self.c_cur *= 2.0;
            let all = VertexSet::from_iter(self.graph.n_slots(), self.graph.alive_vertices());
            self.current = Some(
                RandBuilder::new(
                    self.graph.clone(),
                    &all,
                    rand_tau(self.n, 0, self.c_cur),
                    self.h,
                    self.seed,
                )
                .expect("level-0 parameters already validated"),
            );
            return false;
        }
        let centers = if self.level == 0 {
            VertexSet::from_iter(self.graph.n_slots(), self.graph.alive_vertices())
        } else {
            self.layers[self.level - 1].out.table.congested.clone()
        };
        self.layers.push(RandLayer {
            config: RandLevelConfig {
                level: self.level,
                centers,
                tau: rand_tau(self.n, self.level, self.c_cur),
                rebuild_cadence: rand_cadence(self.n, self.level),
                c_const: self.c_cur,
            },
            out,
        });
        if self.level == self.top {
            return true;
        }
        self.level += 1;
        let next_centers = self.layers.last().unwrap().out.table.congested.clone();
        self.current = Some(
            RandBuilder::new(
                self.graph.clone(),
                &next_centers,
                rand_tau(self.n, self.level, self.c_cur),
                self.h,
                self.seed.wrapping_add(self.level as u64),
            )
            .expect("congested centers are alive"),
        );
        false
    }

    pub fn c_resolved(&self) -> f64 {
        self.c_cur
    }

    pub fn finish(self) -> (Vec<RandLayer>, VertexSet) {
        debug_assert!(self.done());
        let leftover = self
            .layers
            .last()
            .map(|l| l.out.table.congested.clone())
            .unwrap_or_default();
        (self.layers, leftover)
    }
}
