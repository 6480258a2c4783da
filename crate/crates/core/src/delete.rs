//! Batch deletion: per-phase path repair over hop-layer separators, Johnson
//! reinsertion of congested vertices, extension of hop-limited answers to
//! exact distances, and the naive center structure for the through-set
//! contract.

use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Graph, GraphView, VertexId, VertexSet};
use crate::hitting_set::{choose_radius, greedy_hitting_set, SeparatorChoice, SetSystem};
use crate::oracle::Matrix;
use crate::path_store::{extract, touches, Cost, HopSchedule, LevelPaths, PathNode};
use crate::preprocess::{bounded_bf, PreprocOutput};

#[derive(Debug, Error, PartialEq)]
pub enum DeleteError {
    #[error("reinserted vertex {0} is already covered")]
    AlreadyCovered(VertexId),
    #[error("pair ({0}, {1}) has a finite weight but no extractable path")]
    MissingPath(VertexId, VertexId),
}

/// Output of the phase repair pass.
pub struct PhaseRepair {
    /// Repaired per-level collections; index i_h is the engine-facing one.
    pub levels: Vec<LevelPaths>,
    /// Separator choices made per phase (phase level, choice).
    pub separators: Vec<(usize, SeparatorChoice)>,
    /// Largest number of candidate evaluations spent on one broken path;
    /// bounded by the separator size plus one.
    pub max_candidates: usize,
    /// Broken paths repaired per phase.
    pub repaired: usize,
}

/// Pairs at `level` whose stored path intersects `d`, endpoints included.
fn broken_pairs(
    pre: &PreprocOutput,
    levels: &[LevelPaths],
    level: usize,
    d: &VertexSet,
) -> Vec<(VertexId, VertexId)> {
    let lp = &levels[level];
    let mut out = Vec::new();
    if pre.index_complete {
        for (s, t) in pre.index.paths_through(level, d) {
            // hierarchical stores can report paths that are no longer the
            // pair's current representative; verify on the stored node
            if let Some(p) = lp.path(s, t) {
                if touches(p, d) {
                    out.push((s, t));
                }
            }
        }
        for &(s, t) in &pre.fallback_list[level] {
            if let Some(p) = lp.path(s, t) {
                if touches(p, d) {
                    out.push((s, t));
                }
            }
        }
    } else {
        for s in 0..lp.n_slots {
            for t in 0..lp.n_slots {
                if s == t {
                    continue;
                }
                if let Some(p) = lp.path(s, t) {
                    if touches(p, d) {
                        out.push((s, t));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Rebuilds broken level-0 entries of a randomized structure: its level-0
/// semantics is the best path of at most one hop per side through a center,
/// recomputed here on the current graph.
fn recompute_level0_through_centers(
    lp0: &mut LevelPaths,
    broken: &[(VertexId, VertexId)],
    centers: &VertexSet,
    view: &GraphView,
) {
    let n = lp0.n_slots;
    let mut w = vec![f64::INFINITY; n * n];
    for u in view.vertices() {
        for (v, ew) in view.out_edges(u) {
            if ew < w[u * n + v] {
                w[u * n + v] = ew;
            }
        }
    }
    for &(s, t) in broken {
        if !view.contains(s) || !view.contains(t) {
            continue;
        }
        let mut best = Cost::INF;
        let mut best_c = None;
        for c in centers.iter() {
            if !view.contains(c) {
                continue;
            }
            let cand = if c == s || c == t {
                Cost::new(w[s * n + t], 1)
            } else {
                Cost::new(w[s * n + c] + w[c * n + t], 2)
            };
            if cand.weight.is_finite() && cand.better_than(&best) {
                best = cand;
                best_c = Some(c);
            }
        }
        match best_c {
            Some(c) if c == s || c == t => {
                lp0.set(s, t, best, Some(PathNode::edge(s, t, best.weight)));
            }
            Some(c) => {
                lp0.set(
                    s,
                    t,
                    best,
                    Some(PathNode::explicit(vec![s, c, t], best.weight)),
                );
            }
            None => lp0.clear(s, t),
        }
    }
}

/// Clears every entry whose row or column endpoint is deleted.
fn clear_endpoints(levels: &mut [LevelPaths], d: &VertexSet) {
    for lp in levels.iter_mut() {
        let n = lp.n_slots;
        for v in d.iter() {
            for x in 0..n {
                lp.clear(v, x);
                lp.clear(x, v);
            }
        }
    }
}

/// Separator for phase i from source `s`: the hop layer over the current
/// level-(i-1) paths, radius inside (h_i/3, 2h_i/3), excluding `excluded`.
/// For h_i <= 3 every alive non-excluded vertex is a candidate pivot.
fn phase_separator(
    prev: &LevelPaths,
    s: VertexId,
    h_i: f64,
    alive: &[VertexId],
    excluded: &VertexSet,
) -> (Vec<VertexId>, Option<SeparatorChoice>) {
    if h_i > 3.0 {
        let hops: Vec<(VertexId, u32)> = alive
            .iter()
            .filter(|&&x| x != s)
            .filter_map(|&x| {
                let c = prev.cost(s, x);
                if c.is_inf() {
                    None
                } else {
                    Some((x, c.hop))
                }
            })
            .collect();
        let choice = choose_radius(&hops, h_i / 3.0, 2.0 * h_i / 3.0, excluded, prev.n_slots)
            .expect("interval wider than one contains an integer");
        let members: Vec<VertexId> = choice.members.iter().collect();
        (members, Some(choice))
    } else {
        let members = alive
            .iter()
            .copied()
            .filter(|&x| !excluded.contains(x))
            .collect();
        (members, None)
    }
}

/// Repairs one broken pair from pivot candidates; pieces are read from
/// `prev` (level i-1). Pivots are the separator members plus the target,
/// minimizing weight, then hop, then pivot id.
fn repair_pair(
    prev: &LevelPaths,
    s: VertexId,
    t: VertexId,
    separator: &[VertexId],
) -> (Cost, Option<Arc<PathNode>>, usize) {
    let mut best = Cost::INF;
    let mut best_pivot = None;
    let mut evaluated = 0;
    let consider = |x: VertexId, best: &mut Cost, best_pivot: &mut Option<VertexId>| {
        let cand = prev.cost(s, x).then(prev.cost(x, t));
        if cand.better_than(best) {
            *best = cand;
            *best_pivot = Some(x);
        }
    };
    let mut seen_t = false;
    for &x in separator {
        if x > t && !seen_t {
            consider(t, &mut best, &mut best_pivot);
            evaluated += 1;
            seen_t = true;
        }
        if x == t {
            seen_t = true;
        }
        consider(x, &mut best, &mut best_pivot);
        evaluated += 1;
    }
    if !seen_t {
        consider(t, &mut best, &mut best_pivot);
        evaluated += 1;
    }
    match best_pivot {
        Some(x) if !best.is_inf() => {
            let left = prev.path(s, x).expect("finite piece").clone();
            let right = prev.path(x, t).expect("finite piece").clone();
            (best, Some(PathNode::concat(&left, &right)), evaluated)
        }
        _ => (Cost::INF, None, evaluated),
    }
}

/// Phase repair for one preprocessed structure: level-0 paths touching `d`
/// become empty, then each phase i rebuilds its broken paths from
/// level-(i-1) pieces glued at a separator pivot.
pub fn phase_delete(pre: &PreprocOutput, graph: &Graph, d: &VertexSet) -> PhaseRepair {
    let mut levels = pre.levels.clone();
    let sched = &pre.schedule;
    let mut separators = Vec::new();
    let mut max_candidates = 0;
    let mut repaired = 0;

    if d.is_empty() {
        return PhaseRepair {
            levels,
            separators,
            max_candidates,
            repaired,
        };
    }

    let excluded = d.union(&pre.table.congested);
    let alive: Vec<VertexId> = (0..pre.n_slots)
        .filter(|&v| !levels[0].cost(v, v).is_inf() && !d.contains(v))
        .collect();

    // phase 0: drop broken level-0 paths; a randomized structure's level 0
    // is recomputed instead (one hop per side through a surviving center)
    let broken0 = broken_pairs(pre, &levels, 0, d);
    for &(s, t) in &broken0 {
        levels[0].clear(s, t);
    }
    clear_endpoints(&mut levels, d);
    if let Some(centers) = &pre.centers {
        let view = graph.induced_without(d.clone());
        recompute_level0_through_centers(&mut levels[0], &broken0, centers, &view);
    }

    for i in 1..=sched.i_h {
        let broken = broken_pairs(pre, &levels, i, d);
        if broken.is_empty() {
            continue;
        }
        let h_i = sched.h_i(i);
        let (prev_part, cur_part) = levels.split_at_mut(i);
        let prev = &prev_part[i - 1];
        let cur = &mut cur_part[0];
        let mut sep_cache: Vec<Option<Vec<VertexId>>> = vec![None; pre.n_slots];
        for (s, t) in broken {
            if d.contains(s) || d.contains(t) {
                continue; // already cleared
            }
            if sep_cache[s].is_none() {
                let (members, choice) = phase_separator(prev, s, h_i, &alive, &excluded);
                if let Some(c) = choice {
                    separators.push((i, c));
                }
                sep_cache[s] = Some(members);
            }
            let sep = sep_cache[s].as_ref().unwrap();
            let (cost, node, evaluated) = repair_pair(prev, s, t, sep);
            max_candidates = max_candidates.max(evaluated);
            repaired += 1;
            debug_assert!(evaluated <= sep.len() + 1);
            cur.set(s, t, cost, node);
        }
    }

    PhaseRepair {
        levels,
        separators,
        max_candidates,
        repaired,
    }
}

/// One layer fed into the merged repair: its preprocessed structure and the
/// deletions already absent from it at build time.
pub struct LayerInput<'a> {
    pub pre: &'a PreprocOutput,
    pub baked: &'a VertexSet,
}

/// Lockstep phase repair across randomized layers. Each phase repairs every
/// layer's broken paths with pieces and separators drawn from the running
/// lexicographic merge of all layers at the previous level, then re-merges.
/// `exclude` is the final leftover congested set (no layer covers it).
pub fn phase_delete_merged(
    layers: &[LayerInput],
    graph: &Graph,
    d: &VertexSet,
    exclude: &VertexSet,
) -> (Vec<LevelPaths>, PhaseRepair) {
    let pre0 = layers[0].pre;
    let sched = &pre0.schedule;
    let n_slots = pre0.n_slots;
    let mut separators = Vec::new();
    let mut max_candidates = 0;
    let mut repaired = 0;

    let mut layer_levels: Vec<Vec<LevelPaths>> =
        layers.iter().map(|l| l.pre.levels.clone()).collect();
    let d_per_layer: Vec<VertexSet> = layers
        .iter()
        .map(|l| VertexSet::from_iter(n_slots, d.iter().filter(|&v| !l.baked.contains(v))))
        .collect();

    for (li, layer) in layers.iter().enumerate() {
        let dl = &d_per_layer[li];
        if dl.is_empty() {
            continue;
        }
        let broken0 = broken_pairs(layer.pre, &layer_levels[li], 0, dl);
        for &(s, t) in &broken0 {
            layer_levels[li][0].clear(s, t);
        }
        clear_endpoints(&mut layer_levels[li], dl);
        if let Some(centers) = &layer.pre.centers {
            let view = graph.induced_without(layer.baked.union(d));
            recompute_level0_through_centers(&mut layer_levels[li][0], &broken0, centers, &view);
        }
    }

    let merge = |layer_levels: &[Vec<LevelPaths>], i: usize| -> LevelPaths {
        let mut m = layer_levels[0][i].clone();
        for ll in &layer_levels[1..] {
            for s in 0..n_slots {
                for t in 0..n_slots {
                    let c = ll[i].cost(s, t);
                    if c.better_than(&m.cost(s, t)) {
                        m.set(s, t, c, ll[i].path(s, t).cloned());
                    }
                }
            }
        }
        m
    };

    let alive: Vec<VertexId> = (0..n_slots)
        .filter(|&v| layer_levels.iter().any(|ll| !ll[0].cost(v, v).is_inf()))
        .collect();
    let excluded = d.union(exclude);

    let mut merged_all = vec![merge(&layer_levels, 0)];
    let mut merged_prev = merged_all[0].clone();
    for i in 1..=sched.i_h {
        let h_i = sched.h_i(i);
        let mut sep_cache: Vec<Option<Vec<VertexId>>> = vec![None; n_slots];
        for (li, layer) in layers.iter().enumerate() {
            let dl = &d_per_layer[li];
            if dl.is_empty() {
                continue;
            }
            let broken = broken_pairs(layer.pre, &layer_levels[li], i, dl);
            for (s, t) in broken {
                if dl.contains(s) || dl.contains(t) {
                    continue;
                }
                if sep_cache[s].is_none() {
                    let (members, choice) =
                        phase_separator(&merged_prev, s, h_i, &alive, &excluded);
                    if let Some(c) = choice {
                        separators.push((i, c));
                    }
                    sep_cache[s] = Some(members);
                }
                let sep = sep_cache[s].as_ref().unwrap();
                let (cost, node, evaluated) = repair_pair(&merged_prev, s, t, sep);
                max_candidates = max_candidates.max(evaluated);
                repaired += 1;
                layer_levels[li][i].set(s, t, cost, node);
            }
        }
        merged_prev = merge(&layer_levels, i);
        merged_all.push(merged_prev.clone());
    }

    let stats = PhaseRepair {
        levels: Vec::new(),
        separators,
        max_candidates,
        repaired,
    };
    (merged_all, stats)
}

/// Johnson-style reinsertion on an exact distance matrix: vertices of `add`
/// are inserted sequentially; rows and columns come from their incident
/// edges in `graph`, then all pairs relax through the new vertex.
pub fn johnson_reinsert_matrix(
    dist: &mut Matrix,
    covered: &mut VertexSet,
    add: &[VertexId],
    graph: &GraphView,
) -> Result<(), DeleteError> {
    let rev = graph.reversed();
    for &c in add {
        if covered.contains(c) {
            return Err(DeleteError::AlreadyCovered(c));
        }
        dist.set(c, c, 0.0);
        for (u, w) in rev.out_edges(c) {
            // edge u -> c
            if !covered.contains(u) {
                continue;
            }
            for s in covered.iter() {
                let cand = dist.get(s, u) + w;
                if cand < dist.get(s, c) {
                    dist.set(s, c, cand);
                }
            }
            if w < dist.get(u, c) {
                dist.set(u, c, w);
            }
        }
        for (u, w) in graph.out_edges(c) {
            // edge c -> u
            if !covered.contains(u) {
                continue;
            }
            for t in covered.iter() {
                let cand = w + dist.get(u, t);
                if cand < dist.get(c, t) {
                    dist.set(c, t, cand);
                }
            }
            if w < dist.get(c, u) {
                dist.set(c, u, w);
            }
        }
        covered.insert(c);
        for s in covered.iter() {
            let sc = dist.get(s, c);
            if sc.is_infinite() {
                continue;
            }
            for t in covered.iter() {
                let cand = sc + dist.get(c, t);
                if cand < dist.get(s, t) {
                    dist.set(s, t, cand);
                }
            }
        }
    }
    Ok(())
}

/// Johnson-style reinsertion on an improving collection, tracking
/// (weight, hop) lexicographically and materializing paths as shared
/// concatenations. Applied to hop-improving inputs this yields hop-improving
/// paths with respect to the graph including `add`.
pub fn johnson_reinsert_collection(
    coll: &mut LevelPaths,
    active: &mut VertexSet,
    add: &[VertexId],
    graph: &GraphView,
) -> Result<(), DeleteError> {
    let rev = graph.reversed();
    for &c in add {
        if active.contains(c) {
            return Err(DeleteError::AlreadyCovered(c));
        }
        coll.set(c, c, Cost::ZERO, Some(PathNode::vertex(c)));
        let mut in_edges: Vec<(VertexId, f64)> = rev.out_edges(c).collect();
        in_edges.sort_by_key(|e| e.0);
        for &(u, w) in &in_edges {
            if !active.contains(u) {
                continue;
            }
            let edge = PathNode::edge(u, c, w);
            for s in active.iter() {
                let cand = coll.cost(s, u).then_edge(w);
                if cand.better_than(&coll.cost(s, c)) {
                    let left = coll.path(s, u).expect("finite piece").clone();
                    coll.set(s, c, cand, Some(PathNode::concat(&left, &edge)));
                }
            }
        }
        let mut out_edges: Vec<(VertexId, f64)> = graph.out_edges(c).collect();
        out_edges.sort_by_key(|e| e.0);
        for &(u, w) in &out_edges {
            if !active.contains(u) {
                continue;
            }
            let edge = PathNode::edge(c, u, w);
            for t in active.iter() {
                let cand = Cost::new(w, 1).then(coll.cost(u, t));
                if cand.better_than(&coll.cost(c, t)) {
                    let right = coll.path(u, t).expect("finite piece").clone();
                    coll.set(c, t, cand, Some(PathNode::concat(&edge, &right)));
                }
            }
        }
        active.insert(c);
        for s in active.iter() {
            let sc = coll.cost(s, c);
            if sc.is_inf() {
                continue;
            }
            let left = coll.path(s, c).expect("finite piece").clone();
            for t in active.iter() {
                let cand = sc.then(coll.cost(c, t));
                if cand.better_than(&coll.cost(s, t)) {
                    let right = coll.path(c, t).expect("finite piece").clone();
                    coll.set(s, t, cand, Some(PathNode::concat(&left, &right)));
                }
            }
        }
    }
    Ok(())
}

/// Extends an h-hop-improving collection to exact distances: geometric
/// pivot-doubling phases over a separator hitting every floor(h/4)-edge
/// window of the stored paths (all alive vertices when h < 4).
pub fn extend_distances(
    coll: &LevelPaths,
    h: f64,
    alive: &[VertexId],
) -> Result<Matrix, DeleteError> {
    let n_slots = coll.n_slots;
    let mut dist = Matrix::filled(n_slots, f64::INFINITY);
    let mut sequences: Vec<(VertexId, Vec<VertexId>)> = Vec::new();
    for &s in alive {
        for &t in alive {
            let c = coll.cost(s, t);
            dist.set(s, t, c.weight);
            if s != t && !c.is_inf() {
                let p = coll.path(s, t).ok_or(DeleteError::MissingPath(s, t))?;
                let seq = extract(p).map_err(|_| DeleteError::MissingPath(s, t))?;
                sequences.push((s, seq.vertices));
            }
        }
    }

    let n = alive.len();
    let sched = HopSchedule::new(h, n.max(1));
    if sched.i_max <= sched.i_h {
        return Ok(dist);
    }

    let window = (h / 4.0).floor() as usize;
    let separator: Vec<VertexId> = if window < 1 {
        alive.to_vec()
    } else {
        let mut sets = Vec::new();
        let mut min_size = usize::MAX;
        for (_, seq) in &sequences {
            if seq.len() < window + 1 {
                continue;
            }
            for win in seq.windows(window + 1) {
                let mut set: Vec<usize> = win.to_vec();
                set.sort_unstable();
                set.dedup();
                min_size = min_size.min(set.len());
                sets.push(set);
            }
        }
        if sets.is_empty() {
            Vec::new()
        } else {
            let sys = SetSystem {
                universe_size: n_slots,
                sets,
                min_size,
            };
            greedy_hitting_set(&sys)
                .expect("windows are non-empty")
                .iter()
                .collect()
        }
    };

    for _phase in (sched.i_h + 1)..=sched.i_max {
        let mut next = dist.clone();
        for &x in &separator {
            for &s in alive {
                let sx = dist.get(s, x);
                if sx.is_infinite() {
                    continue;
                }
                for &t in alive {
                    let cand = sx + dist.get(x, t);
                    if cand < next.get(s, t) {
                        next.set(s, t, cand);
                    }
                }
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Naive contract-correct center structure: the store snapshots the graph,
/// centers, and hop budget; each delete runs two bounded searches per
/// surviving center on the current graph and glues them at the center.
pub struct AckStore {
    graph: Arc<Graph>,
    pub centers: Vec<VertexId>,
    pub budget: u32,
    baked: VertexSet,
}

pub fn ack_preprocess(
    graph: &Arc<Graph>,
    centers: &VertexSet,
    h: f64,
    baked: &VertexSet,
) -> AckStore {
    let n = graph.alive_count();
    let sched = HopSchedule::new(h, n.max(1));
    AckStore {
        graph: graph.clone(),
        centers: centers.iter().collect(),
        budget: sched.budget(sched.i_h),
        baked: baked.clone(),
    }
}

/// For each pair, the best hop-bounded path through a surviving center in
/// the graph minus `d`, as a lex-minimal (weight, hop) collection.
pub fn ack_delete(store: &AckStore, d: &VertexSet) -> LevelPaths {
    let removed = store.baked.union(d);
    let view = store.graph.induced_without(removed);
    let n_slots = store.graph.n_slots();
    let mut coll = LevelPaths::with_diagonal(n_slots, view.vertices());
    let rev = view.reversed();
    for &c in &store.centers {
        if !view.contains(c) {
            continue;
        }
        let fwd = bounded_bf(&view, c, store.budget, vec![None; n_slots], false);
        let bwd = bounded_bf(&rev, c, store.budget, vec![None; n_slots], false);
        let mut fwd_node: Vec<Option<Arc<PathNode>>> = vec![None; n_slots];
        let mut bwd_node: Vec<Option<Arc<PathNode>>> = vec![None; n_slots];
        for t in view.vertices() {
            if !fwd.cost(t).is_inf() {
                let p = fwd.reconstruct(t).unwrap();
                fwd_node[t] = Some(PathNode::explicit(p.tail, fwd.cost(t).weight));
            }
            if !bwd.cost(t).is_inf() {
                let p = bwd.reconstruct(t).unwrap();
                let node = PathNode::explicit(p.tail, bwd.cost(t).weight);
                bwd_node[t] = Some(PathNode::rev(&node));
            }
        }
        for s in view.vertices() {
            let to_c = bwd.cost(s);
            if to_c.is_inf() {
                continue;
            }
            for t in view.vertices() {
                if s == t {
                    continue;
                }
                let cand = to_c.then(fwd.cost(t));
                if cand.better_than(&coll.cost(s, t)) {
                    let left = bwd_node[s].as_ref().unwrap();
                    let right = fwd_node[t].as_ref().unwrap();
                    coll.set(s, t, cand, Some(PathNode::concat(left, right)));
                }
            }
        }
    }
    coll
}

/// Lexicographic merge of a second collection into the first.
pub fn merge_collections(into: &mut LevelPaths, other: &LevelPaths) {
    for s in 0..into.n_slots {
        for t in 0..into.n_slots {
            let c = other.cost(s, t);
            if c.better_than(&into.cost(s, t)) {
                into.set(s, t, c, other.path(s, t).cloned());
            }
        }
    }
}

/// Statistics of one full delete pass.
#[derive(Default, Clone, Debug)]
pub struct DeleteStats {
    pub repaired: usize,
    pub max_candidates: usize,
    pub reinserted: usize,
}

/// Full pipeline for the single-structure modes: phase repair, Johnson
/// reinsertion of the congested set (or, in the fast mode, a merge with the
/// center structure's output), then extension to exact distances over the
/// snapshot minus `d`.
pub fn full_delete(
    pre: &PreprocOutput,
    snapshot: &Graph,
    d: &VertexSet,
    ack: Option<(&AckStore, &VertexSet)>,
) -> Result<(Matrix, DeleteStats), DeleteError> {
    let repair = phase_delete(pre, snapshot, d);
    let mut top = repair.levels[pre.schedule.i_h].clone();
    let mut stats = DeleteStats {
        repaired: repair.repaired,
        max_candidates: repair.max_candidates,
        reinserted: 0,
    };

    let view = snapshot.induced_without(d.clone());
    match ack {
        Some((store, d2)) => {
            let through = ack_delete(store, d2);
            merge_collections(&mut top, &through);
        }
        None => {
            let add: Vec<VertexId> = pre
                .table
                .congested
                .iter()
                .filter(|&v| !d.contains(v) && snapshot.is_alive(v))
                .collect();
            stats.reinserted = add.len();
            let mut active = VertexSet::from_iter(
                snapshot.n_slots(),
                view.vertices()
                    .filter(|v| !pre.table.congested.contains(*v)),
            );
            johnson_reinsert_collection(&mut top, &mut active, &add, &view)?;
        }
    }

    let alive: Vec<VertexId> = view.vertices().collect();
    let h_top = pre.schedule.h_i(pre.schedule.i_h);
    let dist = extend_distances(&top, h_top, &alive)?;
    Ok((dist, stats))
}

/// Full pipeline for the layered randomized mode: lockstep merged repair
/// across layers, Johnson reinsertion of the final leftover congested set,
/// then extension.
pub fn full_delete_layered(
    layers: &[LayerInput],
    leftover: &VertexSet,
    snapshot: &Graph,
    d: &VertexSet,
) -> Result<(Matrix, DeleteStats), DeleteError> {
    // layers with no centers hold no paths and contribute nothing
    let layers: Vec<LayerInput> = layers
        .iter()
        .filter(|l| l.pre.centers.as_ref().is_none_or(|c| !c.is_empty()))
        .map(|l| LayerInput {
            pre: l.pre,
            baked: l.baked,
        })
        .collect();
    let (merged, repair) = phase_delete_merged(&layers, snapshot, d, leftover);
    let mut top = merged.into_iter().last().expect("at least level 0");
    let mut stats = DeleteStats {
        repaired: repair.repaired,
        max_candidates: repair.max_candidates,
        reinserted: 0,
    };
    let view = snapshot.induced_without(d.clone());
    let add: Vec<VertexId> = leftover
        .iter()
        .filter(|&v| !d.contains(v) && snapshot.is_alive(v))
        .collect();
    stats.reinserted = add.len();
    let mut active = VertexSet::from_iter(
        snapshot.n_slots(),
        view.vertices().filter(|v| !leftover.contains(*v)),
    );
    johnson_reinsert_collection(&mut top, &mut active, &add, &view)?;
    let alive: Vec<VertexId> = view.vertices().collect();
    let sched = &layers[0].pre.schedule;
    let dist = extend_distances(&top, sched.h_i(sched.i_h), &alive)?;
    Ok((dist, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Weight;
    use crate::oracle;
    use crate::preprocess::{build_layered, det_preprocessing, StoreBackend};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cycle5() -> Graph {
        Graph::from_edges(
            5,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 3, 1.0),
                (3, 4, 1.0),
                (4, 0, 1.0),
            ],
        )
        .unwrap()
    }

    fn random_graph(n: usize, p: f64, max_w: u32, rng: &mut StdRng) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.gen::<f64>() < p {
                    edges.push((u, v, rng.gen_range(1..=max_w) as Weight));
                }
            }
        }
        Graph::from_edges(n, &edges).unwrap()
    }

    fn oracle_on_without(g: &Graph, d: &VertexSet) -> Matrix {
        oracle::apsp(&g.induced_without(d.clone()))
    }

    #[test]
    fn phase_delete_noop_keeps_preprocessed() {
        let g = cycle5();
        let pre = det_preprocessing(&g, 5u64.pow(4), 8.0, StoreBackend::Explicit, None).unwrap();
        let rep = phase_delete(&pre, &g, &VertexSet::new(5));
        for i in 0..=pre.schedule.i_h {
            for s in 0..5 {
                for t in 0..5 {
                    assert_eq!(rep.levels[i].cost(s, t), pre.levels[i].cost(s, t));
                }
            }
        }
    }

    #[test]
    fn phase_delete_cycle_disconnects() {
        let g = cycle5();
        let pre = det_preprocessing(&g, 5u64.pow(4), 8.0, StoreBackend::Explicit, None).unwrap();
        assert!(pre.table.congested.is_empty());
        let d = VertexSet::from_iter(5, [2]);
        let rep = phase_delete(&pre, &g, &d);
        let top = &rep.levels[pre.schedule.i_h];
        assert_eq!(top.cost(0, 1), Cost::new(1.0, 1));
        assert!(top.cost(0, 3).is_inf());
    }

    #[test]
    fn phase_delete_matches_hop_oracle_when_uncongested() {
        let mut rng = StdRng::seed_from_u64(11);
        for trial in 0..12 {
            let n = 25;
            let g = random_graph(n, 0.18, 9, &mut rng);
            let backend = if trial % 2 == 0 {
                StoreBackend::Explicit
            } else {
                StoreBackend::Hierarchical
            };
            let pre = det_preprocessing(&g, (n as u64).pow(4), 6.0, backend, None).unwrap();
            assert!(pre.table.congested.is_empty());
            let mut d = VertexSet::new(n);
            for _ in 0..rng.gen_range(1..=4) {
                d.insert(rng.gen_range(0..n));
            }
            let rep = phase_delete(&pre, &g, &d);
            let rest = g.induced_without(d.clone());
            let i_h = pre.schedule.i_h;
            let hr = oracle::hop_restricted(&rest, (n - 1) as u32);
            let top = &rep.levels[i_h];
            for s in rest.vertices() {
                for t in rest.vertices() {
                    if s == t {
                        continue;
                    }
                    let m = hr.hop_of(s, t);
                    let c = top.cost(s, t);
                    if m != u32::MAX && (m as u64) <= pre.schedule.budget(i_h) as u64 {
                        assert_eq!(c.weight, hr.weight.get(s, t), "s={s} t={t}");
                        assert_eq!(c.hop, m, "min hop s={s} t={t}");
                    }
                    if !c.is_inf() {
                        // weak soundness: a real walk avoiding d
                        let seq = extract(top.path(s, t).unwrap()).unwrap().vertices;
                        assert!(seq.iter().all(|v| rest.contains(*v)));
                        assert!(c.weight >= hr.weight.get(s, t));
                    }
                }
            }
        }
    }

    #[test]
    fn johnson_matrix_identity_and_star() {
        let g = Graph::from_edges(3, &[(0, 2, 1.0), (2, 1, 1.0)]).unwrap();
        let view = g.view();
        // base: vertices 0 and 1 only, no edges between them
        let mut dist = Matrix::filled(3, f64::INFINITY);
        dist.set(0, 0, 0.0);
        dist.set(1, 1, 0.0);
        let mut covered = VertexSet::from_iter(3, [0, 1]);
        johnson_reinsert_matrix(&mut dist, &mut covered, &[], &view).unwrap();
        assert!(dist.get(0, 1).is_infinite());
        johnson_reinsert_matrix(&mut dist, &mut covered, &[2], &view).unwrap();
        assert_eq!(dist.get(0, 1), 2.0);
        assert_eq!(dist.get(0, 2), 1.0);
        assert_eq!(dist.get(2, 1), 1.0);
        assert!(matches!(
            johnson_reinsert_matrix(&mut dist, &mut covered, &[2], &view),
            Err(DeleteError::AlreadyCovered(2))
        ));
    }

    #[test]
    fn johnson_matrix_restores_exactness() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..10 {
            let n = 20;
            let g = random_graph(n, 0.2, 9, &mut rng);
            let mut removed = VertexSet::new(n);
            while removed.len() < 5 {
                removed.insert(rng.gen_range(0..n));
            }
            let mut dist = oracle_on_without(&g, &removed);
            let mut covered = VertexSet::from_iter(n, (0..n).filter(|&v| !removed.contains(v)));
            let add: Vec<VertexId> = removed.iter().collect();
            johnson_reinsert_matrix(&mut dist, &mut covered, &add, &g.view()).unwrap();
            assert_eq!(dist, oracle::apsp(&g.view()));
        }
    }

    #[test]
    fn johnson_collection_restores_lex_exactness() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let n = 16;
            let g = random_graph(n, 0.25, 6, &mut rng);
            let mut removed = VertexSet::new(n);
            while removed.len() < 4 {
                removed.insert(rng.gen_range(0..n));
            }
            // base collection: exact minimal-hop paths on the remainder
            let rest = g.induced_without(removed.clone());
            let hr = oracle::hop_restricted(&rest, (n - 1) as u32);
            let mut coll = LevelPaths::with_diagonal(n, rest.vertices());
            for s in rest.vertices() {
                for t in rest.vertices() {
                    if s == t || hr.weight.get(s, t).is_infinite() {
                        continue;
                    }
                    let path = hr.path(s, t).unwrap();
                    coll.set(
                        s,
                        t,
                        Cost::new(hr.weight.get(s, t), hr.hop_of(s, t)),
                        Some(PathNode::explicit(path, hr.weight.get(s, t))),
                    );
                }
            }
            let mut active = VertexSet::from_iter(n, rest.vertices());
            let add: Vec<VertexId> = removed.iter().collect();
            johnson_reinsert_collection(&mut coll, &mut active, &add, &g.view()).unwrap();
            let full = oracle::hop_restricted(&g.view(), (n - 1) as u32);
            for s in 0..n {
                for t in 0..n {
                    if s == t {
                        continue;
                    }
                    assert_eq!(coll.cost(s, t).weight, full.weight.get(s, t));
                    if !coll.cost(s, t).is_inf() {
                        assert_eq!(coll.cost(s, t).hop, full.hop_of(s, t), "hop {s}->{t}");
                        // materialized path re-sums to the stored weight
                        let seq = extract(coll.path(s, t).unwrap()).unwrap().vertices;
                        let mut w = 0.0;
                        for win in seq.windows(2) {
                            w += g
                                .view()
                                .out_edges(win[0])
                                .find(|(x, _)| *x == win[1])
                                .map(|(_, ew)| ew)
                                .unwrap();
                        }
                        assert_eq!(w, coll.cost(s, t).weight);
                    }
                }
            }
        }
    }

    fn oracle_collection(g: &Graph, b: u32) -> LevelPaths {
        let v = g.view();
        let hr = oracle::hop_restricted(&v, b);
        let n = g.n_slots();
        let mut coll = LevelPaths::with_diagonal(n, v.vertices());
        for s in v.vertices() {
            for t in v.vertices() {
                if s == t || hr.weight.get(s, t).is_infinite() {
                    continue;
                }
                let path = hr.path(s, t).unwrap();
                coll.set(
                    s,
                    t,
                    Cost::new(hr.weight.get(s, t), hr.hop_of(s, t)),
                    Some(PathNode::explicit(path, hr.weight.get(s, t))),
                );
            }
        }
        coll
    }

    #[test]
    fn extend_identity_when_input_exact() {
        let mut rng = StdRng::seed_from_u64(14);
        let g = random_graph(15, 0.25, 8, &mut rng);
        let coll = oracle_collection(&g, 14);
        let alive: Vec<_> = g.view().vertices().collect();
        let out = extend_distances(&coll, 15.0, &alive).unwrap();
        assert_eq!(out, oracle::apsp(&g.view()));
    }

    #[test]
    fn extend_path_graph() {
        let edges: Vec<_> = (0..19).map(|i| (i, i + 1, 1.0)).collect();
        let g = Graph::from_edges(20, &edges).unwrap();
        let coll = oracle_collection(&g, 5);
        let alive: Vec<_> = (0..20).collect();
        let out = extend_distances(&coll, 5.0, &alive).unwrap();
        assert_eq!(out.get(0, 19), 19.0);
        assert_eq!(out, oracle::apsp(&g.view()));
    }

    #[test]
    fn extend_matches_oracle_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(15);
        for _ in 0..15 {
            let n = 25;
            let g = random_graph(n, 0.15, 9, &mut rng);
            let h = 6.0f64;
            let coll = oracle_collection(&g, h.ceil() as u32);
            let alive: Vec<_> = (0..n).collect();
            let out = extend_distances(&coll, h, &alive).unwrap();
            assert_eq!(out, oracle::apsp(&g.view()));
        }
    }

    #[test]
    fn ack_empty_centers_all_bottom() {
        let g = Arc::new(cycle5());
        let store = ack_preprocess(&g, &VertexSet::new(5), 4.0, &VertexSet::new(5));
        let coll = ack_delete(&store, &VertexSet::new(5));
        for s in 0..5 {
            for t in 0..5 {
                if s != t {
                    assert!(coll.cost(s, t).is_inf());
                }
            }
        }
    }

    #[test]
    fn ack_single_center_glues_bounded_runs() {
        let mut rng = StdRng::seed_from_u64(16);
        let g = Arc::new(random_graph(12, 0.3, 7, &mut rng));
        let centers = VertexSet::from_iter(12, [4]);
        let store = ack_preprocess(&g, &centers, 4.0, &VertexSet::new(12));
        let coll = ack_delete(&store, &VertexSet::new(12));
        let v = g.view();
        let fwd = bounded_bf(&v, 4, store.budget, vec![None; 12], false);
        let bwd = bounded_bf(&v.reversed(), 4, store.budget, vec![None; 12], false);
        for s in 0..12 {
            for t in 0..12 {
                if s == t {
                    continue;
                }
                let expect = bwd.cost(s).then(fwd.cost(t));
                assert_eq!(coll.cost(s, t).weight, expect.weight);
            }
        }
    }

    #[test]
    fn ack_contract_against_through_oracle() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..8 {
            let n = 18;
            let g = Arc::new(random_graph(n, 0.2, 9, &mut rng));
            let mut centers = VertexSet::new(n);
            while centers.len() < 4 {
                centers.insert(rng.gen_range(0..n));
            }
            let store = ack_preprocess(&g, &centers, 5.0, &VertexSet::new(n));
            let mut d = VertexSet::new(n);
            while d.len() < 2 {
                d.insert(rng.gen_range(0..n));
            }
            let coll = ack_delete(&store, &d);
            let rest = g.induced_without(d.clone());
            let cs: Vec<VertexId> = centers.iter().filter(|c| !d.contains(*c)).collect();
            let through = oracle::through_restricted(&rest, &cs, store.budget);
            for s in rest.vertices() {
                for t in rest.vertices() {
                    if s == t {
                        continue;
                    }
                    // contract: at most the best bounded through-center path,
                    // and realizable in the graph minus d
                    assert!(coll.cost(s, t).weight <= through.get(s, t));
                    if let Some(p) = coll.path(s, t) {
                        let seq = extract(p).unwrap().vertices;
                        assert!(seq.iter().all(|x| rest.contains(*x)));
                        assert!(seq.iter().any(|x| cs.contains(x)));
                    }
                }
            }
        }
    }

    #[test]
    fn full_delete_cycle_row() {
        let g = cycle5();
        let pre = det_preprocessing(&g, 50, 8.0, StoreBackend::Explicit, None).unwrap();
        let d = VertexSet::from_iter(5, [2]);
        let (m, _) = full_delete(&pre, &g, &d, None).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert!(m.get(0, 2).is_infinite());
        assert!(m.get(0, 3).is_infinite());
        assert!(m.get(0, 4).is_infinite());
    }

    #[test]
    fn full_delete_empty_d_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(18);
        let g = random_graph(20, 0.2, 9, &mut rng);
        let n = 20u64;
        for backend in [StoreBackend::Explicit, StoreBackend::Hierarchical] {
            let pre = det_preprocessing(&g, 2 * n * n, 4.0, backend, None).unwrap();
            let (m, _) = full_delete(&pre, &g, &VertexSet::new(20), None).unwrap();
            assert_eq!(m, oracle::apsp(&g.view()));
        }
    }

    #[test]
    fn full_delete_random_trials_all_single_modes() {
        let mut rng = StdRng::seed_from_u64(19);
        for trial in 0..20 {
            let n = 18;
            let g = random_graph(n, if trial % 2 == 0 { 0.15 } else { 0.3 }, 9, &mut rng);
            let nn = n as u64;
            let mut d = VertexSet::new(n);
            for _ in 0..rng.gen_range(0..=3) {
                d.insert(rng.gen_range(0..n));
            }
            let expect = oracle_on_without(&g, &d);

            for backend in [StoreBackend::Explicit, StoreBackend::Hierarchical] {
                let pre = det_preprocessing(&g, 2 * nn * nn, 4.0, backend, None).unwrap();
                let (m, _) = full_delete(&pre, &g, &d, None).unwrap();
                assert_eq!(m, expect, "backend {backend:?} trial {trial}");
            }

            // fast mode: smaller tau plus the center structure
            let pre =
                det_preprocessing(&g, 2 * nn * nn, 4.0, StoreBackend::Explicit, None).unwrap();
            let ga = Arc::new(g.clone());
            let store = ack_preprocess(&ga, &pre.table.congested, 4.0, &VertexSet::new(n));
            let (m, _) = full_delete(&pre, &g, &d, Some((&store, &d))).unwrap();
            assert_eq!(m, expect, "fast trial {trial}");
        }
    }

    #[test]
    fn full_delete_layered_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(20);
        for trial in 0..10 {
            let n = 16;
            let g = random_graph(n, 0.25, 7, &mut rng);
            let (layers, leftover) = build_layered(&g, 4.0, 1.0, trial).unwrap();
            let mut d = VertexSet::new(n);
            for _ in 0..rng.gen_range(0..=3) {
                d.insert(rng.gen_range(0..n));
            }
            let baked = VertexSet::new(n);
            let inputs: Vec<LayerInput> = layers
                .iter()
                .map(|l| LayerInput {
                    pre: &l.out,
                    baked: &baked,
                })
                .collect();
            let (m, _) = full_delete_layered(&inputs, &leftover, &g, &d).unwrap();
            assert_eq!(m, oracle_on_without(&g, &d), "trial {trial}");
        }
    }
}
