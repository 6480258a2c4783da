//! Brute-force ground truth used by the test suites: exact APSP, hop
//! restricted distances, and through-set restricted distances.
//!
//! Nothing in here may depend on the engine modules; the engine is verified
//! against this code, so it must stay an independent implementation path.

use std::collections::VecDeque;

use crate::graph::{GraphView, VertexId, Weight};

pub const INF: Weight = f64::INFINITY;

/// Dense slot-indexed matrix of weights (`INF` = unreachable).
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub d: Vec<Weight>,
}

impl Matrix {
    pub fn filled(n: usize, w: Weight) -> Self {
        Matrix {
            n,
            d: vec![w; n * n],
        }
    }

    pub fn get(&self, s: VertexId, t: VertexId) -> Weight {
        self.d[s * self.n + t]
    }

    pub fn set(&mut self, s: VertexId, t: VertexId, w: Weight) {
        self.d[s * self.n + t] = w;
    }
}

/// Exact all-pairs distances via a per-source label-correcting search.
pub fn apsp(g: &GraphView) -> Matrix {
    let n = g.n_slots();
    let mut m = Matrix::filled(n, INF);
    for s in g.vertices() {
        let dist = sssp_label_correcting(g, s);
        for (t, w) in dist.iter().enumerate() {
            m.set(s, t, *w);
        }
    }
    m
}

fn sssp_label_correcting(g: &GraphView, s: VertexId) -> Vec<Weight> {
    let n = g.n_slots();
    let mut dist = vec![INF; n];
    let mut queued = vec![false; n];
    let mut queue = VecDeque::new();
    dist[s] = 0.0;
    queue.push_back(s);
    queued[s] = true;
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        let du = dist[u];
        for (v, w) in g.out_edges(u) {
            if du + w < dist[v] {
                dist[v] = du + w;
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Independent n^3 relaxation used to cross-check `apsp` in tests.
pub fn apsp_triple_loop(g: &GraphView) -> Matrix {
    let n = g.n_slots();
    let mut m = Matrix::filled(n, INF);
    for v in g.vertices() {
        m.set(v, v, 0.0);
        for (u, w) in g.out_edges(v) {
            if w < m.get(v, u) {
                m.set(v, u, w);
            }
        }
    }
    for k in 0..n {
        for s in 0..n {
            let sk = m.get(s, k);
            if sk == INF {
                continue;
            }
            for t in 0..n {
                let cand = sk + m.get(k, t);
                if cand < m.get(s, t) {
                    m.set(s, t, cand);
                }
            }
        }
    }
    m
}

/// Result of the hop-restricted DP: weights, and the minimum hop count among
/// the minimum-weight paths of at most `b` edges.
#[derive(Clone)]
pub struct HopRestricted {
    pub weight: Matrix,
    pub hop: Vec<u32>,
    parent: Vec<Option<VertexId>>,
    n: usize,
}

impl HopRestricted {
    pub fn hop_of(&self, s: VertexId, t: VertexId) -> u32 {
        self.hop[s * self.n + t]
    }

    /// Reconstructs one minimum-weight minimum-hop path s -> t.
    pub fn path(&self, s: VertexId, t: VertexId) -> Option<Vec<VertexId>> {
        if self.weight.get(s, t) == INF {
            return None;
        }
        let mut seq = vec![t];
        let mut cur = t;
        while cur != s {
            cur = self.parent[s * self.n + cur]?;
            seq.push(cur);
        }
        seq.reverse();
        Some(seq)
    }
}

/// DP over at most `b` edge relaxations; ties on weight break to fewer hops.
pub fn hop_restricted(g: &GraphView, b: u32) -> HopRestricted {
    let n = g.n_slots();
    let mut weight = Matrix::filled(n, INF);
    let mut hop = vec![u32::MAX; n * n];
    let mut parent = vec![None; n * n];
    for s in g.vertices() {
        weight.set(s, s, 0.0);
        hop[s * n + s] = 0;
        let mut prev_w = vec![INF; n];
        let mut prev_h = vec![u32::MAX; n];
        prev_w[s] = 0.0;
        prev_h[s] = 0;
        for _ in 0..b {
            let mut next_w = prev_w.clone();
            let mut next_h = prev_h.clone();
            let mut changed = false;
            for u in g.vertices() {
                if prev_w[u] == INF {
                    continue;
                }
                for (v, w) in g.out_edges(u) {
                    let cw = prev_w[u] + w;
                    let ch = prev_h[u] + 1;
                    if cw < next_w[v] || (cw == next_w[v] && ch < next_h[v]) {
                        next_w[v] = cw;
                        next_h[v] = ch;
                        parent[s * n + v] = Some(u);
                        changed = true;
                    }
                }
            }
            prev_w = next_w;
            prev_h = next_h;
            if !changed {
                break;
            }
        }
        for t in 0..n {
            if t != s {
                weight.set(s, t, prev_w[t]);
                hop[s * n + t] = prev_h[t];
            }
        }
    }
    HopRestricted {
        weight,
        hop,
        parent,
        n,
    }
}

/// Shortest distances forced through a vertex of `centers`, both halves hop
/// restricted to `b` (the engine's gluing convention: total hop up to 2b).
pub fn through_restricted(g: &GraphView, centers: &[VertexId], b: u32) -> Matrix {
    let n = g.n_slots();
    let hr = hop_restricted(g, b);
    let mut m = Matrix::filled(n, INF);
    for s in 0..n {
        for t in 0..n {
            let mut best = INF;
            for &c in centers {
                let w = hr.weight.get(s, c) + hr.weight.get(c, t);
                if w < best {
                    best = w;
                }
            }
            m.set(s, t, best);
        }
    }
    m
}

/// All minimum-weight simple paths from `s` to `t`, for small graphs only.
/// Used to decide which pairs qualify for the phase invariant checks.
pub fn enumerate_min_weight_paths(
    g: &GraphView,
    s: VertexId,
    t: VertexId,
    exact: &Matrix,
) -> Vec<Vec<VertexId>> {
    let dist = exact.get(s, t);
    if dist == INF {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut stack = vec![s];
    let mut on_path = vec![false; g.n_slots()];
    on_path[s] = true;
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        g: &GraphView,
        t: VertexId,
        exact: &Matrix,
        dist: Weight,
        acc: Weight,
        stack: &mut Vec<VertexId>,
        on_path: &mut Vec<bool>,
        out: &mut Vec<Vec<VertexId>>,
    ) {
        let u = *stack.last().unwrap();
        if u == t && acc == dist {
            out.push(stack.clone());
            // keep exploring: t may re-appear only on non-simple paths, which
            // we skip anyway
        }
        for (v, w) in g.out_edges(u) {
            if on_path[v] {
                continue;
            }
            let nw = acc + w;
            // prune: cannot complete to a minimum-weight path
            if exact.get(v, t) == INF || nw + exact.get(v, t) > dist {
                continue;
            }
            stack.push(v);
            on_path[v] = true;
            dfs(g, t, exact, dist, nw, stack, on_path, out);
            stack.pop();
            on_path[v] = false;
        }
    }
    dfs(g, t, exact, dist, 0.0, &mut stack, &mut on_path, &mut out);
    out
}
