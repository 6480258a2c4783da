//! Mutable directed weighted graph with vertex-alive bookkeeping and
//! read-only induced/reversed views.
//!
//! Vertex slots are never recycled: a deleted slot stays dead for the
//! lifetime of the graph so that stored paths referencing old ids stay
//! unambiguous across rebuild epochs.

use std::fmt;

use thiserror::Error;

pub type VertexId = usize;
pub type Weight = f64;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vertex {0} is not alive")]
    DeadVertex(VertexId),
    #[error("vertex {0} is out of range")]
    OutOfRange(VertexId),
    #[error("negative weight {0}")]
    NegativeWeight(Weight),
    #[error("weight is not finite")]
    NonFiniteWeight,
    #[error("vertex {0} deleted twice")]
    DoubleDelete(VertexId),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Set of vertex slots backed by a bitmask.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct VertexSet {
    words: Vec<u64>,
    len: usize,
}

impl VertexSet {
    pub fn new(n_slots: usize) -> Self {
        VertexSet {
            words: vec![0; n_slots.div_ceil(64)],
            len: 0,
        }
    }

    pub fn from_iter<I: IntoIterator<Item = VertexId>>(n_slots: usize, it: I) -> Self {
        let mut s = VertexSet::new(n_slots);
        for v in it {
            s.insert(v);
        }
        s
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.words
            .get(v / 64)
            .is_some_and(|w| w & (1 << (v % 64)) != 0)
    }

    /// Inserts `v`, growing the mask if needed. Returns true if newly added.
    pub fn insert(&mut self, v: VertexId) -> bool {
        if v / 64 >= self.words.len() {
            self.words.resize(v / 64 + 1, 0);
        }
        let w = &mut self.words[v / 64];
        let bit = 1 << (v % 64);
        if *w & bit == 0 {
            *w |= bit;
            self.len += 1;
            true
        } else {
            false
        }
    }

    pub fn remove(&mut self, v: VertexId) -> bool {
        if let Some(w) = self.words.get_mut(v / 64) {
            let bit = 1 << (v % 64);
            if *w & bit != 0 {
                *w &= !bit;
                self.len -= 1;
                return true;
            }
        }
        false
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut words = self.words.clone();
        if other.words.len() > words.len() {
            words.resize(other.words.len(), 0);
        }
        for (i, w) in other.words.iter().enumerate() {
            words[i] |= w;
        }
        let len = words.iter().map(|w| w.count_ones() as usize).sum();
        VertexSet { words, len }
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + b)
                }
            })
        })
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Directed weighted graph. `in_edges` is kept as the exact transpose of
/// `out_edges` after every mutation.
#[derive(Clone, Default)]
pub struct Graph {
    alive: Vec<bool>,
    out_edges: Vec<Vec<(VertexId, Weight)>>,
    in_edges: Vec<Vec<(VertexId, Weight)>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Builds a graph with `n` vertices and the given edges, collapsing
    /// parallel edges to the minimum weight.
    pub fn from_edges(
        n: usize,
        edges: &[(VertexId, VertexId, Weight)],
    ) -> Result<Self, GraphError> {
        let mut g = Graph::new();
        for _ in 0..n {
            g.insert_vertex(&[], &[])?;
        }
        for &(u, v, w) in edges {
            g.add_edge(u, v, w)?;
        }
        Ok(g)
    }

    /// Total slots ever allocated (alive or dead).
    pub fn n_slots(&self) -> usize {
        self.alive.len()
    }

    pub fn is_alive(&self, v: VertexId) -> bool {
        self.alive.get(v).copied().unwrap_or(false)
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn alive_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.alive.len()).filter(|&v| self.alive[v])
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(|e| e.len()).sum()
    }

    fn check_endpoint(&self, v: VertexId) -> Result<(), GraphError> {
        if v >= self.alive.len() {
            return Err(GraphError::OutOfRange(v));
        }
        if !self.alive[v] {
            return Err(GraphError::DeadVertex(v));
        }
        Ok(())
    }

    fn check_weight(w: Weight) -> Result<(), GraphError> {
        if !w.is_finite() {
            return Err(GraphError::NonFiniteWeight);
        }
        if w < 0.0 {
            return Err(GraphError::NegativeWeight(w));
        }
        Ok(())
    }

    /// Adds edge u -> v; a parallel edge keeps the minimum weight.
    pub fn add_edge(&mut self, u: VertexId, v: VertexId, w: Weight) -> Result<(), GraphError> {
        self.check_endpoint(u)?;
        self.check_endpoint(v)?;
        Self::check_weight(w)?;
        if let Some(e) = self.out_edges[u].iter_mut().find(|(to, _)| *to == v) {
            if w < e.1 {
                e.1 = w;
                let back = self.in_edges[v]
                    .iter_mut()
                    .find(|(from, _)| *from == u)
                    .expect("transpose entry");
                back.1 = w;
            }
            return Ok(());
        }
        self.out_edges[u].push((v, w));
        self.in_edges[v].push((u, w));
        Ok(())
    }

    /// Allocates a fresh slot wired to the given alive neighbors.
    pub fn insert_vertex(
        &mut self,
        out_nbrs: &[(VertexId, Weight)],
        in_nbrs: &[(VertexId, Weight)],
    ) -> Result<VertexId, GraphError> {
        for &(v, w) in out_nbrs.iter().chain(in_nbrs) {
            self.check_endpoint(v)?;
            Self::check_weight(w)?;
        }
        let id = self.alive.len();
        self.alive.push(true);
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        for &(v, w) in out_nbrs {
            self.add_edge(id, v, w)?;
        }
        for &(u, w) in in_nbrs {
            self.add_edge(u, id, w)?;
        }
        Ok(id)
    }

    /// Kills `v` and removes its incident edges from both directions.
    pub fn delete_vertex(&mut self, v: VertexId) -> Result<(), GraphError> {
        if v >= self.alive.len() {
            return Err(GraphError::OutOfRange(v));
        }
        if !self.alive[v] {
            return Err(GraphError::DoubleDelete(v));
        }
        self.alive[v] = false;
        for (to, _) in std::mem::take(&mut self.out_edges[v]) {
            self.in_edges[to].retain(|(from, _)| *from != v);
        }
        for (from, _) in std::mem::take(&mut self.in_edges[v]) {
            self.out_edges[from].retain(|(to, _)| *to != v);
        }
        Ok(())
    }

    /// Full view of the graph (only dead slots hidden).
    pub fn view(&self) -> GraphView<'_> {
        GraphView {
            graph: self,
            removed: None,
            reversed: false,
        }
    }

    /// View with `removed` and their incident edges invisible.
    pub fn induced_without(&self, removed: VertexSet) -> GraphView<'_> {
        GraphView {
            graph: self,
            removed: Some(removed),
            reversed: false,
        }
    }

    /// Checks that `in_edges` is the exact transpose of `out_edges` and that
    /// all endpoints are alive. Used by tests after mutation sequences.
    pub fn check_transpose(&self) -> bool {
        let mut fwd: Vec<(VertexId, VertexId, u64)> = Vec::new();
        let mut bwd: Vec<(VertexId, VertexId, u64)> = Vec::new();
        for u in 0..self.alive.len() {
            for &(v, w) in &self.out_edges[u] {
                if !self.alive[u] || !self.alive[v] {
                    return false;
                }
                fwd.push((u, v, w.to_bits()));
            }
            for &(p, w) in &self.in_edges[u] {
                bwd.push((p, u, w.to_bits()));
            }
        }
        fwd.sort_unstable();
        bwd.sort_unstable();
        fwd == bwd
    }
}

/// Read-only view of a graph: members of `removed` and non-alive slots are
/// invisible; `reversed` flips every edge.
#[derive(Clone)]
pub struct GraphView<'a> {
    graph: &'a Graph,
    removed: Option<VertexSet>,
    reversed: bool,
}

impl<'a> GraphView<'a> {
    pub fn n_slots(&self) -> usize {
        self.graph.n_slots()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.graph.is_alive(v) && !self.removed.as_ref().is_some_and(|r| r.contains(v))
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.n_slots()).filter(move |&v| self.contains(v))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices().count()
    }

    pub fn edge_count(&self) -> usize {
        self.vertices().map(|v| self.out_edges(v).count()).sum()
    }

    /// Outgoing edges of `v` in the view (empty if `v` is not visible).
    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = (VertexId, Weight)> + '_ {
        let visible = self.contains(v);
        let list = if self.reversed {
            &self.graph.in_edges[v]
        } else {
            &self.graph.out_edges[v]
        };
        list.iter()
            .filter(move |(to, _)| visible && self.contains(*to))
            .copied()
    }

    /// View with every edge direction flipped; an involution.
    pub fn reversed(&self) -> GraphView<'a> {
        GraphView {
            graph: self.graph,
            removed: self.removed.clone(),
            reversed: !self.reversed,
        }
    }

    /// Composes removals: the result hides `removed` on top of this view.
    pub fn without(&self, removed: &VertexSet) -> GraphView<'a> {
        let merged = match &self.removed {
            Some(r) => r.union(removed),
            None => removed.clone(),
        };
        GraphView {
            graph: self.graph,
            removed: Some(merged),
            reversed: self.reversed,
        }
    }

    /// True when every visible edge has weight exactly 1.
    pub fn is_unit_weight(&self) -> bool {
        self.vertices()
            .all(|v| self.out_edges(v).all(|(_, w)| w == 1.0))
    }
}

/// Parses the text format: first line `n m`, then m lines `u v w`.
pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (ln, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let mut it = header.split_whitespace();
    let parse_usize = |tok: Option<&str>, line: usize, what: &str| -> Result<usize, GraphError> {
        tok.ok_or_else(|| GraphError::Parse {
            line,
            msg: format!("missing {what}"),
        })?
        .parse()
        .map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad {what}"),
        })
    };
    let n = parse_usize(it.next(), ln + 1, "vertex count")?;
    let m = parse_usize(it.next(), ln + 1, "edge count")?;
    let mut g = Graph::new();
    for _ in 0..n {
        g.insert_vertex(&[], &[]).unwrap();
    }
    let mut seen = 0;
    for (ln, line) in lines {
        if seen == m {
            return Err(GraphError::Parse {
                line: ln + 1,
                msg: "more edges than declared".into(),
            });
        }
        let mut it = line.split_whitespace();
        let u = parse_usize(it.next(), ln + 1, "source id")?;
        let v = parse_usize(it.next(), ln + 1, "target id")?;
        let w: Weight = it
            .next()
            .ok_or_else(|| GraphError::Parse {
                line: ln + 1,
                msg: "missing weight".into(),
            })?
            .parse()
            .map_err(|_| GraphError::Parse {
                line: ln + 1,
                msg: "bad weight".into(),
            })?;
        if u >= n || v >= n {
            return Err(GraphError::Parse {
                line: ln + 1,
                msg: format!("vertex id out of range (n = {n})"),
            });
        }
        g.add_edge(u, v, w).map_err(|e| GraphError::Parse {
            line: ln + 1,
            msg: e.to_string(),
        })?;
        seen += 1;
    }
    if seen != m {
        return Err(GraphError::Parse {
            line: 0,
            msg: format!("declared {m} edges, found {seen}"),
        });
    }
    Ok(g)
}
