//! The fully dynamic facade: epoch management, pending-insertion buffering,
//! per-mode parameter schedules, and the rebuild scheduler (synchronous or
//! sliced against a frozen snapshot).
//!
//! Deletions join the current epoch's batch; insertions are buffered and
//! replayed onto the exact matrix after every update. Every `delta` updates
//! the decremental structures are rebuilt, either in one synchronous call or
//! activated from a background build started one epoch earlier (in which
//! case the batch carries up to two epochs of deletions).

use std::sync::Arc;

use thiserror::Error;

use crate::delete::{
    ack_preprocess, full_delete, full_delete_layered, johnson_reinsert_matrix, AckStore,
    DeleteError, DeleteStats, LayerInput,
};
use crate::graph::{Graph, GraphError, VertexId, VertexSet, Weight};
use crate::oracle::Matrix;
use crate::preprocess::{
    rand_cadence, rand_tau, DetBuilder, LayeredBuilder, PreprocError, PreprocOutput, RandLayer,
    RandLevelConfig, StoreBackend,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    /// Plain deterministic structure.
    Det,
    /// Deterministic structure plus the through-center structure.
    Fast,
    /// Deterministic structure over hierarchical path stores.
    Space,
    /// Layered randomized structure.
    Rand,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Det => "det",
            Mode::Fast => "fast",
            Mode::Space => "space",
            Mode::Rand => "rand",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "det" => Ok(Mode::Det),
            "fast" => Ok(Mode::Fast),
            "space" => Ok(Mode::Space),
            "rand" => Ok(Mode::Rand),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Preproc(#[from] PreprocError),
    #[error(transparent)]
    Delete(#[from] DeleteError),
}

/// Concrete parameters for one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedParams {
    pub h: f64,
    pub tau: u64,
    pub delta: u64,
    /// Rebuild cadence of the through-center structure (fast mode).
    pub delta_inner: u64,
}

/// Default parameter schedule per mode for an n-vertex graph. Logarithms are
/// natural and clamped below by 1; everything else clamps to h in [1, n],
/// tau >= 2n^2, delta >= 1, delta_inner in [1, delta].
pub fn configure(n: usize, mode: Mode) -> ResolvedParams {
    let nf = n.max(1) as f64;
    let ln = nf.ln().max(1.0);
    let (h, tau, delta, delta_inner) = match mode {
        Mode::Det | Mode::Space => {
            let h = nf.powf(0.25) * ln.sqrt();
            let tau = (nf.powf(2.25) * ln.sqrt()).ceil() as u64;
            let delta = nf.sqrt().ceil() as u64;
            (h, tau, delta, delta)
        }
        Mode::Fast => {
            let h = nf.powf(2.0 / 7.0) * ln.powf(6.0 / 7.0);
            let ln_h = h.max(1.0).ln().max(1.0);
            let delta_real = nf.sqrt() * h.powf(0.25) / (ln * ln_h).powf(0.25);
            let tau_real = nf.powf(7.0 / 3.0) * h.powf(2.0 / 3.0) * (ln * ln_h).powf(1.0 / 3.0)
                / delta_real.powf(2.0 / 3.0);
            let inner = (nf.powi(3) * ln_h / (tau_real * ln)).sqrt();
            (
                h,
                tau_real.ceil() as u64,
                delta_real.ceil() as u64,
                inner.ceil() as u64,
            )
        }
        Mode::Rand => {
            let h = (nf.powf(1.0 / 3.0) * ln * ln).ceil();
            (
                h,
                rand_tau(n, 0, 1.0),
                rand_cadence(n, 0),
                rand_cadence(n, 0),
            )
        }
    };
    let h = h.clamp(1.0, nf);
    let tau = tau.max(2 * (n as u64) * (n as u64)).max(2);
    let delta = delta.max(1);
    let delta_inner = delta_inner.clamp(1, delta);
    ResolvedParams {
        h,
        tau,
        delta,
        delta_inner,
    }
}

/// Engine configuration: mode, optional overrides of the parameter schedule,
/// seed, and scheduler flavor.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub mode: Mode,
    pub h: Option<f64>,
    pub tau: Option<u64>,
    pub delta: Option<u64>,
    pub delta_inner: Option<u64>,
    /// Constant in the randomized layer thresholds.
    pub c_const: f64,
    pub seed: u64,
    /// Force or forbid the unweighted breadth-first fast path; `None`
    /// auto-detects by a weight scan.
    pub unweighted: Option<bool>,
    /// Background (sliced) rebuild instead of synchronous.
    pub sliced: bool,
}

impl EngineConfig {
    pub fn new(mode: Mode) -> Self {
        EngineConfig {
            mode,
            h: None,
            tau: None,
            delta: None,
            delta_inner: None,
            c_const: 1.0,
            seed: 0,
            unweighted: None,
            sliced: false,
        }
    }

    pub fn resolve(&self, n: usize) -> ResolvedParams {
        let mut p = configure(n, self.mode);
        if let Some(h) = self.h {
            p.h = h.max(1.0);
        }
        if let Some(tau) = self.tau {
            p.tau = tau.max(2 * (n as u64) * (n as u64)).max(2);
        }
        if let Some(d) = self.delta {
            p.delta = d.max(1);
        }
        if let Some(di) = self.delta_inner {
            p.delta_inner = di.max(1);
        }
        p.delta_inner = p.delta_inner.min(p.delta);
        p
    }
}

#[derive(Clone, Debug)]
pub enum UpdateOp {
    InsertVertex {
        out: Vec<(VertexId, Weight)>,
        in_: Vec<(VertexId, Weight)>,
    },
    DeleteVertex(VertexId),
}

/// Per-update diagnostics.
#[derive(Clone, Debug, Default)]
pub struct UpdateStats {
    /// Total congestion of the active structure(s).
    pub phi: u64,
    /// Size of the congested set handled by reinsertion or the center
    /// structure (summed over layers in the randomized mode).
    pub c_size: usize,
    pub repaired: usize,
    pub reinserted: usize,
    /// True when a new epoch was activated during this update.
    pub rebuilt: bool,
}

pub struct UpdateResult {
    pub new_vertex: Option<VertexId>,
    pub stats: UpdateStats,
}

/// Replay only needs the id: the live graph holds the edges, and edges to
/// vertices deleted in the meantime vanish with their endpoint.
#[derive(Clone, Copy)]
struct BufferedInsert {
    id: VertexId,
}

struct AckState {
    store: AckStore,
    since: u64,
}

#[allow(clippy::large_enum_variant)]
enum ModeState {
    Single {
        pre: PreprocOutput,
        ack: Option<AckState>,
    },
    Layered {
        layers: Vec<RandLayer>,
        baked: Vec<VertexSet>,
        leftover: VertexSet,
        c_resolved: f64,
    },
}

struct ActiveEpoch {
    snapshot: Arc<Graph>,
    state: ModeState,
    /// Vertices deleted from the snapshot.
    d: VertexSet,
    /// Vertices inserted since the snapshot, in insertion order.
    buffer: Vec<BufferedInsert>,
    /// 2 * delta at activation: the batch budget.
    d_budget: u64,
}

#[allow(clippy::large_enum_variant)]
enum PendingBuild {
    Single { builder: DetBuilder },
    Layered { builder: LayeredBuilder },
}

impl PendingBuild {
    fn snapshot(&self) -> Arc<Graph> {
        match self {
            PendingBuild::Single { builder } => builder.graph().clone(),
            PendingBuild::Layered { builder } => builder.graph().clone(),
        }
    }

    fn total_units(&self) -> usize {
        match self {
            PendingBuild::Single { builder } => builder.total_units(),
            PendingBuild::Layered { builder } => builder.total_units(),
        }
    }

    fn step(&mut self) -> bool {
        match self {
            PendingBuild::Single { builder } => builder.step(),
            PendingBuild::Layered { builder } => builder.step(),
        }
    }

    fn done(&self) -> bool {
        match self {
            PendingBuild::Single { builder } => builder.done(),
            PendingBuild::Layered { builder } => builder.done(),
        }
    }
}

/// The fully dynamic all-pairs shortest paths engine.
pub struct Engine {
    cfg: EngineConfig,
    live: Graph,
    active: ActiveEpoch,
    pending: Option<PendingBuild>,
    pending_units: usize,
    /// Deletions and insertions relative to the pending snapshot.
    epoch_deletes: VertexSet,
    epoch_buffer: Vec<BufferedInsert>,
    updates_in_epoch: u64,
    total_updates: u64,
    epoch_delta: u64,
    build_seq: u64,
    base_cache: Option<Matrix>,
    matrix: Matrix,
    last_delete_stats: DeleteStats,
    last_rebuilt: bool,
}

impl Engine {
    pub fn new(graph: Graph, cfg: EngineConfig) -> Result<Self, EngineError> {
        let snapshot = Arc::new(graph.clone());
        let params = cfg.resolve(graph.alive_count());
        let mut build_seq = 0;
        let state = build_state(&cfg, &snapshot, &params, &mut build_seq)?;
        let active = ActiveEpoch {
            snapshot,
            state,
            d: VertexSet::new(graph.n_slots()),
            buffer: Vec::new(),
            d_budget: 2 * params.delta,
        };
        let mut engine = Engine {
            live: graph,
            active,
            pending: None,
            pending_units: 0,
            epoch_deletes: VertexSet::new(0),
            epoch_buffer: Vec::new(),
            updates_in_epoch: 0,
            total_updates: 0,
            epoch_delta: params.delta,
            build_seq,
            base_cache: None,
            matrix: Matrix::filled(0, f64::INFINITY),
            last_delete_stats: DeleteStats::default(),
            last_rebuilt: false,
            cfg,
        };
        if engine.cfg.sliced {
            engine.start_pending()?;
        }
        engine.compute_answer()?;
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &Graph {
        &self.live
    }

    /// The current distance matrix, slot-indexed over all live vertex slots.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn alive_vertices(&self) -> Vec<VertexId> {
        self.live.alive_vertices().collect()
    }

    pub fn next_vertex_id(&self) -> VertexId {
        self.live.n_slots()
    }

    /// Per-layer report for the randomized mode:
    /// (level, |C_in|, |C_out|, phi, tau).
    #[allow(clippy::type_complexity)]
    pub fn layer_report(&self) -> Option<Vec<(usize, usize, usize, u64, u64)>> {
        match &self.active.state {
            ModeState::Layered { layers, .. } => Some(
                layers
                    .iter()
                    .map(|l| {
                        (
                            l.config.level,
                            l.config.centers.len(),
                            l.out.table.congested.len(),
                            l.out.table.phi,
                            l.config.tau,
                        )
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Applies one vertex update and refreshes the distance matrix.
    pub fn update(&mut self, op: UpdateOp) -> Result<UpdateResult, EngineError> {
        self.last_rebuilt = false;
        let mut new_vertex = None;
        match op {
            UpdateOp::DeleteVertex(v) => {
                self.live.delete_vertex(v)?;
                if let Some(pos) = self.active.buffer.iter().position(|b| b.id == v) {
                    self.active.buffer.remove(pos);
                } else {
                    self.active.d.insert(v);
                    self.base_cache = None;
                }
                if self.pending.is_some() {
                    if let Some(pos) = self.epoch_buffer.iter().position(|b| b.id == v) {
                        self.epoch_buffer.remove(pos);
                    } else {
                        self.epoch_deletes.insert(v);
                    }
                }
            }
            UpdateOp::InsertVertex { out, in_ } => {
                let id = self.live.insert_vertex(&out, &in_)?;
                new_vertex = Some(id);
                let b = BufferedInsert { id };
                self.active.buffer.push(b);
                if self.pending.is_some() {
                    self.epoch_buffer.push(b);
                }
            }
        }
        self.updates_in_epoch += 1;
        self.total_updates += 1;
        self.scheduler_step()?;
        if self.updates_in_epoch >= self.epoch_delta {
            self.rotate_epoch()?;
        }
        self.compute_answer()?;
        Ok(UpdateResult {
            new_vertex,
            stats: self.stats(),
        })
    }

    pub fn stats(&self) -> UpdateStats {
        let (phi, c_size) = match &self.active.state {
            ModeState::Single { pre, .. } => (pre.table.phi, pre.table.congested.len()),
            ModeState::Layered { layers, .. } => (
                layers.iter().map(|l| l.out.table.phi).sum(),
                layers.iter().map(|l| l.out.table.congested.len()).sum(),
            ),
        };
        UpdateStats {
            phi,
            c_size,
            repaired: self.last_delete_stats.repaired,
            reinserted: self.last_delete_stats.reinserted,
            rebuilt: self.last_rebuilt,
        }
    }

    fn derived_seed(cfg_seed: u64, seq: u64) -> u64 {
        cfg_seed.wrapping_add(seq.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn start_pending(&mut self) -> Result<(), EngineError> {
        let snapshot = Arc::new(self.live.clone());
        let params = self.cfg.resolve(snapshot.alive_count());
        let builder = match self.cfg.mode {
            Mode::Det | Mode::Fast | Mode::Space => {
                let backend = if self.cfg.mode == Mode::Space {
                    StoreBackend::Hierarchical
                } else {
                    StoreBackend::Explicit
                };
                PendingBuild::Single {
                    builder: DetBuilder::new(
                        snapshot.clone(),
                        params.tau,
                        params.h,
                        backend,
                        self.cfg.unweighted,
                    )?,
                }
            }
            Mode::Rand => PendingBuild::Layered {
                builder: LayeredBuilder::new(
                    snapshot.clone(),
                    params.h,
                    self.cfg.c_const,
                    Self::derived_seed(self.cfg.seed, self.build_seq),
                )?,
            },
        };
        self.build_seq += 1;
        self.pending_units = builder.total_units().max(1);
        self.pending = Some(builder);
        self.epoch_deletes = VertexSet::new(snapshot.n_slots());
        self.epoch_buffer = Vec::new();
        Ok(())
    }

    fn scheduler_step(&mut self) -> Result<(), EngineError> {
        // sliced background work: a proportional share of the pending build
        if let Some(p) = self.pending.as_mut() {
            let quota = self
                .pending_units
                .div_ceil(self.epoch_delta.max(1) as usize);
            for _ in 0..quota {
                if p.step() {
                    break;
                }
            }
        }
        // fast mode: periodic rebuild of the through-center structure
        let params = self.cfg.resolve(self.active.snapshot.alive_count());
        if let ModeState::Single {
            pre,
            ack: Some(ack),
        } = &mut self.active.state
        {
            ack.since += 1;
            if ack.since >= params.delta_inner {
                ack.store = ack_preprocess(
                    &self.active.snapshot,
                    &pre.table.congested,
                    params.h,
                    &self.active.d,
                );
                ack.since = 0;
                self.base_cache = None;
            }
        }
        // randomized mode: per-level cadences; rebuilding level l replaces
        // every level above it so the center sets keep forming a chain
        if let ModeState::Layered { layers, .. } = &self.active.state {
            let mut trigger = None;
            for l in layers.iter().skip(1) {
                if self
                    .total_updates
                    .is_multiple_of(l.config.rebuild_cadence.max(1))
                {
                    trigger = Some(l.config.level);
                    break;
                }
            }
            if let Some(level) = trigger {
                self.rebuild_layers_from(level)?;
            }
        }
        Ok(())
    }

    fn rebuild_layers_from(&mut self, from: usize) -> Result<(), EngineError> {
        let params = self.cfg.resolve(self.active.snapshot.alive_count());
        // current decremental graph: snapshot minus the batch so far
        let mut g = (*self.active.snapshot).clone();
        for v in self.active.d.iter() {
            g.delete_vertex(v)
                .expect("batch vertices are alive in the snapshot");
        }
        let g = Arc::new(g);
        let n = g.alive_count();
        let baked_now = self.active.d.clone();
        let seed_base = self.cfg.seed;
        let ModeState::Layered {
            layers,
            baked,
            leftover,
            c_resolved,
        } = &mut self.active.state
        else {
            return Ok(());
        };
        let top = layers.len() - 1;
        let mut changed = false;
        for level in from..=top {
            let centers = if level == 0 {
                VertexSet::from_iter(g.n_slots(), g.alive_vertices())
            } else {
                VertexSet::from_iter(
                    g.n_slots(),
                    layers[level - 1]
                        .out
                        .table
                        .congested
                        .iter()
                        .filter(|&v| g.is_alive(v)),
                )
            };
            if centers.is_empty() && layers[level].config.centers.is_empty() {
                // a layer without centers holds nothing; keep it as is
                baked[level] = baked_now.clone();
                continue;
            }
            let tau = rand_tau(n, level, *c_resolved);
            let seed = Self::derived_seed(seed_base, self.build_seq);
            self.build_seq += 1;
            let out = crate::preprocess::rand_preprocessing(&g, &centers, tau, params.h, seed)?;
            layers[level] = RandLayer {
                config: RandLevelConfig {
                    level,
                    centers,
                    tau,
                    rebuild_cadence: rand_cadence(n, level),
                    c_const: *c_resolved,
                },
                out,
            };
            baked[level] = baked_now.clone();
            changed = true;
        }
        *leftover = layers.last().unwrap().out.table.congested.clone();
        if changed {
            self.base_cache = None;
        }
        Ok(())
    }

    fn rotate_epoch(&mut self) -> Result<(), EngineError> {
        if self.cfg.sliced {
            let mut p = self
                .pending
                .take()
                .expect("sliced mode keeps a pending build");
            while !p.done() {
                p.step();
            }
            let snapshot = p.snapshot();
            let params = self.cfg.resolve(snapshot.alive_count());
            let state = match p {
                PendingBuild::Single { builder } => {
                    let pre = builder.finish();
                    let ack = if self.cfg.mode == Mode::Fast {
                        Some(AckState {
                            store: ack_preprocess(
                                &snapshot,
                                &pre.table.congested,
                                params.h,
                                &self.epoch_deletes,
                            ),
                            since: 0,
                        })
                    } else {
                        None
                    };
                    ModeState::Single { pre, ack }
                }
                PendingBuild::Layered { builder } => {
                    let c_resolved = builder.c_resolved();
                    let (layers, leftover) = builder.finish();
                    let baked = vec![VertexSet::new(snapshot.n_slots()); layers.len()];
                    ModeState::Layered {
                        layers,
                        baked,
                        leftover,
                        c_resolved,
                    }
                }
            };
            self.active = ActiveEpoch {
                snapshot,
                state,
                d: std::mem::take(&mut self.epoch_deletes),
                buffer: std::mem::take(&mut self.epoch_buffer),
                d_budget: 2 * params.delta,
            };
            self.start_pending()?;
        } else {
            let snapshot = Arc::new(self.live.clone());
            let params = self.cfg.resolve(snapshot.alive_count());
            let state = build_state(&self.cfg, &snapshot, &params, &mut self.build_seq)?;
            self.active = ActiveEpoch {
                snapshot: snapshot.clone(),
                state,
                d: VertexSet::new(snapshot.n_slots()),
                buffer: Vec::new(),
                d_budget: 2 * params.delta,
            };
        }
        self.updates_in_epoch = 0;
        self.epoch_delta = self.cfg.resolve(self.live.alive_count()).delta;
        self.base_cache = None;
        self.last_rebuilt = true;
        Ok(())
    }

    fn run_full_delete(&mut self) -> Result<Matrix, EngineError> {
        debug_assert!(self.active.d.len() as u64 <= self.active.d_budget);
        let (m, stats) = match &self.active.state {
            ModeState::Single { pre, ack } => match ack {
                Some(a) => full_delete(
                    pre,
                    &self.active.snapshot,
                    &self.active.d,
                    Some((&a.store, &self.active.d)),
                )?,
                None => full_delete(pre, &self.active.snapshot, &self.active.d, None)?,
            },
            ModeState::Layered {
                layers,
                baked,
                leftover,
                ..
            } => {
                let inputs: Vec<LayerInput> = layers
                    .iter()
                    .zip(baked.iter())
                    .map(|(l, b)| LayerInput {
                        pre: &l.out,
                        baked: b,
                    })
                    .collect();
                full_delete_layered(&inputs, leftover, &self.active.snapshot, &self.active.d)?
            }
        };
        self.last_delete_stats = stats;
        Ok(m)
    }

    fn compute_answer(&mut self) -> Result<(), EngineError> {
        let base = match &self.base_cache {
            Some(m) => m.clone(),
            None => {
                let m = self.run_full_delete()?;
                self.base_cache = Some(m.clone());
                m
            }
        };
        let ns = self.live.n_slots();
        let mut m = Matrix::filled(ns, f64::INFINITY);
        let mut covered = VertexSet::new(ns);
        for v in self.active.snapshot.alive_vertices() {
            if !self.active.d.contains(v) {
                covered.insert(v);
            }
        }
        for s in covered.iter() {
            for t in covered.iter() {
                m.set(s, t, base.get(s, t));
            }
        }
        let add: Vec<VertexId> = self.active.buffer.iter().map(|b| b.id).collect();
        johnson_reinsert_matrix(&mut m, &mut covered, &add, &self.live.view())
            .map_err(EngineError::Delete)?;
        self.matrix = m;
        Ok(())
    }
}

fn build_state(
    cfg: &EngineConfig,
    snapshot: &Arc<Graph>,
    params: &ResolvedParams,
    build_seq: &mut u64,
) -> Result<ModeState, EngineError> {
    let seed = Engine::derived_seed(cfg.seed, *build_seq);
    *build_seq += 1;
    let none = VertexSet::new(snapshot.n_slots());
    Ok(match cfg.mode {
        Mode::Det | Mode::Fast | Mode::Space => {
            let backend = if cfg.mode == Mode::Space {
                StoreBackend::Hierarchical
            } else {
                StoreBackend::Explicit
            };
            let pre = crate::preprocess::det_preprocessing(
                snapshot,
                params.tau,
                params.h,
                backend,
                cfg.unweighted,
            )?;
            let ack = if cfg.mode == Mode::Fast {
                Some(AckState {
                    store: ack_preprocess(snapshot, &pre.table.congested, params.h, &none),
                    since: 0,
                })
            } else {
                None
            };
            ModeState::Single { pre, ack }
        }
        Mode::Rand => {
            let mut builder = LayeredBuilder::new(snapshot.clone(), params.h, cfg.c_const, seed)?;
            while !builder.done() {
                builder.step();
            }
            let c_resolved = builder.c_resolved();
            let (layers, leftover) = builder.finish();
            let baked = vec![VertexSet::new(snapshot.n_slots()); layers.len()];
            ModeState::Layered {
                layers,
                baked,
                leftover,
                c_resolved,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
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

    fn assert_matches_oracle(e: &Engine, ctx: &str) {
        let expect = oracle::apsp(&e.graph().view());
        let m = e.matrix();
        for s in e.graph().alive_vertices() {
            for t in e.graph().alive_vertices() {
                assert_eq!(m.get(s, t), expect.get(s, t), "{ctx}: d({s},{t})");
            }
        }
    }

    #[test]
    fn configure_formulas() {
        let p = configure(1, Mode::Det);
        assert_eq!(p.h, 1.0);
        assert_eq!(p.delta, 1);

        let p = configure(256, Mode::Det);
        let nf = 256f64;
        let expect = (nf.powf(2.25) * nf.ln().sqrt()).ceil() as u64;
        assert_eq!(p.tau, expect);
        assert!(p.tau >= 2 * 256 * 256);

        let p = configure(100, Mode::Rand);
        let expect_h = (100f64.powf(1.0 / 3.0) * 100f64.ln() * 100f64.ln()).ceil();
        assert_eq!(p.h, expect_h.min(100.0));

        let p = configure(64, Mode::Fast);
        assert!(p.delta_inner <= p.delta);
        assert!(p.tau >= 2 * 64 * 64);
    }

    #[test]
    fn first_delete_on_cycle() {
        let mut e = Engine::new(cycle5(), EngineConfig::new(Mode::Det)).unwrap();
        e.update(UpdateOp::DeleteVertex(2)).unwrap();
        let m = e.matrix();
        assert_eq!(m.get(0, 1), 1.0);
        assert!(m.get(0, 3).is_infinite());
        assert_matches_oracle(&e, "cycle delete");
    }

    #[test]
    fn insert_then_delete_cancels() {
        let g = cycle5();
        let before = oracle::apsp(&g.view());
        let mut e = Engine::new(g, EngineConfig::new(Mode::Det)).unwrap();
        let r = e
            .update(UpdateOp::InsertVertex {
                out: vec![(0, 1.0)],
                in_: vec![(3, 1.0)],
            })
            .unwrap();
        let v = r.new_vertex.unwrap();
        assert_eq!(v, 5);
        e.update(UpdateOp::DeleteVertex(v)).unwrap();
        let m = e.matrix();
        for s in 0..5 {
            for t in 0..5 {
                assert_eq!(m.get(s, t), before.get(s, t));
            }
        }
    }

    fn mixed_ops_trial(mode: Mode, sliced: bool, seed: u64, n: usize, ops: usize) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_graph(n, 0.2, 9, &mut rng);
        let mut cfg = EngineConfig::new(mode);
        cfg.seed = seed;
        cfg.sliced = sliced;
        let mut e = Engine::new(g, cfg).unwrap();
        assert_matches_oracle(&e, "initial");
        for step in 0..ops {
            let alive: Vec<VertexId> = e.graph().alive_vertices().collect();
            let op = if !alive.is_empty() && rng.gen_bool(0.55) {
                UpdateOp::DeleteVertex(alive[rng.gen_range(0..alive.len())])
            } else {
                let mut out = Vec::new();
                let mut in_ = Vec::new();
                for &v in &alive {
                    if rng.gen_bool(0.2) {
                        out.push((v, rng.gen_range(1..=9) as Weight));
                    }
                    if rng.gen_bool(0.2) {
                        in_.push((v, rng.gen_range(1..=9) as Weight));
                    }
                }
                UpdateOp::InsertVertex { out, in_ }
            };
            e.update(op).unwrap();
            assert_matches_oracle(&e, &format!("mode {mode:?} sliced {sliced} step {step}"));
        }
    }

    #[test]
    fn mixed_updates_det_exact() {
        mixed_ops_trial(Mode::Det, false, 1, 14, 25);
    }

    #[test]
    fn mixed_updates_space_exact() {
        mixed_ops_trial(Mode::Space, false, 2, 14, 25);
    }

    #[test]
    fn mixed_updates_fast_exact() {
        mixed_ops_trial(Mode::Fast, false, 3, 14, 25);
    }

    #[test]
    fn mixed_updates_rand_exact() {
        mixed_ops_trial(Mode::Rand, false, 4, 12, 20);
    }

    #[test]
    fn mixed_updates_sliced_modes_exact() {
        mixed_ops_trial(Mode::Det, true, 5, 14, 25);
        mixed_ops_trial(Mode::Rand, true, 6, 12, 20);
    }

    #[test]
    fn sliced_matches_synchronous_matrices() {
        for mode in [Mode::Det, Mode::Space, Mode::Fast, Mode::Rand] {
            let mut rng = StdRng::seed_from_u64(7);
            let g = random_graph(12, 0.25, 6, &mut rng);
            let mut cfg_a = EngineConfig::new(mode);
            cfg_a.seed = 9;
            let mut cfg_b = cfg_a.clone();
            cfg_b.sliced = true;
            let mut ea = Engine::new(g.clone(), cfg_a).unwrap();
            let mut eb = Engine::new(g, cfg_b).unwrap();
            let mut op_rng = StdRng::seed_from_u64(8);
            for _ in 0..18 {
                let alive: Vec<VertexId> = ea.graph().alive_vertices().collect();
                let op = if !alive.is_empty() && op_rng.gen_bool(0.6) {
                    UpdateOp::DeleteVertex(alive[op_rng.gen_range(0..alive.len())])
                } else {
                    let out = alive
                        .iter()
                        .filter(|_| op_rng.gen_bool(0.3))
                        .map(|&v| (v, 2.0))
                        .collect();
                    UpdateOp::InsertVertex {
                        out,
                        in_: Vec::new(),
                    }
                };
                ea.update(op.clone()).unwrap();
                eb.update(op).unwrap();
                assert_eq!(ea.matrix().d, eb.matrix().d, "mode {mode:?}");
            }
        }
    }

    #[test]
    fn delta_one_rebuilds_every_update() {
        let mut cfg = EngineConfig::new(Mode::Det);
        cfg.delta = Some(1);
        let mut e = Engine::new(cycle5(), cfg).unwrap();
        let r = e.update(UpdateOp::DeleteVertex(1)).unwrap();
        assert!(r.stats.rebuilt);
        assert_matches_oracle(&e, "delta 1");
    }

    #[test]
    fn rand_layer_chain_after_forced_rebuild() {
        let mut rng = StdRng::seed_from_u64(10);
        let g = random_graph(12, 0.3, 5, &mut rng);
        let mut cfg = EngineConfig::new(Mode::Rand);
        cfg.seed = 11;
        let mut e = Engine::new(g, cfg).unwrap();
        for _ in 0..6 {
            let alive: Vec<VertexId> = e.graph().alive_vertices().collect();
            e.update(UpdateOp::DeleteVertex(alive[0])).unwrap();
            if let ModeState::Layered { layers, .. } = &e.active.state {
                for w in layers.windows(2) {
                    // the next layer's centers are the previous congested
                    // output, minus vertices deleted before its rebuild
                    let prev: Vec<_> = w[0].out.table.congested.iter().collect();
                    let next: Vec<_> = w[1].config.centers.iter().collect();
                    assert!(
                        next.iter().all(|v| prev.contains(v)),
                        "{next:?} vs {prev:?}"
                    );
                    for v in prev {
                        assert!(next.contains(&v) || !e.live.is_alive(v));
                    }
                }
            }
            assert_matches_oracle(&e, "rand chain");
        }
    }

    #[test]
    fn las_vegas_exact_across_seeds() {
        let mut rng = StdRng::seed_from_u64(12);
        let g = random_graph(10, 0.3, 6, &mut rng);
        for seed in 0..10 {
            let mut cfg = EngineConfig::new(Mode::Rand);
            cfg.seed = seed;
            let mut e = Engine::new(g.clone(), cfg).unwrap();
            let mut op_rng = StdRng::seed_from_u64(13);
            for _ in 0..8 {
                let alive: Vec<VertexId> = e.graph().alive_vertices().collect();
                if alive.len() <= 2 {
                    break;
                }
                let v = alive[op_rng.gen_range(0..alive.len())];
                e.update(UpdateOp::DeleteVertex(v)).unwrap();
                assert_matches_oracle(&e, &format!("seed {seed}"));
            }
        }
    }
}
