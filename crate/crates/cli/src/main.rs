//! Command-line driver: load a graph, replay an update script, query,
//! verify against the brute-force oracle, and emit benchmark statistics.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dynapsp_core::engine::{Engine, EngineConfig, Mode, UpdateOp};
use dynapsp_core::oracle;
use dynapsp_core::{parse_graph, Graph, VertexId, Weight};

#[derive(Parser)]
#[command(name = "dynapsp", about = "Fully dynamic all-pairs shortest paths")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay an update script, printing query and dump output.
    Run(CommonArgs),
    /// Replay a script and check every update against the oracle.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Test hook: corrupt one matrix entry to exercise the failure path.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Replay a script, timing each update; optionally compare against full
    /// static recomputation and write per-update statistics.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Also time a full static recomputation per update.
        #[arg(long)]
        compare_static: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Graph file: first line `n m`, then m lines `u v w`.
    #[arg(long)]
    graph: PathBuf,
    /// Update script: `del <v>` | `ins <v> <nout> <nin>` (+ edge lines) |
    /// `query <s> <t>` | `dump`.
    #[arg(long)]
    ops: PathBuf,
    #[arg(long, default_value = "det")]
    mode: Mode,
    /// Hop target override.
    #[arg(long)]
    h: Option<f64>,
    /// Congestion threshold override.
    #[arg(long)]
    tau: Option<u64>,
    /// Epoch length override.
    #[arg(long)]
    delta: Option<u64>,
    /// Center-structure rebuild cadence override (fast mode).
    #[arg(long)]
    delta_inner: Option<u64>,
    /// Constant in the randomized layer thresholds.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Background (sliced) rebuild.
    #[arg(long)]
    sliced: bool,
    /// Force the unweighted breadth-first fast path.
    #[arg(long)]
    unweighted: bool,
    /// Write one JSON line of statistics per update.
    #[arg(long)]
    stats: Option<PathBuf>,
}

enum ScriptOp {
    Del(VertexId),
    Ins {
        v: VertexId,
        out: Vec<(VertexId, Weight)>,
        in_: Vec<(VertexId, Weight)>,
    },
    Query(VertexId, VertexId),
    Dump,
}

struct InputError {
    line: usize,
    msg: String,
}

fn parse_ops(text: &str) -> Result<Vec<(usize, ScriptOp)>, InputError> {
    let mut out = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let parse_id = |tok: Option<&str>, line: usize, what: &str| -> Result<usize, InputError> {
        tok.ok_or(InputError {
            line,
            msg: format!("missing {what}"),
        })?
        .parse()
        .map_err(|_| InputError {
            line,
            msg: format!("bad {what}"),
        })
    };
    while let Some((ln, line)) = lines.next() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("del") => out.push((ln, ScriptOp::Del(parse_id(it.next(), ln, "vertex id")?))),
            Some("ins") => {
                let v = parse_id(it.next(), ln, "vertex id")?;
                let nout = parse_id(it.next(), ln, "out-degree")?;
                let nin = parse_id(it.next(), ln, "in-degree")?;
                let mut read_edges = |count: usize| -> Result<Vec<(VertexId, Weight)>, InputError> {
                    let mut edges = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (eln, eline) = lines.next().ok_or(InputError {
                            line: ln,
                            msg: "edge lines missing after ins".into(),
                        })?;
                        let mut eit = eline.split_whitespace();
                        let u = parse_id(eit.next(), eln, "edge endpoint")?;
                        let w: Weight = eit
                            .next()
                            .ok_or(InputError {
                                line: eln,
                                msg: "missing edge weight".into(),
                            })?
                            .parse()
                            .map_err(|_| InputError {
                                line: eln,
                                msg: "bad edge weight".into(),
                            })?;
                        edges.push((u, w));
                    }
                    Ok(edges)
                };
                let out_edges = read_edges(nout)?;
                let in_edges = read_edges(nin)?;
                out.push((
                    ln,
                    ScriptOp::Ins {
                        v,
                        out: out_edges,
                        in_: in_edges,
                    },
                ));
            }
            Some("query") => {
                let s = parse_id(it.next(), ln, "source id")?;
                let t = parse_id(it.next(), ln, "target id")?;
                out.push((ln, ScriptOp::Query(s, t)));
            }
            Some("dump") => out.push((ln, ScriptOp::Dump)),
            Some(other) => {
                return Err(InputError {
                    line: ln,
                    msg: format!("unknown command '{other}'"),
                })
            }
            None => {}
        }
    }
    Ok(out)
}

fn fmt_weight(w: Weight) -> String {
    if w.is_infinite() {
        "inf".into()
    } else if w.fract() == 0.0 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

fn op_label(op: &ScriptOp) -> String {
    match op {
        ScriptOp::Del(v) => format!("del {v}"),
        ScriptOp::Ins { v, out, in_ } => format!("ins {v} {} {}", out.len(), in_.len()),
        ScriptOp::Query(s, t) => format!("query {s} {t}"),
        ScriptOp::Dump => "dump".into(),
    }
}

fn dump_matrix(engine: &Engine) -> String {
    let ids = engine.alive_vertices();
    let m = engine.matrix();
    let mut s = String::new();
    for &a in &ids {
        let row: Vec<String> = ids.iter().map(|&b| fmt_weight(m.get(a, b))).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

struct Driver {
    engine: Engine,
    mode: Mode,
    seed: u64,
    stats_out: Option<fs::File>,
    update_index: usize,
}

impl Driver {
    fn emit_stats(&mut self, op: &ScriptOp, time_ms: f64) -> anyhow::Result<()> {
        if let Some(f) = self.stats_out.as_mut() {
            let stats = self.engine.stats();
            let line = serde_json::json!({
                "update_index": self.update_index,
                "op": op_label(op),
                "time_ms": time_ms,
                "phi": stats.phi,
                "c_size": stats.c_size,
                "mode": self.mode.as_str(),
                "seed": self.seed,
            });
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Applies one script op. Returns the update wall time when the op mutated
/// the graph, or an input-error message.
fn apply_op(
    driver: &mut Driver,
    ln: usize,
    op: &ScriptOp,
    print: bool,
) -> Result<Option<f64>, InputError> {
    let to_input_err = |ln: usize, e: dynapsp_core::engine::EngineError| InputError {
        line: ln,
        msg: e.to_string(),
    };
    match op {
        ScriptOp::Del(v) => {
            let t0 = Instant::now();
            driver
                .engine
                .update(UpdateOp::DeleteVertex(*v))
                .map_err(|e| to_input_err(ln, e))?;
            Ok(Some(t0.elapsed().as_secs_f64() * 1e3))
        }
        ScriptOp::Ins { v, out, in_ } => {
            if *v != driver.engine.next_vertex_id() {
                return Err(InputError {
                    line: ln,
                    msg: format!(
                        "ins names vertex {v} but the next free slot is {}",
                        driver.engine.next_vertex_id()
                    ),
                });
            }
            let t0 = Instant::now();
            driver
                .engine
                .update(UpdateOp::InsertVertex {
                    out: out.clone(),
                    in_: in_.clone(),
                })
                .map_err(|e| to_input_err(ln, e))?;
            Ok(Some(t0.elapsed().as_secs_f64() * 1e3))
        }
        ScriptOp::Query(s, t) => {
            let m = driver.engine.matrix();
            let alive = |v: usize| driver.engine.graph().is_alive(v);
            let w = if alive(*s) && alive(*t) {
                m.get(*s, *t)
            } else {
                f64::INFINITY
            };
            if print {
                println!("{}", fmt_weight(w));
            }
            Ok(None)
        }
        ScriptOp::Dump => {
            if print {
                print!("{}", dump_matrix(&driver.engine));
            }
            Ok(None)
        }
    }
}

#[allow(clippy::type_complexity)]
fn load(common: &CommonArgs) -> Result<(Graph, Vec<(usize, ScriptOp)>, EngineConfig), InputError> {
    let graph_text = fs::read_to_string(&common.graph).map_err(|e| InputError {
        line: 0,
        msg: format!("{}: {e}", common.graph.display()),
    })?;
    let graph = parse_graph(&graph_text).map_err(|e| match e {
        dynapsp_core::GraphError::Parse { line, msg } => InputError { line, msg },
        other => InputError {
            line: 0,
            msg: other.to_string(),
        },
    })?;
    let ops_text = fs::read_to_string(&common.ops).map_err(|e| InputError {
        line: 0,
        msg: format!("{}: {e}", common.ops.display()),
    })?;
    let ops = parse_ops(&ops_text)?;
    let mut cfg = EngineConfig::new(common.mode);
    cfg.h = common.h;
    cfg.tau = common.tau;
    cfg.delta = common.delta;
    cfg.delta_inner = common.delta_inner;
    cfg.c_const = common.c;
    cfg.seed = common.seed;
    cfg.sliced = common.sliced;
    if common.unweighted {
        cfg.unweighted = Some(true);
    }
    Ok((graph, ops, cfg))
}

fn make_driver(common: &CommonArgs) -> Result<(Driver, Vec<(usize, ScriptOp)>), InputError> {
    let (graph, ops, cfg) = load(common)?;
    let engine = Engine::new(graph, cfg).map_err(|e| InputError {
        line: 0,
        msg: e.to_string(),
    })?;
    let stats_out = match &common.stats {
        Some(p) => Some(fs::File::create(p).map_err(|e| InputError {
            line: 0,
            msg: format!("{}: {e}", p.display()),
        })?),
        None => None,
    };
    Ok((
        Driver {
            engine,
            mode: common.mode,
            seed: common.seed,
            stats_out,
            update_index: 0,
        },
        ops,
    ))
}

fn cmd_run(common: &CommonArgs) -> Result<(), InputError> {
    let (mut driver, ops) = make_driver(common)?;
    for (ln, op) in &ops {
        if let Some(ms) = apply_op(&mut driver, *ln, op, true)? {
            driver.update_index += 1;
            driver.emit_stats(op, ms).map_err(|e| InputError {
                line: 0,
                msg: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// Runs the script with per-update oracle comparison. Ok(true) = all exact.
fn cmd_verify(common: &CommonArgs, corrupt: bool) -> Result<bool, InputError> {
    let (mut driver, ops) = make_driver(common)?;
    for (ln, op) in &ops {
        if let Some(ms) = apply_op(&mut driver, *ln, op, false)? {
            driver.update_index += 1;
            driver.emit_stats(op, ms).map_err(|e| InputError {
                line: 0,
                msg: e.to_string(),
            })?;
            let expect = oracle::apsp(&driver.engine.graph().view());
            let got = driver.engine.matrix();
            for s in driver.engine.alive_vertices() {
                for t in driver.engine.alive_vertices() {
                    let mut g = got.get(s, t);
                    if corrupt && driver.update_index == 1 && s != t {
                        g += 1.0;
                    }
                    if g != expect.get(s, t) {
                        eprintln!(
                            "verification failed at update {} (line {ln}, {}): d({s},{t}) = {} expected {}",
                            driver.update_index,
                            op_label(op),
                            fmt_weight(g),
                            fmt_weight(expect.get(s, t)),
                        );
                        return Ok(false);
                    }
                }
            }
        }
    }
    println!("verified {} updates: all exact", driver.update_index);
    Ok(true)
}

fn cmd_bench(common: &CommonArgs, compare_static: bool) -> Result<(), InputError> {
    let (mut driver, ops) = make_driver(common)?;
    let mut engine_ms = Vec::new();
    let mut static_ms = Vec::new();
    for (ln, op) in &ops {
        if let Some(ms) = apply_op(&mut driver, *ln, op, false)? {
            driver.update_index += 1;
            driver.emit_stats(op, ms).map_err(|e| InputError {
                line: 0,
                msg: e.to_string(),
            })?;
            engine_ms.push(ms);
            if compare_static {
                let t0 = Instant::now();
                let m = oracle::apsp(&driver.engine.graph().view());
                static_ms.push(t0.elapsed().as_secs_f64() * 1e3);
                std::hint::black_box(&m);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "updates: {}  mode: {}  mean update: {:.3} ms",
        engine_ms.len(),
        driver.mode.as_str(),
        mean(&engine_ms)
    );
    if compare_static {
        println!("mean static recomputation: {:.3} ms", mean(&static_ms));
    }
    if let Some(report) = driver.engine.layer_report() {
        for (level, c_in, c_out, phi, tau) in report {
            println!("layer {level}: |C_in| {c_in} |C_out| {c_out} phi {phi} tau {tau}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(common) => cmd_run(common).map(|()| true),
        Cmd::Verify { common, corrupt } => cmd_verify(common, *corrupt),
        Cmd::Bench {
            common,
            compare_static,
        } => cmd_bench(common, *compare_static).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if e.line > 0 {
                eprintln!("error at line {}: {}", e.line, e.msg);
            } else {
                eprintln!("error: {}", e.msg);
            }
            ExitCode::from(2)
        }
    }
}
