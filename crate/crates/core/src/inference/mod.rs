//! Nonparametric search for the partition that minimizes the description
//! length: agglomerative initialization followed by merge-split MCMC sweeps
//! and a final greedy descent.

mod state;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::QTable;
use crate::dl::{dl_with, Variant};
use crate::graph::{Graph, Partition};
use crate::rng::stream_rng;

pub use state::{BlockState, Move, Target};

const TIE: f64 = 1e-10;
/// Above this many blocks the greedy descent only considers neighbouring
/// blocks of a node instead of every block.
const FULL_SCAN_BLOCKS: usize = 64;

/// Inverse-temperature schedule: `beta` for the first `sampling_fraction` of
/// the sweeps, then zero temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta: f64,
    pub sampling_fraction: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            beta: 1.0,
            sampling_fraction: 0.5,
        }
    }
}

/// Block-count ladder used by the agglomerative initialization: each level
/// divides B by `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agglomeration {
    pub ratio: f64,
    pub merge_tries: usize,
    pub level_sweeps: usize,
}

impl Default for Agglomeration {
    fn default() -> Self {
        Agglomeration {
            ratio: 1.3,
            merge_tries: 10,
            level_sweeps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub seed: u64,
    pub sweeps: usize,
    pub restarts: usize,
    pub epsilon: f64,
    pub beta_schedule: BetaSchedule,
    pub agglomeration: Agglomeration,
    pub merge_probability: f64,
    pub split_probability: f64,
    /// Run restarts on the rayon pool.
    pub parallel: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            seed: 0,
            sweeps: 1000,
            restarts: 5,
            epsilon: 1.0,
            beta_schedule: BetaSchedule::default(),
            agglomeration: Agglomeration::default(),
            merge_probability: 0.1,
            split_probability: 0.1,
            parallel: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(crate::Error::Config("sweeps and restarts must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(crate::Error::Config("proposal epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub variant: Variant,
    pub best_partition: Partition,
    pub sigma_opt: f64,
    /// Running best Σ after each sweep of the winning restart, ending with
    /// the final Σ after greedy descent.
    pub trace: Vec<f64>,
    pub restart_sigmas: Vec<f64>,
}

#[derive(Serialize)]
struct InferenceJson<'a> {
    variant: Variant,
    sigma_opt: f64,
    num_blocks: usize,
    partition: serde_json::Map<String, serde_json::Value>,
    restart_sigmas: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [f64]>,
}

impl InferenceResult {
    /// JSON with the partition keyed by external node name.
    pub fn to_json(&self, g: &Graph, with_trace: bool) -> serde_json::Value {
        let partition = g
            .node_names()
            .iter()
            .zip(self.best_partition.labels())
            .map(|(name, &l)| (name.clone(), serde_json::Value::from(l)))
            .collect();
        serde_json::to_value(InferenceJson {
            variant: self.variant,
            sigma_opt: self.sigma_opt,
            num_blocks: self.best_partition.num_blocks(),
            partition,
            restart_sigmas: &self.restart_sigmas,
            trace: with_trace.then_some(&self.trace[..]),
        })
        .expect("inference result serializes")
    }
}

#[inline]
fn accept<R: Rng>(d: f64, beta: f64, rng: &mut R) -> bool {
    if beta.is_infinite() {
        if d < -TIE {
            true
        } else if d <= TIE {
            rng.random::<f64>() < 0.5
        } else {
            false
        }
    } else {
        d <= 0.0 || rng.random::<f64>() < (-beta * d).exp()
    }
}

/// Draws a destination for `node`: the block of a random neighbour `t`, then
/// `s` with probability proportional to `e_ts + ε` (the ε share spread
/// uniformly over the existing blocks and one empty block).
fn propose_target<R: Rng>(st: &BlockState, node: usize, eps: f64, rng: &mut R) -> Target {
    let b = st.num_blocks();
    let uniform = |rng: &mut R| {
        let idx = rng.random_range(0..=b);
        if idx == b {
            Target::New
        } else {
            Target::Block(st.active_blocks()[idx])
        }
    };
    let nbrs = st.graph().neighbors(node);
    if nbrs.is_empty() {
        return uniform(rng);
    }
    let j = nbrs[rng.random_range(0..nbrs.len())];
    let t = st.label(j as usize);
    let e_t = st.block_degree_sum(t) as f64;
    let eps_b = eps * b as f64;
    if rng.random::<f64>() * (e_t + eps_b) < eps_b {
        return uniform(rng);
    }
    let mut u = rng.random_range(0..st.block_degree_sum(t));
    for (&s, &x) in st.row(t) {
        if u < x {
            return Target::Block(s);
        }
        u -= x;
    }
    unreachable!("row sums equal the block degree sum")
}

/// One sweep: a proposal per node in random order, then occasional merge and
/// split proposals. Returns the number of accepted moves.
pub fn mcmc_sweep<R: Rng>(st: &mut BlockState, cfg: &InferenceConfig, beta: f64, rng: &mut R) -> usize {
    let n = st.graph().num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut accepted = 0;
    for node in order {
        let r = st.label(node);
        let to = propose_target(st, node, cfg.epsilon, rng);
        match to {
            Target::Block(s) if s == r => continue,
            Target::New if st.block_size(r) == 1 || !st.has_free_block() => continue,
            _ => {}
        }
        let mv = Move::Node {
            node: node as u32,
            to,
        };
        let d = st.delta(mv);
        if accept(d, beta, rng) {
            st.apply(mv);
            accepted += 1;
        }
    }
    if st.num_blocks() > 1 && rng.random::<f64>() < cfg.merge_probability {
        accepted += usize::from(merge_proposal(st, cfg, beta, rng));
    }
    if rng.random::<f64>() < cfg.split_probability {
        accepted += usize::from(split_proposal(st, beta, rng));
    }
    accepted
}

fn merge_proposal<R: Rng>(st: &mut BlockState, cfg: &InferenceConfig, beta: f64, rng: &mut R) -> bool {
    let n = st.graph().num_nodes();
    let node = rng.random_range(0..n);
    let r = st.label(node);
    let s = match propose_target(st, node, cfg.epsilon, rng) {
        Target::Block(s) if s != r => s,
        _ => {
            let others: Vec<u32> = st.active_blocks().iter().copied().filter(|&b| b != r).collect();
            if others.is_empty() {
                return false;
            }
            others[rng.random_range(0..others.len())]
        }
    };
    let d = st.merge_delta(r, s);
    if accept(d, beta, rng) {
        st.merge(r, s);
        true
    } else {
        false
    }
}

/// Splits a random block in two: random halves refined by two greedy passes
/// restricted to the pair, accepted or reverted as a whole.
fn split_proposal<R: Rng>(st: &mut BlockState, beta: f64, rng: &mut R) -> bool {
    let n = st.graph().num_nodes();
    let node = rng.random_range(0..n);
    let r = st.label(node);
    if st.block_size(r) < 2 {
        return false;
    }
    let Some(s) = st.peek_free_block() else {
        return false;
    };
    let members = st.members(r);
    let start = st.sigma();
    for &i in &members {
        if i as usize != node && rng.random::<bool>() {
            st.move_node(i as usize, s);
        }
    }
    if st.block_size(s) == 0 {
        return false;
    }
    for _ in 0..2 {
        for &i in &members {
            let cur = st.label(i as usize);
            let other = if cur == r { s } else { r };
            if st.block_size(cur) > 1 && st.node_delta(i as usize, other) < -TIE {
                st.move_node(i as usize, other);
            }
        }
    }
    let d = st.sigma() - start;
    if accept(d, beta, rng) {
        true
    } else {
        for &i in &members {
            if st.label(i as usize) == s {
                st.move_node(i as usize, r);
            }
        }
        st.resync();
        false
    }
}

/// Zero-temperature descent over single-node moves and block merges until
/// no move lowers Σ.
pub fn greedy_descent<R: Rng>(st: &mut BlockState, rng: &mut R) {
    let n = st.graph().num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..1000 {
        let mut improved = false;
        order.shuffle(rng);
        for &node in &order {
            let r = st.label(node);
            let mut candidates: Vec<u32> = if st.num_blocks() <= FULL_SCAN_BLOCKS {
                st.active_blocks().to_vec()
            } else {
                let mut c: Vec<u32> = st
                    .graph()
                    .neighbors(node)
                    .iter()
                    .map(|&j| st.label(j as usize))
                    .collect();
                c.sort_unstable();
                c.dedup();
                c
            };
            if st.block_size(r) > 1 {
                if let Some(f) = st.peek_free_block() {
                    candidates.push(f);
                }
            }
            let mut best = (-TIE, None);
            for s in candidates {
                if s == r {
                    continue;
                }
                let d = st.node_delta(node, s);
                if d < best.0 {
                    best = (d, Some(s));
                }
            }
            if let (_, Some(s)) = best {
                st.move_node(node, s);
                improved = true;
            }
        }
        while st.num_blocks() > 1 && st.num_blocks() <= FULL_SCAN_BLOCKS {
            let blocks = st.active_blocks().to_vec();
            let mut best = (-TIE, None);
            for (a, &r) in blocks.iter().enumerate() {
                for &s in &blocks[a + 1..] {
                    let d = st.merge_delta(r, s);
                    if d < best.0 {
                        best = (d, Some((r, s)));
                    }
                }
            }
            match best {
                (_, Some((r, s))) => {
                    st.merge(r, s);
                    improved = true;
                }
                _ => break,
            }
        }
        if !improved {
            break;
        }
    }
    st.resync();
}

/// Greedy node moves that neither empty nor create blocks, restricted to the
/// blocks of a node's neighbours.
fn fixed_b_sweep<R: Rng>(st: &mut BlockState, rng: &mut R) {
    let n = st.graph().num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cands: Vec<u32> = Vec::new();
    for node in order {
        let r = st.label(node);
        if st.block_size(r) == 1 {
            continue;
        }
        cands.clear();
        cands.extend(st.graph().neighbors(node).iter().map(|&j| st.label(j as usize)));
        cands.sort_unstable();
        cands.dedup();
        let mut best = (-TIE, None);
        for &s in &cands {
            if s == r {
                continue;
            }
            let d = st.node_delta(node, s);
            if d < best.0 {
                best = (d, Some(s));
            }
        }
        if let (_, Some(s)) = best {
            st.move_node(node, s);
        }
    }
}

fn agglomerate<R: Rng>(g: &Graph, v: Variant, cfg: &InferenceConfig, qt: &QTable, rng: &mut R) -> Partition {
    let n = g.num_nodes();
    let mut st = BlockState::new(g, v, &Partition::singletons(n), qt);
    let mut best = (st.sigma(), st.labels().to_vec());
    let agg = cfg.agglomeration;
    while st.num_blocks() > 1 {
        let b = st.num_blocks();
        let target = ((b as f64 / agg.ratio).floor() as usize).clamp(1, b - 1);

        let mut members: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, &l) in st.labels().iter().enumerate() {
            members[l as usize].push(i as u32);
        }
        let blocks = st.active_blocks().to_vec();
        let mut proposals: Vec<(f64, u32, u32)> = Vec::with_capacity(blocks.len());
        for &r in &blocks {
            let mut best_r: Option<(f64, u32)> = None;
            let rm = &members[r as usize];
            for _ in 0..agg.merge_tries {
                let node = rm[rng.random_range(0..rm.len())] as usize;
                let s = match propose_target(&st, node, cfg.epsilon, rng) {
                    Target::Block(s) if s != r => s,
                    _ => blocks[rng.random_range(0..blocks.len())],
                };
                if s == r {
                    continue;
                }
                let d = st.merge_delta(r, s);
                if best_r.is_none_or(|(bd, _)| d < bd) {
                    best_r = Some((d, s));
                }
            }
            if let Some((d, s)) = best_r {
                proposals.push((d, r, s));
            }
        }
        proposals.sort_by(|a, b| a.0.total_cmp(&b.0));

        // resolve chains so each merge lands in a block that survives
        let mut dest: Vec<u32> = (0..n as u32).collect();
        let find = |dest: &mut Vec<u32>, mut x: u32| {
            while dest[x as usize] != x {
                let up = dest[dest[x as usize] as usize];
                dest[x as usize] = up;
                x = up;
            }
            x
        };
        let mut remaining = b - target;
        for &(_, r, s) in &proposals {
            if remaining == 0 {
                break;
            }
            let (a, c) = (find(&mut dest, r), find(&mut dest, s));
            if a != c {
                dest[a as usize] = c;
                remaining -= 1;
            }
        }
        if remaining == b - target {
            // no usable proposals; fall back to merging the two smallest blocks
            let mut by_size = blocks.clone();
            by_size.sort_by_key(|&r| st.block_size(r));
            dest[by_size[0] as usize] = by_size[1];
        }
        let labels: Vec<u32> = st.labels().iter().map(|&l| find(&mut dest, l)).collect();
        st.rebuild(&labels);
        for _ in 0..agg.level_sweeps {
            fixed_b_sweep(&mut st, rng);
        }
        st.resync();
        if st.sigma() < best.0 {
            best = (st.sigma(), st.labels().to_vec());
        }
    }
    Partition::canonical(&best.1)
}

/// Agglomerative initialization: from singletons, merge down a geometric
/// ladder of block counts and return the best level.
pub fn agglomerative_init(g: &Graph, v: Variant, cfg: &InferenceConfig) -> Partition {
    let mut rng = stream_rng(cfg.seed, 0);
    agglomerate(g, v, cfg, QTable::global(), &mut rng)
}

struct RestartOutcome {
    sigma: f64,
    labels: Vec<u32>,
    trace: Vec<f64>,
}

fn run_restart(g: &Graph, v: Variant, cfg: &InferenceConfig, qt: &QTable, restart: usize) -> RestartOutcome {
    let mut rng = stream_rng(cfg.seed, restart as u64);
    let init = agglomerate(g, v, cfg, qt, &mut rng);
    let mut st = BlockState::new(g, v, &init, qt);
    let mut best_sigma = st.sigma();
    let mut best_labels = st.labels().to_vec();
    let mut trace = Vec::with_capacity(cfg.sweeps + 1);
    let hot = ((cfg.sweeps as f64) * cfg.beta_schedule.sampling_fraction).round() as usize;
    for sweep in 0..cfg.sweeps {
        let beta = if sweep < hot {
            cfg.beta_schedule.beta
        } else {
            f64::INFINITY
        };
        mcmc_sweep(&mut st, cfg, beta, &mut rng);
        if (sweep + 1) % 100 == 0 {
            st.resync();
        }
        if st.sigma() < best_sigma - TIE {
            best_sigma = st.sigma();
            best_labels.copy_from_slice(st.labels());
        }
        trace.push(best_sigma);
    }
    st.rebuild(&best_labels);
    greedy_descent(&mut st, &mut rng);
    let sigma = st.sigma().min(best_sigma);
    trace.push(sigma);
    let labels = if st.sigma() <= best_sigma {
        st.labels().to_vec()
    } else {
        best_labels
    };
    RestartOutcome {
        sigma,
        labels,
        trace,
    }
}

/// Searches for the minimum-description-length partition under `v`.
pub fn infer_with(g: &Graph, v: Variant, cfg: &InferenceConfig, qt: &QTable) -> crate::Result<InferenceResult> {
    cfg.validate()?;
    let n = g.num_nodes();
    let trivial = Partition::trivial(n);
    if g.num_edges() == 0 || n == 1 {
        let sigma = dl_with(g, &trivial, v, qt)?.total;
        return Ok(InferenceResult {
            variant: v,
            best_partition: trivial,
            sigma_opt: sigma,
            trace: vec![sigma],
            restart_sigmas: vec![sigma; cfg.restarts],
        });
    }
    if v.is_degree_corrected() {
        qt.reserve(2 * g.num_edges(), n);
    }
    let outcomes: Vec<RestartOutcome> = if cfg.parallel {
        (0..cfg.restarts)
            .into_par_iter()
            .map(|r| run_restart(g, v, cfg, qt, r))
            .collect()
    } else {
        (0..cfg.restarts).map(|r| run_restart(g, v, cfg, qt, r)).collect()
    };
    let restart_sigmas: Vec<f64> = outcomes.iter().map(|o| o.sigma).collect();
    let best = outcomes
        .into_iter()
        .min_by(|a, b| a.sigma.total_cmp(&b.sigma))
        .expect("at least one restart");
    let mut partition = Partition::canonical(&best.labels);
    let mut sigma = dl_with(g, &partition, v, qt)?.total;
    let trivial_sigma = dl_with(g, &trivial, v, qt)?.total;
    if trivial_sigma < sigma {
        partition = trivial;
        sigma = trivial_sigma;
    }
    let mut trace = best.trace;
    if let Some(last) = trace.last_mut() {
        *last = sigma;
    }
    Ok(InferenceResult {
        variant: v,
        best_partition: partition,
        sigma_opt: sigma,
        trace,
        restart_sigmas,
    })
}

/// Draws partitions from the β = `cfg.beta_schedule.beta` posterior: each
/// restart starts at its agglomerative partition and records the state every
/// `thin` sweeps over `cfg.sweeps` sweeps. Returns distinct groupings with
/// their Σ, in order of first visit.
pub fn sample_partitions(
    g: &Graph,
    v: Variant,
    cfg: &InferenceConfig,
    thin: usize,
    qt: &QTable,
) -> crate::Result<Vec<(Partition, f64)>> {
    cfg.validate()?;
    let thin = thin.max(1);
    if v.is_degree_corrected() {
        qt.reserve(2 * g.num_edges(), g.num_nodes());
    }
    let chain = |restart: usize| {
        let mut rng = stream_rng(cfg.seed, (1 << 32) + restart as u64);
        let init = agglomerate(g, v, cfg, qt, &mut rng);
        let mut st = BlockState::new(g, v, &init, qt);
        let mut out = vec![(init, st.sigma())];
        for sweep in 0..cfg.sweeps {
            mcmc_sweep(&mut st, cfg, cfg.beta_schedule.beta, &mut rng);
            if (sweep + 1) % 100 == 0 {
                st.resync();
            }
            if (sweep + 1) % thin == 0 {
                out.push((Partition::canonical(st.labels()), st.sigma()));
            }
        }
        out
    };
    let chains: Vec<Vec<(Partition, f64)>> = if cfg.parallel {
        (0..cfg.restarts).into_par_iter().map(chain).collect()
    } else {
        (0..cfg.restarts).map(chain).collect()
    };
    let mut seen = rustc_hash::FxHashSet::default();
    let mut distinct = Vec::new();
    for (p, sigma) in chains.into_iter().flatten() {
        if seen.insert(p.labels().to_vec()) {
            distinct.push((p, sigma));
        }
    }
    Ok(distinct)
}

pub fn infer(g: &Graph, v: Variant, cfg: &InferenceConfig) -> crate::Result<InferenceResult> {
    infer_with(g, v, cfg, QTable::global())
}
