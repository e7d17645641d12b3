//! Undirected simple graphs, node partitions and the block-level sufficient
//! statistics every description-length formula is written in terms of.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with self-loops and repeated edges found while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Canonicalize {
    /// Drop self-loops and collapse parallel edges, counting both.
    #[default]
    Collapse,
    /// Reject the input on the first self-loop or parallel edge.
    Strict,
}

/// Counts of the edits made while turning raw input into a simple graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

impl LoadReport {
    pub fn warnings(&self) -> usize {
        self.self_loops_dropped + self.duplicates_collapsed
    }
}

/// An undirected simple graph on nodes `0..n`.
///
/// Edges are stored once each as `(u, v)` with `u < v`, sorted. Adjacency is
/// kept in compressed-row form for the inner loops of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    degrees: Vec<u32>,
    adj_offsets: Vec<usize>,
    adj: Vec<u32>,
    node_names: Vec<String>,
    name_index: HashMap<String, u32>,
}

impl Graph {
    /// Builds a graph with names `"0".."n-1"`. Edges must already be simple.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        let names = (0..num_nodes).map(|i| i.to_string()).collect();
        Graph::with_names(names, edges)
    }

    /// Builds a graph from explicit node names and index pairs, rejecting
    /// self-loops, duplicates and out-of-range endpoints.
    pub fn with_names(node_names: Vec<String>, edges: &[(usize, usize)]) -> Result<Graph> {
        let n = node_names.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidGraph("too many nodes".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has an endpoint outside [0, {n})"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            canon.push(if u < v { (u as u32, v as u32) } else { (v as u32, u as u32) });
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut name_index = HashMap::with_capacity(n);
        for (i, name) in node_names.iter().enumerate() {
            if name_index.insert(name.clone(), i as u32).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node name `{name}`")));
            }
        }
        Ok(Graph::assemble(node_names, name_index, canon))
    }

    fn assemble(
        node_names: Vec<String>,
        name_index: HashMap<String, u32>,
        edges: Vec<(u32, u32)>,
    ) -> Graph {
        let n = node_names.len();
        let mut degrees = vec![0u32; n];
        for &(u, v) in &edges {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(n + 1);
        adj_offsets.push(0);
        for &d in &degrees {
            adj_offsets.push(adj_offsets.last().unwrap() + d as usize);
        }
        let mut fill = adj_offsets.clone();
        let mut adj = vec![0u32; 2 * edges.len()];
        for &(u, v) in &edges {
            adj[fill[u as usize]] = v;
            fill[u as usize] += 1;
            adj[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        Graph {
            num_nodes: n,
            edges,
            degrees,
            adj_offsets,
            adj,
            node_names,
            name_index,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node] as usize
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adj[self.adj_offsets[node]..self.adj_offsets[node + 1]]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).map(|&i| i as usize)
    }

    /// Returns a copy with extra isolated nodes appended under the given names.
    pub fn with_isolated_nodes(&self, names: &[String]) -> Result<Graph> {
        let mut all = self.node_names.clone();
        all.extend(names.iter().cloned());
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(u, v)| (u as usize, v as usize))
            .collect();
        Graph::with_names(all, &edges)
    }

    /// The subgraph induced by `keep` (node indices), names preserved.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph> {
        let mut remap = vec![u32::MAX; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new as u32;
        }
        let names = keep.iter().map(|&i| self.node_names[i].clone()).collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|&&(u, v)| remap[u as usize] != u32::MAX && remap[v as usize] != u32::MAX)
            .map(|&(u, v)| (remap[u as usize] as usize, remap[v as usize] as usize))
            .collect();
        Graph::with_names(names, &edges)
    }

    /// Same graph with node indices permuted: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.num_nodes {
            return Err(Error::LengthMismatch {
                expected: self.num_nodes,
                got: perm.len(),
            });
        }
        let mut names = vec![String::new(); self.num_nodes];
        for (i, &p) in perm.iter().enumerate() {
            names[p] = self.node_names[i].clone();
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u as usize], perm[v as usize]))
            .collect();
        Graph::with_names(names, &edges)
    }
}

/// Parses a whitespace-separated edge list. `#` starts a comment; blank lines
/// are skipped. Node tokens are arbitrary strings, indexed in order of first
/// appearance. Tokens beyond the second on a line are ignored.
pub fn load_edge_list<R: BufRead>(source: R, policy: Canonicalize) -> Result<(Graph, LoadReport)> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut intern = |tok: &str, names: &mut Vec<String>| -> u32 {
        if let Some(&i) = index.get(tok) {
            return i;
        }
        let i = names.len() as u32;
        index.insert(tok.to_owned(), i);
        names.push(tok.to_owned());
        i
    };

    let mut report = LoadReport::default();
    let mut raw: Vec<(u32, u32, usize)> = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut toks = content.split_whitespace();
        let Some(a) = toks.next() else { continue };
        let Some(b) = toks.next() else {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected two node tokens, found `{}`", content.trim()),
            });
        };
        let u = intern(a, &mut names);
        let v = intern(b, &mut names);
        if u == v {
            if policy == Canonicalize::Strict {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("self-loop on `{a}`"),
                });
            }
            report.self_loops_dropped += 1;
            continue;
        }
        raw.push((u.min(v), u.max(v), lineno + 1));
    }
    if names.is_empty() {
        return Err(Error::EmptyInput("edge list contains no edges".into()));
    }

    raw.sort_unstable();
    let mut edges = Vec::with_capacity(raw.len());
    for (u, v, line) in raw {
        if edges.last() == Some(&(u, v)) {
            if policy == Canonicalize::Strict {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "parallel edge `{}` `{}`",
                        names[u as usize], names[v as usize]
                    ),
                });
            }
            report.duplicates_collapsed += 1;
            continue;
        }
        edges.push((u, v));
    }
    if report.warnings() > 0 {
        log::warn!(
            "canonicalized edge list: {} self-loop(s) dropped, {} parallel edge(s) collapsed",
            report.self_loops_dropped,
            report.duplicates_collapsed
        );
    }
    Ok((Graph::assemble(names, index, edges), report))
}

/// A node-to-block assignment with contiguous labels `0..num_blocks`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition {
    labels: Vec<u32>,
    num_blocks: usize,
}

impl Partition {
    /// Validates contiguity: every label in `0..B` must occur.
    pub fn new(labels: Vec<u32>) -> Result<Partition> {
        if labels.is_empty() {
            return Err(Error::InvalidPartition("partition is empty".into()));
        }
        let b = *labels.iter().max().unwrap() as usize + 1;
        let mut seen = vec![false; b];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "labels are not contiguous: block {missing} is empty"
            )));
        }
        Ok(Partition {
            labels,
            num_blocks: b,
        })
    }

    /// Relabels arbitrary integer labels to contiguous ones in order of first
    /// appearance.
    pub fn canonical<L: Copy + Eq + std::hash::Hash>(raw: &[L]) -> Partition {
        let mut map: HashMap<L, u32> = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            labels,
            num_blocks: map.len(),
        }
    }

    /// The single-block partition of `n` nodes.
    pub fn trivial(n: usize) -> Partition {
        Partition {
            labels: vec![0; n],
            num_blocks: 1,
        }
    }

    pub fn singletons(n: usize) -> Partition {
        Partition {
            labels: (0..n as u32).collect(),
            num_blocks: n,
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node] as usize
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_sizes(&self) -> Vec<u64> {
        let mut n = vec![0u64; self.num_blocks];
        for &l in &self.labels {
            n[l as usize] += 1;
        }
        n
    }

    /// Merges block `from` into block `into` and relabels contiguously.
    pub fn merge_blocks(&self, from: usize, into: usize) -> Partition {
        let merged: Vec<u32> = self
            .labels
            .iter()
            .map(|&l| if l as usize == from { into as u32 } else { l })
            .collect();
        Partition::canonical(&merged)
    }

    /// Whether two partitions group nodes identically, ignoring label names.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.len() == other.len()
            && Partition::canonical(&self.labels) == Partition::canonical(&other.labels)
    }
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;
    fn try_from(labels: Vec<u32>) -> Result<Partition> {
        Partition::new(labels)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Vec<u32> {
        p.labels
    }
}

/// Maps categorical tokens to contiguous blocks in order of first appearance.
pub fn relabel_partition<S: AsRef<str>>(raw_labels: &[S]) -> Partition {
    let mut map: HashMap<&str, u32> = HashMap::new();
    let labels = raw_labels
        .iter()
        .map(|s| {
            let next = map.len() as u32;
            *map.entry(s.as_ref()).or_insert(next)
        })
        .collect();
    Partition {
        labels,
        num_blocks: map.len(),
    }
}

/// Edge counts, sizes, degree sums and per-block degree histograms of a
/// graph under a partition.
///
/// `edge_counts` is a dense row-major `B x B` matrix; the diagonal holds twice
/// the number of within-block edges, so every row sums to the block's degree
/// sum and the whole matrix sums to `2E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub num_blocks: usize,
    pub edge_counts: Vec<u64>,
    pub block_sizes: Vec<u64>,
    pub block_degree_sums: Vec<u64>,
    pub degree_histograms: Vec<BTreeMap<u32, u64>>,
    pub e_in: u64,
    pub e_out: u64,
}

impl BlockStats {
    pub fn e(&self, r: usize, s: usize) -> u64 {
        self.edge_counts[r * self.num_blocks + s]
    }

    pub fn num_edges(&self) -> u64 {
        self.e_in + self.e_out
    }

    pub fn num_nodes(&self) -> u64 {
        self.block_sizes.iter().sum()
    }

    /// Checks every structural invariant; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<()> {
        let b = self.num_blocks;
        let bad = |m: String| Err(Error::InvalidGraph(m));
        let mut total = 0u64;
        let mut diag = 0u64;
        for r in 0..b {
            let mut row = 0u64;
            for s in 0..b {
                if self.e(r, s) != self.e(s, r) {
                    return bad(format!("edge counts not symmetric at ({r}, {s})"));
                }
                row += self.e(r, s);
            }
            if self.e(r, r) % 2 != 0 {
                return bad(format!("odd diagonal entry at block {r}"));
            }
            if row != self.block_degree_sums[r] {
                return bad(format!("row {r} does not sum to e_r"));
            }
            let hist = &self.degree_histograms[r];
            let nodes: u64 = hist.values().sum();
            let stubs: u64 = hist.iter().map(|(&k, &c)| k as u64 * c).sum();
            if nodes != self.block_sizes[r] || stubs != self.block_degree_sums[r] {
                return bad(format!("degree histogram of block {r} inconsistent"));
            }
            total += row;
            diag += self.e(r, r);
        }
        if total != 2 * (self.e_in + self.e_out) || diag != 2 * self.e_in {
            return bad("edge totals inconsistent with e_in/e_out".into());
        }
        Ok(())
    }
}

/// Computes the block statistics of `g` under `p`.
pub fn block_stats(g: &Graph, p: &Partition) -> Result<BlockStats> {
    if p.len() != g.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: g.num_nodes(),
            got: p.len(),
        });
    }
    let b = p.num_blocks();
    let mut edge_counts = vec![0u64; b * b];
    let mut e_in = 0u64;
    for &(u, v) in g.edges() {
        let (r, s) = (p.label(u as usize), p.label(v as usize));
        edge_counts[r * b + s] += 1;
        edge_counts[s * b + r] += 1;
        if r == s {
            e_in += 1;
        }
    }
    let mut block_sizes = vec![0u64; b];
    let mut block_degree_sums = vec![0u64; b];
    let mut degree_histograms = vec![BTreeMap::new(); b];
    for (i, &k) in g.degrees().iter().enumerate() {
        let r = p.label(i);
        block_sizes[r] += 1;
        block_degree_sums[r] += k as u64;
        *degree_histograms[r].entry(k).or_insert(0) += 1;
    }
    let stats = BlockStats {
        num_blocks: b,
        edge_counts,
        block_sizes,
        block_degree_sums,
        degree_histograms,
        e_in,
        e_out: g.num_edges() as u64 - e_in,
    };
    debug_assert!(stats.check_invariants().is_ok());
    Ok(stats)
}
