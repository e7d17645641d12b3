//! Mutable partition state with incrementally maintained block statistics.
//!
//! The description length is decomposed as
//!
//! ```text
//! Σ = Σ_{r<s} off(e_rs) + Σ_r diag(e_rr) + Σ_{r nonempty} block(n_r, e_r, η^r) + global(B, e_in)
//! ```
//!
//! so a node move or a block merge only touches the entries, blocks and
//! global quantities it changes.

use rustc_hash::FxHashMap;

use crate::combinatorics::{lbinom, ldfact_even, lmultiset, log_factorial, QTable, QView};
use crate::dl::{log_degree_factorials, Variant};
use crate::graph::{Graph, Partition};

/// Destination of a single-node move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Block(u32),
    /// Any currently empty block.
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Node { node: u32, to: Target },
    /// Every node of block `from` joins block `into`.
    Merge { from: u32, into: u32 },
}

#[derive(Debug, Clone)]
struct Terms {
    variant: Variant,
    num_nodes: u64,
    num_edges: u64,
    global_const: f64,
}

impl Terms {
    fn new(g: &Graph, variant: Variant) -> Terms {
        let n = g.num_nodes() as u64;
        let mut global_const = log_factorial(n) + (n as f64).ln();
        if variant.is_degree_corrected() {
            global_const -= log_degree_factorials(g);
        }
        Terms {
            variant,
            num_nodes: n,
            num_edges: g.num_edges() as u64,
            global_const,
        }
    }

    #[inline]
    fn off(&self, x: u64) -> f64 {
        match self.variant {
            // likelihood and PP edge prior carry ∏ e_rs! with opposite signs
            Variant::PpUniform | Variant::PpNonUniform => 0.0,
            Variant::Ndc | Variant::Dc => -log_factorial(x),
        }
    }

    #[inline]
    fn diag(&self, x: u64) -> f64 {
        match self.variant {
            Variant::PpUniform => -((x / 2) as f64) * std::f64::consts::LN_2,
            _ => -ldfact_even(x),
        }
    }

    #[inline]
    fn block(&self, n: u64, e: u64, hist_lf: f64, q: &QView) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self.variant {
            Variant::Ndc => e as f64 * (n as f64).ln() - log_factorial(n),
            _ => log_factorial(e) - hist_lf + q.log_q(e, n),
        }
    }

    fn global(&self, b: u64, e_in: u64) -> f64 {
        let e = self.num_edges;
        let e_out = e - e_in;
        let partition = lbinom(self.num_nodes - 1, b - 1);
        let hyper = if b > 1 { ((e + 1) as f64).ln() } else { 0.0 };
        let out_term = if e_out > 0 {
            e_out as f64 * ((b * (b - 1) / 2) as f64).ln()
        } else {
            0.0
        };
        let edge = match self.variant {
            Variant::Ndc | Variant::Dc => lmultiset(b * (b + 1) / 2, e),
            Variant::PpUniform => {
                -log_factorial(e_in) - log_factorial(e_out)
                    + e_in as f64 * (b as f64).ln()
                    + out_term
                    + hyper
            }
            Variant::PpNonUniform => -log_factorial(e_out) + out_term + lmultiset(b, e_in) + hyper,
        };
        self.global_const + partition + edge
    }
}

/// Partition state over a fixed graph. Block ids range over `0..N`; empty ids
/// are kept in a free list and nonempty ones in `active`.
#[derive(Debug, Clone)]
pub struct BlockState<'g> {
    g: &'g Graph,
    terms: Terms,
    q: QView,
    labels: Vec<u32>,
    sizes: Vec<u64>,
    degsum: Vec<u64>,
    rows: Vec<FxHashMap<u32, u64>>,
    hist: Vec<FxHashMap<u32, u64>>,
    hist_lf: Vec<f64>,
    active: Vec<u32>,
    active_pos: Vec<usize>,
    free: Vec<u32>,
    e_in: u64,
    sigma: f64,
    nb_count: Vec<u64>,
    nb_touched: Vec<u32>,
}

impl<'g> BlockState<'g> {
    pub fn new(g: &'g Graph, variant: Variant, p: &Partition, qt: &QTable) -> BlockState<'g> {
        assert_eq!(p.len(), g.num_nodes(), "partition length must match the graph");
        let n = g.num_nodes();
        if variant.is_degree_corrected() {
            qt.reserve(2 * g.num_edges(), n);
        }
        let mut st = BlockState {
            g,
            terms: Terms::new(g, variant),
            q: qt.view(),
            labels: Vec::new(),
            sizes: vec![0; n],
            degsum: vec![0; n],
            rows: vec![FxHashMap::default(); n],
            hist: vec![FxHashMap::default(); n],
            hist_lf: vec![0.0; n],
            active: Vec::new(),
            active_pos: vec![usize::MAX; n],
            free: Vec::new(),
            e_in: 0,
            sigma: 0.0,
            nb_count: vec![0; n],
            nb_touched: Vec::new(),
        };
        st.rebuild(p.labels());
        st
    }

    /// Recomputes every statistic (and Σ) from the given labels. Labels may
    /// be any ids in `0..N`.
    pub fn rebuild(&mut self, labels: &[u32]) {
        let n = self.g.num_nodes();
        self.labels = labels.to_vec();
        self.sizes.iter_mut().for_each(|x| *x = 0);
        self.degsum.iter_mut().for_each(|x| *x = 0);
        self.rows.iter_mut().for_each(|r| r.clear());
        self.hist.iter_mut().for_each(|h| h.clear());
        self.e_in = 0;
        for (i, &r) in labels.iter().enumerate() {
            let k = self.g.degree(i) as u64;
            self.sizes[r as usize] += 1;
            self.degsum[r as usize] += k;
            *self.hist[r as usize].entry(k as u32).or_insert(0) += 1;
        }
        for &(u, v) in self.g.edges() {
            let (r, s) = (labels[u as usize], labels[v as usize]);
            if r == s {
                *self.rows[r as usize].entry(r).or_insert(0) += 2;
                self.e_in += 1;
            } else {
                *self.rows[r as usize].entry(s).or_insert(0) += 1;
                *self.rows[s as usize].entry(r).or_insert(0) += 1;
            }
        }
        self.active.clear();
        self.free.clear();
        for r in 0..n {
            self.hist_lf[r] = self.hist[r].values().map(|&c| log_factorial(c)).sum();
            if self.sizes[r] > 0 {
                self.active_pos[r] = self.active.len();
                self.active.push(r as u32);
            } else {
                self.active_pos[r] = usize::MAX;
            }
        }
        // pop() hands out the lowest free id first
        for r in (0..n).rev() {
            if self.sizes[r] == 0 {
                self.free.push(r as u32);
            }
        }
        self.sigma = self.compute_sigma();
    }

    /// Σ evaluated from the current statistics (no incremental bookkeeping).
    pub fn compute_sigma(&self) -> f64 {
        let t = &self.terms;
        let mut total = t.global(self.active.len() as u64, self.e_in);
        for &r in &self.active {
            let r = r as usize;
            total += t.block(self.sizes[r], self.degsum[r], self.hist_lf[r], &self.q);
            for (&s, &x) in &self.rows[r] {
                match (s as usize).cmp(&r) {
                    std::cmp::Ordering::Equal => total += t.diag(x),
                    std::cmp::Ordering::Greater => total += t.off(x),
                    std::cmp::Ordering::Less => {}
                }
            }
        }
        total
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn variant(&self) -> Variant {
        self.terms.variant
    }

    /// Incrementally tracked Σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn num_blocks(&self) -> usize {
        self.active.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> u32 {
        self.labels[node]
    }

    pub fn active_blocks(&self) -> &[u32] {
        &self.active
    }

    pub fn block_size(&self, r: u32) -> u64 {
        self.sizes[r as usize]
    }

    pub fn block_degree_sum(&self, r: u32) -> u64 {
        self.degsum[r as usize]
    }

    pub fn e(&self, r: u32, s: u32) -> u64 {
        self.rows[r as usize].get(&s).copied().unwrap_or(0)
    }

    pub fn row(&self, r: u32) -> &FxHashMap<u32, u64> {
        &self.rows[r as usize]
    }

    pub fn has_free_block(&self) -> bool {
        !self.free.is_empty()
    }

    pub fn peek_free_block(&self) -> Option<u32> {
        self.free.last().copied()
    }

    /// The current labels relabelled contiguously.
    pub fn partition(&self) -> Partition {
        Partition::canonical(&self.labels)
    }

    fn neighbor_counts(&mut self, node: usize) {
        for &t in &self.nb_touched {
            self.nb_count[t as usize] = 0;
        }
        self.nb_touched.clear();
        for &j in self.g.neighbors(node) {
            let t = self.labels[j as usize];
            if self.nb_count[t as usize] == 0 {
                self.nb_touched.push(t);
            }
            self.nb_count[t as usize] += 1;
        }
    }

    fn resolve(&self, to: Target) -> Option<u32> {
        match to {
            Target::Block(s) => Some(s),
            Target::New => self.peek_free_block(),
        }
    }

    /// Σ(after) − Σ(before) for a legal move, without applying it.
    pub fn delta(&mut self, mv: Move) -> f64 {
        match mv {
            Move::Node { node, to } => match self.resolve(to) {
                Some(s) => self.node_delta(node as usize, s),
                None => 0.0,
            },
            Move::Merge { from, into } => self.merge_delta(from, into),
        }
    }

    /// Applies a move and returns its ΔΣ.
    pub fn apply(&mut self, mv: Move) -> f64 {
        match mv {
            Move::Node { node, to } => match self.resolve(to) {
                Some(s) => self.move_node(node as usize, s),
                None => 0.0,
            },
            Move::Merge { from, into } => self.merge(from, into),
        }
    }

    pub fn node_delta(&mut self, node: usize, s: u32) -> f64 {
        let r = self.labels[node];
        if r == s {
            return 0.0;
        }
        self.neighbor_counts(node);
        self.node_delta_counted(node, r, s)
    }

    fn node_delta_counted(&self, node: usize, r: u32, s: u32) -> f64 {
        let t = &self.terms;
        let k = self.g.degree(node) as u64;
        let (ru, su) = (r as usize, s as usize);
        let m_r = self.nb_count[ru];
        let m_s = self.nb_count[su];
        let mut d = 0.0;
        for &b in &self.nb_touched {
            if b == r || b == s {
                continue;
            }
            let m = self.nb_count[b as usize];
            let old_r = self.e(r, b);
            let old_s = self.e(s, b);
            d += t.off(old_r - m) - t.off(old_r) + t.off(old_s + m) - t.off(old_s);
        }
        let e_rs = self.e(r, s);
        d += t.off(e_rs + m_r - m_s) - t.off(e_rs);
        let e_rr = self.e(r, r);
        let e_ss = self.e(s, s);
        d += t.diag(e_rr - 2 * m_r) - t.diag(e_rr);
        d += t.diag(e_ss + 2 * m_s) - t.diag(e_ss);

        let kk = k as u32;
        let eta_r = self.hist[ru].get(&kk).copied().unwrap_or(0);
        let eta_s = self.hist[su].get(&kk).copied().unwrap_or(0);
        let (n_r, n_s) = (self.sizes[ru], self.sizes[su]);
        d += t.block(n_r - 1, self.degsum[ru] - k, self.hist_lf[ru] - (eta_r as f64).ln(), &self.q)
            - t.block(n_r, self.degsum[ru], self.hist_lf[ru], &self.q);
        d += t.block(
            n_s + 1,
            self.degsum[su] + k,
            self.hist_lf[su] + ((eta_s + 1) as f64).ln(),
            &self.q,
        ) - t.block(n_s, self.degsum[su], self.hist_lf[su], &self.q);

        let b = self.active.len() as u64;
        let b_new = b - u64::from(n_r == 1) + u64::from(n_s == 0);
        let e_in_new = self.e_in - m_r + m_s;
        if b_new != b || e_in_new != self.e_in {
            d += t.global(b_new, e_in_new) - t.global(b, self.e_in);
        }
        d
    }

    fn bump(&mut self, r: u32, s: u32, add: u64, sub: u64) {
        for (a, b) in [(r, s), (s, r)] {
            let entry = self.rows[a as usize].entry(b).or_insert(0);
            *entry = *entry + add - sub;
            if *entry == 0 {
                self.rows[a as usize].remove(&b);
            }
            if a == b {
                break;
            }
        }
    }

    fn activate(&mut self, s: u32) {
        if let Some(pos) = self.free.iter().rposition(|&f| f == s) {
            self.free.swap_remove(pos);
        }
        self.active_pos[s as usize] = self.active.len();
        self.active.push(s);
    }

    fn deactivate(&mut self, r: u32) {
        let pos = self.active_pos[r as usize];
        let last = *self.active.last().unwrap();
        self.active.swap_remove(pos);
        if last != r {
            self.active_pos[last as usize] = pos;
        }
        self.active_pos[r as usize] = usize::MAX;
        self.free.push(r);
    }

    /// Moves `node` into block `s` (possibly empty) and returns ΔΣ.
    pub fn move_node(&mut self, node: usize, s: u32) -> f64 {
        let r = self.labels[node];
        if r == s {
            return 0.0;
        }
        self.neighbor_counts(node);
        let d = self.node_delta_counted(node, r, s);
        let (ru, su) = (r as usize, s as usize);
        let k = self.g.degree(node) as u64;
        let m_r = self.nb_count[ru];
        let m_s = self.nb_count[su];
        let touched = std::mem::take(&mut self.nb_touched);
        for &b in &touched {
            if b == r || b == s {
                continue;
            }
            let m = self.nb_count[b as usize];
            self.bump(r, b, 0, m);
            self.bump(s, b, m, 0);
        }
        self.nb_touched = touched;
        self.bump(r, s, m_r, m_s);
        self.bump(r, r, 0, 2 * m_r);
        self.bump(s, s, 2 * m_s, 0);

        let kk = k as u32;
        let eta_r = self.hist[ru].get_mut(&kk).expect("degree present in source block");
        self.hist_lf[ru] -= (*eta_r as f64).ln();
        *eta_r -= 1;
        if *eta_r == 0 {
            self.hist[ru].remove(&kk);
        }
        let eta_s = self.hist[su].entry(kk).or_insert(0);
        *eta_s += 1;
        self.hist_lf[su] += (*eta_s as f64).ln();

        if self.sizes[su] == 0 {
            self.activate(s);
        }
        self.sizes[ru] -= 1;
        self.sizes[su] += 1;
        self.degsum[ru] -= k;
        self.degsum[su] += k;
        if self.sizes[ru] == 0 {
            self.hist_lf[ru] = 0.0;
            self.deactivate(r);
        }
        self.e_in = self.e_in - m_r + m_s;
        self.labels[node] = s;
        self.sigma += d;
        d
    }

    /// ΔΣ of merging block `from` into block `into`.
    pub fn merge_delta(&self, from: u32, into: u32) -> f64 {
        if from == into || self.sizes[from as usize] == 0 || self.sizes[into as usize] == 0 {
            return 0.0;
        }
        let t = &self.terms;
        let (r, s) = (from, into);
        let (ru, su) = (r as usize, s as usize);
        let mut d = 0.0;
        for (&b, &x) in &self.rows[ru] {
            if b == r || b == s {
                continue;
            }
            let old = self.e(s, b);
            d += t.off(old + x) - t.off(old) - t.off(x);
        }
        let e_rs = self.e(r, s);
        let e_rr = self.e(r, r);
        let e_ss = self.e(s, s);
        d -= t.off(e_rs);
        d += t.diag(e_ss + e_rr + 2 * e_rs) - t.diag(e_ss) - t.diag(e_rr);

        let mut merged_lf = self.hist_lf[su];
        if self.terms.variant.is_degree_corrected() {
            for (k, &a) in &self.hist[ru] {
                let b = self.hist[su].get(k).copied().unwrap_or(0);
                merged_lf += log_factorial(a + b) - log_factorial(b);
            }
        }
        d += t.block(
            self.sizes[ru] + self.sizes[su],
            self.degsum[ru] + self.degsum[su],
            merged_lf,
            &self.q,
        );
        d -= t.block(self.sizes[ru], self.degsum[ru], self.hist_lf[ru], &self.q);
        d -= t.block(self.sizes[su], self.degsum[su], self.hist_lf[su], &self.q);

        let b = self.active.len() as u64;
        d += t.global(b - 1, self.e_in + e_rs) - t.global(b, self.e_in);
        d
    }

    /// Merges block `from` into `into` and returns ΔΣ.
    pub fn merge(&mut self, from: u32, into: u32) -> f64 {
        if from == into || self.sizes[from as usize] == 0 || self.sizes[into as usize] == 0 {
            return 0.0;
        }
        let d = self.merge_delta(from, into);
        let (r, s) = (from, into);
        let (ru, su) = (r as usize, s as usize);
        let row_r = std::mem::take(&mut self.rows[ru]);
        let e_rs = row_r.get(&s).copied().unwrap_or(0);
        let e_rr = row_r.get(&r).copied().unwrap_or(0);
        for (&b, &x) in &row_r {
            if b == r || b == s {
                continue;
            }
            self.rows[b as usize].remove(&r);
            self.bump(s, b, x, 0);
        }
        if e_rs > 0 {
            self.rows[su].remove(&r);
        }
        if e_rr + 2 * e_rs > 0 {
            self.bump(s, s, e_rr + 2 * e_rs, 0);
        }
        let hist_r = std::mem::take(&mut self.hist[ru]);
        for (k, a) in hist_r {
            *self.hist[su].entry(k).or_insert(0) += a;
        }
        self.hist_lf[su] = self.hist[su].values().map(|&c| log_factorial(c)).sum();
        self.hist_lf[ru] = 0.0;
        self.sizes[su] += self.sizes[ru];
        self.degsum[su] += self.degsum[ru];
        self.sizes[ru] = 0;
        self.degsum[ru] = 0;
        self.e_in += e_rs;
        for l in self.labels.iter_mut() {
            if *l == r {
                *l = s;
            }
        }
        self.deactivate(r);
        self.sigma += d;
        d
    }

    /// Replaces the tracked Σ with a from-scratch evaluation and returns the
    /// absolute drift that was corrected.
    pub fn resync(&mut self) -> f64 {
        let fresh = self.compute_sigma();
        let drift = (fresh - self.sigma).abs();
        self.sigma = fresh;
        drift
    }

    /// Nodes currently in block `r`.
    pub fn members(&self, r: u32) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == r)
            .map(|(i, _)| i as u32)
            .collect()
    }
}
