//! Planted-partition benchmark networks, the two-partition cross-block
//! network, and metadata correlated with a planted partition.
//!
//! Edges are placed microcanonically: block-pair edge quotas are fixed
//! exactly (largest-remainder rounding of the block matrix), then each quota
//! is filled with distinct node pairs drawn uniformly.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};

/// Symmetric matrix of relative edge mass between planted blocks. Only the
/// proportions matter; generators rescale it to a total of 2E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix {
    pub planted_b: usize,
    pub theta: Vec<f64>,
}

impl BlockMatrix {
    pub fn new(planted_b: usize, theta: Vec<f64>) -> Result<BlockMatrix> {
        if planted_b == 0 || theta.len() != planted_b * planted_b {
            return Err(Error::Domain("block matrix must be B x B with B >= 1".into()));
        }
        for r in 0..planted_b {
            for s in 0..planted_b {
                let x = theta[r * planted_b + s];
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::Domain("block matrix entries must be finite and >= 0".into()));
                }
                if (x - theta[s * planted_b + r]).abs() > 1e-12 * (1.0 + x.abs()) {
                    return Err(Error::Domain("block matrix must be symmetric".into()));
                }
            }
        }
        if theta.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Domain("block matrix has no mass".into()));
        }
        Ok(BlockMatrix { planted_b, theta })
    }

    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.theta[r * self.planted_b + s]
    }

    /// Target edge counts per unordered block pair `(r, s)`, `r <= s`,
    /// rescaled so they sum to `num_edges` (real-valued).
    fn pair_targets(&self, num_edges: u64) -> Vec<((usize, usize), f64)> {
        let total: f64 = self.theta.iter().sum();
        let scale = 2.0 * num_edges as f64 / total;
        let b = self.planted_b;
        let mut out = Vec::with_capacity(b * (b + 1) / 2);
        for r in 0..b {
            for s in r..b {
                let mass = self.get(r, s) * scale;
                out.push(((r, s), if r == s { mass / 2.0 } else { mass }));
            }
        }
        out
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// Bicommunity matrix 2E·[[1−μ, μ], [μ, 1−μ]].
pub fn theta_bc(num_edges: u64, mu: f64) -> Result<BlockMatrix> {
    theta_bc_blocks(num_edges, mu, 2)
}

/// B-block assortative matrix: 2E(1−μ) on the diagonal and 2Eμ/(B−1) off it,
/// so a fraction μ of the edges runs between blocks. Equals [`theta_bc`] for
/// B = 2.
pub fn theta_bc_blocks(num_edges: u64, mu: f64, b: usize) -> Result<BlockMatrix> {
    check_unit("mu", mu)?;
    if num_edges < 1 || b < 1 {
        return Err(Error::Domain("need E >= 1 and B >= 1".into()));
    }
    let two_e = 2.0 * num_edges as f64;
    let off = if b > 1 { two_e * mu / (b - 1) as f64 } else { 0.0 };
    let theta = (0..b * b)
        .map(|i| if i / b == i % b { two_e * (1.0 - mu) } else { off })
        .collect();
    BlockMatrix::new(b, theta)
}

/// Core–periphery matrix 2E·[[1−λ, 1/2], [1/2, λ]].
pub fn theta_cp(num_edges: u64, lambda: f64) -> Result<BlockMatrix> {
    check_unit("lambda", lambda)?;
    if num_edges < 1 {
        return Err(Error::Domain("need E >= 1".into()));
    }
    let two_e = 2.0 * num_edges as f64;
    BlockMatrix::new(2, vec![two_e * (1.0 - lambda), two_e * 0.5, two_e * 0.5, two_e * lambda])
}

/// Rounds nonnegative reals to integers with the given total, giving the
/// leftover units to the largest fractional parts (ties to the lower index).
pub fn largest_remainder(values: &[f64], total: u64) -> Vec<u64> {
    let mut out: Vec<u64> = values.iter().map(|v| v.floor().max(0.0) as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = values[a] - values[a].floor();
        let fb = values[b] - values[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    if assigned < total {
        for &i in order.iter().cycle().take((total - assigned) as usize) {
            out[i] += 1;
        }
    } else {
        for &i in order.iter().rev().cycle().take((assigned - total) as usize) {
            out[i] = out[i].saturating_sub(1);
        }
    }
    out
}

/// Sizes of `b` groups as equal as possible; the first `n mod b` get one
/// extra node.
pub fn balanced_sizes(n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|r| n / b + usize::from(r < n % b)).collect()
}

fn pair_count(a: usize, b: usize, same: bool) -> u64 {
    if same {
        (a as u64) * (a as u64).saturating_sub(1) / 2
    } else {
        a as u64 * b as u64
    }
}

/// Decodes the `idx`-th pair (lexicographic) among the C(n,2) pairs of `n`.
fn triangular_pair(idx: u64, n: u64) -> (u64, u64) {
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * idx as f64;
    let mut a = (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as u64;
    let before = |a: u64| a * n - a * (a + 1) / 2;
    while a > 0 && before(a) > idx {
        a -= 1;
    }
    while before(a + 1) <= idx {
        a += 1;
    }
    (a, a + 1 + idx - before(a))
}

/// Places `quota` distinct edges uniformly between node groups `xs` and `ys`
/// (the same slice for within-group edges).
fn place_edges<R: Rng>(
    rng: &mut R,
    xs: &[usize],
    ys: &[usize],
    same: bool,
    quota: u64,
    out: &mut Vec<(usize, usize)>,
) -> Result<()> {
    let available = pair_count(xs.len(), ys.len(), same);
    if quota > available {
        return Err(Error::Infeasible(format!(
            "block pair needs {quota} edges but only {available} node pairs exist"
        )));
    }
    if quota == 0 {
        return Ok(());
    }
    let chosen = index::sample(rng, available as usize, quota as usize);
    for idx in chosen.iter() {
        let idx = idx as u64;
        let (a, b) = if same {
            let (a, b) = triangular_pair(idx, xs.len() as u64);
            (xs[a as usize], xs[b as usize])
        } else {
            let w = ys.len() as u64;
            (xs[(idx / w) as usize], ys[(idx % w) as usize])
        };
        out.push((a, b));
    }
    Ok(())
}

fn target_edges(n: usize, expected_degree: f64) -> Result<u64> {
    if n < 2 || !(expected_degree >= 0.0) {
        return Err(Error::Domain("need N >= 2 and a nonnegative expected degree".into()));
    }
    let e = (n as f64 * expected_degree / 2.0).round() as u64;
    if e > pair_count(n, n, true) {
        return Err(Error::Infeasible(format!("{e} edges do not fit in a simple graph on {n} nodes")));
    }
    Ok(e)
}

/// Planted-partition SBM network with `theta.planted_b` equal-size blocks
/// and exactly round(N·k/2) edges.
pub fn sbm_generate<R: Rng>(
    n: usize,
    expected_degree: f64,
    theta: &BlockMatrix,
    rng: &mut R,
) -> Result<(Graph, Partition)> {
    let b = theta.planted_b;
    if n < b {
        return Err(Error::Domain(format!("{n} nodes cannot fill {b} blocks")));
    }
    let num_edges = target_edges(n, expected_degree)?;
    let sizes = balanced_sizes(n, b);
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(b);
    let mut labels = Vec::with_capacity(n);
    let mut next = 0;
    for (r, &size) in sizes.iter().enumerate() {
        groups.push((next..next + size).collect());
        labels.extend(std::iter::repeat_n(r as u32, size));
        next += size;
    }
    let targets = theta.pair_targets(num_edges);
    let quotas = largest_remainder(&targets.iter().map(|t| t.1).collect::<Vec<_>>(), num_edges);
    let mut edges = Vec::with_capacity(num_edges as usize);
    for (((r, s), _), q) in targets.iter().zip(quotas) {
        place_edges(rng, &groups[*r], &groups[*s], r == s, q, &mut edges)?;
    }
    let g = Graph::from_edges(n, &edges)?;
    Ok((g, Partition::new(labels)?))
}

/// Result of [`scbm_generate`].
#[derive(Debug, Clone)]
pub struct ScbmNetwork {
    pub graph: Graph,
    pub first: Partition,
    pub second: Partition,
    /// Integer edge quotas per unordered cell pair `(c, c')`, cells indexed
    /// `2·first + second`.
    pub cell_quotas: Vec<((usize, usize), u64)>,
}

const IPF_TOL: f64 = 1e-8;
const IPF_MAX_ITER: usize = 10_000;

/// Fits cell-pair edge counts to both planted block matrices by iterative
/// proportional fitting, starting from the number of available node pairs.
fn ipf_cell_pairs(
    cell_sizes: &[usize],
    first: &BlockMatrix,
    second: &BlockMatrix,
    num_edges: u64,
) -> Result<Vec<((usize, usize), f64)>> {
    let nc = cell_sizes.len();
    let (b1, b2) = (first.planted_b, second.planted_b);
    let cell_a = |c: usize| c / b2;
    let cell_b = |c: usize| c % b2;
    let key = |r: usize, s: usize, b: usize| r.min(s) * b + r.max(s);
    let t1: Vec<f64> = {
        let mut t = vec![0.0; b1 * b1];
        for ((r, s), x) in first.pair_targets(num_edges) {
            t[key(r, s, b1)] = x;
        }
        t
    };
    let t2: Vec<f64> = {
        let mut t = vec![0.0; b2 * b2];
        for ((r, s), x) in second.pair_targets(num_edges) {
            t[key(r, s, b2)] = x;
        }
        t
    };
    let mut cells: Vec<((usize, usize), f64)> = Vec::new();
    for c in 0..nc {
        for d in c..nc {
            cells.push(((c, d), pair_count(cell_sizes[c], cell_sizes[d], c == d) as f64));
        }
    }
    let marg = |cells: &[((usize, usize), f64)], which: usize| {
        let (b, f): (usize, &dyn Fn(usize) -> usize) = if which == 0 { (b1, &cell_a) } else { (b2, &cell_b) };
        let mut m = vec![0.0; b * b];
        for &((c, d), x) in cells {
            m[key(f(c), f(d), b)] += x;
        }
        m
    };
    let residual = |cells: &[((usize, usize), f64)]| {
        let mut worst: f64 = 0.0;
        for (which, target) in [(0, &t1), (1, &t2)] {
            for (got, want) in marg(cells, which).iter().zip(target.iter()) {
                let scale = want.abs().max(1.0);
                worst = worst.max((got - want).abs() / scale);
            }
        }
        worst
    };
    for _ in 0..IPF_MAX_ITER {
        for (which, target) in [(0, &t1), (1, &t2)] {
            let m = marg(&cells, which);
            let (b, f): (usize, &dyn Fn(usize) -> usize) = if which == 0 { (b1, &cell_a) } else { (b2, &cell_b) };
            for ((c, d), x) in cells.iter_mut() {
                let k = key(f(*c), f(*d), b);
                *x = if m[k] > 0.0 { *x * target[k] / m[k] } else { 0.0 };
            }
        }
        if residual(&cells) < IPF_TOL {
            return Ok(cells);
        }
    }
    Err(Error::IpfNonConvergence {
        iterations: IPF_MAX_ITER,
        residual: residual(&cells),
        marginals: format!("first {t1:?}, second {t2:?}"),
    })
}

/// Network with two coexisting planted partitions. Nodes are split evenly
/// over the cross cells (first block × second block); cell-pair edge quotas
/// reproduce both block matrices as marginals.
pub fn scbm_generate<R: Rng>(
    n: usize,
    expected_degree: f64,
    first: &BlockMatrix,
    second: &BlockMatrix,
    rng: &mut R,
) -> Result<ScbmNetwork> {
    let (b1, b2) = (first.planted_b, second.planted_b);
    let nc = b1 * b2;
    if n < nc {
        return Err(Error::Domain(format!("{n} nodes cannot fill {nc} cross cells")));
    }
    let num_edges = target_edges(n, expected_degree)?;
    let sizes = balanced_sizes(n, nc);
    let fitted = ipf_cell_pairs(&sizes, first, second, num_edges)?;
    let quotas = largest_remainder(&fitted.iter().map(|c| c.1).collect::<Vec<_>>(), num_edges);

    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(nc);
    let mut la = Vec::with_capacity(n);
    let mut lb = Vec::with_capacity(n);
    let mut next = 0;
    for (c, &size) in sizes.iter().enumerate() {
        groups.push((next..next + size).collect());
        la.extend(std::iter::repeat_n((c / b2) as u32, size));
        lb.extend(std::iter::repeat_n((c % b2) as u32, size));
        next += size;
    }
    let mut edges = Vec::with_capacity(num_edges as usize);
    let mut cell_quotas = Vec::with_capacity(fitted.len());
    for (((c, d), _), q) in fitted.iter().zip(quotas) {
        place_edges(rng, &groups[*c], &groups[*d], c == d, q, &mut edges)?;
        cell_quotas.push(((*c, *d), q));
    }
    Ok(ScbmNetwork {
        graph: Graph::from_edges(n, &edges)?,
        first: Partition::new(la)?,
        second: Partition::new(lb)?,
        cell_quotas,
    })
}

/// Metadata that copies each node's planted label with probability (1+ρ)/2
/// and otherwise takes one of the other labels uniformly.
pub fn correlated_metadata<R: Rng>(planted: &Partition, rho: f64, rng: &mut R) -> Result<Partition> {
    check_unit("rho", rho)?;
    let b = planted.num_blocks() as u32;
    let keep = (1.0 + rho) / 2.0;
    let labels: Vec<u32> = planted
        .labels()
        .iter()
        .map(|&l| {
            if b == 1 || rng.random::<f64>() < keep {
                l
            } else {
                let other = rng.random_range(0..b - 1);
                if other >= l {
                    other + 1
                } else {
                    other
                }
            }
        })
        .collect();
    Ok(Partition::canonical(&labels))
}

/// Fraction of nodes on which two labelings agree (labels compared as-is).
pub fn agreement(a: &[u32], b: &[u32]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len().max(1) as f64
}

/// Fraction of nodes covered by the best one-to-one matching between the
/// blocks of `found` and those of `planted` (unmatched blocks count as
/// errors). Exact for up to 16 planted blocks; greedy beyond.
pub fn overlap(found: &Partition, planted: &Partition) -> f64 {
    let n = found.len().min(planted.len());
    if n == 0 {
        return 1.0;
    }
    let (bf, bp) = (found.num_blocks(), planted.num_blocks());
    let mut table = vec![0u64; bf * bp];
    for i in 0..n {
        table[found.label(i) * bp + planted.label(i)] += 1;
    }
    let matched = if bp <= 16 {
        // dp[mask] = best count with planted blocks in `mask` already used
        let mut dp = vec![0u64; 1 << bp];
        for r in 0..bf {
            let row = &table[r * bp..(r + 1) * bp];
            let prev = dp.clone();
            for mask in 0..(1usize << bp) {
                for (s, &x) in row.iter().enumerate() {
                    if mask & (1 << s) == 0 && x > 0 {
                        let next = mask | (1 << s);
                        dp[next] = dp[next].max(prev[mask] + x);
                    }
                }
            }
        }
        dp.into_iter().max().unwrap_or(0)
    } else {
        let mut cells: Vec<(u64, usize, usize)> = (0..bf * bp).map(|i| (table[i], i / bp, i % bp)).collect();
        cells.sort_by(|a, b| b.cmp(a));
        let (mut used_f, mut used_p) = (vec![false; bf], vec![false; bp]);
        let mut total = 0;
        for (x, r, s) in cells {
            if !used_f[r] && !used_p[s] {
                used_f[r] = true;
                used_p[s] = true;
                total += x;
            }
        }
        total
    };
    matched as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::block_stats;
    use crate::rng::stream_rng;

    #[test]
    fn theta_constructors() {
        let bc = theta_bc(500, 0.25).unwrap();
        assert_eq!(bc.theta, vec![750.0, 250.0, 250.0, 750.0]);
        let cp = theta_cp(500, 0.05).unwrap();
        assert_eq!(cp.theta, vec![950.0, 500.0, 500.0, 50.0]);
        let flat = theta_bc(500, 0.5).unwrap();
        assert!(flat.theta.iter().all(|&x| x == 500.0));
        assert!(theta_bc(500, 1.5).is_err());
        assert!(theta_cp(500, -0.1).is_err());
        assert_eq!(theta_bc_blocks(500, 0.25, 2).unwrap(), bc);
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(&[1.5, 1.5, 2.0], 5), vec![2, 1, 2]);
        assert_eq!(largest_remainder(&[0.3, 0.3, 0.4], 1), vec![0, 0, 1]);
        let v = largest_remainder(&[450.0, 100.0, 450.0], 1000);
        assert_eq!(v, vec![450, 100, 450]);
    }

    #[test]
    fn triangular_decoding_enumerates_all_pairs() {
        for n in 2..12u64 {
            let mut seen = Vec::new();
            for idx in 0..n * (n - 1) / 2 {
                let (a, b) = triangular_pair(idx, n);
                assert!(a < b && b < n);
                seen.push((a, b));
            }
            let mut sorted = seen.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), seen.len());
            assert_eq!(sorted, seen);
        }
    }

    #[test]
    fn sbm_quotas_are_exact() {
        let mut rng = stream_rng(3, 0);
        let theta = theta_bc(1000, 0.1).unwrap();
        let (g, p) = sbm_generate(200, 10.0, &theta, &mut rng).unwrap();
        assert_eq!(g.num_edges(), 1000);
        let s = block_stats(&g, &p).unwrap();
        assert_eq!(s.e_in, 900);
        assert_eq!(s.e_out, 100);
    }

    #[test]
    fn sbm_symmetric_point_halves_edges() {
        let mut rng = stream_rng(4, 0);
        let (g, p) = sbm_generate(200, 10.0, &theta_bc(1000, 0.5).unwrap(), &mut rng).unwrap();
        let s = block_stats(&g, &p).unwrap();
        assert_eq!((s.e_in, s.e_out), (500, 500));
    }

    #[test]
    fn sbm_mean_degree_over_seeds() {
        for seed in 0..50 {
            let mut rng = stream_rng(seed, 0);
            let (g, _) = sbm_generate(101, 10.0, &theta_bc_blocks(505, 0.2, 3).unwrap(), &mut rng).unwrap();
            let mean = 2.0 * g.num_edges() as f64 / g.num_nodes() as f64;
            assert!((mean - 10.0).abs() <= 0.5);
        }
    }

    #[test]
    fn sbm_infeasible_density() {
        let mut rng = stream_rng(5, 0);
        let res = sbm_generate(10, 8.0, &theta_bc(40, 0.0).unwrap(), &mut rng);
        assert!(matches!(res, Err(Error::Infeasible(_))));
    }

    #[test]
    fn sbm_is_seeded() {
        let theta = theta_bc(250, 0.2).unwrap();
        let a = sbm_generate(50, 10.0, &theta, &mut stream_rng(8, 0)).unwrap();
        let b = sbm_generate(50, 10.0, &theta, &mut stream_rng(8, 0)).unwrap();
        assert_eq!(a.0.edges(), b.0.edges());
    }

    #[test]
    fn scbm_marginals_match_both_matrices() {
        let e = 500;
        let bc = theta_bc(e, 0.25).unwrap();
        let cp = theta_cp(e, 0.05).unwrap();
        let net = scbm_generate(100, 10.0, &bc, &cp, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(net.graph.num_edges(), 500);
        for (planted, theta) in [(&net.first, &bc), (&net.second, &cp)] {
            let s = block_stats(&net.graph, planted).unwrap();
            let targets = theta.pair_targets(e);
            for ((r, t), want) in targets {
                let got = if r == t { s.e(r, r) as f64 / 2.0 } else { s.e(r, t) as f64 };
                assert!((got - want).abs() <= 4.0, "({r},{t}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn scbm_with_coincident_matrices_collapses() {
        let bc = theta_bc(500, 0.2).unwrap();
        let net = scbm_generate(100, 10.0, &bc, &bc, &mut stream_rng(2, 0)).unwrap();
        // cells that disagree between the two plantings receive no edges
        // beyond what the shared marginal allows; the realized split matches
        // the single-matrix generator's quotas
        let s = block_stats(&net.graph, &net.first).unwrap();
        assert_eq!(net.graph.num_edges(), 500);
        assert!((s.e_in as f64 - 400.0).abs() <= 4.0);
    }

    #[test]
    fn correlated_metadata_extremes_and_rate() {
        let planted = Partition::canonical(&(0..10_000).map(|i| (i % 2) as u32).collect::<Vec<_>>());
        let mut rng = stream_rng(6, 0);
        let same = correlated_metadata(&planted, 1.0, &mut rng).unwrap();
        assert_eq!(same, planted);
        for (rho, p) in [(0.0, 0.5), (0.7, 0.85)] {
            let m = correlated_metadata(&planted, rho, &mut rng).unwrap();
            let agree = overlap(&m, &planted);
            let sd = (p * (1.0 - p) / 10_000f64).sqrt();
            assert!((agree - p).abs() <= 3.0 * sd + 1e-12 || (rho == 0.0 && (1.0 - agree - p).abs() <= 3.0 * sd), "rho={rho}: {agree}");
        }
    }

    #[test]
    fn overlap_matching() {
        let planted = Partition::new(vec![0, 0, 0, 1, 1, 1]).unwrap();
        let flipped = Partition::new(vec![0, 0, 0, 1, 1, 1].iter().map(|&x| 1 - x).collect()).unwrap();
        assert_eq!(overlap(&Partition::canonical(flipped.labels()), &planted), 1.0);
        assert_eq!(overlap(&Partition::trivial(6), &planted), 0.5);
        assert!((overlap(&Partition::singletons(6), &planted) - 2.0 / 6.0).abs() < 1e-12);
        let finer = Partition::new(vec![0, 0, 1, 2, 2, 2]).unwrap();
        assert!((overlap(&finer, &planted) - 5.0 / 6.0).abs() < 1e-12);
    }
}
