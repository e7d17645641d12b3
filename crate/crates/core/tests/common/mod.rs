//! Exact-arithmetic reference values shared by the integration tests.
//!
//! Description lengths are carried as ln(num/den) with big-integer num and
//! den, built factor by factor from the model formulas; only the final
//! logarithm is floating point.

#![allow(dead_code)]

use std::collections::BTreeMap;

use metablox::dl::Variant;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

pub fn big(x: u64) -> BigUint {
    BigUint::from(x)
}

pub fn fact(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * big(i))
}

/// x!! for even x.
pub fn dfact(x: u64) -> BigUint {
    assert!(x % 2 == 0);
    (1..=x / 2).fold(BigUint::one(), |acc, i| acc * big(2 * i))
}

pub fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    fact(n) / (fact(k) * fact(n - k))
}

pub fn multiset(n: u64, k: u64) -> BigUint {
    binom(n + k - 1, k)
}

/// Natural log of a big integer to double precision.
pub fn ln_big(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "ln of zero");
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Exact table of q(n, m): partitions of n into at most m parts.
pub struct QExact {
    table: Vec<Vec<BigUint>>,
}

impl QExact {
    pub fn new(n_max: usize) -> QExact {
        // q(n, m) = q(n, m-1) + q(n-m, m): either no part equals m (after
        // conjugation: at most m-1 parts) or remove one column of height m
        let mut t = vec![vec![BigUint::zero(); n_max + 1]; n_max + 1];
        for m in 0..=n_max {
            t[0][m] = BigUint::one();
        }
        for n in 1..=n_max {
            for m in 1..=n_max {
                let mut v = t[n][m - 1].clone();
                if n >= m {
                    v += &t[n - m][m];
                }
                t[n][m] = v;
            }
        }
        QExact { table: t }
    }

    pub fn q(&self, n: usize, m: usize) -> BigUint {
        let m = m.min(self.table.len() - 1);
        self.table[n][m].clone()
    }
}

/// Partitions of n listed by brute force (nonincreasing part sequences).
pub fn brute_partitions(n: u64) -> u64 {
    fn rec(rest: u64, max_part: u64) -> u64 {
        if rest == 0 {
            return 1;
        }
        (1..=max_part.min(rest)).map(|p| rec(rest - p, p)).sum()
    }
    rec(n, n)
}

/// ln(num/den) accumulated factor by factor.
#[derive(Clone)]
pub struct LogRatio {
    num: BigUint,
    den: BigUint,
}

impl LogRatio {
    pub fn one() -> LogRatio {
        LogRatio {
            num: BigUint::one(),
            den: BigUint::one(),
        }
    }
    pub fn mul(&mut self, x: BigUint) {
        self.num *= x;
    }
    pub fn div(&mut self, x: BigUint) {
        self.den *= x;
    }
    pub fn nats(&self) -> f64 {
        ln_big(&self.num) - ln_big(&self.den)
    }
}

/// Per-term reference description length.
#[derive(Debug, Clone, Copy)]
pub struct OracleDl {
    pub likelihood: f64,
    pub edge_prior: f64,
    pub degree_prior: f64,
    pub partition_prior: f64,
    pub total: f64,
}

/// Evaluates every factor of the model formulas for the graph on nodes
/// `0..n` with `edges` and contiguous block labels.
pub fn oracle_dl(n: usize, edges: &[(usize, usize)], labels: &[u32], v: Variant, q: &QExact) -> OracleDl {
    let b = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    let e_total = edges.len() as u64;
    let mut sizes = vec![0u64; b];
    for &l in labels {
        sizes[l as usize] += 1;
    }
    let mut ers = vec![vec![0u64; b]; b];
    let mut deg = vec![0u64; n];
    for &(i, j) in edges {
        let (r, s) = (labels[i] as usize, labels[j] as usize);
        ers[r][s] += 1;
        ers[s][r] += 1;
        deg[i] += 1;
        deg[j] += 1;
    }
    let er: Vec<u64> = (0..b).map(|r| ers[r].iter().sum()).collect();
    let dc_like = matches!(v, Variant::Dc | Variant::PpUniform | Variant::PpNonUniform);

    let mut like = LogRatio::one();
    if dc_like {
        for r in 0..b {
            like.mul(fact(er[r]));
        }
        for &k in &deg {
            like.div(fact(k));
        }
    } else {
        for r in 0..b {
            like.mul(big(sizes[r]).pow(er[r] as u32));
        }
    }
    for r in 0..b {
        like.div(dfact(ers[r][r]));
        for s in r + 1..b {
            like.div(fact(ers[r][s]));
        }
    }

    let mut edge = LogRatio::one();
    let bb = b as u64;
    let e_in: u64 = (0..b).map(|r| ers[r][r] / 2).sum();
    let e_out = e_total - e_in;
    let pairs = bb * bb.saturating_sub(1) / 2;
    match v {
        Variant::Ndc | Variant::Dc => edge.mul(multiset(bb * (bb + 1) / 2, e_total)),
        Variant::PpUniform => {
            edge.mul(big(bb).pow(e_in as u32));
            for r in 0..b {
                edge.mul(fact(ers[r][r] / 2));
            }
            edge.mul(big(pairs).pow(e_out as u32));
            for r in 0..b {
                for s in r + 1..b {
                    edge.mul(fact(ers[r][s]));
                }
            }
            edge.div(fact(e_in));
            edge.div(fact(e_out));
        }
        Variant::PpNonUniform => {
            edge.mul(big(pairs).pow(e_out as u32));
            for r in 0..b {
                for s in r + 1..b {
                    edge.mul(fact(ers[r][s]));
                }
            }
            edge.div(fact(e_out));
            edge.mul(binom(bb + e_in - 1, e_in));
        }
    }
    if v.is_planted() && b > 1 {
        edge.mul(big(e_total + 1));
    }

    let mut degree = LogRatio::one();
    if dc_like {
        for r in 0..b {
            degree.mul(fact(sizes[r]));
            let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
            for i in 0..n {
                if labels[i] as usize == r {
                    *hist.entry(deg[i]).or_default() += 1;
                }
            }
            for (_, c) in hist {
                degree.div(fact(c));
            }
            degree.mul(q.q(er[r] as usize, sizes[r] as usize));
        }
    }

    let mut part = LogRatio::one();
    let nn = n as u64;
    part.mul(fact(nn));
    for r in 0..b {
        part.div(fact(sizes[r]));
    }
    part.mul(binom(nn - 1, bb - 1));
    part.mul(big(nn));

    let (l, e, d, p) = (like.nats(), edge.nats(), degree.nats(), part.nats());
    let mut all = like;
    all.mul(edge.num.clone());
    all.div(edge.den.clone());
    all.mul(degree.num.clone());
    all.div(degree.den.clone());
    all.mul(part.num.clone());
    all.div(part.den.clone());
    OracleDl {
        likelihood: l,
        edge_prior: e,
        degree_prior: d,
        partition_prior: p,
        total: all.nats(),
    }
}

/// All set partitions of `n` elements with at most `max_blocks` blocks, as
/// restricted growth strings.
pub fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, max_b: usize, used: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        let top = (used + 1).min(max_b as u32);
        for l in 0..top {
            cur.push(l);
            rec(i + 1, n, max_b, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(0, n, max_blocks, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// All node pairs of K_n.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// Edge subset of K_n selected by the bits of `mask`.
pub fn subset_edges(n: usize, mask: u64) -> Vec<(usize, usize)> {
    all_pairs(n)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, e)| e)
        .collect()
}

pub fn random_edges<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let m = all_pairs(n).len();
    let mask = if m >= 64 { rng.random() } else { rng.random_range(0..1u64 << m) };
    subset_edges(n, mask)
}
