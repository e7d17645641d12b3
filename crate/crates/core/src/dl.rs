//! Description length of a graph under a partition, for the non-degree-
//! corrected, degree-corrected and planted-partition microcanonical SBMs.
//!
//! Every quantity is in nats. The simple-graph assumption makes the
//! adjacency-factorial terms of the likelihoods vanish.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{lbinom, ldfact_even, lmultiset, log_factorial, QTable};
use crate::error::{Error, Result};
use crate::graph::{block_stats, BlockStats, Graph, Partition};

/// SBM variant whose description length is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ndc")]
    Ndc,
    #[serde(rename = "dc")]
    Dc,
    #[serde(rename = "pp-uniform")]
    PpUniform,
    #[serde(rename = "pp-nonuniform")]
    PpNonUniform,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Ndc,
        Variant::Dc,
        Variant::PpUniform,
        Variant::PpNonUniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ndc => "ndc",
            Variant::Dc => "dc",
            Variant::PpUniform => "pp-uniform",
            Variant::PpNonUniform => "pp-nonuniform",
        }
    }

    /// Key used in report maps (`pp_uniform` rather than `pp-uniform`).
    pub fn key(self) -> &'static str {
        match self {
            Variant::Ndc => "ndc",
            Variant::Dc => "dc",
            Variant::PpUniform => "pp_uniform",
            Variant::PpNonUniform => "pp_nonuniform",
        }
    }

    pub fn is_degree_corrected(self) -> bool {
        !matches!(self, Variant::Ndc)
    }

    pub fn is_planted(self) -> bool {
        matches!(self, Variant::PpUniform | Variant::PpNonUniform)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ndc" => Ok(Variant::Ndc),
            "dc" => Ok(Variant::Dc),
            "pp-uniform" => Ok(Variant::PpUniform),
            "pp-nonuniform" | "pp-non-uniform" => Ok(Variant::PpNonUniform),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

/// Per-term description length. `total` is the sum of the five components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlBreakdown {
    pub variant: Variant,
    pub likelihood_nats: f64,
    pub edge_prior_nats: f64,
    pub degree_prior_nats: f64,
    pub partition_prior_nats: f64,
    pub pp_hyperprior_nats: f64,
    pub total: f64,
}

/// Σ_{r<s} ln e_rs! and Σ_r ln e_rr!!.
fn matrix_factorials(s: &BlockStats) -> (f64, f64) {
    let b = s.num_blocks;
    let mut off = 0.0;
    let mut diag = 0.0;
    for r in 0..b {
        diag += ldfact_even(s.e(r, r));
        for t in r + 1..b {
            off += log_factorial(s.e(r, t));
        }
    }
    (off, diag)
}

/// Negative log-likelihood of the non-degree-corrected SBM.
pub fn ndc_likelihood(s: &BlockStats) -> f64 {
    let (off, diag) = matrix_factorials(s);
    let sizes: f64 = s
        .block_sizes
        .iter()
        .zip(&s.block_degree_sums)
        .filter(|(_, &e)| e > 0)
        .map(|(&n, &e)| e as f64 * (n as f64).ln())
        .sum();
    sizes - off - diag
}

/// Σ_i ln k_i!.
pub fn log_degree_factorials(g: &Graph) -> f64 {
    g.degrees().iter().map(|&k| log_factorial(k as u64)).sum()
}

/// Negative log-likelihood of the degree-corrected SBM (also used by PP).
pub fn dc_likelihood(g: &Graph, s: &BlockStats) -> f64 {
    let (off, diag) = matrix_factorials(s);
    let blocks: f64 = s.block_degree_sums.iter().map(|&e| log_factorial(e)).sum();
    blocks - off - diag - log_degree_factorials(g)
}

/// Edge-count prior split as `(matrix term, e_in/e_out hyperprior term)`.
fn edge_prior_parts(s: &BlockStats, v: Variant, num_edges: u64) -> (f64, f64) {
    let b = s.num_blocks as u64;
    let hyper = if b > 1 {
        ((num_edges + 1) as f64).ln()
    } else {
        0.0
    };
    // B^{e_in} and C(B,2)^{e_out}; e_out is zero whenever B = 1.
    let pairs = b * b.saturating_sub(1) / 2;
    let out_term = if s.e_out > 0 {
        s.e_out as f64 * (pairs as f64).ln()
    } else {
        0.0
    };
    match v {
        Variant::Ndc | Variant::Dc => (lmultiset(b * (b + 1) / 2, num_edges), 0.0),
        Variant::PpUniform => {
            let (off, _) = matrix_factorials(s);
            let halves: f64 = (0..s.num_blocks).map(|r| log_factorial(s.e(r, r) / 2)).sum();
            let matrix = -log_factorial(s.e_in) - log_factorial(s.e_out)
                + s.e_in as f64 * (b as f64).ln()
                + halves
                + out_term
                + off;
            (matrix, hyper)
        }
        Variant::PpNonUniform => {
            let (off, _) = matrix_factorials(s);
            let matrix = -log_factorial(s.e_out) + out_term + off + lmultiset(b, s.e_in);
            (matrix, hyper)
        }
    }
}

/// Negative log prior of the block edge-count matrix, including the PP
/// hyperprior on (e_in, e_out).
pub fn edge_matrix_prior(s: &BlockStats, v: Variant, num_edges: u64) -> f64 {
    let (m, h) = edge_prior_parts(s, v, num_edges);
    m + h
}

/// Negative log prior of the degree sequence given the blocks.
pub fn degree_prior(s: &BlockStats, qt: &QTable) -> f64 {
    s.block_sizes
        .iter()
        .zip(&s.block_degree_sums)
        .zip(&s.degree_histograms)
        .map(|((&n, &e), hist)| {
            let hist_term: f64 = hist.values().map(|&c| log_factorial(c)).sum();
            log_factorial(n) - hist_term + qt.log_q(e, n)
        })
        .sum()
}

/// Negative log prior of the partition: labels given sizes, sizes given B,
/// and B uniform on 1..N.
pub fn partition_prior_sizes(block_sizes: &[u64]) -> f64 {
    let n: u64 = block_sizes.iter().sum();
    let b = block_sizes.len() as u64;
    let sizes: f64 = block_sizes.iter().map(|&x| log_factorial(x)).sum();
    log_factorial(n) - sizes + lbinom(n - 1, b - 1) + (n as f64).ln()
}

pub fn partition_prior(p: &Partition) -> f64 {
    partition_prior_sizes(&p.block_sizes())
}

/// Λ = exp(-(Σ1 - Σ2)), the posterior odds of model 1 over model 2.
pub fn posterior_odds(sigma_1: f64, sigma_2: f64) -> f64 {
    (-(sigma_1 - sigma_2)).exp()
}

/// Description length from precomputed block statistics.
pub fn dl_from_stats(g: &Graph, s: &BlockStats, v: Variant, qt: &QTable) -> DlBreakdown {
    let num_edges = g.num_edges() as u64;
    let likelihood = match v {
        Variant::Ndc => ndc_likelihood(s),
        _ => dc_likelihood(g, s),
    };
    let (edge_prior, hyper) = edge_prior_parts(s, v, num_edges);
    let degree = if v.is_degree_corrected() {
        degree_prior(s, qt)
    } else {
        0.0
    };
    let partition = partition_prior_sizes(&s.block_sizes);
    DlBreakdown {
        variant: v,
        likelihood_nats: likelihood,
        edge_prior_nats: edge_prior,
        degree_prior_nats: degree,
        partition_prior_nats: partition,
        pp_hyperprior_nats: hyper,
        total: likelihood + edge_prior + degree + partition + hyper,
    }
}

/// Description length of `g` under partition `p` and variant `v`.
pub fn dl_with(g: &Graph, p: &Partition, v: Variant, qt: &QTable) -> Result<DlBreakdown> {
    let s = block_stats(g, p)?;
    Ok(dl_from_stats(g, &s, v, qt))
}

/// [`dl_with`] using the process-wide q table.
pub fn dl(g: &Graph, p: &Partition, v: Variant) -> Result<DlBreakdown> {
    dl_with(g, p, v, QTable::global())
}
