//! Label-permutation null model for metadata partitions.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::QTable;
use crate::dl::{dl_from_stats, Variant};
use crate::error::{Error, Result};
use crate::graph::{block_stats, Graph, Partition};
use crate::rng::stream_rng;

pub const DEFAULT_PERMUTATIONS: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Description lengths of a graph under `n_p` label-permuted copies of a
/// metadata partition. The observed labelling is not one of the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationEnsemble {
    pub variant: Variant,
    pub n_p: usize,
    pub dls: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
}

/// Uniformly random permutation of the label sequence; block sizes are kept.
pub fn permute_labels<R: Rng + ?Sized>(d: &Partition, rng: &mut R) -> Partition {
    let mut labels = d.labels().to_vec();
    labels.shuffle(rng);
    Partition::new(labels).expect("a permutation keeps labels contiguous")
}

/// Scores `n_p` permutations of `d`; permutation `i` draws from stream `i` of
/// `seed`, so the result does not depend on scheduling.
pub fn randomized_dl_distribution(
    g: &Graph,
    d: &Partition,
    v: Variant,
    n_p: usize,
    alpha: f64,
    seed: u64,
    qt: &QTable,
) -> Result<PermutationEnsemble> {
    if d.len() != g.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: g.num_nodes(),
            got: d.len(),
        });
    }
    if v.is_degree_corrected() {
        qt.reserve(2 * g.num_edges(), g.num_nodes());
    }
    let dls = (0..n_p)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let p = permute_labels(d, &mut rng);
            let s = block_stats(g, &p).expect("length checked above");
            dl_from_stats(g, &s, v, qt).total
        })
        .collect();
    Ok(PermutationEnsemble {
        variant: v,
        n_p,
        dls,
        alpha,
        seed,
    })
}

/// Order statistic at rank ⌈α·n⌉ (1-based), without interpolation.
pub fn lower_order_statistic(values: &[f64], alpha: f64) -> Result<f64> {
    let n = values.len();
    let mass = alpha * n as f64;
    if n == 0 || mass < 1.0 - 1e-9 {
        return Err(Error::Config(format!(
            "alpha = {alpha} with {n} permutations selects no order statistic; use at least {} permutations",
            (1.0 / alpha).ceil()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((mass - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

impl PermutationEnsemble {
    /// Σ_rand: the α-quantile of the ensemble as a lower order statistic.
    pub fn sigma_rand(&self) -> Result<f64> {
        lower_order_statistic(&self.dls, self.alpha)
    }

    /// Fraction of permutations with Σ ≤ `sigma_d`, floored at 1/n_p.
    pub fn bestest_pvalue(&self, sigma_d: f64) -> f64 {
        let n = self.dls.len().max(1) as f64;
        let hits = self.dls.iter().filter(|&&x| x <= sigma_d).count() as f64;
        (hits / n).max(1.0 / n)
    }

    /// One-column CSV of the ensemble values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dl_nats"])?;
        for x in &self.dls {
            out.write_record([format!("{x:.17e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn sigma_rand(ens: &PermutationEnsemble) -> Result<f64> {
    ens.sigma_rand()
}

pub fn bestest_pvalue(sigma_d: f64, ens: &PermutationEnsemble) -> f64 {
    ens.bestest_pvalue(sigma_d)
}
