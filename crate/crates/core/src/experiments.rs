//! Replication harness for the synthetic experiments: network batches,
//! tidy long-format rows and the PASS/FAIL property checks over them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::QTable;
use crate::dl::Variant;
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::inference::{sample_partitions, InferenceConfig};
use crate::metablox::{infer_variants, metablox_with_inference, MetabloxConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::synthetic::{
    correlated_metadata, overlap, sbm_generate, scbm_generate, theta_bc, theta_bc_blocks, theta_cp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig3,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig3,
        Experiment::Fig6,
        Experiment::Fig7,
        Experiment::Fig8,
        Experiment::Fig9,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Fig3 => "fig3",
            Experiment::Fig6 => "fig6",
            Experiment::Fig7 => "fig7",
            Experiment::Fig8 => "fig8",
            Experiment::Fig9 => "fig9",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownVariant(format!("unknown experiment '{s}' (expected fig3|fig6|fig7|fig8|fig9)")))
    }
}

/// Everything that determines a replication run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub experiment: Experiment,
    pub seed: u64,
    pub networks_per_cell: usize,
    pub sizes: Vec<usize>,
    pub blocks: Vec<usize>,
    pub mus: Vec<f64>,
    pub lambda: f64,
    pub rhos: Vec<f64>,
    pub expected_degree: f64,
    pub variants: Vec<Variant>,
    pub n_permutations: usize,
    pub alpha: f64,
    pub inference: InferenceConfig,
    /// Sweeps between recorded samples of the posterior chain (fig9).
    pub sample_thin: usize,
}

fn grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step * 1e6).round() / 1e6).collect()
}

impl Plan {
    /// Full-scale settings of each experiment.
    pub fn full(experiment: Experiment, seed: u64) -> Plan {
        let base = Plan {
            experiment,
            seed,
            networks_per_cell: 50,
            sizes: vec![200],
            blocks: vec![2],
            mus: vec![0.1],
            lambda: 0.05,
            rhos: vec![0.7, 0.8, 0.9],
            expected_degree: 10.0,
            variants: vec![Variant::Ndc],
            n_permutations: 500,
            alpha: 0.01,
            inference: InferenceConfig::default(),
            sample_thin: 10,
        };
        match experiment {
            Experiment::Fig3 => Plan {
                networks_per_cell: 1,
                sizes: vec![100],
                mus: vec![0.25],
                rhos: grid(0.01),
                variants: vec![Variant::Dc, Variant::PpUniform],
                ..base
            },
            Experiment::Fig6 => Plan {
                networks_per_cell: 100,
                mus: vec![0.1, 0.2, 0.3],
                ..base
            },
            Experiment::Fig7 => Plan {
                sizes: (1..=10).map(|i| 100 * i).collect(),
                variants: vec![Variant::Ndc, Variant::Dc, Variant::PpUniform],
                ..base
            },
            Experiment::Fig8 => Plan {
                sizes: vec![400],
                blocks: vec![2, 3, 4, 5, 6, 7, 8, 9, 10],
                ..base
            },
            Experiment::Fig9 => Plan {
                networks_per_cell: 1,
                sizes: vec![100],
                mus: vec![0.25],
                rhos: vec![],
                variants: vec![Variant::Dc],
                ..base
            },
        }
    }

    /// Shrinks network replicates and permutations by `scale` in (0, 1].
    pub fn scaled(mut self, scale: f64) -> Result<Plan> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!("scale factor must lie in (0, 1], got {scale}")));
        }
        let min_perm = (1.0 / self.alpha).ceil() as usize;
        self.networks_per_cell = ((self.networks_per_cell as f64 * scale).round() as usize).max(1);
        self.n_permutations = ((self.n_permutations as f64 * scale).round() as usize).max(min_perm);
        Ok(self)
    }

    fn metablox_config(&self) -> MetabloxConfig {
        MetabloxConfig {
            variants: self.variants.clone(),
            n_permutations: self.n_permutations,
            alpha: self.alpha,
            seed: 0,
            inference: InferenceConfig {
                parallel: false,
                ..self.inference.clone()
            },
        }
    }
}

/// One row per network × metadata set × variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: Experiment,
    pub network: usize,
    pub seed: u64,
    pub n: usize,
    pub num_edges: usize,
    pub planted_b: usize,
    pub k: f64,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub rho: f64,
    pub metadata: String,
    pub variant: Variant,
    pub gamma: Option<f64>,
    pub edge_compression: Option<f64>,
    pub sigma_d: f64,
    pub sigma_opt: f64,
    pub sigma_rand: f64,
    pub pvalue: f64,
    pub relevant: bool,
    pub num_blocks_opt: usize,
}

/// One recorded posterior sample of the two-partition network (fig9).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample: usize,
    pub variant: Variant,
    pub sigma: f64,
    pub num_blocks: usize,
    pub overlap_bc: f64,
    pub overlap_cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> PropertyCheck {
        PropertyCheck {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{}: {tag} ({})", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub samples: Vec<SampleRow>,
    pub properties: Vec<PropertyCheck>,
}

/// Deterministic seed of network `index` in cell `cell`.
pub fn network_seed(master: u64, experiment: Experiment, cell: usize, index: usize) -> u64 {
    let e = derive_seed(master, experiment as u64 + 1);
    derive_seed(derive_seed(e, cell as u64), index as u64)
}

struct NetworkJob {
    cell: usize,
    index: usize,
    n: usize,
    b: usize,
    mu: f64,
}

/// Scores planted-partition metadata sets on one network; inference runs once
/// and is shared by every ρ.
fn score_network(
    plan: &Plan,
    g: &Graph,
    metadata: &[(String, f64, Partition)],
    seed: u64,
    qt: &QTable,
) -> Result<Vec<(String, f64, crate::metablox::MetabloxReport)>> {
    let cfg = MetabloxConfig {
        seed,
        ..plan.metablox_config()
    };
    let inferred = infer_variants(g, &cfg, qt)?;
    metadata
        .iter()
        .map(|(kind, rho, d)| {
            let rep = metablox_with_inference(g, d, &inferred, &cfg, qt)?;
            Ok((kind.clone(), *rho, rep))
        })
        .collect()
}

fn rows_from(
    plan: &Plan,
    job: &NetworkJob,
    seed: u64,
    g: &Graph,
    lambda: Option<f64>,
    scored: Vec<(String, f64, crate::metablox::MetabloxReport)>,
) -> Vec<Row> {
    let mut rows = Vec::new();
    for (kind, rho, rep) in scored {
        for r in &rep.variants {
            rows.push(Row {
                experiment: plan.experiment,
                network: job.index,
                seed,
                n: job.n,
                num_edges: g.num_edges(),
                planted_b: job.b,
                k: plan.expected_degree,
                mu: job.mu,
                lambda,
                rho,
                metadata: kind.clone(),
                variant: r.variant,
                gamma: r.gamma,
                edge_compression: r.edge_compression,
                sigma_d: r.sigma_d,
                sigma_opt: r.sigma_opt,
                sigma_rand: r.sigma_rand,
                pvalue: r.pvalue,
                relevant: r.relevant,
                num_blocks_opt: r.num_blocks_opt,
            });
        }
    }
    rows
}

fn planted_metadata<R: Rng>(planted: &Partition, kind: &str, rhos: &[f64], rng: &mut R) -> Result<Vec<(String, f64, Partition)>> {
    rhos.iter()
        .map(|&rho| Ok((kind.to_string(), rho, correlated_metadata(planted, rho, rng)?)))
        .collect()
}

fn run_planted(plan: &Plan, qt: &QTable) -> Result<Vec<Row>> {
    let mut jobs = Vec::new();
    let mut cell = 0;
    for &n in &plan.sizes {
        for &b in &plan.blocks {
            for &mu in &plan.mus {
                for index in 0..plan.networks_per_cell {
                    jobs.push(NetworkJob { cell, index, n, b, mu });
                }
                cell += 1;
            }
        }
    }
    let per_job: Vec<Result<Vec<Row>>> = jobs
        .par_iter()
        .map(|job| {
            let seed = network_seed(plan.seed, plan.experiment, job.cell, job.index);
            let mut rng = stream_rng(seed, 0);
            let e = (job.n as f64 * plan.expected_degree / 2.0).round() as u64;
            let theta = theta_bc_blocks(e, job.mu, job.b)?;
            let (g, planted) = sbm_generate(job.n, plan.expected_degree, &theta, &mut rng)?;
            let mut meta_rng = stream_rng(seed, 1);
            let metadata = planted_metadata(&planted, "planted", &plan.rhos, &mut meta_rng)?;
            let scored = score_network(plan, &g, &metadata, seed, qt)?;
            Ok(rows_from(plan, job, seed, &g, None, scored))
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}

fn run_fig3(plan: &Plan, qt: &QTable) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for index in 0..plan.networks_per_cell {
        let n = plan.sizes[0];
        let mu = plan.mus[0];
        let seed = network_seed(plan.seed, plan.experiment, 0, index);
        let mut rng = stream_rng(seed, 0);
        let e = (n as f64 * plan.expected_degree / 2.0).round() as u64;
        let net = scbm_generate(n, plan.expected_degree, &theta_bc(e, mu)?, &theta_cp(e, plan.lambda)?, &mut rng)?;
        let mut meta_rng = stream_rng(seed, 1);
        let mut metadata = planted_metadata(&net.first, "bc", &plan.rhos, &mut meta_rng)?;
        metadata.extend(planted_metadata(&net.second, "cp", &plan.rhos, &mut meta_rng)?);
        let scored = score_network(plan, &net.graph, &metadata, seed, qt)?;
        let job = NetworkJob {
            cell: 0,
            index,
            n,
            b: 2,
            mu,
        };
        rows.extend(rows_from(plan, &job, seed, &net.graph, Some(plan.lambda), scored));
    }
    Ok(rows)
}

fn run_fig9(plan: &Plan, qt: &QTable) -> Result<Vec<SampleRow>> {
    let n = plan.sizes[0];
    let mu = plan.mus[0];
    let seed = network_seed(plan.seed, plan.experiment, 0, 0);
    let mut rng = stream_rng(seed, 0);
    let e = (n as f64 * plan.expected_degree / 2.0).round() as u64;
    let net = scbm_generate(n, plan.expected_degree, &theta_bc(e, mu)?, &theta_cp(e, plan.lambda)?, &mut rng)?;
    let mut out = Vec::new();
    for &v in &plan.variants {
        let cfg = InferenceConfig {
            seed: derive_seed(seed, 0x1000 + v as u64),
            ..plan.inference.clone()
        };
        for (p, sigma) in sample_partitions(&net.graph, v, &cfg, plan.sample_thin, qt)? {
            out.push(SampleRow {
                sample: out.len(),
                variant: v,
                sigma,
                num_blocks: p.num_blocks(),
                overlap_bc: overlap(&p, &net.first),
                overlap_cp: overlap(&p, &net.second),
            });
        }
    }
    Ok(out)
}

/// Runs the plan and evaluates its property checks.
pub fn run(plan: &Plan, qt: &QTable) -> Result<Outcome> {
    let mut out = Outcome::default();
    match plan.experiment {
        Experiment::Fig3 => out.rows = run_fig3(plan, qt)?,
        Experiment::Fig9 => out.samples = run_fig9(plan, qt)?,
        _ => out.rows = run_planted(plan, qt)?,
    }
    out.properties = properties(plan, &out);
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant or fewer than two points exist.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// γ values of rows matching the filter; undefined γ counts as +∞ (no
/// detectable relevance) so it is never silently dropped.
fn gammas<'a>(rows: impl Iterator<Item = &'a Row>) -> Vec<f64> {
    rows.map(|r| r.gamma.unwrap_or(f64::INFINITY)).collect()
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fig3_properties(plan: &Plan, rows: &[Row]) -> Vec<PropertyCheck> {
    let pp = plan
        .variants
        .iter()
        .copied()
        .find(|v| v.is_planted())
        .unwrap_or(Variant::PpUniform);
    let series = |kind: &str, v: Variant| -> (Vec<f64>, Vec<f64>) {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.metadata == kind && r.variant == v)
            .map(|r| (r.rho, r.gamma.unwrap_or(f64::INFINITY)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.into_iter().unzip()
    };
    let mut out = Vec::new();
    let (rho, g_dc) = series("bc", Variant::Dc);
    let (_, g_pp) = series("bc", pp);
    let s_dc = spearman(&rho, &g_dc);
    let s_pp = spearman(&rho, &g_pp);
    let at_one = rho.iter().position(|&r| same(r, 1.0)).map(|i| g_dc[i]);
    out.push(PropertyCheck::new(
        "bc metadata: gamma decreasing in rho (DC and PP)",
        s_dc.is_some_and(|s| s <= -0.9) && s_pp.is_some_and(|s| s <= -0.9),
        format!("spearman DC {s_dc:.3?}, PP {s_pp:.3?}; threshold <= -0.9"),
    ));
    out.push(PropertyCheck::new(
        "bc metadata: gamma DC near zero at rho = 1",
        at_one.is_some_and(|g| g <= 0.05),
        format!("gamma DC at rho=1: {at_one:.4?}; threshold <= 0.05"),
    ));
    let (rho, g_dc) = series("cp", Variant::Dc);
    let (_, g_pp) = series("cp", pp);
    let s_dc = spearman(&rho, &g_dc);
    let keep: Vec<usize> = (0..rho.len()).filter(|&i| g_dc[i] < 1.0).collect();
    let s_pp = spearman(
        &keep.iter().map(|&i| rho[i]).collect::<Vec<_>>(),
        &keep.iter().map(|&i| g_pp[i]).collect::<Vec<_>>(),
    );
    out.push(PropertyCheck::new(
        "cp metadata: gamma DC decreasing, gamma PP increasing in rho",
        s_dc.is_some_and(|s| s <= -0.9) && s_pp.is_some_and(|s| s >= 0.5),
        format!(
            "spearman DC {s_dc:.3?} (<= -0.9), PP {s_pp:.3?} (>= 0.5) over {} points with gamma DC < 1",
            keep.len()
        ),
    ));
    let floor = 1.0 / plan.n_permutations as f64;
    let saturated: Vec<&Row> = rows
        .iter()
        .filter(|r| r.variant == Variant::Dc && r.rho >= 0.8 - 1e-9)
        .collect();
    let bad = saturated.iter().filter(|r| !same(r.pvalue, floor)).count();
    out.push(PropertyCheck::new(
        "BESTest saturates at 1/n_p for rho >= 0.8 (DC)",
        !saturated.is_empty() && bad == 0,
        format!("{bad} of {} metadata sets above 1/n_p = {floor}", saturated.len()),
    ));
    out
}

fn fig6_properties(rows: &[Row], plan: &Plan) -> Vec<PropertyCheck> {
    let mut out = Vec::new();
    let comp = |mu: f64| {
        let mut seen = std::collections::BTreeMap::new();
        for r in rows.iter().filter(|r| r.variant == Variant::Ndc && same(r.mu, mu)) {
            seen.insert(r.network, r.edge_compression.unwrap_or(f64::INFINITY));
        }
        mean(&seen.into_values().collect::<Vec<_>>()).unwrap_or(f64::NAN)
    };
    let cs: Vec<f64> = plan.mus.iter().map(|&m| comp(m)).collect();
    out.push(PropertyCheck::new(
        "edge compression NDC increasing in mu",
        cs.windows(2).all(|w| w[0] < w[1]),
        format!("mean c NDC by mu {:?}: {}", plan.mus, fmt_list(&cs)),
    ));
    let (lo, hi) = (
        plan.mus.iter().copied().fold(f64::INFINITY, f64::min),
        plan.mus.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut ok = true;
    let mut detail = Vec::new();
    for &rho in &plan.rhos {
        let med = |mu: f64| {
            median(&gammas(
                rows.iter()
                    .filter(|r| r.variant == Variant::Ndc && same(r.mu, mu) && same(r.rho, rho)),
            ))
            .unwrap_or(f64::NAN)
        };
        let (a, b) = (med(lo), med(hi));
        ok &= b > a;
        detail.push(format!("rho={rho}: {a:.3} vs {b:.3}"));
    }
    out.push(PropertyCheck::new(
        format!("median gamma NDC larger for mu={hi} than mu={lo}"),
        ok,
        detail.join("; "),
    ));
    out
}

fn fig7_properties(rows: &[Row], plan: &Plan) -> Vec<PropertyCheck> {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for &v in &plan.variants {
        for &rho in &plan.rhos {
            let means: Vec<f64> = plan
                .sizes
                .iter()
                .map(|&n| {
                    mean(&gammas(
                        rows.iter()
                            .filter(|r| r.variant == v && r.n == n && same(r.rho, rho)),
                    ))
                    .unwrap_or(f64::NAN)
                })
                .collect();
            let grand = mean(&means).unwrap_or(f64::NAN);
            for m in &means {
                let dev = (m - grand).abs();
                worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
                ok &= dev <= 0.1;
            }
        }
    }
    vec![PropertyCheck::new(
        "gamma stable in N",
        ok,
        format!("largest deviation of a per-N mean from the grand mean: {worst:.4}; threshold 0.1"),
    )]
}

fn fig8_properties(rows: &[Row], plan: &Plan) -> Vec<PropertyCheck> {
    let mut out = Vec::new();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut spearman_ok = true;
    for &rho in &plan.rhos {
        let meds: Vec<f64> = plan
            .blocks
            .iter()
            .map(|&b| {
                median(&gammas(rows.iter().filter(|r| {
                    r.variant == Variant::Ndc && r.planted_b == b && same(r.rho, rho)
                })))
                .unwrap_or(f64::NAN)
            })
            .collect();
        let means: Vec<f64> = plan
            .blocks
            .iter()
            .map(|&b| {
                mean(&gammas(rows.iter().filter(|r| {
                    r.variant == Variant::Ndc && r.planted_b == b && same(r.rho, rho)
                })))
                .unwrap_or(f64::NAN)
            })
            .collect();
        let bs: Vec<f64> = plan.blocks.iter().map(|&b| b as f64).collect();
        let s = spearman(&bs, &means);
        spearman_ok &= s.is_some_and(|s| s <= -0.8);
        ok &= strictly_decreasing(&meds);
        detail.push(format!("rho={rho}: median {} spearman(mean) {s:.3?}", fmt_list(&meds)));
    }
    out.push(PropertyCheck::new(
        "median gamma NDC strictly decreasing in B",
        ok,
        detail.join("; "),
    ));
    out.push(PropertyCheck::new(
        "mean gamma NDC decreasing in B (spearman <= -0.8)",
        spearman_ok,
        "see median line for values",
    ));
    let cs: Vec<f64> = plan
        .blocks
        .iter()
        .map(|&b| {
            let mut seen = std::collections::BTreeMap::new();
            for r in rows.iter().filter(|r| r.variant == Variant::Ndc && r.planted_b == b) {
                seen.insert(r.network, r.edge_compression.unwrap_or(f64::INFINITY));
            }
            mean(&seen.into_values().collect::<Vec<_>>()).unwrap_or(f64::NAN)
        })
        .collect();
    out.push(PropertyCheck::new(
        "edge compression NDC strictly decreasing in B",
        strictly_decreasing(&cs),
        format!("mean c NDC by B {:?}: {}", plan.blocks, fmt_list(&cs)),
    ));
    out
}

fn fig9_properties(samples: &[SampleRow]) -> Vec<PropertyCheck> {
    let best_bc = samples.iter().map(|s| s.overlap_bc).fold(0.0, f64::max);
    let best_cp = samples.iter().map(|s| s.overlap_cp).fold(0.0, f64::max);
    vec![PropertyCheck::new(
        "posterior samples cover both planted partitions",
        best_bc >= 0.8 && best_cp >= 0.8,
        format!(
            "{} distinct samples; best overlap BC {best_bc:.3}, CP {best_cp:.3}; threshold 0.8",
            samples.len()
        ),
    )]
}

pub fn properties(plan: &Plan, out: &Outcome) -> Vec<PropertyCheck> {
    match plan.experiment {
        Experiment::Fig3 => fig3_properties(plan, &out.rows),
        Experiment::Fig6 => fig6_properties(&out.rows, plan),
        Experiment::Fig7 => fig7_properties(&out.rows, plan),
        Experiment::Fig8 => fig8_properties(&out.rows, plan),
        Experiment::Fig9 => fig9_properties(&out.samples),
    }
}

/// Writes rows (or samples) as CSV with a header.
pub fn write_rows<W: std::io::Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[2.0, 4.0, 6.0, 8.0]), Some(1.0));
        assert_eq!(spearman(&x, &[8.0, 6.0, 4.0, 2.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), None);
        let s = spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
    }

    #[test]
    fn medians_and_grid() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        let g = grid(0.01);
        assert_eq!(g.len(), 101);
        assert_eq!(g[100], 1.0);
        assert_eq!(grid(0.05)[3], 0.15);
    }

    #[test]
    fn plans_scale() {
        let p = Plan::full(Experiment::Fig7, 1).scaled(0.2).unwrap();
        assert_eq!(p.networks_per_cell, 10);
        assert_eq!(p.n_permutations, 100);
        let p = Plan::full(Experiment::Fig7, 1).scaled(0.01).unwrap();
        assert_eq!(p.n_permutations, 100);
        assert!(Plan::full(Experiment::Fig3, 1).scaled(0.0).is_err());
        assert_eq!(Plan::full(Experiment::Fig3, 1).rhos.len() * 2, 202);
        assert_eq!("fig8".parse::<Experiment>().unwrap(), Experiment::Fig8);
        assert!("fig5".parse::<Experiment>().is_err());
    }

    #[test]
    fn tiny_planted_run_is_deterministic() {
        let mut plan = Plan::full(Experiment::Fig6, 5);
        plan.networks_per_cell = 1;
        plan.sizes = vec![40];
        plan.mus = vec![0.1];
        plan.rhos = vec![0.0, 1.0];
        plan.n_permutations = 100;
        plan.inference.sweeps = 20;
        plan.inference.restarts = 1;
        let qt = QTable::default();
        let a = run(&plan, &qt).unwrap();
        let b = run(&plan, &qt).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.len(), 2);
        let mut buf = Vec::new();
        write_rows(&mut buf, &a.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("experiment,network,seed,n,num_edges"));
    }
}
