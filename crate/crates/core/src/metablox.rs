//! The metablox vector γ and the edge-compression diagnostic.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::combinatorics::QTable;
use crate::dl::{dl_with, Variant};
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::inference::{infer_with, InferenceConfig, InferenceResult};
use crate::rng::derive_seed;
use crate::significance::{randomized_dl_distribution, DEFAULT_ALPHA, DEFAULT_PERMUTATIONS};

pub const FLAG_DEGENERATE: &str = "degenerate-denominator";
pub const FLAG_NO_EDGES: &str = "no-edges";
pub const FLAG_BELOW_OPTIMUM: &str = "metadata-below-optimum";

/// γ together with any condition that made it undefined or suspicious.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaOutcome {
    pub gamma: Option<f64>,
    pub flags: Vec<&'static str>,
}

/// (Σ_d − Σ_opt)/(Σ_rand − Σ_opt); undefined when the denominator is not
/// positive.
pub fn compute_gamma(sigma_d: f64, sigma_opt: f64, sigma_rand: f64) -> GammaOutcome {
    let delta = sigma_d - sigma_opt;
    let delta_star = sigma_rand - sigma_opt;
    let mut flags = Vec::new();
    if delta < 0.0 {
        flags.push(FLAG_BELOW_OPTIMUM);
    }
    let gamma = if delta_star > 0.0 {
        Some(delta / delta_star)
    } else {
        flags.push(FLAG_DEGENERATE);
        None
    };
    GammaOutcome { gamma, flags }
}

/// Σ_opt / E in nats per edge; undefined for an edgeless graph.
pub fn edge_compression(sigma_opt: f64, num_edges: usize) -> Option<f64> {
    (num_edges > 0).then(|| sigma_opt / num_edges as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetabloxConfig {
    pub variants: Vec<Variant>,
    pub n_permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub inference: InferenceConfig,
}

impl Default for MetabloxConfig {
    fn default() -> Self {
        MetabloxConfig {
            variants: vec![Variant::Ndc, Variant::Dc, Variant::PpNonUniform],
            n_permutations: DEFAULT_PERMUTATIONS,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            inference: InferenceConfig::default(),
        }
    }
}

impl MetabloxConfig {
    /// Inference settings for `v`, seeded from the master seed.
    pub fn inference_for(&self, v: Variant) -> InferenceConfig {
        InferenceConfig {
            seed: derive_seed(self.seed, 0x1000 + v as u64),
            ..self.inference.clone()
        }
    }

    /// Seed of the permutation streams; shared by all variants so each
    /// variant scores the same randomized labellings.
    pub fn permutation_seed(&self) -> u64 {
        derive_seed(self.seed, 0x2000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if (self.alpha * self.n_permutations as f64) < 1.0 - 1e-9 {
            return Err(Error::Config(format!(
                "{} permutations are too few for alpha = {}",
                self.n_permutations, self.alpha
            )));
        }
        self.inference.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub gamma: Option<f64>,
    pub sigma_d: f64,
    pub sigma_opt: f64,
    pub sigma_rand: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub edge_compression: Option<f64>,
    pub pvalue: f64,
    pub relevant: bool,
    pub num_blocks_opt: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetabloxReport {
    pub variants: Vec<VariantReport>,
    pub best_compressing_variant: Option<Variant>,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_metadata_blocks: usize,
    pub seed: u64,
    pub n_permutations: usize,
    pub alpha: f64,
    pub sweeps: usize,
    pub restarts: usize,
    pub flags: Vec<String>,
    /// Optimal partitions per variant, kept for the JSON output.
    pub optimal_partitions: Vec<(Variant, Partition)>,
}

impl MetabloxReport {
    pub fn get(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }

    pub fn gamma(&self, v: Variant) -> Option<f64> {
        self.get(v).and_then(|r| r.gamma)
    }

    /// Stable JSON layout: one object per quantity, keyed by variant.
    pub fn to_json(&self, g: Option<&Graph>) -> Value {
        let per = |f: &dyn Fn(&VariantReport) -> Value| -> Value {
            Value::Object(
                self.variants
                    .iter()
                    .map(|r| (r.variant.key().to_string(), f(r)))
                    .collect::<Map<_, _>>(),
            )
        };
        let mut root = json!({
            "gamma": per(&|r| json!(r.gamma)),
            "edge_compression": per(&|r| json!(r.edge_compression)),
            "sigma": {
                "d": per(&|r| json!(r.sigma_d)),
                "opt": per(&|r| json!(r.sigma_opt)),
                "rand": per(&|r| json!(r.sigma_rand)),
            },
            "delta": per(&|r| json!(r.delta)),
            "delta_star": per(&|r| json!(r.delta_star)),
            "pvalue": per(&|r| json!(r.pvalue)),
            "relevant": per(&|r| json!(r.relevant)),
            "num_blocks": {
                "opt": per(&|r| json!(r.num_blocks_opt)),
                "metadata": self.num_metadata_blocks,
            },
            "flags": self.flags,
            "best_compressing_variant": self.best_compressing_variant.map(|v| v.as_str()),
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "seed": self.seed,
            "n_permutations": self.n_permutations,
            "alpha": self.alpha,
            "sweeps": self.sweeps,
            "restarts": self.restarts,
        });
        if let Some(g) = g {
            let parts: Map<String, Value> = self
                .optimal_partitions
                .iter()
                .map(|(v, p)| {
                    let labels: Map<String, Value> = g
                        .node_names()
                        .iter()
                        .zip(p.labels())
                        .map(|(n, &l)| (n.clone(), json!(l)))
                        .collect();
                    (v.key().to_string(), Value::Object(labels))
                })
                .collect();
            root["optimal_partitions"] = Value::Object(parts);
        }
        root
    }

    pub const CSV_HEADER: [&'static str; 13] = [
        "network",
        "metadata",
        "variant",
        "gamma",
        "edge_compression",
        "sigma_d",
        "sigma_opt",
        "sigma_rand",
        "pvalue",
        "relevant",
        "num_blocks_opt",
        "best_compressing",
        "flags",
    ];

    /// One CSV summary row per variant.
    pub fn csv_rows(&self, network: &str, metadata: &str) -> Vec<Vec<String>> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.10}")).unwrap_or_default();
        self.variants
            .iter()
            .map(|r| {
                vec![
                    network.to_string(),
                    metadata.to_string(),
                    r.variant.as_str().to_string(),
                    opt(r.gamma),
                    opt(r.edge_compression),
                    format!("{:.10}", r.sigma_d),
                    format!("{:.10}", r.sigma_opt),
                    format!("{:.10}", r.sigma_rand),
                    format!("{:.6}", r.pvalue),
                    r.relevant.to_string(),
                    r.num_blocks_opt.to_string(),
                    (self.best_compressing_variant == Some(r.variant)).to_string(),
                    r.flags.join(";"),
                ]
            })
            .collect()
    }
}

/// Runs inference once per variant; the results can be shared by every
/// metadata set on the same graph.
pub fn infer_variants(g: &Graph, cfg: &MetabloxConfig, qt: &QTable) -> Result<Vec<InferenceResult>> {
    cfg.variants
        .iter()
        .map(|&v| infer_with(g, v, &cfg.inference_for(v), qt))
        .collect()
}

/// Assembles the report from precomputed inference results (one per variant
/// in `cfg.variants`, same order).
pub fn metablox_with_inference(
    g: &Graph,
    d: &Partition,
    inferred: &[InferenceResult],
    cfg: &MetabloxConfig,
    qt: &QTable,
) -> Result<MetabloxReport> {
    cfg.validate()?;
    if d.len() != g.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: g.num_nodes(),
            got: d.len(),
        });
    }
    if inferred.len() != cfg.variants.len()
        || inferred.iter().zip(&cfg.variants).any(|(r, v)| r.variant != *v)
    {
        return Err(Error::Config("inference results do not match the variant list".into()));
    }
    let mut flags = Vec::new();
    if g.num_edges() == 0 {
        flags.push(FLAG_NO_EDGES.to_string());
    }
    let mut variants = Vec::with_capacity(cfg.variants.len());
    for (&v, inf) in cfg.variants.iter().zip(inferred) {
        // identical groupings share Σ exactly, independent of label order
        let sigma_d = if d.same_grouping(&inf.best_partition) {
            inf.sigma_opt
        } else {
            dl_with(g, d, v, qt)?.total
        };
        let ens = randomized_dl_distribution(
            g,
            d,
            v,
            cfg.n_permutations,
            cfg.alpha,
            cfg.permutation_seed(),
            qt,
        )?;
        let sigma_rand = ens.sigma_rand()?;
        let sigma_opt = inf.sigma_opt;
        let outcome = compute_gamma(sigma_d, sigma_opt, sigma_rand);
        let mut vflags: Vec<String> = outcome.flags.iter().map(|f| f.to_string()).collect();
        let c = edge_compression(sigma_opt, g.num_edges());
        if c.is_none() {
            vflags.push(FLAG_NO_EDGES.to_string());
        }
        for f in &outcome.flags {
            flags.push(format!("{f}:{v}"));
        }
        variants.push(VariantReport {
            variant: v,
            gamma: outcome.gamma,
            sigma_d,
            sigma_opt,
            sigma_rand,
            delta: sigma_d - sigma_opt,
            delta_star: sigma_rand - sigma_opt,
            edge_compression: c,
            pvalue: ens.bestest_pvalue(sigma_d),
            relevant: outcome.gamma.is_some_and(|x| x < 1.0),
            num_blocks_opt: inf.best_partition.num_blocks(),
            flags: vflags,
        });
    }
    let best_compressing_variant = variants
        .iter()
        .filter_map(|r| r.edge_compression.map(|c| (c, r.variant)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v);
    Ok(MetabloxReport {
        variants,
        best_compressing_variant,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_metadata_blocks: d.num_blocks(),
        seed: cfg.seed,
        n_permutations: cfg.n_permutations,
        alpha: cfg.alpha,
        sweeps: cfg.inference.sweeps,
        restarts: cfg.inference.restarts,
        flags,
        optimal_partitions: inferred
            .iter()
            .map(|r| (r.variant, r.best_partition.clone()))
            .collect(),
    })
}

/// Full pipeline: inference per variant, metadata description length and
/// permutation ensemble, assembled into γ and c.
pub fn metablox(g: &Graph, d: &Partition, cfg: &MetabloxConfig, qt: &QTable) -> Result<MetabloxReport> {
    cfg.validate()?;
    let inferred = infer_variants(g, cfg, qt)?;
    metablox_with_inference(g, d, &inferred, cfg, qt)
}
