use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use metablox::dl::{dl_with, Variant};
use metablox::experiments::{self, Experiment, Plan};
use metablox::graph::{Canonicalize, Graph, Partition};
use metablox::inference::{infer_with, InferenceConfig};
use metablox::io::{self, lawfirm, RunManifest};
use metablox::metablox::{metablox, MetabloxConfig, MetabloxReport};
use metablox::rng::stream_rng;
use metablox::significance::randomized_dl_distribution;
use metablox::synthetic::{correlated_metadata, sbm_generate, scbm_generate, theta_bc, theta_bc_blocks, theta_cp};
use metablox::{Error, QTable};

#[derive(Parser)]
#[command(name = "metablox", version, about = "Metadata relevance to network block structure by description length")]
struct Cli {
    /// key=value file supplying defaults for any long flag; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reject self-loops and parallel edges instead of dropping them.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Description length of a graph under a given partition.
    Dl(DlArgs),
    /// Minimum-description-length partition search.
    Infer(InferArgs),
    /// Relevance vector γ of a metadata partition.
    Metablox(MetabloxArgs),
    /// Permutation ensemble of a metadata partition under one variant.
    Significance(SignificanceArgs),
    /// Generate a synthetic benchmark network.
    Synth(SynthArgs),
    /// Reproduce a synthetic experiment as CSV tables plus property checks.
    Replicate(ReplicateArgs),
    /// Download the law-firm networks and attributes.
    FetchLawfirm(FetchArgs),
}

/// Accepts the variant names plus `pp`, which means the non-uniform planted
/// partition unless `--pp-uniform` is given.
fn parse_variant(s: &str) -> Result<Variant, String> {
    if s.trim().eq_ignore_ascii_case("pp") {
        return Ok(Variant::PpNonUniform);
    }
    Variant::from_str(s).map_err(|_| format!("unknown variant `{s}` (expected ndc, dc, pp, pp-uniform, pp-nonuniform)"))
}

fn uniformize(v: Variant, uniform: bool) -> Variant {
    if uniform && v == Variant::PpNonUniform {
        Variant::PpUniform
    } else {
        v
    }
}

#[derive(Args)]
struct DlArgs {
    #[arg(long)]
    graph: PathBuf,
    /// `node,label` CSV.
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long)]
    pp_uniform: bool,
    #[arg(long)]
    drop_missing: bool,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long)]
    pp_uniform: bool,
    #[command(flatten)]
    search: SearchArgs,
    /// Include the per-sweep best-Σ trace.
    #[arg(long)]
    trace: bool,
    /// Also write the partition as a `node,label` CSV.
    #[arg(long)]
    partition_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetabloxArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Option<Vec<Variant>>,
    #[arg(long)]
    pp_uniform: bool,
    #[arg(long)]
    n_permutations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    drop_missing: bool,
    /// Append per-variant summary rows to this CSV (header written once).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long)]
    pp_uniform: bool,
    #[arg(long)]
    n_permutations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drop_missing: bool,
    /// Write the ensemble values as CSV.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Sbm,
    Scbm,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    model: Model,
    #[arg(long, short = 'n')]
    nodes: Option<usize>,
    #[arg(long, short = 'k')]
    degree: Option<f64>,
    /// Planted blocks (sbm only).
    #[arg(long, short = 'b')]
    blocks: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    /// Core-periphery parameter (scbm only).
    #[arg(long)]
    lambda: Option<f64>,
    /// Also emit metadata correlated with each planted partition.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(value_parser = |s: &str| Experiment::from_str(s).map_err(|e| e.to_string()))]
    experiment: Experiment,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    outdir: PathBuf,
    /// Archive URL; defaults to $METABLOX_LAWFIRM_URL or the public mirror.
    #[arg(long)]
    url: Option<String>,
    /// Expected sha256 of the archive.
    #[arg(long)]
    sha256: Option<String>,
    /// Read the .dat files from a local directory instead of downloading.
    #[arg(long, conflicts_with = "url")]
    from_dir: Option<PathBuf>,
}

/// Config-file fallback for flags left unset.
struct Defaults(BTreeMap<String, String>);

impl Defaults {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> metablox::Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("config value `{key} = {raw}` does not parse"))),
            None => Ok(default),
        }
    }

    fn flag(&self, set: bool, key: &str) -> metablox::Result<bool> {
        self.pick(set.then_some(true), key, false)
    }

    fn variants(&self, flag: Option<Vec<Variant>>, default: Vec<Variant>) -> metablox::Result<Vec<Variant>> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get("variants") {
            Some(raw) => raw
                .split(',')
                .map(|t| parse_variant(t).map_err(Error::Config))
                .collect(),
            None => Ok(default),
        }
    }

    fn search(&self, s: &SearchArgs) -> metablox::Result<InferenceConfig> {
        let d = InferenceConfig::default();
        Ok(InferenceConfig {
            seed: self.pick(s.seed, "seed", 0)?,
            sweeps: self.pick(s.sweeps, "sweeps", d.sweeps)?,
            restarts: self.pick(s.restarts, "restarts", d.restarts)?,
            epsilon: self.pick(s.epsilon, "epsilon", d.epsilon)?,
            ..d
        })
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> metablox::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn policy(strict: bool) -> Canonicalize {
    if strict {
        Canonicalize::Strict
    } else {
        Canonicalize::Collapse
    }
}

fn load_with_labels(graph: &Path, labels: &Path, strict: bool, drop_missing: bool) -> metablox::Result<(Graph, Partition)> {
    let (g, _) = io::read_graph(graph, policy(strict))?;
    let rows = io::read_labels_file(labels)?;
    let (g, p, _) = io::align_labels(&g, &rows, drop_missing)?;
    Ok((g, p))
}

fn manifest_json(m: &RunManifest) -> metablox::Result<serde_json::Value> {
    Ok(serde_json::to_value(m)?)
}

fn cmd_dl(a: &DlArgs, strict: bool, d: &Defaults) -> metablox::Result<()> {
    let uniform = d.flag(a.pp_uniform, "pp-uniform")?;
    let v = uniformize(a.variant, uniform);
    let (g, p) = load_with_labels(&a.graph, &a.partition, strict, d.flag(a.drop_missing, "drop-missing")?)?;
    let b = dl_with(&g, &p, v, QTable::global())?;
    let mut m = RunManifest::new("dl", None, json!({ "variant": v }));
    m.add_input(&a.graph)?;
    m.add_input(&a.partition)?;
    emit(
        &json!({
            "variant": v,
            "num_nodes": g.num_nodes(),
            "num_edges": g.num_edges(),
            "num_blocks": p.num_blocks(),
            "likelihood_nats": b.likelihood_nats,
            "edge_prior_nats": b.edge_prior_nats,
            "degree_prior_nats": b.degree_prior_nats,
            "partition_prior_nats": b.partition_prior_nats,
            "pp_hyperprior_nats": b.pp_hyperprior_nats,
            "total": b.total,
            "manifest": manifest_json(&m)?,
        }),
        None,
    )
}

fn cmd_infer(a: &InferArgs, strict: bool, d: &Defaults) -> metablox::Result<()> {
    let v = uniformize(a.variant, d.flag(a.pp_uniform, "pp-uniform")?);
    let (g, _) = io::read_graph(&a.graph, policy(strict))?;
    let cfg = d.search(&a.search)?;
    let res = infer_with(&g, v, &cfg, QTable::global())?;
    if let Some(path) = &a.partition_out {
        io::write_partition(&g, &res.best_partition, File::create(path)?)?;
    }
    let mut m = RunManifest::new("infer", Some(cfg.seed), serde_json::to_value(&cfg)?);
    m.add_input(&a.graph)?;
    m.outputs.extend(a.partition_out.iter().map(|p| p.display().to_string()));
    let mut out = res.to_json(&g, a.trace);
    out["manifest"] = manifest_json(&m)?;
    emit(&out, a.out.as_deref())
}

fn append_csv(path: &Path, rep: &MetabloxReport, network: &str, metadata: &str) -> metablox::Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(MetabloxReport::CSV_HEADER)?;
    }
    for row in rep.csv_rows(network, metadata) {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_metablox(a: &MetabloxArgs, strict: bool, d: &Defaults) -> metablox::Result<()> {
    let uniform = d.flag(a.pp_uniform, "pp-uniform")?;
    let base = MetabloxConfig::default();
    let inference = d.search(&a.search)?;
    let cfg = MetabloxConfig {
        variants: d
            .variants(a.variants.clone(), base.variants.clone())?
            .into_iter()
            .map(|v| uniformize(v, uniform))
            .collect(),
        n_permutations: d.pick(a.n_permutations, "n-permutations", base.n_permutations)?,
        alpha: d.pick(a.alpha, "alpha", base.alpha)?,
        seed: inference.seed,
        inference,
    };
    cfg.validate()?;
    let drop = d.flag(a.drop_missing, "drop-missing")?;
    let (g, p) = load_with_labels(&a.graph, &a.metadata, strict, drop)?;
    let rep = metablox(&g, &p, &cfg, QTable::global())?;
    if let Some(path) = &a.csv {
        append_csv(path, &rep, &a.graph.display().to_string(), &a.metadata.display().to_string())?;
    }
    let mut m = RunManifest::new("metablox", Some(cfg.seed), serde_json::to_value(&cfg)?);
    m.add_input(&a.graph)?;
    m.add_input(&a.metadata)?;
    m.outputs.extend(a.csv.iter().map(|p| p.display().to_string()));
    let mut out = rep.to_json(Some(&g));
    out["manifest"] = manifest_json(&m)?;
    emit(&out, a.out.as_deref())
}

fn cmd_significance(a: &SignificanceArgs, strict: bool, d: &Defaults) -> metablox::Result<()> {
    let v = uniformize(a.variant, d.flag(a.pp_uniform, "pp-uniform")?);
    let n_p = d.pick(a.n_permutations, "n-permutations", metablox::significance::DEFAULT_PERMUTATIONS)?;
    let alpha = d.pick(a.alpha, "alpha", metablox::significance::DEFAULT_ALPHA)?;
    let seed = d.pick(a.seed, "seed", 0)?;
    let (g, p) = load_with_labels(&a.graph, &a.metadata, strict, d.flag(a.drop_missing, "drop-missing")?)?;
    let qt = QTable::global();
    let sigma_d = dl_with(&g, &p, v, qt)?.total;
    let ens = randomized_dl_distribution(&g, &p, v, n_p, alpha, seed, qt)?;
    if let Some(path) = &a.dump {
        ens.write_csv(File::create(path)?)?;
    }
    let mut m = RunManifest::new(
        "significance",
        Some(seed),
        json!({ "variant": v, "n_permutations": n_p, "alpha": alpha }),
    );
    m.add_input(&a.graph)?;
    m.add_input(&a.metadata)?;
    m.outputs.extend(a.dump.iter().map(|p| p.display().to_string()));
    emit(
        &json!({
            "variant": v,
            "sigma_d": sigma_d,
            "sigma_rand": ens.sigma_rand()?,
            "pvalue": ens.bestest_pvalue(sigma_d),
            "n_permutations": n_p,
            "alpha": alpha,
            "seed": seed,
            "manifest": manifest_json(&m)?,
        }),
        a.out.as_deref(),
    )
}

fn write_labels_for(g: &Graph, p: &Partition, path: &Path) -> metablox::Result<()> {
    io::write_partition(g, p, File::create(path)?)
}

fn cmd_synth(a: &SynthArgs, d: &Defaults) -> metablox::Result<()> {
    let n = d.pick(a.nodes, "nodes", 100)?;
    let k = d.pick(a.degree, "degree", 10.0)?;
    let mu = d.pick(a.mu, "mu", 0.25)?;
    let seed = d.pick(a.seed, "seed", 0)?;
    let rho: Option<f64> = match a.rho {
        Some(r) => Some(r),
        None => d
            .0
            .get("rho")
            .map(|r| r.parse().map_err(|_| Error::Config(format!("config value `rho = {r}` does not parse"))))
            .transpose()?,
    };
    std::fs::create_dir_all(&a.outdir)?;
    let e = (n as f64 * k / 2.0).round() as u64;
    let mut rng = stream_rng(seed, 0);
    let mut meta_rng = stream_rng(seed, 1);
    let mut outputs = Vec::new();
    let (g, planted, settings) = match a.model {
        Model::Sbm => {
            let b = d.pick(a.blocks, "blocks", 2)?;
            let (g, p) = sbm_generate(n, k, &theta_bc_blocks(e, mu, b)?, &mut rng)?;
            let s = json!({ "model": "sbm", "nodes": n, "degree": k, "blocks": b, "mu": mu, "rho": rho });
            (g, vec![("planted", p)], s)
        }
        Model::Scbm => {
            let lambda = d.pick(a.lambda, "lambda", 0.05)?;
            let net = scbm_generate(n, k, &theta_bc(e, mu)?, &theta_cp(e, lambda)?, &mut rng)?;
            let s = json!({ "model": "scbm", "nodes": n, "degree": k, "mu": mu, "lambda": lambda, "rho": rho });
            (net.graph, vec![("bc", net.first), ("cp", net.second)], s)
        }
    };
    let edges = a.outdir.join("edges.txt");
    io::write_edge_list(&g, File::create(&edges)?)?;
    outputs.push(edges);
    for (name, p) in &planted {
        let path = a.outdir.join(format!("{name}.csv"));
        write_labels_for(&g, p, &path)?;
        outputs.push(path);
        if let Some(rho) = rho {
            let md = correlated_metadata(p, rho, &mut meta_rng)?;
            let path = a.outdir.join(format!("{name}_metadata.csv"));
            write_labels_for(&g, &md, &path)?;
            outputs.push(path);
        }
    }
    let mut m = RunManifest::new("synth", Some(seed), settings);
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    m.write(&a.outdir.join("manifest.json"))?;
    log::info!("wrote {} nodes, {} edges to {}", g.num_nodes(), g.num_edges(), a.outdir.display());
    Ok(())
}

fn cmd_replicate(a: &ReplicateArgs, d: &Defaults) -> metablox::Result<bool> {
    let scale = d.pick(a.scale, "scale", 1.0)?;
    let seed = d.pick(a.seed, "seed", 0)?;
    let mut plan = Plan::full(a.experiment, seed).scaled(scale)?;
    plan.inference.sweeps = d.pick(a.sweeps, "sweeps", plan.inference.sweeps)?;
    plan.inference.restarts = d.pick(a.restarts, "restarts", plan.inference.restarts)?;
    let jobs = d.pick(a.jobs, "jobs", 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let outcome = pool.install(|| experiments::run(&plan, QTable::global()))?;
    std::fs::create_dir_all(&a.outdir)?;
    let name = a.experiment.as_str();
    let table = if a.experiment == Experiment::Fig9 {
        let p = a.outdir.join(format!("{name}_samples.csv"));
        experiments::write_rows(File::create(&p)?, &outcome.samples)?;
        p
    } else {
        let p = a.outdir.join(format!("{name}.csv"));
        experiments::write_rows(File::create(&p)?, &outcome.rows)?;
        p
    };
    let summary = a.outdir.join(format!("{name}_properties.txt"));
    let mut text = String::new();
    for check in &outcome.properties {
        text.push_str(&check.to_string());
        text.push('\n');
    }
    std::fs::write(&summary, &text)?;
    print!("{text}");
    let mut m = RunManifest::new("replicate", Some(seed), serde_json::to_value(&plan)?);
    m.outputs = vec![table.display().to_string(), summary.display().to_string()];
    m.write(&a.outdir.join(format!("{name}_manifest.json")))?;
    Ok(outcome.properties.iter().all(|c| c.pass))
}

fn cmd_fetch(a: &FetchArgs) -> metablox::Result<()> {
    let (files, source, digest) = match &a.from_dir {
        Some(dir) => (lawfirm::read_dir(dir)?, dir.display().to_string(), None),
        None => {
            let url = a
                .url
                .clone()
                .or_else(|| std::env::var(lawfirm::URL_ENV).ok())
                .unwrap_or_else(|| lawfirm::DEFAULT_URL.to_string());
            let bytes = lawfirm::download(&url)?;
            let digest = io::sha256_hex(&bytes);
            if let Some(want) = &a.sha256 {
                if !want.eq_ignore_ascii_case(&digest) {
                    return Err(Error::Fetch(format!("checksum mismatch: expected {want}, got {digest}")));
                }
            }
            (lawfirm::unpack(&bytes)?, url, Some(digest))
        }
    };
    let written = lawfirm::export(&files, &a.outdir)?;
    let mut m = RunManifest::new(
        "fetch-lawfirm",
        None,
        json!({ "source": source, "symmetrization": "edge if either node nominates the other" }),
    );
    if let Some(d) = digest {
        m.inputs.insert(source, d);
    }
    m.outputs = written.iter().map(|p| p.display().to_string()).collect();
    m.write(&a.outdir.join("manifest.json"))?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> metablox::Result<bool> {
    let defaults = Defaults(match &cli.config {
        Some(p) => io::read_config(p)?,
        None => BTreeMap::new(),
    });
    let strict = defaults.flag(cli.strict, "strict")?;
    match &cli.command {
        Command::Dl(a) => cmd_dl(a, strict, &defaults)?,
        Command::Infer(a) => cmd_infer(a, strict, &defaults)?,
        Command::Metablox(a) => cmd_metablox(a, strict, &defaults)?,
        Command::Significance(a) => cmd_significance(a, strict, &defaults)?,
        Command::Synth(a) => cmd_synth(a, &defaults)?,
        Command::Replicate(a) => return cmd_replicate(a, &defaults),
        Command::FetchLawfirm(a) => cmd_fetch(a)?,
    }
    Ok(true)
}

/// Appends `--key value` for every config entry naming a long flag of the
/// selected subcommand that the command line leaves unset, so required flags
/// can come from the file too. Command-line flags always win.
fn with_config_flags(args: Vec<String>) -> metablox::Result<Vec<String>> {
    let path = args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else {
        return Ok(args);
    };
    let config = io::read_config(Path::new(&path))?;
    let mut cmd = Cli::command();
    for a in args.iter().skip(1) {
        match cmd.find_subcommand(a) {
            Some(sub) => cmd = sub.clone(),
            None if cmd.has_subcommands() => continue,
            None => break,
        }
    }
    let given = |long: &str| {
        let flag = format!("--{long}");
        args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut out = args.clone();
    for arg in cmd.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        let Some(value) = config.get(long) else { continue };
        if arg.is_global_set() || given(long) {
            continue;
        }
        if arg.get_action().takes_values() {
            out.push(format!("--{long}"));
            out.push(value.clone());
        } else if value.parse::<bool>().map_err(|_| Error::Config(format!("config value `{long} = {value}` is not a boolean")))? {
            out.push(format!("--{long}"));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match with_config_flags(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more property checks failed");
            ExitCode::from(1)
        }
        Err(e @ (Error::Config(_) | Error::UnknownVariant(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
