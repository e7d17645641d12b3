//! File formats: edge lists, `node,label` CSVs, run manifests, and the
//! law-firm dataset.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{load_edge_list, relabel_partition, Canonicalize, Graph, LoadReport, Partition};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn read_graph(path: &Path, policy: Canonicalize) -> Result<(Graph, LoadReport)> {
    load_edge_list(BufReader::new(File::open(path)?), policy)
}

/// Reads `node,label` rows (header required). Label tokens are kept as
/// strings; duplicate node ids are an error.
pub fn read_labels<R: Read>(source: R) -> Result<Vec<(String, String)>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 2 {
            return Err(Error::Parse {
                line,
                msg: "expected `node,label`".into(),
            });
        }
        let (node, label) = (rec[0].to_string(), rec[1].to_string());
        if !seen.insert(node.clone()) {
            return Err(Error::Parse {
                line,
                msg: format!("node `{node}` labelled twice"),
            });
        }
        out.push((node, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("label file has no rows".into()));
    }
    Ok(out)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<(String, String)>> {
    read_labels(File::open(path)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    /// Labelled nodes absent from the edge list, added as isolated nodes.
    pub isolated_added: usize,
    /// Graph nodes without a label, removed under the drop-missing policy.
    pub unlabelled_dropped: usize,
}

/// Matches labels to graph nodes. Labelled nodes missing from the edge list
/// become isolated nodes; unlabelled graph nodes are an error unless
/// `drop_missing`, which restricts the graph to labelled nodes.
pub fn align_labels(g: &Graph, labels: &[(String, String)], drop_missing: bool) -> Result<(Graph, Partition, AlignReport)> {
    let mut report = AlignReport::default();
    let extra: Vec<String> = labels
        .iter()
        .filter(|(n, _)| g.index_of(n).is_none())
        .map(|(n, _)| n.clone())
        .collect();
    report.isolated_added = extra.len();
    let mut graph = if extra.is_empty() {
        g.clone()
    } else {
        log::warn!("{} labelled node(s) not in the edge list were added as isolated nodes", extra.len());
        g.with_isolated_nodes(&extra)?
    };
    let by_node: HashMap<&str, &str> = labels.iter().map(|(n, l)| (n.as_str(), l.as_str())).collect();
    let missing: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| !by_node.contains_key(graph.node_name(i)))
        .collect();
    if !missing.is_empty() {
        if !drop_missing {
            let shown: Vec<&str> = missing.iter().take(5).map(|&i| graph.node_name(i)).collect();
            return Err(Error::Metadata(format!(
                "{} node(s) have no label (e.g. {}); pass --drop-missing to analyse the labelled subgraph",
                missing.len(),
                shown.join(", ")
            )));
        }
        log::warn!("dropping {} unlabelled node(s)", missing.len());
        report.unlabelled_dropped = missing.len();
        let keep: Vec<usize> = (0..graph.num_nodes())
            .filter(|&i| by_node.contains_key(graph.node_name(i)))
            .collect();
        graph = graph.induced_subgraph(&keep)?;
    }
    let tokens: Vec<&str> = (0..graph.num_nodes()).map(|i| by_node[graph.node_name(i)]).collect();
    Ok((graph, relabel_partition(&tokens), report))
}

pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> Result<()> {
    for &(u, v) in g.edges() {
        writeln!(w, "{} {}", g.node_name(u as usize), g.node_name(v as usize))?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(g: &Graph, labels: &[String], w: W) -> Result<()> {
    if labels.len() != g.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: g.num_nodes(),
            got: labels.len(),
        });
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        out.write_record([g.node_name(i), l.as_str()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_partition<W: Write>(g: &Graph, p: &Partition, w: W) -> Result<()> {
    let labels: Vec<String> = p.labels().iter().map(|l| l.to_string()).collect();
    write_labels(g, &labels, w)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Inputs and settings of a run. Contains no wall-clock data, so equal
/// inputs give byte-identical manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
    /// sha256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, settings: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            seed,
            settings,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Law-firm networks and attribute columns.
pub mod lawfirm {
    use super::*;

    pub const NETWORKS: [(&str, &str); 3] = [
        ("advice", "ELadv.dat"),
        ("friendship", "ELfriend.dat"),
        ("cowork", "ELwork.dat"),
    ];
    /// Attribute name and its column in the attribute table (0-based).
    pub const ATTRIBUTES: [(&str, usize); 5] = [
        ("status", 1),
        ("gender", 2),
        ("office", 3),
        ("practice", 6),
        ("law_school", 7),
    ];
    pub const ATTRIBUTE_FILE: &str = "ELattr.dat";
    pub const DEFAULT_URL: &str = "https://www.stats.ox.ac.uk/~snijders/siena/LazegaLawyers.zip";
    pub const URL_ENV: &str = "METABLOX_LAWFIRM_URL";

    fn node_name(i: usize) -> String {
        (i + 1).to_string()
    }

    /// Parses a square 0/1 adjacency matrix and symmetrizes it: i and j are
    /// linked if either nominates the other. The diagonal is ignored.
    pub fn parse_matrix(text: &str) -> Result<Graph> {
        let rows: Vec<Vec<u8>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.split_whitespace()
                    .map(|t| match t {
                        "0" => Ok(0),
                        "1" => Ok(1),
                        _ => Err(Error::Parse {
                            line: i + 1,
                            msg: format!("adjacency entry `{t}` is not 0/1"),
                        }),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse {
                line: 1,
                msg: "adjacency matrix is not square".into(),
            });
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rows[i][j] == 1 || rows[j][i] == 1 {
                    edges.push((i, j));
                }
            }
        }
        Graph::with_names((0..n).map(node_name).collect(), &edges)
    }

    /// Parses the whitespace-separated attribute table into one label column
    /// per attribute.
    pub fn parse_attributes(text: &str) -> Result<Vec<(String, Vec<String>)>> {
        let rows: Vec<Vec<&str>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().collect())
            .collect();
        let width = ATTRIBUTES.iter().map(|a| a.1).max().unwrap_or(0) + 1;
        if let Some(i) = rows.iter().position(|r| r.len() < width) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected at least {width} attribute columns"),
            });
        }
        Ok(ATTRIBUTES
            .iter()
            .map(|&(name, col)| (name.to_string(), rows.iter().map(|r| r[col].to_string()).collect()))
            .collect())
    }

    /// Dataset files found in a zip archive, keyed by file name.
    pub fn unpack(bytes: &[u8]) -> Result<HashMap<String, String>> {
        let mut zip = zip::ZipArchive::new(std::io::Cursor::new(bytes))
            .map_err(|e| Error::Fetch(format!("archive is not a readable zip: {e}")))?;
        let wanted: Vec<&str> = NETWORKS.iter().map(|n| n.1).chain([ATTRIBUTE_FILE]).collect();
        let mut out = HashMap::new();
        for i in 0..zip.len() {
            let mut f = zip
                .by_index(i)
                .map_err(|e| Error::Fetch(format!("corrupt archive entry: {e}")))?;
            let base = f.name().rsplit('/').next().unwrap_or("").to_string();
            if let Some(w) = wanted.iter().find(|w| w.eq_ignore_ascii_case(&base)) {
                let mut text = String::new();
                f.read_to_string(&mut text)?;
                out.insert(w.to_string(), text);
            }
        }
        Ok(out)
    }

    /// Reads the dataset files from a directory.
    pub fn read_dir(dir: &Path) -> Result<HashMap<String, String>> {
        let mut out = HashMap::new();
        for name in NETWORKS.iter().map(|n| n.1).chain([ATTRIBUTE_FILE]) {
            out.insert(name.to_string(), std::fs::read_to_string(dir.join(name))?);
        }
        Ok(out)
    }

    pub fn download(url: &str) -> Result<Vec<u8>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build()
            .into();
        let mut resp = agent
            .get(url)
            .call()
            .map_err(|e| Error::Fetch(format!("could not download {url}: {e}")))?;
        resp.body_mut()
            .with_config()
            .limit(64 << 20)
            .read_to_vec()
            .map_err(|e| Error::Fetch(format!("could not read {url}: {e}")))
    }

    /// Writes `<network>.txt` edge lists and `<attribute>.csv` label files to
    /// `outdir`; returns the paths written.
    pub fn export(files: &HashMap<String, String>, outdir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(outdir)?;
        let get = |name: &str| {
            files
                .get(name)
                .ok_or_else(|| Error::Fetch(format!("dataset file {name} is missing")))
        };
        let mut written = Vec::new();
        let mut n_nodes = None;
        for (net, file) in NETWORKS {
            let g = parse_matrix(get(file)?)?;
            if *n_nodes.get_or_insert(g.num_nodes()) != g.num_nodes() {
                return Err(Error::InvalidGraph("network matrices differ in size".into()));
            }
            log::info!("{net}: {} nodes, {} edges after symmetrization", g.num_nodes(), g.num_edges());
            let path = outdir.join(format!("{net}.txt"));
            write_edge_list(&g, File::create(&path)?)?;
            written.push(path);
        }
        let n = n_nodes.unwrap_or(0);
        let nodes = Graph::with_names((0..n).map(node_name).collect(), &[])?;
        for (attr, labels) in parse_attributes(get(ATTRIBUTE_FILE)?)? {
            if labels.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            let path = outdir.join(format!("{attr}.csv"));
            write_labels(&nodes, &labels, File::create(&path)?)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Reads `key=value` lines; `#` starts a comment. Keys use the long flag
/// names without dashes.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, found `{content}`"),
        })?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(text: &str) -> Graph {
        load_edge_list(text.as_bytes(), Canonicalize::Collapse).unwrap().0
    }

    #[test]
    fn labels_parse_and_reject_duplicates() {
        let rows = read_labels("node,label\na,x\nb,y\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![("a".into(), "x".into()), ("b".into(), "y".into())]);
        assert!(read_labels("node,label\na,x\na,y\n".as_bytes()).is_err());
        assert!(read_labels("node,label\n".as_bytes()).is_err());
    }

    #[test]
    fn alignment_policies() {
        let g = graph("a b\nb c\n");
        let full = read_labels("node,label\nc,1\nb,0\na,0\nz,1\n".as_bytes()).unwrap();
        let (g2, p, rep) = align_labels(&g, &full, false).unwrap();
        assert_eq!(g2.num_nodes(), 4);
        assert_eq!(rep.isolated_added, 1);
        assert_eq!(p.labels(), &[0, 0, 1, 1]);
        let partial = read_labels("node,label\na,x\nb,y\n".as_bytes()).unwrap();
        assert!(matches!(align_labels(&g, &partial, false), Err(Error::Metadata(_))));
        let (g3, p3, rep3) = align_labels(&g, &partial, true).unwrap();
        assert_eq!((g3.num_nodes(), g3.num_edges(), rep3.unlabelled_dropped), (2, 1, 1));
        assert_eq!(p3.num_blocks(), 2);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = graph("x y\ny z\nz x\n");
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = load_edge_list(buf.as_slice(), Canonicalize::Strict).unwrap().0;
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.node_names(), g.node_names());
    }

    #[test]
    fn digests() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# settings\nsweeps = 10\nn_permutations=200 # comment\n").unwrap();
        let cfg = read_config(&path).unwrap();
        assert_eq!(cfg["sweeps"], "10");
        assert_eq!(cfg["n-permutations"], "200");
        std::fs::write(&path, "oops\n").unwrap();
        assert!(read_config(&path).is_err());
    }

    #[test]
    fn lawfirm_parsers() {
        let g = lawfirm::parse_matrix("0 1 0\n0 0 0\n1 1 0\n").unwrap();
        assert_eq!(g.num_edges(), 3);
        assert!(lawfirm::parse_matrix("0 1\n0\n").is_err());
        let attrs = lawfirm::parse_attributes("1 1 1 1 31 64 1 1\n2 2 2 3 32 62 2 3\n").unwrap();
        assert_eq!(attrs.len(), 5);
        assert_eq!(attrs[0], ("status".to_string(), vec!["1".to_string(), "2".to_string()]));
        assert_eq!(attrs[4].1, vec!["1".to_string(), "3".to_string()]);
    }

    #[test]
    fn lawfirm_export_from_zip() {
        let mut buf = std::io::Cursor::new(Vec::new());
        {
            let mut zw = zip::ZipWriter::new(&mut buf);
            let opts = zip::write::SimpleFileOptions::default();
            for (_, f) in lawfirm::NETWORKS {
                zw.start_file(format!("LazegaLawyers/{f}"), opts).unwrap();
                zw.write_all(b"0 1 0\n1 0 1\n0 0 0\n").unwrap();
            }
            zw.start_file(lawfirm::ATTRIBUTE_FILE, opts).unwrap();
            zw.write_all(b"1 1 1 1 1 1 1 1\n2 1 2 1 1 1 2 2\n3 2 1 2 1 1 1 3\n").unwrap();
            zw.finish().unwrap();
        }
        let files = lawfirm::unpack(buf.get_ref()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = lawfirm::export(&files, dir.path()).unwrap();
        assert_eq!(written.len(), 8);
        let (g, _) = read_graph(&dir.path().join("advice.txt"), Canonicalize::Strict).unwrap();
        assert_eq!(g.num_edges(), 2);
        let status = read_labels_file(&dir.path().join("status.csv")).unwrap();
        assert_eq!(status.len(), 3);
    }
}
