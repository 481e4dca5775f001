//! Clustering metrics, corpus ingestion, and reproducible parameter sweeps.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{generate, sort_documents, CorpusSpec, LabeledDocument};
use crate::error::{PdhpError, Result};
use crate::prior::DEFAULT_R_GRID;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::smc::{run_stream, SmcConfig, StreamResult};

/// Normalized mutual information `2 I(A;B) / (H(A) + H(B))`.
///
/// Two constant labelings score 1; if exactly one labeling is constant
/// the score is 0.
pub fn nmi<T: Scalar, L: Hash + Eq>(a: &[L], b: &[L]) -> Result<T> {
    if a.len() != b.len() {
        return Err(PdhpError::Domain(format!("labelings differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(PdhpError::Domain("labelings are empty".into()));
    }
    let ia = dense(a);
    let ib = dense(b);
    let ka = ia.iter().max().map_or(0, |m| m + 1);
    let kb = ib.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; ka * kb];
    for (&x, &y) in ia.iter().zip(&ib) {
        table[x * kb + y] += 1;
    }
    let n = T::of_usize(a.len());
    let rows: Vec<usize> = (0..ka).map(|i| table[i * kb..(i + 1) * kb].iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| (0..ka).map(|i| table[i * kb + j]).sum()).collect();
    let entropy = |counts: &[usize]| -> T {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = T::of_usize(c) / n;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(&rows);
    let hb = entropy(&cols);
    if ka == 1 && kb == 1 {
        return Ok(T::one());
    }
    if ka == 1 || kb == 1 {
        return Ok(T::zero());
    }
    let mut mi = T::zero();
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i * kb + j];
            if c > 0 {
                let nij = T::of_usize(c);
                mi = mi + nij / n * (nij * n / (T::of_usize(rows[i]) * T::of_usize(cols[j]))).ln();
            }
        }
    }
    let score = T::of(2.0) * mi / (ha + hb);
    Ok(score.max(T::zero()).min(T::one()))
}

fn dense<L: Hash + Eq>(labels: &[L]) -> Vec<usize> {
    let mut ids: HashMap<&L, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect()
}

/// NMI against each ground truth; `None` where the corpus lacks labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub nmi_text: Option<f64>,
    pub nmi_time: Option<f64>,
    pub delta_nmi: Option<f64>,
}

/// Scores a run against a corpus. Labels are aligned with the corpus
/// after sorting by time (ties by id), the order the engine consumed.
pub fn score_run(result: &StreamResult, corpus: &[LabeledDocument]) -> Result<RunScore> {
    if result.labels.len() != corpus.len() {
        return Err(PdhpError::Domain(format!(
            "result has {} labels for {} documents",
            result.labels.len(),
            corpus.len()
        )));
    }
    let mut docs = corpus.to_vec();
    sort_documents(&mut docs);
    let truth = |f: fn(&LabeledDocument) -> Option<usize>| -> Option<Vec<usize>> { docs.iter().map(f).collect() };
    let score = |t: Option<Vec<usize>>| t.map(|t| nmi::<f64, _>(&result.labels, &t)).transpose();
    let nmi_text = score(truth(|d| d.text_cluster))?;
    let nmi_time = score(truth(|d| d.time_cluster))?;
    let delta_nmi = match (nmi_text, nmi_time) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(RunScore { nmi_text, nmi_time, delta_nmi })
}

/// Reads a JSONL corpus, validates it, and sorts it by time (ties by id).
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn ingest(path: &Path, vocab_bound: Option<u32>) -> Result<Vec<LabeledDocument>> {
    ingest_reader(BufReader::new(std::fs::File::open(path)?), vocab_bound)
}

pub fn ingest_reader<R: BufRead>(reader: R, vocab_bound: Option<u32>) -> Result<Vec<LabeledDocument>> {
    let mut docs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: LabeledDocument =
            serde_json::from_str(&line).map_err(|e| PdhpError::Ingest { line: line_no, msg: e.to_string() })?;
        if !doc.t.is_finite() {
            return Err(PdhpError::Ingest { line: line_no, msg: "timestamp is not finite".into() });
        }
        if let Some(bound) = vocab_bound {
            if let Some(w) = doc.tokens.iter().find(|&&w| w >= bound) {
                return Err(PdhpError::Ingest {
                    line: line_no,
                    msg: format!("token {w} outside vocabulary of size {bound}"),
                });
            }
        }
        if !seen.insert(doc.id) {
            return Err(PdhpError::Ingest { line: line_no, msg: format!("duplicate document id {}", doc.id) });
        }
        docs.push(doc);
    }
    sort_documents(&mut docs);
    Ok(docs)
}

/// A sweep grid. Cells are the product of the three overlap axes; every
/// dataset of a cell is fit once per `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub r_values: Vec<f64>,
    pub vocab_overlaps: Vec<f64>,
    pub temporal_overlaps: Vec<f64>,
    pub decorrelate_fractions: Vec<f64>,
    pub n_datasets: usize,
    pub base_seed: u64,
    /// Generation parameters shared by all cells; overlap fields and the
    /// seed are overwritten per dataset.
    pub corpus: CorpusSpec,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            r_values: DEFAULT_R_GRID.to_vec(),
            vocab_overlaps: vec![0.0],
            temporal_overlaps: vec![0.0],
            decorrelate_fractions: vec![0.0],
            n_datasets: 20,
            base_seed: 0,
            corpus: CorpusSpec::default(),
        }
    }
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &v in &self.vocab_overlaps {
            for &t in &self.temporal_overlaps {
                for &f in &self.decorrelate_fractions {
                    out.push((v, t, f));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.cells().is_empty() || self.n_datasets == 0 {
            return Err(PdhpError::Config("sweep grid is empty".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Corpus spec of one dataset of one cell.
    pub fn dataset_spec(&self, cell: usize, dataset: usize) -> CorpusSpec {
        let (v, t, f) = self.cells()[cell];
        CorpusSpec {
            vocab_overlap: v,
            temporal_overlap: t,
            decorrelate_fraction: f,
            seed: derive_seed(self.base_seed, &[cell as u64, dataset as u64]),
            ..self.corpus.clone()
        }
    }
}

/// One `(dataset, r)` fit. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub vocab_overlap: f64,
    pub temporal_overlap: f64,
    pub decorrelate_fraction: f64,
    pub seed: u64,
    pub nmi_text: Option<f64>,
    pub nmi_time: Option<f64>,
    pub delta_nmi: Option<f64>,
    pub n_clusters_found: Option<usize>,
    pub n_events: Option<usize>,
    pub runtime_ms: Option<u64>,
    pub replacements: Option<usize>,
    /// Set on failed runs; metric fields are empty then.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Execution knobs that do not change which rows are produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Fill the `runtime_ms` column. Off gives byte-identical CSVs.
    pub record_runtime: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { workers: None, record_runtime: true }
    }
}

/// Fits every dataset of every cell at every `r`. Rows come back sorted
/// by (cell, dataset, r index) whatever the schedule.
pub fn sweep(grid: &SweepGrid, smc: &SmcConfig, options: &SweepOptions) -> Result<SweepResult> {
    grid.validate()?;
    let n_cells = grid.cells().len();
    let jobs: Vec<(usize, usize)> = (0..n_cells).flat_map(|c| (0..grid.n_datasets).map(move |d| (c, d))).collect();
    let run = || -> Vec<(usize, usize, Vec<SweepRow>)> {
        jobs.par_iter().map(|&(c, d)| (c, d, run_dataset(grid, smc, c, d, options))).collect()
    };
    let mut finished = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PdhpError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    finished.sort_by_key(|&(c, d, _)| (c, d));
    Ok(SweepResult { rows: finished.into_iter().flat_map(|(_, _, rows)| rows).collect() })
}

fn run_dataset(
    grid: &SweepGrid,
    smc: &SmcConfig,
    cell: usize,
    dataset: usize,
    options: &SweepOptions,
) -> Vec<SweepRow> {
    let spec = grid.dataset_spec(cell, dataset);
    let empty_row = |r: f64| SweepRow {
        r,
        vocab_overlap: spec.vocab_overlap,
        temporal_overlap: spec.temporal_overlap,
        decorrelate_fraction: spec.decorrelate_fraction,
        seed: spec.seed,
        nmi_text: None,
        nmi_time: None,
        delta_nmi: None,
        n_clusters_found: None,
        n_events: None,
        runtime_ms: None,
        replacements: None,
        error: None,
    };
    let corpus = match generate(&spec) {
        Ok(c) => c,
        Err(e) => {
            return grid.r_values.iter().map(|&r| SweepRow { error: Some(e.to_string()), ..empty_row(r) }).collect()
        }
    };
    let docs = corpus.documents;
    grid.r_values
        .iter()
        .map(|&r| {
            let mut cfg = smc.clone();
            cfg.pdhp.r = r;
            cfg.seed = derive_seed(spec.seed, &[0xF17]);
            cfg.vocab_size = Some(corpus.vocabularies.global_size);
            cfg.parallel = false;
            cfg.progress_every = 0;
            let started = Instant::now();
            let outcome = run_stream(&docs, &cfg).and_then(|res| score_run(&res, &docs).map(|s| (res, s)));
            let elapsed = started.elapsed().as_millis() as u64;
            match outcome {
                Ok((res, score)) => SweepRow {
                    nmi_text: score.nmi_text,
                    nmi_time: score.nmi_time,
                    delta_nmi: score.delta_nmi,
                    n_clusters_found: Some(res.n_clusters),
                    n_events: Some(docs.len()),
                    runtime_ms: options.record_runtime.then_some(elapsed),
                    replacements: Some(res.replacements.len()),
                    ..empty_row(r)
                },
                Err(e) => SweepRow { error: Some(e.to_string()), ..empty_row(r) },
            }
        })
        .collect()
}

impl SweepResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        let bytes = w.into_inner().map_err(|e| PdhpError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Mean and sample standard deviation per (cell, r).
    pub fn aggregate(&self) -> Vec<CellAggregate> {
        type CellKey = (f64, f64, f64, f64);
        let mut groups: Vec<(CellKey, Vec<&SweepRow>)> = Vec::new();
        for row in &self.rows {
            let key = (row.r, row.vocab_overlap, row.temporal_overlap, row.decorrelate_fraction);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(row),
                None => groups.push((key, vec![row])),
            }
        }
        groups
            .into_iter()
            .map(|((r, v, t, f), rows)| CellAggregate {
                r,
                vocab_overlap: v,
                temporal_overlap: t,
                decorrelate_fraction: f,
                n_runs: rows.len(),
                n_errors: rows.iter().filter(|x| x.error.is_some()).count(),
                nmi_text: Stat::of(rows.iter().filter_map(|x| x.nmi_text)),
                nmi_time: Stat::of(rows.iter().filter_map(|x| x.nmi_time)),
                delta_nmi: Stat::of(rows.iter().filter_map(|x| x.delta_nmi)),
                n_clusters_found: Stat::of(rows.iter().filter_map(|x| x.n_clusters_found.map(|k| k as f64))),
            })
            .collect()
    }

    /// Long-format table: one line per (cell, r, metric). The `*_x2`
    /// columns repeat the overlaps rescaled to [0, 1] for readability.
    pub fn long_format_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "r",
            "vocab_overlap",
            "temporal_overlap",
            "vocab_overlap_x2",
            "temporal_overlap_x2",
            "decorrelate_fraction",
            "metric",
            "mean",
            "std",
            "n",
        ])?;
        for a in self.aggregate() {
            for (name, stat) in [
                ("nmi_text", a.nmi_text),
                ("nmi_time", a.nmi_time),
                ("delta_nmi", a.delta_nmi),
                ("n_clusters_found", a.n_clusters_found),
            ] {
                if let Some(s) = stat {
                    w.write_record(&[
                        a.r.to_string(),
                        a.vocab_overlap.to_string(),
                        a.temporal_overlap.to_string(),
                        (2.0 * a.vocab_overlap).to_string(),
                        (2.0 * a.temporal_overlap).to_string(),
                        a.decorrelate_fraction.to_string(),
                        name.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                        s.n.to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| PdhpError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "r",
    "vocab_overlap",
    "temporal_overlap",
    "decorrelate_fraction",
    "seed",
    "nmi_text",
    "nmi_time",
    "delta_nmi",
    "n_clusters_found",
    "n_events",
    "runtime_ms",
    "replacements",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub r: f64,
    pub vocab_overlap: f64,
    pub temporal_overlap: f64,
    pub decorrelate_fraction: f64,
    pub n_runs: usize,
    pub n_errors: usize,
    pub nmi_text: Option<Stat>,
    pub nmi_time: Option<Stat>,
    pub delta_nmi: Option<Stat>,
    pub n_clusters_found: Option<Stat>,
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
