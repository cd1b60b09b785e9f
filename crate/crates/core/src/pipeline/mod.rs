//! Stage orchestration: cached preprocessing, parallel all-pairs comparison,
//! clustering, and evaluation, plus the artifact layout shared by the CLI.

pub mod csvio;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::align::{similarity_with, AlignParams, PairScore};
use crate::error::{Error, Result};
use crate::evaluate::{label_pairs, pr_curve, pr_from_clusterings, score_histograms};
use crate::linkage::{cut, hac, DistanceTable, Linkage};
use crate::preprocess::{preprocess_full, resample, PreprocessParams};
use crate::surface::{load_depth_grid, read_manifest, save_depth_grid, Surface, SurfaceMeta};
use crate::synthetic::mix_seed;

/// Histogram layout used by the evaluation stage: 0.05-wide bins across the
/// whole correlation range.
pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_RANGE: (f64, f64) = (-1.0, 1.0);

/// Everything a pipeline invocation needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub params: PreprocessParams,
    /// Worker threads; `None` uses all available cores.
    pub jobs: Option<usize>,
    pub linkages: Vec<Linkage>,
    /// Similarity cutoff for flat clusters; distance cutoff is 1 − this.
    pub cutoff: f64,
    pub seed: u64,
    pub lag_frac: f64,
    /// Surfaces are resampled to this resolution before comparison.
    pub compare_resolution_um: f64,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, cache_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            cache_dir: cache_dir.into(),
            out_dir: out_dir.into(),
            params: PreprocessParams::default(),
            jobs: None,
            linkages: vec![Linkage::Minimax],
            cutoff: 0.4,
            seed: 0,
            lag_frac: 0.2,
            compare_resolution_um: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.cutoff) {
            return Err(Error::param(format!("cutoff must be in [-1, 1], got {}", self.cutoff)));
        }
        if !(self.lag_frac > 0.0 && self.lag_frac < 1.0) {
            return Err(Error::param(format!("lag fraction must be in (0, 1), got {}", self.lag_frac)));
        }
        if self.jobs == Some(0) {
            return Err(Error::param("worker count must be at least 1"));
        }
        if !(self.compare_resolution_um > 0.0) {
            return Err(Error::param("comparison resolution must be positive"));
        }
        if self.linkages.is_empty() {
            return Err(Error::param("at least one linkage is required"));
        }
        Ok(())
    }
}

/// One skipped item and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

/// What a command did; the CLI maps non-empty `failures` to exit code 3.
#[derive(Debug, Default)]
pub struct RunReport {
    pub processed: usize,
    pub cache_hits: usize,
    pub pairs_scored: usize,
    pub failures: Vec<Failure>,
    pub notices: Vec<String>,
}

impl RunReport {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Parses the plain-text `key=value` parameter format. Blank lines and
/// `#`-comments are ignored; unknown keys are errors.
pub fn parse_params_str(text: &str) -> Result<PreprocessParams> {
    let mut params = PreprocessParams::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::param(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::param(format!("line {}: cannot parse {value:?} as {what} for {key}", lineno + 1));
        match key {
            "ransac.delta_um" => params.ransac.inlier_threshold_um = value.parse().map_err(|_| bad("a number"))?,
            "ransac.iterations" => params.ransac.iterations = value.parse().map_err(|_| bad("an integer"))?,
            "ransac.confidence" => params.ransac.confidence = value.parse().map_err(|_| bad("a number"))?,
            "ransac.outlier_rate" => params.ransac.outlier_rate = value.parse().map_err(|_| bad("a number"))?,
            "ransac.sample_size" => params.ransac.sample_size = value.parse().map_err(|_| bad("an integer"))?,
            "loess.span" => params.loess.span = value.parse().map_err(|_| bad("a number"))?,
            "loess.degree" => params.loess.degree = value.parse().map_err(|_| bad("an integer"))?,
            "filter.short_um" => params.filter.short_cutoff_um = value.parse().map_err(|_| bad("a number"))?,
            "filter.long_um" => params.filter.long_cutoff_um = value.parse().map_err(|_| bad("a number"))?,
            "resample.resolution_um" => params.resample_resolution_um = value.parse().map_err(|_| bad("a number"))?,
            other => return Err(Error::param(format!("line {}: unknown parameter {other:?}", lineno + 1))),
        }
    }
    Ok(params)
}

pub fn parse_params_file(path: &Path) -> Result<PreprocessParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params_str(&text)
}

/// Deterministic per-image seed, independent of processing order.
pub fn per_image_seed(global_seed: u64, id: &str) -> u64 {
    mix_seed(global_seed, id)
}

/// Cache key for a preprocessed surface: hash of the raw file bytes, the
/// canonical parameter listing, and the image's derived seed.
pub fn cache_key(raw_bytes: &[u8], params: &PreprocessParams, image_seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(raw_bytes);
    hasher.update(params.canonical_string().as_bytes());
    hasher.update(image_seed.to_le_bytes());
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::data(format!("cannot build worker pool: {e}")))
}

fn write_failures(out_dir: &Path, failures: &[Failure]) -> Result<()> {
    let mut sorted: Vec<&Failure> = failures.iter().collect();
    sorted.sort_by(|a, b| (&a.stage, &a.id).cmp(&(&b.stage, &b.id)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "stage", "message"]).map_err(|e| Error::data(e.to_string()))?;
    for f in sorted {
        w.write_record([f.id.as_str(), f.stage.as_str(), f.message.as_str()])
            .map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    csvio::atomic_write(&out_dir.join("failures.csv"), &bytes)
}

/// Preprocesses one image into the cache, or reuses the existing entry.
/// Returns the cache path and whether it was a hit.
fn preprocess_one(meta: &SurfaceMeta, params: &PreprocessParams, global_seed: u64, cache_dir: &Path) -> Result<(PathBuf, bool)> {
    let raw = std::fs::read(&meta.path).map_err(|e| Error::io(&meta.path, e))?;
    let image_seed = per_image_seed(global_seed, &meta.id);
    let key = cache_key(&raw, params, image_seed);
    let cache_path = cache_dir.join(format!("{key}.c3dp"));
    if cache_path.exists() {
        return Ok((cache_path, true));
    }
    let surface = load_depth_grid(&meta.path)?;
    let mut seeded = params.clone();
    seeded.ransac.seed = image_seed;
    let processed = preprocess_full(&surface, &seeded)?;
    save_depth_grid(&processed, &cache_path)?;
    Ok((cache_path, false))
}

struct PreprocessOutcome {
    succeeded: Vec<SurfaceMeta>,
    processed: usize,
    cache_hits: usize,
    failures: Vec<Failure>,
}

fn preprocess_stage(metas: &[SurfaceMeta], config: &RunConfig, pool: &rayon::ThreadPool) -> Result<PreprocessOutcome> {
    std::fs::create_dir_all(&config.cache_dir).map_err(|e| Error::io(&config.cache_dir, e))?;
    let results: Vec<(usize, Result<(PathBuf, bool)>)> = pool.install(|| {
        metas
            .par_iter()
            .enumerate()
            .map(|(i, meta)| (i, preprocess_one(meta, &config.params, config.seed, &config.cache_dir)))
            .collect()
    });
    let mut outcome = PreprocessOutcome { succeeded: Vec::new(), processed: 0, cache_hits: 0, failures: Vec::new() };
    for (i, result) in results {
        match result {
            Ok((_, true)) => {
                outcome.cache_hits += 1;
                outcome.succeeded.push(metas[i].clone());
            }
            Ok((_, false)) => {
                outcome.processed += 1;
                outcome.succeeded.push(metas[i].clone());
            }
            Err(e) => outcome.failures.push(Failure {
                id: metas[i].id.clone(),
                stage: "preprocess".to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Loads a preprocessed surface from the cache and brings it to comparison
/// resolution. Missing cache entries are hard errors.
fn load_for_compare(meta: &SurfaceMeta, config: &RunConfig) -> Result<Surface> {
    let raw = std::fs::read(&meta.path).map_err(|e| Error::io(&meta.path, e))?;
    let image_seed = per_image_seed(config.seed, &meta.id);
    let key = cache_key(&raw, &config.params, image_seed);
    let cache_path = config.cache_dir.join(format!("{key}.c3dp"));
    if !cache_path.exists() {
        return Err(Error::data(format!(
            "no cache entry for id {:?}; run the preprocess stage first",
            meta.id
        )));
    }
    let mut surface = load_depth_grid(&cache_path)?;
    surface.set_id(meta.id.clone());
    resample(&surface, config.compare_resolution_um)
}

fn partial_scores_path(out_dir: &Path) -> PathBuf {
    out_dir.join("scores.partial.csv")
}

fn read_partial_scores(path: &Path, known_ids: &BTreeSet<&str>) -> Vec<PairScore> {
    if !path.exists() {
        return Vec::new();
    }
    // A damaged journal (e.g. a torn final line) falls back to recomputing.
    let mut kept = Vec::new();
    let mut seen = BTreeSet::new();
    if let Ok(rows) = csvio::read_scores(path) {
        for row in rows {
            if known_ids.contains(row.id1.as_str())
                && known_ids.contains(row.id2.as_str())
                && seen.insert((row.id1.clone(), row.id2.clone()))
            {
                kept.push(row);
            }
        }
    }
    kept
}

struct CompareOutcome {
    scores: Vec<PairScore>,
    failures: Vec<Failure>,
    notices: Vec<String>,
}

fn compare_stage(metas: &[SurfaceMeta], config: &RunConfig, pool: &rayon::ThreadPool) -> Result<CompareOutcome> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut outcome = CompareOutcome { scores: Vec::new(), failures: Vec::new(), notices: Vec::new() };
    if metas.len() < 2 {
        outcome.notices.push(format!("{} image(s) in the manifest; nothing to compare", metas.len()));
        csvio::write_scores(&config.out_dir.join("scores.csv"), &[])?;
        return Ok(outcome);
    }

    let surfaces: Vec<Surface> = pool.install(|| {
        metas.par_iter().map(|meta| load_for_compare(meta, config)).collect::<Result<Vec<_>>>()
    })?;

    let known_ids: BTreeSet<&str> = metas.iter().map(|m| m.id.as_str()).collect();
    let partial_path = partial_scores_path(&config.out_dir);
    let resumed = read_partial_scores(&partial_path, &known_ids);
    let done: BTreeSet<(String, String)> = resumed.iter().map(|s| (s.id1.clone(), s.id2.clone())).collect();

    let mut pairs = Vec::new();
    for i in 0..surfaces.len() {
        for j in i + 1..surfaces.len() {
            let (a, b) = (surfaces[i].id(), surfaces[j].id());
            let key = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
            if !done.contains(&key) {
                pairs.push((i, j));
            }
        }
    }

    let journal = Mutex::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&partial_path)
            .map_err(|e| Error::io(&partial_path, e))?,
    );
    if resumed.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(csvio::SCORES_HEADER).map_err(|e| Error::data(e.to_string()))?;
        let header = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
        let mut guard = journal.lock().unwrap();
        guard.write_all(&header).map_err(|e| Error::io(&partial_path, e))?;
        guard.flush().map_err(|e| Error::io(&partial_path, e))?;
    }

    let align_params = AlignParams { lag_frac: config.lag_frac };
    let results: Vec<std::result::Result<PairScore, Failure>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                match similarity_with(&surfaces[i], &surfaces[j], &align_params) {
                    Ok(score) => {
                        let mut w = csv::Writer::from_writer(Vec::new());
                        w.write_record(csvio::score_record(&score)).expect("csv record");
                        let row = w.into_inner().expect("csv buffer");
                        let mut guard = journal.lock().unwrap();
                        // Journal rows keep completed work across interrupts;
                        // write failures only cost a recomputation on resume.
                        let _ = guard.write_all(&row).and_then(|_| guard.flush());
                        Ok(score)
                    }
                    Err(e) => Err(Failure {
                        id: format!("{}:{}", surfaces[i].id().min(surfaces[j].id()), surfaces[i].id().max(surfaces[j].id())),
                        stage: "compare".to_string(),
                        message: e.to_string(),
                    }),
                }
            })
            .collect()
    });

    outcome.scores = resumed;
    for result in results {
        match result {
            Ok(score) => outcome.scores.push(score),
            Err(failure) => outcome.failures.push(failure),
        }
    }
    outcome.scores.sort_by(|a, b| (&a.id1, &a.id2).cmp(&(&b.id1, &b.id2)));
    csvio::write_scores(&config.out_dir.join("scores.csv"), &outcome.scores)?;
    let _ = std::fs::remove_file(&partial_path);
    Ok(outcome)
}

/// Clusters scores under each requested linkage; writes a dendrogram and a
/// flat clustering per linkage. Returns cluster counts by linkage name.
fn cluster_outputs(scores: &[PairScore], config: &RunConfig) -> Result<BTreeMap<String, usize>> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let table = DistanceTable::from_scores(scores)?;
    let distance_cutoff = 1.0 - config.cutoff;
    let mut counts = BTreeMap::new();
    for &linkage in &config.linkages {
        let dendrogram = hac(&table, linkage)?;
        csvio::write_dendrogram(&config.out_dir.join(format!("dendrogram.{linkage}.csv")), &dendrogram)?;
        let labels = cut(&dendrogram, distance_cutoff);
        csvio::write_clusters(&config.out_dir.join(format!("clusters.{linkage}.csv")), table.ids(), &labels)?;
        let distinct: BTreeSet<usize> = labels.iter().copied().collect();
        counts.insert(linkage.to_string(), distinct.len());
    }
    Ok(counts)
}

fn json_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}

/// Evaluates scores against manifest ground truth: histogram always;
/// precision–recall before and after clustering when both classes are
/// present. Returns notices for skipped parts.
fn evaluate_outputs(scores: &[PairScore], metas: &[SurfaceMeta], config: &RunConfig) -> Result<Vec<String>> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let labeled = label_pairs(scores, metas)?;
    let mut notices = Vec::new();

    let hist = score_histograms(&labeled, HISTOGRAM_BINS, HISTOGRAM_RANGE)?;
    csvio::write_histogram(&config.out_dir.join("histogram.csv"), &hist)?;

    let matches = labeled.iter().filter(|p| p.truth).count();
    let mut summary = BTreeMap::new();
    summary.insert("cutoff".to_string(), json_f64(config.cutoff));
    summary.insert("n_pairs".to_string(), serde_json::Value::from(labeled.len()));
    summary.insert("n_matches".to_string(), serde_json::Value::from(matches));
    summary.insert("n_nonmatches".to_string(), serde_json::Value::from(labeled.len() - matches));

    if matches == 0 || matches == labeled.len() {
        let reason = if matches == 0 { "no matched pairs" } else { "no non-matched pairs" };
        notices.push(format!("precision-recall skipped: {reason}; histogram written"));
        summary.insert("pr_skipped".to_string(), serde_json::Value::from(reason));
    } else {
        let before = pr_curve(&labeled)?;
        csvio::write_pr(&config.out_dir.join("pr_before.csv"), &before)?;
        summary.insert("auc_before".to_string(), json_f64(before.auc));

        let table = DistanceTable::from_scores(scores)?;
        let mut after = BTreeMap::new();
        for &linkage in &config.linkages {
            let dendrogram = hac(&table, linkage)?;
            let curve = pr_from_clusterings(&dendrogram, table.ids(), &labeled)?;
            csvio::write_pr(&config.out_dir.join(format!("pr_after.{linkage}.csv")), &curve)?;
            after.insert(linkage.to_string(), json_f64(curve.auc));
        }
        summary.insert(
            "auc_after".to_string(),
            serde_json::Value::Object(after.into_iter().collect()),
        );
    }

    let body = serde_json::to_string_pretty(&summary).map_err(|e| Error::data(e.to_string()))? + "\n";
    csvio::atomic_write(&config.out_dir.join("summary.json"), body.as_bytes())?;
    Ok(notices)
}

/// `preprocess` command: fill the cache from the manifest.
pub fn cmd_preprocess(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let metas = read_manifest(&config.manifest)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let pool = build_pool(config.jobs)?;
    let outcome = preprocess_stage(&metas, config, &pool)?;
    write_failures(&config.out_dir, &outcome.failures)?;
    Ok(RunReport {
        processed: outcome.processed,
        cache_hits: outcome.cache_hits,
        failures: outcome.failures,
        ..RunReport::default()
    })
}

/// `compare` command: score all manifest pairs from cached surfaces.
pub fn cmd_compare(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let metas = read_manifest(&config.manifest)?;
    let pool = build_pool(config.jobs)?;
    let outcome = compare_stage(&metas, config, &pool)?;
    write_failures(&config.out_dir, &outcome.failures)?;
    Ok(RunReport {
        pairs_scored: outcome.scores.len(),
        failures: outcome.failures,
        notices: outcome.notices,
        ..RunReport::default()
    })
}

/// `cluster` command: read the scores table, write clusterings.
pub fn cmd_cluster(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let scores = csvio::read_scores(&config.out_dir.join("scores.csv"))?;
    cluster_outputs(&scores, config)?;
    Ok(RunReport::default())
}

/// `evaluate` command: read scores and manifest, write PR/histogram/summary.
pub fn cmd_evaluate(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let metas = read_manifest(&config.manifest)?;
    let scores = csvio::read_scores(&config.out_dir.join("scores.csv"))?;
    let notices = evaluate_outputs(&scores, &metas, config)?;
    Ok(RunReport { notices, ..RunReport::default() })
}

/// `run` command: all stages. Images that fail preprocessing are dropped
/// from the comparison; any failure is reported and reflected in the exit
/// code, but the surviving work completes.
pub fn cmd_run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let metas = read_manifest(&config.manifest)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let pool = build_pool(config.jobs)?;

    let pre = preprocess_stage(&metas, config, &pool)?;
    let mut report = RunReport {
        processed: pre.processed,
        cache_hits: pre.cache_hits,
        failures: pre.failures,
        ..RunReport::default()
    };

    let cmp = compare_stage(&pre.succeeded, config, &pool)?;
    report.pairs_scored = cmp.scores.len();
    report.failures.extend(cmp.failures);
    report.notices.extend(cmp.notices);

    if cmp.scores.is_empty() {
        report.notices.push("no scores produced; clustering and evaluation skipped".to_string());
    } else if report.failures.iter().any(|f| f.stage == "compare") {
        report
            .notices
            .push("scores table is incomplete; clustering and evaluation skipped".to_string());
    } else {
        cluster_outputs(&cmp.scores, config)?;
        let notices = evaluate_outputs(&cmp.scores, &pre.succeeded, config)?;
        report.notices.extend(notices);
    }
    write_failures(&config.out_dir, &report.failures)?;
    Ok(report)
}
