//! CSV and JSON artifact readers/writers. All final artifacts are written
//! atomically (temp file + rename) and floats use the shortest
//! round-trippable decimal form, so identical data yields identical bytes.

use std::io::Write;
use std::path::Path;

use crate::align::{AlignResult, PairScore};
use crate::error::{Error, Result};
use crate::evaluate::{PRCurve, ScoreHistogram};
use crate::linkage::Dendrogram;

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut file = tempfile::Builder::new()
        .prefix(".tmp-artifact")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))?;
    file.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub const SCORES_HEADER: [&str; 8] = ["id1", "id2", "c12", "c21", "s_hat", "theta_star", "k_star", "l_star"];

/// The pose reported in a score row: the direction that won s_hat.
fn winning_pose(score: &PairScore) -> AlignResult {
    if score.c12 >= score.c21 {
        score.align1
    } else {
        score.align2
    }
}

pub fn score_record(score: &PairScore) -> Vec<String> {
    let pose = winning_pose(score);
    vec![
        score.id1.clone(),
        score.id2.clone(),
        score.c12.to_string(),
        score.c21.to_string(),
        score.s_hat.to_string(),
        pose.theta_star.to_string(),
        pose.k_star.to_string(),
        pose.l_star.to_string(),
    ]
}

/// Writes the scores table sorted by (id1, id2).
pub fn write_scores(path: &Path, scores: &[PairScore]) -> Result<()> {
    let mut sorted: Vec<&PairScore> = scores.iter().collect();
    sorted.sort_by(|a, b| (&a.id1, &a.id2).cmp(&(&b.id1, &b.id2)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_HEADER).map_err(|e| Error::data(e.to_string()))?;
    for score in sorted {
        w.write_record(score_record(score)).map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    atomic_write(path, &bytes)
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, path: &Path) -> Result<T> {
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::format(path, format!("row has fewer than {} fields", idx + 1)))?;
    raw.parse()
        .map_err(|_| Error::format(path, format!("cannot parse field {} from {raw:?}", SCORES_HEADER[idx])))
}

/// Reads a scores table. Both reported correlations share the single stored
/// pose, which belongs to the winning direction.
pub fn read_scores(path: &Path) -> Result<Vec<PairScore>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SCORES_HEADER {
        return Err(Error::format(path, format!("unexpected scores header {headers:?}")));
    }
    let mut scores = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let pose = AlignResult {
            ccf_max: parse_field(&record, 4, path)?,
            theta_star: parse_field(&record, 5, path)?,
            k_star: parse_field(&record, 6, path)?,
            l_star: parse_field(&record, 7, path)?,
        };
        let c12: f64 = parse_field(&record, 2, path)?;
        let c21: f64 = parse_field(&record, 3, path)?;
        scores.push(PairScore {
            id1: record.get(0).unwrap().to_string(),
            id2: record.get(1).unwrap().to_string(),
            c12,
            c21,
            s_hat: parse_field(&record, 4, path)?,
            align1: AlignResult { ccf_max: c12, ..pose },
            align2: AlignResult { ccf_max: c21, ..pose },
        });
    }
    Ok(scores)
}

pub fn write_clusters(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "cluster"]).map_err(|e| Error::data(e.to_string()))?;
    for (id, label) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &label.to_string()]).map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn write_dendrogram(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "left", "right", "height"]).map_err(|e| Error::data(e.to_string()))?;
    for (step, merge) in dendrogram.merges.iter().enumerate() {
        w.write_record([
            step.to_string(),
            merge.left.to_string(),
            merge.right.to_string(),
            merge.height.to_string(),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn write_pr(path: &Path, curve: &PRCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cutoff", "precision", "recall", "tp", "fp", "fn", "tn"])
        .map_err(|e| Error::data(e.to_string()))?;
    for p in &curve.points {
        w.write_record([
            p.cutoff.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.confusion.true_pos.to_string(),
            p.confusion.false_pos.to_string(),
            p.confusion.false_neg.to_string(),
            p.confusion.true_neg.to_string(),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn write_histogram(path: &Path, hist: &ScoreHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_low", "bin_high", "match_count", "nonmatch_count"])
        .map_err(|e| Error::data(e.to_string()))?;
    for (i, (m, nm)) in hist.match_counts.iter().zip(&hist.nonmatch_counts).enumerate() {
        w.write_record([
            hist.edges[i].to_string(),
            hist.edges[i + 1].to_string(),
            m.to_string(),
            nm.to_string(),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    atomic_write(path, &bytes)
}
