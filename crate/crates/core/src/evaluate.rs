//! Ground-truth labeling, confusion counts, precision–recall curves with
//! AUC, and score histograms.

use std::collections::BTreeMap;

use crate::align::PairScore;
use crate::error::{Error, Result};
use crate::linkage::{clusters_to_pairs, cut, Dendrogram};
use crate::surface::SurfaceMeta;

/// A scored pair with its ground-truth same-source label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub id1: String,
    pub id2: String,
    pub s_hat: f64,
    pub truth: bool,
}

/// Confusion counts at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        // No predicted positives: perfect precision by convention.
        if self.true_pos + self.false_pos == 0 {
            1.0
        } else {
            self.true_pos as f64 / (self.true_pos + self.false_pos) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.true_pos + self.false_neg == 0 {
            0.0
        } else {
            self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
        }
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// One operating point of a precision–recall curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

/// Precision–recall curve with its area.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    /// Points sorted by cutoff, ascending.
    pub points: Vec<PRPoint>,
    pub auc: f64,
}

/// Per-class score histograms over uniform bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    /// bins + 1 edges, ascending.
    pub edges: Vec<f64>,
    pub match_counts: Vec<usize>,
    pub nonmatch_counts: Vec<usize>,
}

/// Attaches ground truth to each scored pair: two images share a source iff
/// their manifest (study, firearm, slide) triples are equal.
pub fn label_pairs(scores: &[PairScore], manifest: &[SurfaceMeta]) -> Result<Vec<LabeledPair>> {
    let sources: BTreeMap<&str, (&str, &str, &str)> =
        manifest.iter().map(|m| (m.id.as_str(), m.source_key())).collect();
    scores
        .iter()
        .map(|s| {
            let k1 = sources
                .get(s.id1.as_str())
                .ok_or_else(|| Error::data(format!("id {:?} is not in the manifest", s.id1)))?;
            let k2 = sources
                .get(s.id2.as_str())
                .ok_or_else(|| Error::data(format!("id {:?} is not in the manifest", s.id2)))?;
            Ok(LabeledPair { id1: s.id1.clone(), id2: s.id2.clone(), s_hat: s.s_hat, truth: k1 == k2 })
        })
        .collect()
}

/// Counts outcomes when pairs scoring above the cutoff are called matches.
pub fn confusion(labeled: &[LabeledPair], cutoff: f64) -> Confusion {
    let mut counts = Confusion::default();
    for pair in labeled {
        let predicted = pair.s_hat > cutoff;
        match (pair.truth, predicted) {
            (true, true) => counts.true_pos += 1,
            (false, true) => counts.false_pos += 1,
            (true, false) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    counts
}

fn class_counts(labeled: &[LabeledPair]) -> Result<()> {
    let matches = labeled.iter().filter(|p| p.truth).count();
    if matches == 0 {
        return Err(Error::data("precision-recall needs at least one true match"));
    }
    if matches == labeled.len() {
        return Err(Error::data("precision-recall needs at least one true non-match"));
    }
    Ok(())
}

/// Trapezoidal area under the curve: the best precision attained at each
/// distinct recall, integrated over recall.
fn area_under(points: &[PRPoint]) -> f64 {
    let mut best: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for p in points {
        // Recalls are ratios of identical integer counts, so equal recalls
        // are bit-equal and safe to key on.
        let key = p.recall.to_bits();
        let entry = best.entry(key).or_insert((p.recall, p.precision));
        entry.1 = entry.1.max(p.precision);
    }
    let mut envelope: Vec<(f64, f64)> = best.into_values().collect();
    envelope.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut auc = 0.0;
    for w in envelope.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    auc
}

/// Precision–recall curve from thresholding the scores. Cutoffs run from
/// below the smallest score (recall 1) to above the largest (recall 0),
/// evaluated at midpoints between distinct scores.
pub fn pr_curve(labeled: &[LabeledPair]) -> Result<PRCurve> {
    class_counts(labeled)?;
    let mut scores: Vec<f64> = labeled.iter().map(|p| p.s_hat).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("scores must be finite"));
    }
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scores.dedup();
    let mut cutoffs = Vec::with_capacity(scores.len() + 1);
    cutoffs.push(scores[0] - 1.0);
    for w in scores.windows(2) {
        cutoffs.push((w[0] + w[1]) / 2.0);
    }
    cutoffs.push(scores[scores.len() - 1] + 1.0);

    let points: Vec<PRPoint> = cutoffs
        .into_iter()
        .map(|cutoff| {
            let c = confusion(labeled, cutoff);
            PRPoint { cutoff, precision: c.precision(), recall: c.recall(), confusion: c }
        })
        .collect();
    let auc = area_under(&points);
    Ok(PRCurve { points, auc })
}

/// Precision–recall curve from sweeping the dendrogram cut height; each
/// height's flat clusters predict their within-cluster pairs as matches. The
/// recorded cutoff is the similarity equivalent 1 − height. `ids` gives the
/// leaf order of the dendrogram.
pub fn pr_from_clusterings(dendrogram: &Dendrogram, ids: &[String], labeled: &[LabeledPair]) -> Result<PRCurve> {
    class_counts(labeled)?;
    let n = ids.len();
    if dendrogram.n_leaves != n {
        return Err(Error::data("dendrogram and id list disagree on size"));
    }
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut truth = vec![vec![None::<bool>; n]; n];
    for pair in labeled {
        let i = *index
            .get(pair.id1.as_str())
            .ok_or_else(|| Error::data(format!("labeled id {:?} is not a dendrogram leaf", pair.id1)))?;
        let j = *index
            .get(pair.id2.as_str())
            .ok_or_else(|| Error::data(format!("labeled id {:?} is not a dendrogram leaf", pair.id2)))?;
        truth[i][j] = Some(pair.truth);
        truth[j][i] = Some(pair.truth);
    }
    for i in 0..n {
        for j in i + 1..n {
            if truth[i][j].is_none() {
                return Err(Error::data(format!("missing label for pair ({:?}, {:?})", ids[i], ids[j])));
            }
        }
    }
    let positives = labeled.iter().filter(|p| p.truth).count();
    let negatives = labeled.len() - positives;

    let mut heights: Vec<f64> = dendrogram.merges.iter().map(|m| m.height).collect();
    heights.dedup();
    // A cut below the first merge yields all singletons (recall 0).
    let sentinel = heights.first().map_or(0.0, |h| h - 1.0);
    let mut all = vec![sentinel];
    all.extend(heights);

    let mut points: Vec<PRPoint> = all
        .into_iter()
        .map(|height| {
            let labels = cut(dendrogram, height);
            let mut c = Confusion::default();
            for (i, j) in clusters_to_pairs(&labels) {
                if truth[i][j] == Some(true) {
                    c.true_pos += 1;
                } else {
                    c.false_pos += 1;
                }
            }
            c.false_neg = positives - c.true_pos;
            c.true_neg = negatives - c.false_pos;
            PRPoint { cutoff: 1.0 - height, precision: c.precision(), recall: c.recall(), confusion: c }
        })
        .collect();
    points.sort_by(|a, b| a.cutoff.partial_cmp(&b.cutoff).unwrap());
    let auc = area_under(&points);
    Ok(PRCurve { points, auc })
}

/// Histograms of match and non-match scores over `bins` uniform bins
/// spanning `range`. Scores outside the range land in the end bins; a score
/// exactly at the upper edge lands in the last bin.
pub fn score_histograms(labeled: &[LabeledPair], bins: usize, range: (f64, f64)) -> Result<ScoreHistogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::param("histogram needs at least one bin"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!("invalid histogram range ({lo}, {hi})")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut match_counts = vec![0usize; bins];
    let mut nonmatch_counts = vec![0usize; bins];
    for pair in labeled {
        let raw = ((pair.s_hat - lo) / width).floor();
        let bin = (raw.max(0.0) as usize).min(bins - 1);
        if pair.truth {
            match_counts[bin] += 1;
        } else {
            nonmatch_counts[bin] += 1;
        }
    }
    Ok(ScoreHistogram { edges, match_counts, nonmatch_counts })
}
