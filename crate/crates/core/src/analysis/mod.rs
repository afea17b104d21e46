//! Ground truth, error metrics, confusion matrices and rank statistics.

pub mod special;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorimetry::ItaClass;
use crate::extraction::{MaskSource, Method, SkinEstimate};
use crate::recolor::RecolorStrategy;

pub use stats::{
    dunn_posthoc, kruskal_dunn, kruskal_wallis, rank_groups, Correction, PairwiseComparison, RankSummary,
    StatsResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("non-finite observation")]
    NonFinite,
    #[error("no ground-truth label for image(s): {}", .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("no estimates to label")]
    NoEstimates,
    #[error("method {0} supplied more than once")]
    DuplicateMethod(Method),
    #[error("no records")]
    NoRecords,
}

/// Absolute ITA difference in degrees.
pub fn ita_error(reference: f64, rendered: f64) -> f64 {
    (reference - rendered).abs()
}

/// One evaluated cell: reference and rendered estimates side by side.
///
/// Kept flat so it maps one-to-one onto a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub method: Method,
    pub recolor: RecolorStrategy,
    pub lighting: String,
    pub ref_r: f64,
    pub ref_g: f64,
    pub ref_b: f64,
    pub ref_lab_l: f64,
    pub ref_lab_a: f64,
    pub ref_lab_b: f64,
    pub ref_ita: f64,
    pub ref_class: ItaClass,
    pub ren_r: f64,
    pub ren_g: f64,
    pub ren_b: f64,
    pub ren_lab_l: f64,
    pub ren_lab_a: f64,
    pub ren_lab_b: f64,
    pub ren_ita: f64,
    pub ren_class: ItaClass,
    pub delta_e: f64,
    pub ita_error: f64,
    /// Mask behind an MMM-family reference; empty for cheek methods.
    #[serde(default)]
    pub ref_mask: Option<MaskSource>,
}

impl EvalRecord {
    pub fn new(
        image_id: impl Into<String>,
        recolor: RecolorStrategy,
        lighting: impl Into<String>,
        reference: &SkinEstimate,
        rendered: &SkinEstimate,
    ) -> EvalRecord {
        EvalRecord {
            image_id: image_id.into(),
            method: reference.method,
            recolor,
            lighting: lighting.into(),
            ref_r: reference.mean.r,
            ref_g: reference.mean.g,
            ref_b: reference.mean.b,
            ref_lab_l: reference.lab.l,
            ref_lab_a: reference.lab.a,
            ref_lab_b: reference.lab.b,
            ref_ita: reference.ita,
            ref_class: reference.class,
            ren_r: rendered.mean.r,
            ren_g: rendered.mean.g,
            ren_b: rendered.mean.b,
            ren_lab_l: rendered.lab.l,
            ren_lab_a: rendered.lab.a,
            ren_lab_b: rendered.lab.b,
            ren_ita: rendered.ita,
            ren_class: rendered.class,
            delta_e: crate::colorimetry::delta_e(reference.lab, rendered.lab),
            ita_error: ita_error(reference.ita, rendered.ita),
            ref_mask: reference.mask_source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelResolution {
    /// A unique most frequent class existed.
    Majority,
    /// No unique mode; the T-MMM class was used.
    TieBrokenByTMmm,
    /// No unique mode and no T-MMM estimate; the darkest tied class was used.
    TieBrokenDarkest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub image_id: String,
    pub class: ItaClass,
    pub resolution: LabelResolution,
    /// Number of per-method classes that went into the vote.
    pub voters: usize,
}

/// Majority vote over per-method classes; ties go to the T-MMM class.
pub fn ground_truth_class(
    image_id: &str,
    votes: &[(Method, ItaClass)],
) -> Result<GroundTruthLabel, AnalysisError> {
    if votes.is_empty() {
        return Err(AnalysisError::NoEstimates);
    }
    let mut seen = [false; 4];
    for (m, _) in votes {
        let i = Method::ALL.iter().position(|x| x == m).expect("method listed in ALL");
        if std::mem::replace(&mut seen[i], true) {
            return Err(AnalysisError::DuplicateMethod(*m));
        }
    }
    let mut counts = [0usize; 6];
    for (_, c) in votes {
        counts[c.index()] += 1;
    }
    let top = *counts.iter().max().expect("six classes");
    let tied: Vec<ItaClass> = ItaClass::ALL.into_iter().filter(|c| counts[c.index()] == top).collect();
    let (class, resolution) = if tied.len() == 1 {
        (tied[0], LabelResolution::Majority)
    } else if let Some((_, c)) = votes.iter().find(|(m, _)| *m == Method::TMmm) {
        (*c, LabelResolution::TieBrokenByTMmm)
    } else {
        (*tied.last().expect("non-empty"), LabelResolution::TieBrokenDarkest)
    };
    Ok(GroundTruthLabel {
        image_id: image_id.to_string(),
        class,
        resolution,
        voters: votes.len(),
    })
}

/// Convenience wrapper over full estimates.
pub fn ground_truth_from_estimates(
    image_id: &str,
    estimates: &[SkinEstimate],
) -> Result<GroundTruthLabel, AnalysisError> {
    let votes: Vec<(Method, ItaClass)> = estimates.iter().map(|e| (e.method, e.class)).collect();
    ground_truth_class(image_id, &votes)
}

/// Labels every image from the reference classes found in `records`.
pub fn labels_from_records(records: &[EvalRecord]) -> Result<BTreeMap<String, GroundTruthLabel>, AnalysisError> {
    let mut votes: BTreeMap<&str, BTreeMap<Method, ItaClass>> = BTreeMap::new();
    for r in records {
        votes.entry(&r.image_id).or_default().insert(r.method, r.ref_class);
    }
    votes
        .into_iter()
        .map(|(id, v)| {
            let v: Vec<(Method, ItaClass)> = v.into_iter().collect();
            ground_truth_class(id, &v).map(|l| (id.to_string(), l))
        })
        .collect()
}

/// Rows: ground-truth class; columns: rendered class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 6]; 6],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: ItaClass, rendered: ItaClass) {
        self.counts[truth.index()][rendered.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, truth: ItaClass) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..6).map(|i| self.counts[i][i]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\rendered");
        for c in ItaClass::ALL {
            out.push(',');
            out.push_str(c.label());
        }
        out.push('\n');
        for t in ItaClass::ALL {
            out.push_str(t.label());
            for v in self.counts[t.index()] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix<'a>(
    records: impl IntoIterator<Item = &'a EvalRecord>,
    labels: &BTreeMap<String, GroundTruthLabel>,
) -> Result<ConfusionMatrix, AnalysisError> {
    let mut m = ConfusionMatrix::default();
    let mut missing = std::collections::BTreeSet::new();
    for r in records {
        match labels.get(&r.image_id) {
            Some(l) => m.add(l.class, r.ren_class),
            None => {
                missing.insert(r.image_id.clone());
            }
        }
    }
    if missing.is_empty() {
        Ok(m)
    } else {
        Err(AnalysisError::MissingLabels(missing.into_iter().collect()))
    }
}

/// Order statistics of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    summarize(values).map(|s| s.median)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    Some(Summary {
        n,
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median,
        q3: quantile_sorted(&v, 0.75),
        max: v[n - 1],
        mean: v.iter().sum::<f64>() / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    DeltaE,
    ItaError,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::DeltaE, Metric::ItaError];

    pub fn of(self, r: &EvalRecord) -> f64 {
        match self {
            Metric::DeltaE => r.delta_e,
            Metric::ItaError => r.ita_error,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::DeltaE => "delta_e",
            Metric::ItaError => "ita_error",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::DeltaE => "ΔE (CIE76)",
            Metric::ItaError => "ITA error (degrees)",
        }
    }
}

/// Metric values grouped by `key`, in key order.
pub fn group_values<'a, K: Ord>(
    records: impl IntoIterator<Item = &'a EvalRecord>,
    metric: Metric,
    key: impl Fn(&EvalRecord) -> K,
) -> BTreeMap<K, Vec<f64>> {
    let mut out: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in records {
        out.entry(key(r)).or_default().push(metric.of(r));
    }
    out
}

pub fn summarize_groups<'a, K: Ord>(
    records: impl IntoIterator<Item = &'a EvalRecord>,
    metric: Metric,
    key: impl Fn(&EvalRecord) -> K,
) -> BTreeMap<K, Summary> {
    group_values(records, metric, key)
        .into_iter()
        .map(|(k, v)| {
            let s = summarize(&v).expect("groups are non-empty by construction");
            (k, s)
        })
        .collect()
}
