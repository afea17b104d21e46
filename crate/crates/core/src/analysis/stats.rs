use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::special::{chi2_sf, gamma_q};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    #[default]
    Bonferroni,
    Holm,
}

impl Correction {
    pub fn key(self) -> &'static str {
        match self {
            Correction::Bonferroni => "bonferroni",
            Correction::Holm => "holm",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Correction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Correction::Bonferroni),
            "holm" => Ok(Correction::Holm),
            other => Err(format!("unknown correction {other:?} (bonferroni | holm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResult {
    pub test: String,
    pub groups: Vec<String>,
    pub sizes: Vec<usize>,
    pub h: f64,
    pub df: usize,
    pub p: f64,
    /// Set when every pooled value is identical and ranks carry no information.
    pub degenerate: bool,
    pub correction: Correction,
    pub posthoc: Vec<PairwiseComparison>,
}

/// Pooled midranks and the quantities both tests need.
#[derive(Debug, Clone)]
pub struct RankSummary {
    pub n_total: usize,
    pub sizes: Vec<usize>,
    pub rank_sums: Vec<f64>,
    /// Σ (t³ − t) over tie blocks.
    pub tie_term: f64,
}

impl RankSummary {
    pub fn mean_rank(&self, i: usize) -> f64 {
        self.rank_sums[i] / self.sizes[i] as f64
    }

    pub fn is_degenerate(&self) -> bool {
        let n = self.n_total as f64;
        1.0 - self.tie_term / (n * n * n - n) <= 0.0
    }
}

pub fn rank_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<RankSummary, AnalysisError> {
    if groups.len() < 2 {
        return Err(AnalysisError::TooFewGroups(groups.len()));
    }
    let mut pooled = Vec::new();
    for (g, values) in groups.iter().enumerate() {
        let values = values.as_ref();
        if values.is_empty() {
            return Err(AnalysisError::EmptyGroup(g));
        }
        for &v in values {
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite);
            }
            pooled.push((v, g));
        }
    }
    let n_total = pooled.len();
    if n_total < 3 {
        return Err(AnalysisError::TooFewObservations(n_total));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n_total {
        let mut j = i + 1;
        while j < n_total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let mid = (i + 1 + j) as f64 / 2.0;
        for &(_, g) in &pooled[i..j] {
            rank_sums[g] += mid;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    Ok(RankSummary {
        n_total,
        sizes: groups.iter().map(|g| g.as_ref().len()).collect(),
        rank_sums,
        tie_term,
    })
}

/// Tie-corrected Kruskal-Wallis H with its chi-square p value.
pub fn kruskal_wallis<G: AsRef<[f64]>>(names: &[String], groups: &[G]) -> Result<StatsResult, AnalysisError> {
    let ranks = rank_groups(groups)?;
    let n = ranks.n_total as f64;
    let k = groups.len();
    let (h, p, degenerate) = if ranks.is_degenerate() {
        (0.0, 1.0, true)
    } else {
        let s: f64 = (0..k).map(|i| ranks.rank_sums[i].powi(2) / ranks.sizes[i] as f64).sum();
        let raw = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
        let c = 1.0 - ranks.tie_term / (n * n * n - n);
        let h = (raw / c).max(0.0);
        (h, chi2_sf(h, (k - 1) as f64), false)
    };
    Ok(StatsResult {
        test: "kruskal-wallis".into(),
        groups: group_names(names, k),
        sizes: ranks.sizes,
        h,
        df: k - 1,
        p,
        degenerate,
        correction: Correction::default(),
        posthoc: Vec::new(),
    })
}

fn group_names(names: &[String], k: usize) -> Vec<String> {
    (0..k)
        .map(|i| names.get(i).cloned().unwrap_or_else(|| format!("group{}", i + 1)))
        .collect()
}

/// Dunn's pairwise comparisons on pooled midranks, in (i, j) order with
/// i < j.
pub fn dunn_posthoc<G: AsRef<[f64]>>(
    names: &[String],
    groups: &[G],
    correction: Correction,
) -> Result<Vec<PairwiseComparison>, AnalysisError> {
    let ranks = rank_groups(groups)?;
    let n = ranks.n_total as f64;
    let k = groups.len();
    let names = group_names(names, k);
    let base = n * (n + 1.0) / 12.0 - ranks.tie_term / (12.0 * (n - 1.0));
    let mut rows = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let var = base * (1.0 / ranks.sizes[i] as f64 + 1.0 / ranks.sizes[j] as f64);
            let diff = ranks.mean_rank(i) - ranks.mean_rank(j);
            let (z, p) = if var > 0.0 && !ranks.is_degenerate() {
                let z = diff / var.sqrt();
                // Two-sided: 2·(1 − Φ(|z|)) = Q(1/2, z²/2).
                (z, gamma_q(0.5, z * z / 2.0))
            } else {
                (0.0, 1.0)
            };
            rows.push(PairwiseComparison {
                group_a: names[i].clone(),
                group_b: names[j].clone(),
                z,
                p_raw: p,
                p_adjusted: p,
            });
        }
    }
    adjust(&mut rows, correction);
    Ok(rows)
}

fn adjust(rows: &mut [PairwiseComparison], correction: Correction) {
    let m = rows.len() as f64;
    match correction {
        Correction::Bonferroni => {
            for r in rows.iter_mut() {
                r.p_adjusted = (r.p_raw * m).min(1.0);
            }
        }
        Correction::Holm => {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| rows[a].p_raw.total_cmp(&rows[b].p_raw).then(a.cmp(&b)));
            let mut running = 0.0f64;
            for (rank, &idx) in order.iter().enumerate() {
                let v = ((m - rank as f64) * rows[idx].p_raw).min(1.0);
                running = running.max(v);
                rows[idx].p_adjusted = running;
            }
        }
    }
}

/// Omnibus test plus post hoc table in one result.
pub fn kruskal_dunn<G: AsRef<[f64]>>(
    names: &[String],
    groups: &[G],
    correction: Correction,
) -> Result<StatsResult, AnalysisError> {
    let mut res = kruskal_wallis(names, groups)?;
    res.posthoc = dunn_posthoc(names, groups, correction)?;
    res.correction = correction;
    Ok(res)
}
