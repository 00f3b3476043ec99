//! Report analysis: significance verdicts against a baseline, correlation
//! tables between sharing scores and language similarity, and per-family
//! accuracy breakdowns. Everything here recomputes from persisted reports
//! alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result, RunReport};
use crate::stats::{
    correlate_alpha, one_tailed_t_test, similarity_from_embeddings, similarity_from_vectors,
    StatsError, Tail,
};

// ── Significance ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Candidate significantly above baseline.
    #[serde(rename = "+")]
    Better,
    /// Candidate significantly below baseline.
    #[serde(rename = "-")]
    Worse,
    /// No significant difference, or the test was undefined.
    #[serde(rename = "·")]
    Indistinct,
}

impl Verdict {
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Better => "+",
            Verdict::Worse => "-",
            Verdict::Indistinct => "·",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageVerdict {
    /// None when the test is undefined (too few samples, zero variance).
    pub p: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tail: Tail,
    pub threshold: f64,
    pub pooled: LanguageVerdict,
    pub per_language: BTreeMap<String, LanguageVerdict>,
}

fn judge(baseline: &[f64], candidate: &[f64], tail: Tail, threshold: f64) -> LanguageVerdict {
    let p_below = match one_tailed_t_test(baseline, candidate, Tail::BelowBaseline) {
        Ok(p) => p,
        Err(_) => {
            return LanguageVerdict {
                p: None,
                verdict: Verdict::Indistinct,
            }
        }
    };
    let verdict = if p_below < threshold {
        Verdict::Worse
    } else if 1.0 - p_below < threshold {
        Verdict::Better
    } else {
        Verdict::Indistinct
    };
    let p = match tail {
        Tail::BelowBaseline => p_below,
        Tail::AboveBaseline => 1.0 - p_below,
    };
    LanguageVerdict {
        p: Some(p),
        verdict,
    }
}

/// Per-language and pooled significance of candidate `b` against baseline
/// `a`. Pooled samples are per-seed mean accuracies; per-language samples
/// are that language's per-seed accuracies.
pub fn compare(
    a: &RunReport,
    b: &RunReport,
    tail: Tail,
    threshold: f64,
) -> Result<Comparison> {
    if a.aggregate.languages != b.aggregate.languages {
        return Err(HarnessError::LanguageSetMismatch);
    }
    if a.per_seed.len() != b.per_seed.len() {
        return Err(HarnessError::SeedCountMismatch(
            a.per_seed.len(),
            b.per_seed.len(),
        ));
    }
    let pooled = judge(&a.seed_means(), &b.seed_means(), tail, threshold);
    let mut per_language = BTreeMap::new();
    for lang in &a.aggregate.languages {
        let pick = |r: &RunReport| -> Vec<f64> {
            r.per_seed
                .iter()
                .filter(|s| !s.diverged)
                .map(|s| s.test_accuracy[lang])
                .collect()
        };
        per_language.insert(lang.clone(), judge(&pick(a), &pick(b), tail, threshold));
    }
    Ok(Comparison {
        tail,
        threshold,
        pooled,
        per_language,
    })
}

/// Table-shaped comparison rendering: per-language p-values and verdicts.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut out = String::from("language,p,verdict\n");
    for (lang, v) in &c.per_language {
        out.push_str(&format!(
            "{lang},{},{}\n",
            v.p.map(|p| p.to_string()).unwrap_or_default(),
            v.verdict.symbol()
        ));
    }
    out.push_str(&format!(
        "pooled,{},{}\n",
        c.pooled.p.map(|p| p.to_string()).unwrap_or_default(),
        c.pooled.verdict.symbol()
    ));
    out
}

// ── Correlations ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub seed: u64,
    pub structural: Option<f64>,
    pub embedding: Option<f64>,
}

/// Correlation between sharing scores and the two similarity measures, per
/// seed and pooled (mean over seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
    pub pooled_structural: Option<f64>,
    pub pooled_embedding: Option<f64>,
}

impl CorrelationTable {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("seed,structural,embedding\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.seed,
                cell(row.structural),
                cell(row.embedding)
            ));
        }
        out.push_str(&format!(
            "pooled,{},{}\n",
            cell(self.pooled_structural),
            cell(self.pooled_embedding)
        ));
        out
    }
}

/// Recompute the correlation table from a persisted report: sharing scores
/// against structural similarity and against embedding similarity.
pub fn correlate(report: &RunReport) -> Result<CorrelationTable> {
    if report.aggregate.languages.len() < 3 {
        return Err(HarnessError::Stats(StatsError::TooFewLanguages {
            needed: 3,
            got: report.aggregate.languages.len(),
        }));
    }
    let structural_sim = similarity_from_vectors(&report.aggregate.structural_vectors)?;
    let mut rows = Vec::new();
    for seed in &report.per_seed {
        if seed.diverged {
            continue;
        }
        let scores = seed
            .alpha_scores
            .as_ref()
            .ok_or(HarnessError::NoCompletedSeeds)?;
        let structural = correlate_alpha(scores, &structural_sim).ok();
        let embedding_sim = similarity_from_embeddings(
            &report.aggregate.languages,
            &seed.language_embeddings,
        )?;
        let embedding = correlate_alpha(scores, &embedding_sim).ok();
        rows.push(CorrelationRow {
            seed: seed.seed,
            structural,
            embedding,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::NoCompletedSeeds);
    }
    let pool = |pick: fn(&CorrelationRow) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(pick).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    Ok(CorrelationTable {
        pooled_structural: pool(|r| r.structural),
        pooled_embedding: pool(|r| r.embedding),
        rows,
    })
}

// ── Family breakdown ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTable {
    pub families: Vec<String>,
    pub conditions: Vec<String>,
    /// Mean test accuracy, indexed `[family][condition]`.
    pub means: Vec<Vec<f64>>,
    pub members: BTreeMap<String, Vec<String>>,
}

impl FamilyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family");
        for c in &self.conditions {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (fi, fam) in self.families.iter().enumerate() {
            out.push_str(fam);
            for v in &self.means[fi] {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Mean test accuracy per language family per condition, one column per
/// report in the order given.
pub fn family_breakdown(reports: &[&RunReport]) -> Result<FamilyTable> {
    let first = reports.first().ok_or(HarnessError::NoCompletedSeeds)?;
    let languages = &first.aggregate.languages;
    for r in reports.iter().skip(1) {
        if &r.aggregate.languages != languages {
            return Err(HarnessError::LanguageSetMismatch);
        }
    }
    let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for lang in languages {
        let family = first
            .aggregate
            .families
            .get(lang)
            .ok_or_else(|| HarnessError::MissingFamily(lang.clone()))?;
        members.entry(family.clone()).or_default().push(lang.clone());
    }
    let families: Vec<String> = members.keys().cloned().collect();
    let conditions: Vec<String> = reports
        .iter()
        .map(|r| r.config.condition.label())
        .collect();
    let means = families
        .iter()
        .map(|fam| {
            let langs = &members[fam];
            reports
                .iter()
                .map(|r| {
                    langs
                        .iter()
                        .map(|l| r.aggregate.per_language_test[l])
                        .sum::<f64>()
                        / langs.len() as f64
                })
                .collect()
        })
        .collect();
    Ok(FamilyTable {
        families,
        conditions,
        means,
        members,
    })
}
