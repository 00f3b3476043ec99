//! Similarity measures and the statistics connecting learned sharing
//! weights to language similarity: Pearson correlation, Welch's one-tailed
//! t-test (with a from-scratch t CDF), cosine similarity matrices, and
//! structural vectors computed from corpus order statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{Tag, TaggedCorpus};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: an input has zero variance")]
    ZeroVariance,
    #[error("t-test undefined: both samples have zero variance")]
    DegenerateVariance,
    #[error("corpus for {0:?} is empty")]
    EmptyCorpus(String),
    #[error("need at least {needed} languages, got {got}")]
    TooFewLanguages { needed: usize, got: usize },
    #[error("matrix is not square: {0} values for {1} languages")]
    NotSquare(usize, usize),
    #[error("language sets differ between the two matrices")]
    LanguageMismatch,
}

pub type Result<T> = std::result::Result<T, StatsError>;

// ── Pearson ─────────────────────────────────────────────────────────────

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

// ── Welch's t-test ──────────────────────────────────────────────────────

/// Direction of the alternative hypothesis when comparing a candidate
/// sample `b` against a baseline sample `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// H1: mean(b) < mean(a).
    BelowBaseline,
    /// H1: mean(b) > mean(a).
    AboveBaseline,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance one-tailed t-test. Returns the p-value for the
/// requested alternative.
pub fn one_tailed_t_test(a: &[f64], b: &[f64], tail: Tail) -> Result<f64> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se = (sa + sb).sqrt();
    let t = (ma - mb) / se;
    let df = (sa + sb) * (sa + sb)
        / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p_below = 1.0 - student_t_cdf(t, df);
    Ok(match tail {
        Tail::BelowBaseline => p_below,
        Tail::AboveBaseline => 1.0 - p_below,
    })
}

/// CDF of Student's t distribution with `df` degrees of freedom, via the
/// regularized incomplete beta function. Accurate to about 1e-12.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// I_x(a, b), evaluated by the continued fraction with the standard
/// symmetry switch for fast convergence.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must lie in [0,1], got {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln())
    .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 400;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = 0.999_999_999_999_809_9;
        for (i, c) in COEFFS.iter().enumerate() {
            acc += c / (x + (i + 1) as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

// ── Matrices ────────────────────────────────────────────────────────────

/// Row-major l×l matrix keyed by a fixed language order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    languages: Vec<String>,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(languages: Vec<String>, values: Vec<f64>) -> Result<SquareMatrix> {
        if values.len() != languages.len() * languages.len() {
            return Err(StatsError::NotSquare(values.len(), languages.len()));
        }
        Ok(SquareMatrix { languages, values })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.languages.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries above the diagonal in row-major order.
    pub fn strict_upper(&self) -> Vec<f64> {
        let l = self.languages.len();
        let mut out = Vec::with_capacity(l * (l - 1) / 2);
        for i in 0..l {
            for j in i + 1..l {
                out.push(self.at(i, j));
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let l = self.languages.len();
        (0..l).all(|i| (0..l).all(|j| (self.at(i, j) - self.at(j, i)).abs() <= tol))
    }

    /// CSV with a language-id header row and column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language");
        for lang in &self.languages {
            out.push(',');
            out.push_str(lang);
        }
        out.push('\n');
        for (i, lang) in self.languages.iter().enumerate() {
            out.push_str(lang);
            for j in 0..self.languages.len() {
                out.push(',');
                out.push_str(&format!("{}", self.at(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Symmetric similarity matrix with unit diagonal. Languages whose source
/// vectors were degenerate (zero variance / zero norm) are listed and get 0
/// off-diagonal similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub matrix: SquareMatrix,
    pub degenerate: Vec<String>,
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

fn similarity_matrix(languages: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<SimilarityMatrix> {
    if languages.len() < 2 {
        return Err(StatsError::TooFewLanguages {
            needed: 2,
            got: languages.len(),
        });
    }
    let l = languages.len();
    // Centering leaves ~1e-17 residue on constant vectors, so degeneracy is a
    // norm threshold rather than an exact-zero check.
    let flags: Vec<bool> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-9)
        .collect();
    let degenerate: Vec<String> = languages
        .iter()
        .zip(&flags)
        .filter(|(_, &flag)| flag)
        .map(|(lang, _)| lang.clone())
        .collect();
    let mut values = vec![0.0; l * l];
    for i in 0..l {
        values[i * l + i] = 1.0;
        for j in i + 1..l {
            let s = if flags[i] || flags[j] {
                0.0
            } else {
                cosine(&vectors[i], &vectors[j])
            };
            values[i * l + j] = s;
            values[j * l + i] = s;
        }
    }
    Ok(SimilarityMatrix {
        matrix: SquareMatrix::new(languages, values)?,
        degenerate,
    })
}

// ── Structural vectors ──────────────────────────────────────────────────

/// Fixed, versioned statistic list backing structural vectors. Reports echo
/// this so correlations stay comparable across runs.
pub const STRUCTURAL_STATISTICS: [&str; 4] = [
    "verb_before_object",
    "verb_first",
    "adp_before_noun",
    "affix_before_verb",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralVector {
    pub language: String,
    pub components: Vec<f64>,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Per-language frequency vectors over [`STRUCTURAL_STATISTICS`], computed
/// from all splits of each corpus.
pub fn structural_vectors(
    corpora: &BTreeMap<String, TaggedCorpus>,
) -> Result<Vec<StructuralVector>> {
    let mut out = Vec::with_capacity(corpora.len());
    for (lang, corpus) in corpora {
        if corpus.is_empty() {
            return Err(StatsError::EmptyCorpus(lang.clone()));
        }
        let mut vbo = (0usize, 0usize);
        let mut vf = (0usize, 0usize);
        let mut adp = (0usize, 0usize);
        let mut aff = (0usize, 0usize);
        for s in corpus.all_sentences() {
            let first_verb = s.tags.iter().position(|&t| t == Tag::Verb);
            let first_noun = s.tags.iter().position(|&t| t == Tag::Noun);
            let last_noun = s.tags.iter().rposition(|&t| t == Tag::Noun);
            if let (Some(v), Some(n)) = (first_verb, last_noun) {
                vbo.1 += 1;
                vbo.0 += (v < n) as usize;
            }
            if let (Some(v), Some(n)) = (first_verb, first_noun) {
                vf.1 += 1;
                vf.0 += (v < n) as usize;
            }
            for (i, &tag) in s.tags.iter().enumerate() {
                if tag == Tag::Adp {
                    adp.1 += 1;
                    adp.0 += (s.tags.get(i + 1) == Some(&Tag::Noun)) as usize;
                }
                if tag == Tag::Aff {
                    aff.1 += 1;
                    aff.0 += (s.tags.get(i + 1) == Some(&Tag::Verb)) as usize;
                }
            }
        }
        out.push(StructuralVector {
            language: lang.clone(),
            components: vec![
                ratio(vbo.0, vbo.1),
                ratio(vf.0, vf.1),
                ratio(adp.0, adp.1),
                ratio(aff.0, aff.1),
            ],
        });
    }
    Ok(out)
}

/// Cosine similarity of centered structural vectors.
pub fn similarity_from_vectors(vectors: &[StructuralVector]) -> Result<SimilarityMatrix> {
    let languages: Vec<String> = vectors.iter().map(|v| v.language.clone()).collect();
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mean = v.components.iter().sum::<f64>() / v.components.len().max(1) as f64;
            v.components.iter().map(|c| c - mean).collect()
        })
        .collect();
    similarity_matrix(languages, centered)
}

/// Plain cosine similarity over language embedding rows.
pub fn similarity_from_embeddings(
    languages: &[String],
    rows: &[Vec<f64>],
) -> Result<SimilarityMatrix> {
    if languages.len() != rows.len() {
        return Err(StatsError::LengthMismatch(languages.len(), rows.len()));
    }
    similarity_matrix(languages.to_vec(), rows.to_vec())
}

/// Pearson correlation between the strict upper triangles of a pairwise
/// sharing-score matrix and a similarity matrix over the same languages.
pub fn correlate_alpha(scores: &SquareMatrix, similarity: &SimilarityMatrix) -> Result<f64> {
    if scores.languages() != similarity.matrix.languages() {
        return Err(StatsError::LanguageMismatch);
    }
    if scores.len() < 3 {
        return Err(StatsError::TooFewLanguages {
            needed: 3,
            got: scores.len(),
        });
    }
    pearson(&scores.strict_upper(), &similarity.matrix.strict_upper())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{TaggedCorpus, TaggedSentence};

    #[test]
    fn pearson_affine_is_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 5.0];
        // Direct computation via raw sums.
        let n = 4.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let expect = (n * sxy - sx * sy)
            / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson(&x, &y).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_degenerate_inputs() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance)
        ));
    }

    #[test]
    fn t_cdf_matches_closed_forms_for_small_df() {
        // df=1 is a Cauchy: F(t) = 1/2 + atan(t)/pi.
        for t in [-3.0f64, -1.0, -0.2, 0.0, 0.5, 1.0, 4.0] {
            let expect = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((student_t_cdf(t, 1.0) - expect).abs() < 1e-12, "t={t}");
        }
        // df=2: F(t) = 1/2 + t / (2 sqrt(2 + t^2)).
        for t in [-2.0f64, -0.5, 0.0, 1.0, 3.0] {
            let expect = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0) - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn incomplete_beta_identities() {
        for x in [0.1, 0.3, 0.7, 0.95] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-12);
            let lhs = regularized_incomplete_beta(2.5, 1.5, x);
            let rhs = 1.0 - regularized_incomplete_beta(1.5, 2.5, 1.0 - x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..10 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-10, "n={n}");
            fact *= n as f64;
        }
        // Gamma(1/2) = sqrt(pi).
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn identical_samples_give_half() {
        let a = [0.5, 0.6, 0.7];
        let p = one_tailed_t_test(&a, &a, Tail::BelowBaseline).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn extreme_separation_is_significant() {
        let a = [0.9, 0.9, 0.9];
        let b = [0.1, 0.100001, 0.099999];
        let p = one_tailed_t_test(&a, &b, Tail::BelowBaseline).unwrap();
        assert!(p < 1e-4, "p = {p}");
    }

    #[test]
    fn tails_are_complementary() {
        let a = [0.86, 0.87, 0.88];
        let b = [0.84, 0.85, 0.85];
        let below = one_tailed_t_test(&a, &b, Tail::BelowBaseline).unwrap();
        let above = one_tailed_t_test(&a, &b, Tail::AboveBaseline).unwrap();
        assert!((below + above - 1.0).abs() < 1e-12);
        assert!(below < 0.5 && below > 0.0);
    }

    #[test]
    fn degenerate_variance_is_rejected() {
        assert!(matches!(
            one_tailed_t_test(&[1.0, 1.0], &[2.0, 2.0], Tail::BelowBaseline),
            Err(StatsError::DegenerateVariance)
        ));
    }

    fn corpus(lang: &str, sentences: Vec<Vec<Tag>>) -> (String, TaggedCorpus) {
        let train = sentences
            .into_iter()
            .map(|tags| TaggedSentence {
                tokens: tags.iter().map(|t| t.name().to_lowercase()).collect(),
                tags,
                language: lang.to_string(),
            })
            .collect();
        (
            lang.to_string(),
            TaggedCorpus {
                language: lang.to_string(),
                train,
                dev: vec![],
                test: vec![],
            },
        )
    }

    #[test]
    fn structural_components_from_pure_orders() {
        use Tag::*;
        let corpora: BTreeMap<_, _> = [
            corpus("svo", vec![vec![Noun, Verb, Aff, Noun]]),
            corpus("sov", vec![vec![Noun, Noun, Aff, Verb]]),
        ]
        .into_iter()
        .collect();
        let vectors = structural_vectors(&corpora).unwrap();
        let svo = vectors.iter().find(|v| v.language == "svo").unwrap();
        assert_eq!(svo.components[0], 1.0);
        let sov = vectors.iter().find(|v| v.language == "sov").unwrap();
        assert_eq!(sov.components[0], 0.0);
    }

    #[test]
    fn structural_components_match_hand_counts() {
        use Tag::*;
        // Three sentences: verb before last noun in 2 of 3; verb first in 1;
        // 1 of 2 adps pre-nominal; 2 of 3 affixes pre-verbal.
        let (_, c) = corpus(
            "x",
            vec![
                vec![Verb, Aff, Noun, Adp, Noun],
                vec![Noun, Aff, Verb, Noun, Noun, Adp],
                vec![Noun, Noun, Verb, Aff],
            ],
        );
        let corpora: BTreeMap<_, _> = [("x".to_string(), c)].into_iter().collect();
        let v = &structural_vectors(&corpora).unwrap()[0];
        assert_eq!(v.components, vec![2.0 / 3.0, 1.0 / 3.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpora: BTreeMap<_, _> = [(
            "x".to_string(),
            TaggedCorpus {
                language: "x".into(),
                train: vec![],
                dev: vec![],
                test: vec![],
            },
        )]
        .into_iter()
        .collect();
        assert!(matches!(
            structural_vectors(&corpora),
            Err(StatsError::EmptyCorpus(_))
        ));
    }

    fn sv(lang: &str, components: Vec<f64>) -> StructuralVector {
        StructuralVector {
            language: lang.into(),
            components,
        }
    }

    #[test]
    fn identical_vectors_have_unit_similarity() {
        let m = similarity_from_vectors(&[
            sv("a", vec![0.2, 0.8, 0.5]),
            sv("b", vec![0.2, 0.8, 0.5]),
        ])
        .unwrap();
        assert!((m.matrix.at(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(m.matrix.at(0, 0), 1.0);
        assert!(m.matrix.is_symmetric(0.0));
    }

    #[test]
    fn orthogonal_centered_vectors_have_zero_similarity() {
        // a centers to [0.5, -0.5, 0], b is already centered at [1, 1, -2];
        // their dot product is zero.
        let m = similarity_from_vectors(&[
            sv("a", vec![1.0, 0.0, 0.5]),
            sv("b", vec![1.0, 1.0, -2.0]),
        ])
        .unwrap();
        assert!((m.matrix.at(0, 1)).abs() < 1e-12);
    }

    #[test]
    fn similarity_matches_cosine_oracle() {
        let a = vec![0.9, 0.1, 0.3];
        let b = vec![0.2, 0.7, 0.5];
        let m = similarity_from_vectors(&[sv("a", a.clone()), sv("b", b.clone())]).unwrap();
        let center = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - mean).collect::<Vec<_>>()
        };
        let (ca, cb) = (center(&a), center(&b));
        let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
        let na: f64 = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((m.matrix.at(0, 1) - dot / (na * nb)).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_is_degenerate_with_zero_similarities() {
        let m = similarity_from_vectors(&[
            sv("flat", vec![0.4, 0.4, 0.4]),
            sv("x", vec![0.1, 0.9, 0.4]),
            sv("y", vec![0.9, 0.1, 0.2]),
        ])
        .unwrap();
        assert_eq!(m.degenerate, vec!["flat".to_string()]);
        assert_eq!(m.matrix.at(0, 1), 0.0);
        assert_eq!(m.matrix.at(0, 0), 1.0);
    }

    #[test]
    fn embedding_similarity_is_plain_cosine() {
        let langs = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let m = similarity_from_embeddings(&langs, &rows).unwrap();
        assert!((m.matrix.at(0, 1) - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
    }

    fn square(langs: &[&str], values: Vec<f64>) -> SquareMatrix {
        SquareMatrix::new(langs.iter().map(|s| s.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn proportional_scores_correlate_perfectly() {
        let langs = ["a", "b", "c"];
        let sim = SimilarityMatrix {
            matrix: square(&langs, vec![1.0, 0.2, 0.8, 0.2, 1.0, 0.5, 0.8, 0.5, 1.0]),
            degenerate: vec![],
        };
        let scores = square(&langs, vec![0.0, 0.4, 1.6, 0.4, 0.0, 1.0, 1.6, 1.0, 0.0]);
        let r = correlate_alpha(&scores, &sim).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlate_alpha_permutation_invariance() {
        let langs = ["a", "b", "c"];
        let sim_vals = vec![1.0, 0.2, 0.8, 0.2, 1.0, 0.5, 0.8, 0.5, 1.0];
        let score_vals = vec![0.0, 0.9, 0.1, 0.9, 0.0, 0.3, 0.1, 0.3, 0.0];
        let r1 = correlate_alpha(
            &square(&langs, score_vals.clone()),
            &SimilarityMatrix {
                matrix: square(&langs, sim_vals.clone()),
                degenerate: vec![],
            },
        )
        .unwrap();
        // Apply permutation (c, a, b) to both matrices simultaneously.
        let perm = [2usize, 0, 1];
        let permute = |vals: &[f64]| {
            let mut out = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] = vals[perm[i] * 3 + perm[j]];
                }
            }
            out
        };
        let plangs = ["c", "a", "b"];
        let r2 = correlate_alpha(
            &square(&plangs, permute(&score_vals)),
            &SimilarityMatrix {
                matrix: square(&plangs, permute(&sim_vals)),
                degenerate: vec![],
            },
        )
        .unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn correlate_alpha_needs_three_languages() {
        let langs = ["a", "b"];
        let sim = SimilarityMatrix {
            matrix: square(&langs, vec![1.0, 0.5, 0.5, 1.0]),
            degenerate: vec![],
        };
        let scores = square(&langs, vec![0.0, 0.1, 0.1, 0.0]);
        assert!(matches!(
            correlate_alpha(&scores, &sim),
            Err(StatsError::TooFewLanguages { .. })
        ));
    }

    #[test]
    fn csv_export_includes_language_headers() {
        let m = square(&["aa", "bb"], vec![1.0, 0.25, 0.25, 1.0]);
        let csv = m.to_csv();
        assert!(csv.starts_with("language,aa,bb\n"));
        assert!(csv.contains("aa,1,0.25"));
    }
}
