//! Experiment orchestration: the condition grid (baseline, four blinding
//! conditions, four exposure conditions), multi-seed training, evaluation,
//! significance testing, correlation analysis, and report persistence.

mod analysis;
mod report;

pub use analysis::{
    compare, comparison_csv, correlate, family_breakdown, Comparison, CorrelationTable,
    FamilyTable, LanguageVerdict, Verdict,
};
pub use report::{
    code_fingerprint, load_report, save_report, Aggregate, Checksums, RunReport, SeedResult,
    REPORT_VERSION,
};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Optimizer, Tape};
use crate::model::{
    descend, embedding_similarity, symmetrized_alpha, Batch, Model, ModelConfig, ModelError,
    TaskKind,
};
use crate::stats::{
    correlate_alpha, similarity_from_vectors, StatsError, StructuralVector,
};
use crate::synth::{
    classification_task, corpus_to_string, generate_suite, PairExample, Suite, SynthError, Tag,
    TaggedSentence,
};
use crate::typology::{FeatureArea, HeadMode, LanguageProfile, TypologyError, TypologyFeature};
use crate::wals::synthetic_profiles;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad run config: {0}")]
    BadConfig(String),
    #[error("training diverged on {diverged} of {total} seeds")]
    Divergence { diverged: usize, total: usize },
    #[error("reports cover different language sets")]
    LanguageSetMismatch,
    #[error("reports have different seed counts: {0} vs {1}")]
    SeedCountMismatch(usize, usize),
    #[error("report contains no completed seeds")]
    NoCompletedSeeds,
    #[error("language {0} has no family assignment")]
    MissingFamily(String),
    #[error("report version {got} unsupported (expected {expected})")]
    UnsupportedVersion { expected: u32, got: u32 },
    #[error("report checksum mismatch: expected {expected}, got {got}")]
    ChecksumMismatch { expected: String, got: String },
    #[error("unknown token {0:?} in corpus")]
    UnknownToken(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Typology(#[from] TypologyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

// ── Conditions ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Blind,
    Expose,
}

/// One cell of the experiment grid: what the typology heads do and which
/// feature area they see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub area: Option<FeatureArea>,
    pub lambda: f64,
    pub w_typ: f64,
}

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_W_TYP: f64 = 0.1;

impl Condition {
    pub fn baseline() -> Condition {
        Condition {
            mode: Mode::Baseline,
            area: None,
            lambda: 0.0,
            w_typ: 0.0,
        }
    }

    pub fn blind(area: FeatureArea) -> Condition {
        Condition {
            mode: Mode::Blind,
            area: Some(area),
            lambda: DEFAULT_LAMBDA,
            w_typ: DEFAULT_W_TYP,
        }
    }

    pub fn expose(area: FeatureArea) -> Condition {
        Condition {
            mode: Mode::Expose,
            area: Some(area),
            lambda: 0.0,
            w_typ: DEFAULT_W_TYP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Baseline => {
                if self.area.is_some() {
                    return Err(HarnessError::BadConfig(
                        "baseline carries no feature area".into(),
                    ));
                }
            }
            Mode::Blind => {
                if self.area.is_none() {
                    return Err(HarnessError::BadConfig("blind needs a feature area".into()));
                }
                if self.lambda <= 0.0 || !self.lambda.is_finite() {
                    return Err(HarnessError::BadConfig(format!(
                        "blind needs lambda > 0, got {}",
                        self.lambda
                    )));
                }
            }
            Mode::Expose => {
                if self.area.is_none() {
                    return Err(HarnessError::BadConfig(
                        "expose needs a feature area".into(),
                    ));
                }
            }
        }
        if matches!(self.mode, Mode::Blind | Mode::Expose)
            && (self.w_typ <= 0.0 || !self.w_typ.is_finite())
        {
            return Err(HarnessError::BadConfig(format!(
                "typology loss weight must be positive, got {}",
                self.w_typ
            )));
        }
        Ok(())
    }

    /// Stable label used for report file names and table columns.
    pub fn label(&self) -> String {
        match (self.mode, self.area) {
            (Mode::Baseline, _) => "baseline".to_string(),
            (Mode::Blind, Some(a)) => format!("blind_{}", a.name()),
            (Mode::Expose, Some(a)) => format!("expose_{}", a.name()),
            _ => "invalid".to_string(),
        }
    }

    fn head_mode(&self) -> Option<HeadMode> {
        match self.mode {
            Mode::Baseline => None,
            Mode::Blind => Some(HeadMode::Blind {
                lambda: self.lambda,
            }),
            Mode::Expose => Some(HeadMode::Expose),
        }
    }
}

/// The full grid: one baseline plus blind and expose over every area.
pub fn condition_grid() -> Vec<Condition> {
    let mut grid = vec![Condition::baseline()];
    for area in FeatureArea::ALL {
        grid.push(Condition::blind(area));
    }
    for area in FeatureArea::ALL {
        grid.push(Condition::expose(area));
    }
    grid
}

// ── Run configuration ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    TokenTagging,
    SentenceClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub languages: usize,
    pub seed: u64,
    #[serde(default)]
    pub corpus: crate::synth::CorpusSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub layers: usize,
    pub hidden: usize,
    pub token_embed: usize,
    pub lang_embed: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            layers: 2,
            hidden: 64,
            token_embed: 32,
            lang_embed: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub suite: SuiteSpec,
    #[serde(default)]
    pub model: ModelDims,
    pub task: TaskFamily,
    pub condition: Condition,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub significance_threshold: f64,
}

impl RunConfig {
    pub fn standard(condition: Condition) -> RunConfig {
        RunConfig {
            suite: SuiteSpec {
                languages: 8,
                seed: 20260823,
                corpus: Default::default(),
            },
            model: ModelDims::default(),
            task: TaskFamily::TokenTagging,
            condition,
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            significance_threshold: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.condition.validate()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::BadConfig("need at least one seed".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.seeds.iter().all(|s| seen.insert(s)) {
            return Err(HarnessError::BadConfig("duplicate seed".into()));
        }
        if !(0.0..1.0).contains(&self.significance_threshold)
            || self.significance_threshold == 0.0
        {
            return Err(HarnessError::BadConfig(format!(
                "significance threshold must lie in (0,1), got {}",
                self.significance_threshold
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(HarnessError::BadConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(HarnessError::BadConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.suite.corpus.validate()?;
        Ok(())
    }

    fn task_kind(&self) -> TaskKind {
        match self.task {
            TaskFamily::TokenTagging => TaskKind::TokenTagging {
                labels: Tag::ALL.len(),
            },
            TaskFamily::SentenceClassification => TaskKind::SentenceClassification { labels: 2 },
        }
    }
}

// ── Data preparation ────────────────────────────────────────────────────

/// Index 0 is reserved for the sentence-pair separator token.
pub const SEP_TOKEN: &str = "<sep>";

struct Prepared {
    suite: Suite,
    languages: Vec<String>,
    vocab: BTreeMap<String, usize>,
    features: Vec<TypologyFeature>,
    profiles: BTreeMap<String, LanguageProfile>,
    /// Token-id sentences per language and split.
    splits: BTreeMap<String, SplitBatches>,
    structural: Vec<StructuralVector>,
    data_checksum: String,
}

struct SplitBatches {
    train: Vec<Example>,
    dev: Vec<Example>,
    test: Vec<Example>,
}

/// One sentence (or sentence pair) as token ids plus labels.
#[derive(Clone)]
struct Example {
    tokens: Vec<usize>,
    labels: Vec<usize>,
}

fn sentence_example(s: &TaggedSentence, vocab: &BTreeMap<String, usize>) -> Result<Example> {
    let tokens = s
        .tokens
        .iter()
        .map(|t| {
            vocab
                .get(t)
                .copied()
                .ok_or_else(|| HarnessError::UnknownToken(t.clone()))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(Example {
        labels: s.tags.iter().map(|t| t.index()).collect(),
        tokens,
    })
}

fn pair_example(p: &PairExample, vocab: &BTreeMap<String, usize>) -> Result<Example> {
    let mut tokens = Vec::with_capacity(p.tokens_a.len() + p.tokens_b.len() + 1);
    for t in p.tokens_a.iter().chain([&SEP_TOKEN.to_string()]).chain(&p.tokens_b) {
        tokens.push(
            vocab
                .get(t)
                .copied()
                .ok_or_else(|| HarnessError::UnknownToken(t.clone()))?,
        );
    }
    Ok(Example {
        tokens,
        labels: vec![p.same_clause as usize],
    })
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let suite = generate_suite(
        config.suite.languages,
        config.suite.seed,
        &config.suite.corpus,
    )?;
    let languages: Vec<String> = suite.grammars.iter().map(|g| g.language.clone()).collect();

    let mut vocab = BTreeMap::new();
    vocab.insert(SEP_TOKEN.to_string(), 0usize);
    let mut surfaces = std::collections::BTreeSet::new();
    for corpus in suite.corpora.values() {
        for s in corpus.all_sentences() {
            surfaces.extend(s.tokens.iter().cloned());
        }
    }
    for s in surfaces {
        let next = vocab.len();
        vocab.insert(s, next);
    }

    let (all_features, profiles) = synthetic_profiles(&suite.grammars);
    let features: Vec<TypologyFeature> = match config.condition.area {
        None => vec![],
        Some(area) => all_features
            .into_iter()
            .filter(|f| f.area == area)
            .collect(),
    };

    let mut splits = BTreeMap::new();
    match config.task {
        TaskFamily::TokenTagging => {
            for (lang, corpus) in &suite.corpora {
                let mk = |sents: &[TaggedSentence]| {
                    sents
                        .iter()
                        .map(|s| sentence_example(s, &vocab))
                        .collect::<Result<Vec<_>>>()
                };
                splits.insert(
                    lang.clone(),
                    SplitBatches {
                        train: mk(&corpus.train)?,
                        dev: mk(&corpus.dev)?,
                        test: mk(&corpus.test)?,
                    },
                );
            }
        }
        TaskFamily::SentenceClassification => {
            // Pairs bridge language i and its successor; examples are routed
            // through language i's column. The task head trains on the first
            // language's pairs only and is evaluated on all (zero-shot).
            let l = languages.len();
            for (i, lang) in languages.iter().enumerate() {
                let partner = &languages[(i + 1) % l];
                let a = &suite.corpora[lang];
                let b = &suite.corpora[partner];
                let mk = |xa: &[TaggedSentence], xb: &[TaggedSentence]| {
                    classification_task(xa, xb)
                        .iter()
                        .map(|p| pair_example(p, &vocab))
                        .collect::<Result<Vec<_>>>()
                };
                splits.insert(
                    lang.clone(),
                    SplitBatches {
                        train: if i == 0 { mk(&a.train, &b.train)? } else { vec![] },
                        dev: mk(&a.dev, &b.dev)?,
                        test: mk(&a.test, &b.test)?,
                    },
                );
            }
        }
    }

    let structural = crate::stats::structural_vectors(&suite.corpora)?;

    let mut data_text = String::new();
    for (lang, corpus) in &suite.corpora {
        data_text.push_str(lang);
        for split in [&corpus.train, &corpus.dev, &corpus.test] {
            data_text.push('\n');
            data_text.push_str(&corpus_to_string(split));
        }
    }
    let data_checksum = crate::sha256_hex(data_text.as_bytes());

    Ok(Prepared {
        suite,
        languages,
        vocab,
        features,
        profiles,
        splits,
        structural,
        data_checksum,
    })
}

fn to_batches(examples: &[Example], language_index: usize, batch_size: usize) -> Vec<Batch> {
    examples
        .chunks(batch_size)
        .map(|chunk| {
            let mut tokens = Vec::new();
            let mut segments = Vec::new();
            let mut labels = Vec::new();
            for ex in chunk {
                tokens.extend_from_slice(&ex.tokens);
                segments.push(ex.tokens.len());
                labels.extend_from_slice(&ex.labels);
            }
            Batch {
                language_index,
                tokens,
                segments,
                labels,
            }
        })
        .collect()
}

// ── Training ────────────────────────────────────────────────────────────

fn accuracy(model: &Model, batches: &[Batch]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for batch in batches {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, batch)?;
        let logits = tape.value(out.logits);
        let (rows, cols) = (logits.rows(), logits.cols());
        for r in 0..rows {
            let row = &logits.values()[r * cols..(r + 1) * cols];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty row");
            correct += (argmax == batch.labels[r]) as usize;
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Outcome of training one seed; `None` accuracy maps mean the seed
/// diverged.
fn train_seed(config: &RunConfig, prep: &Prepared, seed: u64) -> Result<SeedResult> {
    let model_config = ModelConfig {
        languages: prep.languages.clone(),
        vocab_size: prep.vocab.len(),
        layers: config.model.layers,
        hidden: config.model.hidden,
        token_embed: config.model.token_embed,
        lang_embed: config.model.lang_embed,
        task: config.task_kind(),
    };
    let mut model = Model::new(model_config, &prep.features, seed)?;
    let mut optimizer = Optimizer::adam(config.learning_rate);
    let head_mode = config.condition.head_mode();

    // (language index, batch) pairs, reshuffled every epoch.
    let mut train_batches: Vec<(usize, Batch)> = Vec::new();
    for (i, lang) in prep.languages.iter().enumerate() {
        for b in to_batches(&prep.splits[lang].train, i, config.batch_size) {
            train_batches.push((i, b));
        }
    }

    let mut diverged = false;
    'training: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_batches.len()).collect();
        let mut rng = crate::seeded_rng(&[
            "epoch",
            &seed.to_string(),
            &epoch.to_string(),
        ]);
        order.shuffle(&mut rng);
        for &bi in &order {
            let (lang_idx, batch) = &train_batches[bi];
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, batch)?;
            let task_loss = tape.cross_entropy(out.logits, &batch.labels)?;
            let loss = match head_mode {
                None => task_loss,
                Some(mode) => {
                    let lang = &prep.languages[*lang_idx];
                    let heads = model.heads().expect("condition registered heads");
                    let typ = heads.typology_loss(
                        &mut tape,
                        model.params(),
                        out.pooled,
                        &prep.profiles[lang],
                        mode,
                    )?;
                    crate::typology::combined_loss(
                        &mut tape,
                        task_loss,
                        typ,
                        config.condition.w_typ,
                    )?
                }
            };
            if !tape.value(loss).scalar_value().is_finite() {
                diverged = true;
                break 'training;
            }
            descend(&tape, loss, model.params_mut(), &mut optimizer)?;
        }
    }

    if diverged {
        return Ok(SeedResult {
            seed,
            diverged: true,
            dev_accuracy: BTreeMap::new(),
            test_accuracy: BTreeMap::new(),
            alpha: vec![],
            alpha_scores: None,
            language_embeddings: vec![],
            r_structural: None,
            r_embedding: None,
        });
    }

    let mut dev_accuracy = BTreeMap::new();
    let mut test_accuracy = BTreeMap::new();
    for (i, lang) in prep.languages.iter().enumerate() {
        let dev = to_batches(&prep.splits[lang].dev, i, config.batch_size);
        let test = to_batches(&prep.splits[lang].test, i, config.batch_size);
        dev_accuracy.insert(lang.clone(), accuracy(&model, &dev)?);
        test_accuracy.insert(lang.clone(), accuracy(&model, &test)?);
    }

    let alpha = model.alpha_snapshot();
    let alpha_scores = symmetrized_alpha(&alpha)?;
    let (_, embedding_rows) = model.language_embeddings();

    let r_structural = similarity_from_vectors(&prep.structural)
        .ok()
        .and_then(|sim| correlate_alpha(&alpha_scores, &sim).ok());
    let r_embedding = embedding_similarity(&model)
        .ok()
        .and_then(|sim| correlate_alpha(&alpha_scores, &sim).ok());

    Ok(SeedResult {
        seed,
        diverged: false,
        dev_accuracy,
        test_accuracy,
        alpha,
        alpha_scores: Some(alpha_scores),
        language_embeddings: embedding_rows,
        r_structural,
        r_embedding,
    })
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Train every seed under one condition and aggregate into a report.
/// Individual diverged seeds are recorded; the run fails only when more
/// than half diverge.
pub fn run_condition(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let prep = prepare(config)?;

    let mut per_seed = Vec::new();
    for &seed in &config.seeds {
        per_seed.push(train_seed(config, &prep, seed)?);
    }

    let diverged: Vec<u64> = per_seed
        .iter()
        .filter(|s| s.diverged)
        .map(|s| s.seed)
        .collect();
    if diverged.len() * 2 > config.seeds.len() {
        return Err(HarnessError::Divergence {
            diverged: diverged.len(),
            total: config.seeds.len(),
        });
    }

    let completed: Vec<&SeedResult> = per_seed.iter().filter(|s| !s.diverged).collect();
    let mut per_language_dev = BTreeMap::new();
    let mut per_language_test = BTreeMap::new();
    for lang in &prep.languages {
        let dev: f64 = completed.iter().map(|s| s.dev_accuracy[lang]).sum::<f64>()
            / completed.len() as f64;
        let test: f64 = completed.iter().map(|s| s.test_accuracy[lang]).sum::<f64>()
            / completed.len() as f64;
        per_language_dev.insert(lang.clone(), dev);
        per_language_test.insert(lang.clone(), test);
    }
    let mean_dev_accuracy =
        per_language_dev.values().sum::<f64>() / prep.languages.len() as f64;
    let mean_test_accuracy =
        per_language_test.values().sum::<f64>() / prep.languages.len() as f64;

    let collect_r = |pick: fn(&SeedResult) -> Option<f64>| -> Vec<f64> {
        completed.iter().filter_map(|s| pick(s)).collect()
    };
    let rs_structural = collect_r(|s| s.r_structural);
    let rs_embedding = collect_r(|s| s.r_embedding);
    let mean_of = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };

    let families: BTreeMap<String, String> = prep
        .suite
        .grammars
        .iter()
        .map(|g| (g.language.clone(), g.family.clone()))
        .collect();

    let aggregate = Aggregate {
        languages: prep.languages.clone(),
        families,
        structural_statistics: crate::stats::STRUCTURAL_STATISTICS
            .iter()
            .map(|s| s.to_string())
            .collect(),
        structural_vectors: prep.structural.clone(),
        per_language_dev,
        per_language_test,
        mean_dev_accuracy,
        mean_test_accuracy,
        mean_r_structural: mean_of(&rs_structural),
        median_r_structural: median(&mut rs_structural.clone()),
        mean_r_embedding: mean_of(&rs_embedding),
        median_r_embedding: median(&mut rs_embedding.clone()),
        diverged_seeds: diverged,
    };

    let checksums = Checksums {
        code: code_fingerprint(),
        data: prep.data_checksum.clone(),
        body: String::new(),
    };

    let mut report = RunReport {
        schema_version: REPORT_VERSION,
        config: config.clone(),
        per_seed,
        aggregate,
        baseline_comparison: None,
        checksums,
        wall_clock_secs: 0.0,
    };
    report.checksums.body = report.body_checksum()?;
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Run the full nine-condition grid, attach baseline comparisons to the
/// non-baseline reports, and return them keyed by condition label. The base
/// config's lambda and typology weight carry over to every cell when set;
/// unset (non-positive) values fall back to the defaults.
pub fn run_grid(base: &RunConfig) -> Result<Vec<(String, RunReport)>> {
    let lambda = if base.condition.lambda > 0.0 {
        base.condition.lambda
    } else {
        DEFAULT_LAMBDA
    };
    let w_typ = if base.condition.w_typ > 0.0 {
        base.condition.w_typ
    } else {
        DEFAULT_W_TYP
    };
    let baseline = run_condition(&RunConfig {
        condition: Condition::baseline(),
        ..base.clone()
    })?;

    let mut out = Vec::new();
    for mut condition in condition_grid() {
        if condition.mode == Mode::Baseline {
            out.push((condition.label(), baseline.clone()));
            continue;
        }
        if condition.mode == Mode::Blind {
            condition.lambda = lambda;
        }
        condition.w_typ = w_typ;
        let config = RunConfig {
            condition,
            ..base.clone()
        };
        let mut report = run_condition(&config)?;
        report.baseline_comparison = Some(compare(
            &baseline,
            &report,
            crate::stats::Tail::BelowBaseline,
            base.significance_threshold,
        )?);
        report.checksums.body = report.body_checksum()?;
        out.push((condition.label(), report));
    }
    Ok(out)
}
