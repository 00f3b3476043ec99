//! The multi-language model: token and language-identity embeddings feed a
//! shared encoder, whose states flow through per-language layer columns
//! mixed at every layer by a learnable sharing matrix. Task heads read the
//! owning language's stream; typology heads read the pooled pre-mix state.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{
    AutodiffError, Optimizer, ParamId, ParamSet, Tape, Tensor, ValueId,
};
use crate::stats::SquareMatrix;
use crate::typology::{HeadBank, TypologyError, TypologyFeature};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("language index {index} out of range for {count} languages")]
    UnknownLanguage { index: usize, count: usize },
    #[error("token id {index} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { index: usize, vocab: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("segment lengths sum to {sum} but batch has {rows} tokens")]
    SegmentMismatch { sum: usize, rows: usize },
    #[error("expected {expected} labels for this batch, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("sharing snapshot is empty")]
    EmptySnapshot,
    #[error("sharing snapshot layers disagree on languages")]
    SnapshotLayerMismatch,
    #[error("checkpoint version {got} unsupported (expected {expected})")]
    UnsupportedVersion { expected: u32, got: u32 },
    #[error("checkpoint checksum mismatch: expected {expected}, got {got}")]
    ChecksumMismatch { expected: String, got: String },
    #[error("checkpoint parameters do not match config: {0}")]
    ParamMismatch(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Typology(#[from] TypologyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

// ── Config ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    TokenTagging { labels: usize },
    SentenceClassification { labels: usize },
}

impl TaskKind {
    pub fn labels(&self) -> usize {
        match self {
            TaskKind::TokenTagging { labels } => *labels,
            TaskKind::SentenceClassification { labels } => *labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub languages: Vec<String>,
    pub vocab_size: usize,
    /// Per-language column depth K; sharing applies after every layer.
    pub layers: usize,
    /// Column width d.
    pub hidden: usize,
    pub token_embed: usize,
    pub lang_embed: usize,
    pub task: TaskKind,
}

impl ModelConfig {
    /// Default sizes; the smallest at which the blinding effect shows up
    /// reliably.
    pub fn standard(languages: Vec<String>, vocab_size: usize, task: TaskKind) -> ModelConfig {
        ModelConfig {
            languages,
            vocab_size,
            layers: 2,
            hidden: 64,
            token_embed: 32,
            lang_embed: 16,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(ModelError::BadConfig(msg.to_string()));
        if self.languages.is_empty() {
            return fail("no languages");
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.languages.iter().all(|l| seen.insert(l)) {
            return fail("duplicate language id");
        }
        if self.vocab_size == 0 || self.layers == 0 || self.hidden == 0 || self.token_embed == 0 {
            return fail("all sizes must be positive");
        }
        if self.lang_embed < 2 {
            return fail("language embedding width must be at least 2");
        }
        if self.task.labels() < 2 {
            return fail("task needs at least 2 labels");
        }
        Ok(())
    }

    pub fn language_count(&self) -> usize {
        self.languages.len()
    }
}

// ── Batches ─────────────────────────────────────────────────────────────

/// A monolingual batch: sentences concatenated row-wise with per-sentence
/// lengths, so pooling and neighbor shifts respect sentence edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub language_index: usize,
    pub tokens: Vec<usize>,
    pub segments: Vec<usize>,
    /// One label per token (tagging) or per segment (classification).
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.tokens.is_empty() || self.segments.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if self.language_index >= config.language_count() {
            return Err(ModelError::UnknownLanguage {
                index: self.language_index,
                count: config.language_count(),
            });
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                index: bad,
                vocab: config.vocab_size,
            });
        }
        let sum: usize = self.segments.iter().sum();
        if sum != self.tokens.len() || self.segments.contains(&0) {
            return Err(ModelError::SegmentMismatch {
                sum,
                rows: self.tokens.len(),
            });
        }
        let expected = match config.task {
            TaskKind::TokenTagging { .. } => self.tokens.len(),
            TaskKind::SentenceClassification { .. } => self.segments.len(),
        };
        if self.labels.len() != expected {
            return Err(ModelError::LabelCount {
                expected,
                got: self.labels.len(),
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= config.task.labels()) {
            return Err(ModelError::LabelCount {
                expected: config.task.labels() - 1,
                got: bad,
            });
        }
        Ok(())
    }
}

// ── Initialization ──────────────────────────────────────────────────────

/// Register a parameter drawn from U(−bound, bound), seeded by the run seed
/// and the parameter's own name. A zero bound registers zeros. Because the
/// draw never touches any shared RNG stream, adding or removing other
/// parameters (for example typology heads) cannot change this one's values.
pub(crate) fn init_param(
    params: &mut ParamSet,
    run_seed: u64,
    name: &str,
    shape: Vec<usize>,
    bound: f64,
) -> ParamId {
    let count: usize = shape.iter().product();
    let values = if bound == 0.0 {
        vec![0.0; count]
    } else {
        let mut rng = crate::seeded_rng(&["param", &run_seed.to_string(), name]);
        (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
    };
    params.register(
        name,
        Tensor::new(shape, values).expect("shape/value count computed together"),
    )
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

// ── Model ───────────────────────────────────────────────────────────────

pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    heads: Option<HeadBank>,
    run_seed: u64,
}

/// Tape handles produced by one forward pass.
pub struct ForwardPass {
    /// Shared encoder states, one row per token.
    pub encoder: ValueId,
    /// Mean-pooled encoder state per sentence, taken before any sharing.
    pub pooled: ValueId,
    /// Final per-language streams after the last sharing layer.
    pub streams: Vec<ValueId>,
    /// Task logits for the batch's language.
    pub logits: ValueId,
}

impl Model {
    /// Build a model with freshly initialized parameters. `features` may be
    /// empty, in which case no typology heads exist.
    pub fn new(
        config: ModelConfig,
        features: &[TypologyFeature],
        run_seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        let mut params = ParamSet::new();
        let l = config.language_count();
        let d = config.hidden;
        let enc_in = config.token_embed + config.lang_embed;

        init_param(
            &mut params,
            run_seed,
            "embed.token",
            vec![config.vocab_size, config.token_embed],
            0.1,
        );
        init_param(
            &mut params,
            run_seed,
            "embed.lang",
            vec![l, config.lang_embed],
            0.1,
        );
        init_param(
            &mut params,
            run_seed,
            "enc.w",
            vec![enc_in, d],
            xavier(enc_in, d),
        );
        init_param(&mut params, run_seed, "enc.b", vec![d], 0.0);

        for lang in &config.languages {
            for k in 0..config.layers {
                let fan_in = if k == 0 { 3 * d } else { d };
                init_param(
                    &mut params,
                    run_seed,
                    &format!("col.{lang}.{k}.w"),
                    vec![fan_in, d],
                    xavier(fan_in, d),
                );
                init_param(&mut params, run_seed, &format!("col.{lang}.{k}.b"), vec![d], 0.0);
            }
        }
        for k in 0..config.layers {
            let name = format!("alpha.{k}");
            let mut values = vec![0.0; l * l];
            let mut rng = crate::seeded_rng(&["param", &run_seed.to_string(), &name]);
            for i in 0..l {
                for j in 0..l {
                    let noise: f64 = rng.gen_range(-0.05..0.05);
                    values[i * l + j] = if i == j { 1.0 + noise } else { noise };
                }
            }
            params.register(&name, Tensor::new(vec![l, l], values)?);
        }
        init_param(
            &mut params,
            run_seed,
            "task.w",
            vec![d, config.task.labels()],
            xavier(d, config.task.labels()),
        );
        init_param(&mut params, run_seed, "task.b", vec![config.task.labels()], 0.0);

        let heads = if features.is_empty() {
            None
        } else {
            Some(HeadBank::new(&mut params, features, d, run_seed)?)
        };

        Ok(Model {
            config,
            params,
            heads,
            run_seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn heads(&self) -> Option<&HeadBank> {
        self.heads.as_ref()
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    fn pid(&self, name: &str) -> ParamId {
        self.params
            .id(name)
            .unwrap_or_else(|| panic!("parameter {name} must exist"))
    }

    /// Encoder states and pooled representation; the α-free prefix of the
    /// network.
    fn encode(&self, tape: &mut Tape, batch: &Batch) -> Result<(ValueId, ValueId)> {
        batch.validate(&self.config)?;
        let tok_table = tape.param(self.pid("embed.token"), &self.params);
        let lang_table = tape.param(self.pid("embed.lang"), &self.params);
        let tok = tape.embedding(tok_table, &batch.tokens)?;
        let lang_ids = vec![batch.language_index; batch.tokens.len()];
        let lang = tape.embedding(lang_table, &lang_ids)?;
        let x = tape.concat(&[tok, lang], 1)?;
        let w = tape.param(self.pid("enc.w"), &self.params);
        let b = tape.param(self.pid("enc.b"), &self.params);
        let affine = tape.matmul(x, w)?;
        let affine = tape.add_bias(affine, b)?;
        let enc = tape.tanh(affine);
        let pooled = tape.mean_pool_segments(enc, &batch.segments)?;
        Ok((enc, pooled))
    }

    /// Full forward pass. Every language's column runs on the batch so the
    /// sharing matrices always mix live activations; the task head reads
    /// the batch language's stream.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<ForwardPass> {
        let (enc, pooled) = self.encode(tape, batch)?;
        // Neighbor window: previous state ⊕ own state ⊕ next state.
        let prev = tape.shift_rows_segments(enc, 1, &batch.segments)?;
        let next = tape.shift_rows_segments(enc, -1, &batch.segments)?;
        let window = tape.concat(&[prev, enc, next], 1)?;

        let mut streams = vec![window; self.config.language_count()];
        for k in 0..self.config.layers {
            for (i, lang) in self.config.languages.iter().enumerate() {
                let w = tape.param(self.pid(&format!("col.{lang}.{k}.w")), &self.params);
                let b = tape.param(self.pid(&format!("col.{lang}.{k}.b")), &self.params);
                let affine = tape.matmul(streams[i], w)?;
                let affine = tape.add_bias(affine, b)?;
                streams[i] = tape.tanh(affine);
            }
            let alpha = tape.param(self.pid(&format!("alpha.{k}")), &self.params);
            streams = alpha_mix(tape, alpha, &streams)?;
        }

        let own = streams[batch.language_index];
        let head_in = match self.config.task {
            TaskKind::TokenTagging { .. } => own,
            TaskKind::SentenceClassification { .. } => {
                tape.mean_pool_segments(own, &batch.segments)?
            }
        };
        let w = tape.param(self.pid("task.w"), &self.params);
        let b = tape.param(self.pid("task.b"), &self.params);
        let logits = tape.matmul(head_in, w)?;
        let logits = tape.add_bias(logits, b)?;

        Ok(ForwardPass {
            encoder: enc,
            pooled,
            streams,
            logits,
        })
    }

    /// The pre-sharing pooled state on its own; gradients from losses built
    /// on it reach the encoder and embeddings but no sharing matrix.
    pub fn pooled_representation(&self, tape: &mut Tape, batch: &Batch) -> Result<ValueId> {
        Ok(self.encode(tape, batch)?.1)
    }

    pub fn alpha_param_ids(&self) -> Vec<ParamId> {
        (0..self.config.layers)
            .map(|k| self.pid(&format!("alpha.{k}")))
            .collect()
    }

    /// Read-only copy of the sharing matrices, one per layer.
    pub fn alpha_snapshot(&self) -> Vec<SquareMatrix> {
        (0..self.config.layers)
            .map(|k| {
                let t = self.params.value(self.pid(&format!("alpha.{k}")));
                SquareMatrix::new(self.config.languages.clone(), t.values().to_vec())
                    .expect("alpha matrices are square by construction")
            })
            .collect()
    }

    /// Language-identity embedding rows in config order.
    pub fn language_embeddings(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let t = self.params.value(self.pid("embed.lang"));
        let d = self.config.lang_embed;
        let rows = (0..self.config.language_count())
            .map(|i| t.values()[i * d..(i + 1) * d].to_vec())
            .collect();
        (self.config.languages.clone(), rows)
    }

    // ── Checkpoints ─────────────────────────────────────────────────────

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut tensors = BTreeMap::new();
        for (_, param) in self.params.iter() {
            tensors.insert(
                param.name().to_string(),
                CheckpointTensor {
                    shape: param.value().shape().to_vec(),
                    values: param.value().values().to_vec(),
                },
            );
        }
        let mut file = CheckpointFile {
            schema_version: CHECKPOINT_VERSION,
            run_seed: self.run_seed,
            config: self.config.clone(),
            features: self
                .heads
                .as_ref()
                .map(|h| h.features().to_vec())
                .unwrap_or_default(),
            params: tensors,
            checksum: String::new(),
        };
        file.checksum = file.body_checksum()?;
        let json = serde_json::to_string_pretty(&file)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Rebuild a model from a checkpoint; forward outputs are bitwise
    /// identical to the saved model's.
    pub fn load_checkpoint(path: &Path) -> Result<Model> {
        let json = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&json)?;
        if file.schema_version != CHECKPOINT_VERSION {
            return Err(ModelError::UnsupportedVersion {
                expected: CHECKPOINT_VERSION,
                got: file.schema_version,
            });
        }
        let expected = file.body_checksum()?;
        if expected != file.checksum {
            return Err(ModelError::ChecksumMismatch {
                expected,
                got: file.checksum,
            });
        }
        let mut model = Model::new(file.config, &file.features, file.run_seed)?;
        let names: Vec<String> = model
            .params
            .iter()
            .map(|(_, p)| p.name().to_string())
            .collect();
        if names.len() != file.params.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} parameters, checkpoint has {}",
                names.len(),
                file.params.len()
            )));
        }
        for name in names {
            let stored = file
                .params
                .get(&name)
                .ok_or_else(|| ModelError::ParamMismatch(format!("missing parameter {name}")))?;
            let id = model.params.id(&name).expect("just listed");
            if model.params.value(id).shape() != stored.shape.as_slice() {
                return Err(ModelError::ParamMismatch(format!(
                    "parameter {name} has shape {:?}, checkpoint has {:?}",
                    model.params.value(id).shape(),
                    stored.shape
                )));
            }
            model.params.set_value(id, &stored.values)?;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    run_seed: u64,
    config: ModelConfig,
    features: Vec<TypologyFeature>,
    params: BTreeMap<String, CheckpointTensor>,
    checksum: String,
}

impl CheckpointFile {
    fn body_checksum(&self) -> Result<String> {
        let body = CheckpointFile {
            schema_version: self.schema_version,
            run_seed: self.run_seed,
            config: self.config.clone(),
            features: self.features.clone(),
            params: self
                .params
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        CheckpointTensor {
                            shape: v.shape.clone(),
                            values: v.values.clone(),
                        },
                    )
                })
                .collect(),
            checksum: String::new(),
        };
        Ok(crate::sha256_hex(serde_json::to_string(&body)?.as_bytes()))
    }
}

// ── Sharing ─────────────────────────────────────────────────────────────

/// Mix per-language activations: output stream i = Σ_j α[i][j] · stream j.
/// Differentiable through the matrix and every stream.
pub fn alpha_mix(
    tape: &mut Tape,
    alpha: ValueId,
    streams: &[ValueId],
) -> crate::autodiff::Result<Vec<ValueId>> {
    let shape = tape.value(alpha).shape().to_vec();
    if shape != vec![streams.len(), streams.len()] {
        return Err(AutodiffError::ShapeMismatch {
            op: "alpha_mix",
            left: shape,
            right: vec![streams.len(), streams.len()],
        });
    }
    let mut out = Vec::with_capacity(streams.len());
    for i in 0..streams.len() {
        let mut terms = Vec::with_capacity(streams.len());
        for (j, &s) in streams.iter().enumerate() {
            terms.push(tape.scale_by_entry(alpha, i, j, s)?);
        }
        out.push(tape.add_n(&terms)?);
    }
    Ok(out)
}

/// Reduce per-layer sharing matrices to one symmetric score per language
/// pair: the mean over layers of (|α_ij| + |α_ji|)/2. Diagonal scores are
/// zero; a language's self-weight is not sharing.
pub fn symmetrized_alpha(snapshot: &[SquareMatrix]) -> Result<SquareMatrix> {
    let first = snapshot.first().ok_or(ModelError::EmptySnapshot)?;
    let l = first.len();
    if snapshot.iter().any(|m| m.languages() != first.languages()) {
        return Err(ModelError::SnapshotLayerMismatch);
    }
    let mut values = vec![0.0; l * l];
    for m in snapshot {
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    values[i * l + j] += (m.at(i, j).abs() + m.at(j, i).abs()) / 2.0;
                }
            }
        }
    }
    for v in &mut values {
        *v /= snapshot.len() as f64;
    }
    Ok(SquareMatrix::new(first.languages().to_vec(), values)
        .expect("dimensions preserved"))
}

/// Cosine similarity over the model's learned language-identity embeddings.
pub fn embedding_similarity(model: &Model) -> crate::stats::Result<crate::stats::SimilarityMatrix> {
    let (languages, rows) = model.language_embeddings();
    crate::stats::similarity_from_embeddings(&languages, &rows)
}

/// One optimizer step over all parameters from a scalar loss already on
/// the tape.
pub fn descend(
    tape: &Tape,
    loss: ValueId,
    params: &mut ParamSet,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let t = tape.value(loss);
    if !t.is_scalar() {
        return Err(AutodiffError::NonScalarLoss(t.shape().to_vec()).into());
    }
    let loss_value = t.scalar_value();
    tape.backward_into(loss, params)?;
    optimizer.step(params)?;
    Ok(loss_value)
}
