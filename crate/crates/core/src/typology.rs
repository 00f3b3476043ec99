//! Typological features, language profiles, and the classifier heads that
//! expose a model to those features or adversarially blind it to them.
//!
//! Heads are one affine layer per feature over the pooled sentence
//! representation. Under blinding, the pooled input passes through gradient
//! reversal first, so the heads themselves keep learning to predict while
//! everything below them is pushed to scrub the feature.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamId, ParamSet, Tape, ValueId};

#[derive(Debug, Error)]
pub enum TypologyError {
    #[error("no head registered for feature {0:?}")]
    UnknownFeature(String),
    #[error("language {language:?} has no value for feature {feature:?}")]
    MissingAssignment { language: String, feature: String },
    #[error("feature {feature:?}: value index {index} out of range ({len} values)")]
    ValueOutOfRange {
        feature: String,
        index: usize,
        len: usize,
    },
    #[error("invalid feature {0:?}: {1}")]
    BadFeature(String, String),
    #[error("typology loss requested with heads switched off")]
    ModeOff,
    #[error("blind mode requires lambda > 0, got {0}")]
    NonPositiveLambda(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TypologyError>;

// ── Features and profiles ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureArea {
    WordOrder,
    Morphology,
    Phonology,
    Genealogy,
}

impl FeatureArea {
    pub const ALL: [FeatureArea; 4] = [
        FeatureArea::WordOrder,
        FeatureArea::Morphology,
        FeatureArea::Phonology,
        FeatureArea::Genealogy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureArea::WordOrder => "word_order",
            FeatureArea::Morphology => "morphology",
            FeatureArea::Phonology => "phonology",
            FeatureArea::Genealogy => "genealogy",
        }
    }
}

impl fmt::Display for FeatureArea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureArea {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FeatureArea::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown feature area {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypologyFeature {
    pub id: String,
    pub name: String,
    pub area: FeatureArea,
    /// Ordered value names; profile entries index into this list.
    pub values: Vec<String>,
}

impl TypologyFeature {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(TypologyError::BadFeature(
                self.id.clone(),
                "empty value set".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.values {
            if !seen.insert(v) {
                return Err(TypologyError::BadFeature(
                    self.id.clone(),
                    format!("duplicate value {v:?}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub language: String,
    /// Feature id → index into that feature's value list.
    pub values: BTreeMap<String, usize>,
}

impl LanguageProfile {
    pub fn value_for(&self, feature: &TypologyFeature) -> Result<usize> {
        let index =
            *self
                .values
                .get(&feature.id)
                .ok_or_else(|| TypologyError::MissingAssignment {
                    language: self.language.clone(),
                    feature: feature.id.clone(),
                })?;
        if index >= feature.values.len() {
            return Err(TypologyError::ValueOutOfRange {
                feature: feature.id.clone(),
                index,
                len: feature.values.len(),
            });
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum HeadMode {
    Off,
    Expose,
    Blind { lambda: f64 },
}

impl HeadMode {
    pub fn validate(self) -> Result<()> {
        if let HeadMode::Blind { lambda } = self {
            if !(lambda > 0.0) {
                return Err(TypologyError::NonPositiveLambda(lambda));
            }
        }
        Ok(())
    }

    pub fn is_off(self) -> bool {
        matches!(self, HeadMode::Off)
    }
}

// ── Heads ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct Head {
    weight: ParamId,
    bias: ParamId,
}

/// One affine classifier per feature, all reading the same pooled input.
#[derive(Debug, Clone)]
pub struct HeadBank {
    features: Vec<TypologyFeature>,
    heads: BTreeMap<String, Head>,
}

impl HeadBank {
    /// Register head parameters for `features` into `params`. Weights are
    /// seeded per parameter name, so the rest of the model initializes
    /// identically whether or not any heads exist.
    pub fn new(
        params: &mut ParamSet,
        features: &[TypologyFeature],
        input_dim: usize,
        run_seed: u64,
    ) -> Result<HeadBank> {
        let mut heads = BTreeMap::new();
        for f in features {
            f.validate()?;
            let v = f.values.len();
            let bound = (6.0 / (input_dim + v) as f64).sqrt();
            let w = crate::model::init_param(
                params,
                run_seed,
                &format!("head.{}.w", f.id),
                vec![input_dim, v],
                bound,
            );
            let b = crate::model::init_param(
                params,
                run_seed,
                &format!("head.{}.b", f.id),
                vec![v],
                0.0,
            );
            heads.insert(f.id.clone(), Head { weight: w, bias: b });
        }
        Ok(HeadBank {
            features: features.to_vec(),
            heads,
        })
    }

    pub fn features(&self) -> &[TypologyFeature] {
        &self.features
    }

    /// Logits for one feature over pooled rows: `pooled · W + b`.
    pub fn head_forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        pooled: ValueId,
        feature_id: &str,
    ) -> Result<ValueId> {
        let head = self
            .heads
            .get(feature_id)
            .ok_or_else(|| TypologyError::UnknownFeature(feature_id.to_string()))?;
        let w = tape.param(head.weight, params);
        let b = tape.param(head.bias, params);
        let wx = tape.matmul(pooled, w)?;
        Ok(tape.add_bias(wx, b)?)
    }

    /// Summed cross-entropy over all features for one monolingual batch of
    /// pooled rows. Under blind mode the pooled input is gradient-reversed
    /// before any head sees it.
    pub fn typology_loss(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        pooled: ValueId,
        profile: &LanguageProfile,
        mode: HeadMode,
    ) -> Result<ValueId> {
        mode.validate()?;
        let gated = match mode {
            HeadMode::Off => return Err(TypologyError::ModeOff),
            HeadMode::Expose => pooled,
            HeadMode::Blind { lambda } => tape.grad_reverse(pooled, lambda)?,
        };
        let rows = tape.value(pooled).rows();
        let mut losses = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let target = profile.value_for(f)?;
            let logits = self.head_forward(tape, params, gated, &f.id)?;
            let targets = vec![target; rows];
            losses.push(tape.cross_entropy(logits, &targets)?);
        }
        Ok(tape.add_n(&losses)?)
    }
}

/// `task + w_typ · typ`.
pub fn combined_loss(
    tape: &mut Tape,
    task_loss: ValueId,
    typ_loss: ValueId,
    w_typ: f64,
) -> Result<ValueId> {
    let scaled = tape.scale(typ_loss, w_typ);
    Ok(tape.add(task_loss, scaled)?)
}

// ── Feature-set manifest ────────────────────────────────────────────────

pub const MANIFEST_VERSION: u32 = 1;

/// The features and per-language assignments actually used in a run,
/// emitted alongside checkpoints for auditability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub schema_version: u32,
    pub features: Vec<TypologyFeature>,
    pub profiles: BTreeMap<String, LanguageProfile>,
}

impl FeatureManifest {
    pub fn new(
        features: Vec<TypologyFeature>,
        profiles: BTreeMap<String, LanguageProfile>,
    ) -> FeatureManifest {
        FeatureManifest {
            schema_version: MANIFEST_VERSION,
            features,
            profiles,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureManifest> {
        let manifest: FeatureManifest =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if manifest.schema_version != MANIFEST_VERSION {
            return Err(TypologyError::BadFeature(
                "manifest".into(),
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn feature(id: &str, values: &[&str]) -> TypologyFeature {
        TypologyFeature {
            id: id.into(),
            name: format!("feature {id}"),
            area: FeatureArea::WordOrder,
            values: values.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn profile(lang: &str, pairs: &[(&str, usize)]) -> LanguageProfile {
        LanguageProfile {
            language: lang.into(),
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn bank(features: &[TypologyFeature], d: usize) -> (ParamSet, HeadBank) {
        let mut params = ParamSet::new();
        let bank = HeadBank::new(&mut params, features, d, 7).unwrap();
        (params, bank)
    }

    #[test]
    fn head_logits_have_contract_shape() {
        let f = feature("81A", &["SOV", "SVO", "VSO"]);
        let (params, bank) = bank(&[f], 4);
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![5, 4]));
        let logits = bank.head_forward(&mut tape, &params, pooled, "81A").unwrap();
        assert_eq!(tape.value(logits).shape(), &[5, 3]);
    }

    #[test]
    fn zeroed_head_on_zero_input_gives_uniform_logits() {
        let f = feature("81A", &["SOV", "SVO"]);
        let (mut params, bank) = bank(&[f], 3);
        for name in ["head.81A.w", "head.81A.b"] {
            let id = params.id(name).unwrap();
            let n = params.value(id).len();
            params.set_value(id, &vec![0.0; n]).unwrap();
        }
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![2, 3]));
        let logits = bank.head_forward(&mut tape, &params, pooled, "81A").unwrap();
        assert!(tape.value(logits).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_forward_matches_affine_oracle() {
        let f = feature("26A", &["prefixing", "suffixing"]);
        let (params, bank) = bank(&[f], 3);
        let pooled_values = vec![0.3, -0.2, 0.5];
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::matrix(1, 3, pooled_values.clone()).unwrap());
        let logits = bank.head_forward(&mut tape, &params, pooled, "26A").unwrap();
        let w = params.value(params.id("head.26A.w").unwrap()).values();
        let b = params.value(params.id("head.26A.b").unwrap()).values();
        for j in 0..2 {
            let mut expect = b[j];
            for (i, x) in pooled_values.iter().enumerate() {
                expect += x * w[i * 2 + j];
            }
            assert!((tape.value(logits).values()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_feature_is_rejected() {
        let f = feature("81A", &["SOV", "SVO"]);
        let (params, bank) = bank(&[f], 3);
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![1, 3]));
        assert!(matches!(
            bank.head_forward(&mut tape, &params, pooled, "85A"),
            Err(TypologyError::UnknownFeature(_))
        ));
    }

    #[test]
    fn expose_loss_with_uniform_heads_sums_ln_value_counts() {
        let fs = [feature("81A", &["SOV", "SVO", "VSO"]), feature("26A", &["p", "s"])];
        let (mut params, bank) = bank(&fs, 4);
        for f in &fs {
            for suffix in ["w", "b"] {
                let id = params.id(&format!("head.{}.{suffix}", f.id)).unwrap();
                let n = params.value(id).len();
                params.set_value(id, &vec![0.0; n]).unwrap();
            }
        }
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![3, 4]));
        let profile = profile("l0", &[("81A", 0), ("26A", 1)]);
        let loss = bank
            .typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Expose)
            .unwrap();
        let expect = 3.0f64.ln() + 2.0f64.ln();
        assert!((tape.value(loss).scalar_value() - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_is_additive_over_features() {
        let fa = feature("81A", &["SOV", "SVO"]);
        let fb = feature("26A", &["p", "s"]);
        let mut params = ParamSet::new();
        let both = HeadBank::new(&mut params, &[fa.clone(), fb.clone()], 3, 9).unwrap();
        let only_a = HeadBank {
            features: vec![fa],
            heads: both.heads.clone(),
        };
        let only_b = HeadBank {
            features: vec![fb],
            heads: both.heads.clone(),
        };
        let profile = profile("l0", &[("81A", 1), ("26A", 0)]);
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::matrix(2, 3, vec![0.1, -0.4, 0.2, 0.0, 0.3, -0.1]).unwrap());
        let l_both = both
            .typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Expose)
            .unwrap();
        let l_a = only_a
            .typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Expose)
            .unwrap();
        let l_b = only_b
            .typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Expose)
            .unwrap();
        let sum = tape.value(l_a).scalar_value() + tape.value(l_b).scalar_value();
        assert!((tape.value(l_both).scalar_value() - sum).abs() < 1e-12);
    }

    #[test]
    fn blind_negates_encoder_side_gradients_and_keeps_head_gradients() {
        let f = feature("81A", &["SOV", "SVO"]);
        let (params, bank) = bank(&[f], 3);
        let profile = profile("l0", &[("81A", 0)]);
        let pooled_values = vec![0.2, -0.3, 0.4];

        let run = |mode: HeadMode| {
            let mut tape = Tape::new();
            let pooled = tape.leaf(
                Tensor::matrix(1, 3, pooled_values.clone())
                    .unwrap()
                    .with_grad(),
            );
            let loss = bank
                .typology_loss(&mut tape, &params, pooled, &profile, mode)
                .unwrap();
            let grads = tape.backward(loss).unwrap();
            let pooled_grad = grads.wrt(pooled).unwrap().values().to_vec();
            let w_node = tape
                .param(params.id("head.81A.w").unwrap(), &params);
            let head_grad = grads.wrt(w_node).unwrap().values().to_vec();
            (pooled_grad, head_grad)
        };

        let (expose_pooled, expose_head) = run(HeadMode::Expose);
        let (blind_pooled, blind_head) = run(HeadMode::Blind { lambda: 1.0 });
        for (e, b) in expose_pooled.iter().zip(&blind_pooled) {
            assert_eq!(*b, -*e);
        }
        // Heads sit above the reversal, so their gradients are unchanged.
        for (e, b) in expose_head.iter().zip(&blind_head) {
            assert_eq!(*b, *e);
        }
    }

    #[test]
    fn off_mode_and_nonpositive_lambda_are_rejected() {
        let f = feature("81A", &["SOV", "SVO"]);
        let (params, bank) = bank(&[f], 2);
        let profile = profile("l0", &[("81A", 0)]);
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![1, 2]).with_grad());
        assert!(matches!(
            bank.typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Blind { lambda: 0.0 }),
            Err(TypologyError::NonPositiveLambda(_))
        ));
        assert!(matches!(
            bank.typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Off),
            Err(TypologyError::ModeOff)
        ));
    }

    #[test]
    fn missing_profile_entry_names_language_and_feature() {
        let f = feature("81A", &["SOV", "SVO"]);
        let (params, bank) = bank(&[f], 2);
        let profile = profile("l3", &[]);
        let mut tape = Tape::new();
        let pooled = tape.leaf(Tensor::zeros(vec![1, 2]));
        let err = bank
            .typology_loss(&mut tape, &params, pooled, &profile, HeadMode::Expose)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("l3") && msg.contains("81A"));
    }

    #[test]
    fn combined_loss_arithmetic() {
        let mut tape = Tape::new();
        let task = tape.leaf(Tensor::scalar(1.0));
        let typ = tape.leaf(Tensor::scalar(2.0));
        let both = combined_loss(&mut tape, task, typ, 0.5).unwrap();
        assert_eq!(tape.value(both).scalar_value(), 2.0);
        let only_task = combined_loss(&mut tape, task, typ, 0.0).unwrap();
        assert_eq!(tape.value(only_task).scalar_value(), 1.0);
    }

    #[test]
    fn manifest_round_trips() {
        let manifest = FeatureManifest::new(
            vec![feature("81A", &["SOV", "SVO"])],
            [("l0".to_string(), profile("l0", &[("81A", 1)]))]
                .into_iter()
                .collect(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.json");
        manifest.save(&path).unwrap();
        assert_eq!(FeatureManifest::load(&path).unwrap(), manifest);
    }
}
