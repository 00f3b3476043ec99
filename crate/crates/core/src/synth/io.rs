//! Corpus and suite file formats.
//!
//! A corpus file holds one sentence per line, each a tab-separated list of
//! `token␟TAG` units (U+241F separator). A suite directory holds one
//! subdirectory per language with train/dev/test files plus a manifest that
//! pins grammars, seed, and per-file checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    generate_language, CorpusSpec, Result, Suite, SyntheticGrammar, SynthError, Tag,
    TaggedCorpus, TaggedSentence,
};
use crate::sha256_hex;

const UNIT_SEPARATOR: char = '\u{241F}';
const MANIFEST_VERSION: u32 = 1;

pub fn corpus_to_string(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let line: Vec<String> = s
            .tokens
            .iter()
            .zip(&s.tags)
            .map(|(tok, tag)| format!("{tok}{UNIT_SEPARATOR}{}", tag.name()))
            .collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, sentences: &[TaggedSentence]) -> Result<()> {
    fs::write(path, corpus_to_string(sentences))?;
    Ok(())
}

pub fn read_corpus(path: &Path, language: &str) -> Result<Vec<TaggedSentence>> {
    let text = fs::read_to_string(path)?;
    let mut sentences = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for unit in line.split('\t') {
            let Some((tok, tagname)) = unit.split_once(UNIT_SEPARATOR) else {
                return Err(SynthError::BadCorpusLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: format!("unit {unit:?} has no separator"),
                });
            };
            let Some(tag) = Tag::from_name(tagname) else {
                return Err(SynthError::BadCorpusLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: format!("unknown tag {tagname:?}"),
                });
            };
            tokens.push(tok.to_string());
            tags.push(tag);
        }
        sentences.push(TaggedSentence {
            tokens,
            tags,
            language: language.to_string(),
        });
    }
    Ok(sentences)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub spec: CorpusSpec,
    pub grammars: Vec<SyntheticGrammar>,
    /// Relative file path → sha256 of the file bytes.
    pub files: BTreeMap<String, String>,
}

pub fn save_suite(dir: &Path, suite: &Suite) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for (lang, corpus) in &suite.corpora {
        let lang_dir = dir.join(lang);
        fs::create_dir_all(&lang_dir)?;
        for (split, sentences) in [
            ("train", &corpus.train),
            ("dev", &corpus.dev),
            ("test", &corpus.test),
        ] {
            let rel = format!("{lang}/{split}.txt");
            let body = corpus_to_string(sentences);
            fs::write(dir.join(&rel), &body)?;
            files.insert(rel, sha256_hex(body.as_bytes()));
        }
    }
    let manifest = SuiteManifest {
        schema_version: MANIFEST_VERSION,
        seed: suite.seed,
        spec: suite.spec.clone(),
        grammars: suite.grammars.clone(),
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_suite(dir: &Path) -> Result<Suite> {
    let manifest: SuiteManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema_version != MANIFEST_VERSION {
        return Err(SynthError::BadManifest(format!(
            "unsupported schema_version {} (expected {MANIFEST_VERSION})",
            manifest.schema_version
        )));
    }
    let mut corpora = BTreeMap::new();
    for g in &manifest.grammars {
        let lang = &g.language;
        let mut splits = Vec::new();
        for split in ["train", "dev", "test"] {
            let rel = format!("{lang}/{split}.txt");
            let path = dir.join(&rel);
            let bytes = fs::read(&path)?;
            match manifest.files.get(&rel) {
                Some(expect) if *expect == sha256_hex(&bytes) => {}
                _ => return Err(SynthError::ChecksumMismatch(rel)),
            }
            splits.push(read_corpus(&path, lang)?);
        }
        let test = splits.pop().expect("three splits");
        let dev = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        corpora.insert(
            lang.clone(),
            TaggedCorpus {
                language: lang.clone(),
                train,
                dev,
                test,
            },
        );
    }
    Ok(Suite {
        seed: manifest.seed,
        spec: manifest.spec,
        grammars: manifest.grammars,
        corpora,
    })
}

/// Regenerate a suite from its manifest parameters alone and confirm it
/// reproduces the pinned checksums.
pub fn verify_manifest(manifest: &SuiteManifest) -> Result<()> {
    for g in &manifest.grammars {
        let corpus = generate_language(g, &manifest.spec, manifest.seed)?;
        for (split, sentences) in [
            ("train", &corpus.train),
            ("dev", &corpus.dev),
            ("test", &corpus.test),
        ] {
            let rel = format!("{}/{split}.txt", g.language);
            let body = corpus_to_string(sentences);
            match manifest.files.get(&rel) {
                Some(expect) if *expect == sha256_hex(body.as_bytes()) => {}
                _ => return Err(SynthError::ChecksumMismatch(rel)),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_suite;

    #[test]
    fn corpus_round_trips_through_file_format() {
        let spec = CorpusSpec {
            sentences_per_language: 30,
            ..CorpusSpec::default()
        };
        let suite = generate_suite(4, 2, &spec).unwrap();
        let corpus = &suite.corpora["l1"];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.txt");
        write_corpus(&path, &corpus.train).unwrap();
        let back = read_corpus(&path, "l1").unwrap();
        assert_eq!(back, corpus.train);
    }

    #[test]
    fn suite_round_trips_with_checksums() {
        let spec = CorpusSpec {
            sentences_per_language: 20,
            ..CorpusSpec::default()
        };
        let suite = generate_suite(4, 8, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_suite(dir.path(), &suite).unwrap();
        let back = load_suite(dir.path()).unwrap();
        assert_eq!(back, suite);
    }

    #[test]
    fn tampered_corpus_is_rejected() {
        let spec = CorpusSpec {
            sentences_per_language: 20,
            ..CorpusSpec::default()
        };
        let suite = generate_suite(4, 8, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_suite(dir.path(), &suite).unwrap();
        let victim = dir.path().join("l0/train.txt");
        let mut text = std::fs::read_to_string(&victim).unwrap();
        text.push('\n');
        std::fs::write(&victim, text).unwrap();
        assert!(matches!(
            load_suite(dir.path()),
            Err(SynthError::ChecksumMismatch(_))
        ));
    }

    #[test]
    fn malformed_line_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "token-without-separator\n").unwrap();
        let err = read_corpus(&path, "x").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
