//! WALS-style typology data: CSV parsing, coverage filtering, genealogy,
//! and profile construction for synthetic languages.
//!
//! The expected CSV shape is one row per (language, feature) assignment with
//! columns `language, feature_id, feature_name, value_index, value_name,
//! area`. The repo bundles a pinned snapshot under `data/wals_snapshot.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::SyntheticGrammar;
use crate::typology::{FeatureArea, LanguageProfile, TypologyFeature};

#[derive(Debug, Error)]
pub enum WalsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed rows: {0}")]
    MalformedRows(String),
    #[error("duplicate (language, feature) pair ({language}, {feature})")]
    Duplicate { language: String, feature: String },
    #[error("language set is empty")]
    NoLanguages,
    #[error("no {area} features cover the requested language set")]
    EmptySelection { area: FeatureArea },
    #[error("no family entry for language {0:?}")]
    MissingFamily(String),
    #[error("snapshot checksum mismatch: expected {expected}, got {got}")]
    ChecksumMismatch { expected: String, got: String },
}

pub type Result<T> = std::result::Result<T, WalsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalsRecord {
    pub language: String,
    pub feature_id: String,
    pub feature_name: String,
    pub value_index: usize,
    pub value_name: String,
    pub area: FeatureArea,
}

// ── Parsing and serialization ───────────────────────────────────────────

pub fn parse_wals_reader<R: std::io::Read>(reader: R) -> Result<Vec<WalsRecord>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut malformed: Vec<String> = Vec::new();
    for row in csv_reader.deserialize::<WalsRecord>() {
        match row {
            Ok(record) => {
                let key = (record.language.clone(), record.feature_id.clone());
                if !seen.insert(key) {
                    return Err(WalsError::Duplicate {
                        language: record.language,
                        feature: record.feature_id,
                    });
                }
                records.push(record);
            }
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line().to_string())
                    .unwrap_or_else(|| "?".into());
                malformed.push(format!("line {line}: {e}"));
            }
        }
    }
    if !malformed.is_empty() {
        return Err(WalsError::MalformedRows(malformed.join("; ")));
    }
    Ok(records)
}

pub fn parse_wals_csv(path: &Path) -> Result<Vec<WalsRecord>> {
    parse_wals_reader(std::fs::File::open(path)?)
}

pub fn write_wals_csv<W: std::io::Write>(writer: W, records: &[WalsRecord]) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for r in records {
        csv_writer.serialize(r)?;
    }
    csv_writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ── Selection and filtering ─────────────────────────────────────────────

/// Sort key putting WALS-style ids in numeric-then-letter order
/// (1A < 2A < 10B < 81A < 143A).
fn feature_id_key(id: &str) -> (u64, String) {
    let digits: String = id.chars().take_while(|c| c.is_ascii_digit()).collect();
    let rest: String = id.chars().skip(digits.len()).collect();
    (digits.parse().unwrap_or(u64::MAX), rest)
}

/// Features of `area` annotated for every requested language, with value
/// sets reduced to the values those languages actually use, plus the
/// per-language profiles over the surviving features.
pub fn select_features(
    records: &[WalsRecord],
    languages: &[String],
    area: FeatureArea,
) -> Result<(Vec<TypologyFeature>, BTreeMap<String, LanguageProfile>)> {
    if languages.is_empty() {
        return Err(WalsError::NoLanguages);
    }
    let wanted: BTreeSet<&String> = languages.iter().collect();

    // feature id → (name, language → (orig value index, value name))
    let mut by_feature: BTreeMap<&String, (&String, BTreeMap<&String, (usize, &String)>)> =
        BTreeMap::new();
    for r in records {
        if r.area != area || !wanted.contains(&r.language) {
            continue;
        }
        by_feature
            .entry(&r.feature_id)
            .or_insert((&r.feature_name, BTreeMap::new()))
            .1
            .insert(&r.language, (r.value_index, &r.value_name));
    }

    let mut features = Vec::new();
    let mut profiles: BTreeMap<String, LanguageProfile> = languages
        .iter()
        .map(|l| {
            (
                l.clone(),
                LanguageProfile {
                    language: l.clone(),
                    values: BTreeMap::new(),
                },
            )
        })
        .collect();

    for (id, (name, assignments)) in &by_feature {
        if assignments.len() < wanted.len() {
            continue;
        }
        // Values used by the requested languages, in original index order.
        let mut used: Vec<(usize, String)> = assignments
            .values()
            .map(|(idx, name)| (*idx, name.to_string()))
            .collect();
        used.sort();
        used.dedup();
        let remap: BTreeMap<usize, usize> =
            used.iter().enumerate().map(|(new, (old, _))| (*old, new)).collect();
        for (lang, (old, _)) in assignments {
            profiles
                .get_mut(lang.as_str())
                .expect("profile pre-seeded")
                .values
                .insert((*id).clone(), remap[old]);
        }
        features.push(TypologyFeature {
            id: (*id).clone(),
            name: (*name).clone(),
            area,
            values: used.into_iter().map(|(_, name)| name).collect(),
        });
    }

    if features.is_empty() {
        return Err(WalsError::EmptySelection { area });
    }
    features.sort_by_key(|f| feature_id_key(&f.id));
    Ok((features, profiles))
}

/// Flatten a selection back into records, for idempotence checks and
/// re-export.
pub fn records_from_selection(
    features: &[TypologyFeature],
    profiles: &BTreeMap<String, LanguageProfile>,
) -> Vec<WalsRecord> {
    let mut records = Vec::new();
    for f in features {
        for profile in profiles.values() {
            if let Some(&idx) = profile.values.get(&f.id) {
                records.push(WalsRecord {
                    language: profile.language.clone(),
                    feature_id: f.id.clone(),
                    feature_name: f.name.clone(),
                    value_index: idx,
                    value_name: f.values[idx].clone(),
                    area: f.area,
                });
            }
        }
    }
    records
}

// ── Genealogy ───────────────────────────────────────────────────────────

/// ISO 639-1 code → language family, covering the bundled snapshot's
/// languages. Isolates appear as their own singleton families.
pub const FAMILY_BY_ISO: &[(&str, &str)] = &[
    ("af", "Indo-European"),
    ("am", "Afro-Asiatic"),
    ("ar", "Afro-Asiatic"),
    ("bg", "Indo-European"),
    ("bn", "Indo-European"),
    ("cy", "Indo-European"),
    ("de", "Indo-European"),
    ("el", "Indo-European"),
    ("en", "Indo-European"),
    ("es", "Indo-European"),
    ("et", "Uralic"),
    ("eu", "Basque"),
    ("fa", "Indo-European"),
    ("fi", "Uralic"),
    ("fr", "Indo-European"),
    ("he", "Afro-Asiatic"),
    ("hi", "Indo-European"),
    ("hu", "Uralic"),
    ("id", "Austronesian"),
    ("it", "Indo-European"),
    ("ja", "Japonic"),
    ("jv", "Austronesian"),
    ("ka", "Kartvelian"),
    ("kk", "Turkic"),
    ("ko", "Korean"),
    ("ml", "Dravidian"),
    ("mr", "Indo-European"),
    ("ms", "Austronesian"),
    ("my", "Sino-Tibetan"),
    ("nl", "Indo-European"),
    ("pt", "Indo-European"),
    ("qu", "Quechuan"),
    ("ru", "Indo-European"),
    ("sq", "Indo-European"),
    ("sv", "Indo-European"),
    ("sw", "Niger-Congo"),
    ("ta", "Dravidian"),
    ("te", "Dravidian"),
    ("th", "Tai-Kadai"),
    ("tl", "Austronesian"),
    ("tr", "Turkic"),
    ("ur", "Indo-European"),
    ("vi", "Austroasiatic"),
    ("yo", "Niger-Congo"),
    ("zh", "Sino-Tibetan"),
];

/// The 40-language reference set the bundled snapshot's selection counts
/// are quoted for: 12 multi-or-single language families plus two isolates.
pub const REFERENCE_LANGUAGES: [&str; 40] = [
    "af", "ar", "bg", "bn", "de", "el", "en", "es", "et", "eu", "fa", "fi", "fr", "he", "hi",
    "hu", "id", "it", "ja", "jv", "ka", "kk", "ko", "ml", "mr", "ms", "my", "nl", "pt", "ru",
    "sw", "ta", "te", "th", "tl", "tr", "ur", "vi", "yo", "zh",
];

pub fn reference_languages() -> Vec<String> {
    REFERENCE_LANGUAGES.iter().map(|s| s.to_string()).collect()
}

pub fn family_of(language: &str) -> Option<&'static str> {
    FAMILY_BY_ISO
        .iter()
        .find(|(iso, _)| *iso == language)
        .map(|(_, fam)| *fam)
}

/// One categorical feature whose values are the families occurring in
/// `languages`, using the built-in lookup table.
pub fn genealogy_feature(
    languages: &[String],
) -> Result<(TypologyFeature, BTreeMap<String, LanguageProfile>)> {
    if languages.is_empty() {
        return Err(WalsError::NoLanguages);
    }
    let mut families = BTreeSet::new();
    let mut assignment = BTreeMap::new();
    for lang in languages {
        let family =
            family_of(lang).ok_or_else(|| WalsError::MissingFamily(lang.clone()))?;
        families.insert(family.to_string());
        assignment.insert(lang.clone(), family.to_string());
    }
    let values: Vec<String> = families.into_iter().collect();
    let feature = TypologyFeature {
        id: "family".into(),
        name: "Language family".into(),
        area: FeatureArea::Genealogy,
        values: values.clone(),
    };
    let profiles = assignment
        .into_iter()
        .map(|(lang, fam)| {
            let idx = values.iter().position(|v| *v == fam).expect("member");
            (
                lang.clone(),
                LanguageProfile {
                    language: lang,
                    values: [("family".to_string(), idx)].into_iter().collect(),
                },
            )
        })
        .collect();
    Ok((feature, profiles))
}

// ── Synthetic profiles ──────────────────────────────────────────────────

/// Typology features and profiles for a set of synthetic grammars, in the
/// same schema the WALS path produces. Feature ids mirror their closest
/// WALS analogs; value sets contain only values some grammar uses.
pub fn synthetic_profiles(
    grammars: &[SyntheticGrammar],
) -> (Vec<TypologyFeature>, BTreeMap<String, LanguageProfile>) {
    let occurring = |extract: &dyn Fn(&SyntheticGrammar) -> String, canon: &[String]| {
        let used: BTreeSet<String> = grammars.iter().map(|g| extract(g)).collect();
        canon
            .iter()
            .filter(|v| used.contains(*v))
            .cloned()
            .collect::<Vec<_>>()
    };

    let order_canon: Vec<String> = crate::synth::WordOrder::ALL
        .iter()
        .map(|o| o.name().to_string())
        .collect();
    let families: Vec<String> = {
        let set: BTreeSet<String> = grammars.iter().map(|g| g.family.clone()).collect();
        set.into_iter().collect()
    };

    let specs: Vec<(&str, &str, FeatureArea, Vec<String>, Box<dyn Fn(&SyntheticGrammar) -> String>)> = vec![
        (
            "81A",
            "Order of Subject, Object and Verb",
            FeatureArea::WordOrder,
            occurring(&|g| g.word_order.name().to_string(), &order_canon),
            Box::new(|g| g.word_order.name().to_string()),
        ),
        (
            "85A",
            "Order of Adposition and Noun Phrase",
            FeatureArea::WordOrder,
            occurring(
                &|g| g.adposition_order.name().to_string(),
                &["pre".to_string(), "post".to_string()],
            ),
            Box::new(|g| g.adposition_order.name().to_string()),
        ),
        (
            "26A",
            "Prefixing vs. Suffixing in Inflectional Morphology",
            FeatureArea::Morphology,
            occurring(
                &|g| g.affixing.name().to_string(),
                &["prefixing".to_string(), "suffixing".to_string()],
            ),
            Box::new(|g| g.affixing.name().to_string()),
        ),
        (
            "0A",
            "Inert phonological control",
            FeatureArea::Phonology,
            occurring(
                &|g| g.inert_feature.name().to_string(),
                &["a".to_string(), "b".to_string(), "c".to_string()],
            ),
            Box::new(|g| g.inert_feature.name().to_string()),
        ),
        (
            "family",
            "Language family",
            FeatureArea::Genealogy,
            families,
            Box::new(|g| g.family.clone()),
        ),
    ];

    let features: Vec<TypologyFeature> = specs
        .iter()
        .map(|(id, name, area, values, _)| TypologyFeature {
            id: id.to_string(),
            name: name.to_string(),
            area: *area,
            values: values.clone(),
        })
        .collect();

    let profiles = grammars
        .iter()
        .map(|g| {
            let values = specs
                .iter()
                .map(|(id, _, _, values, extract)| {
                    let v = extract(g);
                    let idx = values.iter().position(|x| *x == v).expect("value occurs");
                    (id.to_string(), idx)
                })
                .collect();
            (
                g.language.clone(),
                LanguageProfile {
                    language: g.language.clone(),
                    values,
                },
            )
        })
        .collect();

    (features, profiles)
}

// ── Bundled snapshot ────────────────────────────────────────────────────

/// SHA-256 of `data/wals_snapshot.csv` as shipped.
pub const SNAPSHOT_SHA256: &str =
    "02c4f08b16022b3a3ebb2d0a28ffdd511d788e5a440652b49d489ae224c5a6df";

/// Path of the bundled snapshot relative to the workspace root. Tests use
/// [`bundled_snapshot_path`]; CLI callers pass an explicit path.
pub const SNAPSHOT_REL_PATH: &str = "data/wals_snapshot.csv";

pub fn bundled_snapshot_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(SNAPSHOT_REL_PATH)
}

/// Parse a snapshot file after confirming it matches the pinned checksum.
pub fn parse_pinned_snapshot(path: &Path) -> Result<Vec<WalsRecord>> {
    let bytes = std::fs::read(path)?;
    let got = crate::sha256_hex(&bytes);
    if got != SNAPSHOT_SHA256 {
        return Err(WalsError::ChecksumMismatch {
            expected: SNAPSHOT_SHA256.into(),
            got,
        });
    }
    parse_wals_reader(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        lang: &str,
        feature: &str,
        value_index: usize,
        value_name: &str,
        area: FeatureArea,
    ) -> WalsRecord {
        WalsRecord {
            language: lang.into(),
            feature_id: feature.into(),
            feature_name: format!("Feature {feature}"),
            value_index,
            value_name: value_name.into(),
            area,
        }
    }

    fn langs(codes: &[&str]) -> Vec<String> {
        codes.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_data_parses_to_no_records() {
        let records = parse_wals_reader(
            "language,feature_id,feature_name,value_index,value_name,area\n".as_bytes(),
        )
        .unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn small_fixture_parses_into_full_records() {
        let csv = "language,feature_id,feature_name,value_index,value_name,area\n\
                   en,81A,Order,1,SVO,word_order\n\
                   en,26A,Affixing,0,suffixing,morphology\n\
                   de,81A,Order,1,SVO,word_order\n\
                   de,26A,Affixing,0,suffixing,morphology\n";
        let records = parse_wals_reader(csv.as_bytes()).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records[0].language, "en");
        assert_eq!(records[0].feature_id, "81A");
        assert_eq!(records[0].value_name, "SVO");
        assert_eq!(records[0].area, FeatureArea::WordOrder);
    }

    #[test]
    fn malformed_row_aborts_with_line_number() {
        let csv = "language,feature_id,feature_name,value_index,value_name,area\n\
                   en,81A,Order,1,SVO,word_order\n\
                   de,81A,Order,not-a-number,SVO,word_order\n";
        let err = parse_wals_reader(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn duplicate_language_feature_pair_is_rejected() {
        let csv = "language,feature_id,feature_name,value_index,value_name,area\n\
                   en,81A,Order,1,SVO,word_order\n\
                   en,81A,Order,2,SOV,word_order\n";
        assert!(matches!(
            parse_wals_reader(csv.as_bytes()),
            Err(WalsError::Duplicate { .. })
        ));
    }

    #[test]
    fn round_trip_through_csv_preserves_records() {
        let records = vec![
            record("en", "81A", 1, "SVO", FeatureArea::WordOrder),
            record("ja", "81A", 0, "SOV", FeatureArea::WordOrder),
        ];
        let mut buf = Vec::new();
        write_wals_csv(&mut buf, &records).unwrap();
        let back = parse_wals_reader(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn feature_missing_one_language_is_excluded() {
        let records = vec![
            record("en", "81A", 1, "SVO", FeatureArea::WordOrder),
            record("de", "81A", 1, "SVO", FeatureArea::WordOrder),
            record("en", "82A", 0, "VS", FeatureArea::WordOrder),
        ];
        let (features, _) =
            select_features(&records, &langs(&["en", "de"]), FeatureArea::WordOrder).unwrap();
        assert_eq!(features.len(), 1);
        assert_eq!(features[0].id, "81A");
    }

    #[test]
    fn unused_values_are_dropped_and_indices_remapped() {
        let records = vec![
            record("en", "81A", 3, "SVO", FeatureArea::WordOrder),
            record("de", "81A", 5, "VSO", FeatureArea::WordOrder),
            record("fr", "81A", 3, "SVO", FeatureArea::WordOrder),
        ];
        let (features, profiles) =
            select_features(&records, &langs(&["en", "de", "fr"]), FeatureArea::WordOrder)
                .unwrap();
        assert_eq!(features[0].values, vec!["SVO".to_string(), "VSO".to_string()]);
        assert_eq!(profiles["en"].values["81A"], 0);
        assert_eq!(profiles["de"].values["81A"], 1);
    }

    #[test]
    fn every_selected_feature_fully_covers_the_language_set() {
        let records = vec![
            record("en", "81A", 0, "SVO", FeatureArea::WordOrder),
            record("de", "81A", 0, "SVO", FeatureArea::WordOrder),
            record("en", "85A", 0, "pre", FeatureArea::WordOrder),
            record("de", "85A", 1, "post", FeatureArea::WordOrder),
            record("en", "20A", 0, "x", FeatureArea::Morphology),
        ];
        let set = langs(&["en", "de"]);
        let (features, profiles) =
            select_features(&records, &set, FeatureArea::WordOrder).unwrap();
        for f in &features {
            for lang in &set {
                assert!(profiles[lang].values.contains_key(&f.id));
            }
            for (i, _) in f.values.iter().enumerate() {
                assert!(
                    profiles.values().any(|p| p.values.get(&f.id) == Some(&i)),
                    "zero-support value {i} in {}",
                    f.id
                );
            }
        }
    }

    #[test]
    fn selection_is_idempotent() {
        let records = vec![
            record("en", "81A", 3, "SVO", FeatureArea::WordOrder),
            record("de", "81A", 5, "VSO", FeatureArea::WordOrder),
            record("en", "85A", 2, "pre", FeatureArea::WordOrder),
            record("de", "85A", 2, "pre", FeatureArea::WordOrder),
        ];
        let set = langs(&["en", "de"]);
        let first = select_features(&records, &set, FeatureArea::WordOrder).unwrap();
        let reexported = records_from_selection(&first.0, &first.1);
        let second = select_features(&reexported, &set, FeatureArea::WordOrder).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn empty_selection_names_the_area() {
        let records = vec![record("en", "81A", 0, "SVO", FeatureArea::WordOrder)];
        let err =
            select_features(&records, &langs(&["en"]), FeatureArea::Phonology).unwrap_err();
        assert!(err.to_string().contains("phonology"));
    }

    #[test]
    fn genealogy_merges_same_family() {
        let (feature, profiles) = genealogy_feature(&langs(&["es", "fr"])).unwrap();
        assert_eq!(feature.values, vec!["Indo-European".to_string()]);
        assert_eq!(profiles["es"].values["family"], 0);
        assert_eq!(profiles["fr"].values["family"], 0);
    }

    #[test]
    fn genealogy_counts_distinct_families() {
        let (feature, _) = genealogy_feature(&langs(&["en", "ja", "fi"])).unwrap();
        assert_eq!(feature.values.len(), 3);
    }

    #[test]
    fn reference_set_has_twelve_families_plus_two_isolates() {
        let (feature, profiles) = genealogy_feature(&reference_languages()).unwrap();
        assert_eq!(feature.values.len(), 14);
        let isolates = ["Basque", "Korean"];
        for family in &isolates {
            let members = profiles
                .values()
                .filter(|p| feature.values[p.values["family"]] == *family)
                .count();
            assert_eq!(members, 1, "{family} should be a singleton");
        }
    }

    #[test]
    fn missing_family_names_the_language() {
        let err = genealogy_feature(&langs(&["xx"])).unwrap_err();
        assert!(err.to_string().contains("xx"));
    }

    #[test]
    fn synthetic_profiles_cover_every_feature() {
        let grammars = crate::synth::suite_grammars(8).unwrap();
        let (features, profiles) = synthetic_profiles(&grammars);
        assert_eq!(features.len(), 5);
        for f in &features {
            f.validate().unwrap();
            for g in &grammars {
                assert!(profiles[&g.language].values.contains_key(&f.id));
            }
        }
        let order = features.iter().find(|f| f.id == "81A").unwrap();
        let sov_grammar = grammars
            .iter()
            .find(|g| g.word_order == crate::synth::WordOrder::Sov)
            .unwrap();
        let idx = profiles[&sov_grammar.language].values["81A"];
        assert_eq!(order.values[idx], "SOV");
        let affixing = features.iter().find(|f| f.id == "26A").unwrap();
        let pre_grammar = grammars
            .iter()
            .find(|g| g.affixing == crate::synth::Affixing::Prefixing)
            .unwrap();
        let idx = profiles[&pre_grammar.language].values["26A"];
        assert_eq!(affixing.values[idx], "prefixing");
    }

    #[test]
    fn feature_ids_sort_numerically() {
        let mut ids = vec!["143A", "1A", "81A", "10B", "2A"];
        ids.sort_by_key(|id| feature_id_key(id));
        assert_eq!(ids, vec!["1A", "2A", "10B", "81A", "143A"]);
    }
}
