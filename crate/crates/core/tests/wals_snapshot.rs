//! Contract tests for the bundled typology snapshot: pinned checksum,
//! coverage filtering over the reference language set, and re-export
//! idempotence.

use typolab::typology::FeatureArea;
use typolab::wals::{
    bundled_snapshot_path, parse_pinned_snapshot, records_from_selection, reference_languages,
    select_features, WalsError,
};

#[test]
fn bundled_snapshot_matches_pinned_checksum_and_parses() {
    let records = parse_pinned_snapshot(&bundled_snapshot_path()).unwrap();
    assert!(records.len() > 2000, "suspiciously small snapshot");
}

#[test]
fn tampered_snapshot_is_rejected() {
    let mut bytes = std::fs::read(bundled_snapshot_path()).unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 1;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tampered.csv");
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        parse_pinned_snapshot(&path),
        Err(WalsError::ChecksumMismatch { .. })
    ));
}

#[test]
fn reference_selection_counts_per_area() {
    let records = parse_pinned_snapshot(&bundled_snapshot_path()).unwrap();
    let languages = reference_languages();
    let expected = [
        (FeatureArea::WordOrder, 33),
        (FeatureArea::Morphology, 8),
        (FeatureArea::Phonology, 15),
    ];
    for (area, n) in expected {
        let (features, profiles) = select_features(&records, &languages, area).unwrap();
        assert_eq!(features.len(), n, "{area}");
        for f in &features {
            f.validate().unwrap();
            for lang in &languages {
                assert!(
                    profiles[lang].values.contains_key(&f.id),
                    "{lang} missing {}",
                    f.id
                );
            }
        }
    }
}

#[test]
fn partially_annotated_features_are_filtered_out() {
    let records = parse_pinned_snapshot(&bundled_snapshot_path()).unwrap();
    let languages = reference_languages();
    let absent = [
        (FeatureArea::WordOrder, "81B"),
        (FeatureArea::WordOrder, "90B"),
        (FeatureArea::Morphology, "28A"),
        (FeatureArea::Morphology, "29A"),
        (FeatureArea::Phonology, "10B"),
        (FeatureArea::Phonology, "17A"),
    ];
    for (area, id) in absent {
        let (features, _) = select_features(&records, &languages, area).unwrap();
        assert!(
            features.iter().all(|f| f.id != id),
            "{id} should lack full coverage"
        );
        // The snapshot does carry the feature, just not for every language.
        assert!(records.iter().any(|r| r.feature_id == id));
    }
}

#[test]
fn values_unused_by_the_reference_set_are_dropped() {
    let records = parse_pinned_snapshot(&bundled_snapshot_path()).unwrap();
    // The full snapshot assigns OVS for a language outside the reference
    // set, so the filtered value list must not carry it.
    assert!(records
        .iter()
        .any(|r| r.feature_id == "81A" && r.value_name == "OVS"));
    let (features, _) =
        select_features(&records, &reference_languages(), FeatureArea::WordOrder).unwrap();
    let order = features.iter().find(|f| f.id == "81A").unwrap();
    assert_eq!(
        order.values,
        vec!["SOV".to_string(), "SVO".to_string(), "VSO".to_string()]
    );
}

#[test]
fn selection_on_the_bundled_snapshot_is_idempotent() {
    let records = parse_pinned_snapshot(&bundled_snapshot_path()).unwrap();
    let languages = reference_languages();
    for area in [
        FeatureArea::WordOrder,
        FeatureArea::Morphology,
        FeatureArea::Phonology,
    ] {
        let first = select_features(&records, &languages, area).unwrap();
        let reexported = records_from_selection(&first.0, &first.1);
        let second = select_features(&reexported, &languages, area).unwrap();
        assert_eq!(first, second, "{area}");
    }
}
