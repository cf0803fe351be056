//! Replays the checked-in fuzz corpora through the same entry points as the
//! fuzz targets, so regressions show up without a nightly toolchain.

use std::path::PathBuf;

use sd4x::blackbox::{parse_response, LinearBlackBox, RegimeBlackBox};
use sd4x::data::synth::SynthSpec;
use sd4x::data::{parse_dataset, Attribute, AttributeKind, Schema};
use sd4x::evaluation::{curve_csv, parse_curve_csv};
use sd4x::neighborhood::parse_cache;
use sd4x::pattern::parse_pattern;
use sd4x::cli::ExplainOutput;

const SCHEMA: &str = r#"{"attributes":[
    {"name":"x","kind":"numeric"},
    {"name":"g","kind":"ordinal","categories":["lo","mid","hi"]},
    {"name":"c","kind":"nominal","categories":["red","blue"]},
    {"name":"b","kind":"boolean"}],
  "classes":["a","b"]}"#;

/// (file name, contents) for every seed of `target`.
fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fuzz", "corpus", target]
        .iter()
        .collect();
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn dataset_seeds() {
    let schema = Schema::from_json(SCHEMA).unwrap();
    let ok: Vec<bool> = seeds("dataset")
        .iter()
        .map(|(_, b)| parse_dataset(&b[..], &schema).is_ok())
        .collect();
    assert!(ok.contains(&true) && ok.contains(&false), "{ok:?}");
}

#[test]
fn schema_seeds() {
    for (name, b) in seeds("schema") {
        let schema = Schema::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let attrs = schema.attributes().unwrap();
        assert_eq!(Schema::from_attributes(&attrs, &schema.classes).attributes().unwrap(), attrs);
    }
}

#[test]
fn model_seeds() {
    for (name, b) in seeds("linear_model") {
        LinearBlackBox::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("regime_model") {
        RegimeBlackBox::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn pattern_seeds() {
    let attributes = [
        Attribute::new("x", AttributeKind::Numeric, 0),
        Attribute::new("g", AttributeKind::Ordinal(vec!["lo".into(), "mid".into(), "hi".into()]), 1),
        Attribute::new("c", AttributeKind::Nominal(vec!["red".into(), "blue".into()]), 2),
        Attribute::new("b", AttributeKind::Boolean, 3),
    ];
    for (name, b) in seeds("pattern") {
        let p = parse_pattern(text(&b), &attributes).unwrap_or_else(|e| panic!("{name}: {e}"));
        let entries = serde_json::to_string(&p.to_entries(&attributes)).unwrap();
        assert_eq!(parse_pattern(&entries, &attributes).unwrap(), p, "{name}");
    }
}

#[test]
fn response_seeds() {
    let classes = ["a".to_string(), "b".to_string(), "c".to_string()];
    let results: Vec<_> = seeds("response")
        .into_iter()
        .map(|(name, b)| (name, parse_response(text(&b), 2, &classes).map(|r| r.0)))
        .collect();
    for (name, r) in &results {
        match (name.as_str(), r) {
            ("negative.csv" | "wrong_header.csv", r) => assert!(r.is_err(), "{name}"),
            (_, Ok(p)) => assert_eq!(p.dim(), (2, 3)),
            (_, Err(e)) => panic!("{name}: {e}"),
        }
    }
}

#[test]
fn cache_and_partition_seeds() {
    for (name, b) in seeds("cache") {
        parse_cache(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("partition") {
        let run: ExplainOutput =
            serde_json::from_str(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!run.partition.subgroups.is_empty());
    }
    for (name, b) in seeds("synth_spec") {
        SynthSpec::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn curve_seeds() {
    for (_, b) in seeds("curve_csv") {
        if let Ok(curve) = parse_curve_csv(text(&b)) {
            assert_eq!(parse_curve_csv(&curve_csv(&curve)).unwrap().len(), curve.len());
        }
    }
}

/// Feeds `bytes` to every decoder; none may panic.
fn decode_all(bytes: &[u8]) {
    let schema = Schema::from_json(SCHEMA).unwrap();
    let _ = parse_dataset(bytes, &schema);
    let Ok(s) = std::str::from_utf8(bytes) else { return };
    let _ = Schema::from_json(s).map(|x| x.attributes());
    let _ = LinearBlackBox::from_json(s);
    let _ = RegimeBlackBox::from_json(s);
    let _ = parse_response(s, 2, &["a".into(), "b".into(), "c".into()]);
    let _ = parse_cache(s);
    let _ = parse_curve_csv(s);
    let _ = SynthSpec::from_json(s);
    let _ = serde_json::from_str::<ExplainOutput>(s);
    let attributes = [
        Attribute::new("x", AttributeKind::Numeric, 0),
        Attribute::new("c", AttributeKind::Nominal(vec!["red".into(), "blue".into()]), 1),
        Attribute::new("b", AttributeKind::Boolean, 2),
    ];
    let _ = parse_pattern(s, &attributes);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(400))]
    #[test]
    fn mutated_seeds_never_panic(
        target in 0usize..10,
        pick in 0usize..64,
        edits in proptest::collection::vec((0usize..1 << 16, 0u8..=255, 0u8..3), 1..8),
    ) {
        const TARGETS: [&str; 10] = [
            "dataset", "schema", "linear_model", "regime_model", "pattern",
            "response", "cache", "curve_csv", "synth_spec", "partition",
        ];
        let all = seeds(TARGETS[target]);
        let mut bytes = all[pick % all.len()].1.clone();
        for (pos, byte, kind) in edits {
            let i = pos % (bytes.len() + 1);
            match kind {
                0 if i < bytes.len() => bytes[i] = byte,
                1 => bytes.insert(i, byte),
                _ if i < bytes.len() => { bytes.remove(i); }
                _ => bytes.push(byte),
            }
        }
        decode_all(&bytes);
    }
}
