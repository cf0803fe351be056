#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::data::{Attribute, AttributeKind};
use sd4x::pattern::parse_pattern;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let attributes = [
        Attribute::new("x", AttributeKind::Numeric, 0),
        Attribute::new(
            "g",
            AttributeKind::Ordinal(vec!["lo".into(), "mid".into(), "hi".into()]),
            1,
        ),
        Attribute::new("c", AttributeKind::Nominal(vec!["red".into(), "blue".into()]), 2),
        Attribute::new("b", AttributeKind::Boolean, 3),
    ];
    if let Ok(p) = parse_pattern(text, &attributes) {
        let entries = serde_json::to_string(&p.to_entries(&attributes)).unwrap();
        let again = parse_pattern(&entries, &attributes).expect("written entries parse");
        assert_eq!(again, p);
    }
});
