#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::blackbox::parse_response;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let classes = ["a".to_string(), "b".to_string(), "c".to_string()];
    if let Ok((probs, _)) = parse_response(text, 2, &classes) {
        assert_eq!(probs.dim(), (2, 3));
        assert!(probs.iter().all(|p| p.is_finite() && *p >= 0.0));
    }
});
