#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::evaluation::{curve_csv, parse_curve_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(curve) = parse_curve_csv(text) {
        let again = parse_curve_csv(&curve_csv(&curve)).expect("written curve parses");
        assert_eq!(again.len(), curve.len());
    }
});
