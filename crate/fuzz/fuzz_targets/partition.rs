#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::cli::ExplainOutput;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(run) = serde_json::from_str::<ExplainOutput>(text) {
        let again = serde_json::to_string(&run).unwrap();
        serde_json::from_str::<ExplainOutput>(&again).expect("written output parses");
    }
});
