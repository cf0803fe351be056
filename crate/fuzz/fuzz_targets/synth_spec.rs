#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::data::synth::SynthSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = SynthSpec::from_json(text);
});
