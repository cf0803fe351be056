#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::data::Schema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schema) = Schema::from_json(text) {
        if let Ok(attrs) = schema.attributes() {
            let again = Schema::from_attributes(&attrs, &schema.classes);
            assert_eq!(again.attributes().unwrap(), attrs);
        }
    }
});
