#![no_main]

use libfuzzer_sys::fuzz_target;
use sd4x::data::{parse_dataset, Schema};

const SCHEMA: &str = r#"{"attributes":[
    {"name":"x","kind":"numeric"},
    {"name":"g","kind":"ordinal","categories":["lo","mid","hi"]},
    {"name":"c","kind":"nominal","categories":["red","blue"]},
    {"name":"b","kind":"boolean"}],
  "classes":["a","b"]}"#;

fuzz_target!(|data: &[u8]| {
    let schema = Schema::from_json(SCHEMA).unwrap();
    let _ = parse_dataset(data, &schema);
});
