#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // A successfully parsed fvecs stream must re-serialize byte-identically:
    // the format has fixed field widths and no encoding freedom.
    if let Ok(ds) = airship::Dataset::from_fvecs_bytes(data) {
        assert_eq!(ds.to_fvecs_bytes(), data);
    }
});
