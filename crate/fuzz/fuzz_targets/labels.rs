#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // The parser trims whitespace, so serialization canonicalizes; assert
    // the canonical form is a fixed point.
    if let Ok(labels) = airship::dataset::parse_labels(data) {
        let canonical = airship::dataset::labels_to_bytes(&labels);
        assert_eq!(airship::dataset::parse_labels(&canonical).unwrap(), labels);
    }
});
