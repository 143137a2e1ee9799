#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Serialization sorts and deduplicates each allowed set; that canonical
    // form must be a fixed point of parse/serialize.
    if let Ok(constraints) = airship::constraints::parse_constraints(data) {
        let canonical = airship::constraints::constraints_to_bytes(&constraints);
        assert_eq!(
            airship::constraints::parse_constraints(&canonical).unwrap(),
            constraints
        );
    }
});
