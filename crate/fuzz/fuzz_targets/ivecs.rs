#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = airship::dataset::parse_ivecs(data) {
        assert_eq!(airship::dataset::ivecs_to_bytes(&rows), data);
    }
});
