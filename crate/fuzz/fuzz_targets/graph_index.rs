#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(graph) = airship::ProximityGraph::from_index_bytes(data, None) {
        assert_eq!(graph.to_bytes(), data);
    }
    // exercising the checksum path must not change parse behavior
    let _ = airship::ProximityGraph::from_index_bytes(data, Some(0));
});
