#![no_main]

use libfuzzer_sys::fuzz_target;
use subflow::io::{decode_submanifold, encode_submanifold};

fuzz_target!(|data: &[u8]| {
    if let Ok(sub) = decode_submanifold(data) {
        // Anything that decodes must survive a re-encode unchanged.
        let again = decode_submanifold(&encode_submanifold(&sub)).expect("re-encoded cache decodes");
        assert_eq!(again.points.len(), sub.points.len());
    }
});
