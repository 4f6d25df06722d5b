#![no_main]

use libfuzzer_sys::fuzz_target;
use subflow::io::parse_ply;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = parse_ply(text) {
        assert!(raw.dim == 0 || raw.data.len() % raw.dim == 0);
        let _ = raw.into_cloud(false);
    }
});
