#![no_main]

use libfuzzer_sys::fuzz_target;
use subflow::io::parse_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = parse_csv(text) {
        assert!(raw.dim == 0 || raw.data.len() % raw.dim == 0);
        assert!(raw.data.iter().all(|x| x.is_finite()));
        let _ = raw.clone().into_cloud(false);
        let _ = raw.into_cloud(true);
    }
});
