#![no_main]

use libfuzzer_sys::fuzz_target;
use wgspec::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // accepted configs must survive a round trip unchanged
    if let Ok(cfg) = RunConfig::from_json(text) {
        let again = RunConfig::from_json(&cfg.to_json()).expect("serialized config re-validates");
        assert_eq!(again.to_json(), cfg.to_json());
    }
});
