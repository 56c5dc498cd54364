#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = qss::config::parse_config(data) {
        // Anything accepted must survive a round trip unchanged.
        let json = config.to_json().expect("serialize accepted config");
        let again = qss::config::parse_config(json.as_bytes()).expect("reparse own output");
        assert_eq!(config, again);
    }
});
