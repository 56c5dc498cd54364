#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = qss::sweep::parse_sweep_spec(data) {
        let json = serde_json::to_vec(&spec).expect("serialize accepted spec");
        assert_eq!(qss::sweep::parse_sweep_spec(&json).expect("reparse own output"), spec);
    }
});
