#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = qss::transcript::parse_record(data) {
        let corr = qss::sim::apply_xor(&record.matched());
        assert_eq!(corr.player_key_bits, record.correlated.player_key_bits);
    }
    let _ = qss::transcript::read_transcript(data);
});
