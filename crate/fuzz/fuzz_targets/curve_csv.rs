#![no_main]

use gqc::experiment::{parse_csv, to_csv_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text) {
        assert!(rows.iter().all(|r| r.t.is_finite() && !r.tc.is_nan() && !r.qfi.is_nan()));
        assert_eq!(parse_csv(&to_csv_string(&rows)).expect("round trip"), rows);
    }
});
