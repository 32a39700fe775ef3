#![no_main]

use gqc::experiment::{Figure, Panel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = text.parse::<Figure>() {
        assert_eq!(f.to_string().parse::<Figure>().expect("round trip"), f);
    }
    if let Ok(p) = text.parse::<Panel>() {
        assert_eq!(p.to_string().parse::<Panel>().expect("round trip"), p);
    }
});
