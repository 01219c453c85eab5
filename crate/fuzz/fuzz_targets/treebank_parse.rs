#![no_main]

use libfuzzer_sys::fuzz_target;
use nrg_core::bracket::{GoldTreebank, LeafToken};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    for leaf in [LeafToken::Word, LeafToken::Tag] {
        if let Ok(tb) = GoldTreebank::parse(&text, leaf) {
            for s in &tb.sentences {
                assert!(s.spans.iter().all(|&(a, b)| a < b && b <= s.tokens.len()));
            }
        }
    }
});
