#![no_main]

use libfuzzer_sys::fuzz_target;
use nrg_core::bracket::{parse_tsv, write_tsv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(b) = parse_tsv(text) else { return };
    assert_eq!(parse_tsv(&write_tsv(&b)).unwrap(), b);
});
