#![no_main]

use libfuzzer_sys::fuzz_target;
use nrg_core::interchange::{parse_grammar, write_grammar};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(g) = parse_grammar(text) else { return };
    // anything accepted must survive a write/parse cycle
    let out = write_grammar(&g).expect("parsed grammar writes");
    let back = parse_grammar(&out).expect("written grammar parses");
    assert_eq!(write_grammar(&back).unwrap(), out);
});
