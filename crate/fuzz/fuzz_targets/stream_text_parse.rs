#![no_main]

use libfuzzer_sys::fuzz_target;
use nrg_core::encoder::{decode, format_stream_text, parse_stream_text};
use nrg_core::grammar::{AlphabetMode, Encoding};

fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let mode = if flags & 1 == 0 { AlphabetMode::Byte } else { AlphabetMode::Token };
    let encoding = if flags & 2 == 0 { Encoding::Fixed } else { Encoding::Variable };
    let Ok(stream) = parse_stream_text(text, mode, encoding) else {
        return;
    };
    let again = parse_stream_text(&format_stream_text(&stream), mode, encoding).unwrap();
    assert_eq!(again, stream);
    let _ = decode(&stream);
});
