#![no_main]

use libfuzzer_sys::fuzz_target;
use nrg_core::encoder::{decode, read_nrg, write_nrg};

fuzz_target!(|data: &[u8]| {
    let Ok(stream) = read_nrg(data) else { return };
    assert_eq!(read_nrg(&write_nrg(&stream)).unwrap(), stream);
    let _ = decode(&stream);
});
