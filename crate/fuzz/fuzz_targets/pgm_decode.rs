//! Arbitrary bytes through the PGM decoder: it must reject garbage with
//! an error, never panic, and anything it accepts must survive a
//! re-encode/re-decode round trip.

#![no_main]

use bubblebench_core::synth::pgm::{decode_pgm, encode_pgm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_pgm(data) {
        let again = decode_pgm(&encode_pgm(&image)).expect("re-encoded image decodes");
        assert_eq!(image.data(), again.data());
    }
});
