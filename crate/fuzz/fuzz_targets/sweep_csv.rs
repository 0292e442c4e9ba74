//! Arbitrary bytes through the sweep-table reader. The reader takes a
//! path, so each input goes through a temporary file; the property is
//! the same as for the byte decoders: errors, never panics.

#![no_main]

use std::io::Write;

use bubblebench_core::attack::read_sweep_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::NamedTempFile::new().expect("temp file");
    file.write_all(data).expect("write fuzz input");
    let _ = read_sweep_csv(file.path());
});
