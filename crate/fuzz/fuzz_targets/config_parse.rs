//! Arbitrary bytes through the experiment-config parser: anything that
//! is not a valid config document must surface as an error, not a
//! panic, and accepted configs must re-serialize.

#![no_main]

use bubblebench_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = parse_config(data) {
        serde_json::to_string(&config).expect("accepted config serializes");
    }
});
