//! Arbitrary bytes through the model container decoder: malformed input
//! must come back as an error, and any accepted model must re-encode to
//! a container that decodes to the same parameters.

#![no_main]

use bubblebench_core::classifier::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_model(data) {
        // Compare re-encoded bytes, not parameter vectors: byte equality
        // holds even if the container carries NaN weights.
        let encoded = encode_model(&model);
        let again = decode_model(&encoded).expect("re-encoded model decodes");
        assert_eq!(encoded, encode_model(&again));
    }
});
