#![no_main]

use libfuzzer_sys::fuzz_target;
use slonn_core::model::{model_from_bytes, model_to_bytes};

fuzz_target!(|data: &[u8]| {
    // The layout has no slack, so anything that decodes re-encodes verbatim.
    if let Ok(model) = model_from_bytes(data) {
        assert_eq!(model_to_bytes(&model), data);
    }
});
