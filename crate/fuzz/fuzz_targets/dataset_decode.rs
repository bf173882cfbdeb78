#![no_main]

use libfuzzer_sys::fuzz_target;
use slonn_core::model::{dataset_from_bytes, dataset_to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = dataset_from_bytes(data) {
        assert_eq!(dataset_to_bytes(&ds), data);
    }
});
