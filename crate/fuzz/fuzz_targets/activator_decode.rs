#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use slonn_core::importance::{activator_from_bytes, activator_to_bytes};
use slonn_core::model::{gen_synthetic_model, MlpModel};

/// The model the corpus seeds were fitted against.
fn model() -> &'static MlpModel {
    static MODEL: OnceLock<MlpModel> = OnceLock::new();
    MODEL.get_or_init(|| gen_synthetic_model(0, &[4, 64, 64, 3]).unwrap())
}

fuzz_target!(|data: &[u8]| {
    if let Ok(bundle) = activator_from_bytes(data, model()) {
        // Bucket order on disk is free, so compare after one normalizing pass.
        let bytes = activator_to_bytes(&bundle).unwrap();
        let again = activator_from_bytes(&bytes, model()).unwrap();
        assert_eq!(again, bundle);
        assert_eq!(activator_to_bytes(&again).unwrap(), bytes);
    }
});
