#![no_main]

use libfuzzer_sys::fuzz_target;
use slonn_core::confidence::CalibrationCurve;

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = CalibrationCurve::from_csv(data) {
        let mut out = Vec::new();
        curve.write_csv(&mut out).unwrap();
        assert_eq!(CalibrationCurve::from_csv(&out).unwrap(), curve);
    }
});
