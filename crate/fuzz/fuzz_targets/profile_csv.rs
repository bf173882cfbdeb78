#![no_main]

use libfuzzer_sys::fuzz_target;
use slonn_core::latency::LatencyProfile;

fuzz_target!(|data: &[u8]| {
    if let Ok(profile) = LatencyProfile::from_csv(data) {
        let mut out = Vec::new();
        profile.write_csv(&mut out).unwrap();
        let again = LatencyProfile::from_csv(&out).unwrap();
        assert_eq!(again.grid(), profile.grid());
        assert!(again.scenarios().eq(profile.scenarios()));
    }
});
