#![no_main]

use libfuzzer_sys::fuzz_target;
use slonn_core::bench::ArrivalProcess;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(a) = s.parse::<ArrivalProcess>() {
        assert_eq!(a.to_string().parse::<ArrivalProcess>().unwrap(), a);
    }
});
