#![no_main]

use libfuzzer_sys::fuzz_target;
use nacert::report::{plot_data, CoverageReport};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(report) = CoverageReport::from_json(src) {
        let _ = plot_data(&report);
        let _ = report.summary();
        let back = CoverageReport::from_json(&report.to_json()).expect("own output parses");
        assert_eq!(back.to_json(), report.to_json());
    }
});
