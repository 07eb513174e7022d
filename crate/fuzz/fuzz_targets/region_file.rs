#![no_main]

use libfuzzer_sys::fuzz_target;
use nacert::report::{read_regions, write_regions};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok((n, m, regions)) = read_regions(src) {
        let text = write_regions(&regions, n, m);
        let (n2, m2, again) = read_regions(&text).expect("own output parses");
        assert_eq!((n, m), (n2, m2));
        assert_eq!(regions, again);
    }
});
