#![no_main]

use libfuzzer_sys::fuzz_target;
use nacert::dynamics::parse_expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(e) = parse_expr(src, &["x".to_string(), "y".to_string()]) {
        // whatever parses must differentiate and evaluate without panicking
        let d = e.diff(0);
        let _ = d.diff(1);
        let _ = e.eval(&[0.5, -0.25]);
    }
});
