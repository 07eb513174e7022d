#![no_main]

use libfuzzer_sys::fuzz_target;
use nacert::dynamics::SystemConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SystemConfig::from_toml(src) {
        if let Ok(sys) = cfg.build() {
            let c = sys.domain.center().to_vec();
            let _ = sys.evaluate(&c);
            let _ = nacert::taylor::taylor_expand(&sys, &sys.domain);
        }
    }
});
