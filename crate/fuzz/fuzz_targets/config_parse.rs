#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfar::experiments::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::parse(text) {
        // rendering must parse back to the same config
        let again = ScenarioConfig::parse(&cfg.to_text()).expect("rendered config parses");
        assert_eq!(again.to_text(), cfg.to_text());
        let _ = cfg.validate();
    }
});
