#![no_main]

use levy_ito::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match ExperimentConfig::parse(text, true) {
        Ok(cfg) => {
            // Anything accepted must survive a round trip unchanged.
            let again = ExperimentConfig::parse(&cfg.to_json_pretty(), true).expect("round trip");
            assert_eq!(cfg, again);
            assert_eq!(cfg.hash(), again.hash());
        }
        Err(e) => {
            if let Some(line) = e.line() {
                assert!(line >= 1 && line <= text.lines().count().max(1) + 1);
            }
        }
    }
});
