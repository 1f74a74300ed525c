#![no_main]

use gainid::pipeline::SimulateConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SimulateConfig::from_toml(text);
    }
});
