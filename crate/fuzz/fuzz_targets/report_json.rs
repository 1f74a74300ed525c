#![no_main]

use gainid::pipeline::{render_table, AnalysisReport};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = AnalysisReport::from_json(text) {
        let _ = render_table(&report);
        let _ = report.to_json();
    }
});
