#![no_main]

use gainid::features::{read_trials, write_trials};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(trials) = read_trials(data, "fuzz.csv") else { return };
    // Anything accepted must survive a write and re-read unchanged.
    let mut buf = Vec::new();
    write_trials(&mut buf, &trials).unwrap();
    assert_eq!(read_trials(buf.as_slice(), "again.csv").unwrap(), trials);
});
