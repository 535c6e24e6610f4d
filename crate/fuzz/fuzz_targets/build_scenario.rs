#![no_main]
use dampnet::scenario::ScenarioFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = ScenarioFile::from_toml_str(text) {
            let _ = file.build();
        }
    }
});
