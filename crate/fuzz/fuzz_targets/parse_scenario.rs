#![no_main]
use dampnet::scenario::ScenarioFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ScenarioFile::from_toml_str(text) {
        // Serialising is canonical: a second pass reproduces the same text.
        let once = file.to_toml_string();
        let again = ScenarioFile::from_toml_str(&once).expect("serialised scenario parses");
        assert_eq!(again.to_toml_string(), once);
    }
});
