#![no_main]
use bundlefactor::io::{to_json, ChainFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(chain) = ChainFile::from_json(s) {
        let again = ChainFile::from_json(&to_json(&chain)).expect("re-parse");
        assert_eq!(again.factors.len(), chain.factors.len());
        let _ = chain.atlas.build();
        let _ = chain.mismatches(&again);
    }
});
