#![no_main]
use bundlefactor::mesh::{validate_complex, SimplicialComplex};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = SimplicialComplex::from_json(s) {
        // a parsed complex must survive its own round trip
        let back = SimplicialComplex::from_json(&c.to_json()).expect("round trip");
        assert_eq!(back.to_file(), c.to_file());
        let _ = validate_complex(&c);
    }
});
