#![no_main]
use bundlefactor::io::load_field;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(f) = load_field(s) {
        let c = f.atlas.complex();
        for p in c.sample_points(1) {
            assert!(f.section.eval_home(&p).is_finite());
        }
    }
});
