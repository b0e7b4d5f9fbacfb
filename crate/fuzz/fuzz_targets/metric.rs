#![no_main]
use bundlefactor::curvature::christoffel;
use bundlefactor::io::MetricFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = MetricFile::from_json(s) {
        let x = vec![0.7; m.metric.dim.min(16)];
        if x.len() == m.metric.dim {
            let _ = christoffel(&m.metric, &x);
        }
        let _ = m.field_file();
    }
});
