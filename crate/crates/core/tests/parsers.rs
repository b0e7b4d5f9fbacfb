// Malformed inputs must produce errors, never panics.
use std::fs;
use std::path::PathBuf;

use bundlefactor::curvature::christoffel;
use bundlefactor::io::{load_field, ChainFile, MetricFile};
use bundlefactor::mesh::{validate_complex, SimplicialComplex};
use proptest::prelude::*;

fn seeds(kind: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(kind);
    let mut out: Vec<String> = fs::read_dir(dir)
        .map(|d| d.filter_map(|e| fs::read_to_string(e.ok()?.path()).ok()).collect())
        .unwrap_or_default();
    out.sort();
    out
}

fn feed(kind: &str, s: &str) {
    match kind {
        "complex" => {
            if let Ok(c) = SimplicialComplex::from_json(s) {
                let _ = validate_complex(&c);
            }
        }
        "field" => {
            if let Ok(f) = load_field(s) {
                for p in f.atlas.complex().sample_points(1).into_iter().take(8) {
                    let _ = f.section.eval_home(&p);
                }
            }
        }
        "chain" => {
            if let Ok(c) = ChainFile::from_json(s) {
                let _ = c.atlas.build();
            }
        }
        _ => {
            if let Ok(m) = MetricFile::from_json(s) {
                if m.metric.dim <= 8 {
                    let _ = christoffel(&m.metric, &vec![0.3; m.metric.dim]);
                }
            }
        }
    }
}

const KINDS: [&str; 4] = ["complex", "field", "chain", "metric"];

#[test]
fn seeds_present_and_truncations_reject_cleanly() {
    for kind in KINDS {
        let list = seeds(kind);
        assert!(!list.is_empty(), "no seeds for {kind}");
        for s in &list {
            let step = (s.len() / 40).max(1);
            for cut in (0..s.len()).step_by(step) {
                if s.is_char_boundary(cut) {
                    feed(kind, &s[..cut]);
                }
            }
        }
    }
}

#[test]
fn hostile_values() {
    let cases = [
        ("complex", r#"{"vertices":[[0.0]],"simplices":{"1":[[0,5]]},"charts":[[0]],"chart_assignment":[0]}"#),
        ("complex", r#"{"vertices":[],"simplices":{},"charts":[],"chart_assignment":[]}"#),
        ("field", r#"{"atlas":{"complex":{"standard":"circle","size":0},"rank":3,"scalar":"real","structure":"orthogonal"},"class":"SL","field":{"kind":"generator","name":"identity"}}"#),
        ("field", r#"{"atlas":{"complex":{"standard":"torus_grid","size":4},"rank":0,"scalar":"real","structure":"orthogonal"},"class":"SL","field":{"kind":"generator","name":"identity"}}"#),
        ("field", r#"{"atlas":{"complex":{"standard":"interval","size":2},"rank":3,"scalar":"real","structure":"orthogonal"},"class":"SL","field":{"kind":"samples","vertex_values":[[1e308]]}}"#),
        ("metric", r#"{"dim":0,"generator":"euclidean"}"#),
        ("metric", r#"{"dim":2,"generator":"round_sphere","params":{"radius":-1.0}}"#),
        ("metric", r#"{"dim":2,"generator":"custom_polynomial","params":{"terms":[{"i":5,"j":0,"coeff":1.0,"powers":[1]}]}}"#),
    ];
    for (kind, s) in cases {
        feed(kind, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn byte_mutations(kind in 0usize..4, pick in any::<usize>(), edits in prop::collection::vec((any::<usize>(), any::<u8>()), 1..6)) {
        let list = seeds(KINDS[kind]);
        let mut bytes = list[pick % list.len()].clone().into_bytes();
        for (at, b) in edits {
            let i = at % bytes.len();
            bytes[i] = b;
        }
        if let Ok(s) = String::from_utf8(bytes) {
            feed(KINDS[kind], &s);
        }
    }
}

#[test]
fn oversized_inputs_are_rejected() {
    for big in [r#"{"standard":"torus_grid","size":100000}"#, r#"{"standard":"circle","size":4000000000}"#, r#"{"standard":"icosphere","size":40}"#] {
        let s = format!(r#"{{"atlas":{{"complex":{big},"rank":3,"scalar":"real","structure":"orthogonal"}},"class":"SL","field":{{"kind":"generator","name":"identity"}}}}"#);
        assert!(load_field(&s).is_err(), "{big}");
    }
    let s = r#"{"atlas":{"complex":{"standard":"circle","size":4},"rank":100000,"scalar":"real","structure":"orthogonal"},"class":"SL","field":{"kind":"generator","name":"identity"}}"#;
    assert!(load_field(s).is_err());
    assert!(MetricFile::from_json(r#"{"dim":1000,"generator":"euclidean"}"#).is_err());
}
