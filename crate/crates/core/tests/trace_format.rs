use std::fs;

use nalgebra::DMatrix;
use nullprobe::trace::{layer_file_name, read_traces, write_traces, LABELS_FILE, MANIFEST_FILE};
use nullprobe::{Error, LabelKind, TraceSet};
use proptest::prelude::*;

fn trace_strategy() -> impl Strategy<Value = TraceSet> {
    (1usize..7, 1usize..4, 1usize..5, 0usize..3).prop_flat_map(|(n, layers, d, kind)| {
        let acts = prop::collection::vec(prop::collection::vec(-1e6f32..1e6, n * d), layers);
        let label_dim = if kind == 2 { 2 } else { 1 };
        let labels = prop::collection::vec(0u8..3, n * label_dim);
        (acts, labels).prop_map(move |(acts, labels)| {
            let (label_kind, labels) = match kind {
                0 => (LabelKind::Binary, labels.iter().map(|&v| (v % 2) as f32).collect::<Vec<_>>()),
                1 => (LabelKind::Categorical { classes: 3 }, labels.iter().map(|&v| v as f32).collect()),
                _ => (LabelKind::RealVector, labels.iter().map(|&v| v as f32 * 0.37 - 0.1).collect()),
            };
            TraceSet::new(
                acts.into_iter()
                    .map(|a| DMatrix::from_row_slice(n, d, &a))
                    .collect(),
                DMatrix::from_row_slice(n, label_dim, &labels),
                label_kind,
                "proptest",
            )
            .unwrap()
        })
    })
}

fn bits(m: &DMatrix<f32>) -> Vec<u32> {
    m.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_preserves_every_bit(t in trace_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        write_traces(&t, dir.path()).unwrap();
        let back = read_traces(dir.path()).unwrap();
        prop_assert_eq!(back.label_kind, t.label_kind);
        prop_assert_eq!(&back.provenance, &t.provenance);
        prop_assert_eq!(bits(&back.labels), bits(&t.labels));
        prop_assert_eq!(back.activations.len(), t.activations.len());
        for (a, b) in back.activations.iter().zip(&t.activations) {
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn any_resized_tensor_is_rejected(t in trace_strategy(), which in 0usize..8, cut in 1usize..9, grow in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        write_traces(&t, dir.path()).unwrap();
        let name = if which < t.n_layers() { layer_file_name(which) } else { LABELS_FILE.to_string() };
        let path = dir.path().join(&name);
        let mut bytes = fs::read(&path).unwrap();
        if grow {
            bytes.extend(std::iter::repeat(0u8).take(cut));
        } else {
            bytes.truncate(bytes.len().saturating_sub(cut));
        }
        fs::write(&path, bytes).unwrap();
        match read_traces(dir.path()) {
            Err(Error::Format { file, .. }) => prop_assert_eq!(file, name),
            other => prop_assert!(false, "expected format error, got {:?}", other.map(|t| t.n_samples())),
        }
    }
}

#[test]
fn manifest_keys_are_stable() {
    let t = TraceSet::new(
        vec![DMatrix::from_element(2, 3, 0.5f32)],
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        LabelKind::Binary,
        "m",
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_traces(&t, a.path()).unwrap();
    write_traces(&t, b.path()).unwrap();
    let ma = fs::read_to_string(a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ma, fs::read_to_string(b.path().join(MANIFEST_FILE)).unwrap());
    let keys: Vec<&str> = ma
        .lines()
        .filter_map(|l| l.trim().strip_prefix('"'))
        .filter_map(|l| l.split_once("\":").map(|(k, _)| k))
        .collect();
    assert_eq!(
        keys,
        [
            "format_version",
            "dtype",
            "byte_order",
            "n_samples",
            "n_layers",
            "d_model",
            "label_dim",
            "label_kind",
            "kind",
            "layer_files",
            "labels_file",
            "provenance"
        ]
    );
}

#[test]
fn hand_written_directory_loads() {
    // a directory produced without this crate, as an external exporter would
    let dir = tempfile::tempdir().unwrap();
    let manifest = r#"{
        "format_version": 1, "dtype": "f32", "byte_order": "little",
        "n_samples": 2, "n_layers": 1, "d_model": 2, "label_dim": 1,
        "label_kind": {"kind": "real"},
        "layer_files": ["layer_00.bin"], "labels_file": "labels.bin",
        "provenance": "external"
    }"#;
    fs::write(dir.path().join(MANIFEST_FILE), manifest).unwrap();
    let layer: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.path().join("layer_00.bin"), layer).unwrap();
    let labels: Vec<u8> = [0.25f32, -0.5].iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.path().join(LABELS_FILE), labels).unwrap();
    let t = read_traces(dir.path()).unwrap();
    assert_eq!(t.activations[0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert_eq!(t.labels[(1, 0)], -0.5);
    assert_eq!(t.label_kind, LabelKind::Real);
}
