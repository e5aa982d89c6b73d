use knockoff_core::io::{self, MatrixFormat};
use knockoff_core::{Error, ErrorKind, FeatureMatrix, LabelVector};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>)> {
    (1usize..12, 1usize..8).prop_flat_map(|(n, p)| {
        (
            Just(n),
            Just(p),
            prop::collection::vec(-1e6f64..1e6, n * p),
            Just(p).prop_perturb(|p, mut rng| {
                let mut ids: Vec<usize> = (0..p).map(|k| k * 3 + (rng.random::<u8>() as usize % 3)).collect();
                ids.reverse();
                ids
            }),
        )
    })
}

fn build(n: usize, p: usize, vals: &[f64], ids: Vec<usize>) -> FeatureMatrix {
    FeatureMatrix::new(DMatrix::from_row_slice(n, p, vals), ids).unwrap()
}

proptest! {
    #[test]
    fn csv_roundtrip_is_exact((n, p, vals, ids) in matrix_strategy()) {
        let m = build(n, p, &vals, ids);
        let back = io::parse_csv(&io::csv_bytes(&m)).unwrap();
        prop_assert_eq!(back.values(), m.values());
        prop_assert_eq!(back.column_ids(), m.column_ids());
    }

    #[test]
    fn raw_roundtrip_is_bit_exact_for_f32_values((n, p, vals, ids) in matrix_strategy()) {
        let vals: Vec<f64> = vals.iter().map(|&v| f64::from(v as f32)).collect();
        let m = build(n, p, &vals, ids.clone());
        let bytes = io::raw_bytes(&m).unwrap();
        prop_assert_eq!(bytes.len(), io::RAW_HEADER_LEN + 4 * n * p);
        let back = io::parse_raw(&bytes, Some(ids)).unwrap();
        for (a, b) in back.values().iter().zip(m.values().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn labels_roundtrip(bits in prop::collection::vec(any::<bool>(), 1..50)) {
        let labels = LabelVector::from_bools(bits);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        io::save_labels(&labels, &path).unwrap();
        prop_assert_eq!(io::load_labels(&path).unwrap(), labels);
    }
}

#[test]
fn files_roundtrip_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let m = build(3, 2, &[0.5, 1.0, 0.0, 2.25, -3.0, 8.0], vec![17, 4]);
    for (name, format) in [("z.csv", MatrixFormat::Csv), ("z.bin", MatrixFormat::RawF32)] {
        let path = dir.path().join(name);
        io::save_matrix(&m, &path, format).unwrap();
        assert_eq!(MatrixFormat::from_path(&path), format);
        let back = io::load_matrix(&path, format).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.column_ids(), &[17, 4]);
    }
    let raw = dir.path().join("z.bin");
    std::fs::remove_file(io::sidecar_path(&raw)).unwrap();
    assert_eq!(io::load_matrix(&raw, MatrixFormat::RawF32).unwrap().column_ids(), &[0, 1]);
}

#[test]
fn csv_header_and_body_layout() {
    let m = build(2, 2, &[1.0, 0.1, 0.0, 2.5], vec![3, 9]);
    assert_eq!(io::csv_bytes(&m), "latent_3,latent_9\n1,0.1\n0,2.5\n");
}

#[test]
fn raw_header_layout() {
    let m = build(1, 2, &[1.0, -2.0], vec![0, 1]);
    let b = io::raw_bytes(&m).unwrap();
    assert_eq!(&b[..4], b"KNF1");
    assert_eq!(&b[4..8], &1u32.to_le_bytes());
    assert_eq!(&b[8..12], &2u32.to_le_bytes());
    assert_eq!(&b[12..16], &[0, 0, 0, 0]);
    assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
    assert_eq!(&b[20..24], &(-2.0f32).to_le_bytes());
}

#[test]
fn malformed_inputs_are_data_errors() {
    let nan = io::parse_csv("latent_0,latent_1\n1,2\nnan,3\n").unwrap_err();
    assert!(matches!(nan, Error::NonFinite { row: 1, col: 0 }), "{nan}");
    assert_eq!(nan.kind(), ErrorKind::Data);
    assert!(matches!(io::parse_csv(""), Err(Error::NoRows)));
    assert!(matches!(io::parse_csv("latent_0\n"), Err(Error::NoRows)));
    assert!(io::parse_csv("latent_0,latent_1\n1\n").is_err());
    assert!(io::parse_raw(b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0", None).is_err());
    let bad = io::parse_labels("0\n1\n2\n").unwrap_err();
    assert!(matches!(bad, Error::LabelOutOfRange { line: 3, .. }), "{bad}");
    assert_eq!(bad.kind(), ErrorKind::Data);
}
