use drot_cli::matrix_io::{
    decode_matrix, encode_matrix, read_csv, read_matrix, read_matrix_any, read_vector, write_matrix, write_vector,
    Dtype, MatrixIoError,
};
use drot_core::Matrix;
use proptest::prelude::*;

fn bits(m: &Matrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn random_3x4_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.otmx");
    let m = Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.7310585786300049).sin() * 1e3);
    write_matrix(&path, &m, Dtype::F64).unwrap();
    let back = read_matrix(&path).unwrap();
    assert_eq!(back.shape(), (3, 4));
    assert_eq!(bits(&back), bits(&m));
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 24 + 12 * 8);
}

#[test]
fn truncated_file_is_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.otmx");
    let bytes = encode_matrix(&Matrix::filled(2, 3, 0.5), Dtype::F64);
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(read_matrix(&path), Err(MatrixIoError::SizeMismatch { expected: 48, found: 47 })));
}

#[test]
fn missing_file_is_io_error() {
    let err = read_matrix(std::path::Path::new("/nonexistent/cost.otmx")).unwrap_err();
    assert!(matches!(err, MatrixIoError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/cost.otmx"));
}

#[test]
fn csv_files_and_dispatch_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    std::fs::write(&csv, "0,1\n1,0\n").unwrap();
    let expected = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
    assert_eq!(read_csv(&csv).unwrap(), expected);
    assert_eq!(read_matrix_any(&csv).unwrap(), expected);
    std::fs::write(&csv, "0,1\n1,0,2\n").unwrap();
    assert!(matches!(read_csv(&csv), Err(MatrixIoError::RaggedCsv { line: 2, .. })));
}

#[test]
fn vectors_are_single_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.otmx");
    write_vector(&path, &[0.2, 0.3, 0.5]).unwrap();
    assert_eq!(read_matrix(&path).unwrap().shape(), (3, 1));
    assert_eq!(read_vector(&path).unwrap(), vec![0.2, 0.3, 0.5]);
    write_matrix(&path, &Matrix::zeros(2, 2), Dtype::F64).unwrap();
    assert!(matches!(read_vector(&path), Err(MatrixIoError::NotAVector { rows: 2, cols: 2 })));
}

proptest! {
    #[test]
    fn any_matrix_round_trips_bitwise(m in 0usize..6, n in 0usize..6, seed in any::<u64>()) {
        let m = Matrix::from_fn(m, n, |i, j| f64::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left((i * 7 + j) as u32)));
        let back = decode_matrix(&encode_matrix(&m, Dtype::F64)).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn every_strict_prefix_is_rejected(m in 1usize..4, n in 1usize..4, cut in 0usize..1000) {
        let bytes = encode_matrix(&Matrix::filled(m, n, 1.5), Dtype::F32);
        let cut = cut % bytes.len();
        prop_assert!(decode_matrix(&bytes[..cut]).is_err());
    }

    #[test]
    fn decoder_never_panics(data in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_matrix(&data);
    }
}
