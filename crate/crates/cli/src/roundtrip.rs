//! Round-trip properties of the three input decoders, shared by the fuzz
//! targets and the corpus replay test. Each function accepts arbitrary bytes
//! and panics only when a property fails.

use crate::config::parse_run_config;
use crate::matrix_io::{decode_header, decode_matrix, encode_matrix, format_f64, parse_csv, Dtype};

/// A decoded `OTMX` buffer re-encodes to the same values, bit for bit.
pub fn check_matrix_file(data: &[u8]) {
    let Ok(m) = decode_matrix(data) else { return };
    let header = decode_header(data).expect("decoded buffers have a valid header");
    assert_eq!((header.rows as usize, header.cols as usize), m.shape());
    let again = decode_matrix(&encode_matrix(&m, Dtype::F64)).expect("re-encoded matrix decodes");
    assert_eq!(again.shape(), m.shape());
    for (a, b) in again.as_slice().iter().zip(m.as_slice()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

/// Parsed CSV printed with 17 significant digits parses to the same values.
pub fn check_csv_import(data: &[u8]) {
    let Ok(m) = parse_csv(data) else { return };
    let text: String = (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| format_f64(m.get(i, j))).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let again = parse_csv(text.as_bytes()).expect("formatted output parses");
    assert_eq!(again.shape(), m.shape());
    for (a, b) in again.as_slice().iter().zip(m.as_slice()) {
        assert!(a == b || (a.is_nan() && b.is_nan()));
    }
}

/// An accepted config serializes back to an equal, accepted config.
pub fn check_run_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = parse_run_config(text) else { return };
    let _ = config.drot_config();
    let _ = config.sinkhorn_config();
    let json = serde_json::to_string(&config).expect("configs serialize");
    assert_eq!(parse_run_config(&json).expect("serialized config parses"), config);
}
