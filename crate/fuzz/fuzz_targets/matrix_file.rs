#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| drot_cli::roundtrip::check_matrix_file(data));
