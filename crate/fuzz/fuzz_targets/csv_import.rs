#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| drot_cli::roundtrip::check_csv_import(data));
