#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfar::codebook_io::{decode_matrix, encode_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok((m, kind)) = decode_matrix(data) {
        // entries are f32-representable, so re-encoding is lossless
        assert_eq!(encode_matrix(&m, kind).expect("encode"), data);
    }
});
