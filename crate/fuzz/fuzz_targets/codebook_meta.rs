#![no_main]

use libfuzzer_sys::fuzz_target;
use nearfar::codebook_io::CodebookMeta;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = CodebookMeta::parse(text);
    }
});
