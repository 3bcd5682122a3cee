#![no_main]
use libfuzzer_sys::fuzz_target;

use binseg::io::ply::{read_ply, write_ply};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = read_ply(text) else {
        return;
    };
    let rewritten = write_ply(&file).expect("write of a parsed ply");
    let back = read_ply(&rewritten).expect("reread of a written ply");
    assert_eq!(back.cloud.len(), file.cloud.len());
    assert_eq!(back.cloud.semantic, file.cloud.semantic);
});
