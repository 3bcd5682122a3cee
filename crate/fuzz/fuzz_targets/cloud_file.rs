#![no_main]
use libfuzzer_sys::fuzz_target;

use binseg::io::cloud_file::{read_cloud, write_cloud};

fuzz_target!(|data: &[u8]| {
    let Ok(file) = read_cloud(&mut &data[..]) else {
        return;
    };
    // Anything that parses must survive a write/read round trip unchanged.
    let mut bytes = Vec::new();
    write_cloud(&mut bytes, &file).expect("write of a parsed cloud");
    let back = read_cloud(&mut bytes.as_slice()).expect("reread of a written cloud");
    assert_eq!(back.cloud.len(), file.cloud.len());
    assert_eq!(back.cloud.semantic, file.cloud.semantic);
    assert_eq!(back.provenance, file.provenance);
});
