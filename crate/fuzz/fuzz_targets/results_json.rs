#![no_main]
use libfuzzer_sys::fuzz_target;

use binseg::io::results::ResultsFile;

fuzz_target!(|data: &[u8]| {
    let Ok(file) = ResultsFile::from_slice(data) else {
        return;
    };
    // A validated file always yields decodable proposals.
    let proposals = file.proposals().expect("masks validated on parse");
    for (record, proposal) in file.instances.iter().zip(proposals.iter()) {
        assert_eq!(record.n_points, proposal.point_indices.len());
    }
    let _ = file.to_json().expect("reserialize");
});
