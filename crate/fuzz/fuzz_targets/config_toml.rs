#![no_main]
use libfuzzer_sys::fuzz_target;

use binseg::io::config::{parse_pipeline_config, parse_suite_config, parse_synth_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_pipeline_config(text) {
        // Parsed configs are already validated.
        assert!(config.r_d > 0.0);
        assert!((0.0..=1.0).contains(&config.nms_iou));
    }
    let _ = parse_synth_config(text);
    let _ = parse_suite_config(text);
});
