#![no_main]
use libfuzzer_sys::fuzz_target;
use srbkit::tower::file::{parse_tower, write_tower};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tower) = parse_tower(src) {
        let again = parse_tower(&write_tower(&tower)).expect("written towers parse");
        assert_eq!(again.branches().len(), tower.branches().len());
    }
});
