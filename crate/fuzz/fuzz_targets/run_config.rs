#![no_main]
use libfuzzer_sys::fuzz_target;
use srbkit_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(src, None) {
        assert_eq!(parse_config(&cfg.to_toml(), None).as_ref(), Ok(&cfg));
    }
});
