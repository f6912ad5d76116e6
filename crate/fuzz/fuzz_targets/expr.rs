#![no_main]
use libfuzzer_sys::fuzz_target;
use srbkit::expr::{Expr, Point};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = Expr::parse(src) {
        let _ = e.eval(Point { x: 0.3, y: -0.2, logjac: 0.5 });
    }
});
