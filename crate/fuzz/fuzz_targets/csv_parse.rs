#![no_main]

use libfuzzer_sys::fuzz_target;
use wgspec::a_family::DecayRow;
use wgspec::io::{csv_string, parse_csv, CsvRow, FredholmRow};
use wgspec::pole_tracker::TrajectoryRow;

fn check<R: CsvRow>(text: &str) {
    if let Ok(rows) = parse_csv::<R>(text) {
        let out = csv_string(&rows).expect("parsed rows serialize");
        let back = parse_csv::<R>(&out).expect("own output parses");
        assert_eq!(csv_string(&back).expect("serialize"), out);
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    check::<TrajectoryRow>(text);
    check::<DecayRow>(text);
    check::<FredholmRow>(text);
});
