//! Writes a synthetic multi-firearm study for trying out the pipeline:
//!
//! ```sh
//! cargo run --release --example make_study -- /tmp/study [guns] [firings-per-gun] [seed]
//! ```

use cartridge_match::synthetic::{write_study, StudySpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| {
        eprintln!("usage: make_study <dir> [guns] [firings-per-gun] [seed]");
        std::process::exit(1);
    });
    let mut spec = StudySpec::default();
    if let Some(v) = args.next() {
        spec.guns = v.parse().expect("guns must be an integer");
    }
    if let Some(v) = args.next() {
        spec.firings_per_gun = v.parse().expect("firings-per-gun must be an integer");
    }
    if let Some(v) = args.next() {
        spec.seed = v.parse().expect("seed must be an integer");
    }

    let dir = std::path::PathBuf::from(dir);
    match write_study(&dir, &spec) {
        Ok(rows) => println!("wrote {} scans and {}", rows.len(), dir.join("manifest.csv").display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
