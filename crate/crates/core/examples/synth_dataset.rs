//! Generates a small synthetic dataset and compares path length between the classes.
//!
//! `cargo run --release --example synth_dataset -- [OUT_DIR] [DELTA]`

use vrfam::data::load_sessions;
use vrfam::synth::{parse_delta, path_length, synth_dataset, write_dataset, SynthConfig, SESSIONS_FILE};

fn main() -> vrfam::Result<()> {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out = args.next().map(Into::into).unwrap_or_else(|| tmp.path().join("data"));
    let delta = parse_delta(&args.next().unwrap_or_else(|| "weak".into()))?;

    let cfg = SynthConfig { users_per_class: 4, sessions_per_code: 3, delta, ..Default::default() };
    let sessions = synth_dataset(&cfg)?;
    let manifest = write_dataset(&out, &cfg, &sessions)?;
    println!("{} sessions from {} users, {} frames in {}", manifest.sessions, manifest.users, manifest.frames, out.display());

    // Reading back goes through the same validation as real recordings.
    let back = load_sessions(&out.join(SESSIONS_FILE), &cfg.codes)?;
    assert_eq!(back, sessions);

    for familiar in [true, false] {
        let lengths: Vec<f64> = sessions.iter().filter(|s| s.familiar == familiar).map(path_length).collect();
        let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
        println!("{:<10} mean path length {mean:.4} m over {} sessions", if familiar { "familiar" } else { "unfamiliar" }, lengths.len());
    }
    Ok(())
}
