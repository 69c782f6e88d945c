//! The minimum-jerk reach between two keys: bell-shaped speed, zero endpoint velocity.

use vrfam::synth::{min_jerk, synth_reach, KeypadLayout};

fn main() -> vrfam::Result<()> {
    let layout = KeypadLayout::new(0.06);
    for (c, p) in layout.keys() {
        println!("key {c}: [{:.3}, {:.3}, {:.3}]", p[0], p[1], p[2]);
    }
    let (from, to) = (layout.key('2')?, layout.key('8')?);
    let fps = 60.0;
    let path = synth_reach(from, to, 0.5, fps)?;
    println!("\nreach 2 -> 8 in 0.5 s: {} samples", path.len());
    for (i, w) in path.windows(2).enumerate().step_by(3) {
        let speed = (0..3).map(|k| (w[1][k] - w[0][k]).powi(2)).sum::<f64>().sqrt() * fps;
        println!("t={:.3}s  speed {:.4} m/s {}", i as f64 / fps, speed, "#".repeat((speed * 100.0) as usize));
    }
    println!("\nprofile midpoint s(0.5) = {}", min_jerk(0.5));
    Ok(())
}
