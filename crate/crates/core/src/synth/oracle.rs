//! Model-free statistics used to check that the generator separates the classes.

use crate::data::Session;

/// Mean squared norm of the second difference of the position channels (the first three
/// columns) over a `[T, channels]` window.
pub fn path_variance(window: &[f32], channels: usize) -> f64 {
    let rows = window.len() / channels;
    if rows < 3 {
        return 0.0;
    }
    let p = |r: usize, a: usize| window[r * channels + a] as f64;
    let mut acc = 0.0;
    for r in 1..rows - 1 {
        for a in 0..3 {
            let d2 = p(r + 1, a) - 2.0 * p(r, a) + p(r - 1, a);
            acc += d2 * d2;
        }
    }
    acc / (rows - 2) as f64
}

/// Total distance travelled by the fingertip.
pub fn path_length(s: &Session) -> f64 {
    s.frames
        .windows(2)
        .map(|w| (0..3).map(|a| (w[1].position[a] - w[0].position[a]).powi(2)).sum::<f64>().sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_has_no_curvature() {
        let w: Vec<f32> = (0..20).flat_map(|i| [i as f32, 2.0 * i as f32, 0.5]).collect();
        assert_eq!(path_variance(&w, 3), 0.0);
    }

    #[test]
    fn alternating_signal() {
        // x = +-1 alternating: every second difference is +-4
        let w: Vec<f32> = (0..10).flat_map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0, 9.0]).collect();
        assert_eq!(path_variance(&w, 4), 16.0);
    }
}
