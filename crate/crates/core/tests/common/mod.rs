//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

/// Direct nested-loop "same" convolution. `x [b, cin, t]`, `w [cout, cin, k]`, `bias [cout]`.
/// Padding is `k - 1` zeros in total with the odd one on the right.
pub fn naive_conv1d(x: &[f64], w: &[f64], bias: &[f64], dims: [usize; 5]) -> Vec<f64> {
    let [b, cin, cout, t, k] = dims;
    let left = (k - 1) / 2;
    let mut y = vec![0.0; b * cout * t];
    for n in 0..b {
        for o in 0..cout {
            for s in 0..t {
                let mut acc = bias[o];
                for c in 0..cin {
                    for j in 0..k {
                        let src = s as isize + j as isize - left as isize;
                        if src >= 0 && (src as usize) < t {
                            acc += w[(o * cin + c) * k + j] * x[(n * cin + c) * t + src as usize];
                        }
                    }
                }
                y[(n * cout + o) * t + s] = acc;
            }
        }
    }
    y
}

/// Gradients of `sum(r * conv(x))` with respect to `x`, `w` and the bias.
pub fn naive_conv1d_grads(x: &[f64], w: &[f64], r: &[f64], dims: [usize; 5]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [b, cin, cout, t, k] = dims;
    let left = (k - 1) / 2;
    let (mut dx, mut dw, mut db) = (vec![0.0; x.len()], vec![0.0; w.len()], vec![0.0; cout]);
    for n in 0..b {
        for o in 0..cout {
            for s in 0..t {
                let g = r[(n * cout + o) * t + s];
                db[o] += g;
                for c in 0..cin {
                    for j in 0..k {
                        let src = s as isize + j as isize - left as isize;
                        if src >= 0 && (src as usize) < t {
                            let xi = (n * cin + c) * t + src as usize;
                            let wi = (o * cin + c) * k + j;
                            dw[wi] += g * x[xi];
                            dx[xi] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn concordance_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// `T - W + 1` windows per session, none for short sessions.
pub fn expected_windows(frame_counts: impl IntoIterator<Item = usize>, w: usize) -> usize {
    frame_counts.into_iter().map(|t| (t + 1).saturating_sub(w)).sum()
}

pub fn vrfam_bin() -> &'static str {
    env!("CARGO_BIN_EXE_vrfam")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
