use crate::error::{Error, Result};

pub(crate) const DEFAULT_PITCH: f64 = 0.06;

/// Keys in row-major order; rows top to bottom.
const GRID: [[char; 3]; 4] = [['1', '2', '3'], ['4', '5', '6'], ['7', '8', '9'], ['C', '0', 'E']];

/// A vertical 3x4 keypad in front of the user. `x` points right, `y` up and `z` away
/// from the user; key centers lie in the plane `z = CENTER[2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypadLayout {
    pitch: f64,
}

const CENTER: [f64; 3] = [0.0, 1.3, 0.45];

impl KeypadLayout {
    pub fn new(pitch: f64) -> KeypadLayout {
        KeypadLayout { pitch }
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Half the pitch: the largest radius at which a point is unambiguously on one key.
    pub fn key_radius(&self) -> f64 {
        self.pitch / 2.0
    }

    pub fn key(&self, key: char) -> Result<[f64; 3]> {
        for (row, keys) in GRID.iter().enumerate() {
            if let Some(col) = keys.iter().position(|&k| k == key) {
                return Ok([
                    CENTER[0] + (col as f64 - 1.0) * self.pitch,
                    CENTER[1] + (1.5 - row as f64) * self.pitch,
                    CENTER[2],
                ]);
            }
        }
        Err(Error::Config(format!("key `{key}` is not on the keypad")))
    }

    pub fn keys(&self) -> Vec<(char, [f64; 3])> {
        GRID.iter().flatten().map(|&k| (k, self.key(k).expect("grid key"))).collect()
    }

    /// Where the hand starts: below the keypad and closer to the body.
    pub fn rest(&self) -> [f64; 3] {
        [CENTER[0], CENTER[1] - 2.5 * self.pitch, CENTER[2] - 0.08]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_three_by_four_with_distinct_centers() {
        let layout = KeypadLayout::new(DEFAULT_PITCH);
        let keys = layout.keys();
        assert_eq!(keys.len(), 12);
        for (i, (_, a)) in keys.iter().enumerate() {
            for (_, b) in &keys[i + 1..] {
                let d = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
                assert!(d >= DEFAULT_PITCH - 1e-12);
            }
        }
        let one = layout.key('1').unwrap();
        let e = layout.key('E').unwrap();
        assert!(one[1] > e[1] && one[0] < e[0]);
        assert_eq!(layout.key('0').unwrap()[0], layout.key('5').unwrap()[0]);
        assert!(layout.key('X').is_err());
    }
}
