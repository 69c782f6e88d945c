use serde::{Deserialize, Serialize};

use super::WindowSet;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-score parameters fitted on training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(windows: &WindowSet) -> Result<NormStats> {
        if windows.is_empty() {
            return Err(Error::Data("cannot fit normalisation on an empty training set".into()));
        }
        let c = windows.channels();
        let mut sum = vec![0.0f64; c];
        for row in windows.values().chunks_exact(c) {
            sum.iter_mut().zip(row).for_each(|(s, &v)| *s += v as f64);
        }
        let count = (windows.values().len() / c) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut sq = vec![0.0f64; c];
        for row in windows.values().chunks_exact(c) {
            for ((s, &v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let std = sq.iter().map(|s| (s / count).sqrt().max(STD_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, windows: &mut WindowSet) -> Result<()> {
        let c = windows.channels();
        if c != self.mean.len() {
            return Err(Error::Shape(format!("statistics for {} channels, windows have {c}", self.mean.len())));
        }
        for row in windows.values_mut().chunks_exact_mut(c) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        Ok(())
    }
}

/// Fits statistics on `train` only and applies them to both sets.
pub fn normalize(train: &mut WindowSet, test: &mut WindowSet) -> Result<NormStats> {
    let stats = NormStats::fit(train)?;
    stats.apply(train)?;
    stats.apply(test)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::session;
    use crate::data::ChannelMode;

    #[test]
    fn constant_channel_maps_to_zero_and_train_mean_vanishes() {
        let train_sessions = [session("a", true, "2648", 1, 40), session("b", false, "2648", 1, 55)];
        let mut train = WindowSet::from_sessions(&train_sessions, 10, ChannelMode::Position).unwrap();
        let mut test = WindowSet::from_sessions(&[session("c", true, "2648", 1, 90)], 10, ChannelMode::Position).unwrap();
        normalize(&mut train, &mut test).unwrap();
        // channel 1 is the constant 1.0 in every frame
        assert!(train.values().chunks(3).all(|r| r[1] == 0.0));
        let refit = NormStats::fit(&train).unwrap();
        for m in [refit.mean[0], refit.mean[2]] {
            assert!(m.abs() < 1e-5, "{m}");
        }
        assert!((refit.std[0] - 1.0).abs() < 1e-4);
        // the longer test session extends beyond the training range
        let test_mean = NormStats::fit(&test).unwrap().mean[0];
        assert!(test_mean.abs() > 0.1);
    }

    #[test]
    fn test_data_never_changes_statistics() {
        let train_sessions = [session("a", true, "2648", 1, 40)];
        let train = WindowSet::from_sessions(&train_sessions, 10, ChannelMode::Position).unwrap();
        let mut t1 = train.clone();
        let mut t2 = train.clone();
        let mut x1 = WindowSet::from_sessions(&[session("c", true, "2648", 1, 30)], 10, ChannelMode::Position).unwrap();
        let mut x2 = WindowSet::from_sessions(&[session("d", false, "2648", 1, 90)], 10, ChannelMode::Position).unwrap();
        assert_eq!(normalize(&mut t1, &mut x1).unwrap(), normalize(&mut t2, &mut x2).unwrap());
    }

    #[test]
    fn empty_training_set() {
        let mut a = WindowSet::empty(10, 3);
        let mut b = WindowSet::empty(10, 3);
        assert!(matches!(normalize(&mut a, &mut b), Err(Error::Data(_))));
    }
}
