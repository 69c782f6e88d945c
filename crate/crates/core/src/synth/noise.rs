use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::Rng;

/// Unit-variance Gaussian noise smoothed by a Gaussian kernel with standard deviation
/// `sigma` samples.
pub(crate) fn smooth_gaussian(rng: &mut Rng, len: usize, sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil().max(1.0) as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-0.5 * d * d / (sigma * sigma).max(1e-12)).exp()
        })
        .collect();
    let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    let white: Vec<f64> = (0..len + 2 * half).map(|_| StandardNormal.sample(&mut *rng)).collect();
    (0..len)
        .map(|i| white[i..i + kernel.len()].iter().zip(&kernel).map(|(w, k)| w * k).sum::<f64>() / norm)
        .collect()
}

pub(crate) fn random_unit(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Unit quaternion `(w, x, y, z)` for a rotation of `angle` about unit `axis`.
pub(crate) fn axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let (s, c) = (angle / 2.0).sin_cos();
    let q = [c, axis[0] * s, axis[1] * s, axis[2] * s];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn smoothed_noise_has_unit_variance() {
        let mut rng = rng_from_seed(4);
        let v = smooth_gaussian(&mut rng, 20_000, 5.0);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.1, "{mean}");
        assert!((var - 1.0).abs() < 0.15, "{var}");
        // neighbouring samples are strongly correlated
        let lag1 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (v.len() as f64 * var);
        assert!(lag1 > 0.9, "{lag1}");
    }
}
