use super::graph::{grad_of, Graph, Node, Op, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Fraction of the running statistic retained at each training step.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel running mean and (biased) variance used in inference mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }

    fn update(&mut self, mean: &[f64], var: &[f64]) {
        for c in 0..self.mean.len() {
            self.mean[c] = T::lit(BN_MOMENTUM * self.mean[c].as_f64() + (1.0 - BN_MOMENTUM) * mean[c]);
            self.var[c] = T::lit(BN_MOMENTUM * self.var[c].as_f64() + (1.0 - BN_MOMENTUM) * var[c]);
        }
    }
}

pub(crate) struct BnSaved<T> {
    x: Var,
    gamma: Var,
    beta: Var,
    outer: usize,
    channels: usize,
    inner: usize,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

#[derive(Clone, Copy)]
enum Layout {
    /// `[batch, C, T]`
    ChannelsFirst,
    /// `[..., C]`
    ChannelsLast,
}

impl<T: Scalar> Graph<T> {
    /// Batch normalisation of `x [batch, C, T]` in training mode: normalises each channel
    /// with statistics over `(batch, T)` and folds them into `running`.
    pub fn batchnorm1d_train(&mut self, x: Var, gamma: Var, beta: Var, running: &mut RunningStats<T>) -> Result<Var> {
        self.batchnorm_impl(x, gamma, beta, Layout::ChannelsFirst, Some(running), None)
    }

    /// Batch normalisation of `x [batch, C, T]` using stored running statistics.
    pub fn batchnorm1d_infer(&mut self, x: Var, gamma: Var, beta: Var, running: &RunningStats<T>) -> Result<Var> {
        self.batchnorm_impl(x, gamma, beta, Layout::ChannelsFirst, None, Some(running))
    }

    /// Channels-last variant (`[..., C]`, statistics over every leading position).
    pub fn batchnorm_last_train(&mut self, x: Var, gamma: Var, beta: Var, running: &mut RunningStats<T>) -> Result<Var> {
        self.batchnorm_impl(x, gamma, beta, Layout::ChannelsLast, Some(running), None)
    }

    pub fn batchnorm_last_infer(&mut self, x: Var, gamma: Var, beta: Var, running: &RunningStats<T>) -> Result<Var> {
        self.batchnorm_impl(x, gamma, beta, Layout::ChannelsLast, None, Some(running))
    }

    fn batchnorm_impl(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        layout: Layout,
        train: Option<&mut RunningStats<T>>,
        infer: Option<&RunningStats<T>>,
    ) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (outer, channels, inner) = match layout {
            Layout::ChannelsFirst => {
                if s.len() != 3 {
                    return Err(Error::Shape(format!("batchnorm1d expects [batch, C, T], got {s:?}")));
                }
                (s[0], s[1], s[2])
            }
            Layout::ChannelsLast => {
                let c = *s.last().unwrap();
                (s.iter().product::<usize>() / c, c, 1)
            }
        };
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(Error::Shape(format!(
                "batchnorm: gamma {:?} / beta {:?} do not match {channels} channels",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let count = outer * inner;
        let xv = self.value(x).data();
        let is_train = train.is_some();
        let (mean, var): (Vec<f64>, Vec<f64>) = if let Some(running) = train {
            if count < 2 {
                return Err(Error::DegenerateBatch(format!(
                    "training-mode batch norm needs at least 2 values per channel, got {count}"
                )));
            }
            let mut sum = vec![0.0f64; channels];
            let mut sq = vec![0.0f64; channels];
            for o in 0..outer {
                for c in 0..channels {
                    let base = (o * channels + c) * inner;
                    for &v in &xv[base..base + inner] {
                        sum[c] += v.as_f64();
                    }
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            for o in 0..outer {
                for c in 0..channels {
                    let base = (o * channels + c) * inner;
                    for &v in &xv[base..base + inner] {
                        let d = v.as_f64() - mean[c];
                        sq[c] += d * d;
                    }
                }
            }
            let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
            running.update(&mean, &var);
            (mean, var)
        } else {
            let r = infer.expect("inference statistics");
            if r.mean.len() != channels {
                return Err(Error::Shape(format!(
                    "batchnorm: running statistics hold {} channels, input has {channels}",
                    r.mean.len()
                )));
            }
            (r.mean.iter().map(|&v| v.as_f64()).collect(), r.var.iter().map(|&v| v.as_f64()).collect())
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + BN_EPS).sqrt())).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for c in 0..channels {
                let base = (o * channels + c) * inner;
                let (m, is) = (T::lit(mean[c]), inv_std[c]);
                for i in base..base + inner {
                    let h = (xv[i] - m) * is;
                    xhat[i] = h;
                    out[i] = gv[c] * h + bv[c];
                }
            }
        }
        let rg = self.needs_grad(&[x, gamma, beta]);
        let saved = BnSaved { x, gamma, beta, outer, channels, inner, xhat, inv_std, train: is_train };
        Ok(self.push(Tensor::new(s, out)?, Op::BatchNorm(saved), rg))
    }
}

pub(crate) fn batchnorm_backward<T: Scalar>(nodes: &[Node<T>], s: &BnSaved<T>, gout: &[T], grads: &mut [Option<Vec<T>>]) {
    let (outer, channels, inner) = (s.outer, s.channels, s.inner);
    let count = (outer * inner) as f64;
    let mut sum_dy = vec![0.0f64; channels];
    let mut sum_dy_xhat = vec![0.0f64; channels];
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            for i in base..base + inner {
                sum_dy[c] += gout[i].as_f64();
                sum_dy_xhat[c] += gout[i].as_f64() * s.xhat[i].as_f64();
            }
        }
    }
    if let Some(gb) = grad_of(nodes, grads, s.beta) {
        gb.iter_mut().zip(&sum_dy).for_each(|(a, &b)| *a += T::lit(b));
    }
    if let Some(gg) = grad_of(nodes, grads, s.gamma) {
        gg.iter_mut().zip(&sum_dy_xhat).for_each(|(a, &b)| *a += T::lit(b));
    }
    let gamma = nodes[s.gamma.0].value.data();
    if let Some(gx) = grad_of(nodes, grads, s.x) {
        for o in 0..outer {
            for c in 0..channels {
                let base = (o * channels + c) * inner;
                let k = gamma[c].as_f64() * s.inv_std[c].as_f64();
                for i in base..base + inner {
                    let d = if s.train {
                        k * (gout[i].as_f64() - sum_dy[c] / count - s.xhat[i].as_f64() * sum_dy_xhat[c] / count)
                    } else {
                        k * gout[i].as_f64()
                    };
                    gx[i] += T::lit(d);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(g: &mut Graph<f32>, x: Tensor) -> (Var, Var, Var) {
        let c = x.shape()[1];
        let x = g.input(x);
        let gamma = g.input(Tensor::full(&[c], 1.0));
        let beta = g.input(Tensor::zeros(&[c]));
        (x, gamma, beta)
    }

    #[test]
    fn train_mode_standardises_each_channel() {
        let data: Vec<f32> = (0..2 * 3 * 7).map(|i| ((i * 37) % 11) as f32 * 0.7 + (i / 14) as f32).collect();
        let mut g = Graph::<f32>::new();
        let (x, gamma, beta) = setup(&mut g, Tensor::new(vec![2, 3, 7], data).unwrap());
        let mut rs = RunningStats::new(3);
        let y = g.batchnorm1d_train(x, gamma, beta, &mut rs).unwrap();
        let yv = g.value(y).data();
        for c in 0..3 {
            let vals: Vec<f64> =
                (0..2).flat_map(|b| (0..7).map(move |t| (b, t))).map(|(b, t)| yv[(b * 3 + c) * 7 + t] as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4, "{mean}");
            assert!((var - 1.0).abs() < 1e-4, "{var}");
        }
        // running statistics moved a tenth of the way toward the batch statistics
        assert!(rs.mean.iter().all(|&m| m != 0.0));
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let mut g = Graph::<f32>::new();
        let (x, gamma, beta) = setup(&mut g, Tensor::full(&[2, 1, 5], 3.0));
        let mut rs = RunningStats::new(1);
        let y = g.batchnorm1d_train(x, gamma, beta, &mut rs).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_value_per_channel_is_degenerate_in_train_mode() {
        let mut g = Graph::<f32>::new();
        let (x, gamma, beta) = setup(&mut g, Tensor::full(&[1, 2, 1], 3.0));
        let mut rs = RunningStats::new(2);
        assert!(matches!(g.batchnorm1d_train(x, gamma, beta, &mut rs), Err(Error::DegenerateBatch(_))));
        // inference mode has no such restriction
        assert!(g.batchnorm1d_infer(x, gamma, beta, &rs).is_ok());
    }

    #[test]
    fn infer_mode_uses_running_statistics() {
        let mut g = Graph::<f32>::new();
        let (x, gamma, beta) = setup(&mut g, Tensor::new(vec![1, 1, 2], vec![3.0, 5.0]).unwrap());
        let rs = RunningStats { mean: vec![1.0], var: vec![4.0] };
        let y = g.batchnorm1d_infer(x, gamma, beta, &rs).unwrap();
        let expect = [(2.0 / (4.0 + BN_EPS).sqrt()) as f32, (4.0 / (4.0 + BN_EPS).sqrt()) as f32];
        for (a, b) in g.value(y).data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
