//! Central finite-difference checks of reverse-mode gradients.
//!
//! Every check reduces the output of a small graph to a scalar `L = Σ rᵢ yᵢ` with fixed
//! random weights `r`. The reverse-mode gradient of each input element is compared with
//! `(L(x+h) − L(x−h)) / 2h`. Checks run the engine instantiated in `f64`: the kernels
//! are the same generic code the `f32` models use, and the 64-bit forward keeps rounding
//! noise of the difference quotient far below the tolerance.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{scaled_dot_attention, AttentionParams, Graph, RunningStats, Tensor, Var};
use crate::error::Result;
use crate::seed::{rng_from_seed, Rng};

pub const FD_STEP: f64 = 1e-3;
pub const MAX_REL_ERROR: f64 = 1e-3;
/// Denominator floor of the relative error, so that exactly-zero gradients compare as 0.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub primitive: String,
    pub shapes: String,
    pub max_rel_error: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < MAX_REL_ERROR
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode and finite-difference gradients of `build` with respect to
/// every element of every input. Returns the largest relative error.
pub fn check<F>(inputs: &[Tensor<f64>], build: F) -> Result<(f64, usize)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let n = g.value(out).numel();
    let mut rng = rng_from_seed(0x5eed ^ n as u64);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = g.weighted_sum(out, weights.clone())?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.variable(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).data().iter().zip(&weights).map(|(&y, &w)| y * w).sum())
    };

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let h = ((orig + FD_STEP) - (orig - FD_STEP)) / 2.0;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_error(grad[j], numeric));
            checked += 1;
        }
    }
    Ok((worst, checked))
}

fn normal(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}

/// Normal samples kept at least `gap` away from zero, so ReLU kinks are not straddled by ±h.
fn away_from_zero(rng: &mut Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    let mut t = normal(rng, shape);
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = if *v < 0.0 { -gap - v.abs() } else { gap + *v };
        }
    }
    t
}

fn probabilities(rng: &mut Rng, n: usize, classes: usize) -> Tensor<f64> {
    let mut data = Vec::with_capacity(n * classes);
    for _ in 0..n {
        let row: Vec<f64> = (0..classes).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / s));
    }
    Tensor::new(vec![n, classes], data).expect("valid shape")
}

fn report(primitive: &str, shapes: String, res: (f64, usize)) -> GradCheckReport {
    GradCheckReport { primitive: primitive.into(), shapes, max_rel_error: res.0, elements_checked: res.1 }
}

/// Gradient checks of every differentiable primitive on three random shapes each.
pub fn standard_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();

    for &(m, k, n) in &[(4, 3, 2), (1, 5, 3), (3, 2, 6)] {
        let ins = [normal(&mut rng, &[m, k]), normal(&mut rng, &[k, n])];
        out.push(report("matmul", format!("[{m},{k}]x[{k},{n}]"), check(&ins, |g, v| g.matmul(v[0], v[1]))?));
    }
    for &(b, m, k, n, ta, tb) in &[(2, 3, 4, 2, false, true), (1, 2, 3, 4, true, false), (3, 2, 2, 3, true, true)] {
        let sa = if ta { [b, k, m] } else { [b, m, k] };
        let sb = if tb { [b, n, k] } else { [b, k, n] };
        let ins = [normal(&mut rng, &sa), normal(&mut rng, &sb)];
        out.push(report(
            "bmm",
            format!("{sa:?}(t={ta})x{sb:?}(t={tb})"),
            check(&ins, |g, v| g.bmm(v[0], v[1], ta, tb))?,
        ));
    }
    for &(b, cin, cout, t, k) in &[(2, 3, 4, 16, 5), (1, 2, 3, 9, 8), (3, 1, 2, 6, 3)] {
        let ins = [normal(&mut rng, &[b, cin, t]), normal(&mut rng, &[cout, cin, k]), normal(&mut rng, &[cout])];
        out.push(report(
            "conv1d",
            format!("x[{b},{cin},{t}] w[{cout},{cin},{k}]"),
            check(&ins, |g, v| g.conv1d(v[0], v[1], v[2]))?,
        ));
    }
    for &(b, c, t) in &[(2, 3, 5), (4, 2, 3), (1, 4, 6)] {
        let ins = [normal(&mut rng, &[b, c, t]), normal(&mut rng, &[c]), normal(&mut rng, &[c])];
        out.push(report(
            "batchnorm1d[train]",
            format!("[{b},{c},{t}]"),
            check(&ins, |g, v| {
                let mut rs = RunningStats::new(c);
                g.batchnorm1d_train(v[0], v[1], v[2], &mut rs)
            })?,
        ));
        let rs = RunningStats {
            mean: (0..c).map(|i| 0.1 * i as f64).collect(),
            var: (0..c).map(|i| 0.5 + 0.25 * i as f64).collect(),
        };
        out.push(report(
            "batchnorm1d[infer]",
            format!("[{b},{c},{t}]"),
            check(&ins, |g, v| g.batchnorm1d_infer(v[0], v[1], v[2], &rs))?,
        ));
    }
    for &(rows, c) in &[(6, 3), (10, 2), (4, 5)] {
        let ins = [normal(&mut rng, &[rows, c]), normal(&mut rng, &[c]), normal(&mut rng, &[c])];
        out.push(report(
            "batchnorm[channels-last,train]",
            format!("[{rows},{c}]"),
            check(&ins, |g, v| {
                let mut rs = RunningStats::new(c);
                g.batchnorm_last_train(v[0], v[1], v[2], &mut rs)
            })?,
        ));
    }
    for shape in [vec![7], vec![3, 4], vec![2, 3, 4]] {
        let ins = [away_from_zero(&mut rng, &shape, 0.05)];
        out.push(report("relu", format!("{shape:?}"), check(&ins, |g, v| Ok(g.relu(v[0])))?));
    }
    for shape in [vec![1, 2], vec![4, 3], vec![2, 3, 5]] {
        let ins = [normal(&mut rng, &shape)];
        out.push(report("softmax", format!("{shape:?}"), check(&ins, |g, v| g.softmax(v[0]))?));
    }
    for &(b, c, t) in &[(1, 1, 4), (2, 3, 5), (3, 2, 7)] {
        let ins = [normal(&mut rng, &[b, c, t])];
        out.push(report("global_avg_pool", format!("[{b},{c},{t}]"), check(&ins, |g, v| g.global_avg_pool(v[0]))?));
        out.push(report("mean_axis(1)", format!("[{b},{c},{t}]"), check(&ins, |g, v| g.mean_axis(v[0], 1))?));
    }
    for shape in [vec![3], vec![2, 4], vec![2, 2, 3]] {
        let ins = [normal(&mut rng, &shape), normal(&mut rng, &shape)];
        out.push(report("add", format!("{shape:?}"), check(&ins, |g, v| g.add(v[0], v[1]))?));
        out.push(report("scale", format!("{shape:?}"), check(&ins[..1], |g, v| Ok(g.scale(v[0], -1.7)))?));
        out.push(report("reduce_mean", format!("{shape:?}"), check(&ins[..1], |g, v| Ok(g.reduce_mean(v[0])))?));
        let n: usize = shape.iter().product();
        out.push(report("reshape", format!("{shape:?}->[{n}]"), check(&ins[..1], |g, v| g.reshape(v[0], &[n]))?));
    }
    for &(r, c) in &[(2, 3), (5, 1), (3, 4)] {
        let ins = [normal(&mut rng, &[r, c]), normal(&mut rng, &[c])];
        out.push(report("add_bias", format!("[{r},{c}]+[{c}]"), check(&ins, |g, v| g.add_bias(v[0], v[1]))?));
    }
    for &(b, x, y) in &[(1, 2, 3), (2, 4, 1), (3, 2, 2)] {
        let ins = [normal(&mut rng, &[b, x, y])];
        out.push(report("transpose12", format!("[{b},{x},{y}]"), check(&ins, |g, v| g.transpose12(v[0]))?));
    }
    for &(b, l1, l2, d) in &[(1, 2, 3, 2), (2, 1, 1, 3), (2, 3, 2, 1)] {
        let ins = [normal(&mut rng, &[b, l1, d]), normal(&mut rng, &[b, l2, d])];
        out.push(report("concat", format!("[{b},{l1}|{l2},{d}]"), check(&ins, |g, v| g.concat(&[v[0], v[1]], 1))?));
    }
    for &(b, t, d, dk) in &[(1, 4, 8, 2), (2, 3, 4, 1), (1, 5, 6, 3)] {
        let ins = [
            normal(&mut rng, &[b, t, d]),
            normal(&mut rng, &[d, dk]),
            normal(&mut rng, &[d, dk]),
            normal(&mut rng, &[d, d]),
            normal(&mut rng, &[d]),
        ];
        out.push(report(
            "scaled_dot_attention",
            format!("x[{b},{t},{d}] dk={dk}"),
            check(&ins, |g, v| {
                let p = AttentionParams { wq: v[1], wk: v[2], wv: v[3], bv: Some(v[4]) };
                Ok(scaled_dot_attention(g, v[0], &p)?.output)
            })?,
        ));
    }
    for &(n, c) in &[(1, 2), (4, 2), (3, 3)] {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 1) % c).collect();
        let ins = [probabilities(&mut rng, n, c)];
        out.push(report("bce", format!("[{n},{c}]"), check(&ins, |g, v| g.bce(v[0], &labels, 1e-7))?));
        let logits = [normal(&mut rng, &[n, c])];
        out.push(report(
            "softmax+bce head",
            format!("[{n},{c}]"),
            check(&logits, |g, v| {
                let p = g.softmax(v[0])?;
                g.bce(p, &labels, 1e-7)
            })?,
        ));
    }
    // conv -> batch norm -> relu, end to end
    for &(b, cin, cout, t, k) in &[(2, 2, 3, 8, 5), (3, 1, 2, 6, 3), (2, 3, 2, 10, 8)] {
        let ins = [
            normal(&mut rng, &[b, cin, t]),
            normal(&mut rng, &[cout, cin, k]),
            normal(&mut rng, &[cout]),
            normal(&mut rng, &[cout]),
            normal(&mut rng, &[cout]),
        ];
        out.push(report(
            "conv1d+bn+relu block",
            format!("x[{b},{cin},{t}] k={k} f={cout}"),
            check(&ins, |g, v| {
                let mut rs = RunningStats::new(cout);
                let y = g.conv1d(v[0], v[1], v[2])?;
                let y = g.batchnorm1d_train(y, v[3], v[4], &mut rs)?;
                Ok(g.relu(y))
            })?,
        ));
    }
    Ok(out)
}
