use super::gemm::Scalar;
use super::graph::{grad_of, Graph, Node, Op, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// `(left, right)` zero padding that preserves length for kernel size `k`.
/// Even kernels put the extra zero on the right.
pub fn same_padding(k: usize) -> (usize, usize) {
    let left = (k - 1) / 2;
    (left, k - 1 - left)
}

pub(crate) struct ConvSaved<T> {
    x: Var,
    w: Var,
    b: Var,
    batch: usize,
    cin: usize,
    cout: usize,
    k: usize,
    t: usize,
    pad_left: usize,
    /// im2col matrix `[cin*k, batch*t]`
    col: Vec<T>,
}

fn im2col<T: Scalar>(x: &[T], batch: usize, cin: usize, t: usize, k: usize, pad_left: usize) -> Vec<T> {
    let cols = batch * t;
    let mut col = vec![T::zero(); cin * k * cols];
    for ci in 0..cin {
        for j in 0..k {
            let row = &mut col[(ci * k + j) * cols..(ci * k + j + 1) * cols];
            for b in 0..batch {
                let src = &x[(b * cin + ci) * t..(b * cin + ci + 1) * t];
                let dst = &mut row[b * t..(b + 1) * t];
                // dst[tt] = src[tt + j - pad_left]
                let lo = pad_left.saturating_sub(j);
                let hi = (t + pad_left).saturating_sub(j).min(t);
                if lo < hi {
                    dst[lo..hi].copy_from_slice(&src[lo + j - pad_left..hi + j - pad_left]);
                }
            }
        }
    }
    col
}

impl<T: Scalar> Graph<T> {
    /// Stride-1 cross-correlation with zero "same" padding.
    ///
    /// `x [batch, cin, T]`, `w [cout, cin, k]`, `b [cout]` -> `[batch, cout, T]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(Error::Shape(format!(
                "conv1d: input {sx:?}, weight {sw:?}, bias {sb:?} are incompatible"
            )));
        }
        let (batch, cin, t) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        let (pad_left, pad_right) = same_padding(k);
        if k > t + pad_left + pad_right {
            return Err(Error::Config(format!("conv1d: kernel {k} exceeds padded length")));
        }
        let col = im2col(self.value(x).data(), batch, cin, t, k, pad_left);
        let cols = batch * t;
        let mut tmp = vec![T::zero(); cout * cols];
        T::gemm(cout, cin * k, cols, self.value(w).data(), false, &col, false, T::zero(), &mut tmp);
        let bias = self.value(b).data();
        let mut out = vec![T::zero(); batch * cout * t];
        for co in 0..cout {
            for bb in 0..batch {
                let src = &tmp[co * cols + bb * t..co * cols + (bb + 1) * t];
                let dst = &mut out[(bb * cout + co) * t..(bb * cout + co + 1) * t];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + bias[co]);
            }
        }
        let rg = self.needs_grad(&[x, w, b]);
        let saved = ConvSaved { x, w, b, batch, cin, cout, k, t, pad_left, col };
        Ok(self.push(Tensor::new(vec![batch, cout, t], out)?, Op::Conv1d(saved), rg))
    }
}

pub(crate) fn conv1d_backward<T: Scalar>(nodes: &[Node<T>], s: &ConvSaved<T>, gout: &[T], grads: &mut [Option<Vec<T>>]) {
    let (batch, cin, cout, k, t) = (s.batch, s.cin, s.cout, s.k, s.t);
    let cols = batch * t;
    // gout [batch, cout, t] -> dtmp [cout, batch*t]
    let mut dtmp = vec![T::zero(); cout * cols];
    for bb in 0..batch {
        for co in 0..cout {
            dtmp[co * cols + bb * t..co * cols + (bb + 1) * t]
                .copy_from_slice(&gout[(bb * cout + co) * t..(bb * cout + co + 1) * t]);
        }
    }
    if let Some(gb) = grad_of(nodes, grads, s.b) {
        for co in 0..cout {
            let sum: f64 = dtmp[co * cols..(co + 1) * cols].iter().map(|&v| v.as_f64()).sum();
            gb[co] += T::lit(sum);
        }
    }
    if let Some(gw) = grad_of(nodes, grads, s.w) {
        T::gemm(cout, cols, cin * k, &dtmp, false, &s.col, true, T::one(), gw);
    }
    let wv = nodes[s.w.0].value.data();
    if let Some(gx) = grad_of(nodes, grads, s.x) {
        let mut dcol = vec![T::zero(); cin * k * cols];
        T::gemm(cin * k, cout, cols, wv, true, &dtmp, false, T::zero(), &mut dcol);
        for ci in 0..cin {
            for j in 0..k {
                let row = &dcol[(ci * k + j) * cols..(ci * k + j + 1) * cols];
                for bb in 0..batch {
                    let src = &row[bb * t..(bb + 1) * t];
                    let dst = &mut gx[(bb * cin + ci) * t..(bb * cin + ci + 1) * t];
                    let lo = s.pad_left.saturating_sub(j);
                    let hi = (t + s.pad_left).saturating_sub(j).min(t);
                    for tt in lo..hi {
                        dst[tt + j - s.pad_left] += src[tt];
                    }
                }
            }
        }
    }
}
