use super::graph::{Graph, Var};
use super::Scalar;
use crate::error::{Error, Result};

/// Projection weights of one single-head self-attention layer, already recorded in a graph.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    /// `[d, d_k]`
    pub wq: Var,
    /// `[d, d_k]`
    pub wk: Var,
    /// `[d, d]`
    pub wv: Var,
    /// `[d]`
    pub bv: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    /// `[batch, T, d]`
    pub output: Var,
    /// Row-stochastic attention weights `[batch, T, T]`.
    pub weights: Var,
}

/// Single-head scaled dot-product self-attention over `x [batch, T, d]`:
/// `softmax(Q Kᵀ / sqrt(d_k)) V`.
pub fn scaled_dot_attention<T: Scalar>(g: &mut Graph<T>, x: Var, p: &AttentionParams) -> Result<AttentionOutput> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 3 {
        return Err(Error::Shape(format!("attention expects [batch, T, d], got {xs:?}")));
    }
    let dk = g.shape(p.wq)[1];
    if g.shape(p.wk)[1] != dk {
        return Err(Error::Shape(format!(
            "attention: query width {dk} differs from key width {}",
            g.shape(p.wk)[1]
        )));
    }
    let q = g.linear(x, p.wq, None)?;
    let k = g.linear(x, p.wk, None)?;
    let v = g.linear(x, p.wv, p.bv)?;
    let scores = g.bmm(q, k, false, true)?;
    let scores = g.scale(scores, T::lit(1.0 / (dk as f64).sqrt()));
    let weights = g.softmax(scores)?;
    let output = g.bmm(weights, v, false, false)?;
    Ok(AttentionOutput { output, weights })
}
