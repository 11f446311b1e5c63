//! Deterministic tensor arithmetic with reverse-mode gradient accumulation.
//!
//! A [`Graph`] records every operation as it executes (define-by-run) and
//! replays the recording in reverse to accumulate gradients into the leaves
//! that asked for them. Values are stored row-major in flat buffers; ranks 1
//! and 2 cover everything the networks need, with rank 3 reserved for
//! convolution kernel stacks.
//!
//! Element type is generic: training runs in `f32`, gradient verification in
//! `f64`. A graph and its tensors are confined to one thread; independent
//! graphs on independent threads share nothing.

pub mod check;
pub mod linalg;

use num_traits::Float;
use thiserror::Error;

/// Element type of a computation graph.
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + 'static
{
    /// Shorthand for converting literals.
    fn lit(v: f64) -> Self {
        num_traits::NumCast::from(v).expect("literal representable")
    }
    fn dbl(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: sequence length {len} below minimum {min}")]
    TooShort {
        op: &'static str,
        len: usize,
        min: usize,
    },
    #[error("{op}: {msg}")]
    Config { op: &'static str, msg: String },
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a tensor inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// A node in the graph: values plus (optionally) an accumulated gradient.
#[derive(Debug, Clone)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    values: Vec<F>,
    requires_grad: bool,
    grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn values(&self) -> &[F] {
        &self.values
    }
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }
    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone)]
enum Op<F: Scalar> {
    Leaf,
    Affine {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    MatMul {
        a: TensorId,
        b: TensorId,
    },
    /// a @ b^T
    MatMulNT {
        a: TensorId,
        b: TensorId,
    },
    Conv1dSame {
        x: TensorId,
        kernels: TensorId,
        bias: TensorId,
        /// im2col buffer [T, k*C_in], cached for the backward pass
        cols: Vec<F>,
    },
    AvgPoolTime {
        x: TensorId,
        factor: usize,
    },
    GlobalAvgPoolTime {
        x: TensorId,
    },
    Relu {
        x: TensorId,
    },
    Tanh {
        x: TensorId,
    },
    Exp {
        x: TensorId,
    },
    Abs {
        x: TensorId,
    },
    SoftmaxLastDim {
        x: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Sub {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    Scale {
        x: TensorId,
        c: F,
    },
    AddScalar {
        x: TensorId,
    },
    ConcatChannels {
        parts: Vec<TensorId>,
    },
    SliceChannels {
        x: TensorId,
        from: usize,
        to: usize,
    },
    Dropout {
        x: TensorId,
        /// survivor entries hold 1/(1-rate), dropped entries hold 0
        mask: Vec<F>,
    },
    LayerNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        xhat: Vec<F>,
        inv_std: Vec<F>,
    },
    TileRows {
        v: TensorId,
        rows: usize,
    },
    Reshape {
        x: TensorId,
    },
    SumAll {
        x: TensorId,
    },
    MeanAll {
        x: TensorId,
    },
}

/// Interpret a rank-1 or rank-2 shape as (rows, cols).
fn as_rows(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [n] => Some((1, *n)),
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// A define-by-run computation graph.
pub struct Graph<F: Scalar> {
    nodes: Vec<Tensor<F>>,
    ops: Vec<Op<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<F> {
        &self.nodes[id.0]
    }

    pub fn values(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn scalar_value(&self, id: TensorId) -> F {
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<F>, requires_grad: bool, op: Op<F>) -> TensorId {
        debug_assert_eq!(numel(&shape), values.len());
        self.nodes.push(Tensor {
            shape,
            values,
            requires_grad,
            grad: None,
        });
        self.ops.push(op);
        TensorId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Register a leaf tensor.
    pub fn leaf(&mut self, values: Vec<F>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Config {
                op: "leaf",
                msg: format!("shape extents must be positive, got {shape:?}"),
            });
        }
        if numel(&shape) != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "leaf",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(self.push(shape, values, requires_grad, Op::Leaf))
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, values: Vec<F>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(values, shape, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, values: Vec<F>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(values, shape, true)
    }

    /// y = x W + b. x may be rank 1 ([in]) or rank 2 ([rows, in]).
    pub fn affine(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let (rows, c_in) = as_rows(self.shape(x)).ok_or_else(|| TensorError::Config {
            op: "affine",
            msg: format!("input must be rank 1 or 2, got {:?}", self.shape(x)),
        })?;
        let wt = self.shape(w);
        if wt.len() != 2 || wt[0] != c_in {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                left: self.shape(x).to_vec(),
                right: wt.to_vec(),
            });
        }
        let c_out = wt[1];
        if self.shape(b) != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                left: vec![c_out],
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![F::zero(); rows * c_out];
        for r in 0..rows {
            out[r * c_out..(r + 1) * c_out].copy_from_slice(&self.values(b)[..]);
        }
        linalg::matmul_nn(self.values(x), self.values(w), &mut out, rows, c_in, c_out);
        let shape = if self.shape(x).len() == 1 {
            vec![c_out]
        } else {
            vec![rows, c_out]
        };
        let rg = self.needs_grad(&[x, w, b]);
        Ok(self.push(shape, out, rg, Op::Affine { x, w, b }))
    }

    /// a [m,k] @ b [k,n] -> [m,n]
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        linalg::matmul_nn(self.values(a), self.values(b), &mut out, m, k, n);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul { a, b }))
    }

    /// a [m,k] @ b^T, b [n,k] -> [m,n]
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                left: sa,
                right: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![F::zero(); m * n];
        linalg::matmul_nt(self.values(a), self.values(b), &mut out, m, k, n);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::MatMulNT { a, b }))
    }

    /// Same-length 1-D convolution over the time axis with zero padding.
    /// x: [T, C_in], kernels: [k, C_in, C_out] with odd k, bias: [C_out].
    pub fn conv1d_same(&mut self, x: TensorId, kernels: TensorId, bias: TensorId) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernels).to_vec();
        if sx.len() != 2 || sk.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_same",
                left: sx,
                right: sk,
            });
        }
        let (t, c_in) = (sx[0], sx[1]);
        let (k, kc_in, c_out) = (sk[0], sk[1], sk[2]);
        if k % 2 == 0 {
            return Err(TensorError::Config {
                op: "conv1d_same",
                msg: format!("kernel width must be odd, got {k}"),
            });
        }
        if kc_in != c_in {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_same",
                left: sx,
                right: sk,
            });
        }
        if self.shape(bias) != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_same",
                left: vec![c_out],
                right: self.shape(bias).to_vec(),
            });
        }
        let pad = (k - 1) / 2;
        let mut cols = vec![F::zero(); t * k * c_in];
        {
            let xv = self.values(x);
            for ti in 0..t {
                for dt in 0..k {
                    let src = ti as isize + dt as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let src = src as usize;
                    let dst = ti * k * c_in + dt * c_in;
                    cols[dst..dst + c_in].copy_from_slice(&xv[src * c_in..(src + 1) * c_in]);
                }
            }
        }
        let mut out = vec![F::zero(); t * c_out];
        for ti in 0..t {
            out[ti * c_out..(ti + 1) * c_out].copy_from_slice(self.values(bias));
        }
        linalg::matmul_nn(&cols, self.values(kernels), &mut out, t, k * c_in, c_out);
        let rg = self.needs_grad(&[x, kernels, bias]);
        Ok(self.push(
            vec![t, c_out],
            out,
            rg,
            Op::Conv1dSame {
                x,
                kernels,
                bias,
                cols,
            },
        ))
    }

    /// Non-overlapping mean pooling along time; a trailing remainder shorter
    /// than `factor` is dropped.
    pub fn avg_pool_time(&mut self, x: TensorId, factor: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(TensorError::Config {
                op: "avg_pool_time",
                msg: format!("input must be rank 2, got {sx:?}"),
            });
        }
        if factor < 1 {
            return Err(TensorError::Config {
                op: "avg_pool_time",
                msg: "factor must be >= 1".into(),
            });
        }
        let (t, c) = (sx[0], sx[1]);
        if t < factor {
            return Err(TensorError::TooShort {
                op: "avg_pool_time",
                len: t,
                min: factor,
            });
        }
        let t_out = t / factor;
        let inv = F::lit(1.0 / factor as f64);
        let xv = self.values(x);
        let mut out = vec![F::zero(); t_out * c];
        for u in 0..t_out {
            for j in 0..factor {
                let row = &xv[(u * factor + j) * c..(u * factor + j + 1) * c];
                for ci in 0..c {
                    out[u * c + ci] += row[ci];
                }
            }
            for ci in 0..c {
                out[u * c + ci] *= inv;
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(vec![t_out, c], out, rg, Op::AvgPoolTime { x, factor }))
    }

    /// Per-channel mean over all frames: [T, C] -> [C].
    ///
    /// Each channel is summed in value-sorted order so the result is exactly
    /// invariant under any permutation of the input frames.
    pub fn global_avg_pool_time(&mut self, x: TensorId) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(TensorError::Config {
                op: "global_avg_pool_time",
                msg: format!("input must be rank 2, got {sx:?}"),
            });
        }
        let (t, c) = (sx[0], sx[1]);
        if t < 1 {
            return Err(TensorError::TooShort {
                op: "global_avg_pool_time",
                len: t,
                min: 1,
            });
        }
        let inv = F::lit(1.0 / t as f64);
        let xv = self.values(x);
        let mut out = vec![F::zero(); c];
        let mut column = vec![F::zero(); t];
        for ci in 0..c {
            for ti in 0..t {
                column[ti] = xv[ti * c + ci];
            }
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let mut acc = F::zero();
            for &v in &column {
                acc += v;
            }
            out[ci] = acc * inv;
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(vec![c], out, rg, Op::GlobalAvgPoolTime { x }))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        let out: Vec<F> = self
            .values(x)
            .iter()
            .map(|&v| if v > F::zero() { v } else { F::zero() })
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Relu { x }))
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        let out: Vec<F> = self.values(x).iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Tanh { x }))
    }

    pub fn exp(&mut self, x: TensorId) -> Result<TensorId> {
        let out: Vec<F> = self.values(x).iter().map(|&v| v.exp()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Exp { x }))
    }

    pub fn abs(&mut self, x: TensorId) -> Result<TensorId> {
        let out: Vec<F> = self.values(x).iter().map(|&v| v.abs()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Abs { x }))
    }

    /// Row-wise softmax over the last dimension (rank 1 or 2).
    pub fn softmax_lastdim(&mut self, x: TensorId) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let (rows, cols) = as_rows(&shape).ok_or_else(|| TensorError::Config {
            op: "softmax_lastdim",
            msg: format!("input must be rank 1 or 2, got {shape:?}"),
        })?;
        let xv = self.values(x);
        let mut out = vec![F::zero(); rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o /= sum;
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::SoftmaxLastDim { x }))
    }

    fn elementwise_pair(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("add", a, b)?;
        let out: Vec<F> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("sub", a, b)?;
        let out: Vec<F> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("mul", a, b)?;
        let out: Vec<F> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: TensorId, c: F) -> Result<TensorId> {
        let out: Vec<F> = self.values(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Scale { x, c }))
    }

    pub fn add_scalar(&mut self, x: TensorId, c: F) -> Result<TensorId> {
        let out: Vec<F> = self.values(x).iter().map(|&v| v + c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::AddScalar { x }))
    }

    /// Concatenate along the channel (last) dimension. All parts must share
    /// rank and row count.
    pub fn concat_channels(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(TensorError::Config {
                op: "concat_channels",
                msg: "at least one part required".into(),
            });
        }
        let first_shape = self.shape(parts[0]).to_vec();
        let rank = first_shape.len();
        let (rows, _) = as_rows(&first_shape).ok_or_else(|| TensorError::Config {
            op: "concat_channels",
            msg: format!("parts must be rank 1 or 2, got {first_shape:?}"),
        })?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let sp = self.shape(p);
            let (r, c) = as_rows(sp).ok_or_else(|| TensorError::Config {
                op: "concat_channels",
                msg: format!("parts must be rank 1 or 2, got {sp:?}"),
            })?;
            if r != rows || sp.len() != rank {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    left: first_shape.clone(),
                    right: sp.to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![F::zero(); rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.values(p);
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&pv[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let rg = self.needs_grad(parts);
        Ok(self.push(
            shape,
            out,
            rg,
            Op::ConcatChannels {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Select channels [from, to) of a rank-1 or rank-2 tensor.
    pub fn slice_channels(&mut self, x: TensorId, from: usize, to: usize) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let (rows, cols) = as_rows(&shape).ok_or_else(|| TensorError::Config {
            op: "slice_channels",
            msg: format!("input must be rank 1 or 2, got {shape:?}"),
        })?;
        if from >= to || to > cols {
            return Err(TensorError::Config {
                op: "slice_channels",
                msg: format!("invalid channel range {from}..{to} for width {cols}"),
            });
        }
        let w = to - from;
        let xv = self.values(x);
        let mut out = vec![F::zero(); rows * w];
        for r in 0..rows {
            out[r * w..(r + 1) * w].copy_from_slice(&xv[r * cols + from..r * cols + to]);
        }
        let out_shape = if shape.len() == 1 { vec![w] } else { vec![rows, w] };
        let rg = self.needs_grad(&[x]);
        Ok(self.push(out_shape, out, rg, Op::SliceChannels { x, from, to }))
    }

    /// Inverted dropout. Identity at inference or when rate is zero.
    pub fn dropout<R: rand::Rng>(
        &mut self,
        x: TensorId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config {
                op: "dropout",
                msg: format!("rate must be in [0, 1), got {rate}"),
            });
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = F::lit(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..self.tensor(x).numel())
            .map(|_| {
                if rng.random::<f64>() >= rate {
                    keep_scale
                } else {
                    F::zero()
                }
            })
            .collect();
        let out: Vec<F> = self
            .values(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Dropout { x, mask }))
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: TensorId, gamma: TensorId, beta: TensorId) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let (rows, cols) = as_rows(&shape).ok_or_else(|| TensorError::Config {
            op: "layer_norm",
            msg: format!("input must be rank 1 or 2, got {shape:?}"),
        })?;
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: shape,
                right: self.shape(gamma).to_vec(),
            });
        }
        let eps = F::lit(1e-5);
        let xv = self.values(x);
        let gv = self.values(gamma);
        let bv = self.values(beta);
        let mut out = vec![F::zero(); rows * cols];
        let mut xhat = vec![F::zero(); rows * cols];
        let mut inv_std = vec![F::zero(); rows];
        let inv_c = F::lit(1.0 / cols as f64);
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mut mean = F::zero();
            for &v in row {
                mean += v;
            }
            mean *= inv_c;
            let mut var = F::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_c;
            let istd = (var + eps).sqrt().recip();
            inv_std[r] = istd;
            for c in 0..cols {
                let h = (row[c] - mean) * istd;
                xhat[r * cols + c] = h;
                out[r * cols + c] = gv[c] * h + bv[c];
            }
        }
        let rg = self.needs_grad(&[x, gamma, beta]);
        Ok(self.push(
            shape,
            out,
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Broadcast a vector [C] to [rows, C].
    pub fn tile_rows(&mut self, v: TensorId, rows: usize) -> Result<TensorId> {
        let sv = self.shape(v).to_vec();
        if sv.len() != 1 {
            return Err(TensorError::Config {
                op: "tile_rows",
                msg: format!("input must be rank 1, got {sv:?}"),
            });
        }
        if rows == 0 {
            return Err(TensorError::TooShort {
                op: "tile_rows",
                len: 0,
                min: 1,
            });
        }
        let c = sv[0];
        let vv = self.values(v);
        let mut out = vec![F::zero(); rows * c];
        for r in 0..rows {
            out[r * c..(r + 1) * c].copy_from_slice(vv);
        }
        let rg = self.needs_grad(&[v]);
        Ok(self.push(vec![rows, c], out, rg, Op::TileRows { v, rows }))
    }

    /// Reinterpret the value buffer under a new shape with equal element count.
    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) || numel(&shape) != self.tensor(x).numel()
        {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape,
            });
        }
        let values = self.values(x).to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, values, rg, Op::Reshape { x }))
    }

    /// Sum of all elements -> scalar [1].
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let mut acc = F::zero();
        for &v in self.values(x) {
            acc += v;
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(vec![1], vec![acc], rg, Op::SumAll { x }))
    }

    /// Mean of all elements -> scalar [1].
    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.tensor(x).numel();
        let mut acc = F::zero();
        for &v in self.values(x) {
            acc += v;
        }
        acc *= F::lit(1.0 / n as f64);
        let rg = self.needs_grad(&[x]);
        Ok(self.push(vec![1], vec![acc], rg, Op::MeanAll { x }))
    }

    /// Reverse-mode gradient accumulation from a scalar loss into every
    /// reachable leaf with `requires_grad`.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.tensor(loss).numel() != 1 {
            return Err(TensorError::Contract {
                op: "backward",
                msg: format!(
                    "loss must be a scalar, got shape {:?}",
                    self.shape(loss)
                ),
            });
        }
        self.accumulate(loss, vec![F::one()]);
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let d_out = match &self.nodes[i].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            let contribs = self.vjp(i, &d_out);
            for (id, g) in contribs {
                self.accumulate(id, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, g: Vec<F>) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(&g) {
                    *e += *v;
                }
            }
            None => node.grad = Some(g),
        }
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Vector-Jacobian product of node `i` given its output gradient.
    fn vjp(&self, i: usize, d: &[F]) -> Vec<(TensorId, Vec<F>)> {
        let mut out: Vec<(TensorId, Vec<F>)> = Vec::new();
        match &self.ops[i] {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (rows, c_in) = as_rows(self.shape(*x)).unwrap();
                let c_out = self.shape(*w)[1];
                if self.rg(*x) {
                    let mut dx = vec![F::zero(); rows * c_in];
                    linalg::matmul_nt(d, self.values(*w), &mut dx, rows, c_out, c_in);
                    out.push((*x, dx));
                }
                if self.rg(*w) {
                    let mut dw = vec![F::zero(); c_in * c_out];
                    linalg::matmul_tn(self.values(*x), d, &mut dw, rows, c_in, c_out);
                    out.push((*w, dw));
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); c_out];
                    for r in 0..rows {
                        for c in 0..c_out {
                            db[c] += d[r * c_out + c];
                        }
                    }
                    out.push((*b, db));
                }
            }
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    let mut da = vec![F::zero(); m * k];
                    linalg::matmul_nt(d, self.values(*b), &mut da, m, n, k);
                    out.push((*a, da));
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); k * n];
                    linalg::matmul_tn(self.values(*a), d, &mut db, m, k, n);
                    out.push((*b, db));
                }
            }
            Op::MatMulNT { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.rg(*a) {
                    let mut da = vec![F::zero(); m * k];
                    linalg::matmul_nn(d, self.values(*b), &mut da, m, n, k);
                    out.push((*a, da));
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); n * k];
                    linalg::matmul_tn(d, self.values(*a), &mut db, m, n, k);
                    out.push((*b, db));
                }
            }
            Op::Conv1dSame {
                x,
                kernels,
                bias,
                cols,
            } => {
                let (t, c_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                let (k, c_out) = (self.shape(*kernels)[0], self.shape(*kernels)[2]);
                let pad = (k - 1) / 2;
                if self.rg(*kernels) {
                    let mut dk = vec![F::zero(); k * c_in * c_out];
                    linalg::matmul_tn(cols, d, &mut dk, t, k * c_in, c_out);
                    out.push((*kernels, dk));
                }
                if self.rg(*bias) {
                    let mut db = vec![F::zero(); c_out];
                    for ti in 0..t {
                        for c in 0..c_out {
                            db[c] += d[ti * c_out + c];
                        }
                    }
                    out.push((*bias, db));
                }
                if self.rg(*x) {
                    let mut dcols = vec![F::zero(); t * k * c_in];
                    linalg::matmul_nt(d, self.values(*kernels), &mut dcols, t, c_out, k * c_in);
                    let mut dx = vec![F::zero(); t * c_in];
                    for ti in 0..t {
                        for dt in 0..k {
                            let src = ti as isize + dt as isize - pad as isize;
                            if src < 0 || src >= t as isize {
                                continue;
                            }
                            let src = src as usize;
                            let col = &dcols[ti * k * c_in + dt * c_in..ti * k * c_in + (dt + 1) * c_in];
                            for ci in 0..c_in {
                                dx[src * c_in + ci] += col[ci];
                            }
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::AvgPoolTime { x, factor } => {
                if self.rg(*x) {
                    let (t, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let t_out = t / factor;
                    let inv = F::lit(1.0 / *factor as f64);
                    let mut dx = vec![F::zero(); t * c];
                    for u in 0..t_out {
                        for j in 0..*factor {
                            for ci in 0..c {
                                dx[(u * factor + j) * c + ci] = d[u * c + ci] * inv;
                            }
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::GlobalAvgPoolTime { x } => {
                if self.rg(*x) {
                    let (t, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let inv = F::lit(1.0 / t as f64);
                    let mut dx = vec![F::zero(); t * c];
                    for ti in 0..t {
                        for ci in 0..c {
                            dx[ti * c + ci] = d[ci] * inv;
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Relu { x } => {
                if self.rg(*x) {
                    let dx: Vec<F> = self
                        .values(*x)
                        .iter()
                        .zip(d)
                        .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
                        .collect();
                    out.push((*x, dx));
                }
            }
            Op::Tanh { x } => {
                if self.rg(*x) {
                    let y = &self.nodes[i].values;
                    let dx: Vec<F> = y.iter().zip(d).map(|(&yv, &g)| g * (F::one() - yv * yv)).collect();
                    out.push((*x, dx));
                }
            }
            Op::Exp { x } => {
                if self.rg(*x) {
                    let y = &self.nodes[i].values;
                    let dx: Vec<F> = y.iter().zip(d).map(|(&yv, &g)| g * yv).collect();
                    out.push((*x, dx));
                }
            }
            Op::Abs { x } => {
                if self.rg(*x) {
                    let dx: Vec<F> = self
                        .values(*x)
                        .iter()
                        .zip(d)
                        .map(|(&v, &g)| {
                            if v > F::zero() {
                                g
                            } else if v < F::zero() {
                                -g
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    out.push((*x, dx));
                }
            }
            Op::SoftmaxLastDim { x } => {
                if self.rg(*x) {
                    let (rows, cols) = as_rows(&self.nodes[i].shape).unwrap();
                    let y = &self.nodes[i].values;
                    let mut dx = vec![F::zero(); rows * cols];
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let dr = &d[r * cols..(r + 1) * cols];
                        let mut dot = F::zero();
                        for (yv, gv) in yr.iter().zip(dr) {
                            dot += *yv * *gv;
                        }
                        for c in 0..cols {
                            dx[r * cols + c] = yr[c] * (dr[c] - dot);
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Add { a, b } => {
                if self.rg(*a) {
                    out.push((*a, d.to_vec()));
                }
                if self.rg(*b) {
                    out.push((*b, d.to_vec()));
                }
            }
            Op::Sub { a, b } => {
                if self.rg(*a) {
                    out.push((*a, d.to_vec()));
                }
                if self.rg(*b) {
                    out.push((*b, d.iter().map(|&g| -g).collect()));
                }
            }
            Op::Mul { a, b } => {
                if self.rg(*a) {
                    let da: Vec<F> = d.iter().zip(self.values(*b)).map(|(&g, &v)| g * v).collect();
                    out.push((*a, da));
                }
                if self.rg(*b) {
                    let db: Vec<F> = d.iter().zip(self.values(*a)).map(|(&g, &v)| g * v).collect();
                    out.push((*b, db));
                }
            }
            Op::Scale { x, c } => {
                if self.rg(*x) {
                    out.push((*x, d.iter().map(|&g| g * *c).collect()));
                }
            }
            Op::AddScalar { x } => {
                if self.rg(*x) {
                    out.push((*x, d.to_vec()));
                }
            }
            Op::ConcatChannels { parts } => {
                let (rows, total) = as_rows(&self.nodes[i].shape).unwrap();
                let mut off = 0;
                for &p in parts {
                    let (_, w) = as_rows(self.shape(p)).unwrap();
                    if self.rg(p) {
                        let mut dp = vec![F::zero(); rows * w];
                        for r in 0..rows {
                            dp[r * w..(r + 1) * w]
                                .copy_from_slice(&d[r * total + off..r * total + off + w]);
                        }
                        out.push((p, dp));
                    }
                    off += w;
                }
            }
            Op::SliceChannels { x, from, to } => {
                if self.rg(*x) {
                    let (rows, cols) = as_rows(self.shape(*x)).unwrap();
                    let w = to - from;
                    let mut dx = vec![F::zero(); rows * cols];
                    for r in 0..rows {
                        dx[r * cols + from..r * cols + to].copy_from_slice(&d[r * w..(r + 1) * w]);
                    }
                    out.push((*x, dx));
                }
            }
            Op::Dropout { x, mask } => {
                if self.rg(*x) {
                    let dx: Vec<F> = d.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    out.push((*x, dx));
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = as_rows(self.shape(*x)).unwrap();
                let gv = self.values(*gamma);
                if self.rg(*gamma) {
                    let mut dg = vec![F::zero(); cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dg[c] += d[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                    out.push((*gamma, dg));
                }
                if self.rg(*beta) {
                    let mut db = vec![F::zero(); cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            db[c] += d[r * cols + c];
                        }
                    }
                    out.push((*beta, db));
                }
                if self.rg(*x) {
                    let inv_c = F::lit(1.0 / cols as f64);
                    let mut dx = vec![F::zero(); rows * cols];
                    for r in 0..rows {
                        let mut m1 = F::zero();
                        let mut m2 = F::zero();
                        for c in 0..cols {
                            let dh = d[r * cols + c] * gv[c];
                            m1 += dh;
                            m2 += dh * xhat[r * cols + c];
                        }
                        m1 *= inv_c;
                        m2 *= inv_c;
                        for c in 0..cols {
                            let dh = d[r * cols + c] * gv[c];
                            dx[r * cols + c] = inv_std[r] * (dh - m1 - xhat[r * cols + c] * m2);
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::TileRows { v, rows } => {
                if self.rg(*v) {
                    let c = self.shape(*v)[0];
                    let mut dv = vec![F::zero(); c];
                    for r in 0..*rows {
                        for ci in 0..c {
                            dv[ci] += d[r * c + ci];
                        }
                    }
                    out.push((*v, dv));
                }
            }
            Op::Reshape { x } => {
                if self.rg(*x) {
                    out.push((*x, d.to_vec()));
                }
            }
            Op::SumAll { x } => {
                if self.rg(*x) {
                    let n = self.tensor(*x).numel();
                    out.push((*x, vec![d[0]; n]));
                }
            }
            Op::MeanAll { x } => {
                if self.rg(*x) {
                    let n = self.tensor(*x).numel();
                    let g = d[0] * F::lit(1.0 / n as f64);
                    out.push((*x, vec![g; n]));
                }
            }
        }
        out
    }
}

/// True when every element of `v` is finite.
pub fn all_finite<F: Scalar>(v: &[F]) -> bool {
    v.iter().all(|x| x.is_finite())
}
