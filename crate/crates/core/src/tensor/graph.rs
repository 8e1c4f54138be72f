use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom, ConvGrads};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking a logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output length is `L - h + 1`.
    Valid,
    /// `h / 2` zero rows on each side; output length is `L`.
    SameZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolDenominator {
    /// Divide by the number of rows regardless of the mask.
    FixedLen,
    /// Divide by the number of rows selected by the mask.
    MaskCount,
}

enum Value<'p, T> {
    Owned(Vec<T>),
    Borrowed(&'p [T]),
}

impl<T> Deref for Value<'_, T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        match self {
            Value::Owned(v) => v,
            Value::Borrowed(s) => s,
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        r: usize,
        s: usize,
        t: usize,
    },
    Add(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    RowWeightedSum {
        x: Var,
        weights: Vec<T>,
    },
    Concat {
        parts: Vec<(Var, usize)>,
    },
    Stack(Vec<Var>),
    SliceRows {
        x: Var,
        offset: usize,
    },
    RepeatRows(Var),
    Reshape(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    GradReverse {
        x: Var,
        scale: T,
    },
    Sum(Var),
    Bce {
        p: Var,
        positive: bool,
    },
    Nll {
        probs: Var,
        index: usize,
    },
}

struct Node<'p, T> {
    shape: Vec<usize>,
    value: Value<'p, T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward computation.
///
/// Parameters are borrowed for the lifetime `'p`, so building a graph never
/// copies weight tensors; everything else is owned by the graph.
pub struct Graph<'p, T> {
    nodes: Vec<Node<'p, T>>,
}

impl<T: Real> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

fn expect_rank(op: &'static str, shape: &[usize], rank: usize) -> Result<()> {
    if shape.len() == rank {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![0; rank],
        })
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a borrowed tensor; gradients flow to it if it requires them.
    pub fn param(&mut self, tensor: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: Value::Borrowed(tensor.data()),
            op: Op::Leaf,
            requires_grad: tensor.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers an owned tensor, honoring its `requires_grad` flag.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let rg = tensor.requires_grad();
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Leaf, rg)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var> {
        Ok(self.leaf(Tensor::new(shape, data)?))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is valid")
    }

    pub fn scalar_value(&self, v: Var) -> Result<T> {
        match self.value(v) {
            [x] => Ok(*x),
            _ => Err(Error::Rank(self.shape(v).to_vec())),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (r, s, t) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); r * t];
        kernels::matmul_acc(self.value(a), self.value(b), &mut out, r, s, t);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![r, t], out, Op::MatMul { a, b, r, s, t }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add(a, b), rg))
    }

    /// Adds a vector to every slice along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.is_empty() || sb.len() != 1 || sb[0] != last_dim(sx) {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let d = sb[0];
        let b = self.value(bias);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % d])
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        let shape = sx.to_vec();
        Ok(self.push(shape, out, Op::AddBias { x, bias }, rg))
    }

    /// Sliding-window convolution over the rows of `x: [L×d_in]` with
    /// `w: [h×d_in×d_out]` and `b: [d_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[1] || sw[0] == 0 {
            return Err(Error::shape("conv1d", sx, sw));
        }
        if sb.len() != 1 || sb[0] != sw[2] {
            return Err(Error::shape("conv1d bias", sw, sb));
        }
        let (len_in, window) = (sx[0], sw[0]);
        let (len_out, offset) = match padding {
            Padding::Valid => {
                if len_in < window {
                    return Err(Error::SequenceTooShort {
                        len: len_in,
                        window,
                    });
                }
                (len_in - window + 1, 0)
            }
            Padding::SameZero => (len_in, window / 2),
        };
        let geom = ConvGeom {
            len_in,
            len_out,
            window,
            d_in: sx[1],
            d_out: sw[2],
            offset,
        };
        let mut out = vec![T::zero(); len_out * geom.d_out];
        kernels::conv1d_forward(self.value(x), self.value(w), self.value(b), &mut out, geom);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            vec![len_out, geom.d_out],
            out,
            Op::Conv1d { x, w, b, geom },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| kernels::sigmoid(v)).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Sigmoid(x), rg)
    }

    pub fn softmax_lastaxis(&mut self, x: Var) -> Var {
        let d = last_dim(self.shape(x));
        let mut out = vec![T::zero(); self.value(x).len()];
        kernels::softmax_rows(self.value(x), &mut out, d);
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Softmax(x), rg)
    }

    /// Mean over the rows of `x: [L×d]`.
    ///
    /// With [`PoolDenominator::FixedLen`] the mask is ignored and every row
    /// contributes with weight `1/L`.
    pub fn mean_pool(
        &mut self,
        x: Var,
        mask: Option<&[bool]>,
        denominator: PoolDenominator,
    ) -> Result<Var> {
        let sx = self.shape(x);
        expect_rank("mean_pool", sx, 2)?;
        let rows = sx[0];
        if let Some(mask) = mask {
            if mask.len() != rows {
                return Err(Error::shape("mean_pool mask", sx, &[mask.len()]));
            }
        }
        let weights = match (denominator, mask) {
            (PoolDenominator::FixedLen, _) | (PoolDenominator::MaskCount, None) => {
                if rows == 0 {
                    return Err(Error::EmptyPool);
                }
                vec![T::one() / T::of(rows as f64); rows]
            }
            (PoolDenominator::MaskCount, Some(mask)) => {
                let count = mask.iter().filter(|&&m| m).count();
                if count == 0 {
                    return Err(Error::EmptyPool);
                }
                let w = T::one() / T::of(count as f64);
                mask.iter()
                    .map(|&m| if m { w } else { T::zero() })
                    .collect()
            }
        };
        self.weighted_row_sum(x, weights)
    }

    /// `Σ_r weights[r] · x[r, :]` for `x: [L×d]`, summed in row order.
    pub fn weighted_row_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        let sx = self.shape(x);
        expect_rank("weighted_row_sum", sx, 2)?;
        if weights.len() != sx[0] {
            return Err(Error::shape("weighted_row_sum", sx, &[weights.len()]));
        }
        let d = sx[1];
        let mut out = vec![T::zero(); d];
        for (row, &w) in self.value(x).chunks(d.max(1)).zip(&weights) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![d], out, Op::RowWeightedSum { x, weights }, rg))
    }

    /// Joins tensors along the last axis; all leading dimensions must agree.
    pub fn concat_lastaxis(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Empty("concat of zero tensors".into()))?;
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let sp = self.shape(p);
            if sp.is_empty() || sp[..sp.len() - 1] != lead[..] {
                return Err(Error::shape("concat_lastaxis", self.shape(first), sp));
            }
            widths.push(last_dim(sp));
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = parts.iter().any(|&p| self.rg(p));
        let parts = parts.iter().copied().zip(widths).collect();
        Ok(self.push(shape, out, Op::Concat { parts }, rg))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Empty("stack of zero tensors".into()))?;
        let inner = self.shape(first).to_vec();
        let mut out = Vec::with_capacity(parts.len() * self.value(first).len());
        for &p in parts {
            if self.shape(p) != inner.as_slice() {
                return Err(Error::shape("stack", &inner, self.shape(p)));
            }
            out.extend_from_slice(self.value(p));
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(shape, out, Op::Stack(parts.to_vec()), rg))
    }

    /// Rows `start..start+len` of a tensor of rank ≥ 1.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.is_empty() || start + len > sx[0] {
            return Err(Error::shape("slice_rows", sx, &[start, len]));
        }
        let row: usize = sx[1..].iter().product();
        let out = self.value(x)[start * row..(start + len) * row].to_vec();
        let mut shape = sx.to_vec();
        shape[0] = len;
        let rg = self.rg(x);
        Ok(self.push(
            shape,
            out,
            Op::SliceRows {
                x,
                offset: start * row,
            },
            rg,
        ))
    }

    /// Broadcasts a vector `[d]` into `[count×d]`.
    pub fn repeat_rows(&mut self, x: Var, count: usize) -> Result<Var> {
        let sx = self.shape(x);
        expect_rank("repeat_rows", sx, 1)?;
        let d = sx[0];
        let out = self.value(x).repeat(count);
        let rg = self.rg(x);
        Ok(self.push(vec![count, d], out, Op::RepeatRows(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    /// Row lookup `table[ids[r], :]` for `table: [V×d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let st = self.shape(table);
        expect_rank("gather_rows", st, 2)?;
        let (vocab_size, d) = (st[0], st[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        let values = self.value(table);
        for &id in ids {
            if id >= vocab_size {
                return Err(Error::Lookup { id, vocab_size });
            }
            out.extend_from_slice(&values[id * d..(id + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Identity in the forward pass; multiplies the incoming gradient by
    /// `-scale` in the backward pass.
    pub fn grad_reverse(&mut self, x: Var, scale: f64) -> Result<Var> {
        if scale.is_nan() || scale < 0.0 {
            return Err(Error::Config(format!(
                "gradient reversal scale must be >= 0, got {scale}"
            )));
        }
        let out = self.value(x).to_vec();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        Ok(self.push(
            shape,
            out,
            Op::GradReverse {
                x,
                scale: T::of(scale),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![total], Op::Sum(x), rg)
    }

    /// `-[y·ln p + (1-y)·ln(1-p)]` for a single probability `p`.
    ///
    /// `p` is clamped to `[1e-7, 1-1e-7]`; the gradient is taken at the
    /// clamped value and passed straight through the clamp.
    pub fn binary_cross_entropy(&mut self, p: Var, target: u8) -> Result<Var> {
        let prob = self.scalar_value(p)?;
        if target > 1 {
            return Err(Error::Config(format!(
                "binary target must be 0 or 1, got {target}"
            )));
        }
        let positive = target == 1;
        let pc = clamp_prob(prob);
        let loss = if positive {
            -pc.ln()
        } else {
            -(T::one() - pc).ln()
        };
        let rg = self.rg(p);
        Ok(self.push(Vec::new(), vec![loss], Op::Bce { p, positive }, rg))
    }

    /// `-ln probs[index]` with the same clamp as [`Self::binary_cross_entropy`].
    pub fn nll(&mut self, probs: Var, index: usize) -> Result<Var> {
        let sp = self.shape(probs);
        expect_rank("nll", sp, 1)?;
        if index >= sp[0] {
            return Err(Error::shape("nll", sp, &[index]));
        }
        let loss = -clamp_prob(self.value(probs)[index]).ln();
        let rg = self.rg(probs);
        Ok(self.push(Vec::new(), vec![loss], Op::Nll { probs, index }, rg))
    }

    /// Smallest |input| over every ReLU recorded so far, if any.
    pub fn min_abs_relu_input(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => self.value(x).iter().map(|v| v.abs()).reduce(T::min),
                _ => None,
            })
            .reduce(T::min)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients of every node that requires them are returned; contributions
    /// from fan-out are summed. The graph is left untouched, so several
    /// losses recorded on one graph can be differentiated independently.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::Rank(loss_node.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        if loss_node.requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<'p, T>, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut with_grad = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.rg(v) {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.value(v).len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, r, s, t } => {
                with_grad(a, &mut |da| {
                    kernels::matmul_grad_lhs(dy, self.value(b), da, r, s, t)
                });
                with_grad(b, &mut |db| {
                    kernels::matmul_grad_rhs(self.value(a), dy, db, r, s, t)
                });
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    with_grad(v, &mut |d| add_into(d, dy));
                }
            }
            &Op::AddBias { x, bias } => {
                with_grad(x, &mut |dx| add_into(dx, dy));
                with_grad(bias, &mut |db| {
                    let d = db.len();
                    for row in dy.chunks(d.max(1)) {
                        add_into(db, row);
                    }
                });
            }
            &Op::Conv1d { x, w, b, geom } => {
                let (xv, wv) = (self.value(x), self.value(w));
                with_grad(x, &mut |dx| {
                    let g = ConvGrads {
                        dx: Some(dx),
                        dw: None,
                        db: None,
                    };
                    kernels::conv1d_backward(xv, wv, dy, g, geom)
                });
                with_grad(w, &mut |dw| {
                    let g = ConvGrads {
                        dx: None,
                        dw: Some(dw),
                        db: None,
                    };
                    kernels::conv1d_backward(xv, wv, dy, g, geom)
                });
                with_grad(b, &mut |db| {
                    let g = ConvGrads {
                        dx: None,
                        dw: None,
                        db: Some(db),
                    };
                    kernels::conv1d_backward(xv, wv, dy, g, geom)
                });
            }
            &Op::Relu(x) => {
                let xv = self.value(x);
                with_grad(x, &mut |dx| {
                    for ((d, &g), &v) in dx.iter_mut().zip(dy).zip(xv) {
                        if v > T::zero() {
                            *d += g;
                        }
                    }
                });
            }
            &Op::Sigmoid(x) => {
                let yv = &*node.value;
                with_grad(x, &mut |dx| {
                    for ((d, &g), &y) in dx.iter_mut().zip(dy).zip(yv) {
                        *d += g * y * (T::one() - y);
                    }
                });
            }
            &Op::Softmax(x) => {
                let yv = &*node.value;
                let width = last_dim(&node.shape).max(1);
                with_grad(x, &mut |dx| {
                    for ((dxs, dys), ys) in dx
                        .chunks_mut(width)
                        .zip(dy.chunks(width))
                        .zip(yv.chunks(width))
                    {
                        let dot: T = dys.iter().zip(ys).map(|(&g, &y)| g * y).sum();
                        for ((d, &g), &y) in dxs.iter_mut().zip(dys).zip(ys) {
                            *d += y * (g - dot);
                        }
                    }
                });
            }
            Op::RowWeightedSum { x, weights } => {
                let d = dy.len().max(1);
                with_grad(*x, &mut |dx| {
                    for (row, &w) in dx.chunks_mut(d).zip(weights) {
                        for (r, &g) in row.iter_mut().zip(dy) {
                            *r += w * g;
                        }
                    }
                });
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|&(_, w)| w).sum();
                let rows = dy.len().checked_div(total).unwrap_or(0);
                let mut col = 0;
                for &(p, w) in parts {
                    with_grad(p, &mut |dp| {
                        for r in 0..rows {
                            add_into(
                                &mut dp[r * w..(r + 1) * w],
                                &dy[r * total + col..r * total + col + w],
                            );
                        }
                    });
                    col += w;
                }
            }
            Op::Stack(parts) => {
                let chunk = if parts.is_empty() {
                    0
                } else {
                    dy.len() / parts.len()
                };
                for (i, &p) in parts.iter().enumerate() {
                    with_grad(p, &mut |dp| add_into(dp, &dy[i * chunk..(i + 1) * chunk]));
                }
            }
            &Op::SliceRows { x, offset } => {
                with_grad(x, &mut |dx| {
                    add_into(&mut dx[offset..offset + dy.len()], dy)
                });
            }
            &Op::RepeatRows(x) => {
                with_grad(x, &mut |dx| {
                    let d = dx.len().max(1);
                    for row in dy.chunks(d) {
                        add_into(dx, row);
                    }
                });
            }
            &Op::Reshape(x) => with_grad(x, &mut |dx| add_into(dx, dy)),
            Op::Gather { table, ids } => {
                let d = *self.shape(*table).last().unwrap_or(&0);
                with_grad(*table, &mut |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut dt[id * d..(id + 1) * d], &dy[r * d..(r + 1) * d]);
                    }
                });
            }
            &Op::GradReverse { x, scale } => {
                with_grad(x, &mut |dx| {
                    for (d, &g) in dx.iter_mut().zip(dy) {
                        *d += -scale * g;
                    }
                });
            }
            &Op::Sum(x) => {
                let g = dy[0];
                with_grad(x, &mut |dx| dx.iter_mut().for_each(|d| *d += g));
            }
            &Op::Bce { p, positive } => {
                let pc = clamp_prob(self.value(p)[0]);
                let local = if positive {
                    -T::one() / pc
                } else {
                    T::one() / (T::one() - pc)
                };
                with_grad(p, &mut |dp| dp[0] += dy[0] * local);
            }
            &Op::Nll { probs, index } => {
                let pc = clamp_prob(self.value(probs)[index]);
                with_grad(probs, &mut |dp| dp[index] += -dy[0] / pc);
            }
        }
    }
}

fn clamp_prob<T: Real>(p: T) -> T {
    let lo = T::of(PROB_CLAMP);
    p.max(lo).min(T::one() - lo)
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Result of [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` (if any) into the tensor's gradient slot.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}
