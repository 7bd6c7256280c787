//! The autodiff tape: nodes hold immutable 2-D values plus one-shot
//! backward thunks that push vector-Jacobian products to their parents.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};

use super::store::{ParamId, ParamStore};
use super::Real;
use crate::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

type BackwardFn<F> = Box<dyn FnOnce(&Array2<F>, &mut dyn FnMut(NodeId, Array2<F>))>;

struct Node<F: Real> {
    value: Arc<Array2<F>>,
    wants_grad: bool,
    backward: Option<BackwardFn<F>>,
}

/// Gradients produced by one backward pass, keyed by tape node.
#[derive(Debug)]
pub struct Gradients<F: Real> {
    by_node: HashMap<NodeId, Array2<F>>,
    param_leaves: Vec<(NodeId, ParamId)>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of the loss with respect to a node (parameter leaf or
    /// grad-enabled input); zero gradients may be absent.
    pub fn of(&self, id: NodeId) -> Option<&Array2<F>> {
        self.by_node.get(&id)
    }

    /// Accumulate parameter gradients into the store.
    pub fn apply_to(&self, store: &mut ParamStore<F>) {
        for &(node, pid) in &self.param_leaves {
            if let Some(g) = self.by_node.get(&node) {
                store.accumulate_grad(pid, g);
            }
        }
    }
}

/// Define-by-run computation tape.
pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
    param_memo: HashMap<usize, NodeId>,
    param_leaves: Vec<(NodeId, ParamId)>,
    frozen: bool,
    consumed: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_memo: HashMap::new(),
            param_leaves: Vec::new(),
            frozen: false,
            consumed: false,
        }
    }

    /// Inference-mode graph: parameters enter as plain constants and no
    /// backward thunks are recorded.
    pub fn frozen() -> Self {
        let mut g = Self::new();
        g.frozen = true;
        g
    }

    pub fn value(&self, id: NodeId) -> &Array2<F> {
        &self.nodes[id.0].value
    }

    pub fn value_arc(&self, id: NodeId) -> Arc<Array2<F>> {
        Arc::clone(&self.nodes[id.0].value)
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    /// Scalar value of a (1 x 1) node.
    pub fn scalar(&self, id: NodeId) -> F {
        self.nodes[id.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<F>, wants_grad: bool, backward: Option<BackwardFn<F>>) -> NodeId {
        let wants_grad = wants_grad && !self.frozen;
        self.nodes.push(Node {
            value: Arc::new(value),
            wants_grad,
            backward: if wants_grad { backward } else { None },
        });
        NodeId(self.nodes.len() - 1)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].wants_grad
    }

    pub(crate) fn wants_any(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&id| self.wants(id))
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Array2<F>) -> NodeId {
        self.push(value, false, None)
    }

    pub fn constant_arc(&mut self, value: Arc<Array2<F>>) -> NodeId {
        self.nodes.push(Node {
            value,
            wants_grad: false,
            backward: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Input whose gradient is retrievable from [`Gradients::of`].
    pub fn input_grad(&mut self, value: Array2<F>) -> NodeId {
        self.push(value, true, None)
    }

    /// Parameter leaf (memoized per graph so fan-out accumulates).
    pub fn param(&mut self, store: &ParamStore<F>, pid: ParamId) -> NodeId {
        if let Some(&node) = self.param_memo.get(&pid.index()) {
            return node;
        }
        let value = store.value_arc(pid);
        let node = if self.frozen {
            self.constant_arc(value)
        } else {
            self.nodes.push(Node {
                value,
                wants_grad: true,
                backward: None,
            });
            NodeId(self.nodes.len() - 1)
        };
        self.param_memo.insert(pid.index(), node);
        if !self.frozen {
            self.param_leaves.push((node, pid));
        }
        node
    }

    // ---- elementwise / linear primitives ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value_arc(a), self.value_arc(b));
        assert_eq!(va.dim(), vb.dim(), "add: shape mismatch");
        let out = va.as_ref() + vb.as_ref();
        let wants = self.wants(a) || self.wants(b);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(a, g.clone());
                emit(b, g.clone());
            })),
        )
    }

    /// Add a (1 x C) bias row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (vx, vb) = (self.value_arc(x), self.value_arc(bias));
        assert_eq!(vb.nrows(), 1, "add_bias: bias must be a row");
        assert_eq!(vx.ncols(), vb.ncols(), "add_bias: width mismatch");
        let out = vx.as_ref() + &vb.row(0);
        let wants = self.wants(x) || self.wants(bias);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(x, g.clone());
                let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                emit(bias, db);
            })),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value_arc(a), self.value_arc(b));
        assert_eq!(va.dim(), vb.dim(), "sub: shape mismatch");
        let out = va.as_ref() - vb.as_ref();
        let wants = self.wants(a) || self.wants(b);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(a, g.clone());
                emit(b, g.mapv(|v| -v));
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value_arc(a), self.value_arc(b));
        assert_eq!(va.dim(), vb.dim(), "mul: shape mismatch");
        let out = va.as_ref() * vb.as_ref();
        let wants = self.wants(a) || self.wants(b);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(a, g * vb.as_ref());
                emit(b, g * va.as_ref());
            })),
        )
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v * c);
        let wants = self.wants(x);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| emit(x, g.mapv(|v| v * c)))),
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value_arc(a), self.value_arc(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul: inner dim mismatch");
        let out = va.dot(vb.as_ref());
        let wants = self.wants(a) || self.wants(b);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(a, g.dot(&vb.t()));
                emit(b, va.t().dot(g));
            })),
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v.max(F::zero()));
        let wants = self.wants(x);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                // subgradient 0 at exactly 0
                let mut dx = g.clone();
                dx.zip_mut_with(vx.as_ref(), |d, &v| {
                    if v <= F::zero() {
                        *d = F::zero()
                    }
                });
                emit(x, dx);
            })),
        )
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| F::one() / (F::one() + (-v).exp()));
        let wants = self.wants(x);
        let saved = out.clone();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = g.clone();
                dx.zip_mut_with(&saved, |d, &y| *d = *d * y * (F::one() - y));
                emit(x, dx);
            })),
        )
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v.tanh());
        let wants = self.wants(x);
        let saved = out.clone();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = g.clone();
                dx.zip_mut_with(&saved, |d, &y| *d = *d * (F::one() - y * y));
                emit(x, dx);
            })),
        )
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v.exp());
        let wants = self.wants(x);
        let saved = out.clone();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                emit(x, g * &saved);
            })),
        )
    }

    /// Natural log; inputs must be strictly positive (use [`Graph::floor_clamp`]).
    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        debug_assert!(vx.iter().all(|&v| v > F::zero()), "ln of non-positive value");
        let out = vx.mapv(|v| v.ln());
        let wants = self.wants(x);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = g.clone();
                dx.zip_mut_with(vx.as_ref(), |d, &v| *d = *d / v);
                emit(x, dx);
            })),
        )
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v.abs());
        let wants = self.wants(x);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = g.clone();
                dx.zip_mut_with(vx.as_ref(), |d, &v| {
                    *d = if v > F::zero() {
                        *d
                    } else if v < F::zero() {
                        -*d
                    } else {
                        F::zero()
                    }
                });
                emit(x, dx);
            })),
        )
    }

    /// max(x, floor); gradient passes only where x > floor.
    pub fn floor_clamp(&mut self, x: NodeId, floor: F) -> NodeId {
        let vx = self.value_arc(x);
        let out = vx.mapv(|v| v.max(floor));
        let wants = self.wants(x);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = g.clone();
                dx.zip_mut_with(vx.as_ref(), |d, &v| {
                    if v <= floor {
                        *d = F::zero()
                    }
                });
                emit(x, dx);
            })),
        )
    }

    /// Mean over all elements, as a (1 x 1) node.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let vx = self.value_arc(x);
        let n = F::from_f64(vx.len() as f64);
        let mean = vx.iter().copied().sum::<F>() / n;
        let out = Array2::from_elem((1, 1), mean);
        let wants = self.wants(x);
        let dim = vx.dim();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let scale = g[[0, 0]] / n;
                emit(x, Array2::from_elem(dim, scale));
            })),
        )
    }

    /// Horizontal concatenation of column blocks.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let values: Vec<Arc<Array2<F>>> = parts.iter().map(|&p| self.value_arc(p)).collect();
        let rows = values[0].nrows();
        assert!(
            values.iter().all(|v| v.nrows() == rows),
            "concat_cols: row mismatch"
        );
        let total: usize = values.iter().map(|v| v.ncols()).sum();
        let mut out = Array2::zeros((rows, total));
        let mut col = 0;
        for v in &values {
            out.slice_mut(ndarray::s![.., col..col + v.ncols()])
                .assign(v.as_ref());
            col += v.ncols();
        }
        let wants = parts.iter().any(|&p| self.wants(p));
        let parts: Vec<NodeId> = parts.to_vec();
        let widths: Vec<usize> = values.iter().map(|v| v.ncols()).collect();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut col = 0;
                for (i, &p) in parts.iter().enumerate() {
                    let w = widths[i];
                    emit(p, g.slice(ndarray::s![.., col..col + w]).to_owned());
                    col += w;
                }
            })),
        )
    }

    /// Repeat row n of `x` `counts[n]` times (duration-based upsampling).
    /// Backward sums frame gradients per source row.
    pub fn repeat_rows(&mut self, x: NodeId, counts: &[usize]) -> NodeId {
        let vx = self.value_arc(x);
        assert_eq!(vx.nrows(), counts.len(), "repeat_rows: count mismatch");
        let total: usize = counts.iter().sum();
        let cols = vx.ncols();
        let mut out = Array2::zeros((total, cols));
        let mut row = 0;
        for (n, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                out.row_mut(row).assign(&vx.row(n));
                row += 1;
            }
        }
        let wants = self.wants(x);
        let counts: Vec<usize> = counts.to_vec();
        let src_rows = vx.nrows();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = Array2::zeros((src_rows, cols));
                let mut row = 0;
                for (n, &c) in counts.iter().enumerate() {
                    for _ in 0..c {
                        let mut acc = dx.row_mut(n);
                        acc += &g.row(row);
                        row += 1;
                    }
                }
                emit(x, dx);
            })),
        )
    }

    /// Contiguous row slice [lo, hi); backward scatters into zeros.
    pub fn slice_rows(&mut self, x: NodeId, lo: usize, hi: usize) -> NodeId {
        let vx = self.value_arc(x);
        assert!(lo < hi && hi <= vx.nrows(), "slice_rows: bad range");
        let out = vx.slice(ndarray::s![lo..hi, ..]).to_owned();
        let wants = self.wants(x);
        let dim = vx.dim();
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                let mut dx = Array2::zeros(dim);
                dx.slice_mut(ndarray::s![lo..hi, ..]).assign(g);
                emit(x, dx);
            })),
        )
    }

    /// "Same"-padded 1-D convolution along rows (time). `w` has shape
    /// (k * C_in, C_out) with tap-major layout; rows [j*C_in, (j+1)*C_in)
    /// hold tap j. pad_left = (k - 1) / 2, so even kernels reach one
    /// position further right than left.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, bias: NodeId, k: usize) -> NodeId {
        let (vx, vw, vb) = (self.value_arc(x), self.value_arc(w), self.value_arc(bias));
        let (t_len, c_in) = vx.dim();
        assert_eq!(vw.nrows(), k * c_in, "conv1d: weight rows != k * C_in");
        let c_out = vw.ncols();
        assert_eq!(vb.dim(), (1, c_out), "conv1d: bias shape");
        let pad_left = (k - 1) / 2;

        let cols = im2col(&vx, k, pad_left);
        let out = cols.dot(vw.as_ref()) + &vb.row(0);

        let wants = self.wants(x) || self.wants(w) || self.wants(bias);
        self.push(
            out,
            wants,
            Some(Box::new(move |g, emit| {
                // rebuild im2col instead of keeping it alive
                let cols = im2col(&vx, k, pad_left);
                emit(w, cols.t().dot(g));
                emit(bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dcols = g.dot(&vw.t());
                let mut dx = Array2::zeros((t_len, c_in));
                for t in 0..t_len {
                    for j in 0..k {
                        let s = t as isize + j as isize - pad_left as isize;
                        if s < 0 || s as usize >= t_len {
                            continue;
                        }
                        let mut row = dx.row_mut(s as usize);
                        row += &dcols.slice(ndarray::s![t, j * c_in..(j + 1) * c_in]);
                    }
                }
                emit(x, dx);
            })),
        )
    }

    /// Fused GRU scan; see [`super::gru`] for the recurrence and BPTT.
    pub fn gru(&mut self, x: NodeId, weights: &super::gru::GruNodes, reversed: bool) -> NodeId {
        super::gru::gru_op(self, x, weights, reversed)
    }

    /// Differentiable log-mel spectrogram of a (T x 1) waveform column.
    pub fn log_mel(&mut self, x: NodeId, basis: &Arc<super::melop::MelBasis<F>>) -> Result<NodeId> {
        super::melop::log_mel_op(self, x, basis)
    }

    pub(crate) fn push_op(
        &mut self,
        value: Array2<F>,
        wants: bool,
        backward: Option<BackwardFn<F>>,
    ) -> NodeId {
        self.push(value, wants, backward)
    }

    /// Reverse sweep from a scalar loss node. Populates gradients for every
    /// parameter leaf and grad-enabled input reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<F>> {
        if self.consumed {
            return Err(Error::Shape(
                "backward already ran on this graph; rebuild the forward pass".into(),
            ));
        }
        if self.frozen {
            return Err(Error::Shape("backward on a frozen graph".into()));
        }
        if self.nodes.is_empty() {
            return Err(Error::Shape("backward before any forward computation".into()));
        }
        let dim = self.nodes[loss.0].value.dim();
        if dim != (1, 1) {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got {dim:?}"
            )));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<F>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), F::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let backward = self.nodes[id].backward.take();
            if let Some(f) = backward {
                let nodes_ref = &self.nodes;
                let mut sink = |nid: NodeId, contrib: Array2<F>| {
                    if !nodes_ref[nid.0].wants_grad {
                        return;
                    }
                    match &mut grads[nid.0] {
                        Some(acc) => *acc += &contrib,
                        slot @ None => *slot = Some(contrib),
                    }
                };
                f(&g, &mut sink);
            } else if self.nodes[id].wants_grad {
                // leaf: keep its gradient
                grads[id] = Some(g);
            }
        }

        let mut by_node = HashMap::new();
        for (id, slot) in grads.into_iter().enumerate() {
            if let Some(g) = slot {
                by_node.insert(NodeId(id), g);
            }
        }
        Ok(Gradients {
            by_node,
            param_leaves: self.param_leaves.clone(),
        })
    }
}

/// Gather the k-tap neighborhoods of every time step: output row t holds
/// [x[t - pad_left], ..., x[t - pad_left + k - 1]] flattened, zeros outside.
fn im2col<F: Real>(x: &Array2<F>, k: usize, pad_left: usize) -> Array2<F> {
    let (t_len, c_in) = x.dim();
    let mut cols = Array2::zeros((t_len, k * c_in));
    for t in 0..t_len {
        for j in 0..k {
            let s = t as isize + j as isize - pad_left as isize;
            if s < 0 || s as usize >= t_len {
                continue;
            }
            cols.slice_mut(ndarray::s![t, j * c_in..(j + 1) * c_in])
                .assign(&x.row(s as usize));
        }
    }
    cols
}

/// Column-stack a slice as an (n x 1) array.
pub fn column<F: Real>(values: &[F]) -> Array2<F> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

/// Row vector as a (1 x n) array.
pub fn row<F: Real>(values: &[F]) -> Array2<F> {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

/// Cast an f32 matrix into the graph scalar type.
pub fn cast_to<F: Real>(m: &Array2<f32>) -> Array2<F> {
    m.mapv(|v| F::from_f64(v as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::nn::gru::GruWeights;
    use crate::nn::{MelBasis, ParamStore};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_array(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    const EPS: f64 = 1e-3;
    const TOL: f64 = 1e-4;

    #[test]
    fn elementwise_and_linear_ops_match_finite_differences() {
        // composite touching add, sub, mul, scale, matmul, add_bias, mean
        let a = rand_array(4, 3, 1);
        let b = rand_array(3, 5, 2);
        let bias = rand_array(1, 5, 3);
        let c = rand_array(4, 5, 4);
        gradcheck::check(
            &[a, b, bias, c],
            |g, ids| {
                let y = g.matmul(ids[0], ids[1]);
                let y = g.add_bias(y, ids[2]);
                let z = g.mul(y, ids[3]);
                let z = g.scale(z, 0.7);
                let w = g.sub(z, ids[3]);
                let w = g.add(w, z);
                g.mean_all(w)
            },
            EPS,
            TOL,
            None,
        );
    }

    #[test]
    fn nonlinearities_match_finite_differences() {
        let x = rand_array(5, 4, 7);
        for op in 0..7 {
            gradcheck::check(
                &[x.clone()],
                move |g, ids| {
                    let y = match op {
                        0 => g.relu(ids[0]),
                        1 => g.sigmoid(ids[0]),
                        2 => g.tanh(ids[0]),
                        3 => g.exp(ids[0]),
                        4 => {
                            // keep ln away from its pole so central
                            // differences stay in the smooth regime
                            let shifted = g.scale(ids[0], 0.2);
                            let dim = g.shape(shifted);
                            let c = g.constant(Array2::from_elem(dim, 2.5));
                            let p = g.add(shifted, c);
                            let p = g.floor_clamp(p, 1e-4);
                            g.ln(p)
                        }
                        5 => g.floor_clamp(ids[0], 0.3),
                        _ => g.abs(ids[0]),
                    };
                    let sq = g.mul(y, y);
                    g.mean_all(sq)
                },
                EPS,
                TOL,
                None,
            );
        }
    }

    #[test]
    fn relu_at_exact_zero_takes_zero_subgradient() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.input_grad(array![[0.0, 2.0, -1.0]]);
        let y = g.relu(x);
        let loss = g.mean_all(y);
        let grads = g.backward(loss).unwrap();
        let dx = grads.of(x).unwrap();
        assert_eq!(dx[[0, 0]], 0.0);
        assert!((dx[[0, 1]] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(dx[[0, 2]], 0.0);
    }

    #[test]
    fn product_rule_gradient_is_the_other_factor() {
        // loss = sum(w . x) => dloss/dw == x
        let mut g: Graph<f64> = Graph::new();
        let w = g.input_grad(array![[2.0, -1.0], [0.5, 3.0]]);
        let x_val = array![[4.0, 5.0], [6.0, 7.0]];
        let x = g.constant(x_val.clone());
        let prod = g.mul(w, x);
        let mean = g.mean_all(prod);
        let total = g.scale(mean, 4.0); // mean * n == sum
        let grads = g.backward(total).unwrap();
        let dw = grads.of(w).unwrap();
        assert_eq!(dw, &x_val);
    }

    #[test]
    fn concat_and_repeat_match_finite_differences() {
        let a = rand_array(3, 2, 11);
        let b = rand_array(3, 4, 12);
        gradcheck::check(
            &[a, b],
            |g, ids| {
                let cat = g.concat_cols(&[ids[0], ids[1], ids[0]]);
                let up = g.repeat_rows(cat, &[2, 1, 3]);
                let sq = g.mul(up, up);
                g.mean_all(sq)
            },
            EPS,
            TOL,
            None,
        );
    }

    #[test]
    fn conv1d_identity_kernel_is_identity() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(rand_array(6, 3, 20));
        // k=1 identity weights
        let mut w = Array2::zeros((3, 3));
        for i in 0..3 {
            w[[i, i]] = 1.0;
        }
        let wn = g.constant(w);
        let bn = g.constant(Array2::zeros((1, 3)));
        let y = g.conv1d(x, wn, bn, 1);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn conv1d_preserves_length_for_all_kernel_sizes() {
        for k in 1..=16 {
            let mut g: Graph<f64> = Graph::new();
            let x = g.constant(rand_array(10, 2, k as u64));
            let w = g.constant(rand_array(k * 2, 4, 99 + k as u64));
            let b = g.constant(rand_array(1, 4, 7));
            let y = g.conv1d(x, w, b, k);
            assert_eq!(g.shape(y), (10, 4), "k = {k}");
        }
    }

    /// Naive sliding-window convolution oracle.
    fn conv_oracle(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>, k: usize) -> Array2<f64> {
        let (t_len, c_in) = x.dim();
        let c_out = w.ncols();
        let pad_left = (k - 1) / 2;
        let mut y = Array2::zeros((t_len, c_out));
        for t in 0..t_len {
            for o in 0..c_out {
                let mut acc = b[[0, o]];
                for j in 0..k {
                    let s = t as isize + j as isize - pad_left as isize;
                    if s < 0 || s as usize >= t_len {
                        continue;
                    }
                    for i in 0..c_in {
                        acc += x[[s as usize, i]] * w[[j * c_in + i, o]];
                    }
                }
                y[[t, o]] = acc;
            }
        }
        y
    }

    #[test]
    fn conv1d_matches_sliding_window_oracle() {
        for &k in &[1usize, 2, 3, 5, 8] {
            let x = rand_array(9, 3, 40 + k as u64);
            let w = rand_array(k * 3, 2, 50 + k as u64);
            let b = rand_array(1, 2, 60 + k as u64);
            let mut g: Graph<f64> = Graph::new();
            let (xn, wn, bn) = (
                g.constant(x.clone()),
                g.constant(w.clone()),
                g.constant(b.clone()),
            );
            let y = g.conv1d(xn, wn, bn, k);
            let want = conv_oracle(&x, &w, &b, k);
            for (got, exp) in g.value(y).iter().zip(want.iter()) {
                assert!((got - exp).abs() < 1e-9, "k={k}: {got} vs {exp}");
            }
        }
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        for &k in &[1usize, 2, 3, 5] {
            let x = rand_array(7, 2, 70 + k as u64);
            let w = rand_array(k * 2, 3, 80 + k as u64);
            let b = rand_array(1, 3, 90 + k as u64);
            gradcheck::check(
                &[x, w, b],
                move |g, ids| {
                    let y = g.conv1d(ids[0], ids[1], ids[2], k);
                    let y = g.relu(y);
                    let sq = g.mul(y, y);
                    g.mean_all(sq)
                },
                EPS,
                TOL,
                None,
            );
        }
    }

    #[test]
    fn composite_conv_relu_dense_mse_matches_finite_differences() {
        let x = rand_array(6, 3, 100);
        let wc = rand_array(3 * 3, 4, 101);
        let bc = rand_array(1, 4, 102);
        let wd = rand_array(4, 2, 103);
        let bd = rand_array(1, 2, 104);
        let target = rand_array(6, 2, 105);
        gradcheck::check(
            &[x, wc, bc, wd, bd],
            move |g, ids| {
                let y = g.conv1d(ids[0], ids[1], ids[2], 3);
                let y = g.relu(y);
                let y = g.matmul(y, ids[3]);
                let y = g.add_bias(y, ids[4]);
                let t = g.constant(target.clone());
                let d = g.sub(y, t);
                let sq = g.mul(d, d);
                g.mean_all(sq)
            },
            EPS,
            TOL,
            None,
        );
    }

    #[test]
    fn gru_single_step_and_reversal_symmetry() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = GruWeights::register(&mut store, "g", 3, 4, &mut rng);

        // length-1 sequence: forward and backward scans agree
        let x1 = rand_array(1, 3, 200);
        let mut g: Graph<f64> = Graph::new();
        let xn = g.constant(x1.clone());
        let nodes = w.nodes(&mut g, &store);
        let fwd = g.gru(xn, &nodes, false);
        let bwd = g.gru(xn, &nodes, true);
        assert_eq!(g.value(fwd), g.value(bwd));

        // reversing the input time-reverses the scan outputs
        let x = rand_array(5, 3, 201);
        let x_rev = {
            let mut r = x.clone();
            for (i, row) in x.outer_iter().enumerate() {
                r.row_mut(x.nrows() - 1 - i).assign(&row);
            }
            r
        };
        let mut g: Graph<f64> = Graph::new();
        let xa = g.constant(x.clone());
        let xb = g.constant(x_rev);
        let nodes = w.nodes(&mut g, &store);
        let fwd = g.gru(xa, &nodes, false);
        let bwd_on_rev = g.gru(xb, &nodes, true);
        let fv = g.value(fwd);
        let bv = g.value(bwd_on_rev);
        for t in 0..5 {
            for c in 0..4 {
                assert!(
                    (fv[[t, c]] - bv[[4 - t, c]]).abs() < 1e-12,
                    "t={t} c={c}"
                );
            }
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        // 5-step toy sequence, every parameter and the input
        let x = rand_array(5, 3, 210);
        let wx = rand_array(3, 12, 211);
        let wh_zr = rand_array(4, 8, 212);
        let wh_c = rand_array(4, 4, 213);
        let bias = rand_array(1, 12, 214);
        for reversed in [false, true] {
            gradcheck::check(
                &[x.clone(), wx.clone(), wh_zr.clone(), wh_c.clone(), bias.clone()],
                move |g, ids| {
                    let nodes = crate::nn::gru::GruNodes {
                        wx: ids[1],
                        wh_zr: ids[2],
                        wh_c: ids[3],
                        bias: ids[4],
                    };
                    let h = g.gru(ids[0], &nodes, reversed);
                    let sq = g.mul(h, h);
                    g.mean_all(sq)
                },
                EPS,
                TOL,
                None,
            );
        }
    }

    #[test]
    fn log_mel_op_gradients_match_finite_differences() {
        let basis = MelBasis::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        // 480 samples -> 2 frames
        let wave = Array2::from_shape_simple_fn((480, 1), || rng.gen_range(-0.5..0.5));
        gradcheck::check(
            &[wave],
            move |g, ids| {
                let lm = g.log_mel(ids[0], &basis).unwrap();
                g.mean_all(lm)
            },
            EPS,
            2e-4, // magnitude sqrt near tiny bins is the roughest spot
            Some(60),
        );
    }

    #[test]
    fn log_mel_op_matches_dsp_front_end() {
        let w = crate::toy::harmonic_tone(150.0, 0.06, 0.4, 6);
        let spec = crate::dsp::FrameSpec::default();
        let want = crate::dsp::compute_mel_spectrogram(&w, &spec).unwrap();
        let basis = MelBasis::<f64>::new();
        let mut g: Graph<f64> = Graph::new();
        let col = Array2::from_shape_vec(
            (w.len(), 1),
            w.samples.iter().map(|&s| s as f64).collect(),
        )
        .unwrap();
        let xn = g.constant(col);
        let lm = g.log_mel(xn, &basis).unwrap();
        let got = g.value(lm);
        assert_eq!(got.nrows(), want.nrows());
        for (a, b) in got.iter().zip(want.iter()) {
            let rel = (a.exp() - *b as f64).abs() / (*b as f64).max(1e-9);
            assert!(rel < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.input_grad(rand_array(3, 2, 400));
        let y = g.relu(x);
        let err = g.backward(y).unwrap_err();
        assert!(err.to_string().contains("scalar"));
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.input_grad(rand_array(2, 2, 401));
        let m = g.mean_all(x);
        g.backward(m).unwrap();
        assert!(g.backward(m).is_err());
    }

    #[test]
    fn empty_graph_backward_is_rejected() {
        let mut g: Graph<f64> = Graph::new();
        assert!(g.backward(NodeId(0)).is_err() || g.nodes.is_empty());
        // calling with no nodes must not panic
        let mut g2: Graph<f64> = Graph::new();
        let err = g2.backward(NodeId(0));
        assert!(err.is_err());
    }

    #[test]
    fn param_gradients_accumulate_across_backward_calls() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.register("w", array![[1.0, 2.0]]);
        for _ in 0..2 {
            let mut g: Graph<f64> = Graph::new();
            let w = g.param(&store, pid);
            let m = g.mean_all(w);
            let grads = g.backward(m).unwrap();
            grads.apply_to(&mut store);
        }
        // each pass contributes 0.5 per element
        assert_eq!(store.grad(pid), &array![[1.0, 1.0]]);
        store.zero_grads();
        assert_eq!(store.grad(pid), &array![[0.0, 0.0]]);
    }

    #[test]
    fn frozen_graph_skips_gradient_bookkeeping() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.register("w", array![[1.0, 2.0]]);
        let mut g: Graph<f64> = Graph::frozen();
        let w = g.param(&store, pid);
        let m = g.mean_all(w);
        assert!(g.backward(m).is_err());
    }
}
