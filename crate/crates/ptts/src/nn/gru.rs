//! Fused gated-recurrent-unit scan with hand-written backpropagation
//! through time.
//!
//! Per step (row convention: states are row vectors, weights right-multiply):
//!
//! ```text
//! z_t = sigmoid(x_t Wx[:, 0:H]   + h_{t-1} Whzr[:, 0:H]  + b[0:H])
//! r_t = sigmoid(x_t Wx[:, H:2H]  + h_{t-1} Whzr[:, H:2H] + b[H:2H])
//! c_t = tanh(  x_t Wx[:, 2H:3H] + (r_t . h_{t-1}) Whc   + b[2H:3H])
//! h_t = (1 - z_t) . h_{t-1} + z_t . c_t
//! ```
//!
//! `reversed: true` scans the sequence back-to-front while keeping outputs
//! aligned with input rows, which is the backward half of a bidirectional
//! layer. Input-side projections are batched as one matmul; only the
//! recurrent part loops.

use ndarray::{s, Array1, Array2, Axis};

use super::graph::{Graph, NodeId};
use super::store::{ParamId, ParamStore};
use super::Real;

/// Parameter handles for one GRU direction.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    /// Input projection, (I x 3H), gate order [z | r | c].
    pub wx: ParamId,
    /// Recurrent projection for z and r, (H x 2H).
    pub wh_zr: ParamId,
    /// Recurrent projection for the candidate, (H x H).
    pub wh_c: ParamId,
    /// Bias row, (1 x 3H).
    pub bias: ParamId,
}

impl GruWeights {
    /// Register Glorot-initialized weights for one direction.
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        GruWeights {
            wx: store.register_glorot(&format!("{prefix}.wx"), input_dim, 3 * hidden, rng),
            wh_zr: store.register_glorot(&format!("{prefix}.wh_zr"), hidden, 2 * hidden, rng),
            wh_c: store.register_glorot(&format!("{prefix}.wh_c"), hidden, hidden, rng),
            bias: store.register_zeros(&format!("{prefix}.bias"), 1, 3 * hidden),
        }
    }

    /// Materialize the weights as graph nodes.
    pub fn nodes<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>) -> GruNodes {
        GruNodes {
            wx: g.param(store, self.wx),
            wh_zr: g.param(store, self.wh_zr),
            wh_c: g.param(store, self.wh_c),
            bias: g.param(store, self.bias),
        }
    }
}

/// Graph-node handles for one GRU direction.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    pub wx: NodeId,
    pub wh_zr: NodeId,
    pub wh_c: NodeId,
    pub bias: NodeId,
}

pub(super) fn gru_op<F: Real>(
    g: &mut Graph<F>,
    x: NodeId,
    w: &GruNodes,
    reversed: bool,
) -> NodeId {
    let vx = g.value_arc(x);
    let wx = g.value_arc(w.wx);
    let wh_zr = g.value_arc(w.wh_zr);
    let wh_c = g.value_arc(w.wh_c);
    let bias = g.value_arc(w.bias);

    let (t_len, input_dim) = vx.dim();
    assert!(t_len > 0, "gru: empty sequence");
    let h = wh_c.nrows();
    assert_eq!(wx.dim(), (input_dim, 3 * h), "gru: Wx shape");
    assert_eq!(wh_zr.dim(), (h, 2 * h), "gru: Whzr shape");
    assert_eq!(bias.dim(), (1, 3 * h), "gru: bias shape");

    // batched input-side pre-activations
    let ax = vx.dot(wx.as_ref()) + &bias.row(0);

    let mut zs: Array2<F> = Array2::zeros((t_len, h));
    let mut rs: Array2<F> = Array2::zeros((t_len, h));
    let mut cs: Array2<F> = Array2::zeros((t_len, h));
    let mut hs: Array2<F> = Array2::zeros((t_len, h));

    let order: Vec<usize> = if reversed {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };

    let mut h_prev: Array1<F> = Array1::zeros(h);
    for &row in &order {
        let hzr = h_prev.dot(wh_zr.as_ref()); // (2H)
        let mut z = Array1::zeros(h);
        let mut r = Array1::zeros(h);
        for i in 0..h {
            z[i] = sigmoid(ax[[row, i]] + hzr[i]);
            r[i] = sigmoid(ax[[row, h + i]] + hzr[h + i]);
        }
        let rh = &r * &h_prev;
        let hc = rh.dot(wh_c.as_ref()); // (H)
        let mut c = Array1::zeros(h);
        let mut h_new = Array1::zeros(h);
        for i in 0..h {
            c[i] = (ax[[row, 2 * h + i]] + hc[i]).tanh();
            h_new[i] = (F::one() - z[i]) * h_prev[i] + z[i] * c[i];
        }
        zs.row_mut(row).assign(&z);
        rs.row_mut(row).assign(&r);
        cs.row_mut(row).assign(&c);
        hs.row_mut(row).assign(&h_new);
        h_prev = h_new;
    }

    let out = hs.clone();
    let wants_grad = g.wants_any(&[x, w.wx, w.wh_zr, w.wh_c, w.bias]);
    let (xn, wxn, whzrn, whcn, biasn) = (x, w.wx, w.wh_zr, w.wh_c, w.bias);
    let backward = move |grad: &Array2<F>, emit: &mut dyn FnMut(NodeId, Array2<F>)| {
        let mut dg: Array2<F> = Array2::zeros((t_len, 3 * h)); // pre-activation grads [z|r|c]
        let mut dh: Array1<F> = Array1::zeros(h);

        for (scan_idx, &row) in order.iter().enumerate().rev() {
            let h_prev_row: Array1<F> = if scan_idx == 0 {
                Array1::zeros(h)
            } else {
                hs.row(order[scan_idx - 1]).to_owned()
            };
            let z = zs.row(row);
            let r = rs.row(row);
            let c = cs.row(row);

            let mut g_total = grad.row(row).to_owned();
            g_total += &dh;

            let mut daz = Array1::zeros(h);
            let mut dac = Array1::zeros(h);
            for i in 0..h {
                daz[i] = g_total[i] * (c[i] - h_prev_row[i]) * z[i] * (F::one() - z[i]);
                dac[i] = g_total[i] * z[i] * (F::one() - c[i] * c[i]);
            }
            let d_rh = dac.dot(&wh_c.t()); // (H)
            let mut dar = Array1::zeros(h);
            for i in 0..h {
                dar[i] = d_rh[i] * h_prev_row[i] * r[i] * (F::one() - r[i]);
            }

            // carry to the previous step
            let mut dzr = Array1::zeros(2 * h);
            for i in 0..h {
                dzr[i] = daz[i];
                dzr[h + i] = dar[i];
            }
            let via_zr = dzr.dot(&wh_zr.t()); // (H)
            for i in 0..h {
                dh[i] = g_total[i] * (F::one() - z[i]) + via_zr[i] + d_rh[i] * r[i];
            }

            for i in 0..h {
                dg[[row, i]] = daz[i];
                dg[[row, h + i]] = dar[i];
                dg[[row, 2 * h + i]] = dac[i];
            }
        }

        // batched weight and input gradients
        emit(wxn, vx.t().dot(&dg));
        emit(biasn, dg.sum_axis(Axis(0)).insert_axis(Axis(0)));
        emit(xn, dg.dot(&wx.t()));

        let mut h_prev_mat: Array2<F> = Array2::zeros((t_len, h));
        for (scan_idx, &row) in order.iter().enumerate() {
            if scan_idx > 0 {
                let src = order[scan_idx - 1];
                // borrow both rows via split
                let prev = hs.row(src).to_owned();
                h_prev_mat.row_mut(row).assign(&prev);
            }
        }
        emit(whzrn, h_prev_mat.t().dot(&dg.slice(s![.., 0..2 * h])));
        let rh_mat = &rs * &h_prev_mat;
        emit(whcn, rh_mat.t().dot(&dg.slice(s![.., 2 * h..3 * h])));
    };

    g.push_op(
        out,
        wants_grad,
        Some(Box::new(move |grad, emit| backward(grad, emit))),
    )
}

fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// Forward + backward GRU over the same input, concatenated to 2H columns
/// and linearly projected to `proj` columns.
pub struct BiGru {
    pub fwd: GruWeights,
    pub bwd: GruWeights,
    /// (2H x proj) output projection.
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl BiGru {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        proj: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        BiGru {
            fwd: GruWeights::register(store, &format!("{prefix}.fwd"), input_dim, hidden, rng),
            bwd: GruWeights::register(store, &format!("{prefix}.bwd"), input_dim, hidden, rng),
            proj_w: store.register_glorot(&format!("{prefix}.proj_w"), 2 * hidden, proj, rng),
            proj_b: store.register_zeros(&format!("{prefix}.proj_b"), 1, proj),
        }
    }

    /// Concatenated bidirectional states before the output projection.
    pub fn forward_concat<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let fwd_nodes = self.fwd.nodes(g, store);
        let bwd_nodes = self.bwd.nodes(g, store);
        let hf = g.gru(x, &fwd_nodes, false);
        let hb = g.gru(x, &bwd_nodes, true);
        g.concat_cols(&[hf, hb])
    }

    /// Full bidirectional layer: concat then linear projection.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> NodeId {
        let cat = self.forward_concat(g, store, x);
        let w = g.param(store, self.proj_w);
        let b = g.param(store, self.proj_b);
        let y = g.matmul(cat, w);
        g.add_bias(y, b)
    }
}
