//! Reusable layer parameter bundles: convolution and dense pairs.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::store::{ParamId, ParamStore};
use super::Real;

/// Convolution parameter pair plus its kernel size.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams {
    pub w: ParamId,
    pub b: ParamId,
    pub k: usize,
}

impl ConvParams {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        k: usize,
        c_in: usize,
        c_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        ConvParams {
            w: store.register_glorot(&format!("{name}.w"), k * c_in, c_out, rng),
            b: store.register_zeros(&format!("{name}.b"), 1, c_out),
            k,
        }
    }

    pub fn apply<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> NodeId {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.conv1d(x, w, b, self.k)
    }
}

/// Dense head (matmul + bias).
#[derive(Debug, Clone, Copy)]
pub struct DenseParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseParams {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        DenseParams {
            w: store.register_glorot(&format!("{name}.w"), c_in, c_out, rng),
            b: store.register_zeros(&format!("{name}.b"), 1, c_out),
        }
    }

    pub fn apply<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> NodeId {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }
}

