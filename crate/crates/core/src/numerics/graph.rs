//! Eagerly-evaluated computation graph with reverse-mode gradients.
//!
//! Values are computed as the graph is built; `backward` replays the
//! recorded operations in reverse and accumulates vector-Jacobian products.
//! Parameter leaves remember their [`ParamId`] so gradients can be flushed
//! back into a [`ParamStore`] after the pass.

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};

/// Handle to one value node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = W x with W row-major (rows, cols).
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddConst { x: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Exp { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Sum { x: NodeId },
    Dot { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId> },
    Slice { x: NodeId, start: usize, len: usize },
    Softmax { x: NodeId },
    /// out = s * x with s a scalar node.
    ScaleBy { x: NodeId, s: NodeId },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatVec { .. } => "matvec",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::AddConst { .. } => "add_const",
            Op::Tanh { .. } => "tanh",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Exp { .. } => "exp",
            Op::Clamp { .. } => "clamp",
            Op::Sum { .. } => "sum",
            Op::Dot { .. } => "dot",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Softmax { .. } => "softmax",
            Op::ScaleBy { .. } => "scale_by",
        }
    }
}

/// Computation graph bound to one parameter store.
pub struct Graph<'a> {
    store: &'a ParamStore,
    data: Vec<Vec<f64>>,
    ops: Vec<Op>,
    /// Leaf node per parameter, created on first use. One leaf per param
    /// keeps memory flat when the same network runs at every time step,
    /// and gives a deterministic gradient accumulation order.
    param_leaves: Vec<Option<NodeId>>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            data: Vec::new(),
            ops: Vec::new(),
            param_leaves: vec![None; store.len()],
        }
    }

    fn push(&mut self, values: Vec<f64>, op: Op) -> NodeId {
        self.data.push(values);
        self.ops.push(op);
        NodeId(self.data.len() - 1)
    }

    /// Values of a node.
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.data[id.0]
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.data[id.0].len(), 1);
        self.data[id.0][0]
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.data[id.0].len()
    }

    pub fn num_nodes(&self) -> usize {
        self.data.len()
    }

    // ── Leaves ──────────────────────────────────────────────────────

    /// Leaf holding a copy of a parameter's current values. Repeated calls
    /// for the same parameter return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_leaves[id.0] {
            return node;
        }
        let values = self.store.values(id).to_vec();
        let node = self.push(values, Op::Leaf);
        self.param_leaves[id.0] = Some(node);
        node
    }

    /// Constant leaf (inputs, targets, noise draws).
    pub fn input(&mut self, values: &[f64]) -> NodeId {
        self.push(values.to_vec(), Op::Leaf)
    }

    pub fn input_owned(&mut self, values: Vec<f64>) -> NodeId {
        self.push(values, Op::Leaf)
    }

    // ── Operations ──────────────────────────────────────────────────

    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(self.data[w.0].len(), rows * cols);
        debug_assert_eq!(self.data[x.0].len(), cols);
        let mut out = vec![0.0; rows];
        let wv = &self.data[w.0];
        let xv = &self.data[x.0];
        for i in 0..rows {
            let row = &wv[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for j in 0..cols {
                acc += row[j] * xv[j];
            }
            out[i] = acc;
        }
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.data[a.0].len(), self.data[b.0].len());
        let out = self.data[a.0]
            .iter()
            .zip(&self.data[b.0])
            .map(|(x, y)| x + y)
            .collect();
        self.push(out, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.data[a.0].len(), self.data[b.0].len());
        let out = self.data[a.0]
            .iter()
            .zip(&self.data[b.0])
            .map(|(x, y)| x - y)
            .collect();
        self.push(out, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.data[a.0].len(), self.data[b.0].len());
        let out = self.data[a.0]
            .iter()
            .zip(&self.data[b.0])
            .map(|(x, y)| x * y)
            .collect();
        self.push(out, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.data[x.0].iter().map(|v| c * v).collect();
        self.push(out, Op::Scale { x, c })
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.data[x.0].iter().map(|v| v + c).collect();
        self.push(out, Op::AddConst { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.data[x.0].iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.data[x.0].iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        self.push(out, Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = self.data[x.0].iter().map(|v| v.exp()).collect();
        self.push(out, Op::Exp { x })
    }

    /// Elementwise clamp; gradient is passed through strictly inside the
    /// bounds and zero outside.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.data[x.0].iter().map(|v| v.clamp(lo, hi)).collect();
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.data[x.0].iter().sum();
        self.push(vec![s], Op::Sum { x })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.data[a.0].len(), self.data[b.0].len());
        let s: f64 = self.data[a.0].iter().zip(&self.data[b.0]).map(|(x, y)| x * y).sum();
        self.push(vec![s], Op::Dot { a, b })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.data[p.0]);
        }
        self.push(out, Op::Concat { parts: parts.to_vec() })
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        debug_assert!(start + len <= self.data[x.0].len());
        let out = self.data[x.0][start..start + len].to_vec();
        self.push(out, Op::Slice { x, start, len })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.data[x.0];
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = exps.iter().map(|e| e / total).collect();
        self.push(out, Op::Softmax { x })
    }

    /// Multiply a vector by a scalar node.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> NodeId {
        debug_assert_eq!(self.data[s.0].len(), 1);
        let sv = self.data[s.0][0];
        let out = self.data[x.0].iter().map(|v| sv * v).collect();
        self.push(out, Op::ScaleBy { x, s })
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.scale(x, -1.0)
    }

    /// Sum of a list of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "sum_scalars over empty list");
        let joined = self.concat(xs);
        self.sum(joined)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a finite scalar `loss`. Gradients accumulate into
    /// a per-node buffer; use [`Graph::collect_param_grads`] or
    /// [`backprop_into`] to move parameter-leaf gradients into the store.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.data[loss.0].len() != 1 {
            return Err(Error::config("backward requires a scalar loss node"));
        }
        let lv = self.data[loss.0][0];
        if !lv.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite loss {lv} produced by `{}` node {}",
                self.ops[loss.0].kind(),
                loss.0
            )));
        }

        let mut grads: Vec<Vec<f64>> = self.data.iter().map(|d| vec![0.0; d.len()]).collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..self.ops.len()).rev() {
            let op = self.ops[idx].clone();
            let out = idx;
            match op {
                Op::Leaf => {}
                Op::MatVec { w, x, rows, cols } => {
                    let (gw, gx, gout) = {
                        let gout = grads[out].clone();
                        let wv = &self.data[w.0];
                        let xv = &self.data[x.0];
                        let mut gw = vec![0.0; rows * cols];
                        let mut gx = vec![0.0; cols];
                        for i in 0..rows {
                            let gi = gout[i];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &wv[i * cols..(i + 1) * cols];
                            let grow = &mut gw[i * cols..(i + 1) * cols];
                            for j in 0..cols {
                                grow[j] += gi * xv[j];
                                gx[j] += gi * row[j];
                            }
                        }
                        (gw, gx, gout)
                    };
                    let _ = gout;
                    add_into(&mut grads[w.0], &gw);
                    add_into(&mut grads[x.0], &gx);
                }
                Op::Add { a, b } => {
                    let gout = grads[out].clone();
                    add_into(&mut grads[a.0], &gout);
                    add_into(&mut grads[b.0], &gout);
                }
                Op::Sub { a, b } => {
                    let gout = grads[out].clone();
                    add_into(&mut grads[a.0], &gout);
                    sub_into(&mut grads[b.0], &gout);
                }
                Op::Mul { a, b } => {
                    let gout = grads[out].clone();
                    let ga: Vec<f64> = gout.iter().zip(&self.data[b.0]).map(|(g, v)| g * v).collect();
                    let gb: Vec<f64> = gout.iter().zip(&self.data[a.0]).map(|(g, v)| g * v).collect();
                    add_into(&mut grads[a.0], &ga);
                    add_into(&mut grads[b.0], &gb);
                }
                Op::Scale { x, c } => {
                    let g: Vec<f64> = grads[out].iter().map(|g| c * g).collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::AddConst { x } => {
                    let gout = grads[out].clone();
                    add_into(&mut grads[x.0], &gout);
                }
                Op::Tanh { x } => {
                    let g: Vec<f64> = grads[out]
                        .iter()
                        .zip(&self.data[out])
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::Sigmoid { x } => {
                    let g: Vec<f64> = grads[out]
                        .iter()
                        .zip(&self.data[out])
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::Exp { x } => {
                    let g: Vec<f64> = grads[out]
                        .iter()
                        .zip(&self.data[out])
                        .map(|(g, y)| g * y)
                        .collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::Clamp { x, lo, hi } => {
                    let g: Vec<f64> = grads[out]
                        .iter()
                        .zip(&self.data[x.0])
                        .map(|(g, v)| if *v > lo && *v < hi { *g } else { 0.0 })
                        .collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::Sum { x } => {
                    let g = grads[out][0];
                    for gi in grads[x.0].iter_mut() {
                        *gi += g;
                    }
                }
                Op::Dot { a, b } => {
                    let g = grads[out][0];
                    let ga: Vec<f64> = self.data[b.0].iter().map(|v| g * v).collect();
                    let gb: Vec<f64> = self.data[a.0].iter().map(|v| g * v).collect();
                    add_into(&mut grads[a.0], &ga);
                    add_into(&mut grads[b.0], &gb);
                }
                Op::Concat { parts } => {
                    let gout = grads[out].clone();
                    let mut offset = 0;
                    for p in parts {
                        let n = self.data[p.0].len();
                        add_into(&mut grads[p.0], &gout[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice { x, start, len } => {
                    let gout = grads[out].clone();
                    let gx = &mut grads[x.0];
                    for k in 0..len {
                        gx[start + k] += gout[k];
                    }
                }
                Op::Softmax { x } => {
                    let gout = grads[out].clone();
                    let y = &self.data[out];
                    let dot: f64 = gout.iter().zip(y).map(|(g, v)| g * v).sum();
                    let g: Vec<f64> = gout.iter().zip(y).map(|(g, v)| v * (g - dot)).collect();
                    add_into(&mut grads[x.0], &g);
                }
                Op::ScaleBy { x, s } => {
                    let gout = grads[out].clone();
                    let sv = self.data[s.0][0];
                    let gx: Vec<f64> = gout.iter().map(|g| sv * g).collect();
                    let gs: f64 = gout.iter().zip(&self.data[x.0]).map(|(g, v)| g * v).sum();
                    add_into(&mut grads[x.0], &gx);
                    grads[s.0][0] += gs;
                }
            }
        }

        Ok(Gradients { grads })
    }

    /// Gradients for every parameter leaf, in parameter order. Apply with
    /// [`ParamStore::accumulate_grad`] once the graph is dropped.
    pub fn collect_param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Vec<f64>)> {
        self.param_leaves
            .iter()
            .enumerate()
            .filter_map(|(i, node)| node.map(|n| (ParamId(i), grads.grads[n.0].clone())))
            .collect()
    }
}

/// Per-node gradient buffers from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn of(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sub_into(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d -= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("v", (2, 1), vec![3.0, 4.0]);
        let mut g = Graph::new(&store);
        let leaf = g.param(p);
        let loss = g.sum(leaf);
        assert_eq!(g.scalar(loss), 7.0);
        let grads = g.backward(loss).unwrap();
        let pairs = g.collect_param_grads(&grads);
        drop(g);
        for (pid, gv) in pairs {
            store.accumulate_grad(pid, &gv);
        }
        assert_eq!(store.get(p).grad, vec![1.0, 1.0]);
    }

    #[test]
    fn quadratic_form_gradient_by_hand() {
        // loss = ||W x||^2 with W = I2, x = [1, 2].
        // d loss / d W_ij = 2 (W x)_i x_j -> [[2, 4], [4, 8]].
        let mut store = ParamStore::new();
        let w = store.add("w", (2, 2), vec![1.0, 0.0, 0.0, 1.0]);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let x = g.input(&[1.0, 2.0]);
        let y = g.matvec(wn, x, 2, 2);
        let loss = g.dot(y, y);
        assert_eq!(g.scalar(loss), 5.0);
        let grads = g.backward(loss).unwrap();
        let pairs = g.collect_param_grads(&grads);
        drop(g);
        for (pid, gv) in pairs {
            store.accumulate_grad(pid, &gv);
        }
        let gw = &store.get(w).grad;
        let expect = [2.0, 4.0, 4.0, 8.0];
        for (a, e) in gw.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-12, "got {gw:?}");
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::new();
        let p = store.add("v", (2, 1), vec![1.0, 1.0]);
        for _ in 0..2 {
            let mut g = Graph::new(&store);
            let leaf = g.param(p);
            let loss = g.sum(leaf);
            let grads = g.backward(loss).unwrap();
            let pairs = g.collect_param_grads(&grads);
            drop(g);
            for (pid, gv) in pairs {
                store.accumulate_grad(pid, &gv);
            }
        }
        assert_eq!(store.get(p).grad, vec![2.0, 2.0]);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(&[1e308]);
        let y = g.exp(x);
        let loss = g.sum(y);
        let err = g.backward(loss).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let xv = [0.3, -1.2, 0.7];
        let weights = [0.2, 0.5, 0.3];
        let f = |x: &[f64]| -> f64 {
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().zip(weights.iter()).map(|(p, w)| w * p / s).sum()
        };
        let mut store = ParamStore::new();
        let p = store.add("x", (3, 1), xv.to_vec());
        let mut g = Graph::new(&store);
        let leaf = g.param(p);
        let sm = g.softmax(leaf);
        let wn = g.input(&weights);
        let loss = g.dot(sm, wn);
        let grads = g.backward(loss).unwrap();
        let pairs = g.collect_param_grads(&grads);
        drop(g);
        for (pid, gv) in pairs {
            store.accumulate_grad(pid, &gv);
        }

        let h = 1e-6;
        for i in 0..3 {
            let mut xp = xv;
            xp[i] += h;
            let mut xm = xv;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let an = store.get(p).grad[i];
            assert!((fd - an).abs() < 1e-8, "dim {i}: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn scale_by_and_slice_gradients() {
        // loss = s * sum(x[0..2]) with s = 2, x = [1, 2, 3].
        let mut store = ParamStore::new();
        let xp = store.add("x", (3, 1), vec![1.0, 2.0, 3.0]);
        let sp = store.add("s", (1, 1), vec![2.0]);
        let mut g = Graph::new(&store);
        let x = g.param(xp);
        let s = g.param(sp);
        let head = g.slice(x, 0, 2);
        let summed = g.sum(head);
        let loss = g.scale_by(summed, s);
        assert_eq!(g.scalar(loss), 6.0);
        let grads = g.backward(loss).unwrap();
        let pairs = g.collect_param_grads(&grads);
        drop(g);
        for (pid, gv) in pairs {
            store.accumulate_grad(pid, &gv);
        }
        assert_eq!(store.get(xp).grad, vec![2.0, 2.0, 0.0]);
        assert_eq!(store.get(sp).grad, vec![3.0]);
    }
}
