//! Minimal reverse-mode gradient engine over dense matrices.
//!
//! A forward pass appends nodes to a [`Graph`]; `backward` walks the nodes in
//! reverse, accumulating gradients into per-parameter slots. Parameters live
//! in named stores outside the graph; a `Param` leaf records which store and
//! tensor it mirrors. Gradients of frozen tensors are never produced.

use crate::error::{Error, Result};
use crate::model::ParameterStore;
use crate::tensor::{Mat, Real};

pub type NodeId = usize;

/// Which parameter store a leaf belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreKind {
    Backbone,
    Adapter,
}

enum Op<F: Real> {
    /// Constant input; no gradient.
    Value,
    Param {
        store: StoreKind,
        idx: usize,
    },
    MatMulNN(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Row-broadcast bias add: rhs is 1 x cols.
    AddBias(NodeId, NodeId),
    Scale(NodeId, F),
    Gelu(NodeId),
    /// Row-wise softmax; any additive mask was already folded into the
    /// saved output, which is all backward needs.
    SoftmaxRows(NodeId),
    LayerNorm {
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
    /// Gather rows of `table` at `ids`.
    Embed {
        table: NodeId,
        ids: Vec<usize>,
    },
    SliceCols {
        input: NodeId,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<NodeId>),
    /// Mean token negative log-likelihood with optional label smoothing.
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        smoothing: F,
    },
}

struct Node<F: Real> {
    op: Op<F>,
    value: Mat<F>,
    /// Saved forward intermediates needed by backward (softmax probs are the
    /// node value itself; layer norm saves xhat and per-row inverse stddev).
    aux_mat: Option<Mat<F>>,
    aux_vec: Option<Vec<F>>,
}

const LN_EPS: f64 = 1e-5;

pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients aligned with the tensor indices of the stores passed to
/// [`Graph::backward`]. Frozen tensors keep `None`.
pub struct Gradients<F: Real> {
    pub backbone: Vec<Option<Mat<F>>>,
    pub adapter: Vec<Option<Mat<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn accumulate(&mut self, other: &Gradients<F>) {
        fn acc<F: Real>(dst: &mut [Option<Mat<F>>], src: &[Option<Mat<F>>]) {
            for (d, s) in dst.iter_mut().zip(src) {
                match (d.as_mut(), s) {
                    (Some(dm), Some(sm)) => dm.add_assign(sm),
                    (None, Some(sm)) => *d = Some(sm.clone()),
                    _ => {}
                }
            }
        }
        acc(&mut self.backbone, &other.backbone);
        acc(&mut self.adapter, &other.adapter);
    }

    pub fn scale(&mut self, s: F) {
        for g in self.backbone.iter_mut().chain(self.adapter.iter_mut()).flatten() {
            for v in g.as_mut_slice() {
                *v *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .backbone
            .iter()
            .chain(self.adapter.iter())
            .flatten()
            .map(Mat::squared_norm)
            .sum();
        sq.sqrt()
    }
}

fn gelu_f64(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad_f64(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<F>, value: Mat<F>) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            aux_mat: None,
            aux_vec: None,
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Mat<F> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> F {
        debug_assert_eq!(self.nodes[id].value.shape(), (1, 1));
        self.nodes[id].value.get(0, 0)
    }

    pub fn input(&mut self, m: Mat<F>) -> NodeId {
        self.push(Op::Value, m)
    }

    pub fn param(&mut self, store: StoreKind, idx: usize, value: Mat<F>) -> NodeId {
        self.push(Op::Param { store, idx }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul_nn(&self.nodes[b].value);
        self.push(Op::MatMulNN(a, b), v)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul_nt(&self.nodes[b].value);
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.add(&self.nodes[b].value);
        self.push(Op::Add(a, b), v)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (rows, cols) = self.nodes[a].value.shape();
        assert_eq!(self.nodes[bias].value.shape(), (1, cols), "bias shape");
        let mut v = self.nodes[a].value.clone();
        for r in 0..rows {
            for c in 0..cols {
                let b = self.nodes[bias].value.get(0, c);
                let x = v.get(r, c);
                v.set(r, c, x + b);
            }
        }
        self.push(Op::AddBias(a, bias), v)
    }

    pub fn scale(&mut self, a: NodeId, s: F) -> NodeId {
        let v = self.nodes[a].value.scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| F::from_f64c(gelu_f64(x.to_f64c())));
        self.push(Op::Gelu(a), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId, mask: Option<Mat<F>>) -> NodeId {
        let x = &self.nodes[a].value;
        if let Some(m) = &mask {
            assert_eq!(m.shape(), x.shape(), "mask shape");
        }
        let (rows, cols) = x.shape();
        let mut v = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut logits: Vec<f64> = (0..cols).map(|c| x.get(r, c).to_f64c()).collect();
            if let Some(m) = &mask {
                for (c, l) in logits.iter_mut().enumerate() {
                    *l += m.get(r, c).to_f64c();
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                v.set(r, c, F::from_f64c(e / sum));
            }
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Per-row layer normalization with learned scale/shift (each 1 x cols).
    pub fn layer_norm(&mut self, input: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let x = &self.nodes[input].value;
        let (rows, cols) = x.shape();
        assert_eq!(self.nodes[scale].value.shape(), (1, cols), "ln scale shape");
        assert_eq!(self.nodes[shift].value.shape(), (1, cols), "ln shift shape");
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        let mut v = Mat::zeros(rows, cols);
        for r in 0..rows {
            let row: Vec<f64> = x.row(r).iter().map(|x| x.to_f64c()).collect();
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(F::from_f64c(inv));
            for (c, xv) in row.iter().enumerate() {
                let xh = (xv - mean) * inv;
                xhat.set(r, c, F::from_f64c(xh));
                let g = self.nodes[scale].value.get(0, c).to_f64c();
                let b = self.nodes[shift].value.get(0, c).to_f64c();
                v.set(r, c, F::from_f64c(xh * g + b));
            }
        }
        let id = self.push(Op::LayerNorm { input, scale, shift }, v);
        self.nodes[id].aux_mat = Some(xhat);
        self.nodes[id].aux_vec = Some(inv_std);
        id
    }

    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.nodes[table].value;
        let cols = t.cols();
        let mut v = Mat::zeros(ids.len(), cols);
        for (r, &id) in ids.iter().enumerate() {
            assert!(id < t.rows(), "embed id {id} out of range {}", t.rows());
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            v,
        )
    }

    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> NodeId {
        let x = &self.nodes[input].value;
        let (rows, cols) = x.shape();
        assert!(start + len <= cols, "slice out of range");
        let mut v = Mat::zeros(rows, len);
        for r in 0..rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { input, start, len }, v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0]].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p].value.cols()).sum();
        let mut v = Mat::zeros(rows, total);
        let mut at = 0;
        for &p in parts {
            let m = &self.nodes[p].value;
            assert_eq!(m.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                v.row_mut(r)[at..at + m.cols()].copy_from_slice(m.row(r));
            }
            at += m.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, with label smoothing mass `smoothing` spread uniformly.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], smoothing: F) -> Result<NodeId> {
        let x = &self.nodes[logits].value;
        let (rows, cols) = x.shape();
        if rows != targets.len() {
            return Err(Error::Shape(format!(
                "cross_entropy: {rows} logit rows vs {} targets",
                targets.len()
            )));
        }
        let eps = smoothing.to_f64c();
        let mut probs = Mat::zeros(rows, cols);
        let mut total = 0.0;
        for r in 0..rows {
            let row: Vec<f64> = x.row(r).iter().map(|x| x.to_f64c()).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let log_sum = sum.ln() + max;
            let y = targets[r];
            if y >= cols {
                return Err(Error::Shape(format!("target id {y} out of vocab {cols}")));
            }
            let mut loss_r = (1.0 - eps) * (log_sum - row[y]);
            if eps > 0.0 {
                let mean_logp: f64 = row.iter().map(|l| l - log_sum).sum::<f64>() / cols as f64;
                loss_r -= eps * mean_logp;
            }
            total += loss_r;
            for (c, e) in exps.iter().enumerate() {
                probs.set(r, c, F::from_f64c(e / sum));
            }
        }
        let loss = total / rows as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "cross entropy produced {loss} over {rows} targets"
            )));
        }
        let id = self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                smoothing,
            },
            Mat::from_vec(1, 1, vec![F::from_f64c(loss)]),
        );
        self.nodes[id].aux_mat = Some(probs);
        Ok(id)
    }

    /// Reverse-mode sweep from `loss` (a 1x1 node). Gradient slots align with
    /// the tensor order of the given stores; frozen tensors stay `None`.
    pub fn backward(
        &self,
        loss: NodeId,
        backbone: &ParameterStore<F>,
        adapter: Option<&ParameterStore<F>>,
    ) -> Gradients<F> {
        let mut grads: Vec<Option<Mat<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Mat::from_vec(1, 1, vec![F::one()]));

        let mut out = Gradients {
            backbone: (0..backbone.len()).map(|_| None).collect(),
            adapter: (0..adapter.map_or(0, ParameterStore::len)).map(|_| None).collect(),
        };

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Value => {}
                Op::Param { store, idx } => {
                    let (slot, frozen) = match store {
                        StoreKind::Backbone => {
                            (&mut out.backbone[*idx], backbone.tensor(*idx).frozen)
                        }
                        StoreKind::Adapter => {
                            let ad = adapter.expect("adapter grads without adapter store");
                            (&mut out.adapter[*idx], ad.tensor(*idx).frozen)
                        }
                    };
                    if !frozen {
                        match slot {
                            Some(acc) => acc.add_assign(&g),
                            None => *slot = Some(g),
                        }
                    }
                }
                Op::MatMulNN(a, b) => {
                    let da = g.matmul_nt(&self.nodes[*b].value);
                    let db = self.nodes[*a].value.matmul_tn(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    let da = g.matmul_nn(&self.nodes[*b].value);
                    let db = g.matmul_tn(&self.nodes[*a].value);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddBias(a, bias) => {
                    let cols = g.cols();
                    let mut db = Mat::zeros(1, cols);
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            let v = db.get(0, c) + g.get(r, c);
                            db.set(0, c, v);
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, *a, g.scale(*s));
                }
                Op::Gelu(a) => {
                    let x = &self.nodes[*a].value;
                    let mut da = g.clone();
                    for (d, xv) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d = *d * F::from_f64c(gelu_grad_f64(xv.to_f64c()));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(input) => {
                    let y = &self.nodes[id].value;
                    let (rows, cols) = y.shape();
                    let mut da = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let dot: f64 = (0..cols)
                            .map(|c| g.get(r, c).to_f64c() * y.get(r, c).to_f64c())
                            .sum();
                        for c in 0..cols {
                            let yv = y.get(r, c).to_f64c();
                            let gv = g.get(r, c).to_f64c();
                            da.set(r, c, F::from_f64c(yv * (gv - dot)));
                        }
                    }
                    accumulate(&mut grads, *input, da);
                }
                Op::LayerNorm { input, scale, shift } => {
                    let xhat = self.nodes[id].aux_mat.as_ref().expect("ln aux");
                    let inv_std = self.nodes[id].aux_vec.as_ref().expect("ln aux");
                    let (rows, cols) = xhat.shape();
                    let gamma = &self.nodes[*scale].value;
                    let mut dgamma = Mat::zeros(1, cols);
                    let mut dbeta = Mat::zeros(1, cols);
                    let mut dx = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        let mut dxhat_row = vec![0.0f64; cols];
                        for c in 0..cols {
                            let gv = g.get(r, c).to_f64c();
                            let xh = xhat.get(r, c).to_f64c();
                            dgamma.set(0, c, dgamma.get(0, c) + F::from_f64c(gv * xh));
                            dbeta.set(0, c, dbeta.get(0, c) + F::from_f64c(gv));
                            let dxh = gv * gamma.get(0, c).to_f64c();
                            dxhat_row[c] = dxh;
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xh;
                        }
                        mean_dxhat /= cols as f64;
                        mean_dxhat_xhat /= cols as f64;
                        let inv = inv_std[r].to_f64c();
                        for c in 0..cols {
                            let xh = xhat.get(r, c).to_f64c();
                            let v = inv * (dxhat_row[c] - mean_dxhat - xh * mean_dxhat_xhat);
                            dx.set(r, c, F::from_f64c(v));
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *scale, dgamma);
                    accumulate(&mut grads, *shift, dbeta);
                }
                Op::Embed { table, ids } => {
                    let t = &self.nodes[*table].value;
                    let mut dt = Mat::zeros(t.rows(), t.cols());
                    for (r, &tok) in ids.iter().enumerate() {
                        for c in 0..t.cols() {
                            let v = dt.get(tok, c) + g.get(r, c);
                            dt.set(tok, c, v);
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::SliceCols { input, start, len } => {
                    let x = &self.nodes[*input].value;
                    let mut dx = Mat::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        dx.row_mut(r)[*start..*start + *len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let cols = self.nodes[p].value.cols();
                        let rows = self.nodes[p].value.rows();
                        let mut dp = Mat::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[at..at + cols]);
                        }
                        accumulate(&mut grads, p, dp);
                        at += cols;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    smoothing,
                } => {
                    let probs = self.nodes[id].aux_mat.as_ref().expect("ce aux");
                    let (rows, cols) = probs.shape();
                    let upstream = g.get(0, 0).to_f64c();
                    let eps = smoothing.to_f64c();
                    let mut dl = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let t = if c == targets[r] { 1.0 - eps } else { 0.0 } + eps / cols as f64;
                            let v = (probs.get(r, c).to_f64c() - t) * upstream / rows as f64;
                            dl.set(r, c, F::from_f64c(v));
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }
        out
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Mat<F>>], id: NodeId, g: Mat<F>) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Additive causal mask: position j may attend to positions <= j.
pub fn causal_mask<F: Real>(n: usize) -> Mat<F> {
    let neg = F::from_f64c(-1e30);
    Mat::from_fn(n, n, |r, c| if c > r { neg } else { F::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterStore;

    /// Finite-difference check for a scalar-valued builder over one input.
    fn check_grad(build: impl Fn(&mut Graph<f64>, NodeId) -> NodeId, x0: Mat<f64>) {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("x", x0.clone(), false);
        let run = |x: &Mat<f64>| -> (f64, Option<Mat<f64>>) {
            let mut g = Graph::new();
            let xn = g.param(StoreKind::Backbone, 0, x.clone());
            let loss = build(&mut g, xn);
            let val = g.scalar(loss);
            let grads = g.backward(loss, &store, None);
            (val, grads.backbone.into_iter().next().unwrap())
        };
        let (_, grad) = run(&x0);
        let grad = grad.expect("gradient produced");
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut plus = x0.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = x0.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (run(&plus).0 - run(&minus).0) / (2.0 * h);
            let an = grad.as_slice()[i];
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                ((fd - an) / denom).abs() < 1e-5,
                "coord {i}: fd {fd} vs analytic {an}"
            );
        }
    }

    fn sum_all(g: &mut Graph<f64>, x: NodeId) -> NodeId {
        // Reduce to a scalar via matmuls with ones.
        let (r, c) = g.value(x).shape();
        let ones_r = g.input(Mat::from_fn(1, r, |_, _| 1.0));
        let ones_c = g.input(Mat::from_fn(c, 1, |_, _| 1.0));
        let row = g.matmul(ones_r, x);
        g.matmul(row, ones_c)
    }

    #[test]
    fn grad_matmul_and_gelu() {
        let x = Mat::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.3, 0.0, -0.7]);
        check_grad(
            |g, xn| {
                let w = g.input(Mat::from_vec(3, 2, vec![0.2, -0.4, 1.0, 0.1, -0.3, 0.6]));
                let y = g.matmul(xn, w);
                let a = g.gelu(y);
                sum_all(g, a)
            },
            x,
        );
    }

    #[test]
    fn grad_softmax_masked() {
        let x = Mat::from_vec(2, 2, vec![0.1, 0.9, -0.4, 0.6]);
        check_grad(
            |g, xn| {
                let sm = g.softmax_rows(xn, Some(causal_mask(2)));
                let w = g.input(Mat::from_vec(2, 1, vec![1.3, -0.8]));
                let y = g.matmul(sm, w);
                sum_all(g, y)
            },
            x,
        );
    }

    #[test]
    fn grad_layer_norm() {
        let x = Mat::from_vec(2, 4, vec![0.5, -1.0, 2.0, 0.3, 1.5, 0.2, -0.6, 0.9]);
        check_grad(
            |g, xn| {
                let scale = g.input(Mat::from_vec(1, 4, vec![1.1, 0.9, 1.0, 1.2]));
                let shift = g.input(Mat::from_vec(1, 4, vec![0.0, 0.1, -0.2, 0.3]));
                let y = g.layer_norm(xn, scale, shift);
                let sq = g.matmul_nt(y, y);
                sum_all(g, sq)
            },
            x,
        );
    }

    #[test]
    fn grad_cross_entropy_with_smoothing() {
        let x = Mat::from_vec(2, 3, vec![0.2, -0.1, 0.5, 1.0, 0.0, -1.0]);
        check_grad(|g, xn| g.cross_entropy(xn, &[2, 0], 0.1).unwrap(), x);
    }

    #[test]
    fn grad_embed_slice_concat_bias() {
        let table = Mat::from_vec(3, 4, vec![
            0.1, -0.2, 0.3, 0.4, 0.5, 0.6, -0.7, 0.8, 0.9, 1.0, 1.1, -1.2,
        ]);
        check_grad(
            |g, t| {
                let e = g.embed(t, &[0, 2, 2]);
                let a = g.slice_cols(e, 0, 2);
                let b = g.slice_cols(e, 2, 2);
                let cat = g.concat_cols(&[b, a]);
                let bias = g.input(Mat::from_vec(1, 4, vec![0.5, -0.5, 0.25, 0.0]));
                let y = g.add_bias(cat, bias);
                let sq = g.matmul_nt(y, y);
                sum_all(g, sq)
            },
            table,
        );
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("w", Mat::from_vec(1, 2, vec![0.3, 0.7]), true);
        let mut g = Graph::new();
        let w = g.param(StoreKind::Backbone, 0, store.tensor(0).data.clone());
        let loss = g.cross_entropy(w, &[1], 0.0).unwrap();
        let grads = g.backward(loss, &store, None);
        assert!(grads.backbone[0].is_none());
    }

    #[test]
    fn uniform_logits_lose_ln_vocab() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.input(Mat::zeros(3, 7));
        let loss = g.cross_entropy(logits, &[0, 3, 6], 0.0).unwrap();
        assert!((g.scalar(loss) - (7.0f64).ln()).abs() < 1e-12);
    }
}
