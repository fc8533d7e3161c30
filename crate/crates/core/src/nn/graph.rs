//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order; [`Graph::backward`] walks it once in reverse and skips
//! every node that received no upstream gradient.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside the cross-entropy.
pub const PROB_EPSILON: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        cols: Vec<f64>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Softmax(Var),
    Concat(Var, Var),
    StopGradient,
    Reshape(Var),
    CrossEntropy {
        probs: Var,
        targets: Vec<usize>,
        clamped: Vec<bool>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of one scalar with respect to every node of the graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence
    /// the differentiated scalar (including through a stop-gradient).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Sum of gradients reaching every leaf bound to `id`; `None` if no
    /// gradient reached it.
    pub fn param(&self, id: ParamId) -> Option<Tensor> {
        let mut acc: Option<Tensor> = None;
        for &(pid, node) in &self.params {
            if pid != id {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                match &mut acc {
                    Some(a) => a.add_assign(g),
                    None => acc = Some(g.clone()),
                }
            }
        }
        acc
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    clamp_events: usize,
}

fn view2<'a>(data: &'a [f64], rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn view2_mut<'a>(data: &'a mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of cross-entropy rows whose target probability was clamped.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant leaf; never receives a gradient it passes anywhere.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// A differentiable leaf holding a snapshot of a parameter's value.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(Op::Param(id), params.get(id).clone())
    }

    /// Differentiable leaf for an ad-hoc tensor (tests, gradient checks).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Param(ParamId::DETACHED), t)
    }

    /// 1-D cross-correlation. `x: [B, Cin, L]`, `w: [Cout, Cin, K]`,
    /// `b: [Cout]`; zero padding of `padding` samples on both sides;
    /// output `[B, Cout, (L + 2 padding - K) / stride + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if xs.len() != 3 || ws.len() != 3 || bs != [ws[0]] || xs[1] != ws[1] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv1d: input {xs:?}, kernel {ws:?}, bias {bs:?}, stride {stride}"
            )));
        }
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if len + 2 * padding < k {
            return Err(Error::Shape(format!(
                "conv1d: kernel {k} longer than padded input {len}+2*{padding}"
            )));
        }
        let lout = (len + 2 * padding - k) / stride + 1;
        let ck = cin * k;
        let rows = batch * lout;

        let xv = self.value(x).data();
        let mut cols = vec![0.0; rows * ck];
        for bi in 0..batch {
            for t in 0..lout {
                let row = &mut cols[(bi * lout + t) * ck..(bi * lout + t + 1) * ck];
                for ci in 0..cin {
                    let src = &xv[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                    for kk in 0..k {
                        let pos = (t * stride + kk) as isize - padding as isize;
                        if pos >= 0 && (pos as usize) < len {
                            row[ci * k + kk] = src[pos as usize];
                        }
                    }
                }
            }
        }
        let mut out_mat = vec![0.0; rows * cout];
        general_mat_mul(
            1.0,
            &view2(&cols, rows, ck),
            &view2(self.value(w).data(), cout, ck).t(),
            0.0,
            &mut view2_mut(&mut out_mat, rows, cout),
        );
        let bias = self.value(b).data();
        let mut out = vec![0.0; batch * cout * lout];
        for bi in 0..batch {
            for t in 0..lout {
                let src = &out_mat[(bi * lout + t) * cout..(bi * lout + t + 1) * cout];
                for co in 0..cout {
                    out[(bi * cout + co) * lout + t] = src[co] + bias[co];
                }
            }
        }
        let value = Tensor::new(vec![batch, cout, lout], out)?;
        Ok(self.push(
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
                cols,
            },
            value,
        ))
    }

    /// `x: [B, In] · w: [In, Out] + b: [Out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(Error::Shape(format!(
                "dense: input {xs:?}, weights {ws:?}, bias {bs:?}"
            )));
        }
        let (batch, nin, nout) = (xs[0], xs[1], ws[1]);
        let mut out = vec![0.0; batch * nout];
        for row in out.chunks_exact_mut(nout) {
            row.copy_from_slice(self.value(b).data());
        }
        general_mat_mul(
            1.0,
            &view2(self.value(x).data(), batch, nin),
            &view2(self.value(w).data(), nin, nout),
            1.0,
            &mut view2_mut(&mut out, batch, nout),
        );
        let value = Tensor::new(vec![batch, nout], out)?;
        Ok(self.push(Op::Dense { x, w, b }, value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.max(0.0)).collect()).expect("same shape");
        self.push(Op::Relu(x), value)
    }

    /// Row-wise softmax of a `[B, C]` matrix, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::Shape(format!("softmax expects [B, C], got {:?}", t.shape())));
        }
        let c = t.shape()[1];
        let mut out = t.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(Op::Softmax(x), value))
    }

    /// Column concatenation of `[B, A]` and `[B, C]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::Shape(format!("concat: {sa:?} and {sb:?}")));
        }
        let (rows, ca, cb) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(self.value(a).row(r));
            out.extend_from_slice(self.value(b).row(r));
        }
        let value = Tensor::new(vec![rows, ca + cb], out)?;
        Ok(self.push(Op::Concat(a, b), value))
    }

    /// Identity forward; blocks every gradient on the way back.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(Op::StopGradient, value)
    }

    /// Collapses all but the first axis: `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Var {
        let t = self.value(x).clone();
        let b = t.shape()[0];
        let rest = t.len() / b.max(1);
        let value = t.reshaped(vec![b, rest]).expect("flatten keeps size");
        self.push(Op::Reshape(x), value)
    }

    /// Mean over rows of `-ln p[row, target]`, clamping `p` at
    /// [`PROB_EPSILON`].
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(probs);
        if t.shape().len() != 2 || t.shape()[0] != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "cross_entropy: probabilities {:?} with {} targets",
                t.shape(),
                targets.len()
            )));
        }
        let c = t.shape()[1];
        if let Some(bad) = targets.iter().find(|&&k| k >= c) {
            return Err(Error::Shape(format!("target class {bad} out of {c}")));
        }
        let mut clamped = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        for (r, &k) in targets.iter().enumerate() {
            let p = t.row(r)[k];
            clamped.push(p < PROB_EPSILON);
            loss -= p.max(PROB_EPSILON).ln();
        }
        loss /= targets.len() as f64;
        self.clamp_events += clamped.iter().filter(|&&c| c).count();
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
                clamped,
            },
            Tensor::scalar(loss),
        ))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x + y, "add")?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x - y, "sub")?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x * y, "mul")?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * factor).collect()).expect("same shape");
        self.push(Op::Scale(x, factor), value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0])?);

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::StopGradient => {}
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                    cols,
                } => {
                    let xs = self.shape(*x);
                    let (batch, cin, len) = (xs[0], xs[1], xs[2]);
                    let ws = self.shape(*w);
                    let (cout, k) = (ws[0], ws[2]);
                    let lout = node.value.shape()[2];
                    let (rows, ck) = (batch * lout, cin * k);
                    // [B, Cout, Lout] -> [B*Lout, Cout]
                    let gd = g.data();
                    let mut gmat = vec![0.0; rows * cout];
                    let mut gb = vec![0.0; cout];
                    for bi in 0..batch {
                        for co in 0..cout {
                            let src = &gd[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
                            for (t, &v) in src.iter().enumerate() {
                                gmat[(bi * lout + t) * cout + co] = v;
                                gb[co] += v;
                            }
                        }
                    }
                    let mut gw = vec![0.0; cout * ck];
                    general_mat_mul(
                        1.0,
                        &view2(&gmat, rows, cout).t(),
                        &view2(cols, rows, ck),
                        0.0,
                        &mut view2_mut(&mut gw, cout, ck),
                    );
                    if !matches!(self.nodes[x.0].op, Op::Input) {
                        let mut gcols = vec![0.0; rows * ck];
                        general_mat_mul(
                            1.0,
                            &view2(&gmat, rows, cout),
                            &view2(self.value(*w).data(), cout, ck),
                            0.0,
                            &mut view2_mut(&mut gcols, rows, ck),
                        );
                        let mut gx = vec![0.0; batch * cin * len];
                        for bi in 0..batch {
                            for t in 0..lout {
                                let row = &gcols[(bi * lout + t) * ck..(bi * lout + t + 1) * ck];
                                for ci in 0..cin {
                                    let dst = &mut gx[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                                    for kk in 0..k {
                                        let pos = (t * stride + kk) as isize - *padding as isize;
                                        if pos >= 0 && (pos as usize) < len {
                                            dst[pos as usize] += row[ci * k + kk];
                                        }
                                    }
                                }
                            }
                        }
                        acc(&mut grads, *x, Tensor::new(xs.to_vec(), gx)?);
                    }
                    acc(&mut grads, *w, Tensor::new(ws.to_vec(), gw)?);
                    acc(&mut grads, *b, Tensor::new(vec![cout], gb)?);
                }
                Op::Dense { x, w, b } => {
                    let xs = self.shape(*x);
                    let (batch, nin) = (xs[0], xs[1]);
                    let nout = self.shape(*w)[1];
                    let gv = view2(g.data(), batch, nout);
                    let mut gw = vec![0.0; nin * nout];
                    general_mat_mul(
                        1.0,
                        &view2(self.value(*x).data(), batch, nin).t(),
                        &gv,
                        0.0,
                        &mut view2_mut(&mut gw, nin, nout),
                    );
                    let mut gb = vec![0.0; nout];
                    for row in g.data().chunks_exact(nout) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    if !matches!(self.nodes[x.0].op, Op::Input) {
                        let mut gx = vec![0.0; batch * nin];
                        general_mat_mul(
                            1.0,
                            &gv,
                            &view2(self.value(*w).data(), nin, nout).t(),
                            0.0,
                            &mut view2_mut(&mut gx, batch, nin),
                        );
                        acc(&mut grads, *x, Tensor::new(xs.to_vec(), gx)?);
                    }
                    acc(&mut grads, *w, Tensor::new(vec![nin, nout], gw)?);
                    acc(&mut grads, *b, Tensor::new(vec![nout], gb)?);
                }
                Op::Relu(x) => {
                    let data = g
                        .data()
                        .iter()
                        .zip(self.value(*x).data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Softmax(x) => {
                    let c = node.value.shape()[1];
                    let mut data = Vec::with_capacity(g.len());
                    for (yr, gr) in node.value.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        data.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                    }
                    acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Concat(a, b) => {
                    let (ca, cb) = (self.shape(*a)[1], self.shape(*b)[1]);
                    let mut ga = Vec::with_capacity(g.len());
                    let mut gb = Vec::with_capacity(g.len());
                    for row in g.data().chunks_exact(ca + cb) {
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    acc(&mut grads, *a, Tensor::new(self.shape(*a).to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(self.shape(*b).to_vec(), gb)?);
                }
                Op::Reshape(x) => {
                    acc(&mut grads, *x, g.reshaped(self.shape(*x).to_vec())?);
                }
                Op::CrossEntropy {
                    probs,
                    targets,
                    clamped,
                } => {
                    let scale = g.item() / targets.len() as f64;
                    let pv = self.value(*probs);
                    let c = pv.shape()[1];
                    let mut data = vec![0.0; pv.len()];
                    for (r, (&k, &cl)) in targets.iter().zip(clamped).enumerate() {
                        if !cl {
                            data[r * c + k] = -scale / pv.row(r)[k];
                        }
                    }
                    acc(&mut grads, *probs, Tensor::new(pv.shape().to_vec(), data)?);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| -v).collect())?;
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga = g.data().iter().zip(bv).map(|(g, b)| g * b).collect();
                    let gb = g.data().iter().zip(av).map(|(g, a)| g * a).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(g.shape().to_vec(), gb)?);
                }
                Op::Scale(x, f) => {
                    let data = g.data().iter().map(|v| v * f).collect();
                    acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Sum(x) => {
                    let s = self.value(*x);
                    acc(
                        &mut grads,
                        *x,
                        Tensor::new(s.shape().to_vec(), vec![g.item(); s.len()])?,
                    );
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}
