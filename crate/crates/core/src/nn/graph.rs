//! Reverse-mode automatic differentiation over 2-D `f64` arrays.
//!
//! A [`Graph`] is a tape: every operation appends its result and remembers
//! its parents, and [`Graph::backward`] walks the tape in reverse. Vectors are
//! `[1 x d]`, scalars `[1 x 1]`.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A value on the tape, with its accumulated gradient once `backward` ran.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub data: Mat,
    pub requires_grad: bool,
    pub grad: Option<Mat>,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    MeanRows(Var, Vec<bool>, f64),
    SumAll(Var),
    Bce(Var, f64),
    Focal {
        z: Var,
        label: f64,
        gamma: f64,
        alpha: f64,
    },
    Dropout(Var, Mat),
}

struct DropoutState {
    rate: f64,
    rng: ChaCha8Rng,
}

#[derive(Default)]
pub struct Graph {
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
    params: Vec<Option<ParamId>>,
    dropout: Option<DropoutState>,
    non_finite: Option<usize>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax; `mask[j] == false` hides column `j` (weight exactly 0).
pub fn masked_softmax_rows(x: &Mat, mask: Option<&[bool]>) -> Mat {
    let mut out = Mat::zeros(x.dim());
    let valid = |j: usize| mask.map_or(true, |m| m[j]);
    for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
        let mut max = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if valid(j) && v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if valid(j) {
                let e = (v - max).exp();
                o[j] = e;
                sum += e;
            }
        }
        o.mapv_inplace(|e| e / sum);
    }
    out
}

/// Focal loss value as a function of the signed margin `s` (`z` for label 1,
/// `-z` for label 0).
fn focal_terms(s: f64, alpha_t: f64, gamma: f64) -> (f64, f64) {
    let q = sigmoid(-s); // 1 - p_t
    let sp = softplus(-s); // -ln p_t
    let qg = q.powf(gamma);
    let loss = alpha_t * qg * sp;
    let dloss_ds = -alpha_t * qg * (gamma * sigmoid(s) * sp + q);
    (loss, dloss_ds)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph whose `dropout` ops zero activations with probability `rate`.
    pub fn with_dropout(rate: f64, rng: ChaCha8Rng) -> Self {
        Self {
            dropout: (rate > 0.0).then_some(DropoutState { rate, rng }),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn push(&mut self, data: Mat, op: Op, requires_grad: bool) -> Var {
        if self.non_finite.is_none() && data.iter().any(|v| !v.is_finite()) {
            self.non_finite = Some(self.tensors.len());
        }
        self.tensors.push(Tensor {
            data,
            requires_grad,
            grad: None,
        });
        self.ops.push(op);
        self.params.push(None);
        Var(self.tensors.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.tensors[v.0].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, data: Mat) -> Var {
        self.push(data, Op::Leaf, false)
    }

    /// Free leaf that collects a gradient on `backward`.
    pub fn variable(&mut self, data: Mat) -> Var {
        self.push(data, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.params[v.0] = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.tensors[v.0].data
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.tensors[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.tensors[v.0].grad.as_ref()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.tensors[v.0].data[[0, 0]]
    }

    /// First tape position that produced a NaN or infinity, if any.
    pub fn check_finite(&self) -> Result<(), NnError> {
        match self.non_finite {
            Some(at) => Err(NnError::NonFinite(at)),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul inner dims");
        let out = va.dot(vb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a . b^T`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.ncols(), "matmul_t inner dims");
        let out = va.dot(&vb.t());
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shapes");
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Broadcasts a `[1 x d]` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (vx, vr) = (self.value(x), self.value(row));
        assert!(vr.nrows() == 1 && vr.ncols() == vx.ncols(), "add_row shapes");
        let out = vx + vr;
        let rg = self.rg(x) || self.rg(row);
        self.push(out, Op::AddRow(x, row), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shapes");
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(gelu);
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Row-wise softmax with optional column mask.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        if let Some(m) = mask {
            assert_eq!(m.len(), self.value(a).ncols(), "softmax mask length");
        }
        let out = masked_softmax_rows(self.value(a), mask);
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Per-row normalization to zero mean and unit (population) variance,
    /// then `* gain + bias` with `[1 x d]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let vx = self.value(x);
        let d = vx.ncols();
        assert!(d >= 2, "layer_norm needs at least two features");
        let mut xhat = Mat::zeros(vx.dim());
        let mut inv_std = Vec::with_capacity(vx.nrows());
        for (row, mut out) in vx.rows().into_iter().zip(xhat.rows_mut()) {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let out = &(&xhat * self.value(gain)) + self.value(bias);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let out = self.value(a).slice(s![.., start..start + width]).to_owned();
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols row counts");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows col counts");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().cloned().collect();
        let out = Mat::from_shape_vec((rows, cols), flat).expect("reshape element count");
        let rg = self.rg(a);
        self.push(out, Op::Reshape(a), rg)
    }

    /// Mean over the rows selected by `mask`, as `[1 x d]`.
    pub fn masked_mean_rows(&mut self, a: Var, mask: &[bool]) -> Var {
        let va = self.value(a);
        assert_eq!(mask.len(), va.nrows(), "mean mask length");
        let n = mask.iter().filter(|&&m| m).count();
        assert!(n > 0, "masked mean over zero rows");
        let mut out = Mat::zeros((1, va.ncols()));
        for (row, _) in va.rows().into_iter().zip(mask).filter(|(_, &m)| m) {
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        out /= n as f64;
        let rg = self.rg(a);
        self.push(out, Op::MeanRows(a, mask.to_vec(), n as f64), rg)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let mask = vec![true; self.value(a).nrows()];
        self.masked_mean_rows(a, &mask)
    }

    /// One row, as `[1 x d]`.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let n = self.value(a).nrows();
        let mask: Vec<bool> = (0..n).map(|r| r == i).collect();
        self.masked_mean_rows(a, &mask)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::SumAll(a), rg)
    }

    /// Binary cross-entropy on a `[1 x 1]` logit, computed as
    /// `softplus(-z)` for label 1 and `softplus(z)` for label 0.
    pub fn bce_with_logits(&mut self, z: Var, label: f64) -> Var {
        let zv = self.scalar(z);
        let s = if label >= 0.5 { zv } else { -zv };
        let out = Mat::from_elem((1, 1), softplus(-s));
        let rg = self.rg(z);
        self.push(out, Op::Bce(z, label), rg)
    }

    /// `-alpha_t (1 - p_t)^gamma ln p_t` on a `[1 x 1]` logit.
    pub fn focal_with_logits(&mut self, z: Var, label: f64, gamma: f64, alpha: f64) -> Var {
        let zv = self.scalar(z);
        let (s, alpha_t) = if label >= 0.5 { (zv, alpha) } else { (-zv, 1.0 - alpha) };
        let out = Mat::from_elem((1, 1), focal_terms(s, alpha_t, gamma).0);
        let rg = self.rg(z);
        self.push(
            out,
            Op::Focal {
                z,
                label,
                gamma,
                alpha,
            },
            rg,
        )
    }

    /// Inverted dropout; identity unless the graph was built with a rate.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some(state) = self.dropout.as_mut() else {
            return a;
        };
        let keep = 1.0 - state.rate;
        let dim = self.tensors[a.0].data.dim();
        let mask = Mat::from_shape_simple_fn(dim, || {
            if state.rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = self.value(a) * &mask;
        let rg = self.rg(a);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    fn local_grads(&self, loss: Var) -> Result<Vec<Option<Mat>>, NnError> {
        let t = &self.tensors[loss.0];
        if t.data.dim() != (1, 1) {
            return Err(NnError::NotScalar(t.data.dim()));
        }
        if !t.requires_grad {
            return Err(NnError::DetachedGraph);
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Mat::ones((1, 1)));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.tensors[i].requires_grad {
                continue;
            }
            let rg = |v: Var| self.tensors[v.0].requires_grad;
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(dy);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, dy.dot(&self.value(*b).t()));
                    }
                    if rg(*b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&dy));
                    }
                }
                Op::MatMulT(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, dy.dot(self.value(*b)));
                    }
                    if rg(*b) {
                        acc(&mut grads, *b, dy.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, dy.clone());
                    }
                    if rg(*b) {
                        acc(&mut grads, *b, dy);
                    }
                }
                Op::AddRow(x, r) => {
                    if rg(*r) {
                        acc(&mut grads, *r, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if rg(*x) {
                        acc(&mut grads, *x, dy);
                    }
                }
                Op::Mul(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, &dy * self.value(*b));
                    }
                    if rg(*b) {
                        acc(&mut grads, *b, &dy * self.value(*a));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, dy * *c),
                Op::Gelu(a) => {
                    let mut g = self.value(*a).mapv(gelu_grad);
                    g *= &dy;
                    acc(&mut grads, *a, g);
                }
                Op::Softmax(a) => {
                    let y = &self.tensors[i].data;
                    let mut g = Mat::zeros(y.dim());
                    for ((yr, dr), mut gr) in y.rows().into_iter().zip(dy.rows()).zip(g.rows_mut()) {
                        let dot: f64 = yr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &dv) in gr.iter_mut().zip(yr.iter()).zip(dr.iter()) {
                            *o = yv * (dv - dot);
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    if rg(*gain) {
                        acc(&mut grads, *gain, (&dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if rg(*bias) {
                        acc(&mut grads, *bias, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if rg(*x) {
                        let dxhat = &dy * self.value(*gain);
                        let d = xhat.ncols() as f64;
                        let mut g = Mat::zeros(xhat.dim());
                        for (r, mut gr) in g.rows_mut().into_iter().enumerate() {
                            let dr = dxhat.row(r);
                            let xr = xhat.row(r);
                            let m1 = dr.sum() / d;
                            let m2 = dr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
                            for ((o, &dv), &xv) in gr.iter_mut().zip(dr.iter()).zip(xr.iter()) {
                                *o = inv_std[r] * (dv - m1 - xv * m2);
                            }
                        }
                        acc(&mut grads, *x, g);
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut g = Mat::zeros(self.value(*a).dim());
                    g.slice_mut(s![.., *start..*start + dy.ncols()]).assign(&dy);
                    acc(&mut grads, *a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if rg(*p) {
                            acc(&mut grads, *p, dy.slice(s![.., at..at + w]).to_owned());
                        }
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        if rg(*p) {
                            acc(&mut grads, *p, dy.slice(s![at..at + h, ..]).to_owned());
                        }
                        at += h;
                    }
                }
                Op::Reshape(a) => {
                    let flat: Vec<f64> = dy.iter().cloned().collect();
                    let g = Mat::from_shape_vec(self.value(*a).dim(), flat).expect("reshape back");
                    acc(&mut grads, *a, g);
                }
                Op::MeanRows(a, mask, n) => {
                    let mut g = Mat::zeros(self.value(*a).dim());
                    for (mut gr, _) in g.rows_mut().into_iter().zip(mask).filter(|(_, &m)| m) {
                        for (o, &d) in gr.iter_mut().zip(dy.iter()) {
                            *o = d / n;
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::SumAll(a) => {
                    let g = Mat::from_elem(self.value(*a).dim(), dy[[0, 0]]);
                    acc(&mut grads, *a, g);
                }
                Op::Bce(z, label) => {
                    let p = sigmoid(self.scalar(*z));
                    acc(&mut grads, *z, Mat::from_elem((1, 1), dy[[0, 0]] * (p - label)));
                }
                Op::Focal {
                    z,
                    label,
                    gamma,
                    alpha,
                } => {
                    let zv = self.scalar(*z);
                    let (s, alpha_t, sign) = if *label >= 0.5 {
                        (zv, *alpha, 1.0)
                    } else {
                        (-zv, 1.0 - alpha, -1.0)
                    };
                    let (_, ds) = focal_terms(s, alpha_t, *gamma);
                    acc(&mut grads, *z, Mat::from_elem((1, 1), dy[[0, 0]] * ds * sign));
                }
                Op::Dropout(a, mask) => acc(&mut grads, *a, dy * mask),
            }
        }
        Ok(grads)
    }

    /// Reverse pass from a scalar; leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        self.backward_impl(loss, None)
    }

    /// [`Graph::backward`], additionally adding parameter-leaf gradients into `store`.
    pub fn backward_into(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), NnError> {
        self.backward_impl(loss, Some(store))
    }

    fn backward_impl(&mut self, loss: Var, mut store: Option<&mut ParamStore>) -> Result<(), NnError> {
        let grads = self.local_grads(loss)?;
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            if !matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            if let (Some(store), Some(id)) = (store.as_deref_mut(), self.params[i]) {
                store.accumulate_grad(id, &g);
            }
            let t = &mut self.tensors[i];
            match &mut t.grad {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        let s = masked_softmax_rows(&array![[0.0, 0.0, 0.0]], None);
        for v in s.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = masked_softmax_rows(&array![[1.0f64.ln(), 3.0f64.ln()]], None);
        assert!((s[[0, 0]] - 0.25).abs() < 1e-15 && (s[[0, 1]] - 0.75).abs() < 1e-15);
        let s = masked_softmax_rows(&array![[1000.0, 1001.0]], None);
        let e = std::f64::consts::E;
        assert!((s[[0, 0]] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((s[[0, 1]] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn masked_columns_get_exact_zero() {
        let s = masked_softmax_rows(&array![[5.0, f64::MAX, -1.0]], Some(&[true, false, true]));
        assert_eq!(s[[0, 1]], 0.0);
        assert!((s.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sum_and_square_grads() {
        let mut g = Graph::new();
        let theta = g.variable(array![[1.0, -2.0, 3.5]]);
        let l = g.sum(theta);
        g.backward(l).unwrap();
        assert_eq!(g.grad(theta).unwrap(), &array![[1.0, 1.0, 1.0]]);

        let mut g = Graph::new();
        let theta = g.variable(array![[1.0, -2.0, 3.5]]);
        let sq = g.mul(theta, theta);
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.grad(theta).unwrap(), &array![[2.0, -4.0, 7.0]]);
        // a second pass accumulates
        g.backward(l).unwrap();
        assert_eq!(g.grad(theta).unwrap(), &array![[4.0, -8.0, 14.0]]);
    }

    #[test]
    fn backward_errors() {
        let mut g = Graph::new();
        let a = g.variable(array![[1.0, 2.0]]);
        assert!(matches!(g.backward(a), Err(NnError::NotScalar((1, 2)))));
        let c = g.constant(array![[1.0]]);
        assert!(matches!(g.backward(c), Err(NnError::DetachedGraph)));
        let big = g.variable(array![[f64::MAX]]);
        let inf = g.scale(big, 10.0);
        let l = g.sum(inf);
        assert!(matches!(g.backward(l), Err(NnError::NonFinite(_))));
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let x = g.constant(array![[2.0, 2.0, 2.0, 2.0], [1.0, 3.0, 0.0, 0.0]]);
        let gain = g.constant(Mat::ones((1, 4)));
        let bias = g.constant(Mat::zeros((1, 4)));
        let y = g.layer_norm(x, gain, bias, 1e-5);
        assert!(g.value(y).row(0).iter().all(|&v| v == 0.0));

        let mut g = Graph::new();
        let x = g.constant(array![[1.0, 3.0]]);
        let gain = g.constant(Mat::ones((1, 2)));
        let bias = g.constant(Mat::zeros((1, 2)));
        let y = g.layer_norm(x, gain, bias, 0.0);
        assert_eq!(g.value(y), &array![[-1.0, 1.0]]);
    }

    #[test]
    fn dropout_is_identity_by_default() {
        let mut g = Graph::new();
        let x = g.variable(array![[1.0, 2.0]]);
        assert_eq!(g.dropout(x), x);
    }

    fn loss(z: f64, y: f64, focal: Option<(f64, f64)>) -> f64 {
        let mut g = Graph::new();
        let v = g.variable(array![[z]]);
        let l = match focal {
            Some((gamma, alpha)) => g.focal_with_logits(v, y, gamma, alpha),
            None => g.bce_with_logits(v, y),
        };
        g.scalar(l)
    }

    #[test]
    fn bce_values() {
        assert!((loss(0.0, 1.0, None) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = loss(100.0, 1.0, None);
        assert!(big >= 0.0 && big < 1e-40);
        assert!(loss(-1000.0, 1.0, None).is_finite());
        // ln(1 + e^-2) = 0.126928011042972...
        assert!((loss(-2.0, 0.0, None) - 0.126_928_011_042_972_5).abs() < 1e-15);
    }

    #[test]
    fn focal_values() {
        for z in [-30.0, -2.0, -0.3, 0.0, 0.7, 4.0, 50.0] {
            for y in [0.0, 1.0] {
                let f = loss(z, y, Some((0.0, 0.5)));
                assert!((f - 0.5 * loss(z, y, None)).abs() <= 1e-12);
            }
        }
        let expect = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((loss(0.0, 1.0, Some((2.0, 0.25))) - expect).abs() < 1e-15);
        let ratio = |z: f64| loss(z, 1.0, Some((2.0, 0.25))) / loss(z, 1.0, None);
        assert!(ratio(5.0) < 1e-4 && ratio(5.0) < ratio(2.0));
    }
}
