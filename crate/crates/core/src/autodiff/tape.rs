use super::kernels::{
    gemm, phi_cdf, phi_pdf, softmax_backward_row, softmax_in_place, MatMut, MatRef,
};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    SoftmaxRows(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        q_len: usize,
        seq_len: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    GatherRows {
        x: Var,
        indices: Vec<usize>,
    },
    ExpandRows(Var),
    Mean(Var),
    Sum(Var),
    SumSq(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; inputs always precede outputs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Splits a shape around `axis` into `(outer, axis_len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Attention weights recorded by an attention node, laid out as
    /// `[segment][head][query][key]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("[{m}x{k}] * [{k2}x{n}]"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            MatRef::dense(self.value(a).data(), m, k),
            MatRef::dense(self.value(b).data(), k, n),
            0.0,
            MatMut::dense(&mut out, m, n),
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, k), rg)
    }

    /// `x * Phi(x)` with the exact Gaussian CDF.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * phi_cdf(x));
        let rg = self.rg(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Per-row normalisation over the last axis of `[n x d]`, then `* gain + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("layer_norm eps must be positive".into()));
        }
        let (n, d) = self.value(x).dims2("layer_norm")?;
        for p in [gain, bias] {
            if self.value(p).shape() != [d] {
                return Err(Error::shape(
                    "layer_norm",
                    format!("affine shape {:?} for width {d}", self.value(p).shape()),
                ));
            }
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; n * d];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Tensor::new(&[n, d], out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2("softmax_rows")?;
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            softmax_in_place(&mut out[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&[r, c], out)?, Op::SoftmaxRows(x), rg))
    }

    /// Multi-head scaled dot-product attention over independent segments of
    /// `seq_len` consecutive rows. `q`, `k`, `v` are `[segments*seq_len x d]`;
    /// head `h` uses columns `h*d/heads .. (h+1)*d/heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, heads: usize) -> Result<Var> {
        self.cross_attention(q, k, v, seq_len, seq_len, heads)
    }

    /// Like [`Tape::attention`] but each segment has `q_len` query rows
    /// (`q` is `[segments*q_len x d]`) attending over `seq_len` key rows.
    pub fn cross_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        q_len: usize,
        seq_len: usize,
        heads: usize,
    ) -> Result<Var> {
        let (rows, d) = self.value(k).dims2("attention")?;
        if self.value(v).shape() != [rows, d] {
            return Err(Error::shape(
                "attention",
                format!("k {:?} vs v {:?}", [rows, d], self.value(v).shape()),
            ));
        }
        if seq_len == 0 || rows % seq_len != 0 || heads == 0 || d % heads != 0 {
            return Err(Error::shape(
                "attention",
                format!("{rows} rows, seq_len {seq_len}, width {d}, heads {heads}"),
            ));
        }
        let segments = rows / seq_len;
        if self.value(q).shape() != [segments * q_len, d] {
            return Err(Error::shape(
                "attention",
                format!(
                    "q {:?}, expected {:?}",
                    self.value(q).shape(),
                    [segments * q_len, d]
                ),
            ));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (m, n) = (q_len, seq_len);
        let mut probs = vec![0.0; segments * heads * m * n];
        let mut out = vec![0.0; segments * m * d];
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        for s in 0..segments {
            for h in 0..heads {
                let qbase = s * m * d + h * dh;
                let kbase = s * n * d + h * dh;
                let pbase = (s * heads + h) * m * n;
                let p = &mut probs[pbase..pbase + m * n];
                gemm(
                    scale,
                    head_view(qd, qbase, m, dh, d),
                    head_view(kd, kbase, n, dh, d).t(),
                    0.0,
                    MatMut::dense(p, m, n),
                );
                for r in 0..m {
                    softmax_in_place(&mut p[r * n..(r + 1) * n]);
                }
                gemm(
                    1.0,
                    MatRef::dense(p, m, n),
                    head_view(vd, kbase, n, dh, d),
                    0.0,
                    head_mut(&mut out, qbase, m, dh, d),
                );
            }
        }
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            Tensor::new(&[segments * m, d], out)?,
            Op::Attention {
                q,
                k,
                v,
                q_len,
                seq_len,
                heads,
                probs,
            },
            rg,
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.rg(inputs);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("{shape:?} axis {axis} range {start}..{}", start + len),
            ));
        }
        let (outer, alen, inner) = split_axis(&shape, axis);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * alen + start) * inner;
            out.extend_from_slice(&data[from..from + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&new_shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Selects rows of a matrix (repeats allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).dims2("gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&data[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(&[indices.len(), c], out)?,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Repeats a `[c]` or `[1 x c]` tensor into `[rows x c]`.
    pub fn expand_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let c = match self.value(x).shape() {
            &[c] | &[1, c] => c,
            s => return Err(Error::shape("expand_rows", format!("cannot expand {s:?}"))),
        };
        let row = self.value(x).data().to_vec();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(&row);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&[rows, c], out)?, Op::ExpandRows(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_sq();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumSq(x), rg)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape(), d).expect("grad shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let shape_of = |v: Var| self.nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul").expect("checked");
                let n = self.value(*b).dims2("matmul").expect("checked").1;
                let gm = MatRef::dense(g, m, n);
                if self.requires_grad(*a) {
                    let buf = slot(grads, *a, m * k);
                    gemm(
                        1.0,
                        gm,
                        MatRef::dense(self.value(*b).data(), k, n).t(),
                        1.0,
                        MatMut::dense(buf, m, k),
                    );
                }
                if self.requires_grad(*b) {
                    let buf = slot(grads, *b, k * n);
                    gemm(
                        1.0,
                        MatRef::dense(self.value(*a).data(), m, k).t(),
                        gm,
                        1.0,
                        MatMut::dense(buf, k, n),
                    );
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g, 1.0);
                self.accumulate(grads, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g, 1.0);
                self.accumulate(grads, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if self.requires_grad(this) {
                        let o = self.value(other).data();
                        let buf = slot(grads, this, o.len());
                        for ((d, &gi), &oi) in buf.iter_mut().zip(g).zip(o) {
                            *d += gi * oi;
                        }
                    }
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g, *k),
            Op::Gelu(a) => {
                if self.requires_grad(*a) {
                    let x = self.value(*a).data();
                    let buf = slot(grads, *a, x.len());
                    for ((d, &gi), &xi) in buf.iter_mut().zip(g).zip(x) {
                        *d += gi * (phi_cdf(xi) + xi * phi_pdf(xi));
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (n, d) = self.value(*x).dims2("layer_norm").expect("checked");
                if self.requires_grad(*gain) {
                    let buf = slot(grads, *gain, d);
                    for r in 0..n {
                        for c in 0..d {
                            buf[c] += g[r * d + c] * xhat[r * d + c];
                        }
                    }
                }
                if self.requires_grad(*bias) {
                    let buf = slot(grads, *bias, d);
                    for r in 0..n {
                        for c in 0..d {
                            buf[c] += g[r * d + c];
                        }
                    }
                }
                if self.requires_grad(*x) {
                    let gv = self.value(*gain).data();
                    let buf = slot(grads, *x, n * d);
                    let mut dxhat = vec![0.0; d];
                    for r in 0..n {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for c in 0..d {
                            let v = g[r * d + c] * gv[c];
                            dxhat[c] = v;
                            mean_d += v;
                            mean_dx += v * xhat[r * d + c];
                        }
                        mean_d /= d as f64;
                        mean_dx /= d as f64;
                        for c in 0..d {
                            buf[r * d + c] +=
                                rstd[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
                        }
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if self.requires_grad(*x) {
                    let (r, c) = node.value.dims2("softmax_rows").expect("checked");
                    let y = node.value.data();
                    let buf = slot(grads, *x, r * c);
                    for i in 0..r {
                        let s = i * c..(i + 1) * c;
                        softmax_backward_row(&y[s.clone()], &g[s.clone()], &mut buf[s]);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                q_len,
                seq_len,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, (*q_len, *seq_len), *heads, probs, g, grads),
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let (outer, _, inner) = split_axis(shape, *axis);
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let len = shape_of(*v)[*axis] * inner;
                    if self.requires_grad(*v) {
                        let buf = slot(grads, *v, outer * len);
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + len];
                            for (d, s) in buf[o * len..(o + 1) * len].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                if self.requires_grad(*x) {
                    let in_shape = shape_of(*x);
                    let (outer, alen, inner) = split_axis(in_shape, *axis);
                    let len = node.value.shape()[*axis];
                    let total: usize = in_shape.iter().product();
                    let buf = slot(grads, *x, total);
                    for o in 0..outer {
                        let to = (o * alen + start) * inner;
                        let from = o * len * inner;
                        for (d, s) in buf[to..to + len * inner]
                            .iter_mut()
                            .zip(&g[from..from + len * inner])
                        {
                            *d += s;
                        }
                    }
                }
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g, 1.0),
            Op::GatherRows { x, indices } => {
                if self.requires_grad(*x) {
                    let (r, c) = self.value(*x).dims2("gather_rows").expect("checked");
                    let buf = slot(grads, *x, r * c);
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, s) in buf[i * c..(i + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::ExpandRows(x) => {
                if self.requires_grad(*x) {
                    let c = self.value(*x).len();
                    let buf = slot(grads, *x, c);
                    for row in g.chunks_exact(c) {
                        for (d, s) in buf.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let each = g[0] / n.max(1) as f64;
                if self.requires_grad(*x) {
                    for d in slot(grads, *x, n).iter_mut() {
                        *d += each;
                    }
                }
            }
            Op::Sum(x) => {
                if self.requires_grad(*x) {
                    let n = self.value(*x).len();
                    for d in slot(grads, *x, n).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SumSq(x) => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x).data();
                    let buf = slot(grads, *x, xv.len());
                    for (d, &xi) in buf.iter_mut().zip(xv) {
                        *d += 2.0 * xi * g[0];
                    }
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], k: f64) {
        if !self.requires_grad(v) {
            return;
        }
        let buf = slot(grads, v, g.len());
        for (d, s) in buf.iter_mut().zip(g) {
            *d += k * s;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        (m, n): (usize, usize),
        heads: usize,
        probs: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (rows, d) = self.value(k).dims2("attention").expect("checked");
        let segments = rows / n;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut dq = vec![0.0; segments * m * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        let mut dp = vec![0.0; m * n];
        let mut ds = vec![0.0; m * n];
        for s in 0..segments {
            for h in 0..heads {
                let qbase = s * m * d + h * dh;
                let kbase = s * n * d + h * dh;
                let p = &probs[(s * heads + h) * m * n..][..m * n];
                let go = head_view(g, qbase, m, dh, d);
                // dP = dO V^T, dV = P^T dO
                gemm(1.0, go, head_view(vd, kbase, n, dh, d).t(), 0.0, MatMut::dense(&mut dp, m, n));
                gemm(1.0, MatRef::dense(p, m, n).t(), go, 1.0, head_mut(&mut dv, kbase, n, dh, d));
                ds.iter_mut().for_each(|x| *x = 0.0);
                for r in 0..m {
                    let sl = r * n..(r + 1) * n;
                    softmax_backward_row(&p[sl.clone()], &dp[sl.clone()], &mut ds[sl]);
                }
                let dsm = MatRef::dense(&ds, m, n);
                gemm(scale, dsm, head_view(kd, kbase, n, dh, d), 1.0, head_mut(&mut dq, qbase, m, dh, d));
                gemm(scale, dsm.t(), head_view(qd, qbase, m, dh, d), 1.0, head_mut(&mut dk, kbase, n, dh, d));
            }
        }
        self.accumulate(grads, q, &dq, 1.0);
        self.accumulate(grads, k, &dk, 1.0);
        self.accumulate(grads, v, &dv, 1.0);
    }
}

fn head_view(data: &[f64], offset: usize, rows: usize, cols: usize, stride: usize) -> MatRef<'_> {
    MatRef {
        data,
        offset,
        rows,
        cols,
        row_stride: stride,
        col_stride: 1,
    }
}

fn head_mut(data: &mut [f64], offset: usize, rows: usize, cols: usize, stride: usize) -> MatMut<'_> {
    MatMut {
        data,
        offset,
        rows,
        cols,
        row_stride: stride,
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}
