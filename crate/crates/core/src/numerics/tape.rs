//! Wengert-list reverse-mode autodiff. Every operation eagerly computes its
//! output, records one `Op` per produced node, and `backward` replays the list
//! in reverse. Node `i` was produced by op `i`, so topological order is the
//! insertion order by construction.

use rand::Rng;

use super::{numel, Real, Tensor};
use crate::{Error, Result};

/// Handle to a node owned by a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

// ── Op records ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// [m,k] x [k,n] -> [m,n]
    MatMul { a: TensorId, b: TensorId },
    /// [g,m,k] x [g,k,n] -> [g,m,n]
    Bmm { a: TensorId, b: TensorId },
    /// Elementwise with right-aligned broadcasting.
    AddB { a: TensorId, b: TensorId },
    MulB { a: TensorId, b: TensorId },
    /// out[i, :] = x[i, :] * m[i]; x is [n, d], m is [n].
    RowScale { x: TensorId, m: TensorId },
    /// out = x * mul + add
    Affine { x: TensorId, mul: Real },
    Gelu { x: TensorId },
    Sigmoid { x: TensorId },
    Tanh { x: TensorId },
    /// Softmax along `axis`.
    Softmax { x: TensorId, axis: usize },
    /// LayerNorm over the last axis with affine gain/bias; saves per-row stats.
    LayerNorm { x: TensorId, gain: TensorId, bias: TensorId, mean: Vec<Real>, rstd: Vec<Real> },
    /// x [n,c,h,w], w [o,c,kh,kw], b [o], valid padding, floor output size.
    Conv2d { x: TensorId, w: TensorId, b: TensorId, stride: usize },
    /// Row gather from a [v,d] table.
    Embed { table: TensorId, ids: Vec<u32> },
    Reshape { x: TensorId },
    Permute { x: TensorId, axes: Vec<usize> },
    /// Slice axis 1 of a [a,s,c] tensor at offset..s step stride.
    TakeEvery { x: TensorId, offset: usize, stride: usize },
    /// Interleave two [b,t,d] tensors along axis 1 into [b,2t,d] (a first).
    Interleave { a: TensorId, b: TensorId },
    /// Concatenate [n, k_i, d] tensors along axis 1.
    ConcatTokens { parts: Vec<TensorId>, widths: Vec<usize> },
    /// Overwrite the first k entries of every last-axis row with 1.0.
    ForceOnesPrefix { x: TensorId, k: usize },
    /// Straight-through binary gate; `soft` is the relaxed sigmoid forward.
    GumbelSt { scores: TensorId, soft: Vec<Real>, tau: Real },
    /// Deterministic threshold at 0.5; no gradient (evaluation path).
    HardThreshold,
    Dropout { x: TensorId, keep: Vec<bool>, scale: Real },
    /// Full reduction to a [1] scalar.
    Sum { x: TensorId },
    /// Mean cross-entropy from logits over positions where mask is true.
    MaskedCe { logits: TensorId, targets: Vec<u32>, mask: Vec<bool> },
}

// ── Tape ─────────────────────────────────────────────────────────────────────

/// Owns all tensors of one forward pass plus the operation records.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, t: Tensor, op: Op) -> TensorId {
        self.nodes.push(t);
        self.ops.push(op);
        TensorId(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, data: Vec<Real>, shape: Vec<usize>) -> Result<TensorId> {
        let t = Tensor::new(data, shape, true)?;
        Ok(self.push(t, Op::Leaf))
    }

    /// Non-trainable leaf (inputs, masks, constants).
    pub fn constant(&mut self, data: Vec<Real>, shape: Vec<usize>) -> Result<TensorId> {
        let t = Tensor::new(data, shape, false)?;
        Ok(self.push(t, Op::Leaf))
    }

    pub fn data(&self, id: TensorId) -> &[Real] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[Real]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Errors if the node holds NaN/Inf.
    pub fn check_finite(&self, id: TensorId, what: &str) -> Result<()> {
        self.nodes[id.0].check_finite(what)
    }

    fn out_flags(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    // ── Forward ops ──────────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(&self.nodes[a.0].data, &self.nodes[b.0].data, &mut out, m, k, n);
        let rg = self.out_flags(&[a, b]);
        let t = Tensor { data: out, shape: vec![m, n], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::MatMul { a, b }))
    }

    pub fn bmm(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; g * m * n];
        for gi in 0..g {
            matmul_acc(
                &self.nodes[a.0].data[gi * m * k..(gi + 1) * m * k],
                &self.nodes[b.0].data[gi * k * n..(gi + 1) * k * n],
                &mut out[gi * m * n..(gi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let rg = self.out_flags(&[a, b]);
        let t = Tensor { data: out, shape: vec![g, m, n], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Bmm { a, b }))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_broadcast(a, b, "add")
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_broadcast(a, b, "mul")
    }

    fn binary_broadcast(&mut self, a: TensorId, b: TensorId, which: &'static str) -> Result<TensorId> {
        let shape = broadcast_shape(self.shape(a), self.shape(b))
            .ok_or_else(|| Error::dim(which, format!("{:?} vs {:?}", self.shape(a), self.shape(b))))?;
        let out = apply_broadcast(
            &self.nodes[a.0].data,
            self.shape(a),
            &self.nodes[b.0].data,
            self.shape(b),
            &shape,
            which == "mul",
        );
        let rg = self.out_flags(&[a, b]);
        let t = Tensor { data: out, shape, requires_grad: rg, grad: None };
        let op = if which == "mul" { Op::MulB { a, b } } else { Op::AddB { a, b } };
        Ok(self.push(t, op))
    }

    pub fn row_scale(&mut self, x: TensorId, m: TensorId) -> Result<TensorId> {
        let (sx, sm) = (self.shape(x).to_vec(), self.shape(m).to_vec());
        if sx.len() != 2 || sm.len() != 1 || sx[0] != sm[0] {
            return Err(Error::dim("row_scale", format!("{sx:?} rows vs {sm:?}")));
        }
        let (n, d) = (sx[0], sx[1]);
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let s = self.nodes[m.0].data[i];
            for j in 0..d {
                out[i * d + j] = self.nodes[x.0].data[i * d + j] * s;
            }
        }
        let rg = self.out_flags(&[x, m]);
        let t = Tensor { data: out, shape: sx, requires_grad: rg, grad: None };
        Ok(self.push(t, Op::RowScale { x, m }))
    }

    /// out = x * mul + add (elementwise with scalars).
    pub fn affine(&mut self, x: TensorId, mul: Real, add: Real) -> Result<TensorId> {
        let data = self.nodes[x.0].data.iter().map(|v| v * mul + add).collect();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape: self.shape(x).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Affine { x, mul }))
    }

    pub fn scale(&mut self, x: TensorId, c: Real) -> Result<TensorId> {
        self.affine(x, c, 0.0)
    }

    pub fn gelu(&mut self, x: TensorId) -> Result<TensorId> {
        let data = self.nodes[x.0].data.iter().map(|&v| gelu_tanh(v)).collect();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape: self.shape(x).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Gelu { x }))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        let data = self.nodes[x.0].data.iter().map(|&v| sigmoid(v)).collect();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape: self.shape(x).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Sigmoid { x }))
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        let data = self.nodes[x.0].data.iter().map(|v| v.tanh()).collect();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape: self.shape(x).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Tanh { x }))
    }

    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("softmax", format!("axis {axis} for shape {shape:?}")));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let xd = &self.nodes[x.0].data;
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mut mx = Real::NEG_INFINITY;
                for j in 0..len {
                    mx = mx.max(xd[idx(j)]);
                }
                let mut denom = 0.0;
                for j in 0..len {
                    let e = (xd[idx(j)] - mx).exp();
                    out[idx(j)] = e;
                    denom += e;
                }
                for j in 0..len {
                    out[idx(j)] /= denom;
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data: out, shape, requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Softmax { x, axis }))
    }

    pub fn layer_norm(&mut self, x: TensorId, gain: TensorId, bias: TensorId, eps: Real) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| Error::dim("layer_norm", "scalar input"))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!("gain {:?} / bias {:?} for width {d}", self.shape(gain), self.shape(bias)),
            ));
        }
        let rows = numel(&shape) / d;
        let mut out = vec![0.0; rows * d];
        let mut means = vec![0.0; rows];
        let mut rstds = vec![0.0; rows];
        for r in 0..rows {
            let xs = &self.nodes[x.0].data[r * d..(r + 1) * d];
            let mean = xs.iter().sum::<Real>() / d as Real;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / d as Real;
            let rstd = 1.0 / (var + eps).sqrt();
            means[r] = mean;
            rstds[r] = rstd;
            for j in 0..d {
                out[r * d + j] =
                    (xs[j] - mean) * rstd * self.nodes[gain.0].data[j] + self.nodes[bias.0].data[j];
            }
        }
        let rg = self.out_flags(&[x, gain, bias]);
        let t = Tensor { data: out, shape, requires_grad: rg, grad: None };
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, mean: means, rstd: rstds }))
    }

    pub fn conv2d(&mut self, x: TensorId, w: TensorId, b: TensorId, stride: usize) -> Result<TensorId> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(Error::dim("conv2d", format!("input {sx:?}, kernel {sw:?}")));
        }
        let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (o, kh, kw) = (sw[0], sw[2], sw[3]);
        if self.shape(b) != [o] {
            return Err(Error::dim("conv2d", format!("bias {:?} for {o} channels", self.shape(b))));
        }
        if kh > h || kw > wd {
            return Err(Error::dim("conv2d", format!("kernel {kh}x{kw} larger than image {h}x{wd}")));
        }
        if stride == 0 {
            return Err(Error::Parameter("conv2d stride must be positive".into()));
        }
        let ho = (h - kh) / stride + 1;
        let wo = (wd - kw) / stride + 1;
        let mut out = vec![0.0; n * o * ho * wo];
        let xd = &self.nodes[x.0].data;
        let wdat = &self.nodes[w.0].data;
        let bd = &self.nodes[b.0].data;
        for ni in 0..n {
            for oi in 0..o {
                for yi in 0..ho {
                    for xi in 0..wo {
                        let mut acc = bd[oi];
                        for ci in 0..c {
                            for ky in 0..kh {
                                let xrow = ((ni * c + ci) * h + yi * stride + ky) * wd + xi * stride;
                                let wrow = ((oi * c + ci) * kh + ky) * kw;
                                for kx in 0..kw {
                                    acc += xd[xrow + kx] * wdat[wrow + kx];
                                }
                            }
                        }
                        out[((ni * o + oi) * ho + yi) * wo + xi] = acc;
                    }
                }
            }
        }
        let rg = self.out_flags(&[x, w, b]);
        let t = Tensor { data: out, shape: vec![n, o, ho, wo], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Conv2d { x, w, b, stride }))
    }

    pub fn embed(&mut self, table: TensorId, ids: &[u32]) -> Result<TensorId> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(Error::dim("embed", format!("table {st:?}")));
        }
        let (v, d) = (st[0], st[1]);
        let mut out = vec![0.0; ids.len() * d];
        for (i, &id) in ids.iter().enumerate() {
            if id as usize >= v {
                return Err(Error::Parameter(format!("embedding id {id} out of range (table {v})")));
            }
            let row = &self.nodes[table.0].data[id as usize * d..(id as usize + 1) * d];
            out[i * d..(i + 1) * d].copy_from_slice(row);
        }
        let rg = self.nodes[table.0].requires_grad;
        let t = Tensor { data: out, shape: vec![ids.len(), d], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Embed { table, ids: ids.to_vec() }))
    }

    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if numel(&shape) != self.nodes[x.0].numel() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {:?}", self.shape(x), shape),
            ));
        }
        let t = Tensor {
            data: self.nodes[x.0].data.clone(),
            shape,
            requires_grad: self.nodes[x.0].requires_grad,
            grad: None,
        };
        Ok(self.push(t, Op::Reshape { x }))
    }

    pub fn permute(&mut self, x: TensorId, axes: &[usize]) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let nd = sx.len();
        let mut seen = vec![false; nd];
        if axes.len() != nd || axes.iter().any(|&a| a >= nd || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::dim("permute", format!("axes {axes:?} for shape {sx:?}")));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| sx[a]).collect();
        let out = permute_data(&self.nodes[x.0].data, &sx, axes, &out_shape);
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data: out, shape: out_shape, requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Permute { x, axes: axes.to_vec() }))
    }

    /// Slice `[a, s, c]` along axis 1: positions offset, offset+stride, ...
    pub fn take_every(&mut self, x: TensorId, offset: usize, stride: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || stride == 0 || offset >= sx[1] {
            return Err(Error::dim("take_every", format!("{sx:?} offset {offset} stride {stride}")));
        }
        let (a, s, c) = (sx[0], sx[1], sx[2]);
        let m = (s - offset + stride - 1) / stride;
        let mut out = vec![0.0; a * m * c];
        for ai in 0..a {
            for (mi, si) in (offset..s).step_by(stride).enumerate() {
                let src = (ai * s + si) * c;
                let dst = (ai * m + mi) * c;
                out[dst..dst + c].copy_from_slice(&self.nodes[x.0].data[src..src + c]);
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data: out, shape: vec![a, m, c], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::TakeEvery { x, offset, stride }))
    }

    /// Interleave `[b, t, d]` tensors into `[b, 2t, d]`, `a` at even slots.
    pub fn interleave(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sa != sb {
            return Err(Error::dim("interleave", format!("{sa:?} vs {sb:?}")));
        }
        let (bs, t, d) = (sa[0], sa[1], sa[2]);
        let mut out = vec![0.0; bs * 2 * t * d];
        for bi in 0..bs {
            for ti in 0..t {
                let src = (bi * t + ti) * d;
                let dst = (bi * 2 * t + 2 * ti) * d;
                out[dst..dst + d].copy_from_slice(&self.nodes[a.0].data[src..src + d]);
                out[dst + d..dst + 2 * d].copy_from_slice(&self.nodes[b.0].data[src..src + d]);
            }
        }
        let rg = self.out_flags(&[a, b]);
        let t = Tensor { data: out, shape: vec![bs, 2 * t, d], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Interleave { a, b }))
    }

    /// Concatenate `[n, k_i, d]` tensors along axis 1 into `[n, sum k_i, d]`.
    pub fn concat_tokens(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::dim("concat_tokens", "no inputs"));
        }
        let s0 = self.shape(parts[0]).to_vec();
        if s0.len() != 3 {
            return Err(Error::dim("concat_tokens", format!("want 3-d inputs, got {s0:?}")));
        }
        let (n, d) = (s0[0], s0[2]);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 3 || s[0] != n || s[2] != d {
                return Err(Error::dim(
                    "concat_tokens",
                    format!("part {s:?} incompatible with [{n}, _, {d}]"),
                ));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total * d];
        for i in 0..n {
            let mut col = 0;
            for (pi, &p) in parts.iter().enumerate() {
                let k = widths[pi];
                let src = &self.nodes[p.0].data[i * k * d..(i + 1) * k * d];
                out[(i * total + col) * d..(i * total + col + k) * d].copy_from_slice(src);
                col += k;
            }
        }
        let rg = self.out_flags(parts);
        let t = Tensor { data: out, shape: vec![n, total, d], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::ConcatTokens { parts: parts.to_vec(), widths }))
    }

    /// Force the first `k` entries of every last-axis row to exactly 1.0.
    /// Gradients for the overwritten entries are dropped.
    pub fn force_ones_prefix(&mut self, x: TensorId, k: usize) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| Error::dim("force_ones_prefix", "scalar input"))?;
        if k > d {
            return Err(Error::dim("force_ones_prefix", format!("k {k} exceeds row width {d}")));
        }
        let rows = numel(&shape) / d;
        let mut data = self.nodes[x.0].data.clone();
        for r in 0..rows {
            for j in 0..k {
                data[r * d + j] = 1.0;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape, requires_grad: rg, grad: None };
        Ok(self.push(t, Op::ForceOnesPrefix { x, k }))
    }

    /// Stochastic binary gate: logistic noise on the score logits, hard 0/1
    /// forward at threshold 0.5, straight-through gradient of the relaxed
    /// sigmoid at temperature `tau`. Scores must lie in [0, 1].
    pub fn gumbel_st(&mut self, scores: TensorId, tau: Real, rng: &mut impl Rng) -> Result<TensorId> {
        if tau <= 0.0 {
            return Err(Error::Parameter(format!("gumbel temperature must be positive, got {tau}")));
        }
        let n = self.nodes[scores.0].numel();
        let mut soft = vec![0.0; n];
        let mut hard = vec![0.0; n];
        for i in 0..n {
            let s = clamp_unit(self.nodes[scores.0].data[i]);
            let u: Real = rng.gen_range(1e-7..1.0 - 1e-7);
            let noise = u.ln() - (1.0 - u).ln();
            let z = (s.ln() - (1.0 - s).ln() + noise) / tau;
            soft[i] = sigmoid(z);
            hard[i] = if z >= 0.0 { 1.0 } else { 0.0 };
        }
        let rg = self.nodes[scores.0].requires_grad;
        let t = Tensor { data: hard, shape: self.shape(scores).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::GumbelSt { scores, soft, tau }))
    }

    /// Deterministic gate used at evaluation: 1.0 where score >= 0.5.
    pub fn hard_threshold(&mut self, scores: TensorId) -> Result<TensorId> {
        let data = self.nodes[scores.0].data.iter().map(|&s| if s >= 0.5 { 1.0 } else { 0.0 }).collect();
        let t = Tensor { data, shape: self.shape(scores).to_vec(), requires_grad: false, grad: None };
        Ok(self.push(t, Op::HardThreshold))
    }

    /// Inverted dropout; `p` is the drop probability.
    pub fn dropout(&mut self, x: TensorId, p: Real, rng: &mut impl Rng) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let n = self.nodes[x.0].numel();
        let keep: Vec<bool> = (0..n).map(|_| rng.gen_range(0.0..1.0_f64) >= p as f64).collect();
        let scale = 1.0 / (1.0 - p);
        let data = self.nodes[x.0]
            .data
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v * scale } else { 0.0 })
            .collect();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data, shape: self.shape(x).to_vec(), requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Dropout { x, keep, scale }))
    }

    /// Full reduction to a single-element tensor.
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let s: Real = self.nodes[x.0].data.iter().sum();
        let rg = self.nodes[x.0].requires_grad;
        let t = Tensor { data: vec![s], shape: vec![1], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::Sum { x }))
    }

    /// Mean cross-entropy over positions with a true mask entry.
    pub fn masked_cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[u32],
        mask: &[bool],
    ) -> Result<TensorId> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || sl[0] != targets.len() || sl[0] != mask.len() {
            return Err(Error::dim(
                "masked_cross_entropy",
                format!("logits {sl:?}, {} targets, {} mask entries", targets.len(), mask.len()),
            ));
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::Contract("cross-entropy over fully padded batch".into()));
        }
        let (n, k) = (sl[0], sl[1]);
        let mut total = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            if targets[i] as usize >= k {
                return Err(Error::Parameter(format!("target {} out of range {k}", targets[i])));
            }
            let row = &self.nodes[logits.0].data[i * k..(i + 1) * k];
            let mx = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<Real>().ln();
            total += lse - row[targets[i] as usize];
        }
        let rg = self.nodes[logits.0].requires_grad;
        let t = Tensor { data: vec![total / count as Real], shape: vec![1], requires_grad: rg, grad: None };
        Ok(self.push(t, Op::MaskedCe { logits, targets: targets.to_vec(), mask: mask.to_vec() }))
    }

    // ── Backward ─────────────────────────────────────────────────────────────

    /// Reverse accumulation from a scalar loss. Every `requires_grad` node,
    /// including leaves that never reached the loss, ends with an allocated
    /// (possibly zero) gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            if node.requires_grad {
                node.grad = Some(vec![0.0; node.data.len()]);
            }
        }
        if let Some(g) = self.nodes[loss.0].grad.as_mut() {
            g[0] = 1.0;
        }
        for i in (0..self.ops.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let gout = match self.nodes[i].grad.clone() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_one(i, &gout);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: TensorId, contrib: &[Real]) {
        if let Some(g) = self.nodes[id.0].grad.as_mut() {
            for (gi, c) in g.iter_mut().zip(contrib) {
                *gi += c;
            }
        }
    }

    fn backprop_one(&mut self, i: usize, gout: &[Real]) {
        let op = self.ops[i].clone();
        match op {
            Op::Leaf | Op::HardThreshold => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.requires_grad(a) {
                    let mut da = vec![0.0; m * k];
                    matmul_bt_acc(gout, &self.nodes[b.0].data, &mut da, m, k, n);
                    self.add_grad(a, &da);
                }
                if self.requires_grad(b) {
                    let mut db = vec![0.0; k * n];
                    matmul_at_acc(&self.nodes[a.0].data, gout, &mut db, m, k, n);
                    self.add_grad(b, &db);
                }
            }
            Op::Bmm { a, b } => {
                let (g, m, k) = (self.shape(a)[0], self.shape(a)[1], self.shape(a)[2]);
                let n = self.shape(b)[2];
                if self.requires_grad(a) {
                    let mut da = vec![0.0; g * m * k];
                    for gi in 0..g {
                        matmul_bt_acc(
                            &gout[gi * m * n..(gi + 1) * m * n],
                            &self.nodes[b.0].data[gi * k * n..(gi + 1) * k * n],
                            &mut da[gi * m * k..(gi + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                    self.add_grad(a, &da);
                }
                if self.requires_grad(b) {
                    let mut db = vec![0.0; g * k * n];
                    for gi in 0..g {
                        matmul_at_acc(
                            &self.nodes[a.0].data[gi * m * k..(gi + 1) * m * k],
                            &gout[gi * m * n..(gi + 1) * m * n],
                            &mut db[gi * k * n..(gi + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    self.add_grad(b, &db);
                }
            }
            Op::AddB { a, b } => {
                if self.requires_grad(a) {
                    let da = reduce_to_shape(gout, self.shape(TensorId(i)), self.shape(a));
                    self.add_grad(a, &da);
                }
                if self.requires_grad(b) {
                    let db = reduce_to_shape(gout, self.shape(TensorId(i)), self.shape(b));
                    self.add_grad(b, &db);
                }
            }
            Op::MulB { a, b } => {
                let out_shape = self.shape(TensorId(i)).to_vec();
                if self.requires_grad(a) {
                    let scaled = apply_broadcast(
                        gout,
                        &out_shape,
                        &self.nodes[b.0].data,
                        self.shape(b),
                        &out_shape,
                        true,
                    );
                    let da = reduce_to_shape(&scaled, &out_shape, self.shape(a));
                    self.add_grad(a, &da);
                }
                if self.requires_grad(b) {
                    let scaled = apply_broadcast(
                        gout,
                        &out_shape,
                        &self.nodes[a.0].data,
                        self.shape(a),
                        &out_shape,
                        true,
                    );
                    let db = reduce_to_shape(&scaled, &out_shape, self.shape(b));
                    self.add_grad(b, &db);
                }
            }
            Op::RowScale { x, m } => {
                let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
                if self.requires_grad(x) {
                    let mut dx = vec![0.0; n * d];
                    for r in 0..n {
                        let s = self.nodes[m.0].data[r];
                        for j in 0..d {
                            dx[r * d + j] = gout[r * d + j] * s;
                        }
                    }
                    self.add_grad(x, &dx);
                }
                if self.requires_grad(m) {
                    let mut dm = vec![0.0; n];
                    for r in 0..n {
                        let mut acc = 0.0;
                        for j in 0..d {
                            acc += gout[r * d + j] * self.nodes[x.0].data[r * d + j];
                        }
                        dm[r] = acc;
                    }
                    self.add_grad(m, &dm);
                }
            }
            Op::Affine { x, mul } => {
                if self.requires_grad(x) {
                    let dx: Vec<Real> = gout.iter().map(|g| g * mul).collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Gelu { x } => {
                if self.requires_grad(x) {
                    let dx: Vec<Real> = self.nodes[x.0]
                        .data
                        .iter()
                        .zip(gout)
                        .map(|(&v, g)| g * gelu_tanh_deriv(v))
                        .collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Sigmoid { x } => {
                if self.requires_grad(x) {
                    let dx: Vec<Real> = self.nodes[i]
                        .data
                        .iter()
                        .zip(gout)
                        .map(|(&y, g)| g * y * (1.0 - y))
                        .collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Tanh { x } => {
                if self.requires_grad(x) {
                    let dx: Vec<Real> = self.nodes[i]
                        .data
                        .iter()
                        .zip(gout)
                        .map(|(&y, g)| g * (1.0 - y * y))
                        .collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Softmax { x, axis } => {
                if self.requires_grad(x) {
                    let shape = self.shape(TensorId(i)).to_vec();
                    let (outer, len, inner) = axis_split(&shape, axis);
                    let y = &self.nodes[i].data;
                    let mut dx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for ii in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + ii;
                            let mut dot = 0.0;
                            for j in 0..len {
                                dot += gout[idx(j)] * y[idx(j)];
                            }
                            for j in 0..len {
                                dx[idx(j)] = y[idx(j)] * (gout[idx(j)] - dot);
                            }
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::LayerNorm { x, gain, bias, mean, rstd } => {
                let d = *self.shape(TensorId(i)).last().unwrap();
                let rows = self.nodes[i].numel() / d;
                let mut dx = vec![0.0; rows * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..rows {
                    let xs = &self.nodes[x.0].data[r * d..(r + 1) * d];
                    let go = &gout[r * d..(r + 1) * d];
                    let mut mean_dxh = 0.0;
                    let mut mean_dxh_xh = 0.0;
                    for j in 0..d {
                        let xh = (xs[j] - mean[r]) * rstd[r];
                        let dxh = go[j] * self.nodes[gain.0].data[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                        dgain[j] += go[j] * xh;
                        dbias[j] += go[j];
                    }
                    mean_dxh /= d as Real;
                    mean_dxh_xh /= d as Real;
                    for j in 0..d {
                        let xh = (xs[j] - mean[r]) * rstd[r];
                        let dxh = go[j] * self.nodes[gain.0].data[j];
                        dx[r * d + j] = rstd[r] * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
                if self.requires_grad(x) {
                    self.add_grad(x, &dx);
                }
                if self.requires_grad(gain) {
                    self.add_grad(gain, &dgain);
                }
                if self.requires_grad(bias) {
                    self.add_grad(bias, &dbias);
                }
            }
            Op::Conv2d { x, w, b, stride } => {
                let sx = self.shape(x).to_vec();
                let sw = self.shape(w).to_vec();
                let so = self.shape(TensorId(i)).to_vec();
                let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
                let (o, kh, kw) = (sw[0], sw[2], sw[3]);
                let (ho, wo) = (so[2], so[3]);
                let mut dx = vec![0.0; n * c * h * wd];
                let mut dw = vec![0.0; o * c * kh * kw];
                let mut db = vec![0.0; o];
                let xd = &self.nodes[x.0].data;
                let wdat = &self.nodes[w.0].data;
                for ni in 0..n {
                    for oi in 0..o {
                        for yi in 0..ho {
                            for xi in 0..wo {
                                let g = gout[((ni * o + oi) * ho + yi) * wo + xi];
                                db[oi] += g;
                                for ci in 0..c {
                                    for ky in 0..kh {
                                        let xrow =
                                            ((ni * c + ci) * h + yi * stride + ky) * wd + xi * stride;
                                        let wrow = ((oi * c + ci) * kh + ky) * kw;
                                        for kx in 0..kw {
                                            dx[xrow + kx] += g * wdat[wrow + kx];
                                            dw[wrow + kx] += g * xd[xrow + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if self.requires_grad(x) {
                    self.add_grad(x, &dx);
                }
                if self.requires_grad(w) {
                    self.add_grad(w, &dw);
                }
                if self.requires_grad(b) {
                    self.add_grad(b, &db);
                }
            }
            Op::Embed { table, ids } => {
                if self.requires_grad(table) {
                    let d = self.shape(table)[1];
                    let mut dt = vec![0.0; self.nodes[table.0].numel()];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id as usize * d + j] += gout[r * d + j];
                        }
                    }
                    self.add_grad(table, &dt);
                }
            }
            Op::Reshape { x } => {
                if self.requires_grad(x) {
                    self.add_grad(x, gout);
                }
            }
            Op::Permute { x, axes } => {
                if self.requires_grad(x) {
                    let mut inv = vec![0usize; axes.len()];
                    for (pos, &a) in axes.iter().enumerate() {
                        inv[a] = pos;
                    }
                    let out_shape = self.shape(TensorId(i)).to_vec();
                    let dx = permute_data(gout, &out_shape, &inv, self.shape(x));
                    self.add_grad(x, &dx);
                }
            }
            Op::TakeEvery { x, offset, stride } => {
                if self.requires_grad(x) {
                    let sx = self.shape(x).to_vec();
                    let (a, s, c) = (sx[0], sx[1], sx[2]);
                    let m = self.shape(TensorId(i))[1];
                    let mut dx = vec![0.0; a * s * c];
                    for ai in 0..a {
                        for (mi, si) in (offset..s).step_by(stride).enumerate().take(m) {
                            let dst = (ai * s + si) * c;
                            let src = (ai * m + mi) * c;
                            dx[dst..dst + c].copy_from_slice(&gout[src..src + c]);
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::Interleave { a, b } => {
                let sa = self.shape(a).to_vec();
                let (bs, t, d) = (sa[0], sa[1], sa[2]);
                let mut da = vec![0.0; bs * t * d];
                let mut db = vec![0.0; bs * t * d];
                for bi in 0..bs {
                    for ti in 0..t {
                        let dst = (bi * t + ti) * d;
                        let src = (bi * 2 * t + 2 * ti) * d;
                        da[dst..dst + d].copy_from_slice(&gout[src..src + d]);
                        db[dst..dst + d].copy_from_slice(&gout[src + d..src + 2 * d]);
                    }
                }
                if self.requires_grad(a) {
                    self.add_grad(a, &da);
                }
                if self.requires_grad(b) {
                    self.add_grad(b, &db);
                }
            }
            Op::ConcatTokens { parts, widths } => {
                let out_shape = self.shape(TensorId(i)).to_vec();
                let (n, total, d) = (out_shape[0], out_shape[1], out_shape[2]);
                let mut col = 0;
                for (pi, &p) in parts.iter().enumerate() {
                    let k = widths[pi];
                    if self.requires_grad(p) {
                        let mut dp = vec![0.0; n * k * d];
                        for r in 0..n {
                            let src = (r * total + col) * d;
                            dp[r * k * d..(r + 1) * k * d]
                                .copy_from_slice(&gout[src..src + k * d]);
                        }
                        self.add_grad(p, &dp);
                    }
                    col += k;
                }
            }
            Op::ForceOnesPrefix { x, k } => {
                if self.requires_grad(x) {
                    let d = *self.shape(TensorId(i)).last().unwrap();
                    let rows = self.nodes[i].numel() / d;
                    let mut dx = gout.to_vec();
                    for r in 0..rows {
                        for j in 0..k {
                            dx[r * d + j] = 0.0;
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::GumbelSt { scores, soft, tau } => {
                if self.requires_grad(scores) {
                    let dx: Vec<Real> = self.nodes[scores.0]
                        .data
                        .iter()
                        .zip(soft.iter())
                        .zip(gout)
                        .map(|((&s, &sf), g)| {
                            let s = clamp_unit(s);
                            g * sf * (1.0 - sf) / (tau * s * (1.0 - s))
                        })
                        .collect();
                    self.add_grad(scores, &dx);
                }
            }
            Op::Dropout { x, keep, scale } => {
                if self.requires_grad(x) {
                    let dx: Vec<Real> = gout
                        .iter()
                        .zip(&keep)
                        .map(|(g, &k)| if k { g * scale } else { 0.0 })
                        .collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Sum { x } => {
                if self.requires_grad(x) {
                    let dx = vec![gout[0]; self.nodes[x.0].numel()];
                    self.add_grad(x, &dx);
                }
            }
            Op::MaskedCe { logits, targets, mask } => {
                if self.requires_grad(logits) {
                    let sl = self.shape(logits).to_vec();
                    let (n, k) = (sl[0], sl[1]);
                    let count = mask.iter().filter(|m| **m).count() as Real;
                    let mut dx = vec![0.0; n * k];
                    for r in 0..n {
                        if !mask[r] {
                            continue;
                        }
                        let row = &self.nodes[logits.0].data[r * k..(r + 1) * k];
                        let mx = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
                        let denom: Real = row.iter().map(|v| (v - mx).exp()).sum();
                        for j in 0..k {
                            let p = (row[j] - mx).exp() / denom;
                            let ind = if j == targets[r] as usize { 1.0 } else { 0.0 };
                            dx[r * k + j] = gout[0] * (p - ind) / count;
                        }
                    }
                    self.add_grad(logits, &dx);
                }
            }
        }
    }
}

// ── Kernels and helpers ──────────────────────────────────────────────────────

/// out += a x b with a [m,k], b [k,n]; ikj loop order for vectorization.
fn matmul_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// da += g x b^T with g [m,n], b [k,n] -> [m,k].
fn matmul_bt_acc(g: &[Real], b: &[Real], da: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += grow[j] * brow[j];
            }
            da[i * k + kk] += acc;
        }
    }
}

/// db += a^T x g with a [m,k], g [m,n] -> [k,n].
fn matmul_at_acc(a: &[Real], g: &[Real], db: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let drow = &mut db[kk * n..(kk + 1) * n];
            for j in 0..n {
                drow[j] += av * grow[j];
            }
        }
    }
}

fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: Real = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu_tanh(x: Real) -> Real {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_tanh_deriv(x: Real) -> Real {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn clamp_unit(s: Real) -> Real {
    s.clamp(1e-6, 1.0 - 1e-6)
}

/// Split a shape at `axis` into (outer, len, inner) products.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Right-aligned numpy-style broadcast shape, or None if incompatible.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        if da != db && da != 1 && db != 1 {
            return None;
        }
        out[i] = da.max(db);
    }
    Some(out)
}

/// Strides with 0 for broadcast (size-1) axes, right-aligned to `out_shape`.
fn bcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let nd = out_shape.len();
    let offset = nd - shape.len();
    let mut strides = vec![0; nd];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Elementwise a (op) b broadcast into `out_shape`; mul if `is_mul` else add.
fn apply_broadcast(
    a: &[Real],
    sa: &[usize],
    b: &[Real],
    sb: &[usize],
    out_shape: &[usize],
    is_mul: bool,
) -> Vec<Real> {
    let n = numel(out_shape);
    // Fast paths: identical shapes, and trailing-axis broadcast (bias add).
    if sa == out_shape && sb == out_shape {
        return if is_mul {
            a.iter().zip(b).map(|(x, y)| x * y).collect()
        } else {
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        };
    }
    if sa == out_shape && sb.len() == 1 && sb[0] == *out_shape.last().unwrap_or(&0) {
        let d = sb[0];
        let mut out = vec![0.0; n];
        for (r, chunk) in a.chunks_exact(d).enumerate() {
            for j in 0..d {
                out[r * d + j] = if is_mul { chunk[j] * b[j] } else { chunk[j] + b[j] };
            }
        }
        return out;
    }
    let stra = bcast_strides(sa, out_shape);
    let strb = bcast_strides(sb, out_shape);
    let nd = out_shape.len();
    let mut coords = vec![0usize; nd];
    let mut out = vec![0.0; n];
    let (mut ia, mut ib) = (0usize, 0usize);
    for slot in out.iter_mut() {
        let (x, y) = (a[ia], b[ib]);
        *slot = if is_mul { x * y } else { x + y };
        // Odometer increment with stride bookkeeping.
        for axis in (0..nd).rev() {
            coords[axis] += 1;
            ia += stra[axis];
            ib += strb[axis];
            if coords[axis] < out_shape[axis] {
                break;
            }
            coords[axis] = 0;
            ia -= stra[axis] * out_shape[axis];
            ib -= strb[axis] * out_shape[axis];
        }
    }
    out
}

/// Sum `grad` (shaped `from`) down to `to` by collapsing broadcast axes.
fn reduce_to_shape(grad: &[Real], from: &[usize], to: &[usize]) -> Vec<Real> {
    if from == to {
        return grad.to_vec();
    }
    let strides = bcast_strides(to, from);
    let nd = from.len();
    let mut out = vec![0.0; numel(to)];
    let mut coords = vec![0usize; nd];
    let mut it = 0usize;
    for g in grad {
        out[it] += g;
        for axis in (0..nd).rev() {
            coords[axis] += 1;
            it += strides[axis];
            if coords[axis] < from[axis] {
                break;
            }
            coords[axis] = 0;
            it -= strides[axis] * from[axis];
        }
    }
    out
}

/// Reorder `data` (shape `sx`) so axis `axes[i]` of the input becomes axis `i`.
fn permute_data(data: &[Real], sx: &[usize], axes: &[usize], out_shape: &[usize]) -> Vec<Real> {
    let nd = sx.len();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * sx[i + 1];
    }
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = vec![0.0; data.len()];
    let mut coords = vec![0usize; nd];
    let mut src = 0usize;
    for slot in out.iter_mut() {
        *slot = data[src];
        for axis in (0..nd).rev() {
            coords[axis] += 1;
            src += step[axis];
            if coords[axis] < out_shape[axis] {
                break;
            }
            coords[axis] = 0;
            src -= step[axis] * out_shape[axis];
        }
    }
    out
}
