//! Reverse-mode autodiff over f64 `ndarray` tensors.
//!
//! One `Tape` records one forward pass; `backward` consumes the recorded
//! closures and returns gradients for every node. All operations are
//! deterministic, which makes training runs exactly reproducible from a
//! seed. The op set is exactly what the encoders and losses in this crate
//! need, nothing more.

use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView2, Axis, IxDyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

type Accum<'a> = &'a mut dyn FnMut(usize, ArrayD<f64>);
type GradFn = Box<dyn FnOnce(&ArrayD<f64>, Accum)>;

struct Node {
    value: ArrayD<f64>,
    grad_fn: Option<GradFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, id: TensorId) -> Option<&ArrayD<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

fn as2(v: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    v.view().into_dimensionality().expect("2-d tensor expected")
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

    pub fn value(&self, id: TensorId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        *v.iter().next().expect("scalar node")
    }

    fn push(&mut self, value: ArrayD<f64>, grad_fn: Option<GradFn>) -> TensorId {
        self.nodes.push(Node { value, grad_fn });
        TensorId(self.nodes.len() - 1)
    }

    /// Leaf tensor; gradients are accumulated for it like any other node.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, None)
    }

    pub fn leaf2(&mut self, value: Array2<f64>) -> TensorId {
        self.leaf(value.into_dyn())
    }

    pub fn leaf1(&mut self, value: Array1<f64>) -> TensorId {
        self.leaf(value.into_dyn())
    }

    /// Runs backward from a scalar node and returns per-node gradients.
    /// Consumes the recorded closures, so it can be called once per tape.
    pub fn backward(&mut self, root: TensorId) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(ArrayD::from_elem(self.value(root).raw_dim(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(f) = self.nodes[i].grad_fn.take() {
                f(&g, &mut |pid, contrib| match &mut grads[pid] {
                    Some(acc) => *acc += &contrib,
                    slot => *slot = Some(contrib),
                });
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    // -- elementwise ------------------------------------------------------

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = self.value(a) + self.value(b);
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g.clone());
                acc(b.0, g.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = self.value(a) - self.value(b);
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g.clone());
                acc(b.0, -g);
            })),
        )
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = &av * &bv;
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g * &bv);
                acc(b.0, g * &av);
            })),
        )
    }

    pub fn scale(&mut self, a: TensorId, k: f64) -> TensorId {
        let value = self.value(a) * k;
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g * k);
            })),
        )
    }

    pub fn add_scalar(&mut self, a: TensorId, k: f64) -> TensorId {
        let value = self.value(a) + k;
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g.clone());
            })),
        )
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let av = self.value(a).clone();
        let value = av.mapv(|x| x.max(0.0));
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g * &av.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }));
            })),
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).mapv(f64::tanh);
        let y = value.clone();
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g * &y.mapv(|t| 1.0 - t * t));
            })),
        )
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let y = value.clone();
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(a.0, g * &y.mapv(|s| s * (1.0 - s)));
            })),
        )
    }

    // -- reductions -------------------------------------------------------

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let shape = self.value(a).raw_dim();
        let value = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                let gv = *g.iter().next().expect("scalar grad");
                acc(a.0, ArrayD::from_elem(shape, gv));
            })),
        )
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Row-wise stable log-sum-exp of an (m, n) matrix -> (m,).
    pub fn logsumexp_rows(&mut self, a: TensorId) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let (m, _n) = av.dim();
        let mut out = Array1::zeros(m);
        for (i, row) in av.rows().into_iter().enumerate() {
            let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            out[i] = mx + row.mapv(|x| (x - mx).exp()).sum().ln();
        }
        let lse = out.clone();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let mut ga = Array2::zeros(av.dim());
                for i in 0..av.nrows() {
                    let gi = g[[i]];
                    for j in 0..av.ncols() {
                        ga[(i, j)] = gi * (av[(i, j)] - lse[i]).exp();
                    }
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    /// Picks `a[i, idx[i]]` per row -> (m,).
    pub fn gather_cols(&mut self, a: TensorId, idx: Vec<usize>) -> TensorId {
        let av = as2(self.value(a));
        assert_eq!(av.nrows(), idx.len());
        let out: Array1<f64> = idx.iter().enumerate().map(|(i, &j)| av[(i, j)]).collect();
        let dim = av.dim();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let mut ga = Array2::zeros(dim);
                for (i, &j) in idx.iter().enumerate() {
                    ga[(i, j)] = g[[i]];
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    pub fn gather_diag(&mut self, a: TensorId) -> TensorId {
        let n = as2(self.value(a)).nrows();
        self.gather_cols(a, (0..n).collect())
    }

    // -- matrix ops -------------------------------------------------------

    /// (m, k) x (k, n) -> (m, n).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let bv = as2(self.value(b)).to_owned();
        let value = av.dot(&bv);
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                acc(a.0, gv.dot(&bv.t()).into_dyn());
                acc(b.0, av.t().dot(&gv).into_dyn());
            })),
        )
    }

    /// (m, k) x (n, k)^T -> (m, n).
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let bv = as2(self.value(b)).to_owned();
        let value = av.dot(&bv.t());
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                acc(a.0, gv.dot(&bv).into_dyn());
                acc(b.0, gv.t().dot(&av).into_dyn());
            })),
        )
    }

    /// Adds a (n,) bias to every row of an (m, n) matrix.
    pub fn add_row_bias(&mut self, a: TensorId, bias: TensorId) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let bv = self
            .value(bias)
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("bias must be 1-d")
            .to_owned();
        assert_eq!(av.ncols(), bv.len());
        let value = &av + &bv;
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                acc(bias.0, gv.sum_axis(Axis(0)).into_dyn());
                acc(a.0, gv.to_owned().into_dyn());
            })),
        )
    }

    /// Row-wise x / (||x|| + eps) for an (m, n) matrix.
    pub fn l2norm_rows(&mut self, a: TensorId, eps: f64) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let (m, n) = av.dim();
        let mut out = Array2::zeros((m, n));
        let mut norms = Array1::zeros(m);
        for i in 0..m {
            let norm = av.row(i).dot(&av.row(i)).sqrt();
            norms[i] = norm;
            let s = norm + eps;
            for j in 0..n {
                out[(i, j)] = av[(i, j)] / s;
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                let mut ga = Array2::zeros((m, n));
                for i in 0..m {
                    let s = norms[i] + eps;
                    let xg = av.row(i).dot(&gv.row(i));
                    for j in 0..n {
                        let correction = if norms[i] > 1e-300 {
                            av[(i, j)] * xg / (norms[i] * s * s)
                        } else {
                            0.0
                        };
                        ga[(i, j)] = gv[(i, j)] / s - correction;
                    }
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = as2(self.value(a)).to_owned();
        let bv = as2(self.value(b)).to_owned();
        assert_eq!(av.nrows(), bv.nrows());
        let (p, q) = (av.ncols(), bv.ncols());
        let value =
            ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).expect("concat shapes");
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                acc(a.0, gv.slice(ndarray::s![.., 0..p]).to_owned().into_dyn());
                acc(b.0, gv.slice(ndarray::s![.., p..p + q]).to_owned().into_dyn());
            })),
        )
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> TensorId {
        let old_shape: Vec<usize> = self.value(a).shape().to_vec();
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(
            value,
            Some(Box::new(move |g, acc| {
                acc(
                    a.0,
                    g.clone()
                        .into_shape_with_order(IxDyn(&old_shape))
                        .expect("reshape back"),
                );
            })),
        )
    }

    // -- tensors with batch/point structure --------------------------------

    /// Max over axis 1 of a (B, P, F) tensor -> (B, F); ties resolved to the
    /// lowest point index.
    pub fn max_over_points(&mut self, a: TensorId) -> TensorId {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("(B, P, F) expected")
            .to_owned();
        let (b, p, f) = av.dim();
        assert!(p > 0, "empty point dimension");
        let mut out = Array2::from_elem((b, f), f64::NEG_INFINITY);
        let mut argmax = vec![0usize; b * f];
        for bi in 0..b {
            for pi in 0..p {
                for fi in 0..f {
                    let v = av[(bi, pi, fi)];
                    if v > out[(bi, fi)] {
                        out[(bi, fi)] = v;
                        argmax[bi * f + fi] = pi;
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                let mut ga = ndarray::Array3::zeros((b, p, f));
                for bi in 0..b {
                    for fi in 0..f {
                        ga[(bi, argmax[bi * f + fi], fi)] += gv[(bi, fi)];
                    }
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    /// Mean over axis 1 of a (B, P, F) tensor -> (B, F).
    pub fn mean_over_points(&mut self, a: TensorId) -> TensorId {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("(B, P, F) expected")
            .to_owned();
        let (b, p, f) = av.dim();
        let value = av.mean_axis(Axis(1)).expect("p > 0");
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                let mut ga = ndarray::Array3::zeros((b, p, f));
                for bi in 0..b {
                    for pi in 0..p {
                        for fi in 0..f {
                            ga[(bi, pi, fi)] = gv[(bi, fi)] / p as f64;
                        }
                    }
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    /// Global average pool of a (B, C, H, W) tensor -> (B, C).
    pub fn global_avg_pool(&mut self, a: TensorId) -> TensorId {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .expect("(B, C, H, W) expected")
            .to_owned();
        let (b, c, h, w) = av.dim();
        let mut out = Array2::zeros((b, c));
        for bi in 0..b {
            for ci in 0..c {
                let mut s = 0.0;
                for hi in 0..h {
                    for wi in 0..w {
                        s += av[(bi, ci, hi, wi)];
                    }
                }
                out[(bi, ci)] = s / (h * w) as f64;
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                let mut ga = Array4::zeros((b, c, h, w));
                for bi in 0..b {
                    for ci in 0..c {
                        let v = gv[(bi, ci)] / (h * w) as f64;
                        for hi in 0..h {
                            for wi in 0..w {
                                ga[(bi, ci, hi, wi)] = v;
                            }
                        }
                    }
                }
                acc(a.0, ga.into_dyn());
            })),
        )
    }

    /// Adds a per-channel bias to a (B, C, H, W) tensor.
    pub fn add_channel_bias(&mut self, a: TensorId, bias: TensorId) -> TensorId {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .expect("(B, C, H, W) expected")
            .to_owned();
        let bv = self
            .value(bias)
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("bias must be 1-d")
            .to_owned();
        let (b, c, h, w) = av.dim();
        assert_eq!(c, bv.len());
        let mut value = av;
        for bi in 0..b {
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        value[(bi, ci, hi, wi)] += bv[ci];
                    }
                }
            }
        }
        self.push(
            value.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = g
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .expect("4-d grad");
                let mut gb = Array1::zeros(c);
                for bi in 0..b {
                    for ci in 0..c {
                        for hi in 0..h {
                            for wi in 0..w {
                                gb[ci] += gv[(bi, ci, hi, wi)];
                            }
                        }
                    }
                }
                acc(bias.0, gb.into_dyn());
                acc(a.0, g.clone());
            })),
        )
    }

    /// 2-D convolution of (B, C, H, W) with (O, C, KH, KW), zero padding.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        stride: usize,
        pad: usize,
    ) -> TensorId {
        let xv = self
            .value(x)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .expect("(B, C, H, W) expected")
            .to_owned();
        let wv = self
            .value(w)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .expect("(O, C, KH, KW) expected")
            .to_owned();
        let (b, c, h, wd) = xv.dim();
        let (o, cw, kh, kw) = wv.dim();
        assert_eq!(c, cw, "channel mismatch");
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;

        // im2col: rows indexed by (b, oy, ox), cols by (c, ky, kx).
        let mut cols = Array2::zeros((b * oh * ow, c * kh * kw));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    cols[(row, (ci * kh + ky) * kw + kx)] =
                                        xv[(bi, ci, iy as usize, ix as usize)];
                                }
                            }
                        }
                    }
                }
            }
        }
        let w_mat = wv
            .clone()
            .into_shape_with_order((o, c * kh * kw))
            .expect("kernel reshape");
        let out_rows = cols.dot(&w_mat.t()); // (B*OH*OW, O)
        let mut out = Array4::zeros((b, o, oh, ow));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for oi in 0..o {
                        out[(bi, oi, oy, ox)] = out_rows[(row, oi)];
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = g
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .expect("4-d grad");
                let mut g_rows = Array2::zeros((b * oh * ow, o));
                for bi in 0..b {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let row = (bi * oh + oy) * ow + ox;
                            for oi in 0..o {
                                g_rows[(row, oi)] = gv[(bi, oi, oy, ox)];
                            }
                        }
                    }
                }
                let g_w = g_rows
                    .t()
                    .dot(&cols)
                    .into_shape_with_order((o, c, kh, kw))
                    .expect("kernel grad reshape");
                let g_cols = g_rows.dot(&w_mat); // (B*OH*OW, C*KH*KW)
                let mut g_x = Array4::zeros((b, c, h, wd));
                for bi in 0..b {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let row = (bi * oh + oy) * ow + ox;
                            for ci in 0..c {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if iy >= 0
                                            && ix >= 0
                                            && (iy as usize) < h
                                            && (ix as usize) < wd
                                        {
                                            g_x[(bi, ci, iy as usize, ix as usize)] +=
                                                g_cols[(row, (ci * kh + ky) * kw + kx)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                acc(w.0, g_w.into_dyn());
                acc(x.0, g_x.into_dyn());
            })),
        )
    }

    /// Builds a (B, d) matrix by taking row b from `options[idx[b]]`; every
    /// option is a (B, d) tensor. Used to align per-sample sequence outputs.
    pub fn select_per_row(&mut self, options: &[TensorId], idx: &[usize]) -> TensorId {
        assert!(!options.is_empty());
        let b = as2(self.value(options[0])).nrows();
        let d = as2(self.value(options[0])).ncols();
        assert_eq!(b, idx.len());
        let mut out = Array2::zeros((b, d));
        for (bi, &oi) in idx.iter().enumerate() {
            let src = as2(self.value(options[oi]));
            out.row_mut(bi).assign(&src.row(bi));
        }
        let opts: Vec<TensorId> = options.to_vec();
        let idx = idx.to_vec();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, acc| {
                let gv = as2(g);
                for (oi, opt) in opts.iter().enumerate() {
                    let mut ga = Array2::zeros((b, d));
                    let mut any = false;
                    for (bi, &sel) in idx.iter().enumerate() {
                        if sel == oi {
                            ga.row_mut(bi).assign(&gv.row(bi));
                            any = true;
                        }
                    }
                    if any {
                        acc(opt.0, ga.into_dyn());
                    }
                }
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array3, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn randn(rng: &mut ChaCha12Rng, shape: &[usize]) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences on every leaf element.
    fn check_grads(
        build: impl Fn(&mut Tape, &[TensorId]) -> TensorId,
        shapes: &[&[usize]],
        seed: u64,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let inputs: Vec<ArrayD<f64>> = shapes.iter().map(|s| randn(&mut rng, s)).collect();

        let eval = |inputs: &[ArrayD<f64>]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<TensorId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
            let out = build(&mut tape, &ids);
            tape.scalar(out)
        };

        let mut tape = Tape::new();
        let ids: Vec<TensorId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = build(&mut tape, &ids);
        let grads = tape.backward(out);

        let h = 1e-6;
        for (vi, shape) in shapes.iter().enumerate() {
            let g = grads
                .wrt(ids[vi])
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(IxDyn(shape)));
            let numel: usize = shape.iter().product();
            for flat in 0..numel {
                let mut plus = inputs.clone();
                let mut minus = inputs.clone();
                *plus[vi].iter_mut().nth(flat).unwrap() += h;
                *minus[vi].iter_mut().nth(flat).unwrap() -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = *g.iter().nth(flat).unwrap();
                let denom = fd.abs().max(an.abs()).max(1e-4);
                assert!(
                    ((fd - an) / denom).abs() < 1e-4,
                    "input {vi} elem {flat}: fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn grad_elementwise_chain() {
        check_grads(
            |t, ids| {
                let m = t.mul(ids[0], ids[1]);
                let s = t.sub(m, ids[2]);
                let r = t.relu(s);
                let th = t.tanh(r);
                let sg = t.sigmoid(th);
                t.sum_all(sg)
            },
            &[&[3, 4], &[3, 4], &[3, 4]],
            1,
        );
    }

    #[test]
    fn grad_matmul_bias() {
        check_grads(
            |t, ids| {
                let y = t.matmul(ids[0], ids[1]);
                let y = t.add_row_bias(y, ids[2]);
                let y = t.tanh(y);
                let z = t.matmul_nt(y, ids[3]);
                t.mean_all(z)
            },
            &[&[3, 5], &[5, 4], &[4], &[6, 4]],
            2,
        );
    }

    #[test]
    fn grad_logsumexp_gather() {
        check_grads(
            |t, ids| {
                let lse = t.logsumexp_rows(ids[0]);
                let diag = t.gather_diag(ids[0]);
                let d = t.sub(lse, diag);
                t.mean_all(d)
            },
            &[&[4, 4]],
            3,
        );
    }

    #[test]
    fn grad_l2norm_concat() {
        check_grads(
            |t, ids| {
                let cat = t.concat_cols(ids[0], ids[1]);
                let n = t.l2norm_rows(cat, 1e-8);
                let sq = t.mul(n, n);
                t.sum_all(sq)
            },
            &[&[3, 4], &[3, 2]],
            4,
        );
    }

    #[test]
    fn grad_point_pools() {
        check_grads(
            |t, ids| {
                let mx = t.max_over_points(ids[0]);
                let mn = t.mean_over_points(ids[0]);
                let s = t.add(mx, mn);
                t.sum_all(s)
            },
            &[&[2, 5, 3]],
            5,
        );
    }

    #[test]
    fn grad_conv_gap() {
        check_grads(
            |t, ids| {
                let y = t.conv2d(ids[0], ids[1], 2, 1);
                let y = t.add_channel_bias(y, ids[2]);
                let y = t.relu(y);
                let p = t.global_avg_pool(y);
                t.sum_all(p)
            },
            &[&[2, 3, 6, 6], &[4, 3, 3, 3], &[4]],
            6,
        );
    }

    #[test]
    fn grad_select_per_row() {
        check_grads(
            |t, ids| {
                let sel = t.select_per_row(&[ids[0], ids[1], ids[2]], &[2, 0, 1]);
                let sq = t.mul(sel, sel);
                t.sum_all(sq)
            },
            &[&[3, 4], &[3, 4], &[3, 4]],
            7,
        );
    }

    #[test]
    fn grad_reshape_path() {
        check_grads(
            |t, ids| {
                let r = t.reshape(ids[0], &[6, 4]);
                let y = t.matmul(r, ids[1]);
                t.sum_all(y)
            },
            &[&[2, 3, 4], &[4, 2]],
            8,
        );
    }

    #[test]
    fn conv_matches_direct_computation() {
        // 1x1 input channel, known kernel: compare against hand conv.
        let x = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| (i * 4 + j) as f64);
        let w = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| 1.0 + (i * 2 + j) as f64);
        let mut tape = Tape::new();
        let xi = tape.leaf(x.clone().into_dyn());
        let wi = tape.leaf(w.clone().into_dyn());
        let y = tape.conv2d(xi, wi, 1, 0);
        let yv = tape.value(y);
        for oy in 0..3 {
            for ox in 0..3 {
                let mut expect = 0.0;
                for ky in 0..2 {
                    for kx in 0..2 {
                        expect += x[(0, 0, oy + ky, ox + kx)] * w[(0, 0, ky, kx)];
                    }
                }
                assert_eq!(yv[[0, 0, oy, ox]], expect);
            }
        }
    }

    #[test]
    fn max_pool_is_permutation_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let a = Array3::from_shape_fn((1, 8, 5), |_| rng.random_range(-1.0..1.0));
        let mut tape = Tape::new();
        let id = tape.leaf(a.clone().into_dyn());
        let m = tape.max_over_points(id);
        let base = tape.value(m).clone();

        let mut perm: Vec<usize> = (0..8).collect();
        perm.reverse();
        let shuffled = Array3::from_shape_fn((1, 8, 5), |(b, p, f)| a[(b, perm[p], f)]);
        let mut tape2 = Tape::new();
        let id2 = tape2.leaf(shuffled.into_dyn());
        let m2 = tape2.max_over_points(id2);
        assert_eq!(tape2.value(m2), &base);
    }
}
