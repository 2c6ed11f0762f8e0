//! Tape-based reverse-mode automatic differentiation over `ndarray` tensors.
//!
//! Every training path in this crate (autoencoder losses, the perceptual
//! extractor, the denoiser, policy-gradient replay) records its forward pass
//! on a [`Tape`] and obtains exact gradients from [`Tape::backward`]. The op
//! set is deliberately small: dense/conv layers, pointwise nonlinearities,
//! channel-wise affine conditioning, and the reductions the loss functions
//! need. All values are `f64`; gradient-check tests below hold each op to
//! finite differences.

use ndarray::{Array1, Array2, Array3, ArrayD, Ix1, Ix2, Ix3, IxDyn};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Neg(VarId),
    Scale(VarId, f64),
    AddScalar(VarId),
    Abs(VarId),
    LeakyRelu(VarId, f64),
    Tanh(VarId),
    Exp(VarId),
    MatMul(VarId, VarId),
    Transpose(VarId),
    Reshape(VarId),
    Conv2d {
        x: VarId,
        w: VarId,
        b: Option<VarId>,
        stride: usize,
        pad: usize,
    },
    Upsample2x(VarId),
    MeanSpatial(VarId),
    MulChannel(VarId, VarId),
    AddChannel(VarId, VarId),
    ChannelUnitNorm(VarId, f64),
    Softmax(VarId),
    SliceChannels(VarId, usize, usize),
    Sum(VarId),
    Mean(VarId),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`VarId`].
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if it was reachable and
    /// marked as requiring grad.
    pub fn get(&self, id: VarId) -> Option<&ArrayD<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Recording tape. Create one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Copies into standard (row-major) layout when needed; reshapes and raw
/// slice access rely on it.
fn to_standard(a: ArrayD<f64>) -> ArrayD<f64> {
    if a.is_standard_layout() {
        a
    } else {
        let shape = a.raw_dim();
        let v: Vec<f64> = a.iter().copied().collect();
        ArrayD::from_shape_vec(shape, v).unwrap()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> VarId {
        self.nodes.push(Node {
            value: to_standard(value),
            op,
            needs_grad,
        });
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> VarId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input; [`Gradients::get`] will hold its gradient.
    pub fn param(&mut self, value: ArrayD<f64>) -> VarId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: VarId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: VarId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        v.iter().next().copied().unwrap_or(f64::NAN)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn neg(&mut self, a: VarId) -> VarId {
        let v = self.nodes[a.0].value.mapv(|x| -x);
        let ng = self.needs(a);
        self.push(v, Op::Neg(a), ng)
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let v = self.nodes[a.0].value.mapv(|x| c * x);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: VarId, c: f64) -> VarId {
        let v = self.nodes[a.0].value.mapv(|x| x + c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn abs(&mut self, a: VarId) -> VarId {
        let v = self.nodes[a.0].value.mapv(f64::abs);
        let ng = self.needs(a);
        self.push(v, Op::Abs(a), ng)
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        self.leaky_relu(a, 0.0)
    }

    pub fn leaky_relu(&mut self, a: VarId, leak: f64) -> VarId {
        let v = self.nodes[a.0]
            .value
            .mapv(|x| if x > 0.0 { x } else { leak * x });
        let ng = self.needs(a);
        self.push(v, Op::LeakyRelu(a, leak), ng)
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    /// 2-D matrix product `a @ b`.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let av = as2(&self.nodes[a.0].value);
        let bv = as2(&self.nodes[b.0].value);
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let v = av.dot(&bv).into_dyn();
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let av = as2(&self.nodes[a.0].value);
        let v = av.t().to_owned().into_dyn();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn reshape(&mut self, a: VarId, shape: &[usize]) -> VarId {
        let v = self.nodes[a.0]
            .value
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        let ng = self.needs(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// 2-D convolution over a single `[C, H, W]` image with kernel
    /// `[Cout, Cin, K, K]`, zero padding.
    pub fn conv2d(
        &mut self,
        x: VarId,
        w: VarId,
        b: Option<VarId>,
        stride: usize,
        pad: usize,
    ) -> VarId {
        let xv = as3(&self.nodes[x.0].value);
        let wv = &self.nodes[w.0].value;
        let wsh = wv.shape();
        assert_eq!(wsh.len(), 4, "conv2d kernel must be 4-D");
        let (cout, cin, k) = (wsh[0], wsh[1], wsh[2]);
        assert_eq!(wsh[3], k, "conv2d kernel must be square");
        assert_eq!(xv.dim().0, cin, "conv2d channel mismatch");

        let cols = im2col(&xv, k, stride, pad);
        let wm = wv
            .view()
            .into_shape_with_order((cout, cin * k * k))
            .unwrap()
            .to_owned();
        let mut ym = wm.dot(&cols);
        if let Some(bid) = b {
            let bv = as1(&self.nodes[bid.0].value);
            for (mut row, bi) in ym.rows_mut().into_iter().zip(bv.iter()) {
                row += *bi;
            }
        }
        let (h, wd) = (xv.dim().1, xv.dim().2);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let v = ym
            .into_shape_with_order(IxDyn(&[cout, ho, wo]))
            .unwrap();
        let ng = self.needs(x) || self.needs(w) || b.map(|bid| self.needs(bid)).unwrap_or(false);
        self.push(v, Op::Conv2d { x, w, b, stride, pad }, ng)
    }

    /// Nearest-neighbour 2x upsampling of a `[C, H, W]` tensor.
    pub fn upsample2x(&mut self, a: VarId) -> VarId {
        let xv = as3(&self.nodes[a.0].value);
        let (c, h, w) = xv.dim();
        let mut out = Array3::<f64>::zeros((c, 2 * h, 2 * w));
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    let v = xv[(ci, hi, wi)];
                    out[(ci, 2 * hi, 2 * wi)] = v;
                    out[(ci, 2 * hi + 1, 2 * wi)] = v;
                    out[(ci, 2 * hi, 2 * wi + 1)] = v;
                    out[(ci, 2 * hi + 1, 2 * wi + 1)] = v;
                }
            }
        }
        let ng = self.needs(a);
        self.push(out.into_dyn(), Op::Upsample2x(a), ng)
    }

    /// Spatial mean of a `[C, H, W]` tensor, producing `[C]`.
    pub fn mean_spatial(&mut self, a: VarId) -> VarId {
        let xv = as3(&self.nodes[a.0].value);
        let (c, h, w) = xv.dim();
        let mut out = Array1::<f64>::zeros(c);
        for ci in 0..c {
            out[ci] = xv.index_axis(ndarray::Axis(0), ci).sum() / (h * w) as f64;
        }
        let ng = self.needs(a);
        self.push(out.into_dyn(), Op::MeanSpatial(a), ng)
    }

    /// Per-channel scaling of `[C, H, W]` by `[C]`.
    pub fn mul_channel(&mut self, x: VarId, s: VarId) -> VarId {
        let xv = as3(&self.nodes[x.0].value);
        let sv = as1(&self.nodes[s.0].value);
        assert_eq!(xv.dim().0, sv.len(), "mul_channel channel mismatch");
        let mut out = xv.to_owned();
        for (ci, mut plane) in out.outer_iter_mut().enumerate() {
            plane *= sv[ci];
        }
        let ng = self.needs(x) || self.needs(s);
        self.push(out.into_dyn(), Op::MulChannel(x, s), ng)
    }

    /// Per-channel bias of `[C, H, W]` by `[C]`.
    pub fn add_channel(&mut self, x: VarId, b: VarId) -> VarId {
        let xv = as3(&self.nodes[x.0].value);
        let bv = as1(&self.nodes[b.0].value);
        assert_eq!(xv.dim().0, bv.len(), "add_channel channel mismatch");
        let mut out = xv.to_owned();
        for (ci, mut plane) in out.outer_iter_mut().enumerate() {
            plane += bv[ci];
        }
        let ng = self.needs(x) || self.needs(b);
        self.push(out.into_dyn(), Op::AddChannel(x, b), ng)
    }

    /// Unit-normalizes the channel vector at every spatial location of a
    /// `[C, H, W]` tensor: `y[.,h,w] = x[.,h,w] / sqrt(sum_c x^2 + eps)`.
    pub fn channel_unit_norm(&mut self, a: VarId, eps: f64) -> VarId {
        let xv = as3(&self.nodes[a.0].value);
        let (c, h, w) = xv.dim();
        let mut out = Array3::<f64>::zeros((c, h, w));
        for hi in 0..h {
            for wi in 0..w {
                let mut sq = 0.0;
                for ci in 0..c {
                    sq += xv[(ci, hi, wi)] * xv[(ci, hi, wi)];
                }
                let n = (sq + eps).sqrt();
                for ci in 0..c {
                    out[(ci, hi, wi)] = xv[(ci, hi, wi)] / n;
                }
            }
        }
        let ng = self.needs(a);
        self.push(out.into_dyn(), Op::ChannelUnitNorm(a, eps), ng)
    }

    /// Numerically stable softmax of a 1-D vector.
    pub fn softmax(&mut self, a: VarId) -> VarId {
        let xv = as1(&self.nodes[a.0].value);
        let m = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ex = xv.mapv(|x| (x - m).exp());
        let s = ex.sum();
        let v = ex.mapv(|e| e / s);
        let ng = self.needs(a);
        self.push(v.into_dyn(), Op::Softmax(a), ng)
    }

    /// Channels `from..to` of a `[C, H, W]` tensor.
    pub fn slice_channels(&mut self, a: VarId, from: usize, to: usize) -> VarId {
        let xv = as3(&self.nodes[a.0].value);
        assert!(from < to && to <= xv.dim().0, "slice_channels range");
        let v = xv
            .slice(ndarray::s![from..to, .., ..])
            .to_owned()
            .into_dyn();
        let ng = self.needs(a);
        self.push(v, Op::SliceChannels(a, from, to), ng)
    }

    /// Sum of all elements (0-d result).
    pub fn sum(&mut self, a: VarId) -> VarId {
        let s = self.nodes[a.0].value.sum();
        let ng = self.needs(a);
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::Sum(a), ng)
    }

    /// Mean of all elements (0-d result).
    pub fn mean(&mut self, a: VarId) -> VarId {
        let v = &self.nodes[a.0].value;
        let m = v.sum() / v.len() as f64;
        let ng = self.needs(a);
        self.push(ArrayD::from_elem(IxDyn(&[]), m), Op::Mean(a), ng)
    }

    /// Mean squared difference between two same-shape nodes.
    pub fn mse(&mut self, a: VarId, b: VarId) -> VarId {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean(sq)
    }

    /// Backpropagates from a scalar `loss` node and returns all gradients.
    pub fn backward(&mut self, loss: VarId) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward requires a scalar loss"
        );
        let mut grads: Vec<Option<ArrayD<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(ArrayD::from_elem(self.nodes[loss.0].value.raw_dim(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].clone() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<ArrayD<f64>>], id: VarId, delta: ArrayD<f64>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(to_standard(delta)),
        }
    }

    fn propagate(&self, i: usize, g: &ArrayD<f64>, grads: &mut [Option<ArrayD<f64>>]) {
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    self.acc(grads, a, g * &self.nodes[b.0].value);
                }
                if self.needs(b) {
                    self.acc(grads, b, g * &self.nodes[a.0].value);
                }
            }
            Op::Neg(a) => self.acc(grads, a, g.mapv(|x| -x)),
            Op::Scale(a, c) => self.acc(grads, a, g.mapv(|x| c * x)),
            Op::AddScalar(a) => self.acc(grads, a, g.clone()),
            Op::Abs(a) => {
                let sign = self.nodes[a.0].value.mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                self.acc(grads, a, g * &sign);
            }
            Op::LeakyRelu(a, leak) => {
                let mask = self.nodes[a.0]
                    .value
                    .mapv(|x| if x > 0.0 { 1.0 } else { leak });
                self.acc(grads, a, g * &mask);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                self.acc(grads, a, g * &y.mapv(|t| 1.0 - t * t));
            }
            Op::Exp(a) => {
                let y = &self.nodes[i].value;
                self.acc(grads, a, g * y);
            }
            Op::MatMul(a, b) => {
                let gm = as2(g);
                if self.needs(a) {
                    let bv = as2(&self.nodes[b.0].value);
                    self.acc(grads, a, gm.dot(&bv.t()).into_dyn());
                }
                if self.needs(b) {
                    let av = as2(&self.nodes[a.0].value);
                    self.acc(grads, b, av.t().dot(&gm).into_dyn());
                }
            }
            Op::Transpose(a) => {
                let gm = as2(g);
                self.acc(grads, a, gm.t().to_owned().into_dyn());
            }
            Op::Reshape(a) => {
                let orig = self.nodes[a.0].value.raw_dim();
                self.acc(
                    grads,
                    a,
                    g.clone().into_shape_with_order(orig).unwrap(),
                );
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xv = as3(&self.nodes[x.0].value);
                let wv = &self.nodes[w.0].value;
                let wsh = wv.shape();
                let (cout, cin, k) = (wsh[0], wsh[1], wsh[2]);
                let gsh = g.shape();
                let (ho, wo) = (gsh[1], gsh[2]);
                let gm = g
                    .view()
                    .into_shape_with_order((cout, ho * wo))
                    .unwrap()
                    .to_owned();
                if let Some(bid) = b {
                    if self.needs(bid) {
                        let db = gm.sum_axis(ndarray::Axis(1));
                        self.acc(grads, bid, db.into_dyn());
                    }
                }
                if self.needs(w) {
                    let cols = im2col(&xv, k, stride, pad);
                    let dw = gm.dot(&cols.t());
                    self.acc(
                        grads,
                        w,
                        dw.into_shape_with_order(IxDyn(&[cout, cin, k, k])).unwrap(),
                    );
                }
                if self.needs(x) {
                    let wm = wv
                        .view()
                        .into_shape_with_order((cout, cin * k * k))
                        .unwrap()
                        .to_owned();
                    let dcols = wm.t().dot(&gm);
                    let dx = col2im(&dcols, xv.dim(), k, stride, pad);
                    self.acc(grads, x, dx.into_dyn());
                }
            }
            Op::Upsample2x(a) => {
                let gv = as3(g);
                let (c, h2, w2) = gv.dim();
                let (h, w) = (h2 / 2, w2 / 2);
                let mut dx = Array3::<f64>::zeros((c, h, w));
                for ci in 0..c {
                    for hi in 0..h {
                        for wi in 0..w {
                            dx[(ci, hi, wi)] = gv[(ci, 2 * hi, 2 * wi)]
                                + gv[(ci, 2 * hi + 1, 2 * wi)]
                                + gv[(ci, 2 * hi, 2 * wi + 1)]
                                + gv[(ci, 2 * hi + 1, 2 * wi + 1)];
                        }
                    }
                }
                self.acc(grads, a, dx.into_dyn());
            }
            Op::MeanSpatial(a) => {
                let xv = as3(&self.nodes[a.0].value);
                let (c, h, w) = xv.dim();
                let gv = as1(g);
                let mut dx = Array3::<f64>::zeros((c, h, w));
                for ci in 0..c {
                    let val = gv[ci] / (h * w) as f64;
                    dx.index_axis_mut(ndarray::Axis(0), ci).fill(val);
                }
                self.acc(grads, a, dx.into_dyn());
            }
            Op::MulChannel(x, s) => {
                let gv = as3(g);
                if self.needs(x) {
                    let sv = as1(&self.nodes[s.0].value);
                    let mut dx = gv.to_owned();
                    for (ci, mut plane) in dx.outer_iter_mut().enumerate() {
                        plane *= sv[ci];
                    }
                    self.acc(grads, x, dx.into_dyn());
                }
                if self.needs(s) {
                    let xv = as3(&self.nodes[x.0].value);
                    let c = xv.dim().0;
                    let mut ds = Array1::<f64>::zeros(c);
                    for ci in 0..c {
                        ds[ci] = (&gv.index_axis(ndarray::Axis(0), ci)
                            * &xv.index_axis(ndarray::Axis(0), ci))
                            .sum();
                    }
                    self.acc(grads, s, ds.into_dyn());
                }
            }
            Op::AddChannel(x, b) => {
                let gv = as3(g);
                if self.needs(x) {
                    self.acc(grads, x, g.clone());
                }
                if self.needs(b) {
                    let c = gv.dim().0;
                    let mut db = Array1::<f64>::zeros(c);
                    for ci in 0..c {
                        db[ci] = gv.index_axis(ndarray::Axis(0), ci).sum();
                    }
                    self.acc(grads, b, db.into_dyn());
                }
            }
            Op::ChannelUnitNorm(a, eps) => {
                let xv = as3(&self.nodes[a.0].value);
                let gv = as3(g);
                let (c, h, w) = xv.dim();
                let mut dx = Array3::<f64>::zeros((c, h, w));
                for hi in 0..h {
                    for wi in 0..w {
                        let mut sq = 0.0;
                        let mut xg = 0.0;
                        for ci in 0..c {
                            sq += xv[(ci, hi, wi)] * xv[(ci, hi, wi)];
                            xg += xv[(ci, hi, wi)] * gv[(ci, hi, wi)];
                        }
                        let n = (sq + eps).sqrt();
                        let n3 = n * n * n;
                        for ci in 0..c {
                            dx[(ci, hi, wi)] =
                                gv[(ci, hi, wi)] / n - xv[(ci, hi, wi)] * xg / n3;
                        }
                    }
                }
                self.acc(grads, a, dx.into_dyn());
            }
            Op::Softmax(a) => {
                let y = as1(&self.nodes[i].value);
                let gv = as1(g);
                let dot: f64 = y.iter().zip(gv.iter()).map(|(yi, gi)| yi * gi).sum();
                let dx = Array1::from_iter(
                    y.iter().zip(gv.iter()).map(|(yi, gi)| yi * (gi - dot)),
                );
                self.acc(grads, a, dx.into_dyn());
            }
            Op::SliceChannels(a, from, _to) => {
                let full = self.nodes[a.0].value.raw_dim();
                let gv = as3(g);
                let mut dx = ArrayD::<f64>::zeros(full);
                {
                    let mut dxv = dx
                        .view_mut()
                        .into_dimensionality::<Ix3>()
                        .unwrap();
                    let cs = gv.dim().0;
                    for ci in 0..cs {
                        dxv.index_axis_mut(ndarray::Axis(0), from + ci)
                            .assign(&gv.index_axis(ndarray::Axis(0), ci));
                    }
                }
                self.acc(grads, a, dx);
            }
            Op::Sum(a) => {
                let gs = g.iter().next().copied().unwrap();
                let shape = self.nodes[a.0].value.raw_dim();
                self.acc(grads, a, ArrayD::from_elem(shape, gs));
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                let gs = g.iter().next().copied().unwrap() / n;
                let shape = self.nodes[a.0].value.raw_dim();
                self.acc(grads, a, ArrayD::from_elem(shape, gs));
            }
        }
    }
}

fn as1(v: &ArrayD<f64>) -> ndarray::Array1<f64> {
    v.view()
        .into_dimensionality::<Ix1>()
        .expect("expected 1-D tensor")
        .to_owned()
}

fn as2(v: &ArrayD<f64>) -> Array2<f64> {
    v.view()
        .into_dimensionality::<Ix2>()
        .expect("expected 2-D tensor")
        .to_owned()
}

fn as3(v: &ArrayD<f64>) -> Array3<f64> {
    v.view()
        .into_dimensionality::<Ix3>()
        .expect("expected 3-D tensor")
        .to_owned()
}

fn im2col(x: &Array3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut cols = Array2::<f64>::zeros((c * k * k, ho * wo));
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                for oh in 0..ho {
                    let ih = (oh * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kw) as isize - pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        cols[(row, oh * wo + ow)] = x[(ci, ih as usize, iw as usize)];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    xdim: (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let (c, h, w) = xdim;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut dx = Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                for oh in 0..ho {
                    let ih = (oh * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kw) as isize - pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        dx[(ci, ih as usize, iw as usize)] += dcols[(row, oh * wo + ow)];
                    }
                }
            }
        }
    }
    dx
}
