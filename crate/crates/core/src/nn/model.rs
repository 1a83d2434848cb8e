use super::layers::{conv_backward_cols, conv_forward_cols, im2col, maxpool_slice, pool_extent, sigmoid, ConvGeom};
use super::loss::bce_accumulate;
use super::{NnError, Scalar};
use crate::seed;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape3 { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat(n: usize) -> Self {
        Shape3 { c: n, h: 1, w: 1 }
    }
}

/// Border handling of every convolution in a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    Valid,
    /// Zero padding of `(k - 1) / 2` on each side; odd kernels only.
    Same,
}

impl Padding {
    fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize, activation: Activation },
    MaxPool { window: usize, stride: usize },
    Flatten,
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    fn trainable(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CnnArchitecture {
    pub input: Shape3,
    pub padding: Padding,
    pub layers: Vec<LayerSpec>,
}

impl CnnArchitecture {
    /// The word classifier: 1x50x100 input, conv 32/32/24 with pools
    /// (3,2), (2,2), (1,1), dense 150, sigmoid output.
    pub fn word_classifier(n_classes: usize) -> Self {
        Self::stack(Shape3::new(1, 50, 100), [32, 32, 24], 150, n_classes, Padding::Valid)
    }

    /// The word-classifier layer sequence with other sizes.
    pub fn stack(input: Shape3, maps: [usize; 3], dense: usize, n_classes: usize, padding: Padding) -> Self {
        let conv = |filters| LayerSpec::Conv { filters, kernel: 3, activation: Activation::Relu };
        CnnArchitecture {
            input,
            padding,
            layers: vec![
                conv(maps[0]),
                LayerSpec::MaxPool { window: 3, stride: 2 },
                conv(maps[1]),
                LayerSpec::MaxPool { window: 2, stride: 2 },
                conv(maps[2]),
                LayerSpec::MaxPool { window: 1, stride: 1 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: dense, activation: Activation::Relu },
                LayerSpec::Dense { units: n_classes, activation: Activation::Sigmoid },
            ],
        }
    }

    pub fn n_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Output shape of every layer, in order.
    pub fn output_shapes(&self) -> Result<Vec<Shape3>, NnError> {
        if self.input.is_empty() {
            return Err(NnError::InvalidConfig("empty input shape".into()));
        }
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cur = match *layer {
                LayerSpec::Conv { filters, kernel, .. } => {
                    if filters == 0 || kernel == 0 || (self.padding == Padding::Same && kernel % 2 == 0) {
                        return Err(NnError::InvalidConfig(format!("conv {filters}x{kernel}x{kernel}")));
                    }
                    let g = ConvGeom { c: cur.c, h: cur.h, w: cur.w, filters, k: kernel, pad: self.padding.amount(kernel) };
                    g.validate()?;
                    let (h, w) = g.out_hw();
                    Shape3::new(filters, h, w)
                }
                LayerSpec::MaxPool { window, stride } => {
                    if stride == 0 {
                        return Err(NnError::InvalidConfig("pool stride 0".into()));
                    }
                    let h = pool_extent(cur.h, window, stride).ok_or(NnError::WindowTooLarge { window, extent: cur.h })?;
                    let w = pool_extent(cur.w, window, stride).ok_or(NnError::WindowTooLarge { window, extent: cur.w })?;
                    Shape3::new(cur.c, h, w)
                }
                LayerSpec::Flatten => Shape3::flat(cur.len()),
                LayerSpec::Dense { units, .. } => {
                    if cur.h != 1 || cur.w != 1 {
                        return Err(NnError::InvalidConfig("dense layer before flatten".into()));
                    }
                    if units == 0 {
                        return Err(NnError::InvalidConfig("dense layer with 0 units".into()));
                    }
                    Shape3::flat(units)
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.output_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense { units, activation: Activation::Sigmoid }) if *units >= 2 => Ok(()),
            _ => Err(NnError::InvalidConfig("network must end in a sigmoid dense layer with >= 2 units".into())),
        }
    }

    /// Length of the vector produced by the flatten layer.
    pub fn flatten_width(&self) -> Result<usize, NnError> {
        let shapes = self.output_shapes()?;
        self.layers
            .iter()
            .position(|l| *l == LayerSpec::Flatten)
            .map(|i| shapes[i].c)
            .ok_or_else(|| NnError::InvalidConfig("no flatten layer".into()))
    }

    /// `(weights, biases)` lengths of every trainable layer, in order.
    pub fn param_shapes(&self) -> Result<Vec<(usize, usize)>, NnError> {
        let shapes = self.output_shapes()?;
        let mut prev = self.input;
        let mut out = Vec::new();
        for (layer, &shape) in self.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv { filters, kernel, .. } => out.push((filters * prev.c * kernel * kernel, filters)),
                LayerSpec::Dense { units, .. } => out.push((units * prev.len(), units)),
                _ => {}
            }
            prev = shape;
        }
        Ok(out)
    }
}

/// Architecture plus parameters. Parameter buffers alternate weights and
/// biases of each trainable layer: conv weights are `F x C x k x k`, dense
/// weights `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    arch: CnnArchitecture,
    shapes: Vec<Shape3>,
    params: Vec<Vec<T>>,
}

/// Instantiate `arch` with He-uniform weights for relu layers,
/// Glorot-uniform weights for sigmoid layers, and zero biases.
pub fn build_model<T: Scalar>(arch: &CnnArchitecture, seed: u64) -> Result<CnnModel<T>, NnError> {
    arch.validate()?;
    let shapes = arch.output_shapes()?;
    let mut params = Vec::new();
    let mut prev = arch.input;
    let mut trainable = 0u64;
    for (layer, &shape) in arch.layers.iter().zip(&shapes) {
        let (n_w, n_b, fan_in, fan_out, act) = match *layer {
            LayerSpec::Conv { filters, kernel, activation } => {
                let k2 = kernel * kernel;
                (filters * prev.c * k2, filters, prev.c * k2, filters * k2, activation)
            }
            LayerSpec::Dense { units, activation } => (units * prev.len(), units, prev.len(), units, activation),
            _ => {
                prev = shape;
                continue;
            }
        };
        let limit = match act {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            Activation::Sigmoid => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        let mut rng = seed::rng(&crate::seed_key!(seed, "init", trainable));
        params.push((0..n_w).map(|_| T::from_f64(rng.random_range(-limit..=limit))).collect());
        params.push(vec![T::zero(); n_b]);
        trainable += 1;
        prev = shape;
    }
    Ok(CnnModel { arch: arch.clone(), shapes, params })
}

/// Activations and cached intermediates of one batched forward pass.
#[derive(Debug, Default)]
pub(super) struct Trace<T> {
    batch: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<T>>,
    cols: Vec<T>,
    argmax: Vec<Vec<usize>>,
    scratch: Vec<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn activate<T: Scalar>(act: Activation, x: &mut [T]) {
    match act {
        Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Sigmoid => x.iter_mut().for_each(|v| *v = sigmoid(*v)),
    }
}

/// Turn a gradient w.r.t. an activation's output into one w.r.t. its input.
fn deactivate<T: Scalar>(act: Activation, out: &[T], grad: &mut [T]) {
    match act {
        Activation::Relu => grad
            .iter_mut()
            .zip(out)
            .for_each(|(g, &o)| *g = if o > T::zero() { *g } else { T::zero() }),
        Activation::Sigmoid => grad.iter_mut().zip(out).for_each(|(g, &y)| *g *= y * (T::one() - y)),
    }
}

impl<T: Scalar> CnnModel<T> {
    /// Wrap existing parameters, checking their lengths against `arch`.
    pub fn from_params(arch: CnnArchitecture, params: Vec<Vec<T>>) -> Result<Self, NnError> {
        arch.validate()?;
        let expect = arch.param_shapes()?;
        let ok = params.len() == 2 * expect.len()
            && expect.iter().enumerate().all(|(i, &(w, b))| params[2 * i].len() == w && params[2 * i + 1].len() == b);
        if !ok {
            return Err(NnError::Shape("parameter buffers do not match the architecture".into()));
        }
        let shapes = arch.output_shapes()?;
        Ok(CnnModel { arch, shapes, params })
    }

    pub fn architecture(&self) -> &CnnArchitecture {
        &self.arch
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input.len()
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    /// Weight count of the output layer.
    pub fn final_weight_count(&self) -> usize {
        self.params[self.params.len() - 2].len()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    fn in_shape(&self, layer: usize) -> Shape3 {
        if layer == 0 {
            self.arch.input
        } else {
            self.shapes[layer - 1]
        }
    }

    fn conv_geom(&self, layer: usize) -> ConvGeom {
        let s = self.in_shape(layer);
        match self.arch.layers[layer] {
            LayerSpec::Conv { filters, kernel, .. } => ConvGeom {
                c: s.c,
                h: s.h,
                w: s.w,
                filters,
                k: kernel,
                pad: self.arch.padding.amount(kernel),
            },
            _ => unreachable!("not a conv layer"),
        }
    }

    /// Forward `batch` samples stored back to back in `input`.
    pub(super) fn forward_into(&self, input: &[T], batch: usize, trace: &mut Trace<T>) -> Result<(), NnError> {
        if batch == 0 || input.len() != batch * self.input_len() {
            return Err(NnError::Shape(format!(
                "input of length {} is not {batch} samples of {}",
                input.len(),
                self.input_len()
            )));
        }
        let n_layers = self.arch.layers.len();
        trace.batch = batch;
        trace.acts.resize_with(n_layers + 1, Vec::new);
        trace.argmax.resize_with(n_layers, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);

        let mut p = 0;
        for (li, layer) in self.arch.layers.iter().enumerate() {
            let in_s = self.in_shape(li);
            let out_s = self.shapes[li];
            let (head, tail) = trace.acts.split_at_mut(li + 1);
            let x = &head[li];
            let y = &mut tail[0];
            // every layer below writes all of `y`
            y.resize(batch * out_s.len(), T::zero());
            match *layer {
                LayerSpec::Conv { activation, .. } => {
                    let g = self.conv_geom(li);
                    let plane = out_s.h * out_s.w;
                    let per = g.patch_len() * plane;
                    let cols = &mut trace.cols;
                    cols.resize(per, T::zero());
                    for b in 0..batch {
                        let xb = &x[b * in_s.len()..(b + 1) * in_s.len()];
                        im2col(xb, g.c, g.h, g.w, g.k, g.pad, cols);
                        conv_forward_cols(&g, cols, &self.params[p], &self.params[p + 1], &mut y[b * out_s.len()..(b + 1) * out_s.len()]);
                    }
                    activate(activation, y);
                    p += 2;
                }
                LayerSpec::MaxPool { window, stride } => {
                    let am = &mut trace.argmax[li];
                    am.resize(batch * out_s.len(), 0);
                    for b in 0..batch {
                        maxpool_slice(
                            &x[b * in_s.len()..(b + 1) * in_s.len()],
                            in_s.c,
                            in_s.h,
                            in_s.w,
                            window,
                            stride,
                            &mut y[b * out_s.len()..(b + 1) * out_s.len()],
                            &mut am[b * out_s.len()..(b + 1) * out_s.len()],
                        );
                    }
                }
                LayerSpec::Flatten => y.copy_from_slice(x),
                LayerSpec::Dense { units, activation } => {
                    let n_in = in_s.len();
                    for row in y.chunks_exact_mut(units) {
                        row.copy_from_slice(&self.params[p + 1]);
                    }
                    T::gemm(batch, n_in, units, T::one(), x, false, &self.params[p], true, T::one(), y);
                    activate(activation, y);
                    p += 2;
                }
            }
        }
        Ok(())
    }

    /// Back-propagate `grad` (w.r.t. the network output, overwritten) and add
    /// parameter gradients into `grads`.
    pub(super) fn backward_into(&self, trace: &mut Trace<T>, mut grad: Vec<T>, grads: &mut [Vec<T>]) {
        let batch = trace.batch;
        let mut p = self.params.len();
        let mut next = Vec::new();
        for li in (0..self.arch.layers.len()).rev() {
            let in_s = self.in_shape(li);
            let out_s = self.shapes[li];
            let need_input_grad = li > 0 && self.arch.layers[..li].iter().any(LayerSpec::trainable);
            match self.arch.layers[li] {
                LayerSpec::Conv { activation, .. } => {
                    p -= 2;
                    deactivate(activation, &trace.acts[li + 1], &mut grad);
                    let g = self.conv_geom(li);
                    let per = g.patch_len() * out_s.h * out_s.w;
                    if need_input_grad {
                        next.resize(batch * in_s.len(), T::zero());
                    }
                    trace.cols.resize(per, T::zero());
                    let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                    for b in 0..batch {
                        let xb = &trace.acts[li][b * in_s.len()..(b + 1) * in_s.len()];
                        im2col(xb, g.c, g.h, g.w, g.k, g.pad, &mut trace.cols);
                        let gi = if need_input_grad { Some(&mut next[b * in_s.len()..(b + 1) * in_s.len()]) } else { None };
                        conv_backward_cols(
                            &g,
                            &trace.cols,
                            &self.params[p],
                            &grad[b * out_s.len()..(b + 1) * out_s.len()],
                            &mut gw[0],
                            &mut gb[0],
                            gi,
                            &mut trace.scratch,
                        );
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    next.clear();
                    next.resize(batch * in_s.len(), T::zero());
                    for b in 0..batch {
                        let dst = &mut next[b * in_s.len()..(b + 1) * in_s.len()];
                        let r = b * out_s.len()..(b + 1) * out_s.len();
                        for (&i, &g) in trace.argmax[li][r.clone()].iter().zip(&grad[r]) {
                            dst[i] += g;
                        }
                    }
                }
                LayerSpec::Flatten => {
                    next.clear();
                    next.extend_from_slice(&grad);
                }
                LayerSpec::Dense { units, activation } => {
                    p -= 2;
                    deactivate(activation, &trace.acts[li + 1], &mut grad);
                    let n_in = in_s.len();
                    let x = &trace.acts[li];
                    T::gemm(units, batch, n_in, T::one(), &grad, true, x, false, T::one(), &mut grads[p]);
                    for row in grad.chunks_exact(units) {
                        for (gb, &g) in grads[p + 1].iter_mut().zip(row) {
                            *gb += g;
                        }
                    }
                    if need_input_grad {
                        next.resize(batch * n_in, T::zero());
                        T::gemm(batch, units, n_in, T::one(), &grad, false, &self.params[p], false, T::zero(), &mut next);
                    }
                }
            }
            if !need_input_grad {
                break;
            }
            std::mem::swap(&mut grad, &mut next);
        }
    }

    /// Mean batch loss and its parameter gradients for samples stored back to
    /// back in `inputs` with class indices `targets`.
    pub fn loss_and_grads(&self, inputs: &[T], targets: &[usize]) -> Result<(T, Vec<Vec<T>>), NnError> {
        let mut trace = Trace::default();
        let mut grads = self.zero_grads();
        let loss = self.accumulate_batch(inputs, targets, &mut trace, &mut grads)?;
        Ok((loss, grads))
    }

    /// Like [`CnnModel::loss_and_grads`] but reusing `trace` and adding into `grads`.
    pub(super) fn accumulate_batch(
        &self,
        inputs: &[T],
        targets: &[usize],
        trace: &mut Trace<T>,
        grads: &mut [Vec<T>],
    ) -> Result<T, NnError> {
        let n = self.n_classes();
        if targets.iter().any(|&t| t >= n) {
            return Err(NnError::NotOneHot);
        }
        self.forward_into(inputs, targets.len(), trace)?;
        let out = trace.output();
        let scale = T::one() / T::from_f64(targets.len() as f64);
        let mut grad = vec![T::zero(); out.len()];
        let mut total = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            total += bce_accumulate(&out[i * n..(i + 1) * n], t, scale, &mut grad[i * n..(i + 1) * n]);
        }
        self.backward_into(trace, grad, grads);
        Ok(total * scale)
    }

    /// Mean loss without gradients.
    pub fn loss(&self, inputs: &[T], targets: &[usize]) -> Result<T, NnError> {
        let n = self.n_classes();
        if targets.iter().any(|&t| t >= n) {
            return Err(NnError::NotOneHot);
        }
        let mut trace = Trace::default();
        self.forward_into(inputs, targets.len(), &mut trace)?;
        let out = trace.output();
        let mut sink = vec![T::zero(); n];
        let mut total = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            total += bce_accumulate(&out[i * n..(i + 1) * n], t, T::zero(), &mut sink);
        }
        Ok(total / T::from_f64(targets.len() as f64))
    }

    /// Sigmoid scores for each of `batch` samples, row-major.
    pub fn scores_batch(&self, inputs: &[T], batch: usize) -> Result<Vec<T>, NnError> {
        let mut trace = Trace::default();
        self.forward_into(inputs, batch, &mut trace)?;
        Ok(trace.acts.pop().unwrap_or_default())
    }

    pub fn scores(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        self.scores_batch(input, 1)
    }
}
