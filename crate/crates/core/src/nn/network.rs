use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{ParameterSet, Tensor};
use super::spec::{GridShape, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
struct ConvOp {
    input: GridShape,
    output: GridShape,
    kernel: usize,
    stride: usize,
    weight: usize,
    bias: usize,
}

impl ConvOp {
    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.input.channels
    }
}

#[derive(Debug, Clone)]
struct DenseOp {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Conv(ConvOp),
    Dense(DenseOp),
    Relu,
    Tanh,
    Affine { scale: Array1<f64>, shift: Array1<f64> },
}

#[derive(Debug, Clone)]
struct Stage {
    name: &'static str,
    ops: Vec<Op>,
    outputs: usize,
}

/// What a forward pass keeps for the backward pass, per op.
#[derive(Debug, Clone)]
enum Saved {
    Patches(Array2<f64>),
    Input(Array2<f64>),
    Output(Array2<f64>),
    Nothing,
}

/// Activations recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Cache {
    network: u64,
    stamp: u64,
    batch: usize,
    trunk: Vec<Saved>,
    branch: Vec<Saved>,
    head: Vec<Saved>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub observation: bool,
}

impl GradRequest {
    pub const PARAMS: GradRequest = GradRequest {
        params: true,
        observation: false,
    };
    pub const ALL: GradRequest = GradRequest {
        params: true,
        observation: true,
    };
    /// Only the action-input gradient of a critic.
    pub const ACTION_ONLY: GradRequest = GradRequest {
        params: false,
        observation: false,
    };
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Option<ParameterSet>,
    pub observation: Option<Array2<f64>>,
    /// Present for critics.
    pub action: Option<Array2<f64>>,
}

/// A validated [`NetworkSpec`] with resolved shapes and parameter slots.
#[derive(Debug, Clone)]
pub struct Network {
    id: u64,
    spec: NetworkSpec,
    trunk: Stage,
    branch: Option<Stage>,
    head: Stage,
    action_dim: usize,
    layout: Vec<(String, Vec<usize>, usize)>,
}

#[derive(Clone, Copy)]
enum Shape {
    Grid(GridShape),
    Flat(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Grid(g) => g.len(),
            Shape::Flat(n) => n,
        }
    }
}

fn compile_stage(
    name: &'static str,
    layers: &[LayerSpec],
    input: Shape,
    layout: &mut Vec<(String, Vec<usize>, usize)>,
) -> Result<(Stage, Shape)> {
    let mut shape = input;
    let mut ops = Vec::with_capacity(layers.len());
    for (k, layer) in layers.iter().enumerate() {
        let loc = || format!("{name} layer {k}");
        let op = match layer {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                let Shape::Grid(g) = shape else {
                    return Err(Error::shape(loc(), "grid input for convolution", "flat input"));
                };
                if g.height < *kernel || g.width < *kernel {
                    return Err(Error::shape(
                        loc(),
                        format!("grid at least {kernel}×{kernel}"),
                        format!("{}×{}", g.height, g.width),
                    ));
                }
                let output = GridShape {
                    height: (g.height - kernel) / stride + 1,
                    width: (g.width - kernel) / stride + 1,
                    channels: *filters,
                };
                let fan_in = kernel * kernel * g.channels;
                let weight = layout.len();
                layout.push((
                    format!("{name}.{k}.kernel"),
                    vec![*filters, *kernel, *kernel, g.channels],
                    fan_in,
                ));
                layout.push((format!("{name}.{k}.bias"), vec![*filters], fan_in));
                shape = Shape::Grid(output);
                Op::Conv(ConvOp {
                    input: g,
                    output,
                    kernel: *kernel,
                    stride: *stride,
                    weight,
                    bias: weight + 1,
                })
            }
            LayerSpec::Dense { width } => {
                let inputs = shape.len();
                let weight = layout.len();
                layout.push((format!("{name}.{k}.weight"), vec![inputs, *width], inputs));
                layout.push((format!("{name}.{k}.bias"), vec![*width], inputs));
                shape = Shape::Flat(*width);
                Op::Dense(DenseOp {
                    inputs,
                    outputs: *width,
                    weight,
                    bias: weight + 1,
                })
            }
            LayerSpec::Relu => Op::Relu,
            LayerSpec::Tanh => Op::Tanh,
            LayerSpec::Affine { scale, shift } => {
                if scale.len() != shape.len() {
                    return Err(Error::shape(loc(), scale.len(), shape.len()));
                }
                Op::Affine {
                    scale: Array1::from(scale.clone()),
                    shift: Array1::from(shift.clone()),
                }
            }
        };
        ops.push(op);
    }
    Ok((
        Stage {
            name,
            ops,
            outputs: shape.len(),
        },
        shape,
    ))
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.check_scalars()?;
        let mut layout = Vec::new();
        let (trunk, trunk_shape) =
            compile_stage("trunk", &spec.trunk, Shape::Grid(spec.input), &mut layout)?;
        let (branch, action_dim) = match &spec.action_branch {
            Some(b) => {
                let (stage, shape) =
                    compile_stage("action", &b.layers, Shape::Flat(b.action_dim), &mut layout)?;
                if shape.len() != trunk_shape.len() {
                    return Err(Error::shape(
                        "action path output",
                        trunk_shape.len(),
                        shape.len(),
                    ));
                }
                (Some(stage), b.action_dim)
            }
            None => (None, 0),
        };
        let (mut head, head_shape) =
            compile_stage("head", &spec.head, Shape::Flat(trunk_shape.len()), &mut layout)?;
        if let Some(scaling) = &spec.output_scaling {
            if branch.is_some() {
                return Err(Error::InvalidConfig(
                    "output scaling applies to actor networks only".into(),
                ));
            }
            if scaling.bias.len() != head_shape.len() || scaling.bound.len() != head_shape.len() {
                return Err(Error::shape(
                    "output scaling",
                    head_shape.len(),
                    scaling.bias.len(),
                ));
            }
            head.ops.push(Op::Affine {
                scale: Array1::from(scaling.bound.clone()),
                shift: Array1::from(scaling.bias.clone()),
            });
        }
        Ok(Network {
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            spec,
            trunk,
            branch,
            head,
            action_dim,
            layout,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn output_len(&self) -> usize {
        self.head.outputs
    }

    /// Uniform `±1/√fan_in` initialization of every weight and bias.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterSet {
        let tensors = self
            .layout
            .iter()
            .map(|(name, shape, fan_in)| {
                let bound = 1.0 / (*fan_in as f64).sqrt();
                let len = shape.iter().product();
                Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    data: (0..len).map(|_| rng.random_range(-bound..bound)).collect(),
                }
            })
            .collect();
        ParameterSet::new(tensors)
    }

    pub fn zero_params(&self) -> ParameterSet {
        ParameterSet::new(
            self.layout
                .iter()
                .map(|(name, shape, _)| Tensor::zeros(name.clone(), shape.clone()))
                .collect(),
        )
    }

    fn check_params(&self, params: &ParameterSet) -> Result<()> {
        if params.tensors().len() != self.layout.len() {
            return Err(Error::shape(
                "parameter set",
                format!("{} tensors", self.layout.len()),
                format!("{} tensors", params.tensors().len()),
            ));
        }
        for (t, (name, shape, _)) in params.tensors().iter().zip(&self.layout) {
            if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(name.clone(), format!("{shape:?}"), format!("{:?}", t.shape)));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, obs: &ArrayView2<f64>, action: Option<&ArrayView2<f64>>) -> Result<()> {
        if obs.ncols() != self.input_len() {
            return Err(Error::shape("trunk layer 0 input", self.input_len(), obs.ncols()));
        }
        match (self.branch.is_some(), action) {
            (true, Some(a)) => {
                if a.ncols() != self.action_dim {
                    return Err(Error::shape("action layer 0 input", self.action_dim, a.ncols()));
                }
                if a.nrows() != obs.nrows() {
                    return Err(Error::shape("action batch", obs.nrows(), a.nrows()));
                }
            }
            (true, None) => return Err(Error::shape("action input", "an action batch", "none")),
            (false, Some(_)) => return Err(Error::shape("action input", "none", "an action batch")),
            (false, None) => {}
        }
        Ok(())
    }

    /// Batched forward pass that records activations for [`Network::backward`].
    pub fn forward(
        &self,
        params: &ParameterSet,
        obs: ArrayView2<f64>,
        action: Option<ArrayView2<f64>>,
    ) -> Result<(Array2<f64>, Cache)> {
        self.check_params(params)?;
        self.check_inputs(&obs, action.as_ref())?;
        let mut cache = Cache {
            network: self.id,
            stamp: params.stamp(),
            batch: obs.nrows(),
            trunk: Vec::new(),
            branch: Vec::new(),
            head: Vec::new(),
        };
        let out = self.run(params, obs, action, Some(&mut cache));
        Ok((out, cache))
    }

    /// Forward pass without keeping activations.
    pub fn predict(
        &self,
        params: &ParameterSet,
        obs: ArrayView2<f64>,
        action: Option<ArrayView2<f64>>,
    ) -> Result<Array2<f64>> {
        self.check_params(params)?;
        self.check_inputs(&obs, action.as_ref())?;
        Ok(self.run(params, obs, action, None))
    }

    fn run(
        &self,
        params: &ParameterSet,
        obs: ArrayView2<f64>,
        action: Option<ArrayView2<f64>>,
        mut cache: Option<&mut Cache>,
    ) -> Array2<f64> {
        let mut z = run_stage(
            &self.trunk,
            params,
            obs.as_standard_layout().into_owned(),
            cache.as_deref_mut().map(|c| &mut c.trunk),
        );
        if let (Some(branch), Some(a)) = (&self.branch, action) {
            let h = run_stage(
                branch,
                params,
                a.as_standard_layout().into_owned(),
                cache.as_deref_mut().map(|c| &mut c.branch),
            );
            z += &h;
        }
        run_stage(&self.head, params, z, cache.map(|c| &mut c.head))
    }

    /// Exact gradients of a scalar objective whose derivative with respect
    /// to this network's output is `grad_out`.
    pub fn backward(
        &self,
        params: &ParameterSet,
        cache: &Cache,
        grad_out: ArrayView2<f64>,
        request: GradRequest,
    ) -> Result<Gradients> {
        if cache.network != self.id || cache.stamp != params.stamp() {
            return Err(Error::StaleCache);
        }
        if grad_out.nrows() != cache.batch || grad_out.ncols() != self.output_len() {
            return Err(Error::shape(
                "output gradient",
                format!("{}×{}", cache.batch, self.output_len()),
                format!("{}×{}", grad_out.nrows(), grad_out.ncols()),
            ));
        }
        let mut grads = request.params.then(|| self.zero_params());
        let need_trunk = request.params || request.observation;
        let need_head_input = need_trunk || self.branch.is_some();

        let dz = backprop_stage(
            &self.head,
            params,
            &cache.head,
            grad_out.to_owned(),
            grads.as_mut(),
            need_head_input,
        );
        let mut action = None;
        if let Some(branch) = &self.branch {
            let dz = dz.clone().expect("head input gradient requested");
            action = backprop_stage(branch, params, &cache.branch, dz, grads.as_mut(), true);
        }
        let observation = if need_trunk {
            let dz = dz.expect("head input gradient requested");
            backprop_stage(
                &self.trunk,
                params,
                &cache.trunk,
                dz,
                grads.as_mut(),
                request.observation,
            )
        } else {
            None
        };
        Ok(Gradients {
            params: grads,
            observation,
            action,
        })
    }
}

fn dense_weight<'a>(params: &'a ParameterSet, op: &DenseOp) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((op.inputs, op.outputs), &params.tensor(op.weight).data)
        .expect("dense weight shape checked at construction")
}

fn conv_kernel<'a>(params: &'a ParameterSet, op: &ConvOp) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((op.output.channels, op.patch_len()), &params.tensor(op.weight).data)
        .expect("conv kernel shape checked at construction")
}

fn bias<'a>(params: &'a ParameterSet, idx: usize) -> ndarray::ArrayView1<'a, f64> {
    ndarray::ArrayView1::from(&params.tensor(idx).data[..])
}

/// Unrolls every receptive field into one row: `(batch·H'·W') × (k·k·C)`.
fn im2col(x: &Array2<f64>, op: &ConvOp) -> Array2<f64> {
    let batch = x.nrows();
    let GridShape {
        height: _,
        width: w,
        channels: c,
    } = op.input;
    let (ho, wo, k, s) = (op.output.height, op.output.width, op.kernel, op.stride);
    let patch = op.patch_len();
    let span = k * c;
    let mut cols = Array2::<f64>::zeros((batch * ho * wo, patch));
    let src = x.as_slice().expect("activations are contiguous");
    let dst = cols.as_slice_mut().expect("fresh array is contiguous");
    let image_len = op.input.len();
    for b in 0..batch {
        let img = &src[b * image_len..(b + 1) * image_len];
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * patch;
                for ky in 0..k {
                    let from = ((oy * s + ky) * w + ox * s) * c;
                    dst[row + ky * span..row + (ky + 1) * span]
                        .copy_from_slice(&img[from..from + span]);
                }
            }
        }
    }
    cols
}

/// Scatter-adds patch gradients back onto the input grid.
fn col2im(dcols: &Array2<f64>, op: &ConvOp, batch: usize) -> Array2<f64> {
    let GridShape {
        height: _,
        width: w,
        channels: c,
    } = op.input;
    let (ho, wo, k, s) = (op.output.height, op.output.width, op.kernel, op.stride);
    let patch = op.patch_len();
    let span = k * c;
    let image_len = op.input.len();
    let mut dx = Array2::<f64>::zeros((batch, image_len));
    let src = dcols.as_slice().expect("patch gradients are contiguous");
    let dst = dx.as_slice_mut().expect("fresh array is contiguous");
    for b in 0..batch {
        let img = &mut dst[b * image_len..(b + 1) * image_len];
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * patch;
                for ky in 0..k {
                    let to = ((oy * s + ky) * w + ox * s) * c;
                    for (d, g) in img[to..to + span]
                        .iter_mut()
                        .zip(&src[row + ky * span..row + (ky + 1) * span])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

fn run_stage(
    stage: &Stage,
    params: &ParameterSet,
    mut x: Array2<f64>,
    mut saved: Option<&mut Vec<Saved>>,
) -> Array2<f64> {
    let keep = saved.is_some();
    for op in &stage.ops {
        let (next, record) = match op {
            Op::Conv(conv) => {
                let batch = x.nrows();
                let cols = im2col(&x, conv);
                let mut out = Array2::<f64>::zeros((cols.nrows(), conv.output.channels));
                general_mat_mul(1.0, &cols, &conv_kernel(params, conv).t(), 0.0, &mut out);
                out += &bias(params, conv.bias);
                let out = out
                    .into_shape_with_order((batch, conv.output.len()))
                    .expect("row-major patches map onto the output grid");
                (out, if keep { Saved::Patches(cols) } else { Saved::Nothing })
            }
            Op::Dense(dense) => {
                let mut out = Array2::<f64>::zeros((x.nrows(), dense.outputs));
                general_mat_mul(1.0, &x, &dense_weight(params, dense), 0.0, &mut out);
                out += &bias(params, dense.bias);
                (out, if keep { Saved::Input(x) } else { Saved::Nothing })
            }
            Op::Relu => {
                x.mapv_inplace(|v| v.max(0.0));
                let rec = if keep { Saved::Output(x.clone()) } else { Saved::Nothing };
                (x, rec)
            }
            Op::Tanh => {
                x.mapv_inplace(f64::tanh);
                let rec = if keep { Saved::Output(x.clone()) } else { Saved::Nothing };
                (x, rec)
            }
            Op::Affine { scale, shift } => {
                x *= scale;
                x += shift;
                (x, Saved::Nothing)
            }
        };
        if let Some(s) = saved.as_deref_mut() {
            s.push(record);
        }
        x = next;
    }
    x
}

fn add_into(params: &mut ParameterSet, idx: usize, values: &[f64]) {
    for (a, b) in params.tensor_mut(idx).data.iter_mut().zip(values) {
        *a += b;
    }
}

/// Walks a stage backwards; returns the stage-input gradient when asked.
fn backprop_stage(
    stage: &Stage,
    params: &ParameterSet,
    saved: &[Saved],
    mut dy: Array2<f64>,
    mut grads: Option<&mut ParameterSet>,
    need_input: bool,
) -> Option<Array2<f64>> {
    debug_assert_eq!(saved.len(), stage.ops.len(), "{} cache length", stage.name);
    for (k, (op, rec)) in stage.ops.iter().zip(saved).enumerate().rev() {
        let want_dx = k > 0 || need_input;
        match (op, rec) {
            (Op::Conv(conv), Saved::Patches(cols)) => {
                let batch = dy.nrows();
                let dout = dy
                    .into_shape_with_order((cols.nrows(), conv.output.channels))
                    .expect("output gradient matches conv output");
                if let Some(g) = grads.as_deref_mut() {
                    let mut dk = Array2::<f64>::zeros((conv.output.channels, conv.patch_len()));
                    general_mat_mul(1.0, &dout.t(), cols, 0.0, &mut dk);
                    add_into(g, conv.weight, dk.as_slice().expect("contiguous"));
                    let db = dout.sum_axis(Axis(0));
                    add_into(g, conv.bias, db.as_slice().expect("contiguous"));
                }
                if !want_dx {
                    return None;
                }
                let mut dcols = Array2::<f64>::zeros((cols.nrows(), conv.patch_len()));
                general_mat_mul(1.0, &dout, &conv_kernel(params, conv), 0.0, &mut dcols);
                dy = col2im(&dcols, conv, batch);
            }
            (Op::Dense(dense), Saved::Input(x)) => {
                if let Some(g) = grads.as_deref_mut() {
                    let mut dw = Array2::<f64>::zeros((dense.inputs, dense.outputs));
                    general_mat_mul(1.0, &x.t(), &dy, 0.0, &mut dw);
                    add_into(g, dense.weight, dw.as_slice().expect("contiguous"));
                    let db = dy.sum_axis(Axis(0));
                    add_into(g, dense.bias, db.as_slice().expect("contiguous"));
                }
                if !want_dx {
                    return None;
                }
                let mut dx = Array2::<f64>::zeros((dy.nrows(), dense.inputs));
                general_mat_mul(1.0, &dy, &dense_weight(params, dense).t(), 0.0, &mut dx);
                dy = dx;
            }
            (Op::Relu, Saved::Output(out)) => {
                ndarray::Zip::from(&mut dy).and(out).for_each(|d, &o| {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            (Op::Tanh, Saved::Output(out)) => {
                ndarray::Zip::from(&mut dy)
                    .and(out)
                    .for_each(|d, &o| *d *= 1.0 - o * o);
            }
            (Op::Affine { scale, .. }, Saved::Nothing) => {
                dy *= scale;
            }
            _ => unreachable!("cache entries are produced by the same stage"),
        }
    }
    need_input.then_some(dy)
}
