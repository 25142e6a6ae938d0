//! The variable-width MLP at the heart of the light field network.
//!
//! One set of full-width weights serves every level of detail: evaluating at
//! active width `W` reads exactly the leading `W` rows and columns of each
//! hidden matrix. A fractional LOD additionally scales the newest feature by
//! the blend factor before normalization, fading the neuron in continuously.
//!
//! Per hidden layer the order is: linear at the active width, mask the last
//! feature, layer-normalize over the active features, ReLU. The output layer
//! is plain linear and the raw (unclamped) RGBA comes back to the caller.

mod adam;

pub use adam::{adam_step, AdamParams, AdamState};

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ray_for_pixel, Camera, PluckerRay};
use crate::lod::{self, ArchConfig};
use crate::raster::Image;

/// LayerNorm stabilizer.
const NORM_EPS: f64 = 1e-5;

/// Scalar type the network runs on. Production models use `f32`; the
/// finite-difference tests instantiate everything with `f64`.
pub trait Real:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Weights for one hidden layer: linear part plus the LayerNorm affine pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    /// `(width x fan_in)`; row `i` feeds output neuron `i`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub norm_gain: Array1<T>,
    pub norm_bias: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputParams<T> {
    /// `(output_dim x width)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Every tensor of the network in one container. The same layout carries the
/// parameters themselves, their gradients, and the Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub input: LayerParams<T>,
    pub hidden: Vec<LayerParams<T>>,
    pub output: OutputParams<T>,
}

/// Gradients are shape-congruent to the parameters; entries outside the
/// active width stay exactly zero.
pub type Gradients<T> = ParamSet<T>;

impl<T: Real> ParamSet<T> {
    /// All-zero tensors for a sub-network truncated at `width`.
    pub fn zeros(arch: &ArchConfig, width: usize) -> Self {
        let layer = |fan_in: usize| LayerParams {
            weight: Array2::zeros((width, fan_in)),
            bias: Array1::zeros(width),
            norm_gain: Array1::zeros(width),
            norm_bias: Array1::zeros(width),
        };
        ParamSet {
            input: layer(arch.input_dim),
            hidden: (0..arch.layers - 2).map(|_| layer(width)).collect(),
            output: OutputParams {
                weight: Array2::zeros((arch.output_dim, width)),
                bias: Array1::zeros(arch.output_dim),
            },
        }
    }

    /// Hidden layer `i` (0 is the input layer).
    pub fn hidden_layer(&self, i: usize) -> &LayerParams<T> {
        if i == 0 {
            &self.input
        } else {
            &self.hidden[i - 1]
        }
    }

    pub fn hidden_layer_mut(&mut self, i: usize) -> &mut LayerParams<T> {
        if i == 0 {
            &mut self.input
        } else {
            &mut self.hidden[i - 1]
        }
    }

    /// Flat views over every tensor in a fixed canonical order: input layer,
    /// middle layers, output layer; within a layer weight, bias, gain, bias.
    pub fn tensor_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for i in 0..=self.hidden.len() {
            let l = self.hidden_layer(i);
            out.push(l.weight.as_slice().unwrap());
            out.push(l.bias.as_slice().unwrap());
            out.push(l.norm_gain.as_slice().unwrap());
            out.push(l.norm_bias.as_slice().unwrap());
        }
        out.push(self.output.weight.as_slice().unwrap());
        out.push(self.output.bias.as_slice().unwrap());
        out
    }

    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [T]> {
        let n = self.hidden.len();
        let mut out = Vec::new();
        {
            let l = &mut self.input;
            out.push(l.weight.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
            out.push(l.norm_gain.as_slice_mut().unwrap());
            out.push(l.norm_bias.as_slice_mut().unwrap());
        }
        for l in self.hidden.iter_mut().take(n) {
            out.push(l.weight.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
            out.push(l.norm_gain.as_slice_mut().unwrap());
            out.push(l.norm_bias.as_slice_mut().unwrap());
        }
        out.push(self.output.weight.as_slice_mut().unwrap());
        out.push(self.output.bias.as_slice_mut().unwrap());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensor_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// The light field network: a fixed-depth MLP whose hidden width can be
/// truncated to any value between the architecture's minimum width and
/// `available_width` (shorter when decoded from a stream prefix).
#[derive(Clone, Debug, PartialEq)]
pub struct VariableWidthMlp<T> {
    arch: ArchConfig,
    available_width: usize,
    pub params: ParamSet<T>,
}

impl<T: Real> VariableWidthMlp<T> {
    /// Kaiming-uniform fan-in initialization; biases zero, norm gain one.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros_at(arch, arch.max_width)?;
        let n_hidden = arch.layers - 1;
        for i in 0..n_hidden {
            let fan_in = if i == 0 { arch.input_dim } else { arch.max_width };
            let bound = (6.0 / fan_in as f64).sqrt();
            let layer = model.params.hidden_layer_mut(i);
            for v in layer.weight.iter_mut() {
                *v = T::from_f64(rng.random_range(-bound..bound));
            }
            layer.norm_gain.fill(T::one());
        }
        let bound = (6.0 / arch.max_width as f64).sqrt();
        for v in model.params.output.weight.iter_mut() {
            *v = T::from_f64(rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    /// All-zero model truncated at `width` (codec assembly and tests).
    pub fn zeros_at(arch: &ArchConfig, width: usize) -> Result<Self> {
        arch.validate()?;
        if width < arch.min_width || width > arch.max_width {
            return Err(Error::invalid(format!(
                "available width {width} outside [{}, {}]",
                arch.min_width, arch.max_width
            )));
        }
        Ok(VariableWidthMlp {
            arch: *arch,
            available_width: width,
            params: ParamSet::zeros(arch, width),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn available_width(&self) -> usize {
        self.available_width
    }

    pub fn param_count(&self) -> usize {
        lod::param_count(&self.arch, self.available_width).unwrap()
    }

    fn resolve_lod(&self, lod_index: f64) -> Result<(usize, T)> {
        let (width, alpha) = lod::width_for_lod(&self.arch, lod_index)?;
        if width > self.available_width {
            return Err(Error::invalid(format!(
                "lod {lod_index} needs width {width} but only {} is available",
                self.available_width
            )));
        }
        Ok((width, T::from_f64(alpha)))
    }

    /// One hidden layer: linear, mask, LayerNorm (f64 statistics), ReLU.
    /// Returns the activations; optionally captures normalized features and
    /// inverse sigmas for the backward pass.
    fn hidden_forward(
        layer: &LayerParams<T>,
        input: &Array2<T>,
        width: usize,
        alpha: T,
        mask: bool,
        capture: Option<(&mut Array2<T>, &mut Vec<f64>)>,
    ) -> Array2<T> {
        let fan_in = input.ncols();
        let w_slice = layer.weight.slice(s![..width, ..fan_in]);
        let mut act = input.dot(&w_slice.t());
        let bias = layer.bias.slice(s![..width]);
        let gain = layer.norm_gain.slice(s![..width]);
        let nbias = layer.norm_bias.slice(s![..width]);
        for mut row in act.rows_mut() {
            for j in 0..width {
                row[j] = row[j] + bias[j];
            }
        }
        if mask {
            mask_features(&mut act, width, alpha);
        }
        let inv_w = 1.0 / width as f64;
        let mut captured = capture;
        for (row_idx, mut row) in act.rows_mut().into_iter().enumerate() {
            let mut sum = 0.0f64;
            for j in 0..width {
                sum += row[j].as_f64();
            }
            let mean = sum * inv_w;
            let mut var = 0.0f64;
            for j in 0..width {
                let d = row[j].as_f64() - mean;
                var += d * d;
            }
            var *= inv_w;
            let inv_sigma = 1.0 / (var + NORM_EPS).sqrt();
            for j in 0..width {
                let xhat = T::from_f64((row[j].as_f64() - mean) * inv_sigma);
                if let Some((xhats, _)) = captured.as_mut() {
                    xhats[[row_idx, j]] = xhat;
                }
                let n = gain[j] * xhat + nbias[j];
                row[j] = if n > T::zero() { n } else { T::zero() };
            }
            if let Some((_, invs)) = captured.as_mut() {
                invs.push(inv_sigma);
            }
        }
        act
    }

    fn forward_impl(
        &self,
        rays: &Array2<T>,
        lod_index: f64,
        capture: bool,
    ) -> Result<(Array2<T>, Option<ForwardTrace<T>>)> {
        if rays.ncols() != self.arch.input_dim {
            return Err(Error::invalid(format!(
                "ray batch has {} columns, expected {}",
                rays.ncols(),
                self.arch.input_dim
            )));
        }
        let (width, alpha) = self.resolve_lod(lod_index)?;
        // The newest neuron only exists above the base width; at the base
        // width there is nothing to fade in.
        let mask = alpha < T::one() && width > self.arch.min_width;
        let batch = rays.nrows();
        let n_hidden = self.arch.layers - 1;

        let mut layer_inputs: Vec<Array2<T>> = Vec::new();
        let mut xhats: Vec<Array2<T>> = Vec::new();
        let mut invs: Vec<Vec<f64>> = Vec::new();

        let mut h = rays.clone();
        for i in 0..n_hidden {
            let layer = self.params.hidden_layer(i);
            let next = if capture {
                let mut xh = Array2::zeros((batch, width));
                let mut iv = Vec::with_capacity(batch);
                let next =
                    Self::hidden_forward(layer, &h, width, alpha, mask, Some((&mut xh, &mut iv)));
                xhats.push(xh);
                invs.push(iv);
                next
            } else {
                Self::hidden_forward(layer, &h, width, alpha, mask, None)
            };
            if capture {
                layer_inputs.push(h);
            }
            h = next;
        }
        let w_out = self.params.output.weight.slice(s![.., ..width]);
        let mut y = h.dot(&w_out.t());
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v + self.params.output.bias[j];
            }
        }
        let trace = if capture {
            layer_inputs.push(h);
            Some(ForwardTrace {
                lod: lod_index,
                width,
                alpha,
                mask,
                batch,
                layer_inputs,
                xhats,
                invs,
            })
        } else {
            None
        };
        Ok((y, trace))
    }

    /// Raw RGBA predictions for a ray batch at a fractional LOD.
    pub fn forward(&self, rays: &Array2<T>, lod_index: f64) -> Result<Array2<T>> {
        Ok(self.forward_impl(rays, lod_index, false)?.0)
    }

    /// Forward pass that keeps the intermediates needed by [`Self::backward`].
    pub fn forward_traced(
        &self,
        rays: &Array2<T>,
        lod_index: f64,
    ) -> Result<(Array2<T>, ForwardTrace<T>)> {
        let (y, trace) = self.forward_impl(rays, lod_index, true)?;
        Ok((y, trace.expect("trace requested")))
    }

    /// Reverse-mode gradients of the masked, width-restricted forward pass.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        loss_grad: &Array2<T>,
    ) -> Result<Gradients<T>> {
        let mut grads = ParamSet::zeros(&self.arch, self.available_width);
        self.backward_into(trace, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates gradients into `grads` (used to sum the two loss terms).
    pub fn backward_into(
        &self,
        trace: &ForwardTrace<T>,
        loss_grad: &Array2<T>,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        if loss_grad.nrows() != trace.batch || loss_grad.ncols() != self.arch.output_dim {
            return Err(Error::invalid(format!(
                "loss gradient shape ({}, {}) does not match batch ({}, {})",
                loss_grad.nrows(),
                loss_grad.ncols(),
                trace.batch,
                self.arch.output_dim
            )));
        }
        let w = trace.width;
        let n_hidden = self.arch.layers - 1;
        let h_last = &trace.layer_inputs[n_hidden];

        // Output layer.
        {
            let mut gw = grads.output.weight.slice_mut(s![.., ..w]);
            gw += &loss_grad.t().dot(h_last);
            grads.output.bias += &loss_grad.sum_axis(Axis(0));
        }
        let mut dh = loss_grad.dot(&self.params.output.weight.slice(s![.., ..w]));

        // Hidden layers, last to first.
        for i in (0..n_hidden).rev() {
            let layer = self.params.hidden_layer(i);
            let h_out = &trace.layer_inputs[i + 1];
            let xhat = &trace.xhats[i];
            let invs = &trace.invs[i];
            let gain = layer.norm_gain.slice(s![..w]);

            let mut dmask = Array2::<T>::zeros((trace.batch, w));
            let mut dgain = vec![0.0f64; w];
            let mut dnbias = vec![0.0f64; w];
            let mut dxhat_row = vec![0.0f64; w];
            for r in 0..trace.batch {
                let mut s1 = 0.0f64;
                let mut s2 = 0.0f64;
                for j in 0..w {
                    // ReLU gate: the stored activation is max(n, 0).
                    let dn = if h_out[[r, j]] > T::zero() {
                        dh[[r, j]].as_f64()
                    } else {
                        0.0
                    };
                    let xh = xhat[[r, j]].as_f64();
                    dgain[j] += dn * xh;
                    dnbias[j] += dn;
                    let dxh = dn * gain[j].as_f64();
                    dxhat_row[j] = dxh;
                    s1 += dxh;
                    s2 += dxh * xh;
                }
                let inv_sigma = invs[r];
                let inv_w = 1.0 / w as f64;
                for j in 0..w {
                    let xh = xhat[[r, j]].as_f64();
                    let d = inv_sigma * (dxhat_row[j] - (s1 + xh * s2) * inv_w);
                    dmask[[r, j]] = T::from_f64(d);
                }
            }
            if trace.mask {
                // The mask is diagonal, so its gradient is the same scale.
                mask_features(&mut dmask, w, trace.alpha);
            }
            let h_in = &trace.layer_inputs[i];
            let fan_in = h_in.ncols();
            {
                let g = grads.hidden_layer_mut(i);
                let mut gw = g.weight.slice_mut(s![..w, ..fan_in]);
                gw += &dmask.t().dot(h_in);
                let mut gb = g.bias.slice_mut(s![..w]);
                gb += &dmask.sum_axis(Axis(0));
                for j in 0..w {
                    g.norm_gain[j] = g.norm_gain[j] + T::from_f64(dgain[j]);
                    g.norm_bias[j] = g.norm_bias[j] + T::from_f64(dnbias[j]);
                }
            }
            if i > 0 {
                dh = dmask.dot(&layer.weight.slice(s![..w, ..fan_in]));
            }
        }
        Ok(())
    }
}

/// Intermediates of one traced forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    lod: f64,
    width: usize,
    alpha: T,
    mask: bool,
    batch: usize,
    /// Input to each layer; the final entry feeds the output layer.
    layer_inputs: Vec<Array2<T>>,
    /// Normalized features per hidden layer.
    xhats: Vec<Array2<T>>,
    /// Per-row inverse sigma per hidden layer.
    invs: Vec<Vec<f64>>,
}

impl<T> ForwardTrace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn lod(&self) -> f64 {
        self.lod
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Neuron masking: scales the newest active feature by the blend factor,
/// leaving the rest untouched (`f' = (1, ..., 1, alpha) ⊙ f` over the active
/// block). Both the forward pass and the gradient path use this function.
pub fn mask_features<T: Real>(features: &mut Array2<T>, active_width: usize, alpha: T) {
    debug_assert!(active_width >= 1 && active_width <= features.ncols());
    for v in features.column_mut(active_width - 1).iter_mut() {
        *v = *v * alpha;
    }
}

/// Packs Plücker rays into the `(batch x 6)` network input layout.
pub fn ray_batch<T: Real>(rays: &[PluckerRay]) -> Array2<T> {
    let mut out = Array2::zeros((rays.len(), 6));
    for (i, ray) in rays.iter().enumerate() {
        for (j, v) in ray.components().iter().enumerate() {
            out[[i, j]] = T::from_f64(*v);
        }
    }
    out
}

/// Renders a full image: one forward evaluation per pixel ray. The output is
/// raw (unclamped); clamping happens at PNG export.
pub fn render<T: Real>(
    model: &VariableWidthMlp<T>,
    camera: &Camera,
    lod_index: f64,
    resolution: (u32, u32),
) -> Result<Image> {
    model.resolve_lod(lod_index)?;
    if resolution.0 < 1 || resolution.1 < 1 {
        return Err(Error::invalid("render resolution components must be >= 1"));
    }
    let cam = camera.scaled_to(resolution);
    let (w, h) = (resolution.0 as usize, resolution.1 as usize);
    let channels = model.arch().output_dim;
    let mut img = Image::new(w, h, channels);
    let chunk_px = 4096;
    img.data
        .par_chunks_mut(chunk_px * channels)
        .enumerate()
        .for_each(|(ci, out)| {
            let start = ci * chunk_px;
            let n = out.len() / channels;
            let rays: Vec<PluckerRay> = (start..start + n)
                .map(|p| {
                    let (x, y) = (p % w, p / w);
                    ray_for_pixel(
                        &cam,
                        nalgebra::Vector2::new(x as f64 + 0.5, y as f64 + 0.5),
                    )
                })
                .collect();
            let batch = ray_batch::<T>(&rays);
            // LOD and shapes were validated above; forward cannot fail here.
            let colors = model.forward(&batch, lod_index).expect("validated lod");
            for (dst, src) in out.chunks_mut(channels).zip(colors.rows()) {
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d = s.as_f64() as f32;
                }
            }
        });
    Ok(img)
}
