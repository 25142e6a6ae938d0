//! Progressive model serialization.
//!
//! A stream is a base model at the minimum width followed by one delta
//! segment per width, so any byte prefix that covers complete segments is a
//! renderable model. Applying all deltas reconstructs the full model
//! bit-exactly.
//!
//! # File layout (normative)
//!
//! All integers and floats are little-endian; the version field doubles as
//! the endianness check. Every segment starts at a 16-byte-aligned offset.
//!
//! ```text
//! header:  magic "CLFN" (4 bytes)
//!          version   u32 = 1
//!          arch      5 x u32: input_dim, output_dim, layers,
//!                             min_width, max_width
//!          padding   4 zero bytes (to offset 32)
//! segment: width     u32
//!          length    u32 (payload bytes)
//!          payload   little-endian f32 parameters
//!          padding   zero bytes to the next 16-byte boundary
//! ```
//!
//! The base segment (width = min_width) holds every parameter of the
//! minimum-width sub-network, layer by layer in network order; per hidden
//! layer: weight rows (row-major), bias, normalization gain, normalization
//! bias; then the output layer weight (row-major) and bias.
//!
//! The delta segment for width `W` holds, per layer in network order: the
//! new output-neuron row over the prior inputs, then the new input column
//! over all `W` rows (middle layers) or over the output rows (output layer),
//! then the new bias entry, then the normalization gain/bias pair. The input
//! layer has no new column; the output layer has only the column.

use crate::error::{Error, Result};
use crate::lod::{self, ArchConfig};
use crate::mlp::{AdamParams, AdamState, ParamSet, VariableWidthMlp};

pub const MAGIC: [u8; 4] = *b"CLFN";
pub const VERSION: u32 = 1;
const HEADER_BYTES: usize = 32;

const ADAM_MAGIC: [u8; 4] = *b"CLFO";

/// One serialized segment: the width it completes and its raw parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub width: u32,
    pub params: Vec<f32>,
}

impl Segment {
    pub fn payload_bytes(&self) -> usize {
        self.params.len() * 4
    }
}

/// Parsed progressive stream: header plus ordered segments.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgressiveStream {
    pub arch: ArchConfig,
    pub base: Segment,
    /// Deltas in width order `min_width + 1 ..= top width`.
    pub deltas: Vec<Segment>,
}

fn align16(n: usize) -> usize {
    n.div_ceil(16) * 16
}

/// Parameters present at `width` but absent at `width - 1`.
fn delta_params(arch: &ArchConfig, width: usize) -> usize {
    lod::delta_param_count(arch, width).expect("width validated by caller")
}

/// Serializes the base sub-network in layer order.
fn base_payload(model: &VariableWidthMlp<f32>) -> Vec<f32> {
    let arch = model.arch();
    let w = arch.min_width;
    let mut out = Vec::with_capacity(lod::param_count(arch, w).unwrap());
    for i in 0..arch.layers - 1 {
        let fan_in = if i == 0 { arch.input_dim } else { w };
        let layer = model.params.hidden_layer(i);
        for r in 0..w {
            for c in 0..fan_in {
                out.push(layer.weight[[r, c]]);
            }
        }
        out.extend(layer.bias.iter().take(w));
        out.extend(layer.norm_gain.iter().take(w));
        out.extend(layer.norm_bias.iter().take(w));
    }
    for r in 0..arch.output_dim {
        for c in 0..w {
            out.push(model.params.output.weight[[r, c]]);
        }
    }
    out.extend(model.params.output.bias.iter());
    out
}

/// Serializes the parameters that appear when growing to `width`.
fn delta_payload(model: &VariableWidthMlp<f32>, width: usize) -> Vec<f32> {
    let arch = model.arch();
    let j = width - 1; // index of the new neuron
    let mut out = Vec::with_capacity(delta_params(arch, width));
    for i in 0..arch.layers - 1 {
        let layer = model.params.hidden_layer(i);
        if i == 0 {
            // New row over the (fixed-size) ray input.
            for c in 0..arch.input_dim {
                out.push(layer.weight[[j, c]]);
            }
        } else {
            // New row over the prior inputs, then the new column including
            // the corner element.
            for c in 0..j {
                out.push(layer.weight[[j, c]]);
            }
            for r in 0..width {
                out.push(layer.weight[[r, j]]);
            }
        }
        out.push(layer.bias[j]);
        out.push(layer.norm_gain[j]);
        out.push(layer.norm_bias[j]);
    }
    for r in 0..arch.output_dim {
        out.push(model.params.output.weight[[r, j]]);
    }
    out
}

fn fill_base(params: &mut ParamSet<f32>, arch: &ArchConfig, payload: &[f32]) {
    let w = arch.min_width;
    let mut it = payload.iter();
    let mut next = || *it.next().expect("payload length validated");
    for i in 0..arch.layers - 1 {
        let fan_in = if i == 0 { arch.input_dim } else { w };
        let layer = params.hidden_layer_mut(i);
        for r in 0..w {
            for c in 0..fan_in {
                layer.weight[[r, c]] = next();
            }
        }
        for r in 0..w {
            layer.bias[r] = next();
        }
        for r in 0..w {
            layer.norm_gain[r] = next();
        }
        for r in 0..w {
            layer.norm_bias[r] = next();
        }
    }
    for r in 0..arch.output_dim {
        for c in 0..w {
            params.output.weight[[r, c]] = next();
        }
    }
    for r in 0..arch.output_dim {
        params.output.bias[r] = next();
    }
}

fn fill_delta(params: &mut ParamSet<f32>, arch: &ArchConfig, width: usize, payload: &[f32]) {
    let j = width - 1;
    let mut it = payload.iter();
    let mut next = || *it.next().expect("payload length validated");
    for i in 0..arch.layers - 1 {
        let layer = params.hidden_layer_mut(i);
        if i == 0 {
            for c in 0..arch.input_dim {
                layer.weight[[j, c]] = next();
            }
        } else {
            for c in 0..j {
                layer.weight[[j, c]] = next();
            }
            for r in 0..width {
                layer.weight[[r, j]] = next();
            }
        }
        layer.bias[j] = next();
        layer.norm_gain[j] = next();
        layer.norm_bias[j] = next();
    }
    for r in 0..arch.output_dim {
        params.output.weight[[r, j]] = next();
    }
}

/// Encodes a model into base plus deltas up to its available width.
pub fn encode(model: &VariableWidthMlp<f32>) -> ProgressiveStream {
    let arch = *model.arch();
    let base = Segment {
        width: arch.min_width as u32,
        params: base_payload(model),
    };
    let deltas = (arch.min_width + 1..=model.available_width())
        .map(|w| Segment {
            width: w as u32,
            params: delta_payload(model, w),
        })
        .collect();
    ProgressiveStream { arch, base, deltas }
}

impl ProgressiveStream {
    /// Width covered by the final segment.
    pub fn top_width(&self) -> u32 {
        self.deltas.last().map_or(self.base.width, |s| s.width)
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        std::iter::once(&self.base).chain(self.deltas.iter())
    }

    /// Total parameter payload in bytes, excluding headers and padding.
    pub fn payload_bytes(&self) -> usize {
        self.segments().map(Segment::payload_bytes).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload_bytes() + 16 * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            self.arch.input_dim,
            self.arch.output_dim,
            self.arch.layers,
            self.arch.min_width,
            self.arch.max_width,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.resize(HEADER_BYTES, 0);
        for seg in self.segments() {
            out.extend_from_slice(&seg.width.to_le_bytes());
            out.extend_from_slice(&(seg.payload_bytes() as u32).to_le_bytes());
            for p in &seg.params {
                out.extend_from_slice(&p.to_le_bytes());
            }
            out.resize(align16(out.len()), 0);
        }
        out
    }

    /// Strict parse requiring every segment through `max_width`.
    pub fn from_bytes(bytes: &[u8]) -> Result<ProgressiveStream> {
        let (arch, segments) = scan(bytes)?;
        assemble(arch, segments, arch.max_width as u32)
    }

    /// Parse requiring segments only through `up_to_width`; segments beyond
    /// it are kept if complete and dropped otherwise.
    pub fn from_bytes_prefix(bytes: &[u8], up_to_width: u32) -> Result<ProgressiveStream> {
        let (arch, segments) = scan(bytes)?;
        assemble(arch, segments, up_to_width)
    }

    /// Parse accepting any complete prefix: everything from the base through
    /// the last fully received segment.
    pub fn from_bytes_available(bytes: &[u8]) -> Result<ProgressiveStream> {
        let (arch, segments) = scan(bytes)?;
        let top = segments
            .last()
            .map(|s| s.width)
            .ok_or(Error::PartialStream { usable_width: None })?;
        assemble(arch, segments, top)
    }

    /// Reconstructs the model from base plus all present deltas.
    pub fn to_model(&self) -> Result<VariableWidthMlp<f32>> {
        let mut model = VariableWidthMlp::zeros_at(&self.arch, self.top_width() as usize)?;
        fill_base(&mut model.params, &self.arch, &self.base.params);
        for seg in &self.deltas {
            fill_delta(
                &mut model.params,
                &self.arch,
                seg.width as usize,
                &seg.params,
            );
        }
        Ok(model)
    }
}

/// Reads the header and every complete segment; a truncated tail ends the
/// scan silently (the caller decides whether enough arrived). Format errors
/// cover bad magic, version, arch, ordering, and payload-size mismatches.
fn scan(bytes: &[u8]) -> Result<(ArchConfig, Vec<Segment>)> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic (not a model stream)".into()));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Format("truncated header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version} (an endianness mismatch would read {:#010x})",
            VERSION.swap_bytes()
        )));
    }
    let arch = ArchConfig {
        input_dim: word(8) as usize,
        output_dim: word(12) as usize,
        layers: word(16) as usize,
        min_width: word(20) as usize,
        max_width: word(24) as usize,
    };
    arch.validate()
        .map_err(|e| Error::Format(format!("invalid arch block: {e}")))?;

    let mut segments = Vec::new();
    let mut offset = HEADER_BYTES;
    let mut expected_width = arch.min_width as u32;
    while offset < bytes.len() && expected_width <= arch.max_width as u32 {
        if bytes.len() < offset + 8 {
            break; // truncated segment header
        }
        let width = word(offset);
        let len = word(offset + 4) as usize;
        if width != expected_width {
            return Err(Error::Format(format!(
                "unexpected segment width {width} at offset {offset} (expected {expected_width})"
            )));
        }
        let expect_params = if width as usize == arch.min_width {
            lod::param_count(&arch, arch.min_width).unwrap()
        } else {
            delta_params(&arch, width as usize)
        };
        if len != expect_params * 4 {
            return Err(Error::Format(format!(
                "segment {width} payload is {len} bytes, expected {}",
                expect_params * 4
            )));
        }
        if bytes.len() < offset + 8 + len {
            break; // truncated payload
        }
        let params = bytes[offset + 8..offset + 8 + len]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        segments.push(Segment { width, params });
        // Trailing padding may be cut at end-of-file; the segment payload is
        // already complete at this point.
        offset = align16(offset + 8 + len);
        expected_width += 1;
    }
    Ok((arch, segments))
}

fn assemble(
    arch: ArchConfig,
    mut segments: Vec<Segment>,
    up_to_width: u32,
) -> Result<ProgressiveStream> {
    if up_to_width < arch.min_width as u32 || up_to_width > arch.max_width as u32 {
        return Err(Error::invalid(format!(
            "requested width {up_to_width} outside [{}, {}]",
            arch.min_width, arch.max_width
        )));
    }
    let usable = segments.last().map(|s| s.width);
    match usable {
        None => return Err(Error::PartialStream { usable_width: None }),
        Some(u) if u < up_to_width => {
            return Err(Error::PartialStream {
                usable_width: Some(u),
            })
        }
        _ => {}
    }
    segments.truncate((up_to_width - arch.min_width as u32 + 1) as usize);
    let mut it = segments.into_iter();
    let base = it.next().unwrap();
    Ok(ProgressiveStream {
        arch,
        base,
        deltas: it.collect(),
    })
}

/// Decodes the model usable at `up_to_width` from a byte prefix.
pub fn decode_prefix(bytes: &[u8], up_to_width: u32) -> Result<VariableWidthMlp<f32>> {
    ProgressiveStream::from_bytes_prefix(bytes, up_to_width)?.to_model()
}

/// Decodes the full model (every width present).
pub fn decode(bytes: &[u8]) -> Result<VariableWidthMlp<f32>> {
    ProgressiveStream::from_bytes(bytes)?.to_model()
}

/// Extends a model by one width step using the matching delta segment.
pub fn apply_delta(model: &mut VariableWidthMlp<f32>, segment: &Segment) -> Result<()> {
    let arch = *model.arch();
    let new_width = model.available_width() + 1;
    if new_width > arch.max_width {
        return Err(Error::invalid("model is already at full width"));
    }
    if segment.width as usize != new_width {
        return Err(Error::invalid(format!(
            "delta is for width {}, model currently provides {}",
            segment.width,
            model.available_width()
        )));
    }
    if segment.params.len() != delta_params(&arch, new_width) {
        return Err(Error::Format(format!(
            "delta {} has {} parameters, expected {}",
            segment.width,
            segment.params.len(),
            delta_params(&arch, new_width)
        )));
    }
    let old_width = new_width - 1;
    let mut grown = VariableWidthMlp::zeros_at(&arch, new_width)?;
    for i in 0..arch.layers - 1 {
        let old = model.params.hidden_layer(i);
        let new = grown.params.hidden_layer_mut(i);
        let fan_in_old = if i == 0 { arch.input_dim } else { old_width };
        for r in 0..old_width {
            for c in 0..fan_in_old {
                new.weight[[r, c]] = old.weight[[r, c]];
            }
            new.bias[r] = old.bias[r];
            new.norm_gain[r] = old.norm_gain[r];
            new.norm_bias[r] = old.norm_bias[r];
        }
    }
    for r in 0..arch.output_dim {
        for c in 0..old_width {
            grown.params.output.weight[[r, c]] = model.params.output.weight[[r, c]];
        }
        grown.params.output.bias[r] = model.params.output.bias[r];
    }
    fill_delta(&mut grown.params, &arch, new_width, &segment.params);
    *model = grown;
    Ok(())
}

/// How a streaming client groups widths into renderable steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamMode {
    /// Every width becomes renderable as soon as its delta arrives.
    Continuous,
    /// Only `n` equally spaced widths are renderable; a step becomes usable
    /// when every delta in its group has arrived.
    Discrete(u32),
}

/// Widths exposed by an `n`-level discrete client, equally spaced from the
/// base width to the full width.
pub fn discrete_widths(arch: &ArchConfig, n: u32) -> Result<Vec<u32>> {
    if n < 2 || (n as usize) > arch.max_width - arch.min_width + 1 {
        return Err(Error::invalid(format!(
            "discrete level count {n} outside [2, {}]",
            arch.max_width - arch.min_width + 1
        )));
    }
    let span = (arch.max_width - arch.min_width) as f64;
    Ok((0..n)
        .map(|k| arch.min_width as u32 + (k as f64 * span / (n - 1) as f64).round() as u32)
        .collect())
}

/// One point of the byte-arrival replay: at `time_s`, `width` became the
/// largest renderable width after `delta_payload_bytes` of new parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamEvent {
    pub time_s: f64,
    pub width: u32,
    /// Cumulative physical bytes received (headers and padding included).
    pub bytes_received: u64,
    /// Parameter payload newly available since the previous event.
    pub delta_payload_bytes: u64,
}

/// Replays byte arrival at a constant bandwidth and reports when each
/// renderable width becomes available. The series starts at `(0, 0, 0, 0)`.
pub fn stream_simulate(
    stream: &ProgressiveStream,
    bandwidth_bytes_per_sec: f64,
    mode: StreamMode,
) -> Result<Vec<StreamEvent>> {
    if !(bandwidth_bytes_per_sec > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    let renderable: Vec<u32> = match mode {
        StreamMode::Continuous => (stream.base.width..=stream.top_width()).collect(),
        StreamMode::Discrete(n) => discrete_widths(&stream.arch, n)?
            .into_iter()
            .filter(|&w| w <= stream.top_width())
            .collect(),
    };
    let mut events = vec![StreamEvent {
        time_s: 0.0,
        width: 0,
        bytes_received: 0,
        delta_payload_bytes: 0,
    }];
    let mut offset = HEADER_BYTES;
    let mut payload_acc = 0u64;
    for seg in stream.segments() {
        offset = align16(offset + 8 + seg.payload_bytes());
        payload_acc += seg.payload_bytes() as u64;
        if renderable.contains(&seg.width) {
            events.push(StreamEvent {
                time_s: offset as f64 / bandwidth_bytes_per_sec,
                width: seg.width,
                bytes_received: offset as u64,
                delta_payload_bytes: payload_acc,
            });
            payload_acc = 0;
        }
    }
    Ok(events)
}

/// Serializes Adam optimizer state as a checkpoint sidecar. Tensors follow
/// the canonical parameter order (first moments, then second moments).
pub fn encode_adam(state: &AdamState<f32>, arch: &ArchConfig, width: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&ADAM_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        arch.input_dim,
        arch.output_dim,
        arch.layers,
        arch.min_width,
        arch.max_width,
        width,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&state.step.to_le_bytes());
    for v in [state.hyper.beta1, state.hyper.beta2, state.hyper.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for set in [&state.m, &state.v] {
        for slice in set.tensor_slices() {
            for p in slice {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_adam(bytes: &[u8], model: &VariableWidthMlp<f32>) -> Result<AdamState<f32>> {
    if bytes.len() < 4 || bytes[..4] != ADAM_MAGIC {
        return Err(Error::Format("bad magic (not an optimizer sidecar)".into()));
    }
    let fixed = 4 + 4 + 6 * 4 + 8 + 3 * 8;
    if bytes.len() < fixed {
        return Err(Error::Format("truncated optimizer sidecar".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(Error::Format("unsupported sidecar version".into()));
    }
    let arch = ArchConfig {
        input_dim: word(8) as usize,
        output_dim: word(12) as usize,
        layers: word(16) as usize,
        min_width: word(20) as usize,
        max_width: word(24) as usize,
    };
    let width = word(28) as usize;
    if arch != *model.arch() || width != model.available_width() {
        return Err(Error::Format(
            "optimizer sidecar does not match the model".into(),
        ));
    }
    let step = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let hyper = AdamParams {
        beta1: f(40),
        beta2: f(48),
        epsilon: f(56),
    };
    let mut state = AdamState::new(model, hyper);
    state.step = step;
    let mut pos = fixed;
    for set in [&mut state.m, &mut state.v] {
        for slice in set.tensor_slices_mut() {
            let need = slice.len() * 4;
            if bytes.len() < pos + need {
                return Err(Error::Format("optimizer sidecar payload truncated".into()));
            }
            for (k, b) in bytes[pos..pos + need].chunks_exact(4).enumerate() {
                slice[k] = f32::from_le_bytes(b.try_into().unwrap());
            }
            pos += need;
        }
    }
    Ok(state)
}
