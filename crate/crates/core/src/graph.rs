//! Model intermediate representation, shape validation, and the on-disk
//! bundle format.
//!
//! A model is a JSON manifest plus one raw weight blob. Float bundles store
//! weights as 32-bit little-endian IEEE-754 values; quantized bundles store
//! one 16-bit little-endian coefficient word per weight (see
//! `docs/formats.md`) followed by the layer's biases as f32. Manifest
//! offsets count elements, not bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsfp::{self, ActCode, CoefCode, FormatParams};
use crate::tensor::{KernelStack, Padding};
use crate::{Error, Result};

/// Manifest format version written by this crate.
pub const MANIFEST_VERSION: u32 = 1;

/// Default scale applied to 8-bit image inputs before encoding.
pub const DEFAULT_INPUT_SCALE: f64 = 1.0 / 256.0;

/// One layer of the model IR.
///
/// `Conv3x3` is the accelerator's native dialect; the composite variants
/// exist to be rewritten by the surgery passes. `Dense` is reference-only
/// and can never be lowered.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv3x3 {
        padding: Padding,
        relu: bool,
        pool: bool,
        weights: KernelStack,
    },
    /// Residual pattern `relu(x + W2 * relu(W1 * x))` over square kernel
    /// stacks.
    ShortcutBlock { w1: KernelStack, w2: KernelStack },
    /// Per-channel 3x3 filtering followed by 1x1 cross-channel mixing.
    /// `depthwise[p]` is channel p's kernel; `pointwise` is `[q][p]`.
    DepthwiseSeparable {
        depthwise: Vec<[f64; 9]>,
        pointwise: Vec<f64>,
        out_channels: usize,
    },
    /// Stack of unpadded 3x3 stages collapsing an SxS map to 1x1 logits.
    FCHead {
        spatial: usize,
        in_channels: usize,
        hidden: Vec<usize>,
        out_dim: usize,
        weights: Option<Vec<KernelStack>>,
    },
    /// Dense projection; reference execution only.
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
    },
}

/// Channel contract of one FC-head stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcStage {
    pub in_channels: usize,
    pub out_channels: usize,
    pub relu: bool,
}

/// The per-stage channel chain of an FC head: hidden stages keep ReLU, the
/// final logit stage does not. Errors on even or too-small spatial size and
/// on a hidden list whose length does not fit `(spatial - 1) / 2` stages.
pub fn fc_head_stages(
    spatial: usize,
    in_channels: usize,
    hidden: &[usize],
    out_dim: usize,
) -> Result<Vec<FcStage>> {
    if spatial.is_multiple_of(2) || spatial < 3 {
        return Err(Error::Shape(format!(
            "fc head spatial size must be odd and >= 3, got {spatial}"
        )));
    }
    let n_stages = (spatial - 1) / 2;
    if hidden.len() != n_stages - 1 {
        return Err(Error::Shape(format!(
            "fc head over {spatial}x{spatial} needs {} hidden stages, got {}",
            n_stages - 1,
            hidden.len()
        )));
    }
    if hidden.contains(&0) || out_dim == 0 || in_channels == 0 {
        return Err(Error::Shape("fc head channel counts must be positive".into()));
    }
    let mut stages = Vec::with_capacity(n_stages);
    let mut cur = in_channels;
    for &h in hidden {
        stages.push(FcStage {
            in_channels: cur,
            out_channels: h,
            relu: true,
        });
        cur = h;
    }
    stages.push(FcStage {
        in_channels: cur,
        out_channels: out_dim,
        relu: false,
    });
    Ok(stages)
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::ShortcutBlock { .. } => "shortcut",
            LayerSpec::DepthwiseSeparable { .. } => "depthwise_separable",
            LayerSpec::FCHead { .. } => "fc_head",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            LayerSpec::Conv3x3 { weights, .. } => weights.in_channels,
            LayerSpec::ShortcutBlock { w1, .. } => w1.in_channels,
            LayerSpec::DepthwiseSeparable { depthwise, .. } => depthwise.len(),
            LayerSpec::FCHead { in_channels, .. } => *in_channels,
            LayerSpec::Dense { in_dim, .. } => *in_dim,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            LayerSpec::Conv3x3 { weights, .. } => weights.out_channels,
            LayerSpec::ShortcutBlock { w1, .. } => w1.out_channels,
            LayerSpec::DepthwiseSeparable { out_channels, .. } => *out_channels,
            LayerSpec::FCHead { out_dim, .. } => *out_dim,
            LayerSpec::Dense { out_dim, .. } => *out_dim,
        }
    }

    /// Number of filter coefficients (weights, excluding biases).
    pub fn coefficient_count(&self) -> u64 {
        match self {
            LayerSpec::Conv3x3 { weights, .. } => {
                (weights.out_channels * weights.in_channels * 9) as u64
            }
            LayerSpec::ShortcutBlock { w1, w2 } => {
                (w1.weights.len() + w2.weights.len()) as u64
            }
            LayerSpec::DepthwiseSeparable {
                depthwise,
                pointwise,
                ..
            } => (depthwise.len() * 9 + pointwise.len()) as u64,
            LayerSpec::FCHead {
                spatial,
                in_channels,
                hidden,
                out_dim,
                ..
            } => fc_head_stages(*spatial, *in_channels, hidden, *out_dim)
                .map(|stages| {
                    stages
                        .iter()
                        .map(|s| (s.in_channels * s.out_channels * 9) as u64)
                        .sum()
                })
                .unwrap_or(0),
            LayerSpec::Dense { weights, .. } => weights.len() as u64,
        }
    }
}

/// An ordered layer list with its input shape and number-format parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    /// `(channels, height, width)` of the input.
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub params: FormatParams,
    /// Scale applied to raw 8-bit pixels before encoding.
    pub input_scale: f64,
}

impl ModelGraph {
    pub fn new(input_shape: (usize, usize, usize), layers: Vec<LayerSpec>) -> Self {
        ModelGraph {
            input_shape,
            layers,
            params: FormatParams::default(),
            input_scale: DEFAULT_INPUT_SCALE,
        }
    }

    /// Checks the shape chain from the input through every layer and
    /// returns each layer's output shape. Errors name the offending layer.
    pub fn validate(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (c0, h0, w0) = self.input_shape;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(Error::Shape("input shape must be positive".into()));
        }
        let mut shape = self.input_shape;
        let mut chain = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, shape).map_err(|e| match e {
                Error::Shape(msg) => Error::Validation { layer: idx, msg },
                other => other,
            })?;
            chain.push(shape);
        }
        Ok(chain)
    }

    /// True iff every layer is a plain 3x3 convolution (any relu/pool
    /// flags) — the dialect the accelerator executes natively.
    pub fn is_vgg_type(&self) -> bool {
        self.layers
            .iter()
            .all(|l| matches!(l, LayerSpec::Conv3x3 { .. }))
    }
}

fn layer_output_shape(
    layer: &LayerSpec,
    (c, h, w): (usize, usize, usize),
) -> Result<(usize, usize, usize)> {
    match layer {
        LayerSpec::Conv3x3 {
            padding,
            pool,
            weights,
            ..
        } => {
            if weights.in_channels != c {
                return Err(Error::Shape(format!(
                    "conv expects {} input channels, got {}",
                    weights.in_channels, c
                )));
            }
            let (mut oh, mut ow) = match padding {
                Padding::Same => (h, w),
                Padding::Valid => {
                    if h < 3 || w < 3 {
                        return Err(Error::Shape(format!(
                            "valid conv needs at least 3x3 input, got {h}x{w}"
                        )));
                    }
                    (h - 2, w - 2)
                }
            };
            if *pool {
                if !oh.is_multiple_of(2) || !ow.is_multiple_of(2) {
                    return Err(Error::Shape(format!(
                        "2x2 pooling needs even spatial size, got {oh}x{ow}"
                    )));
                }
                oh /= 2;
                ow /= 2;
            }
            Ok((weights.out_channels, oh, ow))
        }
        LayerSpec::ShortcutBlock { w1, w2 } => {
            let n = w1.out_channels;
            if w1.in_channels != n || w2.in_channels != n || w2.out_channels != n {
                return Err(Error::Shape(
                    "shortcut block kernel stacks must be square with equal sizes".into(),
                ));
            }
            if c != n {
                return Err(Error::Shape(format!(
                    "shortcut block expects {n} input channels, got {c}"
                )));
            }
            Ok((n, h, w))
        }
        LayerSpec::DepthwiseSeparable {
            depthwise,
            pointwise,
            out_channels,
        } => {
            let p = depthwise.len();
            let q = *out_channels;
            if p == 0 || q == 0 {
                return Err(Error::Shape("depthwise separable channels must be positive".into()));
            }
            if c != p {
                return Err(Error::Shape(format!(
                    "depthwise layer expects {p} input channels, got {c}"
                )));
            }
            if pointwise.len() != q * p {
                return Err(Error::Shape(format!(
                    "pointwise expects {} scalars for {}x{}, got {}",
                    q * p,
                    q,
                    p,
                    pointwise.len()
                )));
            }
            Ok((q, h, w))
        }
        LayerSpec::FCHead {
            spatial,
            in_channels,
            hidden,
            out_dim,
            weights,
        } => {
            if (c, h, w) != (*in_channels, *spatial, *spatial) {
                return Err(Error::Shape(format!(
                    "fc head expects input {}x{}x{}, got {}x{}x{}",
                    in_channels, spatial, spatial, c, h, w
                )));
            }
            let stages = fc_head_stages(*spatial, *in_channels, hidden, *out_dim)?;
            if let Some(stacks) = weights {
                if stacks.len() != stages.len() {
                    return Err(Error::Shape(format!(
                        "fc head expects {} weight stacks, got {}",
                        stages.len(),
                        stacks.len()
                    )));
                }
                for (stage, stack) in stages.iter().zip(stacks) {
                    if stack.in_channels != stage.in_channels
                        || stack.out_channels != stage.out_channels
                    {
                        return Err(Error::Shape(
                            "fc head weight stack dimensions do not match the stage chain"
                                .into(),
                        ));
                    }
                }
            }
            Ok((*out_dim, 1, 1))
        }
        LayerSpec::Dense {
            in_dim,
            out_dim,
            weights,
        } => {
            if c * h * w != *in_dim {
                return Err(Error::Shape(format!(
                    "dense layer expects {} inputs, got {}x{}x{} = {}",
                    in_dim,
                    c,
                    h,
                    w,
                    c * h * w
                )));
            }
            if weights.len() != in_dim * out_dim {
                return Err(Error::Shape(format!(
                    "dense layer expects {} weights, got {}",
                    in_dim * out_dim,
                    weights.len()
                )));
            }
            Ok((*out_dim, 1, 1))
        }
    }
}

// ---------------------------------------------------------------------------
// Quantized bundles
// ---------------------------------------------------------------------------

/// A 3x3 arrangement of coefficient codes.
pub type CoefBlock = [[CoefCode; 3]; 3];

/// A stack of quantized 3x3 kernels in `[out][in]` block order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantKernels {
    pub out_channels: usize,
    pub in_channels: usize,
    pub blocks: Vec<CoefBlock>,
    pub bias: Vec<f64>,
}

impl QuantKernels {
    #[inline]
    pub fn block(&self, o: usize, i: usize) -> &CoefBlock {
        &self.blocks[o * self.in_channels + i]
    }
}

/// One quantized convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub padding: Padding,
    pub relu: bool,
    pub pool: bool,
    pub kernels: QuantKernels,
}

/// A fully quantized model: the form the accelerator actually loads.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<QuantLayer>,
    pub params: FormatParams,
    pub input_scale: f64,
}

/// Quantizes all weights of a 3x3-only graph to coefficient codes.
/// Biases stay real: they are applied during requantization.
pub fn quantize_model(g: &ModelGraph, params: FormatParams) -> Result<QuantModel> {
    params.validate()?;
    g.validate()?;
    if !g.is_vgg_type() {
        return Err(Error::Bundle(
            "model contains composite layers; lower it to the 3x3 dialect before quantizing"
                .into(),
        ));
    }
    let mut layers = Vec::with_capacity(g.layers.len());
    for layer in &g.layers {
        let LayerSpec::Conv3x3 {
            padding,
            relu,
            pool,
            weights,
        } = layer
        else {
            unreachable!("is_vgg_type checked above");
        };
        layers.push(QuantLayer {
            padding: *padding,
            relu: *relu,
            pool: *pool,
            kernels: quantize_kernels(weights, params)?,
        });
    }
    Ok(QuantModel {
        input_shape: g.input_shape,
        layers,
        params,
        input_scale: g.input_scale,
    })
}

/// Encodes one kernel stack to coefficient codes.
pub fn quantize_kernels(k: &KernelStack, params: FormatParams) -> Result<QuantKernels> {
    let mut blocks = Vec::with_capacity(k.out_channels * k.in_channels);
    for o in 0..k.out_channels {
        for i in 0..k.in_channels {
            let mut block = [[CoefCode::ZERO; 3]; 3];
            for (kr, row) in block.iter_mut().enumerate() {
                for (kc, cell) in row.iter_mut().enumerate() {
                    *cell = dsfp::encode_coefficient(k.tap(o, i, kr, kc), params)?;
                }
            }
            blocks.push(block);
        }
    }
    Ok(QuantKernels {
        out_channels: k.out_channels,
        in_channels: k.in_channels,
        blocks,
        bias: k.bias.clone(),
    })
}

impl QuantModel {
    /// Decodes coefficients back to reals for reference execution.
    /// Decoding is exact, so this loses nothing.
    pub fn to_reference(&self) -> ModelGraph {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let k = &l.kernels;
                let mut weights = Vec::with_capacity(k.out_channels * k.in_channels * 9);
                for o in 0..k.out_channels {
                    for i in 0..k.in_channels {
                        let block = k.block(o, i);
                        for row in block {
                            for &code in row {
                                weights.push(dsfp::decode_coefficient(code, self.params));
                            }
                        }
                    }
                }
                LayerSpec::Conv3x3 {
                    padding: l.padding,
                    relu: l.relu,
                    pool: l.pool,
                    weights: KernelStack {
                        out_channels: k.out_channels,
                        in_channels: k.in_channels,
                        weights,
                        bias: k.bias.clone(),
                    },
                }
            })
            .collect();
        ModelGraph {
            input_shape: self.input_shape,
            layers,
            params: self.params,
            input_scale: self.input_scale,
        }
    }

    pub fn validate(&self) -> Result<Vec<(usize, usize, usize)>> {
        self.to_reference().validate()
    }
}

// ---------------------------------------------------------------------------
// On-disk bundle format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    version: u32,
    quantized: bool,
    input_shape: [usize; 3],
    input_scale: f64,
    format_params: FormatParams,
    blob: String,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    kind: String,
    in_ch: usize,
    out_ch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    padding: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    relu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pool: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    spatial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    hidden: Option<Vec<usize>>,
    weight_offset: u64,
    weight_count: u64,
}

/// Either flavor of bundle, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Bundle {
    Float(ModelGraph),
    Quantized(QuantModel),
}

impl Bundle {
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            Bundle::Float(g) => g.input_shape,
            Bundle::Quantized(m) => m.input_shape,
        }
    }

    pub fn input_scale(&self) -> f64 {
        match self {
            Bundle::Float(g) => g.input_scale,
            Bundle::Quantized(m) => m.input_scale,
        }
    }
}

fn padding_str(p: Padding) -> &'static str {
    match p {
        Padding::Same => "same",
        Padding::Valid => "valid",
    }
}

fn parse_padding(s: &str) -> Result<Padding> {
    match s {
        "same" => Ok(Padding::Same),
        "valid" => Ok(Padding::Valid),
        other => Err(Error::Bundle(format!("unknown padding mode {other:?}"))),
    }
}

/// Element count of one layer's blob payload (weights plus biases).
fn float_element_count(layer: &LayerSpec) -> u64 {
    match layer {
        LayerSpec::Conv3x3 { weights, .. } => (weights.weights.len() + weights.bias.len()) as u64,
        LayerSpec::ShortcutBlock { w1, w2 } => {
            (w1.weights.len() + w1.bias.len() + w2.weights.len() + w2.bias.len()) as u64
        }
        LayerSpec::DepthwiseSeparable {
            depthwise,
            pointwise,
            ..
        } => (depthwise.len() * 9 + pointwise.len()) as u64,
        LayerSpec::FCHead { weights, .. } => weights
            .as_ref()
            .map(|stacks| {
                stacks
                    .iter()
                    .map(|s| (s.weights.len() + s.bias.len()) as u64)
                    .sum()
            })
            .unwrap_or(0),
        LayerSpec::Dense { weights, .. } => weights.len() as u64,
    }
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct F32Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> F32Reader<'a> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n * 4;
        if self.pos + need > self.bytes.len() {
            return Err(Error::Bundle(format!(
                "weight blob too short: need {} more bytes at offset {}",
                need,
                self.pos
            )));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        self.pos += need;
        Ok(out)
    }
}

/// Writes a file atomically: temp file in the same directory, then rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
        None => PathBuf::from(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Saves a float model as `<path>.json` manifest + `<stem>.bin` blob.
/// The manifest path must end in `.json`; the blob sits next to it.
pub fn save_model(g: &ModelGraph, manifest_path: &Path) -> Result<()> {
    g.validate()?;
    let blob_name = blob_name_for(manifest_path)?;

    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(g.layers.len());
    let mut offset = 0u64;
    for layer in &g.layers {
        let count = float_element_count(layer);
        match layer {
            LayerSpec::Conv3x3 {
                padding,
                relu,
                pool,
                weights,
            } => {
                push_f32s(&mut blob, &weights.weights);
                push_f32s(&mut blob, &weights.bias);
                entries.push(LayerEntry {
                    kind: "conv3x3".into(),
                    in_ch: weights.in_channels,
                    out_ch: weights.out_channels,
                    padding: Some(padding_str(*padding).into()),
                    relu: Some(*relu),
                    pool: Some(*pool),
                    spatial: None,
                    hidden: None,
                    weight_offset: offset,
                    weight_count: count,
                });
            }
            LayerSpec::ShortcutBlock { w1, w2 } => {
                push_f32s(&mut blob, &w1.weights);
                push_f32s(&mut blob, &w1.bias);
                push_f32s(&mut blob, &w2.weights);
                push_f32s(&mut blob, &w2.bias);
                entries.push(LayerEntry {
                    kind: "shortcut".into(),
                    in_ch: w1.in_channels,
                    out_ch: w1.out_channels,
                    padding: None,
                    relu: None,
                    pool: None,
                    spatial: None,
                    hidden: None,
                    weight_offset: offset,
                    weight_count: count,
                });
            }
            LayerSpec::DepthwiseSeparable {
                depthwise,
                pointwise,
                out_channels,
            } => {
                for k in depthwise {
                    push_f32s(&mut blob, k);
                }
                push_f32s(&mut blob, pointwise);
                entries.push(LayerEntry {
                    kind: "depthwise_separable".into(),
                    in_ch: depthwise.len(),
                    out_ch: *out_channels,
                    padding: None,
                    relu: None,
                    pool: None,
                    spatial: None,
                    hidden: None,
                    weight_offset: offset,
                    weight_count: count,
                });
            }
            LayerSpec::FCHead {
                spatial,
                in_channels,
                hidden,
                out_dim,
                weights,
            } => {
                if let Some(stacks) = weights {
                    for s in stacks {
                        push_f32s(&mut blob, &s.weights);
                        push_f32s(&mut blob, &s.bias);
                    }
                }
                entries.push(LayerEntry {
                    kind: "fc_head".into(),
                    in_ch: *in_channels,
                    out_ch: *out_dim,
                    padding: None,
                    relu: None,
                    pool: None,
                    spatial: Some(*spatial),
                    hidden: Some(hidden.clone()),
                    weight_offset: offset,
                    weight_count: count,
                });
            }
            LayerSpec::Dense {
                in_dim,
                out_dim,
                weights,
            } => {
                push_f32s(&mut blob, weights);
                entries.push(LayerEntry {
                    kind: "dense".into(),
                    in_ch: *in_dim,
                    out_ch: *out_dim,
                    padding: None,
                    relu: None,
                    pool: None,
                    spatial: None,
                    hidden: None,
                    weight_offset: offset,
                    weight_count: count,
                });
            }
        }
        offset += count;
    }

    let doc = ManifestDoc {
        version: MANIFEST_VERSION,
        quantized: false,
        input_shape: [g.input_shape.0, g.input_shape.1, g.input_shape.2],
        input_scale: g.input_scale,
        format_params: g.params,
        blob: blob_name.clone(),
        layers: entries,
    };
    write_bundle_files(manifest_path, &doc, &blob)
}

/// Saves a quantized bundle: coefficient words then f32 biases per layer.
pub fn save_quant_model(m: &QuantModel, manifest_path: &Path) -> Result<()> {
    m.validate()?;
    let blob_name = blob_name_for(manifest_path)?;

    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(m.layers.len());
    let mut offset = 0u64;
    for layer in &m.layers {
        let k = &layer.kernels;
        for o in 0..k.out_channels {
            for i in 0..k.in_channels {
                let block = k.block(o, i);
                for row in block {
                    for code in row {
                        blob.extend_from_slice(&code.to_word().to_le_bytes());
                    }
                }
            }
        }
        push_f32s(&mut blob, &k.bias);
        let count = (k.out_channels * k.in_channels * 9 + k.out_channels) as u64;
        entries.push(LayerEntry {
            kind: "conv3x3".into(),
            in_ch: k.in_channels,
            out_ch: k.out_channels,
            padding: Some(padding_str(layer.padding).into()),
            relu: Some(layer.relu),
            pool: Some(layer.pool),
            spatial: None,
            hidden: None,
            weight_offset: offset,
            weight_count: count,
        });
        offset += count;
    }

    let doc = ManifestDoc {
        version: MANIFEST_VERSION,
        quantized: true,
        input_shape: [m.input_shape.0, m.input_shape.1, m.input_shape.2],
        input_scale: m.input_scale,
        format_params: m.params,
        blob: blob_name.clone(),
        layers: entries,
    };
    write_bundle_files(manifest_path, &doc, &blob)
}

fn blob_name_for(manifest_path: &Path) -> Result<String> {
    let stem = manifest_path
        .file_stem()
        .ok_or_else(|| Error::Bundle("manifest path has no file name".into()))?;
    Ok(format!("{}.bin", stem.to_string_lossy()))
}

fn write_bundle_files(manifest_path: &Path, doc: &ManifestDoc, blob: &[u8]) -> Result<()> {
    let manifest_json = serde_json::to_string_pretty(doc)?;
    let blob_path = manifest_path
        .parent()
        .map(|p| p.join(&doc.blob))
        .unwrap_or_else(|| PathBuf::from(&doc.blob));
    write_atomic(&blob_path, blob)?;
    write_atomic(manifest_path, manifest_json.as_bytes())?;
    Ok(())
}

/// Loads either flavor of bundle. When `blob_path` is `None`, the blob named
/// by the manifest is resolved relative to the manifest's directory.
pub fn load_model(manifest_path: &Path, blob_path: Option<&Path>) -> Result<Bundle> {
    let manifest_text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::Bundle(format!("cannot read manifest {}: {e}", manifest_path.display())))?;
    let doc: ManifestDoc = serde_json::from_str(&manifest_text)?;
    if doc.version != MANIFEST_VERSION {
        return Err(Error::Bundle(format!(
            "unsupported manifest version {}",
            doc.version
        )));
    }
    doc.format_params.validate()?;
    let resolved;
    let blob_path = match blob_path {
        Some(p) => p,
        None => {
            resolved = manifest_path
                .parent()
                .map(|p| p.join(&doc.blob))
                .unwrap_or_else(|| PathBuf::from(&doc.blob));
            &resolved
        }
    };
    let blob = fs::read(blob_path)
        .map_err(|e| Error::Bundle(format!("cannot read blob {}: {e}", blob_path.display())))?;

    let input_shape = (doc.input_shape[0], doc.input_shape[1], doc.input_shape[2]);
    if doc.quantized {
        let model = read_quant_layers(&doc, &blob)?;
        let m = QuantModel {
            input_shape,
            layers: model,
            params: doc.format_params,
            input_scale: doc.input_scale,
        };
        m.validate()?;
        Ok(Bundle::Quantized(m))
    } else {
        let layers = read_float_layers(&doc, &blob)?;
        let g = ModelGraph {
            input_shape,
            layers,
            params: doc.format_params,
            input_scale: doc.input_scale,
        };
        g.validate()?;
        Ok(Bundle::Float(g))
    }
}

fn read_float_layers(doc: &ManifestDoc, blob: &[u8]) -> Result<Vec<LayerSpec>> {
    if !blob.len().is_multiple_of(4) {
        return Err(Error::Bundle(format!(
            "float blob length {} is not a multiple of 4",
            blob.len()
        )));
    }
    let mut rd = F32Reader { bytes: blob, pos: 0 };
    let mut layers = Vec::with_capacity(doc.layers.len());
    let mut offset = 0u64;
    for entry in &doc.layers {
        if entry.weight_offset != offset {
            return Err(Error::Bundle(format!(
                "layer {:?} declares offset {}, expected {}",
                entry.kind, entry.weight_offset, offset
            )));
        }
        let layer = match entry.kind.as_str() {
            "conv3x3" => {
                let weights = rd.take(entry.out_ch * entry.in_ch * 9)?;
                let bias = rd.take(entry.out_ch)?;
                LayerSpec::Conv3x3 {
                    padding: parse_padding(entry.padding.as_deref().unwrap_or("same"))?,
                    relu: entry.relu.unwrap_or(true),
                    pool: entry.pool.unwrap_or(false),
                    weights: KernelStack::new(entry.out_ch, entry.in_ch, weights, bias)?,
                }
            }
            "shortcut" => {
                let n = entry.in_ch;
                let w1w = rd.take(n * n * 9)?;
                let w1b = rd.take(n)?;
                let w2w = rd.take(n * n * 9)?;
                let w2b = rd.take(n)?;
                LayerSpec::ShortcutBlock {
                    w1: KernelStack::new(n, n, w1w, w1b)?,
                    w2: KernelStack::new(n, n, w2w, w2b)?,
                }
            }
            "depthwise_separable" => {
                let p = entry.in_ch;
                let q = entry.out_ch;
                let mut depthwise = Vec::with_capacity(p);
                for _ in 0..p {
                    let k = rd.take(9)?;
                    let mut arr = [0.0; 9];
                    arr.copy_from_slice(&k);
                    depthwise.push(arr);
                }
                let pointwise = rd.take(q * p)?;
                LayerSpec::DepthwiseSeparable {
                    depthwise,
                    pointwise,
                    out_channels: q,
                }
            }
            "fc_head" => {
                let spatial = entry.spatial.ok_or_else(|| {
                    Error::Bundle("fc_head entry is missing the spatial field".into())
                })?;
                let hidden = entry.hidden.clone().unwrap_or_default();
                let stages = fc_head_stages(spatial, entry.in_ch, &hidden, entry.out_ch)?;
                let weights = if entry.weight_count > 0 {
                    let mut stacks = Vec::with_capacity(stages.len());
                    for s in &stages {
                        let w = rd.take(s.out_channels * s.in_channels * 9)?;
                        let b = rd.take(s.out_channels)?;
                        stacks.push(KernelStack::new(s.out_channels, s.in_channels, w, b)?);
                    }
                    Some(stacks)
                } else {
                    None
                };
                LayerSpec::FCHead {
                    spatial,
                    in_channels: entry.in_ch,
                    hidden,
                    out_dim: entry.out_ch,
                    weights,
                }
            }
            "dense" => {
                let weights = rd.take(entry.in_ch * entry.out_ch)?;
                LayerSpec::Dense {
                    in_dim: entry.in_ch,
                    out_dim: entry.out_ch,
                    weights,
                }
            }
            other => {
                return Err(Error::Bundle(format!("unknown layer kind {other:?}")));
            }
        };
        let count = float_element_count(&layer);
        if count != entry.weight_count {
            return Err(Error::Bundle(format!(
                "layer {:?} declares {} elements, expected {}",
                entry.kind, entry.weight_count, count
            )));
        }
        offset += count;
        layers.push(layer);
    }
    if rd.pos != blob.len() {
        return Err(Error::Bundle(format!(
            "weight blob has {} trailing bytes",
            blob.len() - rd.pos
        )));
    }
    Ok(layers)
}

fn read_quant_layers(doc: &ManifestDoc, blob: &[u8]) -> Result<Vec<QuantLayer>> {
    let mut pos = 0usize;
    let mut layers = Vec::with_capacity(doc.layers.len());
    let mut offset = 0u64;
    for entry in &doc.layers {
        if entry.kind != "conv3x3" {
            return Err(Error::Bundle(format!(
                "quantized bundle contains non-conv layer kind {:?}",
                entry.kind
            )));
        }
        if entry.weight_offset != offset {
            return Err(Error::Bundle(format!(
                "quantized layer declares offset {}, expected {}",
                entry.weight_offset, offset
            )));
        }
        let n_words = entry.out_ch * entry.in_ch * 9;
        let need = n_words * 2 + entry.out_ch * 4;
        if pos + need > blob.len() {
            return Err(Error::Bundle(format!(
                "quantized blob too short: need {} more bytes at offset {}",
                need, pos
            )));
        }
        let mut blocks = Vec::with_capacity(entry.out_ch * entry.in_ch);
        for _ in 0..entry.out_ch * entry.in_ch {
            let mut block = [[CoefCode::ZERO; 3]; 3];
            for row in block.iter_mut() {
                for cell in row.iter_mut() {
                    let word = u16::from_le_bytes([blob[pos], blob[pos + 1]]);
                    *cell = CoefCode::from_word(word)?;
                    pos += 2;
                }
            }
            blocks.push(block);
        }
        let mut bias = Vec::with_capacity(entry.out_ch);
        for _ in 0..entry.out_ch {
            bias.push(f32::from_le_bytes([
                blob[pos],
                blob[pos + 1],
                blob[pos + 2],
                blob[pos + 3],
            ]) as f64);
            pos += 4;
        }
        layers.push(QuantLayer {
            padding: parse_padding(entry.padding.as_deref().unwrap_or("same"))?,
            relu: entry.relu.unwrap_or(true),
            pool: entry.pool.unwrap_or(false),
            kernels: QuantKernels {
                out_channels: entry.out_ch,
                in_channels: entry.in_ch,
                blocks,
                bias,
            },
        });
        offset += (n_words + entry.out_ch) as u64;
    }
    if pos != blob.len() {
        return Err(Error::Bundle(format!(
            "quantized blob has {} trailing bytes",
            blob.len() - pos
        )));
    }
    Ok(layers)
}

/// Reads the activation dump format (see `docs/formats.md`).
pub fn parse_act_words(words: &[u16], signed_mode: bool) -> Result<Vec<ActCode>> {
    words
        .iter()
        .map(|&w| ActCode::from_word(w, signed_mode))
        .collect()
}
