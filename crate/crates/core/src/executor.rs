//! End-to-end inference: tiling full images onto the ring, the float
//! reference path, and output comparison.
//!
//! Quantized execution follows the device's load-then-stream protocol: the
//! quantized bundle (coefficients) is fully loaded before any image data
//! streams through. Each layer tiles its input into 14x14-output tiles with
//! 16x16 halo windows, runs every tile through the scheduled ring, and
//! reassembles. Halo pixels outside the image are zeros, which reproduces
//! same-padding convolution exactly under tiling; edge tiles are computed
//! full-size and cropped. Pooling runs after reassembly so tiles never
//! straddle a pooling window.

use std::fs;
use std::path::Path;

use crate::dsfp::{self, ActCode, FormatParams};
use crate::engine::{self, ImageryTile, RingOptions, OUTPUT_TILE};
use crate::graph::{
    fc_head_stages, write_atomic, LayerSpec, ModelGraph, QuantLayer, QuantModel,
};
use crate::layout::{plan_layout, LayoutPlan, DEFAULT_RING_ENGINES};
use crate::tensor::{self, FeatureMap, KernelStack, Padding};
use crate::{Error, Result};

/// A quantized feature map: activation codes in `[channel][row][col]`
/// order. `signed` records which 9-bit mode the codes use (the producing
/// layer's ReLU flag decides).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub codes: Vec<ActCode>,
    pub signed: bool,
}

impl QuantMap {
    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> ActCode {
        self.codes[(c * self.height + r) * self.width + col]
    }

    /// Code at a possibly out-of-range position; zeros outside the map.
    #[inline]
    fn padded(&self, c: usize, r: isize, col: isize) -> ActCode {
        if r < 0 || col < 0 || r as usize >= self.height || col as usize >= self.width {
            ActCode::ZERO
        } else {
            self.at(c, r as usize, col as usize)
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Exact decode to the real domain.
    pub fn decode(&self, params: FormatParams) -> FeatureMap {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self
                .codes
                .iter()
                .map(|&c| dsfp::decode_activation(c, params))
                .collect(),
        }
    }
}

/// Encodes a preprocessed (already scaled) image as unsigned activations.
pub fn quantize_input(input: &FeatureMap, params: FormatParams) -> Result<QuantMap> {
    let codes = input
        .values
        .iter()
        .map(|&v| dsfp::encode_activation(v, params, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantMap {
        channels: input.channels,
        height: input.height,
        width: input.width,
        codes,
        signed: false,
    })
}

/// Tile grid covering an `out_h x out_w` layer output.
pub fn tile_grid(out_h: usize, out_w: usize) -> (usize, usize) {
    (out_h.div_ceil(OUTPUT_TILE), out_w.div_ceil(OUTPUT_TILE))
}

/// Number of ring passes a layer of the given output size needs.
pub fn tile_count(out_h: usize, out_w: usize) -> usize {
    let (r, c) = tile_grid(out_h, out_w);
    r * c
}

fn conv_output_shape(input: &QuantMap, layer: &QuantLayer) -> Result<(usize, usize)> {
    if layer.kernels.in_channels != input.channels {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {}",
            layer.kernels.in_channels, input.channels
        )));
    }
    match layer.padding {
        Padding::Same => Ok((input.height, input.width)),
        Padding::Valid => {
            if input.height < 3 || input.width < 3 {
                return Err(Error::Shape(format!(
                    "valid conv needs at least 3x3 input, got {}x{}",
                    input.height, input.width
                )));
            }
            Ok((input.height - 2, input.width - 2))
        }
    }
}

/// Cuts the 16x16 halo windows for one spatial tile position, one imagery
/// tile per input channel. `origin` is the window's top-left corner in
/// input coordinates (may be negative for same padding).
fn cut_tiles(input: &QuantMap, origin: (isize, isize)) -> Vec<ImageryTile> {
    (0..input.channels)
        .map(|c| {
            ImageryTile::from_fn(c, |r, col| {
                input.padded(c, origin.0 + r as isize, origin.1 + col as isize)
            })
        })
        .collect()
}

/// Runs one convolution layer by tiling the input onto the ring.
///
/// Requantization (with the layer bias and ReLU) happens inside the ring
/// pass; pooling is left to the caller. Tiles may be computed on `threads`
/// worker threads; results are written in row-major tile order and are
/// bit-identical to the single-threaded run.
pub fn conv_layer_tiled(
    input: &QuantMap,
    layer: &QuantLayer,
    plan: &LayoutPlan,
    params: FormatParams,
    threads: usize,
) -> Result<QuantMap> {
    let (out_h, out_w) = conv_output_shape(input, layer)?;
    let (tiles_r, tiles_c) = tile_grid(out_h, out_w);
    let n_tiles = tiles_r * tiles_c;
    let threads = threads.max(1).min(n_tiles);

    let run_tile = |idx: usize| -> Result<Vec<engine::OutTile>> {
        let tr = idx / tiles_c;
        let tc = idx % tiles_c;
        let off = match layer.padding {
            Padding::Same => -1isize,
            Padding::Valid => 0,
        };
        let origin = (
            (tr * OUTPUT_TILE) as isize + off,
            (tc * OUTPUT_TILE) as isize + off,
        );
        let tiles = cut_tiles(input, origin);
        let opts = RingOptions {
            relu: layer.relu,
            pool: false,
            trace: false,
        };
        Ok(engine::ring_convolve(plan, &tiles, &layer.kernels, params, opts)?.filters)
    };

    let mut results: Vec<Option<Vec<engine::OutTile>>> = vec![None; n_tiles];
    if threads <= 1 {
        for (idx, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_tile(idx)?);
        }
    } else {
        let outcomes = std::thread::scope(|scope| {
            let workers: Vec<_> = (0..threads)
                .map(|w| {
                    let run_tile = &run_tile;
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        let mut idx = w;
                        while idx < n_tiles {
                            out.push((idx, run_tile(idx)));
                            idx += threads;
                        }
                        out
                    })
                })
                .collect();
            workers
                .into_iter()
                .flat_map(|h| h.join().expect("tile worker panicked"))
                .collect::<Vec<_>>()
        });
        for (idx, outcome) in outcomes {
            results[idx] = Some(outcome?);
        }
    }

    let out_ch = layer.kernels.out_channels;
    let mut codes = vec![ActCode::ZERO; out_ch * out_h * out_w];
    for (idx, filters) in results.into_iter().enumerate() {
        let filters = filters.expect("every tile computed");
        let tr = idx / tiles_c;
        let tc = idx % tiles_c;
        let rows = OUTPUT_TILE.min(out_h - tr * OUTPUT_TILE);
        let cols = OUTPUT_TILE.min(out_w - tc * OUTPUT_TILE);
        for tile in &filters {
            let f = tile.filter;
            for r in 0..rows {
                for c in 0..cols {
                    let gr = tr * OUTPUT_TILE + r;
                    let gc = tc * OUTPUT_TILE + c;
                    codes[(f * out_h + gr) * out_w + gc] = tile.at(r, c);
                }
            }
        }
    }

    Ok(QuantMap {
        channels: out_ch,
        height: out_h,
        width: out_w,
        codes,
        signed: !layer.relu,
    })
}

/// Untiled, un-ringed execution of one layer over the whole image: the
/// oracle for tiling transparency. Same exact MAC arithmetic, plain loops.
pub fn conv_layer_direct(
    input: &QuantMap,
    layer: &QuantLayer,
    params: FormatParams,
) -> Result<QuantMap> {
    let (out_h, out_w) = conv_output_shape(input, layer)?;
    let off = match layer.padding {
        Padding::Same => -1isize,
        Padding::Valid => 0,
    };
    let out_ch = layer.kernels.out_channels;
    let mut codes = Vec::with_capacity(out_ch * out_h * out_w);
    for f in 0..out_ch {
        for r in 0..out_h {
            for c in 0..out_w {
                let mut acc = dsfp::Accumulator::ZERO;
                for i in 0..input.channels {
                    let block = layer.kernels.block(f, i);
                    for (kr, block_row) in block.iter().enumerate() {
                        for (kc, &coef) in block_row.iter().enumerate() {
                            let a = input.padded(
                                i,
                                r as isize + off + kr as isize,
                                c as isize + off + kc as isize,
                            );
                            acc = acc.mac(a, coef)?;
                        }
                    }
                }
                codes.push(dsfp::requantize(
                    acc,
                    layer.kernels.bias[f],
                    layer.relu,
                    params,
                )?);
            }
        }
    }
    Ok(QuantMap {
        channels: out_ch,
        height: out_h,
        width: out_w,
        codes,
        signed: !layer.relu,
    })
}

/// 2x2 stride-2 max pooling over codes, comparing decoded values.
pub fn pool_quant(input: &QuantMap, params: FormatParams) -> Result<QuantMap> {
    if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "2x2 pooling needs even spatial size, got {}x{}",
            input.height, input.width
        )));
    }
    let (oh, ow) = (input.height / 2, input.width / 2);
    let mut codes = Vec::with_capacity(input.channels * oh * ow);
    for c in 0..input.channels {
        for r in 0..oh {
            for col in 0..ow {
                let quad = [
                    input.at(c, 2 * r, 2 * col),
                    input.at(c, 2 * r, 2 * col + 1),
                    input.at(c, 2 * r + 1, 2 * col),
                    input.at(c, 2 * r + 1, 2 * col + 1),
                ];
                codes.push(engine::max_code(&quad, params));
            }
        }
    }
    Ok(QuantMap {
        channels: input.channels,
        height: oh,
        width: ow,
        codes,
        signed: input.signed,
    })
}

/// Full quantized inference of a loaded bundle on one preprocessed image.
pub fn run_quantized(model: &QuantModel, input: &FeatureMap, threads: usize) -> Result<QuantMap> {
    if input.shape() != model.input_shape {
        return Err(Error::Shape(format!(
            "image shape {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape
        )));
    }
    let mut current = quantize_input(input, model.params)?;
    for layer in &model.layers {
        let plan = plan_layout(
            layer.kernels.in_channels,
            layer.kernels.out_channels,
            DEFAULT_RING_ENGINES,
        )?;
        current = conv_layer_tiled(&current, layer, &plan, model.params, threads)?;
        if layer.pool {
            current = pool_quant(&current, model.params)?;
        }
    }
    Ok(current)
}

/// Pure double-precision execution of any validated graph; composite layers
/// run by their direct formulas.
pub fn run_reference(g: &ModelGraph, input: &FeatureMap) -> Result<FeatureMap> {
    if input.shape() != g.input_shape {
        return Err(Error::Shape(format!(
            "image shape {:?} does not match model input {:?}",
            input.shape(),
            g.input_shape
        )));
    }
    g.validate()?;
    let mut cur = input.clone();
    for layer in &g.layers {
        cur = reference_layer(layer, &cur)?;
    }
    Ok(cur)
}

fn reference_layer(layer: &LayerSpec, x: &FeatureMap) -> Result<FeatureMap> {
    match layer {
        LayerSpec::Conv3x3 {
            padding,
            relu,
            pool,
            weights,
        } => {
            let mut y = tensor::conv3x3(x, weights, *padding)?;
            if *relu {
                y = tensor::relu(&y);
            }
            if *pool {
                y = tensor::maxpool2x2(&y)?;
            }
            Ok(y)
        }
        LayerSpec::ShortcutBlock { w1, w2 } => {
            let inner = tensor::relu(&tensor::conv3x3(x, w1, Padding::Same)?);
            let outer = tensor::conv3x3(&inner, w2, Padding::Same)?;
            Ok(tensor::relu(&tensor::add(x, &outer)?))
        }
        LayerSpec::DepthwiseSeparable {
            depthwise,
            pointwise,
            out_channels,
        } => {
            let p = depthwise.len();
            let q = *out_channels;
            let mut filtered = FeatureMap::zeros(p, x.height, x.width);
            for (ch, kernel) in depthwise.iter().enumerate() {
                for r in 0..x.height {
                    for c in 0..x.width {
                        let mut sum = 0.0;
                        for kr in 0..3isize {
                            for kc in 0..3isize {
                                let ir = r as isize + kr - 1;
                                let ic = c as isize + kc - 1;
                                if ir < 0
                                    || ic < 0
                                    || ir >= x.height as isize
                                    || ic >= x.width as isize
                                {
                                    continue;
                                }
                                sum += x.at(ch, ir as usize, ic as usize)
                                    * kernel[(kr * 3 + kc) as usize];
                            }
                        }
                        *filtered.at_mut(ch, r, c) = sum;
                    }
                }
            }
            let mut out = FeatureMap::zeros(q, x.height, x.width);
            for o in 0..q {
                for ch in 0..p {
                    let y = pointwise[o * p + ch];
                    for r in 0..x.height {
                        for c in 0..x.width {
                            *out.at_mut(o, r, c) += y * filtered.at(ch, r, c);
                        }
                    }
                }
            }
            Ok(out)
        }
        LayerSpec::FCHead {
            spatial,
            in_channels,
            hidden,
            out_dim,
            weights,
        } => {
            let stages = fc_head_stages(*spatial, *in_channels, hidden, *out_dim)?;
            let mut cur = x.clone();
            for (i, stage) in stages.iter().enumerate() {
                let stack = match weights {
                    Some(stacks) => stacks[i].clone(),
                    None => KernelStack::zeros(stage.out_channels, stage.in_channels),
                };
                cur = tensor::conv3x3(&cur, &stack, Padding::Valid)?;
                if stage.relu {
                    cur = tensor::relu(&cur);
                }
            }
            Ok(cur)
        }
        LayerSpec::Dense {
            in_dim: _,
            out_dim,
            weights,
        } => {
            let values = tensor::inner_product(x, weights, *out_dim)?;
            FeatureMap::new(*out_dim, 1, 1, values)
        }
    }
}

/// Elementwise error statistics between two identically shaped maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs: f64,
    pub max_rel: f64,
    pub mean_abs: f64,
    /// Defined for 1x1xK outputs: do the channel argmaxes agree?
    pub argmax_agree: Option<bool>,
}

/// Compares two feature maps elementwise.
pub fn compare(a: &FeatureMap, b: &FeatureMap) -> Result<ErrorReport> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "compare: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut sum_abs = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        max_abs = max_abs.max(d);
        sum_abs += d;
        let denom = x.abs().max(y.abs());
        if denom > 0.0 {
            max_rel = max_rel.max(d / denom);
        }
    }
    let argmax_agree = (a.height == 1 && a.width == 1).then(|| {
        let argmax = |m: &FeatureMap| {
            m.values
                .iter()
                .enumerate()
                .max_by(|(_, x), (_, y)| x.partial_cmp(y).expect("finite values"))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        argmax(a) == argmax(b)
    });
    Ok(ErrorReport {
        max_abs,
        max_rel,
        mean_abs: sum_abs / a.values.len() as f64,
        argmax_agree,
    })
}

// ---------------------------------------------------------------------------
// Image input
// ---------------------------------------------------------------------------

/// Loads an image as a scaled feature map.
///
/// Accepts binary PGM (`P5`, one channel) and PPM (`P6`, three channels)
/// with maxval <= 255, or a raw tensor file whose first line is ASCII
/// `C H W` followed by `C*H*W` raw bytes in `[channel][row][col]` order.
/// Every 8-bit sample is multiplied by `scale`.
pub fn load_image(path: &Path, scale: f64) -> Result<FeatureMap> {
    let bytes = fs::read(path).map_err(|e| Error::Image(format!("cannot read {}: {e}", path.display())))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        parse_pnm(&bytes, scale)
    } else {
        parse_raw_tensor(&bytes, scale)
    }
}

fn parse_pnm(bytes: &[u8], scale: f64) -> Result<FeatureMap> {
    let channels = if bytes.starts_with(b"P5") { 1 } else { 3 };
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Image("truncated PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Image("malformed PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are utf-8")
            .parse()
            .map_err(|_| Error::Image("malformed PNM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!(
            "unsupported PNM maxval {maxval} (only 8-bit samples)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Image("malformed PNM header".into())),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= bytes.len())
        .ok_or_else(|| Error::Image("PNM dimensions exceed the file size".into()))?;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Image(format!("PNM raster truncated: need {need} bytes")))?;

    // PNM interleaves samples per pixel; deinterleave to [channel][row][col]
    let mut values = vec![0.0; need];
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                let v = raster[(r * width + c) * channels + ch] as f64 * scale;
                values[(ch * height + r) * width + c] = v;
            }
        }
    }
    FeatureMap::new(channels, height, width, values)
}

fn parse_raw_tensor(bytes: &[u8], scale: f64) -> Result<FeatureMap> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Image("raw tensor file is missing the shape header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Image("raw tensor header is not UTF-8".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Image(format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    let [c, h, w] = dims[..] else {
        return Err(Error::Image(format!(
            "raw tensor header needs 3 dimensions, got {}",
            dims.len()
        )));
    };
    let data = &bytes[newline + 1..];
    let need = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| Error::Image("raw tensor dimensions overflow".into()))?;
    if data.len() != need {
        return Err(Error::Image(format!(
            "raw tensor expects {need} bytes, got {}",
            data.len()
        )));
    }
    let values = data.iter().map(|&b| b as f64 * scale).collect();
    FeatureMap::new(c, h, w, values)
}

// ---------------------------------------------------------------------------
// Feature dumps
// ---------------------------------------------------------------------------

/// A feature file payload: either activation codes (quantized runs) or raw
/// f32 values (reference runs).
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Quantized { map: QuantMap, act_bias: i32 },
    Real(FeatureMap),
}

impl Features {
    /// Decodes to the real domain (exact for code payloads).
    pub fn to_real(&self) -> FeatureMap {
        match self {
            Features::Quantized { map, act_bias } => map.decode(FormatParams {
                act_bias: *act_bias,
                ..FormatParams::default()
            }),
            Features::Real(fm) => fm.clone(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            Features::Quantized { map, .. } => map.shape(),
            Features::Real(fm) => fm.shape(),
        }
    }
}

/// Writes a feature dump (see `docs/formats.md`): an ASCII header line
/// followed by little-endian 16-bit activation words or f32 values.
pub fn write_features(path: &Path, features: &Features) -> Result<()> {
    let mut bytes = Vec::new();
    match features {
        Features::Quantized { map, act_bias } => {
            let mode = if map.signed { 's' } else { 'u' };
            bytes.extend_from_slice(
                format!(
                    "dsafm 1 codes {mode} {} {} {} {act_bias}\n",
                    map.channels, map.height, map.width
                )
                .as_bytes(),
            );
            for &code in &map.codes {
                bytes.extend_from_slice(&code.to_word(map.signed).to_le_bytes());
            }
        }
        Features::Real(fm) => {
            bytes.extend_from_slice(
                format!("dsafm 1 f32 {} {} {}\n", fm.channels, fm.height, fm.width).as_bytes(),
            );
            for &v in &fm.values {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    write_atomic(path, &bytes)
}

/// Reads a feature dump written by [`write_features`].
pub fn read_features(path: &Path) -> Result<Features> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Bundle(format!("cannot read features {}: {e}", path.display())))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Bundle("feature file is missing its header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Bundle("feature header is not UTF-8".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let payload = &bytes[newline + 1..];
    match tokens.as_slice() {
        ["dsafm", "1", "codes", mode, c, h, w, act_bias] => {
            let signed = match *mode {
                "s" => true,
                "u" => false,
                other => {
                    return Err(Error::Bundle(format!("unknown code mode {other:?}")));
                }
            };
            let (c, h, w): (usize, usize, usize) = (
                parse_dim(c)?,
                parse_dim(h)?,
                parse_dim(w)?,
            );
            let act_bias: i32 = act_bias
                .parse()
                .map_err(|_| Error::Bundle("bad act_bias in feature header".into()))?;
            let n = c * h * w;
            if payload.len() != n * 2 {
                return Err(Error::Bundle(format!(
                    "feature payload expects {} bytes, got {}",
                    n * 2,
                    payload.len()
                )));
            }
            let codes = payload
                .chunks_exact(2)
                .map(|b| ActCode::from_word(u16::from_le_bytes([b[0], b[1]]), signed))
                .collect::<Result<Vec<_>>>()?;
            Ok(Features::Quantized {
                map: QuantMap {
                    channels: c,
                    height: h,
                    width: w,
                    codes,
                    signed,
                },
                act_bias,
            })
        }
        ["dsafm", "1", "f32", c, h, w] => {
            let (c, h, w): (usize, usize, usize) =
                (parse_dim(c)?, parse_dim(h)?, parse_dim(w)?);
            let n = c * h * w;
            if payload.len() != n * 4 {
                return Err(Error::Bundle(format!(
                    "feature payload expects {} bytes, got {}",
                    n * 4,
                    payload.len()
                )));
            }
            let values = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            Ok(Features::Real(FeatureMap::new(c, h, w, values)?))
        }
        _ => Err(Error::Bundle(format!("unrecognized feature header {header:?}"))),
    }
}

fn parse_dim(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Bundle(format!("bad dimension {s:?} in feature header")))
}
