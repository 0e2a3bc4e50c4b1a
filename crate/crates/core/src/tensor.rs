//! Double-precision reference tensor operations.
//!
//! Everything here is the brute-force oracle the quantized and lowered paths
//! are compared against, so it stays deliberately simple: plain loops over
//! `[channel][row][col]` buffers, cross-correlation semantics (kernels are
//! not flipped), no strides, no kernel sizes other than 3x3.

use crate::{Error, Result};

/// Zero padding mode for 3x3 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero-pad by one pixel; output keeps the input's height and width.
    Same,
    /// No padding; output shrinks by two in each spatial dimension.
    Valid,
}

/// A dense real-valued feature map in `[channel][row][col]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape("feature map dimensions must be positive".into()));
        }
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "feature map expects {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.values[(c * self.height + r) * self.width + col]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, r: usize, col: usize) -> &mut f64 {
        &mut self.values[(c * self.height + r) * self.width + col]
    }

    /// Input pixel with zero padding outside the image.
    #[inline]
    fn padded(&self, c: usize, r: isize, col: isize) -> f64 {
        if r < 0 || col < 0 || r as usize >= self.height || col as usize >= self.width {
            0.0
        } else {
            self.at(c, r as usize, col as usize)
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// A stack of 3x3 kernels in `[out][in][row][col]` order plus one bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    pub out_channels: usize,
    pub in_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl KernelStack {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Shape("kernel stack channels must be positive".into()));
        }
        if weights.len() != out_channels * in_channels * 9 {
            return Err(Error::Shape(format!(
                "kernel stack expects {} weights, got {}",
                out_channels * in_channels * 9,
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "kernel stack expects {} biases, got {}",
                out_channels,
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(KernelStack {
            out_channels,
            in_channels,
            weights,
            bias,
        })
    }

    /// All-zero kernels and biases.
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        KernelStack {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize, kr: usize, kc: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + kr) * 3 + kc]
    }

    #[inline]
    pub fn tap_mut(&mut self, o: usize, i: usize, kr: usize, kc: usize) -> &mut f64 {
        &mut self.weights[((o * self.in_channels + i) * 3 + kr) * 3 + kc]
    }
}

/// Reference 3x3 convolution (cross-correlation; kernels are not flipped).
pub fn conv3x3(fm: &FeatureMap, k: &KernelStack, padding: Padding) -> Result<FeatureMap> {
    if fm.channels != k.in_channels {
        return Err(Error::Shape(format!(
            "conv3x3: input has {} channels, kernels expect {}",
            fm.channels, k.in_channels
        )));
    }
    let (out_h, out_w, off) = match padding {
        Padding::Same => (fm.height, fm.width, -1isize),
        Padding::Valid => {
            if fm.height < 3 || fm.width < 3 {
                return Err(Error::Shape(format!(
                    "conv3x3 valid: input {}x{} is smaller than the kernel",
                    fm.height, fm.width
                )));
            }
            (fm.height - 2, fm.width - 2, 0isize)
        }
    };
    let mut out = FeatureMap::zeros(k.out_channels, out_h, out_w);
    for o in 0..k.out_channels {
        for r in 0..out_h {
            for c in 0..out_w {
                let mut sum = k.bias[o];
                for i in 0..fm.channels {
                    for kr in 0..3usize {
                        for kc in 0..3usize {
                            let v = fm.padded(i, r as isize + off + kr as isize, c as isize + off + kc as isize);
                            sum += v * k.tap(o, i, kr, kc);
                        }
                    }
                }
                *out.at_mut(o, r, c) = sum;
            }
        }
    }
    Ok(out)
}

/// Elementwise `max(0, x)`.
pub fn relu(fm: &FeatureMap) -> FeatureMap {
    FeatureMap {
        channels: fm.channels,
        height: fm.height,
        width: fm.width,
        values: fm.values.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// 2x2 stride-2 max pooling; requires even height and width.
pub fn maxpool2x2(fm: &FeatureMap) -> Result<FeatureMap> {
    if !fm.height.is_multiple_of(2) || !fm.width.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "maxpool2x2: spatial size {}x{} is not even",
            fm.height, fm.width
        )));
    }
    let (oh, ow) = (fm.height / 2, fm.width / 2);
    let mut out = FeatureMap::zeros(fm.channels, oh, ow);
    for c in 0..fm.channels {
        for r in 0..oh {
            for col in 0..ow {
                let m = fm
                    .at(c, 2 * r, 2 * col)
                    .max(fm.at(c, 2 * r, 2 * col + 1))
                    .max(fm.at(c, 2 * r + 1, 2 * col))
                    .max(fm.at(c, 2 * r + 1, 2 * col + 1));
                *out.at_mut(c, r, col) = m;
            }
        }
    }
    Ok(out)
}

/// Elementwise sum of two identically shaped maps.
pub fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "add: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(FeatureMap {
        channels: a.channels,
        height: a.height,
        width: a.width,
        values: a
            .values
            .iter()
            .zip(b.values.iter())
            .map(|(&x, &y)| x + y)
            .collect(),
    })
}

/// Dense projection of a flattened map: `out[o] = sum_i w[o][i] * x[i]`.
///
/// Weights are in `[out][flattened input]` order with the input flattened as
/// `[channel][row][col]`.
pub fn inner_product(fm: &FeatureMap, weights: &[f64], out_dim: usize) -> Result<Vec<f64>> {
    let n = fm.values.len();
    if weights.len() != out_dim * n {
        return Err(Error::Shape(format!(
            "inner_product: expected {} weights for {} -> {}, got {}",
            out_dim * n,
            n,
            out_dim,
            weights.len()
        )));
    }
    Ok((0..out_dim)
        .map(|o| {
            fm.values
                .iter()
                .zip(&weights[o * n..(o + 1) * n])
                .map(|(&x, &w)| x * w)
                .sum()
        })
        .collect())
}
