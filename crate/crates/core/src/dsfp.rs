//! The accelerator's number formats and exact arithmetic.
//!
//! Activations occupy 9 bits: a 5-bit mantissa and a 4-bit exponent with no
//! implicit leading bit, so a code decodes to `m * 2^(e - act_bias)`. Layers
//! whose outputs can be negative use a signed variant that repurposes one
//! mantissa bit as a sign (sign + 4-bit mantissa + 4-bit exponent, still 9
//! bits). Coefficients occupy 15 bits: sign, 12-bit mantissa, 2-bit exponent,
//! decoding to `±m * 2^(e - coef_bias)`.
//!
//! Multiply-accumulate is exact: each product is an integer at the fixed
//! scale `2^-(act_bias + coef_bias)` and is summed into a 64-bit accumulator,
//! so layer results are bit-reproducible under any summation order. Rounding
//! back to a code happens once per layer output in [`requantize`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest activation mantissa in unsigned mode (5 bits).
pub const ACT_MANTISSA_MAX: u8 = 31;
/// Largest activation mantissa in signed mode (4 bits; the fifth bit holds the sign).
pub const ACT_SIGNED_MANTISSA_MAX: u8 = 15;
/// Largest activation exponent (4 bits).
pub const ACT_EXPONENT_MAX: u8 = 15;
/// Largest coefficient mantissa (12 bits).
pub const COEF_MANTISSA_MAX: u16 = 4095;
/// Largest coefficient exponent (2 bits).
pub const COEF_EXPONENT_MAX: u8 = 3;

/// Exponent biases shared by every layer of a compiled model.
///
/// The defaults put the unsigned activation range at `[2^-12, 248]` and the
/// coefficient range at `±[2^-14, ~2.0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatParams {
    pub act_bias: i32,
    pub coef_bias: i32,
}

impl Default for FormatParams {
    fn default() -> Self {
        FormatParams {
            act_bias: 12,
            coef_bias: 14,
        }
    }
}

impl FormatParams {
    /// Rejects biases large enough to overflow the power-of-two scaling.
    pub fn validate(&self) -> Result<()> {
        for bias in [self.act_bias, self.coef_bias] {
            if !(-64..=64).contains(&bias) {
                return Err(Error::Bundle(format!(
                    "exponent bias {bias} out of the supported range [-64, 64]"
                )));
            }
        }
        Ok(())
    }
}

/// A 9-bit activation code.
///
/// `negative` is only ever set by signed-mode encoding, where the mantissa is
/// restricted to 4 bits. Zero has the unique canonical form `(+, m=0, e=0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActCode {
    pub negative: bool,
    pub mantissa: u8,
    pub exponent: u8,
}

impl ActCode {
    /// Canonical zero.
    pub const ZERO: ActCode = ActCode {
        negative: false,
        mantissa: 0,
        exponent: 0,
    };

    /// Exact decoded value `±m * 2^(e - act_bias)`.
    pub fn value(self, p: FormatParams) -> f64 {
        let mag = self.mantissa as f64 * pow2(self.exponent as i32 - p.act_bias);
        if self.negative {
            -mag
        } else {
            mag
        }
    }

    /// Packs into the 16-bit dump word. Bits 15..9 are zero; bit 8 carries
    /// the sign in signed mode and the mantissa's fifth bit in unsigned
    /// mode; bits 7..4 hold the exponent and bits 3..0 the low mantissa
    /// nibble. See `docs/formats.md`.
    pub fn to_word(self, signed_mode: bool) -> u16 {
        let bit8 = if signed_mode {
            debug_assert!(self.mantissa <= ACT_SIGNED_MANTISSA_MAX);
            self.negative as u16
        } else {
            debug_assert!(!self.negative);
            (self.mantissa >> 4) as u16
        };
        (bit8 << 8) | ((self.exponent as u16) << 4) | (self.mantissa as u16 & 0xf)
    }

    /// Inverse of [`ActCode::to_word`]; rejects words with reserved bits set.
    pub fn from_word(word: u16, signed_mode: bool) -> Result<ActCode> {
        if word & !0x1ff != 0 {
            return Err(Error::Bundle(format!(
                "activation word {word:#06x} has reserved bits set"
            )));
        }
        let exponent = ((word >> 4) & 0xf) as u8;
        let low = (word & 0xf) as u8;
        let code = if signed_mode {
            ActCode {
                negative: word & 0x100 != 0,
                mantissa: low,
                exponent,
            }
        } else {
            ActCode {
                negative: false,
                mantissa: (((word >> 8) & 1) as u8) << 4 | low,
                exponent,
            }
        };
        Ok(code)
    }
}

/// A 15-bit filter coefficient code. Zero has the unique canonical form
/// `(+, m=0, e=0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoefCode {
    pub negative: bool,
    pub mantissa: u16,
    pub exponent: u8,
}

impl CoefCode {
    /// Canonical zero.
    pub const ZERO: CoefCode = CoefCode {
        negative: false,
        mantissa: 0,
        exponent: 0,
    };

    /// Exact decoded value `±m * 2^(e - coef_bias)`.
    pub fn value(self, p: FormatParams) -> f64 {
        let mag = self.mantissa as f64 * pow2(self.exponent as i32 - p.coef_bias);
        if self.negative {
            -mag
        } else {
            mag
        }
    }

    /// Packs into the 16-bit blob word: bit 15 zero, bit 14 sign,
    /// bits 13..2 mantissa, bits 1..0 exponent.
    pub fn to_word(self) -> u16 {
        ((self.negative as u16) << 14) | (self.mantissa << 2) | (self.exponent as u16)
    }

    /// Inverse of [`CoefCode::to_word`]; rejects words with bit 15 set.
    pub fn from_word(word: u16) -> Result<CoefCode> {
        if word & 0x8000 != 0 {
            return Err(Error::Bundle(format!(
                "coefficient word {word:#06x} has bit 15 set"
            )));
        }
        Ok(CoefCode {
            negative: word & 0x4000 != 0,
            mantissa: (word >> 2) & 0xfff,
            exponent: (word & 0x3) as u8,
        })
    }
}

/// Exact power of two (all intermediates are representable).
fn pow2(k: i32) -> f64 {
    f64::powi(2.0, k)
}

/// Nearest-code search shared by both formats.
///
/// Scans exponents from 0 upward and takes the first whose rounded mantissa
/// fits, which maximizes mantissa precision and therefore yields both the
/// nearest representable value and the canonical (minimum-exponent) form.
/// Values straddling a grid boundary resolve ties toward the even mantissa
/// of the next exponent. Magnitudes at or above the largest representable
/// value saturate.
fn encode_magnitude(x: f64, m_max: u32, e_max: u32, bias: i32) -> (u32, u32) {
    debug_assert!(x >= 0.0 && x.is_finite());
    let max_val = m_max as f64 * pow2(e_max as i32 - bias);
    if x >= max_val {
        return (m_max, e_max);
    }
    for e in 0..=e_max {
        let m = (x * pow2(bias - e as i32)).round_ties_even();
        if m <= m_max as f64 {
            return (m as u32, e);
        }
    }
    unreachable!("magnitude below saturation always fits at the top exponent")
}

/// Encodes a real activation to the nearest 9-bit code.
///
/// In unsigned mode negative inputs clamp to zero, matching unsigned
/// storage. In signed mode the mantissa is limited to 4 bits and the sign is
/// carried separately.
pub fn encode_activation(x: f64, p: FormatParams, signed: bool) -> Result<ActCode> {
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    let (negative, mag) = if signed {
        (x < 0.0, x.abs())
    } else {
        (false, x.max(0.0))
    };
    let m_max = if signed {
        ACT_SIGNED_MANTISSA_MAX
    } else {
        ACT_MANTISSA_MAX
    };
    let (m, e) = encode_magnitude(mag, m_max as u32, ACT_EXPONENT_MAX as u32, p.act_bias);
    if m == 0 {
        return Ok(ActCode::ZERO);
    }
    Ok(ActCode {
        negative,
        mantissa: m as u8,
        exponent: e as u8,
    })
}

/// Exact decode; never rounds.
pub fn decode_activation(c: ActCode, p: FormatParams) -> f64 {
    c.value(p)
}

/// Encodes a real weight to the nearest 15-bit coefficient code.
pub fn encode_coefficient(w: f64, p: FormatParams) -> Result<CoefCode> {
    if !w.is_finite() {
        return Err(Error::NonFinite);
    }
    let (m, e) = encode_magnitude(
        w.abs(),
        COEF_MANTISSA_MAX as u32,
        COEF_EXPONENT_MAX as u32,
        p.coef_bias,
    );
    if m == 0 {
        return Ok(CoefCode::ZERO);
    }
    Ok(CoefCode {
        negative: w < 0.0,
        mantissa: m as u16,
        exponent: e as u8,
    })
}

/// Exact decode; never rounds.
pub fn decode_coefficient(c: CoefCode, p: FormatParams) -> f64 {
    c.value(p)
}

/// Exact dot-product accumulator.
///
/// Holds a signed 64-bit integer interpreted at the fixed scale
/// `2^-(act_bias + coef_bias)`. Every MAC adds the integer
/// `±m_a * m_c * 2^(e_a + e_c)`, so accumulation is associative and
/// order-independent down to the bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accumulator(i64);

impl Accumulator {
    pub const ZERO: Accumulator = Accumulator(0);

    /// Raw integer at scale `2^-(act_bias + coef_bias)`.
    pub fn raw(self) -> i64 {
        self.0
    }

    /// Adds one activation-coefficient product.
    pub fn mac(self, a: ActCode, c: CoefCode) -> Result<Accumulator> {
        let mag = (a.mantissa as i64 * c.mantissa as i64) << (a.exponent + c.exponent);
        let inc = if a.negative != c.negative { -mag } else { mag };
        self.0
            .checked_add(inc)
            .map(Accumulator)
            .ok_or(Error::AccumulatorOverflow)
    }

    /// Decoded real value. Exact for any accumulation the formats can
    /// produce within 2^53 of the fixed scale.
    pub fn to_real(self, p: FormatParams) -> f64 {
        self.0 as f64 * pow2(-(p.act_bias + p.coef_bias))
    }
}

/// Rounds an accumulated layer output back to an activation code.
///
/// Adds the layer bias in real arithmetic, applies ReLU when requested, and
/// encodes the result: unsigned after ReLU, signed otherwise.
pub fn requantize(acc: Accumulator, bias_term: f64, relu: bool, p: FormatParams) -> Result<ActCode> {
    let v = acc.to_real(p) + bias_term;
    if relu {
        encode_activation(v.max(0.0), p, false)
    } else {
        encode_activation(v, p, true)
    }
}
