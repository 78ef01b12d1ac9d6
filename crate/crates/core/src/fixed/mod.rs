//! Bit-exact Q5.7 golden model of the hardware inference datapath.
//!
//! Words are 12-bit two's complement: five integer bits (sign included),
//! seven fractional bits, so a word's value is `raw / 128` and the range is
//! `[-16, 15.9921875]`. Rounding is round-to-nearest with ties away from
//! zero everywhere — quantization and MAC rescale alike. Everything here is
//! integer arithmetic; an HDL implementation can be diffed against it word
//! for word.

pub mod export;
pub mod infer;

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::model::layers::Activation;
use crate::model::{ModelParams, ModelSpec, StageParams, StageSpec, IMAGE_SIDE, NUM_CLASSES};

pub use export::{export_roms, parse_word_hex, word_hex, write_test_vectors};
pub use infer::{evaluate_quantized, infer_staged, InferStats, InferTrace, RamImage};

/// One Q5.7 word. Stored in an `i16`; every producing operation saturates
/// into `[WORD_MIN, WORD_MAX]`.
pub type FixedWord = i16;

pub const FRAC_BITS: u32 = 7;
/// `1.0` in Q5.7.
pub const ONE: FixedWord = 1 << FRAC_BITS;
pub const WORD_MIN: FixedWord = -2048;
pub const WORD_MAX: FixedWord = 2047;

/// Saturation bookkeeping: how many of the values that passed through a
/// rounding step had to be clamped into the word range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantStats {
    pub total: usize,
    pub saturated: usize,
}

impl QuantStats {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.saturated as f64 / self.total as f64
        }
    }
}

/// Nearest Q5.7 word (ties away from zero), saturated into range.
pub fn quantize(x: f64) -> FixedWord {
    debug_assert!(x.is_finite());
    // f64::round is round-half-away-from-zero
    let r = (x * 128.0).round();
    r.clamp(WORD_MIN as f64, WORD_MAX as f64) as FixedWord
}

/// [`quantize`] that records saturation.
pub fn quantize_counting(x: f64, stats: &mut QuantStats) -> FixedWord {
    stats.total += 1;
    let r = (x * 128.0).round();
    if r < WORD_MIN as f64 || r > WORD_MAX as f64 {
        stats.saturated += 1;
    }
    quantize(x)
}

/// Exact real value of a word: `raw / 128`.
pub fn dequantize(w: FixedWord) -> f64 {
    w as f64 / 128.0
}

/// Exact product accumulation at scale `2^-14` (the product scale of two
/// Q5.7 words); the bias enters pre-shifted by 7 so it lives at the same
/// scale. A 64-bit accumulator keeps the operation total for arbitrary
/// in-range operands: 784 fully saturated products exceed what 32 bits
/// hold, even though values reachable on the real datapath stay far below
/// that.
pub fn mac_accumulate(weights: &[FixedWord], inputs: &[FixedWord], bias: FixedWord) -> i64 {
    debug_assert_eq!(weights.len(), inputs.len());
    let mut acc = (bias as i64) << FRAC_BITS;
    for (&w, &x) in weights.iter().zip(inputs) {
        acc += w as i64 * x as i64;
    }
    acc
}

/// Rescale an accumulator back to Q5.7: round `acc / 128` to nearest with
/// ties away from zero, then saturate. Returns the word and whether it
/// clamped.
pub fn rescale(acc: i64) -> (FixedWord, bool) {
    // integer division truncates toward zero, so biasing by half the
    // divisor in the sign direction rounds half away from zero
    let rounded = if acc >= 0 {
        (acc + 64) / 128
    } else {
        (acc - 64) / 128
    };
    if rounded < WORD_MIN as i64 || rounded > WORD_MAX as i64 {
        (
            rounded.clamp(WORD_MIN as i64, WORD_MAX as i64) as FixedWord,
            true,
        )
    } else {
        (rounded as FixedWord, false)
    }
}

/// One processing-element step: dot product plus bias, rescaled to Q5.7.
pub fn mac_dot(weights: &[FixedWord], inputs: &[FixedWord], bias: FixedWord) -> FixedWord {
    rescale(mac_accumulate(weights, inputs, bias)).0
}

/// Hardware tanh: `F(x) = sign(x)` for `|x| > 2`, else `(1 - |x|/4)·x`,
/// evaluated in integer form with one final rounding.
///
/// For `m = |raw| <= 256` the polynomial branch is exactly
/// `m·(512 - m) / 512`; the `+256 >> 9` computes round-half-away (the
/// numerator is non-negative, so half-up equals half-away). Applying the
/// sign afterwards makes the function odd by construction, the numerator
/// `m(512 - m)` is non-decreasing on `[0, 256]` so the output is monotone,
/// and its maximum `256·256` lands exactly on `128`, so `|F| <= 1.0`.
///
/// The one word without a negation, raw -2048, takes the saturation branch
/// and returns -128; this function never produces -2048 itself.
pub fn tanh_approx_fixed(x: FixedWord) -> FixedWord {
    let m = (x as i32).abs();
    let sign: i32 = if x < 0 { -1 } else { 1 };
    if m > 2 * ONE as i32 {
        return (sign * ONE as i32) as FixedWord;
    }
    let f = (m * (512 - m) + 256) >> 9;
    (sign * f) as FixedWord
}

/// The same approximation in real arithmetic (the function the fixed-point
/// path is allowed to be two LSBs away from).
pub fn tanh_approx_float(x: f64) -> f64 {
    if x > 2.0 {
        1.0
    } else if x < -2.0 {
        -1.0
    } else {
        (1.0 - x.abs() / 4.0) * x
    }
}

/// Integer-valued weight matrix, row-major like [`crate::matrix::Matrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordMatrix {
    rows: usize,
    cols: usize,
    data: Vec<FixedWord>,
}

impl WordMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        WordMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[FixedWord] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[FixedWord] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [FixedWord] {
        &mut self.data
    }
}

impl std::ops::Index<(usize, usize)> for WordMatrix {
    type Output = FixedWord;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &FixedWord {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for WordMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut FixedWord {
        &mut self.data[r * self.cols + c]
    }
}

/// Quantized single-block model: the only architecture the staged datapath
/// implements (one 28x28 block, flatten, 784->10 classifier).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedModel {
    pub spec: ModelSpec,
    pub w1: WordMatrix,
    pub b1: Vec<FixedWord>,
    pub w2: WordMatrix,
    pub b2: Vec<FixedWord>,
    pub wo: WordMatrix,
    pub bo: Vec<FixedWord>,
}

/// Does this spec have the exact stage shape the datapath supports?
fn check_datapath_shape(spec: &ModelSpec) -> Result<()> {
    let want = [
        StageSpec::Lst {
            d_in: IMAGE_SIDE,
            d_out: IMAGE_SIDE,
        },
        StageSpec::Flatten,
        StageSpec::Fc {
            d_in: IMAGE_SIDE * IMAGE_SIDE,
            d_out: NUM_CLASSES,
            activation: Activation::None,
        },
    ];
    if spec.stages != want {
        return Err(Error::UnsupportedSpec(format!(
            "the staged datapath maps a single 28x28 block + classifier; got {:?}",
            spec.stages
        )));
    }
    Ok(())
}

/// Quantize a float model for the staged datapath. Returns the model and
/// how much of it saturated.
pub fn quantize_model<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
) -> Result<(QuantizedModel, QuantStats)> {
    params.congruent_with(spec)?;
    check_datapath_shape(spec)?;
    for t in params.tensors() {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite parameter".into()));
        }
    }

    let mut stats = QuantStats::default();
    let mut qw = |src: &[T], rows: usize, cols: usize| {
        let mut m = WordMatrix::zeros(rows, cols);
        for (dst, &s) in m.as_mut_slice().iter_mut().zip(src) {
            *dst = quantize_counting(s.to_f64(), &mut stats);
        }
        m
    };
    let (block, out) = match (&params.stages[0], &params.stages[2]) {
        (StageParams::Lst(b), StageParams::Fc(l)) => (b, l),
        _ => unreachable!("shape checked above"),
    };
    let d = IMAGE_SIDE;
    let w1 = qw(block.fc_row.w.as_slice(), d, d);
    let w2 = qw(block.fc_col.w.as_slice(), d, d);
    let wo = qw(out.w.as_slice(), NUM_CLASSES, d * d);
    let mut qv = |src: &[T]| -> Vec<FixedWord> {
        src.iter()
            .map(|&s| quantize_counting(s.to_f64(), &mut stats))
            .collect()
    };
    let b1 = qv(block.fc_row.b.as_slice());
    let b2 = qv(block.fc_col.b.as_slice());
    let bo = qv(out.b.as_slice());

    Ok((
        QuantizedModel {
            spec: spec.clone(),
            w1,
            b1,
            w2,
            b2,
            wo,
            bo,
        },
        stats,
    ))
}

impl QuantizedModel {
    /// Flat word list in container order: w1 row-major, b1, w2, b2, wo, bo.
    pub fn to_words(&self) -> Vec<FixedWord> {
        let mut out = Vec::with_capacity(self.spec.param_count().unwrap_or(0));
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(self.wo.as_slice());
        out.extend_from_slice(&self.bo);
        out
    }

    /// Rebuild from a flat word list (the container payload).
    pub fn from_words(spec: &ModelSpec, words: &[FixedWord]) -> Result<Self> {
        check_datapath_shape(spec)?;
        let d = IMAGE_SIDE;
        let expect = spec.param_count()?;
        if words.len() != expect {
            return Err(Error::Truncated {
                need: expect,
                have: words.len(),
            });
        }
        if let Some(&w) = words.iter().find(|&&w| !(WORD_MIN..=WORD_MAX).contains(&w)) {
            return Err(Error::Invalid(format!("word {w} outside the 12-bit range")));
        }
        let mut take = {
            let mut off = 0usize;
            move |n: usize| {
                let s = &words[off..off + n];
                off += n;
                s
            }
        };
        let mat = |src: &[FixedWord], rows: usize, cols: usize| {
            let mut m = WordMatrix::zeros(rows, cols);
            m.as_mut_slice().copy_from_slice(src);
            m
        };
        let w1 = mat(take(d * d), d, d);
        let b1 = take(d).to_vec();
        let w2 = mat(take(d * d), d, d);
        let b2 = take(d).to_vec();
        let wo = mat(take(NUM_CLASSES * d * d), NUM_CLASSES, d * d);
        let bo = take(NUM_CLASSES).to_vec();
        Ok(QuantizedModel {
            spec: spec.clone(),
            w1,
            b1,
            w2,
            b2,
            wo,
            bo,
        })
    }

    /// Write as an "LSQ1" container.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::save_quantized_words(&self.spec, &self.to_words(), path)
    }

    /// Read back from an "LSQ1" container.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (spec, words) = crate::io::load_quantized_words(path)?;
        Self::from_words(&spec, &words)
    }
}
