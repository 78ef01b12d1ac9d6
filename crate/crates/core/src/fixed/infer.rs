//! Five-stage in-place inference over one 28x28 word RAM.
//!
//! Stage 1 loads the quantized image. Stage 2 runs 28 row processing
//! elements over each row; the 28 MAC results are buffered in full (the RG
//! register bank) and only then written back, so an in-place update never
//! reads its own stage's output. Stage 3 repeats that per column. Stage 4
//! reads the RAM row-major and computes the 10 classifier MACs with no
//! activation; stage 5 picks the max index, ties toward the lowest class.
//!
//! Every step is plain integer arithmetic on explicit words, so identical
//! bits in give identical bits out, whatever the host.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::model::{IMAGE_SIDE, NUM_CLASSES};

use super::{mac_accumulate, quantize, rescale, tanh_approx_fixed, FixedWord, QuantizedModel};

/// The 28x28 working memory, row-major, mutated in place across stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RamImage {
    words: Vec<FixedWord>,
}

impl RamImage {
    /// Stage 1: quantize a real image into the RAM.
    pub fn load<T: Real>(image: &Matrix<T>) -> Result<Self> {
        if image.rows() != IMAGE_SIDE || image.cols() != IMAGE_SIDE {
            return Err(Error::ShapeMismatch(format!(
                "datapath RAM is {IMAGE_SIDE}x{IMAGE_SIDE}, image is {}x{}",
                image.rows(),
                image.cols()
            )));
        }
        let words = image
            .as_slice()
            .iter()
            .map(|&p| quantize(p.to_f64()))
            .collect();
        Ok(RamImage { words })
    }

    pub fn row(&self, r: usize) -> &[FixedWord] {
        &self.words[r * IMAGE_SIDE..(r + 1) * IMAGE_SIDE]
    }

    /// Row-major view of all 784 words (what stage 4 streams out).
    pub fn words(&self) -> &[FixedWord] {
        &self.words
    }
}

impl std::ops::Index<(usize, usize)> for RamImage {
    type Output = FixedWord;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &FixedWord {
        &self.words[r * IMAGE_SIDE + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RamImage {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut FixedWord {
        &mut self.words[r * IMAGE_SIDE + c]
    }
}

/// MAC saturation audit for one inference (or a whole evaluation run).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferStats {
    pub macs: usize,
    pub saturated: usize,
}

impl InferStats {
    pub fn fraction(&self) -> f64 {
        if self.macs == 0 {
            0.0
        } else {
            self.saturated as f64 / self.macs as f64
        }
    }

    pub fn absorb(&mut self, other: InferStats) {
        self.macs += other.macs;
        self.saturated += other.saturated;
    }
}

fn pe_step(
    weights: &[FixedWord],
    inputs: &[FixedWord],
    bias: FixedWord,
    stats: &mut InferStats,
) -> FixedWord {
    let (word, saturated) = rescale(mac_accumulate(weights, inputs, bias));
    stats.macs += 1;
    stats.saturated += saturated as usize;
    word
}

/// Stage 2 for the rows listed in `order` (the machine goes 0..28; any
/// permutation gives the same RAM because rows are independent).
pub fn row_stage(qm: &QuantizedModel, ram: &mut RamImage, order: &[usize], stats: &mut InferStats) {
    let mut rg = [0 as FixedWord; IMAGE_SIDE];
    for &r in order {
        {
            let row = ram.row(r);
            for (k, slot) in rg.iter_mut().enumerate() {
                *slot = tanh_approx_fixed(pe_step(qm.w1.row(k), row, qm.b1[k], stats));
            }
        }
        for (k, &word) in rg.iter().enumerate() {
            ram[(r, k)] = word;
        }
    }
}

/// Stage 3 for the columns listed in `order`.
pub fn col_stage(qm: &QuantizedModel, ram: &mut RamImage, order: &[usize], stats: &mut InferStats) {
    let mut col = [0 as FixedWord; IMAGE_SIDE];
    let mut rg = [0 as FixedWord; IMAGE_SIDE];
    for &c in order {
        for (r, slot) in col.iter_mut().enumerate() {
            *slot = ram[(r, c)];
        }
        for (k, slot) in rg.iter_mut().enumerate() {
            *slot = tanh_approx_fixed(pe_step(qm.w2.row(k), &col, qm.b2[k], stats));
        }
        for (k, &word) in rg.iter().enumerate() {
            ram[(k, c)] = word;
        }
    }
}

/// Stage 4: ten classifier MACs over the row-major RAM, no activation.
pub fn output_stage(
    qm: &QuantizedModel,
    ram: &RamImage,
    stats: &mut InferStats,
) -> [FixedWord; NUM_CLASSES] {
    let flat = ram.words();
    let mut logits = [0 as FixedWord; NUM_CLASSES];
    for (j, slot) in logits.iter_mut().enumerate() {
        *slot = pe_step(qm.wo.row(j), flat, qm.bo[j], stats);
    }
    logits
}

/// Stage 5: index of the largest word, lowest index on ties.
pub fn argmax_word(logits: &[FixedWord]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of the fixed-point datapath over a whole dataset, plus the
/// aggregated saturation audit.
pub fn evaluate_quantized<T: Real>(
    qm: &QuantizedModel,
    ds: &crate::mnist::Dataset<T>,
) -> Result<(f64, InferStats)> {
    if ds.is_empty() {
        return Err(crate::error::Error::EmptyDataset);
    }
    let mut stats = InferStats::default();
    let mut hits = 0usize;
    for (image, &label) in ds.images.iter().zip(&ds.labels) {
        let (digit, trace) = infer_staged(qm, image)?;
        stats.absorb(trace.stats);
        if digit == label as usize {
            hits += 1;
        }
    }
    Ok((hits as f64 / ds.len() as f64, stats))
}

/// RAM snapshots at each stage boundary, the raw classifier outputs, and
/// the saturation audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferTrace {
    pub after_load: RamImage,
    pub after_rows: RamImage,
    pub after_cols: RamImage,
    pub logits: [FixedWord; NUM_CLASSES],
    pub stats: InferStats,
}

/// Run all five stages on one image.
pub fn infer_staged<T: Real>(
    qm: &QuantizedModel,
    image: &Matrix<T>,
) -> Result<(usize, InferTrace)> {
    let ascending: Vec<usize> = (0..IMAGE_SIDE).collect();
    let mut stats = InferStats::default();

    let mut ram = RamImage::load(image)?;
    let after_load = ram.clone();
    row_stage(qm, &mut ram, &ascending, &mut stats);
    let after_rows = ram.clone();
    col_stage(qm, &mut ram, &ascending, &mut stats);
    let after_cols = ram.clone();
    let logits = output_stage(qm, &ram, &mut stats);
    let digit = argmax_word(&logits);

    Ok((
        digit,
        InferTrace {
            after_load,
            after_rows,
            after_cols,
            logits,
            stats,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, ModelSpec};

    fn zero_model() -> QuantizedModel {
        let spec = ModelSpec::lst1();
        let params = ModelParams::<f64>::zeros(&spec).unwrap();
        super::super::quantize_model(&spec, &params).unwrap().0
    }

    fn some_image() -> Matrix<f64> {
        let mut rng = crate::rng::SplitMix64::new(33);
        Matrix::from_vec(28, 28, (0..784).map(|_| rng.next_f64()).collect())
    }

    #[test]
    fn zero_model_ties_resolve_to_digit_zero() {
        let qm = zero_model();
        let (digit, trace) = infer_staged(&qm, &some_image()).unwrap();
        assert_eq!(digit, 0);
        assert_eq!(trace.logits, [0; NUM_CLASSES]);
        // zero weights + zero bias -> tanh(0) everywhere after stage 2
        assert!(trace.after_rows.words().iter().all(|&w| w == 0));
    }

    #[test]
    fn load_rejects_wrong_shapes_and_quantizes_pixels() {
        let img = Matrix::<f64>::zeros(27, 28);
        assert!(RamImage::load(&img).is_err());

        let mut img = Matrix::<f64>::zeros(28, 28);
        img[(0, 0)] = 1.0;
        img[(0, 1)] = 0.5;
        let ram = RamImage::load(&img).unwrap();
        assert_eq!(ram[(0, 0)], 128);
        assert_eq!(ram[(0, 1)], 64);
    }

    #[test]
    fn argmax_word_breaks_ties_low() {
        assert_eq!(argmax_word(&[3, 9, 9, 1]), 1);
        assert_eq!(argmax_word(&[5, 5, 5]), 0);
        assert_eq!(argmax_word(&[-7, -3, -3]), 1);
    }

    #[test]
    fn identical_inputs_identical_trace() {
        let spec = ModelSpec::lst1();
        let params = crate::train::init_params::<f64>(&spec, 77).unwrap();
        let (qm, _) = super::super::quantize_model(&spec, &params).unwrap();
        let img = some_image();
        let a = infer_staged(&qm, &img).unwrap();
        let b = infer_staged(&qm, &img).unwrap();
        assert_eq!(a, b);
    }
}
