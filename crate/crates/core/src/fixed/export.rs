//! ROM memory images and HDL test vectors.
//!
//! Every word is printed as exactly three lowercase hex digits of its
//! 12-bit two's complement pattern, one word per line:
//!
//! - `rom_row_<k>.hex` — row-PE k: the 28 weights of W1 row k, then b1[k]
//! - `rom_col_<k>.hex` — col-PE k: the 28 weights of W2 row k, then b2[k]
//! - `rom_out_<j>.hex` — output-PE j: the 784 class-j weights, then its bias
//!
//! The test-vector file has one line per image: the 784 quantized input
//! words (hex, row-major), the 10 raw classifier output words (hex), and
//! the predicted digit (decimal), all space-separated.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::model::{IMAGE_SIDE, NUM_CLASSES};

use super::infer::infer_staged;
use super::{FixedWord, QuantizedModel, WORD_MAX, WORD_MIN};

/// Three lowercase hex digits of the word's 12-bit two's complement.
pub fn word_hex(w: FixedWord) -> String {
    debug_assert!((WORD_MIN..=WORD_MAX).contains(&w));
    format!("{:03x}", (w as u16) & 0x0fff)
}

/// Inverse of [`word_hex`]: parse and sign-extend a 12-bit pattern.
pub fn parse_word_hex(s: &str) -> Result<FixedWord> {
    let v =
        u16::from_str_radix(s, 16).map_err(|_| Error::Invalid(format!("bad hex word {s:?}")))?;
    if v > 0x0fff || s.len() != 3 {
        return Err(Error::Invalid(format!("hex word {s:?} is not 12-bit")));
    }
    Ok(if v & 0x0800 != 0 {
        (v | 0xf000) as i16
    } else {
        v as i16
    })
}

fn write_rom(path: &Path, weights: &[FixedWord], bias: FixedWord) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &w in weights {
        writeln!(out, "{}", word_hex(w))?;
    }
    writeln!(out, "{}", word_hex(bias))?;
    Ok(())
}

/// Write one ROM file per processing element; returns the paths written.
pub fn export_roms(qm: &QuantizedModel, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(2 * IMAGE_SIDE + NUM_CLASSES);
    for k in 0..IMAGE_SIDE {
        let p = dir.join(format!("rom_row_{k}.hex"));
        write_rom(&p, qm.w1.row(k), qm.b1[k])?;
        paths.push(p);
    }
    for k in 0..IMAGE_SIDE {
        let p = dir.join(format!("rom_col_{k}.hex"));
        write_rom(&p, qm.w2.row(k), qm.b2[k])?;
        paths.push(p);
    }
    for j in 0..NUM_CLASSES {
        let p = dir.join(format!("rom_out_{j}.hex"));
        write_rom(&p, qm.wo.row(j), qm.bo[j])?;
        paths.push(p);
    }
    Ok(paths)
}

/// Run each image through the datapath and record input words, stage-4
/// outputs, and the decided digit.
pub fn write_test_vectors<T: Real>(
    qm: &QuantizedModel,
    images: &[Matrix<T>],
    path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for image in images {
        let (digit, trace) = infer_staged(qm, image)?;
        let mut line = String::with_capacity(4 * (IMAGE_SIDE * IMAGE_SIDE + NUM_CLASSES) + 2);
        for &w in trace.after_load.words() {
            line.push_str(&word_hex(w));
            line.push(' ');
        }
        for &w in &trace.logits {
            line.push_str(&word_hex(w));
            line.push(' ');
        }
        line.push_str(&digit.to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, ModelSpec};
    use crate::rng::SplitMix64;

    #[test]
    fn hex_encoding_reference_points() {
        assert_eq!(word_hex(128), "080"); // 1.0
        assert_eq!(word_hex(-2048), "800"); // -16.0
        assert_eq!(word_hex(0), "000");
        assert_eq!(word_hex(2047), "7ff");
        assert_eq!(word_hex(-1), "fff");
    }

    #[test]
    fn hex_roundtrip_all_words() {
        for raw in WORD_MIN..=WORD_MAX {
            assert_eq!(parse_word_hex(&word_hex(raw)).unwrap(), raw);
        }
        assert!(parse_word_hex("1000").is_err());
        assert!(parse_word_hex("zz").is_err());
    }

    fn random_quantized(seed: u64) -> QuantizedModel {
        let spec = ModelSpec::lst1();
        let mut params = ModelParams::<f64>::zeros(&spec).unwrap();
        let mut rng = SplitMix64::new(seed);
        for t in params.tensors_mut() {
            for v in t {
                *v = rng.next_f64() * 2.0 - 1.0;
            }
        }
        super::super::quantize_model(&spec, &params).unwrap().0
    }

    #[test]
    fn rom_export_files_and_contents() {
        let qm = random_quantized(3);
        let dir = tempfile::tempdir().unwrap();
        let paths = export_roms(&qm, dir.path()).unwrap();
        assert_eq!(paths.len(), 66); // 28 row + 28 col + 10 output PEs

        let row0 = std::fs::read_to_string(dir.path().join("rom_row_0.hex")).unwrap();
        let lines: Vec<&str> = row0.lines().collect();
        assert_eq!(lines.len(), 29);
        for (i, line) in lines.iter().take(28).enumerate() {
            assert_eq!(parse_word_hex(line).unwrap(), qm.w1[(0, i)]);
        }
        assert_eq!(parse_word_hex(lines[28]).unwrap(), qm.b1[0]);

        let out7 = std::fs::read_to_string(dir.path().join("rom_out_7.hex")).unwrap();
        assert_eq!(out7.lines().count(), 785);
    }

    #[test]
    fn test_vector_lines_match_inference() {
        let qm = random_quantized(4);
        let mut rng = SplitMix64::new(5);
        let images: Vec<Matrix<f64>> = (0..3)
            .map(|_| Matrix::from_vec(28, 28, (0..784).map(|_| rng.next_f64()).collect()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test_vectors.txt");
        write_test_vectors(&qm, &images, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for (line, image) in lines.iter().zip(&images) {
            let tokens: Vec<&str> = line.split(' ').collect();
            assert_eq!(tokens.len(), 784 + 10 + 1);
            let (digit, trace) = infer_staged(&qm, image).unwrap();
            for (tok, &w) in tokens[..784].iter().zip(trace.after_load.words()) {
                assert_eq!(parse_word_hex(tok).unwrap(), w);
            }
            for (tok, &w) in tokens[784..794].iter().zip(&trace.logits) {
                assert_eq!(parse_word_hex(tok).unwrap(), w);
            }
            assert_eq!(tokens[794].parse::<usize>().unwrap(), digit);
        }
    }
}
