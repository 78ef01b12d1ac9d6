//! The block forward exists twice on purpose: a row/column loop form (what
//! the hardware does) and a closed matrix form. These must agree.

use lst2d_core::model::layers::{lst_forward, lst_forward_matrix, LstBlock};
use lst2d_core::{Matrix, SplitMix64};

fn random_block(d_in: usize, d_out: usize, rng: &mut SplitMix64) -> LstBlock<f64> {
    let mut block = LstBlock::zeros(d_in, d_out);
    for w in block.fc_row.w.as_mut_slice() {
        *w = rng.next_f64() * 2.0 - 1.0;
    }
    for b in &mut block.fc_row.b {
        *b = rng.next_f64() - 0.5;
    }
    for w in block.fc_col.w.as_mut_slice() {
        *w = rng.next_f64() * 2.0 - 1.0;
    }
    for b in &mut block.fc_col.b {
        *b = rng.next_f64() - 0.5;
    }
    block
}

#[test]
fn loop_and_matrix_forms_agree_on_200_random_blocks() {
    const SIZES: [usize; 5] = [1, 2, 3, 7, 28];
    let mut rng = SplitMix64::new(0xF0F0);
    for case in 0..200 {
        let d_in = SIZES[rng.next_below(SIZES.len() as u64) as usize];
        let d_out = SIZES[rng.next_below(SIZES.len() as u64) as usize];
        let block = random_block(d_in, d_out, &mut rng);
        let x = Matrix::from_vec(
            d_in,
            d_in,
            (0..d_in * d_in)
                .map(|_| rng.next_f64() * 4.0 - 2.0)
                .collect(),
        );

        let via_loop = lst_forward(&block, &x).unwrap();
        let via_matrix = lst_forward_matrix(&block, &x).unwrap();
        assert_eq!(via_loop.rows(), d_out);
        assert_eq!(via_loop.cols(), d_out);
        for r in 0..d_out {
            for c in 0..d_out {
                let (a, b) = (via_loop[(r, c)], via_matrix[(r, c)]);
                let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
                assert!(
                    (a - b).abs() <= tol,
                    "case {case} ({d_in}->{d_out}) at ({r},{c}): {a} vs {b}"
                );
            }
        }
    }
}
