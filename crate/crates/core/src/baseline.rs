//! Simplified DjVu-style baseline: single-level 2-means on block intensities,
//! with the minority cluster taken as foreground.

use rayon::prelude::*;

use crate::error::Result;
use crate::image_io::{stitch, tile, BinaryMask, GrayImage};

const MAX_LLOYD_ITERS: usize = 100;

/// 2-means over the intensities of one square block.
///
/// Centers start at the block minimum and maximum, so the result does not
/// depend on `seed`; the parameter is kept so every segmenter shares one
/// call shape. Panics if `f.len()` is not a perfect square.
pub fn kmeans2_block(f: &[f64], seed: u64) -> BinaryMask {
    let _ = seed;
    let n = (f.len() as f64).sqrt().round() as usize;
    assert_eq!(n * n, f.len(), "block of {} samples is not square", f.len());

    let (lo, hi) = f
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if f.is_empty() || lo == hi {
        return BinaryMask::empty(n, n);
    }

    // ties go to the low cluster; true = high cluster
    let nearest = |c: &[f64; 2]| -> Vec<bool> {
        f.iter()
            .map(|&v| (v - c[1]).abs() < (v - c[0]).abs())
            .collect()
    };
    let mut centers = [lo, hi];
    let mut assign = nearest(&centers);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for (&a, &v) in assign.iter().zip(f) {
            sums[a as usize] += v;
            counts[a as usize] += 1;
        }
        for c in 0..2 {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        let next = nearest(&centers);
        if next == assign {
            break;
        }
        assign = next;
    }

    let highs = assign.iter().filter(|&&a| a).count();
    let lows = assign.len() - highs;
    let fg_is_high = match highs.cmp(&lows) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => centers[1] >= centers[0],
    };
    let bits = assign.into_iter().map(|a| a == fg_is_high).collect();
    BinaryMask::new(n, n, bits).expect("n*n bits")
}

/// Apply [`kmeans2_block`] to every `block_size` tile.
pub fn kmeans2_image(img: &GrayImage, block_size: usize, seed: u64) -> Result<BinaryMask> {
    let grid = tile(img, block_size)?;
    let masks: Vec<BinaryMask> = grid
        .tiles()
        .par_iter()
        .map(|t| kmeans2_block(&t.data, seed))
        .collect();
    stitch(&grid, &masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bimodal_minority_is_foreground() {
        let mut f = vec![0.0; 4096];
        for v in f.iter_mut().skip(2049) {
            *v = 255.0;
        }
        let m = kmeans2_block(&f, 0);
        assert_eq!(m.count(), 2047);
        assert!(m.bits().iter().zip(&f).all(|(&b, &v)| b == (v == 255.0)));
    }

    #[test]
    fn constant_block_is_empty() {
        assert_eq!(kmeans2_block(&vec![42.0; 64], 1).count(), 0);
    }

    #[test]
    fn small_bright_cluster() {
        let mut f = vec![0.0; 4096];
        for v in f.iter_mut().take(96) {
            *v = 200.0;
        }
        let m = kmeans2_block(&f, 9);
        assert_eq!(m.count(), 96);
        assert!(m.bits()[..96].iter().all(|&b| b));
    }

    #[test]
    fn exact_tie_prefers_brighter_cluster() {
        let f = [10.0, 10.0, 90.0, 90.0];
        assert_eq!(kmeans2_block(&f, 0).bits(), &[false, false, true, true]);
    }

    #[test]
    fn image_wrapper_crops() {
        let img = GrayImage::filled(70, 20, 3.0);
        let m = kmeans2_image(&img, 16, 0).unwrap();
        assert_eq!((m.width(), m.height(), m.count()), (70, 20, 0));
    }

    proptest! {
        #[test]
        fn at_most_half_and_seed_free(values in prop::collection::vec(0u8..=255, 64), s1 in any::<u64>(), s2 in any::<u64>()) {
            let f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let a = kmeans2_block(&f, s1);
            prop_assert!(a.count() <= 32);
            prop_assert_eq!(a, kmeans2_block(&f, s2));
        }
    }
}
