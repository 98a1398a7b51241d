//! Whole-image pipeline: tile, decompose each block, threshold the sparse
//! layer into a mask, and rebuild the background under the mask.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{Decomposition, Solver, SolverParams};
use crate::dct_basis::{build_basis, BasisMatrix};
use crate::error::{Error, Result};
use crate::image_io::{stitch, stitch_gray, tile, BinaryMask, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub block_size: usize,
    pub k_bases: usize,
    pub solver: SolverParams,
    /// A pixel is foreground when `|s| > fg_threshold` (gray levels).
    pub fg_threshold: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            block_size: 64,
            k_bases: 10,
            solver: SolverParams::default(),
            fg_threshold: 1.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fg_threshold.is_nan() || self.fg_threshold < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fg_threshold must be non-negative, got {}",
                self.fg_threshold
            )));
        }
        self.solver.validate()
    }

    pub fn basis(&self) -> Result<BasisMatrix> {
        build_basis(self.block_size, self.k_bases)
    }
}

fn threshold_mask(s: &[f64], n: usize, threshold: f64) -> Result<BinaryMask> {
    BinaryMask::new(n, n, s.iter().map(|v| v.abs() > threshold).collect())
}

/// Decompose one vectorized block and threshold its sparse layer.
pub fn segment_block(
    f: &[f64],
    basis: &BasisMatrix,
    cfg: &SegmentationConfig,
) -> Result<(BinaryMask, Decomposition)> {
    cfg.validate()?;
    let solver = Solver::new(basis, cfg.solver.clone())?;
    segment_with(&solver, f, cfg.fg_threshold)
}

fn segment_with(
    solver: &Solver<'_>,
    f: &[f64],
    threshold: f64,
) -> Result<(BinaryMask, Decomposition)> {
    let d = solver.solve(f)?;
    let mask = threshold_mask(&d.s, solver.basis().n(), threshold)?;
    Ok((mask, d))
}

/// Segment every block (in parallel) and keep the per-block diagnostics,
/// in tile order.
pub fn segment_image_detailed(
    img: &GrayImage,
    cfg: &SegmentationConfig,
) -> Result<(BinaryMask, Vec<Decomposition>)> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let solver = Solver::new(&basis, cfg.solver.clone())?;
    let grid = tile(img, cfg.block_size)?;
    let results: Vec<(BinaryMask, Decomposition)> = grid
        .tiles()
        .par_iter()
        .map(|t| segment_with(&solver, &t.data, cfg.fg_threshold))
        .collect::<Result<_>>()?;
    let (masks, decomps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((stitch(&grid, &masks)?, decomps))
}

pub fn segment_image(img: &GrayImage, cfg: &SegmentationConfig) -> Result<BinaryMask> {
    Ok(segment_image_detailed(img, cfg)?.0)
}

/// Replace foreground pixels with the least-squares smooth fit to the
/// background pixels. Background pixels are returned unchanged.
pub fn fill_background(f: &[f64], mask: &BinaryMask, basis: &BasisMatrix) -> Result<Vec<f64>> {
    let n = basis.n();
    if f.len() != basis.dim() || mask.width() != n || mask.height() != n {
        return Err(Error::DimensionMismatch(format!(
            "fill needs a {n}x{n} block and mask, got {} samples and a {}x{} mask",
            f.len(),
            mask.width(),
            mask.height()
        )));
    }
    if mask.count() == 0 {
        return Ok(f.to_vec());
    }
    let k = basis.k();
    let background: Vec<usize> = (0..f.len()).filter(|&i| !mask.bits()[i]).collect();
    let rank_deficient = Error::RankDeficient {
        background: background.len(),
        k,
    };
    if background.len() < k {
        return Err(rank_deficient);
    }

    // Normal equations over the background rows of P.
    let cols: Vec<&[f64]> = basis.columns().collect();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for &i in &background {
        for a in 0..k {
            let pa = cols[a][i];
            rhs[a] += pa * f[i];
            for b in a..k {
                gram[(a, b)] += pa * cols[b][i];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let eig = gram.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if max_eig <= 0.0 || min_eig <= 1e-10 * max_eig {
        return Err(rank_deficient);
    }
    let coeffs = gram.cholesky().ok_or(rank_deficient)?.solve(&rhs);
    let fitted = basis.synthesize(coeffs.as_slice());
    Ok(f.iter()
        .zip(mask.bits())
        .zip(&fitted)
        .map(|((&v, &fg), &p)| if fg { p } else { v })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    /// Input with foreground pixels replaced by the smooth fit.
    pub background: GrayImage,
    /// Input where the mask is set, 0 elsewhere.
    pub foreground: GrayImage,
    pub mask: BinaryMask,
}

pub fn reconstruct_layers(img: &GrayImage, cfg: &SegmentationConfig) -> Result<Layers> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let solver = Solver::new(&basis, cfg.solver.clone())?;
    let grid = tile(img, cfg.block_size)?;
    let per_block: Vec<(BinaryMask, Vec<f64>)> = grid
        .tiles()
        .par_iter()
        .map(|t| {
            let (mask, _) = segment_with(&solver, &t.data, cfg.fg_threshold)?;
            let filled = fill_background(&t.data, &mask, &basis)?;
            Ok((mask, filled))
        })
        .collect::<Result<_>>()?;
    let (masks, filled): (Vec<_>, Vec<_>) = per_block.into_iter().unzip();
    let mask = stitch(&grid, &masks)?;
    let background = stitch_gray(&grid, &filled)?;
    let fg = img
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    Ok(Layers {
        background,
        foreground: GrayImage::new(img.width(), img.height(), fg)?,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SegmentationConfig {
        SegmentationConfig {
            block_size: 16,
            k_bases: 6,
            ..Default::default()
        }
    }

    #[test]
    fn constant_and_zero_blocks_are_empty() {
        let cfg = SegmentationConfig::default();
        let basis = cfg.basis().unwrap();
        for value in [128.0, 0.0] {
            let (mask, _) = segment_block(&vec![value; 4096], &basis, &cfg).unwrap();
            assert_eq!(mask.count(), 0, "value {value}");
        }
    }

    #[test]
    fn short_bright_run_is_found_exactly() {
        let cfg = SegmentationConfig::default();
        let basis = cfg.basis().unwrap();
        let mut f = vec![128.0; 4096];
        let row = 20;
        for x in 30..38 {
            f[row * 64 + x] = 255.0;
        }
        let (mask, _) = segment_block(&f, &basis, &cfg).unwrap();
        let expected: Vec<usize> = (30..38).map(|x| row * 64 + x).collect();
        let got: Vec<usize> = (0..4096).filter(|&i| mask.bits()[i]).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn threshold_extremes() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..255.0)).collect();
        let inf = SegmentationConfig {
            fg_threshold: f64::INFINITY,
            ..cfg.clone()
        };
        assert_eq!(segment_block(&f, &basis, &inf).unwrap().0.count(), 0);
        let zero = SegmentationConfig {
            fg_threshold: 0.0,
            ..cfg
        };
        let (mask, d) = segment_block(&f, &basis, &zero).unwrap();
        let support: Vec<bool> = d.s.iter().map(|&v| v != 0.0).collect();
        assert_eq!(mask.bits(), &support[..]);
        let neg = SegmentationConfig {
            fg_threshold: -1.0,
            ..Default::default()
        };
        assert!(segment_block(&f, &basis, &neg).is_err());
    }

    #[test]
    fn uniform_image_is_empty() {
        let img = GrayImage::filled(128, 128, 128.0);
        let mask = segment_image(&img, &SegmentationConfig::default()).unwrap();
        assert_eq!(mask.count(), 0);
        assert_eq!((mask.width(), mask.height()), (128, 128));
    }

    #[test]
    fn single_block_image_matches_block_path() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..255.0)).collect();
        let img = GrayImage::new(16, 16, data.clone()).unwrap();
        let (block_mask, _) = segment_block(&data, &basis, &cfg).unwrap();
        assert_eq!(segment_image(&img, &cfg).unwrap(), block_mask);

        let layers = reconstruct_layers(&img, &cfg).unwrap();
        assert_eq!(layers.mask, block_mask);
        assert_eq!(
            layers.background.data(),
            &fill_background(&data, &block_mask, &basis).unwrap()[..]
        );
    }

    #[test]
    fn fill_with_empty_mask_is_identity() {
        let basis = build_basis(8, 3).unwrap();
        let f: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert_eq!(
            fill_background(&f, &BinaryMask::empty(8, 8), &basis).unwrap(),
            f
        );
    }

    #[test]
    fn fill_constant_hole() {
        let basis = build_basis(8, 6).unwrap();
        let mut f = vec![100.0; 64];
        let mut bits = vec![false; 64];
        for i in [18, 19, 20, 26, 27, 28] {
            f[i] = 250.0;
            bits[i] = true;
        }
        let mask = BinaryMask::new(8, 8, bits.clone()).unwrap();
        let out = fill_background(&f, &mask, &basis).unwrap();
        for i in 0..64 {
            if bits[i] {
                assert!((out[i] - 100.0).abs() < 1e-9);
            } else {
                assert_eq!(out[i].to_bits(), f[i].to_bits());
            }
        }
    }

    #[test]
    fn fill_rejects_underdetermined_masks() {
        let basis = build_basis(8, 10).unwrap();
        let f = vec![1.0; 64];
        let mut bits = vec![true; 64];
        bits[..5].iter_mut().for_each(|b| *b = false);
        let mask = BinaryMask::new(8, 8, bits).unwrap();
        assert!(matches!(
            fill_background(&f, &mask, &basis),
            Err(Error::RankDeficient {
                background: 5,
                k: 10
            })
        ));

        // Enough samples, but all in one row: vertical atoms are unidentifiable.
        let mut bits = vec![true; 64];
        bits[..8].iter_mut().for_each(|b| *b = false);
        let mask = BinaryMask::new(8, 8, bits).unwrap();
        let basis = build_basis(8, 3).unwrap();
        assert!(matches!(
            fill_background(&f, &mask, &basis),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn uniform_image_layers() {
        let img = GrayImage::filled(64, 64, 90.0);
        let layers = reconstruct_layers(&img, &SegmentationConfig::default()).unwrap();
        assert_eq!(layers.background, img);
        assert!(layers.foreground.data().iter().all(|&v| v == 0.0));
    }
}
