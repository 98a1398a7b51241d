//! Synthetic blocks with known ground truth: a smooth layer drawn from the
//! first `k_true` zig-zag DCT atoms plus thin strokes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dct_basis::build_basis;
use crate::error::{Error, Result};
use crate::image_io::{encode_gray, encode_mask, write_atomic, BinaryMask, GrayImage};

/// Mean intensity of the generated smooth layer.
pub const SMOOTH_MEAN: f64 = 128.0;

const MIN_STROKE_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    /// Active DCT atoms in the smooth layer, DC included.
    pub k_true: usize,
    /// Magnitude range of the non-DC coefficients; signs are random.
    pub alpha_range: (f64, f64),
    pub stroke_count: usize,
    /// Gray-level offset of strokes relative to the smooth layer.
    pub stroke_amplitude: f64,
    pub max_fg_fraction: f64,
    pub seed: u64,
    pub diagonal_strokes: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 64,
            k_true: 6,
            alpha_range: (100.0, 600.0),
            stroke_count: 5,
            stroke_amplitude: 100.0,
            max_fg_fraction: 0.10,
            seed: 0,
            diagonal_strokes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBlock {
    pub f: Vec<f64>,
    pub truth: BinaryMask,
    pub smooth: Vec<f64>,
}

impl SynthSpec {
    fn fg_budget(&self) -> usize {
        (self.max_fg_fraction * (self.n * self.n) as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 2 {
            return invalid(format!("block side {} too small", self.n));
        }
        if self.k_true == 0 || self.k_true > self.n * self.n {
            return invalid(format!(
                "k_true {} outside 1..={}",
                self.k_true,
                self.n * self.n
            ));
        }
        let (lo, hi) = self.alpha_range;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return invalid(format!("bad alpha range ({lo}, {hi})"));
        }
        if !(self.stroke_amplitude.is_finite() && self.stroke_amplitude > 0.0) {
            return invalid(format!(
                "stroke amplitude {} must be positive",
                self.stroke_amplitude
            ));
        }
        if !(0.0..=1.0).contains(&self.max_fg_fraction) {
            return invalid(format!(
                "max_fg_fraction {} outside [0, 1]",
                self.max_fg_fraction
            ));
        }
        if self.stroke_count > 0 {
            if max_stroke_len(self.n) < MIN_STROKE_LEN {
                return invalid(format!("block side {} too small for strokes", self.n));
            }
            if self.stroke_count * MIN_STROKE_LEN > self.fg_budget() {
                return invalid(format!(
                    "{} strokes need at least {} pixels, budget is {}",
                    self.stroke_count,
                    self.stroke_count * MIN_STROKE_LEN,
                    self.fg_budget()
                ));
            }
        }
        Ok(())
    }
}

fn max_stroke_len(n: usize) -> usize {
    2 * n / 3
}

/// Pixels covered by one stroke, clipped to the block.
fn stroke_pixels(
    rng: &mut ChaCha8Rng,
    n: usize,
    len: usize,
    thickness: usize,
    diagonal: bool,
) -> Vec<usize> {
    let mut px = Vec::with_capacity(len * thickness);
    if diagonal {
        let span = len.min(n);
        let x0 = rng.gen_range(0..=n - span);
        let y0 = rng.gen_range(0..=n - span);
        let descending = rng.gen_bool(0.5);
        for t in 0..span {
            let y = if descending {
                y0 + t
            } else {
                y0 + span - 1 - t
            };
            for d in 0..thickness {
                let x = x0 + t + d;
                if x < n {
                    px.push(y * n + x);
                }
            }
        }
    } else {
        let horizontal = rng.gen_bool(0.5);
        let along = rng.gen_range(0..=n - len);
        let across = rng.gen_range(0..=n - thickness);
        for t in 0..len {
            for d in 0..thickness {
                let (x, y) = if horizontal {
                    (along + t, across + d)
                } else {
                    (across + d, along + t)
                };
                px.push(y * n + x);
            }
        }
    }
    px
}

/// Draw one block. Identical specs give bit-identical output.
///
/// Strokes that would clip above 255 are drawn darker than the background
/// instead, so every truth pixel differs from the smooth layer.
pub fn gen_block(spec: &SynthSpec) -> Result<SynthBlock> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let basis = build_basis(n, spec.k_true)?;
    let mut coeffs = vec![0.0; spec.k_true];
    // DC atom is constant 1/n, so this puts the block mean at SMOOTH_MEAN.
    coeffs[0] = SMOOTH_MEAN * n as f64;
    let (lo, hi) = spec.alpha_range;
    for c in coeffs.iter_mut().skip(1) {
        let mag = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        *c = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    let smooth = basis.synthesize(&coeffs);

    let budget = spec.fg_budget();
    let mut truth = vec![false; n * n];
    let mut used = 0usize;
    for i in 0..spec.stroke_count {
        let reserved = MIN_STROKE_LEN * (spec.stroke_count - i - 1);
        let available = budget - used - reserved;
        let mut thickness = rng.gen_range(1..=2usize);
        let mut len = rng.gen_range(MIN_STROKE_LEN..=max_stroke_len(n));
        if len * thickness > available {
            if available < MIN_STROKE_LEN * thickness {
                thickness = 1;
            }
            len = (available / thickness).clamp(MIN_STROKE_LEN, len);
        }
        for p in stroke_pixels(&mut rng, n, len, thickness, spec.diagonal_strokes) {
            if !truth[p] {
                truth[p] = true;
                used += 1;
            }
        }
    }

    let amp = spec.stroke_amplitude;
    let f = smooth
        .iter()
        .zip(&truth)
        .map(|(&b, &fg)| {
            let v = if !fg {
                b
            } else if b + amp <= 255.0 || b - amp < 0.0 {
                b + amp
            } else {
                b - amp
            };
            v.clamp(0.0, 255.0)
        })
        .collect();

    Ok(SynthBlock {
        f,
        truth: BinaryMask::new(n, n, truth)?,
        smooth,
    })
}

/// Write `count` blocks as `block_NNNN.pgm` / `block_NNNN_truth.pbm` plus a
/// `manifest.tsv` listing them. Per-block seeds derive from `seed`.
pub fn write_dataset(dir: &Path, count: usize, seed: u64, spec: &SynthSpec) -> Result<PathBuf> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::from("# image\tmask\tlabel\n");
    for i in 0..count {
        let block_spec = SynthSpec {
            seed: seeds.gen(),
            ..spec.clone()
        };
        let block = gen_block(&block_spec)?;
        let image_name = format!("block_{i:04}.pgm");
        let mask_name = format!("block_{i:04}_truth.pbm");
        let img = GrayImage::new(spec.n, spec.n, block.f)?;
        write_atomic(&dir.join(&image_name), &encode_gray(&img))?;
        write_atomic(&dir.join(&mask_name), &encode_mask(&block.truth))?;
        manifest.push_str(&format!("{image_name}\t{mask_name}\tsynth-{i:04}\n"));
    }
    let path = dir.join("manifest.tsv");
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
