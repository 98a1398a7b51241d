//! Netpbm I/O (PBM/PGM/PPM, maxval 255) and block tiling.
//!
//! Images are stored row-major as `f64` intensities on the 0..=255 scale.
//! Masks are row-major booleans where `true` marks a foreground pixel, which
//! PBM encodes as bit 1 (black).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite intensity at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} mask needs {} bits, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// One N×N tile cut from a source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub origin_x: usize,
    pub origin_y: usize,
    /// Columns on the right that were produced by edge replication.
    pub pad_x: usize,
    /// Rows at the bottom that were produced by edge replication.
    pub pad_y: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    block_size: usize,
    width: usize,
    height: usize,
    cols: usize,
    rows: usize,
    tiles: Vec<Tile>,
}

impl BlockGrid {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Dimensions of the source image.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Tiles per row and per column.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// Cut `img` into row-major `n`×`n` tiles, replicating the last row/column
/// into partial edge tiles.
pub fn tile(img: &GrayImage, n: usize) -> Result<BlockGrid> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "block size must be at least 2, got {n}"
        )));
    }
    let cols = img.width.div_ceil(n);
    let rows = img.height.div_ceil(n);
    let mut tiles = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let origin_x = bx * n;
            let origin_y = by * n;
            let mut data = Vec::with_capacity(n * n);
            for y in 0..n {
                let sy = (origin_y + y).min(img.height - 1);
                for x in 0..n {
                    let sx = (origin_x + x).min(img.width - 1);
                    data.push(img.get(sx, sy));
                }
            }
            tiles.push(Tile {
                origin_x,
                origin_y,
                pad_x: (origin_x + n).saturating_sub(img.width),
                pad_y: (origin_y + n).saturating_sub(img.height),
                data,
            });
        }
    }
    Ok(BlockGrid {
        block_size: n,
        width: img.width,
        height: img.height,
        cols,
        rows,
        tiles,
    })
}

fn stitch_with<T: Copy + Default>(grid: &BlockGrid, per_block: &[Vec<T>]) -> Result<Vec<T>> {
    if per_block.len() != grid.tiles.len() {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} tiles, got {} blocks",
            grid.tiles.len(),
            per_block.len()
        )));
    }
    let n = grid.block_size;
    let mut out = vec![T::default(); grid.width * grid.height];
    for (tile, block) in grid.tiles.iter().zip(per_block) {
        if block.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "block has {} entries, expected {}",
                block.len(),
                n * n
            )));
        }
        for y in 0..n - tile.pad_y {
            let dst = (tile.origin_y + y) * grid.width + tile.origin_x;
            let w = n - tile.pad_x;
            out[dst..dst + w].copy_from_slice(&block[y * n..y * n + w]);
        }
    }
    Ok(out)
}

/// Reassemble per-tile masks into a full-size mask, cropping the padding.
pub fn stitch(grid: &BlockGrid, per_block: &[BinaryMask]) -> Result<BinaryMask> {
    let n = grid.block_size;
    if let Some(bad) = per_block.iter().find(|m| m.width != n || m.height != n) {
        return Err(Error::DimensionMismatch(format!(
            "block mask is {}x{}, expected {n}x{n}",
            bad.width, bad.height
        )));
    }
    let bits: Vec<Vec<bool>> = per_block.iter().map(|m| m.bits.clone()).collect();
    let out = stitch_with(grid, &bits)?;
    BinaryMask::new(grid.width, grid.height, out)
}

/// Reassemble per-tile intensity blocks into a full-size image.
pub fn stitch_gray(grid: &BlockGrid, per_block: &[Vec<f64>]) -> Result<GrayImage> {
    let out = stitch_with(grid, per_block)?;
    GrayImage::new(grid.width, grid.height, out)
}

// ---------------------------------------------------------------------------
// Netpbm parsing

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: Option<u32>,
    /// Offset of the first payload byte.
    payload: usize,
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' && bytes[pos] != b'\r' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_ws_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::MalformedHeader(format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<usize>()
        .map_err(|_| Error::MalformedHeader(format!("{what} out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader("file too short for magic".into()));
    }
    let magic = [bytes[0], bytes[1]];
    if magic[0] != b'P' || !matches!(magic[1], b'1'..=b'6') {
        return Err(Error::UnsupportedMagic(
            String::from_utf8_lossy(&magic).into_owned(),
        ));
    }
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, mut pos) = read_uint(bytes, pos, "height")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    let mut maxval = None;
    if !matches!(magic[1], b'1' | b'4') {
        let (m, p) = read_uint(bytes, pos, "maxval")?;
        if m != 255 {
            return Err(Error::MalformedHeader(format!(
                "maxval {m} unsupported (only 255)"
            )));
        }
        maxval = Some(m as u32);
        pos = p;
    }
    // Binary rasters start after exactly one whitespace byte.
    if matches!(magic[1], b'4'..=b'6') {
        match bytes.get(pos) {
            Some(c) if c.is_ascii_whitespace() => pos += 1,
            Some(_) => {
                return Err(Error::MalformedHeader(
                    "missing whitespace before raster".into(),
                ))
            }
            None => {}
        }
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        payload: pos,
    })
}

fn ascii_samples(bytes: &[u8], mut pos: usize, count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        pos = skip_ws_and_comments(bytes, pos);
        if pos >= bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: count,
                found: out.len(),
            });
        }
        let (v, next) = read_uint(bytes, pos, "sample")?;
        out.push(v as u32);
        pos = next;
    }
    Ok(out)
}

/// P1 allows samples without separating whitespace ("0101").
fn ascii_bits(bytes: &[u8], mut pos: usize, count: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        pos = skip_ws_and_comments(bytes, pos);
        match bytes.get(pos) {
            Some(b'0') => out.push(false),
            Some(b'1') => out.push(true),
            Some(&c) => {
                return Err(Error::MalformedHeader(format!(
                    "unexpected byte {c:#04x} in P1 raster"
                )))
            }
            None => {
                return Err(Error::TruncatedPayload {
                    expected: count,
                    found: out.len(),
                })
            }
        }
        pos += 1;
    }
    Ok(out)
}

fn binary_samples(bytes: &[u8], pos: usize, count: usize) -> Result<&[u8]> {
    let available = bytes.len().saturating_sub(pos);
    if available < count {
        return Err(Error::TruncatedPayload {
            expected: count,
            found: available,
        });
    }
    Ok(&bytes[pos..pos + count])
}

fn check_range(samples: &[u32], maxval: u32) -> Result<()> {
    match samples.iter().find(|&&v| v > maxval) {
        Some(v) => Err(Error::MalformedHeader(format!(
            "sample {v} exceeds maxval {maxval}"
        ))),
        None => Ok(()),
    }
}

fn luma(rgb: &[u32]) -> f64 {
    LUMA_WEIGHTS
        .iter()
        .zip(rgb)
        .map(|(w, &c)| w * c as f64)
        .sum::<f64>()
        .clamp(0.0, 255.0)
}

/// Decode an in-memory PGM (P2/P5) or PPM (P3/P6); PPM is reduced to BT.601 luma.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    let count = h.width * h.height;
    let maxval = h.maxval.unwrap_or(1);
    let data: Vec<f64> = match h.magic[1] {
        b'2' => {
            let s = ascii_samples(bytes, h.payload, count)?;
            check_range(&s, maxval)?;
            s.into_iter().map(f64::from).collect()
        }
        b'5' => binary_samples(bytes, h.payload, count)?
            .iter()
            .map(|&b| f64::from(b))
            .collect(),
        b'3' => {
            let s = ascii_samples(bytes, h.payload, 3 * count)?;
            check_range(&s, maxval)?;
            s.chunks_exact(3).map(luma).collect()
        }
        b'6' => binary_samples(bytes, h.payload, 3 * count)?
            .chunks_exact(3)
            .map(|px| luma(&[px[0] as u32, px[1] as u32, px[2] as u32]))
            .collect(),
        _ => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(&h.magic).into_owned(),
            ))
        }
    };
    GrayImage::new(h.width, h.height, data)
}

/// Decode an in-memory PBM (P1/P4).
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let h = parse_header(bytes)?;
    let bits = match h.magic[1] {
        b'1' => ascii_bits(bytes, h.payload, h.width * h.height)?,
        b'4' => {
            let stride = h.width.div_ceil(8);
            let raster = binary_samples(bytes, h.payload, stride * h.height)?;
            let mut bits = Vec::with_capacity(h.width * h.height);
            for row in raster.chunks_exact(stride) {
                for x in 0..h.width {
                    bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
                }
            }
            bits
        }
        _ => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(&h.magic).into_owned(),
            ))
        }
    };
    BinaryMask::new(h.width, h.height, bits)
}

/// Encode as P4: rows padded to whole bytes, bits packed MSB first.
pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let stride = mask.width.div_ceil(8);
    let mut out = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    out.reserve(stride * mask.height);
    for row in mask.bits.chunks_exact(mask.width) {
        let mut packed = vec![0u8; stride];
        for (x, _) in row.iter().enumerate().filter(|(_, &b)| b) {
            packed[x / 8] |= 0x80 >> (x % 8);
        }
        out.extend_from_slice(&packed);
    }
    out
}

/// Encode as P5, rounding and clamping to 0..=255.
pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Write `bytes` to a temporary file next to `path`, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_gray(&read_file(path.as_ref())?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    decode_mask(&read_file(path.as_ref())?)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_mask(mask))
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_gray(img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p2_values() {
        let img = decode_gray(b"P2\n# comment\n2 2\n255\n0 12\n255 7\n").unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 12.0, 255.0, 7.0]);
    }

    #[test]
    fn p5_values() {
        let img = decode_gray(b"P5 2 1 255\n\x00\xff").unwrap();
        assert_eq!(img.data(), &[0.0, 255.0]);
    }

    #[test]
    fn p6_red_is_luma() {
        let img = decode_gray(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert!((img.data()[0] - 76.245).abs() < 1e-12);
    }

    #[test]
    fn p3_matches_p6() {
        let a = decode_gray(b"P3 2 1 255 10 20 30 200 100 50").unwrap();
        let b = decode_gray(b"P6 2 1 255\n\x0a\x14\x1e\xc8\x64\x32").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            decode_gray(b"P7\n1 1\n255\n\x00"),
            Err(Error::UnsupportedMagic(_))
        ));
        assert!(matches!(
            decode_gray(b"XX"),
            Err(Error::UnsupportedMagic(_))
        ));
        assert!(matches!(
            decode_gray(b"P5\nabc 1\n255\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_gray(b"P5\n2 2\n65535\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_gray(b"P5\n2 2\n255\n\x00\x01"),
            Err(Error::TruncatedPayload {
                expected: 4,
                found: 2
            })
        ));
        assert!(matches!(
            decode_gray(b"P2\n2 2\n255\n1 2 3"),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn all_false_3x3_p4_payload() {
        let bytes = encode_mask(&BinaryMask::empty(3, 3));
        assert_eq!(bytes, b"P4\n3 3\n\x00\x00\x00");
    }

    #[test]
    fn alternating_1x9_packs_msb_first() {
        let bits: Vec<bool> = (0..9).map(|i| i % 2 == 0).collect();
        let mask = BinaryMask::new(9, 1, bits.clone()).unwrap();
        let bytes = encode_mask(&mask);
        assert_eq!(&bytes[bytes.len() - 2..], &[0xAA, 0x80]);
        let back = decode_mask(b"P4\n9 1\n\xaa\x80").unwrap();
        assert_eq!(back.bits(), &bits[..]);
    }

    #[test]
    fn p4_all_zero_and_p1_text() {
        let m = decode_mask(b"P4 10 2\n\x00\x00\x00\x00").unwrap();
        assert_eq!(m.count(), 0);
        let m = decode_mask(b"P1\n3 1\n1 0 1\n").unwrap();
        assert_eq!(m.bits(), &[true, false, true]);
        let m = decode_mask(b"P1\n3 1\n101").unwrap();
        assert_eq!(m.bits(), &[true, false, true]);
        assert!(matches!(
            decode_mask(b"P4 10 2\n\x00"),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn tile_counts_and_padding() {
        let g = tile(&GrayImage::filled(64, 64, 1.0), 64).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g.tiles()[0].pad_x, g.tiles()[0].pad_y), (0, 0));

        let g = tile(&GrayImage::filled(65, 64, 1.0), 64).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.tiles()[1].pad_x, 63);
        assert_eq!(g.tiles()[1].origin_x, 64);

        let g = tile(&GrayImage::filled(128, 128, 1.0), 64).unwrap();
        let origins: Vec<_> = g.tiles().iter().map(|t| (t.origin_x, t.origin_y)).collect();
        assert_eq!(origins, vec![(0, 0), (64, 0), (0, 64), (64, 64)]);

        assert!(tile(&GrayImage::filled(4, 4, 0.0), 1).is_err());
    }

    #[test]
    fn tile_replicates_edges() {
        let data: Vec<f64> = (0..6).map(f64::from).collect();
        let img = GrayImage::new(3, 2, data).unwrap();
        let g = tile(&img, 2).unwrap();
        // second tile covers column 2 and a replicated copy of it
        assert_eq!(g.tiles()[1].data, vec![2.0, 2.0, 5.0, 5.0]);
    }

    #[test]
    fn stitch_identity_and_crop() {
        let img = GrayImage::filled(65, 64, 3.0);
        let g = tile(&img, 64).unwrap();
        let full = vec![BinaryMask::new(64, 64, vec![true; 4096]).unwrap(); g.len()];
        let m = stitch(&g, &full).unwrap();
        assert_eq!((m.width(), m.height()), (65, 64));
        assert_eq!(m.count(), 65 * 64);
        assert!(stitch(&g, &full[..1]).is_err());

        let bits: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
        let single = BinaryMask::new(4, 4, bits).unwrap();
        let g = tile(&GrayImage::filled(4, 4, 0.0), 4).unwrap();
        assert_eq!(stitch(&g, std::slice::from_ref(&single)).unwrap(), single);
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pbm");
        let mask = BinaryMask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        save_mask(&mask, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), mask);

        let img = GrayImage::new(2, 1, vec![12.4, 300.0]).unwrap();
        let q = dir.path().join("g.pgm");
        save_gray(&img, &q).unwrap();
        assert_eq!(load_gray(&q).unwrap().data(), &[12.0, 255.0]);

        assert!(matches!(
            load_gray(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn mask_round_trip(w in 1usize..20, h in 1usize..8, seed in any::<u64>()) {
            let bits: Vec<bool> = (0..w * h)
                .map(|i| (seed.rotate_left(i as u32 % 64) ^ i as u64) & 1 == 1)
                .collect();
            let m = BinaryMask::new(w, h, bits).unwrap();
            prop_assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
        }

        #[test]
        fn stitch_tile_keeps_dims(w in 1usize..150, h in 1usize..150, n in 2usize..70) {
            let g = tile(&GrayImage::filled(w, h, 0.0), n).unwrap();
            let blocks = vec![BinaryMask::empty(n, n); g.len()];
            let m = stitch(&g, &blocks).unwrap();
            prop_assert_eq!((m.width(), m.height()), (w, h));
        }

        #[test]
        fn luma_bounded(r in 0u32..256, g in 0u32..256, b in 0u32..256) {
            let y = luma(&[r, g, b]);
            prop_assert!((0.0..=255.0).contains(&y));
            prop_assert_eq!(y, luma(&[r, g, b]));
        }
    }
}
