//! Image grids exported as binary PGM (always) and PNG (optional).

use std::path::{Path, PathBuf};

use crate::data::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Pixels between neighbouring tiles.
pub const SEPARATOR: usize = 2;
const SEPARATOR_VALUE: u8 = 255;

/// An 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// `round(255·p)` with `p` clamped to [0, 1].
pub fn quantize(p: f64) -> u8 {
    (255.0 * p.clamp(0.0, 1.0)).round() as u8
}

/// Lays out `images` (each 784 values in [0, 1]) row-major on a
/// `rows × cols` grid of 28×28 tiles.
pub fn grid(images: &[f64], rows: usize, cols: usize) -> Result<Gray> {
    let n = images.len() / IMAGE_PIXELS;
    if rows == 0 || cols == 0 || n == 0 {
        return Err(Error::Config("an image grid needs at least one row, column and image".into()));
    }
    if !images.len().is_multiple_of(IMAGE_PIXELS) || n > rows * cols {
        return Err(Error::Shape(format!("{n} images do not fit a {rows}x{cols} grid")));
    }
    let width = cols * IMAGE_SIDE + (cols - 1) * SEPARATOR;
    let height = rows * IMAGE_SIDE + (rows - 1) * SEPARATOR;
    let mut pixels = vec![SEPARATOR_VALUE; width * height];
    for (i, img) in images.chunks_exact(IMAGE_PIXELS).enumerate() {
        let (r, c) = (i / cols, i % cols);
        let (y0, x0) = (r * (IMAGE_SIDE + SEPARATOR), c * (IMAGE_SIDE + SEPARATOR));
        for y in 0..IMAGE_SIDE {
            let row = &mut pixels[(y0 + y) * width + x0..][..IMAGE_SIDE];
            for (dst, &p) in row.iter_mut().zip(&img[y * IMAGE_SIDE..][..IMAGE_SIDE]) {
                *dst = quantize(p);
            }
        }
    }
    Ok(Gray { width, height, pixels })
}

pub fn encode_pgm(img: &Gray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn encode_png(img: &Gray) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::Io(std::io::Error::other(e));
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(&img.pixels).map_err(to_err)?;
    w.finish().map_err(to_err)?;
    Ok(out)
}

/// Writes `stem.pgm` and, if asked, `stem.png`. Returns the paths written.
pub fn save_grid(img: &Gray, stem: &Path, png: bool) -> Result<Vec<PathBuf>> {
    let pgm = stem.with_extension("pgm");
    std::fs::write(&pgm, encode_pgm(img))?;
    let mut written = vec![pgm];
    if png {
        let path = stem.with_extension("png");
        std::fs::write(&path, encode_png(img)?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_ten_layout() {
        let imgs: Vec<f64> = (0..10).flat_map(|i| vec![i as f64 / 9.0; IMAGE_PIXELS]).collect();
        let g = grid(&imgs, 1, 10).unwrap();
        assert_eq!((g.width, g.height), (10 * 28 + 9 * 2, 28));
        assert_eq!(g.pixels[0], 0);
        assert_eq!(g.pixels[28], SEPARATOR_VALUE);
        assert_eq!(g.pixels[30], quantize(1.0 / 9.0));
        assert_eq!(g.pixels[g.width - 1], 255);
        let pgm = encode_pgm(&g);
        assert!(pgm.starts_with(b"P5\n298 28\n255\n"));
        assert_eq!(pgm.len(), 14 + 298 * 28);
    }

    #[test]
    fn two_rows() {
        let g = grid(&vec![0.5; 16 * IMAGE_PIXELS], 2, 8).unwrap();
        assert_eq!((g.width, g.height), (8 * 28 + 14, 58));
        assert_eq!(g.pixels[28 * g.width], SEPARATOR_VALUE);
        assert_eq!(g.pixels[30 * g.width], 128);
    }

    #[test]
    fn quantization_and_errors() {
        assert_eq!((quantize(-1.0), quantize(0.5), quantize(2.0)), (0, 128, 255));
        assert!(grid(&[], 1, 1).is_err());
        assert!(grid(&vec![0.0; 3 * IMAGE_PIXELS], 1, 2).is_err());
    }

    #[test]
    fn png_signature() {
        let g = grid(&vec![0.0; IMAGE_PIXELS], 1, 1).unwrap();
        assert!(encode_png(&g).unwrap().starts_with(b"\x89PNG\r\n\x1a\n"));
    }
}
