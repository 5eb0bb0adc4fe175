//! Grayscale images as matrices with values in `[0, 1]`: quality metrics,
//! a synthetic test target, PGM I/O, and bilinear resampling.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Cap reported for infinite PSNR/SNR (identical inputs).
pub const DB_CAP: f64 = 300.0;

const PEAK: f64 = 255.0;

fn to_8bit(x: f64) -> f64 {
    (x * PEAK).clamp(0.0, PEAK)
}

fn same_shape(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// `10·log₁₀(255²/MSE)` on the 8-bit rescale (×255, clamped, not rounded),
/// capped at [`DB_CAP`].
pub fn psnr(reference: &DenseMatrix, test: &DenseMatrix) -> Result<f64> {
    same_shape(reference, test)?;
    if reference.is_empty() {
        return Err(Error::param("reference", "image is empty"));
    }
    let mse = reference
        .iter()
        .zip(test.iter())
        .map(|(a, b)| (to_8bit(*a) - to_8bit(*b)).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(DB_CAP);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(DB_CAP))
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WIN] {
    let c = (SSIM_WIN / 2) as f64;
    let mut w = [0.0; SSIM_WIN];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5),
/// `K₁ = 0.01`, `K₂ = 0.03`, on the 8-bit rescale.
pub fn ssim(reference: &DenseMatrix, test: &DenseMatrix) -> Result<f64> {
    same_shape(reference, test)?;
    let (h, w) = reference.shape();
    if h < SSIM_WIN || w < SSIM_WIN {
        return Err(Error::param("image", format!("SSIM needs at least {SSIM_WIN}x{SSIM_WIN}, got {h}x{w}")));
    }
    let a = reference.map(to_8bit);
    let b = test.map(to_8bit);
    let g = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let (oh, ow) = (h - SSIM_WIN + 1, w - SSIM_WIN + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (di, gi) in g.iter().enumerate() {
                for (dj, gj) in g.iter().enumerate() {
                    let wt = gi * gj;
                    let x = a[(i + di, j + dj)];
                    let y = b[(i + di, j + dj)];
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Deterministic smooth test target in `[0, 1]`: a few separable terms plus a
/// diagonal ridge, so it is close to low rank without being exactly so.
pub fn synthetic_image(size: usize) -> DenseMatrix {
    use std::f64::consts::PI;
    let denom = (size.max(2) - 1) as f64;
    let raw = DMatrix::from_fn(size, size, |i, j| {
        let y = i as f64 / denom;
        let x = j as f64 / denom;
        let ramp = 0.35 * (1.0 - x) * (0.6 + 0.4 * y);
        let blob = 0.30 * (-((x - 0.3).powi(2) + (y - 0.6).powi(2)) / 0.05).exp();
        let wave = 0.15 * (3.0 * PI * x).sin() * (2.0 * PI * y).sin();
        let ridge = 0.10 * (-(x - y).powi(2) / 0.02).exp();
        ramp + blob + wave + ridge
    });
    let lo = raw.min();
    let hi = raw.max();
    raw.map(|v| (v - lo) / (hi - lo))
}

/// Bilinear resampling to `rows × cols` with pixel centers aligned.
pub fn resize_bilinear(img: &DenseMatrix, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let (h, w) = img.shape();
    if h == 0 || w == 0 || rows == 0 || cols == 0 {
        return Err(Error::param("size", "image dimensions must be positive"));
    }
    let axis = |out: usize, len_in: usize, len_out: usize| {
        let s = ((out as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5).clamp(0.0, (len_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len_in - 1);
        (i0, i1, s - i0 as f64)
    };
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let (y0, y1, fy) = axis(i, h, rows);
        let (x0, x1, fx) = axis(j, w, cols);
        let top = img[(y0, x0)] * (1.0 - fx) + img[(y0, x1)] * fx;
        let bottom = img[(y1, x0)] * (1.0 - fx) + img[(y1, x1)] * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(Error::Format("not a PGM image (expected magic number P2 or P5)".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|c| *c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("malformed PGM header at byte {start}")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PGM header: missing separator".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM geometry {width}x{height}, maxval {maxval}")));
    }
    Ok(Header {
        binary,
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decode a P2 or P5 image into `[0, 1]` (row `i` of the matrix is raster line `i`).
pub fn decode_pgm(bytes: &[u8]) -> Result<DenseMatrix> {
    let hdr = parse_header(bytes)?;
    let n = hdr.width * hdr.height;
    let data = &bytes[hdr.data_start..];
    let values: Vec<usize> = if hdr.binary {
        let wide = hdr.maxval > 255;
        let need = if wide { 2 * n } else { n };
        if data.len() < need {
            return Err(Error::Format(format!("PGM raster truncated: {} of {need} bytes", data.len())));
        }
        if wide {
            data.chunks_exact(2).take(n).map(|c| (c[0] as usize) << 8 | c[1] as usize).collect()
        } else {
            data[..n].iter().map(|v| *v as usize).collect()
        }
    } else {
        let text = std::str::from_utf8(data).map_err(|_| Error::Format("P2 raster is not ASCII".into()))?;
        let parsed: std::result::Result<Vec<usize>, _> = text.split_ascii_whitespace().take(n).map(str::parse).collect();
        let parsed = parsed.map_err(|_| Error::Format("P2 raster contains a non-integer".into()))?;
        if parsed.len() < n {
            return Err(Error::Format(format!("PGM raster truncated: {} of {n} values", parsed.len())));
        }
        parsed
    };
    if let Some(v) = values.iter().find(|v| **v > hdr.maxval) {
        return Err(Error::Format(format!("PGM sample {v} exceeds maxval {}", hdr.maxval)));
    }
    let maxval = hdr.maxval as f64;
    Ok(DMatrix::from_fn(hdr.height, hdr.width, |i, j| values[i * hdr.width + j] as f64 / maxval))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    decode_pgm(&bytes)
}

/// Encode as 8-bit binary PGM (P5); values are clamped to `[0, 1]` and rounded.
/// Each comment line is written into the header as `# line`.
pub fn encode_pgm(img: &DenseMatrix, comments: &[String]) -> Vec<u8> {
    let (h, w) = img.shape();
    let mut out = b"P5\n".to_vec();
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend_from_slice(format!("{w} {h}\n255\n").as_bytes());
    for i in 0..h {
        for j in 0..w {
            out.push(to_8bit(img[(i, j)]).round() as u8);
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &DenseMatrix, comments: &[String]) -> Result<()> {
    std::fs::File::create(path.as_ref())?.write_all(&encode_pgm(img, comments))?;
    Ok(())
}
