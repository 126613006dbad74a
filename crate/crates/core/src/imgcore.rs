//! Raster substrate: single-channel planes, 2-D kernels, convolution and
//! summed-area tables.
//!
//! All arithmetic is `f64`. The on-disk float format ([`write_plane`]) stores
//! `f32`, and the conversion happens only at that boundary.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Single-channel real raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized plane {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} values for a {width}x{height} plane",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite pixel value".into()));
        }
        Ok(ImagePlane {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        ImagePlane {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        let mut p = Self::zeros(width, height);
        p.values.fill(value);
        p
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        ImagePlane {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    /// Elementwise `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &ImagePlane, b: f64) -> ImagePlane {
        assert_eq!((self.width, self.height), (other.width, other.height));
        ImagePlane {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// Square kernel of odd side `2*half_width + 1`, optionally carrying the two
/// 1-D factors whose outer product reproduces the taps.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    half_width: usize,
    taps: Vec<f64>,
    separable: Option<(Vec<f64>, Vec<f64>)>,
}

impl Kernel2D {
    /// Non-separable kernel from row-major taps.
    pub fn new(half_width: usize, taps: Vec<f64>) -> Result<Self> {
        let side = 2 * half_width + 1;
        if taps.len() != side * side {
            return Err(Error::invalid(format!(
                "kernel with half width {half_width} needs {} taps, got {}",
                side * side,
                taps.len()
            )));
        }
        Ok(Kernel2D {
            half_width,
            taps,
            separable: None,
        })
    }

    /// Separable kernel `taps[y][x] = horizontal[x] * vertical[y]`. Factors
    /// of unequal (odd) length are zero-padded to a common square support.
    pub fn separable(horizontal: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        if horizontal.len() % 2 == 0 || vertical.len() % 2 == 0 {
            return Err(Error::invalid("separable factors must have odd length"));
        }
        let half_width = horizontal.len().max(vertical.len()) / 2;
        let h = pad_centered(&horizontal, half_width);
        let v = pad_centered(&vertical, half_width);
        let side = 2 * half_width + 1;
        let mut taps = Vec::with_capacity(side * side);
        for vy in &v {
            for hx in &h {
                taps.push(hx * vy);
            }
        }
        Ok(Kernel2D {
            half_width,
            taps,
            separable: Some((h, v)),
        })
    }

    #[inline]
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(dx, dy)` from the centre.
    pub fn tap(&self, dx: isize, dy: isize) -> f64 {
        let r = self.half_width as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.taps[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn separable_factors(&self) -> Option<(&[f64], &[f64])> {
        self.separable
            .as_ref()
            .map(|(h, v)| (h.as_slice(), v.as_slice()))
    }

    /// Same taps with the factorisation dropped; forces the direct path.
    pub fn without_factors(&self) -> Kernel2D {
        Kernel2D {
            half_width: self.half_width,
            taps: self.taps.clone(),
            separable: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.abs()).sum()
    }
}

fn pad_centered(f: &[f64], half_width: usize) -> Vec<f64> {
    let pad = half_width - f.len() / 2;
    let mut out = vec![0.0; pad];
    out.extend_from_slice(f);
    out.resize(2 * half_width + 1, 0.0);
    out
}

/// How samples outside the raster are synthesised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Clamp to the nearest edge pixel.
    #[default]
    Replicate,
    /// Mirror about the edge, edge pixel included (`..., 1, 0 | 0, 1, ...`).
    Reflect,
}

impl BorderPolicy {
    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        let j = match self {
            BorderPolicy::Replicate => i.clamp(0, n - 1),
            BorderPolicy::Reflect => {
                if i < 0 {
                    (-i - 1).min(n - 1)
                } else if i >= n {
                    (2 * n - 1 - i).max(0)
                } else {
                    i
                }
            }
        };
        j as usize
    }
}

/// True 2-D convolution, `out(x,y) = sum K(dx,dy) * I(x-dx, y-dy)`.
///
/// Uses the separable path when the kernel carries factors.
pub fn convolve(image: &ImagePlane, kernel: &Kernel2D, border: BorderPolicy) -> Result<ImagePlane> {
    check_fits(image, kernel)?;
    Ok(match kernel.separable_factors() {
        Some((h, v)) => convolve_separable_unchecked(image, h, v, border),
        None => convolve_direct_unchecked(image, kernel, border),
    })
}

fn check_fits(image: &ImagePlane, kernel: &Kernel2D) -> Result<()> {
    if kernel.side() > image.width || kernel.side() > image.height {
        return Err(Error::KernelExceedsImage {
            kernel: kernel.side(),
            width: image.width,
            height: image.height,
        });
    }
    Ok(())
}

/// Two 1-D passes: horizontal factor along rows, then vertical along columns.
pub fn convolve_separable(
    image: &ImagePlane,
    horizontal: &[f64],
    vertical: &[f64],
    border: BorderPolicy,
) -> Result<ImagePlane> {
    let side = horizontal.len().max(vertical.len());
    if side > image.width || side > image.height {
        return Err(Error::KernelExceedsImage {
            kernel: side,
            width: image.width,
            height: image.height,
        });
    }
    Ok(convolve_separable_unchecked(image, horizontal, vertical, border))
}

fn convolve_separable_unchecked(
    image: &ImagePlane,
    horizontal: &[f64],
    vertical: &[f64],
    border: BorderPolicy,
) -> ImagePlane {
    let tmp = convolve_rows(image, horizontal, border);
    convolve_cols(&tmp, vertical, border)
}

/// 1-D convolution of every row with `taps` (odd length, centred).
pub(crate) fn convolve_rows(image: &ImagePlane, taps: &[f64], border: BorderPolicy) -> ImagePlane {
    let (w, h) = (image.width, image.height);
    let r = taps.len() / 2;
    let nz: Vec<(usize, f64)> = taps
        .iter()
        .enumerate()
        .filter(|(_, t)| **t != 0.0)
        .map(|(k, t)| (k, *t))
        .collect();
    let mut out = vec![0.0; w * h];
    let mut padded = vec![0.0; w + 2 * r];
    for y in 0..h {
        let row = image.row(y);
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[border.index(i as isize - r as isize, w)];
        }
        let dst = &mut out[y * w..(y + 1) * w];
        // out[x] = sum_k taps[k] * in[x - (k - r)] = sum_k taps[k] * padded[x + 2r - k]
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(k, t) in &nz {
                acc += t * padded[x + 2 * r - k];
            }
            *d = acc;
        }
    }
    ImagePlane {
        width: w,
        height: h,
        values: out,
    }
}

/// 1-D convolution of every column with `taps` (odd length, centred).
pub(crate) fn convolve_cols(image: &ImagePlane, taps: &[f64], border: BorderPolicy) -> ImagePlane {
    let (w, h) = (image.width, image.height);
    let r = taps.len() / 2;
    let mut out = vec![0.0; w * h];
    for (k, &t) in taps.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let off = r as isize - k as isize;
        for y in 0..h {
            let src_y = border.index(y as isize + off, h);
            let src = image.row(src_y);
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    ImagePlane {
        width: w,
        height: h,
        values: out,
    }
}

/// Direct nested-loop path; zero taps are skipped.
pub fn convolve_direct(image: &ImagePlane, kernel: &Kernel2D, border: BorderPolicy) -> Result<ImagePlane> {
    check_fits(image, kernel)?;
    Ok(convolve_direct_unchecked(image, kernel, border))
}

fn convolve_direct_unchecked(image: &ImagePlane, kernel: &Kernel2D, border: BorderPolicy) -> ImagePlane {
    let (w, h) = (image.width, image.height);
    let r = kernel.half_width;
    let side = kernel.side();
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = border.index(py as isize - r as isize, h);
        let row = image.row(sy);
        for px in 0..pw {
            padded[py * pw + px] = row[border.index(px as isize - r as isize, w)];
        }
    }
    // out(x,y) = sum K[ky][kx] * padded[y + 2r - ky][x + 2r - kx]
    let mut out = vec![0.0; w * h];
    for ky in 0..side {
        for kx in 0..side {
            let t = kernel.taps[ky * side + kx];
            if t == 0.0 {
                continue;
            }
            for y in 0..h {
                let src = &padded[(y + 2 * r - ky) * pw + 2 * r - kx..][..w];
                let dst = &mut out[y * w..(y + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += t * s;
                }
            }
        }
    }
    ImagePlane {
        width: w,
        height: h,
        values: out,
    }
}

/// Exclusive-prefix summed-area table of size `(w+1) x (h+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    /// Table over `f(x, y)` for every pixel of a `width x height` raster.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut run = 0.0;
            for x in 0..width {
                run += f(x, y);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + run;
            }
        }
        IntegralImage {
            width,
            height,
            table,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Entry `(i, j)` of the table, `0 <= i <= width`, `0 <= j <= height`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.table[j * (self.width + 1) + i]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && y0 <= y1 && x1 <= self.width && y1 <= self.height);
        if x0 == x1 || y0 == y1 {
            return 0.0;
        }
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }

    /// Sum of the magnitudes of the four corners read by [`rect_sum`]; its
    /// rounding error is a small multiple of this times machine epsilon.
    ///
    /// [`rect_sum`]: IntegralImage::rect_sum
    #[inline]
    pub fn rect_magnitude(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.table[y1 * s + x1].abs()
            + self.table[y0 * s + x1].abs()
            + self.table[y1 * s + x0].abs()
            + self.table[y0 * s + x0].abs()
    }
}

/// Summed-area table of the pixel values.
pub fn integral(image: &ImagePlane) -> IntegralImage {
    IntegralImage::from_fn(image.width, image.height, |x, y| image.get(x, y))
}

const PLANE_MAGIC: &[u8; 4] = b"IPLN";

/// Raw float plane: `IPLN`, u32 LE width, u32 LE height, `w*h` LE f32.
pub fn write_plane<W: Write>(mut out: W, plane: &ImagePlane) -> Result<()> {
    out.write_all(PLANE_MAGIC)?;
    out.write_all(&(plane.width as u32).to_le_bytes())?;
    out.write_all(&(plane.height as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(plane.values.len() * 4);
    for v in &plane.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_plane<R: Read>(mut input: R) -> Result<ImagePlane> {
    let mut head = [0u8; 12];
    input.read_exact(&mut head)?;
    if &head[..4] != PLANE_MAGIC {
        return Err(Error::format("bad IPLN magic"));
    }
    let w = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; w * h * 4];
    input.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ImagePlane::new(w, h, values)
}

/// Binary PGM (P5, maxval 255). Values are rounded and clamped to `0..=255`.
pub fn write_pgm<W: Write>(mut out: W, plane: &ImagePlane) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", plane.width, plane.height)?;
    let bytes: Vec<u8> = plane
        .values
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary P5 PGM with maxval 255; pixel values become `0.0..=255.0`.
pub fn read_pgm<R: Read>(mut input: R) -> Result<ImagePlane> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format(format!("unsupported PGM magic {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(format!("bad PGM header field {s}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::format(format!("unsupported PGM maxval {maxval}")));
    }
    if data.len() < pos + w * h {
        return Err(Error::format("truncated PGM raster"));
    }
    let values = data[pos..pos + w * h].iter().map(|&b| b as f64).collect();
    ImagePlane::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_planes() {
        assert!(ImagePlane::new(0, 3, vec![]).is_err());
        assert!(ImagePlane::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImagePlane::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn delta_reproduces_kernel() {
        let mut img = ImagePlane::zeros(9, 9);
        img.set(4, 4, 1.0);
        let k = Kernel2D::new(1, (1..=9).map(|v| v as f64).collect()).unwrap();
        let out = convolve(&img, &k, BorderPolicy::Replicate).unwrap();
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let v = out.get((4 + dx) as usize, (4 + dy) as usize);
                assert_eq!(v, k.tap(dx, dy));
            }
        }
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn constant_image_scales_by_tap_sum() {
        let img = ImagePlane::filled(12, 10, 3.0);
        let k = Kernel2D::separable(vec![1.0, 2.0, -0.5], vec![0.25, 1.0, 0.25, 0.1, 0.0]).unwrap();
        for border in [BorderPolicy::Replicate, BorderPolicy::Reflect] {
            let out = convolve(&img, &k, border).unwrap();
            for v in out.values() {
                assert!((v - 3.0 * k.sum()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_larger_than_image_fails() {
        let img = ImagePlane::zeros(4, 8);
        let k = Kernel2D::new(2, vec![0.0; 25]).unwrap();
        let err = convolve(&img, &k, BorderPolicy::Replicate).unwrap_err();
        assert!(err.to_string().starts_with("kernel-exceeds-image"));
    }

    #[test]
    fn integral_basics() {
        let ones = ImagePlane::filled(2, 2, 1.0);
        let ii = integral(&ones);
        assert_eq!(ii.rect_sum(0, 0, 2, 2), 4.0);
        assert_eq!(ii.rect_sum(1, 0, 1, 2), 0.0);
        for i in 0..=2 {
            assert_eq!(ii.entry(i, 0), 0.0);
            assert_eq!(ii.entry(0, i), 0.0);
        }
    }

    #[test]
    fn reflect_indexing() {
        let b = BorderPolicy::Reflect;
        assert_eq!(b.index(-1, 5), 0);
        assert_eq!(b.index(-2, 5), 1);
        assert_eq!(b.index(5, 5), 4);
        assert_eq!(b.index(6, 5), 3);
    }

    #[test]
    fn pgm_and_plane_round_trip() {
        let img = ImagePlane::from_fn(5, 3, |x, y| (x * 40 + y * 7) as f64);
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img).unwrap();
        assert!(buf.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(read_pgm(&buf[..]).unwrap(), img);

        let mut raw = Vec::new();
        write_plane(&mut raw, &img).unwrap();
        assert_eq!(&raw[..4], b"IPLN");
        assert_eq!(raw.len(), 12 + 15 * 4);
        assert_eq!(read_plane(&raw[..]).unwrap(), img);
    }

    #[test]
    fn pgm_header_comments() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[7, 9]);
        let p = read_pgm(&data[..]).unwrap();
        assert_eq!(p.values(), &[7.0, 9.0]);
    }
}
