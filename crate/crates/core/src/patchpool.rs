//! Over-complete pool of sliding-window patches, each pooled over a 4x4
//! cell grid.
//!
//! Window sizes follow `(unit*k*a, unit*k*b)` for each aspect ratio `a:b` and
//! `k = 1, 2, ...`, where `unit` defaults to three strides (12 pixels at
//! stride 4). Windows slide by `stride` and are kept only when they fit the
//! face and every cell holds at least `min_cell_pixels` pixels.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub const GRID: usize = 4;
pub const CELLS: usize = GRID * GRID;
pub const POOL_VERSION: u32 = 1;

/// The nine window aspect ratios `w:h`.
pub const ASPECT_RATIOS: [(usize, usize); 9] = [
    (1, 1),
    (1, 2),
    (1, 3),
    (1, 4),
    (2, 1),
    (3, 1),
    (4, 1),
    (2, 3),
    (3, 2),
];

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Splits `len` into `parts` near-equal spans; the remainder goes to the
/// trailing spans. Returns the `parts + 1` boundaries.
pub fn split_span(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let rem = len % parts;
    let mut b = Vec::with_capacity(parts + 1);
    let mut at = 0;
    b.push(0);
    for i in 0..parts {
        at += base + usize::from(i >= parts - rem);
        b.push(at);
    }
    b
}

/// One rectangular window with its 4x4 cell grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchSpec {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PatchSpec {
    /// The 16 cells in row-major order.
    pub fn cells(&self) -> [CellRect; CELLS] {
        grid_cells(self.x, self.y, self.w, self.h)
    }

    /// Pixel count of the smallest cell.
    pub fn min_cell_pixels(&self) -> usize {
        (self.w / GRID) * (self.h / GRID)
    }

    pub fn fits(&self, face_w: usize, face_h: usize) -> bool {
        self.x + self.w <= face_w && self.y + self.h <= face_h
    }

    fn sort_key(&self) -> (usize, usize, usize, usize) {
        (self.w, self.h, self.y, self.x)
    }
}

/// 4x4 near-equal grid over a rectangle, row-major.
pub fn grid_cells(x: usize, y: usize, w: usize, h: usize) -> [CellRect; CELLS] {
    let xs = split_span(w, GRID);
    let ys = split_span(h, GRID);
    let mut out = [CellRect {
        x0: 0,
        y0: 0,
        x1: 0,
        y1: 0,
    }; CELLS];
    for cy in 0..GRID {
        for cx in 0..GRID {
            out[cy * GRID + cx] = CellRect {
                x0: x + xs[cx],
                y0: y + ys[cy],
                x1: x + xs[cx + 1],
                y1: y + ys[cy + 1],
            };
        }
    }
    out
}

/// Generation parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolConfig {
    pub stride: usize,
    pub min_cell_pixels: usize,
    pub ratios: Vec<(usize, usize)>,
    /// Window sizes are `scale_unit * k * (a, b)`.
    pub scale_unit: usize,
}

impl PoolConfig {
    /// Nine ratios, scale unit of three strides.
    pub fn standard(stride: usize, min_cell_pixels: usize) -> Self {
        PoolConfig {
            stride,
            min_cell_pixels,
            ratios: ASPECT_RATIOS.to_vec(),
            scale_unit: 3 * stride,
        }
    }

    /// Candidate window sizes (before the cell constraint).
    pub fn window_sizes(&self, face_w: usize, face_h: usize) -> Vec<(usize, usize)> {
        let mut sizes = BTreeSet::new();
        for &(a, b) in &self.ratios {
            let mut k = 1;
            loop {
                let (w, h) = (self.scale_unit * k * a, self.scale_unit * k * b);
                if w > face_w || h > face_h {
                    break;
                }
                sizes.insert((w, h));
                k += 1;
            }
        }
        sizes.into_iter().collect()
    }
}

/// Ordered patch family with an activation mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPool {
    specs: Vec<PatchSpec>,
    active: Vec<bool>,
    face_w: usize,
    face_h: usize,
    config: PoolConfig,
}

impl PatchPool {
    pub fn specs(&self) -> &[PatchSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn face_size(&self) -> (usize, usize) {
        (self.face_w, self.face_h)
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    /// Number of active patches (`Q`).
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn activate_only(&mut self, indices: &[usize]) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("patch index {bad} out of range")));
        }
        self.active.fill(false);
        for &i in indices {
            self.active[i] = true;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let ratios: Vec<String> = self.config.ratios.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let mut s = format!(
            "patchpool v{POOL_VERSION} face={}x{} stride={} min_cell={} unit={} ratios={}\n",
            self.face_w,
            self.face_h,
            self.config.stride,
            self.config.min_cell_pixels,
            self.config.scale_unit,
            ratios.join(",")
        );
        for (p, on) in self.specs.iter().zip(&self.active) {
            s.push_str(&format!("{} {} {} {} {}\n", p.x, p.y, p.w, p.h, *on as u8));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("empty pool file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("patchpool") || fields.next() != Some("v1") {
            return Err(Error::format(format!("unsupported pool header: {header}")));
        }
        let mut face = None;
        let mut config = PoolConfig::standard(4, 30);
        for kv in fields {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::format(format!("bad pool header field {kv}")))?;
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(format!("bad pool header value {s}")))
            };
            match k {
                "face" => {
                    let (w, h) = v.split_once('x').ok_or_else(|| Error::format("bad face size"))?;
                    face = Some((num(w)?, num(h)?));
                }
                "stride" => config.stride = num(v)?,
                "min_cell" => config.min_cell_pixels = num(v)?,
                "unit" => config.scale_unit = num(v)?,
                "ratios" => {
                    config.ratios = v
                        .split(',')
                        .map(|r| {
                            let (a, b) = r.split_once(':').ok_or_else(|| Error::format("bad ratio"))?;
                            Ok((num(a)?, num(b)?))
                        })
                        .collect::<Result<_>>()?
                }
                _ => return Err(Error::format(format!("unknown pool header key {k}"))),
            }
        }
        let (face_w, face_h) = face.ok_or_else(|| Error::format("pool header lacks face size"))?;
        let mut specs = Vec::new();
        let mut active = Vec::new();
        for line in lines {
            let f: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::format(format!("bad pool line: {line}"))))
                .collect::<Result<_>>()?;
            if f.len() != 5 || f[4] > 1 {
                return Err(Error::format(format!("bad pool line: {line}")));
            }
            let p = PatchSpec {
                x: f[0],
                y: f[1],
                w: f[2],
                h: f[3],
            };
            if !p.fits(face_w, face_h) {
                return Err(Error::PatchOutOfBounds {
                    x: p.x,
                    y: p.y,
                    w: p.w,
                    h: p.h,
                });
            }
            specs.push(p);
            active.push(f[4] == 1);
        }
        Ok(PatchPool {
            specs,
            active,
            face_w,
            face_h,
            config,
        })
    }
}

/// Standard pool: nine ratios, scale unit of three strides.
pub fn generate_pool(face_w: usize, face_h: usize, stride: usize, min_cell_pixels: usize) -> Result<PatchPool> {
    generate_pool_with(face_w, face_h, &PoolConfig::standard(stride, min_cell_pixels))
}

pub fn generate_pool_with(face_w: usize, face_h: usize, config: &PoolConfig) -> Result<PatchPool> {
    if face_w < 32 || face_h < 32 {
        return Err(Error::invalid(format!("face {face_w}x{face_h} smaller than 32x32")));
    }
    if config.stride == 0 || config.scale_unit == 0 {
        return Err(Error::invalid("stride and scale unit must be positive"));
    }
    let mut specs = Vec::new();
    for (w, h) in config.window_sizes(face_w, face_h) {
        let probe = PatchSpec { x: 0, y: 0, w, h };
        if probe.min_cell_pixels() < config.min_cell_pixels {
            continue;
        }
        let mut y = 0;
        while y + h <= face_h {
            let mut x = 0;
            while x + w <= face_w {
                specs.push(PatchSpec { x, y, w, h });
                x += config.stride;
            }
            y += config.stride;
        }
    }
    if specs.is_empty() {
        return Err(Error::EmptyPool);
    }
    specs.sort_by_key(|p| p.sort_key());
    let active = vec![false; specs.len()];
    Ok(PatchPool {
        specs,
        active,
        face_w,
        face_h,
        config: config.clone(),
    })
}
