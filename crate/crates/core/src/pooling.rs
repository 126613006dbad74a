//! Channel meta features (T2 transform over a two-layer 4x4 grid) and the
//! per-patch pooled descriptors with SIFT-like normalisation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grfbank::ReceptiveMaps;
use crate::imgcore::{ImagePlane, IntegralImage};
use crate::patchpool::{self, CellRect, PatchSpec, CELLS, GRID};

/// Dimension of a channel meta feature: 32 * (1 + 16).
pub const META_DIM: usize = 2 * CELLS * (1 + CELLS);

/// Default clipping threshold of [`normalize_sift`].
pub const DEFAULT_CLIP: f64 = 0.2;

/// Per-cell statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolingKind {
    Max,
    /// Cell mean.
    Mu,
    /// Cell standard deviation.
    Sigma,
    /// Centred `(1,1)` image moment.
    Moment,
    /// Mean T2 pair `(E[|L|+L], E[|L|-L])`; two values per cell.
    T2,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 5] = [
        PoolingKind::Max,
        PoolingKind::Mu,
        PoolingKind::Sigma,
        PoolingKind::Moment,
        PoolingKind::T2,
    ];

    pub fn values_per_cell(self) -> usize {
        match self {
            PoolingKind::T2 => 2,
            _ => 1,
        }
    }

    /// Descriptor dimension for `channels` active channels.
    pub fn descriptor_dim(self, channels: usize) -> usize {
        CELLS * self.values_per_cell() * channels
    }

    pub fn code(self) -> u8 {
        match self {
            PoolingKind::Max => 0,
            PoolingKind::Mu => 1,
            PoolingKind::Sigma => 2,
            PoolingKind::Moment => 3,
            PoolingKind::T2 => 4,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.code() == c)
            .ok_or_else(|| Error::format(format!("unknown pooling code {c}")))
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingKind::Max => "max",
            PoolingKind::Mu => "mu",
            PoolingKind::Sigma => "sigma",
            PoolingKind::Moment => "moment",
            PoolingKind::T2 => "t2",
        })
    }
}

impl FromStr for PoolingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown pooling kind {s}")))
    }
}

/// T2 transform of one cell: `(sum(|v|+v), sum(|v|-v))`.
pub fn t2_cell(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyCell);
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for &v in values {
        pos += v.abs() + v;
        neg += v.abs() - v;
    }
    Ok((pos, neg))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaFeature {
    pub channel: usize,
    pub values: Vec<f64>,
}

/// 544-dim meta feature of one channel map: T2 pairs over a 4x4 grid (32
/// values) followed by T2 pairs over the 4x4 sub-grid of every cell (512
/// values), row-major throughout.
pub fn channel_meta_feature(map: &ImagePlane) -> Result<Vec<f64>> {
    let (w, h) = (map.width(), map.height());
    if w < GRID * GRID || h < GRID * GRID {
        return Err(Error::MapTooSmall { width: w, height: h });
    }
    // sub-cell index along each axis: 0..16
    let col_bin = sub_bins(w);
    let row_bin = sub_bins(h);
    let mut pos = [0.0f64; CELLS * CELLS];
    let mut neg = [0.0f64; CELLS * CELLS];
    for y in 0..h {
        let rb = row_bin[y];
        let row = map.row(y);
        for (x, &v) in row.iter().enumerate() {
            let cb = col_bin[x];
            // global sub-cell id ordered by (cell row, cell col, sub row, sub col)
            let id = ((rb / GRID) * GRID + cb / GRID) * CELLS + (rb % GRID) * GRID + cb % GRID;
            pos[id] += v.abs() + v;
            neg[id] += v.abs() - v;
        }
    }
    let mut out = Vec::with_capacity(META_DIM);
    for cell in 0..CELLS {
        let (mut p, mut n) = (0.0, 0.0);
        for sub in 0..CELLS {
            p += pos[cell * CELLS + sub];
            n += neg[cell * CELLS + sub];
        }
        out.push(p);
        out.push(n);
    }
    for i in 0..CELLS * CELLS {
        out.push(pos[i]);
        out.push(neg[i]);
    }
    Ok(out)
}

/// For each coordinate, its index among the 16 sub-spans (4 cells x 4 sub-cells).
fn sub_bins(len: usize) -> Vec<usize> {
    let cells = patchpool::split_span(len, GRID);
    let mut bins = vec![0; len];
    for c in 0..GRID {
        let sub = patchpool::split_span(cells[c + 1] - cells[c], GRID);
        for s in 0..GRID {
            for b in &mut bins[cells[c] + sub[s]..cells[c] + sub[s + 1]] {
                *b = c * GRID + s;
            }
        }
    }
    bins
}

/// Summed-area tables of one channel map, built per statistic on demand.
#[derive(Clone, Debug)]
pub struct ChannelTables {
    pub sum: IntegralImage,
    pub abs: Option<IntegralImage>,
    pub sq: Option<IntegralImage>,
    /// Coordinate-weighted tables `x L`, `y L`, `x y L`, with coordinates
    /// measured from `origin`.
    pub moments: Option<[IntegralImage; 3]>,
    pub origin: (f64, f64),
}

impl ChannelTables {
    pub fn build(map: &ImagePlane, kinds: &[PoolingKind]) -> Self {
        let (w, h) = (map.width(), map.height());
        let want = |k: PoolingKind| kinds.contains(&k);
        let origin = (w as f64 / 2.0, h as f64 / 2.0);
        let sum = IntegralImage::from_fn(w, h, |x, y| map.get(x, y));
        let abs = want(PoolingKind::T2).then(|| IntegralImage::from_fn(w, h, |x, y| map.get(x, y).abs()));
        let sq = want(PoolingKind::Sigma).then(|| {
            IntegralImage::from_fn(w, h, |x, y| {
                let v = map.get(x, y);
                v * v
            })
        });
        let moments = want(PoolingKind::Moment).then(|| {
            let (ox, oy) = origin;
            [
                IntegralImage::from_fn(w, h, |x, y| (x as f64 - ox) * map.get(x, y)),
                IntegralImage::from_fn(w, h, |x, y| (y as f64 - oy) * map.get(x, y)),
                IntegralImage::from_fn(w, h, |x, y| (x as f64 - ox) * (y as f64 - oy) * map.get(x, y)),
            ]
        });
        ChannelTables {
            sum,
            abs,
            sq,
            moments,
            origin,
        }
    }
}

/// Tables for every plane of `maps`.
pub fn build_tables(maps: &ReceptiveMaps, kinds: &[PoolingKind]) -> Vec<ChannelTables> {
    maps.planes.iter().map(|p| ChannelTables::build(p, kinds)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDescriptor {
    pub patch: usize,
    pub kind: PoolingKind,
    pub values: Vec<f64>,
    pub normalized: bool,
}

fn cell_stats(map: &ImagePlane, t: &ChannelTables, c: &CellRect, kind: PoolingKind, out: &mut Vec<f64>) {
    let n = c.area() as f64;
    let s = t.sum.rect_sum(c.x0, c.y0, c.x1, c.y1);
    match kind {
        PoolingKind::Max => {
            let mut m = f64::NEG_INFINITY;
            for y in c.y0..c.y1 {
                for &v in &map.row(y)[c.x0..c.x1] {
                    m = m.max(v);
                }
            }
            out.push(m);
        }
        PoolingKind::Mu => out.push(s / n),
        PoolingKind::Sigma => {
            let sq = t.sq.as_ref().expect("sigma table").rect_sum(c.x0, c.y0, c.x1, c.y1) / n;
            let mu = s / n;
            let var = sq - mu * mu;
            // below the cancellation floor the cell is constant
            let var = if var <= 1e-10 * sq { 0.0 } else { var };
            out.push(var.sqrt());
        }
        PoolingKind::Moment => {
            let [tx, ty, txy] = t.moments.as_ref().expect("moment tables");
            let sx = tx.rect_sum(c.x0, c.y0, c.x1, c.y1);
            let sy = ty.rect_sum(c.x0, c.y0, c.x1, c.y1);
            let sxy = txy.rect_sum(c.x0, c.y0, c.x1, c.y1);
            let xc = (c.x0 + c.x1 - 1) as f64 / 2.0 - t.origin.0;
            let yc = (c.y0 + c.y1 - 1) as f64 / 2.0 - t.origin.1;
            let terms = [sxy, -yc * sx, -xc * sy, xc * yc * s];
            let m: f64 = terms.iter().sum();
            // cancellation happens both between terms and inside each
            // four-corner lookup
            let scale: f64 = txy.rect_magnitude(c.x0, c.y0, c.x1, c.y1)
                + yc.abs() * tx.rect_magnitude(c.x0, c.y0, c.x1, c.y1)
                + xc.abs() * ty.rect_magnitude(c.x0, c.y0, c.x1, c.y1)
                + (xc * yc).abs() * t.sum.rect_magnitude(c.x0, c.y0, c.x1, c.y1);
            out.push(if m.abs() <= 1e-10 * scale { 0.0 } else { m });
        }
        PoolingKind::T2 => {
            let a = t.abs.as_ref().expect("abs table").rect_sum(c.x0, c.y0, c.x1, c.y1);
            out.push((a + s) / n);
            out.push((a - s) / n);
        }
    }
}

/// Pools one patch over every channel of `maps`: channel-major, then
/// row-major cells (then the T2 pair, for [`PoolingKind::T2`]).
pub fn pool_patch(
    maps: &ReceptiveMaps,
    patch: &PatchSpec,
    kind: PoolingKind,
    tables: &[ChannelTables],
) -> Result<Vec<f64>> {
    if maps.is_empty() {
        return Err(Error::NoActiveChannels);
    }
    if !patch.fits(maps.width(), maps.height()) {
        return Err(Error::PatchOutOfBounds {
            x: patch.x,
            y: patch.y,
            w: patch.w,
            h: patch.h,
        });
    }
    if tables.len() != maps.len() {
        return Err(Error::DimMismatch {
            expected: maps.len(),
            got: tables.len(),
        });
    }
    let cells = patch.cells();
    let mut out = Vec::with_capacity(kind.descriptor_dim(maps.len()));
    for (plane, t) in maps.planes.iter().zip(tables) {
        for c in &cells {
            cell_stats(plane, t, c, kind, &mut out);
        }
    }
    Ok(out)
}

/// L2-normalise, clip every entry to `[-clip, clip]`, L2-normalise again.
/// An all-zero vector stays all-zero.
pub fn normalize_sift(values: &mut [f64], clip: f64) {
    fn unit(v: &mut [f64]) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    unit(values);
    values.iter_mut().for_each(|x| *x = x.clamp(-clip, clip));
    unit(values);
}

/// Pooled and normalised descriptors of `patches` for one face.
pub fn describe_patches(
    maps: &ReceptiveMaps,
    tables: &[ChannelTables],
    patches: &[PatchSpec],
    kind: PoolingKind,
    clip: f64,
) -> Result<Vec<Vec<f64>>> {
    patches
        .iter()
        .map(|p| {
            let mut d = pool_patch(maps, p, kind, tables)?;
            normalize_sift(&mut d, clip);
            Ok(d)
        })
        .collect()
}

const DESC_MAGIC: &[u8; 4] = b"FDSC";

/// Descriptor dump: `FDSC`, u32 patch count, then per patch u32 dim and
/// LE f32 values.
pub fn write_descriptors<W: Write>(mut out: W, descriptors: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DESC_MAGIC);
    buf.extend_from_slice(&(descriptors.len() as u32).to_le_bytes());
    for d in descriptors {
        buf.extend_from_slice(&(d.len() as u32).to_le_bytes());
        for v in d {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_descriptors<R: Read>(mut input: R) -> Result<Vec<Vec<f64>>> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut cur = crate::wire::Cursor::new(&data);
    if cur.take(4)? != DESC_MAGIC {
        return Err(Error::format("bad FDSC magic"));
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let dim = cur.u32()? as usize;
        let mut d = Vec::with_capacity(dim);
        for _ in 0..dim {
            d.push(cur.f32()? as f64);
        }
        out.push(d);
    }
    cur.finish()?;
    Ok(out)
}
