//! The Gaussian receptive field channel family and multi-channel map
//! computation.
//!
//! A channel is a derivative order `(m, n)` with `0 < m + n <= 4`, a smooth
//! kernel size `s` in `{0, 3, 5, 7}` and an orientation. Smoothing uses a
//! sampled Gaussian with `sigma = s / 3` (unit sum, radius `s`); `s = 0`
//! means no smoothing. Derivatives are repeated central differences
//! `[-1/2, 0, 1/2]`, so every channel kernel factors as
//! `derivative stencil * Gaussian`. That factorisation is what lets
//! [`compute_maps`] smooth once per smooth size and differentiate the shared
//! smoothed plane, and it is exact: the result equals convolving with the
//! full [`build_kernel`] output away from the image border.
//!
//! Diagonal channels rotate the derivative stencil by 45 degrees (bilinear
//! resampling on a support enlarged by sqrt 2) before smoothing.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::{self, BorderPolicy, ImagePlane, Kernel2D};

pub const SMOOTH_SIZES: [u32; 4] = [0, 3, 5, 7];
pub const MAX_ORDER: u32 = 4;
pub const FULL_BANK_LEN: usize = 112;
pub const BANK_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    AxisAligned,
    Diagonal,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::AxisAligned => "axis",
            Orientation::Diagonal => "diagonal",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis" => Ok(Orientation::AxisAligned),
            "diagonal" => Ok(Orientation::Diagonal),
            other => Err(Error::format(format!("unknown orientation {other}"))),
        }
    }
}

/// One Gaussian receptive map: derivative orders, smooth size, orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChannelSpec {
    pub m: u32,
    pub n: u32,
    pub smooth_size: u32,
    pub orientation: Orientation,
}

impl ChannelSpec {
    pub fn new(m: u32, n: u32, smooth_size: u32, orientation: Orientation) -> Result<Self> {
        let spec = ChannelSpec {
            m,
            n,
            smooth_size,
            orientation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m + self.n == 0 || self.m + self.n > MAX_ORDER {
            return Err(Error::InvalidDerivativeOrder {
                m: self.m,
                n: self.n,
            });
        }
        if !SMOOTH_SIZES.contains(&self.smooth_size) {
            return Err(Error::InvalidSmoothSize(self.smooth_size));
        }
        Ok(())
    }

    /// Gaussian scale; zero means unsmoothed.
    pub fn sigma(&self) -> f64 {
        self.smooth_size as f64 / 3.0
    }

    pub fn order(&self) -> u32 {
        self.m + self.n
    }

    /// Position in the canonical 112-entry enumeration.
    pub fn canonical_index(&self) -> usize {
        let o = match self.orientation {
            Orientation::AxisAligned => 0,
            Orientation::Diagonal => 1,
        };
        let s = SMOOTH_SIZES
            .iter()
            .position(|&s| s == self.smooth_size)
            .expect("validated smooth size");
        let mn = derivative_orders()
            .iter()
            .position(|&(m, n)| m == self.m && n == self.n)
            .expect("validated order");
        (o * SMOOTH_SIZES.len() + s) * 14 + mn
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L({},{}) s={} {}",
            self.m, self.n, self.smooth_size, self.orientation
        )
    }
}

/// The 14 `(m, n)` pairs with `0 < m + n <= 4`, lexicographic.
pub fn derivative_orders() -> &'static [(u32, u32)] {
    static ORDERS: OnceLock<Vec<(u32, u32)>> = OnceLock::new();
    ORDERS.get_or_init(|| {
        let mut v = Vec::new();
        for m in 0..=MAX_ORDER {
            for n in 0..=MAX_ORDER {
                if m + n > 0 && m + n <= MAX_ORDER {
                    v.push((m, n));
                }
            }
        }
        v
    })
}

/// Ordered channel family with an activation mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelBank {
    specs: Vec<ChannelSpec>,
    active: Vec<bool>,
}

impl ChannelBank {
    /// Bank over `specs` (in the given order), all inactive.
    pub fn from_specs(specs: Vec<ChannelSpec>) -> Result<Self> {
        for s in &specs {
            s.validate()?;
        }
        let active = vec![false; specs.len()];
        Ok(ChannelBank { specs, active })
    }

    pub fn specs(&self) -> &[ChannelSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    /// Number of active channels (`P`).
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn set_active(&mut self, i: usize, on: bool) {
        self.active[i] = on;
    }

    /// Clears the mask, then activates `indices`.
    pub fn activate_only(&mut self, indices: &[usize]) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("channel index {bad} out of range")));
        }
        self.active.fill(false);
        for &i in indices {
            self.active[i] = true;
        }
        Ok(())
    }

    /// Text form: a version header followed by `m n smooth orientation active`.
    pub fn to_text(&self) -> String {
        let mut s = format!("grfbank v{BANK_VERSION} sigma=s/3 diagonal=rotated-stencil\n");
        for (spec, on) in self.specs.iter().zip(&self.active) {
            s.push_str(&format!(
                "{} {} {} {} {}\n",
                spec.m, spec.n, spec.smooth_size, spec.orientation, *on as u8
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("empty bank file"))?;
        let version = header
            .split_whitespace()
            .nth(1)
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok());
        if !header.starts_with("grfbank") || version != Some(BANK_VERSION) {
            return Err(Error::format(format!("unsupported bank header: {header}")));
        }
        let mut specs = Vec::new();
        let mut active = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::format(format!("bad bank line: {line}")));
            }
            let num = |s: &str| {
                s.parse::<u32>()
                    .map_err(|_| Error::format(format!("bad bank field {s}")))
            };
            specs.push(ChannelSpec::new(num(f[0])?, num(f[1])?, num(f[2])?, f[3].parse()?)?);
            active.push(match f[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::format(format!("bad active flag {other}"))),
            });
        }
        Ok(ChannelBank { specs, active })
    }
}

/// All 112 channels in canonical order (orientation, smooth size, `(m, n)`),
/// all inactive.
pub fn enumerate_full_bank() -> ChannelBank {
    enumerate_bank(&[Orientation::AxisAligned, Orientation::Diagonal], &SMOOTH_SIZES)
}

/// Canonical enumeration restricted to the given orientations and smooth
/// sizes (debug helper; 56 specs for axis-aligned only).
pub fn enumerate_bank(orientations: &[Orientation], smooth_sizes: &[u32]) -> ChannelBank {
    let mut specs = Vec::new();
    for &o in [Orientation::AxisAligned, Orientation::Diagonal]
        .iter()
        .filter(|o| orientations.contains(o))
    {
        for &s in SMOOTH_SIZES.iter().filter(|s| smooth_sizes.contains(s)) {
            for &(m, n) in derivative_orders() {
                specs.push(ChannelSpec {
                    m,
                    n,
                    smooth_size: s,
                    orientation: o,
                });
            }
        }
    }
    let active = vec![false; specs.len()];
    ChannelBank { specs, active }
}

/// Unit-sum sampled Gaussian with `sigma = s/3` and radius `ceil(3 sigma)`.
pub fn gaussian_taps(smooth_size: u32) -> Vec<f64> {
    if smooth_size == 0 {
        return vec![1.0];
    }
    let sigma = smooth_size as f64 / 3.0;
    let r = (3.0 * sigma).ceil() as i64;
    let mut g: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    g
}

/// `order`-fold convolution power of the central difference `[-1/2, 0, 1/2]`.
pub fn difference_taps(order: u32) -> Vec<f64> {
    let mut d = vec![1.0];
    for _ in 0..order {
        d = convolve_1d(&d, &[-0.5, 0.0, 0.5]);
    }
    d
}

fn convolve_1d(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Full 2-D convolution of two odd square kernels.
fn convolve_kernels(a: &Kernel2D, b: &Kernel2D) -> Kernel2D {
    let r = a.half_width() + b.half_width();
    let side = 2 * r + 1;
    let mut taps = vec![0.0; side * side];
    let (ra, rb) = (a.half_width() as isize, b.half_width() as isize);
    for ay in -ra..=ra {
        for ax in -ra..=ra {
            let ta = a.tap(ax, ay);
            if ta == 0.0 {
                continue;
            }
            for by in -rb..=rb {
                for bx in -rb..=rb {
                    let idx = ((ay + by + r as isize) as usize) * side + (ax + bx + r as isize) as usize;
                    taps[idx] += ta * b.tap(bx, by);
                }
            }
        }
    }
    Kernel2D::new(r, taps).expect("consistent side")
}

/// The derivative part of a channel, applied after smoothing.
#[derive(Clone, Debug)]
pub enum DerivativeStencil {
    /// Horizontal and vertical central-difference powers.
    Separable(Vec<f64>, Vec<f64>),
    /// Rotated (diagonal) stencil, applied directly.
    Direct(Kernel2D),
}

impl DerivativeStencil {
    pub fn apply(&self, plane: &ImagePlane, border: BorderPolicy) -> ImagePlane {
        match self {
            DerivativeStencil::Separable(h, v) => {
                let tmp = imgcore::convolve_rows(plane, h, border);
                imgcore::convolve_cols(&tmp, v, border)
            }
            DerivativeStencil::Direct(k) => {
                imgcore::convolve_direct(plane, k, border).expect("stencil fits validated face")
            }
        }
    }

    fn as_kernel(&self) -> Kernel2D {
        match self {
            DerivativeStencil::Separable(h, v) => Kernel2D::separable(h.clone(), v.clone()).unwrap(),
            DerivativeStencil::Direct(k) => k.clone(),
        }
    }

    fn half_width(&self) -> usize {
        match self {
            DerivativeStencil::Separable(h, v) => h.len().max(v.len()) / 2,
            DerivativeStencil::Direct(k) => k.half_width(),
        }
    }
}

/// Derivative stencil of a channel (smoothing excluded).
pub fn derivative_stencil(spec: &ChannelSpec) -> Result<DerivativeStencil> {
    spec.validate()?;
    let h = difference_taps(spec.m);
    let v = difference_taps(spec.n);
    Ok(match spec.orientation {
        Orientation::AxisAligned => DerivativeStencil::Separable(h, v),
        Orientation::Diagonal => {
            let axis = Kernel2D::separable(h, v).unwrap();
            DerivativeStencil::Direct(rotate45(&axis, spec.order() % 2 == 1))
        }
    })
}

/// Resamples `kernel` rotated by +45 degrees with bilinear interpolation on
/// a support enlarged by sqrt 2. Odd kernels are re-centred to zero sum;
/// even kernels are rescaled to the original absolute tap sum.
pub fn rotate45(kernel: &Kernel2D, odd: bool) -> Kernel2D {
    let r = kernel.half_width();
    let big = (r as f64 * std::f64::consts::SQRT_2).ceil() as usize;
    let side = 2 * big + 1;
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let mut taps = Vec::with_capacity(side * side);
    for v in -(big as isize)..=big as isize {
        for u in -(big as isize)..=big as isize {
            let (u, v) = (u as f64, v as f64);
            // inverse rotation of the output coordinate
            let x = u * c + v * c;
            let y = -u * c + v * c;
            taps.push(bilinear_tap(kernel, x, y));
        }
    }
    if odd {
        // antisymmetric up to rounding; push the residual into the centre tap
        let residual: f64 = taps.iter().sum();
        taps[big * side + big] -= residual;
    } else {
        let target = kernel.abs_sum();
        let got: f64 = taps.iter().map(|t| t.abs()).sum();
        if got > 0.0 {
            let s = target / got;
            taps.iter_mut().for_each(|t| *t *= s);
        }
    }
    Kernel2D::new(big, taps).unwrap()
}

fn bilinear_tap(kernel: &Kernel2D, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    kernel.tap(xi, yi) * (1.0 - fx) * (1.0 - fy)
        + kernel.tap(xi + 1, yi) * fx * (1.0 - fy)
        + kernel.tap(xi, yi + 1) * (1.0 - fx) * fy
        + kernel.tap(xi + 1, yi + 1) * fx * fy
}

/// Sampled kernel of a channel: derivative stencil convolved with the
/// smoothing Gaussian. Axis-aligned kernels carry separable factors.
pub fn build_kernel(spec: &ChannelSpec) -> Result<Kernel2D> {
    let stencil = derivative_stencil(spec)?;
    let g = gaussian_taps(spec.smooth_size);
    Ok(match stencil {
        DerivativeStencil::Separable(h, v) => {
            Kernel2D::separable(convolve_1d(&g, &h), convolve_1d(&g, &v))?
        }
        DerivativeStencil::Direct(k) => {
            if spec.smooth_size == 0 {
                k
            } else {
                let gk = Kernel2D::separable(g.clone(), g).unwrap();
                convolve_kernels(&k, &gk)
            }
        }
    })
}

/// Pre-built filters for every canonical channel.
struct FilterTable {
    stencils: Vec<DerivativeStencil>,
}

fn filter_table() -> &'static FilterTable {
    static TABLE: OnceLock<FilterTable> = OnceLock::new();
    TABLE.get_or_init(|| FilterTable {
        stencils: enumerate_full_bank()
            .specs()
            .iter()
            .map(|s| derivative_stencil(s).unwrap())
            .collect(),
    })
}

fn cached_stencil(spec: &ChannelSpec) -> &'static DerivativeStencil {
    &filter_table().stencils[spec.canonical_index()]
}

/// Largest kernel half width any channel of `bank` needs.
pub fn max_half_width(bank: &ChannelBank) -> usize {
    bank.specs()
        .iter()
        .map(|s| gaussian_taps(s.smooth_size).len() / 2 + cached_stencil(s).half_width())
        .max()
        .unwrap_or(0)
}

/// Receptive maps of one face, one plane per active channel in bank order.
#[derive(Clone, Debug)]
pub struct ReceptiveMaps {
    pub source: String,
    /// Bank indices of the planes.
    pub channels: Vec<usize>,
    pub planes: Vec<ImagePlane>,
}

impl ReceptiveMaps {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }
}

/// Maps for every active channel. The face is smoothed once per distinct
/// smooth size; each channel then differentiates its shared smoothed plane.
pub fn compute_maps(face: &ImagePlane, bank: &ChannelBank) -> Result<ReceptiveMaps> {
    compute_maps_named(face, bank, "")
}

pub fn compute_maps_named(face: &ImagePlane, bank: &ChannelBank, source: &str) -> Result<ReceptiveMaps> {
    let active = bank.active_indices();
    if active.is_empty() {
        return Err(Error::NoActiveChannels);
    }
    let border = BorderPolicy::Replicate;
    let need = 2 * max_half_width(bank) + 1;
    if need > face.width() || need > face.height() {
        return Err(Error::KernelExceedsImage {
            kernel: need,
            width: face.width(),
            height: face.height(),
        });
    }
    let mut smoothed: Vec<(u32, ImagePlane)> = Vec::new();
    for &s in &SMOOTH_SIZES {
        if active.iter().any(|&i| bank.specs()[i].smooth_size == s) {
            let plane = if s == 0 {
                face.clone()
            } else {
                let g = gaussian_taps(s);
                imgcore::convolve_separable(face, &g, &g, border)?
            };
            smoothed.push((s, plane));
        }
    }
    let planes = active
        .par_iter()
        .map(|&i| {
            let spec = &bank.specs()[i];
            let base = &smoothed.iter().find(|(s, _)| *s == spec.smooth_size).unwrap().1;
            cached_stencil(spec).apply(base, border)
        })
        .collect();
    Ok(ReceptiveMaps {
        source: source.to_string(),
        channels: active,
        planes,
    })
}

/// Per-channel reference path: convolve with the full [`build_kernel`]
/// output. Used to check the shared-smoothing path.
pub fn compute_maps_naive(face: &ImagePlane, bank: &ChannelBank) -> Result<ReceptiveMaps> {
    let active = bank.active_indices();
    if active.is_empty() {
        return Err(Error::NoActiveChannels);
    }
    let planes = active
        .iter()
        .map(|&i| {
            let k = build_kernel(&bank.specs()[i])?;
            imgcore::convolve(face, &k, BorderPolicy::Replicate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReceptiveMaps {
        source: String::new(),
        channels: active,
        planes,
    })
}

/// Composite kernel half width for one channel (smoothing + stencil).
pub fn channel_half_width(spec: &ChannelSpec) -> usize {
    gaussian_taps(spec.smooth_size).len() / 2 + cached_stencil(spec).half_width()
}

/// Derivative-then-smooth ordering, for checking that the two orders agree.
pub fn differentiate_then_smooth(face: &ImagePlane, spec: &ChannelSpec) -> Result<ImagePlane> {
    let border = BorderPolicy::Replicate;
    let d = derivative_stencil(spec)?.apply(face, border);
    let g = gaussian_taps(spec.smooth_size);
    imgcore::convolve_separable(&d, &g, &g, border)
}

/// Stencil as a plain kernel (debugging and docs).
pub fn stencil_kernel(spec: &ChannelSpec) -> Result<Kernel2D> {
    Ok(derivative_stencil(spec)?.as_kernel())
}
