//! Synthetic identity benchmark. Each subject owns a latent vector that
//! parameterises a set of oriented Gabor-like blobs laid over a common face
//! template; each image adds a gain, a smooth warp, a small per-image
//! perturbation of the blobs, and Gaussian noise. Rasters are rounded and
//! clamped to `0..=255`, so they survive a PGM round trip unchanged.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::ImagePlane;

/// Latent values per blob: offset x/y, orientation, wavelength, envelope,
/// amplitude, phase.
pub const BLOB_PARAMS: usize = 7;
/// Trailing latent values that reshape the template: eye height, eye
/// spacing, nose length, mouth height, mouth width, face width.
pub const SHAPE_PARAMS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub images_per_subject: usize,
    pub size: usize,
    pub blobs: usize,
    /// Per-image multiplicative gain, drawn uniformly.
    pub gain_range: (f64, f64),
    pub noise_sigma: f64,
    /// Peak displacement of the smooth warp, in pixels.
    pub warp_amplitude: f64,
    /// Relative per-image perturbation of blob amplitude and position.
    pub jitter: f64,
    /// Amplitude of the texture shared by every subject, relative to the
    /// identity blobs.
    pub common_texture: f64,
    /// Scale of the per-subject template geometry, as a fraction of the
    /// face size per standard deviation.
    pub shape_variation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            subjects: 40,
            images_per_subject: 10,
            size: 128,
            blobs: 12,
            gain_range: (0.7, 1.3),
            noise_sigma: 16.0,
            warp_amplitude: 2.0,
            jitter: 0.4,
            common_texture: 3.0,
            shape_variation: 0.03,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Same identities, no per-image variation.
    pub fn without_nuisance(mut self) -> Self {
        self.gain_range = (1.0, 1.0);
        self.noise_sigma = 0.0;
        self.warp_amplitude = 0.0;
        self.jitter = 0.0;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub faces: Vec<ImagePlane>,
    /// Subject of each face.
    pub subjects: Vec<u32>,
    /// Latent vector of each subject.
    pub latents: Vec<Vec<f64>>,
    /// `sSSS_iII` names, one per face.
    pub names: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    cos_t: f64,
    sin_t: f64,
    freq: f64,
    inv2s2: f64,
    radius: f64,
    amp: f64,
    phase: f64,
}

/// Independent stream per (seed, purpose, a, b).
fn rng_for(seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(purpose << 48 ^ a << 24 ^ b);
    r
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn anchors(config: &SyntheticConfig, stream: u64) -> Vec<(f64, f64)> {
    let s = config.size as f64;
    let mut rng = rng_for(config.seed, stream, 0, 0);
    (0..config.blobs)
        .map(|_| loop {
            let x = rng.random_range(0.2..0.8);
            let y = rng.random_range(0.2..0.85);
            let (ex, ey) = ((x - 0.5) / 0.36, (y - 0.52) / 0.42);
            if ex * ex + ey * ey <= 1.0 {
                break (x * s, y * s);
            }
        })
        .collect()
}

fn latent(config: &SyntheticConfig, stream: u64, subject: usize) -> Vec<f64> {
    let mut rng = rng_for(config.seed, stream, subject as u64, 0);
    let mut v = Vec::with_capacity(config.blobs * BLOB_PARAMS);
    for _ in 0..config.blobs {
        v.push(normal(&mut rng));
        v.push(normal(&mut rng));
        v.push(rng.random_range(0.0..PI));
        v.push(rng.random_range(6.0..14.0));
        v.push(rng.random_range(4.0..8.0));
        v.push(normal(&mut rng));
        v.push(rng.random_range(0.0..2.0 * PI));
    }
    for _ in 0..SHAPE_PARAMS {
        v.push(normal(&mut rng));
    }
    v
}

fn blobs_for(anchors: &[(f64, f64)], latent: &[f64], jitter: &[f64], gain: f64) -> Vec<Blob> {
    anchors
        .iter()
        .enumerate()
        .map(|(k, &(ax, ay))| {
            let p = &latent[k * BLOB_PARAMS..(k + 1) * BLOB_PARAMS];
            let j = &jitter[k * 3..k * 3 + 3];
            let sigma = p[4];
            Blob {
                cx: ax + 5.0 * p[0] + 2.0 * j[0],
                cy: ay + 5.0 * p[1] + 2.0 * j[1],
                cos_t: p[2].cos(),
                sin_t: p[2].sin(),
                freq: 2.0 * PI / p[3],
                inv2s2: 1.0 / (2.0 * sigma * sigma),
                radius: 3.0 * sigma,
                amp: gain * 24.0 * p[5] * (1.0 + j[2]),
                phase: p[6],
            }
        })
        .collect()
}

/// Face template in units of the face size; `shape` offsets the geometry.
fn template(x: f64, y: f64, s: f64, shape: &[f64; SHAPE_PARAMS]) -> f64 {
    let g = |cx: f64, cy: f64, rx: f64, ry: f64| {
        let (dx, dy) = ((x - cx * s) / (rx * s), (y - cy * s) / (ry * s));
        (-(dx * dx + dy * dy)).exp()
    };
    let [eye_y, eye_gap, nose, mouth_y, mouth_w, face_w] = *shape;
    let (ey, eg) = (0.42 + eye_y, 0.16 + eye_gap);
    70.0 + 80.0 * g(0.5, 0.52, 0.36 + face_w, 0.46) - 35.0 * g(0.5 - eg, ey, 0.07, 0.04) - 35.0 * g(0.5 + eg, ey, 0.07, 0.04)
        + 15.0 * g(0.5, 0.58, 0.04, 0.1 + nose)
        - 30.0 * g(0.5, 0.76 + mouth_y, 0.12 + mouth_w, 0.035)
}

/// Blob sets shared by every face of a dataset.
struct Shared {
    anchors: Vec<(f64, f64)>,
    texture: Vec<Blob>,
}

fn render_face(config: &SyntheticConfig, shared: &Shared, latent: &[f64], subject: usize, image: usize) -> ImagePlane {
    let n = config.size;
    let s = n as f64;
    let mut rng = rng_for(config.seed, 3, subject as u64, image as u64);
    let jitter: Vec<f64> = (0..config.blobs * 3)
        .map(|_| if config.jitter > 0.0 { config.jitter * normal(&mut rng) } else { 0.0 })
        .collect();
    let mut blobs = blobs_for(&shared.anchors, latent, &jitter, 1.0);
    let tail = &latent[config.blobs * BLOB_PARAMS..];
    let shape: [f64; SHAPE_PARAMS] = std::array::from_fn(|i| config.shape_variation * tail[i]);
    blobs.extend_from_slice(&shared.texture);
    let (g0, g1) = config.gain_range;
    let gain = if g1 > g0 { rng.random_range(g0..g1) } else { g0 };
    let a = config.warp_amplitude;
    let warp: [f64; 8] = std::array::from_fn(|i| {
        if i % 2 == 0 {
            rng.random_range(0.5..1.5)
        } else {
            rng.random_range(0.0..2.0 * PI)
        }
    });
    let mut values = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (xf, yf) = (x as f64, y as f64);
            let (wx, wy) = if a > 0.0 {
                let dx = 0.5 * a * ((2.0 * PI * warp[0] * yf / s + warp[1]).sin() + (2.0 * PI * warp[2] * xf / s + warp[3]).sin());
                let dy = 0.5 * a * ((2.0 * PI * warp[4] * xf / s + warp[5]).sin() + (2.0 * PI * warp[6] * yf / s + warp[7]).sin());
                (xf + dx, yf + dy)
            } else {
                (xf, yf)
            };
            let mut v = template(wx, wy, s, &shape);
            for b in &blobs {
                let (dx, dy) = (wx - b.cx, wy - b.cy);
                if dx.abs() > b.radius || dy.abs() > b.radius {
                    continue;
                }
                let u = dx * b.cos_t + dy * b.sin_t;
                v += b.amp * (-(dx * dx + dy * dy) * b.inv2s2).exp() * (b.freq * u + b.phase).cos();
            }
            values[y * n + x] = gain * v;
        }
    }
    if config.noise_sigma > 0.0 {
        for v in values.iter_mut() {
            *v += config.noise_sigma * normal(&mut rng);
        }
    }
    for v in values.iter_mut() {
        *v = v.round().clamp(0.0, 255.0);
    }
    ImagePlane::new(n, n, values).expect("finite raster")
}

/// Deterministic under `config.seed`; faces are subject-major.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    if config.subjects < 2 || config.images_per_subject < 2 {
        return Err(Error::invalid("need at least 2 subjects with 2 images each"));
    }
    if config.size < 32 {
        return Err(Error::invalid("synthetic faces must be at least 32 pixels"));
    }
    let shared = Shared {
        anchors: anchors(config, 1),
        texture: if config.common_texture > 0.0 {
            let zero = vec![0.0; config.blobs * 3];
            blobs_for(&anchors(config, 4), &latent(config, 5, 0), &zero, config.common_texture)
        } else {
            Vec::new()
        },
    };
    let latents: Vec<Vec<f64>> = (0..config.subjects).map(|s| latent(config, 2, s)).collect();
    let jobs: Vec<(usize, usize)> = (0..config.subjects)
        .flat_map(|s| (0..config.images_per_subject).map(move |i| (s, i)))
        .collect();
    let faces = jobs
        .par_iter()
        .map(|&(s, i)| render_face(config, &shared, &latents[s], s, i))
        .collect();
    Ok(SyntheticDataset {
        config: config.clone(),
        faces,
        subjects: jobs.iter().map(|&(s, _)| s as u32).collect(),
        latents,
        names: jobs.iter().map(|&(s, i)| format!("s{s:03}_i{i:02}")).collect(),
    })
}
