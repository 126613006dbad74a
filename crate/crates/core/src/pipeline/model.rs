//! The trained model file.
//!
//! Layout (little-endian): `GRFM`, u32 version, u32 face width, u32 face
//! height, f64 clip, f64 energy, u8 flags (bit 0 quantized, bit 1 trained),
//! u64 seed, 32-byte config hash, u32-prefixed bank text, u32-prefixed pool
//! text, u32 engine count, then per engine: u8 pooling code, u32 patch count,
//! per patch {u32 pool index, u8 sw-degenerate, u32 spectrum length, f64
//! spectrum, u32 d, u32 p, then either d*p f32 column-major or, quantized,
//! p f32 scales, p f32 offsets, d*p u8 codes}, the SVM {u32 D, u8 kind, f64
//! p_rep, f64 C, D f32}, and f64 threshold. A final f64 holds the fused
//! threshold.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grfbank::ChannelBank;
use crate::imgcore::ImagePlane;
use crate::lda::{ProjectionEntry, ProjectionModel};
use crate::pairengine::{similarity, PairKind, SvmModel};
use crate::patchpool::PatchPool;
use crate::pooling::PoolingKind;
use crate::wire::{put_f32, put_f64, put_u32, put_u64, Cursor};

pub const MODEL_MAGIC: &[u8; 4] = b"GRFM";
pub const MODEL_VERSION: u32 = 1;

const FLAG_QUANTIZED: u8 = 1;
const FLAG_TRAINED: u8 = 2;

/// 8-bit projection block: column `k` decodes as `offset[k] + scale[k] * code`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedEntry {
    pub d: usize,
    pub p: usize,
    pub scale: Vec<f32>,
    pub offset: Vec<f32>,
    /// Column-major, like the float matrix.
    pub codes: Vec<u8>,
}

impl QuantizedEntry {
    /// Per-column affine quantization over the column's range.
    pub fn quantize(entry: &ProjectionEntry) -> Self {
        let (d, p) = (entry.d, entry.p);
        let mut scale = Vec::with_capacity(p);
        let mut offset = Vec::with_capacity(p);
        let mut codes = Vec::with_capacity(d * p);
        for k in 0..p {
            let col = entry.column(k);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = ((hi - lo) / 255.0) as f32;
            let o = lo as f32;
            scale.push(s);
            offset.push(o);
            for &v in col {
                let q = if s > 0.0 { ((v - o as f64) / s as f64).round() } else { 0.0 };
                codes.push(q.clamp(0.0, 255.0) as u8);
            }
        }
        QuantizedEntry {
            d,
            p,
            scale,
            offset,
            codes,
        }
    }

    /// Decoded column-major matrix.
    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let k = i / self.d;
                self.offset[k] as f64 + self.scale[k] as f64 * q as f64
            })
            .collect()
    }

    /// Stored bytes: codes plus two f32 per column.
    pub fn byte_size(&self) -> usize {
        self.codes.len() + 8 * self.p
    }
}

/// One pooling statistic's projection, classifier and operating threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Engine {
    pub kind: PoolingKind,
    /// Effective projection: f32-exact, or decoded from `quantized`.
    pub projection: ProjectionModel,
    pub quantized: Option<Vec<QuantizedEntry>>,
    pub svm: SvmModel,
    /// Scores at or above this are "same".
    pub threshold: f64,
}

impl Engine {
    /// Untrained engine over `projection`: zero weights, zero threshold.
    /// Rounds the projection to f32, or quantizes it.
    pub fn new(kind: PoolingKind, mut projection: ProjectionModel, quantize: bool, pair_kind: PairKind, p_rep: f64, c: f64) -> Self {
        let quantized = if quantize {
            let q: Vec<QuantizedEntry> = projection.entries.iter().map(QuantizedEntry::quantize).collect();
            for (e, qe) in projection.entries.iter_mut().zip(&q) {
                e.matrix = qe.dequantize();
            }
            Some(q)
        } else {
            for e in &mut projection.entries {
                e.matrix.iter_mut().for_each(|v| *v = *v as f32 as f64);
            }
            None
        };
        let dim = projection.output_dim();
        Engine {
            kind,
            projection,
            quantized,
            svm: SvmModel {
                w: vec![0.0; dim],
                c,
                kind: pair_kind,
                p_rep,
            },
            threshold: 0.0,
        }
    }

    /// Face feature: concatenated projections of per-patch descriptors.
    pub fn face_feature(&self, descriptors: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.projection.project_face(descriptors)
    }

    pub fn score(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        similarity(a, b, &self.svm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub face_w: usize,
    pub face_h: usize,
    pub clip: f64,
    pub energy: f64,
    pub trained: bool,
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub bank: ChannelBank,
    pub pool: PatchPool,
    pub engines: Vec<Engine>,
    pub fused_threshold: f64,
}

/// Per-engine scores for one pair plus the fused decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub scores: Vec<(PoolingKind, f64)>,
    pub fused: f64,
    /// Score compared against the stored threshold.
    pub decision_score: f64,
    pub threshold: f64,
    pub same: bool,
}

impl ModelFile {
    pub fn quantized(&self) -> bool {
        self.engines.first().is_some_and(|e| e.quantized.is_some())
    }

    /// Cross-component consistency: active sets, descriptor dimensions and
    /// `sum p = D` for every engine.
    pub fn validate(&self) -> Result<()> {
        let p = self.bank.active_count();
        if p == 0 {
            return Err(Error::NoActiveChannels);
        }
        if self.pool.face_size() != (self.face_w, self.face_h) {
            return Err(Error::format("pool face size differs from the model header"));
        }
        let active = self.pool.active_indices();
        if active.is_empty() {
            return Err(Error::EmptyPool);
        }
        if self.engines.is_empty() {
            return Err(Error::format("model has no engines"));
        }
        let quantized = self.quantized();
        for e in &self.engines {
            if e.projection.patches != active {
                return Err(Error::format(format!("{} engine patches differ from the active pool", e.kind)));
            }
            let d = e.kind.descriptor_dim(p);
            for entry in &e.projection.entries {
                if entry.d != d || entry.p == 0 || entry.p > d || entry.matrix.len() != d * entry.p {
                    return Err(Error::DimMismatch {
                        expected: d,
                        got: entry.d,
                    });
                }
            }
            let total = e.projection.output_dim();
            if total != e.svm.dim() {
                return Err(Error::DimMismatch {
                    expected: total,
                    got: e.svm.dim(),
                });
            }
            if e.quantized.is_some() != quantized {
                return Err(Error::format("engines disagree on quantization"));
            }
            if let Some(q) = &e.quantized {
                if q.len() != e.projection.entries.len()
                    || q.iter().zip(&e.projection.entries).any(|(q, pe)| q.d != pe.d || q.p != pe.p)
                {
                    return Err(Error::format(format!("{} engine quantized block is inconsistent", e.kind)));
                }
            }
            e.svm.validate()?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        put_u32(&mut b, MODEL_VERSION);
        put_u32(&mut b, self.face_w as u32);
        put_u32(&mut b, self.face_h as u32);
        put_f64(&mut b, self.clip);
        put_f64(&mut b, self.energy);
        let flags = if self.quantized() { FLAG_QUANTIZED } else { 0 } | if self.trained { FLAG_TRAINED } else { 0 };
        b.push(flags);
        put_u64(&mut b, self.seed);
        b.extend_from_slice(&self.config_hash);
        for text in [self.bank.to_text(), self.pool.to_text()] {
            put_u32(&mut b, text.len() as u32);
            b.extend_from_slice(text.as_bytes());
        }
        put_u32(&mut b, self.engines.len() as u32);
        for e in &self.engines {
            b.push(e.kind.code());
            put_u32(&mut b, e.projection.entries.len() as u32);
            for (i, (&patch, entry)) in e.projection.patches.iter().zip(&e.projection.entries).enumerate() {
                put_u32(&mut b, patch as u32);
                b.push(entry.sw_degenerate as u8);
                put_u32(&mut b, entry.spectrum.len() as u32);
                entry.spectrum.iter().for_each(|&v| put_f64(&mut b, v));
                put_u32(&mut b, entry.d as u32);
                put_u32(&mut b, entry.p as u32);
                match &e.quantized {
                    Some(q) => {
                        let q = &q[i];
                        q.scale.iter().for_each(|&v| put_f32(&mut b, v));
                        q.offset.iter().for_each(|&v| put_f32(&mut b, v));
                        b.extend_from_slice(&q.codes);
                    }
                    None => entry.matrix.iter().for_each(|&v| put_f32(&mut b, v as f32)),
                }
            }
            put_u32(&mut b, e.svm.dim() as u32);
            b.push(e.svm.kind.code());
            put_f64(&mut b, e.svm.p_rep);
            put_f64(&mut b, e.svm.c);
            e.svm.w.iter().for_each(|&v| put_f32(&mut b, v as f32));
            put_f64(&mut b, e.threshold);
        }
        put_f64(&mut b, self.fused_threshold);
        b
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(data);
        if c.take(4)? != MODEL_MAGIC {
            return Err(Error::format("not a model file"));
        }
        let version = c.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported model version {version}")));
        }
        let face_w = c.u32()? as usize;
        let face_h = c.u32()? as usize;
        let clip = c.f64()?;
        let energy = c.f64()?;
        let flags = c.u8()?;
        if flags & !(FLAG_QUANTIZED | FLAG_TRAINED) != 0 {
            return Err(Error::format(format!("unknown model flags {flags:#04x}")));
        }
        let quantized = flags & FLAG_QUANTIZED != 0;
        let seed = c.u64()?;
        let config_hash: [u8; 32] = c.take(32)?.try_into().unwrap();
        let mut text = || -> Result<String> {
            let n = c.u32()? as usize;
            String::from_utf8(c.take(n)?.to_vec()).map_err(|_| Error::format("model text block is not UTF-8"))
        };
        let bank = ChannelBank::from_text(&text()?)?;
        let pool = PatchPool::from_text(&text()?)?;
        let n_engines = c.u32()? as usize;
        let mut engines = Vec::new();
        for _ in 0..n_engines {
            let kind = PoolingKind::from_code(c.u8()?)?;
            let q = c.u32()? as usize;
            let (mut patches, mut entries, mut quant) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..q {
                patches.push(c.u32()? as usize);
                let sw_degenerate = match c.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(Error::format(format!("bad degenerate flag {v}"))),
                };
                let len = c.u32()? as usize;
                if len > c.remaining() / 8 {
                    return Err(Error::format("spectrum length exceeds file"));
                }
                let spectrum = c.f64s(len)?;
                let d = c.u32()? as usize;
                let p = c.u32()? as usize;
                if d.saturating_mul(p) > c.remaining() {
                    return Err(Error::format("projection size exceeds file"));
                }
                let matrix = if quantized {
                    let scale = (0..p).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
                    let offset = (0..p).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
                    let codes = c.take(d * p)?.to_vec();
                    let qe = QuantizedEntry {
                        d,
                        p,
                        scale,
                        offset,
                        codes,
                    };
                    let m = qe.dequantize();
                    quant.push(qe);
                    m
                } else {
                    (0..d * p).map(|_| c.f32().map(f64::from)).collect::<Result<Vec<_>>>()?
                };
                let mut entry = ProjectionEntry::new(d, p, matrix)?;
                entry.spectrum = spectrum;
                entry.sw_degenerate = sw_degenerate;
                entries.push(entry);
            }
            let dim = c.u32()? as usize;
            if dim > c.remaining() / 4 {
                return Err(Error::format("svm dimension exceeds file"));
            }
            let pair_kind = PairKind::from_code(c.u8()?)?;
            let p_rep = c.f64()?;
            let svm_c = c.f64()?;
            let w = (0..dim).map(|_| c.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
            let threshold = c.f64()?;
            engines.push(Engine {
                kind,
                projection: ProjectionModel { patches, entries },
                quantized: quantized.then_some(quant),
                svm: SvmModel {
                    w,
                    c: svm_c,
                    kind: pair_kind,
                    p_rep,
                },
                threshold,
            });
        }
        let fused_threshold = c.f64()?;
        c.finish()?;
        let model = ModelFile {
            face_w,
            face_h,
            clip,
            energy,
            trained: flags & FLAG_TRAINED != 0,
            seed,
            config_hash,
            bank,
            pool,
            engines,
            fused_threshold,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Bytes of the projection blocks as stored.
    pub fn projection_bytes(&self) -> usize {
        self.engines
            .iter()
            .map(|e| match &e.quantized {
                Some(q) => q.iter().map(QuantizedEntry::byte_size).sum(),
                None => 4 * e.projection.entries.iter().map(|p| p.d * p.p).sum::<usize>(),
            })
            .sum()
    }

    fn check_size(&self, face: &ImagePlane) -> Result<()> {
        if (face.width(), face.height()) != (self.face_w, self.face_h) {
            return Err(Error::BadInputSize {
                expected_w: self.face_w,
                expected_h: self.face_h,
                got_w: face.width(),
                got_h: face.height(),
            });
        }
        Ok(())
    }

    /// Face feature of every engine.
    pub fn extract(&self, face: &ImagePlane) -> Result<Vec<Vec<f64>>> {
        self.check_size(face)?;
        let kinds: Vec<PoolingKind> = self.engines.iter().map(|e| e.kind).collect();
        let descs = super::describe_face(face, &self.bank, &self.pool, &kinds, self.clip)?;
        self.engines.iter().zip(&descs).map(|(e, d)| e.face_feature(d)).collect()
    }

    /// Per-engine scores of two extracted faces.
    pub fn engine_scores(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.engines
            .iter()
            .zip(a.iter().zip(b))
            .map(|(e, (fa, fb))| e.score(fa, fb))
            .collect()
    }

    /// Fused score, or the first engine's score, and its stored threshold.
    pub fn decide(&self, scores: &[f64], fuse: bool) -> (f64, f64) {
        if fuse {
            (scores.iter().sum(), self.fused_threshold)
        } else {
            (scores[0], self.engines[0].threshold)
        }
    }

    /// Extracts both faces and decides at the stored threshold.
    pub fn verify_pair(&self, a: &ImagePlane, b: &ImagePlane, fuse: bool) -> Result<Verification> {
        self.check_size(a)?;
        self.check_size(b)?;
        let fa = self.extract(a)?;
        let fb = self.extract(b)?;
        let scores = self.engine_scores(&fa, &fb)?;
        let (decision_score, threshold) = self.decide(&scores, fuse);
        Ok(Verification {
            fused: scores.iter().sum(),
            scores: self.engines.iter().map(|e| e.kind).zip(scores).collect(),
            decision_score,
            threshold,
            same: decision_score >= threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_error_is_half_a_step() {
        let m: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.4).collect();
        let e = ProjectionEntry::new(4, 3, m.clone()).unwrap();
        let q = QuantizedEntry::quantize(&e);
        let back = q.dequantize();
        for (i, (a, b)) in m.iter().zip(&back).enumerate() {
            assert!((a - b).abs() <= 0.5 * q.scale[i / 4] as f64 + 1e-6, "{a} vs {b}");
        }
        assert_eq!(q.byte_size(), 12 + 24);
    }

    #[test]
    fn constant_column_quantizes_exactly() {
        let e = ProjectionEntry::new(2, 1, vec![0.25, 0.25]).unwrap();
        let q = QuantizedEntry::quantize(&e);
        assert_eq!(q.dequantize(), vec![0.25, 0.25]);
    }
}
