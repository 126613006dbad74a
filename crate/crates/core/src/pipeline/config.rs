//! Line-oriented `key=value` pipeline configuration. Blank lines and `#`
//! comments are ignored; unknown keys are rejected so typos do not pass
//! silently.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pairengine::{PairKind, DEFAULT_P_REP};
use crate::pooling::{PoolingKind, DEFAULT_CLIP};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub face_size: usize,
    /// Active channels (`P`).
    pub channels: usize,
    /// Active patches (`Q`).
    pub patches: usize,
    pub stride: usize,
    pub min_cell_pixels: usize,
    /// Patch candidates scanned by the patch search, drawn from the pool
    /// under the seed; 0 scans the whole pool.
    pub patch_candidates: usize,
    /// Negative pairs sampled for both searches.
    pub selection_negatives: usize,
    pub selection_fpr: f64,
    /// Statistic used by the patch search and listed first among engines.
    pub selection_kind: PoolingKind,
    /// One trained engine per statistic; scores are fused by summation.
    pub engines: Vec<PoolingKind>,
    pub clip: f64,
    pub energy: f64,
    pub pair_kind: PairKind,
    pub p_rep: f64,
    pub c: f64,
    pub rho: f64,
    pub blocks: usize,
    pub max_rounds: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Negatives per block; 0 shares the sampled pool across the blocks.
    pub neg_quota: usize,
    /// Positives per block; 0 keeps the positive pool size.
    pub pos_quota: usize,
    /// Negative training pairs sampled per run.
    pub train_negatives: usize,
    pub quantize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            face_size: 128,
            channels: 4,
            patches: 240,
            stride: 4,
            min_cell_pixels: 30,
            patch_candidates: 480,
            selection_negatives: 20_000,
            selection_fpr: crate::sffs::DEFAULT_FPR,
            selection_kind: PoolingKind::T2,
            engines: vec![PoolingKind::T2, PoolingKind::Sigma, PoolingKind::Moment],
            clip: DEFAULT_CLIP,
            energy: crate::lda::DEFAULT_ENERGY,
            pair_kind: PairKind::AbsDiff,
            p_rep: DEFAULT_P_REP,
            c: 0.001,
            rho: 1.0,
            blocks: 1,
            max_rounds: 50,
            eps_abs: 1e-4,
            eps_rel: 1e-3,
            neg_quota: 0,
            pos_quota: 0,
            train_negatives: 20_000,
            quantize: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("config key {key}: expected a boolean, got {v:?}"))),
    }
}

impl PipelineConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_num(key, v)?,
            "face_size" => self.face_size = parse_num(key, v)?,
            "channels" => self.channels = parse_num(key, v)?,
            "patches" => self.patches = parse_num(key, v)?,
            "stride" => self.stride = parse_num(key, v)?,
            "min_cell_pixels" => self.min_cell_pixels = parse_num(key, v)?,
            "patch_candidates" => self.patch_candidates = parse_num(key, v)?,
            "selection_negatives" => self.selection_negatives = parse_num(key, v)?,
            "selection_fpr" => self.selection_fpr = parse_num(key, v)?,
            "selection_kind" => self.selection_kind = v.parse()?,
            "engines" => {
                self.engines = v
                    .split(',')
                    .map(|k| k.trim().parse())
                    .collect::<Result<Vec<_>>>()?
            }
            "clip" => self.clip = parse_num(key, v)?,
            "energy" => self.energy = parse_num(key, v)?,
            "pair_kind" => self.pair_kind = v.parse()?,
            "p_rep" => self.p_rep = parse_num(key, v)?,
            "C" | "c" => self.c = parse_num(key, v)?,
            "rho" => self.rho = parse_num(key, v)?,
            "blocks" => self.blocks = parse_num(key, v)?,
            "max_rounds" => self.max_rounds = parse_num(key, v)?,
            "eps_abs" => self.eps_abs = parse_num(key, v)?,
            "eps_rel" => self.eps_rel = parse_num(key, v)?,
            "neg_quota" => self.neg_quota = parse_num(key, v)?,
            "pos_quota" => self.pos_quota = parse_num(key, v)?,
            "train_negatives" => self.train_negatives = parse_num(key, v)?,
            "quantize" => self.quantize = parse_bool(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key {other}"))),
        }
        Ok(())
    }

    /// Defaults overridden by every setting in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key=value", n + 1)))?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text: every key, fixed order, shortest round-trip floats.
    pub fn to_text(&self) -> String {
        let engines: Vec<String> = self.engines.iter().map(|k| k.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("face_size", self.face_size.to_string());
        kv("channels", self.channels.to_string());
        kv("patches", self.patches.to_string());
        kv("stride", self.stride.to_string());
        kv("min_cell_pixels", self.min_cell_pixels.to_string());
        kv("patch_candidates", self.patch_candidates.to_string());
        kv("selection_negatives", self.selection_negatives.to_string());
        kv("selection_fpr", format!("{:?}", self.selection_fpr));
        kv("selection_kind", self.selection_kind.to_string());
        kv("engines", engines.join(","));
        kv("clip", format!("{:?}", self.clip));
        kv("energy", format!("{:?}", self.energy));
        kv("pair_kind", self.pair_kind.to_string());
        kv("p_rep", format!("{:?}", self.p_rep));
        kv("C", format!("{:?}", self.c));
        kv("rho", format!("{:?}", self.rho));
        kv("blocks", self.blocks.to_string());
        kv("max_rounds", self.max_rounds.to_string());
        kv("eps_abs", format!("{:?}", self.eps_abs));
        kv("eps_rel", format!("{:?}", self.eps_rel));
        kv("neg_quota", self.neg_quota.to_string());
        kv("pos_quota", self.pos_quota.to_string());
        kv("train_negatives", self.train_negatives.to_string());
        kv("quantize", self.quantize.to_string());
        s
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.face_size < 32 {
            return bad("face_size must be at least 32");
        }
        if self.channels == 0 || self.channels > crate::grfbank::FULL_BANK_LEN {
            return bad("channels must be in 1..=112");
        }
        if self.patches == 0 || self.stride == 0 || self.min_cell_pixels == 0 {
            return bad("patches, stride and min_cell_pixels must be positive");
        }
        if self.patch_candidates != 0 && self.patch_candidates < self.patches {
            return bad("patch_candidates must be 0 or at least patches");
        }
        if !(0.0..=1.0).contains(&self.selection_fpr) {
            return bad("selection_fpr must lie in [0, 1]");
        }
        if self.engines.is_empty() {
            return bad("at least one engine is required");
        }
        let mut seen = self.engines.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.engines.len() {
            return bad("engines must be distinct");
        }
        if !(self.clip > 0.0) || !(self.energy > 0.0 && self.energy <= 1.0) || !(self.p_rep > 0.0) {
            return bad("clip and p_rep must be positive and energy in (0, 1]");
        }
        if !(self.c > 0.0) || !(self.rho > 0.0) || self.blocks == 0 || self.max_rounds == 0 {
            return bad("C and rho must be positive, blocks and max_rounds at least 1");
        }
        if self.selection_negatives == 0 || self.train_negatives == 0 {
            return bad("negative pair budgets must be positive");
        }
        Ok(())
    }
}

/// Lower-case hex.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
