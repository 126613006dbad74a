//! End-to-end orchestration: receptive maps, channel activation, patch
//! activation, pooling, per-patch LDA, then consensus-ADMM training of one
//! pair classifier per pooling statistic. Every stage is deterministic under
//! the configured seed.

pub mod config;
pub mod cost;
pub mod manifest;
pub mod model;

use std::time::Duration;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admm::{dial_workers, run_admm, train_distributed, AdmmConfig, RoundLog, Topology, TrainOutcome};
use crate::error::{Error, Result};
use crate::evalharness::{best_threshold, fuse_scores, scores_tpr_at_fpr};
use crate::grfbank::{compute_maps, enumerate_full_bank, ChannelBank};
use crate::imgcore::ImagePlane;
use crate::lda::{fit_model, ProjectionModel};
use crate::pairengine::{pair_rep_into, SampleSet};
use crate::pairs::{sample_pairs, LabeledPair};
use crate::patchpool::{generate_pool, PatchPool};
use crate::pooling::{build_tables, channel_meta_feature, describe_patches, PoolingKind};
use crate::sffs::{sffs_select, CandidateSet, SelectionResult, SffsConfig};

pub use config::PipelineConfig;
pub use cost::{estimate_cost, CostParams, CostReport};
pub use manifest::DatasetManifest;
pub use model::{Engine, ModelFile, QuantizedEntry, Verification};

/// RNG streams, one per consumer of the seed.
const STREAM_CHANNEL_PAIRS: u64 = 1;
const STREAM_PATCH_CANDIDATES: u64 = 2;
const STREAM_PATCH_PAIRS: u64 = 3;
const STREAM_TRAIN_PAIRS: u64 = 4;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// How ADMM rounds are executed. All modes give identical iterates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Direct calls, no message passing.
    Local,
    Distributed(Topology),
    /// Worker processes listening at `endpoints`, one per block in block
    /// order, each serving one session per engine.
    Remote { endpoints: Vec<String>, patience: Duration },
}

/// Rejects faces that do not match the configured size.
pub fn check_faces(faces: &[ImagePlane], size: usize) -> Result<()> {
    if let Some(f) = faces.iter().find(|f| f.width() != size || f.height() != size) {
        return Err(Error::BadInputSize {
            expected_w: size,
            expected_h: size,
            got_w: f.width(),
            got_h: f.height(),
        });
    }
    Ok(())
}

/// Meta features of every bank channel: `out[channel][face]`.
pub fn channel_meta_features(faces: &[ImagePlane], bank: &ChannelBank) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_face = faces
        .par_iter()
        .map(|face| {
            let maps = compute_maps(face, bank)?;
            maps.planes.iter().map(channel_meta_feature).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(transpose(per_face))
}

fn transpose<T>(per_face: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let n = per_face.first().map_or(0, |v| v.len());
    let mut out: Vec<Vec<T>> = (0..n).map(|_| Vec::with_capacity(per_face.len())).collect();
    for row in per_face {
        for (o, v) in out.iter_mut().zip(row) {
            o.push(v);
        }
    }
    out
}

fn sffs_config(config: &PipelineConfig, target: usize) -> SffsConfig {
    SffsConfig {
        fpr: config.selection_fpr,
        seed: config.seed,
        ..SffsConfig::new(target)
    }
}

/// Channel activation: search the full bank for `config.channels` channels
/// on their meta features. Returns the bank with those channels active.
pub fn select_channels(
    faces: &[ImagePlane],
    subjects: &[u32],
    config: &PipelineConfig,
) -> Result<(ChannelBank, SelectionResult)> {
    let mut bank = enumerate_full_bank();
    bank.activate_only(&(0..bank.len()).collect::<Vec<_>>())?;
    let candidates = CandidateSet::new(channel_meta_features(faces, &bank)?)?;
    let pairs = sample_pairs(subjects, config.selection_negatives, &mut stream_rng(config.seed, STREAM_CHANNEL_PAIRS));
    let result = sffs_select(&candidates, subjects, &pairs, &sffs_config(config, config.channels))?;
    bank.activate_only(&result.selected)?;
    Ok((bank, result))
}

/// Pool indices the patch search scans: all of them, or a seeded sample of
/// `config.patch_candidates`, ascending.
pub fn patch_candidates(pool: &PatchPool, config: &PipelineConfig) -> Vec<usize> {
    let n = pool.len();
    if config.patch_candidates == 0 || config.patch_candidates >= n {
        return (0..n).collect();
    }
    let mut rng = stream_rng(config.seed, STREAM_PATCH_CANDIDATES);
    let mut v = index::sample(&mut rng, n, config.patch_candidates).into_vec();
    v.sort_unstable();
    v
}

/// Patch activation with the active channels of `bank` fixed. Returns the
/// pool with the chosen patches active, the search result (indices into
/// the candidate list) and the candidate list.
pub fn select_patches(
    faces: &[ImagePlane],
    subjects: &[u32],
    bank: &ChannelBank,
    config: &PipelineConfig,
) -> Result<(PatchPool, SelectionResult, Vec<usize>)> {
    let mut pool = generate_pool(config.face_size, config.face_size, config.stride, config.min_cell_pixels)?;
    let cand = patch_candidates(&pool, config);
    if cand.len() < config.patches {
        return Err(Error::invalid(format!(
            "pool offers {} candidates for {} patches",
            cand.len(),
            config.patches
        )));
    }
    let specs: Vec<_> = cand.iter().map(|&i| pool.specs()[i]).collect();
    let kind = config.selection_kind;
    let per_face = faces
        .par_iter()
        .map(|face| {
            let maps = compute_maps(face, bank)?;
            let tables = build_tables(&maps, &[kind]);
            describe_patches(&maps, &tables, &specs, kind, config.clip)
        })
        .collect::<Result<Vec<_>>>()?;
    let candidates = CandidateSet::new(transpose(per_face))?;
    let pairs = sample_pairs(subjects, config.selection_negatives, &mut stream_rng(config.seed, STREAM_PATCH_PAIRS));
    let result = sffs_select(&candidates, subjects, &pairs, &sffs_config(config, config.patches))?;
    let chosen: Vec<usize> = result.selected.iter().map(|&c| cand[c]).collect();
    pool.activate_only(&chosen)?;
    Ok((pool, result, cand))
}

/// Normalised descriptors of the active patches for each of `kinds`:
/// `out[kind][patch]`.
pub fn describe_face(
    face: &ImagePlane,
    bank: &ChannelBank,
    pool: &PatchPool,
    kinds: &[PoolingKind],
    clip: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let maps = compute_maps(face, bank)?;
    let tables = build_tables(&maps, kinds);
    let specs: Vec<_> = pool.active_indices().into_iter().map(|i| pool.specs()[i]).collect();
    if specs.is_empty() {
        return Err(Error::EmptyPool);
    }
    kinds
        .iter()
        .map(|&k| describe_patches(&maps, &tables, &specs, k, clip))
        .collect()
}

/// Descriptors of every face, rearranged for LDA: `out[kind][patch][face]`.
pub fn describe_faces(
    faces: &[ImagePlane],
    bank: &ChannelBank,
    pool: &PatchPool,
    kinds: &[PoolingKind],
    clip: f64,
) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let per_face = faces
        .par_iter()
        .map(|f| describe_face(f, bank, pool, kinds, clip))
        .collect::<Result<Vec<_>>>()?;
    let by_kind = transpose(per_face);
    Ok(by_kind.into_iter().map(transpose).collect())
}

/// Channel and patch activation plus one fitted (untrained) engine per
/// configured statistic, with the training faces' features.
#[derive(Clone, Debug)]
pub struct FeatureStage {
    pub model: ModelFile,
    pub channel_selection: SelectionResult,
    pub patch_selection: SelectionResult,
    /// Pool indices scanned by the patch search.
    pub patch_candidates: Vec<usize>,
    /// `features[engine][face]`.
    pub features: Vec<Vec<Vec<f64>>>,
}

/// Untrained model for fixed bank and pool: fits the projections and
/// rounds (or quantizes) them as they will be stored.
pub fn fit_engines(
    faces: &[ImagePlane],
    subjects: &[u32],
    bank: ChannelBank,
    pool: PatchPool,
    config: &PipelineConfig,
) -> Result<(ModelFile, Vec<Vec<Vec<f64>>>)> {
    let descs = describe_faces(faces, &bank, &pool, &config.engines, config.clip).map_err(|e| e.in_stage("pooling"))?;
    let patches = pool.active_indices();
    let mut engines = Vec::with_capacity(config.engines.len());
    for (&kind, per_patch) in config.engines.iter().zip(&descs) {
        let proj: ProjectionModel =
            fit_model(patches.clone(), per_patch, subjects, config.energy).map_err(|e| e.in_stage("lda"))?;
        engines.push(Engine::new(kind, proj, config.quantize, config.pair_kind, config.p_rep, config.c));
    }
    let features = engines
        .iter()
        .zip(&descs)
        .map(|(e, per_patch)| {
            (0..faces.len())
                .map(|f| {
                    let d: Vec<Vec<f64>> = per_patch.iter().map(|q| q[f].clone()).collect();
                    e.face_feature(&d)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let model = ModelFile {
        face_w: config.face_size,
        face_h: config.face_size,
        clip: config.clip,
        energy: config.energy,
        trained: false,
        seed: config.seed,
        config_hash: config.hash(),
        bank,
        pool,
        engines,
        fused_threshold: 0.0,
    };
    model.validate()?;
    Ok((model, features))
}

/// Stages (1) to (5): maps, channel activation, patch activation, pooling
/// and LDA.
pub fn prepare_features(
    faces: &[ImagePlane],
    subjects: &[u32],
    config: &PipelineConfig,
    log: &mut dyn FnMut(&str),
) -> Result<FeatureStage> {
    config.validate()?;
    check_faces(faces, config.face_size).map_err(|e| e.in_stage("load"))?;
    if faces.len() != subjects.len() {
        return Err(Error::DimMismatch {
            expected: faces.len(),
            got: subjects.len(),
        });
    }
    log(&format!("stage load: {} faces, {} pairs", faces.len(), crate::pairs::pair_count(faces.len())));
    let (bank, channel_selection) =
        select_channels(faces, subjects, config).map_err(|e| e.in_stage("channel-activation"))?;
    log(&format!("stage channel-activation: active {:?}", bank.active_indices()));
    let (pool, patch_selection, patch_candidates) =
        select_patches(faces, subjects, &bank, config).map_err(|e| e.in_stage("patch-activation"))?;
    log(&format!(
        "stage patch-activation: {} of {} candidates ({} in pool)",
        pool.active_count(),
        patch_candidates.len(),
        pool.len()
    ));
    let (model, features) = fit_engines(faces, subjects, bank, pool, config)?;
    for e in &model.engines {
        log(&format!("stage lda: {} engine, D = {}", e.kind, e.projection.output_dim()));
    }
    Ok(FeatureStage {
        model,
        channel_selection,
        patch_selection,
        patch_candidates,
        features,
    })
}

/// Training pairs: every positive plus `config.train_negatives` sampled
/// negatives.
pub fn training_pairs(subjects: &[u32], config: &PipelineConfig) -> Vec<LabeledPair> {
    sample_pairs(subjects, config.train_negatives, &mut stream_rng(config.seed, STREAM_TRAIN_PAIRS))
}

/// Pair representations of `pairs` under one engine's features, as scored.
pub fn pair_samples(features: &[Vec<f64>], pairs: &[LabeledPair], engine: &Engine) -> Result<SampleSet> {
    let dim = engine.projection.output_dim();
    let mut x = vec![0.0; pairs.len() * dim];
    x.par_chunks_mut(dim.max(1)).zip(pairs).try_for_each(|(row, p)| {
        pair_rep_into(&features[p.a], &features[p.b], engine.svm.kind, engine.svm.p_rep, row)
    })?;
    SampleSet::from_rows(dim, x, pairs.iter().map(LabeledPair::label).collect())
}

pub fn admm_config(config: &PipelineConfig) -> AdmmConfig {
    AdmmConfig {
        c: config.c,
        rho: config.rho,
        blocks: config.blocks,
        max_rounds: config.max_rounds,
        eps_abs: config.eps_abs,
        eps_rel: config.eps_rel,
        seed: config.seed,
        pos_quota: (config.pos_quota > 0).then_some(config.pos_quota),
        neg_quota: (config.neg_quota > 0).then_some(config.neg_quota),
        ..AdmmConfig::default()
    }
}

/// Centres a run's blocks on the class midpoint of everything they hold.
/// Abs-diff and product representations are non-negative, and without a
/// bias term the squared hinge would then reward coordinates where
/// same-subject pairs differ most; the shift acts as a bias tied to `w`.
/// Scores stay `w . x` on the raw representation: the shift moves every
/// score by the same constant, which the operating threshold absorbs.
pub fn center_blocks(blocks: &mut [SampleSet]) -> Result<Vec<f64>> {
    let mid = crate::pairengine::class_midpoint_of(blocks)?;
    for b in blocks.iter_mut() {
        b.shift(&mid)?;
    }
    Ok(mid)
}

/// Block sample sets of one engine, as `partition_blocks` assigns them.
pub fn engine_blocks(samples: &SampleSet, admm: &AdmmConfig) -> Result<Vec<SampleSet>> {
    let positive: Vec<bool> = samples.labels().iter().map(|&y| y > 0.0).collect();
    Ok(crate::admm::partition_blocks(&positive, admm)?
        .iter()
        .map(|b| samples.subset(&b.samples))
        .collect())
}

/// Centred block sample sets of one engine for the run's training pairs.
/// Remote workers rebuild their block through this same path.
pub fn training_blocks(
    features: &[Vec<f64>],
    pairs: &[LabeledPair],
    engine: &Engine,
    admm: &AdmmConfig,
) -> Result<Vec<SampleSet>> {
    let samples = pair_samples(features, pairs, engine).map_err(|e| e.in_stage("pair-samples"))?;
    let mut blocks = engine_blocks(&samples, admm).map_err(|e| e.in_stage("partition"))?;
    drop(samples);
    center_blocks(&mut blocks)?;
    Ok(blocks)
}

/// Trains one engine's classifier over its blocks.
pub fn train_engine(
    blocks: &[SampleSet],
    admm: &AdmmConfig,
    mode: &TrainMode,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<TrainOutcome> {
    match mode {
        TrainMode::Local => run_admm(blocks, admm, on_round),
        TrainMode::Distributed(t) => train_distributed(blocks, admm, *t, on_round),
        TrainMode::Remote { endpoints, patience } => {
            let dim = blocks.first().map_or(0, SampleSet::dim);
            dial_workers(endpoints, dim, admm, *patience, on_round)
        }
    }
}

/// Per-engine scores of `pairs` from precomputed features.
pub fn score_pairs(model: &ModelFile, features: &[Vec<Vec<f64>>], pairs: &[LabeledPair]) -> Result<Vec<Vec<f64>>> {
    model
        .engines
        .iter()
        .zip(features)
        .map(|(e, f)| pairs.par_iter().map(|p| e.score(&f[p.a], &f[p.b])).collect())
        .collect()
}

/// Sets every engine's threshold, and the fused one, to the best balanced
/// accuracy point on `pairs`.
pub fn fit_thresholds(model: &mut ModelFile, features: &[Vec<Vec<f64>>], pairs: &[LabeledPair]) -> Result<()> {
    let scores = score_pairs(model, features, pairs)?;
    let labelled = |s: &[f64]| -> Vec<(f64, bool)> { s.iter().zip(pairs).map(|(&v, p)| (v, p.same)).collect() };
    for (e, s) in model.engines.iter_mut().zip(&scores) {
        e.threshold = best_threshold(&labelled(s))?.0;
    }
    model.fused_threshold = best_threshold(&labelled(&fuse_scores(&scores)?))?.0;
    Ok(())
}

/// Output of a full run.
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub model: ModelFile,
    pub channel_selection: SelectionResult,
    pub patch_selection: SelectionResult,
    pub patch_candidates: Vec<usize>,
    /// One ADMM outcome per engine.
    pub training: Vec<TrainOutcome>,
}

/// Trains every engine of `stage.model` and fits the thresholds.
pub fn train_stage(
    model: &mut ModelFile,
    features: &[Vec<Vec<f64>>],
    subjects: &[u32],
    config: &PipelineConfig,
    mode: &TrainMode,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<TrainOutcome>> {
    let pairs = training_pairs(subjects, config);
    let admm = admm_config(config);
    let mut outcomes = Vec::with_capacity(model.engines.len());
    if features.len() != model.engines.len() {
        return Err(Error::DimMismatch {
            expected: model.engines.len(),
            got: features.len(),
        });
    }
    model.seed = config.seed;
    model.config_hash = config.hash();
    for (i, feats) in features.iter().enumerate() {
        model.engines[i].svm.c = config.c;
        let engine = &model.engines[i];
        let blocks = training_blocks(feats, &pairs, engine, &admm)?;
        let kind = engine.kind;
        let outcome = train_engine(&blocks, &admm, mode, &mut |r| log(&format!("{kind} {}", r.line())))
            .map_err(|e| e.in_stage("admm"))?;
        log(&format!(
            "stage admm: {kind} engine, {} rounds{}",
            outcome.rounds(),
            outcome.flag.map_or(String::new(), |f| format!(" ({f})"))
        ));
        model.engines[i].svm.w = outcome.z().iter().map(|&v| v as f32 as f64).collect();
        outcomes.push(outcome);
    }
    fit_thresholds(model, features, &pairs).map_err(|e| e.in_stage("thresholds"))?;
    model.trained = true;
    model.validate()?;
    Ok(outcomes)
}

/// Runs every stage on in-memory faces.
pub fn run_pipeline_faces(
    faces: &[ImagePlane],
    subjects: &[u32],
    config: &PipelineConfig,
    mode: &TrainMode,
    log: &mut dyn FnMut(&str),
) -> Result<PipelineReport> {
    let stage = prepare_features(faces, subjects, config, log)?;
    let mut model = stage.model;
    let training = train_stage(&mut model, &stage.features, subjects, config, mode, log)?;
    Ok(PipelineReport {
        model,
        channel_selection: stage.channel_selection,
        patch_selection: stage.patch_selection,
        patch_candidates: stage.patch_candidates,
        training,
    })
}

/// Loads the manifest's faces and runs every stage.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    mode: &TrainMode,
    log: &mut dyn FnMut(&str),
) -> Result<PipelineReport> {
    let faces = manifest.load_faces().map_err(|e| e.in_stage("load"))?;
    run_pipeline_faces(&faces, &manifest.subject_ids(), config, mode, log)
}

/// Scores of a labelled pair list under a trained model.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub pairs: Vec<LabeledPair>,
    /// `engine_scores[engine][pair]`.
    pub engine_scores: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
}

impl Evaluation {
    pub fn labelled(&self, scores: &[f64]) -> Vec<(f64, bool)> {
        scores.iter().zip(&self.pairs).map(|(&s, p)| (s, p.same)).collect()
    }

    pub fn engine_tpr(&self, engine: usize, fpr: f64) -> Result<f64> {
        scores_tpr_at_fpr(&self.labelled(&self.engine_scores[engine]), fpr)
    }

    pub fn fused_tpr(&self, fpr: f64) -> Result<f64> {
        scores_tpr_at_fpr(&self.labelled(&self.fused), fpr)
    }
}

/// Features of every face under `model`: `out[engine][face]`.
pub fn extract_faces(model: &ModelFile, faces: &[ImagePlane]) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_face = faces.par_iter().map(|f| model.extract(f)).collect::<Result<Vec<_>>>()?;
    Ok(transpose(per_face))
}

/// Extracts every face with `model` and scores `pairs`.
pub fn evaluate(model: &ModelFile, faces: &[ImagePlane], pairs: Vec<LabeledPair>) -> Result<Evaluation> {
    let features = extract_faces(model, faces)?;
    let engine_scores = score_pairs(model, &features, &pairs)?;
    let fused = fuse_scores(&engine_scores)?;
    Ok(Evaluation {
        pairs,
        engine_scores,
        fused,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::synthetic::{generate_synthetic, SyntheticConfig};

    fn tiny() -> (Vec<ImagePlane>, Vec<u32>, PipelineConfig) {
        let d = generate_synthetic(&SyntheticConfig {
            subjects: 6,
            images_per_subject: 3,
            size: 64,
            blobs: 6,
            seed: 5,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let config = PipelineConfig {
            face_size: 64,
            channels: 2,
            patches: 3,
            stride: 8,
            patch_candidates: 12,
            selection_negatives: 60,
            train_negatives: 60,
            engines: vec![PoolingKind::T2, PoolingKind::Sigma],
            max_rounds: 5,
            ..PipelineConfig::default()
        };
        (d.faces, d.subjects, config)
    }

    #[test]
    fn tiny_run_is_consistent_and_round_trips() {
        let (faces, subjects, config) = tiny();
        let report = run_pipeline_faces(&faces, &subjects, &config, &TrainMode::Local, &mut |_| {}).unwrap();
        let m = &report.model;
        m.validate().unwrap();
        assert_eq!(m.bank.active_count(), 2);
        assert_eq!(m.pool.active_count(), 3);
        let bytes = m.to_bytes();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(&back, m);
        assert_eq!(back.to_bytes(), bytes);
        let v = back.verify_pair(&faces[0], &faces[0], true).unwrap();
        assert!(v.scores.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let (faces, subjects, mut config) = tiny();
        config.face_size = 128;
        let err = run_pipeline_faces(&faces, &subjects, &config, &TrainMode::Local, &mut |_| {}).unwrap_err();
        assert!(err.to_string().contains("bad-input-size"), "{err}");
    }

    #[test]
    fn candidates_are_seeded_and_sorted() {
        let pool = generate_pool(64, 64, 8, 30).unwrap();
        let c = PipelineConfig {
            patch_candidates: 10,
            ..PipelineConfig::default()
        };
        let a = patch_candidates(&pool, &c);
        assert_eq!(a, patch_candidates(&pool, &c));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
