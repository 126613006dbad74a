//! `grfface`: stage-by-stage and end-to-end commands for the face
//! verification pipeline.

mod plot;

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use grfface::admm::{serve_block, Topology};
use grfface::evalharness::synthetic::{generate_synthetic, SyntheticConfig};
use grfface::evalharness::{
    fuse_scores, kfold_protocol, roc, scores_tpr_at_fpr, write_scores_csv, FoldScores, ScoredPair,
};
use grfface::grfbank::ChannelBank;
use grfface::imgcore::{read_pgm, write_pgm, ImagePlane};
use grfface::pairs::{all_pairs, sample_pairs, LabeledPair};
use grfface::patchpool::PatchPool;
use grfface::pipeline::manifest::ManifestEntry;
use grfface::pipeline::{
    admm_config, estimate_cost, extract_faces, fit_engines, run_pipeline_faces, score_pairs, select_channels,
    select_patches, train_stage, training_blocks, training_pairs, CostParams, DatasetManifest, ModelFile,
    PipelineConfig, TrainMode,
};
use grfface::pooling::PoolingKind;
use grfface::sffs::parse_trace;

#[derive(Parser)]
#[command(name = "grfface", version, about = "Receptive-field face features and distributed pair-SVM training")]
struct Cli {
    /// Pipeline configuration file (`key=value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides one configuration key, e.g. `--set patches=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed override for every stage.
    #[arg(long, env = "SEED", global = true)]
    seed: Option<u64>,
    /// Suppress stage logs on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic identity dataset as PGM files plus manifests.
    GenSynthetic(GenArgs),
    /// Extract per-engine face features with a model.
    Extract(ExtractArgs),
    /// Channel activation: search the full bank.
    SelectChannels(SelectChannelsArgs),
    /// Patch activation with a fixed channel bank.
    SelectPatches(SelectPatchesArgs),
    /// Fit the per-patch projections; writes an untrained model.
    FitLda(FitLdaArgs),
    /// Train the pair classifiers by consensus ADMM, locally or as a
    /// coordinator or worker process.
    Train(TrainCmd),
    /// Score pairs, dump ROC curves and TPR@FPR, or run a k-fold protocol.
    Eval(EvalArgs),
    /// Verify one pair of faces against the stored threshold.
    Verify(VerifyArgs),
    /// Flop and memory estimate for extracting one face.
    EstimateCost(CostArgs),
    /// SVG line chart from a ROC dump or a selection trace.
    Plot(PlotArgs),
    /// Every stage end to end.
    Run(RunArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    subjects: usize,
    #[arg(long, default_value_t = 10)]
    images: usize,
    #[arg(long)]
    noise: Option<f64>,
    /// Also write `train.csv` and `test.csv`, the first N subjects training.
    #[arg(long, value_name = "N")]
    train_subjects: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "images")]
    manifest: Option<PathBuf>,
    images: Vec<PathBuf>,
    /// CSV output (`face,engine,values`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectChannelsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SelectPatchesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct FitLdaArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    /// Direct calls in this process.
    Local,
    /// One worker thread per block over in-memory channels.
    Threads,
    /// One worker thread per block over loopback sockets.
    Sockets,
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, value_enum, default_value = "local")]
    topology: TopologyArg,
    /// Worker endpoints (`host:port`), one per block in block order; makes
    /// this process the coordinator.
    #[arg(long, env = "GRFFACE_WORKERS", value_delimiter = ',')]
    workers: Vec<String>,
    /// Seconds to keep retrying unreachable workers.
    #[arg(long, default_value_t = 30)]
    patience: u64,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    manifest: PathBuf,
    /// Untrained model from `fit-lda`.
    #[arg(long)]
    model: PathBuf,
    /// Trained model output; required unless serving a block.
    #[arg(long, required_unless_present = "serve")]
    out: Option<PathBuf>,
    /// Worker role: listen here and serve one block per engine session.
    #[arg(long, value_name = "ADDR", requires = "block")]
    serve: Option<String>,
    /// Block served by this worker.
    #[arg(long)]
    block: Option<usize>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, required_unless_present = "kfold")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    fpr: f64,
    /// Scores CSV (`face_a,face_b,label,score`).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// ROC CSV (`threshold,fpr,tpr`).
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Engine whose scores are dumped; the fused score when absent.
    #[arg(long)]
    engine: Option<PoolingKind>,
    /// Sample this many negative pairs instead of enumerating all of them.
    #[arg(long)]
    negatives: Option<usize>,
    /// Subject-disjoint k-fold protocol: trains the pipeline per fold.
    #[arg(long, value_name = "K")]
    kfold: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    image_a: PathBuf,
    image_b: PathBuf,
    /// Decide on the fused score instead of the first engine's.
    #[arg(long)]
    fuse: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Take P, Q, d and p from a model instead of the configuration.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Mean projected dimension when no model is given.
    #[arg(long, default_value_t = 100)]
    projected_dim: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// ROC dumps, one series each.
    #[arg(long, conflicts_with = "trace")]
    roc: Vec<PathBuf>,
    /// Selection traces; plots best J per subset size.
    #[arg(long)]
    trace: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
    /// Linear FPR axis for ROC plots.
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Writes the bank, pool and selection traces here.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    #[command(flatten)]
    opts: TrainOpts,
}

struct Ctx {
    config: PipelineConfig,
    quiet: bool,
    start: Instant,
}

impl Ctx {
    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[{:>8.2}s] {msg}", self.start.elapsed().as_secs_f64());
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
        c.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn load_pgm(path: &Path) -> Result<ImagePlane> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_pgm(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?)
}

fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<ImagePlane>, Vec<u32>)> {
    let m = DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    let faces = m.load_faces()?;
    let subjects = m.subject_ids();
    Ok((m, faces, subjects))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn apply_train_opts(config: &mut PipelineConfig, o: &TrainOpts) -> Result<()> {
    if let Some(b) = o.blocks {
        config.blocks = b;
    }
    if !o.workers.is_empty() {
        ensure!(
            o.blocks.is_none_or(|b| b == o.workers.len()),
            "--blocks {} disagrees with {} worker endpoints",
            config.blocks,
            o.workers.len()
        );
        config.blocks = o.workers.len();
    }
    if let Some(r) = o.rho {
        config.rho = r;
    }
    if let Some(c) = o.c {
        config.c = c;
    }
    if let Some(r) = o.rounds {
        config.max_rounds = r;
    }
    config.validate()?;
    Ok(())
}

fn train_mode(o: &TrainOpts) -> TrainMode {
    if !o.workers.is_empty() {
        return TrainMode::Remote {
            endpoints: o.workers.clone(),
            patience: Duration::from_secs(o.patience),
        };
    }
    match o.topology {
        TopologyArg::Local => TrainMode::Local,
        TopologyArg::Threads => TrainMode::Distributed(Topology::InProcess),
        TopologyArg::Sockets => TrainMode::Distributed(Topology::LocalSockets),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx {
        config: load_config(&cli)?,
        quiet: cli.quiet,
        start: Instant::now(),
    };
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&ctx, a),
        Command::Extract(a) => extract(a),
        Command::SelectChannels(a) => cmd_select_channels(&ctx, a),
        Command::SelectPatches(a) => cmd_select_patches(&ctx, a),
        Command::FitLda(a) => fit_lda(&ctx, a),
        Command::Train(a) => {
            apply_train_opts(&mut ctx.config, &a.opts)?;
            train(&ctx, a)
        }
        Command::Eval(a) => eval(&ctx, a),
        Command::Verify(a) => verify(a),
        Command::EstimateCost(a) => cost(&ctx, a),
        Command::Plot(a) => cmd_plot(a),
        Command::Run(a) => {
            apply_train_opts(&mut ctx.config, &a.opts)?;
            run_all(&ctx, a)
        }
    }
}

fn gen_synthetic(ctx: &Ctx, a: GenArgs) -> Result<()> {
    let mut sc = SyntheticConfig {
        subjects: a.subjects,
        images_per_subject: a.images,
        size: ctx.config.face_size,
        seed: ctx.config.seed,
        ..SyntheticConfig::default()
    };
    if let Some(n) = a.noise {
        sc.noise_sigma = n;
    }
    if let Some(t) = a.train_subjects {
        ensure!(t >= 2 && t + 2 <= a.subjects, "--train-subjects must leave at least two subjects on each side");
    }
    let data = generate_synthetic(&sc)?;
    fs::create_dir_all(&a.out)?;
    let mut all = Vec::with_capacity(data.faces.len());
    for ((face, name), &s) in data.faces.iter().zip(&data.names).zip(&data.subjects) {
        let file = format!("{name}.pgm");
        let mut w = BufWriter::new(fs::File::create(a.out.join(&file))?);
        write_pgm(&mut w, face)?;
        w.flush()?;
        all.push((
            ManifestEntry {
                path: PathBuf::from(file),
                subject: format!("s{s:03}"),
            },
            s,
        ));
    }
    let csv = |rows: Vec<ManifestEntry>| DatasetManifest { entries: rows }.to_csv();
    write_text(&a.out.join("manifest.csv"), &csv(all.iter().map(|(e, _)| e.clone()).collect()))?;
    if let Some(t) = a.train_subjects {
        let part = |train: bool| all.iter().filter(|(_, s)| ((*s as usize) < t) == train).map(|(e, _)| e.clone()).collect();
        write_text(&a.out.join("train.csv"), &csv(part(true)))?;
        write_text(&a.out.join("test.csv"), &csv(part(false)))?;
    }
    ctx.log(&format!("wrote {} faces of {} subjects to {}", data.faces.len(), a.subjects, a.out.display()));
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let (names, faces): (Vec<String>, Vec<ImagePlane>) = match &a.manifest {
        Some(m) => {
            let (m, faces, _) = load_dataset(m)?;
            (m.names(), faces)
        }
        None => {
            ensure!(!a.images.is_empty(), "give --manifest or at least one image");
            let faces = a.images.iter().map(|p| load_pgm(p)).collect::<Result<Vec<_>>>()?;
            (a.images.iter().map(|p| p.display().to_string()).collect(), faces)
        }
    };
    let features = extract_faces(&model, &faces)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "face,engine,values")?;
    for (e, engine) in model.engines.iter().enumerate() {
        for (name, f) in names.iter().zip(&features[e]) {
            let vals: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{name},{},{}", engine.kind, vals.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_select_channels(ctx: &Ctx, a: SelectChannelsArgs) -> Result<()> {
    let (_, faces, subjects) = load_dataset(&a.manifest)?;
    let (bank, result) = select_channels(&faces, &subjects, &ctx.config)?;
    ctx.log(&format!("active channels {:?}, fold J {:?}", bank.active_indices(), result.fold_scores));
    write_text(&a.out, &bank.to_text())?;
    if let Some(t) = &a.trace {
        write_text(t, &result.trace_text())?;
    }
    Ok(())
}

fn cmd_select_patches(ctx: &Ctx, a: SelectPatchesArgs) -> Result<()> {
    let (_, faces, subjects) = load_dataset(&a.manifest)?;
    let bank = ChannelBank::from_text(&fs::read_to_string(&a.bank)?)?;
    let (pool, result, cand) = select_patches(&faces, &subjects, &bank, &ctx.config)?;
    ctx.log(&format!(
        "{} patches of {} candidates, fold J {:?}",
        pool.active_count(),
        cand.len(),
        result.fold_scores
    ));
    write_text(&a.out, &pool.to_text())?;
    if let Some(t) = &a.trace {
        write_text(t, &result.trace_text())?;
    }
    Ok(())
}

fn fit_lda(ctx: &Ctx, a: FitLdaArgs) -> Result<()> {
    let (_, faces, subjects) = load_dataset(&a.manifest)?;
    let bank = ChannelBank::from_text(&fs::read_to_string(&a.bank)?)?;
    let pool = PatchPool::from_text(&fs::read_to_string(&a.pool)?)?;
    let (model, _) = fit_engines(&faces, &subjects, bank, pool, &ctx.config)?;
    for e in &model.engines {
        ctx.log(&format!("{} engine: D = {}", e.kind, e.projection.output_dim()));
    }
    model.save(&a.out)?;
    Ok(())
}

fn train(ctx: &Ctx, a: TrainCmd) -> Result<()> {
    let (_, faces, subjects) = load_dataset(&a.manifest)?;
    let mut model = ModelFile::load(&a.model)?;
    let features = extract_faces(&model, &faces)?;
    if let Some(addr) = &a.serve {
        let block = a.block.context("--serve needs --block")?;
        ensure!(block < ctx.config.blocks, "block {block} outside 0..{}", ctx.config.blocks);
        let listener = TcpListener::bind(addr.as_str()).with_context(|| format!("binding {addr}"))?;
        println!("listening {}", listener.local_addr()?);
        io::stdout().flush()?;
        let pairs = training_pairs(&subjects, &ctx.config);
        let admm = admm_config(&ctx.config);
        for (engine, feats) in model.engines.iter().zip(&features) {
            let mut blocks = training_blocks(feats, &pairs, engine, &admm)?;
            let mine = blocks.swap_remove(block);
            let rounds = serve_block(&listener, block, &mine)?;
            ctx.log(&format!("{} engine: served block {block} for {rounds} rounds", engine.kind));
        }
        return Ok(());
    }
    let out = a.out.context("--out is required")?;
    let mode = train_mode(&a.opts);
    train_stage(&mut model, &features, &subjects, &ctx.config, &mode, &mut |s| ctx.log(s))?;
    model.save(&out)?;
    ctx.log(&format!("wrote {}", out.display()));
    Ok(())
}

fn eval_pairs(subjects: &[u32], negatives: Option<usize>, seed: u64) -> Vec<LabeledPair> {
    match negatives {
        Some(n) => sample_pairs(subjects, n, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => all_pairs(subjects).collect(),
    }
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let (manifest, faces, subjects) = load_dataset(&a.manifest)?;
    if let Some(k) = a.kfold {
        return kfold(ctx, &faces, &subjects, k, a.fpr);
    }
    let model = ModelFile::load(a.model.as_ref().context("--model is required")?)?;
    let pairs = eval_pairs(&subjects, a.negatives, ctx.config.seed);
    let features = extract_faces(&model, &faces)?;
    let engine_scores = score_pairs(&model, &features, &pairs)?;
    let fused = fuse_scores(&engine_scores)?;
    let labelled = |s: &[f64]| -> Vec<(f64, bool)> { s.iter().zip(&pairs).map(|(&v, p)| (v, p.same)).collect() };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "pairs {} ({} positive)", pairs.len(), pairs.iter().filter(|p| p.same).count())?;
    for (e, s) in model.engines.iter().zip(&engine_scores) {
        let l = labelled(s);
        writeln!(
            out,
            "{} tpr@fpr={} {:.4} auc {:.4}",
            e.kind,
            a.fpr,
            scores_tpr_at_fpr(&l, a.fpr)?,
            roc(&l)?.auc()
        )?;
    }
    let lf = labelled(&fused);
    writeln!(out, "fused tpr@fpr={} {:.4} auc {:.4}", a.fpr, scores_tpr_at_fpr(&lf, a.fpr)?, roc(&lf)?.auc())?;
    let (pos, neg) = (lf.iter().filter(|x| x.1).count(), lf.iter().filter(|x| !x.1).count());
    let tp = lf.iter().filter(|&&(s, y)| y && s >= model.fused_threshold).count();
    let fp = lf.iter().filter(|&&(s, y)| !y && s >= model.fused_threshold).count();
    writeln!(
        out,
        "fused at stored threshold {}: tpr {:.4} fpr {:.4}",
        model.fused_threshold,
        tp as f64 / pos as f64,
        fp as f64 / neg as f64
    )?;
    let chosen = match a.engine {
        Some(k) => {
            let i = model
                .engines
                .iter()
                .position(|e| e.kind == k)
                .with_context(|| format!("model has no {k} engine"))?;
            &engine_scores[i]
        }
        None => &fused,
    };
    if let Some(p) = &a.scores {
        let names = manifest.names();
        let rows: Vec<ScoredPair> = pairs
            .iter()
            .zip(chosen)
            .map(|(p, &score)| ScoredPair {
                face_a: names[p.a].clone(),
                face_b: names[p.b].clone(),
                same: p.same,
                score,
            })
            .collect();
        let mut w = BufWriter::new(fs::File::create(p)?);
        write_scores_csv(&mut w, &rows)?;
        w.flush()?;
    }
    if let Some(p) = &a.roc {
        let mut w = BufWriter::new(fs::File::create(p)?);
        roc(&labelled(chosen))?.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn kfold(ctx: &Ctx, faces: &[ImagePlane], subjects: &[u32], k: usize, fpr: f64) -> Result<()> {
    let config = &ctx.config;
    let report = kfold_protocol(subjects, k, config.seed, fpr, |train, test| {
        let pick = |idx: &[usize]| -> (Vec<ImagePlane>, Vec<u32>) {
            (idx.iter().map(|&i| faces[i].clone()).collect(), idx.iter().map(|&i| subjects[i]).collect())
        };
        let (tr_f, tr_s) = pick(train);
        let (te_f, te_s) = pick(test);
        let rep = run_pipeline_faces(&tr_f, &tr_s, config, &TrainMode::Local, &mut |_| {})?;
        let score = |f: &[ImagePlane], pairs: Vec<LabeledPair>| -> grfface::Result<Vec<(f64, bool)>> {
            let feats = extract_faces(&rep.model, f)?;
            let fused = fuse_scores(&score_pairs(&rep.model, &feats, &pairs)?)?;
            Ok(fused.into_iter().zip(&pairs).map(|(v, p)| (v, p.same)).collect())
        };
        Ok(FoldScores {
            train: score(&tr_f, training_pairs(&tr_s, config))?,
            test: score(&te_f, all_pairs(&te_s).collect())?,
        })
    })?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for f in &report.folds {
        writeln!(
            out,
            "fold {} threshold {} accuracy {:.4} tpr@fpr={} {:.4}",
            f.fold, f.threshold, f.accuracy, fpr, f.test_tpr_at_fpr
        )?;
    }
    writeln!(out, "accuracy {:.4} +- {:.4}", report.mean_accuracy, report.standard_error)?;
    ctx.log(&format!("{k}-fold protocol done"));
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let (x, y) = (load_pgm(&a.image_a)?, load_pgm(&a.image_b)?);
    let v = model.verify_pair(&x, &y, a.fuse)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (k, s) in &v.scores {
        writeln!(out, "{k} {s}")?;
    }
    writeln!(out, "fused {}", v.fused)?;
    writeln!(out, "threshold {}", v.threshold)?;
    writeln!(out, "decision {}", if v.same { "same" } else { "different" })?;
    Ok(())
}

fn cost(ctx: &Ctx, a: CostArgs) -> Result<()> {
    let c = &ctx.config;
    let params = match &a.model {
        Some(p) => {
            let m = ModelFile::load(p)?;
            let e = m.engines.first().context("model has no engines")?;
            let q = m.pool.active_count();
            let mean_p = (e.projection.output_dim() as f64 / q.max(1) as f64).round() as usize;
            CostParams::new(m.bank.active_count(), q, e.kind, mean_p, m.face_w, m.face_h)
        }
        None => CostParams::new(c.channels, c.patches, c.selection_kind, a.projected_dim, c.face_size, c.face_size),
    };
    let r = estimate_cost(&params);
    print!(
        "channels={}\npatches={}\ndescriptor_dim={}\nprojected_dim={}\n{}",
        params.channels,
        params.patches,
        params.descriptor_dim,
        params.projected_dim,
        r.to_text()
    );
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let name = |p: &Path| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let chart = if !a.roc.is_empty() {
        let series = a
            .roc
            .iter()
            .map(|p| {
                Ok(plot::Series {
                    name: name(p),
                    points: plot::roc_points(&fs::read_to_string(p)?)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        plot::Chart {
            title: a.title.unwrap_or_else(|| "ROC".into()),
            x_label: "false positive rate".into(),
            y_label: "true positive rate".into(),
            log_x: !a.linear,
            series,
        }
    } else {
        ensure!(!a.trace.is_empty(), "give --roc or --trace");
        let series = a
            .trace
            .iter()
            .map(|p| {
                let entries = parse_trace(&fs::read_to_string(p)?)?;
                let mut best: Vec<(f64, f64)> = Vec::new();
                for t in &entries {
                    match best.iter_mut().find(|(k, _)| *k == t.k as f64) {
                        Some(b) => b.1 = b.1.max(t.j),
                        None => best.push((t.k as f64, t.j)),
                    }
                }
                best.sort_by(|x, y| x.0.total_cmp(&y.0));
                Ok(plot::Series {
                    name: name(p),
                    points: best,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        plot::Chart {
            title: a.title.unwrap_or_else(|| "selection".into()),
            x_label: "subset size".into(),
            y_label: "best J".into(),
            log_x: false,
            series,
        }
    };
    write_text(&a.out, &chart.to_svg())
}

fn run_all(ctx: &Ctx, a: RunArgs) -> Result<()> {
    let (_, faces, subjects) = load_dataset(&a.manifest)?;
    let mode = train_mode(&a.opts);
    let rep = run_pipeline_faces(&faces, &subjects, &ctx.config, &mode, &mut |s| ctx.log(s))?;
    if let Some(dir) = &a.artifacts {
        write_text(&dir.join("bank.txt"), &rep.model.bank.to_text())?;
        write_text(&dir.join("pool.txt"), &rep.model.pool.to_text())?;
        write_text(&dir.join("channel_trace.txt"), &rep.channel_selection.trace_text())?;
        write_text(&dir.join("patch_trace.txt"), &rep.patch_selection.trace_text())?;
        write_text(&dir.join("config.txt"), &ctx.config.to_text())?;
    }
    rep.model.save(&a.out)?;
    ctx.log(&format!("wrote {}", a.out.display()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn workers_set_the_block_count() {
        let mut c = PipelineConfig::default();
        let o = TrainOpts {
            blocks: None,
            rho: None,
            c: Some(0.5),
            rounds: None,
            topology: TopologyArg::Local,
            workers: vec!["a:1".into(), "b:2".into()],
            patience: 1,
        };
        apply_train_opts(&mut c, &o).unwrap();
        assert_eq!((c.blocks, c.c), (2, 0.5));
        assert!(matches!(train_mode(&o), TrainMode::Remote { .. }));
        let bad = TrainOpts { blocks: Some(3), ..o };
        assert!(apply_train_opts(&mut c, &bad).is_err());
    }
}
