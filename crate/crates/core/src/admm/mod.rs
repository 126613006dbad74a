//! Consensus ADMM for the squared-hinge linear SVM over sample blocks.
//!
//! Each round every block solves
//! `min_w C sum_B max(1 - y w.x, 0)^2 + rho |w - z + u_j|^2`, then
//! `z = 2 rho sum_j (w_j + u_j) / (1 + 2 rho m)` and `u_j += w_j - z`.
//! Workers hold their block and their own `u_j`; the coordinator mirrors the
//! duals from the `w_j` it receives, so only weight vectors travel.

pub mod protocol;
pub mod transport;

use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::pairengine::{L2SvmProblem, SampleSet};
use protocol::{Frame, ABORT_NUMERICAL, ABORT_PROTOCOL, ABORT_SHUTDOWN, ABORT_TIMEOUT, PROTO_VERSION};
use transport::{channel_pair, Link, TcpLink};

#[derive(Clone, Debug, PartialEq)]
pub struct AdmmConfig {
    pub c: f64,
    pub rho: f64,
    pub blocks: usize,
    pub max_rounds: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub seed: u64,
    /// Positives per block; `None` keeps the pool's positive count.
    pub pos_quota: Option<usize>,
    /// Negatives per block; `None` splits the whole negative pool evenly.
    pub neg_quota: Option<usize>,
    /// Per-message wait before a retry.
    pub timeout: Duration,
    /// Keep `z` of every round in the log.
    pub record_iterates: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            c: 1.0,
            rho: 1.0,
            blocks: 1,
            max_rounds: 50,
            eps_abs: 1e-4,
            eps_rel: 1e-3,
            seed: 0,
            pos_quota: None,
            neg_quota: None,
            timeout: Duration::from_secs(300),
            record_iterates: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.rho > 0.0) || self.blocks == 0 || self.max_rounds == 0 {
            return Err(Error::invalid("admm needs C > 0, rho > 0, blocks >= 1, rounds >= 1"));
        }
        if !(self.eps_abs >= 0.0) || !(self.eps_rel >= 0.0) {
            return Err(Error::invalid("admm tolerances must be non-negative"));
        }
        Ok(())
    }

    fn frame(&self) -> Frame {
        Frame::Config {
            c: self.c,
            rho: self.rho,
            max_rounds: self.max_rounds as u32,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
        }
    }
}

/// Sample indices (into the pool) held by one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockAssignment {
    pub block: usize,
    pub samples: Vec<usize>,
    pub locality: String,
}

/// Splits a labeled pool (`true` = positive) into `config.blocks` blocks.
/// Negatives are shuffled under the seed and dealt without replacement;
/// positives are drawn with replacement per block, except for a single
/// block, which takes a shuffled prefix without replacement.
pub fn partition_blocks(positive: &[bool], config: &AdmmConfig) -> Result<Vec<BlockAssignment>> {
    config.validate()?;
    let m = config.blocks;
    let pos: Vec<usize> = (0..positive.len()).filter(|&i| positive[i]).collect();
    let mut neg: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let neg_quota = config.neg_quota.unwrap_or(neg.len() / m);
    if neg_quota == 0 || m * neg_quota > neg.len() {
        return Err(Error::QuotaExceedsPool {
            needed: m * neg_quota.max(1),
            available: neg.len(),
        });
    }
    let pos_quota = config.pos_quota.unwrap_or(pos.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    neg.shuffle(&mut rng);
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let mut samples: Vec<usize> = if m == 1 && pos_quota <= pos.len() {
            let mut p = pos.clone();
            p.shuffle(&mut rng);
            p.truncate(pos_quota);
            p
        } else {
            (0..pos_quota).map(|_| pos[rng.random_range(0..pos.len())]).collect()
        };
        samples.extend_from_slice(&neg[j * neg_quota..(j + 1) * neg_quota]);
        out.push(BlockAssignment {
            block: j,
            samples,
            locality: format!("worker-{j}"),
        });
    }
    Ok(out)
}

/// Block solve from `start` (or `z - u` when absent), to gradient norm
/// `1e-6 (1 + |z|)`.
pub fn solve_local(
    block: &SampleSet,
    z: &[f64],
    u: &[f64],
    start: Option<&[f64]>,
    config: &AdmmConfig,
) -> Result<Vec<f64>> {
    if block.is_empty() {
        return Err(Error::invalid("empty block"));
    }
    let center: Vec<f64> = z.iter().zip(u).map(|(a, b)| a - b).collect();
    let problem = L2SvmProblem {
        samples: block,
        c: config.c,
        alpha: 2.0 * config.rho,
        center: &center,
    };
    let w0 = start.unwrap_or(&center);
    let tol = 1e-6 * (1.0 + norm(z));
    let (w, _) = problem.solve(w0, tol, 500)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            round: 0,
            block: 0,
            detail: "non-finite local weights".into(),
        });
    }
    Ok(w)
}

/// Closed-form minimiser of `1/2 |z|^2 + rho sum_j |w_j - z + u_j|^2`.
pub fn z_update(w: &[Vec<f64>], u: &[Vec<f64>], rho: f64) -> Vec<f64> {
    let m = w.len() as f64;
    let dim = w[0].len();
    let mut z = vec![0.0; dim];
    for (wj, uj) in w.iter().zip(u) {
        for k in 0..dim {
            z[k] += wj[k] + uj[k];
        }
    }
    let f = 2.0 * rho / (1.0 + 2.0 * rho * m);
    z.iter_mut().for_each(|v| *v *= f);
    z
}

/// `u += w - z`.
pub fn dual_update(u: &mut [f64], w: &[f64], z: &[f64]) {
    for k in 0..u.len() {
        u[k] += w[k] - z[k];
    }
}

/// Primal `r = sqrt(sum |w_j - z|^2)` and dual `s = 2 rho sqrt(m) |z - z_prev|`.
pub fn residuals(w: &[Vec<f64>], z: &[f64], z_prev: &[f64], rho: f64) -> (f64, f64) {
    let r: f64 = w
        .iter()
        .map(|wj| wj.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let dz: f64 = z.iter().zip(z_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (r, 2.0 * rho * (w.len() as f64).sqrt() * dz)
}

/// Stopping rule on residuals, with `u` already updated.
pub fn has_converged(w: &[Vec<f64>], u: &[Vec<f64>], z: &[f64], r: f64, s: f64, config: &AdmmConfig) -> bool {
    let m = w.len() as f64;
    let dim = z.len() as f64;
    let w_norm = w.iter().map(|wj| dot(wj, wj)).sum::<f64>().sqrt();
    let eps_pri = (m * dim).sqrt() * config.eps_abs + config.eps_rel * w_norm.max(m.sqrt() * norm(z));
    let mut usum = vec![0.0; z.len()];
    for uj in u {
        for k in 0..usum.len() {
            usum[k] += uj[k];
        }
    }
    let eps_dual = dim.sqrt() * config.eps_abs + config.eps_rel * 2.0 * config.rho * norm(&usum);
    r <= eps_pri && s <= eps_dual
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub primal: f64,
    pub dual: f64,
    /// `1/2 |z|^2 + sum_j C sum_B max(1 - y w_j.x, 0)^2`.
    pub objective: f64,
    pub converged: bool,
    pub z: Option<Vec<f64>>,
}

impl RoundLog {
    pub fn line(&self) -> String {
        format!(
            "round {} primal {:.6e} dual {:.6e} objective {:.9e}{}",
            self.round,
            self.primal,
            self.dual,
            self.objective,
            if self.converged { " converged" } else { "" }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    pub z: Vec<f64>,
    /// Latest local weights; empty before the first round.
    pub w: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub round: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
}

impl ConsensusState {
    pub fn new(blocks: usize, dim: usize) -> Self {
        ConsensusState {
            z: vec![0.0; dim],
            w: vec![Vec::new(); blocks],
            u: vec![vec![0.0; dim]; blocks],
            round: 0,
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            converged: false,
        }
    }

    /// `max_j |w_j - z|_inf`.
    pub fn consensus_gap(&self) -> f64 {
        self.w
            .iter()
            .flat_map(|wj| wj.iter().zip(&self.z).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Shared by the in-process reference and the coordinator: z, duals,
/// residuals, convergence.
fn finish_round(state: &mut ConsensusState, local_objectives: &[f64], config: &AdmmConfig) -> RoundLog {
    let z_prev = std::mem::take(&mut state.z);
    state.z = z_update(&state.w, &state.u, config.rho);
    for (uj, wj) in state.u.iter_mut().zip(&state.w) {
        dual_update(uj, wj, &state.z);
    }
    let (r, s) = residuals(&state.w, &state.z, &z_prev, config.rho);
    state.primal = r;
    state.dual = s;
    state.converged = has_converged(&state.w, &state.u, &state.z, r, s, config);
    let log = RoundLog {
        round: state.round,
        primal: r,
        dual: s,
        objective: 0.5 * dot(&state.z, &state.z) + local_objectives.iter().sum::<f64>(),
        converged: state.converged,
        z: config.record_iterates.then(|| state.z.clone()),
    };
    state.round += 1;
    log
}

/// One round with every block solved in this process.
pub fn consensus_round(state: &mut ConsensusState, blocks: &[SampleSet], config: &AdmmConfig) -> Result<RoundLog> {
    let round = state.round;
    let solved = blocks
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            let start = (!state.w[j].is_empty()).then(|| state.w[j].as_slice());
            let w = solve_local(b, &state.z, &state.u[j], start, config).map_err(|e| with_context(e, round, j))?;
            let obj = b.hinge_loss(&w, config.c);
            Ok((w, obj))
        })
        .collect::<Result<Vec<_>>>()?;
    let (w, objs): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    state.w = w;
    Ok(finish_round(state, &objs, config))
}

fn with_context(e: Error, round: usize, block: usize) -> Error {
    match e {
        Error::NumericalFailure { detail, .. } => Error::NumericalFailure { round, block, detail },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub state: ConsensusState,
    pub history: Vec<RoundLog>,
    /// `Some("max-rounds")` when the budget ran out first.
    pub flag: Option<&'static str>,
}

impl TrainOutcome {
    pub fn rounds(&self) -> usize {
        self.state.round
    }

    pub fn z(&self) -> &[f64] {
        &self.state.z
    }
}

fn check_blocks(blocks: &[SampleSet]) -> Result<usize> {
    let dim = blocks.first().ok_or_else(|| Error::invalid("no blocks"))?.dim();
    for b in blocks {
        if b.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: b.dim(),
            });
        }
        if b.is_empty() {
            return Err(Error::invalid("empty block"));
        }
    }
    Ok(dim)
}

/// Rounds until convergence or the budget, all in this process without
/// message passing.
pub fn run_admm(
    blocks: &[SampleSet],
    config: &AdmmConfig,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = check_blocks(blocks)?;
    let mut state = ConsensusState::new(blocks.len(), dim);
    let mut history = Vec::new();
    while state.round < config.max_rounds {
        let log = consensus_round(&mut state, blocks, config)?;
        on_round(&log);
        history.push(log);
        if state.converged {
            break;
        }
    }
    let flag = (!state.converged).then_some("max-rounds");
    Ok(TrainOutcome { state, history, flag })
}

/// Serves one block until DONE. Sends HELLO, waits for CONFIG, then answers
/// every ROUND_Z with LOCAL_W. A repeated ROUND_Z is answered from cache.
pub fn run_worker(link: &mut dyn Link, block_id: usize, samples: &SampleSet, idle: Option<Duration>) -> Result<usize> {
    link.send(&Frame::Hello {
        version: PROTO_VERSION,
        dim: samples.dim() as u32,
        block: block_id as u32,
    })?;
    let timeout_err = || Error::WorkerTimeout { block: block_id };
    let config = match link.recv(idle)?.ok_or_else(timeout_err)? {
        Frame::Config {
            c,
            rho,
            max_rounds,
            eps_abs,
            eps_rel,
        } => AdmmConfig {
            c,
            rho,
            max_rounds: max_rounds as usize,
            eps_abs,
            eps_rel,
            ..AdmmConfig::default()
        },
        Frame::Abort { code } => return Err(Error::WorkerAbort(code)),
        other => return Err(Error::ProtocolMismatch(format!("expected CONFIG, got tag {:#04x}", other.tag()))),
    };
    let dim = samples.dim();
    let mut u = vec![0.0; dim];
    let mut last: Option<(u32, Vec<f64>, f64)> = None;
    loop {
        match link.recv(idle)?.ok_or_else(timeout_err)? {
            Frame::RoundZ { round, z } => {
                if z.len() != dim {
                    link.send(&Frame::Abort { code: ABORT_PROTOCOL })?;
                    return Err(Error::ProtocolMismatch(format!("ROUND_Z of length {}", z.len())));
                }
                if let Some((r, w, obj)) = &last {
                    if *r == round {
                        link.send(&Frame::LocalW {
                            round,
                            w: w.clone(),
                            local_objective: *obj,
                        })?;
                        continue;
                    }
                }
                if let Some((_, w, _)) = &last {
                    dual_update(&mut u, w, &z);
                }
                let start = last.as_ref().map(|(_, w, _)| w.as_slice());
                let w = match solve_local(samples, &z, &u, start, &config) {
                    Ok(w) => w,
                    Err(e) => {
                        let _ = link.send(&Frame::Abort { code: ABORT_NUMERICAL });
                        return Err(with_context(e, round as usize, block_id));
                    }
                };
                let obj = samples.hinge_loss(&w, config.c);
                link.send(&Frame::LocalW {
                    round,
                    w: w.clone(),
                    local_objective: obj,
                })?;
                last = Some((round, w, obj));
            }
            Frame::Done { rounds } => return Ok(rounds as usize),
            Frame::Abort { code } => return Err(Error::WorkerAbort(code)),
            other => {
                return Err(Error::ProtocolMismatch(format!("unexpected tag {:#04x}", other.tag())));
            }
        }
    }
}

fn abort_all(links: &mut [Box<dyn Link>], code: u16) {
    for l in links.iter_mut() {
        let _ = l.send(&Frame::Abort { code });
    }
}

/// Drives the rounds over `links`, one per block. Links are ordered by the
/// block id announced in HELLO.
pub fn run_coordinator(
    mut links: Vec<Box<dyn Link>>,
    dim: usize,
    config: &AdmmConfig,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let m = links.len();
    if m == 0 {
        return Err(Error::invalid("no workers"));
    }
    let mut ids = Vec::with_capacity(m);
    for (i, l) in links.iter_mut().enumerate() {
        match l.recv(Some(config.timeout))? {
            Some(Frame::Hello { version, dim: d, block }) => {
                if version != PROTO_VERSION || d as usize != dim || block as usize >= m {
                    let _ = l.send(&Frame::Abort { code: ABORT_PROTOCOL });
                    return Err(Error::ProtocolMismatch(format!(
                        "HELLO version {version}, dim {d}, block {block}; expected version {PROTO_VERSION}, dim {dim}, block < {m}"
                    )));
                }
                ids.push(block as usize);
            }
            Some(other) => {
                return Err(Error::ProtocolMismatch(format!("expected HELLO, got tag {:#04x}", other.tag())));
            }
            None => return Err(Error::WorkerTimeout { block: i }),
        }
    }
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != m {
        abort_all(&mut links, ABORT_PROTOCOL);
        return Err(Error::ProtocolMismatch("duplicate block ids".into()));
    }
    let mut order: Vec<(usize, Box<dyn Link>)> = ids.into_iter().zip(links).collect();
    order.sort_by_key(|(id, _)| *id);
    let mut links: Vec<Box<dyn Link>> = order.into_iter().map(|(_, l)| l).collect();
    let cfg = config.frame();
    for l in links.iter_mut() {
        l.send(&cfg)?;
    }

    let mut state = ConsensusState::new(m, dim);
    let mut history = Vec::new();
    while state.round < config.max_rounds {
        let round = state.round as u32;
        let z_frame = Frame::RoundZ {
            round,
            z: state.z.clone(),
        };
        for l in links.iter_mut() {
            l.send(&z_frame)?;
        }
        let mut w = Vec::with_capacity(m);
        let mut objs = Vec::with_capacity(m);
        for j in 0..m {
            let mut retried = false;
            let (wj, obj) = loop {
                match links[j].recv(Some(config.timeout))? {
                    Some(Frame::LocalW {
                        round: r,
                        w,
                        local_objective,
                    }) if r == round => {
                        if w.len() != dim {
                            abort_all(&mut links, ABORT_PROTOCOL);
                            return Err(Error::ProtocolMismatch(format!("LOCAL_W of length {}", w.len())));
                        }
                        break (w, local_objective);
                    }
                    Some(Frame::LocalW { .. }) => continue,
                    Some(Frame::Abort { code }) => {
                        abort_all(&mut links, ABORT_SHUTDOWN);
                        return Err(if code == ABORT_NUMERICAL {
                            Error::NumericalFailure {
                                round: round as usize,
                                block: j,
                                detail: "worker reported a numerical failure".into(),
                            }
                        } else {
                            Error::WorkerAbort(code)
                        });
                    }
                    Some(other) => {
                        abort_all(&mut links, ABORT_PROTOCOL);
                        return Err(Error::ProtocolMismatch(format!("unexpected tag {:#04x}", other.tag())));
                    }
                    None if !retried => {
                        retried = true;
                        links[j].send(&z_frame)?;
                    }
                    None => {
                        abort_all(&mut links, ABORT_TIMEOUT);
                        return Err(Error::WorkerTimeout { block: j });
                    }
                }
            };
            w.push(wj);
            objs.push(obj);
        }
        state.w = w;
        let log = finish_round(&mut state, &objs, config);
        on_round(&log);
        history.push(log);
        if state.converged {
            break;
        }
    }
    let done = Frame::Done {
        rounds: state.round as u32,
    };
    for l in links.iter_mut() {
        l.send(&done)?;
    }
    let flag = (!state.converged).then_some("max-rounds");
    Ok(TrainOutcome { state, history, flag })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Worker threads linked by in-memory channels.
    InProcess,
    /// Worker threads linked through loopback TCP sockets.
    LocalSockets,
}

/// Runs the coordinator here and one worker per block on its own thread.
pub fn train_distributed(
    blocks: &[SampleSet],
    config: &AdmmConfig,
    topology: Topology,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = check_blocks(blocks)?;
    thread::scope(|scope| {
        let mut links: Vec<Box<dyn Link>> = Vec::with_capacity(blocks.len());
        let mut handles = Vec::with_capacity(blocks.len());
        match topology {
            Topology::InProcess => {
                for (j, b) in blocks.iter().enumerate() {
                    let (coord, mut worker) = channel_pair();
                    links.push(Box::new(coord));
                    let idle = Some(config.timeout * 4);
                    handles.push(scope.spawn(move || run_worker(&mut worker, j, b, idle)));
                }
            }
            Topology::LocalSockets => {
                let listener = TcpListener::bind("127.0.0.1:0")?;
                let addr = listener.local_addr()?;
                for (j, b) in blocks.iter().enumerate() {
                    let idle = Some(config.timeout * 4);
                    handles.push(scope.spawn(move || {
                        let mut link = TcpLink::new(TcpStream::connect(addr)?)?;
                        run_worker(&mut link, j, b, idle)
                    }));
                }
                for _ in 0..blocks.len() {
                    let (stream, _) = listener.accept()?;
                    links.push(Box::new(TcpLink::new(stream)?));
                }
            }
        }
        let outcome = run_coordinator(links, dim, config, on_round);
        for h in handles {
            let worker = h.join().map_err(|_| Error::invalid("worker thread panicked"))?;
            if outcome.is_ok() {
                worker?;
            }
        }
        outcome
    })
}

/// Dials one worker per block, in block order, retrying each endpoint until
/// `patience` elapses, and coordinates them.
pub fn dial_workers(
    endpoints: &[String],
    dim: usize,
    config: &AdmmConfig,
    patience: Duration,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if endpoints.len() != config.blocks {
        return Err(Error::invalid(format!(
            "{} worker endpoints for {} blocks",
            endpoints.len(),
            config.blocks
        )));
    }
    let mut links: Vec<Box<dyn Link>> = Vec::with_capacity(endpoints.len());
    for addr in endpoints {
        let start = Instant::now();
        let stream = loop {
            match TcpStream::connect(addr.as_str()) {
                Ok(s) => break s,
                Err(_) if start.elapsed() < patience => thread::sleep(Duration::from_millis(100)),
                Err(e) => return Err(e.into()),
            }
        };
        links.push(Box::new(TcpLink::new(stream)?));
    }
    run_coordinator(links, dim, config, on_round)
}

/// Accepts one coordinator session on `listener` and serves `samples` as
/// block `block_id` until DONE.
pub fn serve_block(listener: &TcpListener, block_id: usize, samples: &SampleSet) -> Result<usize> {
    let (stream, _) = listener.accept()?;
    let mut link = TcpLink::new(stream)?;
    run_worker(&mut link, block_id, samples, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_block(seed: u64, n: usize, dim: usize) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SampleSet::new(dim);
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x: Vec<f64> = (0..dim).map(|k| rng.random_range(-1.0..1.0) + if k == 0 { 0.5 * y } else { 0.0 }).collect();
            s.push(&x, y).unwrap();
        }
        s
    }

    #[test]
    fn partition_examples() {
        let cfg = AdmmConfig {
            blocks: 3,
            neg_quota: Some(3),
            pos_quota: Some(2),
            seed: 5,
            ..AdmmConfig::default()
        };
        let mut labels = vec![false; 9];
        labels.extend([true, true]);
        let blocks = partition_blocks(&labels, &cfg).unwrap();
        let mut negs: Vec<usize> = blocks
            .iter()
            .flat_map(|b| b.samples.iter().copied().filter(|&i| !labels[i]))
            .collect();
        negs.sort_unstable();
        assert_eq!(negs, (0..9).collect::<Vec<_>>());
        assert!(blocks.iter().all(|b| b.samples.len() == 5));
        let over = AdmmConfig {
            neg_quota: Some(4),
            ..cfg
        };
        assert!(matches!(partition_blocks(&labels, &over), Err(Error::QuotaExceedsPool { .. })));
    }

    #[test]
    fn z_update_zeroes_gradient() {
        let w = vec![vec![1.0, -2.0], vec![0.5, 4.0], vec![3.0, 0.0]];
        let u = vec![vec![0.1, 0.2], vec![-0.3, 0.0], vec![0.0, 1.0]];
        let rho = 0.7;
        let z = z_update(&w, &u, rho);
        for k in 0..2 {
            let g: f64 = z[k] - 2.0 * rho * (0..3).map(|j| w[j][k] - z[k] + u[j][k]).sum::<f64>();
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn identical_blocks_agree() {
        let b = toy_block(1, 40, 4);
        let blocks = vec![b.clone(), b.clone(), b];
        let cfg = AdmmConfig {
            blocks: 3,
            ..AdmmConfig::default()
        };
        let mut st = ConsensusState::new(3, 4);
        for _ in 0..3 {
            consensus_round(&mut st, &blocks, &cfg).unwrap();
            assert_eq!(st.w[0], st.w[1]);
            assert_eq!(st.w[1], st.w[2]);
        }
    }

    #[test]
    fn channel_transport_matches_reference() {
        let blocks = vec![toy_block(2, 30, 5), toy_block(3, 30, 5)];
        let cfg = AdmmConfig {
            blocks: 2,
            max_rounds: 8,
            ..AdmmConfig::default()
        };
        let reference = run_admm(&blocks, &cfg, &mut |_| {}).unwrap();
        let wire = train_distributed(&blocks, &cfg, Topology::InProcess, &mut |_| {}).unwrap();
        assert_eq!(reference.state, wire.state);
    }
}
