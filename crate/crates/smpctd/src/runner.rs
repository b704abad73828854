//! Drives one protocol run: task and mode selection, per-party setup, and
//! the in-process multi-party harness used by tests and benchmarks.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Result};
use serde::Serialize;

use smpctd_core::channel::{msg, PartyChannel};
use smpctd_core::engine::{EngineConfig, MpcEngine, RevealRecord};
use smpctd_core::ingest::Accumulator;
use smpctd_core::linalg::Matrix;
use smpctd_core::pipeline::{
    decomposed_fa, decomposed_pca, decomposed_svd, traditional_fa, traditional_pca,
    traditional_svd, FaModel, PcaModel, PipelineConfig, SvdModel,
};
use smpctd_core::triple::{SeededTripleSource, TripleSource};

use crate::metrics::{Counters, SessionMetrics};
use crate::transport::loopback_mesh;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Task {
    Pca,
    Svd,
    Fa,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pca => "pca",
            Task::Svd => "svd",
            Task::Fa => "fa",
        }
    }
}

impl FromStr for Task {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Task> {
        match s {
            "pca" => Ok(Task::Pca),
            "svd" => Ok(Task::Svd),
            "fa" => Ok(Task::Fa),
            other => Err(anyhow!("unknown task {other:?} (expected pca, svd or fa)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Decomposed,
    Traditional,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Decomposed => "decomposed",
            Mode::Traditional => "traditional",
        }
    }
}

impl FromStr for Mode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "decomposed" => Ok(Mode::Decomposed),
            "traditional" => Ok(Mode::Traditional),
            other => Err(anyhow!(
                "unknown mode {other:?} (expected decomposed or traditional)"
            )),
        }
    }
}

/// Everything public that a run needs, identical on every party.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub task: Task,
    pub mode: Mode,
    pub cfg: PipelineConfig,
    pub chunk_rows: usize,
    pub frac_bits: u32,
    pub seed: u64,
}

impl RunSpec {
    pub fn new(task: Task, mode: Mode) -> RunSpec {
        RunSpec {
            task,
            mode,
            cfg: PipelineConfig::default(),
            chunk_rows: crate::data::DEFAULT_CHUNK_ROWS,
            frac_bits: 20,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Model {
    Pca(PcaModel),
    Svd(SvdModel),
    Fa(FaModel),
}

#[derive(Clone, Debug)]
pub struct PartyRun {
    pub model: Model,
    pub metrics: SessionMetrics,
    pub reveals: Vec<RevealRecord>,
}

/// Runs one party's side of the protocol over an established channel.
///
/// In decomposed mode `data` is folded chunk-by-chunk into the constant-size
/// accumulator; in traditional mode the parties first exchange their public
/// row counts and then share every row.
pub fn run_party<C: PartyChannel, T: TripleSource>(
    mut channel: C,
    triples: T,
    counters: Arc<Counters>,
    spec: &RunSpec,
    data: &Matrix,
) -> Result<PartyRun> {
    let started = Instant::now();
    let row_counts = match spec.mode {
        Mode::Decomposed => Vec::new(),
        Mode::Traditional => exchange_row_counts(&mut channel, data.rows)?,
    };
    let config = EngineConfig { frac_bits: spec.frac_bits, session_seed: spec.seed };
    let mut eng = MpcEngine::new(channel, triples, config).map_err(|e| anyhow!("{e}"))?;
    let model = match spec.mode {
        Mode::Decomposed => {
            let mut acc = Accumulator::new(data.cols, spec.cfg.max_abs);
            let mut line = 1;
            for start in (0..data.rows).step_by(spec.chunk_rows.max(1)) {
                let end = (start + spec.chunk_rows.max(1)).min(data.rows);
                let chunk = Matrix::from_vec(
                    end - start,
                    data.cols,
                    data.data[start * data.cols..end * data.cols].to_vec(),
                );
                acc.push_chunk(&chunk, line).map_err(|e| anyhow!("{e:?}"))?;
                line += end - start;
            }
            match spec.task {
                Task::Pca => Model::Pca(
                    decomposed_pca(&mut eng, &acc, &spec.cfg).map_err(|e| anyhow!("{e}"))?,
                ),
                Task::Svd => Model::Svd(
                    decomposed_svd(&mut eng, &acc, &spec.cfg).map_err(|e| anyhow!("{e}"))?,
                ),
                Task::Fa => Model::Fa(
                    decomposed_fa(&mut eng, &acc, &spec.cfg).map_err(|e| anyhow!("{e}"))?,
                ),
            }
        }
        Mode::Traditional => match spec.task {
            Task::Pca => Model::Pca(
                traditional_pca(&mut eng, data, &row_counts, data.cols, &spec.cfg)
                    .map_err(|e| anyhow!("{e}"))?,
            ),
            Task::Svd => Model::Svd(
                traditional_svd(&mut eng, data, &row_counts, data.cols, &spec.cfg)
                    .map_err(|e| anyhow!("{e}"))?,
            ),
            Task::Fa => Model::Fa(
                traditional_fa(&mut eng, data, &row_counts, data.cols, &spec.cfg)
                    .map_err(|e| anyhow!("{e}"))?,
            ),
        },
    };
    let peak = eng.gauge().peak();
    let reveals = eng.reveal_log().to_vec();
    let wall_time = started.elapsed().as_secs_f64();
    Ok(PartyRun {
        model,
        metrics: SessionMetrics::collect(&counters, peak, wall_time),
        reveals,
    })
}

fn exchange_row_counts<C: PartyChannel>(channel: &mut C, mine: usize) -> Result<Vec<usize>> {
    let me = channel.party_id();
    let m = channel.parties();
    for peer in 0..m {
        if peer != me {
            channel
                .send(peer, msg::DATA, &[mine as u64])
                .map_err(|e| anyhow!("{e}"))?;
        }
    }
    let mut counts = vec![0usize; m];
    counts[me] = mine;
    for peer in 0..m {
        if peer != me {
            let words = channel.recv(peer, msg::DATA).map_err(|e| anyhow!("{e}"))?;
            counts[peer] = *words.first().ok_or_else(|| anyhow!("empty count frame"))? as usize;
        }
    }
    channel.mark_round();
    Ok(counts)
}

/// Runs all `m` parties in one process over the loopback mesh, with triples
/// derived locally from the shared seed. `data[i]` is party i's rows.
pub fn run_local(spec: &RunSpec, data: &[Matrix]) -> Result<Vec<PartyRun>> {
    let m = data.len();
    assert!(m >= 2);
    let mesh = loopback_mesh(m);
    let mut handles = Vec::new();
    for (party, channel) in mesh.into_iter().enumerate() {
        let spec = spec.clone();
        let rows = data[party].clone();
        let counters = channel.counters();
        let triples = SeededTripleSource::new(spec.seed ^ 0x7472_6970, m, party);
        handles.push(std::thread::spawn(move || {
            run_party(channel, triples, counters, &spec, &rows)
        }));
    }
    let mut out = Vec::with_capacity(m);
    for h in handles {
        out.push(h.join().map_err(|_| anyhow!("party thread panicked"))??);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_and_mode_parse() {
        assert_eq!(Task::from_str("pca").unwrap(), Task::Pca);
        assert_eq!(Mode::from_str("traditional").unwrap(), Mode::Traditional);
        assert!(Task::from_str("cluster").is_err());
        assert_eq!(Task::Fa.name(), "fa");
    }
}
