//! Exhaustive exploration of the demanded-bit tree.
//!
//! Every execution path of the machine is identified by the program bits it
//! actually consumed. Walking the tree of possible opcode answers up to the
//! caps yields a set of leaves that tiles the binary tree: the masses
//! `2^-|prefix|` sum to exactly one. All priors are computed from this set.

mod cache;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::bits::Bits;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::machine::{run_fixed, ExecOutcome, Machine, MachineConfig, Opcode, Poll, Status, MACHINE_VERSION};

pub use cache::{
    aux_digest, cache_file_name, decode_runset, encode_runset, load_runset, save_runset, CACHE_FORMAT_VERSION,
};

/// One leaf of the execution tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub consumed_prefix: Bits,
    pub status: Status,
    pub output: Bits,
    pub emission_profile: Vec<u32>,
}

impl RunRecord {
    pub fn from_outcome(consumed_prefix: Bits, outcome: ExecOutcome) -> Self {
        debug_assert_eq!(consumed_prefix.len(), outcome.consumed_bits);
        RunRecord {
            consumed_prefix,
            status: outcome.status,
            output: outcome.output,
            emission_profile: outcome.emission_profile,
        }
    }

    /// Path mass `2^-|consumed_prefix|`.
    pub fn mass(&self) -> Dyadic {
        Dyadic::pow2_neg(self.consumed_prefix.len() as u32)
    }

    pub fn is_halted(&self) -> bool {
        self.status == Status::Halted
    }
}

/// The full leaf set for one machine configuration, in canonical
/// (lexicographic by consumed prefix) order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSet {
    config: MachineConfig,
    records: Vec<RunRecord>,
    machine_version: String,
}

impl RunSet {
    pub fn new(config: MachineConfig, mut records: Vec<RunRecord>) -> Self {
        records.sort_by(|a, b| a.consumed_prefix.cmp(&b.consumed_prefix));
        RunSet {
            config,
            records,
            machine_version: MACHINE_VERSION.to_string(),
        }
    }

    pub(crate) fn from_parts(config: MachineConfig, records: Vec<RunRecord>, machine_version: String) -> Self {
        RunSet {
            config,
            records,
            machine_version,
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn machine_version(&self) -> &str {
        &self.machine_version
    }

    pub fn depth_cap(&self) -> usize {
        self.config.depth_cap()
    }

    pub fn step_cap(&self) -> u64 {
        self.config.step_cap()
    }

    pub fn is_unconditional(&self) -> bool {
        self.config.aux_tape().is_empty()
    }

    pub fn halted(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.is_halted())
    }

    /// Σ 2^-|prefix| over all records; exactly one for a complete set.
    pub fn total_mass(&self) -> Dyadic {
        self.records.iter().map(RunRecord::mass).sum()
    }

    /// Number of Halted records whose prefix is a proper prefix of another
    /// Halted record's prefix. Canonical order puts an extension right
    /// after its prefix, so adjacent pairs suffice once non-halted records
    /// are skipped.
    pub fn prefix_violations(&self) -> usize {
        let halted: Vec<&Bits> = self.halted().map(|r| &r.consumed_prefix).collect();
        let mut count = 0;
        for (i, p) in halted.iter().enumerate() {
            count += halted[i + 1..]
                .iter()
                .take_while(|q| q.starts_with(p))
                .filter(|q| q.len() > p.len())
                .count();
        }
        count
    }

    /// Checks the tiling invariant over all records: no record's prefix is a
    /// prefix of another's, and the masses sum to one.
    pub fn is_complete(&self) -> bool {
        let disjoint = self
            .records
            .windows(2)
            .all(|w| !w[1].consumed_prefix.starts_with(&w[0].consumed_prefix));
        disjoint && self.total_mass() == Dyadic::ONE
    }
}

#[derive(Clone, Debug)]
pub struct ExploreOptions {
    /// Worker threads; 1 explores on the calling thread.
    pub workers: usize,
    pub max_records: usize,
    /// Opcodes resolved sequentially before subtrees are handed to workers.
    pub split_opcodes: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            workers: 1,
            max_records: 50_000_000,
            split_opcodes: 2,
        }
    }
}

impl ExploreOptions {
    pub fn with_workers(workers: usize) -> Self {
        ExploreOptions {
            workers: workers.max(1),
            ..Default::default()
        }
    }
}

struct Budget<'a> {
    used: &'a AtomicUsize,
    limit: usize,
}

impl Budget<'_> {
    fn take(&self) -> Result<()> {
        if self.used.fetch_add(1, Ordering::Relaxed) >= self.limit {
            return Err(Error::RecordCeiling { limit: self.limit });
        }
        Ok(())
    }
}

fn prefix_of(m: &Machine<'_>) -> Bits {
    let mut p = Bits::with_capacity(m.consumed_bits());
    for op in m.opcodes() {
        op.push_bits(&mut p);
    }
    p
}

fn descend(mut m: Machine<'_>, out: &mut Vec<RunRecord>, budget: &Budget<'_>) -> Result<()> {
    match m.poll() {
        Poll::Finished(status) => {
            budget.take()?;
            let prefix = prefix_of(&m);
            out.push(RunRecord::from_outcome(prefix, m.into_outcome(status)));
        }
        Poll::NeedOpcode => {
            for op in &Opcode::ALL[..7] {
                let mut child = m.clone();
                child.supply(*op);
                descend(child, out, budget)?;
            }
            m.supply(Opcode::ALL[7]);
            descend(m, out, budget)?;
        }
    }
    Ok(())
}

/// Resolves the first `levels` opcodes; returns finished leaves and the
/// machines still waiting at the split frontier, both in canonical order.
fn split<'c>(
    root: Machine<'c>,
    levels: usize,
    leaves: &mut Vec<RunRecord>,
    frontier: &mut Vec<Machine<'c>>,
    budget: &Budget<'_>,
) -> Result<()> {
    let mut m = root;
    if m.opcodes().len() >= levels {
        frontier.push(m);
        return Ok(());
    }
    match m.poll() {
        Poll::Finished(status) => {
            budget.take()?;
            let prefix = prefix_of(&m);
            leaves.push(RunRecord::from_outcome(prefix, m.into_outcome(status)));
        }
        Poll::NeedOpcode => {
            for op in Opcode::ALL {
                let mut child = m.clone();
                child.supply(op);
                split(child, levels, leaves, frontier, budget)?;
            }
        }
    }
    Ok(())
}

/// Explores the execution tree with default options.
pub fn explore(config: &MachineConfig) -> Result<RunSet> {
    explore_with(config, &ExploreOptions::default())
}

/// Explores the execution tree, sharing machine state along each path and
/// forking at every demanded opcode. Subtrees below a fixed-length opcode
/// prefix are explored independently, so the result does not depend on
/// `workers`.
pub fn explore_with(config: &MachineConfig, opts: &ExploreOptions) -> Result<RunSet> {
    let used = AtomicUsize::new(0);
    let budget = Budget {
        used: &used,
        limit: opts.max_records,
    };
    let mut records = Vec::new();
    let mut frontier = Vec::new();
    split(
        Machine::new(config),
        opts.split_opcodes,
        &mut records,
        &mut frontier,
        &budget,
    )?;

    let subtree = |m: Machine<'_>| -> Result<Vec<RunRecord>> {
        let mut out = Vec::new();
        descend(m, &mut out, &budget)?;
        Ok(out)
    };

    let parts: Vec<Vec<RunRecord>> = if opts.workers <= 1 {
        frontier.into_iter().map(subtree).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
        pool.install(|| frontier.into_par_iter().map(subtree).collect::<Result<_>>())?
    };
    records.extend(parts.into_iter().flatten());
    Ok(RunSet::new(config.clone(), records))
}

/// Independent reference enumerator: runs every program of length
/// `depth_cap` from scratch and keeps one record per consumed prefix.
pub fn explore_naive(config: &MachineConfig) -> Result<RunSet> {
    explore_naive_with(config, ExploreOptions::default().max_records)
}

pub fn explore_naive_with(config: &MachineConfig, max_records: usize) -> Result<RunSet> {
    let depth = config.depth_cap();
    let mut seen: BTreeMap<Bits, RunRecord> = BTreeMap::new();
    for value in 0..(1u64 << depth) {
        let program = Bits::from_uint(value, depth);
        let outcome = run_fixed(config, &program);
        let prefix = program.prefix(outcome.consumed_bits);
        if seen.contains_key(&prefix) {
            continue;
        }
        if seen.len() >= max_records {
            return Err(Error::RecordCeiling { limit: max_records });
        }
        seen.insert(prefix.clone(), RunRecord::from_outcome(prefix, outcome));
    }
    Ok(RunSet::new(config.clone(), seen.into_values().collect()))
}
