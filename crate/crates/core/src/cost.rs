//! Analytical access counting, energy and latency for a (layer, spec,
//! mapping) triple.
//!
//! Normative data-movement semantics (the loop-nest interpreter in
//! [`crate::oracle`] implements the same rules independently and must agree
//! exactly):
//!
//! * The resident tile at level i changes when a temporal loop at a level
//!   above i steps a dim the tensor depends on; the tile is then refetched
//!   from level i+1. Loops a tensor is invariant to provide stationary reuse.
//! * Every fetch transfers the full clamped tile, halo overlap included.
//! * Output tiles are read on every fetch and written back on every
//!   eviction, so partial sums crossing a boundary cost a read and a write.
//! * Transfers are counted per receiving bank instance; multicast is not
//!   collapsed.
//!
//! `AccessCounts` is keyed by the upper level of each boundary: entry
//! (i, tensor) holds words read from level i downward and words written up
//! into level i, for i in 1..=DRAM.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::arch::{AcceleratorSpec, SpatialScope};
use crate::mapping::{Mapping, MappingViolation};
use crate::workload::{ConvLayer, LoopDim, TensorId, WorkloadError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub reads: u64,
    pub writes: u64,
}

/// Word transfers per (boundary, tensor); see module docs for the keying.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessCounts {
    table: BTreeMap<(usize, TensorId), Transfer>,
}

impl AccessCounts {
    pub fn new() -> AccessCounts {
        AccessCounts::default()
    }

    pub fn add_reads(&mut self, upper_level: usize, tensor: TensorId, words: u64) {
        self.table.entry((upper_level, tensor)).or_default().reads += words;
    }

    pub fn add_writes(&mut self, upper_level: usize, tensor: TensorId, words: u64) {
        self.table.entry((upper_level, tensor)).or_default().writes += words;
    }

    pub fn get(&self, upper_level: usize, tensor: TensorId) -> Transfer {
        self.table
            .get(&(upper_level, tensor))
            .copied()
            .unwrap_or_default()
    }

    /// Total (reads, writes) crossing the boundary below `upper_level`.
    pub fn boundary_total(&self, upper_level: usize) -> (u64, u64) {
        TensorId::ALL.iter().fold((0, 0), |(r, w), &t| {
            let tr = self.get(upper_level, t);
            (r + tr.reads, w + tr.writes)
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, TensorId, Transfer)> + '_ {
        self.table.iter().map(|(&(l, t), &tr)| (l, t, tr))
    }
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("mapping fails validation: {}", format_violations(.0))]
    InvalidMapping(Vec<MappingViolation>),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

fn format_violations(violations: &[MappingViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Per-dim factor ladder, innermost first: L0, spatial, L1.., DRAM.
struct DimLadder {
    bound: u64,
    l0: u64,
    spatial: u64,
    /// Factors at levels 1..=DRAM.
    upper: Vec<u64>,
}

impl DimLadder {
    /// Chunk size covered below the temporal loops of `level` (>= 1):
    /// l0 * spatial * t_1 ... t_{level-1}.
    fn chunk_below_level(&self, level: usize) -> u64 {
        let mut g = self.l0.saturating_mul(self.spatial);
        for j in 1..level {
            g = g.saturating_mul(self.upper[j - 1]);
        }
        g
    }

    fn n_chunks(&self, granularity: u64) -> u64 {
        self.bound.div_ceil(granularity)
    }

    /// Extent of the final (possibly partial) chunk at `granularity`.
    fn last_extent(&self, granularity: u64) -> u64 {
        self.bound - (self.n_chunks(granularity) - 1).saturating_mul(granularity)
    }
}

fn ladders(layer: &ConvLayer, spec: &AcceleratorSpec, mapping: &Mapping) -> [DimLadder; 7] {
    LoopDim::ALL.map(|dim| DimLadder {
        bound: layer.bound(dim),
        l0: mapping.levels[0].factor(dim),
        spatial: mapping.spatial.factor(dim),
        upper: (1..spec.levels.len())
            .map(|j| mapping.levels[j].factor(dim))
            .collect(),
    })
}

#[derive(Clone, Copy)]
enum LoopKind {
    /// Sequential loop at a memory level.
    Temporal,
    /// Parallel fan-out across bank instances; digits never merge.
    Instance,
}

#[derive(Clone, Copy)]
struct LoopSpec {
    dim: LoopDim,
    kind: LoopKind,
    /// Trip count within a full parent chunk.
    full_trip: u64,
    /// Trip count within the final partial parent chunk.
    boundary_trip: u64,
}

/// Words moved, first-residency words, and whether the whole subtree keeps a
/// constant tile tuple.
#[derive(Clone, Copy)]
struct RunSum {
    words: u64,
    first: u64,
    constant: bool,
}

struct Solver<'a> {
    loops: Vec<LoopSpec>,
    /// Per-dim span extent at the fetch granularity: (full, last).
    span: [(u64, u64); 7],
    /// Dims enumerated as instance shares: the per-instance chunk (l0).
    share_chunk: [Option<u64>; 7],
    tensor: TensorId,
    relevant: [bool; 7],
    /// Keyed on (loop index, flags); sound because instance loops sit after
    /// every temporal loop, so `inst` is all zeros wherever we memoize.
    memo: Vec<Vec<Option<RunSum>>>,
}

impl Solver {
    fn solve(&mut self) -> u64 {
        self.run(0, 0x7f, [0; 7]).words
    }

    /// `flags` bit d set while every digit of dim d chosen so far sits on the
    /// final (boundary) chunk of its granularity; `inst` holds instance
    /// digits already fixed.
    fn run(&mut self, idx: usize, flags: u8, inst: [u64; 7]) -> RunSum {
        if idx == self.loops.len() {
            let fp = self.leaf_footprint(flags, inst);
            return RunSum {
                words: fp,
                first: fp,
                constant: true,
            };
        }
        let memoizable = matches!(self.loops[idx].kind, LoopKind::Temporal);
        if memoizable {
            if let Some(hit) = self.memo[idx][flags as usize] {
                return hit;
            }
        }
        let spec = self.loops[idx];
        let d = spec.dim.index();
        let on_boundary = flags & (1 << d) != 0;
        let trip = if on_boundary {
            spec.boundary_trip
        } else {
            spec.full_trip
        };
        let result = match spec.kind {
            LoopKind::Instance => {
                let mut words = 0u64;
                let mut first = 0u64;
                let mut constant = true;
                for k in 0..trip {
                    let mut child_flags = flags;
                    if k + 1 != trip || !on_boundary {
                        child_flags &= !(1 << d);
                    }
                    let mut child_inst = inst;
                    child_inst[d] = k;
                    let sub = self.run(idx + 1, child_flags, child_inst);
                    words += sub.words;
                    first += sub.first;
                    constant &= sub.constant;
                }
                RunSum {
                    words,
                    first,
                    constant,
                }
            }
            LoopKind::Temporal => {
                if trip == 1 {
                    self.run(idx + 1, flags, inst)
                } else {
                    let lo = self.run(idx + 1, flags & !(1 << d), inst);
                    let hi = self.run(idx + 1, flags, inst);
                    if self.relevant[d] {
                        RunSum {
                            words: (trip - 1) * lo.words + hi.words,
                            first: lo.first,
                            constant: false,
                        }
                    } else {
                        // Constant lo-reps merge into their successor: the
                        // successor's first residency is not refetched.
                        let merged = if lo.constant {
                            (trip - 2) * lo.first + hi.first
                        } else {
                            0
                        };
                        RunSum {
                            words: (trip - 1) * lo.words + hi.words - merged,
                            first: lo.first,
                            constant: lo.constant && hi.constant,
                        }
                    }
                }
            }
        };
        if memoizable {
            self.memo[idx][flags as usize] = Some(result);
        }
        result
    }

    fn leaf_footprint(&self, flags: u8, inst: [u64; 7]) -> u64 {
        let extent = |dim: LoopDim| -> u64 {
            let d = dim.index();
            let span = if flags & (1 << d) != 0 {
                self.span[d].1
            } else {
                self.span[d].0
            };
            match self.share_chunk[d] {
                Some(chunk) => span.saturating_sub(inst[d] * chunk).min(chunk),
                None => span,
            }
        };
        match self.tensor {
            TensorId::Weight => {
                extent(LoopDim::M) * extent(LoopDim::C) * extent(LoopDim::R) * extent(LoopDim::S)
            }
            TensorId::Output => {
                extent(LoopDim::N) * extent(LoopDim::M) * extent(LoopDim::P) * extent(LoopDim::Q)
            }
            TensorId::Input => {
                let h = extent(LoopDim::P) + extent(LoopDim::R) - 1;
                let w = extent(LoopDim::Q) + extent(LoopDim::S) - 1;
                extent(LoopDim::N) * extent(LoopDim::C) * h * w
            }
        }
    }
}

/// Closed-form access counts; must equal [`crate::oracle::interpret`] exactly
/// wherever the oracle's size guard admits the workload.
pub fn analytic_accesses(
    layer: &ConvLayer,
    spec: &AcceleratorSpec,
    mapping: &Mapping,
) -> Result<AccessCounts, CostError> {
    let violations = mapping.validate(layer, spec);
    if !violations.is_empty() {
        return Err(CostError::InvalidMapping(violations));
    }
    let ladders = ladders(layer, spec, mapping);
    let n_levels = spec.levels.len();
    let mut counts = AccessCounts::new();

    for boundary in 1..n_levels {
        let lower = boundary - 1;
        let scope = spec.scope(lower);
        // Spatial axes split into separate instances below this boundary.
        let inst_dims: Vec<LoopDim> = match scope {
            SpatialScope::PerPe => vec![mapping.spatial.x_dim, mapping.spatial.y_dim],
            SpatialScope::Column => vec![mapping.spatial.x_dim],
            SpatialScope::Full => vec![],
        };

        let mut loops = Vec::new();
        for level in (boundary..n_levels).rev() {
            for &dim in mapping.levels[level].order().iter().rev() {
                let lad = &ladders[dim.index()];
                let below = lad.chunk_below_level(level);
                let factor = mapping.levels[level].factor(dim);
                let self_chunk = below.saturating_mul(factor);
                loops.push(LoopSpec {
                    dim,
                    kind: LoopKind::Temporal,
                    full_trip: factor,
                    boundary_trip: lad.last_extent(self_chunk).div_ceil(below),
                });
            }
        }
        let mut share_chunk = [None; 7];
        for &dim in &inst_dims {
            let lad = &ladders[dim.index()];
            if lad.spatial == 1 {
                continue;
            }
            let span = lad.chunk_below_level(boundary);
            share_chunk[dim.index()] = Some(lad.l0);
            loops.push(LoopSpec {
                dim,
                kind: LoopKind::Instance,
                full_trip: span.min(lad.bound).div_ceil(lad.l0).min(lad.spatial),
                boundary_trip: lad.last_extent(span).div_ceil(lad.l0).min(lad.spatial),
            });
        }

        let span = LoopDim::ALL.map(|dim| {
            let lad = &ladders[dim.index()];
            let g = lad.chunk_below_level(boundary);
            (g.min(lad.bound), lad.last_extent(g))
        });

        for tensor in TensorId::ALL {
            let mut solver = Solver {
                loops: loops.clone(),
                span,
                share_chunk,
                tensor,
                relevant: LoopDim::ALL.map(|d| tensor.depends_on(d)),
                memo: vec![vec![None; 128]; loops.len()],
            };
            let words = solver.solve();
            counts.add_reads(boundary, tensor, words);
            if tensor == TensorId::Output {
                counts.add_writes(boundary, tensor, words);
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelEnergy {
    pub level: String,
    pub accesses: u64,
    pub energy: f64,
}

/// Full cost evaluation: access counts, per-level energy, a bottleneck cycle
/// estimate and the nominal PE utilization.
#[derive(Clone, Debug)]
pub struct CostReport {
    pub accesses: AccessCounts,
    pub energy_by_level: Vec<LevelEnergy>,
    pub mac_energy_total: f64,
    pub total_energy: f64,
    pub cycles: u64,
    pub utilization: f64,
}

/// Evaluate the analytical model for one mapping.
///
/// A word crossing a boundary is charged at both storage levels it touches,
/// so level i accumulates its own boundary traffic plus fills and drains from
/// the boundary above. Latency is a bandwidth bottleneck estimate:
/// max over compute and per-level transfer cycles.
pub fn cost(
    layer: &ConvLayer,
    spec: &AcceleratorSpec,
    mapping: &Mapping,
) -> Result<CostReport, CostError> {
    let accesses = analytic_accesses(layer, spec, mapping)?;
    let mac_count = layer.mac_count()?;
    let n_levels = spec.levels.len();

    let boundary_words: Vec<u64> = (0..=n_levels)
        .map(|b| {
            if b == 0 || b >= n_levels {
                0
            } else {
                let (r, w) = accesses.boundary_total(b);
                r + w
            }
        })
        .collect();

    let mut energy_by_level = Vec::new();
    let mut total_energy = 0.0;
    for (i, level) in spec.levels.iter().enumerate() {
        // Traffic through level i: boundary below it plus boundary above it.
        let accesses_i = boundary_words[i] + boundary_words[i + 1];
        let energy = accesses_i as f64 * level.energy_per_access;
        total_energy += energy;
        energy_by_level.push(LevelEnergy {
            level: level.name.clone(),
            accesses: accesses_i,
            energy,
        });
    }
    let mac_energy_total = mac_count as f64 * spec.mac_energy;
    total_energy += mac_energy_total;

    let active_pes = mapping.spatial.x_factor * mapping.spatial.y_factor;
    let mut cycles = mac_count.div_ceil(active_pes);
    for (i, level) in spec.levels.iter().enumerate() {
        let words_per_cycle = (level.banks * level.width / spec.word_bits).max(1);
        let accesses_i = boundary_words[i] + boundary_words[i + 1];
        cycles = cycles.max(accesses_i.div_ceil(words_per_cycle));
    }

    Ok(CostReport {
        accesses,
        energy_by_level,
        mac_energy_total,
        total_energy,
        cycles,
        utilization: mapping.utilization(spec),
    })
}
