//! Reference loop-nest interpreter: walks the mapped loop nest step by step,
//! tracking the tile resident at every (boundary, bank instance) and counting
//! each word moved. It implements the same movement rules as the closed-form
//! model in [`crate::cost`] by direct simulation, with its own position
//! arithmetic, and serves as the correctness oracle for it.
//!
//! Guarded to workloads with at most [`ORACLE_MAC_LIMIT`] MACs.

use std::collections::HashMap;

use thiserror::Error;

use crate::arch::{AcceleratorSpec, SpatialScope};
use crate::cost::AccessCounts;
use crate::mapping::{Mapping, MappingViolation};
use crate::workload::{ConvLayer, LoopDim, TensorId, WorkloadError};

pub const ORACLE_MAC_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("workload too large for oracle: {mac_count} MACs exceeds {limit}")]
    TooLarge { mac_count: u64, limit: u64 },
    #[error("mapping fails validation ({0} violations)")]
    InvalidMapping(usize),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

impl From<Vec<MappingViolation>> for OracleError {
    fn from(v: Vec<MappingViolation>) -> OracleError {
        OracleError::InvalidMapping(v.len())
    }
}

/// One element window per dim: start offset and extent, clamped to the layer.
#[derive(Clone, Copy)]
struct Window {
    start: u64,
    extent: u64,
}

enum Item {
    /// Temporal loop stepping `dim` in strides of `chunk` elements.
    Loop { dim: LoopDim, chunk: u64 },
    /// Residency point of level `upper - 1`: tiles are (re)fetched across
    /// the boundary below level `upper` here.
    Marker { upper: usize },
}

struct Interp<'a> {
    items: Vec<Item>,
    windows: [Window; 7],
    /// Per-dim element stride between adjacent bank instances (the per-PE
    /// tile chunk of the spatially assigned dims).
    instance_chunk: [u64; 7],
    /// Instance dims enumerated at each marker, by scope of the lower level.
    marker_instances: Vec<Vec<LoopDim>>,
    /// (upper level, first instance digit, second instance digit, tensor) ->
    /// (tile signature, tile footprint).
    resident: HashMap<(usize, u64, u64, TensorId), (Vec<u64>, u64)>,
    counts: AccessCounts,
}

impl Interp {
    fn walk(&mut self, idx: usize) {
        if idx == self.items.len() {
            return;
        }
        match self.items[idx] {
            Item::Loop { dim, chunk } => {
                let parent = self.windows[dim.index()];
                let trips = parent.extent.div_ceil(chunk);
                for step in 0..trips {
                    let offset = step * chunk;
                    self.windows[dim.index()] = Window {
                        start: parent.start + offset,
                        extent: chunk.min(parent.extent - offset),
                    };
                    self.walk(idx + 1);
                }
                self.windows[dim.index()] = parent;
            }
            Item::Marker { upper } => {
                self.touch(upper);
                self.walk(idx + 1);
            }
        }
    }

    /// Visit every active bank instance of level `upper - 1` and fetch any
    /// tile whose identity changed since the instance's last visit.
    fn touch(&mut self, upper: usize) {
        let inst_dims = self.marker_instances[upper].clone();
        let actives: Vec<u64> = inst_dims
            .iter()
            .map(|&d| {
                self.windows[d.index()]
                    .extent
                    .div_ceil(self.instance_chunk[d.index()])
            })
            .collect();

        let mut digits = vec![0u64; inst_dims.len()];
        'instances: loop {
            let mut shares = self.windows;
            for (&dim, &k) in inst_dims.iter().zip(&digits) {
                let w = shares[dim.index()];
                let chunk = self.instance_chunk[dim.index()];
                let offset = k * chunk;
                shares[dim.index()] = Window {
                    start: w.start + offset,
                    extent: chunk.min(w.extent - offset),
                };
            }
            let key = (
                digits.first().copied().unwrap_or(0),
                digits.get(1).copied().unwrap_or(0),
            );
            for tensor in TensorId::ALL {
                let sig: Vec<u64> = tensor
                    .dims()
                    .iter()
                    .map(|d| shares[d.index()].start)
                    .collect();
                let fp = footprint(&shares, tensor);
                match self.resident.entry((upper, key.0, key.1, tensor)) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        if e.get().0 != sig {
                            let old_fp = e.get().1;
                            self.counts.add_reads(upper, tensor, fp);
                            if tensor == TensorId::Output {
                                self.counts.add_writes(upper, tensor, old_fp);
                            }
                            e.insert((sig, fp));
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        self.counts.add_reads(upper, tensor, fp);
                        e.insert((sig, fp));
                    }
                }
            }
            for pos in (0..inst_dims.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < actives[pos] {
                    continue 'instances;
                }
                digits[pos] = 0;
            }
            return;
        }
    }

    /// Write every still-resident output tile back up across its boundary.
    fn flush_outputs(&mut self) {
        let keys: Vec<_> = self
            .resident
            .iter()
            .filter(|((_, _, _, t), _)| *t == TensorId::Output)
            .map(|(&k, v)| (k, v.1))
            .collect();
        for ((upper, _, _, _), fp) in keys {
            self.counts.add_writes(upper, TensorId::Output, fp);
        }
    }
}

fn footprint(shares: &[Window; 7], tensor: TensorId) -> u64 {
    let e = |d: LoopDim| shares[d.index()].extent;
    match tensor {
        TensorId::Weight => e(LoopDim::M) * e(LoopDim::C) * e(LoopDim::R) * e(LoopDim::S),
        TensorId::Output => e(LoopDim::N) * e(LoopDim::M) * e(LoopDim::P) * e(LoopDim::Q),
        TensorId::Input => {
            let h = e(LoopDim::P) + e(LoopDim::R) - 1;
            let w = e(LoopDim::Q) + e(LoopDim::S) - 1;
            e(LoopDim::N) * e(LoopDim::C) * h * w
        }
    }
}

/// Simulate the mapped loop nest and count every word moved per
/// (boundary, tensor).
pub fn interpret(
    layer: &ConvLayer,
    spec: &AcceleratorSpec,
    mapping: &Mapping,
) -> Result<AccessCounts, OracleError> {
    let mac_count = layer.mac_count()?;
    if mac_count > ORACLE_MAC_LIMIT {
        return Err(OracleError::TooLarge {
            mac_count,
            limit: ORACLE_MAC_LIMIT,
        });
    }
    let violations = mapping.validate(layer, spec);
    if !violations.is_empty() {
        return Err(violations.into());
    }

    let n_levels = spec.levels.len();

    // Element chunk below the temporal loops of each level, per dim:
    // L0 factor, times spatial, times the factors of the levels between.
    let chunk_below = |dim: LoopDim, level: usize| -> u64 {
        let mut g = mapping.levels[0].factor(dim) * mapping.spatial.factor(dim);
        for j in 1..level {
            g *= mapping.levels[j].factor(dim);
        }
        g
    };

    let mut items = Vec::new();
    for level in (1..n_levels).rev() {
        for &dim in mapping.levels[level].order().iter().rev() {
            items.push(Item::Loop {
                dim,
                chunk: chunk_below(dim, level),
            });
        }
        items.push(Item::Marker { upper: level });
    }

    let mut marker_instances: Vec<Vec<LoopDim>> = vec![Vec::new(); n_levels];
    for upper in 1..n_levels {
        let dims = match spec.scope(upper - 1) {
            SpatialScope::PerPe => vec![mapping.spatial.x_dim, mapping.spatial.y_dim],
            SpatialScope::Column => vec![mapping.spatial.x_dim],
            SpatialScope::Full => vec![],
        };
        marker_instances[upper] = dims
            .into_iter()
            .filter(|&d| mapping.spatial.factor(d) > 1)
            .collect();
    }

    let mut interp = Interp {
        items,
        windows: LoopDim::ALL.map(|d| Window {
            start: 0,
            extent: layer.bound(d),
        }),
        instance_chunk: LoopDim::ALL.map(|d| mapping.levels[0].factor(d)),
        marker_instances,
        resident: HashMap::new(),
        counts: AccessCounts::new(),
    };
    interp.walk(0);
    interp.flush_outputs();
    Ok(interp.counts)
}
