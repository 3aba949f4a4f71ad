//! Complete mapping representation: per-level tiling factors, per-level loop
//! order, and the spatial assignment across the PE array, plus validation
//! against a layer and an accelerator spec.
//!
//! Factor semantics use minimal covering with ceiling division: the product
//! of a dim's factors (spatial included) must reach the layer bound, and
//! removing the outermost non-unit factor must drop it below. Boundary tiles
//! are clamped during cost interpretation, so bounds need not factor exactly.
//!
//! The per-dim factor ladder orders rungs innermost-first as
//! `[L0, spatial, L1, ..., DRAM]`; a dim assigned to a spatial axis is split
//! across the array directly above its per-PE tile.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use thiserror::Error;

use crate::arch::{AcceleratorSpec, ArchStyle, Capacity, SpatialScope};
use crate::workload::{ConvLayer, LoopDim, TensorId};

/// One dim per PE axis; x runs along columns (n), y along rows (m).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpatialAssignment {
    pub x_dim: LoopDim,
    pub x_factor: u64,
    pub y_dim: LoopDim,
    pub y_factor: u64,
}

impl SpatialAssignment {
    pub fn factor(&self, dim: LoopDim) -> u64 {
        let mut f = 1;
        if dim == self.x_dim {
            f *= self.x_factor;
        }
        if dim == self.y_dim {
            f *= self.y_factor;
        }
        f
    }
}

/// Temporal tiling at one memory level: a factor per dim plus the loop order
/// over the dims actually tiled here (factor > 1), innermost first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LevelTiling {
    factors: BTreeMap<LoopDim, u64>,
    order: Vec<LoopDim>,
}

impl LevelTiling {
    /// Build from `(dim, factor)` pairs in innermost-first order. Factor-1
    /// entries are dropped; they are no-ops for reuse.
    pub fn from_ordered(pairs: &[(LoopDim, u64)]) -> LevelTiling {
        let mut factors = BTreeMap::new();
        let mut order = Vec::new();
        for &(dim, factor) in pairs {
            if factor > 1 {
                factors.insert(dim, factor);
                order.push(dim);
            }
        }
        LevelTiling { factors, order }
    }

    pub fn factor(&self, dim: LoopDim) -> u64 {
        self.factors.get(&dim).copied().unwrap_or(1)
    }

    /// Dims tiled at this level, innermost first.
    pub fn order(&self) -> &[LoopDim] {
        &self.order
    }

    pub fn is_unit(&self) -> bool {
        self.order.is_empty()
    }

    /// Same factors under a caller-supplied order; `order` must hold exactly
    /// the dims with factor > 1.
    pub fn with_order(&self, order: Vec<LoopDim>) -> LevelTiling {
        LevelTiling {
            factors: self.factors.clone(),
            order,
        }
    }
}

/// A full mapping: spatial assignment plus one tiling per memory level,
/// innermost (L0) first, DRAM last. Immutable value; validation and costing
/// are pure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    pub spatial: SpatialAssignment,
    pub levels: Vec<LevelTiling>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingViolation {
    #[error("mapping has {found} levels, architecture has {expected}")]
    LevelCountMismatch { expected: usize, found: usize },
    #[error("level {level}: loop order malformed: {detail}")]
    MalformedOrder { level: usize, detail: String },
    #[error("spatial x and y must use different dims")]
    SpatialDimsEqual,
    #[error("spatial factors must be >= 1")]
    SpatialFactorZero,
    #[error("spatial {axis} factor {factor} exceeds PE axis length {limit}")]
    SpatialExceedsAxis { axis: char, factor: u64, limit: u64 },
    #[error("dim {dim}: factors cover {product}, bound is {bound}")]
    CoverageShort { dim: LoopDim, product: u64, bound: u64 },
    #[error("dim {dim}: covering not minimal (outer factor {outer_factor} removable)")]
    CoverageNotMinimal { dim: LoopDim, outer_factor: u64 },
    #[error("level {level}: tile footprint {needed} words exceeds bank capacity {available}")]
    CapacityExceeded {
        level: usize,
        needed: u64,
        available: u64,
    },
    #[error("eyeriss_like: spatial x dim {dim} may not be tiled at the banked level")]
    ColumnLevelXTiling { dim: LoopDim },
}

impl Mapping {
    /// Product of all factors of `dim`: spatial times every level.
    pub fn total_factor(&self, dim: LoopDim) -> u64 {
        self.levels
            .iter()
            .fold(self.spatial.factor(dim), |acc, l| {
                acc.saturating_mul(l.factor(dim))
            })
    }

    /// Cumulative bound of each dim visible at `level_index`: the per-PE tile
    /// for level 0, and the full-array tile (spatial included) above it.
    pub fn tile_bounds(&self, layer: &ConvLayer, level_index: usize) -> BTreeMap<LoopDim, u64> {
        let mut bounds = BTreeMap::new();
        for dim in LoopDim::ALL {
            let mut product = self.levels[0].factor(dim);
            if level_index >= 1 {
                product = product.saturating_mul(self.spatial.factor(dim));
                for tiling in &self.levels[1..=level_index] {
                    product = product.saturating_mul(tiling.factor(dim));
                }
            }
            bounds.insert(dim, product.min(layer.bound(dim)));
        }
        bounds
    }

    /// Tile seen by one bank instance of `level_index`: per-PE at L0, the
    /// column share at an eyeriss_like banked level (y aggregated, x split
    /// across banks), the full-array tile elsewhere.
    pub fn instance_tile_bounds(
        &self,
        layer: &ConvLayer,
        spec: &AcceleratorSpec,
        level_index: usize,
    ) -> BTreeMap<LoopDim, u64> {
        let scope = spec.scope(level_index);
        let mut bounds = BTreeMap::new();
        for dim in LoopDim::ALL {
            let mut product = self.levels[0].factor(dim);
            match scope {
                SpatialScope::PerPe => {}
                SpatialScope::Column => {
                    if dim == self.spatial.y_dim {
                        product = product.saturating_mul(self.spatial.y_factor);
                    }
                }
                SpatialScope::Full => {
                    product = product.saturating_mul(self.spatial.factor(dim));
                }
            }
            if level_index >= 1 {
                for tiling in &self.levels[1..=level_index] {
                    product = product.saturating_mul(tiling.factor(dim));
                }
            }
            bounds.insert(dim, product.min(layer.bound(dim)));
        }
        bounds
    }

    /// Every violation of structure, coverage, spatial and capacity rules.
    /// An empty result means the mapping is valid for (layer, spec).
    pub fn validate(&self, layer: &ConvLayer, spec: &AcceleratorSpec) -> Vec<MappingViolation> {
        let mut errs = Vec::new();
        if self.levels.len() != spec.levels.len() {
            errs.push(MappingViolation::LevelCountMismatch {
                expected: spec.levels.len(),
                found: self.levels.len(),
            });
            return errs;
        }
        for (li, tiling) in self.levels.iter().enumerate() {
            let mut seen = BTreeMap::new();
            for &dim in tiling.order() {
                if tiling.factor(dim) <= 1 {
                    errs.push(MappingViolation::MalformedOrder {
                        level: li,
                        detail: format!("dim {dim} in order with factor 1"),
                    });
                }
                if seen.insert(dim, ()).is_some() {
                    errs.push(MappingViolation::MalformedOrder {
                        level: li,
                        detail: format!("dim {dim} repeated"),
                    });
                }
            }
            for dim in LoopDim::ALL {
                if tiling.factor(dim) > 1 && !tiling.order().contains(&dim) {
                    errs.push(MappingViolation::MalformedOrder {
                        level: li,
                        detail: format!("dim {dim} tiled but absent from order"),
                    });
                }
            }
        }

        let sp = &self.spatial;
        if sp.x_dim == sp.y_dim {
            errs.push(MappingViolation::SpatialDimsEqual);
        }
        if sp.x_factor == 0 || sp.y_factor == 0 {
            errs.push(MappingViolation::SpatialFactorZero);
        }
        if sp.x_factor > spec.pe.n {
            errs.push(MappingViolation::SpatialExceedsAxis {
                axis: 'x',
                factor: sp.x_factor,
                limit: spec.pe.n,
            });
        }
        if sp.y_factor > spec.pe.m {
            errs.push(MappingViolation::SpatialExceedsAxis {
                axis: 'y',
                factor: sp.y_factor,
                limit: spec.pe.m,
            });
        }
        if spec.style == ArchStyle::EyerissLike
            && self.levels.len() > 1
            && self.levels[1].factor(sp.x_dim) > 1
        {
            // A column-banked level holds one x chunk per bank; tiling the x
            // dim there would scatter a bank's working set across the array.
            errs.push(MappingViolation::ColumnLevelXTiling { dim: sp.x_dim });
        }

        for dim in LoopDim::ALL {
            let bound = layer.bound(dim);
            let product = self.total_factor(dim);
            if product < bound {
                errs.push(MappingViolation::CoverageShort {
                    dim,
                    product,
                    bound,
                });
            } else {
                // Outermost non-unit factor in ladder order DRAM..L1, spatial, L0.
                let mut outer = None;
                for tiling in self.levels[1..].iter().rev() {
                    if tiling.factor(dim) > 1 {
                        outer = Some(tiling.factor(dim));
                        break;
                    }
                }
                if outer.is_none() && sp.factor(dim) > 1 {
                    outer = Some(sp.factor(dim));
                }
                if outer.is_none() && self.levels[0].factor(dim) > 1 {
                    outer = Some(self.levels[0].factor(dim));
                }
                if let Some(f) = outer {
                    if product / f >= bound {
                        errs.push(MappingViolation::CoverageNotMinimal {
                            dim,
                            outer_factor: f,
                        });
                    }
                }
            }
        }

        for (li, level) in spec.levels.iter().enumerate() {
            if let Capacity::Words(cap) = level.capacity_words(spec.word_bits) {
                let bounds = self.instance_tile_bounds(layer, spec, li);
                let needed: u64 = TensorId::ALL
                    .iter()
                    .map(|&t| tile_footprint(layer, &bounds, t))
                    .sum();
                if needed > cap {
                    errs.push(MappingViolation::CapacityExceeded {
                        level: li,
                        needed,
                        available: cap,
                    });
                }
            }
        }
        errs
    }

    /// Active PEs over total PEs.
    pub fn utilization(&self, spec: &AcceleratorSpec) -> f64 {
        (self.spatial.x_factor * self.spatial.y_factor) as f64 / spec.pe.total() as f64
    }

    /// Compact single-line form, for CSV cells and tie-breaking.
    pub fn to_compact_string(&self) -> String {
        self.to_string().replace('\n', "; ")
    }
}

/// Words a tensor tile occupies given per-dim tile bounds. The input couples
/// P with R and Q with S through the sliding window.
pub fn tile_footprint(layer: &ConvLayer, bounds: &BTreeMap<LoopDim, u64>, t: TensorId) -> u64 {
    let b = |dim: LoopDim| bounds.get(&dim).copied().unwrap_or(1);
    debug_assert!(LoopDim::ALL.iter().all(|&d| b(d) <= layer.bound(d)));
    match t {
        TensorId::Weight => b(LoopDim::M) * b(LoopDim::C) * b(LoopDim::R) * b(LoopDim::S),
        TensorId::Output => b(LoopDim::N) * b(LoopDim::M) * b(LoopDim::P) * b(LoopDim::Q),
        TensorId::Input => {
            let h = b(LoopDim::P) + b(LoopDim::R) - 1;
            let w = b(LoopDim::Q) + b(LoopDim::S) - 1;
            b(LoopDim::N) * b(LoopDim::C) * h * w
        }
    }
}

/// Size of the scheduling map-space: (n_loops!)^n_levels.
pub fn mapspace_size(n_loops: u64, n_levels: u64) -> BigUint {
    let mut fact = BigUint::from(1u32);
    for k in 2..=n_loops {
        fact *= k;
    }
    fact.pow(n_levels as u32)
}

/// Joint hardware-and-mapping design-space size: the hardware term
/// (M·P·R)^2 times the scheduling map-space.
pub fn designspace_size(layer: &ConvLayer, n_loops: u64, n_levels: u64) -> BigUint {
    hardware_design_points(layer) * mapspace_size(n_loops, n_levels)
}

/// Hardware configuration count (M·P·R)^2 for one layer.
pub fn hardware_design_points(layer: &ConvLayer) -> BigUint {
    let term = BigUint::from(layer.m) * layer.p * layer.r;
    term.pow(2)
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "spatial_x {}={}",
            self.spatial.x_dim, self.spatial.x_factor
        )?;
        writeln!(
            f,
            "spatial_y {}={}",
            self.spatial.y_dim, self.spatial.y_factor
        )?;
        for (li, tiling) in self.levels.iter().enumerate() {
            write!(f, "L{li}:")?;
            for &dim in tiling.order() {
                write!(f, " {dim}={}", tiling.factor(dim))?;
            }
            if li + 1 < self.levels.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MappingParseError {
    #[error("bad mapping line: {0}")]
    BadLine(String),
    #[error("missing spatial_{0} line")]
    MissingSpatial(char),
    #[error("levels must be L0..Lk in order, got {0}")]
    BadLevelSequence(String),
    #[error("bad dim=factor entry: {0}")]
    BadEntry(String),
}

fn parse_dim_factor(entry: &str) -> Result<(LoopDim, u64), MappingParseError> {
    let (d, v) = entry
        .split_once('=')
        .ok_or_else(|| MappingParseError::BadEntry(entry.to_string()))?;
    let dim =
        LoopDim::parse(d.trim()).ok_or_else(|| MappingParseError::BadEntry(entry.to_string()))?;
    let factor: u64 = v
        .trim()
        .parse()
        .map_err(|_| MappingParseError::BadEntry(entry.to_string()))?;
    Ok((dim, factor))
}

impl FromStr for Mapping {
    type Err = MappingParseError;

    /// Parses the display form; `;` and newlines both separate lines, so the
    /// compact form round-trips too.
    fn from_str(s: &str) -> Result<Mapping, MappingParseError> {
        let mut x: Option<(LoopDim, u64)> = None;
        let mut y: Option<(LoopDim, u64)> = None;
        let mut levels: Vec<LevelTiling> = Vec::new();
        for raw in s.split(['\n', ';']) {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("spatial_x") {
                x = Some(parse_dim_factor(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix("spatial_y") {
                y = Some(parse_dim_factor(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix('L') {
                let (idx, entries) = rest
                    .split_once(':')
                    .ok_or_else(|| MappingParseError::BadLine(line.to_string()))?;
                let idx: usize = idx
                    .trim()
                    .parse()
                    .map_err(|_| MappingParseError::BadLine(line.to_string()))?;
                if idx != levels.len() {
                    return Err(MappingParseError::BadLevelSequence(line.to_string()));
                }
                let mut pairs = Vec::new();
                for entry in entries.split_whitespace() {
                    pairs.push(parse_dim_factor(entry)?);
                }
                levels.push(LevelTiling::from_ordered(&pairs));
            } else {
                return Err(MappingParseError::BadLine(line.to_string()));
            }
        }
        let (x_dim, x_factor) = x.ok_or(MappingParseError::MissingSpatial('x'))?;
        let (y_dim, y_factor) = y.ok_or(MappingParseError::MissingSpatial('y'))?;
        Ok(Mapping {
            spatial: SpatialAssignment {
                x_dim,
                x_factor,
                y_dim,
                y_factor,
            },
            levels,
        })
    }
}
