//! Spatial accelerator model: storage hierarchy, PE array, and the
//! style-dependent memory-to-PE connectivity.
//!
//! Two styles are modeled. An NVDLA-like machine has a per-PE scratchpad (L0)
//! and a single-bank global buffer (L1) under DRAM; the buffer feeds the whole
//! PE array. An Eyeriss-like machine adds a banked level between scratchpad
//! and global buffer: L1 holds one bank per PE column, bank k feeding the PEs
//! of column k.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mappers::Dataflow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchStyle {
    NvdlaLike,
    EyerissLike,
}

impl ArchStyle {
    pub fn label(self) -> &'static str {
        match self {
            ArchStyle::NvdlaLike => "nvdla_like",
            ArchStyle::EyerissLike => "eyeriss_like",
        }
    }
}

/// One level of the storage hierarchy. Bounded levels have a capacity of
/// `depth * width` bits per bank; the single unbounded level models DRAM and
/// carries only a width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryLevel {
    pub name: String,
    #[serde(default)]
    pub depth: u64,
    pub width: u64,
    #[serde(default = "one")]
    pub banks: u64,
    pub energy_per_access: f64,
    #[serde(default)]
    pub unbounded: bool,
}

fn one() -> u64 {
    1
}

/// Per-bank capacity of a level, or the unbounded signal for DRAM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Capacity {
    Words(u64),
    Unbounded,
}

impl Capacity {
    pub fn words(self) -> Option<u64> {
        match self {
            Capacity::Words(w) => Some(w),
            Capacity::Unbounded => None,
        }
    }
}

impl MemoryLevel {
    /// Words one bank can hold: floor(depth * width / word_bits).
    pub fn capacity_words(&self, word_bits: u64) -> Capacity {
        if self.unbounded {
            Capacity::Unbounded
        } else {
            Capacity::Words(self.depth * self.width / word_bits)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeArray {
    pub m: u64,
    pub n: u64,
}

impl PeArray {
    pub fn total(&self) -> u64 {
        self.m * self.n
    }
}

/// How much of the PE-array fan-out one bank instance of a level serves.
/// Tile footprints and traffic are accounted per instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialScope {
    /// One bank per PE (L0 scratchpads).
    PerPe,
    /// One bank per PE column; aggregates the row (y) direction.
    Column,
    /// A single instance serving the whole array.
    Full,
}

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("failed to parse architecture file: {0}")]
    Parse(String),
    #[error("architecture '{0}' not found")]
    UnknownArch(String),
    #[error("level index {0} out of range")]
    LevelOutOfRange(usize),
    #[error("bank index {bank} out of range at level {level}")]
    BankOutOfRange { level: usize, bank: u64 },
    #[error("invalid architecture spec: {0}")]
    Invalid(String),
}

/// A full accelerator description. Immutable after validation; all cost-model
/// queries are pure functions over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorSpec {
    #[serde(default)]
    pub name: String,
    pub style: ArchStyle,
    pub word_bits: u64,
    pub mac_energy: f64,
    /// Dataflow this machine natively corresponds to; used by the compare
    /// experiment to pick the search baseline. Defaults by style.
    #[serde(default)]
    pub native_dataflow: Option<Dataflow>,
    pub pe: PeArray,
    /// Innermost (L0) first, outermost (DRAM) last.
    pub levels: Vec<MemoryLevel>,
}

impl AcceleratorSpec {
    pub fn dram_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, index: usize) -> Result<&MemoryLevel, ArchError> {
        self.levels.get(index).ok_or(ArchError::LevelOutOfRange(index))
    }

    /// The fan-out scope served by one bank of `level_index`.
    pub fn scope(&self, level_index: usize) -> SpatialScope {
        match (self.style, level_index) {
            (_, 0) => SpatialScope::PerPe,
            (ArchStyle::EyerissLike, 1) => SpatialScope::Column,
            _ => SpatialScope::Full,
        }
    }

    pub fn dataflow(&self) -> Dataflow {
        self.native_dataflow.unwrap_or(match self.style {
            ArchStyle::NvdlaLike => Dataflow::Ws,
            ArchStyle::EyerissLike => Dataflow::Rs,
        })
    }

    /// PE coordinates (row, col) fed by `bank_index` of `level_index`.
    pub fn fed_pes(&self, level_index: usize, bank_index: u64) -> Result<Vec<(u64, u64)>, ArchError> {
        let level = self.level(level_index)?;
        if bank_index >= level.banks {
            return Err(ArchError::BankOutOfRange {
                level: level_index,
                bank: bank_index,
            });
        }
        let pes = match self.scope(level_index) {
            SpatialScope::PerPe => vec![(bank_index / self.pe.n, bank_index % self.pe.n)],
            SpatialScope::Column => (0..self.pe.m).map(|i| (i, bank_index)).collect(),
            SpatialScope::Full => (0..self.pe.m)
                .flat_map(|i| (0..self.pe.n).map(move |j| (i, j)))
                .collect(),
        };
        Ok(pes)
    }

    /// All invariant violations, empty when the spec is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.pe.m == 0 || self.pe.n == 0 {
            errs.push("PE array dimensions must be >= 1".to_string());
        }
        if self.word_bits == 0 {
            errs.push("word_bits must be >= 1".to_string());
        }
        if self.mac_energy < 0.0 {
            errs.push("mac_energy must be non-negative".to_string());
        }
        let unbounded: Vec<usize> = self
            .levels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.unbounded)
            .map(|(i, _)| i)
            .collect();
        if unbounded.len() != 1 {
            errs.push(format!(
                "exactly one unbounded level required, found {}",
                unbounded.len()
            ));
        } else if unbounded[0] != self.levels.len() - 1 {
            errs.push("the unbounded level must be the outermost".to_string());
        }
        for (i, level) in self.levels.iter().enumerate() {
            if level.banks == 0 {
                errs.push(format!("level {} ({}): banks must be >= 1", i, level.name));
            }
            if level.width == 0 {
                errs.push(format!("level {} ({}): width must be >= 1", i, level.name));
            }
            if !level.unbounded && level.depth == 0 {
                errs.push(format!(
                    "level {} ({}): bounded level needs depth >= 1",
                    i, level.name
                ));
            }
            if level.energy_per_access < 0.0 {
                errs.push(format!(
                    "level {} ({}): energy_per_access must be non-negative",
                    i, level.name
                ));
            }
        }
        let on_chip = self.levels.len().saturating_sub(1);
        match self.style {
            ArchStyle::NvdlaLike => {
                if on_chip != 2 {
                    errs.push(format!(
                        "nvdla_like requires 2 on-chip levels below DRAM, found {on_chip}"
                    ));
                }
                if let Some(l1) = self.levels.get(1) {
                    if !l1.unbounded && l1.banks != 1 {
                        errs.push(format!(
                            "nvdla_like L1 must be a single bank, found {}",
                            l1.banks
                        ));
                    }
                }
            }
            ArchStyle::EyerissLike => {
                if on_chip != 3 {
                    errs.push(format!(
                        "eyeriss_like requires 3 on-chip levels below DRAM, found {on_chip}"
                    ));
                }
                if let Some(l1) = self.levels.get(1) {
                    if !l1.unbounded && l1.banks != self.pe.n {
                        errs.push(format!(
                            "eyeriss_like L1 needs one bank per PE column ({}), found {}",
                            self.pe.n, l1.banks
                        ));
                    }
                }
                if let Some(l2) = self.levels.get(2) {
                    if !l2.unbounded && l2.banks != 1 {
                        errs.push(format!(
                            "eyeriss_like L2 must be a single bank, found {}",
                            l2.banks
                        ));
                    }
                }
            }
        }
        if let Some(l0) = self.levels.first() {
            if !l0.unbounded && l0.banks != self.pe.total() {
                errs.push(format!(
                    "L0 needs one bank per PE ({}), found {}",
                    self.pe.total(),
                    l0.banks
                ));
            }
        }
        errs
    }

    pub fn checked(self) -> Result<AcceleratorSpec, ArchError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ArchError::Invalid(errs.join("; ")))
        }
    }
}

/// Parse an architecture spec file (key-value text, TOML syntax).
pub fn parse_arch(text: &str) -> Result<AcceleratorSpec, ArchError> {
    let spec: AcceleratorSpec =
        toml::from_str(text).map_err(|e| ArchError::Parse(e.to_string()))?;
    spec.checked()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn capacity_words_examples() {
        let glb = MemoryLevel {
            name: "GLB".into(),
            depth: 16384,
            width: 64,
            banks: 1,
            energy_per_access: 6.0,
            unbounded: false,
        };
        assert_eq!(glb.capacity_words(16), Capacity::Words(65_536));

        let spad = MemoryLevel {
            name: "L0".into(),
            depth: 16,
            width: 16,
            banks: 168,
            energy_per_access: 1.0,
            unbounded: false,
        };
        assert_eq!(spad.capacity_words(16), Capacity::Words(16));

        let tiny = MemoryLevel {
            name: "t".into(),
            depth: 1,
            width: 16,
            banks: 1,
            energy_per_access: 1.0,
            unbounded: false,
        };
        assert_eq!(tiny.capacity_words(16), Capacity::Words(1));

        let dram = MemoryLevel {
            name: "DRAM".into(),
            depth: 0,
            width: 64,
            banks: 1,
            energy_per_access: 200.0,
            unbounded: true,
        };
        assert_eq!(dram.capacity_words(16), Capacity::Unbounded);
    }

    #[test]
    fn capacity_monotone_in_depth_and_width() {
        let mk = |depth, width| MemoryLevel {
            name: "x".into(),
            depth,
            width,
            banks: 1,
            energy_per_access: 1.0,
            unbounded: false,
        };
        let base = mk(64, 16).capacity_words(16).words().unwrap();
        assert!(mk(128, 16).capacity_words(16).words().unwrap() >= base);
        assert!(mk(64, 32).capacity_words(16).words().unwrap() >= base);
    }

    #[test]
    fn fed_pes_eyeriss_column() {
        let spec = catalog::bundled_arch("eyeriss").unwrap();
        let fed = spec.fed_pes(1, 13).unwrap();
        assert_eq!(fed.len(), 12);
        assert!(fed.iter().all(|&(_, j)| j == 13));
        // L0 bank 0 is the private scratchpad of PE (0,0).
        assert_eq!(spec.fed_pes(0, 0).unwrap(), vec![(0, 0)]);
        assert!(spec.fed_pes(1, 14).is_err());
    }

    #[test]
    fn fed_pes_nvdla_broadcast() {
        let spec = catalog::bundled_arch("nvdla").unwrap();
        let fed = spec.fed_pes(1, 0).unwrap();
        assert_eq!(fed.len() as u64, spec.pe.total());
    }

    #[test]
    fn fed_union_covers_array_and_eyeriss_banks_disjoint() {
        for name in ["eyeriss", "nvdla", "shidiannao"] {
            let spec = catalog::bundled_arch(name).unwrap();
            for (li, level) in spec.levels.iter().enumerate() {
                let mut seen = std::collections::BTreeSet::new();
                let mut total = 0usize;
                for b in 0..level.banks {
                    let fed = spec.fed_pes(li, b).unwrap();
                    total += fed.len();
                    seen.extend(fed);
                }
                assert_eq!(seen.len() as u64, spec.pe.total(), "{name} level {li}");
                if spec.style == ArchStyle::EyerissLike && li == 1 {
                    assert_eq!(total, seen.len(), "banks must be pairwise disjoint");
                }
            }
        }
    }

    #[test]
    fn bundled_specs_validate_clean() {
        for name in ["eyeriss", "nvdla", "shidiannao"] {
            let spec = catalog::bundled_arch(name).unwrap();
            assert!(spec.validate().is_empty(), "{name}");
        }
    }

    #[test]
    fn style_violations_reported() {
        let mut spec = catalog::bundled_arch("eyeriss").unwrap();
        spec.levels[1].banks = 3;
        assert!(spec
            .validate()
            .iter()
            .any(|e| e.contains("one bank per PE column")));

        let mut spec = catalog::bundled_arch("nvdla").unwrap();
        spec.levels[0].unbounded = true;
        assert!(spec
            .validate()
            .iter()
            .any(|e| e.contains("exactly one unbounded")));
    }
}
