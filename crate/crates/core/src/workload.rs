//! Convolution layer shapes and derived quantities (MAC counts, tensor sizes,
//! shape categories).
//!
//! A layer is described by the seven independent bounds N, M, C, P, Q, R, S.
//! Input extents are derived for stride-1 valid convolution: H = P + R - 1,
//! W = Q + S - 1. Strided, padded, grouped and depthwise convolutions are out
//! of scope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven independent loop dimensions of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoopDim {
    N,
    M,
    C,
    P,
    Q,
    R,
    S,
}

impl LoopDim {
    /// All dims in canonical declaration order.
    pub const ALL: [LoopDim; 7] = [
        LoopDim::N,
        LoopDim::M,
        LoopDim::C,
        LoopDim::P,
        LoopDim::Q,
        LoopDim::R,
        LoopDim::S,
    ];

    /// Dense index, used for per-dim tables.
    pub fn index(self) -> usize {
        match self {
            LoopDim::N => 0,
            LoopDim::M => 1,
            LoopDim::C => 2,
            LoopDim::P => 3,
            LoopDim::Q => 4,
            LoopDim::R => 5,
            LoopDim::S => 6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LoopDim::N => "N",
            LoopDim::M => "M",
            LoopDim::C => "C",
            LoopDim::P => "P",
            LoopDim::Q => "Q",
            LoopDim::R => "R",
            LoopDim::S => "S",
        }
    }

    pub fn parse(s: &str) -> Option<LoopDim> {
        match s {
            "N" | "n" => Some(LoopDim::N),
            "M" | "m" => Some(LoopDim::M),
            "C" | "c" => Some(LoopDim::C),
            "P" | "p" => Some(LoopDim::P),
            "Q" | "q" => Some(LoopDim::Q),
            "R" | "r" => Some(LoopDim::R),
            "S" | "s" => Some(LoopDim::S),
            _ => None,
        }
    }
}

impl std::fmt::Display for LoopDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The three operand tensors of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TensorId {
    Weight,
    Input,
    Output,
}

impl TensorId {
    pub const ALL: [TensorId; 3] = [TensorId::Weight, TensorId::Input, TensorId::Output];

    pub fn label(self) -> &'static str {
        match self {
            TensorId::Weight => "Weight",
            TensorId::Input => "Input",
            TensorId::Output => "Output",
        }
    }

    /// Dims whose index changes move this tensor's tile window. The input
    /// couples P with R (and Q with S) through the sliding window, so all
    /// four appear in its set.
    pub fn dims(self) -> &'static [LoopDim] {
        match self {
            TensorId::Weight => &[LoopDim::M, LoopDim::C, LoopDim::R, LoopDim::S],
            TensorId::Input => &[
                LoopDim::N,
                LoopDim::C,
                LoopDim::P,
                LoopDim::Q,
                LoopDim::R,
                LoopDim::S,
            ],
            TensorId::Output => &[LoopDim::N, LoopDim::M, LoopDim::P, LoopDim::Q],
        }
    }

    pub fn depends_on(self, dim: LoopDim) -> bool {
        self.dims().contains(&dim)
    }
}

impl std::fmt::Display for TensorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Dominant-shape category of a layer, decided by the largest of C, M and
/// max(P, Q), with ties broken in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkloadCategory {
    HighC,
    HighM,
    HighPq,
}

impl WorkloadCategory {
    pub fn label(self) -> &'static str {
        match self {
            WorkloadCategory::HighC => "high_c",
            WorkloadCategory::HighM => "high_m",
            WorkloadCategory::HighPq => "high_pq",
        }
    }
}

impl std::fmt::Display for WorkloadCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("layer '{name}': bound {dim} must be >= 1")]
    NonPositiveBound { name: String, dim: LoopDim },
    #[error("count overflow computing {what} for layer '{name}'")]
    Overflow { name: String, what: &'static str },
    #[error("failed to parse workload file: {0}")]
    Parse(String),
    #[error("workload '{0}' not found")]
    UnknownWorkload(String),
}

/// A single convolution layer: batch N, output channels M, input channels C,
/// output height/width P/Q, filter height/width R/S.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub name: String,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "C")]
    pub c: u64,
    #[serde(rename = "P")]
    pub p: u64,
    #[serde(rename = "Q")]
    pub q: u64,
    #[serde(rename = "R")]
    pub r: u64,
    #[serde(rename = "S")]
    pub s: u64,
}

impl ConvLayer {
    pub fn new(
        name: impl Into<String>,
        n: u64,
        m: u64,
        c: u64,
        p: u64,
        q: u64,
        r: u64,
        s: u64,
    ) -> Result<ConvLayer, WorkloadError> {
        let layer = ConvLayer {
            name: name.into(),
            n,
            m,
            c,
            p,
            q,
            r,
            s,
        };
        layer.check()?;
        Ok(layer)
    }

    pub fn check(&self) -> Result<(), WorkloadError> {
        for dim in LoopDim::ALL {
            if self.bound(dim) == 0 {
                return Err(WorkloadError::NonPositiveBound {
                    name: self.name.clone(),
                    dim,
                });
            }
        }
        Ok(())
    }

    pub fn bound(&self, dim: LoopDim) -> u64 {
        match dim {
            LoopDim::N => self.n,
            LoopDim::M => self.m,
            LoopDim::C => self.c,
            LoopDim::P => self.p,
            LoopDim::Q => self.q,
            LoopDim::R => self.r,
            LoopDim::S => self.s,
        }
    }

    /// Input height for stride-1 valid convolution.
    pub fn h(&self) -> u64 {
        self.p + self.r - 1
    }

    /// Input width for stride-1 valid convolution.
    pub fn w(&self) -> u64 {
        self.q + self.s - 1
    }

    /// Total multiply-accumulate operations: N·M·C·P·Q·R·S.
    pub fn mac_count(&self) -> Result<u64, WorkloadError> {
        self.check()?;
        LoopDim::ALL
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(self.bound(d)))
            .ok_or(WorkloadError::Overflow {
                name: self.name.clone(),
                what: "mac_count",
            })
    }

    /// Size of one operand tensor in words.
    pub fn tensor_size(&self, t: TensorId) -> Result<u64, WorkloadError> {
        self.check()?;
        let dims: [u64; 4] = match t {
            TensorId::Weight => [self.m, self.c, self.r, self.s],
            TensorId::Input => [self.n, self.c, self.h(), self.w()],
            TensorId::Output => [self.n, self.m, self.p, self.q],
        };
        dims.iter()
            .try_fold(1u64, |acc, &b| acc.checked_mul(b))
            .ok_or(WorkloadError::Overflow {
                name: self.name.clone(),
                what: "tensor_size",
            })
    }

    /// Dominant-shape category; ties break in the order C, M, PQ.
    pub fn category(&self) -> WorkloadCategory {
        let pq = self.p.max(self.q);
        if self.c >= self.m && self.c >= pq {
            WorkloadCategory::HighC
        } else if self.m >= pq {
            WorkloadCategory::HighM
        } else {
            WorkloadCategory::HighPq
        }
    }
}

/// Parse a single-layer workload file (key-value text, TOML syntax):
/// `name`, `N`, `M`, `C`, `P`, `Q`, `R`, `S`.
pub fn parse_layer(text: &str) -> Result<ConvLayer, WorkloadError> {
    let layer: ConvLayer = toml::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
    layer.check()?;
    Ok(layer)
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFile {
    layers: Vec<ConvLayer>,
}

/// Parse a catalog file holding one `[[layers]]` table per layer.
pub fn parse_catalog(text: &str) -> Result<Vec<ConvLayer>, WorkloadError> {
    let file: CatalogFile =
        toml::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
    for layer in &file.layers {
        layer.check()?;
    }
    Ok(file.layers)
}

/// Render a layer in the single-layer workload file format.
pub fn layer_to_toml(layer: &ConvLayer) -> String {
    toml::to_string(layer).expect("layer serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(n: u64, m: u64, c: u64, p: u64, q: u64, r: u64, s: u64) -> ConvLayer {
        ConvLayer::new("t", n, m, c, p, q, r, s).unwrap()
    }

    #[test]
    fn mac_count_golden_values() {
        // VGG16 conv1 and conv9, plus the degenerate layer.
        assert_eq!(layer(1, 64, 3, 224, 224, 3, 3).mac_count().unwrap(), 86_704_128);
        assert_eq!(
            layer(1, 512, 512, 28, 28, 3, 3).mac_count().unwrap(),
            1_849_688_064
        );
        assert_eq!(layer(1, 1, 1, 1, 1, 1, 1).mac_count().unwrap(), 1);
    }

    #[test]
    fn mac_count_overflow_is_an_error() {
        let big = ConvLayer {
            name: "big".into(),
            n: u64::MAX / 2,
            m: 3,
            c: 1,
            p: 1,
            q: 1,
            r: 1,
            s: 1,
        };
        assert!(matches!(
            big.mac_count(),
            Err(WorkloadError::Overflow { .. })
        ));
    }

    #[test]
    fn tensor_sizes() {
        // The motivating example layer: C=128, M=256, N=1, P=Q=56, R=S=3.
        let l = layer(1, 256, 128, 56, 56, 3, 3);
        assert_eq!(l.tensor_size(TensorId::Weight).unwrap(), 294_912); // 256*128*3*3
        assert_eq!(l.tensor_size(TensorId::Output).unwrap(), 802_816); // 1*256*56*56
        assert_eq!(l.tensor_size(TensorId::Input).unwrap(), 1 * 128 * 58 * 58);

        let unit = layer(1, 1, 1, 1, 1, 1, 1);
        for t in TensorId::ALL {
            assert_eq!(unit.tensor_size(t).unwrap(), 1);
        }
    }

    #[test]
    fn derived_input_extents() {
        let l = layer(1, 256, 128, 56, 56, 3, 3);
        assert_eq!(l.h(), 58);
        assert_eq!(l.w(), 58);
        assert!(l.h() >= l.r && l.w() >= l.s);
    }

    #[test]
    fn categories_with_tie_breaking() {
        // C == M tie resolves to HighC.
        assert_eq!(
            layer(1, 512, 512, 28, 28, 3, 3).category(),
            WorkloadCategory::HighC
        );
        assert_eq!(
            layer(1, 64, 3, 224, 224, 3, 3).category(),
            WorkloadCategory::HighPq
        );
        // All-ones resolves through the full tie chain to HighC.
        assert_eq!(layer(1, 1, 1, 1, 1, 1, 1).category(), WorkloadCategory::HighC);
        assert_eq!(
            layer(1, 1024, 256, 14, 14, 1, 1).category(),
            WorkloadCategory::HighM
        );
    }

    #[test]
    fn zero_bound_rejected() {
        assert!(ConvLayer::new("z", 1, 0, 1, 1, 1, 1, 1).is_err());
    }

    #[test]
    fn single_layer_file_round_trip() {
        let l = layer(1, 64, 3, 224, 224, 3, 3);
        let text = layer_to_toml(&l);
        assert_eq!(parse_layer(&text).unwrap(), l);
    }

    #[test]
    fn catalog_parse() {
        let text = r#"
            [[layers]]
            name = "a"
            N = 1
            M = 2
            C = 3
            P = 4
            Q = 5
            R = 1
            S = 1

            [[layers]]
            name = "b"
            N = 1
            M = 1
            C = 1
            P = 1
            Q = 1
            R = 1
            S = 1
        "#;
        let layers = parse_catalog(text).unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].name, "a");
        assert_eq!(layers[0].c, 3);
    }

    proptest! {
        #[test]
        fn mac_divisible_by_every_bound(
            n in 1u64..6, m in 1u64..6, c in 1u64..6,
            p in 1u64..6, q in 1u64..6, r in 1u64..4, s in 1u64..4,
        ) {
            let l = layer(n, m, c, p, q, r, s);
            let mac = l.mac_count().unwrap();
            for d in LoopDim::ALL {
                prop_assert_eq!(mac % l.bound(d), 0);
            }
            // mac = tensor_size(Output) * C * R * S
            let out = l.tensor_size(TensorId::Output).unwrap();
            prop_assert_eq!(mac, out * c * r * s);
        }

        #[test]
        fn strictly_monotone_in_every_bound(
            n in 1u64..5, m in 1u64..5, c in 1u64..5,
            p in 1u64..5, q in 1u64..5, r in 1u64..4, s in 1u64..4,
            bump in 0usize..7,
        ) {
            let base = layer(n, m, c, p, q, r, s);
            let mut bounds = [n, m, c, p, q, r, s];
            bounds[bump] += 1;
            let bigger = layer(
                bounds[0], bounds[1], bounds[2], bounds[3], bounds[4], bounds[5], bounds[6],
            );
            prop_assert!(bigger.mac_count().unwrap() > base.mac_count().unwrap());
            for t in TensorId::ALL {
                prop_assert!(bigger.tensor_size(t).unwrap() >= base.tensor_size(t).unwrap());
            }
        }
    }
}
