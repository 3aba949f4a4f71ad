//! Bundled architecture specs and the workload catalog, compiled into the
//! library so the CLI can resolve names without external files.

use crate::arch::{self, AcceleratorSpec, ArchError};
use crate::workload::{self, ConvLayer, WorkloadError};

const EYERISS: &str = include_str!("../data/eyeriss.toml");
const NVDLA: &str = include_str!("../data/nvdla.toml");
const SHIDIANNAO: &str = include_str!("../data/shidiannao.toml");
const WORKLOADS: &str = include_str!("../data/workloads.toml");

pub const ARCH_NAMES: [&str; 3] = ["eyeriss", "nvdla", "shidiannao"];

/// The nine benchmark layer names, grouped by category in catalog order.
pub const BENCHMARK_NAMES: [&str; 9] = [
    "resnet50_conv22",
    "squeezenet_conv23",
    "vgg16_conv9",
    "squeezenet_conv25",
    "resnet50_conv24",
    "vgg16_conv8",
    "squeezenet_conv1",
    "resnet50_conv1",
    "vgg16_conv1",
];

pub fn bundled_arch(name: &str) -> Result<AcceleratorSpec, ArchError> {
    let text = match name {
        "eyeriss" => EYERISS,
        "nvdla" => NVDLA,
        "shidiannao" => SHIDIANNAO,
        _ => return Err(ArchError::UnknownArch(name.to_string())),
    };
    arch::parse_arch(text)
}

/// Every layer in the bundled catalog (the nine benchmarks plus vgg02_l5).
pub fn bundled_workloads() -> Vec<ConvLayer> {
    workload::parse_catalog(WORKLOADS).expect("bundled catalog parses")
}

pub fn bundled_workload(name: &str) -> Result<ConvLayer, WorkloadError> {
    bundled_workloads()
        .into_iter()
        .find(|l| l.name == name)
        .ok_or_else(|| WorkloadError::UnknownWorkload(name.to_string()))
}

/// The nine benchmark layers in catalog order.
pub fn benchmark_workloads() -> Vec<ConvLayer> {
    BENCHMARK_NAMES
        .iter()
        .map(|n| bundled_workload(n).expect("benchmark layer present"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadCategory;

    #[test]
    fn benchmark_mac_counts_match_published_table() {
        let expect: [(&str, u64, WorkloadCategory); 9] = [
            ("resnet50_conv22", 51_380_224, WorkloadCategory::HighC),
            ("squeezenet_conv23", 5_537_792, WorkloadCategory::HighC),
            ("vgg16_conv9", 1_849_688_064, WorkloadCategory::HighC),
            ("squeezenet_conv25", 24_920_064, WorkloadCategory::HighM),
            ("resnet50_conv24", 51_380_224, WorkloadCategory::HighM),
            ("vgg16_conv8", 924_844_032, WorkloadCategory::HighM),
            ("squeezenet_conv1", 708_083_712, WorkloadCategory::HighPq),
            ("resnet50_conv1", 472_055_808, WorkloadCategory::HighPq),
            ("vgg16_conv1", 86_704_128, WorkloadCategory::HighPq),
        ];
        for (name, macs, category) in expect {
            let layer = bundled_workload(name).unwrap();
            assert_eq!(layer.mac_count().unwrap(), macs, "{name}");
            assert_eq!(layer.category(), category, "{name}");
        }
    }

    #[test]
    fn vgg02_l5_is_the_motivating_layer() {
        let l = bundled_workload("vgg02_l5").unwrap();
        assert_eq!((l.c, l.m, l.n, l.p, l.q, l.r, l.s), (128, 256, 1, 56, 56, 3, 3));
    }

    #[test]
    fn unknown_names_error() {
        assert!(bundled_workload("nope").is_err());
        assert!(bundled_arch("nope").is_err());
    }
}
