//! Per-design statistics and their JSON rendering.

use serde::{Deserialize, Serialize};

use crate::mulgen::{compute_latency, BuildAnnotations, LatencyInfo};
use crate::netlist::{Netlist, NetlistError, PrimitiveKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Published reference row for one configuration: (n, k, signals, delay, adders, dffs).
pub const REFERENCE_ROWS: &[(usize, usize, u64, u64, u64, u64)] = &[
    (8, 8, 203, 17, 62, 227),
    (16, 16, 1858, 33, 254, 1061),
    (32, 32, 7721, 65, 1023, 4588),
    (128, 128, 61001, 115, 16105, 24104),
];

/// Field order here is the key order of the rendered JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub width_a: usize,
    pub width_b: usize,
    pub pipelined: bool,
    /// Every signal in the netlist: port bits, clock and internal nets.
    pub signals: usize,
    pub and_gates: usize,
    pub full_adders: usize,
    pub half_adders: usize,
    pub adders: usize,
    pub dffs: usize,
    pub reduction_stages: u32,
    pub reduction_full_adders: usize,
    pub final_adder_dots: usize,
    pub dropped_carries: usize,
    pub latency: LatencyInfo,
    pub generation_time_ms: f64,
}

pub fn compute_metrics(
    netlist: &Netlist,
    annotations: &BuildAnnotations,
    generation_time_ms: f64,
) -> Result<MetricsReport, NetlistError> {
    let mut counts = [0usize; 5];
    for p in netlist.primitives() {
        counts[kind_slot(p.kind)] += 1;
    }
    let full_adders = counts[kind_slot(PrimitiveKind::FullAdder)];
    let half_adders = counts[kind_slot(PrimitiveKind::HalfAdder)];
    Ok(MetricsReport {
        version: SCHEMA_VERSION,
        width_a: netlist.width_a(),
        width_b: netlist.width_b(),
        pipelined: netlist.is_pipelined(),
        signals: netlist.signal_count(),
        and_gates: counts[kind_slot(PrimitiveKind::And2)],
        full_adders,
        half_adders,
        adders: full_adders + half_adders,
        dffs: counts[kind_slot(PrimitiveKind::Dff)],
        reduction_stages: annotations.reduction_stages,
        reduction_full_adders: annotations.reduction_full_adders,
        final_adder_dots: annotations.final_adder_dots,
        dropped_carries: annotations.dropped_carries,
        latency: compute_latency(netlist)?,
        generation_time_ms,
    })
}

fn kind_slot(kind: PrimitiveKind) -> usize {
    match kind {
        PrimitiveKind::And2 => 0,
        PrimitiveKind::HalfAdder => 1,
        PrimitiveKind::FullAdder => 2,
        PrimitiveKind::Dff => 3,
        PrimitiveKind::Const0 => 4,
    }
}

/// Pretty-printed with a trailing newline.
pub fn render_json(report: &MetricsReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("metrics serialize");
    text.push('\n');
    text
}

pub fn parse_json(text: &str) -> serde_json::Result<MetricsReport> {
    serde_json::from_str(text)
}

/// The published row for `(n, k)`, if there is one.
pub fn reference_row(width_a: usize, width_b: usize) -> Option<(u64, u64, u64, u64)> {
    REFERENCE_ROWS
        .iter()
        .find(|r| r.0 == width_a && r.1 == width_b)
        .map(|r| (r.2, r.3, r.4, r.5))
}
