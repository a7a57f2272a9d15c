//! Unsigned multiplier construction.
//!
//! Three stages feed one another:
//!
//! 1. **Partial products.** One AND2 per bit pair `(x_a, y_b)`, dropped as a dot
//!    into column `a + b` of a [`DotMatrix`].
//! 2. **Carry-save reduction.** Iterations scan the columns from the least
//!    significant one upward. Full adders take three dots at a time; a column
//!    left with two dots gets a half adder unless a full adder can absorb them
//!    later (see [`MultiplierBuilder::reduce_step`]). Reduction stops once no
//!    column holds more than two dots.
//! 3. **Final ripple-carry addition.** Each column is wired straight through,
//!    or resolved with a half or full adder depending on how many bits meet
//!    there.
//!
//! In pipelined mode every primitive is assigned to a stage (AND2 gates to 0,
//! reduction iteration `i` to `i + 1`, each ripple position one stage after the
//! previous) and [`insert_pipeline_registers`] places flip-flop chains so that
//! every output bit sees the same number of registers.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{self, Netlist, NetlistError, PrimitiveKind, SignalKind, SignalRef};

pub const DEFAULT_MAX_WIDTH: usize = 1024;

/// Environment variable that overrides [`DEFAULT_MAX_WIDTH`] in the CLI.
pub const MAX_WIDTH_ENV: &str = "MULGEN_MAX_WIDTH";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub width_a: usize,
    pub width_b: usize,
    pub pipelined: bool,
}

impl GeneratorConfig {
    pub fn new(width_a: usize, width_b: usize, pipelined: bool) -> Self {
        GeneratorConfig { width_a, width_b, pipelined }
    }

    /// `mul_<n>x<k>`, with a `_p` suffix when pipelined.
    pub fn entity_name(&self) -> String {
        format!("mul_{}x{}{}", self.width_a, self.width_b, if self.pipelined { "_p" } else { "" })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("operand widths must be at least 1 (got {width_a}x{width_b})")]
    InvalidWidth { width_a: usize, width_b: usize },
    #[error("operand width {width} exceeds the capacity ceiling of {limit} bits")]
    Capacity { width: usize, limit: usize },
    #[error("column {column} holds {height} dots; the final adder accepts at most 2")]
    ColumnOverflow { column: usize, height: usize },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// A pending bit: the signal and the reduction iteration it becomes available at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dot {
    pub signal: SignalRef,
    pub iteration: u32,
}

/// Pending bits per output column, column 0 being the least significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DotMatrix {
    columns: Vec<Vec<Dot>>,
}

impl DotMatrix {
    pub fn new(width: usize) -> Self {
        DotMatrix { columns: vec![Vec::new(); width] }
    }

    /// Builds a matrix from explicit signals, all available at iteration 0.
    pub fn from_signals(columns: Vec<Vec<SignalRef>>) -> Self {
        let columns = columns
            .into_iter()
            .map(|col| col.into_iter().map(|signal| Dot { signal, iteration: 0 }).collect())
            .collect();
        DotMatrix { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[Dot] {
        &self.columns[j]
    }

    pub fn heights(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn max_height(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn push(&mut self, column: usize, dot: Dot) {
        self.columns[column].push(dot);
    }
}

/// What one reduction iteration placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSummary {
    pub full_adders: usize,
    pub half_adders: usize,
    /// Two-dot columns skipped because a carry already arrived this iteration.
    pub deferred_by_carry: usize,
    /// Two-dot columns skipped because the column below holds exactly two dots next iteration.
    pub deferred_by_neighbour: usize,
    /// Carries that would land beyond the most significant column.
    pub dropped_carries: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub matrix: DotMatrix,
    pub stage_count: u32,
    pub steps: Vec<StepSummary>,
}

impl Reduction {
    pub fn full_adders(&self) -> usize {
        self.steps.iter().map(|s| s.full_adders).sum()
    }

    pub fn half_adders(&self) -> usize {
        self.steps.iter().map(|s| s.half_adders).sum()
    }
}

/// Facts about a generated multiplier that are not recoverable from the netlist alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildAnnotations {
    pub reduction_stages: u32,
    pub reduction_full_adders: usize,
    pub reduction_half_adders: usize,
    /// Dots handed from the reduction tree to the ripple-carry adder.
    pub final_adder_dots: usize,
    /// Reduction carries out of the top column; always zero-valued, left open.
    pub dropped_carries: usize,
    pub final_heights: Vec<usize>,
}

/// Stage number per primitive, aligned with [`Netlist::primitives`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StageMap(Vec<u32>);

impl StageMap {
    pub fn stage(&self, primitive: usize) -> u32 {
        self.0[primitive]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// Incrementally builds the combinational multiplier and remembers which
/// pipeline stage each primitive belongs to.
pub struct MultiplierBuilder {
    netlist: Netlist,
    stages: Vec<u32>,
    reduction_stages: u32,
}

impl MultiplierBuilder {
    pub fn new(width_a: usize, width_b: usize) -> Self {
        MultiplierBuilder { netlist: Netlist::new(width_a, width_b), stages: Vec::new(), reduction_stages: 0 }
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    fn place(&mut self, kind: PrimitiveKind, inputs: &[SignalRef], stage: u32) -> (SignalRef, Option<SignalRef>) {
        let outs = self.netlist.add_primitive(kind, inputs);
        self.stages.push(stage);
        (outs[0], outs.get(1).copied())
    }

    fn place_adder(&mut self, inputs: &[SignalRef], stage: u32) -> (SignalRef, SignalRef) {
        let kind = if inputs.len() == 3 { PrimitiveKind::FullAdder } else { PrimitiveKind::HalfAdder };
        let (sum, carry) = self.place(kind, inputs, stage);
        (sum, carry.expect("adders have a carry output"))
    }

    /// First stage: `n * k` AND2 gates, one dot per bit pair in column `a + b`.
    pub fn build_partial_products(&mut self) -> DotMatrix {
        let (n, k) = (self.netlist.width_a(), self.netlist.width_b());
        let mut matrix = DotMatrix::new(n + k);
        for col in 0..n + k - 1 {
            // a + b = col, a ascending
            let lo = col.saturating_sub(k - 1);
            let hi = col.min(n - 1);
            for a in lo..=hi {
                let b = col - a;
                let inputs = [self.netlist.input_a()[a], self.netlist.input_b()[b]];
                let (signal, _) = self.place(PrimitiveKind::And2, &inputs, 0);
                matrix.push(col, Dot { signal, iteration: 0 });
            }
        }
        matrix
    }

    /// One reduction iteration over dots available at `iteration` or earlier.
    ///
    /// Per column, FAs consume three eligible dots at a time (sum stays, carry
    /// moves up a column, both available next iteration). A column left with
    /// exactly two eligible dots gets an HA unless
    /// - a carry has already been sent into this column during this iteration,
    ///   so a FA can take all three next time, or
    /// - the column below holds exactly two dots for the next iteration, whose
    ///   HA carry will meet these two dots one iteration later.
    ///
    /// Skipped and untouched dots move on to `iteration + 1` unchanged. When no
    /// column has more than two eligible dots the matrix is only relabelled.
    pub fn reduce_step(&mut self, matrix: &DotMatrix, iteration: u32) -> (DotMatrix, StepSummary) {
        let width = matrix.width();
        let next_iteration = iteration + 1;
        let mut next = DotMatrix::new(width);
        let mut summary = StepSummary::default();

        let eligible_in = |col: &[Dot]| col.iter().filter(|d| d.iteration <= iteration).count();
        if matrix.columns.iter().all(|col| eligible_in(col) <= 2) {
            for (j, col) in matrix.columns.iter().enumerate() {
                for d in col {
                    next.push(j, Dot { signal: d.signal, iteration: d.iteration.max(next_iteration) });
                }
            }
            return (next, summary);
        }

        let mut carries_in = vec![0usize; width];
        for j in 0..width {
            let mut eligible: Vec<Dot> = Vec::new();
            for d in &matrix.columns[j] {
                if d.iteration <= iteration {
                    eligible.push(*d);
                } else {
                    next.push(j, *d);
                }
            }
            eligible.sort_by_key(|d| d.iteration);

            let mut rest = &eligible[..];
            while rest.len() > 2 {
                let inputs = [rest[0].signal, rest[1].signal, rest[2].signal];
                let (sum, carry) = self.place_adder(&inputs, next_iteration);
                next.push(j, Dot { signal: sum, iteration: next_iteration });
                self.push_carry(&mut next, &mut carries_in, &mut summary, j + 1, carry, next_iteration);
                summary.full_adders += 1;
                rest = &rest[3..];
            }

            if rest.len() == 2 {
                if carries_in[j] > 0 {
                    summary.deferred_by_carry += 1;
                } else if j > 0 && next.columns[j - 1].len() == 2 {
                    summary.deferred_by_neighbour += 1;
                } else {
                    let inputs = [rest[0].signal, rest[1].signal];
                    let (sum, carry) = self.place_adder(&inputs, next_iteration);
                    next.push(j, Dot { signal: sum, iteration: next_iteration });
                    self.push_carry(&mut next, &mut carries_in, &mut summary, j + 1, carry, next_iteration);
                    summary.half_adders += 1;
                    rest = &[];
                }
            }
            for d in rest {
                next.push(j, Dot { signal: d.signal, iteration: next_iteration });
            }
        }
        (next, summary)
    }

    fn push_carry(
        &mut self,
        next: &mut DotMatrix,
        carries_in: &mut [usize],
        summary: &mut StepSummary,
        column: usize,
        carry: SignalRef,
        iteration: u32,
    ) {
        if column < next.width() {
            next.push(column, Dot { signal: carry, iteration });
            carries_in[column] += 1;
        } else {
            self.netlist.mark_open(carry);
            summary.dropped_carries += 1;
        }
    }

    /// Repeats [`Self::reduce_step`] until every column holds at most two dots.
    pub fn run_reduction(&mut self, matrix: DotMatrix) -> Reduction {
        let mut matrix = matrix;
        let mut steps = Vec::new();
        let mut iteration = 0u32;
        while matrix.max_height() > 2 {
            let (next, summary) = self.reduce_step(&matrix, iteration);
            debug_assert_eq!(next.total() + summary.full_adders + summary.dropped_carries, matrix.total());
            matrix = next;
            steps.push(summary);
            iteration += 1;
        }
        self.reduction_stages = iteration;
        Reduction { matrix, stage_count: iteration, steps }
    }

    /// Third stage: ripple-carry resolution of a matrix with at most two dots per
    /// column. Returns the `n + k` output bit sources, least significant first.
    pub fn build_final_adder(&mut self, matrix: &DotMatrix) -> Result<Vec<SignalRef>, GenError> {
        let width = matrix.width();
        if let Some((column, col)) = matrix.columns.iter().enumerate().find(|(_, c)| c.len() > 2) {
            return Err(GenError::ColumnOverflow { column, height: col.len() });
        }
        let base = self.reduction_stages + 1;
        let mut outputs = Vec::with_capacity(width);
        // (signal, stage of the adder that produced it)
        let mut carry: Option<(SignalRef, u32)> = None;
        for (j, col) in matrix.columns.iter().enumerate() {
            let dots: Vec<SignalRef> = col.iter().map(|d| d.signal).collect();
            match (dots.len(), carry) {
                (0, None) => {
                    let bit = self.netlist.add_signal(SignalKind::OutputPortBit { bit: j });
                    self.netlist.push_primitive(netlist::Primitive {
                        kind: PrimitiveKind::Const0,
                        inputs: Default::default(),
                        outputs: [bit].into_iter().collect(),
                    });
                    self.stages.push(0);
                    outputs.push(bit);
                }
                (0, Some((c, _))) => {
                    outputs.push(c);
                    carry = None;
                }
                (1, None) => outputs.push(dots[0]),
                (_, _) => {
                    let mut inputs = dots;
                    let stage = match carry {
                        Some((c, s)) => {
                            inputs.push(c);
                            s + 1
                        }
                        None => base,
                    };
                    let (sum, c) = self.place_adder(&inputs, stage);
                    outputs.push(sum);
                    carry = Some((c, stage));
                }
            }
        }
        if let Some((c, _)) = carry {
            self.netlist.mark_open(c);
        }
        Ok(outputs)
    }

    pub fn finish(mut self, outputs: Vec<SignalRef>) -> (Netlist, StageMap) {
        self.netlist.set_outputs(outputs);
        (self.netlist, StageMap(self.stages))
    }
}

/// Rebuilds a combinational netlist with flip-flops between stages.
///
/// A primitive at stage `s` reading a signal produced at stage `t` sees it
/// through `s - t` registers; port bits and constants count as stage 0. Every
/// output bit is delayed to the common latency `L`, the largest producer stage
/// (at least 1). Register chains are shared per signal.
pub fn insert_pipeline_registers(netlist: &Netlist, stages: &StageMap) -> Netlist {
    let mut out = Netlist::new(netlist.width_a(), netlist.width_b());
    let mut map: Vec<Option<SignalRef>> = vec![None; netlist.signal_count()];
    let mut stage_of: Vec<u32> = vec![0; netlist.signal_count()];
    for (old, new) in netlist.input_a().iter().zip(out.input_a()) {
        map[old.index()] = Some(*new);
    }
    for (old, new) in netlist.input_b().iter().zip(out.input_b()) {
        map[old.index()] = Some(*new);
    }
    out.add_clock();

    let mut chains = DelayChains::default();
    for (idx, p) in netlist.primitives().iter().enumerate() {
        let stage = stages.stage(idx);
        let inputs: Vec<SignalRef> = p
            .inputs
            .iter()
            .map(|i| {
                let src = map[i.index()].expect("primitives are listed after their drivers");
                let lag = stage.checked_sub(stage_of[i.index()]).expect("consumer stage precedes producer");
                chains.delayed(&mut out, src, lag)
            })
            .collect();
        let outs = out.add_primitive(p.kind, &inputs);
        for (old, new) in p.outputs.iter().zip(outs) {
            map[old.index()] = Some(new);
            stage_of[old.index()] = stage;
        }
    }
    for s in netlist.open_signals() {
        if let Some(new) = map[s.index()] {
            out.mark_open(new);
        }
    }

    let latency = netlist.output_p().iter().map(|s| stage_of[s.index()]).max().unwrap_or(0).max(1);
    let outputs = netlist
        .output_p()
        .iter()
        .map(|s| {
            let src = map[s.index()].expect("outputs are driven");
            chains.delayed(&mut out, src, latency - stage_of[s.index()])
        })
        .collect();
    out.set_outputs(outputs);
    out
}

#[derive(Default)]
struct DelayChains {
    taps: HashMap<SignalRef, Vec<SignalRef>>,
}

impl DelayChains {
    fn delayed(&mut self, netlist: &mut Netlist, signal: SignalRef, lag: u32) -> SignalRef {
        if lag == 0 {
            return signal;
        }
        let taps = self.taps.entry(signal).or_default();
        while taps.len() < lag as usize {
            let prev = taps.last().copied().unwrap_or(signal);
            taps.push(netlist.add_primitive(PrimitiveKind::Dff, &[prev])[0]);
        }
        taps[lag as usize - 1]
    }
}

/// A generated multiplier plus the construction facts metrics need.
#[derive(Clone, Debug)]
pub struct Generated {
    pub config: GeneratorConfig,
    pub netlist: Netlist,
    pub annotations: BuildAnnotations,
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Generated, GenError> {
    generate_with_limit(cfg, DEFAULT_MAX_WIDTH)
}

pub fn generate_with_limit(cfg: &GeneratorConfig, max_width: usize) -> Result<Generated, GenError> {
    if cfg.width_a == 0 || cfg.width_b == 0 {
        return Err(GenError::InvalidWidth { width_a: cfg.width_a, width_b: cfg.width_b });
    }
    if let Some(&width) = [cfg.width_a, cfg.width_b].iter().find(|&&w| w > max_width) {
        return Err(GenError::Capacity { width, limit: max_width });
    }
    // Keeps every signal index within u32 even for the largest pipelined builds.
    let estimate = cfg.width_a as u128 * cfg.width_b as u128 * 64;
    if estimate > u32::MAX as u128 {
        return Err(GenError::Capacity { width: cfg.width_a.max(cfg.width_b), limit: max_width });
    }

    let mut builder = MultiplierBuilder::new(cfg.width_a, cfg.width_b);
    let matrix = builder.build_partial_products();
    let reduction = builder.run_reduction(matrix);
    let outputs = builder.build_final_adder(&reduction.matrix)?;
    let annotations = BuildAnnotations {
        reduction_stages: reduction.stage_count,
        reduction_full_adders: reduction.full_adders(),
        reduction_half_adders: reduction.half_adders(),
        final_adder_dots: reduction.matrix.total(),
        dropped_carries: reduction.steps.iter().map(|s| s.dropped_carries).sum(),
        final_heights: reduction.matrix.heights(),
    };
    let (comb, stages) = builder.finish(outputs);
    let netlist = if cfg.pipelined { insert_pipeline_registers(&comb, &stages) } else { comb };
    Ok(Generated { config: *cfg, netlist, annotations })
}

pub fn generate_multiplier(cfg: &GeneratorConfig) -> Result<Netlist, GenError> {
    generate(cfg).map(|g| g.netlist)
}

/// Clock cycles for pipelined designs, gate units for combinational ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyInfo {
    Cycles(u32),
    GateUnits(u32),
}

impl LatencyInfo {
    pub fn value(self) -> u32 {
        match self {
            LatencyInfo::Cycles(v) | LatencyInfo::GateUnits(v) => v,
        }
    }
}

impl fmt::Display for LatencyInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatencyInfo::Cycles(c) => write!(f, "{c} cycle(s)"),
            LatencyInfo::GateUnits(g) => write!(f, "{g} gate unit(s)"),
        }
    }
}

pub fn compute_latency(netlist: &Netlist) -> Result<LatencyInfo, NetlistError> {
    if !netlist.is_pipelined() {
        let levels = netlist::levelize(netlist)?;
        let depth = netlist.output_p().iter().map(|&s| levels.get(s)).max().unwrap_or(0);
        return Ok(LatencyInfo::GateUnits(depth));
    }
    let ranges = netlist::register_depth_ranges(netlist)?;
    let mut common: Option<(usize, u32)> = None;
    for (bit, &signal) in netlist.output_p().iter().enumerate() {
        let depth = netlist::depth_from_ranges(netlist, &ranges, signal)?;
        match common {
            None => common = Some((bit, depth)),
            Some((_, d)) if d == depth => {}
            Some((_, d)) => {
                return Err(NetlistError::UnbalancedPath {
                    signal,
                    bit: Some(bit),
                    shallow: d.min(depth),
                    deep: d.max(depth),
                })
            }
        }
    }
    Ok(LatencyInfo::Cycles(common.map(|(_, d)| d).unwrap_or(0)))
}
