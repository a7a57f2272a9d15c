//! Flat single-bit netlist IR.
//!
//! Every wire is a [`SignalRef`]. Gates are [`Primitive`]s drawn from five kinds
//! (two-input AND, half adder, full adder, D flip-flop, constant zero). The
//! multiplier generator builds these, the simulator evaluates them and the VHDL
//! emitter prints them.

use std::collections::VecDeque;
use std::fmt;

use smallvec::SmallVec;
use thiserror::Error;

/// Identity of a single-bit wire. Indices are dense within one [`Netlist`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalRef(u32);

impl SignalRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SignalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputPort {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignalKind {
    InputPortBit { port: InputPort, bit: usize },
    /// A signal that is itself output port bit `bit`, driven directly by a primitive.
    OutputPortBit { bit: usize },
    Internal,
    Clock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveKind {
    And2,
    HalfAdder,
    FullAdder,
    Dff,
    Const0,
}

impl PrimitiveKind {
    pub fn input_arity(self) -> usize {
        match self {
            PrimitiveKind::And2 | PrimitiveKind::HalfAdder => 2,
            PrimitiveKind::FullAdder => 3,
            PrimitiveKind::Dff => 1,
            PrimitiveKind::Const0 => 0,
        }
    }

    pub fn output_arity(self) -> usize {
        match self {
            PrimitiveKind::HalfAdder | PrimitiveKind::FullAdder => 2,
            PrimitiveKind::And2 | PrimitiveKind::Dff | PrimitiveKind::Const0 => 1,
        }
    }

    /// Combinational depth contributed by one instance. A full adder is two
    /// gate levels; flip-flops and constants start a new region at depth 0.
    pub fn depth_weight(self) -> u32 {
        match self {
            PrimitiveKind::And2 | PrimitiveKind::HalfAdder => 1,
            PrimitiveKind::FullAdder => 2,
            PrimitiveKind::Dff | PrimitiveKind::Const0 => 0,
        }
    }

    pub fn is_combinational(self) -> bool {
        self != PrimitiveKind::Dff
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PrimitiveKind::And2 => "AND2",
            PrimitiveKind::HalfAdder => "HA",
            PrimitiveKind::FullAdder => "FA",
            PrimitiveKind::Dff => "DFF",
            PrimitiveKind::Const0 => "CONST0",
        };
        f.write_str(name)
    }
}

/// One gate instance. Adders list outputs as `[sum, carry]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub inputs: SmallVec<[SignalRef; 3]>,
    pub outputs: SmallVec<[SignalRef; 2]>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("combinational cycle through {} primitive(s), first is #{}", .primitives.len(), .primitives[0])]
    CombinationalCycle { primitives: Vec<usize> },
    #[error("register path cycle through {} primitive(s)", .primitives.len())]
    RegisterCycle { primitives: Vec<usize> },
    #[error("unbalanced path into signal {signal}{}: {shallow} vs {deep} register stages", bit_label(*.bit))]
    UnbalancedPath {
        signal: SignalRef,
        bit: Option<usize>,
        shallow: u32,
        deep: u32,
    },
    #[error("signal {0} is not reachable from any source")]
    Unreachable(SignalRef),
}

fn bit_label(bit: Option<usize>) -> String {
    bit.map(|b| format!(" (output bit {b})")).unwrap_or_default()
}

/// The circuit under construction: ports, signals, primitives and an optional clock.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Netlist {
    width_a: usize,
    width_b: usize,
    signals: Vec<SignalKind>,
    input_a: Vec<SignalRef>,
    input_b: Vec<SignalRef>,
    output_p: Vec<SignalRef>,
    clock: Option<SignalRef>,
    primitives: Vec<Primitive>,
    pipelined: bool,
    open: Vec<SignalRef>,
}

impl Netlist {
    /// Creates a netlist with its two input ports. Outputs are attached later.
    pub fn new(width_a: usize, width_b: usize) -> Self {
        let mut netlist = Netlist {
            width_a,
            width_b,
            signals: Vec::new(),
            input_a: Vec::with_capacity(width_a),
            input_b: Vec::with_capacity(width_b),
            output_p: Vec::new(),
            clock: None,
            primitives: Vec::new(),
            pipelined: false,
            open: Vec::new(),
        };
        for bit in 0..width_a {
            let s = netlist.add_signal(SignalKind::InputPortBit { port: InputPort::A, bit });
            netlist.input_a.push(s);
        }
        for bit in 0..width_b {
            let s = netlist.add_signal(SignalKind::InputPortBit { port: InputPort::B, bit });
            netlist.input_b.push(s);
        }
        netlist
    }

    pub fn width_a(&self) -> usize {
        self.width_a
    }

    pub fn width_b(&self) -> usize {
        self.width_b
    }

    pub fn output_width(&self) -> usize {
        self.width_a + self.width_b
    }

    pub fn input_a(&self) -> &[SignalRef] {
        &self.input_a
    }

    pub fn input_b(&self) -> &[SignalRef] {
        &self.input_b
    }

    pub fn output_p(&self) -> &[SignalRef] {
        &self.output_p
    }

    pub fn clock(&self) -> Option<SignalRef> {
        self.clock
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn is_pipelined(&self) -> bool {
        self.pipelined
    }

    pub fn signal_count(&self) -> usize {
        self.signals.len()
    }

    pub fn signals(&self) -> impl Iterator<Item = SignalRef> + '_ {
        (0..self.signals.len() as u32).map(SignalRef)
    }

    pub fn kind(&self, signal: SignalRef) -> SignalKind {
        self.signals[signal.index()]
    }

    pub fn count(&self, kind: PrimitiveKind) -> usize {
        self.primitives.iter().filter(|p| p.kind == kind).count()
    }

    pub fn add_signal(&mut self, kind: SignalKind) -> SignalRef {
        let id = u32::try_from(self.signals.len()).expect("signal index space exhausted");
        self.signals.push(kind);
        SignalRef(id)
    }

    /// Adds the clock port and marks the netlist pipelined.
    pub fn add_clock(&mut self) -> SignalRef {
        if let Some(clk) = self.clock {
            return clk;
        }
        let clk = self.add_signal(SignalKind::Clock);
        self.clock = Some(clk);
        self.pipelined = true;
        clk
    }

    /// Adds a primitive with freshly created internal outputs and returns them.
    pub fn add_primitive(&mut self, kind: PrimitiveKind, inputs: &[SignalRef]) -> SmallVec<[SignalRef; 2]> {
        let outputs: SmallVec<[SignalRef; 2]> =
            (0..kind.output_arity()).map(|_| self.add_signal(SignalKind::Internal)).collect();
        self.primitives.push(Primitive {
            kind,
            inputs: inputs.iter().copied().collect(),
            outputs: outputs.clone(),
        });
        outputs
    }

    /// Adds a primitive exactly as given, without arity checks.
    pub fn push_primitive(&mut self, primitive: Primitive) -> usize {
        self.primitives.push(primitive);
        self.primitives.len() - 1
    }

    pub fn set_outputs(&mut self, outputs: Vec<SignalRef>) {
        self.output_p = outputs;
    }

    /// Declares a signal intentionally unconnected, e.g. a carry out of the most
    /// significant column, which is always 0 because the product fits the output.
    pub fn mark_open(&mut self, signal: SignalRef) {
        if !self.open.contains(&signal) {
            self.open.push(signal);
        }
    }

    pub fn open_signals(&self) -> &[SignalRef] {
        &self.open
    }

    /// Swaps the first two outputs of a primitive. Used to inject faults when
    /// checking that verification is not vacuous.
    pub fn swap_primitive_outputs(&mut self, primitive: usize) {
        self.primitives[primitive].outputs.swap(0, 1);
    }

    /// Combinational primitives (and constants) in a topological order. Flip-flops
    /// are excluded; their outputs act as sources.
    pub(crate) fn combinational_order(&self) -> Result<Vec<usize>, NetlistError> {
        topo_order(self, |p| p.kind.is_combinational()).map_err(|primitives| NetlistError::CombinationalCycle { primitives })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Driver {
    Port,
    Primitive(usize),
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Port => f.write_str("port"),
            Driver::Primitive(i) => write!(f, "primitive #{i}"),
        }
    }
}

/// Kahn ordering over the primitives selected by `include`. Edges run from the
/// primitive driving a signal to every included primitive reading it. On failure
/// returns the primitives that lie on cycles.
fn topo_order(netlist: &Netlist, include: impl Fn(&Primitive) -> bool) -> Result<Vec<usize>, Vec<usize>> {
    let prims = &netlist.primitives;
    let nsig = netlist.signals.len();
    let mut producer = vec![usize::MAX; nsig];
    for (idx, p) in prims.iter().enumerate() {
        if include(p) {
            for o in &p.outputs {
                if o.index() < nsig && producer[o.index()] == usize::MAX {
                    producer[o.index()] = idx;
                }
            }
        }
    }

    // readers[s]: included primitives that consume s
    let mut reader_start = vec![0usize; nsig + 1];
    for p in prims.iter().filter(|p| include(p)) {
        for i in &p.inputs {
            if i.index() < nsig {
                reader_start[i.index() + 1] += 1;
            }
        }
    }
    for s in 0..nsig {
        reader_start[s + 1] += reader_start[s];
    }
    let mut fill = reader_start.clone();
    let mut readers = vec![0usize; reader_start[nsig]];
    let mut pending = vec![0usize; prims.len()];
    for (idx, p) in prims.iter().enumerate() {
        if !include(p) {
            continue;
        }
        for i in &p.inputs {
            if i.index() >= nsig {
                continue;
            }
            readers[fill[i.index()]] = idx;
            fill[i.index()] += 1;
            if producer[i.index()] != usize::MAX {
                pending[idx] += 1;
            }
        }
    }

    let mut queue: VecDeque<usize> = (0..prims.len()).filter(|&i| include(&prims[i]) && pending[i] == 0).collect();
    let mut order = Vec::with_capacity(prims.len());
    while let Some(idx) = queue.pop_front() {
        order.push(idx);
        for o in &prims[idx].outputs {
            let s = o.index();
            if s >= nsig || producer[s] != idx {
                continue;
            }
            for &r in &readers[reader_start[s]..reader_start[s + 1]] {
                pending[r] -= 1;
                if pending[r] == 0 {
                    queue.push_back(r);
                }
            }
        }
    }

    let included = prims.iter().filter(|p| include(p)).count();
    if order.len() == included {
        return Ok(order);
    }

    // Strip primitives that only hang off a cycle: keep those that can still
    // reach another leftover primitive, repeatedly.
    let mut left: Vec<bool> = vec![false; prims.len()];
    for (idx, &n) in pending.iter().enumerate() {
        if include(&prims[idx]) && n > 0 {
            left[idx] = true;
        }
    }
    loop {
        let mut changed = false;
        for idx in 0..prims.len() {
            if !left[idx] {
                continue;
            }
            let feeds_leftover = prims[idx].outputs.iter().any(|o| {
                let s = o.index();
                s < nsig
                    && producer[s] == idx
                    && readers[reader_start[s]..reader_start[s + 1]].iter().any(|&r| left[r])
            });
            if !feeds_leftover {
                left[idx] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Err((0..prims.len()).filter(|&i| left[i]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Finding {
    ArityMismatch { primitive: usize, kind: PrimitiveKind, inputs: usize, outputs: usize },
    UnknownSignal { primitive: usize, signal: SignalRef },
    OutputInInputs { primitive: usize, signal: SignalRef },
    MultipleDrivers { signal: SignalRef, drivers: Vec<Driver> },
    UndrivenInput { primitive: usize, signal: SignalRef },
    OutputWidth { expected: usize, actual: usize },
    UndrivenOutput { bit: usize, signal: SignalRef },
    CombinationalCycle { primitives: Vec<usize> },
    ClockMismatch { clock: bool, dffs: usize, pipelined: bool },
    UnreadSignal { signal: SignalRef },
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self {
            Finding::UnreadSignal { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::ArityMismatch { primitive, kind, inputs, outputs } => write!(
                f,
                "arity mismatch: primitive #{primitive} ({kind}) has {inputs} input(s) and {outputs} output(s), expected {} and {}",
                kind.input_arity(),
                kind.output_arity()
            ),
            Finding::UnknownSignal { primitive, signal } => {
                write!(f, "unknown signal: primitive #{primitive} references {signal}")
            }
            Finding::OutputInInputs { primitive, signal } => {
                write!(f, "self loop: primitive #{primitive} reads its own output {signal}")
            }
            Finding::MultipleDrivers { signal, drivers } => {
                let list: Vec<String> = drivers.iter().map(ToString::to_string).collect();
                write!(f, "multiple drivers: {signal} driven by {}", list.join(", "))
            }
            Finding::UndrivenInput { primitive, signal } => {
                write!(f, "undriven input: primitive #{primitive} reads {signal}")
            }
            Finding::OutputWidth { expected, actual } => {
                write!(f, "output width: expected {expected} bits, found {actual}")
            }
            Finding::UndrivenOutput { bit, signal } => write!(f, "undriven output: bit {bit} ({signal})"),
            Finding::CombinationalCycle { primitives } => {
                write!(f, "combinational cycle through primitives {primitives:?}")
            }
            Finding::ClockMismatch { clock, dffs, pipelined } => write!(
                f,
                "clock mismatch: clock present = {clock}, {dffs} flip-flop(s), pipelined = {pipelined}"
            ),
            Finding::UnreadSignal { signal } => write!(f, "unread signal: {signal}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity() == Severity::Warning)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            let tag = match finding.severity() {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(f, "{tag}: {finding}")?;
        }
        Ok(())
    }
}

/// Structural checks. Never fails; every problem becomes a finding, in a fixed
/// order (per check, then by primitive/signal index).
pub fn validate(netlist: &Netlist) -> ValidationReport {
    let nsig = netlist.signals.len();
    let mut findings = Vec::new();

    for (idx, p) in netlist.primitives.iter().enumerate() {
        if p.inputs.len() != p.kind.input_arity() || p.outputs.len() != p.kind.output_arity() {
            findings.push(Finding::ArityMismatch {
                primitive: idx,
                kind: p.kind,
                inputs: p.inputs.len(),
                outputs: p.outputs.len(),
            });
        }
    }
    for (idx, p) in netlist.primitives.iter().enumerate() {
        for &s in p.inputs.iter().chain(&p.outputs) {
            if s.index() >= nsig {
                findings.push(Finding::UnknownSignal { primitive: idx, signal: s });
            }
        }
    }
    for (idx, p) in netlist.primitives.iter().enumerate() {
        for &o in &p.outputs {
            if p.inputs.contains(&o) {
                findings.push(Finding::OutputInInputs { primitive: idx, signal: o });
            }
        }
    }

    let mut all_drivers: Vec<SmallVec<[Driver; 1]>> = vec![SmallVec::new(); nsig];
    for s in netlist.input_a.iter().chain(&netlist.input_b).chain(&netlist.clock) {
        if s.index() < nsig {
            all_drivers[s.index()].push(Driver::Port);
        }
    }
    for (idx, p) in netlist.primitives.iter().enumerate() {
        for o in &p.outputs {
            if o.index() < nsig {
                all_drivers[o.index()].push(Driver::Primitive(idx));
            }
        }
    }
    for (s, drivers) in all_drivers.iter().enumerate() {
        if drivers.len() > 1 {
            findings.push(Finding::MultipleDrivers { signal: SignalRef(s as u32), drivers: drivers.to_vec() });
        }
    }

    let driven = |s: SignalRef| s.index() < nsig && !all_drivers[s.index()].is_empty();
    for (idx, p) in netlist.primitives.iter().enumerate() {
        for &i in &p.inputs {
            if i.index() < nsig && !driven(i) {
                findings.push(Finding::UndrivenInput { primitive: idx, signal: i });
            }
        }
    }

    let expected = netlist.output_width();
    if netlist.output_p.len() != expected {
        findings.push(Finding::OutputWidth { expected, actual: netlist.output_p.len() });
    }
    for (bit, &s) in netlist.output_p.iter().enumerate() {
        if !driven(s) {
            findings.push(Finding::UndrivenOutput { bit, signal: s });
        }
    }

    let well_formed = !findings.iter().any(|f| matches!(f, Finding::UnknownSignal { .. }));
    if well_formed {
        if let Err(NetlistError::CombinationalCycle { primitives }) = netlist.combinational_order() {
            findings.push(Finding::CombinationalCycle { primitives });
        }
    }

    let dffs = netlist.count(PrimitiveKind::Dff);
    let clock = netlist.clock.is_some();
    if clock != (dffs > 0) || clock != netlist.pipelined {
        findings.push(Finding::ClockMismatch { clock, dffs, pipelined: netlist.pipelined });
    }

    let mut read = vec![false; nsig];
    for p in &netlist.primitives {
        for i in &p.inputs {
            if i.index() < nsig {
                read[i.index()] = true;
            }
        }
    }
    for s in netlist.output_p.iter().chain(&netlist.open) {
        if s.index() < nsig {
            read[s.index()] = true;
        }
    }
    for (s, kind) in netlist.signals.iter().enumerate() {
        if matches!(kind, SignalKind::Internal) && !read[s] {
            findings.push(Finding::UnreadSignal { signal: SignalRef(s as u32) });
        }
    }

    ValidationReport { findings }
}

/// Combinational depth of every signal, indexed by [`SignalRef`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Levels(Vec<u32>);

impl Levels {
    pub fn get(&self, signal: SignalRef) -> u32 {
        self.0[signal.index()]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// Depth of each signal since the last source: ports, constants and flip-flop
/// outputs sit at 0, AND2 and HA add one level, FA adds two.
pub fn levelize(netlist: &Netlist) -> Result<Levels, NetlistError> {
    let order = netlist.combinational_order()?;
    let mut depth = vec![0u32; netlist.signals.len()];
    for idx in order {
        let p = &netlist.primitives[idx];
        let base = p.inputs.iter().map(|i| depth[i.index()]).max().unwrap_or(0);
        let d = if p.kind == PrimitiveKind::Const0 { 0 } else { base + p.kind.depth_weight() };
        for o in &p.outputs {
            depth[o.index()] = d;
        }
    }
    Ok(Levels(depth))
}

/// Largest depth over flip-flop inputs and output bits: the longest combinational
/// run between two register boundaries.
pub fn max_stage_depth(netlist: &Netlist, levels: &Levels) -> u32 {
    let dff_inputs = netlist
        .primitives
        .iter()
        .filter(|p| p.kind == PrimitiveKind::Dff)
        .flat_map(|p| p.inputs.iter().copied());
    dff_inputs
        .chain(netlist.output_p.iter().copied())
        .map(|s| levels.get(s))
        .max()
        .unwrap_or(0)
}

/// Min/max number of flip-flops over all source-to-signal paths. Sources are
/// input port bits and constants.
pub(crate) fn register_depth_ranges(netlist: &Netlist) -> Result<Vec<Option<(u32, u32)>>, NetlistError> {
    let order = topo_order(netlist, |_| true).map_err(|primitives| NetlistError::RegisterCycle { primitives })?;
    let mut range: Vec<Option<(u32, u32)>> = vec![None; netlist.signals.len()];
    for s in netlist.input_a.iter().chain(&netlist.input_b) {
        range[s.index()] = Some((0, 0));
    }
    for idx in order {
        let p = &netlist.primitives[idx];
        let r = match p.kind {
            PrimitiveKind::Const0 => Some((0, 0)),
            PrimitiveKind::Dff => range[p.inputs[0].index()].map(|(lo, hi)| (lo + 1, hi + 1)),
            _ => p.inputs.iter().filter_map(|i| range[i.index()]).reduce(|(a, b), (c, d)| (a.min(c), b.max(d))),
        };
        for o in &p.outputs {
            range[o.index()] = r;
        }
    }
    Ok(range)
}

/// Number of flip-flops on every path into `bit`. Paths that disagree are a
/// balancing error. A netlist without flip-flops yields 0.
pub fn register_depth(netlist: &Netlist, bit: SignalRef) -> Result<u32, NetlistError> {
    let ranges = register_depth_ranges(netlist)?;
    depth_from_ranges(netlist, &ranges, bit)
}

pub(crate) fn depth_from_ranges(
    netlist: &Netlist,
    ranges: &[Option<(u32, u32)>],
    bit: SignalRef,
) -> Result<u32, NetlistError> {
    match ranges[bit.index()] {
        Some((lo, hi)) if lo == hi => Ok(lo),
        Some((shallow, deep)) => Err(NetlistError::UnbalancedPath {
            signal: bit,
            bit: netlist.output_p.iter().position(|&s| s == bit),
            shallow,
            deep,
        }),
        None => Err(NetlistError::Unreachable(bit)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prim(kind: PrimitiveKind, inputs: &[SignalRef], outputs: &[SignalRef]) -> Primitive {
        Primitive { kind, inputs: inputs.iter().copied().collect(), outputs: outputs.iter().copied().collect() }
    }

    /// 1x1 multiplier by hand: p0 = x0 & y0, p1 = 0.
    fn one_by_one() -> Netlist {
        let mut n = Netlist::new(1, 1);
        let (x, y) = (n.input_a()[0], n.input_b()[0]);
        let prod = n.add_primitive(PrimitiveKind::And2, &[x, y])[0];
        let hi = n.add_signal(SignalKind::OutputPortBit { bit: 1 });
        n.push_primitive(prim(PrimitiveKind::Const0, &[], &[hi]));
        n.set_outputs(vec![prod, hi]);
        n
    }

    #[test]
    fn hand_built_one_by_one_is_clean() {
        let n = one_by_one();
        assert!(validate(&n).is_empty(), "{}", validate(&n));
        let levels = levelize(&n).unwrap();
        assert_eq!(levels.get(n.output_p()[0]), 1);
        assert_eq!(levels.get(n.output_p()[1]), 0);
    }

    #[test]
    fn undriven_output_bit() {
        let mut n = Netlist::new(2, 2);
        let (x, y) = (n.input_a().to_vec(), n.input_b().to_vec());
        let mut outs: Vec<SignalRef> = (0..3).map(|i| n.add_primitive(PrimitiveKind::And2, &[x[i % 2], y[i / 2]])[0]).collect();
        let dangling = n.add_signal(SignalKind::OutputPortBit { bit: 3 });
        outs.push(dangling);
        n.set_outputs(outs);
        let report = validate(&n);
        let errors: Vec<_> = report.errors().collect();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0], &Finding::UndrivenOutput { bit: 3, signal: dangling });
        assert!(errors[0].to_string().contains("undriven output"));
    }

    #[test]
    fn two_drivers_on_one_signal() {
        let mut n = Netlist::new(1, 1);
        let (x, y) = (n.input_a()[0], n.input_b()[0]);
        let out = n.add_primitive(PrimitiveKind::And2, &[x, y])[0];
        n.push_primitive(prim(PrimitiveKind::And2, &[y, x], &[out]));
        let hi = n.add_primitive(PrimitiveKind::Const0, &[])[0];
        n.set_outputs(vec![out, hi]);
        let report = validate(&n);
        assert_eq!(report.findings.len(), 1, "{report}");
        assert_eq!(
            report.findings[0],
            Finding::MultipleDrivers { signal: out, drivers: vec![Driver::Primitive(0), Driver::Primitive(1)] }
        );
        assert!(report.findings[0].to_string().starts_with("multiple drivers"));
    }

    #[test]
    fn arity_and_self_loop() {
        let mut n = one_by_one();
        let x = n.input_a()[0];
        let s = n.add_signal(SignalKind::Internal);
        n.push_primitive(prim(PrimitiveKind::FullAdder, &[x, s], &[s]));
        let report = validate(&n);
        assert!(report.findings.iter().any(|f| matches!(f, Finding::ArityMismatch { primitive: 2, .. })));
        assert!(report.findings.iter().any(|f| matches!(f, Finding::OutputInInputs { primitive: 2, .. })));
    }

    #[test]
    fn cycle_detected_and_levelize_rejects_it() {
        let mut n = Netlist::new(1, 1);
        let x = n.input_a()[0];
        let a = n.add_signal(SignalKind::Internal);
        let b = n.add_signal(SignalKind::Internal);
        n.push_primitive(prim(PrimitiveKind::And2, &[x, b], &[a]));
        n.push_primitive(prim(PrimitiveKind::And2, &[x, a], &[b]));
        // a tail hanging off the loop is not part of the cycle
        let tail = n.add_primitive(PrimitiveKind::And2, &[a, x])[0];
        let hi = n.add_primitive(PrimitiveKind::Const0, &[])[0];
        n.set_outputs(vec![tail, hi]);
        let report = validate(&n);
        assert!(report.findings.contains(&Finding::CombinationalCycle { primitives: vec![0, 1] }), "{report}");
        assert_eq!(levelize(&n), Err(NetlistError::CombinationalCycle { primitives: vec![0, 1] }));
    }

    #[test]
    fn dff_breaks_combinational_cycle() {
        let mut n = Netlist::new(1, 1);
        let x = n.input_a()[0];
        n.add_clock();
        let a = n.add_signal(SignalKind::Internal);
        let q = n.add_signal(SignalKind::Internal);
        n.push_primitive(prim(PrimitiveKind::And2, &[x, q], &[a]));
        n.push_primitive(prim(PrimitiveKind::Dff, &[a], &[q]));
        let hi = n.add_primitive(PrimitiveKind::Const0, &[])[0];
        n.set_outputs(vec![a, hi]);
        assert!(!validate(&n).has_errors());
        assert!(levelize(&n).is_ok());
        assert!(matches!(register_depth(&n, a), Err(NetlistError::RegisterCycle { .. })));
    }

    #[test]
    fn clock_consistency() {
        let mut n = Netlist::new(1, 1);
        let (x, y) = (n.input_a()[0], n.input_b()[0]);
        let a = n.add_primitive(PrimitiveKind::And2, &[x, y])[0];
        let q = n.add_primitive(PrimitiveKind::Dff, &[a])[0];
        let hi = n.add_primitive(PrimitiveKind::Const0, &[])[0];
        n.set_outputs(vec![q, hi]);
        assert!(validate(&n).findings.iter().any(|f| matches!(f, Finding::ClockMismatch { clock: false, dffs: 1, .. })));
        n.add_clock();
        assert!(validate(&n).is_empty());
    }

    #[test]
    fn unread_signal_is_a_warning() {
        let mut n = one_by_one();
        let x = n.input_a()[0];
        n.add_primitive(PrimitiveKind::And2, &[x, x]);
        let report = validate(&n);
        assert!(!report.has_errors());
        assert_eq!(report.warnings().count(), 1);
    }

    #[test]
    fn open_signal_is_not_reported() {
        let mut n = one_by_one();
        let x = n.input_a()[0];
        let dangling = n.add_primitive(PrimitiveKind::And2, &[x, x])[0];
        n.mark_open(dangling);
        assert!(validate(&n).is_empty());
    }

    #[test]
    fn register_depth_unbalanced_mix() {
        // bit 0 = Dff(x0) & y0 mixes a 1-register path with a 0-register path
        let mut n = Netlist::new(1, 1);
        n.add_clock();
        let (x, y) = (n.input_a()[0], n.input_b()[0]);
        let qx = n.add_primitive(PrimitiveKind::Dff, &[x])[0];
        let p0 = n.add_primitive(PrimitiveKind::And2, &[qx, y])[0];
        let c = n.add_primitive(PrimitiveKind::Const0, &[])[0];
        let p1 = n.add_primitive(PrimitiveKind::Dff, &[c])[0];
        n.set_outputs(vec![p0, p1]);
        assert!(validate(&n).is_empty());
        assert_eq!(
            register_depth(&n, p0),
            Err(NetlistError::UnbalancedPath { signal: p0, bit: Some(0), shallow: 0, deep: 1 })
        );
        assert_eq!(register_depth(&n, p1), Ok(1));
        assert_eq!(register_depth(&n, qx), Ok(1));
    }

    #[test]
    fn register_depth_without_registers_is_zero() {
        let n = one_by_one();
        for &bit in n.output_p() {
            assert_eq!(register_depth(&n, bit), Ok(0));
        }
    }

    /// A random layered DAG of And2/HA/FA gates over a few inputs.
    fn random_dag(choices: &[(u8, u16, u16, u16)]) -> Netlist {
        let mut n = Netlist::new(3, 2);
        let mut pool: Vec<SignalRef> = n.input_a().iter().chain(n.input_b()).copied().collect();
        for &(k, a, b, c) in choices {
            let pick = |i: u16| pool[i as usize % pool.len()];
            let outs = match k % 3 {
                0 => n.add_primitive(PrimitiveKind::And2, &[pick(a), pick(b)]),
                1 => n.add_primitive(PrimitiveKind::HalfAdder, &[pick(a), pick(b)]),
                _ => n.add_primitive(PrimitiveKind::FullAdder, &[pick(a), pick(b), pick(c)]),
            };
            pool.extend(outs);
        }
        n
    }

    proptest! {
        #[test]
        fn levelize_ignores_insertion_order(
            choices in proptest::collection::vec((0u8..3, 0u16..500, 0u16..500, 0u16..500), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = random_dag(&choices);
            let mut shuffled = n.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.primitives.shuffle(&mut rng);
            prop_assert_eq!(levelize(&n).unwrap(), levelize(&shuffled).unwrap());
        }
    }
}
