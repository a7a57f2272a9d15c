//! Gate-level simulation.
//!
//! Netlists are compiled into a flat list of operations in topological order.
//! Every signal holds a `u64`, one bit per lane, so 64 independent input pairs
//! are evaluated per pass. The single-vector helpers broadcast their operands
//! to all lanes and read lane 0.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mulgen::{compute_latency, LatencyInfo};
use crate::netlist::{validate, Netlist, NetlistError, PrimitiveKind, ValidationReport};

pub const LANES: usize = 64;

/// Largest `n + k` accepted by [`verify_exhaustive`].
pub const EXHAUSTIVE_MAX_BITS: usize = 24;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("netlist failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("operand {port} is {got} bits wide, port expects {expected}")]
    WidthMismatch { port: char, expected: usize, got: usize },
    #[error("value does not fit in {width} bits")]
    ValueTooWide { width: usize },
    #[error("combinational evaluation requested on a pipelined netlist")]
    Pipelined,
    #[error("exhaustive verification limited to {limit} input bits, netlist has {bits}")]
    TooWideForExhaustive { bits: usize, limit: usize },
}

/// An unsigned operand of fixed width, viewable as bits (index 0 = LSB) or as an integer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperandValue {
    width: usize,
    value: BigUint,
}

impl OperandValue {
    pub fn new(value: BigUint, width: usize) -> Result<Self, SimError> {
        if value.bits() > width as u64 {
            return Err(SimError::ValueTooWide { width });
        }
        Ok(OperandValue { width, value })
    }

    pub fn from_u64(value: u64, width: usize) -> Result<Self, SimError> {
        Self::new(BigUint::from(value), width)
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut value = BigUint::zero();
        for (i, &b) in bits.iter().enumerate() {
            if b {
                value.set_bit(i as u64, true);
            }
        }
        OperandValue { width: bits.len(), value }
    }

    /// Uniform over `[0, 2^width)`.
    pub fn random<R: Rng>(rng: &mut R, width: usize) -> Self {
        let words = width.div_ceil(32);
        let mut digits: Vec<u32> = (0..words).map(|_| rng.gen()).collect();
        if !width.is_multiple_of(32) {
            if let Some(top) = digits.last_mut() {
                *top &= (1u32 << (width % 32)) - 1;
            }
        }
        OperandValue { width, value: BigUint::from_slice(&digits) }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn bit(&self, i: usize) -> bool {
        self.value.bit(i as u64)
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.width).map(|i| self.bit(i)).collect()
    }

    /// Binary text, most significant bit first, zero-extended to the full width.
    pub fn to_bit_string(&self) -> String {
        (0..self.width).rev().map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    And { a: u32, b: u32, o: u32 },
    Half { a: u32, b: u32, s: u32, c: u32 },
    Full { a: u32, b: u32, c: u32, s: u32, co: u32 },
    Zero { o: u32 },
}

/// Signal values after evaluation plus flip-flop contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimState {
    values: Vec<u64>,
    dff_state: Vec<u64>,
    cycle: u64,
}

impl SimState {
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Value of a signal in lane 0.
    pub fn value(&self, signal: crate::netlist::SignalRef) -> bool {
        self.values[signal.index()] & 1 == 1
    }

    pub fn dff_state(&self) -> &[u64] {
        &self.dff_state
    }

    /// Output port read as an integer from lane 0.
    pub fn output(&self, netlist: &Netlist) -> BigUint {
        self.output_lane(netlist, 0)
    }

    pub fn output_lane(&self, netlist: &Netlist, lane: usize) -> BigUint {
        let mut value = BigUint::zero();
        for (j, s) in netlist.output_p().iter().enumerate() {
            if (self.values[s.index()] >> lane) & 1 == 1 {
                value.set_bit(j as u64, true);
            }
        }
        value
    }

    pub fn output_words(&self, netlist: &Netlist) -> Vec<u64> {
        netlist.output_p().iter().map(|s| self.values[s.index()]).collect()
    }
}

/// A netlist compiled for repeated evaluation.
pub struct Simulator<'n> {
    netlist: &'n Netlist,
    ops: Vec<Op>,
    dffs: Vec<(u32, u32)>,
}

impl<'n> Simulator<'n> {
    pub fn new(netlist: &'n Netlist) -> Result<Self, SimError> {
        let report = validate(netlist);
        if report.has_errors() {
            return Err(SimError::Invalid(report));
        }
        let order = netlist.combinational_order()?;
        let prims = netlist.primitives();
        let id = |s: crate::netlist::SignalRef| s.index() as u32;
        let ops = order
            .into_iter()
            .map(|idx| {
                let p = &prims[idx];
                let (i, o) = (&p.inputs, &p.outputs);
                match p.kind {
                    PrimitiveKind::And2 => Op::And { a: id(i[0]), b: id(i[1]), o: id(o[0]) },
                    PrimitiveKind::HalfAdder => Op::Half { a: id(i[0]), b: id(i[1]), s: id(o[0]), c: id(o[1]) },
                    PrimitiveKind::FullAdder => {
                        Op::Full { a: id(i[0]), b: id(i[1]), c: id(i[2]), s: id(o[0]), co: id(o[1]) }
                    }
                    PrimitiveKind::Const0 => Op::Zero { o: id(o[0]) },
                    PrimitiveKind::Dff => unreachable!("flip-flops are not in the combinational order"),
                }
            })
            .collect();
        let dffs = prims
            .iter()
            .filter(|p| p.kind == PrimitiveKind::Dff)
            .map(|p| (id(p.inputs[0]), id(p.outputs[0])))
            .collect();
        Ok(Simulator { netlist, ops, dffs })
    }

    pub fn netlist(&self) -> &'n Netlist {
        self.netlist
    }

    /// All signals and registers at zero, cycle 0.
    pub fn initial_state(&self) -> SimState {
        SimState { values: vec![0; self.netlist.signal_count()], dff_state: vec![0; self.dffs.len()], cycle: 0 }
    }

    /// Applies lane-packed operands (one word per bit) and settles combinational logic.
    pub fn settle(&self, state: &mut SimState, a: &[u64], b: &[u64]) {
        let v = &mut state.values;
        for (s, &w) in self.netlist.input_a().iter().zip(a) {
            v[s.index()] = w;
        }
        for (s, &w) in self.netlist.input_b().iter().zip(b) {
            v[s.index()] = w;
        }
        for (&(_, q), &w) in self.dffs.iter().zip(&state.dff_state) {
            v[q as usize] = w;
        }
        for op in &self.ops {
            match *op {
                Op::And { a, b, o } => v[o as usize] = v[a as usize] & v[b as usize],
                Op::Half { a, b, s, c } => {
                    let (x, y) = (v[a as usize], v[b as usize]);
                    v[s as usize] = x ^ y;
                    v[c as usize] = x & y;
                }
                Op::Full { a, b, c, s, co } => {
                    let (x, y, z) = (v[a as usize], v[b as usize], v[c as usize]);
                    v[s as usize] = x ^ y ^ z;
                    v[co as usize] = (x & y) | (x & z) | (y & z);
                }
                Op::Zero { o } => v[o as usize] = 0,
            }
        }
    }

    /// One rising edge: every register latches its pre-edge input, then the new
    /// operands are applied and logic settles.
    pub fn clock(&self, state: &mut SimState, a: &[u64], b: &[u64]) {
        for (slot, &(d, _)) in state.dff_state.iter_mut().zip(&self.dffs) {
            *slot = state.values[d as usize];
        }
        state.cycle += 1;
        self.settle(state, a, b);
    }
}

fn broadcast(value: &OperandValue) -> Vec<u64> {
    (0..value.width()).map(|i| if value.bit(i) { !0 } else { 0 }).collect()
}

fn check_widths(netlist: &Netlist, a: &OperandValue, b: &OperandValue) -> Result<(), SimError> {
    if a.width() != netlist.width_a() {
        return Err(SimError::WidthMismatch { port: 'x', expected: netlist.width_a(), got: a.width() });
    }
    if b.width() != netlist.width_b() {
        return Err(SimError::WidthMismatch { port: 'y', expected: netlist.width_b(), got: b.width() });
    }
    Ok(())
}

/// Settles a combinational netlist for one operand pair.
pub fn eval_combinational(netlist: &Netlist, a: &OperandValue, b: &OperandValue) -> Result<SimState, SimError> {
    if netlist.is_pipelined() {
        return Err(SimError::Pipelined);
    }
    check_widths(netlist, a, b)?;
    let sim = Simulator::new(netlist)?;
    let mut state = sim.initial_state();
    sim.settle(&mut state, &broadcast(a), &broadcast(b));
    Ok(state)
}

/// Advances `state` by one clock edge with the given operands applied after the edge.
pub fn step_cycle(netlist: &Netlist, state: &SimState, a: &OperandValue, b: &OperandValue) -> Result<SimState, SimError> {
    check_widths(netlist, a, b)?;
    let sim = Simulator::new(netlist)?;
    let mut next = state.clone();
    sim.clock(&mut next, &broadcast(a), &broadcast(b));
    Ok(next)
}

mod decimal {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        BigUint::parse_bytes(text.as_bytes(), 10).ok_or_else(|| serde::de::Error::custom("invalid decimal integer"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    #[serde(with = "decimal")]
    pub a: BigUint,
    #[serde(with = "decimal")]
    pub b: BigUint,
    #[serde(with = "decimal")]
    pub expected: BigUint,
    #[serde(with = "decimal")]
    pub got: BigUint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VerificationMode {
    Exhaustive,
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mode: VerificationMode,
    pub checked: u64,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            VerificationMode::Exhaustive => "exhaustive".to_string(),
            VerificationMode::Random { seed } => format!("random (seed {seed})"),
        };
        match &self.counterexample {
            None => write!(f, "PASS: {mode} verification, {} vector(s)", self.checked),
            Some(c) => write!(
                f,
                "FAIL: {mode} verification, {} * {} expected {} got {}",
                c.a, c.b, c.expected, c.got
            ),
        }
    }
}

/// Runs `batches` lane-packed operand batches through the netlist and returns
/// the first failing batch's counterexample. Pipelined netlists are streamed,
/// one batch per cycle, and outputs are read `latency` cycles later.
fn run_batches<M, C>(sim: &Simulator<'_>, latency: Option<u32>, batches: usize, make: M, check: C) -> Option<Counterexample>
where
    M: Fn(usize) -> (Vec<u64>, Vec<u64>) + Sync,
    C: Fn(usize, &[u64]) -> Option<Counterexample> + Sync,
{
    const CHUNK: usize = 64;
    let netlist = sim.netlist();
    let chunks = batches.div_ceil(CHUNK);
    (0..chunks).into_par_iter().find_map_first(|chunk| {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(batches);
        let mut state = sim.initial_state();
        match latency {
            None => (start..end).find_map(|idx| {
                let (a, b) = make(idx);
                sim.settle(&mut state, &a, &b);
                check(idx, &state.output_words(netlist))
            }),
            Some(lag) => {
                let lag = lag as usize;
                let zeros = (vec![0; netlist.width_a()], vec![0; netlist.width_b()]);
                (0..end - start + lag).find_map(|t| {
                    let (a, b) = if start + t < end { make(start + t) } else { zeros.clone() };
                    if t == 0 {
                        sim.settle(&mut state, &a, &b);
                    } else {
                        sim.clock(&mut state, &a, &b);
                    }
                    (t >= lag).then(|| check(start + t - lag, &state.output_words(netlist))).flatten()
                })
            }
        }
    })
}

fn pipeline_lag(netlist: &Netlist) -> Result<Option<u32>, SimError> {
    match compute_latency(netlist)? {
        LatencyInfo::Cycles(l) => Ok(Some(l)),
        LatencyInfo::GateUnits(_) => Ok(None),
    }
}

/// Checks every input pair against the exact product.
pub fn verify_exhaustive(netlist: &Netlist) -> Result<VerificationReport, SimError> {
    let (n, k) = (netlist.width_a(), netlist.width_b());
    if n + k > EXHAUSTIVE_MAX_BITS {
        return Err(SimError::TooWideForExhaustive { bits: n + k, limit: EXHAUSTIVE_MAX_BITS });
    }
    let sim = Simulator::new(netlist)?;
    let lag = pipeline_lag(netlist)?;
    let total = 1usize << (n + k);
    let batches = total.div_ceil(LANES);
    let mask_a = (1u64 << n) - 1;

    let make = |idx: usize| {
        let base = (idx * LANES) as u64;
        let word = |bit: usize| (0..LANES as u64).fold(0u64, |w, l| w | ((((base + l) >> bit) & 1) << l));
        ((0..n).map(word).collect(), (n..n + k).map(word).collect())
    };
    let check = |idx: usize, outs: &[u64]| {
        let base = idx * LANES;
        (0..LANES.min(total - base)).find_map(|l| {
            let pair = (base + l) as u64;
            let (a, b) = (pair & mask_a, pair >> n);
            let got = outs.iter().enumerate().fold(0u64, |acc, (j, w)| acc | (((w >> l) & 1) << j));
            (got != a * b).then(|| Counterexample {
                a: a.into(),
                b: b.into(),
                expected: (a * b).into(),
                got: got.into(),
            })
        })
    };
    let counterexample = run_batches(&sim, lag, batches, make, check);
    Ok(VerificationReport {
        mode: VerificationMode::Exhaustive,
        checked: total as u64,
        passed: counterexample.is_none(),
        counterexample,
    })
}

/// The operand pairs [`verify_random`] draws for a given seed.
pub fn random_pairs(width_a: usize, width_b: usize, count: usize, seed: u64) -> Vec<(OperandValue, OperandValue)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = OperandValue::random(&mut rng, width_a);
            let b = OperandValue::random(&mut rng, width_b);
            (a, b)
        })
        .collect()
}

/// Checks `pairs` against the exact product.
pub fn verify_pairs(netlist: &Netlist, pairs: &[(OperandValue, OperandValue)]) -> Result<Option<Counterexample>, SimError> {
    for (a, b) in pairs {
        check_widths(netlist, a, b)?;
    }
    let sim = Simulator::new(netlist)?;
    let lag = pipeline_lag(netlist)?;
    let (n, k) = (netlist.width_a(), netlist.width_b());
    let batches = pairs.len().div_ceil(LANES);
    let lanes = |idx: usize| &pairs[idx * LANES..((idx + 1) * LANES).min(pairs.len())];
    let make = |idx: usize| {
        let group = lanes(idx);
        let pack = |op: &dyn Fn(&(OperandValue, OperandValue)) -> &OperandValue, bit: usize| {
            group.iter().enumerate().fold(0u64, |w, (l, p)| w | ((op(p).bit(bit) as u64) << l))
        };
        let a = (0..n).map(|bit| pack(&|p| &p.0, bit)).collect();
        let b = (0..k).map(|bit| pack(&|p| &p.1, bit)).collect();
        (a, b)
    };
    let check = |idx: usize, outs: &[u64]| {
        lanes(idx).iter().enumerate().find_map(|(l, (a, b))| {
            let expected = a.value() * b.value();
            let mut got = BigUint::zero();
            for (j, w) in outs.iter().enumerate() {
                if (w >> l) & 1 == 1 {
                    got.set_bit(j as u64, true);
                }
            }
            (got != expected).then(|| Counterexample { a: a.value().clone(), b: b.value().clone(), expected, got })
        })
    };
    Ok(run_batches(&sim, lag, batches, make, check))
}

/// Checks `count` seeded uniform random pairs against the exact product.
pub fn verify_random(netlist: &Netlist, count: usize, seed: u64) -> Result<VerificationReport, SimError> {
    let pairs = random_pairs(netlist.width_a(), netlist.width_b(), count, seed);
    let counterexample = verify_pairs(netlist, &pairs)?;
    Ok(VerificationReport {
        mode: VerificationMode::Random { seed },
        checked: count as u64,
        passed: counterexample.is_none(),
        counterexample,
    })
}
