//! Self-checking VHDL testbench generation.

use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mulgen::{compute_latency, GeneratorConfig, LatencyInfo};
use crate::netlist::{Netlist, NetlistError};
use crate::sim::{random_pairs, verify_pairs, OperandValue, SimError};
use crate::vhdl::{check_entity_name, VhdlError};

/// Products at most this wide are compared as VHDL integers.
pub const INTEGER_REPORT_MAX_BITS: usize = 31;
pub const DEFAULT_CLOCK_PERIOD_NS: u32 = 10;
/// Delay on every stimulus assignment.
pub const INPUT_DELAY_NS: u32 = 1;
/// Settling margin added to the combinational gate delay.
pub const WAIT_MARGIN_NS: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestVector {
    pub a: OperandValue,
    pub b: OperandValue,
    pub expected: BigUint,
}

impl TestVector {
    pub fn new(a: OperandValue, b: OperandValue) -> Self {
        let expected = a.value() * b.value();
        TestVector { a, b, expected }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    /// Wait `wait_ns` after applying each vector.
    Combinational { wait_ns: u32 },
    /// Wait `wait_cycles` clock periods after applying each vector.
    Pipelined { clock_period_ns: u32, wait_cycles: u32 },
}

impl Timing {
    pub fn wait_ns(&self) -> u64 {
        match *self {
            Timing::Combinational { wait_ns } => wait_ns as u64,
            Timing::Pipelined { clock_period_ns, wait_cycles } => clock_period_ns as u64 * wait_cycles as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestbenchPlan {
    pub entity_name: String,
    pub width_a: usize,
    pub width_b: usize,
    pub vectors: Vec<TestVector>,
    pub timing: Timing,
    pub latency: LatencyInfo,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum TbError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Name(#[from] VhdlError),
    #[error("plan is for {plan_a}x{plan_b} operands, netlist is {net_a}x{net_b}")]
    WidthMismatch { plan_a: usize, plan_b: usize, net_a: usize, net_b: usize },
    #[error("pipelined plan for a combinational netlist or vice versa")]
    ModeMismatch,
    #[error("vector {index} failed self-check: {detail}")]
    SelfCheck { index: usize, detail: SelfCheckFailure },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelfCheckFailure {
    /// Stored expectation disagrees with the reference multiply.
    Expected { a: BigUint, b: BigUint, stored: BigUint, reference: BigUint },
    /// The simulated circuit disagrees with the stored expectation.
    Circuit { a: BigUint, b: BigUint, expected: BigUint, got: BigUint },
}

impl fmt::Display for SelfCheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelfCheckFailure::Expected { a, b, stored, reference } => {
                write!(f, "{a} * {b}: stored expectation {stored}, reference product {reference}")
            }
            SelfCheckFailure::Circuit { a, b, expected, got } => {
                write!(f, "{a} * {b}: circuit produced {got}, expected {expected}")
            }
        }
    }
}

/// Seeded uniform operand pairs with exact products.
pub fn generate_vectors(cfg: &GeneratorConfig, count: usize, seed: u64) -> Vec<TestVector> {
    random_pairs(cfg.width_a, cfg.width_b, count, seed)
        .into_iter()
        .map(|(a, b)| TestVector::new(a, b))
        .collect()
}

/// Derives timing from the netlist's latency.
pub fn plan_testbench(
    netlist: &Netlist,
    entity_name: &str,
    vectors: Vec<TestVector>,
    seed: u64,
) -> Result<TestbenchPlan, TbError> {
    let latency = compute_latency(netlist)?;
    let timing = match latency {
        LatencyInfo::GateUnits(g) => Timing::Combinational { wait_ns: g + WAIT_MARGIN_NS },
        LatencyInfo::Cycles(l) => Timing::Pipelined { clock_period_ns: DEFAULT_CLOCK_PERIOD_NS, wait_cycles: l + 1 },
    };
    Ok(TestbenchPlan {
        entity_name: entity_name.to_string(),
        width_a: netlist.width_a(),
        width_b: netlist.width_b(),
        vectors,
        timing,
        latency,
        seed,
    })
}

/// Schoolbook product over 16-bit limbs, kept apart from the bignum library
/// so expected values are checked by a second implementation.
fn reference_product(a: &OperandValue, b: &OperandValue) -> BigUint {
    let limbs = |v: &OperandValue| -> Vec<u32> {
        let bits = v.bits();
        bits.chunks(16)
            .map(|c| c.iter().enumerate().fold(0u32, |acc, (i, &bit)| acc | ((bit as u32) << i)))
            .collect()
    };
    let (x, y) = (limbs(a), limbs(b));
    let mut acc = vec![0u64; x.len() + y.len() + 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            acc[i + j] += (xi * yj) as u64;
        }
        // Normalise after each row so no limb accumulator overflows.
        for t in 0..acc.len() - 1 {
            acc[t + 1] += acc[t] >> 16;
            acc[t] &= 0xffff;
        }
    }
    let mut bits = Vec::with_capacity(acc.len() * 16);
    for limb in acc {
        bits.extend((0..16).map(|i| (limb >> i) & 1 == 1));
    }
    OperandValue::from_bits(&bits).value().clone()
}

/// Re-derives every expectation independently, then runs every vector
/// through the simulator. The first failure is reported.
pub fn self_check_plan(plan: &TestbenchPlan, netlist: &Netlist) -> Result<(), TbError> {
    check_plan_shape(plan, netlist)?;
    for (index, v) in plan.vectors.iter().enumerate() {
        let reference = reference_product(&v.a, &v.b);
        if reference != v.expected {
            return Err(TbError::SelfCheck {
                index,
                detail: SelfCheckFailure::Expected {
                    a: v.a.value().clone(),
                    b: v.b.value().clone(),
                    stored: v.expected.clone(),
                    reference,
                },
            });
        }
    }
    let pairs: Vec<_> = plan.vectors.iter().map(|v| (v.a.clone(), v.b.clone())).collect();
    if let Some(c) = verify_pairs(netlist, &pairs)? {
        let index = plan.vectors.iter().position(|v| *v.a.value() == c.a && *v.b.value() == c.b).unwrap_or(0);
        return Err(TbError::SelfCheck {
            index,
            detail: SelfCheckFailure::Circuit { a: c.a, b: c.b, expected: c.expected, got: c.got },
        });
    }
    Ok(())
}

fn check_plan_shape(plan: &TestbenchPlan, netlist: &Netlist) -> Result<(), TbError> {
    let mismatch = || TbError::WidthMismatch {
        plan_a: plan.width_a,
        plan_b: plan.width_b,
        net_a: netlist.width_a(),
        net_b: netlist.width_b(),
    };
    if plan.width_a != netlist.width_a() || plan.width_b != netlist.width_b() {
        return Err(mismatch());
    }
    if plan.vectors.iter().any(|v| v.a.width() != plan.width_a || v.b.width() != plan.width_b) {
        return Err(mismatch());
    }
    if matches!(plan.timing, Timing::Pipelined { .. }) != netlist.is_pipelined() {
        return Err(TbError::ModeMismatch);
    }
    Ok(())
}

fn hex(v: &BigUint, bits: usize) -> String {
    let digits = bits.div_ceil(4).max(1);
    format!("{:0>digits$}", v.to_str_radix(16))
}

const VEC2INT: &str = "\
function vec2int(v : std_logic_vector) return integer is
  variable r : integer := 0;
begin
  for i in v'range loop
    r := r * 2;
    if v(i) = '1' then
      r := r + 1;
    end if;
  end loop;
  return r;
end function;
";

const VEC2HEX: &str = "\
function vec2hex(v : std_logic_vector) return string is
  constant digits : string(1 to 16) := \"0123456789abcdef\";
  constant len : natural := (v'length + 3) / 4;
  variable padded : std_logic_vector(len * 4 - 1 downto 0) := (others => '0');
  variable result : string(1 to len);
  variable nibble : natural;
  variable known : boolean;
begin
  padded(v'length - 1 downto 0) := v;
  for i in 0 to len - 1 loop
    nibble := 0;
    known := true;
    for j in 3 downto 0 loop
      nibble := nibble * 2;
      if padded(i * 4 + j) = '1' then
        nibble := nibble + 1;
      elsif padded(i * 4 + j) /= '0' then
        known := false;
      end if;
    end loop;
    if known then
      result(len - i) := digits(nibble + 1);
    else
      result(len - i) := 'X';
    end if;
  end loop;
  return result;
end function;
";

fn push_block(out: &mut String, block: &str, indent: &str) {
    for line in block.lines() {
        out.push_str(indent);
        out.push_str(line);
        out.push('\n');
    }
}

/// Emits the testbench entity `<entity>_tb` for a plan.
pub fn emit_testbench(netlist: &Netlist, plan: &TestbenchPlan) -> Result<String, TbError> {
    check_plan_shape(plan, netlist)?;
    check_entity_name(&plan.entity_name)?;
    let (n, k, w) = (plan.width_a, plan.width_b, plan.width_a + plan.width_b);
    let integer_mode = w <= INTEGER_REPORT_MAX_BITS;
    let pipelined = matches!(plan.timing, Timing::Pipelined { .. });
    let entity = &plan.entity_name;
    let tb = format!("{entity}_tb");
    let ind = "  ";
    let ind2 = "    ";

    let mut out = String::new();
    let o = &mut out;
    o.push_str("library ieee;\nuse ieee.std_logic_1164.all;\n\n");
    let _ = writeln!(o, "entity {tb} is\nend entity {tb};\n");
    let _ = writeln!(o, "architecture behavior of {tb} is");
    let _ = writeln!(o, "{ind}constant waittime : integer := {};", plan.timing.wait_ns());
    if pipelined {
        let _ = writeln!(o, "{ind}signal clk : std_logic := '0';");
        let _ = writeln!(o, "{ind}signal done : boolean := false;");
    }
    let _ = writeln!(o, "{ind}signal x : std_logic_vector({} downto 0) := (others => '0');", n - 1);
    let _ = writeln!(o, "{ind}signal y : std_logic_vector({} downto 0) := (others => '0');", k - 1);
    let _ = writeln!(o, "{ind}signal p : std_logic_vector({} downto 0);\n", w - 1);
    if integer_mode {
        push_block(o, VEC2INT, ind);
    } else {
        push_block(o, VEC2HEX, ind);
    }
    let _ = writeln!(o, "begin");
    let clk_map = if pipelined { "clk => clk, " } else { "" };
    let _ = writeln!(o, "{ind}uut : entity work.{entity} port map ({clk_map}x => x, y => y, p => p);\n");

    if let Timing::Pipelined { clock_period_ns, .. } = plan.timing {
        let half = clock_period_ns / 2;
        let _ = writeln!(o, "{ind}clock : process");
        let _ = writeln!(o, "{ind}begin");
        let _ = writeln!(o, "{ind2}if done then\n{ind2}{ind}wait;\n{ind2}end if;");
        let _ = writeln!(o, "{ind2}clk <= '0';\n{ind2}wait for {half} ns;");
        let _ = writeln!(o, "{ind2}clk <= '1';\n{ind2}wait for {} ns;", clock_period_ns - half);
        let _ = writeln!(o, "{ind}end process;\n");
    }

    let _ = writeln!(o, "{ind}stimulus : process");
    let _ = writeln!(o, "{ind}begin");
    for v in &plan.vectors {
        let _ = writeln!(o, "{ind2}-- input vector: {}", v.a.value());
        let _ = writeln!(o, "{ind2}x <= \"{}\" after {INPUT_DELAY_NS} ns;", v.a.to_bit_string());
        let _ = writeln!(o, "{ind2}-- input vector: {}", v.b.value());
        let _ = writeln!(o, "{ind2}y <= \"{}\" after {INPUT_DELAY_NS} ns;", v.b.to_bit_string());
        let _ = writeln!(o, "{ind2}wait for waittime * 1 ns;");
        let _ = writeln!(o, "{ind2}-- output: {}", v.expected);
        let (check, got, expected, inputs) = if integer_mode {
            (
                format!("vec2int(p) = {}", v.expected),
                "integer'image(vec2int(p))".to_string(),
                format!("integer'image({})", v.expected),
                format!("{}, {}", v.a.value(), v.b.value()),
            )
        } else {
            let bits = OperandValue::new(v.expected.clone(), w).expect("product fits n+k bits").to_bit_string();
            (
                format!("p = \"{bits}\""),
                "vec2hex(p)".to_string(),
                format!("\"{}\"", hex(&v.expected, w)),
                format!("{}, {}", hex(v.a.value(), n), hex(v.b.value(), k)),
            )
        };
        let _ = writeln!(o, "{ind2}assert ({check})");
        let _ = writeln!(
            o,
            "{ind2}{ind}report \"TESTBENCH Output: \" & {got} & \" Expected: \" & {expected} & \" Inputs: {inputs}\""
        );
        let _ = writeln!(o, "{ind2}{ind}severity error;");
        let negated = check.replacen(" = ", " /= ", 1);
        let _ = writeln!(o, "{ind2}assert ({negated})");
        let _ = writeln!(o, "{ind2}{ind}report \"TESTBENCH OK\" severity note;");
    }
    if pipelined {
        let _ = writeln!(o, "{ind2}done <= true;");
    }
    let _ = writeln!(o, "{ind2}wait;");
    let _ = writeln!(o, "{ind}end process;");
    let _ = writeln!(o, "end architecture behavior;");
    Ok(out)
}
