//! Structural VHDL emission.

use std::fmt::Write as _;

use thiserror::Error;

use crate::netlist::{validate, Netlist, PrimitiveKind, SignalKind, SignalRef, ValidationReport};

/// VHDL-2008 reserved words.
pub const RESERVED_WORDS: &[&str] = &[
    "abs", "access", "after", "alias", "all", "and", "architecture", "array", "assert", "assume",
    "assume_guarantee", "attribute", "begin", "block", "body", "buffer", "bus", "case", "component",
    "configuration", "constant", "context", "cover", "default", "disconnect", "downto", "else",
    "elsif", "end", "entity", "exit", "fairness", "file", "for", "force", "function", "generate",
    "generic", "group", "guarded", "if", "impure", "in", "inertial", "inout", "is", "label",
    "library", "linkage", "literal", "loop", "map", "mod", "nand", "new", "next", "nor", "not",
    "null", "of", "on", "open", "or", "others", "out", "package", "parameter", "port", "postponed",
    "procedure", "process", "property", "protected", "pure", "range", "record", "register",
    "reject", "release", "rem", "report", "restrict", "restrict_guarantee", "return", "rol", "ror",
    "select", "sequence", "severity", "shared", "signal", "sla", "sll", "sra", "srl", "strong",
    "subtype", "then", "to", "transport", "type", "unaffected", "units", "until", "use",
    "variable", "vmode", "vprop", "vunit", "wait", "when", "while", "with", "xnor", "xor",
];

/// Identifiers the emitted design and testbench use themselves.
const GENERATED_NAMES: &[&str] =
    &["x", "y", "p", "clk", "done", "waittime", "vec2int", "vec2hex", "uut", "stimulus", "clock", "behavior", "structural", "ieee", "std", "work"];

#[derive(Debug, Error)]
pub enum VhdlError {
    #[error("netlist failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("`{0}` is not a legal VHDL basic identifier")]
    IllegalIdentifier(String),
    #[error("`{0}` is a VHDL reserved word")]
    ReservedWord(String),
    #[error("`{0}` collides with a generated identifier")]
    Collision(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmitterOptions {
    pub entity_name: String,
    pub indent: usize,
}

impl EmitterOptions {
    /// Default options for a netlist: entity `mul_<n>x<k>[_p]`, two-space indent.
    pub fn for_netlist(netlist: &Netlist) -> Self {
        let mut entity_name = format!("mul_{}x{}", netlist.width_a(), netlist.width_b());
        if netlist.is_pipelined() {
            entity_name.push_str("_p");
        }
        EmitterOptions { entity_name, indent: 2 }
    }

    pub fn with_entity_name(mut self, name: impl Into<String>) -> Self {
        self.entity_name = name.into();
        self
    }

    pub fn check(&self) -> Result<(), VhdlError> {
        check_entity_name(&self.entity_name)
    }
}

fn is_basic_identifier(name: &str) -> bool {
    let bytes = name.as_bytes();
    match bytes.first() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    bytes.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'_') && !name.ends_with('_') && !name.contains("__")
}

fn looks_generated(lower: &str) -> bool {
    let numbered = |prefix: &str| {
        lower
            .strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
    };
    GENERATED_NAMES.contains(&lower) || numbered("s") || numbered("reg_s")
}

/// Accepts names usable as the design entity (and, with `_tb` appended, its testbench).
pub fn check_entity_name(name: &str) -> Result<(), VhdlError> {
    if !is_basic_identifier(name) {
        return Err(VhdlError::IllegalIdentifier(name.to_string()));
    }
    let lower = name.to_ascii_lowercase();
    if RESERVED_WORDS.contains(&lower.as_str()) {
        return Err(VhdlError::ReservedWord(name.to_string()));
    }
    if looks_generated(&lower) {
        return Err(VhdlError::Collision(name.to_string()));
    }
    Ok(())
}

/// VHDL name of every signal, indexed by `SignalRef`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalNames {
    names: Vec<String>,
    internal: Vec<SignalRef>,
}

impl SignalNames {
    pub fn get(&self, signal: SignalRef) -> &str {
        &self.names[signal.index()]
    }

    /// Signals declared inside the architecture, in declaration order.
    pub fn internal(&self) -> &[SignalRef] {
        &self.internal
    }

    pub fn internal_names(&self) -> Vec<&str> {
        self.internal.iter().map(|&s| self.get(s)).collect()
    }
}

/// Ports map to `x(i)`, `y(i)`, `p(i)` and `clk`; the rest are numbered `s<ordinal>`
/// in primitive insertion order.
pub fn name_signals(netlist: &Netlist) -> SignalNames {
    let mut names: Vec<Option<String>> = vec![None; netlist.signal_count()];
    for s in netlist.signals() {
        names[s.index()] = match netlist.kind(s) {
            SignalKind::InputPortBit { port, bit } => {
                let v = match port {
                    crate::netlist::InputPort::A => "x",
                    crate::netlist::InputPort::B => "y",
                };
                Some(format!("{v}({bit})"))
            }
            SignalKind::OutputPortBit { bit } => Some(format!("p({bit})")),
            SignalKind::Clock => Some("clk".to_string()),
            SignalKind::Internal => None,
        };
    }
    let mut internal = Vec::new();
    let mut claim = |s: SignalRef, names: &mut Vec<Option<String>>| {
        if names[s.index()].is_none() {
            names[s.index()] = Some(format!("s{}", internal.len()));
            internal.push(s);
        }
    };
    for p in netlist.primitives() {
        for &o in &p.outputs {
            claim(o, &mut names);
        }
    }
    // Undriven internal signals only occur in invalid netlists; name them anyway.
    for s in netlist.signals() {
        claim(s, &mut names);
    }
    SignalNames { names: names.into_iter().map(|n| n.expect("every signal named")).collect(), internal }
}

/// Emits one entity/architecture pair for a valid netlist.
pub fn emit_vhdl(netlist: &Netlist, options: &EmitterOptions) -> Result<String, VhdlError> {
    let report = validate(netlist);
    if report.has_errors() {
        return Err(VhdlError::Invalid(report));
    }
    options.check()?;
    let names = name_signals(netlist);
    let ind = " ".repeat(options.indent);
    let entity = &options.entity_name;
    let mut registered = vec![false; netlist.signal_count()];
    for p in netlist.primitives().iter().filter(|p| p.kind == PrimitiveKind::Dff) {
        registered[p.outputs[0].index()] = true;
    }

    let mut out = String::new();
    let w = &mut out;
    w.push_str("library ieee;\nuse ieee.std_logic_1164.all;\n\n");
    let _ = writeln!(w, "entity {entity} is");
    let _ = writeln!(w, "{ind}port (");
    if netlist.is_pipelined() {
        let _ = writeln!(w, "{ind}{ind}clk : in std_logic;");
    }
    let _ = writeln!(w, "{ind}{ind}x : in std_logic_vector({} downto 0);", netlist.width_a() - 1);
    let _ = writeln!(w, "{ind}{ind}y : in std_logic_vector({} downto 0);", netlist.width_b() - 1);
    let _ = writeln!(w, "{ind}{ind}p : out std_logic_vector({} downto 0)", netlist.output_width() - 1);
    let _ = writeln!(w, "{ind});");
    let _ = writeln!(w, "end entity {entity};\n");

    let _ = writeln!(w, "architecture structural of {entity} is");
    for &s in names.internal() {
        let init = if registered[s.index()] { " := '0'" } else { "" };
        let _ = writeln!(w, "{ind}signal {} : std_logic{init};", names.get(s));
    }
    let _ = writeln!(w, "begin");
    for p in netlist.primitives() {
        let i: Vec<&str> = p.inputs.iter().map(|&s| names.get(s)).collect();
        let o: Vec<&str> = p.outputs.iter().map(|&s| names.get(s)).collect();
        match p.kind {
            PrimitiveKind::And2 => {
                let _ = writeln!(w, "{ind}{} <= {} and {};", o[0], i[0], i[1]);
            }
            PrimitiveKind::HalfAdder => {
                let _ = writeln!(w, "{ind}{} <= {} xor {};", o[0], i[0], i[1]);
                let _ = writeln!(w, "{ind}{} <= {} and {};", o[1], i[0], i[1]);
            }
            PrimitiveKind::FullAdder => {
                let (a, b, c) = (i[0], i[1], i[2]);
                let _ = writeln!(w, "{ind}{} <= {a} xor {b} xor {c};", o[0]);
                let _ = writeln!(w, "{ind}{} <= ({a} and {b}) or ({a} and {c}) or ({b} and {c});", o[1]);
            }
            PrimitiveKind::Const0 => {
                let _ = writeln!(w, "{ind}{} <= '0';", o[0]);
            }
            PrimitiveKind::Dff => {
                let d = ind.repeat(2);
                let _ = writeln!(w, "{ind}reg_{} : process (clk)", o[0]);
                let _ = writeln!(w, "{ind}begin");
                let _ = writeln!(w, "{d}if rising_edge(clk) then");
                let _ = writeln!(w, "{d}{ind}{} <= {};", o[0], i[0]);
                let _ = writeln!(w, "{d}end if;");
                let _ = writeln!(w, "{ind}end process;");
            }
        }
    }
    for (bit, &s) in netlist.output_p().iter().enumerate() {
        if netlist.kind(s) != (SignalKind::OutputPortBit { bit }) {
            let _ = writeln!(w, "{ind}p({bit}) <= {};", names.get(s));
        }
    }
    let _ = writeln!(w, "end architecture structural;");
    Ok(out)
}
