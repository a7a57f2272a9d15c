//! Command-line front end: generate, verify, emit.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::metrics::{compute_metrics, reference_row, render_json};
use crate::mulgen::{generate_with_limit, GenError, GeneratorConfig, DEFAULT_MAX_WIDTH, MAX_WIDTH_ENV};
use crate::netlist::validate;
use crate::sim::{verify_exhaustive, verify_random, SimError, EXHAUSTIVE_MAX_BITS};
use crate::tbgen::{emit_testbench, generate_vectors, plan_testbench, self_check_plan, TbError};
use crate::vhdl::{check_entity_name, emit_vhdl, EmitterOptions};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TESTS: usize = 100;
/// `auto` verification is exhaustive up to this many input bits.
pub const AUTO_EXHAUSTIVE_BITS: usize = 16;
pub const AUTO_RANDOM_VECTORS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VerifyMode {
    Off,
    Random,
    Exhaustive,
    Auto,
}

/// Generate a carry-save array multiplier as structural VHDL plus a self-checking testbench.
#[derive(Clone, Debug, Parser)]
#[command(name = "mulgen", version)]
pub struct CliRequest {
    /// Width of operand x in bits.
    #[arg(long)]
    pub width_a: usize,
    /// Width of operand y in bits.
    #[arg(long)]
    pub width_b: usize,
    /// Insert pipeline registers.
    #[arg(long)]
    pub pipeline: bool,
    /// Number of random testbench vectors.
    #[arg(long, default_value_t = DEFAULT_TESTS)]
    pub tests: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = VerifyMode::Auto)]
    pub verify: VerifyMode,
    /// Override the default `mul_<n>x<k>[_p]` entity name.
    #[arg(long)]
    pub entity_name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Validation = 2,
    Verification = 3,
    Io = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

struct Failure(ExitStatus, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(ExitStatus::Usage, msg.into())
}

fn max_width_from_env() -> Result<usize, Failure> {
    match std::env::var(MAX_WIDTH_ENV) {
        Err(_) => Ok(DEFAULT_MAX_WIDTH),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| usage(format!("{MAX_WIDTH_ENV} must be a positive integer, got `{v}`"))),
    }
}

/// Output file paths for a request, in write order.
pub fn output_paths(out_dir: &Path, entity: &str) -> [PathBuf; 3] {
    [
        out_dir.join(format!("{entity}.vhd")),
        out_dir.join(format!("{entity}_tb.vhd")),
        out_dir.join(format!("{entity}_metrics.json")),
    ]
}

/// Runs one request. Progress goes to `out`, failures to `err`. Nothing is
/// written to disk unless every check passed.
pub fn run(req: &CliRequest, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    match execute(req, out) {
        Ok(()) => ExitStatus::Success,
        Err(Failure(status, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            status
        }
    }
}

fn execute(req: &CliRequest, out: &mut dyn Write) -> Result<(), Failure> {
    let max_width = max_width_from_env()?;
    if req.width_a == 0 || req.width_b == 0 {
        return Err(usage("operand widths must be at least 1"));
    }
    let cfg = GeneratorConfig::new(req.width_a, req.width_b, req.pipeline);
    let entity = req.entity_name.clone().unwrap_or_else(|| cfg.entity_name());
    check_entity_name(&entity).map_err(|e| usage(e.to_string()))?;
    let (n, k) = (cfg.width_a, cfg.width_b);
    if req.verify == VerifyMode::Exhaustive && n + k > EXHAUSTIVE_MAX_BITS {
        return Err(usage(format!("exhaustive verification supports at most {EXHAUSTIVE_MAX_BITS} input bits")));
    }
    let mut say = |line: String| {
        let _ = writeln!(out, "{line}");
    };

    let started = Instant::now();
    let generated = generate_with_limit(&cfg, max_width).map_err(|e| match e {
        GenError::InvalidWidth { .. } | GenError::Capacity { .. } => usage(e.to_string()),
        other => Failure(ExitStatus::Validation, other.to_string()),
    })?;
    let generation_time_ms = started.elapsed().as_secs_f64() * 1000.0;
    let netlist = &generated.netlist;
    say(format!(
        "generated {entity}: {} primitives, {} signals in {generation_time_ms:.1} ms",
        netlist.primitives().len(),
        netlist.signal_count()
    ));

    let report = validate(netlist);
    if report.has_errors() {
        return Err(Failure(ExitStatus::Validation, format!("netlist failed validation:\n{report}")));
    }
    for w in report.warnings() {
        say(format!("warning: {w}"));
    }

    let verification = match req.verify {
        VerifyMode::Off => None,
        VerifyMode::Exhaustive => Some(verify_exhaustive(netlist)),
        VerifyMode::Random => Some(verify_random(netlist, req.tests, req.seed)),
        VerifyMode::Auto if n + k <= AUTO_EXHAUSTIVE_BITS => Some(verify_exhaustive(netlist)),
        VerifyMode::Auto => Some(verify_random(netlist, AUTO_RANDOM_VECTORS, req.seed)),
    };
    match verification {
        None => say("verification: off".to_string()),
        Some(Err(e)) => return Err(sim_failure(e)),
        Some(Ok(r)) if !r.passed => return Err(Failure(ExitStatus::Verification, r.to_string())),
        Some(Ok(r)) => say(r.to_string()),
    }

    let vectors = generate_vectors(&cfg, req.tests, req.seed);
    let plan = plan_testbench(netlist, &entity, vectors, req.seed).map_err(tb_failure)?;
    self_check_plan(&plan, netlist).map_err(tb_failure)?;
    let options = EmitterOptions::for_netlist(netlist).with_entity_name(entity.clone());
    let design = emit_vhdl(netlist, &options).map_err(|e| Failure(ExitStatus::Validation, e.to_string()))?;
    let testbench = emit_testbench(netlist, &plan).map_err(tb_failure)?;
    let metrics = compute_metrics(netlist, &generated.annotations, generation_time_ms)
        .map_err(|e| Failure(ExitStatus::Validation, e.to_string()))?;
    let json = render_json(&metrics);

    let paths = output_paths(&req.out_dir, &entity);
    write_outputs(&req.out_dir, &paths, [&design, &testbench, &json])
        .map_err(|e| Failure(ExitStatus::Io, format!("writing to {}: {e}", req.out_dir.display())))?;
    for p in &paths {
        say(format!("wrote {}", p.display()));
    }
    say(format!(
        "and2 {} fa {} ha {} dff {} stages {} latency {}",
        metrics.and_gates, metrics.full_adders, metrics.half_adders, metrics.dffs, metrics.reduction_stages, metrics.latency
    ));
    if let Some((signals, delay, adders, dffs)) = reference_row(n, k) {
        say(format!("published reference for {n}x{k}: signals {signals}, delay {delay}, adders {adders}, dff {dffs}"));
    }
    Ok(())
}

fn write_outputs(dir: &Path, paths: &[PathBuf; 3], texts: [&String; 3]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (path, text) in paths.iter().zip(texts) {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::TooWideForExhaustive { .. } => usage(e.to_string()),
        other => Failure(ExitStatus::Validation, other.to_string()),
    }
}

fn tb_failure(e: TbError) -> Failure {
    match e {
        TbError::SelfCheck { .. } | TbError::Sim(_) => Failure(ExitStatus::Verification, e.to_string()),
        TbError::Name(_) => usage(e.to_string()),
        other => Failure(ExitStatus::Validation, other.to_string()),
    }
}
