use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sapphire_core::isa::{self, Program, BINARY_MAGIC};
use sapphire_core::machine::{MachineError, MachineState};
use sapphire_core::nttcore::{gen_constants, LatticeConfig};
use sapphire_core::protocols::ProtocolError;
use sapphire_core::sampler::CdtTable;

mod demo;
mod slots;
mod seed;

use seed::Seed;

#[derive(Parser)]
#[command(name = "sapphire-emu", version, about = "Emulator for the Sapphire lattice-crypto processor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a source listing into an SPH1 binary.
    Asm {
        source: PathBuf,
        /// Defaults to the source path with a `.bin` extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the listing of an SPH1 binary (or re-print a source file).
    Disasm { program: PathBuf },
    /// Execute a program.
    Run(RunArgs),
    /// SHA-3/SHAKE vectors and modular-reduction sweeps.
    Kat {
        /// Random inputs per reduction routine, on top of the edge set.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        sweep_seed: u64,
    },
    /// Protocol demos checked against host arithmetic.
    Demo {
        #[command(subcommand)]
        which: demo::DemoCommand,
    },
    /// Write the twiddle and psi tables for `(n, q)`.
    GenConstants {
        n: usize,
        q: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Args)]
struct RunArgs {
    /// SPH1 binary or assembly source.
    program: PathBuf,
    /// 64 hex digits or `os`; expanded with SHAKE-256 into `r0 || r1`.
    #[arg(long, env = "SAPPHIRE_EMU_SEED")]
    seed: Option<Seed>,
    /// Stop once this many cycles have elapsed.
    #[arg(long)]
    cycles: Option<u64>,
    /// Print every instruction and every cache access.
    #[arg(long)]
    trace: bool,
    /// Fault when a gated unit is used instead of only counting it.
    #[arg(long)]
    strict_gating: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Slot file loaded before the run (`n=`, `q=`, `slot.<id>=<hex>`).
    #[arg(long)]
    data_in: Option<PathBuf>,
    /// Slot file written after the run; all slots unless `--dump` is given.
    #[arg(long)]
    data_out: Option<PathBuf>,
    /// Slots to export, comma separated.
    #[arg(long, value_delimiter = ',')]
    dump: Vec<usize>,
    /// CDT table file (precision, support bound, entries).
    #[arg(long)]
    cdt_table: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_fault(&e) { 3 } else { 2 })
        }
    }
}

fn is_fault(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<MachineError>(), Some(MachineError::Fault { .. }))
            || matches!(c.downcast_ref::<ProtocolError>(), Some(ProtocolError::Machine(MachineError::Fault { .. })))
    })
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Asm { source, output } => cmd_asm(&source, output),
        Command::Disasm { program } => {
            print!("{}", isa::disassemble(&load_program(&program)?));
            Ok(true)
        }
        Command::Run(args) => cmd_run(args),
        Command::Kat { samples, sweep_seed } => cmd_kat(samples, sweep_seed),
        Command::Demo { which } => demo::run(which),
        Command::GenConstants { n, q, output } => cmd_gen_constants(n, q, output),
    }
}

fn assemble_file(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    isa::assemble(&text).with_context(|| path.display().to_string())
}

/// Binary when the file starts with the SPH1 magic, source otherwise.
fn load_program(path: &Path) -> Result<Program> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(BINARY_MAGIC) {
        let words = isa::read_binary(&bytes).with_context(|| path.display().to_string())?;
        return isa::decode(&words).with_context(|| path.display().to_string());
    }
    assemble_file(path)
}

fn cmd_asm(source: &Path, output: Option<PathBuf>) -> Result<bool> {
    let program = assemble_file(source)?;
    let output = output.unwrap_or_else(|| source.with_extension("bin"));
    let bytes = isa::write_binary(&isa::encode(&program));
    fs::write(&output, bytes).with_context(|| format!("writing {}", output.display()))?;
    println!("{} instructions", program.len());
    Ok(true)
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let program = load_program(&args.program)?;
    let mut m = MachineState::new();
    m.set_strict_gating(args.strict_gating);
    m.set_tracing(args.trace);
    m.set_access_recording(args.trace);
    let (r0, r1) = args.seed.unwrap_or_default().registers()?;
    m.write_seed(isa::SeedReg::R0, r0);
    m.write_seed(isa::SeedReg::R1, r1);
    if let Some(path) = &args.cdt_table {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        m.load_cdt(&CdtTable::parse(&text).with_context(|| path.display().to_string())?);
    }
    if let Some(path) = &args.data_in {
        slots::load(&mut m, path)?;
    }
    m.load_program(program)?;

    let result = m.run(args.cycles);
    if args.trace {
        for ev in m.trace() {
            println!("{ev}");
        }
        println!("# access schedule: cycle bank sram row R|W");
        for a in m.take_access_log() {
            println!("{a}");
        }
    }
    let report = m.cycle_report().clone();
    match args.format {
        Format::Text => println!("{report}"),
        Format::Kv => {
            print!("{}", report.to_kv());
            println!("pc={}", m.pc());
        }
    }
    if let Err(e) = result {
        return Err(anyhow::Error::new(e).context(format!("run stopped after {} cycles", m.cycles())));
    }

    let dump = if args.dump.is_empty() && args.data_out.is_some() {
        (0..m.slot_count()).collect()
    } else {
        args.dump
    };
    if !dump.is_empty() {
        let text = slots::export(&m, &dump)?;
        match &args.data_out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
            None => print!("{text}"),
        }
    }
    Ok(true)
}

fn cmd_kat(samples: usize, sweep_seed: u64) -> Result<bool> {
    let mut ok = true;
    let mut outcomes = sapphire_core::kat::run_fips202()?;
    outcomes.extend(sapphire_core::kat::run_reduction_sweeps(samples, sweep_seed));
    for o in &outcomes {
        let status = if o.passed() { "pass" } else { "FAIL" };
        println!("{status}  {:<32} {:>8} cases", o.name, o.total);
        for f in &o.failures {
            println!("      {f}");
        }
        ok &= o.passed();
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("{} suites, {failed} failed", outcomes.len());
    Ok(ok)
}

fn cmd_gen_constants(n: usize, q: u32, output: Option<PathBuf>) -> Result<bool> {
    let cfg = LatticeConfig::new(n, q)?;
    if !cfg.supports_ntt() {
        bail!("q = {q} has no primitive 2n-th root of unity for n = {n}");
    }
    let consts = gen_constants(&cfg)?;
    consts.validate()?;
    let text = consts.export();
    match output {
        Some(path) => {
            fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            println!("n = {n}, q = {q}, psi = {}, omega = {}: wrote {}", consts.psi(), consts.omega(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(true)
}
