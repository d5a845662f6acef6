//! Execution engine: fetch/execute over the machine state, cycle accounting
//! per functional unit, clock-gate bookkeeping and the host data interface.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::isa::{
    CompareReg, Counter, CounterArg, Gates, IndexArg, Instruction, PolyOp, Program, ProgramError, RegOp, Ring,
    SampleArgs, SamplerKind, SeedReg,
};
use crate::keccak::{DigestMode, KeccakState, PERMUTATION_CYCLES};
use crate::nttcore::{self, bit_reverse, LatticeConfig, NttConstants, NttError};
use crate::polycache::{Access, CacheError, PolynomialCache, SlotId};
use crate::sampler::{self, centered, CdtTable, Prng, RejectionPlan, SamplerError, CDT_MAX_ENTRIES};

const MASK24: u32 = (1 << 24) - 1;
/// Dimension the cache holds before the first `config`.
pub const DEFAULT_DIMENSION: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    /// Coefficient-wise datapath: poly_op, psi scaling, copies, reductions.
    Alu,
    /// Butterfly array during transforms.
    Ntt,
    Keccak,
    Sampler,
    /// Scalar registers, configuration and branches.
    Control,
}

impl Unit {
    pub const ALL: [Unit; 5] = [Unit::Alu, Unit::Ntt, Unit::Keccak, Unit::Sampler, Unit::Control];

    pub fn name(self) -> &'static str {
        match self {
            Unit::Alu => "alu",
            Unit::Ntt => "ntt",
            Unit::Keccak => "keccak",
            Unit::Sampler => "sampler",
            Unit::Control => "control",
        }
    }

    fn gated(self, gates: Gates) -> bool {
        match self {
            Unit::Ntt => gates.ntt,
            Unit::Keccak => gates.keccak,
            Unit::Sampler => gates.sampler,
            Unit::Alu | Unit::Control => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultKind {
    #[error("no `config` has been executed")]
    NotConfigured,
    #[error("q = {q} has no NTT constants for n = {n}")]
    NoTransform { n: usize, q: u32 },
    #[error("{unit} clock is gated")]
    Gated { unit: &'static str },
    #[error("branch target {target} is past the end ({len})")]
    BadTarget { target: usize, len: usize },
    #[error("coefficient index {index} out of range for n = {n}")]
    Index { index: usize, n: usize },
    #[error("CDT RAM does not hold a valid table for r = {r}, s = {s}: {reason}")]
    Cdt { r: u8, s: u8, reason: String },
    #[error("SHA-3 state is absorbing for {active:?}, not {requested:?}")]
    Sha3Mode { active: DigestMode, requested: DigestMode },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Ntt(#[from] NttError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error(transparent)]
    Load(#[from] ProgramError),
    #[error("fault at instruction {pc}: {kind}")]
    Fault { pc: usize, kind: FaultKind },
    #[error("seed read-back requires debug mode")]
    SeedReadback,
    #[error("host access: {0}")]
    Host(String),
}

impl From<CacheError> for MachineError {
    fn from(e: CacheError) -> Self {
        MachineError::Host(e.to_string())
    }
}

/// Cycles charged by one instruction, split by unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Charge {
    by_unit: [u64; 5],
}

impl Charge {
    fn on(unit: Unit, cycles: u64) -> Self {
        let mut c = Self::default();
        c.by_unit[unit as usize] = cycles;
        c
    }

    fn plus(mut self, unit: Unit, cycles: u64) -> Self {
        self.by_unit[unit as usize] += cycles;
        self
    }

    pub fn get(&self, unit: Unit) -> u64 {
        self.by_unit[unit as usize]
    }

    pub fn total(&self) -> u64 {
        self.by_unit.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstructionStats {
    pub count: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub total: u64,
    /// Cycles attributed to units whose clock was running.
    pub per_unit: BTreeMap<Unit, u64>,
    /// Cycles spent in units while gated (counted in `total` only).
    pub gated: u64,
    pub per_instruction: BTreeMap<&'static str, InstructionStats>,
    pub instructions: u64,
    pub halted: bool,
}

impl CycleReport {
    pub fn unit(&self, unit: Unit) -> u64 {
        self.per_unit.get(&unit).copied().unwrap_or(0)
    }

    fn record(&mut self, mnemonic: &'static str, charge: Charge, gates: Gates) {
        let total = charge.total();
        self.total += total;
        self.instructions += 1;
        for unit in Unit::ALL {
            let c = charge.get(unit);
            if unit.gated(gates) {
                self.gated += c;
            } else {
                *self.per_unit.entry(unit).or_default() += c;
            }
        }
        let entry = self.per_instruction.entry(mnemonic).or_default();
        entry.count += 1;
        entry.cycles += total;
    }

    /// Flat `key=value` document, one metric per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cycles.total={}", self.total);
        for unit in Unit::ALL {
            let _ = writeln!(out, "cycles.unit.{}={}", unit.name(), self.unit(unit));
        }
        let _ = writeln!(out, "cycles.gated={}", self.gated);
        let _ = writeln!(out, "instructions={}", self.instructions);
        for (name, s) in &self.per_instruction {
            let _ = writeln!(out, "op.{name}.count={}", s.count);
            let _ = writeln!(out, "op.{name}.cycles={}", s.cycles);
        }
        let _ = writeln!(out, "halted={}", self.halted);
        out
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total cycles   {:>12}", self.total)?;
        for unit in Unit::ALL {
            writeln!(f, "  {:<12} {:>12}", unit.name(), self.unit(unit))?;
        }
        writeln!(f, "  {:<12} {:>12}", "(gated)", self.gated)?;
        writeln!(f, "instructions   {:>12}", self.instructions)?;
        for (name, s) in &self.per_instruction {
            writeln!(f, "  {name:<16} x{:<8} {:>12}", s.count, s.cycles)?;
        }
        write!(f, "{}", if self.halted { "halted" } else { "stopped at cycle limit" })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub pc: usize,
    pub instruction: Instruction,
    pub start_cycle: u64,
    pub charge: Charge,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = crate::isa::render(&self.instruction, &|i| format!("L{i}"));
        write!(f, "{:>10} {:>4}  {:<72} +{}", self.start_cycle, self.pc, text, self.charge.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Executed { pc: usize, cycles: u64 },
    Halted,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    cache: PolynomialCache,
    config: Option<LatticeConfig>,
    consts: Option<NttConstants>,
    r0: [u8; 32],
    r1: [u8; 32],
    c0: u16,
    c1: u16,
    reg: u32,
    tmp: u32,
    flag: i8,
    cdt_ram: [u32; CDT_MAX_ENTRIES],
    sha3: Option<(DigestMode, KeccakState)>,
    program: Program,
    pc: usize,
    jump: Option<usize>,
    cycles: u64,
    gates: Gates,
    halted: bool,
    strict_gating: bool,
    debug: bool,
    tracing: bool,
    trace: Vec<TraceEvent>,
    report: CycleReport,
}

impl Default for MachineState {
    fn default() -> Self {
        Self::new()
    }
}

fn residue(v: i64, q: u32) -> u32 {
    v.rem_euclid(q as i64) as u32
}

impl MachineState {
    pub fn new() -> Self {
        Self {
            cache: PolynomialCache::new(DEFAULT_DIMENSION).expect("default dimension is valid"),
            config: None,
            consts: None,
            r0: [0; 32],
            r1: [0; 32],
            c0: 0,
            c1: 0,
            reg: 0,
            tmp: 0,
            flag: 0,
            cdt_ram: [0; CDT_MAX_ENTRIES],
            sha3: None,
            program: Program::default(),
            pc: 0,
            jump: None,
            cycles: 0,
            gates: Gates::OPEN,
            halted: true,
            strict_gating: false,
            debug: false,
            tracing: false,
            trace: Vec::new(),
            report: CycleReport::default(),
        }
    }

    pub fn load_program(&mut self, program: Program) -> Result<(), MachineError> {
        program.validate()?;
        self.program = program;
        self.reset();
        Ok(())
    }

    /// Rewinds to the first instruction and clears the cycle counter, report
    /// and trace. Registers, seeds and cache contents are kept.
    pub fn reset(&mut self) {
        self.pc = 0;
        self.cycles = 0;
        self.halted = self.program.is_empty();
        self.report = CycleReport { halted: self.halted, ..CycleReport::default() };
        self.trace.clear();
        self.cache.set_clock(0);
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Host-side equivalent of the `config` instruction, free of cycles.
    pub fn configure(&mut self, n: usize, q: u32) -> Result<(), MachineError> {
        self.apply_config(n, q).map_err(|e| MachineError::Host(e.to_string()))
    }

    fn apply_config(&mut self, n: usize, q: u32) -> Result<(), FaultKind> {
        let cfg = LatticeConfig::new(n, q)?;
        if self.cache.n() == n {
            self.cache.normalize();
        } else {
            self.cache.configure(n)?;
        }
        self.consts = if cfg.supports_ntt() { Some(nttcore::gen_constants(&cfg)?) } else { None };
        self.config = Some(cfg);
        Ok(())
    }

    pub fn config(&self) -> Option<&LatticeConfig> {
        self.config.as_ref()
    }

    pub fn constants(&self) -> Option<&NttConstants> {
        self.consts.as_ref()
    }

    pub fn cache(&self) -> &PolynomialCache {
        &self.cache
    }

    pub fn slot_count(&self) -> usize {
        self.cache.slot_count()
    }

    pub fn write_slot(&mut self, slot: SlotId, coeffs: &[u32]) -> Result<(), MachineError> {
        if let Some(cfg) = &self.config {
            if let Some(&v) = coeffs.iter().find(|&&v| v >= cfg.q) {
                return Err(MachineError::Host(format!("coefficient {v} is not below q = {}", cfg.q)));
            }
        }
        Ok(self.cache.write_slot(slot, coeffs)?)
    }

    pub fn read_slot(&self, slot: SlotId) -> Result<Vec<u32>, MachineError> {
        Ok(self.cache.read_slot(slot)?)
    }

    pub fn write_seed(&mut self, which: SeedReg, seed: [u8; 32]) {
        *self.seed_mut(which) = seed;
    }

    /// Seeds are write-only on silicon; reading needs [`set_debug`](Self::set_debug).
    pub fn read_seed(&self, which: SeedReg) -> Result<[u8; 32], MachineError> {
        if !self.debug {
            return Err(MachineError::SeedReadback);
        }
        Ok(self.seed(which))
    }

    fn seed(&self, which: SeedReg) -> [u8; 32] {
        match which {
            SeedReg::R0 => self.r0,
            SeedReg::R1 => self.r1,
        }
    }

    fn seed_mut(&mut self, which: SeedReg) -> &mut [u8; 32] {
        match which {
            SeedReg::R0 => &mut self.r0,
            SeedReg::R1 => &mut self.r1,
        }
    }

    /// Loads a table into the CDT RAM; unused words are cleared.
    pub fn load_cdt(&mut self, table: &CdtTable) {
        self.cdt_ram = [0; CDT_MAX_ENTRIES];
        self.cdt_ram[..table.support()].copy_from_slice(table.entries());
    }

    pub fn set_debug(&mut self, on: bool) {
        self.debug = on;
    }

    pub fn set_strict_gating(&mut self, on: bool) {
        self.strict_gating = on;
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    /// Records every cache access (cycle, bank, SRAM, row, direction).
    pub fn set_access_recording(&mut self, on: bool) {
        self.cache.set_recording(on);
    }

    pub fn take_access_log(&mut self) -> Vec<Access> {
        self.cache.take_ledger()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn cycle_report(&self) -> &CycleReport {
        &self.report
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn counter(&self, c: Counter) -> u16 {
        match c {
            Counter::C0 => self.c0,
            Counter::C1 => self.c1,
        }
    }

    pub fn set_counter(&mut self, c: Counter, v: u16) {
        match c {
            Counter::C0 => self.c0 = v,
            Counter::C1 => self.c1 = v,
        }
    }

    pub fn reg(&self) -> u32 {
        self.reg
    }

    pub fn tmp(&self) -> u32 {
        self.tmp
    }

    pub fn flag(&self) -> i8 {
        self.flag
    }

    pub fn gates(&self) -> Gates {
        self.gates
    }

    pub fn step(&mut self) -> Result<StepEvent, MachineError> {
        if self.halted {
            return Ok(StepEvent::Halted);
        }
        let pc = self.pc;
        let ins = self.program.instructions[pc];
        self.cache.set_clock(self.cycles);
        let charge = self.execute(ins).map_err(|kind| MachineError::Fault { pc, kind })?;
        if self.tracing {
            self.trace.push(TraceEvent { pc, instruction: ins, start_cycle: self.cycles, charge });
        }
        // `clock_config` is accounted under the gates it installs.
        self.report.record(ins.mnemonic(), charge, self.gates);
        self.cycles += charge.total();
        self.pc = self.jump.take().unwrap_or(pc + 1);
        if self.pc >= self.program.len() {
            self.halted = true;
            self.report.halted = true;
        }
        Ok(StepEvent::Executed { pc, cycles: charge.total() })
    }

    /// Runs until halt or until at least `max_cycles` have elapsed.
    pub fn run(&mut self, max_cycles: Option<u64>) -> Result<CycleReport, MachineError> {
        while !self.halted {
            if max_cycles.is_some_and(|m| self.cycles >= m) {
                break;
            }
            self.step()?;
        }
        Ok(self.report.clone())
    }

    fn lattice(&self) -> Result<LatticeConfig, FaultKind> {
        self.config.ok_or(FaultKind::NotConfigured)
    }

    fn require(&self, unit: Unit) -> Result<(), FaultKind> {
        if self.strict_gating && unit.gated(self.gates) {
            return Err(FaultKind::Gated { unit: unit.name() });
        }
        Ok(())
    }

    fn slot(&self, poly: u8) -> Result<SlotId, FaultKind> {
        let slots = self.cache.slot_count();
        if poly as usize >= slots {
            return Err(CacheError::SlotOutOfRange { slot: poly as usize, slots }.into());
        }
        Ok(poly as usize)
    }

    fn index(&self, index: IndexArg) -> Result<usize, FaultKind> {
        let i = match index {
            IndexArg::Imm(v) => v as usize,
            IndexArg::Counter(c) => self.counter(c) as usize,
        };
        let n = self.lattice()?.n;
        if i >= n {
            return Err(FaultKind::Index { index: i, n });
        }
        Ok(i)
    }

    fn execute(&mut self, ins: Instruction) -> Result<Charge, FaultKind> {
        use Instruction::*;
        let one = Charge::on(Unit::Control, 1);
        Ok(match ins {
            Config { n, q } => {
                self.apply_config(n as usize, q)?;
                one
            }
            ClockConfig(g) => {
                self.gates = g;
                one
            }
            CounterSet { counter, value } => {
                self.set_counter(counter, value);
                one
            }
            CounterAdd { counter, value } => {
                self.set_counter(counter, self.counter(counter).wrapping_add(value));
                one
            }
            CounterSub { counter, value } => {
                self.set_counter(counter, self.counter(counter).wrapping_sub(value));
                one
            }
            RegSet { value } => {
                self.reg = value;
                one
            }
            RegFromTmp => {
                self.reg = self.tmp;
                one
            }
            TmpSet { value } => {
                self.tmp = value;
                one
            }
            TmpOp { op } => {
                self.tmp = reg_op(op, self.tmp, self.reg);
                one
            }
            MaxElems { poly } | SumElems { poly } => {
                let q = self.lattice()?.q;
                let values = self.sweep(self.slot(poly)?)?;
                let reduced = values.iter().map(|&v| v % q);
                self.reg = if matches!(ins, MaxElems { .. }) {
                    reduced.max().unwrap_or(0)
                } else {
                    (reduced.map(u64::from).sum::<u64>() % q as u64) as u32
                };
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            RegFromPoly { poly, index } => {
                let (slot, i) = (self.slot(poly)?, self.index(index)?);
                self.reg = self.cache.read_unchecked(slot, i)?;
                Charge::on(Unit::Alu, 1)
            }
            PolyFromReg { poly, index } => {
                let (slot, i) = (self.slot(poly)?, self.index(index)?);
                self.cache.write_unchecked(slot, i, self.reg)?;
                Charge::on(Unit::Alu, 1)
            }
            Transform { mode, dst, src } => {
                self.require(Unit::Ntt)?;
                let (src, dst) = (self.slot(src)?, self.slot(dst)?);
                self.transform_constants()?;
                let consts = self.consts.as_ref().expect("checked above");
                let cycles = nttcore::ntt(&mut self.cache, consts, mode, src, dst)?;
                Charge::on(Unit::Ntt, cycles)
            }
            MultPsi { poly } | MultPsiInv { poly } => {
                let slot = self.slot(poly)?;
                self.transform_constants()?;
                let consts = self.consts.as_ref().expect("checked above");
                let cycles = if matches!(ins, MultPsi { .. }) {
                    nttcore::mult_psi(&mut self.cache, consts, slot)?
                } else {
                    nttcore::mult_psi_inv(&mut self.cache, consts, slot)?
                };
                Charge::on(Unit::Alu, cycles)
            }
            Sample(args) => self.sample(args)?,
            Init { poly } => {
                let slot = self.slot(poly)?;
                let n = self.lattice()?.n;
                self.stream(slot, &vec![0; n])?;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            PolyCopy { dst, src } => {
                let (src, dst) = (self.slot(src)?, self.slot(dst)?);
                let values = self.sweep(src)?;
                self.stream(dst, &values)?;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            PolyOp { op, dst, src } => {
                let (src, dst) = (self.slot(src)?, self.slot(dst)?);
                self.poly_op(op, dst, src)?;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            ShiftPoly { ring, dst, src } => {
                let q = self.lattice()?.q;
                let (src, dst) = (self.slot(src)?, self.slot(dst)?);
                let mut values = self.sweep(src)?;
                values.rotate_right(1);
                if ring == Ring::Negacyclic {
                    values[0] = residue(-((values[0] % q) as i64), q);
                }
                self.stream(dst, &values)?;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            EqCheck { a, b } => {
                let (a, b) = (self.slot(a)?, self.slot(b)?);
                let equal = self.sweep(a)? == self.sweep(b)?;
                self.flag = equal as i8;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            InfNormCheck { poly, bound } => {
                let q = self.lattice()?.q;
                let values = self.sweep(self.slot(poly)?)?;
                let within = values.iter().all(|&v| centered(v % q, q).unsigned_abs() <= bound as u64);
                self.flag = within as i8;
                Charge::on(Unit::Alu, self.pass_cycles())
            }
            Compare { reg, value } => {
                let lhs = match reg {
                    CompareReg::Reg => self.reg,
                    CompareReg::Tmp => self.tmp,
                    CompareReg::C0 => self.c0 as u32,
                    CompareReg::C1 => self.c1 as u32,
                };
                self.flag = lhs.cmp(&value) as i8;
                one
            }
            Branch { equal, value, target } => {
                let target = target as usize;
                if target > self.program.len() {
                    return Err(FaultKind::BadTarget { target, len: self.program.len() });
                }
                if (self.flag == value) == equal {
                    self.jump = Some(target);
                }
                one
            }
            Sha3Init => {
                self.require(Unit::Keccak)?;
                self.sha3 = None;
                Charge::on(Unit::Keccak, 1)
            }
            Sha3AbsorbPoly { mode, poly } => {
                self.require(Unit::Keccak)?;
                let values = self.sweep(self.slot(poly)?)?;
                let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()[..3].to_vec()).collect();
                let perms = self.absorb(mode, &bytes)?;
                Charge::on(Unit::Keccak, values.len() as u64 + perms * PERMUTATION_CYCLES)
            }
            Sha3AbsorbSeed { mode, seed } => {
                self.require(Unit::Keccak)?;
                let bytes = self.seed(seed);
                let perms = self.absorb(mode, &bytes)?;
                Charge::on(Unit::Keccak, 8 + perms * PERMUTATION_CYCLES)
            }
            Sha3Digest256 { dst } => {
                self.require(Unit::Keccak)?;
                let out = self.digest(DigestMode::Sha3_256)?;
                *self.seed_mut(dst) = out[..32].try_into().expect("32-byte digest");
                Charge::on(Unit::Keccak, 1 + PERMUTATION_CYCLES)
            }
            Sha3Digest512 => {
                self.require(Unit::Keccak)?;
                let out = self.digest(DigestMode::Sha3_512)?;
                self.r0 = out[..32].try_into().expect("64-byte digest");
                self.r1 = out[32..].try_into().expect("64-byte digest");
                Charge::on(Unit::Keccak, 1 + PERMUTATION_CYCLES)
            }
        })
    }

    fn pass_cycles(&self) -> u64 {
        nttcore::pointwise_cycles(self.cache.n())
    }

    fn transform_constants(&self) -> Result<&NttConstants, FaultKind> {
        let cfg = self.lattice()?;
        self.consts.as_ref().ok_or(FaultKind::NoTransform { n: cfg.n, q: cfg.q })
    }

    /// Reads a whole slot through the logged datapath, one word per cycle.
    fn sweep(&mut self, slot: SlotId) -> Result<Vec<u32>, FaultKind> {
        let start = self.cache.clock();
        let n = self.cache.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            self.cache.set_clock(start + i as u64);
            out.push(self.cache.read_unchecked(slot, i)?);
        }
        self.cache.set_clock(start);
        Ok(out)
    }

    /// Writes a whole slot one word per cycle, one cycle behind the reads.
    fn stream(&mut self, slot: SlotId, values: &[u32]) -> Result<(), FaultKind> {
        let start = self.cache.clock();
        for (i, &v) in values.iter().enumerate() {
            self.cache.set_clock(start + i as u64 + 1);
            self.cache.write_unchecked(slot, i, v)?;
        }
        self.cache.set_clock(start);
        Ok(())
    }

    /// `dst <- src OP dst` coefficient-wise; `CONST_*` use `reg` in place of `dst`.
    fn poly_op(&mut self, op: PolyOp, dst: SlotId, src: SlotId) -> Result<(), FaultKind> {
        let cfg = self.lattice()?;
        let (p, q, n) = (cfg.profile, cfg.q, cfg.n);
        let a = self.sweep(src)?;
        let out: Vec<u32> = match op {
            PolyOp::Add | PolyOp::Sub | PolyOp::Mul => {
                let b = self.sweep(dst)?;
                a.iter()
                    .zip(&b)
                    .map(|(&x, &y)| {
                        let (x, y) = (x % q, y % q);
                        match op {
                            PolyOp::Add => p.add(x, y),
                            PolyOp::Sub => p.sub(x, y),
                            _ => p.mul(x, y),
                        }
                    })
                    .collect()
            }
            PolyOp::Bitrev => {
                let bits = n.trailing_zeros();
                let mut out = vec![0; n];
                for (i, &x) in a.iter().enumerate() {
                    out[bit_reverse(i, bits)] = x;
                }
                out
            }
            _ => {
                let r = self.reg;
                a.iter()
                    .map(|&x| match op {
                        PolyOp::ConstAdd => p.add(x % q, r % q),
                        PolyOp::ConstSub => p.sub(x % q, r % q),
                        PolyOp::ConstMul => p.mul(x % q, r % q),
                        PolyOp::ConstAnd => x & r,
                        PolyOp::ConstOr => x | r,
                        PolyOp::ConstXor => x ^ r,
                        PolyOp::ConstRshift => x.checked_shr(r).unwrap_or(0),
                        _ => x.checked_shl(r).unwrap_or(0) & MASK24,
                    })
                    .collect()
            }
        };
        self.stream(dst, &out)
    }

    fn sample(&mut self, args: SampleArgs) -> Result<Charge, FaultKind> {
        self.require(Unit::Keccak)?;
        self.require(Unit::Sampler)?;
        let cfg = self.lattice()?;
        let (n, q) = (cfg.n, cfg.q);
        let slot = self.slot(args.poly)?;
        let c0 = match args.c0 {
            CounterArg::Register => self.c0,
            CounterArg::Imm(v) => v,
        };
        let c1 = match args.c1 {
            CounterArg::Register => self.c1,
            CounterArg::Imm(v) => v,
        };
        let mut prng = Prng::new(args.prng, &self.seed(args.seed), c0, c1);
        let signed = |v: Vec<i32>| v.into_iter().map(|x| residue(x as i64, q)).collect::<Vec<u32>>();
        let values = match args.kind {
            SamplerKind::Rej => sampler::rej_sample(n, &RejectionPlan::with_default_scale(q)?, &mut prng).0,
            SamplerKind::Bin { k } => signed(sampler::bin_sample(n, k as u32, &mut prng)?),
            SamplerKind::Cdt { r, s } => {
                let table = CdtTable::new(self.cdt_ram[..s as usize].to_vec(), r as u32)
                    .map_err(|e| FaultKind::Cdt { r, s, reason: e.to_string() })?;
                signed(sampler::cdt_sample(n, &table, &mut prng).0)
            }
            SamplerKind::Uni { eta, bitlen } => signed(sampler::uni_sample(n, eta, bitlen as u32, &mut prng)?.0),
            SamplerKind::TriFixed { m } => signed(sampler::tri_sample_fixed(n, m as usize, &mut prng)?),
            SamplerKind::TriSplit { m0, m1 } => {
                signed(sampler::tri_sample_split(n, m0 as usize, m1 as usize, &mut prng)?)
            }
            SamplerKind::TriProb { k } => signed(sampler::tri_sample_prob(n, k as u32, &mut prng)?),
        };
        // Coefficients leave the sampler one per cycle after the stream ends.
        let words = prng.words_drawn();
        let keccak = prng.permutations() * PERMUTATION_CYCLES;
        let start = self.cache.clock();
        self.cache.set_clock(start + keccak + words);
        self.stream(slot, &values)?;
        self.cache.set_clock(start);
        Ok(Charge::on(Unit::Keccak, keccak).plus(Unit::Sampler, words + n as u64))
    }

    fn absorb(&mut self, mode: DigestMode, bytes: &[u8]) -> Result<u64, FaultKind> {
        let (active, state) = self.sha3.get_or_insert_with(|| (mode, KeccakState::new(mode.sponge())));
        if *active != mode {
            return Err(FaultKind::Sha3Mode { active: *active, requested: mode });
        }
        let before = state.permutations();
        state.absorb(bytes).expect("state is absorbing until digest");
        Ok(state.permutations() - before)
    }

    fn digest(&mut self, mode: DigestMode) -> Result<Vec<u8>, FaultKind> {
        let (active, mut state) = self.sha3.take().unwrap_or_else(|| (mode, KeccakState::new(mode.sponge())));
        if active != mode {
            self.sha3 = Some((active, state));
            return Err(FaultKind::Sha3Mode { active, requested: mode });
        }
        let mut out = vec![0; mode.output_len()];
        state.squeeze(&mut out);
        Ok(out)
    }
}

fn reg_op(op: RegOp, a: u32, b: u32) -> u32 {
    let v = match op {
        RegOp::Add => a.wrapping_add(b),
        RegOp::Sub => a.wrapping_sub(b),
        RegOp::Mul => a.wrapping_mul(b),
        RegOp::And => a & b,
        RegOp::Or => a | b,
        RegOp::Xor => a ^ b,
        RegOp::Rshift => a.checked_shr(b).unwrap_or(0),
        RegOp::Lshift => a.checked_shl(b).unwrap_or(0),
    };
    v & MASK24
}

#[cfg(test)]
mod tests;
