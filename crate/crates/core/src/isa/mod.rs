//! Instruction set: typed instructions, the text assembler, the binary
//! encoding and the disassembler.

mod asm;
mod disasm;
mod encoding;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::keccak::DigestMode;
use crate::nttcore::NttMode;
use crate::sampler::PrngMode;

pub use asm::{assemble, AsmError, AsmErrorKind};
pub use disasm::disassemble;
pub(crate) use disasm::render;
pub use encoding::{decode, encode, read_binary, write_binary, DecodeError, BINARY_MAGIC, OPCODES};

/// Instruction memory: 1 KB of 32-bit words.
pub const INSTRUCTION_WORDS: usize = 256;
/// Slot operands are 7-bit fields.
pub const SLOT_LIMIT: u32 = 128;
pub const VALUE_LIMIT: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Counter {
    C0,
    C1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedReg {
    R0,
    R1,
}

/// A sampler counter operand: the live register or an immediate for this
/// instruction only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CounterArg {
    Register,
    Imm(u16),
}

/// Coefficient index in `reg = (poly)[i]` and `(poly)[i] = reg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexArg {
    Imm(u16),
    Counter(Counter),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Rshift,
    Lshift,
}

impl RegOp {
    pub const ALL: [RegOp; 8] = [
        RegOp::Add,
        RegOp::Sub,
        RegOp::Mul,
        RegOp::And,
        RegOp::Or,
        RegOp::Xor,
        RegOp::Rshift,
        RegOp::Lshift,
    ];

    pub fn name(self) -> &'static str {
        ["ADD", "SUB", "MUL", "AND", "OR", "XOR", "RSHIFT", "LSHIFT"][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolyOp {
    Add,
    Sub,
    Mul,
    Bitrev,
    ConstAdd,
    ConstSub,
    ConstMul,
    ConstAnd,
    ConstOr,
    ConstXor,
    ConstRshift,
    ConstLshift,
}

impl PolyOp {
    pub const ALL: [PolyOp; 12] = [
        PolyOp::Add,
        PolyOp::Sub,
        PolyOp::Mul,
        PolyOp::Bitrev,
        PolyOp::ConstAdd,
        PolyOp::ConstSub,
        PolyOp::ConstMul,
        PolyOp::ConstAnd,
        PolyOp::ConstOr,
        PolyOp::ConstXor,
        PolyOp::ConstRshift,
        PolyOp::ConstLshift,
    ];

    pub fn name(self) -> &'static str {
        [
            "ADD",
            "SUB",
            "MUL",
            "BITREV",
            "CONST_ADD",
            "CONST_SUB",
            "CONST_MUL",
            "CONST_AND",
            "CONST_OR",
            "CONST_XOR",
            "CONST_RSHIFT",
            "CONST_LSHIFT",
        ][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ring {
    /// `x^N + 1`: shifting wraps the top coefficient with a sign flip.
    Negacyclic,
    /// `x^N - 1`: plain rotation.
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareReg {
    Reg,
    Tmp,
    C0,
    C1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Bin { k: u8 },
    Cdt { r: u8, s: u8 },
    Rej,
    Uni { eta: u32, bitlen: u8 },
    TriFixed { m: u16 },
    TriSplit { m0: u16, m1: u16 },
    /// Nonzero probability `2^(1-k)`, written `rho = 1/2^k`.
    TriProb { k: u8 },
}

impl SamplerKind {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            SamplerKind::Bin { .. } => "bin_sample",
            SamplerKind::Cdt { .. } => "cdt_sample",
            SamplerKind::Rej => "rej_sample",
            SamplerKind::Uni { .. } => "uni_sample",
            SamplerKind::TriFixed { .. } => "tri_sample_1",
            SamplerKind::TriSplit { .. } => "tri_sample_2",
            SamplerKind::TriProb { .. } => "tri_sample_3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleArgs {
    pub kind: SamplerKind,
    pub prng: PrngMode,
    pub seed: SeedReg,
    pub c0: CounterArg,
    pub c1: CounterArg,
    pub poly: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gates {
    pub keccak: bool,
    pub ntt: bool,
    pub sampler: bool,
}

impl Gates {
    pub const OPEN: Gates = Gates { keccak: false, ntt: false, sampler: false };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Config { n: u16, q: u32 },
    /// `true` means the unit's clock is gated.
    ClockConfig(Gates),
    CounterSet { counter: Counter, value: u16 },
    CounterAdd { counter: Counter, value: u16 },
    CounterSub { counter: Counter, value: u16 },
    RegSet { value: u32 },
    RegFromTmp,
    TmpSet { value: u32 },
    TmpOp { op: RegOp },
    MaxElems { poly: u8 },
    SumElems { poly: u8 },
    RegFromPoly { poly: u8, index: IndexArg },
    PolyFromReg { poly: u8, index: IndexArg },
    Transform { mode: NttMode, dst: u8, src: u8 },
    MultPsi { poly: u8 },
    MultPsiInv { poly: u8 },
    Sample(SampleArgs),
    Init { poly: u8 },
    PolyCopy { dst: u8, src: u8 },
    PolyOp { op: PolyOp, dst: u8, src: u8 },
    ShiftPoly { ring: Ring, dst: u8, src: u8 },
    EqCheck { a: u8, b: u8 },
    InfNormCheck { poly: u8, bound: u32 },
    Compare { reg: CompareReg, value: u32 },
    /// `if (flag == value) goto target` or `!=` when `equal` is false.
    Branch { equal: bool, value: i8, target: u16 },
    Sha3Init,
    Sha3AbsorbPoly { mode: DigestMode, poly: u8 },
    Sha3AbsorbSeed { mode: DigestMode, seed: SeedReg },
    Sha3Digest256 { dst: SeedReg },
    Sha3Digest512,
}

impl Instruction {
    /// Encoded length in 32-bit words.
    pub fn word_len(&self) -> usize {
        match self {
            Instruction::Sample(_) => 3,
            Instruction::Config { .. } | Instruction::InfNormCheck { .. } => 2,
            _ => 1,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        use Instruction::*;
        match self {
            Config { .. } => "config",
            ClockConfig(_) => "clock_config",
            CounterSet { .. } => "counter_set",
            CounterAdd { .. } => "counter_add",
            CounterSub { .. } => "counter_sub",
            RegSet { .. } => "reg_set",
            RegFromTmp => "reg_from_tmp",
            TmpSet { .. } => "tmp_set",
            TmpOp { .. } => "tmp_op",
            MaxElems { .. } => "max_elems",
            SumElems { .. } => "sum_elems",
            RegFromPoly { .. } => "reg_from_poly",
            PolyFromReg { .. } => "poly_from_reg",
            Transform { .. } => "transform",
            MultPsi { .. } => "mult_psi",
            MultPsiInv { .. } => "mult_psi_inv",
            Sample(a) => a.kind.mnemonic(),
            Init { .. } => "init",
            PolyCopy { .. } => "poly_copy",
            PolyOp { .. } => "poly_op",
            ShiftPoly { .. } => "shift_poly",
            EqCheck { .. } => "eq_check",
            InfNormCheck { .. } => "inf_norm_check",
            Compare { .. } => "compare",
            Branch { .. } => "goto",
            Sha3Init => "sha3_init",
            Sha3AbsorbPoly { mode: DigestMode::Sha3_256, .. } | Sha3AbsorbSeed { mode: DigestMode::Sha3_256, .. } => {
                "sha3_256_absorb"
            }
            Sha3AbsorbPoly { .. } | Sha3AbsorbSeed { .. } => "sha3_512_absorb",
            Sha3Digest256 { .. } => "sha3_256_digest",
            Sha3Digest512 => "sha3_512_digest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Label name to instruction index.
    pub labels: BTreeMap<String, usize>,
    /// Source position of each instruction, when assembled from text.
    pub spans: Vec<Span>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
    }
}

impl Eq for Program {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("program needs {words} words but instruction memory holds {INSTRUCTION_WORDS}")]
    TooLarge { words: usize },
    #[error("instruction {index} branches to {target}, past the end ({len})")]
    BadTarget { index: usize, target: usize, len: usize },
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Self { instructions, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.instructions.iter().map(Instruction::word_len).sum()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let words = self.word_count();
        if words > INSTRUCTION_WORDS {
            return Err(ProgramError::TooLarge { words });
        }
        for (index, ins) in self.instructions.iter().enumerate() {
            if let Instruction::Branch { target, .. } = ins {
                if *target as usize > self.len() {
                    return Err(ProgramError::BadTarget { index, target: *target as usize, len: self.len() });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&disassemble(self))
    }
}

#[cfg(test)]
mod tests;
