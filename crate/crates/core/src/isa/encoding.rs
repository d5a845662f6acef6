//! Binary instruction format.
//!
//! Every instruction starts with a header word whose top six bits hold the
//! opcode; operand fields are packed from bit 0 upward in the order listed in
//! [`OPCODES`]. Samplers carry two extension words (counter immediates, then
//! distribution parameters), while `config` and `inf_norm_check` carry one
//! (the modulus or the bound). Unused bits must be zero.

use thiserror::Error;

use super::{
    CompareReg, Counter, CounterArg, Gates, IndexArg, Instruction, Program, RegOp, Ring, SampleArgs,
    SamplerKind, SeedReg,
};
use crate::keccak::DigestMode;
use crate::nttcore::NttMode;
use crate::sampler::PrngMode;

pub const BINARY_MAGIC: &[u8; 4] = b"SPH1";

/// `(opcode, mnemonic, header fields LSB first, extension words)`.
pub const OPCODES: &[(u8, &str, &str, &str)] = &[
    (1, "config", "lg_n:4", "q:24"),
    (2, "clock_config", "keccak:1 ntt:1 sampler:1", ""),
    (3, "c = #VAL", "counter:1 value:16", ""),
    (4, "c = c + #VAL", "counter:1 value:16", ""),
    (5, "c = c - #VAL", "counter:1 value:16", ""),
    (6, "reg = #VAL", "value:24", ""),
    (7, "reg = tmp", "", ""),
    (8, "tmp = #VAL", "value:24", ""),
    (9, "tmp = tmp OP reg", "op:3", ""),
    (10, "max_elems", "poly:7", ""),
    (11, "sum_elems", "poly:7", ""),
    (12, "reg = (poly)[i]", "poly:7 index_kind:2 index:16", ""),
    (13, "(poly)[i] = reg", "poly:7 index_kind:2 index:16", ""),
    (14, "transform", "mode:2 dst:7 src:7", ""),
    (15, "mult_psi", "poly:7", ""),
    (16, "mult_psi_inv", "poly:7", ""),
    (17, "bin_sample", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | k:6"),
    (18, "cdt_sample", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | r:6 s:7"),
    (19, "rej_sample", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | (zero)"),
    (20, "uni_sample", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | eta:24 bitlen:6"),
    (21, "tri_sample_1", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | m:12"),
    (22, "tri_sample_2", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | m0:12 m1:12"),
    (23, "tri_sample_3", "prng:1 seed:1 poly:7 c0_reg:1 c1_reg:1", "c0:16 c1:16 | k:3"),
    (24, "init", "poly:7", ""),
    (25, "poly_copy", "dst:7 src:7", ""),
    (26, "poly_op", "op:4 dst:7 src:7", ""),
    (27, "shift_poly", "ring:1 dst:7 src:7", ""),
    (28, "eq_check", "a:7 b:7", ""),
    (29, "inf_norm_check", "poly:7", "bound:24"),
    (30, "compare", "reg:2 value:24", ""),
    (31, "if (flag ...) goto", "equal:1 value:2 target:9", ""),
    (32, "sha3_init", "", ""),
    (33, "sha3_*_absorb (poly)", "mode:1 poly:7", ""),
    (34, "sha3_*_absorb (seed)", "mode:1 seed:1", ""),
    (35, "sha3_256_digest", "dst:1", ""),
    (36, "sha3_512_digest", "", ""),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("word {word}: {reason}")]
pub struct DecodeError {
    pub word: usize,
    pub reason: String,
}

struct Packer(u32, u32);

impl Packer {
    fn new(opcode: u8) -> Self {
        Packer((opcode as u32) << 26, 0)
    }

    fn field(mut self, value: u32, width: u32) -> Self {
        debug_assert!(value < 1 << width, "field overflow");
        self.0 |= value << self.1;
        self.1 += width;
        self
    }

    fn done(self) -> u32 {
        self.0
    }
}

fn word_from(fields: &[(u32, u32)]) -> u32 {
    let mut w = 0;
    let mut shift = 0;
    for &(value, width) in fields {
        w |= value << shift;
        shift += width;
    }
    w
}

fn counter_bit(c: Counter) -> u32 {
    (c == Counter::C1) as u32
}

fn seed_bit(s: SeedReg) -> u32 {
    (s == SeedReg::R1) as u32
}

fn mode_bit(m: DigestMode) -> u32 {
    (m == DigestMode::Sha3_512) as u32
}

fn index_fields(index: IndexArg) -> (u32, u32) {
    match index {
        IndexArg::Imm(v) => (0, v as u32),
        IndexArg::Counter(Counter::C0) => (1, 0),
        IndexArg::Counter(Counter::C1) => (2, 0),
    }
}

fn ntt_mode_code(m: NttMode) -> u32 {
    match m {
        NttMode::DifNtt => 0,
        NttMode::DifIntt => 1,
        NttMode::DitNtt => 2,
        NttMode::DitIntt => 3,
    }
}

fn flag_code(v: i8) -> u32 {
    match v {
        0 => 0,
        1 => 1,
        _ => 2,
    }
}

fn encode_one(ins: &Instruction, out: &mut Vec<u32>) {
    use Instruction::*;
    let p = |op: u8| Packer::new(op);
    let header = match *ins {
        Config { n, q } => {
            out.push(p(1).field(n.trailing_zeros(), 4).done());
            out.push(q);
            return;
        }
        ClockConfig(g) => p(2).field(g.keccak as u32, 1).field(g.ntt as u32, 1).field(g.sampler as u32, 1).done(),
        CounterSet { counter, value } => p(3).field(counter_bit(counter), 1).field(value as u32, 16).done(),
        CounterAdd { counter, value } => p(4).field(counter_bit(counter), 1).field(value as u32, 16).done(),
        CounterSub { counter, value } => p(5).field(counter_bit(counter), 1).field(value as u32, 16).done(),
        RegSet { value } => p(6).field(value, 24).done(),
        RegFromTmp => p(7).done(),
        TmpSet { value } => p(8).field(value, 24).done(),
        TmpOp { op } => p(9).field(op as u32, 3).done(),
        MaxElems { poly } => p(10).field(poly as u32, 7).done(),
        SumElems { poly } => p(11).field(poly as u32, 7).done(),
        RegFromPoly { poly, index } | PolyFromReg { poly, index } => {
            let opcode = if matches!(ins, RegFromPoly { .. }) { 12 } else { 13 };
            let (kind, imm) = index_fields(index);
            p(opcode).field(poly as u32, 7).field(kind, 2).field(imm, 16).done()
        }
        Transform { mode, dst, src } => p(14).field(ntt_mode_code(mode), 2).field(dst as u32, 7).field(src as u32, 7).done(),
        MultPsi { poly } => p(15).field(poly as u32, 7).done(),
        MultPsiInv { poly } => p(16).field(poly as u32, 7).done(),
        Sample(a) => {
            let (opcode, params) = match a.kind {
                SamplerKind::Bin { k } => (17, word_from(&[(k as u32, 6)])),
                SamplerKind::Cdt { r, s } => (18, word_from(&[(r as u32, 6), (s as u32, 7)])),
                SamplerKind::Rej => (19, 0),
                SamplerKind::Uni { eta, bitlen } => (20, word_from(&[(eta, 24), (bitlen as u32, 6)])),
                SamplerKind::TriFixed { m } => (21, word_from(&[(m as u32, 12)])),
                SamplerKind::TriSplit { m0, m1 } => (22, word_from(&[(m0 as u32, 12), (m1 as u32, 12)])),
                SamplerKind::TriProb { k } => (23, word_from(&[(k as u32, 3)])),
            };
            let imm = |c: CounterArg| match c {
                CounterArg::Register => (1, 0),
                CounterArg::Imm(v) => (0, v as u32),
            };
            let (c0_reg, c0) = imm(a.c0);
            let (c1_reg, c1) = imm(a.c1);
            out.push(
                p(opcode)
                    .field((a.prng == PrngMode::Shake256) as u32, 1)
                    .field(seed_bit(a.seed), 1)
                    .field(a.poly as u32, 7)
                    .field(c0_reg, 1)
                    .field(c1_reg, 1)
                    .done(),
            );
            out.push(word_from(&[(c0, 16), (c1, 16)]));
            out.push(params);
            return;
        }
        Init { poly } => p(24).field(poly as u32, 7).done(),
        PolyCopy { dst, src } => p(25).field(dst as u32, 7).field(src as u32, 7).done(),
        PolyOp { op, dst, src } => p(26).field(op as u32, 4).field(dst as u32, 7).field(src as u32, 7).done(),
        ShiftPoly { ring, dst, src } => {
            p(27).field((ring == Ring::Cyclic) as u32, 1).field(dst as u32, 7).field(src as u32, 7).done()
        }
        EqCheck { a, b } => p(28).field(a as u32, 7).field(b as u32, 7).done(),
        InfNormCheck { poly, bound } => {
            out.push(p(29).field(poly as u32, 7).done());
            out.push(bound);
            return;
        }
        Compare { reg, value } => p(30).field(reg as u32, 2).field(value, 24).done(),
        Branch { equal, value, target } => {
            p(31).field(equal as u32, 1).field(flag_code(value), 2).field(target as u32, 9).done()
        }
        Sha3Init => p(32).done(),
        Sha3AbsorbPoly { mode, poly } => p(33).field(mode_bit(mode), 1).field(poly as u32, 7).done(),
        Sha3AbsorbSeed { mode, seed } => p(34).field(mode_bit(mode), 1).field(seed_bit(seed), 1).done(),
        Sha3Digest256 { dst } => p(35).field(seed_bit(dst), 1).done(),
        Sha3Digest512 => p(36).done(),
    };
    out.push(header);
}

pub fn encode(program: &Program) -> Vec<u32> {
    let mut out = Vec::with_capacity(program.word_count());
    for ins in &program.instructions {
        encode_one(ins, &mut out);
    }
    out
}

struct Fields {
    word: u32,
    shift: u32,
    at: usize,
}

impl Fields {
    fn new(word: u32, at: usize) -> Self {
        Self { word, shift: 0, at }
    }

    fn take(&mut self, width: u32) -> u32 {
        let v = (self.word >> self.shift) & ((1u64 << width) - 1) as u32;
        self.shift += width;
        v
    }

    /// Checks that the bits above the consumed fields are zero.
    fn finish(&self, limit: u32) -> Result<(), DecodeError> {
        let rest = if self.shift >= 32 { 0 } else { (self.word >> self.shift) & mask_below(limit - self.shift) };
        if rest != 0 {
            return Err(DecodeError { word: self.at, reason: "reserved bits set".into() });
        }
        Ok(())
    }
}

fn mask_below(bits: u32) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1 << bits) - 1
    }
}

fn bad(word: usize, reason: impl Into<String>) -> DecodeError {
    DecodeError { word, reason: reason.into() }
}

fn check_range(at: usize, what: &str, v: u32, lo: u32, hi: u32) -> Result<u32, DecodeError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(bad(at, format!("{what} = {v} outside [{lo}, {hi}]")))
    }
}

pub fn decode(words: &[u32]) -> Result<Program, DecodeError> {
    use Instruction::*;
    let mut instructions = Vec::new();
    let mut at = 0;
    while at < words.len() {
        let header = words[at];
        let opcode = (header >> 26) as u8;
        let mut f = Fields::new(header, at);
        let ext = |i: usize| -> Result<u32, DecodeError> {
            words.get(at + i).copied().ok_or_else(|| bad(at, "truncated instruction"))
        };
        let counter = |b: u32| if b == 0 { Counter::C0 } else { Counter::C1 };
        let seed = |b: u32| if b == 0 { SeedReg::R0 } else { SeedReg::R1 };
        let digest = |b: u32| if b == 0 { DigestMode::Sha3_256 } else { DigestMode::Sha3_512 };
        let ins = match opcode {
            1 => {
                let lg = check_range(at, "lg n", f.take(4), 3, 11)?;
                let q = ext(1)?;
                check_range(at + 1, "q", q, 2, (1 << 24) - 1)?;
                Config { n: 1 << lg, q }
            }
            2 => ClockConfig(Gates { keccak: f.take(1) == 1, ntt: f.take(1) == 1, sampler: f.take(1) == 1 }),
            3..=5 => {
                let c = counter(f.take(1));
                let value = f.take(16) as u16;
                match opcode {
                    3 => CounterSet { counter: c, value },
                    4 => CounterAdd { counter: c, value },
                    _ => CounterSub { counter: c, value },
                }
            }
            6 => RegSet { value: f.take(24) },
            7 => RegFromTmp,
            8 => TmpSet { value: f.take(24) },
            9 => TmpOp { op: RegOp::ALL[f.take(3) as usize] },
            10 => MaxElems { poly: f.take(7) as u8 },
            11 => SumElems { poly: f.take(7) as u8 },
            12 | 13 => {
                let poly = f.take(7) as u8;
                let kind = f.take(2);
                let imm = f.take(16);
                let index = match (kind, imm) {
                    (0, v) => IndexArg::Imm(v as u16),
                    (1, 0) => IndexArg::Counter(Counter::C0),
                    (2, 0) => IndexArg::Counter(Counter::C1),
                    _ => return Err(bad(at, "invalid index operand")),
                };
                if opcode == 12 {
                    RegFromPoly { poly, index }
                } else {
                    PolyFromReg { poly, index }
                }
            }
            14 => {
                let mode = [NttMode::DifNtt, NttMode::DifIntt, NttMode::DitNtt, NttMode::DitIntt][f.take(2) as usize];
                Transform { mode, dst: f.take(7) as u8, src: f.take(7) as u8 }
            }
            15 => MultPsi { poly: f.take(7) as u8 },
            16 => MultPsiInv { poly: f.take(7) as u8 },
            17..=23 => {
                let prng = if f.take(1) == 0 { PrngMode::Shake128 } else { PrngMode::Shake256 };
                let seed = seed(f.take(1));
                let poly = f.take(7) as u8;
                let c0_reg = f.take(1) == 1;
                let c1_reg = f.take(1) == 1;
                let counters = ext(1)?;
                let params = ext(2)?;
                let arg = |is_reg: bool, v: u32| -> Result<CounterArg, DecodeError> {
                    match (is_reg, v) {
                        (true, 0) => Ok(CounterArg::Register),
                        (true, _) => Err(bad(at + 1, "immediate set on a register counter operand")),
                        (false, v) => Ok(CounterArg::Imm(v as u16)),
                    }
                };
                let c0 = arg(c0_reg, counters & 0xFFFF)?;
                let c1 = arg(c1_reg, counters >> 16)?;
                let mut pf = Fields::new(params, at + 2);
                let kind = match opcode {
                    17 => SamplerKind::Bin { k: check_range(at + 2, "k", pf.take(6), 1, 32)? as u8 },
                    18 => {
                        let r = check_range(at + 2, "r", pf.take(6), 1, 32)? as u8;
                        let s = check_range(at + 2, "s", pf.take(7), 1, 64)? as u8;
                        SamplerKind::Cdt { r, s }
                    }
                    19 => SamplerKind::Rej,
                    20 => {
                        let eta = pf.take(24);
                        let bitlen = check_range(at + 2, "bitlen", pf.take(6), 0, 32)? as u8;
                        SamplerKind::Uni { eta, bitlen }
                    }
                    21 => SamplerKind::TriFixed { m: pf.take(12) as u16 },
                    22 => SamplerKind::TriSplit { m0: pf.take(12) as u16, m1: pf.take(12) as u16 },
                    _ => SamplerKind::TriProb { k: check_range(at + 2, "k", pf.take(3), 1, 7)? as u8 },
                };
                pf.finish(32)?;
                Sample(SampleArgs { kind, prng, seed, c0, c1, poly })
            }
            24 => Init { poly: f.take(7) as u8 },
            25 => PolyCopy { dst: f.take(7) as u8, src: f.take(7) as u8 },
            26 => {
                let code = f.take(4) as usize;
                let op = *super::PolyOp::ALL.get(code).ok_or_else(|| bad(at, format!("undefined poly_op code {code}")))?;
                PolyOp { op, dst: f.take(7) as u8, src: f.take(7) as u8 }
            }
            27 => {
                let ring = if f.take(1) == 0 { Ring::Negacyclic } else { Ring::Cyclic };
                ShiftPoly { ring, dst: f.take(7) as u8, src: f.take(7) as u8 }
            }
            28 => EqCheck { a: f.take(7) as u8, b: f.take(7) as u8 },
            29 => {
                let poly = f.take(7) as u8;
                let bound = ext(1)?;
                check_range(at + 1, "bound", bound, 0, (1 << 24) - 1)?;
                InfNormCheck { poly, bound }
            }
            30 => {
                let reg = [CompareReg::Reg, CompareReg::Tmp, CompareReg::C0, CompareReg::C1][f.take(2) as usize];
                Compare { reg, value: f.take(24) }
            }
            31 => {
                let equal = f.take(1) == 1;
                let value = match f.take(2) {
                    0 => 0,
                    1 => 1,
                    2 => -1,
                    _ => return Err(bad(at, "undefined flag value")),
                };
                Branch { equal, value, target: f.take(9) as u16 }
            }
            32 => Sha3Init,
            33 => Sha3AbsorbPoly { mode: digest(f.take(1)), poly: f.take(7) as u8 },
            34 => Sha3AbsorbSeed { mode: digest(f.take(1)), seed: seed(f.take(1)) },
            35 => Sha3Digest256 { dst: seed(f.take(1)) },
            36 => Sha3Digest512,
            _ => return Err(bad(at, format!("undefined opcode {opcode}"))),
        };
        f.finish(26)?;
        at += ins.word_len();
        instructions.push(ins);
    }
    let program = Program::new(instructions);
    program.validate().map_err(|e| {
        let word = match e {
            super::ProgramError::BadTarget { index, .. } => {
                program.instructions[..index].iter().map(Instruction::word_len).sum()
            }
            super::ProgramError::TooLarge { .. } => words.len(),
        };
        bad(word, e.to_string())
    })?;
    Ok(program)
}

/// `SPH1`, little-endian word count, then the words.
pub fn write_binary(words: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * words.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(words.len() as u32).to_le_bytes());
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn read_binary(bytes: &[u8]) -> Result<Vec<u32>, DecodeError> {
    if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad(0, "missing SPH1 header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * count {
        return Err(bad(0, format!("header declares {count} words but {} bytes follow", body.len())));
    }
    Ok(body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}
