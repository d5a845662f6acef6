//! Canonical text form. `assemble(disassemble(p)) == p` for any valid program.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{CompareReg, Counter, CounterArg, IndexArg, Instruction, Program, Ring, SamplerKind, SeedReg};
use crate::nttcore::NttMode;
use crate::sampler::PrngMode;

fn counter(c: Counter) -> &'static str {
    match c {
        Counter::C0 => "c0",
        Counter::C1 => "c1",
    }
}

fn seed(s: SeedReg) -> &'static str {
    match s {
        SeedReg::R0 => "r0",
        SeedReg::R1 => "r1",
    }
}

fn index(i: IndexArg) -> String {
    match i {
        IndexArg::Imm(v) => v.to_string(),
        IndexArg::Counter(c) => counter(c).to_string(),
    }
}

fn counter_arg(name: &str, a: CounterArg) -> String {
    match a {
        CounterArg::Register => name.to_string(),
        CounterArg::Imm(v) => v.to_string(),
    }
}

fn mode(m: NttMode) -> &'static str {
    match m {
        NttMode::DifNtt => "DIF_NTT",
        NttMode::DifIntt => "DIF_INTT",
        NttMode::DitNtt => "DIT_NTT",
        NttMode::DitIntt => "DIT_INTT",
    }
}

fn gate(g: bool) -> &'static str {
    if g {
        "GATE"
    } else {
        "UNGATE"
    }
}

/// One instruction in canonical form; branch targets use `labels`.
pub(crate) fn render(ins: &Instruction, label_of: &dyn Fn(usize) -> String) -> String {
    use Instruction::*;
    match *ins {
        Config { n, q } => format!("config (n = {n}, q = {q})"),
        ClockConfig(g) => format!(
            "clock_config (keccak = {}, ntt = {}, sampler = {})",
            gate(g.keccak),
            gate(g.ntt),
            gate(g.sampler)
        ),
        CounterSet { counter: c, value } => format!("{} = {value}", counter(c)),
        CounterAdd { counter: c, value } => format!("{0} = {0} + {value}", counter(c)),
        CounterSub { counter: c, value } => format!("{0} = {0} - {value}", counter(c)),
        RegSet { value } => format!("reg = {value}"),
        RegFromTmp => "reg = tmp".to_string(),
        TmpSet { value } => format!("tmp = {value}"),
        TmpOp { op } => format!("tmp = tmp ({}) reg", op.name()),
        MaxElems { poly } => format!("reg = max_elems (poly = {poly})"),
        SumElems { poly } => format!("reg = sum_elems (poly = {poly})"),
        RegFromPoly { poly, index: i } => format!("reg = (poly = {poly})[{}]", index(i)),
        PolyFromReg { poly, index: i } => format!("(poly = {poly})[{}] = reg", index(i)),
        Transform { mode: m, dst, src } => {
            format!("transform (mode = {}, poly_dst = {dst}, poly_src = {src})", mode(m))
        }
        MultPsi { poly } => format!("mult_psi (poly = {poly})"),
        MultPsiInv { poly } => format!("mult_psi_inv (poly = {poly})"),
        Sample(a) => {
            let prng = match a.prng {
                PrngMode::Shake128 => "SHAKE-128",
                PrngMode::Shake256 => "SHAKE-256",
            };
            let extra = match a.kind {
                SamplerKind::Bin { k } => format!("k = {k}, "),
                SamplerKind::Cdt { r, s } => format!("r = {r}, s = {s}, "),
                SamplerKind::Rej => String::new(),
                SamplerKind::Uni { eta, bitlen } => format!("eta = {eta}, bitlen = {bitlen}, "),
                SamplerKind::TriFixed { m } => format!("m = {m}, "),
                SamplerKind::TriSplit { m0, m1 } => format!("m0 = {m0}, m1 = {m1}, "),
                SamplerKind::TriProb { k } => format!("rho = 1/2^{k}, "),
            };
            format!(
                "{} (prng = {prng}, seed = {}, c0 = {}, c1 = {}, {extra}poly = {})",
                a.kind.mnemonic(),
                seed(a.seed),
                counter_arg("c0", a.c0),
                counter_arg("c1", a.c1),
                a.poly
            )
        }
        Init { poly } => format!("init (poly = {poly})"),
        PolyCopy { dst, src } => format!("poly_copy (poly_dst = {dst}, poly_src = {src})"),
        PolyOp { op, dst, src } => format!("poly_op (op = {}, poly_dst = {dst}, poly_src = {src})", op.name()),
        ShiftPoly { ring, dst, src } => {
            let r = match ring {
                Ring::Negacyclic => "x^N+1",
                Ring::Cyclic => "x^N-1",
            };
            format!("shift_poly (ring = {r}, poly_dst = {dst}, poly_src = {src})")
        }
        EqCheck { a, b } => format!("flag = eq_check (poly = {a}, poly = {b})"),
        InfNormCheck { poly, bound } => format!("flag = inf_norm_check (poly = {poly}, bound = {bound})"),
        Compare { reg, value } => {
            let r = match reg {
                CompareReg::Reg => "reg",
                CompareReg::Tmp => "tmp",
                CompareReg::C0 => "c0",
                CompareReg::C1 => "c1",
            };
            format!("flag = compare ({r}, {value})")
        }
        Branch { equal, value, target } => {
            let v = if value > 0 { "+1".to_string() } else { value.to_string() };
            format!("if (flag {} {v}) goto {}", if equal { "==" } else { "!=" }, label_of(target as usize))
        }
        Sha3Init => "sha3_init".to_string(),
        Sha3AbsorbPoly { poly, .. } => format!("{} (poly = {poly})", ins.mnemonic()),
        Sha3AbsorbSeed { seed: s, .. } => format!("{} (seed = {})", ins.mnemonic(), seed(s)),
        Sha3Digest256 { dst } => format!("{} = sha3_256_digest", seed(dst)),
        Sha3Digest512 => "r0 || r1 = sha3_512_digest".to_string(),
    }
}

pub fn disassemble(program: &Program) -> String {
    // Prefer the program's own label names; invent `L{idx}` for the rest.
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        names.entry(idx).or_insert_with(|| name.clone());
    }
    for ins in &program.instructions {
        if let Instruction::Branch { target, .. } = ins {
            let t = *target as usize;
            if !names.contains_key(&t) {
                let mut candidate = format!("L{t}");
                while program.labels.contains_key(&candidate) {
                    candidate.push('_');
                }
                names.insert(t, candidate);
            }
        }
    }
    let label_of = |i: usize| names.get(&i).cloned().unwrap_or_else(|| format!("L{i}"));
    let mut out = String::new();
    for (i, ins) in program.instructions.iter().enumerate() {
        if let Some(name) = names.get(&i) {
            let _ = writeln!(out, "{name}:");
        }
        let _ = writeln!(out, "    {}", render(ins, &label_of));
    }
    if let Some(name) = names.get(&program.len()) {
        let _ = writeln!(out, "{name}:");
    }
    out
}
