//! Two-pass assembler for the listing syntax: keyword or positional
//! arguments, `label:` prefixes, `#` comments and the register/flag
//! assignment forms.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    CompareReg, Counter, CounterArg, Gates, IndexArg, Instruction, Program, RegOp, Ring, SampleArgs,
    SamplerKind, SeedReg, Span, INSTRUCTION_WORDS, SLOT_LIMIT, VALUE_LIMIT,
};
use crate::keccak::DigestMode;
use crate::nttcore::NttMode;
use crate::sampler::PrngMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub column: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("`{mnemonic}` has no argument `{arg}`")]
    UnknownArgument { mnemonic: String, arg: String },
    #[error("`{mnemonic}` is missing argument `{arg}`")]
    MissingArgument { mnemonic: String, arg: String },
    #[error("`{mnemonic}` takes at most {max} arguments")]
    TooManyArguments { mnemonic: String, max: usize },
    #[error("invalid value `{value}` for `{arg}`: {reason}")]
    BadValue { arg: String, value: String, reason: String },
    #[error("undefined label `{0}`")]
    UnresolvedLabel(String),
    #[error("label `{0}` is defined twice")]
    DuplicateLabel(String),
    #[error("program needs {0} words; instruction memory holds {INSTRUCTION_WORDS}")]
    TooLarge(usize),
}

type AsmResult<T> = Result<T, AsmError>;

/// A piece of the line with its byte offset, for diagnostics.
#[derive(Debug, Clone, Copy)]
struct Piece<'a> {
    text: &'a str,
    at: usize,
}

struct LineCtx<'a> {
    line: usize,
    src: &'a str,
}

impl<'a> LineCtx<'a> {
    fn err(&self, at: usize, kind: AsmErrorKind) -> AsmError {
        let column = self.src[..at.min(self.src.len())].chars().count() + 1;
        AsmError { line: self.line, column, kind }
    }

    fn syntax(&self, at: usize, msg: impl Into<String>) -> AsmError {
        self.err(at, AsmErrorKind::Syntax(msg.into()))
    }

    fn piece(&self, start: usize, end: usize) -> Piece<'a> {
        let raw = &self.src[start..end];
        let lead = raw.len() - raw.trim_start().len();
        Piece { text: raw.trim(), at: start + lead }
    }

    fn bad_value(&self, arg: &str, p: Piece<'_>, reason: impl Into<String>) -> AsmError {
        self.err(
            p.at,
            AsmErrorKind::BadValue { arg: arg.to_string(), value: p.text.to_string(), reason: reason.into() },
        )
    }

    fn number(&self, arg: &str, p: Piece<'_>) -> AsmResult<u64> {
        let t = p.text;
        let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            u64::from_str_radix(hex, 16)
        } else {
            t.parse::<u64>()
        };
        parsed.map_err(|_| self.bad_value(arg, p, "expected an unsigned integer"))
    }

    fn ranged(&self, arg: &str, p: Piece<'_>, lo: u64, hi: u64) -> AsmResult<u64> {
        let v = self.number(arg, p)?;
        if v < lo || v > hi {
            return Err(self.bad_value(arg, p, format!("must be in [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn slot(&self, arg: &str, p: Piece<'_>) -> AsmResult<u8> {
        Ok(self.ranged(arg, p, 0, SLOT_LIMIT as u64 - 1)? as u8)
    }

    fn word24(&self, arg: &str, p: Piece<'_>) -> AsmResult<u32> {
        Ok(self.ranged(arg, p, 0, VALUE_LIMIT as u64 - 1)? as u32)
    }

    fn keyword<T: Copy>(&self, arg: &str, p: Piece<'_>, options: &[(&str, T)]) -> AsmResult<T> {
        options
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(p.text))
            .map(|&(_, v)| v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.bad_value(arg, p, format!("expected one of {}", names.join(", ")))
            })
    }
}

/// Splits `(a, b = c, ...)` starting at `open` (the index of `(`).
/// Returns the arguments and the index just past `)`.
fn split_args<'a>(ctx: &LineCtx<'a>, open: usize) -> AsmResult<(Vec<(Option<Piece<'a>>, Piece<'a>)>, usize)> {
    let bytes = ctx.src.as_bytes();
    let mut depth = 0;
    let mut start = open + 1;
    let mut args = Vec::new();
    let mut close = None;
    for (i, &b) in bytes.iter().enumerate().skip(open + 1) {
        match b {
            b'(' => depth += 1,
            b')' if depth > 0 => depth -= 1,
            b')' | b',' => {
                let p = ctx.piece(start, i);
                if p.text.is_empty() {
                    if b == b')' && args.is_empty() {
                        close = Some(i);
                        break;
                    }
                    return Err(ctx.syntax(p.at, "empty argument"));
                }
                args.push(split_keyword(ctx, start, i));
                start = i + 1;
                if b == b')' {
                    close = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close.ok_or_else(|| ctx.syntax(open, "unclosed `(`"))?;
    Ok((args, close + 1))
}

fn split_keyword<'a>(ctx: &LineCtx<'a>, start: usize, end: usize) -> (Option<Piece<'a>>, Piece<'a>) {
    let raw = &ctx.src[start..end];
    if let Some(eq) = raw.find('=') {
        let key = ctx.piece(start, start + eq);
        if is_ident(key.text) && !raw[eq + 1..].starts_with('=') {
            return (Some(key), ctx.piece(start + eq + 1, end));
        }
    }
    (None, ctx.piece(start, end))
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Binds arguments to parameter names; a keyword fills the first unfilled
/// parameter of that name, a positional argument the next unfilled one.
fn bind<'a>(
    ctx: &LineCtx<'a>,
    mnemonic: &str,
    at: usize,
    params: &[&str],
    args: &[(Option<Piece<'a>>, Piece<'a>)],
) -> AsmResult<Vec<Piece<'a>>> {
    let mut slots: Vec<Option<Piece<'a>>> = vec![None; params.len()];
    for (key, value) in args {
        let idx = match key {
            Some(k) => params
                .iter()
                .enumerate()
                .position(|(i, p)| *p == k.text && slots[i].is_none())
                .ok_or_else(|| {
                    ctx.err(
                        k.at,
                        if params.contains(&k.text) {
                            AsmErrorKind::Syntax(format!("argument `{}` given twice", k.text))
                        } else {
                            AsmErrorKind::UnknownArgument { mnemonic: mnemonic.into(), arg: k.text.into() }
                        },
                    )
                })?,
            None => slots.iter().position(Option::is_none).ok_or_else(|| {
                ctx.err(value.at, AsmErrorKind::TooManyArguments { mnemonic: mnemonic.into(), max: params.len() })
            })?,
        };
        slots[idx] = Some(*value);
    }
    slots
        .into_iter()
        .zip(params)
        .map(|(s, p)| {
            s.ok_or_else(|| ctx.err(at, AsmErrorKind::MissingArgument { mnemonic: mnemonic.into(), arg: p.to_string() }))
        })
        .collect()
}

const PRNGS: &[(&str, PrngMode)] = &[
    ("SHAKE-128", PrngMode::Shake128),
    ("SHAKE-256", PrngMode::Shake256),
    ("SHAKE128", PrngMode::Shake128),
    ("SHAKE256", PrngMode::Shake256),
];
const SEEDS: &[(&str, SeedReg)] = &[("r0", SeedReg::R0), ("r1", SeedReg::R1)];
const GATES: &[(&str, bool)] = &[("GATE", true), ("UNGATE", false)];
const MODES: &[(&str, NttMode)] = &[
    ("DIF_NTT", NttMode::DifNtt),
    ("DIF_INTT", NttMode::DifIntt),
    ("DIT_NTT", NttMode::DitNtt),
    ("DIT_INTT", NttMode::DitIntt),
];
const COMPARE_REGS: &[(&str, CompareReg)] =
    &[("reg", CompareReg::Reg), ("tmp", CompareReg::Tmp), ("c0", CompareReg::C0), ("c1", CompareReg::C1)];

fn counter_arg(ctx: &LineCtx<'_>, name: &str, p: Piece<'_>) -> AsmResult<CounterArg> {
    if p.text == name {
        Ok(CounterArg::Register)
    } else {
        Ok(CounterArg::Imm(ctx.ranged(name, p, 0, u16::MAX as u64)? as u16))
    }
}

/// `1/2^k` or `1/N` with `N` a power of two in `[2, 128]`.
fn rho(ctx: &LineCtx<'_>, p: Piece<'_>) -> AsmResult<u8> {
    let bad = || ctx.bad_value("rho", p, "expected 1/2, 1/4, ..., 1/128");
    let compact: String = p.text.chars().filter(|c| !c.is_whitespace()).collect();
    let denom = compact.strip_prefix("1/").ok_or_else(bad)?;
    let k = if let Some(exp) = denom.strip_prefix("2^") {
        exp.parse::<u32>().map_err(|_| bad())?
    } else {
        let d = denom.parse::<u32>().map_err(|_| bad())?;
        if !d.is_power_of_two() {
            return Err(bad());
        }
        d.trailing_zeros()
    };
    if !(1..=7).contains(&k) {
        return Err(bad());
    }
    Ok(k as u8)
}

fn ring(ctx: &LineCtx<'_>, p: Piece<'_>) -> AsmResult<Ring> {
    let compact: String = p.text.chars().filter(|c| !c.is_whitespace()).collect();
    match compact.as_str() {
        "x^N+1" | "x^n+1" => Ok(Ring::Negacyclic),
        "x^N-1" | "x^n-1" => Ok(Ring::Cyclic),
        _ => Err(ctx.bad_value("ring", p, "expected x^N+1 or x^N-1")),
    }
}

/// Parses a call-form instruction `mnemonic (args)`.
fn call(ctx: &LineCtx<'_>, name: Piece<'_>, args: &[(Option<Piece<'_>>, Piece<'_>)]) -> AsmResult<Instruction> {
    use Instruction::*;
    let m = name.text;
    let b = |params: &[&str]| bind(ctx, m, name.at, params, args);
    let sampler = |extra: &[&str]| -> AsmResult<(SampleArgs, Vec<Piece<'_>>)> {
        let mut params = vec!["prng", "seed", "c0", "c1"];
        params.extend_from_slice(extra);
        params.push("poly");
        let v = bind(ctx, m, name.at, &params, args)?;
        let sample = SampleArgs {
            kind: SamplerKind::Rej,
            prng: ctx.keyword("prng", v[0], PRNGS)?,
            seed: ctx.keyword("seed", v[1], SEEDS)?,
            c0: counter_arg(ctx, "c0", v[2])?,
            c1: counter_arg(ctx, "c1", v[3])?,
            poly: ctx.slot("poly", v[v.len() - 1])?,
        };
        Ok((sample, v[4..v.len() - 1].to_vec()))
    };
    let with_kind = |(mut s, _): (SampleArgs, Vec<Piece<'_>>), kind: SamplerKind| {
        s.kind = kind;
        Sample(s)
    };
    Ok(match m {
        "config" => {
            let v = b(&["n", "q"])?;
            let n = ctx.number("n", v[0])?;
            if !n.is_power_of_two() || !(8..=2048).contains(&n) {
                return Err(ctx.bad_value("n", v[0], "must be a power of two in [8, 2048]"));
            }
            Config { n: n as u16, q: ctx.ranged("q", v[1], 2, VALUE_LIMIT as u64 - 1)? as u32 }
        }
        "clock_config" => {
            let v = b(&["keccak", "ntt", "sampler"])?;
            ClockConfig(Gates {
                keccak: ctx.keyword("keccak", v[0], GATES)?,
                ntt: ctx.keyword("ntt", v[1], GATES)?,
                sampler: ctx.keyword("sampler", v[2], GATES)?,
            })
        }
        "transform" => {
            let v = b(&["mode", "poly_dst", "poly_src"])?;
            Transform {
                mode: ctx.keyword("mode", v[0], MODES)?,
                dst: ctx.slot("poly_dst", v[1])?,
                src: ctx.slot("poly_src", v[2])?,
            }
        }
        "mult_psi" => MultPsi { poly: ctx.slot("poly", b(&["poly"])?[0])? },
        "mult_psi_inv" => MultPsiInv { poly: ctx.slot("poly", b(&["poly"])?[0])? },
        "init" => Init { poly: ctx.slot("poly", b(&["poly"])?[0])? },
        "poly_copy" => {
            let v = b(&["poly_dst", "poly_src"])?;
            PolyCopy { dst: ctx.slot("poly_dst", v[0])?, src: ctx.slot("poly_src", v[1])? }
        }
        "poly_op" => {
            let v = b(&["op", "poly_dst", "poly_src"])?;
            let ops: Vec<(&str, super::PolyOp)> = super::PolyOp::ALL.iter().map(|&o| (o.name(), o)).collect();
            PolyOp { op: ctx.keyword("op", v[0], &ops)?, dst: ctx.slot("poly_dst", v[1])?, src: ctx.slot("poly_src", v[2])? }
        }
        "shift_poly" => {
            let v = b(&["ring", "poly_dst", "poly_src"])?;
            ShiftPoly { ring: ring(ctx, v[0])?, dst: ctx.slot("poly_dst", v[1])?, src: ctx.slot("poly_src", v[2])? }
        }
        "rej_sample" => with_kind(sampler(&[])?, SamplerKind::Rej),
        "bin_sample" => {
            let s = sampler(&["k"])?;
            let k = ctx.ranged("k", s.1[0], 1, 32)? as u8;
            with_kind(s, SamplerKind::Bin { k })
        }
        "cdt_sample" => {
            let s = sampler(&["r", "s"])?;
            let r = ctx.ranged("r", s.1[0], 1, 32)? as u8;
            let sup = ctx.ranged("s", s.1[1], 1, 64)? as u8;
            with_kind(s, SamplerKind::Cdt { r, s: sup })
        }
        "uni_sample" => {
            let s = sampler(&["eta", "bitlen"])?;
            let eta = ctx.word24("eta", s.1[0])?;
            let bitlen = ctx.ranged("bitlen", s.1[1], 0, 32)? as u8;
            if 2 * eta as u64 + 1 > 1u64 << bitlen {
                return Err(ctx.bad_value("bitlen", s.1[1], format!("2*eta+1 = {} does not fit", 2 * eta as u64 + 1)));
            }
            with_kind(s, SamplerKind::Uni { eta, bitlen })
        }
        "tri_sample_1" => {
            let s = sampler(&["m"])?;
            let m = ctx.ranged("m", s.1[0], 0, 4095)? as u16;
            with_kind(s, SamplerKind::TriFixed { m })
        }
        "tri_sample_2" => {
            let s = sampler(&["m0", "m1"])?;
            let m0 = ctx.ranged("m0", s.1[0], 0, 4095)? as u16;
            let m1 = ctx.ranged("m1", s.1[1], 0, 4095)? as u16;
            with_kind(s, SamplerKind::TriSplit { m0, m1 })
        }
        "tri_sample_3" => {
            let s = sampler(&["rho"])?;
            let k = rho(ctx, s.1[0])?;
            with_kind(s, SamplerKind::TriProb { k })
        }
        "sha3_init" => {
            b(&[])?;
            Sha3Init
        }
        "sha3_256_absorb" | "sha3_512_absorb" => {
            let mode = if m == "sha3_256_absorb" { DigestMode::Sha3_256 } else { DigestMode::Sha3_512 };
            // Either a seed register or a slot, by keyword or position.
            match args {
                [(None, p)] | [(Some(Piece { text: "seed", .. }), p)] if SEEDS.iter().any(|(s, _)| *s == p.text) => {
                    Sha3AbsorbSeed { mode, seed: ctx.keyword("seed", *p, SEEDS)? }
                }
                _ => Sha3AbsorbPoly { mode, poly: ctx.slot("poly", b(&["poly"])?[0])? },
            }
        }
        "max_elems" | "sum_elems" | "eq_check" | "inf_norm_check" | "compare" | "sha3_256_digest"
        | "sha3_512_digest" => {
            return Err(ctx.syntax(name.at, format!("`{m}` must be used as the right-hand side of an assignment")))
        }
        _ => return Err(ctx.err(name.at, AsmErrorKind::UnknownOpcode(m.to_string()))),
    })
}

/// Reads an identifier starting at `at` (after spaces); returns it and the end.
fn ident_at<'a>(ctx: &LineCtx<'a>, at: usize) -> Option<(Piece<'a>, usize)> {
    let s = ctx.src;
    let start = at + (s[at..].len() - s[at..].trim_start().len());
    let len = s[start..].find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(s.len() - start);
    if len == 0 || !is_ident(&s[start..start + len]) {
        return None;
    }
    Some((Piece { text: &s[start..start + len], at: start }, start + len))
}

fn skip_ws(s: &str, at: usize) -> usize {
    at + (s[at..].len() - s[at..].trim_start().len())
}

fn expect_end(ctx: &LineCtx<'_>, at: usize) -> AsmResult<()> {
    let at = skip_ws(ctx.src, at);
    if at < ctx.src.len() {
        return Err(ctx.syntax(at, format!("unexpected `{}`", ctx.src[at..].trim())));
    }
    Ok(())
}

fn expect_char(ctx: &LineCtx<'_>, at: usize, c: char) -> AsmResult<usize> {
    let at = skip_ws(ctx.src, at);
    if ctx.src[at..].starts_with(c) {
        Ok(at + c.len_utf8())
    } else {
        Err(ctx.syntax(at, format!("expected `{c}`")))
    }
}

/// `(poly = 3)[c0]` or `(3)[5]` starting at `open`; returns slot, index and end.
fn poly_index(ctx: &LineCtx<'_>, open: usize) -> AsmResult<(u8, IndexArg, usize)> {
    let (args, after) = split_args(ctx, open)?;
    let poly = bind(ctx, "poly access", open, &["poly"], &args)?[0];
    let slot = ctx.slot("poly", poly)?;
    let lb = expect_char(ctx, after, '[')?;
    let rb = ctx.src[lb..].find(']').map(|i| lb + i).ok_or_else(|| ctx.syntax(lb, "expected `]`"))?;
    let p = ctx.piece(lb, rb);
    let index = match p.text {
        "c0" => IndexArg::Counter(Counter::C0),
        "c1" => IndexArg::Counter(Counter::C1),
        _ => IndexArg::Imm(ctx.ranged("index", p, 0, u16::MAX as u64)? as u16),
    };
    Ok((slot, index, rb + 1))
}

fn rhs_call<'a>(ctx: &LineCtx<'a>, at: usize, expected: &[&str]) -> AsmResult<(Piece<'a>, Vec<(Option<Piece<'a>>, Piece<'a>)>)> {
    let (name, end) = ident_at(ctx, at).ok_or_else(|| ctx.syntax(skip_ws(ctx.src, at), "expected an operation"))?;
    if !expected.contains(&name.text) {
        return Err(ctx.err(name.at, AsmErrorKind::UnknownOpcode(name.text.to_string())));
    }
    let open = skip_ws(ctx.src, end);
    if !ctx.src[open..].starts_with('(') {
        expect_end(ctx, open)?;
        return Ok((name, Vec::new()));
    }
    let (args, after) = split_args(ctx, open)?;
    expect_end(ctx, after)?;
    Ok((name, args))
}

enum Parsed {
    Ins(Instruction),
    Branch { equal: bool, value: i8, label: String, at: usize },
}

fn statement(ctx: &LineCtx<'_>, start: usize) -> AsmResult<Parsed> {
    use Instruction::*;
    let s = ctx.src;
    if s[start..].starts_with('(') {
        let (poly, index, end) = poly_index(ctx, start)?;
        let eq = expect_char(ctx, end, '=')?;
        let (r, end) = ident_at(ctx, eq).ok_or_else(|| ctx.syntax(eq, "expected `reg`"))?;
        if r.text != "reg" {
            return Err(ctx.syntax(r.at, "only `reg` can be stored into a polynomial"));
        }
        expect_end(ctx, end)?;
        return Ok(Parsed::Ins(PolyFromReg { poly, index }));
    }
    let (head, end) = ident_at(ctx, start).ok_or_else(|| ctx.syntax(start, "expected an instruction"))?;
    if head.text == "if" {
        return branch(ctx, end);
    }
    let after = skip_ws(s, end);
    // `r0 || r1 = sha3_512_digest`
    if head.text == "r0" && s[after..].starts_with("||") {
        let (r1, end) = ident_at(ctx, after + 2).ok_or_else(|| ctx.syntax(after + 2, "expected `r1`"))?;
        if r1.text != "r1" {
            return Err(ctx.syntax(r1.at, "expected `r1`"));
        }
        let eq = expect_char(ctx, end, '=')?;
        rhs_call(ctx, eq, &["sha3_512_digest"])?;
        return Ok(Parsed::Ins(Sha3Digest512));
    }
    if s[after..].starts_with('=') && !s[after..].starts_with("==") {
        return assignment(ctx, head, after + 1).map(Parsed::Ins);
    }
    if s[after..].starts_with('(') {
        let (args, close) = split_args(ctx, after)?;
        expect_end(ctx, close)?;
        return call(ctx, head, &args).map(Parsed::Ins);
    }
    expect_end(ctx, after)?;
    call(ctx, head, &[]).map(Parsed::Ins)
}

fn branch(ctx: &LineCtx<'_>, at: usize) -> AsmResult<Parsed> {
    let s = ctx.src;
    let open = expect_char(ctx, at, '(')?;
    let (flag, end) = ident_at(ctx, open).ok_or_else(|| ctx.syntax(open, "expected `flag`"))?;
    if flag.text != "flag" {
        return Err(ctx.syntax(flag.at, "conditions test `flag`"));
    }
    let op_at = skip_ws(s, end);
    let equal = if s[op_at..].starts_with("==") {
        true
    } else if s[op_at..].starts_with("!=") {
        false
    } else {
        return Err(ctx.syntax(op_at, "expected `==` or `!=`"));
    };
    let close = s[op_at..].find(')').map(|i| op_at + i).ok_or_else(|| ctx.syntax(op_at, "expected `)`"))?;
    let vp = ctx.piece(op_at + 2, close);
    let value = match vp.text.replace(' ', "").as_str() {
        "-1" => -1,
        "0" => 0,
        "1" | "+1" => 1,
        _ => return Err(ctx.bad_value("flag", vp, "expected -1, 0 or +1")),
    };
    let (kw, end) = ident_at(ctx, close + 1).ok_or_else(|| ctx.syntax(close + 1, "expected `goto`"))?;
    if kw.text != "goto" {
        return Err(ctx.syntax(kw.at, "expected `goto`"));
    }
    let (label, end) = ident_at(ctx, end).ok_or_else(|| ctx.syntax(end, "expected a label"))?;
    expect_end(ctx, end)?;
    Ok(Parsed::Branch { equal, value, label: label.text.to_string(), at: label.at })
}

fn assignment(ctx: &LineCtx<'_>, lhs: Piece<'_>, at: usize) -> AsmResult<Instruction> {
    use Instruction::*;
    let s = ctx.src;
    let rhs = ctx.piece(at, s.len());
    if rhs.text.is_empty() {
        return Err(ctx.syntax(at, "missing right-hand side"));
    }
    match lhs.text {
        "c0" | "c1" => {
            let counter = if lhs.text == "c0" { Counter::C0 } else { Counter::C1 };
            if let Some((name, end)) = ident_at(ctx, at) {
                if name.text != lhs.text {
                    return Err(ctx.syntax(name.at, format!("expected `{}` or a value", lhs.text)));
                }
                let op_at = skip_ws(s, end);
                let add = match s[op_at..].chars().next() {
                    Some('+') => true,
                    Some('-') => false,
                    _ => return Err(ctx.syntax(op_at, "expected `+` or `-`")),
                };
                let value = ctx.ranged("value", ctx.piece(op_at + 1, s.len()), 0, u16::MAX as u64)? as u16;
                Ok(if add { CounterAdd { counter, value } } else { CounterSub { counter, value } })
            } else {
                Ok(CounterSet { counter, value: ctx.ranged("value", rhs, 0, u16::MAX as u64)? as u16 })
            }
        }
        "reg" => {
            if rhs.text.starts_with('(') {
                let (poly, index, end) = poly_index(ctx, rhs.at)?;
                expect_end(ctx, end)?;
                return Ok(RegFromPoly { poly, index });
            }
            match ident_at(ctx, at) {
                Some((t, end)) if t.text == "tmp" => {
                    expect_end(ctx, end)?;
                    Ok(RegFromTmp)
                }
                Some(_) => {
                    let (name, args) = rhs_call(ctx, at, &["max_elems", "sum_elems"])?;
                    let poly = ctx.slot("poly", bind(ctx, name.text, name.at, &["poly"], &args)?[0])?;
                    Ok(if name.text == "max_elems" { MaxElems { poly } } else { SumElems { poly } })
                }
                None => Ok(RegSet { value: ctx.word24("value", rhs)? }),
            }
        }
        "tmp" => match ident_at(ctx, at) {
            Some((t, end)) if t.text == "tmp" => {
                let mut op_start = skip_ws(s, end);
                let paren = s[op_start..].starts_with('(');
                if paren {
                    op_start += 1;
                }
                let (op, mut end) = ident_at(ctx, op_start).ok_or_else(|| ctx.syntax(op_start, "expected an operation"))?;
                let ops: Vec<(&str, RegOp)> = RegOp::ALL.iter().map(|&o| (o.name(), o)).collect();
                let op = ctx.keyword("op", op, &ops)?;
                if paren {
                    end = expect_char(ctx, end, ')')?;
                }
                let (r, end) = ident_at(ctx, end).ok_or_else(|| ctx.syntax(end, "expected `reg`"))?;
                if r.text != "reg" {
                    return Err(ctx.syntax(r.at, "the second operand is always `reg`"));
                }
                expect_end(ctx, end)?;
                Ok(TmpOp { op })
            }
            Some((t, _)) => Err(ctx.syntax(t.at, "expected `tmp` or a value")),
            None => Ok(TmpSet { value: ctx.word24("value", rhs)? }),
        },
        "flag" => {
            let (name, args) = rhs_call(ctx, at, &["eq_check", "inf_norm_check", "compare"])?;
            match name.text {
                "eq_check" => {
                    let v = bind(ctx, name.text, name.at, &["poly", "poly"], &args)?;
                    Ok(EqCheck { a: ctx.slot("poly", v[0])?, b: ctx.slot("poly", v[1])? })
                }
                "inf_norm_check" => {
                    let v = bind(ctx, name.text, name.at, &["poly", "bound"], &args)?;
                    Ok(InfNormCheck { poly: ctx.slot("poly", v[0])?, bound: ctx.word24("bound", v[1])? })
                }
                _ => {
                    let v = bind(ctx, name.text, name.at, &["register", "value"], &args)?;
                    let reg = ctx.keyword("register", v[0], COMPARE_REGS)?;
                    let limit = if matches!(reg, CompareReg::C0 | CompareReg::C1) { u16::MAX as u64 } else { VALUE_LIMIT as u64 - 1 };
                    Ok(Compare { reg, value: ctx.ranged("value", v[1], 0, limit)? as u32 })
                }
            }
        }
        "r0" | "r1" => {
            rhs_call(ctx, at, &["sha3_256_digest"])?;
            Ok(Sha3Digest256 { dst: if lhs.text == "r0" { SeedReg::R0 } else { SeedReg::R1 } })
        }
        _ => Err(ctx.syntax(lhs.at, format!("cannot assign to `{}`", lhs.text))),
    }
}

pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut parsed: Vec<(Parsed, Span)> = Vec::new();
    let mut words = 0usize;
    for (i, raw) in source.lines().enumerate() {
        let code = raw.split('#').next().unwrap_or("");
        let ctx = LineCtx { line: i + 1, src: code };
        let mut at = skip_ws(code, 0);
        // Any number of `label:` prefixes.
        while let Some((name, end)) = ident_at(&ctx, at) {
            let colon = skip_ws(code, end);
            if !code[colon..].starts_with(':') {
                break;
            }
            if labels.insert(name.text.to_string(), parsed.len()).is_some() {
                return Err(ctx.err(name.at, AsmErrorKind::DuplicateLabel(name.text.to_string())));
            }
            at = skip_ws(code, colon + 1);
        }
        if at >= code.len() {
            continue;
        }
        let stmt = statement(&ctx, at)?;
        let span = Span { line: i + 1, column: code[..at].chars().count() + 1 };
        words += match &stmt {
            Parsed::Ins(ins) => ins.word_len(),
            Parsed::Branch { .. } => 1,
        };
        if words > INSTRUCTION_WORDS {
            return Err(AsmError { line: span.line, column: span.column, kind: AsmErrorKind::TooLarge(words) });
        }
        parsed.push((stmt, span));
    }
    let mut program = Program { labels, ..Program::default() };
    for (stmt, span) in parsed {
        let ins = match stmt {
            Parsed::Ins(ins) => ins,
            Parsed::Branch { equal, value, label, at } => {
                let target = *program.labels.get(&label).ok_or_else(|| AsmError {
                    line: span.line,
                    column: source.lines().nth(span.line - 1).map_or(at, |l| l[..at].chars().count()) + 1,
                    kind: AsmErrorKind::UnresolvedLabel(label.clone()),
                })?;
                Instruction::Branch { equal, value, target: target as u16 }
            }
        };
        program.instructions.push(ins);
        program.spans.push(span);
    }
    Ok(program)
}
