use proptest::prelude::*;

use super::*;

const NEWHOPE: &str = include_str!("../../programs/newhope1024_as_e.sph");
const KYBER: &str = include_str!("../../programs/kyber512_as_e.sph");
const NTT_LOOP: &str = include_str!("../../programs/ntt_power_loop.sph");

/// One line per instruction form of the reference instruction table.
const TABLE_FORMS: &[&str] = &[
    "config (n = 256, q = 7681)",
    "clock_config (keccak = GATE, ntt = UNGATE, sampler = GATE)",
    "c0 = 5",
    "c0 = c0 + 1",
    "c0 = c0 - 2",
    "c1 = 7",
    "c1 = c1 + 3",
    "c1 = c1 - 4",
    "reg = 12",
    "reg = tmp",
    "tmp = 9",
    "tmp = tmp (ADD) reg",
    "tmp = tmp (SUB) reg",
    "tmp = tmp (MUL) reg",
    "tmp = tmp (AND) reg",
    "tmp = tmp (OR) reg",
    "tmp = tmp (XOR) reg",
    "tmp = tmp (RSHIFT) reg",
    "tmp = tmp (LSHIFT) reg",
    "reg = max_elems (poly = 3)",
    "reg = sum_elems (poly = 3)",
    "reg = (poly = 2)[17]",
    "reg = (poly = 2)[c0]",
    "reg = (poly = 2)[c1]",
    "(poly = 2)[17] = reg",
    "(poly = 2)[c0] = reg",
    "(poly = 2)[c1] = reg",
    "transform (mode = DIF_NTT, poly_dst = 4, poly_src = 0)",
    "transform (mode = DIF_INTT, poly_dst = 4, poly_src = 0)",
    "transform (mode = DIT_NTT, poly_dst = 4, poly_src = 0)",
    "transform (mode = DIT_INTT, poly_dst = 4, poly_src = 0)",
    "mult_psi (poly = 1)",
    "mult_psi_inv (poly = 1)",
    "bin_sample (prng = SHAKE-256, seed = r1, c0 = 0, c1 = 1, k = 8, poly = 2)",
    "cdt_sample (prng = SHAKE-128, seed = r0, c0 = 0, c1 = 0, r = 16, s = 11, poly = 2)",
    "rej_sample (prng = SHAKE-128, seed = r0, c0 = 0, c1 = 0, poly = 0)",
    "uni_sample (prng = SHAKE-256, seed = r0, c0 = c0, c1 = c1, eta = 523775, bitlen = 20, poly = 6)",
    "tri_sample_1 (prng = SHAKE-256, seed = r0, c0 = 1, c1 = 2, m = 64, poly = 6)",
    "tri_sample_2 (prng = SHAKE-256, seed = r0, c0 = 1, c1 = 2, m0 = 30, m1 = 34, poly = 6)",
    "tri_sample_3 (prng = SHAKE-256, seed = r0, c0 = 1, c1 = 2, rho = 1/2^3, poly = 6)",
    "init (poly = 20)",
    "poly_copy (poly_dst = 3, poly_src = 2)",
    "poly_op (op = ADD, poly_dst = 1, poly_src = 5)",
    "poly_op (op = SUB, poly_dst = 1, poly_src = 5)",
    "poly_op (op = MUL, poly_dst = 1, poly_src = 5)",
    "poly_op (op = BITREV, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_ADD, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_SUB, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_MUL, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_AND, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_OR, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_XOR, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_RSHIFT, poly_dst = 1, poly_src = 5)",
    "poly_op (op = CONST_LSHIFT, poly_dst = 1, poly_src = 5)",
    "shift_poly (ring = x^N+1, poly_dst = 1, poly_src = 0)",
    "shift_poly (ring = x^N-1, poly_dst = 1, poly_src = 0)",
    "flag = eq_check (poly = 1, poly = 2)",
    "flag = inf_norm_check (poly = 1, bound = 4000)",
    "flag = compare (reg, 10)",
    "flag = compare (tmp, 10)",
    "flag = compare (c0, 1000)",
    "flag = compare (c1, 10)",
    "top: if (flag == -1) goto top",
    "top: if (flag == 0) goto top",
    "top: if (flag == +1) goto top",
    "top: if (flag != -1) goto top",
    "top: if (flag != 0) goto top",
    "top: if (flag != +1) goto top",
    "sha3_init",
    "sha3_256_absorb (poly = 3)",
    "sha3_512_absorb (poly = 3)",
    "sha3_256_absorb (r0)",
    "sha3_512_absorb (r1)",
    "r0 = sha3_256_digest",
    "r1 = sha3_256_digest",
    "r0 || r1 = sha3_512_digest",
];

fn round_trip(p: &Program) {
    let words = encode(p);
    assert_eq!(words.len(), p.word_count());
    let decoded = decode(&words).unwrap();
    assert_eq!(&decoded, p);
    let text = disassemble(p);
    let again = assemble(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    assert_eq!(&again, p, "{text}");
}

#[test]
fn config_line() {
    let p = assemble("config (n = 1024, q = 12289)").unwrap();
    assert_eq!(p.instructions, vec![Instruction::Config { n: 1024, q: 12289 }]);
}

#[test]
fn newhope_listing_has_ten_instructions() {
    let p = assemble(NEWHOPE).unwrap();
    assert_eq!(p.len(), 10);
    round_trip(&p);
}

#[test]
fn corpus_assembles_and_round_trips() {
    for src in [NEWHOPE, KYBER, NTT_LOOP] {
        round_trip(&assemble(src).unwrap());
    }
    let kyber = assemble(KYBER).unwrap();
    assert!(kyber.instructions.contains(&Instruction::PolyOp { op: PolyOp::Add, dst: 24, src: 8 }));
    let lp = assemble(NTT_LOOP).unwrap();
    assert_eq!(lp.labels["loop"], 2);
    assert_eq!(lp.instructions[6], Instruction::Branch { equal: true, value: -1, target: 2 });
}

#[test]
fn empty_input_is_empty_program() {
    assert!(assemble("").unwrap().is_empty());
    assert!(assemble("# only a comment\n\n").unwrap().is_empty());
    assert!(encode(&Program::default()).is_empty());
}

#[test]
fn every_table_form_round_trips_with_its_own_opcode() {
    let mut seen = std::collections::BTreeSet::new();
    for line in TABLE_FORMS {
        let p = assemble(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert_eq!(p.len(), 1, "{line}");
        round_trip(&p);
        seen.insert(encode(&p)[0] >> 26);
    }
    let numbers: Vec<u32> = OPCODES.iter().map(|o| o.0 as u32).collect();
    let mut unique = numbers.clone();
    unique.dedup();
    assert_eq!(unique, numbers, "opcode table must be sorted and unique");
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), numbers);
}

#[test]
fn positional_and_keyword_forms_agree() {
    let a = assemble("bin_sample (SHAKE-256, r1, 0, 1, 8, 2)").unwrap();
    let b = assemble("bin_sample (poly = 2, k = 8, prng = SHAKE-256, seed = r1, c0 = 0, c1 = 1)").unwrap();
    assert_eq!(a, b);
    let c = assemble("tri_sample_3 (prng = SHAKE-128, seed = r0, c0 = 0, c1 = 0, rho = 1/8, poly = 1)").unwrap();
    let d = assemble("tri_sample_3 (prng = SHAKE-128, seed = r0, c0 = 0, c1 = 0, rho = 1/2^3, poly = 1)").unwrap();
    assert_eq!(c, d);
    assert_eq!(assemble("tmp = tmp XOR reg").unwrap(), assemble("tmp = tmp (XOR) reg").unwrap());
    assert_eq!(assemble("reg = (3)[c0]").unwrap(), assemble("reg = (poly = 3)[c0]").unwrap());
    assert_eq!(assemble("c0 = 0x10").unwrap(), assemble("c0 = 16").unwrap());
}

#[test]
fn forward_labels_resolve() {
    let src = "if (flag != 0) goto done\nc0 = 1\ndone:\n";
    let p = assemble(src).unwrap();
    assert_eq!(p.instructions[0], Instruction::Branch { equal: false, value: 0, target: 2 });
    round_trip(&p);
}

fn err(src: &str) -> AsmError {
    assemble(src).unwrap_err()
}

#[test]
fn diagnostics_carry_line_and_column() {
    let e = err("config (n = 256, q = 7681)\n  frobnicate (poly = 1)");
    assert_eq!((e.line, e.column), (2, 3));
    assert_eq!(e.kind, AsmErrorKind::UnknownOpcode("frobnicate".into()));

    let e = err("init (poly = 128)");
    assert_eq!((e.line, e.column), (1, 14));
    assert!(matches!(e.kind, AsmErrorKind::BadValue { .. }));

    let e = err("mult_psi (slot = 1)");
    assert!(matches!(e.kind, AsmErrorKind::UnknownArgument { .. }));
    assert_eq!(e.column, 11);

    let e = err("\n\nif (flag == 1) goto nowhere");
    assert_eq!(e.line, 3);
    assert_eq!(e.column, 21);
    assert_eq!(e.kind, AsmErrorKind::UnresolvedLabel("nowhere".into()));

    assert!(matches!(err("a: init (poly = 1)\na: init (poly = 1)").kind, AsmErrorKind::DuplicateLabel(_)));
    assert!(matches!(err("transform (mode = DIF_NTT, poly_dst = 1)").kind, AsmErrorKind::MissingArgument { .. }));
    assert!(matches!(err("config (n = 1000, q = 12289)").kind, AsmErrorKind::BadValue { .. }));
    assert!(matches!(err("c0 = 65536").kind, AsmErrorKind::BadValue { .. }));
    assert!(matches!(err("reg = 16777216").kind, AsmErrorKind::BadValue { .. }));
    assert!(matches!(err("if (flag == 2) goto x\nx:").kind, AsmErrorKind::BadValue { .. }));
    assert!(matches!(err("init (poly = 1").kind, AsmErrorKind::Syntax(_)));
    assert!(matches!(err("c0 = c1 + 1").kind, AsmErrorKind::Syntax(_)));
    assert!(matches!(err("uni_sample (SHAKE-128, r0, 0, 0, 8, 4, 1)").kind, AsmErrorKind::BadValue { .. }));
    // Same input, same message.
    assert_eq!(err("init (poly = x)").to_string(), err("init (poly = x)").to_string());
}

#[test]
fn oversize_program_is_rejected() {
    let src = "sha3_init\n".repeat(INSTRUCTION_WORDS);
    assert_eq!(assemble(&src).unwrap().len(), INSTRUCTION_WORDS);
    let src = format!("{src}sha3_init\n");
    assert!(matches!(err(&src).kind, AsmErrorKind::TooLarge(257)));
}

#[test]
fn decode_rejects_bad_words() {
    // Opcode 0 and opcodes past the table are undefined.
    assert_eq!(decode(&[0]).unwrap_err().word, 0);
    assert!(decode(&[63 << 26]).is_err());
    // sha3_init with a stray operand bit.
    let init = encode(&assemble("sha3_init").unwrap())[0];
    assert!(decode(&[init, init | 1]).unwrap_err().word == 1);
    // mult_psi with a bit set above its 7-bit slot field.
    let mp = encode(&assemble("mult_psi (poly = 1)").unwrap())[0];
    assert!(decode(&[mp | 1 << 20]).is_err());
    // Truncated multi-word instruction.
    let cfg = encode(&assemble("config (n = 256, q = 7681)").unwrap());
    assert!(decode(&cfg[..1]).is_err());
    // Branch past the end.
    let br = encode(&assemble("x: if (flag == 0) goto x").unwrap())[0];
    let e = decode(&[init, br + (5 << 3)]).unwrap_err();
    assert_eq!(e.word, 1);
    assert!(e.reason.contains("branches to 5"), "{e}");
}

#[test]
fn binary_file_round_trip() {
    let words = encode(&assemble(KYBER).unwrap());
    let bytes = write_binary(&words);
    assert_eq!(&bytes[..4], BINARY_MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize, words.len());
    assert_eq!(read_binary(&bytes).unwrap(), words);
    assert!(read_binary(b"SPH2\0\0\0\0").is_err());
    assert!(read_binary(&bytes[..bytes.len() - 1]).is_err());
}

fn slot() -> impl Strategy<Value = u8> {
    0u8..128
}

fn counter() -> impl Strategy<Value = Counter> {
    prop_oneof![Just(Counter::C0), Just(Counter::C1)]
}

fn seed() -> impl Strategy<Value = SeedReg> {
    prop_oneof![Just(SeedReg::R0), Just(SeedReg::R1)]
}

fn counter_arg() -> impl Strategy<Value = CounterArg> {
    prop_oneof![Just(CounterArg::Register), any::<u16>().prop_map(CounterArg::Imm)]
}

fn index() -> impl Strategy<Value = IndexArg> {
    prop_oneof![any::<u16>().prop_map(IndexArg::Imm), counter().prop_map(IndexArg::Counter)]
}

fn mode() -> impl Strategy<Value = NttMode> {
    prop_oneof![Just(NttMode::DifNtt), Just(NttMode::DifIntt), Just(NttMode::DitNtt), Just(NttMode::DitIntt)]
}

fn sampler_kind() -> impl Strategy<Value = SamplerKind> {
    prop_oneof![
        (1u8..=32).prop_map(|k| SamplerKind::Bin { k }),
        (1u8..=32, 1u8..=64).prop_map(|(r, s)| SamplerKind::Cdt { r, s }),
        Just(SamplerKind::Rej),
        (0u32..1 << 20).prop_map(|eta| SamplerKind::Uni { eta, bitlen: 22 }),
        (0u16..4096).prop_map(|m| SamplerKind::TriFixed { m }),
        (0u16..4096, 0u16..4096).prop_map(|(m0, m1)| SamplerKind::TriSplit { m0, m1 }),
        (1u8..=7).prop_map(|k| SamplerKind::TriProb { k }),
    ]
}

/// Any non-branch instruction with in-range operands.
fn straight() -> impl Strategy<Value = Instruction> {
    use Instruction::*;
    let word = 0u32..VALUE_LIMIT;
    prop_oneof![
        (3u32..12, 2u32..VALUE_LIMIT).prop_map(|(lg, q)| Config { n: 1 << lg, q }),
        (any::<bool>(), any::<bool>(), any::<bool>())
            .prop_map(|(keccak, ntt, sampler)| ClockConfig(Gates { keccak, ntt, sampler })),
        (counter(), any::<u16>()).prop_map(|(counter, value)| CounterSet { counter, value }),
        (counter(), any::<u16>()).prop_map(|(counter, value)| CounterAdd { counter, value }),
        (counter(), any::<u16>()).prop_map(|(counter, value)| CounterSub { counter, value }),
        word.clone().prop_map(|value| RegSet { value }),
        Just(RegFromTmp),
        word.clone().prop_map(|value| TmpSet { value }),
        (0..8usize).prop_map(|i| TmpOp { op: RegOp::ALL[i] }),
        slot().prop_map(|poly| MaxElems { poly }),
        slot().prop_map(|poly| SumElems { poly }),
        (slot(), index()).prop_map(|(poly, index)| RegFromPoly { poly, index }),
        (slot(), index()).prop_map(|(poly, index)| PolyFromReg { poly, index }),
        (mode(), slot(), slot()).prop_map(|(mode, dst, src)| Transform { mode, dst, src }),
        slot().prop_map(|poly| MultPsi { poly }),
        slot().prop_map(|poly| MultPsiInv { poly }),
        (sampler_kind(), any::<bool>(), seed(), counter_arg(), counter_arg(), slot()).prop_map(
            |(kind, wide, seed, c0, c1, poly)| Sample(SampleArgs {
                kind,
                prng: if wide { PrngMode::Shake256 } else { PrngMode::Shake128 },
                seed,
                c0,
                c1,
                poly
            })
        ),
        slot().prop_map(|poly| Init { poly }),
        (slot(), slot()).prop_map(|(dst, src)| PolyCopy { dst, src }),
        (0..12usize, slot(), slot()).prop_map(|(i, dst, src)| PolyOp { op: super::PolyOp::ALL[i], dst, src }),
        (any::<bool>(), slot(), slot()).prop_map(|(neg, dst, src)| ShiftPoly {
            ring: if neg { Ring::Negacyclic } else { Ring::Cyclic },
            dst,
            src
        }),
        (slot(), slot()).prop_map(|(a, b)| EqCheck { a, b }),
        (slot(), word.clone()).prop_map(|(poly, bound)| InfNormCheck { poly, bound }),
        (0..4usize, any::<u16>()).prop_map(|(r, value)| Compare {
            reg: [CompareReg::Reg, CompareReg::Tmp, CompareReg::C0, CompareReg::C1][r],
            value: value as u32
        }),
        Just(Sha3Init),
        (any::<bool>(), slot()).prop_map(|(w, poly)| Sha3AbsorbPoly {
            mode: if w { DigestMode::Sha3_512 } else { DigestMode::Sha3_256 },
            poly
        }),
        (any::<bool>(), seed()).prop_map(|(w, seed)| Sha3AbsorbSeed {
            mode: if w { DigestMode::Sha3_512 } else { DigestMode::Sha3_256 },
            seed
        }),
        seed().prop_map(|dst| Sha3Digest256 { dst }),
        Just(Sha3Digest512),
    ]
}

fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec((straight(), any::<Option<(bool, u8, u16)>>()), 0..60).prop_map(|items| {
        let len = items.len() as u16;
        let ins = items
            .into_iter()
            .map(|(ins, br)| match br {
                Some((equal, v, t)) => {
                    Instruction::Branch { equal, value: (v % 3) as i8 - 1, target: t % (len + 1) }
                }
                None => ins,
            })
            .collect();
        Program::new(ins)
    })
}

proptest! {
    #[test]
    fn random_programs_round_trip(p in program()) {
        prop_assert!(p.validate().is_ok());
        let decoded = decode(&encode(&p)).unwrap();
        prop_assert_eq!(&decoded, &p);
        let text = disassemble(&p);
        prop_assert_eq!(&assemble(&text).unwrap(), &p);
    }
}
