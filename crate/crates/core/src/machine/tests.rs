use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::isa::assemble;

fn machine(src: &str) -> MachineState {
    let mut m = MachineState::new();
    m.load_program(assemble(src).unwrap()).unwrap();
    m
}

fn random_poly(rng: &mut impl Rng, n: usize, q: u32) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..q)).collect()
}

#[test]
fn empty_program_halts_immediately() {
    let mut m = machine("");
    assert!(m.halted());
    assert_eq!(m.step().unwrap(), StepEvent::Halted);
    assert_eq!(m.run(None).unwrap().total, 0);
}

#[test]
fn reset_keeps_seeds_and_registers() {
    let mut m = machine("c0 = 7\nreg = 3");
    m.write_seed(SeedReg::R0, [9; 32]);
    m.run(None).unwrap();
    assert!(m.cycles() > 0);
    m.reset();
    assert_eq!((m.pc(), m.cycles(), m.halted()), (0, 0, false));
    assert_eq!((m.counter(Counter::C0), m.reg()), (7, 3));
    assert_eq!(m.read_seed(SeedReg::R0), Err(MachineError::SeedReadback));
    m.set_debug(true);
    assert_eq!(m.read_seed(SeedReg::R0).unwrap(), [9; 32]);
}

#[test]
fn oversize_program_fails_to_load() {
    let p = Program::new(vec![Instruction::Sha3Init; 257]);
    assert!(matches!(MachineState::new().load_program(p), Err(MachineError::Load(_))));
}

#[test]
fn newhope_listing_loads_as_ten_instructions() {
    let m = machine(include_str!("../../programs/newhope1024_as_e.sph"));
    assert_eq!(m.program().len(), 10);
}

#[test]
fn counting_loop_runs_a_thousand_times() {
    let mut m = machine("c0 = 0\nloop: c0 = c0 + 1\nflag = compare (c0, 1000)\nif (flag == -1) goto loop");
    let report = m.run(None).unwrap();
    assert_eq!(m.counter(Counter::C0), 1000);
    assert_eq!(report.per_instruction["compare"].count, 1000);
    assert_eq!(report.instructions, 1 + 3 * 1000);
    assert!(report.halted);
}

#[test]
fn branch_to_itself_spins_until_the_cycle_limit() {
    let mut m = machine("top: if (flag == 0) goto top");
    let report = m.run(Some(50)).unwrap();
    assert!(!report.halted);
    assert_eq!((m.pc(), report.total), (0, 50));
}

fn transform_cycles(n: usize, q: u32) -> (u64, u64) {
    let src = format!(
        "config (n = {n}, q = {q})\nmult_psi (poly = 0)\ntransform (mode = DIF_NTT, poly_dst = {}, poly_src = 0)",
        n_slots(n) / 2
    );
    let mut m = machine(&src);
    m.step().unwrap();
    let before = m.cycles();
    m.step().unwrap();
    let psi = m.cycles() - before;
    m.step().unwrap();
    (psi, m.cycles() - before)
}

fn n_slots(n: usize) -> usize {
    PolynomialCache::new(n).unwrap().slot_count()
}

#[test]
fn transform_plus_psi_matches_published_totals() {
    assert_eq!(transform_cycles(256, 7681), (257, 1289));
    assert_eq!(transform_cycles(512, 12289), (513, 2826));
    assert_eq!(transform_cycles(1024, 12289), (1025, 6155));
}

#[test]
fn ntt_bucket_holds_only_the_butterfly_cycles() {
    let mut m = machine(
        "config (n = 256, q = 7681)\nmult_psi (poly = 0)\ntransform (mode = DIF_NTT, poly_dst = 16, poly_src = 0)",
    );
    let r = m.run(None).unwrap();
    assert_eq!(r.unit(Unit::Ntt), 1032);
    assert_eq!(r.unit(Unit::Alu), 257);
    assert_eq!(r.total, 1289 + 1);
}

#[test]
fn sampler_buckets_and_gating() {
    let src = "config (n = 256, q = 7681)
clock_config (keccak = UNGATE, ntt = GATE, sampler = UNGATE)
bin_sample (prng = SHAKE-256, seed = r1, c0 = 0, c1 = 0, k = 3, poly = 4)
transform (mode = DIF_NTT, poly_dst = 16, poly_src = 4)";
    let mut m = machine(src);
    let r = m.run(None).unwrap();
    assert!(r.unit(Unit::Keccak) > 0 && r.unit(Unit::Sampler) > 0);
    assert_eq!(r.unit(Unit::Ntt), 0);
    assert_eq!(r.gated, 1032);
    let units: u64 = r.per_unit.values().sum();
    assert_eq!(units + r.gated, r.total);

    let mut strict = machine(src);
    strict.set_strict_gating(true);
    let err = strict.run(None).unwrap_err();
    assert!(matches!(err, MachineError::Fault { pc: 3, kind: FaultKind::Gated { unit: "ntt" } }), "{err}");
}

#[test]
fn bin_sample_cycles_follow_the_model() {
    // k = 8: one word per coefficient, 256 words from SHAKE-256 (136-byte
    // blocks hold 34 words), so 8 permutations including finalization.
    let mut m = machine(
        "config (n = 256, q = 12289)\nbin_sample (prng = SHAKE-256, seed = r1, c0 = 0, c1 = 0, k = 8, poly = 1)",
    );
    let r = m.run(None).unwrap();
    assert_eq!(r.unit(Unit::Sampler), 256 + 256);
    assert_eq!(r.unit(Unit::Keccak), 8 * 24);
}

#[test]
fn sampler_instruction_matches_library() {
    let mut m = machine(
        "config (n = 256, q = 7681)
c0 = 5
bin_sample (prng = SHAKE-256, seed = r1, c0 = c0, c1 = 2, k = 3, poly = 3)
rej_sample (prng = SHAKE-128, seed = r0, c0 = 1, c1 = 0, poly = 4)
cdt_sample (prng = SHAKE-256, seed = r0, c0 = 0, c1 = 9, r = 16, s = 11, poly = 5)",
    );
    let r0 = [3u8; 32];
    let r1 = [4u8; 32];
    m.write_seed(SeedReg::R0, r0);
    m.write_seed(SeedReg::R1, r1);
    let table = CdtTable::from_gaussian(2.75, 11, 16).unwrap();
    m.load_cdt(&table);
    m.run(None).unwrap();

    let q = 7681;
    let bin = sampler::bin_sample(256, 3, &mut Prng::new(crate::sampler::PrngMode::Shake256, &r1, 5, 2)).unwrap();
    assert_eq!(m.read_slot(3).unwrap(), sampler::to_residues(&bin, q));
    let plan = RejectionPlan::with_default_scale(q).unwrap();
    let rej = sampler::rej_sample(256, &plan, &mut Prng::new(crate::sampler::PrngMode::Shake128, &r0, 1, 0)).0;
    assert_eq!(m.read_slot(4).unwrap(), rej);
    let cdt = sampler::cdt_sample(256, &table, &mut Prng::new(crate::sampler::PrngMode::Shake256, &r0, 0, 9)).0;
    assert_eq!(m.read_slot(5).unwrap(), sampler::to_residues(&cdt, q));
}

#[test]
fn cdt_sample_faults_on_a_bad_table() {
    let mut m = machine("config (n = 256, q = 7681)\ncdt_sample (SHAKE-256, r0, 0, 0, 4, 11, 5)");
    m.load_cdt(&CdtTable::from_gaussian(2.75, 11, 16).unwrap());
    assert!(matches!(m.run(None), Err(MachineError::Fault { pc: 1, kind: FaultKind::Cdt { .. } })));
}

#[test]
fn poly_ops_match_host_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, q) = (256usize, 7681u32);
    for op in crate::isa::PolyOp::ALL {
        let src = format!("config (n = {n}, q = {q})\nreg = 4000\npoly_op (op = {}, poly_dst = 2, poly_src = 1)", op.name());
        let mut m = machine(&src);
        m.configure(n, q).unwrap();
        let a = random_poly(&mut rng, n, q);
        let b = random_poly(&mut rng, n, q);
        m.write_slot(1, &a).unwrap();
        m.write_slot(2, &b).unwrap();
        m.run(None).unwrap();
        let r = 4000u64;
        let (qq, m24) = (q as u64, (1u64 << 24) - 1);
        let expect: Vec<u32> = (0..n)
            .map(|i| {
                let (x, y) = (a[i] as u64, b[i] as u64);
                (match op {
                    PolyOp::Add => (x + y) % qq,
                    PolyOp::Sub => (x + qq - y) % qq,
                    PolyOp::Mul => x * y % qq,
                    PolyOp::Bitrev => a[(i as u32).reverse_bits() as usize >> 24] as u64,
                    PolyOp::ConstAdd => (x + r) % qq,
                    PolyOp::ConstSub => (x + qq - r) % qq,
                    PolyOp::ConstMul => x * r % qq,
                    PolyOp::ConstAnd => x & r,
                    PolyOp::ConstOr => x | r,
                    PolyOp::ConstXor => x ^ r,
                    PolyOp::ConstRshift => x >> r.min(63),
                    PolyOp::ConstLshift => (x << r.min(63)) & m24,
                }) as u32
            })
            .collect();
        assert_eq!(m.read_slot(2).unwrap(), expect, "{}", op.name());
        assert_eq!(m.cycle_report().unit(Unit::Alu), n as u64 + 1);
    }
}

#[test]
fn shift_poly_wraps_by_ring() {
    let (n, q) = (8usize, 17u32);
    let a: Vec<u32> = (1..=8).collect();
    for (ring, top) in [("x^N+1", q - 8), ("x^N-1", 8)] {
        let mut m = machine(&format!("config (n = 8, q = 17)\nshift_poly (ring = {ring}, poly_dst = 3, poly_src = 0)"));
        m.configure(n, q).unwrap();
        m.write_slot(0, &a).unwrap();
        m.run(None).unwrap();
        assert_eq!(m.read_slot(3).unwrap(), [top, 1, 2, 3, 4, 5, 6, 7]);
    }
}

#[test]
fn reductions_and_register_moves() {
    let mut m = machine(
        "config (n = 8, q = 17)
reg = max_elems (poly = 0)
tmp = 0
tmp = tmp ADD reg
reg = sum_elems (poly = 0)
c1 = 6
(poly = 1)[c1] = reg
reg = (poly = 0)[2]",
    );
    m.configure(8, 17).unwrap();
    m.write_slot(0, &[3, 16, 9, 0, 5, 5, 1, 2]).unwrap();
    m.run(None).unwrap();
    assert_eq!(m.tmp(), 16);
    assert_eq!(m.read_slot(1).unwrap()[6], 41 % 17);
    assert_eq!(m.reg(), 9);
}

#[test]
fn register_arithmetic_wraps_at_24_bits() {
    let mut m = machine("tmp = 16777215\nreg = 1\ntmp = tmp ADD reg\nc0 = 0\nc0 = c0 - 1");
    m.run(None).unwrap();
    assert_eq!(m.tmp(), 0);
    assert_eq!(m.counter(Counter::C0), u16::MAX);
}

#[test]
fn flag_boundaries() {
    for (v, expect) in [(999u32, 1i8), (1000, 0), (1001, -1)] {
        let mut m = machine(&format!("reg = 1000\nflag = compare (reg, {v})"));
        m.run(None).unwrap();
        assert_eq!(m.flag(), expect, "compare against {v}");
    }
    // Centered magnitude exactly at the bound passes; one more fails.
    let q = 17;
    for (coeff, bound, expect) in [(4u32, 4u32, 1i8), (5, 4, 0), (13, 4, 1), (12, 4, 0), (0, 0, 1)] {
        let mut m = machine(&format!("config (n = 8, q = 17)\nflag = inf_norm_check (poly = 0, bound = {bound})"));
        m.configure(8, q).unwrap();
        let mut a = vec![0; 8];
        a[5] = coeff;
        m.write_slot(0, &a).unwrap();
        m.run(None).unwrap();
        assert_eq!(m.flag(), expect, "coeff {coeff} bound {bound}");
    }
    for (b5, expect) in [(7u32, 1i8), (8, 0)] {
        let mut m = machine("config (n = 8, q = 17)\nflag = eq_check (poly = 0, poly = 1)");
        m.configure(8, q).unwrap();
        let a = vec![7; 8];
        let mut b = a.clone();
        b[5] = b5;
        m.write_slot(0, &a).unwrap();
        m.write_slot(1, &b).unwrap();
        m.run(None).unwrap();
        assert_eq!(m.flag(), expect);
    }
}

#[test]
fn faults_report_the_instruction() {
    let mut m = machine("mult_psi (poly = 0)");
    assert_eq!(m.run(None), Err(MachineError::Fault { pc: 0, kind: FaultKind::NotConfigured }));

    let mut m = machine("config (n = 1024, q = 12289)\nc0 = 1\ntransform (mode = DIF_NTT, poly_dst = 70, poly_src = 0)");
    assert!(matches!(m.run(None), Err(MachineError::Fault { pc: 2, kind: FaultKind::Cache(_) })));

    let mut m = machine("config (n = 64, q = 32768)\ntransform (mode = DIF_NTT, poly_dst = 64, poly_src = 0)");
    assert!(matches!(m.run(None), Err(MachineError::Fault { pc: 1, kind: FaultKind::NoTransform { .. } })));

    let mut m = machine("config (n = 1024, q = 12289)\ninit (poly = 8)");
    assert!(matches!(m.run(None), Err(MachineError::Fault { pc: 1, .. })));

    let mut m = machine("config (n = 8, q = 17)\nreg = (poly = 0)[8]");
    assert!(matches!(m.run(None), Err(MachineError::Fault { pc: 1, kind: FaultKind::Index { index: 8, n: 8 } })));
}

#[test]
fn host_slots_respect_configuration() {
    let mut m = MachineState::new();
    m.configure(1024, 12289).unwrap();
    assert_eq!(m.slot_count(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_poly(&mut rng, 1024, 12289);
    m.write_slot(7, &a).unwrap();
    assert_eq!(m.read_slot(7).unwrap(), a);
    assert!(m.write_slot(8, &a).is_err());
    assert!(m.write_slot(0, &[12289; 1024]).is_err());
    assert!(m.write_slot(0, &a[..512]).is_err());
}

#[test]
fn sha3_instructions_match_reference_digest() {
    use sha3::Digest;
    let mut m = machine(
        "config (n = 8, q = 17)
sha3_init
sha3_256_absorb (r0)
sha3_256_absorb (poly = 2)
r1 = sha3_256_digest
sha3_512_absorb (poly = 2)
r0 || r1 = sha3_512_digest",
    );
    m.configure(8, 17).unwrap();
    m.write_seed(SeedReg::R0, [0xA5; 32]);
    let poly = [1u32, 2, 3, 16, 0, 5, 8, 13];
    m.write_slot(2, &poly).unwrap();
    m.set_debug(true);
    let bytes: Vec<u8> = poly.iter().flat_map(|v| [*v as u8, 0, 0]).collect();
    let mut first = vec![0xA5; 32];
    first.extend_from_slice(&bytes);
    for _ in 0..4 {
        m.step().unwrap();
    }
    m.step().unwrap();
    assert_eq!(m.read_seed(SeedReg::R1).unwrap().as_slice(), sha3::Sha3_256::digest(&first).as_slice());
    m.run(None).unwrap();
    let wide = sha3::Sha3_512::digest(&bytes);
    assert_eq!(m.read_seed(SeedReg::R0).unwrap().as_slice(), &wide[..32]);
    assert_eq!(m.read_seed(SeedReg::R1).unwrap().as_slice(), &wide[32..]);

    let mut mixed = machine("sha3_256_absorb (r0)\nr0 || r1 = sha3_512_digest");
    assert!(matches!(mixed.run(None), Err(MachineError::Fault { pc: 1, kind: FaultKind::Sha3Mode { .. } })));
}

#[test]
fn ntt_runs_have_data_independent_traces() {
    let src = "config (n = 256, q = 7681)
mult_psi (poly = 0)
transform (mode = DIF_NTT, poly_dst = 16, poly_src = 0)
poly_op (op = MUL, poly_dst = 16, poly_src = 1)";
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut reference = None;
    for _ in 0..4 {
        let mut m = machine(src);
        m.configure(256, 7681).unwrap();
        m.write_slot(0, &random_poly(&mut rng, 256, 7681)).unwrap();
        m.write_slot(1, &random_poly(&mut rng, 256, 7681)).unwrap();
        m.set_access_recording(true);
        m.set_tracing(true);
        let report = m.run(None).unwrap();
        let log = m.take_access_log();
        let cycles: Vec<u64> = m.trace().iter().map(|e| e.start_cycle).collect();
        let observed = (report.total, log, cycles);
        match &reference {
            None => reference = Some(observed),
            Some(r) => assert!(r == &observed),
        }
    }
}

#[test]
fn config_with_same_n_restores_canonical_layout() {
    let mut m = machine(
        "config (n = 1024, q = 12289)
transform (mode = DIF_NTT, poly_dst = 4, poly_src = 0)
config (n = 1024, q = 12289)",
    );
    m.configure(1024, 12289).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_poly(&mut rng, 1024, 12289);
    m.write_slot(0, &a).unwrap();
    m.step().unwrap();
    m.step().unwrap();
    assert!(!m.cache().is_canonical());
    let out = m.read_slot(4).unwrap();
    m.step().unwrap();
    assert!(m.cache().is_canonical());
    assert_eq!(m.read_slot(4).unwrap(), out);
}

#[test]
fn trace_lines_render_instructions() {
    let mut m = machine("c0 = 3\nflag = compare (c0, 3)");
    m.set_tracing(true);
    m.run(None).unwrap();
    let lines: Vec<String> = m.trace().iter().map(ToString::to_string).collect();
    assert!(lines[1].contains("flag = compare (c0, 3)"), "{}", lines[1]);
    assert!(m.cycle_report().to_kv().contains("cycles.total=2\n"));
}
