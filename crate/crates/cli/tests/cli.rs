use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sapphire_core::nttcore::NttConstants;
use tempfile::TempDir;

fn programs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/programs")
}

fn emu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sapphire-emu"))
        .args(args)
        .env_remove("SAPPHIRE_EMU_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn program(name: &str) -> String {
    programs().join(format!("{name}.sph")).to_str().unwrap().to_string()
}

const SEED: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

#[test]
fn asm_counts_instructions_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    let src = program("newhope1024_as_e");
    for out in [&a, &b] {
        let o = emu(&["asm", &src, "-o", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(stdout(&o).trim(), "10 instructions");
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], b"SPH1");
    assert_eq!(bytes, fs::read(&b).unwrap());
}

#[test]
fn asm_reports_the_failing_line() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "bad.sph", "config (n = 8, q = 17)\n\nfrobnicate (poly = 0)\n");
    let o = emu(&["asm", &src]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(stderr(&o).contains("frobnicate"));
}

#[test]
fn disasm_output_reassembles_to_the_same_binary() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first.bin");
    let o = emu(&["asm", &program("kyber512_as_e"), "-o", first.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let listing = emu(&["disasm", first.to_str().unwrap()]);
    assert_eq!(code(&listing), 0);
    let again = write(&dir, "again.sph", &stdout(&listing));
    let second = dir.path().join("second.bin");
    assert_eq!(code(&emu(&["asm", &again, "-o", second.to_str().unwrap()])), 0);
    assert_eq!(fs::read(first).unwrap(), fs::read(second).unwrap());
}

#[test]
fn trace_of_the_eight_point_demo_lists_the_access_schedule() {
    let o = emu(&["run", &program("ntt8_demo"), "--trace"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let accesses: Vec<&str> = out
        .lines()
        .skip_while(|l| !l.starts_with("# access schedule"))
        .skip(1)
        .take_while(|l| l.ends_with(" R") || l.ends_with(" W"))
        .collect();
    // Three stages of four butterflies, two reads and two writes each.
    assert_eq!(accesses.len(), 48);
    // `config` takes cycle 0; the first butterfly reads coefficients 0 and 1
    // from the left bank and writes 0 and 4 into the right bank.
    assert_eq!(&accesses[..4], ["1 0 0 0 R", "1 0 1 0 R", "1 1 0 0 W", "1 1 2 0 W"]);
    // The second stage starts after one drain cycle, from the right bank.
    assert_eq!(accesses[16], "6 1 0 0 R");
}

#[test]
fn fixed_seed_runs_are_identical_and_env_matches_flag() {
    let src = program("newhope1024_as_e");
    let a = emu(&["run", &src, "--seed", SEED, "--dump", "0,1,2,3", "--format", "kv"]);
    let b = emu(&["run", &src, "--seed", SEED, "--dump", "0,1,2,3", "--format", "kv"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("slot.3="));

    let env = Command::new(env!("CARGO_BIN_EXE_sapphire-emu"))
        .args(["run", &src, "--dump", "0,1,2,3", "--format", "kv"])
        .env("SAPPHIRE_EMU_SEED", SEED)
        .output()
        .unwrap();
    assert_eq!(env.stdout, a.stdout);

    let other = emu(&["run", &src, "--seed", &"ab".repeat(32), "--dump", "0", "--format", "kv"]);
    let slot0 = |o: &Output| stdout(o).lines().find(|l| l.starts_with("slot.0=")).unwrap().to_string();
    assert_ne!(slot0(&other), slot0(&a));
}

#[test]
fn malformed_seed_is_a_usage_error() {
    let o = emu(&["run", &program("ntt8_demo"), "--seed", "1234"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn machine_fault_exits_3_with_the_pc() {
    // The loop expects the host to have configured the machine.
    let o = emu(&["run", &program("ntt_power_loop")]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("fault at instruction 2"), "{}", stderr(&o));
}

#[test]
fn power_loop_cycles_are_whole_iterations() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "n=1024\nq=12289\n");
    let o = emu(&["run", &program("ntt_power_loop"), "--data-in", &cfg, "--format", "kv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kv = |key: &str| -> u64 {
        stdout(&o).lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap().parse().unwrap()
    };
    // One forward transform at n = 1024 is (512 + 1) * 10 cycles.
    assert_eq!(kv("op.transform.count"), 1000);
    assert_eq!(kv("op.transform.cycles") % 5130, 0);
    assert_eq!(kv("op.transform.cycles") / 5130, 1000);
    assert_eq!(kv("op.mult_psi.cycles"), 1000 * 1025);
}

#[test]
fn cycle_limit_stops_early() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "n=1024\nq=12289\n");
    let o = emu(&["run", &program("ntt_power_loop"), "--data-in", &cfg, "--cycles", "20000", "--format", "kv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("halted=false"));
}

#[test]
fn strict_gating_turns_a_gated_unit_into_a_fault() {
    let dir = TempDir::new().unwrap();
    let src = write(
        &dir,
        "gated.sph",
        "config (n = 256, q = 7681)\nclock_config (keccak = GATE, ntt = UNGATE, sampler = GATE)\n\
         rej_sample (prng = SHAKE-128, seed = r0, c0 = 0, c1 = 0, poly = 0)\n",
    );
    let relaxed = emu(&["run", &src, "--format", "kv"]);
    assert_eq!(code(&relaxed), 0, "{}", stderr(&relaxed));
    assert!(!stdout(&relaxed).contains("cycles.gated=0"));
    let strict = emu(&["run", &src, "--strict-gating"]);
    assert_eq!(code(&strict), 3);
    assert!(stderr(&strict).contains("gated"));
}

#[test]
fn data_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = "n=8\nq=17\nslot.0=010000020000030000040000050000060000070000100000\n";
    let input = write(&dir, "in.txt", data);
    let src = write(&dir, "cfg.sph", "config (n = 8, q = 17)\n");
    let out = dir.path().join("out.txt");
    let o = emu(&["run", &src, "--data-in", &input, "--data-out", out.to_str().unwrap(), "--dump", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out).unwrap(), data);
}

#[test]
fn kat_passes() {
    let o = emu(&["kat", "--samples", "2000"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("SHA3-256"));
    assert!(stdout(&o).contains("fermat q = 65537"));
    assert!(stdout(&o).trim_end().ends_with("0 failed"));
}

#[test]
fn demos_pass() {
    let o = emu(&["demo", "newhope", "--trials", "4", "--seed", SEED]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("NewHope-512: 4/4 round trips"));
    assert!(stdout(&o).contains("NewHope-1024: 4/4 round trips"));

    let o = emu(&["demo", "masked", "--n", "512", "--trials", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("3/3"));

    let o = emu(&["demo", "kyber", "--seed", SEED]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let o = emu(&["demo", "frodo"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("A S + E ok, S' A + E' ok").count(), 3);
}

#[test]
fn generated_constants_import_and_validate() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c.txt");
    let o = emu(&["gen-constants", "1024", "12289", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let consts = NttConstants::import(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!((consts.n, consts.q()), (1024, 12289));

    assert_eq!(code(&emu(&["gen-constants", "1024", "7681"])), 2);
}
