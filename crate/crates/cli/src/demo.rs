//! Protocol demos. Each one runs the on-chip programs and checks the result
//! against host arithmetic or against the unmasked path.

use std::sync::Mutex;
use std::thread;

use anyhow::{bail, Result};
use clap::Subcommand;
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use sapphire_core::machine::MachineState;
use sapphire_core::protocols::reference::{self, frodo_dense, matmul, matrix_add};
use sapphire_core::protocols::{frodo_as_plus_e, frodo_sa_plus_e, kyber, kyber_as_plus_e, newhope, FrodoShape, NewHope};

use crate::seed::Seed;

#[derive(Subcommand)]
pub enum DemoCommand {
    /// CPA round trips at n = 512 and 1024.
    Newhope {
        /// Only this dimension (512 or 1024).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "SAPPHIRE_EMU_SEED")]
        seed: Option<Seed>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rank-2 `A s + e` against schoolbook arithmetic.
    Kyber {
        #[arg(long, env = "SAPPHIRE_EMU_SEED")]
        seed: Option<Seed>,
    },
    /// Tiled `A S + E` and `S' A + E'` against dense products.
    Frodo {
        /// Also run the 640, 976 and 1344 shapes.
        #[arg(long)]
        full: bool,
        #[arg(long, env = "SAPPHIRE_EMU_SEED")]
        seed: Option<Seed>,
    },
    /// Masked decryption against plain decryption.
    Masked {
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, env = "SAPPHIRE_EMU_SEED")]
        seed: Option<Seed>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

pub fn run(cmd: DemoCommand) -> Result<bool> {
    match cmd {
        DemoCommand::Newhope { n, trials, seed, threads } => {
            let dims = match n {
                Some(n) => vec![n],
                None => vec![512, 1024],
            };
            let mut ok = true;
            for n in dims {
                ok &= newhope_round_trips(n, trials, seed.unwrap_or_default(), threads)?;
            }
            Ok(ok)
        }
        DemoCommand::Kyber { seed } => kyber_check(seed.unwrap_or_default()),
        DemoCommand::Frodo { full, seed } => frodo_check(full, seed.unwrap_or_default()),
        DemoCommand::Masked { n, trials, seed, threads } => masked_check(n, trials, seed.unwrap_or_default(), threads),
    }
}

/// Runs `check` over `jobs` on worker threads, each with its own machine, and
/// returns the indices that failed.
fn parallel<J: Sync>(
    jobs: &[J],
    threads: Option<usize>,
    setup: impl Fn() -> Result<MachineState> + Sync,
    check: impl Fn(&mut MachineState, &J) -> Result<bool> + Sync,
) -> Result<Vec<usize>> {
    let workers = threads
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |p| p.get()))
        .clamp(1, jobs.len().max(1));
    let failed = Mutex::new(Vec::new());
    thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (setup, check, failed) = (&setup, &check, &failed);
                scope.spawn(move || -> Result<()> {
                    let mut m = setup()?;
                    for (i, job) in jobs.iter().enumerate().skip(w).step_by(workers) {
                        if !check(&mut m, job)? {
                            failed.lock().expect("no worker panicked").push(i);
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;
    let mut failed = failed.into_inner().expect("no worker panicked");
    failed.sort_unstable();
    Ok(failed)
}

fn newhope_machine(n: usize) -> Result<MachineState> {
    let mut m = MachineState::new();
    m.configure(n, newhope::Q)?;
    Ok(m)
}

struct Trial {
    keygen: [u8; 32],
    coin: [u8; 32],
    msg: [u8; 32],
    extra: [u8; 32],
}

fn trials(count: usize, seed: Seed) -> Vec<Trial> {
    let mut rng = StdRng::from_seed(seed.bytes());
    let mut draw = || {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        b
    };
    (0..count).map(|_| Trial { keygen: draw(), coin: draw(), msg: draw(), extra: draw() }).collect()
}

fn report_failures(label: &str, failed: &[usize]) {
    if !failed.is_empty() {
        let shown: Vec<String> = failed.iter().take(10).map(usize::to_string).collect();
        println!("  {label}: failing trials {}{}", shown.join(", "), if failed.len() > 10 { ", ..." } else { "" });
    }
}

fn newhope_round_trips(n: usize, count: usize, seed: Seed, threads: Option<usize>) -> Result<bool> {
    let scheme = NewHope::new(n)?;
    let jobs = trials(count, seed);
    let failed = parallel(&jobs, threads, || newhope_machine(n), |m, t| {
        let keys = scheme.keygen(m, &t.keygen)?;
        let ct = scheme.encrypt(m, &keys.public, &t.coin, &t.msg)?;
        Ok(scheme.decrypt(m, &keys.secret, &ct)? == t.msg)
    })?;
    println!("NewHope-{n}: {}/{count} round trips", count - failed.len());
    report_failures(&format!("NewHope-{n}"), &failed);
    Ok(failed.is_empty())
}

fn masked_check(n: usize, count: usize, seed: Seed, threads: Option<usize>) -> Result<bool> {
    let scheme = NewHope::new(n)?;
    let jobs = trials(count, seed);
    let failed = parallel(&jobs, threads, || newhope_machine(n), |m, t| {
        let keys = scheme.keygen(m, &t.keygen)?;
        let ct = scheme.encrypt(m, &keys.public, &t.coin, &t.msg)?;
        let plain = scheme.decrypt(m, &keys.secret, &ct)?;
        let masked = scheme.masked_decrypt(m, &keys, &ct, &mut StdRng::from_seed(t.extra))?;
        Ok(masked == plain && plain == t.msg)
    })?;
    println!("masked NewHope-{n}: {}/{count} agree with plain decryption", count - failed.len());
    report_failures("masked", &failed);
    Ok(failed.is_empty())
}

fn kyber_check(seed: Seed) -> Result<bool> {
    let (r0, r1) = seed.registers()?;
    let mut m = MachineState::new();
    m.configure(kyber::N, kyber::Q)?;
    let out = kyber_as_plus_e(&mut m, &r0, &r1)?;
    let Some(consts) = m.constants() else {
        bail!("no transform constants for the Kyber configuration");
    };
    let want = reference::kyber_as_plus_e(&r0, &r1, consts);
    let report = m.cycle_report();
    let ok = out.rows == want;
    println!(
        "Kyber rank 2, n = {}, q = {}: {} ({} cycles)",
        kyber::N,
        kyber::Q,
        if ok { "matches schoolbook A s + e" } else { "MISMATCH against schoolbook A s + e" },
        report.total
    );
    Ok(ok)
}

fn frodo_check(full: bool, seed: Seed) -> Result<bool> {
    let (r0, r1) = seed.registers()?;
    let mut shapes = vec![
        ("reduced, two tiles", FrodoShape::reduced(80, vec![64, 16], true)?),
        ("reduced, padded", FrodoShape::reduced(61, vec![64], true)?),
        ("reduced, single columns", FrodoShape::reduced(84, vec![64, 32], false)?),
    ];
    if full {
        shapes.push(("Frodo-640", FrodoShape::frodo640()));
        shapes.push(("Frodo-976", FrodoShape::frodo976()));
        shapes.push(("Frodo-1344", FrodoShape::frodo1344()));
    }
    let mut ok = true;
    for (label, shape) in shapes {
        let d = frodo_dense(&shape, &r0, &r1);
        let mut m = MachineState::new();
        m.configure(64, shape.q)?;
        let as_ok = frodo_as_plus_e(&mut m, &shape, &r0, &r1)? == matrix_add(&matmul(&d.a, &d.s, shape.q), &d.e, shape.q);
        let sa_ok =
            frodo_sa_plus_e(&mut m, &shape, &r0, &r1)? == matrix_add(&matmul(&d.s_prime, &d.a, shape.q), &d.e_prime, shape.q);
        let verdict = |b: bool| if b { "ok" } else { "MISMATCH" };
        println!(
            "{label:<24} n = {:>4}, tiles {:?}: A S + E {}, S' A + E' {}",
            shape.n,
            shape.tiles,
            verdict(as_ok),
            verdict(sa_ok)
        );
        ok &= as_ok && sa_ok;
    }
    Ok(ok)
}
