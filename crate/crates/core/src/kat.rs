//! Embedded known-answer suites: SHA-3/SHAKE vectors and modular-reduction
//! sweeps against wide-integer arithmetic.

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::keccak::{sha3_224, sha3_256, sha3_384, sha3_512, shake128, shake256};
use crate::modmath::{ModulusProfile, SPECIALIZED_PARAMETERS, FERMAT_PRIME};

#[derive(Debug, Error)]
pub enum KatError {
    #[error("{file}:{line}: {reason}")]
    Parse { file: &'static str, line: usize, reason: String },
}

/// Result of one suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KatOutcome {
    pub name: String,
    pub total: usize,
    pub failures: Vec<String>,
}

impl KatOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashFunction {
    Sha3_224,
    Sha3_256,
    Sha3_384,
    Sha3_512,
    Shake128,
    Shake256,
}

impl HashFunction {
    pub const ALL: [HashFunction; 6] = [
        HashFunction::Sha3_224,
        HashFunction::Sha3_256,
        HashFunction::Sha3_384,
        HashFunction::Sha3_512,
        HashFunction::Shake128,
        HashFunction::Shake256,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HashFunction::Sha3_224 => "SHA3-224",
            HashFunction::Sha3_256 => "SHA3-256",
            HashFunction::Sha3_384 => "SHA3-384",
            HashFunction::Sha3_512 => "SHA3-512",
            HashFunction::Shake128 => "SHAKE128",
            HashFunction::Shake256 => "SHAKE256",
        }
    }

    fn file(self) -> (&'static str, &'static str) {
        match self {
            HashFunction::Sha3_224 => ("sha3_224.txt", include_str!("../kat/sha3_224.txt")),
            HashFunction::Sha3_256 => ("sha3_256.txt", include_str!("../kat/sha3_256.txt")),
            HashFunction::Sha3_384 => ("sha3_384.txt", include_str!("../kat/sha3_384.txt")),
            HashFunction::Sha3_512 => ("sha3_512.txt", include_str!("../kat/sha3_512.txt")),
            HashFunction::Shake128 => ("shake128.txt", include_str!("../kat/shake128.txt")),
            HashFunction::Shake256 => ("shake256.txt", include_str!("../kat/shake256.txt")),
        }
    }

    /// Output of `out_len` bytes; fixed-length modes ignore `out_len`.
    pub fn hash(self, msg: &[u8], out_len: usize) -> Vec<u8> {
        match self {
            HashFunction::Sha3_224 => sha3_224(msg).to_vec(),
            HashFunction::Sha3_256 => sha3_256(msg).to_vec(),
            HashFunction::Sha3_384 => sha3_384(msg).to_vec(),
            HashFunction::Sha3_512 => sha3_512(msg).to_vec(),
            HashFunction::Shake128 => shake128(msg, out_len),
            HashFunction::Shake256 => shake256(msg, out_len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashVector {
    pub bits: usize,
    pub msg: Vec<u8>,
    pub digest: Vec<u8>,
}

/// Parses `Len = / Msg = / MD =` records. A zero-length message is written
/// as `Msg = 00`.
pub fn hash_vectors(f: HashFunction) -> Result<Vec<HashVector>, KatError> {
    let (file, text) = f.file();
    let err = |line: usize, reason: String| KatError::Parse { file, line: line + 1, reason };
    let mut out = Vec::new();
    let mut bits: Option<usize> = None;
    let mut msg: Option<Vec<u8>> = None;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(no, format!("expected `key = value`, got {line:?}")))?;
        let value = value.trim();
        let bytes = || hex::decode(value).map_err(|e| err(no, e.to_string()));
        match key.trim() {
            "Len" => bits = Some(value.parse().map_err(|e| err(no, format!("{e}")))?),
            "Msg" => msg = Some(bytes()?),
            "MD" | "Squeezed" => {
                let (b, mut m) = bits.take().zip(msg.take()).ok_or_else(|| err(no, "digest before Len/Msg".into()))?;
                if b % 8 != 0 {
                    return Err(err(no, format!("bit length {b} is not byte aligned")));
                }
                m.truncate(b / 8);
                out.push(HashVector { bits: b, msg: m, digest: bytes()? });
            }
            other => return Err(err(no, format!("unknown key {other:?}"))),
        }
    }
    Ok(out)
}

pub fn run_hash_suite(f: HashFunction) -> Result<KatOutcome, KatError> {
    let vectors = hash_vectors(f)?;
    let failures = vectors
        .iter()
        .filter(|v| f.hash(&v.msg, v.digest.len()) != v.digest)
        .map(|v| format!("{} Len = {}", f.name(), v.bits))
        .collect();
    Ok(KatOutcome { name: f.name().to_string(), total: vectors.len(), failures })
}

pub fn run_fips202() -> Result<Vec<KatOutcome>, KatError> {
    HashFunction::ALL.iter().map(|&f| run_hash_suite(f)).collect()
}

/// Every reduction routine with a label: the dedicated blocks, the 2^16 + 1
/// folding, generic Barrett and power-of-two masking.
pub fn reduction_targets() -> Vec<(String, ModulusProfile)> {
    let mut out: Vec<(String, ModulusProfile)> = SPECIALIZED_PARAMETERS
        .iter()
        .map(|&(q, _, _)| (format!("specialized q = {q}"), ModulusProfile::specialized(q).expect("listed prime")))
        .collect();
    out.push((format!("fermat q = {FERMAT_PRIME}"), ModulusProfile::for_modulus(FERMAT_PRIME).expect("fermat prime")));
    for q in [3329, 12289, 8380417] {
        out.push((format!("generic barrett q = {q}"), ModulusProfile::generic(q).expect("prime below 2^24")));
    }
    for bits in [15, 16] {
        out.push((format!("mask q = 2^{bits}"), ModulusProfile::power_of_two(1 << bits).expect("power of two")));
    }
    out
}

/// Inputs around the ends of `[0, q^2)` and around multiples of `q`.
pub fn edge_inputs(q: u32) -> Vec<u64> {
    let q = q as u64;
    let top = q * q;
    let mut v = vec![0, 1, 2, q - 1, q, q + 1, 2 * q - 1, 2 * q, top - q - 1, top - q, top - 1];
    for k in [3, q / 2, q - 2, q - 1] {
        v.extend([k * q - 1, k * q, k * q + 1]);
    }
    for b in 1..64 {
        let p = 1u64 << b;
        if p < top {
            v.extend([p - 1, p]);
        }
    }
    v.retain(|&z| z < top);
    v.sort_unstable();
    v.dedup();
    v
}

/// Compares `reduce` with `u128 %` on the edge set plus `samples` uniform
/// draws from `[0, q^2)`.
pub fn sweep_reduction(label: &str, p: &ModulusProfile, samples: usize, seed: u64) -> KatOutcome {
    let q = p.q();
    let top = q as u64 * q as u64;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let edges = edge_inputs(q);
    let mut failures = Vec::new();
    let mut check = |z: u64| {
        let want = (z as u128 % q as u128) as u32;
        let got = p.reduce(z);
        if got != want && failures.len() < 8 {
            failures.push(format!("{label}: reduce({z}) = {got}, expected {want}"));
        }
    };
    edges.iter().copied().for_each(&mut check);
    for _ in 0..samples {
        check(rng.gen_range(0..top));
    }
    KatOutcome { name: label.to_string(), total: edges.len() + samples, failures }
}

pub fn run_reduction_sweeps(samples: usize, seed: u64) -> Vec<KatOutcome> {
    reduction_targets()
        .iter()
        .enumerate()
        .map(|(i, (label, p))| sweep_reduction(label, p, samples, seed.wrapping_add(i as u64)))
        .collect()
}
