//! Constant-geometry NTT over the banked polynomial cache.
//!
//! Every stage runs `n/2` butterflies with the same access pattern:
//!
//! * DIT (Cooley-Tukey): read `(2j, 2j+1)`, write `(j, j+n/2)`; bit-reversed
//!   input, natural-order output.
//! * DIF (Gentleman-Sande): read `(j, j+n/2)`, write `(2j, 2j+1)`; natural
//!   input, bit-reversed output.
//!
//! So `DIF_NTT` followed by `DIT_INTT` needs no explicit bit reversal.
//! Stage `s` (1-based) of butterfly `j` uses twiddle `w^k` with
//! `k = floor(j / 2^(lg n - s)) * 2^(lg n - s)` for DIT and
//! `k = floor(j / 2^(s - 1)) * 2^(s - 1)` for DIF.
//! Only `w^j` for `j < n/2` is stored; inverse twiddles come from
//! `w^-k = w^(n-k) = -w^(n/2-k)`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::modmath::{ModError, ModulusProfile};
use crate::polycache::{Bank, CacheError, PairKind, PolynomialCache, SlotId, MAX_DIM, MIN_DIM};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NttError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Modulus(#[from] ModError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("transform source {src} and destination {dst} are both in the {bank:?} bank")]
    SameBank { src: SlotId, dst: SlotId, bank: Bank },
    #[error("coefficient {value} at index {index} is not reduced mod {q}")]
    Unreduced { index: usize, value: u32, q: u32 },
    #[error("constants file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeConfig {
    pub n: usize,
    pub q: u32,
    pub profile: ModulusProfile,
    pub lg_n: u32,
}

impl LatticeConfig {
    pub fn new(n: usize, q: u32) -> Result<Self, NttError> {
        if !n.is_power_of_two() || !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(NttError::Config(format!(
                "n = {n} is not a power of two in [{MIN_DIM}, {MAX_DIM}]"
            )));
        }
        let profile = ModulusProfile::for_modulus(q)?;
        Ok(Self { n, q, profile, lg_n: n.trailing_zeros() })
    }

    pub fn supports_ntt(&self) -> bool {
        is_prime(self.q) && (self.q as u64 - 1) % (2 * self.n as u64) == 0
    }
}

pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Pre-computed roots: `w^j` (j < n/2), `psi^i` and `n^-1 psi^-i` (i < n).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NttConstants {
    pub n: usize,
    pub profile: ModulusProfile,
    pub omega_powers: Vec<u32>,
    pub psi_powers: Vec<u32>,
    pub psi_inv_scaled: Vec<u32>,
}

/// Finds `psi = g^((q-1)/2n)` for the smallest `g >= 2` with `psi^n = -1`.
pub fn gen_constants(cfg: &LatticeConfig) -> Result<NttConstants, NttError> {
    if !cfg.supports_ntt() {
        return Err(NttError::Config(format!(
            "q = {} is not a prime congruent to 1 mod 2n = {}",
            cfg.q,
            2 * cfg.n
        )));
    }
    let p = cfg.profile;
    let q = cfg.q;
    let exponent = (q as u64 - 1) / (2 * cfg.n as u64);
    let psi = (2..q)
        .map(|g| p.pow(g, exponent))
        .find(|&psi| p.pow(psi, cfg.n as u64) == q - 1)
        .ok_or_else(|| NttError::Config(format!("no primitive {}-th root mod {q}", 2 * cfg.n)))?;
    Ok(constants_from_psi(cfg.n, p, psi))
}

fn constants_from_psi(n: usize, p: ModulusProfile, psi: u32) -> NttConstants {
    let omega = p.mul(psi, psi);
    let powers = |base: u32, len: usize| {
        let mut v = Vec::with_capacity(len);
        let mut acc = 1;
        for _ in 0..len {
            v.push(acc);
            acc = p.mul(acc, base);
        }
        v
    };
    let n_inv = p.inv(n as u32 % p.q());
    let psi_inv = p.inv(psi);
    let psi_inv_scaled = powers(psi_inv, n).into_iter().map(|x| p.mul(x, n_inv)).collect();
    NttConstants {
        n,
        profile: p,
        omega_powers: powers(omega, n / 2),
        psi_powers: powers(psi, n),
        psi_inv_scaled,
    }
}

impl NttConstants {
    pub fn q(&self) -> u32 {
        self.profile.q()
    }

    pub fn psi(&self) -> u32 {
        self.psi_powers[1]
    }

    pub fn omega(&self) -> u32 {
        self.omega_powers[1]
    }

    /// `w^k` for forward transforms, `w^-k` for inverse ones; `k < n/2`.
    #[inline]
    pub fn twiddle(&self, k: usize, inverse: bool) -> u32 {
        if !inverse {
            self.omega_powers[k]
        } else if k == 0 {
            1
        } else {
            self.profile.neg(self.omega_powers[self.n / 2 - k])
        }
    }

    /// Checks every stored value against the defining relations.
    pub fn validate(&self) -> Result<(), NttError> {
        let n = self.n;
        let p = self.profile;
        let bad = |what: &str| Err(NttError::Config(format!("constants: {what}")));
        if self.omega_powers.len() != n / 2 || self.psi_powers.len() != n || self.psi_inv_scaled.len() != n {
            return bad("table lengths");
        }
        let all = self.omega_powers.iter().chain(&self.psi_powers).chain(&self.psi_inv_scaled);
        if all.into_iter().any(|&v| v >= p.q()) {
            return bad("unreduced entry");
        }
        let psi = self.psi();
        if p.pow(psi, n as u64) != p.q() - 1 {
            return bad("psi^n != -1");
        }
        let omega = p.mul(psi, psi);
        if p.pow(omega, n as u64 / 2) != p.q() - 1 {
            return bad("w^(n/2) != -1");
        }
        let expected = constants_from_psi(n, p, psi);
        if expected != *self {
            return bad("tables are not consecutive powers");
        }
        Ok(())
    }

    /// Text form: `q`, `n`, then one line per table.
    pub fn export(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "q {}", self.q());
        let _ = writeln!(s, "n {}", self.n);
        for (name, table) in [
            ("omega_powers", &self.omega_powers),
            ("psi_powers", &self.psi_powers),
            ("psi_inv_scaled", &self.psi_inv_scaled),
        ] {
            s.push_str(name);
            for v in table {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn import(text: &str) -> Result<Self, NttError> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default().to_string();
            let values = parts
                .map(|t| t.parse::<u64>().map_err(|e| NttError::Parse(format!("{key}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            fields.insert(key, values);
        }
        let scalar = |k: &str| -> Result<u64, NttError> {
            match fields.get(k).map(Vec::as_slice) {
                Some([v]) => Ok(*v),
                _ => Err(NttError::Parse(format!("missing or malformed `{k}`"))),
            }
        };
        let table = |k: &str| -> Result<Vec<u32>, NttError> {
            let v = fields.get(k).ok_or_else(|| NttError::Parse(format!("missing `{k}`")))?;
            v.iter()
                .map(|&x| u32::try_from(x).map_err(|_| NttError::Parse(format!("{k}: {x} too large"))))
                .collect()
        };
        let q = u32::try_from(scalar("q")?).map_err(|_| NttError::Parse("q too large".into()))?;
        let n = scalar("n")? as usize;
        let cfg = LatticeConfig::new(n, q)?;
        let consts = NttConstants {
            n,
            profile: cfg.profile,
            omega_powers: table("omega_powers")?,
            psi_powers: table("psi_powers")?,
            psi_inv_scaled: table("psi_inv_scaled")?,
        };
        consts.validate()?;
        Ok(consts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ButterflyKind {
    /// `(a + w b, a - w b)`
    CooleyTukey,
    /// `(a + b, (a - b) w)`
    GentlemanSande,
}

#[inline]
pub fn butterfly(a: u32, b: u32, w: u32, kind: ButterflyKind, p: &ModulusProfile) -> (u32, u32) {
    match kind {
        ButterflyKind::CooleyTukey => {
            let wb = p.mul(w, b);
            (p.add(a, wb), p.sub(a, wb))
        }
        ButterflyKind::GentlemanSande => (p.add(a, b), p.mul(p.sub(a, b), w)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NttMode {
    DifNtt,
    DifIntt,
    DitNtt,
    DitIntt,
}

impl NttMode {
    pub fn is_inverse(self) -> bool {
        matches!(self, NttMode::DifIntt | NttMode::DitIntt)
    }

    pub fn is_dif(self) -> bool {
        matches!(self, NttMode::DifNtt | NttMode::DifIntt)
    }
}

/// Twiddle exponent for butterfly `j` of stage `stage` (1-based).
#[inline]
pub fn twiddle_index(dif: bool, lg_n: u32, stage: u32, j: usize) -> usize {
    let shift = if dif { stage - 1 } else { lg_n - stage };
    (j >> shift) << shift
}

/// Cycles for one transform: `n/2` butterflies plus one per stage.
pub fn transform_cycles(n: usize) -> u64 {
    (n as u64 / 2 + 1) * n.trailing_zeros() as u64
}

/// Cycles for a coefficient-wise pass over one slot.
pub fn pointwise_cycles(n: usize) -> u64 {
    n as u64 + 1
}

fn check_dimension(cache: &PolynomialCache, consts: &NttConstants) -> Result<(), NttError> {
    if cache.n() != consts.n {
        return Err(NttError::Config(format!(
            "constants are for n = {} but the cache is configured for n = {}",
            consts.n,
            cache.n()
        )));
    }
    Ok(())
}

fn check_reduced(index: usize, value: u32, q: u32) -> Result<u32, NttError> {
    if value < q {
        Ok(value)
    } else {
        Err(NttError::Unreduced { index, value, q })
    }
}

/// Runs a transform from `src` into `dst`, which must sit in opposite banks.
/// Returns the cycles consumed; `src` is overwritten with intermediate data.
pub fn ntt(
    cache: &mut PolynomialCache,
    consts: &NttConstants,
    mode: NttMode,
    src: SlotId,
    dst: SlotId,
) -> Result<u64, NttError> {
    ntt_observed(cache, consts, mode, src, dst, |_, _, _| {})
}

/// Like [`ntt`], calling `observe(stage, cache, slot)` after each stage with the
/// slot holding that stage's output.
pub fn ntt_observed(
    cache: &mut PolynomialCache,
    consts: &NttConstants,
    mode: NttMode,
    src: SlotId,
    dst: SlotId,
    mut observe: impl FnMut(u32, &PolynomialCache, SlotId),
) -> Result<u64, NttError> {
    check_dimension(cache, consts)?;
    let src_bank = cache.bank_of(src)?;
    if src_bank == cache.bank_of(dst)? {
        return Err(NttError::SameBank { src, dst, bank: src_bank });
    }
    let n = consts.n;
    let lg_n = n.trailing_zeros();
    let p = consts.profile;
    let q = p.q();
    let dif = mode.is_dif();
    let inverse = mode.is_inverse();
    let (read_kind, write_kind, kind) = if dif {
        (PairKind::Strided, PairKind::Adjacent, ButterflyKind::GentlemanSande)
    } else {
        (PairKind::Adjacent, PairKind::Strided, ButterflyKind::CooleyTukey)
    };

    let start = cache.clock();
    let (mut from, mut to) = (src, dst);
    for stage in 1..=lg_n {
        for j in 0..n / 2 {
            let (a, b) = cache.read_pair(from, read_kind, j)?;
            if stage == 1 {
                check_reduced(j, a, q)?;
                check_reduced(j, b, q)?;
            }
            let w = consts.twiddle(twiddle_index(dif, lg_n, stage, j), inverse);
            cache.write_pair(to, write_kind, j, butterfly(a, b, w, kind, &p))?;
            cache.tick();
        }
        // Pipeline drain between stages.
        cache.tick();
        observe(stage, cache, to);
        std::mem::swap(&mut from, &mut to);
    }
    if from != dst {
        cache.swap_slots(src, dst)?;
    }
    Ok(cache.clock() - start)
}

fn scale_slot(cache: &mut PolynomialCache, p: &ModulusProfile, slot: SlotId, factors: &[u32]) -> Result<u64, NttError> {
    let start = cache.clock();
    let n = cache.n();
    let mut pending: Option<(usize, u32)> = None;
    // Reads run one cycle ahead of the write-back; neighbours never share an SRAM.
    for t in 0..=n {
        if let Some((i, v)) = pending.take() {
            cache.write(slot, i, v)?;
        }
        if t < n {
            let a = check_reduced(t, cache.read(slot, t)?, p.q())?;
            pending = Some((t, p.mul(a, factors[t])));
        }
        cache.tick();
    }
    Ok(cache.clock() - start)
}

/// Multiplies coefficient `i` by `psi^i`.
pub fn mult_psi(cache: &mut PolynomialCache, consts: &NttConstants, slot: SlotId) -> Result<u64, NttError> {
    check_dimension(cache, consts)?;
    scale_slot(cache, &consts.profile, slot, &consts.psi_powers)
}

/// Multiplies coefficient `i` by `n^-1 psi^-i`.
pub fn mult_psi_inv(cache: &mut PolynomialCache, consts: &NttConstants, slot: SlotId) -> Result<u64, NttError> {
    check_dimension(cache, consts)?;
    scale_slot(cache, &consts.profile, slot, &consts.psi_inv_scaled)
}

pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}
