//! Discrete-distribution samplers fed by 32-bit words of SHAKE output.
//!
//! Every sampler takes its randomness from any `Iterator<Item = u32>`, so
//! tests can script exact word sequences. [`Prng`] is the production source.
//! Leftover bits of a word are discarded after each draw.

use std::fmt::Write as _;

use thiserror::Error;

use crate::keccak::{KeccakState, SpongeMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("sampler configuration: {0}")]
    Config(String),
    #[error("CDT file: {0}")]
    Parse(String),
}

fn config<T>(msg: impl Into<String>) -> Result<T, SamplerError> {
    Err(SamplerError::Config(msg.into()))
}

#[inline]
fn mask(bits: u32) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1 << bits) - 1
    }
}

fn draw(words: &mut impl Iterator<Item = u32>) -> u32 {
    words.next().expect("word source exhausted")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrngMode {
    Shake128,
    Shake256,
}

impl PrngMode {
    fn sponge(self) -> SpongeMode {
        match self {
            PrngMode::Shake128 => SpongeMode::Shake128,
            PrngMode::Shake256 => SpongeMode::Shake256,
        }
    }
}

/// SHAKE stream over `seed || c0 (u16 LE) || c1 (u16 LE)`.
#[derive(Debug, Clone)]
pub struct Prng {
    sponge: KeccakState,
    words: u64,
}

impl Prng {
    pub fn new(mode: PrngMode, seed: &[u8; 32], c0: u16, c1: u16) -> Self {
        let mut sponge = KeccakState::new(mode.sponge());
        let mut block = [0u8; 36];
        block[..32].copy_from_slice(seed);
        block[32..34].copy_from_slice(&c0.to_le_bytes());
        block[34..].copy_from_slice(&c1.to_le_bytes());
        sponge.absorb(&block).expect("fresh sponge accepts input");
        sponge.finalize();
        Self { sponge, words: 0 }
    }

    pub fn words_drawn(&self) -> u64 {
        self.words
    }

    pub fn permutations(&self) -> u64 {
        self.sponge.permutations()
    }
}

impl Iterator for Prng {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        self.words += 1;
        Some(self.sponge.next_word())
    }
}

/// Stores a small signed value as a residue in `[0, q)`.
#[inline]
pub fn to_residue(v: i32, q: u32) -> u32 {
    if v < 0 {
        q - v.unsigned_abs()
    } else {
        v as u32
    }
}

pub fn to_residues(values: &[i32], q: u32) -> Vec<u32> {
    values.iter().map(|&v| to_residue(v, q)).collect()
}

/// Maps a residue to `(-q/2, q/2]`.
#[inline]
pub fn centered(x: u32, q: u32) -> i64 {
    if x > q / 2 {
        x as i64 - q as i64
    } else {
        x as i64
    }
}

/// Rejection-bound scale per prime: accepting below `scale * q` cuts rejections.
pub const REJECTION_SCALES: [(u32, u32); 12] = [
    (7681, 1),
    (12289, 5),
    (40961, 3),
    (65537, 7),
    (120833, 1),
    (133121, 7),
    (184321, 11),
    (8380417, 1),
    (8058881, 1),
    (4205569, 7),
    (4206593, 7),
    (8404993, 7),
];

pub fn default_scale(q: u32) -> u32 {
    REJECTION_SCALES.iter().find(|&&(p, _)| p == q).map_or(1, |&(_, s)| s)
}

/// Uniform sampling over `[0, q)` by rejection below `scale * q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RejectionPlan {
    pub q: u32,
    pub scale: u32,
    pub cand_bits: u32,
    pub reduce_m: u64,
    pub reduce_k: u32,
}

impl RejectionPlan {
    pub fn new(q: u32, scale: u32) -> Result<Self, SamplerError> {
        if q < 2 || scale == 0 {
            return config(format!("rejection plan needs q >= 2 and scale >= 1 (q = {q}, scale = {scale})"));
        }
        let bound = q as u64 * scale as u64;
        let cand_bits = 64 - (bound - 1).leading_zeros();
        if cand_bits > 32 {
            return config(format!("bound {bound} exceeds a 32-bit word"));
        }
        // Smallest shift whose quotient estimate is off by at most one on [0, bound).
        let (reduce_m, reduce_k) = (1..=63u32)
            .map(|k| ((1u64 << k) / q as u64, k))
            .find(|&(m, k)| m > 0 && (bound - 1) as u128 * ((1u128 << k) % q as u128) < (q as u128) << k)
            .expect("k = cand_bits always qualifies");
        Ok(Self { q, scale, cand_bits, reduce_m, reduce_k })
    }

    pub fn with_default_scale(q: u32) -> Result<Self, SamplerError> {
        Self::new(q, default_scale(q))
    }

    pub fn bound(&self) -> u64 {
        self.q as u64 * self.scale as u64
    }

    pub fn candidate(&self, word: u32) -> u32 {
        word & mask(self.cand_bits)
    }

    /// Folds an accepted candidate into `[0, q)`, or `None` if rejected.
    pub fn accept(&self, cand: u32) -> Option<u32> {
        if cand as u64 >= self.bound() {
            return None;
        }
        let quotient = (cand as u64 * self.reduce_m) >> self.reduce_k;
        let r = cand as u64 - quotient * self.q as u64;
        Some(if r >= self.q as u64 { r - self.q as u64 } else { r } as u32)
    }

    pub fn rejection_probability(&self) -> f64 {
        1.0 - self.bound() as f64 / (1u64 << self.cand_bits) as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionStats {
    pub candidates: u64,
    pub rejected: u64,
}

pub fn rej_sample(
    n: usize,
    plan: &RejectionPlan,
    words: &mut impl Iterator<Item = u32>,
) -> (Vec<u32>, RejectionStats) {
    let mut out = Vec::with_capacity(n);
    let mut stats = RejectionStats::default();
    while out.len() < n {
        stats.candidates += 1;
        match plan.accept(plan.candidate(draw(words))) {
            Some(v) => out.push(v),
            None => stats.rejected += 1,
        }
    }
    (out, stats)
}

/// Centered binomial: `HW(a) - HW(b)` for two `k`-bit chunks.
/// Both chunks share one word when `2k <= 32`, otherwise each takes a word.
pub fn bin_sample(n: usize, k: u32, words: &mut impl Iterator<Item = u32>) -> Result<Vec<i32>, SamplerError> {
    if !(1..=32).contains(&k) {
        return config(format!("binomial k = {k} outside [1, 32]"));
    }
    let m = mask(k);
    Ok((0..n)
        .map(|_| {
            let (a, b) = if 2 * k <= 32 {
                let w = draw(words);
                (w & m, (w.checked_shr(k).unwrap_or(0)) & m)
            } else {
                (draw(words) & m, draw(words) & m)
            };
            a.count_ones() as i32 - b.count_ones() as i32
        })
        .collect())
}

/// Cumulative table for inversion sampling: `s` entries below `2^r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdtTable {
    entries: Vec<u32>,
    precision: u32,
}

pub const CDT_MAX_ENTRIES: usize = 64;
pub const CDT_MAX_PRECISION: u32 = 32;

impl CdtTable {
    pub fn new(entries: Vec<u32>, precision: u32) -> Result<Self, SamplerError> {
        if !(1..=CDT_MAX_PRECISION).contains(&precision) {
            return config(format!("CDT precision {precision} outside [1, {CDT_MAX_PRECISION}]"));
        }
        if entries.is_empty() || entries.len() > CDT_MAX_ENTRIES {
            return config(format!("CDT needs 1..={CDT_MAX_ENTRIES} entries, got {}", entries.len()));
        }
        if let Some(&e) = entries.iter().find(|&&e| e as u64 >= 1u64 << precision) {
            return config(format!("CDT entry {e} is not below 2^{precision}"));
        }
        if entries.windows(2).any(|w| w[0] > w[1]) {
            return config("CDT entries must be nondecreasing");
        }
        Ok(Self { entries, precision })
    }

    /// Table for a Gaussian of width `sigma` truncated to `[-s, s]`.
    ///
    /// `T[z] = round(2^r (P(0) + 2 sum_{i=1..z} P(i))) - 1`, so the magnitude
    /// drawn from `r` bits follows the folded distribution and the sign bit
    /// splits it evenly.
    pub fn from_gaussian(sigma: f64, s: usize, precision: u32) -> Result<Self, SamplerError> {
        if !(sigma > 0.0) || s == 0 || s > CDT_MAX_ENTRIES {
            return config(format!("Gaussian table needs sigma > 0 and 1 <= s <= {CDT_MAX_ENTRIES}"));
        }
        let rho = |i: usize| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp();
        let total: f64 = rho(0) + 2.0 * (1..=s).map(rho).sum::<f64>();
        let scale = (1u64 << precision) as f64;
        let mut folded = rho(0) / total;
        let mut entries = Vec::with_capacity(s);
        for z in 0..s {
            if z > 0 {
                folded += 2.0 * rho(z) / total;
            }
            let t = (scale * folded).round() as i64 - 1;
            if t < 0 {
                return config(format!("precision {precision} too low for sigma = {sigma}"));
            }
            entries.push(t.min(scale as i64 - 1) as u32);
        }
        Self::new(entries, precision)
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Probability of each value in `-s..=s` implied by the table.
    pub fn pmf(&self) -> Vec<f64> {
        let s = self.support();
        let scale = (1u64 << self.precision) as f64;
        let upper = |c: usize| -> f64 {
            if c == s {
                scale - 1.0
            } else {
                self.entries[c] as f64
            }
        };
        let magnitude: Vec<f64> = (0..=s)
            .map(|c| {
                let lower = if c == 0 { -1.0 } else { upper(c - 1) };
                (upper(c) - lower) / scale
            })
            .collect();
        let mut pmf = vec![0.0; 2 * s + 1];
        pmf[s] = magnitude[0];
        for c in 1..=s {
            pmf[s + c] = magnitude[c] / 2.0;
            pmf[s - c] = magnitude[c] / 2.0;
        }
        pmf
    }

    /// Text form: precision, support bound, then the entries.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n{}\n", self.precision, self.entries.len());
        for e in &self.entries {
            let _ = writeln!(s, "{e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SamplerError> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<u64>().map_err(|e| SamplerError::Parse(format!("`{t}`: {e}"))));
        let mut next = |what: &str| {
            tokens.next().unwrap_or_else(|| Err(SamplerError::Parse(format!("missing {what}"))))
        };
        let precision = next("precision")?;
        let s = next("support bound")?;
        if precision > CDT_MAX_PRECISION as u64 || s > CDT_MAX_ENTRIES as u64 {
            return Err(SamplerError::Parse(format!("precision {precision} or bound {s} out of range")));
        }
        let entries = (0..s)
            .map(|i| {
                let v = next(&format!("entry {i}"))?;
                u32::try_from(v).map_err(|_| SamplerError::Parse(format!("entry {v} too large")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if tokens.next().is_some() {
            return Err(SamplerError::Parse(format!("more than {s} entries")));
        }
        Self::new(entries, precision as u32)
    }
}

/// One inversion draw: full scan of the table, then apply the sign bit.
/// Returns the sample and the number of comparisons made.
#[inline]
pub fn cdt_draw(table: &CdtTable, sign: u32, r1: u32) -> (i32, u32) {
    let mut e = 0i32;
    let mut trips = 0;
    for &t in &table.entries {
        e += (r1 > t) as i32;
        trips += 1;
    }
    let flip = -((sign & 1) as i32);
    ((e ^ flip) - flip, trips)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CdtStats {
    pub comparisons: u64,
}

/// `r1` is the low `r` bits of a word and the sign its bit `r`; at `r = 32`
/// the sign comes from a second word.
pub fn cdt_sample(n: usize, table: &CdtTable, words: &mut impl Iterator<Item = u32>) -> (Vec<i32>, CdtStats) {
    let r = table.precision;
    let mut stats = CdtStats::default();
    let out = (0..n)
        .map(|_| {
            let w = draw(words);
            let (r1, sign) = if r < 32 { (w & mask(r), w >> r) } else { (w, draw(words)) };
            let (e, trips) = cdt_draw(table, sign, r1);
            stats.comparisons += trips as u64;
            e
        })
        .collect();
    (out, stats)
}

/// Uniform over `[-eta, eta]` from `bitlen`-bit candidates.
pub fn uni_sample(
    n: usize,
    eta: u32,
    bitlen: u32,
    words: &mut impl Iterator<Item = u32>,
) -> Result<(Vec<i32>, RejectionStats), SamplerError> {
    if bitlen > 32 || (2 * eta as u64 + 1) > 1u64 << bitlen || eta > i32::MAX as u32 / 2 {
        return config(format!("uniform bound eta = {eta} does not fit in {bitlen} bits"));
    }
    let width = 2 * eta + 1;
    let mut out = Vec::with_capacity(n);
    let mut stats = RejectionStats::default();
    while out.len() < n {
        stats.candidates += 1;
        let c = draw(words) & mask(bitlen);
        if c < width {
            out.push(c as i32 - eta as i32);
        } else {
            stats.rejected += 1;
        }
    }
    Ok((out, stats))
}

fn position_bits(n: usize) -> u32 {
    n.next_power_of_two().trailing_zeros()
}

/// `m` nonzero entries at distinct positions; a sign is drawn with every
/// position, rejected or not.
pub fn tri_sample_fixed(n: usize, m: usize, words: &mut impl Iterator<Item = u32>) -> Result<Vec<i32>, SamplerError> {
    if m >= n {
        return config(format!("trinary weight m = {m} must be below n = {n}"));
    }
    let bits = position_bits(n);
    let mut s = vec![0i32; n];
    let mut placed = 0;
    while placed < m {
        let w = draw(words);
        let pos = (w & mask(bits)) as usize;
        let sign = (w >> bits) & 1;
        if pos < n && s[pos] == 0 {
            s[pos] = if sign == 0 { 1 } else { -1 };
            placed += 1;
        }
    }
    Ok(s)
}

/// `m0` entries of +1 then `m1` entries of -1 at distinct positions.
pub fn tri_sample_split(
    n: usize,
    m0: usize,
    m1: usize,
    words: &mut impl Iterator<Item = u32>,
) -> Result<Vec<i32>, SamplerError> {
    if m0 + m1 >= n {
        return config(format!("trinary weights {m0} + {m1} must be below n = {n}"));
    }
    let bits = position_bits(n);
    let mut s = vec![0i32; n];
    for (count, value) in [(m0, 1), (m1, -1)] {
        let mut placed = 0;
        while placed < count {
            let pos = (draw(words) & mask(bits)) as usize;
            if pos < n && s[pos] == 0 {
                s[pos] = value;
                placed += 1;
            }
        }
    }
    Ok(s)
}

/// Per coefficient `x` in `[0, 2^k)`: 0 gives +1, 1 gives -1, anything else 0.
/// Each of +1 and -1 therefore has probability `2^-k`.
pub fn tri_sample_prob(n: usize, k: u32, words: &mut impl Iterator<Item = u32>) -> Result<Vec<i32>, SamplerError> {
    if !(1..=7).contains(&k) {
        return config(format!("trinary k = {k} outside [1, 7]"));
    }
    Ok((0..n)
        .map(|_| match draw(words) & mask(k) {
            0 => 1,
            1 => -1,
            _ => 0,
        })
        .collect())
}
