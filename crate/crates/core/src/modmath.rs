//! Arithmetic in Z_q for moduli below 2^24.
//!
//! Residues travel as `u32`, products as `u64`. Every conditional correction is
//! a mask select, so timing does not depend on operand values.

use thiserror::Error;

/// Exclusive upper bound on supported moduli.
pub const MODULUS_LIMIT: u32 = 1 << 24;

const MASK24: u32 = MODULUS_LIMIT - 1;

/// Barrett parameters `(q, m, k)` hard-wired in the pseudo-configurable multiplier.
pub const SPECIALIZED_PARAMETERS: [(u32, u32, u32); 11] = [
    (7681, 273, 21),
    (12289, 10921, 27),
    (40961, 52427, 31),
    (120833, 71089, 33),
    (133121, 64527, 33),
    (184321, 46603, 33),
    (8380417, 8396807, 46),
    (8058881, 8731825, 46),
    (4205569, 4183069, 44),
    (4206593, 2091025, 43),
    (8404993, 4186127, 45),
];

pub const FERMAT_PRIME: u32 = 65537;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModError {
    #[error("operand {value} is out of range for modulus {q} (limit {limit})")]
    OutOfRange { value: u64, q: u32, limit: u64 },
    #[error("modulus configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    GenericBarrett,
    SpecializedBarrett,
    PowerOfTwo,
    Fermat65537,
}

/// A modulus together with the reduction method used for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModulusProfile {
    q: u32,
    strategy: Strategy,
    // Zero when the strategy has no Barrett constants.
    m: u32,
    k: u32,
}

fn check_modulus(q: u32) -> Result<(), ModError> {
    if (2..MODULUS_LIMIT).contains(&q) {
        Ok(())
    } else {
        Err(ModError::Config(format!("modulus {q} outside [2, 2^24)")))
    }
}

/// True when `m = floor(2^k / q)` satisfies `1/q - m/2^k < 1/q^2`, i.e. a single
/// conditional subtraction finishes the reduction of any `z < q^2`.
pub fn barrett_is_valid(q: u32, m: u32, k: u32) -> bool {
    if k > 63 || q < 2 {
        return false;
    }
    let pow = 1u128 << k;
    let q = q as u128;
    if pow / q != m as u128 {
        return false;
    }
    let residual = pow - m as u128 * q;
    residual * q < pow
}

/// Smallest `k` in [16, 48] giving a valid Barrett pair with `m < 2^24`.
pub fn derive_barrett(q: u32) -> Result<(u32, u32), ModError> {
    check_modulus(q)?;
    for k in 16..=48u32 {
        let m = (1u128 << k) / q as u128;
        if m >= MODULUS_LIMIT as u128 {
            break;
        }
        if barrett_is_valid(q, m as u32, k) {
            return Ok((m as u32, k));
        }
    }
    Err(ModError::Config(format!(
        "no Barrett pair with 16 <= k <= 48 and m < 2^24 for q = {q}"
    )))
}

impl ModulusProfile {
    /// Generic Barrett with parameters derived from `q`.
    pub fn generic(q: u32) -> Result<Self, ModError> {
        let (m, k) = derive_barrett(q)?;
        Ok(Self { q, strategy: Strategy::GenericBarrett, m, k })
    }

    /// Generic Barrett with caller-supplied parameters, validated up front.
    pub fn generic_with(q: u32, m: u32, k: u32) -> Result<Self, ModError> {
        check_modulus(q)?;
        if !(16..=48).contains(&k) {
            return Err(ModError::Config(format!("Barrett shift {k} outside [16, 48]")));
        }
        if m >= MODULUS_LIMIT {
            return Err(ModError::Config(format!("Barrett multiplier {m} needs more than 24 bits")));
        }
        if !barrett_is_valid(q, m, k) {
            return Err(ModError::Config(format!(
                "(m = {m}, k = {k}) is not a valid Barrett pair for q = {q}"
            )));
        }
        Ok(Self { q, strategy: Strategy::GenericBarrett, m, k })
    }

    /// One of the hard-wired routines: a listed Barrett prime or 65537.
    pub fn specialized(q: u32) -> Result<Self, ModError> {
        if q == FERMAT_PRIME {
            return Ok(Self { q, strategy: Strategy::Fermat65537, m: 0, k: 0 });
        }
        SPECIALIZED_PARAMETERS
            .iter()
            .find(|p| p.0 == q)
            .map(|&(q, m, k)| Self { q, strategy: Strategy::SpecializedBarrett, m, k })
            .ok_or_else(|| ModError::Config(format!("no specialized reduction for q = {q}")))
    }

    pub fn power_of_two(q: u32) -> Result<Self, ModError> {
        check_modulus(q)?;
        if !q.is_power_of_two() {
            return Err(ModError::Config(format!("{q} is not a power of two")));
        }
        Ok(Self { q, strategy: Strategy::PowerOfTwo, m: 0, k: 0 })
    }

    /// Picks the cheapest available strategy for `q`.
    pub fn for_modulus(q: u32) -> Result<Self, ModError> {
        check_modulus(q)?;
        if q.is_power_of_two() {
            Self::power_of_two(q)
        } else if let Ok(p) = Self::specialized(q) {
            Ok(p)
        } else {
            Self::generic(q)
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn barrett_m(&self) -> Option<u32> {
        self.has_barrett().then_some(self.m)
    }

    pub fn barrett_k(&self) -> Option<u32> {
        self.has_barrett().then_some(self.k)
    }

    fn has_barrett(&self) -> bool {
        matches!(self.strategy, Strategy::GenericBarrett | Strategy::SpecializedBarrett)
    }

    /// Modular addition with a 24-bit adder: keep `s = x + y` or `d = s - q`
    /// depending on the carry out of the sum and the borrow out of the difference.
    /// Requires `x, y < q`.
    #[inline]
    pub fn add(&self, x: u32, y: u32) -> u32 {
        debug_assert!(x < self.q && y < self.q);
        let sum = x + y;
        let carry = sum >> 24;
        let s = sum & MASK24;
        let diff = s.wrapping_sub(self.q);
        let borrow = diff >> 31;
        let d = diff & MASK24;
        let take_d = carry | (borrow ^ 1);
        let mask = 0u32.wrapping_sub(take_d);
        (d & mask) | (s & !mask)
    }

    /// Modular subtraction: `d = x - y`, then `d + q` if the subtraction borrowed.
    /// Requires `x, y < q`.
    #[inline]
    pub fn sub(&self, x: u32, y: u32) -> u32 {
        debug_assert!(x < self.q && y < self.q);
        let diff = x.wrapping_sub(y);
        let borrow = diff >> 31;
        let d = diff & MASK24;
        let s = d.wrapping_add(self.q) & MASK24;
        let mask = 0u32.wrapping_sub(borrow);
        (s & mask) | (d & !mask)
    }

    /// Requires `x, y < q`.
    #[inline]
    pub fn mul(&self, x: u32, y: u32) -> u32 {
        debug_assert!(x < self.q && y < self.q);
        self.reduce(x as u64 * y as u64)
    }

    #[inline]
    pub fn neg(&self, x: u32) -> u32 {
        self.sub(0, x)
    }

    /// Reduces `z < q^2` to `[0, q)`.
    #[inline]
    pub fn reduce(&self, z: u64) -> u32 {
        debug_assert!((z as u128) < (self.q as u128).pow(2));
        match self.strategy {
            Strategy::PowerOfTwo => (z & (self.q as u64 - 1)) as u32,
            Strategy::Fermat65537 => reduce_65537(z),
            Strategy::GenericBarrett => barrett(z, self.q, self.m, self.k),
            Strategy::SpecializedBarrett => specialized_reduce(z, self.q),
        }
    }

    /// `x^e mod q` by square-and-multiply.
    pub fn pow(&self, x: u32, mut e: u64) -> u32 {
        let mut base = x % self.q;
        let mut acc = 1 % self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem; `q` must be prime.
    pub fn inv(&self, x: u32) -> u32 {
        self.pow(x, self.q as u64 - 2)
    }
}

#[inline]
fn select_sub(z: u64, q: u64) -> u64 {
    let d = z.wrapping_sub(q);
    let keep_z = ((d as i64) >> 63) as u64;
    (d & !keep_z) | (z & keep_z)
}

#[inline]
fn barrett(z: u64, q: u32, m: u32, k: u32) -> u32 {
    let t = ((z as u128 * m as u128) >> k) as u64;
    select_sub(z - t * q as u64, q as u64) as u32
}

/// `x = x2*2^32 + x1*2^16 + x0`, and `2^16 = -1`, so `x = x0 - x1 + x2`.
#[inline]
fn reduce_65537(x: u64) -> u32 {
    let x0 = (x & 0xFFFF) as i64;
    let x1 = ((x >> 16) & 0xFFFF) as i64;
    let x2 = (x >> 32) as i64;
    let z = x0 - x1 + x2;
    let fix = (z >> 63) & FERMAT_PRIME as i64;
    (z + fix) as u32
}

#[inline]
fn specialized_reduce(x: u64, q: u32) -> u32 {
    let z = match q {
        7681 => {
            let t = (x << 8) + (x << 4) + x;
            let t = t >> 21;
            let t = (t << 13) - (t << 9) + t;
            x - t
        }
        12289 => {
            let t = 10921 * x;
            let t = t >> 27;
            let t = (t << 13) + (t << 12) + t;
            x - t
        }
        40961 => {
            let t = 52427 * x;
            let t = t >> 31;
            let t = (t << 15) + (t << 13) + t;
            x - t
        }
        120833 => {
            let t = 71089 * x;
            let t = t >> 33;
            let t = (t << 17) - (t << 14) + (t << 13) - (t << 11) + t;
            x - t
        }
        133121 => {
            let t = (x << 16) - (x << 10) + (x << 4) - x;
            let t = t >> 33;
            let t = (t << 17) + (t << 11) + t;
            x - t
        }
        184321 => {
            let t = 46603 * x;
            let t = t >> 33;
            let t = (t << 17) + (t << 15) + (t << 14) + (t << 12) + t;
            x - t
        }
        // The 23/24-bit primes have m*x up to 2^71.
        8380417 => {
            let w = x as u128;
            let t = (w << 23) + (w << 13) + (w << 3) - w;
            let t = (t >> 46) as u64;
            let t = (t << 23) - (t << 13) + t;
            x - t
        }
        8058881 => {
            let t = 8731825 * x as u128;
            let t = (t >> 46) as u64;
            let t = 8058881 * t;
            x - t
        }
        4205569 => {
            let t = 4183069 * x as u128;
            let t = (t >> 44) as u64;
            let t = (t << 22) + (t << 13) + (t << 11) + (t << 10) + t;
            x - t
        }
        4206593 => {
            let w = x as u128;
            let t = (w << 21) - (w << 13) + (w << 11) + (w << 4) + w;
            let t = (t >> 43) as u64;
            let t = (t << 22) + (t << 13) + (t << 12) + t;
            x - t
        }
        8404993 => {
            let w = x as u128;
            let t = (w << 22) - (w << 13) + (w << 4) - w;
            let t = (t >> 45) as u64;
            let t = (t << 23) + (t << 14) + t;
            x - t
        }
        _ => unreachable!("profile constructor admits only listed primes"),
    };
    select_sub(z, q as u64) as u32
}

fn check_residue(x: u32, p: &ModulusProfile) -> Result<(), ModError> {
    if x < p.q {
        Ok(())
    } else {
        Err(ModError::OutOfRange { value: x as u64, q: p.q, limit: p.q as u64 })
    }
}

/// Checked modular addition.
pub fn mod_add(x: u32, y: u32, p: &ModulusProfile) -> Result<u32, ModError> {
    check_residue(x, p)?;
    check_residue(y, p)?;
    Ok(p.add(x, y))
}

/// Checked modular subtraction.
pub fn mod_sub(x: u32, y: u32, p: &ModulusProfile) -> Result<u32, ModError> {
    check_residue(x, p)?;
    check_residue(y, p)?;
    Ok(p.sub(x, y))
}

/// Checked modular multiplication.
pub fn mod_mul(x: u32, y: u32, p: &ModulusProfile) -> Result<u32, ModError> {
    check_residue(x, p)?;
    check_residue(y, p)?;
    Ok(p.mul(x, y))
}

/// Checked reduction of `z < q^2`.
pub fn reduce(z: u64, p: &ModulusProfile) -> Result<u32, ModError> {
    let limit = p.q as u64 * p.q as u64;
    if z >= limit {
        return Err(ModError::OutOfRange { value: z, q: p.q, limit });
    }
    Ok(p.reduce(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Wide-integer reference.
    fn oracle(z: u128, q: u32) -> u32 {
        (z % q as u128) as u32
    }

    fn all_profiles() -> Vec<ModulusProfile> {
        let mut v: Vec<_> = SPECIALIZED_PARAMETERS
            .iter()
            .map(|p| ModulusProfile::specialized(p.0).unwrap())
            .collect();
        v.push(ModulusProfile::specialized(FERMAT_PRIME).unwrap());
        v.extend(SPECIALIZED_PARAMETERS.iter().map(|p| ModulusProfile::generic(p.0).unwrap()));
        v.push(ModulusProfile::generic(FERMAT_PRIME).unwrap());
        v.push(ModulusProfile::power_of_two(1 << 15).unwrap());
        v.push(ModulusProfile::power_of_two(1 << 16).unwrap());
        v
    }

    #[test]
    fn add_examples() {
        let p7681 = ModulusProfile::specialized(7681).unwrap();
        let p12289 = ModulusProfile::specialized(12289).unwrap();
        assert_eq!(mod_add(0, 0, &p7681), Ok(0));
        assert_eq!(mod_add(12288, 12288, &p12289), Ok(12287));
        assert_eq!(oracle(7000 + 5000, 7681), 4319);
        assert_eq!(mod_add(7000, 5000, &p7681), Ok(4319));
    }

    #[test]
    fn sub_examples() {
        let p7681 = ModulusProfile::specialized(7681).unwrap();
        let p12289 = ModulusProfile::specialized(12289).unwrap();
        assert_eq!(mod_sub(5, 5, &p7681), Ok(0));
        assert_eq!(mod_sub(0, 1, &p12289), Ok(12288));
        assert_eq!(oracle(123 + 12289 - 9876, 12289), 2536);
        assert_eq!(mod_sub(123, 9876, &p12289), Ok(2536));
    }

    #[test]
    fn mul_examples() {
        let p7681 = ModulusProfile::specialized(7681).unwrap();
        let p12289 = ModulusProfile::specialized(12289).unwrap();
        assert_eq!(mod_mul(7680, 7680, &p7681), Ok(1));
        for y in [0, 1, 5000, 7680] {
            assert_eq!(mod_mul(1, y, &p7681), Ok(y));
        }
        let x = 12345 % 12289;
        assert_eq!(oracle(x as u128 * 6789, 12289), 11514);
        assert_eq!(mod_mul(x, 6789, &p12289), Ok(11514));
    }

    #[test]
    fn reduce_examples() {
        let f = ModulusProfile::specialized(FERMAT_PRIME).unwrap();
        assert_eq!(reduce(1 << 32, &f), Ok(1));
        let p = ModulusProfile::specialized(7681).unwrap();
        assert_eq!((p.barrett_m(), p.barrett_k()), (Some(273), Some(21)));
        let p = ModulusProfile::specialized(8380417).unwrap();
        assert_eq!((p.barrett_m(), p.barrett_k()), (Some(8396807), Some(46)));
        for p in all_profiles() {
            for x in [0, 1, p.q() / 2, p.q() - 1] {
                assert_eq!(p.reduce(x as u64), x, "{p:?}");
            }
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        let p = ModulusProfile::specialized(7681).unwrap();
        assert!(matches!(mod_add(7681, 0, &p), Err(ModError::OutOfRange { .. })));
        assert!(matches!(mod_sub(0, 9000, &p), Err(ModError::OutOfRange { .. })));
        assert!(matches!(mod_mul(7681, 1, &p), Err(ModError::OutOfRange { .. })));
        assert!(reduce(7681 * 7681, &p).is_err());
        assert!(reduce(7681 * 7681 - 1, &p).is_ok());
    }

    #[test]
    fn unsupported_specialized_prime_is_a_config_error() {
        assert!(matches!(ModulusProfile::specialized(3329), Err(ModError::Config(_))));
        assert!(ModulusProfile::power_of_two(12289).is_err());
        assert!(ModulusProfile::generic(1 << 24).is_err());
    }

    #[test]
    fn specialized_parameters_are_derivable_and_valid() {
        for &(q, m, k) in &SPECIALIZED_PARAMETERS {
            assert_eq!((1u128 << k) / q as u128, m as u128, "q = {q}");
            assert!(barrett_is_valid(q, m, k), "q = {q}");
            // The hard-wired k is the smallest admissible one.
            assert_eq!(derive_barrett(q).unwrap(), (m, k), "q = {q}");
        }
    }

    #[test]
    fn generic_with_validates_eagerly() {
        assert!(ModulusProfile::generic_with(7681, 273, 21).is_ok());
        assert!(ModulusProfile::generic_with(7681, 274, 21).is_err());
        assert!(ModulusProfile::generic_with(7681, 136, 20).is_err());
        assert!(ModulusProfile::generic_with(7681, 1, 12).is_err());
    }

    #[test]
    fn barrett_quotient_estimate_is_within_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(q, m, k) in &SPECIALIZED_PARAMETERS {
            let q2 = q as u64 * q as u64;
            for _ in 0..20_000 {
                let z = rng.gen_range(0..q2);
                let est = (z as u128 * m as u128) >> k;
                let exact = (z / q as u64) as u128;
                assert!(est == exact || est + 1 == exact, "q = {q}, z = {z}");
            }
        }
    }

    #[test]
    fn edge_values_match_oracle() {
        for p in all_profiles() {
            let q = p.q() as u64;
            let q2 = q * q;
            for z in [0, 1, q - 1, q, q + 1, 2 * q - 1, q2 - 1, q2 - q, q2 - 2] {
                assert_eq!(p.reduce(z), oracle(z as u128, p.q()), "{p:?} z = {z}");
            }
        }
    }

    proptest! {
        #[test]
        fn reduce_matches_oracle(z in any::<u64>(), idx in 0usize..26) {
            let p = all_profiles()[idx];
            let z = z % (p.q() as u64 * p.q() as u64);
            prop_assert_eq!(p.reduce(z), oracle(z as u128, p.q()));
        }

        #[test]
        fn specialized_agrees_with_generic(z in any::<u64>(), idx in 0usize..11) {
            let q = SPECIALIZED_PARAMETERS[idx].0;
            let z = z % (q as u64 * q as u64);
            let s = ModulusProfile::specialized(q).unwrap();
            let g = ModulusProfile::generic(q).unwrap();
            prop_assert_eq!(s.reduce(z), g.reduce(z));
        }

        #[test]
        fn add_sub_mul_laws(x in any::<u32>(), y in any::<u32>(), idx in 0usize..26) {
            let p = all_profiles()[idx];
            let (x, y) = (x % p.q(), y % p.q());
            prop_assert_eq!(p.mul(x, y), p.mul(y, x));
            prop_assert_eq!(p.sub(p.add(x, y), y), x);
            prop_assert_eq!(p.add(x, y), oracle(x as u128 + y as u128, p.q()));
            prop_assert_eq!(p.sub(x, y), oracle(x as u128 + p.q() as u128 - y as u128, p.q()));
            prop_assert_eq!(p.mul(x, y), oracle(x as u128 * y as u128, p.q()));
        }
    }
}
