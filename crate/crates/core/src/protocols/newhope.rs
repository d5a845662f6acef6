//! Simplified NewHope CPA-PKE without compression.

use rand::RngCore;

use super::{build, execute, ProtocolError};
use crate::isa::{Program, SeedReg};
use crate::machine::MachineState;

pub const Q: u32 = 12289;
/// Binomial parameter of the standard parameter sets.
pub const DEFAULT_K: u8 = 8;

pub type Message256 = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub a_hat: Vec<u32>,
    pub b_hat: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpaKeyPair {
    pub public: PublicKey,
    /// `s_hat`, the secret in the NTT domain.
    pub secret: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpaCiphertext {
    pub u_hat: Vec<u32>,
    pub v: Vec<u32>,
}

/// Spreads each message bit over `n / 256` coefficients valued 0 or `q / 2`.
pub fn encode(msg: &Message256, n: usize, q: u32) -> Vec<u32> {
    (0..n)
        .map(|i| {
            let bit = i % 256;
            if msg[bit / 8] >> (bit % 8) & 1 == 1 {
                q / 2
            } else {
                0
            }
        })
        .collect()
}

/// Sums `|c - q/2|` over each bit's coefficients. The bit is 0 when the sum
/// passes a quarter of `q` per coefficient, i.e. `q` itself at `n = 1024`;
/// a sum exactly on the threshold decodes as 1.
pub fn decode(poly: &[u32], q: u32) -> Message256 {
    let groups = (poly.len() / 256) as u64;
    let mut msg = [0u8; 32];
    for bit in 0..256 {
        let sum: u64 = (0..groups as usize)
            .map(|t| (poly[bit + 256 * t] as i64 - (q / 2) as i64).unsigned_abs())
            .sum();
        if 4 * sum <= groups * q as u64 {
            msg[bit / 8] |= 1 << (bit % 8);
        }
    }
    msg
}

/// Assembled programs for one `(n, k)` choice.
#[derive(Debug, Clone)]
pub struct NewHope {
    n: usize,
    k: u8,
    keygen: Program,
    encrypt: Program,
    decrypt: Program,
    add: Program,
    half: usize,
}

impl NewHope {
    pub fn new(n: usize) -> Result<Self, ProtocolError> {
        Self::with_noise(n, DEFAULT_K)
    }

    pub fn with_noise(n: usize, k: u8) -> Result<Self, ProtocolError> {
        if n != 512 && n != 1024 {
            return Err(ProtocolError::Config(format!("NewHope needs n = 512 or 1024, got {n}")));
        }
        if !(1..=16).contains(&k) {
            return Err(ProtocolError::Config(format!("binomial k = {k} outside 1..=16")));
        }
        // Slots below `half` sit in the left bank, the rest in the right.
        let half = 4096 / n;
        let slot = |s: usize| s.to_string();
        let common = |extra: &[(&'static str, String)]| {
            let mut v = vec![("N", n.to_string()), ("K", k.to_string())];
            v.extend_from_slice(extra);
            v
        };
        let keygen = build(
            "newhope_keygen",
            &common(&[
                ("A", slot(0)),
                ("S", slot(1)),
                ("E", slot(2)),
                ("S_HAT", slot(half)),
                ("E_HAT", slot(half + 1)),
                ("B_HAT", slot(half + 2)),
            ]),
        )?;
        // With an even number of stages each forward transform renames its
        // pair, which leaves `half + 1` in the left bank for the inverse.
        let v_out = if n.trailing_zeros() % 2 == 0 { half + 1 } else { 4 };
        let encrypt = build(
            "newhope_encrypt",
            &common(&[
                ("S", slot(0)),
                ("E", slot(1)),
                ("E2", slot(2)),
                ("V", slot(3)),
                ("S_HAT", slot(half)),
                ("E_HAT", slot(half + 1)),
                ("A_HAT", slot(half + 2)),
                ("B_HAT", slot(half + 3)),
                ("V_OUT", slot(v_out)),
            ]),
        )?;
        let decrypt = build(
            "newhope_decrypt",
            &common(&[("U_HAT", slot(0)), ("S_HAT", slot(1)), ("V", slot(2)), ("OUT", slot(half))]),
        )?;
        let add = build("newhope_add", &common(&[]))?;
        Ok(Self { n, k, keygen, encrypt, decrypt, add, half })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    fn check(&self, machine: &MachineState) -> Result<(), ProtocolError> {
        match machine.config() {
            Some(c) if c.n == self.n && c.q == Q => Ok(()),
            Some(c) => Err(ProtocolError::Config(format!(
                "machine is configured for n = {}, q = {}; expected n = {}, q = {Q}",
                c.n, c.q, self.n
            ))),
            None => Err(ProtocolError::Config("machine is not configured".into())),
        }
    }

    fn check_len(&self, what: &str, v: &[u32]) -> Result<(), ProtocolError> {
        if v.len() != self.n {
            return Err(ProtocolError::Config(format!("{what} has {} coefficients, expected {}", v.len(), self.n)));
        }
        Ok(())
    }

    pub fn keygen(&self, machine: &mut MachineState, seed: &[u8; 32]) -> Result<CpaKeyPair, ProtocolError> {
        self.check(machine)?;
        machine.write_seed(SeedReg::R0, *seed);
        execute(machine, &self.keygen)?;
        Ok(CpaKeyPair {
            public: PublicKey { a_hat: machine.read_slot(0)?, b_hat: machine.read_slot(self.half + 2)? },
            secret: machine.read_slot(self.half)?,
        })
    }

    pub fn encrypt(
        &self,
        machine: &mut MachineState,
        pk: &PublicKey,
        coin: &[u8; 32],
        msg: &Message256,
    ) -> Result<CpaCiphertext, ProtocolError> {
        self.check(machine)?;
        self.check_len("a_hat", &pk.a_hat)?;
        self.check_len("b_hat", &pk.b_hat)?;
        machine.write_slot(3, &encode(msg, self.n, Q))?;
        machine.write_slot(self.half + 2, &pk.a_hat)?;
        machine.write_slot(self.half + 3, &pk.b_hat)?;
        machine.write_seed(SeedReg::R1, *coin);
        execute(machine, &self.encrypt)?;
        let v_out = if self.n.trailing_zeros() % 2 == 0 { self.half + 1 } else { 4 };
        Ok(CpaCiphertext { u_hat: machine.read_slot(self.half + 2)?, v: machine.read_slot(v_out)? })
    }

    /// `v' - u s` before Decode.
    pub fn decrypt_poly(
        &self,
        machine: &mut MachineState,
        secret: &[u32],
        ct: &CpaCiphertext,
    ) -> Result<Vec<u32>, ProtocolError> {
        self.check(machine)?;
        self.check_len("s_hat", secret)?;
        self.check_len("u_hat", &ct.u_hat)?;
        self.check_len("v'", &ct.v)?;
        machine.write_slot(0, &ct.u_hat)?;
        machine.write_slot(1, secret)?;
        machine.write_slot(2, &ct.v)?;
        execute(machine, &self.decrypt)?;
        Ok(machine.read_slot(self.half)?)
    }

    pub fn decrypt(
        &self,
        machine: &mut MachineState,
        secret: &[u32],
        ct: &CpaCiphertext,
    ) -> Result<Message256, ProtocolError> {
        Ok(decode(&self.decrypt_poly(machine, secret, ct)?, Q))
    }

    pub fn add_ciphertexts(
        &self,
        machine: &mut MachineState,
        a: &CpaCiphertext,
        b: &CpaCiphertext,
    ) -> Result<CpaCiphertext, ProtocolError> {
        self.check(machine)?;
        for (what, v) in [("u_hat", &a.u_hat), ("u_hat", &b.u_hat), ("v'", &a.v), ("v'", &b.v)] {
            self.check_len(what, v)?;
        }
        machine.write_slot(0, &a.u_hat)?;
        machine.write_slot(1, &b.u_hat)?;
        machine.write_slot(2, &a.v)?;
        machine.write_slot(3, &b.v)?;
        execute(machine, &self.add)?;
        Ok(CpaCiphertext { u_hat: machine.read_slot(0)?, v: machine.read_slot(2)? })
    }

    /// Decrypts `ct + Enc(mask)` and strips the mask with XOR, so the secret
    /// key never touches the target ciphertext alone.
    pub fn masked_decrypt_with(
        &self,
        machine: &mut MachineState,
        keys: &CpaKeyPair,
        ct: &CpaCiphertext,
        mask: &Message256,
        coin: &[u8; 32],
    ) -> Result<Message256, ProtocolError> {
        let masking = self.encrypt(machine, &keys.public, coin, mask)?;
        let sum = self.add_ciphertexts(machine, ct, &masking)?;
        let mut msg = self.decrypt(machine, &keys.secret, &sum)?;
        for (m, r) in msg.iter_mut().zip(mask) {
            *m ^= r;
        }
        Ok(msg)
    }

    pub fn masked_decrypt(
        &self,
        machine: &mut MachineState,
        keys: &CpaKeyPair,
        ct: &CpaCiphertext,
        rng: &mut impl RngCore,
    ) -> Result<Message256, ProtocolError> {
        let mut mask = [0u8; 32];
        let mut coin = [0u8; 32];
        rng.fill_bytes(&mut mask);
        rng.fill_bytes(&mut coin);
        self.masked_decrypt_with(machine, keys, ct, &mask, &coin)
    }
}
