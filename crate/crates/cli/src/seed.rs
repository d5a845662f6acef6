use std::str::FromStr;

use anyhow::{bail, Result};
use rand::RngCore;

use sapphire_core::keccak::shake256;

/// A 32-byte seed given in hex, or fresh bytes from the OS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seed {
    Fixed([u8; 32]),
    Os,
}

impl Default for Seed {
    fn default() -> Self {
        Seed::Fixed([0; 32])
    }
}

impl FromStr for Seed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("os") {
            return Ok(Seed::Os);
        }
        if s.len() != 64 {
            return Err(format!("expected 64 hex digits or `os`, got {} characters", s.len()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Seed::Fixed(out))
    }
}

impl Seed {
    pub fn bytes(self) -> [u8; 32] {
        match self {
            Seed::Fixed(b) => b,
            Seed::Os => {
                let mut b = [0u8; 32];
                rand::rngs::OsRng.fill_bytes(&mut b);
                b
            }
        }
    }

    /// `r0 || r1 = SHAKE-256(seed, 64)`.
    pub fn registers(self) -> Result<([u8; 32], [u8; 32])> {
        let wide = shake256(&self.bytes(), 64);
        let (Ok(r0), Ok(r1)) = (wide[..32].try_into(), wide[32..].try_into()) else {
            bail!("SHAKE-256 returned {} bytes", wide.len());
        };
        Ok((r0, r1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hex_and_os() {
        let hex = "00".repeat(31) + "ff";
        assert_eq!(hex.parse::<Seed>().unwrap().bytes()[31], 0xff);
        assert_eq!("OS".parse::<Seed>().unwrap(), Seed::Os);
        assert!("abcd".parse::<Seed>().is_err());
        assert!("zz".repeat(32).parse::<Seed>().is_err());
    }

    #[test]
    fn registers_split_one_shake_output() {
        let (r0, r1) = Seed::default().registers().unwrap();
        let wide = shake256(&[0; 32], 64);
        assert_eq!((&r0[..], &r1[..]), (&wide[..32], &wide[32..]));
    }
}
