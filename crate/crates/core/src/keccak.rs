//! Keccak-f[1600] and the FIPS-202 sponge functions built on it.
//!
//! The sponge keeps a bit-granular squeeze cursor so callers can pull any
//! number of bits, and it counts permutations for the cycle model.

use thiserror::Error;

/// Cycles spent by one call of the permutation core.
pub const PERMUTATION_CYCLES: u64 = 24;

const ROUND_CONSTANTS: [u64; 24] = [
    0x0000_0000_0000_0001,
    0x0000_0000_0000_8082,
    0x8000_0000_0000_808A,
    0x8000_0000_8000_8000,
    0x0000_0000_0000_808B,
    0x0000_0000_8000_0001,
    0x8000_0000_8000_8081,
    0x8000_0000_0000_8009,
    0x0000_0000_0000_008A,
    0x0000_0000_0000_0088,
    0x0000_0000_8000_8009,
    0x0000_0000_8000_000A,
    0x0000_0000_8000_808B,
    0x8000_0000_0000_008B,
    0x8000_0000_0000_8089,
    0x8000_0000_0000_8003,
    0x8000_0000_0000_8002,
    0x8000_0000_0000_0080,
    0x0000_0000_0000_800A,
    0x8000_0000_8000_000A,
    0x8000_0000_8000_8081,
    0x8000_0000_0000_8080,
    0x0000_0000_8000_0001,
    0x8000_0000_8000_8008,
];

// Rotation amounts and destination lanes along the rho/pi cycle starting at lane 1.
const RHO: [u32; 24] = [1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 2, 14, 27, 41, 56, 8, 25, 43, 62, 18, 39, 61, 20, 44];
const PI: [usize; 24] = [10, 7, 11, 17, 18, 3, 5, 16, 8, 21, 24, 4, 15, 23, 19, 13, 12, 2, 20, 14, 22, 9, 6, 1];

/// All 24 rounds of Keccak-f[1600] on lanes indexed `x + 5*y`.
pub fn keccak_f1600(lanes: &mut [u64; 25]) {
    for rc in ROUND_CONSTANTS {
        let mut parity = [0u64; 5];
        for x in 0..5 {
            parity[x] = lanes[x] ^ lanes[x + 5] ^ lanes[x + 10] ^ lanes[x + 15] ^ lanes[x + 20];
        }
        for x in 0..5 {
            let d = parity[(x + 4) % 5] ^ parity[(x + 1) % 5].rotate_left(1);
            for y in (0..25).step_by(5) {
                lanes[y + x] ^= d;
            }
        }

        let mut carry = lanes[1];
        for (&dst, &rot) in PI.iter().zip(RHO.iter()) {
            let next = lanes[dst];
            lanes[dst] = carry.rotate_left(rot);
            carry = next;
        }

        for y in (0..25).step_by(5) {
            let row = [lanes[y], lanes[y + 1], lanes[y + 2], lanes[y + 3], lanes[y + 4]];
            for x in 0..5 {
                lanes[y + x] = row[x] ^ (!row[(x + 1) % 5] & row[(x + 2) % 5]);
            }
        }

        lanes[0] ^= rc;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpongeMode {
    Shake128,
    Shake256,
    Sha3_224,
    Sha3_256,
    Sha3_384,
    Sha3_512,
}

impl SpongeMode {
    pub fn rate_bits(self) -> usize {
        match self {
            SpongeMode::Shake128 => 1344,
            SpongeMode::Sha3_224 => 1152,
            SpongeMode::Shake256 | SpongeMode::Sha3_256 => 1088,
            SpongeMode::Sha3_384 => 832,
            SpongeMode::Sha3_512 => 576,
        }
    }

    fn suffix(self) -> u8 {
        match self {
            SpongeMode::Shake128 | SpongeMode::Shake256 => 0x1F,
            _ => 0x06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Absorbing,
    Squeezing,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeccakError {
    #[error("cannot absorb after squeezing has started")]
    AbsorbAfterSqueeze,
}

#[derive(Debug, Clone)]
pub struct KeccakState {
    lanes: [u64; 25],
    mode: SpongeMode,
    absorbed: usize,
    phase: Phase,
    // Bit offset into the current output block.
    squeeze_cursor: usize,
    permutations: u64,
}

impl KeccakState {
    pub fn new(mode: SpongeMode) -> Self {
        Self {
            lanes: [0; 25],
            mode,
            absorbed: 0,
            phase: Phase::Absorbing,
            squeeze_cursor: 0,
            permutations: 0,
        }
    }

    pub fn mode(&self) -> SpongeMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lanes(&self) -> &[u64; 25] {
        &self.lanes
    }

    /// Number of permutations run so far, including the one at finalization.
    pub fn permutations(&self) -> u64 {
        self.permutations
    }

    fn rate_bytes(&self) -> usize {
        self.mode.rate_bits() / 8
    }

    fn xor_byte(&mut self, pos: usize, b: u8) {
        self.lanes[pos / 8] ^= (b as u64) << (8 * (pos % 8));
    }

    fn byte_at(&self, pos: usize) -> u8 {
        (self.lanes[pos / 8] >> (8 * (pos % 8))) as u8
    }

    pub fn permute(&mut self) {
        keccak_f1600(&mut self.lanes);
        self.permutations += 1;
    }

    pub fn absorb(&mut self, data: &[u8]) -> Result<(), KeccakError> {
        if self.phase != Phase::Absorbing {
            return Err(KeccakError::AbsorbAfterSqueeze);
        }
        let rate = self.rate_bytes();
        for &b in data {
            self.xor_byte(self.absorbed, b);
            self.absorbed += 1;
            if self.absorbed == rate {
                self.permute();
                self.absorbed = 0;
            }
        }
        Ok(())
    }

    /// Pads, permutes and switches to squeezing. Calling it again is a no-op.
    pub fn finalize(&mut self) {
        if self.phase == Phase::Squeezing {
            return;
        }
        let rate = self.rate_bytes();
        self.xor_byte(self.absorbed, self.mode.suffix());
        self.xor_byte(rate - 1, 0x80);
        self.permute();
        self.phase = Phase::Squeezing;
        self.squeeze_cursor = 0;
    }

    fn refill_if_exhausted(&mut self) {
        if self.squeeze_cursor == self.mode.rate_bits() {
            self.permute();
            self.squeeze_cursor = 0;
        }
    }

    /// Next `nbits` of output, packed LSB-first into bytes (the last byte may be
    /// partial). Any split of a request yields the same stream.
    pub fn squeeze_bits(&mut self, nbits: usize) -> Vec<u8> {
        self.finalize();
        let mut out = vec![0u8; nbits.div_ceil(8)];
        let mut produced = 0;
        while produced < nbits {
            self.refill_if_exhausted();
            if produced % 8 == 0 && self.squeeze_cursor % 8 == 0 && nbits - produced >= 8 {
                let avail = (self.mode.rate_bits() - self.squeeze_cursor) / 8;
                let take = avail.min((nbits - produced) / 8);
                let start = self.squeeze_cursor / 8;
                for i in 0..take {
                    out[produced / 8 + i] = self.byte_at(start + i);
                }
                produced += take * 8;
                self.squeeze_cursor += take * 8;
            } else {
                let bit = (self.byte_at(self.squeeze_cursor / 8) >> (self.squeeze_cursor % 8)) & 1;
                out[produced / 8] |= bit << (produced % 8);
                produced += 1;
                self.squeeze_cursor += 1;
            }
        }
        out
    }

    pub fn squeeze(&mut self, out: &mut [u8]) {
        let bytes = self.squeeze_bits(out.len() * 8);
        out.copy_from_slice(&bytes);
    }

    /// One 32-bit shift-out: the next four output bytes read little-endian.
    pub fn next_word(&mut self) -> u32 {
        let mut w = [0u8; 4];
        self.squeeze(&mut w);
        u32::from_le_bytes(w)
    }
}

pub fn shake128(data: &[u8], out_len: usize) -> Vec<u8> {
    xof(SpongeMode::Shake128, data, out_len)
}

pub fn shake256(data: &[u8], out_len: usize) -> Vec<u8> {
    xof(SpongeMode::Shake256, data, out_len)
}

fn xof(mode: SpongeMode, data: &[u8], out_len: usize) -> Vec<u8> {
    let mut s = KeccakState::new(mode);
    s.absorb(data).expect("fresh state absorbs");
    let mut out = vec![0; out_len];
    s.squeeze(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DigestMode {
    Sha3_256,
    Sha3_512,
}

impl DigestMode {
    pub fn output_len(self) -> usize {
        match self {
            DigestMode::Sha3_256 => 32,
            DigestMode::Sha3_512 => 64,
        }
    }

    pub fn sponge(self) -> SpongeMode {
        match self {
            DigestMode::Sha3_256 => SpongeMode::Sha3_256,
            DigestMode::Sha3_512 => SpongeMode::Sha3_512,
        }
    }
}

pub fn sha3_digest(data: &[u8], mode: DigestMode) -> Vec<u8> {
    xof(mode.sponge(), data, mode.output_len())
}

pub fn sha3_256(data: &[u8]) -> [u8; 32] {
    sha3_digest(data, DigestMode::Sha3_256).try_into().unwrap()
}

pub fn sha3_512(data: &[u8]) -> [u8; 64] {
    sha3_digest(data, DigestMode::Sha3_512).try_into().unwrap()
}

/// The two fixed-length modes the machine has no instruction for.
pub fn sha3_224(data: &[u8]) -> [u8; 28] {
    xof(SpongeMode::Sha3_224, data, 28).try_into().unwrap()
}

pub fn sha3_384(data: &[u8]) -> [u8; 48] {
    xof(SpongeMode::Sha3_384, data, 48).try_into().unwrap()
}
