//! Two banks of four single-port 1024 x 24-bit SRAMs holding polynomial slots.
//!
//! Coefficient `i` of a slot lives in SRAM `2*MSB(i) + LSB(i)` of the slot's
//! bank, at row `base + middle_bits(i)`. Adjacent pairs `(2j, 2j+1)` differ in
//! the LSB and strided pairs `(j, j+n/2)` in the MSB, so both land in two
//! different SRAMs. Every access is stamped with the cache clock; port-checked
//! accesses fault when an SRAM is touched twice in one cycle.

use std::fmt;

use thiserror::Error;

pub const SRAMS_PER_BANK: usize = 4;
pub const SRAM_ROWS: usize = 1024;
pub const BANK_WORDS: usize = SRAMS_PER_BANK * SRAM_ROWS;
pub const CAPACITY: usize = 2 * BANK_WORDS;
pub const WORD_LIMIT: u32 = 1 << 24;
/// Slot ids are 7-bit instruction fields.
pub const MAX_SLOTS: usize = 128;
pub const MIN_DIM: usize = 8;
pub const MAX_DIM: usize = 2048;

pub type SlotId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bank {
    Left,
    Right,
}

impl Bank {
    pub fn index(self) -> usize {
        match self {
            Bank::Left => 0,
            Bank::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    /// `(2j, 2j+1)`
    Adjacent,
    /// `(j, j + n/2)`
    Strided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    pub cycle: u64,
    pub bank: Bank,
    pub sram: u8,
    pub row: u16,
    pub kind: AccessKind,
}

impl fmt::Display for Access {
    /// `cycle bank sram row R|W`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        };
        write!(f, "{} {} {} {} {}", self.cycle, self.bank.index(), self.sram, self.row, kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("slot dimension {0} is not a power of two in [{MIN_DIM}, {MAX_DIM}]")]
    BadDimension(usize),
    #[error("slot {slot} out of range ({slots} slots at the active dimension)")]
    SlotOutOfRange { slot: SlotId, slots: usize },
    #[error("coefficient index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("value {0} does not fit a 24-bit word")]
    ValueOutOfRange(u32),
    #[error("port conflict: bank {bank:?} sram {sram} accessed twice in cycle {cycle}")]
    Hazard { cycle: u64, bank: Bank, sram: u8 },
    #[error("slot data length {got} does not match n = {n}")]
    LengthMismatch { got: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Region {
    bank: Bank,
    base_row: usize,
}

#[derive(Debug, Clone)]
pub struct PolynomialCache {
    words: Vec<u32>,
    n: usize,
    slots_per_bank: usize,
    // Logical slot -> physical region. Starts as the identity layout and is
    // permuted only by even-stage transforms (see `swap_slots`).
    regions: Vec<Region>,
    cycle: u64,
    busy: [u8; 2],
    recording: bool,
    ledger: Vec<Access>,
}

impl PolynomialCache {
    pub fn new(n: usize) -> Result<Self, CacheError> {
        let mut cache = Self {
            words: vec![0; CAPACITY],
            n: 0,
            slots_per_bank: 0,
            regions: Vec::new(),
            cycle: 0,
            busy: [0; 2],
            recording: false,
            ledger: Vec::new(),
        };
        cache.configure(n)?;
        Ok(cache)
    }

    /// Re-partitions the cache for dimension `n`. Stored words are kept; the
    /// slot layout returns to slots `[0, slots_per_bank)` in the left bank.
    pub fn configure(&mut self, n: usize) -> Result<(), CacheError> {
        if !n.is_power_of_two() || !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(CacheError::BadDimension(n));
        }
        self.n = n;
        self.slots_per_bank = (BANK_WORDS / n).min(MAX_SLOTS / 2);
        self.regions = (0..2 * self.slots_per_bank).map(|s| self.default_region(s)).collect();
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slot_count(&self) -> usize {
        self.regions.len()
    }

    pub fn slots_per_bank(&self) -> usize {
        self.slots_per_bank
    }

    fn region(&self, slot: SlotId) -> Result<Region, CacheError> {
        self.regions
            .get(slot)
            .copied()
            .ok_or(CacheError::SlotOutOfRange { slot, slots: self.regions.len() })
    }

    pub fn bank_of(&self, slot: SlotId) -> Result<Bank, CacheError> {
        Ok(self.region(slot)?.bank)
    }

    /// Physical `(bank, sram, row)` of coefficient `i` in `slot`.
    pub fn location(&self, slot: SlotId, i: usize) -> Result<(Bank, u8, u16), CacheError> {
        let region = self.region(slot)?;
        if i >= self.n {
            return Err(CacheError::IndexOutOfRange { index: i, n: self.n });
        }
        let lg = self.n.trailing_zeros();
        let msb = (i >> (lg - 1)) & 1;
        let lsb = i & 1;
        let middle = (i >> 1) & (self.n / 4 - 1);
        Ok(((region.bank), (2 * msb + lsb) as u8, (region.base_row + middle) as u16))
    }

    fn word_index(bank: Bank, sram: u8, row: u16) -> usize {
        bank.index() * BANK_WORDS + sram as usize * SRAM_ROWS + row as usize
    }

    pub fn clock(&self) -> u64 {
        self.cycle
    }

    pub fn set_clock(&mut self, cycle: u64) {
        self.cycle = cycle;
        self.busy = [0; 2];
    }

    /// Advances to the next cycle, releasing all ports.
    pub fn tick(&mut self) {
        self.set_clock(self.cycle + 1);
    }

    pub fn advance(&mut self, cycles: u64) {
        self.set_clock(self.cycle + cycles);
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    pub fn ledger(&self) -> &[Access] {
        &self.ledger
    }

    pub fn take_ledger(&mut self) -> Vec<Access> {
        std::mem::take(&mut self.ledger)
    }

    fn touch(&mut self, bank: Bank, sram: u8, row: u16, kind: AccessKind, checked: bool) -> Result<(), CacheError> {
        if checked {
            let bit = 1u8 << sram;
            let busy = &mut self.busy[bank.index()];
            if *busy & bit != 0 {
                return Err(CacheError::Hazard { cycle: self.cycle, bank, sram });
            }
            *busy |= bit;
        }
        if self.recording {
            self.ledger.push(Access { cycle: self.cycle, bank, sram, row, kind });
        }
        Ok(())
    }

    fn load(&mut self, slot: SlotId, i: usize, checked: bool) -> Result<u32, CacheError> {
        let (bank, sram, row) = self.location(slot, i)?;
        self.touch(bank, sram, row, AccessKind::Read, checked)?;
        Ok(self.words[Self::word_index(bank, sram, row)])
    }

    fn store(&mut self, slot: SlotId, i: usize, v: u32, checked: bool) -> Result<(), CacheError> {
        if v >= WORD_LIMIT {
            return Err(CacheError::ValueOutOfRange(v));
        }
        let (bank, sram, row) = self.location(slot, i)?;
        self.touch(bank, sram, row, AccessKind::Write, checked)?;
        self.words[Self::word_index(bank, sram, row)] = v;
        Ok(())
    }

    /// Port-checked single read in the current cycle.
    pub fn read(&mut self, slot: SlotId, i: usize) -> Result<u32, CacheError> {
        self.load(slot, i, true)
    }

    /// Port-checked single write in the current cycle.
    pub fn write(&mut self, slot: SlotId, i: usize, v: u32) -> Result<(), CacheError> {
        self.store(slot, i, v, true)
    }

    /// Logged read exempt from the port check. Used by the two-operand
    /// coefficient-wise datapath, whose SRAM schedule is not modelled.
    pub fn read_unchecked(&mut self, slot: SlotId, i: usize) -> Result<u32, CacheError> {
        self.load(slot, i, false)
    }

    pub fn write_unchecked(&mut self, slot: SlotId, i: usize, v: u32) -> Result<(), CacheError> {
        self.store(slot, i, v, false)
    }

    fn pair_indices(&self, kind: PairKind, j: usize) -> Result<(usize, usize), CacheError> {
        if j >= self.n / 2 {
            return Err(CacheError::IndexOutOfRange { index: j, n: self.n / 2 });
        }
        Ok(match kind {
            PairKind::Adjacent => (2 * j, 2 * j + 1),
            PairKind::Strided => (j, j + self.n / 2),
        })
    }

    pub fn read_pair(&mut self, slot: SlotId, kind: PairKind, j: usize) -> Result<(u32, u32), CacheError> {
        let (a, b) = self.pair_indices(kind, j)?;
        Ok((self.read(slot, a)?, self.read(slot, b)?))
    }

    pub fn write_pair(&mut self, slot: SlotId, kind: PairKind, j: usize, values: (u32, u32)) -> Result<(), CacheError> {
        let (a, b) = self.pair_indices(kind, j)?;
        self.write(slot, a, values.0)?;
        self.write(slot, b, values.1)
    }

    /// Host-side read with no clock or ledger effect.
    pub fn peek(&self, slot: SlotId, i: usize) -> Result<u32, CacheError> {
        let (bank, sram, row) = self.location(slot, i)?;
        Ok(self.words[Self::word_index(bank, sram, row)])
    }

    /// Host-side write with no clock or ledger effect.
    pub fn poke(&mut self, slot: SlotId, i: usize, v: u32) -> Result<(), CacheError> {
        if v >= WORD_LIMIT {
            return Err(CacheError::ValueOutOfRange(v));
        }
        let (bank, sram, row) = self.location(slot, i)?;
        self.words[Self::word_index(bank, sram, row)] = v;
        Ok(())
    }

    pub fn read_slot(&self, slot: SlotId) -> Result<Vec<u32>, CacheError> {
        (0..self.n).map(|i| self.peek(slot, i)).collect()
    }

    pub fn write_slot(&mut self, slot: SlotId, coeffs: &[u32]) -> Result<(), CacheError> {
        if coeffs.len() != self.n {
            return Err(CacheError::LengthMismatch { got: coeffs.len(), n: self.n });
        }
        self.region(slot)?;
        if let Some(&v) = coeffs.iter().find(|&&v| v >= WORD_LIMIT) {
            return Err(CacheError::ValueOutOfRange(v));
        }
        for (i, &v) in coeffs.iter().enumerate() {
            self.poke(slot, i, v)?;
        }
        Ok(())
    }

    pub fn slot_clear(&mut self, slot: SlotId) -> Result<(), CacheError> {
        self.write_slot(slot, &vec![0; self.n])
    }

    /// True when every slot sits in its default region.
    pub fn is_canonical(&self) -> bool {
        self.regions.iter().enumerate().all(|(s, r)| *r == self.default_region(s))
    }

    fn default_region(&self, slot: SlotId) -> Region {
        let rows = self.n / 4;
        if slot < self.slots_per_bank {
            Region { bank: Bank::Left, base_row: slot * rows }
        } else {
            Region { bank: Bank::Right, base_row: (slot - self.slots_per_bank) * rows }
        }
    }

    /// Moves slot contents so every slot is back in its default region,
    /// keeping what each slot id reads as.
    pub fn normalize(&mut self) {
        if self.is_canonical() {
            return;
        }
        let contents: Vec<Vec<u32>> = (0..self.slot_count())
            .map(|s| self.read_slot(s).expect("slot in range"))
            .collect();
        self.regions = (0..self.slot_count()).map(|s| self.default_region(s)).collect();
        for (s, data) in contents.iter().enumerate() {
            self.write_slot(s, data).expect("slot in range");
        }
    }

    /// Exchanges the physical regions behind two slots.
    ///
    /// Each transform stage moves data to the other bank, so after an even
    /// number of stages the result sits in the source's region. The engine
    /// then renames the two slots instead of spending cycles on a copy.
    pub fn swap_slots(&mut self, a: SlotId, b: SlotId) -> Result<(), CacheError> {
        self.region(a)?;
        self.region(b)?;
        self.regions.swap(a, b);
        Ok(())
    }
}
