//! Tiled LWE matrix products for Frodo.
//!
//! Rows and columns of length `n` are cut into power-of-two tiles, the last
//! one zero-padded. Every matrix is defined tile by tile in terms of sampler
//! streams, so the tiled result is reproducible on the host:
//!
//! | block      | stream                             | length    |
//! |------------|------------------------------------|-----------|
//! | `A[i, t]`  | rej, `r0`, `c0 = i`, `c1 = t`      | tile `t`  |
//! | `S[t, j]`  | cdt, `r1`, `c0 = j`, `c1 = t`      | tile `t`  |
//! | `E[b, j]`  | cdt, `r1`, `c0 = 8 + j`, `c1 = b`  | row block |
//! | `S'[j, b]` | cdt, `r1`, `c0 = 16 + j`, `c1 = b` | row block |
//! | `E'[j, t]` | cdt, `r1`, `c0 = 24 + j`, `c1 = t` | tile `t`  |
//!
//! Row blocks have the length of the smallest tile. Both samplers take one
//! PRNG word per output here, so a short draw is a prefix of a long one and
//! a row block can be read out of a larger configured slot.

use super::{build, execute, ProtocolError};
use crate::isa::SeedReg;
use crate::machine::MachineState;
use crate::sampler::CdtTable;

/// Row-major `rows x cols` residues.
pub type Matrix = Vec<Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrodoShape {
    pub n: usize,
    pub nbar: usize,
    pub tiles: Vec<usize>,
    /// Generate two columns of `S` (rows of `S'`) per pass.
    pub pair_columns: bool,
    pub q: u32,
    pub table: CdtTable,
}

impl FrodoShape {
    pub fn frodo640() -> Self {
        Self::custom(640, 8, vec![512, 128], true, 1 << 15, table(2.75, 11)).expect("valid shape")
    }

    pub fn frodo976() -> Self {
        Self::custom(976, 8, vec![1024], true, 1 << 16, table(2.30, 10)).expect("valid shape")
    }

    pub fn frodo1344() -> Self {
        Self::custom(1344, 8, vec![1024, 512], false, 1 << 16, table(1.4, 6)).expect("valid shape")
    }

    /// Small shapes with `nbar = 8`, `q = 2^15` and the 640 error table.
    pub fn reduced(n: usize, tiles: Vec<usize>, pair_columns: bool) -> Result<Self, ProtocolError> {
        Self::custom(n, 8, tiles, pair_columns, 1 << 15, table(2.75, 11))
    }

    pub fn custom(
        n: usize,
        nbar: usize,
        tiles: Vec<usize>,
        pair_columns: bool,
        q: u32,
        table: CdtTable,
    ) -> Result<Self, ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        if !q.is_power_of_two() || q < 2 || q > 1 << 24 {
            return bad(format!("q = {q} must be a power of two up to 2^24"));
        }
        if tiles.is_empty() || tiles.iter().any(|&t| !t.is_power_of_two() || !(8..=1024).contains(&t)) {
            return bad(format!("tiles {tiles:?} must be powers of two in [8, 1024]"));
        }
        let total: usize = tiles.iter().sum();
        let last = *tiles.last().unwrap();
        if n > total || n <= total - last || n >= 1 << 16 {
            return bad(format!("n = {n} does not fit tiles {tiles:?} with a non-empty last tile"));
        }
        if nbar == 0 || nbar > 8 || (pair_columns && nbar % 2 == 1) {
            return bad(format!("nbar = {nbar} must be in 1..=8, even when columns are paired"));
        }
        Ok(Self { n, nbar, tiles, pair_columns, q, table })
    }

    /// Start of each tile.
    pub fn offsets(&self) -> Vec<usize> {
        self.tiles.iter().scan(0, |acc, &t| Some(std::mem::replace(acc, *acc + t))).collect()
    }

    /// Elements of tile `t` inside the matrix.
    pub fn valid(&self, t: usize) -> usize {
        self.tiles[t].min(self.n - self.offsets()[t])
    }

    /// Zero-padded elements across all tiles.
    pub fn padding(&self) -> usize {
        self.tiles.iter().sum::<usize>() - self.n
    }

    pub fn block(&self) -> usize {
        *self.tiles.iter().min().unwrap()
    }

    /// `(first row, row count)` of each row block.
    pub fn row_blocks(&self) -> Vec<(usize, usize)> {
        let b = self.block();
        (0..self.n).step_by(b).map(|r| (r, b.min(self.n - r))).collect()
    }

    fn column_groups(&self) -> Vec<(usize, Option<usize>)> {
        if self.pair_columns {
            (0..self.nbar).step_by(2).map(|j| (j, Some(j + 1))).collect()
        } else {
            (0..self.nbar).map(|j| (j, None)).collect()
        }
    }

    fn common(&self, tile: usize) -> Vec<(&'static str, String)> {
        vec![
            ("TILE", tile.to_string()),
            ("Q", self.q.to_string()),
            ("R", self.table.precision().to_string()),
            ("SUPPORT", self.table.support().to_string()),
        ]
    }

    fn check(&self, machine: &MachineState) -> Result<(), ProtocolError> {
        match machine.config() {
            Some(c) if c.q == self.q => Ok(()),
            Some(c) => Err(ProtocolError::Config(format!("machine has q = {}, shape needs q = {}", c.q, self.q))),
            None => Err(ProtocolError::Config("machine is not configured".into())),
        }
    }
}

fn table(sigma: f64, support: usize) -> CdtTable {
    CdtTable::from_gaussian(sigma, support, 16).expect("error table parameters are valid")
}

fn group_vars(pair: (usize, Option<usize>), base: usize) -> Vec<(&'static str, String)> {
    vec![
        ("J0", (base + pair.0).to_string()),
        ("J1", pair.1.map_or("0".to_string(), |j| (base + j).to_string())),
        ("PAIR", (pair.1.is_some() as u8).to_string()),
    ]
}

fn seed(machine: &mut MachineState, matrix_seed: &[u8; 32], noise_seed: &[u8; 32], shape: &FrodoShape) {
    machine.write_seed(SeedReg::R0, *matrix_seed);
    machine.write_seed(SeedReg::R1, *noise_seed);
    machine.load_cdt(&shape.table);
}

/// `A S` without the error term, `n x nbar`.
pub fn frodo_as(
    machine: &mut MachineState,
    shape: &FrodoShape,
    matrix_seed: &[u8; 32],
    noise_seed: &[u8; 32],
) -> Result<Matrix, ProtocolError> {
    shape.check(machine)?;
    seed(machine, matrix_seed, noise_seed, shape);
    let q = shape.q as u64;
    let mut out = vec![vec![0u32; shape.nbar]; shape.n];
    for group in shape.column_groups() {
        for (t, &tile) in shape.tiles.iter().enumerate() {
            let valid = shape.valid(t);
            for &(row0, rows) in &shape.row_blocks() {
                let mut vars = shape.common(tile);
                vars.extend(group_vars(group, 0));
                vars.extend([
                    ("T", t.to_string()),
                    ("VALID", valid.to_string()),
                    ("PAD", ((valid < tile) as u8).to_string()),
                    ("ROW0", row0.to_string()),
                    ("ROWS", rows.to_string()),
                ]);
                execute(machine, &build("frodo_as", &vars)?)?;
                let cols = [Some((group.0, 6)), group.1.map(|j| (j, 7))];
                for (j, slot) in cols.into_iter().flatten() {
                    let partial = machine.read_slot(slot)?;
                    for (r, &v) in partial[..rows].iter().enumerate() {
                        let cell = &mut out[row0 + r][j];
                        *cell = ((*cell as u64 + v as u64) % q) as u32;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `S' A` without the error term, `nbar x n`.
pub fn frodo_sa(
    machine: &mut MachineState,
    shape: &FrodoShape,
    matrix_seed: &[u8; 32],
    noise_seed: &[u8; 32],
) -> Result<Matrix, ProtocolError> {
    shape.check(machine)?;
    seed(machine, matrix_seed, noise_seed, shape);
    let q = shape.q as u64;
    let offsets = shape.offsets();
    let mut out = vec![vec![0u32; shape.n]; shape.nbar];
    for group in shape.column_groups() {
        for (u, &tile) in shape.tiles.iter().enumerate() {
            let valid = shape.valid(u);
            for (b, &(row0, rows)) in shape.row_blocks().iter().enumerate() {
                let mut vars = shape.common(tile);
                vars.extend(group_vars(group, 16));
                vars.extend([
                    ("U", u.to_string()),
                    ("B", b.to_string()),
                    ("ROW0", row0.to_string()),
                    ("ROWS", rows.to_string()),
                ]);
                execute(machine, &build("frodo_sa", &vars)?)?;
                let rows_out = [Some((group.0, 6)), group.1.map(|j| (j, 7))];
                for (j, slot) in rows_out.into_iter().flatten() {
                    let partial = machine.read_slot(slot)?;
                    for (c, &v) in partial[..valid].iter().enumerate() {
                        let cell = &mut out[j][offsets[u] + c];
                        *cell = ((*cell as u64 + v as u64) % q) as u32;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn noise_block(
    machine: &mut MachineState,
    shape: &FrodoShape,
    len: usize,
    c0: usize,
    c1: usize,
) -> Result<Vec<u32>, ProtocolError> {
    let mut vars = shape.common(len);
    vars.extend([("LEN", len.to_string()), ("C0", c0.to_string()), ("C1", c1.to_string())]);
    execute(machine, &build("frodo_noise", &vars)?)?;
    Ok(machine.read_slot(0)?)
}

/// The `n x nbar` error added to `A S`.
pub fn frodo_error(machine: &mut MachineState, shape: &FrodoShape, noise_seed: &[u8; 32]) -> Result<Matrix, ProtocolError> {
    shape.check(machine)?;
    seed(machine, &[0; 32], noise_seed, shape);
    let mut out = vec![vec![0u32; shape.nbar]; shape.n];
    for j in 0..shape.nbar {
        for (b, &(row0, rows)) in shape.row_blocks().iter().enumerate() {
            let block = noise_block(machine, shape, shape.block(), 8 + j, b)?;
            for r in 0..rows {
                out[row0 + r][j] = block[r];
            }
        }
    }
    Ok(out)
}

/// The `nbar x n` error added to `S' A`.
pub fn frodo_error_prime(
    machine: &mut MachineState,
    shape: &FrodoShape,
    noise_seed: &[u8; 32],
) -> Result<Matrix, ProtocolError> {
    shape.check(machine)?;
    seed(machine, &[0; 32], noise_seed, shape);
    let offsets = shape.offsets();
    let mut out = vec![vec![0u32; shape.n]; shape.nbar];
    for (j, row) in out.iter_mut().enumerate() {
        for (u, &tile) in shape.tiles.iter().enumerate() {
            let block = noise_block(machine, shape, tile, 24 + j, u)?;
            let valid = shape.valid(u);
            row[offsets[u]..offsets[u] + valid].copy_from_slice(&block[..valid]);
        }
    }
    Ok(out)
}

fn add(a: Matrix, b: &Matrix, q: u32) -> Matrix {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(&u, &v)| ((u as u64 + v as u64) % q as u64) as u32).collect())
        .collect()
}

pub fn frodo_as_plus_e(
    machine: &mut MachineState,
    shape: &FrodoShape,
    matrix_seed: &[u8; 32],
    noise_seed: &[u8; 32],
) -> Result<Matrix, ProtocolError> {
    let product = frodo_as(machine, shape, matrix_seed, noise_seed)?;
    let error = frodo_error(machine, shape, noise_seed)?;
    Ok(add(product, &error, shape.q))
}

pub fn frodo_sa_plus_e(
    machine: &mut MachineState,
    shape: &FrodoShape,
    matrix_seed: &[u8; 32],
    noise_seed: &[u8; 32],
) -> Result<Matrix, ProtocolError> {
    let product = frodo_sa(machine, shape, matrix_seed, noise_seed)?;
    let error = frodo_error_prime(machine, shape, noise_seed)?;
    Ok(add(product, &error, shape.q))
}
