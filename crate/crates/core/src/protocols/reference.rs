//! Host arithmetic with no transforms and no machine, for checking the
//! drivers. Everything here is quadratic or worse.

use super::frodo::{FrodoShape, Matrix};
use super::kyber;
use crate::nttcore::{bit_reverse, NttConstants};
use crate::sampler::{bin_sample, cdt_sample, rej_sample, to_residues, Prng, PrngMode, RejectionPlan};

fn pow(mut b: u64, mut e: u64, q: u64) -> u64 {
    let mut r = 1;
    b %= q;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % q;
        }
        b = b * b % q;
        e >>= 1;
    }
    r
}

/// Undoes `mult_psi` followed by a DIF transform by direct evaluation:
/// position `i` holds `a(psi^(2 br(i) + 1))`.
pub fn from_ntt_domain(hat: &[u32], consts: &NttConstants) -> Vec<u32> {
    let n = hat.len();
    let q = consts.q() as u64;
    let bits = n.trailing_zeros();
    let psi_inv = pow(consts.psi() as u64, q - 2, q);
    let n_inv = pow(n as u64, q - 2, q);
    (0..n)
        .map(|j| {
            let sum = hat.iter().enumerate().fold(0u64, |acc, (i, &h)| {
                let e = (2 * bit_reverse(i, bits) + 1) * j % (2 * n);
                (acc + h as u64 * pow(psi_inv, e as u64, q)) % q
            });
            (sum * n_inv % q) as u32
        })
        .collect()
}

pub fn negacyclic(a: &[u32], b: &[u32], q: u32) -> Vec<u32> {
    let n = a.len();
    let q = q as u64;
    let mut c = vec![0u64; n];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let t = x as u64 * y as u64 % q;
            let k = i + j;
            if k < n {
                c[k] = (c[k] + t) % q;
            } else {
                c[k - n] = (c[k - n] + q - t) % q;
            }
        }
    }
    c.into_iter().map(|x| x as u32).collect()
}

pub fn add(a: &[u32], b: &[u32], q: u32) -> Vec<u32> {
    a.iter().zip(b).map(|(&x, &y)| ((x as u64 + y as u64) % q as u64) as u32).collect()
}

/// Frodo matrices rebuilt densely from the sampler streams listed in
/// [`super::frodo`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrodoDense {
    pub a: Matrix,
    pub s: Matrix,
    pub s_prime: Matrix,
    pub e: Matrix,
    pub e_prime: Matrix,
}

pub fn frodo_dense(shape: &FrodoShape, r0: &[u8; 32], r1: &[u8; 32]) -> FrodoDense {
    let (n, nbar, q) = (shape.n, shape.nbar, shape.q);
    let plan = RejectionPlan::with_default_scale(q).expect("power-of-two modulus");
    let cdt = |len: usize, c0: usize, c1: usize| {
        let mut prng = Prng::new(PrngMode::Shake256, r1, c0 as u16, c1 as u16);
        to_residues(&cdt_sample(len, &shape.table, &mut prng).0, q)
    };
    // Column index -> (tile, position inside it).
    let mut col = Vec::new();
    for (t, &tile) in shape.tiles.iter().enumerate() {
        col.extend((0..tile).map(|l| (t, l)));
    }
    col.truncate(n);
    let block = shape.block();

    let a = (0..n)
        .map(|i| {
            let tiles: Vec<Vec<u32>> = shape
                .tiles
                .iter()
                .enumerate()
                .map(|(t, &len)| rej_sample(len, &plan, &mut Prng::new(PrngMode::Shake128, r0, i as u16, t as u16)).0)
                .collect();
            col.iter().map(|&(t, l)| tiles[t][l]).collect()
        })
        .collect();
    let s_cols: Vec<Vec<Vec<u32>>> =
        (0..nbar).map(|j| shape.tiles.iter().enumerate().map(|(t, &len)| cdt(len, j, t)).collect()).collect();
    let s = (0..n).map(|i| (0..nbar).map(|j| s_cols[j][col[i].0][col[i].1]).collect()).collect();
    let s_prime = (0..nbar).map(|j| (0..n).map(|i| cdt(block, 16 + j, i / block)[i % block]).collect()).collect();
    let e = (0..n).map(|i| (0..nbar).map(|j| cdt(block, 8 + j, i / block)[i % block]).collect()).collect();
    let e_prime = (0..nbar)
        .map(|j| (0..n).map(|i| cdt(shape.tiles[col[i].0], 24 + j, col[i].0)[col[i].1]).collect())
        .collect();
    FrodoDense { a, s, s_prime, e, e_prime }
}

pub fn matmul(x: &Matrix, y: &Matrix, q: u32) -> Matrix {
    let inner = y.len();
    x.iter()
        .map(|row| {
            (0..y[0].len())
                .map(|c| ((0..inner).map(|k| row[k] as u64 * y[k][c] as u64 % q as u64).sum::<u64>() % q as u64) as u32)
                .collect()
        })
        .collect()
}

pub fn matrix_add(x: &Matrix, y: &Matrix, q: u32) -> Matrix {
    x.iter().zip(y).map(|(a, b)| add(a, b, q)).collect()
}

/// Rank-2 `A s + e` with the stream assignment of the Kyber listing:
/// `A[i][j]` is rejection-sampled from `r0` with `c0 = j`, `c1 = i` straight
/// into the transform domain; `s` and `e` are binomial draws from `r1` with
/// `c1 = 0..4`.
pub fn kyber_as_plus_e(matrix_seed: &[u8; 32], noise_seed: &[u8; 32], consts: &NttConstants) -> [Vec<u32>; 2] {
    let (n, q) = (kyber::N, kyber::Q);
    let plan = RejectionPlan::with_default_scale(q).expect("listed prime");
    let a = |i: u16, j: u16| {
        let hat = rej_sample(n, &plan, &mut Prng::new(PrngMode::Shake128, matrix_seed, j, i)).0;
        from_ntt_domain(&hat, consts)
    };
    let noise = |c1: u16| {
        let v = bin_sample(n, 3, &mut Prng::new(PrngMode::Shake256, noise_seed, 0, c1)).expect("k = 3 is supported");
        to_residues(&v, q)
    };
    let s = [noise(0), noise(1)];
    let e = [noise(2), noise(3)];
    [0u16, 1].map(|i| {
        (0..2u16).fold(e[i as usize].clone(), |row, j| add(&row, &negacyclic(&a(i, j), &s[j as usize], q), q))
    })
}
