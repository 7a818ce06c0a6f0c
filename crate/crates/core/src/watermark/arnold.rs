//! Keyed Arnold scrambling of a square bit grid.
//!
//! Each iteration moves the cell at `(x, y)` to
//! `((x + p·y) mod N, (q·x + y) mod N)`. The map is a bijection exactly when
//! `1 − p·q` is a unit modulo `N`, which [`ArnoldKey::new`] enforces.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArnoldKey {
    p: u64,
    q: u64,
    iterations: u32,
    side: usize,
}

pub const DEFAULT_ITERATIONS: u32 = 10;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ArnoldKey {
    /// `p` and `q` are taken modulo `side`.
    pub fn new(p: i64, q: i64, iterations: u32, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidKey("grid side must be positive".into()));
        }
        if iterations == 0 {
            return Err(Error::InvalidKey("iteration count must be at least 1".into()));
        }
        let n = side as i128;
        let p = (p as i128).rem_euclid(n);
        let q = (q as i128).rem_euclid(n);
        let det = (1 - p * q).rem_euclid(n) as u64;
        if gcd(det, side as u64) != 1 {
            return Err(Error::InvalidKey(format!(
                "matrix [[1,{p}],[{q},1]] is not invertible mod {side} (det {det})"
            )));
        }
        Ok(Self {
            p: p as u64,
            q: q as u64,
            iterations,
            side,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Destination cell index (`y * N + x`) of every source cell after
    /// `iterations` steps.
    fn permutation(&self) -> Vec<usize> {
        let n = self.side as u64;
        let one_step: Vec<usize> = (0..self.side * self.side)
            .map(|idx| {
                let x = (idx % self.side) as u64;
                let y = (idx / self.side) as u64;
                let nx = (x + self.p * y) % n;
                let ny = (self.q * x + y) % n;
                (ny * n + nx) as usize
            })
            .collect();
        let mut dest: Vec<usize> = (0..self.side * self.side).collect();
        for _ in 0..self.iterations {
            for d in &mut dest {
                *d = one_step[*d];
            }
        }
        dest
    }
}

/// A square bit grid; cell `(x, y)` lives at index `y * side + x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    side: usize,
    bits: Vec<bool>,
}

impl BitGrid {
    pub fn new(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "{side}x{side} grid needs {} bits, got {}",
                side * side,
                bits.len()
            )));
        }
        Ok(Self { side, bits })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            bits: vec![false; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.side + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.side + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Row-major, MSB-first; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, b)| acc | ((*b as u8) << (7 - i))))
            .collect()
    }

    pub fn from_bytes(side: usize, bytes: &[u8]) -> Result<Self> {
        let cells = side * side;
        if bytes.len() != cells.div_ceil(8) {
            return Err(Error::CorruptPayload(format!(
                "{side}x{side} grid needs {} bytes, got {}",
                cells.div_ceil(8),
                bytes.len()
            )));
        }
        let bits = (0..cells).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        Ok(Self { side, bits })
    }
}

fn check_side(grid: &BitGrid, key: &ArnoldKey) -> Result<()> {
    if grid.side != key.side {
        return Err(Error::InvalidKey(format!(
            "key is for a {0}x{0} grid, grid is {1}x{1}",
            key.side, grid.side
        )));
    }
    Ok(())
}

pub fn arnold_forward(grid: &BitGrid, key: &ArnoldKey) -> Result<BitGrid> {
    check_side(grid, key)?;
    let dest = key.permutation();
    let mut out = vec![false; grid.bits.len()];
    for (src, &d) in dest.iter().enumerate() {
        out[d] = grid.bits[src];
    }
    Ok(BitGrid {
        side: grid.side,
        bits: out,
    })
}

pub fn arnold_inverse(grid: &BitGrid, key: &ArnoldKey) -> Result<BitGrid> {
    check_side(grid, key)?;
    let dest = key.permutation();
    let bits = dest.iter().map(|&d| grid.bits[d]).collect();
    Ok(BitGrid { side: grid.side, bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(side: usize, seed: u64) -> BitGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BitGrid::new(side, (0..side * side).map(|_| rng.random_bool(0.3)).collect()).unwrap()
    }

    #[test]
    fn single_cell_moves_by_the_matrix() {
        let key = ArnoldKey::new(1, 2, 1, 3).unwrap();
        let mut g = BitGrid::zeros(3);
        g.set(1, 0, true);
        let out = arnold_forward(&g, &key).unwrap();
        // x' = 1 + 1*0 = 1, y' = 2*1 + 0 = 2
        assert!(out.get(1, 2));
        assert_eq!(out.count_ones(), 1);
    }

    #[test]
    fn identity_matrix_leaves_grid_unchanged() {
        let g = random_grid(7, 1);
        for t in [1, 2, 9] {
            let key = ArnoldKey::new(0, 0, t, 7).unwrap();
            assert_eq!(arnold_forward(&g, &key).unwrap(), g);
        }
    }

    #[test]
    fn singular_key_is_rejected() {
        assert!(matches!(ArnoldKey::new(1, 1, 1, 2), Err(Error::InvalidKey(_))));
        assert!(ArnoldKey::new(1, 1, 0, 7).is_err());
        assert!(ArnoldKey::new(1, 1, 1, 0).is_err());
        // 1 - 2*3 = -5 = 1 mod 6 is a unit; 1 - 1*3 = -2 = 4 mod 6 is not.
        assert!(ArnoldKey::new(2, 3, 1, 6).is_ok());
        assert!(ArnoldKey::new(1, 3, 1, 6).is_err());
    }

    #[test]
    fn round_trip_and_wrong_iteration_count() {
        let g = random_grid(7, 5);
        let key = ArnoldKey::new(1, 2, 5, 7).unwrap();
        let enc = arnold_forward(&g, &key).unwrap();
        assert_eq!(arnold_inverse(&enc, &key).unwrap(), g);
        let wrong = ArnoldKey::new(1, 2, 4, 7).unwrap();
        assert_ne!(arnold_inverse(&enc, &wrong).unwrap(), g);
    }

    #[test]
    fn zero_grid_is_a_fixed_point() {
        let key = ArnoldKey::new(3, 5, 7, 11).unwrap();
        assert_eq!(arnold_inverse(&BitGrid::zeros(11), &key).unwrap(), BitGrid::zeros(11));
        assert_eq!(arnold_forward(&BitGrid::zeros(11), &key).unwrap(), BitGrid::zeros(11));
    }

    #[test]
    fn side_mismatch_is_rejected() {
        let key = ArnoldKey::new(1, 2, 1, 5).unwrap();
        assert!(arnold_forward(&BitGrid::zeros(4), &key).is_err());
    }

    #[test]
    fn byte_packing_is_msb_first() {
        let mut g = BitGrid::zeros(3);
        g.set(0, 0, true);
        g.set(2, 2, true);
        assert_eq!(g.to_bytes(), vec![0x80, 0x80]);
        assert_eq!(BitGrid::from_bytes(3, &g.to_bytes()).unwrap(), g);
        assert!(BitGrid::from_bytes(3, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn forward_inverse_identity(side in 1usize..40, p in 0i64..1000, q in 0i64..1000, t in 1u32..12, seed in any::<u64>()) {
            if let Ok(key) = ArnoldKey::new(p, q, t, side) {
                let g = random_grid(side, seed);
                let enc = arnold_forward(&g, &key).unwrap();
                prop_assert_eq!(enc.count_ones(), g.count_ones());
                prop_assert_eq!(arnold_inverse(&enc, &key).unwrap(), g);
            }
        }
    }
}
