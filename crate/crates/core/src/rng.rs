//! Seeded generators and stream splitting.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose
//! seed is derived from a root seed plus a path of integer labels, so any
//! grid point, redraw or trial can be regenerated in isolation and in any
//! order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha20Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and a label path.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng_from(root: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, path))
}

/// Matrix with i.i.d. standard normal entries, filled row-major.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
