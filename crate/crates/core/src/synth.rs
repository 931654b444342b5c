//! Deterministic synthetic fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, ScalarField};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticKind {
    /// Sum of `k` Gaussian bumps with random centres, widths and heights.
    GaussianMix { k: usize, seed: u64 },
    /// Sum of the coordinates; a single minimum and maximum in opposite corners.
    Monotone,
    /// Strictly decreasing row of `len` vertices (dims are ignored).
    Cascade1D { len: usize },
}

pub fn generate(dims: &[usize], kind: SyntheticKind) -> Result<ScalarField> {
    match kind {
        SyntheticKind::GaussianMix { k, seed } => gaussian_mix(dims, k, seed),
        SyntheticKind::Monotone => ScalarField::from_fn(dims, |c| (c[0] + c[1] + c[2]) as f64),
        SyntheticKind::Cascade1D { len } => Ok(cascade_1d(len).0),
    }
}

pub fn gaussian_mix(dims: &[usize], k: usize, seed: u64) -> Result<ScalarField> {
    let grid = Grid::new(dims)?;
    let shape = grid.shape();
    let extent = shape.iter().copied().max().unwrap_or(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<([f64; 3], f64, f64)> = (0..k.max(1))
        .map(|_| {
            let centre = [0, 1, 2].map(|a| rng.gen::<f64>() * (shape[a] as f64 - 1.0));
            let sigma = extent * rng.gen_range(0.08..0.22);
            let height = rng.gen_range(0.5..1.0);
            (centre, sigma, height)
        })
        .collect();
    ScalarField::from_fn(dims, |c| {
        bumps
            .iter()
            .map(|(centre, sigma, height)| {
                let d2: f64 = (0..3).map(|a| (c[a] as f64 - centre[a]).powi(2)).sum();
                height * (-d2 / (2.0 * sigma * sigma)).exp()
            })
            .sum()
    })
}

/// Independent uniform values in `[0, 1)`.
pub fn random_field(dims: &[usize], seed: u64) -> ScalarField {
    let n: usize = dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| rng.gen::<f64>()).collect();
    ScalarField::new(dims, values).expect("valid dims")
}

/// Error bound used by [`cascade_1d`].
pub const CASCADE_XI: f64 = 1.25;

/// A decreasing row `f` with gaps of 0.25 and a decompressed row where the
/// pair (1, 2) is flipped and every vertex from 2 on sits 0.375 too high.
/// With `ξ = 1.25` and five steps (`Δ = 0.25`) lowering vertex 2 ties it with
/// vertex 3, which then has to move, and so on down the row: the correction
/// takes `len - 2` edit rounds.
pub fn cascade_1d(len: usize) -> (ScalarField, ScalarField) {
    let len = len.max(3);
    let f: Vec<f64> = (0..len).map(|i| (len - 1 - i) as f64 * 0.25).collect();
    let fhat: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(i, &v)| if i >= 2 { v + 0.375 } else { v })
        .collect();
    (
        ScalarField::new(&[1, len], f).expect("valid dims"),
        ScalarField::new(&[1, len], fhat).expect("valid dims"),
    )
}
