//! Itakura-Saito NMF: cost, multiplicative updates, training factorization,
//! and fixed-basis decomposition.
//!
//! The cost is D_IS(V || BG) = sum_{m,n} [ V/(BG) - log(V/(BG)) - 1 ], with V
//! and BG floored at a small epsilon before any division or logarithm. The
//! multiplicative updates keep every factor nonnegative, and training
//! normalizes the basis columns to unit Euclidean norm each iteration while
//! rescaling the gains rows so the product BG is unchanged.

use ndarray::{Array2, ArrayView2};
use rand::distributions::Uniform;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floor for spectrogram entries, model entries and update denominators.
pub const EPSILON_FLOOR: f64 = 1e-12;

/// Spectral dictionary, F x R. Training leaves every column unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: Array2<f64>,
}

impl BasisMatrix {
    pub fn rank(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-frame weights, R x T. `block_ranks` records the per-source row blocks
/// when the basis is a concatenation; empty for a single source.
#[derive(Debug, Clone, PartialEq)]
pub struct GainsMatrix {
    pub values: Array2<f64>,
    pub block_ranks: Vec<usize>,
}

impl GainsMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values, block_ranks: Vec::new() }
    }

    pub fn with_blocks(values: Array2<f64>, block_ranks: Vec<usize>) -> Result<Self> {
        if !block_ranks.is_empty() && block_ranks.iter().sum::<usize>() != values.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "block ranks {:?} do not sum to {} rows",
                block_ranks,
                values.nrows()
            )));
        }
        Ok(Self { values, block_ranks })
    }

    /// Row range of block `i`.
    pub fn block_rows(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.block_ranks[..i].iter().sum();
        start..start + self.block_ranks[i]
    }
}

/// Iteration and initialization choices for a factorization run.
#[derive(Debug, Clone, Copy)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub epsilon_floor: f64,
    pub rng_seed: u64,
}

impl NmfConfig {
    pub fn new(rank: usize, max_iters: usize, rng_seed: u64) -> Self {
        Self { rank, max_iters, epsilon_floor: EPSILON_FLOOR, rng_seed }
    }
}

fn check_shapes(v: &ArrayView2<f64>, b: &BasisMatrix, g: &GainsMatrix) -> Result<()> {
    if b.values.nrows() != v.nrows() || g.values.ncols() != v.ncols()
        || b.values.ncols() != g.values.nrows()
    {
        return Err(Error::ShapeMismatch(format!(
            "V is {}x{}, B is {}x{}, G is {}x{}",
            v.nrows(),
            v.ncols(),
            b.values.nrows(),
            b.values.ncols(),
            g.values.nrows(),
            g.values.ncols()
        )));
    }
    Ok(())
}

fn floored_product(b: &BasisMatrix, g: &GainsMatrix, floor: f64) -> Array2<f64> {
    let mut bg = b.values.dot(&g.values);
    bg.mapv_inplace(|x| x.max(floor));
    bg
}

/// Itakura-Saito divergence between V and the model BG.
pub fn is_divergence(
    v: ArrayView2<f64>,
    b: &BasisMatrix,
    g: &GainsMatrix,
    epsilon_floor: f64,
) -> Result<f64> {
    check_shapes(&v, b, g)?;
    let bg = floored_product(b, g, epsilon_floor);
    let mut total = 0.0;
    for (x, y) in v.iter().zip(bg.iter()) {
        let r = x.max(epsilon_floor) / y;
        total += r - r.ln() - 1.0;
    }
    Ok(total)
}

/// One multiplicative basis update: B <- B .* [(V/(BG)^2) G^T] / [(1/(BG)) G^T].
pub fn update_basis(
    v: ArrayView2<f64>,
    b: &BasisMatrix,
    g: &GainsMatrix,
    epsilon_floor: f64,
) -> Result<BasisMatrix> {
    check_shapes(&v, b, g)?;
    let bg = floored_product(b, g, epsilon_floor);
    let mut ratio = v.to_owned();
    ratio.zip_mut_with(&bg, |x, &y| *x = x.max(epsilon_floor) / (y * y));
    let inv = bg.mapv(|y| 1.0 / y);
    let gt = g.values.t();
    let num = ratio.dot(&gt);
    let mut den = inv.dot(&gt);
    den.mapv_inplace(|x| x.max(epsilon_floor));
    let mut values = b.values.clone();
    values.zip_mut_with(&(&num / &den), |x, &m| *x *= m);
    Ok(BasisMatrix { values })
}

/// One multiplicative gains update: G <- G .* [B^T (V/(BG)^2)] / [B^T (1/(BG))].
pub fn update_gains(
    v: ArrayView2<f64>,
    b: &BasisMatrix,
    g: &GainsMatrix,
    epsilon_floor: f64,
) -> Result<GainsMatrix> {
    check_shapes(&v, b, g)?;
    let bg = floored_product(b, g, epsilon_floor);
    let mut ratio = v.to_owned();
    ratio.zip_mut_with(&bg, |x, &y| *x = x.max(epsilon_floor) / (y * y));
    let inv = bg.mapv(|y| 1.0 / y);
    let bt = b.values.t();
    let num = bt.dot(&ratio);
    let mut den = bt.dot(&inv);
    den.mapv_inplace(|x| x.max(epsilon_floor));
    let mut values = g.values.clone();
    values.zip_mut_with(&(&num / &den), |x, &m| *x *= m);
    Ok(GainsMatrix { values, block_ranks: g.block_ranks.clone() })
}

/// Normalizes B's columns to unit l2 norm and rescales G's rows so the
/// product BG is unchanged.
pub fn normalize_pair(b: &mut BasisMatrix, g: &mut GainsMatrix) {
    for r in 0..b.values.ncols() {
        let norm = b.values.column(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > EPSILON_FLOOR {
            b.values.column_mut(r).mapv_inplace(|x| x / norm);
            g.values.row_mut(r).mapv_inplace(|x| x * norm);
        }
    }
}

/// Strictly positive uniform init on (0.1, 1.1), seeded.
fn init_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dist = Uniform::new(0.1, 1.1);
    Array2::from_shape_fn((rows, cols), |_| rng.sample(dist))
}

/// Seeded positive random gains, R x T, used to start gains-only solves.
pub fn init_gains(rank: usize, cols: usize, rng_seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    init_matrix(rank, cols, &mut rng)
}

/// Full training factorization V ~ BG with alternating updates and
/// per-iteration column normalization.
pub fn factorize(v: ArrayView2<f64>, config: &NmfConfig) -> Result<(BasisMatrix, GainsMatrix)> {
    if v.nrows() == 0 || v.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut b = BasisMatrix { values: init_matrix(v.nrows(), config.rank, &mut rng) };
    let mut g = GainsMatrix::new(init_matrix(config.rank, v.ncols(), &mut rng));

    for _ in 0..config.max_iters {
        b = update_basis(v, &b, &g, config.epsilon_floor)?;
        g = update_gains(v, &b, &g, config.epsilon_floor)?;
        normalize_pair(&mut b, &mut g);
    }
    Ok((b, g))
}

/// Gains-only decomposition against a fixed (trained, column-normalized)
/// basis. `block_ranks` records how the basis was concatenated.
pub fn decompose_fixed_basis(
    y: ArrayView2<f64>,
    b_train: &BasisMatrix,
    block_ranks: &[usize],
    config: &NmfConfig,
) -> Result<GainsMatrix> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let rank = b_train.rank();
    if !block_ranks.is_empty() && block_ranks.iter().sum::<usize>() != rank {
        return Err(Error::ShapeMismatch(format!(
            "block ranks {:?} do not sum to basis rank {}",
            block_ranks, rank
        )));
    }
    let mut g = GainsMatrix::with_blocks(
        init_gains(rank, y.ncols(), config.rng_seed),
        block_ranks.to_vec(),
    )?;
    for _ in 0..config.max_iters {
        g = update_gains(y, b_train, &g, config.epsilon_floor)?;
    }
    Ok(g)
}
