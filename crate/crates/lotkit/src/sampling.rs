//! Seeded sampling utilities.
//!
//! All generators are deterministic functions of a `u64` seed. The stream
//! behind a seed is a counter-based generator with a 256-bit state
//! (ChaCha12), so distinct seeds give independent streams; callers that need
//! per-trial independence derive seeds as `seed + trial_index`.

use crate::gaussian_bw::SpdMatrix;
use crate::measures::{DiscreteMeasure, SimplexWeights};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// The RNG used throughout the crate.
pub type SeededRng = ChaCha12Rng;

/// Deterministic generator for a given seed.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Mixes a seed with a salt (SplitMix64 finalizer) to derive independent
/// sub-streams, e.g. one per component of an experiment trial.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn standard_normal_vec(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` iid draws from `N(mean, cov)` as a uniform empirical measure.
/// The covariance must be positive definite (Cholesky must succeed).
pub fn sample_gaussian(
    mean: &[f64],
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    let d = mean.len();
    if d == 0 {
        return Err(Error::Empty("mean"));
    }
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::LengthMismatch {
            context: "mean vs covariance",
            left: d,
            right: cov.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let z = standard_normal_vec(&mut rng, d);
        let mut x = mean.to_vec();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            x[i] += acc;
        }
        pts.push(x);
    }
    DiscreteMeasure::uniform(pts)
}

/// Uniform draw from the probability simplex with `m` vertices, via sorted
/// uniform spacings (equivalently Dirichlet(1, ..., 1)).
pub fn sample_simplex_uniform(m: usize, seed: u64) -> Result<SimplexWeights> {
    if m == 0 {
        return Err(Error::Empty("simplex dimension"));
    }
    let mut rng = rng_from_seed(seed);
    if m == 1 {
        return SimplexWeights::new(vec![1.0]);
    }
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut w = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &c in &cuts {
        w.push(c - prev);
        prev = c;
    }
    w.push(1.0 - prev);
    SimplexWeights::new(w)
}

/// A family of `m` simultaneously diagonalizable SPD matrices
/// `Sigma_i = O^T D_i O`: one Haar-distributed orthogonal `O` (QR of a
/// standard Gaussian matrix with the R-diagonal signs folded into Q) and
/// diagonals of half-normal entries `|N(0,1)|` floored at `1e-3`.
pub fn random_covariances(m: usize, d: usize, seed: u64) -> Result<Vec<SpdMatrix>> {
    if m == 0 || d == 0 {
        return Err(Error::Empty("covariance family shape"));
    }
    let mut rng = rng_from_seed(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let diag: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.abs().max(1e-3)
            })
            .collect();
        // O^T D O with O = q^T (rows of q are the shared eigenvectors).
        let mut s = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += q[(a, k)] * diag[k] * q[(b, k)];
                }
                s[(a, b)] = acc;
            }
        }
        out.push(SpdMatrix::new(s)?);
    }
    Ok(out)
}

/// `n` uniform points in the triangle with vertices (0,0), (1,0), (0,1):
/// uniform square draws reflected across `x + y = 1`.
pub fn sample_uniform_triangle(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            if u + v > 1.0 {
                [1.0 - u, 1.0 - v]
            } else {
                [u, v]
            }
        })
        .collect()
}

/// Mass-proportional subsampling without replacement down to at most `cap`
/// atoms; kept atoms retain their original masses, renormalized. Atoms are
/// returned in draw order, so prefixes of the result are themselves random
/// sub-draws.
pub fn subsample_measure(measure: &DiscreteMeasure, cap: usize, seed: u64) -> Result<DiscreteMeasure> {
    if cap == 0 {
        return Err(Error::Empty("subsample cap"));
    }
    let n = measure.len();
    let take = cap.min(n);
    let mut rng = rng_from_seed(seed);
    let mut alive: Vec<usize> = (0..n).collect();
    let mut weights: Vec<f64> = measure.weights().to_vec();
    let mut total: f64 = weights.iter().sum();
    let mut support = Vec::with_capacity(take);
    let mut masses = Vec::with_capacity(take);
    for _ in 0..take {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = alive.len() - 1;
        for (pos, &idx) in alive.iter().enumerate() {
            acc += weights[idx];
            if acc >= target {
                chosen = pos;
                break;
            }
        }
        let idx = alive.swap_remove(chosen);
        support.push(measure.point(idx).to_vec());
        masses.push(measure.weights()[idx]);
        total -= weights[idx];
        weights[idx] = 0.0;
    }
    let sum: f64 = masses.iter().sum();
    for w in &mut masses {
        *w /= sum;
    }
    DiscreteMeasure::new(support, masses)
}
