//! Wasserstein barycentric coding baseline.
//!
//! Analysis fits transport maps from the target measure to each reference
//! and minimizes the quadratic form of the displacement Gram matrix over the
//! simplex. Synthesis approximates the weighted barycenter by repeatedly
//! pushing an iterate through a damped convex combination of barycentric
//! projections onto the references.

use crate::eot::{self, EotConfig};
use crate::exact_ot::{
    barycentric_projection, discrete_w2, quantile_projection_1d, w2_1d, PLAN_BUDGET,
};
use crate::lbcm::{split_base, AnalysisConfig};
use crate::measures::{DiscreteMeasure, MapOnSample, SimplexWeights};
use crate::simplex_opt::{min_quadratic_simplex, symmetrize_and_clip_psd, QpResult};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// How transport plans are computed inside the iterative barycenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanBackend {
    /// Exact in 1D via quantile couplings; exact dense solver when the
    /// support product fits the budget; entropic otherwise, with epsilon set
    /// to 1e-3 times the squared diagonal of the joint bounding box.
    Auto,
    /// Always exact; errors beyond the dense budget (except in 1D).
    Exact,
    /// Always entropic with the given epsilon.
    Entropic(f64),
}

/// Configuration of [`iterative_barycenter`].
#[derive(Debug, Clone)]
pub struct BarycenterConfig {
    /// Damping step in `(0, 1]`.
    pub alpha: f64,
    /// Number of rounds.
    pub k: usize,
    pub backend: PlanBackend,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            k: 200,
            backend: PlanBackend::Auto,
        }
    }
}

impl BarycenterConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::BadConfig(format!(
                "barycenter step must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::BadConfig("barycenter needs at least one round".into()));
        }
        if let PlanBackend::Entropic(e) = self.backend
            && (!e.is_finite() || e <= 0.0)
        {
            return Err(Error::BadEpsilon(e));
        }
        Ok(())
    }
}

/// Gram matrix of displacement fields: entry `(i, j)` integrates
/// `<T_i - id, T_j - id>` against the target sample the maps are based on.
pub fn build_gram_bcm(
    target_sample: &DiscreteMeasure,
    ref_maps: &[MapOnSample],
) -> Result<DMatrix<f64>> {
    if ref_maps.is_empty() {
        return Err(Error::Empty("reference maps"));
    }
    let n = target_sample.len();
    let d = target_sample.dim();
    for m in ref_maps {
        if m.len() != n
            || m.base_points()
                .iter()
                .zip(target_sample.support())
                .any(|(a, b)| a != b)
        {
            return Err(Error::IncompatibleBaseSample);
        }
        if m.images()[0].len() != d {
            return Err(Error::MixedDimension(m.images()[0].len(), d));
        }
    }
    let w = target_sample.weights();
    let m = ref_maps.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (k, (&wk, x)) in w.iter().zip(target_sample.support()).enumerate() {
                let (ti, tj) = (&ref_maps[i].images()[k], &ref_maps[j].images()[k]);
                let mut dot = 0.0;
                for ((a_, b_), c_) in ti.iter().zip(tj).zip(x) {
                    dot += (a_ - c_) * (b_ - c_);
                }
                acc += wk * dot;
            }
            a[(i, j)] = acc;
            a[(j, i)] = acc;
        }
    }
    Ok(symmetrize_and_clip_psd(&a))
}

/// Estimates simplex coordinates of a target over references by fitting
/// entropic maps from the target sample to each reference: potentials on one
/// half of the target sample, Monte-Carlo integration on the other.
pub fn estimate_lambda_bcm_with(
    target: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    cfg: &AnalysisConfig,
) -> Result<QpResult> {
    if refs.is_empty() {
        return Err(Error::Empty("reference measures"));
    }
    let (fit, eval) = split_base(target)?;
    let mut maps = Vec::with_capacity(refs.len());
    for r in refs {
        let pot = eot::solve_dual(&fit, r, &cfg.eot)?;
        let images = eot::entropic_map_batch(&pot, r, eval.support())?;
        maps.push(MapOnSample::new(eval.support().to_vec(), images)?);
    }
    let gram = build_gram_bcm(&eval, &maps)?;
    min_quadratic_simplex(&gram, cfg.qp_tol)
}

/// [`estimate_lambda_bcm_with`] under default tolerances at the given
/// epsilon.
pub fn estimate_lambda_bcm(
    target: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    eps: f64,
) -> Result<QpResult> {
    estimate_lambda_bcm_with(target, refs, &AnalysisConfig::new(eps))
}

fn bbox_diag_sq(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let d = a.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in a.support().iter().chain(b.support()) {
        for ((l, h), c) in lo.iter_mut().zip(&mut hi).zip(p) {
            *l = l.min(*c);
            *h = h.max(*c);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum()
}

/// Barycentric projection of a plan from `from` to `to` under the chosen
/// backend, as a map on `from`'s support.
fn projection_map(
    from: &DiscreteMeasure,
    to: &DiscreteMeasure,
    backend: PlanBackend,
) -> Result<MapOnSample> {
    match backend {
        PlanBackend::Exact => {
            if from.dim() == 1 {
                quantile_projection_1d(from, to)
            } else {
                let (plan, _) = discrete_w2(from, to)?;
                barycentric_projection(&plan, from, to)
            }
        }
        PlanBackend::Entropic(e) => {
            let pot = eot::solve_dual(from, to, &EotConfig::new(e))?;
            let images = eot::entropic_map_batch(&pot, to, from.support())?;
            MapOnSample::new(from.support().to_vec(), images)
        }
        PlanBackend::Auto => {
            if from.dim() == 1 || from.len() * to.len() <= PLAN_BUDGET {
                projection_map(from, to, PlanBackend::Exact)
            } else {
                let eps = 1e-3 * bbox_diag_sq(from, to);
                projection_map(from, to, PlanBackend::Entropic(eps))
            }
        }
    }
}

fn barycenter_round(
    rho: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    lambda: &[f64],
    cfg: &BarycenterConfig,
) -> Result<DiscreteMeasure> {
    let d = rho.dim();
    let mut images: Vec<Vec<f64>> = rho
        .support()
        .iter()
        .map(|p| p.iter().map(|c| (1.0 - cfg.alpha) * c).collect())
        .collect();
    for (r, &l) in refs.iter().zip(lambda) {
        if l == 0.0 {
            continue;
        }
        if r.dim() != d {
            return Err(Error::MixedDimension(r.dim(), d));
        }
        let proj = projection_map(rho, r, cfg.backend)?;
        let scale = cfg.alpha * l;
        for (img, t) in images.iter_mut().zip(proj.images()) {
            for (a, b) in img.iter_mut().zip(t) {
                *a += scale * b;
            }
        }
    }
    if images.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("non-finite barycenter iterate".into()));
    }
    DiscreteMeasure::new(images, rho.weights().to_vec())
}

/// Fixed-round iterative barycenter: each round barycentric-projects the
/// iterate onto every reference and pushes it through the damped convex
/// combination `(1 - alpha) id + alpha sum_j lambda_j T_j`. The support size
/// stays constant (zero-mass atoms of `rho0` are dropped on entry).
pub fn iterative_barycenter(
    refs: &[DiscreteMeasure],
    lambda: &SimplexWeights,
    rho0: &DiscreteMeasure,
    cfg: &BarycenterConfig,
) -> Result<DiscreteMeasure> {
    let (rho, _) = run_barycenter(refs, lambda, rho0, cfg, false)?;
    Ok(rho)
}

/// As [`iterative_barycenter`], also returning every intermediate iterate
/// (for diagnostics; memory scales with `k`).
pub fn iterative_barycenter_trace(
    refs: &[DiscreteMeasure],
    lambda: &SimplexWeights,
    rho0: &DiscreteMeasure,
    cfg: &BarycenterConfig,
) -> Result<(DiscreteMeasure, Vec<DiscreteMeasure>)> {
    run_barycenter(refs, lambda, rho0, cfg, true)
}

fn run_barycenter(
    refs: &[DiscreteMeasure],
    lambda: &SimplexWeights,
    rho0: &DiscreteMeasure,
    cfg: &BarycenterConfig,
    keep_trace: bool,
) -> Result<(DiscreteMeasure, Vec<DiscreteMeasure>)> {
    cfg.validate()?;
    if refs.is_empty() {
        return Err(Error::Empty("reference measures"));
    }
    if lambda.len() != refs.len() {
        return Err(Error::LengthMismatch {
            context: "lambda vs references",
            left: lambda.len(),
            right: refs.len(),
        });
    }
    let mut rho = rho0.drop_zero_atoms()?;
    let mut trace = Vec::new();
    for _ in 0..cfg.k {
        rho = barycenter_round(&rho, refs, lambda.as_slice(), cfg)?;
        if keep_trace {
            trace.push(rho.clone());
        }
    }
    Ok((rho, trace))
}

/// The barycenter functional `sum_j lambda_j W2^2(rho, mu_j)`, evaluated
/// exactly (quantile coupling in 1D, dense solver otherwise).
pub fn barycenter_objective(
    refs: &[DiscreteMeasure],
    lambda: &SimplexWeights,
    rho: &DiscreteMeasure,
) -> Result<f64> {
    if lambda.len() != refs.len() {
        return Err(Error::LengthMismatch {
            context: "lambda vs references",
            left: lambda.len(),
            right: refs.len(),
        });
    }
    let mut acc = 0.0;
    for (r, &l) in refs.iter().zip(lambda.as_slice()) {
        if l == 0.0 {
            continue;
        }
        let w = if rho.dim() == 1 {
            w2_1d(rho, r)?
        } else {
            discrete_w2(rho, r)?.1
        };
        acc += l * w * w;
    }
    Ok(acc)
}
