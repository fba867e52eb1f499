//! Linear barycentric coding of measures.
//!
//! A family of reference measures is represented by transport maps from a
//! shared base measure. Analysis estimates the simplex weights whose
//! combined map best matches a target's map in the base-measure L2 geometry;
//! synthesis pushes the base measure forward through the combined map.
//!
//! Map fitting follows a two-half data layout: potentials are fit against
//! one half of the base sample, and all inner products are Monte-Carlo
//! integrated over the other, independent half.

use crate::eot::{self, EotConfig};
use crate::measures::{
    combine_maps, pushforward_weighted, DiscreteMeasure, MapOnSample, SimplexWeights,
};
pub use crate::measures::lot_distance;
use crate::simplex_opt::{min_quadratic_simplex, symmetrize_and_clip_psd, QpResult};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// A fitted coding problem: the two base half-samples and the transport maps
/// of the references (and optionally the target), all restricted to the
/// evaluation half.
#[derive(Debug, Clone)]
pub struct LbcmProblem {
    base_fit: DiscreteMeasure,
    base_eval: DiscreteMeasure,
    reference_maps: Vec<MapOnSample>,
    target_map: Option<MapOnSample>,
}

impl LbcmProblem {
    /// Assembles a problem from maps that already share `base_eval`'s
    /// support as their base sample.
    pub fn new(
        base_fit: DiscreteMeasure,
        base_eval: DiscreteMeasure,
        reference_maps: Vec<MapOnSample>,
        target_map: Option<MapOnSample>,
    ) -> Result<Self> {
        if reference_maps.is_empty() {
            return Err(Error::Empty("reference maps"));
        }
        for m in reference_maps.iter().chain(&target_map) {
            if m.len() != base_eval.len()
                || m.base_points()
                    .iter()
                    .zip(base_eval.support())
                    .any(|(a, b)| a != b)
            {
                return Err(Error::IncompatibleBaseSample);
            }
        }
        Ok(Self {
            base_fit,
            base_eval,
            reference_maps,
            target_map,
        })
    }

    pub fn base_fit(&self) -> &DiscreteMeasure {
        &self.base_fit
    }

    pub fn base_eval(&self) -> &DiscreteMeasure {
        &self.base_eval
    }

    pub fn reference_maps(&self) -> &[MapOnSample] {
        &self.reference_maps
    }

    pub fn target_map(&self) -> Option<&MapOnSample> {
        self.target_map.as_ref()
    }
}

/// Knobs of [`fit_problem`] / [`estimate_lambda_with`].
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Entropic solver configuration, including epsilon.
    pub eot: EotConfig,
    /// Certificate tolerance of the simplex quadratic program.
    pub qp_tol: f64,
}

impl AnalysisConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            eot: EotConfig::new(epsilon),
            qp_tol: 1e-9,
        }
    }
}

/// Splits a base sample into a fitting half and an evaluation half, each
/// renormalized to a probability measure. With an odd atom count the extra
/// atom goes to the evaluation half.
pub fn split_base(base: &DiscreteMeasure) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if base.len() < 2 {
        return Err(Error::Empty("base sample needs at least two atoms to split"));
    }
    let half = base.len() / 2;
    let make = |lo: usize, hi: usize| -> Result<DiscreteMeasure> {
        let pts = base.support()[lo..hi].to_vec();
        let ws = &base.weights()[lo..hi];
        let total: f64 = ws.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("base half-sample has zero mass"));
        }
        DiscreteMeasure::new(pts, ws.iter().map(|w| w / total).collect())
    };
    Ok((make(0, half)?, make(half, base.len())?))
}

/// Fits entropic maps from the base to each reference (and optionally the
/// target): potentials are solved on the fitting half and the maps are
/// evaluated on the evaluation half.
pub fn fit_problem(
    base: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    target: Option<&DiscreteMeasure>,
    cfg: &AnalysisConfig,
) -> Result<LbcmProblem> {
    if refs.is_empty() {
        return Err(Error::Empty("reference measures"));
    }
    let (fit, eval) = split_base(base)?;
    let fit_map = |m: &DiscreteMeasure| -> Result<MapOnSample> {
        let pot = eot::solve_dual(&fit, m, &cfg.eot)?;
        let images = eot::entropic_map_batch(&pot, m, eval.support())?;
        MapOnSample::new(eval.support().to_vec(), images)
    };
    let reference_maps = refs.iter().map(fit_map).collect::<Result<Vec<_>>>()?;
    let target_map = target.map(fit_map).transpose()?;
    LbcmProblem::new(fit, eval, reference_maps, target_map)
}

/// Gram matrix of the reference maps relative to the target map: entry
/// `(i, j)` integrates `<T_i - T_target, T_j - T_target>` over the
/// evaluation half. Symmetrized and clipped to the PSD cone.
pub fn build_gram(problem: &LbcmProblem) -> Result<DMatrix<f64>> {
    let target = problem
        .target_map
        .as_ref()
        .ok_or(Error::BadConfig("target map required to build the Gram matrix".into()))?;
    let m = problem.reference_maps.len();
    let w = problem.base_eval.weights();
    let n = problem.base_eval.len();
    let d = target.images()[0].len();
    // displacement of each reference map from the target map, per eval atom
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(m);
    for map in &problem.reference_maps {
        if map.images()[0].len() != d {
            return Err(Error::MixedDimension(map.images()[0].len(), d));
        }
        let mut flat = Vec::with_capacity(n * d);
        for (img, t) in map.images().iter().zip(target.images()) {
            for (a, b) in img.iter().zip(t) {
                flat.push(a - b);
            }
        }
        diffs.push(flat);
    }
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let (di, dj) = (&diffs[i][k * d..(k + 1) * d], &diffs[j][k * d..(k + 1) * d]);
                acc += wk * crate::numeric::dot(di, dj);
            }
            a[(i, j)] = acc;
            a[(j, i)] = acc;
        }
    }
    Ok(symmetrize_and_clip_psd(&a))
}

/// Estimates the simplex coordinates of a target measure over reference
/// measures: fits entropic maps with the two-half layout, builds the Gram
/// matrix, and minimizes its quadratic form over the simplex.
pub fn estimate_lambda_with(
    base: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    target: &DiscreteMeasure,
    cfg: &AnalysisConfig,
) -> Result<QpResult> {
    let problem = fit_problem(base, refs, Some(target), cfg)?;
    let gram = build_gram(&problem)?;
    min_quadratic_simplex(&gram, cfg.qp_tol)
}

/// [`estimate_lambda_with`] under default tolerances at the given epsilon.
pub fn estimate_lambda(
    base: &DiscreteMeasure,
    refs: &[DiscreteMeasure],
    target: &DiscreteMeasure,
    eps: f64,
) -> Result<QpResult> {
    estimate_lambda_with(base, refs, target, &AnalysisConfig::new(eps))
}

/// Pushes the evaluation half of the base forward through the convex
/// combination of the reference maps.
pub fn synthesize(lambda: &SimplexWeights, problem: &LbcmProblem) -> Result<DiscreteMeasure> {
    let combined = combine_maps(lambda, &problem.reference_maps)?;
    pushforward_weighted(&combined, problem.base_eval.weights())
}
