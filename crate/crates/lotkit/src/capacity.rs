//! Representational capacity of barycentric coding families.
//!
//! One-dimensional side: every monotone map of `[0,1]` is a mixture of the
//! extreme indicator maps `x -> 1[x >= a]`, so coding against that family is
//! dense — witnessed here constructively through coefficient measures on a
//! grid. Two-dimensional side: the family of vertex maps on the unit
//! triangle has a uniform approximation gap of at least `1/192` against the
//! gradient of one explicit convex potential, witnessed by Monte-Carlo
//! integration over random and adversarially searched mixtures.

use crate::measures::{CoefficientMeasure, DiscreteMeasure, SimplexWeights};
use crate::sampling::{self, derive_seed, sample_uniform_triangle};
use crate::simplex_opt::project_simplex;
use crate::{Error, Result};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

/// Proven lower bound on the vertex-map approximation gap.
pub const GAP_LOWER_BOUND: f64 = 1.0 / 192.0;

const MONOTONE_SLACK: f64 = 1e-12;

/// Indicator map `x -> 1[x >= a]`, the extreme ray of the monotone family.
pub fn extreme_map_1d(a: f64, x: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("x", x)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!(
                "{name} = {v} outside [0, 1]"
            )));
        }
    }
    Ok(if x >= a { 1.0 } else { 0.0 })
}

/// A nondecreasing map of `[0,1]` represented by its values at the midpoint
/// grid `(j + 1/2) / g`.
#[derive(Debug, Clone)]
pub struct MonotoneMap1D {
    values: Vec<f64>,
}

impl MonotoneMap1D {
    /// Default grid resolution of [`MonotoneMap1D::from_fn_default`].
    pub const DEFAULT_GRID: usize = 10_000;

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("monotone map grid"));
        }
        let mut clamped = values;
        for v in &mut clamped {
            if !v.is_finite() || *v < -MONOTONE_SLACK || *v > 1.0 + MONOTONE_SLACK {
                return Err(Error::OutOfRange(format!(
                    "monotone map value {v} outside [0, 1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        for w in clamped.windows(2) {
            if w[1] < w[0] - MONOTONE_SLACK {
                return Err(Error::OutOfRange(format!(
                    "map decreases: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { values: clamped })
    }

    /// Samples `f` at the `g` midpoints of `[0,1]`.
    pub fn from_fn(g: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if g == 0 {
            return Err(Error::Empty("monotone map grid"));
        }
        Self::from_values((0..g).map(|j| f((j as f64 + 0.5) / g as f64)).collect())
    }

    /// [`MonotoneMap1D::from_fn`] at the default resolution.
    pub fn from_fn_default(f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(Self::DEFAULT_GRID, f)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Midpoint grid coordinate of index `j`.
    pub fn grid_point(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.values.len() as f64
    }
}

/// Mixing measure over the extreme-map index: successive increments of the
/// map become atom masses at the grid points, and the mass the map never
/// reaches sits in an atom at index 1.
pub fn coeff_measure_from_map(map: &MonotoneMap1D) -> Result<CoefficientMeasure> {
    let mut atoms = Vec::with_capacity(map.grid_size() + 1);
    let mut masses = Vec::with_capacity(map.grid_size() + 1);
    let mut prev = 0.0;
    for (j, &v) in map.values().iter().enumerate() {
        let inc = (v - prev).max(0.0);
        if inc > 0.0 {
            atoms.push(map.grid_point(j));
            masses.push(inc);
        }
        prev = prev.max(v);
    }
    let tail = (1.0 - prev).max(0.0);
    if tail > 0.0 {
        atoms.push(1.0);
        masses.push(tail);
    }
    CoefficientMeasure::new(atoms, masses)
}

/// Pushforward of the uniform `n_base`-midpoint grid of `[0,1]` through the
/// mixture map `T(x) = sum_j mass_j 1[x >= a_j]`.
pub fn lbcm_1d_synthesize(coeff: &CoefficientMeasure, n_base: usize) -> Result<DiscreteMeasure> {
    if n_base == 0 {
        return Err(Error::Empty("synthesis base grid"));
    }
    let mut order: Vec<usize> = (0..coeff.len()).collect();
    order.sort_by(|&a, &b| coeff.atoms()[a].total_cmp(&coeff.atoms()[b]));
    let mut images = Vec::with_capacity(n_base);
    let mut acc = 0.0;
    let mut next = 0usize;
    for i in 0..n_base {
        let x = (i as f64 + 0.5) / n_base as f64;
        while next < order.len() && coeff.atoms()[order[next]] <= x {
            acc += coeff.masses()[order[next]];
            next += 1;
        }
        images.push(vec![acc.min(1.0)]);
    }
    DiscreteMeasure::uniform(images)
}

/// Fixed vertices of the triangle family: `(0,0)`, `(0,1)`, `(1,0)`.
pub const VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];

/// Offsets selecting which vertex wins where.
#[derive(Debug, Clone, Copy)]
pub struct VertexMapParams {
    pub b: [f64; 3],
}

impl VertexMapParams {
    pub fn new(b: [f64; 3]) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("vertex offsets must be finite".into()));
        }
        Ok(Self { b })
    }
}

fn in_triangle(x: f64, y: f64) -> bool {
    x >= -MONOTONE_SLACK && y >= -MONOTONE_SLACK && x + y <= 1.0 + MONOTONE_SLACK
}

/// Subgradient selection of `max_i <v_i, x> + b_i`: returns the winning
/// vertex, ties broken by lowest index.
pub fn vertex_map_2d(params: &VertexMapParams, x: [f64; 2]) -> Result<[f64; 2]> {
    if !in_triangle(x[0], x[1]) {
        return Err(Error::OutOfRange(format!(
            "({}, {}) outside the unit triangle",
            x[0], x[1]
        )));
    }
    let scores = [
        params.b[0],
        x[1] + params.b[1],
        x[0] + params.b[2],
    ];
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(VERTICES[best])
}

/// Gradient of the convex potential `phi0(x, y) = x^2 / (4 (2 - y))`.
pub fn grad_phi0(x: f64, y: f64) -> Result<[f64; 2]> {
    if y >= 2.0 {
        return Err(Error::OutOfRange(format!("y = {y} >= 2")));
    }
    let s = 2.0 - y;
    Ok([x / (2.0 * s), x * x / (4.0 * s * s)])
}

fn validate_combo(combo: &[(f64, VertexMapParams)]) -> Result<()> {
    if combo.is_empty() {
        return Err(Error::Empty("vertex-map combination"));
    }
    SimplexWeights::new(combo.iter().map(|(w, _)| *w).collect()).map(|_| ())
}

/// Monte-Carlo estimate (with standard error) of the average Euclidean
/// deviation between a convex combination of vertex maps and the gradient of
/// the reference potential, over the uniform triangle.
pub fn counterexample_gap(
    combo: &[(f64, VertexMapParams)],
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    validate_combo(combo)?;
    if n_mc < 1000 {
        return Err(Error::BadConfig(format!(
            "gap estimation needs at least 1000 Monte-Carlo points, got {n_mc}"
        )));
    }
    let pts = sample_uniform_triangle(n_mc, seed);
    let mut norms = Vec::with_capacity(n_mc);
    for p in &pts {
        let g = grad_phi0(p[0], p[1])?;
        let mut mx = -g[0];
        let mut my = -g[1];
        for (w, params) in combo {
            let v = vertex_map_2d(params, *p)?;
            mx += w * v[0];
            my += w * v[1];
        }
        norms.push((mx * mx + my * my).sqrt());
    }
    let mean = norms.iter().sum::<f64>() / n_mc as f64;
    let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n_mc as f64 - 1.0);
    Ok((mean, (var / n_mc as f64).sqrt()))
}

/// Random combination: offsets i.i.d. standard normal, weights uniform on
/// the simplex.
pub fn random_combo(n_atoms: usize, seed: u64) -> Result<Vec<(f64, VertexMapParams)>> {
    if n_atoms == 0 {
        return Err(Error::Empty("vertex-map combination"));
    }
    let mut rng = sampling::rng_from_seed(derive_seed(seed, 1));
    let weights = sampling::sample_simplex_uniform(n_atoms, derive_seed(seed, 2))?;
    let mut combo = Vec::with_capacity(n_atoms);
    for &w in weights.as_slice() {
        let b = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        combo.push((w, VertexMapParams::new(b)?));
    }
    Ok(combo)
}

/// Outcome of [`search_min_gap`].
#[derive(Debug, Clone)]
pub struct GapSearchResult {
    /// Gap of the best combination found, evaluated on a fresh sample.
    pub gap: f64,
    pub stderr: f64,
    pub combo: Vec<(f64, VertexMapParams)>,
}

/// Adversarial search for small gaps: random restarts draw offset atoms,
/// then the (convex) mixture weights are optimized by projected subgradient
/// descent on a fixed search sample; the best combination is re-evaluated on
/// a fresh, larger sample.
pub fn search_min_gap(
    max_atoms: usize,
    restarts: usize,
    n_mc_search: usize,
    n_mc_final: usize,
    seed: u64,
) -> Result<GapSearchResult> {
    if max_atoms == 0 || restarts == 0 {
        return Err(Error::Empty("gap search needs atoms and restarts"));
    }
    if n_mc_search < 1000 || n_mc_final < 1000 {
        return Err(Error::BadConfig(
            "gap search needs at least 1000 Monte-Carlo points per stage".into(),
        ));
    }
    let mut best_obj = f64::INFINITY;
    let mut best_combo: Vec<(f64, VertexMapParams)> = Vec::new();
    for r in 0..restarts {
        let rs = derive_seed(seed, 1000 + r as u64);
        let n_atoms = sampling::rng_from_seed(derive_seed(rs, 1)).random_range(1..=max_atoms);
        let combo = random_combo(n_atoms, derive_seed(rs, 2))?;
        let pts = sample_uniform_triangle(n_mc_search, derive_seed(rs, 3));
        // precompute each atom's vertex selection and the potential gradient
        let mut sel = vec![vec![0u8; pts.len()]; n_atoms];
        for (i, (_, params)) in combo.iter().enumerate() {
            for (k, p) in pts.iter().enumerate() {
                let v = vertex_map_2d(params, *p)?;
                sel[i][k] = if v[1] == 1.0 {
                    1
                } else if v[0] == 1.0 {
                    2
                } else {
                    0
                };
            }
        }
        let grads: Vec<[f64; 2]> = pts
            .iter()
            .map(|p| grad_phi0(p[0], p[1]))
            .collect::<Result<_>>()?;
        let mut w: Vec<f64> = combo.iter().map(|(wi, _)| *wi).collect();
        let inv_n = 1.0 / pts.len() as f64;
        let mut obj = f64::INFINITY;
        for t in 0..50 {
            // mixture value and unit residual direction per sample point
            let mut sub = vec![0.0; n_atoms];
            let mut total = 0.0;
            for k in 0..pts.len() {
                let mut mx = -grads[k][0];
                let mut my = -grads[k][1];
                for (i, wi) in w.iter().enumerate() {
                    match sel[i][k] {
                        1 => my += wi,
                        2 => mx += wi,
                        _ => {}
                    }
                }
                let norm = (mx * mx + my * my).sqrt();
                total += norm;
                if norm > 0.0 {
                    let (ux, uy) = (mx / norm, my / norm);
                    for (i, s) in sub.iter_mut().enumerate() {
                        match sel[i][k] {
                            1 => *s += uy,
                            2 => *s += ux,
                            _ => {}
                        }
                    }
                }
            }
            obj = total * inv_n;
            let step = 0.3 / ((t + 1) as f64).sqrt();
            let moved: Vec<f64> = w
                .iter()
                .zip(&sub)
                .map(|(wi, s)| wi - step * s * inv_n)
                .collect();
            w = project_simplex(&moved);
        }
        if obj < best_obj {
            best_obj = obj;
            best_combo = combo
                .iter()
                .zip(&w)
                .map(|((_, p), &wi)| (wi, *p))
                .collect();
        }
    }
    // weights may have been zeroed by projection; renormalize defensively
    let total: f64 = best_combo.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut best_combo {
        *w /= total;
    }
    let (gap, stderr) = counterexample_gap(&best_combo, n_mc_final, derive_seed(seed, 7))?;
    Ok(GapSearchResult {
        gap,
        stderr,
        combo: best_combo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ot::w2_1d;
    use approx::assert_abs_diff_eq;

    #[test]
    fn extreme_map_basics() {
        assert_eq!(extreme_map_1d(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(extreme_map_1d(0.0, 0.7).unwrap(), 1.0);
        assert_eq!(extreme_map_1d(1.0, 0.99).unwrap(), 0.0);
        assert_eq!(extreme_map_1d(1.0, 1.0).unwrap(), 1.0);
        assert!(extreme_map_1d(-0.1, 0.5).is_err());
        assert!(extreme_map_1d(0.5, 1.5).is_err());
    }

    #[test]
    fn extreme_map_pushforward_splits_mass() {
        let n = 1000;
        let mut at_zero = 0;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            if extreme_map_1d(0.3, x).unwrap() == 0.0 {
                at_zero += 1;
            }
        }
        assert_eq!(at_zero, 300);
    }

    #[test]
    fn monotone_map_rejects_decreasing_values() {
        assert!(MonotoneMap1D::from_values(vec![0.1, 0.5, 0.4]).is_err());
        assert!(MonotoneMap1D::from_values(vec![0.1, 1.2]).is_err());
        assert!(MonotoneMap1D::from_values(vec![0.1, 0.1, 0.9]).is_ok());
    }

    #[test]
    fn step_map_gives_single_atom() {
        let t = MonotoneMap1D::from_fn(10_000, |x| if x >= 0.3 { 1.0 } else { 0.0 }).unwrap();
        let c = coeff_measure_from_map(&t).unwrap();
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c.atoms()[0], 0.3, epsilon = 1e-3);
        assert_abs_diff_eq!(c.masses()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_map_gives_near_uniform_coefficients() {
        let g = 100;
        let t = MonotoneMap1D::from_fn(g, |x| x).unwrap();
        let c = coeff_measure_from_map(&t).unwrap();
        // interior increments are exactly 1/g; the two boundary slivers
        // carry half a cell each
        for (j, (&a, &m)) in c.atoms().iter().zip(c.masses()).enumerate() {
            if a < 1.0 && j > 0 {
                assert_abs_diff_eq!(m, 1.0 / g as f64, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(c.masses()[0], 0.5 / g as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(
            *c.masses().last().unwrap(),
            0.5 / g as f64,
            epsilon = 1e-12
        );
        assert_eq!(*c.atoms().last().unwrap(), 1.0);
    }

    #[test]
    fn constant_zero_map_is_atom_at_one() {
        let t = MonotoneMap1D::from_fn(100, |_| 0.0).unwrap();
        let c = coeff_measure_from_map(&t).unwrap();
        assert_eq!(c.atoms(), &[1.0]);
        assert_eq!(c.masses(), &[1.0]);
    }

    #[test]
    fn synthesize_single_atom_splits_mass() {
        let c = CoefficientMeasure::new(vec![0.5], vec![1.0]).unwrap();
        let m = lbcm_1d_synthesize(&c, 100).unwrap();
        let zeros = m.support().iter().filter(|p| p[0] == 0.0).count();
        let ones = m.support().iter().filter(|p| p[0] == 1.0).count();
        assert_eq!(zeros, 50);
        assert_eq!(ones, 50);
    }

    #[test]
    fn synthesize_two_atoms_gives_three_levels() {
        let c = CoefficientMeasure::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
        let m = lbcm_1d_synthesize(&c, 200).unwrap();
        let count = |v: f64| m.support().iter().filter(|p| p[0] == v).count();
        assert_eq!(count(0.0), 50);
        assert_eq!(count(0.5), 100);
        assert_eq!(count(1.0), 50);
    }

    #[test]
    fn round_trip_is_within_discretization_error() {
        type Map1D = Box<dyn Fn(f64) -> f64>;
        let family: Vec<(&str, Map1D)> = vec![
            ("step", Box::new(|x| if x >= 0.3 { 1.0 } else { 0.0 })),
            ("identity", Box::new(|x| x)),
            (
                "piecewise",
                Box::new(|x: f64| (2.0 * x - 0.5).clamp(0.0, 1.0)),
            ),
            ("square", Box::new(|x| x * x)),
        ];
        for n in [50usize, 200] {
            for (name, f) in &family {
                let t = MonotoneMap1D::from_fn(n, f).unwrap();
                let synth = lbcm_1d_synthesize(&coeff_measure_from_map(&t).unwrap(), n).unwrap();
                let direct = DiscreteMeasure::uniform(
                    t.values().iter().map(|&v| vec![v]).collect(),
                )
                .unwrap();
                let w = w2_1d(&synth, &direct).unwrap();
                assert!(w <= 2.0 / n as f64, "{name} at {n}: {w}");
            }
        }
    }

    #[test]
    fn mixture_of_two_extremes_is_not_extreme() {
        let w = 0.3;
        let t = MonotoneMap1D::from_fn(1000, |x| {
            w * extreme_map_1d(0.2, x).unwrap() + (1.0 - w) * extreme_map_1d(0.7, x).unwrap()
        })
        .unwrap();
        let mut distinct: Vec<f64> = t.values().to_vec();
        distinct.dedup();
        assert_eq!(distinct, vec![0.0, 0.3, 1.0]);
    }

    #[test]
    fn vertex_map_examples() {
        let dominant = VertexMapParams::new([10.0, 0.0, 0.0]).unwrap();
        assert_eq!(vertex_map_2d(&dominant, [0.3, 0.3]).unwrap(), [0.0, 0.0]);
        let flat = VertexMapParams::new([0.0, 0.0, 0.0]).unwrap();
        assert_eq!(vertex_map_2d(&flat, [0.9, 0.05]).unwrap(), [1.0, 0.0]);
        // exact tie at the origin resolves to the lowest index
        assert_eq!(vertex_map_2d(&flat, [0.0, 0.0]).unwrap(), [0.0, 0.0]);
        assert!(vertex_map_2d(&flat, [0.8, 0.8]).is_err());
    }

    #[test]
    fn vertex_map_pushforward_hits_only_vertices() {
        let params = VertexMapParams::new([0.1, -0.2, 0.05]).unwrap();
        for p in sample_uniform_triangle(500, 3) {
            let v = vertex_map_2d(&params, p).unwrap();
            assert!(VERTICES.contains(&v));
        }
    }

    #[test]
    fn vertex_first_coordinate_nonincreasing_in_y() {
        for trial in 0..100 {
            let combo = random_combo(1, 500 + trial).unwrap();
            let params = combo[0].1;
            for xi in 0..20 {
                let x = xi as f64 / 20.0;
                let mut prev = f64::INFINITY;
                for yi in 0..40 {
                    let y = (1.0 - x) * yi as f64 / 40.0;
                    let v = vertex_map_2d(&params, [x, y]).unwrap();
                    assert!(v[0] <= prev + 1e-15, "b={:?} x={x} y={y}", params.b);
                    prev = v[0];
                }
            }
        }
    }

    #[test]
    fn grad_phi0_matches_finite_differences() {
        assert_eq!(grad_phi0(0.0, 0.7).unwrap(), [0.0, 0.0]);
        let g = grad_phi0(1.0, 0.0).unwrap();
        assert_abs_diff_eq!(g[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0625, epsilon = 1e-15);
        assert!(grad_phi0(0.5, 2.0).is_err());

        let phi = |x: f64, y: f64| x * x / (4.0 * (2.0 - y));
        let h = 1e-6;
        for xi in 1..20 {
            for yi in 1..20 {
                let x = xi as f64 / 21.0;
                let y = (1.0 - x) * yi as f64 / 21.0;
                let g = grad_phi0(x, y).unwrap();
                let fx = (phi(x + h, y) - phi(x - h, y)) / (2.0 * h);
                let fy = (phi(x, y + h) - phi(x, y - h)) / (2.0 * h);
                assert_abs_diff_eq!(g[0], fx, epsilon = 1e-6);
                assert_abs_diff_eq!(g[1], fy, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn gap_of_constant_map_exceeds_bound() {
        let combo = vec![(1.0, VertexMapParams::new([10.0, 0.0, 0.0]).unwrap())];
        let (gap, stderr) = counterexample_gap(&combo, 20_000, 1).unwrap();
        assert!(gap > GAP_LOWER_BOUND, "{gap}");
        assert!(stderr < gap / 10.0);
    }

    #[test]
    fn gap_respects_lower_bound_on_random_combos() {
        for trial in 0..20 {
            let n_atoms = 1 + (trial as usize % 10) * 5;
            let combo = random_combo(n_atoms, 40 + trial).unwrap();
            let (gap, stderr) = counterexample_gap(&combo, 10_000, 90 + trial).unwrap();
            assert!(
                gap >= GAP_LOWER_BOUND - 3.0 * stderr,
                "trial {trial}: gap {gap} stderr {stderr}"
            );
        }
    }

    #[test]
    fn stderr_shrinks_with_sample_size() {
        let combo = random_combo(5, 77).unwrap();
        let (_, s1) = counterexample_gap(&combo, 10_000, 5).unwrap();
        let (_, s2) = counterexample_gap(&combo, 40_000, 5).unwrap();
        let ratio = s1 / s2;
        assert!((ratio - 2.0).abs() <= 0.5, "ratio {ratio}");
    }

    #[test]
    fn gap_rejects_bad_inputs() {
        assert!(counterexample_gap(&[], 2000, 0).is_err());
        let combo = random_combo(3, 1).unwrap();
        assert!(counterexample_gap(&combo, 100, 0).is_err());
        let unnorm = vec![(0.4, combo[0].1), (0.4, combo[1].1)];
        assert!(counterexample_gap(&unnorm, 2000, 0).is_err());
    }

    #[test]
    fn search_cannot_beat_the_bound() {
        let res = search_min_gap(10, 8, 2000, 20_000, 12).unwrap();
        assert!(
            res.gap >= GAP_LOWER_BOUND - 3.0 * res.stderr,
            "gap {} stderr {}",
            res.gap,
            res.stderr
        );
        let total: f64 = res.combo.iter().map(|(w, _)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }
}
