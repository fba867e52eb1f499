//! Discrete measures, sampled transport maps, and coefficient measures.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, Write};
use std::path::Path;

/// Absolute tolerance enforced on the weight sum after construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Deviations of the weight sum from 1 below this bound are silently
/// renormalized; larger deviations are rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

fn validate_weights(weights: &[f64], renormalize_tol: f64) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::Empty("weights"));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::OutOfRange(format!("non-finite weight at {i}")));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { index: i, value: w });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > renormalize_tol {
        return Err(Error::NotNormalized { sum });
    }
    let mut out = weights.to_vec();
    if (sum - 1.0).abs() > 0.0 {
        for w in &mut out {
            *w /= sum;
        }
    }
    Ok(out)
}

fn validate_points(points: &[Vec<f64>], context: &'static str) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::Empty(context));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::Empty("point coordinates"));
    }
    for p in points {
        if p.len() != dim {
            return Err(Error::MixedDimension(dim, p.len()));
        }
        for &c in p {
            if !c.is_finite() {
                return Err(Error::OutOfRange(format!("non-finite coordinate in {context}")));
            }
        }
    }
    Ok(dim)
}

/// A finitely supported probability measure: atoms in `R^d` with nonnegative
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureData {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure, renormalizing weight sums within [`RENORMALIZE_TOL`]
    /// of one and rejecting anything farther away.
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = validate_points(&support, "support")?;
        let _ = dim;
        if support.len() != weights.len() {
            return Err(Error::LengthMismatch {
                context: "support vs weights",
                left: support.len(),
                right: weights.len(),
            });
        }
        let weights = validate_weights(&weights, RENORMALIZE_TOL)?;
        Ok(Self { support, weights })
    }

    /// Uniform measure on the given points.
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Empty("support"));
        }
        let w = vec![1.0 / n as f64; n];
        Self::new(support, w)
    }

    /// Uniform measure on the `n` midpoints `a + (b-a)(i+1/2)/n`; the standard
    /// grid discretization of the uniform distribution on `[a, b]`.
    pub fn uniform_grid_1d(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("grid"));
        }
        let pts = (0..n)
            .map(|i| vec![a + (b - a) * (i as f64 + 0.5) / n as f64])
            .collect();
        Self::uniform(pts)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.support[k]
    }

    /// Mass-weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (p, &w) in self.support.iter().zip(&self.weights) {
            for (mj, &c) in m.iter_mut().zip(p) {
                *mj += w * c;
            }
        }
        m
    }

    /// Keeps only atoms with strictly positive weight, renormalizing.
    /// Errors if nothing remains.
    pub fn drop_zero_atoms(&self) -> Result<Self> {
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (p, &w) in self.support.iter().zip(&self.weights) {
            if w > 0.0 {
                support.push(p.clone());
                weights.push(w);
            }
        }
        Self::new(support, weights)
    }

    pub fn to_json_string(&self) -> String {
        let data = MeasureData {
            support: self.support.clone(),
            weights: self.weights.clone(),
        };
        serde_json::to_string(&data).expect("measure serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let data: MeasureData =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("measure JSON: {e}")))?;
        Self::new(data.support, data.weights)
    }

    /// CSV with header `x1,...,xd,weight`, one atom per row, full-precision
    /// shortest-roundtrip floats.
    pub fn to_csv_string(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for j in 1..=d {
            out.push_str(&format!("x{j},"));
        }
        out.push_str("weight\n");
        for (p, w) in self.support.iter().zip(&self.weights) {
            for c in p {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{w}\n"));
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines.next().ok_or(Error::Format("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[cols.len() - 1].trim() != "weight" {
            return Err(Error::Format(
                "measure CSV header must be x1,...,xd,weight".into(),
            ));
        }
        let d = cols.len() - 1;
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 1 {
                return Err(Error::Format(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 1,
                    fields.len()
                )));
            }
            let mut p = Vec::with_capacity(d);
            for f in &fields[..d] {
                p.push(parse_float(f, lineno + 2)?);
            }
            support.push(p);
            weights.push(parse_float(fields[d], lineno + 2)?);
        }
        Self::new(support, weights)
    }

    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut reader = BufReader::new(f);
        let mut s = String::new();
        reader.read_to_string(&mut s)?;
        Self::from_csv_str(&s)
    }
}

use std::io::Read;

fn parse_float(s: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("row {row}: bad float {s:?}")))
}

/// A point of the probability simplex; coordinates are nonnegative and sum to
/// one under the same renormalization rule as measure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let w = validate_weights(&weights, RENORMALIZE_TOL)?;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A transport map known through its values on a fixed base sample:
/// `base_points[k] -> images[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOnSample {
    base_points: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
}

impl MapOnSample {
    pub fn new(base_points: Vec<Vec<f64>>, images: Vec<Vec<f64>>) -> Result<Self> {
        validate_points(&base_points, "base points")?;
        validate_points(&images, "map images")?;
        if base_points.len() != images.len() {
            return Err(Error::LengthMismatch {
                context: "base points vs images",
                left: base_points.len(),
                right: images.len(),
            });
        }
        Ok(Self {
            base_points,
            images,
        })
    }

    /// The identity map on the given points.
    pub fn identity_on(points: Vec<Vec<f64>>) -> Result<Self> {
        let images = points.clone();
        Self::new(points, images)
    }

    pub fn len(&self) -> usize {
        self.base_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_points.is_empty()
    }

    pub fn base_points(&self) -> &[Vec<f64>] {
        &self.base_points
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    fn same_base(&self, other: &Self) -> bool {
        self.base_points.len() == other.base_points.len()
            && self
                .base_points
                .iter()
                .zip(&other.base_points)
                .all(|(a, b)| a == b)
    }
}

/// Convex combination of maps that share one base sample (exact float equality
/// of base points): images are combined pointwise.
pub fn combine_maps(lambda: &SimplexWeights, maps: &[MapOnSample]) -> Result<MapOnSample> {
    if lambda.len() != maps.len() {
        return Err(Error::LengthMismatch {
            context: "lambda vs maps",
            left: lambda.len(),
            right: maps.len(),
        });
    }
    if maps.is_empty() {
        return Err(Error::Empty("maps"));
    }
    let first = &maps[0];
    let image_dim = first.images[0].len();
    for m in &maps[1..] {
        if !first.same_base(m) {
            return Err(Error::IncompatibleBaseSample);
        }
        if m.images[0].len() != image_dim {
            return Err(Error::MixedDimension(image_dim, m.images[0].len()));
        }
    }
    let n = first.len();
    let mut images = vec![vec![0.0; image_dim]; n];
    for (w, m) in lambda.as_slice().iter().zip(maps) {
        for (acc, img) in images.iter_mut().zip(&m.images) {
            for (a, &c) in acc.iter_mut().zip(img) {
                *a += w * c;
            }
        }
    }
    MapOnSample::new(first.base_points.clone(), images)
}

/// Pushforward of the uniform measure on the base sample: the empirical
/// measure of the images.
pub fn pushforward(map: &MapOnSample) -> DiscreteMeasure {
    DiscreteMeasure::uniform(map.images.clone()).expect("map images are valid support")
}

/// Pushforward of a weighted measure on the base sample: the images keep the
/// base weights.
pub fn pushforward_weighted(map: &MapOnSample, weights: &[f64]) -> Result<DiscreteMeasure> {
    if weights.len() != map.len() {
        return Err(Error::LengthMismatch {
            context: "pushforward weights vs map",
            left: weights.len(),
            right: map.len(),
        });
    }
    DiscreteMeasure::new(map.images.clone(), weights.to_vec())
}

/// Mixture measure `sum_i lambda_i mu_i`: the union of the supports, each
/// atom keeping `lambda_i` times its original weight. References with zero
/// weight contribute no atoms.
pub fn linear_mixture(
    measures: &[DiscreteMeasure],
    lambda: &SimplexWeights,
) -> Result<DiscreteMeasure> {
    if measures.is_empty() {
        return Err(Error::Empty("mixture components"));
    }
    if lambda.len() != measures.len() {
        return Err(Error::LengthMismatch {
            context: "lambda vs mixture components",
            left: lambda.len(),
            right: measures.len(),
        });
    }
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (m, &l) in measures.iter().zip(lambda.as_slice()) {
        if l == 0.0 {
            continue;
        }
        support.extend(m.support().iter().cloned());
        weights.extend(m.weights().iter().map(|w| l * w));
    }
    DiscreteMeasure::new(support, weights)
}

/// Monte-Carlo estimate of the L2 distance between two maps over their shared
/// base sample: sqrt of the mean squared Euclidean distance between images.
pub fn lot_distance(a: &MapOnSample, b: &MapOnSample) -> Result<f64> {
    if !a.same_base(b) {
        return Err(Error::IncompatibleBaseSample);
    }
    if a.images[0].len() != b.images[0].len() {
        return Err(Error::MixedDimension(a.images[0].len(), b.images[0].len()));
    }
    let n = a.len() as f64;
    let mut acc = 0.0;
    for (x, y) in a.images.iter().zip(&b.images) {
        acc += crate::numeric::sq_dist(x, y);
    }
    Ok((acc / n).sqrt())
}

/// A probability measure on the index set `[0, 1]` of a one-parameter family
/// of maps: atom locations with nonnegative masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMeasure {
    atoms: Vec<f64>,
    masses: Vec<f64>,
}

impl CoefficientMeasure {
    pub fn new(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::LengthMismatch {
                context: "atoms vs masses",
                left: atoms.len(),
                right: masses.len(),
            });
        }
        for &a in &atoms {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::OutOfRange(format!(
                    "coefficient atom {a} outside [0, 1]"
                )));
            }
        }
        let masses = validate_weights(&masses, RENORMALIZE_TOL)?;
        Ok(Self { atoms, masses })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn accepts_exact_weights() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 1);
        assert_abs_diff_eq!(m.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn renormalizes_small_deviation() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.4999999999]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL);
    }

    #[test]
    fn rejects_large_deviation() {
        let err = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.7, 0.2]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn rejects_negative_weight() {
        let err = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { index: 1, .. }));
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::MixedDimension(1, 2)));
    }

    #[test]
    fn grid_is_midpoints() {
        let g = DiscreteMeasure::uniform_grid_1d(0.0, 1.0, 4).unwrap();
        let xs: Vec<f64> = g.support().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn combine_maps_averages_images() {
        let base = vec![vec![0.0], vec![1.0]];
        let m1 = MapOnSample::new(base.clone(), vec![vec![0.0], vec![0.0]]).unwrap();
        let m2 = MapOnSample::new(base.clone(), vec![vec![2.0], vec![4.0]]).unwrap();
        let lam = SimplexWeights::new(vec![0.5, 0.5]).unwrap();
        let c = combine_maps(&lam, &[m1, m2]).unwrap();
        assert_eq!(c.images(), &[vec![1.0], vec![2.0]]);
    }

    #[test]
    fn combine_maps_rejects_mismatched_base() {
        let m1 = MapOnSample::new(vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let m2 = MapOnSample::new(vec![vec![0.5]], vec![vec![0.0]]).unwrap();
        let lam = SimplexWeights::new(vec![0.5, 0.5]).unwrap();
        let err = combine_maps(&lam, &[m1, m2]).unwrap_err();
        assert!(matches!(err, Error::IncompatibleBaseSample));
    }

    #[test]
    fn combine_is_affine_in_lambda() {
        let base = vec![vec![0.0], vec![1.0], vec![2.0]];
        let maps = [
            MapOnSample::new(base.clone(), vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
            MapOnSample::new(base.clone(), vec![vec![-1.0], vec![0.5], vec![2.0]]).unwrap(),
            MapOnSample::new(base.clone(), vec![vec![0.0], vec![0.0], vec![9.0]]).unwrap(),
        ];
        let lam = SimplexWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let c = combine_maps(&lam, &maps).unwrap();
        for k in 0..3 {
            let expect: f64 = (0..3)
                .map(|i| lam.as_slice()[i] * maps[i].images()[k][0])
                .sum();
            assert_abs_diff_eq!(c.images()[k][0], expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn pushforward_is_uniform_on_images() {
        let m = MapOnSample::new(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![3.0]]).unwrap();
        let nu = pushforward(&m);
        assert_eq!(nu.support(), &[vec![2.0], vec![3.0]]);
        assert_eq!(nu.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn lot_distance_of_translation_is_shift() {
        let base: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0]).collect();
        let id = MapOnSample::identity_on(base.clone()).unwrap();
        let shifted = MapOnSample::new(
            base.clone(),
            base.iter().map(|p| vec![p[0] + 0.75]).collect(),
        )
        .unwrap();
        assert_abs_diff_eq!(lot_distance(&id, &shifted).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let m = DiscreteMeasure::new(
            vec![vec![0.1, 0.2], vec![0.3, 0.25], vec![1.0 / 3.0, 0.9]],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        let s = m.to_csv_string();
        let back = DiscreteMeasure::from_csv_str(&s).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn json_round_trip() {
        let m = DiscreteMeasure::new(vec![vec![0.5], vec![2.0]], vec![0.125, 0.875]).unwrap();
        let back = DiscreteMeasure::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn coefficient_measure_validates_range() {
        assert!(CoefficientMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(CoefficientMeasure::new(vec![-0.1], vec![1.0]).is_err());
        assert!(CoefficientMeasure::new(vec![1.1], vec![1.0]).is_err());
    }
}
