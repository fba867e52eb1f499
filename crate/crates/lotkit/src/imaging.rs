//! Images as measures: grayscale rasters become weighted point clouds,
//! point clouds are rasterized back through a Gaussian kernel, and occluded
//! images are reconstructed by coding against reference images with the
//! barycentric, Wasserstein-barycentric, or pixel-linear method.

use crate::lbcm::{self, AnalysisConfig};
use crate::measures::{linear_mixture, DiscreteMeasure, SimplexWeights};
use crate::sampling::{derive_seed, subsample_measure};
use crate::simplex_opt::project_convex_hull;
use crate::w2bcm::{self, BarycenterConfig};
use crate::{eot, Error, Result};
use nalgebra::DMatrix;
use std::io::Write as _;
use std::path::Path;

/// Square grayscale image with nonnegative intensities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    size: usize,
    data: Vec<f64>,
}

impl GridImage {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::Empty("image"));
        }
        if data.len() != size * size {
            return Err(Error::LengthMismatch {
                context: "image data vs size",
                left: data.len(),
                right: size * size,
            });
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::OutOfRange(
                "pixel intensities must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { size, data })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Intensity at 0-indexed (row, col).
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.size + col] = value;
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// 0-indexed (row, col) of the brightest pixel (first in row-major order
    /// on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / self.size, best % self.size)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks(self.size) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut size = None;
        for (lineno, line) in s.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            match size {
                None => size = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Format(format!(
                        "ragged image rows: {} then {}",
                        w,
                        row.len()
                    )));
                }
                _ => {}
            }
            data.extend(row);
        }
        let w = size.ok_or(Error::Empty("image csv"))?;
        if data.len() != w * w {
            return Err(Error::Format(format!(
                "image must be square, got {} rows of width {w}",
                data.len() / w
            )));
        }
        Self::new(w, data)
    }

    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

/// Rasterization parameters: output side length, fine-grid resolution
/// multiplier, kernel bandwidth, and the lower intensity cutoff.
#[derive(Debug, Clone, Copy)]
pub struct RasterConfig {
    pub out_size: usize,
    pub resolution: usize,
    pub bandwidth: f64,
    pub lower_bound: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            out_size: 28,
            resolution: 4,
            bandwidth: 0.05,
            lower_bound: 1e-6,
        }
    }
}

impl RasterConfig {
    fn validate(&self) -> Result<()> {
        if self.out_size == 0 || self.resolution == 0 {
            return Err(Error::BadConfig(
                "raster size and resolution must be at least 1".into(),
            ));
        }
        if !self.bandwidth.is_finite()
            || self.bandwidth <= 0.0
            || !self.lower_bound.is_finite()
            || self.lower_bound < 0.0
        {
            return Err(Error::BadConfig(format!(
                "need bandwidth > 0 and lower bound >= 0, got {} and {}",
                self.bandwidth, self.lower_bound
            )));
        }
        Ok(())
    }
}

/// Normalized point cloud of the lit pixels: pixel `(i, j)` (1-indexed)
/// becomes an atom at `(i/d, j/d)` weighted by its intensity share.
pub fn image_to_measure(img: &GridImage) -> Result<DiscreteMeasure> {
    let total = img.total_mass();
    if total <= 0.0 {
        return Err(Error::EmptyImage);
    }
    let d = img.size() as f64;
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for row in 0..img.size() {
        for col in 0..img.size() {
            let v = img.get(row, col);
            if v > 0.0 {
                support.push(vec![(row as f64 + 1.0) / d, (col as f64 + 1.0) / d]);
                weights.push(v / total);
            }
        }
    }
    DiscreteMeasure::new(support, weights)
}

/// Rasterizes a measure in four steps: Gaussian-kernel density on the fine
/// `rd x rd` grid, normalization, hard thresholding at the lower bound, then
/// `r x r` block summation and renormalization to unit mass.
pub fn measure_to_image(measure: &DiscreteMeasure, cfg: &RasterConfig) -> Result<GridImage> {
    cfg.validate()?;
    if measure.dim() != 2 {
        return Err(Error::MixedDimension(measure.dim(), 2));
    }
    let d = cfg.out_size;
    let fine = d * cfg.resolution;
    let inv_b2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
    let mut kernel = vec![0.0; fine * fine];
    for (p, &mass) in measure.support().iter().zip(measure.weights()) {
        for i in 0..fine {
            let x = (i as f64 + 1.0) / fine as f64;
            let dx = x - p[0];
            let row = &mut kernel[i * fine..(i + 1) * fine];
            for (j, cell) in row.iter_mut().enumerate() {
                let y = (j as f64 + 1.0) / fine as f64;
                let dy = y - p[1];
                *cell += mass * (-(dx * dx + dy * dy) * inv_b2).exp();
            }
        }
    }
    let total: f64 = kernel.iter().sum();
    if total <= 0.0 {
        return Err(Error::LowerBoundTooAggressive);
    }
    for v in &mut kernel {
        *v /= total;
    }
    for v in &mut kernel {
        if *v <= cfg.lower_bound {
            *v = 0.0;
        }
    }
    let mut coarse = vec![0.0; d * d];
    for i in 0..fine {
        for j in 0..fine {
            coarse[(i / cfg.resolution) * d + j / cfg.resolution] += kernel[i * fine + j];
        }
    }
    let mass: f64 = coarse.iter().sum();
    if mass <= 0.0 {
        return Err(Error::LowerBoundTooAggressive);
    }
    for v in &mut coarse {
        *v /= mass;
    }
    GridImage::new(d, coarse)
}

/// Rectangular pixel block, 0-indexed.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionBlock {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl OcclusionBlock {
    /// Centered square block, e.g. the central 10x10 of a 28x28 image.
    pub fn central(image_size: usize, block_size: usize) -> Self {
        let off = image_size.saturating_sub(block_size) / 2;
        Self {
            row0: off,
            col0: off,
            height: block_size.min(image_size),
            width: block_size.min(image_size),
        }
    }
}

/// Zeroes the pixels inside the block, leaving the rest unchanged.
pub fn occlude(img: &GridImage, block: &OcclusionBlock) -> Result<GridImage> {
    if block.row0 + block.height > img.size() || block.col0 + block.width > img.size() {
        return Err(Error::BlockOutOfBounds);
    }
    let mut out = img.clone();
    for row in block.row0..block.row0 + block.height {
        for col in block.col0..block.col0 + block.width {
            out.set(row, col, 0.0);
        }
    }
    Ok(out)
}

/// Procedurally generated base images for coding pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseImageKind {
    Uniform,
    Checkerboard,
    Circle,
    CornerSquares,
}

impl std::str::FromStr for BaseImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "checkerboard" => Ok(Self::Checkerboard),
            "circle" => Ok(Self::Circle),
            "corner_squares" => Ok(Self::CornerSquares),
            other => Err(Error::BadConfig(format!(
                "unknown base image kind {other:?}; expected uniform, checkerboard, circle or corner_squares"
            ))),
        }
    }
}

/// Generates a `d x d` base image of the given kind.
pub fn base_image(kind: BaseImageKind, d: usize) -> Result<GridImage> {
    if d == 0 {
        return Err(Error::Empty("image"));
    }
    let mut img = GridImage::zeros(d)?;
    match kind {
        BaseImageKind::Uniform => {
            for row in 0..d {
                for col in 0..d {
                    img.set(row, col, 1.0);
                }
            }
        }
        BaseImageKind::Checkerboard => {
            for row in 0..d {
                for col in 0..d {
                    img.set(row, col, ((row + col) % 2) as f64);
                }
            }
            // a 1x1 board would be all zeros
            if img.total_mass() <= 0.0 {
                img.set(0, 0, 1.0);
            }
        }
        BaseImageKind::Circle => {
            let c = (d as f64 - 1.0) / 2.0;
            let radius = d as f64 / 4.0;
            for row in 0..d {
                for col in 0..d {
                    let (dr, dc) = (row as f64 - c, col as f64 - c);
                    if (dr * dr + dc * dc).sqrt() <= radius {
                        img.set(row, col, 1.0);
                    }
                }
            }
        }
        BaseImageKind::CornerSquares => {
            let k = (d / 4).max(1);
            for row in 0..d {
                for col in 0..d {
                    let near_r = row < k || row >= d - k;
                    let near_c = col < k || col >= d - k;
                    if near_r && near_c {
                        img.set(row, col, 1.0);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Reconstruction strategy for an occluded image.
#[derive(Debug, Clone)]
pub enum ReconstructionMethod {
    /// Barycentric coding in transport-map space against a base image.
    Lbcm { base: GridImage },
    /// Wasserstein barycentric coding with iterative synthesis.
    W2bcm,
    /// Convex-hull projection of raw normalized pixel vectors.
    Linear,
}

/// Pipeline parameters shared by all reconstruction methods.
#[derive(Debug, Clone)]
pub struct ReconstructionParams {
    pub raster: RasterConfig,
    pub block: OcclusionBlock,
    /// Entropic epsilon; defaults to the sample-size schedule at the
    /// smallest participating atom count.
    pub epsilon: Option<f64>,
    /// Measures are subsampled to at most this many atoms before transport
    /// solves.
    pub subsample_cap: usize,
    pub seed: u64,
    pub barycenter: BarycenterConfig,
    pub qp_tol: f64,
}

impl ReconstructionParams {
    pub fn new(seed: u64) -> Self {
        Self {
            raster: RasterConfig::default(),
            block: OcclusionBlock::central(28, 10),
            epsilon: None,
            subsample_cap: 1500,
            seed,
            barycenter: BarycenterConfig::default(),
            qp_tol: 1e-9,
        }
    }
}

/// A reconstructed image together with the estimated coordinates.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: GridImage,
    pub lambda: Vec<f64>,
}

fn normalized_vector(img: &GridImage) -> Result<Vec<f64>> {
    let total = img.total_mass();
    if total <= 0.0 {
        return Err(Error::EmptyImage);
    }
    Ok(img.data().iter().map(|v| v / total).collect())
}

/// Image measure subsampled to the cap; subsampling draws atoms
/// mass-proportionally in random order, which also serves as the shuffle
/// ahead of half-splitting.
fn prepared_measure(img: &GridImage, cap: usize, seed: u64) -> Result<DiscreteMeasure> {
    subsample_measure(&image_to_measure(img)?, cap, seed)
}

/// Reconstructs an occluded target from unoccluded references: coordinates
/// are estimated on occluded data (the references are occluded with the
/// same block internally) and the image is synthesized from the unoccluded
/// references.
pub fn reconstruct(
    method: &ReconstructionMethod,
    occluded_target: &GridImage,
    refs: &[GridImage],
    params: &ReconstructionParams,
) -> Result<Reconstruction> {
    if refs.is_empty() {
        return Err(Error::Empty("reference images"));
    }
    let d = occluded_target.size();
    if refs.iter().any(|r| r.size() != d) {
        return Err(Error::MixedDimension(refs[0].size(), d));
    }
    let occluded_refs: Vec<GridImage> = refs
        .iter()
        .map(|r| occlude(r, &params.block))
        .collect::<Result<_>>()?;

    match method {
        ReconstructionMethod::Linear => {
            let c = normalized_vector(occluded_target)?;
            let cols: Vec<Vec<f64>> = occluded_refs
                .iter()
                .map(normalized_vector)
                .collect::<Result<_>>()?;
            let b = DMatrix::from_fn(d * d, refs.len(), |i, j| cols[j][i]);
            let qp = project_convex_hull(&b, &c, params.qp_tol)?;
            let mut out = vec![0.0; d * d];
            for (img, &l) in refs.iter().zip(&qp.lambda) {
                if l == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(normalized_vector(img)?) {
                    *o += l * v;
                }
            }
            Ok(Reconstruction {
                image: GridImage::new(d, out)?,
                lambda: qp.lambda,
            })
        }
        ReconstructionMethod::W2bcm => {
            let cap = params.subsample_cap;
            let target_m = prepared_measure(occluded_target, cap, derive_seed(params.seed, 1))?;
            let refs_occ: Vec<DiscreteMeasure> = occluded_refs
                .iter()
                .enumerate()
                .map(|(i, r)| prepared_measure(r, cap, derive_seed(params.seed, 2 + i as u64)))
                .collect::<Result<_>>()?;
            let eps = params.epsilon.unwrap_or_else(|| {
                let n = refs_occ
                    .iter()
                    .map(|m| m.len())
                    .chain([target_m.len()])
                    .min()
                    .unwrap_or(1);
                eot::epsilon_schedule(n, 2, 3.0)
            });
            let cfg = AnalysisConfig {
                eot: eot::EotConfig::new(eps),
                qp_tol: params.qp_tol,
            };
            let qp = w2bcm::estimate_lambda_bcm_with(&target_m, &refs_occ, &cfg)?;
            let lambda = SimplexWeights::new(qp.lambda.clone())?;
            let refs_full: Vec<DiscreteMeasure> = refs
                .iter()
                .enumerate()
                .map(|(i, r)| prepared_measure(r, cap, derive_seed(params.seed, 100 + i as u64)))
                .collect::<Result<_>>()?;
            let rho0 = subsample_measure(
                &linear_mixture(&refs_full, &lambda)?,
                cap,
                derive_seed(params.seed, 200),
            )?;
            let rho = w2bcm::iterative_barycenter(&refs_full, &lambda, &rho0, &params.barycenter)?;
            Ok(Reconstruction {
                image: measure_to_image(&rho, &params.raster)?,
                lambda: qp.lambda,
            })
        }
        ReconstructionMethod::Lbcm { base } => {
            if base.size() != d {
                return Err(Error::MixedDimension(base.size(), d));
            }
            let cap = params.subsample_cap;
            let base_occ = occlude(base, &params.block)?;
            let base_occ_m = prepared_measure(&base_occ, cap, derive_seed(params.seed, 0))?;
            let target_m = prepared_measure(occluded_target, cap, derive_seed(params.seed, 1))?;
            let refs_occ: Vec<DiscreteMeasure> = occluded_refs
                .iter()
                .enumerate()
                .map(|(i, r)| prepared_measure(r, cap, derive_seed(params.seed, 2 + i as u64)))
                .collect::<Result<_>>()?;
            let eps = params.epsilon.unwrap_or_else(|| {
                let n = refs_occ
                    .iter()
                    .map(|m| m.len())
                    .chain([target_m.len(), base_occ_m.len() / 2])
                    .min()
                    .unwrap_or(1);
                eot::epsilon_schedule(n, 2, 3.0)
            });
            let cfg = AnalysisConfig {
                eot: eot::EotConfig::new(eps),
                qp_tol: params.qp_tol,
            };
            let qp = lbcm::estimate_lambda_with(&base_occ_m, &refs_occ, &target_m, &cfg)?;
            let lambda = SimplexWeights::new(qp.lambda.clone())?;
            let base_m = prepared_measure(base, cap, derive_seed(params.seed, 99))?;
            let refs_full: Vec<DiscreteMeasure> = refs
                .iter()
                .enumerate()
                .map(|(i, r)| prepared_measure(r, cap, derive_seed(params.seed, 100 + i as u64)))
                .collect::<Result<_>>()?;
            let problem = lbcm::fit_problem(&base_m, &refs_full, None, &cfg)?;
            let synth = lbcm::synthesize(&lambda, &problem)?;
            Ok(Reconstruction {
                image: measure_to_image(&synth, &params.raster)?,
                lambda: qp.lambda,
            })
        }
    }
}

/// Reads images from an IDX ubyte container (big-endian magic 0x00000803).
/// Only square images are accepted.
pub fn read_idx_images<P: AsRef<Path>>(path: P) -> Result<Vec<GridImage>> {
    let bytes = std::fs::read(path)?;
    let word = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
            .ok_or_else(|| Error::Format("idx header truncated".into()))
    };
    let magic = word(0)?;
    if magic != 0x0000_0803 {
        return Err(Error::Format(format!(
            "bad idx magic {magic:#010x}, expected 0x00000803"
        )));
    }
    let count = word(4)? as usize;
    let rows = word(8)? as usize;
    let cols = word(12)? as usize;
    if rows != cols {
        return Err(Error::Format(format!(
            "only square images supported, got {rows}x{cols}"
        )));
    }
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "idx payload truncated: {} bytes, need {need}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = 16 + k * rows * cols;
        let data = bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64)
            .collect();
        out.push(GridImage::new(rows, data)?);
    }
    Ok(out)
}

/// Writes an 8-bit binary PGM preview, intensities rescaled so the brightest
/// pixel is 255.
pub fn write_pgm<P: AsRef<Path>>(img: &GridImage, path: P) -> Result<()> {
    let max = img.data().iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut file = std::fs::File::create(path)?;
    write!(file, "P5\n{} {}\n255\n", img.size(), img.size())?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    file.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ot::discrete_w2;
    use crate::sampling::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use rand::RngExt;

    #[test]
    fn image_to_measure_matches_formula() {
        let img = GridImage::new(2, vec![1.0; 4]).unwrap();
        let m = image_to_measure(&img).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.point(0), &[0.5, 0.5]);
        assert_eq!(m.point(1), &[0.5, 1.0]);
        assert_eq!(m.point(2), &[1.0, 0.5]);
        assert_eq!(m.point(3), &[1.0, 1.0]);
        for &w in m.weights() {
            assert_abs_diff_eq!(w, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_pixel_gives_point_mass() {
        let mut img = GridImage::zeros(5).unwrap();
        img.set(2, 3, 4.2);
        let m = image_to_measure(&img).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.point(0), &[3.0 / 5.0, 4.0 / 5.0]);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn scaling_leaves_measure_unchanged() {
        let mut rng = rng_from_seed(2);
        let data: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
        let a = GridImage::new(6, data.clone()).unwrap();
        let b = GridImage::new(6, data.iter().map(|v| 7.0 * v).collect()).unwrap();
        let (ma, mb) = (image_to_measure(&a).unwrap(), image_to_measure(&b).unwrap());
        assert_eq!(ma.support(), mb.support());
        for (x, y) in ma.weights().iter().zip(mb.weights()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = GridImage::zeros(4).unwrap();
        assert!(matches!(image_to_measure(&img), Err(Error::EmptyImage)));
    }

    #[test]
    fn raster_concentrates_at_atom_pixel() {
        let d = 8;
        let m = DiscreteMeasure::new(vec![vec![3.0 / 8.0, 5.0 / 8.0]], vec![1.0]).unwrap();
        let cfg = RasterConfig {
            out_size: d,
            resolution: 1,
            bandwidth: 0.01,
            lower_bound: 0.0,
        };
        let img = measure_to_image(&m, &cfg).unwrap();
        assert_eq!(img.argmax(), (2, 4));
        assert!(img.get(2, 4) >= 0.99, "{}", img.get(2, 4));
        assert_abs_diff_eq!(img.total_mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn raster_is_symmetric_for_symmetric_atoms() {
        let m = DiscreteMeasure::new(
            vec![vec![4.0 / 16.0, 4.0 / 16.0], vec![12.0 / 16.0, 12.0 / 16.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let cfg = RasterConfig {
            out_size: 16,
            resolution: 1,
            bandwidth: 0.03,
            lower_bound: 0.0,
        };
        let img = measure_to_image(&m, &cfg).unwrap();
        let mut lo = 0.0;
        let mut hi = 0.0;
        for row in 0..16 {
            for col in 0..16 {
                if row < 8 {
                    lo += img.get(row, col);
                } else {
                    hi += img.get(row, col);
                }
            }
        }
        assert_abs_diff_eq!(lo, hi, epsilon = 1e-9);
    }

    #[test]
    fn aggressive_lower_bound_errors() {
        let m = DiscreteMeasure::new(vec![vec![0.5, 0.5]], vec![1.0]).unwrap();
        let cfg = RasterConfig {
            out_size: 8,
            resolution: 2,
            bandwidth: 0.05,
            lower_bound: 10.0,
        };
        assert!(matches!(
            measure_to_image(&m, &cfg),
            Err(Error::LowerBoundTooAggressive)
        ));
    }

    #[test]
    fn occlusion_zeroes_exactly_the_block() {
        let img = GridImage::new(28, vec![1.0; 28 * 28]).unwrap();
        let occ = occlude(&img, &OcclusionBlock::central(28, 10)).unwrap();
        let zeroed = occ.data().iter().filter(|v| **v == 0.0).count();
        assert_eq!(zeroed, 100);
        for row in 9..19 {
            for col in 9..19 {
                assert_eq!(occ.get(row, col), 0.0);
            }
        }
        // zero-size block is the identity
        let same = occlude(
            &img,
            &OcclusionBlock {
                row0: 0,
                col0: 0,
                height: 0,
                width: 0,
            },
        )
        .unwrap();
        assert_eq!(same, img);
        // out of bounds
        assert!(matches!(
            occlude(
                &img,
                &OcclusionBlock {
                    row0: 20,
                    col0: 20,
                    height: 10,
                    width: 10
                }
            ),
            Err(Error::BlockOutOfBounds)
        ));
    }

    #[test]
    fn base_images_are_valid_and_distinct() {
        for kind in [
            BaseImageKind::Uniform,
            BaseImageKind::Checkerboard,
            BaseImageKind::Circle,
            BaseImageKind::CornerSquares,
        ] {
            let img = base_image(kind, 28).unwrap();
            assert!(img.total_mass() > 0.0, "{kind:?}");
            assert!(image_to_measure(&img).is_ok());
        }
        let cb = base_image(BaseImageKind::Checkerboard, 4).unwrap();
        assert_eq!(cb.get(0, 0), 0.0);
        assert_eq!(cb.get(0, 1), 1.0);
        assert_eq!(cb.get(1, 0), 1.0);
    }

    fn sparse_image(d: usize, seed: u64) -> GridImage {
        // well-separated lit pixels with distinct intensities
        let mut rng = rng_from_seed(seed);
        let mut img = GridImage::zeros(d).unwrap();
        let mut placed: Vec<(usize, usize)> = Vec::new();
        while placed.len() < 12 {
            let r = rng.random_range(1..d - 1);
            let c = rng.random_range(1..d - 1);
            if placed
                .iter()
                .all(|&(pr, pc)| pr.abs_diff(r) + pc.abs_diff(c) >= 4)
            {
                img.set(r, c, 0.5 + rng.random::<f64>());
                placed.push((r, c));
            }
        }
        img
    }

    #[test]
    fn round_trip_preserves_argmax() {
        for seed in 0..3 {
            let img = sparse_image(28, seed);
            let m = image_to_measure(&img).unwrap();
            let back = measure_to_image(&m, &RasterConfig::default()).unwrap();
            assert_eq!(back.argmax(), img.argmax(), "seed {seed}");
        }
    }

    fn blob_image(d: usize, cr: f64, cc: f64) -> GridImage {
        let mut img = GridImage::zeros(d).unwrap();
        for row in 0..d {
            for col in 0..d {
                let (dr, dc) = (row as f64 - cr, col as f64 - cc);
                let v = (-(dr * dr + dc * dc) / 4.0).exp();
                if v > 1e-3 {
                    img.set(row, col, v);
                }
            }
        }
        img
    }

    #[test]
    fn single_reference_reconstructions_reduce_to_the_reference() {
        let d = 12;
        let target = blob_image(d, 5.0, 5.0);
        let refs = vec![blob_image(d, 5.0, 5.0)];
        let mut params = ReconstructionParams::new(7);
        params.block = OcclusionBlock::central(d, 4);
        params.raster = RasterConfig {
            out_size: d,
            resolution: 2,
            bandwidth: 0.08,
            lower_bound: 1e-9,
        };
        params.barycenter.k = 30;
        let occluded = occlude(&target, &params.block).unwrap();

        let lin = reconstruct(&ReconstructionMethod::Linear, &occluded, &refs, &params).unwrap();
        assert_eq!(lin.lambda, vec![1.0]);
        let expect = normalized_vector(&refs[0]).unwrap();
        for (a, b) in lin.image.data().iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let base = base_image(BaseImageKind::Uniform, d).unwrap();
        let lb = reconstruct(
            &ReconstructionMethod::Lbcm { base },
            &occluded,
            &refs,
            &params,
        )
        .unwrap();
        assert_eq!(lb.lambda, vec![1.0]);
        let wb = reconstruct(&ReconstructionMethod::W2bcm, &occluded, &refs, &params).unwrap();
        assert_eq!(wb.lambda, vec![1.0]);
    }

    #[test]
    fn self_consistency_peaks_on_matching_reference() {
        let d = 12;
        let refs = vec![
            blob_image(d, 3.0, 3.0),
            blob_image(d, 8.0, 8.0),
            blob_image(d, 3.0, 8.0),
        ];
        let mut params = ReconstructionParams::new(5);
        params.block = OcclusionBlock::central(d, 4);
        params.raster = RasterConfig {
            out_size: d,
            resolution: 2,
            bandwidth: 0.08,
            lower_bound: 1e-9,
        };
        params.barycenter.k = 20;
        let occluded = occlude(&refs[1], &params.block).unwrap();
        let base = base_image(BaseImageKind::Uniform, d).unwrap();
        for (name, method) in [
            ("linear", ReconstructionMethod::Linear),
            ("lbcm", ReconstructionMethod::Lbcm { base }),
            ("w2bcm", ReconstructionMethod::W2bcm),
        ] {
            let rec = reconstruct(&method, &occluded, &refs, &params).unwrap();
            assert!(
                rec.lambda[1] >= 0.9,
                "{name}: lambda {:?}",
                rec.lambda
            );
        }
    }

    #[test]
    fn linear_hull_projection_residual_vanishes_inside_hull() {
        let d = 10;
        let refs = [blob_image(d, 3.0, 3.0), blob_image(d, 6.0, 6.0)];
        let params = {
            let mut p = ReconstructionParams::new(1);
            p.block = OcclusionBlock::central(d, 2);
            p
        };
        // target = convex mix of the references, occluded with the same block
        let mix: Vec<f64> = refs[0]
            .data()
            .iter()
            .zip(refs[1].data())
            .map(|(a, b)| {
                0.3 * a / refs[0].total_mass() + 0.7 * b / refs[1].total_mass()
            })
            .collect();
        let target = occlude(&GridImage::new(d, mix).unwrap(), &params.block).unwrap();
        let cols: Vec<Vec<f64>> = refs
            .iter()
            .map(|r| normalized_vector(&occlude(r, &params.block).unwrap()))
            .collect::<Result<_>>()
            .unwrap();
        let b = DMatrix::from_fn(d * d, 2, |i, j| cols[j][i]);
        let qp = project_convex_hull(&b, &normalized_vector(&target).unwrap(), 1e-9).unwrap();
        assert!(qp.objective <= 1e-6, "residual^2 {}", qp.objective);
    }

    #[test]
    fn lbcm_reconstruction_is_equivariant_under_relabeling() {
        let d = 12;
        let refs = vec![blob_image(d, 3.0, 4.0), blob_image(d, 8.0, 7.0)];
        let swapped = vec![refs[1].clone(), refs[0].clone()];
        let mut params = ReconstructionParams::new(3);
        params.block = OcclusionBlock::central(d, 4);
        params.raster.out_size = d;
        let target = occlude(&blob_image(d, 5.0, 5.0), &params.block).unwrap();
        let base = base_image(BaseImageKind::Uniform, d).unwrap();
        let a = reconstruct(
            &ReconstructionMethod::Lbcm { base: base.clone() },
            &target,
            &refs,
            &params,
        )
        .unwrap();
        // per-reference subsampling seeds follow the reference index, so
        // swap the seeds too by permuting back the recovered weights
        let mut params_sw = params.clone();
        params_sw.seed = params.seed;
        let b = reconstruct(
            &ReconstructionMethod::Lbcm { base },
            &target,
            &swapped,
            &params_sw,
        )
        .unwrap();
        assert_abs_diff_eq!(a.lambda[0], b.lambda[1], epsilon = 1e-6);
        assert_abs_diff_eq!(a.lambda[1], b.lambda[0], epsilon = 1e-6);
    }

    #[test]
    fn translated_blobs_favor_transport_over_linear() {
        let d = 14;
        let refs = vec![blob_image(d, 4.0, 4.0), blob_image(d, 9.0, 9.0)];
        let mut params = ReconstructionParams::new(11);
        params.block = OcclusionBlock::central(d, 4);
        params.raster = RasterConfig {
            out_size: d,
            resolution: 2,
            bandwidth: 0.07,
            lower_bound: 1e-9,
        };
        let base = base_image(BaseImageKind::Uniform, d).unwrap();
        let mut lbcm_losses = Vec::new();
        let mut linear_losses = Vec::new();
        for t in 0..3 {
            let shift = 5.0 + t as f64;
            let target_full = blob_image(d, shift, shift);
            let target = occlude(&target_full, &params.block).unwrap();
            let target_m = image_to_measure(&target_full).unwrap();
            let loss = |method: &ReconstructionMethod| -> f64 {
                let rec = reconstruct(method, &target, &refs, &params).unwrap();
                let m = image_to_measure(&rec.image).unwrap();
                discrete_w2(&m, &target_m).unwrap().0.cost()
            };
            lbcm_losses.push(loss(&ReconstructionMethod::Lbcm { base: base.clone() }));
            linear_losses.push(loss(&ReconstructionMethod::Linear));
        }
        lbcm_losses.sort_by(f64::total_cmp);
        linear_losses.sort_by(f64::total_cmp);
        assert!(
            lbcm_losses[1] <= linear_losses[1],
            "lbcm {lbcm_losses:?} vs linear {linear_losses:?}"
        );
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.idx");
        let mut bytes = Vec::new();
        bytes.extend(0x0000_0803u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(3u32.to_be_bytes());
        bytes.extend(3u32.to_be_bytes());
        bytes.extend((0u8..18).map(|b| b * 10));
        std::fs::write(&path, &bytes).unwrap();
        let images = read_idx_images(&path).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].get(0, 0), 0.0);
        assert_eq!(images[0].get(0, 1), 10.0);
        assert_eq!(images[1].get(2, 2), 170.0);

        bytes[3] = 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_idx_images(&path), Err(Error::Format(_))));
        let short = &bytes[..20];
        std::fs::write(&path, short).unwrap();
        assert!(read_idx_images(&path).is_err());
    }

    #[test]
    fn pgm_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let mut img = GridImage::zeros(4).unwrap();
        img.set(1, 2, 2.0);
        img.set(3, 3, 1.0);
        write_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 4\n255\n"));
        let payload = &bytes[b"P5\n4 4\n255\n".len()..];
        assert_eq!(payload.len(), 16);
        assert_eq!(payload[6], 255);
        assert_eq!(payload[15], 128);
    }

    #[test]
    fn image_csv_round_trip() {
        let mut rng = rng_from_seed(8);
        let data: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let img = GridImage::new(5, data).unwrap();
        let back = GridImage::from_csv_str(&img.to_csv_string()).unwrap();
        assert_eq!(img, back);
        assert!(GridImage::from_csv_str("1,2\n3\n").is_err());
        assert!(GridImage::from_csv_str("1,2,3\n4,5,6\n").is_err());
    }
}
