//! Centered-Gaussian machinery on the Bures-Wasserstein geometry: matrix
//! square roots, optimal-transport maps between Gaussians, barycenters,
//! model covariances, coordinate estimators, and the covariance-estimation
//! experiment driver.

use crate::measures::SimplexWeights;
use crate::sampling::{self, derive_seed};
use crate::simplex_opt::{self, QpResult};
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::time::Instant;

/// Relative Frobenius asymmetry accepted by the SPD constructor.
const REL_SYMMETRY_TOL: f64 = 1e-10;
/// Early-stopping threshold (absolute Frobenius change) of the barycenter
/// fixed-point iteration.
const BARYCENTER_FIXED_POINT_TOL: f64 = 1e-10;
/// Step-norm stopping threshold of the MLE projected-gradient loop.
const MLE_STEP_TOL: f64 = 1e-8;

/// A symmetric positive-definite matrix. Construction symmetrizes inputs with
/// relative asymmetry at most `1e-10` and verifies positive definiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if d == 0 {
            return Err(Error::Empty("matrix"));
        }
        if m.ncols() != d {
            return Err(Error::LengthMismatch {
                context: "matrix shape",
                left: d,
                right: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite matrix entry".into()));
        }
        let norm = m.norm();
        let asym = (&m - m.transpose()).norm();
        if asym > REL_SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric);
        }
        let s = sym(&m);
        if s.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { m: s })
    }

    /// Builds from a (near-)symmetric matrix, clamping eigenvalues below
    /// `floor` up to it. Intended for empirical covariances that may be
    /// numerically singular.
    pub fn from_symmetric_clamped(m: &DMatrix<f64>, floor: f64) -> Result<Self> {
        if !floor.is_finite() || floor <= 0.0 {
            return Err(Error::BadConfig(format!(
                "eigenvalue floor must be positive, got {floor}"
            )));
        }
        let s = sym(m);
        let eig = s.symmetric_eigen();
        let d = eig.eigenvalues.len();
        let mut out = DMatrix::zeros(d, d);
        for k in 0..d {
            let v = eig.eigenvalues[k].max(floor);
            let col = eig.eigenvectors.column(k);
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] += v * col[i] * col[j];
                }
            }
        }
        Self::new(sym(&out))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            m: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }
}

/// Backend for the matrix square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtMethod {
    /// Symmetric eigendecomposition (accurate; the default everywhere except
    /// the truncated MLE loss).
    Eig,
    /// Coupled Newton-Schulz iteration with trace rescaling.
    NewtonSchulz { iters: usize },
}

/// Square root and inverse square root via symmetric eigendecomposition.
fn sqrt_eig_pair(s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = s.nrows();
    let eig = s.clone().symmetric_eigen();
    let mut root = DMatrix::zeros(d, d);
    let mut inv_root = DMatrix::zeros(d, d);
    for k in 0..d {
        let v = eig.eigenvalues[k].max(0.0);
        let r = v.sqrt();
        let ir = if r > 0.0 { 1.0 / r } else { 0.0 };
        let col = eig.eigenvectors.column(k);
        for i in 0..d {
            for j in 0..d {
                root[(i, j)] += r * col[i] * col[j];
                inv_root[(i, j)] += ir * col[i] * col[j];
            }
        }
    }
    (sym(&root), sym(&inv_root))
}

/// Coupled Newton-Schulz square-root iteration after rescaling by the trace;
/// returns the square root and inverse square root (un-rescaled).
fn sqrt_newton_schulz_pair(s: &DMatrix<f64>, iters: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = s.nrows();
    let scale = s.trace();
    let a = s / scale;
    let id3 = DMatrix::<f64>::identity(d, d) * 3.0;
    let mut y = a;
    let mut z = DMatrix::<f64>::identity(d, d);
    for _ in 0..iters {
        let t = (&id3 - &z * &y) * 0.5;
        y = &y * &t;
        z = &t * &z;
    }
    let rs = scale.sqrt();
    (sym(&(y * rs)), sym(&(z / rs)))
}

/// Matrix square root of an SPD matrix.
pub fn sqrtm(s: &SpdMatrix, method: SqrtMethod) -> Result<SpdMatrix> {
    let root = match method {
        SqrtMethod::Eig => sqrt_eig_pair(s.as_matrix()).0,
        SqrtMethod::NewtonSchulz { iters } => sqrt_newton_schulz_pair(s.as_matrix(), iters).0,
    };
    SpdMatrix::new(root)
}

/// The linear optimal-transport map from `N(0, sigma0)` to `N(0, sigma1)`:
/// `C = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}`, the unique
/// symmetric PSD matrix with `C S0 C = S1`.
pub fn gaussian_ot_map(sigma0: &SpdMatrix, sigma1: &SpdMatrix) -> Result<SpdMatrix> {
    if sigma0.dim() != sigma1.dim() {
        return Err(Error::LengthMismatch {
            context: "gaussian map dimensions",
            left: sigma0.dim(),
            right: sigma1.dim(),
        });
    }
    let (r, rinv) = sqrt_eig_pair(sigma0.as_matrix());
    let mid = sym(&(&r * sigma1.as_matrix() * &r));
    let (mid_root, _) = sqrt_eig_pair(&mid);
    SpdMatrix::new(sym(&(&rinv * mid_root * &rinv)))
}

fn check_family(sigmas: &[SpdMatrix]) -> Result<usize> {
    if sigmas.is_empty() {
        return Err(Error::Empty("covariance family"));
    }
    let d = sigmas[0].dim();
    for s in sigmas {
        if s.dim() != d {
            return Err(Error::LengthMismatch {
                context: "covariance family dimensions",
                left: d,
                right: s.dim(),
            });
        }
    }
    Ok(d)
}

/// Bures-Wasserstein barycenter of centered Gaussians by the fixed-point
/// iteration `Sigma <- Sigma^{-1/2} (sum_i w_i (Sigma^{1/2} S_i
/// Sigma^{1/2})^{1/2})^2 Sigma^{-1/2}`, started at the Euclidean mean and
/// stopped after `fp_iters` rounds or once the Frobenius change drops to
/// `1e-10`.
pub fn bures_barycenter(
    lambda: &SimplexWeights,
    sigmas: &[SpdMatrix],
    fp_iters: usize,
) -> Result<SpdMatrix> {
    let d = check_family(sigmas)?;
    if lambda.len() != sigmas.len() {
        return Err(Error::LengthMismatch {
            context: "weights vs covariance family",
            left: lambda.len(),
            right: sigmas.len(),
        });
    }
    let w = lambda.as_slice();
    let mut sigma = DMatrix::zeros(d, d);
    for (wi, s) in w.iter().zip(sigmas) {
        sigma += s.as_matrix() * *wi;
    }
    for _ in 0..fp_iters {
        let (r, rinv) = sqrt_eig_pair(&sigma);
        let mut acc = DMatrix::zeros(d, d);
        for (wi, s) in w.iter().zip(sigmas) {
            if *wi == 0.0 {
                continue;
            }
            let mid = sym(&(&r * s.as_matrix() * &r));
            let (mid_root, _) = sqrt_eig_pair(&mid);
            acc += mid_root * *wi;
        }
        let next = sym(&(&rinv * &acc * &acc * &rinv));
        let delta = (&next - &sigma).norm();
        sigma = next;
        if delta <= BARYCENTER_FIXED_POINT_TOL {
            break;
        }
    }
    SpdMatrix::new(sigma)
}

/// Covariance of the linear-barycentric model member with coordinates
/// `lambda`: `(sum_i w_i C_i) Sigma0 (sum_i w_i C_i)` where `C_i` transports
/// `N(0, Sigma0)` to `N(0, S_i)`.
pub fn lbcm_covariance(
    lambda: &SimplexWeights,
    sigma0: &SpdMatrix,
    sigmas: &[SpdMatrix],
) -> Result<SpdMatrix> {
    let d = check_family(sigmas)?;
    if lambda.len() != sigmas.len() {
        return Err(Error::LengthMismatch {
            context: "weights vs covariance family",
            left: lambda.len(),
            right: sigmas.len(),
        });
    }
    if sigma0.dim() != d {
        return Err(Error::LengthMismatch {
            context: "base vs family dimension",
            left: sigma0.dim(),
            right: d,
        });
    }
    let mut m = DMatrix::zeros(d, d);
    for (wi, s) in lambda.as_slice().iter().zip(sigmas) {
        m += gaussian_ot_map(sigma0, s)?.into_matrix() * *wi;
    }
    SpdMatrix::new(sym(&(&m * sigma0.as_matrix() * &m)))
}

/// Frobenius Gram matrix of the matrices `U_i R` for `A_ij = tr(U_i U_j S)`
/// with `R = S^{1/2}`; PSD and symmetric by construction.
fn trace_gram(us: &[DMatrix<f64>], weight: &SpdMatrix) -> DMatrix<f64> {
    let (r, _) = sqrt_eig_pair(weight.as_matrix());
    let ws: Vec<DMatrix<f64>> = us.iter().map(|u| u * &r).collect();
    let m = us.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = ws[i].iter().zip(ws[j].iter()).map(|(x, y)| x * y).sum();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Closed-form coordinate estimate in the barycentric coding model for
/// centered Gaussians: Gram entries `integral <T_i x - x, T_j x - x> dN(0,
/// S_emp)` with `T_i` the map from the (empirical) target covariance to
/// reference `i`, minimized over the simplex.
pub fn estimate_lambda_gaussian_bcm(
    sigma_emp: &SpdMatrix,
    sigmas: &[SpdMatrix],
    qp_tol: f64,
) -> Result<QpResult> {
    let d = check_family(sigmas)?;
    if sigma_emp.dim() != d {
        return Err(Error::LengthMismatch {
            context: "empirical vs family dimension",
            left: sigma_emp.dim(),
            right: d,
        });
    }
    let id = DMatrix::<f64>::identity(d, d);
    let us: Vec<DMatrix<f64>> = sigmas
        .iter()
        .map(|s| Ok(gaussian_ot_map(sigma_emp, s)?.into_matrix() - &id))
        .collect::<Result<_>>()?;
    let a = simplex_opt::symmetrize_and_clip_psd(&trace_gram(&us, sigma_emp));
    simplex_opt::min_quadratic_simplex(&a, qp_tol)
}

/// Closed-form coordinate estimate in the linear barycentric coding model for
/// centered Gaussians with base `N(0, sigma0)`: Gram entries
/// `integral <(C_i - C_eta) x, (C_j - C_eta) x> dN(0, sigma0)` minimized over
/// the simplex, where `C_i` maps the base to reference `i` and `C_eta` maps
/// the base to the (empirical) target covariance.
pub fn estimate_lambda_gaussian_lbcm(
    sigma0: &SpdMatrix,
    sigma_emp: &SpdMatrix,
    sigmas: &[SpdMatrix],
    qp_tol: f64,
) -> Result<QpResult> {
    let d = check_family(sigmas)?;
    if sigma0.dim() != d || sigma_emp.dim() != d {
        return Err(Error::LengthMismatch {
            context: "base/empirical vs family dimension",
            left: sigma0.dim().min(sigma_emp.dim()),
            right: d,
        });
    }
    let c_eta = gaussian_ot_map(sigma0, sigma_emp)?.into_matrix();
    let us: Vec<DMatrix<f64>> = sigmas
        .iter()
        .map(|s| Ok(gaussian_ot_map(sigma0, s)?.into_matrix() - &c_eta))
        .collect::<Result<_>>()?;
    let a = simplex_opt::symmetrize_and_clip_psd(&trace_gram(&us, sigma0));
    simplex_opt::min_quadratic_simplex(&a, qp_tol)
}

/// Parameters of the projected-gradient maximum-likelihood estimator.
#[derive(Debug, Clone)]
pub struct MleConfig {
    /// Gradient step size.
    pub eta: f64,
    /// Cap on projected-gradient iterations.
    pub max_iters: usize,
    /// Barycenter fixed-point rounds inside the truncated loss.
    pub fp_iters: usize,
    /// Newton-Schulz rounds per square root inside the truncated loss.
    pub sq_iters: usize,
    /// Central finite-difference step for the gradient.
    pub fd_step: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            eta: 0.0003,
            max_iters: 500,
            fp_iters: 10,
            sq_iters: 10,
            fd_step: 1e-5,
        }
    }
}

impl MleConfig {
    fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 || !self.fd_step.is_finite() || self.fd_step <= 0.0 {
            return Err(Error::BadConfig(
                "MLE step sizes must be positive".into(),
            ));
        }
        if self.fp_iters == 0 || self.sq_iters == 0 {
            return Err(Error::BadConfig(
                "MLE truncation depths must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of the maximum-likelihood coordinate estimate.
#[derive(Debug, Clone)]
pub struct MleResult {
    pub lambda: Vec<f64>,
    /// Loss after the initial point and after every accepted step;
    /// non-increasing by construction.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    /// True when the loop stopped on the step-norm criterion rather than the
    /// iteration cap or a non-improving step.
    pub converged: bool,
}

/// The truncated Gaussian likelihood loss `tr(BC(lambda)^{-1} S_emp) +
/// logdet BC(lambda)`, where `BC(lambda)` runs `fp_iters` barycenter
/// fixed-point rounds from `S_emp` with Newton-Schulz square roots of depth
/// `sq_iters`. `lambda` need not lie on the simplex (finite-difference
/// probes step off it).
pub fn mle_loss(
    lambda: &[f64],
    sigma_emp: &SpdMatrix,
    sigmas: &[SpdMatrix],
    cfg: &MleConfig,
) -> Result<f64> {
    let d = check_family(sigmas)?;
    if lambda.len() != sigmas.len() {
        return Err(Error::LengthMismatch {
            context: "lambda vs covariance family",
            left: lambda.len(),
            right: sigmas.len(),
        });
    }
    let bad = |lambda: &[f64]| Error::NonFiniteLoss {
        lambda: lambda.to_vec(),
    };
    let mut bc = sigma_emp.as_matrix().clone();
    for _ in 0..cfg.fp_iters {
        let (r, rinv) = sqrt_newton_schulz_pair(&bc, cfg.sq_iters);
        let mut acc = DMatrix::zeros(d, d);
        for (&wi, s) in lambda.iter().zip(sigmas) {
            if wi == 0.0 {
                continue;
            }
            let mid = sym(&(&r * s.as_matrix() * &r));
            let (mid_root, _) = sqrt_newton_schulz_pair(&mid, cfg.sq_iters);
            acc += mid_root * wi;
        }
        bc = sym(&(&rinv * &acc * &acc * &rinv));
        if bc.iter().any(|v| !v.is_finite()) {
            return Err(bad(lambda));
        }
    }
    let chol = bc.clone().cholesky().ok_or_else(|| bad(lambda))?;
    let mut logdet = 0.0;
    for i in 0..d {
        logdet += chol.l()[(i, i)].ln();
    }
    logdet *= 2.0;
    let solved = chol.solve(sigma_emp.as_matrix());
    let loss = solved.trace() + logdet;
    if !loss.is_finite() {
        return Err(bad(lambda));
    }
    Ok(loss)
}

/// Maximum-likelihood coordinates by projected gradient descent on
/// [`mle_loss`] with central finite differences. Stops at the iteration cap,
/// when the projected step norm drops to `1e-8`, or at the first
/// non-improving step (keeping the accepted-loss trace monotone).
pub fn mle_lambda(
    sigma_emp: &SpdMatrix,
    sigmas: &[SpdMatrix],
    cfg: &MleConfig,
) -> Result<MleResult> {
    cfg.validate()?;
    let m = sigmas.len();
    check_family(sigmas)?;
    let mut lambda = vec![1.0 / m as f64; m];
    let mut loss_cur = mle_loss(&lambda, sigma_emp, sigmas, cfg)?;
    let mut trace = vec![loss_cur];
    let mut converged = false;
    let mut iterations = 0;
    let h = cfg.fd_step;
    for _ in 0..cfg.max_iters {
        let mut grad = vec![0.0; m];
        for i in 0..m {
            let mut lp = lambda.clone();
            lp[i] += h;
            let mut lm = lambda.clone();
            lm[i] -= h;
            let fp = mle_loss(&lp, sigma_emp, sigmas, cfg)?;
            let fm = mle_loss(&lm, sigma_emp, sigmas, cfg)?;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        let moved: Vec<f64> = lambda
            .iter()
            .zip(&grad)
            .map(|(l, g)| l - cfg.eta * g)
            .collect();
        let cand = simplex_opt::project_simplex(&moved);
        let step: f64 = lambda
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if step <= MLE_STEP_TOL {
            converged = true;
            break;
        }
        let loss_cand = mle_loss(&cand, sigma_emp, sigmas, cfg)?;
        if loss_cand > loss_cur + 1e-12 * (1.0 + loss_cur.abs()) {
            break;
        }
        lambda = cand;
        loss_cur = loss_cand;
        trace.push(loss_cur);
        iterations += 1;
    }
    Ok(MleResult {
        lambda,
        loss_trace: trace,
        iterations,
        converged,
    })
}

/// Estimators compared by the covariance experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMethod {
    Empirical,
    Bcm,
    Lbcm,
    Mle,
}

impl CovMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CovMethod::Empirical => "empirical",
            CovMethod::Bcm => "bcm",
            CovMethod::Lbcm => "lbcm",
            CovMethod::Mle => "mle",
        }
    }
}

/// Configuration of the covariance-estimation experiment.
#[derive(Debug, Clone)]
pub struct CovExperimentConfig {
    /// Number of reference covariances.
    pub m: usize,
    /// Ambient dimension.
    pub d: usize,
    /// Sample sizes, evaluated in the given order.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<CovMethod>,
    pub mle: MleConfig,
    /// Fixed-point rounds for ground-truth and estimator barycenters.
    pub barycenter_fp_iters: usize,
    pub qp_tol: f64,
}

impl Default for CovExperimentConfig {
    fn default() -> Self {
        Self {
            m: 10,
            d: 10,
            n_grid: vec![100, 1000, 10000],
            trials: 10,
            seed: 0,
            methods: vec![
                CovMethod::Empirical,
                CovMethod::Bcm,
                CovMethod::Lbcm,
                CovMethod::Mle,
            ],
            mle: MleConfig::default(),
            barycenter_fp_iters: 100,
            qp_tol: 1e-9,
        }
    }
}

/// One experiment measurement.
#[derive(Debug, Clone)]
pub struct CovExperimentRow {
    pub method: CovMethod,
    pub trial: usize,
    pub n: usize,
    pub cov_error_fro: f64,
    /// Not defined for the raw empirical covariance.
    pub lambda_error_l2: Option<f64>,
    pub wall_time_ms: f64,
}

fn empirical_second_moment(points: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d, d);
    for p in points {
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] += p[i] * p[j];
            }
        }
    }
    s / points.len() as f64
}

/// Runs the synthetic covariance-estimation experiment: per trial, draws a
/// commuting SPD family and a uniform simplex coordinate, forms the
/// ground-truth barycenter, then for every sample size draws centered
/// Gaussian data and scores the configured estimators against the truth.
pub fn run_covariance_experiment(cfg: &CovExperimentConfig) -> Result<Vec<CovExperimentRow>> {
    if cfg.trials == 0 || cfg.n_grid.is_empty() || cfg.methods.is_empty() {
        return Err(Error::BadConfig(
            "experiment needs at least one trial, sample size, and method".into(),
        ));
    }
    let mut rows = Vec::new();
    for trial in 0..cfg.trials {
        let trial_seed = cfg.seed.wrapping_add(trial as u64);
        let family = sampling::random_covariances(cfg.m, cfg.d, derive_seed(trial_seed, 1))?;
        let lambda_star = sampling::sample_simplex_uniform(cfg.m, derive_seed(trial_seed, 2))?;
        let sigma_star = bures_barycenter(&lambda_star, &family, cfg.barycenter_fp_iters)?;
        let zero_mean = vec![0.0; cfg.d];
        for (n_idx, &n) in cfg.n_grid.iter().enumerate() {
            let sample = sampling::sample_gaussian(
                &zero_mean,
                sigma_star.as_matrix(),
                n,
                derive_seed(trial_seed, 3 + n_idx as u64),
            )?;
            let start_emp = Instant::now();
            let emp_raw = empirical_second_moment(sample.support(), cfg.d);
            let emp_ms = start_emp.elapsed().as_secs_f64() * 1e3;
            let sigma_emp = SpdMatrix::from_symmetric_clamped(&emp_raw, 1e-10)?;
            for &method in &cfg.methods {
                let start = Instant::now();
                let (estimate, lambda_hat): (DMatrix<f64>, Option<Vec<f64>>) = match method {
                    CovMethod::Empirical => (emp_raw.clone(), None),
                    CovMethod::Bcm => {
                        let qp = estimate_lambda_gaussian_bcm(&sigma_emp, &family, cfg.qp_tol)?;
                        let lam = SimplexWeights::new(qp.lambda.clone())?;
                        let est = bures_barycenter(&lam, &family, cfg.barycenter_fp_iters)?;
                        (est.into_matrix(), Some(qp.lambda))
                    }
                    CovMethod::Lbcm => {
                        let base = SpdMatrix::identity(cfg.d);
                        let qp = estimate_lambda_gaussian_lbcm(
                            &base, &sigma_emp, &family, cfg.qp_tol,
                        )?;
                        let lam = SimplexWeights::new(qp.lambda.clone())?;
                        let est = lbcm_covariance(&lam, &base, &family)?;
                        (est.into_matrix(), Some(qp.lambda))
                    }
                    CovMethod::Mle => {
                        let mle = mle_lambda(&sigma_emp, &family, &cfg.mle)?;
                        let lam = SimplexWeights::new(mle.lambda.clone())?;
                        let est = bures_barycenter(&lam, &family, cfg.barycenter_fp_iters)?;
                        (est.into_matrix(), Some(mle.lambda))
                    }
                };
                let mut wall = start.elapsed().as_secs_f64() * 1e3;
                if method == CovMethod::Empirical {
                    wall = emp_ms;
                }
                let cov_error = (&estimate - sigma_star.as_matrix()).norm();
                let lambda_error = lambda_hat.map(|lh| {
                    lh.iter()
                        .zip(lambda_star.as_slice())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                });
                rows.push(CovExperimentRow {
                    method,
                    trial,
                    n,
                    cov_error_fro: cov_error,
                    lambda_error_l2: lambda_error,
                    wall_time_ms: wall,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV rendering of experiment rows (`method,trial,n,cov_error_fro,
/// lambda_error_l2,wall_time_ms`). With `include_timing` false the timing
/// field is left empty so outputs are byte-deterministic.
pub fn experiment_rows_to_csv(rows: &[CovExperimentRow], include_timing: bool) -> String {
    let mut out = String::from(if include_timing {
        "method,trial,n,cov_error_fro,lambda_error_l2,wall_time_ms\n"
    } else {
        "method,trial,n,cov_error_fro,lambda_error_l2\n"
    });
    for r in rows {
        let lam = r
            .lambda_error_l2
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.method.as_str(),
            r.trial,
            r.n,
            r.cov_error_fro,
            lam
        ));
        if include_timing {
            out.push_str(&format!(",{}", r.wall_time_ms));
        }
        out.push('\n');
    }
    out
}
