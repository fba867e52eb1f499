//! Entropic optimal transport with quadratic cost `c(x, y) = |x - y|^2 / 2`,
//! solved entirely in the log domain.
//!
//! The dual solver alternates softmin updates of the two potentials. Two
//! exact, contract-preserving accelerations are applied internally: both
//! point clouds are recentered by their means (for quadratic cost the
//! optimal potentials transform affinely, and the returned potentials are
//! mapped back to the original coordinates), and when the requested epsilon
//! is far below the cost scale the solver warms up along a decreasing
//! epsilon ladder before iterating at the target value.

use crate::exact_ot::TransportPlan;
use crate::measures::DiscreteMeasure;
use crate::numeric::sq_dist;
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Configuration of the dual solver.
#[derive(Debug, Clone)]
pub struct EotConfig {
    /// Entropic regularization strength.
    pub epsilon: f64,
    /// Cap on softmin iterations at the target epsilon.
    pub max_iter: usize,
    /// Stopping threshold on the L1 marginal violation of the implied plan.
    pub tol: f64,
}

impl EotConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::BadEpsilon(self.epsilon));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::BadConfig(format!(
                "marginal tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::BadConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optimal dual potentials of an entropic transport problem, normalized so
/// the mass-weighted mean of `f` over the source vanishes.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    f: Vec<f64>,
    g: Vec<f64>,
    epsilon: f64,
}

impl DualPotentials {
    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Sample-size schedule for the regularization strength:
/// `epsilon = c * n^(-1 / (d + alpha_bar + 1))`.
pub fn epsilon_schedule_scaled(c: f64, n: usize, d: usize, alpha_bar: f64) -> f64 {
    debug_assert!(n >= 1 && d >= 1);
    debug_assert!((1.0..=3.0).contains(&alpha_bar));
    c * (n as f64).powf(-1.0 / (d as f64 + alpha_bar + 1.0))
}

/// [`epsilon_schedule_scaled`] with unit constant.
pub fn epsilon_schedule(n: usize, d: usize, alpha_bar: f64) -> f64 {
    epsilon_schedule_scaled(1.0, n, d, alpha_bar)
}

/// One softmin pass: `out[j] = -eps * log sum_k exp(scaled[k] - |a_j -
/// b_k|^2 / (2 eps))` where `scaled[k] = log w_k + pot_k / eps`.
fn softmin_pass(
    eps: f64,
    points_a: &[Vec<f64>],
    points_b: &[Vec<f64>],
    scaled_b: &[f64],
    out: &mut [f64],
) {
    let inv2eps = 1.0 / (2.0 * eps);
    for (j, a) in points_a.iter().enumerate() {
        let mut m = f64::NEG_INFINITY;
        for (b, s) in points_b.iter().zip(scaled_b) {
            let v = s - sq_dist(a, b) * inv2eps;
            if v > m {
                m = v;
            }
        }
        let mut acc = 0.0;
        for (b, s) in points_b.iter().zip(scaled_b) {
            acc += (s - sq_dist(a, b) * inv2eps - m).exp();
        }
        out[j] = -eps * (m + acc.ln());
    }
}

struct Recentered {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    /// mean(source) - mean(target)
    delta: Vec<f64>,
}

fn recenter(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Recentered {
    let ms = source.mean();
    let mt = target.mean();
    let xs = source
        .support()
        .iter()
        .map(|p| p.iter().zip(&ms).map(|(c, m)| c - m).collect())
        .collect();
    let ys = target
        .support()
        .iter()
        .map(|p| p.iter().zip(&mt).map(|(c, m)| c - m).collect())
        .collect();
    let delta = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
    Recentered { xs, ys, delta }
}

fn solve_dual_inner(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &EotConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<DualPotentials> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::MixedDimension(source.dim(), target.dim()));
    }
    let eps = cfg.epsilon;
    let mu = source.weights();
    let nu = target.weights();
    let rc = recenter(source, target);
    let (xs, ys) = (&rc.xs, &rc.ys);
    let n = xs.len();
    let k = ys.len();

    let log_mu: Vec<f64> = mu.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let log_nu: Vec<f64> = nu.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; k];
    let mut f_new = vec![0.0; n];
    let mut scaled = vec![0.0; k.max(n)];

    // cost scale for the warm-start ladder
    let mut max_c: f64 = 0.0;
    for a in xs {
        for b in ys {
            let c = sq_dist(a, b) * 0.5;
            if c > max_c {
                max_c = c;
            }
        }
    }
    let mut ladder = Vec::new();
    let mut e = max_c;
    while e > 4.0 * eps {
        ladder.push(e);
        e /= 4.0;
    }
    for &stage_eps in &ladder {
        for _ in 0..8 {
            for (s, (lw, gv)) in scaled[..k].iter_mut().zip(log_nu.iter().zip(&g)) {
                *s = lw + gv / stage_eps;
            }
            softmin_pass(stage_eps, xs, ys, &scaled[..k], &mut f);
            for (s, (lw, fv)) in scaled[..n].iter_mut().zip(log_mu.iter().zip(&f)) {
                *s = lw + fv / stage_eps;
            }
            softmin_pass(stage_eps, ys, xs, &scaled[..n], &mut g);
        }
    }

    let mut converged = false;
    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    for iter in 0..=cfg.max_iter {
        for (s, (lw, gv)) in scaled[..k].iter_mut().zip(log_nu.iter().zip(&g)) {
            *s = lw + gv / eps;
        }
        softmin_pass(eps, xs, ys, &scaled[..k], &mut f_new);
        // After a g-update the column marginals are exact, and the row
        // marginal of the (f, g) plan is mu_j * exp((f_j - f_new_j)/eps).
        if iter >= 1 {
            violation = mu
                .iter()
                .zip(f.iter().zip(&f_new))
                .map(|(w, (fo, fn_))| w * (((fo - fn_) / eps).exp() - 1.0).abs())
                .sum();
            if violation <= cfg.tol {
                converged = true;
                break;
            }
        }
        if iter == cfg.max_iter {
            break;
        }
        std::mem::swap(&mut f, &mut f_new);
        for (s, (lw, fv)) in scaled[..n].iter_mut().zip(log_mu.iter().zip(&f)) {
            *s = lw + fv / eps;
        }
        softmin_pass(eps, ys, xs, &scaled[..n], &mut g);
        iterations = iter + 1;
        if let Some(tr) = trace.as_deref_mut() {
            // Block-ascent value of the dual objective; the exponential term
            // equals one exactly after a g-update.
            let obj: f64 = mu.iter().zip(&f).map(|(w, v)| w * v).sum::<f64>()
                + nu.iter().zip(&g).map(|(w, v)| w * v).sum::<f64>();
            tr.push(obj);
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            violation,
            iterations,
            tol: cfg.tol,
        });
    }

    // Map the potentials back to the original coordinates:
    // f(x) = f'(x - ms) + <x - ms, delta> + |delta|^2 / 2,
    // g(y) = g'(y - mt) - <y - mt, delta>.
    let half_d2: f64 = rc.delta.iter().map(|v| v * v).sum::<f64>() * 0.5;
    for (fj, x) in f.iter_mut().zip(xs) {
        *fj += crate::numeric::dot(x, &rc.delta) + half_d2;
    }
    for (gk, y) in g.iter_mut().zip(ys) {
        *gk -= crate::numeric::dot(y, &rc.delta);
    }
    // gauge: mass-weighted mean of f vanishes
    let shift: f64 = mu.iter().zip(&f).map(|(w, v)| w * v).sum();
    for v in &mut f {
        *v -= shift;
    }
    for v in &mut g {
        *v += shift;
    }
    Ok(DualPotentials { f, g, epsilon: eps })
}

/// Solves the entropic dual by alternating log-domain softmin updates until
/// the L1 marginal violation of the implied plan drops to `cfg.tol`.
pub fn solve_dual(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &EotConfig,
) -> Result<DualPotentials> {
    solve_dual_inner(source, target, cfg, None)
}

/// As [`solve_dual`], also returning the dual objective after each completed
/// iteration at the target epsilon (non-decreasing up to rounding).
pub fn solve_dual_with_trace(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &EotConfig,
) -> Result<(DualPotentials, Vec<f64>)> {
    let mut trace = Vec::new();
    let pot = solve_dual_inner(source, target, cfg, Some(&mut trace))?;
    Ok((pot, trace))
}

/// Entropic dual objective
/// `<mu, f> + <nu, g> - eps * sum_jk mu_j nu_k exp((f_j + g_k - c_jk)/eps) + eps`.
pub fn dual_objective(
    pot: &DualPotentials,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> f64 {
    let eps = pot.epsilon;
    let mut lin = 0.0;
    for (w, v) in source.weights().iter().zip(&pot.f) {
        lin += w * v;
    }
    for (w, v) in target.weights().iter().zip(&pot.g) {
        lin += w * v;
    }
    let mut mass = 0.0;
    for (x, (wj, fj)) in source
        .support()
        .iter()
        .zip(source.weights().iter().zip(&pot.f))
    {
        for (y, (wk, gk)) in target
            .support()
            .iter()
            .zip(target.weights().iter().zip(&pot.g))
        {
            mass += wj * wk * ((fj + gk - 0.5 * sq_dist(x, y)) / eps).exp();
        }
    }
    lin - eps * mass + eps
}

/// The entropic (barycentric-projection) map at an arbitrary point: a
/// softmax-weighted average of the target support with log-weights
/// `log nu_k + (g_k - |x - y_k|^2 / 2) / eps`. The source potential only
/// shifts all log-weights equally, so it cancels in the normalization.
pub fn entropic_map(
    pot: &DualPotentials,
    target: &DiscreteMeasure,
    x: &[f64],
) -> Result<Vec<f64>> {
    if target.len() != pot.g.len() {
        return Err(Error::LengthMismatch {
            context: "potentials vs target support",
            left: pot.g.len(),
            right: target.len(),
        });
    }
    if x.len() != target.dim() {
        return Err(Error::MixedDimension(x.len(), target.dim()));
    }
    let eps = pot.epsilon;
    let inv_eps = 1.0 / eps;
    let mut m = f64::NEG_INFINITY;
    let nu = target.weights();
    let mut logits = Vec::with_capacity(target.len());
    for ((y, &w), g) in target.support().iter().zip(nu).zip(&pot.g) {
        let lw = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
        let v = lw + (g - 0.5 * sq_dist(x, y)) * inv_eps;
        if v > m {
            m = v;
        }
        logits.push(v);
    }
    if !m.is_finite() {
        return Err(Error::DegenerateMap);
    }
    let d = target.dim();
    let mut out = vec![0.0; d];
    let mut total = 0.0;
    for (y, v) in target.support().iter().zip(&logits) {
        let w = (v - m).exp();
        total += w;
        for (o, c) in out.iter_mut().zip(y) {
            *o += w * c;
        }
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateMap);
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// [`entropic_map`] over a batch of query points.
pub fn entropic_map_batch(
    pot: &DualPotentials,
    target: &DiscreteMeasure,
    xs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    xs.iter().map(|x| entropic_map(pot, target, x)).collect()
}

/// Dense plan implied by dual potentials:
/// `pi_jk = mu_j nu_k exp((f_j + g_k - c_jk)/eps)`, with the reported cost in
/// full squared-distance units to match the exact solver.
pub fn plan_from_potentials(
    pot: &DualPotentials,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<TransportPlan> {
    if source.len() != pot.f.len() || target.len() != pot.g.len() {
        return Err(Error::LengthMismatch {
            context: "potentials vs measures",
            left: pot.f.len(),
            right: source.len(),
        });
    }
    let eps = pot.epsilon;
    let n = source.len();
    let k = target.len();
    let mut plan = DMatrix::zeros(n, k);
    let mut cost = 0.0;
    for (j, (x, (wj, fj))) in source
        .support()
        .iter()
        .zip(source.weights().iter().zip(&pot.f))
        .enumerate()
    {
        for (kk, (y, (wk, gk))) in target
            .support()
            .iter()
            .zip(target.weights().iter().zip(&pot.g))
            .enumerate()
        {
            let d2 = sq_dist(x, y);
            let p = wj * wk * ((fj + gk - 0.5 * d2) / eps).exp();
            plan[(j, kk)] = p;
            cost += p * d2;
        }
    }
    TransportPlan::from_parts(plan, cost)
}
