//! Exact optimal transport at desk scale: monotone quantile maps in one
//! dimension and a dense network-simplex solver for the exact discrete
//! quadratic-cost problem.
//!
//! Costs are reported in full squared-distance units, so the 2-Wasserstein
//! distance is the square root of a plan's cost.

use crate::measures::{DiscreteMeasure, MapOnSample};
use crate::numeric::sq_dist;
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Largest `n * k` the dense exact solver accepts.
pub const PLAN_BUDGET: usize = 4_000_000;

/// Slack used when comparing cumulative masses, so that exact quantile ties
/// resolve to the earlier atom instead of drifting on the last float bit.
const TIE_SLACK: f64 = 1e-12;

const PIVOT_REL_TOL: f64 = 1e-12;

/// A dense coupling between two discrete measures together with its
/// transport cost in squared-distance units.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    plan: DMatrix<f64>,
    cost: f64,
}

impl TransportPlan {
    pub(crate) fn from_parts(plan: DMatrix<f64>, cost: f64) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::Empty("transport plan"));
        }
        if plan.iter().any(|v| !v.is_finite() || *v < -1e-9) || !cost.is_finite() {
            return Err(Error::OutOfRange(
                "transport plan entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { plan, cost })
    }

    /// `n x k` coupling matrix; rows follow the source, columns the target.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.plan
    }

    /// Total transport cost `sum_jk plan_jk |x_j - y_k|^2`.
    pub fn cost(&self) -> f64 {
        self.cost
    }
}

/// Sorted view of a 1D measure: sorted coordinates, cumulative masses, and
/// the sorted-to-original index permutation.
struct SortedCdf {
    coords: Vec<f64>,
    cums: Vec<f64>,
    order: Vec<usize>,
}

impl SortedCdf {
    fn build(m: &DiscreteMeasure) -> Result<Self> {
        if m.dim() != 1 {
            return Err(Error::MixedDimension(m.dim(), 1));
        }
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]));
        let coords: Vec<f64> = idx.iter().map(|&i| m.point(i)[0]).collect();
        let mut cums = Vec::with_capacity(idx.len());
        let mut acc = 0.0;
        for &i in &idx {
            acc += m.weights()[i];
            cums.push(acc);
        }
        Ok(Self {
            coords,
            cums,
            order: idx,
        })
    }

    /// Right-continuous CDF at `x`.
    fn cdf(&self, x: f64) -> f64 {
        // number of atoms with coordinate <= x
        let n_le = self.coords.partition_point(|&c| c <= x);
        if n_le == 0 {
            0.0
        } else {
            self.cums[n_le - 1]
        }
    }

    /// Left-continuous generalized inverse: the first atom whose cumulative
    /// mass reaches `q` (up to [`TIE_SLACK`]).
    fn quantile(&self, q: f64) -> f64 {
        let pos = self.cums.partition_point(|&c| c < q - TIE_SLACK);
        self.coords[pos.min(self.coords.len() - 1)]
    }
}

/// Monotone rearrangement between two 1D measures, precomputed for repeated
/// evaluation.
pub struct QuantileMap1D {
    source: SortedCdf,
    target: SortedCdf,
}

impl QuantileMap1D {
    pub fn new(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<Self> {
        Ok(Self {
            source: SortedCdf::build(source)?,
            target: SortedCdf::build(target)?,
        })
    }

    /// Evaluates the composition of the target's generalized inverse CDF with
    /// the source's right-continuous CDF at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.target.quantile(self.source.cdf(x))
    }

    /// The map restricted to a base sample, one image per base point.
    pub fn on_sample(&self, base_points: &[Vec<f64>]) -> Result<MapOnSample> {
        let images = base_points
            .iter()
            .map(|p| vec![self.eval(p[0])])
            .collect();
        MapOnSample::new(base_points.to_vec(), images)
    }
}

/// Quantile (left-continuous generalized inverse CDF) of a 1D measure,
/// precomputed for repeated evaluation.
pub struct Quantile1D {
    cdf: SortedCdf,
}

impl Quantile1D {
    pub fn new(measure: &DiscreteMeasure) -> Result<Self> {
        Ok(Self {
            cdf: SortedCdf::build(measure)?,
        })
    }

    /// Coordinate of the first atom whose cumulative mass reaches `q`.
    pub fn eval(&self, q: f64) -> f64 {
        self.cdf.quantile(q)
    }
}

/// One-off evaluation of the monotone rearrangement from `source` to
/// `target` at the point `x`. Build a [`QuantileMap1D`] instead when
/// evaluating at many points.
pub fn quantile_map_1d(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    x: f64,
) -> Result<f64> {
    Ok(QuantileMap1D::new(source, target)?.eval(x))
}

/// Exact 2-Wasserstein distance between 1D measures via the quantile
/// coupling: both cumulative partitions are merged and each mass sliver is
/// matched between its source and target atoms.
pub fn w2_1d(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<f64> {
    let s = SortedCdf::build(source)?;
    let t = SortedCdf::build(target)?;
    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev_q = 0.0;
    while i < s.cums.len() && j < t.cums.len() {
        let q = s.cums[i].min(t.cums[j]);
        let mass = (q - prev_q).max(0.0);
        let d = s.coords[i] - t.coords[j];
        cost += mass * d * d;
        if s.cums[i] <= q + TIE_SLACK {
            i += 1;
        }
        if t.cums[j] <= q + TIE_SLACK {
            j += 1;
        }
        prev_q = q;
    }
    Ok(cost.max(0.0).sqrt())
}

/// Barycentric projection of the exact 1D quantile coupling, computed in
/// `O((n + k) log)` without materializing the plan: each source atom is sent
/// to the mass-weighted average of the target atoms matched to its
/// cumulative-mass interval.
pub fn quantile_projection_1d(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<MapOnSample> {
    let s = SortedCdf::build(source)?;
    let t = SortedCdf::build(target)?;
    let n = s.coords.len();
    let mut acc = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev_q = 0.0;
    while i < n && j < t.coords.len() {
        let q = s.cums[i].min(t.cums[j]);
        let sliver = (q - prev_q).max(0.0);
        acc[i] += sliver * t.coords[j];
        mass[i] += sliver;
        if s.cums[i] <= q + TIE_SLACK {
            i += 1;
        }
        if t.cums[j] <= q + TIE_SLACK {
            j += 1;
        }
        prev_q = q;
    }
    let mut images = vec![Vec::new(); n];
    for (sorted_i, &orig) in s.order.iter().enumerate() {
        if mass[sorted_i] <= 0.0 {
            return Err(Error::UnmatchedSourceAtom(orig));
        }
        images[orig] = vec![acc[sorted_i] / mass[sorted_i]];
    }
    MapOnSample::new(source.support().to_vec(), images)
}

const NONE: usize = usize::MAX;

/// Basic arc of the transportation network between source row `r` and
/// target column `c`.
#[derive(Clone, Copy)]
struct BasisArc {
    r: usize,
    c: usize,
    flow: f64,
}

/// Primal network simplex on the dense bipartite transportation graph. The
/// spanning-tree basis starts from the northwest-corner rule; entering arcs
/// are chosen by block pricing, and tree structure plus node potentials are
/// recomputed from the root after each pivot.
struct NetworkSimplex<'a> {
    n: usize,
    k: usize,
    cost: Vec<f64>,
    mu: &'a [f64],
    nu: &'a [f64],
    arcs: Vec<BasisArc>,
    adj: Vec<Vec<(usize, usize)>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    cursor: usize,
}

impl<'a> NetworkSimplex<'a> {
    fn new(cost: Vec<f64>, mu: &'a [f64], nu: &'a [f64]) -> Self {
        let (n, k) = (mu.len(), nu.len());
        let nodes = n + k;
        let mut ns = Self {
            n,
            k,
            cost,
            mu,
            nu,
            arcs: Vec::with_capacity(nodes - 1),
            adj: vec![Vec::new(); nodes],
            parent: vec![NONE; nodes],
            parent_arc: vec![NONE; nodes],
            depth: vec![0; nodes],
            pot: vec![0.0; nodes],
            cursor: 0,
        };
        ns.northwest_corner();
        ns
    }

    fn northwest_corner(&mut self) {
        let mut rs = self.mu.to_vec();
        let mut rd = self.nu.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let t = rs[i].min(rd[j]).max(0.0);
            self.arcs.push(BasisArc { r: i, c: j, flow: t });
            rs[i] -= t;
            rd[j] -= t;
            if i == self.n - 1 && j == self.k - 1 {
                break;
            }
            if j == self.k - 1 {
                i += 1;
            } else if i == self.n - 1 {
                j += 1;
            } else if rs[i] <= rd[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(self.arcs.len(), self.n + self.k - 1);
    }

    /// Rebuilds adjacency, parent pointers, depths and potentials by a
    /// traversal from row node 0. For every basic arc `(r, c)` the
    /// potentials satisfy `pot[r] + pot[n + c] = cost[r][c]`.
    fn rebuild_tree(&mut self) {
        for l in &mut self.adj {
            l.clear();
        }
        for (idx, a) in self.arcs.iter().enumerate() {
            let (u, v) = (a.r, self.n + a.c);
            self.adj[u].push((v, idx));
            self.adj[v].push((u, idx));
        }
        let mut stack = vec![0usize];
        self.parent[0] = 0;
        self.parent_arc[0] = NONE;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        let mut seen = vec![false; self.adj.len()];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(w, idx) in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    self.parent[w] = u;
                    self.parent_arc[w] = idx;
                    self.depth[w] = self.depth[u] + 1;
                    let a = self.arcs[idx];
                    self.pot[w] = self.cost[a.r * self.k + a.c] - self.pot[u];
                    stack.push(w);
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s));
    }

    /// Block pricing: scans the flattened cost array in blocks from a rolling
    /// cursor; returns the most negative reduced-cost arc of the first block
    /// containing one.
    fn find_entering(&mut self, tol: f64) -> Option<(usize, usize)> {
        let total = self.n * self.k;
        let block = 8192.min(total);
        let mut scanned = 0;
        while scanned < total {
            let mut best = -tol;
            let mut best_pos = NONE;
            for off in 0..block.min(total - scanned) {
                let pos = (self.cursor + off) % total;
                let (r, c) = (pos / self.k, pos % self.k);
                let red = self.cost[pos] - self.pot[r] - self.pot[self.n + c];
                if red < best {
                    best = red;
                    best_pos = pos;
                }
            }
            self.cursor = (self.cursor + block.min(total - scanned)) % total;
            scanned += block;
            if best_pos != NONE {
                return Some((best_pos / self.k, best_pos % self.k));
            }
        }
        None
    }

    /// Pushes flow around the unique tree cycle closed by the entering arc
    /// `(er, ec)` and swaps the blocking arc out of the basis.
    fn pivot(&mut self, er: usize, ec: usize) {
        let (a, b) = (er, self.n + ec);
        // node paths to the lowest common ancestor
        let (mut x, mut y) = (a, b);
        let mut path_a = Vec::new();
        let mut path_b = Vec::new();
        while self.depth[x] > self.depth[y] {
            path_a.push(x);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            path_b.push(y);
            y = self.parent[y];
        }
        while x != y {
            path_a.push(x);
            path_b.push(y);
            x = self.parent[x];
            y = self.parent[y];
        }
        // Traverse the cycle in flow direction: entering arc a -> b, then b
        // up to the meet point, then down to a. A tree arc traversed from
        // its column side to its row side carries decreasing flow.
        let mut cycle: Vec<(usize, f64)> = Vec::with_capacity(path_a.len() + path_b.len());
        for &u in &path_b {
            let sign = if u >= self.n { -1.0 } else { 1.0 };
            cycle.push((self.parent_arc[u], sign));
        }
        for &u in path_a.iter().rev() {
            let sign = if u >= self.n { 1.0 } else { -1.0 };
            cycle.push((self.parent_arc[u], sign));
        }
        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for &(idx, sign) in &cycle {
            if sign < 0.0 && self.arcs[idx].flow < theta {
                theta = self.arcs[idx].flow;
                leaving = idx;
            }
        }
        debug_assert!(leaving != NONE);
        for &(idx, sign) in &cycle {
            let f = &mut self.arcs[idx].flow;
            *f = (*f + sign * theta).max(0.0);
        }
        self.arcs[leaving] = BasisArc {
            r: er,
            c: ec,
            flow: theta,
        };
    }

    fn solve(&mut self) -> Result<()> {
        let max_c = self.cost.iter().cloned().fold(0.0f64, f64::max);
        let tol = PIVOT_REL_TOL * max_c;
        let max_pivots = 50 * (self.n + self.k) + 1000;
        for _ in 0..max_pivots {
            self.rebuild_tree();
            match self.find_entering(tol) {
                None => return Ok(()),
                Some((r, c)) => self.pivot(r, c),
            }
        }
        // report the strongest remaining violation
        self.rebuild_tree();
        let mut worst = 0.0f64;
        for pos in 0..self.n * self.k {
            let (r, c) = (pos / self.k, pos % self.k);
            let red = self.cost[pos] - self.pot[r] - self.pot[self.n + c];
            worst = worst.max(-red);
        }
        Err(Error::NotConverged {
            violation: worst,
            iterations: max_pivots,
            tol,
        })
    }
}

/// Exact quadratic-cost optimal transport between discrete measures via the
/// network simplex. Returns the optimal plan and the 2-Wasserstein distance
/// (square root of the plan cost).
pub fn discrete_w2(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<(TransportPlan, f64)> {
    if source.dim() != target.dim() {
        return Err(Error::MixedDimension(source.dim(), target.dim()));
    }
    let (n, k) = (source.len(), target.len());
    let product = n.saturating_mul(k);
    if product > PLAN_BUDGET {
        return Err(Error::BudgetExceeded {
            product,
            budget: PLAN_BUDGET,
        });
    }
    let mut cost = vec![0.0; n * k];
    for (j, x) in source.support().iter().enumerate() {
        for (l, y) in target.support().iter().enumerate() {
            cost[j * k + l] = sq_dist(x, y);
        }
    }
    let mut ns = NetworkSimplex::new(cost, source.weights(), target.weights());
    ns.solve()?;
    let mut plan = DMatrix::zeros(n, k);
    let mut total = 0.0;
    for a in &ns.arcs {
        if a.flow > 0.0 {
            plan[(a.r, a.c)] += a.flow;
            total += a.flow * ns.cost[a.r * ns.k + a.c];
        }
    }
    let w2 = total.max(0.0).sqrt();
    Ok((TransportPlan::from_parts(plan, total)?, w2))
}

/// Conditional-mean map of a coupling: each source atom is sent to the
/// mass-weighted average of its matched targets. The source measure supplies
/// the base points of the returned map.
pub fn barycentric_projection(
    plan: &TransportPlan,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<MapOnSample> {
    let m = plan.matrix();
    if m.nrows() != source.len() {
        return Err(Error::LengthMismatch {
            context: "plan rows vs source atoms",
            left: m.nrows(),
            right: source.len(),
        });
    }
    if m.ncols() != target.len() {
        return Err(Error::LengthMismatch {
            context: "plan columns vs target atoms",
            left: m.ncols(),
            right: target.len(),
        });
    }
    let d = target.dim();
    let mut images = Vec::with_capacity(source.len());
    for j in 0..source.len() {
        let mut acc = vec![0.0; d];
        let mut mass = 0.0;
        for (l, y) in target.support().iter().enumerate() {
            let p = m[(j, l)];
            if p > 0.0 {
                mass += p;
                for (a, c) in acc.iter_mut().zip(y) {
                    *a += p * c;
                }
            }
        }
        if mass <= 0.0 {
            return Err(Error::UnmatchedSourceAtom(j));
        }
        for a in &mut acc {
            *a /= mass;
        }
        images.push(acc);
    }
    MapOnSample::new(source.support().to_vec(), images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn measure_1d(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn weighted_1d(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(xs.iter().map(|&x| vec![x]).collect(), ws.to_vec()).unwrap()
    }

    #[test]
    fn quantile_identity_on_support() {
        let m = measure_1d(&[0.3, 0.1, 0.9, 0.5]);
        let map = QuantileMap1D::new(&m, &m).unwrap();
        for p in m.support() {
            assert_eq!(map.eval(p[0]), p[0]);
        }
    }

    #[test]
    fn quantile_translation_on_grid() {
        let a = DiscreteMeasure::uniform_grid_1d(0.0, 1.0, 50).unwrap();
        let shifted: Vec<Vec<f64>> = a.support().iter().map(|p| vec![p[0] + 2.0]).collect();
        let b = DiscreteMeasure::uniform(shifted).unwrap();
        let map = QuantileMap1D::new(&a, &b).unwrap();
        for p in a.support() {
            assert_eq!(map.eval(p[0]), p[0] + 2.0);
        }
    }

    #[test]
    fn quantile_to_two_atoms_is_step_at_half() {
        let a = DiscreteMeasure::uniform_grid_1d(0.0, 1.0, 10).unwrap();
        let b = weighted_1d(&[0.0, 1.0], &[0.5, 0.5]);
        let map = QuantileMap1D::new(&a, &b).unwrap();
        for p in a.support() {
            let expect = if p[0] >= 0.5 { 1.0 } else { 0.0 };
            assert_eq!(map.eval(p[0]), expect, "at {}", p[0]);
        }
    }

    #[test]
    fn quantile_tie_resolves_to_earlier_atom() {
        // cumulative mass exactly 1/2 must map to the first target atom
        let a = measure_1d(&[0.0, 1.0]);
        let b = measure_1d(&[5.0, 6.0]);
        let map = QuantileMap1D::new(&a, &b).unwrap();
        assert_eq!(map.eval(0.0), 5.0);
        assert_eq!(map.eval(1.0), 6.0);
        // below the first atom the CDF is 0
        assert_eq!(map.eval(-3.0), 5.0);
    }

    #[test]
    fn w2_examples() {
        let m = measure_1d(&[0.1, 0.7]);
        let (_, w) = discrete_w2(&m, &m).unwrap();
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-12);

        let a = DiscreteMeasure::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let b = DiscreteMeasure::uniform(vec![vec![3.0, 4.0]]).unwrap();
        let (_, w) = discrete_w2(&a, &b).unwrap();
        assert_abs_diff_eq!(w, 5.0, epsilon = 1e-12);

        let a = measure_1d(&[0.0, 1.0]);
        let b = measure_1d(&[0.0, 2.0]);
        let (plan, w) = discrete_w2(&a, &b).unwrap();
        assert_abs_diff_eq!(w, 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(plan.matrix()[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(plan.matrix()[(1, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn plan_marginals_are_exact() {
        let a = weighted_1d(&[0.0, 0.2, 0.9, 1.4], &[0.1, 0.4, 0.3, 0.2]);
        let b = weighted_1d(&[-0.5, 0.6, 1.0], &[0.25, 0.5, 0.25]);
        let (plan, _) = discrete_w2(&a, &b).unwrap();
        let m = plan.matrix();
        for j in 0..a.len() {
            let s: f64 = (0..b.len()).map(|l| m[(j, l)]).sum();
            assert_abs_diff_eq!(s, a.weights()[j], epsilon = 1e-9);
        }
        for l in 0..b.len() {
            let s: f64 = (0..a.len()).map(|j| m[(j, l)]).sum();
            assert_abs_diff_eq!(s, b.weights()[l], epsilon = 1e-9);
        }
    }

    #[test]
    fn network_simplex_matches_quantile_coupling_in_1d() {
        let mut rng = crate::sampling::rng_from_seed(7);
        use rand::RngExt;
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let k = rng.random_range(2..12);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let ys: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let vs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let sw: f64 = ws.iter().sum();
            let sv: f64 = vs.iter().sum();
            let a = weighted_1d(&xs, &ws.iter().map(|w| w / sw).collect::<Vec<_>>());
            let b = weighted_1d(&ys, &vs.iter().map(|v| v / sv).collect::<Vec<_>>());
            let (_, w_ns) = discrete_w2(&a, &b).unwrap();
            let w_q = w2_1d(&a, &b).unwrap();
            assert_abs_diff_eq!(w_ns, w_q, epsilon = 1e-8);
        }
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = crate::sampling::rng_from_seed(11);
        use rand::RngExt;
        for _ in 0..10 {
            let mk = |rng: &mut crate::sampling::SeededRng| {
                let n = rng.random_range(2..8);
                DiscreteMeasure::uniform(
                    (0..n)
                        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                        .collect(),
                )
                .unwrap()
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let (_, ab) = discrete_w2(&a, &b).unwrap();
            let (_, bc) = discrete_w2(&b, &c).unwrap();
            let (_, ac) = discrete_w2(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-8, "{ac} > {ab} + {bc}");
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q: Vec<usize> = p.iter().map(|&v| v + usize::from(v >= pos)).collect();
                q.insert(0, pos);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_assignment_in_2d() {
        let mut rng = crate::sampling::rng_from_seed(23);
        use rand::RngExt;
        for _ in 0..5 {
            let n = 5;
            let pts = |rng: &mut crate::sampling::SeededRng| {
                (0..n)
                    .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                    .collect::<Vec<_>>()
            };
            let a = DiscreteMeasure::uniform(pts(&mut rng)).unwrap();
            let b = DiscreteMeasure::uniform(pts(&mut rng)).unwrap();
            let best = permutations(n)
                .iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .map(|(i, &j)| sq_dist(a.point(i), b.point(j)) / n as f64)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let (plan, _) = discrete_w2(&a, &b).unwrap();
            assert_abs_diff_eq!(plan.cost(), best, epsilon = 1e-10);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let a = DiscreteMeasure::uniform((0..3000).map(|i| vec![i as f64]).collect()).unwrap();
        let b = DiscreteMeasure::uniform((0..2000).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(
            discrete_w2(&a, &b),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn projection_of_permutation_plan_returns_matched_targets() {
        let a = measure_1d(&[0.0, 1.0]);
        let b = measure_1d(&[10.0, 20.0]);
        let plan = TransportPlan::from_parts(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]),
            0.0,
        )
        .unwrap();
        let map = barycentric_projection(&plan, &a, &b).unwrap();
        assert_eq!(map.images()[0], vec![20.0]);
        assert_eq!(map.images()[1], vec![10.0]);
    }

    #[test]
    fn projection_of_product_plan_returns_target_mean() {
        let a = measure_1d(&[0.0, 1.0]);
        let b = weighted_1d(&[0.0, 4.0], &[0.75, 0.25]);
        let mut p = DMatrix::zeros(2, 2);
        for j in 0..2 {
            for l in 0..2 {
                p[(j, l)] = a.weights()[j] * b.weights()[l];
            }
        }
        let plan = TransportPlan::from_parts(p, 0.0).unwrap();
        let map = barycentric_projection(&plan, &a, &b).unwrap();
        for img in map.images() {
            assert_abs_diff_eq!(img[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_row_normalizes() {
        let a = measure_1d(&[0.0, 1.0]);
        let b = measure_1d(&[0.0, 2.0]);
        let plan = TransportPlan::from_parts(
            DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.0, 0.5]),
            0.0,
        )
        .unwrap();
        let map = barycentric_projection(&plan, &a, &b).unwrap();
        assert_abs_diff_eq!(map.images()[0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.images()[1][0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_projection_matches_monotone_assignment() {
        let a = measure_1d(&[0.9, 0.1, 0.5]);
        let b = measure_1d(&[30.0, 10.0, 20.0]);
        let map = quantile_projection_1d(&a, &b).unwrap();
        // sorted source 0.1, 0.5, 0.9 matches sorted target 10, 20, 30
        assert_abs_diff_eq!(map.images()[0][0], 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.images()[1][0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.images()[2][0], 20.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_projection_agrees_with_dense_solver() {
        let mut rng = crate::sampling::rng_from_seed(31);
        use rand::RngExt;
        for _ in 0..10 {
            let n = rng.random_range(2..10);
            let k = rng.random_range(2..10);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
            let ys: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 3.0).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
            let vs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
            let sw: f64 = ws.iter().sum();
            let sv: f64 = vs.iter().sum();
            let a = weighted_1d(&xs, &ws.iter().map(|w| w / sw).collect::<Vec<_>>());
            let b = weighted_1d(&ys, &vs.iter().map(|v| v / sv).collect::<Vec<_>>());
            let fast = quantile_projection_1d(&a, &b).unwrap();
            let (plan, _) = discrete_w2(&a, &b).unwrap();
            let dense = barycentric_projection(&plan, &a, &b).unwrap();
            for (f, d) in fast.images().iter().zip(dense.images()) {
                assert_abs_diff_eq!(f[0], d[0], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn projection_rejects_zero_row() {
        let a = measure_1d(&[0.0, 1.0]);
        let b = measure_1d(&[0.0, 2.0]);
        let plan = TransportPlan::from_parts(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            barycentric_projection(&plan, &a, &b),
            Err(Error::UnmatchedSourceAtom(1))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn quantile_map_is_monotone(
            xs in proptest::collection::vec(-5.0f64..5.0, 2..20),
            ys in proptest::collection::vec(-5.0f64..5.0, 2..20),
            qs in proptest::collection::vec(-6.0f64..6.0, 1..30),
        ) {
            let a = measure_1d(&xs);
            let b = measure_1d(&ys);
            let map = QuantileMap1D::new(&a, &b).unwrap();
            let mut sorted = qs.clone();
            sorted.sort_by(f64::total_cmp);
            let imgs: Vec<f64> = sorted.iter().map(|&q| map.eval(q)).collect();
            for w in imgs.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn exact_cost_never_exceeds_feasible_couplings(
            xs in proptest::collection::vec(-3.0f64..3.0, 2..8),
            ys in proptest::collection::vec(-3.0f64..3.0, 2..8),
        ) {
            let a = measure_1d(&xs);
            let b = measure_1d(&ys);
            let (plan, _) = discrete_w2(&a, &b).unwrap();
            // product coupling is feasible, so its cost is an upper bound
            let mut product_cost = 0.0;
            for (j, x) in a.support().iter().enumerate() {
                for (l, y) in b.support().iter().enumerate() {
                    product_cost += a.weights()[j] * b.weights()[l] * sq_dist(x, y);
                }
            }
            prop_assert!(plan.cost() <= product_cost + 1e-10);
        }
    }
}
