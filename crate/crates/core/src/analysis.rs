//! Scalar evaluation metrics over latent spaces.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{curvature_score, graph_geodesic_matrix, CurvatureOptions, SmoothMap};
use crate::numerics::{dist, Matrix, SeededRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Euclidean,
    RiemannianGraph,
    RiemannianCurve,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::RiemannianGraph => "riemannian-graph",
            MetricKind::RiemannianCurve => "riemannian-curve",
        }
    }
}

/// Symmetric pairwise distances with a zero diagonal, stored as the strict
/// upper triangle in row order: `(0,1), (0,2), …, (0,n−1), (1,2), …`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    kind: MetricKind,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize, kind: MetricKind) -> Self {
        DistanceMatrix {
            n,
            kind,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn from_upper(n: usize, kind: MetricKind, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::shape("DistanceMatrix::from_upper", n * n.saturating_sub(1) / 2, upper.len()));
        }
        if upper.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("distances must be finite and nonnegative".into()));
        }
        Ok(DistanceMatrix { n, kind, upper })
    }

    /// Euclidean distances between the rows of `points`.
    pub fn euclidean(points: &Matrix) -> Self {
        let n = points.rows();
        let mut d = DistanceMatrix::zeros(n, MetricKind::Euclidean);
        for i in 0..n {
            for j in i + 1..n {
                d.set(i, j, dist(points.row(i), points.row(j)));
            }
        }
        d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            core::cmp::Ordering::Equal => 0.0,
            core::cmp::Ordering::Less => self.upper[self.index(i, j)],
            core::cmp::Ordering::Greater => self.upper[self.index(j, i)],
        }
    }

    /// Sets both `(i,j)` and `(j,i)`; the diagonal is fixed at zero.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            return;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = self.index(a, b);
        self.upper[k] = v;
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// `ĉ = 1 − corr(r_E, r_M)` over the upper-triangular entries. Averaging the
/// per-pair normalised products with population mean and deviation gives
/// exactly the Pearson coefficient, so this is the mean residual
/// cross-correlation. Ranges over `[0, 2]`; 0 for affinely related distances.
pub fn residual_cross_correlation(d_euclid: &DistanceMatrix, d_riem: &DistanceMatrix) -> Result<f64> {
    if d_euclid.len() != d_riem.len() {
        return Err(Error::shape("residual_cross_correlation", d_euclid.len(), d_riem.len()));
    }
    if d_euclid.len() < 3 {
        return Err(Error::InvalidInput("ĉ needs at least 3 points".into()));
    }
    if d_euclid.upper() == d_riem.upper() {
        pearson(d_euclid.upper(), d_riem.upper())?;
        return Ok(0.0);
    }
    Ok(1.0 - pearson(d_euclid.upper(), d_riem.upper())?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    /// `None` where the margin is undefined: the point is the only member of
    /// its class, or an other-class point coincides with it
    pub margins: Vec<Option<f64>>,
    pub mean: f64,
    pub skipped: usize,
}

/// `m_n = (‖x_n − M(x_n)‖ − ‖x_n − H(x_n)‖) / ‖x_n − M(x_n)‖` with `M` the
/// nearest other-class point and `H` the nearest same-class point.
pub fn normalized_margin(points: &Matrix, labels: &[usize]) -> Result<MarginReport> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::shape("normalized_margin labels", n, labels.len()));
    }
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(Error::SingleClass);
    }
    let mut margins = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut used = 0usize;
    for i in 0..n {
        let mut same = f64::INFINITY;
        let mut other = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = dist(points.row(i), points.row(j));
            if labels[j] == labels[i] {
                same = same.min(d);
            } else {
                other = other.min(d);
            }
        }
        if same.is_finite() && other > 0.0 {
            let m = (other - same) / other;
            total += m;
            used += 1;
            margins.push(Some(m));
        } else {
            margins.push(None);
        }
    }
    if used == 0 {
        return Err(Error::InvalidInput("no point has a defined margin".into()));
    }
    Ok(MarginReport {
        margins,
        mean: total / used as f64,
        skipped: n - used,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// cluster id per point, `0..k`
    pub assignments: Vec<usize>,
    /// point index of each cluster's medoid
    pub medoids: Vec<usize>,
    pub cost: f64,
    /// cost after initialisation and after every improving step
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

fn assign(d: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut cost = 0.0;
    let assignments = (0..d.len())
        .map(|i| {
            let (best, dm) = medoids
                .iter()
                .enumerate()
                .map(|(c, &m)| (c, d.get(i, m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            cost += dm;
            best
        })
        .collect();
    (assignments, cost)
}

fn total_cost(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..d.len())
        .map(|i| medoids.iter().map(|&m| d.get(i, m)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// K-medoids over a precomputed distance matrix.
///
/// Greedy BUILD initialisation (candidates visited in a seeded order, which
/// only matters for ties), then alternating assignment / per-cluster medoid
/// update, then PAM swaps until no single medoid exchange lowers the cost.
/// Every accepted step strictly lowers the cost.
pub fn kmedoids(d: &DistanceMatrix, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    let n = d.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-medoids needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);

    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (f64::INFINITY, usize::MAX);
        for &c in &order {
            if medoids.contains(&c) {
                continue;
            }
            let cost: f64 = (0..n).map(|i| nearest[i].min(d.get(i, c))).sum();
            if cost < best.0 {
                best = (cost, c);
            }
        }
        medoids.push(best.1);
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(d.get(i, best.1));
        }
    }

    let (mut assignments, mut cost) = assign(d, &medoids);
    let mut history = vec![cost];
    let mut iters = 0;
    let mut converged = false;

    // alternation
    while iters < max_iters {
        iters += 1;
        let mut changed = false;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            let within = |m: usize| members.iter().map(|&i| d.get(i, m)).sum::<f64>();
            let current = within(medoids[c]);
            let mut best = (current, medoids[c]);
            for &m in &members {
                let w = within(m);
                if w < best.0 {
                    best = (w, m);
                }
            }
            if best.1 != medoids[c] {
                medoids[c] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (a, c) = assign(d, &medoids);
        if c >= cost {
            break;
        }
        assignments = a;
        cost = c;
        history.push(cost);
    }

    // swap phase
    while iters < max_iters {
        iters += 1;
        let mut best = (cost, usize::MAX, usize::MAX);
        for c in 0..k {
            for &o in &order {
                if medoids.contains(&o) {
                    continue;
                }
                let old = medoids[c];
                medoids[c] = o;
                let t = total_cost(d, &medoids);
                medoids[c] = old;
                if t < best.0 - 1e-12 * cost.abs().max(1.0) {
                    best = (t, c, o);
                }
            }
        }
        if best.1 == usize::MAX {
            converged = true;
            break;
        }
        medoids[best.1] = best.2;
        let (a, c) = assign(d, &medoids);
        assignments = a;
        cost = c;
        history.push(cost);
    }

    Ok(Clustering {
        assignments,
        medoids,
        cost,
        cost_history: history,
        converged,
    })
}

/// Pairwise F₁ × 100: a point pair is predicted positive when both points share
/// a cluster and truly positive when they share a label.
pub fn pairwise_f_score(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::shape("pairwise_f_score", labels.len(), assignments.len()));
    }
    let n = labels.len();
    let (mut tp, mut pred, mut actual) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let p = assignments[i] == assignments[j];
            let a = labels[i] == labels[j];
            pred += p as u64;
            actual += a as u64;
            tp += (p && a) as u64;
        }
    }
    if pred == 0 || actual == 0 || tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / pred as f64;
    let recall = tp as f64 / actual as f64;
    Ok(200.0 * precision * recall / (precision + recall))
}

/// One latent space to evaluate: codes of the evaluation points and the map
/// that decodes them.
pub struct LatentSpace<'a> {
    pub model: String,
    /// `vae`, `specified` or `unspecified`
    pub space: String,
    pub codes: Matrix,
    pub decoder: &'a dyn SmoothMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub k_neighbors: usize,
    pub curvature: CurvatureOptions,
    /// defaults to the number of distinct labels
    pub n_clusters: Option<usize>,
    pub kmedoids_max_iters: usize,
    pub distance_pairs: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            k_neighbors: 10,
            curvature: CurvatureOptions::default(),
            n_clusters: None,
            kmedoids_max_iters: 100,
            distance_pairs: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub model: String,
    pub space: String,
    pub n_points: usize,
    /// neighbourhood size actually used for the graph
    pub k_used: usize,
    pub c_hat: f64,
    pub mean_margin: f64,
    pub curvature_deg: f64,
    pub f_euclid: f64,
    pub f_riem: f64,
    pub mean_dist_euclid: f64,
    pub mean_dist_riem: f64,
    pub warnings: Vec<String>,
}

/// Builds the Euclidean and graph-geodesic distance matrices of each space and
/// evaluates every metric on them. A disconnected kNN graph is retried with
/// doubled `k` up to three times; each retry is recorded as a warning.
pub fn compare_spaces(
    spaces: &[LatentSpace<'_>],
    labels: &[usize],
    cfg: &CompareConfig,
) -> Result<Vec<MetricReport>> {
    if spaces.is_empty() {
        return Err(Error::Config("no latent spaces to compare".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let k_clusters = cfg.n_clusters.unwrap_or(classes.len());

    let mut out = Vec::with_capacity(spaces.len());
    for (si, sp) in spaces.iter().enumerate() {
        let n = sp.codes.rows();
        if n != labels.len() {
            return Err(Error::shape("compare_spaces labels", n, labels.len()));
        }
        let mut warnings = Vec::new();
        let mut k = cfg.k_neighbors;
        let mut attempt = 0;
        let d_riem = loop {
            match graph_geodesic_matrix(sp.decoder, &sp.codes, k) {
                Ok(d) => break d,
                Err(Error::DisconnectedGraph { component_sizes }) if attempt < 3 && 2 * k < n => {
                    warnings.push(format!(
                        "kNN graph with k={k} is disconnected (component sizes {component_sizes:?}); retrying with k={}",
                        2 * k
                    ));
                    k *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let d_euc = DistanceMatrix::euclidean(&sp.codes);
        let c_hat = residual_cross_correlation(&d_euc, &d_riem)?;
        let margin = normalized_margin(&sp.codes, labels)?;
        if margin.skipped > 0 {
            warnings.push(format!("{} points without a defined margin", margin.skipped));
        }

        let mut rng = SeededRng::new(cfg.seed).derive(si as u64);
        let decoded = Matrix::from_rows(
            &sp.codes.row_iter().map(|z| sp.decoder.eval(z)).collect::<Vec<_>>(),
        )?;
        let curvature_deg = curvature_score(&sp.codes, &decoded, None, &cfg.curvature, &mut rng)?;

        let seed = cfg.seed.wrapping_add(si as u64);
        let ce = kmedoids(&d_euc, k_clusters, seed, cfg.kmedoids_max_iters)?;
        let cr = kmedoids(&d_riem, k_clusters, seed, cfg.kmedoids_max_iters)?;
        let f_euclid = pairwise_f_score(&ce.assignments, labels)?;
        let f_riem = pairwise_f_score(&cr.assignments, labels)?;

        let (mut se, mut sr) = (0.0, 0.0);
        let mut pairs = 0;
        while pairs < cfg.distance_pairs {
            let i = rng.below(n);
            let j = rng.below(n);
            if i == j {
                continue;
            }
            se += d_euc.get(i, j);
            sr += d_riem.get(i, j);
            pairs += 1;
        }
        let denom = pairs.max(1) as f64;

        out.push(MetricReport {
            model: sp.model.clone(),
            space: sp.space.clone(),
            n_points: n,
            k_used: k,
            c_hat,
            mean_margin: margin.mean,
            curvature_deg,
            f_euclid,
            f_riem,
            mean_dist_euclid: se / denom,
            mean_dist_riem: sr / denom,
            warnings,
        });
    }
    Ok(out)
}
