//! Pullback geometry of a smooth decoder `f: Z → X`.
//!
//! The metric on latent space is `M_z = J_f(z)ᵀ J_f(z)`, so the length of a
//! latent curve is the length of its decoded image. Everything here works on
//! anything implementing [`SmoothMap`]: trained networks, linear maps and the
//! analytic charts in [`crate::data`].

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::analysis::{DistanceMatrix, MetricKind};
use crate::network::FeedForwardNet;
use crate::numerics::{axpy, dist, dot, numerical_rank, sq_dist, svd, Matrix, SeededRng};
use crate::{Error, Result};

/// A differentiable map between Euclidean spaces.
///
/// Implementations may assume inputs have length `in_dim()`; the public
/// functions of this module check shapes before calling in.
pub trait SmoothMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Vec<f64>;
    /// `out_dim × in_dim`
    fn jacobian(&self, z: &[f64]) -> Matrix;
    /// `J(z)ᵀ v`
    fn vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        self.jacobian(z).tr_matvec(v).expect("jacobian shape")
    }
}

impl<M: SmoothMap + ?Sized> SmoothMap for &M {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        (**self).eval(z)
    }
    fn jacobian(&self, z: &[f64]) -> Matrix {
        (**self).jacobian(z)
    }
    fn vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        (**self).vjp(z, v)
    }
}

impl SmoothMap for FeedForwardNet {
    fn in_dim(&self) -> usize {
        FeedForwardNet::in_dim(self)
    }
    fn out_dim(&self) -> usize {
        FeedForwardNet::out_dim(self)
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.forward_unchecked(z)
    }
    fn jacobian(&self, z: &[f64]) -> Matrix {
        self.jacobian_unchecked(z)
    }
    fn vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        self.vjp_unchecked(z, v)
    }
}

/// Affine map `z ↦ A z + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub a: Matrix,
    pub offset: Vec<f64>,
}

impl LinearMap {
    pub fn new(a: Matrix) -> Self {
        let offset = vec![0.0; a.rows()];
        LinearMap { a, offset }
    }
}

impl SmoothMap for LinearMap {
    fn in_dim(&self) -> usize {
        self.a.cols()
    }
    fn out_dim(&self) -> usize {
        self.a.rows()
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.a.matvec(z).expect("linear map shape");
        axpy(1.0, &self.offset, &mut y);
        y
    }
    fn jacobian(&self, _z: &[f64]) -> Matrix {
        self.a.clone()
    }
}

/// Restriction of a map to one block of its input with the other block held
/// fixed, e.g. `s ↦ f(s ‖ z₀)` for the specified half of a disentangled decoder.
#[derive(Clone, Debug)]
pub struct PartialMap<M> {
    map: M,
    fixed: Vec<f64>,
    /// whether the free variables come first in the full input
    free_first: bool,
}

impl<M: SmoothMap> PartialMap<M> {
    /// Free variables first, `fixed` appended after them.
    pub fn head(map: M, fixed: Vec<f64>) -> Result<Self> {
        Self::build(map, fixed, true)
    }

    /// `fixed` first, free variables after it.
    pub fn tail(map: M, fixed: Vec<f64>) -> Result<Self> {
        Self::build(map, fixed, false)
    }

    fn build(map: M, fixed: Vec<f64>, free_first: bool) -> Result<Self> {
        if fixed.len() >= map.in_dim() {
            return Err(Error::shape(
                "PartialMap fixed block",
                format!("< {}", map.in_dim()),
                fixed.len(),
            ));
        }
        Ok(PartialMap {
            map,
            fixed,
            free_first,
        })
    }

    fn free_dim(&self) -> usize {
        self.map.in_dim() - self.fixed.len()
    }

    fn full(&self, z: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.map.in_dim());
        if self.free_first {
            v.extend_from_slice(z);
            v.extend_from_slice(&self.fixed);
        } else {
            v.extend_from_slice(&self.fixed);
            v.extend_from_slice(z);
        }
        v
    }

    fn free_range(&self) -> (usize, usize) {
        if self.free_first {
            (0, self.free_dim())
        } else {
            (self.fixed.len(), self.map.in_dim())
        }
    }
}

impl<M: SmoothMap> SmoothMap for PartialMap<M> {
    fn in_dim(&self) -> usize {
        self.free_dim()
    }
    fn out_dim(&self) -> usize {
        self.map.out_dim()
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.map.eval(&self.full(z))
    }
    fn jacobian(&self, z: &[f64]) -> Matrix {
        let (a, b) = self.free_range();
        self.map.jacobian(&self.full(z)).select_cols(a, b)
    }
    fn vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let (a, b) = self.free_range();
        self.map.vjp(&self.full(z), v)[a..b].to_vec()
    }
}

fn check_point<M: SmoothMap + ?Sized>(map: &M, z: &[f64], op: &'static str) -> Result<()> {
    if z.len() != map.in_dim() {
        return Err(Error::shape(op, map.in_dim(), z.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{op}: non-finite latent point")));
    }
    Ok(())
}

/// Pullback metric at a latent point.
#[derive(Clone, Debug)]
pub struct MetricTensor {
    pub at: Vec<f64>,
    /// `d × d`, symmetric positive semidefinite
    pub m: Matrix,
}

impl MetricTensor {
    /// `vᵀ M v`
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.m.matvec(v).expect("metric shape"))
    }
}

/// `M_z = J_f(z)ᵀ J_f(z)`.
pub fn metric_tensor<M: SmoothMap + ?Sized>(map: &M, z: &[f64]) -> Result<MetricTensor> {
    check_point(map, z, "metric_tensor")?;
    Ok(MetricTensor {
        at: z.to_vec(),
        m: map.jacobian(z).gram(),
    })
}

/// Discrete energy `K · Σ‖f(z_{i+1}) − f(z_i)‖²` and length
/// `Σ‖f(z_{i+1}) − f(z_i)‖` of a polyline with `K` segments. By
/// Cauchy–Schwarz, `length² ≤ energy`.
pub fn curve_energy<M: SmoothMap + ?Sized>(map: &M, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("a curve needs at least two points".into()));
    }
    for p in points {
        check_point(map, p, "curve_energy")?;
    }
    let decoded: Vec<Vec<f64>> = points.iter().map(|p| map.eval(p)).collect();
    Ok(energy_length(&decoded))
}

fn energy_length(decoded: &[Vec<f64>]) -> (f64, f64) {
    let k = (decoded.len() - 1) as f64;
    let mut sq = 0.0;
    let mut len = 0.0;
    for w in decoded.windows(2) {
        let s = sq_dist(&w[0], &w[1]);
        sq += s;
        len += libm::sqrt(s);
    }
    (k * sq, len)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicOptions {
    /// number of segments `K`
    pub segments: usize,
    /// stop when the relative energy decrease falls below this
    pub tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant
    pub armijo: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            segments: 16,
            tol: 1e-6,
            max_iters: 500,
            armijo: 1e-4,
        }
    }
}

/// Discrete geodesic with fixed endpoints.
#[derive(Clone, Debug)]
pub struct GeodesicCurve {
    /// `z_0 … z_K`
    pub points: Vec<Vec<f64>>,
    /// `f(z_i)`
    pub decoded: Vec<Vec<f64>>,
    pub energy: f64,
    pub length: f64,
    /// energy of the straight latent segment the solver started from
    pub initial_energy: f64,
    pub iterations: usize,
    /// false when `max_iters` ran out before the tolerance was met
    pub converged: bool,
}

/// Minimises the discrete ambient energy of a `K`-segment latent polyline
/// between `a` and `b`, starting from the straight segment.
///
/// The gradient with respect to an interior point is
/// `2K · J(z_i)ᵀ (2 f(z_i) − f(z_{i−1}) − f(z_{i+1}))`, so only
/// vector-Jacobian products are needed. The step direction is that gradient
/// smoothed by the inverse of the latent second-difference operator (an `H¹`
/// preconditioner, exact Newton for a flat metric); step sizes come from
/// Armijo backtracking, so the energy never increases.
pub fn geodesic<M: SmoothMap + ?Sized>(
    map: &M,
    a: &[f64],
    b: &[f64],
    opts: &GeodesicOptions,
) -> Result<GeodesicCurve> {
    check_point(map, a, "geodesic start")?;
    check_point(map, b, "geodesic end")?;
    let k = opts.segments;
    if k == 0 {
        return Err(Error::Config("geodesic needs at least one segment".into()));
    }
    let d = a.len();
    let mut points: Vec<Vec<f64>> = (0..=k)
        .map(|i| {
            let t = i as f64 / k as f64;
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect();
    points[k] = b.to_vec();
    let mut decoded: Vec<Vec<f64>> = points.iter().map(|p| map.eval(p)).collect();
    let (mut energy, _) = energy_length(&decoded);
    let initial_energy = energy;

    let mut converged = true;
    let mut iterations = 0;
    if k >= 2 && energy > 0.0 {
        converged = false;
        let kf = k as f64;
        let mut step = 1.0;
        while iterations < opts.max_iters {
            iterations += 1;
            // gradient over interior points
            let grad: Vec<Vec<f64>> = (1..k)
                .map(|i| {
                    let r: Vec<f64> = (0..decoded[i].len())
                        .map(|c| 2.0 * decoded[i][c] - decoded[i - 1][c] - decoded[i + 1][c])
                        .collect();
                    let mut g = map.vjp(&points[i], &r);
                    g.iter_mut().for_each(|x| *x *= 2.0 * kf);
                    g
                })
                .collect();
            let dir = smooth_by_second_difference(&grad, d, kf);
            let slope: f64 = grad.iter().zip(&dir).map(|(g, p)| dot(g, p)).sum();
            if !(slope > 0.0) || !slope.is_finite() {
                converged = true;
                break;
            }

            let mut accepted = None;
            let mut t = step;
            for _ in 0..60 {
                let trial: Vec<Vec<f64>> = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        if i == 0 || i == k {
                            p.clone()
                        } else {
                            p.iter().zip(&dir[i - 1]).map(|(x, s)| x - t * s).collect()
                        }
                    })
                    .collect();
                let trial_dec: Vec<Vec<f64>> = trial
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if i == 0 || i == k { decoded[i].clone() } else { map.eval(p) })
                    .collect();
                let (e, _) = energy_length(&trial_dec);
                if e.is_finite() && e <= energy - opts.armijo * t * slope {
                    accepted = Some((trial, trial_dec, e));
                    break;
                }
                t *= 0.5;
            }
            let Some((p, dec, e)) = accepted else {
                // no decrease representable in floating point: stationary
                converged = true;
                break;
            };
            let rel = (energy - e) / energy.max(f64::MIN_POSITIVE);
            points = p;
            decoded = dec;
            energy = e;
            step = (2.0 * t).min(1e6);
            if rel < opts.tol {
                converged = true;
                break;
            }
        }
    }
    let (energy, length) = energy_length(&decoded);
    Ok(GeodesicCurve {
        points,
        decoded,
        energy,
        length,
        initial_energy,
        iterations,
        converged,
    })
}

/// Solves `2K·(2p_i − p_{i−1} − p_{i+1}) = g_i` with `p_0 = p_K = 0` per
/// coordinate (Thomas algorithm on the constant tridiagonal system).
fn smooth_by_second_difference(g: &[Vec<f64>], d: usize, k: f64) -> Vec<Vec<f64>> {
    let n = g.len();
    let scale = 2.0 * k;
    let mut out = vec![vec![0.0; d]; n];
    // forward sweep coefficients for diag 2, off-diag -1
    let mut c_prime = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for i in 0..n {
        let prev = if i == 0 { 0.0 } else { c_prime[i - 1] };
        denom[i] = 2.0 + prev; // 2 - (-1)·c'
        c_prime[i] = -1.0 / denom[i];
    }
    for c in 0..d {
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { dp[i - 1] };
            dp[i] = (g[i][c] / scale + prev) / denom[i];
        }
        let mut next = 0.0;
        for i in (0..n).rev() {
            let x = dp[i] - c_prime[i] * next;
            out[i][c] = x;
            next = x;
        }
    }
    out
}

/// Geodesic length with its convergence flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannianDistance {
    pub value: f64,
    pub converged: bool,
}

pub fn riemannian_distance<M: SmoothMap + ?Sized>(
    map: &M,
    a: &[f64],
    b: &[f64],
    opts: &GeodesicOptions,
) -> Result<RiemannianDistance> {
    let c = geodesic(map, a, b, opts)?;
    Ok(RiemannianDistance {
        value: c.length,
        converged: c.converged,
    })
}

/// Indices of the `k` nearest rows to row `i` (excluding `i`), nearest first.
pub fn nearest_neighbors(points: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(points.row(i), points.row(j)), j))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    cand.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    cand.truncate(k);
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    cand.into_iter().map(|(_, j)| j).collect()
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs graph geodesics: a symmetrised latent kNN graph whose edges are
/// weighted by the ambient length `‖f(z_i) − f(z_j)‖` of the decoded segment,
/// followed by Dijkstra from every source.
pub fn graph_geodesic_matrix<M: SmoothMap + ?Sized>(
    map: &M,
    points: &Matrix,
    k_neighbors: usize,
) -> Result<DistanceMatrix> {
    let n = points.rows();
    if points.cols() != map.in_dim() {
        return Err(Error::shape("graph_geodesic_matrix", map.in_dim(), points.cols()));
    }
    if k_neighbors == 0 || n < k_neighbors + 1 {
        return Err(Error::InsufficientNeighbors {
            needed: k_neighbors + 1,
            available: n,
        });
    }
    let decoded: Vec<Vec<f64>> = points.row_iter().map(|z| map.eval(z)).collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in nearest_neighbors(points, i, k_neighbors) {
            let w = dist(&decoded[i], &decoded[j]);
            if !adj[i].iter().any(|&(v, _)| v == j) {
                adj[i].push((j, w));
            }
            if !adj[j].iter().any(|&(v, _)| v == i) {
                adj[j].push((i, w));
            }
        }
    }

    let sizes = component_sizes(&adj);
    if sizes.len() > 1 {
        return Err(Error::DisconnectedGraph {
            component_sizes: sizes,
        });
    }

    let mut out = DistanceMatrix::zeros(n, MetricKind::RiemannianGraph);
    let mut distv = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for s in 0..n {
        distv.iter_mut().for_each(|x| *x = f64::INFINITY);
        distv[s] = 0.0;
        heap.clear();
        heap.push(HeapItem(0.0, s));
        while let Some(HeapItem(du, u)) = heap.pop() {
            if du > distv[u] {
                continue;
            }
            for &(v, w) in &adj[u] {
                let nd = du + w;
                if nd < distv[v] {
                    distv[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        for t in s + 1..n {
            out.set(s, t, distv[t]);
        }
    }
    Ok(out)
}

fn component_sizes(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpolationMode {
    Euclidean,
    Riemannian,
}

#[derive(Clone, Debug)]
pub struct Interpolation {
    /// latent points that were decoded
    pub latent: Vec<Vec<f64>>,
    /// decoded samples, `n` of them
    pub samples: Vec<Vec<f64>>,
    /// false if the underlying geodesic hit its iteration cap
    pub converged: bool,
}

/// `n` decoded samples between `a` and `b`: evenly spaced on the straight
/// latent segment, or at equal ambient arc length along the geodesic.
pub fn interpolate<M: SmoothMap + ?Sized>(
    map: &M,
    a: &[f64],
    b: &[f64],
    n: usize,
    mode: InterpolationMode,
    opts: &GeodesicOptions,
) -> Result<Interpolation> {
    check_point(map, a, "interpolate start")?;
    check_point(map, b, "interpolate end")?;
    if n < 2 {
        return Err(Error::Config("interpolation needs n >= 2".into()));
    }
    let lerp = |p: &[f64], q: &[f64], t: f64| -> Vec<f64> {
        p.iter().zip(q).map(|(x, y)| x + t * (y - x)).collect()
    };
    let (latent, converged) = match mode {
        InterpolationMode::Euclidean => {
            let mut l: Vec<Vec<f64>> = (0..n).map(|j| lerp(a, b, j as f64 / (n - 1) as f64)).collect();
            l[n - 1] = b.to_vec();
            (l, true)
        }
        InterpolationMode::Riemannian => {
            let c = geodesic(map, a, b, opts)?;
            let seg: Vec<f64> = c.decoded.windows(2).map(|w| dist(&w[0], &w[1])).collect();
            let total: f64 = seg.iter().sum();
            let mut l = Vec::with_capacity(n);
            l.push(a.to_vec());
            for j in 1..n - 1 {
                let target = total * j as f64 / (n - 1) as f64;
                let mut acc = 0.0;
                let mut placed = false;
                for (i, &s) in seg.iter().enumerate() {
                    if acc + s >= target && s > 0.0 {
                        l.push(lerp(&c.points[i], &c.points[i + 1], (target - acc) / s));
                        placed = true;
                        break;
                    }
                    acc += s;
                }
                if !placed {
                    l.push(b.to_vec());
                }
            }
            l.push(b.to_vec());
            (l, c.converged)
        }
    };
    let samples = latent.iter().map(|z| map.eval(z)).collect();
    Ok(Interpolation {
        latent,
        samples,
        converged,
    })
}

/// Orthonormal basis of an estimated tangent space.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    /// index of the base point
    pub at: usize,
    /// `dim × d_sub`, orthonormal columns
    pub u: Matrix,
}

/// Local PCA tangent space at `points[index]` from that point and its
/// `k_neighbors` nearest neighbours.
pub fn tangent_basis(
    points: &Matrix,
    index: usize,
    k_neighbors: usize,
    d_sub: usize,
) -> Result<TangentBasis> {
    tangent_basis_with(points, points, index, k_neighbors, d_sub)
}

/// As [`tangent_basis`], but neighbours are chosen by distance in `select`
/// while the basis is fitted to the matching rows of `embed` (for instance
/// latent codes and their decoded images).
pub fn tangent_basis_with(
    select: &Matrix,
    embed: &Matrix,
    index: usize,
    k_neighbors: usize,
    d_sub: usize,
) -> Result<TangentBasis> {
    if select.rows() != embed.rows() {
        return Err(Error::shape("tangent_basis rows", select.rows(), embed.rows()));
    }
    if index >= select.rows() {
        return Err(Error::InvalidInput(format!("tangent_basis: index {index} out of range")));
    }
    if d_sub == 0 || d_sub > embed.cols() {
        return Err(Error::Config(format!(
            "tangent dimension must be in 1..={}, got {d_sub}",
            embed.cols()
        )));
    }
    if k_neighbors < d_sub || select.rows() < k_neighbors + 1 {
        return Err(Error::InsufficientNeighbors {
            needed: k_neighbors.max(d_sub) + 1,
            available: select.rows(),
        });
    }
    let mut hood = vec![index];
    hood.extend(nearest_neighbors(select, index, k_neighbors));
    let mut x = embed.select_rows(&hood);
    let k = hood.len() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in x.row_iter() {
        axpy(1.0 / k, r, &mut mean);
    }
    for i in 0..x.rows() {
        axpy(-1.0, &mean, x.row_mut(i));
    }
    // right singular vectors of the centred (points × dim) block span the
    // top principal directions
    let s = svd(&x)?;
    let u = Matrix::from_fn(embed.cols(), d_sub, |i, j| s.vt.get(j, i));
    Ok(TangentBasis { at: index, u })
}

/// Principal angles (radians, ascending) between two equal-dimensional
/// subspaces given by orthonormal bases.
///
/// Angles below 45° are taken from the sines (singular values of
/// `U₂ − U₁U₁ᵀU₂`), the rest from the cosines (singular values of `U₁ᵀU₂`);
/// `acos` alone loses half the digits for nearly aligned subspaces.
pub fn principal_angles(u1: &TangentBasis, u2: &TangentBasis) -> Result<Vec<f64>> {
    principal_angles_between(&u1.u, &u2.u)
}

pub fn principal_angles_between(u1: &Matrix, u2: &Matrix) -> Result<Vec<f64>> {
    if u1.shape() != u2.shape() {
        return Err(Error::shape(
            "principal_angles",
            format!("{:?}", u1.shape()),
            format!("{:?}", u2.shape()),
        ));
    }
    let p = u1.cols();
    let cross = u1.transpose().matmul(u2)?;
    let cosines = svd(&cross)?.singular_values;
    let residual = u2.sub(&u1.matmul(&cross)?)?;
    let mut sines = svd(&residual)?.singular_values;
    sines.truncate(p);
    sines.reverse();
    let angles = (0..p)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            if c * c >= 0.5 {
                libm::asin(sines[i].clamp(0.0, 1.0))
            } else {
                libm::acos(c)
            }
        })
        .collect();
    Ok(angles)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureOptions {
    pub k_neighbors: usize,
    pub d_sub: usize,
    pub n_pairs: usize,
    /// latent-distance percentile band `[lo, hi]` pairs must fall in
    pub band: (f64, f64),
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        CurvatureOptions {
            k_neighbors: 10,
            d_sub: 2,
            n_pairs: 200,
            band: (0.10, 0.50),
        }
    }
}

/// Mean principal angle, in degrees, between tangent spaces at random pairs of
/// nearby points.
///
/// Pairs are drawn uniformly among those whose latent distance lies between
/// the `band` percentiles of all pairwise latent distances (restricted to
/// same-label pairs when `labels` is given). Neighbours are selected in
/// `latent`; tangent spaces are fitted to the matching rows of `ambient`.
pub fn curvature_score(
    latent: &Matrix,
    ambient: &Matrix,
    labels: Option<&[usize]>,
    opts: &CurvatureOptions,
    rng: &mut SeededRng,
) -> Result<f64> {
    let n = latent.rows();
    if ambient.rows() != n {
        return Err(Error::shape("curvature_score", n, ambient.rows()));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::shape("curvature_score labels", n, l.len()));
        }
    }
    if opts.n_pairs == 0 {
        return Err(Error::Config("curvature_score needs n_pairs >= 1".into()));
    }
    if n < opts.k_neighbors + 1 || n < 2 {
        return Err(Error::InsufficientNeighbors {
            needed: opts.k_neighbors + 1,
            available: n,
        });
    }
    let mut all: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            all.push(dist(latent.row(i), latent.row(j)));
        }
    }
    all.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| all[libm::round(p * (all.len() - 1) as f64) as usize];
    let (lo, hi) = (q(opts.band.0), q(opts.band.1));

    let mut cache: BTreeMap<usize, TangentBasis> = BTreeMap::new();
    let mut basis = |i: usize| -> Result<TangentBasis> {
        if let Some(b) = cache.get(&i) {
            return Ok(b.clone());
        }
        let b = tangent_basis_with(latent, ambient, i, opts.k_neighbors, opts.d_sub)?;
        cache.insert(i, b.clone());
        Ok(b)
    };

    let mut total = 0.0;
    let mut found = 0;
    let max_attempts = 1000 * opts.n_pairs;
    let mut attempts = 0;
    while found < opts.n_pairs && attempts < max_attempts {
        attempts += 1;
        let i = rng.below(n);
        let j = rng.below(n);
        if i == j || labels.is_some_and(|l| l[i] != l[j]) {
            continue;
        }
        let d = dist(latent.row(i), latent.row(j));
        if d < lo || d > hi {
            continue;
        }
        let angles = principal_angles(&basis(i)?, &basis(j)?)?;
        total += angles.iter().sum::<f64>() / angles.len() as f64;
        found += 1;
    }
    if found == 0 {
        return Err(Error::InvalidInput("no point pairs fall in the distance band".into()));
    }
    Ok((total / found as f64).to_degrees())
}

/// Per-point Jacobian ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub ranks: Vec<usize>,
    pub min: usize,
    /// lower median
    pub median: usize,
    pub max: usize,
}

pub fn jacobian_rank_report<M: SmoothMap + ?Sized>(
    map: &M,
    points: &Matrix,
    rel_tol: f64,
) -> Result<RankReport> {
    if points.cols() != map.in_dim() {
        return Err(Error::shape("jacobian_rank_report", map.in_dim(), points.cols()));
    }
    if points.rows() == 0 {
        return Err(Error::InvalidInput("rank report over zero points".into()));
    }
    let ranks = points
        .row_iter()
        .map(|z| Ok(numerical_rank(&svd(&map.jacobian(z))?.singular_values, rel_tol)))
        .collect::<Result<Vec<usize>>>()?;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    Ok(RankReport {
        min: sorted[0],
        median: sorted[(sorted.len() - 1) / 2],
        max: sorted[sorted.len() - 1],
        ranks,
    })
}
