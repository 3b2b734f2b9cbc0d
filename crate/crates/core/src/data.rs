//! Datasets: IDX decoding, synthetic manifolds with closed-form distances,
//! triplet sampling and simple preprocessing.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::geometry::SmoothMap;
use crate::numerics::{dist, dot, norm2, Matrix, SeededRng};
use crate::{Error, Result};

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    IdxFile { path: String },
    Synthetic {
        kind: ManifoldKind,
        noise_sigma: f64,
        seed: u64,
    },
    Derived(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// one sample per row
    pub samples: Matrix,
    pub labels: Option<Vec<usize>>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(samples: Matrix, labels: Option<Vec<usize>>, provenance: Provenance) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::shape("dataset labels", samples.rows(), l.len()));
            }
        }
        if !samples.is_finite() {
            return Err(Error::InvalidInput("dataset contains non-finite samples".into()));
        }
        Ok(LabeledDataset {
            samples,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("dataset has no labels".into()))
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: self.samples.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    /// Builds a dataset from an IDX image tensor (first dim = samples) and an
    /// optional IDX label vector. Pixels are scaled from `0..=255` to `[0, 1]`.
    pub fn from_idx(images: &IdxArray, labels: Option<&IdxArray>, path: &str) -> Result<Self> {
        if images.dims.is_empty() {
            return Err(Error::Parse("image IDX has no dimensions".into()));
        }
        let n = images.dims[0];
        let width: usize = images.dims[1..].iter().product();
        let samples = Matrix::from_vec(
            n,
            width,
            images.data.iter().map(|&b| b as f64 / 255.0).collect(),
        )?;
        let labels = match labels {
            None => None,
            Some(l) => {
                if l.dims.len() != 1 || l.dims[0] != n {
                    return Err(Error::Parse(format!(
                        "label IDX has dims {:?}, expected [{n}]",
                        l.dims
                    )));
                }
                Some(l.data.iter().map(|&b| b as usize).collect())
            }
        };
        LabeledDataset::new(
            samples,
            labels,
            Provenance::IdxFile {
                path: String::from(path),
            },
        )
    }
}

/// Unsigned-byte IDX tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

const IDX_UBYTE: u8 = 0x08;

/// Decodes an IDX file: two zero bytes, dtype byte (only `0x08` = u8 is
/// accepted), rank byte, one big-endian u32 per dimension, then the row-major
/// payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Parse(format!(
            "IDX truncated: expected at least 4 magic bytes, got {}",
            bytes.len()
        )));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Parse("IDX magic must start with two zero bytes".into()));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(Error::Parse(format!(
            "unsupported IDX dtype 0x{:02x} (only unsigned byte 0x08)",
            bytes[2]
        )));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::Parse("IDX rank 0".into()));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Parse(format!(
            "IDX truncated: expected {header} header bytes, got {}",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Parse("IDX dimensions overflow".into()))?;
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::Parse(format!(
            "IDX payload: expected {expected} bytes, got {actual}"
        )));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn encode_idx(arr: &IdxArray) -> Result<Vec<u8>> {
    if arr.dims.is_empty() || arr.dims.len() > 255 {
        return Err(Error::InvalidInput("IDX rank must be in 1..=255".into()));
    }
    let count: usize = arr.dims.iter().product();
    if count != arr.data.len() || arr.dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::shape("encode_idx", count, arr.data.len()));
    }
    let mut out = Vec::with_capacity(4 + 4 * arr.dims.len() + arr.data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, arr.dims.len() as u8]);
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    Plane,
    Circle,
    SphereChart,
    SwissRoll,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Plane => "plane",
            ManifoldKind::Circle => "circle",
            ManifoldKind::SphereChart => "sphere_chart",
            ManifoldKind::SwissRoll => "swiss_roll",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(ManifoldKind::Plane),
            "circle" => Ok(ManifoldKind::Circle),
            "sphere_chart" | "sphere" => Ok(ManifoldKind::SphereChart),
            "swiss_roll" => Ok(ManifoldKind::SwissRoll),
            _ => Err(Error::Config(format!("unknown manifold kind {s:?}"))),
        }
    }
}

pub const PLANE_AMBIENT_DIM: usize = 64;
/// Latitude bound of the sphere chart, keeping it away from the poles where
/// the chart stops being an immersion.
pub const SPHERE_MAX_LAT: f64 = 80.0 * PI / 180.0;
pub const SWISS_ROLL_T: (f64, f64) = (1.5 * PI, 4.5 * PI);
pub const SWISS_ROLL_HEIGHT: f64 = 21.0;

/// Chart map and exact intrinsic distance of a synthetic manifold.
///
/// Charts:
/// * plane: `(u, v) ↦ Q·(u, v)` with `Q` a random `64 × 2` isometry
/// * circle: `t ↦ (cos t, sin t)`
/// * sphere chart: `(lat, lon) ↦ (cos lat cos lon, cos lat sin lon, sin lat)`
/// * swiss roll: `(t, h) ↦ (t cos t, h, t sin t)`
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldOracle {
    pub kind: ManifoldKind,
    /// plane embedding; empty for the other kinds
    embedding: Matrix,
}

impl ManifoldOracle {
    pub fn sphere_chart() -> Self {
        ManifoldOracle {
            kind: ManifoldKind::SphereChart,
            embedding: Matrix::zeros(0, 0),
        }
    }

    pub fn circle() -> Self {
        ManifoldOracle {
            kind: ManifoldKind::Circle,
            embedding: Matrix::zeros(0, 0),
        }
    }

    pub fn swiss_roll() -> Self {
        ManifoldOracle {
            kind: ManifoldKind::SwissRoll,
            embedding: Matrix::zeros(0, 0),
        }
    }

    /// Plane through the origin spanned by two random orthonormal directions.
    pub fn plane(rng: &mut SeededRng) -> Self {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < 2 {
            let mut v = rng.normal_vec(PLANE_AMBIENT_DIM);
            for _ in 0..2 {
                for c in &cols {
                    let p = dot(&v, c);
                    v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                }
            }
            let n = norm2(&v);
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                cols.push(v);
            }
        }
        ManifoldOracle {
            kind: ManifoldKind::Plane,
            embedding: Matrix::from_fn(PLANE_AMBIENT_DIM, 2, |i, j| cols[j][i]),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            _ => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Plane => PLANE_AMBIENT_DIM,
            ManifoldKind::Circle => 2,
            ManifoldKind::SphereChart | ManifoldKind::SwissRoll => 3,
        }
    }

    pub fn chart_map(&self, latent: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Plane => self.embedding.matvec(latent).expect("plane chart is 2-D"),
            ManifoldKind::Circle => vec![libm::cos(latent[0]), libm::sin(latent[0])],
            ManifoldKind::SphereChart => {
                let (lat, lon) = (latent[0], latent[1]);
                vec![
                    libm::cos(lat) * libm::cos(lon),
                    libm::cos(lat) * libm::sin(lon),
                    libm::sin(lat),
                ]
            }
            ManifoldKind::SwissRoll => {
                let (t, h) = (latent[0], latent[1]);
                vec![t * libm::cos(t), h, t * libm::sin(t)]
            }
        }
    }

    pub fn chart_jacobian(&self, latent: &[f64]) -> Matrix {
        match self.kind {
            ManifoldKind::Plane => self.embedding.clone(),
            ManifoldKind::Circle => {
                Matrix::from_vec(2, 1, vec![-libm::sin(latent[0]), libm::cos(latent[0])]).unwrap()
            }
            ManifoldKind::SphereChart => {
                let (lat, lon) = (latent[0], latent[1]);
                let (sl, cl) = (libm::sin(lat), libm::cos(lat));
                let (so, co) = (libm::sin(lon), libm::cos(lon));
                Matrix::from_rows(&[[-sl * co, -cl * so], [-sl * so, cl * co], [cl, 0.0]]).unwrap()
            }
            ManifoldKind::SwissRoll => {
                let t = latent[0];
                let (s, c) = (libm::sin(t), libm::cos(t));
                Matrix::from_rows(&[[c - t * s, 0.0], [0.0, 1.0], [s + t * c, 0.0]]).unwrap()
            }
        }
    }

    /// Exact intrinsic distance between two (noise-free) ambient points.
    pub fn exact_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Plane => dist(a, b),
            ManifoldKind::Circle => {
                let ta = libm::atan2(a[1], a[0]);
                let tb = libm::atan2(b[1], b[0]);
                let d = libm::fabs(ta - tb);
                d.min(2.0 * PI - d)
            }
            ManifoldKind::SphereChart => great_circle(a, b),
            ManifoldKind::SwissRoll => {
                let ta = libm::hypot(a[0], a[2]);
                let tb = libm::hypot(b[0], b[2]);
                libm::hypot(spiral_arc_length(ta) - spiral_arc_length(tb), a[1] - b[1])
            }
        }
    }
}

impl SmoothMap for ManifoldOracle {
    fn in_dim(&self) -> usize {
        self.latent_dim()
    }

    fn out_dim(&self) -> usize {
        self.ambient_dim()
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.chart_map(z)
    }

    fn jacobian(&self, z: &[f64]) -> Matrix {
        self.chart_jacobian(z)
    }
}

/// Angle between two nonzero vectors, i.e. the great-circle distance on the
/// unit sphere.
pub fn great_circle(a: &[f64], b: &[f64]) -> f64 {
    // atan2 form stays accurate for nearly (anti)parallel vectors
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    libm::atan2(norm2(&cross), dot(a, b))
}

/// Arc length of the planar spiral `t ↦ (t cos t, t sin t)` from 0 to `t`.
pub fn spiral_arc_length(t: f64) -> f64 {
    0.5 * (t * libm::sqrt(1.0 + t * t) + libm::asinh(t))
}

/// A sampled synthetic manifold together with its chart coordinates.
#[derive(Clone, Debug)]
pub struct SyntheticManifold {
    pub dataset: LabeledDataset,
    /// chart coordinates of each sample (before noise)
    pub latent: Matrix,
    pub oracle: ManifoldOracle,
}

/// Samples `n` points from a synthetic manifold.
///
/// Labels: plane `u ≥ 0`; circle `t ≥ π`; sphere chart northern hemisphere;
/// swiss roll outer half (`t ≥ 3π`). Isotropic Gaussian noise of standard
/// deviation `noise_sigma` is added to the ambient samples.
pub fn synth_manifold(
    kind: ManifoldKind,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticManifold> {
    if n < 10 {
        return Err(Error::Config(format!("synthetic manifold needs n >= 10, got {n}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = SeededRng::new(seed);
    let oracle = match kind {
        ManifoldKind::Plane => ManifoldOracle::plane(&mut rng),
        ManifoldKind::Circle => ManifoldOracle::circle(),
        ManifoldKind::SphereChart => ManifoldOracle::sphere_chart(),
        ManifoldKind::SwissRoll => ManifoldOracle::swiss_roll(),
    };
    let d = oracle.latent_dim();
    let mut latent = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (coords, label): (Vec<f64>, usize) = match kind {
            ManifoldKind::Plane => {
                let u = rng.uniform_range(-1.0, 1.0);
                let v = rng.uniform_range(-1.0, 1.0);
                (vec![u, v], (u >= 0.0) as usize)
            }
            ManifoldKind::Circle => {
                let t = rng.uniform_range(0.0, 2.0 * PI);
                (vec![t], (t >= PI) as usize)
            }
            ManifoldKind::SphereChart => {
                // area-uniform within the latitude band
                let s = libm::sin(SPHERE_MAX_LAT);
                let lat = libm::asin(rng.uniform_range(-s, s));
                let lon = rng.uniform_range(-PI, PI);
                (vec![lat, lon], (lat >= 0.0) as usize)
            }
            ManifoldKind::SwissRoll => {
                let t = rng.uniform_range(SWISS_ROLL_T.0, SWISS_ROLL_T.1);
                let h = rng.uniform_range(0.0, SWISS_ROLL_HEIGHT);
                (vec![t, h], (t >= 3.0 * PI) as usize)
            }
        };
        latent.row_mut(i).copy_from_slice(&coords);
        labels.push(label);
    }
    let mut samples = Matrix::zeros(n, oracle.ambient_dim());
    for i in 0..n {
        let mut x = oracle.chart_map(latent.row(i));
        if noise_sigma > 0.0 {
            x.iter_mut().for_each(|v| *v += noise_sigma * rng.normal());
        }
        samples.row_mut(i).copy_from_slice(&x);
    }
    let dataset = LabeledDataset::new(
        samples,
        Some(labels),
        Provenance::Synthetic {
            kind,
            noise_sigma,
            seed,
        },
    )?;
    Ok(SyntheticManifold {
        dataset,
        latent,
        oracle,
    })
}

/// Weak-supervision triplets: `x1`, `x2` share a label, `x3` does not.
#[derive(Clone, Debug)]
pub struct TripletBatch {
    pub x1: Matrix,
    pub x2: Matrix,
    pub x3: Matrix,
    /// (shared label of x1/x2, label of x3) per row
    pub labels: Vec<(usize, usize)>,
}

/// Draws index triplets uniformly from all valid `(x1, x2, x3)` with
/// `x1 ≠ x2` same-labelled and `x3` differently labelled.
#[derive(Clone, Debug)]
pub struct TripletSampler {
    by_class: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    /// cumulative weight of choosing each class as the anchor class
    anchor_cdf: Vec<f64>,
    n: usize,
}

impl TripletSampler {
    pub fn new(labels: &[usize]) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let present: Vec<usize> = (0..n_classes).filter(|&c| !by_class[c].is_empty()).collect();
        if present.len() < 2 {
            return Err(Error::SingleClass);
        }
        let n = labels.len();
        let mut acc = 0.0;
        let anchor_cdf: Vec<f64> = by_class
            .iter()
            .map(|members| {
                let m = members.len() as f64;
                acc += m * (m - 1.0).max(0.0) * (n as f64 - m);
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::InvalidInput(
                "triplets need a class with at least two members".into(),
            ));
        }
        Ok(TripletSampler {
            by_class,
            class_of: labels.to_vec(),
            anchor_cdf,
            n,
        })
    }

    pub fn sample(&self, rng: &mut SeededRng) -> (usize, usize, usize) {
        let total = *self.anchor_cdf.last().unwrap();
        let u = rng.uniform() * total;
        let c = self
            .anchor_cdf
            .iter()
            .position(|&w| u < w)
            .unwrap_or(self.anchor_cdf.len() - 1);
        let members = &self.by_class[c];
        let i = rng.below(members.len());
        let mut j = rng.below(members.len() - 1);
        if j >= i {
            j += 1;
        }
        // uniform over samples outside class c
        let k = loop {
            let k = rng.below(self.n);
            if self.class_of[k] != c {
                break k;
            }
        };
        (members[i], members[j], k)
    }
}

pub fn sample_triplets(
    dataset: &LabeledDataset,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<TripletBatch> {
    let labels = dataset.labels()?;
    let sampler = TripletSampler::new(labels)?;
    let idx: Vec<(usize, usize, usize)> = (0..batch).map(|_| sampler.sample(rng)).collect();
    Ok(gather_triplets(dataset, &idx))
}

pub(crate) fn gather_triplets(dataset: &LabeledDataset, idx: &[(usize, usize, usize)]) -> TripletBatch {
    let i1: Vec<usize> = idx.iter().map(|t| t.0).collect();
    let i2: Vec<usize> = idx.iter().map(|t| t.1).collect();
    let i3: Vec<usize> = idx.iter().map(|t| t.2).collect();
    let labels = dataset
        .labels
        .as_ref()
        .map(|l| idx.iter().map(|t| (l[t.0], l[t.2])).collect())
        .unwrap_or_default();
    TripletBatch {
        x1: dataset.samples.select_rows(&i1),
        x2: dataset.samples.select_rows(&i2),
        x3: dataset.samples.select_rows(&i3),
        labels,
    }
}

/// Per-feature min-max scaling to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    /// `max - min`, or 0 for constant features (which map to 0)
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Self {
        let d = x.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in x.row_iter() {
            for j in 0..d {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        if x.rows() == 0 {
            min.iter_mut().for_each(|m| *m = 0.0);
            max.iter_mut().for_each(|m| *m = 0.0);
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        MinMaxScaler { min, range }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            if self.range[j] > 0.0 {
                (x.get(i, j) - self.min[j]) / self.range[j]
            } else {
                0.0
            }
        })
    }

    pub fn inverse(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * self.range[j] + self.min[j])
    }
}

pub fn normalize(dataset: &LabeledDataset) -> (LabeledDataset, MinMaxScaler) {
    let scaler = MinMaxScaler::fit(&dataset.samples);
    let ds = LabeledDataset {
        samples: scaler.transform(&dataset.samples),
        labels: dataset.labels.clone(),
        provenance: dataset.provenance.clone(),
    };
    (ds, scaler)
}

/// Label-stratified split; each class contributes `round(fraction · n_c)`
/// samples to the second (test) part. Unlabelled data is split as one class.
pub fn train_test_split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must be in [0, 1], got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let labels: Vec<usize> = dataset.labels.clone().unwrap_or_else(|| vec![0; n]);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = SeededRng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        let n_test = libm::round(test_fraction * members.len() as f64) as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
