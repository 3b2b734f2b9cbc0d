//! File formats: IDX tensors, checkpoints, CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use latentgeo_core::analysis::DistanceMatrix;
use latentgeo_core::checkpoint::Checkpoint;
use latentgeo_core::data::{encode_idx, parse_idx, IdxArray, LabeledDataset, Provenance};
use latentgeo_core::{Matrix, SeededRng};

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes atomically enough for our purposes: parent directories are created
/// first, then the whole buffer is written.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_idx(path: &Path) -> CliResult<IdxArray> {
    parse_idx(&read_bytes(path)?).map_err(|e| CliError::format(path, e))
}

pub fn write_idx(path: &Path, arr: &IdxArray) -> CliResult<()> {
    let bytes = encode_idx(arr).map_err(|e| CliError::format(path, e))?;
    write_bytes(path, &bytes)
}

/// Images (first dimension = samples) plus an optional label file, pixels
/// scaled to `[0, 1]`.
pub fn load_idx_dataset(images: &Path, labels: Option<&Path>) -> CliResult<LabeledDataset> {
    let img = read_idx(images)?;
    let lab = labels.map(read_idx).transpose()?;
    LabeledDataset::from_idx(&img, lab.as_ref(), &images.display().to_string())
        .map_err(|e| CliError::format(images, e))
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> CliResult<()> {
    let bytes = ck.encode().map_err(|e| CliError::format(path, e))?;
    write_bytes(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf()));
    }
    Checkpoint::decode(&read_bytes(path)?).map_err(|e| CliError::format(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn csv_writer(path: &Path) -> CliResult<csv::Writer<Vec<u8>>> {
    let _ = path;
    Ok(csv::WriterBuilder::new().from_writer(Vec::new()))
}

pub(crate) fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> CliResult<()> {
    let bytes = w.into_inner().map_err(|e| CliError::format(path, e))?;
    write_bytes(path, &bytes)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

/// Square distance table: header row of point ids, then one row per point
/// led by its id.
pub fn write_distance_csv(path: &Path, d: &DistanceMatrix) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let n = d.len();
    let mut header = vec![d.kind().name().to_string()];
    header.extend((0..n).map(|i| i.to_string()));
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend((0..n).map(|j| fmt_f64(d.get(i, j))));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish_csv(path, w)
}

/// One row per sample (`x0 … x{d-1}`), with a trailing `label` column when
/// labels are present.
pub fn write_dataset_csv(path: &Path, ds: &LabeledDataset) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.samples.row(i).iter().map(|v| fmt_f64(*v)).collect();
        if let Some(l) = &ds.labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish_csv(path, w)
}

/// Reads a table written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> CliResult<LabeledDataset> {
    let bytes = read_bytes(path)?;
    let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header = r.headers().map_err(csv_err(path))?.clone();
    let has_label = header.iter().last() == Some("label");
    let d = header.len() - has_label as usize;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for j in 0..d {
            let v: f64 = rec[j]
                .parse()
                .map_err(|_| CliError::format(path, format!("row {}: bad number {:?}", line + 2, &rec[j])))?;
            data.push(v);
        }
        if has_label {
            labels.push(
                rec[d]
                    .parse()
                    .map_err(|_| CliError::format(path, format!("row {}: bad label {:?}", line + 2, &rec[d])))?,
            );
        }
    }
    let n = data.len() / d.max(1);
    let samples = Matrix::from_vec(n, d, data).map_err(|e| CliError::format(path, e))?;
    LabeledDataset::new(
        samples,
        has_label.then_some(labels),
        Provenance::Derived(path.display().to_string()),
    )
    .map_err(|e| CliError::format(path, e))
}

/// Standard MNIST file names inside a directory.
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: &Path) -> Self {
        MnistFiles {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Images and labels as raw IDX arrays.
pub struct RawDigits {
    pub images: IdxArray,
    pub labels: IdxArray,
}

/// Reads per-digit JSON files `0.json … 9.json`, each `{"data": [...]}` with
/// 784 intensities in `[0, 1]` per image, as published by the `mnist` npm
/// package. Intensities are mapped back to bytes with `round(255·v)`.
pub fn read_digit_json(dir: &Path) -> CliResult<Vec<Vec<Vec<u8>>>> {
    let mut classes = Vec::with_capacity(10);
    for digit in 0..10 {
        let path = dir.join(format!("{digit}.json"));
        let v: serde_json::Value =
            serde_json::from_slice(&read_bytes(&path)?).map_err(|e| CliError::format(&path, e))?;
        let data = v
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or_else(|| CliError::format(&path, "expected an object with a \"data\" array"))?;
        if data.len() % 784 != 0 {
            return Err(CliError::format(&path, format!("{} values is not a multiple of 784", data.len())));
        }
        let bytes: Vec<u8> = data
            .iter()
            .map(|x| {
                x.as_f64()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .map(|v| (v * 255.0).round() as u8)
                    .ok_or_else(|| CliError::format(&path, format!("bad intensity {x}")))
            })
            .collect::<CliResult<_>>()?;
        classes.push(bytes.chunks(784).map(<[u8]>::to_vec).collect());
    }
    Ok(classes)
}

/// Class-balanced draw of `n_train + n_test` images from per-class pools;
/// both counts must be multiples of the class count.
pub fn balanced_split(
    classes: &[Vec<Vec<u8>>],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> CliResult<(RawDigits, RawDigits)> {
    let k = classes.len();
    if k == 0 || n_train % k != 0 || n_test % k != 0 {
        return Err(CliError::Config(format!(
            "n_train ({n_train}) and n_test ({n_test}) must be multiples of the class count {k}"
        )));
    }
    let (per_train, per_test) = (n_train / k, n_test / k);
    let mut rng = SeededRng::new(seed);
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (c, pool) in classes.iter().enumerate() {
        if pool.len() < per_train + per_test {
            return Err(CliError::Config(format!(
                "class {c} has {} images, need {}",
                pool.len(),
                per_train + per_test
            )));
        }
        let idx = rng.sample_indices(pool.len(), per_train + per_test);
        for (pos, &i) in idx.iter().enumerate() {
            let dst = if pos < per_train { &mut train } else { &mut test };
            dst.0.push(pool[i].clone());
            dst.1.push(c as u8);
        }
    }
    // interleave classes so prefixes stay balanced
    let pack = |(imgs, labs): (Vec<Vec<u8>>, Vec<u8>), per: usize| {
        let n = imgs.len();
        let order: Vec<usize> = (0..per).flat_map(|r| (0..k).map(move |c| c * per + r)).collect();
        let width = imgs.first().map_or(0, Vec::len);
        let side = (width as f64).sqrt() as usize;
        RawDigits {
            images: IdxArray {
                dims: vec![n, side, width / side.max(1)],
                data: order.iter().flat_map(|&i| imgs[i].iter().copied()).collect(),
            },
            labels: IdxArray {
                dims: vec![n],
                data: order.iter().map(|&i| labs[i]).collect(),
            },
        }
    };
    Ok((pack(train, per_train), pack(test, per_test)))
}

/// Balanced subset of an existing IDX image/label pair.
pub fn idx_classes(images: &IdxArray, labels: &IdxArray) -> CliResult<Vec<Vec<Vec<u8>>>> {
    let n = labels.data.len();
    if images.dims.first() != Some(&n) {
        return Err(CliError::Config(format!(
            "image count {:?} does not match label count {n}",
            images.dims.first()
        )));
    }
    let width = images.data.len() / n.max(1);
    let k = labels.data.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut classes = vec![Vec::new(); k];
    for i in 0..n {
        classes[labels.data[i] as usize].push(images.data[i * width..(i + 1) * width].to_vec());
    }
    Ok(classes)
}
