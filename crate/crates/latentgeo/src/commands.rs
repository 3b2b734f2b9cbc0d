//! The experiment pipelines behind each subcommand.
//!
//! Every command resolves and validates its whole configuration before it
//! touches data, so a config error never leaves partial outputs behind.

use std::path::{Path, PathBuf};

use latentgeo_core::analysis::{compare_spaces, kmedoids, CompareConfig, DistanceMatrix, LatentSpace};
use latentgeo_core::checkpoint::Checkpoint;
use latentgeo_core::data::{synth_manifold, LabeledDataset, ManifoldKind};
use latentgeo_core::geometry::{
    geodesic, interpolate, jacobian_rank_report, CurvatureOptions, GeodesicOptions, InterpolationMode, PartialMap,
    SmoothMap,
};
use latentgeo_core::models::{
    checkpoint_config, train_disentangled, train_vae, DisentangledModel, History, TrainConfig, VaeModel,
};
use latentgeo_core::network::FeedForwardNet;
use latentgeo_core::numerics::dist;
use latentgeo_core::{Matrix, SeededRng};
use serde_json::{json, Map};

use crate::config::{key, Key, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    balanced_split, fmt_f64, idx_classes, load_checkpoint, load_idx_dataset, read_dataset_csv, read_digit_json,
    read_idx, save_checkpoint, write_bytes, write_dataset_csv, write_idx, MnistFiles,
};
use crate::pgm::{cell_shape, write_pgm_grid, ImageGrid};
use crate::report::{write_metric_reports, write_table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Metrics,
    Interpolate,
    Synthesize,
    RankReport,
    Geodesic,
    DataImportJson,
    DataSubset,
    DataGenerate,
}

/// What a command produced: files written and lines for stdout / stderr.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub messages: Vec<String>,
    pub warnings: Vec<String>,
}

const DATA_KEYS: [Key; 7] = [
    key("data", "mnist", "mnist | plane | circle | sphere_chart | swiss_roll | csv"),
    key("data.dir", "data/mnist", "directory with the four MNIST IDX files"),
    key("data.path", "", "dataset CSV (when data=csv)"),
    key("data.split", "train", "train | test (mnist only)"),
    key("data.n", "0", "number of samples; 0 keeps all (synthetic default 500)"),
    key("data.noise", "0", "ambient noise sigma for synthetic manifolds"),
    key("data.seed", "0", "seed for synthetic sampling"),
];

const TRAIN_KEYS: [Key; 16] = [
    key("model", "both", "vae | disentangled | both"),
    key("seed", "0", "training seed"),
    key("out", "runs/train", "output directory"),
    key("latent_dim", "16", "VAE latent dimension"),
    key("specified_dim", "16", "disentangled specified dimension"),
    key("unspecified_dim", "64", "disentangled unspecified dimension"),
    key("encoder_hidden", "256", "comma-separated hidden widths"),
    key("decoder_hidden", "256", "comma-separated hidden widths"),
    key("disc_hidden", "64", "discriminator hidden widths"),
    key("activation", "elu", "elu | relu | tanh"),
    key("epochs", "20", ""),
    key("batch_size", "32", ""),
    key("lr", "1e-3", "Adam step size"),
    key("beta", "1", "KL weight"),
    key("lambda", "1", "adversarial weight"),
    key("variant", "swap_l2_kl", "swap_l2_kl | swap_adversarial"),
];

const METRIC_KEYS: [Key; 11] = [
    key("models", "", "comma-separated checkpoint paths"),
    key("spaces", "all", "all, or a comma list of vae,specified,unspecified"),
    key("k_neighbors", "10", "kNN graph size for graph geodesics"),
    key("n_clusters", "", "k-medoids clusters; default = number of classes"),
    key("kmedoids_max_iters", "100", ""),
    key("distance_pairs", "100", "random pairs for the mean distances"),
    key("curvature.k", "10", "tangent-space neighbourhood size"),
    key("curvature.d_sub", "2", "tangent-space dimension"),
    key("curvature.n_pairs", "200", "point pairs for the curvature score"),
    key("seed", "0", ""),
    key("out", "runs/metrics.csv", "report CSV; a .json sidecar is written next to it"),
];

const GEODESIC_KEYS: [Key; 3] = [
    key("geodesic.segments", "16", "curve segments"),
    key("geodesic.tol", "1e-6", "relative energy tolerance"),
    key("geodesic.max_iters", "500", ""),
];

const INTERPOLATE_KEYS: [Key; 7] = [
    key("checkpoint", "", "model checkpoint"),
    key("index_a", "", "first sample index (default: seeded pick)"),
    key("index_b", "", "second sample index (default: seeded pick)"),
    key("pair", "cross", "same | cross class when picking indices"),
    key("n", "10", "images per row"),
    key("seed", "0", ""),
    key("out", "runs/interpolate.pgm", "PGM grid; latent paths go to the .csv next to it"),
];

const SYNTH_KEYS: [Key; 6] = [
    key("checkpoint", "", "disentangled checkpoint"),
    key("classes", "", "comma list of classes, default all"),
    key("n", "8", "images per row"),
    key("z_scale", "1", "standard deviation of the unspecified draws"),
    key("seed", "0", ""),
    key("out", "runs/synthesize.pgm", "PGM grid"),
];

const RANK_KEYS: [Key; 6] = [
    key("models", "", "comma-separated checkpoint paths"),
    key("m", "100", "latent points per model"),
    key("points", "prior", "prior | data"),
    key("rel_tol", "1e-6", "singular values above rel_tol * max count toward the rank"),
    key("seed", "0", ""),
    key("out", "runs/rank.csv", "summary CSV"),
];

const GEO_POINT_KEYS: [Key; 8] = [
    key("checkpoint", "", "model checkpoint"),
    key("space", "auto", "auto | vae | specified | unspecified"),
    key("a", "", "comma-separated latent start (instead of index_a)"),
    key("b", "", "comma-separated latent end"),
    key("index_a", "", "start sample index"),
    key("index_b", "", "end sample index"),
    key("seed", "0", ""),
    key("out", "runs/geodesic.csv", "path CSV"),
];

const IMPORT_KEYS: [Key; 5] = [
    key("dir", "", "directory holding 0.json .. 9.json"),
    key("out", "data/mnist", "output directory for IDX files"),
    key("n_train", "2000", "balanced training images"),
    key("n_test", "500", "balanced test images"),
    key("seed", "0", ""),
];

const SUBSET_KEYS: [Key; 5] = [
    key("dir", "", "directory with full MNIST IDX files"),
    key("out", "data/mnist", "output directory"),
    key("n_train", "2000", ""),
    key("n_test", "500", ""),
    key("seed", "0", ""),
];

const GENERATE_KEYS: [Key; 5] = [
    key("kind", "sphere_chart", "plane | circle | sphere_chart | swiss_roll"),
    key("n", "500", ""),
    key("noise", "0", ""),
    key("seed", "0", ""),
    key("out", "runs/synthetic.csv", "dataset CSV"),
];

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Train,
        Command::Metrics,
        Command::Interpolate,
        Command::Synthesize,
        Command::RankReport,
        Command::Geodesic,
        Command::DataImportJson,
        Command::DataSubset,
        Command::DataGenerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Metrics => "metrics",
            Command::Interpolate => "interpolate",
            Command::Synthesize => "synthesize",
            Command::RankReport => "rank-report",
            Command::Geodesic => "geodesic",
            Command::DataImportJson => "data import-json",
            Command::DataSubset => "data subset",
            Command::DataGenerate => "data generate",
        }
    }

    pub fn schema(self) -> Vec<Key> {
        let parts: &[&[Key]] = match self {
            Command::Train => &[&TRAIN_KEYS, &DATA_KEYS],
            Command::Metrics => &[&METRIC_KEYS, &DATA_KEYS],
            Command::Interpolate => &[&INTERPOLATE_KEYS, &GEODESIC_KEYS, &DATA_KEYS],
            Command::Synthesize => &[&SYNTH_KEYS, &DATA_KEYS],
            Command::RankReport => &[&RANK_KEYS, &DATA_KEYS],
            Command::Geodesic => &[&GEO_POINT_KEYS, &GEODESIC_KEYS, &DATA_KEYS],
            Command::DataImportJson => &[&IMPORT_KEYS],
            Command::DataSubset => &[&SUBSET_KEYS],
            Command::DataGenerate => &[&GENERATE_KEYS],
        };
        let mut keys: Vec<Key> = parts.iter().flat_map(|p| p.iter().copied()).collect();
        // evaluation commands default to the held-out split
        if matches!(self, Command::Metrics | Command::Interpolate | Command::Geodesic) {
            for k in &mut keys {
                if k.name == "data.split" {
                    k.default = "test";
                }
            }
        }
        keys
    }

    pub fn resolve(self, file: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
        RunConfig::resolve(&self.schema(), file, overrides)
    }

    pub fn run(self, cfg: &RunConfig) -> CliResult<Outcome> {
        match self {
            Command::Train => cmd_train(cfg),
            Command::Metrics => cmd_metrics(cfg),
            Command::Interpolate => cmd_interpolate(cfg),
            Command::Synthesize => cmd_synthesize(cfg),
            Command::RankReport => cmd_rank_report(cfg),
            Command::Geodesic => cmd_geodesic(cfg),
            Command::DataImportJson => cmd_import_json(cfg),
            Command::DataSubset => cmd_subset(cfg),
            Command::DataGenerate => cmd_generate(cfg),
        }
    }
}

// ---------------------------------------------------------------- data specs

enum DataSource {
    Mnist { dir: PathBuf, test: bool },
    Synthetic { kind: ManifoldKind, noise: f64, seed: u64 },
    Csv(PathBuf),
}

struct DataSpec {
    source: DataSource,
    n: usize,
}

fn data_spec(cfg: &RunConfig) -> CliResult<DataSpec> {
    let n = cfg.usize("data.n")?;
    let source = match cfg.choice("data", &["mnist", "plane", "circle", "sphere_chart", "swiss_roll", "csv"])? {
        "mnist" => DataSource::Mnist {
            dir: cfg.path("data.dir")?,
            test: cfg.choice("data.split", &["train", "test"])? == "test",
        },
        "csv" => DataSource::Csv(cfg.path("data.path")?),
        kind => {
            let noise = cfg.f64("data.noise")?;
            if noise < 0.0 {
                return Err(CliError::Config("data.noise must be >= 0".into()));
            }
            DataSource::Synthetic {
                kind: ManifoldKind::parse(kind)?,
                noise,
                seed: cfg.u64("data.seed")?,
            }
        }
    };
    Ok(DataSpec { source, n })
}

impl DataSpec {
    fn load(&self) -> CliResult<LabeledDataset> {
        let ds = match &self.source {
            DataSource::Mnist { dir, test } => {
                let f = MnistFiles::in_dir(dir);
                let (img, lab) = if *test {
                    (f.test_images, f.test_labels)
                } else {
                    (f.train_images, f.train_labels)
                };
                load_idx_dataset(&img, Some(&lab))?
            }
            DataSource::Csv(p) => read_dataset_csv(p)?,
            DataSource::Synthetic { kind, noise, seed } => {
                let n = if self.n == 0 { 500 } else { self.n };
                return Ok(synth_manifold(*kind, n, *noise, *seed)?.dataset);
            }
        };
        if self.n == 0 || self.n >= ds.len() {
            return Ok(ds);
        }
        let idx: Vec<usize> = (0..self.n).collect();
        Ok(ds.subset(&idx))
    }
}

// ------------------------------------------------------------------ models

/// A trained model loaded from disk.
pub enum Model {
    Vae(VaeModel),
    Disentangled(DisentangledModel),
}

/// Model plus its id and stored training configuration.
pub struct LoadedModel {
    pub id: String,
    pub model: Model,
    pub config: TrainConfig,
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let ck = load_checkpoint(path)?;
    let parse = |e: latentgeo_core::Error| CliError::format(path, e);
    let model = match ck.meta("kind") {
        Some("vae") => Model::Vae(VaeModel::from_checkpoint(&ck).map_err(parse)?),
        Some("disentangled") => Model::Disentangled(DisentangledModel::from_checkpoint(&ck).map_err(parse)?),
        other => return Err(CliError::format(path, format!("unknown checkpoint kind {other:?}"))),
    };
    let config = checkpoint_config(&ck).map_err(parse)?;
    Ok(LoadedModel {
        id: path.with_extension("").display().to_string(),
        model,
        config,
    })
}

/// Codes of `x` in one latent space and the decoder restricted to it.
pub struct Space<'a> {
    pub name: &'static str,
    pub codes: Matrix,
    pub decoder: Box<dyn SmoothMap + 'a>,
}

fn column_mean(m: &Matrix) -> Vec<f64> {
    let n = m.rows().max(1) as f64;
    (0..m.cols()).map(|j| m.column(j).iter().sum::<f64>() / n).collect()
}

impl Model {
    pub fn decoder_net(&self) -> &FeedForwardNet {
        match self {
            Model::Vae(m) => &m.decoder,
            Model::Disentangled(m) => &m.decoder,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.decoder_net().out_dim()
    }

    /// Latent spaces evaluated for this model: `vae` for a VAE; `specified`
    /// (`s ↦ f(s ‖ 0)`) and `unspecified` (`z ↦ f(s̄ ‖ z)`, with `s̄` the mean
    /// specified code of `x`) for a disentangled model.
    pub fn spaces(&self, x: &Matrix) -> CliResult<Vec<Space<'_>>> {
        Ok(match self {
            Model::Vae(m) => vec![Space {
                name: "vae",
                codes: m.encode(x)?,
                decoder: Box::new(&m.decoder),
            }],
            Model::Disentangled(m) => {
                let code = m.encode(x)?;
                let s_bar = column_mean(&code.specified);
                vec![
                    Space {
                        name: "specified",
                        codes: code.specified,
                        decoder: Box::new(m.specified_decoder()),
                    },
                    Space {
                        name: "unspecified",
                        codes: code.unspecified,
                        decoder: Box::new(m.unspecified_decoder(&s_bar)?),
                    },
                ]
            }
        })
    }
}

fn check_data_dim(model: &LoadedModel, ds: &LabeledDataset) -> CliResult<()> {
    if model.model.data_dim() != ds.dim() {
        return Err(CliError::Config(format!(
            "model {} expects {}-dimensional data, dataset has {}",
            model.id,
            model.model.data_dim(),
            ds.dim()
        )));
    }
    Ok(())
}

fn checkpoint_paths(cfg: &RunConfig, key: &str) -> CliResult<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = cfg.list(key).into_iter().map(PathBuf::from).collect();
    if paths.is_empty() {
        return Err(CliError::Config(format!("{key}: no checkpoints given")));
    }
    Ok(paths)
}

fn geodesic_options(cfg: &RunConfig) -> CliResult<GeodesicOptions> {
    let opts = GeodesicOptions {
        segments: cfg.positive("geodesic.segments")?,
        tol: cfg.f64("geodesic.tol")?,
        max_iters: cfg.positive("geodesic.max_iters")?,
        ..GeodesicOptions::default()
    };
    if opts.segments < 2 || !(opts.tol > 0.0) {
        return Err(CliError::Config("geodesic.segments must be >= 2 and geodesic.tol > 0".into()));
    }
    Ok(opts)
}

fn echo_config(out: &Path, cfg: &RunConfig, o: &mut Outcome) -> CliResult<()> {
    let p = out.with_extension("cfg");
    write_bytes(&p, cfg.to_text().as_bytes())?;
    o.written.push(p);
    Ok(())
}

// ------------------------------------------------------------------- train

fn train_config(cfg: &RunConfig) -> CliResult<TrainConfig> {
    let mut tc = TrainConfig::default();
    for k in TrainConfig::KEYS {
        tc.set(k, cfg.str(k))?;
    }
    Ok(tc)
}

fn history_rows(h: &History) -> Vec<Vec<String>> {
    h.epochs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                (i + 1).to_string(),
                fmt_f64(p.total),
                fmt_f64(p.recon),
                fmt_f64(p.kl),
                fmt_f64(p.gen),
                fmt_f64(p.disc),
            ]
        })
        .collect()
}

const HISTORY_COLUMNS: [&str; 6] = ["epoch", "total", "recon", "kl", "gen", "disc"];

pub fn cmd_train(cfg: &RunConfig) -> CliResult<Outcome> {
    let which = cfg.choice("model", &["vae", "disentangled", "both"])?;
    let seed = cfg.u64("seed")?;
    let out = cfg.path("out")?;
    let tc = train_config(cfg)?;
    let (do_vae, do_dis) = (which != "disentangled", which != "vae");
    if do_vae {
        tc.validate_vae()?;
    }
    if do_dis {
        tc.validate_disentangled()?;
    }
    let spec = data_spec(cfg)?;

    let ds = spec.load()?;
    let mut o = Outcome::default();
    let save = |name: &str, ck: Checkpoint, h: &History, o: &mut Outcome| -> CliResult<()> {
        let ck_path = out.join(format!("{name}.ckpt"));
        save_checkpoint(&ck_path, &ck)?;
        let hist = out.join(format!("{name}_history.csv"));
        write_table(&hist, &HISTORY_COLUMNS, &history_rows(h), cfg, Map::new())?;
        let last = h.last().unwrap_or_default();
        o.messages.push(format!(
            "{name}: total {:.6} recon {:.6} kl {:.6} gen {:.6} disc {:.6}",
            last.total, last.recon, last.kl, last.gen, last.disc
        ));
        o.written.push(ck_path);
        o.written.push(hist);
        Ok(())
    };
    if do_vae {
        let (m, h) = train_vae(&ds, &tc, seed)?;
        save("vae", m.to_checkpoint(&tc, seed), &h, &mut o)?;
    }
    if do_dis {
        let (m, h) = train_disentangled(&ds, &tc, seed)?;
        save("disentangled", m.to_checkpoint(&tc, seed), &h, &mut o)?;
    }
    echo_config(&out.join("train"), cfg, &mut o)?;
    Ok(o)
}

// ----------------------------------------------------------------- metrics

pub fn cmd_metrics(cfg: &RunConfig) -> CliResult<Outcome> {
    let paths = checkpoint_paths(cfg, "models")?;
    let spaces_sel = cfg.list("spaces");
    for s in &spaces_sel {
        if !["all", "vae", "specified", "unspecified"].contains(&s.as_str()) {
            return Err(CliError::Config(format!("spaces: unknown space {s:?}")));
        }
    }
    let want = |name: &str| spaces_sel.iter().any(|s| s == "all" || s == name);
    let compare = CompareConfig {
        k_neighbors: cfg.positive("k_neighbors")?,
        curvature: CurvatureOptions {
            k_neighbors: cfg.positive("curvature.k")?,
            d_sub: cfg.positive("curvature.d_sub")?,
            n_pairs: cfg.positive("curvature.n_pairs")?,
            ..CurvatureOptions::default()
        },
        n_clusters: cfg.opt_usize("n_clusters")?,
        kmedoids_max_iters: cfg.positive("kmedoids_max_iters")?,
        distance_pairs: cfg.positive("distance_pairs")?,
        seed: cfg.u64("seed")?,
    };
    if compare.n_clusters == Some(0) {
        return Err(CliError::Config("n_clusters must be positive".into()));
    }
    let out = cfg.path("out")?;
    let spec = data_spec(cfg)?;

    let models = paths.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
    let ds = spec.load()?;
    let labels = ds.labels()?;
    let mut spaces = Vec::new();
    for m in &models {
        check_data_dim(m, &ds)?;
        for sp in m.model.spaces(&ds.samples)? {
            if want(sp.name) {
                spaces.push((m.id.clone(), sp));
            }
        }
    }
    if spaces.is_empty() {
        return Err(CliError::Config("no latent space matches the spaces selection".into()));
    }
    let latent: Vec<LatentSpace<'_>> = spaces
        .iter()
        .map(|(id, sp)| LatentSpace {
            model: id.clone(),
            space: sp.name.to_string(),
            codes: sp.codes.clone(),
            decoder: &*sp.decoder,
        })
        .collect();
    let reports = compare_spaces(&latent, labels, &compare)?;
    write_metric_reports(&out, &reports, cfg)?;
    let mut o = Outcome::default();
    for r in &reports {
        o.messages.push(format!(
            "{} {}: c_hat {:.4} margin {:.4} curvature {:.2} deg  F euclid {:.2} riem {:.2}",
            r.model, r.space, r.c_hat, r.mean_margin, r.curvature_deg, r.f_euclid, r.f_riem
        ));
        o.warnings
            .extend(r.warnings.iter().map(|w| format!("{} {}: {w}", r.model, r.space)));
    }
    o.written.push(out.clone());
    o.written.push(out.with_extension("json"));
    Ok(o)
}

// ------------------------------------------------------------- interpolate

fn pick_pair(labels: Option<&[usize]>, n: usize, same: bool, rng: &mut SeededRng) -> CliResult<(usize, usize)> {
    if n < 2 {
        return Err(CliError::Config("need at least two samples".into()));
    }
    let a = rng.below(n);
    let candidates: Vec<usize> = (0..n)
        .filter(|&j| j != a)
        .filter(|&j| labels.is_none_or(|l| (l[j] == l[a]) == same))
        .collect();
    if candidates.is_empty() {
        return Err(CliError::Config(format!(
            "no {} partner for sample {a}",
            if same { "same-class" } else { "cross-class" }
        )));
    }
    Ok((a, candidates[rng.below(candidates.len())]))
}

fn sample_index(cfg: &RunConfig, key: &str, n: usize) -> CliResult<Option<usize>> {
    match cfg.opt_usize(key)? {
        Some(i) if i >= n => Err(CliError::Config(format!("{key}={i} is out of range for {n} samples"))),
        other => Ok(other),
    }
}

/// Latent endpoints and decoder for a path between two data points. For a
/// disentangled model the path lives in the specified space and the
/// unspecified code of the first point is held fixed.
fn endpoint_map<'a>(model: &'a Model, xa: &[f64], xb: &[f64]) -> CliResult<(Vec<f64>, Vec<f64>, Box<dyn SmoothMap + 'a>)> {
    let x = Matrix::from_rows(&[xa, xb])?;
    Ok(match model {
        Model::Vae(m) => {
            let z = m.encode(&x)?;
            (z.row(0).to_vec(), z.row(1).to_vec(), Box::new(&m.decoder))
        }
        Model::Disentangled(m) => {
            let c = m.encode(&x)?;
            let fixed = c.unspecified.row(0).to_vec();
            (
                c.specified.row(0).to_vec(),
                c.specified.row(1).to_vec(),
                Box::new(PartialMap::head(&m.decoder, fixed)?),
            )
        }
    })
}

pub fn cmd_interpolate(cfg: &RunConfig) -> CliResult<Outcome> {
    let ck = cfg.path("checkpoint")?;
    let n = cfg.usize("n")?;
    if n < 2 {
        return Err(CliError::Config("n must be >= 2".into()));
    }
    let same = cfg.choice("pair", &["same", "cross"])? == "same";
    let seed = cfg.u64("seed")?;
    let opts = geodesic_options(cfg)?;
    let out = cfg.path("out")?;
    let spec = data_spec(cfg)?;

    let model = load_model(&ck)?;
    let ds = spec.load()?;
    check_data_dim(&model, &ds)?;
    let (ia, ib) = match (sample_index(cfg, "index_a", ds.len())?, sample_index(cfg, "index_b", ds.len())?) {
        (Some(a), Some(b)) => (a, b),
        (None, None) => pick_pair(ds.labels.as_deref(), ds.len(), same, &mut SeededRng::new(seed))?,
        _ => return Err(CliError::Config("give both index_a and index_b, or neither".into())),
    };
    let (za, zb, map) = endpoint_map(&model.model, ds.samples.row(ia), ds.samples.row(ib))?;
    let mut o = Outcome::default();
    let mut cells = Vec::with_capacity(2 * n);
    let mut rows = Vec::new();
    for (mode, name) in [
        (InterpolationMode::Euclidean, "euclidean"),
        (InterpolationMode::Riemannian, "riemannian"),
    ] {
        let it = interpolate(&*map, &za, &zb, n, mode, &opts)?;
        if !it.converged {
            o.warnings.push(format!(
                "geodesic between samples {ia} and {ib} hit max_iters={} before converging",
                opts.max_iters
            ));
        }
        for (step, z) in it.latent.iter().enumerate() {
            let mut row = vec![name.to_string(), step.to_string()];
            row.extend(z.iter().map(|v| fmt_f64(*v)));
            rows.push(row);
        }
        cells.extend(it.samples);
    }
    let (h, w) = cell_shape(ds.dim());
    write_pgm_grid(&ImageGrid::new(2, n, h, w, cells)?, &out)?;
    let csv = out.with_extension("csv");
    let mut columns = vec!["mode".to_string(), "step".to_string()];
    columns.extend((0..za.len()).map(|j| format!("z{j}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut extra = Map::new();
    extra.insert("index_a".into(), json!(ia));
    extra.insert("index_b".into(), json!(ib));
    write_table(&csv, &columns, &rows, cfg, extra)?;
    o.messages.push(format!("interpolated samples {ia} -> {ib} with {n} steps"));
    o.written.extend([out.clone(), csv]);
    echo_config(&out, cfg, &mut o)?;
    Ok(o)
}

// -------------------------------------------------------------- synthesize

/// Index (into `members`) of the medoid of the given rows.
fn medoid(codes: &Matrix, members: &[usize]) -> CliResult<usize> {
    let d = DistanceMatrix::euclidean(&codes.select_rows(members));
    let c = kmedoids(&d, 1, 0, 10)?;
    Ok(members[c.medoids[0]])
}

pub fn cmd_synthesize(cfg: &RunConfig) -> CliResult<Outcome> {
    let ck = cfg.path("checkpoint")?;
    let n = cfg.positive("n")?;
    let z_scale = cfg.f64("z_scale")?;
    if z_scale < 0.0 {
        return Err(CliError::Config("z_scale must be >= 0".into()));
    }
    let class_sel = cfg
        .list("classes")
        .iter()
        .map(|c| c.parse::<usize>().map_err(|_| CliError::Config(format!("classes: bad class {c:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let seed = cfg.u64("seed")?;
    let out = cfg.path("out")?;
    let spec = data_spec(cfg)?;

    let model = load_model(&ck)?;
    let Model::Disentangled(m) = &model.model else {
        return Err(CliError::Config(format!("{} is not a disentangled checkpoint", ck.display())));
    };
    let ds = spec.load()?;
    check_data_dim(&model, &ds)?;
    let labels = ds.labels()?;
    let code = m.encode(&ds.samples)?;
    let classes = if class_sel.is_empty() {
        let mut c = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    } else {
        class_sel
    };
    let mut rng = SeededRng::new(seed);
    let mut cells = Vec::with_capacity(classes.len() * n);
    for &c in &classes {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            return Err(CliError::Config(format!("class {c} has no samples")));
        }
        let centre = code.specified.row(medoid(&code.specified, &members)?).to_vec();
        let target = code.specified.row(members[rng.below(members.len())]).to_vec();
        for j in 0..n {
            let t = if n == 1 { 0.0 } else { j as f64 / (n - 1) as f64 };
            let mut input: Vec<f64> = centre.iter().zip(&target).map(|(a, b)| a + t * (b - a)).collect();
            input.extend((0..m.unspecified_dim()).map(|_| z_scale * rng.normal()));
            cells.push(m.decoder.eval(&input));
        }
    }
    let (h, w) = cell_shape(ds.dim());
    write_pgm_grid(&ImageGrid::new(classes.len(), n, h, w, cells)?, &out)?;
    let mut o = Outcome::default();
    o.messages.push(format!("synthesized {} rows of {n} images", classes.len()));
    o.written.push(out.clone());
    echo_config(&out, cfg, &mut o)?;
    Ok(o)
}

// ------------------------------------------------------------- rank report

pub const RANK_COLUMNS: [&str; 9] = [
    "model",
    "space",
    "activation",
    "latent_dim",
    "m",
    "min_rank",
    "median_rank",
    "max_rank",
    "full_rank_fraction",
];

pub fn cmd_rank_report(cfg: &RunConfig) -> CliResult<Outcome> {
    let paths = checkpoint_paths(cfg, "models")?;
    let m = cfg.positive("m")?;
    let from_data = cfg.choice("points", &["prior", "data"])? == "data";
    let rel_tol = cfg.f64("rel_tol")?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(CliError::Config("rel_tol must be in (0, 1)".into()));
    }
    let seed = cfg.u64("seed")?;
    let out = cfg.path("out")?;
    let spec = data_spec(cfg)?;

    let models = paths.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
    let data = if from_data { Some(spec.load()?) } else { None };
    let mut rows = Vec::new();
    let mut o = Outcome::default();
    for (mi, lm) in models.iter().enumerate() {
        let mut rng = SeededRng::new(seed).derive(mi as u64);
        let spaces: Vec<Space<'_>> = match &data {
            Some(ds) => {
                check_data_dim(lm, ds)?;
                let idx = rng.sample_indices(ds.len(), m.min(ds.len()));
                lm.model.spaces(&ds.samples.select_rows(&idx))?
            }
            None => prior_spaces(&lm.model, m, &mut rng)?,
        };
        for sp in spaces {
            let r = jacobian_rank_report(&*sp.decoder, &sp.codes, rel_tol)?;
            let dim = sp.codes.cols();
            let full = r.ranks.iter().filter(|&&k| k == dim).count() as f64 / r.ranks.len() as f64;
            o.messages.push(format!(
                "{} {}: rank min {} median {} max {} of {dim}",
                lm.id, sp.name, r.min, r.median, r.max
            ));
            rows.push(vec![
                lm.id.clone(),
                sp.name.to_string(),
                lm.config.activation.name(),
                dim.to_string(),
                r.ranks.len().to_string(),
                r.min.to_string(),
                r.median.to_string(),
                r.max.to_string(),
                fmt_f64(full),
            ]);
        }
    }
    write_table(&out, &RANK_COLUMNS, &rows, cfg, Map::new())?;
    o.written.extend([out.clone(), out.with_extension("json")]);
    Ok(o)
}

/// Latent points drawn from the standard normal prior; the other half of a
/// disentangled code is held at zero.
fn prior_spaces<'a>(model: &'a Model, m: usize, rng: &mut SeededRng) -> CliResult<Vec<Space<'a>>> {
    Ok(match model {
        Model::Vae(v) => vec![Space {
            name: "vae",
            codes: rng.normal_matrix(m, v.latent_dim()),
            decoder: Box::new(&v.decoder),
        }],
        Model::Disentangled(d) => vec![
            Space {
                name: "specified",
                codes: rng.normal_matrix(m, d.specified_dim()),
                decoder: Box::new(d.specified_decoder()),
            },
            Space {
                name: "unspecified",
                codes: rng.normal_matrix(m, d.unspecified_dim()),
                decoder: Box::new(d.unspecified_decoder(&vec![0.0; d.specified_dim()])?),
            },
        ],
    })
}

// ---------------------------------------------------------------- geodesic

pub fn cmd_geodesic(cfg: &RunConfig) -> CliResult<Outcome> {
    let ck = cfg.path("checkpoint")?;
    let space = cfg.choice("space", &["auto", "vae", "specified", "unspecified"])?;
    let opts = geodesic_options(cfg)?;
    let (a, b) = (cfg.f64_list("a")?, cfg.f64_list("b")?);
    let by_coords = !a.is_empty() || !b.is_empty();
    if by_coords && (cfg.is_set("index_a") || cfg.is_set("index_b")) {
        return Err(CliError::Config("give latent coordinates a/b or sample indices, not both".into()));
    }
    if !by_coords && !(cfg.is_set("index_a") && cfg.is_set("index_b")) {
        return Err(CliError::Config("give a and b, or index_a and index_b".into()));
    }
    let out = cfg.path("out")?;
    let spec = data_spec(cfg)?;

    let lm = load_model(&ck)?;
    let (za, zb, map): (Vec<f64>, Vec<f64>, Box<dyn SmoothMap + '_>) = if by_coords {
        let map: Box<dyn SmoothMap + '_> = match (&lm.model, space) {
            (Model::Vae(m), "auto" | "vae") => Box::new(&m.decoder),
            (Model::Disentangled(m), "auto" | "specified") => Box::new(m.specified_decoder()),
            (Model::Disentangled(m), "unspecified") => {
                Box::new(m.unspecified_decoder(&vec![0.0; m.specified_dim()])?)
            }
            _ => return Err(CliError::Config(format!("space {space} does not fit this checkpoint"))),
        };
        if a.len() != map.in_dim() || b.len() != map.in_dim() {
            return Err(CliError::Config(format!(
                "a and b need {} coordinates, got {} and {}",
                map.in_dim(),
                a.len(),
                b.len()
            )));
        }
        (a, b, map)
    } else {
        let ds = spec.load()?;
        check_data_dim(&lm, &ds)?;
        let ia = sample_index(cfg, "index_a", ds.len())?.unwrap_or(0);
        let ib = sample_index(cfg, "index_b", ds.len())?.unwrap_or(0);
        let x = Matrix::from_rows(&[ds.samples.row(ia), ds.samples.row(ib)])?;
        match (&lm.model, space) {
            (Model::Vae(_), "auto" | "vae") | (Model::Disentangled(_), "auto" | "specified") => {
                endpoint_map(&lm.model, x.row(0), x.row(1))?
            }
            (Model::Disentangled(m), "unspecified") => {
                let c = m.encode(&x)?;
                (
                    c.unspecified.row(0).to_vec(),
                    c.unspecified.row(1).to_vec(),
                    Box::new(m.unspecified_decoder(c.specified.row(0))?),
                )
            }
            _ => return Err(CliError::Config(format!("space {space} does not fit this checkpoint"))),
        }
    };
    let curve = geodesic(&*map, &za, &zb, &opts)?;
    let mut o = Outcome::default();
    if !curve.converged {
        o.warnings
            .push(format!("geodesic hit max_iters={} before converging", opts.max_iters));
    }
    let chord = dist(&map.eval(&za), &map.eval(&zb));
    let straight = dist(&za, &zb);
    let mut columns = vec!["step".to_string()];
    columns.extend((0..za.len()).map(|j| format!("z{j}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| std::iter::once(i.to_string()).chain(p.iter().map(|v| fmt_f64(*v))).collect())
        .collect();
    let mut extra = Map::new();
    extra.insert("riemannian_distance".into(), json!(curve.length));
    extra.insert("energy".into(), json!(curve.energy));
    extra.insert("latent_euclidean".into(), json!(straight));
    extra.insert("ambient_chord".into(), json!(chord));
    extra.insert("iterations".into(), json!(curve.iterations));
    extra.insert("converged".into(), json!(curve.converged));
    write_table(&out, &columns, &rows, cfg, extra)?;
    o.messages.push(format!(
        "riemannian distance {} (latent euclidean {}, ambient chord {}), {} iterations",
        fmt_f64(curve.length),
        fmt_f64(straight),
        fmt_f64(chord),
        curve.iterations
    ));
    o.written.extend([out.clone(), out.with_extension("json")]);
    Ok(o)
}

// -------------------------------------------------------------------- data

fn write_split(out: &Path, train: crate::io::RawDigits, test: crate::io::RawDigits, o: &mut Outcome) -> CliResult<()> {
    let f = MnistFiles::in_dir(out);
    for (p, a) in [
        (f.train_images, &train.images),
        (f.train_labels, &train.labels),
        (f.test_images, &test.images),
        (f.test_labels, &test.labels),
    ] {
        write_idx(&p, a)?;
        o.written.push(p);
    }
    o.messages.push(format!(
        "wrote {} training and {} test images to {}",
        train.labels.data.len(),
        test.labels.data.len(),
        out.display()
    ));
    Ok(())
}

pub fn cmd_import_json(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = cfg.path("dir")?;
    let out = cfg.path("out")?;
    let (n_train, n_test, seed) = (cfg.usize("n_train")?, cfg.usize("n_test")?, cfg.u64("seed")?);
    let classes = read_digit_json(&dir)?;
    let (train, test) = balanced_split(&classes, n_train, n_test, seed)?;
    let mut o = Outcome::default();
    write_split(&out, train, test, &mut o)?;
    Ok(o)
}

pub fn cmd_subset(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = cfg.path("dir")?;
    let out = cfg.path("out")?;
    let (n_train, n_test, seed) = (cfg.usize("n_train")?, cfg.usize("n_test")?, cfg.u64("seed")?);
    let f = MnistFiles::in_dir(&dir);
    // draw from the official training and test files separately
    let train_pool = idx_classes(&read_idx(&f.train_images)?, &read_idx(&f.train_labels)?)?;
    let test_pool = idx_classes(&read_idx(&f.test_images)?, &read_idx(&f.test_labels)?)?;
    let (train, _) = balanced_split(&train_pool, n_train, 0, seed)?;
    let (_, test) = balanced_split(&test_pool, 0, n_test, seed.wrapping_add(1))?;
    let mut o = Outcome::default();
    write_split(&out, train, test, &mut o)?;
    Ok(o)
}

pub fn cmd_generate(cfg: &RunConfig) -> CliResult<Outcome> {
    let kind = ManifoldKind::parse(cfg.required("kind")?)?;
    let n = cfg.positive("n")?;
    let noise = cfg.f64("noise")?;
    let seed = cfg.u64("seed")?;
    let out = cfg.path("out")?;
    let m = synth_manifold(kind, n, noise, seed)?;
    write_dataset_csv(&out, &m.dataset)?;
    let mut o = Outcome::default();
    o.messages.push(format!("wrote {n} {} samples to {}", kind.name(), out.display()));
    o.written.push(out.clone());
    echo_config(&out, cfg, &mut o)?;
    Ok(o)
}
