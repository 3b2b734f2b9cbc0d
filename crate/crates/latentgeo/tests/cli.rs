//! End-to-end command tests: exit codes, fixtures with known geometry, file
//! formats.

use std::path::Path;
use std::process::{Command as Process, Output};

use latentgeo::commands::Command;
use latentgeo::io::{read_dataset_csv, save_checkpoint, write_distance_csv};
use latentgeo::report::read_metric_csv;
use latentgeo_core::analysis::DistanceMatrix;
use latentgeo_core::data::{synth_manifold, ManifoldKind};
use latentgeo_core::models::{TrainConfig, VaeModel};
use latentgeo_core::network::{Activation, FeedForwardNet, Layer};
use latentgeo_core::Matrix;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Process::new(env!("CARGO_BIN_EXE_latentgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn linear(weight: Matrix) -> FeedForwardNet {
    let bias = vec![0.0; weight.rows()];
    FeedForwardNet::new(vec![Layer {
        weight,
        bias,
        activation: Activation::Identity,
    }])
    .unwrap()
}

/// A VAE whose encoder is the exact inverse chart of the synthetic plane and
/// whose decoder is the chart itself.
fn write_linear_plane_model(dir: &Path) {
    let m = synth_manifold(ManifoldKind::Plane, 10, 0.0, 0).unwrap();
    let q = m.oracle.chart_jacobian(&[0.0, 0.0]);
    let qt = q.transpose();
    // posterior means Qᵀx, log-variances 0
    let enc = Matrix::from_fn(4, q.rows(), |i, j| if i < 2 { qt.get(i, j) } else { 0.0 });
    let vae = VaeModel::new(linear(enc), linear(q)).unwrap();
    let cfg = TrainConfig {
        latent_dim: 2,
        ..TrainConfig::default()
    };
    save_checkpoint(&dir.join("linear.ckpt"), &vae.to_checkpoint(&cfg, 0)).unwrap();
}

#[test]
fn config_errors_exit_2_before_any_output() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["train", "latent_dim=0", "data=plane", "out=o"][..],
        &["train", "epochs=0", "data=plane", "out=o"],
        &["train", "no_such_key=1", "out=o"],
        &["train", "model=gan", "out=o"],
        &["metrics", "out=o/m.csv"],
        &["rank-report", "models=x.ckpt", "m=0", "out=o/r.csv"],
        &["interpolate", "checkpoint=x.ckpt", "n=1", "out=o/i.pgm"],
        &["train", "stray-argument"],
    ] {
        let o = bin(d.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!d.path().join("o").exists());
}

#[test]
fn io_problems_exit_3() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["metrics", "models=missing.ckpt", "data=plane"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing checkpoint"));
    std::fs::write(d.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&bin(d.path(), &["metrics", "models=junk.ckpt", "data=plane"])), 3);
    assert_eq!(code(&bin(d.path(), &["train", "data.dir=nowhere", "epochs=1"])), 3);
    assert_eq!(code(&bin(d.path(), &["train", "--config", "absent.cfg"])), 3);
}

#[test]
fn divergence_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(
        d.path(),
        &["train", "model=vae", "data=sphere_chart", "data.n=40", "lr=1e300", "epochs=3", "latent_dim=2"],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_and_override_precedence() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("run.cfg"),
        "# small run\ndata = sphere_chart\ndata.n = 60\nepochs = 2\nlatent_dim = 2\nencoder_hidden = 8\ndecoder_hidden = 8\nmodel = vae\nout = from_file\n",
    )
    .unwrap();
    let o = bin(d.path(), &["train", "--config", "run.cfg", "out=from_cli"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("from_cli/vae.ckpt").exists());
    assert!(!d.path().join("from_file").exists());
    let echo = std::fs::read_to_string(d.path().join("from_cli/train.cfg")).unwrap();
    assert!(echo.contains("epochs=2\n") && echo.contains("out=from_cli\n") && echo.contains("seed=0\n"));
    let hist = std::fs::read_to_string(d.path().join("from_cli/vae_history.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("epoch,total,recon,kl,gen,disc"));
    assert_eq!(hist.lines().count(), 3);
}

#[test]
fn keys_listing_names_every_key() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["metrics", "--keys"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for k in Command::Metrics.schema() {
        assert!(text.contains(k.name), "{}", k.name);
    }
}

#[test]
fn linear_fixture_metrics_are_flat() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(
        d.path(),
        &["metrics", "models=linear.ckpt", "data=plane", "data.n=200", "out=m.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_metric_csv(&d.path().join("m.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let (model, space, v) = &rows[0];
    assert_eq!((model.as_str(), space.as_str()), ("linear", "vae"));
    assert!(v[2] < 0.01, "c_hat {}", v[2]);
    assert!(v[4] < 2.0, "curvature {}", v[4]);
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["models"], "linear.ckpt");
    assert_eq!(side["columns"][4], "c_hat");
}

fn interpolation_latents(dir: &Path, csv: &str) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let ds = read_csv_rows(&dir.join(csv));
    let pick = |mode: &str| ds.iter().filter(|r| r[0] == mode).map(|r| r[2..].iter().map(|v| v.parse().unwrap()).collect()).collect();
    (pick("euclidean"), pick("riemannian"))
}

fn read_csv_rows(p: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn linear_fixture_interpolation_rows_agree() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(
        d.path(),
        &["interpolate", "checkpoint=linear.ckpt", "data=plane", "data.n=50", "n=7", "out=i.pgm"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (e, r) = interpolation_latents(d.path(), "i.csv");
    assert_eq!((e.len(), r.len()), (7, 7));
    for (a, b) in e.iter().zip(&r) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6);
        }
    }
    let pgm = std::fs::read(d.path().join("i.pgm")).unwrap();
    // 64-d samples are shown as 8x8 cells: 7 columns and 2 rows with separators
    assert!(pgm.starts_with(b"P5\n62 17\n255\n"));
}

#[test]
fn two_step_interpolation_shows_the_endpoints_twice() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(
        d.path(),
        &["interpolate", "checkpoint=linear.ckpt", "data=plane", "data.n=50", "n=2", "index_a=3", "index_b=9", "out=i.pgm"],
    );
    assert_eq!(code(&o), 0);
    let (e, r) = interpolation_latents(d.path(), "i.csv");
    assert_eq!(e, r);
    let pgm = std::fs::read(d.path().join("i.pgm")).unwrap();
    let px = &pgm[pgm.len() - 17 * 17..];
    let (top, bottom) = (&px[..8 * 17], &px[9 * 17..]);
    assert_eq!(top, bottom);
}

#[test]
fn synthesize_needs_a_disentangled_model_and_is_seeded() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(d.path(), &["synthesize", "checkpoint=linear.ckpt", "data=plane", "data.n=50"]);
    assert_eq!(code(&o), 2);
    let train = [
        "train", "model=disentangled", "data=sphere_chart", "data.n=60", "epochs=2", "specified_dim=2",
        "unspecified_dim=3", "encoder_hidden=8", "decoder_hidden=8", "out=m",
    ];
    assert_eq!(code(&bin(d.path(), &train)), 0);
    for (out, scale) in [("a.pgm", "1"), ("b.pgm", "1"), ("z.pgm", "0")] {
        let args = ["synthesize", "checkpoint=m/disentangled.ckpt", "data=sphere_chart", "data.n=60", "n=4", "seed=5"];
        let o = bin(d.path(), &[&args[..], &[&format!("out={out}"), &format!("z_scale={scale}")]].concat());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("a.pgm"), read("b.pgm"));
    assert_ne!(read("a.pgm"), read("z.pgm"));
    // 3-d samples become 1x3 cells; two classes, four columns
    assert!(read("z.pgm").starts_with(b"P5\n15 3\n255\n"));
}

#[test]
fn rank_report_on_a_linear_fixture() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(d.path(), &["rank-report", "models=linear.ckpt", "m=10", "out=r.csv"]);
    assert_eq!(code(&o), 0);
    let rows = read_csv_rows(&d.path().join("r.csv"));
    // the activation column echoes the checkpoint's training config
    assert_eq!(rows[0][1..], ["vae", "elu", "2", "10", "2", "2", "2", "1"]);
}

#[test]
fn geodesic_command_reports_the_linear_distance() {
    let d = tempfile::tempdir().unwrap();
    write_linear_plane_model(d.path());
    let o = bin(d.path(), &["geodesic", "checkpoint=linear.ckpt", "a=0,0", "b=3,4", "out=g.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("g.json")).unwrap()).unwrap();
    // the plane chart is an isometry
    assert!((side["riemannian_distance"].as_f64().unwrap() - 5.0).abs() < 1e-8);
    assert_eq!(code(&bin(d.path(), &["geodesic", "checkpoint=linear.ckpt", "a=0,0,1", "b=3,4"])), 2);
    assert_eq!(code(&bin(d.path(), &["geodesic", "checkpoint=linear.ckpt", "a=0,0"])), 2);
}

#[test]
fn generated_csv_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["data", "generate", "kind=circle", "n=30", "noise=0.01", "seed=2", "out=c.csv"]);
    assert_eq!(code(&o), 0);
    let back = read_dataset_csv(&d.path().join("c.csv")).unwrap();
    let m = synth_manifold(ManifoldKind::Circle, 30, 0.01, 2).unwrap();
    assert_eq!(back.samples, m.dataset.samples);
    assert_eq!(back.labels, m.dataset.labels);
}

#[test]
fn json_digits_import_is_balanced() {
    let d = tempfile::tempdir().unwrap();
    let src = d.path().join("digits");
    std::fs::create_dir(&src).unwrap();
    for digit in 0..10 {
        // five images per class, pixel value encodes the class
        let v = digit as f64 / 10.0;
        let data: Vec<f64> = (0..5 * 784).map(|i| if i % 784 == 0 { v } else { 0.0 }).collect();
        std::fs::write(src.join(format!("{digit}.json")), serde_json::json!({ "data": data }).to_string()).unwrap();
    }
    let o = bin(d.path(), &["data", "import-json", "dir=digits", "out=mnist", "n_train=30", "n_test=20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels = std::fs::read(d.path().join("mnist/train-labels-idx1-ubyte")).unwrap();
    assert_eq!(&labels[8..18], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    let imgs = std::fs::read(d.path().join("mnist/t10k-images-idx3-ubyte")).unwrap();
    assert_eq!(imgs.len(), 16 + 20 * 784);
    assert_eq!(imgs[16 + 3 * 784], (0.3f64 * 255.0).round() as u8);
    // too few images per class
    let o = bin(d.path(), &["data", "import-json", "dir=digits", "out=x", "n_train=40", "n_test=20"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn distance_csv_has_point_id_header() {
    let d = tempfile::tempdir().unwrap();
    let m = DistanceMatrix::euclidean(&Matrix::from_rows(&[[0.0], [3.0], [4.0]]).unwrap());
    let p = d.path().join("d.csv");
    write_distance_csv(&p, &m).unwrap();
    assert_eq!(std::fs::read_to_string(p).unwrap(), "euclidean,0,1,2\n0,0,3,4\n1,3,0,1\n2,4,1,0\n");
}
