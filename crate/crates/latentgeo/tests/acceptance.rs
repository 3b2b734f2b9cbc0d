//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`cargo test -p latentgeo --test acceptance`). The
//! two MNIST criteria train nine small models and take several minutes on one
//! core; set `ACCEPTANCE_SKIP_MNIST=1` to skip them. The process exits 0 even
//! when a criterion fails unless `ACCEPTANCE_STRICT=1` is set, so that the
//! report is always printed in full by `cargo test`.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use latentgeo::commands::Command;
use latentgeo::report::read_metric_csv;
use latentgeo_core::analysis::{
    kmedoids, normalized_margin, pairwise_f_score, residual_cross_correlation, DistanceMatrix, MetricKind,
};
use latentgeo_core::data::{great_circle, ManifoldOracle};
use latentgeo_core::geometry::{
    curve_energy, geodesic, graph_geodesic_matrix, principal_angles, riemannian_distance, tangent_basis,
    GeodesicOptions, LinearMap, SmoothMap,
};
use latentgeo_core::network::{Activation, FeedForwardNet};
use latentgeo_core::{Matrix, SeededRng};

type Check = Result<String, String>;

struct Suite {
    passed: usize,
    failed: usize,
    skipped: usize,
}

impl Suite {
    fn run(&mut self, id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let r = f();
        let t = start.elapsed();
        let (ok, detail) = match r {
            Ok(d) if t <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:.0} s budget", budget.as_secs_f64())),
            Err(d) => (false, d),
        };
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!(
            "{} [{id}] {title} ({:.1} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            t.as_secs_f64()
        );
    }

    fn skip(&mut self, id: &str, title: &str, why: &str) {
        self.skipped += 1;
        println!("SKIP [{id}] {title}: {why}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ------------------------------------------------------------------------

/// Relative error with a floor of 1e-3 on the magnitude, so entries that are
/// nearly zero are compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn jacobian_vs_central_differences() -> Check {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let nets = 24u64;
    for seed in 0..nets {
        let mut rng = SeededRng::new(1000 + seed);
        let act = if seed % 2 == 0 { Activation::ELU } else { Activation::Tanh };
        let din = 2 + seed as usize % 15;
        let net = FeedForwardNet::init(&[din, 32, 48, 20], act, Activation::Identity, &mut rng).unwrap();
        for _ in 0..3 {
            let z = rng.normal_vec(din);
            let j = net.jacobian(&z).unwrap();
            for c in 0..din {
                let (mut up, mut dn) = (z.clone(), z.clone());
                up[c] += H;
                dn[c] -= H;
                let (fu, fd) = (net.eval(&up), net.eval(&dn));
                for r in 0..20 {
                    worst = worst.max(rel_err(j.get(r, c), (fu[r] - fd[r]) / (2.0 * H)));
                }
            }
        }
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:.2e} >= 1e-5"))?;
    Ok(format!("{nets} ELU/tanh nets, max relative error {worst:.2e}"))
}

// 2 ------------------------------------------------------------------------

fn flat_space_oracle() -> Check {
    let mut rng = SeededRng::new(7);
    let a = LinearMap::new(rng.normal_matrix(64, 2));
    let z = Matrix::from_fn(150, 2, |_, _| rng.uniform_range(-1.0, 1.0));
    let decoded = Matrix::from_rows(&z.row_iter().map(|p| a.eval(p)).collect::<Vec<_>>()).unwrap();

    let d_e = DistanceMatrix::euclidean(&decoded);
    let d_r = graph_geodesic_matrix(&a, &z, 10).map_err(|e| e.to_string())?;
    let c_hat = residual_cross_correlation(&d_e, &d_r).map_err(|e| e.to_string())?;
    ensure(c_hat < 0.01, || format!("c_hat {c_hat} >= 0.01"))?;

    let mut worst_angle = 0.0f64;
    let bases: Vec<_> = (0..20).map(|i| tangent_basis(&decoded, i * 7, 10, 2).unwrap()).collect();
    for u in &bases {
        for v in &bases {
            let ang = principal_angles(u, v).map_err(|e| e.to_string())?;
            worst_angle = ang.into_iter().fold(worst_angle, f64::max);
        }
    }
    ensure(worst_angle < 1e-6, || format!("principal angle {worst_angle:e} rad"))?;

    let opts = GeodesicOptions::default();
    let mut worst_off = 0.0f64;
    for _ in 0..10 {
        let (p, q) = (rng.normal_vec(2), rng.normal_vec(2));
        let c = geodesic(&a, &p, &q, &opts).map_err(|e| e.to_string())?;
        let dir = [q[0] - p[0], q[1] - p[1]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        for pt in &c.points[1..opts.segments] {
            let off = ((pt[0] - p[0]) * dir[1] - (pt[1] - p[1]) * dir[0]).abs() / len;
            worst_off = worst_off.max(off);
        }
    }
    ensure(worst_off < 1e-6, || format!("geodesic interior off the chord by {worst_off:e}"))?;

    let fixture = LinearMap::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap());
    let d = riemannian_distance(&fixture, &[0.0, 0.0], &[1.0, 1.0], &opts).map_err(|e| e.to_string())?;
    let err = (d.value - 5f64.sqrt()).abs();
    ensure(err < 1e-8, || format!("sqrt(5) fixture off by {err:e}"))?;
    Ok(format!(
        "c_hat {c_hat:.2e}, max angle {worst_angle:.1e} rad, max off-chord {worst_off:.1e}, sqrt(5) error {err:.1e}"
    ))
}

// 3 ------------------------------------------------------------------------

fn curved_space_oracle() -> Check {
    let o = ManifoldOracle::sphere_chart();
    let opts = GeodesicOptions::default();
    let mut rng = SeededRng::new(2024);
    let band = 70f64.to_radians();
    let mut worst = 0.0f64;
    for pair in 0..50 {
        // (lat, lon) pairs off the chart seam at longitude ±π
        let (a, b) = loop {
            let mut p = || vec![rng.uniform_range(-band, band), rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI)];
            let (a, b) = (p(), p());
            if (a[1] - b[1]).abs() < 0.8 * std::f64::consts::PI {
                break (a, b);
            }
        };
        let truth = great_circle(&o.eval(&a), &o.eval(&b));
        let c = geodesic(&o, &a, &b, &opts).map_err(|e| e.to_string())?;
        let line: Vec<Vec<f64>> = (0..=opts.segments)
            .map(|i| {
                let t = i as f64 / opts.segments as f64;
                a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect()
            })
            .collect();
        let straight = curve_energy(&o, &line).map_err(|e| e.to_string())?.1;
        let rel = (c.length - truth).abs() / truth;
        worst = worst.max(rel);
        ensure(rel < 0.02, || format!("pair {pair}: length {} vs great circle {truth}", c.length))?;
        ensure(c.length <= straight, || {
            format!("pair {pair}: geodesic {} longer than the straight path {straight}", c.length)
        })?;
    }
    Ok(format!("50 pairs, worst relative error {:.3}%", 100.0 * worst))
}

// 4 ------------------------------------------------------------------------

fn c_hat_properties() -> Check {
    let mut rng = SeededRng::new(4);
    let pts = rng.normal_matrix(30, 5);
    let d = DistanceMatrix::euclidean(&pts);
    let same = residual_cross_correlation(&d, &d).map_err(|e| e.to_string())?;
    ensure(same == 0.0, || format!("c_hat(D, D) = {same}"))?;

    let other = DistanceMatrix::euclidean(&rng.normal_matrix(30, 5));
    let base = residual_cross_correlation(&d, &other).map_err(|e| e.to_string())?;
    let affine = DistanceMatrix::from_upper(
        30,
        MetricKind::RiemannianGraph,
        other.upper().iter().map(|v| 3.0 * v + 1.0).collect(),
    )
    .map_err(|e| e.to_string())?;
    let moved = residual_cross_correlation(&d, &affine).map_err(|e| e.to_string())?;
    ensure((moved - base).abs() < 1e-12, || format!("affine rescaling moved c_hat {base} -> {moved}"))?;
    let self_affine = DistanceMatrix::from_upper(
        30,
        MetricKind::RiemannianGraph,
        d.upper().iter().map(|v| 3.0 * v + 1.0).collect(),
    )
    .map_err(|e| e.to_string())?;
    let sa = residual_cross_correlation(&d, &self_affine).map_err(|e| e.to_string())?;
    ensure(sa.abs() < 1e-12, || format!("c_hat(D, 3D+1) = {sa}"))?;

    let v = [1.0, 2.0, 4.0];
    let e = DistanceMatrix::from_upper(3, MetricKind::Euclidean, v.to_vec()).unwrap();
    let anti = DistanceMatrix::from_upper(3, MetricKind::RiemannianGraph, v.iter().map(|x| 10.0 - x).collect()).unwrap();
    let c2 = residual_cross_correlation(&e, &anti).map_err(|e| e.to_string())?;
    ensure((c2 - 2.0).abs() < 1e-12, || format!("anticorrelated fixture gives {c2}"))?;
    Ok(format!("c_hat(D,D)=0, affine shift {:.1e}, anticorrelated {c2}", (moved - base).abs()))
}

// 5 ------------------------------------------------------------------------

fn margin_properties() -> Check {
    let line = |xs: &[f64]| Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap();
    let m = normalized_margin(&line(&[0.0, 1.0, -10.0]), &[0, 0, 1]).map_err(|e| e.to_string())?;
    ensure(m.margins[0] == Some(0.9), || format!("expected 0.9, got {:?}", m.margins[0]))?;
    let m = normalized_margin(&line(&[0.0, 2.0, -2.0]), &[0, 0, 1]).map_err(|e| e.to_string())?;
    ensure(m.margins[0] == Some(0.0), || format!("expected 0, got {:?}", m.margins[0]))?;

    let mut rng = SeededRng::new(5);
    let pts = rng.normal_matrix(40, 4);
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let q = latentgeo_core::numerics::svd(&rng.normal_matrix(4, 4)).unwrap().u;
    let shift = rng.normal_vec(4);
    let rotated = pts.matmul(&q).unwrap();
    let moved = Matrix::from_fn(40, 4, |i, j| rotated.get(i, j) + shift[j]);
    let a = normalized_margin(&pts, &labels).map_err(|e| e.to_string())?;
    let b = normalized_margin(&moved, &labels).map_err(|e| e.to_string())?;
    let worst = a
        .margins
        .iter()
        .zip(&b.margins)
        .map(|(x, y)| (x.unwrap() - y.unwrap()).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-10, || format!("isometry moved a margin by {worst:e}"))?;
    Ok(format!("closed forms exact, isometry deviation {worst:.1e}"))
}

// 6 ------------------------------------------------------------------------

fn brute_force(d: &DistanceMatrix, k: usize) -> (f64, Vec<usize>) {
    let n = d.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let med: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let c: f64 = (0..n).map(|i| med.iter().map(|&m| d.get(i, m)).fold(f64::INFINITY, f64::min)).sum();
        if c < best.0 {
            best = (c, med);
        }
    }
    best
}

fn clustering_oracle() -> Check {
    let instances = 100u64;
    for seed in 0..instances {
        // two far-apart triples
        let mut rng = SeededRng::new(seed);
        let pts = Matrix::from_fn(6, 2, |i, _| if i < 3 { 0.0 } else { 20.0 } + rng.normal());
        let d = DistanceMatrix::euclidean(&pts);
        let r = kmedoids(&d, 2, seed, 100).map_err(|e| e.to_string())?;
        let (best, mut med) = brute_force(&d, 2);
        let mut got = r.medoids.clone();
        got.sort_unstable();
        med.sort_unstable();
        ensure(got == med && (r.cost - best).abs() < 1e-12, || {
            format!("instance {seed}: medoids {got:?} cost {} vs optimal {med:?} cost {best}", r.cost)
        })?;
    }
    let labels = [0, 0, 1, 1, 2, 2];
    let f = pairwise_f_score(&[5, 5, 3, 3, 9, 9], &labels).map_err(|e| e.to_string())?;
    ensure(f == 100.0, || format!("perfect assignment scores {f}"))?;
    Ok(format!("{instances} instances match exhaustive search, perfect F = {f}"))
}

// 7, 8 ---------------------------------------------------------------------

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> PathBuf {
    workspace_root().join("data/mnist")
}

fn run(cmd: Command, settings: &[String]) -> Result<(), String> {
    let cfg = cmd.resolve(None, settings).map_err(|e| e.to_string())?;
    cmd.run(&cfg).map(|_| ()).map_err(|e| format!("{}: {e}", cmd.name()))
}

fn s(v: impl Into<String>) -> String {
    v.into()
}

/// Per-seed numbers for the MNIST comparison.
struct DirectionRun {
    c_vae: f64,
    c_spec: f64,
    curv_vae: f64,
    curv_spec: f64,
    f_euclid: f64,
    f_riem: f64,
    margin_spec: f64,
    margin_unspec: f64,
}

fn direction_run(seed: u64, work: &Path) -> Result<DirectionRun, String> {
    let data = format!("data.dir={}", mnist_dir().display());
    let out = work.join(format!("seed{seed}"));
    run(
        Command::Train,
        &[s("model=both"), format!("seed={seed}"), format!("out={}", out.display()), data.clone()],
    )?;
    let report = out.join("metrics.csv");
    run(
        Command::Metrics,
        &[
            format!("models={},{}", out.join("vae.ckpt").display(), out.join("disentangled.ckpt").display()),
            format!("seed={seed}"),
            format!("out={}", report.display()),
            data,
        ],
    )?;
    let rows = read_metric_csv(&report).map_err(|e| e.to_string())?;
    // numeric columns start at n_points: [n, k, c_hat, margin, curvature, f_e, f_r, ...]
    let get = |space: &str| {
        rows.iter()
            .find(|r| r.1 == space)
            .map(|r| r.2.clone())
            .ok_or_else(|| format!("no {space} row"))
    };
    let (vae, spec, unspec) = (get("vae")?, get("specified")?, get("unspecified")?);
    Ok(DirectionRun {
        c_vae: vae[2],
        c_spec: spec[2],
        curv_vae: vae[4],
        curv_spec: spec[4],
        f_euclid: spec[5],
        f_riem: spec[6],
        margin_spec: spec[3],
        margin_unspec: unspec[3],
    })
}

fn majority(votes: &[bool]) -> bool {
    2 * votes.iter().filter(|v| **v).count() > votes.len()
}

fn paper_direction(suite: &mut Suite, work: &Path) {
    let budget = Duration::from_secs(30 * 60);
    let start = Instant::now();
    let runs: Result<Vec<DirectionRun>, String> = (0..3).map(|seed| direction_run(seed, work)).collect();
    let elapsed = start.elapsed();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => {
            suite.run("7", "MNIST direction run", budget, || Err(e));
            return;
        }
    };
    let show = |f: &dyn Fn(&DirectionRun) -> String| runs.iter().map(f).collect::<Vec<_>>().join(" | ");
    let subs: [(&str, &str, Vec<bool>, String); 4] = [
        (
            "7a",
            "c_hat(specified) > c_hat(vae)",
            runs.iter().map(|r| r.c_spec > r.c_vae).collect(),
            show(&|r| format!("{:.4} vs {:.4}", r.c_spec, r.c_vae)),
        ),
        (
            "7b",
            "curvature(specified) > curvature(vae)",
            runs.iter().map(|r| r.curv_spec > r.curv_vae).collect(),
            show(&|r| format!("{:.2} vs {:.2} deg", r.curv_spec, r.curv_vae)),
        ),
        (
            "7c",
            "F riemannian >= F euclidean in the specified space",
            runs.iter().map(|r| r.f_riem >= r.f_euclid).collect(),
            show(&|r| format!("{:.2} vs {:.2}", r.f_riem, r.f_euclid)),
        ),
        (
            "7d",
            "specified margin in (0,1) and above unspecified margin",
            runs.iter()
                .map(|r| r.margin_spec > 0.0 && r.margin_spec < 1.0 && r.margin_spec > r.margin_unspec)
                .collect(),
            show(&|r| format!("{:.4} vs {:.4}", r.margin_spec, r.margin_unspec)),
        ),
    ];
    let mut all = true;
    for (id, title, votes, detail) in subs {
        let ok = if id == "7d" { votes.iter().all(|v| *v) } else { majority(&votes) };
        all &= ok;
        suite.run(id, title, Duration::MAX, || {
            let msg = format!("{}/3 seeds [{detail}]", votes.iter().filter(|v| **v).count());
            if ok {
                Ok(msg)
            } else {
                Err(msg)
            }
        });
    }
    suite.run("7", "MNIST direction run (3 seeds, majority vote)", budget, || {
        let msg = format!("train + metrics took {:.0} s", elapsed.as_secs_f64());
        if all {
            Ok(msg)
        } else {
            Err(format!("{msg}; see 7a-7d"))
        }
    });
}

fn median_rank(csv: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(csv).map_err(|e| e.to_string())?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rec = r.records().next().ok_or("empty rank report")?.map_err(|e| e.to_string())?;
    rec[6].parse().map_err(|_| format!("bad median {:?}", &rec[6]))
}

fn rank_direction(work: &Path) -> Check {
    let data = format!("data.dir={}", mnist_dir().display());
    let mut votes = Vec::new();
    let mut detail = Vec::new();
    for seed in 0..3u64 {
        let mut med = [0.0; 2];
        for (i, act) in ["elu", "relu"].iter().enumerate() {
            let out = work.join(format!("rank_{act}_{seed}"));
            run(
                Command::Train,
                &[
                    s("model=vae"),
                    format!("activation={act}"),
                    // a hidden layer as narrow as the latent space, so the
                    // rank is bounded by the number of active units there
                    s("decoder_hidden=16,256"),
                    format!("seed={seed}"),
                    format!("out={}", out.display()),
                    data.clone(),
                ],
            )?;
            let csv = out.join("rank.csv");
            run(
                Command::RankReport,
                &[
                    format!("models={}", out.join("vae.ckpt").display()),
                    s("points=data"),
                    s("data.split=test"),
                    format!("seed={seed}"),
                    format!("out={}", csv.display()),
                    data.clone(),
                ],
            )?;
            med[i] = median_rank(&csv)?;
        }
        votes.push(med[0] == 16.0 && med[1] < 16.0);
        detail.push(format!("elu {} relu {}", med[0], med[1]));
    }
    let msg = format!("median ranks per seed: {}", detail.join(" | "));
    if majority(&votes) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 9 ------------------------------------------------------------------------

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Process::new(env!("CARGO_BIN_EXE_latentgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let data = ["data=csv", "data.path=sphere.csv"];
    cli(dir, &["data", "generate", "kind=sphere_chart", "n=120", "seed=3", "out=sphere.csv"])?;
    let small = [
        "epochs=3",
        "batch_size=16",
        "latent_dim=2",
        "specified_dim=2",
        "unspecified_dim=2",
        "encoder_hidden=16",
        "decoder_hidden=16",
        "seed=11",
        "out=models",
    ];
    cli(dir, &[&["train"][..], &small, &data].concat())?;
    let models = "models=models/vae.ckpt,models/disentangled.ckpt";
    cli(dir, &[&["metrics", models, "k_neighbors=8", "curvature.k=8", "out=metrics.csv"][..], &data].concat())?;
    cli(dir, &[&["interpolate", "checkpoint=models/disentangled.ckpt", "n=6", "out=interp.pgm"][..], &data].concat())?;
    cli(dir, &[&["synthesize", "checkpoint=models/disentangled.ckpt", "n=5", "out=synth.pgm"][..], &data].concat())?;
    cli(dir, &["rank-report", models, "m=20", "out=rank.csv"])?;
    cli(dir, &["geodesic", "checkpoint=models/vae.ckpt", "a=0.1,0.2", "b=-0.5,0.9", "out=geo.csv"])?;
    Ok(())
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure(fa == fb, || format!("different file sets {fa:?} vs {fb:?}"))?;
    for f in &fa {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{} differs between runs", f.display()))?;
    }
    let kinds = |ext: &str| fa.iter().filter(|f| f.extension().is_some_and(|e| e == ext)).count();
    Ok(format!(
        "{} files identical across two runs ({} csv, {} pgm, {} checkpoints)",
        fa.len(),
        kinds("csv"),
        kinds("pgm"),
        kinds("ckpt")
    ))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply here
    let mut suite = Suite {
        passed: 0,
        failed: 0,
        skipped: 0,
    };
    let secs = Duration::from_secs;
    suite.run("1", "decoder Jacobian matches central differences", secs(10), jacobian_vs_central_differences);
    suite.run("2", "flat-space oracle", secs(5), flat_space_oracle);
    suite.run("3", "sphere-chart geodesics vs great circles", secs(60), curved_space_oracle);
    suite.run("4", "residual cross-correlation properties", secs(1), c_hat_properties);
    suite.run("5", "normalized margin fixtures", secs(1), margin_properties);
    suite.run("6", "k-medoids vs exhaustive search", secs(5), clustering_oracle);

    let skip_mnist = std::env::var_os("ACCEPTANCE_SKIP_MNIST").is_some();
    let have_mnist = mnist_dir().join("train-images-idx3-ubyte").exists();
    if skip_mnist || !have_mnist {
        let why = if skip_mnist {
            "ACCEPTANCE_SKIP_MNIST is set".to_string()
        } else {
            format!("no MNIST files in {}", mnist_dir().display())
        };
        suite.skip("7", "MNIST direction run", &why);
        suite.skip("8", "Jacobian rank ELU vs ReLU", &why);
    } else {
        let work = tempfile::tempdir().expect("temp dir");
        paper_direction(&mut suite, work.path());
        suite.run("8", "Jacobian rank ELU vs ReLU (3 seeds)", secs(15 * 60), || rank_direction(work.path()));
    }
    suite.run("9", "byte-identical reruns of every command", secs(120), determinism);

    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        suite.passed, suite.failed, suite.skipped
    );
    if suite.failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
