//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Set `PATCHMARK_ACCEPTANCE_DIR` to keep the run artifacts.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{array, Array3, Array4};
use patchmark_core::eval::{project_centroid, project_nearest, EvalReport};
use patchmark_core::geometry::{sample_surface, Point3, RigidTransform};
use patchmark_core::network::{backward, forward, init_params, ArchConfig, Mode, ModelParams};
use patchmark_core::pipeline::{AblationRow, Pipeline, PipelineConfig, RunOptions};
use patchmark_core::registration::{align_subject, RegistrationConfig};
use patchmark_core::rng::stream;
use patchmark_core::schema::EAR_LANDMARKS;
use patchmark_core::synthetic::{canonical_face, generate_subject, FaceGenParams};
use patchmark_core::training::{composite_loss, EarlyStopping, PlateauScheduler};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

struct Suite {
    results: Vec<(usize, &'static str, Outcome, Duration)>,
    root: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

impl Suite {
    fn run(&mut self, id: usize, name: &'static str, f: impl FnOnce(&Path) -> Outcome) {
        let t = Instant::now();
        let outcome = f(&self.root);
        let elapsed = t.elapsed();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("[{tag}] {id:>2}. {name} ({:.1} s): {detail}", elapsed.as_secs_f64());
        self.results.push((id, name, outcome, elapsed));
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn within_budget(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

/// Tiny network of the gradient check: m=2, n=3, K=20.
fn gradient_check() -> Outcome {
    let t = Instant::now();
    let arch = ArchConfig {
        filters: vec![4, 4, 4],
        pool_factors: vec![2, 5, 2],
        mlp: vec![8, 8, 3],
        ..ArchConfig::default()
    };
    let mut params: ModelParams<f64> = init_params(&arch, 20, 5).map_err(fail)?;
    for t in params.tensors_mut() {
        for (i, v) in t.iter_mut().enumerate() {
            *v += 0.01 * ((i % 5) as f64 - 1.5);
        }
    }
    let mut rng = stream(17, &[1]);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x = Array4::from_shape_simple_fn((2, 3, 20, 3), || normal.sample(&mut rng));
    let target = Array3::from_shape_simple_fn((2, 3, 3), || 2.0 * normal.sample(&mut rng));
    let seed = 3;
    let loss = |p: &ModelParams<f64>| -> Result<f64, String> {
        let pred = forward(p, x.view(), Mode::Train, seed).map_err(fail)?.predictions;
        Ok(composite_loss(pred.view(), target.view(), 0.6, 0.4).map_err(fail)?.0.total)
    };
    let trace = forward(&params, x.view(), Mode::Train, seed).map_err(fail)?;
    let (_, d_pred) = composite_loss(trace.predictions.view(), target.view(), 0.6, 0.4).map_err(fail)?;
    let grads = backward(&trace, &params, &d_pred).map_err(fail)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let layout = params.layout();
    let h = 1e-5;
    let (mut checked, mut worst, mut bad) = (0usize, 0.0f64, Vec::new());
    for ti in 0..analytic.len() {
        for i in 0..analytic[ti].len() {
            let orig = params.tensors()[ti][i];
            params.tensors_mut()[ti][i] = orig + h;
            let up = loss(&params)?;
            params.tensors_mut()[ti][i] = orig - h;
            let down = loss(&params)?;
            params.tensors_mut()[ti][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti][i];
            let err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            if err > 1e-6 {
                worst = worst.max(err / scale);
            }
            if err > 1e-6 && err > 1e-3 * scale {
                bad.push(format!("{}[{i}] analytic {a:.6e} numeric {numeric:.6e}", layout[ti].0));
            }
            checked += 1;
        }
    }
    let elapsed = t.elapsed();
    check(
        bad.is_empty() && within_budget(elapsed, 60.0),
        format!(
            "{checked} parameters, worst relative error above the 1e-6 floor {worst:.2e}, {} mismatches{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn registration_recovery() -> Outcome {
    let t = Instant::now();
    let params = FaceGenParams {
        noise: 0.0,
        max_rotation_deg: 20.0,
        max_translation_mm: 30.0,
        ..FaceGenParams::default()
    };
    let (canonical, _) = canonical_face(&params).map_err(fail)?;
    let reference = sample_surface(&canonical, params.reference_points, params.seed).map_err(fail)?;
    let mut ok = 0;
    let mut worst = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for i in 0..20 {
        let s = generate_subject(&params, i).map_err(fail)?;
        let cfg = RegistrationConfig {
            seed: i as u64,
            ..RegistrationConfig::default()
        };
        match align_subject(&s.mesh, &reference, &params.roi(), &cfg) {
            Ok(a) => {
                let (rot, trans) = a.transform.difference(&s.pose.inverse());
                worst = (worst.0.max(rot), worst.1.max(trans));
                if rot < 1.0 && trans < 1.0 {
                    ok += 1;
                } else {
                    failures.push(format!("#{i}: {rot:.2} deg / {trans:.2} mm"));
                }
            }
            Err(e) => failures.push(format!("#{i}: {e}")),
        }
    }
    let elapsed = t.elapsed();
    check(
        ok >= 19 && within_budget(elapsed, 300.0),
        format!(
            "{ok}/20 within 1 deg and 1 mm; worst {:.3} deg, {:.3} mm{}",
            worst.0,
            worst.1,
            if failures.is_empty() { String::new() } else { format!("; misses: {}", failures.join(", ")) }
        ),
    )
}

fn shape_law() -> Outcome {
    let arch = ArchConfig::default();
    let params: ModelParams<f32> = init_params(&arch, 1000, 9).map_err(fail)?;
    let mut rng = stream(9, &[2]);
    let x = Array4::from_shape_simple_fn((2, 4, 1000, 3), || rng.random_range(-10.0f32..10.0));
    let trace = forward(&params, x.view(), Mode::Eval, 0).map_err(fail)?;
    let mut worst = 0.0f64;
    for block in &trace.attention {
        for subject in block {
            let sum: f64 = subject.weights.iter().map(|&w| f64::from(w)).sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    check(
        trace.pooled_points == [200, 40, 10] && trace.predictions.dim() == (2, 4, 3) && worst < 1e-6,
        format!(
            "points per patch {:?}, output {:?}, max |sum(attention) - 1| = {worst:.1e}",
            trace.pooled_points,
            trace.predictions.dim()
        ),
    )
}

fn loss_algebra() -> Outcome {
    let gt = array![[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]];
    let pred = array![[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]];
    let (hand, _) = composite_loss(pred.view(), gt.view(), 0.6, 0.4).map_err(fail)?;

    let mut rng = stream(5, &[3]);
    let gt = Array3::from_shape_simple_fn((3, 6, 3), || rng.random_range(-50.0..50.0));
    let mut moved = gt.clone();
    for s in 0..3 {
        let t = RigidTransform::from_axis_angle(
            &nalgebra::Vector3::new(0.2 + s as f64, -1.0, 0.5),
            0.4 + 0.3 * s as f64,
            nalgebra::Vector3::new(12.0, -7.0, 3.5 * s as f64),
        );
        for k in 0..6 {
            let p = t.apply_point(&Point3::new(gt[[s, k, 0]], gt[[s, k, 1]], gt[[s, k, 2]]));
            moved[[s, k, 0]] = p.x;
            moved[[s, k, 1]] = p.y;
            moved[[s, k, 2]] = p.z;
        }
    }
    let (rigid, _) = composite_loss(moved.view(), gt.view(), 0.6, 0.4).map_err(fail)?;
    check(
        hand.total == 0.5 && rigid.distance < 1e-9,
        format!("hand example L_total = {}, distance term under rigid motion = {:.1e}", hand.total, rigid.distance),
    )
}

fn matrix_identities(report: &EvalReport) -> Result<(), String> {
    let v = &report.distance_matrix.values;
    let n = v.len();
    for i in 0..n {
        if v[i][i] != 0.0 {
            return Err(format!("diagonal {i} is {}", v[i][i]));
        }
        for j in 0..n {
            if v[i][j] != v[j][i] {
                return Err(format!("asymmetric at ({i}, {j})"));
            }
        }
    }
    let (d, p) = (report.distance_matrix.mean, report.pointwise.overall.mean);
    if d > 2.0 * p {
        return Err(format!("off-diagonal mean {d:.3} > 2 x point-wise {p:.3}"));
    }
    Ok(())
}

fn metric_identities(reports: &[(String, EvalReport)]) -> Outcome {
    let mut rng = stream(6, &[4]);
    let params = FaceGenParams::default();
    let s = generate_subject(&params, 3).map_err(fail)?;
    let cloud = s.mesh.to_cloud().map_err(fail)?;
    let mut identical = true;
    for _ in 0..5 {
        let coords = s
            .landmarks
            .coords()
            .iter()
            .map(|p| p + nalgebra::Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let noisy = s.landmarks.with_coords(coords).map_err(fail)?;
        let a = project_nearest(&noisy, &cloud);
        let b = project_centroid(&noisy, &cloud, 1).map_err(fail)?;
        identical &= a.coords().iter().zip(b.coords()).all(|(p, q)| {
            p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits() && p.z.to_bits() == q.z.to_bits()
        });
    }
    if reports.is_empty() {
        return Err("no evaluated datasets available".into());
    }
    let mut problems = Vec::new();
    let mut ratio = 0.0f64;
    for (name, r) in reports {
        ratio = ratio.max(r.distance_matrix.mean / r.pointwise.overall.mean);
        if let Err(e) = matrix_identities(r) {
            problems.push(format!("{name}: {e}"));
        }
    }
    check(
        identical && problems.is_empty(),
        format!(
            "{} reports symmetric with zero diagonal, max distance/point-wise ratio {ratio:.3}; centroid(K=1) {} nearest{}",
            reports.len(),
            if identical { "==" } else { "!=" },
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

/// Configuration of the end-to-end learning run: 60 subjects, 5 folds, K=100
/// patches drawn from a 10,000-point surface resampling.
fn learning_config(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        output_dir: root.join("learning"),
        seed: Some(2024),
        ..PipelineConfig::default()
    };
    for o in [
        "dataset.subjects=60",
        r#"patch.strategy={"kind":"knn","k":100}"#,
        r#"patch.source={"kind":"resampled","points":10000}"#,
        "arch.dropout=0.0",
        "train.batch_size=1",
        "train.max_epochs=250",
        "train.folds=5",
        r#"ablation.variants=["baseline","no_ordering","no_attention"]"#,
        "ablation.max_folds=1",
    ] {
        cfg.apply_override(o).expect("valid override");
    }
    cfg
}

fn load_report(dir: &Path) -> Result<EvalReport, String> {
    EvalReport::load(dir.join("report.json")).map_err(fail)
}

fn learning_signal(root: &Path, reports: &mut Vec<(String, EvalReport)>) -> Outcome {
    let t = Instant::now();
    let cfg = learning_config(root);
    let pipeline = Pipeline::new(&cfg, RunOptions::default()).map_err(fail)?;
    pipeline.run_all().map_err(fail)?;
    let elapsed = t.elapsed();
    let eval = pipeline.stage_dir("evaluate");
    let net = load_report(&eval)?;
    let atlas = load_report(&eval.join("atlas"))?;
    let (np, ap) = (net.pointwise.overall.mean, atlas.pointwise.overall.mean);
    let (nd, ad) = (net.distance_matrix.mean, atlas.distance_matrix.mean);
    let improvement = 1.0 - np / ap;
    let ok = net.subjects == 60 && improvement >= 0.30 && nd < ad && within_budget(elapsed, 1200.0);
    reports.push(("learning/network".into(), net));
    reports.push(("learning/atlas".into(), atlas));
    check(
        ok,
        format!(
            "point-wise {np:.3} mm vs atlas {ap:.3} mm ({:.1}% lower, need >= 30%); distance-wise {nd:.3} vs {ad:.3} mm; {:.0} s of 1200 s",
            100.0 * improvement,
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation_ordering(root: &Path, reports: &mut Vec<(String, EvalReport)>) -> Outcome {
    let cfg = learning_config(root);
    let pipeline = Pipeline::new(&cfg, RunOptions::default()).map_err(fail)?;
    let report = pipeline.ablate().map_err(fail)?;
    let rows: Vec<AblationRow> =
        serde_json::from_str(&std::fs::read_to_string(report.dir.join("ablation.json")).map_err(fail)?).map_err(fail)?;
    for r in &rows {
        reports.push((format!("ablate/{}", r.variant), load_report(&report.dir.join(&r.variant).join("evaluate"))?));
    }
    let loss = |v: &str| rows.iter().find(|r| r.variant == v).map(|r| r.val_loss).ok_or(format!("variant {v} missing"));
    let base = loss("baseline")?;
    let no_order = loss("no_ordering")?;
    let no_att = loss("no_attention")?;
    let tabulated = std::fs::read_to_string(report.dir.join("ablation.csv")).map_err(fail)?.lines().count() == rows.len() + 1;
    check(
        no_order >= base && no_att >= base && tabulated,
        format!(
            "validation loss: baseline {base:.4}, no_ordering {no_order:.4}, no_attention {no_att:.4} ({} variants tabulated)",
            rows.len()
        ),
    )
}

fn scheduler_contracts() -> Outcome {
    let mut sched = PlateauScheduler::new(1e-3, 0.5, 8);
    let mut stop = EarlyStopping::new(30);
    let mut first_halving = None;
    let mut stopped = None;
    for epoch in 1..=100 {
        let lr = sched.step(1.0);
        if first_halving.is_none() && lr < 1e-3 {
            first_halving = Some(epoch);
        }
        if stop.step(1.0) {
            stopped = Some(epoch);
            break;
        }
    }
    check(
        first_halving == Some(9) && stopped == Some(31),
        format!(
            "LR halved after epoch {first_halving:?} (epoch 1 sets the best, then 8 stale epochs); stopped at epoch {stopped:?}"
        ),
    )
}

fn small_config(dir: PathBuf, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        output_dir: dir,
        seed: Some(seed),
        ..PipelineConfig::default()
    };
    for o in [
        "dataset.subjects=16",
        "dataset.generator.resolution=[140,105]",
        r#"patch.strategy={"kind":"knn","k":100}"#,
        r#"patch.source={"kind":"resampled","points":5000}"#,
        "arch.mlp=[128,128,3]",
        "arch.dropout=0.0",
        "train.batch_size=4",
        "train.max_epochs=40",
        "train.folds=2",
    ] {
        cfg.apply_override(o).expect("valid override");
    }
    cfg
}

fn files_under(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(root: &Path) -> Outcome {
    let mut dirs = Vec::new();
    for (run, jobs) in [("a", 1), ("b", 2)] {
        let cfg = small_config(root.join("determinism").join(run), 77);
        Pipeline::new(&cfg, RunOptions { jobs, force: true })
            .and_then(|p| p.run_all())
            .map_err(fail)?;
        dirs.push(cfg.output_dir);
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for (stage, ext) in [("predict", "csv"), ("train", "bin")] {
        let a = files_under(&dirs[0].join(stage), ext);
        let b = files_under(&dirs[1].join(stage), ext);
        if a.is_empty() || a != b {
            return Err(format!("{stage}: file sets differ or are empty ({} vs {})", a.len(), b.len()));
        }
        for f in &a {
            let x = std::fs::read(dirs[0].join(stage).join(f)).map_err(fail)?;
            let y = std::fs::read(dirs[1].join(stage).join(f)).map_err(fail)?;
            compared += 1;
            if x != y {
                differing.push(format!("{stage}/{}", f.display()));
            }
        }
    }
    check(
        differing.is_empty(),
        format!("{compared} prediction CSVs and checkpoints compared across two runs (1 and 2 jobs), {} differ", differing.len()),
    )
}

fn exclusion(root: &Path, reports: &mut Vec<(String, EvalReport)>) -> Outcome {
    let mut cfg = small_config(root.join("exclusion"), 91);
    cfg.dataset.generator.corrupt_ears = true;
    let full = Pipeline::new(&cfg, RunOptions::default()).map_err(fail)?;
    full.run_all().map_err(fail)?;
    let all = load_report(&full.stage_dir("evaluate"))?;

    cfg.evaluate.exclude_landmarks = EAR_LANDMARKS.iter().map(|s| s.to_string()).collect();
    let excluded = Pipeline::new(&cfg, RunOptions::default()).map_err(fail)?;
    excluded.evaluate().map_err(fail)?;
    let kept = load_report(&excluded.stage_dir("evaluate"))?;
    let kept_atlas = load_report(&excluded.stage_dir("evaluate").join("atlas"))?;

    let dims = |r: &EvalReport| (r.landmarks.len(), r.distance_matrix.values.len(), r.pointwise.per_landmark.len());
    let no_ears = |r: &EvalReport| {
        !r.landmarks.iter().any(|n| EAR_LANDMARKS.contains(&n.as_str()))
            && !r
                .linear
                .iter()
                .any(|l| EAR_LANDMARKS.contains(&l.a.as_str()) || EAR_LANDMARKS.contains(&l.b.as_str()))
    };
    let (before, after) = (dims(&all), dims(&kept));
    let (m0, m1) = (all.pointwise.overall.mean, kept.pointwise.overall.mean);
    let ok = all.landmarks.len() == 50
        && after == (42, 42, 42)
        && dims(&kept_atlas) == (42, 42, 42)
        && no_ears(&kept)
        && kept.linear.len() <= all.linear.len()
        && m1 < m0;
    reports.push(("exclusion/all".into(), all));
    reports.push(("exclusion/kept".into(), kept));
    check(
        ok,
        format!(
            "landmarks/matrix/table {before:?} -> {after:?}; overall mean {m0:.3} -> {m1:.3} mm with corrupted ears"
        ),
    )
}

fn main() {
    let (root, tmp) = match std::env::var_os("PATCHMARK_ACCEPTANCE_DIR") {
        Some(d) => {
            let d = PathBuf::from(d);
            std::fs::create_dir_all(&d).expect("create acceptance dir");
            (d, None)
        }
        None => {
            let t = tempfile::tempdir().expect("tempdir");
            (t.path().to_path_buf(), Some(t))
        }
    };
    // `cargo test -- --list` and filters only need to see the target exists.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut suite = Suite {
        results: Vec::new(),
        root,
        _tmp: tmp,
    };
    let mut reports: Vec<(String, EvalReport)> = Vec::new();

    suite.run(1, "gradient correctness", |_| gradient_check());
    suite.run(2, "registration recovery", |_| registration_recovery());
    suite.run(3, "shape law", |_| shape_law());
    suite.run(4, "loss algebra", |_| loss_algebra());
    suite.run(6, "end-to-end learning signal", |r| learning_signal(r, &mut reports));
    suite.run(7, "ablation ordering", |r| ablation_ordering(r, &mut reports));
    suite.run(8, "scheduler and early-stop contracts", |_| scheduler_contracts());
    suite.run(9, "determinism", determinism);
    suite.run(10, "exclusion analysis", |r| exclusion(r, &mut reports));
    suite.run(5, "metric identities", |_| metric_identities(&reports));

    suite.results.sort_by_key(|r| r.0);
    println!("\nsummary:");
    for (id, name, outcome, elapsed) in &suite.results {
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        println!("  {tag} {id:>2}. {name} ({:.1} s)", elapsed.as_secs_f64());
    }
    let failed = suite.results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", suite.results.len() - failed, suite.results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
