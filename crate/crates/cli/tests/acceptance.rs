//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{array, s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stiffssm_core::dataset::{Manifest, Split};
use stiffssm_core::metrics::{aggregate, rel_l2, Clip};
use stiffssm_core::pca::fit_pca;
use stiffssm_core::pipeline::{reconstruct, reconstructed_indices, time_decompose, NormStats, Which, WindowPlan};
use stiffssm_core::regimes::{compute_tau, partition, split_indices, Regime};
use stiffssm_core::rollout::{aligned_truth, recursive_rollout, teacher_forced_rollout, RolloutPlan, TruthLookup};
use stiffssm_core::simplex::{denominators, forward_map, inverse_map};
use stiffssm_core::ssm::{
    record_selective_scan, selective_scan, zoh_discretize, Backbone, BackboneConfig, Discretization, Norm, ScanMode,
};
use stiffssm_core::TrajectoryDataset;
use stiffssm_tensor::gradcheck::{analytic, max_relative_error, numerical, relative_error};
use stiffssm_tensor::{Tape, Tensor, TensorError, Var};

type Outcome = std::result::Result<String, String>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn op_error(shapes: &[&[usize]], f: &dyn Fn(&mut Tape, &[Var]) -> stiffssm_tensor::Result<Var>) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|sh| uniform(&mut rng, sh, -2.0, 2.0)).collect();
        let obj = |tape: &mut Tape, v: &[Var]| {
            let y = f(tape, v)?;
            let mut wr = ChaCha8Rng::seed_from_u64(seed);
            let w = tape.constant(uniform(&mut wr, tape.shape(y), -2.0, 2.0));
            let p = tape.mul(y, w)?;
            tape.sum(p)
        };
        worst = worst.max(max_relative_error(&obj, &inputs, 1e-6).unwrap());
    }
    worst
}

fn to_tensor_error(e: stiffssm_core::Error) -> TensorError {
    TensorError::InvalidArgument { op: "acceptance", reason: e.to_string() }
}

fn backbone_error(bb: &Backbone, x: &Tensor, seed: u64) -> f64 {
    let n = bb.params.len();
    let mut inputs = bb.params.tensors().to_vec();
    inputs.push(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = uniform(&mut rng, &[x.shape()[0], x.shape()[1], bb.outputs], -1.0, 1.0);
    let obj = |tape: &mut Tape, v: &[Var]| {
        let y = bb.forward(tape, &v[..n], v[n]).map_err(to_tensor_error)?;
        let wv = tape.constant(w.clone());
        let p = tape.mul(y, wv)?;
        tape.sum(p)
    };
    let flat = |g: Vec<Tensor>| {
        let len = g.iter().map(Tensor::len).sum::<usize>();
        Tensor::new(vec![len], g.into_iter().flat_map(Tensor::into_data).collect()).unwrap()
    };
    let a = analytic(&obj, &inputs).unwrap();
    relative_error(&flat(a), &flat(numerical(&obj, &inputs, 1e-6).unwrap()), 1e-8)
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    type Op = Box<dyn Fn(&mut Tape, &[Var]) -> stiffssm_tensor::Result<Var>>;
    let ops: Vec<(&str, Vec<&[usize]>, Op)> = vec![
        ("matmul", vec![&[2, 3, 4], &[4, 5]], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("add", vec![&[2, 3], &[2, 3]], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add broadcast", vec![&[2, 3, 4], &[4]], Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", vec![&[3, 2], &[3, 2]], Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul broadcast", vec![&[2, 4, 3], &[4, 3]], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("exp", vec![&[2, 5]], Box::new(|t, v| t.exp(v[0]))),
        (
            "reciprocal",
            vec![&[6]],
            Box::new(|t, v| {
                let e = t.exp(v[0])?;
                t.reciprocal(e)
            }),
        ),
        ("softplus", vec![&[2, 5]], Box::new(|t, v| t.softplus(v[0]))),
        ("sigmoid", vec![&[2, 5]], Box::new(|t, v| t.sigmoid(v[0]))),
        ("silu", vec![&[2, 5]], Box::new(|t, v| t.silu(v[0]))),
        ("causal_conv1d", vec![&[2, 6, 3], &[3, 4]], Box::new(|t, v| t.causal_conv1d(v[0], v[1]))),
        ("layer_norm", vec![&[3, 5]], Box::new(|t, v| t.layer_norm(v[0], 1e-5))),
        ("rms_norm", vec![&[3, 5]], Box::new(|t, v| t.rms_norm(v[0], 1e-5))),
        ("sum", vec![&[3, 4]], Box::new(|t, v| t.sum(v[0]))),
        ("mean", vec![&[3, 4]], Box::new(|t, v| t.mean(v[0]))),
        ("slice", vec![&[2, 5, 3]], Box::new(|t, v| t.slice(v[0], 1, 1, 3))),
        ("concat", vec![&[2, 2, 3], &[2, 4, 3]], Box::new(|t, v| t.concat(&[v[0], v[1]], 1))),
    ];
    let mut worst_op = ("", 0.0f64);
    for (name, shapes, f) in &ops {
        let e = op_error(shapes, f.as_ref());
        ensure(e < 1e-6, || format!("{name}: relative error {e:e}"))?;
        if e >= worst_op.1 {
            worst_op = (name, e);
        }
    }
    for rule in [Discretization::Standard, Discretization::Literal] {
        for mode in [ScanMode::Sequential, ScanMode::Parallel] {
            let scan = move |tape: &mut Tape, v: &[Var]| {
                let delta = tape.softplus(v[1])?;
                let a = tape.exp(v[2])?;
                let a = tape.neg(a)?;
                record_selective_scan(tape, v[0], delta, a, v[3], v[4], rule, mode).map_err(to_tensor_error)
            };
            let e = op_error(&[&[2, 6, 3], &[2, 6, 3], &[3, 4], &[2, 6, 4], &[2, 6, 4]], &scan);
            ensure(e < 1e-6, || format!("selective scan {rule:?} {mode:?}: {e:e}"))?;
            worst_op.1 = worst_op.1.max(e);
        }
    }
    let mut worst_bb = 0.0f64;
    for seed in 0..3 {
        for (norm, scan) in [(Norm::Rms, ScanMode::Sequential), (Norm::Layer, ScanMode::Parallel)] {
            let cfg = BackboneConfig {
                d_model: 6,
                n_layers: 2,
                state_dim: 3,
                expand: 2,
                conv_width: 3,
                norm,
                scan,
                ..BackboneConfig::default()
            };
            let bb = Backbone::init(cfg, 4, 4, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
            let x = uniform(&mut rng, &[2, 8, 4], -2.0, 2.0);
            let e = backbone_error(&bb, &x, seed);
            ensure(e < 1e-5, || format!("2-block backbone seed {seed} {norm:?}: {e:e}"))?;
            worst_bb = worst_bb.max(e);
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "worst op error {:.2e}, worst backbone error {worst_bb:.2e}, {:.1} s",
        worst_op.1,
        elapsed.as_secs_f64()
    ))
}

fn scan_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for (seed, len) in [1, 2, 3, 127, 128, 1024].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed as u64);
        let (bt, ch, st) = (2, 3, 4);
        let x = uniform(&mut rng, &[bt, len, ch], -2.0, 2.0);
        let delta = uniform(&mut rng, &[bt, len, ch], 1e-3, 0.5);
        let a = uniform(&mut rng, &[ch, st], -4.0, -0.1);
        let b = uniform(&mut rng, &[bt, len, st], -2.0, 2.0);
        let c = uniform(&mut rng, &[bt, len, st], -2.0, 2.0);
        let run = |mode| selective_scan(&x, &delta, &a, &b, &c, Discretization::Standard, mode).unwrap();
        let d = run(ScanMode::Sequential).max_abs_diff(&run(ScanMode::Parallel)).unwrap();
        ensure(d < 1e-10, || format!("L = {len}: {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("max abs diff {worst:.2e}"))
}

fn rk4(delta: f64, a: f64, b: f64, h0: f64, steps: usize) -> f64 {
    let dt = delta / steps as f64;
    let f = |h: f64| a * h + b;
    let mut h = h0;
    for _ in 0..steps {
        let k1 = f(h);
        let k2 = f(h + 0.5 * dt * k1);
        let k3 = f(h + 0.5 * dt * k2);
        let k4 = f(h + dt * k3);
        h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    h
}

fn zoh_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let delta = rng.gen_range(1e-3..2.0);
        let a = -rng.gen_range(1e-3..5.0);
        let b = rng.gen_range(-3.0..3.0);
        let h0 = rng.gen_range(-2.0..2.0);
        let (ab, bb) = zoh_discretize(delta, a, b, Discretization::Standard).unwrap();
        let e = (ab * h0 + bb - rk4(delta, a, b, h0, 1000)).abs();
        ensure(e < 1e-8, || format!("Δ={delta} a={a} b={b}: {e:e}"))?;
        worst = worst.max(e);
    }
    Ok(format!("max abs diff {worst:.2e} over 100 draws"))
}

fn interior_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let floor = 1e-3;
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = e.iter().sum();
    e.iter().map(|v| floor + (1.0 - m as f64 * floor) * v / sum).collect()
}

/// Equality up to the rounding of the decimal reference values.
fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE)
}

fn simplex_bijection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rt, mut worst_sum) = (0.0f64, 0.0f64);
    for m in [2, 3, 11, 24] {
        for _ in 0..1000 {
            let y = interior_point(&mut rng, m);
            let back = inverse_map(&forward_map(&y).unwrap()).unwrap();
            let rt = max_diff(&y, &back);
            let sum = (back.iter().sum::<f64>() - 1.0).abs();
            ensure(rt < 1e-12 && sum < 1e-12, || format!("m = {m}: roundtrip {rt:e}, sum {sum:e}"))?;
            worst_rt = worst_rt.max(rt);
            worst_sum = worst_sum.max(sum);
        }
    }
    let z3 = forward_map(&[0.2, 0.3, 0.5]).unwrap();
    ensure(same(z3[0], 0.2 / 0.7) && z3[1] == 0.3, || format!("m = 3 forward {z3:?}"))?;
    let y3 = inverse_map(&z3).unwrap();
    ensure(y3.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| same(*a, b)), || format!("m = 3 inverse {y3:?}"))?;
    let z4 = forward_map(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    ensure(z4.iter().zip([0.2, 1.0 / 3.0, 0.3]).all(|(a, b)| same(*a, b)), || format!("m = 4 forward {z4:?}"))?;
    let d = denominators(&z4).unwrap();
    ensure(same(d[0], 0.5) && same(d[1], 0.6), || format!("m = 4 denominators {d:?}"))?;
    let y4 = inverse_map(&z4).unwrap();
    ensure(y4.iter().zip([0.1, 0.2, 0.3, 0.4]).all(|(a, b)| same(*a, b)), || format!("m = 4 inverse {y4:?}"))?;
    Ok(format!("roundtrip {worst_rt:.2e}, sum {worst_sum:.2e}, hand examples match"))
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("v{i}")).collect()
}

fn pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array3::from_shape_fn((8, 200, 3), |(_, _, j)| rng.gen_range(0.0..1.0) * 10f64.powi(-(j as i32) * 2));
    let ics = x.index_axis(Axis(1), 0).to_owned();
    let st = NormStats::fit(&names(3), x.view(), ics.view(), 0.2).unwrap();
    let back = st.decode(&st.encode(&x, Which::Trajectory).unwrap(), Which::Trajectory).unwrap();
    let rt = max_diff(&back.values, &x);
    ensure(rt < 1e-12, || format!("encode/decode roundtrip {rt:e}"))?;

    let plan = WindowPlan { width: 101, segments: 99 };
    let src = Array3::from_shape_fn((2, 9901, 2), |(i, t, j)| (i * 100_000 + t * 2 + j) as f64);
    let rec = reconstruct(time_decompose(src.view(), plan).unwrap().view(), 99).unwrap();
    ensure(rec.dim().1 == 9999, || format!("reconstruction has {} points", rec.dim().1))?;
    let idx = reconstructed_indices(plan);
    for (k, &t) in idx.iter().enumerate() {
        ensure(rec.slice(s![.., k, ..]) == src.slice(s![.., t, ..]), || format!("mismatch at source index {t}"))?;
    }
    Ok(format!("roundtrip {rt:.2e}, 9999 reconstructed points match the source"))
}

fn regime_threshold() -> Outcome {
    let ends = [(700.0, 700.0), (800.0, 800.5), (1200.0, 2000.0)];
    let n_t = 1001;
    let temps = Array2::from_shape_fn((3, n_t), |(i, t)| {
        let (a, b) = ends[i];
        a + (b - a) * t as f64 / (n_t - 1) as f64
    });
    let th = compute_tau(temps.view(), 0.01).unwrap();
    ensure(th.tau == 800.0, || format!("τ = {}", th.tau))?;
    let data = Array3::from_shape_fn((3, n_t, 2), |(i, t, j)| if j == 0 { temps[[i, t]] } else { 0.5 });
    let ds = TrajectoryDataset::new(manifest(3, n_t, &["T", "Y"], Split::Train), data).unwrap();
    let (lo, hi) = partition(&ds, 0, th.tau);
    ensure((lo.n_samples(), hi.n_samples()) == (2, 1), || {
        format!("partition {} / {}", lo.n_samples(), hi.n_samples())
    })?;
    let (below, above) = split_indices(&ds, 0, th.tau);
    for i in 0..3 {
        let t0 = ds.data[[i, 0, 0]];
        let expect = if t0 <= th.tau { Regime::Below } else { Regime::Above };
        ensure(th.route(t0) == expect, || format!("sample {i} routed {:?}", th.route(t0)))?;
        ensure(
            below.contains(&i) == (expect == Regime::Below) && above.contains(&i) == (expect == Regime::Above),
            || format!("sample {i} in the wrong partition"),
        )?;
    }
    Ok("τ = 800, partition 2 / 1, routing follows T(0) ≤ τ".into())
}

fn manifest(n: usize, n_t: usize, vars: &[&str], split: Split) -> Manifest {
    Manifest {
        n_samples: n,
        n_t,
        dt: 1e-5,
        variables: vars.iter().map(|v| v.to_string()).collect(),
        units: vec!["1".into(); vars.len()],
        species: vec![],
        mechanism: serde_json::Value::Null,
        seed: None,
        split,
        layout: None,
    }
}

fn pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = 6;
    let mix = Array2::from_shape_fn((p, p), |_| rng.gen_range(-1.0..1.0));
    let x = Array2::from_shape_fn((40, p), |(_, j)| rng.gen_range(-1.0..1.0) * (j + 1) as f64).dot(&mix);
    let mut worst_gram = 0.0f64;
    for d in 1..=p {
        let b = fit_pca(x.view(), d).unwrap();
        let gram = b.components.t().dot(&b.components);
        for ((i, j), v) in gram.indexed_iter() {
            worst_gram = worst_gram.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ensure(worst_gram < 1e-10, || format!("V_rᵀV_r deviates by {worst_gram:e}"))?;
    let b = fit_pca(x.view(), p).unwrap();
    let z = b.project(x.view()).unwrap();
    let mut worst_iso = 0.0f64;
    for (row, zr) in x.rows().into_iter().zip(z.rows()) {
        let centered = row.iter().zip(&b.mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>().sqrt();
        worst_iso = worst_iso.max((centered - zr.dot(&zr).sqrt()).abs());
    }
    ensure(worst_iso < 1e-10, || format!("isometry error {worst_iso:e}"))?;
    let two = fit_pca(array![[1.0, 0.0], [-1.0, 0.0]].view(), 1).unwrap();
    ensure(
        two.mean == vec![0.0, 0.0]
            && (two.components[[0, 0]].abs() - 1.0).abs() < 1e-15
            && two.components[[1, 0]].abs() < 1e-15,
        || format!("2-point example: mean {:?}, components {:?}", two.mean, two.components),
    )?;
    Ok(format!("orthonormality {worst_gram:.2e}, isometry {worst_iso:.2e}, 2-point example matches"))
}

fn metrics() -> Outcome {
    let truth = Array3::from_shape_vec((1, 2, 1), vec![3.0, 4.0]).unwrap();
    let err = |pred: &Array3<f64>| rel_l2(pred.view(), truth.view(), &names(1), Clip::Off).unwrap().entries[[0, 0]];
    let (e0, e80, e100) =
        (err(&truth), err(&Array3::from_shape_vec((1, 2, 1), vec![3.0, 0.0]).unwrap()), err(&Array3::zeros((1, 2, 1))));
    ensure((e0, e80, e100) == (0.0, 80.0, 100.0), || format!("hand examples {e0}, {e80}, {e100}"))?;
    let agg = aggregate(array![[2.0, 2.0], [2.0, 2.0]].view());
    ensure(agg == (vec![2.0, 2.0], 2.0), || format!("aggregate {agg:?}"))?;
    let agg = aggregate(array![[1.0], [3.0]].view());
    ensure(agg == (vec![2.0], 2.0), || format!("aggregate {agg:?}"))?;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth =
            Array3::from_shape_fn((4, 6, 3), |(i, _, _)| rng.gen_range(-1.0..1.0) * 10f64.powi(-(i as i32) * 3));
        let pred = truth.mapv(|v| v + rng.gen_range(-0.01..0.01));
        let a = rel_l2(pred.view(), truth.view(), &names(3), Clip::Off).unwrap();
        let b = rel_l2(pred.view(), truth.view(), &names(3), Clip::Epsilon).unwrap();
        ensure(a.entries.iter().zip(&b.entries).all(|(u, c)| c <= u), || {
            format!("seed {seed}: clipped exceeds unclipped")
        })?;
    }
    Ok("0 / 80 / 100 and aggregates exact; clipped ≤ unclipped on 200 random sets".into())
}

fn stiffssm(args: &[&str]) -> String {
    let out =
        Command::new(env!("CARGO_BIN_EXE_stiffssm")).args(args).env("RUST_LOG", "warn").output().expect("binary runs");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "stiffssm {}: {}\n{stderr}", args.join(" "), out.status);
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn overall(eval_dir: &Path) -> f64 {
    let text = fs::read_to_string(eval_dir.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["overall"].as_f64().expect("overall error")
}

fn gen_data(dir: &Path, mechanism: &str, samples: usize, dt: &str, seed: u64, split: &str) -> PathBuf {
    let out = dir.join(format!("{mechanism}-{split}"));
    let (samples, seed) = (samples.to_string(), seed.to_string());
    stiffssm(&[
        "gen-data",
        "--mechanism",
        mechanism,
        "--samples",
        &samples,
        "--nt",
        "1001",
        "--dt",
        dt,
        "--seed",
        &seed,
        "--split",
        split,
        "--out",
        p(&out),
    ]);
    out
}

/// Desk-scale model: 2 blocks, N = 32, windows of 101 points, 10 segments.
fn desk_config(dir: &Path, name: &str, variant: &str, steps: usize, train: &Path, test: &Path) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    let text = format!(
        "variant = \"{variant}\"\nseed = 0\n\n[paths]\ntrain = \"{}\"\ntest = \"{}\"\n\n\
         [model]\nd_model = 32\nn_layers = 2\n\n\
         [train]\nlearning_rate = 3e-3\nbatch_size = 32\nsteps = {steps}\ncheckpoint_every = 0\n\
         schedule = {{ kind = \"linear-decay\", final_factor = 0.05 }}\n\n\
         [window]\nwidth = 101\nsegments = 10\n",
        p(train),
        p(test)
    );
    fs::write(&path, text).unwrap();
    path
}

fn train_predict_evaluate(dir: &Path, name: &str, config: &Path, truth: &Path) -> (PathBuf, PathBuf, f64) {
    let run = dir.join(format!("{name}-run"));
    let pred = dir.join(format!("{name}-pred"));
    let eval = dir.join(format!("{name}-eval"));
    stiffssm(&["train", "--config", p(config), "--out", p(&run)]);
    let ckpt = run.join("model.ckpt");
    stiffssm(&["predict", "--checkpoint", p(&ckpt), "--config", p(config), "--out", p(&pred)]);
    stiffssm(&["evaluate", "--pred", p(&pred), "--truth", p(truth), "--out", p(&eval)]);
    (ckpt, pred, overall(&eval))
}

struct Robertson {
    test: PathBuf,
    model: PathBuf,
}

fn robertson_end_to_end(dir: &Path, shared: &mut Option<Robertson>) -> Outcome {
    let start = Instant::now();
    let train = gen_data(dir, "robertson", 128, "1e-4", 1, "train");
    let test = gen_data(dir, "robertson", 32, "1e-4", 2, "test");
    let cfg = desk_config(dir, "robertson", "standalone", ROBERTSON_STEPS, &train, &test);
    let (model, _, err) = train_predict_evaluate(dir, "robertson", &cfg, &test);
    let elapsed = start.elapsed();
    *shared = Some(Robertson { test: test.clone(), model });
    ensure(err < 2.0, || format!("time-decomposed test error {err:.3}% ≥ 2%"))?;
    ensure(elapsed < Duration::from_secs(30 * 60), || format!("wall clock {elapsed:?}"))?;

    let cfg = desk_config(dir, "robertson-mc", "mass-conserving", MASS_CONSERVING_STEPS, &train, &test);
    let (_, pred, mc_err) = train_predict_evaluate(dir, "robertson-mc", &cfg, &test);
    let pred = TrajectoryDataset::read(&pred).unwrap();
    let worst = pred.data.lanes(Axis(2)).into_iter().map(|y| (y.sum() - 1.0).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-12, || format!("mass-conserving Σy deviates by {worst:e}"))?;
    Ok(format!(
        "standalone error {err:.3}% in {:.0} s; mass-conserving max |Σy − 1| = {worst:.1e} (error {mc_err:.2}%)",
        elapsed.as_secs_f64()
    ))
}

const ROBERTSON_STEPS: usize = 1000;
const MASS_CONSERVING_STEPS: usize = 100;
const IGNITION_STEPS: usize = 600;

fn ignition_regimes(dir: &Path) -> Outcome {
    let train = gen_data(dir, "one-step-ignition", 64, "1e-5", 3, "train");
    let test = gen_data(dir, "one-step-ignition", 16, "1e-5", 4, "test");
    let ds = TrajectoryDataset::read(&train).unwrap();
    let th = compute_tau(ds.data.index_axis(Axis(2), 0), 0.01).map_err(|e| e.to_string())?;
    let (lo, hi) = split_indices(&ds, 0, th.tau);
    ensure(!lo.is_empty() && !hi.is_empty(), || format!("τ = {} leaves a regime empty", th.tau))?;
    let pair_cfg = desk_config(dir, "ignition-pair", "regime-pair", IGNITION_STEPS, &train, &test);
    let (_, _, pair) = train_predict_evaluate(dir, "ignition-pair", &pair_cfg, &test);
    let single_cfg = desk_config(dir, "ignition-single", "standalone", IGNITION_STEPS, &train, &test);
    let (_, _, single) = train_predict_evaluate(dir, "ignition-single", &single_cfg, &test);
    ensure(pair <= single, || format!("regime pair {pair:.3}% > single model {single:.3}%"))?;
    Ok(format!(
        "τ = {:.1} K ({} below / {} above); regime pair {pair:.3}% ≤ single model {single:.3}%",
        th.tau,
        lo.len(),
        hi.len()
    ))
}

fn rollout_sanity(dir: &Path, shared: &Option<Robertson>) -> Outcome {
    let rob = shared.as_ref().ok_or("criterion 9 produced no model")?;
    let truth = TrajectoryDataset::read(&rob.test).unwrap().data;
    let oracle = TruthLookup::new(truth.clone());
    for plan in [RolloutPlan::fixed(101, 10), RolloutPlan { windows: vec![101, 76, 31] }] {
        let expect = aligned_truth(truth.view(), &plan).unwrap();
        oracle.reset();
        let rec = recursive_rollout(&oracle, truth.index_axis(Axis(1), 0), &plan).unwrap();
        ensure(rec.values == expect, || format!("recursive oracle rollout differs for {:?}", plan.windows))?;
        oracle.reset();
        let tf = teacher_forced_rollout(&oracle, truth.view(), &plan).unwrap();
        ensure(tf.values == expect, || format!("teacher-forced oracle rollout differs for {:?}", plan.windows))?;
    }
    let out = dir.join("robertson-rollout");
    stiffssm(&[
        "rollout",
        "--checkpoint",
        p(&rob.model),
        "--data",
        p(&rob.test),
        "--windows",
        "101,76,31",
        "--out",
        p(&out),
    ]);
    let rolled = TrajectoryDataset::read(&out).unwrap();
    ensure(rolled.data.dim().1 == 208, || format!("rollout length {}", rolled.data.dim().1))?;
    let report = fs::read_to_string(out.join("windows.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    ensure(rows.len() == 3, || format!("{} report rows", rows.len()))?;
    let means: Vec<String> = rows
        .iter()
        .map(|r| r.split(',').nth(3).and_then(|v| v.parse::<f64>().ok()).map_or("?".into(), |v| format!("{v:.3}")))
        .collect();
    Ok(format!("oracle rollouts exact; trained rollout length 208, per-window errors {}%", means.join(" / ")))
}

fn same_files(a: &Path, b: &Path, files: &[&str]) -> std::result::Result<(), String> {
    for f in files {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        ensure(x == y, || format!("{f} differs between {} and {}", a.display(), b.display()))?;
    }
    Ok(())
}

fn reproducibility(dir: &Path) -> Outcome {
    let runs: Vec<PathBuf> = (0..2).map(|k| dir.join(format!("repro-{k}"))).collect();
    for run in &runs {
        fs::create_dir_all(run).unwrap();
        let data = gen_data(run, "robertson", 16, "1e-4", 11, "train");
        let cfg = run.join("small.toml");
        let text = format!(
            "variant = \"standalone\"\nseed = 7\n[paths]\ntrain = \"{0}\"\ntest = \"{0}\"\n\
             [model]\nd_model = 8\nn_layers = 1\nstate_dim = 4\n[train]\nbatch_size = 8\nsteps = 20\ncheckpoint_every = 10\n\
             [window]\nwidth = 101\nsegments = 10\n",
            p(&data)
        );
        fs::write(&cfg, text).unwrap();
        stiffssm(&["train", "--config", p(&cfg), "--out", p(&run.join("train"))]);
        let ckpt = run.join("train/model.ckpt");
        stiffssm(&["predict", "--checkpoint", p(&ckpt), "--config", p(&cfg), "--out", p(&run.join("pred"))]);
        let (pred, eval) = (run.join("pred"), run.join("eval"));
        stiffssm(&["evaluate", "--pred", p(&pred), "--truth", p(&data), "--out", p(&eval)]);
    }
    let (a, b) = (&runs[0], &runs[1]);
    same_files(&a.join("robertson-train"), &b.join("robertson-train"), &["data.bin"])?;
    same_files(&a.join("train"), &b.join("train"), &["model.ckpt", "losses.json", "loss.csv"])?;
    same_files(&a.join("train/checkpoints"), &b.join("train/checkpoints"), &["standalone-000010.ckpt"])?;
    same_files(&a.join("pred"), &b.join("pred"), &["data.bin"])?;
    same_files(&a.join("eval"), &b.join("eval"), &["report.json", "errors.csv", "summary.csv"])?;
    Ok("gen-data, train, predict and evaluate reruns are byte-identical".into())
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut robertson = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    writeln!(std::io::stdout().lock()).unwrap();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let line = match &outcome {
            Ok(detail) => format!("criterion {n} ({name}): PASS: {detail}"),
            Err(why) => format!("criterion {n} ({name}): FAIL: {why}"),
        };
        writeln!(std::io::stdout().lock(), "{line}").unwrap();
        results.push((n, name, outcome));
    };
    run(1, "gradient oracle", &mut gradient_oracle);
    run(2, "scan equivalence", &mut scan_equivalence);
    run(3, "ZOH oracle", &mut zoh_oracle);
    run(4, "simplex bijection", &mut simplex_bijection);
    run(5, "pipeline", &mut pipeline);
    run(6, "regime threshold", &mut regime_threshold);
    run(7, "PCA", &mut pca);
    run(8, "metrics", &mut metrics);
    run(9, "Robertson end to end", &mut || robertson_end_to_end(dir, &mut robertson));
    run(10, "ignition regimes", &mut || ignition_regimes(dir));
    run(11, "rollout sanity", &mut || rollout_sanity(dir, &robertson));
    run(12, "reproducibility", &mut || reproducibility(dir));
    let failed: Vec<String> =
        results.iter().filter(|(_, _, o)| o.is_err()).map(|(n, name, _)| format!("{n} ({name})")).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
