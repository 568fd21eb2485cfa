use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stiffssm_core::pipeline::{
    clamp_nonneg, reconstruct, reconstructed_indices, tile_initial, time_decompose, NormStats, Which, WindowPlan,
};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("v{i}")).collect()
}

fn random_data(seed: u64, s: usize, n_t: usize, p: usize) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((s, n_t, p), |(_, _, j)| rng.gen_range(0.0..1.0) * 10f64.powi(j as i32 * 2 - 3))
}

fn fit(x: &Array3<f64>) -> NormStats {
    let ics = x.index_axis(Axis(1), 0).to_owned();
    NormStats::fit(&names(x.dim().2), x.view(), ics.view(), 0.2).unwrap()
}

fn fixed_stats() -> NormStats {
    NormStats {
        variables: names(1),
        exponent: 0.2,
        traj_min: vec![0.0],
        traj_max: vec![2.0],
        ic_min: vec![0.0],
        ic_max: vec![2.0],
    }
}

#[test]
fn encode_examples() {
    let st = fixed_stats();
    let y = st.encode(&Array2::from_shape_vec((3, 1), vec![32.0, 0.0, 1.0]).unwrap(), Which::Trajectory).unwrap();
    assert_eq!(y[[0, 0]], 1.0);
    assert_eq!(y[[1, 0]], -1.0);
    assert!(y[[2, 0]].abs() < 1e-15);
    let x = st.decode(&Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap(), Which::Trajectory).unwrap();
    assert!((x.values[[0, 0]] - 32.0).abs() < 1e-12);
    assert_eq!(x.values[[1, 0]], 0.0);
    let below = st.decode(&Array2::from_elem((1, 1), -1.5), Which::Trajectory).unwrap();
    assert_eq!(below.clamped, 1);
    assert_eq!(below.values[[0, 0]], 0.0);
    assert!(st.encode(&Array2::from_elem((1, 1), -1.0), Which::Trajectory).is_err());
}

#[test]
fn clamping() {
    let mut x = Array2::from_shape_vec((2, 2), vec![-1e-19, 0.3, -2.0, -5.0]).unwrap();
    clamp_nonneg(&mut x);
    assert_eq!(x, Array2::from_shape_vec((2, 2), vec![0.0, 0.3, 0.0, 0.0]).unwrap());
}

#[test]
fn training_data_lands_in_the_unit_box_and_roundtrips() {
    let x = random_data(1, 6, 40, 4);
    let st = fit(&x);
    let y = st.encode(&x, Which::Trajectory).unwrap();
    assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    let ics = x.index_axis(Axis(1), 0).to_owned();
    let yi = st.encode(&ics, Which::Initial).unwrap();
    assert!(yi.iter().all(|v| (-1.0..=1.0).contains(v)));
    let back = st.decode(&y, Which::Trajectory).unwrap();
    assert_eq!(back.clamped, 0);
    for (a, b) in back.values.iter().zip(&x) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn constant_variable_encodes_to_zero_and_decodes_back() {
    let mut x = random_data(2, 3, 10, 2);
    x.index_axis_mut(Axis(2), 1).fill(0.79);
    let st = fit(&x);
    let y = st.encode(&x, Which::Trajectory).unwrap();
    assert!(y.index_axis(Axis(2), 1).iter().all(|&v| v == 0.0));
    let back = st.decode(&y, Which::Trajectory).unwrap().values;
    assert!(back.index_axis(Axis(2), 1).iter().all(|&v| (v - 0.79).abs() < 1e-15));
}

#[test]
fn stats_refit_is_bit_identical() {
    let x = random_data(3, 4, 20, 3);
    assert_eq!(fit(&x), fit(&x));
}

#[test]
fn decomposition_index_ranges() {
    let x = Array3::from_shape_fn((1, 21, 2), |(_, t, j)| (t * 10 + j) as f64);
    let plan = WindowPlan { width: 11, segments: 2 };
    let seg = time_decompose(x.view(), plan).unwrap();
    assert_eq!(seg.dim(), (2, 11, 2));
    assert_eq!(seg[[0, 0, 0]], 0.0);
    assert_eq!(seg[[0, 10, 0]], 100.0);
    assert_eq!(seg[[1, 0, 0]], 100.0);
    assert_eq!(seg[[1, 10, 1]], 201.0);

    let one = time_decompose(x.view(), WindowPlan { width: 11, segments: 1 }).unwrap();
    assert_eq!(one.index_axis(Axis(0), 0), x.slice(ndarray::s![0, ..11, ..]));
    assert!(time_decompose(x.view(), WindowPlan { width: 11, segments: 3 }).is_err());
}

#[test]
fn full_scale_decomposition_shapes() {
    let plan = WindowPlan { width: 101, segments: 99 };
    let x = Array3::from_shape_fn((2, 10002, 3), |(s, t, j)| (s * 100_000 + t * 3 + j) as f64);
    let seg = time_decompose(x.view(), plan).unwrap();
    assert_eq!(seg.dim(), (198, 101, 3));
    let rec = reconstruct(seg.view(), 99).unwrap();
    assert_eq!(rec.dim(), (2, 9999, 3));
    let idx = reconstructed_indices(plan);
    assert_eq!(idx.len(), 9999);
    for s in 0..2 {
        for (k, &t) in idx.iter().enumerate() {
            assert_eq!(rec.slice(ndarray::s![s, k, ..]), x.slice(ndarray::s![s, t, ..]));
        }
    }
    let interior_joins = (1..99).map(|i| i * 100);
    for t in interior_joins {
        assert_eq!(idx.iter().filter(|&&i| i == t).count(), 2);
    }
    assert!(reconstruct(seg.view(), 97).is_err());
}

#[test]
fn tiling() {
    let x0 = Array2::from_shape_fn((1, 13), |(_, j)| j as f64);
    let t = tile_initial(x0.view(), 101);
    assert_eq!(t.dim(), (1, 101, 13));
    for k in 0..101 {
        assert_eq!(t.index_axis(Axis(1), k), x0);
    }
    assert_eq!(tile_initial(x0.view(), 1).index_axis(Axis(1), 0), x0);
}

proptest! {
    #[test]
    fn roundtrip_on_nonnegative_data(
        vals in prop::collection::vec(0.0f64..1e4, 24),
        exponent in 0.1f64..1.0,
    ) {
        let x = Array3::from_shape_vec((2, 4, 3), vals).unwrap();
        let ics = x.index_axis(Axis(1), 0).to_owned();
        let st = NormStats::fit(&names(3), x.view(), ics.view(), exponent).unwrap();
        let back = st.decode(&st.encode(&x, Which::Trajectory).unwrap(), Which::Trajectory).unwrap();
        for (a, b) in back.values.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn decompose_then_reconstruct_hits_the_source(w in 2usize..12, s in 1usize..6, extra in 0usize..5) {
        let plan = WindowPlan { width: w, segments: s };
        let n_t = s * (w - 1) + 1 + extra;
        let x = Array3::from_shape_fn((2, n_t, 2), |(i, t, j)| (i * 1000 + t * 2 + j) as f64);
        let rec = reconstruct(time_decompose(x.view(), plan).unwrap().view(), s).unwrap();
        prop_assert_eq!(rec.dim(), (2, s * w, 2));
        for (k, t) in reconstructed_indices(plan).into_iter().enumerate() {
            prop_assert_eq!(rec.slice(ndarray::s![.., k, ..]), x.slice(ndarray::s![.., t, ..]));
        }
    }
}
