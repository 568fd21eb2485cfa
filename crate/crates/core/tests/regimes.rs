use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use stiffssm_core::dataset::{Manifest, Split};
use stiffssm_core::regimes::{compute_tau, partition, split_indices, Regime, RegimeThreshold};
use stiffssm_core::{Error, TrajectoryDataset};

fn linear_profiles(ends: &[(f64, f64)], n_t: usize) -> Array2<f64> {
    Array2::from_shape_fn((ends.len(), n_t), |(i, t)| {
        let (a, b) = ends[i];
        a + (b - a) * t as f64 / (n_t - 1) as f64
    })
}

fn dataset(temps: &Array2<f64>) -> TrajectoryDataset {
    let (n, n_t) = temps.dim();
    let data = Array3::from_shape_fn((n, n_t, 2), |(i, t, j)| if j == 0 { temps[[i, t]] } else { 0.5 });
    let manifest = Manifest {
        n_samples: n,
        n_t,
        dt: 1e-5,
        variables: vec!["T".into(), "Y".into()],
        units: vec!["K".into(), "1".into()],
        species: vec![],
        mechanism: serde_json::Value::Null,
        seed: None,
        split: Split::Train,
        layout: None,
    };
    TrajectoryDataset::new(manifest, data).unwrap()
}

#[test]
fn three_profile_threshold_and_partition() {
    let temps = linear_profiles(&[(700.0, 700.0), (800.0, 800.5), (1200.0, 2000.0)], 1001);
    let th = compute_tau(temps.view(), 0.01).unwrap();
    assert_eq!(th.tau, 800.0);
    let ds = dataset(&temps);
    let (lo, hi) = partition(&ds, 0, th.tau);
    assert_eq!((lo.n_samples(), hi.n_samples()), (2, 1));
    for i in 0..ds.n_samples() {
        let t0 = ds.data[[i, 0, 0]];
        assert_eq!(th.route(t0) == Regime::Below, t0 <= th.tau);
    }
    let (below, _) = split_indices(&ds, 0, 650.0);
    assert!(below.is_empty());
}

#[test]
fn boundary_routing() {
    let th = RegimeThreshold { tau: 889.0, epsilon: 0.01, n_t: 10 };
    assert_eq!(th.route(889.0), Regime::Below);
    assert_eq!(th.route(890.0), Regime::Above);
}

#[test]
fn flat_and_rising_sets() {
    let flat = linear_profiles(&[(900.0, 900.0), (700.0, 700.0), (1000.0, 1000.0)], 50);
    assert_eq!(compute_tau(flat.view(), 0.01).unwrap().tau, 1000.0);
    let rising = linear_profiles(&[(900.0, 1900.0), (700.0, 1800.0)], 50);
    assert!(matches!(compute_tau(rising.view(), 0.01), Err(Error::NoFlatRegime { .. })));
    assert!(compute_tau(flat.slice(ndarray::s![.., ..1]), 0.01).is_err());
}

proptest! {
    #[test]
    fn partition_is_a_disjoint_cover_and_tau_ignores_order(
        starts in prop::collection::vec(600.0f64..1400.0, 2..20),
        rises in prop::collection::vec(prop::bool::ANY, 20),
        rotate in 0usize..20,
    ) {
        let ends: Vec<(f64, f64)> = starts
            .iter()
            .zip(&rises)
            .map(|(&s, &r)| (s, if r { s + 900.0 } else { s + 0.1 }))
            .collect();
        let temps = linear_profiles(&ends, 101);
        let mut shuffled = ends.clone();
        shuffled.rotate_left(rotate % ends.len());
        let a = compute_tau(temps.view(), 0.01);
        let b = compute_tau(linear_profiles(&shuffled, 101).view(), 0.01);
        prop_assert_eq!(a.as_ref().ok(), b.as_ref().ok());
        if let Ok(th) = a {
            let ds = dataset(&temps);
            let (lo, hi) = split_indices(&ds, 0, th.tau);
            prop_assert_eq!(lo.len() + hi.len(), ds.n_samples());
            prop_assert!(lo.iter().all(|i| !hi.contains(i)));
            for &i in &lo {
                prop_assert_eq!(th.route(ds.data.index_axis(Axis(0), i)[[0, 0]]), Regime::Below);
            }
            for &i in &hi {
                prop_assert_eq!(th.route(ds.data.index_axis(Axis(0), i)[[0, 0]]), Regime::Above);
            }
        }
    }
}
