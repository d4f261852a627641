use ebcomplete::autodiff::Tape;
use ebcomplete::geometry::{
    chamfer_distance, chamfer_distance_with, nearest_neighbor_indices, stack, unidirectional_chamfer, PointCloud,
};
use ebcomplete::objectives::{fidelity_loss, recon_loss};
use ebcomplete::rng::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn cloud(points: &[[f64; 3]]) -> PointCloud {
    PointCloud::new(points.to_vec()).unwrap()
}

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, 0, 7);
    let pts = (0..n)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
        .collect();
    PointCloud::new(pts).unwrap()
}

fn brute_nn(p: &[f64; 3], set: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, q) in set.iter().enumerate() {
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn brute_ucd(a: &PointCloud, b: &PointCloud) -> f64 {
    let total: f64 = a.points().iter().map(|p| brute_nn(p, b.points()).1).sum();
    total / a.len() as f64
}

#[test]
fn hand_values() {
    let a = cloud(&[[0.0, 0.0, 0.0]]);
    let b = cloud(&[[1.0, 0.0, 0.0]]);
    assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
    let x = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    assert_eq!(unidirectional_chamfer(&x, &a).unwrap(), 1.0);
    let s = random_cloud(17, 3);
    assert_eq!(chamfer_distance(&s, &s).unwrap(), 0.0);
}

#[test]
fn squared_variant_squares_each_distance() {
    let a = cloud(&[[0.0, 0.0, 0.0]]);
    let b = cloud(&[[2.0, 0.0, 0.0]]);
    assert_eq!(chamfer_distance_with(&a, &b, false).unwrap(), 4.0);
    assert_eq!(chamfer_distance_with(&a, &b, true).unwrap(), 8.0);
}

#[test]
fn subset_has_zero_ucd() {
    let big = random_cloud(30, 5);
    let sub = cloud(&big.points()[3..19]);
    assert_eq!(unidirectional_chamfer(&sub, &big).unwrap(), 0.0);
    assert!(chamfer_distance(&sub, &big).unwrap() > 0.0);
}

#[test]
fn nearest_indices_identity_and_ties() {
    let s = random_cloud(12, 9);
    assert_eq!(nearest_neighbor_indices(&s, &s).unwrap(), (0..12).collect::<Vec<_>>());
    let src = cloud(&[[0.0, 0.0, 0.0]]);
    let dst = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
    assert_eq!(nearest_neighbor_indices(&src, &dst).unwrap(), vec![0]);
}

#[test]
fn nearest_indices_match_brute_force() {
    let src = random_cloud(100, 21);
    let dst = random_cloud(100, 22);
    let fast = nearest_neighbor_indices(&src, &dst).unwrap();
    let slow: Vec<usize> = src.points().iter().map(|p| brute_nn(p, dst.points()).0).collect();
    assert_eq!(fast, slow);
}

#[test]
fn eight_point_pairs_match_brute_force_exactly() {
    for seed in 0..50 {
        let a = random_cloud(8, 2 * seed);
        let b = random_cloud(8, 2 * seed + 1);
        let cd = brute_ucd(&a, &b) + brute_ucd(&b, &a);
        assert_eq!(chamfer_distance(&a, &b).unwrap(), cd);
        assert_eq!(unidirectional_chamfer(&a, &b).unwrap(), brute_ucd(&a, &b));
    }
}

#[test]
fn empty_clouds_are_rejected() {
    assert!(PointCloud::new(vec![]).is_err());
}

#[test]
fn tape_losses_delegate_to_metrics() {
    for seed in 0..10 {
        let y = random_cloud(9, 100 + seed);
        let yt = random_cloud(9, 200 + seed);
        let mut t = Tape::new();
        let a = t.constant(stack(&[&y]).unwrap()).unwrap();
        let b = t.constant(stack(&[&yt]).unwrap()).unwrap();
        let r = recon_loss(&mut t, a, b, false).unwrap();
        let f = fidelity_loss(&mut t, a, b, false).unwrap();
        assert_eq!(t.value(r).item().unwrap(), chamfer_distance(&y, &yt).unwrap());
        assert_eq!(t.value(f).item().unwrap(), unidirectional_chamfer(&y, &yt).unwrap());
    }
}

#[test]
fn recon_loss_averages_over_the_batch() {
    let y = [random_cloud(6, 1), random_cloud(6, 2)];
    let yt = [random_cloud(6, 3), random_cloud(6, 4)];
    let mut t = Tape::new();
    let a = t.constant(stack(&[&y[0], &y[1]]).unwrap()).unwrap();
    let b = t.constant(stack(&[&yt[0], &yt[1]]).unwrap()).unwrap();
    let r = recon_loss(&mut t, a, b, false).unwrap();
    let expect = 0.5 * (chamfer_distance(&y[0], &yt[0]).unwrap() + chamfer_distance(&y[1], &yt[1]).unwrap());
    assert!((t.value(r).item().unwrap() - expect).abs() < 1e-15);
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..20).prop_map(|p| PointCloud::new(p).unwrap())
}

proptest! {
    #[test]
    fn chamfer_is_symmetric_and_bounds_ucd(a in cloud_strategy(), b in cloud_strategy()) {
        let ab = chamfer_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, chamfer_distance(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!(unidirectional_chamfer(&a, &b).unwrap() <= ab);
        prop_assert!(unidirectional_chamfer(&b, &a).unwrap() <= ab);
    }

    #[test]
    fn chamfer_zero_iff_same_support(a in cloud_strategy(), extra in prop::array::uniform3(2.0f64..3.0)) {
        let mut pts = a.points().to_vec();
        pts.extend_from_slice(a.points());
        let doubled = PointCloud::new(pts.clone()).unwrap();
        prop_assert_eq!(chamfer_distance(&a, &doubled).unwrap(), 0.0);
        pts.push(extra);
        let grown = PointCloud::new(pts).unwrap();
        prop_assert!(chamfer_distance(&a, &grown).unwrap() > 0.0);
    }
}
