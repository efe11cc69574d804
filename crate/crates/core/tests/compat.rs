use penreg::compat::{compatibility_factor, cone_contains, re_constant, CompatMethod, ConeSpec, SearchBudget};
use penreg::model::{orthonormalize_columns, DesignOperator, Groups, Shape};
use penreg::numeric::{gauss_sample, Mat, RngStream};
use penreg::penalties::{support_of, PenaltyKind, SupportProjector};

fn gaussian_design(seed: u64, n: usize, d: usize) -> Mat<f64> {
    Mat::from_vec(n, d, gauss_sample(&RngStream::new(seed, 0), n * d)).unwrap()
}

fn orthonormal_design(seed: u64, n: usize, d: usize) -> DesignOperator<f64> {
    DesignOperator::vector(orthonormalize_columns(&gaussian_design(seed, n, d)).unwrap())
}

fn l1_cone(d: usize, s: &[usize], c0: f64) -> ConeSpec<f64> {
    ConeSpec::new(PenaltyKind::L1, SupportProjector::coordinates(d, s).unwrap(), c0).unwrap()
}

#[test]
fn orthonormal_l1_is_root_s() {
    let d = orthonormal_design(1, 40, 10);
    for s in 1..=3usize {
        let support: Vec<usize> = (0..s).map(|j| 3 * j).collect();
        let cone = l1_cone(10, &support, 4.0);
        let e = compatibility_factor(&d, &cone, &SearchBudget::default(), &RngStream::new(7, s as u64)).unwrap();
        let root = (s as f64).sqrt();
        assert_eq!(e.method, CompatMethod::AnalyticOrthonormal);
        assert!((e.lower - root).abs() <= 0.02 * root, "s={s}: {}", e.lower);
        assert!(e.lower <= e.upper.unwrap() + 1e-9);
        assert!(cone_contains(&cone, &e.argmax, 0.0).unwrap());
        let kappa = re_constant(&d, &cone, &SearchBudget::default(), &RngStream::new(8, s as u64)).unwrap();
        assert!((kappa - 1.0).abs() < 1e-6, "kappa {kappa}");
    }
}

#[test]
fn orthonormal_group_and_nuclear() {
    let x = orthonormalize_columns(&gaussian_design(2, 30, 12)).unwrap();
    let groups = Groups::equal(4, 3).unwrap();
    let d = DesignOperator::new(x.clone(), Shape::Grouped(groups.clone())).unwrap();
    let proj = SupportProjector::blocks(groups.clone(), &[0, 2]).unwrap();
    let cone = ConeSpec::new(PenaltyKind::Group(groups), proj, 2.0).unwrap();
    let e = compatibility_factor(&d, &cone, &SearchBudget::default(), &RngStream::new(3, 0)).unwrap();
    assert!((e.lower - 2f64.sqrt()).abs() <= 0.02 * 2f64.sqrt(), "{}", e.lower);

    let kind = PenaltyKind::Nuclear { k: 3, m: 4 };
    let d = DesignOperator::new(x, Shape::Matrix { k: 3, m: 4 }).unwrap();
    let mut a = vec![0.0; 12];
    a[0] = 1.0;
    let proj = support_of(&kind, &a, 1e-12).unwrap();
    let cone = ConeSpec::new(kind, proj, 2.0).unwrap();
    let e = compatibility_factor(&d, &cone, &SearchBudget::default(), &RngStream::new(4, 0)).unwrap();
    // rank-one support: 𝒫_A B can have rank two, so μ = √2
    assert!((e.upper.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!((e.lower - 2f64.sqrt()).abs() <= 0.02 * 2f64.sqrt(), "{}", e.lower);
    assert!(e.lower <= e.upper.unwrap() + 1e-9);
}

#[test]
fn duplicated_column_gives_zero_kappa_and_infinite_mu() {
    let mut x = gaussian_design(5, 20, 6);
    let c = x.col(1);
    x.set_col(4, &c);
    let d = DesignOperator::vector(x);
    for c0 in [1.0, 4.0] {
        let cone = l1_cone(6, &[1], c0);
        let e = compatibility_factor(&d, &cone, &SearchBudget::default(), &RngStream::new(5, 1)).unwrap();
        assert!(e.infinite && e.lower.is_infinite());
        let k = re_constant(&d, &cone, &SearchBudget::default(), &RngStream::new(5, 2)).unwrap();
        assert!(k.abs() <= 1e-8);
    }
}

/// max over a dense angular grid of unit vectors in ℝ³ lying in the cone.
fn grid_mu(x: &Mat<f64>, support: &[usize], c0: f64) -> f64 {
    let steps = 400;
    let mut best: f64 = 0.0;
    for i in 0..=steps {
        let theta = std::f64::consts::PI * i as f64 / steps as f64;
        for j in 0..(2 * steps) {
            let phi = std::f64::consts::PI * j as f64 / steps as f64;
            let b = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let on: f64 = support.iter().map(|&k| b[k].abs()).sum();
            let off: f64 = (0..3).filter(|k| !support.contains(k)).map(|k| b[k].abs()).sum();
            if off > c0 * on {
                continue;
            }
            let xb = x.matvec(&b).unwrap();
            let den = (xb.iter().map(|v| v * v).sum::<f64>() / x.rows() as f64).sqrt();
            best = best.max(on / den);
        }
    }
    best
}

#[test]
fn search_agrees_with_angular_grid_in_three_dimensions() {
    for seed in 0..3 {
        let x = gaussian_design(50 + seed, 6, 3);
        let d = DesignOperator::vector(x.clone());
        let cone = l1_cone(3, &[0], 1.5);
        let e = compatibility_factor(&d, &cone, &SearchBudget::default(), &RngStream::new(seed, 9)).unwrap();
        let grid = grid_mu(&x, &[0], 1.5);
        // the grid is a lower bound too; the search must match it closely
        assert!(e.lower >= grid * (1.0 - 1e-3), "search {} grid {grid}", e.lower);
        assert!(e.lower <= grid * 1.01, "search {} grid {grid}", e.lower);
        assert!(cone_contains(&cone, &e.argmax, 1e-12).unwrap());
    }
}

#[test]
fn mu_nondecreasing_and_route_consistent() {
    let x = gaussian_design(60, 30, 8);
    let d = DesignOperator::vector(x);
    let support = [0, 5];
    let budget = SearchBudget::default();
    let stream = RngStream::new(61, 0);
    let e1 = compatibility_factor(&d, &l1_cone(8, &support, 1.0), &budget, &stream).unwrap();
    let e5 = compatibility_factor(&d, &l1_cone(8, &support, 5.0), &budget, &stream).unwrap();
    assert!(e5.lower >= e1.lower * (1.0 - 1e-6), "{} < {}", e5.lower, e1.lower);
    for e in [&e1, &e5] {
        let route = e.re_route.unwrap();
        assert!(e.lower <= route * 1.05, "mu {} route {route}", e.lower);
    }
    let k1 = re_constant(&d, &l1_cone(8, &support, 1.0), &budget, &stream).unwrap();
    let k5 = re_constant(&d, &l1_cone(8, &support, 5.0), &budget, &stream).unwrap();
    assert!(k5 <= k1 * (1.0 + 1e-6));
}
