use penreg::model::{dual_norm_statistic, DesignOperator, Groups, Shape};
use penreg::numeric::{gauss_sample, norm2, svd, Mat, RngStream};
use penreg::penalties::{
    check_decomposability, default_zero_tol, penalty_norm, projector_cross_term, support_of, PenaltyKind,
    PenaltySpec,
};
use proptest::prelude::*;

fn kinds() -> Vec<PenaltyKind> {
    vec![
        PenaltyKind::L1,
        PenaltyKind::Group(Groups::new(vec![(0, 3), (3, 4), (4, 8), (8, 12)]).unwrap()),
        PenaltyKind::Nuclear { k: 3, m: 4 },
    ]
}

fn spec(kind: PenaltyKind) -> PenaltySpec<f64> {
    PenaltySpec::new(kind, 1.0).unwrap()
}

fn prox_objective(kind: &PenaltyKind, z: &[f64], v: &[f64], t: f64) -> f64 {
    let d2: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * d2 + t * kind.norm(z).unwrap()
}

/// A random element with the structure the penalty rewards: sparse, block
/// sparse, or low rank.
fn structured(kind: &PenaltyKind, seed: u64) -> Vec<f64> {
    let g: Vec<f64> = gauss_sample(&RngStream::new(seed, 77), 12);
    match kind {
        PenaltyKind::L1 => g.iter().enumerate().map(|(i, &x)| if i % 4 == (seed as usize) % 4 { x } else { 0.0 }).collect(),
        PenaltyKind::Group(groups) => {
            let keep = (seed as usize) % groups.len();
            let mut out = vec![0.0; 12];
            for j in groups.block(keep) {
                out[j] = g[j];
            }
            out
        }
        PenaltyKind::Nuclear { k, m } => {
            let u: Vec<f64> = gauss_sample(&RngStream::new(seed, 78), *k);
            let v: Vec<f64> = gauss_sample(&RngStream::new(seed, 79), *m);
            (0..k * m).map(|i| u[i / m] * v[i % m]).collect()
        }
    }
}

#[test]
fn prox_beats_random_perturbations() {
    for kind in kinds() {
        let mut worst = f64::INFINITY;
        for case in 0..100u64 {
            let v: Vec<f64> = gauss_sample(&RngStream::new(case, 1), 12);
            let t = 0.1 + (case % 10) as f64 * 0.2;
            let z = kind.prox(&v, t).unwrap();
            let base = prox_objective(&kind, &z, &v, t);
            for dir_id in 0..100u64 {
                let mut dir: Vec<f64> = gauss_sample(&RngStream::new(case, 1000 + dir_id), 12);
                let nd = norm2(&dir);
                dir.iter_mut().for_each(|x| *x /= nd);
                let eps = if dir_id % 2 == 0 { 1e-4 } else { 1e-2 };
                let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
                worst = worst.min(prox_objective(&kind, &zp, &v, t) - base);
            }
        }
        assert!(worst >= -1e-10, "{}: {worst}", kind.name());
    }
}

/// Multi-resolution grid search for the 2×2 SVT objective.
fn grid_svt(v: &[f64], t: f64) -> Vec<f64> {
    let kind = PenaltyKind::Nuclear { k: 2, m: 2 };
    let mut center = [0.0; 4];
    let mut half = 6.0;
    let pts = 20;
    for _ in 0..10 {
        let mut best = (f64::INFINITY, center);
        let h = 2.0 * half / pts as f64;
        for a in 0..=pts {
            for b in 0..=pts {
                for c in 0..=pts {
                    for d in 0..=pts {
                        let z = [
                            center[0] - half + a as f64 * h,
                            center[1] - half + b as f64 * h,
                            center[2] - half + c as f64 * h,
                            center[3] - half + d as f64 * h,
                        ];
                        let f = prox_objective(&kind, &z, v, t);
                        if f < best.0 {
                            best = (f, z);
                        }
                    }
                }
            }
        }
        center = best.1;
        half = 2.0 * h;
    }
    center.to_vec()
}

#[test]
fn svt_matches_grid_search_on_2x2() {
    let kind = PenaltyKind::Nuclear { k: 2, m: 2 };
    for case in 0..4u64 {
        let v: Vec<f64> = gauss_sample(&RngStream::new(case, 5), 4).iter().map(|x| 2.0 * x).collect();
        let t = 0.5 + case as f64 * 0.4;
        let z = kind.prox(&v, t).unwrap();
        let g = grid_svt(&v, t);
        for (a, b) in z.iter().zip(&g) {
            assert!((a - b).abs() < 1e-3, "case {case}: prox {z:?} grid {g:?}");
        }
    }
}

#[test]
fn decomposability_on_random_pairs() {
    for kind in kinds() {
        let pen = spec(kind.clone());
        let (mut worst_violation, mut worst_slack) = (0.0f64, f64::INFINITY);
        for case in 0..100u64 {
            let a = structured(&kind, case);
            let b: Vec<f64> = gauss_sample(&RngStream::new(case, 2), 12);
            let tol = default_zero_tol(&kind, &a, 1e-8).unwrap();
            let d = check_decomposability(&pen, &a, &b, tol).unwrap();
            worst_violation = worst_violation.max(d.violation);
            worst_slack = worst_slack.min(d.slack);
            let zero = check_decomposability(&pen, &a, &[0.0; 12], tol).unwrap();
            assert!(zero.violation <= 1e-12);
        }
        assert!(worst_violation <= 1e-9, "{}: {worst_violation}", kind.name());
        assert!(worst_slack >= -1e-9, "{}: {worst_slack}", kind.name());
    }
}

#[test]
fn projector_calculus() {
    for kind in kinds() {
        for case in 0..50u64 {
            let a = structured(&kind, case);
            let b: Vec<f64> = gauss_sample(&RngStream::new(case, 3), 12);
            let p = support_of(&kind, &a, default_zero_tol(&kind, &a, 1e-8).unwrap()).unwrap();
            let pa = p.support(&a).unwrap();
            assert!(pa.iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-10), "P_A(A) = A for {}", kind.name());
            let pb = p.support(&b).unwrap();
            let ppb = p.support(&pb).unwrap();
            assert!(pb.iter().zip(&ppb).all(|(x, y)| (x - y).abs() <= 1e-12));
            let cb = p.complement(&b).unwrap();
            let ccb = p.complement(&cb).unwrap();
            assert!(cb.iter().zip(&ccb).all(|(x, y)| (x - y).abs() <= 1e-12));
            assert!(pb.iter().zip(&cb).zip(&b).all(|((x, y), z)| (x + y - z).abs() <= 1e-12));
            assert!(projector_cross_term(&p, &b).unwrap().abs() <= 1e-10);
        }
    }
}

#[test]
fn dual_norm_statistic_is_the_sup_over_the_unit_ball() {
    let n = 15;
    let x = Mat::from_vec(n, 12, gauss_sample(&RngStream::new(4, 0), n * 12)).unwrap();
    let xi: Vec<f64> = gauss_sample(&RngStream::new(4, 1), n);
    for kind in kinds() {
        let shape = match &kind {
            PenaltyKind::L1 => Shape::Vector { p: 12 },
            PenaltyKind::Group(g) => Shape::Grouped(g.clone()),
            PenaltyKind::Nuclear { k, m } => Shape::Matrix { k: *k, m: *m },
        };
        let design = DesignOperator::new(x.clone(), shape).unwrap();
        let pen = spec(kind.clone());
        let stat = dual_norm_statistic(&design, &xi, &pen).unwrap();
        let corr: Vec<f64> = design.adjoint(&xi).unwrap().iter().map(|c| c / n as f64).collect();
        let value = |v: &[f64]| corr.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..10_000u64 {
            let mut v: Vec<f64> = gauss_sample(&RngStream::new(i, 9), 12);
            let nv = kind.norm(&v).unwrap();
            v.iter_mut().for_each(|x| *x /= nv);
            assert!(value(&v) <= stat + 1e-12);
        }
        // analytic maximiser
        let best: Vec<f64> = match &kind {
            PenaltyKind::L1 => {
                let j = (0..12).max_by(|&a, &b| corr[a].abs().partial_cmp(&corr[b].abs()).unwrap()).unwrap();
                let mut e = vec![0.0; 12];
                e[j] = corr[j].signum();
                e
            }
            PenaltyKind::Group(g) => {
                let k = (0..g.len())
                    .max_by(|&a, &b| norm2(&corr[g.block(a)]).partial_cmp(&norm2(&corr[g.block(b)])).unwrap())
                    .unwrap();
                let nb = norm2(&corr[g.block(k)]);
                let mut e = vec![0.0; 12];
                for j in g.block(k) {
                    e[j] = corr[j] / nb;
                }
                e
            }
            PenaltyKind::Nuclear { k, m } => {
                let s = svd(&Mat::from_vec(*k, *m, corr.clone()).unwrap()).unwrap();
                (0..k * m).map(|i| s.left[(i / m, 0)] * s.right[(i % m, 0)]).collect()
            }
        };
        assert!((kind.norm(&best).unwrap() - 1.0).abs() < 1e-12);
        assert!((value(&best) - stat).abs() < 1e-12, "{}", kind.name());
    }
}

#[test]
fn dual_norm_statistic_examples() {
    let id = DesignOperator::vector(Mat::<f64>::identity(2));
    let l1 = spec(PenaltyKind::L1);
    assert_eq!(dual_norm_statistic(&id, &[0.0, 0.0], &l1).unwrap(), 0.0);
    assert_eq!(dual_norm_statistic(&id, &[2.0, -4.0], &l1).unwrap(), 2.0);
    let e11 = DesignOperator::new(Mat::from_vec(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap(), Shape::Matrix { k: 2, m: 2 })
        .unwrap();
    let nuc = spec(PenaltyKind::Nuclear { k: 2, m: 2 });
    assert!((dual_norm_statistic(&e11, &[3.0], &nuc).unwrap() - 3.0).abs() < 1e-12);
    let wrong = spec(PenaltyKind::Nuclear { k: 3, m: 3 });
    assert!(dual_norm_statistic(&e11, &[3.0], &wrong).is_err());
}

fn vec12() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn norm_axioms(a in vec12(), b in vec12(), c in -4.0f64..4.0) {
        for kind in kinds() {
            let pen = spec(kind);
            let na = penalty_norm(&pen, &a).unwrap();
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            prop_assert!((penalty_norm(&pen, &scaled).unwrap() - c.abs() * na).abs() <= 1e-10 * na.max(1.0));
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(penalty_norm(&pen, &sum).unwrap() <= na + penalty_norm(&pen, &b).unwrap() + 1e-10);
            prop_assert!(penalty_norm(&pen, &[0.0; 12]).unwrap() <= 1e-12);
            if norm2(&a) > 1e-6 {
                prop_assert!(na > 1e-12);
            }
        }
    }

    #[test]
    fn prox_first_order_optimality(v in vec12(), t in 0.0f64..3.0, seed in any::<u64>()) {
        for kind in kinds() {
            let z = kind.prox(&v, t).unwrap();
            let base = prox_objective(&kind, &z, &v, t);
            for k in 0..20u64 {
                let mut dir: Vec<f64> = gauss_sample(&RngStream::new(seed, k), 12);
                let nd = norm2(&dir);
                dir.iter_mut().for_each(|x| *x /= nd);
                let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + 1e-4 * b).collect();
                prop_assert!(base <= prox_objective(&kind, &zp, &v, t) + 1e-10);
            }
        }
    }
}
