use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ultrametric::balltree::{padic_tree, random_tree};
use ultrametric::scalar::Scalar;
use ultrametric::simulate::{
    chi_square, empirical_moments, sample_composed, sample_jump, sample_path, sample_walk, sampler_law, tv_distance,
};
use ultrametric::treewalk::random_walk;
use ultrametric::{HeatModel, Sigma};

fn models() -> Vec<HeatModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut out = vec![
        HeatModel::new(padic_tree(2, 4, 1).unwrap(), Sigma::Standard).unwrap(),
        HeatModel::new(padic_tree(3, 2, 1).unwrap(), Sigma::Padic { alpha: 1.0, b: 3.0 }).unwrap(),
    ];
    for _ in 0..3 {
        out.push(HeatModel::new(random_tree(&mut rng, 4, 4, 30), Sigma::Standard).unwrap());
    }
    out
}

#[test]
fn sampler_law_is_kernel_row() {
    for m in models() {
        for t in [0.1, 1.0, 5.0] {
            let p = m.markov_matrix(t);
            for x in 0..m.n() {
                let law = sampler_law(&m, x, t);
                let row: Vec<f64> = p.row(x).iter().copied().collect();
                assert!(tv_distance(&law, &row) < 1e-13);
            }
        }
    }
}

#[test]
fn jump_samples_follow_the_kernel() {
    let n = 200_000;
    for (k, m) in models().into_iter().enumerate() {
        let t = 0.8;
        let emp = sample_jump(&m, 0, t, n, 100 + k as u64).unwrap();
        let row: Vec<f64> = m.markov_matrix(t).row(0).iter().copied().collect();
        let chi = chi_square(&emp.counts, &row);
        assert!(chi.p_value >= 1e-3, "model {k}: {chi:?}");
        // E[TV] ≲ Σ √(p(1−p)/n) / 2
        let bound: f64 = row.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).sum::<f64>();
        assert!(emp.tv_distance(&row) < bound);
    }
}

#[test]
fn two_steps_follow_the_semigroup() {
    let m = &models()[0];
    let emp = sample_composed(m, 3, 0.4, 0.9, 200_000, 7).unwrap();
    let row: Vec<f64> = m.markov_matrix(1.3).row(3).iter().copied().collect();
    assert!(chi_square(&emp.counts, &row).p_value >= 1e-3);
}

#[test]
fn seeds_reproduce() {
    let m = &models()[2];
    let a = sample_jump(m, 1, 0.5, 10_000, 42).unwrap();
    let b = sample_jump(m, 1, 0.5, 10_000, 42).unwrap();
    let c = sample_jump(m, 1, 0.5, 10_000, 43).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_ne!(a.counts, c.counts);
    // a prefix of the paths does not depend on how many follow
    let short = sample_jump(m, 1, 0.5, 4096, 42).unwrap();
    let long = sample_jump(m, 1, 0.5, 8192, 42).unwrap();
    assert!(short.counts.iter().zip(&long.counts).all(|(s, l)| s <= l));

    let p = sample_path(m, 0, 50, 9, 3).unwrap();
    assert_eq!(p.events, sample_path(m, 0, 50, 9, 3).unwrap().events);
    assert_eq!(p.events.last().unwrap().leaf, p.final_leaf);
    let tr = m.tree();
    let mut x = 0;
    for e in &p.events {
        assert!(tr.path_to_root(tr.leaf(x)).contains(&e.ball));
        let (lo, hi) = tr.range(e.ball);
        assert!((lo..hi).contains(&e.leaf));
        assert_eq!(e.radius, if tr.is_leaf(e.ball) { 0.0 } else { tr.phi(e.ball) });
        x = e.leaf;
    }
}

#[test]
fn walk_absorption() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let w = random_walk(&mut rng, 25, 4);
        let s = w.solve().unwrap();
        let nu: Vec<f64> = s.hitting_distribution(0).iter().map(|q| q.to_f64()).collect();
        let emp = sample_walk(&w, 0, 100_000, 3).unwrap();
        assert!(chi_square(&emp.hits.counts, &nu).p_value >= 1e-3);
        // expected number of steps before absorption is Σ_w G(o, w)
        let steps: BigRational =
            w.shape().interior().map(|v| s.g(0, v).unwrap()).fold(<BigRational as Scalar>::zero(), |a, b| a + b);
        let steps = steps.to_f64();
        assert!((emp.mean_steps - steps).abs() < 0.03 * steps, "{} vs {steps}", emp.mean_steps);
    }
}

#[test]
fn pearson_statistic() {
    let chi = chi_square(&[50, 30, 20], &[0.5, 0.3, 0.2]);
    assert_eq!(chi.statistic, 0.0);
    assert!((chi.p_value - 1.0).abs() < 1e-12);
    // (60−50)²/50 + (40−50)²/50 = 4 on one degree of freedom
    let chi = chi_square(&[60, 40], &[0.5, 0.5]);
    assert!((chi.statistic - 4.0).abs() < 1e-12);
    assert_eq!(chi.dof, 1);
    assert!((chi.p_value - 0.0455).abs() < 1e-4);
}

#[test]
fn moment_intervals_cover() {
    let m = &models()[0];
    let covered = (0..20).filter(|&s| empirical_moments(m, 0, 1.0, 0.7, 20_000, s, 400, 0.95).unwrap().covered).count();
    assert!(covered >= 15, "{covered}/20");
    let zero = empirical_moments(m, 0, 1.0, 0.0, 10, 1, 10, 0.95).unwrap();
    assert_eq!(zero.mean, 0.0);
}

#[test]
fn rejects_bad_arguments() {
    let m = &models()[0];
    assert!(sample_jump(m, 999, 1.0, 10, 1).is_err());
    assert!(sample_jump(m, 0, 0.0, 10, 1).is_err());
    assert!(sample_jump(m, 0, 1.0, 0, 1).is_err());
    assert!(sample_path(m, 999, 5, 1, 0).is_err());
}
