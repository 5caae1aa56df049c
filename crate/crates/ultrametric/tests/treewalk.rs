use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ultrametric::scalar::{rat, Scalar};
use ultrametric::treewalk::{
    boundary_to_walk, random_walk, walk_to_boundary, HomogeneousWalk, RandomWalk, Shape, SolvedWalk, WalkModel,
    WalkSpec,
};
use ultrametric::Error;

type Q = BigRational;

fn zero() -> Q {
    <Q as Scalar>::zero()
}

fn one() -> Q {
    <Q as Scalar>::one()
}

/// (I − Q)^{-1} over the interior vertices by Gauss–Jordan elimination.
fn green_oracle(w: &RandomWalk<Q>) -> (Vec<usize>, Vec<Vec<Q>>) {
    let sh = w.shape();
    let inner: Vec<usize> = (0..sh.len()).filter(|&v| !sh.is_leaf(v)).collect();
    let k = inner.len();
    let p = w.transition_matrix();
    let mut a: Vec<Vec<Q>> = (0..k)
        .map(|i| {
            let mut row: Vec<Q> =
                (0..k).map(|j| if i == j { one() } else { zero() } - p[inner[i]][inner[j]].clone()).collect();
            row.extend((0..k).map(|j| if i == j { one() } else { zero() }));
            row
        })
        .collect();
    for c in 0..k {
        let piv = (c..k).find(|&r| a[r][c] != zero()).expect("I − Q is invertible");
        a.swap(c, piv);
        let d = a[c][c].clone();
        a[c].iter_mut().for_each(|x| *x = x.clone() / d.clone());
        for r in 0..k {
            if r != c && a[r][c] != zero() {
                let f = a[r][c].clone();
                let pivot = a[c].clone();
                for (x, v) in a[r].iter_mut().zip(pivot) {
                    *x = x.clone() - f.clone() * v;
                }
            }
        }
    }
    (inner, a.into_iter().map(|row| row[k..].to_vec()).collect())
}

fn walks(seed: u64, count: usize) -> Vec<RandomWalk<Q>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_walk(&mut rng, 30, 5)).collect()
}

#[test]
fn green_and_hitting_match_linear_algebra() {
    for w in walks(11, 20) {
        let s = w.solve().unwrap();
        let sh = w.shape();
        let (inner, g) = green_oracle(&w);
        let p = w.transition_matrix();
        for (i, &u) in inner.iter().enumerate() {
            for (j, &v) in inner.iter().enumerate() {
                assert_eq!(s.g(u, v).unwrap(), g[i][j]);
                if u != v {
                    assert_eq!(s.f(u, v), g[i][j].clone() / g[j][j].clone());
                }
            }
            // absorption: Σ_w G(u, w) p(w, ℓ)
            let nu = s.hitting_distribution(u);
            for (li, &l) in sh.leaves().iter().enumerate() {
                let mut want = zero();
                for (j, &x) in inner.iter().enumerate() {
                    want += g[i][j].clone() * p[x][l].clone();
                }
                assert_eq!(nu[li], want);
            }
            let total = nu.iter().fold(zero(), |a, b| a + b.clone());
            assert_eq!(total, one());
            assert_eq!(s.u(u), one() - g[i][i].recip());
            for v in 0..sh.len() {
                let ball = sh
                    .leaves()
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| sh.in_branch(v, l))
                    .fold(zero(), |a, (li, _)| a + nu[li].clone());
                assert_eq!(s.nu_ball(u, v), ball);
            }
        }
        assert!(s.g_diag(sh.leaves()[0]).is_err());
    }
}

#[test]
fn poisson_transform_is_harmonic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for w in walks(13, 20) {
        let s = w.solve().unwrap();
        let sh = w.shape();
        let phi: Vec<Q> = sh.leaves().iter().map(|_| rat(rng.gen_range(-9..10), rng.gen_range(1..5))).collect();
        let h = s.poisson(&phi);
        let p = w.transition_matrix();
        for u in 0..sh.len() {
            if sh.is_leaf(u) {
                let li = sh.leaves().iter().position(|&l| l == u).unwrap();
                assert_eq!(h[u], phi[li]);
            } else {
                let avg = sh.neighbours(u).into_iter().fold(zero(), |a, v| a + p[u][v].clone() * h[v].clone());
                assert_eq!(h[u], avg);
                let direct =
                    s.hitting_distribution(u).iter().zip(&phi).fold(zero(), |a, (n, f)| a + n.clone() * f.clone());
                assert_eq!(h[u], direct);
            }
        }
    }
}

#[test]
fn reversing_measure_and_conductances() {
    for w in walks(14, 20) {
        let sh = w.shape();
        let m = w.reversing_measure();
        assert_eq!(m[0], one());
        let a = w.conductances();
        for v in 1..sh.len() {
            let u = sh.parent(v).unwrap();
            if !sh.is_leaf(v) {
                assert_eq!(m[u].clone() * w.p(u, v), m[v].clone() * w.p(v, u));
                assert_eq!(a[v], m[v].clone() * w.p(v, u));
            } else {
                assert_eq!(a[v], m[u].clone() * w.p(u, v));
            }
        }
        // transitions are recovered from the conductances
        let back = RandomWalk::from_conductances(sh.clone(), &a).unwrap();
        for u in 0..sh.len() {
            for v in sh.neighbours(u) {
                assert_eq!(back.p(u, v), w.p(u, v));
            }
        }
    }
}

#[test]
fn rerooting_keeps_the_walk() {
    for w in walks(15, 15) {
        let sh = w.shape();
        let Some(u) = sh.interior().find(|&u| u != 0) else { continue };
        let Ok((r, map)) = w.reroot(u) else { continue };
        assert_eq!(r.shape().parent(map[u]), None);
        for a in 0..sh.len() {
            for b in sh.neighbours(a) {
                if !sh.is_leaf(a) {
                    assert_eq!(r.p(map[a], map[b]), w.p(a, b));
                }
            }
        }
        let (s, t) = (w.solve().unwrap(), r.solve().unwrap());
        for a in sh.interior() {
            assert_eq!(t.g(map[a], map[0]).unwrap(), s.g(a, 0).unwrap());
        }
        assert_eq!(r.reversing_measure()[map[u]], w.reversing_measure()[u]);
        let phi = t.branch_indicator(t.shape().children(0)[0]);
        assert_eq!(t.doob_naim(&phi, &phi).unwrap().diff, zero());
    }
    let w = &walks(16, 1)[0];
    assert!(w.reroot(w.shape().leaves()[0]).is_err());
}

#[test]
fn boundary_round_trip() {
    for w in walks(17, 10) {
        let s = w.solve().unwrap();
        let b = walk_to_boundary(&s).unwrap();
        assert_eq!(b.mu.iter().fold(zero(), |a, x| a + x.clone()), one());
        let back = boundary_to_walk(w.shape(), &b.phi, &b.mu).unwrap();
        assert_eq!(back.c, one());
        assert!(back.defects.iter().all(|d| *d == zero()));
        for u in 0..w.shape().len() {
            for v in w.shape().neighbours(u) {
                assert_eq!(back.walk.p(u, v), w.p(u, v));
            }
        }
    }
    let sh = Shape::new(&[None, Some(0), Some(0)]).unwrap();
    assert_eq!(
        boundary_to_walk(&sh, &[rat(1, 1), zero(), zero()], &[rat(1, 2), zero()]).unwrap_err(),
        Error::MassGap(2)
    );
}

#[test]
fn rejects_bad_transitions() {
    let sh = Shape::new(&[None, Some(0), Some(0)]).unwrap();
    let err =
        RandomWalk::from_transitions(sh.clone(), vec![zero(), rat(1, 2), rat(1, 3)], vec![zero(); 3]).unwrap_err();
    assert_eq!(err, Error::SubStochasticInterior(0));
    assert!(RandomWalk::from_conductances(sh, &[zero(), rat(1, 1), zero()]).is_err());
    assert!(matches!(Shape::new(&[None, None]), Err(Error::MultipleRoots(_))));
}

/// The rooted homogeneous walk cut off at depth `depth`, solved.
fn truncated(h: &HomogeneousWalk<f64>, depth: usize) -> SolvedWalk<f64> {
    let p = h.p as usize;
    let n = (p.pow(depth as u32 + 1) - 1) / (p - 1);
    let parents: Vec<Option<usize>> = (0..n).map(|v| (v > 0).then(|| (v - 1) / p)).collect();
    let sh = Shape::new(&parents).unwrap();
    let down: Vec<f64> = (0..n)
        .map(|v| {
            if v == 0 {
                0.0
            } else if v <= p {
                1.0 / p as f64
            } else {
                h.p_down()
            }
        })
        .collect();
    let up: Vec<f64> = (0..n).map(|v| if v == 0 { 0.0 } else { h.p_up() }).collect();
    RandomWalk::from_transitions(sh, down, up).unwrap().solve().unwrap()
}

/// F and G on the infinite tree are limits of the truncations.
#[test]
fn homogeneous_walk_is_limit_of_truncations() {
    for (p, alpha) in [(2u64, 1.0), (3, 0.5), (2, 2.0), (5, 1.5)] {
        let h = HomogeneousWalk::float(p, alpha, false);
        let deep = match p {
            2 => 16,
            3 => 11,
            _ => 8,
        };
        let err = |depth: usize| {
            let s = truncated(&h, depth);
            let mut v = 0;
            let mut worst = (s.g_diag(0).unwrap() - h.green_diag()).abs() / h.green_diag();
            for level in 1..4u32 {
                v = s.shape().children(v)[0];
                worst = worst
                    .max((s.f_edge_up(v) - h.f_up()).abs())
                    .max((s.f(v, 0) - h.f_to_root(level)).abs())
                    .max((s.g(v, 0).unwrap() - h.green_to_root(level)).abs() / h.green_diag());
            }
            worst
        };
        let (coarse, fine) = (err(deep - 3), err(deep));
        assert!(fine < 0.5 * coarse && fine < 5e-3, "p={p} α={alpha}: {coarse} then {fine}");
        assert!((h.f_up() - h.closed_f_up()).abs() < 1e-12);
    }
}

#[test]
fn walk_spec_json() {
    let uniform: WalkSpec = serde_json::from_str(r#"{"tree":{"padic":{"p":2,"depth":2}}}"#).unwrap();
    let WalkModel::Finite(w) = uniform.build().unwrap() else { panic!() };
    assert_eq!(w.p(0, 1), rat(1, 2));
    assert_eq!(w.p(1, 0), rat(1, 3));

    let explicit = r#"{"tree":{"parents":[null,0,0,1,1]},
        "transitions":[{"from":0,"to":1,"p":"1/4"},{"from":0,"to":2,"p":0.75},
                       {"from":1,"to":0,"p":"1/2"},{"from":1,"to":3,"p":"1/4"},{"from":1,"to":4,"p":"1/4"}]}"#;
    let spec: WalkSpec = serde_json::from_str(explicit).unwrap();
    let WalkModel::Finite(w) = spec.build().unwrap() else { panic!() };
    assert_eq!(w.solve().unwrap().f(0, 2), w.solve().unwrap().hitting_distribution(0)[2]);

    let far: WalkSpec =
        serde_json::from_str(r#"{"tree":{"parents":[null,0,0]},"transitions":[{"from":1,"to":2,"p":1}]}"#).unwrap();
    assert!(matches!(far.build(), Err(Error::Invalid(_))));

    let hom: WalkSpec = serde_json::from_str(r#"{"mode":{"homogeneous":{"p":3,"alpha":1.0}}}"#).unwrap();
    assert!(matches!(hom.build().unwrap(), WalkModel::Homogeneous(h) if h.p == 3 && !h.two_sided));
}
