//! Monte Carlo for the jump process and for tree walks.
//!
//! Every path draws from its own ChaCha stream (master seed, stream = path
//! index), so results do not depend on how paths are split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::balltree::{BallTree, Point};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::semigroup::HeatModel;
use crate::treewalk::RandomWalk;

const CHUNK: usize = 4096;

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Cumulative ball probabilities along the path from x's atom to the
/// root: entry k belongs to the k-th ball on that path.
#[derive(Debug, Clone)]
pub struct BallChooser {
    balls: Vec<usize>,
    cum: Vec<f64>,
}

impl BallChooser {
    pub fn new(model: &HeatModel, x: Point, t: f64) -> BallChooser {
        let tr = model.tree();
        let co = model.coefficients(t);
        let balls = tr.path_to_root(tr.leaf(x));
        let mut acc = 0.0;
        let cum = balls
            .iter()
            .map(|&w| {
                acc += co.c[w];
                acc
            })
            .collect();
        BallChooser { balls, cum }
    }

    pub fn balls(&self) -> &[usize] {
        &self.balls
    }

    /// Ball for a uniform u ∈ [0, 1); rounding slack falls to the root.
    pub fn pick(&self, u: f64) -> usize {
        let total = *self.cum.last().unwrap();
        let k = self.cum.partition_point(|&c| c <= u * total);
        self.balls[k.min(self.balls.len() - 1)]
    }

    /// Probability with which `pick` returns the k-th ball.
    pub fn weight(&self, k: usize) -> f64 {
        let total = *self.cum.last().unwrap();
        let lo = if k == 0 { 0.0 } else { self.cum[k - 1] };
        (self.cum[k] - lo) / total
    }
}

/// μ-uniform point of ∂T_w for a uniform u ∈ [0, 1), by bisection on prefix masses.
pub fn pick_leaf(tree: &BallTree, w: usize, u: f64) -> Point {
    let (a, b) = tree.range(w);
    let pre = tree.prefix_masses();
    let target = pre[a] + u * (pre[b] - pre[a]);
    let k = a + pre[a + 1..=b].partition_point(|&c| c <= target);
    k.min(b - 1)
}

/// Position after one step of length t from x.
pub fn step<R: Rng>(model: &HeatModel, chooser: &BallChooser, rng: &mut R) -> (usize, Point) {
    let w = chooser.pick(rng.gen());
    (w, pick_leaf(model.tree(), w, rng.gen()))
}

/// Law of the sampler, read off from the two inverse-CDF maps: the ball
/// map's interval lengths times the u-measure each leaf receives under
/// `pick_leaf`.
pub fn sampler_law(model: &HeatModel, x: Point, t: f64) -> Vec<f64> {
    let tr = model.tree();
    let ch = BallChooser::new(model, x, t);
    let pre = tr.prefix_masses();
    let mut law = vec![0.0; tr.n_leaves()];
    for (k, &w) in ch.balls().iter().enumerate() {
        let (a, b) = tr.range(w);
        let span = pre[b] - pre[a];
        // breakpoints of pick_leaf in u, then probe each piece
        let mut cuts: Vec<f64> = (a..=b).map(|i| (pre[i] - pre[a]) / span).collect();
        cuts[b - a] = 1.0;
        for piece in cuts.windows(2) {
            if piece[1] > piece[0] {
                let y = pick_leaf(tr, w, 0.5 * (piece[0] + piece[1]));
                law[y] += ch.weight(k) * (piece[1] - piece[0]);
            }
        }
    }
    law
}

#[derive(Debug, Clone, Serialize)]
pub struct Empirical {
    pub n: u64,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Empirical {
    fn from_counts(counts: Vec<u64>) -> Empirical {
        let n: u64 = counts.iter().sum();
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let stderr = probs.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).collect();
        Empirical { n, counts, probs, stderr }
    }

    pub fn tv_distance(&self, exact: &[f64]) -> f64 {
        tv_distance(&self.probs, exact)
    }
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn count_parallel(n_cells: usize, n_paths: u64, draw: impl Fn(u64) -> usize + Sync) -> Vec<u64> {
    let chunks = n_paths.div_ceil(CHUNK as u64);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; n_cells];
            for i in c * CHUNK as u64..((c + 1) * CHUNK as u64).min(n_paths) {
                counts[draw(i)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; n_cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Empirical law of X_t started at x0, one exact draw per path.
pub fn sample_jump(model: &HeatModel, x0: Point, t: f64, n_paths: u64, seed: u64) -> Result<Empirical> {
    model.tree().check_point(x0)?;
    if !(t > 0.0) || n_paths == 0 {
        return Err(Error::Invalid("need t > 0 and at least one path".into()));
    }
    let ch = BallChooser::new(model, x0, t);
    let counts = count_parallel(model.tree().n_leaves(), n_paths, |i| step(model, &ch, &mut path_rng(seed, i)).1);
    Ok(Empirical::from_counts(counts))
}

/// Two consecutive steps of lengths s and t per path.
pub fn sample_composed(model: &HeatModel, x0: Point, s: f64, t: f64, n_paths: u64, seed: u64) -> Result<Empirical> {
    model.tree().check_point(x0)?;
    let first = BallChooser::new(model, x0, s);
    let n = model.tree().n_leaves();
    let second: Vec<BallChooser> = (0..n).map(|x| BallChooser::new(model, x, t)).collect();
    let counts = count_parallel(n, n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let (_, y) = step(model, &first, &mut rng);
        step(model, &second[y], &mut rng).1
    });
    Ok(Empirical::from_counts(counts))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of counts against probabilities; cells with expected
/// count below 5 are pooled.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> ChiSquare {
    let n: u64 = counts.iter().sum();
    let mut cells = Vec::new();
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e >= 5.0 {
            cells.push((c as f64, e));
        } else {
            pooled_o += c as f64;
            pooled_e += e;
        }
    }
    if pooled_e > 0.0 {
        cells.push((pooled_o, pooled_e));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|d| 1.0 - d.cdf(statistic)).unwrap_or(f64::NAN);
    ChiSquare { statistic, dof, p_value }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    /// Radius of the chosen ball; 0 for the atom itself.
    pub radius: f64,
    pub ball: usize,
    pub leaf: Point,
}

/// One trajectory of the discrete chain: the t = 1 step iterated.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub seed: u64,
    pub horizon: u64,
    pub events: Vec<Event>,
    pub final_leaf: Point,
}

pub fn sample_path(model: &HeatModel, x0: Point, horizon: u64, seed: u64, path: u64) -> Result<PathSample> {
    let tr = model.tree();
    tr.check_point(x0)?;
    let choosers: Vec<BallChooser> = (0..tr.n_leaves()).map(|x| BallChooser::new(model, x, 1.0)).collect();
    let mut rng = path_rng(seed, path);
    let mut x = x0;
    let mut events = Vec::with_capacity(horizon as usize);
    for k in 1..=horizon {
        let (w, y) = step(model, &choosers[x], &mut rng);
        let radius = if tr.is_leaf(w) { 0.0 } else { tr.phi(w) };
        events.push(Event { time: k as f64, radius, ball: w, leaf: y });
        x = y;
    }
    Ok(PathSample { seed, horizon, events, final_leaf: x })
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkEmpirical {
    pub hits: Empirical,
    pub mean_steps: f64,
}

/// Absorption law of a finite walk from u0.
pub fn sample_walk<T: Scalar + Sync>(
    walk: &RandomWalk<T>,
    u0: usize,
    n_paths: u64,
    seed: u64,
) -> Result<WalkEmpirical> {
    let sh = walk.shape();
    if u0 >= sh.len() {
        return Err(Error::UnknownNode(u0));
    }
    // per vertex: neighbours with cumulative probabilities
    let table: Vec<(Vec<usize>, Vec<f64>)> = (0..sh.len())
        .map(|u| {
            let nb = sh.neighbours(u);
            let mut acc = 0.0;
            let cum = nb
                .iter()
                .map(|&v| {
                    acc += walk.p(u, v).to_f64();
                    acc
                })
                .collect();
            (nb, cum)
        })
        .collect();
    let leaf_pos: std::collections::HashMap<usize, usize> =
        sh.leaves().iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let cap = 1u64 << 32;
    let chunks = n_paths.div_ceil(CHUNK as u64);
    let nl = sh.leaves().len();
    let run = |i: u64| -> Result<(usize, u64)> {
        let mut rng = path_rng(seed, i);
        let mut u = u0;
        let mut steps = 0u64;
        while !sh.is_leaf(u) {
            let (nb, cum) = &table[u];
            let r: f64 = rng.gen::<f64>() * cum[cum.len() - 1];
            let k = cum.partition_point(|&c| c <= r).min(nb.len() - 1);
            u = nb[k];
            steps += 1;
            if steps > cap {
                return Err(Error::NonAbsorbing);
            }
        }
        Ok((leaf_pos[&u], steps))
    };
    let (counts, steps) = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<u64>, u64)> {
            let mut counts = vec![0u64; nl];
            let mut steps = 0u64;
            for i in c * CHUNK as u64..((c + 1) * CHUNK as u64).min(n_paths) {
                let (l, s) = run(i)?;
                counts[l] += 1;
                steps += s;
            }
            Ok((counts, steps))
        })
        .try_reduce(
            || (vec![0u64; nl], 0),
            |(mut a, sa), (b, sb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok((a, sa + sb))
            },
        )?;
    Ok(WalkEmpirical { hits: Empirical::from_counts(counts), mean_steps: steps as f64 / n_paths as f64 })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub ci: (f64, f64),
    pub exact: f64,
    pub covered: bool,
}

/// Sample mean of d*(x0, X_t)^γ with a percentile bootstrap interval.
///
/// The statistic only takes one value per ball on the path of x0, so a
/// bootstrap resample is a multinomial draw over those values, generated
/// by successive conditional binomials.
#[allow(clippy::too_many_arguments)]
pub fn empirical_moments(
    model: &HeatModel,
    x0: Point,
    gamma: f64,
    t: f64,
    n_paths: u64,
    seed: u64,
    n_boot: usize,
    level: f64,
) -> Result<MomentEstimate> {
    let tr = model.tree();
    tr.check_point(x0)?;
    if t == 0.0 {
        return Ok(MomentEstimate { mean: 0.0, ci: (0.0, 0.0), exact: 0.0, covered: true });
    }
    let emp = sample_jump(model, x0, t, n_paths, seed)?;
    let values: Vec<f64> = (0..tr.n_leaves()).map(|y| model.intrinsic_distance(x0, y).powf(gamma)).collect();
    let mean = emp.probs.iter().zip(&values).map(|(p, v)| p * v).sum::<f64>();
    let cells: Vec<(f64, u64)> = values.iter().copied().zip(emp.counts.iter().copied()).filter(|c| c.1 > 0).collect();
    let mut rng = path_rng(seed, u64::MAX);
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut left = n_paths;
        let mut prob_left = 1.0f64;
        let mut sum = 0.0;
        for (i, &(v, c)) in cells.iter().enumerate() {
            let q = c as f64 / n_paths as f64;
            let k = if i + 1 == cells.len() {
                left
            } else {
                let pr = (q / prob_left).clamp(0.0, 1.0);
                Binomial::new(left, pr).map_err(|e| Error::Invalid(e.to_string()))?.sample(&mut rng)
            };
            sum += k as f64 * v;
            left -= k;
            prob_left -= q;
        }
        stats.push(sum / n_paths as f64);
    }
    stats.sort_by(f64::total_cmp);
    let lo = stats[((1.0 - level) / 2.0 * n_boot as f64).floor() as usize];
    let hi = stats[(((1.0 + level) / 2.0 * n_boot as f64).ceil() as usize).min(n_boot - 1)];
    let exact = model.moment_exact(x0, gamma, t);
    Ok(MomentEstimate { mean, ci: (lo, hi), exact, covered: lo <= exact && exact <= hi })
}
