//! Isotropic heat semigroup on a ball tree.
//!
//! P^t moves a point to a μ-uniform point of a random ball around it; the
//! ball containing x with radius in [φ(w), φ(w⁻)) is picked with weight
//! c_w^t = σ^t(φ(w⁻)) − σ^t(φ(w)). Everything below is a sum over root
//! paths of those weights.

use nalgebra::DMatrix;
use num_rational::BigRational;
use serde::Serialize;

use crate::balltree::{intrinsic_radii, spectral_distribution, BallTree, Point, Sigma};
use crate::error::{Error, Result};
use crate::scalar::f64_to_rational;

#[derive(Debug, Clone)]
pub struct HeatModel {
    tree: BallTree,
    sigma: Sigma,
    /// log σ(φ(v)) at internal nodes, −∞ at leaves.
    ls: Vec<f64>,
    phi_star: Vec<f64>,
}

/// c_w^t for every node, leaves carrying the probability of staying put.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub t: f64,
    pub c: Vec<f64>,
}

impl HeatModel {
    pub fn new(tree: BallTree, sigma: Sigma) -> Result<Self> {
        let phi_star = intrinsic_radii(&tree, &sigma)?;
        let ls =
            (0..tree.len()).map(|v| if tree.is_leaf(v) { f64::NEG_INFINITY } else { -1.0 / phi_star[v] }).collect();
        Ok(HeatModel { tree, sigma, ls, phi_star })
    }

    /// Same tree, radii replaced by φ*, σ replaced by σ*.
    pub fn standard_form(&self) -> Result<HeatModel> {
        let tree = self.tree.with_radii(&self.phi_star)?;
        let phi_star = self.phi_star.clone();
        let ls = (0..tree.len())
            .map(|v| if tree.is_leaf(v) { f64::NEG_INFINITY } else { Sigma::Standard.log_sigma(tree.phi(v)).unwrap() })
            .collect();
        Ok(HeatModel { tree, sigma: Sigma::Standard, ls, phi_star })
    }

    pub fn tree(&self) -> &BallTree {
        &self.tree
    }

    pub fn sigma(&self) -> &Sigma {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.tree.n_leaves()
    }

    pub fn phi_star(&self, v: usize) -> f64 {
        self.phi_star[v]
    }

    pub fn phi_stars(&self) -> &[f64] {
        &self.phi_star
    }

    /// −log σ(φ(v)), the eigenvalue attached to the ball v.
    pub fn rate(&self, v: usize) -> f64 {
        -self.ls[v]
    }

    pub fn intrinsic_distance(&self, x: Point, y: Point) -> f64 {
        if x == y {
            0.0
        } else {
            self.phi_star[self.tree.meet(self.tree.leaf(x), self.tree.leaf(y))]
        }
    }

    pub fn spectral_n(&self, x: Point, tau: f64) -> f64 {
        spectral_distribution(&self.tree, &self.phi_star, x, tau)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn coefficients(&self, t: f64) -> Coefficients {
        let tr = &self.tree;
        let mut c = vec![0.0; tr.len()];
        for v in 0..tr.len() {
            let here = t * self.ls[v];
            c[v] = match tr.parent(v) {
                None => -here.exp_m1(),
                Some(p) => {
                    let up = t * self.ls[p];
                    if tr.is_leaf(v) {
                        up.exp()
                    } else {
                        // e^{up} − e^{here} with here < up
                        -up.exp() * (here - up).exp_m1()
                    }
                }
            };
        }
        Coefficients { t, c }
    }

    /// Σ_{u ∈ [w, root]} c_u/m(u) at every internal w.
    fn ancestor_sums(&self, co: &Coefficients) -> Vec<f64> {
        let tr = &self.tree;
        let mut s = vec![0.0; tr.len()];
        for v in 0..tr.len() {
            if tr.is_leaf(v) {
                continue;
            }
            let own = co.c[v] / tr.mass_f(v);
            s[v] = own + tr.parent(v).map_or(0.0, |p| s[p]);
        }
        s
    }

    pub fn heat_kernel(&self, t: f64, x: Point, y: Point) -> f64 {
        if t == 0.0 {
            return if x == y { 1.0 / self.tree.atom_mass(x) } else { 0.0 };
        }
        let tr = &self.tree;
        let lx = tr.leaf(x);
        let co = self.coefficients(t);
        let w = tr.meet(lx, tr.leaf(y));
        let mut total = 0.0;
        for u in tr.path_to_root(w) {
            if !tr.is_leaf(u) {
                total += co.c[u] / tr.mass_f(u);
            }
        }
        if x == y {
            total += co.c[lx] / tr.mass_f(lx);
        }
        total
    }

    /// Kernel values p(t, x, y) on all pairs of points.
    pub fn kernel_matrix(&self, t: f64) -> DMatrix<f64> {
        let tr = &self.tree;
        let n = tr.n_leaves();
        let co = self.coefficients(t);
        let s = self.ancestor_sums(&co);
        let mut k = DMatrix::zeros(n, n);
        for x in 0..n {
            let lx = tr.leaf(x);
            let mut below = lx;
            let mut u = tr.parent(lx);
            while let Some(w) = u {
                let (a, b) = tr.range(w);
                let (ca, cb) = tr.range(below);
                for y in (a..ca).chain(cb..b) {
                    k[(x, y)] = s[w];
                }
                below = w;
                u = tr.parent(w);
            }
            k[(x, x)] = s[tr.parent(lx).unwrap_or(lx)] + co.c[lx] / tr.mass_f(lx);
        }
        k
    }

    /// Transition matrix of P^t on atoms: entry (x, y) = p(t, x, y) μ(y).
    pub fn markov_matrix(&self, t: f64) -> DMatrix<f64> {
        let mut k = self.kernel_matrix(t);
        let m = self.tree.atom_masses();
        for (j, mut col) in k.column_iter_mut().enumerate() {
            col *= m[j];
        }
        k
    }

    /// The kernel through the spectral distribution:
    /// p(t,x,y) = t ∫_0^{1/d*(x,y)} N(x,τ) e^{−tτ} dτ, integrated exactly on the staircase.
    pub fn heat_kernel_via_n(&self, t: f64, x: Point, y: Point) -> f64 {
        let tr = &self.tree;
        let path = tr.path_to_root(tr.leaf(x));
        let mut jumps: Vec<f64> = path.iter().filter(|&&v| !tr.is_leaf(v)).map(|&v| 1.0 / self.phi_star[v]).collect();
        jumps.sort_by(f64::total_cmp);
        let upper = if x == y { f64::INFINITY } else { 1.0 / self.intrinsic_distance(x, y) };
        let mut edges = vec![0.0];
        edges.extend(jumps.into_iter().filter(|&j| j < upper * (1.0 - 1e-12)));
        edges.push(upper);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let probe = if b.is_finite() { 0.5 * (a + b) } else { a + 1.0 };
            let n = self.spectral_n(x, probe);
            let weight = if b.is_finite() { (-t * a).exp() * -(-(t * (b - a))).exp_m1() } else { (-t * a).exp() };
            total += n * weight;
        }
        total
    }

    /// Detailed balance μ(x)P^t(x,y) = μ(y)P^t(y,x), checked in exact
    /// rationals with the two kernel values evaluated separately.
    pub fn mu_symmetric_exact(&self, t: f64) -> bool {
        let n = self.n();
        let m: Vec<BigRational> = (0..n).map(|x| self.tree.mass(self.tree.leaf(x)).clone()).collect();
        for x in 0..n {
            for y in 0..x {
                let pxy = &m[y] * f64_to_rational(self.heat_kernel(t, x, y));
                let pyx = &m[x] * f64_to_rational(self.heat_kernel(t, y, x));
                if &m[x] * pxy != &m[y] * pyx {
                    return false;
                }
            }
        }
        true
    }

    /// J(x,y) = Σ_{w ∈ [x∧y, root)} (1/φ*(w) − 1/φ*(w⁻))/m(w) + 1/(φ*(root) m(root)).
    pub fn jump_kernel(&self, x: Point, y: Point) -> Result<f64> {
        if x == y {
            return Err(Error::DiagonalQuery);
        }
        let tr = &self.tree;
        let w = tr.meet(tr.leaf(x), tr.leaf(y));
        Ok(self.jump_from(w))
    }

    fn jump_from(&self, w: usize) -> f64 {
        let tr = &self.tree;
        let mut total = 0.0;
        for u in tr.path_to_root(w) {
            total += match tr.parent(u) {
                Some(p) => (1.0 / self.phi_star[u] - 1.0 / self.phi_star[p]) / tr.mass_f(u),
                None => 1.0 / (self.phi_star[u] * tr.mass_f(u)),
            };
        }
        total
    }

    /// J on all pairs, zero on the diagonal.
    pub fn jump_matrix(&self) -> DMatrix<f64> {
        let tr = &self.tree;
        let n = tr.n_leaves();
        let mut at = vec![0.0; tr.len()];
        for v in 0..tr.len() {
            if tr.is_leaf(v) {
                continue;
            }
            at[v] = match tr.parent(v) {
                Some(p) => at[p] + (1.0 / self.phi_star[v] - 1.0 / self.phi_star[p]) / tr.mass_f(v),
                None => 1.0 / (self.phi_star[v] * tr.mass_f(v)),
            };
        }
        let mut j = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    j[(x, y)] = at[tr.meet(tr.leaf(x), tr.leaf(y))];
                }
            }
        }
        j
    }

    /// Green function of a compact model: always recurrent.
    pub fn green(&self, x: Point, y: Point) -> Result<GreenValue> {
        if x == y {
            return Err(Error::DiagonalQuery);
        }
        Ok(GreenValue::Recurrent)
    }

    /// ∫_0^∞ of every term of the kernel except the root one:
    /// Σ_{w ∈ [x∧y, root)} (φ*(w⁻) − φ*(w))/m(w).
    pub fn green_partial_sum(&self, x: Point, y: Point) -> Result<f64> {
        if x == y {
            return Err(Error::DiagonalQuery);
        }
        let tr = &self.tree;
        let w = tr.meet(tr.leaf(x), tr.leaf(y));
        let mut total = 0.0;
        for u in tr.path_to_root(w) {
            if let Some(p) = tr.parent(u) {
                total += (self.phi_star[p] - self.phi_star[u]) / tr.mass_f(u);
            }
        }
        Ok(total)
    }

    /// M_γ(x,t) = Σ_y d*(x,y)^γ p(t,x,y) μ(y).
    pub fn moment_exact(&self, x: Point, gamma: f64, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let tr = &self.tree;
        let co = self.coefficients(t);
        let s = self.ancestor_sums(&co);
        let lx = tr.leaf(x);
        let mut total = 0.0;
        let mut below = lx;
        let mut u = tr.parent(lx);
        while let Some(w) = u {
            // points whose confluent with x is w
            let shell = tr.mass_f(w) - tr.mass_f(below);
            total += self.phi_star[w].powf(gamma) * s[w] * shell;
            below = w;
            u = tr.parent(w);
        }
        total
    }

    /// Jumps of the intrinsic volume V(x,·) along the root path:
    /// (r_j, ΔV_j) sorted by radius.
    fn volume_jumps(&self, x: Point) -> Vec<(f64, f64)> {
        let tr = &self.tree;
        let lx = tr.leaf(x);
        let mut out = Vec::new();
        let mut below = lx;
        let mut u = tr.parent(lx);
        while let Some(w) = u {
            out.push((self.phi_star[w], tr.mass_f(w) - tr.mass_f(below)));
            below = w;
            u = tr.parent(w);
        }
        out
    }

    /// R_γ(x,τ) = V(x,τ)^{−1} ∫_{(0,τ]} r^γ dV(x,r).
    pub fn average_moment(&self, x: Point, gamma: f64, tau: f64) -> f64 {
        let mut v = self.tree.atom_mass(x);
        let mut num = 0.0;
        for (r, dv) in self.volume_jumps(x) {
            if r <= tau * (1.0 + 1e-12) {
                v += dv;
                num += r.powf(gamma) * dv;
            }
        }
        num / v
    }

    /// M_γ(x,t) = ∫_0^∞ R_γ(x, t/s) e^{−s} ds on s ∈ [0, s_max].
    ///
    /// R_γ(x, t/s) is a step function of s with breaks at t/r_j; each piece
    /// is integrated in closed form. Returns the value and the bound
    /// R_max e^{−s_max} on the dropped tail.
    pub fn moment_quadrature(&self, x: Point, gamma: f64, t: f64, s_max: f64) -> (f64, f64) {
        if t == 0.0 {
            return (0.0, 0.0);
        }
        let jumps = self.volume_jumps(x);
        let mut breaks: Vec<f64> = jumps.iter().map(|&(r, _)| t / r).filter(|&s| s < s_max).collect();
        breaks.push(0.0);
        breaks.push(s_max);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let r = self.average_moment(x, gamma, t / (0.5 * (a + b)));
            total += r * (-a).exp() * -(-(b - a)).exp_m1();
        }
        let rmax = self.average_moment(x, gamma, f64::INFINITY);
        (total, rmax * (-s_max).exp())
    }

    pub fn moments(&self, x: Point, gamma: f64, t_grid: &[f64]) -> MomentReport {
        let d = self.phi_star[0];
        let mut rows = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let exact = self.moment_exact(x, gamma, t);
            let (quad, tail) = self.moment_quadrature(x, gamma, t, 40.0);
            let shape = compact_bracket(gamma, t);
            rows.push(MomentRow { t, exact, quadrature: quad, tail_bound: tail, shape, ratio: exact / shape });
        }
        let small: Vec<&MomentRow> = rows.iter().filter(|r| r.t > 0.0 && r.t <= 1.0).collect();
        let lower = small.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let upper = small.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let cap = self.average_moment(x, gamma, d);
        let within_diameter =
            rows.iter().all(|r| r.exact <= cap * (1.0 + 1e-12) && cap <= d.powf(gamma) * (1.0 + 1e-12));
        let max_diff = rows.iter().map(|r| (r.exact - r.quadrature).abs()).fold(0.0, f64::max);
        MomentReport { gamma, rows, lower, upper, within_diameter, max_diff }
    }

    pub fn envelope_check(&self, family: &Family, t_grid: &[f64]) -> Result<EnvelopeBand> {
        envelope_check(self, family, t_grid)
    }

    /// Points of the model paired with ‖·‖-style metric distances; the
    /// original metric d rather than the intrinsic one.
    pub fn metric_distance(&self, x: Point, y: Point) -> f64 {
        self.tree.distance(x, y).unwrap_or(0.0)
    }
}

fn compact_bracket(gamma: f64, t: f64) -> f64 {
    if (gamma - 1.0).abs() < 1e-12 {
        t * ((1.0 / t).ln() + 1.0)
    } else if gamma < 1.0 {
        t.powf(gamma)
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GreenValue {
    Finite(f64),
    Recurrent,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub exact: f64,
    pub quadrature: f64,
    pub tail_bound: f64,
    /// The small-t profile: t^γ, t(log 1/t + 1) or t.
    pub shape: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub gamma: f64,
    pub rows: Vec<MomentRow>,
    /// inf and sup of M/shape over grid points with t ≤ 1.
    pub lower: f64,
    pub upper: f64,
    /// M ≤ R_γ(x,D) ≤ D^γ at every t.
    pub within_diameter: bool,
    pub max_diff: f64,
}

/// Anything that can evaluate a heat kernel on a finite set of points.
pub trait KernelModel {
    fn n_points(&self) -> usize;
    fn kernel(&self, t: f64, x: Point, y: Point) -> f64;
    fn intrinsic_distance(&self, x: Point, y: Point) -> f64;
    fn metric_distance(&self, x: Point, y: Point) -> f64;
    fn spectral_n(&self, x: Point, tau: f64) -> f64;
    /// Prime of the underlying ℚₚ when the metric is p-adic.
    fn padic_prime(&self) -> Option<u64> {
        None
    }
}

impl KernelModel for HeatModel {
    fn n_points(&self) -> usize {
        self.n()
    }
    fn kernel(&self, t: f64, x: Point, y: Point) -> f64 {
        self.heat_kernel(t, x, y)
    }
    fn intrinsic_distance(&self, x: Point, y: Point) -> f64 {
        HeatModel::intrinsic_distance(self, x, y)
    }
    fn metric_distance(&self, x: Point, y: Point) -> f64 {
        HeatModel::metric_distance(self, x, y)
    }
    fn spectral_n(&self, x: Point, tau: f64) -> f64 {
        HeatModel::spectral_n(self, x, tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Family {
    /// t/(t+d*) N(x, 1/(t+d*))
    Doubling,
    /// N ≍ τ^α below 1 and τ^β above.
    Nab { alpha: f64, beta: f64 },
    /// N ≍ log^{−α}(1/τ); only grid points with t + d* > 2 count.
    Log { alpha: f64 },
    /// N ≍ exp(−τ^{−α}); reported against t/(t+d*) exp(−(t^{α/(α+1)} + d*^α)).
    Exp { alpha: f64 },
    /// t/(t^{1/α} + ‖x−y‖)^{1+α} in the original p-adic metric.
    Qp { p: u64, alpha: f64 },
}

impl Family {
    pub fn envelope<M: KernelModel + ?Sized>(&self, m: &M, t: f64, x: Point, y: Point) -> Option<f64> {
        let ds = m.intrinsic_distance(x, y);
        let s = t + ds;
        Some(match *self {
            Family::Doubling => t / s * m.spectral_n(x, 1.0 / s),
            Family::Nab { alpha, beta } => {
                if s <= 1.0 {
                    t / s.powf(1.0 + beta)
                } else {
                    t / s.powf(1.0 + alpha)
                }
            }
            Family::Log { alpha } => {
                if s <= 2.0 {
                    return None;
                }
                t / (s * s.ln().powf(alpha))
            }
            Family::Exp { alpha } => t / s * (-(t.powf(alpha / (alpha + 1.0)) + ds.powf(alpha))).exp(),
            Family::Qp { alpha, .. } => {
                let d = m.metric_distance(x, y);
                t / (t.powf(1.0 / alpha) + d).powf(1.0 + alpha)
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeBand {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    /// p(t,x,x) ≥ e^{−1} N(x,1/t) at every grid point.
    pub diagonal_lower_ok: bool,
    /// p(t,x,y) ≤ (t/d*) N(x,1/d*) at every off-diagonal grid point.
    pub offdiag_upper_ok: bool,
}

/// Band [inf, sup] of p / envelope over a t-grid and all pairs.
pub fn envelope_check<M: KernelModel + ?Sized>(m: &M, family: &Family, t_grid: &[f64]) -> Result<EnvelopeBand> {
    if let Family::Qp { p, .. } = family {
        if m.padic_prime() != Some(*p) {
            return Err(Error::FamilyMismatch(format!("model is not a {p}-adic model")));
        }
    }
    let n = m.n_points();
    let mut band =
        EnvelopeBand { lower: f64::INFINITY, upper: 0.0, points: 0, diagonal_lower_ok: true, offdiag_upper_ok: true };
    for &t in t_grid {
        for x in 0..n {
            for y in 0..n {
                let p = m.kernel(t, x, y);
                if x == y {
                    if p < (-1.0f64).exp() * m.spectral_n(x, 1.0 / t) * (1.0 - 1e-12) {
                        band.diagonal_lower_ok = false;
                    }
                } else {
                    let ds = m.intrinsic_distance(x, y);
                    if p > t / ds * m.spectral_n(x, 1.0 / ds) * (1.0 + 1e-12) {
                        band.offdiag_upper_ok = false;
                    }
                }
                if let Some(e) = family.envelope(m, t, x, y) {
                    let r = p / e;
                    band.lower = band.lower.min(r);
                    band.upper = band.upper.max(r);
                    band.points += 1;
                }
            }
        }
    }
    if band.points == 0 {
        return Err(Error::FamilyMismatch("no grid point lies in the family's range".into()));
    }
    Ok(band)
}

/// Volume growth laws V(s) of an analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GrowthLaw {
    Constant,
    /// V(s) = s^e
    Power {
        exponent: f64,
    },
    /// V(s) = exp(s^{1/α})
    StretchedExp {
        alpha: f64,
    },
}

impl std::str::FromStr for GrowthLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = || arg.parse::<f64>().map_err(|_| Error::UnknownGrowthLaw(s.to_string()));
        match kind {
            "constant" => Ok(GrowthLaw::Constant),
            "power" => Ok(GrowthLaw::Power { exponent: num()? }),
            "stretched-exp" => Ok(GrowthLaw::StretchedExp { alpha: num()? }),
            _ => Err(Error::UnknownGrowthLaw(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transience {
    pub transient: bool,
    /// ∫_1^∞ ds / V(s), infinite when recurrent.
    pub witness: f64,
    /// Two-sided constants of g(r) ≍ r/V(r) when they follow from the law.
    pub tauberian: Option<(f64, f64)>,
}

pub fn transience_test(law: GrowthLaw) -> Result<Transience> {
    Ok(match law {
        GrowthLaw::Constant => Transience { transient: false, witness: f64::INFINITY, tauberian: None },
        GrowthLaw::Power { exponent } => {
            if !(exponent > 0.0) {
                return Err(Error::UnknownGrowthLaw(format!("power:{exponent}")));
            }
            if exponent > 1.0 {
                let c = 1.0 / (exponent - 1.0);
                Transience { transient: true, witness: c, tauberian: Some((c, c)) }
            } else {
                Transience { transient: false, witness: f64::INFINITY, tauberian: None }
            }
        }
        GrowthLaw::StretchedExp { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::UnknownGrowthLaw(format!("stretched-exp:{alpha}")));
            }
            // s = u^α turns the integral into α Γ(α, 1)
            let w = alpha * statrs::function::gamma::gamma(alpha) * statrs::function::gamma::gamma_ur(alpha, 1.0);
            Transience { transient: true, witness: w, tauberian: None }
        }
    })
}

/// limsup_{τ→∞} log N(τ)/τ along jump points τ_k, estimated as the
/// supremum over k ∈ [K, 2K] for the largest K tried.
pub fn critical_time(n: impl Fn(f64) -> f64, jump: impl Fn(usize) -> f64) -> f64 {
    let mut last = 0.0;
    let mut k = 16;
    while k <= 4096 {
        let mut sup = f64::NEG_INFINITY;
        for j in k..=2 * k {
            let tau = jump(j);
            if !tau.is_finite() {
                break;
            }
            sup = sup.max(n(tau).ln() / tau);
        }
        if sup.is_finite() {
            last = sup;
        }
        k *= 2;
    }
    last.max(0.0)
}

impl HeatModel {
    /// N is bounded on a finite tree, so the critical time vanishes.
    pub fn critical_time(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balltree::padic_tree;

    #[test]
    fn coefficients_sum_to_one() {
        let m = HeatModel::new(padic_tree(2, 3, 1).unwrap(), Sigma::Standard).unwrap();
        let co = m.coefficients(0.7);
        let tr = m.tree();
        let s: f64 = tr.path_to_root(tr.leaf(3)).iter().map(|&v| co.c[v]).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn n_route_matches_path_sum() {
        let m = HeatModel::new(padic_tree(3, 3, 1).unwrap(), Sigma::Padic { alpha: 0.5, b: 3.0 }).unwrap();
        for (x, y) in [(0, 0), (0, 1), (0, 5), (4, 26)] {
            let a = m.heat_kernel(0.8, x, y);
            let b = m.heat_kernel_via_n(0.8, x, y);
            assert!((a - b).abs() < 1e-12 * a.max(1.0), "{a} {b}");
        }
    }
}
