//! Eigen-decomposition of the isotropic Laplacian.
//!
//! For an internal ball B and a child C, the function
//! f_C = 1_C/μ(C) − 1_B/μ(B) is an eigenfunction with eigenvalue
//! −log σ(φ(B)). Dropping one child per ball leaves a basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::balltree::Sigma;
use crate::error::{Error, Result};
use crate::semigroup::HeatModel;

#[derive(Debug, Clone)]
pub struct Mode {
    pub ball: usize,
    pub parent: usize,
    pub lambda: f64,
    pub vector: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub modes: Vec<Mode>,
    pub constant: DVector<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Parent balls carrying the eigenvalue.
    pub balls: Vec<usize>,
}

/// f_C as a vector over points.
pub fn mode_vector(model: &HeatModel, c: usize) -> DVector<f64> {
    let tr = model.tree();
    let b = tr.parent(c).expect("modes hang below a parent ball");
    let mut f = DVector::zeros(tr.n_leaves());
    let (a0, a1) = tr.range(b);
    let (c0, c1) = tr.range(c);
    let mb = tr.mass_f(b);
    let mc = tr.mass_f(c);
    for x in a0..a1 {
        f[x] = if (c0..c1).contains(&x) { 1.0 / mc - 1.0 / mb } else { -1.0 / mb };
    }
    f
}

pub fn eigensystem(model: &HeatModel) -> EigenSystem {
    let tr = model.tree();
    let mut modes = Vec::new();
    for b in tr.internal_nodes() {
        let kids = tr.children(b);
        for &c in &kids[..kids.len() - 1] {
            modes.push(Mode { ball: c, parent: b, lambda: model.rate(b), vector: mode_vector(model, c) });
        }
    }
    let n = tr.n_leaves();
    EigenSystem { modes, constant: DVector::from_element(n, 1.0), dim: n }
}

impl EigenSystem {
    /// Eigenvalues grouped by relative tolerance 1e−12, with 0 first.
    pub fn spectrum(&self) -> Vec<SpectrumEntry> {
        let mut out = vec![SpectrumEntry { lambda: 0.0, multiplicity: 1, balls: Vec::new() }];
        let mut sorted: Vec<&Mode> = self.modes.iter().collect();
        sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        for m in sorted {
            let last = out.last_mut().unwrap();
            if last.lambda > 0.0 && (m.lambda - last.lambda).abs() <= 1e-12 * last.lambda {
                last.multiplicity += 1;
                if last.balls.last() != Some(&m.parent) {
                    last.balls.push(m.parent);
                }
            } else {
                out.push(SpectrumEntry { lambda: m.lambda, multiplicity: 1, balls: vec![m.parent] });
            }
        }
        out
    }

    /// μ-orthonormal basis: constant mode plus Gram–Schmidt inside each H_B.
    pub fn orthonormal(&self, model: &HeatModel) -> Vec<(f64, DVector<f64>)> {
        let m = DVector::from_vec(model.tree().atom_masses());
        let ip = |a: &DVector<f64>, b: &DVector<f64>| a.component_mul(b).dot(&m);
        let total = m.sum();
        let mut out = vec![(0.0, self.constant.clone() / total.sqrt())];
        let mut i = 0;
        while i < self.modes.len() {
            let b = self.modes[i].parent;
            let mut group: Vec<DVector<f64>> = Vec::new();
            while i < self.modes.len() && self.modes[i].parent == b {
                let mut v = self.modes[i].vector.clone();
                for g in &group {
                    v -= g * ip(g, &v);
                }
                let norm = ip(&v, &v).sqrt();
                v /= norm;
                out.push((self.modes[i].lambda, v.clone()));
                group.push(v);
                i += 1;
            }
        }
        out
    }

    /// p(t,x,y) = Σ_k e^{−λ_k t} e_k(x) e_k(y) over a μ-orthonormal basis.
    pub fn reconstruct_kernel(&self, model: &HeatModel, t: f64) -> DMatrix<f64> {
        let n = self.dim;
        let mut k = DMatrix::zeros(n, n);
        for (lambda, e) in self.orthonormal(model) {
            k.ger((-lambda * t).exp(), &e, &e, 1.0);
        }
        k
    }

    /// Scaled residuals ‖L f − λ f‖∞ / (λ ‖f‖∞) for every mode.
    pub fn residuals(&self, model: &HeatModel) -> Vec<f64> {
        let j = model.jump_matrix();
        let mu = model.tree().atom_masses();
        self.modes
            .iter()
            .map(|m| {
                let r = apply_with(&j, &mu, &m.vector) - &m.vector * m.lambda;
                r.amax() / (m.lambda * m.vector.amax())
            })
            .collect()
    }
}

/// Matrix of L: (L f)(x) = Σ_y (f(x) − f(y)) J(x,y) μ(y).
pub fn laplacian_matrix(model: &HeatModel) -> DMatrix<f64> {
    let j = model.jump_matrix();
    let m = model.tree().atom_masses();
    let n = m.len();
    let mut l = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut diag = 0.0;
        for y in 0..n {
            if x != y {
                let w = j[(x, y)] * m[y];
                l[(x, y)] = -w;
                diag += w;
            }
        }
        l[(x, x)] = diag;
    }
    l
}

/// L f summed pair by pair, so equal values cancel exactly instead of
/// through the large diagonal of the matrix form.
pub fn apply_laplacian(model: &HeatModel, f: &DVector<f64>) -> DVector<f64> {
    apply_with(&model.jump_matrix(), &model.tree().atom_masses(), f)
}

fn apply_with(j: &DMatrix<f64>, m: &[f64], f: &DVector<f64>) -> DVector<f64> {
    let n = m.len();
    DVector::from_fn(n, |x, _| (0..n).filter(|&y| y != x).map(|y| (f[x] - f[y]) * j[(x, y)] * m[y]).sum())
}

/// ½ Σ_x Σ_y (f(x)−f(y))(g(x)−g(y)) J(x,y) μ(x) μ(y).
pub fn dirichlet_form(model: &HeatModel, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let j = model.jump_matrix();
    let m = model.tree().atom_masses();
    let n = m.len();
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                total += (f[x] - f[y]) * (g[x] - g[y]) * j[(x, y)] * m[x] * m[y];
            }
        }
    }
    0.5 * total
}

/// Eigenvalues of L from a dense symmetric solver, ascending.
pub fn oracle_spectrum(model: &HeatModel) -> Vec<f64> {
    let l = laplacian_matrix(model);
    let m = model.tree().atom_masses();
    let n = m.len();
    // M^{1/2} L M^{−1/2} is symmetric because J is
    let s = DMatrix::from_fn(n, n, |x, y| l[(x, y)] * (m[x] / m[y]).sqrt());
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// A subordinating function ψ with ψ(0) = 0.
#[derive(Debug, Clone)]
pub enum Psi {
    Identity,
    Power(f64),
    Custom(fn(f64) -> f64),
}

impl Psi {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Psi::Identity => x,
            Psi::Power(a) => x.powf(*a),
            Psi::Custom(f) => f(x),
        }
    }
}

/// Model on the same tree with σ̃(r) = exp(−ψ(−log σ(r))).
pub fn subordinate(model: &HeatModel, psi: &Psi) -> Result<HeatModel> {
    let tr = model.tree();
    if psi.eval(0.0) != 0.0 {
        return Err(Error::NonMonotonePsi);
    }
    let mut pts: Vec<(f64, f64)> = tr.internal_nodes().map(|v| (tr.phi(v), -psi.eval(model.rate(v)))).collect();
    let mut rates: Vec<f64> = tr.internal_nodes().map(|v| model.rate(v)).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let mapped: Vec<f64> = rates.iter().map(|&r| psi.eval(r)).collect();
    if mapped.iter().any(|x| !x.is_finite() || *x <= 0.0) || mapped.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonePsi);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let sigma = Sigma::from_log_table(pts).map_err(|_| Error::NonMonotonePsi)?;
    HeatModel::new(tr.clone(), sigma)
}

/// dim ker(I − P^t) via singular values.
pub fn liouville_check(model: &HeatModel, t: f64) -> usize {
    let p = model.markov_matrix(t);
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - p;
    let sv = a.singular_values();
    let tol = 1e-10 * sv.max().max(1.0);
    sv.iter().filter(|&&s| s <= tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balltree::padic_tree;

    #[test]
    fn binary_tree_modes() {
        let m = HeatModel::new(padic_tree(2, 3, 1).unwrap(), Sigma::Standard).unwrap();
        let es = eigensystem(&m);
        assert_eq!(es.modes.len() + 1, 8);
        assert!(es.residuals(&m).iter().all(|&r| r < 1e-12));
    }
}
