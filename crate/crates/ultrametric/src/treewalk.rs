//! Nearest-neighbour random walks on trees and their boundary processes.
//!
//! Finite trees carry absorbing terminal vertices, so every walk is
//! transient and the leaves play the role of the boundary. All solvers are
//! generic over [`Scalar`]: run them in `BigRational` for exact identities
//! and in `f64` for large instances.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::balltree::{random_spec, BallTree, LeafSpec, MassValue, NodeSpec, PadicSpec, TreeSpec};
use crate::error::{Error, Result};
use crate::scalar::{half_power, min_root_unit, Quad, Scalar};
use crate::semigroup::HeatModel;
use crate::spectral::{apply_laplacian, mode_vector};
use crate::Sigma;

/// Rooted tree in level order: the root is 0 and parents precede children.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    leaves: Vec<usize>,
    external: Vec<usize>,
}

impl Shape {
    /// Builds from a parent list indexed by external id.
    pub fn new(parents: &[Option<usize>]) -> Result<Shape> {
        let n = parents.len();
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        match roots.len() {
            0 => return Err(Error::NoRoot),
            1 => {}
            _ => return Err(Error::MultipleRoots(roots)),
        }
        let mut kids = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::UnknownNode(p));
                }
                kids[p].push(i);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([roots[0]]);
        seen[roots[0]] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &kids[u] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Disconnected(i));
        }
        if n < 2 {
            return Err(Error::Invalid("a walk needs at least one edge".into()));
        }
        let mut new_id = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            new_id[i] = k;
        }
        let parent: Vec<Option<usize>> = order.iter().map(|&i| parents[i].map(|p| new_id[p])).collect();
        Ok(Shape::from_level_order(parent, order))
    }

    fn from_level_order(parent: Vec<Option<usize>>, external: Vec<usize>) -> Shape {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        let mut depth = vec![0; n];
        for v in 1..n {
            let p = parent[v].unwrap();
            children[p].push(v);
            depth[v] = depth[p] + 1;
        }
        let mut leaves = Vec::new();
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            if children[u].is_empty() {
                leaves.push(u);
            }
            stack.extend(children[u].iter().rev());
        }
        Shape { parent, children, depth, leaves, external }
    }

    /// Same vertex ids as the ball tree.
    pub fn from_tree(t: &BallTree) -> Shape {
        let parent = (0..t.len()).map(|v| t.parent(v)).collect();
        Shape::from_level_order(parent, (0..t.len()).collect())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    /// Terminal vertices in depth-first order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| !self.is_leaf(v))
    }

    pub fn external_id(&self, v: usize) -> usize {
        self.external[v]
    }

    pub fn neighbours(&self, u: usize) -> Vec<usize> {
        let mut out = self.children[u].clone();
        out.extend(self.parent[u]);
        out
    }

    pub fn meet(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a].unwrap();
            } else {
                b = self.parent[b].unwrap();
            }
        }
        a
    }

    /// Is `u` in the branch T_v?
    pub fn in_branch(&self, v: usize, mut u: usize) -> bool {
        loop {
            if u == v {
                return true;
            }
            match self.parent[u] {
                Some(p) if self.depth[p] >= self.depth[v] => u = p,
                _ => return false,
            }
        }
    }

    fn leaf_index(&self) -> HashMap<usize, usize> {
        self.leaves.iter().enumerate().map(|(i, &l)| (l, i)).collect()
    }
}

/// Walk with p(v, v⁻) in `up[v]` and p(v⁻, v) in `down[v]`; terminal
/// vertices are absorbing.
#[derive(Debug, Clone)]
pub struct RandomWalk<T> {
    shape: Shape,
    up: Vec<T>,
    down: Vec<T>,
    m_root: T,
}

fn close_to_one<T: Scalar>(s: &T) -> bool {
    if T::EXACT {
        *s == T::one()
    } else {
        (s.clone() - T::one()).to_f64().abs() <= 1e-12
    }
}

impl<T: Scalar> RandomWalk<T> {
    pub fn from_transitions(shape: Shape, down: Vec<T>, up: Vec<T>) -> Result<Self> {
        let n = shape.len();
        if down.len() != n || up.len() != n {
            return Err(Error::Invalid("transition vectors must cover every vertex".into()));
        }
        for u in shape.interior() {
            let mut s = T::zero();
            if u != 0 {
                if up[u] <= T::zero() {
                    return Err(Error::SubStochasticInterior(shape.external_id(u)));
                }
                s = s + up[u].clone();
            }
            for &c in shape.children(u) {
                if down[c] <= T::zero() {
                    return Err(Error::SubStochasticInterior(shape.external_id(u)));
                }
                s = s + down[c].clone();
            }
            if !close_to_one(&s) {
                return Err(Error::SubStochasticInterior(shape.external_id(u)));
            }
        }
        let mut up = up;
        for &l in shape.leaves() {
            up[l] = T::zero();
        }
        up[0] = T::zero();
        let mut down = down;
        down[0] = T::zero();
        Ok(RandomWalk { shape, up, down, m_root: T::one() })
    }

    /// Edge v⁻–v carries conductance `cond[v]`; transitions are proportional.
    pub fn from_conductances(shape: Shape, cond: &[T]) -> Result<Self> {
        let n = shape.len();
        let mut total = vec![T::zero(); n];
        for v in 1..n {
            if cond[v] <= T::zero() {
                return Err(Error::Invalid(format!("conductance at edge to {}", shape.external_id(v))));
            }
            let p = shape.parent(v).unwrap();
            total[v] = total[v].clone() + cond[v].clone();
            total[p] = total[p].clone() + cond[v].clone();
        }
        let mut up = vec![T::zero(); n];
        let mut down = vec![T::zero(); n];
        for v in 1..n {
            let p = shape.parent(v).unwrap();
            down[v] = cond[v].clone() / total[p].clone();
            if !shape.is_leaf(v) {
                up[v] = cond[v].clone() / total[v].clone();
            }
        }
        RandomWalk::from_transitions(shape, down, up)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// p(u, v), zero unless u is interior and u ∼ v.
    pub fn p(&self, u: usize, v: usize) -> T {
        if self.shape.parent(v) == Some(u) {
            self.down[v].clone()
        } else if self.shape.parent(u) == Some(v) {
            self.up[u].clone()
        } else {
            T::zero()
        }
    }

    /// Reversing measure with m(root) = `m_root` (1 unless re-rooted);
    /// zero at terminal vertices.
    pub fn reversing_measure(&self) -> Vec<T> {
        let n = self.shape.len();
        let mut m = vec![T::zero(); n];
        m[0] = self.m_root.clone();
        for v in 1..n {
            if !self.shape.is_leaf(v) {
                let p = self.shape.parent(v).unwrap();
                m[v] = m[p].clone() * self.down[v].clone() / self.up[v].clone();
            }
        }
        m
    }

    /// a(v⁻, v): m(v)p(v, v⁻) at interior v, m(v⁻)p(v⁻, v) at terminal v.
    pub fn conductances(&self) -> Vec<T> {
        let m = self.reversing_measure();
        (0..self.shape.len())
            .map(|v| match self.shape.parent(v) {
                None => T::zero(),
                Some(p) if self.shape.is_leaf(v) => m[p].clone() * self.down[v].clone(),
                Some(_) => m[v].clone() * self.up[v].clone(),
            })
            .collect()
    }

    /// Transition matrix, rows indexed by vertex, absorbing rows at leaves.
    #[allow(clippy::needless_range_loop)]
    pub fn transition_matrix(&self) -> Vec<Vec<T>> {
        let n = self.shape.len();
        let mut p = vec![vec![T::zero(); n]; n];
        for u in 0..n {
            if self.shape.is_leaf(u) {
                p[u][u] = T::one();
                continue;
            }
            for w in self.shape.neighbours(u) {
                p[u][w] = self.p(u, w);
            }
        }
        p
    }

    pub fn solve(&self) -> Result<SolvedWalk<T>> {
        let sh = &self.shape;
        let n = sh.len();
        let mut f_up = vec![T::zero(); n];
        for v in (1..n).rev() {
            if sh.is_leaf(v) {
                continue;
            }
            let mut back = T::zero();
            for &c in sh.children(v) {
                back = back + self.down[c].clone() * f_up[c].clone();
            }
            let den = T::one() - back;
            if den <= T::zero() {
                return Err(Error::SubStochasticInterior(sh.external_id(v)));
            }
            f_up[v] = self.up[v].clone() / den;
        }
        let mut f_down = vec![T::zero(); n];
        for u in sh.interior() {
            // returns to u through each neighbour, used to exclude one child at a time
            let from_parent = if u == 0 { T::zero() } else { self.up[u].clone() * f_down[u].clone() };
            let mut total = from_parent;
            for &c in sh.children(u) {
                total = total + self.down[c].clone() * f_up[c].clone();
            }
            for &v in sh.children(u) {
                let others = total.clone() - self.down[v].clone() * f_up[v].clone();
                f_down[v] = self.down[v].clone() / (T::one() - others);
            }
        }
        let mut g = vec![T::zero(); n];
        for u in sh.interior() {
            let mut ret = T::zero();
            if u != 0 {
                ret = ret + self.up[u].clone() * f_down[u].clone();
            }
            for &c in sh.children(u) {
                ret = ret + self.down[c].clone() * f_up[c].clone();
            }
            g[u] = T::one() / (T::one() - ret);
        }
        Ok(SolvedWalk { walk: self.clone(), f_up, f_down, g })
    }

    /// The same walk seen from the interior vertex `u`; the reversing
    /// measure keeps its values, so m(u) is inherited rather than reset.
    /// Returns the new walk and the map old id → new id.
    pub fn reroot(&self, u: usize) -> Result<(RandomWalk<T>, Vec<usize>)> {
        let sh = &self.shape;
        if sh.is_leaf(u) {
            return Err(Error::Invalid("cannot root a walk at a terminal vertex".into()));
        }
        if u != 0 && sh.children(0).len() == 1 {
            return Err(Error::Invalid("re-rooting would make the old root terminal".into()));
        }
        let n = sh.len();
        let mut parents = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([u]);
        seen[u] = true;
        while let Some(a) = queue.pop_front() {
            for b in sh.neighbours(a) {
                if !seen[b] {
                    seen[b] = true;
                    parents[b] = Some(a);
                    queue.push_back(b);
                }
            }
        }
        let new_shape = Shape::new(&parents)?;
        let mut map = vec![0; n];
        for v in 0..n {
            map[new_shape.external_id(v)] = v;
        }
        let mut down = vec![T::zero(); n];
        let mut up = vec![T::zero(); n];
        for old in 0..n {
            if let Some(par) = parents[old] {
                down[map[old]] = self.p(par, old);
                up[map[old]] = self.p(old, par);
            }
        }
        let m = self.reversing_measure();
        let mut w = RandomWalk::from_transitions(new_shape, down, up)?;
        w.m_root = m[u].clone();
        Ok((w, map))
    }
}

/// Hitting probabilities along edges and the diagonal Green function.
#[derive(Debug, Clone)]
pub struct SolvedWalk<T> {
    walk: RandomWalk<T>,
    /// F(v, v⁻)
    f_up: Vec<T>,
    /// F(v⁻, v)
    f_down: Vec<T>,
    /// G(v, v) at interior vertices
    g: Vec<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoobNaim<T> {
    pub lhs: T,
    pub rhs: T,
    pub diff: T,
}

impl<T: Scalar> SolvedWalk<T> {
    pub fn walk(&self) -> &RandomWalk<T> {
        &self.walk
    }

    pub fn shape(&self) -> &Shape {
        &self.walk.shape
    }

    pub fn f_edge_up(&self, v: usize) -> T {
        self.f_up[v].clone()
    }

    pub fn f_edge_down(&self, v: usize) -> T {
        self.f_down[v].clone()
    }

    /// F(u, v) by products along the geodesic.
    pub fn f(&self, u: usize, v: usize) -> T {
        let sh = self.shape();
        let w = sh.meet(u, v);
        let mut acc = T::one();
        let mut a = u;
        while a != w {
            acc = acc * self.f_up[a].clone();
            a = sh.parent(a).unwrap();
        }
        let mut b = v;
        while b != w {
            acc = acc * self.f_down[b].clone();
            b = sh.parent(b).unwrap();
        }
        acc
    }

    /// U(v, v) = Σ_w p(v, w) F(w, v).
    pub fn u(&self, v: usize) -> T {
        T::one() - self.g[v].recip()
    }

    /// G(v, v); terminal vertices are absorbing and have none.
    pub fn g_diag(&self, v: usize) -> Result<T> {
        if self.shape().is_leaf(v) {
            return Err(Error::Invalid("Green function at an absorbing vertex".into()));
        }
        Ok(self.g[v].clone())
    }

    /// G(u, v) = F(u, v) G(v, v) for interior v.
    pub fn g(&self, u: usize, v: usize) -> Result<T> {
        Ok(self.f(u, v) * self.g_diag(v)?)
    }

    /// ν_u on leaves, in the depth-first leaf order.
    pub fn hitting_distribution(&self, u: usize) -> Vec<T> {
        self.shape().leaves().iter().map(|&l| self.f(u, l)).collect()
    }

    /// ν_u(∂T_v) by the two-case formula in terms of edge hitting probabilities.
    pub fn nu_ball(&self, u: usize, v: usize) -> T {
        let sh = self.shape();
        if v == 0 {
            return T::one();
        }
        let fv = self.f_up[v].clone();
        let fd = self.f_down[v].clone();
        let den = T::one() - fd.clone() * fv.clone();
        if u == v || !sh.in_branch(v, u) {
            self.f(u, v) * (T::one() - fv) / den
        } else {
            T::one() - self.f(u, v) * (fv.clone() - fd * fv) / den
        }
    }

    /// Poisson transform h_φ(u) = Σ_ℓ ν_u(ℓ) φ(ℓ) at every vertex, in
    /// linear time: first the contribution of each branch, then the
    /// contribution from outside passed down through the parent.
    pub fn poisson(&self, phi: &[T]) -> Vec<T> {
        let sh = self.shape();
        let n = sh.len();
        let mut inside = vec![T::zero(); n];
        for (i, &l) in sh.leaves().iter().enumerate() {
            inside[l] = phi[i].clone();
        }
        for v in (0..n).rev() {
            if !sh.is_leaf(v) {
                let mut s = T::zero();
                for &c in sh.children(v) {
                    s = s + self.f_down[c].clone() * inside[c].clone();
                }
                inside[v] = s;
            }
        }
        let mut h = vec![T::zero(); n];
        h[0] = inside[0].clone();
        for c in 1..n {
            let v = sh.parent(c).unwrap();
            let outside = h[v].clone() - self.f_down[c].clone() * inside[c].clone();
            h[c] = inside[c].clone() + self.f_up[c].clone() * outside;
        }
        h
    }

    /// E_T(f, g) = Σ_edges a(v⁻, v)(f(v) − f(v⁻))(g(v) − g(v⁻)).
    pub fn energy(&self, f: &[T], g: &[T]) -> T {
        let sh = self.shape();
        let a = self.walk.conductances();
        let mut total = T::zero();
        for v in 1..sh.len() {
            let p = sh.parent(v).unwrap();
            total = total + a[v].clone() * (f[v].clone() - f[p].clone()) * (g[v].clone() - g[p].clone());
        }
        total
    }

    /// Θ_o(x, y) = m(o) / (G(o,o) F(o, x∧y) F(x∧y, o)) for distinct leaves.
    pub fn naim(&self, x: usize, y: usize) -> Result<T> {
        if x == y {
            return Err(Error::DiagonalQuery);
        }
        let w = self.shape().meet(x, y);
        Ok(self.walk.m_root.clone() / (self.g[0].clone() * self.f(0, w) * self.f(w, 0)))
    }

    /// Both sides of the Doob–Naïm formula for leaf functions φ, ψ.
    pub fn doob_naim(&self, phi: &[T], psi: &[T]) -> Result<DoobNaim<T>> {
        let sh = self.shape();
        let lhs = self.energy(&self.poisson(phi), &self.poisson(psi));
        let nu = self.hitting_distribution(0);
        let leaves = sh.leaves();
        let half = T::ratio(1, 2);
        let mut rhs = T::zero();
        for i in 0..leaves.len() {
            for j in 0..leaves.len() {
                if i == j {
                    continue;
                }
                let dphi = phi[i].clone() - phi[j].clone();
                let dpsi = psi[i].clone() - psi[j].clone();
                if dphi.is_zero() || dpsi.is_zero() {
                    continue;
                }
                let th = self.naim(leaves[i], leaves[j])?;
                rhs = rhs + half.clone() * dphi * dpsi * th * nu[i].clone() * nu[j].clone();
            }
        }
        let diff = lhs.clone() - rhs.clone();
        Ok(DoobNaim { lhs, rhs, diff })
    }

    /// Indicator of the leaves below v, in leaf order.
    pub fn branch_indicator(&self, v: usize) -> Vec<T> {
        let sh = self.shape();
        sh.leaves().iter().map(|&l| if sh.in_branch(v, l) { T::one() } else { T::zero() }).collect()
    }

    /// Common value of both sides for φ = 1_{∂T_v}, ψ = 1_{∂T_w} with
    /// w in the branch of the interior vertex v ≠ o:
    /// m(v)/G(v,v) · ν_v(∂T ∖ ∂T_v) · ν_v(∂T_w).
    pub fn nested_closed_form(&self, v: usize, w: usize) -> Result<T> {
        let sh = self.shape();
        if v == 0 || sh.is_leaf(v) || !sh.in_branch(v, w) {
            return Err(Error::Invalid("need an interior v ≠ o with w in its branch".into()));
        }
        let m = self.walk.reversing_measure();
        Ok(m[v].clone() / self.g[v].clone() * (T::one() - self.nu_ball(v, v)) * self.nu_ball(v, w))
    }
}

/// The boundary process of a walk as a ball tree: radii G(v, o), atoms ν_o.
#[derive(Debug, Clone)]
pub struct WalkBoundary<T> {
    pub tree: BallTree,
    /// G(v, o) per vertex, zero at terminal vertices.
    pub phi: Vec<T>,
    /// ν_o per leaf in depth-first order.
    pub mu: Vec<T>,
    /// (child v, 1/G(v⁻, o)) for every mode f_v.
    pub eigenvalues: Vec<(usize, T)>,
}

fn mass_value<T: Scalar>(x: &T) -> MassValue {
    match x.to_rational() {
        Some(r) => MassValue::Text(r.to_string()),
        None => MassValue::Number(x.to_f64()),
    }
}

pub fn walk_to_boundary<T: Scalar>(s: &SolvedWalk<T>) -> Result<WalkBoundary<T>> {
    let sh = s.shape();
    let n = sh.len();
    let mut phi = vec![T::zero(); n];
    for v in sh.interior() {
        phi[v] = s.g(v, 0)?;
    }
    for v in sh.interior().skip(1) {
        let p = sh.parent(v).unwrap();
        if phi[v] >= phi[p] {
            return Err(Error::DegenerateGreen(sh.external_id(v)));
        }
    }
    let mu = s.hitting_distribution(0);
    let leaf_of = sh.leaf_index();
    let nodes = (0..n)
        .map(|v| NodeSpec { id: v, parent: sh.parent(v), phi: (!sh.is_leaf(v)).then(|| phi[v].to_f64()) })
        .collect();
    let leaves =
        sh.leaves().iter().map(|&l| LeafSpec { id: l, mass: mass_value(&mu[leaf_of[&l]]), label: None }).collect();
    let tree = crate::balltree::build_tree(&TreeSpec { nodes, leaves })?;
    let eigenvalues = (1..n).map(|v| (v, phi[sh.parent(v).unwrap()].recip())).collect();
    Ok(WalkBoundary { tree, phi, mu, eigenvalues })
}

/// C = 1/φ(o) + Σ_{u∼o} (φ(u)/φ(o)) / (φ(o) − φ(u)) · μ(∂T_u), given
/// φ(o) and the pairs (φ(u), μ(∂T_u)) over the children of the root.
pub fn boundary_constant<T: Scalar>(phi_o: &T, children: &[(T, T)]) -> T {
    let mut c = phi_o.recip();
    for (pu, mu) in children {
        c = c + pu.clone() / phi_o.clone() / (phi_o.clone() - pu.clone()) * mu.clone();
    }
    c
}

#[derive(Debug, Clone)]
pub struct BoundaryWalk<T> {
    pub c: T,
    pub walk: RandomWalk<T>,
    /// Σ_v p(u, v) − 1 at every interior u, before any normalisation.
    pub defects: Vec<T>,
}

/// The unique walk whose boundary process is the standard process of
/// (C·φ, μ). `phi` is given per vertex (terminal entries are ignored and
/// taken as 0), `mu` per leaf in depth-first order.
pub fn boundary_to_walk<T: Scalar>(shape: &Shape, phi: &[T], mu: &[T]) -> Result<BoundaryWalk<T>> {
    let n = shape.len();
    let ph = |v: usize| if shape.is_leaf(v) { T::zero() } else { phi[v].clone() };
    for v in 1..n {
        let p = shape.parent(v).unwrap();
        if ph(v) >= ph(p) || (!shape.is_leaf(v) && ph(v) <= T::zero()) {
            return Err(Error::NonDecreasingPhi(shape.external_id(v)));
        }
    }
    let mut mass = vec![T::zero(); n];
    for (i, &l) in shape.leaves().iter().enumerate() {
        if mu[i] <= T::zero() {
            return Err(Error::MassGap(shape.external_id(l)));
        }
        mass[l] = mu[i].clone();
    }
    for v in (1..n).rev() {
        let p = shape.parent(v).unwrap();
        mass[p] = mass[p].clone() + mass[v].clone();
    }
    let mut f_up = vec![T::zero(); n];
    let mut f_down = vec![T::zero(); n];
    let mut f_from_root = vec![T::one(); n];
    for v in 1..n {
        let p = shape.parent(v).unwrap();
        f_up[v] = ph(v) / ph(p);
        let r = mass[v].clone() / f_from_root[p].clone();
        f_down[v] = r.clone() / (T::one() - f_up[v].clone() + f_up[v].clone() * r);
        f_from_root[v] = f_from_root[p].clone() * f_down[v].clone();
    }
    let kids: Vec<(T, T)> = shape.children(0).iter().map(|&u| (ph(u), mass[u].clone())).collect();
    let c = boundary_constant(&phi[0], &kids);

    let prod = |v: usize| f_up[v].clone() * f_down[v].clone();
    let mut up = vec![T::zero(); n];
    let mut down = vec![T::zero(); n];
    let mut defects = Vec::new();
    for u in shape.interior() {
        let mut edges: Vec<(T, T, Option<usize>)> =
            shape.children(u).iter().map(|&v| (f_down[v].clone(), prod(v), Some(v))).collect();
        if u != 0 {
            edges.push((f_up[u].clone(), prod(u), None));
        }
        let mut g = T::one();
        for (_, ff, _) in &edges {
            g = g + ff.clone() / (T::one() - ff.clone());
        }
        let mut total = T::zero();
        for (f, ff, to) in edges {
            let pr = f / (T::one() - ff) / g.clone();
            total = total + pr.clone();
            match to {
                Some(v) => down[v] = pr,
                None => up[u] = pr,
            }
        }
        defects.push(total - T::one());
    }
    let walk = RandomWalk::from_transitions(shape.clone(), down, up)?;
    Ok(BoundaryWalk { c, walk, defects })
}

/// Boundary data of a ball tree: radii φ per vertex and exact atom masses.
pub fn boundary_to_walk_tree(tree: &BallTree) -> Result<BoundaryWalk<BigRational>> {
    let phi: Vec<BigRational> = (0..tree.len())
        .map(|v| {
            if tree.is_leaf(v) {
                BigRational::from_integer(0.into())
            } else {
                crate::scalar::f64_to_rational(tree.phi(v))
            }
        })
        .collect();
    let mu: Vec<BigRational> = tree.leaf_nodes().iter().map(|&l| tree.mass(l).clone()).collect();
    boundary_to_walk(&Shape::from_tree(tree), &phi, &mu)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenCheck {
    pub max_residual: f64,
    pub residuals: Vec<(usize, f64)>,
    /// (interior vertex, dim H(u)) with dim H(u) = deg⁺(u) − 1.
    pub dims: Vec<(usize, usize)>,
    pub constant_residual: f64,
    pub mode_count: usize,
}

/// Applies the boundary Laplacian to every f_v and compares with 1/G(v⁻, o).
pub fn boundary_eigencheck<T: Scalar>(s: &SolvedWalk<T>) -> Result<EigenCheck> {
    let b = walk_to_boundary(s)?;
    let model = HeatModel::new(b.tree.clone(), Sigma::Standard)?;
    let tr = model.tree();
    let mut residuals = Vec::new();
    let mut dims = Vec::new();
    for u in tr.internal_nodes() {
        let kids = tr.children(u);
        dims.push((u, kids.len() - 1));
        for &c in &kids[..kids.len() - 1] {
            let f = mode_vector(&model, c);
            let lambda = b.phi[u].recip().to_f64();
            let lf = apply_laplacian(&model, &f);
            let r = (&lf - &f * lambda).amax() / (lambda * f.amax());
            residuals.push((c, r));
        }
    }
    let one = nalgebra::DVector::from_element(tr.n_leaves(), 1.0);
    let constant_residual = apply_laplacian(&model, &one).amax();
    let max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let mode_count = residuals.len() + 1;
    Ok(EigenCheck { max_residual, residuals, dims, constant_residual, mode_count })
}

/// Random shape with rational conductances drawn from 1..=9.
pub fn random_walk<R: Rng>(rng: &mut R, max_vertices: usize, max_depth: usize) -> RandomWalk<BigRational> {
    let spec = random_spec(rng, max_depth, 4, max_vertices);
    let tree = crate::balltree::build_tree(&spec).expect("generated tree is valid");
    let shape = Shape::from_tree(&tree);
    let cond: Vec<BigRational> =
        (0..shape.len()).map(|_| BigRational::from_integer(BigInt::from(rng.gen_range(1..10)))).collect();
    RandomWalk::from_conductances(shape, &cond).expect("positive conductances")
}

/// Walks on the homogeneous tree of forward degree p, either rooted (the
/// tree of ℤₚ) or two-sided with a reference end (the tree of ℚₚ):
/// p(v, v⁻) = 1 − c and p(v⁻, v) = c/p with c = 1/(1 + p^{−α}).
///
/// Everything is solved from the walk; the `closed_*` accessors give the
/// formulas the solutions should match.
#[derive(Debug, Clone)]
pub struct HomogeneousWalk<T> {
    pub p: u64,
    /// p^{−α}
    pub x: T,
    pub two_sided: bool,
}

impl HomogeneousWalk<Quad> {
    /// α = `alpha_halves`/2, exact in Q(√p).
    pub fn exact(p: u64, alpha_halves: i64, two_sided: bool) -> Self {
        HomogeneousWalk { p, x: half_power(p as i64, -alpha_halves), two_sided }
    }
}

impl HomogeneousWalk<f64> {
    pub fn float(p: u64, alpha: f64, two_sided: bool) -> Self {
        HomogeneousWalk { p, x: (p as f64).powf(-alpha), two_sided }
    }
}

impl<T: Scalar> HomogeneousWalk<T> {
    fn pt(&self) -> T {
        T::from_i64(self.p as i64)
    }

    pub fn c(&self) -> T {
        (T::one() + self.x.clone()).recip()
    }

    /// p(v, v⁻)
    pub fn p_up(&self) -> T {
        T::one() - self.c()
    }

    /// p(v⁻, v); from the root of the rooted tree each child gets 1/p.
    pub fn p_down(&self) -> T {
        self.c() / self.pt()
    }

    /// F(v, v⁻): smallest root in [0, 1] of c F² − F + (1 − c) = 0.
    pub fn f_up(&self) -> T {
        let c = self.c();
        min_root_unit(&c, &-T::one(), &(T::one() - c.clone())).expect("discriminant (2c − 1)² is a square")
    }

    /// F(v⁻, v) in the two-sided tree: smallest root of
    /// (1 − c) y² − (1 − (p − 1)(c/p) F(v, v⁻)) y + c/p = 0.
    pub fn f_down(&self) -> T {
        let c = self.c();
        let b = T::one() - (self.pt() - T::one()) * self.p_down() * self.f_up();
        min_root_unit(&(T::one() - c), &-b, &self.p_down()).expect("roots 1/p and p^α")
    }

    /// F(v, o) at depth `level` of the rooted tree.
    pub fn f_to_root(&self, level: u32) -> T {
        self.f_up().powi(level as i64)
    }

    /// G(o, o) for the rooted tree, G(v, v) for the two-sided one.
    pub fn green_diag(&self) -> T {
        let u = if self.two_sided {
            self.p_up() * self.f_down() + self.c() * self.f_up()
        } else {
            // p children reached with probability 1/p each
            self.f_up()
        };
        (T::one() - u).recip()
    }

    /// G(v, o) in the rooted tree.
    pub fn green_to_root(&self, level: u32) -> T {
        self.f_to_root(level) * self.green_diag()
    }

    /// ν_v(∂T_v) = 1 − p(v, v⁻)(G(v, v) − G(v⁻, v)), two-sided.
    pub fn nu_own_branch(&self) -> T {
        let g = self.green_diag();
        T::one() - self.p_up() * (g.clone() - self.f_down() * g)
    }

    /// m(v) at horocycle h, with m(o) = 1.
    pub fn mass(&self, h: i64) -> T {
        (self.p_down() / self.p_up()).powi(h)
    }

    /// ϑ = m(o) ν_o(∂T_o) / G(o, o).
    pub fn theta(&self) -> T {
        self.mass(0) * self.nu_own_branch() / self.green_diag()
    }

    /// K(v, ϖ) = F(v, v⋏o)/F(o, v⋏o) for v at horocycle h below the k-th
    /// ancestor o_k of o.
    pub fn martin(&self, h: i64, k: u32) -> T {
        let f = self.f_up();
        f.powi(h + k as i64) / f.powi(k as i64)
    }

    /// φ(v) = K(v, ϖ)/ϑ.
    pub fn phi(&self, h: i64) -> T {
        self.martin(h, 0) / self.theta()
    }

    /// 𝔧(v) = ϑ²/K(v, ϖ)² · G(v, v)/m(v), the jump density at x⋏y = v.
    pub fn jfrak(&self, h: i64) -> T {
        let k = self.martin(h, 0);
        self.theta() * self.theta() / (k.clone() * k) * self.green_diag() / self.mass(h)
    }

    /// J_α at ‖x − y‖ = p^{−h}: (p^α − 1)/(1 − p^{−α−1}) · p^{(1+α)h}.
    pub fn vladimirov_jump(&self, h: i64) -> T {
        let pa = self.x.recip();
        let cst = (pa.clone() - T::one()) / (T::one() - self.x.clone() / self.pt());
        cst * (self.pt() * pa).powi(h)
    }

    /// Rooted tree: eigenvalue of 𝔻^α over eigenvalue of the boundary
    /// Laplacian for the modes of children at depth `level` ≥ 1, i.e.
    /// p^{α·level} · G(v⁻, o).
    pub fn spectrum_ratio(&self, level: u32) -> T {
        self.x.recip().powi(level as i64) * self.green_to_root(level - 1)
    }

    /// Constant C with X_{t/C} = X^α_t.
    pub fn time_change(&self, level: u32) -> T {
        self.spectrum_ratio(level).recip()
    }

    /// Constant of the boundary-to-walk construction for the standard
    /// element φ(v) = p^{−α(|v|+1)} of 𝔻^α with Haar measure; only the
    /// root and its children enter.
    pub fn boundary_constant_standard(&self) -> T {
        let kids: Vec<(T, T)> = (0..self.p).map(|_| (self.x.powi(2), self.pt().recip())).collect();
        boundary_constant(&self.x, &kids)
    }

    pub fn closed_f_up(&self) -> T {
        self.x.clone()
    }

    pub fn closed_f_down(&self) -> T {
        self.pt().recip()
    }

    pub fn closed_green_to_root(&self, level: u32) -> T {
        self.x.powi(level as i64) / (T::one() - self.x.clone())
    }

    pub fn closed_green_two_sided(&self) -> T {
        (T::one() + self.x.clone()) / (T::one() - self.x.clone() / self.pt())
    }

    pub fn closed_spectrum_ratio(&self) -> T {
        self.x.recip() / (T::one() - self.x.clone())
    }

    pub fn closed_time_change(&self) -> T {
        self.x.clone() * (T::one() - self.x.clone())
    }

    pub fn closed_theta(&self) -> T {
        (T::one() - self.x.clone()) / (T::one() + self.x.clone())
    }

    pub fn closed_phi(&self, h: i64) -> T {
        (T::one() + self.x.clone()) / (T::one() - self.x.clone()) * self.x.powi(h)
    }

    pub fn closed_c_star(&self) -> T {
        (T::one() - self.x.clone()) / (self.x.recip() + T::one())
    }
}

/// Walk description for the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkSpec {
    #[serde(default)]
    pub tree: Option<WalkTree>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
    #[serde(default)]
    pub mode: WalkMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WalkTree {
    Padic { padic: PadicSpec },
    Parents { parents: Vec<Option<usize>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: usize,
    pub to: usize,
    pub p: MassValue,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    #[default]
    FiniteAbsorbing,
    Homogeneous {
        p: u64,
        alpha: f64,
        #[serde(default)]
        two_sided: bool,
    },
}

#[allow(clippy::large_enum_variant)]
pub enum WalkModel {
    Finite(RandomWalk<BigRational>),
    Homogeneous(HomogeneousWalk<f64>),
}

impl WalkSpec {
    /// Without transitions, each interior vertex moves to a uniform neighbour.
    pub fn build(&self) -> Result<WalkModel> {
        if let WalkMode::Homogeneous { p, alpha, two_sided } = self.mode {
            return Ok(WalkModel::Homogeneous(HomogeneousWalk::float(p, alpha, two_sided)));
        }
        let shape = match self.tree.as_ref().ok_or_else(|| Error::Invalid("walk needs a tree".into()))? {
            WalkTree::Padic { padic } => {
                Shape::from_tree(&crate::balltree::padic_tree(padic.p, padic.depth, padic.dim)?)
            }
            WalkTree::Parents { parents } => Shape::new(parents)?,
        };
        let n = shape.len();
        if self.transitions.is_empty() {
            let one = vec![BigRational::from_integer(1.into()); n];
            return Ok(WalkModel::Finite(RandomWalk::from_conductances(shape, &one)?));
        }
        let mut internal = vec![0; n];
        for v in 0..n {
            internal[shape.external_id(v)] = v;
        }
        let zero = BigRational::from_integer(0.into());
        let mut down = vec![zero.clone(); n];
        let mut up = vec![zero; n];
        for t in &self.transitions {
            if t.from >= n || t.to >= n {
                return Err(Error::UnknownNode(t.from.max(t.to)));
            }
            let (a, b) = (internal[t.from], internal[t.to]);
            let q = t.p.to_rational()?;
            if shape.parent(b) == Some(a) {
                down[b] = q;
            } else if shape.parent(a) == Some(b) {
                up[a] = q;
            } else {
                return Err(Error::Invalid(format!("{} and {} are not neighbours", t.from, t.to)));
            }
        }
        Ok(WalkModel::Finite(RandomWalk::from_transitions(shape, down, up)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn two_leaf_star() {
        let shape = Shape::new(&[None, Some(0), Some(0)]).unwrap();
        let w = RandomWalk::from_transitions(shape, vec![rat(0, 1), rat(1, 2), rat(1, 2)], vec![rat(0, 1); 3]).unwrap();
        let s = w.solve().unwrap();
        assert_eq!(s.f(0, 1), rat(1, 2));
        assert_eq!(s.f(1, 0), rat(0, 1));
        assert_eq!(s.g_diag(0).unwrap(), rat(1, 1));
    }

    #[test]
    fn homogeneous_two_sided_at_two() {
        let h = HomogeneousWalk::exact(2, 2, true);
        assert_eq!(h.f_up(), Quad::ratio(1, 2));
        assert_eq!(h.f_down(), Quad::ratio(1, 2));
        assert_eq!(h.theta(), Quad::ratio(1, 3));
        assert_eq!(h.closed_c_star(), Quad::ratio(1, 6));
    }
}
