//! Rooted trees of closed balls: the finite model of a compact
//! ultra-metric measure space.
//!
//! Node ids are dense and assigned in level order, so the root is 0 and a
//! parent always has a smaller id than its children. Leaves are atoms; a
//! [`Point`] is the position of a leaf in depth-first order, which makes
//! every ball a contiguous range of points.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{f64_to_rational, rational_to_f64};

/// Index of a leaf in depth-first order.
pub type Point = usize;

#[derive(Debug, Clone)]
pub struct BallTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    phi: Vec<f64>,
    mass: Vec<BigRational>,
    mass_f: Vec<f64>,
    leaves: Vec<usize>,
    leaf_pos: Vec<Option<Point>>,
    range: Vec<(Point, Point)>,
    labels: Vec<Option<String>>,
    prefix: Vec<f64>,
    external: Vec<usize>,
}

/// Mass given either as a JSON number or as an exact `"n/d"` string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassValue {
    Number(f64),
    Text(String),
}

impl MassValue {
    pub fn to_rational(&self) -> Result<BigRational> {
        match self {
            MassValue::Number(x) if x.is_finite() => Ok(f64_to_rational(*x)),
            MassValue::Number(x) => Err(Error::Parse(format!("mass {x}"))),
            MassValue::Text(s) => parse_rational(s),
        }
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("rational {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        Ok(BigRational::new(n, d))
    } else if let Ok(n) = s.parse::<BigInt>() {
        Ok(BigRational::from_integer(n))
    } else {
        let x: f64 = s.parse().map_err(|_| bad())?;
        if !x.is_finite() {
            return Err(bad());
        }
        Ok(f64_to_rational(x))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub parent: Option<usize>,
    #[serde(default)]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafSpec {
    pub id: usize,
    pub mass: MassValue,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TreeSpec {
    pub nodes: Vec<NodeSpec>,
    pub leaves: Vec<LeafSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PadicSpec {
    pub p: u64,
    pub depth: usize,
    #[serde(default = "one_usize")]
    pub dim: usize,
}

fn one_usize() -> usize {
    1
}

/// JSON model description: explicit node list or a p-adic unit ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Padic { padic: PadicSpec },
    Tree(TreeSpec),
}

impl ModelSpec {
    pub fn build(&self) -> Result<BallTree> {
        match self {
            ModelSpec::Padic { padic } => padic_tree(padic.p, padic.depth, padic.dim),
            ModelSpec::Tree(spec) => build_tree(spec),
        }
    }
}

/// Validates a node list and derives masses, depths and leaf order.
pub fn build_tree(spec: &TreeSpec) -> Result<BallTree> {
    let mut index: HashMap<usize, usize> = HashMap::new();
    for (i, n) in spec.nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(Error::Invalid(format!("duplicate node id {}", n.id)));
        }
    }
    let roots: Vec<usize> = spec.nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.id).collect();
    match roots.len() {
        0 => return Err(Error::NoRoot),
        1 => {}
        _ => return Err(Error::MultipleRoots(roots)),
    }
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); spec.nodes.len()];
    for (i, n) in spec.nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            let &pi = index.get(&p).ok_or(Error::UnknownNode(p))?;
            kids[pi].push(i);
        }
    }

    // level-order relabelling; anything unvisited is on a cycle or detached
    let root = index[&roots[0]];
    let mut order = Vec::with_capacity(spec.nodes.len());
    let mut seen = vec![false; spec.nodes.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &c in &kids[u] {
            if seen[c] {
                return Err(Error::Disconnected(spec.nodes[c].id));
            }
            seen[c] = true;
            queue.push_back(c);
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Disconnected(spec.nodes[i].id));
    }
    let mut new_id = vec![0; spec.nodes.len()];
    for (k, &i) in order.iter().enumerate() {
        new_id[i] = k;
    }

    let n = order.len();
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut phi = vec![0.0; n];
    let mut external = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        external[k] = spec.nodes[i].id;
        parent[k] = spec.nodes[i].parent.map(|p| new_id[index[&p]]);
        children[k] = kids[i].iter().map(|&c| new_id[c]).collect();
    }
    for k in 0..n {
        if children[k].is_empty() {
            continue;
        }
        if children[k].len() == 1 {
            return Err(Error::DegreeOne(external[k]));
        }
        let f = spec.nodes[order[k]].phi.ok_or(Error::MissingRadius(external[k]))?;
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Invalid(format!("radius {f} at node {}", external[k])));
        }
        phi[k] = f;
    }
    for k in 1..n {
        let p = parent[k].unwrap();
        if !children[k].is_empty() && phi[k] >= phi[p] {
            return Err(Error::NonMonotoneRadius { parent: external[p], child: external[k] });
        }
    }

    let mut atom: Vec<Option<BigRational>> = vec![None; n];
    let mut labels: Vec<Option<String>> = vec![None; n];
    for l in &spec.leaves {
        let &i = index.get(&l.id).ok_or(Error::UnknownLeaf(l.id))?;
        let k = new_id[i];
        if !children[k].is_empty() {
            return Err(Error::MassMismatch(format!("mass given for internal node {}", l.id)));
        }
        let m = l.mass.to_rational()?;
        if !m.is_positive() {
            return Err(Error::MassMismatch(format!("non-positive mass at leaf {}", l.id)));
        }
        if atom[k].replace(m).is_some() {
            return Err(Error::MassMismatch(format!("leaf {} listed twice", l.id)));
        }
        labels[k] = l.label.clone();
    }
    for k in 0..n {
        if children[k].is_empty() && atom[k].is_none() {
            return Err(Error::MassMismatch(format!("leaf {} has no mass", external[k])));
        }
    }
    Ok(assemble(parent, children, phi, atom, labels, external))
}

fn assemble(
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    phi: Vec<f64>,
    atom: Vec<Option<BigRational>>,
    labels: Vec<Option<String>>,
    external: Vec<usize>,
) -> BallTree {
    let n = parent.len();
    let mut depth = vec![0; n];
    for k in 1..n {
        depth[k] = depth[parent[k].unwrap()] + 1;
    }
    let mut mass: Vec<BigRational> = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        if children[k].is_empty() {
            mass[k] = atom[k].clone().unwrap();
        } else {
            let mut s = BigRational::zero();
            for &c in &children[k] {
                s += &mass[c];
            }
            mass[k] = s;
        }
    }
    let mass_f = mass.iter().map(rational_to_f64).collect();

    // depth-first leaf order and subtree ranges
    let mut leaves = Vec::new();
    let mut leaf_pos = vec![None; n];
    let mut range = vec![(0, 0); n];
    let mut stack = vec![(0usize, false)];
    while let Some((u, done)) = stack.pop() {
        if done {
            let first = children[u].first().map_or(range[u].0, |&c| range[c].0);
            let last = children[u].last().map_or(range[u].1, |&c| range[c].1);
            range[u] = (first, last);
            continue;
        }
        if children[u].is_empty() {
            leaf_pos[u] = Some(leaves.len());
            range[u] = (leaves.len(), leaves.len() + 1);
            leaves.push(u);
        } else {
            stack.push((u, true));
            for &c in children[u].iter().rev() {
                stack.push((c, false));
            }
        }
    }
    let mut prefix = Vec::with_capacity(leaves.len() + 1);
    prefix.push(0.0);
    let mut acc = BigRational::zero();
    for &l in &leaves {
        acc += &mass[l];
        prefix.push(rational_to_f64(&acc));
    }
    let labels = leaves.iter().map(|&l| labels[l].clone()).collect();
    BallTree { parent, children, depth, phi, mass, mass_f, leaves, leaf_pos, range, labels, prefix, external }
}

/// Unit ball of ℚₚ^dim at resolution p^{−depth}.
pub fn padic_tree(p: u64, depth: usize, dim: usize) -> Result<BallTree> {
    padic_ball_tree(p, 0, depth, dim)
}

/// The ball of radius p^{top} in ℚₚ^dim resolved `depth` levels down.
///
/// Level k has radius p^{top−k} and every internal node has p^dim
/// children. Leaf labels list base-p digits, first digit choosing the
/// level-1 ball; coordinates are separated by commas when dim > 1.
pub fn padic_ball_tree(p: u64, top: i64, depth: usize, dim: usize) -> Result<BallTree> {
    if !is_prime(p) {
        return Err(Error::Invalid(format!("{p} is not prime")));
    }
    if depth == 0 || dim == 0 {
        return Err(Error::Invalid("depth and dim must be at least 1".into()));
    }
    let fan = (p as usize).checked_pow(dim as u32).ok_or_else(|| Error::Invalid("fan-out overflow".into()))?;
    let total = (0..=depth).try_fold(0usize, |acc, k| fan.checked_pow(k as u32).and_then(|x| acc.checked_add(x)));
    match total {
        Some(t) if t <= 20_000_000 => {}
        _ => return Err(Error::Invalid("p-adic tree too large".into())),
    }
    let pq = BigRational::from_integer(BigInt::from(p));
    let ball_mass = |k: i64| pow_rational(&pq, (top - k) * dim as i64);
    let mut parent = vec![None];
    let mut children = vec![Vec::new()];
    let mut phi = vec![(p as f64).powi(top as i32)];
    let mut atom = vec![None];
    let mut digits: Vec<Vec<usize>> = vec![Vec::new()];
    let mut level = vec![0usize];
    for k in 1..=depth {
        let mut next = Vec::with_capacity(level.len() * fan);
        for &u in &level {
            for d in 0..fan {
                let id = parent.len();
                parent.push(Some(u));
                children.push(Vec::new());
                children[u].push(id);
                phi.push(if k < depth { (p as f64).powi((top - k as i64) as i32) } else { 0.0 });
                atom.push(if k == depth { Some(ball_mass(k as i64)) } else { None });
                let mut dg = digits[u].clone();
                dg.push(d);
                digits.push(dg);
                next.push(id);
            }
        }
        level = next;
    }
    let n = parent.len();
    let labels = (0..n)
        .map(|i| {
            if !children[i].is_empty() {
                return None;
            }
            let coords: Vec<String> = (0..dim)
                .map(|c| {
                    digits[i]
                        .iter()
                        .map(|&d| {
                            std::char::from_digit(((d / (p as usize).pow(c as u32)) % p as usize) as u32, 36).unwrap()
                        })
                        .collect()
                })
                .collect();
            Some(coords.join(","))
        })
        .collect();
    let external = (0..n).collect();
    Ok(assemble(parent, children, phi, atom, labels, external))
}

pub fn pow_rational(base: &BigRational, e: i64) -> BigRational {
    let mut r = BigRational::one();
    let b = if e < 0 { base.recip() } else { base.clone() };
    for _ in 0..e.unsigned_abs() {
        r *= &b;
    }
    r
}

pub fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

/// Removes internal vertices with a single child; the child takes their place.
pub fn collapse_unary(spec: &TreeSpec) -> TreeSpec {
    let mut parent: HashMap<usize, Option<usize>> = spec.nodes.iter().map(|n| (n.id, n.parent)).collect();
    let mut count: HashMap<usize, usize> = HashMap::new();
    for n in &spec.nodes {
        if let Some(p) = n.parent {
            *count.entry(p).or_default() += 1;
        }
    }
    let unary: Vec<usize> = spec.nodes.iter().filter(|n| count.get(&n.id) == Some(&1)).map(|n| n.id).collect();
    let dropped: std::collections::HashSet<usize> = unary.iter().copied().collect();
    let resolve = |mut p: Option<usize>, parent: &HashMap<usize, Option<usize>>| {
        while let Some(q) = p {
            if !dropped.contains(&q) {
                break;
            }
            p = parent[&q];
        }
        p
    };
    let snapshot = parent.clone();
    for p in parent.values_mut() {
        *p = resolve(*p, &snapshot);
    }
    let nodes = spec
        .nodes
        .iter()
        .filter(|n| !dropped.contains(&n.id))
        .map(|n| NodeSpec { id: n.id, parent: parent[&n.id], phi: n.phi })
        .collect();
    TreeSpec { nodes, leaves: spec.leaves.clone() }
}

/// Random tree with every internal degree in [2, max_children] and
/// rational leaf masses; radii are random and strictly decreasing.
pub fn random_tree<R: Rng>(rng: &mut R, max_depth: usize, max_children: usize, max_nodes: usize) -> BallTree {
    build_tree(&random_spec(rng, max_depth, max_children, max_nodes)).expect("generated tree is valid")
}

pub fn random_spec<R: Rng>(rng: &mut R, max_depth: usize, max_children: usize, max_nodes: usize) -> TreeSpec {
    let max_children = max_children.max(2);
    let mut nodes = vec![NodeSpec { id: 0, parent: None, phi: Some(rng.gen_range(1.0..4.0)) }];
    let mut frontier = vec![(0usize, 0usize)];
    let mut leaves = Vec::new();
    while let Some((u, d)) = frontier.pop() {
        let room = max_nodes.saturating_sub(nodes.len() + frontier.len());
        let expand = u == 0 || (d < max_depth && room >= max_children && rng.gen_bool(0.6));
        if !expand {
            nodes[u].phi = None;
            leaves.push(LeafSpec {
                id: u,
                mass: MassValue::Text(format!("{}/{}", rng.gen_range(1..10), rng.gen_range(1..10))),
                label: None,
            });
            continue;
        }
        let k = rng.gen_range(2..=max_children.min(room.max(2)));
        let pf = nodes[u].phi.unwrap();
        for _ in 0..k {
            let id = nodes.len();
            nodes.push(NodeSpec { id, parent: Some(u), phi: Some(pf * rng.gen_range(0.2..0.9)) });
            frontier.push((id, d + 1));
        }
    }
    TreeSpec { nodes, leaves }
}

impl BallTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
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

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Radius of the ball at `v`; zero at leaves.
    pub fn phi(&self, v: usize) -> f64 {
        self.phi[v]
    }

    pub fn mass(&self, v: usize) -> &BigRational {
        &self.mass[v]
    }

    pub fn mass_f(&self, v: usize) -> f64 {
        self.mass_f[v]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_f[0]
    }

    /// Node id of a point.
    pub fn leaf(&self, x: Point) -> usize {
        self.leaves[x]
    }

    pub fn leaf_nodes(&self) -> &[usize] {
        &self.leaves
    }

    pub fn point_of(&self, v: usize) -> Option<Point> {
        self.leaf_pos[v]
    }

    pub fn atom_mass(&self, x: Point) -> f64 {
        self.mass_f[self.leaves[x]]
    }

    pub fn atom_masses(&self) -> Vec<f64> {
        self.leaves.iter().map(|&l| self.mass_f[l]).collect()
    }

    /// Points of the ball at `v` as a half-open range.
    pub fn range(&self, v: usize) -> (Point, Point) {
        self.range[v]
    }

    pub fn label(&self, x: Point) -> Option<&str> {
        self.labels[x].as_deref()
    }

    pub fn find_label(&self, label: &str) -> Option<Point> {
        self.labels.iter().position(|l| l.as_deref() == Some(label))
    }

    /// Id used in the input spec for node `v`.
    pub fn external_id(&self, v: usize) -> usize {
        self.external[v]
    }

    /// Cumulative atom masses in point order, starting at 0.
    pub fn prefix_masses(&self) -> &[f64] {
        &self.prefix
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| !self.children[v].is_empty())
    }

    /// Nodes from `v` up to the root, inclusive.
    pub fn path_to_root(&self, v: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut u = v;
        while let Some(p) = self.parent[u] {
            path.push(p);
            u = p;
        }
        path
    }

    pub fn check_point(&self, x: Point) -> Result<()> {
        if x < self.leaves.len() {
            Ok(())
        } else {
            Err(Error::UnknownLeaf(x))
        }
    }

    /// Deepest common ancestor of two nodes.
    pub fn meet(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    pub fn confluent(&self, x: Point, y: Point) -> Result<usize> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.meet(self.leaves[x], self.leaves[y]))
    }

    pub fn distance(&self, x: Point, y: Point) -> Result<f64> {
        Ok(if x == y { 0.0 } else { self.phi[self.confluent(x, y)?] })
    }

    /// Copy with new radii at the internal nodes.
    pub fn with_radii(&self, radii: &[f64]) -> Result<BallTree> {
        let mut t = self.clone();
        for v in self.internal_nodes() {
            let r = radii[v];
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Invalid(format!("radius {r} at node {v}")));
            }
            if let Some(p) = self.parent[v] {
                if r >= radii[p] {
                    return Err(Error::NonMonotoneRadius { parent: self.external[p], child: self.external[v] });
                }
            }
            t.phi[v] = r;
        }
        Ok(t)
    }

    pub fn contains(&self, v: usize, x: Point) -> bool {
        let (a, b) = self.range[v];
        a <= x && x < b
    }
}

/// Distance distribution σ, stored through log σ to survive underflow.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    /// σ*(r) = exp(−1/r)
    Standard,
    /// σ(r) = exp(−(b/r)^α)
    Padic { alpha: f64, b: f64 },
    /// σ(r) = exp(−1/ln^α(2r))
    LogPower { alpha: f64 },
    /// Pairs (r, log σ(r)) sorted by r.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SigmaSpec {
    Standard,
    Padic { alpha: f64, b: f64 },
    Logpower { alpha: f64 },
    Table { points: Vec<(f64, f64)> },
}

impl SigmaSpec {
    pub fn build(&self) -> Result<Sigma> {
        Ok(match self {
            SigmaSpec::Standard => Sigma::Standard,
            SigmaSpec::Padic { alpha, b } => {
                if !(*alpha > 0.0 && *b > 0.0) {
                    return Err(Error::Invalid("padic sigma needs alpha > 0 and b > 0".into()));
                }
                Sigma::Padic { alpha: *alpha, b: *b }
            }
            SigmaSpec::Logpower { alpha } => Sigma::LogPower { alpha: *alpha },
            SigmaSpec::Table { points } => {
                let mut pts = Vec::with_capacity(points.len());
                for &(r, s) in points {
                    if !(s > 0.0 && s < 1.0) {
                        return Err(Error::SigmaOutOfRange(r));
                    }
                    pts.push((r, s.ln()));
                }
                Sigma::from_log_table(pts)?
            }
        })
    }
}

impl Sigma {
    pub fn from_log_table(mut pts: Vec<(f64, f64)>) -> Result<Sigma> {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(Error::SigmaNotIncreasing);
        }
        Ok(Sigma::Table(pts))
    }

    /// log σ(r); r = ∞ gives 0.
    pub fn log_sigma(&self, r: f64) -> Result<f64> {
        if r == f64::INFINITY {
            return Ok(0.0);
        }
        if !(r > 0.0) {
            return Err(Error::SigmaOutOfRange(r));
        }
        let ls = match self {
            Sigma::Standard => -1.0 / r,
            Sigma::Padic { alpha, b } => -(b / r).powf(*alpha),
            Sigma::LogPower { alpha } => {
                let l = (2.0 * r).ln();
                if l <= 0.0 {
                    return Err(Error::SigmaOutOfRange(r));
                }
                -1.0 / l.powf(*alpha)
            }
            Sigma::Table(pts) => {
                let hit = pts.iter().find(|(q, _)| (q - r).abs() <= 1e-12 * r.abs().max(1.0));
                match hit {
                    Some(&(_, ls)) => ls,
                    None => match pts.iter().rev().find(|(q, _)| *q <= r) {
                        Some(&(_, ls)) => ls,
                        None => return Err(Error::SigmaOutOfRange(r)),
                    },
                }
            }
        };
        if !(ls.is_finite() && ls < 0.0) {
            return Err(Error::SigmaOutOfRange(r));
        }
        Ok(ls)
    }

    pub fn sigma(&self, r: f64) -> Result<f64> {
        self.log_sigma(r).map(f64::exp)
    }
}

/// φ*(v) = −1/log σ(φ(v)); zero at leaves.
pub fn intrinsic_radius(tree: &BallTree, sigma: &Sigma, v: usize) -> Result<f64> {
    if tree.is_leaf(v) {
        return Ok(0.0);
    }
    Ok(-1.0 / sigma.log_sigma(tree.phi(v))?)
}

/// φ* at every node, checking σ is strictly increasing on the radius set.
pub fn intrinsic_radii(tree: &BallTree, sigma: &Sigma) -> Result<Vec<f64>> {
    let mut out = vec![0.0; tree.len()];
    let mut pairs = Vec::new();
    for v in tree.internal_nodes() {
        out[v] = intrinsic_radius(tree, sigma, v)?;
        pairs.push((tree.phi(v), out[v]));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pairs.windows(2) {
        if w[1].0 > w[0].0 && w[1].1 <= w[0].1 {
            return Err(Error::SigmaNotIncreasing);
        }
    }
    Ok(out)
}

/// N(x, τ) = 1/μ(B*_{1/τ}(x)) with closed intrinsic balls.
pub fn spectral_distribution(tree: &BallTree, phi_star: &[f64], x: Point, tau: f64) -> f64 {
    let mut best = tree.leaf(x);
    for &w in tree.path_to_root(tree.leaf(x)).iter().skip(1) {
        if tau * phi_star[w] <= 1.0 + 1e-12 {
            best = w;
        }
    }
    1.0 / tree.mass_f(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padic_labels_follow_digits() {
        let t = padic_tree(2, 3, 1).unwrap();
        assert_eq!(t.n_leaves(), 8);
        let a = t.find_label("000").unwrap();
        let b = t.find_label("010").unwrap();
        assert_eq!(t.distance(a, b).unwrap(), 0.5);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/8").unwrap(), BigRational::new(1.into(), 8.into()));
        assert_eq!(parse_rational("0.25").unwrap(), BigRational::new(1.into(), 4.into()));
        assert!(parse_rational("x").is_err());
    }
}
