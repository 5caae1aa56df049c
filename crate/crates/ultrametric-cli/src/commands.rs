use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ultrametric::balltree::{padic_tree, parse_rational, random_tree, ModelSpec, SigmaSpec};
use ultrametric::padic::{
    green_window_series, qp_moment, AnalyticModel, AnalyticSpec, PAdic, QpWindow, RotationInvariantSpec,
};
use ultrametric::scalar::Scalar;
use ultrametric::semigroup::{envelope_check, EnvelopeBand, Family, GreenValue, KernelModel};
use ultrametric::simulate::{chi_square, sample_jump, sample_walk, sampler_law};
use ultrametric::spectral::{eigensystem, liouville_check, oracle_spectrum};
use ultrametric::treewalk::{
    boundary_eigencheck, boundary_to_walk, random_walk, walk_to_boundary, HomogeneousWalk, RandomWalk, SolvedWalk,
    WalkModel, WalkSpec,
};
use ultrametric::{HeatModel, Sigma};

use crate::config::{log_grid, parse_grid, Cmd, KeyValues, Opts};
use crate::output::{num, Output};

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check { name: name.to_string(), pass, detail: detail.into() }
}

pub fn run(cmd: Cmd, opts: &Opts) -> Result<Vec<Check>> {
    let out = Output::new(cmd, opts);
    match cmd {
        Cmd::Kernel => kernel(opts, &out),
        Cmd::Spectrum => spectrum(opts, &out),
        Cmd::Green => green(opts, &out),
        Cmd::Jump => jump(opts, &out),
        Cmd::Moments => moments(opts, &out),
        Cmd::Envelope => envelope(opts, &out),
        Cmd::Walk => walk(opts, &out),
        Cmd::Duality => duality(opts, &out),
        Cmd::Doobnaim => doobnaim(opts, &out),
        Cmd::Simulate => simulate(opts, &out),
        Cmd::Padic => padic(opts, &out),
    }
}

enum Source {
    Heat(HeatModel),
    Window(QpWindow),
}

fn rng(opts: &Opts) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed())
}

fn parse_sigma(s: &str) -> Result<Sigma> {
    let parts: Vec<&str> = s.split(':').collect();
    let f = |i: usize| -> Result<f64> {
        parts.get(i).ok_or_else(|| anyhow!("--sigma {s}: missing parameter"))?.parse::<f64>().context("--sigma")
    };
    let spec = match parts[0] {
        "standard" => SigmaSpec::Standard,
        "padic" => SigmaSpec::Padic { alpha: f(1)?, b: if parts.len() > 2 { f(2)? } else { 1.0 } },
        "logpower" => SigmaSpec::Logpower { alpha: f(1)? },
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading sigma file {path}"))?;
            serde_json::from_str(&text).context("sigma JSON")?
        }
    };
    Ok(spec.build()?)
}

fn source(opts: &Opts) -> Result<Source> {
    if let Some(q) = &opts.qp {
        let kv = KeyValues::parse("qp", q)?;
        let w =
            QpWindow::new(kv.get("p")?, kv.opt("n")?.unwrap_or(1), kv.get("alpha")?, kv.opt("depth")?.unwrap_or(6))?;
        return Ok(Source::Window(w));
    }
    let sigma = opts.sigma.as_deref().map(parse_sigma).transpose()?;
    if let Some(z) = &opts.zp {
        let kv = KeyValues::parse("zp", z)?;
        let p: u64 = kv.get("p")?;
        let alpha: f64 = kv.get("alpha")?;
        let tree = padic_tree(p, kv.get("depth")?, 1)?;
        return Ok(Source::Heat(HeatModel::new(tree, Sigma::Padic { alpha, b: p as f64 })?));
    }
    let tree = if let Some(s) = &opts.padic {
        let kv = KeyValues::parse("padic", s)?;
        padic_tree(kv.get("p")?, kv.get("depth")?, kv.opt("dim")?.unwrap_or(1))?
    } else if let Some(t) = &opts.tree {
        if t == "random" {
            random_tree(&mut rng(opts), 4, 3, 40)
        } else {
            let text = std::fs::read_to_string(t).with_context(|| format!("reading tree file {t}"))?;
            let spec: ModelSpec = serde_json::from_str(&text).context("tree JSON")?;
            spec.build()?
        }
    } else {
        bail!("no model: give --padic, --zp, --qp or --tree");
    };
    Ok(Source::Heat(HeatModel::new(tree, sigma.unwrap_or(Sigma::Standard))?))
}

fn heat(opts: &Opts, what: &str) -> Result<HeatModel> {
    match source(opts)? {
        Source::Heat(m) => Ok(m),
        Source::Window(_) => bail!("{what} needs a finite model (--padic, --zp or --tree)"),
    }
}

fn finish(mut checks: Vec<Check>, extra: impl FnOnce() -> Result<Vec<Check>>, opts: &Opts) -> Result<Vec<Check>> {
    if opts.check {
        checks.extend(extra()?);
    }
    Ok(checks)
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Acceptance checks for a finite model.
fn model_suite(m: &HeatModel) -> Result<Vec<Check>> {
    let tr = m.tree();
    let n = tr.n_leaves();
    let mut out = Vec::new();

    let es = eigensystem(m);
    let mut worst = 0.0f64;
    for t in [0.1, 1.0, 10.0] {
        let k = m.kernel_matrix(t);
        let e = es.reconstruct_kernel(m, t);
        worst = worst.max(max_abs(&k, &e) / k.amax());
    }
    let p1 = m.markov_matrix(1.0);
    let sq = max_abs(&(&p1 * &p1), &m.markov_matrix(2.0));
    out.push(check("kernel-oracles", worst <= 1e-10 && sq <= 1e-10, format!("eigen {worst:.2e}, squaring {sq:.2e}")));

    let mut semi = 0.0f64;
    for s in [0.3, 0.7] {
        for t in [0.3, 0.7] {
            semi = semi.max(max_abs(&(m.markov_matrix(s) * m.markov_matrix(t)), &m.markov_matrix(s + t)));
        }
    }
    out.push(check("semigroup", semi <= 1e-10, format!("{semi:.2e}")));

    let res = es.residuals(m).into_iter().fold(0.0, f64::max);
    let mut expanded: Vec<f64> =
        es.spectrum().iter().flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity)).collect();
    expanded.sort_by(f64::total_cmp);
    let oracle = oracle_spectrum(m);
    let top = oracle.last().copied().unwrap_or(1.0).max(1.0);
    let dev = expanded.iter().zip(&oracle).map(|(a, b)| (a - b).abs() / top).fold(0.0, f64::max);
    out.push(check(
        "spectrum",
        res <= 1e-12 && expanded.len() == n && dev <= 1e-9,
        format!("residual {res:.2e}, modes {}/{n}, dense solver {dev:.2e}", expanded.len()),
    ));

    if n <= 32 {
        let k = m.kernel_matrix(1.0);
        let mut ok = true;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let d = |a, b| if a == b { 0.0 } else { tr.distance(a, b).unwrap_or(0.0) };
                    let ds = |a, b| if a == b { 0.0 } else { m.intrinsic_distance(a, b) };
                    let inv = |a: usize, b: usize| 1.0 / k[(a, b)];
                    let tol = 1e-12;
                    ok &= d(x, y) <= d(x, z).max(d(z, y)) * (1.0 + tol);
                    ok &= ds(x, y) <= ds(x, z).max(ds(z, y)) * (1.0 + tol);
                    ok &= inv(x, y) <= inv(x, z).max(inv(z, y)) * (1.0 + tol);
                }
            }
        }
        out.push(check("ultrametric-axioms", ok, format!("{n} points")));
    }

    let mut ptmin = true;
    for t in log_grid(0.01, 100.0, 9) {
        let k = m.kernel_matrix(t);
        for x in 0..n {
            for y in 0..n {
                ptmin &= k[(x, y)] <= k[(x, x)].min(k[(y, y)]) * (1.0 + 1e-12);
            }
        }
    }
    out.push(check("kernel-below-diagonal", ptmin, "t in [1e-2, 1e2]"));

    let dim = liouville_check(m, 1.0);
    out.push(check("liouville", dim == 1, format!("fixed space dimension {dim}")));
    Ok(out)
}

fn kernel(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let t = opts.t.unwrap_or(1.0);
    match source(opts)? {
        Source::Heat(m) => {
            let n = m.n();
            let k = m.kernel_matrix(t);
            out.csv(
                &["t", "x", "y", "p"],
                (0..n)
                    .flat_map(|x| (0..n).map(move |y| (x, y)))
                    .map(|(x, y)| vec![num(t), x.to_string(), y.to_string(), num(k[(x, y)])]),
            )?;
            let masses = m.tree().atom_masses();
            let mass_err =
                (0..n).map(|x| ((0..n).map(|y| k[(x, y)] * masses[y]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
            let checks = vec![check("probability", mass_err <= 1e-10, format!("max |Σ p μ − 1| = {mass_err:.2e}"))];
            finish(checks, || model_suite(&m), opts)
        }
        Source::Window(w) => {
            let n = w.n_points();
            out.csv(
                &["t", "x", "y", "distance", "p"],
                (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|(x, y)| {
                    vec![num(t), x.to_string(), y.to_string(), num(w.metric_distance(x, y)), num(w.kernel(t, x, y))]
                }),
            )?;
            Ok(Vec::new())
        }
    }
}

fn spectrum(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let m = heat(opts, "spectrum")?;
    let es = eigensystem(&m);
    let spec = es.spectrum();
    out.csv(&["lambda", "multiplicity"], spec.iter().map(|e| vec![num(e.lambda), e.multiplicity.to_string()]))?;
    let res = es.residuals(&m).into_iter().fold(0.0, f64::max);
    let count: usize = spec.iter().map(|e| e.multiplicity).sum();
    let checks = vec![
        check("eigen-residuals", res <= 1e-12, format!("{res:.2e}")),
        check("mode-count", count == m.n(), format!("{count} modes, {} points", m.n())),
    ];
    finish(checks, || model_suite(&m), opts)
}

fn window_green_rows(w: &QpWindow) -> Result<(Vec<Vec<String>>, f64)> {
    let analytic = AnalyticModel::Taibleson { p: w.p, n: w.n, alpha: w.alpha };
    let n = w.n_points();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let r = w.metric_distance(x, y);
            let series = green_window_series(w, x, y)?;
            let exact = analytic.green(r)?;
            let rel = (series - exact).abs() / exact;
            worst = worst.max(rel);
            rows.push(vec![x.to_string(), y.to_string(), num(r), num(series), num(exact), num(rel)]);
        }
    }
    Ok((rows, worst))
}

/// The `--model` JSON, inline or from a file.
fn analytic(opts: &Opts) -> Result<Option<(AnalyticSpec, AnalyticModel)>> {
    let Some(m) = &opts.model else { return Ok(None) };
    let text = if std::path::Path::new(m).is_file() { std::fs::read_to_string(m)? } else { m.clone() };
    let spec: AnalyticSpec = serde_json::from_str(&text).context("model JSON")?;
    let model = spec.build()?;
    Ok(Some((spec, model)))
}

/// `--r`, or the spheres p^k for |k| ≤ 4.
fn radii(opts: &Opts, model: &AnalyticModel) -> Vec<f64> {
    match opts.r {
        Some(r) => vec![r],
        None => (-4..=4).map(|k| (model.prime() as f64).powi(k)).collect(),
    }
}

fn green(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    if let Some((_, model)) = analytic(opts)? {
        let mut rows = Vec::new();
        for r in radii(opts, &model) {
            let (verdict, value) = match model.green_value(r)? {
                GreenValue::Finite(g) => ("finite", num(g)),
                GreenValue::Recurrent => ("recurrent", String::new()),
            };
            rows.push(vec![num(r), verdict.to_string(), value]);
        }
        out.csv(&["r", "verdict", "green"], rows)?;
        return Ok(Vec::new());
    }
    match source(opts)? {
        Source::Heat(m) => {
            let n = m.n();
            let mut rows = Vec::new();
            for x in 0..n {
                for y in 0..n {
                    let (verdict, value) = match m.green(x, y)? {
                        GreenValue::Finite(g) => ("finite", num(g)),
                        GreenValue::Recurrent => ("recurrent", String::new()),
                    };
                    rows.push(vec![x.to_string(), y.to_string(), verdict.to_string(), value]);
                }
            }
            out.csv(&["x", "y", "verdict", "green"], rows)?;
            finish(Vec::new(), || model_suite(&m), opts)
        }
        Source::Window(w) => {
            let analytic = AnalyticModel::Taibleson { p: w.p, n: w.n, alpha: w.alpha };
            if !analytic.transience()?.transient {
                out.csv(&["x", "y", "distance", "series", "analytic", "rel_err"], std::iter::empty())?;
                return Ok(vec![check("recurrent", w.alpha >= w.n as f64, format!("alpha {} ≥ n {}", w.alpha, w.n))]);
            }
            let (rows, worst) = window_green_rows(&w)?;
            out.csv(&["x", "y", "distance", "series", "analytic", "rel_err"], rows)?;
            Ok(vec![check("green-series", worst <= 1e-6, format!("max relative error {worst:.2e}"))])
        }
    }
}

fn jump(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    if let Some((_, model)) = analytic(opts)? {
        let rows = radii(opts, &model)
            .into_iter()
            .map(|r| Ok(vec![num(r), num(model.jump(r)?)]))
            .collect::<Result<Vec<_>>>()?;
        out.csv(&["r", "jump"], rows)?;
        return Ok(Vec::new());
    }
    match source(opts)? {
        Source::Heat(m) => {
            let j = m.jump_matrix();
            let n = m.n();
            let rows = (0..n)
                .flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (x, y)))
                .map(|(x, y)| vec![x.to_string(), y.to_string(), num(j[(x, y)])]);
            out.csv(&["x", "y", "jump"], rows)?;
            let asym = (&j - j.transpose()).amax() / j.amax().max(f64::MIN_POSITIVE);
            let checks = vec![check("symmetric", asym <= 1e-12, format!("{asym:.2e}"))];
            finish(checks, || model_suite(&m), opts)
        }
        Source::Window(w) => {
            let analytic = AnalyticModel::Taibleson { p: w.p, n: w.n, alpha: w.alpha };
            let n = w.n_points();
            let mut rows = Vec::new();
            for x in 0..n {
                for y in (0..n).filter(|&y| y != x) {
                    let r = w.metric_distance(x, y);
                    rows.push(vec![x.to_string(), y.to_string(), num(r), num(analytic.jump(r)?)]);
                }
            }
            out.csv(&["x", "y", "distance", "jump"], rows)?;
            Ok(Vec::new())
        }
    }
}

fn moments(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let gamma = opts.gamma.unwrap_or(1.0);
    let grid = match &opts.t_grid {
        Some(g) => parse_grid(g)?,
        None => log_grid(1e-2, 1.0, 20),
    };
    match source(opts)? {
        Source::Heat(m) => {
            let x0 = opts.x0.unwrap_or(0);
            m.tree().check_point(x0)?;
            let rep = m.moments(x0, gamma, &grid);
            out.csv(
                &["t", "exact", "quadrature", "tail_bound", "shape", "ratio"],
                rep.rows.iter().map(|r| {
                    vec![num(r.t), num(r.exact), num(r.quadrature), num(r.tail_bound), num(r.shape), num(r.ratio)]
                }),
            )?;
            let checks = vec![
                check("quadrature", rep.max_diff <= 1e-8, format!("max diff {:.2e}", rep.max_diff)),
                check("within-diameter", rep.within_diameter, format!("band [{:.4}, {:.4}]", rep.lower, rep.upper)),
            ];
            finish(checks, || model_suite(&m), opts)
        }
        Source::Window(w) => {
            let (p, alpha) = (w.p, w.alpha);
            let bound = alpha / (alpha - gamma);
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for &t in &grid {
                match qp_moment(p, alpha, gamma, t) {
                    Some(mt) => {
                        let ratio = mt / t.powf(gamma / alpha);
                        worst = worst.max(ratio);
                        rows.push(vec![num(t), num(mt), num(ratio), num(bound)]);
                    }
                    None => rows.push(vec![num(t), "inf".into(), "inf".into(), String::new()]),
                }
            }
            out.csv(&["t", "moment", "ratio", "bound"], rows)?;
            Ok(vec![if gamma >= alpha {
                check("divergence", qp_moment(p, alpha, gamma, 1.0).is_none(), format!("gamma {gamma} ≥ alpha {alpha}"))
            } else {
                check("upper-bound", worst <= bound, format!("max ratio {worst:.4} ≤ {bound:.4}"))
            }])
        }
    }
}

fn parse_family(s: &str, default_qp: Option<(u64, f64)>) -> Result<Family> {
    let parts: Vec<&str> = s.split(':').collect();
    let f = |i: usize| -> Result<f64> {
        parts.get(i).ok_or_else(|| anyhow!("--family {s}: missing parameter"))?.parse::<f64>().context("--family")
    };
    Ok(match parts[0] {
        "doubling" => Family::Doubling,
        "nab" => Family::Nab { alpha: f(1)?, beta: f(2)? },
        "log" => Family::Log { alpha: f(1)? },
        "exp" => Family::Exp { alpha: f(1)? },
        "qp" => {
            let (p, alpha) = default_qp.ok_or_else(|| anyhow!("--family qp needs --qp"))?;
            Family::Qp { p, alpha }
        }
        other => bail!("unknown family `{other}`"),
    })
}

#[derive(Serialize)]
struct EnvelopeOut {
    family: Family,
    t_grid: Vec<f64>,
    band: EnvelopeBand,
    deeper_band: Option<EnvelopeBand>,
}

fn envelope(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let grid = match &opts.t_grid {
        Some(g) => parse_grid(g)?,
        None => log_grid(0.05, 20.0, 40),
    };
    match source(opts)? {
        Source::Heat(m) => {
            let family = parse_family(opts.family.as_deref().unwrap_or("doubling"), None)?;
            let band = envelope_check(&m, &family, &grid)?;
            let checks = vec![
                check(
                    "band",
                    band.lower > 0.0 && band.upper.is_finite(),
                    format!("[{:.4}, {:.4}]", band.lower, band.upper),
                ),
                check("diagonal-lower", band.diagonal_lower_ok, ""),
                check("offdiagonal-upper", band.offdiag_upper_ok, ""),
            ];
            out.json(&EnvelopeOut { family, t_grid: grid, band, deeper_band: None })?;
            finish(checks, || model_suite(&m), opts)
        }
        Source::Window(w) => {
            let family = parse_family(opts.family.as_deref().unwrap_or("qp"), Some((w.p, w.alpha)))?;
            let band = envelope_check(&w, &family, &grid)?;
            let mut checks = vec![check(
                "band",
                band.lower > 0.0 && band.upper.is_finite(),
                format!("[{:.4}, {:.4}]", band.lower, band.upper),
            )];
            let deeper_band = if opts.check {
                let d = QpWindow::new(w.p, w.n, w.alpha, w.tree().max_depth() + 2)?;
                let b2 = envelope_check(&d, &family, &grid)?;
                let rel =
                    ((b2.lower - band.lower) / band.lower).abs().max(((b2.upper - band.upper) / band.upper).abs());
                checks.push(check("depth-stability", rel <= 0.1, format!("relative change {rel:.4}")));
                Some(b2)
            } else {
                None
            };
            out.json(&EnvelopeOut { family, t_grid: grid, band, deeper_band })?;
            Ok(checks)
        }
    }
}

/// Walk from --walk, --padic (uniform moves) or --tree random.
fn walk_model(opts: &Opts) -> Result<WalkModel> {
    if let Some(path) = &opts.walk {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading walk file {path}"))?;
        let spec: WalkSpec = serde_json::from_str(&text).context("walk JSON")?;
        return Ok(spec.build()?);
    }
    if let Some(s) = &opts.padic {
        let kv = KeyValues::parse("padic", s)?;
        let tree = padic_tree(kv.get("p")?, kv.get("depth")?, kv.opt("dim")?.unwrap_or(1))?;
        let shape = ultrametric::treewalk::Shape::from_tree(&tree);
        let one = vec![BigRational::from_integer(1.into()); shape.len()];
        return Ok(WalkModel::Finite(RandomWalk::from_conductances(shape, &one)?));
    }
    match opts.tree.as_deref() {
        Some("random") | None => Ok(WalkModel::Finite(random_walk(&mut rng(opts), 40, 5))),
        Some(other) => bail!("walks take --walk FILE, --padic or --tree random, not --tree {other}"),
    }
}

fn finite_walk(opts: &Opts, what: &str) -> Result<RandomWalk<BigRational>> {
    match walk_model(opts)? {
        WalkModel::Finite(w) => Ok(w),
        WalkModel::Homogeneous(_) => bail!("{what} needs a finite walk"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn walk_suite(s: &SolvedWalk<BigRational>, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (_, worst) = doob_naim_rows(s, seed, 10)?;
    out.push(check("doob-naim", worst <= 1e-8, format!("max relative diff {worst:.2e}")));
    let (td, _) = roundtrip(s)?;
    out.push(check("roundtrip", td <= 1e-12, format!("max transition diff {td:.2e}")));
    match boundary_eigencheck(s) {
        Ok(ec) => out.push(check("boundary-eigen", ec.max_residual <= 1e-12, format!("{:.2e}", ec.max_residual))),
        Err(e) => out.push(check("boundary-eigen", false, e.to_string())),
    }
    Ok(out)
}

fn homogeneous_rows(h: &HomogeneousWalk<f64>) -> (Vec<Vec<String>>, f64) {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..=12u32 {
        let (f, cf) = (h.f_to_root(k), h.f_up().powi(k as i32));
        let (g, cg) = (h.green_to_root(k), h.closed_green_to_root(k));
        if !h.two_sided {
            worst = worst.max(rel(g, cg));
        }
        worst = worst.max(rel(f, cf));
        rows.push(vec![k.to_string(), num(f), num(g), num(cg), num(h.phi(k as i64)), num(h.jfrak(k as i64))]);
    }
    (rows, worst)
}

fn walk(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    match walk_model(opts)? {
        WalkModel::Homogeneous(h) => {
            let (rows, worst) = homogeneous_rows(&h);
            out.csv(&["level", "f_to_root", "green_to_root", "closed_green_to_root", "phi", "jfrak"], rows)?;
            let mut checks = vec![check("closed-forms", worst <= 1e-12, format!("{worst:.2e}"))];
            if !h.two_sided {
                let d = rel(h.spectrum_ratio(3), h.closed_spectrum_ratio())
                    .max(rel(h.time_change(3), h.closed_time_change()));
                checks.push(check("spectrum-ratio", d <= 1e-12, format!("{d:.2e}")));
            }
            Ok(checks)
        }
        WalkModel::Finite(w) => {
            let s = w.solve()?;
            let sh = s.shape();
            let nu = s.hitting_distribution(0);
            let mut leaf_pos = vec![None; sh.len()];
            for (i, &l) in sh.leaves().iter().enumerate() {
                leaf_pos[l] = Some(i);
            }
            let mut rows = Vec::new();
            #[allow(clippy::needless_range_loop)]
            for v in 0..sh.len() {
                let g = if sh.is_leaf(v) { String::new() } else { num(s.g(v, 0)?.to_f64()) };
                rows.push(vec![
                    sh.external_id(v).to_string(),
                    sh.parent(v).map(|p| sh.external_id(p).to_string()).unwrap_or_default(),
                    sh.depth(v).to_string(),
                    num(s.f(v, 0).to_f64()),
                    num(s.f(0, v).to_f64()),
                    g,
                    leaf_pos[v].map(|i| num(nu[i].to_f64())).unwrap_or_default(),
                ]);
            }
            out.csv(&["vertex", "parent", "depth", "f_to_root", "f_from_root", "green_to_root", "exit_law"], rows)?;
            let total: BigRational = nu.iter().cloned().fold(<BigRational as Scalar>::zero(), |a, b| a + b);
            let checks =
                vec![check("exit-law-mass", total == <BigRational as Scalar>::one(), format!("Σ ν = {total}"))];
            let seed = opts.seed();
            finish(checks, || walk_suite(&s, seed), opts)
        }
    }
}

/// Walk → boundary → walk: (max transition diff, C).
fn roundtrip(s: &SolvedWalk<BigRational>) -> Result<(f64, BigRational)> {
    let b = walk_to_boundary(s)?;
    let sh = s.shape();
    let back = boundary_to_walk(sh, &b.phi, &b.mu)?;
    let mut worst = 0.0f64;
    for v in 1..sh.len() {
        let p = sh.parent(v).unwrap();
        worst = worst.max((s.walk().p(p, v) - back.walk.p(p, v)).to_f64().abs());
        if !sh.is_leaf(v) {
            worst = worst.max((s.walk().p(v, p) - back.walk.p(v, p)).to_f64().abs());
        }
    }
    Ok((worst, back.c))
}

#[derive(Serialize)]
struct DualityOut {
    vertices: usize,
    leaves: usize,
    /// G(v, o) per vertex (external ids), 0 at terminal vertices.
    phi: Vec<(usize, f64)>,
    /// ν_o per leaf.
    mu: Vec<(usize, f64)>,
    c: Option<String>,
    max_transition_diff: Option<f64>,
    max_phi_diff: Option<f64>,
}

fn duality(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let w = finite_walk(opts, "duality")?;
    let s = w.solve()?;
    let b = walk_to_boundary(&s)?;
    let sh = s.shape();
    let mut rep = DualityOut {
        vertices: sh.len(),
        leaves: sh.leaves().len(),
        phi: (0..sh.len()).map(|v| (sh.external_id(v), b.phi[v].to_f64())).collect(),
        mu: sh.leaves().iter().zip(&b.mu).map(|(&l, m)| (sh.external_id(l), m.to_f64())).collect(),
        c: None,
        max_transition_diff: None,
        max_phi_diff: None,
    };
    let mut checks = Vec::new();
    if opts.roundtrip {
        let (td, c) = roundtrip(&s)?;
        // and the other direction: the rebuilt walk's boundary is (C φ, μ)
        let back = boundary_to_walk(sh, &b.phi, &b.mu)?;
        let b2 = walk_to_boundary(&back.walk.solve()?)?;
        let mut pd = 0.0f64;
        for v in sh.interior() {
            pd = pd.max((b2.phi[v].clone() - back.c.clone() * b.phi[v].clone()).to_f64().abs());
        }
        for (a, m) in b2.mu.iter().zip(&b.mu) {
            pd = pd.max((a.clone() - m.clone()).to_f64().abs());
        }
        checks.push(check("roundtrip-transitions", td <= 1e-12, format!("{td:.2e}")));
        checks.push(check("roundtrip-boundary", pd <= 1e-12, format!("{pd:.2e}")));
        rep.c = Some(c.to_string());
        rep.max_transition_diff = Some(td);
        rep.max_phi_diff = Some(pd);
    }
    out.json(&rep)?;
    let seed = opts.seed();
    finish(checks, || walk_suite(&s, seed), opts)
}

fn doob_naim_rows(s: &SolvedWalk<BigRational>, seed: u64, pairs: usize) -> Result<(Vec<Vec<String>>, f64)> {
    let sh = s.shape();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let v = r.gen_range(1..sh.len());
        let w = r.gen_range(1..sh.len());
        let d = s.doob_naim(&s.branch_indicator(v), &s.branch_indicator(w))?;
        let lhs = d.lhs.to_f64();
        let e = d.diff.to_f64().abs() / lhs.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(if d.diff.is_zero() { 0.0 } else { e });
        let closed = s.nested_closed_form(v, w).ok();
        if let Some(c) = &closed {
            if *c != d.lhs || *c != d.rhs {
                worst = f64::INFINITY;
            }
        }
        rows.push(vec![
            i.to_string(),
            sh.external_id(v).to_string(),
            sh.external_id(w).to_string(),
            num(lhs),
            num(d.rhs.to_f64()),
            num(e),
            closed.map(|c| num(c.to_f64())).unwrap_or_default(),
        ]);
    }
    Ok((rows, worst))
}

fn doobnaim(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let w = finite_walk(opts, "doobnaim")?;
    let s = w.solve()?;
    let (rows, worst) = doob_naim_rows(&s, opts.seed(), 10)?;
    out.csv(&["pair", "v", "w", "energy", "naim", "rel_diff", "nested_closed_form"], rows)?;
    let checks = vec![check("doob-naim", worst <= 1e-8, format!("max relative diff {worst:.2e}"))];
    let seed = opts.seed();
    finish(checks, || walk_suite(&s, seed), opts)
}

fn simulate(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    let paths = opts.paths.unwrap_or(100_000);
    let seed = opts.seed();
    if opts.walk.is_some() {
        let w = finite_walk(opts, "simulate")?;
        let s = w.solve()?;
        let u0 = opts.x0.unwrap_or(0);
        let exact: Vec<f64> = s.hitting_distribution(u0).iter().map(Scalar::to_f64).collect();
        let emp = sample_walk(&w, u0, paths, seed)?;
        let sh = s.shape();
        out.csv(
            &["leaf", "exact", "empirical", "stderr"],
            sh.leaves().iter().enumerate().map(|(i, &l)| {
                vec![sh.external_id(l).to_string(), num(exact[i]), num(emp.hits.probs[i]), num(emp.hits.stderr[i])]
            }),
        )?;
        let chi = chi_square(&emp.hits.counts, &exact);
        let tv = emp.hits.tv_distance(&exact);
        return Ok(vec![check("chi-square", chi.p_value >= 1e-3, format!("p = {:.4}, TV = {tv:.4}", chi.p_value))]);
    }
    let m = heat(opts, "simulate")?;
    let x0 = opts.x0.unwrap_or(0);
    let t = opts.t.unwrap_or(1.0);
    let emp = sample_jump(&m, x0, t, paths, seed)?;
    let exact: Vec<f64> = (0..m.n()).map(|y| m.heat_kernel(t, x0, y) * m.tree().atom_mass(y)).collect();
    let law = sampler_law(&m, x0, t);
    out.csv(
        &["point", "exact", "empirical", "stderr"],
        (0..m.n()).map(|y| vec![y.to_string(), num(exact[y]), num(emp.probs[y]), num(emp.stderr[y])]),
    )?;
    let tv = emp.tv_distance(&exact);
    let chi = chi_square(&emp.counts, &exact);
    let law_err = law.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let checks = vec![
        check("sampler-law", law_err <= 1e-12, format!("{law_err:.2e}")),
        check("chi-square", chi.p_value >= 1e-3, format!("p = {:.4}, TV = {tv:.4}", chi.p_value)),
    ];
    finish(checks, || model_suite(&m), opts)
}

#[derive(Serialize)]
struct PadicNumber {
    literal: String,
    valuation: Option<i64>,
    norm: f64,
    rational: String,
}

fn describe(x: &PAdic) -> PadicNumber {
    PadicNumber {
        literal: x.to_string(),
        valuation: x.valuation(),
        norm: x.norm(),
        rational: x.to_rational().to_string(),
    }
}

#[derive(Serialize)]
struct AnalyticOut {
    model: AnalyticSpec,
    r: f64,
    t: f64,
    jump: f64,
    heat: f64,
    green: Option<f64>,
    transient: bool,
    critical_time: f64,
    /// Multiplicity null means infinite.
    spectrum: Vec<(f64, Option<u64>)>,
}

fn padic(opts: &Opts, out: &Output) -> Result<Vec<Check>> {
    if let Some(xs) = &opts.x {
        let x: PAdic = xs.parse()?;
        let mut rep = serde_json::json!({ "x": describe(&x) });
        if let Some(ys) = &opts.y {
            let y: PAdic = ys.parse()?;
            rep["y"] = serde_json::to_value(describe(&y))?;
            rep["sum"] = serde_json::to_value(describe(&x.add(&y)?))?;
            rep["product"] = serde_json::to_value(describe(&x.mul(&y)?))?;
            rep["distance"] = x.distance(&y)?.into();
        }
        out.json(&rep)?;
        return Ok(Vec::new());
    }
    if let Some((spec, model)) = analytic(opts)? {
        let r = opts.r.unwrap_or(1.0);
        let t = opts.t.unwrap_or(1.0);
        let tr = model.transience()?;
        let rep = AnalyticOut {
            r,
            t,
            jump: model.jump(r)?,
            heat: model.heat(t, r)?,
            green: model.green(r).ok(),
            transient: tr.transient,
            critical_time: model.critical_time(),
            spectrum: model.spectrum(4).into_iter().map(|(l, k)| (l, (k > 0).then_some(k))).collect(),
            model: spec,
        };
        let consistent = rep.green.is_some() == rep.transient;
        out.json(&rep)?;
        return Ok(vec![check("green-verdict", consistent, format!("transient = {}", rep.transient))]);
    }
    if let Some(rs) = &opts.rotation {
        let kv = KeyValues::parse("rotation", rs)?;
        let a_text: String = kv.get("a")?;
        let a = a_text.split(';').map(|s| parse_rational(s.trim())).collect::<std::result::Result<Vec<_>, _>>()?;
        let spec = RotationInvariantSpec::new(kv.get("p")?, kv.opt("m0")?.unwrap_or(0), a)?;
        let rep = spec.classify();
        let agree = rep.lambda_strict == rep.psi_strict && rep.psi_strict == rep.jfrak_strict;
        out.json(&rep)?;
        return Ok(vec![check("classifier-equivalence", agree, format!("{:?}", rep.class))]);
    }
    bail!("padic needs --x, --model or --rotation")
}
