//! p-adic numbers at finite precision and closed-form models of the
//! p-adic fractional operators.
//!
//! The isotropic operators on ℚₚⁿ (fractional derivative for n = 1,
//! Taibleson for general n) all come from one distance distribution,
//! σ(r) = exp(−(p/r)^α): the ball of radius p^j carries eigenvalue
//! p^{(1−j)α} and volume p^{jn}. Every series below is a sum over j.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::balltree::{padic_ball_tree, padic_tree, BallTree, Point, Sigma};
use crate::error::{Error, Result};
use crate::semigroup::{critical_time, transience_test, GreenValue, GrowthLaw, HeatModel, KernelModel, Transience};

/// Default number of tracked digits.
pub const DEFAULT_PREC: usize = 32;

/// x = p^val · Σ digits[i] p^i, known modulo p^{val+prec}.
#[derive(Clone, PartialEq, Eq)]
pub struct PAdic {
    p: u64,
    val: i64,
    digits: Vec<u64>,
    prec: usize,
}

impl PAdic {
    pub fn zero(p: u64, prec: usize) -> PAdic {
        PAdic { p, val: 0, digits: Vec::new(), prec }
    }

    fn normalized(p: u64, mut val: i64, mut digits: Vec<u64>, prec: usize) -> PAdic {
        let lead = digits.iter().take_while(|&&d| d == 0).count();
        if lead == digits.len() {
            return PAdic::zero(p, prec);
        }
        digits.drain(..lead);
        val += lead as i64;
        digits.truncate(prec);
        while digits.last() == Some(&0) {
            digits.pop();
        }
        PAdic { p, val, digits, prec }
    }

    pub fn from_digits(p: u64, val: i64, digits: &[u64], prec: usize) -> Result<PAdic> {
        if !crate::balltree::is_prime(p) {
            return Err(Error::Invalid(format!("{p} is not prime")));
        }
        if let Some(&d) = digits.iter().find(|&&d| d >= p) {
            return Err(Error::Invalid(format!("digit {d} out of range for p = {p}")));
        }
        if prec == 0 {
            return Err(Error::PrecisionUnderflow("zero precision".into()));
        }
        let lead = digits.iter().take_while(|&&d| d == 0).count();
        if lead < digits.len() && lead >= prec {
            return Err(Error::PrecisionUnderflow(format!("first nonzero digit beyond {prec} digits")));
        }
        Ok(PAdic::normalized(p, val, digits.to_vec(), prec))
    }

    pub fn from_integer(p: u64, n: i64, prec: usize) -> Result<PAdic> {
        PAdic::from_ratio(p, &BigRational::from_integer(BigInt::from(n)), prec)
    }

    /// Expansion of a rational number; the denominator's p-part moves into
    /// the valuation and the unit part is inverted modulo p^prec.
    pub fn from_ratio(p: u64, q: &BigRational, prec: usize) -> Result<PAdic> {
        if !crate::balltree::is_prime(p) {
            return Err(Error::Invalid(format!("{p} is not prime")));
        }
        if prec == 0 {
            return Err(Error::PrecisionUnderflow("zero precision".into()));
        }
        if q.is_zero() {
            return Ok(PAdic::zero(p, prec));
        }
        let pb = BigInt::from(p);
        let (mut num, mut den) = (q.numer().clone(), q.denom().clone());
        let mut val = 0i64;
        while (&num % &pb).is_zero() {
            num /= &pb;
            val += 1;
        }
        while (&den % &pb).is_zero() {
            den /= &pb;
            val -= 1;
        }
        let modulus = pb.pow(prec as u32);
        let inv = mod_inverse(&den, &modulus).expect("unit modulo p");
        let mut u = ((num * inv) % &modulus + &modulus) % &modulus;
        let mut digits = Vec::with_capacity(prec);
        for _ in 0..prec {
            let d = (&u % &pb).to_u64().unwrap();
            digits.push(d);
            u /= &pb;
        }
        Ok(PAdic::normalized(p, val, digits, prec))
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> usize {
        self.prec
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    /// Little-endian digits starting at p^val.
    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    /// None for zero.
    pub fn valuation(&self) -> Option<i64> {
        (!self.is_zero()).then_some(self.val)
    }

    pub fn norm(&self) -> f64 {
        match self.valuation() {
            None => 0.0,
            Some(v) => (self.p as f64).powi(-v as i32),
        }
    }

    pub fn norm_exact(&self) -> BigRational {
        match self.valuation() {
            None => BigRational::zero(),
            Some(v) => crate::balltree::pow_rational(&BigRational::from_integer(BigInt::from(self.p)), -v),
        }
    }

    fn same_prime(&self, o: &PAdic) -> Result<()> {
        if self.p == o.p {
            Ok(())
        } else {
            Err(Error::PrimeMismatch(self.p, o.p))
        }
    }

    fn digit_at(&self, pos: i64) -> u64 {
        let i = pos - self.val;
        if i < 0 {
            0
        } else {
            self.digits.get(i as usize).copied().unwrap_or(0)
        }
    }

    fn abs_prec(&self) -> i64 {
        self.val + self.prec as i64
    }

    /// Digit-wise sum with carries. Cancellation down to the precision
    /// floor is reported rather than silently returned as zero.
    pub fn add(&self, o: &PAdic) -> Result<PAdic> {
        self.same_prime(o)?;
        if self.is_zero() {
            return Ok(o.clone());
        }
        if o.is_zero() {
            return Ok(self.clone());
        }
        let lo = self.val.min(o.val);
        let hi = self.abs_prec().min(o.abs_prec());
        let len = (hi - lo).max(0) as usize;
        let mut out = Vec::with_capacity(len);
        let mut carry = 0u64;
        for k in 0..len {
            let pos = lo + k as i64;
            let s = self.digit_at(pos) + o.digit_at(pos) + carry;
            out.push(s % self.p);
            carry = s / self.p;
        }
        if out.iter().all(|&d| d == 0) {
            return Err(Error::PrecisionUnderflow(format!("sum vanishes modulo p^{hi}")));
        }
        let first = out.iter().position(|&d| d != 0).unwrap();
        let val = lo + first as i64;
        let prec = (hi - val) as usize;
        Ok(PAdic::normalized(self.p, lo, out, prec.max(1)))
    }

    pub fn neg(&self) -> PAdic {
        if self.is_zero() {
            return self.clone();
        }
        let mut digits = vec![0; self.prec];
        for (i, slot) in digits.iter_mut().enumerate() {
            let d = self.digits.get(i).copied().unwrap_or(0);
            *slot = if i == 0 { self.p - d } else { self.p - 1 - d };
        }
        PAdic::normalized(self.p, self.val, digits, self.prec)
    }

    pub fn sub(&self, o: &PAdic) -> Result<PAdic> {
        self.add(&o.neg())
    }

    /// Schoolbook product truncated to the smaller relative precision.
    pub fn mul(&self, o: &PAdic) -> Result<PAdic> {
        self.same_prime(o)?;
        let prec = self.prec.min(o.prec);
        if self.is_zero() || o.is_zero() {
            return Ok(PAdic::zero(self.p, prec));
        }
        let mut acc = vec![0u128; prec];
        for (i, &a) in self.digits.iter().enumerate().take(prec) {
            for (j, &b) in o.digits.iter().enumerate() {
                if i + j >= prec {
                    break;
                }
                acc[i + j] += a as u128 * b as u128;
            }
        }
        let p = self.p as u128;
        let mut carry = 0u128;
        let mut digits = Vec::with_capacity(prec);
        for a in acc {
            let s = a + carry;
            digits.push((s % p) as u64);
            carry = s / p;
        }
        Ok(PAdic::normalized(self.p, self.val + o.val, digits, prec))
    }

    /// ‖x − y‖, zero when the two agree to the available precision.
    pub fn distance(&self, o: &PAdic) -> Result<f64> {
        match self.sub(o) {
            Ok(d) => Ok(d.norm()),
            Err(Error::PrecisionUnderflow(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Exact rational value of the tracked digits.
    pub fn to_rational(&self) -> BigRational {
        let pb = BigRational::from_integer(BigInt::from(self.p));
        let mut acc = BigRational::zero();
        let mut w = BigRational::one();
        for &d in &self.digits {
            acc += &w * BigRational::from_integer(BigInt::from(d));
            w *= &pb;
        }
        acc * crate::balltree::pow_rational(&pb, self.val)
    }
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let (mut old_r, mut r) = (((a % m) + m) % m, m.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    while !r.is_zero() {
        let q = &old_r / &r;
        let nr = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, nr);
        let ns = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, ns);
    }
    old_r.is_one().then(|| ((old_s % m) + m) % m)
}

impl fmt::Display for PAdic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "p:{} val:0 digits:0 prec:{}", self.p, self.prec);
        }
        let digits: Vec<String> = self.digits.iter().map(|d| d.to_string()).collect();
        let sep = if self.p > 10 { "," } else { "" };
        write!(f, "p:{} val:{} digits:{} prec:{}", self.p, self.val, digits.join(sep), self.prec)
    }
}

impl fmt::Debug for PAdic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parses `"p:2 val:-1 digits:101"` with an optional `prec:N`.
/// Digits are little-endian; use commas between digits when p > 10.
impl FromStr for PAdic {
    type Err = Error;
    fn from_str(s: &str) -> Result<PAdic> {
        let mut p = None;
        let mut val = 0i64;
        let mut digits = None;
        let mut prec = None;
        let bad = |what: &str| Error::Parse(format!("{what} in p-adic literal {s:?}"));
        for tok in s.split_whitespace() {
            let (k, v) = tok.split_once(':').ok_or_else(|| bad("token without ':'"))?;
            match k {
                "p" => p = Some(v.parse::<u64>().map_err(|_| bad("prime"))?),
                "val" => val = v.parse().map_err(|_| bad("valuation"))?,
                "prec" => prec = Some(v.parse::<usize>().map_err(|_| bad("precision"))?),
                "digits" => {
                    let ds: Option<Vec<u64>> = if v.contains(',') {
                        v.split(',').map(|d| d.parse::<u64>().ok()).collect()
                    } else {
                        v.chars().map(|c| c.to_digit(36).map(u64::from)).collect()
                    };
                    digits = Some(ds.ok_or_else(|| bad("digits"))?);
                }
                _ => return Err(bad("unknown key")),
            }
        }
        let p = p.ok_or_else(|| bad("missing p"))?;
        let digits = digits.ok_or_else(|| bad("missing digits"))?;
        let prec = prec.unwrap_or(DEFAULT_PREC.max(digits.len()));
        if digits.len() > prec {
            return Err(Error::PrecisionUnderflow(format!("{} digits exceed precision {prec}", digits.len())));
        }
        PAdic::from_digits(p, val, &digits, prec)
    }
}

/// Closed-form p-adic operators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AnalyticModel {
    /// Fractional derivative 𝔇^α on ℚₚ.
    Vladimirov1D { p: u64, alpha: f64 },
    /// Fractional derivative 𝔻^α on the compact group ℤₚ.
    Zp { p: u64, alpha: f64 },
    /// Taibleson operator 𝔗^α on ℚₚⁿ.
    Taibleson { p: u64, n: u32, alpha: f64 },
    /// Sum of one-dimensional derivatives of orders α_i on ℚₚⁿ.
    ProductVladimirov { p: u64, alphas: Vec<f64> },
}

/// JSON form, e.g. `{"model":"taibleson","p":2,"n":2,"alpha":0.5}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum AnalyticSpec {
    Vladimirov { p: u64, alpha: f64 },
    Zp { p: u64, alpha: f64 },
    Taibleson { p: u64, n: u32, alpha: f64 },
    Product { p: u64, alphas: Vec<f64> },
}

impl AnalyticSpec {
    pub fn build(&self) -> Result<AnalyticModel> {
        let (p, alphas, n) = match self {
            AnalyticSpec::Vladimirov { p, alpha } | AnalyticSpec::Zp { p, alpha } => (*p, vec![*alpha], 1),
            AnalyticSpec::Taibleson { p, n, alpha } => (*p, vec![*alpha], *n),
            AnalyticSpec::Product { p, alphas } => (*p, alphas.clone(), alphas.len() as u32),
        };
        if !crate::balltree::is_prime(p) {
            return Err(Error::Invalid(format!("{p} is not prime")));
        }
        if n == 0 || alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Invalid("need n ≥ 1 and every α > 0".into()));
        }
        Ok(match self {
            AnalyticSpec::Vladimirov { p, alpha } => AnalyticModel::Vladimirov1D { p: *p, alpha: *alpha },
            AnalyticSpec::Zp { p, alpha } => AnalyticModel::Zp { p: *p, alpha: *alpha },
            AnalyticSpec::Taibleson { p, n, alpha } => AnalyticModel::Taibleson { p: *p, n: *n, alpha: *alpha },
            AnalyticSpec::Product { p, alphas } => AnalyticModel::ProductVladimirov { p: *p, alphas: alphas.clone() },
        })
    }
}

/// Σ_{j} c_j(t) p^{−jn} for j from `from` upward (None: from −∞), where
/// c_j = e^{−t p^{−jα}} − e^{−t p^{(1−j)α}} is the weight of the ball of radius p^j.
pub fn level_series(p: u64, n: u32, alpha: f64, t: f64, from: Option<i64>, to: Option<i64>) -> f64 {
    let pf = p as f64;
    let ln_p = pf.ln();
    let term = |j: i64| {
        let a = -t * (-(j as f64) * alpha * ln_p).exp();
        let b = -t * ((1.0 - j as f64) * alpha * ln_p).exp();
        // e^a − e^b with b < a ≤ 0
        let c = a.exp() * -(b - a).exp_m1();
        c * (-(j as f64) * n as f64 * ln_p).exp()
    };
    // the terms peak near j* with p^{j*α} ≈ t, then decay on both sides
    let centre = (t.ln() / (alpha * ln_p)).round() as i64;
    let lo = from.unwrap_or(i64::MIN);
    let hi = to.unwrap_or(i64::MAX);
    let start = centre.clamp(lo, hi);
    let mut total = 0.0;
    let mut j = start;
    loop {
        let v = term(j);
        total += v;
        if j >= hi || (j > centre + 4 && v <= 1e-18 * total.abs()) || j - start > 200_000 {
            break;
        }
        j += 1;
    }
    let mut j = start - 1;
    while j >= lo {
        let v = term(j);
        total += v;
        if (j < centre - 4 && v <= 1e-18 * total.abs()) || start - j > 200_000 {
            break;
        }
        j -= 1;
    }
    total
}

impl AnalyticModel {
    pub fn prime(&self) -> u64 {
        match self {
            AnalyticModel::Vladimirov1D { p, .. }
            | AnalyticModel::Zp { p, .. }
            | AnalyticModel::Taibleson { p, .. }
            | AnalyticModel::ProductVladimirov { p, .. } => *p,
        }
    }

    fn iso(&self) -> Option<(u64, u32, f64)> {
        match *self {
            AnalyticModel::Vladimirov1D { p, alpha } => Some((p, 1, alpha)),
            AnalyticModel::Taibleson { p, n, alpha } => Some((p, n, alpha)),
            _ => None,
        }
    }

    /// Σ 1/α_i, the decay exponent of the on-diagonal kernel.
    pub fn a_exponent(&self) -> f64 {
        match self {
            AnalyticModel::ProductVladimirov { alphas, .. } => alphas.iter().map(|a| 1.0 / a).sum(),
            AnalyticModel::Vladimirov1D { alpha, .. } | AnalyticModel::Zp { alpha, .. } => 1.0 / alpha,
            AnalyticModel::Taibleson { n, alpha, .. } => *n as f64 / alpha,
        }
    }

    /// Jump kernel at ‖x − y‖ = r (for products, `r` is the vector of coordinate norms
    /// and only pairs differing in one coordinate have a density).
    pub fn jump(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::DiagonalQuery);
        }
        match *self {
            AnalyticModel::Zp { p, alpha } => {
                if r > 1.0 {
                    return Err(Error::Invalid("ℤₚ distances are at most 1".into()));
                }
                let pf = p as f64;
                let c = (pf.powf(alpha) - 1.0) / (1.0 - pf.powf(-alpha - 1.0));
                Ok(c * (r.powf(-1.0 - alpha) + (pf.powf(-alpha) - pf.powf(-alpha - 1.0)) / (1.0 - pf.powf(-alpha))))
            }
            _ => {
                let (p, n, alpha) =
                    self.iso().ok_or_else(|| Error::Invalid("jump density needs an isotropic model".into()))?;
                let pf = p as f64;
                Ok((pf.powf(alpha) - 1.0) / (1.0 - pf.powf(-alpha - n as f64)) * r.powf(-(n as f64 + alpha)))
            }
        }
    }

    /// Green function at distance r, or TransiencyViolation when recurrent.
    pub fn green(&self, r: f64) -> Result<f64> {
        match self.green_value(r)? {
            GreenValue::Finite(g) => Ok(g),
            GreenValue::Recurrent => Err(Error::TransiencyViolation),
        }
    }

    pub fn green_value(&self, r: f64) -> Result<GreenValue> {
        if !(r > 0.0) {
            return Err(Error::DiagonalQuery);
        }
        match self {
            AnalyticModel::Zp { .. } => Ok(GreenValue::Recurrent),
            AnalyticModel::ProductVladimirov { .. } => {
                Err(Error::Invalid("product green function takes a coordinate vector; use product_green".into()))
            }
            _ => {
                let (p, n, alpha) = self.iso().unwrap();
                if alpha >= n as f64 {
                    return Ok(GreenValue::Recurrent);
                }
                let pf = p as f64;
                Ok(GreenValue::Finite(
                    (1.0 - pf.powf(-alpha)) / (1.0 - pf.powf(alpha - n as f64)) * r.powf(alpha - n as f64),
                ))
            }
        }
    }

    /// Heat kernel at time t and distance r (r = 0 on the diagonal).
    pub fn heat(&self, t: f64, r: f64) -> Result<f64> {
        match *self {
            AnalyticModel::Zp { p, alpha } => {
                let j0 = if r > 0.0 { level_of(p, r) } else { i64::MIN };
                if j0 > 0 {
                    return Err(Error::Invalid("ℤₚ distances are at most 1".into()));
                }
                let inner = if j0 < 0 { level_series(p, 1, alpha, t, (r > 0.0).then_some(j0), Some(-1)) } else { 0.0 };
                let root = -(-t * (p as f64).powf(alpha)).exp_m1();
                Ok(inner + root)
            }
            _ => {
                let (p, n, alpha) = self.iso().ok_or_else(|| Error::Invalid("use product_heat for products".into()))?;
                let from = (r > 0.0).then(|| level_of(p, r));
                Ok(level_series(p, n, alpha, t, from, None))
            }
        }
    }

    /// N(τ) = 1/μ(B*_{1/τ}) for the intrinsic radius (r/p)^α.
    pub fn spectral_n(&self, tau: f64) -> f64 {
        let (p, n, alpha) = match *self {
            AnalyticModel::Zp { p, alpha } => (p, 1, alpha),
            _ => self.iso().unwrap_or((self.prime(), 1, 1.0)),
        };
        let pf = p as f64;
        // largest j with p^{(j−1)α} ≤ 1/τ
        let j = (1.0 - tau.ln() / (alpha * pf.ln()) + 1e-12).floor() as i64;
        let j = if matches!(self, AnalyticModel::Zp { .. }) { j.min(0) } else { j };
        pf.powf(-(j as f64) * n as f64)
    }

    /// The k-th jump point p^{kα} of N.
    pub fn spectral_jump(&self, k: i64) -> f64 {
        let (p, alpha) = match *self {
            AnalyticModel::Zp { p, alpha } | AnalyticModel::Vladimirov1D { p, alpha } => (p, alpha),
            AnalyticModel::Taibleson { p, alpha, .. } => (p, alpha),
            AnalyticModel::ProductVladimirov { p, .. } => (p, 1.0),
        };
        (p as f64).powf(k as f64 * alpha)
    }

    /// Eigenvalues with multiplicities. ℤₚ: p^{kα} with p^{k−1}(p−1) for
    /// k = 1..=depth; ℚₚ models: the window k ∈ [−K, K], each of
    /// infinite multiplicity (reported as 0).
    pub fn spectrum(&self, window: i64) -> Vec<(f64, u64)> {
        match *self {
            AnalyticModel::Zp { p, alpha } => {
                let mut out = vec![(0.0, 1)];
                for k in 1..=window {
                    out.push(((p as f64).powf(k as f64 * alpha), p.pow(k as u32 - 1) * (p - 1)));
                }
                out
            }
            _ => {
                let alpha = match *self {
                    AnalyticModel::Vladimirov1D { alpha, .. } | AnalyticModel::Taibleson { alpha, .. } => alpha,
                    _ => 1.0,
                };
                let mut out = vec![(0.0, 0)];
                for k in -window..=window {
                    out.push(((self.prime() as f64).powf(k as f64 * alpha), 0));
                }
                out
            }
        }
    }

    pub fn growth_law(&self) -> GrowthLaw {
        match self {
            AnalyticModel::Zp { .. } => GrowthLaw::Constant,
            _ => GrowthLaw::Power { exponent: self.a_exponent() },
        }
    }

    pub fn transience(&self) -> Result<Transience> {
        transience_test(self.growth_law())
    }

    pub fn critical_time(&self) -> f64 {
        critical_time(|tau| self.spectral_n(tau), |k| self.spectral_jump(k as i64))
    }
}

/// j with p^j = r.
pub fn level_of(p: u64, r: f64) -> i64 {
    (r.ln() / (p as f64).ln()).round() as i64
}

/// Green function of a window model: the tree part plus the levels above
/// the root summed as a series with a geometric remainder bound.
pub fn green_window_series(window: &QpWindow, x: Point, y: Point) -> Result<f64> {
    let inner = window.model.green_partial_sum(x, y)?;
    let (p, n, alpha) = (window.p, window.n, window.alpha);
    let pf = p as f64;
    if alpha >= n as f64 {
        return Err(Error::TransiencyViolation);
    }
    let mut tail = 0.0;
    let mut j = window.top;
    loop {
        let term = (pf.powf(j as f64 * alpha) - pf.powf((j - 1) as f64 * alpha)) * pf.powf(-(j as f64) * n as f64);
        tail += term;
        let ratio = pf.powf(alpha - n as f64);
        if term * ratio / (1.0 - ratio) <= 1e-17 * (inner + tail) {
            break;
        }
        j += 1;
    }
    Ok(inner + tail)
}

/// Ball tree for the window of ℚₚⁿ between radii p^{−K} and p^{K}, with the
/// σ of the isotropic operator; kernel values add the analytic levels above
/// the root and below the atoms.
#[derive(Debug, Clone)]
pub struct QpWindow {
    pub p: u64,
    pub n: u32,
    pub alpha: f64,
    pub top: i64,
    pub model: HeatModel,
}

impl QpWindow {
    /// `depth` levels centred on radius 1: radii p^{K}, …, p^{K−depth}.
    pub fn new(p: u64, n: u32, alpha: f64, depth: usize) -> Result<QpWindow> {
        let top = (depth as i64 + 1) / 2;
        QpWindow::with_top(p, n, alpha, top, depth)
    }

    pub fn with_top(p: u64, n: u32, alpha: f64, top: i64, depth: usize) -> Result<QpWindow> {
        let tree = padic_ball_tree(p, top, depth, n as usize)?;
        let model = HeatModel::new(tree, Sigma::Padic { alpha, b: p as f64 })?;
        Ok(QpWindow { p, n, alpha, top, model })
    }

    pub fn tree(&self) -> &BallTree {
        self.model.tree()
    }

    fn bottom(&self) -> i64 {
        self.top - self.tree().max_depth() as i64
    }

    pub fn kernel(&self, t: f64, x: Point, y: Point) -> f64 {
        let tr = self.tree();
        let co = self.model.coefficients(t);
        let w = tr.meet(tr.leaf(x), tr.leaf(y));
        let mut total = 0.0;
        for u in tr.path_to_root(w) {
            if !tr.is_leaf(u) && u != tr.root() {
                total += co.c[u] / tr.mass_f(u);
            }
        }
        total += level_series(self.p, self.n, self.alpha, t, Some(self.top), None);
        if x == y {
            total += level_series(self.p, self.n, self.alpha, t, None, Some(self.bottom()));
        }
        total
    }

    pub fn metric_distance(&self, x: Point, y: Point) -> f64 {
        self.tree().distance(x, y).unwrap_or(0.0)
    }
}

impl KernelModel for QpWindow {
    fn n_points(&self) -> usize {
        self.tree().n_leaves()
    }
    fn kernel(&self, t: f64, x: Point, y: Point) -> f64 {
        QpWindow::kernel(self, t, x, y)
    }
    fn intrinsic_distance(&self, x: Point, y: Point) -> f64 {
        (self.metric_distance(x, y) / self.p as f64).powf(self.alpha)
    }
    fn metric_distance(&self, x: Point, y: Point) -> f64 {
        QpWindow::metric_distance(self, x, y)
    }
    fn spectral_n(&self, _x: Point, tau: f64) -> f64 {
        AnalyticModel::Taibleson { p: self.p, n: self.n, alpha: self.alpha }.spectral_n(tau)
    }
    fn padic_prime(&self) -> Option<u64> {
        Some(self.p)
    }
}

/// E (‖X_t‖/p)^γ for 𝔇^α on ℚₚ started at 0, or None when it diverges (γ ≥ α).
///
/// Conditioned on the jump landing in the ball of radius p^j, the point
/// is Haar-uniform there, so the mean of (‖z‖/p)^γ is
/// (1 − 1/p) p^{(j−1)γ} / (1 − p^{−γ−1}).
pub fn qp_moment(p: u64, alpha: f64, gamma: f64, t: f64) -> Option<f64> {
    if gamma >= alpha {
        return None;
    }
    if t == 0.0 {
        return Some(0.0);
    }
    let pf = p as f64;
    let ln_p = pf.ln();
    let mean = |j: i64| (1.0 - 1.0 / pf) * ((j - 1) as f64 * gamma * ln_p).exp() / (1.0 - pf.powf(-gamma - 1.0));
    let c = |j: i64| {
        let a = -t * (-(j as f64) * alpha * ln_p).exp();
        let b = -t * ((1.0 - j as f64) * alpha * ln_p).exp();
        a.exp() * -(b - a).exp_m1()
    };
    let centre = (t.ln() / (alpha * ln_p)).round() as i64;
    let mut total = 0.0;
    let mut j = centre;
    loop {
        let v = c(j) * mean(j);
        total += v;
        if j > centre + 4 && v * 1.0 / (1.0 - pf.powf(gamma - alpha)) <= 1e-16 * total {
            break;
        }
        j += 1;
    }
    let mut j = centre - 1;
    loop {
        let v = c(j) * mean(j);
        total += v;
        if j < centre - 4 && v <= 1e-18 * total {
            break;
        }
        j -= 1;
    }
    Some(total)
}

/// Partial sums of the moment series over j ≤ J for growing J; they stay
/// bounded when γ < α and grow geometrically otherwise.
pub fn qp_moment_partial_sums(p: u64, alpha: f64, gamma: f64, t: f64, upto: &[i64]) -> Vec<f64> {
    let pf = p as f64;
    let ln_p = pf.ln();
    upto.iter()
        .map(|&hi| {
            let mut total = 0.0;
            for j in -60..=hi {
                let a = -t * (-(j as f64) * alpha * ln_p).exp();
                let b = -t * ((1.0 - j as f64) * alpha * ln_p).exp();
                let c = a.exp() * -(b - a).exp_m1();
                total += c * (1.0 - 1.0 / pf) * ((j - 1) as f64 * gamma * ln_p).exp() / (1.0 - pf.powf(-gamma - 1.0));
            }
            total
        })
        .collect()
}

/// Band of M(t)/t^{γ/α} over one scaling period in t together with the
/// upper constant α/(α−γ).
#[derive(Debug, Clone, Serialize)]
pub struct QpMomentBand {
    pub lower: f64,
    pub upper: f64,
    pub bound: f64,
    /// Measured κ with lower = κ/(α−γ).
    pub kappa: f64,
}

pub fn qp_moment_band(p: u64, alpha: f64, gamma: f64, samples: usize) -> Option<QpMomentBand> {
    let pf = p as f64;
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    // M(p^α t) = p^γ M(t): one period of log t covers every ratio
    for i in 0..samples {
        let t = pf.powf(alpha * i as f64 / samples as f64);
        let r = qp_moment(p, alpha, gamma, t)? / t.powf(gamma / alpha);
        lower = lower.min(r);
        upper = upper.max(r);
    }
    Some(QpMomentBand { lower, upper, bound: alpha / (alpha - gamma), kappa: lower * (alpha - gamma) })
}

/// Both sides of (𝔻^α f, f) = (𝔇^α f̃, f̃) for f on ℤₚ given at depth
/// `depth`; f̃ extends f by zero to ℚₚ.
pub fn quadratic_forms(p: u64, alpha: f64, depth: usize, f: &[f64]) -> Result<(f64, f64)> {
    let tree = padic_tree(p, depth, 1)?;
    let zp = AnalyticModel::Zp { p, alpha };
    let qp = AnalyticModel::Vladimirov1D { p, alpha };
    let n = tree.n_leaves();
    if f.len() != n {
        return Err(Error::Invalid(format!("need {n} values")));
    }
    let m = tree.atom_mass(0);
    let mut zp_form = 0.0;
    let mut qp_form = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let r = tree.distance(x, y)?;
            let d2 = (f[x] - f[y]).powi(2);
            zp_form += 0.5 * d2 * zp.jump(r)? * m * m;
            qp_form += 0.5 * d2 * qp.jump(r)? * m * m;
        }
    }
    let outside = outside_jump_mass(p, alpha);
    qp_form += f.iter().map(|v| v * v * m).sum::<f64>() * outside;
    Ok((zp_form, qp_form))
}

/// ∫_{‖y‖>1} J_α(y) dy = Σ_{k≥1} J_α(p^k)(p^k − p^{k−1}), summed term by term.
pub fn outside_jump_mass(p: u64, alpha: f64) -> f64 {
    let qp = AnalyticModel::Vladimirov1D { p, alpha };
    let pf = p as f64;
    let mut total = 0.0;
    for k in 1..2000 {
        let r = pf.powi(k);
        let term = qp.jump(r).unwrap() * (r - r / pf);
        total += term;
        if term < 1e-18 * total {
            break;
        }
    }
    total
}

/// 𝔇^α f̃ at the points of ℤₚ for a function given at depth `depth`:
/// the singular integral over ℤₚ plus f(x) times the jump mass outside.
pub fn singular_integral_apply(p: u64, alpha: f64, depth: usize, f: &[f64]) -> Result<Vec<f64>> {
    let tree = padic_tree(p, depth, 1)?;
    let qp = AnalyticModel::Vladimirov1D { p, alpha };
    let n = tree.n_leaves();
    let m = tree.atom_mass(0);
    let outside = outside_jump_mass(p, alpha);
    let mut out = vec![0.0; n];
    for x in 0..n {
        let mut s = f[x] * outside;
        for y in 0..n {
            if y != x {
                s += (f[x] - f[y]) * qp.jump(tree.distance(x, y)?)? * m;
            }
        }
        out[x] = s;
    }
    Ok(out)
}

/// ∏_i p_{α_i}(t, ‖z_i‖) for the product operator.
pub fn product_heat(p: u64, alphas: &[f64], t: f64, z: &[f64]) -> f64 {
    alphas.iter().zip(z).map(|(&a, &r)| AnalyticModel::Vladimirov1D { p, alpha: a }.heat(t, r).unwrap()).product()
}

/// t^{−A} ∏ min{1, t^{1+1/α_i}/‖z_i‖^{1+α_i}}.
pub fn product_envelope(alphas: &[f64], t: f64, z: &[f64]) -> f64 {
    let a: f64 = alphas.iter().map(|x| 1.0 / x).sum();
    let mut e = t.powf(-a);
    for (&al, &r) in alphas.iter().zip(z) {
        if r > 0.0 {
            e *= (t.powf(1.0 + 1.0 / al) / r.powf(1.0 + al)).min(1.0);
        }
    }
    e
}

/// ‖z‖_{p,α} = max ‖z_i‖^{α_i}.
pub fn product_norm(alphas: &[f64], z: &[f64]) -> f64 {
    alphas.iter().zip(z).map(|(&a, &r)| r.powf(a)).fold(0.0, f64::max)
}

/// ∫_0^∞ p_α(t, z) dt on a log-t grid, with the t^{−A} tail past the grid
/// integrated analytically. Infinite when A ≤ 1.
pub fn product_green(p: u64, alphas: &[f64], z: &[f64]) -> f64 {
    let a: f64 = alphas.iter().map(|x| 1.0 / x).sum();
    if a <= 1.0 {
        return f64::INFINITY;
    }
    let scale = product_norm(alphas, z).max(1e-300).ln();
    let (lo, hi) = (scale - 40.0, scale + 40.0 + 30.0 / (a - 1.0));
    let steps = 8000;
    let h = (hi - lo) / steps as f64;
    let f = |u: f64| {
        let t = u.exp();
        t * product_heat(p, alphas, t, z)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..steps {
        let u = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    let body = s * h / 3.0;
    let t_end = hi.exp();
    body + product_heat(p, alphas, t_end, z) * t_end / (a - 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductReport {
    pub a: f64,
    pub transient: bool,
    /// inf and sup of p / envelope over the (t, z) grid.
    pub heat_band: (f64, f64),
    /// inf and sup of g(z) ‖z‖_{p,α}^{A−1}, when transient.
    pub green_band: Option<(f64, f64)>,
    /// Equal exponents β: inf and sup of g(z) ‖z‖^{n−β}.
    pub homogeneous_band: Option<(f64, f64)>,
    /// Set when β ≤ (n−1)/2, where only measured bands are available.
    pub below_homogeneous_range: bool,
}

/// Product operator checks on z with coordinates p^{k_i}, k_i ∈ [−K, K].
pub fn product_vladimirov_suite(p: u64, alphas: &[f64], k: i64, t_grid: &[f64]) -> ProductReport {
    let n = alphas.len();
    let a: f64 = alphas.iter().map(|x| 1.0 / x).sum();
    let pf = p as f64;
    let mut zs: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for z in &zs {
            for e in -k..=k {
                let mut z2 = z.clone();
                z2.push(pf.powi(e as i32));
                next.push(z2);
            }
        }
        zs = next;
    }
    let mut heat = (f64::INFINITY, 0.0f64);
    for &t in t_grid {
        for z in &zs {
            let r = product_heat(p, alphas, t, z) / product_envelope(alphas, t, z);
            heat = (heat.0.min(r), heat.1.max(r));
        }
    }
    let transient = a > 1.0;
    let equal = alphas.windows(2).all(|w| w[0] == w[1]);
    let beta = alphas[0];
    let mut green_band = None;
    let mut homogeneous_band = None;
    if transient {
        // the lower bound holds everywhere; the upper one on cones Ω(κ)
        let mut g = (f64::INFINITY, 0.0f64);
        let mut hb = (f64::INFINITY, 0.0f64);
        for z in zs.iter().step_by(((zs.len() / 60).max(1)) | 1) {
            let gz = product_green(p, alphas, z);
            let norm = product_norm(alphas, z);
            let r = gz * norm.powf(a - 1.0);
            g = (g.0.min(r), g.1.max(r));
            if equal {
                let zn = z.iter().copied().fold(0.0, f64::max);
                let h = gz * zn.powf(n as f64 - beta);
                hb = (hb.0.min(h), hb.1.max(h));
            }
        }
        green_band = Some(g);
        if equal {
            homogeneous_band = Some(hb);
        }
    }
    ProductReport {
        a,
        transient,
        heat_band: heat,
        green_band,
        homogeneous_band,
        below_homogeneous_range: equal && beta <= (n as f64 - 1.0) / 2.0,
    }
}

/// A rotation-invariant Laplacian on ℚₚ given by a non-increasing sequence
/// a(m) on the window m0, m0+1, …; outside the window the sequence is
/// continued geometrically with the ratio of its two end values.
#[derive(Debug, Clone)]
pub struct RotationInvariantSpec {
    pub p: u64,
    pub m0: i64,
    pub a: Vec<BigRational>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RotationClass {
    General,
    Monotone,
    Isotropic,
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationReport {
    pub lambda: Vec<(i64, String)>,
    pub psi: Vec<(i64, String)>,
    pub jfrak: Vec<(i64, String)>,
    pub lambda_nonincreasing: bool,
    pub psi_nondecreasing: bool,
    pub jfrak_nonincreasing: bool,
    pub lambda_strict: bool,
    pub psi_strict: bool,
    pub jfrak_strict: bool,
    pub convex: bool,
    /// a(−∞) = ∞ under geometric continuation.
    pub unbounded_below: bool,
    pub class: RotationClass,
}

impl RotationInvariantSpec {
    pub fn new(p: u64, m0: i64, a: Vec<BigRational>) -> Result<Self> {
        if a.len() < 3 {
            return Err(Error::Invalid("need at least three values".into()));
        }
        for (i, w) in a.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(Error::NotNonIncreasing(m0 + i as i64 + 1));
            }
        }
        if a.iter().any(|x| !x.is_positive()) {
            return Err(Error::Invalid("a(m) must be positive".into()));
        }
        Ok(RotationInvariantSpec { p, m0, a })
    }

    fn a_at(&self, m: i64) -> &BigRational {
        &self.a[(m - self.m0) as usize]
    }

    fn last(&self) -> i64 {
        self.m0 + self.a.len() as i64 - 1
    }

    fn pq(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.p))
    }

    /// λ(m) = a(m) − (a(m+1) − a(m))/(p − 1) for m0 ≤ m < last.
    pub fn lambda(&self) -> Vec<(i64, BigRational)> {
        let pm1 = self.pq() - BigRational::one();
        (self.m0..self.last()).map(|m| (m, self.a_at(m) - (self.a_at(m + 1) - self.a_at(m)) / &pm1)).collect()
    }

    /// ψ(p^m) = λ(1 − m), listed in increasing m.
    pub fn psi(&self) -> Vec<(i64, BigRational)> {
        let mut out: Vec<(i64, BigRational)> = self.lambda().into_iter().map(|(m, l)| (1 - m, l)).collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// 𝔧(p^m) = (a(m) − a(m+1))/(p^m − p^{m−1}).
    pub fn jfrak(&self) -> Vec<(i64, BigRational)> {
        let pq = self.pq();
        (self.m0..self.last())
            .map(|m| {
                let pm = crate::balltree::pow_rational(&pq, m);
                let den = &pm - &pm / &pq;
                (m, (self.a_at(m) - self.a_at(m + 1)) / den)
            })
            .collect()
    }

    pub fn classify(&self) -> RotationReport {
        let lambda = self.lambda();
        let psi = self.psi();
        let jfrak = self.jfrak();
        let nonincr = |v: &[(i64, BigRational)]| v.windows(2).all(|w| w[1].1 <= w[0].1);
        let strict_decr = |v: &[(i64, BigRational)]| v.windows(2).all(|w| w[1].1 < w[0].1);
        let nondecr = |v: &[(i64, BigRational)]| v.windows(2).all(|w| w[1].1 >= w[0].1);
        let strict_incr = |v: &[(i64, BigRational)]| v.windows(2).all(|w| w[1].1 > w[0].1);
        let two = BigRational::from_integer(BigInt::from(2));
        let convex = self.a.windows(3).all(|w| &w[0] + &w[2] >= &two * &w[1]);
        let unbounded_below = self.a[0] > self.a[1];
        let lambda_nonincreasing = nonincr(&lambda);
        let psi_nondecreasing = nondecr(&psi);
        let jfrak_nonincreasing = nonincr(&jfrak);
        let lambda_strict = strict_decr(&lambda);
        let psi_strict = strict_incr(&psi);
        let jfrak_strict = strict_decr(&jfrak);
        let class = if lambda_strict && psi_strict && jfrak_strict && unbounded_below {
            RotationClass::Isotropic
        } else if lambda_nonincreasing && psi_nondecreasing && jfrak_nonincreasing {
            RotationClass::Monotone
        } else {
            RotationClass::General
        };
        let show = |v: Vec<(i64, BigRational)>| v.into_iter().map(|(m, x)| (m, x.to_string())).collect();
        RotationReport {
            lambda: show(lambda),
            psi: show(psi),
            jfrak: show(jfrak),
            lambda_nonincreasing,
            psi_nondecreasing,
            jfrak_nonincreasing,
            lambda_strict,
            psi_strict,
            jfrak_strict,
            convex,
            unbounded_below,
            class,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        let x: PAdic = "p:2 val:-1 digits:101".parse().unwrap();
        assert_eq!(x.valuation(), Some(-1));
        assert_eq!(x.norm(), 2.0);
        let back: PAdic = x.to_string().parse().unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn twelve_has_valuation_two() {
        let x = PAdic::from_integer(2, 12, 16).unwrap();
        assert_eq!(x.valuation(), Some(2));
        assert_eq!(x.norm(), 0.25);
    }

    #[test]
    fn jump_constants() {
        let q = AnalyticModel::Vladimirov1D { p: 2, alpha: 1.0 };
        let z = AnalyticModel::Zp { p: 2, alpha: 1.0 };
        assert!((q.jump(1.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((z.jump(1.0).unwrap() - 2.0).abs() < 1e-15);
    }
}
