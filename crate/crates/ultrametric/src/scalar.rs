//! Field abstraction shared by the exact and floating-point solvers.
//!
//! Three instances: `f64` for speed, `BigRational` for exact checks, and
//! [`Quad`] for the quadratic fields Q(√d) that show up when α = 1/2.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Whether arithmetic is exact, so identities can be tested with `==`.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(n: i64) -> Self;
    fn to_f64(&self) -> f64;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn ratio(n: i64, d: i64) -> Self {
        Self::from_i64(n) / Self::from_i64(d)
    }

    fn recip(&self) -> Self {
        Self::one() / self.clone()
    }

    fn powi(&self, e: i64) -> Self {
        let mut base = if e < 0 { self.recip() } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            e >>= 1;
        }
        acc
    }

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Square root when it lives in the same field.
    fn sqrt_exact(&self) -> Option<Self>;

    /// Exact rational value, when there is one.
    fn to_rational(&self) -> Option<BigRational>;
}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sqrt_exact(&self) -> Option<Self> {
        (*self >= 0.0).then(|| self.sqrt())
    }
    fn to_rational(&self) -> Option<BigRational> {
        BigRational::from_float(*self)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn sqrt_exact(&self) -> Option<Self> {
        rational_sqrt(self)
    }
    fn to_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }
}

/// Accurate conversion even when numerator and denominator overflow f64.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift = nb - db - 60;
    let (n, d) = if shift > 0 {
        (q.numer().clone(), q.denom().clone() << shift as usize)
    } else {
        (q.numer().clone() << (-shift) as usize, q.denom().clone())
    };
    let mant = (n / d).to_f64().unwrap_or(0.0);
    mant * 2f64.powi(shift as i32)
}

pub fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}

/// Exact rational view of a finite double.
pub fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `a + b√d` with rational `a`, `b` and squarefree-ish radicand `d`.
///
/// `d = 0` marks a plain rational which combines with any radicand.
/// Mixing two different nonzero radicands is a logic error and panics.
#[derive(Clone, PartialEq, Eq)]
pub struct Quad {
    pub a: BigRational,
    pub b: BigRational,
    pub d: BigInt,
}

impl Quad {
    pub fn rational(a: BigRational) -> Self {
        Quad { a, b: Zero::zero(), d: Zero::zero() }
    }

    /// `√d` itself.
    pub fn surd(d: i64) -> Self {
        let d = BigInt::from(d);
        let r = d.sqrt();
        if &r * &r == d {
            return Quad::rational(BigRational::from_integer(r));
        }
        Quad { a: Zero::zero(), b: One::one(), d }
    }

    pub fn is_rational(&self) -> bool {
        Zero::is_zero(&self.b)
    }

    fn join(&self, other: &Quad) -> BigInt {
        match (self.is_rational(), other.is_rational()) {
            (true, true) => Zero::zero(),
            (false, true) => self.d.clone(),
            (true, false) => other.d.clone(),
            (false, false) => {
                assert_eq!(self.d, other.d, "mixed quadratic fields");
                self.d.clone()
            }
        }
    }

    fn norm(&self) -> BigRational {
        &self.a * &self.a - &self.b * &self.b * BigRational::from_integer(self.d.clone())
    }

    fn conj(&self) -> Quad {
        Quad { a: self.a.clone(), b: -self.b.clone(), d: self.d.clone() }
    }

    fn normalize(mut self) -> Self {
        if Zero::is_zero(&self.b) {
            self.d = Zero::zero();
        }
        self
    }

    fn sign(&self) -> Ordering {
        let zero = <BigRational as Zero>::zero();
        let sa = self.a.cmp(&zero);
        let sb = self.b.cmp(&zero);
        if sb == Ordering::Equal || sa == sb {
            return if sa == Ordering::Equal { sb } else { sa };
        }
        if sa == Ordering::Equal {
            return sb;
        }
        // opposite signs: compare a² with d·b²
        let a2 = &self.a * &self.a;
        let db2 = &self.b * &self.b * BigRational::from_integer(self.d.clone());
        match a2.cmp(&db2) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }
}

impl fmt::Debug for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            write!(f, "{}", self.a)
        } else {
            write!(f, "{} + {}√{}", self.a, self.b, self.d)
        }
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Add for Quad {
    type Output = Quad;
    fn add(self, o: Quad) -> Quad {
        let d = self.join(&o);
        Quad { a: self.a + o.a, b: self.b + o.b, d }.normalize()
    }
}

impl Sub for Quad {
    type Output = Quad;
    fn sub(self, o: Quad) -> Quad {
        let d = self.join(&o);
        Quad { a: self.a - o.a, b: self.b - o.b, d }.normalize()
    }
}

impl Neg for Quad {
    type Output = Quad;
    fn neg(self) -> Quad {
        Quad { a: -self.a, b: -self.b, d: self.d }
    }
}

impl Mul for Quad {
    type Output = Quad;
    fn mul(self, o: Quad) -> Quad {
        let d = self.join(&o);
        let dq = BigRational::from_integer(d.clone());
        let a = &self.a * &o.a + &self.b * &o.b * dq;
        let b = &self.a * &o.b + &o.a * &self.b;
        Quad { a, b, d }.normalize()
    }
}

impl Div for Quad {
    type Output = Quad;
    fn div(self, o: Quad) -> Quad {
        let n = o.norm();
        assert!(!Zero::is_zero(&n), "division by zero");
        let num = self * o.conj();
        Quad { a: num.a / &n, b: num.b / &n, d: num.d }.normalize()
    }
}

impl PartialOrd for Quad {
    fn partial_cmp(&self, o: &Quad) -> Option<Ordering> {
        Some((self.clone() - o.clone()).sign())
    }
}

impl Scalar for Quad {
    const EXACT: bool = true;
    fn zero() -> Self {
        Quad::rational(Zero::zero())
    }
    fn one() -> Self {
        Quad::rational(One::one())
    }
    fn from_i64(n: i64) -> Self {
        Quad::rational(BigRational::from_integer(BigInt::from(n)))
    }
    fn to_f64(&self) -> f64 {
        let d = self.d.to_f64().unwrap_or(0.0);
        rational_to_f64(&self.a) + rational_to_f64(&self.b) * d.sqrt()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(&self.a) && Zero::is_zero(&self.b)
    }
    fn sqrt_exact(&self) -> Option<Self> {
        if self.sign() == Ordering::Less {
            return None;
        }
        if self.is_rational() {
            if let Some(r) = rational_sqrt(&self.a) {
                return Some(Quad::rational(r));
            }
            return None;
        }
        // (u + v√d)² = a + b√d  with  u² = (a ± √N)/2, N = a² − d b².
        let s = rational_sqrt(&self.norm())?;
        let two = BigRational::from_integer(BigInt::from(2));
        for cand in [(&self.a + &s) / &two, (&self.a - &s) / &two] {
            if cand <= <BigRational as Zero>::zero() {
                continue;
            }
            if let Some(u) = rational_sqrt(&cand) {
                let v = &self.b / (&two * &u);
                let r = Quad { a: u, b: v, d: self.d.clone() };
                if r.clone() * r.clone() == *self && r.sign() != Ordering::Less {
                    return Some(r);
                }
            }
        }
        None
    }
    fn to_rational(&self) -> Option<BigRational> {
        self.is_rational().then(|| self.a.clone())
    }
}

/// `base^(num/2)` in Q(√base) for integer `base`; covers α ∈ {1/2, 1, 3/2, 2, …}.
pub fn half_power(base: i64, num: i64) -> Quad {
    Quad::surd(base).powi(num)
}

/// Smallest root in [0, 1] of `a x² + b x + c = 0`, exact when the
/// discriminant is a square in the field.
pub fn min_root_unit<T: Scalar>(a: &T, b: &T, c: &T) -> Option<T> {
    let two = T::from_i64(2);
    let four = T::from_i64(4);
    if a.is_zero() {
        return Some(-c.clone() / b.clone());
    }
    let disc = b.clone() * b.clone() - four * a.clone() * c.clone();
    let s = disc.sqrt_exact()?;
    let r1 = (-b.clone() - s.clone()) / (two.clone() * a.clone());
    let r2 = (-b.clone() + s) / (two * a.clone());
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if lo >= T::zero() {
        Some(lo)
    } else {
        Some(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_arithmetic() {
        let s2 = Quad::surd(2);
        assert_eq!(s2.clone() * s2.clone(), Quad::from_i64(2));
        let x = Quad::one() + s2.clone();
        let y = Quad::one() / x.clone();
        assert_eq!(x * y, Quad::one());
        assert!(s2.clone() > Quad::ratio(7, 5));
        assert!(s2 < Quad::ratio(3, 2));
    }

    #[test]
    fn quad_sqrt() {
        let s2 = Quad::surd(2);
        let z = (Quad::one() + s2.clone()) * (Quad::one() + s2);
        let r = z.sqrt_exact().unwrap();
        assert_eq!(r, Quad::one() + Quad::surd(2));
        assert_eq!(half_power(4, 1), Quad::from_i64(2));
    }

    #[test]
    fn big_rational_to_f64() {
        let big = BigRational::new(BigInt::from(3) << 2000usize, BigInt::from(1) << 2001usize);
        assert_eq!(rational_to_f64(&big), 1.5);
    }
}
