//! Exact rational numbers.
//!
//! [`Rational`] keeps values that fit in a pair of `i64` inline and only
//! promotes to a heap-allocated [`BigRational`] when a result overflows.
//! The representation is canonical: a value is stored small whenever it
//! fits, so derived equality and hashing agree with numeric equality.
//!
//! Textual form is `"p"` or `"p/q"` in lowest terms with `q > 1`.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use malachite_base::num::arithmetic::traits::Gcd;
use malachite_nz::natural::Natural;
use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone)]
enum Repr {
    /// `den > 0`, `gcd(num, den) == 1`.
    Small { num: i64, den: i64 },
    /// Never representable as `Small`.
    Big(Box<BigRational>),
}

// BigRational's own equality cross-multiplies; canonical form makes a
// field-by-field comparison exact and much cheaper.
impl PartialEq for Repr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) => a == c && b == d,
            (Repr::Big(x), Repr::Big(y)) => x.numer() == y.numer() && x.denom() == y.denom(),
            _ => false,
        }
    }
}

impl Eq for Repr {}

impl std::hash::Hash for Repr {
    fn hash<H: std::hash::Hasher>(&self, h: &mut H) {
        match self {
            Repr::Small { num, den } => {
                num.hash(h);
                den.hash(h);
            }
            Repr::Big(x) => {
                x.numer().hash(h);
                x.denom().hash(h);
            }
        }
    }
}

/// An exact rational number in lowest terms.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rational(Repr);

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// num-bigint's binary gcd is quadratic in the operand length, which
/// dominates long adversary games; malachite's is subquadratic. A remainder
/// step first makes lopsided pairs (big numerator, small denominator) cheap.
fn gcd_big(a: &BigInt, b: &BigInt) -> BigUint {
    let mut x = a.magnitude().clone();
    let mut y = b.magnitude().clone();
    loop {
        if x < y {
            std::mem::swap(&mut x, &mut y);
        }
        if y.is_zero() || y.is_one() {
            return if y.is_zero() { x } else { y };
        }
        if x.bits() > y.bits() + 32 {
            x %= &y;
        } else {
            let g =
                Natural::from_owned_limbs_asc(x.to_u64_digits()).gcd(Natural::from_owned_limbs_asc(y.to_u64_digits()));
            return BigUint::from_slice(
                &g.to_limbs_asc().iter().flat_map(|&l| [l as u32, (l >> 32) as u32]).collect::<Vec<_>>(),
            );
        }
    }
}

/// `num/den` in lowest terms, `den != 0`.
fn reduce_big(num: BigInt, den: BigInt) -> Rational {
    let (mut num, mut den) = if den.is_negative() { (-num, -den) } else { (num, den) };
    if !den.is_one() {
        let g = BigInt::from(gcd_big(&num, &den));
        if !g.is_one() {
            num /= &g;
            den /= &g;
        }
    }
    Rational::from_big(BigRational::new_raw(num, den))
}

impl Rational {
    pub fn zero() -> Self {
        Rational(Repr::Small { num: 0, den: 1 })
    }

    pub fn one() -> Self {
        Rational(Repr::Small { num: 1, den: 1 })
    }

    pub fn from_integer(v: i64) -> Self {
        Rational(Repr::Small { num: v, den: 1 })
    }

    /// `num / den`; fails on a zero denominator.
    pub fn new(num: i64, den: i64) -> Result<Self, Error> {
        if den == 0 {
            return Err(Error::Parse("zero denominator".into()));
        }
        Ok(Self::from_i128(num as i128, den as i128))
    }

    /// Shorthand for constants known to be valid; panics on `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        Self::new(num, den).expect("nonzero denominator")
    }

    fn from_i128(num: i128, den: i128) -> Self {
        debug_assert!(den != 0);
        let g = gcd_i128(num, den);
        let (mut n, mut d) = if g > 1 { (num / g, den / g) } else { (num, den) };
        if d < 0 {
            n = -n;
            d = -d;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(num), Ok(den)) => Rational(Repr::Small { num, den }),
            _ => Rational(Repr::Big(Box::new(BigRational::new_raw(BigInt::from(n), BigInt::from(d))))),
        }
    }

    /// Wraps an already-reduced big rational, demoting it if it fits.
    pub fn from_big(r: BigRational) -> Self {
        // BigRational::new reduces; new_raw callers must pass reduced values.
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(num), Some(den)) => Rational(Repr::Small { num, den }),
            _ => Rational(Repr::Big(Box::new(r))),
        }
    }

    pub fn from_bigint(v: BigInt) -> Self {
        Self::from_big(BigRational::from_integer(v))
    }

    fn parts(&self) -> (Cow<'_, BigInt>, Cow<'_, BigInt>) {
        match &self.0 {
            Repr::Small { num, den } => (Cow::Owned(BigInt::from(*num)), Cow::Owned(BigInt::from(*den))),
            Repr::Big(b) => (Cow::Borrowed(b.numer()), Cow::Borrowed(b.denom())),
        }
    }

    fn add_big(&self, rhs: &Self, negate: bool) -> Self {
        let (a, b) = self.parts();
        let (c, d) = rhs.parts();
        let c = if negate { Cow::Owned(-c.into_owned()) } else { c };
        if b.is_one() && d.is_one() {
            return Self::from_big(BigRational::from_integer(a.as_ref() + c.as_ref()));
        }
        if b == d {
            return reduce_big(a.as_ref() + c.as_ref(), b.into_owned());
        }
        reduce_big(a.as_ref() * d.as_ref() + c.as_ref() * b.as_ref(), b.as_ref() * d.as_ref())
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small { num, den } => BigRational::new_raw(BigInt::from(*num), BigInt::from(*den)),
            Repr::Big(b) => (**b).clone(),
        }
    }

    pub fn numer(&self) -> BigInt {
        match &self.0 {
            Repr::Small { num, .. } => BigInt::from(*num),
            Repr::Big(b) => b.numer().clone(),
        }
    }

    pub fn denom(&self) -> BigInt {
        match &self.0 {
            Repr::Small { den, .. } => BigInt::from(*den),
            Repr::Big(b) => b.denom().clone(),
        }
    }

    /// `2^exp` for any integer exponent.
    pub fn pow2(exp: i64) -> Self {
        if (0..62).contains(&exp) {
            return Rational(Repr::Small { num: 1 << exp, den: 1 });
        }
        if (-62..0).contains(&exp) {
            return Rational(Repr::Small { num: 1, den: 1 << (-exp) });
        }
        let p = BigInt::one() << exp.unsigned_abs();
        if exp >= 0 {
            Self::from_bigint(p)
        } else {
            Self::from_big(BigRational::new_raw(BigInt::one(), p))
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small { num: 0, .. })
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small { num, .. } => *num > 0,
            Repr::Big(b) => b.is_positive(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small { num, .. } => *num < 0,
            Repr::Big(b) => b.is_negative(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small { den, .. } => *den == 1,
            Repr::Big(b) => b.is_integer(),
        }
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn recip(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        Some(match &self.0 {
            Repr::Small { num, den } => Self::from_i128(*den as i128, *num as i128),
            Repr::Big(b) => Self::from_big(b.recip()),
        })
    }

    pub fn floor(&self) -> BigInt {
        match &self.0 {
            Repr::Small { num, den } => BigInt::from(num.div_floor(den)),
            Repr::Big(b) => b.floor().to_integer(),
        }
    }

    pub fn ceil(&self) -> BigInt {
        match &self.0 {
            Repr::Small { num, den } => BigInt::from(num.div_ceil(den)),
            Repr::Big(b) => b.ceil().to_integer(),
        }
    }

    /// Lossy conversion for display and plotting only.
    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small { num, den } => *num as f64 / *den as f64,
            Repr::Big(b) => {
                // Scale both parts down to keep the quotient in range.
                let nb = b.numer().bits() as i64;
                let db = b.denom().bits() as i64;
                let shift_n = (nb - 900).max(0) as u64;
                let shift_d = (db - 900).max(0) as u64;
                let n = (b.numer() >> shift_n).to_f64().unwrap_or(f64::NAN);
                let d = (b.denom() >> shift_d).to_f64().unwrap_or(f64::NAN);
                n / d * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
            }
        }
    }

    /// Decimal approximation with `digits` significant digits, in
    /// scientific notation when the magnitude is far from 1.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let digits = digits.max(1);
        let big = self.to_big();
        let neg = big.is_negative();
        let num = big.numer().abs();
        let den = big.denom().clone();
        // exponent e with 10^e <= |x| < 10^(e+1)
        let ten = BigInt::from(10);
        let mut e: i64 = num.to_string().len() as i64 - den.to_string().len() as i64;
        let ge = |e: i64| -> bool {
            // |x| >= 10^e ?
            if e >= 0 {
                num >= &den * num_traits::pow(ten.clone(), e as usize)
            } else {
                &num * num_traits::pow(ten.clone(), (-e) as usize) >= den
            }
        };
        while !ge(e) {
            e -= 1;
        }
        while ge(e + 1) {
            e += 1;
        }
        // scaled = round(|x| * 10^(digits-1-e))
        let shift = digits as i64 - 1 - e;
        let (sn, sd) = if shift >= 0 {
            (&num * num_traits::pow(ten.clone(), shift as usize), den.clone())
        } else {
            (num.clone(), &den * num_traits::pow(ten.clone(), (-shift) as usize))
        };
        let (q, r) = sn.div_rem(&sd);
        let mut m = if &r * 2 >= sd { q + 1 } else { q };
        if m.to_string().len() > digits {
            m /= 10;
            e += 1;
        }
        let mstr = m.to_string();
        let sign = if neg { "-" } else { "" };
        if (-5..=20).contains(&e) {
            // plain positional notation
            if e >= 0 {
                let int_len = (e + 1) as usize;
                if mstr.len() <= int_len {
                    format!("{sign}{}{}", mstr, "0".repeat(int_len - mstr.len()))
                } else {
                    let frac = mstr[int_len..].trim_end_matches('0');
                    if frac.is_empty() {
                        format!("{sign}{}", &mstr[..int_len])
                    } else {
                        format!("{sign}{}.{}", &mstr[..int_len], frac)
                    }
                }
            } else {
                let frac = format!("{}{}", "0".repeat((-e - 1) as usize), mstr);
                format!("{sign}0.{}", frac.trim_end_matches('0'))
            }
        } else {
            let frac = mstr[1..].trim_end_matches('0');
            if frac.is_empty() {
                format!("{sign}{}e{}", &mstr[..1], e)
            } else {
                format!("{sign}{}.{}e{}", &mstr[..1], frac, e)
            }
        }
    }

    /// Number of bits in numerator and denominator; a cheap size measure.
    pub fn bit_size(&self) -> u64 {
        match &self.0 {
            Repr::Small { .. } => 64,
            Repr::Big(b) => b.numer().bits() + b.denom().bits(),
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn add_ref(&self, rhs: &Self) -> Self {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0) {
            if b == d {
                return Self::from_i128(*a as i128 + *c as i128, *b as i128);
            }
            let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
            return Self::from_i128(a * d + c * b, b * d);
        }
        self.add_big(rhs, false)
    }

    fn sub_ref(&self, rhs: &Self) -> Self {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0) {
            if b == d {
                return Self::from_i128(*a as i128 - *c as i128, *b as i128);
            }
            let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
            return Self::from_i128(a * d - c * b, b * d);
        }
        self.add_big(rhs, true)
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0) {
            return Self::from_i128(*a as i128 * *c as i128, *b as i128 * *d as i128);
        }
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        let (a, b) = self.parts();
        let (c, d) = rhs.parts();
        if b.is_one() && d.is_one() {
            return Self::from_big(BigRational::from_integer(a.as_ref() * c.as_ref()));
        }
        // Cross-cancel so the product needs no further reduction.
        let g1 = BigInt::from(gcd_big(&a, &d));
        let g2 = BigInt::from(gcd_big(&c, &b));
        let num = (a.as_ref() / &g1) * (c.as_ref() / &g2);
        let den = (b.as_ref() / &g2) * (d.as_ref() / &g1);
        Self::from_big(BigRational::new_raw(num, den))
    }

    fn div_ref(&self, rhs: &Self) -> Self {
        assert!(!rhs.is_zero(), "division by zero rational");
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0) {
            return Self::from_i128(*a as i128 * *d as i128, *b as i128 * *c as i128);
        }
        let (c, d) = rhs.parts();
        let (c, d) =
            if c.is_negative() { (-d.into_owned(), -c.into_owned()) } else { (d.into_owned(), c.into_owned()) };
        self.mul_ref(&Self::from_big(BigRational::new_raw(c, d)))
    }
}

impl Default for Rational {
    fn default() -> Self {
        Self::zero()
    }
}

impl From<i64> for Rational {
    fn from(v: i64) -> Self {
        Self::from_integer(v)
    }
}

impl From<usize> for Rational {
    fn from(v: usize) -> Self {
        match i64::try_from(v) {
            Ok(v) => Self::from_integer(v),
            Err(_) => Self::from_bigint(BigInt::from(v)),
        }
    }
}

impl From<BigInt> for Rational {
    fn from(v: BigInt) -> Self {
        Self::from_bigint(v)
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &other.0) {
            if b == d {
                return a.cmp(c);
            }
            return (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128));
        }
        let (a, b) = self.parts();
        let (c, d) = other.parts();
        if b == d {
            return a.cmp(&c);
        }
        (a.as_ref() * d.as_ref()).cmp(&(c.as_ref() * b.as_ref()))
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $imp:ident) => {
        impl $tr<&Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                self.$imp(rhs)
            }
        }
        impl $tr<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$imp(&rhs)
            }
        }
        impl $tr<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                self.$imp(rhs)
            }
        }
        impl $tr<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$imp(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_ref);
forward_binop!(Sub, sub, sub_ref);
forward_binop!(Mul, mul, mul_ref);
forward_binop!(Div, div, div_ref);

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        *self = self.add_ref(rhs);
    }
}

impl AddAssign<Rational> for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = self.add_ref(&rhs);
    }
}

impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        *self = self.sub_ref(rhs);
    }
}

impl SubAssign<Rational> for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        *self = self.sub_ref(&rhs);
    }
}

impl MulAssign<&Rational> for Rational {
    fn mul_assign(&mut self, rhs: &Rational) {
        *self = self.mul_ref(rhs);
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        match &self.0 {
            Repr::Small { num, den } => Rational::from_i128(-(*num as i128), *den as i128),
            Repr::Big(b) => Rational::from_big(-(**b).clone()),
        }
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        -&self
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small { num, den: 1 } => write!(f, "{num}"),
            Repr::Small { num, den } => write!(f, "{num}/{den}"),
            Repr::Big(b) if b.is_integer() => write!(f, "{}", b.numer()),
            Repr::Big(b) => write!(f, "{}/{}", b.numer(), b.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn parse_int(s: &str) -> Result<BigInt, Error> {
    let t = s.trim();
    let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
    if digits.is_empty() || !digits.bytes().all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("invalid integer {s:?}")));
    }
    t.parse::<BigInt>().map_err(|e| Error::Parse(format!("invalid integer {s:?}: {e}")))
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (parse_int(n)?, parse_int(d)?),
            None => (parse_int(s)?, BigInt::one()),
        };
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        Ok(Self::from_big(BigRational::new(n, d)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Smallest `2^z` (`z` any integer) that is `>= d`; requires `d > 0`.
pub fn round_up_pow2(d: &Rational) -> Result<Rational, Error> {
    if !d.is_positive() {
        return Err(Error::NonPositive(format!("cannot round {d} to a power of two")));
    }
    let (num, den) = (d.numer(), d.denom());
    // num/den < 2^(bits(num) - bits(den) + 1)
    let mut z = num.bits() as i64 - den.bits() as i64 + 1;
    // 2^(z-1) >= num/den  <=>  2^(z-1) * den >= num
    let ge = |e: i64| -> bool {
        if e >= 0 {
            (&den << e as u64) >= num
        } else {
            den >= (&num << (-e) as u64)
        }
    };
    while ge(z - 1) {
        z -= 1;
    }
    Ok(Rational::pow2(z))
}

/// Exponent `z` when `r == 2^z`, otherwise `None`.
pub fn log2_exact(r: &Rational) -> Option<i64> {
    if !r.is_positive() {
        return None;
    }
    let (n, d) = (r.numer(), r.denom());
    let is_pow2 = |x: &BigInt| x.sign() == Sign::Plus && (x & (x - BigInt::one())).is_zero();
    if d.is_one() && is_pow2(&n) {
        Some(n.bits() as i64 - 1)
    } else if n.is_one() && is_pow2(&d) {
        Some(-(d.bits() as i64 - 1))
    } else {
        None
    }
}
