//! Prime-field arithmetic.
//!
//! Elements are plain residues wrapped in [`Fe`]; the modulus lives in a
//! [`PrimeField`] context that every operation goes through. Products are
//! formed in `u64`, so the modulus is capped below 2^32.

use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mersenne prime 2^31 - 1, the default modulus for scheme construction.
pub const DEFAULT_MODULUS: u64 = 2_147_483_647;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NonPrimeModulus(u64),
    #[error("modulus {0} is out of range (need 2 <= q < 2^32)")]
    ModulusOutOfRange(u64),
    #[error("division by zero in F_{0}")]
    DivisionByZero(u64),
    #[error("denominator {den} vanishes modulo {q}")]
    DenominatorVanishes { den: i64, q: u64 },
}

/// A residue in `[0, q)` for the prime `q` of some [`PrimeField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Fe(u64);

impl Fe {
    pub const ZERO: Fe = Fe(0);
    pub const ONE: Fe = Fe(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Wrap a value the caller has already reduced mod q.
    #[inline]
    pub(crate) fn from_reduced(v: u64) -> Fe {
        Fe(v)
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arithmetic context for F_q with q prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if !(2..1 << 32).contains(&q) {
            return Err(FieldError::ModulusOutOfRange(q));
        }
        if !is_prime(q) {
            return Err(FieldError::NonPrimeModulus(q));
        }
        Ok(Self { q })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Reduce an unsigned integer into the field.
    #[inline]
    pub fn elem(&self, v: u64) -> Fe {
        Fe(v % self.q)
    }

    /// Reduce a signed integer into the field (negatives wrap to `q - |v| mod q`).
    #[inline]
    pub fn from_i64(&self, v: i64) -> Fe {
        Fe(v.rem_euclid(self.q as i64) as u64)
    }

    /// Embed `num / den` into the field.
    pub fn from_rational(&self, num: i64, den: i64) -> Result<Fe, FieldError> {
        let d = self.from_i64(den);
        if d.is_zero() {
            return Err(FieldError::DenominatorVanishes { den, q: self.q });
        }
        Ok(self.mul(self.from_i64(num), self.inv(d)?))
    }

    /// Signed representative in `(-q/2, q/2]`, handy for display.
    pub fn centered(&self, a: Fe) -> i64 {
        if a.0 > self.q / 2 {
            a.0 as i64 - self.q as i64
        } else {
            a.0 as i64
        }
    }

    #[inline]
    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a.0 + b.0;
        Fe(if s >= self.q { s - self.q } else { s })
    }

    #[inline]
    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        Fe(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.q - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: Fe) -> Fe {
        Fe(if a.0 == 0 { 0 } else { self.q - a.0 })
    }

    #[inline]
    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        Fe(a.0 * b.0 % self.q)
    }

    pub fn pow(&self, mut base: Fe, mut exp: u64) -> Fe {
        let mut acc = Fe::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: Fe) -> Result<Fe, FieldError> {
        if a.is_zero() {
            return Err(FieldError::DivisionByZero(self.q));
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn div(&self, a: Fe, b: Fe) -> Result<Fe, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Draw one uniform element from `rng`.
    pub fn sample(&self, rng: &mut FieldRng) -> Fe {
        Fe(rng.below(self.q))
    }
}

/// Seeded random source used for every construction and simulation draw.
///
/// Backed by ChaCha20 with a 64-bit seed expanded by `seed_from_u64`; uniform
/// residues are produced by rejection sampling on `next_u64`, so the output is
/// a pure function of the seed, the stream id and the number of prior draws.
#[derive(Debug, Clone)]
pub struct FieldRng {
    inner: ChaCha20Rng,
}

impl FieldRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent keystream for the same seed (used to separate gradient and
    /// key draws from construction draws).
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.inner.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Deterministic Miller-Rabin, exact for every `n < 2^64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn construction_checks_primality() {
        assert!(PrimeField::new(101).is_ok());
        assert_eq!(PrimeField::new(12), Err(FieldError::NonPrimeModulus(12)));
        assert!(PrimeField::new(DEFAULT_MODULUS).is_ok());
        assert!(PrimeField::new(2).is_ok());
        assert!(matches!(PrimeField::new(1), Err(FieldError::ModulusOutOfRange(1))));
        assert!(matches!(PrimeField::new(4_294_967_311), Err(FieldError::ModulusOutOfRange(_))));
    }

    #[test]
    fn miller_rabin_matches_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        // 2^31 - 1 by trial division as an independent check
        assert!(trial_division(DEFAULT_MODULUS));
        assert!(is_prime(DEFAULT_MODULUS));
        // strong pseudoprime to several small bases
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn small_field_arithmetic() {
        let f = PrimeField::new(7).unwrap();
        assert_eq!(f.div(f.elem(3), f.elem(3)).unwrap(), Fe::ONE);
        assert_eq!(f.mul(f.elem(3), f.elem(5)), Fe::ONE);
        assert_eq!(f.div(f.elem(3), Fe::ZERO), Err(FieldError::DivisionByZero(7)));
        let g = PrimeField::new(101).unwrap();
        assert_eq!(g.sub(Fe::ZERO, Fe::ONE), g.elem(100));
    }

    #[test]
    fn rational_embedding() {
        let f = PrimeField::new(101).unwrap();
        let x = f.from_rational(-7, 3).unwrap();
        assert_eq!(x.value(), 65);
        assert_eq!(f.mul(x, f.elem(3)), f.from_i64(-7));
        assert_eq!(f.from_rational(1, 1).unwrap(), Fe::ONE);
        let g = PrimeField::new(7).unwrap();
        assert_eq!(g.from_rational(6, 2).unwrap().value(), 3);
        let h = PrimeField::new(3).unwrap();
        assert_eq!(
            h.from_rational(4, 3),
            Err(FieldError::DenominatorVanishes { den: 3, q: 3 })
        );
    }

    #[test]
    fn sampling_is_reproducible_and_in_range() {
        let f = PrimeField::new(101).unwrap();
        let a: Vec<_> = {
            let mut r = FieldRng::new(9);
            (0..16).map(|_| f.sample(&mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = FieldRng::new(9);
            (0..16).map(|_| f.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.value() < 101));

        let two = PrimeField::new(2).unwrap();
        let mut r = FieldRng::new(1);
        assert!((0..1000).all(|_| two.sample(&mut r).value() <= 1));

        let mut s0 = FieldRng::with_stream(9, 0);
        let mut s1 = FieldRng::with_stream(9, 1);
        let x: Vec<_> = (0..8).map(|_| s0.next_u64()).collect();
        let y: Vec<_> = (0..8).map(|_| s1.next_u64()).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        // 1e5 draws over F_7: each residue count is Binomial(n, 1/7); demand
        // every count within 5 sigma, and a chi-square statistic (6 dof) well
        // below its 0.999 quantile of 22.46.
        let f = PrimeField::new(7).unwrap();
        let mut rng = FieldRng::new(2024);
        let n = 100_000usize;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            counts[f.sample(&mut rng).value() as usize] += 1;
        }
        let p = 1.0 / 7.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "{counts:?}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        }
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn field_axioms(a in 0u64..101, b in 0u64..101, c in 0u64..101) {
            let f = PrimeField::new(101).unwrap();
            let (a, b, c) = (f.elem(a), f.elem(b), f.elem(c));
            prop_assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
            prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
            prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            prop_assert_eq!(f.add(a, f.neg(a)), Fe::ZERO);
            prop_assert_eq!(f.sub(a, b), f.add(a, f.neg(b)));
            if !a.is_zero() {
                prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), Fe::ONE);
            }
        }

        #[test]
        fn rational_roundtrip(num in -10_000i64..10_000, den in 1i64..10_000) {
            let f = PrimeField::new(DEFAULT_MODULUS).unwrap();
            let x = f.from_rational(num, den).unwrap();
            prop_assert_eq!(f.mul(x, f.from_i64(den)), f.from_i64(num));
        }
    }
}
