//! Exponent algebra, Barenblatt-type profiles, and the self-similar
//! change of variables.
//!
//! Every other module consults [`ExponentSet`] for parameter validity.
//! The admissible regime is `n > 2` together with
//! `m < m_star = (n-4)/(n-2)`; below `m_star` the difference of two
//! profiles is non-integrable and the whole rate continuum exists.
//!
//! `m` is carried as an exact rational internally so that exponents like
//! `μ = 2/(1-m)` come out exact whenever they are representable
//! (`m = 1/3` gives `μ = 3` exactly, not `2/0.666…`).  Derived exponents
//! are stored as `f64`.

use crate::{Error, Result};
use num::rational::Ratio;
use num::{One, Zero};

/// Exact rational carrier for the diffusion exponent.
pub type Rational = Ratio<i128>;

/// All derived exponents for a given `(n, m)`.
///
/// Invariants (enforced at construction):
/// `m < m_star < m_c < 1`, `μ > 0`, `β > 0`, `μ+2 < l_star < n`,
/// `α_* > 0`, and `(l_star - μ - 2)(n - l_star) = α_*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    /// Spatial dimension (integer > 2).
    pub n: i64,
    /// Diffusion exponent, `m < m_star`.
    pub m: f64,
    /// Tail exponent of the profiles, `μ = 2/(1-m)`.
    pub mu: f64,
    /// Self-similar scale exponent, `β = 1/(n(1-m)-2)`.
    pub beta: f64,
    /// Extinction threshold `(n-2)/n`.
    pub m_c: f64,
    /// Integrability threshold `(n-4)/(n-2)`.
    pub m_star: f64,
    /// Saturating tail exponent `(n+μ+2)/2`.
    pub l_star: f64,
    /// Universal rate ceiling `(n-μ-2)²/4`.
    pub alpha_star: f64,
    /// Amplitude of the singular profile in original variables,
    /// `(2(n-μ))^{μ/2}`.  Used only to label the `D = 0` member.
    pub k_star: f64,
}

impl ExponentSet {
    /// Derives all exponents from exact rational `m`.
    ///
    /// Rejects `n ≤ 2` and `m ≥ m_star` with a message naming the
    /// violated bound.
    pub fn new(n: i64, m: Rational) -> Result<Self> {
        if n <= 2 {
            return Err(Error::InvalidParameter(format!("n must be > 2, got {n}")));
        }
        let nq = Rational::from_integer(n as i128);
        let m_star = (nq - Rational::from_integer(4)) / (nq - Rational::from_integer(2));
        if m >= m_star {
            return Err(Error::InvalidParameter(format!(
                "m must be < m_star={}",
                ratio_f64(m_star)
            )));
        }
        let one = Rational::one();
        let two = Rational::from_integer(2);
        let one_minus_m = one - m;
        let mu = two / one_minus_m;
        let beta = one / (nq * one_minus_m - two);
        let m_c = (nq - two) / nq;
        let l_star = (nq + mu + two) / two;
        let gap = nq - mu - two; // n - μ - 2 > 0 in this regime
        let alpha_star = gap * gap / Rational::from_integer(4);

        let mu_f = ratio_f64(mu);
        let set = ExponentSet {
            n,
            m: ratio_f64(m),
            mu: mu_f,
            beta: ratio_f64(beta),
            m_c: ratio_f64(m_c),
            m_star: ratio_f64(m_star),
            l_star: ratio_f64(l_star),
            alpha_star: ratio_f64(alpha_star),
            k_star: (2.0 * (n as f64 - mu_f)).powf(mu_f / 2.0),
        };
        debug_assert!(set.mu > 0.0 && set.beta > 0.0 && set.alpha_star > 0.0);
        debug_assert!(set.mu + 2.0 < set.l_star && set.l_star < set.n as f64);
        Ok(set)
    }

    /// Derives the exponents taking `m` as the exact rational encoded by
    /// the `f64` bit pattern (every finite double is a dyadic rational).
    pub fn from_f64(n: i64, m: f64) -> Result<Self> {
        let m = rational_from_f64(m)
            .ok_or_else(|| Error::InvalidParameter(format!("m out of range: {m}")))?;
        Self::new(n, m)
    }

    /// Convergence rate `(l - μ - 2)(n - l)` for a tail exponent
    /// `l ∈ (μ+2, l_star]`.
    pub fn rate_of_l(&self, l: f64) -> Result<f64> {
        if !(l > self.mu + 2.0 && l <= self.l_star) {
            return Err(Error::InvalidParameter(format!(
                "l must lie in (mu+2, l_star] = ({}, {}], got {l}",
                self.mu + 2.0,
                self.l_star
            )));
        }
        Ok((l - self.mu - 2.0) * (self.n as f64 - l))
    }

    /// Smaller root `l(α)` of `(l-μ-2)(n-l) = α`, for `α ∈ (0, α_*]`.
    ///
    /// Inverse of [`Self::rate_of_l`] on its domain; at `α = α_*` the
    /// discriminant vanishes and `l(α_*) = l_star`.
    pub fn l_of_alpha(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= self.alpha_star) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, alpha_star] = (0, {}], got {alpha}",
                self.alpha_star
            )));
        }
        let gap = self.n as f64 - self.mu - 2.0;
        let disc = (gap * gap - 4.0 * alpha).max(0.0);
        Ok((self.n as f64 + self.mu + 2.0 - disc.sqrt()) / 2.0)
    }

    /// Spatial decay exponent `k = l(α) - μ - 2` of the slow mode.
    pub fn k_of_alpha(&self, alpha: f64) -> Result<f64> {
        Ok(self.l_of_alpha(alpha)? - self.mu - 2.0)
    }
}

fn ratio_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact dyadic rational equal to a finite `f64`, when it fits in `i128`.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(Rational::zero());
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1i128 } else { 1i128 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074i64) // subnormal
    } else {
        (frac | (1i128 << 52), exp_bits - 1075)
    };
    // mant * 2^exp; keep the shift inside i128.
    if exp >= 0 {
        if exp > 60 {
            return None;
        }
        Some(Rational::new(sign * (mant << exp), 1))
    } else {
        if exp < -120 {
            return None;
        }
        Some(Rational::new(sign * mant, 1i128 << (-exp)))
    }
}

/// Parses a rational from decimal (`0.25`), scientific (`2.5e-1`),
/// integer (`-1`), or fraction (`1/3`) notation.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse number: {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let n: i128 = a.trim().parse().map_err(|_| bad())?;
        let d: i128 = b.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (mant_str, exp10) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (mant_str, neg) = match mant_str.strip_prefix('-') {
        Some(rest) => (rest, true),
        None => (mant_str.strip_prefix('+').unwrap_or(mant_str), false),
    };
    let (int_part, frac_part) = match mant_str.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mant_str, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits: String = format!("{int_part}{frac_part}");
    if digits.len() > 30 || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mant: i128 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let mant = if neg { -mant } else { mant };
    let shift = exp10 - frac_part.len() as i32;
    if shift.unsigned_abs() > 35 {
        return Err(bad());
    }
    let pow = 10i128.pow(shift.unsigned_abs());
    Ok(if shift >= 0 {
        Rational::from_integer(mant * pow)
    } else {
        Rational::new(mant, pow)
    })
}

/// One member of the stationary profile family.
///
/// `D > 0` selects the regular profile `(D + r²)^{-μ/2}`; `D = 0` the
/// singular one `r^{-μ}` (finite only away from the origin).
#[derive(Debug, Clone, Copy)]
pub struct ProfileSpec {
    pub d: f64,
    pub exps: ExponentSet,
}

impl ProfileSpec {
    pub fn new(d: f64, exps: ExponentSet) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile parameter D must be >= 0, got {d}"
            )));
        }
        Ok(ProfileSpec { d, exps })
    }

    /// `(D + r²)^{-μ/2}`, strictly decreasing in both `r` and `D`.
    pub fn value(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be >= 0, got {r}"
            )));
        }
        if self.d == 0.0 && r == 0.0 {
            return Err(Error::SingularProfile);
        }
        Ok(profile_value(&self.exps, self.d, r))
    }
}

/// Unchecked profile evaluation for hot paths (`D + r² > 0` assumed).
#[inline]
pub(crate) fn profile_value(exps: &ExponentSet, d: f64, r: f64) -> f64 {
    (d + r * r).powf(-exps.mu / 2.0)
}

/// The time-dependent change of variables between original variables
/// `(y, τ, u)` on `[0, T)` and rescaled variables `(x, t, v)`.
///
/// `R(τ) = (T-τ)^{-β}`, `t = log(R(τ)/R(0))/μ`, `x = sqrt(β/μ)·y/R(τ)`,
/// `v = R(τ)^n·u`.  The extinction profiles in original variables map
/// pointwise onto the stationary profiles.
#[derive(Debug, Clone, Copy)]
pub struct SelfSimilarFrame {
    /// Extinction time `T > 0`.
    pub extinction_time: f64,
    pub exps: ExponentSet,
}

impl SelfSimilarFrame {
    pub fn new(extinction_time: f64, exps: ExponentSet) -> Result<Self> {
        if !(extinction_time > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "extinction time must be > 0, got {extinction_time}"
            )));
        }
        Ok(SelfSimilarFrame {
            extinction_time,
            exps,
        })
    }

    /// `R(τ) = (T-τ)^{-β}`, strictly increasing on `[0, T)`.
    pub fn scale(&self, tau: f64) -> Result<f64> {
        if !(0.0 <= tau && tau < self.extinction_time) {
            return Err(Error::InvalidParameter(format!(
                "time must lie in [0, T) = [0, {}), got {tau}",
                self.extinction_time
            )));
        }
        Ok((self.extinction_time - tau).powf(-self.exps.beta))
    }

    fn scale0(&self) -> f64 {
        self.extinction_time.powf(-self.exps.beta)
    }

    /// Maps `(y, τ, u)` to `(x, t, v)`.
    pub fn to_selfsimilar(&self, y: f64, tau: f64, u_value: f64) -> Result<(f64, f64, f64)> {
        let r = self.scale(tau)?;
        let e = &self.exps;
        let t = (r / self.scale0()).ln() / e.mu;
        let x = (e.beta / e.mu).sqrt() * y / r;
        let v = r.powi(e.n as i32) * u_value;
        Ok((x, t, v))
    }

    /// Inverse of [`Self::to_selfsimilar`].
    pub fn from_selfsimilar(&self, x: f64, t: f64, v_value: f64) -> Result<(f64, f64, f64)> {
        let e = &self.exps;
        let r = self.scale0() * (e.mu * t).exp();
        let tau = self.extinction_time - r.powf(-1.0 / e.beta);
        let y = x * r / (e.beta / e.mu).sqrt();
        let u = v_value / r.powi(e.n as i32);
        Ok((y, tau, u))
    }

    /// The extinction solution in original variables whose rescaled image
    /// is the stationary profile with parameter `D`.
    pub fn extinction_solution(&self, d: f64, y: f64, tau: f64) -> Result<f64> {
        let r = self.scale(tau)?;
        let e = &self.exps;
        let arg = d + e.beta * (1.0 - e.m) / 2.0 * (y / r) * (y / r);
        Ok(r.powi(-(e.n as i32)) * arg.powf(-1.0 / (1.0 - e.m)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn exps6() -> ExponentSet {
        ExponentSet::from_f64(6, 0.0).unwrap()
    }

    #[test]
    fn exponents_at_reference_dimension() {
        let e = exps6();
        assert_eq!(e.mu, 2.0);
        assert_eq!(e.beta, 0.25);
        assert_eq!(e.m_c, 2.0 / 3.0);
        assert_eq!(e.m_star, 0.5);
        assert_eq!(e.l_star, 5.0);
        assert_eq!(e.alpha_star, 1.0);
        assert_eq!(e.k_star, 8.0);
    }

    #[test]
    fn exponents_in_five_dimensions() {
        let e = ExponentSet::from_f64(5, 0.0).unwrap();
        assert_eq!(e.mu, 2.0);
        assert_relative_eq!(e.beta, 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(e.l_star, 4.5);
        assert_eq!(e.alpha_star, 0.25);
    }

    #[test]
    fn exact_rational_m_gives_exact_mu() {
        let e = ExponentSet::new(6, Rational::new(1, 3)).unwrap();
        assert_eq!(e.mu, 3.0); // 2/(1 - 1/3) exactly
    }

    #[test]
    fn regime_gate_rejects_boundary_and_low_dimension() {
        let err = ExponentSet::from_f64(6, 0.5).unwrap_err();
        assert!(err.to_string().contains("m must be < m_star=0.5"), "{err}");
        assert!(ExponentSet::from_f64(2, 0.0).is_err());
        assert!(ExponentSet::from_f64(6, 0.49).is_ok());
    }

    #[test]
    fn rate_formula_peaks_at_saturating_exponent() {
        let e = exps6();
        assert_eq!(e.rate_of_l(4.5).unwrap(), 0.75);
        assert_eq!(e.rate_of_l(e.l_star).unwrap(), e.alpha_star);
        assert_eq!(e.l_of_alpha(1.0).unwrap(), 5.0);
        // rate -> 0 as l -> mu+2 from above
        assert!(e.rate_of_l(4.0 + 1e-9).unwrap() < 3e-9);
        assert!(e.rate_of_l(4.0).is_err());
        assert!(e.rate_of_l(5.0 + 1e-12).is_err());
        assert!(e.l_of_alpha(0.0).is_err());
        assert!(e.l_of_alpha(1.0 + 1e-12).is_err());
    }

    #[test]
    fn rate_is_concave_with_interior_maximum() {
        let e = exps6();
        let ls: Vec<f64> = (1..=100)
            .map(|i| 4.0 + (e.l_star - 4.0) * i as f64 / 100.0)
            .collect();
        let rates: Vec<f64> = ls.iter().map(|&l| e.rate_of_l(l).unwrap()).collect();
        for w in rates.windows(2) {
            assert!(w[1] > w[0], "rate must increase up to l_star");
        }
        // second differences negative (concavity)
        for w in rates.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] < 0.0);
        }
    }

    #[test]
    fn profile_reference_values() {
        let e = exps6();
        let p1 = ProfileSpec::new(1.0, e).unwrap();
        assert_eq!(p1.value(0.0).unwrap(), 1.0);
        assert_eq!(p1.value(1.0).unwrap(), 0.5);
        let p0 = ProfileSpec::new(0.0, e).unwrap();
        assert_eq!(p0.value(2.0).unwrap(), 0.25);
        assert!(matches!(
            p0.value(0.0).unwrap_err(),
            Error::SingularProfile
        ));
        assert!(ProfileSpec::new(-1.0, e).is_err());
    }

    #[test]
    fn profiles_order_by_parameter() {
        let e = exps6();
        let lo = ProfileSpec::new(0.5, e).unwrap();
        let hi = ProfileSpec::new(2.0, e).unwrap();
        for i in 0..200 {
            let r = 0.05 * i as f64;
            assert!(lo.value(r).unwrap() > hi.value(r).unwrap());
        }
    }

    #[test]
    fn frame_maps_extinction_solution_onto_profile() {
        let e = exps6();
        let frame = SelfSimilarFrame::new(2.0, e).unwrap();
        let d = 1.3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let y: f64 = rng.gen_range(0.0..50.0);
            let tau: f64 = rng.gen_range(0.0..1.99);
            let u = frame.extinction_solution(d, y, tau).unwrap();
            let (x, _t, v) = frame.to_selfsimilar(y, tau, u).unwrap();
            let expect = ProfileSpec::new(d, e).unwrap().value(x).unwrap();
            assert_relative_eq!(v, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn frame_start_is_identity_in_time() {
        let e = exps6();
        let frame = SelfSimilarFrame::new(2.0, e).unwrap();
        let (x, t, _v) = frame.to_selfsimilar(3.0, 0.0, 1.0).unwrap();
        assert_eq!(t, 0.0);
        let r0 = 2.0f64.powf(-e.beta);
        assert_relative_eq!(x, (e.beta / e.mu).sqrt() * 3.0 / r0, max_relative = 1e-15);
    }

    #[test]
    fn frame_rejects_times_at_or_past_extinction() {
        let frame = SelfSimilarFrame::new(1.0, exps6()).unwrap();
        assert!(frame.to_selfsimilar(1.0, 1.0, 1.0).is_err());
        assert!(frame.to_selfsimilar(1.0, 1.5, 1.0).is_err());
        assert!(frame.to_selfsimilar(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("0.25").unwrap(), Rational::new(1, 4));
        assert_eq!(parse_rational("1/3").unwrap(), Rational::new(1, 3));
        assert_eq!(parse_rational("-1").unwrap(), Rational::from_integer(-1));
        assert_eq!(parse_rational("2.5e-1").unwrap(), Rational::new(1, 4));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    proptest! {
        #[test]
        fn rate_and_l_are_mutual_inverses(l in 4.0001f64..=5.0) {
            let e = exps6();
            let alpha = e.rate_of_l(l).unwrap();
            let back = e.l_of_alpha(alpha).unwrap();
            prop_assert!((back - l).abs() <= 1e-9 * l);
        }

        #[test]
        fn frame_round_trip_is_identity(
            y in 0.0f64..100.0,
            tau in 0.0f64..1.9,
            u in 1e-6f64..10.0,
        ) {
            let frame = SelfSimilarFrame::new(2.0, exps6()).unwrap();
            let (x, t, v) = frame.to_selfsimilar(y, tau, u).unwrap();
            let (y2, tau2, u2) = frame.from_selfsimilar(x, t, v).unwrap();
            prop_assert!((y2 - y).abs() <= 1e-12 * (1.0 + y.abs()));
            prop_assert!((tau2 - tau).abs() <= 1e-12 * (1.0 + tau.abs()));
            prop_assert!((u2 - u).abs() <= 1e-12 * u.abs());
        }
    }

    #[test]
    fn random_m_keeps_invariants() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(3i64..=12);
            let m_star = (n as f64 - 4.0) / (n as f64 - 2.0);
            let m = m_star - rng.gen_range(1e-3..3.0);
            let e = ExponentSet::from_f64(n, m).unwrap();
            assert!(e.m < e.m_star && e.m_star < e.m_c && e.m_c < 1.0);
            assert!(e.mu > 0.0 && e.beta > 0.0 && e.alpha_star > 0.0);
            assert!(e.mu + 2.0 < e.l_star && e.l_star < e.n as f64);
            let peak = (e.l_star - e.mu - 2.0) * (e.n as f64 - e.l_star);
            assert_relative_eq!(peak, e.alpha_star, max_relative = 1e-12);
        }
    }
}
