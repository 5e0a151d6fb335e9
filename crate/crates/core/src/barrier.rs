//! Parabolic operator, reduced barrier operator, and sign certificates.
//!
//! The rescaled flow is governed by
//!
//! ```text
//! P w = w_t - ((w^{m-1}w_r)_r + (n-1)/r·w^{m-1}w_r) - μ r w_r - μ n w,
//! ```
//!
//! so solutions satisfy `P v = 0`, supersolutions `P w ≥ 0`, and
//! subsolutions `P w ≤ 0`.  Every barrier used here is of the form
//! `w = (r² + D + y(t)ψ(r))^{-μ/2}` (possibly clamped against another
//! stationary profile), for which the operator collapses to
//!
//! ```text
//! P w = (μ/2)·y(t)·(r²+D+yψ)^{-(μ+2)/2}·A_D[y]ψ,
//! A_D[y]ψ = (r²+D)(ψ_rr + (n-1)/r ψ_r) - μ r ψ_r - (y'/y)ψ
//!           - y{ -ψ(ψ_rr + (n-1)/r ψ_r) + (μ/2)ψ_r² }.
//! ```
//!
//! A certificate samples `A_D[y]ψ` on a space-time grid restricted to the
//! active branch of the clamp and checks that its sign matches the
//! barrier role, with tolerance `1e-10` relative to the largest additive
//! term at each node.  Clamp branches are exact stationary solutions and
//! need no check of their own; the engine certifies each smooth branch
//! on its own active set (the usual reading of a barrier built from a
//! min/max of two smooth barriers).
//!
//! Constants that the constructions fix only qualitatively ("B large
//! enough", "y₀ small enough") are computed here from the stated
//! inequalities with a 10% safety factor and echoed in the report.

use crate::params::{profile_value, ExponentSet};
use crate::solver::InitialDataSpec;
use crate::spectral::{integrate_phi, sample_phi_at, SpectralProblem, SpectralSolution};
use crate::util::fmt_sig;
use crate::{Error, Result};
use std::fmt;

/// Relative sign tolerance: a node violates only when the residual has
/// the wrong sign by more than this times the largest additive term.
const SIGN_TOL: f64 = 1e-10;

/// Sampling tolerance for barrier shapes.
const SHAPE_TOL: f64 = 1e-11;

// ---------------------------------------------------------------------
// pointwise operators
// ---------------------------------------------------------------------

/// Applies the parabolic operator to a sampled space-time field whose
/// time derivative is known analytically.  Spatial derivatives use
/// second-order finite differences on the given (possibly nonuniform)
/// nodes; the result covers the interior nodes `r[1..len-1]`.
pub fn apply_p(exps: &ExponentSet, r: &[f64], w: &[f64], w_t: &[f64]) -> Result<Vec<f64>> {
    let len = r.len();
    if len < 3 || w.len() != len || w_t.len() != len {
        return Err(Error::InvalidParameter(
            "apply_p needs at least three nodes and matching field lengths".into(),
        ));
    }
    if r.windows(2).any(|p| p[1] <= p[0]) || r[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "apply_p needs strictly increasing radii with r > 0".into(),
        ));
    }
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "apply_p needs a positive field (w^{m-1} undefined otherwise)".into(),
        ));
    }
    let n = exps.n as f64;
    let mu = exps.mu;
    let mm1 = exps.m - 1.0;

    // compact flux form for the degenerate diffusion term: the flux
    // w^{m-1}w_r at the half nodes keeps every interior residual on a
    // three-point stencil with a smooth truncation error
    Ok((1..len - 1)
        .map(|i| {
            let (hm, hp) = (r[i] - r[i - 1], r[i + 1] - r[i]);
            let flux_e = (0.5 * (w[i] + w[i + 1])).powf(mm1) * (w[i + 1] - w[i]) / hp;
            let flux_w = (0.5 * (w[i - 1] + w[i])).powf(mm1) * (w[i] - w[i - 1]) / hm;
            let div = (flux_e - flux_w) / (0.5 * (hm + hp));
            let wr = hm / (hp * (hp + hm)) * (w[i + 1] - w[i])
                + hp / (hm * (hp + hm)) * (w[i] - w[i - 1]);
            let g = w[i].powf(mm1) * wr;
            w_t[i] - (div + (n - 1.0) / r[i] * g) - mu * r[i] * wr - mu * n * w[i]
        })
        .collect())
}

/// The reduced operator `A_D[y]ψ` evaluated pointwise from sampled shape
/// derivatives.  `y` must be nonzero (the `y'/y` factor).
pub fn a_d_residual(
    exps: &ExponentSet,
    profile_d: f64,
    y: f64,
    y_prime: f64,
    r: &[f64],
    psi: &[f64],
    psi_r: &[f64],
    psi_rr: &[f64],
) -> Result<Vec<f64>> {
    if y == 0.0 {
        return Err(Error::InvalidParameter(
            "a_d_residual needs y != 0 (use apply_p directly for the unperturbed profile)".into(),
        ));
    }
    let len = r.len();
    if psi.len() != len || psi_r.len() != len || psi_rr.len() != len {
        return Err(Error::InvalidParameter("field length mismatch".into()));
    }
    if r.iter().any(|&ri| ri <= 0.0) {
        return Err(Error::InvalidParameter("a_d_residual needs r > 0".into()));
    }
    let n = exps.n as f64;
    let mu = exps.mu;
    let ratio = y_prime / y;
    Ok((0..len)
        .map(|i| {
            let x = psi_rr[i] + (n - 1.0) / r[i] * psi_r[i];
            (r[i] * r[i] + profile_d) * x - mu * r[i] * psi_r[i] - ratio * psi[i]
                - y * (-psi[i] * x + 0.5 * mu * psi_r[i] * psi_r[i])
        })
        .collect())
}

/// Right side of the operator identity for perturbed-profile fields:
/// `(μ/2)·y·(r²+D+yψ)^{-(μ+2)/2}·A_D[y]ψ`.
pub fn identity_rhs(
    exps: &ExponentSet,
    profile_d: f64,
    y: f64,
    y_prime: f64,
    r: &[f64],
    psi: &[f64],
    psi_r: &[f64],
    psi_rr: &[f64],
) -> Result<Vec<f64>> {
    let a = a_d_residual(exps, profile_d, y, y_prime, r, psi, psi_r, psi_rr)?;
    let mu = exps.mu;
    (0..r.len())
        .map(|i| {
            let base = r[i] * r[i] + profile_d + y * psi[i];
            if !(base > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "perturbed profile not positive at r={}",
                    r[i]
                )));
            }
            Ok(0.5 * mu * y * base.powf(-(mu + 2.0) / 2.0) * a[i])
        })
        .collect()
}

// ---------------------------------------------------------------------
// barrier specifications (used by comparisons and reports)
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierRole {
    Supersolution,
    Subsolution,
}

#[derive(Debug, Clone)]
pub enum BarrierShape {
    /// A positive solution of the linearized problem.
    Spectral(SpectralSolution),
    /// `r^{-k}`.
    PowerLaw { k: f64 },
}

impl BarrierShape {
    fn value(&self, r: f64) -> Result<f64> {
        match self {
            BarrierShape::Spectral(sol) => Ok(sol.interpolate(r)?.0),
            BarrierShape::PowerLaw { k } => Ok(r.powf(-k)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BarrierClamp {
    None,
    /// `min` against the stationary profile with this parameter.
    MinProfile { d: f64 },
    /// `max` against the stationary profile with this parameter.
    MaxProfile { d: f64 },
}

/// A parametrized barrier `clamp(V_·, (r²+D+y(t)ψ(r))^{-μ/2})` with
/// amplitude law `y(t) = amp0·e^{-decay·t}` on a validity region.
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    pub role: BarrierRole,
    pub profile_d: f64,
    pub shape: BarrierShape,
    pub amp0: f64,
    pub decay: f64,
    pub clamp: BarrierClamp,
    pub r_range: (f64, f64),
    pub t_range: (f64, f64),
}

impl BarrierSpec {
    pub fn amplitude(&self, t: f64) -> f64 {
        self.amp0 * (-self.decay * t).exp()
    }

    /// Evaluates the barrier at `(r, t)` inside its validity region.
    pub fn eval(&self, exps: &ExponentSet, r: f64, t: f64) -> Result<f64> {
        if !(r >= self.r_range.0 && r <= self.r_range.1) {
            return Err(Error::InvalidParameter(format!(
                "radius {r} outside barrier validity range"
            )));
        }
        if !(t >= self.t_range.0 && t <= self.t_range.1) {
            return Err(Error::InvalidParameter(format!(
                "time {t} outside barrier validity range"
            )));
        }
        let base = r * r + self.profile_d + self.amplitude(t) * self.shape.value(r)?;
        let branch = if base > 0.0 {
            base.powf(-exps.mu / 2.0)
        } else {
            f64::INFINITY
        };
        Ok(match self.clamp {
            BarrierClamp::None => branch,
            BarrierClamp::MinProfile { d } => branch.min(profile_value(exps, d, r)),
            BarrierClamp::MaxProfile { d } => branch.max(profile_value(exps, d, r)),
        })
    }
}

// ---------------------------------------------------------------------
// certificates
// ---------------------------------------------------------------------

/// Identifiers of the certified constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaId {
    L31,
    L32,
    L33,
    L34,
    L41,
    L42,
    T12Upper,
    T12Lower,
}

impl LemmaId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "L3.1" => LemmaId::L31,
            "L3.2" => LemmaId::L32,
            "L3.3" => LemmaId::L33,
            "L3.4" => LemmaId::L34,
            "L4.1" => LemmaId::L41,
            "L4.2" => LemmaId::L42,
            "T1.2-upper" => LemmaId::T12Upper,
            "T1.2-lower" => LemmaId::T12Lower,
            other => {
                return Err(Error::Config(format!(
                    "unknown lemma id {other:?}; expected one of L3.1, L3.2, L3.3, L3.4, L4.1, L4.2, T1.2-upper, T1.2-lower"
                )))
            }
        })
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LemmaId::L31 => "L3.1",
            LemmaId::L32 => "L3.2",
            LemmaId::L33 => "L3.3",
            LemmaId::L34 => "L3.4",
            LemmaId::L41 => "L4.1",
            LemmaId::L42 => "L4.2",
            LemmaId::T12Upper => "T1.2-upper",
            LemmaId::T12Lower => "T1.2-lower",
        };
        f.write_str(s)
    }
}

/// Space-time evaluation grid for certificates.
#[derive(Debug, Clone)]
pub struct CertGrid {
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
}

impl CertGrid {
    pub fn new(radii: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if radii.len() < 1000 {
            return Err(Error::InvalidParameter(format!(
                "certificate grid needs >= 1000 space nodes, got {}",
                radii.len()
            )));
        }
        if times.len() < 20 {
            return Err(Error::InvalidParameter(format!(
                "certificate grid needs >= 20 time samples, got {}",
                times.len()
            )));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "certificate radii must be positive and strictly increasing".into(),
            ));
        }
        Ok(CertGrid { radii, times })
    }

    /// Log-spaced radii, linear times.
    pub fn log_spaced(r_lo: f64, r_hi: f64, nr: usize, t_lo: f64, t_hi: f64, nt: usize) -> Result<Self> {
        if !(r_lo > 0.0 && r_hi > r_lo && t_hi > t_lo) {
            return Err(Error::InvalidParameter("degenerate certificate grid".into()));
        }
        let radii = (0..nr)
            .map(|i| r_lo * (r_hi / r_lo).powf(i as f64 / (nr - 1) as f64))
            .collect();
        let times = (0..nt)
            .map(|j| t_lo + (t_hi - t_lo) * j as f64 / (nt - 1) as f64)
            .collect();
        CertGrid::new(radii, times)
    }

    fn describe(&self) -> String {
        format!(
            "r[{},{}]x{},t[{},{}]x{}",
            fmt_sig(self.radii[0]),
            fmt_sig(*self.radii.last().unwrap()),
            self.radii.len(),
            fmt_sig(self.times[0]),
            fmt_sig(*self.times.last().unwrap()),
            self.times.len()
        )
    }
}

/// A certification request with the per-construction parameters.
/// Optional fields are derived constructively when absent.
#[derive(Debug, Clone, Copy)]
pub enum CertifyRequest {
    /// Min-clamped upper barrier with spectral shape at shift `delta`
    /// and amplitude `-B e^{-eta t}`; negative `eta` covers the
    /// growing-amplitude variant.
    L31 {
        profile_d: f64,
        delta: f64,
        alpha: Option<f64>,
        eta: Option<f64>,
        amplitude: Option<f64>,
    },
    /// Constructive wrapper for tail data `(c, l)`: picks the reduced
    /// tail exponent, rate, `eta = alpha/2`, and a dominating amplitude.
    L32 { profile_d: f64, delta: f64, c: f64, l: f64 },
    /// Lower (subsolution) construction `(r²+D+Be^{-αt}ψ)^{-μ/2}`.
    L33 { profile_d: f64, c: f64, l: f64 },
    /// Min-clamped upper barrier with power-law shape, valid from `t0`.
    L34 {
        profile_d: f64,
        delta: f64,
        c: f64,
        l: f64,
        t0: f64,
    },
    /// Max-clamped upper barrier with shape at shift `E+1`.
    L41 {
        profile_d: f64,
        e: Option<f64>,
        c: f64,
        l: f64,
    },
    /// Subsolution `(r²+D-Be^{-αt}ψ)^{-μ/2}` with shape at shift `D`.
    L42 { profile_d: f64, c: f64, l: f64 },
    /// Ceiling barrier above the profile on the ball cut by the first
    /// zero of the sign-changing mode (`alpha > alpha_star`).
    T12Upper {
        profile_d: f64,
        alpha: f64,
        y0: Option<f64>,
    },
    /// Same shape placed below the profile.
    T12Lower {
        profile_d: f64,
        alpha: f64,
        y0: Option<f64>,
    },
}

impl CertifyRequest {
    pub fn lemma(&self) -> LemmaId {
        match self {
            CertifyRequest::L31 { .. } => LemmaId::L31,
            CertifyRequest::L32 { .. } => LemmaId::L32,
            CertifyRequest::L33 { .. } => LemmaId::L33,
            CertifyRequest::L34 { .. } => LemmaId::L34,
            CertifyRequest::L41 { .. } => LemmaId::L41,
            CertifyRequest::L42 { .. } => LemmaId::L42,
            CertifyRequest::T12Upper { .. } => LemmaId::T12Upper,
            CertifyRequest::T12Lower { .. } => LemmaId::T12Lower,
        }
    }
}

/// One node where the residual sign was wrong beyond tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Violation {
    pub r: f64,
    pub t: f64,
    pub residual: f64,
    /// `sign·residual/scale`; negative means violation.
    pub margin: f64,
}

/// Outcome of a certificate evaluation.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub lemma: LemmaId,
    /// `+1`: residual must be nonnegative; `-1`: nonpositive.
    pub required_sign: f64,
    /// Worst (most negative) scaled margin over the checked nodes.
    pub worst_margin: f64,
    pub checked_nodes: usize,
    /// Violated smallness/largeness conditions, spelled out.
    pub condition_failures: Vec<String>,
    /// Up to the 16 worst sign violations (by scaled margin).
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    /// Largest radius among all violating nodes (NaN when none).
    pub max_violation_r: f64,
    /// Parameter echo (constructive constants included).
    pub params: Vec<(String, f64)>,
    pub grid_desc: String,
    pub notes: Vec<String>,
}

impl CertificateReport {
    pub fn pass(&self) -> bool {
        self.condition_failures.is_empty() && self.violation_count == 0
    }

    /// One-line structured record (`key=value`, space separated).
    pub fn record(&self) -> String {
        let mut s = format!(
            "lemma={} pass={} required_sign={} worst_margin={} checked={} violations={}",
            self.lemma,
            self.pass(),
            if self.required_sign > 0.0 { "+" } else { "-" },
            fmt_sig(self.worst_margin),
            self.checked_nodes,
            self.violation_count
        );
        for (k, v) in &self.params {
            s.push_str(&format!(" {k}={}", fmt_sig(*v)));
        }
        s.push_str(&format!(" grid={}", self.grid_desc));
        if let Some(v) = self.violations.first() {
            s.push_str(&format!(
                " worst_r={} worst_t={} worst_residual={} max_violation_r={}",
                fmt_sig(v.r),
                fmt_sig(v.t),
                fmt_sig(v.residual),
                fmt_sig(self.max_violation_r)
            ));
        }
        if !self.condition_failures.is_empty() {
            s.push_str(&format!(" failed_conditions={}", self.condition_failures.len()));
        }
        s
    }
}

struct ShapeField {
    psi: Vec<f64>,
    psi_r: Vec<f64>,
    psi_rr: Vec<f64>,
}

fn spectral_shape(problem: &SpectralProblem, radii: &[f64]) -> Result<ShapeField> {
    let (psi, psi_r) = sample_phi_at(problem, radii, SHAPE_TOL)?;
    let psi_rr = radii
        .iter()
        .zip(psi.iter().zip(&psi_r))
        .map(|(&r, (&p, &dp))| problem.phi_rr(r, p, dp))
        .collect();
    Ok(ShapeField { psi, psi_r, psi_rr })
}

fn power_shape(k: f64, radii: &[f64]) -> ShapeField {
    ShapeField {
        psi: radii.iter().map(|&r| r.powf(-k)).collect(),
        psi_r: radii.iter().map(|&r| -k * r.powf(-k - 1.0)).collect(),
        psi_rr: radii.iter().map(|&r| k * (k + 1.0) * r.powf(-k - 2.0)).collect(),
    }
}

/// Core loop: checks `sign·A_D[y(t)]ψ ≥ -tol·scale` over the grid
/// restricted to `active` nodes.
#[allow(clippy::too_many_arguments)]
fn sign_certificate(
    exps: &ExponentSet,
    profile_d: f64,
    grid: &CertGrid,
    shape: &ShapeField,
    amp0: f64,
    decay: f64,
    required_sign: f64,
    active: impl Fn(usize, f64) -> bool,
) -> SignOutcome {
    let n = exps.n as f64;
    let mu = exps.mu;
    let mut violations: Vec<Violation> = Vec::new();
    let mut worst = f64::INFINITY;
    let mut checked = 0usize;

    // per-node pieces independent of t
    let len = grid.radii.len();
    let mut t1 = vec![0.0; len]; // (r²+D)·X
    let mut t2 = vec![0.0; len]; // -μ r ψ_r
    let mut t3 = vec![0.0; len]; // -(y'/y)ψ = decay·ψ
    let mut quad = vec![0.0; len]; // -ψX + (μ/2)ψ_r²
    for i in 0..len {
        let r = grid.radii[i];
        let x = shape.psi_rr[i] + (n - 1.0) / r * shape.psi_r[i];
        t1[i] = (r * r + profile_d) * x;
        t2[i] = -mu * r * shape.psi_r[i];
        t3[i] = decay * shape.psi[i];
        quad[i] = -shape.psi[i] * x + 0.5 * mu * shape.psi_r[i] * shape.psi_r[i];
    }

    for &t in &grid.times {
        let y = amp0 * (-decay * t).exp();
        for i in 0..len {
            if !active(i, y) {
                continue;
            }
            checked += 1;
            let t4 = -y * quad[i];
            let a = t1[i] + t2[i] + t3[i] + t4;
            let scale = t1[i]
                .abs()
                .max(t2[i].abs())
                .max(t3[i].abs())
                .max(t4.abs())
                .max(1e-300);
            let margin = required_sign * a / scale;
            worst = worst.min(margin);
            if margin < -SIGN_TOL {
                violations.push(Violation {
                    r: grid.radii[i],
                    t,
                    residual: a,
                    margin,
                });
            }
        }
    }
    violations.sort_by(|a, b| a.margin.partial_cmp(&b.margin).unwrap());
    let count = violations.len();
    let max_violation_r = violations
        .iter()
        .map(|v| v.r)
        .fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.max(b) });
    violations.truncate(16);
    let worst = if checked == 0 { f64::NAN } else { worst };
    SignOutcome {
        violations,
        worst_margin: worst,
        violation_count: count,
        max_violation_r,
    }
}

struct SignOutcome {
    violations: Vec<Violation>,
    worst_margin: f64,
    violation_count: usize,
    max_violation_r: f64,
}

/// Reduced tail exponent satisfying the shifted-profile slope condition
/// `k/(n-μ-2-k) ≤ δ/(μ(D-δ))`, with a 10% safety factor.
fn reduced_tail_exponent(exps: &ExponentSet, profile_d: f64, delta: f64, l: Option<f64>) -> f64 {
    let gap = exps.n as f64 - exps.mu - 2.0;
    let s = delta / (exps.mu * (profile_d - delta));
    let mut k = 0.9 * gap * s / (1.0 + s);
    if let Some(l) = l {
        k = k.min(l - exps.mu - 2.0);
    }
    k.min(0.95 * (exps.l_star - exps.mu - 2.0))
}

/// Amplitude dominating the datum: smallest `B` with
/// `B ψ(r) ≥ r²+D - v₀^{-2/μ}(r)` on the sampled radii (then +10%).
fn dominating_amplitude(
    exps: &ExponentSet,
    profile_d: f64,
    data: &InitialDataSpec,
    radii: &[f64],
    psi: &[f64],
) -> Result<f64> {
    let v0 = data.sample(exps, radii)?;
    let mut need = 0.0f64;
    for ((&r, &v), &p) in radii.iter().zip(&v0).zip(psi) {
        let gap = r * r + profile_d - v.powf(-2.0 / exps.mu);
        if gap > 0.0 {
            need = need.max(gap / p);
        }
    }
    Ok(if need > 0.0 { 1.1 * need } else { 0.1 * profile_d })
}

fn push_cond(fails: &mut Vec<String>, ok: bool, text: String) {
    if !ok {
        fails.push(text);
    }
}

/// Evaluates the sign certificate for one construction.
///
/// A violated smallness condition does not abort the grid check: the
/// engine still evaluates the residuals so the report shows where the
/// inequality actually breaks.  Structural errors (parameters outside
/// any sensible domain) are rejected instead.
pub fn certify(
    req: &CertifyRequest,
    exps: &ExponentSet,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    match *req {
        CertifyRequest::L31 {
            profile_d,
            delta,
            alpha,
            eta,
            amplitude,
        } => {
            check_delta(profile_d, delta)?;
            let alpha = match alpha {
                Some(a) => a,
                None => {
                    let k = reduced_tail_exponent(exps, profile_d, delta, None);
                    k * (exps.n as f64 - exps.mu - 2.0 - k)
                }
            };
            if !(alpha > 0.0 && alpha < exps.alpha_star) {
                return Err(Error::InvalidParameter(format!(
                    "shape stays positive only for alpha in (0, alpha_star); got {alpha}"
                )));
            }
            let eta = eta.unwrap_or(0.5 * alpha);
            let b = amplitude.unwrap_or(profile_d - delta);
            certify_clamped_spectral(
                LemmaId::L31,
                exps,
                profile_d,
                delta,
                alpha,
                eta,
                b,
                grid,
                Vec::new(),
            )
        }
        CertifyRequest::L32 {
            profile_d,
            delta,
            c,
            l,
        } => {
            check_delta(profile_d, delta)?;
            check_tail(exps, c, l)?;
            let gap = exps.n as f64 - exps.mu - 2.0;
            let k0 = reduced_tail_exponent(exps, profile_d, delta, Some(l));
            let l0 = exps.mu + 2.0 + k0;
            let alpha = k0 * (gap - k0);
            let eta = 0.5 * alpha;
            // slope condition on the reduced exponent
            let s = delta / (exps.mu * (profile_d - delta));
            let mut fails = Vec::new();
            push_cond(
                &mut fails,
                k0 / (exps.n as f64 - l0) <= s * (1.0 + 1e-12),
                format!(
                    "tail-slope: (l0-mu-2)/(n-l0) = {} must be <= delta/(mu(D-delta)) = {}",
                    fmt_sig(k0 / (exps.n as f64 - l0)),
                    fmt_sig(s)
                ),
            );
            // dominating amplitude from the two-sided datum
            let probe: Vec<f64> = (0..400)
                .map(|i| 1e-3 * (1e6f64).powf(i as f64 / 399.0))
                .collect();
            let problem = SpectralProblem::new(alpha, delta, *exps)?;
            let (psi_probe, _) = sample_phi_at(&problem, &probe, SHAPE_TOL)?;
            let data = InitialDataSpec::case_i(profile_d, delta, c, l);
            let b = dominating_amplitude(exps, profile_d, &data, &probe, &psi_probe)?;
            let mut rep = certify_clamped_spectral(
                LemmaId::L32,
                exps,
                profile_d,
                delta,
                alpha,
                eta,
                b,
                grid,
                fails,
            )?;
            rep.params.push(("l0".into(), l0));
            rep.params.push(("c".into(), c));
            rep.params.push(("l".into(), l));
            Ok(rep)
        }
        CertifyRequest::L33 { profile_d, c, l } => certify_l33(exps, profile_d, c, l, grid),
        CertifyRequest::L34 {
            profile_d,
            delta,
            c,
            l,
            t0,
        } => certify_l34(exps, profile_d, delta, c, l, t0, grid),
        CertifyRequest::L41 { profile_d, e, c, l } => certify_l41(exps, profile_d, e, c, l, grid),
        CertifyRequest::L42 { profile_d, c, l } => certify_l42(exps, profile_d, c, l, grid),
        CertifyRequest::T12Upper {
            profile_d,
            alpha,
            y0,
        } => certify_t12(exps, profile_d, alpha, y0, true, grid),
        CertifyRequest::T12Lower {
            profile_d,
            alpha,
            y0,
        } => certify_t12(exps, profile_d, alpha, y0, false, grid),
    }
}

fn check_delta(profile_d: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < profile_d) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < delta < D, got delta={delta}, D={profile_d}"
        )));
    }
    Ok(())
}

fn check_tail(exps: &ExponentSet, c: f64, l: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter("tail amplitude c must be > 0".into()));
    }
    if !(l > exps.mu + 2.0 && l < exps.l_star) {
        return Err(Error::InvalidParameter(format!(
            "tail exponent l must lie in (mu+2, l_star), got {l}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn certify_clamped_spectral(
    lemma: LemmaId,
    exps: &ExponentSet,
    profile_d: f64,
    delta: f64,
    alpha: f64,
    eta: f64,
    b: f64,
    grid: Option<&CertGrid>,
    mut condition_failures: Vec<String>,
) -> Result<CertificateReport> {
    let k = exps.k_of_alpha(alpha)?;
    let bound = alpha - exps.mu * (profile_d - delta) / (2.0 * delta) * k * k;
    push_cond(
        &mut condition_failures,
        eta <= bound * (1.0 + 1e-12) + 1e-15,
        format!(
            "decay-bound: eta = {} must be <= alpha - mu(D-delta)(l(alpha)-mu-2)^2/(2 delta) = {}",
            fmt_sig(eta),
            fmt_sig(bound)
        ),
    );
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = CertGrid::log_spaced(
                1e-3 * delta.sqrt(),
                1e3 * profile_d.max(1.0).sqrt(),
                1200,
                0.0,
                10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let problem = SpectralProblem::new(alpha, delta, *exps)?;
    let shape = spectral_shape(&problem, &grid.radii)?;
    let gap = profile_d - delta;
    let out = sign_certificate(
        exps,
        profile_d,
        grid,
        &shape,
        -b,
        eta,
        -1.0,
        |i, y| y.abs() * shape.psi[i] < gap,
    );
    Ok(CertificateReport {
        lemma,
        required_sign: -1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("delta".into(), delta),
            ("alpha".into(), alpha),
            ("eta".into(), eta),
            ("B".into(), b),
        ],
        grid_desc: grid.describe(),
        notes: vec![
            "clamp branch is a stationary profile (certified trivially)".into(),
        ],
    })
}

fn certify_l33(
    exps: &ExponentSet,
    profile_d: f64,
    c: f64,
    l: f64,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    check_tail(exps, c, l)?;
    let alpha = exps.rate_of_l(l)?;
    let k = l - exps.mu - 2.0;
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = CertGrid::log_spaced(
                1e-3 * profile_d.sqrt(),
                1e3,
                1200,
                0.0,
                10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let problem = SpectralProblem::new(alpha, profile_d, *exps)?;
    let shape = spectral_shape(&problem, &grid.radii)?;

    // constructive constants from the stated inequalities
    let mut r0 = 1.0f64;
    for (&r, _) in grid.radii.iter().zip(&shape.psi) {
        if r >= 1.0 && c * r.powf(-l) <= 0.5 * profile_value(exps, profile_d, r) {
            r0 = r;
            break;
        }
        r0 = r.max(1.0);
    }
    let mut c1 = f64::INFINITY;
    let mut psi_r0 = shape.psi[0];
    for (&r, &p) in grid.radii.iter().zip(&shape.psi) {
        if r <= r0 {
            psi_r0 = p;
        } else {
            c1 = c1.min(p * r.powf(k));
        }
    }
    let c1 = 0.9 * c1;
    let data = InitialDataSpec::case_ii(profile_d, c, l);
    let inner: Vec<f64> = grid.radii.iter().copied().filter(|&r| r <= r0).collect();
    let c2 = data
        .sample(exps, &inner)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c3 = 2.0 * (2.0f64.powf(2.0 / exps.mu) - 1.0);
    let b_floor = (c2.powf(2.0 / exps.mu) * psi_r0).recip();
    let b_tail = c * c3 * (profile_d + 1.0).powf((exps.mu + 2.0) / 2.0) / c1;
    let b = 1.1 * b_floor.max(b_tail);

    let mut condition_failures = Vec::new();
    push_cond(
        &mut condition_failures,
        b >= b_floor,
        format!("amp-origin: B must be >= {}", fmt_sig(b_floor)),
    );
    push_cond(
        &mut condition_failures,
        b >= b_tail,
        format!("amp-tail: B must be >= {}", fmt_sig(b_tail)),
    );

    let out = sign_certificate(exps, profile_d, grid, &shape, b, alpha, -1.0, |_, _| true);
    Ok(CertificateReport {
        lemma: LemmaId::L33,
        required_sign: -1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("c".into(), c),
            ("l".into(), l),
            ("alpha".into(), alpha),
            ("B".into(), b),
            ("r0".into(), r0),
            ("c1".into(), c1),
            ("c2".into(), c2),
            ("c3".into(), c3),
        ],
        grid_desc: grid.describe(),
        notes: vec!["subsolution: barrier sits below the profile".into()],
    })
}

fn certify_l34(
    exps: &ExponentSet,
    profile_d: f64,
    delta: f64,
    c: f64,
    l: f64,
    t0: f64,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    check_delta(profile_d, delta)?;
    check_tail(exps, c, l)?;
    if !(t0 >= 0.0) {
        return Err(Error::InvalidParameter("t0 must be >= 0".into()));
    }
    let alpha = exps.rate_of_l(l)?;
    let k = l - exps.mu - 2.0;
    let n = exps.n as f64;
    let mu = exps.mu;

    let delta_bound = (n + mu - l) * profile_d / (n + mu - l + 0.5 * mu * k);
    let mut condition_failures = Vec::new();
    push_cond(
        &mut condition_failures,
        delta < delta_bound,
        format!(
            "delta-smallness: delta = {} must be < (n+mu-l)D/(n+mu-l+(mu/2)(l-mu-2)) = {}",
            fmt_sig(delta),
            fmt_sig(delta_bound)
        ),
    );
    let b1 = (alpha * t0).exp() * (profile_d + 1.0);
    let b2 = 2.0 * c / mu * (alpha * t0).exp() * (profile_d + 1.0).powf((mu + 2.0) / 2.0);
    let b = 1.1 * b1.max(b2);

    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            let r_if = (b * (-alpha * t0).exp() / delta).powf(1.0 / k);
            default_grid = CertGrid::log_spaced(
                1e-2,
                10.0 * r_if,
                1500,
                t0,
                t0 + 10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let shape = power_shape(k, &grid.radii);
    let out = sign_certificate(
        exps,
        profile_d,
        grid,
        &shape,
        -b,
        alpha,
        -1.0,
        |i, y| y.abs() * shape.psi[i] < delta,
    );
    Ok(CertificateReport {
        lemma: LemmaId::L34,
        required_sign: -1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("delta".into(), delta),
            ("c".into(), c),
            ("l".into(), l),
            ("alpha".into(), alpha),
            ("t0".into(), t0),
            ("B".into(), b),
            ("delta_bound".into(), delta_bound),
        ],
        grid_desc: grid.describe(),
        notes: vec![
            "clamp branch is the stationary profile at D-delta (certified trivially)".into(),
        ],
    })
}

fn certify_l41(
    exps: &ExponentSet,
    profile_d: f64,
    e_big: Option<f64>,
    c: f64,
    l: f64,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    check_tail(exps, c, l)?;
    let alpha = exps.rate_of_l(l)?;
    let k = l - exps.mu - 2.0;
    let mu = exps.mu;
    let gap_bound = 2.0 * alpha / (mu * k * k);
    let e_big = e_big.unwrap_or(profile_d + 0.9 * gap_bound.min(profile_d));
    if !(e_big > profile_d) {
        return Err(Error::InvalidParameter(format!(
            "need E > D, got E={e_big}, D={profile_d}"
        )));
    }
    let mut condition_failures = Vec::new();
    push_cond(
        &mut condition_failures,
        e_big - profile_d <= gap_bound * (1.0 + 1e-12),
        format!(
            "gap-smallness: E-D = {} must be <= 2 alpha/(mu (l-mu-2)^2) = {}",
            fmt_sig(e_big - profile_d),
            fmt_sig(gap_bound)
        ),
    );
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = CertGrid::log_spaced(
                1e-3 * (e_big + 1.0).sqrt(),
                1e3,
                1200,
                0.0,
                10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let problem = SpectralProblem::new(alpha, e_big + 1.0, *exps)?;
    let shape = spectral_shape(&problem, &grid.radii)?;
    let mut c1 = 0.0f64;
    for (&r, &p) in grid.radii.iter().zip(&shape.psi) {
        if r >= 1.0 {
            c1 = c1.max(p * r.powf(k));
        }
    }
    let c1 = 1.1 * c1;
    let b = 0.9 * 2.0 * c / (mu * c1 * (profile_d + 1.0).powf((mu + 2.0) / 2.0));
    let gap = e_big - profile_d;
    let out = sign_certificate(
        exps,
        profile_d,
        grid,
        &shape,
        b,
        alpha,
        1.0,
        |i, y| y * shape.psi[i] < gap,
    );
    Ok(CertificateReport {
        lemma: LemmaId::L41,
        required_sign: 1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("E".into(), e_big),
            ("c".into(), c),
            ("l".into(), l),
            ("alpha".into(), alpha),
            ("c1".into(), c1),
            ("B".into(), b),
        ],
        grid_desc: grid.describe(),
        notes: vec![
            "clamp branch is the stationary profile at E (certified trivially)".into(),
        ],
    })
}

fn certify_l42(
    exps: &ExponentSet,
    profile_d: f64,
    c: f64,
    l: f64,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    check_tail(exps, c, l)?;
    let alpha = exps.rate_of_l(l)?;
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = CertGrid::log_spaced(
                1e-3 * profile_d.sqrt(),
                1e3,
                1200,
                0.0,
                10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let problem = SpectralProblem::new(alpha, profile_d, *exps)?;
    let shape = spectral_shape(&problem, &grid.radii)?;
    let data = InitialDataSpec::case_iii(profile_d, c, l);
    let v0 = data.sample(exps, &grid.radii)?;
    let mut b = f64::INFINITY;
    for ((&r, &v), &p) in grid.radii.iter().zip(&v0).zip(&shape.psi) {
        let room = r * r + profile_d - v.powf(-2.0 / exps.mu);
        b = b.min(room / p);
    }
    let b = (0.9 * b).min(0.9 * profile_d);
    let mut condition_failures = Vec::new();
    push_cond(
        &mut condition_failures,
        b > 0.0 && b < profile_d,
        format!("amp-positivity: need 0 < B < D, got B = {}", fmt_sig(b)),
    );
    let out = sign_certificate(exps, profile_d, grid, &shape, -b, alpha, 1.0, |_, _| true);
    Ok(CertificateReport {
        lemma: LemmaId::L42,
        required_sign: 1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("c".into(), c),
            ("l".into(), l),
            ("alpha".into(), alpha),
            ("B".into(), b),
        ],
        grid_desc: grid.describe(),
        notes: vec!["subsolution: barrier sits below the excess datum".into()],
    })
}

/// Computes `c2 = c1 / sup{ φ|φ_rr + (n-1)/r φ_r| + (μ/2)φ_r² }` over
/// the ball cut by the first zero (or the full stored range when no
/// zero is present).  The supremum is located on the stored nodes and
/// refined by golden-section search on the interpolant.
pub fn compute_c2(sol: &SpectralSolution, c1: f64) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 must be > 0, got {c1}")));
    }
    let p = &sol.problem;
    let mu = p.exps.mu;
    let r_end = sol.first_zero.unwrap_or(*sol.r.last().unwrap());
    let g_at = |r: f64, phi: f64, dphi: f64| {
        let x = p.mean_curvature(r, phi, dphi);
        phi * x.abs() + 0.5 * mu * dphi * dphi
    };
    let mut best = 0.0f64;
    let mut best_i = 0usize;
    for i in 0..sol.r.len() {
        if sol.r[i] >= r_end {
            break;
        }
        let g = g_at(sol.r[i], sol.phi[i], sol.dphi[i]);
        if g > best {
            best = g;
            best_i = i;
        }
    }
    if best <= 0.0 {
        return Err(Error::Numerical(
            "degenerate shape: sup of the quadratic envelope is zero".into(),
        ));
    }
    // golden-section refinement around the best node
    let lo = if best_i == 0 { sol.r[0] } else { sol.r[best_i - 1] };
    let hi = sol.r[(best_i + 1).min(sol.r.len() - 1)].min(r_end * (1.0 - 1e-12));
    let phi_g = |r: f64| {
        let (phi, dphi) = sol.interpolate(r).unwrap_or((0.0, 0.0));
        g_at(r, phi, dphi)
    };
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (phi_g(x1), phi_g(x2));
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = phi_g(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = phi_g(x1);
        }
    }
    let sup = best.max(f1).max(f2);
    Ok(c1 / sup)
}

fn certify_t12(
    exps: &ExponentSet,
    profile_d: f64,
    alpha: f64,
    y0: Option<f64>,
    upper: bool,
    grid: Option<&CertGrid>,
) -> Result<CertificateReport> {
    if !(profile_d > 0.0) {
        return Err(Error::InvalidParameter("D must be > 0".into()));
    }
    if !(alpha > exps.alpha_star) {
        return Err(Error::InvalidParameter(format!(
            "ceiling certificate needs alpha > alpha_star = {}, got {alpha}",
            exps.alpha_star
        )));
    }
    let d = profile_d + 1.0;
    let problem = SpectralProblem::new(alpha, d, *exps)?;
    let mut sol = None;
    let mut r_try = 1e6f64.max(100.0 * d.sqrt());
    while sol.is_none() && r_try <= 1e60 {
        let s = integrate_phi(&problem, r_try, SHAPE_TOL)?;
        if s.first_zero.is_some() {
            sol = Some(s);
        } else {
            r_try = r_try.powf(2.0).min(1e60);
            if r_try == 1e60 && integrate_phi(&problem, r_try, SHAPE_TOL)?.first_zero.is_none() {
                break;
            }
        }
    }
    let sol = sol.ok_or_else(|| {
        Error::Numerical("sign change not found; alpha may be too close to the ceiling".into())
    })?;
    let r0 = sol.first_zero.unwrap();

    // c1: uniform negativity of the mean curvature inside the ball
    let mut c1 = f64::INFINITY;
    for i in 0..sol.r.len() {
        if sol.r[i] >= r0 {
            break;
        }
        c1 = c1.min(-problem.mean_curvature(sol.r[i], sol.phi[i], sol.dphi[i]));
    }
    if !(c1 > 0.0) {
        return Err(Error::Numerical(
            "mean curvature not uniformly negative inside the ball".into(),
        ));
    }
    let c1 = 0.9 * c1;
    let c2 = compute_c2(&sol, c1)?;
    let y0_cap = if upper { c2 } else { c2.min(profile_d) };
    let y0 = y0.unwrap_or(0.9 * y0_cap);

    let mut condition_failures = Vec::new();
    push_cond(
        &mut condition_failures,
        y0 > 0.0 && y0 <= c2,
        format!("amplitude-bound: need 0 < y0 <= c2 = {}", fmt_sig(c2)),
    );
    if !upper {
        push_cond(
            &mut condition_failures,
            y0 < profile_d,
            format!("amplitude-positivity: need y0 < D = {}", fmt_sig(profile_d)),
        );
    }

    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = CertGrid::log_spaced(
                1e-3 * d.sqrt(),
                r0 * (1.0 - 1e-9),
                1200,
                0.0,
                10.0 / alpha,
                24,
            )?;
            &default_grid
        }
    };
    let shape = spectral_shape(&problem, &grid.radii)?;
    let amp0 = if upper { y0 } else { -y0 };
    let out = sign_certificate(exps, profile_d, grid, &shape, amp0, alpha, 1.0, |_, _| true);
    Ok(CertificateReport {
        lemma: if upper {
            LemmaId::T12Upper
        } else {
            LemmaId::T12Lower
        },
        required_sign: 1.0,
        worst_margin: out.worst_margin,
        checked_nodes: grid.radii.len() * grid.times.len(),
        condition_failures,
        violations: out.violations,
        violation_count: out.violation_count,
        max_violation_r: out.max_violation_r,
        params: vec![
            ("D".into(), profile_d),
            ("alpha".into(), alpha),
            ("d".into(), d),
            ("r0".into(), r0),
            ("c1".into(), c1),
            ("c2".into(), c2),
            ("y0".into(), y0),
        ],
        grid_desc: grid.describe(),
        notes: vec![format!(
            "barrier valid on the ball r < {} cut by the first zero",
            fmt_sig(r0)
        )],
    })
}
