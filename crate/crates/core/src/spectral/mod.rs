//! The linearized radial problem and its comparison functions.
//!
//! For `α, d > 0` the initial value problem
//!
//! ```text
//! (r²+d)(φ'' + (n-1)/r φ') - μ r φ' + α φ = 0,   φ(0) = 1, φ'(0) = 0,
//! ```
//!
//! has a dichotomy in `α`: below the ceiling `α_*` the solution stays
//! positive and decreasing with tail `r^{-(l(α)-μ-2)}`, above it the
//! solution changes sign at a finite radius.  Both behaviours feed the
//! barrier constructions: positive solutions are barrier shapes, the
//! first zero truncates the ceiling barrier to a ball.
//!
//! Integration runs in `s = log r`, where the far field becomes a
//! constant-coefficient equation and adaptive steps grow with `r` for
//! free.  The origin is entered through the two-term series
//! `φ ≈ 1 - α r²/(2 n d)`, which balances the equation to `O(r²)`.

mod rk;

use crate::params::ExponentSet;
use crate::util::least_squares_line;
use crate::{Error, Result};
use rk::Dopri5;

/// Parameters of the linearized problem.
#[derive(Debug, Clone, Copy)]
pub struct SpectralProblem {
    /// Rate parameter `α > 0`.
    pub alpha: f64,
    /// Shift `d > 0` of the profile the problem is linearized at.
    pub d: f64,
    pub exps: ExponentSet,
}

impl SpectralProblem {
    pub fn new(alpha: f64, d: f64, exps: ExponentSet) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("d must be > 0, got {d}")));
        }
        Ok(SpectralProblem { alpha, d, exps })
    }

    /// Radius where the series start hands over to the integrator.
    pub fn start_radius(&self) -> f64 {
        1e-6 * self.d.sqrt()
    }

    /// Two-term series at `r`: `(φ, r·φ_r)`.
    fn series_start(&self, r: f64) -> [f64; 2] {
        let n = self.exps.n as f64;
        let phi = 1.0 - self.alpha * r * r / (2.0 * n * self.d);
        let q = -self.alpha * r * r / (n * self.d);
        [phi, q]
    }

    /// Right-hand side in `s = log r` for the state `(φ, q = r φ_r)`.
    fn rhs(&self) -> impl Fn(f64, [f64; 2]) -> [f64; 2] + '_ {
        let n = self.exps.n as f64;
        let mu = self.exps.mu;
        let (alpha, d) = (self.alpha, self.d);
        move |s: f64, y: [f64; 2]| {
            let r2 = (2.0 * s).exp();
            let q = y[1];
            [q, r2 * (mu * q - alpha * y[0]) / (r2 + d) - (n - 2.0) * q]
        }
    }

    /// Curvature recovered algebraically from the equation:
    /// `φ_rr = (μ r φ_r - α φ)/(r²+d) - (n-1)/r · φ_r`.
    pub fn phi_rr(&self, r: f64, phi: f64, dphi: f64) -> f64 {
        let n = self.exps.n as f64;
        (self.exps.mu * r * dphi - self.alpha * phi) / (r * r + self.d) - (n - 1.0) / r * dphi
    }

    /// `φ_rr + (n-1)/r φ_r` without forming the two pieces separately.
    pub fn mean_curvature(&self, r: f64, phi: f64, dphi: f64) -> f64 {
        (self.exps.mu * r * dphi - self.alpha * phi) / (r * r + self.d)
    }
}

/// Power-law tail fit of a positive decaying sample.
#[derive(Debug, Clone, Copy)]
pub struct TailFit {
    /// Fitted decay exponent `k̂` of `φ ~ r^{-k̂}`.
    pub exponent: f64,
    /// RMS of the log-log fit residuals.
    pub residual: f64,
    /// Radial window the fit used.
    pub window: (f64, f64),
}

/// Numerical solution of the linearized problem on `[r₀, r_max]`.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub problem: SpectralProblem,
    /// Increasing radii (accepted integrator nodes).
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    /// `φ_r` at the nodes.
    pub dphi: Vec<f64>,
    /// First sign change, when one occurs before `r_max`.
    pub first_zero: Option<f64>,
    /// Tail exponent fitted over the last two decades (absent after a
    /// sign change or when too few nodes fall in the window).
    pub tail: Option<TailFit>,
}

impl SpectralSolution {
    /// Cubic Hermite interpolation in `log r`; returns `(φ, φ_r)`.
    pub fn interpolate(&self, r: f64) -> Result<(f64, f64)> {
        let (first, last) = (self.r[0], *self.r.last().unwrap());
        if !(r >= first && r <= last) {
            return Err(Error::InvalidParameter(format!(
                "radius {r} outside solution range [{first}, {last}]"
            )));
        }
        let i = match self.r.binary_search_by(|a| a.partial_cmp(&r).unwrap()) {
            Ok(i) => return Ok((self.phi[i], self.dphi[i])),
            Err(i) => i - 1,
        };
        let (s0, s1) = (self.r[i].ln(), self.r[i + 1].ln());
        let h = s1 - s0;
        let t = (r.ln() - s0) / h;
        // state and derivative in s: y = φ, y' = q = r φ_r
        let (y0, y1) = (self.phi[i], self.phi[i + 1]);
        let (m0, m1) = (self.r[i] * self.dphi[i], self.r[i + 1] * self.dphi[i + 1]);
        let (t2, t3) = (t * t, t * t * t);
        let phi = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * m1;
        let q = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * h * m1)
            / h;
        Ok((phi, q / r))
    }
}

fn validate_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must lie in [1e-12, 1e-4], got {tol}"
        )));
    }
    Ok(())
}

/// Integrates the linearized problem out to `r_max`.
///
/// Stops early at the first sign change of `φ`, refined by bisection to
/// `1e-10` relative in `r`.
pub fn integrate_phi(p: &SpectralProblem, r_max: f64, tol: f64) -> Result<SpectralSolution> {
    validate_tol(tol)?;
    if !(r_max >= 10.0 * p.d.sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "r_max must be >= 10*sqrt(d) = {}, got {r_max}",
            10.0 * p.d.sqrt()
        )));
    }
    let r0 = p.start_radius();
    let s_end = r_max.ln();
    let rhs = p.rhs();
    let mut ode = Dopri5::new(&rhs, r0.ln(), p.series_start(r0), tol, 0.1);

    let mut r_nodes = vec![r0];
    let mut phi = vec![ode.y[0]];
    let mut dphi = vec![ode.y[1] / r0];
    let mut first_zero = None;

    let s_eps = 1e-12 * s_end.abs().max(1.0);
    while ode.s < s_end - s_eps {
        let (s_prev, y_prev) = (ode.s, ode.y);
        ode.step_toward(s_end).map_err(|e| match e {
            Error::IntegrationFailure { last_r, msg } => Error::IntegrationFailure {
                last_r: last_r.max(*r_nodes.last().unwrap()),
                msg,
            },
            other => other,
        })?;
        let r = ode.s.exp();
        r_nodes.push(r);
        phi.push(ode.y[0]);
        dphi.push(ode.y[1] / r);
        if y_prev[0] > 0.0 && ode.y[0] <= 0.0 {
            let s_zero = bisect_sign_change(p, s_prev, y_prev, ode.s)?;
            first_zero = Some(s_zero.exp());
            break;
        }
    }

    let tail = if first_zero.is_none() {
        fit_powerlaw_tail(&r_nodes, &phi, r_max / 100.0, r_max)
    } else {
        None
    };

    Ok(SpectralSolution {
        problem: *p,
        r: r_nodes,
        phi,
        dphi,
        first_zero,
        tail,
    })
}

/// Samples `(φ, φ_r)` at the given increasing radii by integrating once
/// through them (no interpolation error).
pub fn sample_phi_at(p: &SpectralProblem, radii: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    validate_tol(tol)?;
    if radii.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let r0 = p.start_radius();
    if radii[0] < r0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "requested radius {} below series start {r0}",
            radii[0]
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "sample radii must be strictly increasing".into(),
        ));
    }
    let rhs = p.rhs();
    let mut ode = Dopri5::new(&rhs, r0.ln(), p.series_start(r0), tol, 0.1);
    let mut phis = Vec::with_capacity(radii.len());
    let mut dphis = Vec::with_capacity(radii.len());
    for &r in radii {
        let target = r.ln();
        if target > ode.s {
            ode.run_to(target).map_err(|e| match e {
                Error::IntegrationFailure { msg, .. } => Error::IntegrationFailure {
                    last_r: ode.s.exp(),
                    msg,
                },
                other => other,
            })?;
        }
        phis.push(ode.y[0]);
        dphis.push(ode.y[1] / r);
    }
    Ok((phis, dphis))
}

fn bisect_sign_change(p: &SpectralProblem, s_a: f64, y_a: [f64; 2], s_b: f64) -> Result<f64> {
    let rhs = p.rhs();
    let eval = |s_q: f64| -> Result<f64> {
        if s_q <= s_a {
            return Ok(y_a[0]);
        }
        let mut ode = Dopri5::new(&rhs, s_a, y_a, 1e-12, 0.05);
        ode.run_to(s_q)?;
        Ok(ode.y[0])
    };
    let (mut lo, mut hi) = (s_a, s_b);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares power-law fit of `vals ~ r^{-k}` over `[r_lo, r_hi]`.
pub fn fit_powerlaw_tail(r: &[f64], vals: &[f64], r_lo: f64, r_hi: f64) -> Option<TailFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ri, &vi) in r.iter().zip(vals) {
        if ri >= r_lo && ri <= r_hi && vi > 0.0 {
            xs.push(ri.ln());
            ys.push(vi.ln());
        }
    }
    if xs.len() < 8 {
        return None;
    }
    let (slope, _icept, rms) = least_squares_line(&xs, &ys)?;
    Some(TailFit {
        exponent: -slope,
        residual: rms,
        window: (r_lo, r_hi),
    })
}

/// Applies the mode operator
/// `L ψ = (r²+d)(ψ_rr + (n-1)/r ψ_r) - μ r ψ_r` pointwise.
pub fn apply_l(
    p: &SpectralProblem,
    r: &[f64],
    psi: &[f64],
    dpsi: &[f64],
    ddpsi: &[f64],
) -> Result<Vec<f64>> {
    if r.len() != psi.len() || r.len() != dpsi.len() || r.len() != ddpsi.len() {
        return Err(Error::InvalidParameter("field length mismatch".into()));
    }
    if r.iter().any(|&ri| ri <= 0.0) {
        return Err(Error::InvalidParameter(
            "mode operator requires r > 0 (coordinate singularity at the origin)".into(),
        ));
    }
    let n = p.exps.n as f64;
    let mu = p.exps.mu;
    Ok((0..r.len())
        .map(|i| {
            (r[i] * r[i] + p.d) * (ddpsi[i] + (n - 1.0) / r[i] * dpsi[i]) - mu * r[i] * dpsi[i]
        })
        .collect())
}

/// Node-wise verification report for the positive-solution properties:
/// positivity, monotone decrease, negative mean curvature, and the
/// two-sided logarithmic-derivative bound
/// `0 ≥ φ_r/φ ≥ -(l(α)-μ-2)·r/(r²+d)`.
#[derive(Debug, Clone, Default)]
pub struct PositivityReport {
    pub checked_nodes: usize,
    pub positivity_violations: Vec<usize>,
    pub monotonicity_violations: Vec<usize>,
    pub curvature_violations: Vec<usize>,
    pub log_slope_violations: Vec<usize>,
    pub max_log_slope_excess: f64,
}

impl PositivityReport {
    pub fn pass(&self) -> bool {
        self.positivity_violations.is_empty()
            && self.monotonicity_violations.is_empty()
            && self.curvature_violations.is_empty()
            && self.log_slope_violations.is_empty()
    }
}

/// Checks the positive-regime properties on every stored node.
/// Requires `α < α_*`; tolerance is `1e-8` relative to local term size.
pub fn check_positive_regime(sol: &SpectralSolution) -> Result<PositivityReport> {
    let p = &sol.problem;
    if !(p.alpha < p.exps.alpha_star) {
        return Err(Error::InvalidParameter(format!(
            "positive-regime check requires alpha < alpha_star = {}, got {}",
            p.exps.alpha_star, p.alpha
        )));
    }
    const TOL: f64 = 1e-8;
    let k = p.exps.k_of_alpha(p.alpha)?;
    let mut rep = PositivityReport {
        checked_nodes: sol.r.len(),
        ..Default::default()
    };
    for i in 0..sol.r.len() {
        let (r, phi, dphi) = (sol.r[i], sol.phi[i], sol.dphi[i]);
        if phi < -TOL {
            rep.positivity_violations.push(i);
        }
        let slope_scale = dphi.abs().max(phi.abs() / (r + p.d.sqrt()));
        if dphi > TOL * slope_scale.max(1e-300) {
            rep.monotonicity_violations.push(i);
        }
        let curv = p.mean_curvature(r, phi, dphi);
        let curv_scale =
            (p.exps.mu * r * dphi.abs() + p.alpha * phi.abs()) / (r * r + p.d);
        if curv > TOL * curv_scale.max(1e-300) {
            rep.curvature_violations.push(i);
        }
        if phi > 0.0 {
            let ratio = dphi / phi;
            let bound = k * r / (r * r + p.d);
            let excess = -ratio - bound;
            rep.max_log_slope_excess = rep.max_log_slope_excess.max(excess);
            if excess > TOL * (bound + ratio.abs()).max(1e-300) || ratio > TOL {
                rep.log_slope_violations.push(i);
            }
        }
    }
    Ok(rep)
}

/// Closed-form comparison functions for the mode operator.
#[derive(Debug, Clone, Copy)]
pub enum ComparisonFunction {
    /// `(r²+d)^{-k/2}`: `L W + α W < 0` for all `r > 0`.
    WMinus { k: f64, d: f64 },
    /// `r^{-k} - r^{-j}` with `k < j < k+2`: `L W + α W > 0` beyond a
    /// crossover radius.
    WPlus { k: f64, j: f64 },
    /// `r^{-k}` at the critical decay `k = (n-μ-2)/2`:
    /// `L W + α_* W = O(r^{-k-2})`.
    WStar { k: f64 },
}

impl ComparisonFunction {
    pub fn w_minus(p: &SpectralProblem) -> Result<Self> {
        if p.alpha > p.exps.alpha_star {
            return Err(Error::InvalidParameter(
                "decaying envelope needs alpha <= alpha_star".into(),
            ));
        }
        Ok(ComparisonFunction::WMinus {
            k: p.exps.k_of_alpha(p.alpha)?,
            d: p.d,
        })
    }

    /// `beta` defaults to `α + 0.05(α_* - α)`, which keeps `j - k < 2`
    /// throughout the admissible range.
    pub fn w_plus(p: &SpectralProblem, beta: Option<f64>) -> Result<Self> {
        let e = &p.exps;
        if !(p.alpha < e.alpha_star) {
            return Err(Error::InvalidParameter(
                "upper comparison needs alpha < alpha_star".into(),
            ));
        }
        let beta = beta.unwrap_or(p.alpha + 0.05 * (e.alpha_star - p.alpha));
        if !(beta > p.alpha && beta <= e.alpha_star) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (alpha, alpha_star], got {beta}"
            )));
        }
        let k = e.k_of_alpha(p.alpha)?;
        let j = e.k_of_alpha(beta)?;
        if !(j > k && j < k + 2.0) {
            return Err(Error::InvalidParameter(format!(
                "upper comparison needs k < j < k+2, got k={k}, j={j}"
            )));
        }
        Ok(ComparisonFunction::WPlus { k, j })
    }

    pub fn w_star(p: &SpectralProblem) -> Result<Self> {
        Ok(ComparisonFunction::WStar {
            k: (p.exps.n as f64 - p.exps.mu - 2.0) / 2.0,
        })
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            ComparisonFunction::WMinus { k, d } => (r * r + d).powf(-k / 2.0),
            ComparisonFunction::WPlus { k, j } => r.powf(-k) - r.powf(-j),
            ComparisonFunction::WStar { k } => r.powf(-k),
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        match *self {
            ComparisonFunction::WMinus { k, d } => -k * r * (r * r + d).powf(-k / 2.0 - 1.0),
            ComparisonFunction::WPlus { k, j } => {
                -k * r.powf(-k - 1.0) + j * r.powf(-j - 1.0)
            }
            ComparisonFunction::WStar { k } => -k * r.powf(-k - 1.0),
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        match *self {
            ComparisonFunction::WMinus { k, d } => {
                k * (k + 2.0) * r * r * (r * r + d).powf(-k / 2.0 - 2.0)
                    - k * (r * r + d).powf(-k / 2.0 - 1.0)
            }
            ComparisonFunction::WPlus { k, j } => {
                k * (k + 1.0) * r.powf(-k - 2.0) - j * (j + 1.0) * r.powf(-j - 2.0)
            }
            ComparisonFunction::WStar { k } => k * (k + 1.0) * r.powf(-k - 2.0),
        }
    }
}

/// Signed residuals `L f + α f` of a comparison function.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub residuals: Vec<f64>,
    /// Smallest sampled radius beyond which all residuals are positive
    /// (only meaningful for the upper comparison function).
    pub crossover: Option<f64>,
}

pub fn comparison_residuals(
    f: &ComparisonFunction,
    p: &SpectralProblem,
    radii: &[f64],
) -> Result<ComparisonReport> {
    let psi: Vec<f64> = radii.iter().map(|&r| f.value(r)).collect();
    let d1: Vec<f64> = radii.iter().map(|&r| f.d1(r)).collect();
    let d2: Vec<f64> = radii.iter().map(|&r| f.d2(r)).collect();
    let lpsi = apply_l(p, radii, &psi, &d1, &d2)?;
    let residuals: Vec<f64> = lpsi
        .iter()
        .zip(&psi)
        .map(|(l, v)| l + p.alpha * v)
        .collect();

    let crossover = if matches!(f, ComparisonFunction::WPlus { .. }) {
        let res_at = |r: f64| {
            let (v, a, b) = (f.value(r), f.d1(r), f.d2(r));
            (r * r + p.d) * (b + (p.exps.n as f64 - 1.0) / r * a) - p.exps.mu * r * a
                + p.alpha * v
        };
        if *residuals.last().unwrap() <= 0.0 {
            None
        } else {
            match residuals.iter().rposition(|&x| x <= 0.0) {
                None => Some(radii[0]),
                Some(i) => {
                    let (mut lo, mut hi) = (radii[i], radii[i + 1]);
                    for _ in 0..200 {
                        if hi - lo <= 1e-12 * hi {
                            break;
                        }
                        let mid = 0.5 * (lo + hi);
                        if res_at(mid) <= 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    Some(0.5 * (lo + hi))
                }
            }
        }
    } else {
        None
    };
    Ok(ComparisonReport {
        residuals,
        crossover,
    })
}

/// Scaled defect of the direct form at interior nodes, using a finite
/// difference of the stored slope for the curvature.
pub fn direct_defect(sol: &SpectralSolution) -> Vec<f64> {
    let p = &sol.problem;
    let n = p.exps.n as f64;
    let mu = p.exps.mu;
    let mut out = Vec::with_capacity(sol.r.len().saturating_sub(2));
    for i in 1..sol.r.len().saturating_sub(1) {
        let (rm, r, rp) = (sol.r[i - 1], sol.r[i], sol.r[i + 1]);
        let (hm, hp) = (r - rm, rp - r);
        let ddphi = (sol.dphi[i + 1] - sol.dphi[i]) / (hp * (1.0 + hp / hm))
            + (sol.dphi[i] - sol.dphi[i - 1]) / (hm * (1.0 + hm / hp));
        let t1 = (r * r + p.d) * (ddphi + (n - 1.0) / r * sol.dphi[i]);
        let t2 = -mu * r * sol.dphi[i];
        let t3 = p.alpha * sol.phi[i];
        let scale = t1.abs().max(t2.abs()).max(t3.abs()).max(1e-300);
        out.push((t1 + t2 + t3) / scale);
    }
    out
}

/// Scaled defect of the self-adjoint form
/// `(ρ φ_r)_r + α (r²+d)^{-1} ρ φ = 0` with
/// `ρ(r) = r^{n-1}(r²+d)^{-μ/2}`, at interior nodes.
pub fn selfadjoint_defect(sol: &SpectralSolution) -> Vec<f64> {
    let p = &sol.problem;
    let n = p.exps.n as f64;
    let mu = p.exps.mu;
    let rho = |r: f64| r.powf(n - 1.0) * (r * r + p.d).powf(-mu / 2.0);
    let mut out = Vec::with_capacity(sol.r.len().saturating_sub(2));
    for i in 1..sol.r.len().saturating_sub(1) {
        let (rm, r, rp) = (sol.r[i - 1], sol.r[i], sol.r[i + 1]);
        let (hm, hp) = (r - rm, rp - r);
        let (fm, f, fp) = (
            rho(rm) * sol.dphi[i - 1],
            rho(r) * sol.dphi[i],
            rho(rp) * sol.dphi[i + 1],
        );
        let dflux = (fp - f) / (hp * (1.0 + hp / hm)) + (f - fm) / (hm * (1.0 + hm / hp));
        let t2 = p.alpha / (r * r + p.d) * rho(r) * sol.phi[i];
        let scale = dflux.abs().max(t2.abs()).max(1e-300);
        out.push((dflux + t2) / scale);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exps6() -> ExponentSet {
        ExponentSet::from_f64(6, 0.0).unwrap()
    }

    fn problem(alpha: f64, d: f64) -> SpectralProblem {
        SpectralProblem::new(alpha, d, exps6()).unwrap()
    }

    #[test]
    fn mode_operator_annihilates_constants() {
        let p = problem(0.75, 1.0);
        let r = vec![0.5, 1.0, 2.0];
        let ones = vec![1.0; 3];
        let zeros = vec![0.0; 3];
        let out = apply_l(&p, &r, &ones, &zeros, &zeros).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mode_operator_rejects_origin_node() {
        let p = problem(0.75, 1.0);
        assert!(apply_l(&p, &[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    // Oracle: symbolic derivatives of (r²+d)^{-k/2} applied to the operator
    // collapse to -d·l·k·(r²+d)^{-k/2-1}.
    #[test]
    fn decaying_envelope_matches_closed_form() {
        let p = problem(0.75, 1.0); // l(0.75) = 4.5, k = 0.5
        let w = ComparisonFunction::w_minus(&p).unwrap();
        let closed = |r: f64| -1.0 * 4.5 * 0.5 * (r * r + 1.0).powf(-0.25 - 1.0);
        for r in [1e-8, 0.3, 1.0, 7.0, 120.0] {
            // independent symbolic differentiation, written out by hand
            let v = (r * r + 1.0f64).powf(-0.25);
            let d1 = -0.5 * r * (r * r + 1.0f64).powf(-1.25);
            let d2 = -0.5 * (r * r + 1.0f64).powf(-1.25) + 1.25 * r * r * (r * r + 1.0f64).powf(-2.25);
            assert_relative_eq!(w.value(r), v, max_relative = 1e-14);
            assert_relative_eq!(w.d1(r), d1, max_relative = 1e-14);
            assert_relative_eq!(w.d2(r), d2, max_relative = 1e-13);
            let res = comparison_residuals(&w, &p, &[r]).unwrap().residuals[0];
            assert_relative_eq!(res, closed(r), max_relative = 1e-11);
        }
        // frozen reference values
        let near0 = comparison_residuals(&w, &p, &[1e-8]).unwrap().residuals[0];
        assert!((near0 + 2.25).abs() < 1e-8, "got {near0}");
        let at1 = comparison_residuals(&w, &p, &[1.0]).unwrap().residuals[0];
        let expect = -2.25 * 2.0f64.powf(-1.25);
        assert_relative_eq!(at1, expect, max_relative = 1e-12);
    }

    #[test]
    fn decaying_envelope_residual_is_negative_everywhere() {
        let p = problem(0.42, 0.7);
        let w = ComparisonFunction::w_minus(&p).unwrap();
        let radii: Vec<f64> = (0..50).map(|i| 1e-3 * 10f64.powf(i as f64 * 0.14)).collect();
        let rep = comparison_residuals(&w, &p, &radii).unwrap();
        assert!(rep.residuals.iter().all(|&x| x < 0.0));
    }

    #[test]
    fn upper_comparison_positive_beyond_crossover() {
        let p = problem(0.75, 1.0);
        let w = ComparisonFunction::w_plus(&p, Some(0.80)).unwrap();
        let radii: Vec<f64> = (0..120).map(|i| 10f64.powf(i as f64 * 0.05)).collect();
        let rep = comparison_residuals(&w, &p, &radii).unwrap();
        let r0 = rep.crossover.expect("crossover expected");
        for (&r, &res) in radii.iter().zip(&rep.residuals) {
            if r > r0 * (1.0 + 1e-9) {
                assert!(res > 0.0, "residual at r={r} should be positive, got {res}");
            }
        }
        // far field: residual ~ (beta - alpha) r^{-j}
        let j = exps6().k_of_alpha(0.80).unwrap();
        let r_far = 1e3;
        let res = comparison_residuals(&w, &p, &[r_far]).unwrap().residuals[0];
        assert_relative_eq!(res, 0.05 * r_far.powf(-j), max_relative = 1e-3);
    }

    #[test]
    fn upper_comparison_rejects_wide_gap() {
        let p = problem(0.75, 1.0);
        // beta far above alpha pushes j past k+2 or out of range
        assert!(ComparisonFunction::w_plus(&p, Some(2.0)).is_err());
    }

    #[test]
    fn critical_power_residual_vanishes_at_leading_order() {
        let p = problem(1.0, 1.0); // alpha = alpha_*
        let w = ComparisonFunction::w_star(&p).unwrap();
        let k = 1.0;
        let mut prev_ratio = f64::INFINITY;
        for r in [10.0, 100.0, 1000.0] {
            let res = comparison_residuals(&w, &p, &[r]).unwrap().residuals[0];
            let ratio = (res / r.powf(-k)).abs();
            assert!(ratio < prev_ratio, "ratio must decay");
            prev_ratio = ratio;
            // exact subleading term: -d·k·(n-k-2)·r^{-k-2}
            assert_relative_eq!(res, -3.0 * r.powf(-k - 2.0), max_relative = 1e-9);
        }
        assert!(prev_ratio < 1e-5);
    }

    #[test]
    fn positive_regime_solution_decays_with_predicted_tail() {
        let p = problem(0.75, 1.0);
        let sol = integrate_phi(&p, 1e4, 1e-10).unwrap();
        assert!(sol.first_zero.is_none());
        assert!(sol.phi.iter().all(|&v| v > 0.0));
        assert!(sol.dphi.iter().skip(1).all(|&v| v <= 0.0));
        let tail = sol.tail.expect("tail fit expected");
        assert!(
            (tail.exponent - 0.5).abs() <= 0.01,
            "tail exponent {} should be 0.5 +/- 2%",
            tail.exponent
        );
    }

    #[test]
    fn supercritical_solution_changes_sign() {
        let p = problem(1.2, 1.0);
        let sol = integrate_phi(&p, 1e6, 1e-10).unwrap();
        let zero = sol.first_zero.expect("sign change expected");
        assert!(zero > 1.0 && zero.is_finite());
        // the stored solution ends just past the zero
        assert!(*sol.phi.last().unwrap() <= 0.0);
        // bisection pins the location independently of the tolerance
        let tight = integrate_phi(&p, 1e6, 1e-12).unwrap().first_zero.unwrap();
        assert!(
            ((tight - zero) / zero).abs() < 1e-8,
            "zero drifted: {zero} vs {tight}"
        );
    }

    #[test]
    fn dichotomy_is_sharp_near_the_ceiling() {
        // just below the ceiling: positive out to 1e6
        let below = integrate_phi(&problem(0.999, 1.0), 1e6, 1e-10).unwrap();
        assert!(below.first_zero.is_none());
        assert!(below.phi.iter().all(|&v| v > 0.0));
        // just above: the sign change exists, far out (the oscillation
        // wavelength in log r diverges like 1/sqrt(alpha - alpha_star))
        let above = integrate_phi(&problem(1.001, 1.0), 1e50, 1e-10).unwrap();
        let zero = above.first_zero.expect("sign change expected");
        assert!(zero > 1e6 && zero < 1e50);
    }

    #[test]
    fn vanishing_rate_parameter_freezes_solution() {
        let p = problem(1e-4, 1.0);
        let sol = integrate_phi(&p, 10.0, 1e-10).unwrap();
        for (&r, &v) in sol.r.iter().zip(&sol.phi) {
            if r <= 1.0 {
                assert!((v - 1.0).abs() <= 0.01, "phi({r}) = {v}");
            }
        }
    }

    #[test]
    fn tail_exponent_tracks_rate_parameter() {
        let e = exps6();
        let mut prev = 0.0;
        for alpha in [0.3, 0.5, 0.7, 0.9] {
            let p = problem(alpha, 1.0);
            let sol = integrate_phi(&p, 1e4, 1e-10).unwrap();
            let fit = sol.tail.unwrap();
            let k = e.k_of_alpha(alpha).unwrap();
            assert!(
                (fit.exponent - k).abs() <= 0.03 * k.max(0.3),
                "alpha={alpha}: fitted {} vs k={k}",
                fit.exponent
            );
            assert!(fit.exponent > prev, "tail exponent must increase in alpha");
            prev = fit.exponent;
        }
    }

    #[test]
    fn positive_regime_checks_hold_and_bound_is_sharp_at_unit_radius() {
        let p = problem(0.75, 1.0);
        let sol = integrate_phi(&p, 1e4, 1e-10).unwrap();
        let rep = check_positive_regime(&sol).unwrap();
        assert!(rep.pass(), "{rep:?}");
        // two-sided bound at r = 1: -phi_r/phi <= k·r/(r²+d) = 0.25
        let (phi, dphi) = sol.interpolate(1.0).unwrap();
        assert!(-dphi / phi <= 0.25 + 1e-9);
        assert!(-dphi / phi > 0.0);
    }

    #[test]
    fn synthetic_increasing_field_is_flagged_everywhere() {
        let p = problem(0.75, 1.0);
        let r: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let phi: Vec<f64> = r.iter().map(|&ri| 1.0 + ri).collect();
        let dphi = vec![1.0; r.len()];
        let sol = SpectralSolution {
            problem: p,
            r,
            phi,
            dphi,
            first_zero: None,
            tail: None,
        };
        let rep = check_positive_regime(&sol).unwrap();
        assert_eq!(rep.monotonicity_violations.len(), rep.checked_nodes);
        assert!(!rep.pass());
    }

    #[test]
    fn defect_forms_agree_within_discretization_error() {
        let p = problem(0.75, 1.0);
        let sol = integrate_phi(&p, 1e3, 1e-10).unwrap();
        let d1 = direct_defect(&sol);
        let d2 = selfadjoint_defect(&sol);
        let m1 = d1.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let m2 = d2.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        // both are finite-difference truncation residuals of the same
        // solution; they must be small and of the same order
        assert!(m1 < 5e-3, "direct defect too large: {m1}");
        assert!(m2 < 5e-3, "self-adjoint defect too large: {m2}");
        assert!(m1 / m2 < 30.0 && m2 / m1 < 30.0, "m1={m1}, m2={m2}");
    }

    #[test]
    fn solution_error_shrinks_monotonically_with_tolerance() {
        let p = problem(0.75, 1.0);
        let radii = [1.0, 10.0, 100.0];
        let (reference, _) = sample_phi_at(&p, &radii, 1e-12).unwrap();
        let mut prev = f64::INFINITY;
        for tol in [1e-5, 1e-7, 1e-9, 1e-11] {
            let (phis, _) = sample_phi_at(&p, &radii, tol).unwrap();
            let err = phis
                .iter()
                .zip(&reference)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < prev, "tol={tol}: err {err} !< {prev}");
            assert!(err <= 100.0 * tol, "tol={tol}: err {err}");
            prev = err;
        }
    }

    #[test]
    fn preconditions_are_enforced() {
        let e = exps6();
        assert!(SpectralProblem::new(0.0, 1.0, e).is_err());
        assert!(SpectralProblem::new(0.5, 0.0, e).is_err());
        let p = problem(0.5, 1.0);
        assert!(integrate_phi(&p, 5.0, 1e-10).is_err()); // r_max < 10 sqrt(d)
        assert!(integrate_phi(&p, 1e3, 1e-3).is_err()); // tol out of range
    }
}
