//! Numerical laboratory for the radial fast-diffusion equation near its
//! extinction time.
//!
//! After the self-similar rescaling, solutions of `u_τ = ∇·(u^{m-1}∇u)`
//! that vanish at a finite time `T` become solutions of a nonlinear
//! Fokker–Planck equation whose stationary states are the Barenblatt-type
//! profiles `V_D(x) = (D + |x|²)^{-1/(1-m)}`.  In the regime `n > 2`,
//! `m < (n-4)/(n-2)`, perturbations with a spatial tail `c·r^{-l}`
//! relax to `V_D` at the exponential rate `(l-μ-2)(n-l)`, where
//! `μ = 2/(1-m)`; the rate saturates at the universal ceiling
//! `α_* = (n-μ-2)²/4`.
//!
//! The crate provides the pieces needed to observe and cross-check this
//! at desk scale:
//!
//! * [`params`] — exponent algebra, profile family, and the change of
//!   variables between original and rescaled frames;
//! * [`spectral`] — the linearized radial problem
//!   `(r²+d)(φ'' + (n-1)/r φ') - μ r φ' + α φ = 0`, its positivity
//!   dichotomy in `α`, and closed-form comparison functions;
//! * [`barrier`] — the parabolic operator on radial fields, the reduced
//!   operator acting on barrier shapes, and grid-checked sign
//!   certificates for the sub/supersolution families;
//! * [`solver`] — an implicit finite-volume solver for the rescaled
//!   equation in the quadratic-pressure unknown `ζ = v^{-2/μ} - r²`;
//! * [`rate`] — experiment drivers that fit observed decay rates and
//!   compare them with the predicted continuum;
//! * [`io`] — flat key=value run configs, deterministic manifests, and
//!   CSV emitters used by the `fdlab` binary.

pub mod barrier;
pub mod io;
pub mod params;
pub mod rate;
pub mod solver;
pub mod spectral;

pub(crate) mod util {
    /// Formats with 12 significant digits, trailing zeros trimmed,
    /// locale-independent.  Plain decimal inside a sane exponent range,
    /// normalized scientific notation outside it.
    pub(crate) fn fmt_sig(x: f64) -> String {
        if x.is_nan() {
            return "nan".to_string();
        }
        if x.is_infinite() {
            return if x > 0.0 { "inf" } else { "-inf" }.to_string();
        }
        if x == 0.0 {
            return "0".to_string();
        }
        let neg = x < 0.0;
        let formatted = format!("{:.11e}", x.abs());
        let (mant, exp) = formatted.split_once('e').expect("exponential format");
        let exp: i32 = exp.parse().expect("exponent");
        let digits: String = mant.chars().filter(|c| *c != '.').collect();
        let digits = digits.trim_end_matches('0');
        let digits = if digits.is_empty() { "0" } else { digits };
        let body = if exp < -9 || exp > 15 {
            if digits.len() == 1 {
                format!("{digits}e{exp}")
            } else {
                format!("{}.{}e{exp}", &digits[..1], &digits[1..])
            }
        } else {
            let point = exp + 1; // digits before the decimal point
            let nd = digits.len() as i32;
            if point <= 0 {
                format!("0.{}{}", "0".repeat((-point) as usize), digits)
            } else if point >= nd {
                format!("{}{}", digits, "0".repeat((point - nd) as usize))
            } else {
                format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
            }
        };
        if neg {
            format!("-{body}")
        } else {
            body
        }
    }

    /// Ordinary least squares line through `(xs, ys)`.
    /// Returns `(slope, intercept, rms_residual)`, or `None` when the
    /// data is degenerate.
    pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
        let n = xs.len();
        if n < 2 || n != ys.len() {
            return None;
        }
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let icept = my - slope * mx;
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let e = y - (slope * x + icept);
                e * e
            })
            .sum();
        Some((slope, icept, (rss / nf).sqrt()))
    }
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter fell outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Profile evaluated at its singularity (D = 0, r = 0).
    #[error("singular profile: D = 0 requires r > 0")]
    SingularProfile,

    /// Adaptive ODE integration could not proceed.
    #[error("integration failure: {msg} (last reliable radius {last_r:e})")]
    IntegrationFailure { last_r: f64, msg: String },

    /// Implicit time step shrank below the representable floor.
    #[error("time step underflow at t={t:e} (dt={dt:e}); {detail}")]
    DtUnderflow { t: f64, dt: f64, detail: String },

    /// Generic numerical failure (divergence, degenerate input, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
