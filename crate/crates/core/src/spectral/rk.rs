//! Embedded Dormand–Prince 5(4) stepper for two-component systems.
//!
//! Used to integrate the linearized radial problem in the logarithmic
//! variable; the problem is smooth and non-stiff there, so an explicit
//! adaptive pair with FSAL reuse is the right tool.

use crate::{Error, Result};

pub(crate) type State2 = [f64; 2];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// y5 - y4 error weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One adaptive integrator instance.  `s` is the independent variable.
pub(crate) struct Dopri5<F> {
    pub f: F,
    pub s: f64,
    pub y: State2,
    pub h: f64,
    pub rtol: f64,
    pub h_max: f64,
    k1: Option<State2>,
}

impl<F: Fn(f64, State2) -> State2> Dopri5<F> {
    pub fn new(f: F, s0: f64, y0: State2, rtol: f64, h_max: f64) -> Self {
        Dopri5 {
            f,
            s: s0,
            y: y0,
            h: (1e-4f64).min(h_max),
            rtol,
            h_max,
            k1: None,
        }
    }

    /// Advances by one accepted step, clamped so `s` never passes
    /// `target`.  Returns the step actually taken.
    pub fn step_toward(&mut self, target: f64) -> Result<f64> {
        debug_assert!(target > self.s);
        let natural = self.h.min(self.h_max);
        let clamped = target - self.s < natural;
        let mut err_limited = false;
        let mut h = natural.min(target - self.s);
        loop {
            if h < 1e-14 * self.s.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    last_r: self.s.exp(),
                    msg: "step size underflow".to_string(),
                });
            }
            let k1 = match self.k1 {
                Some(k) => k,
                None => (self.f)(self.s, self.y),
            };
            let y = self.y;
            let s = self.s;
            let yk = |c: &[(f64, State2)]| {
                let mut out = y;
                for (w, k) in c {
                    out[0] += h * w * k[0];
                    out[1] += h * w * k[1];
                }
                out
            };
            let k2 = (self.f)(s + 0.2 * h, yk(&[(A21, k1)]));
            let k3 = (self.f)(s + 0.3 * h, yk(&[(A31, k1), (A32, k2)]));
            let k4 = (self.f)(s + 0.8 * h, yk(&[(A41, k1), (A42, k2), (A43, k3)]));
            let k5 = (self.f)(
                s + 8.0 / 9.0 * h,
                yk(&[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]),
            );
            let k6 = (self.f)(
                s + h,
                yk(&[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]),
            );
            let y5 = yk(&[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
            let k7 = (self.f)(s + h, y5);

            let mut err = 0.0f64;
            for i in 0..2 {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let scale = self.rtol * self.y[i].abs().max(y5[i].abs()).max(1e-290);
                err = err.max((e / scale).abs());
            }
            if err <= 1.0 {
                self.s = s + h;
                self.y = y5;
                self.k1 = Some(k7); // FSAL
                // a step clamped by the target says nothing about the
                // error-optimal size; keep the controller state then
                if !clamped || err_limited {
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    self.h = (h * grow).min(self.h_max);
                }
                return Ok(h);
            }
            err_limited = true;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }

    /// Integrates until `s = target` (snapped once the gap is below
    /// resolution, so clamped steps cannot underflow).
    pub fn run_to(&mut self, target: f64) -> Result<()> {
        let eps = 1e-12 * target.abs().max(1.0);
        while self.s < target - eps {
            self.step_toward(target)?;
        }
        self.s = target;
        self.k1 = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_harmonic_oscillator() {
        let f = |_s: f64, y: State2| [y[1], -y[0]];
        let mut ode = Dopri5::new(f, 0.0, [1.0, 0.0], 1e-10, 0.5);
        ode.run_to(10.0).unwrap();
        assert!((ode.y[0] - 10.0f64.cos()).abs() < 1e-8);
        assert!((ode.y[1] + 10.0f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let f = |_s: f64, y: State2| [y[1], -y[0]];
        let mut errs = Vec::new();
        for rtol in [1e-4, 1e-7, 1e-10] {
            let mut ode = Dopri5::new(f, 0.0, [1.0, 0.0], rtol, 0.5);
            ode.run_to(20.0).unwrap();
            errs.push((ode.y[0] - 20.0f64.cos()).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
