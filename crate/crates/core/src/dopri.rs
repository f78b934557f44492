//! Adaptive Dormand-Prince 5(4) integrator with FSAL and step-size control.

use std::ops::ControlFlow;

use nalgebra::DVector;

use crate::scalar::Real;

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integration failure, wrapping errors raised by the right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegrationError<E> {
    Rhs(E),
    StepSizeUnderflow { tau: f64 },
    NonFinite { tau: f64 },
    TooManySteps { tau: f64 },
}

/// Solution point together with its derivative (reused as the first stage).
#[derive(Debug, Clone)]
pub struct IvpState<T: Real> {
    pub tau: T,
    pub y: DVector<T>,
    pub dy: DVector<T>,
}

/// Why [`DormandPrince::advance`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Reached,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct DormandPrince<T: Real> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
    h: Option<T>,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl<T: Real> DormandPrince<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        DormandPrince {
            rtol,
            atol,
            max_steps: 1_000_000,
            h: None,
            accepted: 0,
            rejected: 0,
            evaluations: 0,
        }
    }

    fn error_norm(&self, y: &DVector<T>, y_new: &DVector<T>, err: &DVector<T>) -> T {
        let len = T::count(y.len().max(1));
        let sum = y
            .iter()
            .zip(y_new.iter())
            .zip(err.iter())
            .fold(T::zero(), |acc, ((a, b), e)| {
                let sc = self.atol + self.rtol * a.abs().max(b.abs());
                let r = *e / sc;
                acc + r * r
            });
        (sum / len).sqrt()
    }

    fn initial_step<F, E>(
        &mut self,
        f: &mut F,
        s: &IvpState<T>,
        span: T,
    ) -> Result<T, IntegrationError<E>>
    where
        F: FnMut(T, &DVector<T>) -> Result<DVector<T>, E>,
    {
        let scale = |v: &DVector<T>| {
            let len = T::count(v.len().max(1));
            let sum = v.iter().zip(s.y.iter()).fold(T::zero(), |acc, (x, y)| {
                let r = *x / (self.atol + self.rtol * y.abs());
                acc + r * r
            });
            (sum / len).sqrt()
        };
        let d0 = scale(&s.y);
        let d1 = scale(&s.dy);
        let tiny = T::lit(1e-5);
        let h0 = if d0 < tiny || d1 < tiny {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * d0 / d1
        };
        let h0 = h0.min(span);
        let y1 = &s.y + &s.dy * h0;
        let f1 = f(s.tau + h0, &y1).map_err(IntegrationError::Rhs)?;
        self.evaluations += 1;
        let d2 = scale(&(f1 - &s.dy)) / h0;
        let h1 = if d1.max(d2) <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.2))
        };
        Ok((h0 * T::lit(100.0)).min(h1).min(span))
    }

    /// Advances `s` to `target`, adapting the step. After every accepted step
    /// `on_accept` may interrupt the integration.
    pub fn advance<F, E, O>(
        &mut self,
        f: &mut F,
        s: &mut IvpState<T>,
        target: T,
        mut on_accept: O,
    ) -> Result<Advance, IntegrationError<E>>
    where
        F: FnMut(T, &DVector<T>) -> Result<DVector<T>, E>,
        O: FnMut(&IvpState<T>) -> ControlFlow<()>,
    {
        let span = target - s.tau;
        if span <= T::zero() {
            return Ok(Advance::Reached);
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, s, span)?,
        };
        let lit = T::lit;
        let mut steps = 0usize;
        loop {
            let remaining = target - s.tau;
            if remaining <= T::zero() {
                return Ok(Advance::Reached);
            }
            let min_h = T::default_epsilon() * lit(16.0) * s.tau.abs().max(T::one());
            if h < min_h {
                return Err(IntegrationError::StepSizeUnderflow {
                    tau: s.tau.as_f64(),
                });
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(IntegrationError::TooManySteps {
                    tau: s.tau.as_f64(),
                });
            }
            let last = h >= remaining;
            let step = if last { remaining } else { h };

            let y = &s.y;
            let k1 = &s.dy;
            let mut stage = |c: f64, y_stage: DVector<T>| {
                self.evaluations += 1;
                f(s.tau + lit(c) * step, &y_stage).map_err(IntegrationError::Rhs)
            };
            let k2 = stage(C2, y + k1 * (lit(A21) * step))?;
            let k3 = stage(C3, y + (k1 * lit(A31) + &k2 * lit(A32)) * step)?;
            let k4 = stage(
                C4,
                y + (k1 * lit(A41) + &k2 * lit(A42) + &k3 * lit(A43)) * step,
            )?;
            let k5 = stage(
                C5,
                y + (k1 * lit(A51) + &k2 * lit(A52) + &k3 * lit(A53) + &k4 * lit(A54)) * step,
            )?;
            let k6 = stage(
                1.0,
                y + (k1 * lit(A61)
                    + &k2 * lit(A62)
                    + &k3 * lit(A63)
                    + &k4 * lit(A64)
                    + &k5 * lit(A65))
                    * step,
            )?;
            let y_new = y
                + (k1 * lit(A71)
                    + &k3 * lit(A73)
                    + &k4 * lit(A74)
                    + &k5 * lit(A75)
                    + &k6 * lit(A76))
                    * step;
            let k7 = stage(1.0, y_new.clone())?;
            let err = (k1 * lit(E1)
                + &k3 * lit(E3)
                + &k4 * lit(E4)
                + &k5 * lit(E5)
                + &k6 * lit(E6)
                + &k7 * lit(E7))
                * step;

            let norm = self.error_norm(y, &y_new, &err);
            if !norm.finite() || !y_new.iter().all(|v| v.finite()) {
                // shrink hard and retry; give up once the step underflows
                self.rejected += 1;
                h = step * lit(MIN_FACTOR);
                if !y_new.iter().all(|v| v.finite()) && h < min_h {
                    return Err(IntegrationError::NonFinite {
                        tau: s.tau.as_f64(),
                    });
                }
                continue;
            }
            let factor = if norm == T::zero() {
                lit(MAX_FACTOR)
            } else {
                (lit(SAFETY) * norm.powf(lit(-0.2))).clamp(lit(MIN_FACTOR), lit(MAX_FACTOR))
            };
            if norm <= T::one() {
                self.accepted += 1;
                s.tau = if last { target } else { s.tau + step };
                s.y = y_new;
                s.dy = k7;
                // a clipped final step should not shrink the next one
                h = if last {
                    h.max(step * factor)
                } else {
                    step * factor
                };
                self.h = Some(h);
                if let ControlFlow::Break(()) = on_accept(s) {
                    return Ok(Advance::Interrupted);
                }
                if last {
                    return Ok(Advance::Reached);
                }
            } else {
                self.rejected += 1;
                h = step * factor.min(T::one());
            }
        }
    }
}
