use crate::error::{Error, Result};
use crate::graph::EdgeId;

/// Closed-form positive solutions of `u''/(2m) + u^{p-1} = u` on an N-star.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonSpec {
    pub p: f64,
    pub m: f64,
    pub n: usize,
    /// Shift of the even-N family; must be zero for odd N.
    pub a: f64,
}

impl SolitonSpec {
    pub fn new(p: f64, m: f64, n: usize, a: f64) -> Result<Self> {
        let s = Self { p, m, n, a };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(Error::Parameter(format!("need p > 2, got {}", self.p)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Parameter(format!("need m > 0, got {}", self.m)));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("need N >= 2, got {}", self.n)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Parameter(format!("shift must be nonnegative, got {}", self.a)));
        }
        if self.n % 2 == 1 && self.a != 0.0 {
            return Err(Error::Parameter(format!(
                "odd N = {} admits only the unshifted profile (a = {})",
                self.n, self.a
            )));
        }
        Ok(())
    }

    /// `c_p = (p/2)^{1/(p-2)}`.
    pub fn c_p(&self) -> f64 {
        (0.5 * self.p).powf(1.0 / (self.p - 2.0))
    }

    /// `gamma_p = 2/(p-2)`.
    pub fn gamma_p(&self) -> f64 {
        2.0 / (self.p - 2.0)
    }

    /// `delta_{p,m} = sqrt(2m)/gamma_p`.
    pub fn delta(&self) -> f64 {
        (2.0 * self.m).sqrt() / self.gamma_p()
    }

    /// Line profile `c_p sech^{gamma_p}(delta t)`.
    pub fn profile(&self, t: f64) -> f64 {
        self.c_p() * sech(self.delta() * t).powf(self.gamma_p())
    }

    pub fn profile_derivative(&self, t: f64) -> f64 {
        let (g, d) = (self.gamma_p(), self.delta());
        let z = d * t;
        -self.c_p() * g * d * sech(z).powf(g) * z.tanh()
    }

    pub fn profile_second_derivative(&self, t: f64) -> f64 {
        let (g, d) = (self.gamma_p(), self.delta());
        let z = d * t;
        let s = sech(z);
        let th = z.tanh();
        self.c_p() * g * d * d * s.powf(g) * (g * th * th - s * s)
    }

    fn offset(&self, e: EdgeId) -> f64 {
        if self.n % 2 == 1 || self.a == 0.0 {
            0.0
        } else if e < self.n / 2 {
            -self.a
        } else {
            self.a
        }
    }

    /// `U_e(x)` for `x >= 0`.
    pub fn eval(&self, e: EdgeId, x: f64) -> Result<f64> {
        self.check(e, x)?;
        Ok(self.profile(x + self.offset(e)))
    }

    pub fn eval_derivative(&self, e: EdgeId, x: f64) -> Result<f64> {
        self.check(e, x)?;
        Ok(self.profile_derivative(x + self.offset(e)))
    }

    pub fn eval_second_derivative(&self, e: EdgeId, x: f64) -> Result<f64> {
        self.check(e, x)?;
        Ok(self.profile_second_derivative(x + self.offset(e)))
    }

    fn check(&self, e: EdgeId, x: f64) -> Result<()> {
        self.validate()?;
        if e >= self.n {
            return Err(Error::UnknownEdge(e));
        }
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("edge coordinate must be >= 0, got {x}")));
        }
        Ok(())
    }
}

fn sech(x: f64) -> f64 {
    // stays finite for large |x|
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants() {
        let s = SolitonSpec::new(4.0, 0.5, 3, 0.0).unwrap();
        assert_relative_eq!(s.c_p(), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(s.gamma_p(), 1.0);
        assert_relative_eq!(s.delta(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.eval(1, 0.0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let s6 = SolitonSpec::new(6.0, 0.5, 3, 0.0).unwrap();
        assert_eq!(s6.gamma_p(), 0.5);
        assert_relative_eq!(s6.c_p(), 3f64.powf(0.25), epsilon = 1e-15);
        assert_relative_eq!(s6.delta(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn parity_rule() {
        assert!(SolitonSpec::new(4.0, 0.5, 3, 1.0).is_err());
        assert!(SolitonSpec::new(4.0, 0.5, 4, 1.0).is_ok());
        assert!(SolitonSpec::new(2.0, 0.5, 4, 0.0).is_err());
    }

    #[test]
    fn shifted_family_is_continuous() {
        let s = SolitonSpec::new(4.0, 1.0, 4, 1.0).unwrap();
        let v: Vec<f64> = (0..4).map(|e| s.eval(e, 0.0).unwrap()).collect();
        assert!(v.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
        let flux: f64 = (0..4).map(|e| s.eval_derivative(e, 0.0).unwrap()).sum();
        assert!(flux.abs() < 1e-14);
    }

    #[test]
    fn solves_the_stationary_equation() {
        for (p, m) in [(4.0, 0.5), (6.0, 0.5), (3.0, 1.3), (5.5, 0.2)] {
            let s = SolitonSpec::new(p, m, 3, 0.0).unwrap();
            for k in 0..40 {
                let x = 0.1 * k as f64;
                let u = s.profile(x);
                let r = s.profile_second_derivative(x) / (2.0 * m) + u.powf(p - 1.0) - u;
                assert!(r.abs() < 1e-10, "p={p} x={x} r={r}");
                // independent check of the derivative formulas
                let fd = (s.profile(x + 1e-5) - s.profile(x - 1e-5)) / 2e-5;
                assert!((fd - s.profile_derivative(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn positive_far_out() {
        let s = SolitonSpec::new(4.0, 0.5, 3, 0.0).unwrap();
        assert!(s.eval(0, 700.0).unwrap() > 0.0);
        assert!(s.eval(0, -1.0).is_err());
    }
}
