//! Clamped cubic spline interpolation of the attractant field.
//!
//! The taxis stage needs a globally C^2 representation of the chemical
//! concentration whose spatial derivative vanishes at both walls, matching
//! the zero-flux boundary condition of the field solver. We interpolate the
//! nodal data with a cubic spline in Hermite (slope) form: the unknown knot
//! slopes s_i satisfy the C^2 coupling
//!
//! ```text
//! s_{i-1} + 4 s_i + s_{i+1} = 3 (y_{i+1} - y_{i-1}) / h
//! ```
//!
//! for interior knots, with s_0 = s_N = 0 imposed. That is one tridiagonal
//! solve per fit; evaluation and differentiation are then local cubics.

use crate::error::Result;
use crate::euler::FeField;
use crate::tridiag::Tridiag;

#[derive(Debug, Clone)]
pub struct ClampedSpline {
    a: f64,
    h: f64,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl ClampedSpline {
    /// Fit exact samples y_0 .. y_N on the uniform knots of [a, b].
    pub fn from_values(a: f64, b: f64, ys: Vec<f64>) -> Result<Self> {
        assert!(ys.len() >= 3, "spline needs at least three knots");
        assert!(b > a);
        let n = ys.len() - 1;
        let h = (b - a) / n as f64;

        // Interior slopes from the C^2 system; end slopes are clamped to 0.
        let dim = n - 1;
        let mut sys = Tridiag::zeros(dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..dim {
            sys.diag[i] = 4.0;
            rhs[i] = 3.0 * (ys[i + 2] - ys[i]) / h;
        }
        for i in 0..dim - 1 {
            sys.lower[i] = 1.0;
            sys.upper[i] = 1.0;
        }
        let interior = sys.solve(&rhs, "spline slope system")?;

        let mut slopes = Vec::with_capacity(n + 1);
        slopes.push(0.0);
        slopes.extend(interior);
        slopes.push(0.0);
        Ok(ClampedSpline { a, h, ys, slopes })
    }

    /// Fit the knot values of a finite-element field (the boundary plateaus
    /// repeat the first and last coefficients, keeping the fit flat there).
    pub fn from_field(field: &FeField) -> Result<Self> {
        ClampedSpline::from_values(field.grid.a, field.grid.b, field.knot_values())
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.ys.len() - 1;
        let raw = ((x - self.a) / self.h).floor();
        let i = (raw.max(0.0) as usize).min(n - 1);
        let t = ((x - self.a - i as f64 * self.h) / self.h).clamp(0.0, 1.0);
        (i, t)
    }

    /// Spline value; queries outside the knot range clamp to the end values.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (s0, s1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + self.h * s0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + self.h * s1 * (t3 - t2)
    }

    /// First derivative; zero outside the knot range (the continuation is the
    /// constant end value).
    pub fn deriv(&self, x: f64) -> f64 {
        let n = self.ys.len() - 1;
        if x < self.a || x > self.a + n as f64 * self.h {
            return 0.0;
        }
        let (i, t) = self.locate(x);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (s0, s1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        (y0 * (6.0 * t2 - 6.0 * t)
            + self.h * s0 * (3.0 * t2 - 4.0 * t + 1.0)
            + y1 * (-6.0 * t2 + 6.0 * t)
            + self.h * s1 * (3.0 * t2 - 2.0 * t))
            / self.h
    }

    pub fn domain(&self) -> (f64, f64) {
        let n = self.ys.len() - 1;
        (self.a, self.a + n as f64 * self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::EulerGrid;

    #[test]
    fn constant_data_gives_constant_spline() {
        let s = ClampedSpline::from_values(0.0, 1.0, vec![5.0; 11]).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((s.eval(x) - 5.0).abs() <= 1e-13);
            assert!(s.deriv(x).abs() <= 1e-12);
        }
    }

    #[test]
    fn interpolates_knots_exactly() {
        let ys: Vec<f64> = (0..=8).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let s = ClampedSpline::from_values(-2.0, 2.0, ys.clone()).unwrap();
        for (i, y) in ys.iter().enumerate() {
            let x = -2.0 + i as f64 * 0.5;
            assert!((s.eval(x) - y).abs() <= 1e-12, "knot {i}");
        }
    }

    #[test]
    fn end_derivatives_are_clamped() {
        let ys: Vec<f64> = (0..=20).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let maxy = ys.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        let s = ClampedSpline::from_values(0.0, 4.0, ys).unwrap();
        assert!(s.deriv(0.0).abs() <= 1e-10 * maxy);
        assert!(s.deriv(4.0).abs() <= 1e-10 * maxy);
    }

    #[test]
    fn cosine_sweep_shows_fourth_order_values_third_order_slopes() {
        // f(x) = cos(pi x / (b-a)) on (0,2) has zero end slopes, so the
        // clamped fit converges at full rate: values O(h^4), slopes O(h^3).
        let f = |x: f64| (std::f64::consts::PI * x / 2.0).cos();
        let df = |x: f64| -(std::f64::consts::PI / 2.0) * (std::f64::consts::PI * x / 2.0).sin();
        let mut val_errs = Vec::new();
        let mut der_errs = Vec::new();
        for n in [16usize, 32, 64] {
            let ys: Vec<f64> = (0..=n).map(|i| f(2.0 * i as f64 / n as f64)).collect();
            let s = ClampedSpline::from_values(0.0, 2.0, ys).unwrap();
            let mut ev = 0.0_f64;
            let mut ed = 0.0_f64;
            for k in 0..(8 * n) {
                let x = 2.0 * (k as f64 + 0.5) / (8 * n) as f64;
                ev = ev.max((s.eval(x) - f(x)).abs());
                ed = ed.max((s.deriv(x) - df(x)).abs());
            }
            val_errs.push(ev);
            der_errs.push(ed);
        }
        println!("spline value errors: {val_errs:?}");
        println!("spline slope errors: {der_errs:?}");
        for w in val_errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.5, "value order {order}");
        }
        for w in der_errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 2.7, "slope order {order}");
        }
    }

    #[test]
    fn logistic_slope_at_origin() {
        // c0(x) = 1/(1+e^{-5x}) has derivative 5/4 at x = 0.
        let end = 0.5 / (0.0101_f64).powf(0.25);
        let n = 230;
        let ys: Vec<f64> = (0..=n)
            .map(|k| {
                let x = -end + 2.0 * end * k as f64 / n as f64;
                1.0 / (1.0 + (-5.0 * x).exp())
            })
            .collect();
        let s = ClampedSpline::from_values(-end, end, ys).unwrap();
        let got = s.deriv(0.0);
        assert!(
            (got - 1.25).abs() <= 0.02 * 1.25,
            "slope at 0 is {got}, want 1.25 within 2%"
        );
    }

    #[test]
    fn out_of_domain_queries_clamp() {
        let s = ClampedSpline::from_values(0.0, 1.0, vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(s.eval(-5.0), 1.0);
        assert_eq!(s.eval(7.0), 3.0);
        assert_eq!(s.deriv(-5.0), 0.0);
        assert_eq!(s.deriv(7.0), 0.0);
    }

    #[test]
    fn field_fit_keeps_plateaus_flat() {
        let g = EulerGrid::new(0.0, 1.0, 10);
        let field = FeField::from_fn(g, |x| x * x + 1.0);
        let s = ClampedSpline::from_field(&field).unwrap();
        // The first knot interval repeats the first coefficient, so the fit
        // stays near-constant there and the end slope is exactly clamped.
        assert!((s.eval(0.0) - field.coeffs[0]).abs() <= 1e-12);
        assert_eq!(s.deriv(0.0), 0.0);
        assert!((s.eval(0.5) - field.eval(0.5)).abs() <= 1e-2);
    }
}
