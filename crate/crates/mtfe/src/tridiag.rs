//! Tridiagonal systems and the Thomas algorithm.
//!
//! Both the spline fit and the implicit transport stage reduce to systems
//! with bandwidth one, so a dedicated O(n) solver is worth having instead of
//! a general dense factorization.

use crate::error::{Error, Result};

/// A square tridiagonal matrix of dimension `n`, stored as three bands.
#[derive(Debug, Clone)]
pub struct Tridiag {
    /// Sub-diagonal, length `n - 1`; `lower[i]` multiplies `x[i]` in row `i + 1`.
    pub lower: Vec<f64>,
    /// Main diagonal, length `n`.
    pub diag: Vec<f64>,
    /// Super-diagonal, length `n - 1`; `upper[i]` multiplies `x[i + 1]` in row `i`.
    pub upper: Vec<f64>,
}

impl Tridiag {
    /// Matrix of dimension `n` with all bands zero.
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "tridiagonal dimension must be positive");
        Tridiag {
            lower: vec![0.0; n - 1],
            diag: vec![0.0; n],
            upper: vec![0.0; n - 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Matrix-vector product `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n, "dimension mismatch in tridiagonal product");
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// `self + scale * other`, all three bands combined entrywise.
    pub fn scaled_add(&self, scale: f64, other: &Tridiag) -> Tridiag {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in band combine");
        let comb = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + scale * y).collect()
        };
        Tridiag {
            lower: comb(&self.lower, &other.lower),
            diag: comb(&self.diag, &other.diag),
            upper: comb(&self.upper, &other.upper),
        }
    }

    /// Solve `A x = rhs` by the Thomas algorithm (no pivoting). Suitable for
    /// the diagonally dominant systems produced by the spline fit and the
    /// implicit stages; a vanishing pivot is reported as a singular system.
    pub fn solve(&self, rhs: &[f64], context: &'static str) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(rhs.len(), n, "dimension mismatch in tridiagonal solve");

        // Forward sweep with scratch copies of the modified coefficients.
        let mut c_star = vec![0.0; n];
        let mut d_star = vec![0.0; n];
        let mut denom = self.diag[0];
        if !denom.is_finite() || denom.abs() < 1e-300 {
            return Err(Error::SingularSystem { context });
        }
        if n > 1 {
            c_star[0] = self.upper[0] / denom;
        }
        d_star[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i - 1] * c_star[i - 1];
            if !denom.is_finite() || denom.abs() < 1e-300 {
                return Err(Error::SingularSystem { context });
            }
            if i + 1 < n {
                c_star[i] = self.upper[i] / denom;
            }
            d_star[i] = (rhs[i] - self.lower[i - 1] * d_star[i - 1]) / denom;
        }

        // Back substitution in place.
        let mut x = d_star;
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c_star[i] * next;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_identity() {
        let mut a = Tridiag::zeros(4);
        a.diag = vec![1.0; 4];
        let rhs = vec![3.0, -1.0, 0.5, 2.0];
        let x = a.solve(&rhs, "test").unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn solves_known_system() {
        // [2 1 0; 1 2 1; 0 1 2] x = [4, 8, 8]  =>  x = [1, 2, 3]
        let a = Tridiag {
            lower: vec![1.0, 1.0],
            diag: vec![2.0, 2.0, 2.0],
            upper: vec![1.0, 1.0],
        };
        let x = a.solve(&[4.0, 8.0, 8.0], "test").unwrap();
        for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14, "got {got}, want {want}");
        }
    }

    #[test]
    fn random_diagonally_dominant_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7161);
        for trial in 0..200 {
            let n = rng.gen_range(1..60);
            let mut a = Tridiag::zeros(n);
            for i in 0..n - 1 {
                a.lower[i] = rng.gen_range(-1.0..1.0);
                a.upper[i] = rng.gen_range(-1.0..1.0);
            }
            for i in 0..n {
                // Strict dominance keeps the unpivoted sweep stable.
                let off = (if i > 0 { a.lower[i - 1].abs() } else { 0.0 })
                    + (if i + 1 < n { a.upper[i].abs() } else { 0.0 });
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                a.diag[i] = sign * (off + rng.gen_range(0.5..2.0));
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let rhs = a.mul_vec(&x_true);
            let x = a.solve(&rhs, "test").unwrap();
            let err = x
                .iter()
                .zip(&x_true)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            assert!(err < 1e-10, "trial {trial}: max error {err:e}");
        }
    }

    #[test]
    fn reports_singular_pivot() {
        let a = Tridiag {
            lower: vec![1.0],
            diag: vec![1.0, 1.0], // second pivot becomes 1 - 1*1 = 0
            upper: vec![1.0],
        };
        let err = a.solve(&[1.0, 1.0], "pivot test").unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn scaled_add_combines_bands() {
        let a = Tridiag {
            lower: vec![1.0],
            diag: vec![2.0, 2.0],
            upper: vec![3.0],
        };
        let b = Tridiag {
            lower: vec![10.0],
            diag: vec![20.0, 20.0],
            upper: vec![30.0],
        };
        let c = a.scaled_add(0.5, &b);
        assert_eq!(c.lower, vec![6.0]);
        assert_eq!(c.diag, vec![12.0, 12.0]);
        assert_eq!(c.upper, vec![18.0]);
    }
}
