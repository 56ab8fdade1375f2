//! Chebyshev-Lobatto collocation on the moment interval [-1, 1].
//!
//! Nodes are ordered ascending with `mu[0] = -1` and `mu[n] = 1`. The
//! differentiation rule is the dense collocation derivative of the degree-n
//! interpolant; quadrature is Clenshaw-Curtis, exact for polynomials of
//! degree <= n. Smooth circle-invariant functions on the sphere are smooth
//! functions of mu up to the endpoints, so nothing here needs pole charts.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{EmError, Result};

/// Collocation nodes, differentiation rule and quadrature weights.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    diff: DMatrix<f64>,
    quad_weights: Vec<f64>,
}

impl Grid {
    /// Minimal polynomial degree accepted by [`Grid::new`].
    pub const MIN_DEGREE: usize = 8;

    /// Build the degree-`n` grid (`n + 1` nodes).
    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_DEGREE {
            return Err(EmError::GridTooSmall {
                got: n,
                min: Self::MIN_DEGREE,
            });
        }
        // mu_j = -cos(j pi / n), written with sin for exact symmetry.
        let nodes: Vec<f64> = (0..=n)
            .map(|j| (PI * (2.0 * j as f64 - n as f64) / (2.0 * n as f64)).sin())
            .collect();

        let mut bary = vec![1.0; n + 1];
        for (j, b) in bary.iter_mut().enumerate() {
            if j % 2 == 1 {
                *b = -1.0;
            }
        }
        bary[0] *= 0.5;
        bary[n] *= 0.5;

        let mut diff = DMatrix::zeros(n + 1, n + 1);
        for i in 0..=n {
            let mut row_sum = 0.0;
            for j in 0..=n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[(i, j)] = v;
                    row_sum += v;
                }
            }
            // The derivative of a constant must vanish identically.
            diff[(i, i)] = -row_sum;
        }

        let quad_weights = clenshaw_curtis_weights(n);

        Ok(Self {
            n,
            nodes,
            bary,
            diff,
            quad_weights,
        })
    }

    /// Polynomial degree; the grid has `n + 1` nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn diff_op(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Nodal values of the derivative of the interpolant of `f`.
    pub fn deriv(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len(), "field length mismatch");
        let mut out = vec![0.0; self.len()];
        for i in 0..self.len() {
            let mut acc = 0.0;
            for j in 0..self.len() {
                acc += self.diff[(i, j)] * f[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Quadrature of `f` against d(mu) over [-1, 1].
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field length mismatch");
        self.quad_weights
            .iter()
            .zip(f)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Antiderivative F of the interpolant with F(-1) = 0, via the
    /// coefficient integration recurrence.
    pub fn antiderivative(&self, f: &[f64]) -> Vec<f64> {
        let a = self.to_cheb(f);
        let n = self.n;
        let mut b = vec![0.0; n + 2];
        b[1] = a[0] - if n >= 2 { a[2] / 2.0 } else { 0.0 };
        for k in 2..=n {
            let next = if k < n { a[k + 1] } else { 0.0 };
            b[k] = (a[k - 1] - next) / (2.0 * k as f64);
        }
        b[n + 1] = a[n] / (2.0 * (n + 1) as f64);
        // Fix the constant so that F(-1) = 0, using T_k(-1) = (-1)^k.
        let mut at_minus_one = 0.0;
        for (k, bk) in b.iter().enumerate().skip(1) {
            at_minus_one += bk * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        b[0] = -at_minus_one;
        self.nodes.iter().map(|&x| eval_cheb(&b, x)).collect()
    }

    /// Chebyshev coefficients of the interpolant of nodal values `f`.
    pub fn to_cheb(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len(), "field length mismatch");
        let n = self.n;
        // Nodes ascend, so f[n - i] sits at the standard x_i = cos(i pi / n).
        let mut a = vec![0.0; n + 1];
        for (k, ak) in a.iter_mut().enumerate() {
            let mut s = 0.5
                * (f[n] + f[0] * (PI * k as f64).cos());
            for i in 1..n {
                s += f[n - i] * (PI * (k * i) as f64 / n as f64).cos();
            }
            *ak = 2.0 * s / n as f64;
        }
        a[0] /= 2.0;
        a[n] /= 2.0;
        a
    }

    /// Barycentric evaluation of the interpolant at an arbitrary x in [-1, 1].
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        assert_eq!(f.len(), self.len(), "field length mismatch");
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.len() {
            let d = x - self.nodes[j];
            if d.abs() < 1e-300 {
                return f[j];
            }
            let q = self.bary[j] / d;
            num += q * f[j];
            den += q;
        }
        num / den
    }
}

/// Clenshaw-Curtis weights for the Lobatto nodes of degree n.
fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = PI * j as f64 / n as f64;
        let mut s = 0.0;
        for k in 1..=(n / 2) {
            let b = if 2 * k == n { 1.0 } else { 2.0 };
            s += b * (2.0 * k as f64 * theta).cos() / ((4 * k * k - 1) as f64);
        }
        *wj = (1.0 - s) * 2.0 / n as f64;
    }
    w[0] /= 2.0;
    w[n] /= 2.0;
    w
}

/// Clenshaw evaluation of a Chebyshev series at x.
pub(crate) fn eval_cheb(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let next = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = next;
    }
    x * b1 - b2 + coeffs[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(matches!(
            Grid::new(7),
            Err(EmError::GridTooSmall { got: 7, min: 8 })
        ));
    }

    #[test]
    fn quadrature_moments() {
        for n in [16, 48, 64] {
            let g = Grid::new(n).unwrap();
            let ones = vec![1.0; g.len()];
            assert!((g.integrate(&ones) - 2.0).abs() < 1e-12);
            let mu2: Vec<f64> = g.nodes().iter().map(|m| m * m).collect();
            assert!((g.integrate(&mu2) - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_exponential_converges() {
        let exact = std::f64::consts::E - 1.0 / std::f64::consts::E;
        for n in [8, 64] {
            let g = Grid::new(n).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|m| m.exp()).collect();
            assert!(
                (g.integrate(&f) - exact).abs() < 1e-8,
                "n = {n}: {:.3e}",
                (g.integrate(&f) - exact).abs()
            );
        }
    }

    #[test]
    fn differentiation_on_low_degree_polynomials() {
        let g = Grid::new(16).unwrap();
        let ones = vec![1.0; g.len()];
        let d1 = g.deriv(&ones);
        assert!(d1.iter().all(|v| v.abs() < 1e-12));

        let mu2: Vec<f64> = g.nodes().iter().map(|m| m * m).collect();
        let d2 = g.deriv(&mu2);
        for (d, m) in d2.iter().zip(g.nodes()) {
            assert!((d - 2.0 * m).abs() < 1e-10);
        }

        let mu3: Vec<f64> = g.nodes().iter().map(|m| m * m * m).collect();
        let d3 = g.deriv(&mu3);
        for (d, m) in d3.iter().zip(g.nodes()) {
            assert!((d - 3.0 * m * m).abs() < 1e-9);
        }
    }

    #[test]
    fn antiderivative_of_polynomial() {
        let g = Grid::new(16).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|m| 3.0 * m * m).collect();
        let big_f = g.antiderivative(&f);
        for (v, m) in big_f.iter().zip(g.nodes()) {
            // F(mu) = mu^3 + 1 so that F(-1) = 0
            assert!((v - (m.powi(3) + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_reproduces_interpolant() {
        let g = Grid::new(24).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|m| (2.0 * m).sin()).collect();
        // at nodes
        for (j, m) in g.nodes().iter().enumerate() {
            assert_eq!(g.interpolate(&f, *m), f[j]);
        }
        // between nodes, spectral accuracy
        for x in [-0.9713, -0.311, 0.0521, 0.77731] {
            assert!((g.interpolate(&f, x) - (2.0 * x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn cheb_roundtrip() {
        let g = Grid::new(20).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|m| (m + 0.3).cos()).collect();
        let a = g.to_cheb(&f);
        for (&x, &v) in g.nodes().iter().zip(&f) {
            assert!((eval_cheb(&a, x) - v).abs() < 1e-13);
        }
    }
}
