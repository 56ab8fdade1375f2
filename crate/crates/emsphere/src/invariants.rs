//! The holomorphic obstruction invariant and the twisted eigenspace.
//!
//! For the rotation field X with Hamiltonian u, the invariant pairs the
//! weighted Ricci defect against X:
//!
//! ```text
//!   F(X) = int X(h + sigma(u)) e^{-sigma(u)} omega
//!        = 2 pi int -(i/2) psi (h' + sigma_dot) e^{-sigma} d mu,
//! ```
//!
//! purely imaginary here because X applied to a real invariant function
//! is. The value does not depend on the representative metric in the
//! class, vanishes exactly when the obstruction integral does, and reduces
//! to the classical Futaki invariant for the trivial weight. The
//! metric-independence mechanism is the constancy of the certificate
//! field `q = v + Lap_sigma v + X(h + sigma(u))` with `v = -i u`, which is
//! holomorphic, hence constant on the sphere.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{EmError, Result};
use crate::geometry::{apply_potential, MetricState, Potential};
use crate::sigma::SigmaSpec;

/// The weighted obstruction invariant evaluated on a canonical state.
pub fn futaki_invariant(state: &MetricState, sigma: &SigmaSpec) -> Complex64 {
    let g = state.grid();
    let dh = g.deriv(state.h());
    let integrand: Vec<f64> = (0..g.len())
        .map(|j| {
            let u = state.u()[j];
            -0.5 * state.psi()[j] * (dh[j] + sigma.d1(u)) * (-sigma.eval(u)).exp()
        })
        .collect();
    Complex64::new(0.0, state.integrate_da(&integrand))
}

/// Classical-route evaluation at the trivial weight, integrating by parts
/// so that h enters undifferentiated: `i pi int psi' h d mu`.
pub fn futaki_classical_route(state: &MetricState) -> Complex64 {
    let g = state.grid();
    let dpsi = g.deriv(state.psi());
    let integrand: Vec<f64> = dpsi.iter().zip(state.h()).map(|(dp, h)| dp * h).collect();
    Complex64::new(0.0, 0.5 * state.integrate_da(&integrand))
}

/// Metric-independence report for the invariant.
#[derive(Debug, Clone)]
pub struct FutakiReport {
    /// Value at the reference state.
    pub value: Complex64,
    /// Values across the deformed metrics (reference first).
    pub per_metric: Vec<Complex64>,
    pub max_pairwise_deviation: f64,
    /// Pass iff the deviation is below 1e-7 * (1 + |value|).
    pub pass: bool,
    /// Obstruction integral of the same weight, for correlation.
    pub obstruction_correlation: f64,
}

/// Evaluate the invariant at the reference and at the canonical state of
/// each potential; the spread across metrics is the independence defect.
pub fn futaki_independence_check(
    reference: &MetricState,
    sigma: &SigmaSpec,
    potentials: &[Vec<f64>],
) -> Result<FutakiReport> {
    let mut per_metric = vec![futaki_invariant(reference, sigma)];
    for phi in potentials {
        let state = apply_potential(&Potential::new(reference.clone(), phi.clone()))?;
        per_metric.push(futaki_invariant(&state, sigma));
    }
    let mut max_dev = 0.0_f64;
    for a in &per_metric {
        for b in &per_metric {
            max_dev = max_dev.max((a - b).norm());
        }
    }
    let value = per_metric[0];
    Ok(FutakiReport {
        value,
        max_pairwise_deviation: max_dev,
        pass: max_dev <= 1e-7 * (1.0 + value.norm()),
        per_metric,
        obstruction_correlation: crate::em_solver::obstruction_on(reference.grid(), sigma),
    })
}

/// The certificate field `q = v + Lap_sigma v + X(h + sigma(u))` with
/// `v = -i u`, together with its constancy statistics. Invariant
/// holomorphic functions on the sphere are constants, so the nodal spread
/// of q measures how far the computed geometry is from the exact identity.
#[derive(Debug, Clone)]
pub struct CertificateField {
    pub values: Vec<Complex64>,
    pub mean: Complex64,
    pub stddev: f64,
    pub sup: f64,
}

pub fn holomorphy_certificate(state: &MetricState, sigma: &SigmaSpec) -> CertificateField {
    let g = state.grid();
    let lap_u = crate::geometry::weighted_laplacian(state, sigma, state.u());
    let dh = g.deriv(state.h());
    // imaginary parts of v, Lap v, X(h + sigma(u)) for v = -i u
    let parts: Vec<f64> = (0..g.len())
        .map(|j| {
            let u = state.u()[j];
            -(u + lap_u[j] + 0.5 * state.psi()[j] * (dh[j] + sigma.d1(u)))
        })
        .collect();
    let mean = parts.iter().sum::<f64>() / parts.len() as f64;
    let var = parts.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / parts.len() as f64;
    let sup = parts.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    CertificateField {
        values: parts.iter().map(|&v| Complex64::new(0.0, v)).collect(),
        mean: Complex64::new(0.0, mean),
        stddev: var.sqrt(),
        sup,
    }
}

/// Dense collocation matrix of the twisted Laplacian
/// `f -> (1/2) e^{sigma(u)} (e^{-sigma(u)} psi f')'`.
pub fn weighted_laplacian_matrix(state: &MetricState, sigma: &SigmaSpec) -> DMatrix<f64> {
    let g = state.grid();
    let m = g.len();
    let d = g.diff_op();
    let weight: Vec<f64> = (0..m)
        .map(|j| (-sigma.eval(state.u()[j])).exp() * state.psi()[j])
        .collect();
    let outer: Vec<f64> = (0..m).map(|j| 0.5 * sigma.eval(state.u()[j]).exp()).collect();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += d[(i, k)] * weight[k] * d[(k, j)];
            }
            out[(i, j)] = outer[i] * acc;
        }
    }
    out
}

/// All eigenpairs of the twisted Laplacian with eigenvalue within `tol`
/// of -1, refined by shifted inverse iteration and normalized in the
/// weighted L2 norm `int v^2 e^{-sigma(u)} dA = 1`.
pub fn lambda1_eigenspace(
    state: &MetricState,
    sigma: &SigmaSpec,
    tol: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let m = weighted_laplacian_matrix(state, sigma);
    let dim = m.nrows();
    let eigs = m.clone().complex_eigenvalues();
    let mut shifts: Vec<f64> = eigs
        .iter()
        .filter(|z: &&Complex<f64>| (z.re + 1.0).abs() <= tol && z.im.abs() <= tol)
        .map(|z| z.re)
        .collect();
    shifts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    shifts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let weight: Vec<f64> = (0..dim)
        .map(|j| state.grid().quad_weights()[j] * (-sigma.eval(state.u()[j])).exp())
        .collect();
    let w_dot = |a: &[f64], b: &[f64]| -> f64 {
        2.0 * std::f64::consts::PI
            * a.iter()
                .zip(b)
                .zip(&weight)
                .map(|((x, y), w)| x * y * w)
                .sum::<f64>()
    };

    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    for shift in shifts {
        let mut vec: Vec<f64> = state.u().to_vec();
        // deflate previously found directions
        for (_, prev) in &pairs {
            let c = w_dot(&vec, prev) / w_dot(prev, prev);
            for (v, p) in vec.iter_mut().zip(prev) {
                *v -= c * p;
            }
        }
        let mut lambda = shift;
        for _ in 0..40 {
            let mut shifted = m.clone();
            for i in 0..dim {
                shifted[(i, i)] -= lambda + 1e-13;
            }
            let rhs = DVector::from_column_slice(&vec);
            let Some(sol) = shifted.lu().solve(&rhs) else {
                return Err(EmError::Numerical(
                    "inverse iteration: shifted system is singular".into(),
                ));
            };
            let mut next: Vec<f64> = sol.as_slice().to_vec();
            for (_, prev) in &pairs {
                let c = w_dot(&next, prev) / w_dot(prev, prev);
                for (v, p) in next.iter_mut().zip(prev) {
                    *v -= c * p;
                }
            }
            let nrm = w_dot(&next, &next).sqrt();
            if nrm < 1e-300 || !nrm.is_finite() {
                return Err(EmError::Numerical("inverse iteration collapsed".into()));
            }
            for v in &mut next {
                *v /= nrm;
            }
            // weighted Rayleigh quotient
            let mv = {
                let x = DVector::from_column_slice(&next);
                let y = &m * x;
                y.as_slice().to_vec()
            };
            let new_lambda = w_dot(&mv, &next) / w_dot(&next, &next);
            let done = (new_lambda - lambda).abs() < 1e-14;
            lambda = new_lambda;
            vec = next;
            if done {
                break;
            }
        }
        if (lambda + 1.0).abs() <= tol {
            // deterministic sign: positive pairing with the moment field
            if w_dot(&vec, state.u()) < 0.0 {
                for v in &mut vec {
                    *v = -*v;
                }
            }
            pairs.push((lambda, vec));
        }
    }
    Ok(pairs)
}
