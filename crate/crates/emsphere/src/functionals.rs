//! Weighted energy functionals on the space of invariant potentials.
//!
//! The three energies use the weighted volume form `e^{-sigma(u)} omega`
//! in place of `omega`:
//!
//! ```text
//!   I(phi) = (1/V) int phi (e^{-sigma(u)} omega - e^{-sigma(u_phi)} omega_phi)
//!   J(phi) = (1/V) int_0^1 int phidot_s (same pairing at phi_s) ds
//!   F(phi) = J(phi) - (1/V) int phi e^{-sigma(u)} omega
//!            - log[(1/V) int e^{h - phi} omega]
//! ```
//!
//! All three require the weight to be volume-normalized; an unnormalized
//! weight is a contract violation reported at entry. J is a path integral
//! (16-node Gauss-Legendre along the linear path by default) and its path
//! independence is a test, not an assumption.

use crate::error::{EmError, Result};
use crate::em_solver::ContinuityTrace;
use crate::geometry::{osc, weighted_measure_density, Potential, TOTAL_AREA};
use crate::sigma::SigmaSpec;

/// Path from 0 to phi used by the path-integral energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSpec {
    /// phi_s = s phi.
    Linear,
    /// phi_s = s^p phi.
    Power(f64),
}

impl PathSpec {
    fn factor(&self, s: f64) -> f64 {
        match self {
            PathSpec::Linear => s,
            PathSpec::Power(p) => s.powf(*p),
        }
    }

    fn dfactor(&self, s: f64) -> f64 {
        match self {
            PathSpec::Linear => 1.0,
            PathSpec::Power(p) => p * s.powf(p - 1.0),
        }
    }
}

impl std::fmt::Display for PathSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PathSpec::Linear => write!(f, "linear"),
            PathSpec::Power(p) => write!(f, "power:{p}"),
        }
    }
}

/// Energies of one potential along with the oscillation.
#[derive(Debug, Clone)]
pub struct FunctionalRecord {
    pub i: f64,
    pub j: f64,
    pub f: f64,
    pub i_minus_j: f64,
    pub osc: f64,
    pub path: String,
}

impl FunctionalRecord {
    /// Nonnegativity of I, J и I - J up to quadrature noise.
    pub fn satisfies_weak_inequalities(&self, tol: f64) -> bool {
        self.i >= -tol && self.j >= -tol && self.i_minus_j >= -tol
    }
}

fn pairing_density(p: &Potential, sigma: &SigmaSpec) -> Result<Vec<f64>> {
    // e^{-sigma(mu)} - e^{-sigma(u_phi)} (omega_phi/omega) against d mu
    let dens = weighted_measure_density(p, sigma)?;
    Ok(p.background
        .u()
        .iter()
        .zip(&dens)
        .map(|(u, d)| (-sigma.eval(*u)).exp() - d)
        .collect())
}

/// The difference-of-measures energy I.
pub fn i_energy(p: &Potential, sigma: &SigmaSpec) -> Result<f64> {
    sigma.require_normalized(&p.background)?;
    let pairing = pairing_density(p, sigma)?;
    let integrand: Vec<f64> = p.phi.iter().zip(&pairing).map(|(a, b)| a * b).collect();
    Ok(p.background.integrate_da(&integrand) / TOTAL_AREA)
}

/// The path-integral energy J along `path`.
pub fn j_energy(p: &Potential, sigma: &SigmaSpec, path: PathSpec) -> Result<f64> {
    sigma.require_normalized(&p.background)?;
    let (nodes, weights) = gauss_legendre_01(16);
    let mut total = 0.0;
    for (&s, &w) in nodes.iter().zip(&weights) {
        let scaled: Vec<f64> = p.phi.iter().map(|v| v * path.factor(s)).collect();
        let ps = Potential::new(p.background.clone(), scaled);
        let pairing = pairing_density(&ps, sigma)?;
        let integrand: Vec<f64> = p
            .phi
            .iter()
            .zip(&pairing)
            .map(|(a, b)| a * path.dfactor(s) * b)
            .collect();
        total += w * p.background.integrate_da(&integrand) / TOTAL_AREA;
    }
    Ok(total)
}

/// The free energy F (critical exactly at solutions of the target
/// equation).
pub fn f_energy(p: &Potential, sigma: &SigmaSpec) -> Result<f64> {
    sigma.require_normalized(&p.background)?;
    let j = j_energy(p, sigma, PathSpec::Linear)?;
    let weighted_mean = {
        let integrand: Vec<f64> = p
            .phi
            .iter()
            .zip(p.background.u())
            .map(|(phi, u)| phi * (-sigma.eval(*u)).exp())
            .collect();
        p.background.integrate_da(&integrand) / TOTAL_AREA
    };
    let log_term = {
        let integrand: Vec<f64> = p
            .background
            .h()
            .iter()
            .zip(&p.phi)
            .map(|(h, phi)| (h - phi).exp())
            .collect();
        (p.background.integrate_da(&integrand) / TOTAL_AREA).ln()
    };
    Ok(j - weighted_mean - log_term)
}

/// All energies of one potential.
pub fn evaluate(p: &Potential, sigma: &SigmaSpec) -> Result<FunctionalRecord> {
    let i = i_energy(p, sigma)?;
    let j = j_energy(p, sigma, PathSpec::Linear)?;
    let f = f_energy(p, sigma)?;
    Ok(FunctionalRecord {
        i,
        j,
        f,
        i_minus_j: i - j,
        osc: osc(&p.phi),
        path: PathSpec::Linear.to_string(),
    })
}

/// Cocycle defect `|F_omega(phi1) + F_{omega_phi1}(phi2) - F_omega(phi1 +
/// phi2 o u_phi1)|`. `phi2` lives on the canonical grid of the deformed
/// state; its pullback to the background is by interpolation at the new
/// moment values.
pub fn cocycle_defect(p1: &Potential, phi2: &[f64], sigma: &SigmaSpec) -> Result<f64> {
    let canon = crate::geometry::canonicalize(p1)?;
    let f1 = f_energy(p1, sigma)?;
    let p2 = Potential::new(canon.state.clone(), phi2.to_vec());
    let f2 = f_energy(&p2, sigma)?;
    let grid = p1.background.grid();
    let composed: Vec<f64> = canon
        .new_moment
        .iter()
        .map(|&u| grid.interpolate(phi2, u))
        .collect();
    let summed: Vec<f64> = p1.phi.iter().zip(&composed).map(|(a, b)| a + b).collect();
    let f12 = f_energy(&Potential::new(p1.background.clone(), summed), sigma)?;
    Ok((f1 + f2 - f12).abs())
}

/// Along a deformation trace, F(phi_t) equals minus the running average of
/// (I - J) minus the log term. Returns the largest defect over recorded
/// t >= 0.2, with the running integral by trapezoid over the trace's own
/// steps (first-order in step count by construction).
pub fn path_energy_identity_defect(trace: &ContinuityTrace) -> Result<f64> {
    if trace.steps.len() < 10 {
        return Err(EmError::TraceTooCoarse(format!(
            "need at least 10 recorded steps, have {}",
            trace.steps.len()
        )));
    }
    let reference = &trace.reference;
    let mut worst = 0.0_f64;
    let mut running = 0.0;
    for k in 1..trace.steps.len() {
        let (prev, cur) = (&trace.steps[k - 1], &trace.steps[k]);
        running += 0.5 * (prev.energies.i_minus_j + cur.energies.i_minus_j) * (cur.t - prev.t);
        if cur.t < 0.2 {
            continue;
        }
        let log_term = {
            let integrand: Vec<f64> = reference
                .h()
                .iter()
                .zip(&cur.phi)
                .map(|(h, phi)| (h - phi).exp())
                .collect();
            (reference.integrate_da(&integrand) / TOTAL_AREA).ln()
        };
        let rhs = -running / cur.t - log_term;
        worst = worst.max((cur.energies.f - rhs).abs());
    }
    Ok(worst)
}

/// Minimal finite-difference slope of (I - J) along the trace; the gap is
/// increasing along the deformation, so this should not drop below
/// quadrature noise.
pub fn energy_gap_min_slope(trace: &ContinuityTrace) -> f64 {
    let mut min_slope = f64::INFINITY;
    for k in 1..trace.steps.len() {
        let (prev, cur) = (&trace.steps[k - 1], &trace.steps[k]);
        let slope = (cur.energies.i_minus_j - prev.energies.i_minus_j) / (cur.t - prev.t);
        min_slope = min_slope.min(slope);
    }
    min_slope
}

/// Least-squares fit `osc(phi_t) ~= c0 * (I - J)(phi_t) + c1` over
/// recorded steps with t >= 1/2 (reported, never asserted).
pub fn osc_bound_fit(trace: &ContinuityTrace) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = trace
        .steps
        .iter()
        .filter(|s| s.t >= 0.5)
        .map(|s| (s.energies.i_minus_j, s.energies.osc))
        .collect();
    linear_fit(&pts)
}

/// Largest recorded F over steps with t >= t_min (the empirical upper
/// bound along converged traces).
pub fn max_f_energy(trace: &ContinuityTrace, t_min: f64) -> f64 {
    trace
        .steps
        .iter()
        .filter(|s| s.t >= t_min)
        .map(|s| s.energies.f)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ordinary least squares y = slope * x + intercept.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept))
}

/// Nodes and weights of n-point Gauss-Legendre quadrature on [0, 1].
pub(crate) fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Newton iteration from the Chebyshev estimate
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[k] = 0.5 * (1.0 - x);
        weights[k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_solver::reference_setup;
    use crate::geometry::round_reference;
    use crate::grid::Grid;
    use crate::sigma::make_sigma;
    use std::sync::Arc;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let (x, w) = gauss_legendre_01(16);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // degree 31 monomial over [0,1]
        let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(31)).sum();
        assert!((quad - 1.0 / 32.0).abs() < 1e-14);
    }

    #[test]
    fn energies_vanish_for_constants() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        for c in [0.0, 0.8, -1.3] {
            let p = Potential::new(reference.clone(), vec![c; reference.grid().len()]);
            assert!(i_energy(&p, &sigma).unwrap().abs() < 1e-12);
            assert!(j_energy(&p, &sigma, PathSpec::Linear).unwrap().abs() < 1e-12);
            assert!(
                f_energy(&p, &sigma).unwrap().abs() < 1e-10,
                "constant {c} should cancel"
            );
        }
    }

    #[test]
    fn linear_potential_has_positive_energies() {
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let phi: Vec<f64> = reference.grid().nodes().iter().map(|m| 0.3 * m).collect();
        let rec = evaluate(&Potential::new(reference, phi), &sigma).unwrap();
        assert!(rec.i > 0.0);
        assert!(rec.i_minus_j >= -1e-9);
        assert!(rec.j >= -1e-9);
    }

    #[test]
    fn weak_inequalities_on_random_potentials() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(7);
        for _ in 0..10 {
            let phi = crate::sampling::random_potential(&reference, 0.4, &mut rng).unwrap();
            let rec = evaluate(&Potential::new(reference.clone(), phi), &sigma).unwrap();
            assert!(rec.satisfies_weak_inequalities(1e-9), "{rec:?}");
        }
    }

    #[test]
    fn path_independence() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(21);
        let phi = crate::sampling::random_potential(&reference, 0.4, &mut rng).unwrap();
        let p = Potential::new(reference, phi);
        let a = j_energy(&p, &sigma, PathSpec::Linear).unwrap();
        let b = j_energy(&p, &sigma, PathSpec::Power(2.0)).unwrap();
        assert!((a - b).abs() < 1e-8, "paths differ: {a} vs {b}");
    }

    #[test]
    fn classical_j_oracle_at_zero_weight() {
        // with the trivial weight, J = (1/(2V)) int |grad phi|^2 omega
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(2);
        let phi = crate::sampling::random_potential(&reference, 0.4, &mut rng).unwrap();
        let p = Potential::new(reference.clone(), phi);
        let j = j_energy(&p, &sigma, PathSpec::Linear).unwrap();
        let grad = crate::geometry::gradient_norm_sq(&reference, &p.phi);
        let oracle = reference.integrate_da(&grad) / (2.0 * TOTAL_AREA);
        assert!((j - oracle).abs() < 1e-9, "J = {j}, oracle = {oracle}");
    }

    #[test]
    fn i_is_twice_j_at_zero_weight() {
        // surface-specific identity used as an extra pin on the quadratures
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(9);
        let phi = crate::sampling::random_potential(&reference, 0.3, &mut rng).unwrap();
        let p = Potential::new(reference, phi);
        let i = i_energy(&p, &sigma).unwrap();
        let j = j_energy(&p, &sigma, PathSpec::Linear).unwrap();
        assert!((i - 2.0 * j).abs() < 1e-10);
    }

    #[test]
    fn cocycle_with_zero_second_leg() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(31);
        let phi = crate::sampling::random_deformation(&reference, 0.3, &mut rng).unwrap();
        let p1 = Potential::new(reference.clone(), phi);
        let zero = vec![0.0; reference.grid().len()];
        assert!(cocycle_defect(&p1, &zero, &sigma).unwrap() < 1e-9);
    }

    #[test]
    fn cocycle_random_legs() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(13);
        for _ in 0..3 {
            let phi1 = crate::sampling::random_deformation(&reference, 0.25, &mut rng).unwrap();
            let p1 = Potential::new(reference.clone(), phi1);
            let state2 = crate::geometry::apply_potential(&p1).unwrap();
            let phi2 = crate::sampling::random_deformation(&state2, 0.2, &mut rng).unwrap();
            let defect = cocycle_defect(&p1, &phi2, &sigma).unwrap();
            assert!(defect < 1e-7, "cocycle defect {defect:.3e}");
        }
    }

    #[test]
    fn cocycle_antisymmetry() {
        // the potential undoing phi1 is -phi1 read in the new coordinate
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let mut rng = crate::sampling::seeded_rng(41);
        let phi1 = crate::sampling::random_deformation(&reference, 0.25, &mut rng).unwrap();
        let p1 = Potential::new(reference.clone(), phi1.clone());
        let canon = crate::geometry::canonicalize(&p1).unwrap();
        let grid = reference.grid();
        // invert the moment map at the canonical nodes, then negate phi1
        let phi2: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, &node)| {
                if j == 0 || j == grid.n() {
                    -phi1[j]
                } else {
                    let mut lo = -1.0;
                    let mut hi = 1.0;
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if grid.interpolate(&canon.new_moment, mid) < node {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    -grid.interpolate(&phi1, 0.5 * (lo + hi))
                }
            })
            .collect();
        let f1 = f_energy(&p1, &sigma).unwrap();
        let f2 = f_energy(&Potential::new(canon.state, phi2), &sigma).unwrap();
        assert!((f1 + f2).abs() < 1e-7, "antisymmetry defect {:.3e}", f1 + f2);
    }

    #[test]
    fn coarse_trace_is_rejected() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let opts = crate::em_solver::ContinuityOpts::uniform(5);
        let (_, trace) = crate::em_solver::continuity_solve(&reference, &sigma, &opts).unwrap();
        assert!(matches!(
            path_energy_identity_defect(&trace),
            Err(EmError::TraceTooCoarse(_))
        ));
    }

    #[test]
    fn unnormalized_weight_flagged() {
        let reference = round_reference(Arc::new(Grid::new(48).unwrap()));
        let sigma = make_sigma("quad:0.5").unwrap();
        let p = Potential::new(reference.clone(), vec![0.0; reference.grid().len()]);
        assert!(matches!(
            i_energy(&p, &sigma),
            Err(EmError::SigmaNotNormalized { .. })
        ));
    }
}
