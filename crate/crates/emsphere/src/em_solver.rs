//! Solving the weighted Einstein equation on the sphere three ways.
//!
//! In profile form the equation `Ric(omega) + i ddbar sigma(u) = omega`
//! reduces to `-psi'' + (sigma_dot psi)' = 2` with the closure boundary
//! conditions. Its first integral `psi' = sigma_dot psi - 2 mu` integrates
//! in closed form,
//!
//! ```text
//!   psi(mu) = -2 e^{sigma(mu)} int_{-1}^{mu} nu e^{-sigma(nu)} d nu,
//! ```
//!
//! and the right-endpoint closure holds iff the obstruction integral
//! `O(sigma) = int nu e^{-sigma(nu)} d nu` vanishes. [`direct_solve`] builds
//! that profile and serves as the independent oracle for the deformation
//! solver, which marches the volume-ratio equation
//!
//! ```text
//!   omega_phi/omega = exp(h - t phi + sigma(u_phi))
//! ```
//!
//! from the solvable t = 0 problem to t = 1 with damped Newton steps.
//! At t = 0 the linearization kills constants and at t = 1 it kills the
//! pullback of the moment coordinate (the one-parameter family generated
//! by the holomorphic flow), so those two solves use a bordered system
//! that pins the neutral direction; everywhere else plain LU is fine.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{EmError, Result};
use crate::functionals::{self, FunctionalRecord};
use crate::geometry::{
    osc, round_reference, sup_norm, MetricState, Potential, TOTAL_AREA,
};
use crate::grid::Grid;
use crate::sigma::SigmaSpec;

/// Obstruction integral `O(sigma) = int_{-1}^{1} nu e^{-sigma(nu)} d nu`
/// on the given grid.
pub fn obstruction_on(grid: &Grid, sigma: &SigmaSpec) -> f64 {
    let f: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&nu| nu * (-sigma.eval(nu)).exp())
        .collect();
    grid.integrate(&f)
}

/// Obstruction integral on the default grid (degree 64).
pub fn obstruction(sigma: &SigmaSpec) -> f64 {
    let grid = Grid::new(64).expect("default grid");
    obstruction_on(&grid, sigma)
}

/// Largest obstruction magnitude accepted as "vanishing" by the solvers.
pub const OBSTRUCTION_TOL: f64 = 1e-8;

/// Closed-form solution of the weighted Einstein equation.
///
/// Fails with [`EmError::NoSolutionObstruction`] when the obstruction
/// integral does not vanish, and with a degenerate-profile error when the
/// closed form is not positive inside the interval.
pub fn direct_solve(sigma: &SigmaSpec, grid: Arc<Grid>) -> Result<MetricState> {
    let obs = obstruction_on(&grid, sigma);
    if obs.abs() > OBSTRUCTION_TOL {
        return Err(EmError::NoSolutionObstruction { obstruction: obs });
    }
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&nu| nu * (-sigma.eval(nu)).exp())
        .collect();
    let cumulative = grid.antiderivative(&integrand);
    let mut psi: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&cumulative)
        .map(|(&mu, &c)| -2.0 * sigma.eval(mu).exp() * c)
        .collect();
    psi[0] = 0.0;
    psi[grid.n()] = 0.0;
    MetricState::from_profile(grid, psi)
}

/// Options for [`continuity_solve`].
#[derive(Debug, Clone)]
pub struct ContinuityOpts {
    /// Initial deformation step.
    pub t_step_init: f64,
    /// Floor under step halving; going below reports a stall.
    pub t_step_min: f64,
    /// Cap applied when the step doubles after easy stretches.
    pub t_step_max: f64,
    /// Sup-norm residual tolerance per accepted step.
    pub newton_tol: f64,
    /// Newton iteration cap per step.
    pub max_newton: usize,
    /// Deformation endpoint (1 solves the target equation; smaller values
    /// stop along the family).
    pub t_end: f64,
}

impl Default for ContinuityOpts {
    fn default() -> Self {
        Self {
            t_step_init: 0.05,
            t_step_min: 1e-4,
            t_step_max: 0.25,
            newton_tol: 1e-10,
            max_newton: 30,
            t_end: 1.0,
        }
    }
}

impl ContinuityOpts {
    /// Uniform schedule with `steps` equal deformation increments
    /// (disables adaptive doubling).
    pub fn uniform(steps: usize) -> Self {
        let dt = 1.0 / steps as f64;
        Self {
            t_step_init: dt,
            t_step_max: dt,
            ..Self::default()
        }
    }
}

/// One accepted step of the deformation.
#[derive(Debug, Clone)]
pub struct ContinuityStep {
    pub t: f64,
    pub phi: Vec<f64>,
    pub newton_iters: usize,
    pub residual_sup: f64,
    pub energies: FunctionalRecord,
    /// `int (phi + t phidot) e^{-sigma(u_phi)} omega_phi` with phidot by
    /// backward differencing; None on the first record.
    pub mean_value_defect: Option<f64>,
    /// `| int e^{h - t phi + sigma(u_phi)} omega - V |`.
    pub volume_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContinuityOutcome {
    Converged,
    Stalled { t: f64 },
}

/// Record of a deformation run.
#[derive(Debug, Clone)]
pub struct ContinuityTrace {
    pub reference: MetricState,
    pub sigma: SigmaSpec,
    /// Schedule the run was configured with.
    pub opts: ContinuityOpts,
    pub steps: Vec<ContinuityStep>,
    pub outcome: ContinuityOutcome,
}

impl ContinuityTrace {
    pub fn final_phi(&self) -> &[f64] {
        &self.steps.last().expect("trace has at least one step").phi
    }

    pub fn final_t(&self) -> f64 {
        self.steps.last().expect("trace has at least one step").t
    }
}

enum NewtonMode {
    Plain,
    /// Border with the constant field (neutral at t = 0); gauge row is the
    /// plain quadrature mean.
    PinConstants,
    /// Border with the current Hamiltonian (neutral at t = 1); gauge row is
    /// the first moment.
    PinMomentFlow,
}

struct DeformationProblem<'a> {
    grid: &'a Grid,
    psi: &'a [f64],
    h: &'a [f64],
    sigma: &'a SigmaSpec,
    /// Second-order part of the linearization, `D diag(psi/2) D`.
    principal: DMatrix<f64>,
}

struct Evaluation {
    residual: Vec<f64>,
    ma: Vec<f64>,
    u_phi: Vec<f64>,
    exponential: Vec<f64>,
}

impl<'a> DeformationProblem<'a> {
    fn new(reference: &'a MetricState, sigma: &'a SigmaSpec) -> Self {
        let grid = reference.grid();
        let m = grid.len();
        let d = grid.diff_op();
        let mut principal = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += d[(i, k)] * reference.psi()[k] / 2.0 * d[(k, j)];
                }
                principal[(i, j)] = acc;
            }
        }
        Self {
            grid,
            psi: reference.psi(),
            h: reference.h(),
            sigma,
            principal,
        }
    }

    fn evaluate(&self, phi: &[f64], t: f64) -> Evaluation {
        let n = self.grid.n();
        let dphi = self.grid.deriv(phi);
        let flux: Vec<f64> = self
            .psi
            .iter()
            .zip(&dphi)
            .map(|(p, d)| p * d / 2.0)
            .collect();
        let dflux = self.grid.deriv(&flux);
        let ma: Vec<f64> = dflux.iter().map(|v| 1.0 + v).collect();
        let mut u_phi: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(&flux)
            .map(|(m, f)| m + f)
            .collect();
        u_phi[0] = -1.0;
        u_phi[n] = 1.0;
        let exponential: Vec<f64> = (0..=n)
            .map(|j| (self.h[j] - t * phi[j] + self.sigma.eval(u_phi[j])).exp())
            .collect();
        let residual: Vec<f64> = ma
            .iter()
            .zip(&exponential)
            .map(|(m, e)| m - e)
            .collect();
        Evaluation {
            residual,
            ma,
            u_phi,
            exponential,
        }
    }

    fn jacobian(&self, ev: &Evaluation, t: f64) -> DMatrix<f64> {
        let m = self.grid.len();
        let d = self.grid.diff_op();
        let mut jac = self.principal.clone();
        for i in 0..m {
            let coef = ev.exponential[i] * self.sigma.d1(ev.u_phi[i]) * self.psi[i] / 2.0;
            for j in 0..m {
                jac[(i, j)] -= coef * d[(i, j)];
            }
            jac[(i, i)] += t * ev.exponential[i];
        }
        jac
    }

    fn newton_step(&self, ev: &Evaluation, t: f64, mode: &NewtonMode) -> Option<Vec<f64>> {
        let m = self.grid.len();
        let jac = self.jacobian(ev, t);
        match mode {
            NewtonMode::Plain => {
                let rhs = DVector::from_fn(m, |i, _| -ev.residual[i]);
                jac.lu().solve(&rhs).map(|s| s.as_slice().to_vec())
            }
            NewtonMode::PinConstants | NewtonMode::PinMomentFlow => {
                let (kernel, gauge): (Vec<f64>, Vec<f64>) = match mode {
                    NewtonMode::PinConstants => (
                        vec![1.0; m],
                        self.grid.quad_weights().to_vec(),
                    ),
                    _ => (
                        ev.u_phi.clone(),
                        self.grid
                            .quad_weights()
                            .iter()
                            .zip(self.grid.nodes())
                            .map(|(w, x)| w * x)
                            .collect(),
                    ),
                };
                let mut big = DMatrix::zeros(m + 1, m + 1);
                big.view_mut((0, 0), (m, m)).copy_from(&jac);
                for i in 0..m {
                    big[(i, m)] = kernel[i];
                    big[(m, i)] = gauge[i];
                }
                let rhs = DVector::from_fn(m + 1, |i, _| {
                    if i < m {
                        -ev.residual[i]
                    } else {
                        0.0
                    }
                });
                big.lu().solve(&rhs).map(|s| s.as_slice()[..m].to_vec())
            }
        }
    }

    /// Damped Newton iteration at fixed t. Ok((iters, residual_sup)) on
    /// convergence; Err(last residual) when progress stops.
    fn solve_at(
        &self,
        phi: &mut Vec<f64>,
        t: f64,
        mode: &NewtonMode,
        tol: f64,
        max_iters: usize,
    ) -> std::result::Result<(usize, f64), f64> {
        let mut res_sup = sup_norm(&self.evaluate(phi, t).residual);
        for it in 0..max_iters {
            if res_sup <= tol {
                return Ok((it, res_sup));
            }
            let ev = self.evaluate(phi, t);
            let Some(step) = self.newton_step(&ev, t, mode) else {
                return Err(res_sup);
            };
            // backtracking: insist on a sup-norm decrease
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand: Vec<f64> = phi
                    .iter()
                    .zip(&step)
                    .map(|(p, s)| p + lambda * s)
                    .collect();
                let cand_res = sup_norm(&self.evaluate(&cand, t).residual);
                if cand_res.is_finite() && cand_res < res_sup * (1.0 - 0.25 * lambda) + 1e-16 {
                    *phi = cand;
                    res_sup = cand_res;
                    accepted = true;
                    break;
                }
                lambda /= 2.0;
            }
            if !accepted {
                return Err(res_sup);
            }
        }
        if res_sup <= tol {
            Ok((max_iters, res_sup))
        } else {
            Err(res_sup)
        }
    }
}

/// Closed-form solution of the starting equation of the deformation:
/// at t = 0 the volume-ratio equation separates into
/// `e^{-sigma(u)} du = e^{h} d mu`, so the moment map of the solution is
/// the inverse of one antiderivative composed with the other. Solving it
/// this way (rather than by Newton from zero) matters: the collocation
/// system at t = 0 carries a spurious near-neutral direction besides
/// constants, and the marching family for t > 0 continues from this
/// branch, not from an arbitrary member.
fn solve_initial(reference: &MetricState, sigma: &SigmaSpec) -> Vec<f64> {
    let g = reference.grid();
    let n = g.n();
    let weight_density: Vec<f64> = g.nodes().iter().map(|m| (-sigma.eval(*m)).exp()).collect();
    let s_cum = g.antiderivative(&weight_density);
    let h_density: Vec<f64> = reference.h().iter().map(|h| h.exp()).collect();
    let h_cum = g.antiderivative(&h_density);
    let mut u_star = vec![0.0; g.len()];
    u_star[0] = -1.0;
    u_star[n] = 1.0;
    for j in 1..n {
        let target = h_cum[j];
        let mut lo = -1.0_f64;
        let mut hi = 1.0_f64;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g.interpolate(&s_cum, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u_star[j] = 0.5 * (lo + hi);
    }
    let mut dphi = vec![0.0; g.len()];
    for j in 1..n {
        dphi[j] = 2.0 * (u_star[j] - g.nodes()[j]) / reference.psi()[j];
    }
    // poles by the removable limit: phi' = volume ratio - 1 at -1 and
    // its negative at +1
    dphi[0] = (reference.h()[0] + sigma.eval(-1.0)).exp() - 1.0;
    dphi[n] = 1.0 - (reference.h()[n] + sigma.eval(1.0)).exp();
    g.antiderivative(&dphi)
}

/// March the deformation family from t = 0 to `opts.t_end`.
///
/// On success returns the endpoint potential and the full trace. A stall
/// (step underflow before the endpoint) is reported as
/// [`EmError::Stalled`] carrying the last deformation parameter, the
/// oscillation of the last potential, the obstruction integral, and the
/// partial trace.
pub fn continuity_solve(
    reference: &MetricState,
    sigma: &SigmaSpec,
    opts: &ContinuityOpts,
) -> Result<(Potential, ContinuityTrace)> {
    sigma.require_normalized(reference)?;
    let problem = DeformationProblem::new(reference, sigma);
    let grid = reference.grid();
    let mut steps: Vec<ContinuityStep> = Vec::new();

    // t = 0 in closed form, Newton-polished if quadrature left residue,
    // then shifted to zero weighted mean in the evolving measure so the
    // family is continuous at t = 0.
    let mut phi = solve_initial(reference, sigma);
    let res_direct = sup_norm(&problem.evaluate(&phi, 0.0).residual);
    let (iters0, res0) = if res_direct <= opts.newton_tol {
        (0, res_direct)
    } else {
        problem
            .solve_at(&mut phi, 0.0, &NewtonMode::PinConstants, opts.newton_tol, opts.max_newton)
            .map_err(|res| {
                EmError::Numerical(format!(
                    "initial solve did not converge (residual {res:.3e})"
                ))
            })?
    };
    {
        let dens =
            crate::geometry::weighted_measure_density(&Potential::new(reference.clone(), phi.clone()), sigma)?;
        let weighted: Vec<f64> = phi.iter().zip(&dens).map(|(p, d)| p * d).collect();
        let mean = reference.integrate_da(&weighted) / TOTAL_AREA;
        for v in &mut phi {
            *v -= mean;
        }
    }
    steps.push(make_step(reference, sigma, &problem, phi.clone(), 0.0, iters0, res0, None)?);

    let mut t = 0.0;
    let mut step_size = opts.t_step_init.min(opts.t_step_max);
    let mut easy_streak = 0usize;
    let mut guard = 0usize;

    while t < opts.t_end - 1e-14 {
        guard += 1;
        if guard > 200_000 {
            return Err(EmError::Numerical("deformation schedule did not terminate".into()));
        }
        let t_next = (t + step_size).min(opts.t_end);
        let final_target = (t_next - 1.0).abs() < 1e-14;
        let mode = if final_target {
            NewtonMode::PinMomentFlow
        } else {
            NewtonMode::Plain
        };
        let mut candidate = phi.clone();
        match problem.solve_at(&mut candidate, t_next, &mode, opts.newton_tol, opts.max_newton) {
            Ok((iters, res)) => {
                let prev = steps.last().expect("initial step recorded");
                let phidot: Vec<f64> = candidate
                    .iter()
                    .zip(&prev.phi)
                    .map(|(a, b)| (a - b) / (t_next - t))
                    .collect();
                phi = candidate;
                t = t_next;
                steps.push(make_step(
                    reference,
                    sigma,
                    &problem,
                    phi.clone(),
                    t,
                    iters,
                    res,
                    Some(&phidot),
                )?);
                if iters <= 3 {
                    easy_streak += 1;
                } else {
                    easy_streak = 0;
                }
                if easy_streak >= 3 {
                    step_size = (step_size * 2.0).min(opts.t_step_max);
                    easy_streak = 0;
                }
            }
            Err(_) => {
                step_size /= 2.0;
                if step_size < opts.t_step_min {
                    let last_osc = osc(&phi);
                    let obs = obstruction_on(grid, sigma);
                    let trace = ContinuityTrace {
                        reference: reference.clone(),
                        sigma: sigma.clone(),
                        opts: opts.clone(),
                        steps,
                        outcome: ContinuityOutcome::Stalled { t },
                    };
                    return Err(EmError::Stalled {
                        t,
                        osc: last_osc,
                        obstruction: obs,
                        trace: Box::new(trace),
                    });
                }
            }
        }
    }

    let trace = ContinuityTrace {
        reference: reference.clone(),
        sigma: sigma.clone(),
        opts: opts.clone(),
        steps,
        outcome: ContinuityOutcome::Converged,
    };
    Ok((Potential::new(reference.clone(), phi), trace))
}

#[allow(clippy::too_many_arguments)]
fn make_step(
    reference: &MetricState,
    sigma: &SigmaSpec,
    problem: &DeformationProblem<'_>,
    phi: Vec<f64>,
    t: f64,
    newton_iters: usize,
    residual_sup: f64,
    phidot: Option<&[f64]>,
) -> Result<ContinuityStep> {
    let potential = Potential::new(reference.clone(), phi);
    let energies = functionals::evaluate(&potential, sigma)?;
    let ev = problem.evaluate(&potential.phi, t);
    let dens: Vec<f64> = ev
        .ma
        .iter()
        .zip(&ev.u_phi)
        .map(|(m, u)| m * (-sigma.eval(*u)).exp())
        .collect();
    let mean_value_defect = phidot.map(|pd| {
        let integrand: Vec<f64> = potential
            .phi
            .iter()
            .zip(pd.iter().zip(&dens))
            .map(|(p, (d, w))| (p + t * d) * w)
            .collect();
        reference.integrate_da(&integrand)
    });
    let volume_defect = (reference.integrate_da(&ev.exponential) - TOTAL_AREA).abs();
    Ok(ContinuityStep {
        t,
        phi: potential.phi,
        newton_iters,
        residual_sup,
        energies,
        mean_value_defect,
        volume_defect,
    })
}

/// Convenience: round reference and normalized weight on a fresh grid.
pub fn reference_setup(sigma: &SigmaSpec, n: usize) -> Result<(MetricState, SigmaSpec)> {
    let grid = Arc::new(Grid::new(n)?);
    let reference = round_reference(grid);
    let normalized = crate::sigma::normalize_weight(sigma, &reference);
    Ok((reference, normalized))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_potential;
    use crate::sigma::make_sigma;

    fn grid64() -> Arc<Grid> {
        Arc::new(Grid::new(64).unwrap())
    }

    #[test]
    fn obstruction_catalog_values() {
        let g = Grid::new(64).unwrap();
        let zero = make_sigma("zero").unwrap();
        assert!(obstruction_on(&g, &zero).abs() < 1e-14);

        let lin = make_sigma("lin:-1").unwrap();
        let exact = 2.0 / std::f64::consts::E;
        assert!((obstruction_on(&g, &lin) - exact).abs() < 1e-10);

        let neglog = make_sigma("neglog:2").unwrap();
        assert!((obstruction_on(&g, &neglog) - 2.0 / 3.0).abs() < 1e-10);

        for eps in [0.1, 0.5, 1.0] {
            let q = make_sigma(&format!("quad:{eps}")).unwrap();
            assert!(obstruction_on(&g, &q).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_solve_round() {
        let state = direct_solve(&make_sigma("zero").unwrap(), grid64()).unwrap();
        let worst = state
            .psi()
            .iter()
            .zip(state.grid().nodes())
            .map(|(p, m)| (p - (1.0 - m * m)).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-12, "round profile error {worst:.3e}");
    }

    #[test]
    fn direct_solve_quadratic_weight() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 64).unwrap();
        let state = direct_solve(&sigma, reference.grid_arc()).unwrap();
        let mid = state.grid().n() / 2;
        let expect = 2.0 * (1.0 - (-0.5_f64).exp());
        assert!((state.psi()[mid] - expect).abs() < 1e-10);

        // equation residual: -psi'' + (sigma_dot psi)' = 2
        let g = state.grid();
        let dpsi = g.deriv(state.psi());
        let d2psi = g.deriv(&dpsi);
        let twisted: Vec<f64> = state
            .psi()
            .iter()
            .zip(g.nodes())
            .map(|(p, m)| sigma.d1(*m) * p)
            .collect();
        let dtwisted = g.deriv(&twisted);
        let worst = (0..g.len())
            .map(|j| (-d2psi[j] + dtwisted[j] - 2.0).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-8, "equation residual {worst:.3e}");

        // h + sigma(u) is constant at a solution; normalization makes it 0
        let worst = (0..g.len())
            .map(|j| (state.h()[j] + sigma.eval(state.u()[j])).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-8, "h + sigma sup {worst:.3e}");
    }

    #[test]
    fn direct_solve_rejects_obstructed_weight() {
        let err = direct_solve(&make_sigma("lin:-1").unwrap(), grid64()).unwrap_err();
        match err {
            EmError::NoSolutionObstruction { obstruction } => {
                assert!((obstruction - 2.0 / std::f64::consts::E).abs() < 1e-10);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn continuity_with_zero_weight_is_stationary() {
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let (potential, trace) = continuity_solve(&reference, &sigma, &Default::default()).unwrap();
        assert_eq!(trace.outcome, ContinuityOutcome::Converged);
        assert!(potential.osc() < 1e-9, "potential should be constant");
        let state = apply_potential(&potential).unwrap();
        let worst = state
            .psi()
            .iter()
            .zip(reference.psi())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn continuity_matches_direct_solve() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 64).unwrap();
        let (potential, trace) = continuity_solve(&reference, &sigma, &Default::default()).unwrap();
        assert_eq!(trace.outcome, ContinuityOutcome::Converged);
        assert!((trace.final_t() - 1.0).abs() < 1e-14);
        let solved = apply_potential(&potential).unwrap();
        let oracle = direct_solve(&sigma, reference.grid_arc()).unwrap();
        let worst = solved
            .psi()
            .iter()
            .zip(oracle.psi())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-6, "profile mismatch {worst:.3e}");
    }

    #[test]
    fn continuity_stalls_on_obstructed_weight() {
        let (reference, sigma) = reference_setup(&make_sigma("lin:-1").unwrap(), 48).unwrap();
        let err = continuity_solve(&reference, &sigma, &Default::default()).unwrap_err();
        match err {
            EmError::Stalled { t, osc, obstruction, trace } => {
                assert!(t < 1.0, "stalled before the endpoint");
                assert!(osc > 1.0, "oscillation grows, got {osc}");
                // the solver saw the normalized weight, which scales the
                // obstruction by the normalization factor
                let expect = (2.0 / std::f64::consts::E) / 1.0_f64.sinh();
                assert!((obstruction - expect).abs() < 1e-10);
                assert_eq!(trace.outcome, ContinuityOutcome::Stalled { t });
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unnormalized_weight_is_rejected() {
        let grid = grid64();
        let reference = round_reference(grid);
        let sigma = make_sigma("quad:0.5").unwrap();
        assert!(matches!(
            continuity_solve(&reference, &sigma, &Default::default()),
            Err(EmError::SigmaNotNormalized { .. })
        ));
    }

    #[test]
    fn step_identities_along_trace() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let (_, trace) = continuity_solve(&reference, &sigma, &Default::default()).unwrap();
        let mut prev_t = 0.0;
        for (k, step) in trace.steps.iter().enumerate() {
            assert!(k == 0 || step.t > prev_t, "t must strictly increase");
            assert!(step.residual_sup <= 1e-10 + 1e-14);
            assert!(step.volume_defect < 1e-8, "volume defect {:.3e}", step.volume_defect);
            if let Some(defect) = step.mean_value_defect {
                let dt = step.t - prev_t;
                let budget = 1e-10 * TOTAL_AREA + 0.5 * dt;
                assert!(
                    defect.abs() < budget,
                    "step {k}: mean-value defect {defect:.3e} over budget {budget:.3e}"
                );
            }
            prev_t = step.t;
        }
    }
}
