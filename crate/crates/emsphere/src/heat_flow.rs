//! Smoothing heat flow toward the weighted Einstein metric.
//!
//! Starting from f = 0 over a background state, the flow integrates
//!
//! ```text
//!   df/ds = log(omega_f / omega) - h + f - sigma(u_f)
//! ```
//!
//! with classical RK4. Writing `u_s` and `h_s` for the Hamiltonian and
//! Ricci potential of the evolving metric, one has `h_s + sigma(u_s) =
//! -df/ds + c_s` with `c_0 = 0`, and the time derivative obeys the
//! linearized equation `d(fdot)/ds = Lap_s fdot + fdot`, so the maximum
//! principle caps `|fdot|` by `e^s` times the initial deviation. The trace
//! records those bounds step by step; the degenerate weight `psi ~ dist^1`
//! at the poles keeps the stiffest collocation mode at O(n^2), which is
//! what makes explicit stepping with ds ~ 1e-3 viable at n = 64.

use crate::error::{EmError, Result};
use crate::functionals::linear_fit;
use crate::geometry::{sup_norm, weighted_laplacian, MetricState, TOTAL_AREA};
use crate::sigma::SigmaSpec;

/// Per-step flow record. Ratios are against the maximum-principle
/// envelopes and should sit at or below one; the margin should be
/// nonnegative.
#[derive(Debug, Clone)]
pub struct FlowStep {
    pub s: f64,
    pub f: Vec<f64>,
    pub fdot_sup: f64,
    /// sup of the squared evolving-metric gradient of fdot.
    pub grad_fdot_sq_sup: f64,
    /// sup |fdot| / (e^s * M0).
    pub value_bound_ratio: f64,
    /// sup(|fdot|^2 + s |grad fdot|_s^2) / (e^{2s} M0^2).
    pub gradient_bound_ratio: f64,
    /// min Lap_s(h_s + sigma(u_s)) - e^s min Lap_0(h_0 + sigma(u_0)).
    pub laplacian_bound_margin: f64,
    /// sup |h_s + sigma(u_s)| with the Ricci normalization constant.
    pub h_plus_sigma_sup: f64,
    /// | area(omega_f) - 4 pi |.
    pub area_dev: f64,
    /// max over nodes of sigma_ddot(u_s) * (conj(X) fdot)^2; nonpositive
    /// whenever sigma is convex because (conj(X) fdot)^2 = -(psi fdot'/2)^2
    /// on invariant functions.
    pub convexity_term_max: f64,
}

/// Record of one flow run.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub background: MetricState,
    pub sigma: SigmaSpec,
    /// Step size actually used (after any stability refinement).
    pub ds: f64,
    pub steps: Vec<FlowStep>,
    /// sup |h_0 + sigma(u_0)| of the background.
    pub initial_sup: f64,
    /// True when the background is already stationary (initial deviation
    /// below roundoff), which makes the envelope ratios 0/0.
    pub trivial_headroom: bool,
}

struct FlowProblem<'a> {
    bg: &'a MetricState,
    sigma: &'a SigmaSpec,
}

struct FlowEval {
    fdot: Vec<f64>,
    ma: Vec<f64>,
    u_s: Vec<f64>,
}

impl<'a> FlowProblem<'a> {
    fn rhs(&self, f: &[f64], s: f64) -> Result<FlowEval> {
        let g = self.bg.grid();
        let n = g.n();
        let df = g.deriv(f);
        let flux: Vec<f64> = self
            .bg
            .psi()
            .iter()
            .zip(&df)
            .map(|(p, d)| p * d / 2.0)
            .collect();
        let dflux = g.deriv(&flux);
        let ma: Vec<f64> = dflux.iter().map(|v| 1.0 + v).collect();
        for (j, &r) in ma.iter().enumerate() {
            if r <= 0.0 {
                return Err(EmError::FlowBreakdown {
                    s,
                    reason: format!(
                        "positivity lost: ratio {r:.4e} at mu = {:.4}",
                        g.nodes()[j]
                    ),
                });
            }
        }
        let mut u_s: Vec<f64> = g.nodes().iter().zip(&flux).map(|(m, fl)| m + fl).collect();
        u_s[0] = -1.0;
        u_s[n] = 1.0;
        let fdot: Vec<f64> = (0..=n)
            .map(|j| ma[j].ln() - self.bg.h()[j] + f[j] - self.sigma.eval(u_s[j]))
            .collect();
        Ok(FlowEval { fdot, ma, u_s })
    }

    /// Twisted Laplacian of `field` in the evolving metric, expressed in
    /// background coordinates: `e^{sigma(u_s)}/ma * (e^{-sigma(u_s)} psi
    /// field'/2)'`.
    fn evolving_laplacian(&self, ev: &FlowEval, field: &[f64]) -> Vec<f64> {
        let g = self.bg.grid();
        let dfield = g.deriv(field);
        let flux: Vec<f64> = (0..g.len())
            .map(|j| (-self.sigma.eval(ev.u_s[j])).exp() * self.bg.psi()[j] * dfield[j] / 2.0)
            .collect();
        let dflux = g.deriv(&flux);
        (0..g.len())
            .map(|j| self.sigma.eval(ev.u_s[j]).exp() / ev.ma[j] * dflux[j])
            .collect()
    }
}

/// Largest step the explicit integrator tolerates: the stiffest mode of
/// the degenerate operator grows like k(k+1)/2 at k = n, scaled by the
/// height of the profile relative to the round one.
fn stability_bound(bg: &MetricState) -> f64 {
    let n = bg.grid().n() as f64;
    let mut height: f64 = 0.0;
    for (j, m) in bg.grid().nodes().iter().enumerate() {
        let denom = 1.0 - m * m;
        if denom > 1e-9 {
            height = height.max(bg.psi()[j] / denom);
        }
    }
    2.78 / (0.5 * n * (n + 2.0) * height.max(1e-6) + 1.0)
}

/// Run the flow from f = 0 for s in [0, s_max].
///
/// On detected step instability the run restarts with a halved step, a
/// few times, before giving up with [`EmError::StepInstability`].
/// Positivity loss while the step sits above the explicit stability bound
/// is treated as instability (an exploding mode crosses zero before the
/// growth detector sees it); positivity loss at a stable step is a
/// genuine flow breakdown.
pub fn flow_run(
    background: &MetricState,
    sigma: &SigmaSpec,
    s_max: f64,
    ds: f64,
) -> Result<FlowTrace> {
    sigma.require_normalized(background)?;
    let bound = stability_bound(background);
    let mut ds_cur = ds;
    for _ in 0..6 {
        match flow_run_fixed(background, sigma, s_max, ds_cur) {
            Ok(trace) => return Ok(trace),
            Err(EmError::StepInstability { .. }) => ds_cur /= 2.0,
            Err(EmError::FlowBreakdown { .. }) if ds_cur > bound => ds_cur /= 2.0,
            Err(other) => return Err(other),
        }
    }
    Err(EmError::StepInstability { ds: ds_cur })
}

fn flow_run_fixed(
    background: &MetricState,
    sigma: &SigmaSpec,
    s_max: f64,
    ds_requested: f64,
) -> Result<FlowTrace> {
    // fit the horizon exactly with the nearest step count
    let n_steps = (s_max / ds_requested).round().max(1.0) as usize;
    let ds = s_max / n_steps as f64;
    let problem = FlowProblem {
        bg: background,
        sigma,
    };
    let g = background.grid();
    let h0_sigma: Vec<f64> = background
        .h()
        .iter()
        .zip(background.u())
        .map(|(h, u)| h + sigma.eval(*u))
        .collect();
    let m0 = sup_norm(&h0_sigma);
    let trivial = m0 < 1e-13;
    let lap0 = weighted_laplacian(background, sigma, &h0_sigma);
    let lap0_min = lap0.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut f = vec![0.0; g.len()];
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut fdot0_sup = None;

    for k in 0..=n_steps {
        let s = k as f64 * ds;
        let ev = problem.rhs(&f, s)?;
        let fdot_sup = sup_norm(&ev.fdot);
        let fdot0 = *fdot0_sup.get_or_insert(fdot_sup);
        if !fdot_sup.is_finite() || (-s).exp() * fdot_sup > 2.0 * fdot0 + 1e-6 {
            return Err(EmError::StepInstability { ds });
        }

        steps.push(make_flow_step(&problem, &ev, &f, s, m0, trivial, lap0_min)?);

        if k == n_steps {
            break;
        }
        // classical RK4
        let k1 = ev.fdot;
        let k2 = problem.rhs(&combine(&f, &k1, ds / 2.0), s + ds / 2.0)?.fdot;
        let k3 = problem.rhs(&combine(&f, &k2, ds / 2.0), s + ds / 2.0)?.fdot;
        let k4 = problem.rhs(&combine(&f, &k3, ds), s + ds)?.fdot;
        for j in 0..f.len() {
            f[j] += ds / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }

    Ok(FlowTrace {
        background: background.clone(),
        sigma: sigma.clone(),
        ds,
        steps,
        initial_sup: m0,
        trivial_headroom: trivial,
    })
}

fn combine(f: &[f64], k: &[f64], scale: f64) -> Vec<f64> {
    f.iter().zip(k).map(|(a, b)| a + scale * b).collect()
}

fn make_flow_step(
    problem: &FlowProblem<'_>,
    ev: &FlowEval,
    f: &[f64],
    s: f64,
    m0: f64,
    trivial: bool,
    lap0_min: f64,
) -> Result<FlowStep> {
    let bg = problem.bg;
    let g = bg.grid();
    let fdot_sup = sup_norm(&ev.fdot);
    let dfdot = g.deriv(&ev.fdot);
    let grad_sq: Vec<f64> = (0..g.len())
        .map(|j| bg.psi()[j] * dfdot[j] * dfdot[j] / (2.0 * ev.ma[j]))
        .collect();
    let grad_fdot_sq_sup = grad_sq.iter().cloned().fold(0.0, f64::max);

    let (value_bound_ratio, gradient_bound_ratio) = if trivial {
        (0.0, 0.0)
    } else {
        let envelope = s.exp() * m0;
        let combined = (0..g.len())
            .map(|j| ev.fdot[j] * ev.fdot[j] + s * grad_sq[j])
            .fold(0.0, f64::max);
        (fdot_sup / envelope, combined / (envelope * envelope))
    };

    let lap_fdot = problem.evolving_laplacian(ev, &ev.fdot);
    let lap_h_sigma_min = lap_fdot.iter().map(|v| -v).fold(f64::INFINITY, f64::min);
    let laplacian_bound_margin = lap_h_sigma_min - s.exp() * lap0_min;

    // Ricci normalization constant of the evolving metric:
    // h_s + sigma(u_s) = -fdot + c_s with int e^{h_s} omega_f = V.
    let dens: Vec<f64> = (0..g.len())
        .map(|j| (-ev.fdot[j] - problem.sigma.eval(ev.u_s[j])).exp() * ev.ma[j])
        .collect();
    let c_s = -(g.integrate(&dens) / 2.0).ln();
    let h_plus_sigma_sup = ev
        .fdot
        .iter()
        .map(|v| (-v + c_s).abs())
        .fold(0.0, f64::max);

    let area_dev = (2.0 * std::f64::consts::PI * g.integrate(&ev.ma) - TOTAL_AREA).abs();

    let convexity_term_max = (0..g.len())
        .map(|j| {
            let xbar_sq = -(bg.psi()[j] * dfdot[j] / 2.0).powi(2);
            problem.sigma.d2(ev.u_s[j]) * xbar_sq
        })
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(FlowStep {
        s,
        f: f.to_vec(),
        fdot_sup,
        grad_fdot_sq_sup,
        value_bound_ratio,
        gradient_bound_ratio,
        laplacian_bound_margin,
        h_plus_sigma_sup,
        area_dev,
        convexity_term_max,
    })
}

/// Aggregated maximum-principle bounds over a flow trace.
#[derive(Debug, Clone)]
pub struct FlowBoundReport {
    /// Largest sup |fdot| / (e^s M0); at most 1 + tolerance.
    pub value_bound_max: f64,
    /// Largest sup(|fdot|^2 + s |grad fdot|^2) / (e^{2s} M0^2).
    pub gradient_bound_max: f64,
    /// Smallest margin of the Laplacian lower bound; at least -tolerance.
    pub laplacian_margin_min: f64,
    /// Background already stationary: the ratios are vacuous.
    pub trivial: bool,
    /// Largest increase of e^{-s} sup |fdot| per unit s (should be <= 0
    /// up to tolerance).
    pub max_principle_growth: f64,
    /// Largest recorded convexity term (<= 0 for convex weights).
    pub convexity_max: f64,
    /// Largest area deviation along the flow.
    pub area_dev_max: f64,
}

pub fn flow_bound_report(trace: &FlowTrace) -> FlowBoundReport {
    let mut value_max = 0.0_f64;
    let mut grad_max = 0.0_f64;
    let mut margin_min = f64::INFINITY;
    let mut conv_max = f64::NEG_INFINITY;
    let mut area_max = 0.0_f64;
    let mut growth_max = f64::NEG_INFINITY;
    let mut prev: Option<(f64, f64)> = None;
    for st in &trace.steps {
        value_max = value_max.max(st.value_bound_ratio);
        grad_max = grad_max.max(st.gradient_bound_ratio);
        margin_min = margin_min.min(st.laplacian_bound_margin);
        conv_max = conv_max.max(st.convexity_term_max);
        area_max = area_max.max(st.area_dev);
        let normalized = (-st.s).exp() * st.fdot_sup;
        if let Some((ps, pv)) = prev {
            growth_max = growth_max.max((normalized - pv) / (st.s - ps));
        }
        prev = Some((st.s, normalized));
    }
    FlowBoundReport {
        value_bound_max: value_max,
        gradient_bound_max: grad_max,
        laplacian_margin_min: margin_min,
        trivial: trace.trivial_headroom,
        max_principle_growth: growth_max,
        convexity_max: conv_max,
        area_dev_max: area_max,
    }
}

/// One row of the smoothing-decay diagnostic.
#[derive(Debug, Clone)]
pub struct SmoothingRow {
    pub t: f64,
    pub one_minus_t: f64,
    /// sup |v| where v is the weighted-mean-free part of h_1 + sigma(u_1)
    /// after unit flow time.
    pub v_sup: f64,
}

#[derive(Debug, Clone)]
pub struct SmoothingTable {
    pub rows: Vec<SmoothingRow>,
    /// Least-squares slope of log v against log(1 - t) (reported only).
    pub fitted_exponent: Option<f64>,
    /// Exponent translated to the integrability parameter p via
    /// slope = 1/(p - 1).
    pub implied_p: Option<f64>,
}

/// For each t, solve the deformation family up to t, flow the resulting
/// metric for unit time, and record how far h + sigma(u) is from constant.
pub fn smoothing_decay_table(
    sigma: &SigmaSpec,
    reference: &MetricState,
    t_list: &[f64],
    ds: f64,
) -> Result<SmoothingTable> {
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let opts = crate::em_solver::ContinuityOpts {
            t_end: t,
            ..Default::default()
        };
        let (potential, _) = crate::em_solver::continuity_solve(reference, sigma, &opts)?;
        let bg = crate::geometry::apply_potential(&potential)?;
        let trace = flow_run(&bg, sigma, 1.0, ds)?;
        let last = trace.steps.last().expect("flow records its endpoint");
        // v = -(fdot - weighted mean fdot); the normalization constants drop
        let problem = FlowProblem { bg: &bg, sigma };
        let ev = problem.rhs(&last.f, last.s)?;
        let g = bg.grid();
        let dens: Vec<f64> = (0..g.len())
            .map(|j| (-sigma.eval(ev.u_s[j])).exp() * ev.ma[j])
            .collect();
        let weighted: Vec<f64> = ev.fdot.iter().zip(&dens).map(|(a, b)| a * b).collect();
        let mean = g.integrate(&weighted) / g.integrate(&dens);
        let v_sup = ev
            .fdot
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0, f64::max);
        rows.push(SmoothingRow {
            t,
            one_minus_t: 1.0 - t,
            v_sup,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.one_minus_t > 1e-12 && r.v_sup > 1e-300)
        .map(|r| (r.one_minus_t.ln(), r.v_sup.ln()))
        .collect();
    let fitted_exponent = linear_fit(&pts).map(|(slope, _)| slope);
    let implied_p = fitted_exponent.and_then(|s| {
        if s.abs() > 1e-12 {
            Some(1.0 + 1.0 / s)
        } else {
            None
        }
    });
    Ok(SmoothingTable {
        rows,
        fitted_exponent,
        implied_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_solver::{direct_solve, reference_setup};
    use crate::sigma::make_sigma;

    #[test]
    fn zero_weight_round_background_is_stationary() {
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let trace = flow_run(&reference, &sigma, 1.0, 1e-3).unwrap();
        assert!(trace.trivial_headroom);
        for st in &trace.steps {
            assert!(sup_norm(&st.f) < 1e-12, "drift at s = {}", st.s);
        }
    }

    #[test]
    fn stationary_at_the_solution() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let bg = direct_solve(&sigma, reference.grid_arc()).unwrap();
        let trace = flow_run(&bg, &sigma, 1.0, 1e-3).unwrap();
        // normalized weight makes h + sigma(u) = 0 at the solution, so the
        // flow never moves
        assert!(trace.trivial_headroom);
        let last = trace.steps.last().unwrap();
        assert!(sup_norm(&last.f) < 1e-5);
        assert!(last.fdot_sup < 1e-5);
    }

    #[test]
    fn bounds_hold_from_round_background() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let trace = flow_run(&reference, &sigma, 0.5, 1e-3).unwrap();
        let report = flow_bound_report(&trace);
        assert!(!report.trivial);
        assert!(report.value_bound_max <= 1.0 + 1e-6, "{report:?}");
        assert!(report.gradient_bound_max <= 1.0 + 1e-6, "{report:?}");
        assert!(report.laplacian_margin_min >= -1e-6, "{report:?}");
        assert!(report.max_principle_growth <= 1e-6, "{report:?}");
        assert!(report.convexity_max <= 1e-12, "{report:?}");
        assert!(report.area_dev_max <= 1e-10, "{report:?}");
    }

    #[test]
    fn unstable_step_is_detected_and_reported() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 64).unwrap();
        // far above the explicit stability bound even after refinement
        let err = flow_run(&reference, &sigma, 0.5, 0.25).unwrap_err();
        assert!(matches!(err, EmError::StepInstability { .. }));
    }

    #[test]
    fn smoothing_decays_toward_the_endpoint() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let table =
            smoothing_decay_table(&sigma, &reference, &[0.9, 0.99, 1.0], 1e-3).unwrap();
        assert!(table.rows[0].v_sup > table.rows[1].v_sup);
        assert!(table.rows[2].v_sup <= 1e-8);
    }

    #[test]
    fn smoothing_is_trivial_for_the_trivial_weight() {
        // every deformation step is a constant, so the deviation vanishes
        // at every t
        let (reference, sigma) = reference_setup(&make_sigma("zero").unwrap(), 48).unwrap();
        let table = smoothing_decay_table(&sigma, &reference, &[0.5, 1.0], 1e-3).unwrap();
        for row in &table.rows {
            assert!(row.v_sup <= 1e-10, "t = {}: v = {:.3e}", row.t, row.v_sup);
        }
    }

    #[test]
    fn trace_grid_is_uniform_and_finite() {
        let (reference, sigma) = reference_setup(&make_sigma("quad:0.5").unwrap(), 48).unwrap();
        let trace = flow_run(&reference, &sigma, 0.1, 3e-4).unwrap();
        // the horizon is matched exactly by an adjusted uniform step
        let last = trace.steps.last().unwrap();
        assert!((last.s - 0.1).abs() < 1e-12);
        for (k, st) in trace.steps.iter().enumerate() {
            assert!((st.s - k as f64 * trace.ds).abs() < 1e-12);
            assert!(st.value_bound_ratio.is_finite());
            assert!(st.gradient_bound_ratio.is_finite());
            assert!(st.laplacian_bound_margin.is_finite());
        }
    }
}
