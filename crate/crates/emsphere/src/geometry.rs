//! Circle-invariant Kaehler geometry of the two-sphere in momentum-profile
//! coordinates.
//!
//! A rotation-invariant metric in the fixed Kaehler class is encoded by its
//! momentum profile `psi` on the moment interval: `g = d mu^2 / psi + psi
//! d theta^2`, with the area form `omega = d mu ^ d theta`, total area 4 pi.
//! Smooth closure at the poles forces `psi(+-1) = 0`, `psi'(-1) = 2`,
//! `psi'(1) = -2`. The generator of the rotation is the holomorphic field
//! `X` with Hamiltonian `u = mu`; on invariant functions
//!
//! ```text
//!   X f = -(i/2) psi f',        conj(X) f = (i/2) psi f',
//!   Laplacian f = (psi f')'/2,  |grad f|^2 = psi (f')^2 / 2,
//! ```
//!
//! all primed derivatives taken in mu. Adding a potential phi moves the
//! Hamiltonian to `u_phi = mu + psi phi'/2` and scales the volume by the
//! ratio `omega_phi/omega = 1 + (psi phi'/2)' = d u_phi / d mu`, so the new
//! metric has canonical profile `psi_phi(u_phi) = psi * (omega_phi/omega)`.
//! Each of these reduced formulas is pinned by a quadrature identity in the
//! test suite rather than trusted.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{EmError, Result};
use crate::grid::Grid;
use crate::sigma::SigmaSpec;

/// Total area of the class: integral of omega over the sphere.
pub const TOTAL_AREA: f64 = 4.0 * PI;

/// A rotation-invariant metric in canonical moment coordinates.
///
/// `u` is the Hamiltonian of the rotation field, identically the moment
/// coordinate for a canonical state; `h` is the Ricci potential normalized
/// by `integral(e^h dA) = 4 pi`.
#[derive(Debug, Clone)]
pub struct MetricState {
    grid: Arc<Grid>,
    psi: Vec<f64>,
    u: Vec<f64>,
    h: Vec<f64>,
}

impl MetricState {
    /// Assemble a state from a momentum profile; recomputes the Ricci
    /// potential and checks the closure invariants.
    pub fn from_profile(grid: Arc<Grid>, mut psi: Vec<f64>) -> Result<Self> {
        assert_eq!(psi.len(), grid.len(), "profile length mismatch");
        let nlast = grid.n();
        if psi[0].abs() > 1e-10 || psi[nlast].abs() > 1e-10 {
            return Err(EmError::Numerical(format!(
                "profile does not close at the poles: psi(-1) = {:.3e}, psi(1) = {:.3e}",
                psi[0], psi[nlast]
            )));
        }
        psi[0] = 0.0;
        psi[nlast] = 0.0;
        for (j, &p) in psi.iter().enumerate().take(nlast).skip(1) {
            if p <= 0.0 {
                return Err(EmError::DegenerateProfile {
                    psi: p,
                    mu: grid.nodes()[j],
                });
            }
        }
        let h = ricci_potential_of_profile(&grid, &psi)?;
        let state = Self {
            u: grid.nodes().to_vec(),
            grid,
            psi,
            h,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    /// Momentum profile psi at the nodes.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// Hamiltonian of the rotation field (the moment coordinate itself).
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Ricci potential, normalized by `integral(e^h dA) = 4 pi`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Integrate a nodal field against the area measure `2 pi d mu`.
    pub fn integrate_da(&self, f: &[f64]) -> f64 {
        2.0 * PI * self.grid.integrate(f)
    }

    /// Pointwise density of the area element against d mu (constant 2 pi).
    pub fn area_element(&self) -> f64 {
        2.0 * PI
    }

    /// Gaussian curvature at the nodes: K = -psi''/2.
    pub fn gauss_curvature(&self) -> Vec<f64> {
        let dpsi = self.grid.deriv(&self.psi);
        self.grid.deriv(&dpsi).iter().map(|v| -v / 2.0).collect()
    }

    /// Check every structural invariant of a canonical state.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let n = g.n();
        let dpsi = g.deriv(&self.psi);
        if (dpsi[0] - 2.0).abs() > 1e-8 || (dpsi[n] + 2.0).abs() > 1e-8 {
            return Err(EmError::Numerical(format!(
                "pole closure derivative off: psi'(-1) = {:.10}, psi'(1) = {:.10}",
                dpsi[0], dpsi[n]
            )));
        }
        let ones = vec![1.0; g.len()];
        let area = 2.0 * PI * g.integrate(&ones);
        if (area - TOTAL_AREA).abs() > 1e-10 {
            return Err(EmError::Numerical(format!("area drifted: {area:.12}")));
        }
        let moment = 2.0 * PI * g.integrate(&self.u);
        if moment.abs() > 1e-9 {
            return Err(EmError::Numerical(format!(
                "Hamiltonian mean not zero: {moment:.3e}"
            )));
        }
        let eh: Vec<f64> = self.h.iter().map(|v| v.exp()).collect();
        let weighted = 2.0 * PI * g.integrate(&eh);
        if (weighted - TOTAL_AREA).abs() > 1e-8 * TOTAL_AREA {
            return Err(EmError::Numerical(format!(
                "Ricci potential normalization off: {weighted:.12}"
            )));
        }
        let total_curv = 2.0 * PI * g.integrate(&self.gauss_curvature());
        if (total_curv - TOTAL_AREA).abs() > 1e-8 {
            return Err(EmError::Numerical(format!(
                "total curvature off: {total_curv:.12}"
            )));
        }
        Ok(())
    }
}

/// The unit round sphere: psi = 1 - mu^2, constant curvature one, h = 0.
pub fn round_reference(grid: Arc<Grid>) -> MetricState {
    let psi: Vec<f64> = grid.nodes().iter().map(|m| 1.0 - m * m).collect();
    MetricState {
        u: grid.nodes().to_vec(),
        h: vec![0.0; grid.len()],
        grid,
        psi,
    }
}

/// An invariant Kaehler potential over a background state.
#[derive(Debug, Clone)]
pub struct Potential {
    pub background: MetricState,
    pub phi: Vec<f64>,
}

impl Potential {
    pub fn new(background: MetricState, phi: Vec<f64>) -> Self {
        assert_eq!(phi.len(), background.grid().len(), "field length mismatch");
        Self { background, phi }
    }

    /// Volume ratio omega_phi / omega = 1 + (psi phi'/2)' at the nodes.
    pub fn ma_ratio(&self) -> Vec<f64> {
        let g = self.background.grid();
        let dphi = g.deriv(&self.phi);
        let flux: Vec<f64> = self
            .background
            .psi()
            .iter()
            .zip(&dphi)
            .map(|(p, d)| p * d / 2.0)
            .collect();
        g.deriv(&flux).iter().map(|v| 1.0 + v).collect()
    }

    /// Err unless omega_phi > 0 at every node.
    pub fn check_positivity(&self) -> Result<Vec<f64>> {
        let ma = self.ma_ratio();
        let mut min_ratio = f64::INFINITY;
        let mut at = 0.0;
        for (j, &r) in ma.iter().enumerate() {
            if r < min_ratio {
                min_ratio = r;
                at = self.background.grid().nodes()[j];
            }
        }
        if min_ratio <= 0.0 {
            return Err(EmError::PositivityViolated {
                min_ratio,
                mu: at,
            });
        }
        Ok(ma)
    }

    pub fn is_admissible(&self) -> bool {
        self.ma_ratio().iter().all(|&r| r > 0.0)
    }

    /// max phi - min phi.
    pub fn osc(&self) -> f64 {
        osc(&self.phi)
    }
}

pub fn osc(f: &[f64]) -> f64 {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Hamiltonian of the rotation field for omega_phi: u_phi = mu + psi phi'/2.
///
/// The values are strictly increasing with range exactly [-1, 1]; the
/// endpoints are pinned because psi vanishes there.
pub fn hamiltonian_of_potential(p: &Potential) -> Result<Vec<f64>> {
    p.check_positivity()?;
    Ok(hamiltonian_unchecked(p))
}

fn hamiltonian_unchecked(p: &Potential) -> Vec<f64> {
    let g = p.background.grid();
    let dphi = g.deriv(&p.phi);
    let mut u: Vec<f64> = g
        .nodes()
        .iter()
        .zip(p.background.psi().iter().zip(&dphi))
        .map(|(m, (psi, d))| m + psi * d / 2.0)
        .collect();
    u[0] = -1.0;
    u[g.n()] = 1.0;
    u
}

/// Weighted measure density of omega_phi against d mu on the background
/// grid: `e^{-sigma(u_phi)} * (omega_phi/omega)`. Integrating `f * density`
/// with [`MetricState::integrate_da`] computes `int f e^{-sigma(u_phi)}
/// omega_phi` for background-nodal `f`.
pub fn weighted_measure_density(p: &Potential, sigma: &SigmaSpec) -> Result<Vec<f64>> {
    let ma = p.check_positivity()?;
    let u = hamiltonian_unchecked(p);
    Ok(ma
        .iter()
        .zip(&u)
        .map(|(r, s)| r * (-sigma.eval(*s)).exp())
        .collect())
}

/// Result of re-expressing omega_phi in its own canonical moment coordinate.
#[derive(Debug, Clone)]
pub struct Canonicalization {
    /// The canonical state of omega_phi.
    pub state: MetricState,
    /// u_phi at the background nodes (the forward coordinate change).
    pub new_moment: Vec<f64>,
    /// Volume ratio omega_phi/omega at the background nodes.
    pub ma_ratio: Vec<f64>,
}

/// Canonicalize omega_phi = omega + i ddbar phi.
///
/// The new profile is `psi_phi(u_phi) = psi * ma_ratio`, re-interpolated
/// onto the collocation nodes of the new moment coordinate by barycentric
/// evaluation at the preimages of the nodes under the monotone map u_phi.
pub fn canonicalize(p: &Potential) -> Result<Canonicalization> {
    let g = p.background.grid();
    let n = g.n();
    let ma = p.check_positivity()?;
    let new_moment = hamiltonian_unchecked(p);
    for j in 0..n {
        if new_moment[j + 1] <= new_moment[j] {
            return Err(EmError::Numerical(format!(
                "moment map not monotone between nodes {j} and {}",
                j + 1
            )));
        }
    }

    let psi_at_bg: Vec<f64> = p
        .background
        .psi()
        .iter()
        .zip(&ma)
        .map(|(p, r)| p * r)
        .collect();

    let mut psi_new = vec![0.0; g.len()];
    for j in 1..n {
        let target = g.nodes()[j];
        let pre = invert_monotone(g, &new_moment, target)?;
        psi_new[j] = g.interpolate(&psi_at_bg, pre);
    }

    let state = MetricState::from_profile(p.background.grid_arc(), psi_new)?;
    Ok(Canonicalization {
        state,
        new_moment,
        ma_ratio: ma,
    })
}

/// Canonical state of omega_phi (see [`canonicalize`]).
pub fn apply_potential(p: &Potential) -> Result<MetricState> {
    Ok(canonicalize(p)?.state)
}

/// Invert the interpolant of the increasing nodal map at `target` by
/// bisection on [-1, 1].
fn invert_monotone(g: &Grid, map: &[f64], target: f64) -> Result<f64> {
    let mut lo = -1.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = g.interpolate(map, mid);
        if !v.is_finite() {
            return Err(EmError::Numerical(
                "re-interpolation produced a non-finite moment value".into(),
            ));
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recover the potential (zero-mean representative) from a canonicalization:
/// phi' = 2 (u_phi - mu) / psi, integrated spectrally.
pub fn recover_potential(c: &Canonicalization, background: &MetricState) -> Vec<f64> {
    let g = background.grid();
    let n = g.n();
    let mut dphi = vec![0.0; g.len()];
    for j in 1..n {
        dphi[j] = 2.0 * (c.new_moment[j] - g.nodes()[j]) / background.psi()[j];
    }
    // At the poles psi -> 0 with u_phi - mu -> 0; one-sided limit via the
    // derivative of the map: phi' = 2 (ma - 1) / psi'.
    let dpsi = g.deriv(background.psi());
    dphi[0] = 2.0 * (c.ma_ratio[0] - 1.0) / dpsi[0];
    dphi[n] = 2.0 * (c.ma_ratio[n] - 1.0) / dpsi[n];
    let mut phi = g.antiderivative(&dphi);
    let mean = g.integrate(&phi) / 2.0;
    for v in &mut phi {
        *v -= mean;
    }
    phi
}

/// Ricci potential of a state: solves `(psi h')' = -psi'' - 2` through
/// the first integral `h' = (-psi' - 2 mu)/psi`, endpoint values by the
/// removable-singularity limit, additive constant fixed by the e^h
/// normalization.
pub fn ricci_potential(state: &MetricState) -> Result<Vec<f64>> {
    ricci_potential_of_profile(state.grid(), state.psi())
}

fn ricci_potential_of_profile(grid: &Grid, psi: &[f64]) -> Result<Vec<f64>> {
    let n = grid.n();
    let dpsi = grid.deriv(psi);
    let d2psi = grid.deriv(&dpsi);
    let mut hp = vec![0.0; grid.len()];
    for j in 1..n {
        if psi[j] <= 0.0 {
            return Err(EmError::DegenerateProfile {
                psi: psi[j],
                mu: grid.nodes()[j],
            });
        }
        hp[j] = (-dpsi[j] - 2.0 * grid.nodes()[j]) / psi[j];
    }
    hp[0] = (-d2psi[0] - 2.0) / dpsi[0];
    hp[n] = (-d2psi[n] - 2.0) / dpsi[n];
    let mut h = grid.antiderivative(&hp);
    let eh: Vec<f64> = h.iter().map(|v| v.exp()).collect();
    let c = (grid.integrate(&eh) / 2.0).ln();
    for v in &mut h {
        *v -= c;
    }
    Ok(h)
}

/// The sigma-twisted Laplacian in self-adjoint divergence form:
/// `(1/2) e^{sigma(u)} (e^{-sigma(u)} psi f')'`.
///
/// Self-adjoint in the `e^{-sigma(u)}`-weighted inner product; identical to
/// `(psi f')'/2 - sigma_dot psi f'/2` up to roundoff.
pub fn weighted_laplacian(state: &MetricState, sigma: &SigmaSpec, f: &[f64]) -> Vec<f64> {
    let g = state.grid();
    let df = g.deriv(f);
    let flux: Vec<f64> = state
        .psi()
        .iter()
        .zip(df.iter().zip(state.u()))
        .map(|(p, (d, u))| (-sigma.eval(*u)).exp() * p * d)
        .collect();
    let dflux = g.deriv(&flux);
    dflux
        .iter()
        .zip(state.u())
        .map(|(v, u)| 0.5 * sigma.eval(*u).exp() * v)
        .collect()
}

/// Squared Hermitian gradient norm `|grad f|^2 = psi (f')^2 / 2`.
pub fn gradient_norm_sq(state: &MetricState, f: &[f64]) -> Vec<f64> {
    let df = state.grid().deriv(f);
    state
        .psi()
        .iter()
        .zip(&df)
        .map(|(p, d)| p * d * d / 2.0)
        .collect()
}
