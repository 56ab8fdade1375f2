//! JSON result record and CSV profile written by the solve command.

use std::path::Path;

use serde::Serialize;

use emsphere::functionals::FunctionalRecord;
use emsphere::MetricState;

/// Echo of the numerically relevant configuration. Output paths are
/// deliberately excluded so that records of identical computations are
/// byte-identical regardless of where they are written.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub sigma: String,
    pub grid_n: usize,
    pub method: String,
    pub t_step_init: f64,
    pub t_step_min: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub ds: f64,
    pub s_max: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub config: ConfigEcho,
    pub outcome: String,
    pub obstruction: f64,
    pub futaki_re: f64,
    pub futaki_im: f64,
    #[serde(rename = "I_tilde")]
    pub i_tilde: f64,
    #[serde(rename = "J_tilde")]
    pub j_tilde: f64,
    #[serde(rename = "F_tilde")]
    pub f_tilde: f64,
    pub osc: f64,
    pub residual_sup: f64,
    pub steps: usize,
    pub wall_time_ms: u64,
}

impl ResultRecord {
    pub fn new(config: ConfigEcho, obstruction: f64) -> Self {
        Self {
            config,
            outcome: "error".into(),
            obstruction,
            futaki_re: 0.0,
            futaki_im: 0.0,
            i_tilde: 0.0,
            j_tilde: 0.0,
            f_tilde: 0.0,
            osc: 0.0,
            residual_sup: 0.0,
            steps: 0,
            wall_time_ms: 0,
        }
    }

    pub fn fill_energies(&mut self, energies: &FunctionalRecord) {
        self.i_tilde = energies.i;
        self.j_tilde = energies.j;
        self.f_tilde = energies.f;
        self.osc = energies.osc;
    }
}

#[derive(Debug, Clone)]
pub struct ProfileRow {
    pub mu: f64,
    pub psi: f64,
    pub u: f64,
    pub h: f64,
    pub phi: f64,
}

impl ProfileRow {
    pub fn from_state(state: &MetricState, phi: Option<&[f64]>) -> Vec<Self> {
        (0..state.grid().len())
            .map(|j| ProfileRow {
                mu: state.grid().nodes()[j],
                psi: state.psi()[j],
                u: state.u()[j],
                h: state.h()[j],
                phi: phi.map_or(0.0, |p| p[j]),
            })
            .collect()
    }

    pub fn write_csv(rows: &[Self], path: &Path) -> std::io::Result<()> {
        let mut out = String::from("mu,psi,u,h,phi\n");
        for r in rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.mu, r.psi, r.u, r.h, r.phi
            ));
        }
        std::fs::write(path, out)
    }
}
