//! The multiplier weight sigma: families, admissibility, normalization.
//!
//! A weight is admissible of class (a) when `sigma_dot <= 0 <= sigma_ddot`
//! on the moment interval, and of class (b) when `sigma_ddot > 0` there.
//! Classification is a sampling check on a fixed fine grid, not a symbolic
//! proof. The `neglog` family requires its offset C > 1; the weaker bound
//! "C greater than the interval minimum" would leave log(s + C) undefined
//! at the left endpoint, so the constructor enforces the finiteness bound.

use crate::error::{EmError, Result};
use crate::geometry::{MetricState, TOTAL_AREA};

/// Number of interior sample points used to classify admissibility.
const CLASSIFY_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissibilityClass {
    /// sigma_dot <= 0 <= sigma_ddot (non-strict; constants and decreasing
    /// linear weights are admitted here).
    A,
    /// sigma_ddot > 0.
    B,
    None,
}

impl std::fmt::Display for AdmissibilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdmissibilityClass::A => write!(f, "a"),
            AdmissibilityClass::B => write!(f, "b"),
            AdmissibilityClass::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaFamily {
    Zero,
    /// a * s
    Linear(f64),
    /// eps * s^2
    Quadratic(f64),
    /// -log(s + offset), offset > 1
    NegLog(f64),
    /// c0 + c1 s + c2 s^2 + ...
    Poly(Vec<f64>),
}

impl SigmaFamily {
    fn eval(&self, s: f64) -> f64 {
        match self {
            SigmaFamily::Zero => 0.0,
            SigmaFamily::Linear(a) => a * s,
            SigmaFamily::Quadratic(e) => e * s * s,
            SigmaFamily::NegLog(c) => -(s + c).ln(),
            SigmaFamily::Poly(cs) => cs.iter().rev().fold(0.0, |acc, c| acc * s + c),
        }
    }

    fn d1(&self, s: f64) -> f64 {
        match self {
            SigmaFamily::Zero => 0.0,
            SigmaFamily::Linear(a) => *a,
            SigmaFamily::Quadratic(e) => 2.0 * e * s,
            SigmaFamily::NegLog(c) => -1.0 / (s + c),
            SigmaFamily::Poly(cs) => {
                let mut acc = 0.0;
                for (k, c) in cs.iter().enumerate().skip(1).rev() {
                    acc = acc * s + k as f64 * c;
                }
                acc
            }
        }
    }

    fn d2(&self, s: f64) -> f64 {
        match self {
            SigmaFamily::Zero | SigmaFamily::Linear(_) => 0.0,
            SigmaFamily::Quadratic(e) => 2.0 * e,
            SigmaFamily::NegLog(c) => 1.0 / ((s + c) * (s + c)),
            SigmaFamily::Poly(cs) => {
                let mut acc = 0.0;
                for (k, c) in cs.iter().enumerate().skip(2).rev() {
                    acc = acc * s + (k * (k - 1)) as f64 * c;
                }
                acc
            }
        }
    }
}

/// A multiplier weight `sigma(s) = family(s) + tilt * s + shift` with exact
/// derivative evaluators and a sampled admissibility class.
///
/// The tilt term exists so that calibration over the linear pencil
/// `sigma + a s` stays inside the type.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    family: SigmaFamily,
    tilt: f64,
    shift: f64,
    class: AdmissibilityClass,
}

impl SigmaSpec {
    pub fn new(family: SigmaFamily) -> Result<Self> {
        if let SigmaFamily::NegLog(c) = family {
            if c <= 1.0 {
                return Err(EmError::NeglogOffset(c));
            }
        }
        let mut spec = Self {
            family,
            tilt: 0.0,
            shift: 0.0,
            class: AdmissibilityClass::None,
        };
        spec.class = spec.classify();
        Ok(spec)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.family.eval(s) + self.tilt * s + self.shift
    }

    pub fn d1(&self, s: f64) -> f64 {
        self.family.d1(s) + self.tilt
    }

    pub fn d2(&self, s: f64) -> f64 {
        self.family.d2(s)
    }

    pub fn family(&self) -> &SigmaFamily {
        &self.family
    }

    pub fn tilt(&self) -> f64 {
        self.tilt
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn admissibility_class(&self) -> AdmissibilityClass {
        self.class
    }

    /// Same weight shifted by a constant; the class is unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.shift += c;
        out
    }

    /// Same weight plus `a * s`; the class is re-sampled.
    pub fn tilted(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.tilt += a;
        out.class = out.classify();
        out
    }

    fn classify(&self) -> AdmissibilityClass {
        let m = CLASSIFY_SAMPLES;
        let mut all_a = true;
        let mut all_b = true;
        for i in 0..=m {
            let s = -1.0 + 2.0 * i as f64 / m as f64;
            let d1 = self.d1(s);
            let d2 = self.d2(s);
            if !(d1 <= 0.0 && d2 >= 0.0) {
                all_a = false;
            }
            if d2 <= 0.0 {
                all_b = false;
            }
            if !d1.is_finite() || !d2.is_finite() || !self.eval(s).is_finite() {
                return AdmissibilityClass::None;
            }
        }
        if all_a {
            AdmissibilityClass::A
        } else if all_b {
            AdmissibilityClass::B
        } else {
            AdmissibilityClass::None
        }
    }

    /// Relative defect of the weighted-volume normalization against a
    /// canonical state: `(1/V) int e^{-sigma(u)} omega - 1`.
    pub fn normalization_defect(&self, state: &MetricState) -> f64 {
        let w: Vec<f64> = state.u().iter().map(|u| (-self.eval(*u)).exp()).collect();
        state.integrate_da(&w) / TOTAL_AREA - 1.0
    }

    /// Err unless the weighted volume equals the area to 1e-9 relative.
    pub fn require_normalized(&self, state: &MetricState) -> Result<()> {
        let defect = self.normalization_defect(state);
        if defect.abs() > 1e-9 {
            return Err(EmError::SigmaNotNormalized {
                ratio: defect + 1.0,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.family {
            SigmaFamily::Zero => write!(f, "zero")?,
            SigmaFamily::Linear(a) => write!(f, "lin:{a}")?,
            SigmaFamily::Quadratic(e) => write!(f, "quad:{e}")?,
            SigmaFamily::NegLog(c) => write!(f, "neglog:{c}")?,
            SigmaFamily::Poly(cs) => {
                write!(f, "poly:")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
            }
        }
        if self.tilt != 0.0 {
            write!(f, " +{}*s", self.tilt)?;
        }
        if self.shift != 0.0 {
            write!(f, " +{}", self.shift)?;
        }
        Ok(())
    }
}

/// Parse a weight descriptor:
/// `zero | lin:<a> | quad:<eps> | neglog:<C> | poly:<c0>,<c1>,...`.
pub fn make_sigma(descriptor: &str) -> Result<SigmaSpec> {
    let d = descriptor.trim();
    let bad = || EmError::SigmaParse(descriptor.to_string());
    if d == "zero" {
        return SigmaSpec::new(SigmaFamily::Zero);
    }
    let (tag, rest) = d.split_once(':').ok_or_else(bad)?;
    match tag {
        "lin" => {
            let a: f64 = rest.parse().map_err(|_| bad())?;
            SigmaSpec::new(SigmaFamily::Linear(a))
        }
        "quad" => {
            let e: f64 = rest.parse().map_err(|_| bad())?;
            SigmaSpec::new(SigmaFamily::Quadratic(e))
        }
        "neglog" => {
            let c: f64 = rest.parse().map_err(|_| bad())?;
            SigmaSpec::new(SigmaFamily::NegLog(c))
        }
        "poly" => {
            let coeffs: Vec<f64> = rest
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            if coeffs.is_empty() {
                return Err(bad());
            }
            SigmaSpec::new(SigmaFamily::Poly(coeffs))
        }
        _ => Err(bad()),
    }
}

/// Shift sigma by the constant that makes the weighted volume equal the
/// area: `c = log[(1/V) int e^{-sigma(u)} omega]`. The weighted volume is
/// the same for every state in the class, so any canonical reference works.
pub fn normalize_weight(sigma: &SigmaSpec, reference: &MetricState) -> SigmaSpec {
    let w: Vec<f64> = reference
        .u()
        .iter()
        .map(|u| (-sigma.eval(*u)).exp())
        .collect();
    let c = (reference.integrate_da(&w) / TOTAL_AREA).ln();
    sigma.shifted(c)
}

/// Root-find the tilt that kills the obstruction integral of
/// `sigma + a * s` over the bracket [-10, 10]. The obstruction is strictly
/// decreasing in `a`, so the root is unique when it exists.
pub fn calibrate(base: &SigmaSpec) -> Result<(f64, SigmaSpec)> {
    let obs = |a: f64| crate::em_solver::obstruction(&base.tilted(a));
    let (mut lo, mut hi) = (-10.0, 10.0);
    let (flo, fhi) = (obs(lo), obs(hi));
    if flo == 0.0 {
        return Ok((lo, base.tilted(lo)));
    }
    if fhi == 0.0 {
        return Ok((hi, base.tilted(hi)));
    }
    if flo.signum() == fhi.signum() {
        return Err(EmError::CalibrationFailed { lo, hi });
    }
    // bisection; the integrand is smooth so 80 halvings land far below
    // the obstruction tolerance
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = obs(mid);
        if fm == 0.0 || (hi - lo) < 1e-15 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let spec = base.tilted(a);
    let residual = crate::em_solver::obstruction(&spec);
    if residual.abs() > 1e-10 {
        return Err(EmError::Numerical(format!(
            "calibration residual {residual:.3e} above tolerance"
        )));
    }
    Ok((a, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::round_reference;
    use crate::grid::Grid;
    use std::sync::Arc;

    #[test]
    fn parse_families() {
        assert_eq!(
            make_sigma("zero").unwrap().admissibility_class(),
            AdmissibilityClass::A
        );
        let lin = make_sigma("lin:-1").unwrap();
        assert_eq!(lin.eval(0.5), -0.5);
        assert_eq!(lin.admissibility_class(), AdmissibilityClass::A);
        let quad = make_sigma("quad:0.5").unwrap();
        assert_eq!(quad.eval(1.0), 0.5);
        assert_eq!(quad.admissibility_class(), AdmissibilityClass::B);
        let poly = make_sigma("poly:0,0.1,0.25").unwrap();
        assert!((poly.eval(2.0) - (0.2 + 1.0)).abs() < 1e-15);
        // increasing linear weight is in neither class
        assert_eq!(
            make_sigma("lin:1").unwrap().admissibility_class(),
            AdmissibilityClass::None
        );
    }

    #[test]
    fn parse_failures() {
        assert!(matches!(make_sigma("nope"), Err(EmError::SigmaParse(_))));
        assert!(matches!(make_sigma("lin:abc"), Err(EmError::SigmaParse(_))));
        assert!(matches!(make_sigma("poly:"), Err(EmError::SigmaParse(_))));
        assert!(matches!(
            make_sigma("neglog:1"),
            Err(EmError::NeglogOffset(_))
        ));
        assert!(matches!(
            make_sigma("neglog:0.5"),
            Err(EmError::NeglogOffset(_))
        ));
    }

    #[test]
    fn neglog_is_finite_and_classified() {
        let s = make_sigma("neglog:2").unwrap();
        assert!((s.eval(-1.0) - 0.0).abs() < 1e-15);
        assert_eq!(s.admissibility_class(), AdmissibilityClass::A);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            make_sigma("zero").unwrap(),
            make_sigma("lin:-1").unwrap(),
            make_sigma("quad:0.5").unwrap(),
            make_sigma("neglog:2").unwrap(),
            make_sigma("poly:0.1,-0.2,0.3,0.05").unwrap(),
        ];
        let eps = 1e-5;
        for spec in &specs {
            for i in 0..=100 {
                let s = -0.999 + 1.998 * i as f64 / 100.0;
                let fd1 = (spec.eval(s + eps) - spec.eval(s - eps)) / (2.0 * eps);
                let fd2 =
                    (spec.eval(s + eps) - 2.0 * spec.eval(s) + spec.eval(s - eps)) / (eps * eps);
                assert!((fd1 - spec.d1(s)).abs() < 1e-7, "{spec} d1 at {s}");
                assert!((fd2 - spec.d2(s)).abs() < 1e-4, "{spec} d2 at {s}");
            }
        }
    }

    #[test]
    fn class_is_shift_stable() {
        for d in ["zero", "lin:-1", "quad:0.5", "neglog:2", "poly:0,0.1,0.25"] {
            let s = make_sigma(d).unwrap();
            assert_eq!(
                s.admissibility_class(),
                s.shifted(3.7).admissibility_class(),
                "{d}"
            );
        }
    }

    #[test]
    fn normalization_constants() {
        let reference = round_reference(Arc::new(Grid::new(64).unwrap()));
        let zero = normalize_weight(&make_sigma("zero").unwrap(), &reference);
        assert!(zero.shift().abs() < 1e-14);

        let lin = normalize_weight(&make_sigma("lin:-1").unwrap(), &reference);
        let expect = ((std::f64::consts::E - 1.0 / std::f64::consts::E) / 2.0).ln();
        assert!((lin.shift() - expect).abs() < 1e-12);
        assert!((expect - 0.161439).abs() < 1e-6);

        for d in ["quad:0.5", "neglog:2", "poly:0,0.1,0.25"] {
            let s = normalize_weight(&make_sigma(d).unwrap(), &reference);
            assert!(
                s.normalization_defect(&reference).abs() < 1e-12,
                "{d} defect"
            );
        }
    }

    #[test]
    fn calibration_roots() {
        let (a, _) = calibrate(&make_sigma("quad:0.5").unwrap()).unwrap();
        assert!(a.abs() < 1e-10, "even weight calibrates to zero, got {a}");
        let (a, _) = calibrate(&make_sigma("zero").unwrap()).unwrap();
        assert!(a.abs() < 1e-10);

        let (a, spec) = calibrate(&make_sigma("neglog:2").unwrap()).unwrap();
        assert!(a > 0.0);
        assert!(crate::em_solver::obstruction(&spec).abs() < 1e-10);

        // independent oracle: dense Simpson root of int nu e^{-a nu} (nu+2)
        let dense_obs = |a: f64| {
            let m = 20_000;
            let hstep = 2.0 / m as f64;
            let f = |x: f64| x * (x + 2.0) * (-a * x).exp();
            let mut acc = f(-1.0) + f(1.0);
            for i in 1..m {
                let x = -1.0 + i as f64 * hstep;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            acc * hstep / 3.0
        };
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if dense_obs(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((a - 0.5 * (lo + hi)).abs() < 1e-8, "a = {a}");
    }
}
