//! Ground-state energy by second-order perturbation theory, the exact
//! resolvent form and the exact self-consistent form, plus the
//! distance-dependent Casimir-Polder potential and force.
//!
//! Dimensionless forms:
//!
//! ```text
//! E2    = -int D(k)/(k + 1) dk
//! E_8a  = int D |G+|^2 (k - 1)^2 dk - 4 int D(k) |G+(k)|^2 W(k) dk,   W(k) = int D(q) (q + 2k)/(q + k)^2 dq
//! E_14  : E (1 + E) = I,  I = int D(k) eta(k) dk,  E = 2I / (1 + sqrt(1 + 4I))
//! ```
//!
//! The second-order potential `dE(d) = -int [D(k; d) - D_free(k)]/(k + 1) dk`
//! is computed without regulator, once along the imaginary axis and once by
//! Abel summation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::EtaEvaluator;
use crate::model::{check_stability, Geometry, ModelConfig, RegulatorKind};
use crate::modes::{wall_functions, CouplingDensity};
use crate::quadrature::{self, gauss_kronrod_15, CompensatedSum, Tolerance};
use crate::resolvent::ResolventEvaluator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SecondOrder,
    ExactResolvent,
    SelfConsistent,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second-order" => Ok(Method::SecondOrder),
            "exact-resolvent" => Ok(Method::ExactResolvent),
            "self-consistent" => Ok(Method::SelfConsistent),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::SecondOrder => "second-order",
            Method::ExactResolvent => "exact-resolvent",
            Method::SelfConsistent => "self-consistent",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub method: Method,
    pub value: f64,
    pub quad_error: f64,
    /// Exact resolvent form: the single and double integral terms.
    pub terms: Option<[f64; 2]>,
    /// Self-consistent form: the integral `I`.
    pub integral: Option<f64>,
    pub config: ModelConfig,
}

pub fn energy(cfg: &ModelConfig, method: Method) -> Result<EnergyReport> {
    match method {
        Method::SecondOrder => energy_second_order(cfg),
        Method::ExactResolvent => energy_exact_resolvent(cfg),
        Method::SelfConsistent => energy_self_consistent(cfg),
    }
}

pub fn energy_second_order(cfg: &ModelConfig) -> Result<EnergyReport> {
    let d = CouplingDensity::new(cfg);
    let r = quadrature::integrate(|k: f64| -d.eval(k) / (k + 1.0), &d.breakpoints(&[1.0]), &cfg.tolerance())?;
    Ok(EnergyReport {
        method: Method::SecondOrder,
        value: r.value,
        quad_error: r.error,
        terms: None,
        integral: None,
        config: cfg.clone(),
    })
}

/// Zero-coupling factor `eta0(k) = -1/(k + 1)`.
pub fn eta0(k: f64) -> f64 {
    -1.0 / (k + 1.0)
}

/// `int D(k) eta0(k) dk`, the lowest-order self-consistent integral; it is
/// the second-order energy.
pub fn second_order_via_eta0(cfg: &ModelConfig) -> Result<f64> {
    let d = CouplingDensity::new(cfg);
    let r = quadrature::integrate(|k: f64| d.eval(k) * eta0(k), &d.breakpoints(&[1.0]), &cfg.tolerance())?;
    Ok(r.value)
}

fn require_stable(cfg: &ModelConfig) -> Result<()> {
    let s = check_stability(cfg)?;
    if s.stable {
        Ok(())
    } else {
        Err(Error::UnstableConfig { margin: s.margin })
    }
}

/// Breakpoints concentrating panels on the Lorentzian of `|G+|^2`.
fn resonance_breaks(density: &CouplingDensity, k_r: f64, width: f64) -> Vec<f64> {
    let end = density.support_end();
    let mut extra = vec![1.0, k_r];
    if width > 0.0 {
        let mut s = width / 16.0;
        while s < 2.0 {
            extra.push(k_r - s);
            extra.push(k_r + s);
            s *= 2.0;
        }
    }
    extra.retain(|k| *k > 0.0 && *k < end);
    density.breakpoints(&extra)
}

pub fn energy_exact_resolvent(cfg: &ModelConfig) -> Result<EnergyReport> {
    require_stable(cfg)?;
    let tol = cfg.tolerance();
    let inner_tol = tol.tightened(1e-3);
    let ev = ResolventEvaluator::with_tolerance(cfg, inner_tol);
    let d = *ev.density();
    if d.coupling() == 0.0 {
        return Ok(EnergyReport {
            method: Method::ExactResolvent,
            value: 0.0,
            quad_error: 0.0,
            terms: Some([0.0, 0.0]),
            integral: None,
            config: cfg.clone(),
        });
    }
    let res = ev.resonance()?;
    let breaks = resonance_breaks(&d, res.k, res.width);
    let wbreaks = d.breakpoints(&[1.0]);
    let mut failure: Option<Error> = None;
    let r = quadrature::integrate(
        |k: f64| -> [f64; 2] {
            let dk = d.eval(k);
            if dk == 0.0 || failure.is_some() {
                return [0.0, 0.0];
            }
            let a = match ev.real_part(k) {
                Ok(a) => a,
                Err(e) => {
                    failure = Some(e);
                    return [0.0, 0.0];
                }
            };
            let im = 2.0 * PI * dk;
            let g2 = 1.0 / (a * a + im * im);
            let w = match quadrature::integrate(
                |q: f64| d.eval(q) * (q + 2.0 * k) / ((q + k) * (q + k)),
                &wbreaks,
                &inner_tol,
            ) {
                Ok(r) => r.value,
                Err(e) => {
                    failure = Some(e);
                    return [0.0, 0.0];
                }
            };
            [dk * g2 * (k - 1.0) * (k - 1.0), -4.0 * dk * g2 * w]
        },
        &breaks,
        &tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let [t1, t2] = r.value;
    Ok(EnergyReport {
        method: Method::ExactResolvent,
        value: t1 + t2,
        quad_error: r.error * 2.0,
        terms: Some([t1, t2]),
        integral: None,
        config: cfg.clone(),
    })
}

/// Root of `E (1 + E) = I` continuous with `E = 0` at `I = 0`, and its
/// propagated error.
pub fn solve_self_consistent(integral: f64, error: f64) -> Result<(f64, f64)> {
    let disc = 1.0 + 4.0 * integral;
    if disc < 0.0 {
        return Err(Error::BranchCollapse(disc));
    }
    let root = disc.sqrt();
    let e = 2.0 * integral / (1.0 + root);
    let err = if root > 0.0 { error / root } else { f64::INFINITY };
    Ok((e, err))
}

pub fn energy_self_consistent(cfg: &ModelConfig) -> Result<EnergyReport> {
    let eta = EtaEvaluator::new(cfg)?;
    energy_self_consistent_with(cfg, &eta)
}

pub fn energy_self_consistent_with(cfg: &ModelConfig, eta: &EtaEvaluator) -> Result<EnergyReport> {
    let d = *eta.resolvent().density();
    let mut failure: Option<Error> = None;
    let r = quadrature::integrate(
        |k: f64| {
            let dk = d.eval(k);
            if dk == 0.0 || failure.is_some() {
                return 0.0;
            }
            match eta.eta_real(k) {
                Ok(e) => dk * e,
                Err(err) => {
                    failure = Some(err);
                    0.0
                }
            }
        },
        &d.breakpoints(&[1.0]),
        &cfg.tolerance(),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (value, quad_error) = solve_self_consistent(r.value, r.error)?;
    Ok(EnergyReport {
        method: Method::SelfConsistent,
        value,
        quad_error,
        terms: None,
        integral: Some(r.value),
        config: cfg.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub d: f64,
    pub value: f64,
    pub error: f64,
}

/// Second-order potential at one distance by both routes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutePair {
    pub d: f64,
    pub contour: f64,
    pub contour_error: f64,
    pub abel: f64,
    pub abel_error: f64,
}

impl RoutePair {
    pub fn agree(&self) -> bool {
        (self.contour - self.abel).abs() <= self.contour_error + self.abel_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialCurve {
    pub method: Method,
    pub points: Vec<CurvePoint>,
    /// Both second-order routes, present for the second-order method.
    pub routes: Option<Vec<RoutePair>>,
    pub config: ModelConfig,
}

pub fn distance_grid(d_min: f64, d_max: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if !(d_min > 0.0) || !(d_max > d_min) {
        return Err(Error::InvalidArgument(format!(
            "distance grid needs 0 < d_min < d_max, got {d_min}, {d_max}"
        )));
    }
    if points < 2 {
        return Err(Error::GridTooCoarse { required: 2, got: points });
    }
    let n = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let t = i as f64 / n;
            if i == points - 1 {
                d_max
            } else if log {
                (d_min.ln() + t * (d_max.ln() - d_min.ln())).exp()
            } else {
                d_min + t * (d_max - d_min)
            }
        })
        .collect())
}

/// `P(k)` with `[D(k; d) - D_free(k)]_{rho=1} = Re[(u/pi) P(k) e^{2ikd}]`.
fn wall_polynomial(k: Complex64, d: f64, p_par: f64, p_z: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let a = 2.0 * p_z + p_par;
    -i * (a / (8.0 * d * d * d)) - k * (a / (4.0 * d * d)) + i * k * k * (p_par / (2.0 * d))
}

/// Unregulated wall modulation of the density, `D(k; d) - D_free(k)` at `rho = 1`.
pub fn wall_modulation(k: f64, d: f64, u: f64, p_par: f64, p_z: f64) -> f64 {
    let (sinc, s) = wall_functions(2.0 * k * d);
    u * k * k * k * (p_z / PI * (sinc - s) - p_par / (2.0 * PI) * (sinc + s))
}

/// Rotated-contour route: `dE = -Re[ i int_0^inf (u/pi) P(i xi) e^{-2 xi d} rho(i xi)/(1 + i xi) d xi ]`.
/// With `regulated` the exponential form factor is kept (it stays bounded on
/// the imaginary axis); otherwise `rho = 1`.
pub fn cp_contour(cfg: &ModelConfig, d: f64, regulated: bool) -> Result<(f64, f64)> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let u = cfg.osc.coupling;
    if u == 0.0 {
        return Ok((0.0, 0.0));
    }
    let kc = if regulated {
        match cfg.reg.kind {
            RegulatorKind::Exponential => Some(cfg.reg.cutoff),
            _ => {
                return Err(Error::InvalidArgument(
                    "only the exponential form factor continues to the imaginary axis".into(),
                ))
            }
        }
    } else {
        None
    };
    let (p_par, p_z) = (cfg.osc.parallel_weight(), cfg.osc.normal_weight());
    let i = Complex64::new(0.0, 1.0);
    let end = 45.0 / d;
    let mut breaks = vec![0.0, end];
    let mut s = 1e-4 * (1.0f64).min(0.5 / d);
    while s < end {
        breaks.push(s);
        s *= 4.0;
    }
    breaks.push(1.0);
    breaks.push(0.5 / d);
    breaks.retain(|b| *b <= end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let r = quadrature::integrate(
        |xi: f64| {
            let k = i * xi;
            let mut v = wall_polynomial(k, d, p_par, p_z) * (-2.0 * xi * d).exp() / (1.0 + k) * i;
            if let Some(kc) = kc {
                v *= (-k / kc).exp();
            }
            -(u / PI) * v.re
        },
        &breaks,
        &cfg.tolerance().tightened(1e-2),
    )?;
    Ok((r.value, r.error + 1e-15 * r.value.abs()))
}

/// Abel-damped integral `-int F(k) e^{-eps k}/(k + 1) dk`, integrated panel
/// by panel over half periods of the wall oscillation with compensated
/// summation. Returns the value and an error estimate.
fn abel_damped(u: f64, d: f64, p_par: f64, p_z: f64, eps: f64) -> Result<(f64, f64)> {
    let half = PI / (2.0 * d);
    let end = 40.0 / eps;
    let mut f = |k: f64| -wall_modulation(k, d, u, p_par, p_z) * (-eps * k).exp() / (k + 1.0);
    let mut sum = CompensatedSum::default();
    let mut err = 0.0;
    // The first periods also carry the 1/(k + 1) scale; refine them adaptively.
    let head = (4.0 * half).min(end);
    let r = quadrature::integrate(&mut f, &[0.0, 0.25 * head, 0.5 * head, head], &Tolerance::new(1e-300, 1e-12, 4000))?;
    sum.add(r.value);
    err += r.error;
    let mut a = head;
    while a < end {
        let b = (a + half).min(end);
        // Panels are judged against the accumulated magnitude: in the far
        // zone the total is many orders below a single half period.
        let scale = 1e-13 * sum.magnitude_sum();
        let (v, e): (f64, f64) = gauss_kronrod_15(&mut f, a, b);
        if e > 1e-13 * v.abs() && e > scale {
            let r = quadrature::integrate(&mut f, &[a, b], &Tolerance::new(scale.max(1e-300), 1e-12, 4000))?;
            sum.add(r.value);
            err += r.error;
        } else {
            sum.add(v);
            err += e;
        }
        a = b;
    }
    let roundoff = 4.0 * f64::EPSILON * sum.magnitude_sum();
    Ok((sum.value(), err + roundoff))
}

/// Neville extrapolation of `(x_i, y_i)` to `x = 0`.
pub fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p[0]
}

/// Abel route. The damping schedule is in units of `2d`, the radius of
/// analyticity of the damped integral in `eps`.
pub fn cp_abel(cfg: &ModelConfig, d: f64) -> Result<(f64, f64)> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let u = cfg.osc.coupling;
    if u == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (p_par, p_z) = (cfg.osc.parallel_weight(), cfg.osc.normal_weight());
    let mut sched: Vec<f64> = cfg.quad.abel_schedule.iter().map(|s| s * 2.0 * d).collect();
    sched.sort_by(|a, b| b.total_cmp(a));
    let vals: Vec<(f64, f64)> = sched
        .par_iter()
        .map(|&eps| abel_damped(u, d, p_par, p_z, eps))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let n = ys.len();
    let full = neville_at_zero(&sched, &ys);
    let lower = neville_at_zero(&sched[1..], &ys[1..]);
    let quad_err: f64 = vals.iter().map(|v| v.1).sum();
    let extrap_err = (full - lower).abs();
    if n >= 2 && extrap_err > 1e-2 * full.abs() {
        return Err(Error::AbelExtrapolationUnstable {
            distance: d,
            previous: lower,
            current: full,
        });
    }
    Ok((full, extrap_err + quad_err))
}

pub fn cp_routes(cfg: &ModelConfig, d: f64) -> Result<RoutePair> {
    let (contour, abel) = rayon::join(|| cp_contour(cfg, d, false), || cp_abel(cfg, d));
    let (contour, contour_error) = contour?;
    let (abel, abel_error) = abel?;
    Ok(RoutePair {
        d,
        contour,
        contour_error,
        abel,
        abel_error,
    })
}

pub fn cp_potential_second_order(cfg: &ModelConfig, grid: &[f64]) -> Result<PotentialCurve> {
    let routes: Vec<RoutePair> = grid.par_iter().map(|&d| cp_routes(cfg, d)).collect::<Result<Vec<_>>>()?;
    let points = routes
        .iter()
        .map(|r| CurvePoint {
            d: r.d,
            value: r.contour,
            error: r.contour_error.max((r.contour - r.abel).abs()),
        })
        .collect();
    Ok(PotentialCurve {
        method: Method::SecondOrder,
        points,
        routes: Some(routes),
        config: cfg.clone(),
    })
}

/// `E(d) - E(free)` for an exact method with the config's regulator.
pub fn cp_potential_exact(cfg: &ModelConfig, grid: &[f64], method: Method) -> Result<PotentialCurve> {
    let free = energy(&cfg.with_geometry(Geometry::FreeSpace), method)?;
    let points = grid
        .par_iter()
        .map(|&d| {
            let e = energy(&cfg.with_geometry(Geometry::wall(d)?), method)?;
            Ok(CurvePoint {
                d,
                value: e.value - free.value,
                error: e.quad_error + free.quad_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialCurve {
        method,
        points,
        routes: None,
        config: cfg.clone(),
    })
}

pub fn cp_potential(cfg: &ModelConfig, grid: &[f64], method: Method) -> Result<PotentialCurve> {
    match method {
        Method::SecondOrder => cp_potential_second_order(cfg, grid),
        m => cp_potential_exact(cfg, grid, m),
    }
}

fn potential_at(cfg: &ModelConfig, d: f64, method: Method) -> Result<f64> {
    match method {
        Method::SecondOrder => Ok(cp_contour(cfg, d, false)?.0),
        m => {
            let free = energy(&cfg.with_geometry(Geometry::FreeSpace), m)?.value;
            Ok(energy(&cfg.with_geometry(Geometry::wall(d)?), m)?.value - free)
        }
    }
}

/// `F(d) = -d(dE)/dd` at every point of the curve, by central differences of
/// the potential re-evaluated at `d +- h` and `d +- h/2` (`h = d/20`),
/// Richardson-combined. Negative values attract towards the wall.
pub fn cp_force(curve: &PotentialCurve) -> Result<PotentialCurve> {
    const MIN_POINTS: usize = 5;
    if curve.points.len() < MIN_POINTS {
        return Err(Error::GridTooCoarse {
            required: MIN_POINTS,
            got: curve.points.len(),
        });
    }
    let cfg = &curve.config;
    let method = curve.method;
    let points = curve
        .points
        .par_iter()
        .map(|p| {
            let d = p.d;
            let h = 0.05 * d;
            let e = |x: f64| potential_at(cfg, x, method);
            let d1 = (e(d + h)? - e(d - h)?) / (2.0 * h);
            let d2 = (e(d + 0.5 * h)? - e(d - 0.5 * h)?) / h;
            let deriv = (4.0 * d2 - d1) / 3.0;
            Ok(CurvePoint {
                d,
                value: -deriv,
                error: (d2 - d1).abs() / 3.0 * 0.1 + 2.0 * p.error / h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialCurve {
        method,
        points,
        routes: None,
        config: cfg.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asymptotics {
    /// Near zone `-u (p_x + p_y + 2 p_z)/(16 d^3)`.
    pub near: f64,
    /// Far zone `-u/(4 pi d^4)`, isotropic dipoles only.
    pub far: Option<f64>,
}

pub fn asymptotics(cfg: &ModelConfig, d: f64) -> Asymptotics {
    let u = cfg.osc.coupling;
    let near = -u * (cfg.osc.parallel_weight() + 2.0 * cfg.osc.normal_weight()) / (16.0 * d.powi(3));
    let far = if cfg.osc.is_isotropic() {
        Some(-u / (4.0 * PI * d.powi(4)))
    } else {
        None
    };
    Asymptotics { near, far }
}

/// Least-squares slope of `log|y|` against `log x`.
pub fn loglog_slope(points: &[CurvePoint]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.d.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISO: [f64; 3] = [1.0 / 3.0; 3];

    fn cfg(u: f64, p: [f64; 3], geom: Geometry, kc: f64) -> ModelConfig {
        ModelConfig::simple(u, p, geom, RegulatorKind::Exponential, kc).unwrap()
    }

    /// E1(x) by its convergent series.
    fn exp_integral_e1(x: f64) -> f64 {
        let gamma = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..200 {
            term *= -x / n as f64;
            sum += term / n as f64;
        }
        -gamma - x.ln() - sum
    }

    #[test]
    fn zero_coupling_energies_vanish() {
        let c = cfg(0.0, ISO, Geometry::Wall { distance: 1.0 }, 10.0);
        assert_eq!(energy_second_order(&c).unwrap().value, 0.0);
        assert_eq!(energy_exact_resolvent(&c).unwrap().value, 0.0);
        assert_eq!(energy_self_consistent(&c).unwrap().value, 0.0);
    }

    #[test]
    fn second_order_closed_form() {
        for (u, kc) in [(1e-4, 10.0), (1e-3, 5.0)] {
            let c = cfg(u, ISO, Geometry::FreeSpace, kc);
            let e = energy_second_order(&c).unwrap().value;
            // k^3/(k+1) = k^2 - k + 1 - 1/(k+1)
            let a: f64 = 1.0 / kc;
            let integral = 2.0 / a.powi(3) - 1.0 / (a * a) + 1.0 / a - a.exp() * exp_integral_e1(a);
            let exact = -2.0 * u / (3.0 * PI) * integral;
            assert!((e - exact).abs() < 1e-8 * exact.abs(), "{e} vs {exact}");
        }
    }

    #[test]
    fn eta0_route_is_second_order() {
        let c = cfg(1e-4, ISO, Geometry::Wall { distance: 1.0 }, 10.0);
        let a = energy_second_order(&c).unwrap().value;
        let b = second_order_via_eta0(&c).unwrap();
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
    }

    #[test]
    fn regulated_contour_matches_wall_minus_free() {
        let c = cfg(1e-4, ISO, Geometry::Wall { distance: 1.0 }, 10.0);
        let wall = energy_second_order(&c).unwrap();
        let free = energy_second_order(&c.with_geometry(Geometry::FreeSpace)).unwrap();
        let (contour, err) = cp_contour(&c, 1.0, true).unwrap();
        let diff = wall.value - free.value;
        let tol = wall.quad_error + free.quad_error + err + 1e-8 * free.value.abs();
        assert!((diff - contour).abs() < tol, "{diff} vs {contour} (tol {tol:e})");
    }

    #[test]
    fn routes_agree_at_unit_distance() {
        let c = cfg(1e-4, ISO, Geometry::FreeSpace, 10.0);
        let r = cp_routes(&c, 1.0).unwrap();
        assert!(r.agree(), "{r:?}");
        assert!(r.contour < 0.0);
    }

    #[test]
    fn near_zone_and_anisotropy() {
        for (p, coeff) in [(ISO, 1.0 / 12.0), ([1.0, 0.0, 0.0], 1.0 / 16.0), ([0.0, 0.0, 1.0], 1.0 / 8.0)] {
            let c = cfg(1e-4, p, Geometry::FreeSpace, 10.0);
            let d = 1e-3;
            let (v, _) = cp_contour(&c, d, false).unwrap();
            let ratio = v * d.powi(3) / (-1e-4 * coeff);
            assert!((ratio - 1.0).abs() < 0.01, "p={p:?}: ratio {ratio}");
            let a = asymptotics(&c, d).near;
            assert!((a * d.powi(3) + 1e-4 * coeff).abs() < 1e-18);
        }
    }

    #[test]
    fn far_zone_asymptote() {
        let c = cfg(1e-4, ISO, Geometry::FreeSpace, 10.0);
        let a = asymptotics(&c, 1e3).far.unwrap();
        assert!((a + 7.96e-18).abs() < 1e-20);
        let (v, _) = cp_contour(&c, 1e3, false).unwrap();
        assert!((v / a - 1.0).abs() < 0.01);
        let aniso = cfg(1e-4, [0.0, 0.0, 1.0], Geometry::FreeSpace, 10.0);
        assert!(asymptotics(&aniso, 1e3).far.is_none());
    }

    #[test]
    fn exact_energy_reduces_to_second_order() {
        // The relative correction is O(u kc^3), ~5% at kc = 10 and u = 1e-4.
        let dev = |u: f64| {
            let c = cfg(u, ISO, Geometry::FreeSpace, 5.0);
            energy_exact_resolvent(&c).unwrap().value / energy_second_order(&c).unwrap().value - 1.0
        };
        let (a, b) = (dev(1e-4), dev(1e-5));
        assert!(a.abs() < 0.01, "{a}");
        assert!(((a / b) - 10.0).abs() < 1.0, "{a} {b}");
    }

    #[test]
    fn neville_reproduces_polynomials() {
        let x = [0.3, 0.2, 0.1];
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 3.0 * t + 5.0 * t * t).collect();
        assert!((neville_at_zero(&x, &y) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn self_consistent_root() {
        let (e, _) = solve_self_consistent(0.0, 0.0).unwrap();
        assert_eq!(e, 0.0);
        let (e, _) = solve_self_consistent(-0.1, 0.0).unwrap();
        assert!((e * (1.0 + e) + 0.1).abs() < 1e-15);
        assert!(matches!(solve_self_consistent(-0.3, 0.0), Err(Error::BranchCollapse(_))));
    }

    #[test]
    fn force_needs_five_points() {
        let c = cfg(1e-4, ISO, Geometry::FreeSpace, 10.0);
        let curve = cp_potential_second_order(&c, &[1.0, 2.0]).unwrap();
        assert!(matches!(cp_force(&curve), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn grid_construction() {
        let g = distance_grid(1e-3, 1e3, 7, true).unwrap();
        assert_eq!(g.len(), 7);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert_eq!(g[6], 1e3);
        let g = distance_grid(1.0, 2.0, 3, false).unwrap();
        assert_eq!(g, vec![1.0, 1.5, 2.0]);
    }
}
