//! Dimensionless model parameters and the stability condition.
//!
//! Units: hbar = c = 1 and the bare oscillator wavenumber k0 = 1, so energies
//! are measured in hbar c k0 and lengths in 1/k0. The dipole enters only via
//! `u = mu^2 k0^2 / (hbar c)` and the orientation weights `p_a = mu_a^2 / mu^2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::CouplingDensity;
use crate::quadrature::{self, Tolerance};

pub const DEFAULT_COUPLING: f64 = 1e-4;
pub const DEFAULT_CUTOFF: f64 = 10.0;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-15;
pub const DEFAULT_MAX_SUBDIVISIONS: usize = 4000;
/// Abel damping parameters, in units of the wall oscillation wavenumber 2d.
pub const DEFAULT_ABEL_SCHEDULE: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpec {
    /// u = mu^2 k0^2 / (hbar c).
    pub coupling: f64,
    /// (p_x, p_y, p_z), non-negative, summing to one.
    pub orientation: [f64; 3],
}

impl OscillatorSpec {
    pub fn new(coupling: f64, orientation: [f64; 3]) -> Result<Self> {
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(Error::NegativeCoupling(coupling));
        }
        let [px, py, pz] = orientation;
        let sum = px + py + pz;
        if orientation.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightsNotNormalized(px, py, pz));
        }
        Ok(Self {
            coupling,
            orientation,
        })
    }

    pub fn isotropic(coupling: f64) -> Result<Self> {
        Self::new(coupling, [1.0 / 3.0; 3])
    }

    pub fn parallel_weight(&self) -> f64 {
        self.orientation[0] + self.orientation[1]
    }

    pub fn normal_weight(&self) -> f64 {
        self.orientation[2]
    }

    pub fn is_isotropic(&self) -> bool {
        self.orientation.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    FreeSpace,
    /// Perfectly conducting plane at z = 0, oscillator at height `distance`.
    Wall { distance: f64 },
}

impl Geometry {
    pub fn wall(distance: f64) -> Result<Self> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::NonPositiveDistance(distance));
        }
        Ok(Geometry::Wall { distance })
    }

    pub fn distance(&self) -> Option<f64> {
        match self {
            Geometry::FreeSpace => None,
            Geometry::Wall { distance } => Some(*distance),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegulatorKind {
    Exponential,
    Gaussian,
    Sharp,
}

impl std::str::FromStr for RegulatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(RegulatorKind::Exponential),
            "gaussian" | "gauss" => Ok(RegulatorKind::Gaussian),
            "sharp" => Ok(RegulatorKind::Sharp),
            other => Err(Error::InvalidConfig(format!("unknown regularization '{other}'"))),
        }
    }
}

/// High-momentum form factor multiplying every squared coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub kind: RegulatorKind,
    pub cutoff: f64,
}

impl Regularization {
    pub fn new(kind: RegulatorKind, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::NonPositiveCutoff(cutoff));
        }
        Ok(Self { kind, cutoff })
    }

    pub fn factor(&self, k: f64) -> f64 {
        let x = k / self.cutoff;
        match self.kind {
            RegulatorKind::Exponential => (-x).exp(),
            RegulatorKind::Gaussian => (-x * x).exp(),
            RegulatorKind::Sharp => {
                if k <= self.cutoff {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Analytic extension of the form factor. For the sharp cutoff this is the
    /// constant 1 valid only on `[0, cutoff]`; callers integrate the sharp
    /// density over that interval explicitly.
    pub fn factor_complex(&self, z: Complex64) -> Complex64 {
        let x = z / self.cutoff;
        match self.kind {
            RegulatorKind::Exponential => (-x).exp(),
            RegulatorKind::Gaussian => (-x * x).exp(),
            RegulatorKind::Sharp => Complex64::new(1.0, 0.0),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.kind, RegulatorKind::Sharp)
    }

    /// Upper end of the numerical support: beyond it the regulated density is
    /// below ~1e-17 of its peak.
    pub fn support_end(&self) -> f64 {
        match self.kind {
            RegulatorKind::Exponential => 60.0 * self.cutoff,
            RegulatorKind::Gaussian => 7.0 * self.cutoff,
            RegulatorKind::Sharp => self.cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureControls {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub abel_schedule: Vec<f64>,
}

impl Default for QuadratureControls {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
            max_subdivisions: DEFAULT_MAX_SUBDIVISIONS,
            abel_schedule: DEFAULT_ABEL_SCHEDULE.to_vec(),
        }
    }
}

impl QuadratureControls {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol, self.max_subdivisions)
    }

    fn validate(&self) -> Result<()> {
        for t in [self.abs_tol, self.rel_tol] {
            if !(t > 0.0) {
                return Err(Error::NonPositiveTolerance(t));
            }
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidConfig("max_subdivisions must be positive".into()));
        }
        if self.abel_schedule.len() < 2 || self.abel_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidConfig(
                "abel_schedule needs at least two positive entries".into(),
            ));
        }
        Ok(())
    }
}

/// Validated, immutable model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub osc: OscillatorSpec,
    pub geom: Geometry,
    pub reg: Regularization,
    pub quad: QuadratureControls,
}

impl ModelConfig {
    pub fn new(
        osc: OscillatorSpec,
        geom: Geometry,
        reg: Regularization,
        quad: QuadratureControls,
    ) -> Result<Self> {
        quad.validate()?;
        Ok(Self {
            osc,
            geom,
            reg,
            quad,
        })
    }

    /// Default numerics with the given physics.
    pub fn simple(u: f64, orientation: [f64; 3], geom: Geometry, kind: RegulatorKind, kc: f64) -> Result<Self> {
        if let Geometry::Wall { distance } = geom {
            Geometry::wall(distance)?;
        }
        Self::new(
            OscillatorSpec::new(u, orientation)?,
            geom,
            Regularization::new(kind, kc)?,
            QuadratureControls::default(),
        )
    }

    pub fn with_geometry(&self, geom: Geometry) -> Self {
        Self {
            geom,
            ..self.clone()
        }
    }

    pub fn with_coupling(&self, u: f64) -> Self {
        let mut c = self.clone();
        c.osc.coupling = u;
        c
    }

    pub fn tolerance(&self) -> Tolerance {
        self.quad.tolerance()
    }
}

/// Unvalidated parameters as read from a TOML file or assembled from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub numerics: RawNumerics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub u: Option<f64>,
    pub p: Option<[f64; 3]>,
    pub px: Option<f64>,
    pub py: Option<f64>,
    pub pz: Option<f64>,
    /// "free-space" or "wall".
    pub geometry: Option<String>,
    pub distance: Option<f64>,
    pub regularization: Option<String>,
    pub kc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNumerics {
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
    pub abel_schedule: Option<Vec<f64>>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&self, other: &RawConfig) -> RawConfig {
        fn pick<T: Clone>(a: &Option<T>, b: &Option<T>) -> Option<T> {
            b.clone().or_else(|| a.clone())
        }
        let (m, o) = (&self.model, &other.model);
        let (n, q) = (&self.numerics, &other.numerics);
        RawConfig {
            model: RawModel {
                u: pick(&m.u, &o.u),
                p: pick(&m.p, &o.p),
                px: pick(&m.px, &o.px),
                py: pick(&m.py, &o.py),
                pz: pick(&m.pz, &o.pz),
                geometry: pick(&m.geometry, &o.geometry),
                distance: pick(&m.distance, &o.distance),
                regularization: pick(&m.regularization, &o.regularization),
                kc: pick(&m.kc, &o.kc),
            },
            numerics: RawNumerics {
                abs_tol: pick(&n.abs_tol, &q.abs_tol),
                rel_tol: pick(&n.rel_tol, &q.rel_tol),
                max_subdivisions: pick(&n.max_subdivisions, &q.max_subdivisions),
                abel_schedule: pick(&n.abel_schedule, &q.abel_schedule),
            },
        }
    }
}

pub fn build_config(raw: &RawConfig) -> Result<ModelConfig> {
    let m = &raw.model;
    let u = m.u.unwrap_or(DEFAULT_COUPLING);
    let mut p = m.p.unwrap_or([1.0 / 3.0; 3]);
    if let Some(px) = m.px {
        p[0] = px;
    }
    if let Some(py) = m.py {
        p[1] = py;
    }
    if let Some(pz) = m.pz {
        p[2] = pz;
    }
    let osc = OscillatorSpec::new(u, p)?;

    let geom = match m.geometry.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => match m.distance {
            Some(d) => Geometry::wall(d)?,
            None => Geometry::FreeSpace,
        },
        Some("free-space") | Some("free") | Some("freespace") => Geometry::FreeSpace,
        Some("wall") => Geometry::wall(m.distance.ok_or_else(|| {
            Error::InvalidConfig("wall geometry needs a distance".into())
        })?)?,
        Some(other) => return Err(Error::InvalidConfig(format!("unknown geometry '{other}'"))),
    };

    let kind = match &m.regularization {
        Some(s) => s.parse()?,
        None => RegulatorKind::Exponential,
    };
    let reg = Regularization::new(kind, m.kc.unwrap_or(DEFAULT_CUTOFF))?;

    let n = &raw.numerics;
    let defaults = QuadratureControls::default();
    let quad = QuadratureControls {
        abs_tol: n.abs_tol.unwrap_or(defaults.abs_tol),
        rel_tol: n.rel_tol.unwrap_or(defaults.rel_tol),
        max_subdivisions: n.max_subdivisions.unwrap_or(defaults.max_subdivisions),
        abel_schedule: n.abel_schedule.clone().unwrap_or(defaults.abel_schedule),
    };
    ModelConfig::new(osc, geom, reg, quad)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// 1 - 4 * integral of D(k)/k.
    pub lhs: f64,
    pub stable: bool,
    pub margin: f64,
    pub error: f64,
}

/// Evaluates the stability margin `1 - 4 * int_0^inf D(k)/k dk`; the
/// resolvent has no real zero on the physical sheet iff it is positive.
pub fn check_stability(cfg: &ModelConfig) -> Result<StabilityReport> {
    let density = CouplingDensity::new(cfg);
    let breaks = density.breakpoints(&[1.0]);
    let tol = cfg.tolerance();
    let r = quadrature::integrate(
        |k: f64| if k > 0.0 { density.eval(k) / k } else { 0.0 },
        &breaks,
        &tol,
    )?;
    let lhs = 1.0 - 4.0 * r.value;
    Ok(StabilityReport {
        lhs,
        stable: lhs > 0.0,
        margin: lhs,
        error: 4.0 * r.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn raw(u: f64, p: [f64; 3], d: Option<f64>, kc: f64) -> RawConfig {
        RawConfig {
            model: RawModel {
                u: Some(u),
                p: Some(p),
                distance: d,
                kc: Some(kc),
                ..Default::default()
            },
            numerics: RawNumerics::default(),
        }
    }

    #[test]
    fn zero_coupling_config_is_valid() {
        let cfg = build_config(&raw(0.0, [1.0 / 3.0; 3], Some(1.0), 10.0)).unwrap();
        assert_eq!(cfg.osc.coupling, 0.0);
        assert_eq!(cfg.geom, Geometry::Wall { distance: 1.0 });
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            build_config(&raw(1e-4, [0.5, 0.5, 0.5], None, 10.0)),
            Err(Error::WeightsNotNormalized(..))
        ));
        assert!(matches!(
            build_config(&raw(-1e-4, [1.0 / 3.0; 3], None, 10.0)),
            Err(Error::NegativeCoupling(_))
        ));
        assert!(matches!(
            build_config(&raw(1e-4, [1.0 / 3.0; 3], Some(0.0), 10.0)),
            Err(Error::NonPositiveDistance(_))
        ));
        assert!(matches!(
            build_config(&raw(1e-4, [1.0 / 3.0; 3], None, -1.0)),
            Err(Error::NonPositiveCutoff(_))
        ));
        let mut r = raw(1e-4, [1.0 / 3.0; 3], None, 10.0);
        r.numerics.rel_tol = Some(0.0);
        assert!(matches!(build_config(&r), Err(Error::NonPositiveTolerance(_))));
    }

    #[test]
    fn defaults_apply() {
        let cfg = build_config(&RawConfig::default()).unwrap();
        assert_eq!(cfg.osc.coupling, DEFAULT_COUPLING);
        assert_eq!(cfg.reg.kind, RegulatorKind::Exponential);
        assert_eq!(cfg.reg.cutoff, 10.0);
        assert_eq!(cfg.quad.rel_tol, 1e-8);
        assert_eq!(cfg.geom, Geometry::FreeSpace);
    }

    #[test]
    fn toml_sections_parse() {
        let text = r#"
            [model]
            u = 2e-4
            p = [0.0, 0.0, 1.0]
            geometry = "wall"
            distance = 0.5
            regularization = "gaussian"
            kc = 4.0

            [numerics]
            rel_tol = 1e-9
        "#;
        let cfg = build_config(&RawConfig::from_toml(text).unwrap()).unwrap();
        assert_eq!(cfg.osc.orientation, [0.0, 0.0, 1.0]);
        assert_eq!(cfg.geom, Geometry::Wall { distance: 0.5 });
        assert_eq!(cfg.reg.kind, RegulatorKind::Gaussian);
        assert_eq!(cfg.quad.rel_tol, 1e-9);
    }

    #[test]
    fn stability_zero_coupling() {
        let cfg = build_config(&raw(0.0, [1.0 / 3.0; 3], None, 10.0)).unwrap();
        let s = check_stability(&cfg).unwrap();
        assert_eq!(s.lhs, 1.0);
        assert!(s.stable);
    }

    #[test]
    fn stability_free_space_closed_form() {
        // 4 * int (2u/3pi) k^2 e^{-k/kc} dk = (16/3pi) u kc^3.
        for (u, kc) in [(1e-4, 10.0), (1e-3, 5.0), (1e-3, 100.0)] {
            let cfg = build_config(&raw(u, [1.0 / 3.0; 3], None, kc)).unwrap();
            let s = check_stability(&cfg).unwrap();
            let closed = 1.0 - 16.0 / (3.0 * PI) * u * kc.powi(3);
            assert!((s.lhs - closed).abs() < 1e-7 * closed.abs().max(1.0), "{} vs {}", s.lhs, closed);
            assert_eq!(s.stable, closed > 0.0);
        }
    }

    #[test]
    fn reference_wall_point_is_stable() {
        let cfg = build_config(&raw(1e-4, [1.0 / 3.0; 3], Some(1.0), 10.0)).unwrap();
        let s = check_stability(&cfg).unwrap();
        assert!(s.stable);
        assert!((s.lhs - 0.83).abs() < 0.01, "margin {}", s.lhs);
    }

    #[test]
    fn stability_decreases_with_coupling_and_cutoff() {
        let mut last = f64::INFINITY;
        for u in [1e-5, 5e-5, 1e-4, 2e-4] {
            let cfg = build_config(&raw(u, [1.0 / 3.0; 3], Some(1.0), 8.0)).unwrap();
            let l = check_stability(&cfg).unwrap().lhs;
            assert!(l < last);
            last = l;
        }
        let mut last = f64::INFINITY;
        for kc in [2.0, 4.0, 8.0, 16.0] {
            let cfg = build_config(&raw(1e-5, [1.0 / 3.0; 3], Some(1.0), kc)).unwrap();
            let l = check_stability(&cfg).unwrap().lhs;
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn wall_margin_approaches_free_space() {
        let free = check_stability(&build_config(&raw(1e-4, [1.0 / 3.0; 3], None, 10.0)).unwrap())
            .unwrap()
            .lhs;
        let mut last = f64::INFINITY;
        for d in [1.0, 10.0, 100.0] {
            let l = check_stability(&build_config(&raw(1e-4, [1.0 / 3.0; 3], Some(d), 10.0)).unwrap())
                .unwrap()
                .lhs;
            let diff = (l - free).abs();
            assert!(diff < last, "d={d}: {diff} !< {last}");
            last = diff;
        }
    }
}
