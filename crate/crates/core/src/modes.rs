//! Cavity mode functions, discrete couplings and the continuum coupling density.
//!
//! The atom couples to the field through `f_kj = i sqrt(2 pi k / V) mu . f_kj(r_A)`
//! (dimensionless). In the continuum limit the polarization-summed squared
//! coupling per unit wavenumber becomes
//!
//! ```text
//! D(k) = u k^3 rho(k) [ 2/(3 pi) + (p_z/pi)(sinc x - S(x)) - ((p_x+p_y)/(2 pi))(sinc x + S(x)) ]
//! ```
//!
//! with `x = 2 k d` and `S(x) = sin x/x + 2 cos x/x^2 - 2 sin x/x^3`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Geometry, ModelConfig, Regularization};

/// Below this |x| the wall functions are summed from their Taylor series.
pub const SERIES_THRESHOLD: f64 = 0.5;
const SERIES_TERMS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub l: u32,
    pub m: u32,
    pub n: u32,
    /// Polarization label, 1 or 2.
    pub j: u8,
}

impl ModeIndex {
    pub fn new(l: u32, m: u32, n: u32, j: u8) -> Self {
        Self { l, m, n, j }
    }

    /// Excluded from oracle sets: any zero index or a bad polarization label.
    pub fn is_admissible(&self) -> bool {
        self.l >= 1 && self.m >= 1 && self.n >= 1 && (self.j == 1 || self.j == 2)
    }

    pub fn wavevector(&self, box_length: f64) -> [f64; 3] {
        let s = PI / box_length;
        [self.l as f64 * s, self.m as f64 * s, self.n as f64 * s]
    }

    pub fn wavenumber(&self, box_length: f64) -> f64 {
        norm(self.wavevector(box_length))
    }

    pub fn shell(&self) -> u64 {
        let (l, m, n) = (self.l as u64, self.m as u64, self.n as u64);
        l * l + m * m + n * n
    }
}

/// All admissible modes of the cube `-L/2 < x, y < L/2`, `0 < z < L` with
/// `|k| <= k_max`. Modes are enumerated lazily.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteModeSet {
    pub box_length: f64,
    pub k_max: f64,
}

impl DiscreteModeSet {
    pub fn new(box_length: f64, k_max: f64) -> Result<Self> {
        if !(box_length > 0.0) || !(k_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box length and k_max must be positive, got {box_length}, {k_max}"
            )));
        }
        let set = Self { box_length, k_max };
        if set.max_shell() < 3 {
            return Err(Error::EmptyModeSet);
        }
        Ok(set)
    }

    /// Largest admissible `l^2 + m^2 + n^2`.
    pub fn max_shell(&self) -> u64 {
        let r = self.k_max * self.box_length / PI;
        let mut s = (r * r).floor() as u64;
        // Guard the floor against rounding in r^2.
        while (s as f64).sqrt() * PI / self.box_length > self.k_max {
            s -= 1;
        }
        while ((s + 1) as f64).sqrt() * PI / self.box_length <= self.k_max {
            s += 1;
        }
        s
    }

    pub fn max_index(&self) -> u32 {
        let s = self.max_shell();
        if s < 3 {
            return 0;
        }
        ((s - 2) as f64).sqrt().floor() as u32
    }

    /// Admissible index triples (each carrying two polarizations).
    pub fn triples(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        let smax = self.max_shell();
        let nmax = self.max_index();
        (1..=nmax).flat_map(move |l| {
            (1..=nmax).flat_map(move |m| {
                let rest = smax as i64 - (l as i64).pow(2) - (m as i64).pow(2);
                let nn = if rest >= 1 { (rest as f64).sqrt().floor() as u32 } else { 0 };
                let nn = adjust_floor_sqrt(nn, rest);
                (1..=nn).map(move |n| (l, m, n))
            })
        })
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        self.triples()
            .flat_map(|(l, m, n)| [ModeIndex::new(l, m, n, 1), ModeIndex::new(l, m, n, 2)])
    }

    pub fn triple_count(&self) -> usize {
        self.triples().count()
    }

    pub fn len(&self) -> usize {
        2 * self.triple_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, idx: &ModeIndex) -> bool {
        idx.is_admissible() && idx.shell() <= self.max_shell()
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    /// Atom position: on the box axis at height `d` for a wall, at the cube
    /// centre for free space.
    pub fn atom_position(&self, geom: &Geometry) -> Result<[f64; 3]> {
        let z = match geom {
            Geometry::Wall { distance } => *distance,
            Geometry::FreeSpace => 0.5 * self.box_length,
        };
        let r = [0.0, 0.0, z];
        check_inside(self.box_length, r)?;
        Ok(r)
    }
}

fn adjust_floor_sqrt(mut n: u32, rest: i64) -> u32 {
    if rest < 1 {
        return 0;
    }
    while (n as i64) * (n as i64) > rest {
        n -= 1;
    }
    while ((n + 1) as i64) * ((n + 1) as i64) <= rest {
        n += 1;
    }
    n
}

fn check_inside(box_length: f64, r: [f64; 3]) -> Result<()> {
    let h = 0.5 * box_length;
    let inside = r[0] >= -h && r[0] <= h && r[1] >= -h && r[1] <= h && r[2] >= 0.0 && r[2] <= box_length;
    if inside && r.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::PointOutsideBox(r[0], r[1], r[2]))
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scaled(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

/// Orthonormal polarizations transverse to `k`: `e1 ~ z x k` (or `x` when `k`
/// is along `z`) and `e2 = k x e1`.
pub fn polarization_basis(k: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
    let kn = norm(k);
    if !(kn > 0.0) || !kn.is_finite() {
        return Err(Error::ZeroWavevector);
    }
    let khat = scaled(k, 1.0 / kn);
    let zc = cross([0.0, 0.0, 1.0], khat);
    let zn = norm(zc);
    let e1 = if zn > 1e-12 { scaled(zc, 1.0 / zn) } else { [1.0, 0.0, 0.0] };
    let e2 = cross(khat, e1);
    Ok((e1, e2))
}

/// The three trigonometric products of the cavity mode function without the
/// polarization vector and the factor sqrt(8).
fn mode_trig(idx: &ModeIndex, box_length: f64, r: [f64; 3]) -> [f64; 3] {
    let [kx, ky, kz] = idx.wavevector(box_length);
    let h = 0.5 * box_length;
    let (sx, cx) = (kx * (r[0] + h)).sin_cos();
    let (sy, cy) = (ky * (r[1] + h)).sin_cos();
    let (sz, cz) = (kz * r[2]).sin_cos();
    [cx * sy * sz, sx * cy * sz, sx * sy * cz]
}

pub fn mode_function(idx: &ModeIndex, box_length: f64, r: [f64; 3]) -> Result<[f64; 3]> {
    check_inside(box_length, r)?;
    if !idx.is_admissible() {
        return Err(Error::ModeNotInSet {
            l: idx.l,
            m: idx.m,
            n: idx.n,
        });
    }
    let (e1, e2) = polarization_basis(idx.wavevector(box_length))?;
    let e = if idx.j == 1 { e1 } else { e2 };
    let t = mode_trig(idx, box_length, r);
    let s8 = 8f64.sqrt();
    Ok([s8 * e[0] * t[0], s8 * e[1] * t[1], s8 * e[2] * t[2]])
}

/// Dipole direction with non-negative components `sqrt(p_a)`. Only the
/// squares enter the continuum density; at the transverse box centre the
/// discrete couplings are independent of the signs too.
pub fn dipole_unit_vector(orientation: [f64; 3]) -> [f64; 3] {
    [orientation[0].sqrt(), orientation[1].sqrt(), orientation[2].sqrt()]
}

/// Pure imaginary coupling constant `f = i sqrt(2 pi u k rho(k) / V) mu_hat . f_kj(r_A)`.
pub fn coupling_constant(idx: &ModeIndex, set: &DiscreteModeSet, cfg: &ModelConfig) -> Result<Complex64> {
    if !set.contains(idx) {
        return Err(Error::ModeNotInSet {
            l: idx.l,
            m: idx.m,
            n: idx.n,
        });
    }
    let r = set.atom_position(&cfg.geom)?;
    let f = mode_function(idx, set.box_length, r)?;
    let mu = dipole_unit_vector(cfg.osc.orientation);
    let proj = mu[0] * f[0] + mu[1] * f[1] + mu[2] * f[2];
    let k = idx.wavenumber(set.box_length);
    let amp = (2.0 * PI * cfg.osc.coupling * k * cfg.reg.factor(k) / set.volume()).sqrt();
    Ok(Complex64::new(0.0, amp * proj))
}

/// Polarization-summed `sum_j |f_kj|^2` for the triple `(l, m, n)`, using
/// `sum_j (e_j)_a (e_j)_b = delta_ab - khat_a khat_b`. Cross terms between
/// Cartesian components are kept, so this is exact for any atom position.
pub fn coupling_squared_sum(
    l: u32,
    m: u32,
    n: u32,
    set: &DiscreteModeSet,
    cfg: &ModelConfig,
    r: [f64; 3],
) -> f64 {
    let idx = ModeIndex::new(l, m, n, 1);
    let kv = idx.wavevector(set.box_length);
    let k = norm(kv);
    let khat = scaled(kv, 1.0 / k);
    let t = mode_trig(&idx, set.box_length, r);
    let mu = dipole_unit_vector(cfg.osc.orientation);
    // v_a = mu_a t_a; sum_j |e_j . v|^2 = |v|^2 - (khat . v)^2
    let v = [mu[0] * t[0], mu[1] * t[1], mu[2] * t[2]];
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let kdotv = khat[0] * v[0] + khat[1] * v[1] + khat[2] * v[2];
    let proj2 = 8.0 * (vv - kdotv * kdotv);
    2.0 * PI * cfg.osc.coupling * k * cfg.reg.factor(k) / set.volume() * proj2
}

/// `(sinc x, S(x))` for real `x`.
pub fn wall_functions(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax < SERIES_THRESHOLD {
        wall_functions_series(x)
    } else {
        let (s, c) = x.sin_cos();
        let sinc = s / x;
        (sinc, sinc + 2.0 * c / (x * x) - 2.0 * s / (x * x * x))
    }
}

/// Taylor sums `sinc x = sum (-1)^n x^2n/(2n+1)!`, `S(x) = sum (-1)^n x^2n/((2n)!(2n+3))`.
pub fn wall_functions_series(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let mut term = 1.0; // (-1)^n x^2n / (2n)!
    let mut sinc = 0.0;
    let mut s = 0.0;
    for n in 0..SERIES_TERMS {
        let nf = n as f64;
        sinc += term / (2.0 * nf + 1.0);
        s += term / (2.0 * nf + 3.0);
        term *= -x2 / ((2.0 * nf + 1.0) * (2.0 * nf + 2.0));
    }
    (sinc, s)
}

/// Direct evaluation of the defining expressions; loses accuracy as x -> 0.
pub fn wall_functions_direct(x: f64) -> (f64, f64) {
    let (s, c) = x.sin_cos();
    let sinc = s / x;
    (sinc, sinc + 2.0 * c / (x * x) - 2.0 * s / (x * x * x))
}

pub fn wall_functions_complex(x: Complex64) -> (Complex64, Complex64) {
    if x.norm() < SERIES_THRESHOLD {
        let x2 = x * x;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sinc = Complex64::new(0.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for n in 0..SERIES_TERMS {
            let nf = n as f64;
            sinc += term / (2.0 * nf + 1.0);
            s += term / (2.0 * nf + 3.0);
            term *= -x2 / ((2.0 * nf + 1.0) * (2.0 * nf + 2.0));
        }
        (sinc, s)
    } else {
        let (s, c) = (x.sin(), x.cos());
        let sinc = s / x;
        let x2 = x * x;
        (sinc, sinc + 2.0 * c / x2 - 2.0 * s / (x2 * x))
    }
}

/// Continuum coupling spectral density `D(k)`. Immutable after construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingDensity {
    coupling: f64,
    normal: f64,
    parallel: f64,
    distance: Option<f64>,
    reg: Regularization,
}

impl CouplingDensity {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            coupling: cfg.osc.coupling,
            normal: cfg.osc.normal_weight(),
            parallel: cfg.osc.parallel_weight(),
            distance: cfg.geom.distance(),
            reg: cfg.reg,
        }
    }

    pub fn regularization(&self) -> &Regularization {
        &self.reg
    }

    pub fn distance(&self) -> Option<f64> {
        self.distance
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Orientation bracket (dimensionless) at wavenumber `k`.
    pub fn bracket(&self, k: f64) -> f64 {
        let free = 2.0 / (3.0 * PI);
        match self.distance {
            None => free,
            Some(d) => {
                let (sinc, s) = wall_functions(2.0 * k * d);
                free + self.normal / PI * (sinc - s) - self.parallel / (2.0 * PI) * (sinc + s)
            }
        }
    }

    /// Unregulated `u k^3 * bracket`, the density before the form factor.
    pub fn bare(&self, k: f64) -> f64 {
        (self.coupling * k * k * k * self.bracket(k)).max(0.0)
    }

    pub fn eval(&self, k: f64) -> f64 {
        if !(k > 0.0) {
            return 0.0;
        }
        let rho = self.reg.factor(k);
        if rho == 0.0 {
            return 0.0;
        }
        self.bare(k) * rho
    }

    /// Free-space density `(2u/3pi) k^3 rho(k)`.
    pub fn free(&self, k: f64) -> f64 {
        if !(k > 0.0) {
            return 0.0;
        }
        2.0 * self.coupling / (3.0 * PI) * k * k * k * self.reg.factor(k)
    }

    /// Analytic extension into the complex plane. For the sharp cutoff this
    /// omits the indicator and is valid only for `Re z` inside the support.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let free = Complex64::new(2.0 / (3.0 * PI), 0.0);
        let bracket = match self.distance {
            None => free,
            Some(d) => {
                let (sinc, s) = wall_functions_complex(2.0 * d * z);
                free + (sinc - s) * (self.normal / PI) - (sinc + s) * (self.parallel / (2.0 * PI))
            }
        };
        bracket * z * z * z * self.coupling * self.reg.factor_complex(z)
    }

    /// Upper end of the numerical support of `D`.
    pub fn support_end(&self) -> f64 {
        self.reg.support_end()
    }

    /// Breakpoints for integrals of `D` times smooth kernels over
    /// `[0, support_end]`: the cutoff scale, one point per wall oscillation
    /// period when that is affordable, and any caller-supplied points.
    pub fn breakpoints(&self, extra: &[f64]) -> Vec<f64> {
        let end = self.support_end();
        let kc = self.reg.cutoff;
        let mut pts = vec![0.0, end];
        for f in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            pts.push(f * kc);
        }
        if let Some(d) = self.distance {
            let period = PI / d;
            let count = (end / period).ceil() as usize;
            if count <= 400 {
                for i in 1..count {
                    pts.push(i as f64 * period);
                }
            }
        }
        pts.extend_from_slice(extra);
        let mut pts: Vec<f64> = pts.into_iter().filter(|p| *p >= 0.0 && *p <= end).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * end);
        pts
    }
}

/// Free-function form of `CouplingDensity::eval`.
pub fn coupling_density(k: f64, cfg: &ModelConfig) -> f64 {
    CouplingDensity::new(cfg).eval(k)
}
