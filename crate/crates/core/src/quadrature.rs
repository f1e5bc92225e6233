//! Numerical integration.
//!
//! The workhorse is a globally adaptive Gauss-Kronrod (7/15) integrator that
//! accepts user breakpoints, so callers can pin panel edges to resonances,
//! subtraction points or regulator edges. A composite fixed-order
//! Gauss-Legendre rule is provided as an independent second route.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: real scalars, complex scalars, small tuples.
pub trait Integrand: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn magnitude(self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

impl Integrand for [f64; 2] {
    fn zero() -> Self {
        [0.0; 2]
    }
    fn add(self, o: Self) -> Self {
        [self[0] + o[0], self[1] + o[1]]
    }
    fn sub(self, o: Self) -> Self {
        [self[0] - o[0], self[1] - o[1]]
    }
    fn scale(self, s: f64) -> Self {
        [self[0] * s, self[1] * s]
    }
    fn magnitude(self) -> f64 {
        self[0].abs().max(self[1].abs())
    }
}

/// Stopping rule for adaptive integration: stop when the error estimate is
/// below `max(abs, rel * |I|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64, max_subdivisions: usize) -> Self {
        Self {
            abs,
            rel,
            max_subdivisions,
        }
    }

    /// Same limits, relative tolerance tightened by `factor` (floored at 1e-14).
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs: self.abs * factor,
            rel: (self.rel * factor).max(1e-14),
            max_subdivisions: self.max_subdivisions,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

// Kronrod abscissae (descending) and weights; Gauss 7-point weights for the
// even-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod 7/15 panel: returns (Kronrod value, |K - G|).
pub fn gauss_kronrod_15<T, F>(f: &mut F, a: f64, b: f64) -> (T, f64)
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx).add(f(center + dx));
        kronrod = kronrod.add(pair.scale(WGK[j]));
        if j % 2 == 1 {
            gauss = gauss.add(pair.scale(WG[j / 2]));
        }
    }
    let kronrod = kronrod.scale(half);
    let gauss = gauss.scale(half);
    let err = kronrod.sub(gauss).magnitude();
    (kronrod, err)
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

/// Globally adaptive integration over `[breaks[0], breaks[last]]`.
///
/// `breaks` must be sorted; every interval between consecutive breakpoints is
/// an initial panel. The panel with the largest error is bisected until the
/// total error meets the tolerance.
pub fn integrate<T, F>(mut f: F, breaks: &[f64], tol: &Tolerance) -> Result<QuadResult<T>>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let mut panels: Vec<Panel<T>> = Vec::with_capacity(breaks.len() + 64);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a {
            let (value, error) = gauss_kronrod_15(&mut f, a, b);
            panels.push(Panel { a, b, value, error });
        }
    }
    if panels.is_empty() {
        return Ok(QuadResult {
            value: T::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut evaluations = 15 * panels.len();
    loop {
        let (total, err) = sum_panels(&panels);
        let target = tol.abs.max(tol.rel * total.magnitude());
        if err <= target {
            return Ok(QuadResult {
                value: total,
                error: err,
                evaluations,
            });
        }
        if panels.len() >= tol.max_subdivisions {
            return Err(Error::QuadratureFailure {
                achieved: err,
                requested: target,
                subdivisions: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // Panel can no longer be split in floating point.
            return Err(Error::QuadratureFailure {
                achieved: err,
                requested: target,
                subdivisions: panels.len() + 1,
            });
        }
        let (v1, e1) = gauss_kronrod_15(&mut f, a, mid);
        let (v2, e2) = gauss_kronrod_15(&mut f, mid, b);
        evaluations += 30;
        panels.push(Panel {
            a,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b,
            value: v2,
            error: e2,
        });
    }
}

fn sum_panels<T: Integrand>(panels: &[Panel<T>]) -> (T, f64) {
    let mut total = T::zero();
    let mut err = 0.0;
    for p in panels {
        total = total.add(p.value);
        err += p.error;
    }
    (total, err)
}

/// Adaptive integration over `[a, inf)` via `k = a + scale * t / (1 - t)`.
pub fn integrate_to_infinity<T, F>(
    mut f: F,
    a: f64,
    scale: f64,
    tol: &Tolerance,
) -> Result<QuadResult<T>>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let mapped = |t: f64| {
        let one_minus = 1.0 - t;
        let k = a + scale * t / one_minus;
        f(k).scale(scale / (one_minus * one_minus))
    };
    integrate(mapped, &[0.0, 0.5, 1.0], tol)
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite fixed-order Gauss-Legendre rule over the given breakpoints, each
/// interval further split into `splits` equal panels.
pub fn fixed_gauss_legendre<T, F>(mut f: F, breaks: &[f64], order: usize, splits: usize) -> T
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let (x, w) = gauss_legendre(order);
    let mut total = T::zero();
    for pair in breaks.windows(2) {
        let h = (pair[1] - pair[0]) / splits as f64;
        for s in 0..splits {
            let a = pair[0] + h * s as f64;
            let c = a + 0.5 * h;
            let mut panel = T::zero();
            for (xi, wi) in x.iter().zip(&w) {
                panel = panel.add(f(c + 0.5 * h * xi).scale(*wi));
            }
            total = total.add(panel.scale(0.5 * h));
        }
    }
    total
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    abs_sum: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Sum of magnitudes of all terms, a scale for roundoff estimates.
    pub fn magnitude_sum(&self) -> f64 {
        self.abs_sum
    }
}
