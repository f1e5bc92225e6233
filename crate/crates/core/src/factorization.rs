//! The factor `eta` with `G(z) = eta(z) eta(-z)`, analytic off `(-inf, 0]`.
//!
//! With the phase shift `delta(k) = arg[(1 - k^2) G+(k)]`, vanishing at 0 and
//! at infinity,
//!
//! ```text
//! eta(z) = -1/(z + 1) * exp[ (1/pi) int_0^inf delta(k)/(k + z) dk ]
//! ```
//!
//! Evenness and Schwarz symmetry give `log[(1 - z^2) G(z)] = (1/pi) int delta(k) 2k/(k^2 - z^2) dk`,
//! which splits into the two exponents of `eta(z)` and `eta(-z)`.
//!
//! `delta` sweeps through pi across the resonance (width `pi D(k_r)`) and
//! drops by pi at `k = 1`, where `1 - k^2` changes sign. It is tabulated at
//! Gauss-Legendre nodes on panels graded around the resonance with a
//! breakpoint at 1; near the cut the panel integrals are done by product
//! integration against the panel interpolant.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{check_stability, Geometry, ModelConfig, RegulatorKind};
use crate::quadrature::gauss_legendre;
use crate::resolvent::{Resonance, ResolventEvaluator};

const NODES: usize = 16;
/// Panels whose Bernstein-ellipse parameter for the kernel pole is below this
/// use product integration instead of the plain rule.
const PRODUCT_RHO: f64 = 3.0;
const MAX_PANELS: usize = 4000;
/// Largest admissible change of `delta` between adjacent nodes (other than the
/// deliberate drop at k = 1).
const MAX_NODE_JUMP: f64 = 0.5;

#[derive(Clone, Debug)]
struct PhasePanel {
    a: f64,
    b: f64,
    nodes: [f64; NODES],
    weights: [f64; NODES],
    delta: [f64; NODES],
}

#[derive(Clone, Debug)]
pub struct EtaEvaluator {
    resolvent: ResolventEvaluator,
    resonance: Resonance,
    panels: Vec<PhasePanel>,
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
}

/// `delta(k) = atan2(2 pi D, Re 1/G+) - pi [k > 1]`, given `D` and `Re 1/G+`.
pub fn phase_from_parts(k: f64, density: f64, real_part: f64) -> f64 {
    // Clamp to +0 so that atan2 stays on the upper branch where D vanishes.
    let im = (2.0 * PI * density).max(0.0) + 0.0;
    let arg = im.atan2(real_part);
    if k > 1.0 {
        arg - PI
    } else {
        arg
    }
}

impl EtaEvaluator {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let stab = check_stability(cfg)?;
        if !stab.stable {
            return Err(Error::UnstableConfig { margin: stab.margin });
        }
        let resolvent = ResolventEvaluator::new(cfg);
        let resonance = resolvent.resonance()?;
        let (x, w) = gauss_legendre(NODES);
        let bary: Vec<f64> = x
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(i, (xi, wi))| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - xi * xi) * wi).sqrt()
            })
            .collect();
        let mesh = phase_mesh(cfg, &resonance);
        let mut panels = Vec::with_capacity(mesh.len());
        for pair in mesh.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            let mut nodes = [0.0; NODES];
            let mut weights = [0.0; NODES];
            let mut delta = [0.0; NODES];
            for i in 0..NODES {
                nodes[i] = c + h * x[i];
                weights[i] = h * w[i];
                delta[i] = phase_at(&resolvent, nodes[i])?;
            }
            panels.push(PhasePanel {
                a,
                b,
                nodes,
                weights,
                delta,
            });
        }
        let ev = Self {
            resolvent,
            resonance,
            panels,
            ref_nodes: x,
            bary,
        };
        ev.check_branch()?;
        Ok(ev)
    }

    pub fn resolvent(&self) -> &ResolventEvaluator {
        &self.resolvent
    }

    pub fn resonance(&self) -> Resonance {
        self.resonance
    }

    /// Phase shift evaluated directly from the resolvent.
    pub fn phase_shift(&self, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("phase shift needs k > 0, got {k}")));
        }
        phase_at(&self.resolvent, k)
    }

    /// Tabulated `(k, delta(k))` pairs in ascending order.
    pub fn phase_table(&self) -> Vec<(f64, f64)> {
        self.panels
            .iter()
            .flat_map(|p| p.nodes.iter().copied().zip(p.delta.iter().copied()))
            .collect()
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    fn check_branch(&self) -> Result<()> {
        let table = self.phase_table();
        for w in table.windows(2) {
            let ((k0, d0), (k1, d1)) = (w[0], w[1]);
            let mut jump = d1 - d0;
            if k0 <= 1.0 && k1 > 1.0 && (jump + PI).abs() < jump.abs() {
                jump += PI;
            }
            if jump.abs() > MAX_NODE_JUMP {
                return Err(Error::BranchTrackingFailure {
                    k_left: k0,
                    k_right: k1,
                    jump,
                });
            }
        }
        Ok(())
    }

    /// Barycentric evaluation of the panel interpolant at (complex) `w`.
    fn interpolate(&self, p: &PhasePanel, w: Complex64) -> Complex64 {
        let c = 0.5 * (p.a + p.b);
        let h = 0.5 * (p.b - p.a);
        let t = (w - c) / h;
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = Complex64::new(0.0, 0.0);
        for i in 0..NODES {
            let diff = t - self.ref_nodes[i];
            if diff.norm() == 0.0 {
                return Complex64::new(p.delta[i], 0.0);
            }
            let q = self.bary[i] / diff;
            num += q * p.delta[i];
            den += q;
        }
        num / den
    }

    /// `int_0^inf delta(k)/(k + z) dk`.
    pub fn dispersion(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 && z.re <= 0.0 {
            return Err(Error::PointOnCut(z.re, z.im));
        }
        let w = -z;
        let mut total = Complex64::new(0.0, 0.0);
        for p in &self.panels {
            let c = 0.5 * (p.a + p.b);
            let h = 0.5 * (p.b - p.a);
            let t = (w - c) / h;
            let root = (t * t - 1.0).sqrt();
            let rho = (t + root).norm().max((t - root).norm());
            if rho < PRODUCT_RHO {
                let pw = self.interpolate(p, w);
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..NODES {
                    s += (Complex64::new(p.delta[i], 0.0) - pw) / (p.nodes[i] - w) * p.weights[i];
                }
                let log = ((p.b - w) / (p.a - w)).ln();
                total += s + pw * log;
            } else {
                for i in 0..NODES {
                    total += Complex64::new(p.delta[i] * p.weights[i], 0.0) / (p.nodes[i] - w);
                }
            }
        }
        Ok(total)
    }

    pub fn eta(&self, z: Complex64) -> Result<Complex64> {
        let j = self.dispersion(z)?;
        Ok(-(z + 1.0).inv() * (j / PI).exp())
    }

    /// `eta(k)` for real `k > 0`, where it is real.
    pub fn eta_real(&self, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::PointOnCut(k, 0.0));
        }
        let mut s = 0.0;
        for p in &self.panels {
            for i in 0..NODES {
                s += p.delta[i] * p.weights[i] / (p.nodes[i] + k);
            }
        }
        // Near k = 0 the kernel pole at -k approaches the first panel.
        if k < 4.0 * (self.panels[0].b - self.panels[0].a) {
            s = self.dispersion(Complex64::new(k, 0.0))?.re;
        }
        Ok(-(s / PI).exp() / (k + 1.0))
    }
}

fn phase_at(ev: &ResolventEvaluator, k: f64) -> Result<f64> {
    let d = ev.density().eval(k);
    if ev.density().coupling() == 0.0 {
        return Ok(0.0);
    }
    Ok(phase_from_parts(k, d, ev.real_part(k)?))
}

/// Upper end of the phase table: beyond it `delta` is below ~1e-13.
fn table_end(cfg: &ModelConfig) -> f64 {
    let kc = cfg.reg.cutoff;
    match cfg.reg.kind {
        RegulatorKind::Exponential => 30.0 * kc,
        RegulatorKind::Gaussian => 6.0 * kc,
        RegulatorKind::Sharp => kc,
    }
}

fn phase_mesh(cfg: &ModelConfig, res: &Resonance) -> Vec<f64> {
    let end = table_end(cfg);
    let kc = cfg.reg.cutoff;
    let mut pts = vec![0.0, end, 1.0, 0.5, 2.0];
    if kc < end {
        pts.push(kc);
    }
    if res.width > 0.0 {
        let mut step = res.width;
        while step < end {
            for s in [-1.0, 1.0] {
                let p = res.k + s * step;
                if p > 0.0 && p < end {
                    pts.push(p);
                }
            }
            step *= 2.0;
        }
        pts.push(res.k);
    }
    // Grade towards k = 0 too: delta ~ k^3 there but the kernel pole
    // approaches the origin for small |z|.
    let mut s = 0.25;
    while s > 1e-4 {
        pts.push(s);
        s *= 0.5;
    }
    pts.retain(|p| *p >= 0.0 && *p <= end);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * end.max(1.0));

    let mut cap = 0.5 * kc;
    if let Geometry::Wall { distance } = cfg.geom {
        cap = cap.min(0.5 * PI / distance);
    }
    cap = cap.max(end / MAX_PANELS as f64);
    let mut mesh = vec![pts[0]];
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Panels away from the resonance also stay within a fixed ratio of
        // their distance to it, keeping delta well resolved.
        let mut local = cap;
        if res.width > 0.0 {
            let dist = (a - res.k).abs().min((b - res.k).abs()).max(res.width);
            local = local.min(dist.max(0.05));
        }
        let n = ((b - a) / local).ceil().max(1.0) as usize;
        for i in 1..=n {
            mesh.push(a + (b - a) * i as f64 / n as f64);
        }
    }
    mesh
}

pub fn phase_shift(k: f64, cfg: &ModelConfig) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("phase shift needs k > 0, got {k}")));
    }
    phase_at(&ResolventEvaluator::new(cfg), k)
}

pub fn eta(z: Complex64, cfg: &ModelConfig) -> Result<Complex64> {
    EtaEvaluator::new(cfg)?.eta(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvent::Sheet;

    fn cfg(u: f64, geom: Geometry) -> ModelConfig {
        ModelConfig::simple(u, [1.0 / 3.0; 3], geom, RegulatorKind::Exponential, 10.0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_coupling_eta_is_exact() {
        let ev = EtaEvaluator::new(&cfg(0.0, Geometry::FreeSpace)).unwrap();
        for z in [c(0.5, 0.0), c(1.0, 1.0), c(-2.0, 0.3), c(0.2, 0.01)] {
            let e = ev.eta(z).unwrap();
            let exact = -(z + 1.0).inv();
            assert!((e - exact).norm() <= 1e-15 * exact.norm());
        }
        assert_eq!(ev.phase_shift(1.3).unwrap(), 0.0);
    }

    #[test]
    fn cut_is_rejected() {
        let ev = EtaEvaluator::new(&cfg(1e-4, Geometry::FreeSpace)).unwrap();
        assert_eq!(ev.eta(c(-1.0, 0.0)), Err(Error::PointOnCut(-1.0, 0.0)));
        assert!(ev.eta(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn factorization_identity() {
        let config = cfg(1e-4, Geometry::Wall { distance: 1.0 });
        let ev = EtaEvaluator::new(&config).unwrap();
        for z in [c(0.0, 0.5), c(1.0, 1.0), c(2.0, -0.3), c(0.2, 0.01)] {
            let prod = ev.eta(z).unwrap() * ev.eta(-z).unwrap();
            let g = ev.resolvent().resolvent(z, Sheet::I).unwrap();
            let rel = (prod - g).norm() / g.norm();
            assert!(rel < 1e-6, "z={z}: rel {rel:e}");
        }
    }

    #[test]
    fn eta_real_and_negative_on_positive_axis() {
        let ev = EtaEvaluator::new(&cfg(1e-4, Geometry::FreeSpace)).unwrap();
        for i in 1..=30 {
            let k = 0.1 * i as f64;
            let e = ev.eta(c(k, 0.0)).unwrap();
            assert!(e.im.abs() < 1e-13 * e.re.abs());
            assert!(e.re < 0.0);
            let r = ev.eta_real(k).unwrap();
            assert!((r - e.re).abs() < 1e-12 * r.abs(), "k={k}: {r} vs {}", e.re);
        }
    }

    #[test]
    fn phase_crosses_half_pi_at_resonance() {
        let ev = EtaEvaluator::new(&cfg(1e-4, Geometry::FreeSpace)).unwrap();
        let kr = ev.resonance().k;
        assert!((1.0 - kr).abs() < 0.1);
        let below = ev.phase_shift(kr - 1e-9).unwrap();
        let above = ev.phase_shift(kr + 1e-9).unwrap();
        assert!(below < PI / 2.0 && above > PI / 2.0, "{below} {above}");
        assert!(ev.phase_shift(100.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn table_is_continuous_apart_from_drop_at_one() {
        let ev = EtaEvaluator::new(&cfg(1e-4, Geometry::Wall { distance: 1.0 })).unwrap();
        let t = ev.phase_table();
        assert!(t.first().unwrap().1.abs() < 1e-12);
        assert!(t.last().unwrap().1.abs() < 1e-10);
    }

    #[test]
    fn unstable_config_is_refused() {
        let config = ModelConfig::simple(1e-3, [1.0 / 3.0; 3], Geometry::FreeSpace, RegulatorKind::Exponential, 100.0).unwrap();
        assert!(matches!(EtaEvaluator::new(&config), Err(Error::UnstableConfig { .. })));
    }
}
