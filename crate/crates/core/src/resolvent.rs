//! Self-energy, resolvent, boundary values and second-sheet poles.
//!
//! With `C(w) = int_0^K D(k)/(k - w) dk` the self-energy is
//! `Sigma(z) = -int D(k) 4k/(z^2 - k^2) dk = 2 [C(z) + C(-z)]` and
//! `1/G(z) = 1 - z^2 - Sigma(z)`. On the real axis `Im 1/G(k + i0) = -2 pi D(k)`.
//! The continuation through the positive cut is `1/G_II = 1/G_I - 4 pi i D(z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::modes::CouplingDensity;
use crate::quadrature::{self, Tolerance};

/// Points closer than this to the real support use the subtracted form of
/// the Cauchy integral.
const NEAR_AXIS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    I,
    II,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleResult {
    pub z: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

impl PoleResult {
    pub fn energy_shift(&self) -> f64 {
        self.z.re - 1.0
    }

    pub fn half_width(&self) -> f64 {
        -self.z.im
    }
}

/// Location of the zero of `Re 1/G+(k)` below `k = 1` and the local width
/// `gamma = pi D(k_r)` of the Lorentzian in `|G+|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub k: f64,
    pub width: f64,
}

#[derive(Clone, Debug)]
pub struct ResolventEvaluator {
    density: CouplingDensity,
    tol: Tolerance,
    end: f64,
    breaks: Vec<f64>,
}

impl ResolventEvaluator {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self::with_tolerance(cfg, cfg.tolerance())
    }

    pub fn with_tolerance(cfg: &ModelConfig, tol: Tolerance) -> Self {
        let density = CouplingDensity::new(cfg);
        let breaks = density.breakpoints(&[0.5, 1.0, 1.5, 2.0]);
        Self {
            end: density.support_end(),
            density,
            tol,
            breaks,
        }
    }

    pub fn density(&self) -> &CouplingDensity {
        &self.density
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    pub fn support_end(&self) -> f64 {
        self.end
    }

    fn breaks_with(&self, extra: &[f64]) -> Vec<f64> {
        let mut b = self.breaks.clone();
        for &x in extra {
            if x > 0.0 && x < self.end {
                b.push(x);
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Cauchy integral `C(w)` on the first sheet. For real `w` in the support
    /// the sign of the zero imaginary part selects the boundary value.
    pub fn cauchy(&self, w: Complex64) -> Result<Complex64> {
        if self.density.coupling() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let near = w.im.abs() < NEAR_AXIS && w.re > -NEAR_AXIS && w.re < self.end + NEAR_AXIS;
        if near {
            self.cauchy_subtracted(w)
        } else {
            let d = &self.density;
            let r = quadrature::integrate(
                |k: f64| Complex64::new(d.eval(k), 0.0) / (k - w),
                &self.breaks_with(&[w.re]),
                &self.tol,
            )?;
            Ok(r.value)
        }
    }

    /// `int (D(k) - D(w))/(k - w) dk + D(w) log((K - w)/(-w))` with the
    /// analytic extension `D(w)` and the principal logarithm of the ratio.
    fn cauchy_subtracted(&self, w: Complex64) -> Result<Complex64> {
        let d = &self.density;
        let dw = d.eval_complex(w);
        let smooth = quadrature::integrate(
            |k: f64| {
                let diff = k - w;
                if diff.norm() == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    (Complex64::new(d.eval(k), 0.0) - dw) / diff
                }
            },
            &self.breaks_with(&[w.re]),
            &self.tol,
        )?;
        let end = Complex64::new(self.end, 0.0);
        let ratio = (end - w) / (-w);
        Ok(smooth.value + dw * ratio.ln())
    }

    /// `1/G(z)` on the requested sheet without argument checks.
    pub fn inverse_unchecked(&self, z: Complex64, sheet: Sheet) -> Result<Complex64> {
        let sigma = (self.cauchy(z)? + self.cauchy(-z)?) * 2.0;
        let mut inv = Complex64::new(1.0, 0.0) - z * z - sigma;
        if sheet == Sheet::II {
            inv -= Complex64::new(0.0, 4.0 * PI) * self.density.eval_complex(z);
        }
        Ok(inv)
    }

    pub fn self_energy(&self, z: Complex64) -> Result<Complex64> {
        check_off_axis(z)?;
        Ok((self.cauchy(z)? + self.cauchy(-z)?) * 2.0)
    }

    pub fn inverse(&self, z: Complex64, sheet: Sheet) -> Result<Complex64> {
        match sheet {
            Sheet::I => check_off_axis(z)?,
            Sheet::II => {
                if !self.density.regularization().is_analytic() {
                    return Err(Error::SharpCutoffNoContinuation);
                }
                if !(z.re > 0.0) || z.im > 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "second sheet is reached through the positive cut only (Re z > 0, Im z <= 0), got {z}"
                    )));
                }
            }
        }
        self.inverse_unchecked(z, sheet)
    }

    pub fn resolvent(&self, z: Complex64, sheet: Sheet) -> Result<Complex64> {
        Ok(self.inverse(z, sheet)?.inv())
    }

    /// `(1/G+(k), 1/G-(k))` from the complex Cauchy integral evaluated at
    /// `k + i0` and `k - i0`.
    pub fn boundary_inverse(&self, k: f64) -> Result<(Complex64, Complex64)> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("boundary values need k > 0, got {k}")));
        }
        let plus = self.inverse_unchecked(Complex64::new(k, 0.0), Sheet::I)?;
        let minus = self.inverse_unchecked(Complex64::new(k, -0.0), Sheet::I)?;
        Ok((plus, minus))
    }

    pub fn boundary_values(&self, k: f64) -> Result<(Complex64, Complex64)> {
        let (p, m) = self.boundary_inverse(k)?;
        Ok((p.inv(), m.inv()))
    }

    /// `P int_0^K D(q)/(q - k) dq` by subtraction of `D(k)` and the
    /// logarithmic remainder.
    pub fn principal_value(&self, k: f64) -> Result<f64> {
        let d = &self.density;
        let dk = d.eval(k);
        let r = quadrature::integrate(
            |q: f64| if q == k { 0.0 } else { (d.eval(q) - dk) / (q - k) },
            &self.breaks_with(&[k]),
            &self.tol,
        )?;
        Ok(r.value + dk * ((self.end - k) / k).abs().ln())
    }

    /// Same principal value by symmetric cancellation around `k`, an
    /// independent algorithm used as a cross-check.
    pub fn principal_value_symmetric(&self, k: f64) -> Result<f64> {
        let d = &self.density;
        let h = 0.5 * k.min(self.end - k);
        let outer_breaks: Vec<f64> = self.breaks_with(&[k - h, k + h]);
        let outer = quadrature::integrate(
            |q: f64| {
                if q > k - h && q < k + h {
                    0.0
                } else {
                    d.eval(q) / (q - k)
                }
            },
            &outer_breaks,
            &self.tol,
        )?;
        let inner = quadrature::integrate(
            |t: f64| if t == 0.0 { 0.0 } else { (d.eval(k + t) - d.eval(k - t)) / t },
            &[0.0, h],
            &self.tol,
        )?;
        Ok(outer.value + inner.value)
    }

    /// `C(-k) = int D(q)/(q + k) dq` for `k > 0`.
    pub fn reflected(&self, k: f64) -> Result<f64> {
        let d = &self.density;
        let r = quadrature::integrate(|q: f64| d.eval(q) / (q + k), &self.breaks, &self.tol)?;
        Ok(r.value)
    }

    /// `A(k) = Re 1/G+(k) = 1 - k^2 - 2 [P int D/(q-k) + int D/(q+k)]`.
    pub fn real_part(&self, k: f64) -> Result<f64> {
        Ok(1.0 - k * k - 2.0 * (self.principal_value(k)? + self.reflected(k)?))
    }

    /// Boundary value `1/G+(k) = A(k) - 2 pi i D(k)` assembled from the
    /// real-axis pieces.
    pub fn boundary_inverse_real(&self, k: f64) -> Result<Complex64> {
        Ok(Complex64::new(self.real_part(k)?, -2.0 * PI * self.density.eval(k)))
    }

    /// Zero of `A(k)` below `k = 1`, bracketed by a downward scan then bisected.
    pub fn resonance(&self) -> Result<Resonance> {
        if self.density.coupling() == 0.0 {
            return Ok(Resonance { k: 1.0, width: 0.0 });
        }
        let mut hi = 1.0;
        let mut a_hi = self.real_part(hi)?;
        if a_hi > 0.0 {
            // Strong repulsive shift: scan upward instead.
            let mut lo = hi;
            let mut found = false;
            for _ in 0..200 {
                hi = lo * 1.02;
                a_hi = self.real_part(hi)?;
                if a_hi <= 0.0 {
                    found = true;
                    break;
                }
                lo = hi;
            }
            if !found {
                return Err(Error::NoConvergence {
                    iterations: 200,
                    residual: a_hi,
                });
            }
            return self.bisect_resonance(lo, hi);
        }
        let mut lo = hi;
        for _ in 0..400 {
            lo = hi - 0.01;
            if lo <= 0.0 {
                break;
            }
            if self.real_part(lo)? > 0.0 {
                return self.bisect_resonance(lo, hi);
            }
            hi = lo;
        }
        Err(Error::NoConvergence {
            iterations: 400,
            residual: self.real_part(lo.max(1e-3))?,
        })
    }

    fn bisect_resonance(&self, mut lo: f64, mut hi: f64) -> Result<Resonance> {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.real_part(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let k = 0.5 * (lo + hi);
        Ok(Resonance {
            k,
            width: PI * self.density.eval(k),
        })
    }

    /// Second-sheet pole near `guess` by damped Newton with a central
    /// difference derivative, falling back to Muller's method on stagnation.
    pub fn find_pole(&self, guess: Complex64) -> Result<PoleResult> {
        if !self.density.regularization().is_analytic() {
            return Err(Error::SharpCutoffNoContinuation);
        }
        const MAX_ITER: usize = 60;
        const TARGET: f64 = 1e-10;
        let f = |z: Complex64| self.inverse_unchecked(z, Sheet::II);
        let mut z = guess;
        let mut fz = f(z)?;
        let mut iterations = 0;
        let mut stagnant = 0;
        while iterations < MAX_ITER {
            if fz.norm() < TARGET {
                return self.finish_pole(z, fz, iterations);
            }
            iterations += 1;
            let h = 1e-4;
            let dh = Complex64::new(h, 0.0);
            let deriv = (f(z + dh)? - f(z - dh)?) / (2.0 * h);
            if deriv.norm() == 0.0 {
                break;
            }
            let mut step = -fz / deriv;
            if step.norm() > 0.1 {
                step *= 0.1 / step.norm();
            }
            let znew = z + step;
            let fnew = f(znew)?;
            if fnew.norm() >= fz.norm() {
                stagnant += 1;
                if stagnant >= 3 {
                    break;
                }
            } else {
                stagnant = 0;
            }
            z = znew;
            fz = fnew;
        }
        if fz.norm() < TARGET {
            return self.finish_pole(z, fz, iterations);
        }
        self.muller(z, iterations, MAX_ITER, TARGET)
    }

    fn muller(&self, start: Complex64, mut iterations: usize, max_iter: usize, target: f64) -> Result<PoleResult> {
        let f = |z: Complex64| self.inverse_unchecked(z, Sheet::II);
        let h = Complex64::new(1e-3, -1e-3);
        let (mut x0, mut x1, mut x2) = (start - h, start + h, start);
        let (mut f0, mut f1, mut f2) = (f(x0)?, f(x1)?, f(x2)?);
        while iterations < 2 * max_iter {
            if f2.norm() < target {
                return self.finish_pole(x2, f2, iterations);
            }
            iterations += 1;
            let h1 = x1 - x0;
            let h2 = x2 - x1;
            let d1 = (f1 - f0) / h1;
            let d2 = (f2 - f1) / h2;
            let a = (d2 - d1) / (h2 + h1);
            let b = a * h2 + d2;
            let disc = (b * b - a * f2 * 4.0).sqrt();
            let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
            if den.norm() == 0.0 {
                break;
            }
            let mut step = -f2 * 2.0 / den;
            if step.norm() > 0.1 {
                step *= 0.1 / step.norm();
            }
            let x3 = x2 + step;
            x0 = x1;
            f0 = f1;
            x1 = x2;
            f1 = f2;
            x2 = x3;
            f2 = f(x2)?;
        }
        if f2.norm() < target {
            return self.finish_pole(x2, f2, iterations);
        }
        Err(Error::NoConvergence {
            iterations,
            residual: f2.norm(),
        })
    }

    fn finish_pole(&self, z: Complex64, fz: Complex64, iterations: usize) -> Result<PoleResult> {
        // A root in the upper half plane is not a physical resonance.
        if z.im > 1e-14 {
            return Err(Error::NoConvergence {
                iterations,
                residual: fz.norm(),
            });
        }
        Ok(PoleResult {
            z: Complex64::new(z.re, z.im.min(0.0)),
            residual: fz.norm(),
            iterations,
        })
    }

    /// Default pole guess: the real-axis resonance and its width.
    pub fn pole_guess(&self) -> Result<Complex64> {
        let r = self.resonance()?;
        Ok(Complex64::new(r.k, -r.width))
    }
}

fn check_off_axis(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite argument {z}")));
    }
    if z.im == 0.0 && z.re != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "z = {} lies on the cut; use boundary values",
            z.re
        )));
    }
    Ok(())
}

/// High-precision evaluator for the pole search: the function whose root is
/// sought must be smooth well below the 1e-10 residual target.
pub fn pole_evaluator(cfg: &ModelConfig) -> ResolventEvaluator {
    ResolventEvaluator::with_tolerance(cfg, cfg.tolerance().tightened(1e-4))
}

pub fn find_pole(cfg: &ModelConfig, guess: Option<Complex64>) -> Result<PoleResult> {
    let ev = pole_evaluator(cfg);
    let g = match guess {
        Some(g) => g,
        None => ev.pole_guess()?,
    };
    ev.find_pole(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Geometry, RegulatorKind};

    fn cfg(u: f64, geom: Geometry) -> ModelConfig {
        ModelConfig::simple(u, [1.0 / 3.0; 3], geom, RegulatorKind::Exponential, 10.0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_coupling_is_free_resolvent() {
        let ev = ResolventEvaluator::new(&cfg(0.0, Geometry::Wall { distance: 1.0 }));
        for z in [c(0.5, 0.5), c(2.0, -0.1), c(0.0, 3.0)] {
            let g = ev.resolvent(z, Sheet::I).unwrap();
            let exact = (Complex64::new(1.0, 0.0) - z * z).inv();
            assert!((g - exact).norm() <= 1e-15 * exact.norm());
            assert_eq!(ev.self_energy(z).unwrap(), c(0.0, 0.0));
        }
    }

    #[test]
    fn real_argument_is_rejected() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::FreeSpace));
        assert!(matches!(ev.self_energy(c(1.0, 0.0)), Err(Error::InvalidArgument(_))));
        assert!(ev.self_energy(c(0.0, 0.0)).is_ok());
    }

    #[test]
    fn self_energy_on_imaginary_axis_dual_quadrature() {
        let config = cfg(1e-4, Geometry::FreeSpace);
        let ev = ResolventEvaluator::new(&config);
        let s = ev.self_energy(c(0.0, 1.0)).unwrap();
        assert!(s.im.abs() < 1e-14 * s.re.abs());
        // -4 int D k/(-1 - k^2): fixed high-order rule on a uniform mesh.
        let d = CouplingDensity::new(&config);
        let fixed: f64 = quadrature::fixed_gauss_legendre(
            |k: f64| -4.0 * d.eval(k) * k / (-1.0 - k * k),
            &[0.0, 1.0, 10.0, 100.0, 600.0],
            32,
            40,
        );
        assert!(s.re > 0.0);
        assert!((s.re - fixed).abs() < 1e-8 * fixed.abs(), "{} vs {}", s.re, fixed);
    }

    #[test]
    fn large_imaginary_argument_asymptotics() {
        let config = cfg(1e-4, Geometry::FreeSpace);
        let ev = ResolventEvaluator::new(&config);
        let d = CouplingDensity::new(&config);
        let moment = quadrature::integrate(|k: f64| d.eval(k) * k, &d.breakpoints(&[]), &config.tolerance())
            .unwrap()
            .value;
        let z = c(0.0, 1e3);
        let s = ev.self_energy(z).unwrap();
        // -int D 4k/(z^2 - k^2) -> -4 M / z^2 with M = int D k.
        let asym = -moment * 4.0 / (z * z);
        assert!((s - asym).norm() < 0.01 * asym.norm(), "{s} vs {asym}");
    }

    #[test]
    fn schwarz_and_evenness() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::Wall { distance: 1.0 }));
        for z in [c(0.5, 0.5), c(1.2, 0.05), c(3.0, 2.0), c(0.1, 0.01)] {
            let g = ev.resolvent(z, Sheet::I).unwrap();
            let gc = ev.resolvent(z.conj(), Sheet::I).unwrap();
            let gm = ev.resolvent(-z, Sheet::I).unwrap();
            assert!((g - gc.conj()).norm() < 1e-10 * g.norm());
            assert!((g - gm).norm() < 1e-10 * g.norm());
        }
    }

    #[test]
    fn jump_identity_and_conjugate_boundary_values() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::Wall { distance: 1.0 }));
        for k in [0.5, 1.0, 2.0] {
            let (ip, im) = ev.boundary_inverse(k).unwrap();
            let jump = ip - im + c(0.0, 4.0 * PI * ev.density().eval(k));
            assert!(jump.norm() < 1e-8, "k={k}: {jump}");
            let (gp, gm) = ev.boundary_values(k).unwrap();
            assert!((gm - gp.conj()).norm() < 1e-10 * gp.norm());
        }
    }

    #[test]
    fn principal_value_two_algorithms() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::Wall { distance: 0.7 }));
        for k in [0.3, 0.9, 1.0, 2.5, 40.0] {
            let a = ev.principal_value(k).unwrap();
            let b = ev.principal_value_symmetric(k).unwrap();
            assert!((a - b).abs() < 1e-8 * a.abs().max(1e-6), "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn boundary_value_matches_real_axis_assembly() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::FreeSpace));
        for k in [0.4, 0.95, 1.7] {
            let (ip, _) = ev.boundary_inverse(k).unwrap();
            let real = ev.boundary_inverse_real(k).unwrap();
            assert!((ip - real).norm() < 1e-9, "{ip} vs {real}");
        }
    }

    #[test]
    fn sheet_two_continuity_across_cut() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::FreeSpace));
        let mut last = f64::INFINITY;
        for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
            let below = ev.resolvent(c(1.3, -eps), Sheet::II).unwrap();
            let above = ev.resolvent(c(1.3, eps), Sheet::I).unwrap();
            let gap = (below - above).norm();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn sharp_cutoff_refuses_continuation() {
        let config = ModelConfig::simple(1e-4, [1.0 / 3.0; 3], Geometry::FreeSpace, RegulatorKind::Sharp, 8.0).unwrap();
        let ev = ResolventEvaluator::new(&config);
        assert_eq!(ev.resolvent(c(1.0, -0.1), Sheet::II), Err(Error::SharpCutoffNoContinuation));
        assert!(matches!(find_pole(&config, None), Err(Error::SharpCutoffNoContinuation)));
    }

    #[test]
    fn weak_coupling_pole() {
        // The level shift grows like u kc^2, so the decoupling bound uses a
        // moderate cutoff; at kc = 10 the shift is still ~1e-3 at u = 1e-6.
        let at = |u: f64| {
            let config = ModelConfig::simple(u, [1.0 / 3.0; 3], Geometry::FreeSpace, RegulatorKind::Exponential, 3.0).unwrap();
            find_pole(&config, None).unwrap()
        };
        let p = at(1e-6);
        assert!((p.z - c(1.0, 0.0)).norm() < 1e-4, "{}", p.z);
        assert!(p.z.im < 0.0);
        assert!(p.residual < 1e-10);
        let q = at(1e-7);
        let ratio = (p.z - 1.0).norm() / (q.z - 1.0).norm();
        assert!((ratio - 10.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn resonance_below_one() {
        let ev = ResolventEvaluator::new(&cfg(1e-4, Geometry::FreeSpace));
        let r = ev.resonance().unwrap();
        assert!(r.k < 1.0 && r.k > 0.85, "{}", r.k);
        assert!(ev.real_part(r.k - 1e-6).unwrap() > 0.0);
        assert!(ev.real_part(r.k + 1e-6).unwrap() < 0.0);
    }
}
