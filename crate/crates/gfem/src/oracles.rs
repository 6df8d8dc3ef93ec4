//! Closed-form harmonic solutions on the unit disk with exact Neumann data.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::assembly::{Atom, BoundaryDistribution, GfemFunction};
use crate::covering::AdmissibleSet;
use crate::error::{GfemError, Result};
use crate::field::Field;

type C64 = Complex<f64>;

/// `u = Re F(z)` with `F(z) = Σ_{n≥1} (a_n − i b_n) zⁿ + Σ_atoms F_atom(z)`.
///
/// Explicit modes come from the smooth part of the data; each boundary atom
/// contributes a closed-form pole term whose series has infinitely many modes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSeries {
    /// `a_n`, index `n` (entry 0 is the constant term).
    pub cos: Vec<f64>,
    /// `b_n`, index `n` (entry 0 unused).
    pub sin: Vec<f64>,
    pub atoms: Vec<Atom>,
}

/// Sobolev-type series norm, or the divergence flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SeriesNorm {
    Finite(f64),
    Divergent,
}

impl SeriesNorm {
    pub fn value(&self) -> f64 {
        match self {
            SeriesNorm::Finite(v) => *v,
            SeriesNorm::Divergent => f64::INFINITY,
        }
    }
}

/// Zero-mean harmonic `u` on the unit disk with `∂_ν u = g`.
pub fn neumann_solution(g: &BoundaryDistribution) -> Result<HarmonicSeries> {
    let comp = g.compatibility(2.0 * PI);
    if comp.abs() > 1e-10 {
        return Err(GfemError::CompatibilityError(comp));
    }
    if g.atoms.iter().any(|a| a.order > 2) {
        return Err(GfemError::Unsupported("atom orders above 2".into()));
    }
    let n = g.cos.len().max(g.sin.len());
    let mut cos = vec![0.0; n.max(1)];
    let mut sin = vec![0.0; n.max(1)];
    for k in 1..n {
        cos[k] = g.cos.get(k).copied().unwrap_or(0.0) / k as f64;
        sin[k] = g.sin.get(k).copied().unwrap_or(0.0) / k as f64;
    }
    Ok(HarmonicSeries { cos, sin, atoms: g.atoms.clone() })
}

impl HarmonicSeries {
    /// `(a_n, b_n)` including atom contributions.
    pub fn coefficient(&self, n: usize) -> (f64, f64) {
        let mut a = self.cos.get(n).copied().unwrap_or(0.0);
        let mut b = if n > 0 { self.sin.get(n).copied().unwrap_or(0.0) } else { 0.0 };
        if n > 0 {
            let nf = n as f64;
            for at in &self.atoms {
                let phase = nf * at.s - f64::from(at.order) * PI / 2.0;
                let c = at.weight * nf.powi(i32::from(at.order) - 1) / PI;
                a += c * phase.cos();
                b += c * phase.sin();
            }
        }
        (a, b)
    }

    /// Sum of the first `terms` modes (`n < terms`) with their derivatives.
    pub fn partial_truncated(&self, x: [f64; 2], a: u32, b: u32, terms: usize) -> f64 {
        let z = C64::new(x[0], x[1]);
        let k = (a + b) as usize;
        let mut f = C64::new(0.0, 0.0);
        for n in 0..terms {
            let (an, bn) = self.coefficient(n);
            if n < k || (an == 0.0 && bn == 0.0) {
                continue;
            }
            let mut fall = 1.0;
            for j in 0..k {
                fall *= (n - j) as f64;
            }
            f += C64::new(an, -bn) * fall * z.powu((n - k) as u32);
        }
        (f * C64::i().powu(b)).re
    }

    /// `k`-th complex derivative of `F` at `z`.
    fn analytic_derivative(&self, z: C64, k: usize) -> C64 {
        let mut f = C64::new(0.0, 0.0);
        let n = self.cos.len().max(self.sin.len());
        for m in k..n {
            let an = self.cos.get(m).copied().unwrap_or(0.0);
            let bn = if m > 0 { self.sin.get(m).copied().unwrap_or(0.0) } else { 0.0 };
            if an == 0.0 && bn == 0.0 {
                continue;
            }
            let mut fall = 1.0;
            for j in 0..k {
                fall *= (m - j) as f64;
            }
            f += C64::new(an, -bn) * fall * z.powu((m - k) as u32);
        }
        for at in &self.atoms {
            f += atom_derivative(at, z, k);
        }
        f
    }

    /// Supremum of orders `s` with a finite series norm.
    pub fn regularity(&self) -> f64 {
        self.atoms.iter().map(|a| 1.0 - f64::from(a.order)).fold(f64::INFINITY, f64::min)
    }

    /// Evaluates a mode-count series at `x` truncated to `terms`; used to validate the closed forms.
    pub fn value_truncated(&self, x: [f64; 2], terms: usize) -> f64 {
        self.partial_truncated(x, 0, 0, terms)
    }
}

/// `F_atom^{(k)}(z)` for the pole term of one atom.
///
/// Order 0: `−(w/π) ln(z − z₀)`; orders 1, 2 are its `θ₀`-derivatives.
fn atom_derivative(at: &Atom, z: C64, k: usize) -> C64 {
    let z0 = C64::from_polar(1.0, at.s);
    let d = z - z0;
    let w = at.weight / PI;
    // F = Σ_p c_p (z − z₀)^{−p} (p ≥ 1) plus, for order 0, −w ln(z − z₀)
    let poles: Vec<(u32, C64)> = match at.order {
        0 => {
            if k == 0 {
                return -w * d.ln();
            }
            // (ln d)^{(k)} = (−1)^{k−1}(k−1)!/d^k
            let mut fact = 1.0;
            for j in 1..k {
                fact *= j as f64;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            return -w * sign * fact / d.powu(k as u32);
        }
        1 => vec![(1, -C64::i() * z0 * w)],
        _ => vec![(1, -z0 * w), (2, -z0 * z0 * w)],
    };
    let mut f = C64::new(0.0, 0.0);
    for (p, c) in poles {
        // (d^{−p})^{(k)} = (−1)^k p(p+1)…(p+k−1) d^{−p−k}
        let mut rise = 1.0;
        for j in 0..k {
            rise *= (p as usize + j) as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        f += c * sign * rise / d.powu(p + k as u32);
    }
    f
}

impl Field for HarmonicSeries {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64 {
        let z = C64::new(x[0], x[1]);
        (self.analytic_derivative(z, (a + b) as usize) * C64::i().powu(b)).re
    }
}

/// `(π Σ_n (1+n²)^{s−1/2} (a_n² + b_n²))^{1/2}`, or `Divergent` at or beyond the regularity index.
pub fn series_sobolev_norm(u: &HarmonicSeries, s: f64) -> SeriesNorm {
    if s >= u.regularity() {
        return SeriesNorm::Divergent;
    }
    let explicit = u.cos.len().max(u.sin.len());
    let term = |n: usize| {
        let (a, b) = u.coefficient(n);
        let w = if n == 0 { 1.0 } else { (1.0 + (n * n) as f64).powf(s - 0.5) };
        w * (a * a + b * b)
    };
    let mut sum = 0.0;
    if u.atoms.is_empty() {
        for n in 0..explicit {
            sum += term(n);
        }
        return SeriesNorm::Finite((PI * sum).sqrt());
    }
    // terms behave like n^p with p = 2s + 2d − 3 < −1; sum directly, then add the integral tail
    let cutoff = 200_000.max(explicit);
    for n in 0..cutoff {
        sum += term(n);
    }
    let p = 2.0 * s + 2.0 * (1.0 - u.regularity()) - 3.0;
    let nf = cutoff as f64;
    // average of the last block as the amplitude, since atom phases oscillate
    let block = 1000;
    let amp: f64 = (cutoff - block..cutoff).map(|n| term(n) / (n as f64).powf(p)).sum::<f64>() / block as f64;
    let tail = amp * (nf - 0.5).powf(p + 1.0) / (-(p + 1.0));
    SeriesNorm::Finite((PI * (sum + tail)).sqrt())
}

/// `‖u − u_S‖_{H¹(A)}` by composite quadrature restricted to `A`.
pub fn interior_h1_error(u: &dyn Field, u_s: &GfemFunction, a: &AdmissibleSet) -> f64 {
    let space = u_s.space();
    let dist = a.boundary_distance(space.domain());
    if dist < space.covering().h {
        log::warn!("region lies within {dist:.3} of the boundary; pole solutions converge slowly there");
    }
    let (l2, semi) = crate::norms::error_norms(u, u_s, Some(&a.mask));
    (l2 * l2 + semi * semi).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_interior(rng: &mut ChaCha8Rng, rmax: f64) -> [f64; 2] {
        let r = rmax * rng.random_range(0.0f64..1.0).sqrt();
        let t = rng.random_range(0.0..2.0 * PI);
        [r * t.cos(), r * t.sin()]
    }

    #[test]
    fn cosine_data_gives_linear_solution() {
        let u = neumann_solution(&BoundaryDistribution::cosine(1)).unwrap();
        let x = [0.3, -0.4];
        assert!((u.value(x) - 0.3).abs() < 1e-15);
        assert_eq!(u.grad(x), [1.0, 0.0]);
        let n = series_sobolev_norm(&u, 5.0);
        assert!(matches!(n, SeriesNorm::Finite(v) if v.is_finite()));
    }

    #[test]
    fn log_pole_matches_series_and_closed_form() {
        let th0 = 0.7;
        let u = neumann_solution(&BoundaryDistribution::dirac(th0, 2.0 * PI)).unwrap();
        let y0 = [th0.cos(), th0.sin()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = random_interior(&mut rng, 0.9);
            let closed = -((x[0] - y0[0]).hypot(x[1] - y0[1])).ln() / PI;
            assert!((u.value(x) - closed).abs() < 1e-12);
            assert!((u.value_truncated(x, 400) - closed).abs() < 1e-8);
        }
        for _ in 0..20 {
            let x = random_interior(&mut rng, 0.5);
            assert!((u.value_truncated(x, 200) - u.value(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn dipole_matches_series() {
        let u = neumann_solution(&BoundaryDistribution::dipole(1.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let x = random_interior(&mut rng, 0.85);
            for (a, b) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)] {
                let s = u.partial_truncated(x, a, b, 600);
                assert!((u.partial(x, a, b) - s).abs() < 1e-7 * (1.0 + s.abs()), "({a},{b}) {} {s}", u.partial(x, a, b));
            }
        }
        let u2 = HarmonicSeries { atoms: vec![Atom { s: 2.0, order: 2, weight: 0.5 }], ..Default::default() };
        let x = [0.2, 0.3];
        assert!((u2.value(x) - u2.value_truncated(x, 300)).abs() < 1e-10);
    }

    #[test]
    fn series_is_harmonic() {
        let u = neumann_solution(&BoundaryDistribution::dirac(0.0, 2.0 * PI)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let e = 1e-3;
        for _ in 0..20 {
            let x = random_interior(&mut rng, 0.2);
            let lap = (u.value([x[0] + e, x[1]]) + u.value([x[0] - e, x[1]]) + u.value([x[0], x[1] + e]) + u.value([x[0], x[1] - e])
                - 4.0 * u.value(x))
                / (e * e);
            assert!(lap.abs() < 1e-6, "{lap}");
            assert!((u.partial(x, 2, 0) + u.partial(x, 0, 2)).abs() < 1e-9);
        }
    }

    #[test]
    fn neumann_trace_matches_data() {
        let mut g = BoundaryDistribution::cosine(3);
        g.sin = vec![0.0, 0.0, 0.5];
        let u = neumann_solution(&g).unwrap();
        let r = 1.0 - 1e-4;
        let nodes = 256;
        for n in 1..5usize {
            let (mut pc, mut ps) = (0.0, 0.0);
            for i in 0..nodes {
                let t = 2.0 * PI * i as f64 / nodes as f64;
                let x = [r * t.cos(), r * t.sin()];
                let gr = u.grad(x);
                let dr = gr[0] * t.cos() + gr[1] * t.sin();
                pc += dr * (n as f64 * t).cos() * 2.0 / nodes as f64;
                ps += dr * (n as f64 * t).sin() * 2.0 / nodes as f64;
            }
            let want_c = g.cos.get(n).copied().unwrap_or(0.0);
            let want_s = g.sin.get(n).copied().unwrap_or(0.0);
            assert!((pc - want_c).abs() < 1e-3 && (ps - want_s).abs() < 1e-3, "n={n} {pc} {ps}");
        }
    }

    #[test]
    fn regularity_thresholds() {
        let log = neumann_solution(&BoundaryDistribution::dirac(0.0, 2.0 * PI)).unwrap();
        assert!(series_sobolev_norm(&log, 0.9).value().is_finite());
        assert_eq!(series_sobolev_norm(&log, 1.0), SeriesNorm::Divergent);
        let dip = neumann_solution(&BoundaryDistribution::dipole(0.0)).unwrap();
        assert!(series_sobolev_norm(&dip, -0.1).value().is_finite());
        assert_eq!(series_sobolev_norm(&dip, 0.0), SeriesNorm::Divergent);
        // norms grow as s approaches the threshold
        let a = series_sobolev_norm(&log, 0.5).value();
        let b = series_sobolev_norm(&log, 0.9).value();
        assert!(b > a);
        // log pole at s = 0: π Σ (1+n²)^{−1/2} (1/(nπ))²
        let direct: f64 = (1..2_000_000u64).map(|n| (1.0 + (n * n) as f64).powf(-0.5) / (n as f64 * PI).powi(2)).sum::<f64>() * PI;
        assert!((series_sobolev_norm(&log, 0.0).value() - direct.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn incompatible_data_rejected() {
        let g = BoundaryDistribution { atoms: vec![Atom { s: 0.0, order: 0, weight: 1.0 }], cos: vec![], sin: vec![] };
        assert!(matches!(neumann_solution(&g), Err(GfemError::CompatibilityError(_))));
    }
}
