//! Flat-top partition of unity.
//!
//! `η_j(x) = ψ(|x − j|/R_j) · Π_{j'≠j} ζ(|x − j'|/ρ*_{j'})` and `φ_j = η_j / Σ_k η_k`.
//! The cap `ψ` equals 1 on `[0, 2σ]` and vanishes on `[1, ∞)`; the hole `ζ`
//! vanishes on `[0, 1]` and equals 1 on `[2, ∞)`. Both transitions are the
//! C⁴ nonic smoothstep.

use std::sync::{Arc, OnceLock};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::covering::Covering;
use crate::error::{GfemError, Result};
use crate::quadrature::{GridRule, NodeMode, PuRule, Zone};

/// C⁴ smoothstep `S(u) = 126u⁵ − 420u⁶ + 540u⁷ − 315u⁸ + 70u⁹` with two derivatives.
#[inline]
pub fn smoothstep(u: f64) -> (f64, f64, f64) {
    let (s, _, d1, d2) = smoothstep_split(u);
    (s, d1, d2)
}

/// `(S, 1 − S, S′, S″)`, each side evaluated from the nearer end so both
/// `S` and `1 − S` keep full relative accuracy.
#[inline]
fn smoothstep_split(u: f64) -> (f64, f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 1.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    let tail = |x: f64| {
        let x2 = x * x;
        x2 * x2 * x * (126.0 + x * (-420.0 + x * (540.0 + x * (-315.0 + 70.0 * x))))
    };
    let v = 1.0 - u;
    let (s, c) = if u <= 0.5 {
        let s = tail(u);
        (s, 1.0 - s)
    } else {
        let c = tail(v);
        (1.0 - c, c)
    };
    let u2 = u * u;
    let v3 = v * v * v;
    let d1 = 630.0 * u2 * u2 * v3 * v;
    let d2 = 2520.0 * u2 * u * v3 * (1.0 - 2.0 * u);
    (s, c, d1, d2)
}

/// Radial profiles of the partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub sigma: f64,
}

impl Profiles {
    /// Cap `ψ(t)` and its first two derivatives.
    #[inline]
    pub fn cap(&self, t: f64) -> (f64, f64, f64) {
        let a = 2.0 * self.sigma;
        if t <= a {
            return (1.0, 0.0, 0.0);
        }
        let w = 1.0 - a;
        let (_, c, d1, d2) = smoothstep_split((t - a) / w);
        (c, -d1 / w, -d2 / (w * w))
    }

    /// Hole `ζ(t)` and its first two derivatives.
    #[inline]
    pub fn hole(&self, t: f64) -> (f64, f64, f64) {
        smoothstep(t - 1.0)
    }
}

/// Value, gradient and Hessian `(xx, xy, yy)` of one partition function at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PuValue {
    pub index: u32,
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

#[derive(Clone, Copy, Default)]
struct Jet {
    v: f64,
    g: [f64; 2],
    h: [f64; 3],
}

impl Jet {
    #[inline]
    fn radial(x: [f64; 2], c: [f64; 2], scale: f64, f: (f64, f64, f64)) -> Self {
        let (v, f1, f2) = f;
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        let d = (dx * dx + dy * dy).sqrt();
        let fd = f1 / scale;
        let fdd = f2 / (scale * scale);
        if d < 1e-300 || (fd == 0.0 && fdd == 0.0) {
            return Jet { v, g: [0.0; 2], h: [fdd, 0.0, fdd] };
        }
        let n = [dx / d, dy / d];
        let q = fd / d;
        Jet {
            v,
            g: [fd * n[0], fd * n[1]],
            h: [fdd * n[0] * n[0] + q * (1.0 - n[0] * n[0]), (fdd - q) * n[0] * n[1], fdd * n[1] * n[1] + q * (1.0 - n[1] * n[1])],
        }
    }

    #[inline]
    fn mul(&self, o: &Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            g: [self.v * o.g[0] + o.v * self.g[0], self.v * o.g[1] + o.v * self.g[1]],
            h: [
                self.v * o.h[0] + o.v * self.h[0] + 2.0 * self.g[0] * o.g[0],
                self.v * o.h[1] + o.v * self.h[1] + self.g[0] * o.g[1] + self.g[1] * o.g[0],
                self.v * o.h[2] + o.v * self.h[2] + 2.0 * self.g[1] * o.g[1],
            ],
        }
    }
}

pub struct PartitionOfUnity {
    covering: Arc<Covering>,
    pub profiles: Profiles,
    /// For each patch, the sorted patches whose balls intersect its ball (itself included).
    overlaps: Vec<Vec<u32>>,
    rule: OnceLock<Arc<PuRule>>,
}

/// Default background resolution: cells per `h` and Gauss points per direction.
pub const CELLS_PER_H: f64 = 8.0;
pub const QUAD_ORDER: usize = 12;

/// Builds the partition and checks the denominator on a grid of pitch `h/10`.
pub fn build_flat_top_pu(c: Arc<Covering>) -> Result<PartitionOfUnity> {
    let pu = PartitionOfUnity::new_unchecked(c);
    let cov = pu.covering();
    let d = cov.domain();
    let pitch = cov.h / 10.0;
    let (lo, hi) = d.bbox();
    let mut buf = Vec::new();
    for j in ((lo[1] / pitch).floor() as i64)..=((hi[1] / pitch).ceil() as i64) {
        for i in ((lo[0] / pitch).floor() as i64)..=((hi[0] / pitch).ceil() as i64) {
            let p = [i as f64 * pitch, j as f64 * pitch];
            if !d.inside(p) || cov.patches_containing(p).is_empty() {
                continue;
            }
            let eta = pu.eval_into(p, NodeMode::Exact, 0, &mut buf);
            if eta <= 1e-14 {
                return Err(GfemError::NormalizationFailure { point: p, value: eta });
            }
        }
    }
    Ok(pu)
}

impl PartitionOfUnity {
    pub fn new_unchecked(covering: Arc<Covering>) -> Self {
        let mut overlaps = vec![Vec::new(); covering.len()];
        for (j, p) in covering.patches.iter().enumerate() {
            covering.for_nearby(p.center, p.radius, |k| {
                let q = &covering.patches[k as usize];
                if (p.center[0] - q.center[0]).hypot(p.center[1] - q.center[1]) < p.radius + q.radius {
                    overlaps[j].push(k);
                }
            });
            overlaps[j].sort_unstable();
        }
        let profiles = Profiles { sigma: covering.sigma };
        Self { covering, profiles, overlaps, rule: OnceLock::new() }
    }

    pub fn covering(&self) -> &Covering {
        &self.covering
    }

    pub fn covering_arc(&self) -> Arc<Covering> {
        self.covering.clone()
    }

    pub fn len(&self) -> usize {
        self.covering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covering.is_empty()
    }

    pub fn overlaps(&self, j: usize) -> &[u32] {
        &self.overlaps[j]
    }

    /// Evaluates every nonzero `φ_j` at `x` (derivatives up to `order`) into `out`; returns `η(x)`.
    ///
    /// In `Smoothed(k)` mode the hole factor of patch `k` is replaced by 1.
    pub fn eval_into(&self, x: [f64; 2], mode: NodeMode, order: u8, out: &mut Vec<PuValue>) -> f64 {
        out.clear();
        let cov = &*self.covering;
        let prof = self.profiles;
        let mut caps: SmallVec<[(u32, Jet); 16]> = SmallVec::new();
        let mut holes: SmallVec<[(u32, Jet); 2]> = SmallVec::new();
        cov.for_nearby(x, 0.0, |j| {
            let p = &cov.patches[j as usize];
            let (dx, dy) = (x[0] - p.center[0], x[1] - p.center[1]);
            let d2 = dx * dx + dy * dy;
            if d2 >= p.radius * p.radius {
                return;
            }
            let d = d2.sqrt();
            caps.push((j, Jet::radial(x, p.center, p.radius, prof.cap(d / p.radius))));
            if d < 2.0 * p.flat_radius && mode != NodeMode::Smoothed(j) {
                holes.push((j, Jet::radial(x, p.center, p.flat_radius, prof.hole(d / p.flat_radius))));
            }
        });
        if caps.is_empty() {
            return 0.0;
        }
        let mut etas: SmallVec<[(u32, Jet); 16]> = SmallVec::new();
        let mut total = Jet::default();
        for (j, cap) in &caps {
            let mut e = *cap;
            for (k, hole) in &holes {
                if k != j {
                    e = e.mul(hole);
                }
            }
            total.v += e.v;
            for a in 0..2 {
                total.g[a] += e.g[a];
            }
            for a in 0..3 {
                total.h[a] += e.h[a];
            }
            etas.push((*j, e));
        }
        let eta = total.v;
        if eta <= 0.0 {
            return eta;
        }
        let inv = 1.0 / eta;
        for (j, e) in etas {
            if e.v == 0.0 && e.g == [0.0, 0.0] && e.h == [0.0, 0.0, 0.0] {
                continue;
            }
            let phi = e.v * inv;
            let mut val = PuValue { index: j, value: phi, ..Default::default() };
            if order >= 1 {
                let g = [(e.g[0] - phi * total.g[0]) * inv, (e.g[1] - phi * total.g[1]) * inv];
                val.grad = g;
                if order >= 2 {
                    let tg = total.g;
                    val.hess = [
                        (e.h[0] - phi * total.h[0] - 2.0 * g[0] * tg[0]) * inv,
                        (e.h[1] - phi * total.h[1] - g[0] * tg[1] - g[1] * tg[0]) * inv,
                        (e.h[2] - phi * total.h[2] - 2.0 * g[1] * tg[1]) * inv,
                    ];
                }
            }
            out.push(val);
        }
        out.sort_unstable_by_key(|v| v.index);
        eta
    }

    /// `φ_j` at `x` with derivatives up to `order`.
    pub fn eval_pu(&self, j: usize, x: [f64; 2], order: u8) -> PuValue {
        let mut buf = Vec::new();
        self.eval_into(x, NodeMode::Exact, order, &mut buf);
        buf.into_iter().find(|v| v.index as usize == j).unwrap_or(PuValue { index: j as u32, ..Default::default() })
    }

    /// Composite quadrature over the domain at the default resolution (cached).
    pub fn rule(&self) -> Arc<PuRule> {
        self.rule.get_or_init(|| Arc::new(self.build_rule(CELLS_PER_H, QUAD_ORDER))).clone()
    }

    pub fn build_rule(&self, cells_per_h: f64, order: usize) -> PuRule {
        let cov = &*self.covering;
        let grid = cov.cell_grid(cells_per_h);
        let base = GridRule::build(grid, order, &[cov.domain()], None);
        let zones = cov.patches.iter().map(|p| Zone { center: p.center, flat_radius: p.flat_radius }).collect();
        PuRule::new(base, zones)
    }
}

/// Measured constants of the covering and partition.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub h: f64,
    pub sigma: f64,
    pub patches: usize,
    pub samples: usize,
    pub kappa: usize,
    /// Largest number of supports meeting at a sample point.
    pub support_overlap: usize,
    pub max_partition_error: f64,
    pub flat_top_violations: usize,
    pub flat_top_max_deviation: f64,
    /// `max |∂^α φ_j| · d_j^{|α|}` for `|α| = 0, 1, 2`.
    pub c_hat: [f64; 3],
    pub min_eta: f64,
    pub flat_ball_gap: f64,
    /// Uncovered samples, flat balls leaving the domain, diameters above `h`.
    pub assumption_a_violations: usize,
    pub uncovered_samples: usize,
    pub lipschitz_violations: usize,
    /// `max_j h^l ‖φ_j‖_{H^l(Ω)}` for `l = 0, 1, 2`.
    pub scaled_hl_norms: [f64; 3],
    pub mu: f64,
}

impl AssumptionReport {
    pub fn violations(&self) -> usize {
        self.flat_top_violations
            + self.assumption_a_violations
            + self.lipschitz_violations
            + usize::from(self.max_partition_error > 1e-10)
            + usize::from(self.flat_ball_gap < 0.0)
            + usize::from(self.support_overlap > self.kappa)
    }
}

/// Sweeps a grid of pitch `h/10` and the flat balls; failures are reported, not raised.
pub fn verify_assumptions(pu: &PartitionOfUnity) -> AssumptionReport {
    let cov = pu.covering();
    let d = cov.domain();
    let h = cov.h;
    let mut rep = AssumptionReport {
        h,
        sigma: cov.sigma,
        patches: cov.len(),
        kappa: cov.kappa,
        min_eta: f64::INFINITY,
        flat_ball_gap: cov.flat_ball_gap(),
        mu: cov.mu,
        ..Default::default()
    };
    let pitch = h / 10.0;
    let (lo, hi) = d.bbox();
    let mut buf = Vec::new();
    for j in ((lo[1] / pitch).floor() as i64)..=((hi[1] / pitch).ceil() as i64) {
        for i in ((lo[0] / pitch).floor() as i64)..=((hi[0] / pitch).ceil() as i64) {
            let p = [i as f64 * pitch, j as f64 * pitch];
            if !d.inside(p) {
                continue;
            }
            rep.samples += 1;
            let supports = cov.patches_containing(p).len();
            rep.support_overlap = rep.support_overlap.max(supports);
            if supports == 0 {
                rep.uncovered_samples += 1;
                continue;
            }
            let eta = pu.eval_into(p, NodeMode::Exact, 2, &mut buf);
            rep.min_eta = rep.min_eta.min(eta);
            let mut sum = 0.0;
            for v in &buf {
                let dj = cov.patches[v.index as usize].diameter();
                sum += v.value;
                rep.c_hat[0] = rep.c_hat[0].max(v.value.abs());
                rep.c_hat[1] = rep.c_hat[1].max(v.grad[0].hypot(v.grad[1]) * dj);
                let hm = v.hess.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                rep.c_hat[2] = rep.c_hat[2].max(hm * dj * dj);
            }
            rep.max_partition_error = rep.max_partition_error.max((sum - 1.0).abs());
        }
    }
    // flat-top samples: 50 sunflower points per flat ball
    for (j, p) in cov.patches.iter().enumerate() {
        for k in 0..50 {
            let r = p.flat_radius * 0.999 * ((k as f64 + 0.5) / 50.0).sqrt();
            let th = k as f64 * 2.399_963_229_728_653;
            let x = [p.center[0] + r * th.cos(), p.center[1] + r * th.sin()];
            let dev = (pu.eval_pu(j, x, 0).value - 1.0).abs();
            rep.flat_top_max_deviation = rep.flat_top_max_deviation.max(dev);
            if dev > 1e-12 {
                rep.flat_top_violations += 1;
            }
        }
        if d.distance(p.center) < p.flat_radius || !d.inside(p.center) || p.diameter() > h * (1.0 + 1e-12) {
            rep.assumption_a_violations += 1;
        }
    }
    rep.assumption_a_violations += rep.uncovered_samples;
    // Lipschitz bound on random close pairs
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let j = rng.random_range(0..cov.len());
        let p = cov.patches[j];
        let a = [p.center[0] + rng.random_range(-p.radius..p.radius), p.center[1] + rng.random_range(-p.radius..p.radius)];
        let b = [a[0] + rng.random_range(-0.05..0.05) * h, a[1] + rng.random_range(-0.05..0.05) * h];
        if !d.inside(a) || !d.inside(b) || cov.patches_containing(a).is_empty() || cov.patches_containing(b).is_empty() {
            continue;
        }
        let diff = (pu.eval_pu(j, a, 0).value - pu.eval_pu(j, b, 0).value).abs();
        let bound = rep.c_hat[1] / p.diameter() * (a[0] - b[0]).hypot(a[1] - b[1]);
        if diff > 1.05 * bound + 1e-14 {
            rep.lipschitz_violations += 1;
        }
    }
    if rep.uncovered_samples == 0 {
        rep.scaled_hl_norms = scaled_hl_norms(pu);
    }
    rep
}

/// `max_j h^l ‖φ_j‖_{H^l(Ω)}` for `l = 0, 1, 2`.
pub fn scaled_hl_norms(pu: &PartitionOfUnity) -> [f64; 3] {
    let n = pu.len();
    let mut acc = vec![[0.0f64; 3]; n];
    let rule = pu.rule();
    let mut buf = Vec::new();
    rule.for_each(None, |x, w, mode| {
        pu.eval_into(x, mode, 2, &mut buf);
        for v in &buf {
            let a = &mut acc[v.index as usize];
            a[0] += w * v.value * v.value;
            a[1] += w * (v.grad[0] * v.grad[0] + v.grad[1] * v.grad[1]);
            a[2] += w * (v.hess[0] * v.hess[0] + v.hess[1] * v.hess[1] + v.hess[2] * v.hess[2]);
        }
    });
    let h = pu.covering().h;
    let mut out = [0.0f64; 3];
    for a in acc {
        let l0 = a[0].max(0.0);
        let l1 = l0 + a[1].max(0.0);
        let l2 = l1 + a[2].max(0.0);
        out[0] = out[0].max(l0.sqrt());
        out[1] = out[1].max(h * l1.sqrt());
        out[2] = out[2].max(h * h * l2.sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{build_covering, build_covering_unchecked, CoveringOptions};
    use crate::geometry::{make_cusp_domain, make_disk};

    fn disk_pu(h: f64) -> PartitionOfUnity {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        build_flat_top_pu(Arc::new(build_covering(&d, h, 0.1).unwrap())).unwrap()
    }

    #[test]
    fn smoothstep_derivatives() {
        for u in [0.1, 0.37, 0.5, 0.83] {
            let e = 1e-6;
            let (s, d1, d2) = smoothstep(u);
            let (sp, d1p, _) = smoothstep(u + e);
            let (sm, d1m, _) = smoothstep(u - e);
            assert!(((sp - sm) / (2.0 * e) - d1).abs() < 1e-7);
            assert!(((d1p - d1m) / (2.0 * e) - d2).abs() < 1e-5);
            assert!(s > 0.0 && s < 1.0);
        }
        assert_eq!(smoothstep(1.0).0, 1.0);
    }

    #[test]
    fn sums_to_one_and_flat_top() {
        let pu = disk_pu(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = Vec::new();
        for _ in 0..100 {
            let r = rng.random_range(0.0..0.999f64).sqrt();
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            pu.eval_into([r * t.cos(), r * t.sin()], NodeMode::Exact, 0, &mut buf);
            let s: f64 = buf.iter().map(|v| v.value).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(buf.iter().all(|v| v.value >= 0.0 && v.value <= 1.0 + 1e-15));
        }
        let c = pu.covering();
        let p0 = c.patches[0];
        for k in 0..50 {
            let r = p0.flat_radius * 0.99 * (k as f64 / 50.0);
            let x = [p0.center[0] + r * (k as f64).cos(), p0.center[1] + r * (k as f64).sin()];
            assert!((pu.eval_pu(0, x, 0).value - 1.0).abs() < 1e-12);
        }
        assert_eq!(pu.eval_pu(0, c.patches[1].center, 0).value, 0.0);
        let far = [p0.center[0] + 1.01 * p0.radius, p0.center[1]];
        assert_eq!(pu.eval_pu(0, far, 2).value, 0.0);
    }

    #[test]
    fn gradient_zero_on_flat_top() {
        let pu = disk_pu(0.2);
        let p = pu.covering().patches[5];
        let v = pu.eval_pu(5, [p.center[0] + 0.3 * p.flat_radius, p.center[1]], 2);
        assert_eq!(v.grad, [0.0, 0.0]);
        assert_eq!(v.hess, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pu = disk_pu(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        while checked < 100 {
            let j = rng.random_range(0..pu.len());
            let p = pu.covering().patches[j];
            let x = [p.center[0] + rng.random_range(-p.radius..p.radius), p.center[1] + rng.random_range(-p.radius..p.radius)];
            if !pu.covering().domain().inside(x) {
                continue;
            }
            let v = pu.eval_pu(j, x, 2);
            if v.grad[0].hypot(v.grad[1]) < 1e-3 {
                continue;
            }
            checked += 1;
            let e = 1e-6;
            let f = |y: [f64; 2]| pu.eval_pu(j, y, 1);
            let gx = (f([x[0] + e, x[1]]).value - f([x[0] - e, x[1]]).value) / (2.0 * e);
            let gy = (f([x[0], x[1] + e]).value - f([x[0], x[1] - e]).value) / (2.0 * e);
            let scale = v.grad[0].hypot(v.grad[1]);
            assert!((gx - v.grad[0]).hypot(gy - v.grad[1]) <= 1e-6 * scale.max(1.0), "grad at {x:?}");
            let hxx = (f([x[0] + e, x[1]]).grad[0] - f([x[0] - e, x[1]]).grad[0]) / (2.0 * e);
            let hxy = (f([x[0], x[1] + e]).grad[0] - f([x[0], x[1] - e]).grad[0]) / (2.0 * e);
            let hyy = (f([x[0], x[1] + e]).grad[1] - f([x[0], x[1] - e]).grad[1]) / (2.0 * e);
            let hs = v.hess.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            assert!((hxx - v.hess[0]).abs() < 1e-5 * hs);
            assert!((hxy - v.hess[1]).abs() < 1e-5 * hs);
            assert!((hyy - v.hess[2]).abs() < 1e-5 * hs);
        }
    }

    #[test]
    fn report_has_no_violations_on_disk() {
        let pu = disk_pu(0.2);
        let rep = verify_assumptions(&pu);
        assert_eq!(rep.violations(), 0, "{rep:?}");
        assert!(rep.c_hat[1] > 0.0 && rep.c_hat[2] > 0.0);
        assert!(rep.min_eta > 1e-3);
    }

    #[test]
    fn cusp_report_flags_assumption_a() {
        let d = Arc::new(make_cusp_domain());
        let c = build_covering_unchecked(d, 0.05, 0.1, &CoveringOptions::default()).unwrap();
        let pu = PartitionOfUnity::new_unchecked(Arc::new(c));
        let rep = verify_assumptions(&pu);
        assert!(rep.assumption_a_violations > 0);
    }
}
