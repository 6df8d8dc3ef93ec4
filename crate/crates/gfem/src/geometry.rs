//! Planar domains bounded by piecewise-smooth closed curves.
//!
//! Boundaries are oriented counter-clockwise and parametrized by arc length
//! `s ∈ [0, L)`. Smooth closed boundaries (disk, polar star) consist of one
//! piece; the cusp domain has three pieces joined at corners.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{GfemError, Result};

/// Description of a domain, as found in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    Disk { radius: f64, center: [f64; 2] },
    /// `r(θ) = c₀ + Σ_k c_k cos(kθ)` about the origin.
    Star { coeffs: Vec<f64> },
    Cusp,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Disk { radius, center } => make_disk(*radius, *center),
            DomainSpec::Star { coeffs } => make_star(coeffs),
            DomainSpec::Cusp => Ok(make_cusp_domain()),
        }
    }
}

#[derive(Clone, Debug)]
enum Curve {
    Arc { center: [f64; 2], radius: f64 },
    Star { coeffs: Vec<f64> },
    /// `(x, sign·x²)`.
    Parabola { sign: f64 },
}

impl Curve {
    /// Position and first two parameter derivatives.
    fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        match self {
            Curve::Arc { center, radius } => {
                let (s, c) = t.sin_cos();
                (
                    [center[0] + radius * c, center[1] + radius * s],
                    [-radius * s, radius * c],
                    [-radius * c, -radius * s],
                )
            }
            Curve::Star { coeffs } => {
                let (r, dr, ddr) = star_radius(coeffs, t);
                let (s, c) = t.sin_cos();
                (
                    [r * c, r * s],
                    [dr * c - r * s, dr * s + r * c],
                    [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s],
                )
            }
            Curve::Parabola { sign } => ([t, sign * t * t], [1.0, 2.0 * sign * t], [0.0, 2.0 * sign]),
        }
    }
}

fn star_radius(coeffs: &[f64], t: f64) -> (f64, f64, f64) {
    let mut r = coeffs[0];
    let mut dr = 0.0;
    let mut ddr = 0.0;
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        let kf = k as f64;
        let (s, co) = (kf * t).sin_cos();
        r += c * co;
        dr -= c * kf * s;
        ddr -= c * kf * kf * co;
    }
    (r, dr, ddr)
}

const PANELS: usize = 64;

#[derive(Clone, Debug)]
struct Piece {
    curve: Curve,
    t0: f64,
    t1: f64,
    offset: f64,
    length: f64,
    /// Cumulative arc length at uniform parameter breakpoints.
    table: Vec<f64>,
}

impl Piece {
    fn new(curve: Curve, t0: f64, t1: f64, offset: f64, gauss: &[(f64, f64)]) -> Self {
        let mut table = vec![0.0; PANELS + 1];
        let dt = (t1 - t0) / PANELS as f64;
        for k in 0..PANELS {
            let a = t0 + k as f64 * dt;
            table[k + 1] = table[k] + speed_integral(&curve, a, a + dt, gauss) * dt.signum();
        }
        let length = table[PANELS];
        Self { curve, t0, t1, offset, length, table }
    }

    /// Parameter at local arc length `sl`.
    fn param_at(&self, sl: f64, gauss: &[(f64, f64)]) -> f64 {
        if let Curve::Arc { radius, .. } = self.curve {
            return self.t0 + sl / radius * (self.t1 - self.t0).signum();
        }
        let sl = sl.clamp(0.0, self.length);
        let k = match self.table.binary_search_by(|v| v.partial_cmp(&sl).unwrap()) {
            Ok(i) => i.min(PANELS - 1),
            Err(i) => (i - 1).min(PANELS - 1),
        };
        let dt = (self.t1 - self.t0) / PANELS as f64;
        let a = self.t0 + k as f64 * dt;
        let target = sl - self.table[k];
        let seg = self.table[k + 1] - self.table[k];
        let mut t = a + dt * if seg > 0.0 { target / seg } else { 0.0 };
        for _ in 0..30 {
            let f = speed_integral(&self.curve, a, t, gauss) * dt.signum() - target;
            let (_, d1, _) = self.curve.eval(t);
            let sp = d1[0].hypot(d1[1]) * dt.signum();
            let step = f / sp;
            t -= step;
            if step.abs() < 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        t
    }
}

fn speed_integral(curve: &Curve, a: f64, b: f64, gauss: &[(f64, f64)]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in gauss {
        let (_, d1, _) = curve.eval(mid + half * x);
        acc += w * d1[0].hypot(d1[1]);
    }
    acc * half
}

fn gauss_table(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.try_into().expect("positive order"));
    rule.iter().map(|(x, w)| (*x, *w)).collect()
}

/// Kind of domain, kept for queries with closed forms.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Disk { center: [f64; 2], radius: f64 },
    Star { coeffs: Vec<f64> },
    Cusp,
}

/// A boundary sample: position, unit tangent `x'(s)`, outward unit normal and `x''(s)`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub s: f64,
    pub point: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub second: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Domain {
    kind: DomainKind,
    pieces: Vec<Piece>,
    length: f64,
    corners: Vec<f64>,
    bbox: ([f64; 2], [f64; 2]),
    samples: Vec<(usize, f64, [f64; 2])>,
    gauss: Vec<(f64, f64)>,
}

pub fn make_disk(radius: f64, center: [f64; 2]) -> Result<Domain> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GfemError::InvalidDomain(format!("disk radius must be positive, got {radius}")));
    }
    let curve = Curve::Arc { center, radius };
    let kind = DomainKind::Disk { center, radius };
    let bbox = ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]);
    Ok(Domain::assemble(kind, vec![(curve, 0.0, 2.0 * PI)], bbox))
}

/// Polar star domain `r(θ) = c₀ + Σ c_k cos kθ`; requires `r > 0` everywhere.
pub fn make_star(coeffs: &[f64]) -> Result<Domain> {
    if coeffs.is_empty() {
        return Err(GfemError::InvalidDomain("star domain needs at least c0".into()));
    }
    let mut rmax: f64 = 0.0;
    for i in 0..4096 {
        let (r, _, _) = star_radius(coeffs, 2.0 * PI * i as f64 / 4096.0);
        if !(r > 0.0) {
            return Err(GfemError::InvalidDomain("star radius function must stay positive".into()));
        }
        rmax = rmax.max(r);
    }
    let kind = DomainKind::Star { coeffs: coeffs.to_vec() };
    let bbox = ([-rmax, -rmax], [rmax, rmax]);
    Ok(Domain::assemble(kind, vec![(Curve::Star { coeffs: coeffs.to_vec() }, 0.0, 2.0 * PI)], bbox))
}

/// `{(x, y): −x² ≤ y ≤ x², x² + y² ≤ 1, x ≥ 0}`; boundary starts at the tip.
pub fn make_cusp_domain() -> Domain {
    let xc = ((5.0_f64.sqrt() - 1.0) / 2.0).sqrt();
    let yc = xc * xc;
    let alpha = yc.atan2(xc);
    let pieces = vec![
        (Curve::Parabola { sign: -1.0 }, 0.0, xc),
        (Curve::Arc { center: [0.0, 0.0], radius: 1.0 }, -alpha, alpha),
        (Curve::Parabola { sign: 1.0 }, xc, 0.0),
    ];
    Domain::assemble(DomainKind::Cusp, pieces, ([0.0, -yc], [1.0, yc]))
}

impl Domain {
    fn assemble(kind: DomainKind, curves: Vec<(Curve, f64, f64)>, bbox: ([f64; 2], [f64; 2])) -> Self {
        let gauss = gauss_table(16);
        let mut pieces = Vec::new();
        let mut offset = 0.0;
        for (c, t0, t1) in curves {
            let p = Piece::new(c, t0, t1, offset, &gauss);
            offset += p.length;
            pieces.push(p);
        }
        let corners = if pieces.len() > 1 { pieces.iter().map(|p| p.offset).collect() } else { vec![] };
        let mut dom = Self { kind, pieces, length: offset, corners, bbox, samples: vec![], gauss };
        let mut samples = Vec::new();
        for (pi, p) in dom.pieces.iter().enumerate() {
            let n = 2048;
            for k in 0..=n {
                let t = p.t0 + (p.t1 - p.t0) * k as f64 / n as f64;
                samples.push((pi, t, p.curve.eval(t).0));
            }
        }
        dom.samples = samples;
        dom
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// True for the disk of radius 1 centred at the origin.
    pub fn is_unit_circle(&self) -> bool {
        matches!(self.kind, DomainKind::Disk { center, radius } if center == [0.0, 0.0] && (radius - 1.0).abs() < 1e-14)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        self.bbox
    }

    /// Arc positions of boundary corners (empty for smooth boundaries).
    pub fn corners(&self) -> &[f64] {
        &self.corners
    }

    /// Continuous level function, positive exactly in the interior.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        match &self.kind {
            DomainKind::Disk { center, radius } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
            DomainKind::Star { coeffs } => {
                let (r, _, _) = star_radius(coeffs, p[1].atan2(p[0]));
                r - p[0].hypot(p[1])
            }
            DomainKind::Cusp => (p[0] * p[0] - p[1].abs()).min(1.0 - p[0].hypot(p[1])).min(p[0]),
        }
    }

    pub fn inside(&self, p: [f64; 2]) -> bool {
        match self.kind {
            DomainKind::Cusp => p[0] >= 0.0 && p[1].abs() <= p[0] * p[0] && p[0] * p[0] + p[1] * p[1] <= 1.0,
            _ => self.level(p) > 0.0,
        }
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.length);
        let mut idx = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            if s < p.offset + p.length {
                idx = i;
                break;
            }
        }
        let p = &self.pieces[idx];
        (idx, p.param_at(s - p.offset, &self.gauss))
    }

    fn point_from_param(&self, piece: usize, t: f64) -> BoundaryPoint {
        let p = &self.pieces[piece];
        let (x, d1, d2) = p.curve.eval(t);
        let dir = (p.t1 - p.t0).signum();
        let sp = d1[0].hypot(d1[1]);
        let tan = [dir * d1[0] / sp, dir * d1[1] / sp];
        // x'' = (d2 − (T·d2) T) / |d1|² for unit-speed reparametrization
        let td2 = tan[0] * d2[0] + tan[1] * d2[1];
        let second = [(d2[0] - td2 * tan[0]) / (sp * sp), (d2[1] - td2 * tan[1]) / (sp * sp)];
        let s = p.offset + self.local_arclength(piece, t);
        BoundaryPoint { s, point: x, tangent: tan, normal: [tan[1], -tan[0]], second }
    }

    fn local_arclength(&self, piece: usize, t: f64) -> f64 {
        let p = &self.pieces[piece];
        if let Curve::Arc { radius, .. } = p.curve {
            return (t - p.t0).abs() * radius;
        }
        let dt = (p.t1 - p.t0) / PANELS as f64;
        let k = (((t - p.t0) / dt).floor().max(0.0) as usize).min(PANELS - 1);
        let a = p.t0 + k as f64 * dt;
        p.table[k] + speed_integral(&p.curve, a, t, &self.gauss) * dt.signum()
    }

    /// Boundary point at arc length `s` (periodic).
    pub fn boundary_point(&self, s: f64) -> BoundaryPoint {
        let (piece, t) = self.locate(s);
        let mut b = self.point_from_param(piece, t);
        b.s = s.rem_euclid(self.length);
        b
    }

    /// Closest boundary point to `p`.
    pub fn closest_point(&self, p: [f64; 2]) -> BoundaryPoint {
        if let DomainKind::Disk { center, radius } = self.kind {
            let ang = (p[1] - center[1]).atan2(p[0] - center[0]).rem_euclid(2.0 * PI);
            return self.boundary_point(ang * radius);
        }
        let mut best = (f64::INFINITY, 0usize);
        for (i, (_, _, q)) in self.samples.iter().enumerate() {
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        let mut candidates = vec![best.1];
        // neighbouring samples may belong to the adjacent piece at corners
        if best.1 > 0 {
            candidates.push(best.1 - 1);
        }
        if best.1 + 1 < self.samples.len() {
            candidates.push(best.1 + 1);
        }
        let mut out: Option<(f64, usize, f64)> = None;
        for c in candidates {
            let (piece, t0, _) = self.samples[c];
            let pc = &self.pieces[piece];
            let (lo, hi) = if pc.t0 < pc.t1 { (pc.t0, pc.t1) } else { (pc.t1, pc.t0) };
            let mut t = t0;
            for _ in 0..50 {
                let (x, d1, d2) = pc.curve.eval(t);
                let r = [x[0] - p[0], x[1] - p[1]];
                let g = r[0] * d1[0] + r[1] * d1[1];
                let hss = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
                let step = if hss > 0.0 { g / hss } else { g / (d1[0] * d1[0] + d1[1] * d1[1]) };
                let tn = (t - step).clamp(lo, hi);
                let done = (tn - t).abs() < 1e-15 * (1.0 + t.abs());
                t = tn;
                if done {
                    break;
                }
            }
            let (x, _, _) = pc.curve.eval(t);
            let d = (x[0] - p[0]).hypot(x[1] - p[1]);
            if out.map_or(true, |o| d < o.0) {
                out = Some((d, piece, t));
            }
        }
        let (_, piece, t) = out.expect("nonempty boundary");
        self.point_from_param(piece, t)
    }

    /// Unsigned distance to the boundary.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        if let DomainKind::Disk { center, radius } = self.kind {
            return (radius - (p[0] - center[0]).hypot(p[1] - center[1])).abs();
        }
        let b = self.closest_point(p);
        (b.point[0] - p[0]).hypot(b.point[1] - p[1])
    }

    /// Distance to the boundary, positive inside.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        let d = self.distance(p);
        if self.inside(p) {
            d
        } else {
            -d
        }
    }

    /// Lower estimate of the reach from the curvature of the smooth pieces.
    pub fn reach_estimate(&self) -> f64 {
        let mut kmax: f64 = 0.0;
        for (pi, p) in self.pieces.iter().enumerate() {
            for k in 0..=512 {
                let t = p.t0 + (p.t1 - p.t0) * k as f64 / 512.0;
                let b = self.point_from_param(pi, t);
                kmax = kmax.max(b.second[0].hypot(b.second[1]));
            }
        }
        if kmax > 0.0 {
            1.0 / kmax
        } else {
            f64::INFINITY
        }
    }

    /// Inward bisector direction at a corner.
    fn corner_bisector(&self, s: f64) -> [f64; 2] {
        let idx = self.pieces.iter().position(|p| (p.offset - s).abs() < 1e-12).unwrap_or(0);
        let prev = (idx + self.pieces.len() - 1) % self.pieces.len();
        let out = self.point_from_param(idx, self.pieces[idx].t0).tangent;
        let inc = self.point_from_param(prev, self.pieces[prev].t1).tangent;
        let b = [out[0] - inc[0], out[1] - inc[1]];
        let n = b[0].hypot(b[1]);
        if n < 1e-12 {
            let nn = self.point_from_param(idx, self.pieces[idx].t0).normal;
            [-nn[0], -nn[1]]
        } else {
            [b[0] / n, b[1] / n]
        }
    }

    fn corner_point(&self, s: f64) -> [f64; 2] {
        let idx = self.pieces.iter().position(|p| (p.offset - s).abs() < 1e-12).unwrap_or(0);
        self.point_from_param(idx, self.pieces[idx].t0).point
    }
}

/// Points on the inner offset curve at distance `r` from the boundary.
///
/// Smooth runs of the offset curve are divided uniformly with chord spacing at
/// most `spacing`; offset vertices at corners are included.
pub fn offset_curve_points(d: &Domain, r: f64, spacing: f64) -> Result<Vec<[f64; 2]>> {
    if !(r > 0.0) || !(spacing > 0.0) {
        return Err(GfemError::InfeasibleParameters("offset distance and spacing must be positive".into()));
    }
    let reach = d.reach_estimate();
    if r >= 0.5 * reach {
        return Err(GfemError::InfeasibleParameters(format!("offset {r} too large for boundary reach {reach:.4}")));
    }
    let step = (spacing / 32.0).min(r / 4.0);
    let n = ((d.length() / step).ceil() as usize).max(64);
    let mut raw: Vec<Option<[f64; 2]>> = Vec::with_capacity(n);
    for k in 0..n {
        let b = d.boundary_point(d.length() * k as f64 / n as f64);
        let q = [b.point[0] - r * b.normal[0], b.point[1] - r * b.normal[1]];
        let ok = d.inside(q) && d.distance(q) >= r * (1.0 - 1e-9);
        raw.push(if ok { Some(q) } else { None });
    }
    // split into runs of consecutive valid samples, wrapping around for closed curves
    let mut runs: Vec<Vec<[f64; 2]>> = Vec::new();
    let all_valid = raw.iter().all(|q| q.is_some());
    if all_valid && d.corners().is_empty() {
        let mut pts: Vec<[f64; 2]> = raw.iter().map(|q| q.unwrap()).collect();
        pts.push(pts[0]);
        return Ok(uniform_on_polyline(&pts, spacing, true).into_iter().map(|q| reproject(d, q, r)).collect());
    }
    let start = raw.iter().position(|q| q.is_none()).unwrap_or(0);
    let mut cur = Vec::new();
    for i in 0..n {
        match raw[(start + i) % n] {
            Some(q) => cur.push(q),
            None => {
                if cur.len() > 1 {
                    runs.push(std::mem::take(&mut cur));
                } else {
                    cur.clear();
                }
            }
        }
    }
    if cur.len() > 1 {
        runs.push(cur);
    }
    let mut vertices = Vec::new();
    for &c in d.corners() {
        let o = d.corner_point(c);
        let b = d.corner_bisector(c);
        let at = |lam: f64| [o[0] + lam * b[0], o[1] + lam * b[1]];
        let mut hi = r;
        let mut found = false;
        for _ in 0..60 {
            let q = at(hi);
            if !d.inside(q) {
                break;
            }
            if d.distance(q) >= r {
                found = true;
                break;
            }
            hi *= 1.5;
        }
        if !found {
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d.distance(at(mid)) < r {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        vertices.push(at(hi));
    }
    let mut out = vertices.clone();
    for run in runs {
        for q in uniform_on_polyline(&run, spacing, false) {
            let q = reproject(d, q, r);
            if vertices.iter().all(|v| (v[0] - q[0]).hypot(v[1] - q[1]) >= 0.5 * spacing) {
                out.push(q);
            }
        }
    }
    Ok(out)
}

/// Moves a point near the offset curve onto it along the boundary normal.
fn reproject(d: &Domain, q: [f64; 2], r: f64) -> [f64; 2] {
    let b = d.closest_point(q);
    [b.point[0] - r * b.normal[0], b.point[1] - r * b.normal[1]]
}

fn uniform_on_polyline(pts: &[[f64; 2]], spacing: f64, closed: bool) -> Vec<[f64; 2]> {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
    }
    let total = *cum.last().unwrap();
    let pieces = ((total / spacing).ceil() as usize).max(1);
    let count = if closed { pieces } else { pieces + 1 };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let target = total * k as f64 / pieces as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let a = if len > 0.0 { ((target - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push([pts[seg][0] + a * (pts[seg + 1][0] - pts[seg][0]), pts[seg][1] + a * (pts[seg + 1][1] - pts[seg][1])]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disk_basics() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        assert!(d.inside([0.0, 0.0]));
        assert!(!d.inside([2.0, 0.0]));
        let b = d.boundary_point(0.0);
        assert!((b.point[0] - 1.0).abs() < 1e-15 && b.point[1].abs() < 1e-15);
        assert!((b.normal[0] - 1.0).abs() < 1e-15 && b.normal[1].abs() < 1e-15);
        assert!((d.length() - 2.0 * PI).abs() < 1e-12);
        assert!(make_disk(0.0, [0.0, 0.0]).is_err());
        assert!(make_disk(-1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn disk_length_scales_with_radius() {
        let d = make_disk(2.5, [0.3, -1.0]).unwrap();
        assert!((d.length() - 5.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn cusp_membership() {
        let d = make_cusp_domain();
        assert!(d.inside([0.5, 0.0]));
        assert!(!d.inside([0.5, 0.5]));
        assert!(!d.inside([-0.1, 0.0]));
        assert_eq!(d.corners().len(), 3);
        let tip = d.boundary_point(0.0).point;
        assert!(tip[0].abs() < 1e-14 && tip[1].abs() < 1e-14);
        // symmetric about the axis: the two parabolic pieces have equal length
        let c = d.corners();
        assert!(((c[1] - c[0]) - (d.length() - c[2])).abs() < 1e-12);
        let s = 0.3;
        let a = d.boundary_point(s).point;
        let b = d.boundary_point(d.length() - s).point;
        assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] + b[1]).abs() < 1e-10);
    }

    #[test]
    fn star_arclength_matches_direct_integral() {
        let d = make_star(&[1.0, 0.0, 0.0, 0.15]).unwrap();
        let g = gauss_table(40);
        let mut direct = 0.0;
        for k in 0..200 {
            let a = 2.0 * PI * k as f64 / 200.0;
            direct += speed_integral(&Curve::Star { coeffs: vec![1.0, 0.0, 0.0, 0.15] }, a, a + 2.0 * PI / 200.0, &g);
        }
        assert!((d.length() - direct).abs() < 1e-12);
        for s in [0.1, 1.7, 3.3, 5.9] {
            let b0 = d.boundary_point(s);
            let b1 = d.boundary_point(s + 1e-6);
            let chord = (b1.point[0] - b0.point[0]).hypot(b1.point[1] - b0.point[1]);
            assert!((chord - 1e-6).abs() < 1e-11, "unit speed at s = {s}");
        }
    }

    #[test]
    fn normal_matches_rotated_finite_difference() {
        for d in [make_disk(1.0, [0.0, 0.0]).unwrap(), make_star(&[1.0, 0.1, 0.0, 0.12]).unwrap()] {
            for k in 0..50 {
                let s = d.length() * (k as f64 + 0.37) / 50.0;
                let e = 1e-6;
                let p0 = d.boundary_point(s - e).point;
                let p1 = d.boundary_point(s + e).point;
                let t = [(p1[0] - p0[0]) / (2.0 * e), (p1[1] - p0[1]) / (2.0 * e)];
                let n = d.boundary_point(s).normal;
                assert!((n[0] - t[1]).abs() < 1e-6 && (n[1] + t[0]).abs() < 1e-6);
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
                let tg = d.boundary_point(s).tangent;
                assert!((tg[0] * n[0] + tg[1] * n[1]).abs() < 1e-14);
                let q = d.boundary_point(s).point;
                assert!(d.inside([q[0] - 1e-6 * n[0], q[1] - 1e-6 * n[1]]));
            }
        }
    }

    #[test]
    fn inside_agrees_with_signed_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [make_disk(1.0, [0.0, 0.0]).unwrap(), make_star(&[1.0, 0.0, 0.2]).unwrap()] {
            for _ in 0..10_000 {
                let p = [rng.random_range(-1.4..1.4), rng.random_range(-1.4..1.4)];
                let sd = d.signed_distance(p);
                if sd.abs() > 1e-12 {
                    assert_eq!(d.inside(p), sd > 0.0, "at {p:?}");
                }
            }
        }
    }

    #[test]
    fn star_distance_is_a_minimum() {
        let d = make_star(&[1.0, 0.0, 0.2]).unwrap();
        let p = [0.3, 0.4];
        let b = d.closest_point(p);
        let dist = d.distance(p);
        for k in 0..4000 {
            let q = d.boundary_point(d.length() * k as f64 / 4000.0).point;
            assert!((q[0] - p[0]).hypot(q[1] - p[1]) >= dist - 1e-10);
        }
        let r = [p[0] - b.point[0], p[1] - b.point[1]];
        assert!((r[0] * b.tangent[0] + r[1] * b.tangent[1]).abs() < 1e-10);
    }

    #[test]
    fn disk_offset_points() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let sp = 0.05;
        let pts = offset_curve_points(&d, 0.1, sp).unwrap();
        let expected = 2.0 * PI * 0.9 / sp;
        assert!((pts.len() as f64 - expected).abs() <= 1.0 + 1e-9, "{} vs {expected}", pts.len());
        for p in &pts {
            assert!((d.distance(*p) - 0.1).abs() < 1e-8);
        }
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            let gap = (a[0] - b[0]).hypot(a[1] - b[1]);
            assert!(gap >= sp * 0.5 && gap <= sp * (1.0 + 1e-9));
        }
        assert!(offset_curve_points(&d, 0.6, sp).is_err());
    }

    #[test]
    fn cusp_offset_includes_vertices() {
        let d = make_cusp_domain();
        let pts = offset_curve_points(&d, 0.02, 0.02).unwrap();
        for p in &pts {
            assert!(d.inside(*p));
            assert!((d.distance(*p) - 0.02).abs() < 1e-8);
        }
        // the tip vertex sits on the axis
        assert!(pts.iter().any(|p| p[1].abs() < 1e-12 && p[0] < 0.3));
    }
}
