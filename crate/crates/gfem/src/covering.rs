//! Ball coverings with flat-top inner balls, and admissible subsets.
//!
//! Centres are a boundary layer on the inner offset curve at distance
//! `r = 2σh` plus an interior maximal set. The interior set is built
//! greedily: hexagonal lattice seeds are tried first, then a fine grid of
//! candidates in seeded random order; a candidate is accepted when no
//! accepted centre lies within the fill spacing.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GfemError, Result};
use crate::geometry::{offset_curve_points, Domain};
use crate::partition::PartitionOfUnity;
use crate::quadrature::{CellGrid, CellMask};
use crate::spatial::{DynamicGrid, PointGrid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub center: [f64; 2],
    /// Outer radius; the diameter `2·radius` equals `h`.
    pub radius: f64,
    pub flat_radius: f64,
    /// Centre lies on the boundary-layer curve.
    pub boundary_layer: bool,
}

impl Patch {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Tunable spacings, all as multiples of `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringOptions {
    /// Spacing of the hexagonal seed lattice.
    pub lattice_spacing: f64,
    /// Minimum distance between interior centres (the maximality radius).
    pub fill_spacing: f64,
    /// Target spacing of boundary-layer centres along the offset curve.
    pub boundary_spacing: f64,
    pub seed: u64,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        Self { lattice_spacing: 0.6, fill_spacing: 0.35, boundary_spacing: 0.5, seed: 20240607 }
    }
}

/// Result of the brute-force coverage sweep.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: usize,
    pub uncovered: usize,
    /// Uncovered sample closest to being covered; `None` when fully covered.
    pub witness: Option<[f64; 2]>,
    pub max_overlap: usize,
}

#[derive(Clone, Debug)]
pub struct Covering {
    domain: Arc<Domain>,
    pub patches: Vec<Patch>,
    pub h: f64,
    pub sigma: f64,
    /// Largest overlap of open patch balls, from the coverage grid and the circle arrangement.
    pub kappa: usize,
    /// Measured ratio `f(r)/r` of the boundary offset.
    pub mu: f64,
    pub coverage: CoverageReport,
    pub options: CoveringOptions,
    index: Arc<PointGrid>,
    /// Largest patch radius at construction.
    reach: f64,
}

/// Serializable snapshot of a covering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoveringRecord {
    pub h: f64,
    pub sigma: f64,
    pub kappa: usize,
    pub mu: f64,
    pub centers: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    pub flat_radii: Vec<f64>,
}

impl Covering {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> Arc<Domain> {
        self.domain.clone()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.patches.iter().map(|p| p.radius).fold(0.0, f64::max)
    }

    /// Calls `f` for every patch whose ball of radius `radius + extra` may contain `x`.
    pub(crate) fn for_nearby(&self, x: [f64; 2], extra: f64, f: impl FnMut(u32)) {
        self.index.for_candidates(x, self.reach + extra, f);
    }

    /// Patches whose open ball contains `x`.
    pub fn patches_containing(&self, x: [f64; 2]) -> Vec<u32> {
        let mut out = Vec::new();
        self.for_nearby(x, 0.0, |j| {
            let p = &self.patches[j as usize];
            if (x[0] - p.center[0]).hypot(x[1] - p.center[1]) < p.radius {
                out.push(j);
            }
        });
        out.sort_unstable();
        out
    }

    /// Background grid shared by volume rules and admissible masks.
    pub fn cell_grid(&self, cells_per_h: f64) -> CellGrid {
        let (lo, hi) = self.domain.bbox();
        let pad = self.h;
        CellGrid::covering([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad], self.h / cells_per_h)
    }

    pub fn record(&self) -> CoveringRecord {
        CoveringRecord {
            h: self.h,
            sigma: self.sigma,
            kappa: self.kappa,
            mu: self.mu,
            centers: self.patches.iter().map(|p| p.center).collect(),
            radii: self.patches.iter().map(|p| p.radius).collect(),
            flat_radii: self.patches.iter().map(|p| p.flat_radius).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.record())?)
    }

    /// Smallest value of `|j − j'| − ρ*_j − ρ*_j'` over distinct patches.
    pub fn flat_ball_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, p) in self.patches.iter().enumerate() {
            self.index.for_candidates(p.center, 4.0 * p.flat_radius + self.max_radius(), |j| {
                if j as usize != i {
                    let q = &self.patches[j as usize];
                    let d = (p.center[0] - q.center[0]).hypot(p.center[1] - q.center[1]);
                    gap = gap.min(d - p.flat_radius - q.flat_radius);
                }
            });
        }
        gap
    }
}

/// Number of patches whose open ball contains `x`.
pub fn overlap_count(c: &Covering, x: [f64; 2]) -> usize {
    c.patches_containing(x).len()
}

/// Builds a covering and fails if any sample point of the domain stays uncovered.
pub fn build_covering(d: &Domain, h: f64, sigma: f64) -> Result<Covering> {
    build_covering_with(d, h, sigma, &CoveringOptions::default())
}

pub fn build_covering_with(d: &Domain, h: f64, sigma: f64, opts: &CoveringOptions) -> Result<Covering> {
    let c = build_covering_unchecked(Arc::new(d.clone()), h, sigma, opts)?;
    if c.coverage.uncovered > 0 {
        return Err(GfemError::CoverageFailure {
            witness: c.coverage.witness.unwrap_or([f64::NAN; 2]),
            uncovered: c.coverage.uncovered,
        });
    }
    Ok(c)
}

/// Builds the covering and reports coverage without failing on gaps.
pub fn build_covering_unchecked(domain: Arc<Domain>, h: f64, sigma: f64, opts: &CoveringOptions) -> Result<Covering> {
    if !(sigma > 0.0 && sigma <= 0.125) {
        return Err(GfemError::InfeasibleParameters(format!("sigma must lie in (0, 1/8], got {sigma}")));
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(GfemError::InfeasibleParameters(format!("h must lie in (0, 1], got {h}")));
    }
    if !(opts.fill_spacing >= 2.0 * sigma && opts.fill_spacing < 0.5) {
        return Err(GfemError::InfeasibleParameters("fill spacing must lie in [2σ, 1/2) times h".into()));
    }
    let d = &*domain;
    let radius = 0.5 * h;
    let flat = 0.5 * sigma * h;
    let r = 2.0 * sigma * h;
    let boundary = offset_curve_points(d, r, opts.boundary_spacing * h)?;

    let (lo, hi) = d.bbox();
    let fill = opts.fill_spacing * h;
    let mut accepted = DynamicGrid::new([lo[0] - h, lo[1] - h], [hi[0] + h, hi[1] + h], fill);
    let mut centers: Vec<(bool, [f64; 2])> = Vec::new();
    for p in &boundary {
        accepted.insert(*p);
        centers.push((true, *p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let admissible = |p: [f64; 2]| d.inside(p) && d.distance(p) >= r;

    // hexagonal seeds with a seeded offset
    let a = opts.lattice_spacing * h;
    let off = {
        use rand::RngExt;
        [rng.random_range(0.0..a), rng.random_range(0.0..a)]
    };
    let row = a * 3f64.sqrt() / 2.0;
    let ny = ((hi[1] - lo[1] + 2.0 * a) / row).ceil() as i64;
    let nx = ((hi[0] - lo[0] + 2.0 * a) / a).ceil() as i64;
    for iy in 0..=ny {
        for ix in 0..=nx {
            let shift = if iy % 2 == 0 { 0.0 } else { 0.5 * a };
            let p = [lo[0] - a + off[0] + ix as f64 * a + shift, lo[1] - a + off[1] + iy as f64 * row];
            if admissible(p) && !accepted.any_within(p, fill) {
                accepted.insert(p);
                centers.push((false, p));
            }
        }
    }
    // fine candidates in random order make the set maximal
    let pitch = fill / 8.0;
    let mut cand = Vec::new();
    let mx = ((hi[0] - lo[0]) / pitch).ceil() as usize;
    let my = ((hi[1] - lo[1]) / pitch).ceil() as usize;
    for iy in 0..=my {
        for ix in 0..=mx {
            cand.push([lo[0] + ix as f64 * pitch, lo[1] + iy as f64 * pitch]);
        }
    }
    cand.shuffle(&mut rng);
    for p in cand {
        if !accepted.any_within(p, fill) && admissible(p) {
            accepted.insert(p);
            centers.push((false, p));
        }
    }

    let patches: Vec<Patch> =
        centers.iter().map(|(b, c)| Patch { center: *c, radius, flat_radius: flat, boundary_layer: *b }).collect();
    let index = Arc::new(PointGrid::new(&patches.iter().map(|p| p.center).collect::<Vec<_>>(), radius));
    let mut cov = Covering {
        domain: domain.clone(),
        patches,
        h,
        sigma,
        kappa: 0,
        mu: measure_mu(d, r),
        coverage: CoverageReport::default(),
        options: opts.clone(),
        index,
        reach: radius,
    };
    cov.coverage = coverage_sweep(&cov, h / 10.0);
    cov.kappa = cov.coverage.max_overlap.max(arrangement_depth(&cov));
    Ok(cov)
}

/// Largest number of open patch balls meeting near a crossing of two patch
/// circles inside the domain; with no three circles through one point this is
/// the exact overlap maximum over faces that have a vertex in the domain.
fn arrangement_depth(c: &Covering) -> usize {
    let d = c.domain();
    let mut best = 0;
    for (a, pa) in c.patches.iter().enumerate() {
        c.for_nearby(pa.center, pa.radius, |b| {
            if (b as usize) <= a {
                return;
            }
            let pb = &c.patches[b as usize];
            let (dx, dy) = (pb.center[0] - pa.center[0], pb.center[1] - pa.center[1]);
            let dist = dx.hypot(dy);
            if dist >= pa.radius + pb.radius || dist <= (pa.radius - pb.radius).abs() {
                return;
            }
            let along = (dist * dist + pa.radius * pa.radius - pb.radius * pb.radius) / (2.0 * dist);
            let across = (pa.radius * pa.radius - along * along).max(0.0).sqrt();
            let mid = [pa.center[0] + along * dx / dist, pa.center[1] + along * dy / dist];
            for sgn in [-1.0, 1.0] {
                let v = [mid[0] - sgn * across * dy / dist, mid[1] + sgn * across * dx / dist];
                if !d.inside(v) {
                    continue;
                }
                let mut n = 0;
                c.for_nearby(v, 0.0, |j| {
                    let p = &c.patches[j as usize];
                    if (v[0] - p.center[0]).hypot(v[1] - p.center[1]) < p.radius * (1.0 + 1e-9) {
                        n += 1;
                    }
                });
                best = best.max(n);
            }
        });
    }
    best
}

/// Ratio `sup_{y ∈ ∂Ω} dist(y, Γ_r) / r`, with `Γ_r` sampled densely.
fn measure_mu(d: &Domain, r: f64) -> f64 {
    let n = 512;
    let fine = offset_curve_points(d, r, r / 8.0).unwrap_or_default();
    if fine.is_empty() {
        return f64::NAN;
    }
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let y = d.boundary_point(d.length() * k as f64 / n as f64).point;
        let m = fine.iter().map(|q| (q[0] - y[0]).hypot(q[1] - y[1])).fold(f64::INFINITY, f64::min);
        worst = worst.max(m);
    }
    worst / r
}

/// Grid sweep of the domain: coverage, witness and maximal overlap.
pub fn coverage_sweep(c: &Covering, pitch: f64) -> CoverageReport {
    let d = c.domain();
    let (lo, hi) = d.bbox();
    // aligned with the origin so symmetric features are sampled
    let i0 = (lo[0] / pitch).floor() as i64;
    let i1 = (hi[0] / pitch).ceil() as i64;
    let j0 = (lo[1] / pitch).floor() as i64;
    let j1 = (hi[1] / pitch).ceil() as i64;
    let mut rep = CoverageReport::default();
    let mut best_gap = f64::INFINITY;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = [i as f64 * pitch, j as f64 * pitch];
            if !d.inside(p) {
                continue;
            }
            rep.samples += 1;
            let mut count = 0;
            let mut gap = f64::INFINITY;
            c.index.for_candidates(p, 2.0 * c.max_radius(), |k| {
                let q = &c.patches[k as usize];
                let dist = (p[0] - q.center[0]).hypot(p[1] - q.center[1]);
                if dist < q.radius {
                    count += 1;
                }
                gap = gap.min(dist - q.radius);
            });
            rep.max_overlap = rep.max_overlap.max(count);
            if count == 0 {
                rep.uncovered += 1;
                if gap < best_gap {
                    best_gap = gap;
                    rep.witness = Some(p);
                }
            }
        }
    }
    rep
}

/// Open subset on which the partition functions of `indices` sum to one,
/// represented on the covering's cell grid.
#[derive(Clone, Debug)]
pub struct AdmissibleSet {
    pub indices: Vec<u32>,
    pub mask: CellMask,
}

impl AdmissibleSet {
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.mask.contains(p)
    }

    /// Area of the union of mask cells.
    pub fn cell_area(&self) -> f64 {
        self.mask.count() as f64 * self.mask.grid.pitch.powi(2)
    }

    /// Approximate distance between the boundary of `self` and the boundary of `outer`,
    /// measured between cell centres; 0 when `self` is not contained in `outer`.
    pub fn gap_to(&self, outer: &AdmissibleSet, domain: &Domain) -> f64 {
        let g = self.mask.grid;
        if self.mask.inside.iter().zip(&outer.mask.inside).any(|(a, b)| *a && !*b) {
            return 0.0;
        }
        let edge = |m: &CellMask, c: usize| {
            let ix = c % g.nx;
            let iy = c / g.nx;
            ix == 0 || iy == 0 || ix + 1 == g.nx || iy + 1 == g.ny || !m.inside[c - 1] || !m.inside[c + 1] || !m.inside[c - g.nx] || !m.inside[c + g.nx]
        };
        let inner_edge: Vec<[f64; 2]> =
            (0..g.cells()).filter(|c| self.mask.inside[*c] && edge(&self.mask, *c)).map(|c| g.center(c)).collect();
        let outside: Vec<[f64; 2]> = (0..g.cells())
            .filter(|c| !outer.mask.inside[*c] && domain.inside(g.center(*c)))
            .filter(|c| {
                let ix = c % g.nx;
                let iy = c / g.nx;
                [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                    let jx = ix as i64 + dx;
                    let jy = iy as i64 + dy;
                    jx >= 0 && jy >= 0 && (jx as usize) < g.nx && (jy as usize) < g.ny && outer.mask.inside[jy as usize * g.nx + jx as usize]
                })
            })
            .map(|c| g.center(c))
            .collect();
        let mut gap = f64::INFINITY;
        for p in &inner_edge {
            for q in &outside {
                gap = gap.min((p[0] - q[0]).hypot(p[1] - q[1]));
            }
            gap = gap.min(domain.distance(*p));
        }
        gap
    }

    /// Smallest distance from a mask cell centre to the domain boundary.
    pub fn boundary_distance(&self, domain: &Domain) -> f64 {
        let g = self.mask.grid;
        (0..g.cells())
            .filter(|c| self.mask.inside[*c])
            .map(|c| domain.signed_distance(g.center(c)) - 0.5 * g.pitch * std::f64::consts::SQRT_2)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Cells per `h` of the admissible-set grid.
pub const MASK_CELLS_PER_H: f64 = 8.0;

/// Interior (one-cell erosion) of the cells where `Σ_{j∈J} φ_j = 1` to `1e-10`.
pub fn admissible_from_indices(c: &Covering, pu: &PartitionOfUnity, indices: &[u32]) -> AdmissibleSet {
    let grid = c.cell_grid(MASK_CELLS_PER_H);
    let mut member = vec![false; c.len()];
    for &j in indices {
        member[j as usize] = true;
    }
    let mut indices: Vec<u32> = indices.to_vec();
    indices.sort_unstable();
    indices.dedup();
    let mut candidate = vec![false; grid.cells()];
    for &j in &indices {
        let p = &c.patches[j as usize];
        if let Some((x0, x1, y0, y1)) = grid.cell_range(p.center, p.radius) {
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    candidate[iy * grid.nx + ix] = true;
                }
            }
        }
    }
    let d = c.domain();
    let mut touches = vec![false; grid.cells()];
    let mut good = vec![false; grid.cells()];
    let mut buf = Vec::new();
    for cell in 0..grid.cells() {
        let lo = grid.lower_corner(cell);
        let mut any_inside = false;
        let mut ok = true;
        for a in 0..3 {
            for b in 0..3 {
                let p = [lo[0] + 0.5 * a as f64 * grid.pitch, lo[1] + 0.5 * b as f64 * grid.pitch];
                if !d.inside(p) {
                    continue;
                }
                any_inside = true;
                if !candidate[cell] {
                    ok = false;
                    break;
                }
                pu.eval_into(p, crate::quadrature::NodeMode::Exact, 0, &mut buf);
                let s: f64 = buf.iter().filter(|v| member[v.index as usize]).map(|v| v.value).sum();
                if (s - 1.0).abs() > 1e-10 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        touches[cell] = any_inside;
        good[cell] = any_inside && ok;
    }
    // erosion against cells meeting the domain only
    let mut inside = vec![false; grid.cells()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let c0 = iy * grid.nx + ix;
            if !good[c0] {
                continue;
            }
            let mut keep = true;
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let jx = ix as i64 + dx;
                let jy = iy as i64 + dy;
                if jx < 0 || jy < 0 || jx as usize >= grid.nx || jy as usize >= grid.ny {
                    continue;
                }
                let n = jy as usize * grid.nx + jx as usize;
                if touches[n] && !good[n] {
                    keep = false;
                }
            }
            inside[c0] = keep;
        }
    }
    AdmissibleSet { indices, mask: CellMask { grid, inside } }
}

/// Region used to seed admissible sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskRegion {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Patches whose flat ball lies inside the disk.
pub fn flat_balls_inside(c: &Covering, region: DiskRegion) -> Vec<u32> {
    c.patches
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.center[0] - region.center[0]).hypot(p.center[1] - region.center[1]) + p.flat_radius <= region.radius)
        .map(|(j, _)| j as u32)
        .collect()
}

/// Admissible set generated by the patches whose flat balls lie in the disk.
pub fn admissible_hull(c: &Covering, pu: &PartitionOfUnity, region: DiskRegion) -> AdmissibleSet {
    admissible_from_indices(c, pu, &flat_balls_inside(c, region))
}

/// Safety factor in the precondition `Ĉ h < θ`.
pub const LADDER_CONSTANT: f64 = 4.0;

/// Nested admissible sets `A = B₀ ⋐ B₁ ⋐ … ⋐ B_k`, followed by the whole-domain set.
pub fn admissible_ladder(c: &Covering, pu: &PartitionOfUnity, a: &AdmissibleSet, k: usize) -> Result<Vec<AdmissibleSet>> {
    let d = c.domain();
    let all: Vec<u32> = (0..c.len() as u32).collect();
    let whole = admissible_from_indices(c, pu, &all);
    if k == 0 {
        return Ok(vec![a.clone(), whole]);
    }
    if a.is_empty() {
        return Err(GfemError::Precondition("ladder base set is empty".into()));
    }
    let theta = a.boundary_distance(d);
    if !(LADDER_CONSTANT * c.h < theta) {
        return Err(GfemError::InfeasibleParameters(format!(
            "need {LADDER_CONSTANT}·h = {:.4} < θ = {theta:.4}",
            LADDER_CONSTANT * c.h
        )));
    }
    let step = theta / (4.0 * k as f64);
    let g = a.mask.grid;
    let mut out = vec![a.clone()];
    for _ in 0..k {
        let prev = out.last().unwrap();
        // patches within `step` of the previous set
        let near: Vec<u32> = (0..c.len() as u32)
            .filter(|&j| {
                let p = &c.patches[j as usize];
                let reach = p.radius + step;
                let Some((x0, x1, y0, y1)) = g.cell_range(p.center, reach) else { return false };
                for iy in y0..=y1 {
                    for ix in x0..=x1 {
                        let cell = iy * g.nx + ix;
                        if prev.mask.inside[cell] {
                            let lo = g.lower_corner(cell);
                            let qx = p.center[0].clamp(lo[0], lo[0] + g.pitch);
                            let qy = p.center[1].clamp(lo[1], lo[1] + g.pitch);
                            if (qx - p.center[0]).hypot(qy - p.center[1]) <= reach {
                                return true;
                            }
                        }
                    }
                }
                false
            })
            .collect();
        let mut in_u = vec![false; c.len()];
        for &j in &near {
            in_u[j as usize] = true;
        }
        // every patch meeting the union of those balls
        let mut next: Vec<u32> = Vec::new();
        for (j, p) in c.patches.iter().enumerate() {
            let mut hit = in_u[j];
            if !hit {
                c.for_nearby(p.center, p.radius, |u| {
                    let q = &c.patches[u as usize];
                    if in_u[u as usize] && (p.center[0] - q.center[0]).hypot(p.center[1] - q.center[1]) < p.radius + q.radius {
                        hit = true;
                    }
                });
            }
            if hit {
                next.push(j as u32);
            }
        }
        out.push(admissible_from_indices(c, pu, &next));
    }
    let last = out.last().unwrap();
    if last.boundary_distance(d) <= 0.0 {
        return Err(GfemError::InfeasibleParameters("ladder reaches the boundary; reduce h or k".into()));
    }
    out.push(whole);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cusp_domain, make_disk};

    #[test]
    fn disk_covering_is_complete_and_disjoint() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = build_covering(&d, 0.2, 0.1).unwrap();
        assert_eq!(c.coverage.uncovered, 0);
        assert!(c.coverage.samples > 3000);
        assert!(c.kappa <= 30);
        assert!(c.flat_ball_gap() >= 0.0);
        for p in &c.patches {
            assert!(d.distance(p.center) >= p.flat_radius);
            assert!((p.diameter() - 0.2).abs() < 1e-15);
        }
        assert!((c.mu - 1.0).abs() < 0.05, "mu = {}", c.mu);
    }

    #[test]
    fn brute_force_grid_coverage() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = build_covering(&d, 0.2, 0.1).unwrap();
        let mut inside = 0;
        let mut max_count = 0;
        for i in 0..100 {
            for j in 0..100 {
                let p = [-1.0 + 2.0 * (i as f64 + 0.5) / 100.0, -1.0 + 2.0 * (j as f64 + 0.5) / 100.0];
                if !d.inside(p) {
                    continue;
                }
                inside += 1;
                let n = c.patches.iter().filter(|q| (p[0] - q.center[0]).hypot(p[1] - q.center[1]) < q.radius).count();
                assert!(n >= 1, "uncovered {p:?}");
                max_count = max_count.max(n);
            }
        }
        assert!(inside > 7000);
        assert!(max_count <= c.kappa);
        assert!(max_count <= 30);
    }

    #[test]
    fn overlap_count_basics() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = build_covering(&d, 0.2, 0.1).unwrap();
        assert_eq!(overlap_count(&c, [5.0, 5.0]), 0);
        assert!(overlap_count(&c, c.patches[3].center) >= 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let a = build_covering(&d, 0.14, 0.1).unwrap();
        let b = build_covering(&d, 0.14, 0.1).unwrap();
        assert_eq!(a.patches, b.patches);
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        assert!(matches!(build_covering(&d, 2.0, 0.1), Err(GfemError::InfeasibleParameters(_))));
        assert!(matches!(build_covering(&d, 0.1, 0.2), Err(GfemError::InfeasibleParameters(_))));
    }

    #[test]
    fn cusp_has_no_covering() {
        let d = make_cusp_domain();
        for h in [0.05, 0.035] {
            match build_covering(&d, h, 0.1) {
                Err(GfemError::CoverageFailure { witness, .. }) => assert!(witness[0].hypot(witness[1]) < 0.2),
                other => panic!("expected coverage failure, got {other:?}"),
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = build_covering(&d, 0.2, 0.1).unwrap();
        let rec: CoveringRecord = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(rec.centers.len(), c.len());
        assert_eq!(rec.kappa, c.kappa);
    }

    #[test]
    fn hull_gap_requires_nesting() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = Arc::new(build_covering(&d, 0.2, 0.1).unwrap());
        let pu = crate::partition::build_flat_top_pu(c.clone()).unwrap();
        let small = admissible_hull(&c, &pu, DiskRegion { center: [0.0, 0.0], radius: 0.5 });
        let large = admissible_hull(&c, &pu, DiskRegion { center: [0.0, 0.0], radius: 0.8 });
        assert!(small.gap_to(&large, &d) > 0.0);
        assert_eq!(large.gap_to(&small, &d), 0.0);
    }
}
