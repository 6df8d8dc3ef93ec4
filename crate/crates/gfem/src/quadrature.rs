//! Volume and boundary quadrature.
//!
//! Volume rules live on a uniform background grid of square cells. Cells
//! cut by a curved boundary are split into a fan of straight triangles plus
//! one curvilinear triangle whose outer edge follows the true boundary, all
//! mapped from the unit square. Weights stay positive.
//!
//! [`PuRule`] adds signed polar corrections around the flat-top balls of a
//! partition of unity; see its documentation.

use gauss_quad::legendre::GaussLegendre;

use crate::geometry::Domain;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.max(1).try_into().expect("positive order"));
    let mut v: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    v
}

#[derive(Clone, Debug, Default)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: [f64; 2], w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }

    pub fn extend(&mut self, other: &QuadRule) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
    }
}

/// A closed curve bounding a region `{level > 0}`, parametrized by arc length.
pub trait CurvedBoundary {
    fn level(&self, p: [f64; 2]) -> f64;
    /// Bound on |∇level| used to classify cells from their centre value.
    fn level_lipschitz(&self) -> f64;
    fn length(&self) -> f64;
    /// Arc position of the closest boundary point.
    fn project(&self, p: [f64; 2]) -> f64;
    /// Point and unit tangent at arc position `s`.
    fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]);
    fn corners(&self) -> &[f64] {
        &[]
    }
}

impl CurvedBoundary for Domain {
    fn level(&self, p: [f64; 2]) -> f64 {
        Domain::level(self, p)
    }
    fn level_lipschitz(&self) -> f64 {
        match self.kind() {
            crate::geometry::DomainKind::Disk { .. } => 1.0,
            crate::geometry::DomainKind::Star { coeffs } => {
                let mut g: f64 = 1.0;
                for i in 0..1024 {
                    let t = std::f64::consts::TAU * i as f64 / 1024.0;
                    let (mut r, mut dr) = (coeffs[0], 0.0);
                    for (k, c) in coeffs.iter().enumerate().skip(1) {
                        r += c * (k as f64 * t).cos();
                        dr -= c * k as f64 * (k as f64 * t).sin();
                    }
                    g = g.max((1.0 + (dr / r).powi(2)).sqrt());
                }
                g
            }
            crate::geometry::DomainKind::Cusp => 2.5,
        }
    }
    fn length(&self) -> f64 {
        Domain::length(self)
    }
    fn project(&self, p: [f64; 2]) -> f64 {
        self.closest_point(p).s
    }
    fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let b = self.boundary_point(s);
        (b.point, b.tangent)
    }
    fn corners(&self) -> &[f64] {
        Domain::corners(self)
    }
}

/// Circle bounding a disk, used to clip rules to patch balls.
#[derive(Clone, Copy, Debug)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl CurvedBoundary for Circle {
    fn level(&self, p: [f64; 2]) -> f64 {
        self.radius - (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }
    fn level_lipschitz(&self) -> f64 {
        1.0
    }
    fn length(&self) -> f64 {
        std::f64::consts::TAU * self.radius
    }
    fn project(&self, p: [f64; 2]) -> f64 {
        (p[1] - self.center[1]).atan2(p[0] - self.center[0]).rem_euclid(std::f64::consts::TAU) * self.radius
    }
    fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let (sn, cs) = (s / self.radius).sin_cos();
        ([self.center[0] + self.radius * cs, self.center[1] + self.radius * sn], [-sn, cs])
    }
}

/// Uniform grid of square cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGrid {
    pub origin: [f64; 2],
    pub pitch: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CellGrid {
    /// Grid covering the box `[lo, hi]` with cells no larger than `max_pitch`.
    pub fn covering(lo: [f64; 2], hi: [f64; 2], max_pitch: f64) -> Self {
        let pad = 1e-9 * (1.0 + (hi[0] - lo[0]).max(hi[1] - lo[1]));
        let w = (hi[0] - lo[0]).max(hi[1] - lo[1]) + 2.0 * pad;
        let n = (w / max_pitch).ceil().max(1.0) as usize;
        let pitch = w / n as f64;
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        Self { origin: [cx - 0.5 * w, cy - 0.5 * w], pitch, nx: n, ny: n }
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let fx = ((p[0] - self.origin[0]) / self.pitch).floor();
        let fy = ((p[1] - self.origin[1]) / self.pitch).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(fy as usize * self.nx + fx as usize)
    }

    pub fn lower_corner(&self, cell: usize) -> [f64; 2] {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        [self.origin[0] + ix as f64 * self.pitch, self.origin[1] + iy as f64 * self.pitch]
    }

    pub fn center(&self, cell: usize) -> [f64; 2] {
        let c = self.lower_corner(cell);
        [c[0] + 0.5 * self.pitch, c[1] + 0.5 * self.pitch]
    }

    /// Index range of cells overlapping the box around `p` of half-width `r`.
    pub fn cell_range(&self, p: [f64; 2], r: f64) -> Option<(usize, usize, usize, usize)> {
        let fx0 = ((p[0] - r - self.origin[0]) / self.pitch).floor().max(0.0);
        let fy0 = ((p[1] - r - self.origin[1]) / self.pitch).floor().max(0.0);
        let fx1 = ((p[0] + r - self.origin[0]) / self.pitch).floor().min(self.nx as f64 - 1.0);
        let fy1 = ((p[1] + r - self.origin[1]) / self.pitch).floor().min(self.ny as f64 - 1.0);
        if fx1 < fx0 || fy1 < fy0 {
            return None;
        }
        Some((fx0 as usize, fx1 as usize, fy0 as usize, fy1 as usize))
    }
}

/// Cell-level region on a [`CellGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellMask {
    pub grid: CellGrid,
    pub inside: Vec<bool>,
}

impl CellMask {
    pub fn empty(grid: CellGrid) -> Self {
        Self { grid, inside: vec![false; grid.cells()] }
    }

    pub fn full(grid: CellGrid) -> Self {
        Self { grid, inside: vec![true; grid.cells()] }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.grid.cell_of(p).is_some_and(|c| self.inside[c])
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Removes every cell with a 4-neighbour outside the mask.
    pub fn eroded(&self) -> Self {
        let g = self.grid;
        let mut out = vec![false; g.cells()];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let c = iy * g.nx + ix;
                if !self.inside[c] {
                    continue;
                }
                let ok = ix > 0
                    && iy > 0
                    && ix + 1 < g.nx
                    && iy + 1 < g.ny
                    && self.inside[c - 1]
                    && self.inside[c + 1]
                    && self.inside[c - g.nx]
                    && self.inside[c + g.nx];
                out[c] = ok;
            }
        }
        Self { grid: g, inside: out }
    }

    /// True when every cell touching the closed disk lies in the mask.
    pub fn contains_disk(&self, center: [f64; 2], radius: f64) -> bool {
        let g = self.grid;
        let Some((x0, x1, y0, y1)) = g.cell_range(center, radius) else { return false };
        // disk must not leave the grid
        if center[0] - radius <= g.origin[0]
            || center[1] - radius <= g.origin[1]
            || center[0] + radius >= g.origin[0] + g.nx as f64 * g.pitch
            || center[1] + radius >= g.origin[1] + g.ny as f64 * g.pitch
        {
            return false;
        }
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = iy * g.nx + ix;
                if self.inside[c] {
                    continue;
                }
                let lo = g.lower_corner(c);
                let qx = center[0].clamp(lo[0], lo[0] + g.pitch);
                let qy = center[1].clamp(lo[1], lo[1] + g.pitch);
                if (qx - center[0]).hypot(qy - center[1]) <= radius {
                    return false;
                }
            }
        }
        true
    }
}

/// Maximum number of extra bisection levels for cut cells.
const MAX_EXTRA_DEPTH: usize = 5;

/// Volume rule on a cell grid: uncut cells are generated on the fly, cut cells are stored.
#[derive(Clone, Debug)]
pub struct GridRule {
    pub grid: CellGrid,
    gauss: Vec<(f64, f64)>,
    full: Vec<u32>,
    cut: Vec<(u32, QuadRule)>,
}

impl GridRule {
    /// Rule for `{x in selected cells : level_b(x) > 0 for every boundary b}`.
    pub fn build(grid: CellGrid, order: usize, boundaries: &[&dyn CurvedBoundary], cells: Option<&[bool]>) -> Self {
        let gauss = gauss_legendre(order);
        let mut full = Vec::new();
        let mut cut = Vec::new();
        let lips: Vec<f64> = boundaries.iter().map(|b| b.level_lipschitz()).collect();
        let half_diag = grid.pitch * std::f64::consts::FRAC_1_SQRT_2;
        for cell in 0..grid.cells() {
            if let Some(sel) = cells {
                if !sel[cell] {
                    continue;
                }
            }
            let c = grid.center(cell);
            let mut state = CellState::Inside;
            for (b, l) in boundaries.iter().zip(&lips) {
                let lv = b.level(c);
                if lv < -l * half_diag * 1.0001 {
                    state = CellState::Outside;
                    break;
                } else if lv <= l * half_diag * 1.0001 {
                    state = CellState::Cut;
                }
            }
            match state {
                CellState::Outside => {}
                CellState::Inside => full.push(cell as u32),
                CellState::Cut => {
                    let lo = grid.lower_corner(cell);
                    let mut rule = QuadRule::default();
                    cut_cell_rule(lo, grid.pitch, boundaries, &gauss, 0, &mut rule);
                    if !rule.is_empty() {
                        cut.push((cell as u32, rule));
                    }
                }
            }
        }
        Self { grid, gauss, full, cut }
    }

    pub fn order(&self) -> usize {
        self.gauss.len()
    }

    /// Visits every node as `(cell, point, weight)`.
    pub fn for_each(&self, mut f: impl FnMut(u32, [f64; 2], f64)) {
        let h = self.grid.pitch;
        for &cell in &self.full {
            let lo = self.grid.lower_corner(cell as usize);
            for &(y, wy) in &self.gauss {
                for &(x, wx) in &self.gauss {
                    f(cell, [lo[0] + x * h, lo[1] + y * h], wx * wy * h * h);
                }
            }
        }
        for (cell, rule) in &self.cut {
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                f(*cell, *p, *w);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.full.len() * self.gauss.len().pow(2) + self.cut.iter().map(|(_, r)| r.len()).sum::<usize>()
    }

    pub fn to_rule(&self) -> QuadRule {
        let mut r = QuadRule::default();
        self.for_each(|_, p, w| r.push(p, w));
        r
    }

    /// Restriction to the cells of a mask on the same grid.
    pub fn restricted(&self, mask: &CellMask) -> GridRule {
        assert_eq!(mask.grid, self.grid, "mask grid must match the rule grid");
        Self {
            grid: self.grid,
            gauss: self.gauss.clone(),
            full: self.full.iter().copied().filter(|c| mask.inside[*c as usize]).collect(),
            cut: self.cut.iter().filter(|(c, _)| mask.inside[*c as usize]).cloned().collect(),
        }
    }
}

enum CellState {
    Inside,
    Outside,
    Cut,
}

fn push_tensor(lo: [f64; 2], h: f64, gauss: &[(f64, f64)], rule: &mut QuadRule, keep: impl Fn([f64; 2]) -> bool) {
    for &(y, wy) in gauss {
        for &(x, wx) in gauss {
            let p = [lo[0] + x * h, lo[1] + y * h];
            if keep(p) {
                rule.push(p, wx * wy * h * h);
            }
        }
    }
}

fn cut_cell_rule(lo: [f64; 2], h: f64, boundaries: &[&dyn CurvedBoundary], gauss: &[(f64, f64)], depth: usize, rule: &mut QuadRule) {
    let inside_all = |p: [f64; 2]| boundaries.iter().all(|b| b.level(p) > 0.0);
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    let c = [lo[0] + 0.5 * h, lo[1] + 0.5 * h];
    let mut cutting: Vec<usize> = Vec::new();
    for (i, b) in boundaries.iter().enumerate() {
        let lv = b.level(c);
        let l = b.level_lipschitz() * half_diag * 1.0001;
        if lv < -l {
            return;
        }
        if lv <= l {
            cutting.push(i);
        }
    }
    if cutting.is_empty() {
        push_tensor(lo, h, gauss, rule, |_| true);
        return;
    }
    if cutting.len() == 1 {
        if let Some(sub) = single_curve_cell(lo, h, boundaries[cutting[0]], gauss) {
            rule.extend(&sub);
            return;
        }
    }
    if depth >= MAX_EXTRA_DEPTH {
        push_tensor(lo, h, gauss, rule, inside_all);
        return;
    }
    let hh = 0.5 * h;
    for (dx, dy) in [(0.0, 0.0), (hh, 0.0), (0.0, hh), (hh, hh)] {
        cut_cell_rule([lo[0] + dx, lo[1] + dy], hh, boundaries, gauss, depth + 1, rule);
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Rule for a cell crossed once by a single curve; `None` asks for subdivision.
fn single_curve_cell(lo: [f64; 2], h: f64, b: &dyn CurvedBoundary, gauss: &[(f64, f64)]) -> Option<QuadRule> {
    let corners = [lo, [lo[0] + h, lo[1]], [lo[0] + h, lo[1] + h], [lo[0], lo[1] + h]];
    let lv: Vec<f64> = corners.iter().map(|p| b.level(*p)).collect();
    let ins: Vec<bool> = lv.iter().map(|v| *v > 0.0).collect();
    let tol = 1e-12 * h;
    let in_cell = |p: [f64; 2]| p[0] >= lo[0] - tol && p[0] <= lo[0] + h + tol && p[1] >= lo[1] - tol && p[1] <= lo[1] + h + tol;
    let len = b.length();
    for &s in b.corners() {
        if in_cell(b.eval(s).0) {
            return None;
        }
    }
    if ins.iter().all(|v| *v) || ins.iter().all(|v| !*v) {
        let c = [lo[0] + 0.5 * h, lo[1] + 0.5 * h];
        let (q, _) = b.eval(b.project(c));
        if in_cell(q) {
            return None;
        }
        let mut r = QuadRule::default();
        if ins[0] {
            push_tensor(lo, h, gauss, &mut r, |_| true);
        }
        return Some(r);
    }
    // crossings along the ccw cell boundary
    let mut exit: Option<(usize, f64)> = None;
    let mut entry: Option<(usize, f64)> = None;
    let mut count = 0;
    for k in 0..4 {
        let (a, bb) = (corners[k], corners[(k + 1) % 4]);
        if ins[k] == ins[(k + 1) % 4] {
            continue;
        }
        count += 1;
        let (mut t0, mut t1) = (0.0, 1.0);
        let at = |t: f64| [a[0] + t * (bb[0] - a[0]), a[1] + t * (bb[1] - a[1])];
        for _ in 0..80 {
            let tm = 0.5 * (t0 + t1);
            if (b.level(at(tm)) > 0.0) == ins[k] {
                t0 = tm;
            } else {
                t1 = tm;
            }
        }
        let s = b.project(at(0.5 * (t0 + t1)));
        if ins[k] {
            exit = Some((k, s));
        } else {
            entry = Some((k, s));
        }
    }
    if count != 2 {
        return None;
    }
    let (ke, se) = exit?;
    let (kn, sn) = entry?;
    let ds = (sn - se).rem_euclid(len);
    if ds > 4.0 * h {
        return None;
    }
    for i in 0..=8 {
        let (p, _) = b.eval(se + ds * i as f64 / 8.0);
        if !in_cell(p) {
            return None;
        }
    }
    // straight path N → corners → E, then arc E → N
    let (pn, _) = b.eval(sn);
    let (pe, _) = b.eval(se);
    let mut path = vec![pn];
    let mut k = kn;
    loop {
        k = (k + 1) % 4;
        path.push(corners[k]);
        if k == ke {
            break;
        }
        if path.len() > 6 {
            return None;
        }
    }
    path.push(pe);
    let (pm, _) = b.eval(se + 0.5 * ds);
    let mut o = [0.0, 0.0];
    for p in path.iter().chain(std::iter::once(&pm)) {
        o[0] += p[0];
        o[1] += p[1];
    }
    let m = (path.len() + 1) as f64;
    o = [o[0] / m, o[1] / m];
    let mut r = QuadRule::default();
    for w in path.windows(2) {
        let (p, q) = (w[0], w[1]);
        let area2 = cross([p[0] - o[0], p[1] - o[1]], [q[0] - o[0], q[1] - o[1]]);
        if area2 < -1e-14 * h * h {
            return None;
        }
        if area2 <= 0.0 {
            continue;
        }
        for &(v, wv) in gauss {
            for &(u, wu) in gauss {
                let e = [p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])];
                r.push([o[0] + v * (e[0] - o[0]), o[1] + v * (e[1] - o[1])], wu * wv * v * area2);
            }
        }
    }
    for &(u, wu) in gauss {
        let (a, t) = b.eval(se + u * ds);
        let jac = cross([a[0] - o[0], a[1] - o[1]], [ds * t[0], ds * t[1]]);
        if jac <= 0.0 {
            return None;
        }
        for &(v, wv) in gauss {
            r.push([o[0] + v * (a[0] - o[0]), o[1] + v * (a[1] - o[1])], wu * wv * v * jac);
        }
    }
    Some(r)
}

/// Region selector for [`volume_rule`].
pub enum Region<'a> {
    Domain,
    /// Patch ball clipped to the domain.
    Ball { center: [f64; 2], radius: f64 },
    /// Cells of a mask, clipped to the domain.
    Mask(&'a CellMask),
}

/// Volume rule on `region ∩ Ω` using `2^depth` cells per side of the domain's bounding square.
pub fn volume_rule(domain: &Domain, region: Region<'_>, order: usize, depth: u32) -> QuadRule {
    let (lo, hi) = domain.bbox();
    match region {
        Region::Domain => {
            let grid = CellGrid::covering(lo, hi, (hi[0] - lo[0]).max(hi[1] - lo[1]) / f64::from(1u32 << depth));
            GridRule::build(grid, order, &[domain], None).to_rule()
        }
        Region::Ball { center, radius } => {
            let circle = Circle { center, radius };
            let grid = CellGrid::covering(
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
                2.0 * radius / f64::from(1u32 << depth),
            );
            GridRule::build(grid, order, &[domain, &circle], None).to_rule()
        }
        Region::Mask(mask) => GridRule::build(mask.grid, order, &[domain], Some(&mask.inside)).to_rule(),
    }
}

/// Panel Gauss rule in arc length on `[s0, s1]` (positions taken modulo the boundary length).
pub fn boundary_rule(domain: &Domain, s0: f64, s1: f64, order: usize, panels: usize) -> QuadRule {
    let gauss = gauss_legendre(order);
    let mut breaks = vec![s0, s1];
    let len = domain.length();
    for &c in domain.corners() {
        for shift in [-len, 0.0, len] {
            let cc = c + shift;
            if cc > s0 && cc < s1 {
                breaks.push(cc);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rule = QuadRule::default();
    let total = s1 - s0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let np = ((panels as f64 * (b - a) / total).ceil() as usize).max(1);
        let ds = (b - a) / np as f64;
        for k in 0..np {
            let pa = a + k as f64 * ds;
            for &(x, wx) in &gauss {
                let bp = domain.boundary_point(pa + x * ds);
                rule.push(bp.point, wx * ds);
            }
        }
    }
    rule
}

/// Boundary rule paired with arc positions, for integrands needing the parameter.
pub fn boundary_nodes(domain: &Domain, order: usize, panels: usize) -> Vec<(f64, f64)> {
    let gauss = gauss_legendre(order);
    let mut breaks = vec![0.0, domain.length()];
    breaks.extend(domain.corners().iter().copied().filter(|c| *c > 0.0));
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let np = ((panels as f64 * (b - a) / domain.length()).ceil() as usize).max(1);
        let ds = (b - a) / np as f64;
        for k in 0..np {
            for &(x, wx) in &gauss {
                out.push((a + (k as f64 + x) * ds, wx * ds));
            }
        }
    }
    out
}

/// Polar rule on the annulus `r0 ≤ |x − c| ≤ r1`, exact for polynomials of degree
/// `< min(2·radial, angular)` when `r0 = 0`.
pub fn annulus_rule(center: [f64; 2], r0: f64, r1: f64, radial: usize, angular: usize) -> QuadRule {
    let g = gauss_legendre(radial);
    let mut rule = QuadRule::default();
    let dth = std::f64::consts::TAU / angular as f64;
    for &(x, w) in &g {
        let r = r0 + x * (r1 - r0);
        for k in 0..angular {
            let th = (k as f64 + 0.5) * dth;
            rule.push([center[0] + r * th.cos(), center[1] + r * th.sin()], w * (r1 - r0) * r * dth);
        }
    }
    rule
}

/// Exact rule for polynomials of total degree ≤ `degree` on a ball.
pub fn ball_rule(center: [f64; 2], radius: f64, degree: usize) -> QuadRule {
    annulus_rule(center, 0.0, radius, degree / 2 + 2, degree + 2)
}

/// How a node evaluates the partition of unity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeMode {
    Exact,
    /// Patch `k`'s hole factor is replaced by 1.
    Smoothed(u32),
}

/// A flat-top zone `|x − c| < 2ρ*` around which the integrand has thin features.
#[derive(Clone, Copy, Debug)]
pub struct Zone {
    pub center: [f64; 2],
    pub flat_radius: f64,
}

/// Composite rule for integrands built from a flat-top partition of unity.
///
/// Writing the integrand as `f` and its zone-smoothed variant as `F`,
/// `∫f = ∫F + Σ_k ∫_{D_k}(f − F)` where `D_k` is the zone of patch `k`.
/// `F` is smooth across every zone edge, so the background grid integrates
/// it accurately; the corrections use polar rules aligned with the zone
/// rings. Correction nodes come in pairs with weights `±w`.
#[derive(Clone, Debug)]
pub struct PuRule {
    pub base: GridRule,
    zones: Vec<Zone>,
    zone_start: Vec<u32>,
    zone_list: Vec<u32>,
    template: Vec<(f64, f64, f64)>,
}

/// Radial and angular resolution of the zone corrections.
const ZONE_INNER_RADIAL: usize = 12;
const ZONE_RING_RADIAL: usize = 16;
const ZONE_ANGULAR: usize = 24;

impl PuRule {
    pub fn new(base: GridRule, zones: Vec<Zone>) -> Self {
        let g = base.grid;
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (k, z) in zones.iter().enumerate() {
            if let Some((x0, x1, y0, y1)) = g.cell_range(z.center, 2.0 * z.flat_radius) {
                for iy in y0..=y1 {
                    for ix in x0..=x1 {
                        pairs.push(((iy * g.nx + ix) as u32, k as u32));
                    }
                }
            }
        }
        pairs.sort_unstable();
        let mut zone_start = vec![0u32; g.cells() + 1];
        for (c, _) in &pairs {
            zone_start[*c as usize + 1] += 1;
        }
        for i in 0..g.cells() {
            zone_start[i + 1] += zone_start[i];
        }
        let zone_list = pairs.iter().map(|p| p.1).collect();
        let mut template = Vec::new();
        let dth = std::f64::consts::TAU / ZONE_ANGULAR as f64;
        for (a, b, n) in [(0.0, 1.0, ZONE_INNER_RADIAL), (1.0, 2.0, ZONE_RING_RADIAL)] {
            for &(x, w) in &gauss_legendre(n) {
                let r = a + x * (b - a);
                for k in 0..ZONE_ANGULAR {
                    let th = (k as f64 + 0.5) * dth;
                    template.push((r * th.cos(), r * th.sin(), w * (b - a) * r * dth));
                }
            }
        }
        Self { base, zones, zone_start, zone_list, template }
    }

    pub fn grid(&self) -> CellGrid {
        self.base.grid
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    fn zone_of(&self, cell: u32, p: [f64; 2]) -> NodeMode {
        let (a, b) = (self.zone_start[cell as usize], self.zone_start[cell as usize + 1]);
        for &k in &self.zone_list[a as usize..b as usize] {
            let z = &self.zones[k as usize];
            if (p[0] - z.center[0]).hypot(p[1] - z.center[1]) < 2.0 * z.flat_radius {
                return NodeMode::Smoothed(k);
            }
        }
        NodeMode::Exact
    }

    /// Visits `(point, weight, mode)`; with a mask, only nodes in masked cells.
    pub fn for_each(&self, mask: Option<&CellMask>, mut f: impl FnMut([f64; 2], f64, NodeMode)) {
        let grid = self.base.grid;
        self.base.for_each(|cell, p, w| {
            if mask.is_some_and(|m| !m.inside[cell as usize]) {
                return;
            }
            f(p, w, self.zone_of(cell, p));
        });
        for (k, z) in self.zones.iter().enumerate() {
            let rho = z.flat_radius;
            for &(x, y, w) in &self.template {
                let p = [z.center[0] + rho * x, z.center[1] + rho * y];
                if let Some(m) = mask {
                    match grid.cell_of(p) {
                        Some(c) if m.inside[c] => {}
                        _ => continue,
                    }
                }
                let ww = w * rho * rho;
                f(p, ww, NodeMode::Exact);
                f(p, -ww, NodeMode::Smoothed(k as u32));
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.base.node_count() + 2 * self.zones.len() * self.template.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_disk, make_star};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn gauss_exactness() {
        let g = gauss_legendre(5);
        for p in 0..10 {
            let v: f64 = g.iter().map(|(x, w)| w * x.powi(p)).sum();
            assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn disk_area_and_second_moment() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let r = volume_rule(&d, Region::Domain, 5, 6);
        assert!(r.weights.iter().all(|w| *w > 0.0));
        assert!((r.measure() - PI).abs() < 1e-6, "{}", r.measure() - PI);
        let m2 = r.integrate(|p| p[0] * p[0] + p[1] * p[1]);
        assert!((m2 - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn curved_cells_are_near_exact() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let r = volume_rule(&d, Region::Domain, 8, 4);
        assert!((r.measure() - PI).abs() < 1e-12, "{}", r.measure() - PI);
        let m4 = r.integrate(|p| (p[0] * p[0] + p[1] * p[1]).powi(2));
        assert!((m4 - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn star_area_matches_polar_integral() {
        let coeffs = [1.0, 0.0, 0.0, 0.15];
        let d = make_star(&coeffs).unwrap();
        let r = volume_rule(&d, Region::Domain, 8, 5);
        // area = ½∫r(θ)² dθ = π(c0² + c3²/2)
        let exact = PI * (1.0 + 0.15 * 0.15 / 2.0);
        assert!((r.measure() - exact).abs() < 1e-10, "{}", r.measure() - exact);
    }

    #[test]
    fn uncut_cells_integrate_polynomials_exactly() {
        let grid = CellGrid { origin: [0.0, 0.0], pitch: 0.25, nx: 4, ny: 4 };
        let r = GridRule::build(grid, 4, &[], None).to_rule();
        let v = r.integrate(|p| p[0].powi(3) * p[1].powi(4));
        assert!((v - 1.0 / 20.0).abs() < 1e-14);
    }

    #[test]
    fn half_covered_patch_matches_monte_carlo() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let (c, rad) = ([1.0, 0.0], 0.3);
        let r = volume_rule(&d, Region::Ball { center: c, radius: rad }, 8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let p = [c[0] + rng.random_range(-rad..rad), c[1] + rng.random_range(-rad..rad)];
            if d.inside(p) && (p[0] - c[0]).hypot(p[1] - c[1]) < rad {
                hits += 1;
            }
        }
        let box_area = 4.0 * rad * rad;
        let frac = hits as f64 / n as f64;
        let est = frac * box_area;
        let se = (frac * (1.0 - frac) / n as f64).sqrt() * box_area;
        assert!((r.measure() - est).abs() < 3.0 * se, "{} vs {est} ± {se}", r.measure());
        // lens area of two circles, analytic
        let (r1, r2, dd): (f64, f64, f64) = (1.0, rad, 1.0);
        let a1 = r1 * r1 * ((dd * dd + r1 * r1 - r2 * r2) / (2.0 * dd * r1)).acos();
        let a2 = r2 * r2 * ((dd * dd + r2 * r2 - r1 * r1) / (2.0 * dd * r2)).acos();
        let a3 = 0.5 * ((-dd + r1 + r2) * (dd + r1 - r2) * (dd - r1 + r2) * (dd + r1 + r2)).sqrt();
        assert!((r.measure() - (a1 + a2 - a3)).abs() < 1e-6);
    }

    #[test]
    fn boundary_rules_on_circle() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let r = boundary_rule(&d, 0.0, d.length(), 8, 16);
        assert!((r.measure() - 2.0 * PI).abs() < 1e-10);
        assert!((r.integrate(|p| p[0] * p[0]) - PI).abs() < 1e-10);
        assert!(r.integrate(|p| p[0]).abs() < 1e-12);
    }

    #[test]
    fn ball_rule_exact() {
        let r = ball_rule([0.3, -0.2], 0.5, 8);
        let v = r.integrate(|p| ((p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2)).powi(2));
        assert!((v - PI * 0.5f64.powi(6) / 3.0).abs() < 1e-15);
        assert!((r.measure() - PI * 0.25).abs() < 1e-14);
    }

    #[test]
    fn erosion_and_disk_containment() {
        let grid = CellGrid { origin: [0.0, 0.0], pitch: 0.1, nx: 10, ny: 10 };
        let m = CellMask::full(grid);
        let e = m.eroded();
        assert_eq!(e.count(), 64);
        assert!(e.contains_disk([0.5, 0.5], 0.39));
        assert!(!e.contains_disk([0.5, 0.5], 0.41));
    }

    #[test]
    fn pu_rule_without_zone_features_matches_base() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let grid = CellGrid::covering([-1.0, -1.0], [1.0, 1.0], 0.1);
        let base = GridRule::build(grid, 6, &[&d], None);
        let zones = vec![Zone { center: [0.2, 0.1], flat_radius: 0.03 }];
        let pr = PuRule::new(base, zones);
        let mut total = 0.0;
        pr.for_each(None, |p, w, _| total += w * (1.0 + p[0] * p[1]));
        assert!((total - PI).abs() < 1e-12);
    }
}
