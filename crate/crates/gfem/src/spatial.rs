//! Uniform bucket grid for radius queries over a fixed point set.

#[derive(Debug)]
pub(crate) struct PointGrid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl PointGrid {
    pub fn new(points: &[[f64; 2]], cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize) + 1;
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize) + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, p) in points.iter().enumerate() {
            let ix = (((p[0] - lo[0]) / cell) as usize).min(nx - 1);
            let iy = (((p[1] - lo[1]) / cell) as usize).min(ny - 1);
            buckets[iy * nx + ix].push(i as u32);
        }
        Self { origin: lo, cell, nx, ny, buckets }
    }

    /// Calls `f` with every stored index whose bucket intersects the box of half-width `radius` around `x`.
    #[inline]
    pub fn for_candidates(&self, x: [f64; 2], radius: f64, mut f: impl FnMut(u32)) {
        let fx0 = ((x[0] - radius - self.origin[0]) / self.cell).floor();
        let fx1 = ((x[0] + radius - self.origin[0]) / self.cell).floor();
        let fy0 = ((x[1] - radius - self.origin[1]) / self.cell).floor();
        let fy1 = ((x[1] + radius - self.origin[1]) / self.cell).floor();
        if fx1 < 0.0 || fy1 < 0.0 || fx0 >= self.nx as f64 || fy0 >= self.ny as f64 {
            return;
        }
        let ix0 = fx0.max(0.0) as usize;
        let iy0 = fy0.max(0.0) as usize;
        let ix1 = (fx1 as usize).min(self.nx - 1);
        let iy1 = (fy1 as usize).min(self.ny - 1);
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                for &i in &self.buckets[iy * self.nx + ix] {
                    f(i);
                }
            }
        }
    }
}

/// Incrementally filled bucket grid used by greedy point selection.
pub(crate) struct DynamicGrid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<[f64; 2]>>,
}

impl DynamicGrid {
    pub fn new(lo: [f64; 2], hi: [f64; 2], cell: f64) -> Self {
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize) + 1;
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize) + 1;
        Self { origin: lo, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] }
    }

    fn index(&self, p: [f64; 2]) -> (isize, isize) {
        (
            ((p[0] - self.origin[0]) / self.cell).floor() as isize,
            ((p[1] - self.origin[1]) / self.cell).floor() as isize,
        )
    }

    pub fn insert(&mut self, p: [f64; 2]) {
        let (ix, iy) = self.index(p);
        let ix = ix.clamp(0, self.nx as isize - 1) as usize;
        let iy = iy.clamp(0, self.ny as isize - 1) as usize;
        self.buckets[iy * self.nx + ix].push(p);
    }

    /// True when some stored point lies strictly closer than `radius` (radius ≤ cell size).
    pub fn any_within(&self, p: [f64; 2], radius: f64) -> bool {
        let (ix, iy) = self.index(p);
        let r2 = radius * radius;
        for jy in (iy - 1)..=(iy + 1) {
            for jx in (ix - 1)..=(ix + 1) {
                if jx < 0 || jy < 0 || jx >= self.nx as isize || jy >= self.ny as isize {
                    continue;
                }
                for q in &self.buckets[jy as usize * self.nx + jx as usize] {
                    let dx = q[0] - p[0];
                    let dy = q[1] - p[1];
                    if dx * dx + dy * dy < r2 {
                        return true;
                    }
                }
            }
        }
        false
    }
}
