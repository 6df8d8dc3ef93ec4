//! Sobolev norms: integer orders by quadrature, negative orders by discrete
//! duality, fractional orders on the circle by Fourier series, and the plane
//! Fourier norm.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_forms, BoundaryDistribution, FormRequest, GfemFunction, GfemSpace};
use crate::error::{GfemError, Result};
use crate::field::{Constant, Field, Polynomial};
use crate::geometry::Domain;
use crate::linalg::{lanczos_pencil, CsrMatrix, SpdSolver};
use crate::quadrature::{boundary_nodes, volume_rule, CellMask, QuadRule, Region};

/// Multi-indices `(a, b)` with `a + b = l`.
fn order_indices(l: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..=l).map(move |b| (l - b, b))
}

/// `(Σ_{|α|≤s} ‖∂^α f‖²)^{1/2}` over a quadrature rule.
pub fn hs_norm(f: &dyn Field, rule: &QuadRule, s: u32) -> f64 {
    let mut sum = 0.0;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        for l in 0..=s {
            for (a, b) in order_indices(l) {
                let v = f.partial(*p, a, b);
                sum += w * v * v;
            }
        }
    }
    sum.max(0.0).sqrt()
}

/// Default rule on a region: Gauss order 10 on `2^depth` cells per side.
pub fn region_rule(domain: &Domain, region: Region<'_>) -> QuadRule {
    volume_rule(domain, region, 10, 5)
}

/// `(‖u − u_S‖_{L²}, |u − u_S|_{H¹})` over the domain or the cells of `mask`.
pub fn error_norms(u: &dyn Field, u_s: &GfemFunction, mask: Option<&CellMask>) -> (f64, f64) {
    let (mut l2, mut semi) = (0.0, 0.0);
    u_s.space().for_each_node(mask, 1, |x, w, s| {
        let j = s.combine(&u_s.coeffs);
        let e = u.value(x) - j.value;
        let g = u.grad(x);
        let (gx, gy) = (g[0] - j.grad[0], g[1] - j.grad[1]);
        l2 += w * e * e;
        semi += w * (gx * gx + gy * gy);
    });
    (l2.max(0.0).sqrt(), semi.max(0.0).sqrt())
}

/// `(‖u_S‖_{L²}, |u_S|_{H¹})` over the domain or the cells of `mask`.
pub fn function_norms(u_s: &GfemFunction, mask: Option<&CellMask>) -> (f64, f64) {
    error_norms(&Constant(0.0), u_s, mask)
}

/// Orthonormal-on-[−1,1] scaled Legendre values and derivatives up to `k` at `t`.
///
/// `out[n][d] = dᵈ/dtᵈ P_n(t)` for `n ≤ degree`, `d ≤ k`.
fn legendre_derivatives(t: f64, degree: usize, k: usize, out: &mut Vec<[f64; 5]>) {
    out.clear();
    out.resize(degree + 1, [0.0; 5]);
    out[0][0] = 1.0;
    if degree >= 1 {
        out[1][0] = t;
        if k >= 1 {
            out[1][1] = 1.0;
        }
    }
    for n in 1..degree {
        let nf = n as f64;
        for d in 0..=k.min(4) {
            let lower = if d > 0 { out[n][d - 1] } else { 0.0 };
            out[n + 1][d] = ((2.0 * nf + 1.0) * (t * out[n][d] + d as f64 * lower) - nf * out[n - 1][d]) / (nf + 1.0);
        }
    }
}

/// Which supremum a dual norm takes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DualFlavor {
    /// Tensor polynomials on the region's bounding box, clipped to the region.
    Full,
    /// Tensor polynomials times the bubble `(1 − |x − c|²/r²)^{max(s,1)}` on a disk.
    Compact { center: [f64; 2], radius: f64 },
}

/// Tensor Legendre test space `P_a(ξ) P_b(η)`, `a, b ≤ degree`, on a box.
#[derive(Clone, Debug)]
pub struct TestSpace {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub degree: usize,
    pub flavor: DualFlavor,
    bubble: Option<Polynomial>,
}

impl TestSpace {
    pub fn new(lo: [f64; 2], hi: [f64; 2], degree: usize, flavor: DualFlavor, s: u32) -> Self {
        let bubble = match flavor {
            DualFlavor::Full => None,
            DualFlavor::Compact { center, radius } => Some(bubble_polynomial(center, radius, s.max(1))),
        };
        Self { lo, hi, degree, flavor, bubble }
    }

    pub fn dim(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    fn map(&self, x: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let sx = 2.0 / (self.hi[0] - self.lo[0]);
        let sy = 2.0 / (self.hi[1] - self.lo[1]);
        ([(x[0] - self.lo[0]) * sx - 1.0, (x[1] - self.lo[1]) * sy - 1.0], [sx, sy])
    }

    /// Values of all test functions at `x`; zero outside the bubble's disk.
    pub fn values(&self, x: [f64; 2], px: &mut Vec<[f64; 5]>, py: &mut Vec<[f64; 5]>, out: &mut [f64]) {
        let weight = match (&self.bubble, self.flavor) {
            (Some(b), DualFlavor::Compact { center, radius }) => {
                if (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) >= radius * radius {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                b.value(x)
            }
            _ => 1.0,
        };
        let (t, _) = self.map(x);
        legendre_derivatives(t[0], self.degree, 0, px);
        legendre_derivatives(t[1], self.degree, 0, py);
        let n = self.degree + 1;
        for a in 0..n {
            let va = weight * px[a][0];
            for b in 0..n {
                out[a * n + b] = va * py[b][0];
            }
        }
    }

    /// `∂ˣᵃ∂ʸᵇ` of every test function at `x`, for all `a + b ≤ s`, as rows of `out`.
    fn derivatives(&self, x: [f64; 2], s: u32, out: &mut DMatrix<f64>, row0: usize, scale: f64) {
        let mut px = Vec::new();
        let mut py = Vec::new();
        let (t, sc) = self.map(x);
        let k = s as usize;
        legendre_derivatives(t[0], self.degree, k, &mut px);
        legendre_derivatives(t[1], self.degree, k, &mut py);
        let n = self.degree + 1;
        let mut row = row0;
        for l in 0..=s {
            for (a, b) in order_indices(l) {
                for i in 0..n {
                    for j in 0..n {
                        let v = match &self.bubble {
                            None => px[i][a as usize] * sc[0].powi(a as i32) * py[j][b as usize] * sc[1].powi(b as i32),
                            Some(bub) => {
                                // Leibniz rule for the bubble product
                                let mut acc = 0.0;
                                for ia in 0..=a {
                                    for ib in 0..=b {
                                        let c = binom(a, ia) * binom(b, ib);
                                        let q = px[i][(a - ia) as usize]
                                            * sc[0].powi((a - ia) as i32)
                                            * py[j][(b - ib) as usize]
                                            * sc[1].powi((b - ib) as i32);
                                        acc += c * bub.partial(x, ia, ib) * q;
                                    }
                                }
                                acc
                            }
                        };
                        out[(row, i * n + j)] = scale * v;
                    }
                }
                row += 1;
            }
        }
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `(1 − |x − c|²/r²)^p` expanded as a polynomial.
fn bubble_polynomial(c: [f64; 2], r: f64, p: u32) -> Polynomial {
    // expand in shifted variables, then in x, y
    let mut shifted: Vec<(u32, u32, f64)> = Vec::new();
    for k in 0..=p {
        let ck = binom(p, k) * (-1.0 / (r * r)).powi(k as i32);
        for l in 0..=k {
            shifted.push((2 * l, 2 * (k - l), ck * binom(k, l)));
        }
    }
    let mut terms: Vec<(u32, u32, f64)> = Vec::new();
    for (px, py, c0) in shifted {
        for i in 0..=px {
            for j in 0..=py {
                let coef = c0 * binom(px, i) * (-c[0]).powi((px - i) as i32) * binom(py, j) * (-c[1]).powi((py - j) as i32);
                if let Some(t) = terms.iter_mut().find(|t| t.0 == i && t.1 == j) {
                    t.2 += coef;
                } else {
                    terms.push((i, j, coef));
                }
            }
        }
    }
    Polynomial::new(terms)
}

/// Discrete `H^{-s}` norm: supremum of `(f, φ)/‖φ‖_{H^s}` over a test space.
#[derive(Clone, Debug)]
pub struct DualNorm {
    pub test: TestSpace,
    pub s: u32,
    /// Lower Cholesky factor of the equilibrated Gram matrix.
    factor: DMatrix<f64>,
    scale: DVector<f64>,
}

/// Relative eigenvalue floor below which the Gram matrix counts as singular.
const GRAM_CONDITION_LIMIT: f64 = 1e-14;

impl DualNorm {
    /// Builds the `H^s` Gram matrix of the test space on `rule`.
    pub fn new(test: TestSpace, s: u32, rule: &QuadRule) -> Result<Self> {
        if s > 4 {
            return Err(GfemError::Unsupported(format!("dual norms of order {s} > 4")));
        }
        let n = test.dim();
        let rows_per_node = ((s + 1) * (s + 2) / 2) as usize;
        let block = 256;
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut e = DMatrix::<f64>::zeros(block * rows_per_node, n);
        let nodes = rule.len();
        let mut start = 0;
        while start < nodes {
            let end = (start + block).min(nodes);
            e.fill(0.0);
            for (k, idx) in (start..end).enumerate() {
                let w = rule.weights[idx];
                if w <= 0.0 {
                    continue;
                }
                test.derivatives(rule.points[idx], s, &mut e, k * rows_per_node, w.sqrt());
            }
            gram.gemm_tr(1.0, &e, &e, 1.0);
            start = end;
        }
        let scale = DVector::from_iterator(n, gram.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }));
        if scale.iter().any(|v| *v == 0.0) {
            return Err(GfemError::Orthogonalization("test function vanishes on the region".into()));
        }
        let eq = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] * scale[i] * scale[j]);
        let eig = nalgebra::SymmetricEigen::new(eq.clone());
        let (lmin, lmax) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        if !(lmin > GRAM_CONDITION_LIMIT * lmax) {
            return Err(GfemError::Orthogonalization(format!("Gram condition {:.2e} exceeds limit", lmax / lmin)));
        }
        let chol = nalgebra::Cholesky::new(eq).ok_or_else(|| GfemError::Orthogonalization("Cholesky failed".into()))?;
        Ok(Self { test, s, factor: chol.l(), scale })
    }

    /// Default test space on a region, with the region's own quadrature.
    pub fn on_region(domain: &Domain, region: Region<'_>, flavor: DualFlavor, s: u32, degree: usize) -> Result<Self> {
        let (lo, hi) = match (&region, flavor) {
            (_, DualFlavor::Compact { center, radius }) => {
                ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
            }
            (Region::Ball { center, radius }, _) => {
                ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
            }
            (Region::Mask(m), _) => mask_bbox(m),
            (Region::Domain, _) => domain.bbox(),
        };
        let rule = match flavor {
            DualFlavor::Compact { center, radius } => region_rule(domain, Region::Ball { center, radius }),
            DualFlavor::Full => region_rule(domain, region),
        };
        Self::new(TestSpace::new(lo, hi, degree, flavor, s), s, &rule)
    }

    pub fn dim(&self) -> usize {
        self.test.dim()
    }

    /// `√(bᵀ G⁻¹ b)` for pairings `b_i = (f, φ_i)`.
    pub fn norm_from_pairings(&self, b: &[f64]) -> f64 {
        let mut y = DVector::from_iterator(b.len(), b.iter().zip(self.scale.iter()).map(|(v, s)| v * s));
        self.factor.solve_lower_triangular_mut(&mut y);
        y.norm()
    }

    /// Dual norm of a field integrated on `rule`.
    pub fn of_field(&self, f: &dyn Field, rule: &QuadRule) -> f64 {
        let mut b = vec![0.0; self.dim()];
        let mut vals = vec![0.0; self.dim()];
        let (mut px, mut py) = (Vec::new(), Vec::new());
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let fw = w * f.value(*p);
            self.test.values(*p, &mut px, &mut py, &mut vals);
            b.iter_mut().zip(&vals).for_each(|(bi, v)| *bi += fw * v);
        }
        self.norm_from_pairings(&b)
    }

    /// Dual norm of `u − u_S` (pass `Constant(0.0)` for `u_S` alone) over the
    /// composite rule of the space, optionally masked.
    pub fn of_error(&self, u: &dyn Field, u_s: &GfemFunction, mask: Option<&CellMask>) -> f64 {
        let mut b = vec![0.0; self.dim()];
        let mut vals = vec![0.0; self.dim()];
        let (mut px, mut py) = (Vec::new(), Vec::new());
        u_s.space().for_each_node(mask, 0, |x, w, s| {
            if let DualFlavor::Compact { center, radius } = self.test.flavor {
                if (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) >= radius * radius {
                    return;
                }
            }
            let fw = w * (u.value(x) - s.combine(&u_s.coeffs).value);
            self.test.values(x, &mut px, &mut py, &mut vals);
            b.iter_mut().zip(&vals).for_each(|(bi, v)| *bi += fw * v);
        });
        self.norm_from_pairings(&b)
    }
}

fn mask_bbox(m: &CellMask) -> ([f64; 2], [f64; 2]) {
    let g = m.grid;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in (0..g.cells()).filter(|c| m.inside[*c]) {
        let l = g.lower_corner(c);
        for d in 0..2 {
            lo[d] = lo[d].min(l[d]);
            hi[d] = hi[d].max(l[d] + g.pitch);
        }
    }
    (lo, hi)
}

/// Dual norm at test degree `N` and `N + 4`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DualDiagnostic {
    pub degree: usize,
    pub value: f64,
    pub value_refined: f64,
}

/// Convenience: dual norm of a field on the whole domain with its `N`-diagnostic.
pub fn dual_norm(f: &dyn Field, domain: &Domain, s: u32, degree: usize) -> Result<DualDiagnostic> {
    let rule = region_rule(domain, Region::Domain);
    let a = DualNorm::on_region(domain, Region::Domain, DualFlavor::Full, s, degree)?;
    let b = DualNorm::on_region(domain, Region::Domain, DualFlavor::Full, s, degree + 4)?;
    Ok(DualDiagnostic { degree, value: a.of_field(f, &rule), value_refined: b.of_field(f, &rule) })
}

/// Complex Fourier coefficients `c_n`, `|n| ≤ nmax`, of a function of `θ` sampled by a rule.
pub fn fourier_coefficients(samples: &[(f64, f64, f64)], nmax: usize) -> Vec<Complex<f64>> {
    let mut c = vec![Complex::new(0.0, 0.0); 2 * nmax + 1];
    for &(th, w, v) in samples {
        let step = Complex::from_polar(1.0, -th);
        let mut e = Complex::new(1.0, 0.0);
        for n in 0..=nmax {
            let t = e * (w * v / (2.0 * PI));
            c[nmax + n] += t;
            if n > 0 {
                c[nmax - n] += t.conj();
            }
            e *= step;
        }
    }
    c
}

/// `(2π Σ_n (1+n²)^t |c_n|²)^{1/2}` for coefficients indexed `−nmax..=nmax`.
pub fn fourier_norm_from_coefficients(c: &[Complex<f64>], t: f64) -> f64 {
    let nmax = (c.len() - 1) / 2;
    let mut sum = 0.0;
    for (k, cn) in c.iter().enumerate() {
        let n = k as f64 - nmax as f64;
        sum += (1.0 + n * n).powf(t) * cn.norm_sqr();
    }
    (2.0 * PI * sum).sqrt()
}

/// Fourier-type `H^t(∂Ω)` norm of boundary data on the unit circle.
pub fn boundary_fourier_norm(g: &BoundaryDistribution, domain: &Domain, t: f64) -> Result<f64> {
    if !domain.is_unit_circle() {
        return Err(GfemError::Unsupported("boundary Fourier norms need the unit circle".into()));
    }
    let order = g.atoms.iter().map(|a| f64::from(a.order)).fold(f64::NEG_INFINITY, f64::max);
    if !g.atoms.is_empty() && 2.0 * order + 2.0 * t >= -1.0 {
        return Ok(f64::INFINITY);
    }
    let coef = |n: i64| -> Complex<f64> {
        let mut c = Complex::new(0.0, 0.0);
        let na = n.unsigned_abs() as usize;
        if n == 0 {
            c += g.cos.first().copied().unwrap_or(0.0);
        } else {
            let a = g.cos.get(na).copied().unwrap_or(0.0);
            let b = g.sin.get(na).copied().unwrap_or(0.0);
            c += Complex::new(a / 2.0, -(n.signum() as f64) * b / 2.0);
        }
        for at in &g.atoms {
            let inn = Complex::new(0.0, n as f64).powu(u32::from(at.order));
            c += inn * Complex::from_polar(at.weight / (2.0 * PI), -(n as f64) * at.s);
        }
        c
    };
    let explicit = g.cos.len().max(g.sin.len()) as i64;
    let cutoff: i64 = if g.atoms.is_empty() { explicit } else { 200_000.max(explicit) };
    let term = |n: i64| (1.0 + (n * n) as f64).powf(t) * coef(n).norm_sqr();
    let mut sum = 0.0;
    for n in -cutoff..=cutoff {
        sum += term(n);
    }
    if !g.atoms.is_empty() {
        // |c_n|² (1+n²)^t ~ A n^p; integral tail on both sides
        let p = 2.0 * order + 2.0 * t;
        let block = 1000;
        let amp: f64 = (cutoff - block..cutoff).map(|n| (term(n) + term(-n)) / (n as f64).powf(p)).sum::<f64>() / block as f64;
        sum += amp * (cutoff as f64 + 0.5).powf(p + 1.0) / (-(p + 1.0));
    }
    Ok((2.0 * PI * sum).sqrt())
}

/// Fourier `H^t(∂Ω)` norm of the trace of a GFEM function on the unit circle.
pub fn trace_fourier_norm(u: &GfemFunction, t: f64) -> Result<f64> {
    let space = u.space();
    let d = space.domain();
    if !d.is_unit_circle() {
        return Err(GfemError::Unsupported("boundary Fourier norms need the unit circle".into()));
    }
    let h = space.covering().h;
    let panels = (d.length() / (h / 8.0)).ceil() as usize;
    let nmax = (8.0 * PI / h).ceil() as usize;
    let samples: Vec<(f64, f64, f64)> = boundary_nodes(d, 8, panels)
        .into_iter()
        .map(|(s, w)| (s, w, u.eval(d.boundary_point(s).point).value))
        .collect();
    Ok(fourier_norm_from_coefficients(&fourier_coefficients(&samples, nmax), t))
}

/// `((2π)^{−2} ∫_{R²} (1+|ξ|²)^s |ĥ(ξ)|² dξ)^{1/2}` for a radial `|ĥ|`.
///
/// Integrates in `log ρ` panel by panel until the panel contribution becomes
/// negligible; a tail that does not decay is reported as divergent.
pub fn fourier_norm_plane(profile: &dyn Fn(f64) -> f64, s: f64) -> Result<f64> {
    let gauss = crate::quadrature::gauss_legendre(16);
    // (1+ρ²)^s ρ² |ĥ(ρ)|² with ρ = eᵗ, in logarithms to avoid overflow
    let integrand = |t: f64| {
        let p = profile(t.exp());
        if p == 0.0 {
            return 0.0;
        }
        let log1p_rho2 = if t > 0.0 { 2.0 * t + (-2.0 * t).exp().ln_1p() } else { (2.0 * t).exp().ln_1p() };
        (s * log1p_rho2 + 2.0 * t + 2.0 * p.abs().ln()).exp()
    };
    let panel = |a: f64| gauss.iter().map(|(x, w)| w * integrand(a + x)).sum::<f64>();
    let mut total = 0.0;
    let mut t = -40.0;
    let mut small = 0;
    loop {
        let c = panel(t);
        total += c;
        t += 1.0;
        if t > 40.0 && c.abs() <= 1e-15 * total.abs() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        if t > 20_000.0 || !total.is_finite() {
            return Err(GfemError::Precondition(format!("plane Fourier integral diverges at order {s}")));
        }
    }
    Ok((total / (2.0 * PI)).sqrt())
}

/// Scaled inverse constants of the discrete space.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InverseConstant {
    pub i: u32,
    pub j: u32,
    /// `√λ_max(G_j, G_i) · h^{j−i}`.
    pub constant: f64,
    /// `h^{j−i} / √λ_max(G_j, G_i)` for the reverse dual-norm bound.
    pub negative_constant: f64,
}

/// Largest Rayleigh quotient `‖w‖²_{H^j} / ‖w‖²_{H^i}` over the space, scaled by `h^{2(j−i)}`.
pub fn inverse_property_check(space: &GfemSpace, i: u32, j: u32) -> Result<InverseConstant> {
    if i > j || j > 2 {
        return Err(GfemError::Precondition(format!("inverse check needs 0 ≤ i ≤ j ≤ 2, got ({i}, {j})")));
    }
    let h = space.covering().h;
    if i == j {
        return Ok(InverseConstant { i, j, constant: 1.0, negative_constant: 1.0 });
    }
    let forms = assemble_forms(space, FormRequest { mass: true, stiffness: true, hessian: j == 2 }, None);
    let gram = |k: u32| -> CsrMatrix {
        let mut acc = forms.mass.clone().unwrap();
        if k >= 1 {
            acc = add(&acc, forms.stiffness.as_ref().unwrap());
        }
        if k >= 2 {
            acc = add(&acc, forms.hessian.as_ref().unwrap());
        }
        acc
    };
    let (gi, gj) = (gram(i), gram(j));
    let solver = SpdSolver::new(&gi)?;
    let ritz = lanczos_pencil(&gj, &gi, &solver, 80, 7);
    let root = ritz.max.max(0.0).sqrt();
    let scale = h.powi((j - i) as i32);
    Ok(InverseConstant { i, j, constant: root * scale, negative_constant: scale / root })
}

fn add(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut t = Vec::with_capacity(a.nnz() + b.nnz());
    for m in [a, b] {
        for r in 0..m.nrows {
            for (c, v) in m.row(r) {
                t.push((r as u32, c as u32, v));
            }
        }
    }
    CsrMatrix::from_triplets(a.nrows, a.ncols, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Gaussian, SinCos};
    use crate::geometry::make_disk;

    fn disk() -> Domain {
        make_disk(1.0, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn integer_norms_on_disk() {
        let d = disk();
        let rule = region_rule(&d, Region::Domain);
        assert!((hs_norm(&Constant(1.0), &rule, 0) - PI.sqrt()).abs() < 1e-10);
        let x = Polynomial::new(vec![(1, 0, 1.0)]);
        assert!((hs_norm(&x, &rule, 1) - (PI / 4.0 + PI).sqrt()).abs() < 1e-10);
        let small = region_rule(&d, Region::Ball { center: [0.2, 0.0], radius: 0.5 });
        assert!(hs_norm(&SinCos, &small, 2) <= hs_norm(&SinCos, &rule, 2));
    }

    #[test]
    fn legendre_recurrence() {
        let mut out = Vec::new();
        legendre_derivatives(0.3, 4, 2, &mut out);
        let p3 = |t: f64| 0.5 * (5.0 * t * t * t - 3.0 * t);
        assert!((out[3][0] - p3(0.3)).abs() < 1e-15);
        assert!((out[3][1] - 0.5 * (15.0 * 0.09 - 3.0)).abs() < 1e-14);
        assert!((out[3][2] - 15.0 * 0.3).abs() < 1e-13);
        assert!((out[4][2] - (105.0 * 0.09 - 15.0) / 2.0).abs() < 1e-13);
    }

    #[test]
    fn bubble_expansion() {
        let b = bubble_polynomial([0.1, -0.2], 0.5, 3);
        let x = [0.3, 0.1];
        let direct = (1.0 - ((0.2f64).powi(2) + (0.3f64).powi(2)) / 0.25).powi(3);
        assert!((b.value(x) - direct).abs() < 1e-13);
    }

    #[test]
    fn dual_norm_self_duality_and_monotonicity() {
        let d = disk();
        let rule = region_rule(&d, Region::Domain);
        let p = Polynomial::new(vec![(2, 1, 1.0), (0, 0, 0.5), (1, 3, -2.0)]);
        let dn = DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 0, 10).unwrap();
        let l2 = hs_norm(&p, &rule, 0);
        assert!((dn.of_field(&p, &rule) - l2).abs() < 1e-8 * l2);
        let f = Gaussian { center: [0.3, 0.2], width: 0.3 };
        let l2f = hs_norm(&f, &rule, 0);
        let mut last = 0.0;
        for n in [4, 8, 12] {
            let v = DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 1, n).unwrap().of_field(&f, &rule);
            assert!(v >= last, "N={n}: {v} < {last}");
            last = v;
        }
        let s0 = DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 0, 12).unwrap().of_field(&f, &rule);
        assert!((s0 - l2f).abs() < 0.01 * l2f, "{s0} {l2f}");
        let diag = dual_norm(&f, &d, 1, 6).unwrap();
        assert!(diag.value_refined >= diag.value);
    }

    #[test]
    fn dual_norm_cauchy_schwarz_and_orthogonality() {
        let d = disk();
        let rule = region_rule(&d, Region::Domain);
        let dn = DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 2, 6).unwrap();
        let f = SinCos;
        let nf = dn.of_field(&f, &rule);
        for phi in [Polynomial::new(vec![(1, 1, 1.0)]), Polynomial::new(vec![(3, 0, 1.0), (0, 2, 0.3)])] {
            let pairing = rule.integrate(|x| f.value(x) * phi.value(x));
            assert!(pairing.abs() <= nf * hs_norm(&phi, &rule, 2) * (1.0 + 1e-10));
        }
        // zero field pairs to zero
        assert_eq!(dn.of_field(&Constant(0.0), &rule), 0.0);
        // compact flavour: a field supported outside the disk is invisible
        let c = DualNorm::on_region(&d, Region::Domain, DualFlavor::Compact { center: [-0.5, 0.0], radius: 0.3 }, 1, 6).unwrap();
        let far = Gaussian { center: [0.6, 0.0], width: 0.02 };
        assert!(c.of_field(&far, &rule) < 1e-12);
    }

    #[test]
    fn boundary_fourier_norms() {
        let d = disk();
        let n = boundary_fourier_norm(&BoundaryDistribution::cosine(1), &d, 0.0).unwrap();
        assert!((n - PI.sqrt()).abs() < 1e-12);
        let dirac = BoundaryDistribution::dirac(0.4, 2.0 * PI);
        let a = boundary_fourier_norm(&dirac, &d, -0.6).unwrap();
        let b = boundary_fourier_norm(&dirac, &d, -0.55).unwrap();
        let c = boundary_fourier_norm(&dirac, &d, -0.51).unwrap();
        assert!(a.is_finite() && a < b && b < c);
        assert!(boundary_fourier_norm(&dirac, &d, -0.5).unwrap().is_infinite());
        // closed form at t = −1: (2/2π) Σ_{n≥1} 1/(1+n²) = (π coth π − 1)/(2π)
        let exact = ((PI / PI.tanh() - 1.0) / (2.0 * PI)).sqrt();
        let v = boundary_fourier_norm(&dirac, &d, -1.0).unwrap();
        assert!((v - exact).abs() < 1e-9, "{v} {exact}");
        let cusp = crate::geometry::make_cusp_domain();
        assert!(boundary_fourier_norm(&dirac, &cusp, -1.0).is_err());
    }

    #[test]
    fn plane_fourier_norms() {
        for eps in [0.1, 0.05, 0.025] {
            let v = fourier_norm_plane(&|_| 1.0, -1.0 - eps).unwrap();
            let exact = 1.0 / (4.0 * PI * eps);
            assert!((v * v - exact).abs() < 1e-6 * exact, "eps={eps}: {} vs {exact}", v * v);
        }
        let g = fourier_norm_plane(&|r| 2.0 * PI * (-r * r / 2.0).exp(), 0.0).unwrap();
        assert!((g * g - PI).abs() < 1e-10);
        assert!(fourier_norm_plane(&|_| 1.0, -1.0).is_err());
    }
}
