//! The GFEM space, Galerkin matrices, distributional Neumann loads and solves.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::covering::{AdmissibleSet, Covering};
use crate::error::{GfemError, Result};
use crate::field::{Field, Jet};
use crate::geometry::Domain;
use crate::linalg::{dot, norm_inf, CsrMatrix, SpdSolver};
use crate::localspace::{BasisJet, PolyBasis};
use crate::partition::{PartitionOfUnity, PuValue};
use crate::quadrature::{boundary_nodes, CellMask, NodeMode};

/// `S = {Σ_j φ_j v_j : v_j ∈ Q_m}` with DOF `j·dim + α`.
pub struct GfemSpace {
    pu: Arc<PartitionOfUnity>,
    basis: PolyBasis,
    /// Patch ball meets the boundary.
    boundary_patch: Vec<bool>,
    forms: OnceLock<Arc<Forms>>,
    solver: OnceLock<std::result::Result<Arc<SpdSolver>, String>>,
}

impl std::fmt::Debug for GfemSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GfemSpace").field("patches", &self.pu.len()).field("degree", &self.basis.degree).finish()
    }
}

/// Shape functions `φ_j p_α` active at one point, grouped by patch.
#[derive(Clone, Debug, Default)]
pub struct Shapes {
    pub pu: Vec<PuValue>,
    basis: BasisJet,
    pub dim: usize,
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<[f64; 3]>,
}

impl Shapes {
    /// Number of active patches.
    pub fn patches(&self) -> usize {
        self.pu.len()
    }

    /// First global DOF of active patch `a`.
    pub fn first_dof(&self, a: usize) -> usize {
        self.pu[a].index as usize * self.dim
    }

    /// Evaluates `Σ c_i S_i` with derivatives up to the order the shapes were built with.
    pub fn combine(&self, coeffs: &[f64]) -> Jet {
        let mut out = Jet::default();
        let d = self.dim;
        for a in 0..self.pu.len() {
            let c = &coeffs[self.first_dof(a)..self.first_dof(a) + d];
            for (i, ci) in c.iter().enumerate() {
                let k = a * d + i;
                out.value += ci * self.value[k];
                out.grad[0] += ci * self.grad[k][0];
                out.grad[1] += ci * self.grad[k][1];
                out.hess[0] += ci * self.hess[k][0];
                out.hess[1] += ci * self.hess[k][1];
                out.hess[2] += ci * self.hess[k][2];
            }
        }
        out
    }
}

impl GfemSpace {
    pub fn new(pu: Arc<PartitionOfUnity>, degree: usize) -> Arc<Self> {
        let cov = pu.covering();
        let d = cov.domain();
        let boundary_patch = cov.patches.iter().map(|p| d.signed_distance(p.center) <= p.radius).collect();
        Arc::new(Self { basis: PolyBasis::new(degree), pu, boundary_patch, forms: OnceLock::new(), solver: OnceLock::new() })
    }

    pub fn pu(&self) -> &PartitionOfUnity {
        &self.pu
    }

    pub fn covering(&self) -> &Covering {
        self.pu.covering()
    }

    pub fn domain(&self) -> &Domain {
        self.pu.covering().domain()
    }

    pub fn basis(&self) -> &PolyBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn local_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn dofs(&self) -> usize {
        self.pu.len() * self.basis.dim()
    }

    pub fn dof(&self, patch: usize, alpha: usize) -> usize {
        patch * self.basis.dim() + alpha
    }

    /// Patch of a DOF and whether that patch meets the boundary.
    pub fn dof_patch(&self, dof: usize) -> (usize, bool) {
        let j = dof / self.basis.dim();
        (j, self.boundary_patch[j])
    }

    /// Fills `s` with the shape functions active at `x`.
    pub fn shapes(&self, x: [f64; 2], mode: NodeMode, order: u8, s: &mut Shapes) {
        self.pu.eval_into(x, mode, order, &mut s.pu);
        let d = self.basis.dim();
        let n = s.pu.len() * d;
        s.dim = d;
        s.value.resize(n, 0.0);
        s.grad.resize(n, [0.0; 2]);
        s.hess.resize(n, [0.0; 3]);
        let patches = &self.covering().patches;
        for (a, pv) in s.pu.iter().enumerate() {
            let p = &patches[pv.index as usize];
            self.basis.eval_into(p.center, p.radius, x, order, &mut s.basis);
            let f = pv.value;
            let fg = pv.grad;
            let fh = pv.hess;
            for i in 0..d {
                let k = a * d + i;
                let v = s.basis.value[i];
                s.value[k] = f * v;
                if order >= 1 {
                    let g = s.basis.grad[i];
                    s.grad[k] = [fg[0] * v + f * g[0], fg[1] * v + f * g[1]];
                    if order >= 2 {
                        let h = s.basis.hess[i];
                        s.hess[k] = [
                            fh[0] * v + f * h[0] + 2.0 * fg[0] * g[0],
                            fh[1] * v + f * h[1] + fg[0] * g[1] + fg[1] * g[0],
                            fh[2] * v + f * h[2] + 2.0 * fg[1] * g[1],
                        ];
                    }
                } else {
                    s.grad[k] = [0.0; 2];
                }
                if order < 2 {
                    s.hess[k] = [0.0; 3];
                }
            }
        }
    }

    /// Visits every node of the composite rule (optionally masked) with its shapes.
    pub fn for_each_node(&self, mask: Option<&CellMask>, order: u8, mut f: impl FnMut([f64; 2], f64, &Shapes)) {
        let rule = self.pu.rule();
        let mut s = Shapes::default();
        rule.for_each(mask, |x, w, mode| {
            self.shapes(x, mode, order, &mut s);
            f(x, w, &s);
        });
    }

    /// Coefficients representing a polynomial of degree ≤ m exactly.
    pub fn represent(self: &Arc<Self>, f: &dyn Field) -> Result<GfemFunction> {
        let d = self.basis.dim();
        let mut c = vec![0.0; self.dofs()];
        for (j, p) in self.covering().patches.iter().enumerate() {
            let local = crate::localspace::averaged_taylor(f, &self.basis, p.center, p.radius, p.flat_radius, self.degree())?;
            c[j * d..(j + 1) * d].copy_from_slice(&local);
        }
        Ok(GfemFunction::new(self.clone(), c))
    }

    /// Coefficients of the constant function 1.
    pub fn constant_one(&self) -> Vec<f64> {
        let d = self.basis.dim();
        let mut c = vec![0.0; self.dofs()];
        for j in 0..self.pu.len() {
            c[j * d] = 1.0;
        }
        c
    }

    /// Stiffness, mass and mean vector over the domain (cached).
    pub fn forms(&self) -> Arc<Forms> {
        self.forms.get_or_init(|| Arc::new(assemble_forms(self, FormRequest { mass: true, stiffness: true, hessian: false }, None))).clone()
    }

    fn pinned_solver(&self) -> Result<Arc<SpdSolver>> {
        self.solver
            .get_or_init(|| {
                let k = self.forms().stiffness.clone().expect("stiffness assembled");
                let keep: Vec<usize> = (1..self.dofs()).collect();
                let kr = k.submatrix(&keep, &keep);
                SpdSolver::new(&kr).map(Arc::new).map_err(|e| e.to_string())
            })
            .clone()
            .map_err(GfemError::SingularSystem)
    }
}

/// Element of a GFEM space.
#[derive(Clone, Debug)]
pub struct GfemFunction {
    space: Arc<GfemSpace>,
    pub coeffs: Vec<f64>,
}

impl GfemFunction {
    pub fn new(space: Arc<GfemSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.dofs());
        Self { space, coeffs }
    }

    pub fn zero(space: Arc<GfemSpace>) -> Self {
        let n = space.dofs();
        Self::new(space, vec![0.0; n])
    }

    pub fn space(&self) -> &Arc<GfemSpace> {
        &self.space
    }

    pub fn local(&self, patch: usize) -> &[f64] {
        let d = self.space.local_dim();
        &self.coeffs[patch * d..(patch + 1) * d]
    }

    pub fn eval(&self, x: [f64; 2]) -> Jet {
        let mut s = Shapes::default();
        self.space.shapes(x, NodeMode::Exact, 2, &mut s);
        s.combine(&self.coeffs)
    }

    /// Writes `dof patch alpha_x alpha_y value` lines.
    pub fn write_coefficients(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.space.local_dim();
        writeln!(w, "# dof patch ax ay value")?;
        for (i, v) in self.coeffs.iter().enumerate() {
            let (ax, ay) = self.space.basis().exps[i % d];
            writeln!(w, "{i} {} {ax} {ay} {v:.17e}", i / d)?;
        }
        Ok(())
    }

    /// Writes `x y value dx dy` samples.
    pub fn write_samples(&self, pts: &[[f64; 2]], w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# x y value dx dy")?;
        for p in pts {
            let j = self.eval(*p);
            writeln!(w, "{} {} {:.12e} {:.12e} {:.12e}", p[0], p[1], j.value, j.grad[0], j.grad[1])?;
        }
        Ok(())
    }
}

/// Which Gram matrices to assemble.
#[derive(Clone, Copy, Debug, Default)]
pub struct FormRequest {
    pub mass: bool,
    pub stiffness: bool,
    /// `∫ ∂xx u ∂xx v + ∂xy u ∂xy v + ∂yy u ∂yy v`.
    pub hessian: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Forms {
    pub mass: Option<CsrMatrix>,
    pub stiffness: Option<CsrMatrix>,
    pub hessian: Option<CsrMatrix>,
    /// `∫ S_i`.
    pub means: Vec<f64>,
}

/// Assembles the requested forms over the domain or a masked part of it.
pub fn assemble_forms(space: &GfemSpace, req: FormRequest, mask: Option<&CellMask>) -> Forms {
    let pu = space.pu();
    let d = space.local_dim();
    let dd = d * d;
    let np = pu.len();
    let nforms = [req.mass, req.stiffness, req.hessian].iter().filter(|b| **b).count();
    let slot = |f: usize| [req.mass, req.stiffness, req.hessian][..f].iter().filter(|b| **b).count();
    let (sm, sk, sh) = (slot(0), slot(1), slot(2));
    // blocks[j][form][idx] for k = overlaps(j)[idx] with k ≥ j
    let mut blocks: Vec<Vec<f64>> = (0..np).map(|j| vec![0.0; nforms * pu.overlaps(j).len() * dd]).collect();
    let mut means = vec![0.0; space.dofs()];
    let order = if req.hessian { 2 } else if req.stiffness { 1 } else { 0 };
    space.for_each_node(mask, order, |_, w, s| {
        let na = s.patches();
        for a in 0..na {
            let ja = s.pu[a].index as usize;
            let f0 = s.first_dof(a);
            for i in 0..d {
                means[f0 + i] += w * s.value[a * d + i];
            }
            let ov = pu.overlaps(ja);
            for b in 0..na {
                let jb = s.pu[b].index as usize;
                if jb < ja {
                    continue;
                }
                let idx = ov.binary_search(&(jb as u32)).expect("active patches overlap");
                let nb = ov.len();
                let blk = &mut blocks[ja];
                for i in 0..d {
                    let ka = a * d + i;
                    let (va, ga, ha) = (w * s.value[ka], s.grad[ka], s.hess[ka]);
                    let gw = [w * ga[0], w * ga[1]];
                    let hw = [w * ha[0], w * ha[1], w * ha[2]];
                    for jj in 0..d {
                        let kb = b * d + jj;
                        let e = i * d + jj;
                        if req.mass {
                            blk[(sm * nb + idx) * dd + e] += va * s.value[kb];
                        }
                        if req.stiffness {
                            let gb = s.grad[kb];
                            blk[(sk * nb + idx) * dd + e] += gw[0] * gb[0] + gw[1] * gb[1];
                        }
                        if req.hessian {
                            let hb = s.hess[kb];
                            blk[(sh * nb + idx) * dd + e] += hw[0] * hb[0] + hw[1] * hb[1] + hw[2] * hb[2];
                        }
                    }
                }
            }
        }
    });
    let build = |slot: usize| {
        let mut t = Vec::new();
        for j in 0..np {
            let ov = pu.overlaps(j);
            let nb = ov.len();
            for (idx, &k) in ov.iter().enumerate() {
                let k = k as usize;
                if k < j {
                    continue;
                }
                let blk = &blocks[j][(slot * nb + idx) * dd..(slot * nb + idx + 1) * dd];
                if blk.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for i in 0..d {
                    for jj in 0..d {
                        let v = blk[i * d + jj];
                        let (r, c) = ((j * d + i) as u32, (k * d + jj) as u32);
                        t.push((r, c, v));
                        if k != j {
                            t.push((c, r, v));
                        }
                    }
                }
            }
        }
        let n = space.dofs();
        let m = CsrMatrix::from_triplets(n, n, t);
        symmetrize(m)
    };
    Forms {
        mass: req.mass.then(|| build(sm)),
        stiffness: req.stiffness.then(|| build(sk)),
        hessian: req.hessian.then(|| build(sh)),
        means,
    }
}

/// Averages `A` and `Aᵀ` entrywise to remove roundoff asymmetry.
fn symmetrize(mut m: CsrMatrix) -> CsrMatrix {
    let t: Vec<f64> = (0..m.nrows).flat_map(|i| m.row(i).map(|(j, _)| (i, j)).collect::<Vec<_>>()).map(|(i, j)| m.get(j, i)).collect();
    for (v, w) in m.values.iter_mut().zip(t) {
        *v = 0.5 * (*v + w);
    }
    m
}

/// Point atom `weight · (−1)^order · (d/ds)^order` at arc position `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub s: f64,
    pub order: u8,
    pub weight: f64,
}

/// Neumann data: point atoms plus a Fourier density in `θ = 2πs/L`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDistribution {
    pub atoms: Vec<Atom>,
    /// `a_n`, `n ≥ 0`.
    pub cos: Vec<f64>,
    /// `b_n`, `n ≥ 0` (`b_0` unused).
    pub sin: Vec<f64>,
}

impl BoundaryDistribution {
    /// `δ_s − 1/L`.
    pub fn dirac(s: f64, length: f64) -> Self {
        Self { atoms: vec![Atom { s, order: 0, weight: 1.0 }], cos: vec![-1.0 / length], sin: vec![] }
    }

    /// `δ′_s`, already of zero mean.
    pub fn dipole(s: f64) -> Self {
        Self { atoms: vec![Atom { s, order: 1, weight: 1.0 }], cos: vec![], sin: vec![] }
    }

    /// `cos(nθ)`.
    pub fn cosine(n: usize) -> Self {
        let mut cos = vec![0.0; n + 1];
        cos[n] = 1.0;
        Self { atoms: vec![], cos, sin: vec![] }
    }

    pub fn density(&self, s: f64, length: f64) -> f64 {
        let th = std::f64::consts::TAU * s / length;
        let mut v = 0.0;
        for (n, a) in self.cos.iter().enumerate() {
            v += a * (n as f64 * th).cos();
        }
        for (n, b) in self.sin.iter().enumerate().skip(1) {
            v += b * (n as f64 * th).sin();
        }
        v
    }

    /// `⟨g, 1⟩`.
    pub fn compatibility(&self, length: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.order == 0).map(|a| a.weight).sum();
        atoms + self.cos.first().copied().unwrap_or(0.0) * length
    }

    pub fn max_order(&self) -> u8 {
        self.atoms.iter().map(|a| a.order).max().unwrap_or(0)
    }
}

/// Gauss points per boundary panel and panels per `h`.
const BOUNDARY_ORDER: usize = 8;
const BOUNDARY_PANELS_PER_H: f64 = 8.0;

/// `(d/ds)^order v(x(s))` from the value, gradient and Hessian of `v`.
pub fn tangential(j: &Jet, bp: &crate::geometry::BoundaryPoint, order: u8) -> f64 {
    let t = bp.tangent;
    match order {
        0 => j.value,
        1 => j.grad[0] * t[0] + j.grad[1] * t[1],
        _ => {
            let h = j.hess;
            t[0] * t[0] * h[0] + 2.0 * t[0] * t[1] * h[1] + t[1] * t[1] * h[2] + j.grad[0] * bp.second[0] + j.grad[1] * bp.second[1]
        }
    }
}

/// `⟨g, v|_{∂Ω}⟩` for a field given by its jet.
pub fn pair_boundary(g: &BoundaryDistribution, domain: &Domain, panels: usize, mut v: impl FnMut([f64; 2]) -> Jet) -> f64 {
    let mut total = 0.0;
    for a in &g.atoms {
        let bp = domain.boundary_point(a.s);
        let sign = if a.order % 2 == 0 { 1.0 } else { -1.0 };
        total += a.weight * sign * tangential(&v(bp.point), &bp, a.order);
    }
    if g.cos.iter().chain(g.sin.iter()).any(|c| *c != 0.0) {
        let len = domain.length();
        for (s, w) in boundary_nodes(domain, BOUNDARY_ORDER, panels) {
            let bp = domain.boundary_point(s);
            total += w * g.density(s, len) * v(bp.point).value;
        }
    }
    total
}

/// Load vector `ℓ_i = ⟨g, S_i|_{∂Ω}⟩`.
pub fn load_vector(space: &GfemSpace, g: &BoundaryDistribution) -> Vec<f64> {
    let d = space.domain();
    let mut load = vec![0.0; space.dofs()];
    let mut s = Shapes::default();
    let order = g.max_order();
    for a in &g.atoms {
        let bp = d.boundary_point(a.s);
        space.shapes(bp.point, NodeMode::Exact, order, &mut s);
        let sign = if a.order % 2 == 0 { 1.0 } else { -1.0 };
        for (pa, pv) in s.pu.iter().enumerate() {
            for i in 0..s.dim {
                let k = pa * s.dim + i;
                let j = Jet { value: s.value[k], grad: s.grad[k], hess: s.hess[k] };
                load[pv.index as usize * s.dim + i] += a.weight * sign * tangential(&j, &bp, a.order);
            }
        }
    }
    if g.cos.iter().chain(g.sin.iter()).any(|c| *c != 0.0) {
        let len = d.length();
        let panels = (len / space.covering().h * BOUNDARY_PANELS_PER_H).ceil() as usize;
        for (sp, w) in boundary_nodes(d, BOUNDARY_ORDER, panels) {
            let bp = d.boundary_point(sp);
            space.shapes(bp.point, NodeMode::Exact, 0, &mut s);
            let gw = w * g.density(sp, len);
            for (pa, pv) in s.pu.iter().enumerate() {
                for i in 0..s.dim {
                    load[pv.index as usize * s.dim + i] += gw * s.value[pa * s.dim + i];
                }
            }
        }
    }
    load
}

/// Discrete Neumann solution with its diagnostics.
#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub u: GfemFunction,
    pub load: Vec<f64>,
    /// `max_i |(K c − ℓ)_i| / max_i |ℓ_i|`.
    pub residual: f64,
    /// `∫_Ω u_S`.
    pub mean: f64,
}

/// Solves `B(u_S, v) = ⟨g, v⟩` for all `v ∈ S` with `∫ u_S = 0`.
///
/// The constant DOF of patch 0 is pinned to make the system definite; the
/// mean is removed afterwards along the coefficients of the constant 1.
pub fn solve_neumann(space: &Arc<GfemSpace>, g: &BoundaryDistribution) -> Result<NeumannSolution> {
    let comp = g.compatibility(space.domain().length());
    if comp.abs() > 1e-10 {
        return Err(GfemError::CompatibilityError(comp));
    }
    let load = load_vector(space, g);
    solve_with_load(space, load)
}

pub fn solve_with_load(space: &Arc<GfemSpace>, load: Vec<f64>) -> Result<NeumannSolution> {
    let forms = space.forms();
    let k = forms.stiffness.as_ref().expect("stiffness assembled");
    let n = space.dofs();
    let solver = space.pinned_solver()?;
    let keep: Vec<usize> = (1..n).collect();
    let kr = k.submatrix(&keep, &keep);
    let x = solver.solve_refined(&kr, &load[1..], 3);
    let mut c = vec![0.0; n];
    c[1..].copy_from_slice(&x);
    let one = space.constant_one();
    let q = &forms.means;
    let t = dot(q, &c) / dot(q, &one);
    for (ci, oi) in c.iter_mut().zip(&one) {
        *ci -= t * oi;
    }
    let kc = k.matvec(&c);
    let r: Vec<f64> = kc.iter().zip(&load).map(|(a, b)| a - b).collect();
    let ln = norm_inf(&load);
    let residual = if ln > 0.0 { norm_inf(&r) / ln } else { norm_inf(&r) };
    let mean = dot(q, &c);
    if !residual.is_finite() {
        return Err(GfemError::SingularSystem("non-finite residual".into()));
    }
    Ok(NeumannSolution { u: GfemFunction::new(space.clone(), c), load, residual, mean })
}

/// DOFs whose patch ball closure lies inside the admissible set (and the domain).
pub fn restrict_to_compact(space: &GfemSpace, a: &AdmissibleSet) -> Vec<usize> {
    let cov = space.covering();
    let d = cov.domain();
    let dim = space.local_dim();
    let mut out = Vec::new();
    if a.is_empty() {
        return out;
    }
    for (j, p) in cov.patches.iter().enumerate() {
        if d.signed_distance(p.center) > p.radius && a.mask.contains_disk(p.center, p.radius) {
            out.extend(j * dim..(j + 1) * dim);
        }
    }
    out
}

/// Discrete-harmonic extension: DOFs of `S^<(A₁)` solved so that `B(w, χ) = 0`
/// for all `χ ∈ S^<(A₁)`, all other DOFs taken from `seed`.
#[derive(Clone, Debug)]
pub struct DiscreteHarmonic {
    pub w: GfemFunction,
    /// `max_{i ∈ I} |B(w, e_i)| / max |K seed|`.
    pub residual: f64,
    pub interior_dofs: usize,
}

pub fn discrete_harmonic(space: &Arc<GfemSpace>, a1: &AdmissibleSet, seed: &[f64]) -> Result<DiscreteHarmonic> {
    let k = space.forms().stiffness.clone().expect("stiffness assembled");
    let inner = restrict_to_compact(space, a1);
    let mut w = seed.to_vec();
    if inner.is_empty() {
        return Ok(DiscreteHarmonic { w: GfemFunction::new(space.clone(), w), residual: 0.0, interior_dofs: 0 });
    }
    let ks = k.matvec(seed);
    let rhs: Vec<f64> = inner.iter().map(|&i| -ks[i]).collect();
    let kii = k.submatrix(&inner, &inner);
    let solver = SpdSolver::new(&kii)?;
    let delta = solver.solve_refined(&kii, &rhs, 3);
    for (t, &i) in inner.iter().enumerate() {
        w[i] += delta[t];
    }
    let kw = k.matvec(&w);
    let scale = norm_inf(&ks).max(f64::MIN_POSITIVE);
    let residual = inner.iter().map(|&i| kw[i].abs()).fold(0.0, f64::max) / scale;
    Ok(DiscreteHarmonic { w: GfemFunction::new(space.clone(), w), residual, interior_dofs: inner.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{admissible_hull, build_covering, DiskRegion};
    use crate::field::Polynomial;
    use crate::geometry::make_disk;
    use crate::partition::build_flat_top_pu;
    use std::f64::consts::PI;

    fn space(h: f64, m: usize) -> Arc<GfemSpace> {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let c = Arc::new(build_covering(&d, h, 0.1).unwrap());
        GfemSpace::new(Arc::new(build_flat_top_pu(c).unwrap()), m)
    }

    #[test]
    fn stiffness_properties() {
        let s = space(0.25, 2);
        let f = s.forms();
        let k = f.stiffness.as_ref().unwrap();
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
        let k1 = k.matvec(&s.constant_one());
        assert!(norm_inf(&k1) <= 1e-8 * k.max_abs(), "{}", norm_inf(&k1));
        let x = s.represent(&Polynomial::new(vec![(1, 0, 1.0)])).unwrap();
        assert!((k.quad_form(&x.coeffs) - PI).abs() < 1e-6);
        let area: f64 = dot(&f.means, &s.constant_one());
        assert!((area - PI).abs() < 1e-8);
        let m = f.mass.as_ref().unwrap();
        assert!((m.quad_form(&x.coeffs) - PI / 4.0).abs() < 1e-8);
    }

    #[test]
    fn polynomial_representation_is_exact() {
        let s = space(0.25, 3);
        let p = Polynomial::new(vec![(3, 0, 1.0), (1, 1, -0.5), (0, 2, 2.0), (0, 0, 0.3)]);
        let u = s.represent(&p).unwrap();
        for x in [[0.1, 0.2], [-0.5, 0.6], [0.93, -0.2]] {
            let j = u.eval(x);
            assert!((j.value - p.value(x)).abs() < 1e-10);
            assert!((j.grad[0] - p.grad(x)[0]).abs() < 1e-8);
            assert!((j.hess[2] - p.hess(x)[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn boundary_pairings() {
        let d = make_disk(1.0, [0.0, 0.0]).unwrap();
        let x = |p: [f64; 2]| Jet { value: p[0], grad: [1.0, 0.0], hess: [0.0; 3] };
        let y = |p: [f64; 2]| Jet { value: p[1], grad: [0.0, 1.0], hess: [0.0; 3] };
        let dirac = BoundaryDistribution { atoms: vec![Atom { s: 0.0, order: 0, weight: 1.0 }], cos: vec![], sin: vec![] };
        assert!((pair_boundary(&dirac, &d, 64, x) - 1.0).abs() < 1e-14);
        assert!((pair_boundary(&BoundaryDistribution::dipole(0.0), &d, 64, y) + 1.0).abs() < 1e-14);
        assert!((pair_boundary(&BoundaryDistribution::cosine(1), &d, 64, x) - PI).abs() < 1e-12);
        // second tangential derivative of x along the circle at s = 0 is −1
        let dd = BoundaryDistribution { atoms: vec![Atom { s: 0.0, order: 2, weight: 1.0 }], cos: vec![], sin: vec![] };
        assert!((pair_boundary(&dd, &d, 64, x) + 1.0).abs() < 1e-14);
        assert!(BoundaryDistribution::dirac(0.0, 2.0 * PI).compatibility(2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn load_matches_pairing_of_represented_function() {
        let s = space(0.25, 2);
        let u = s.represent(&Polynomial::new(vec![(2, 0, 1.0), (0, 1, 1.0)])).unwrap();
        for g in [BoundaryDistribution::dirac(0.7, 2.0 * PI), BoundaryDistribution::dipole(1.3), BoundaryDistribution::cosine(2)] {
            let l = load_vector(&s, &g);
            let direct = pair_boundary(&g, s.domain(), 512, |p| u.eval(p));
            assert!((dot(&l, &u.coeffs) - direct).abs() < 1e-9, "{} {}", dot(&l, &u.coeffs), direct);
        }
    }

    #[test]
    fn solves_smooth_problem() {
        let s = space(0.2, 2);
        let sol = solve_neumann(&s, &BoundaryDistribution::cosine(1)).unwrap();
        assert!(sol.residual < 1e-8, "residual {}", sol.residual);
        assert!(sol.mean.abs() < 1e-9);
        for x in [[0.2, 0.1], [-0.7, 0.3], [0.0, -0.95]] {
            assert!((sol.u.eval(x).value - x[0]).abs() < 1e-6);
        }
        let zero = solve_neumann(&s, &BoundaryDistribution::default()).unwrap();
        assert!(norm_inf(&zero.u.coeffs) == 0.0);
        let bad = BoundaryDistribution { atoms: vec![Atom { s: 0.0, order: 0, weight: 1.0 }], cos: vec![], sin: vec![] };
        assert!(matches!(solve_neumann(&s, &bad), Err(GfemError::CompatibilityError(_))));
    }

    #[test]
    fn compact_restriction_and_harmonic_extension() {
        let s = space(0.2, 2);
        let pu = s.pu();
        let a1 = admissible_hull(pu.covering(), pu, DiskRegion { center: [0.0, 0.0], radius: 0.6 });
        let dofs = restrict_to_compact(&s, &a1);
        assert!(!dofs.is_empty());
        let mut shapes = Shapes::default();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        use rand::RngExt;
        let inner: std::collections::HashSet<usize> = dofs.iter().map(|d| d / s.local_dim()).collect();
        for _ in 0..200 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if !s.domain().inside(p) || a1.contains(p) {
                continue;
            }
            s.shapes(p, NodeMode::Exact, 0, &mut shapes);
            for pv in &shapes.pu {
                assert!(!inner.contains(&(pv.index as usize)) || pv.value == 0.0);
            }
        }
        let empty = AdmissibleSet { indices: vec![], mask: CellMask::empty(a1.mask.grid) };
        assert!(restrict_to_compact(&s, &empty).is_empty());
        // harmonic seed x² − y² stays put
        let h = s.represent(&Polynomial::new(vec![(2, 0, 1.0), (0, 2, -1.0)])).unwrap();
        let dh = discrete_harmonic(&s, &a1, &h.coeffs).unwrap();
        assert!(dh.residual < 1e-8);
        let diff: f64 = dh.w.coeffs.iter().zip(&h.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
        let same = discrete_harmonic(&s, &empty, &h.coeffs).unwrap();
        assert_eq!(same.w.coeffs, h.coeffs);
    }
}
