//! Local polynomial spaces on patches, their norm inequalities, the averaged
//! Taylor quasi-interpolant and the super-approximation transfer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{GfemFunction, GfemSpace};
use crate::covering::DiskRegion;
use crate::error::{GfemError, Result};
use crate::field::{mono_deriv, Field};
use crate::quadrature::{ball_rule, QuadRule};

/// Scaled centred monomials `((x − c)/R)^α`, `|α| ≤ m`, ordered by total degree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyBasis {
    pub degree: usize,
    pub exps: Vec<(u32, u32)>,
}

/// Values, gradients and Hessians of every basis monomial at one point.
#[derive(Clone, Debug, Default)]
pub struct BasisJet {
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<[f64; 3]>,
}

impl PolyBasis {
    pub fn new(degree: usize) -> Self {
        let mut exps = Vec::new();
        for d in 0..=degree as u32 {
            for b in 0..=d {
                exps.push((d - b, b));
            }
        }
        Self { degree, exps }
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    /// Position of `ξᵖ ηᵠ` in the basis.
    pub fn index(p: u32, q: u32) -> usize {
        let d = (p + q) as usize;
        d * (d + 1) / 2 + q as usize
    }

    /// Evaluates the basis of a patch with centre `c` and radius `r`.
    pub fn eval_into(&self, c: [f64; 2], r: f64, x: [f64; 2], order: u8, out: &mut BasisJet) {
        let n = self.dim();
        let m = self.degree;
        let xi = (x[0] - c[0]) / r;
        let eta = (x[1] - c[1]) / r;
        let mut px = [1.0f64; 12];
        let mut py = [1.0f64; 12];
        for k in 1..=m {
            px[k] = px[k - 1] * xi;
            py[k] = py[k - 1] * eta;
        }
        out.value.resize(n, 0.0);
        out.grad.resize(n, [0.0; 2]);
        out.hess.resize(n, [0.0; 3]);
        let ir = 1.0 / r;
        for (i, &(p, q)) in self.exps.iter().enumerate() {
            let (p, q) = (p as usize, q as usize);
            out.value[i] = px[p] * py[q];
            if order >= 1 {
                let dx = if p > 0 { p as f64 * px[p - 1] * py[q] } else { 0.0 };
                let dy = if q > 0 { q as f64 * px[p] * py[q - 1] } else { 0.0 };
                out.grad[i] = [dx * ir, dy * ir];
                if order >= 2 {
                    let ir2 = ir * ir;
                    let xx = if p > 1 { (p * (p - 1)) as f64 * px[p - 2] * py[q] } else { 0.0 };
                    let xy = if p > 0 && q > 0 { (p * q) as f64 * px[p - 1] * py[q - 1] } else { 0.0 };
                    let yy = if q > 1 { (q * (q - 1)) as f64 * px[p] * py[q - 2] } else { 0.0 };
                    out.hess[i] = [xx * ir2, xy * ir2, yy * ir2];
                }
            }
        }
    }

    /// `∂ₓᵃ ∂ᵧᵇ` of basis element `i` for a patch `(c, r)`.
    pub fn partial(&self, i: usize, c: [f64; 2], r: f64, x: [f64; 2], a: u32, b: u32) -> f64 {
        let (p, q) = self.exps[i];
        mono_deriv((x[0] - c[0]) / r, p, a) * mono_deriv((x[1] - c[1]) / r, q, b) / r.powi((a + b) as i32)
    }

    /// Evaluates `Σ coeffs_i p_i` and its derivatives of order up to 2.
    pub fn combine(&self, coeffs: &[f64], c: [f64; 2], r: f64, x: [f64; 2]) -> crate::field::Jet {
        let mut jet = BasisJet::default();
        self.eval_into(c, r, x, 2, &mut jet);
        let mut out = crate::field::Jet::default();
        for i in 0..self.dim() {
            out.value += coeffs[i] * jet.value[i];
            for a in 0..2 {
                out.grad[a] += coeffs[i] * jet.grad[i][a];
            }
            for a in 0..3 {
                out.hess[a] += coeffs[i] * jet.hess[i][a];
            }
        }
        out
    }

    /// Coefficients of `x ↦ a + b·(x − c)` for a patch `(c, r)`.
    pub fn affine(&self, value_at_center: f64, slope: [f64; 2], r: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[0] = value_at_center;
        if self.degree >= 1 {
            v[1] = slope[0] * r;
            v[2] = slope[1] * r;
        }
        v
    }
}

/// Element of a local space.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFunction {
    pub patch: usize,
    pub coeffs: Vec<f64>,
}

/// Multi-indices `(a, b)` with `a + b ≤ l`, each counted once.
pub fn multi_indices(l: u32) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    for k in 0..=l {
        for b in 0..=k {
            v.push((k - b, b));
        }
    }
    v
}

/// `H^l` Gram matrix of the basis of patch `(c, r)` over the rule, derivative orders `lo..=l`.
pub fn gram_on_rule(basis: &PolyBasis, c: [f64; 2], r: f64, rule: &QuadRule, lo: u32, l: u32) -> DMatrix<f64> {
    let n = basis.dim();
    let mut g = DMatrix::zeros(n, n);
    let idx: Vec<(u32, u32)> = multi_indices(l).into_iter().filter(|(a, b)| a + b >= lo).collect();
    let mut vals = vec![0.0; n];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        for &(a, b) in &idx {
            for (i, v) in vals.iter_mut().enumerate() {
                *v = basis.partial(i, c, r, *p, a, b);
            }
            for i in 0..n {
                let wi = w * vals[i];
                if wi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    g[(i, j)] += wi * vals[j];
                }
            }
        }
    }
    g
}

/// `H^l` Gram matrix on the ball `(bc, br)` of the patch basis `(c, r)`.
pub fn ball_gram(basis: &PolyBasis, c: [f64; 2], r: f64, bc: [f64; 2], br: f64, l: u32) -> DMatrix<f64> {
    let rule = ball_rule(bc, br, 2 * basis.degree);
    gram_on_rule(basis, c, r, &rule, 0, l)
}

/// Largest `λ` with `A v = λ B v`, `B` positive definite.
pub fn max_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(*generalized_eigenvalues(a, b)?.last().unwrap_or(&0.0))
}

/// Sorted eigenvalues of the pencil `(A, B)`, after diagonal equilibration of `B`.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = b.nrows();
    let d: Vec<f64> = (0..n).map(|i| 1.0 / b[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scale = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] * d[j]);
    let bs = scale(b);
    let as_ = scale(a);
    let chol = nalgebra::Cholesky::new(bs.clone()).ok_or_else(|| GfemError::DegenerateBasis("Gram matrix not positive definite".into()))?;
    let l = chol.l();
    let li = l.clone().try_inverse().ok_or_else(|| GfemError::DegenerateBasis("singular Cholesky factor".into()))?;
    let c = &li * as_ * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ev)
}

/// Measured constant of `‖w‖_{H^l(ω)} ≤ A ‖w‖_{H^l(ω*)}` on concentric balls.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NormEquivalence {
    /// Largest ratio of squared norms.
    pub eigenvalue: f64,
    /// `√eigenvalue`.
    pub constant: f64,
}

pub fn verify_norm_equivalence(basis: &PolyBasis, l: u32, radius: f64, flat_radius: f64) -> Result<NormEquivalence> {
    if l as usize > basis.degree {
        return Err(GfemError::Precondition(format!("norm order {l} exceeds local degree {}", basis.degree)));
    }
    let c = [0.0, 0.0];
    let outer = ball_gram(basis, c, radius, c, radius, l);
    let inner = ball_gram(basis, c, radius, c, flat_radius, l);
    let ev = max_generalized_eigenvalue(&outer, &inner)?;
    Ok(NormEquivalence { eigenvalue: ev, constant: ev.sqrt() })
}

/// `B` with `‖w‖_{H^t} ≤ B d^{s−t} ‖w‖_{H^s}` on a ball of the given radius (`d` = diameter).
pub fn verify_inverse_inequality(basis: &PolyBasis, s: u32, t: u32, radius: f64) -> Result<f64> {
    if !(s <= t && t as usize <= basis.degree) {
        return Err(GfemError::Precondition(format!("need s ≤ t ≤ {}", basis.degree)));
    }
    let c = [0.0, 0.0];
    let gt = ball_gram(basis, c, radius, c, radius, t);
    let gs = ball_gram(basis, c, radius, c, radius, s);
    let ev = max_generalized_eigenvalue(&gt, &gs)?;
    Ok(ev.sqrt() * (2.0 * radius).powi(t as i32 - s as i32))
}

/// Rayleigh quotient `‖w‖_{H^t}/‖w‖_{H^s}` of one local function on a ball, with
/// seminorms when `semi` is set.
pub fn local_norm_ratio(basis: &PolyBasis, coeffs: &[f64], radius: f64, s: u32, t: u32, semi: bool) -> f64 {
    let c = [0.0, 0.0];
    let rule = ball_rule(c, radius, 2 * basis.degree);
    let v = DVector::from_column_slice(coeffs);
    let gt = gram_on_rule(basis, c, radius, &rule, if semi { t } else { 0 }, t);
    let gs = gram_on_rule(basis, c, radius, &rule, if semi { s } else { 0 }, s);
    (v.dot(&(&gt * &v)) / v.dot(&(&gs * &v))).sqrt()
}

/// Bump weight on the averaging ball, unnormalised.
fn averaging_weight(d2: f64, rho2: f64) -> f64 {
    let t = 1.0 - d2 / rho2;
    if t > 0.0 {
        t * t
    } else {
        0.0
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Taylor polynomial of degree `deg` averaged over the ball `(c, rho)`, in the
/// basis of the patch `(c, r)`.
pub fn averaged_taylor(f: &dyn Field, basis: &PolyBasis, c: [f64; 2], r: f64, rho: f64, deg: usize) -> Result<Vec<f64>> {
    if deg > basis.degree {
        return Err(GfemError::Precondition(format!("Taylor degree {deg} exceeds local degree {}", basis.degree)));
    }
    let rule = ball_rule(c, rho, 2 * deg + 10);
    let mut coeffs = vec![0.0; basis.dim()];
    let mut total = 0.0;
    let mut fact = vec![1.0f64; deg + 1];
    for k in 1..=deg {
        fact[k] = fact[k - 1] * k as f64;
    }
    let rpow: Vec<f64> = (0..=deg).map(|k| r.powi(k as i32)).collect();
    for (y, w) in rule.points.iter().zip(&rule.weights) {
        let wt = w * averaging_weight((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2), rho * rho);
        if wt == 0.0 {
            continue;
        }
        total += wt;
        let dx = y[0] - c[0];
        let dy = y[1] - c[1];
        for bd in 0..=deg as u32 {
            for b2 in 0..=bd {
                let b1 = bd - b2;
                let df = f.partial(*y, b1, b2) / (fact[b1 as usize] * fact[b2 as usize]);
                if df == 0.0 {
                    continue;
                }
                // (x − y)^β = Π ((x − c) − (y − c))^{β_d}
                for k1 in 0..=b1 {
                    let t1 = binomial(b1, k1) * (-dx).powi((b1 - k1) as i32);
                    for k2 in 0..=b2 {
                        let t2 = binomial(b2, k2) * (-dy).powi((b2 - k2) as i32);
                        coeffs[PolyBasis::index(k1, k2)] += wt * df * t1 * t2 * rpow[(k1 + k2) as usize];
                    }
                }
            }
        }
    }
    for v in &mut coeffs {
        *v /= total;
    }
    Ok(coeffs)
}

/// `Σ_j φ_j · (averaged Taylor polynomial of degree l−1 of f on ω*_j)`.
///
/// With `support`, patches whose ball misses the disk get zero coefficients.
pub fn quasi_interpolant(f: &dyn Field, space: &std::sync::Arc<GfemSpace>, l: usize, support: Option<DiskRegion>) -> Result<GfemFunction> {
    if l == 0 || l - 1 > space.degree() {
        return Err(GfemError::Precondition(format!("need 1 ≤ l ≤ m + 1, got l = {l}")));
    }
    let cov = space.covering();
    let dim = space.local_dim();
    let mut coeffs = vec![0.0; space.dofs()];
    for (j, p) in cov.patches.iter().enumerate() {
        if let Some(s) = support {
            if (p.center[0] - s.center[0]).hypot(p.center[1] - s.center[1]) >= s.radius + p.radius {
                continue;
            }
        }
        let local = averaged_taylor(f, space.basis(), p.center, p.radius, p.flat_radius, l - 1)?;
        coeffs[j * dim..(j + 1) * dim].copy_from_slice(&local);
    }
    Ok(GfemFunction::new(space.clone(), coeffs))
}

/// Result of the super-approximation transfer.
#[derive(Clone, Debug)]
pub struct SuperApprox {
    pub function: GfemFunction,
    /// `max_j |∫_{ω_j}(ρ w_j − w̃_j)| / ‖ρ w_j‖_{L²(ω_j)}`.
    pub max_mean_residual: f64,
}

/// Local `H¹(ω_j)` projections of `ρ w_j` onto the local space.
pub fn superapprox_transfer(rho: &dyn Field, w: &GfemFunction) -> Result<SuperApprox> {
    let space = w.space();
    let basis = space.basis();
    let dim = basis.dim();
    let cov = space.covering();
    let mut out = vec![0.0; w.coeffs.len()];
    let mut worst = 0.0f64;
    let mut cache: Option<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> = None;
    let mut jet = BasisJet::default();
    for (j, p) in cov.patches.iter().enumerate() {
        let wj = &w.coeffs[j * dim..(j + 1) * dim];
        if wj.iter().all(|v| *v == 0.0) {
            continue;
        }
        let rule = ball_rule(p.center, p.radius, 2 * basis.degree + 10);
        if cache.as_ref().map(|(r, _)| *r != p.radius).unwrap_or(true) {
            let g = gram_on_rule(basis, p.center, p.radius, &rule, 0, 1);
            let chol = nalgebra::Cholesky::new(g).ok_or_else(|| GfemError::DegenerateBasis("local H1 Gram matrix".into()))?;
            cache = Some((p.radius, chol));
        }
        let chol = &cache.as_ref().unwrap().1;
        let mut rhs = DVector::zeros(dim);
        let mut samples = Vec::with_capacity(rule.len());
        for (x, wt) in rule.points.iter().zip(&rule.weights) {
            basis.eval_into(p.center, p.radius, *x, 1, &mut jet);
            let mut v = 0.0;
            let mut g = [0.0; 2];
            for i in 0..dim {
                v += wj[i] * jet.value[i];
                g[0] += wj[i] * jet.grad[i][0];
                g[1] += wj[i] * jet.grad[i][1];
            }
            let r = rho.value(*x);
            let rg = rho.grad(*x);
            let pv = r * v;
            let pg = [rg[0] * v + r * g[0], rg[1] * v + r * g[1]];
            for i in 0..dim {
                rhs[i] += wt * (pv * jet.value[i] + pg[0] * jet.grad[i][0] + pg[1] * jet.grad[i][1]);
            }
            samples.push((pv, *wt));
        }
        let sol = chol.solve(&rhs);
        out[j * dim..(j + 1) * dim].copy_from_slice(sol.as_slice());
        // mean residual ∫(ρw_j − w̃_j) on the same rule
        let mut mean = 0.0;
        let mut l2 = 0.0;
        for ((x, _), (pv, wt)) in rule.points.iter().zip(&rule.weights).zip(&samples) {
            basis.eval_into(p.center, p.radius, *x, 0, &mut jet);
            let wt_v: f64 = (0..dim).map(|i| sol[i] * jet.value[i]).sum();
            mean += wt * (pv - wt_v);
            l2 += wt * pv * pv;
        }
        if l2 > 0.0 {
            worst = worst.max(mean.abs() / l2.sqrt());
        }
    }
    Ok(SuperApprox { function: GfemFunction::new(space.clone(), out), max_mean_residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, ExpCos, Polynomial, SinCos};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn basis_layout() {
        let b = PolyBasis::new(3);
        assert_eq!(b.dim(), 10);
        for (i, &(p, q)) in b.exps.iter().enumerate() {
            assert_eq!(PolyBasis::index(p, q), i);
        }
        assert_eq!(b.exps[1], (1, 0));
        assert_eq!(b.exps[2], (0, 1));
    }

    #[test]
    fn eval_matches_partial() {
        let b = PolyBasis::new(4);
        let c = [0.2, -0.1];
        let r = 0.3;
        let x = [0.31, 0.05];
        let mut jet = BasisJet::default();
        b.eval_into(c, r, x, 2, &mut jet);
        for i in 0..b.dim() {
            assert!((jet.value[i] - b.partial(i, c, r, x, 0, 0)).abs() < 1e-14);
            assert!((jet.grad[i][0] - b.partial(i, c, r, x, 1, 0)).abs() < 1e-12);
            assert!((jet.grad[i][1] - b.partial(i, c, r, x, 0, 1)).abs() < 1e-12);
            assert!((jet.hess[i][1] - b.partial(i, c, r, x, 1, 1)).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_ratio_is_area_ratio() {
        let b = PolyBasis::new(0);
        let ne = verify_norm_equivalence(&b, 0, 1.0, 0.05).unwrap();
        assert!((ne.eigenvalue - 400.0).abs() < 1e-8);
    }

    #[test]
    fn norm_equivalence_matches_random_search() {
        let b = PolyBasis::new(1);
        let ne = verify_norm_equivalence(&b, 1, 1.0, 0.5).unwrap();
        let c = [0.0, 0.0];
        let outer = ball_gram(&b, c, 1.0, c, 1.0, 1);
        let inner = ball_gram(&b, c, 1.0, c, 0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut best = 0.0f64;
        for _ in 0..200_000 {
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            best = best.max(v.dot(&(&outer * &v)) / v.dot(&(&inner * &v)));
        }
        assert!(best <= ne.eigenvalue * (1.0 + 1e-12));
        assert!(best >= 0.99 * ne.eigenvalue, "{best} vs {}", ne.eigenvalue);
    }

    #[test]
    fn norm_equivalence_translation_invariant() {
        let b = PolyBasis::new(2);
        let g0 = ball_gram(&b, [0.0, 0.0], 0.1, [0.0, 0.0], 0.1, 1);
        let g1 = ball_gram(&b, [3.0, -2.0], 0.1, [3.0, -2.0], 0.1, 1);
        assert!((g0 - g1).abs().max() < 1e-10);
    }

    #[test]
    fn inverse_example_on_unit_ball() {
        let b = PolyBasis::new(1);
        // Q = x on the unit ball: ‖∂ₓQ‖/‖Q‖ = √π / (√π/2)
        let ratio = local_norm_ratio(&b, &[0.0, 1.0, 0.0], 1.0, 0, 1, true);
        assert!((ratio - 2.0).abs() < 1e-12);
        // constants: H^t and H^s norms agree
        let r = local_norm_ratio(&b, &[1.0, 0.0, 0.0], 1.0, 0, 1, false);
        assert!((r - 1.0).abs() < 1e-12);
        assert!(verify_inverse_inequality(&b, 0, 1, 1.0).unwrap() >= 2.0);
    }

    #[test]
    fn inverse_constant_dilation() {
        let b = PolyBasis::new(3);
        let a = verify_inverse_inequality(&b, 0, 2, 0.01).unwrap();
        let c = verify_inverse_inequality(&b, 0, 2, 0.005).unwrap();
        assert!((a / c - 1.0).abs() < 0.01, "{a} {c}");
    }

    #[test]
    fn averaged_taylor_reproduces_polynomials() {
        let b = PolyBasis::new(3);
        let c = [0.4, -0.2];
        let f = Polynomial::new(vec![(3, 0, 1.0), (1, 2, -2.0), (0, 1, 0.5), (0, 0, 3.0)]);
        let coeffs = averaged_taylor(&f, &b, c, 0.1, 0.01, 3).unwrap();
        for x in [[0.45, -0.2], [0.35, -0.25], [0.4, -0.13]] {
            assert!((b.combine(&coeffs, c, 0.1, x).value - f.value(x)).abs() < 1e-12);
        }
        let one = averaged_taylor(&Constant(1.0), &b, c, 0.1, 0.01, 2).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-14 && one[1..].iter().all(|v| v.abs() < 1e-14));
        assert!(averaged_taylor(&f, &b, c, 0.1, 0.01, 4).is_err());
    }

    #[test]
    fn averaged_taylor_error_rate() {
        // f = exp(x), degree 1: sup error on the patch is O(r²)
        let b = PolyBasis::new(1);
        let f = ExpCos;
        let mut pts = Vec::new();
        for r in [0.2, 0.1, 0.05, 0.025] {
            let c = [0.3, 0.0];
            let coeffs = averaged_taylor(&f, &b, c, r, 0.05 * r, 1).unwrap();
            let mut err = 0.0f64;
            for k in 0..64 {
                let t = k as f64 / 64.0 * 2.0 * PI;
                let x = [c[0] + r * t.cos(), c[1] + r * t.sin()];
                err = err.max((b.combine(&coeffs, c, r, x).value - f.value(x)).abs());
            }
            pts.push((r, err));
        }
        let slope = crate::study::fit_rate(&pts).unwrap().slope;
        assert!(slope >= 1.75, "slope {slope}");
    }

    proptest! {
        #[test]
        fn averaged_taylor_commutes_with_polynomial_shift(a in -2.0..2.0f64, bx in -2.0..2.0f64, cxy in -2.0..2.0f64) {
            let basis = PolyBasis::new(2);
            let c = [0.1, 0.2];
            let q = Polynomial::new(vec![(0, 0, a), (1, 0, bx), (1, 1, cxy)]);
            let sum = crate::field::FnField(|x: [f64; 2], i: u32, j: u32| SinCos.partial(x, i, j) + q.partial(x, i, j));
            let t1 = averaged_taylor(&sum, &basis, c, 0.2, 0.02, 2).unwrap();
            let t0 = averaged_taylor(&SinCos, &basis, c, 0.2, 0.02, 2).unwrap();
            let tq = averaged_taylor(&q, &basis, c, 0.2, 0.02, 2).unwrap();
            for i in 0..basis.dim() {
                prop_assert!((t1[i] - t0[i] - tq[i]).abs() < 1e-12);
            }
        }
    }
}
