//! Scalar fields on the plane with analytic partial derivatives.

/// Value, gradient and Hessian `(xx, xy, yy)` at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

/// A smooth scalar field; `partial(x, a, b)` is `∂ₓᵃ ∂ᵧᵇ f(x)`.
pub trait Field: Sync {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64;

    fn value(&self, x: [f64; 2]) -> f64 {
        self.partial(x, 0, 0)
    }

    fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        [self.partial(x, 1, 0), self.partial(x, 0, 1)]
    }

    /// `(xx, xy, yy)`.
    fn hess(&self, x: [f64; 2]) -> [f64; 3] {
        [self.partial(x, 2, 0), self.partial(x, 1, 1), self.partial(x, 0, 2)]
    }

    fn jet(&self, x: [f64; 2]) -> Jet {
        Jet { value: self.value(x), grad: self.grad(x), hess: self.hess(x) }
    }
}

/// Field given by a closure over `(x, a, b)`.
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2], u32, u32) -> f64 + Sync> Field for FnField<F> {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64 {
        (self.0)(x, a, b)
    }
}

/// `sin(x)·cos(y)`.
pub struct SinCos;

impl Field for SinCos {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64 {
        cyc_sin(x[0], a) * cyc_cos(x[1], b)
    }
}

/// `eˣ·cos(y)`, harmonic.
pub struct ExpCos;

impl Field for ExpCos {
    fn partial(&self, x: [f64; 2], _a: u32, b: u32) -> f64 {
        x[0].exp() * cyc_cos(x[1], b)
    }
}

/// `(d/dt)ⁿ sin t`.
fn cyc_sin(t: f64, n: u32) -> f64 {
    match n % 4 {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

/// `(d/dt)ⁿ cos t`.
fn cyc_cos(t: f64, n: u32) -> f64 {
    cyc_sin(t, n + 1)
}

/// Polynomial `Σ c · xᵖ yᵠ`.
#[derive(Clone, Debug, Default)]
pub struct Polynomial {
    pub terms: Vec<(u32, u32, f64)>,
}

impl Polynomial {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Self { terms }
    }
}

/// `∂ᵃ tᵖ` evaluated at `t`.
pub(crate) fn mono_deriv(t: f64, p: u32, a: u32) -> f64 {
    if a > p {
        return 0.0;
    }
    let mut c = 1.0;
    for k in 0..a {
        c *= (p - k) as f64;
    }
    c * t.powi((p - a) as i32)
}

impl Field for Polynomial {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64 {
        self.terms.iter().map(|&(p, q, c)| c * mono_deriv(x[0], p, a) * mono_deriv(x[1], q, b)).sum()
    }
}

/// Gaussian bump `exp(−|x − c|²/w²)`.
pub struct Gaussian {
    pub center: [f64; 2],
    pub width: f64,
}

impl Field for Gaussian {
    fn partial(&self, x: [f64; 2], a: u32, b: u32) -> f64 {
        // separable: product of 1D Hermite-type derivatives
        let d = |t: f64, n: u32| {
            let s = t / self.width;
            // (d/dt)ⁿ e^{−s²} = (−1/w)ⁿ Hₙ(s) e^{−s²} with physicists' Hermite Hₙ
            let (mut h0, mut h1) = (1.0, 2.0 * s);
            let hn = match n {
                0 => h0,
                1 => h1,
                _ => {
                    for k in 1..n {
                        let h2 = 2.0 * s * h1 - 2.0 * k as f64 * h0;
                        h0 = h1;
                        h1 = h2;
                    }
                    h1
                }
            };
            (-1.0 / self.width).powi(n as i32) * hn * (-s * s).exp()
        };
        d(x[0] - self.center[0], a) * d(x[1] - self.center[1], b)
    }
}

/// Constant field.
pub struct Constant(pub f64);

impl Field for Constant {
    fn partial(&self, _x: [f64; 2], a: u32, b: u32) -> f64 {
        if a == 0 && b == 0 {
            self.0
        } else {
            0.0
        }
    }
}
