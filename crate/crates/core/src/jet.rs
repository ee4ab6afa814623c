//! Truncated two-variable Taylor arithmetic (degree 3).
//!
//! Evaluating a closed-form map on `Jet2` values seeded with the identity
//! expansion yields the map's value together with its first, second and third
//! derivatives to machine precision. All catalog maps and element geometry
//! maps are differentiated this way; nothing in the crate differentiates
//! meshes numerically.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Monomial layout: 1, x, y, x², xy, y², x³, x²y, xy², y³.
pub const N_COEFF: usize = 10;

/// Degree-3 truncated Taylor polynomial in two variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub c: [f64; N_COEFF],
}

const IDX: [(usize, usize); N_COEFF] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

const DROP: usize = usize::MAX;

/// Product index table: MUL_IDX[p][q] is where monomial p·q lands, or DROP
/// when the product exceeds degree 3.
const MUL_IDX: [[usize; N_COEFF]; N_COEFF] = {
    let mut t = [[DROP; N_COEFF]; N_COEFF];
    let mut p = 0;
    while p < N_COEFF {
        let mut q = 0;
        while q < N_COEFF {
            let (i, j) = (IDX[p].0 + IDX[q].0, IDX[p].1 + IDX[q].1);
            if i + j <= 3 {
                let mut r = 0;
                while r < N_COEFF {
                    if IDX[r].0 == i && IDX[r].1 == j {
                        t[p][q] = r;
                        break;
                    }
                    r += 1;
                }
            }
            q += 1;
        }
        p += 1;
    }
    t
};

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N_COEFF];
        c[0] = v;
        Jet2 { c }
    }

    /// Seed for the first independent variable at base value `v`.
    pub fn var_x(v: f64) -> Self {
        let mut c = [0.0; N_COEFF];
        c[0] = v;
        c[1] = 1.0;
        Jet2 { c }
    }

    /// Seed for the second independent variable at base value `v`.
    pub fn var_y(v: f64) -> Self {
        let mut c = [0.0; N_COEFF];
        c[0] = v;
        c[2] = 1.0;
        Jet2 { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Gradient (∂x, ∂y).
    pub fn grad(&self) -> [f64; 2] {
        [self.c[1], self.c[2]]
    }

    /// Hessian entries (xx, xy, yy). Taylor coefficients carry 1/α!.
    pub fn hess(&self) -> [f64; 3] {
        [2.0 * self.c[3], self.c[4], 2.0 * self.c[5]]
    }

    /// Third derivatives (xxx, xxy, xyy, yyy).
    pub fn third(&self) -> [f64; 4] {
        [6.0 * self.c[6], 2.0 * self.c[7], 2.0 * self.c[8], 6.0 * self.c[9]]
    }

    /// Truncated product.
    fn prod(&self, o: &Jet2) -> Jet2 {
        let mut c = [0.0; N_COEFF];
        for p in 0..N_COEFF {
            let a = self.c[p];
            if a == 0.0 {
                continue;
            }
            let row = &MUL_IDX[p];
            for q in 0..N_COEFF {
                let r = row[q];
                if r != DROP {
                    c[r] += a * o.c[q];
                }
            }
        }
        Jet2 { c }
    }

    /// Nilpotent part (everything above the constant term).
    fn delta(&self) -> Jet2 {
        let mut d = *self;
        d.c[0] = 0.0;
        d
    }

    /// Univariate composition f(self) from Taylor coefficients of f at the
    /// base value: f0 + f1·δ + (f2/2)·δ² + (f3/6)·δ³.
    pub fn compose_scalar(&self, f0: f64, f1: f64, f2: f64, f3: f64) -> Jet2 {
        let d = self.delta();
        let d2 = d.prod(&d);
        let d3 = d2.prod(&d);
        let mut r = Jet2::constant(f0);
        for k in 0..N_COEFF {
            r.c[k] += f1 * d.c[k] + 0.5 * f2 * d2.c[k] + (f3 / 6.0) * d3.c[k];
        }
        r
    }

    pub fn recip(&self) -> Jet2 {
        let v = self.c[0];
        self.compose_scalar(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v), -6.0 / (v * v * v * v))
    }

    pub fn sqrt(&self) -> Jet2 {
        let v = self.c[0];
        let s = v.sqrt();
        self.compose_scalar(
            s,
            0.5 / s,
            -0.25 / (s * v),
            0.375 / (s * v * v),
        )
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.c[0].sin_cos();
        self.compose_scalar(s, c, -s, -c)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.c[0].sin_cos();
        self.compose_scalar(c, -s, -c, s)
    }

    pub fn powi(&self, n: i32) -> Jet2 {
        match n {
            0 => Jet2::constant(1.0),
            1 => *self,
            _ if n > 1 => {
                let mut r = *self;
                for _ in 1..n {
                    r = r.prod(self);
                }
                r
            }
            _ => self.recip().powi(-n),
        }
    }

    /// atan2(y, x) as a jet: derivative parts from the smooth branch formula,
    /// constant term fixed to the true atan2. Undefined at the origin.
    pub fn atan2(y: &Jet2, x: &Jet2) -> Jet2 {
        let x0 = x.c[0];
        let y0 = y.c[0];
        let base = y0.atan2(x0);
        let mut r = if x0.abs() >= y0.abs() {
            // θ = atan(y/x) + const
            let u = y.prod(&x.recip());
            let t = u.c[0];
            let den = 1.0 + t * t;
            u.compose_scalar(
                t.atan(),
                1.0 / den,
                -2.0 * t / (den * den),
                (6.0 * t * t - 2.0) / (den * den * den),
            )
        } else {
            // θ = ∓π/2 − atan(x/y) + const
            let u = x.prod(&y.recip());
            let t = u.c[0];
            let den = 1.0 + t * t;
            let a = u.compose_scalar(
                t.atan(),
                1.0 / den,
                -2.0 * t / (den * den),
                (6.0 * t * t - 2.0) / (den * den * den),
            );
            -a
        };
        r.c[0] = base;
        r
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut c = self.c;
        for k in 0..N_COEFF {
            c[k] += o.c[k];
        }
        Jet2 { c }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        let mut c = self.c;
        for k in 0..N_COEFF {
            c[k] -= o.c[k];
        }
        Jet2 { c }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::prod(&self, &o)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        let mut c = self.c;
        for k in 0..N_COEFF {
            c[k] *= s;
        }
        Jet2 { c }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self.prod(&o.recip())
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        let mut c = self.c;
        for k in 0..N_COEFF {
            c[k] = -c[k];
        }
        Jet2 { c }
    }
}

/// A point evaluated as a pair of jets seeded with the identity map.
pub fn seed_point(x: f64, y: f64) -> [Jet2; 2] {
    [Jet2::var_x(x), Jet2::var_y(y)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd3(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64, f64) {
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h))
            / (2.0 * h * h * h);
        (d1, d2, d3)
    }

    #[test]
    fn product_and_elementary_functions_match_finite_differences() {
        let g = |x: f64| (x * x + 0.5).sqrt() * (1.3 * x).sin() + (0.7 * x).cos() / (x + 2.0);
        let x0 = 0.8;
        let j = Jet2::var_x(x0);
        let r = (j * j + Jet2::constant(0.5)).sqrt() * (j * 1.3).sin()
            + (j * 0.7).cos() * (j + Jet2::constant(2.0)).recip();
        let (d1, d2, d3) = fd3(g, x0, 1e-4);
        assert_relative_eq!(r.value(), g(x0), max_relative = 1e-14);
        assert_relative_eq!(r.grad()[0], d1, max_relative = 1e-7);
        assert_relative_eq!(r.hess()[0], d2, max_relative = 1e-6);
        assert_relative_eq!(r.third()[0], d3, max_relative = 1e-4);
    }

    #[test]
    fn atan2_jet_matches_analytic_derivatives() {
        for &(x0, y0) in &[(0.9, 0.4), (0.2, -1.1), (-0.8, 0.3), (-0.5, -0.7)] {
            let [jx, jy] = seed_point(x0, y0);
            let th = Jet2::atan2(&jy, &jx);
            let r2 = x0 * x0 + y0 * y0;
            assert_relative_eq!(th.value(), y0.atan2(x0), max_relative = 1e-15);
            assert_relative_eq!(th.grad()[0], -y0 / r2, max_relative = 1e-13);
            assert_relative_eq!(th.grad()[1], x0 / r2, max_relative = 1e-13);
            // ∂²θ/∂x² = 2xy/r⁴
            assert_relative_eq!(th.hess()[0], 2.0 * x0 * y0 / (r2 * r2), max_relative = 1e-12);
        }
    }

    #[test]
    fn two_variable_cross_derivatives() {
        // f = sin(x)·cos(2y): f_xy = -2 cos(x) sin(2y), f_xyy = -4 cos x cos 2y
        let (x0, y0) = (0.4, 0.25);
        let [jx, jy] = seed_point(x0, y0);
        let f = jx.sin() * (jy * 2.0).cos();
        assert_relative_eq!(
            f.hess()[1],
            -2.0 * x0.cos() * (2.0 * y0).sin(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            f.third()[2],
            -4.0 * x0.cos() * (2.0 * y0).cos(),
            max_relative = 1e-13
        );
    }
}
