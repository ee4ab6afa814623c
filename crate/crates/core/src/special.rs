//! Independent analytic oracle: Bessel functions in double-double arithmetic,
//! bracketed root finding, and closed-form disk eigenpairs (Dirichlet membrane
//! and clamped plate) with exact boundary traces.
//!
//! Everything here is deliberately decoupled from the finite element pipeline
//! so the two can certify each other.

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// double-double arithmetic (~32 significant digits)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn f64(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn scale(self, s: f64) -> Dd {
        self.mul(Dd::from(s))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.scale(q1));
        let q2 = r.hi / o.hi;
        let r2 = r.sub(o.scale(q2));
        let q3 = r2.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        let (hi, lo) = quick_two_sum(s, e + q3);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn abs(self) -> f64 {
        self.f64().abs()
    }

    fn sqrt(self) -> Dd {
        let s = self.hi.sqrt();
        if s == 0.0 {
            return Dd::from(0.0);
        }
        let sd = Dd::from(s);
        // one Newton step: s + (x − s²)/(2s)
        sd.add(self.sub(sd.mul(sd)).div(sd.scale(2.0)))
    }
}

const PI_DD: Dd = Dd { hi: std::f64::consts::PI, lo: 1.2246467991473532e-16 };

fn sin_dd(a: Dd) -> f64 {
    a.hi.sin() + a.lo * a.hi.cos()
}

fn cos_dd(a: Dd) -> f64 {
    a.hi.cos() - a.lo * a.hi.sin()
}

// ---------------------------------------------------------------------------
// Bessel J and I
// ---------------------------------------------------------------------------

/// Series cutoff: J via power series below, Hankel asymptotics above.
const SERIES_MAX_X: f64 = 36.0;

/// J_p by the ascending series in double-double. Reliable for 0 ≤ x ≤ 36
/// where the worst cancellation (~14 digits) is far inside the dd budget.
fn bessel_j_series(p: u32, x: f64) -> Dd {
    let half = Dd::from(x).scale(0.5);
    let mut t = Dd::from(1.0);
    for k in 1..=p {
        t = t.mul(half).div(Dd::from(k as f64));
    }
    if x == 0.0 {
        return if p == 0 { Dd::from(1.0) } else { Dd::from(0.0) };
    }
    let quarter = half.mul(half).neg();
    let mut sum = t;
    let mut m = 1u32;
    loop {
        t = t.mul(quarter).div(Dd::from(m as f64)).div(Dd::from((m + p) as f64));
        sum = sum.add(t);
        if t.abs() < 1e-35 * (1.0 + sum.abs()) || m > 400 {
            break;
        }
        m += 1;
    }
    sum
}

/// I_p by the ascending series (all terms positive, no cancellation).
fn bessel_i_series(p: u32, x: f64) -> Dd {
    let half = Dd::from(x).scale(0.5);
    let mut t = Dd::from(1.0);
    for k in 1..=p {
        t = t.mul(half).div(Dd::from(k as f64));
    }
    if x == 0.0 {
        return if p == 0 { Dd::from(1.0) } else { Dd::from(0.0) };
    }
    let quarter = half.mul(half);
    let mut sum = t;
    let mut m = 1u32;
    loop {
        t = t.mul(quarter).div(Dd::from(m as f64)).div(Dd::from((m + p) as f64));
        sum = sum.add(t);
        if t.abs() < 1e-35 * sum.abs() || m > 600 {
            break;
        }
        m += 1;
    }
    sum
}

/// Hankel asymptotic expansion for J_ν, ν ∈ {0, 1}, x ≥ 36.
fn bessel_j_asymptotic(nu: u32, x: f64) -> Dd {
    let mu = Dd::from(4.0 * (nu * nu) as f64);
    let xd = Dd::from(x);
    let mut p = Dd::from(1.0);
    let mut q = Dd::from(0.0);
    let mut a = Dd::from(1.0);
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        a = a.mul(mu.sub(Dd::from(odd * odd))).div(Dd::from(8.0 * k as f64)).div(xd);
        let mag = a.abs();
        if mag > prev || mag < 1e-35 {
            break;
        }
        prev = mag;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            // odd terms feed Q with sign (−1)^((k−1)/2)
            let s = if ((k - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            q = q.add(a.scale(s));
        } else {
            p = p.add(a.scale(sign));
        }
    }
    // ω = x − νπ/2 − π/4
    let omega = xd.sub(PI_DD.scale(nu as f64 / 2.0 + 0.25));
    // reduce mod 2π
    let two_pi = PI_DD.scale(2.0);
    let n = (omega.f64() / two_pi.f64()).round();
    let omega = omega.sub(two_pi.scale(n));
    let c = cos_dd(omega);
    let s = sin_dd(omega);
    let amp = Dd::from(2.0).div(PI_DD.mul(xd)).sqrt();
    amp.mul(p.scale(c).sub(q.scale(s)))
}

/// J of any integer order (negative via symmetry), internal precision.
pub(crate) fn bessel_j_dd(p: i32, x: f64) -> Dd {
    if p < 0 {
        let v = bessel_j_dd(-p, x);
        return if p % 2 == 0 { v } else { v.neg() };
    }
    if x <= SERIES_MAX_X {
        bessel_j_series(p as u32, x)
    } else {
        // forward recurrence from J0, J1 — stable for p < x
        let mut jm = bessel_j_asymptotic(0, x);
        if p == 0 {
            return jm;
        }
        let mut j = bessel_j_asymptotic(1, x);
        for k in 1..p {
            let next = j.scale(2.0 * k as f64 / x).sub(jm);
            jm = j;
            j = next;
        }
        j
    }
}

pub(crate) fn bessel_i_dd(p: i32, x: f64) -> Dd {
    let p = p.abs();
    bessel_i_series(p as u32, x)
}

/// Bessel function of the first kind, f64 result.
pub fn bessel_j(p: i32, x: f64) -> f64 {
    bessel_j_dd(p, x).f64()
}

/// Modified Bessel function of the first kind, f64 result.
pub fn bessel_i(p: i32, x: f64) -> f64 {
    bessel_i_dd(p, x).f64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BesselKind {
    J,
    I,
}

/// Value and first three derivatives at x.
#[derive(Clone, Copy, Debug)]
pub struct BesselEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Evaluate J_p or I_p with derivatives via the neighbor-order identities
/// (J'_p = (J_{p−1} − J_{p+1})/2, I'_p = (I_{p−1} + I_{p+1})/2).
pub fn bessel(kind: BesselKind, p: u32, x: f64) -> Result<BesselEval> {
    if !(0.0..=60.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "bessel argument x = {x} outside [0, 60]"
        )));
    }
    if p > 12 {
        return Err(Error::InvalidArgument(format!("bessel order p = {p} > 12")));
    }
    let p = p as i32;
    let f = |k: i32| -> f64 {
        match kind {
            BesselKind::J => bessel_j(k, x),
            BesselKind::I => bessel_i(k, x),
        }
    };
    // shift-operator form of d/dx: 2D = S_{−1} + s·S_{+1} with s = −1 for J,
    // s = +1 for I; powers of D give the higher derivatives
    let s = if kind == BesselKind::J { -1.0 } else { 1.0 };
    let (m3, m2, m1, c, p1, p2, p3) = (
        f(p - 3),
        f(p - 2),
        f(p - 1),
        f(p),
        f(p + 1),
        f(p + 2),
        f(p + 3),
    );
    Ok(BesselEval {
        value: c,
        d1: 0.5 * (m1 + s * p1),
        d2: 0.25 * (m2 + 2.0 * s * c + p2),
        d3: 0.125 * (m3 + 3.0 * s * m1 + 3.0 * p1 + s * p3),
    })
}

/// Bisection to a tight bracket, then one secant polish; 1e-13 absolute.
pub fn find_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no sign change on [{a}, {b}]"
        )));
    }
    for _ in 0..90 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-14 * m.abs().max(1.0) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    let (fa, fb) = (f(a), f(b));
    if fa == fb {
        return Ok(0.5 * (a + b));
    }
    Ok(a - fa * (b - a) / (fb - fa))
}

// ---------------------------------------------------------------------------
// disk eigenpairs
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    /// Dirichlet Laplacian on the disk, γ = κ²
    P10,
    /// clamped plate (Dirichlet biharmonic), γ = κ⁴
    P20,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angular {
    Cos(u32),
    Sin(u32),
}

impl Angular {
    pub fn order(&self) -> u32 {
        match self {
            Angular::Cos(p) | Angular::Sin(p) => *p,
        }
    }

    /// Value and derivatives in θ up to order 3.
    pub fn eval(&self, theta: f64) -> [f64; 4] {
        match self {
            Angular::Cos(p) => {
                let p = *p as f64;
                let (s, c) = (p * theta).sin_cos();
                [c, -p * s, -p * p * c, p * p * p * s]
            }
            Angular::Sin(p) => {
                let p = *p as f64;
                let (s, c) = (p * theta).sin_cos();
                [s, p * c, -p * p * s, -p * p * p * c]
            }
        }
    }
}

/// Closed-form disk eigenpair with exact radial derivatives.
#[derive(Clone, Debug)]
pub struct DiskEigenpair {
    pub kind: OracleKind,
    pub p: u32,
    pub q: u32,
    pub kappa: f64,
    pub gamma: f64,
    pub angular: Angular,
    /// L²(disk) normalization constant multiplying the raw radial profile
    pub norm: f64,
    /// raw radial profile u = a·J_p(κr) + b·I_p(κr)
    coef_j: f64,
    coef_i: f64,
}

impl DiskEigenpair {
    /// Radial profile (normalized) and derivatives up to order 3 at radius r.
    pub fn radial(&self, r: f64) -> [f64; 4] {
        let x = self.kappa * r;
        let j = bessel(BesselKind::J, self.p, x).expect("order/argument in range");
        let mut out = [
            self.coef_j * j.value,
            self.coef_j * self.kappa * j.d1,
            self.coef_j * self.kappa * self.kappa * j.d2,
            self.coef_j * self.kappa * self.kappa * self.kappa * j.d3,
        ];
        if self.coef_i != 0.0 {
            let i = bessel(BesselKind::I, self.p, x).expect("order/argument in range");
            out[0] += self.coef_i * i.value;
            out[1] += self.coef_i * self.kappa * i.d1;
            out[2] += self.coef_i * self.kappa * self.kappa * i.d2;
            out[3] += self.coef_i * self.kappa * self.kappa * self.kappa * i.d3;
        }
        for v in &mut out {
            *v *= self.norm;
        }
        out
    }

    /// Radial part of Δu: for the J component −κ²·(that part), for I +κ².
    pub fn laplacian_radial(&self, r: f64) -> [f64; 4] {
        let x = self.kappa * r;
        let k2 = self.kappa * self.kappa;
        let j = bessel(BesselKind::J, self.p, x).expect("in range");
        let mut out = [
            -k2 * self.coef_j * j.value,
            -k2 * self.coef_j * self.kappa * j.d1,
            -k2 * self.coef_j * self.kappa * self.kappa * j.d2,
            -k2 * self.coef_j * self.kappa * self.kappa * self.kappa * j.d3,
        ];
        if self.coef_i != 0.0 {
            let i = bessel(BesselKind::I, self.p, x).expect("in range");
            out[0] += k2 * self.coef_i * i.value;
            out[1] += k2 * self.coef_i * self.kappa * i.d1;
            out[2] += k2 * self.coef_i * self.kappa * self.kappa * i.d2;
            out[3] += k2 * self.coef_i * self.kappa * self.kappa * self.kappa * i.d3;
        }
        for v in &mut out {
            *v *= self.norm;
        }
        out
    }

    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        self.radial(r)[0] * self.angular.eval(theta)[0]
    }

    /// Laplacian from numerically combined derivatives (consistency probe):
    /// Δu = (R'' + R'/r − p²R/r²)·Φ.
    pub fn laplacian_numeric(&self, r: f64, theta: f64) -> f64 {
        let rad = self.radial(r);
        let p2 = (self.p * self.p) as f64;
        (rad[2] + rad[1] / r - p2 * rad[0] / (r * r)) * self.angular.eval(theta)[0]
    }

    /// PDE residual at an interior point, combining numerically evaluated
    /// Laplacians with the analytic intermediate (P20 needs two passes).
    pub fn pde_residual(&self, r: f64, theta: f64) -> f64 {
        match self.kind {
            OracleKind::P10 => self.laplacian_numeric(r, theta) + self.gamma * self.eval(r, theta),
            OracleKind::P20 => {
                // w := Δu evaluated analytically, then Δw numerically
                let w = self.laplacian_radial(r);
                let p2 = (self.p * self.p) as f64;
                let lap_w = (w[2] + w[1] / r - p2 * w[0] / (r * r)) * self.angular.eval(theta)[0];
                lap_w - self.gamma * self.eval(r, theta)
            }
        }
    }
}

/// First `count` eigenpairs of the oracle problem, eigenvalues ascending;
/// angular orders p ≥ 1 contribute cos and sin copies (multiplicity 2).
pub fn disk_eigenpairs(kind: OracleKind, count: usize) -> Result<Vec<DiskEigenpair>> {
    let max_p = 10u32;
    let mut levels: Vec<(f64, u32, u32, f64)> = Vec::new(); // (gamma, p, q, kappa)
    for p in 0..=max_p {
        let roots = match kind {
            OracleKind::P10 => scan_roots(|x| bessel_j(p as i32, x), p, 8),
            OracleKind::P20 => scan_roots(
                |x| {
                    let j = bessel(BesselKind::J, p, x).unwrap();
                    let i = bessel(BesselKind::I, p, x).unwrap();
                    // J_p I_p' − J_p' I_p, tamed by I_p (positive for x > 0)
                    j.value * (i.d1 / i.value) - j.d1
                },
                p,
                6,
            ),
        };
        for (q, kappa) in roots.into_iter().enumerate() {
            let gamma = match kind {
                OracleKind::P10 => kappa * kappa,
                OracleKind::P20 => kappa.powi(4),
            };
            levels.push((gamma, p, (q + 1) as u32, kappa));
        }
    }
    levels.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = Vec::new();
    for (gamma, p, q, kappa) in levels {
        if out.len() >= count {
            break;
        }
        let angulars: &[Angular] = if p == 0 {
            &[Angular::Cos(0)]
        } else {
            &[Angular::Cos(p), Angular::Sin(p)]
        };
        for ang in angulars {
            if out.len() >= count {
                break;
            }
            out.push(make_pair(kind, p, q, kappa, gamma, *ang)?);
        }
    }
    Ok(out)
}

fn scan_roots(f: impl Fn(f64) -> f64, p: u32, want: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let start = 0.2 + 0.6 * p as f64; // stay right of the origin where J_p ~ x^p
    let step = 0.2;
    let mut x = start;
    let mut fx = f(x);
    while x < 58.0 && roots.len() < want {
        let x2 = x + step;
        let fx2 = f(x2);
        if fx * fx2 < 0.0 {
            roots.push(find_root(&f, x, x2).unwrap());
        }
        x = x2;
        fx = fx2;
    }
    roots
}

fn make_pair(
    kind: OracleKind,
    p: u32,
    q: u32,
    kappa: f64,
    gamma: f64,
    angular: Angular,
) -> Result<DiskEigenpair> {
    let (coef_j, coef_i) = match kind {
        OracleKind::P10 => (1.0, 0.0),
        OracleKind::P20 => (bessel_i(p as i32, kappa), -bessel_j(p as i32, kappa)),
    };
    let mut pair = DiskEigenpair {
        kind,
        p,
        q,
        kappa,
        gamma,
        angular,
        norm: 1.0,
        coef_j,
        coef_i,
    };
    // L² normalization over the disk by radial Gauss quadrature
    let (nodes, weights) = crate::quadrature::gauss_legendre(96);
    let mut radial_int = 0.0;
    for (r, w) in nodes.iter().zip(&weights) {
        let v = pair.radial(*r)[0];
        radial_int += v * v * r * w;
    }
    let ang_factor = if p == 0 { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI };
    pair.norm = 1.0 / (radial_int * ang_factor).sqrt();
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};

    // frozen from a 30-digit independent evaluation
    const J01: f64 = 2.40482555769577276862;
    const J11: f64 = 3.83170597020751231561;
    const J21: f64 = 5.13562230184068255630;
    const J02: f64 = 5.52007811028631064960;
    const KAPPA_P20_1: f64 = 3.19622061658254109398;
    const GAMMA_P20_1: f64 = 104.363105558844306922;

    #[test]
    fn literature_values() {
        let cases = [
            (0, 1.0, 0.765197686557966551449717526103),
            (0, 2.0, 0.22389077914123566805182745465),
            (1, 1.0, 0.440050585744933515959682203719),
            (0, 5.0, -0.177596771314338304347397013075),
            (0, 10.0, -0.245935764451348335197760862485),
            (0, 50.0, 0.0558123276692518150047504785294),
            (0, 59.5, -0.0578088314743812681150567411865),
            (5, 20.0, 0.151169767982394974607100455725),
            (12, 40.0, -0.126977996117848063612192200383),
            (2, 0.5, 0.0306040234586826413074136309664),
        ];
        for (p, x, v) in cases {
            assert_relative_eq!(bessel_j(p, x), v, max_relative = 1e-13);
        }
        let icases = [
            (0, 1.0, 1.26606587775200833559824462521),
            (0, 5.0, 27.2398718236044468945442320759),
            (3, 10.0, 1758.38071661085323810039006274),
            (12, 55.0, 11129266662296516373618.6385913),
        ];
        for (p, x, v) in icases {
            assert_relative_eq!(bessel_i(p, x), v, max_relative = 1e-13);
        }
        // J0(0) = 1, J0'(0) = 0
        let e = bessel(BesselKind::J, 0, 0.0).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn recurrence_consistency_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = rng.gen_range(1..=12);
            let x = rng.gen_range(0.05..59.0);
            let jm = bessel_j(p - 1, x);
            let j = bessel_j(p, x);
            let jp = bessel_j(p + 1, x);
            let r = jm + jp - (2.0 * p as f64 / x) * j;
            assert!(
                r.abs() <= 1e-12 * j.abs().max(1.0),
                "J recurrence p={p} x={x}: {r:.3e}"
            );
            let im = bessel_i(p - 1, x);
            let i = bessel_i(p, x);
            let ip = bessel_i(p + 1, x);
            let ri = im - ip - (2.0 * p as f64 / x) * i;
            assert!(
                ri.abs() <= 1e-12 * i.abs().max(1.0),
                "I recurrence p={p} x={x}: {ri:.3e}"
            );
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for (kind, p, x) in [
            (BesselKind::J, 0, 1.7),
            (BesselKind::J, 3, 11.0),
            (BesselKind::J, 7, 41.0),
            (BesselKind::I, 0, 2.2),
            (BesselKind::I, 4, 9.0),
        ] {
            let f = |t: f64| match kind {
                BesselKind::J => bessel_j(p, t),
                BesselKind::I => bessel_i(p, t),
            };
            let e = bessel(kind, p as u32, x).unwrap();
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let scale = e.value.abs().max(1.0);
            assert_abs_diff_eq!(e.d1, d1, epsilon = 1e-9 * scale);
            assert_abs_diff_eq!(e.d2, d2, epsilon = 1e-5 * scale);
        }
    }

    #[test]
    fn root_finding_matches_frozen_roots() {
        let j0 = |x: f64| bessel_j(0, x);
        let r = find_root(j0, 2.0, 3.0).unwrap();
        assert_abs_diff_eq!(r, J01, epsilon = 1e-12);
        let j1 = |x: f64| bessel_j(1, x);
        let r = find_root(j1, 3.0, 4.0).unwrap();
        assert_abs_diff_eq!(r, J11, epsilon = 1e-12);
        assert!(find_root(j0, 3.0, 5.0).is_err()); // no sign change
        // clamped-plate frequency equation for p = 0 on [3, 3.5]
        let f = |k: f64| {
            let j = bessel(BesselKind::J, 0, k).unwrap();
            let i = bessel(BesselKind::I, 0, k).unwrap();
            j.value * i.d1 - j.d1 * i.value
        };
        let k = find_root(f, 3.0, 3.5).unwrap();
        assert_abs_diff_eq!(k, KAPPA_P20_1, epsilon = 1e-10);
        assert_relative_eq!(k.powi(4), GAMMA_P20_1, max_relative = 1e-12);
    }

    #[test]
    fn p10_eigenpairs_ordering_and_traces() {
        let pairs = disk_eigenpairs(OracleKind::P10, 6).unwrap();
        let expect = [J01 * J01, J11 * J11, J11 * J11, J21 * J21, J21 * J21, J02 * J02];
        for (pair, e) in pairs.iter().zip(expect) {
            assert_relative_eq!(pair.gamma, e, max_relative = 1e-12);
        }
        // ground state is radial: ∂u/∂ν at r=1 is θ-independent, equals c·κ·J0'(j01)
        let g = &pairs[0];
        let du = g.radial(1.0)[1];
        let expected = g.norm * g.kappa * bessel(BesselKind::J, 0, g.kappa).unwrap().d1;
        assert_relative_eq!(du, expected, max_relative = 1e-12);
        // Dirichlet condition
        assert_abs_diff_eq!(g.radial(1.0)[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn p20_eigenpairs_clamped_and_normalized() {
        let pairs = disk_eigenpairs(OracleKind::P20, 4).unwrap();
        assert_relative_eq!(pairs[0].gamma, GAMMA_P20_1, max_relative = 1e-10);
        // first eigenvalue is simple, second is the p=1 double
        assert_eq!(pairs[0].p, 0);
        assert_eq!(pairs[1].p, 1);
        assert_relative_eq!(pairs[1].gamma, pairs[2].gamma, max_relative = 1e-13);
        for pair in &pairs {
            let r1 = pair.radial(1.0);
            assert_abs_diff_eq!(r1[0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r1[1], 0.0, epsilon = 5e-9 * pair.gamma.abs().max(1.0));
        }
    }

    #[test]
    fn pde_residual_at_random_interior_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::global_seed() ^ 0x5eed);
        for kind in [OracleKind::P10, OracleKind::P20] {
            let pairs = disk_eigenpairs(kind, 4).unwrap();
            for pair in &pairs {
                for _ in 0..50 {
                    let r = rng.gen_range(0.05..0.98);
                    let th = rng.gen_range(0.0..std::f64::consts::TAU);
                    let res = pair.pde_residual(r, th);
                    assert!(
                        res.abs() <= 1e-9 * pair.gamma.max(1.0),
                        "{kind:?} p={} residual {res:.2e} at r={r:.3}",
                        pair.p
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_orthonormality_by_quadrature() {
        let pairs = disk_eigenpairs(OracleKind::P10, 5).unwrap();
        let (rn, rw) = crate::quadrature::gauss_legendre(96);
        let nth = 256;
        for a in 0..pairs.len() {
            for b in a..pairs.len() {
                let mut acc = 0.0;
                for (r, w) in rn.iter().zip(&rw) {
                    let ra = pairs[a].radial(*r)[0];
                    let rb = pairs[b].radial(*r)[0];
                    let mut ang = 0.0;
                    for t in 0..nth {
                        let th = std::f64::consts::TAU * t as f64 / nth as f64;
                        ang += pairs[a].angular.eval(th)[0] * pairs[b].angular.eval(th)[0];
                    }
                    ang *= std::f64::consts::TAU / nth as f64;
                    acc += ra * rb * ang * r * w;
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc, expect, epsilon = 1e-9);
            }
        }
        // P10 closed-form normalization cross-check: ∫ J_p(j r)² r dr = J_{p+1}(j)²/2
        let g = &pairs[0];
        let closed = bessel_j(1, g.kappa).powi(2) / 2.0;
        let c_expected = 1.0 / (closed * 2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(g.norm, c_expected, max_relative = 1e-11);
    }

    #[test]
    fn p20_rayleigh_identity() {
        // ∫ (Δu)² = γ ∫ u² for clamped eigenfunctions
        let pairs = disk_eigenpairs(OracleKind::P20, 3).unwrap();
        let (rn, rw) = crate::quadrature::gauss_legendre(96);
        for pair in &pairs {
            let mut num = 0.0;
            let mut den = 0.0;
            for (r, w) in rn.iter().zip(&rw) {
                let s = pair.laplacian_radial(*r)[0];
                let u = pair.radial(*r)[0];
                num += s * s * r * w;
                den += u * u * r * w;
            }
            assert_relative_eq!(num / den, pair.gamma, max_relative = 1e-8);
        }
    }
}
