//! Domains as mapped reference disks, boundary differential geometry, and the
//! tangential calculus used by every boundary density.
//!
//! The reference domain is always the closed unit disk; computational domains
//! are images under a closed-form map from a small catalog. All boundary
//! derivatives (normals, curvature, curve acceleration) come from exact map
//! derivatives via [`crate::jet::Jet2`], never from mesh differentiation.

use crate::jet::{seed_point, Jet2};
use crate::{Error, Result};
use rustfft::{num_complex::Complex, FftPlanner};

/// Radial cutoff: 0 for r ≤ 0.5, 1 for r ≥ 0.9, C³ polynomial step between.
pub const CUTOFF_LO: f64 = 0.5;
pub const CUTOFF_HI: f64 = 0.9;

/// Smoothstep with three vanishing derivatives at both ends.
fn smoothstep3(t: Jet2) -> Jet2 {
    // 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷
    let t2 = t * t;
    let t4 = t2 * t2;
    t4 * 35.0 + t4 * t * (-84.0) + t4 * t2 * 70.0 + t4 * t2 * t * (-20.0)
}

fn cutoff(r: Jet2) -> Jet2 {
    let r0 = r.value();
    if r0 <= CUTOFF_LO {
        Jet2::constant(0.0)
    } else if r0 >= CUTOFF_HI {
        Jet2::constant(1.0)
    } else {
        smoothstep3((r - Jet2::constant(CUTOFF_LO)) * (1.0 / (CUTOFF_HI - CUTOFF_LO)))
    }
}

/// Closed-form vector fields on the plane. Every entry evaluates its exact
/// first/second/third derivatives through jet arithmetic; the same expression
/// serves both as a domain map φ and as a perturbation field ψ.
#[derive(Clone, Debug)]
pub enum MapExpr {
    /// x ↦ x
    Identity,
    /// x ↦ c (translation field)
    Constant([f64; 2]),
    /// x ↦ M x (dilations, shears, rotations)
    Linear([[f64; 2]; 2]),
    /// χ(r)·cos(pθ)·e_r — radial Fourier bump, zero for r ≤ 0.5
    RadialBump { p: u32 },
    /// χ(r)·Σ_k (a_k cos kθ + b_k sin kθ) with vector coefficients; used by
    /// the shape flow to extend boundary velocity data into the disk
    FourierField { cos_coeff: Vec<[f64; 2]>, sin_coeff: Vec<[f64; 2]> },
    Sum(Vec<MapExpr>),
    Scale(f64, Box<MapExpr>),
    /// outer ∘ inner
    Compose(Box<MapExpr>, Box<MapExpr>),
}

impl MapExpr {
    pub fn identity() -> Self {
        MapExpr::Identity
    }

    pub fn translation(c: [f64; 2]) -> Self {
        MapExpr::Constant(c)
    }

    /// Dilation field/map x ↦ s·x.
    pub fn dilation(s: f64) -> Self {
        MapExpr::Linear([[s, 0.0], [0.0, s]])
    }

    /// Axis-aligned ellipse map (x, y) ↦ (a x, b y).
    pub fn ellipse(a: f64, b: f64) -> Self {
        MapExpr::Linear([[a, 0.0], [0.0, b]])
    }

    pub fn radial_bump(p: u32) -> Self {
        MapExpr::RadialBump { p }
    }

    pub fn scaled(self, s: f64) -> Self {
        MapExpr::Scale(s, Box::new(self))
    }

    pub fn sum(terms: Vec<MapExpr>) -> Self {
        MapExpr::Sum(terms)
    }

    pub fn compose(outer: MapExpr, inner: MapExpr) -> Self {
        MapExpr::Compose(Box::new(outer), Box::new(inner))
    }

    /// φ_ε = base + ε·ψ (fields add in reference coordinates).
    pub fn perturbed(base: MapExpr, psi: &MapExpr, eps: f64) -> Self {
        MapExpr::Sum(vec![base, MapExpr::Scale(eps, Box::new(psi.clone()))])
    }

    /// Evaluate on jets; seeds may be any jets (enables composition).
    pub fn eval_jets(&self, p: [Jet2; 2]) -> [Jet2; 2] {
        match self {
            MapExpr::Identity => p,
            MapExpr::Constant(c) => [Jet2::constant(c[0]), Jet2::constant(c[1])],
            MapExpr::Linear(m) => [
                p[0] * m[0][0] + p[1] * m[0][1],
                p[0] * m[1][0] + p[1] * m[1][1],
            ],
            MapExpr::RadialBump { p: order } => {
                let r2 = p[0] * p[0] + p[1] * p[1];
                if r2.value() <= CUTOFF_LO * CUTOFF_LO {
                    return [Jet2::constant(0.0), Jet2::constant(0.0)];
                }
                let r = r2.sqrt();
                let theta = Jet2::atan2(&p[1], &p[0]);
                let amp = cutoff(r) * (theta * (*order as f64)).cos() * r.recip();
                [amp * p[0], amp * p[1]]
            }
            MapExpr::FourierField { cos_coeff, sin_coeff } => {
                let r2 = p[0] * p[0] + p[1] * p[1];
                if r2.value() <= CUTOFF_LO * CUTOFF_LO {
                    return [Jet2::constant(0.0), Jet2::constant(0.0)];
                }
                let r = r2.sqrt();
                let theta = Jet2::atan2(&p[1], &p[0]);
                let chi = cutoff(r);
                let mut out = [Jet2::constant(0.0), Jet2::constant(0.0)];
                for (k, a) in cos_coeff.iter().enumerate() {
                    let c = (theta * (k as f64)).cos();
                    out[0] = out[0] + c * a[0];
                    out[1] = out[1] + c * a[1];
                }
                for (k, b) in sin_coeff.iter().enumerate() {
                    let s = (theta * (k as f64)).sin();
                    out[0] = out[0] + s * b[0];
                    out[1] = out[1] + s * b[1];
                }
                [chi * out[0], chi * out[1]]
            }
            MapExpr::Sum(terms) => {
                let mut acc = [Jet2::constant(0.0), Jet2::constant(0.0)];
                for t in terms {
                    let v = t.eval_jets(p);
                    acc[0] = acc[0] + v[0];
                    acc[1] = acc[1] + v[1];
                }
                acc
            }
            MapExpr::Scale(s, inner) => {
                let v = inner.eval_jets(p);
                [v[0] * *s, v[1] * *s]
            }
            MapExpr::Compose(outer, inner) => outer.eval_jets(inner.eval_jets(p)),
        }
    }

    pub fn value(&self, x: [f64; 2]) -> [f64; 2] {
        let v = self.eval_jets(seed_point(x[0], x[1]));
        [v[0].value(), v[1].value()]
    }

    /// J[i][j] = ∂φ_i/∂x_j.
    pub fn jacobian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let v = self.eval_jets(seed_point(x[0], x[1]));
        [v[0].grad(), v[1].grad()]
    }

    /// second[i] = (∂²φ_i/∂x², ∂²φ_i/∂x∂y, ∂²φ_i/∂y²).
    pub fn second(&self, x: [f64; 2]) -> [[f64; 3]; 2] {
        let v = self.eval_jets(seed_point(x[0], x[1]));
        [v[0].hess(), v[1].hess()]
    }

    /// third[i] = (xxx, xxy, xyy, yyy) of component i.
    pub fn third(&self, x: [f64; 2]) -> [[f64; 4]; 2] {
        let v = self.eval_jets(seed_point(x[0], x[1]));
        [v[0].third(), v[1].third()]
    }

    /// Exact inverse where the catalog admits one; `None` otherwise.
    pub fn exact_inverse(&self) -> Option<MapExpr> {
        match self {
            MapExpr::Identity => Some(MapExpr::Identity),
            MapExpr::Linear(m) => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-14 {
                    return None;
                }
                Some(MapExpr::Linear([
                    [m[1][1] / det, -m[0][1] / det],
                    [-m[1][0] / det, m[0][0] / det],
                ]))
            }
            MapExpr::Compose(outer, inner) => {
                let oi = outer.exact_inverse()?;
                let ii = inner.exact_inverse()?;
                Some(MapExpr::compose(ii, oi))
            }
            _ => None,
        }
    }

    /// Damped-Newton inversion of y = φ(x) from a starting guess, to 1e-12.
    pub fn invert(&self, y: [f64; 2], guess: [f64; 2]) -> Result<[f64; 2]> {
        let mut x = guess;
        for _ in 0..60 {
            let v = self.value(x);
            let r = [v[0] - y[0], v[1] - y[1]];
            let res = (r[0] * r[0] + r[1] * r[1]).sqrt();
            if res < 1e-13 {
                return Ok(x);
            }
            let j = self.jacobian(x);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 {
                return Err(Error::NonInjectiveMap(
                    "singular Jacobian during Newton inversion".into(),
                ));
            }
            let dx = [
                (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            ];
            let mut step = 1.0;
            // damping: accept first step that reduces the residual
            for _ in 0..30 {
                let cand = [x[0] - step * dx[0], x[1] - step * dx[1]];
                let cv = self.value(cand);
                let cr = [cv[0] - y[0], cv[1] - y[1]];
                if (cr[0] * cr[0] + cr[1] * cr[1]).sqrt() < res {
                    x = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        let v = self.value(x);
        let r = ((v[0] - y[0]).powi(2) + (v[1] - y[1]).powi(2)).sqrt();
        if r < 1e-10 {
            Ok(x)
        } else {
            Err(Error::NonInjectiveMap(format!(
                "Newton inversion stalled, residual {r:.3e}"
            )))
        }
    }
}

/// Arc-length aware boundary sampling of ∂(φ(disk)): positions, unit outer
/// normals, signed curvature, unit tangents and periodic-trapezoid quadrature
/// weights at the images of equispaced circle points.
#[derive(Clone, Debug)]
pub struct BoundaryGeom {
    pub map: MapExpr,
    /// reference parameter angles θ_i = 2πi/n
    pub ref_angle: Vec<f64>,
    pub position: Vec<[f64; 2]>,
    pub normal: Vec<[f64; 2]>,
    pub tangent: Vec<[f64; 2]>,
    /// signed curvature, +1 on the unit circle
    pub curvature: Vec<f64>,
    /// |dy/dθ|
    pub speed: Vec<f64>,
    /// quadrature weight = speed · 2π/n
    pub weight: Vec<f64>,
    /// true when samples are uniform in the reference parameter
    pub uniform_param: bool,
}

impl BoundaryGeom {
    pub fn len(&self) -> usize {
        self.ref_angle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ref_angle.is_empty()
    }

    /// Reference circle point for sample i.
    pub fn ref_point(&self, i: usize) -> [f64; 2] {
        [self.ref_angle[i].cos(), self.ref_angle[i].sin()]
    }

    /// ∮ f dσ by the periodic trapezoid rule (spectral on smooth data).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weight).map(|(v, w)| v * w).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Area of the enclosed domain, ½∮ y·ν dσ.
    pub fn area(&self) -> f64 {
        let f: Vec<f64> = self
            .position
            .iter()
            .zip(&self.normal)
            .map(|(p, n)| 0.5 * (p[0] * n[0] + p[1] * n[1]))
            .collect();
        self.integrate(&f)
    }
}

/// Build boundary geometry from exact map derivatives.
///
/// Rejects maps whose boundary image self-intersects (turning-number check
/// plus segment test) or whose Jacobian degenerates on the boundary.
pub fn build_boundary(map: &MapExpr, n_samples: usize) -> Result<BoundaryGeom> {
    if n_samples < 16 {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples} < 16"
        )));
    }
    let n = n_samples;
    let mut ref_angle = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    let mut normal = Vec::with_capacity(n);
    let mut tangent = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let dth = 2.0 * std::f64::consts::PI / n as f64;

    for i in 0..n {
        let th = i as f64 * dth;
        let (s, c) = th.sin_cos();
        let jets = map.eval_jets(seed_point(c, s));
        let pos = [jets[0].value(), jets[1].value()];
        let j = [jets[0].grad(), jets[1].grad()];
        let h = [jets[0].hess(), jets[1].hess()];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det <= 0.0 {
            return Err(Error::NonInjectiveMap(format!(
                "Jacobian determinant {det:.3e} ≤ 0 at boundary angle θ = {th:.6}"
            )));
        }
        // curve derivative in θ: y' = J x', y'' = D²φ[x',x'] + J x'' with
        // x' = (−sin, cos), x'' = −(cos, sin)
        let xp = [-s, c];
        let xpp = [-c, -s];
        let yp = [
            j[0][0] * xp[0] + j[0][1] * xp[1],
            j[1][0] * xp[0] + j[1][1] * xp[1],
        ];
        let contract = |hh: [f64; 3]| {
            hh[0] * xp[0] * xp[0] + 2.0 * hh[1] * xp[0] * xp[1] + hh[2] * xp[1] * xp[1]
        };
        let ypp = [
            contract(h[0]) + j[0][0] * xpp[0] + j[0][1] * xpp[1],
            contract(h[1]) + j[1][0] * xpp[0] + j[1][1] * xpp[1],
        ];
        let sp = (yp[0] * yp[0] + yp[1] * yp[1]).sqrt();
        let t = [yp[0] / sp, yp[1] / sp];
        let nu = [t[1], -t[0]];
        let cross = yp[0] * ypp[1] - yp[1] * ypp[0];
        ref_angle.push(th);
        position.push(pos);
        tangent.push(t);
        normal.push(nu);
        curvature.push(cross / (sp * sp * sp));
        speed.push(sp);
        weight.push(sp * dth);
    }

    // turning number of the tangent must be +1 for a simple positively
    // oriented curve
    let mut total_turn = 0.0;
    for i in 0..n {
        let a = tangent[i];
        let b = tangent[(i + 1) % n];
        total_turn += (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
    }
    let turns = total_turn / (2.0 * std::f64::consts::PI);
    if (turns - 1.0).abs() > 0.25 {
        return Err(Error::NonInjectiveMap(format!(
            "boundary turning number {turns:.3} ≠ 1"
        )));
    }
    // pairwise segment intersection test (skip neighbors)
    for i in 0..n {
        let a0 = position[i];
        let a1 = position[(i + 1) % n];
        for k in i + 2..n {
            if i == 0 && k == n - 1 {
                continue;
            }
            let b0 = position[k];
            let b1 = position[(k + 1) % n];
            if segments_intersect(a0, a1, b0, b1) {
                return Err(Error::NonInjectiveMap(format!(
                    "boundary self-intersection between segments {i} and {k}"
                )));
            }
        }
    }

    Ok(BoundaryGeom {
        map: map.clone(),
        ref_angle,
        position,
        normal,
        tangent,
        curvature,
        speed,
        weight,
        uniform_param: true,
    })
}

fn segments_intersect(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let d1 = d(a0, a1, b0);
    let d2 = d(a0, a1, b1);
    let d3 = d(b0, b1, a0);
    let d4 = d(b0, b1, a1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Spectral d/dθ of periodic samples (Fourier differentiation).
pub fn spectral_theta_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    for (i, c) in buf.iter_mut().enumerate() {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        // drop the Nyquist mode for odd-order differentiation
        let k = if n % 2 == 0 && i == n / 2 { 0.0 } else { k };
        *c = Complex::new(0.0, k) * *c;
    }
    ifft.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Tangential divergence from ambient data: div_∂Ω f = div f − [(∇f)ν]·ν.
///
/// Exact given exact Jacobians; the Jacobian argument is mandatory.
pub fn tangential_divergence(
    bg: &BoundaryGeom,
    jacobians: Option<&[[[f64; 2]; 2]]>,
) -> Result<Vec<f64>> {
    let jac = jacobians.ok_or_else(|| {
        Error::InvalidArgument("tangential divergence requires the field Jacobian".into())
    })?;
    if jac.len() != bg.len() {
        return Err(Error::InvalidArgument(format!(
            "Jacobian count {} ≠ boundary sample count {}",
            jac.len(),
            bg.len()
        )));
    }
    Ok(jac
        .iter()
        .zip(&bg.normal)
        .map(|(j, nu)| {
            let div = j[0][0] + j[1][1];
            let jn = [
                j[0][0] * nu[0] + j[0][1] * nu[1],
                j[1][0] * nu[0] + j[1][1] * nu[1],
            ];
            div - (jn[0] * nu[0] + jn[1] * nu[1])
        })
        .collect())
}

/// Tangential divergence of a field known only on the curve:
/// in 2D, div_∂Ω f = t̂ · df/ds.
pub fn tangential_divergence_spectral(bg: &BoundaryGeom, values: &[[f64; 2]]) -> Result<Vec<f64>> {
    check_uniform(bg, values.len())?;
    let fx: Vec<f64> = values.iter().map(|v| v[0]).collect();
    let fy: Vec<f64> = values.iter().map(|v| v[1]).collect();
    let dfx = spectral_theta_derivative(&fx);
    let dfy = spectral_theta_derivative(&fy);
    Ok((0..bg.len())
        .map(|i| (bg.tangent[i][0] * dfx[i] + bg.tangent[i][1] * dfy[i]) / bg.speed[i])
        .collect())
}

/// Tangential gradient of a boundary scalar: (dg/ds)·t̂.
pub fn tangential_gradient(bg: &BoundaryGeom, values: &[f64]) -> Result<Vec<[f64; 2]>> {
    check_uniform(bg, values.len())?;
    let dg = spectral_theta_derivative(values);
    Ok((0..bg.len())
        .map(|i| {
            let g = dg[i] / bg.speed[i];
            [g * bg.tangent[i][0], g * bg.tangent[i][1]]
        })
        .collect())
}

/// Tangential Laplacian on a closed curve: Δ_∂Ω u = (1/s)·d/dθ[(1/s)·du/dθ],
/// computed by Fourier differentiation in the uniform parameter.
pub fn tangential_laplacian(bg: &BoundaryGeom, values: &[f64]) -> Result<Vec<f64>> {
    check_uniform(bg, values.len())?;
    let du = spectral_theta_derivative(values);
    let scaled: Vec<f64> = du.iter().zip(&bg.speed).map(|(d, s)| d / s).collect();
    let d2 = spectral_theta_derivative(&scaled);
    Ok(d2.iter().zip(&bg.speed).map(|(d, s)| d / s).collect())
}

fn check_uniform(bg: &BoundaryGeom, len: usize) -> Result<()> {
    if !bg.uniform_param {
        return Err(Error::InvalidArgument(
            "tangential operators require samples uniform in the reference parameter".into(),
        ));
    }
    if len != bg.len() {
        return Err(Error::InvalidArgument(format!(
            "sample count {len} ≠ boundary sample count {}",
            bg.len()
        )));
    }
    Ok(())
}

/// dV/dε for φ_ε = φ + ε·ψ: boundary quadrature of ζ·ν with ζ = ψ∘φ⁻¹,
/// evaluated through the stored reference preimages.
pub fn volume_derivative(psi: &MapExpr, bg: &BoundaryGeom) -> f64 {
    let f: Vec<f64> = (0..bg.len())
        .map(|i| {
            let zeta = psi.value(bg.ref_point(i));
            zeta[0] * bg.normal[i][0] + zeta[1] * bg.normal[i][1]
        })
        .collect();
    bg.integrate(&f)
}
