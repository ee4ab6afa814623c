//! Generalized symmetric eigensolver A u = γ B u for the assembled pairs:
//! dense reduction for small systems, shift-invert Lanczos with the envelope
//! Cholesky for the rest; cluster detection and elementary symmetric
//! functions of eigenvalue clusters.

use crate::assembly::FormPair;
use crate::sparse::{CsrMatrix, EnvelopeChol};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

/// Below this size the dense reduction is cheaper than factorization setup.
const DENSE_LIMIT: usize = 300;

/// Ascending eigenvalues with B-orthonormal eigenvectors on the free DOFs.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// column vectors, values[i] ↔ vectors[i]
    pub vectors: Vec<Vec<f64>>,
    /// ‖A u − γ B u‖₂ / ‖B u‖₂ per pair
    pub residuals: Vec<f64>,
    /// max |uᵢᵀ B uⱼ − δᵢⱼ| over the computed set
    pub ortho_defect: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Maximal relative-gap cluster of consecutive eigenvalues.
#[derive(Clone, Debug)]
pub struct ClusterF {
    /// 0-based indices into the spectrum (contiguous)
    pub indices: Vec<usize>,
    /// common value (mean over the cluster)
    pub value: f64,
    /// distance to the nearest eigenvalue outside the cluster
    pub outer_gap: f64,
    /// passes the spread and outer-gap conditions needed by the
    /// boundary-integral formulas
    pub usable: bool,
}

impl ClusterF {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn b_dot(b: &CsrMatrix, x: &[f64], y: &[f64]) -> f64 {
    let by = b.matvec_alloc(y);
    x.iter().zip(&by).map(|(a, c)| a * c).sum()
}

/// Solve for the k smallest eigenvalues.
///
/// Deterministic: Lanczos start vectors come from the global seed, and
/// eigenvector signs are fixed so the largest-magnitude entry is positive.
pub fn solve_lowest(pair: &FormPair, k: usize) -> Result<Spectrum> {
    let n = pair.a.n;
    if k == 0 || k > n {
        return Err(Error::Eigensolve(format!(
            "requested {k} eigenvalues from a system of dimension {n}"
        )));
    }
    let mut spec = if n <= DENSE_LIMIT {
        solve_dense(pair, k)?
    } else {
        solve_lanczos(pair, k)?
    };
    // sign convention: largest-|entry| positive
    for v in &mut spec.vectors {
        let mut imax = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[imax].abs() {
                imax = i;
            }
        }
        if v[imax] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    finalize_invariants(pair, &mut spec)?;
    Ok(spec)
}

fn solve_dense(pair: &FormPair, k: usize) -> Result<Spectrum> {
    let n = pair.a.n;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for p in pair.a.row_ptr[i]..pair.a.row_ptr[i + 1] {
            a[(i, pair.a.col_idx[p])] = pair.a.values[p];
        }
        for p in pair.b.row_ptr[i]..pair.b.row_ptr[i + 1] {
            b[(i, pair.b.col_idx[p])] = pair.b.values[p];
        }
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigensolve("B not positive definite (dense path)".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let mut c = a;
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    l.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(eig.eigenvalues[idx]);
        let mut x = eig.eigenvectors.column(idx).into_owned();
        l.transpose().solve_upper_triangular_mut(&mut x);
        vectors.push(x.iter().copied().collect());
    }
    Ok(Spectrum {
        values,
        vectors,
        residuals: Vec::new(),
        ortho_defect: 0.0,
    })
}

fn solve_lanczos(pair: &FormPair, k: usize) -> Result<Spectrum> {
    let n = pair.a.n;
    let a = &pair.a;
    let b = &pair.b;
    // any negative shift keeps A − σB positive definite (A ⪰ 0, B ≻ 0);
    // keep |σ| far below the low eigenvalues so the transformed spectrum
    // 1/(γ−σ) separates them sharply
    let tr_a: f64 = (0..n).map(|i| a.get(i, i)).sum();
    let tr_b: f64 = (0..n).map(|i| b.get(i, i)).sum();
    let sigma = -1e-6 * (tr_a / tr_b).abs().max(1e-6);
    let chol = EnvelopeChol::factor(a, b, -sigma)?; // factors A − σB
    let op = |x: &[f64]| -> Vec<f64> { chol.solve(&b.matvec_alloc(x)) };

    let m_max = (3 * k + 60).min(n).min(300);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::global_seed() ^ 0x1a2c);
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut bv: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut v1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = b_dot(b, &v1, &v1).sqrt();
    v1.iter_mut().for_each(|x| *x /= norm);
    bv.push(b.matvec_alloc(&v1));
    v.push(v1);

    let mut converged = 0usize;
    let mut t_eig: Option<(DVector<f64>, DMatrix<f64>)> = None;
    for j in 0..m_max {
        let mut w = op(&v[j]);
        let aj: f64 = w.iter().zip(&bv[j]).map(|(x, y)| x * y).sum();
        alpha.push(aj);
        for i in (0..=j).rev().take(2) {
            let c = if i == j { aj } else { beta[i] };
            if c != 0.0 {
                for (wi, vi) in w.iter_mut().zip(&v[i]) {
                    *wi -= c * vi;
                }
            }
        }
        // full reorthogonalization, twice
        for _ in 0..2 {
            for i in 0..=j {
                let h: f64 = w.iter().zip(&bv[i]).map(|(x, y)| x * y).sum();
                if h != 0.0 {
                    for (wi, vi) in w.iter_mut().zip(&v[i]) {
                        *wi -= h * vi;
                    }
                }
            }
        }
        let bj = b_dot(b, &w, &w).sqrt();
        if !bj.is_finite() {
            return Err(Error::Eigensolve(
                "Lanczos produced a non-finite norm".into(),
            ));
        }
        if bj < 1e-13 {
            // breakdown: restart with a fresh random direction
            let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..=j {
                let h: f64 = r.iter().zip(&bv[i]).map(|(x, y)| x * y).sum();
                for (ri, vi) in r.iter_mut().zip(&v[i]) {
                    *ri -= h * vi;
                }
            }
            let nr = b_dot(b, &r, &r).sqrt();
            if nr < 1e-13 {
                break; // space exhausted
            }
            r.iter_mut().for_each(|x| *x /= nr);
            beta.push(0.0);
            bv.push(b.matvec_alloc(&r));
            v.push(r);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= bj);
        beta.push(bj);
        bv.push(b.matvec_alloc(&w));
        v.push(w);

        // convergence check on the transformed Ritz values
        let m = j + 1;
        if m >= k + 2 && (m % 4 == 0 || m + 1 == m_max) {
            let (vals, vecs) = tridiag_eigen(&alpha, &beta[..m - 1]);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap());
            converged = 0;
            for &idx in order.iter().take(k) {
                let resid = beta[m - 1].abs() * vecs[(m - 1, idx)].abs();
                if resid <= 1e-11 * vals[idx].abs().max(1e-12) {
                    converged += 1;
                } else {
                    break;
                }
            }
            if converged >= k {
                t_eig = Some((vals, vecs));
                break;
            }
        }
    }
    let m = alpha.len();
    let (vals, vecs) = match t_eig {
        Some(te) if converged >= k => te,
        _ => tridiag_eigen(&alpha, &beta[..m.saturating_sub(1)]),
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap());
    if m < k {
        return Err(Error::Eigensolve(format!(
            "Lanczos basis exhausted at {m} < k = {k}"
        )));
    }
    // Ritz vectors for the dominant transformed eigenvalues, with a small
    // buffer so clusters refine together
    let kk = (k + 4).min(m);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(kk);
    for &idx in order.iter().take(kk) {
        let mut x = vec![0.0; n];
        for (j, vj) in v.iter().take(m).enumerate() {
            let c = vecs[(j, idx)];
            if c != 0.0 {
                for (xi, vji) in x.iter_mut().zip(vj) {
                    *xi += c * vji;
                }
            }
        }
        xs.push(x);
    }
    // subspace-iteration refinement until the wanted residuals are tight
    let mut values;
    let mut vectors;
    let mut rounds = 0;
    loop {
        let (va, ve) = rayleigh_ritz_refine(a, b, &op, &xs)?;
        values = va;
        vectors = ve;
        rounds += 1;
        let mut ok = true;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        for &i in order.iter().take(k) {
            let ax = a.matvec_alloc(&vectors[i]);
            let bx = b.matvec_alloc(&vectors[i]);
            let mut rn = 0.0;
            let mut bn = 0.0;
            for (j, &aj) in ax.iter().enumerate() {
                let r = aj - values[i] * bx[j];
                rn += r * r;
                bn += bx[j] * bx[j];
            }
            if rn.sqrt() / bn.sqrt() > 1e-9 * values[i].abs().max(1.0) {
                ok = false;
                break;
            }
        }
        if ok || rounds >= 8 {
            break;
        }
        xs = vectors.clone();
    }
    let mut ord: Vec<usize> = (0..values.len()).collect();
    ord.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let values: Vec<f64> = ord.iter().take(k).map(|&i| values[i]).collect();
    let vectors: Vec<Vec<f64>> = ord.iter().take(k).map(|&i| vectors[i].clone()).collect();
    Ok(Spectrum {
        values,
        vectors,
        residuals: Vec::new(),
        ortho_defect: 0.0,
    })
}

/// One step of subspace iteration plus a Rayleigh–Ritz projection.
fn rayleigh_ritz_refine(
    a: &CsrMatrix,
    b: &CsrMatrix,
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    xs: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = xs.len();
    let n = a.n;
    let mut ys: Vec<Vec<f64>> = xs.iter().map(|x| op(x)).collect();
    // B-orthonormalize (modified Gram–Schmidt, two passes)
    for _ in 0..2 {
        for i in 0..k {
            for j in 0..i {
                let h = b_dot(b, &ys[i], &ys[j]);
                let yj = ys[j].clone();
                for (yi, yjv) in ys[i].iter_mut().zip(&yj) {
                    *yi -= h * yjv;
                }
            }
            let nrm = b_dot(b, &ys[i], &ys[i]).sqrt();
            if nrm < 1e-14 {
                return Err(Error::Eigensolve("refinement basis collapsed".into()));
            }
            ys[i].iter_mut().for_each(|x| *x /= nrm);
        }
    }
    let mut ap = DMatrix::zeros(k, k);
    let mut bp = DMatrix::zeros(k, k);
    let ays: Vec<Vec<f64>> = ys.iter().map(|y| a.matvec_alloc(y)).collect();
    let bys: Vec<Vec<f64>> = ys.iter().map(|y| b.matvec_alloc(y)).collect();
    for i in 0..k {
        for j in 0..k {
            ap[(i, j)] = ys[i].iter().zip(&ays[j]).map(|(x, y)| x * y).sum();
            bp[(i, j)] = ys[i].iter().zip(&bys[j]).map(|(x, y)| x * y).sum();
        }
    }
    let ap = (&ap + ap.transpose()) * 0.5;
    let bp = (&bp + bp.transpose()) * 0.5;
    let chol = bp
        .cholesky()
        .ok_or_else(|| Error::Eigensolve("projected B not positive definite".into()))?;
    let l = chol.l();
    let mut c = ap;
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    l.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for idx in 0..k {
        values.push(eig.eigenvalues[idx]);
        let mut s = eig.eigenvectors.column(idx).into_owned();
        l.transpose().solve_upper_triangular_mut(&mut s);
        let mut x = vec![0.0; n];
        for (j, yj) in ys.iter().enumerate() {
            let cj = s[j];
            for (xi, yji) in x.iter_mut().zip(yj) {
                *xi += cj * yji;
            }
        }
        vectors.push(x);
    }
    Ok((values, vectors))
}

fn tridiag_eigen(alpha: &[f64], beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Verify and record the Spectrum invariants (B-orthonormality ≤ 1e-8,
/// residual surrogate ≤ 1e-7·max(1, |γ|)).
fn finalize_invariants(pair: &FormPair, spec: &mut Spectrum) -> Result<()> {
    let k = spec.len();
    let b = &pair.b;
    let bxs: Vec<Vec<f64>> = spec.vectors.iter().map(|x| b.matvec_alloc(x)).collect();
    let mut defect = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let d: f64 = spec.vectors[i]
                .iter()
                .zip(&bxs[j])
                .map(|(x, y)| x * y)
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((d - target).abs());
        }
    }
    spec.ortho_defect = defect;
    let mut residuals = Vec::with_capacity(k);
    for i in 0..k {
        let ax = pair.a.matvec_alloc(&spec.vectors[i]);
        let bx = &bxs[i];
        let mut rn = 0.0;
        let mut bn = 0.0;
        for (j, &a_j) in ax.iter().enumerate() {
            let r = a_j - spec.values[i] * bx[j];
            rn += r * r;
            bn += bx[j] * bx[j];
        }
        residuals.push(rn.sqrt() / bn.sqrt());
    }
    spec.residuals = residuals;
    if defect > 1e-8 {
        return Err(Error::Eigensolve(format!(
            "B-orthonormality defect {defect:.3e} exceeds 1e-8"
        )));
    }
    for (i, &r) in spec.residuals.iter().enumerate() {
        if r > 1e-7 * spec.values[i].abs().max(1.0) {
            return Err(Error::Eigensolve(format!(
                "residual {r:.3e} for eigenvalue {i} (γ = {:.6e}) exceeds tolerance",
                spec.values[i]
            )));
        }
    }
    Ok(())
}

/// Partition the computed spectrum into maximal relative-gap clusters.
///
/// The outer-gap condition (> 3τ·γ_F) is the discrete surrogate of the
/// requirement that cluster eigenvalues not coincide with outside ones; the
/// final cluster cannot certify its upper gap and is flagged unusable.
pub fn detect_clusters(spec: &Spectrum, tau: f64) -> Vec<ClusterF> {
    let n = spec.len();
    if n == 0 {
        return Vec::new();
    }
    let scale = spec
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let zero_tol = 1e-8 * scale.max(1.0);
    let near = |a: f64, b: f64| {
        (b - a) <= tau * a.abs().max(b.abs()) || (a.abs() <= zero_tol && b.abs() <= zero_tol)
    };
    let mut clusters = Vec::new();
    let mut start = 0usize;
    for i in 1..=n {
        if i == n || !near(spec.values[i - 1], spec.values[i]) {
            let indices: Vec<usize> = (start..i).collect();
            let value =
                indices.iter().map(|&j| spec.values[j]).sum::<f64>() / indices.len() as f64;
            let below = if start > 0 {
                value - spec.values[start - 1]
            } else {
                f64::INFINITY
            };
            let above = if i < n {
                spec.values[i] - value
            } else {
                f64::INFINITY
            };
            let outer_gap = below.min(above);
            let spread = spec.values[i - 1] - spec.values[start];
            let gap_floor = 3.0 * tau * value.abs().max(zero_tol);
            let usable = i < n // needs one eigenvalue beyond to certify the gap
                && outer_gap > gap_floor
                && spread <= tau * value.abs().max(zero_tol);
            clusters.push(ClusterF {
                indices,
                value,
                outer_gap,
                usable,
            });
            start = i;
        }
    }
    clusters
}

/// Elementary symmetric functions Γ_{F,h}, h = 1..|F|, of the cluster's
/// eigenvalues, by the product recurrence over (1 + γ_j x).
pub fn symmetric_functions(cluster: &ClusterF, spec: &Spectrum) -> Vec<f64> {
    symmetric_functions_of(
        &cluster
            .indices
            .iter()
            .map(|&i| spec.values[i])
            .collect::<Vec<_>>(),
    )
}

/// Same recurrence on a raw list of eigenvalues.
pub fn symmetric_functions_of(values: &[f64]) -> Vec<f64> {
    let mut e = vec![1.0];
    for &g in values {
        let mut next = vec![0.0; e.len() + 1];
        for (i, &c) in e.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c * g;
        }
        e = next;
    }
    e.remove(0);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ProblemKind, ProblemSpec};
    use crate::geometry::MapExpr;
    use crate::mesh::{build_disk_mesh, map_mesh};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn disk_spectrum(kind: ProblemKind, h: f64, k: usize) -> Spectrum {
        let problem = ProblemSpec::new(kind);
        let rm = Arc::new(build_disk_mesh(h).unwrap());
        let mesh = Arc::new(map_mesh(rm, &MapExpr::identity(), problem.fe_degree()).unwrap());
        let (_, pair) = assemble(&problem, mesh).unwrap();
        solve_lowest(&pair, k).unwrap()
    }

    #[test]
    fn p10_disk_eigenvalues_match_bessel_oracle() {
        let spec = disk_spectrum(ProblemKind::P10, 0.1, 5);
        let oracle = crate::special::disk_eigenpairs(crate::special::OracleKind::P10, 5).unwrap();
        for (i, pair) in oracle.iter().enumerate() {
            assert_relative_eq!(spec.values[i], pair.gamma, max_relative = 5e-3);
        }
        // the analytic double eigenvalue is numerically double
        assert_relative_eq!(spec.values[1], spec.values[2], max_relative = 1e-10);
        for &v in &spec.values {
            assert!(v >= -1e-9);
        }
    }

    #[test]
    fn neumann_disk_kernel_is_three_dimensional() {
        let spec = disk_spectrum(ProblemKind::NeumannBiharmonic, 0.25, 6);
        for i in 0..3 {
            assert!(
                spec.values[i].abs() <= 1e-8 * spec.values[5].abs().max(1.0),
                "kernel eigenvalue {} = {:.3e}",
                i,
                spec.values[i]
            );
        }
        assert!(spec.values[3] > 1e-3);
    }

    #[test]
    fn minmax_monotonicity_p20_intermediate_neumann() {
        let k = 10;
        let s_p = disk_spectrum(ProblemKind::P20, 0.25, k);
        let s_i = disk_spectrum(ProblemKind::Intermediate, 0.25, k);
        let s_n = disk_spectrum(ProblemKind::NeumannBiharmonic, 0.25, k);
        for j in 0..k {
            assert!(
                s_p.values[j] >= s_i.values[j] - 1e-8 * s_p.values[j].abs().max(1.0),
                "γ_{j}: P20 {} < I {}",
                s_p.values[j],
                s_i.values[j]
            );
            assert!(
                s_i.values[j] >= s_n.values[j] - 1e-8 * s_i.values[j].abs().max(1.0),
                "γ_{j}: I {} < N {}",
                s_i.values[j],
                s_n.values[j]
            );
        }
    }

    #[test]
    fn refinement_improves_disk_eigenvalues() {
        let oracle = crate::special::disk_eigenpairs(crate::special::OracleKind::P10, 4).unwrap();
        let coarse = disk_spectrum(ProblemKind::P10, 0.3, 4);
        let fine = disk_spectrum(ProblemKind::P10, 0.15, 4);
        for j in 0..4 {
            let e_c = (coarse.values[j] - oracle[j].gamma).abs();
            let e_f = (fine.values[j] - oracle[j].gamma).abs();
            assert!(e_f < e_c, "eigenvalue {j}: coarse {e_c:.3e} fine {e_f:.3e}");
        }
    }

    #[test]
    fn scaling_homogeneity_exact_to_1e10() {
        // dilating the domain by 2 multiplies eigenvalues by 2^{−2(n−m)}
        for (kind, factor) in [
            (ProblemKind::P10, 0.25),
            (ProblemKind::P20, 0.0625),
            (ProblemKind::P21, 0.25),
        ] {
            let problem = ProblemSpec::new(kind);
            let rm = Arc::new(build_disk_mesh(0.3).unwrap());
            let m1 =
                Arc::new(map_mesh(rm.clone(), &MapExpr::identity(), problem.fe_degree()).unwrap());
            let m2 = Arc::new(map_mesh(rm, &MapExpr::dilation(2.0), problem.fe_degree()).unwrap());
            let (_, p1) = assemble(&problem, m1).unwrap();
            let (_, p2) = assemble(&problem, m2).unwrap();
            let s1 = solve_lowest(&p1, 3).unwrap();
            let s2 = solve_lowest(&p2, 3).unwrap();
            for j in 0..3 {
                assert_relative_eq!(s2.values[j] / s1.values[j], factor, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn spectrum_invariants_reported() {
        let spec = disk_spectrum(ProblemKind::P20, 0.15, 4);
        assert!(spec.ortho_defect <= 1e-8);
        for (v, r) in spec.values.iter().zip(&spec.residuals) {
            assert!(*r <= 1e-7 * v.abs().max(1.0), "residual {r:.3e} at γ={v:.3}");
        }
        let oracle = crate::special::disk_eigenpairs(crate::special::OracleKind::P20, 1).unwrap();
        assert_relative_eq!(spec.values[0], oracle[0].gamma, max_relative = 2e-2);
    }

    #[test]
    fn cluster_detection_examples() {
        let fake = |values: Vec<f64>| Spectrum {
            vectors: values.iter().map(|_| vec![0.0]).collect(),
            residuals: vec![0.0; values.len()],
            ortho_defect: 0.0,
            values,
        };
        let spec = fake(vec![5.78, 14.68, 14.68, 26.37]);
        let cl = detect_clusters(&spec, 1e-3);
        assert_eq!(cl.len(), 3);
        assert_eq!(cl[0].indices, vec![0]);
        assert_eq!(cl[1].indices, vec![1, 2]);
        assert!(cl[0].usable && cl[1].usable);
        assert!(!cl[2].usable, "last cluster has no certified outer gap");
        let spec = fake(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(detect_clusters(&spec, 1e-3).len(), 4);
        // degenerate tolerance → a single cluster without an outer gap
        let spec = fake(vec![1.0, 1.5, 2.2]);
        let cl = detect_clusters(&spec, 1.0);
        assert_eq!(cl.len(), 1);
        assert!(!cl[0].usable);
    }

    #[test]
    fn symmetric_function_examples() {
        let e = symmetric_functions_of(&[14.68, 14.68]);
        assert_relative_eq!(e[0], 29.36, max_relative = 1e-12);
        assert_relative_eq!(e[1], 215.5024, max_relative = 1e-12);
        assert_eq!(symmetric_functions_of(&[7.5]), vec![7.5]);
        let with_zero = symmetric_functions_of(&[0.0, 2.0, 3.0]);
        assert_abs_diff_eq!(with_zero[2], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn symmetric_functions_permutation_invariant(
            mut vals in proptest::collection::vec(0.1f64..50.0, 2..5),
            seed in 0u64..1000,
        ) {
            let base = symmetric_functions_of(&vals);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in (1..vals.len()).rev() {
                let j = rng.gen_range(0..=i);
                vals.swap(i, j);
            }
            let shuffled = symmetric_functions_of(&vals);
            for (a, b) in base.iter().zip(&shuffled) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }
}
