//! One-parameter families φ_ε, finite-difference derivatives, eigenvalue
//! branch tracking across multiple eigenvalues, crossing smoothness probes,
//! and a volume-constrained descent flow on the shape.
//!
//! Connectivity stays fixed along every family (vertices move, meshes never
//! regenerate), so discrete eigenvalue branches are smooth in ε and central
//! differences converge at second order.

use crate::assembly::{assemble, FESpace, ProblemSpec};
use crate::eigensolve::{detect_clusters, solve_lowest, symmetric_functions_of, ClusterF, Spectrum};
use crate::geometry::{build_boundary, BoundaryGeom, MapExpr};
use crate::hadamard::{
    criticality_residual, gradient_density, nagy_matrix, nagy_slopes, recover_traces, TraceBundle,
};
use crate::mesh::{map_mesh, RefMesh};
use crate::{Error, Result};
use std::sync::Arc;

/// A problem solved on one mapped domain, with everything the
/// boundary-integral formulas need.
pub struct SolvedProblem {
    pub problem: ProblemSpec,
    pub ref_mesh: Arc<RefMesh>,
    pub base_map: MapExpr,
    pub space: FESpace,
    pub spectrum: Spectrum,
    pub boundary: BoundaryGeom,
}

/// Assemble and solve `problem` on `map`(disk) and build its boundary.
pub fn solve_on_mesh(
    problem: &ProblemSpec,
    ref_mesh: Arc<RefMesh>,
    map: &MapExpr,
    k: usize,
    n_boundary: usize,
) -> Result<SolvedProblem> {
    let mesh = Arc::new(map_mesh(ref_mesh.clone(), map, problem.fe_degree())?);
    let (space, pair) = assemble(problem, mesh)?;
    let spectrum = solve_lowest(&pair, k)?;
    let boundary = build_boundary(map, n_boundary)?;
    Ok(SolvedProblem {
        problem: problem.clone(),
        ref_mesh,
        base_map: map.clone(),
        space,
        spectrum,
        boundary,
    })
}

impl SolvedProblem {
    /// Recovered boundary traces for the given eigenvalue indices.
    pub fn traces_for(&self, indices: &[usize]) -> Result<Vec<TraceBundle>> {
        indices
            .iter()
            .map(|&i| {
                recover_traces(
                    &self.space,
                    &self.spectrum.vectors[i],
                    self.spectrum.values[i],
                    &self.boundary,
                )
            })
            .collect()
    }

    pub fn clusters(&self, tau: f64) -> Vec<ClusterF> {
        detect_clusters(&self.spectrum, tau)
    }
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

/// Central difference at 0 from a sampled series (ε, g(ε)). Requires a
/// symmetric ±ε₀ pair; uses the smallest one.
pub fn fd_derivative(series: &[(f64, f64)]) -> Result<f64> {
    let pair = smallest_symmetric_pair(series)?;
    let ((em, gm), (ep, gp)) = pair;
    let _ = em;
    Ok((gp - gm) / (2.0 * ep))
}

/// Richardson-extrapolated central difference from the two smallest
/// symmetric pairs: (4·D(ε) − D(2ε))/3 for ε-ratios of 2, generalized to the
/// actual ratio.
pub fn fd_derivative_richardson(series: &[(f64, f64)]) -> Result<f64> {
    let mut pairs = symmetric_pairs(series)?;
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(
            "Richardson extrapolation needs two symmetric ε₀ levels".into(),
        ));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (e1, d1) = pairs[0];
    let (e2, d2) = pairs[1];
    let r = (e2 / e1).powi(2);
    Ok((r * d1 - d2) / (r - 1.0))
}

fn symmetric_pairs(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for &(e, gp) in series.iter().filter(|(e, _)| *e > 0.0) {
        let partner = series
            .iter()
            .find(|(e2, _)| (e2 + e).abs() <= 1e-12 * e.abs().max(1e-30));
        match partner {
            Some(&(_, gm)) => out.push((e, (gp - gm) / (2.0 * e))),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "ε grid not symmetric: no partner for ε = {e}"
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(
            "ε grid contains no symmetric ±ε₀ pair".into(),
        ));
    }
    Ok(out)
}

#[allow(clippy::type_complexity)]
fn smallest_symmetric_pair(series: &[(f64, f64)]) -> Result<((f64, f64), (f64, f64))> {
    let mut best: Option<((f64, f64), (f64, f64))> = None;
    for &(e, gp) in series.iter().filter(|(e, _)| *e > 0.0) {
        if let Some(&(em, gm)) = series
            .iter()
            .find(|(e2, _)| (e2 + e).abs() <= 1e-12 * e.abs().max(1e-30))
        {
            if best.is_none() || e < best.unwrap().1 .0 {
                best = Some(((em, gm), (e, gp)));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("ε grid contains no symmetric ±ε₀ pair".into()))
}

// ---------------------------------------------------------------------------
// eigenvalue branches along a family
// ---------------------------------------------------------------------------

/// Eigenvalue branches g_i(ε) along φ_ε = base + ε·ψ, matched across the grid
/// by maximal B-overlap of eigenvectors.
pub struct EigenPath {
    pub eps: Vec<f64>,
    pub spectra: Vec<Spectrum>,
    /// branch\[b\]\[i\] = value of branch b at ε_i
    pub branches: Vec<Vec<f64>>,
    /// smallest overlap used during matching
    pub min_overlap: f64,
    /// matching ambiguity detected (overlap < 0.7)
    pub flagged: bool,
}

/// Track `count` branches of `problem` along the ε grid.
pub fn eigen_path(
    problem: &ProblemSpec,
    ref_mesh: Arc<RefMesh>,
    base: &MapExpr,
    psi: &MapExpr,
    eps_grid: &[f64],
    count: usize,
) -> Result<EigenPath> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("empty ε grid".into()));
    }
    let mut eps = eps_grid.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut spectra = Vec::with_capacity(eps.len());
    let mut pairs = Vec::with_capacity(eps.len());
    for &e in &eps {
        let map = MapExpr::perturbed(base.clone(), psi, e);
        let mesh = Arc::new(map_mesh(ref_mesh.clone(), &map, problem.fe_degree())?);
        let (_, pair) = assemble(problem, mesh)?;
        let spec = solve_lowest(&pair, count)?;
        pairs.push(pair);
        spectra.push(spec);
    }
    // match consecutive spectra by B-overlap
    let mut min_overlap = 1.0_f64;
    // perm[i][s] = branch label of sorted index s at grid point i
    let mut perm: Vec<Vec<usize>> = vec![(0..count).collect()];
    for i in 1..eps.len() {
        let b = &pairs[i].b;
        let prev = &spectra[i - 1];
        let cur = &spectra[i];
        let mut assigned = vec![usize::MAX; count];
        let mut used = vec![false; count];
        // overlap matrix |x_prev^T B x_cur|
        let mut overlaps = vec![vec![0.0; count]; count];
        for (s_cur, xc) in cur.vectors.iter().enumerate() {
            let bx = b.matvec_alloc(xc);
            for (s_prev, xp) in prev.vectors.iter().enumerate() {
                overlaps[s_prev][s_cur] =
                    xp.iter().zip(&bx).map(|(a, c)| a * c).sum::<f64>().abs();
            }
        }
        // greedy max assignment
        let mut entries: Vec<(f64, usize, usize)> = Vec::new();
        for (p, row) in overlaps.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                entries.push((v, p, c));
            }
        }
        entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut prev_done = vec![false; count];
        for (v, p, c) in entries {
            if prev_done[p] || used[c] {
                continue;
            }
            prev_done[p] = true;
            used[c] = true;
            assigned[c] = perm[i - 1][p];
            min_overlap = min_overlap.min(v);
        }
        perm.push(assigned);
    }
    let mut branches = vec![vec![0.0; eps.len()]; count];
    for (i, spec) in spectra.iter().enumerate() {
        for s in 0..count {
            branches[perm[i][s]][i] = spec.values[s];
        }
    }
    Ok(EigenPath {
        eps,
        spectra,
        branches,
        min_overlap,
        flagged: min_overlap < 0.7,
    })
}

// ---------------------------------------------------------------------------
// Rellich–Nagy comparison
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct NagyReport {
    pub cluster_value: f64,
    pub predicted: Vec<f64>,
    pub fd: Vec<f64>,
    pub max_rel_dev: f64,
    pub min_overlap: f64,
    pub conclusive: bool,
}

/// Compare the predicted branch slopes (eigenvalues of the boundary-integral
/// matrix) with matched central finite differences across ±ε₀.
pub fn nagy_check(
    solved: &SolvedProblem,
    cluster: &ClusterF,
    psi: &MapExpr,
    eps0: f64,
) -> Result<NagyReport> {
    let traces = solved.traces_for(&cluster.indices)?;
    let mat = nagy_matrix(&solved.problem, cluster, psi, &traces, &solved.boundary)?;
    let predicted = nagy_slopes(&mat);
    let m = cluster.len();
    // solves at ±ε₀ on the same reference mesh
    let k = solved.spectrum.len();
    let solve_at = |e: f64| -> Result<(Spectrum, crate::assembly::FormPair)> {
        let map = MapExpr::perturbed(solved.base_map.clone(), psi, e);
        let mesh = Arc::new(map_mesh(
            solved.ref_mesh.clone(),
            &map,
            solved.problem.fe_degree(),
        )?);
        let (_, pair) = assemble(&solved.problem, mesh)?;
        let spec = solve_lowest(&pair, k)?;
        Ok((spec, pair))
    };
    let (sm, _) = solve_at(-eps0)?;
    let (sp, pairp) = solve_at(eps0)?;
    // match cluster eigenvectors across −ε₀ → +ε₀ directly (the multiple
    // point at 0 carries no preferred basis)
    let mut fd = Vec::with_capacity(m);
    let mut min_overlap = 1.0_f64;
    let mut used = vec![false; m];
    for &i in &cluster.indices {
        let bx: Vec<Vec<f64>> = cluster
            .indices
            .iter()
            .map(|&j| pairp.b.matvec_alloc(&sp.vectors[j]))
            .collect();
        let mut best = (0usize, -1.0);
        for (slot, bxj) in bx.iter().enumerate() {
            if used[slot] {
                continue;
            }
            let ov = sm.vectors[i]
                .iter()
                .zip(bxj)
                .map(|(a, c)| a * c)
                .sum::<f64>()
                .abs();
            if ov > best.1 {
                best = (slot, ov);
            }
        }
        used[best.0] = true;
        min_overlap = min_overlap.min(best.1);
        let j = cluster.indices[best.0];
        fd.push((sp.values[j] - sm.values[i]) / (2.0 * eps0));
    }
    fd.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = predicted
        .iter()
        .chain(fd.iter())
        .fold(0.0_f64, |mx, v| mx.max(v.abs()))
        .max(1e-3 * cluster.value.abs().max(1.0));
    let max_rel_dev = predicted
        .iter()
        .zip(&fd)
        .map(|(p, f)| (p - f).abs() / scale)
        .fold(0.0_f64, f64::max);
    Ok(NagyReport {
        cluster_value: cluster.value,
        predicted,
        fd,
        max_rel_dev,
        min_overlap,
        conclusive: min_overlap >= 0.7,
    })
}

// ---------------------------------------------------------------------------
// crossing probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CrossingReport {
    pub status: CrossingStatus,
    pub t_star: f64,
    /// 0-based sorted indices involved in the crossing
    pub f_indices: Vec<usize>,
    pub gamma_left_slope: f64,
    pub gamma_right_slope: f64,
    pub sorted_left_slope: f64,
    pub sorted_right_slope: f64,
    /// |L−R| of Γ relative to the sorted slope scale
    pub gamma_slope_mismatch: f64,
    /// |L−R| of the sorted eigenvalue on the same scale
    pub sorted_slope_kink: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossingStatus {
    Found,
    Inconclusive,
}

/// Exact 2×2 matrix family A(ε) = [[1+ε, ε], [ε, 1−ε]]: the sorted
/// eigenvalues 1 ± |ε|√2 kink at 0 while their sum stays constant.
pub fn crossing_toy() -> CrossingReport {
    let s2 = 2.0_f64.sqrt();
    CrossingReport {
        status: CrossingStatus::Found,
        t_star: 0.0,
        f_indices: vec![0, 1],
        gamma_left_slope: 0.0,
        gamma_right_slope: 0.0,
        sorted_left_slope: s2,
        sorted_right_slope: -s2,
        gamma_slope_mismatch: 0.0,
        sorted_slope_kink: 2.0 * s2 / s2,
    }
}

/// Scan the family φ_t = I + t·ψ for a crossing of two sorted eigenvalue
/// curves inside the window, then compare one-sided slopes of the sorted
/// eigenvalue against those of Γ_{F,1} over the crossing cluster.
pub fn crossing_probe(
    problem: &ProblemSpec,
    ref_mesh: Arc<RefMesh>,
    psi: &MapExpr,
    window: (f64, f64),
    k: usize,
) -> Result<CrossingReport> {
    let n_scan = 9;
    let values_at = |t: f64| -> Result<Vec<f64>> {
        let map = MapExpr::perturbed(MapExpr::identity(), psi, t);
        let mesh = Arc::new(map_mesh(ref_mesh.clone(), &map, problem.fe_degree())?);
        let (_, pair) = assemble(problem, mesh)?;
        Ok(solve_lowest(&pair, k)?.values)
    };
    let ts: Vec<f64> = (0..n_scan)
        .map(|i| window.0 + (window.1 - window.0) * i as f64 / (n_scan - 1) as f64)
        .collect();
    let mut best: Option<(usize, usize, f64)> = None; // (grid idx, pair idx, gap)
    let mut scans = Vec::with_capacity(ts.len());
    for (ti, &t) in ts.iter().enumerate() {
        let vals = values_at(t)?;
        for j in 0..k - 1 {
            let gap = (vals[j + 1] - vals[j]) / vals[j + 1].abs().max(1.0);
            // interior minima only
            if ti > 0 && ti + 1 < ts.len() && (best.is_none() || gap < best.unwrap().2) {
                best = Some((ti, j, gap));
            }
        }
        scans.push(vals);
    }
    let (ti, j, _) = best.ok_or_else(|| Error::InvalidArgument("empty scan".into()))?;
    // golden-section refinement of the gap minimum around ts[ti]
    let mut lo = ts[ti - 1];
    let mut hi = ts[ti + 1];
    let gap_at = |t: f64| -> Result<f64> {
        let vals = values_at(t)?;
        Ok(vals[j + 1] - vals[j])
    };
    for _ in 0..24 {
        let m1 = lo + 0.382 * (hi - lo);
        let m2 = lo + 0.618 * (hi - lo);
        if gap_at(m1)? < gap_at(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-4 * (window.1 - window.0) {
            break;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let vals_star = values_at(t_star)?;
    let gap_rel = (vals_star[j + 1] - vals_star[j]) / vals_star[j + 1].abs().max(1.0);
    if gap_rel > 5e-3 {
        return Ok(CrossingReport {
            status: CrossingStatus::Inconclusive,
            t_star,
            f_indices: vec![j, j + 1],
            gamma_left_slope: 0.0,
            gamma_right_slope: 0.0,
            sorted_left_slope: 0.0,
            sorted_right_slope: 0.0,
            gamma_slope_mismatch: 0.0,
            sorted_slope_kink: 0.0,
        });
    }
    // the crossing cluster: expand to neighbors that stay within 30× the gap
    let mut f_lo = j;
    let mut f_hi = j + 1;
    let near = 30.0 * (vals_star[j + 1] - vals_star[j]).max(1e-9 * vals_star[j].abs());
    while f_lo > 0 && vals_star[f_lo] - vals_star[f_lo - 1] < near {
        f_lo -= 1;
    }
    while f_hi + 1 < k && vals_star[f_hi + 1] - vals_star[f_hi] < near {
        f_hi += 1;
    }
    let f_indices: Vec<usize> = (f_lo..=f_hi).collect();
    // one-sided slopes at t* ± δ
    let delta = 0.02 * (window.1 - window.0).max(1e-3);
    let vals_m = values_at(t_star - delta)?;
    let vals_p = values_at(t_star + delta)?;
    let gsum = |v: &[f64]| -> f64 { f_indices.iter().map(|&i| v[i]).sum() };
    let gamma_left = (gsum(&vals_star) - gsum(&vals_m)) / delta;
    let gamma_right = (gsum(&vals_p) - gsum(&vals_star)) / delta;
    let sorted_left = (vals_star[j] - vals_m[j]) / delta;
    let sorted_right = (vals_p[j] - vals_star[j]) / delta;
    let scale = sorted_left
        .abs()
        .max(sorted_right.abs())
        .max(1e-6 * vals_star[j].abs());
    Ok(CrossingReport {
        status: CrossingStatus::Found,
        t_star,
        f_indices,
        gamma_left_slope: gamma_left,
        gamma_right_slope: gamma_right,
        sorted_left_slope: sorted_left,
        sorted_right_slope: sorted_right,
        gamma_slope_mismatch: (gamma_left - gamma_right).abs() / scale,
        sorted_slope_kink: (sorted_left - sorted_right).abs() / scale,
    })
}

// ---------------------------------------------------------------------------
// volume-constrained descent flow
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FlowState {
    pub map: MapExpr,
    pub step_count: usize,
    pub eta: f64,
    pub gamma_history: Vec<f64>,
    pub volume_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub stationary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Stepped,
    Stationary,
}

pub struct Flow {
    pub problem: ProblemSpec,
    pub ref_mesh: Arc<RefMesh>,
    pub n_boundary: usize,
    /// 0-based eigenvalue indices forming the cluster F
    pub f_indices: Vec<usize>,
    /// which symmetric function Γ_{F,h} to descend (1-based)
    pub h_index: usize,
    pub cluster_tau: f64,
    /// criticality residual below which the shape counts as stationary
    pub stationary_tol: f64,
    pub state: FlowState,
    initial_volume: f64,
}

struct FlowEval {
    gamma_fh: f64,
    volume: f64,
    residual: f64,
    velocity: Vec<f64>,
    velocity_rel: f64,
    boundary: BoundaryGeom,
    #[allow(dead_code)]
    cluster_value: f64,
}

impl Flow {
    pub fn new(
        problem: ProblemSpec,
        ref_mesh: Arc<RefMesh>,
        start: MapExpr,
        f_indices: Vec<usize>,
        h_index: usize,
        eta: f64,
    ) -> Result<Flow> {
        if f_indices.is_empty() || h_index == 0 || h_index > f_indices.len() {
            return Err(Error::InvalidArgument(
                "flow needs a nonempty cluster and 1 ≤ h ≤ |F|".into(),
            ));
        }
        let n_boundary = 256;
        let bg = build_boundary(&start, n_boundary)?;
        let initial_volume = bg.area();
        Ok(Flow {
            problem,
            ref_mesh,
            n_boundary,
            f_indices,
            h_index,
            cluster_tau: 1e-3,
            stationary_tol: 5e-2,
            state: FlowState {
                map: start,
                step_count: 0,
                eta,
                gamma_history: Vec::new(),
                volume_history: Vec::new(),
                residual_history: Vec::new(),
                stationary: false,
            },
            initial_volume,
        })
    }

    fn evaluate(&self, map: &MapExpr) -> Result<FlowEval> {
        let k = self.f_indices.iter().max().unwrap() + 2;
        let solved = solve_on_mesh(&self.problem, self.ref_mesh.clone(), map, k, self.n_boundary)?;
        let clusters = solved.clusters(self.cluster_tau);
        let cluster = clusters
            .into_iter()
            .find(|c| c.indices.contains(&self.f_indices[0]))
            .ok_or_else(|| Error::UnusableCluster("cluster lost along the flow".into()))?;
        if cluster.indices != self.f_indices {
            // the flow may merge or split clusters; require the tracked set
            return Err(Error::UnusableCluster(format!(
                "tracked indices {:?} no longer form a cluster (found {:?})",
                self.f_indices, cluster.indices
            )));
        }
        let traces = solved.traces_for(&cluster.indices)?;
        let gammas: Vec<f64> = cluster.indices.iter().map(|&i| solved.spectrum.values[i]).collect();
        let gamma_fh = symmetric_functions_of(&gammas)[self.h_index - 1];
        let density = gradient_density(
            &self.problem,
            &cluster,
            self.h_index,
            &traces,
            &solved.boundary,
        )?;
        let (_, residual) = criticality_residual(&self.problem, &traces, &solved.boundary)?;
        let length = solved.boundary.boundary_length();
        let mean = solved.boundary.integrate(&density) / length;
        let velocity: Vec<f64> = density.iter().map(|g| -(g - mean)).collect();
        let v2: Vec<f64> = velocity.iter().map(|v| v * v).collect();
        let vel_l2 = solved.boundary.integrate(&v2).sqrt();
        let g2: Vec<f64> = density.iter().map(|g| g * g).collect();
        let g_l2 = solved.boundary.integrate(&g2).sqrt();
        Ok(FlowEval {
            gamma_fh,
            volume: solved.boundary.area(),
            residual,
            velocity,
            velocity_rel: vel_l2 / g_l2.max(1e-300),
            boundary: solved.boundary,
            cluster_value: cluster.value,
        })
    }

    /// One backtracking descent step; η = 0 leaves the state unchanged.
    pub fn step(&mut self) -> Result<FlowStatus> {
        let eval = self.evaluate(&self.state.map)?;
        if self.state.step_count == 0 {
            self.state.gamma_history.push(eval.gamma_fh);
            self.state.volume_history.push(eval.volume);
            self.state.residual_history.push(eval.residual);
        }
        if eval.residual <= self.stationary_tol || eval.velocity_rel <= self.stationary_tol {
            self.state.stationary = true;
            return Ok(FlowStatus::Stationary);
        }
        if self.state.eta == 0.0 {
            self.state.step_count += 1;
            self.state.gamma_history.push(eval.gamma_fh);
            self.state.volume_history.push(eval.volume);
            self.state.residual_history.push(eval.residual);
            return Ok(FlowStatus::Stepped);
        }
        // normal velocity v·ν on the current boundary, pulled back to a
        // reference vector field: W = (Dφ)⁻¹ (v·ν), low-pass Fourier fit,
        // cutoff extension into the disk
        let bg = &eval.boundary;
        let n = bg.len();
        let mut wx = vec![0.0; n];
        let mut wy = vec![0.0; n];
        for i in 0..n {
            let vvec = [
                eval.velocity[i] * bg.normal[i][0],
                eval.velocity[i] * bg.normal[i][1],
            ];
            let j = self.state.map.jacobian(bg.ref_point(i));
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            wx[i] = (j[1][1] * vvec[0] - j[0][1] * vvec[1]) / det;
            wy[i] = (-j[1][0] * vvec[0] + j[0][0] * vvec[1]) / det;
        }
        let kmax = 24.min(n / 3);
        let field = fourier_field(&bg.ref_angle, &wx, &wy, kmax);
        // backtracking on Γ decrease
        let mut eta = self.state.eta;
        for _ in 0..20 {
            let step_map = MapExpr::sum(vec![
                MapExpr::identity(),
                MapExpr::Scale(eta, Box::new(field.clone())),
            ]);
            let candidate = MapExpr::compose(self.state.map.clone(), step_map);
            match self.evaluate(&candidate) {
                Ok(cand) if cand.gamma_fh < eval.gamma_fh => {
                    // volume projection: rescale to the initial area
                    let scale = (self.initial_volume / cand.volume).sqrt();
                    let corrected = if (scale - 1.0).abs() > 1e-14 {
                        MapExpr::compose(MapExpr::dilation(scale), candidate)
                    } else {
                        candidate
                    };
                    let fin = self.evaluate(&corrected)?;
                    self.state.map = corrected;
                    self.state.step_count += 1;
                    self.state.eta = (eta * 1.5).min(self.state.eta.max(eta * 1.5));
                    self.state.gamma_history.push(fin.gamma_fh);
                    self.state.volume_history.push(fin.volume);
                    self.state.residual_history.push(fin.residual);
                    return Ok(FlowStatus::Stepped);
                }
                _ => {
                    eta *= 0.5;
                }
            }
        }
        self.state.stationary = true;
        Ok(FlowStatus::Stationary)
    }
}

/// Least-squares Fourier fit of boundary vector data, extended into the disk
/// with the radial cutoff.
fn fourier_field(angles: &[f64], wx: &[f64], wy: &[f64], kmax: usize) -> MapExpr {
    let n = angles.len() as f64;
    let mut cos_c = vec![[0.0; 2]; kmax + 1];
    let mut sin_c = vec![[0.0; 2]; kmax + 1];
    for (i, &th) in angles.iter().enumerate() {
        for k in 0..=kmax {
            let (s, c) = (k as f64 * th).sin_cos();
            let w = if k == 0 { 1.0 / n } else { 2.0 / n };
            cos_c[k][0] += w * c * wx[i];
            cos_c[k][1] += w * c * wy[i];
            sin_c[k][0] += w * s * wx[i];
            sin_c[k][1] += w * s * wy[i];
        }
    }
    MapExpr::FourierField {
        cos_coeff: cos_c,
        sin_coeff: sin_c,
    }
}
