//! Minimal sparse kernel for the eigensolver: CSR matrices, reverse
//! Cuthill–McKee ordering, and an envelope Cholesky factorization.
//!
//! The assembled operators are 2-D finite element matrices; after RCM the
//! envelope (profile) factorization is within a small factor of optimal and
//! keeps the whole pipeline dependency-free and bit-reproducible.

use crate::{Error, Result};

/// Compressed sparse row matrix (full pattern, not triangle-only).
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            let slot = next[i];
            cols[slot] = j;
            vals[slot] = v;
            next[i] += 1;
        }
        // sort each row, merge duplicates
        let mut row_ptr = vec![0usize; n + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        for i in 0..n {
            let lo = counts[i];
            let hi = counts[i + 1];
            let mut row: Vec<(usize, f64)> = (lo..hi).map(|k| (cols[k], vals[k])).collect();
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr[i + 1] = out_cols.len();
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Maximum |A − Aᵀ| entry relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let mut max_entry = 0.0_f64;
        let mut max_defect = 0.0_f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                max_entry = max_entry.max(v.abs());
                let vt = self.get(j, i);
                max_defect = max_defect.max((v - vt).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_defect / max_entry
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        0.0
    }

    /// Dump in coordinate text format, 17 significant digits.
    pub fn dump<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{} {} {:.16e}", i, self.col_idx[k], self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Reverse Cuthill–McKee ordering; returns perm with perm[new] = old.
pub fn rcm_ordering(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    loop {
        let seed = match (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
        {
            Some(s) => s,
            None => break,
        };
        // double BFS sweep toward a pseudo-peripheral start
        let far = bfs_farthest(seed, adj, &visited);
        let start = bfs_farthest(far, adj, &visited);
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nb.sort_by_key(|&v| (degree[v], v));
            for v in nb {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_farthest(start: usize, adj: &[Vec<usize>], visited: &[bool]) -> usize {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    let mut last = start;
    while let Some(u) = queue.pop_front() {
        last = u;
        for &v in &adj[u] {
            if !visited[v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    last
}

/// Envelope (profile) Cholesky of a symmetric positive definite combination
/// A + shift·B under an RCM permutation.
pub struct EnvelopeChol {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    ptr: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeChol {
    pub fn factor(a: &CsrMatrix, b: &CsrMatrix, shift: f64) -> Result<EnvelopeChol> {
        let n = a.n;
        assert_eq!(b.n, n);
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for m in [a, b] {
            for i in 0..n {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    let j = m.col_idx[k];
                    if j != i {
                        adj[i].push(j);
                    }
                }
            }
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        let perm = rcm_ordering(n, &adj);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i_old in 0..n {
            let i = inv[i_old];
            for &j_old in &adj[i_old] {
                let j = inv[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut ptr = vec![0usize; n + 1];
        for i in 0..n {
            ptr[i + 1] = ptr[i] + (i - first[i] + 1);
        }
        let mut vals = vec![0.0; ptr[n]];
        for (m, c) in [(a, 1.0), (b, shift)] {
            if c == 0.0 {
                continue;
            }
            for i_old in 0..n {
                let i = inv[i_old];
                for k in m.row_ptr[i_old]..m.row_ptr[i_old + 1] {
                    let j = inv[m.col_idx[k]];
                    if j <= i {
                        vals[ptr[i] + (j - first[i])] += c * m.values[k];
                    }
                }
            }
        }
        // in-place row Cholesky over the envelope
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = vals[ptr[i] + (j - fi)];
                if lo < j {
                    let ri = ptr[i] + (lo - fi);
                    let rj = ptr[j] + (lo - fj);
                    let len = j - lo;
                    let mut dot = 0.0;
                    for k in 0..len {
                        dot += vals[ri + k] * vals[rj + k];
                    }
                    s -= dot;
                }
                if j < i {
                    let ljj = vals[ptr[j] + (j - fj)];
                    vals[ptr[i] + (j - fi)] = s / ljj;
                } else {
                    if s <= 0.0 {
                        return Err(Error::Eigensolve(format!(
                            "factorization breakdown at pivot {i} (value {s:.3e}); operator not positive definite"
                        )));
                    }
                    vals[ptr[i] + (j - fi)] = s.sqrt();
                }
            }
        }
        Ok(EnvelopeChol {
            n,
            perm,
            first,
            ptr,
            vals,
        })
    }

    /// Solve (A + shift·B) x = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = rhs[self.perm[i]];
        }
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.vals[self.ptr[i] + (j - fi)] * y[j];
            }
            y[i] = s / self.vals[self.ptr[i] + (i - fi)];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.vals[self.ptr[i] + (i - fi)];
            let xi = y[i];
            for j in fi..i {
                y[j] -= self.vals[self.ptr[i] + (j - fi)] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }

    pub fn profile(&self) -> usize {
        self.vals.len()
    }
}
