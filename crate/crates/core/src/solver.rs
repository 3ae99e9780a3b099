//! Sparse direct solver, Newton iteration and condition estimation.
//!
//! One slab system is solved at a time; the factorization backend is a
//! sequential sparse LU (numerics are kept deterministic run-to-run).

use std::sync::Once;

use faer::prelude::Solve;
use faer::sparse::SparseColMat;

use crate::error::{Error, Result};

/// Coordinate-format matrix entry. Duplicates are summed on factorization.
#[derive(Clone, Copy, Debug)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, val: f64) -> Self {
        Triplet { row, col, val }
    }
}

/// Outcome of one sparse direct solve.
#[derive(Clone, Copy, Debug)]
pub struct LinearSolveReport {
    pub relative_residual: f64,
    pub dimension: usize,
    pub nonzeros: usize,
}

fn seq_backend() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Factorized sparse matrix (LU with pivoting) plus the compressed matrix
/// itself for residual checks, norms and condition estimation.
///
/// A single dense constraint row/column (the mass multiplier) would destroy
/// the fill-reducing ordering, so such systems are factorized in bordered
/// form: sparse LU of the leading block plus explicit elimination of the
/// scalar Schur complement.
pub struct SparseLu {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    backend: Backend,
}

enum Backend {
    Plain(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Bordered {
        inner: faer::sparse::linalg::solvers::Lu<usize, f64>,
        /// border column (coupling of interior unknowns to the multiplier)
        col: Vec<f64>,
        /// border row
        row: Vec<f64>,
        /// A⁻¹·col and A⁻ᵀ·row with their Schur complements
        z: Vec<f64>,
        schur: f64,
        zt: Vec<f64>,
        schur_t: f64,
    },
}

impl SparseLu {
    /// Builds and factorizes an `n` × `n` matrix from coordinate entries.
    pub fn factor(n: usize, entries: &[Triplet]) -> Result<SparseLu> {
        seq_backend();
        if n == 0 {
            return Err(Error::InvalidInput("empty system".into()));
        }
        // Combine duplicates into CSC deterministically.
        for e in entries {
            if e.row >= n || e.col >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({}, {}) outside {n} x {n} matrix",
                    e.row, e.col
                )));
            }
        }
        let (col_ptr, row_idx, values) = Self::combined_csc(n, entries);
        let faer_triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = (0..n)
            .flat_map(|c| {
                let row_idx = &row_idx;
                let values = &values;
                (col_ptr[c]..col_ptr[c + 1])
                    .map(move |k| faer::sparse::Triplet::new(row_idx[k], c, values[k]))
            })
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &faer_triplets)
            .map_err(|e| Error::InvalidInput(format!("bad sparse structure: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU factorization failed: {e:?}")))?;
        Ok(SparseLu { n, col_ptr, row_idx, values, backend: Backend::Plain(lu) })
    }

    /// Factorizes a system whose last unknown is a scalar constraint with a
    /// dense row and column. The leading block is factorized sparsely and
    /// the constraint is eliminated through its scalar Schur complement.
    pub fn factor_bordered(n: usize, entries: &[Triplet], border: usize) -> Result<SparseLu> {
        seq_backend();
        if border + 1 != n {
            return Err(Error::InvalidInput("the constraint must be the last unknown".into()));
        }
        if n < 2 {
            return Err(Error::InvalidInput("bordered system needs interior unknowns".into()));
        }
        let nb = n - 1;
        let mut inner_triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = Vec::new();
        let mut col = vec![0.0; nb];
        let mut row = vec![0.0; nb];
        let mut corner = 0.0;
        for e in entries {
            if e.row >= n || e.col >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({}, {}) outside {n} x {n} matrix",
                    e.row, e.col
                )));
            }
            match (e.row == border, e.col == border) {
                (false, false) => {
                    inner_triplets.push(faer::sparse::Triplet::new(e.row, e.col, e.val))
                }
                (false, true) => col[e.row] += e.val,
                (true, false) => row[e.col] += e.val,
                (true, true) => corner += e.val,
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(nb, nb, &inner_triplets)
            .map_err(|e| Error::InvalidInput(format!("bad sparse structure: {e:?}")))?;
        let inner = mat
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU factorization failed: {e:?}")))?;
        let solve_vec = |rhs: &[f64], transpose: bool| -> Vec<f64> {
            let b = faer::Mat::<f64>::from_fn(nb, 1, |i, _| rhs[i]);
            let x = if transpose { inner.solve_transpose(&b) } else { inner.solve(&b) };
            (0..nb).map(|i| x[(i, 0)]).collect()
        };
        let z = solve_vec(&col, false);
        let zt = solve_vec(&row, true);
        let schur = corner - row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let schur_t = corner - col.iter().zip(&zt).map(|(a, b)| a * b).sum::<f64>();
        let scale = row.iter().map(|v| v.abs()).sum::<f64>()
            * z.iter().map(|v| v.abs()).sum::<f64>()
            + corner.abs();
        if !schur.is_finite() || schur.abs() <= 1e-300 * scale.max(1.0) {
            return Err(Error::Singular("zero Schur complement of the constraint row".into()));
        }

        // keep the combined CSC of the full matrix for norms and matvec
        let full = Self::combined_csc(n, entries);
        Ok(SparseLu {
            n,
            col_ptr: full.0,
            row_idx: full.1,
            values: full.2,
            backend: Backend::Bordered { inner, col, row, z, schur, zt, schur_t },
        })
    }

    fn combined_csc(n: usize, entries: &[Triplet]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut keyed: Vec<(u64, f64)> = entries
            .iter()
            .map(|e| (((e.col as u64) << 32) | e.row as u64, e.val))
            .collect();
        keyed.sort_unstable_by_key(|&(k, _)| k);
        let mut cols = Vec::with_capacity(keyed.len());
        let mut row_idx = Vec::with_capacity(keyed.len());
        let mut values: Vec<f64> = Vec::with_capacity(keyed.len());
        let mut prev = u64::MAX;
        for (key, val) in keyed {
            if key == prev {
                *values.last_mut().unwrap() += val;
            } else {
                cols.push((key >> 32) as usize);
                row_idx.push((key & 0xffff_ffff) as usize);
                values.push(val);
                prev = key;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for &c in &cols {
            col_ptr[c + 1] += 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        (col_ptr, row_idx, values)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nonzeros(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (c, &xc) in x.iter().enumerate() {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// Matrix 1-norm (max absolute column sum).
    pub fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|c| {
                self.values[self.col_ptr[c]..self.col_ptr[c + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn raw_solve(&self, rhs: &[f64], transpose: bool) -> Vec<f64> {
        match &self.backend {
            Backend::Plain(lu) => {
                let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
                let x = if transpose { lu.solve_transpose(&b) } else { lu.solve(&b) };
                (0..self.n).map(|i| x[(i, 0)]).collect()
            }
            Backend::Bordered { inner, col, row, z, schur, zt, schur_t } => {
                let nb = self.n - 1;
                let b = faer::Mat::<f64>::from_fn(nb, 1, |i, _| rhs[i]);
                let y = if transpose { inner.solve_transpose(&b) } else { inner.solve(&b) };
                let (coupling, zv, sc) =
                    if transpose { (col, zt, *schur_t) } else { (row, z, *schur) };
                let cty: f64 = (0..nb).map(|i| coupling[i] * y[(i, 0)]).sum();
                let lambda = (rhs[nb] - cty) / sc;
                let mut out: Vec<f64> = (0..nb).map(|i| y[(i, 0)] - lambda * zv[i]).collect();
                out.push(lambda);
                out
            }
        }
    }

    /// Direct solve with a residual contract: ‖Ax−b‖/‖b‖ must not exceed
    /// 1e-10, otherwise the solve is reported as failed.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, LinearSolveReport)> {
        if rhs.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "rhs length {} does not match dimension {}",
                rhs.len(),
                self.n
            )));
        }
        let x = self.raw_solve(rhs, false);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("solution contains non-finite entries (zero pivot)".into()));
        }
        let ax = self.matvec(&x);
        let norm_b: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_r: f64 = ax
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel = if norm_b > 0.0 { norm_r / norm_b } else { norm_r };
        let report = LinearSolveReport {
            relative_residual: rel,
            dimension: self.n,
            nonzeros: self.nonzeros(),
        };
        if rel > 1e-10 {
            return Err(Error::LinearSolve(format!(
                "relative residual {rel:.3e} exceeds 1e-10 (n = {})",
                self.n
            )));
        }
        Ok((x, report))
    }

    /// 1-norm condition estimate: ‖A‖₁ times a Hager-style estimate of
    /// ‖A⁻¹‖₁ driven by factorized solves. Returns infinity if the
    /// factorization cannot produce finite solves.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            let a = self.values.first().copied().unwrap_or(0.0);
            return if a == 0.0 { f64::INFINITY } else { 1.0 };
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0f64;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.raw_solve(&x, false);
            if y.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let y1: f64 = y.iter().map(|v| v.abs()).sum();
            if iter > 0 && y1 <= est {
                break;
            }
            est = est.max(y1);
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.raw_solve(&xi, true);
            if z.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bj, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        // Alternating probe vector guards against adversarial cancellation.
        let b: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n - 1) as f64)
            })
            .collect();
        let y = self.raw_solve(&b, false);
        if y.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let alt = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        self.one_norm() * est.max(alt)
    }

    /// Coordinate-format text dump (row, col, value), one entry per line.
    pub fn write_coordinate(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                writeln!(out, "{} {} {}", self.row_idx[k], c, self.values[k])?;
            }
        }
        Ok(())
    }

    /// Exact ‖A⁻¹‖₁ by solving against every unit vector. Intended as a
    /// cross-check on small systems.
    pub fn exact_inverse_one_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            let col = self.raw_solve(&e, false);
            e[j] = 0.0;
            worst = worst.max(col.iter().map(|v| v.abs()).sum());
        }
        worst
    }
}

/// Newton stopping parameters: euclidean norm of the stacked update.
#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-10, max_iterations: 30 }
    }
}

/// Converged Newton state plus per-iteration diagnostics.
pub struct NewtonOutcome {
    pub state: Vec<f64>,
    pub iterations: usize,
    pub update_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub linear_residuals: Vec<f64>,
    /// Factorization from the last linear solve, if any iteration ran.
    pub factorization: Option<SparseLu>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped-free Newton iteration solving DF(u)(w) = F(u), u ← u − w until the
/// update norm drops below `tol`. A residual floor detects states that
/// already solve the system (affine problems finish after one solve).
pub fn newton_solve(
    residual: impl Fn(&[f64]) -> Vec<f64>,
    jacobian: impl Fn(&[f64]) -> Result<SparseLu>,
    init: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let mut state = init;
    let mut out = NewtonOutcome {
        state: Vec::new(),
        iterations: 0,
        update_norms: Vec::new(),
        residual_norms: Vec::new(),
        linear_residuals: Vec::new(),
        factorization: None,
    };
    let mut residual_scale = 0.0f64;
    for it in 0..=cfg.max_iterations {
        let f = residual(&state);
        let fnorm = norm2(&f);
        out.residual_norms.push(fnorm);
        if it == 0 {
            residual_scale = fnorm;
        }
        if fnorm <= (1e-12 * residual_scale).max(1e-13) {
            out.state = state;
            out.iterations = it;
            return Ok(out);
        }
        if it == cfg.max_iterations {
            break;
        }
        let lu = jacobian(&state)?;
        let (w, report) = lu.solve(&f)?;
        out.factorization = Some(lu);
        out.linear_residuals.push(report.relative_residual);
        for (s, wi) in state.iter_mut().zip(&w) {
            *s -= wi;
        }
        let wnorm = norm2(&w);
        out.update_norms.push(wnorm);
        if wnorm <= cfg.tol {
            out.state = state;
            out.iterations = it + 1;
            return Ok(out);
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations,
        update_norm: out.update_norms.last().copied().unwrap_or(f64::NAN),
    })
}
