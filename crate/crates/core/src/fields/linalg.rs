//! Linear solvers for the finite-difference fields: a banded direct
//! factorization for the (real, symmetric positive definite) thermal system
//! and a diagonal-preconditioned BiCGStab for the complex magnetic system.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("zero pivot at row {0}; system is singular")]
    ZeroPivot(usize),
    #[error("iterative solve did not converge: relative residual {residual:.3e} after {iters} iterations (tolerance {tol:.1e})")]
    NotConverged {
        residual: f64,
        iters: usize,
        tol: f64,
    },
    #[error("iterative solve broke down (rho or omega vanished) at iteration {0}")]
    Breakdown(usize),
}

/// Square banded matrix with equal lower/upper bandwidth `k`, stored row by
/// row: entry `(i, j)` with `|i - j| <= k` lives at `rows[i][j - i + k]`.
pub struct BandedMatrix {
    pub n: usize,
    pub k: usize,
    rows: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        BandedMatrix {
            n,
            k,
            rows: vec![0.0; n * (2 * k + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.k);
        i * (2 * self.k + 1) + (j + self.k - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.rows[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.k {
            return 0.0;
        }
        self.rows[self.slot(i, j)]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let k = self.k;
        for i in 0..self.n {
            let lo = i.saturating_sub(k);
            let hi = (i + k).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.rows[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// In-place LU factorization without pivoting (valid for diagonally
    /// dominant systems like the Robin-closed heat stencil).
    pub fn factor(mut self) -> Result<BandedLu, LinalgError> {
        let (n, k) = (self.n, self.k);
        for r in 0..n {
            let pivot = self.rows[self.slot(r, r)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::ZeroPivot(r));
            }
            let hi = (r + k).min(n - 1);
            for i in r + 1..=hi {
                let s = self.slot(i, r);
                let l = self.rows[s] / pivot;
                self.rows[s] = l;
                if l != 0.0 {
                    for j in r + 1..=hi {
                        let a = self.rows[self.slot(r, j)];
                        if a != 0.0 {
                            let t = self.slot(i, j);
                            self.rows[t] -= l * a;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

/// LU factors of a banded matrix; solves many right-hand sides cheaply.
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, k) = (self.m.n, self.m.k);
        let mut x = b.to_vec();
        // forward: L y = b (unit diagonal)
        for i in 0..n {
            let lo = i.saturating_sub(k);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.m.rows[self.m.slot(i, j)] * x[j];
            }
            x[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let hi = (i + k).min(n - 1);
            let mut acc = x[i];
            for j in i + 1..=hi {
                acc -= self.m.rows[self.m.slot(i, j)] * x[j];
            }
            x[i] = acc / self.m.rows[self.m.slot(i, i)];
        }
        x
    }
}

/// Compressed sparse row matrix over complex numbers.
pub struct CsrComplex {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<Complex64>,
}

pub struct CsrBuilder {
    n: usize,
    rows: Vec<Vec<(u32, Complex64)>>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        CsrBuilder {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.rows[i].push((j as u32, v));
    }

    pub fn build(mut self) -> CsrComplex {
        let mut indptr = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in &mut self.rows {
            row.sort_by_key(|(j, _)| *j);
            // merge duplicates
            let mut merged: Vec<(u32, Complex64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            for (j, v) in merged {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrComplex {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }
}

impl CsrComplex {
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for i in 0..self.n {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        let mut d = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[p] as usize == i {
                    d[i] = self.data[p];
                }
            }
        }
        d
    }
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Result of a converged BiCGStab solve.
pub struct IterativeSolution {
    pub x: Vec<Complex64>,
    pub iters: usize,
    pub residual: f64,
}

/// Diagonal-preconditioned BiCGStab. Converges to `||b - Ax|| / ||b|| <= tol`
/// or reports the achieved residual in the error.
pub fn bicgstab_jacobi(
    a: &CsrComplex,
    b: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<IterativeSolution, LinalgError> {
    let n = a.n;
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        return Ok(IterativeSolution {
            x: vec![Complex64::new(0.0, 0.0); n],
            iters: 0,
            residual: 0.0,
        });
    }
    let minv: Vec<Complex64> = a
        .diagonal()
        .iter()
        .map(|d| {
            if d.norm_sqr() > 0.0 {
                d.inv()
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();

    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut rhat = r.clone();
    let mut rho = Complex64::new(1.0, 0.0);
    let mut alpha = Complex64::new(1.0, 0.0);
    let mut omega = Complex64::new(1.0, 0.0);
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    let mut p = vec![Complex64::new(0.0, 0.0); n];
    let mut phat = vec![Complex64::new(0.0, 0.0); n];
    let mut shat = vec![Complex64::new(0.0, 0.0); n];
    let mut t = vec![Complex64::new(0.0, 0.0); n];
    let mut s = vec![Complex64::new(0.0, 0.0); n];

    let mut residual = cnorm(&r) / bnorm;
    let mut restarts = 0usize;
    // Restart with a fresh shadow residual when the BiCG coefficients lose
    // orthogonality (rho or omega collapse while the residual is large).
    macro_rules! restart {
        ($it:expr) => {{
            restarts += 1;
            if restarts > 100 {
                return Err(LinalgError::Breakdown($it));
            }
            // recompute the true residual so the recurrence starts clean
            a.matvec(&x, &mut t);
            for i in 0..n {
                r[i] = b[i] - t[i];
            }
            rhat.copy_from_slice(&r);
            rho = Complex64::new(1.0, 0.0);
            alpha = Complex64::new(1.0, 0.0);
            omega = Complex64::new(1.0, 0.0);
            v.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            p.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            continue;
        }};
    }
    for it in 1..=max_iter {
        let rho1 = cdot(&rhat, &r);
        if rho1.norm() < 1e-30 * bnorm * bnorm || !rho1.is_finite() {
            restart!(it);
        }
        let beta = (rho1 / rho) * (alpha / omega);
        rho = rho1;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = minv[i] * p[i];
        }
        a.matvec(&phat, &mut v);
        alpha = rho / cdot(&rhat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if cnorm(&s) / bnorm <= tol {
            // s is already small enough: take the half step and verify the
            // true residual without disturbing the recurrences.
            let xh: Vec<Complex64> = (0..n).map(|i| x[i] + alpha * phat[i]).collect();
            let mut rfin = vec![Complex64::new(0.0, 0.0); n];
            a.matvec(&xh, &mut rfin);
            for i in 0..n {
                rfin[i] = b[i] - rfin[i];
            }
            let res = cnorm(&rfin) / bnorm;
            if res <= tol {
                return Ok(IterativeSolution {
                    x: xh,
                    iters: it,
                    residual: res,
                });
            }
        }
        for i in 0..n {
            shat[i] = minv[i] * s[i];
        }
        a.matvec(&shat, &mut t);
        let tt = cdot(&t, &t);
        if tt.norm() < 1e-300 {
            restart!(it);
        }
        omega = cdot(&t, &s) / tt;
        if omega.norm() < 1e-300 || !omega.is_finite() {
            restart!(it);
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = cnorm(&r) / bnorm;
        if !residual.is_finite() {
            restart!(it);
        }
        if residual <= tol {
            // recompute the true residual before declaring victory
            let mut rfin = vec![Complex64::new(0.0, 0.0); n];
            a.matvec(&x, &mut rfin);
            for i in 0..n {
                rfin[i] = b[i] - rfin[i];
            }
            let res = cnorm(&rfin) / bnorm;
            if res <= tol {
                return Ok(IterativeSolution {
                    x,
                    iters: it,
                    residual: res,
                });
            }
            residual = res;
        }
    }
    Err(LinalgError::NotConverged {
        residual,
        iters: max_iter,
        tol,
    })
}
