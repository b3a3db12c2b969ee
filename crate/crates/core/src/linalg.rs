//! Dense Hermitian eigensolvers on top of faer, a real banded LU, and a
//! reverse Cuthill-McKee ordering for the banded path.

use std::collections::VecDeque;
use std::sync::Once;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::prelude::*;
use faer::{c64, Mat, Par, Side};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// Run faer kernels single-threaded so results do not depend on the
/// thread count. Parallelism happens one level up, over k and lambda.
pub fn init_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

pub fn hermitian_eigenvalues(a: &Mat<c64>) -> Result<Vec<f64>> {
    init_sequential();
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Eigenvalues of the pencil `(k, m)`, ascending. `m` must be positive definite.
pub fn generalized_eigenvalues(k: &Mat<c64>, m: &Mat<c64>) -> Result<Vec<f64>> {
    Ok(generalized_eigen(k, m, false)?.0)
}

/// Reduce `k x = lambda m x` to a standard problem with the Cholesky factor
/// of `m` and solve it. Eigenvectors, if requested, are `m`-orthonormal.
pub fn generalized_eigen(k: &Mat<c64>, m: &Mat<c64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<c64>>)> {
    init_sequential();
    let n = k.nrows();
    if k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::Eigensolver("pencil dimensions disagree".into()));
    }
    if n == 0 {
        return Ok((vec![], vectors.then(|| Mat::zeros(0, 0))));
    }
    let llt =
        m.llt(Side::Lower).map_err(|e| Error::Eigensolver(format!("mass matrix is not positive definite: {e:?}")))?;
    let l = llt.L();
    let mut x = k.clone();
    solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.adjoint().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = Mat::<c64>::from_fn(n, n, |i, j| (c[(i, j)] + c[(j, i)].conj()) * 0.5);
    if !vectors {
        let ev = c.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        return Ok((ev, None));
    }
    let evd = c.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let ev: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let mut u = evd.U().to_owned();
    solve_upper_triangular_in_place(l.adjoint(), u.as_mut(), Par::Seq);
    Ok((ev, Some(u)))
}

/// Solve a symmetric positive definite system with several right-hand sides.
pub fn spd_solve(a: &Mat<f64>, b: &Mat<f64>) -> Result<Mat<f64>> {
    init_sequential();
    let llt = a.llt(Side::Lower).map_err(|e| {
        Error::Singular(format!("matrix is not positive definite ({e:?}); is the stiff part connected?"))
    })?;
    Ok(llt.solve(b))
}

/// Square real matrix with `p` sub- and `q` super-diagonals, stored by rows.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, p: usize, q: usize) -> Self {
        // room for fill-in from row pivoting: p extra super-diagonals
        let width = 2 * p + q + 1;
        BandMatrix { n, p, q, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.p >= i && j <= i + self.p + self.q);
        i * self.width + (j + self.p - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.p < i || j > i + self.q {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.p >= i && j <= i + self.q, "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `a * self + b * other` on the same band.
    pub fn combine(&self, a: f64, other: &BandMatrix, b: f64) -> BandMatrix {
        assert!(self.n == other.n && self.p == other.p && self.q == other.q);
        let mut out = self.clone();
        for (o, (x, y)) in out.data.iter_mut().zip(self.data.iter().zip(&other.data)) {
            *o = a * x + b * y;
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.p);
                let hi = (i + self.q).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Number of negative eigenvalues of a symmetric band matrix, from the
    /// pivots of unpivoted Gaussian elimination (Sylvester's law of
    /// inertia). `None` if a pivot vanishes.
    pub fn symmetric_inertia(&self) -> Option<usize> {
        let (n, p) = (self.n, self.p);
        let mut a = self.clone();
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut neg = 0;
        for k in 0..n {
            let d = a.data[a.idx(k, k)];
            if !(d.abs() > 1e-14 * scale) {
                return None;
            }
            if d < 0.0 {
                neg += 1;
            }
            let last = (k + p).min(n - 1);
            for i in k + 1..=last {
                let l = a.data[a.idx(i, k)] / d;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=(k + self.q).min(n - 1) {
                    let kj = a.data[a.idx(k, j)];
                    let ij = a.idx(i, j);
                    a.data[ij] -= l * kj;
                }
            }
        }
        Some(neg)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<BandLu> {
        let (n, p, q) = (self.n, self.p, self.q);
        let mut a = self.clone();
        let mut piv = vec![0; n];
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last = (k + p).min(n - 1);
            let mut r = k;
            let mut best = a.data[a.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = a.data[a.idx(i, k)].abs();
                if v > best {
                    best = v;
                    r = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            min_pivot = min_pivot.min(best);
            piv[k] = r;
            let jend = (k + p + q).min(n - 1);
            if r != k {
                for j in k..=jend {
                    let (x, y) = (a.idx(k, j), a.idx(r, j));
                    a.data.swap(x, y);
                }
            }
            let d = a.data[a.idx(k, k)];
            for i in k + 1..=last {
                let ik = a.idx(i, k);
                let l = a.data[ik] / d;
                a.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jend {
                    let kj = a.data[a.idx(k, j)];
                    let ij = a.idx(i, j);
                    a.data[ij] -= l * kj;
                }
            }
        }
        Ok(BandLu { a, piv, min_pivot })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
    /// Smallest pivot magnitude met during elimination.
    pub min_pivot: f64,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.a;
        let (n, p, q) = (a.n, a.p, a.q);
        for k in 0..n {
            let r = self.piv[k];
            if r != k {
                b.swap(k, r);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + p).min(n - 1) {
                    b[i] -= a.data[a.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + p + q).min(n - 1) {
                s -= a.data[a.idx(i, j)] * b[j];
            }
            b[i] = s / a.data[a.idx(i, i)];
        }
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given by adjacency
/// lists. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&v| (deg[v], v));
    for &s in &starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (deg[w], w));
            nb.dedup();
            for w in nb {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Half bandwidth of a sparsity pattern under `inv[old] = new`.
pub fn bandwidth(entries: impl Iterator<Item = (usize, usize)>, inv: &[usize]) -> usize {
    entries.map(|(i, j)| inv[i].abs_diff(inv[j])).max().unwrap_or(0)
}
