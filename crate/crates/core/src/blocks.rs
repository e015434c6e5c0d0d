//! Small dense blocks, block-diagonal and block-tridiagonal matrices, and a
//! (cyclic) block-tridiagonal Cholesky factorization.

use crate::error::{Error, Result};

/// Row-major `d × d` helpers.
pub mod dense {
    use crate::error::{Error, Result};

    pub fn identity(d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = 1.0;
        }
        m
    }

    pub fn matmul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = a[i * d + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    c[i * d + j] += aik * b[k * d + j];
                }
            }
        }
        c
    }

    pub fn transpose(d: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                t[j * d + i] = a[i * d + j];
            }
        }
        t
    }

    /// `y += a x`.
    #[inline]
    pub fn matvec_add(d: usize, a: &[f64], x: &[f64], y: &mut [f64]) {
        for i in 0..d {
            let row = &a[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * x[j];
            }
            y[i] += s;
        }
    }

    /// `y += aᵀ x`.
    #[inline]
    pub fn matvec_t_add(d: usize, a: &[f64], x: &[f64], y: &mut [f64]) {
        for i in 0..d {
            let xi = x[i];
            for j in 0..d {
                y[j] += a[i * d + j] * xi;
            }
        }
    }

    /// Lower Cholesky factor of an SPD block.
    pub fn cholesky(d: usize, a: &[f64]) -> Result<Vec<f64>> {
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut s = a[j * d + j];
            for k in 0..j {
                s -= l[j * d + k] * l[j * d + k];
            }
            if !(s > 0.0) {
                return Err(Error::Singular("block is not positive definite"));
            }
            let ljj = s.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut s = a[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Solves `L z = b` in place.
    pub fn forward(d: usize, l: &[f64], b: &mut [f64]) {
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * d + k] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward(d: usize, l: &[f64], b: &mut [f64]) {
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in i + 1..d {
                s -= l[k * d + i] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
    }

    /// Inverse of an SPD block through its Cholesky factor.
    pub fn spd_inverse(d: usize, a: &[f64]) -> Result<Vec<f64>> {
        let l = cholesky(d, a)?;
        let mut inv = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            forward(d, &l, &mut col);
            backward(d, &l, &mut col);
            for i in 0..d {
                inv[i * d + j] = col[i];
            }
        }
        // symmetrize away round-off
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (inv[i * d + j] + inv[j * d + i]);
                inv[i * d + j] = m;
                inv[j * d + i] = m;
            }
        }
        Ok(inv)
    }

    /// `X = B L⁻ᵀ`, i.e. solves `X Lᵀ = B` row by row.
    pub fn right_solve_lt(d: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for r in 0..d {
            forward(d, l, &mut x[r * d..(r + 1) * d]);
        }
        x
    }
}

/// `y += a x` for a fixed block width.
#[inline(always)]
fn kernel<const D: usize>(a: &[f64], x: &[f64], y: &mut [f64]) {
    let a = &a[..D * D];
    let x = &x[..D];
    for i in 0..D {
        let mut acc = 0.0;
        for j in 0..D {
            acc += a[i * D + j] * x[j];
        }
        y[i] += acc;
    }
}

/// `n` dense `d × d` blocks on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiag {
    d: usize,
    blocks: Vec<f64>,
}

impl BlockDiag {
    pub fn zeros(n: usize, d: usize) -> Self {
        BlockDiag {
            d,
            blocks: vec![0.0; n * d * d],
        }
    }

    pub fn from_blocks(d: usize, blocks: Vec<f64>) -> Self {
        assert_eq!(blocks.len() % (d * d), 0);
        BlockDiag { d, blocks }
    }

    pub fn block_size(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.blocks.len() / (self.d * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.len() * self.d
    }

    #[inline]
    pub fn block(&self, i: usize) -> &[f64] {
        let s = self.d * self.d;
        &self.blocks[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.d * self.d;
        &mut self.blocks[i * s..(i + 1) * s]
    }

    /// `y += self · x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        match self.d {
            1 => self.apply_fixed::<1>(x, y),
            2 => self.apply_fixed::<2>(x, y),
            3 => self.apply_fixed::<3>(x, y),
            d => {
                for i in 0..self.len() {
                    dense::matvec_add(d, self.block(i), &x[i * d..(i + 1) * d], &mut y[i * d..(i + 1) * d]);
                }
            }
        }
    }

    fn apply_fixed<const D: usize>(&self, x: &[f64], y: &mut [f64]) {
        for ((b, xi), yi) in self
            .blocks
            .chunks_exact(D * D)
            .zip(x.chunks_exact(D))
            .zip(y.chunks_exact_mut(D))
        {
            kernel::<D>(b, xi, yi);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_add(x, &mut y);
        y
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, s: f64, other: &BlockDiag) -> BlockDiag {
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + s * b).collect();
        BlockDiag { d: self.d, blocks }
    }

    pub fn scaled(&self, s: f64) -> BlockDiag {
        BlockDiag {
            d: self.d,
            blocks: self.blocks.iter().map(|a| s * a).collect(),
        }
    }

    /// Blockwise SPD inverse; fails with the offending block index.
    pub fn spd_inverse(&self, what: &'static str) -> Result<BlockDiag> {
        let d = self.d;
        let mut out = Vec::with_capacity(self.blocks.len());
        for i in 0..self.len() {
            let inv = dense::spd_inverse(d, self.block(i))
                .map_err(|_| Error::NotPositiveDefinite { what, block: i })?;
            out.extend(inv);
        }
        Ok(BlockDiag { d, blocks: out })
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let d = self.d;
        let mut m = vec![0.0; n * n];
        for b in 0..self.len() {
            for i in 0..d {
                for j in 0..d {
                    m[(b * d + i) * n + b * d + j] = self.block(b)[i * d + j];
                }
            }
        }
        m
    }
}

/// Block-tridiagonal matrix. `lower[i]` couples row block `i` to column block
/// `i - 1` and `upper[i]` to `i + 1`; when `cyclic`, `lower[0]` and
/// `upper[n-1]` are the wrap-around blocks, otherwise they are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTri {
    d: usize,
    n: usize,
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    cyclic: bool,
}

impl BlockTri {
    pub fn zeros(n: usize, d: usize, cyclic: bool) -> Self {
        BlockTri {
            d,
            n,
            lower: vec![0.0; n * d * d],
            diag: vec![0.0; n * d * d],
            upper: vec![0.0; n * d * d],
            cyclic,
        }
    }

    pub fn block_size(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    #[inline]
    fn sl(v: &[f64], d: usize, i: usize) -> &[f64] {
        &v[i * d * d..(i + 1) * d * d]
    }

    #[inline]
    pub fn lower_block(&self, i: usize) -> &[f64] {
        Self::sl(&self.lower, self.d, i)
    }

    #[inline]
    pub fn diag_block(&self, i: usize) -> &[f64] {
        Self::sl(&self.diag, self.d, i)
    }

    #[inline]
    pub fn upper_block(&self, i: usize) -> &[f64] {
        Self::sl(&self.upper, self.d, i)
    }

    pub fn lower_block_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.d * self.d;
        &mut self.lower[i * s..(i + 1) * s]
    }

    pub fn diag_block_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.d * self.d;
        &mut self.diag[i * s..(i + 1) * s]
    }

    pub fn upper_block_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.d * self.d;
        &mut self.upper[i * s..(i + 1) * s]
    }

    /// `y += s · self · x`.
    pub fn apply_scaled_add(&self, s: f64, x: &[f64], y: &mut [f64]) {
        match self.d {
            1 => self.apply_fixed::<1, true, true>(s, x, y),
            2 => self.apply_fixed::<2, true, true>(s, x, y),
            3 => self.apply_fixed::<3, true, true>(s, x, y),
            _ => self.apply_generic(s, x, y),
        }
    }

    /// As [`BlockTri::apply_scaled_add`] for a block-bidiagonal matrix: only the
    /// diagonal and the `lower` (or `upper`) band are read, the other band must
    /// be zero.
    pub fn apply_bidiag_scaled_add(&self, lower: bool, s: f64, x: &[f64], y: &mut [f64]) {
        debug_assert!(if lower { &self.upper } else { &self.lower }.iter().all(|&v| v == 0.0));
        match (self.d, lower) {
            (1, true) => self.apply_fixed::<1, true, false>(s, x, y),
            (1, false) => self.apply_fixed::<1, false, true>(s, x, y),
            (2, true) => self.apply_fixed::<2, true, false>(s, x, y),
            (2, false) => self.apply_fixed::<2, false, true>(s, x, y),
            (3, true) => self.apply_fixed::<3, true, false>(s, x, y),
            (3, false) => self.apply_fixed::<3, false, true>(s, x, y),
            _ => self.apply_generic(s, x, y),
        }
    }

    fn apply_fixed<const D: usize, const LO: bool, const UP: bool>(&self, s: f64, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let bs = D * D;
        let row = |i: usize, y: &mut [f64]| {
            let mut t = [0.0; D];
            kernel::<D>(&self.diag[i * bs..], &x[i * D..], &mut t);
            if LO && i > 0 {
                kernel::<D>(&self.lower[i * bs..], &x[(i - 1) * D..], &mut t);
            } else if LO && self.cyclic {
                kernel::<D>(&self.lower[..bs], &x[(n - 1) * D..], &mut t);
            }
            if UP && i + 1 < n {
                kernel::<D>(&self.upper[i * bs..], &x[(i + 1) * D..], &mut t);
            } else if UP && self.cyclic {
                kernel::<D>(&self.upper[i * bs..], &x[..D], &mut t);
            }
            for k in 0..D {
                y[i * D + k] += s * t[k];
            }
        };
        if n < 3 {
            for i in 0..n {
                row(i, y);
            }
            return;
        }
        row(0, y);
        let interior = self.lower[bs..]
            .chunks_exact(bs)
            .zip(self.diag[bs..].chunks_exact(bs))
            .zip(self.upper[bs..].chunks_exact(bs))
            .zip(x.windows(3 * D).step_by(D))
            .zip(y[D..(n - 1) * D].chunks_exact_mut(D));
        for ((((lo, di), up), xw), yi) in interior {
            let mut t = [0.0; D];
            if LO {
                kernel::<D>(lo, &xw[..D], &mut t);
            }
            kernel::<D>(di, &xw[D..2 * D], &mut t);
            if UP {
                kernel::<D>(up, &xw[2 * D..], &mut t);
            }
            for k in 0..D {
                yi[k] += s * t[k];
            }
        }
        row(n - 1, y);
    }

    fn apply_generic(&self, s: f64, x: &[f64], y: &mut [f64]) {
        let (d, n) = (self.d, self.n);
        let mut tmp = vec![0.0; d];
        for i in 0..n {
            tmp.iter_mut().for_each(|t| *t = 0.0);
            dense::matvec_add(d, self.diag_block(i), &x[i * d..(i + 1) * d], &mut tmp);
            if i > 0 || self.cyclic {
                let j = (i + n - 1) % n;
                dense::matvec_add(d, self.lower_block(i), &x[j * d..(j + 1) * d], &mut tmp);
            }
            if i + 1 < n || self.cyclic {
                let j = (i + 1) % n;
                dense::matvec_add(d, self.upper_block(i), &x[j * d..(j + 1) * d], &mut tmp);
            }
            for (yv, t) in y[i * d..(i + 1) * d].iter_mut().zip(&tmp) {
                *yv += s * t;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_scaled_add(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> BlockTri {
        let (d, n) = (self.d, self.n);
        let mut t = BlockTri::zeros(n, d, self.cyclic);
        for i in 0..n {
            t.diag_block_mut(i).copy_from_slice(&dense::transpose(d, self.diag_block(i)));
            // (i, i+1) of the transpose is (i+1, i)ᵀ of self
            let ip = (i + 1) % n;
            if i + 1 < n || self.cyclic {
                t.upper_block_mut(i).copy_from_slice(&dense::transpose(d, self.lower_block(ip)));
                t.lower_block_mut(ip).copy_from_slice(&dense::transpose(d, self.upper_block(i)));
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> BlockTri {
        let f = |v: &Vec<f64>| v.iter().map(|a| s * a).collect();
        BlockTri {
            d: self.d,
            n: self.n,
            lower: f(&self.lower),
            diag: f(&self.diag),
            upper: f(&self.upper),
            cyclic: self.cyclic,
        }
    }

    pub fn add_diag(&mut self, m: &BlockDiag, s: f64) {
        for (a, b) in self.diag.iter_mut().zip(&m.blocks) {
            *a += s * b;
        }
    }

    /// `self · Dg · other` for `self` with no lower band and `other` with no
    /// upper band (the product is then block tridiagonal again).
    pub fn upper_diag_lower(&self, dg: &BlockDiag, other: &BlockTri) -> BlockTri {
        let (d, n) = (self.d, self.n);
        let cyclic = self.cyclic || other.cyclic;
        let mut p = BlockTri::zeros(n, d, cyclic);
        for i in 0..n {
            let ad = dense::matmul(d, self.diag_block(i), dg.block(i));
            let diag = dense::matmul(d, &ad, other.diag_block(i));
            let lower = dense::matmul(d, &ad, other.lower_block(i));
            let ip = (i + 1) % n;
            let au = dense::matmul(d, self.upper_block(i), dg.block(ip));
            let extra = dense::matmul(d, &au, other.lower_block(ip));
            let upper = dense::matmul(d, &au, other.diag_block(ip));
            let wrap_ok = i + 1 < n || self.cyclic;
            for k in 0..d * d {
                p.diag[i * d * d + k] = diag[k] + if wrap_ok { extra[k] } else { 0.0 };
                p.lower[i * d * d + k] = if i > 0 || cyclic { lower[k] } else { 0.0 };
                p.upper[i * d * d + k] = if wrap_ok { upper[k] } else { 0.0 };
            }
        }
        p
    }

    /// Largest entrywise `|A - Aᵀ|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, a| m.max(a.abs()))
            .max(f64::MIN_POSITIVE);
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let mut defect = diff(&self.diag, &t.diag);
        if self.n > 2 || !self.cyclic {
            defect = defect.max(diff(&self.lower, &t.lower)).max(diff(&self.upper, &t.upper));
        } else {
            // n = 2 cyclic: both off-diagonal blocks of a row hit the same column.
            let merged = |m: &BlockTri, i: usize| -> Vec<f64> {
                m.lower_block(i).iter().zip(m.upper_block(i)).map(|(a, b)| a + b).collect()
            };
            for i in 0..2 {
                defect = defect.max(diff(&merged(self, i), &merged(&t, i)));
            }
        }
        defect / scale
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let (d, n) = (self.d, self.n);
        let dim = n * d;
        let mut m = vec![0.0; dim * dim];
        let mut put = |bi: usize, bj: usize, blk: &[f64]| {
            for r in 0..d {
                for c in 0..d {
                    m[(bi * d + r) * dim + bj * d + c] += blk[r * d + c];
                }
            }
        };
        for i in 0..n {
            put(i, i, self.diag_block(i));
            if i > 0 || self.cyclic {
                put(i, (i + n - 1) % n, self.lower_block(i));
            }
            if i + 1 < n || self.cyclic {
                put(i, (i + 1) % n, self.upper_block(i));
            }
        }
        m
    }

    /// Rewrites an `n = 2` cyclic matrix as the equivalent non-cyclic one.
    fn decyclify_two(&self) -> BlockTri {
        let d = self.d;
        let mut m = BlockTri::zeros(2, d, false);
        m.diag.copy_from_slice(&self.diag);
        let s = d * d;
        for k in 0..s {
            m.upper[k] = self.upper[k] + self.lower[k];
            m.lower[s + k] = self.lower[s + k] + self.upper[s + k];
        }
        m
    }
}

/// Block Cholesky factorization of a symmetric positive-definite
/// block-tridiagonal matrix; cyclic matrices use a bordered last block row.
#[derive(Debug, Clone)]
pub struct BlockTriCholesky {
    d: usize,
    /// Number of block rows in the tridiagonal part.
    m: usize,
    l: Vec<f64>,
    w: Vec<f64>,
    /// Border `Y = L⁻¹ B` (cyclic only).
    y: Vec<f64>,
    ls: Vec<f64>,
    /// Reciprocal pivots of `l`, then of `ls`.
    inv: Vec<f64>,
    cyclic: bool,
    pivot_ratio: f64,
}

impl BlockTriCholesky {
    pub fn factor(a: &BlockTri, what: &'static str) -> Result<Self> {
        let two;
        let a = if a.cyclic && a.n == 2 {
            two = a.decyclify_two();
            &two
        } else {
            a
        };
        let (d, n, cyclic) = (a.d, a.n, a.cyclic);
        let s = d * d;
        let m = if cyclic { n - 1 } else { n };
        let mut l = vec![0.0; m * s];
        let mut w = vec![0.0; m * s];
        let mut pmin = f64::INFINITY;
        let mut pmax = 0.0f64;
        for i in 0..m {
            let mut di = a.diag_block(i).to_vec();
            if i > 0 {
                let wi = dense::right_solve_lt(d, &l[(i - 1) * s..i * s], a.lower_block(i));
                let wwt = dense::matmul(d, &wi, &dense::transpose(d, &wi));
                for k in 0..s {
                    di[k] -= wwt[k];
                }
                w[i * s..(i + 1) * s].copy_from_slice(&wi);
            }
            let li = dense::cholesky(d, &di).map_err(|_| Error::NotPositiveDefinite { what, block: i })?;
            for j in 0..d {
                pmin = pmin.min(li[j * d + j]);
                pmax = pmax.max(li[j * d + j]);
            }
            l[i * s..(i + 1) * s].copy_from_slice(&li);
        }
        let (mut y, mut ls) = (Vec::new(), Vec::new());
        if cyclic {
            // border column blocks B_i = A[i, n-1]
            y = vec![0.0; m * s];
            for i in 0..m {
                let mut bi = vec![0.0; s];
                if i == 0 {
                    bi.copy_from_slice(a.lower_block(0));
                }
                if i == m - 1 {
                    for (b, u) in bi.iter_mut().zip(a.upper_block(m - 1)) {
                        *b += u;
                    }
                }
                if i > 0 {
                    let prev = y[(i - 1) * s..i * s].to_vec();
                    let wp = dense::matmul(d, &w[i * s..(i + 1) * s], &prev);
                    for k in 0..s {
                        bi[k] -= wp[k];
                    }
                }
                // L_i⁻¹ applied column by column
                let li = &l[i * s..(i + 1) * s];
                let mut col = vec![0.0; d];
                for c in 0..d {
                    for r in 0..d {
                        col[r] = bi[r * d + c];
                    }
                    dense::forward(d, li, &mut col);
                    for r in 0..d {
                        y[i * s + r * d + c] = col[r];
                    }
                }
            }
            let mut sc = a.diag_block(n - 1).to_vec();
            for i in 0..m {
                let yi = &y[i * s..(i + 1) * s];
                let yty = dense::matmul(d, &dense::transpose(d, yi), yi);
                for k in 0..s {
                    sc[k] -= yty[k];
                }
            }
            ls = dense::cholesky(d, &sc).map_err(|_| Error::NotPositiveDefinite { what, block: n - 1 })?;
            for j in 0..d {
                pmin = pmin.min(ls[j * d + j]);
                pmax = pmax.max(ls[j * d + j]);
            }
        }
        let mut inv: Vec<f64> = (0..m * d).map(|r| 1.0 / l[(r / d) * s + (r % d) * (d + 1)]).collect();
        if cyclic {
            inv.extend((0..d).map(|j| 1.0 / ls[j * (d + 1)]));
        }
        Ok(BlockTriCholesky {
            d,
            m,
            l,
            w,
            y,
            ls,
            inv,
            cyclic,
            pivot_ratio: (pmax / pmin).powi(2),
        })
    }

    /// Crude condition estimate from the pivot spread.
    pub fn condition_estimate(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        match self.d {
            1 => self.solve_fixed::<1>(&mut x),
            2 => self.solve_fixed::<2>(&mut x),
            3 => self.solve_fixed::<3>(&mut x),
            _ => self.solve_generic(&mut x),
        }
        x
    }

    fn solve_fixed<const D: usize>(&self, x: &mut [f64]) {
        let m = self.m;
        let s = D * D;
        let fwd = |l: &[f64], inv: &[f64], b: &mut [f64; D]| {
            for i in 0..D {
                let mut acc = b[i];
                for k in 0..i {
                    acc -= l[i * D + k] * b[k];
                }
                b[i] = acc * inv[i];
            }
        };
        let bwd = |l: &[f64], inv: &[f64], b: &mut [f64; D]| {
            for i in (0..D).rev() {
                let mut acc = b[i];
                for k in i + 1..D {
                    acc -= l[k * D + i] * b[k];
                }
                b[i] = acc * inv[i];
            }
        };
        let load = |x: &[f64], i: usize| -> [f64; D] {
            let mut t = [0.0; D];
            t.copy_from_slice(&x[i * D..(i + 1) * D]);
            t
        };
        let mut prev = [0.0; D];
        for i in 0..m {
            let mut xi = load(x, i);
            if i > 0 {
                let wi = &self.w[i * s..(i + 1) * s];
                for r in 0..D {
                    for c in 0..D {
                        xi[r] -= wi[r * D + c] * prev[c];
                    }
                }
            }
            fwd(&self.l[i * s..], &self.inv[i * D..], &mut xi);
            x[i * D..(i + 1) * D].copy_from_slice(&xi);
            prev = xi;
        }
        let mut last = [0.0; D];
        if self.cyclic {
            last = load(x, m);
            for i in 0..m {
                let yi = &self.y[i * s..(i + 1) * s];
                for r in 0..D {
                    let xr = x[i * D + r];
                    for c in 0..D {
                        last[c] -= yi[r * D + c] * xr;
                    }
                }
            }
            let li = &self.inv[m * D..];
            fwd(&self.ls, li, &mut last);
            bwd(&self.ls, li, &mut last);
            x[m * D..(m + 1) * D].copy_from_slice(&last);
        }
        let mut next = [0.0; D];
        for i in (0..m).rev() {
            let mut xi = load(x, i);
            if self.cyclic {
                let yi = &self.y[i * s..(i + 1) * s];
                for r in 0..D {
                    for c in 0..D {
                        xi[r] -= yi[r * D + c] * last[c];
                    }
                }
            }
            if i + 1 < m {
                let wn = &self.w[(i + 1) * s..(i + 2) * s];
                for r in 0..D {
                    for c in 0..D {
                        xi[c] -= wn[r * D + c] * next[r];
                    }
                }
            }
            bwd(&self.l[i * s..], &self.inv[i * D..], &mut xi);
            x[i * D..(i + 1) * D].copy_from_slice(&xi);
            next = xi;
        }
    }

    fn solve_generic(&self, x: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        let s = d * d;
        let mut t = vec![0.0; d];
        for i in 0..m {
            if i > 0 {
                let (head, tail) = x.split_at_mut(i * d);
                t.fill(0.0);
                dense::matvec_add(d, &self.w[i * s..(i + 1) * s], &head[(i - 1) * d..], &mut t);
                tail[..d].iter_mut().zip(&t).for_each(|(a, b)| *a -= b);
            }
            dense::forward(d, &self.l[i * s..(i + 1) * s], &mut x[i * d..(i + 1) * d]);
        }
        if self.cyclic {
            t.fill(0.0);
            for i in 0..m {
                dense::matvec_t_add(d, &self.y[i * s..(i + 1) * s], &x[i * d..(i + 1) * d], &mut t);
            }
            let last = &mut x[m * d..(m + 1) * d];
            last.iter_mut().zip(&t).for_each(|(a, b)| *a -= b);
            dense::forward(d, &self.ls, last);
            dense::backward(d, &self.ls, last);
        }
        for i in (0..m).rev() {
            t.fill(0.0);
            if self.cyclic {
                dense::matvec_add(d, &self.y[i * s..(i + 1) * s], &x[m * d..(m + 1) * d], &mut t);
            }
            if i + 1 < m {
                dense::matvec_t_add(d, &self.w[(i + 1) * s..(i + 2) * s], &x[(i + 1) * d..(i + 2) * d], &mut t);
            }
            let xi = &mut x[i * d..(i + 1) * d];
            xi.iter_mut().zip(&t).for_each(|(a, b)| *a -= b);
            dense::backward(d, &self.l[i * s..(i + 1) * s], xi);
        }
    }
}

/// Direct solve of `A x = b` with one step of iterative refinement if needed;
/// fails if the relative residual stays above `tol`.
pub fn solve_checked(a: &BlockTri, f: &BlockTriCholesky, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = f.solve(b);
    let residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let mut r = b.to_vec();
        a.apply_scaled_add(-1.0, x, &mut r);
        let n = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (r, n / bnorm)
    };
    let (r, rel) = residual(&x);
    if rel <= tol {
        return Ok(x);
    }
    let dx = f.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
    let (_, rel) = residual(&x);
    if rel <= tol {
        Ok(x)
    } else {
        Err(Error::ResidualTooLarge {
            residual: rel,
            condition: f.condition_estimate(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn random_spd_tri(n: usize, d: usize, cyclic: bool, seed: &mut u64) -> BlockTri {
        // A = Bᵀ B + I with B upper bidiagonal (cyclic wrap when requested)
        let mut b = BlockTri::zeros(n, d, cyclic);
        for v in b.diag.iter_mut().chain(b.upper.iter_mut()) {
            *v = lcg(seed);
        }
        if !cyclic {
            let s = d * d;
            b.upper[(n - 1) * s..].iter_mut().for_each(|v| *v = 0.0);
        }
        let bt = b.transpose();
        let mut a = bt.upper_diag_lower_general(&b);
        a.add_diag(&BlockDiag::from_blocks(d, (0..n).flat_map(|_| dense::identity(d)).collect()), 1.0);
        a
    }

    impl BlockTri {
        // test-only: product of lower-bidiagonal self and upper-bidiagonal other
        fn upper_diag_lower_general(&self, other: &BlockTri) -> BlockTri {
            let dense_a = DMatrix::from_row_slice(self.dim(), self.dim(), &self.to_dense());
            let dense_b = DMatrix::from_row_slice(other.dim(), other.dim(), &other.to_dense());
            let p = dense_a * dense_b;
            let (d, n) = (self.d, self.n);
            let mut out = BlockTri::zeros(n, d, self.cyclic || other.cyclic);
            for i in 0..n {
                for r in 0..d {
                    for c in 0..d {
                        out.diag[i * d * d + r * d + c] = p[(i * d + r, i * d + c)];
                        if i + 1 < n || out.cyclic {
                            let j = (i + 1) % n;
                            out.upper[i * d * d + r * d + c] = p[(i * d + r, j * d + c)];
                        }
                        if i > 0 || out.cyclic {
                            let j = (i + n - 1) % n;
                            out.lower[i * d * d + r * d + c] = p[(i * d + r, j * d + c)];
                        }
                    }
                }
            }
            if n == 2 && out.cyclic {
                // both off-diagonal slots map to the same block; keep it once
                let s = d * d;
                out.lower[..s].iter_mut().for_each(|v| *v = 0.0);
                out.lower[s..].iter_mut().for_each(|v| *v = 0.0);
            }
            out
        }
    }

    #[test]
    fn cholesky_solves_match_dense() {
        let mut seed = 7;
        for &(n, d, cyclic) in &[(5, 1, false), (6, 3, false), (7, 2, true), (3, 3, true), (2, 2, true), (2, 1, false)] {
            let a = random_spd_tri(n, d, cyclic, &mut seed);
            let f = BlockTriCholesky::factor(&a, "test").unwrap();
            let b: Vec<f64> = (0..n * d).map(|_| lcg(&mut seed)).collect();
            let x = solve_checked(&a, &f, &b, 1e-12).unwrap();
            let dm = DMatrix::from_row_slice(a.dim(), a.dim(), &a.to_dense());
            let xd = dm.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            for (u, v) in x.iter().zip(xd.iter()) {
                assert!((u - v).abs() < 1e-12, "n={n} d={d} cyclic={cyclic}");
            }
            assert!(a.symmetry_defect() < 1e-14);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = BlockTri::zeros(3, 1, false);
        a.diag.copy_from_slice(&[1.0, -1.0, 1.0]);
        assert!(matches!(
            BlockTriCholesky::factor(&a, "H"),
            Err(Error::NotPositiveDefinite { what: "H", block: 1 })
        ));
    }

    #[test]
    fn transpose_roundtrip_and_apply() {
        let mut seed = 3;
        let mut a = BlockTri::zeros(4, 2, true);
        for v in a.diag.iter_mut().chain(a.lower.iter_mut()).chain(a.upper.iter_mut()) {
            *v = lcg(&mut seed);
        }
        assert_eq!(a.transpose().transpose(), a);
        let x: Vec<f64> = (0..8).map(|_| lcg(&mut seed)).collect();
        let dm = DMatrix::from_row_slice(8, 8, &a.to_dense());
        let y = a.apply(&x);
        let yd = dm * nalgebra::DVector::from_vec(x);
        for (u, v) in y.iter().zip(yd.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn spd_inverse_block() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = dense::spd_inverse(3, &a).unwrap();
        let p = dense::matmul(3, &a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[i * 3 + j] - e).abs() < 1e-14);
            }
        }
    }
}
