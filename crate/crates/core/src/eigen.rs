//! Eigenvalues of small dense complex matrices: diagonal balancing, Householder
//! reduction to upper Hessenberg form, then single-shift QR with Wilkinson
//! shifts and deflation.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Iterations allowed per deflation before giving up is this times `max(10, n)`.
const ITER_FACTOR: usize = 30;

/// All eigenvalues of the square matrix `m`, in no particular order.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut h = m.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hessenberg_qr(&mut h)
}

/// Similarity by a diagonal of powers of two so that each row and column pair
/// has comparable norm; exact in floating point.
fn balance(a: &mut DMatrix<C64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    loop {
        let mut done = true;
        for i in 0..n {
            let (mut col, mut row) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    col += a[(j, i)].l1_norm();
                    row += a[(i, j)].l1_norm();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let total = col + row;
            let (mut c, mut r) = (col, row);
            while c < r / radix {
                c *= radix;
                r /= radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix;
                r *= radix;
                f /= radix;
            }
            if (c + r) < 0.95 * total {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// In-place Householder reduction; entries below the subdiagonal are zeroed.
fn hessenberg(a: &mut DMatrix<C64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    let mut v = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n - 2 {
        let norm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { Complex::new(1.0, 0.0) } else { x0 / x0.norm() };
        // v = x + phase·‖x‖ e_1, reflector I − 2vvᴴ/(vᴴv)
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] += phase * norm;
        let vnorm2: f64 = (k + 1..n).map(|i| v[i].norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // left: rows k+1.., all columns from k
        for j in k..n {
            let mut s = Complex::new(0.0, 0.0);
            for i in k + 1..n {
                s += v[i].conj() * a[(i, j)];
            }
            s *= beta;
            for i in k + 1..n {
                a[(i, j)] -= v[i] * s;
            }
        }
        // right: all rows, columns k+1..
        for i in 0..n {
            let mut s = Complex::new(0.0, 0.0);
            for j in k + 1..n {
                s += a[(i, j)] * v[j];
            }
            s *= beta;
            for j in k + 1..n {
                a[(i, j)] -= s * v[j].conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = Complex::new(0.0, 0.0);
        }
    }
}

/// Both eigenvalues of `[a b; c d]`.
fn eig2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mid = (a + d) * 0.5;
    (mid + disc, mid - disc)
}

/// Eigenvalue of the 2×2 block `[a b; c d]` closer to `d`.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let (l1, l2) = eig2(a, b, c, d);
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn hessenberg_qr(h: &mut DMatrix<C64>) -> Result<Vec<C64>> {
    let n = h.nrows();
    let mut eig = vec![Complex::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(eig);
    }
    let scale = h.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let tiny = f64::MIN_POSITIVE * n as f64 / f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut rot: Vec<(C64, C64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        // deflation search
        let mut lo = hi;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            // relative test, then a norm-wise one so clustered eigenvalues stuck at
            // the roundoff floor still deflate
            let sub = h[(lo, lo - 1)].norm();
            if sub <= f64::EPSILON * s || sub <= f64::EPSILON * scale || sub <= tiny {
                h[(lo, lo - 1)] = Complex::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        if lo + 1 == hi {
            // closed form; QR converges only linearly on a nearly defective pair
            let (l1, l2) = eig2(h[(lo, lo)], h[(lo, hi)], h[(hi, lo)], h[(hi, hi)]);
            eig[lo] = l1;
            eig[hi] = l2;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > ITER_FACTOR * n.max(10) {
            return Err(Error::EigenFailure);
        }
        let mu = if iter % 10 == 0 {
            // exceptional shifts break cycles of the Wilkinson iteration
            if iter % 20 == 0 {
                h[(hi, hi)] + Complex::new(0.75 * h[(hi, hi - 1)].l1_norm(), 0.0)
            } else {
                h[(lo, lo)] + Complex::new(0.75 * h[(lo + 1, lo)].l1_norm(), 0.0)
            }
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        // explicit shifted QR sweep on the active window lo..=hi
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rot.clear();
        for k in lo..hi {
            let x = h[(k, k)];
            let y = h[(k + 1, k)];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0))
            } else {
                (x / r, y / r)
            };
            for j in k..=hi {
                let (a, b) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = c.conj() * a + s.conj() * b;
                h[(k + 1, j)] = -s * a + c * b;
            }
            rot.push((c, s));
        }
        for (i, &(c, s)) in rot.iter().enumerate() {
            let k = lo + i;
            for r in lo..=(k + 1).min(hi) {
                let (a, b) = (h[(r, k)], h[(r, k + 1)]);
                h[(r, k)] = a * c + b * s;
                h[(r, k + 1)] = -a * s.conj() + b * c.conj();
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        Complex::new(re, im)
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_and_triangular() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-2.0, 1.0), c(0.5, -0.5)]));
        let ev = sorted(eigenvalues(&d).unwrap());
        assert_eq!(ev, sorted(vec![c(1.0, 0.0), c(-2.0, 1.0), c(0.5, -0.5)]));
    }

    #[test]
    fn companion_matrix_roots() {
        // roots 1, 2, 3, −1+i, −1−i of a degree-5 polynomial
        let roots = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(-1.0, 1.0), c(-1.0, -1.0)];
        let mut coef = vec![c(1.0, 0.0)];
        for r in roots {
            let mut next = vec![c(0.0, 0.0); coef.len() + 1];
            for (i, a) in coef.iter().enumerate() {
                next[i] += *a;
                next[i + 1] -= *a * r;
            }
            coef = next;
        }
        let n = roots.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                -coef[j + 1]
            } else if i == j + 1 {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let ev = sorted(eigenvalues(&m).unwrap());
        for (a, b) in ev.iter().zip(sorted(roots.to_vec())) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn trace_and_determinant_preserved() {
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for n in [3, 8, 20, 51] {
            let m = DMatrix::from_fn(n, n, |_, _| c(rnd(), rnd()));
            let ev = eigenvalues(&m).unwrap();
            let tr: C64 = ev.iter().sum();
            assert!((tr - m.trace()).norm() < 1e-10 * n as f64);
            let det: C64 = ev.iter().product();
            let lu_det = m.clone().lu().determinant();
            assert!((det - lu_det).norm() < 1e-9 * lu_det.norm().max(1.0), "n={n}");
        }
    }

    #[test]
    fn already_reduced_and_zero_blocks() {
        let mut m = DMatrix::from_element(6, 6, c(0.0, 0.0));
        m[(0, 0)] = c(1.0, 0.0);
        m[(3, 3)] = c(0.25, 0.0);
        m[(4, 5)] = c(1.0, 0.0);
        m[(5, 4)] = c(-1.0, 0.0);
        let ev = eigenvalues(&m).unwrap();
        let mods: Vec<f64> = sorted(ev).iter().map(|z| z.norm()).collect();
        let mut expect = vec![0.0, 0.0, 0.25, 1.0, 1.0, 1.0];
        let mut got = mods.clone();
        got.sort_by(f64::total_cmp);
        expect.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
