use nalgebra::DVector;

use crate::{CMat, Error, Result, C64};

/// Thin singular value decomposition `A = U diag(S) V^H`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `rows x r` with orthonormal columns.
    pub u: CMat,
    /// `r` singular values, descending.
    pub s: Vec<f64>,
    /// `cols x r` with orthonormal columns.
    pub v: CMat,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        &us * self.v.adjoint()
    }
}

fn ensure_finite(a: &CMat, what: &'static str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `A^H B` without materializing the adjoint.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    a.ad_mul(b)
}

/// Thin SVD with `r = min(rows, cols)` and singular values sorted descending.
///
/// Backed by nalgebra's bidiagonalization + implicit QR. Empty inputs yield an
/// empty decomposition.
pub fn svd(a: &CMat) -> Result<SvdResult> {
    ensure_finite(a, "svd input")?;
    let (m, n) = a.shape();
    let r = m.min(n);
    if r == 0 {
        return Ok(SvdResult {
            u: CMat::zeros(m, 0),
            s: Vec::new(),
            v: CMat::zeros(n, 0),
        });
    }
    let dec = a.clone().svd(true, true);
    let u = dec.u.ok_or(Error::NonFinite("svd left vectors"))?;
    let v_t = dec.v_t.ok_or(Error::NonFinite("svd right vectors"))?;
    let sv: Vec<f64> = dec.singular_values.iter().copied().collect();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut u_sorted = CMat::zeros(m, r);
    let mut v_sorted = CMat::zeros(n, r);
    let mut s_sorted = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        // v_t rows are conjugated right singular vectors
        let vcol: DVector<C64> = v_t.row(src).adjoint();
        v_sorted.set_column(dst, &vcol);
        s_sorted.push(sv[src].max(0.0));
    }
    Ok(SvdResult {
        u: u_sorted,
        s: s_sorted,
        v: v_sorted,
    })
}

/// Lower-triangular factor of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: CMat,
}

/// Cholesky factorization `A = L L^H`. Only the lower triangle of `A` is read.
pub fn cholesky(a: &CMat) -> Result<Cholesky> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    ensure_finite(a, "cholesky input")?;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn factor(&self) -> &CMat {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `A X = B` in place of a copy of `B`.
    pub fn solve(&self, b: &CMat) -> Result<CMat> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, factor is {}x{}",
                b.nrows(),
                n,
                n
            )));
        }
        let mut x = b.clone();
        let l = &self.l;
        for c in 0..x.ncols() {
            // L z = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
            // L^H x = z
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMat> {
        self.solve(&CMat::identity(self.dim(), self.dim()))
    }

    /// `log det A = 2 sum log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    cholesky(a)?.solve(b)
}

pub fn log_det_hpd(a: &CMat) -> Result<f64> {
    Ok(cholesky(a)?.log_det())
}

/// Moore-Penrose pseudo-inverse. Singular values below `1e-12 * max` are
/// treated as zero.
pub fn pseudo_inverse(a: &CMat) -> Result<CMat> {
    let (m, n) = a.shape();
    let dec = svd(a)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = 1e-12 * smax;
    let mut v_scaled = dec.v.clone();
    for (j, &s) in dec.s.iter().enumerate() {
        let w = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(j).scale_mut(w);
    }
    if dec.rank() == 0 {
        return Ok(CMat::zeros(n, m));
    }
    Ok(&v_scaled * dec.u.adjoint())
}
