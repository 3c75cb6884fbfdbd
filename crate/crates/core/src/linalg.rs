//! Small dense linear-algebra kernels.
//!
//! Everything here works on `p x p` problems with `p` in the tens, so the
//! routines favour exactness and a predictable error surface over speed:
//! Cholesky with a hard failure on a nonpositive pivot, and a cyclic Jacobi
//! eigendecomposition for spectrum clamping.
//!
//! Curvature matrices come in three shapes. Dense symmetric storage is the
//! canonical one. Per-sample Hessians of generalized linear losses have the
//! form `c * a a^T + r * I` and are kept in that factored form (`Rank1`) so a
//! store of `n` of them costs `O(n)` scalars plus the shared feature rows.
//! Diagonal approximations get their own variant.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};

/// Model coordinates, gradients, directions.
pub type Vector = Array1<f64>;

/// Closed interval `[lo, hi]` with `0 < lo <= hi` that curvature spectra are
/// clamped into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBand {
    lo: f64,
    hi: f64,
}

impl SpectralBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
            return Err(Error::InvalidBand { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lo, self.hi)
    }
}

/// Storage for a symmetric curvature operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    Dense(Array2<f64>),
    Diagonal(Vector),
    /// `coef * direction direction^T + shift * I`.
    Rank1 {
        coef: f64,
        direction: Arc<Vector>,
        shift: f64,
    },
}

/// A symmetric `p x p` matrix together with asserted bounds on its spectrum.
///
/// The bounds are exact for diagonal and rank-1 storage, Gershgorin discs for
/// unclamped dense input, and the clamped extremes after
/// [`clamp_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMatrix {
    repr: Curvature,
    lo: f64,
    hi: f64,
}

impl CurvatureMatrix {
    /// Wraps a dense matrix. Asymmetry beyond rounding is rejected; the
    /// stored matrix is symmetrized so `entry(i, j) == entry(j, i)` exactly.
    pub fn dense(mut a: Array2<f64>) -> Result<Self> {
        let p = a.nrows();
        check_dim(p, a.ncols())?;
        for i in 0..p {
            for j in (i + 1)..p {
                let (x, y) = (a[[i, j]], a[[j, i]]);
                let scale = x.abs().max(y.abs()).max(1.0);
                if (x - y).abs() > 1e-10 * scale {
                    return Err(Error::InvalidConfig(format!(
                        "dense curvature is not symmetric at ({i}, {j}): {x} vs {y}"
                    )));
                }
                let mid = 0.5 * (x + y);
                a[[i, j]] = mid;
                a[[j, i]] = mid;
            }
        }
        let (lo, hi) = gershgorin(&a);
        Ok(Self { repr: Curvature::Dense(a), lo, hi })
    }

    /// Dense matrix whose spectrum is already known to lie in `[lo, hi]`.
    pub(crate) fn dense_with_bounds(a: Array2<f64>, lo: f64, hi: f64) -> Self {
        Self { repr: Curvature::Dense(a), lo, hi }
    }

    pub fn identity(p: usize) -> Self {
        Self::scaled_identity(p, 1.0)
    }

    pub fn scaled_identity(p: usize, scale: f64) -> Self {
        Self::diagonal(Array1::from_elem(p, scale))
    }

    pub fn diagonal(d: Vector) -> Self {
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { repr: Curvature::Diagonal(d), lo, hi }
    }

    pub fn rank1(coef: f64, direction: Arc<Vector>, shift: f64) -> Self {
        let top = coef * direction.dot(direction.as_ref()) + shift;
        let (lo, hi) = if direction.len() > 1 {
            (top.min(shift), top.max(shift))
        } else {
            (top, top)
        };
        Self { repr: Curvature::Rank1 { coef, direction, shift }, lo, hi }
    }

    pub fn repr(&self) -> &Curvature {
        &self.repr
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Curvature::Dense(a) => a.nrows(),
            Curvature::Diagonal(d) => d.len(),
            Curvature::Rank1 { direction, .. } => direction.len(),
        }
    }

    /// Asserted lower bound on the spectrum.
    pub fn lower_bound(&self) -> f64 {
        self.lo
    }

    /// Asserted upper bound on the spectrum.
    pub fn upper_bound(&self) -> f64 {
        self.hi
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            Curvature::Dense(a) => a[[i, j]],
            Curvature::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Curvature::Rank1 { coef, direction, shift } => {
                let base = coef * direction[i] * direction[j];
                if i == j {
                    base + shift
                } else {
                    base
                }
            }
        }
    }

    /// `H * d`.
    pub fn apply(&self, d: ArrayView1<f64>) -> Result<Vector> {
        check_dim(self.dim(), d.len())?;
        Ok(match &self.repr {
            Curvature::Dense(a) => a.dot(&d),
            Curvature::Diagonal(diag) => diag * &d,
            Curvature::Rank1 { coef, direction, shift } => {
                let s = coef * direction.dot(&d);
                let mut out = d.to_owned() * *shift;
                out.scaled_add(s, direction.as_ref());
                out
            }
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let p = self.dim();
        let mut out = Array2::zeros((p, p));
        self.add_scaled_to(&mut out, 1.0);
        out
    }

    /// `target += scale * H`, touching only the entries the storage implies.
    pub fn add_scaled_to(&self, target: &mut Array2<f64>, scale: f64) {
        match &self.repr {
            Curvature::Dense(a) => target.scaled_add(scale, a),
            Curvature::Diagonal(d) => {
                for (i, v) in d.iter().enumerate() {
                    target[[i, i]] += scale * v;
                }
            }
            Curvature::Rank1 { coef, direction, shift } => {
                let c = scale * coef;
                if c != 0.0 {
                    let p = direction.len();
                    for i in 0..p {
                        let ci = c * direction[i];
                        target[[i, i]] += ci * direction[i];
                        for j in (i + 1)..p {
                            // one product per pair keeps the target exactly symmetric
                            let v = ci * direction[j];
                            target[[i, j]] += v;
                            target[[j, i]] += v;
                        }
                    }
                }
                if *shift != 0.0 {
                    for i in 0..direction.len() {
                        target[[i, i]] += scale * shift;
                    }
                }
            }
        }
    }

    /// `H + s I`, keeping the storage shape.
    pub fn shifted(&self, s: f64) -> CurvatureMatrix {
        let (lo, hi) = (self.lo + s, self.hi + s);
        let repr = match &self.repr {
            Curvature::Dense(a) => {
                let mut a = a.clone();
                a.diag_mut().mapv_inplace(|v| v + s);
                Curvature::Dense(a)
            }
            Curvature::Diagonal(d) => Curvature::Diagonal(d.mapv(|v| v + s)),
            Curvature::Rank1 { coef, direction, shift } => {
                Curvature::Rank1 { coef: *coef, direction: direction.clone(), shift: shift + s }
            }
        };
        CurvatureMatrix { repr, lo, hi }
    }

    /// Diagonal entries.
    pub fn diag(&self) -> Vector {
        let p = self.dim();
        Array1::from_iter((0..p).map(|i| self.entry(i, i)))
    }
}

fn gershgorin(a: &Array2<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, row) in a.outer_iter().enumerate() {
        let radius: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
        lo = lo.min(row[i] - radius);
        hi = hi.max(row[i] + radius);
    }
    if a.nrows() == 0 {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// Gershgorin upper bound on the spectrum of `h`, tightened by its asserted
/// bound.
pub fn spectral_upper_bound(h: &CurvatureMatrix) -> f64 {
    match h.repr() {
        Curvature::Dense(a) => gershgorin(a).1.min(h.upper_bound()),
        _ => h.upper_bound(),
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    check_dim(p, a.ncols())?;
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T w = v` given the lower factor.
pub fn cholesky_solve(l: &Array2<f64>, v: ArrayView1<f64>) -> Result<Vector> {
    let p = l.nrows();
    check_dim(p, v.len())?;
    let mut y = v.to_owned();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    Ok(y)
}

/// Solves `H w = v` for positive-definite `H`.
pub fn sym_solve(h: &CurvatureMatrix, v: ArrayView1<f64>) -> Result<Vector> {
    check_dim(h.dim(), v.len())?;
    match h.repr() {
        Curvature::Dense(a) => cholesky_solve(&cholesky(a)?, v),
        Curvature::Diagonal(d) => {
            if let Some((pivot, &value)) = d.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
                return Err(Error::NotPositiveDefinite { pivot, value });
            }
            Ok(&v / d)
        }
        Curvature::Rank1 { coef, direction, shift } if *shift > 0.0 && *coef >= 0.0 => {
            // Sherman-Morrison on r I + c a a^T.
            let norm_sq = direction.dot(direction.as_ref());
            let mut w = v.to_owned() / *shift;
            let factor = coef * direction.dot(&v) / (shift * (shift + coef * norm_sq));
            w.scaled_add(-factor, direction.as_ref());
            Ok(w)
        }
        Curvature::Rank1 { .. } => cholesky_solve(&cholesky(&h.to_dense())?, v),
    }
}

/// `d^T H d`.
pub fn quad_form(h: &CurvatureMatrix, d: ArrayView1<f64>) -> Result<f64> {
    check_dim(h.dim(), d.len())?;
    Ok(match h.repr() {
        Curvature::Dense(a) => d.dot(&a.dot(&d)),
        Curvature::Diagonal(diag) => d.iter().zip(diag).map(|(x, w)| w * x * x).sum(),
        Curvature::Rank1 { coef, direction, shift } => {
            let s = direction.dot(&d);
            coef * s * s + shift * d.dot(&d)
        }
    })
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns, in no
/// particular order.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vector, Array2<f64>)> {
    let p = a.nrows();
    check_dim(p, a.ncols())?;
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(p);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok((Array1::zeros(p), v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = m[[i, j]];
                if aij.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[j, j]] - m[[i, i]]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }
    Ok((m.diag().to_owned(), v))
}

/// Projects the spectrum of `h` onto `[lo, hi]`.
///
/// Eigenvalues already inside the band are left alone; if every eigenvalue
/// is inside, the input is returned unchanged.
pub fn clamp_spectrum(h: &CurvatureMatrix, lo: f64, hi: f64) -> Result<CurvatureMatrix> {
    let band = SpectralBand::new(lo, hi)?;
    Ok(clamp_to_band(h, band))
}

pub fn clamp_to_band(h: &CurvatureMatrix, band: SpectralBand) -> CurvatureMatrix {
    match h.repr() {
        Curvature::Dense(a) => {
            let (vals, vecs) = symmetric_eigen(a).expect("square by construction");
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min >= band.lo() && max <= band.hi() {
                return CurvatureMatrix::dense_with_bounds(a.clone(), min, max);
            }
            let clamped = vals.mapv(|x| band.clamp(x));
            let p = a.nrows();
            let mut out = Array2::<f64>::zeros((p, p));
            for i in 0..p {
                for j in i..p {
                    let mut s = 0.0;
                    for k in 0..p {
                        s += vecs[[i, k]] * clamped[k] * vecs[[j, k]];
                    }
                    out[[i, j]] = s;
                    out[[j, i]] = s;
                }
            }
            let lo = clamped.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = clamped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            CurvatureMatrix::dense_with_bounds(out, lo, hi)
        }
        Curvature::Diagonal(d) => CurvatureMatrix::diagonal(d.mapv(|x| band.clamp(x))),
        Curvature::Rank1 { coef, direction, shift } => {
            let norm_sq = direction.dot(direction.as_ref());
            let p = direction.len();
            if norm_sq == 0.0 {
                return CurvatureMatrix::rank1(0.0, direction.clone(), band.clamp(*shift));
            }
            let top = band.clamp(coef * norm_sq + shift);
            // For p == 1 only the top eigenvalue exists.
            let rest = if p > 1 { band.clamp(*shift) } else { top };
            CurvatureMatrix::rank1((top - rest) / norm_sq, direction.clone(), rest)
        }
    }
}

/// Euclidean norm.
pub fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// Squared Euclidean distance.
pub fn dist_sq(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn sym_solve_identity() {
        let w = sym_solve(&CurvatureMatrix::identity(2), array![3.0, -1.0].view()).unwrap();
        assert_eq!(w, array![3.0, -1.0]);
    }

    #[test]
    fn sym_solve_diagonal() {
        let h = CurvatureMatrix::diagonal(array![2.0, 4.0]);
        let w = sym_solve(&h, array![2.0, 4.0].view()).unwrap();
        assert_eq!(w, array![1.0, 1.0]);
    }

    #[test]
    fn sym_solve_dense_two_by_two() {
        let h = CurvatureMatrix::dense(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let w = sym_solve(&h, array![3.0, 3.0].view()).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sym_solve_rejects_indefinite() {
        let h = CurvatureMatrix::dense(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_solve(&h, array![1.0, 1.0].view()),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        let zero_shift = CurvatureMatrix::rank1(1.0, Arc::new(array![1.0, 0.0]), 0.0);
        assert!(matches!(sym_solve(&zero_shift, array![1.0, 1.0].view()), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sym_solve_rank1_matches_dense() {
        let h = CurvatureMatrix::rank1(0.7, Arc::new(array![1.0, -2.0, 0.5]), 0.3);
        let v = array![1.0, 2.0, 3.0];
        let fast = sym_solve(&h, v.view()).unwrap();
        let slow = cholesky_solve(&cholesky(&h.to_dense()).unwrap(), v.view()).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn clamp_diagonal_examples() {
        let h = CurvatureMatrix::dense(array![[0.0, 0.0], [0.0, 5.0]]).unwrap();
        let c = clamp_spectrum(&h, 1.0, 4.0).unwrap().to_dense();
        assert_abs_diff_eq!(c[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[[1, 1]], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[[0, 1]], 0.0, epsilon = 1e-14);

        let id = CurvatureMatrix::dense(Array2::eye(2)).unwrap();
        assert_eq!(clamp_spectrum(&id, 0.5, 2.0).unwrap().to_dense(), Array2::eye(2));

        let zero = CurvatureMatrix::dense(Array2::zeros((2, 2))).unwrap();
        let c = clamp_spectrum(&zero, 1e-3, 10.0).unwrap().to_dense();
        assert_eq!(c, Array2::eye(2) * 1e-3);

        let zero_glm = CurvatureMatrix::rank1(0.0, Arc::new(array![1.0, 1.0]), 0.0);
        let c = clamp_spectrum(&zero_glm, 1e-3, 10.0).unwrap().to_dense();
        for ((i, j), v) in c.indexed_iter() {
            assert_abs_diff_eq!(*v, if i == j { 1e-3 } else { 0.0 }, epsilon = 1e-18);
        }
    }

    #[test]
    fn clamp_rejects_bad_band() {
        let h = CurvatureMatrix::identity(2);
        assert!(matches!(clamp_spectrum(&h, 0.0, 1.0), Err(Error::InvalidBand { .. })));
        assert!(matches!(clamp_spectrum(&h, 2.0, 1.0), Err(Error::InvalidBand { .. })));
    }

    #[test]
    fn clamp_rank1_keeps_factored_form() {
        let a = Arc::new(array![1.0, 1.0]);
        let h = CurvatureMatrix::rank1(10.0, a, 0.0);
        let c = clamp_spectrum(&h, 0.5, 4.0).unwrap();
        assert!(matches!(c.repr(), Curvature::Rank1 { .. }));
        assert_abs_diff_eq!(c.lower_bound(), 0.5);
        assert_abs_diff_eq!(c.upper_bound(), 4.0, epsilon = 1e-14);
        let (vals, _) = symmetric_eigen(&c.to_dense()).unwrap();
        let mut vals = vals.to_vec();
        vals.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(vals[0], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(vals[1], 4.0, epsilon = 1e-13);
    }

    #[test]
    fn quad_form_examples() {
        assert_eq!(quad_form(&CurvatureMatrix::identity(2), array![3.0, 4.0].view()).unwrap(), 25.0);
        let h = CurvatureMatrix::diagonal(array![2.0, 1.0]);
        assert_eq!(quad_form(&h, array![1.0, 2.0].view()).unwrap(), 6.0);
        let r = CurvatureMatrix::rank1(2.0, Arc::new(array![1.0, 1.0]), 0.0);
        assert_eq!(quad_form(&r, array![1.0, -1.0].view()).unwrap(), 0.0);
        assert!(matches!(
            quad_form(&r, array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = array![[4.0, 1.0, -2.0], [1.0, 2.0, 0.0], [-2.0, 0.0, 3.0]];
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let back = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(vals.sum(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_rejects_asymmetric() {
        assert!(CurvatureMatrix::dense(array![[1.0, 2.0], [0.0, 1.0]]).is_err());
        assert!(CurvatureMatrix::dense(Array2::zeros((2, 3))).is_err());
    }
}
