//! Dense complex linear algebra kernel shared by every module.
//!
//! Everything downstream (functional calculus, Gram quotients, commutant
//! solves, operator assembly from generator images) routes through the
//! helpers here so that the whole crate uses one rank policy: a relative
//! cutoff `tol * lambda_max` on Hermitian eigenvalues.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const DEFAULT_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// LAPACK's Hermitian solver; the pure-Rust alternative mishandles repeated
// eigenvalues on the structured matrices this crate produces.
#[link(name = "lapack")]
extern "C" {
    fn zheev_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut f64,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
}

/// Hermitian eigendecomposition (ascending eigenvalues, unitary columns).
pub fn heig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let mut a: Vec<Complex64> = sym.iter().cloned().collect();
    let mut w = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; (3 * n).max(1)];
    let nn = n as i32;
    let mut info = 0i32;
    let mut wkopt = Complex64::default();
    let query = -1i32;
    unsafe {
        zheev_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            &mut wkopt,
            &query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = (wkopt.re as i32).max(2 * nn);
    let mut work = vec![Complex64::default(); lwork as usize];
    unsafe {
        zheev_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    assert_eq!(info, 0, "zheev failed with info = {info}");
    let vecs = CMat::from_iterator(n, n, a.iter().cloned());
    (w, vecs)
}

/// Deviation from self-adjointness in max-entry norm.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Apply `f` to the eigenvalues of a positive semidefinite Hermitian matrix.
///
/// Eigenvalues at or below `tol * lambda_max` are treated as exact zeros and
/// mapped to 0 (the zero-extension used for log-on-support, powers and eta).
/// Eigenvalues below `-tol * lambda_max` are an error.
pub fn fcalc_psd(m: &CMat, f: impl Fn(f64) -> f64, tol: f64) -> Result<CMat> {
    let defect = hermiticity_defect(m);
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if defect > 1e3 * tol * scale {
        return Err(Error::NotSelfAdjoint(defect));
    }
    let (vals, vecs) = heig(m);
    let lmax = vals.iter().cloned().fold(0.0, f64::max).max(0.0);
    let thresh = tol * if lmax > 0.0 { lmax } else { 1.0 };
    let mut mapped = CVec::zeros(vals.len());
    for (i, &l) in vals.iter().enumerate() {
        if l < -thresh {
            return Err(Error::NotPositive(l));
        }
        mapped[i] = cr(if l > thresh { f(l) } else { 0.0 });
    }
    Ok(&vecs * CMat::from_diagonal(&mapped) * vecs.adjoint())
}

/// Spectral projection onto eigenvalues above `tol * lambda_max`.
pub fn support_proj(m: &CMat, tol: f64) -> Result<CMat> {
    fcalc_psd(m, |_| 1.0, tol)
}

pub fn sqrt_psd(m: &CMat, tol: f64) -> Result<CMat> {
    fcalc_psd(m, f64::sqrt, tol)
}

pub fn log_on_support(m: &CMat, tol: f64) -> Result<CMat> {
    fcalc_psd(m, f64::ln, tol)
}

/// t^p on the support; p may be negative.
pub fn power_psd(m: &CMat, p: f64, tol: f64) -> Result<CMat> {
    fcalc_psd(m, |t| t.powf(p), tol)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    heig(m).0.first().copied().unwrap_or(0.0)
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    let gram = m.adjoint() * m;
    let (vals, _) = heig(&gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace_of(m: &CMat) -> Complex64 {
    let mut t = Complex64::default();
    for i in 0..m.nrows().min(m.ncols()) {
        t += m[(i, i)];
    }
    t
}

/// Hilbert-Schmidt pairing Tr(b† a).
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    let mut t = Complex64::default();
    for (x, y) in a.iter().zip(b.iter()) {
        t += y.conj() * x;
    }
    t
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Orthonormal basis of the null space of the stacked system `ops[i] * x = 0`,
/// where each op acts on coordinate vectors of length `dim`. Works on the
/// normal matrix sum(op† op), whose kernel carries a clean spectral gap for
/// the structured systems solved here.
pub fn null_space_of(ops: &[CMat], dim: usize, tol: f64) -> Vec<CVec> {
    let mut normal = CMat::zeros(dim, dim);
    for op in ops {
        // A numerically-zero constraint restricts nothing; normalizing the
        // rest keeps the kernel/non-kernel spectral gap at O(1).
        let f = frob_norm(op);
        if f > 1e-12 {
            normal += (op.unscale(f)).adjoint() * op.unscale(f);
        }
    }
    let (vals, vecs) = heig(&normal);
    let lmax = vals.last().copied().unwrap_or(0.0).max(1.0);
    let mut basis = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l <= tol * lmax {
            basis.push(vecs.column(i).into_owned());
        }
    }
    basis
}

/// Normal matrix K†K of the intertwining constraint K = aᵀ ⊗ 1 − 1 ⊗ b
/// (i.e. K vec(X) = vec(X a − b X)), assembled from four Kronecker terms so
/// no dim²×dim² products are formed. With a = b this is the commutator
/// constraint.
pub fn intertwine_normal(a: &CMat, b: &CMat) -> CMat {
    let a_bar = a.map(|z| z.conj());
    let term1 = kron(&(&a_bar * a.transpose()), &CMat::identity(b.nrows(), b.nrows()));
    let term2 = kron(&CMat::identity(a.nrows(), a.nrows()), &(b.adjoint() * b));
    let term3 = kron(&a_bar, b);
    let term4 = kron(&a.transpose(), &b.adjoint());
    term1 + term2 - term3 - term4
}

/// Kernel basis from an accumulated Hermitian normal matrix, with the
/// normalization and cutoff policy of [`null_space_of`].
pub fn null_space_from_normal(normal: &CMat, tol: f64) -> Vec<CVec> {
    let (vals, vecs) = heig(normal);
    let lmax = vals.last().copied().unwrap_or(0.0).max(1.0);
    let mut basis = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l <= tol * lmax {
            basis.push(vecs.column(i).into_owned());
        }
    }
    basis
}

/// Joint commutant {X : [X, m] = 0 ∀m} as a kernel basis on vec coordinates.
pub fn commutant_kernel(mats: &[CMat], dim: usize, tol: f64) -> Vec<CVec> {
    let mut normal = CMat::zeros(dim * dim, dim * dim);
    for m in mats {
        let f = frob_norm(m);
        if f > 1e-12 {
            let mn = m.unscale(f);
            normal += intertwine_normal(&mn, &mn);
        }
    }
    null_space_from_normal(&normal, tol)
}

/// Moore-Penrose pseudoinverse; `tol` is the relative eigenvalue cutoff on
/// the normal matrix (singular values below √tol · σ_max are treated as 0).
pub fn pinv(m: &CMat, tol: f64) -> CMat {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return CMat::zeros(cols, rows);
    }
    if cols <= rows {
        // pinv = f(A†A) A† with f = inverse on the support
        let normal = m.adjoint() * m;
        let inv = power_psd(&normal, -1.0, tol).unwrap_or_else(|_| CMat::zeros(cols, cols));
        inv * m.adjoint()
    } else {
        let normal = m * m.adjoint();
        let inv = power_psd(&normal, -1.0, tol).unwrap_or_else(|_| CMat::zeros(rows, rows));
        m.adjoint() * inv
    }
}

/// Linear operator determined by its action on a spanning family.
///
/// `span` has the spanning coordinate vectors as columns, `images` their
/// images. Fails when the assignment is inconsistent (the images do not
/// factor through the span), which is exactly the well-definedness check
/// for maps defined on generators of a quotient.
pub fn operator_from_images(span: &CMat, images: &CMat, tol: f64) -> Result<CMat> {
    let op = images * pinv(span, tol * tol);
    let residual = frob_norm(&(&op * span - images));
    let scale = frob_norm(images).max(frob_norm(span)).max(1.0);
    if residual > 1e4 * tol * scale {
        return Err(Error::SolveResidual {
            context: "operator_from_images".into(),
            residual,
            tol: 1e4 * tol * scale,
        });
    }
    Ok(op)
}

/// Orthonormal basis of the column span (left singular vectors above cutoff).
pub fn orthonormal_span(cols: &CMat, tol: f64) -> CMat {
    if cols.ncols() == 0 {
        return CMat::zeros(cols.nrows(), 0);
    }
    let gram = cols.adjoint() * cols;
    let (vals, vecs) = heig(&gram);
    let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
    let mut kept = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l > tol * lmax.max(1e-300) {
            let v = cols * vecs.column(i).into_owned();
            kept.push(v.unscale(l.sqrt()));
        }
    }
    let mut out = CMat::zeros(cols.nrows(), kept.len());
    for (i, v) in kept.iter().enumerate() {
        out.set_column(i, v);
    }
    out
}

/// Orthogonal projection onto the column span.
pub fn projection_onto_span(cols: &CMat, tol: f64) -> CMat {
    let q = orthonormal_span(cols, tol);
    &q * q.adjoint()
}

/// Gram-Schmidt against the Hilbert-Schmidt inner product weighted by `w`
/// (w = None means plain Tr(b† a)). Returns an orthonormal subset spanning
/// the same space; near-dependent inputs are dropped.
pub fn orthonormalize_mats(mats: &[CMat], weight: Option<&dyn Fn(&CMat, &CMat) -> Complex64>, tol: f64) -> Vec<CMat> {
    let ip = |a: &CMat, b: &CMat| -> Complex64 {
        match weight {
            Some(f) => f(a, b),
            None => hs_inner(a, b),
        }
    };
    let mut out: Vec<CMat> = Vec::new();
    for m in mats {
        let mut v = m.clone();
        for _ in 0..2 {
            for b in &out {
                let coef = ip(&v, b);
                v -= b.scale(1.0) * coef;
            }
        }
        let n2 = ip(&v, &v).re;
        if n2 > tol {
            out.push(v.unscale(n2.sqrt()));
        }
    }
    out
}

pub fn random_complex_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(standard_normal(rng), standard_normal(rng))
    })
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let g = random_complex_matrix(rng, n, n);
    (&g + g.adjoint()).scale(0.5)
}

pub fn random_unitary_matrix<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let h = random_hermitian(rng, n);
    let (vals, vecs) = heig(&h);
    // exp(i h) through the eigenbasis
    let phases = CVec::from_iterator(n, vals.iter().map(|&l| Complex64::from_polar(1.0, l)));
    &vecs * CMat::from_diagonal(&phases) * vecs.adjoint()
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; avoids pulling rand_distr in for one distribution.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// vec of a matrix in column-major order, matching nalgebra's storage.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_iterator(m.nrows() * m.ncols(), m.iter().cloned())
}

pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_iterator(rows, cols, v.iter().cloned())
}

/// Matrix of X -> A X on vec coordinates (column-major): I ⊗ A.
pub fn left_mult_op(a: &CMat, cols: usize) -> CMat {
    kron(&CMat::identity(cols, cols), a)
}

/// Matrix of X -> X B on vec coordinates (column-major): Bᵀ ⊗ I.
pub fn right_mult_op(b: &CMat, rows: usize) -> CMat {
    kron(&b.transpose(), &CMat::identity(rows, rows))
}
