//! Multi-matrix algebras ⊕_k M_{n_k}(ℂ) with weighted traces, their elements,
//! positivity and functional calculus, and the Gram-quotient engine that
//! produces concrete Hilbert space models (GNS spaces, relative tensor
//! products, correspondences).

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::linalg::{self, cr, CMat, CVec};
use crate::{Error, Result};

/// A finite direct sum of full matrix algebras, described by its block sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiMatrixAlgebra {
    dims: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl MultiMatrixAlgebra {
    pub fn new(dims: Vec<usize>) -> Result<Arc<Self>> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Invalid("block sizes must be nonempty and positive".into()));
        }
        Ok(Arc::new(Self { dims, labels: None }))
    }

    pub fn with_labels(dims: Vec<usize>, labels: Vec<String>) -> Result<Arc<Self>> {
        if labels.len() != dims.len() {
            return Err(Error::Invalid("one label per block".into()));
        }
        let alg = Self::new(dims)?;
        let mut inner = (*alg).clone();
        inner.labels = Some(labels);
        Ok(Arc::new(inner))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_count(&self) -> usize {
        self.dims.len()
    }

    /// Total linear dimension Σ_k n_k².
    pub fn dim(&self) -> usize {
        self.dims.iter().map(|d| d * d).sum()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Offset of block k in the flat coordinate vector.
    pub fn block_offset(&self, k: usize) -> usize {
        self.dims[..k].iter().map(|d| d * d).sum()
    }
}

/// Interned handle; algebras are shared immutably between elements and models.
pub type Algebra = Arc<MultiMatrixAlgebra>;

/// One element of a multi-matrix algebra: a square complex matrix per block.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    pub algebra: Algebra,
    pub blocks: Vec<CMat>,
}

impl AlgebraElement {
    pub fn new(algebra: Algebra, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != algebra.block_count() {
            return Err(Error::Shape("block count mismatch".into()));
        }
        for (b, &d) in blocks.iter().zip(algebra.dims()) {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::Shape(format!("block shape {}x{} vs dim {}", b.nrows(), b.ncols(), d)));
            }
        }
        Ok(Self { algebra, blocks })
    }

    pub fn zero(algebra: &Algebra) -> Self {
        let blocks = algebra.dims().iter().map(|&d| CMat::zeros(d, d)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn identity(algebra: &Algebra) -> Self {
        let blocks = algebra.dims().iter().map(|&d| CMat::identity(d, d)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    /// Matrix unit e^{(l)}_{rs}.
    pub fn matrix_unit(algebra: &Algebra, block: usize, row: usize, col: usize) -> Self {
        let mut out = Self::zero(algebra);
        out.blocks[block][(row, col)] = cr(1.0);
        out
    }

    /// The canonical ordered basis of matrix units: (block, col, row) in
    /// column-major order inside a block, matching the flat coordinates.
    pub fn basis(algebra: &Algebra) -> Vec<Self> {
        let mut out = Vec::with_capacity(algebra.dim());
        for (l, &d) in algebra.dims().iter().enumerate() {
            for col in 0..d {
                for row in 0..d {
                    out.push(Self::matrix_unit(algebra, l, row, col));
                }
            }
        }
        out
    }

    /// Flat coordinates: concatenated column-major vec of the blocks.
    pub fn coords(&self) -> CVec {
        let mut v = CVec::zeros(self.algebra.dim());
        let mut off = 0;
        for b in &self.blocks {
            for z in b.iter() {
                v[off] = *z;
                off += 1;
            }
        }
        v
    }

    pub fn from_coords(algebra: &Algebra, v: &CVec) -> Result<Self> {
        if v.len() != algebra.dim() {
            return Err(Error::Shape("coordinate length mismatch".into()));
        }
        let mut blocks = Vec::with_capacity(algebra.block_count());
        let mut off = 0;
        for &d in algebra.dims() {
            let slice: Vec<Complex64> = (0..d * d).map(|i| v[off + i]).collect();
            blocks.push(CMat::from_iterator(d, d, slice));
            off += d * d;
        }
        Ok(Self { algebra: algebra.clone(), blocks })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, z: Complex64) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(|b| b * z).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm_inf() <= tol
    }

    /// Largest singular value over the blocks.
    pub fn norm_inf(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks.iter().map(linalg::hermiticity_defect).fold(0.0, f64::max)
    }

    /// min over blocks of the smallest eigenvalue (input symmetrized).
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::min_eigenvalue(&((b + b.adjoint()).scale(0.5))))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| linalg::heig(&((b + b.adjoint()).scale(0.5))).0)
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

/// Weights t_l: the trace of a minimal projection in each block.
#[derive(Debug, Clone)]
pub struct TraceWeights {
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl TraceWeights {
    pub fn new(algebra: &Algebra, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != algebra.block_count() {
            return Err(Error::Shape("one weight per block".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Invalid("trace weights must be positive".into()));
        }
        let total: f64 = weights
            .iter()
            .zip(algebra.dims())
            .map(|(w, &d)| w * d as f64)
            .sum();
        Ok(Self { weights, normalized: (total - 1.0).abs() < 1e-10 })
    }

    pub fn rescaled_to_unit(algebra: &Algebra, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights
            .iter()
            .zip(algebra.dims())
            .map(|(w, &d)| w * d as f64)
            .sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("cannot normalize nonpositive weights".into()));
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(algebra, weights)
    }

    /// The uniform trace with τ(1) = 1.
    pub fn tracial(algebra: &Algebra) -> Self {
        let total: usize = algebra.dims().iter().sum::<usize>();
        Self {
            weights: algebra.dims().iter().map(|_| 1.0 / total as f64).collect(),
            normalized: true,
        }
    }

    pub fn total_mass(&self, algebra: &Algebra) -> f64 {
        self.weights
            .iter()
            .zip(algebra.dims())
            .map(|(w, &d)| w * d as f64)
            .sum()
    }
}

/// τ(x) = Σ_l t_l Tr(x_l).
pub fn trace(weights: &TraceWeights, x: &AlgebraElement) -> Result<Complex64> {
    if weights.weights.len() != x.algebra.block_count() {
        return Err(Error::Shape("weights do not match algebra".into()));
    }
    let mut t = Complex64::default();
    for (w, b) in weights.weights.iter().zip(&x.blocks) {
        t += linalg::trace_of(b) * cr(*w);
    }
    Ok(t)
}

/// τ-weighted Hilbert-Schmidt pairing ⟨x, y⟩ = τ(y* x).
pub fn trace_inner(weights: &TraceWeights, x: &AlgebraElement, y: &AlgebraElement) -> Complex64 {
    let mut t = Complex64::default();
    for ((w, a), b) in weights.weights.iter().zip(&x.blocks).zip(&y.blocks) {
        t += linalg::hs_inner(a, b) * cr(*w);
    }
    t
}

/// Positivity check: self-adjoint within tol and every block eigenvalue
/// ≥ -tol * (largest |eigenvalue|, or 1 when all vanish).
pub fn is_positive(x: &AlgebraElement, tol: f64) -> Result<bool> {
    let defect = x.hermiticity_defect();
    if defect > tol.max(1e-10) * x.norm_inf().max(1.0) {
        return Err(Error::NotSelfAdjoint(defect));
    }
    let lmax = x.max_abs_eigenvalue();
    let thresh = tol * if lmax > 0.0 { lmax } else { 1.0 };
    Ok(x.min_eigenvalue() >= -thresh)
}

/// Blockwise functional calculus on a positive element; eigenvalues at or
/// below the support threshold tol·λ_max map to 0 (zero-extension of f).
pub fn fn_calculus(x: &AlgebraElement, f: impl Fn(f64) -> f64 + Copy, tol: f64) -> Result<AlgebraElement> {
    let lmax = x.max_abs_eigenvalue().max(0.0);
    let blocks = x
        .blocks
        .iter()
        .map(|b| fcalc_with_global_scale(b, f, tol, lmax))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlgebraElement { algebra: x.algebra.clone(), blocks })
}

fn fcalc_with_global_scale(m: &CMat, f: impl Fn(f64) -> f64, tol: f64, lmax: f64) -> Result<CMat> {
    let (vals, vecs) = linalg::heig(m);
    let thresh = tol * if lmax > 0.0 { lmax } else { 1.0 };
    let mut mapped = CVec::zeros(vals.len());
    for (i, &l) in vals.iter().enumerate() {
        if l < -1e3 * thresh {
            return Err(Error::NotPositive(l));
        }
        mapped[i] = cr(if l > thresh { f(l) } else { 0.0 });
    }
    Ok(&vecs * CMat::from_diagonal(&mapped) * vecs.adjoint())
}

pub fn sqrt_element(x: &AlgebraElement, tol: f64) -> Result<AlgebraElement> {
    fn_calculus(x, f64::sqrt, tol)
}

pub fn power_element(x: &AlgebraElement, p: f64, tol: f64) -> Result<AlgebraElement> {
    fn_calculus(x, |t| t.powf(p), tol)
}

pub fn log_element(x: &AlgebraElement, tol: f64) -> Result<AlgebraElement> {
    fn_calculus(x, f64::ln, tol)
}

/// Spectral projection onto the support of a positive element.
pub fn support_projection(x: &AlgebraElement, tol: f64) -> Result<AlgebraElement> {
    fn_calculus(x, |_| 1.0, tol)
}

/// A concrete coordinate model of a finite-dimensional Hilbert space obtained
/// as a quotient of a generator span. `registered` holds the coordinates of
/// each generator; `conjugation` (when present) is an antilinear map applied
/// as `matrix * conj(v)`.
#[derive(Debug, Clone)]
pub struct HilbertSpaceModel {
    pub dim: usize,
    /// dim × n_generators matrix; column i = coordinates of generator i.
    pub registered: CMat,
    pub conjugation: Option<CMat>,
}

impl HilbertSpaceModel {
    pub fn generator_coords(&self, i: usize) -> CVec {
        self.registered.column(i).into_owned()
    }

    /// Coordinates of a linear combination of generators.
    pub fn combination(&self, coeffs: &CVec) -> CVec {
        &self.registered * coeffs
    }

    pub fn apply_conjugation(&self, v: &CVec) -> Result<CVec> {
        let j = self
            .conjugation
            .as_ref()
            .ok_or_else(|| Error::Invalid("no conjugation registered".into()))?;
        Ok(j * v.map(|z| z.conj()))
    }
}

/// Orthonormal coordinate model of span(generators)/kernel from a Gram matrix.
///
/// The Gram matrix must be positive semidefinite within `tol`; its numerical
/// rank fixes the dimension, and registered coordinates reproduce the form:
/// ⟨coords_i, coords_j⟩ = gram[(i, j)] with ⟨u, v⟩ = v† u.
pub fn gram_quotient(gram: &CMat, tol: f64) -> Result<HilbertSpaceModel> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::Shape("gram matrix must be square".into()));
    }
    let defect = linalg::hermiticity_defect(gram);
    let scale = gram.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if defect > 1e3 * tol * scale {
        return Err(Error::FormNotPsd(-defect));
    }
    let (vals, vecs) = linalg::heig(gram);
    let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
    let thresh = tol * if lmax > 0.0 { lmax } else { 1.0 };
    let mut kept: Vec<(f64, usize)> = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l < -1e3 * thresh {
            return Err(Error::FormNotPsd(l));
        }
        if l > thresh {
            kept.push((l, i));
        }
    }
    let dim = kept.len();
    // coords_i = Λ^{1/2} Uᵀ e_i reproduces gram[(i,j)] = (U Λ U†)_{ij}.
    let mut registered = CMat::zeros(dim, n);
    for (row, &(l, idx)) in kept.iter().enumerate() {
        let sq = l.sqrt();
        for col in 0..n {
            registered[(row, col)] = vecs[(col, idx)] * cr(sq);
        }
    }
    Ok(HilbertSpaceModel { dim, registered, conjugation: None })
}

/// Convenience wrapper evaluating a sesquilinear form on generator indices.
pub fn gram_quotient_with(
    count: usize,
    form: impl Fn(usize, usize) -> Complex64,
    tol: f64,
) -> Result<HilbertSpaceModel> {
    let mut gram = CMat::zeros(count, count);
    for i in 0..count {
        for j in 0..count {
            gram[(i, j)] = form(i, j);
        }
    }
    gram_quotient(&gram, tol)
}

/// GNS space of an algebra with respect to a state φ(x) = τ_w(ρ x).
pub struct GnsSpace {
    pub space: HilbertSpaceModel,
    /// Left-multiplication matrices for each basis unit, on the model coords.
    pub left: Vec<CMat>,
    /// Right-multiplication matrices for each basis unit.
    pub right: Vec<CMat>,
    /// Coordinates of the cyclic vector Ω_φ.
    pub omega: CVec,
    pub algebra: Algebra,
}

impl GnsSpace {
    /// Coordinates of xΩ_φ.
    pub fn vector_of(&self, x: &AlgebraElement) -> CVec {
        self.space.combination(&x.coords())
    }

    /// Left action of an arbitrary element.
    pub fn left_action(&self, x: &AlgebraElement) -> CMat {
        let mut out = CMat::zeros(self.space.dim, self.space.dim);
        for (i, z) in x.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                out += &self.left[i] * *z;
            }
        }
        out
    }

    pub fn right_action(&self, x: &AlgebraElement) -> CMat {
        let mut out = CMat::zeros(self.space.dim, self.space.dim);
        for (i, z) in x.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                out += &self.right[i] * *z;
            }
        }
        out
    }
}

/// Build L²(B, φ) with φ given by a positive density w.r.t. τ_w.
/// A non-faithful φ yields the reduced (quotient) space.
pub fn gns_space(
    algebra: &Algebra,
    weights: &TraceWeights,
    density: &AlgebraElement,
    tol: f64,
) -> Result<GnsSpace> {
    if !is_positive(density, tol.max(1e-8))? {
        return Err(Error::NotPositive(density.min_eigenvalue()));
    }
    let basis = AlgebraElement::basis(algebra);
    let n = basis.len();
    // ⟨x, y⟩ = φ(y* x) = τ_w(ρ y* x)
    let mut gram = CMat::zeros(n, n);
    for (j, y) in basis.iter().enumerate() {
        let lead = density.mul(&y.adjoint());
        for (i, x) in basis.iter().enumerate() {
            gram[(i, j)] = trace(weights, &lead.mul(x))?;
        }
    }
    let space = gram_quotient(&gram, tol)?;
    let span = space.registered.clone();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for u in &basis {
        let mut limg = CMat::zeros(space.dim, n);
        let mut rimg = CMat::zeros(space.dim, n);
        for (j, b) in basis.iter().enumerate() {
            limg.set_column(j, &space.combination(&u.mul(b).coords()));
            rimg.set_column(j, &space.combination(&b.mul(u).coords()));
        }
        left.push(linalg::operator_from_images(&span, &limg, tol)?);
        right.push(linalg::operator_from_images(&span, &rimg, tol)?);
    }
    let omega = space.combination(&AlgebraElement::identity(algebra).coords());
    Ok(GnsSpace { space, left, right, omega, algebra: algebra.clone() })
}

/// Left-multiplication matrix of `m` on the flat coordinates of its algebra.
pub fn left_mult_matrix(alg: &Algebra, m: &AlgebraElement) -> CMat {
    block_mult_matrix(alg, m, true)
}

/// Right-multiplication matrix of `m` on the flat coordinates of its algebra.
pub fn right_mult_matrix(alg: &Algebra, m: &AlgebraElement) -> CMat {
    block_mult_matrix(alg, m, false)
}

fn block_mult_matrix(alg: &Algebra, m: &AlgebraElement, left: bool) -> CMat {
    let dim = alg.dim();
    let mut out = CMat::zeros(dim, dim);
    let mut off = 0;
    for (l, &d) in alg.dims().iter().enumerate() {
        let op = if left {
            linalg::left_mult_op(&m.blocks[l], d)
        } else {
            linalg::right_mult_op(&m.blocks[l], d)
        };
        for r in 0..d * d {
            for s in 0..d * d {
                out[(off + r, off + s)] = op[(r, s)];
            }
        }
        off += d * d;
    }
    out
}

/// Deterministic seeded generator used by the property harnesses.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A finite family of unitaries whose linear span is the whole algebra:
/// generalized Paulis X^a Z^b per block, over all block combinations, crossed
/// with ± sign patterns (first block positive). Averaging u x u* over the
/// family is the trace-preserving conditional expectation onto the commutant
/// of the algebra.
pub fn spanning_unitaries(algebra: &Algebra) -> Vec<AlgebraElement> {
    let dims = algebra.dims();
    let block_paulis: Vec<Vec<CMat>> = dims
        .iter()
        .map(|&n| {
            let mut ps = Vec::with_capacity(n * n);
            let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / n as f64);
            // X: cyclic shift, Z: phase diagonal
            let mut x = CMat::zeros(n, n);
            for i in 0..n {
                x[((i + 1) % n, i)] = cr(1.0);
            }
            let mut z = CMat::zeros(n, n);
            for i in 0..n {
                z[(i, i)] = omega.powu(i as u32);
            }
            let mut xa = CMat::identity(n, n);
            for _a in 0..n {
                let mut xazb = xa.clone();
                for _b in 0..n {
                    ps.push(xazb.clone());
                    xazb *= &z;
                }
                xa = &x * xa;
            }
            ps
        })
        .collect();
    let k = dims.len();
    let mut out = Vec::new();
    let mut pauli_idx = vec![0usize; k];
    loop {
        // sign patterns with the first block fixed positive
        for signs in 0..(1usize << (k - 1)) {
            let mut blocks = Vec::with_capacity(k);
            for (b, &pi) in pauli_idx.iter().enumerate() {
                let sign = if b > 0 && (signs >> (b - 1)) & 1 == 1 { -1.0 } else { 1.0 };
                blocks.push(&block_paulis[b][pi] * cr(sign));
            }
            out.push(AlgebraElement { algebra: algebra.clone(), blocks });
        }
        // advance the mixed-radix pauli index
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            pauli_idx[pos] += 1;
            if pauli_idx[pos] < block_paulis[pos].len() {
                break;
            }
            pauli_idx[pos] = 0;
            pos += 1;
        }
    }
}

/// exp(i s g) for self-adjoint g.
pub fn fn_calculus_unitary(g: &AlgebraElement, s: f64) -> AlgebraElement {
    let blocks = g
        .blocks
        .iter()
        .map(|b| {
            let (vals, vecs) = linalg::heig(b);
            let phases = CVec::from_iterator(vals.len(), vals.iter().map(|&l| Complex64::from_polar(1.0, s * l)));
            &vecs * CMat::from_diagonal(&phases) * vecs.adjoint()
        })
        .collect();
    AlgebraElement { algebra: g.algebra.clone(), blocks }
}

pub fn random_element<R: Rng>(rng: &mut R, algebra: &Algebra) -> AlgebraElement {
    let blocks = algebra
        .dims()
        .iter()
        .map(|&d| linalg::random_complex_matrix(rng, d, d))
        .collect();
    AlgebraElement { algebra: algebra.clone(), blocks }
}

pub fn random_self_adjoint<R: Rng>(rng: &mut R, algebra: &Algebra) -> AlgebraElement {
    let g = random_element(rng, algebra);
    g.add(&g.adjoint()).scale(cr(0.5))
}

/// g* g for random g; positive by construction.
pub fn random_positive<R: Rng>(rng: &mut R, algebra: &Algebra) -> AlgebraElement {
    let g = random_element(rng, algebra);
    g.adjoint().mul(&g)
}

pub fn random_unitary<R: Rng>(rng: &mut R, algebra: &Algebra) -> AlgebraElement {
    let blocks = algebra
        .dims()
        .iter()
        .map(|&d| linalg::random_unitary_matrix(rng, d))
        .collect();
    AlgebraElement { algebra: algebra.clone(), blocks }
}

/// Random density: positive with τ_w-mass 1.
pub fn random_state<R: Rng>(rng: &mut R, algebra: &Algebra, weights: &TraceWeights) -> Result<AlgebraElement> {
    let p = random_positive(rng, algebra);
    let mass = trace(weights, &p)?.re;
    Ok(p.scale(cr(1.0 / mass)))
}

/// Random faithful density: bounded below on every block.
pub fn random_faithful_state<R: Rng>(
    rng: &mut R,
    algebra: &Algebra,
    weights: &TraceWeights,
) -> Result<AlgebraElement> {
    let p = random_positive(rng, algebra).add(&AlgebraElement::identity(algebra).scale(cr(0.2)));
    let mass = trace(weights, &p)?.re;
    Ok(p.scale(cr(1.0 / mass)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_TOL;

    fn alg(dims: &[usize]) -> Algebra {
        MultiMatrixAlgebra::new(dims.to_vec()).unwrap()
    }

    #[test]
    fn trace_examples() {
        let m2 = alg(&[2]);
        let w = TraceWeights::new(&m2, vec![0.5]).unwrap();
        let one = AlgebraElement::identity(&m2);
        assert!((trace(&w, &one).unwrap().re - 1.0).abs() < 1e-15);

        let p = AlgebraElement::matrix_unit(&m2, 0, 0, 0);
        assert!((trace(&w, &p).unwrap().re - 0.5).abs() < 1e-15);

        // diag(1,2) ⊕ diag(3) with t = (1/4, 1/4): 3/4 + 3/4 = 3/2
        let a = alg(&[2, 1]);
        let w2 = TraceWeights::new(&a, vec![0.25, 0.25]).unwrap();
        let mut x = AlgebraElement::zero(&a);
        x.blocks[0][(0, 0)] = cr(1.0);
        x.blocks[0][(1, 1)] = cr(2.0);
        x.blocks[1][(0, 0)] = cr(3.0);
        assert!((trace(&w2, &x).unwrap().re - 1.5).abs() < 1e-12);
    }

    #[test]
    fn positivity_examples() {
        let m2 = alg(&[2]);
        let zero = AlgebraElement::zero(&m2);
        assert!(is_positive(&zero, 1e-12).unwrap());

        let mut x = AlgebraElement::zero(&m2);
        x.blocks[0][(0, 0)] = cr(1.0);
        x.blocks[0][(1, 1)] = cr(-1e-15);
        assert!(is_positive(&x, 1e-12).unwrap());

        x.blocks[0][(1, 1)] = cr(-0.5);
        assert!(!is_positive(&x, 1e-12).unwrap());
    }

    #[test]
    fn fn_calculus_examples() {
        let m2 = alg(&[2]);
        let mut x = AlgebraElement::zero(&m2);
        x.blocks[0][(0, 0)] = cr(4.0);
        x.blocks[0][(1, 1)] = cr(9.0);
        let s = sqrt_element(&x, DEFAULT_TOL).unwrap();
        assert!((s.blocks[0][(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((s.blocks[0][(1, 1)].re - 3.0).abs() < 1e-12);

        // log on support: diag(e, 0) -> diag(1, 0)
        let mut y = AlgebraElement::zero(&m2);
        y.blocks[0][(0, 0)] = cr(std::f64::consts::E);
        let ly = log_element(&y, DEFAULT_TOL).unwrap();
        assert!((ly.blocks[0][(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(ly.blocks[0][(1, 1)].norm() < 1e-14);

        // t^{-1/2} on support: diag(4, 0) -> diag(1/2, 0)
        let mut z = AlgebraElement::zero(&m2);
        z.blocks[0][(0, 0)] = cr(4.0);
        let iz = power_element(&z, -0.5, DEFAULT_TOL).unwrap();
        assert!((iz.blocks[0][(0, 0)].re - 0.5).abs() < 1e-12);
        assert!(iz.blocks[0][(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn support_projection_examples() {
        let m2 = alg(&[2]);
        let mut x = AlgebraElement::zero(&m2);
        x.blocks[0][(0, 0)] = cr(3.0);
        let p = support_projection(&x, DEFAULT_TOL).unwrap();
        assert!((p.blocks[0][(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(p.blocks[0][(1, 1)].norm() < 1e-13);

        x.blocks[0][(0, 0)] = cr(1.0);
        x.blocks[0][(1, 1)] = cr(1e-15);
        let p = support_projection(&x, DEFAULT_TOL).unwrap();
        assert!(p.blocks[0][(1, 1)].norm() < 1e-13);

        let mut rng = rng_from_seed(5);
        let full = random_positive(&mut rng, &m2).add(&AlgebraElement::identity(&m2));
        let p = support_projection(&full, DEFAULT_TOL).unwrap();
        assert!(p.sub(&AlgebraElement::identity(&m2)).norm_inf() < 1e-10);

        // p·x = x on support
        let y = random_positive(&mut rng, &m2);
        let py = support_projection(&y, DEFAULT_TOL).unwrap().mul(&y);
        assert!(py.sub(&y).norm_inf() < 1e-9 * y.norm_inf());
    }

    #[test]
    fn gram_quotient_rank() {
        let mut g = CMat::zeros(2, 2);
        g.fill(cr(1.0));
        let m = gram_quotient(&g, DEFAULT_TOL).unwrap();
        assert_eq!(m.dim, 1);

        let id = CMat::identity(3, 3);
        let m = gram_quotient(&id, DEFAULT_TOL).unwrap();
        assert_eq!(m.dim, 3);
        for i in 0..3 {
            for j in 0..3 {
                let ip = (m.generator_coords(j).adjoint() * m.generator_coords(i))[(0, 0)];
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip.re - expect).abs() < 1e-12 && ip.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_quotient_rejects_indefinite() {
        let mut g = CMat::identity(2, 2);
        g[(1, 1)] = cr(-1.0);
        assert!(gram_quotient(&g, DEFAULT_TOL).is_err());
    }

    #[test]
    fn gram_quotient_preserves_form() {
        let mut rng = rng_from_seed(31);
        let g0 = linalg::random_complex_matrix(&mut rng, 4, 6);
        let gram = g0.adjoint() * &g0; // 6x6 PSD of rank <= 4
        let m = gram_quotient(&gram, DEFAULT_TOL).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let ip = (m.generator_coords(j).adjoint() * m.generator_coords(i))[(0, 0)];
                assert!((ip - gram[(i, j)]).norm() < 1e-10 * linalg::frob_norm(&gram));
            }
        }
    }

    #[test]
    fn gns_examples() {
        let c1 = alg(&[1]);
        let w = TraceWeights::new(&c1, vec![1.0]).unwrap();
        let one = AlgebraElement::identity(&c1);
        let g = gns_space(&c1, &w, &one, DEFAULT_TOL).unwrap();
        assert_eq!(g.space.dim, 1);

        let m2 = alg(&[2]);
        let w = TraceWeights::new(&m2, vec![0.5]).unwrap();
        let one = AlgebraElement::identity(&m2);
        let g = gns_space(&m2, &w, &one, DEFAULT_TOL).unwrap();
        assert_eq!(g.space.dim, 4);

        // B = C², φ = (1/3, 2/3): ⟨e1, e1⟩ = 1/3
        let c2 = alg(&[1, 1]);
        let w = TraceWeights::new(&c2, vec![1.0, 1.0]).unwrap();
        let mut rho = AlgebraElement::zero(&c2);
        rho.blocks[0][(0, 0)] = cr(1.0 / 3.0);
        rho.blocks[1][(0, 0)] = cr(2.0 / 3.0);
        let g = gns_space(&c2, &w, &rho, DEFAULT_TOL).unwrap();
        assert_eq!(g.space.dim, 2);
        let e1 = AlgebraElement::matrix_unit(&c2, 0, 0, 0);
        let v = g.vector_of(&e1);
        let n2 = (v.adjoint() * &v)[(0, 0)].re;
        assert!((n2 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_generators_deterministic_and_valid() {
        let m2 = alg(&[2, 1]);
        let w = TraceWeights::tracial(&m2);
        let a = random_element(&mut rng_from_seed(42), &m2);
        let b = random_element(&mut rng_from_seed(42), &m2);
        assert!(a.sub(&b).norm_inf() == 0.0);

        let u = random_unitary(&mut rng_from_seed(1), &m2);
        let d = u.adjoint().mul(&u).sub(&AlgebraElement::identity(&m2));
        assert!(d.norm_inf() < 1e-12);

        let s = random_state(&mut rng_from_seed(2), &m2, &w).unwrap();
        assert!((trace(&w, &s).unwrap().re - 1.0).abs() < 1e-12);
        assert!(is_positive(&s, 1e-10).unwrap());
    }

    #[test]
    fn fn_calculus_consistency() {
        let a = alg(&[2, 3]);
        let mut rng = rng_from_seed(9);
        let x = random_positive(&mut rng, &a);
        let y = fn_calculus(&x, |t| t, DEFAULT_TOL).unwrap();
        assert!(x.sub(&y).norm_inf() < 1e-10 * x.norm_inf().max(1.0));

        // exp(log(x)) reproduces x for well-conditioned x
        let xs = x.add(&AlgebraElement::identity(&a).scale(cr(0.5)));
        let l = log_element(&xs, DEFAULT_TOL).unwrap();
        let e = fn_calculus(&l.add(&AlgebraElement::identity(&a).scale(cr(50.0))), |t| (t - 50.0).exp(), DEFAULT_TOL).unwrap();
        assert!(e.sub(&xs).norm_inf() < 1e-8 * xs.norm_inf());
    }

    #[test]
    fn trace_faithful() {
        let a = alg(&[2, 2]);
        let w = TraceWeights::tracial(&a);
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let x = random_element(&mut rng, &a);
            let t = trace(&w, &x.adjoint().mul(&x)).unwrap().re;
            if t < 1e-18 {
                assert!(x.norm_inf() <= 1e-9);
            }
        }
    }
}
