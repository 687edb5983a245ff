//! Finite inclusions 𝒩 ⊂ ℳ of multi-matrix algebras built from Bratteli data:
//! the block-diagonal embedding, the trace-preserving conditional expectation,
//! a Pimsner-Popa basis, the Jones index δ², and the relative commutant.

use num_complex::Complex64;

use crate::linalg::{self, cr, CMat, DEFAULT_TOL};
use crate::mmalg::{
    self, Algebra, AlgebraElement, MultiMatrixAlgebra, TraceWeights,
};
use crate::{Error, Result};

/// How the trace on ℳ is specified.
#[derive(Debug, Clone)]
pub enum TraceSpec {
    /// Explicit weights t_l; rescaled to τ(1) = 1 when `normalize` is set.
    Explicit { weights: Vec<f64>, normalize: bool },
    /// Perron-Frobenius eigenvector of AᵀA, rescaled to τ(1) = 1.
    Markov,
}

/// A finite set {η_j} ⊂ ℳ with Σ_j η_j E_𝒩(η_j* x) = x for all x ∈ ℳ.
#[derive(Debug, Clone)]
pub struct PimsnerPopaBasis {
    pub elements: Vec<AlgebraElement>,
}

/// An inclusion 𝒩 ⊂ ℳ with adjacency matrix A, compatible traces, the
/// canonical lexicographic embedding, and eagerly computed derived data.
pub struct Inclusion {
    pub small: Algebra,
    pub big: Algebra,
    /// a_kl: multiplicity of 𝒩-block k inside ℳ-block l.
    pub adjacency: Vec<Vec<usize>>,
    pub trace_big: TraceWeights,
    pub trace_small: TraceWeights,
    /// big-coords × small-coords matrix of the unital *-embedding.
    embed_mat: CMat,
    /// small-coords × big-coords matrix of E_𝒩 (trace adjoint of the embedding).
    cond_exp_mat: CMat,
    pp: PimsnerPopaBasis,
    delta_sq: f64,
}

impl Inclusion {
    pub fn delta_sq(&self) -> f64 {
        self.delta_sq
    }

    pub fn delta(&self) -> f64 {
        self.delta_sq.sqrt()
    }

    pub fn pp_basis(&self) -> &PimsnerPopaBasis {
        &self.pp
    }

    /// The canonical embedding ι: 𝒩 → ℳ.
    pub fn embed(&self, y: &AlgebraElement) -> AlgebraElement {
        let v = &self.embed_mat * y.coords();
        AlgebraElement::from_coords(&self.big, &v).expect("embedding shape")
    }

    pub fn embed_matrix(&self) -> &CMat {
        &self.embed_mat
    }

    /// Trace-preserving conditional expectation E_𝒩: ℳ → 𝒩.
    pub fn cond_exp(&self, x: &AlgebraElement) -> AlgebraElement {
        let v = &self.cond_exp_mat * x.coords();
        AlgebraElement::from_coords(&self.small, &v).expect("cond exp shape")
    }

    pub fn cond_exp_matrix(&self) -> &CMat {
        &self.cond_exp_mat
    }

    pub fn trace_big_of(&self, x: &AlgebraElement) -> Complex64 {
        mmalg::trace(&self.trace_big, x).expect("trace shape")
    }

    pub fn trace_small_of(&self, y: &AlgebraElement) -> Complex64 {
        mmalg::trace(&self.trace_small, y).expect("trace shape")
    }

    /// δ² recomputed from an arbitrary Pimsner-Popa basis (used for the
    /// basis-invariance property; the cached value comes from the canonical one).
    pub fn index_from_basis(&self, basis: &PimsnerPopaBasis) -> f64 {
        basis
            .elements
            .iter()
            .map(|e| self.trace_big_of(&e.adjoint().mul(e)).re)
            .sum()
    }

    /// Σ_j η_j E_𝒩(η_j* x) − x, largest block norm over a full basis of ℳ.
    pub fn reconstruction_defect(&self, basis: &PimsnerPopaBasis) -> f64 {
        let mut worst: f64 = 0.0;
        for x in AlgebraElement::basis(&self.big) {
            let mut acc = AlgebraElement::zero(&self.big);
            for eta in &basis.elements {
                let e = self.cond_exp(&eta.adjoint().mul(&x));
                acc = acc.add(&eta.mul(&self.embed(&e)));
            }
            worst = worst.max(acc.sub(&x).norm_inf());
        }
        worst
    }
}

/// Build an inclusion from Bratteli data.
///
/// Block l of ℳ has size m_l = Σ_k n_k a_kl and the embedding places
/// y = ⊕_k y_k as a_kl consecutive copies of y_k, ordered lexicographically
/// by (k, copy index). The ℳ-trace comes from `trace_spec`; the 𝒩-trace is
/// s = A t.
pub fn build_inclusion(
    dims_small: &[usize],
    adjacency: &[Vec<usize>],
    trace_spec: TraceSpec,
) -> Result<Inclusion> {
    let k_count = dims_small.len();
    if adjacency.len() != k_count {
        return Err(Error::InvalidInclusion("adjacency must have one row per 𝒩-block".into()));
    }
    let l_count = adjacency
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::InvalidInclusion("empty adjacency".into()))?;
    if l_count == 0 || adjacency.iter().any(|r| r.len() != l_count) {
        return Err(Error::InvalidInclusion("ragged or empty adjacency".into()));
    }
    for (k, row) in adjacency.iter().enumerate() {
        if row.iter().all(|&a| a == 0) {
            return Err(Error::InvalidInclusion(format!("𝒩-block {k} does not embed anywhere (zero row)")));
        }
    }
    for l in 0..l_count {
        if (0..k_count).all(|k| adjacency[k][l] == 0) {
            return Err(Error::InvalidInclusion(format!("ℳ-block {l} receives nothing (zero column)")));
        }
    }

    let small = MultiMatrixAlgebra::new(dims_small.to_vec())?;
    let dims_big: Vec<usize> = (0..l_count)
        .map(|l| (0..k_count).map(|k| dims_small[k] * adjacency[k][l]).sum())
        .collect();
    let big = MultiMatrixAlgebra::new(dims_big.clone())?;

    let t = match trace_spec {
        TraceSpec::Explicit { weights, normalize } => {
            if weights.len() != l_count {
                return Err(Error::InvalidInclusion("one trace weight per ℳ-block".into()));
            }
            if weights.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::InvalidInclusion("trace weights must be positive".into()));
            }
            if normalize {
                TraceWeights::rescaled_to_unit(&big, weights)?
            } else {
                TraceWeights::new(&big, weights)?
            }
        }
        TraceSpec::Markov => TraceWeights::new(&big, markov_weights(adjacency, &dims_big)?)?,
    };
    let t = TraceWeights::new(&big, t.weights)?;

    // s = A t
    let s_weights: Vec<f64> = (0..k_count)
        .map(|k| (0..l_count).map(|l| adjacency[k][l] as f64 * t.weights[l]).sum())
        .collect();
    let s = TraceWeights::new(&small, s_weights)?;

    let embed_mat = embedding_matrix(&small, &big, adjacency);

    // E_𝒩 = W_s^{-1} ι† W_t: the unique map with τ_𝒩(z* E(x)) = τ_ℳ(ι(z)* x).
    let wt = weight_diag(&big, &t);
    let ws_inv = weight_diag_inv(&small, &s);
    let cond_exp_mat = &ws_inv * embed_mat.adjoint() * &wt;

    let mut inc = Inclusion {
        small,
        big,
        adjacency: adjacency.to_vec(),
        trace_big: t,
        trace_small: s,
        embed_mat,
        cond_exp_mat,
        pp: PimsnerPopaBasis { elements: Vec::new() },
        delta_sq: 0.0,
    };

    verify_embedding(&inc)?;

    let pp = canonical_pp_basis(&inc);
    let defect = inc.reconstruction_defect(&pp);
    if defect > 1e-9 {
        return Err(Error::SolveResidual {
            context: "Pimsner-Popa reconstruction".into(),
            residual: defect,
            tol: 1e-9,
        });
    }
    inc.delta_sq = inc.index_from_basis(&pp);
    inc.pp = pp;
    Ok(inc)
}

fn weight_diag(alg: &Algebra, w: &TraceWeights) -> CMat {
    let mut d = CMat::zeros(alg.dim(), alg.dim());
    let mut off = 0;
    for (l, &n) in alg.dims().iter().enumerate() {
        for _ in 0..n * n {
            d[(off, off)] = cr(w.weights[l]);
            off += 1;
        }
    }
    d
}

fn weight_diag_inv(alg: &Algebra, w: &TraceWeights) -> CMat {
    let mut d = CMat::zeros(alg.dim(), alg.dim());
    let mut off = 0;
    for (l, &n) in alg.dims().iter().enumerate() {
        for _ in 0..n * n {
            d[(off, off)] = cr(1.0 / w.weights[l]);
            off += 1;
        }
    }
    d
}

/// Row origin of the c-th copy of 𝒩-block k inside ℳ-block l.
fn copy_offset(dims_small: &[usize], adjacency: &[Vec<usize>], k: usize, l: usize, copy: usize) -> usize {
    let mut off = 0;
    for kk in 0..k {
        off += dims_small[kk] * adjacency[kk][l];
    }
    off + copy * dims_small[k]
}

fn embedding_matrix(small: &Algebra, big: &Algebra, adjacency: &[Vec<usize>]) -> CMat {
    let mut m = CMat::zeros(big.dim(), small.dim());
    for (i, unit) in AlgebraElement::basis(small).iter().enumerate() {
        let img = embed_element(small, big, adjacency, unit);
        m.set_column(i, &img.coords());
    }
    m
}

fn embed_element(
    small: &Algebra,
    big: &Algebra,
    adjacency: &[Vec<usize>],
    y: &AlgebraElement,
) -> AlgebraElement {
    let mut out = AlgebraElement::zero(big);
    for (l, &_ml) in big.dims().iter().enumerate() {
        for (k, &nk) in small.dims().iter().enumerate() {
            for copy in 0..adjacency[k][l] {
                let off = copy_offset(small.dims(), adjacency, k, l, copy);
                for r in 0..nk {
                    for s in 0..nk {
                        out.blocks[l][(off + r, off + s)] += y.blocks[k][(r, s)];
                    }
                }
            }
        }
    }
    out
}

fn verify_embedding(inc: &Inclusion) -> Result<()> {
    let one_small = AlgebraElement::identity(&inc.small);
    let one_big = AlgebraElement::identity(&inc.big);
    if inc.embed(&one_small).sub(&one_big).norm_inf() > 1e-12 {
        return Err(Error::InvalidInclusion("embedding is not unital".into()));
    }
    let basis = AlgebraElement::basis(&inc.small);
    for a in &basis {
        let lhs = inc.embed(&a.adjoint());
        let rhs = inc.embed(a).adjoint();
        if lhs.sub(&rhs).norm_inf() > 1e-12 {
            return Err(Error::InvalidInclusion("embedding does not preserve adjoints".into()));
        }
        // trace compatibility τ_ℳ(ι(y)) = τ_𝒩(y)
        let d = (inc.trace_big_of(&inc.embed(a)) - inc.trace_small_of(a)).norm();
        if d > 1e-12 {
            return Err(Error::InvalidInclusion(format!("trace mismatch {d:.3e} on basis element")));
        }
    }
    let mut rng = mmalg::rng_from_seed(0xB0B);
    for _ in 0..4 {
        let a = mmalg::random_element(&mut rng, &inc.small);
        let b = mmalg::random_element(&mut rng, &inc.small);
        let d = inc
            .embed(&a.mul(&b))
            .sub(&inc.embed(&a).mul(&inc.embed(&b)))
            .norm_inf();
        if d > 1e-10 * (1.0 + a.norm_inf() * b.norm_inf()) {
            return Err(Error::InvalidInclusion("embedding is not multiplicative".into()));
        }
    }
    Ok(())
}

fn markov_weights(adjacency: &[Vec<usize>], dims_big: &[usize]) -> Result<Vec<f64>> {
    let k_count = adjacency.len();
    let l_count = adjacency[0].len();
    // AᵀA acting on ℳ-block weight vectors.
    let mut ata = nalgebra::DMatrix::<f64>::zeros(l_count, l_count);
    for l1 in 0..l_count {
        for l2 in 0..l_count {
            let mut v = 0.0;
            for k in 0..k_count {
                v += (adjacency[k][l1] * adjacency[k][l2]) as f64;
            }
            ata[(l1, l2)] = v;
        }
    }
    // Power iteration; AᵀA is symmetric nonnegative so this converges to the
    // Perron eigenvector for connected data.
    let mut v = nalgebra::DVector::<f64>::from_element(l_count, 1.0);
    for _ in 0..10_000 {
        let w = &ata * &v;
        let n = w.norm();
        if n == 0.0 {
            return Err(Error::InvalidInclusion("AᵀA annihilates the positive cone".into()));
        }
        let w = w / n;
        let delta = (&w - &v).norm();
        v = w;
        if delta < 1e-15 {
            break;
        }
    }
    if v.iter().any(|&x| x <= 1e-12) {
        return Err(Error::InvalidInclusion(
            "Markov trace needs a strictly positive Perron eigenvector (connected Bratteli data)".into(),
        ));
    }
    let total: f64 = v
        .iter()
        .zip(dims_big)
        .map(|(w, &m)| w * m as f64)
        .sum();
    Ok(v.iter().map(|w| w / total).collect())
}

/// The basis {η}: for every (k, l) with a_kl > 0, matrix units from each row
/// (k', c', r') of ℳ-block l to the first column of copy c of 𝒩-block k,
/// scaled by √(s_k / t_l) so that E_𝒩(η* η) is a minimal projection.
fn canonical_pp_basis(inc: &Inclusion) -> PimsnerPopaBasis {
    let mut elements = Vec::new();
    let dims_small = inc.small.dims();
    let dims_big = inc.big.dims();
    for (k, &_nk) in dims_small.iter().enumerate() {
        for l in 0..dims_big.len() {
            let akl = inc.adjacency[k][l];
            if akl == 0 {
                continue;
            }
            let scale = (inc.trace_small.weights[k] / inc.trace_big.weights[l]).sqrt();
            for c in 0..akl {
                let col = copy_offset(dims_small, &inc.adjacency, k, l, c);
                for row in 0..dims_big[l] {
                    let mut e = AlgebraElement::zero(&inc.big);
                    e.blocks[l][(row, col)] = cr(scale);
                    elements.push(e);
                }
            }
        }
    }
    PimsnerPopaBasis { elements }
}

/// Replace {η_j} by {η_j u} for a unitary u ∈ 𝒩 (still a Pimsner-Popa basis).
pub fn rotate_basis(inc: &Inclusion, basis: &PimsnerPopaBasis, u: &AlgebraElement) -> PimsnerPopaBasis {
    let ue = inc.embed(u);
    PimsnerPopaBasis {
        elements: basis.elements.iter().map(|e| e.mul(&ue)).collect(),
    }
}

/// Linear basis of 𝒩′ ∩ ℳ plus the minimal central projections e_k f_l.
pub struct RelativeCommutant {
    /// Orthonormal basis w.r.t. ⟨x, y⟩ = τ_ℳ(y* x).
    pub basis: Vec<AlgebraElement>,
    /// (k, l, e_k f_l, τ_ℳ(e_k f_l)) for every a_kl > 0.
    pub central_projections: Vec<(usize, usize, AlgebraElement, f64)>,
}

/// Solve [ι(y), x] = 0 for x ∈ ℳ over a basis y of 𝒩.
pub fn relative_commutant(inc: &Inclusion) -> Result<RelativeCommutant> {
    let dim = inc.big.dim();
    let mut ops = Vec::new();
    for y in AlgebraElement::basis(&inc.small) {
        let e = inc.embed(&y);
        ops.push(mmalg::left_mult_matrix(&inc.big, &e) - mmalg::right_mult_matrix(&inc.big, &e));
    }
    let kernel = linalg::null_space_of(&ops, dim, DEFAULT_TOL);
    let raw: Vec<AlgebraElement> = kernel
        .iter()
        .map(|v| AlgebraElement::from_coords(&inc.big, v))
        .collect::<Result<_>>()?;
    let basis = orthonormalize_elements(&raw, &inc.trace_big);

    let mut central_projections = Vec::new();
    for (k, _) in inc.small.dims().iter().enumerate() {
        let mut zk = AlgebraElement::zero(&inc.small);
        let d = inc.small.dims()[k];
        for i in 0..d {
            zk.blocks[k][(i, i)] = cr(1.0);
        }
        let ek = inc.embed(&zk);
        for l in 0..inc.big.dims().len() {
            if inc.adjacency[k][l] == 0 {
                continue;
            }
            let mut fl = AlgebraElement::zero(&inc.big);
            let ml = inc.big.dims()[l];
            for i in 0..ml {
                fl.blocks[l][(i, i)] = cr(1.0);
            }
            let p = ek.mul(&fl);
            let t = inc.trace_big_of(&p).re;
            central_projections.push((k, l, p, t));
        }
    }
    Ok(RelativeCommutant { basis, central_projections })
}

/// Gram-Schmidt in the τ-weighted Hilbert-Schmidt geometry; near-dependent
/// inputs are dropped.
pub fn orthonormalize_elements(elems: &[AlgebraElement], w: &TraceWeights) -> Vec<AlgebraElement> {
    let mut out: Vec<AlgebraElement> = Vec::new();
    for e in elems {
        let mut v = e.clone();
        for _ in 0..2 {
            for b in &out {
                let coef = mmalg::trace_inner(w, &v, b);
                v = v.sub(&b.scale(coef));
            }
        }
        let n2 = mmalg::trace_inner(w, &v, &v).re;
        if n2 > 1e-16 {
            v = v.scale(cr(1.0 / n2.sqrt()));
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmalg::rng_from_seed;

    pub(super) fn c_in_m2() -> Inclusion {
        build_inclusion(&[1], &[vec![2]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap()
    }

    pub(super) fn c2_in_m2() -> Inclusion {
        build_inclusion(
            &[1, 1],
            &[vec![1], vec![1]],
            TraceSpec::Explicit { weights: vec![0.5], normalize: false },
        )
        .unwrap()
    }

    pub(super) fn c_in_c2() -> Inclusion {
        build_inclusion(
            &[1],
            &[vec![1, 1]],
            TraceSpec::Explicit { weights: vec![1.0 / 3.0, 2.0 / 3.0], normalize: false },
        )
        .unwrap()
    }

    #[test]
    fn build_examples() {
        let inc = c_in_m2();
        assert_eq!(inc.big.dims(), &[2]);
        assert!((inc.trace_small.weights[0] - 1.0).abs() < 1e-12);
        // embed(λ) = λ I₂
        let lam = AlgebraElement::identity(&inc.small).scale(cr(3.0));
        let img = inc.embed(&lam);
        assert!((img.blocks[0][(0, 0)].re - 3.0).abs() < 1e-12);
        assert!((img.blocks[0][(1, 1)].re - 3.0).abs() < 1e-12);

        let inc = c2_in_m2();
        assert_eq!(inc.big.dims(), &[2]);
        let e1 = AlgebraElement::matrix_unit(&inc.small, 0, 0, 0);
        let img = inc.embed(&e1);
        assert!((img.blocks[0][(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(img.blocks[0][(1, 1)].norm() < 1e-12);

        let inc = c_in_c2();
        assert_eq!(inc.big.dims(), &[1, 1]);
        assert!((inc.trace_small.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cond_exp_examples() {
        // x = embed(y) -> y
        let inc = c2_in_m2();
        let mut rng = rng_from_seed(3);
        let y = mmalg::random_element(&mut rng, &inc.small);
        let e = inc.cond_exp(&inc.embed(&y));
        assert!(e.sub(&y).norm_inf() < 1e-12);

        // ℂ ⊂ M₂: E(x) = τ(x)·1
        let inc = c_in_m2();
        let x = mmalg::random_element(&mut rng, &inc.big);
        let e = inc.cond_exp(&x);
        let expect = inc.trace_big_of(&x);
        assert!((e.blocks[0][(0, 0)] - expect).norm() < 1e-12);

        // ℂ² ⊂ M₂ diagonal: E(x) = diag(x11, x22) (pinching)
        let inc = c2_in_m2();
        let x = mmalg::random_element(&mut rng, &inc.big);
        let e = inc.cond_exp(&x);
        assert!((e.blocks[0][(0, 0)] - x.blocks[0][(0, 0)]).norm() < 1e-12);
        assert!((e.blocks[1][(0, 0)] - x.blocks[0][(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn cond_exp_properties() {
        let inc = build_inclusion(
            &[1, 2],
            &[vec![1, 1], vec![1, 0]],
            TraceSpec::Markov,
        )
        .unwrap();
        let mut rng = rng_from_seed(17);
        for _ in 0..10 {
            let x = mmalg::random_element(&mut rng, &inc.big);
            let a = mmalg::random_element(&mut rng, &inc.small);
            let b = mmalg::random_element(&mut rng, &inc.small);
            // bimodularity
            let lhs = inc.cond_exp(&inc.embed(&a).mul(&x).mul(&inc.embed(&b)));
            let rhs = a.mul(&inc.cond_exp(&x)).mul(&b);
            assert!(lhs.sub(&rhs).norm_inf() < 1e-10 * (1.0 + lhs.norm_inf()));
            // idempotence
            let e = inc.cond_exp(&x);
            let ee = inc.cond_exp(&inc.embed(&e));
            assert!(ee.sub(&e).norm_inf() < 1e-10 * (1.0 + e.norm_inf()));
            // trace preservation
            let d = (inc.trace_small_of(&e) - inc.trace_big_of(&x)).norm();
            assert!(d < 1e-10 * (1.0 + x.norm_inf()));
            // positivity
            let p = mmalg::random_positive(&mut rng, &inc.big);
            assert!(mmalg::is_positive(&inc.cond_exp(&p), 1e-9).unwrap());
        }
        // unital
        let one = AlgebraElement::identity(&inc.big);
        assert!(inc.cond_exp(&one).sub(&AlgebraElement::identity(&inc.small)).norm_inf() < 1e-12);
    }

    #[test]
    fn pp_basis_examples() {
        let inc = c_in_m2();
        assert_eq!(inc.pp_basis().elements.len(), 4);
        for e in &inc.pp_basis().elements {
            // entries are 0 or √2
            let m = e.norm_inf();
            assert!((m - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(inc.reconstruction_defect(inc.pp_basis()) < 1e-11);

        let inc = c2_in_m2();
        assert_eq!(inc.pp_basis().elements.len(), 4);
        assert!(inc.reconstruction_defect(inc.pp_basis()) < 1e-11);

        let inc = c_in_c2();
        let b = &inc.pp_basis().elements;
        assert_eq!(b.len(), 2);
        assert!((b[0].blocks[0][(0, 0)].re - 3f64.sqrt()).abs() < 1e-12);
        assert!((b[1].blocks[1][(0, 0)].re - (1.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jones_index_examples() {
        assert!((c_in_m2().delta_sq() - 4.0).abs() < 1e-10);
        assert!((c2_in_m2().delta_sq() - 2.0).abs() < 1e-10);
        assert!((c_in_c2().delta_sq() - 2.0).abs() < 1e-10);
        // any faithful t gives 2 for ℂ ⊂ ℂ²
        let inc = build_inclusion(
            &[1],
            &[vec![1, 1]],
            TraceSpec::Explicit { weights: vec![0.21, 0.79], normalize: false },
        )
        .unwrap();
        assert!((inc.delta_sq() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn jones_index_basis_invariance() {
        let inc = build_inclusion(&[1, 2], &[vec![1, 1], vec![1, 0]], TraceSpec::Markov).unwrap();
        let mut rng = rng_from_seed(23);
        for _ in 0..5 {
            let u = mmalg::random_unitary(&mut rng, &inc.small);
            let rot = rotate_basis(&inc, inc.pp_basis(), &u);
            assert!(inc.reconstruction_defect(&rot) < 1e-9);
            assert!((inc.index_from_basis(&rot) - inc.delta_sq()).abs() < 1e-8);
        }
    }

    #[test]
    fn relative_commutant_examples() {
        // ℂ ⊂ M₂: commutant of scalars is everything
        let rc = relative_commutant(&c_in_m2()).unwrap();
        assert_eq!(rc.basis.len(), 4);

        // ℂ² ⊂ M₂ diagonal: commutant = diagonal (dimension 2)
        let rc = relative_commutant(&c2_in_m2()).unwrap();
        assert_eq!(rc.basis.len(), 2);

        // τ_ℳ(e_k f_l) = n_k a_kl t_l; for ℂ ⊂ M₂: 1·2·(1/2) = 1
        let rc = relative_commutant(&c_in_m2()).unwrap();
        assert_eq!(rc.central_projections.len(), 1);
        assert!((rc.central_projections[0].3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn markov_trace_for_c_in_m2() {
        let inc = build_inclusion(&[1], &[vec![2]], TraceSpec::Markov).unwrap();
        assert!((inc.trace_big.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_disconnected_data() {
        assert!(build_inclusion(&[1, 1], &[vec![1, 0], vec![0, 0]], TraceSpec::Markov).is_err());
        assert!(build_inclusion(
            &[1],
            &[vec![0, 1]],
            TraceSpec::Explicit { weights: vec![0.5, 0.5], normalize: false }
        )
        .is_err());
    }
}
