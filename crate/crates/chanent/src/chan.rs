//! Completely positive maps between multi-matrix algebras: Choi positivity,
//! 𝒩-bimodule channels and their Fourier multipliers, GNS correspondences
//! with derivatives (Radon-Nikodym objects), the convolution isometry for
//! compositions, majorization, and the index λ(Φ, Ψ).

use rand::Rng;

use crate::inclusion::Inclusion;
use crate::linalg::{self, cr, CMat, CVec, DEFAULT_TOL};
use crate::mmalg::{self, Algebra, AlgebraElement, GnsSpace, TraceWeights};
use crate::tower::{self, Tower};
use crate::{Error, Result};

/// A linear map between multi-matrix algebras, stored as its matrix on flat
/// coordinates, with cheap verified flags.
#[derive(Debug, Clone)]
pub struct AlgebraMap {
    pub source: Algebra,
    pub target: Algebra,
    /// target-coords × source-coords.
    pub mat: CMat,
    pub unital: bool,
    pub cp: bool,
}

impl AlgebraMap {
    pub fn new(source: Algebra, target: Algebra, mat: CMat) -> Result<Self> {
        if mat.nrows() != target.dim() || mat.ncols() != source.dim() {
            return Err(Error::Shape("map matrix does not match algebra dimensions".into()));
        }
        let mut map = AlgebraMap { source, target, mat, unital: false, cp: false };
        let one_in = AlgebraElement::identity(&map.source);
        let one_out = AlgebraElement::identity(&map.target);
        map.unital = map.apply(&one_in).sub(&one_out).norm_inf() < 1e-10;
        map.cp = choi_cp_test(&map, DEFAULT_TOL);
        Ok(map)
    }

    pub fn identity(alg: &Algebra) -> Self {
        let d = alg.dim();
        AlgebraMap {
            source: alg.clone(),
            target: alg.clone(),
            mat: CMat::identity(d, d),
            unital: true,
            cp: true,
        }
    }

    /// E_𝒩 as a bimodule channel ℳ → ℳ (embedded back into ℳ).
    pub fn cond_exp_channel(inc: &Inclusion) -> Self {
        let mat = inc.embed_matrix() * inc.cond_exp_matrix();
        AlgebraMap::new(inc.big.clone(), inc.big.clone(), mat).expect("cond exp channel")
    }

    /// E_𝒩 as a map ℳ → 𝒩.
    pub fn cond_exp_map(inc: &Inclusion) -> Self {
        AlgebraMap::new(inc.big.clone(), inc.small.clone(), inc.cond_exp_matrix().clone())
            .expect("cond exp map")
    }

    pub fn apply(&self, x: &AlgebraElement) -> AlgebraElement {
        let v = &self.mat * x.coords();
        AlgebraElement::from_coords(&self.target, &v).expect("map output")
    }

    /// self ∘ other.
    pub fn compose(&self, other: &AlgebraMap) -> Result<AlgebraMap> {
        if self.source.dims() != other.target.dims() {
            return Err(Error::Shape("composition domain mismatch".into()));
        }
        AlgebraMap::new(other.source.clone(), self.target.clone(), &self.mat * &other.mat)
    }

    pub fn scale(&self, c: f64) -> AlgebraMap {
        AlgebraMap {
            source: self.source.clone(),
            target: self.target.clone(),
            mat: &self.mat * cr(c),
            unital: false,
            cp: self.cp && c >= 0.0,
        }
    }

    pub fn add(&self, other: &AlgebraMap) -> Result<AlgebraMap> {
        AlgebraMap::new(self.source.clone(), self.target.clone(), &self.mat + &other.mat)
    }

    pub fn convex(parts: &[AlgebraMap], weights: &[f64]) -> Result<AlgebraMap> {
        if parts.is_empty() || parts.len() != weights.len() {
            return Err(Error::Invalid("convex combination needs matching parts/weights".into()));
        }
        let mut mat = CMat::zeros(parts[0].mat.nrows(), parts[0].mat.ncols());
        for (p, &w) in parts.iter().zip(weights) {
            if w < 0.0 {
                return Err(Error::Invalid("convex weights must be nonnegative".into()));
            }
            mat += &p.mat * cr(w);
        }
        AlgebraMap::new(parts[0].source.clone(), parts[0].target.clone(), mat)
    }

    /// Largest residual of Φ(ι(a) x ι(b)) − ι(a)Φ(x)ι(b) over generators.
    pub fn bimodularity_defect(&self, inc: &Inclusion) -> f64 {
        let mut worst: f64 = 0.0;
        let mut rng = mmalg::rng_from_seed(0xB1B0);
        for _ in 0..3 {
            let x = mmalg::random_element(&mut rng, &inc.big);
            for y in AlgebraElement::basis(&inc.small) {
                let a = inc.embed(&y);
                let lhs = self.apply(&a.mul(&x));
                let rhs = a.mul(&self.apply(&x));
                worst = worst.max(lhs.sub(&rhs).norm_inf());
                let lhs = self.apply(&x.mul(&a));
                let rhs = self.apply(&x).mul(&a);
                worst = worst.max(lhs.sub(&rhs).norm_inf());
            }
        }
        worst
    }

    /// Symmetric unital correction Φ(1)^{-1/2} Φ(·) Φ(1)^{-1/2}.
    pub fn normalized_unital(&self, tol: f64) -> Result<AlgebraMap> {
        let c = self.apply(&AlgebraElement::identity(&self.source));
        if c.min_eigenvalue() < 1e3 * tol * c.norm_inf().max(1.0) {
            return Err(Error::NotPositive(c.min_eigenvalue()));
        }
        let ci = mmalg::power_element(&c, -0.5, tol)?;
        let adj = tower::left_mult_matrix(&self.target, &ci) * tower::right_mult_matrix(&self.target, &ci);
        AlgebraMap::new(self.source.clone(), self.target.clone(), adj * &self.mat)
    }
}

/// Choi blocks of a map: for each (source block k, target block l) the matrix
/// [Φ(e^{(k)}_{rs})_l]_{rs} ∈ M_{n_k} ⊗ M_{m_l}.
pub fn choi_blocks(map: &AlgebraMap) -> Vec<CMat> {
    let mut out = Vec::new();
    for (k, &nk) in map.source.dims().iter().enumerate() {
        let mut images = Vec::with_capacity(nk * nk);
        for r in 0..nk {
            for s in 0..nk {
                images.push(map.apply(&AlgebraElement::matrix_unit(&map.source, k, r, s)));
            }
        }
        for (l, &ml) in map.target.dims().iter().enumerate() {
            let mut c = CMat::zeros(nk * ml, nk * ml);
            for r in 0..nk {
                for s in 0..nk {
                    let img = &images[r * nk + s].blocks[l];
                    for a in 0..ml {
                        for b in 0..ml {
                            c[(r * ml + a, s * ml + b)] = img[(a, b)];
                        }
                    }
                }
            }
            out.push(c);
        }
    }
    out
}

/// Complete positivity through the Choi blocks.
pub fn choi_cp_test(map: &AlgebraMap, tol: f64) -> bool {
    for c in choi_blocks(map) {
        let scale = linalg::op_norm(&c).max(1.0);
        if linalg::hermiticity_defect(&c) > 1e3 * tol * scale {
            return false;
        }
        if linalg::min_eigenvalue(&c) < -1e3 * tol * scale {
            return false;
        }
    }
    true
}

/// The positive operator on L²(ℳ)⊗_𝒩L²(ℳ) encoding a CP bimodule map.
#[derive(Debug, Clone)]
pub struct FourierMultiplier {
    pub mat: CMat,
}

/// Assemble Φ̂ and verify membership in ℳ′∩ℳ₂ plus the reconstruction
/// Φ(x) = δ v_𝒩* (x ⊗ 1) Φ̂ v_𝒩.
pub fn fourier_multiplier(tower: &Tower, map: &AlgebraMap) -> Result<FourierMultiplier> {
    let inc = &tower.inclusion;
    let defect = map.bimodularity_defect(inc);
    if defect > 1e-8 * (1.0 + linalg::op_norm(&map.mat)) {
        return Err(Error::Invalid(format!("map is not 𝒩-bimodular (defect {defect:.3e})")));
    }
    let mat = tower::multiplier_of_map(inc, &tower.rts, &map.mat)?;
    // membership
    let (_, res) = tower.ops.expand_in_end(&mat);
    if res > 1e-8 * (1.0 + linalg::frob_norm(&mat)) {
        return Err(Error::SolveResidual {
            context: "multiplier outside ℳ′∩ℳ₂".into(),
            residual: res,
            tol: 1e-8,
        });
    }
    // round trip
    let back = from_multiplier_unchecked(tower, &mat)?;
    let rt = linalg::frob_norm(&(&back.mat - &map.mat));
    if rt > 1e-8 * (1.0 + linalg::frob_norm(&map.mat)) {
        return Err(Error::SolveResidual {
            context: "multiplier round trip".into(),
            residual: rt,
            tol: 1e-8,
        });
    }
    Ok(FourierMultiplier { mat })
}

/// The CP bimodule map Φ(x) = δ v_𝒩*(x ⊗ 1) P v_𝒩 of a positive multiplier.
pub fn from_multiplier(tower: &Tower, p: &CMat) -> Result<AlgebraMap> {
    let (_, res) = tower.ops.expand_in_end(p);
    if res > 1e-8 * (1.0 + linalg::frob_norm(p)) {
        return Err(Error::Invalid(format!("operator outside ℳ′∩ℳ₂ (residual {res:.3e})")));
    }
    from_multiplier_unchecked(tower, p)
}

fn from_multiplier_unchecked(tower: &Tower, p: &CMat) -> Result<AlgebraMap> {
    let inc = &tower.inclusion;
    let rts = &tower.rts;
    let d = inc.big.dim();
    let delta = inc.delta();
    // Φ(u)-coords = δ W_t⁻¹ v† (u ⊗ 1) P (Ω⊗Ω)
    let mut mat = CMat::zeros(d, d);
    let p_omega = p * &rts.omega_pair;
    for (i, u) in AlgebraElement::basis(&inc.big).iter().enumerate() {
        let w = rts.left_action(u) * &p_omega;
        let paired = rts.v_n.adjoint() * w;
        let mut col = CVec::zeros(d);
        let mut off = 0;
        for (l, &nl) in inc.big.dims().iter().enumerate() {
            for _ in 0..nl * nl {
                col[off] = paired[off] * cr(delta / inc.trace_big.weights[l]);
                off += 1;
            }
        }
        mat.set_column(i, &col);
    }
    AlgebraMap::new(inc.big.clone(), inc.big.clone(), mat)
}

/// Φ ≼ Ψ for bimodule maps: supp Φ̂ ≤ supp Ψ̂.
pub fn majorizes_bimodule(phi: &FourierMultiplier, psi: &FourierMultiplier, tol: f64) -> Result<bool> {
    let sp = linalg::support_proj(&phi.mat, tol)?;
    let sq = linalg::support_proj(&psi.mat, tol)?;
    let dim = sp.nrows();
    let leak = linalg::op_norm(&((CMat::identity(dim, dim) - sq) * sp));
    Ok(leak <= 1e3 * tol)
}

/// Φ ≼ Ψ for general CP maps via Choi-block supports.
pub fn majorizes(phi: &AlgebraMap, psi: &AlgebraMap, tol: f64) -> Result<bool> {
    let cb_phi = choi_blocks(phi);
    let cb_psi = choi_blocks(psi);
    for (a, b) in cb_phi.iter().zip(&cb_psi) {
        let sa = linalg::support_proj(a, tol)?;
        let sb = linalg::support_proj(b, tol)?;
        let dim = sa.nrows();
        if linalg::op_norm(&((CMat::identity(dim, dim) - sb) * sa)) > 1e3 * tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// λ(Φ, Ψ) = sup{λ > 0 : Ψ − λΦ completely positive}.
#[derive(Debug, Clone, Copy)]
pub struct LambdaResult {
    pub value: f64,
    /// Set when Φ is not majorized by Ψ; the paper's convention would put
    /// λ = +∞ there, this artifact reports 0 and flags it.
    pub paper_convention_infinite: bool,
}

pub fn lambda(phi: &AlgebraMap, psi: &AlgebraMap, tol: f64) -> Result<LambdaResult> {
    let mut best = f64::INFINITY;
    for (a, b) in choi_blocks(phi).iter().zip(&choi_blocks(psi)) {
        let dim = a.nrows();
        let scale_a = linalg::op_norm(a);
        if scale_a <= tol {
            continue; // zero block constrains nothing
        }
        let sb = linalg::support_proj(b, tol)?;
        let leak = linalg::op_norm(&((CMat::identity(dim, dim) - &sb) * a));
        if leak > 1e3 * tol * scale_a.max(1.0) {
            return Ok(LambdaResult { value: 0.0, paper_convention_infinite: true });
        }
        let bi = linalg::power_psd(b, -0.5, tol)?;
        let m = &bi * a * &bi;
        let top = linalg::heig(&m).0.last().copied().unwrap_or(0.0);
        if top > 0.0 {
            best = best.min(1.0 / top);
        }
    }
    Ok(LambdaResult { value: best, paper_convention_infinite: false })
}

/// λ through the multipliers: sup{λ : Ψ̂ − λΦ̂ ⪰ 0}.
pub fn lambda_bimodule(phi: &FourierMultiplier, psi: &FourierMultiplier, tol: f64) -> Result<LambdaResult> {
    let dim = phi.mat.nrows();
    let scale_a = linalg::op_norm(&phi.mat);
    if scale_a <= tol {
        return Ok(LambdaResult { value: f64::INFINITY, paper_convention_infinite: false });
    }
    let sb = linalg::support_proj(&psi.mat, tol)?;
    let leak = linalg::op_norm(&((CMat::identity(dim, dim) - &sb) * &phi.mat));
    if leak > 1e3 * tol * scale_a.max(1.0) {
        return Ok(LambdaResult { value: 0.0, paper_convention_infinite: true });
    }
    let bi = linalg::power_psd(&psi.mat, -0.5, tol)?;
    let m = &bi * &phi.mat * &bi;
    let top = linalg::heig(&m).0.last().copied().unwrap_or(0.0);
    Ok(LambdaResult {
        value: if top > 0.0 { 1.0 / top } else { f64::INFINITY },
        paper_convention_infinite: false,
    })
}

/// δ²‖Φ(e₋₁)‖_∞, checked against inf{c : c Ê_𝒩 − Φ̂ ⪰ 0} = δ‖Φ̂‖_∞.
pub fn jones_norm_bound(tower: &Tower, map: &AlgebraMap, e_minus: &AlgebraElement) -> Result<f64> {
    let bound = tower.delta_sq() * map.apply(e_minus).norm_inf();
    let mult = fourier_multiplier(tower, map)?;
    let alt = tower.delta() * linalg::op_norm(&mult.mat);
    if (bound - alt).abs() > 1e-8 * (1.0 + bound.abs()) {
        return Err(Error::SolveResidual {
            context: "δ²‖Φ(e₋₁)‖ vs inf{c : cÊ ⪰ Φ̂}".into(),
            residual: (bound - alt).abs(),
            tol: 1e-8,
        });
    }
    Ok(bound)
}

/// The GNS correspondence ℋ^Ψ of a CP map Ψ: 𝒜 → ℬ with respect to a
/// faithful state φ on ℬ.
pub struct Correspondence {
    pub source: Algebra,
    pub target: Algebra,
    pub dim: usize,
    /// dim × (dim𝒜 · dimℬ): column (i·dimℬ + j) = [a_i ⊗ b_jΩ_φ].
    pub embed: CMat,
    pub embed_pinv: CMat,
    /// L²(ℬ, φ).
    pub l2b: GnsSpace,
    /// L²(𝒜, φ∘Ψ) (reduced when φ∘Ψ is not faithful).
    pub l2a: GnsSpace,
    /// π(u_i) for the 𝒜 basis.
    pub left: Vec<CMat>,
    /// π′(b_j) for the ℬ basis.
    pub right: Vec<CMat>,
    pub omega: CVec,
    /// v: L²(ℬ,φ)-model → ℋ^Ψ.
    pub v: CMat,
    /// u: L²(𝒜,φ∘Ψ)-model → ℋ^Ψ.
    pub u: CMat,
    /// HS-orthonormal basis of End(𝒜-ℬ bimodule).
    pub end_basis: Vec<CMat>,
}

impl Correspondence {
    pub fn left_action(&self, a: &AlgebraElement) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (i, z) in a.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                out += &self.left[i] * *z;
            }
        }
        out
    }

    pub fn right_action(&self, b: &AlgebraElement) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (i, z) in b.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                out += &self.right[i] * *z;
            }
        }
        out
    }

    /// Distance of z to span(End).
    pub fn end_residual(&self, z: &CMat) -> f64 {
        let mut recon = CMat::zeros(self.dim, self.dim);
        for b in &self.end_basis {
            recon += b * linalg::hs_inner(z, b);
        }
        linalg::frob_norm(&(recon - z))
    }
}

/// Build the correspondence of Ψ with respect to the state φ of density
/// `phi_density` (w.r.t. `target_weights`).
pub fn correspondence(
    psi: &AlgebraMap,
    target_weights: &TraceWeights,
    phi_density: &AlgebraElement,
) -> Result<Correspondence> {
    let a_alg = &psi.source;
    let b_alg = &psi.target;
    let da = a_alg.dim();
    let l2b = mmalg::gns_space(b_alg, target_weights, phi_density, DEFAULT_TOL)?;
    if l2b.space.dim != b_alg.dim() {
        return Err(Error::Invalid("state on the target is not faithful".into()));
    }
    let db = b_alg.dim();

    let a_basis = AlgebraElement::basis(a_alg);
    let b_basis = AlgebraElement::basis(b_alg);

    // Gram: ⟨a1⊗ξ1, a2⊗ξ2⟩ = ⟨π_φ(Ψ(a2* a1)) ξ1, ξ2⟩.
    let mut gram = CMat::zeros(da * db, da * db);
    for (i2, a2) in a_basis.iter().enumerate() {
        for (i1, a1) in a_basis.iter().enumerate() {
            let act = l2b.left_action(&psi.apply(&a2.adjoint().mul(a1)));
            for (j1, b1) in b_basis.iter().enumerate() {
                let x1 = l2b.vector_of(b1);
                let ax1 = &act * x1;
                for (j2, b2) in b_basis.iter().enumerate() {
                    let x2 = l2b.vector_of(b2);
                    gram[(i1 * db + j1, i2 * db + j2)] = (x2.adjoint() * &ax1)[(0, 0)];
                }
            }
        }
    }
    // a slightly coarser rank cut than the global default keeps the quotient
    // clear of the PSD dust that numerically-CP inputs carry
    let space = mmalg::gram_quotient(&gram, 1e-8)?;
    let embed = space.registered.clone();
    let embed_pinv = linalg::pinv(&embed, 1e-18);
    let dim = space.dim;

    // Actions on pair coefficients. The operator is the compression of the
    // coefficient action to the quotient; the least-squares residual equals
    // the form-norm of the action applied to numerical-kernel vectors, i.e.
    // it only meters the complete-positivity dust of the input map. The
    // dilation identity below (exact on quotient vectors) is the correctness
    // gate, so only a gross bound is enforced here.
    let push = |coef: &CMat, name: &str| -> Result<CMat> {
        let images = &embed * coef;
        let op = &images * &embed_pinv;
        let res = linalg::frob_norm(&(&op * &embed - &images));
        if res > 1e-5 * linalg::frob_norm(&images).max(1.0) {
            return Err(Error::SolveResidual {
                context: format!("correspondence action {name}"),
                residual: res,
                tol: 1e-5,
            });
        }
        Ok(op)
    };
    let mut left = Vec::with_capacity(da);
    for u in &a_basis {
        let k = linalg::kron(&tower::left_mult_matrix(a_alg, u), &CMat::identity(db, db));
        left.push(push(&k, "left")?);
    }
    let mut right = Vec::with_capacity(db);
    for b in &b_basis {
        let k = linalg::kron(&CMat::identity(da, da), &tower::right_mult_matrix(b_alg, b));
        right.push(push(&k, "right")?);
    }

    let one_a = AlgebraElement::identity(a_alg).coords();
    let one_b = AlgebraElement::identity(b_alg).coords();
    let pair = |x: &CVec, y: &CVec| -> CVec {
        let k = linalg::kron(
            &CMat::from_column_slice(da, 1, x.as_slice()),
            &CMat::from_column_slice(db, 1, y.as_slice()),
        );
        &embed * CVec::from_iterator(da * db, k.iter().cloned())
    };
    let omega = pair(&one_a, &one_b);

    // v: ℬ-model coords → H; columns over the model ONB via pinv of the
    // b-basis coordinates.
    let mut v_cols = CMat::zeros(dim, db);
    for (j, _) in b_basis.iter().enumerate() {
        let mut e = CVec::zeros(db);
        e[j] = cr(1.0);
        v_cols.set_column(j, &pair(&one_a, &e));
    }
    let v = &v_cols * linalg::pinv(&l2b.space.registered, 1e-18);

    // u: L²(𝒜, φ∘Ψ) → H.
    let tr_a = TraceWeights::tracial(a_alg);
    let phi_psi_density = pullback_density(psi, target_weights, phi_density, &tr_a)?;
    let l2a = mmalg::gns_space(a_alg, &TraceWeights::tracial(a_alg), &phi_psi_density, DEFAULT_TOL)?;
    let mut u_cols = CMat::zeros(dim, da);
    for (i, _) in a_basis.iter().enumerate() {
        let mut e = CVec::zeros(da);
        e[i] = cr(1.0);
        u_cols.set_column(i, &pair(&e, &one_b));
    }
    let u = &u_cols * linalg::pinv(&l2a.space.registered, 1e-18);

    // End = joint commutant of both actions.
    let mats: Vec<CMat> = left.iter().chain(right.iter()).cloned().collect();
    let kernel = linalg::commutant_kernel(&mats, dim, DEFAULT_TOL);
    let raw: Vec<CMat> = kernel.iter().map(|k| linalg::unvec(k, dim, dim)).collect();
    let end_basis = linalg::orthonormalize_mats(&raw, None, 1e-14);

    let corr = Correspondence {
        source: a_alg.clone(),
        target: b_alg.clone(),
        dim,
        embed,
        embed_pinv,
        l2b,
        l2a,
        left,
        right,
        omega,
        v,
        u,
        end_basis,
    };
    verify_dilation(psi, &corr)?;
    Ok(corr)
}

/// Density of φ∘Ψ on the source: the unique σ with τ_src(σ a) = φ(Ψ(a)).
pub fn pullback_density(
    psi: &AlgebraMap,
    target_weights: &TraceWeights,
    phi_density: &AlgebraElement,
    source_weights: &TraceWeights,
) -> Result<AlgebraElement> {
    let a_alg = &psi.source;
    let basis = AlgebraElement::basis(a_alg);
    let mut coords = CVec::zeros(a_alg.dim());
    for (i, u) in basis.iter().enumerate() {
        coords[i] = mmalg::trace(target_weights, &phi_density.mul(&psi.apply(u)))?;
    }
    // τ_src(σ e^{(l)}_{rs}) = w_l σ_{sr}: invert the matrix-unit pairing.
    let mut sigma = AlgebraElement::zero(a_alg);
    let mut off = 0;
    for (l, &d) in a_alg.dims().iter().enumerate() {
        for col in 0..d {
            for row in 0..d {
                sigma.blocks[l][(col, row)] = coords[off] / cr(source_weights.weights[l]);
                off += 1;
            }
        }
    }
    Ok(sigma)
}

fn verify_dilation(psi: &AlgebraMap, corr: &Correspondence) -> Result<()> {
    // Ψ(a) = v* π(a) v as operators on the L²(ℬ,φ) model.
    let mut rng = mmalg::rng_from_seed(0xD11A);
    for _ in 0..3 {
        let a = mmalg::random_element(&mut rng, &corr.source);
        let lhs = corr.v.adjoint() * corr.left_action(&a) * &corr.v;
        let rhs = corr.l2b.left_action(&psi.apply(&a));
        let res = linalg::frob_norm(&(&lhs - &rhs));
        if res > 1e-8 * (1.0 + linalg::frob_norm(&rhs)) {
            return Err(Error::SolveResidual {
                context: "dilation Ψ = v*π(·)v".into(),
                residual: res,
                tol: 1e-8,
            });
        }
    }
    // v isometry iff Ψ unital
    let vv = corr.v.adjoint() * &corr.v;
    let d = linalg::frob_norm(&(&vv - CMat::identity(vv.nrows(), vv.ncols())));
    if psi.unital && d > 1e-9 {
        return Err(Error::SolveResidual { context: "v isometry".into(), residual: d, tol: 1e-9 });
    }
    // u isometry always
    let uu = corr.u.adjoint() * &corr.u;
    let d = linalg::frob_norm(&(&uu - CMat::identity(uu.nrows(), uu.ncols())));
    if d > 1e-9 {
        return Err(Error::SolveResidual { context: "u isometry".into(), residual: d, tol: 1e-9 });
    }
    Ok(())
}

/// The derivative h_{Φ,Ψ} ∈ End(ℋ^Ψ): the unique positive solution of
/// Φ(a) = v* π(a) h v.
pub fn derivative(phi: &AlgebraMap, corr: &Correspondence) -> Result<CMat> {
    let n = corr.end_basis.len();
    let db = corr.l2b.space.dim;
    let a_basis = AlgebraElement::basis(&corr.source);
    let rows = a_basis.len() * db * db;
    let mut sys = CMat::zeros(rows, n);
    let mut rhs = CVec::zeros(rows);
    for (ia, a) in a_basis.iter().enumerate() {
        let pa = corr.left_action(a);
        let target = corr.l2b.left_action(&phi.apply(a));
        for (k, e) in corr.end_basis.iter().enumerate() {
            let m = corr.v.adjoint() * &pa * e * &corr.v;
            for (r, z) in m.iter().enumerate() {
                sys[(ia * db * db + r, k)] = *z;
            }
        }
        for (r, z) in target.iter().enumerate() {
            rhs[ia * db * db + r] = *z;
        }
    }
    let coeff = linalg::pinv(&sys, 1e-18) * &rhs;
    let residual = (&sys * &coeff - &rhs).norm();
    if residual > 1e-8 * (1.0 + rhs.norm()) {
        return Err(Error::Majorization(format!(
            "no derivative in End (residual {residual:.3e}); Φ is not majorized by Ψ"
        )));
    }
    let mut h = CMat::zeros(corr.dim, corr.dim);
    for (k, e) in corr.end_basis.iter().enumerate() {
        h += e * coeff[k];
    }
    let h = (&h + h.adjoint()).scale(0.5);
    let scale = linalg::op_norm(&h).max(1e-12);
    if linalg::min_eigenvalue(&h) < -1e-8 * scale {
        return Err(Error::NotPositive(linalg::min_eigenvalue(&h)));
    }
    Ok(h)
}

/// Relative tensor product ℋ^{Ψ₂} ⊗_φ ℋ^{Ψ₁} together with the isometry
/// 𝒴: ℋ^{Ψ₁Ψ₂} → ℋ^{Ψ₂} ⊗_φ ℋ^{Ψ₁} over the middle algebra ℬ.
pub struct ConvolutionModel {
    pub dim: usize,
    /// dim × (dim₂ · dim₁) coordinates of generator pairs (ξ_p ⊗ η_q).
    pub embed: CMat,
    pub y: CMat,
    dim2: usize,
    dim1: usize,
    left_pinv: CMat,
    right_pinv: CMat,
    left_embed: CMat,
    right_embed: CMat,
}

impl ConvolutionModel {
    /// x ⊗_φ y for x ∈ End(ℋ^{Ψ₂}), y ∈ End(ℋ^{Ψ₁}).
    pub fn tensor_op(&self, x: &CMat, y: &CMat) -> CMat {
        let cx = &self.left_pinv * x * &self.left_embed;
        let cy = &self.right_pinv * y * &self.right_embed;
        let k = linalg::kron(&cx, &cy);
        let dim = self.dim;
        let img = &self.embed * k;
        let op = img * linalg::pinv(&self.embed, 1e-18);
        debug_assert_eq!(op.nrows(), dim);
        op
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim2, self.dim1)
    }
}

/// Build the relative tensor product over ℬ with the bounded-vector form
/// ⟨ξ₁⊗η₁, ξ₂⊗η₂⟩ = ⟨π(L*(ξ₂)L(ξ₁))η₁, η₂⟩, using the registered generators
/// of each correspondence as the bounded-vector family.
pub fn convolution_isometry(
    psi2: &AlgebraMap,
    psi1: &AlgebraMap,
    corr2: &Correspondence,
    corr1: &Correspondence,
    corr12: &Correspondence,
) -> Result<ConvolutionModel> {
    let b_alg = &psi2.target;
    let db = b_alg.dim();
    let b_basis = AlgebraElement::basis(b_alg);

    let n2 = corr2.embed.ncols();
    let n1 = corr1.embed.ncols();

    // L_φ(ξ): L²(ℬ,φ)-model → ℋ^{Ψ₂}, Ω_φ b ↦ ξ b.
    let l2b_pinv = linalg::pinv(&corr2.l2b.space.registered, 1e-18);
    let l_of = |xi: &CVec| -> CMat {
        let mut cols = CMat::zeros(corr2.dim, db);
        for (j, _) in b_basis.iter().enumerate() {
            cols.set_column(j, &(&corr2.right[j] * xi));
        }
        cols * &l2b_pinv
    };
    let l_mats: Vec<CMat> = (0..n2).map(|p| l_of(&corr2.embed.column(p).into_owned())).collect();

    // π_{Ψ₁}(L*(ξ₂)L(ξ₁)): resolve the middle element b(ξ₂, ξ₁) ∈ ℬ.
    let left_b_mats: Vec<CMat> = b_basis.iter().map(|b| corr2.l2b.left_action(b)).collect();
    let mut lb_span = CMat::zeros(corr2.l2b.space.dim * corr2.l2b.space.dim, db);
    for (j, m) in left_b_mats.iter().enumerate() {
        lb_span.set_column(j, &linalg::vec_of(m));
    }
    let lb_pinv = linalg::pinv(&lb_span, 1e-18);
    let middle = |p2: usize, p1: usize| -> Result<AlgebraElement> {
        let t = l_mats[p2].adjoint() * &l_mats[p1];
        let coeff = &lb_pinv * linalg::vec_of(&t);
        let back = &lb_span * &coeff;
        let res = (back - linalg::vec_of(&t)).norm();
        if res > 1e-7 * (1.0 + linalg::frob_norm(&t)) {
            return Err(Error::SolveResidual {
                context: "L*L is left multiplication by a middle element".into(),
                residual: res,
                tol: 1e-7,
            });
        }
        AlgebraElement::from_coords(b_alg, &coeff)
    };

    let mut gram = CMat::zeros(n2 * n1, n2 * n1);
    for p2 in 0..n2 {
        for p1 in 0..n2 {
            let b = middle(p2, p1)?;
            let act = corr1.left_action(&b);
            for q1 in 0..n1 {
                let e1 = corr1.embed.column(q1).into_owned();
                let ae1 = &act * e1;
                for q2 in 0..n1 {
                    let e2 = corr1.embed.column(q2).into_owned();
                    gram[(p1 * n1 + q1, p2 * n1 + q2)] = (e2.adjoint() * &ae1)[(0, 0)];
                }
            }
        }
    }
    let space = mmalg::gram_quotient(&gram, DEFAULT_TOL)?;
    let embed = space.registered.clone();
    let dim = space.dim;

    // 𝒴 on the generators of ℋ^{Ψ₁Ψ₂}: [a_i ⊗ c_jΩ] ↦ (a_iΩ_{Ψ₂}) ⊗ (Ω_{Ψ₁} c_j).
    let a_alg = &psi2.source;
    let c_alg = &psi1.target;
    let da = a_alg.dim();
    let dc = c_alg.dim();
    let pinv2 = linalg::pinv(&corr2.embed, 1e-18);
    let pinv1 = linalg::pinv(&corr1.embed, 1e-18);
    let mut y_cols = CMat::zeros(dim, da * dc);
    for (i, a) in AlgebraElement::basis(a_alg).iter().enumerate() {
        let xi = corr2.left_action(a) * &corr2.omega;
        let cxi = &pinv2 * xi;
        for (j, c) in AlgebraElement::basis(c_alg).iter().enumerate() {
            let eta = corr1.right_action(c) * &corr1.omega;
            let ceta = &pinv1 * eta;
            let k = linalg::kron(
                &CMat::from_column_slice(n2, 1, cxi.as_slice()),
                &CMat::from_column_slice(n1, 1, ceta.as_slice()),
            );
            y_cols.set_column(j + i * dc, &(&embed * CVec::from_iterator(n2 * n1, k.iter().cloned())));
        }
    }
    let y = &y_cols * &corr12.embed_pinv;

    let model = ConvolutionModel {
        dim,
        embed,
        y,
        dim2: corr2.dim,
        dim1: corr1.dim,
        left_pinv: pinv2,
        right_pinv: pinv1,
        left_embed: corr2.embed.clone(),
        right_embed: corr1.embed.clone(),
    };

    // 𝒴 must be an isometry.
    let yy = model.y.adjoint() * &model.y;
    let d = linalg::frob_norm(&(&yy - CMat::identity(corr12.dim, corr12.dim)));
    if d > 1e-8 {
        return Err(Error::SolveResidual { context: "𝒴 isometry".into(), residual: d, tol: 1e-8 });
    }
    Ok(model)
}

/// Random CP bimodule channel: from a random positive multiplier G*G
/// (+ ε·1 for full support), optionally normalized unital.
pub struct ChannelSampler<'a> {
    pub tower: &'a Tower,
}

impl<'a> ChannelSampler<'a> {
    /// Random CP bimodule channel assembled from exactly-CP pieces: Kraus
    /// conjugations by elements of 𝒩′∩ℳ (automatically 𝒩-bimodular) mixed
    /// with multiples of id and E_𝒩. Keeps complete positivity at machine
    /// precision, which downstream Gram quotients are sensitive to.
    pub fn random_cp<R: Rng>(&self, rng: &mut R, full_support: bool, unital: bool) -> Result<AlgebraMap> {
        let inc = &self.tower.inclusion;
        let d = inc.big.dim();
        let mut mat = CMat::zeros(d, d);
        let kraus_count = 1 + rng.gen_range(0..3);
        for _ in 0..kraus_count {
            let mut k = AlgebraElement::zero(&inc.big);
            for b in &self.tower.ops.rel_comm {
                k = k.add(&b.scale(linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            }
            let kl = tower::left_mult_matrix(&inc.big, &k.adjoint());
            let kr = tower::right_mult_matrix(&inc.big, &k);
            mat += kl * kr * cr(rng.gen_range(0.1..1.0) / kraus_count as f64);
        }
        if rng.gen_bool(0.5) {
            mat += CMat::identity(d, d) * cr(rng.gen_range(0.05..0.8));
        }
        let e_weight = if full_support { rng.gen_range(0.2..1.0) } else if rng.gen_bool(0.5) { rng.gen_range(0.05..0.8) } else { 0.0 };
        if e_weight > 0.0 {
            mat += inc.embed_matrix() * inc.cond_exp_matrix() * cr(e_weight);
        }
        let map = AlgebraMap::new(inc.big.clone(), inc.big.clone(), mat)?;
        if unital {
            map.normalized_unital(DEFAULT_TOL)
        } else {
            Ok(map)
        }
    }

    /// Random CP channel through a positive multiplier (exercises the
    /// from_multiplier route; carries ~1e-12 CP dust).
    pub fn random_cp_multiplier<R: Rng>(&self, rng: &mut R, full_support: bool) -> Result<AlgebraMap> {
        let n = self.tower.ops.end_mm.len();
        let dim = self.tower.rts.dim;
        let mut g = CMat::zeros(dim, dim);
        for b in &self.tower.ops.end_mm {
            g += b * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let mut p = g.adjoint() * &g;
        p = p.unscale((n as f64).max(1.0));
        if full_support {
            p += CMat::identity(dim, dim) * cr(0.05);
        }
        from_multiplier(self.tower, &p)
    }
}

/// Random CP map between arbitrary multi-matrix algebras via blockwise Kraus
/// families; generically faithful with full-rank Choi blocks.
pub fn random_cp_map<R: Rng>(
    rng: &mut R,
    source: &Algebra,
    target: &Algebra,
    kraus_per_block: usize,
    unital: bool,
) -> Result<AlgebraMap> {
    let da = source.dim();
    let db = target.dim();
    let mut mat = CMat::zeros(db, da);
    for (i, u) in AlgebraElement::basis(source).iter().enumerate() {
        let _ = (i, u);
    }
    // Build by columns: Φ(e) = Σ_{k,l,j} V a_k V† blockwise.
    let mut kraus: Vec<Vec<Vec<CMat>>> = Vec::new();
    for (_k, &nk) in source.dims().iter().enumerate() {
        let mut per_l = Vec::new();
        for (_l, &ml) in target.dims().iter().enumerate() {
            let vs: Vec<CMat> = (0..kraus_per_block)
                .map(|_| linalg::random_complex_matrix(rng, ml, nk).unscale((nk * ml) as f64))
                .collect();
            per_l.push(vs);
        }
        kraus.push(per_l);
    }
    for (i, u) in AlgebraElement::basis(source).iter().enumerate() {
        let mut img = AlgebraElement::zero(target);
        for (k, per_l) in kraus.iter().enumerate() {
            for (l, vs) in per_l.iter().enumerate() {
                for v in vs {
                    img.blocks[l] += v * &u.blocks[k] * v.adjoint();
                }
            }
        }
        mat.set_column(i, &img.coords());
    }
    let map = AlgebraMap::new(source.clone(), target.clone(), mat)?;
    if unital {
        map.normalized_unital(DEFAULT_TOL)
    } else {
        Ok(map)
    }
}
