//! The Jones tower over an inclusion 𝒩 ⊂ ℳ: the standard form L²(ℳ) with its
//! modular conjugation and Jones projection, the basic construction ℳ₁ with
//! its canonical trace, the relative tensor product model of L²(ℳ₁), the
//! canonical trace τ_{ℳ₂} on ℳ′∩ℳ₂, the operators Δ and Δ₀, downward basic
//! constructions, and the inverse canonical shift.

use num_complex::Complex64;
use rand::Rng;

use crate::inclusion::{self, build_inclusion, Inclusion, TraceSpec};
use crate::linalg::{self, cr, CMat, CVec, DEFAULT_TOL};
use crate::mmalg::{self, Algebra, AlgebraElement, GnsSpace};
use crate::{Error, Result};

pub use crate::mmalg::{left_mult_matrix, right_mult_matrix};

/// L²(ℳ, τ_ℳ) with the modular conjugation J and the Jones projection e_𝒩.
pub struct StandardForm {
    pub gns: GnsSpace,
    /// Antilinear: v ↦ j * conj(v); sends xΩ to x*Ω.
    pub j: CMat,
    /// Orthogonal projection with range ι(𝒩)Ω.
    pub e_n: CMat,
}

impl StandardForm {
    pub fn dim(&self) -> usize {
        self.gns.space.dim
    }

    pub fn vector_of(&self, x: &AlgebraElement) -> CVec {
        self.gns.vector_of(x)
    }

    pub fn left_action(&self, x: &AlgebraElement) -> CMat {
        self.gns.left_action(x)
    }

    pub fn right_action(&self, x: &AlgebraElement) -> CMat {
        self.gns.right_action(x)
    }

    pub fn apply_j(&self, v: &CVec) -> CVec {
        &self.j * v.map(|z| z.conj())
    }

    /// The linear operator J z J for an operator z on L²(ℳ).
    pub fn conj_by_j(&self, z: &CMat) -> CMat {
        &self.j * z.map(|w| w.conj()) * self.j.map(|w| w.conj())
    }

    /// Recover the element x from the vector xΩ (Ω is separating).
    pub fn element_of_vector(&self, inc: &Inclusion, v: &CVec) -> Result<AlgebraElement> {
        let coeff = linalg::pinv(&self.gns.space.registered, 1e-18) * v;
        let x = AlgebraElement::from_coords(&inc.big, &coeff)?;
        let back = self.vector_of(&x);
        let res = (back - v).norm();
        if res > 1e-8 * (1.0 + v.norm()) {
            return Err(Error::SolveResidual {
                context: "element_of_vector".into(),
                residual: res,
                tol: 1e-8,
            });
        }
        Ok(x)
    }
}

pub fn standard_form(inc: &Inclusion) -> Result<StandardForm> {
    let one = AlgebraElement::identity(&inc.big);
    let gns = mmalg::gns_space(&inc.big, &inc.trace_big, &one, DEFAULT_TOL)?;

    // J: xΩ ↦ x*Ω, antilinear, from images on the matrix-unit basis.
    let basis = AlgebraElement::basis(&inc.big);
    let n = basis.len();
    let span = gns.space.registered.clone();
    let mut images = CMat::zeros(gns.space.dim, n);
    for (i, u) in basis.iter().enumerate() {
        images.set_column(i, &gns.vector_of(&u.adjoint()));
    }
    let j = linalg::operator_from_images(&span.map(|z| z.conj()), &images, DEFAULT_TOL)?;

    // e_𝒩: projection onto ι(𝒩)Ω.
    let small_basis = AlgebraElement::basis(&inc.small);
    let mut cols = CMat::zeros(gns.space.dim, small_basis.len());
    for (i, y) in small_basis.iter().enumerate() {
        cols.set_column(i, &gns.vector_of(&inc.embed(y)));
    }
    let e_n = linalg::projection_onto_span(&cols, DEFAULT_TOL);

    let sf = StandardForm { gns, j, e_n };

    // J is an antilinear involution and J e_𝒩 J = e_𝒩.
    let jj = &sf.j * sf.j.map(|z| z.conj());
    let d = linalg::frob_norm(&(&jj - CMat::identity(sf.dim(), sf.dim())));
    if d > 1e-10 {
        return Err(Error::SolveResidual { context: "J² = 1".into(), residual: d, tol: 1e-10 });
    }
    let jej = sf.conj_by_j(&sf.e_n);
    let d = linalg::frob_norm(&(&jej - &sf.e_n));
    if d > 1e-9 {
        return Err(Error::SolveResidual { context: "J e_N J = e_N".into(), residual: d, tol: 1e-9 });
    }
    // e_𝒩 xΩ = E_𝒩(x)Ω on the basis.
    for u in &basis {
        let lhs = &sf.e_n * sf.vector_of(u);
        let rhs = sf.vector_of(&inc.embed(&inc.cond_exp(u)));
        if (lhs - rhs).norm() > 1e-9 {
            return Err(Error::SolveResidual {
                context: "e_N acts as E_N on vectors".into(),
                residual: 1.0,
                tol: 1e-9,
            });
        }
    }
    Ok(sf)
}

/// The basic construction ℳ₁ = (right 𝒩)′ on L²(ℳ) with its canonical trace
/// and the central element h with τ_ℳ(h x) = τ_{ℳ₁}(x) on ℳ.
pub struct BasicConstruction {
    /// Raw linear basis of ℳ₁ as operators on L²(ℳ).
    pub m1_basis: Vec<CMat>,
    /// Basis of ℳ′ ∩ ℳ₁ as operators on L²(ℳ).
    pub m_prime_m1: Vec<CMat>,
    /// η_jΩ coordinates feeding the canonical-trace formula.
    pub eta_vectors: Vec<CVec>,
    pub delta_sq: f64,
    /// h_{ℳ₁,ℳ} ∈ Z(ℳ).
    pub h: AlgebraElement,
    pub h_inv: AlgebraElement,
}

impl BasicConstruction {
    /// τ_{ℳ₁}(z) = δ⁻² Σ_j ⟨z η_jΩ, η_jΩ⟩.
    pub fn tau_m1(&self, z: &CMat) -> Complex64 {
        let mut t = Complex64::default();
        for v in &self.eta_vectors {
            t += (v.adjoint() * z * v)[(0, 0)];
        }
        t / cr(self.delta_sq)
    }

    /// τ_{𝒩′}(z) = τ_{ℳ₁}(J z J) for operators on L²(ℳ).
    pub fn tau_n_prime(&self, sf: &StandardForm, z: &CMat) -> Complex64 {
        self.tau_m1(&sf.conj_by_j(z))
    }
}

pub fn basic_construction(inc: &Inclusion, sf: &StandardForm) -> Result<BasicConstruction> {
    let dim = sf.dim();
    // ℳ₁ = commutant of the right 𝒩-action.
    let mut mats = Vec::new();
    for y in AlgebraElement::basis(&inc.small) {
        mats.push(sf.right_action(&inc.embed(&y)));
    }
    let m1_kernel = linalg::commutant_kernel(&mats, dim, DEFAULT_TOL);
    let m1_basis: Vec<CMat> = m1_kernel.iter().map(|v| linalg::unvec(v, dim, dim)).collect();

    // ℳ′ ∩ ℳ₁: additionally commute with the left ℳ-action.
    for u in AlgebraElement::basis(&inc.big) {
        mats.push(sf.left_action(&u));
    }
    let mp_kernel = linalg::commutant_kernel(&mats, dim, DEFAULT_TOL);
    let m_prime_m1: Vec<CMat> = mp_kernel.iter().map(|v| linalg::unvec(v, dim, dim)).collect();

    let eta_vectors: Vec<CVec> = inc
        .pp_basis()
        .elements
        .iter()
        .map(|e| sf.vector_of(e))
        .collect();

    let mut bc = BasicConstruction {
        m1_basis,
        m_prime_m1,
        eta_vectors,
        delta_sq: inc.delta_sq(),
        h: AlgebraElement::identity(&inc.big),
        h_inv: AlgebraElement::identity(&inc.big),
    };

    // h on the central basis {f_l}: h_l = τ_{ℳ₁}(f_l) / τ_ℳ(f_l).
    let mut h = AlgebraElement::zero(&inc.big);
    for (l, &d) in inc.big.dims().iter().enumerate() {
        let mut fl = AlgebraElement::zero(&inc.big);
        for i in 0..d {
            fl.blocks[l][(i, i)] = cr(1.0);
        }
        let num = bc.tau_m1(&sf.left_action(&fl)).re;
        let den = inc.trace_big_of(&fl).re;
        let hl = num / den;
        if !(hl > 0.0) {
            return Err(Error::NotPositive(hl));
        }
        for i in 0..d {
            h.blocks[l][(i, i)] = cr(hl);
        }
    }
    bc.h_inv = mmalg::power_element(&h, -1.0, DEFAULT_TOL)?;
    bc.h = h;

    // τ_{ℳ₁}(x e_𝒩 y) = δ⁻² τ_ℳ(x y) on random pairs.
    let mut rng = mmalg::rng_from_seed(0x7011E5);
    for _ in 0..6 {
        let x = mmalg::random_element(&mut rng, &inc.big);
        let y = mmalg::random_element(&mut rng, &inc.big);
        let z = sf.left_action(&x) * &sf.e_n * sf.left_action(&y);
        let lhs = bc.tau_m1(&z);
        let rhs = inc.trace_big_of(&x.mul(&y)) / cr(inc.delta_sq());
        if (lhs - rhs).norm() > 1e-9 * (1.0 + rhs.norm()) {
            return Err(Error::SolveResidual {
                context: "tau_M1(x e_N y) = delta^-2 tau(xy)".into(),
                residual: (lhs - rhs).norm(),
                tol: 1e-9,
            });
        }
    }
    // τ_ℳ(h x) = τ_{ℳ₁}(x) on random x ∈ ℳ.
    for _ in 0..4 {
        let x = mmalg::random_element(&mut rng, &inc.big);
        let lhs = inc.trace_big_of(&bc.h.mul(&x));
        let rhs = bc.tau_m1(&sf.left_action(&x));
        if (lhs - rhs).norm() > 1e-9 * (1.0 + rhs.norm()) {
            return Err(Error::SolveResidual {
                context: "tau(h x) = tau_M1(x)".into(),
                residual: (lhs - rhs).norm(),
                tol: 1e-9,
            });
        }
    }
    Ok(bc)
}

/// Trace-preserving conditional expectation from operators on L²(ℳ) onto ℳ
/// (acting by left multiplication), with respect to τ_{ℳ₁}.
pub fn expect_onto_m(inc: &Inclusion, sf: &StandardForm, bc: &BasicConstruction, z: &CMat) -> Result<AlgebraElement> {
    // Solve τ_{ℳ₁}(u† z) = τ_ℳ(h u† m) = Σ coords via the weighted pairing.
    let basis = AlgebraElement::basis(&inc.big);
    let n = basis.len();
    let mut gram = CMat::zeros(n, n);
    let mut rhs = CVec::zeros(n);
    for (j, u) in basis.iter().enumerate() {
        rhs[j] = bc.tau_m1(&(sf.left_action(&u.adjoint()) * z));
        for (i, b) in basis.iter().enumerate() {
            gram[(j, i)] = inc.trace_big_of(&bc.h.mul(&u.adjoint()).mul(b));
        }
    }
    let coeff = linalg::pinv(&gram, 1e-18) * rhs;
    AlgebraElement::from_coords(&inc.big, &coeff)
}

/// Concrete orthonormal model of L²(ℳ) ⊗_𝒩 L²(ℳ) ≅ L²(ℳ₁).
///
/// Generators are the pairs (x_i Ω, y_j Ω) over the matrix-unit basis of ℳ,
/// with pair index i * d + j. Operators are assembled on pair-coefficient
/// space and pushed through the quotient.
pub struct RelTensorSpace {
    pub dim: usize,
    /// dim × d² matrix; column (i*d+j) = coordinates of x_iΩ ⊗ y_jΩ.
    pub embed: CMat,
    /// pinv(embed), shared by all operator assemblies.
    pub embed_pinv: CMat,
    pub d: usize,
    /// Left/right multiplication matrices on ℳ coordinates for each basis unit.
    pub ml: Vec<CMat>,
    pub mr: Vec<CMat>,
    /// e_𝒩 as the ℳ₁-generator acting on the first leg.
    pub e_n_action: CMat,
    /// v_𝒩: L²(ℳ) → H, yΩ ↦ Ω ⊗ yΩ (columns over the unit basis of ℳ).
    pub v_n: CMat,
    /// u_𝒩: L²(ℳ) → H, ξ ↦ ξ ⊗ Ω.
    pub u_n: CMat,
    /// Ω ⊗ Ω.
    pub omega_pair: CVec,
    /// ident(ℳ Ω_{ℳ₁}): column u = image of uΩ_{ℳ₁} = δ⁻¹ Σ_j u η_jΩ ⊗ η_j*Ω.
    pub u_m: CMat,
    /// e_ℳ: projection onto the image of u_m.
    pub e_m: CMat,
    /// η_jΩ ⊗ Ω for the τ_{ℳ₂} formula.
    pub tau_vectors: Vec<CVec>,
    pub delta_sq: f64,
}

impl RelTensorSpace {
    pub fn pair_vector(&self, x: &AlgebraElement, y: &AlgebraElement) -> CVec {
        let k = linalg::kron(
            &CMat::from_column_slice(self.d, 1, x.coords().as_slice()),
            &CMat::from_column_slice(self.d, 1, y.coords().as_slice()),
        );
        &self.embed * CVec::from_iterator(self.d * self.d, k.iter().cloned())
    }

    /// Operator on H from an operator on pair-coefficient space.
    pub fn push_operator(&self, coef_op: &CMat, context: &str) -> Result<CMat> {
        let images = &self.embed * coef_op;
        let op = &images * &self.embed_pinv;
        let res = linalg::frob_norm(&(&op * &self.embed - &images));
        let scale = linalg::frob_norm(&images).max(1.0);
        if res > 1e-7 * scale {
            return Err(Error::SolveResidual {
                context: format!("push_operator({context})"),
                residual: res / scale,
                tol: 1e-7,
            });
        }
        Ok(op)
    }

    /// Left action of an arbitrary element of ℳ.
    pub fn left_action(&self, x: &AlgebraElement) -> CMat {
        let mut op = CMat::zeros(self.dim, self.dim);
        for (i, z) in x.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                op += &self.left_unit(i) * *z;
            }
        }
        op
    }

    pub fn right_action(&self, x: &AlgebraElement) -> CMat {
        let mut op = CMat::zeros(self.dim, self.dim);
        for (i, z) in x.coords().iter().enumerate() {
            if z.norm_sqr() > 0.0 {
                op += &self.right_unit(i) * *z;
            }
        }
        op
    }

    fn left_unit(&self, i: usize) -> CMat {
        let k = linalg::kron(&self.ml[i], &CMat::identity(self.d, self.d));
        &self.embed * k * &self.embed_pinv
    }

    fn right_unit(&self, i: usize) -> CMat {
        let k = linalg::kron(&CMat::identity(self.d, self.d), &self.mr[i]);
        &self.embed * k * &self.embed_pinv
    }

    /// τ_{ℳ₂}(z) = δ⁻² Σ_j ⟨z (η_jΩ ⊗ Ω), η_jΩ ⊗ Ω⟩.
    pub fn tau_m2(&self, z: &CMat) -> Complex64 {
        let mut t = Complex64::default();
        for v in &self.tau_vectors {
            t += (v.adjoint() * z * v)[(0, 0)];
        }
        t / cr(self.delta_sq)
    }

    /// Vector state of Ω ⊗ Ω.
    pub fn omega_n(&self, z: &CMat) -> Complex64 {
        (self.omega_pair.adjoint() * z * &self.omega_pair)[(0, 0)]
    }

    /// Lift an operator z on L²(ℳ) commuting with the right 𝒩-action to
    /// z ⊗ 1 on H. The push residual is the well-definedness check.
    pub fn lift_first_leg(&self, sf: &StandardForm, z: &CMat, context: &str) -> Result<CMat> {
        // Element-coordinate version of z: R⁻¹ z R with R = registered coords.
        let r = &sf.gns.space.registered;
        let z_el = linalg::pinv(r, 1e-18) * z * r;
        let k = linalg::kron(&z_el, &CMat::identity(self.d, self.d));
        self.push_operator(&k, context)
    }
}

pub fn rel_tensor(inc: &Inclusion, sf: &StandardForm, bc: &BasicConstruction) -> Result<RelTensorSpace> {
    let d = inc.big.dim();
    let basis = AlgebraElement::basis(&inc.big);
    let delta = inc.delta();

    // Gram of the pairs: ⟨(x1,y1), (x2,y2)⟩ = τ(y2* E(x1... careful with order:
    // ⟨x1Ω⊗y1Ω, x2Ω⊗y2Ω⟩ = τ_ℳ(y2* ι(E_𝒩(x2* x1)) y1).
    let mut emb_e = Vec::with_capacity(d * d);
    for a in &basis {
        for x in &basis {
            // index (a, x) column-major style: store E(x_a* x_i)
            emb_e.push(inc.embed(&inc.cond_exp(&a.adjoint().mul(x))));
        }
    }
    let unit_info = unit_index_table(&inc.big);
    let mut gram = CMat::zeros(d * d, d * d);
    for a in 0..d {
        for i in 0..d {
            let m = &emb_e[a * d + i]; // E(x_a* x_i) embedded in ℳ
            for b in 0..d {
                let (lb, ub, vb) = unit_info[b];
                for jj in 0..d {
                    let (lj, uj, vj) = unit_info[jj];
                    // τ(y_b* m y_j) with y_b = e^{(lb)}_{ub,vb}, y_j = e^{(lj)}_{uj,vj}
                    let val = if lb == lj && vb == vj {
                        m.blocks[lb][(ub, uj)] * cr(inc.trace_big.weights[lb])
                    } else {
                        Complex64::default()
                    };
                    gram[(i * d + jj, a * d + b)] = val;
                }
            }
        }
    }
    let space = mmalg::gram_quotient(&gram, DEFAULT_TOL)?;
    if space.dim != bc.m1_basis.len() {
        return Err(Error::Shape(format!(
            "dim L²(ℳ)⊗_𝒩L²(ℳ) = {} but dim ℳ₁ = {}",
            space.dim,
            bc.m1_basis.len()
        )));
    }

    let embed = space.registered.clone();
    let embed_pinv = linalg::pinv(&embed, 1e-18);

    let ml: Vec<CMat> = basis.iter().map(|u| left_mult_matrix(&inc.big, u)).collect();
    let mr: Vec<CMat> = basis.iter().map(|u| right_mult_matrix(&inc.big, u)).collect();

    let one = AlgebraElement::identity(&inc.big);
    let mut rts = RelTensorSpace {
        dim: space.dim,
        embed,
        embed_pinv,
        d,
        ml,
        mr,
        e_n_action: CMat::zeros(space.dim, space.dim),
        v_n: CMat::zeros(space.dim, d),
        u_n: CMat::zeros(space.dim, d),
        omega_pair: CVec::zeros(space.dim),
        u_m: CMat::zeros(space.dim, d),
        e_m: CMat::zeros(space.dim, space.dim),
        tau_vectors: Vec::new(),
        delta_sq: inc.delta_sq(),
    };

    // e_𝒩 acts on the first leg through ι ∘ E_𝒩.
    let ce = inc.embed_matrix() * inc.cond_exp_matrix();
    rts.e_n_action = rts.push_operator(
        &linalg::kron(&ce, &CMat::identity(d, d)),
        "e_N on first leg",
    )?;

    for (i, u) in basis.iter().enumerate() {
        rts.v_n.set_column(i, &rts.pair_vector(&one, u));
        rts.u_n.set_column(i, &rts.pair_vector(u, &one));
    }
    rts.omega_pair = rts.pair_vector(&one, &one);

    // ident(uΩ_{ℳ₁}) = δ⁻¹ Σ_j (u η_j)Ω ⊗ η_j*Ω.
    for (i, u) in basis.iter().enumerate() {
        let mut col = CVec::zeros(rts.dim);
        for eta in &inc.pp_basis().elements {
            col += rts.pair_vector(&u.mul(eta), &eta.adjoint());
        }
        rts.u_m.set_column(i, &(col / cr(delta)));
    }
    rts.e_m = linalg::projection_onto_span(&rts.u_m, DEFAULT_TOL);

    rts.tau_vectors = inc
        .pp_basis()
        .elements
        .iter()
        .map(|eta| rts.pair_vector(eta, &one))
        .collect();

    verify_rel_tensor(inc, sf, bc, &rts)?;
    Ok(rts)
}

fn unit_index_table(alg: &Algebra) -> Vec<(usize, usize, usize)> {
    // (block, row, col) for each basis unit in coordinate order (col-major).
    let mut out = Vec::with_capacity(alg.dim());
    for (l, &dl) in alg.dims().iter().enumerate() {
        for col in 0..dl {
            for row in 0..dl {
                out.push((l, row, col));
            }
        }
    }
    out
}

fn verify_rel_tensor(inc: &Inclusion, sf: &StandardForm, bc: &BasicConstruction, rts: &RelTensorSpace) -> Result<()> {
    let dim = rts.dim;
    let check = |name: &str, res: f64, tol: f64| -> Result<()> {
        if res > tol {
            return Err(Error::SolveResidual { context: name.into(), residual: res, tol });
        }
        Ok(())
    };
    // isometries
    let id_l2 = CMat::identity(rts.d, rts.d);
    check("v_N*v_N = 1", linalg::frob_norm(&(rts.v_n.adjoint() * &rts.v_n - gram_l2(inc))), 1e-9)?;
    let _ = id_l2;
    check("u_N*u_N = 1", linalg::frob_norm(&(rts.u_n.adjoint() * &rts.u_n - gram_l2(inc))), 1e-9)?;

    // left and right actions commute
    let mut rng = mmalg::rng_from_seed(0x0C0FFEE);
    for _ in 0..4 {
        let x = mmalg::random_element(&mut rng, &inc.big);
        let y = mmalg::random_element(&mut rng, &inc.big);
        let l = rts.left_action(&x);
        let r = rts.right_action(&y);
        let comm = &l * &r - &r * &l;
        check("left/right actions commute", linalg::frob_norm(&comm) / (1.0 + linalg::frob_norm(&l)), 1e-9)?;
    }

    // τ_{ℳ₂} restricted to ℳ₁ ⊗ 1 equals τ_{ℳ₁}
    for z in bc.m1_basis.iter().take(6) {
        let zl = rts.lift_first_leg(sf, z, "tau_M2 check")?;
        let lhs = rts.tau_m2(&zl);
        let rhs = bc.tau_m1(z);
        check("tau_M2(z⊗1) = tau_M1(z)", (lhs - rhs).norm(), 1e-9 * (1.0 + rhs.norm()))?;
    }

    // τ_{ℳ₂}(e_ℳ) agrees with E^{ℳ₂}_{ℳ₁}(e_ℳ) = δ⁻² h⁻¹: check against τ_{ℳ₁}(δ⁻²h⁻¹).
    let lhs = rts.tau_m2(&rts.e_m);
    let rhs = bc.tau_m1(&sf.left_action(&bc.h_inv)) / cr(inc.delta_sq());
    check("tau_M2(e_M) = tau_M1(delta^-2 h^-1)", (lhs - rhs).norm(), 1e-9)?;

    // v_N*(xΩ⊗yΩ) = E_𝒩(x) yΩ on a few random pairs.
    for _ in 0..3 {
        let x = mmalg::random_element(&mut rng, &inc.big);
        let y = mmalg::random_element(&mut rng, &inc.big);
        let lhs = rts.v_n.adjoint() * rts.pair_vector(&x, &y);
        // v_N's columns are not orthonormal coordinates of L²(ℳ); compare through the pairing:
        // ⟨v_N* ξ, uΩ⟩ = ⟨ξ, v_N uΩ⟩, so lhs already lives in unit-coordinates paired by Gram.
        let e = inc.embed(&inc.cond_exp(&x)).mul(&y);
        let mut rhs = CVec::zeros(rts.d);
        for (i, u) in AlgebraElement::basis(&inc.big).iter().enumerate() {
            rhs[i] = inc.trace_big_of(&u.adjoint().mul(&e));
        }
        check("v_N* (xΩ⊗yΩ) = E(x) yΩ", ((lhs - rhs) as CVec).norm(), 1e-8)?;
    }
    let _ = dim;
    Ok(())
}

/// Gram matrix of the unit vectors u_iΩ in L²(ℳ) (diagonal, weights t_l).
fn gram_l2(inc: &Inclusion) -> CMat {
    let d = inc.big.dim();
    let mut g = CMat::zeros(d, d);
    let mut off = 0;
    for (l, &n) in inc.big.dims().iter().enumerate() {
        for _ in 0..n * n {
            g[(off, off)] = cr(inc.trace_big.weights[l]);
            off += 1;
        }
    }
    g
}

/// Linear basis of the space of 𝒩-bimodule maps ℳ → ℳ, as matrices on the
/// flat coordinates of ℳ (the joint commutant of left/right multiplication
/// by ι(𝒩) on coordinate space).
pub fn bimodule_map_basis(inc: &Inclusion) -> Vec<CMat> {
    let d = inc.big.dim();
    let mut mats = Vec::new();
    for y in AlgebraElement::basis(&inc.small) {
        let e = inc.embed(&y);
        mats.push(left_mult_matrix(&inc.big, &e));
        mats.push(right_mult_matrix(&inc.big, &e));
    }
    linalg::commutant_kernel(&mats, d, DEFAULT_TOL)
        .iter()
        .map(|v| linalg::unvec(v, d, d))
        .collect()
}

/// Fourier multiplier of a bimodule map given by its coordinate matrix:
/// Φ̂(xΩ ⊗ yΩ) = δ⁻¹ Σ_j (x η_j)Ω ⊗ (Φ(η_j*) y)Ω.
pub fn multiplier_of_map(inc: &Inclusion, rts: &RelTensorSpace, phi_mat: &CMat) -> Result<CMat> {
    let d = inc.big.dim();
    let mut coef = CMat::zeros(d * d, d * d);
    for eta in &inc.pp_basis().elements {
        let right = right_mult_matrix(&inc.big, eta);
        let img = phi_mat * eta.adjoint().coords();
        let phi_eta = AlgebraElement::from_coords(&inc.big, &img)?;
        let left = left_mult_matrix(&inc.big, &phi_eta);
        coef += linalg::kron(&right, &left);
    }
    rts.push_operator(&coef.unscale(inc.delta()), "fourier multiplier")
}

/// Apply a bimodule-map coordinate matrix to an element.
pub fn apply_map(inc: &Inclusion, phi_mat: &CMat, x: &AlgebraElement) -> AlgebraElement {
    let v = phi_mat * x.coords();
    AlgebraElement::from_coords(&inc.big, &v).expect("map output shape")
}

/// Δ, Δ₀ and the ℳ′∩ℳ₂ machinery on top of a relative tensor space.
pub struct TowerOperators {
    /// Basis of CB_𝒩(ℳ) (coordinate matrices on ℳ).
    pub bimodule_maps: Vec<CMat>,
    /// HS-orthonormal basis of ℳ′∩ℳ₂ = End(ℳ-ℳ) on H (images of the above).
    pub end_mm: Vec<CMat>,
    /// Δ on L²(ℳ) (positive, in ℳ′∩ℳ₁).
    pub delta_l2: CMat,
    /// Δ ⊗ 1 on H.
    pub delta_h: CMat,
    pub delta_h_sqrt: CMat,
    pub delta_h_inv_sqrt: CMat,
    /// Δ₀ ∈ 𝒩′∩ℳ (stored from the blockwise closed formula).
    pub delta0: AlgebraElement,
    pub delta0_inv: AlgebraElement,
    /// Orthonormal basis of 𝒩′∩ℳ.
    pub rel_comm: Vec<AlgebraElement>,
    /// Minimal central projections (k, l, e_k f_l, τ_ℳ(e_k f_l)).
    pub central_projections: Vec<(usize, usize, AlgebraElement, f64)>,
}

impl TowerOperators {
    /// Expand an operator on H in the orthonormal End(ℳ-ℳ) basis; the
    /// residual measures distance to ℳ′∩ℳ₂.
    pub fn expand_in_end(&self, z: &CMat) -> (CVec, f64) {
        let n = self.end_mm.len();
        let mut coeff = CVec::zeros(n);
        let mut recon = CMat::zeros(z.nrows(), z.ncols());
        for (i, b) in self.end_mm.iter().enumerate() {
            let c = linalg::hs_inner(z, b);
            coeff[i] = c;
            recon += b * c;
        }
        (coeff, linalg::frob_norm(&(recon - z)))
    }
}

pub fn tower_operators(inc: &Inclusion, sf: &StandardForm, bc: &BasicConstruction, rts: &RelTensorSpace) -> Result<TowerOperators> {
    // ℳ′∩ℳ₂ through the Fourier transform of the bimodule-map space.
    let bimodule_maps = bimodule_map_basis(inc);
    let mut multipliers = Vec::with_capacity(bimodule_maps.len());
    for m in &bimodule_maps {
        multipliers.push(multiplier_of_map(inc, rts, m)?);
    }
    let end_mm = linalg::orthonormalize_mats(&multipliers, None, 1e-14);
    if end_mm.len() != bimodule_maps.len() {
        return Err(Error::Shape(format!(
            "multiplier map not injective: {} maps vs {} independent multipliers",
            bimodule_maps.len(),
            end_mm.len()
        )));
    }
    // Multipliers must commute with both actions.
    let mut rng = mmalg::rng_from_seed(0xE17D);
    for z in end_mm.iter().take(4) {
        let x = mmalg::random_element(&mut rng, &inc.big);
        for a in [rts.left_action(&x), rts.right_action(&x)] {
            let comm = linalg::frob_norm(&(z * &a - &a * z));
            if comm > 1e-8 * (1.0 + linalg::frob_norm(&a)) {
                return Err(Error::SolveResidual {
                    context: "multiplier outside ℳ′∩ℳ₂".into(),
                    residual: comm,
                    tol: 1e-8,
                });
            }
        }
    }

    // Δ from τ_{ℳ₁}(Δ z) = τ_ℳ(J z* J) over a basis z of ℳ′∩ℳ₁.
    let zb = &bc.m_prime_m1;
    let n = zb.len();
    let mut gram = CMat::zeros(n, n);
    let mut rhs = CVec::zeros(n);
    for j in 0..n {
        let zj_star_omega = zb[j].adjoint() * vector_omega(inc, sf);
        let m = sf.element_of_vector(inc, &sf.apply_j(&zj_star_omega))?;
        rhs[j] = inc.trace_big_of(&m);
        for i in 0..n {
            gram[(j, i)] = bc.tau_m1(&(&zb[i] * &zb[j]));
        }
    }
    let coeff = linalg::pinv(&gram, 1e-18) * &rhs;
    let mut delta_l2 = CMat::zeros(sf.dim(), sf.dim());
    for (i, z) in zb.iter().enumerate() {
        delta_l2 += z * coeff[i];
    }
    delta_l2 = (&delta_l2 + delta_l2.adjoint()).scale(0.5);
    // residual of the defining system
    for j in 0..n {
        let lhs = bc.tau_m1(&(&delta_l2 * &zb[j]));
        if (lhs - rhs[j]).norm() > 1e-8 * (1.0 + rhs[j].norm()) {
            return Err(Error::SolveResidual {
                context: "Delta defining solve".into(),
                residual: (lhs - rhs[j]).norm(),
                tol: 1e-8,
            });
        }
    }
    let min_eig = linalg::min_eigenvalue(&delta_l2);
    if min_eig <= 0.0 {
        return Err(Error::NotPositive(min_eig));
    }

    let delta_h = rts.lift_first_leg(sf, &delta_l2, "Delta ⊗ 1")?;
    let delta_h_sqrt = linalg::sqrt_psd(&delta_h, DEFAULT_TOL)?;
    let delta_h_inv_sqrt = linalg::power_psd(&delta_h, -0.5, DEFAULT_TOL)?;

    // Δ₀ three ways: closed formula, defining identity, J Δ⁻¹ J.
    let rc = inclusion::relative_commutant(inc)?;
    let mut delta0 = AlgebraElement::zero(&inc.big);
    for &(k, l, ref p, _) in &rc.central_projections {
        let nk = inc.small.dims()[k] as f64;
        let ml = inc.big.dims()[l] as f64;
        let sk = inc.trace_small.weights[k];
        let tl = inc.trace_big.weights[l];
        let w = (sk * ml) / (inc.delta_sq() * nk * tl);
        delta0 = delta0.add(&p.scale(cr(w)));
    }
    // defining identity: τ_ℳ(Δ₀ x) = τ_{𝒩′}(x) on 𝒩′∩ℳ
    let m = rc.basis.len();
    let mut g2 = CMat::zeros(m, m);
    let mut r2 = CVec::zeros(m);
    for j in 0..m {
        r2[j] = bc.tau_n_prime(sf, &sf.left_action(&rc.basis[j]));
        for i in 0..m {
            g2[(j, i)] = inc.trace_big_of(&rc.basis[i].mul(&rc.basis[j]));
        }
    }
    let c2 = linalg::pinv(&g2, 1e-18) * r2;
    let mut delta0_solve = AlgebraElement::zero(&inc.big);
    for (i, b) in rc.basis.iter().enumerate() {
        delta0_solve = delta0_solve.add(&b.scale(c2[i]));
    }
    let d_routes = delta0.sub(&delta0_solve).norm_inf();
    if d_routes > 1e-9 * (1.0 + delta0.norm_inf()) {
        return Err(Error::SolveResidual {
            context: "Delta0 closed formula vs defining solve".into(),
            residual: d_routes,
            tol: 1e-9,
        });
    }
    // Δ₀ = J Δ⁻¹ J
    let delta_inv = linalg::power_psd(&delta_l2, -1.0, DEFAULT_TOL)?;
    let jdj = sf.conj_by_j(&delta_inv);
    let d_j = linalg::frob_norm(&(&jdj - sf.left_action(&delta0)));
    if d_j > 1e-8 * (1.0 + linalg::frob_norm(&jdj)) {
        return Err(Error::SolveResidual {
            context: "Delta0 = J Delta^-1 J".into(),
            residual: d_j,
            tol: 1e-8,
        });
    }
    let delta0_inv = mmalg::power_element(&delta0, -1.0, DEFAULT_TOL)?;

    Ok(TowerOperators {
        bimodule_maps,
        end_mm,
        delta_l2,
        delta_h,
        delta_h_sqrt,
        delta_h_inv_sqrt,
        delta0,
        delta0_inv,
        rel_comm: rc.basis,
        central_projections: rc.central_projections,
    })
}

fn vector_omega(inc: &Inclusion, sf: &StandardForm) -> CVec {
    sf.vector_of(&AlgebraElement::identity(&inc.big))
}

/// The full tower over one inclusion.
pub struct Tower {
    pub inclusion: Inclusion,
    pub sf: StandardForm,
    pub bc: BasicConstruction,
    pub rts: RelTensorSpace,
    pub ops: TowerOperators,
}

impl Tower {
    pub fn build(inclusion: Inclusion) -> Result<Self> {
        let mass = inclusion.trace_big.total_mass(&inclusion.big);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInclusion(format!(
                "tower requires a normalized trace (τ(1) = {mass}); rescale the weights"
            )));
        }
        let sf = standard_form(&inclusion)?;
        let bc = basic_construction(&inclusion, &sf)?;
        let rts = rel_tensor(&inclusion, &sf, &bc)?;
        let ops = tower_operators(&inclusion, &sf, &bc, &rts)?;
        Ok(Tower { inclusion, sf, bc, rts, ops })
    }

    pub fn delta(&self) -> f64 {
        self.inclusion.delta()
    }

    pub fn delta_sq(&self) -> f64 {
        self.inclusion.delta_sq()
    }

    /// Sandwich Δ^{1/2} z Δ^{1/2} on H.
    pub fn delta_sandwich(&self, z: &CMat) -> CMat {
        &self.ops.delta_h_sqrt * z * &self.ops.delta_h_sqrt
    }

    /// Trace-preserving conditional expectation of ℳ onto 𝒩′∩ℳ.
    pub fn expect_onto_rel_comm(&self, x: &AlgebraElement) -> AlgebraElement {
        let mut out = AlgebraElement::zero(&self.inclusion.big);
        for b in &self.ops.rel_comm {
            let c = mmalg::trace_inner(&self.inclusion.trace_big, x, b);
            out = out.add(&b.scale(c));
        }
        out
    }
}

/// true iff a_kl ≤ n_k for all (k, l); the witness lists violations.
pub fn downward_criterion(inc: &Inclusion) -> (bool, Vec<(usize, usize)>) {
    let mut witness = Vec::new();
    for (k, row) in inc.adjacency.iter().enumerate() {
        for (l, &a) in row.iter().enumerate() {
            if a > inc.small.dims()[k] {
                witness.push((k, l));
            }
        }
    }
    (witness.is_empty(), witness)
}

/// A tower over 𝒩 ⊂ ℳ where ℳ was realized as the basic construction of a
/// base inclusion 𝒩₋₁ ⊂ 𝒩, carrying the Jones projection e₋₁ ∈ ℳ and the
/// representation of ℳ on L²(𝒩).
pub struct DownwardTower {
    pub tower: Tower,
    pub base: Inclusion,
    pub e_minus: AlgebraElement,
    /// Column u = vec of the operator on L²(𝒩) representing ℳ-basis unit u.
    rep_cols: CMat,
    rep_pinv: CMat,
    /// Antilinear J_𝒩 on L²(𝒩).
    pub j_n: CMat,
    l2n_dim: usize,
    /// ξ_jΩ_𝒩 vectors of the base Pimsner-Popa basis (canonical-trace formula).
    base_eta_vectors: Vec<CVec>,
}

impl DownwardTower {
    /// Operator on L²(𝒩) representing x ∈ ℳ.
    pub fn rep_op(&self, x: &AlgebraElement) -> CMat {
        let v = &self.rep_cols * x.coords();
        linalg::unvec(&v, self.l2n_dim, self.l2n_dim)
    }

    /// Pull an operator on L²(𝒩) back to ℳ; errors when it is not in ℳ.
    pub fn op_to_element(&self, m: &CMat) -> Result<AlgebraElement> {
        let v = linalg::vec_of(m);
        let coeff = &self.rep_pinv * &v;
        let back = &self.rep_cols * &coeff;
        let res = (back - v).norm();
        if res > 1e-8 * (1.0 + linalg::frob_norm(m)) {
            return Err(Error::SolveResidual {
                context: "operator not in the represented ℳ".into(),
                residual: res,
                tol: 1e-8,
            });
        }
        AlgebraElement::from_coords(&self.tower.inclusion.big, &coeff)
    }

    /// J_𝒩 x J_𝒩 as an element of ℳ.
    pub fn conj_by_jn(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        let op = self.rep_op(x);
        let conj = &self.j_n * op.map(|z| z.conj()) * self.j_n.map(|z| z.conj());
        self.op_to_element(&conj)
    }

    /// Canonical trace of the basic construction evaluated on an operator on
    /// L²(𝒩): δ⁻² Σ_j ⟨z ξ_jΩ, ξ_jΩ⟩.
    pub fn tau_canonical(&self, z: &CMat) -> Complex64 {
        let mut t = Complex64::default();
        for v in &self.base_eta_vectors {
            t += (v.adjoint() * z * v)[(0, 0)];
        }
        t / cr(self.base.delta_sq())
    }

    /// Δ₀^{-1/2} e₋₁ Δ₀^{-1/2} with the floor's Δ₀.
    pub fn jones_seed(&self) -> Result<AlgebraElement> {
        let s = mmalg::power_element(&self.tower.ops.delta0, -0.5, DEFAULT_TOL)?;
        Ok(s.mul(&self.e_minus).mul(&s))
    }

    /// The exact normalizer c = δ² E^ℳ_{𝒩′∩ℳ}(e₋₁); equals the floor's Δ₀
    /// when the base inclusion is extremal.
    pub fn correction(&self) -> AlgebraElement {
        self.tower
            .expect_onto_rel_comm(&self.e_minus)
            .scale(cr(self.tower.delta_sq()))
    }

    /// c^{-1/2} e₋₁ c^{-1/2} with the exact normalizer: δ² E_{𝒩′∩ℳ} of this
    /// element is exactly 1, so averaged conjugates form exact partitions.
    pub fn normalized_jones_seed(&self) -> Result<AlgebraElement> {
        let s = mmalg::power_element(&self.correction(), -0.5, DEFAULT_TOL)?;
        Ok(s.mul(&self.e_minus).mul(&s))
    }
}

/// Realize ℳ as the basic construction of `base` = (𝒩₋₁ ⊂ 𝒩): returns the
/// tower over 𝒩 ⊂ ℳ (with the canonical trace) together with e₋₁.
pub fn extend_upward(base: &Inclusion) -> Result<DownwardTower> {
    let sf_n = standard_form(base)?;
    let bc_n = basic_construction(base, &sf_n)?;
    let l2n_dim = sf_n.dim();

    // Minimal central projections of ℳ = J 𝒩₋₁′ J: right multiplication by the
    // embedded central projections of 𝒩₋₁, in base-block order.
    let mut blocks = Vec::new();
    for (j, &pj_dim) in base.small.dims().iter().enumerate() {
        let mut zj = AlgebraElement::zero(&base.small);
        for i in 0..pj_dim {
            zj.blocks[j][(i, i)] = cr(1.0);
        }
        let pj = sf_n.right_action(&base.embed(&zj));
        blocks.push(coordinatize_block(&bc_n.m1_basis, &pj, j)?);
    }

    // Bratteli data of 𝒩 ⊂ ℳ: rows = 𝒩-blocks, columns = base 𝒩₋₁-blocks.
    let n_dims = base.big.dims().to_vec();
    let adjacency: Vec<Vec<usize>> = (0..n_dims.len())
        .map(|k| (0..base.small.dims().len()).map(|j| base.adjacency[j][k]).collect())
        .collect();
    for (j, blk) in blocks.iter().enumerate() {
        let predicted: usize = (0..n_dims.len()).map(|k| n_dims[k] * adjacency[k][j]).sum();
        if blk.units.len() != predicted * predicted {
            return Err(Error::Shape(format!(
                "recovered ℳ-block {} has size {} but Bratteli predicts {}",
                j,
                (blk.units.len() as f64).sqrt(),
                predicted
            )));
        }
    }

    // Canonical trace weights on the new floor.
    let t_new: Vec<f64> = blocks.iter().map(|b| bc_n.tau_m1(&b.units[0]).re).collect();
    if t_new.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::NotPositive(*t_new.iter().min_by(|a, b| a.total_cmp(b)).unwrap()));
    }
    let inc_new = build_inclusion(
        &n_dims,
        &adjacency,
        TraceSpec::Explicit { weights: t_new, normalize: false },
    )?;

    // Downward basic construction requires the canonical trace to restrict to
    // the base trace on 𝒩; for connected data this singles out the Markov trace.
    let trace_defect = inc_new
        .trace_small
        .weights
        .iter()
        .zip(&base.trace_big.weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if trace_defect > 1e-9 {
        return Err(Error::InvalidInclusion(format!(
            "base trace is not compatible with a downward basic construction \
             (induced 𝒩-trace differs by {trace_defect:.3e}); use the Markov trace"
        )));
    }

    // Per-block unitary aligning the recovered embedding with the canonical layout.
    let mut rep_cols = CMat::zeros(l2n_dim * l2n_dim, inc_new.big.dim());
    let n_basis = AlgebraElement::basis(&base.big);
    for (j, blk) in blocks.iter().enumerate() {
        let dj = blk.dim;
        // recovered embedding of 𝒩 in block j
        let iota: Vec<CMat> = n_basis
            .iter()
            .map(|y| blk.coeffs(&sf_n.left_action(y)))
            .collect();
        let lambda: Vec<CMat> = n_basis
            .iter()
            .map(|y| inc_new.embed(y).blocks[j].clone())
            .collect();
        let u = intertwining_unitary(&iota, &lambda, dj)?;
        // rep of canonical unit ê^{(j)}_{pq} = Σ_{ik} (U† E_pq U)_{ik} e_{ik}
        for p in 0..dj {
            for q in 0..dj {
                let mut epq = CMat::zeros(dj, dj);
                epq[(p, q)] = cr(1.0);
                let m = u.adjoint() * epq * &u;
                let mut op = CMat::zeros(l2n_dim, l2n_dim);
                for i in 0..dj {
                    for k in 0..dj {
                        op += &blk.units[i * dj + k] * m[(i, k)];
                    }
                }
                let unit_index = inc_new.big.block_offset(j) + q * inc_new.big.dims()[j] + p;
                rep_cols.set_column(unit_index, &linalg::vec_of(&op));
            }
        }
    }
    // Canonicalize the residual copy-phase gauge so that e₋₁'s matrix gets
    // real-positive representative entries (the layout's natural form).
    let rep_pinv0 = linalg::pinv(&rep_cols, 1e-18);
    let e_pre_coeff = &rep_pinv0 * linalg::vec_of(&sf_n.e_n);
    let e_pre = AlgebraElement::from_coords(&inc_new.big, &e_pre_coeff)?;
    apply_phase_gauge(&inc_new, &e_pre, &mut rep_cols);
    let rep_pinv = linalg::pinv(&rep_cols, 1e-18);

    // Verify the representation.
    let rep_of = |x: &AlgebraElement| -> CMat {
        linalg::unvec(&(&rep_cols * x.coords()), l2n_dim, l2n_dim)
    };
    let mut rng = mmalg::rng_from_seed(0xD0DE);
    for _ in 0..4 {
        let a = mmalg::random_element(&mut rng, &inc_new.big);
        let b = mmalg::random_element(&mut rng, &inc_new.big);
        let d = linalg::frob_norm(&(rep_of(&a.mul(&b)) - rep_of(&a) * rep_of(&b)));
        if d > 1e-8 * (1.0 + a.norm_inf() * b.norm_inf() * l2n_dim as f64) {
            return Err(Error::SolveResidual { context: "rep multiplicative".into(), residual: d, tol: 1e-8 });
        }
        let d = linalg::frob_norm(&(rep_of(&a.adjoint()) - rep_of(&a).adjoint()));
        if d > 1e-8 * (1.0 + a.norm_inf()) {
            return Err(Error::SolveResidual { context: "rep *-preserving".into(), residual: d, tol: 1e-8 });
        }
        // canonical trace transport
        let lhs = inc_new.trace_big_of(&a);
        let rhs = bc_n.tau_m1(&rep_of(&a));
        if (lhs - rhs).norm() > 1e-8 * (1.0 + lhs.norm()) {
            return Err(Error::SolveResidual { context: "rep trace transport".into(), residual: (lhs - rhs).norm(), tol: 1e-8 });
        }
    }
    for y in &n_basis {
        let d = linalg::frob_norm(&(rep_of(&inc_new.embed(y)) - sf_n.left_action(y)));
        if d > 1e-9 {
            return Err(Error::SolveResidual { context: "rep ∘ embed = left mult".into(), residual: d, tol: 1e-9 });
        }
    }

    // e₋₁ = preimage of the Jones projection of the base.
    let e_minus_coeff = &rep_pinv * linalg::vec_of(&sf_n.e_n);
    let e_minus = AlgebraElement::from_coords(&inc_new.big, &e_minus_coeff)?;
    let back = linalg::frob_norm(&(rep_of(&e_minus) - &sf_n.e_n));
    if back > 1e-8 {
        return Err(Error::SolveResidual { context: "e₋₁ lies in ℳ".into(), residual: back, tol: 1e-8 });
    }
    let proj_defect = e_minus
        .mul(&e_minus)
        .sub(&e_minus)
        .norm_inf()
        .max(e_minus.sub(&e_minus.adjoint()).norm_inf());
    if proj_defect > 1e-9 {
        return Err(Error::SolveResidual { context: "e₋₁ projection".into(), residual: proj_defect, tol: 1e-9 });
    }

    let (crit, witness) = downward_criterion(&inc_new);
    if !crit {
        return Err(Error::InvalidInclusion(format!(
            "constructed basic-construction floor violates a_kl ≤ n_k at {witness:?}"
        )));
    }

    let base_eta_vectors: Vec<CVec> = base
        .pp_basis()
        .elements
        .iter()
        .map(|e| sf_n.vector_of(e))
        .collect();

    let tower = Tower::build(inc_new)?;
    let dt = DownwardTower {
        tower,
        base: clone_inclusion(base)?,
        e_minus,
        rep_cols,
        rep_pinv,
        j_n: sf_n.j.clone(),
        l2n_dim,
        base_eta_vectors,
    };
    verify_downward(&dt)?;
    Ok(dt)
}

/// Re-phase the copy gauge of the coordinatization so that a representative
/// entry of every copy-pair block of e₋₁ is real positive. The phases live in
/// the commutant of the embedded 𝒩, so the canonical layout is untouched.
fn apply_phase_gauge(inc: &Inclusion, e_pre: &AlgebraElement, rep_cols: &mut CMat) {
    for (j, &mj) in inc.big.dims().iter().enumerate() {
        // row ranges of each copy (k, c) inside block j
        let mut rows: Vec<(usize, usize)> = Vec::new(); // (offset, nk)
        let mut off = 0;
        for (k, &nk) in inc.small.dims().iter().enumerate() {
            for _ in 0..inc.adjacency[k][j] {
                rows.push((off, nk));
                off += nk;
            }
        }
        let nc = rows.len();
        if nc <= 1 {
            continue;
        }
        let b = &e_pre.blocks[j];
        let representative = |a: usize, c: usize| -> Complex64 {
            let mut best = Complex64::default();
            for p in rows[a].0..rows[a].0 + rows[a].1 {
                for q in rows[c].0..rows[c].0 + rows[c].1 {
                    if b[(p, q)].norm() > best.norm() {
                        best = b[(p, q)];
                    }
                }
            }
            best
        };
        let mut omega = vec![Complex64::new(1.0, 0.0); nc];
        let mut fixed = vec![false; nc];
        fixed[0] = true;
        for _ in 1..nc {
            let mut best: Option<(usize, usize, Complex64)> = None;
            for a in 0..nc {
                if !fixed[a] {
                    continue;
                }
                for c in 0..nc {
                    if fixed[c] {
                        continue;
                    }
                    let v = representative(a, c);
                    if best.as_ref().map_or(true, |(_, _, w)| v.norm() > w.norm()) {
                        best = Some((a, c, v));
                    }
                }
            }
            let Some((a, c, v)) = best else { break };
            omega[c] = if v.norm() > 1e-8 { omega[a] * v / cr(v.norm()) } else { omega[a] };
            fixed[c] = true;
        }
        // rep'(ê_pq) = rep(g† ê_pq g) = conj(ω_p) ω_q rep(ê_pq)
        let copy_of = |row: usize| -> usize {
            rows.iter().position(|&(o, n)| row >= o && row < o + n).unwrap()
        };
        let base_off = inc.big.block_offset(j);
        for q in 0..mj {
            for p in 0..mj {
                let factor = omega[copy_of(p)].conj() * omega[copy_of(q)];
                let idx = base_off + q * mj + p;
                let col = rep_cols.column(idx) * factor;
                rep_cols.set_column(idx, &col);
            }
        }
    }
}

fn clone_inclusion(inc: &Inclusion) -> Result<Inclusion> {
    build_inclusion(
        &inc.small.dims().to_vec(),
        &inc.adjacency,
        TraceSpec::Explicit { weights: inc.trace_big.weights.clone(), normalize: false },
    )
}

fn verify_downward(dt: &DownwardTower) -> Result<()> {
    let t = &dt.tower;
    let inc = &t.inclusion;
    let dsq = inc.delta_sq();
    // Temperley-Lieb: e₋₁ e_𝒩 e₋₁ = δ⁻² e₋₁ on L²(ℳ).
    let le = t.sf.left_action(&dt.e_minus);
    let lhs = &le * &t.sf.e_n * &le;
    let d = linalg::frob_norm(&(&lhs - le.unscale(dsq)));
    if d > 1e-10 * dsq {
        return Err(Error::SolveResidual { context: "TL: e₋₁ e_N e₋₁ = δ⁻² e₋₁".into(), residual: d, tol: 1e-10 });
    }
    // e_𝒩 e_ℳ e_𝒩 = δ⁻² e_𝒩 on H.
    let en = &t.rts.e_n_action;
    let lhs = en * &t.rts.e_m * en;
    let d = linalg::frob_norm(&(&lhs - en.unscale(dsq)));
    if d > 1e-10 * dsq {
        return Err(Error::SolveResidual { context: "TL: e_N e_M e_N = δ⁻² e_N".into(), residual: d, tol: 1e-10 });
    }
    Ok(())
}

/// One matrix-unit system for a block of a coordinatized algebra.
struct BlockUnits {
    dim: usize,
    mult: usize,
    /// units[p * dim + q] = the operator e_{pq}.
    units: Vec<CMat>,
}

impl BlockUnits {
    /// Matrix coefficients of an algebra element in this block.
    fn coeffs(&self, op: &CMat) -> CMat {
        let d = self.dim;
        let mut m = CMat::zeros(d, d);
        for p in 0..d {
            for q in 0..d {
                m[(p, q)] = linalg::trace_of(&(&self.units[q * d + p] * op)) / cr(self.mult as f64);
            }
        }
        m
    }
}

/// Recover a full matrix-unit system for the compression of the algebra
/// spanned by `alg_basis` to the central projection `p`.
fn coordinatize_block(alg_basis: &[CMat], p: &CMat, block_index: usize) -> Result<BlockUnits> {
    let compressed: Vec<CMat> = alg_basis.iter().map(|u| p * u * p).collect();
    let span = linalg::orthonormalize_mats(&compressed, None, 1e-14);
    let r = span.len();
    let dim = (r as f64).sqrt().round() as usize;
    if dim * dim != r {
        return Err(Error::Shape(format!("block {block_index}: algebra dimension {r} is not a square")));
    }
    let range = linalg::trace_of(p).re.round() as usize;
    if range % dim != 0 {
        return Err(Error::Shape(format!("block {block_index}: range {range} not divisible by {dim}")));
    }
    let mult = range / dim;

    let mut rng = mmalg::rng_from_seed(0xC0DE + block_index as u64);
    for _attempt in 0..6 {
        if let Some(units) = try_matrix_units(&span, p, dim, mult, &mut rng) {
            return Ok(BlockUnits { dim, mult, units });
        }
    }
    Err(Error::SolveResidual {
        context: format!("matrix units for block {block_index}"),
        residual: f64::NAN,
        tol: 0.0,
    })
}

fn try_matrix_units<R: rand::Rng>(
    span: &[CMat],
    p: &CMat,
    dim: usize,
    mult: usize,
    rng: &mut R,
) -> Option<Vec<CMat>> {
    let n = p.nrows();
    // generic self-adjoint element of the block, shifted to separate the
    // block range from its complement
    let mut g = CMat::zeros(n, n);
    for b in span {
        g += b * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    g = (&g + g.adjoint()).scale(0.5);
    let shift = linalg::op_norm(&g) + 1.0;
    g += p * cr(shift);
    // block-range eigenvalues are ≥ 1 after the shift; the complement stays at 0
    let (vals, vecs) = linalg::heig(&g);
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l < 0.5 {
            continue;
        }
        match clusters.last_mut() {
            Some((v, idx)) if (l - *v).abs() < 1e-6 * shift => idx.push(i),
            _ => clusters.push((l, vec![i])),
        }
    }
    if clusters.len() != dim || clusters.iter().any(|(_, idx)| idx.len() != mult) {
        return None;
    }
    // minimal projections of the block
    let q: Vec<CMat> = clusters
        .iter()
        .map(|(_, idx)| {
            let mut proj = CMat::zeros(n, n);
            for &i in idx {
                let v = vecs.column(i);
                proj += v * v.adjoint();
            }
            proj
        })
        .collect();
    // partial isometries s_c: q_c -> q_1
    let mut r = CMat::zeros(n, n);
    for b in span {
        r += b * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let mut s = Vec::with_capacity(dim);
    s.push(q[0].clone());
    for qc in q.iter().skip(1) {
        let w = &q[0] * &r * qc;
        let lam = linalg::trace_of(&(w.adjoint() * &w)).re / mult as f64;
        if lam < 1e-8 {
            return None;
        }
        let sc = w.unscale(lam.sqrt());
        // must be an exact partial isometry thanks to minimality
        let d1 = linalg::frob_norm(&(sc.adjoint() * &sc - qc));
        let d2 = linalg::frob_norm(&(&sc * sc.adjoint() - &q[0]));
        if d1.max(d2) > 1e-8 * (mult as f64).sqrt() {
            return None;
        }
        s.push(sc);
    }
    let mut units = Vec::with_capacity(dim * dim);
    for sp in &s {
        for sq in &s {
            units.push(sp.adjoint() * sq);
        }
    }
    Some(units)
}

/// Unitary U with U ι(y) U† = λ(y) for two unitarily equivalent unital
/// *-homomorphism images given on a common basis.
fn intertwining_unitary(iota: &[CMat], lambda: &[CMat], dim: usize) -> Result<CMat> {
    // T ι(y) = λ(y) T  ⇔  (ι(y)ᵀ ⊗ 1 - 1 ⊗ λ(y)) vec(T) = 0
    let mut normal = CMat::zeros(dim * dim, dim * dim);
    for (a, b) in iota.iter().zip(lambda) {
        normal += linalg::intertwine_normal(a, b);
    }
    let kernel = linalg::null_space_from_normal(&normal, DEFAULT_TOL);
    if kernel.is_empty() {
        return Err(Error::Shape("no intertwiner between embedding layouts".into()));
    }
    let mut rng = mmalg::rng_from_seed(0x1F2E);
    for _ in 0..8 {
        let mut t = CMat::zeros(dim, dim);
        for v in &kernel {
            t += linalg::unvec(v, dim, dim) * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let tt = t.adjoint() * &t;
        if linalg::min_eigenvalue(&tt) < 1e-6 * linalg::op_norm(&tt).max(1e-12) {
            continue;
        }
        let inv_sqrt = linalg::power_psd(&tt, -0.5, DEFAULT_TOL)?;
        let u = &t * inv_sqrt;
        let defect = linalg::frob_norm(&(u.adjoint() * &u - CMat::identity(dim, dim)));
        if defect > 1e-9 {
            continue;
        }
        // verify the intertwining after polar
        let mut ok = true;
        for (a, b) in iota.iter().zip(lambda) {
            if linalg::frob_norm(&(&u * a - b * &u)) > 1e-8 * (1.0 + linalg::frob_norm(a)) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(u);
        }
    }
    Err(Error::SolveResidual {
        context: "intertwining unitary".into(),
        residual: f64::NAN,
        tol: 0.0,
    })
}

/// Attempt to recognize a bare inclusion as the basic construction of a
/// Markov-traced base: solves the Bratteli equation Σ_j ã_kj p_j = n_k for
/// positive integer base dimensions, extends upward, and keeps the result
/// only when it reproduces the given inclusion (dims, adjacency and trace).
pub fn reconstruct_downward(inc: &Inclusion) -> Option<DownwardTower> {
    let (ok, _) = downward_criterion(inc);
    if !ok {
        return None;
    }
    let n = inc.small.dims();
    let k_count = n.len();
    let j_count = inc.big.dims().len();
    // brute-force small positive integer solutions
    let mut p = vec![1usize; j_count];
    let max_p = *n.iter().max().unwrap_or(&1);
    loop {
        let fits = (0..k_count).all(|k| {
            let s: usize = (0..j_count).map(|j| inc.adjacency[k][j] * p[j]).sum();
            s == n[k]
        });
        if fits {
            let base_adjacency: Vec<Vec<usize>> = (0..j_count)
                .map(|j| (0..k_count).map(|k| inc.adjacency[k][j]).collect())
                .collect();
            if let Ok(base) = build_inclusion(&p, &base_adjacency, TraceSpec::Markov) {
                if let Ok(dt) = extend_upward(&base) {
                    let same_dims = dt.tower.inclusion.big.dims() == inc.big.dims();
                    let same_trace = dt
                        .tower
                        .inclusion
                        .trace_big
                        .weights
                        .iter()
                        .zip(&inc.trace_big.weights)
                        .all(|(a, b)| (a - b).abs() < 1e-9);
                    if same_dims && same_trace {
                        return Some(dt);
                    }
                }
            }
        }
        // advance the candidate vector
        let mut pos = 0;
        loop {
            if pos == j_count {
                return None;
            }
            p[pos] += 1;
            if p[pos] <= max_p {
                break;
            }
            p[pos] = 1;
            pos += 1;
        }
    }
}

/// Inverse canonical shift: for x ∈ ℳ′∩ℳ₂ (as an operator on H), the unique
/// y ∈ 𝒩₋₁′∩ℳ with y e_ℳ = δ⁴ e_ℳ e_𝒩 e₋₁ x e₋₁ e_𝒩 e_ℳ.
pub fn shift_inverse(dt: &DownwardTower, x: &CMat) -> Result<AlgebraElement> {
    let t = &dt.tower;
    let inc = &t.inclusion;
    let d4 = inc.delta_sq() * inc.delta_sq();
    let le = t.rts.left_action(&dt.e_minus);
    let en = &t.rts.e_n_action;
    let em = &t.rts.e_m;
    let y_em = (em * en * &le * x * &le * en * em).scale(d4);

    // extract y from its action on ident(ℳ Ω_{ℳ₁})
    let one = AlgebraElement::identity(&inc.big);
    let w = &y_em * (&t.rts.u_m * one.coords());
    let y_coeff = linalg::pinv(&t.rts.u_m, 1e-18) * w;
    let y = AlgebraElement::from_coords(&inc.big, &y_coeff)?;

    // validate y e_ℳ reproduces the compressed operator
    let recon = t.rts.left_action(&y) * em;
    let res = linalg::frob_norm(&(&recon - &y_em));
    if res > 1e-8 * (1.0 + linalg::frob_norm(&y_em)) {
        return Err(Error::SolveResidual {
            context: "shift_inverse extraction".into(),
            residual: res,
            tol: 1e-8,
        });
    }
    // validate y ∈ 𝒩₋₁′∩ℳ
    for z in AlgebraElement::basis(&dt.base.small) {
        let zz = inc.embed(&dt.base.embed(&z));
        let comm = y.commutator(&zz).norm_inf();
        if comm > 1e-8 * (1.0 + y.norm_inf()) {
            return Err(Error::SolveResidual {
                context: "shift_inverse lands in 𝒩₋₁′∩ℳ".into(),
                residual: comm,
                tol: 1e-8,
            });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inclusion::TraceSpec;

    fn c_in_m2() -> Inclusion {
        build_inclusion(&[1], &[vec![2]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap()
    }

    fn c2_in_m2() -> Inclusion {
        build_inclusion(&[1, 1], &[vec![1], vec![1]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap()
    }

    fn c_in_c2() -> Inclusion {
        build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Explicit { weights: vec![1.0 / 3.0, 2.0 / 3.0], normalize: false }).unwrap()
    }

    #[test]
    fn standard_form_examples() {
        let inc = c_in_m2();
        let sf = standard_form(&inc).unwrap();
        assert_eq!(sf.dim(), 4);
        // e_N has rank 1 for ℂ ⊂ M₂
        let rank = linalg::trace_of(&sf.e_n).re;
        assert!((rank - 1.0).abs() < 1e-9);
    }

    #[test]
    fn basic_construction_examples() {
        // ℂ ⊂ M₂: ℳ₁ = B(L²(M₂)), dimension 16.
        let inc = c_in_m2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        assert_eq!(bc.m1_basis.len(), 16);
        // canonical trace is normalized
        let one = CMat::identity(4, 4);
        assert!((bc.tau_m1(&one).re - 1.0).abs() < 1e-10);

        // ℂ² ⊂ M₂: τ_{ℳ₁} is tracial on ℳ₁.
        let inc = c2_in_m2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        assert_eq!(bc.m1_basis.len(), 8);
        let mut rng = mmalg::rng_from_seed(2);
        for _ in 0..5 {
            let a = random_in_span(&bc.m1_basis, &mut rng);
            let b = random_in_span(&bc.m1_basis, &mut rng);
            let d = (bc.tau_m1(&(&a * &b)) - bc.tau_m1(&(&b * &a))).norm();
            assert!(d < 1e-9 * (1.0 + linalg::frob_norm(&a) * linalg::frob_norm(&b)));
        }
    }

    fn random_in_span<R: rand::Rng>(basis: &[CMat], rng: &mut R) -> CMat {
        let mut out = CMat::zeros(basis[0].nrows(), basis[0].ncols());
        for b in basis {
            out += b * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        out
    }

    #[test]
    fn rel_tensor_dims() {
        let inc = c_in_m2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        let rts = rel_tensor(&inc, &sf, &bc).unwrap();
        assert_eq!(rts.dim, 16);

        let inc = c2_in_m2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        let rts = rel_tensor(&inc, &sf, &bc).unwrap();
        assert_eq!(rts.dim, 8);

        let inc = c_in_c2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        let rts = rel_tensor(&inc, &sf, &bc).unwrap();
        assert_eq!(rts.dim, 4);
    }

    #[test]
    fn delta0_examples() {
        // ℂ ⊂ M₂, t = 1/2: Δ₀ = 1
        let t = Tower::build(c_in_m2()).unwrap();
        let one = AlgebraElement::identity(&t.inclusion.big);
        assert!(t.ops.delta0.sub(&one).norm_inf() < 1e-9);

        // ℂ ⊂ ℂ², t = (1/3, 2/3): Δ₀ = diag(3/2, 3/4)
        let t = Tower::build(c_in_c2()).unwrap();
        assert!((t.ops.delta0.blocks[0][(0, 0)].re - 1.5).abs() < 1e-9);
        assert!((t.ops.delta0.blocks[1][(0, 0)].re - 0.75).abs() < 1e-9);
    }

    #[test]
    fn tau_n_prime_closed_form() {
        // τ_{𝒩′}(e_k f_l) = δ⁻² s_k a_kl m_l; for ℂ ⊂ M₂: 4⁻¹·1·2·2 = 1
        let inc = c_in_m2();
        let sf = standard_form(&inc).unwrap();
        let bc = basic_construction(&inc, &sf).unwrap();
        let rc = inclusion::relative_commutant(&inc).unwrap();
        let (k, l, ref p, _) = rc.central_projections[0];
        let got = bc.tau_n_prime(&sf, &sf.left_action(p)).re;
        let expect = inc.trace_small.weights[k] * inc.adjacency[k][l] as f64
            * inc.big.dims()[l] as f64
            / inc.delta_sq();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
        assert!((got - 1.0).abs() < 1e-9);
    }

    #[test]
    fn delta_defining_property() {
        // τ_{ℳ₂}((Δ⊗1) A) = ω_𝒩(A) over End(ℳ-ℳ) and first-leg lifts.
        for inc in [c_in_m2(), c2_in_m2(), c_in_c2()] {
            let t = Tower::build(inc).unwrap();
            for a in &t.ops.end_mm {
                let lhs = t.rts.tau_m2(&(&t.ops.delta_h * a));
                let rhs = t.rts.omega_n(a);
                assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.norm()), "{lhs} vs {rhs}");
            }
            for z in t.bc.m_prime_m1.iter() {
                let zl = t.rts.lift_first_leg(&t.sf, z, "test").unwrap();
                for b in t.ops.end_mm.iter().take(3) {
                    let a = &zl * b;
                    let lhs = t.rts.tau_m2(&(&t.ops.delta_h * &a));
                    let rhs = t.rts.omega_n(&a);
                    assert!((lhs - rhs).norm() < 1e-8 * (1.0 + rhs.norm()));
                }
            }
        }
    }

    #[test]
    fn end_mm_matches_direct_commutant_on_small_instances() {
        for inc in [c2_in_m2(), c_in_c2()] {
            let t = Tower::build(inc).unwrap();
            let dim = t.rts.dim;
            let mut mats = Vec::new();
            for u in AlgebraElement::basis(&t.inclusion.big) {
                mats.push(t.rts.left_action(&u));
                mats.push(t.rts.right_action(&u));
            }
            let direct = linalg::commutant_kernel(&mats, dim, DEFAULT_TOL);
            assert_eq!(direct.len(), t.ops.end_mm.len());
        }
    }

    #[test]
    fn downward_criterion_examples() {
        assert_eq!(downward_criterion(&c_in_m2()), (false, vec![(0, 0)]));
        assert!(downward_criterion(&c2_in_m2()).0);
        assert!(downward_criterion(&c_in_c2()).0);
    }

    #[test]
    fn extend_upward_c_in_c2() {
        // 𝒩₋₁ = ℂ ⊂ 𝒩 = ℂ² (t = 1/2, 1/2) → ℳ = M₂ with e₋₁ entries all 1/2.
        let base = build_inclusion(
            &[1],
            &[vec![1, 1]],
            TraceSpec::Explicit { weights: vec![0.5, 0.5], normalize: false },
        )
        .unwrap();
        let dt = extend_upward(&base).unwrap();
        assert_eq!(dt.tower.inclusion.big.dims(), &[2]);
        for r in 0..2 {
            for c in 0..2 {
                assert!((dt.e_minus.blocks[0][(r, c)].re - 0.5).abs() < 1e-9);
                assert!(dt.e_minus.blocks[0][(r, c)].im.abs() < 1e-9);
            }
        }
        // Markov base: E_𝒩(e₋₁) = δ⁻²·1
        let inc = &dt.tower.inclusion;
        let e = inc.cond_exp(&dt.e_minus);
        let expect = AlgebraElement::identity(&inc.small).scale(cr(1.0 / inc.delta_sq()));
        assert!(e.sub(&expect).norm_inf() < 1e-9);
        assert!(downward_criterion(inc).0);
    }

    #[test]
    fn extend_upward_rejects_nonmarkov_base() {
        // The induced trace on 𝒩 would differ from the base trace, so no
        // downward basic construction exists for t = (1/3, 2/3).
        let base = build_inclusion(
            &[1],
            &[vec![1, 1]],
            TraceSpec::Explicit { weights: vec![1.0 / 3.0, 2.0 / 3.0], normalize: false },
        )
        .unwrap();
        let err = match extend_upward(&base) {
            Err(e) => e,
            Ok(_) => panic!("expected rejection of non-Markov base"),
        };
        assert!(format!("{err}").contains("Markov"));
    }

    #[test]
    fn extend_upward_multiblock_base() {
        // 𝒩₋₁ = ℂ ⊕ M₂ ⊂ 𝒩 = M₃ (Markov) → ℳ = M₃ ⊕ M₃; exercises blocks
        // acting with multiplicity > 1.
        let base = build_inclusion(&[1, 2], &[vec![1], vec![1]], TraceSpec::Markov).unwrap();
        let dt = extend_upward(&base).unwrap();
        assert_eq!(dt.tower.inclusion.big.dims(), &[3, 3]);
        assert!((dt.tower.inclusion.delta_sq() - base.delta_sq()).abs() < 1e-9);
    }

    #[test]
    fn shift_inverse_unital() {
        let base = build_inclusion(
            &[1],
            &[vec![1, 1]],
            TraceSpec::Explicit { weights: vec![0.5, 0.5], normalize: false },
        )
        .unwrap();
        let dt = extend_upward(&base).unwrap();
        let id_h = CMat::identity(dt.tower.rts.dim, dt.tower.rts.dim);
        let y = shift_inverse(&dt, &id_h).unwrap();
        let one = AlgebraElement::identity(&dt.tower.inclusion.big);
        assert!(y.sub(&one).norm_inf() < 1e-8);
    }

    #[test]
    fn shift_inverse_of_delta() {
        // γ⁻¹(Δ) = J_𝒩 Δ₀⁻¹ J_𝒩
        let base = build_inclusion(&[1, 2], &[vec![1], vec![1]], TraceSpec::Markov).unwrap();
        let dt = extend_upward(&base).unwrap();
        let y = shift_inverse(&dt, &dt.tower.ops.delta_h).unwrap();
        let expect = dt.conj_by_jn(&dt.tower.ops.delta0_inv).unwrap();
        assert!(y.sub(&expect).norm_inf() < 1e-8, "{:?} vs {:?}", y.blocks, expect.blocks);
    }

    #[test]
    fn rel_comm_expectation_of_e_minus() {
        // δ² E^ℳ_{𝒩′∩ℳ}(e₋₁) = Δ₀
        let base = build_inclusion(&[1, 1], &[vec![1], vec![1]], TraceSpec::Markov).unwrap();
        let dt = extend_upward(&base).unwrap();
        let t = &dt.tower;
        let e = t.expect_onto_rel_comm(&dt.e_minus).scale(cr(t.delta_sq()));
        assert!(e.sub(&t.ops.delta0).norm_inf() < 1e-9);

        // δ² E^ℳ_𝒩(Δ₀^{-1/2} e₋₁ Δ₀^{-1/2}) = J_𝒩 Δ₀⁻¹ J_𝒩
        let q = dt.jones_seed().unwrap();
        let lhs = t.inclusion.cond_exp(&q).scale(cr(t.delta_sq()));
        let rhs = dt.conj_by_jn(&dt.tower.ops.delta0_inv).unwrap();
        let rhs_small = extract_from_embedded(&t.inclusion, &rhs);
        assert!(lhs.sub(&rhs_small).norm_inf() < 1e-9);
    }

    // J_𝒩 Δ₀⁻¹ J_𝒩 lies in 𝒩 (as an embedded element); pull it back.
    fn extract_from_embedded(inc: &Inclusion, x: &AlgebraElement) -> AlgebraElement {
        let y = inc.cond_exp(x);
        let back = inc.embed(&y);
        assert!(back.sub(x).norm_inf() < 1e-9, "element not in embedded 𝒩");
        y
    }

    #[test]
    fn expect_onto_m_of_jones_projection() {
        // E^{ℳ₁}_ℳ(e_𝒩) = δ⁻² h⁻¹
        for inc in [c_in_m2(), c2_in_m2(), c_in_c2()] {
            let sf = standard_form(&inc).unwrap();
            let bc = basic_construction(&inc, &sf).unwrap();
            let e = expect_onto_m(&inc, &sf, &bc, &sf.e_n).unwrap();
            let expect = bc.h_inv.scale(cr(1.0 / inc.delta_sq()));
            assert!(e.sub(&expect).norm_inf() < 1e-9);
        }
    }

    #[test]
    fn pimsner_popa_inequality_on_downward_instances() {
        // E_𝒩(x) ≥ δ⁻² x for positive x when a downward construction exists
        let base = build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Markov).unwrap();
        let dt = extend_upward(&base).unwrap();
        let inc = &dt.tower.inclusion;
        let mut rng = mmalg::rng_from_seed(99);
        for _ in 0..100 {
            let x = mmalg::random_positive(&mut rng, &inc.big);
            let gap = inc
                .embed(&inc.cond_exp(&x))
                .sub(&x.scale(cr(1.0 / inc.delta_sq())));
            assert!(
                gap.min_eigenvalue() >= -1e-9 * x.norm_inf().max(1.0),
                "Pimsner-Popa inequality violated: {}",
                gap.min_eigenvalue()
            );
        }
    }

    #[test]
    fn sandwiched_identity_multiplier_is_projection() {
        // δ⁻¹ Δ^{1/2} îd Δ^{1/2} is a projection with τ_{ℳ₂}-value δ⁻²
        for inc in [c_in_m2(), c2_in_m2(), c_in_c2()] {
            let t = Tower::build(inc).unwrap();
            let id_mult = multiplier_of_map(
                &t.inclusion,
                &t.rts,
                &CMat::identity(t.inclusion.big.dim(), t.inclusion.big.dim()),
            )
            .unwrap();
            let e = t.delta_sandwich(&id_mult).unscale(t.delta());
            let idem = linalg::frob_norm(&(&e * &e - &e));
            assert!(idem < 1e-9, "not a projection: {idem}");
            let tr = t.rts.tau_m2(&e).re;
            assert!((tr - 1.0 / t.delta_sq()).abs() < 1e-9, "τ_M2 = {tr}");
        }
    }

    #[test]
    fn extend_upward_from_m2_base() {
        // 𝒩₋₁ = ℂ ⊂ 𝒩 = M₂ gives ℳ = M₄ ⊃ M₂ with a = 2 ≤ n = 2.
        let base = build_inclusion(&[1], &[vec![2]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap();
        let dt = extend_upward(&base).unwrap();
        assert_eq!(dt.tower.inclusion.big.dims(), &[4]);
        assert_eq!(dt.tower.inclusion.adjacency, vec![vec![2]]);
        assert_eq!(dt.tower.rts.dim, 64);
    }
}
