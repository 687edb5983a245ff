//! Relative-entropy quantities: Umegaki and sandwiched Rényi divergences with
//! respect to arbitrary trace functionals, the multiplier entropy S_τ(Φ,Ψ),
//! closed forms for H(ℳ|𝒩), the exact downward formula, the
//! partition-of-unity search, Araki entropy for general CP maps, and the
//! seeded theorem-check harness.

use num_complex::Complex64;
use rand::Rng;

use crate::chan::{self, AlgebraMap, ChannelSampler, Correspondence, FourierMultiplier};
use crate::inclusion::Inclusion;
use crate::linalg::{self, cr, CMat, CVec, DEFAULT_TOL};
use crate::mmalg::{self, AlgebraElement, TraceWeights};
use crate::tower::{self, DownwardTower, Tower};
use crate::{Error, Result};

/// Value of a divergence together with support diagnostics. `value` is
/// +infinity exactly when `support_ok` is false.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceResult {
    pub value: f64,
    pub support_ok: bool,
    pub mass_rho: f64,
    pub mass_sigma: f64,
    pub rank_rho: usize,
    pub rank_sigma: usize,
}

impl DivergenceResult {
    fn infinite(mass_rho: f64, mass_sigma: f64, rank_rho: usize, rank_sigma: usize) -> Self {
        DivergenceResult { value: f64::INFINITY, support_ok: false, mass_rho, mass_sigma, rank_rho, rank_sigma }
    }
}

fn rank_of(p: &CMat) -> usize {
    linalg::trace_of(p).re.round() as usize
}

/// Umegaki divergence tr(ρ log ρ − ρ log σ) for a tracial functional `tr` on
/// the algebra generated by ρ and σ; +infinity on support failure.
pub fn umegaki_with(rho: &CMat, sigma: &CMat, tr: &dyn Fn(&CMat) -> Complex64, tol: f64) -> Result<DivergenceResult> {
    let p_rho = linalg::support_proj(rho, tol)?;
    let p_sigma = linalg::support_proj(sigma, tol)?;
    let mass_rho = tr(rho).re;
    let mass_sigma = tr(sigma).re;
    let rank_rho = rank_of(&p_rho);
    let rank_sigma = rank_of(&p_sigma);
    let dim = rho.nrows();
    let leak = linalg::op_norm(&((CMat::identity(dim, dim) - &p_sigma) * &p_rho));
    if leak > 1e3 * tol {
        return Ok(DivergenceResult::infinite(mass_rho, mass_sigma, rank_rho, rank_sigma));
    }
    let log_rho = linalg::log_on_support(rho, tol)?;
    let log_sigma = linalg::log_on_support(sigma, tol)?;
    let value = tr(&(rho * (log_rho - log_sigma))).re;
    Ok(DivergenceResult { value, support_ok: true, mass_rho, mass_sigma, rank_rho, rank_sigma })
}

/// Sandwiched Rényi divergence
/// D_p(ρ‖σ) = (p−1)⁻¹ log tr |σ^{(1−p)/2p} ρ σ^{(1−p)/2p}|^p for p ∈ [1/2, ∞],
/// with p = 1 the Umegaki divergence and p = ∞ the log spectral sup of
/// σ^{-1/2}ρσ^{-1/2}. For p < 1 the value is computed on the common support.
pub fn renyi_with(rho: &CMat, sigma: &CMat, tr: &dyn Fn(&CMat) -> Complex64, p: f64, tol: f64) -> Result<DivergenceResult> {
    if !(p >= 0.5) {
        return Err(Error::Invalid(format!("Rényi order {p} outside [1/2, ∞]")));
    }
    if (p - 1.0).abs() < 1e-12 {
        return umegaki_with(rho, sigma, tr, tol);
    }
    let p_rho = linalg::support_proj(rho, tol)?;
    let p_sigma = linalg::support_proj(sigma, tol)?;
    let mass_rho = tr(rho).re;
    let mass_sigma = tr(sigma).re;
    let rank_rho = rank_of(&p_rho);
    let rank_sigma = rank_of(&p_sigma);
    let dim = rho.nrows();
    let leak = linalg::op_norm(&((CMat::identity(dim, dim) - &p_sigma) * &p_rho));

    if p.is_infinite() {
        if leak > 1e3 * tol {
            return Ok(DivergenceResult::infinite(mass_rho, mass_sigma, rank_rho, rank_sigma));
        }
        let si = linalg::power_psd(sigma, -0.5, tol)?;
        let m = &si * rho * &si;
        let top = linalg::heig(&m).0.last().copied().unwrap_or(0.0).max(0.0);
        return Ok(DivergenceResult {
            value: top.ln(),
            support_ok: true,
            mass_rho,
            mass_sigma,
            rank_rho,
            rank_sigma,
        });
    }

    if p > 1.0 && leak > 1e3 * tol {
        return Ok(DivergenceResult::infinite(mass_rho, mass_sigma, rank_rho, rank_sigma));
    }
    let e = (1.0 - p) / (2.0 * p);
    let se = linalg::power_psd(sigma, e, tol)?;
    let x = &se * rho * &se;
    let xp = linalg::fcalc_psd(&x, |t| t.powf(p), tol)?;
    let mass = tr(&xp).re;
    if !(mass > 0.0) {
        // orthogonal supports at p < 1
        return Ok(DivergenceResult::infinite(mass_rho, mass_sigma, rank_rho, rank_sigma));
    }
    Ok(DivergenceResult {
        value: mass.ln() / (p - 1.0),
        support_ok: true,
        mass_rho,
        mass_sigma,
        rank_rho,
        rank_sigma,
    })
}

fn weighted_trace_fn(weights: Vec<f64>, dims: Vec<usize>) -> impl Fn(&CMat) -> Complex64 {
    move |m: &CMat| {
        let mut t = Complex64::default();
        let mut off = 0;
        for (l, &d) in dims.iter().enumerate() {
            for i in 0..d {
                t += m[(off + i, off + i)] * cr(weights[l]);
            }
            off += d;
        }
        t
    }
}

fn pack_block_diag(x: &AlgebraElement) -> CMat {
    let total: usize = x.algebra.dims().iter().sum();
    let mut m = CMat::zeros(total, total);
    let mut off = 0;
    for b in &x.blocks {
        let d = b.nrows();
        for c in 0..d {
            for r in 0..d {
                m[(off + r, off + c)] = b[(r, c)];
            }
        }
        off += d;
    }
    m
}

/// Umegaki divergence between positive algebra elements w.r.t. τ_w.
pub fn umegaki_elements(rho: &AlgebraElement, sigma: &AlgebraElement, w: &TraceWeights, tol: f64) -> Result<DivergenceResult> {
    let tr = weighted_trace_fn(w.weights.clone(), rho.algebra.dims().to_vec());
    umegaki_with(&pack_block_diag(rho), &pack_block_diag(sigma), &tr, tol)
}

pub fn renyi_elements(rho: &AlgebraElement, sigma: &AlgebraElement, w: &TraceWeights, p: f64, tol: f64) -> Result<DivergenceResult> {
    let tr = weighted_trace_fn(w.weights.clone(), rho.algebra.dims().to_vec());
    renyi_with(&pack_block_diag(rho), &pack_block_diag(sigma), &tr, p, tol)
}

/// S_τ(Φ,Ψ) = δ · D_{τ_{ℳ₂}}(Δ^{1/2}Φ̂Δ^{1/2} ‖ Δ^{1/2}Ψ̂Δ^{1/2}).
pub fn s_tau(tower: &Tower, phi_hat: &FourierMultiplier, psi_hat: &FourierMultiplier) -> Result<DivergenceResult> {
    let rho = tower.delta_sandwich(&phi_hat.mat);
    let sigma = tower.delta_sandwich(&psi_hat.mat);
    let tr = |z: &CMat| tower.rts.tau_m2(z);
    let mut out = umegaki_with(&rho, &sigma, &tr, DEFAULT_TOL)?;
    if out.support_ok {
        out.value *= tower.delta();
    }
    Ok(out)
}

/// The three normalization variants of the Rényi entropy between sandwiched
/// multipliers. `raw` follows the bare definition, `delta` carries the δ
/// prefactor of the equality theorems, and `normalized` rescales both
/// arguments to unit mass (the variant that is provably monotone in p and
/// matches every worked closed form for unital pairs).
#[derive(Debug, Clone, Copy)]
pub struct RenyiVariants {
    pub raw: f64,
    pub delta: f64,
    pub normalized: f64,
    pub support_ok: bool,
}

pub fn s_p(tower: &Tower, phi_hat: &FourierMultiplier, psi_hat: &FourierMultiplier, p: f64) -> Result<RenyiVariants> {
    let rho = tower.delta_sandwich(&phi_hat.mat);
    let sigma = tower.delta_sandwich(&psi_hat.mat);
    let tr = |z: &CMat| tower.rts.tau_m2(z);
    let raw_res = renyi_with(&rho, &sigma, &tr, p, DEFAULT_TOL)?;
    if !raw_res.support_ok {
        return Ok(RenyiVariants {
            raw: f64::INFINITY,
            delta: f64::INFINITY,
            normalized: f64::INFINITY,
            support_ok: false,
        });
    }
    let (mr, ms) = (raw_res.mass_rho, raw_res.mass_sigma);
    if !(mr > 0.0 && ms > 0.0) {
        return Err(Error::NotPositive(mr.min(ms)));
    }
    let norm_res = renyi_with(&rho.unscale(mr), &sigma.unscale(ms), &tr, p, DEFAULT_TOL)?;
    Ok(RenyiVariants {
        raw: raw_res.value,
        delta: tower.delta() * raw_res.value,
        normalized: norm_res.value,
        support_ok: true,
    })
}

/// Finite-dimensional closed form for H(ℳ|𝒩):
/// Σ_l m_l t_l log(m_l/t_l) + Σ_k n_k s_k log(s_k/n_k)
/// + Σ_{k,l} n_k a_kl t_l log min{n_k/a_kl, 1}.
pub fn h_closed_form_subalgebra(inc: &Inclusion) -> f64 {
    let mut total = 0.0;
    for (l, &ml) in inc.big.dims().iter().enumerate() {
        let t = inc.trace_big.weights[l];
        total += ml as f64 * t * (ml as f64 / t).ln();
    }
    for (k, &nk) in inc.small.dims().iter().enumerate() {
        let s = inc.trace_small.weights[k];
        total += nk as f64 * s * (s / nk as f64).ln();
    }
    for (k, &nk) in inc.small.dims().iter().enumerate() {
        for (l, _) in inc.big.dims().iter().enumerate() {
            let a = inc.adjacency[k][l];
            if a == 0 {
                continue;
            }
            let t = inc.trace_big.weights[l];
            total += (nk * a) as f64 * t * (nk as f64 / a as f64).min(1.0).ln();
        }
    }
    total
}

/// 2 log δ + τ_ℳ(log Δ₀), the multiplier-entropy value of the pair (id, E_𝒩).
pub fn upper_bound_value(tower: &Tower) -> Result<f64> {
    let log_d0 = mmalg::log_element(&tower.ops.delta0, DEFAULT_TOL)?;
    let t = mmalg::trace(&tower.inclusion.trace_big, &log_d0)?.re;
    Ok(tower.delta_sq().ln() + t)
}

/// Gap between the multiplier entropy and H(ℳ|𝒩):
/// Σ n_k a_kl t_l log max{a_kl/n_k, 1}.
pub fn equality_gap(inc: &Inclusion) -> f64 {
    let mut gap = 0.0;
    for (k, &nk) in inc.small.dims().iter().enumerate() {
        for (l, _) in inc.big.dims().iter().enumerate() {
            let a = inc.adjacency[k][l];
            if a == 0 {
                continue;
            }
            gap += (nk * a) as f64 * inc.trace_big.weights[l] * (a as f64 / nk as f64).max(1.0).ln();
        }
    }
    gap
}

/// Exact value on downward instances:
/// δ² D_{τ_ℳ}(Φ(Δ₀^{-1/2}e₋₁Δ₀^{-1/2}) ‖ Ψ(Δ₀^{-1/2}e₋₁Δ₀^{-1/2})).
pub fn h_downward(dt: &DownwardTower, phi: &AlgebraMap, psi: &AlgebraMap) -> Result<DivergenceResult> {
    let x = dt.jones_seed()?;
    let inc = &dt.tower.inclusion;
    let mut out = umegaki_elements(&phi.apply(&x), &psi.apply(&x), &inc.trace_big, DEFAULT_TOL)?;
    if out.support_ok {
        out.value *= inc.delta_sq();
    }
    Ok(out)
}

/// A finite family of positive elements summing to 1.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub elements: Vec<AlgebraElement>,
}

impl PartitionOfUnity {
    pub fn validate(&self, tol: f64) -> Result<()> {
        let alg = &self.elements[0].algebra;
        let mut sum = AlgebraElement::zero(alg);
        for x in &self.elements {
            if x.min_eigenvalue() < -tol * x.norm_inf().max(1.0) {
                return Err(Error::NotPositive(x.min_eigenvalue()));
            }
            sum = sum.add(x);
        }
        let defect = sum.sub(&AlgebraElement::identity(alg)).norm_inf();
        if defect > 10.0 * tol {
            return Err(Error::Invalid(format!("partition sums to 1 within {defect:.3e} only")));
        }
        Ok(())
    }
}

/// Σ_i D_{τ_ℳ}(Φ(x_i) ‖ Ψ(x_i)).
pub fn partition_value(phi: &AlgebraMap, psi: &AlgebraMap, w: &TraceWeights, partition: &PartitionOfUnity) -> Result<f64> {
    let mut total = 0.0;
    for x in &partition.elements {
        // clip tiny negative dust so the divergence sees a genuine psd input
        let xp = mmalg::fn_calculus(x, |t| t, 1e-11)?;
        if xp.norm_inf() < 1e-12 {
            continue;
        }
        let d = umegaki_elements(&phi.apply(&xp), &psi.apply(&xp), w, DEFAULT_TOL)?;
        if !d.support_ok {
            return Ok(f64::INFINITY);
        }
        total += d.value;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: f64,
    pub partition: PartitionOfUnity,
    pub evaluations: usize,
    /// (evaluation index, best value so far) recorded at every improvement.
    pub trace: Vec<(usize, f64)>,
}

/// Maximize the partition functional with three strategies: the averaged
/// Jones-projection family (exact finite-group version plus the random
/// sweeps with remainder), spectral partitions with simplex re-weighting,
/// and hill-climbing by small unitary conjugations.
pub fn h_partition_search(
    tower: &Tower,
    downward: Option<&DownwardTower>,
    phi: &AlgebraMap,
    psi: &AlgebraMap,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    let inc = &tower.inclusion;
    let w = &inc.trace_big;
    let mut rng = mmalg::rng_from_seed(seed);
    let mut evaluations = 0usize;
    let mut trace = Vec::new();
    let trivial = PartitionOfUnity { elements: vec![AlgebraElement::identity(&inc.big)] };
    let mut best_val = partition_value(phi, psi, w, &trivial)?;
    evaluations += 1;
    let mut best_part = trivial;
    trace.push((evaluations, best_val));

    let consider = |part: PartitionOfUnity,
                        evaluations: &mut usize,
                        best_val: &mut f64,
                        best_part: &mut PartitionOfUnity,
                        trace: &mut Vec<(usize, f64)>|
     -> Result<()> {
        if part.validate(1e-9).is_err() {
            return Ok(());
        }
        let v = partition_value(phi, psi, w, &part)?;
        *evaluations += 1;
        if v.is_finite() && v > *best_val {
            *best_val = v;
            *best_part = part;
            trace.push((*evaluations, v));
        }
        Ok(())
    };

    // (a) Jones-projection families on downward instances.
    if let Some(dt) = downward {
        // exact finite-group average: Σ_g (δ²/|G|) u_g q u_g* = 1 exactly
        let q = dt.normalized_jones_seed()?;
        let group = mmalg::spanning_unitaries(&inc.small);
        let scale = cr(tower.delta_sq() / group.len() as f64);
        let elements: Vec<AlgebraElement> = group
            .iter()
            .map(|u| {
                let ue = inc.embed(u);
                ue.mul(&q).mul(&ue.adjoint()).scale(scale)
            })
            .collect();
        consider(PartitionOfUnity { elements }, &mut evaluations, &mut best_val, &mut best_part, &mut trace)?;

        // random-unitary sweeps with remainder
        'sweep: for &n in &[2usize, 4, 8, 16] {
            for &eps in &[0.5f64, 0.25, 0.1, 0.05] {
                if evaluations >= budget {
                    break 'sweep;
                }
                let c = cr(tower.delta_sq() / (n as f64 * (1.0 + eps)));
                let mut elements = Vec::with_capacity(n + 1);
                let mut sum = AlgebraElement::zero(&inc.big);
                for _ in 0..n {
                    let u = inc.embed(&mmalg::random_unitary(&mut rng, &inc.small));
                    let x = u.mul(&q).mul(&u.adjoint()).scale(c);
                    sum = sum.add(&x);
                    elements.push(x);
                }
                let rem = AlgebraElement::identity(&inc.big).sub(&sum);
                if rem.min_eigenvalue() < -1e-10 {
                    continue;
                }
                elements.push(rem);
                consider(PartitionOfUnity { elements }, &mut evaluations, &mut best_val, &mut best_part, &mut trace)?;
            }
        }
    }

    // (b) spectral partitions of random self-adjoint elements, with simplex
    // re-weighting.
    while evaluations < budget.min(evaluations + 1).max(1) && evaluations < budget * 2 / 3 {
        let g = mmalg::random_self_adjoint(&mut rng, &inc.big);
        let projections = spectral_partition(&g)?;
        consider(
            PartitionOfUnity { elements: projections.clone() },
            &mut evaluations,
            &mut best_val,
            &mut best_part,
            &mut trace,
        )?;
        // random row-stochastic recombination
        let rows = rng.gen_range(2..=projections.len().max(2));
        let mut weights = vec![vec![0.0f64; projections.len()]; rows];
        for j in 0..projections.len() {
            let mut col: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = col.iter().sum();
            for (i, c) in col.iter_mut().enumerate() {
                *c /= s;
                weights[i][j] = *c;
            }
        }
        let elements: Vec<AlgebraElement> = weights
            .iter()
            .map(|row| {
                let mut x = AlgebraElement::zero(&inc.big);
                for (j, p) in projections.iter().enumerate() {
                    x = x.add(&p.scale(cr(row[j])));
                }
                x
            })
            .collect();
        consider(PartitionOfUnity { elements }, &mut evaluations, &mut best_val, &mut best_part, &mut trace)?;
        if evaluations + 2 >= budget {
            break;
        }
    }

    // (c) hill-climbing by small unitary conjugations of the best partition.
    let mut step = 0.2;
    while evaluations < budget {
        let g = mmalg::random_self_adjoint(&mut rng, &inc.big);
        let u = mmalg::fn_calculus_unitary(&g, step);
        let elements: Vec<AlgebraElement> = best_part
            .elements
            .iter()
            .map(|x| u.mul(x).mul(&u.adjoint()))
            .collect();
        let before = best_val;
        consider(PartitionOfUnity { elements }, &mut evaluations, &mut best_val, &mut best_part, &mut trace)?;
        if best_val <= before {
            step *= 0.9;
            if step < 1e-4 {
                step = 0.2;
            }
        }
    }

    Ok(SearchOutcome { best: best_val, partition: best_part, evaluations, trace })
}

/// Eigenprojections of a self-adjoint element, merged over near-degenerate
/// eigenvalues; a partition of unity by construction.
fn spectral_partition(g: &AlgebraElement) -> Result<Vec<AlgebraElement>> {
    let alg = &g.algebra;
    // global eigenvalue clusters across blocks
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new(); // (eigenvalue, block, col index)
    let mut vecs: Vec<CMat> = Vec::new();
    for (l, b) in g.blocks.iter().enumerate() {
        let (vals, v) = linalg::heig(b);
        vecs.push(v);
        for (i, &lam) in vals.iter().enumerate() {
            pairs.push((lam, l, i));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spread = (pairs.last().unwrap().0 - pairs[0].0).abs().max(1e-12);
    let mut out: Vec<AlgebraElement> = Vec::new();
    let mut current = AlgebraElement::zero(alg);
    let mut have = false;
    let mut last = f64::NEG_INFINITY;
    for &(lam, l, i) in &pairs {
        if have && (lam - last) > 1e-8 * spread {
            out.push(current.clone());
            current = AlgebraElement::zero(alg);
        }
        let v = vecs[l].column(i).into_owned();
        current.blocks[l] += &v * v.adjoint();
        have = true;
        last = lam;
    }
    if have {
        out.push(current);
    }
    Ok(out)
}

/// Araki relative entropy S_φ(Φ,Ψ) through the correspondence of Ψ:
/// densities of ω_{Ψ,φ}(Φ) and ω_{Ψ,φ}(Ψ) w.r.t. the ambient trace on End.
pub fn araki(
    phi: &AlgebraMap,
    psi: &AlgebraMap,
    target_weights: &TraceWeights,
    state_density: &AlgebraElement,
) -> Result<DivergenceResult> {
    let corr = chan::correspondence(psi, target_weights, state_density)?;
    let h = chan::derivative(phi, &corr)?;
    araki_from_derivatives(&corr, &h, &CMat::identity(corr.dim, corr.dim))
}

/// S_φ computed inside the correspondence of a dominating reference ℰ with
/// Φ ≼ Ψ ≼ ℰ; by reference independence this agrees with `araki`.
pub fn araki_with_reference(
    phi: &AlgebraMap,
    psi: &AlgebraMap,
    corr_reference: &Correspondence,
) -> Result<DivergenceResult> {
    let h_phi = chan::derivative(phi, corr_reference)?;
    let h_psi = chan::derivative(psi, corr_reference)?;
    araki_from_derivatives(corr_reference, &h_phi, &h_psi)
}

fn araki_from_derivatives(corr: &Correspondence, h_phi: &CMat, h_psi: &CMat) -> Result<DivergenceResult> {
    // density of the vector state ⟨·Ω,Ω⟩ on End w.r.t. the ambient trace
    let mut d = CMat::zeros(corr.dim, corr.dim);
    for b in &corr.end_basis {
        let nu = (corr.omega.adjoint() * b * &corr.omega)[(0, 0)];
        d += b.adjoint() * nu;
    }
    let d = (&d + d.adjoint()).scale(0.5);
    let ds = linalg::sqrt_psd(&d, DEFAULT_TOL)?;
    let rho = &ds * h_phi * &ds;
    let sigma = &ds * h_psi * &ds;
    umegaki_with(&rho, &sigma, &|m: &CMat| linalg::trace_of(m), DEFAULT_TOL)
}

/// One checked inequality or identity from a harness suite.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub suite: String,
    pub trial: u64,
    pub instance: String,
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs + slack for inequalities lhs ≤ rhs; |lhs − rhs| shortfall for
    /// identities. Negative margin means violation.
    pub margin: f64,
    pub pass: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct HarnessReport {
    pub rows: Vec<CheckRow>,
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    PartitionVsStau,
    RightMonotonicity,
    LeftMonotonicity,
    Convexity,
    RenyiMonotonicity,
    InterpolationChain,
    DpiWitness,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::PartitionVsStau => "partition_vs_stau",
            Suite::RightMonotonicity => "right_monotonicity",
            Suite::LeftMonotonicity => "left_monotonicity",
            Suite::Convexity => "convexity",
            Suite::RenyiMonotonicity => "renyi_monotonicity",
            Suite::InterpolationChain => "interpolation_chain",
            Suite::DpiWitness => "dpi_witness",
        }
    }

    pub fn all() -> Vec<Suite> {
        vec![
            Suite::PartitionVsStau,
            Suite::RightMonotonicity,
            Suite::LeftMonotonicity,
            Suite::Convexity,
            Suite::RenyiMonotonicity,
            Suite::InterpolationChain,
            Suite::DpiWitness,
        ]
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::all().into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub suites: Vec<Suite>,
    pub trials: u64,
    pub seed: u64,
    pub slack: f64,
    /// Test fixture: deliberately corrupt a quantity so sensitivity of the
    /// harness itself can be asserted.
    pub mutation: Option<Mutation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    UmegakiSignFlip,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { suites: Suite::all(), trials: 200, seed: 1, slack: 1e-8, mutation: None }
    }
}

/// Cached per-inclusion data shared across harness trials.
struct HarnessInstances {
    towers: Vec<(String, Tower)>,
    downward: (String, DownwardTower),
}

impl HarnessInstances {
    fn build() -> Result<Self> {
        use crate::inclusion::{build_inclusion, TraceSpec};
        let towers = vec![
            (
                "c2_in_m2".to_string(),
                Tower::build(build_inclusion(
                    &[1, 1],
                    &[vec![1], vec![1]],
                    TraceSpec::Explicit { weights: vec![0.5], normalize: false },
                )?)?,
            ),
            (
                "c_in_c2_skew".to_string(),
                Tower::build(build_inclusion(
                    &[1],
                    &[vec![1, 1]],
                    TraceSpec::Explicit { weights: vec![1.0 / 3.0, 2.0 / 3.0], normalize: false },
                )?)?,
            ),
            (
                "c_in_m2".to_string(),
                Tower::build(build_inclusion(
                    &[1],
                    &[vec![2]],
                    TraceSpec::Explicit { weights: vec![0.5], normalize: false },
                )?)?,
            ),
        ];
        let base = build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Markov)?;
        let downward = ("bc_of_c_in_c2".to_string(), tower::extend_upward(&base)?);
        Ok(HarnessInstances { towers, downward })
    }
}

/// Run the seeded property suites; violations beyond the slack are recorded
/// with their reproduction seeds.
pub fn theorem_harness(config: &HarnessConfig) -> Result<HarnessReport> {
    let instances = HarnessInstances::build()?;
    let mut rows = Vec::new();
    for suite in &config.suites {
        for trial in 0..config.trials {
            let seed = config.seed
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add(trial)
                .wrapping_add(*suite as u64 * 0xABCDEF);
            let mut trial_rows = run_trial(*suite, trial, seed, config, &instances)?;
            rows.append(&mut trial_rows);
        }
    }
    let violations = rows.iter().filter(|r| !r.pass).count();
    Ok(HarnessReport { rows, violations })
}

fn sign_of(config: &HarnessConfig) -> f64 {
    match config.mutation {
        Some(Mutation::UmegakiSignFlip) => -1.0,
        None => 1.0,
    }
}

fn run_trial(
    suite: Suite,
    trial: u64,
    seed: u64,
    config: &HarnessConfig,
    instances: &HarnessInstances,
) -> Result<Vec<CheckRow>> {
    let slack = config.slack;
    let mut rng = mmalg::rng_from_seed(seed);
    let mut rows = Vec::new();
    let mut push_le = |suite: Suite, instance: &str, quantity: &str, lhs: f64, rhs: f64| {
        let margin = rhs - lhs + slack;
        rows.push(CheckRow {
            suite: suite.name().into(),
            trial,
            instance: instance.into(),
            quantity: quantity.into(),
            lhs,
            rhs,
            margin,
            pass: margin >= 0.0 || (lhs.is_infinite() && rhs.is_infinite()),
            seed,
        });
    };

    match suite {
        Suite::PartitionVsStau => {
            let (name, t) = &instances.towers[(trial as usize) % instances.towers.len()];
            let sampler = ChannelSampler { tower: t };
            let psi = sampler.random_cp(&mut rng, true, false)?;
            let phi = sampler.random_cp(&mut rng, false, false)?;
            let st = s_tau(
                t,
                &chan::fourier_multiplier(t, &phi)?,
                &chan::fourier_multiplier(t, &psi)?,
            )?;
            let g = mmalg::random_self_adjoint(&mut rng, &t.inclusion.big);
            let part = PartitionOfUnity { elements: spectral_partition(&g)? };
            let v = sign_of(config) * partition_value(&phi, &psi, &t.inclusion.trace_big, &part)?;
            push_le(suite, name, "partition_value <= s_tau", v, st.value);
        }
        Suite::RightMonotonicity => {
            let (a_alg, b_alg, c_alg) = random_algebra_triple(&mut rng)?;
            let psi2 = chan::random_cp_map(&mut rng, &a_alg, &b_alg, 4, true)?;
            let psi1 = chan::random_cp_map(&mut rng, &b_alg, &c_alg, full_kraus(&b_alg, &c_alg), false)?;
            let phi1 = chan::random_cp_map(&mut rng, &b_alg, &c_alg, 2, false)?;
            let wc = TraceWeights::tracial(&c_alg);
            let state = mmalg::random_faithful_state(&mut rng, &c_alg, &wc)?;
            let lhs = sign_of(config)
                * araki(&phi1.compose(&psi2)?, &psi1.compose(&psi2)?, &wc, &state)?.value;
            let rhs = araki(&phi1, &psi1, &wc, &state)?.value;
            push_le(suite, "random_triple", "S(Φ₁Ψ₂,Ψ₁Ψ₂) <= S(Φ₁,Ψ₁)", lhs, rhs);
        }
        Suite::LeftMonotonicity => {
            let (a_alg, b_alg, c_alg) = random_algebra_triple(&mut rng)?;
            let psi1 = chan::random_cp_map(&mut rng, &b_alg, &c_alg, full_kraus(&b_alg, &c_alg), true)?;
            let psi2 = chan::random_cp_map(&mut rng, &a_alg, &b_alg, full_kraus(&a_alg, &b_alg), false)?;
            let phi2 = chan::random_cp_map(&mut rng, &a_alg, &b_alg, 2, false)?;
            let wc = TraceWeights::tracial(&c_alg);
            let wb = TraceWeights::tracial(&b_alg);
            let state = mmalg::random_faithful_state(&mut rng, &c_alg, &wc)?;
            // φ ∘ Ψ₁ as a density on ℬ
            let pullback = chan::pullback_density(&psi1, &wc, &state, &wb)?;
            if pullback.min_eigenvalue() < 1e-6 {
                return Ok(rows); // skip the rare non-faithful pullback
            }
            let lhs = sign_of(config)
                * araki(&psi1.compose(&phi2)?, &psi1.compose(&psi2)?, &wc, &state)?.value;
            let rhs = araki(&phi2, &psi2, &wb, &pullback)?.value;
            push_le(suite, "random_triple", "S_φ(Ψ₁Φ₂,Ψ₁Ψ₂) <= S_{φΨ₁}(Φ₂,Ψ₂)", lhs, rhs);
        }
        Suite::Convexity => {
            let (a_alg, b_alg, _) = random_algebra_triple(&mut rng)?;
            let wb = TraceWeights::tracial(&b_alg);
            let state = mmalg::random_faithful_state(&mut rng, &b_alg, &wb)?;
            let n = 3;
            let mut phis = Vec::new();
            let mut psis = Vec::new();
            let mut ps = Vec::new();
            for _ in 0..n {
                phis.push(chan::random_cp_map(&mut rng, &a_alg, &b_alg, 2, false)?);
                psis.push(chan::random_cp_map(&mut rng, &a_alg, &b_alg, full_kraus(&a_alg, &b_alg), false)?);
                ps.push(rng.gen_range(0.1..1.0));
            }
            let total: f64 = ps.iter().sum();
            for p in &mut ps {
                *p /= total;
            }
            let phi_mix = AlgebraMap::convex(&phis, &ps)?;
            let psi_mix = AlgebraMap::convex(&psis, &ps)?;
            let lhs = sign_of(config) * araki(&phi_mix, &psi_mix, &wb, &state)?.value;
            let mut rhs = 0.0;
            for i in 0..n {
                rhs += ps[i] * araki(&phis[i], &psis[i], &wb, &state)?.value;
            }
            push_le(suite, "random_pair_family", "S(Σp Φ, Σp Ψ) <= Σ p S(Φ,Ψ)", lhs, rhs);
        }
        Suite::RenyiMonotonicity => {
            let (name, t) = &instances.towers[(trial as usize) % instances.towers.len()];
            let sampler = ChannelSampler { tower: t };
            let psi = sampler.random_cp(&mut rng, true, true)?;
            let phi = sampler.random_cp(&mut rng, false, true)?;
            let ph = chan::fourier_multiplier(t, &phi)?;
            let sh = chan::fourier_multiplier(t, &psi)?;
            let grid = [1.0, 1.5, 2.0, 4.0, f64::INFINITY];
            let mut prev = f64::NEG_INFINITY;
            let mut prev_p = 0.0;
            for &p in &grid {
                let v = sign_of(config) * s_p(t, &ph, &sh, p)?.normalized;
                push_le(suite, name, &format!("S_{prev_p} <= S_{p} (normalized)"), prev, v);
                prev = v;
                prev_p = p;
            }
        }
        Suite::InterpolationChain => {
            let (name, dt) = (&instances.downward.0, &instances.downward.1);
            let t = &dt.tower;
            let sampler = ChannelSampler { tower: t };
            let psi = sampler.random_cp(&mut rng, true, true)?;
            let phi = sampler.random_cp(&mut rng, false, true)?;
            let ph = chan::fourier_multiplier(t, &phi)?;
            let sh = chan::fourier_multiplier(t, &psi)?;
            let lam = chan::lambda_bimodule(&ph, &sh, DEFAULT_TOL)?;
            if lam.paper_convention_infinite {
                return Ok(rows);
            }
            let top = -lam.value.ln();
            let h_exact = sign_of(config) * h_downward(dt, &phi, &psi)?.value;
            for &p in &[1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                let v = s_p(t, &ph, &sh, p)?.normalized;
                push_le(suite, name, &format!("S_{p} <= -log λ"), v, top);
                push_le(suite, name, &format!("H <= S_{p}"), h_exact, v);
            }
        }
        Suite::DpiWitness => {
            let (name, t) = &instances.towers[(trial as usize) % instances.towers.len()];
            let sampler = ChannelSampler { tower: t };
            let psi = sampler.random_cp(&mut rng, true, false)?;
            let phi = sampler.random_cp(&mut rng, false, false)?;
            let g = mmalg::random_self_adjoint(&mut rng, &t.inclusion.big);
            let part = PartitionOfUnity { elements: spectral_partition(&g)? };
            // Tr ∘ T = τ_{ℳ₂} on a random A ∈ ℳ′∩ℳ₂
            let mut a = CMat::zeros(t.rts.dim, t.rts.dim);
            for b in &t.ops.end_mm {
                a += b * linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let t_of_a = apply_dpi_witness(t, &part, &a)?;
            let lhs: f64 = t_of_a
                .iter()
                .map(|x| mmalg::trace(&t.inclusion.trace_big, x).map(|z| z.re))
                .collect::<Result<Vec<_>>>()?
                .iter()
                .sum();
            let rhs = t.rts.tau_m2(&a).re;
            let diff = sign_of(config) * (lhs - rhs).abs();
            push_le(suite, name, "|Tr(T(A)) - τ_M2(A)| <= slack", diff, 0.0);

            // Σ_j D(Φ(x_j)‖Ψ(x_j)) = δ D_Tr(T(Δ^{1/2}Φ̂Δ^{1/2}) ‖ T(Δ^{1/2}Ψ̂Δ^{1/2}))
            let ph = chan::fourier_multiplier(t, &phi)?;
            let sh = chan::fourier_multiplier(t, &psi)?;
            let direct = partition_value(&phi, &psi, &t.inclusion.trace_big, &part)?;
            let t_rho = apply_dpi_witness(t, &part, &t.delta_sandwich(&ph.mat))?;
            let t_sigma = apply_dpi_witness(t, &part, &t.delta_sandwich(&sh.mat))?;
            let mut sum = 0.0;
            let mut ok = true;
            for (r, s) in t_rho.iter().zip(&t_sigma) {
                let d = umegaki_elements(r, s, &t.inclusion.trace_big, 1e-8)?;
                if !d.support_ok {
                    ok = false;
                    break;
                }
                sum += d.value;
            }
            if ok && direct.is_finite() {
                let diff = sign_of(config) * (direct - t.delta() * sum).abs();
                push_le(suite, name, "|Σ D(Φx‖Ψx) - δ D_Tr(T..)| <= slack", diff, slack.max(1e-8) * 10.0 - slack);
            }
        }
    }
    Ok(rows)
}

/// T(A) = (v* x_j Δ^{-1/2} A Δ^{-1/2} v)_j, each entry pulled back to ℳ.
fn apply_dpi_witness(t: &Tower, part: &PartitionOfUnity, a: &CMat) -> Result<Vec<AlgebraElement>> {
    let inc = &t.inclusion;
    let d = inc.big.dim();
    let mid = &t.ops.delta_h_inv_sqrt * a * &t.ops.delta_h_inv_sqrt;
    let mut out = Vec::with_capacity(part.elements.len());
    for x in &part.elements {
        let z = t.rts.left_action(x) * &mid;
        let w = &z * &t.rts.omega_pair;
        let paired = t.rts.v_n.adjoint() * w;
        let mut coords = CVec::zeros(d);
        let mut off = 0;
        for (l, &nl) in inc.big.dims().iter().enumerate() {
            for _ in 0..nl * nl {
                coords[off] = paired[off] / cr(inc.trace_big.weights[l]);
                off += 1;
            }
        }
        out.push(AlgebraElement::from_coords(&inc.big, &coords)?);
    }
    Ok(out)
}

fn full_kraus(a: &crate::mmalg::Algebra, b: &crate::mmalg::Algebra) -> usize {
    let na = a.dims().iter().map(|&n| n * n).max().unwrap_or(1);
    let nb = b.dims().iter().map(|&m| m * m).max().unwrap_or(1);
    na * nb + 1
}

fn random_algebra_triple<R: Rng>(rng: &mut R) -> Result<(crate::mmalg::Algebra, crate::mmalg::Algebra, crate::mmalg::Algebra)> {
    // the 5-dimensional ℂ⊕M₂ appears with lower weight: its correspondences
    // cost an order of magnitude more than the 4-dimensional ones
    let pool: [&[usize]; 5] = [&[2], &[1, 1], &[2], &[1, 1], &[1, 2]];
    let pick = |r: &mut R| pool[r.gen_range(0..pool.len())].to_vec();
    Ok((
        mmalg::MultiMatrixAlgebra::new(pick(rng))?,
        mmalg::MultiMatrixAlgebra::new(pick(rng))?,
        mmalg::MultiMatrixAlgebra::new(pick(rng))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inclusion::{build_inclusion, TraceSpec};

    fn tr_plain(m: &CMat) -> Complex64 {
        linalg::trace_of(m)
    }

    fn diag2(a: f64, b: f64) -> CMat {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = cr(a);
        m[(1, 1)] = cr(b);
        m
    }

    #[test]
    fn umegaki_examples() {
        // ρ = σ → 0
        let mut rng = mmalg::rng_from_seed(3);
        let g = linalg::random_complex_matrix(&mut rng, 3, 3);
        let rho = &g * g.adjoint();
        let d = umegaki_with(&rho, &rho, &tr_plain, DEFAULT_TOL).unwrap();
        assert!(d.support_ok && d.value.abs() < 1e-9);

        // ρ = diag(1,0), σ = diag(1/2,1/2), tr = Tr → log 2
        let d = umegaki_with(&diag2(1.0, 0.0), &diag2(0.5, 0.5), &tr_plain, DEFAULT_TOL).unwrap();
        assert!((d.value - 2f64.ln()).abs() < 1e-12);

        // support failure → ∞
        let d = umegaki_with(&diag2(1.0, 0.0), &diag2(0.0, 1.0), &tr_plain, DEFAULT_TOL).unwrap();
        assert!(!d.support_ok && d.value.is_infinite());
    }

    #[test]
    fn renyi_examples() {
        // ρ = σ, any p → 0
        for p in [0.5, 0.7, 1.0, 2.0, f64::INFINITY] {
            let d = renyi_with(&diag2(0.3, 0.7), &diag2(0.3, 0.7), &tr_plain, p, DEFAULT_TOL).unwrap();
            assert!(d.value.abs() < 1e-10, "p={p}: {}", d.value);
        }
        // p = ∞, ρ = diag(1,0), σ = diag(1/2,1/2) → log 2
        let d = renyi_with(&diag2(1.0, 0.0), &diag2(0.5, 0.5), &tr_plain, f64::INFINITY, DEFAULT_TOL).unwrap();
        assert!((d.value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn renyi_classical_grid() {
        // commuting case matches the classical sandwiched formula
        let classical = |a: f64, b: f64, p: f64| -> f64 {
            if (p - 1.0).abs() < 1e-12 {
                a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
            } else if p.is_infinite() {
                (a / b).max((1.0 - a) / (1.0 - b)).ln()
            } else {
                (a.powf(p) * b.powf(1.0 - p) + (1.0 - a).powf(p) * (1.0 - b).powf(1.0 - p)).ln() / (p - 1.0)
            }
        };
        for &(a, b) in &[(0.2, 0.5), (0.7, 0.3), (0.5, 0.9)] {
            for &p in &[0.5, 0.8, 1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                let d = renyi_with(&diag2(a, 1.0 - a), &diag2(b, 1.0 - b), &tr_plain, p, DEFAULT_TOL).unwrap();
                let c = classical(a, b, p);
                assert!((d.value - c).abs() < 1e-10, "a={a} b={b} p={p}: {} vs {c}", d.value);
            }
        }
    }

    #[test]
    fn renyi_monotone_in_p_for_states() {
        let mut rng = mmalg::rng_from_seed(8);
        for _ in 0..5 {
            let g = linalg::random_complex_matrix(&mut rng, 3, 3);
            let mut rho = &g * g.adjoint();
            rho = rho.unscale(linalg::trace_of(&rho).re);
            let h = linalg::random_complex_matrix(&mut rng, 3, 3);
            let mut sigma = &h * h.adjoint();
            sigma = sigma.unscale(linalg::trace_of(&sigma).re);
            let grid = [0.5, 0.8, 1.0, 1.5, 2.0, 4.0, f64::INFINITY];
            let mut prev = f64::NEG_INFINITY;
            for &p in &grid {
                let d = renyi_with(&rho, &sigma, &tr_plain, p, DEFAULT_TOL).unwrap();
                assert!(d.value >= prev - 1e-9, "not monotone at p={p}");
                prev = d.value;
            }
        }
    }

    fn tower_for(dims: &[usize], adj: &[Vec<usize>], t: Vec<f64>) -> Tower {
        Tower::build(
            build_inclusion(dims, adj, TraceSpec::Explicit { weights: t, normalize: false }).unwrap(),
        )
        .unwrap()
    }

    fn id_and_e(t: &Tower) -> (FourierMultiplier, FourierMultiplier) {
        let id = AlgebraMap::identity(&t.inclusion.big);
        let e = AlgebraMap::cond_exp_channel(&t.inclusion);
        (
            chan::fourier_multiplier(t, &id).unwrap(),
            chan::fourier_multiplier(t, &e).unwrap(),
        )
    }

    #[test]
    fn s_tau_closed_forms() {
        // ℂ ⊂ M₂: S_τ(id, E) = log 4
        let t = tower_for(&[1], &[vec![2]], vec![0.5]);
        let (idh, eh) = id_and_e(&t);
        let s = s_tau(&t, &idh, &eh).unwrap();
        assert!((s.value - 4f64.ln()).abs() < 1e-9, "{}", s.value);
        assert!((upper_bound_value(&t).unwrap() - 4f64.ln()).abs() < 1e-12);

        // ℂ ⊂ ℂ², t = (1/3,2/3): S_τ = log 3 − (2/3) log 2
        let t = tower_for(&[1], &[vec![1, 1]], vec![1.0 / 3.0, 2.0 / 3.0]);
        let (idh, eh) = id_and_e(&t);
        let s = s_tau(&t, &idh, &eh).unwrap();
        let expect = 3f64.ln() - (2.0 / 3.0) * 2f64.ln();
        assert!((s.value - expect).abs() < 1e-9, "{} vs {expect}", s.value);

        // Φ = Ψ → 0
        let s = s_tau(&t, &eh, &eh).unwrap();
        assert!(s.value.abs() < 1e-10);
    }

    #[test]
    fn h_closed_form_examples() {
        let inc = build_inclusion(&[1], &[vec![2]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap();
        assert!((h_closed_form_subalgebra(&inc) - 2f64.ln()).abs() < 1e-12);
        assert!((equality_gap(&inc) - 2f64.ln()).abs() < 1e-12);

        let inc = build_inclusion(&[1, 1], &[vec![1], vec![1]], TraceSpec::Explicit { weights: vec![0.5], normalize: false }).unwrap();
        assert!((h_closed_form_subalgebra(&inc) - 2f64.ln()).abs() < 1e-12);
        assert!(equality_gap(&inc).abs() < 1e-14);

        let inc = build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Explicit { weights: vec![1.0 / 3.0, 2.0 / 3.0], normalize: false }).unwrap();
        let expect = 3f64.ln() - (2.0 / 3.0) * 2f64.ln();
        assert!((h_closed_form_subalgebra(&inc) - expect).abs() < 1e-12);
        assert!(equality_gap(&inc).abs() < 1e-14);
    }

    #[test]
    fn gap_identity() {
        for (dims, adj, t) in [
            (vec![1usize], vec![vec![2usize]], vec![0.5]),
            (vec![1, 1], vec![vec![1], vec![1]], vec![0.5]),
            (vec![1], vec![vec![1, 1]], vec![1.0 / 3.0, 2.0 / 3.0]),
            (vec![1, 2], vec![vec![1, 1], vec![1, 0]], vec![0.2 / 0.75, 0.15 / 0.75]),
        ] {
            let tower = tower_for(&dims, &adj, t);
            let ub = upper_bound_value(&tower).unwrap();
            let h = h_closed_form_subalgebra(&tower.inclusion);
            let gap = equality_gap(&tower.inclusion);
            assert!((ub - h - gap).abs() < 1e-9, "gap identity broken: {ub} {h} {gap}");
        }
    }

    #[test]
    fn s_p_worked_identities() {
        // downward instance ℂ² ⊂ M₂
        let t = tower_for(&[1, 1], &[vec![1], vec![1]], vec![0.5]);
        let (idh, eh) = id_and_e(&t);
        // S_∞ raw = log[ℳ:𝒩] = −log λ
        let v = s_p(&t, &idh, &eh, f64::INFINITY).unwrap();
        assert!((v.raw - t.delta_sq().ln()).abs() < 1e-9);
        assert!((v.normalized - t.delta_sq().ln()).abs() < 1e-9);
        // S_1 delta = S_τ = H
        let v1 = s_p(&t, &idh, &eh, 1.0).unwrap();
        let h = h_closed_form_subalgebra(&t.inclusion);
        assert!((v1.delta - h).abs() < 1e-9, "{} vs {h}", v1.delta);
        assert!((v1.normalized - h).abs() < 1e-9);
        // S_{1/2} normalized = 2logδ − log τ(Δ₀⁻¹)
        let v12 = s_p(&t, &idh, &eh, 0.5).unwrap();
        let tau_d0_inv = mmalg::trace(&t.inclusion.trace_big, &t.ops.delta0_inv).unwrap().re;
        let expect = t.delta_sq().ln() - tau_d0_inv.ln();
        assert!((v12.normalized - expect).abs() < 1e-9, "{} vs {expect}", v12.normalized);
    }

    #[test]
    fn s_one_minus_s_half_difference_formula() {
        // For ⊕M_{n_k} ⊂ M_m: S₁ − S_{1/2} = Σ_k (n_k a_k/m) log(a_k/n_k)
        // + log(Σ n_k² / m); the correction term vanishes exactly when
        // a_k ≡ n_k (and only then is the bare sum the whole difference).
        for (dims, adj) in [
            (vec![1usize], vec![vec![2usize]]),
            (vec![1, 1], vec![vec![1], vec![1]]),
            (vec![1, 1], vec![vec![2], vec![1]]),
            (vec![1, 2], vec![vec![2], vec![1]]),
            (vec![2], vec![vec![1]]),
        ] {
            let m: usize = dims.iter().zip(&adj).map(|(&n, a)| n * a[0]).sum();
            let t = tower_for(&dims, &adj, vec![1.0 / m as f64]);
            let (idh, eh) = id_and_e(&t);
            let s1 = s_p(&t, &idh, &eh, 1.0).unwrap().normalized;
            let sh = s_p(&t, &idh, &eh, 0.5).unwrap().normalized;
            let bare: f64 = dims
                .iter()
                .zip(&adj)
                .map(|(&n, a)| (n * a[0]) as f64 / m as f64 * (a[0] as f64 / n as f64).ln())
                .sum();
            let sum_n2: usize = dims.iter().map(|&n| n * n).sum();
            let corrected = bare + (sum_n2 as f64 / m as f64).ln();
            assert!(
                (s1 - sh - corrected).abs() < 1e-8,
                "dims {dims:?} adj {adj:?}: S1-S1/2 = {} vs {corrected}",
                s1 - sh
            );
            if dims.iter().zip(&adj).all(|(&n, a)| a[0] == n) {
                assert!((s1 - sh - bare).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn s_half_formula_on_factor_instances() {
        // 𝒩 = ⊕ M_{n_k} ⊂ M_m: S_{1/2}(id,E) = log(m²/Σn_k²) (normalized variant)
        for (dims, adj) in [
            (vec![1usize], vec![vec![2usize]]),
            (vec![1, 1], vec![vec![1], vec![1]]),
            (vec![2], vec![vec![1]]),
            (vec![1, 2], vec![vec![2], vec![1]]),
        ] {
            let m: usize = dims.iter().zip(&adj).map(|(&n, a)| n * a[0]).sum();
            let t = tower_for(&dims, &adj, vec![1.0 / m as f64]);
            let (idh, eh) = id_and_e(&t);
            let v = s_p(&t, &idh, &eh, 0.5).unwrap();
            let sum_n2: usize = dims.iter().map(|&n| n * n).sum();
            let expect = ((m * m) as f64 / sum_n2 as f64).ln();
            assert!((v.normalized - expect).abs() < 1e-8, "dims {dims:?}: {} vs {expect}", v.normalized);
        }
    }

    #[test]
    fn h_downward_matches_s_tau() {
        let base = build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Explicit { weights: vec![0.5, 0.5], normalize: false }).unwrap();
        let dt = tower::extend_upward(&base).unwrap();
        let t = &dt.tower;
        let id = AlgebraMap::identity(&t.inclusion.big);
        let e = AlgebraMap::cond_exp_channel(&t.inclusion);
        let hd = h_downward(&dt, &id, &e).unwrap();
        let (idh, eh) = (
            chan::fourier_multiplier(t, &id).unwrap(),
            chan::fourier_multiplier(t, &e).unwrap(),
        );
        let st = s_tau(t, &idh, &eh).unwrap();
        assert!((hd.value - st.value).abs() < 1e-8, "{} vs {}", hd.value, st.value);
        assert!((hd.value - h_closed_form_subalgebra(&t.inclusion)).abs() < 1e-8);
        assert!((hd.value - 2f64.ln()).abs() < 1e-8);

        // random majorized pairs
        let sampler = ChannelSampler { tower: t };
        let mut rng = mmalg::rng_from_seed(10);
        for _ in 0..5 {
            let psi = sampler.random_cp(&mut rng, true, false).unwrap();
            let phi = sampler.random_cp(&mut rng, false, false).unwrap();
            let hd = h_downward(&dt, &phi, &psi).unwrap();
            let st = s_tau(
                t,
                &chan::fourier_multiplier(t, &phi).unwrap(),
                &chan::fourier_multiplier(t, &psi).unwrap(),
            )
            .unwrap();
            assert!(
                (hd.value - st.value).abs() < 1e-8 * (1.0 + st.value.abs()),
                "{} vs {}",
                hd.value,
                st.value
            );
        }
    }

    #[test]
    fn partition_search_reaches_h_on_downward() {
        let base = build_inclusion(&[1], &[vec![1, 1]], TraceSpec::Markov).unwrap();
        let dt = tower::extend_upward(&base).unwrap();
        let t = &dt.tower;
        let id = AlgebraMap::identity(&t.inclusion.big);
        let e = AlgebraMap::cond_exp_channel(&t.inclusion);
        let out = h_partition_search(t, Some(&dt), &id, &e, 200, 42).unwrap();
        let h = 2f64.ln();
        assert!(out.best >= 0.95 * h, "search reached only {} of {h}", out.best);
        // never exceeds s_tau
        let (idh, eh) = (
            chan::fourier_multiplier(t, &id).unwrap(),
            chan::fourier_multiplier(t, &e).unwrap(),
        );
        let st = s_tau(t, &idh, &eh).unwrap();
        assert!(out.best <= st.value + 1e-8);
    }

    #[test]
    fn partition_refinement_never_decreases() {
        // splitting x into x^{1/2} p x^{1/2} + x^{1/2}(1−p)x^{1/2} cannot
        // decrease the functional (joint subadditivity)
        let t = tower_for(&[1, 1], &[vec![1], vec![1]], vec![0.5]);
        let sampler = ChannelSampler { tower: &t };
        let mut rng = mmalg::rng_from_seed(12);
        let psi = sampler.random_cp(&mut rng, true, true).unwrap();
        let phi = sampler.random_cp(&mut rng, false, false).unwrap();
        let w = &t.inclusion.trace_big;
        let g = mmalg::random_self_adjoint(&mut rng, &t.inclusion.big);
        let projs = spectral_partition(&g).unwrap();
        let coarse = PartitionOfUnity { elements: vec![AlgebraElement::identity(&t.inclusion.big)] };
        let fine = PartitionOfUnity { elements: projs };
        let v0 = partition_value(&phi, &psi, w, &coarse).unwrap();
        let v1 = partition_value(&phi, &psi, w, &fine).unwrap();
        assert!(v1 >= v0 - 1e-9, "{v1} < {v0}");
    }

    #[test]
    fn araki_equals_s_tau_for_bimodule_pairs() {
        let t = tower_for(&[1, 1], &[vec![1], vec![1]], vec![0.5]);
        let sampler = ChannelSampler { tower: &t };
        let mut rng = mmalg::rng_from_seed(17);
        let one = AlgebraElement::identity(&t.inclusion.big);
        for _ in 0..3 {
            let psi = sampler.random_cp(&mut rng, true, false).unwrap();
            let phi = sampler.random_cp(&mut rng, false, false).unwrap();
            let a = araki(&phi, &psi, &t.inclusion.trace_big, &one).unwrap();
            let st = s_tau(
                &t,
                &chan::fourier_multiplier(&t, &phi).unwrap(),
                &chan::fourier_multiplier(&t, &psi).unwrap(),
            )
            .unwrap();
            assert!(
                (a.value - st.value).abs() < 1e-8 * (1.0 + st.value.abs()),
                "araki {} vs s_tau {}",
                a.value,
                st.value
            );
        }
    }

    #[test]
    fn araki_reference_independence() {
        let t = tower_for(&[1, 1], &[vec![1], vec![1]], vec![0.5]);
        let sampler = ChannelSampler { tower: &t };
        let mut rng = mmalg::rng_from_seed(23);
        let one = AlgebraElement::identity(&t.inclusion.big);
        let e = AlgebraMap::cond_exp_channel(&t.inclusion);
        let corr_e = chan::correspondence(&e, &t.inclusion.trace_big, &one).unwrap();
        for _ in 0..3 {
            let psi = sampler.random_cp(&mut rng, true, false).unwrap();
            let phi = sampler.random_cp(&mut rng, false, false).unwrap();
            let direct = araki(&phi, &psi, &t.inclusion.trace_big, &one).unwrap();
            // Φ ≼ Ψ ≼ E_𝒩: compute inside the reference correspondence
            let via_ref = araki_with_reference(&phi, &psi, &corr_e).unwrap();
            assert!(
                (direct.value - via_ref.value).abs() < 1e-8 * (1.0 + direct.value.abs()),
                "{} vs {}",
                direct.value,
                via_ref.value
            );
        }
    }

    #[test]
    fn araki_zero_on_equal_maps() {
        let a = mmalg::MultiMatrixAlgebra::new(vec![2]).unwrap();
        let b = mmalg::MultiMatrixAlgebra::new(vec![1, 1]).unwrap();
        let mut rng = mmalg::rng_from_seed(31);
        let psi = chan::random_cp_map(&mut rng, &a, &b, 6, true).unwrap();
        let wb = TraceWeights::tracial(&b);
        let state = mmalg::random_faithful_state(&mut rng, &b, &wb).unwrap();
        let d = araki(&psi, &psi, &wb, &state).unwrap();
        assert!(d.value.abs() < 1e-9);
    }
}
