//! Contractions, exponential products and the brackets built from them.
//!
//! All kernels act in field coordinates: `∂̃_G = Σ_{u,v} G(u,v) ∂_{x_u} ⊗ ∂_{x_v}`
//! and `∂_G = Σ_{u,v} G(u,v) ∂_{x_u} ∂_{x_v}`. Since `O_f = w Σ f x`, one
//! contraction of two linear generators gives the weighted double pairing
//! `⟨f, G g⟩_w = w² Σ f G g`.

use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hbar::HbarPoly;
use crate::observables::{factorial, Monomial, PolyObservable};
use crate::propagators::{KernelKind, Kernels, PropagatorKernel};
use crate::theory::FreeField;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Distinct sites of a sorted index list with their multiplicities.
fn runs(sym: &[u32]) -> Vec<(u32, usize)> {
    let mut out: Vec<(u32, usize)> = Vec::with_capacity(sym.len());
    for &s in sym {
        match out.last_mut() {
            Some((t, m)) if *t == s => *m += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

fn remove_one(m: &Monomial, s: u32) -> Monomial {
    let mut out = m.clone();
    let pos = out.sym.iter().position(|&v| v == s).expect("site present");
    out.sym.remove(pos);
    out
}

type BiTerms = FxHashMap<(Monomial, Monomial), HbarPoly>;

fn bi_add(map: &mut BiTerms, key: (Monomial, Monomial), v: HbarPoly) {
    if v.is_zero() {
        return;
    }
    let e = map.entry(key).or_default();
    *e += v;
}

/// One application of `scale · ∂̃_G` to a tensor product of observables.
fn cross_step(g: &PropagatorKernel, scale: Complex64, bi: &BiTerms) -> BiTerms {
    let mut out = BiTerms::default();
    for ((a, b), coef) in bi {
        let ra = runs(&a.sym);
        let rb = runs(&b.sym);
        for &(u, mu) in &ra {
            for &(v, mv) in &rb {
                let k = g.get(u as usize, v as usize);
                if k == c(0.0) {
                    continue;
                }
                let f = scale * k * (mu * mv) as f64;
                bi_add(&mut out, (remove_one(a, u), remove_one(b, v)), coef.scale(f));
            }
        }
    }
    out
}

/// `m` applied to a tensor-product expansion, times `factor`.
fn collapse(proto: &PolyObservable, bi: &BiTerms, factor: HbarPoly) -> Result<PolyObservable> {
    let mut out = proto.zero_like();
    let mut keys: Vec<_> = bi.iter().collect();
    keys.sort_by(|x, y| x.0.cmp(y.0));
    for ((a, b), coef) in keys {
        if let Some((sign, m)) = a.mul(b) {
            out.add_term_checked(m, (*coef * factor).scale(c(sign)))?;
        }
    }
    Ok(out)
}

fn tensor(a: &PolyObservable, b: &PolyObservable) -> BiTerms {
    let mut bi = BiTerms::default();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            bi_add(&mut bi, (ma.clone(), mb.clone()), *ca * *cb);
        }
    }
    bi
}

fn joint_proto(a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    let t = a.truncation().max(b.truncation());
    a.zero_like().with_truncation(t)
}

/// `m ∘ (scale · ∂̃_G)(A ⊗ B)`: one contraction, no ℏ.
pub fn cross_contract(
    g: &PropagatorKernel,
    scale: Complex64,
    a: &PolyObservable,
    b: &PolyObservable,
) -> Result<PolyObservable> {
    let bi = cross_step(g, scale, &tensor(a, b));
    collapse(&joint_proto(a, b)?, &bi, HbarPoly::real(1.0))
}

/// `m ∘ exp(ℏ · scale · ∂̃_G)(A ⊗ B)`.
pub fn exp_product(
    g: &PropagatorKernel,
    scale: Complex64,
    a: &PolyObservable,
    b: &PolyObservable,
) -> Result<PolyObservable> {
    let proto = joint_proto(a, b)?;
    let h_max = proto.truncation().h_max;
    let mut out = a.multiply(b)?;
    let mut bi = tensor(a, b);
    let mut j = 0;
    loop {
        j += 1;
        if j > h_max {
            break;
        }
        bi = cross_step(g, scale, &bi);
        if bi.is_empty() {
            break;
        }
        let factor = HbarPoly::monomial(c(1.0 / factorial(j)), j);
        out = out.add(&collapse(&proto, &bi, factor)?);
    }
    Ok(out)
}

/// `scale · ∂_G A`, contracting two even slots of each term.
pub fn self_contract(g: &PropagatorKernel, scale: Complex64, a: &PolyObservable) -> PolyObservable {
    let mut out = a.zero_like();
    for (m, coef) in a.sorted_terms() {
        let r = runs(&m.sym);
        for &(u, mu) in &r {
            for &(v, mv) in &r {
                let k = g.get(u as usize, v as usize);
                if k == c(0.0) {
                    continue;
                }
                let (count, reduced) = if u == v {
                    if mu < 2 {
                        continue;
                    }
                    ((mu * (mu - 1)) as f64, remove_one(&remove_one(m, u), u))
                } else {
                    ((mu * mv) as f64, remove_one(&remove_one(m, u), v))
                };
                out.add_term(reduced, coef.scale(scale * k * count));
            }
        }
    }
    out
}

/// `exp((ℏ/2) · scale · ∂_G) A`. The inverse is `alpha(G, −scale, ·)`.
pub fn alpha(g: &PropagatorKernel, scale: Complex64, a: &PolyObservable) -> PolyObservable {
    let h_max = a.truncation().h_max;
    let mut out = a.clone();
    let mut cur = a.clone();
    for j in 1..=h_max {
        cur = self_contract(g, scale, &cur).mul_hbar(&HbarPoly::monomial(c(0.5 / j as f64), 1));
        if cur.is_zero() {
            break;
        }
        out = out.add(&cur);
    }
    out
}

/// Star product: exponential product with kernel `(i/2) G^C`.
pub fn star(k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    exp_product(&k.causal, I * 0.5, a, b)
}

/// Time-ordered product: exponential product with kernel `i G^D`.
pub fn time_ordered(k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    exp_product(&k.dirac, I, a, b)
}

/// The time-ordered product as the twist `α_{iG^D}(α⁻¹A · α⁻¹B)`.
pub fn time_ordered_via_alpha(k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    let ai = alpha(&k.dirac, -I, a);
    let bi = alpha(&k.dirac, -I, b);
    Ok(alpha(&k.dirac, I, &ai.multiply(&bi)?))
}

/// `[A, B]_⋆ = A ⋆ B − B ⋆ A`
pub fn star_commutator(k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    Ok(star(k, a, b)?.sub(&star(k, b, a)?))
}

/// Peierls bracket as a polynomial observable, `m ∘ ∂̃_{G^C}`.
pub fn peierls_observable(k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    cross_contract(&k.causal, c(1.0), a, b)
}

/// Peierls bracket at a configuration: `⟨A^{(1)}(φ), G^C B^{(1)}(φ)⟩_w`.
pub fn peierls(ff: &FreeField, a: &PolyObservable, b: &PolyObservable, phi: &[Complex64]) -> Result<HbarPoly> {
    if a.max_ext_degree() > 0 || b.max_ext_degree() > 0 {
        return Err(Error::PreconditionViolated(
            "the Peierls bracket is defined on functions (no odd slots)".into(),
        ));
    }
    let w = ff.weight();
    let da = a.derivative(phi, 1);
    let db = b.derivative(phi, 1);
    let mut acc = HbarPoly::zero();
    for (u, cu) in &da.entries {
        for (v, cv) in &db.entries {
            let g = ff.kernels.causal.get(u[0], v[0]);
            if g != c(0.0) {
                acc += (*cu * *cv).scale(g * w * w);
            }
        }
    }
    Ok(acc)
}

/// Degree +1 bracket pairing an odd slot of one argument against an even
/// slot of the other:
/// `{a, b} = (1/w) Σ_s [(−1)^{k_a+1} (∂_{θ_s} a)(∂_{x_s} b) − (∂_{x_s} a)(∂_{θ_s} b)]`.
/// On generators `{O^‡_g, O_f} = ⟨g, f⟩_w`.
pub fn shifted_bracket(a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
    let proto = joint_proto(a, b)?;
    let mut out = proto.zero_like();
    let inv_w = 1.0 / a.weight();
    for (ma, ca) in a.sorted_terms() {
        let parity = if ma.k() % 2 == 0 { -1.0 } else { 1.0 };
        for (mb, cb) in b.sorted_terms() {
            let prod = *ca * *cb;
            for &s in &ma.ext {
                if let (Some((sa, ra)), Some((fb, rb))) = (ma.d_theta(s), mb.d_x(s)) {
                    if let Some((sign, m)) = ra.mul(&rb) {
                        out.add_term_checked(m, prod.scale(c(parity * sa * fb * sign * inv_w)))?;
                    }
                }
            }
            for &s in &mb.ext {
                if let (Some((fa, ra)), Some((sb, rb))) = (ma.d_x(s), mb.d_theta(s)) {
                    if let Some((sign, m)) = ra.mul(&rb) {
                        out.add_term_checked(m, prod.scale(c(-fa * sb * sign * inv_w)))?;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SigmaResult {
    pub sigma_of: PolyObservable,
    pub bracket_value: Complex64,
    pub peierls_value: Complex64,
    pub matches_peierls: bool,
}

/// `σ(O_f) = O^‡_{G^C w f}` on the full grid, paired against `O_g` through the
/// shifted bracket and compared with `{O_g, O_f}` from the Peierls bracket.
pub fn sigma_unshifted(ff: &FreeField, f: &[Complex64], g: &[Complex64]) -> Result<SigmaResult> {
    let w = ff.weight();
    let gcf = ff.kernels.causal.act(f, w);
    let sigma_of = PolyObservable::vector_unchecked(&ff.lattice, ff.trunc, &gcf)?;
    let og = ff.linear(g)?;
    let bracket = shifted_bracket(&sigma_of, &og)?;
    let bracket_value = bracket.coefficient(&Monomial::one()).coeff(0);
    let zero = vec![c(0.0); ff.n_sites()];
    let peierls_value = peierls(ff, &og, &ff.linear(f)?, &zero)?.coeff(0);
    let scale = bracket_value.norm().max(peierls_value.norm()).max(1.0);
    Ok(SigmaResult {
        matches_peierls: (bracket_value - peierls_value).norm() <= 1e-12 * scale,
        sigma_of,
        bracket_value,
        peierls_value,
    })
}

/// Time-ordered `n`-point function `(O_{f1} ·_T ⋯ ·_T O_{fn})(φ = 0)`.
pub fn n_point(ff: &FreeField, fs: &[Vec<Complex64>]) -> Result<HbarPoly> {
    let Some((first, rest)) = fs.split_first() else {
        return Ok(HbarPoly::real(1.0));
    };
    let mut acc = ff.linear(first)?;
    for f in rest {
        acc = time_ordered(&ff.kernels, &acc, &ff.linear(f)?)?;
    }
    Ok(acc.coefficient(&Monomial::one()))
}

/// A bilinear product selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProductSpec {
    Pointwise,
    Exponential { kernel: KernelKind, scale: (f64, f64) },
    Star,
    TimeOrdered,
}

impl ProductSpec {
    /// Star and time-ordered products as exponential products.
    pub fn resolve(self) -> Self {
        match self {
            Self::Star => Self::Exponential {
                kernel: KernelKind::Causal,
                scale: (0.0, 0.5),
            },
            Self::TimeOrdered => Self::Exponential {
                kernel: KernelKind::Dirac,
                scale: (0.0, 1.0),
            },
            other => other,
        }
    }

    pub fn apply(self, k: &Kernels, a: &PolyObservable, b: &PolyObservable) -> Result<PolyObservable> {
        match self.resolve() {
            Self::Pointwise => a.multiply(b),
            Self::Exponential { kernel, scale } => exp_product(k.get(kernel), Complex64::new(scale.0, scale.1), a, b),
            Self::Star | Self::TimeOrdered => unreachable!("resolved above"),
        }
    }
}
