//! Koszul differential, BV Laplacian, quantum differential and cohomology.
//!
//! Odd generators sit on interior sites. The Koszul differential inserts the
//! equation of motion, `δθ_s = (P x)(s)`, extended as a derivation acting from
//! the left, so `δ(O^‡_g) = O_{Pᵀg}`. The Laplacian pairs one odd slot with
//! one even slot at the same site,
//! `△(m θ_{e_0}⋯θ_{e_{k−1}}) = (1/w) Σ_i (−1)^i (∂m/∂x_{e_i}) θ_{E∖e_i}`,
//! and the quantum differential is `ŝ = δ − iℏ△`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hbar::HbarPoly;
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, SparseMatrix};
use crate::observables::{random_observable, theta_sites, Monomial, PolyObservable, SymIdx, Truncation};
use crate::products::{alpha, shifted_bracket, star, time_ordered};
use crate::propagators::{DiscreteOperator, PropagatorKernel};
use crate::report::{CheckRecord, CheckReport};
use crate::theory::FreeField;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest vector-space dimension handed to a dense SVD.
pub const DENSE_CAP: usize = 4000;
/// Largest number of unknowns in a witness solve.
pub const WITNESS_CAP: usize = 400_000;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn sign(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn insert_sorted(sym: &SymIdx, s: u32) -> SymIdx {
    let mut out = sym.clone();
    let pos = out.partition_point(|&v| v <= s);
    out.insert(pos, s);
    out
}

/// `δ` of a single monomial with unit coefficient.
pub fn koszul_monomial(op: &DiscreteOperator, m: &Monomial) -> Vec<(Monomial, f64)> {
    let mut out = Vec::new();
    for (i, &e) in m.ext.iter().enumerate() {
        let mut ext = m.ext.clone();
        ext.remove(i);
        for &(j, p) in op.row(e as usize) {
            out.push((
                Monomial {
                    sym: insert_sorted(&m.sym, j as u32),
                    ext: ext.clone(),
                },
                sign(i) * p,
            ));
        }
    }
    out
}

/// `△` of a single monomial with unit coefficient.
pub fn laplacian_monomial(m: &Monomial, weight: f64) -> Vec<(Monomial, f64)> {
    let mut out = Vec::new();
    for (i, &e) in m.ext.iter().enumerate() {
        if let Some((mult, mut reduced)) = m.d_x(e) {
            reduced.ext.remove(i);
            out.push((reduced, sign(i) * mult / weight));
        }
    }
    out
}

/// Koszul differential `δ_S`.
pub fn koszul_differential(op: &DiscreteOperator, a: &PolyObservable) -> Result<PolyObservable> {
    let mut out = a.zero_like();
    for (m, coef) in a.sorted_terms() {
        for (mm, v) in koszul_monomial(op, m) {
            out.add_term_checked(mm, coef.scale(c(v)))?;
        }
    }
    Ok(out)
}

/// `δ_S` as contraction with the equation of motion,
/// `Σ_e (P x)(e) · ∂_{θ_e} A`, built from generic derivatives and products.
pub fn koszul_via_contraction(op: &DiscreteOperator, a: &PolyObservable) -> Result<PolyObservable> {
    let mut out = a.zero_like();
    for e in a.ext_sites() {
        let mut eom = a.zero_like();
        for &(j, p) in op.row(e) {
            eom.add_term(Monomial::x(j), HbarPoly::real(p));
        }
        out = out.add(&eom.multiply(&a.d_theta(e))?);
    }
    Ok(out)
}

/// BV Laplacian `△`.
pub fn bv_laplacian(a: &PolyObservable) -> PolyObservable {
    let mut out = a.zero_like();
    for (m, coef) in a.sorted_terms() {
        for (mm, v) in laplacian_monomial(m, a.weight()) {
            out.add_term(mm, coef.scale(c(v)));
        }
    }
    out
}

/// `ŝ = δ_S − iℏ△`.
pub fn quantum_differential(op: &DiscreteOperator, a: &PolyObservable) -> Result<PolyObservable> {
    let lap = bv_laplacian(a).mul_hbar(&HbarPoly::monomial(-I, 1));
    Ok(koszul_differential(op, a)?.add(&lap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Differential {
    Classical,
    Quantum,
}

impl Differential {
    pub fn apply(self, op: &DiscreteOperator, a: &PolyObservable) -> Result<PolyObservable> {
        match self {
            Self::Classical => koszul_differential(op, a),
            Self::Quantum => quantum_differential(op, a),
        }
    }

    /// Image of `ℏ^j m` as `(monomial, ℏ-order, coefficient)` triples.
    fn image(self, op: &DiscreteOperator, weight: f64, m: &Monomial, j: usize) -> Vec<(Monomial, usize, Complex64)> {
        let mut out: Vec<_> = koszul_monomial(op, m).into_iter().map(|(mm, v)| (mm, j, c(v))).collect();
        if self == Self::Quantum {
            out.extend(laplacian_monomial(m, weight).into_iter().map(|(mm, v)| (mm, j + 1, -I * v)));
        }
        out
    }
}

/// Applies `f` to every pair of homogeneous odd components `(a_i, b_j)` and
/// sums the results; `f` receives the odd degree of `a_i`.
fn graded_bilinear(
    a: &PolyObservable,
    b: &PolyObservable,
    mut f: impl FnMut(&PolyObservable, &PolyObservable, usize) -> Result<PolyObservable>,
) -> Result<PolyObservable> {
    let mut out = a.zero_like();
    for ka in 0..=a.max_ext_degree() {
        let ai = a.ext_component(ka);
        if ai.is_zero() {
            continue;
        }
        out = out.add(&f(&ai, b, ka)?);
    }
    Ok(out)
}

/// Settings for [`verify_algebraic_identities`].
#[derive(Debug, Clone, Copy)]
pub struct IdentityConfig {
    pub samples: usize,
    pub tolerance: f64,
    /// Flips the sign of △ inside the Leibniz check; a negative control.
    pub corrupt_laplacian: bool,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            tolerance: 1e-10,
            corrupt_laplacian: false,
        }
    }
}

/// Residuals of the BV identities on one sample pair.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IdentityResiduals {
    pub delta_squared: f64,
    pub laplacian_squared: f64,
    pub anticommutator: f64,
    pub quantum_squared: f64,
    pub bv_leibniz: f64,
    pub bd_relation: f64,
    pub star_derivation: f64,
    pub t_defect_overlap: f64,
    pub t_defect_disjoint: f64,
    pub t_bracket_disjoint: f64,
}

impl IdentityResiduals {
    fn max_with(&mut self, o: &Self) {
        self.delta_squared = self.delta_squared.max(o.delta_squared);
        self.laplacian_squared = self.laplacian_squared.max(o.laplacian_squared);
        self.anticommutator = self.anticommutator.max(o.anticommutator);
        self.quantum_squared = self.quantum_squared.max(o.quantum_squared);
        self.bv_leibniz = self.bv_leibniz.max(o.bv_leibniz);
        self.bd_relation = self.bd_relation.max(o.bd_relation);
        self.star_derivation = self.star_derivation.max(o.star_derivation);
        self.t_defect_overlap = self.t_defect_overlap.max(o.t_defect_overlap);
        self.t_defect_disjoint = self.t_defect_disjoint.max(o.t_defect_disjoint);
        self.t_bracket_disjoint = self.t_bracket_disjoint.max(o.t_bracket_disjoint);
    }
}

/// `δ(X·_T Y) − δX·_T Y − (−1)^{k} X·_T δY` and `−iℏ α((−1)^{k+1}{α⁻¹X, α⁻¹Y})`.
pub fn time_ordered_leibniz_defect(
    ff: &FreeField,
    x: &PolyObservable,
    y: &PolyObservable,
) -> Result<(PolyObservable, PolyObservable)> {
    let k = &ff.kernels;
    let op = &ff.op;
    let lhs = graded_bilinear(x, y, |xi, y, kx| {
        let t = koszul_differential(op, &time_ordered(k, xi, y)?)?;
        let a = time_ordered(k, &koszul_differential(op, xi)?, y)?;
        let b = time_ordered(k, xi, &koszul_differential(op, y)?)?.scale(c(sign(kx)));
        Ok(t.sub(&a).sub(&b))
    })?;
    let rhs = graded_bilinear(x, y, |xi, y, kx| {
        let xa = alpha(&k.dirac, -I, xi);
        let ya = alpha(&k.dirac, -I, y);
        let br = shifted_bracket(&xa, &ya)?.scale(c(sign(kx + 1)));
        Ok(alpha(&k.dirac, I, &br).mul_hbar(&HbarPoly::monomial(-I, 1)))
    })?;
    Ok((lhs, rhs))
}

fn sample_residuals(
    ff: &FreeField,
    a: &PolyObservable,
    b: &PolyObservable,
    far: &PolyObservable,
    corrupt: bool,
) -> Result<IdentityResiduals> {
    let op = &ff.op;
    let k = &ff.kernels;
    let mut r = IdentityResiduals::default();
    let scale = |x: &PolyObservable| 1.0 + x.max_abs();

    let da = koszul_differential(op, a)?;
    r.delta_squared = koszul_differential(op, &da)?.max_abs() / scale(a);
    let la = bv_laplacian(a);
    r.laplacian_squared = bv_laplacian(&la).max_abs() / scale(a);
    r.anticommutator = koszul_differential(op, &la)?.add(&bv_laplacian(&da)).max_abs() / scale(a);
    let sa = quantum_differential(op, a)?;
    r.quantum_squared = quantum_differential(op, &sa)?.max_abs() / scale(a);

    let lap = |x: &PolyObservable| {
        let l = bv_laplacian(x);
        if corrupt {
            l.neg()
        } else {
            l
        }
    };
    let ab = a.multiply(b)?;
    let rhs = graded_bilinear(a, b, |ai, b, ka| {
        let t1 = lap(ai).multiply(b)?;
        let t2 = ai.multiply(&lap(b))?.scale(c(sign(ka)));
        let t3 = shifted_bracket(ai, b)?.scale(c(sign(ka + 1)));
        Ok(t1.add(&t2).add(&t3))
    })?;
    r.bv_leibniz = bv_laplacian(&ab).distance(&rhs) / scale(&ab);

    let rhs = graded_bilinear(a, b, |ai, b, ka| {
        let t1 = quantum_differential(op, ai)?.multiply(b)?;
        let t2 = ai.multiply(&quantum_differential(op, b)?)?.scale(c(sign(ka)));
        let t3 = shifted_bracket(ai, b)?.scale(c(sign(ka + 1))).mul_hbar(&HbarPoly::monomial(-I, 1));
        Ok(t1.add(&t2).add(&t3))
    })?;
    r.bd_relation = quantum_differential(op, &ab)?.distance(&rhs) / scale(&ab);

    let st = star(k, a, b)?;
    let rhs = graded_bilinear(a, b, |ai, b, ka| {
        let t1 = star(k, &koszul_differential(op, ai)?, b)?;
        let t2 = star(k, ai, &koszul_differential(op, b)?)?.scale(c(sign(ka)));
        Ok(t1.add(&t2))
    })?;
    r.star_derivation = koszul_differential(op, &st)?.distance(&rhs) / scale(&st);

    let (lhs, rhs) = time_ordered_leibniz_defect(ff, a, b)?;
    r.t_defect_overlap = lhs.distance(&rhs) / scale(&ab);
    let (lhs, rhs) = time_ordered_leibniz_defect(ff, a, far)?;
    r.t_defect_disjoint = lhs.max_abs() / scale(&ab);
    r.t_bracket_disjoint = rhs.max_abs();
    Ok(r)
}

/// Random-sample verification of the BV, BD and derivation identities.
///
/// Samples live in a small interval of `ff`'s lattice; a second interval well
/// separated from the first supplies the disjoint-support case.
pub fn verify_algebraic_identities(ff: &FreeField, seed: u64, cfg: IdentityConfig) -> Result<CheckReport> {
    let lat = &ff.lattice;
    let (near, far) = sample_regions(lat)?;
    let trunc = ff.trunc;
    let mut worst = IdentityResiduals::default();
    for s in 0..cfg.samples as u64 {
        let base = seed.wrapping_mul(1_000_003).wrapping_add(4 * s);
        let a = random_observable(lat, trunc, &near, base, 2.min(trunc.d_max), 1.min(trunc.a_max))?;
        let b = random_observable(lat, trunc, &near, base + 1, 1.min(trunc.d_max), 1.min(trunc.a_max))?;
        let y = random_observable(lat, trunc, &far, base + 2, 1.min(trunc.d_max), 1.min(trunc.a_max))?;
        let r = sample_residuals(ff, &a, &b, &y, cfg.corrupt_laplacian)?;
        worst.max_with(&r);
    }
    let tol = cfg.tolerance;
    let mut rep = CheckReport::new(
        "bv_identities",
        serde_json::json!({ "lattice": lat.spec(), "samples": cfg.samples, "seed": seed, "corrupt_laplacian": cfg.corrupt_laplacian }),
    );
    let nil = tol.min(1e-12);
    rep.push(CheckRecord::numeric("nilpotent.delta", "δ_S² = 0", worst.delta_squared, nil));
    rep.push(CheckRecord::numeric("nilpotent.laplacian", "△² = 0", worst.laplacian_squared, nil));
    rep.push(CheckRecord::numeric("nilpotent.anticommutator", "δ_S△ + △δ_S = 0", worst.anticommutator, nil));
    rep.push(CheckRecord::numeric("nilpotent.quantum", "ŝ² = 0", worst.quantum_squared, nil));
    rep.push(CheckRecord::numeric(
        "leibniz.bv",
        "△(ab) = △a·b + (−1)^{|a|} a·△b + (−1)^{|a|+1}{a,b}",
        worst.bv_leibniz,
        tol,
    ));
    rep.push(CheckRecord::numeric(
        "leibniz.bd",
        "ŝ(ab) = ŝa·b + (−1)^{|a|} a·ŝb − iℏ(−1)^{|a|+1}{a,b}",
        worst.bd_relation,
        tol,
    ));
    rep.push(CheckRecord::numeric(
        "derivation.star",
        "δ_S(a⋆b) = δ_S a⋆b + (−1)^{|a|} a⋆δ_S b",
        worst.star_derivation,
        tol,
    ));
    rep.push(CheckRecord::numeric(
        "derivation.time_ordered_defect",
        "δ_S(X·_T Y) − δ_S X·_T Y − (−1)^{|X|} X·_T δ_S Y = −iℏ{X,Y}_T",
        worst.t_defect_overlap,
        tol,
    ));
    rep.push(CheckRecord::numeric(
        "derivation.time_ordered_disjoint",
        "disjoint supports: δ_S is a ·_T-derivation",
        worst.t_defect_disjoint,
        tol,
    ));
    rep.push(CheckRecord::numeric(
        "derivation.time_ordered_disjoint_bracket",
        "disjoint supports: {X,Y}_T = 0",
        worst.t_bracket_disjoint,
        0.0,
    ));
    Ok(rep)
}

/// Two separated sample regions with room for odd generators.
fn sample_regions(lat: &Lattice) -> Result<(Region, Region)> {
    let nt = lat.n_time();
    if nt < 16 {
        return Err(Error::PreconditionViolated("identity sampling needs n_time ≥ 16".into()));
    }
    let mid = nt / 3;
    let near = lat.make_region(crate::lattice::RegionKind::Interval { t0: mid - 2, t1: mid + 3 })?;
    let far_t = 2 * nt / 3;
    let far = lat.make_region(crate::lattice::RegionKind::Interval {
        t0: far_t,
        t1: far_t + 4,
    })?;
    Ok((near, far))
}

/// Checks `ŝ A = α⁻¹ δ_S α A` with `α = α_{iG}` for the given kernel.
pub fn intertwine_check(ff: &FreeField, kernel: &PropagatorKernel, seed: u64, samples: usize, tolerance: f64) -> Result<CheckReport> {
    let lat = &ff.lattice;
    let (near, _) = sample_regions(lat)?;
    let mut worst: f64 = 0.0;
    let mut linear_worst: f64 = 0.0;
    for s in 0..samples as u64 {
        let a = random_observable(lat, ff.trunc, &near, seed.wrapping_mul(7919).wrapping_add(s), 2, 1)?;
        let lhs = quantum_differential(&ff.op, &a)?;
        let rhs = alpha(kernel, -I, &koszul_differential(&ff.op, &alpha(kernel, I, &a))?);
        worst = worst.max(lhs.distance(&rhs) / (1.0 + lhs.max_abs()));
        let lin = a.ext_component(1).hbar_component(0);
        let lin: PolyObservable = {
            let mut o = lin.zero_like();
            for (m, v) in lin.terms().filter(|(m, _)| m.n() == 0) {
                o.add_term(m.clone(), *v);
            }
            o
        };
        let l1 = quantum_differential(&ff.op, &lin)?;
        let r1 = alpha(kernel, -I, &koszul_differential(&ff.op, &alpha(kernel, I, &lin))?);
        linear_worst = linear_worst.max(l1.distance(&r1));
    }
    let mut rep = CheckReport::new(
        "intertwining",
        serde_json::json!({ "lattice": lat.spec(), "kernel": kernel.kind, "samples": samples, "seed": seed }),
    );
    rep.push(CheckRecord::numeric(
        "intertwine.random",
        "ŝ = α_{iG}⁻¹ ∘ δ_S ∘ α_{iG}",
        worst,
        tolerance,
    ));
    rep.push(CheckRecord::numeric(
        "intertwine.linear",
        "ŝ O^‡_g = α⁻¹ δ_S α O^‡_g",
        linear_worst,
        0.0,
    ));
    Ok(rep)
}

/// A graded piece of the complex over a region.
#[derive(Debug, Clone)]
pub struct CochainBlock {
    /// `bases[k]` spans cohomological degree `−k`; entries are `(monomial, ℏ-order)`.
    pub bases: Vec<Vec<(Monomial, usize)>>,
    /// `maps[k]`: degree `−k` → degree `−k+1`, for `k ≥ 1` (`maps[0]` empty).
    pub maps: Vec<DMatrix<Complex64>>,
}

fn multisets(sites: &[usize], n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &s) in sites.iter().enumerate() {
        for mut rest in multisets(&sites[i..], n - 1) {
            rest.insert(0, s);
            out.push(rest);
        }
    }
    out
}

fn subsets(sites: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &s) in sites.iter().enumerate() {
        for mut rest in subsets(&sites[i + 1..], k - 1) {
            rest.insert(0, s);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// Monomials with `n` even slots on `sym` and `k` odd slots on `ext`.
pub fn monomial_basis(sym: &[usize], ext: &[usize], n: usize, k: usize) -> Vec<Monomial> {
    let mut out = Vec::new();
    let es = subsets(ext, k);
    for s in multisets(sym, n) {
        for e in &es {
            out.push(Monomial::new(&s, e).expect("distinct odd indices").1);
        }
    }
    out
}

fn space_dim(n_sym: usize, n_ext: usize, n: usize, k: usize) -> usize {
    binomial(n_sym + n - 1, n).saturating_mul(binomial(n_ext, k))
}

/// `(n, k, j)` triples spanning degree `−k` at total degree (or weight) `w`.
fn graded_triples(diff: Differential, total: usize, k: usize, h: usize) -> Vec<(usize, usize)> {
    match diff {
        Differential::Classical => {
            if k <= total {
                vec![(total - k, 0)]
            } else {
                Vec::new()
            }
        }
        Differential::Quantum => (0..=h)
            .filter(|&j| k + 2 * j <= total)
            .map(|j| (total - k - 2 * j, j))
            .collect(),
    }
}

/// Assembles the complex at total degree `total` (classical: `n + k`,
/// quantum: weight `n + k + 2j` with `j ≤ h`).
pub fn cochain_block(
    ff: &FreeField,
    region: &Region,
    diff: Differential,
    total: usize,
    h: usize,
) -> Result<CochainBlock> {
    let sym: Vec<usize> = region.sites().to_vec();
    let ext = theta_sites(&ff.lattice, region);
    let kmax = total.min(ext.len());
    let mut bases = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let size: usize = graded_triples(diff, total, k, h)
            .iter()
            .map(|&(n, _)| space_dim(sym.len(), ext.len(), n, k))
            .sum();
        if size > DENSE_CAP {
            return Err(Error::SizeCap { size, cap: DENSE_CAP });
        }
        let mut b = Vec::with_capacity(size);
        for (n, j) in graded_triples(diff, total, k, h) {
            b.extend(monomial_basis(&sym, &ext, n, k).into_iter().map(|m| (m, j)));
        }
        bases.push(b);
    }
    let mut maps = vec![DMatrix::zeros(0, 0)];
    for k in 1..=kmax {
        let rows: FxHashMap<&(Monomial, usize), usize> = bases[k - 1].iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut d = DMatrix::zeros(bases[k - 1].len(), bases[k].len());
        for (col, (m, j)) in bases[k].iter().enumerate() {
            for (mm, jj, v) in diff.image(&ff.op, ff.weight(), m, *j) {
                if jj > h {
                    continue;
                }
                let key = (mm, jj);
                let row = rows.get(&key).ok_or_else(|| {
                    Error::PreconditionViolated("differential leaves the region's basis".into())
                })?;
                d[(*row, col)] += v;
            }
        }
        maps.push(d);
    }
    Ok(CochainBlock { bases, maps })
}

impl CochainBlock {
    /// `dim H^{−k}` for each `k`.
    pub fn cohomology_dims(&self, rel_tol: f64) -> Vec<usize> {
        let ranks: Vec<usize> = self.maps.iter().map(|m| linalg::rank(m, rel_tol)).collect();
        (0..self.bases.len())
            .map(|k| {
                let out_rank = if k >= 1 { ranks[k] } else { 0 };
                let in_rank = ranks.get(k + 1).copied().unwrap_or(0);
                self.bases[k].len() - out_rank - in_rank
            })
            .collect()
    }

    /// Orthonormal coordinates on `H⁰`: columns spanning the complement of
    /// the image of the degree −1 map.
    pub fn h0_cokernel(&self, rel_tol: f64) -> DMatrix<Complex64> {
        let n0 = self.bases[0].len();
        match self.maps.get(1) {
            Some(d) => linalg::cokernel_basis(d, rel_tol),
            None => DMatrix::identity(n0, n0),
        }
    }

    /// Coordinates of the degree-0 part of `a` in `bases[0]` (ℏ-orders as
    /// recorded in the basis). Terms outside the basis are reported as `Err`.
    pub fn coordinates(&self, a: &PolyObservable) -> Result<Vec<Complex64>> {
        let index: FxHashMap<&(Monomial, usize), usize> = self.bases[0].iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut v = vec![c(0.0); self.bases[0].len()];
        for (m, coef) in a.terms() {
            if m.k() != 0 {
                continue;
            }
            for (j, z) in coef.coeffs().iter().enumerate() {
                if *z == c(0.0) {
                    continue;
                }
                let i = index.get(&(m.clone(), j)).ok_or(Error::NotContained)?;
                v[*i] += z;
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CohomologyBlockReport {
    /// `n + k` (classical) or `n + k + 2j` (quantum).
    pub total_degree: usize,
    pub hbar_order: Option<usize>,
    /// `dims[k] = dim H^{−k}`
    pub dims: Vec<usize>,
    pub space_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohomologyReport {
    pub differential: Differential,
    pub region_sites: usize,
    pub odd_sites: usize,
    pub rank_threshold: f64,
    pub blocks: Vec<CohomologyBlockReport>,
    /// `H⁰` representatives per total degree, as term lists.
    #[serde(skip)]
    pub h0_representatives: Vec<Vec<PolyObservable>>,
}

impl CohomologyReport {
    pub fn h0_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dims[0]).collect()
    }

    pub fn negative_degrees_vanish(&self) -> bool {
        self.blocks.iter().all(|b| b.dims.iter().skip(1).all(|&d| d == 0))
    }
}

/// Cohomology over `region` for total degrees `0..=up_to`. The quantum variant
/// truncates at ℏ-order `h`.
pub fn cohomology(
    ff: &FreeField,
    region: &Region,
    diff: Differential,
    up_to: usize,
    h: usize,
    rel_tol: f64,
) -> Result<CohomologyReport> {
    let mut blocks = Vec::new();
    let mut reps = Vec::new();
    let trunc = Truncation {
        d_max: up_to + 1,
        a_max: up_to.max(1),
        h_max: h.max(ff.trunc.h_max),
    };
    for total in 0..=up_to {
        let block = cochain_block(ff, region, diff, total, h)?;
        let dims = block.cohomology_dims(rel_tol);
        let q = block.h0_cokernel(rel_tol);
        let mut r = Vec::with_capacity(q.ncols());
        for col in 0..q.ncols() {
            let mut o = PolyObservable::zero(&ff.lattice, trunc);
            for (i, (m, j)) in block.bases[0].iter().enumerate() {
                let z = q[(i, col)].conj();
                if z.norm() > 1e-14 {
                    o.add_term(m.clone(), HbarPoly::monomial(z, *j));
                }
            }
            r.push(o);
        }
        reps.push(r);
        blocks.push(CohomologyBlockReport {
            total_degree: total,
            hbar_order: (diff == Differential::Quantum).then_some(h),
            space_dims: block.bases.iter().map(Vec::len).collect(),
            dims,
        });
    }
    Ok(CohomologyReport {
        differential: diff,
        region_sites: region.len(),
        odd_sites: theta_sites(&ff.lattice, region).len(),
        rank_threshold: rel_tol,
        blocks,
        h0_representatives: reps,
    })
}

/// Result of an exactness solve.
#[derive(Debug, Clone)]
pub enum WitnessResult {
    Exact { witness: PolyObservable, residual: f64 },
    NotExact { residual: f64 },
}

impl WitnessResult {
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact { .. })
    }

    pub fn residual(&self) -> f64 {
        match self {
            Self::Exact { residual, .. } | Self::NotExact { residual } => *residual,
        }
    }
}

/// Solves `d W = target` for `W` supported in `region` by sparse least
/// squares. Exact iff the residual is at most `1e-8 · ‖target‖`.
pub fn exactness_witness(
    ff: &FreeField,
    target: &PolyObservable,
    diff: Differential,
    region: &Region,
) -> Result<WitnessResult> {
    let lat = &ff.lattice;
    if !target.support(lat).is_subset_of(region) {
        return Err(Error::NotContained);
    }
    let h = target.truncation().h_max;
    // target coordinates, by (monomial, ℏ-order)
    let mut rows: FxHashMap<(Monomial, usize), usize> = FxHashMap::default();
    let mut b: Vec<Complex64> = Vec::new();
    let mut blocks: Vec<(usize, usize)> = Vec::new(); // (total, k) of the preimage
    for (m, coef) in target.sorted_terms() {
        for (j, z) in coef.coeffs().iter().enumerate() {
            if *z == c(0.0) {
                continue;
            }
            let idx = rows.len();
            rows.insert((m.clone(), j), idx);
            b.push(*z);
            let total = match diff {
                Differential::Classical => m.n() + m.k(),
                Differential::Quantum => m.n() + m.k() + 2 * j,
            };
            let key = match diff {
                Differential::Classical => (total * 64 + j, m.k() + 1),
                Differential::Quantum => (total, m.k() + 1),
            };
            if !blocks.contains(&key) {
                blocks.push(key);
            }
        }
    }
    let bnorm = linalg::norm(&b);
    let trunc = Truncation {
        d_max: target.truncation().d_max.max(target.max_sym_degree()),
        a_max: target.truncation().a_max.max(target.max_ext_degree() + 1),
        h_max: h,
    };
    if bnorm == 0.0 {
        return Ok(WitnessResult::Exact {
            witness: PolyObservable::zero(lat, trunc),
            residual: 0.0,
        });
    }
    let sym: Vec<usize> = region.sites().to_vec();
    let ext = theta_sites(lat, region);
    let mut cols: Vec<(Monomial, usize)> = Vec::new();
    for &(key, k) in &blocks {
        let triples: Vec<(usize, usize)> = match diff {
            Differential::Classical => {
                let (total, j) = (key / 64, key % 64);
                if total >= k {
                    vec![(total - k, j)]
                } else {
                    Vec::new()
                }
            }
            Differential::Quantum => graded_triples(diff, key, k, h),
        };
        for (n, j) in triples {
            let size = space_dim(sym.len(), ext.len(), n, k);
            if cols.len() + size > WITNESS_CAP {
                return Err(Error::SizeCap {
                    size: cols.len() + size,
                    cap: WITNESS_CAP,
                });
            }
            cols.extend(monomial_basis(&sym, &ext, n, k).into_iter().map(|m| (m, j)));
        }
    }
    let mut entries = Vec::new();
    for (col, (m, j)) in cols.iter().enumerate() {
        for (mm, jj, v) in diff.image(&ff.op, ff.weight(), m, *j) {
            if jj > h {
                continue;
            }
            let key = (mm, jj);
            let row = match rows.get(&key) {
                Some(&r) => r,
                None => {
                    let r = rows.len();
                    rows.insert(key, r);
                    b.push(c(0.0));
                    r
                }
            };
            entries.push((row, col, v));
        }
    }
    let mut a = SparseMatrix::new(rows.len(), cols.len());
    for (r, cc, v) in entries {
        a.push(r, cc, v);
    }
    let (x, resid) = linalg::cgls(&a, &b, 1e-12, 20_000);
    let residual = resid / bnorm;
    if residual > 1e-8 {
        return Ok(WitnessResult::NotExact { residual });
    }
    let mut witness = PolyObservable::zero(lat, trunc);
    for ((m, j), z) in cols.iter().zip(&x) {
        if z.norm() > 0.0 {
            witness.add_term(m.clone(), HbarPoly::monomial(*z, *j));
        }
    }
    Ok(WitnessResult::Exact { witness, residual })
}

/// `dim Sym^n(ℂ^d)`
pub fn sym_power_dim(d: usize, n: usize) -> usize {
    if d == 0 {
        return usize::from(n == 0);
    }
    binomial(d + n - 1, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{LatticeSpec, RegionKind};
    use crate::observables::random_grid_function;
    use proptest::prelude::*;

    fn t1d(n: usize) -> FreeField {
        FreeField::new(LatticeSpec::time1d(n, 0.05, 1.0), Truncation::default()).unwrap()
    }

    fn interval(ff: &FreeField, t0: usize, t1: usize) -> Region {
        ff.lattice.make_region(RegionKind::Interval { t0, t1 }).unwrap()
    }

    #[test]
    fn koszul_examples() {
        let ff = t1d(30);
        let lat = &ff.lattice;
        let g = random_grid_function(lat, &[5, 6, 7], 1);
        let h = random_grid_function(lat, &[6, 9], 2);
        let vg = ff.vector(&g).unwrap();
        let vh = ff.vector(&h).unwrap();
        let pg = ff.op.apply(&g);
        let ph = ff.op.apply(&h);
        assert!(koszul_differential(&ff.op, &vg).unwrap().distance(&ff.linear(&pg).unwrap()) < 1e-12);
        assert!(koszul_differential(&ff.op, &ff.linear(&g).unwrap()).unwrap().is_zero());
        let lhs = koszul_differential(&ff.op, &vg.multiply(&vh).unwrap()).unwrap();
        let rhs = ff
            .linear(&pg)
            .unwrap()
            .multiply(&vh)
            .unwrap()
            .sub(&ff.linear(&ph).unwrap().multiply(&vg).unwrap());
        assert!(lhs.distance(&rhs) < 1e-10);
    }

    #[test]
    fn laplacian_examples() {
        let ff = t1d(30);
        let lat = &ff.lattice;
        let f = random_grid_function(lat, &[5, 6, 7], 3);
        let g = random_grid_function(lat, &[6, 7, 8], 4);
        let of = ff.linear(&f).unwrap();
        let vg = ff.vector(&g).unwrap();
        let l = bv_laplacian(&of.multiply(&vg).unwrap());
        assert_eq!(l.len(), 1);
        assert!((l.coefficient(&Monomial::one()).coeff(0) - ff.pairing(&f, &g)).norm() < 1e-14);
        assert!(bv_laplacian(&of).is_zero());
        assert!(bv_laplacian(&vg).is_zero());
        // ŝ(O_f O^‡_g) = O_f O_{Pg} − iℏ⟨f,g⟩
        let s = quantum_differential(&ff.op, &of.multiply(&vg).unwrap()).unwrap();
        let want = of
            .multiply(&ff.linear(&ff.op.apply(&g)).unwrap())
            .unwrap()
            .add(&PolyObservable::constant(
                lat,
                ff.trunc,
                HbarPoly::monomial(-I * ff.pairing(&f, &g), 1),
            ));
        assert!(s.distance(&want) < 1e-10);
        assert!(quantum_differential(&ff.op, &vg).unwrap().distance(&ff.linear(&ff.op.apply(&g)).unwrap()) < 1e-12);
    }

    #[test]
    fn identities_hold_and_corruption_is_caught() {
        let ff = t1d(60);
        let rep = verify_algebraic_identities(&ff, 3, IdentityConfig { samples: 8, ..Default::default() }).unwrap();
        assert!(rep.passed(), "{:#?}", rep.failures().collect::<Vec<_>>());
        assert_eq!(rep.find("derivation.time_ordered_disjoint_bracket").unwrap().residual, 0.0);
        let bad = verify_algebraic_identities(
            &ff,
            3,
            IdentityConfig {
                samples: 4,
                corrupt_laplacian: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!bad.find("leibniz.bv").unwrap().passed());
    }

    #[test]
    fn intertwining_holds_for_dirac_and_fails_for_causal() {
        let ff = t1d(60);
        let ok = intertwine_check(&ff, &ff.kernels.dirac, 1, 10, 1e-10).unwrap();
        assert!(ok.find("intertwine.random").unwrap().passed(), "{ok:#?}");
        let bad = intertwine_check(&ff, &ff.kernels.causal, 1, 10, 1e-10).unwrap();
        assert!(!bad.find("intertwine.random").unwrap().passed());
    }

    #[test]
    fn two_koszul_routes_agree() {
        let ff = t1d(30);
        let r = interval(&ff, 8, 16);
        for seed in 0..5 {
            let a = random_observable(&ff.lattice, ff.trunc, &r, seed, 2, 2).unwrap();
            let x = koszul_differential(&ff.op, &a).unwrap();
            let y = koszul_via_contraction(&ff.op, &a).unwrap();
            assert!(x.distance(&y) < 1e-12);
        }
    }

    #[test]
    fn time1d_cohomology_counts() {
        let ff = t1d(20);
        let r = interval(&ff, 5, 10);
        let rep = cohomology(&ff, &r, Differential::Classical, 3, 0, 1e-8).unwrap();
        assert_eq!(rep.h0_dims(), vec![1, 2, 3, 4]);
        assert!(rep.negative_degrees_vanish());
        for h in 0..=1 {
            let q = cohomology(&ff, &r, Differential::Quantum, 3, h, 1e-8).unwrap();
            assert!(q.negative_degrees_vanish());
            for (w, d) in q.h0_dims().into_iter().enumerate() {
                let want: usize = (0..=h).filter(|j| 2 * j <= w).map(|j| rep.h0_dims()[w - 2 * j]).sum();
                assert_eq!(d, want, "weight {w}, order {h}");
            }
        }
    }

    #[test]
    fn minkowski_linear_cohomology_has_two_per_mode() {
        let ff = FreeField::new(LatticeSpec::minkowski2d(8, 4, 0.1, 0.125, 1.0), Truncation::default()).unwrap();
        let r = ff.lattice.make_region(RegionKind::Interval { t0: 2, t1: 4 }).unwrap();
        let rep = cohomology(&ff, &r, Differential::Classical, 2, 0, 1e-8).unwrap();
        assert_eq!(rep.h0_dims(), vec![1, 8, 36]);
        assert!(rep.negative_degrees_vanish());
    }

    #[test]
    fn h0_representatives_are_closed_and_independent() {
        let ff = t1d(20);
        let r = interval(&ff, 5, 10);
        let rep = cohomology(&ff, &r, Differential::Classical, 2, 0, 1e-8).unwrap();
        assert_eq!(rep.h0_representatives[2].len(), 3);
        for o in rep.h0_representatives.iter().flatten() {
            assert!(koszul_differential(&ff.op, o).unwrap().max_abs() <= 1e-8);
        }
    }

    #[test]
    fn witness_examples() {
        let ff = t1d(30);
        let lat = &ff.lattice;
        let r = interval(&ff, 6, 14);
        let g = random_grid_function(lat, &[8, 9, 10], 5);
        let target = ff.linear(&ff.op.apply(&g)).unwrap();
        let res = exactness_witness(&ff, &target, Differential::Classical, &r).unwrap();
        let WitnessResult::Exact { witness, .. } = res else {
            panic!("expected exact")
        };
        assert!(koszul_differential(&ff.op, &witness).unwrap().distance(&target) < 1e-8);
        // a delta smearing pairs nontrivially with solutions
        let bump = ff.linear(&lat.delta(10)).unwrap();
        assert!(!exactness_witness(&ff, &bump, Differential::Classical, &r).unwrap().is_exact());
        assert!(exactness_witness(&ff, &ff.zero(), Differential::Classical, &r).unwrap().is_exact());
        // quadratic target, quantum differential
        let of = ff.linear(&random_grid_function(lat, &[9, 11], 6)).unwrap();
        let x = ff.vector(&g).unwrap().multiply(&of).unwrap();
        let t2 = quantum_differential(&ff.op, &x).unwrap();
        assert!(exactness_witness(&ff, &t2, Differential::Quantum, &r).unwrap().is_exact());
    }

    #[test]
    fn sym_power_dims() {
        assert_eq!(sym_power_dim(2, 3), 4);
        assert_eq!(sym_power_dim(8, 3), 120);
        assert_eq!(sym_power_dim(0, 0), 1);
        assert_eq!(sym_power_dim(0, 2), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn differentials_square_to_zero(seed in any::<u64>()) {
            let ff = t1d(30);
            let r = interval(&ff, 8, 16);
            let a = random_observable(&ff.lattice, ff.trunc, &r, seed, 2, 2).unwrap();
            let d = koszul_differential(&ff.op, &a).unwrap();
            prop_assert!(koszul_differential(&ff.op, &d).unwrap().max_abs() < 1e-12 * (1.0 + d.max_abs()));
            let s = quantum_differential(&ff.op, &a).unwrap();
            prop_assert!(quantum_differential(&ff.op, &s).unwrap().max_abs() < 1e-12 * (1.0 + s.max_abs()));
            prop_assert!(bv_laplacian(&bv_laplacian(&a)).max_abs() < 1e-12);
        }
    }
}
