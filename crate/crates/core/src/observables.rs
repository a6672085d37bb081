//! Polynomial observables and polyvector fields on a lattice.
//!
//! An observable is a finite sum of monomials `x_{s1}⋯x_{sn} θ_{e1}⋯θ_{ek}`
//! with ℏ-series coefficients. The `x_s` are the (even) field values at the
//! sites, the `θ_s` are odd generators dual to them. Monomials are stored in
//! canonical form: `sym` sorted with repetition, `ext` strictly increasing.
//!
//! Weighted tensors relate to monomials by
//! `A = w^{n+k} Σ_{ordered tuples} T(s1..sn; e1..ek) x_{s1}⋯x_{sn} θ_{e1}⋯θ_{ek}`
//! with `T` symmetric in the first `n` slots and alternating in the last `k`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::hbar::{HbarPoly, HBAR_CAP};
use crate::lattice::{Lattice, Region};

pub type SymIdx = SmallVec<[u32; 4]>;
pub type ExtIdx = SmallVec<[u32; 2]>;

/// Degree and ℏ-order truncation of an observable space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub d_max: usize,
    pub a_max: usize,
    pub h_max: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            d_max: 4,
            a_max: 2,
            h_max: 4,
        }
    }
}

impl Truncation {
    pub fn new(d_max: usize, a_max: usize, h_max: usize) -> Result<Self> {
        if h_max >= HBAR_CAP {
            return Err(Error::InvalidSpec(format!(
                "h_max {h_max} exceeds the supported {}",
                HBAR_CAP - 1
            )));
        }
        Ok(Self { d_max, a_max, h_max })
    }

    /// Componentwise maximum.
    pub fn max(self, other: Self) -> Self {
        Self {
            d_max: self.d_max.max(other.d_max),
            a_max: self.a_max.max(other.a_max),
            h_max: self.h_max.max(other.h_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial {
    pub sym: SymIdx,
    pub ext: ExtIdx,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn x(s: usize) -> Self {
        Self {
            sym: smallvec::smallvec![s as u32],
            ext: ExtIdx::new(),
        }
    }

    pub fn theta(s: usize) -> Self {
        Self {
            sym: SymIdx::new(),
            ext: smallvec::smallvec![s as u32],
        }
    }

    /// Canonical monomial from unordered indices, with the sign picked up by
    /// sorting the odd part. `None` when an odd index repeats.
    pub fn new(sym: &[usize], ext: &[usize]) -> Option<(f64, Self)> {
        let mut s: SymIdx = sym.iter().map(|&i| i as u32).collect();
        s.sort_unstable();
        let mut e: ExtIdx = ext.iter().map(|&i| i as u32).collect();
        let mut sign = 1.0;
        // insertion sort counting transpositions
        for i in 1..e.len() {
            let mut j = i;
            while j > 0 && e[j - 1] > e[j] {
                e.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        if e.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some((sign, Self { sym: s, ext: e }))
    }

    pub fn n(&self) -> usize {
        self.sym.len()
    }

    pub fn k(&self) -> usize {
        self.ext.len()
    }

    pub fn is_odd(&self) -> bool {
        self.ext.len() % 2 == 1
    }

    pub fn multiplicity(&self, s: u32) -> usize {
        self.sym.iter().filter(|&&v| v == s).count()
    }

    /// Product in the graded commutative algebra; `None` if it vanishes.
    pub fn mul(&self, other: &Self) -> Option<(f64, Self)> {
        let mut sym = SymIdx::with_capacity(self.sym.len() + other.sym.len());
        let (mut i, mut j) = (0, 0);
        while i < self.sym.len() && j < other.sym.len() {
            if self.sym[i] <= other.sym[j] {
                sym.push(self.sym[i]);
                i += 1;
            } else {
                sym.push(other.sym[j]);
                j += 1;
            }
        }
        sym.extend_from_slice(&self.sym[i..]);
        sym.extend_from_slice(&other.sym[j..]);

        let mut ext = ExtIdx::with_capacity(self.ext.len() + other.ext.len());
        let mut swaps = 0usize;
        let (mut i, mut j) = (0, 0);
        while i < self.ext.len() && j < other.ext.len() {
            match self.ext[i].cmp(&other.ext[j]) {
                std::cmp::Ordering::Less => {
                    ext.push(self.ext[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    // other.ext[j] moves past the remaining self.ext entries
                    swaps += self.ext.len() - i;
                    ext.push(other.ext[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => return None,
            }
        }
        ext.extend_from_slice(&self.ext[i..]);
        ext.extend_from_slice(&other.ext[j..]);
        let sign = if swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        Some((sign, Self { sym, ext }))
    }

    /// `∂/∂x_s`: multiplicity and the reduced monomial.
    pub fn d_x(&self, s: u32) -> Option<(f64, Self)> {
        let pos = self.sym.iter().position(|&v| v == s)?;
        let m = self.multiplicity(s);
        let mut sym = self.sym.clone();
        sym.remove(pos);
        Some((
            m as f64,
            Self {
                sym,
                ext: self.ext.clone(),
            },
        ))
    }

    /// Left derivative `∂/∂θ_s`: sign `(−1)^i` for position `i`.
    pub fn d_theta(&self, s: u32) -> Option<(f64, Self)> {
        let pos = self.ext.iter().position(|&v| v == s)?;
        let mut ext = self.ext.clone();
        ext.remove(pos);
        let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
        Some((
            sign,
            Self {
                sym: self.sym.clone(),
                ext,
            },
        ))
    }

    /// Number of distinct orderings of the even part, `n! / Π m_i!`.
    pub fn sym_orderings(&self) -> f64 {
        let mut out = factorial(self.sym.len());
        let mut i = 0;
        while i < self.sym.len() {
            let mut j = i;
            while j < self.sym.len() && self.sym[j] == self.sym[i] {
                j += 1;
            }
            out /= factorial(j - i);
            i = j;
        }
        out
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.sym.iter().chain(self.ext.iter()).map(|&s| s as usize)
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// The two kinds of generators.
#[derive(Debug, Clone)]
pub enum Generator {
    /// `O_f = w Σ f(s) x_s`
    Linear(Vec<Complex64>),
    /// `O^‡_g = w Σ g(s) θ_s`; `g` must vanish off the lattice interior.
    Vector(Vec<Complex64>),
}

#[derive(Debug, Clone)]
pub struct PolyObservable {
    n_sites: usize,
    weight: f64,
    trunc: Truncation,
    terms: FxHashMap<Monomial, HbarPoly>,
}

impl PartialEq for PolyObservable {
    fn eq(&self, other: &Self) -> bool {
        self.n_sites == other.n_sites && self.terms == other.terms
    }
}

impl PolyObservable {
    pub fn zero(lat: &Lattice, trunc: Truncation) -> Self {
        Self {
            n_sites: lat.n_sites(),
            weight: lat.weight(),
            trunc,
            terms: FxHashMap::default(),
        }
    }

    /// An empty observable on the same lattice with the same truncation.
    pub fn zero_like(&self) -> Self {
        Self {
            n_sites: self.n_sites,
            weight: self.weight,
            trunc: self.trunc,
            terms: FxHashMap::default(),
        }
    }

    pub fn constant(lat: &Lattice, trunc: Truncation, c: HbarPoly) -> Self {
        let mut out = Self::zero(lat, trunc);
        out.add_term(Monomial::one(), c);
        out
    }

    pub fn from_terms(
        lat: &Lattice,
        trunc: Truncation,
        terms: impl IntoIterator<Item = (Monomial, HbarPoly)>,
    ) -> Result<Self> {
        let mut out = Self::zero(lat, trunc);
        for (m, c) in terms {
            out.check_monomial(&m)?;
            out.add_term(m, c);
        }
        Ok(out)
    }

    pub fn generator(lat: &Lattice, trunc: Truncation, kind: Generator) -> Result<Self> {
        match kind {
            Generator::Linear(f) => Self::linear(lat, trunc, &f),
            Generator::Vector(g) => Self::vector(lat, trunc, &g),
        }
    }

    pub fn linear(lat: &Lattice, trunc: Truncation, f: &[Complex64]) -> Result<Self> {
        check_len(lat, f)?;
        let mut out = Self::zero(lat, trunc);
        if trunc.d_max == 0 {
            return Err(overflow(1, 0, trunc));
        }
        for (s, &v) in f.iter().enumerate() {
            out.add_term(Monomial::x(s), HbarPoly::constant(v * lat.weight()));
        }
        Ok(out)
    }

    pub fn vector(lat: &Lattice, trunc: Truncation, g: &[Complex64]) -> Result<Self> {
        check_len(lat, g)?;
        if let Some(s) = (0..g.len()).find(|&s| g[s] != Complex64::new(0.0, 0.0) && !lat.is_interior(s)) {
            let site = lat.site(s);
            return Err(Error::SupportViolation(format!(
                "vector generator touches the boundary slice at ({}, {})",
                site.t, site.x
            )));
        }
        Self::vector_unchecked(lat, trunc, g)
    }

    /// `O^‡_g` without the interior-support check. Used where a completion of
    /// the compactly supported vector fields is intended.
    pub fn vector_unchecked(lat: &Lattice, trunc: Truncation, g: &[Complex64]) -> Result<Self> {
        check_len(lat, g)?;
        if trunc.a_max == 0 {
            return Err(overflow(0, 1, trunc));
        }
        let mut out = Self::zero(lat, trunc);
        for (s, &v) in g.iter().enumerate() {
            out.add_term(Monomial::theta(s), HbarPoly::constant(v * lat.weight()));
        }
        Ok(out)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    /// The same terms under a different truncation; errors if a term no longer
    /// fits.
    pub fn with_truncation(&self, trunc: Truncation) -> Result<Self> {
        let mut out = self.clone();
        out.trunc = trunc;
        for m in self.terms.keys() {
            out.check_monomial(m)?;
        }
        out.terms = out
            .terms
            .into_iter()
            .map(|(m, c)| (m, c.truncate(trunc.h_max)))
            .filter(|(_, c)| !c.is_zero())
            .collect();
        Ok(out)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &HbarPoly)> {
        self.terms.iter()
    }

    /// Terms in canonical monomial order.
    pub fn sorted_terms(&self) -> Vec<(&Monomial, &HbarPoly)> {
        let mut v: Vec<_> = self.terms.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn coefficient(&self, m: &Monomial) -> HbarPoly {
        self.terms.get(m).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_sym_degree(&self) -> usize {
        self.terms.keys().map(Monomial::n).max().unwrap_or(0)
    }

    pub fn max_ext_degree(&self) -> usize {
        self.terms.keys().map(Monomial::k).max().unwrap_or(0)
    }

    /// Whether every term has the same odd degree `k`.
    pub fn homogeneous_ext_degree(&self) -> Option<usize> {
        let mut it = self.terms.keys().map(Monomial::k);
        let first = it.next()?;
        it.all(|k| k == first).then_some(first)
    }

    fn check_monomial(&self, m: &Monomial) -> Result<()> {
        if m.n() > self.trunc.d_max || m.k() > self.trunc.a_max {
            return Err(overflow(m.n(), m.k(), self.trunc));
        }
        if let Some(&s) = m.sym.iter().chain(m.ext.iter()).find(|&&s| s as usize >= self.n_sites) {
            return Err(Error::OutOfBounds(format!("site index {s} beyond the lattice")));
        }
        Ok(())
    }

    /// Adds `c` to the coefficient of `m`, dropping exact zeros. No degree
    /// check; callers guarantee `m` fits.
    pub(crate) fn add_term(&mut self, m: Monomial, c: HbarPoly) {
        let c = c.truncate(self.trunc.h_max);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    /// Checked accumulation used by operations that can raise degrees.
    pub(crate) fn add_term_checked(&mut self, m: Monomial, c: HbarPoly) -> Result<()> {
        if c.truncate(self.trunc.h_max).is_zero() {
            return Ok(());
        }
        self.check_monomial(&m)?;
        self.add_term(m, c);
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.trunc = self.trunc.max(other.trunc);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.trunc = self.trunc.max(other.trunc);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -*c);
        }
        out
    }

    pub fn scale(&self, z: Complex64) -> Self {
        self.mul_hbar(&HbarPoly::constant(z))
    }

    /// Multiplies every coefficient by the series `p`.
    pub fn mul_hbar(&self, p: &HbarPoly) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), *c * *p);
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// The observable formed by the `ℏ^j` coefficients.
    pub fn hbar_component(&self, j: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), HbarPoly::constant(c.coeff(j)));
        }
        out
    }

    /// Terms of odd degree `k` only.
    pub fn ext_component(&self, k: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in self.terms.iter().filter(|(m, _)| m.k() == k) {
            out.add_term(m.clone(), *c);
        }
        out
    }

    /// Largest coefficient magnitude over all terms and ℏ-orders.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(HbarPoly::max_abs).fold(0.0, f64::max)
    }

    /// `max_abs(self − other)`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    /// Graded commutative product.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let mut out = self.zero_like();
        out.trunc = self.trunc.max(other.trunc);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some((sign, m)) = ma.mul(mb) {
                    out.add_term_checked(m, (*ca * *cb).scale(Complex64::new(sign, 0.0)))?;
                }
            }
        }
        Ok(out)
    }

    /// Value at the field configuration `φ`; odd terms contribute nothing.
    pub fn evaluate(&self, phi: &[Complex64]) -> HbarPoly {
        let mut acc = HbarPoly::zero();
        for (m, c) in self.sorted_terms() {
            if m.k() > 0 {
                continue;
            }
            let v: Complex64 = m.sym.iter().map(|&s| phi[s as usize]).product();
            acc += c.scale(v);
        }
        acc
    }

    /// `∂/∂x_s` applied termwise.
    pub fn d_x(&self, s: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            if let Some((f, r)) = m.d_x(s as u32) {
                out.add_term(r, c.scale(Complex64::new(f, 0.0)));
            }
        }
        out
    }

    /// Left derivative `∂/∂θ_s` applied termwise.
    pub fn d_theta(&self, s: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            if let Some((f, r)) = m.d_theta(s as u32) {
                out.add_term(r, c.scale(Complex64::new(f, 0.0)));
            }
        }
        out
    }

    /// Sites carrying an `x` in some term.
    pub fn sym_sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.keys().flat_map(|m| m.sym.iter().map(|&s| s as usize)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Sites carrying a `θ` in some term.
    pub fn ext_sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.keys().flat_map(|m| m.ext.iter().map(|&s| s as usize)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The `r`-th functional derivative `F^{(r)}(φ)` of the even part, with the
    /// weight normalization `⟨F^{(1)}(φ), h⟩_w = d/dε F(φ + ε h)`.
    pub fn derivative(&self, phi: &[Complex64], r: usize) -> DerivativeTensor {
        let mut level: BTreeMap<Vec<usize>, PolyObservable> = BTreeMap::new();
        level.insert(Vec::new(), self.ext_component(0));
        for _ in 0..r {
            let mut next = BTreeMap::new();
            for (idx, obs) in &level {
                for s in obs.sym_sites() {
                    let d = obs.d_x(s);
                    if !d.is_zero() {
                        let mut key = idx.clone();
                        key.push(s);
                        next.insert(key, d);
                    }
                }
            }
            level = next;
        }
        let scale = self.weight.powi(-(r as i32));
        let entries = level
            .into_iter()
            .map(|(k, obs)| (k, obs.evaluate(phi).scale(Complex64::new(scale, 0.0))))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        DerivativeTensor { rank: r, entries }
    }

    /// Smallest region holding every site that appears in a term.
    pub fn support(&self, lat: &Lattice) -> Region {
        let sites: Vec<usize> = self.terms.keys().flat_map(|m| m.sites().collect::<Vec<_>>()).collect();
        if sites.is_empty() {
            return Region::empty();
        }
        lat.general_region(sites).expect("observable sites lie on the lattice")
    }

    /// Structure map along an inclusion of regions. Observables are stored on
    /// the whole lattice, so extension is the identity on data once the
    /// support is checked.
    pub fn extend(&self, lat: &Lattice, into: &Region) -> Result<Self> {
        if !self.support(lat).is_subset_of(into) {
            return Err(Error::NotContained);
        }
        Ok(self.clone())
    }

    /// Re-indexes sites through `map` onto a lattice with `n_sites` sites.
    pub fn relabel(&self, lat: &Lattice, map: impl Fn(usize) -> Option<usize>) -> Result<Self> {
        let mut out = Self::zero(lat, self.trunc);
        for (m, c) in &self.terms {
            let sym: Option<Vec<usize>> = m.sym.iter().map(|&s| map(s as usize)).collect();
            let ext: Option<Vec<usize>> = m.ext.iter().map(|&s| map(s as usize)).collect();
            let (Some(sym), Some(ext)) = (sym, ext) else {
                return Err(Error::NotContained);
            };
            let (sign, mm) = Monomial::new(&sym, &ext).ok_or(Error::NotContained)?;
            out.add_term_checked(mm, c.scale(Complex64::new(sign, 0.0)))?;
        }
        Ok(out)
    }

    /// Linear substitution of the even variables, `x_t ↦ Σ_s B(s, t) x_s`,
    /// given as `column(t) = [(s, B(s, t))]`. Odd variables are unchanged.
    pub fn substitute(&self, column: impl Fn(usize) -> Vec<(usize, Complex64)>) -> Result<Self> {
        let mut cache: FxHashMap<u32, PolyObservable> = FxHashMap::default();
        let mut out = self.zero_like();
        for (m, c) in self.sorted_terms() {
            let mut acc = {
                let mut one = self.zero_like();
                one.add_term(
                    Monomial {
                        sym: SymIdx::new(),
                        ext: m.ext.clone(),
                    },
                    *c,
                );
                one
            };
            for &t in &m.sym {
                let lin = cache.entry(t).or_insert_with(|| {
                    let mut l = self.zero_like();
                    for (s, v) in column(t as usize) {
                        l.add_term(Monomial::x(s), HbarPoly::constant(v));
                    }
                    l
                });
                acc = lin.multiply(&acc)?;
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// The `(n, k)` block as a weighted tensor over ordered index tuples.
    pub fn graded_tensor(&self, n: usize, k: usize) -> GradedTensor {
        let mut entries = BTreeMap::new();
        let kf = factorial(k);
        for (m, c) in self.terms.iter().filter(|(m, _)| m.n() == n && m.k() == k) {
            let base = c.scale(Complex64::new(
                1.0 / (self.weight.powi((n + k) as i32) * m.sym_orderings() * kf),
                0.0,
            ));
            let syms = distinct_permutations(&m.sym);
            for (perm, sign) in signed_permutations(k) {
                let ext: Vec<usize> = perm.iter().map(|&i| m.ext[i] as usize).collect();
                for s in &syms {
                    let mut key: Vec<usize> = s.iter().map(|&v| v as usize).collect();
                    key.extend_from_slice(&ext);
                    entries.insert(key, base.scale(Complex64::new(sign, 0.0)));
                }
            }
        }
        GradedTensor { n, k, entries }
    }

    /// JSON term list grouped by `(n, k)`.
    pub fn to_json_terms(&self) -> Vec<JsonTermBlock> {
        let mut blocks: BTreeMap<(usize, usize), Vec<JsonEntry>> = BTreeMap::new();
        for (m, c) in self.sorted_terms() {
            blocks.entry((m.n(), m.k())).or_default().push(JsonEntry {
                sym: m.sym.iter().map(|&s| s as usize).collect(),
                ext: m.ext.iter().map(|&s| s as usize).collect(),
                hbar_coeffs: *c,
            });
        }
        blocks
            .into_iter()
            .map(|((n, k), entries)| JsonTermBlock { n, k, entries })
            .collect()
    }

    pub fn from_json_terms(lat: &Lattice, trunc: Truncation, blocks: &[JsonTermBlock]) -> Result<Self> {
        let mut out = Self::zero(lat, trunc);
        for b in blocks {
            for e in &b.entries {
                if e.sym.len() != b.n || e.ext.len() != b.k {
                    return Err(Error::InvalidSpec("term degree does not match its block".into()));
                }
                let (sign, m) = Monomial::new(&e.sym, &e.ext)
                    .ok_or_else(|| Error::InvalidSpec("repeated odd index".into()))?;
                out.check_monomial(&m)?;
                out.add_term(m, e.hbar_coeffs.scale(Complex64::new(sign, 0.0)));
            }
        }
        Ok(out)
    }
}

fn overflow(sym: usize, ext: usize, t: Truncation) -> Error {
    Error::TruncationOverflow {
        sym,
        ext,
        d_max: t.d_max,
        a_max: t.a_max,
    }
}

fn check_len(lat: &Lattice, f: &[Complex64]) -> Result<()> {
    if f.len() != lat.n_sites() {
        return Err(Error::LengthMismatch {
            expected: lat.n_sites(),
            found: f.len(),
        });
    }
    Ok(())
}

fn distinct_permutations(v: &[u32]) -> Vec<Vec<u32>> {
    let mut cur = v.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // next lexicographic permutation
    loop {
        let Some(i) = (0..cur.len().saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..cur.len()).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.push(cur.clone());
    }
    out
}

fn signed_permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    if k == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (p, s) in signed_permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            // inserting at `pos` passes the new largest element over len−pos
            let sign = if (p.len() - pos) % 2 == 0 { s } else { -s };
            out.push((q, sign));
        }
    }
    out
}

/// Functional derivative at a point, over ordered site tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTensor {
    pub rank: usize,
    pub entries: BTreeMap<Vec<usize>, HbarPoly>,
}

impl DerivativeTensor {
    pub fn get(&self, idx: &[usize]) -> HbarPoly {
        self.entries.get(idx).copied().unwrap_or_default()
    }

    /// The rank-one tensor as a grid function at ℏ-order `j`.
    pub fn as_vector(&self, n_sites: usize, j: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); n_sites];
        for (k, c) in &self.entries {
            if let [s] = k.as_slice() {
                v[*s] = c.coeff(j);
            }
        }
        v
    }
}

/// One `(n, k)` block of an observable as a symmetric/alternating tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedTensor {
    pub n: usize,
    pub k: usize,
    pub entries: BTreeMap<Vec<usize>, HbarPoly>,
}

impl GradedTensor {
    pub fn get(&self, idx: &[usize]) -> HbarPoly {
        self.entries.get(idx).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonEntry {
    pub sym: Vec<usize>,
    pub ext: Vec<usize>,
    pub hbar_coeffs: HbarPoly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonTermBlock {
    pub n: usize,
    pub k: usize,
    pub entries: Vec<JsonEntry>,
}

/// Seeded random observable with even part on `sym_sites` and odd part on
/// `ext_sites`. A few monomials per `(n, k)` block, ℏ⁰ and ℏ¹ coefficients.
pub fn random_observable_on(
    lat: &Lattice,
    trunc: Truncation,
    sym_sites: &[usize],
    ext_sites: &[usize],
    seed: u64,
    n_max: usize,
    k_max: usize,
) -> Result<PolyObservable> {
    if n_max > trunc.d_max || k_max > trunc.a_max {
        return Err(overflow(n_max, k_max, trunc));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PolyObservable::zero(lat, trunc);
    for n in 0..=n_max {
        for k in 0..=k_max.min(ext_sites.len()) {
            if n > 0 && sym_sites.is_empty() {
                continue;
            }
            let count = if n + k == 0 { 1 } else { 3 };
            for _ in 0..count {
                let sym: Vec<usize> = (0..n).map(|_| sym_sites[rng.gen_range(0..sym_sites.len())]).collect();
                let mut pool = ext_sites.to_vec();
                let mut ext = Vec::with_capacity(k);
                for _ in 0..k {
                    ext.push(pool.swap_remove(rng.gen_range(0..pool.len())));
                }
                let (sign, m) = Monomial::new(&sym, &ext).expect("distinct odd indices");
                let mut c = HbarPoly::constant(Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                if trunc.h_max >= 1 && rng.gen_bool(0.3) {
                    c.set_coeff(1, Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
                }
                out.add_term(m, c.scale(Complex64::new(sign, 0.0)));
            }
        }
    }
    Ok(out)
}

/// Seeded random observable supported in `region`; odd slots use the sites
/// of `region` whose whole stencil stays inside it.
pub fn random_observable(
    lat: &Lattice,
    trunc: Truncation,
    region: &Region,
    seed: u64,
    n_max: usize,
    k_max: usize,
) -> Result<PolyObservable> {
    let ext = theta_sites(lat, region);
    random_observable_on(lat, trunc, region.sites(), &ext, seed, n_max, k_max)
}

/// Interior sites of `region` whose stencil neighbours all lie in `region`.
/// These carry the odd generators of the region's polyvector fields.
pub fn theta_sites(lat: &Lattice, region: &Region) -> Vec<usize> {
    region
        .sites()
        .iter()
        .copied()
        .filter(|&s| lat.is_interior(s) && lat.stencil_neighbors(s).iter().all(|&n| region.contains(n)))
        .collect()
}

/// Seeded random complex grid function supported on `sites`.
pub fn random_grid_function(lat: &Lattice, sites: &[usize], seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = vec![Complex64::new(0.0, 0.0); lat.n_sites()];
    for &s in sites {
        f[s] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{LatticeSpec, RegionKind};
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn lat() -> Lattice {
        Lattice::new(LatticeSpec::time1d(20, 0.05, 1.0)).unwrap()
    }

    fn tr() -> Truncation {
        Truncation::default()
    }

    fn region(l: &Lattice, t0: usize, t1: usize) -> Region {
        l.make_region(RegionKind::Interval { t0, t1 }).unwrap()
    }

    #[test]
    fn delta_smearing_evaluates_to_the_field_value() {
        let l = lat();
        let o = PolyObservable::linear(&l, tr(), &l.delta(7)).unwrap();
        let phi: Vec<_> = (0..20).map(|i| c(i as f64 * 0.5)).collect();
        assert!((o.evaluate(&phi).coeff(0) - c(3.5)).norm() < 1e-14);
    }

    #[test]
    fn vector_generator_has_no_function_part() {
        let l = lat();
        let g = l.indicator(&[3, 4], c(1.0));
        let v = PolyObservable::vector(&l, tr(), &g).unwrap();
        assert_eq!(v.max_ext_degree(), 1);
        assert!(v.evaluate(&vec![c(1.0); 20]).is_zero());
        let bad = l.indicator(&[0], c(1.0));
        assert!(matches!(
            PolyObservable::vector(&l, tr(), &bad),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn support_examples() {
        let l = lat();
        let f = l.indicator(&[3, 4], c(2.0));
        let o = PolyObservable::linear(&l, tr(), &f).unwrap();
        assert_eq!(o.support(&l).sites(), &[3, 4]);
        assert!(PolyObservable::zero(&l, tr()).support(&l).is_empty());
    }

    #[test]
    fn even_commute_odd_anticommute() {
        let l = lat();
        let f = random_grid_function(&l, &[2, 3, 4], 1);
        let g = random_grid_function(&l, &[5, 6], 2);
        let of = PolyObservable::linear(&l, tr(), &f).unwrap();
        let og = PolyObservable::linear(&l, tr(), &g).unwrap();
        assert_eq!(of.multiply(&og).unwrap(), og.multiply(&of).unwrap());
        let vg = PolyObservable::vector(&l, tr(), &f).unwrap();
        let vh = PolyObservable::vector(&l, tr(), &g).unwrap();
        let ab = vg.multiply(&vh).unwrap();
        let ba = vh.multiply(&vg).unwrap();
        assert!(ab.add(&ba).max_abs() < 1e-15);
        assert!(!ab.is_zero());
        // θ ∧ θ = 0
        assert!(vg.multiply(&vg).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn square_evaluates_to_square() {
        let l = lat();
        let f = random_grid_function(&l, &[1, 5, 9], 3);
        let o = PolyObservable::linear(&l, tr(), &f).unwrap();
        let phi = random_grid_function(&l, &(0..20).collect::<Vec<_>>(), 4);
        let sq = o.multiply(&o).unwrap().evaluate(&phi).coeff(0);
        let direct = l.pairing(&f, &phi).unwrap();
        assert!((sq - direct * direct).norm() < 1e-13);
    }

    #[test]
    fn truncation_overflow_on_degree() {
        let l = lat();
        let t = Truncation::new(2, 1, 2).unwrap();
        let o = PolyObservable::linear(&l, t, &l.delta(3)).unwrap();
        let sq = o.multiply(&o).unwrap();
        assert!(matches!(sq.multiply(&o), Err(Error::TruncationOverflow { .. })));
        assert!(Truncation::new(4, 2, HBAR_CAP).is_err());
    }

    #[test]
    fn derivative_examples() {
        let l = lat();
        let f = random_grid_function(&l, &[2, 3], 5);
        let g = random_grid_function(&l, &[3, 8], 6);
        let of = PolyObservable::linear(&l, tr(), &f).unwrap();
        let og = PolyObservable::linear(&l, tr(), &g).unwrap();
        let phi = random_grid_function(&l, &(0..20).collect::<Vec<_>>(), 7);
        let d1 = of.derivative(&phi, 1);
        for s in 0..20 {
            assert!((d1.get(&[s]).coeff(0) - f[s]).norm() < 1e-12);
        }
        // second derivative of O_f O_g is f⊗g + g⊗f
        let d2 = of.multiply(&og).unwrap().derivative(&phi, 2);
        for a in [2, 3, 8] {
            for b in [2, 3, 8] {
                let want = f[a] * g[b] + g[a] * f[b];
                assert!((d2.get(&[a, b]).coeff(0) - want).norm() < 1e-11);
            }
        }
        assert!(of.derivative(&phi, 2).entries.is_empty());
    }

    #[test]
    fn extend_checks_containment_and_composes() {
        let l = lat();
        let o = PolyObservable::linear(&l, tr(), &l.indicator(&[4, 5], c(1.0))).unwrap();
        let u = region(&l, 4, 6);
        let v = region(&l, 2, 10);
        let once = o.extend(&l, &v).unwrap();
        let twice = o.extend(&l, &u).unwrap().extend(&l, &v).unwrap();
        assert_eq!(once, twice);
        assert!(matches!(o.extend(&l, &region(&l, 5, 9)), Err(Error::NotContained)));
    }

    #[test]
    fn graded_tensor_symmetries() {
        let l = lat();
        let r = region(&l, 3, 10);
        let o = random_observable(&l, tr(), &r, 11, 2, 2).unwrap();
        let t = o.graded_tensor(2, 2);
        assert!(!t.entries.is_empty());
        for (idx, v) in &t.entries {
            let swapped_sym = vec![idx[1], idx[0], idx[2], idx[3]];
            let swapped_ext = vec![idx[0], idx[1], idx[3], idx[2]];
            assert!(t.get(&swapped_sym).approx_eq(v, 1e-15));
            assert!(t.get(&swapped_ext).approx_eq(&-*v, 1e-15));
            assert!(idx.iter().all(|&s| r.contains(s)));
        }
        // reconstruct the block from the tensor
        let w = l.weight();
        let mut rebuilt = PolyObservable::zero(&l, tr());
        for (idx, v) in &t.entries {
            let (sign, m) = Monomial::new(&idx[..2], &idx[2..]).unwrap();
            rebuilt.add_term(m, v.scale(c(sign * w.powi(4))));
        }
        let mut block = PolyObservable::zero(&l, tr());
        for (m, v) in o.terms().filter(|(m, _)| m.n() == 2 && m.k() == 2) {
            block.add_term(m.clone(), *v);
        }
        assert!(rebuilt.distance(&block) < 1e-12);
    }

    #[test]
    fn random_observable_is_deterministic_and_supported() {
        let l = lat();
        let r = region(&l, 5, 12);
        let a = random_observable(&l, tr(), &r, 42, 3, 2).unwrap();
        let b = random_observable(&l, tr(), &r, 42, 3, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.support(&l).is_subset_of(&r));
        let th = theta_sites(&l, &r);
        assert!(a.ext_sites().iter().all(|s| th.contains(s)));
    }

    #[test]
    fn json_round_trip() {
        let l = lat();
        let r = region(&l, 2, 8);
        let a = random_observable(&l, tr(), &r, 9, 2, 2).unwrap();
        let js = serde_json::to_string(&a.to_json_terms()).unwrap();
        let blocks: Vec<JsonTermBlock> = serde_json::from_str(&js).unwrap();
        let back = PolyObservable::from_json_terms(&l, tr(), &blocks).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn substitution_of_identity_is_identity() {
        let l = lat();
        let r = region(&l, 2, 8);
        let a = random_observable(&l, tr(), &r, 19, 3, 1).unwrap();
        let b = a.substitute(|t| vec![(t, c(1.0))]).unwrap();
        assert!(a.distance(&b) < 1e-15);
    }

    fn arb_obs() -> impl Strategy<Value = (u64, usize, usize)> {
        (any::<u64>(), 0usize..=2, 0usize..=1)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn product_associative_and_graded_commutative(
            (sa, na, ka) in arb_obs(), (sb, nb, kb) in arb_obs(), (sc, nc, _) in arb_obs()
        ) {
            let l = lat();
            let r = region(&l, 3, 9);
            let t = Truncation::new(6, 3, 4).unwrap();
            let a = random_observable(&l, t, &r, sa, na, ka).unwrap();
            let b = random_observable(&l, t, &r, sb, nb, kb).unwrap();
            let cc = random_observable(&l, t, &r, sc, nc, 0).unwrap();
            let left = a.multiply(&b).unwrap().multiply(&cc).unwrap();
            let right = a.multiply(&b.multiply(&cc).unwrap()).unwrap();
            prop_assert!(left.distance(&right) < 1e-12);
            // graded commutativity on homogeneous odd parts
            for i in 0..=ka {
                for j in 0..=kb {
                    let ai = a.ext_component(i);
                    let bj = b.ext_component(j);
                    let sign = if (i * j) % 2 == 0 { 1.0 } else { -1.0 };
                    let d = ai.multiply(&bj).unwrap().sub(&bj.multiply(&ai).unwrap().scale(c(sign)));
                    prop_assert!(d.max_abs() < 1e-12);
                }
            }
        }

        #[test]
        fn evaluation_is_multiplicative(sa in any::<u64>(), sb in any::<u64>(), sp in any::<u64>()) {
            let l = lat();
            let r = region(&l, 0, 19);
            let a = random_observable(&l, tr(), &r, sa, 2, 0).unwrap();
            let b = random_observable(&l, tr(), &r, sb, 2, 0).unwrap();
            let phi = random_grid_function(&l, r.sites(), sp);
            let lhs = a.multiply(&b).unwrap().evaluate(&phi);
            let rhs = a.evaluate(&phi) * b.evaluate(&phi);
            prop_assert!(lhs.approx_eq(&rhs, 1e-11));
        }

        #[test]
        fn derivative_matches_central_differences(sa in any::<u64>(), sp in any::<u64>(), sh in any::<u64>()) {
            let l = lat();
            let r = region(&l, 4, 9);
            let a = random_observable(&l, tr(), &r, sa, 3, 0).unwrap();
            let phi = random_grid_function(&l, r.sites(), sp);
            let h = random_grid_function(&l, r.sites(), sh);
            let eps = 1e-4;
            let shift = |s: f64| -> Vec<Complex64> { phi.iter().zip(&h).map(|(p, q)| p + q * s).collect() };
            let fd = (a.evaluate(&shift(eps)).coeff(0) - a.evaluate(&shift(-eps)).coeff(0)) / (2.0 * eps);
            let d1 = a.derivative(&phi, 1).as_vector(l.n_sites(), 0);
            let an = l.pairing(&d1, &h).unwrap();
            prop_assert!((fd - an).norm() <= 1e-6 * an.norm().max(1.0));
        }

        #[test]
        fn extend_is_a_homomorphism(sa in any::<u64>(), sb in any::<u64>()) {
            let l = lat();
            let r = region(&l, 4, 9);
            let big = region(&l, 1, 15);
            let a = random_observable(&l, tr(), &r, sa, 2, 1).unwrap();
            let b = random_observable(&l, tr(), &r, sb, 2, 1).unwrap();
            let lhs = a.multiply(&b).unwrap().extend(&l, &big).unwrap();
            let rhs = a.extend(&l, &big).unwrap().multiply(&b.extend(&l, &big).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
