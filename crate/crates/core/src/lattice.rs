//! Finite discretizations of globally hyperbolic spacetimes.
//!
//! Two geometries are supported: a bare time axis ([`Dimension::Time1D`]) and
//! 1+1 dimensional Minkowski space with a periodic spatial circle
//! ([`Dimension::Minkowski2D`]). Sites are indexed lexicographically by
//! `(t_index, x_index)`, so the flat index `t * n_space + x` already respects
//! the region ordering.
//!
//! The causal order is the discrete light cone of the leapfrog stencil:
//! `a` precedes `b` iff `t_b > t_a` and `|x_b - x_a|_periodic <= t_b - t_a`.
//! Lightlike separation counts as causal.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n_time * n_space`.
pub const DEFAULT_SITE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Time1D,
    Minkowski2D,
}

/// User-facing lattice parameters, validated by [`Lattice::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dimension: Dimension,
    pub n_time: usize,
    #[serde(default = "one")]
    pub n_space: usize,
    pub dt: f64,
    #[serde(default = "unit")]
    pub dx: f64,
    pub mass: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn time1d(n_time: usize, dt: f64, mass: f64) -> Self {
        Self {
            dimension: Dimension::Time1D,
            n_time,
            n_space: 1,
            dt,
            dx: 1.0,
            mass,
        }
    }

    pub fn minkowski2d(n_time: usize, n_space: usize, dt: f64, dx: f64, mass: f64) -> Self {
        Self {
            dimension: Dimension::Minkowski2D,
            n_time,
            n_space,
            dt,
            dx,
            mass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub t: usize,
    pub x: usize,
}

impl Site {
    pub fn new(t: usize, x: usize) -> Self {
        Self { t, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CausalRelation {
    /// The first site lies in the causal past of the second.
    Past,
    /// The first site lies in the causal future of the second.
    Future,
    Spacelike,
    Coincident,
}

/// A validated lattice. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
    weight: f64,
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        Self::with_cap(spec, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(mut spec: LatticeSpec, cap: usize) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if !(spec.mass > 0.0) || !spec.mass.is_finite() {
            return bad("mass must be positive");
        }
        if !(spec.dt > 0.0) || !spec.dt.is_finite() {
            return bad("dt must be positive");
        }
        if spec.n_time < 3 {
            return bad("n_time must be at least 3");
        }
        match spec.dimension {
            Dimension::Time1D => {
                spec.n_space = 1;
                spec.dx = 1.0;
                // leapfrog frequency must be real: m dt < 2
                if spec.mass * spec.dt >= 2.0 {
                    return bad("m*dt must be below 2");
                }
            }
            Dimension::Minkowski2D => {
                if spec.n_space == 0 {
                    return bad("n_space must be positive");
                }
                if !(spec.dx > 0.0) || !spec.dx.is_finite() {
                    return bad("dx must be positive");
                }
                if spec.dt > spec.dx {
                    return bad("CFL violated: dt > dx");
                }
                let r = spec.dt / spec.dx;
                if spec.mass * spec.dt >= 2.0 * (1.0 - r * r).sqrt() {
                    return bad("m*dt must be below 2*sqrt(1-(dt/dx)^2)");
                }
            }
        }
        let total = spec.n_time * spec.n_space;
        if total > cap {
            return Err(Error::InvalidSpec(format!(
                "{total} sites exceed the cap {cap}"
            )));
        }
        let weight = match spec.dimension {
            Dimension::Time1D => spec.dt,
            Dimension::Minkowski2D => spec.dt * spec.dx,
        };
        Ok(Self { spec, weight })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn dimension(&self) -> Dimension {
        self.spec.dimension
    }

    pub fn n_time(&self) -> usize {
        self.spec.n_time
    }

    pub fn n_space(&self) -> usize {
        self.spec.n_space
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx
    }

    pub fn mass(&self) -> f64 {
        self.spec.mass
    }

    /// Cell volume used by the integration pairing.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n_time * self.spec.n_space
    }

    pub fn index(&self, s: Site) -> usize {
        s.t * self.spec.n_space + s.x
    }

    pub fn site(&self, idx: usize) -> Site {
        Site::new(idx / self.spec.n_space, idx % self.spec.n_space)
    }

    pub fn contains(&self, s: Site) -> bool {
        s.t < self.spec.n_time && s.x < self.spec.n_space
    }

    pub fn check_site(&self, s: Site) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::SiteOutOfBounds { t: s.t, x: s.x })
        }
    }

    /// Sites where the full time stencil fits.
    pub fn is_interior(&self, idx: usize) -> bool {
        let t = idx / self.spec.n_space;
        t >= 1 && t + 2 <= self.spec.n_time
    }

    pub fn interior_sites(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&i| self.is_interior(i)).collect()
    }

    /// Minimal periodic distance between two spatial indices.
    pub fn x_distance(&self, a: usize, b: usize) -> usize {
        let n = self.spec.n_space;
        let d = a.abs_diff(b) % n;
        d.min(n - d)
    }

    /// Sites sharing a stencil with `idx` (time neighbours and, in 2D, the
    /// periodic spatial neighbours), excluding `idx` itself.
    pub fn stencil_neighbors(&self, idx: usize) -> Vec<usize> {
        let s = self.site(idx);
        let mut out = Vec::with_capacity(4);
        if s.t > 0 {
            out.push(self.index(Site::new(s.t - 1, s.x)));
        }
        if s.t + 1 < self.spec.n_time {
            out.push(self.index(Site::new(s.t + 1, s.x)));
        }
        if self.spec.dimension == Dimension::Minkowski2D && self.spec.n_space > 1 {
            let n = self.spec.n_space;
            for x in [(s.x + n - 1) % n, (s.x + 1) % n] {
                let j = self.index(Site::new(s.t, x));
                if j != idx && !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out
    }

    pub fn causal_relation(&self, a: Site, b: Site) -> Result<CausalRelation> {
        self.check_site(a)?;
        self.check_site(b)?;
        Ok(self.relation_unchecked(a, b))
    }

    pub(crate) fn relation_unchecked(&self, a: Site, b: Site) -> CausalRelation {
        if a == b {
            return CausalRelation::Coincident;
        }
        let dx = self.x_distance(a.x, b.x);
        if b.t > a.t && dx <= b.t - a.t {
            CausalRelation::Past
        } else if a.t > b.t && dx <= a.t - b.t {
            CausalRelation::Future
        } else {
            CausalRelation::Spacelike
        }
    }

    /// `true` when `a` causally precedes or equals `b`.
    pub fn causally_precedes_or_eq(&self, a: usize, b: usize) -> bool {
        matches!(
            self.relation_unchecked(self.site(a), self.site(b)),
            CausalRelation::Past | CausalRelation::Coincident
        )
    }

    /// Indicator of the causal future `J+(sites)` (sites included).
    pub fn causal_future(&self, sites: &[usize]) -> Vec<bool> {
        let (nt, nx) = (self.spec.n_time, self.spec.n_space);
        let mut mark = vec![false; self.n_sites()];
        for &s in sites {
            mark[s] = true;
        }
        for t in 1..nt {
            for x in 0..nx {
                let here = t * nx + x;
                if mark[here] {
                    continue;
                }
                let prev = (t - 1) * nx;
                mark[here] = mark[prev + x]
                    || (nx > 1 && (mark[prev + (x + 1) % nx] || mark[prev + (x + nx - 1) % nx]));
            }
        }
        mark
    }

    /// Indicator of the causal past `J-(sites)` (sites included).
    pub fn causal_past(&self, sites: &[usize]) -> Vec<bool> {
        let (nt, nx) = (self.spec.n_time, self.spec.n_space);
        let mut mark = vec![false; self.n_sites()];
        for &s in sites {
            mark[s] = true;
        }
        for t in (0..nt.saturating_sub(1)).rev() {
            for x in 0..nx {
                let here = t * nx + x;
                if mark[here] {
                    continue;
                }
                let next = (t + 1) * nx;
                mark[here] = mark[next + x]
                    || (nx > 1 && (mark[next + (x + 1) % nx] || mark[next + (x + nx - 1) % nx]));
            }
        }
        mark
    }

    /// The causal hull `J+(S) ∩ J-(S)`, sorted.
    pub fn causal_hull(&self, sites: &[usize]) -> Vec<usize> {
        let fut = self.causal_future(sites);
        let past = self.causal_past(sites);
        (0..self.n_sites()).filter(|&i| fut[i] && past[i]).collect()
    }

    pub fn is_causally_convex(&self, sites: &[usize]) -> bool {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        self.causal_hull(&sorted) == sorted
    }

    pub fn make_region(&self, kind: RegionKind) -> Result<Region> {
        match kind {
            RegionKind::Interval { t0, t1 } => {
                if t0 > t1 {
                    return Err(Error::EmptyRegion);
                }
                if t1 >= self.spec.n_time {
                    return Err(Error::OutOfBounds(format!(
                        "interval end {t1} beyond n_time {}",
                        self.spec.n_time
                    )));
                }
                let nx = self.spec.n_space;
                let sites = (t0 * nx..(t1 + 1) * nx).collect();
                Ok(Region {
                    sites,
                    shape: Shape::Interval { t0, t1 },
                })
            }
            RegionKind::Diamond { apex, radius } => {
                self.check_site(apex)?;
                if apex.t < radius || apex.t + radius >= self.spec.n_time {
                    return Err(Error::OutOfBounds(format!(
                        "diamond of radius {radius} at t={} leaves the time range",
                        apex.t
                    )));
                }
                if self.spec.dimension == Dimension::Minkowski2D && 2 * radius + 1 > self.spec.n_space
                {
                    return Err(Error::OutOfBounds(format!(
                        "diamond of radius {radius} wraps the spatial circle"
                    )));
                }
                let sites = (0..self.n_sites())
                    .filter(|&i| {
                        let s = self.site(i);
                        s.t.abs_diff(apex.t) + self.x_distance(s.x, apex.x) <= radius
                    })
                    .collect();
                Ok(Region {
                    sites,
                    shape: Shape::Diamond {
                        apex_t: apex.t,
                        apex_x: apex.x,
                        radius,
                    },
                })
            }
        }
    }

    /// A region with arbitrary sites; validated against the lattice.
    pub fn general_region(&self, sites: impl IntoIterator<Item = usize>) -> Result<Region> {
        let mut sites: Vec<usize> = sites.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if let Some(&last) = sites.last() {
            if last >= self.n_sites() {
                let s = self.site(last);
                return Err(Error::SiteOutOfBounds { t: s.t, x: s.x });
            }
        }
        let shape = Shape::General {
            sites: sites.iter().map(|&i| self.site(i)).collect(),
        };
        Ok(Region { sites, shape })
    }

    pub fn full_region(&self) -> Region {
        Region {
            sites: (0..self.n_sites()).collect(),
            shape: Shape::Interval {
                t0: 0,
                t1: self.spec.n_time - 1,
            },
        }
    }

    pub fn region_relations(&self, r1: &Region, r2: &Region) -> RegionRelations {
        let fut1 = self.causal_future(&r1.sites);
        let past1 = self.causal_past(&r1.sites);
        let spacelike_separated = r2.sites.iter().all(|&s| !fut1[s] && !past1[s]);
        let disjoint = r1.is_disjoint(r2);
        // r1 ≺ r2: nothing in r2 lies in the causal past of r1.
        let r1_precedes_r2 = disjoint && r2.sites.iter().all(|&s| !past1[s]);
        let r2_precedes_r1 = disjoint && r2.sites.iter().all(|&s| !fut1[s]);
        RegionRelations {
            spacelike_separated,
            causally_convex_1: self.is_causally_convex(&r1.sites),
            causally_convex_2: self.is_causally_convex(&r2.sites),
            r1_precedes_r2,
            r2_precedes_r1,
        }
    }

    /// Weighted bilinear pairing `w Σ f(s) g(s)`.
    pub fn pairing(&self, f: &[Complex64], g: &[Complex64]) -> Result<Complex64> {
        let n = self.n_sites();
        for len in [f.len(), g.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let sum: Complex64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
        Ok(sum * self.weight)
    }

    /// The time slab `[t_star - halfwidth, t_star + halfwidth]`.
    pub fn cauchy_neighborhood(&self, t_star: usize, halfwidth: usize) -> Result<Region> {
        if halfwidth == 0 {
            return Err(Error::OutOfBounds(
                "halfwidth must be at least 1".to_string(),
            ));
        }
        if t_star < halfwidth || t_star + halfwidth >= self.spec.n_time {
            return Err(Error::OutOfBounds(format!(
                "slab [{}, {}] leaves the lattice",
                t_star as i64 - halfwidth as i64,
                t_star + halfwidth
            )));
        }
        self.make_region(RegionKind::Interval {
            t0: t_star - halfwidth,
            t1: t_star + halfwidth,
        })
    }

    /// Grid function that is `value` on `sites` and zero elsewhere.
    pub fn indicator(&self, sites: &[usize], value: Complex64) -> Vec<Complex64> {
        let mut f = vec![Complex64::new(0.0, 0.0); self.n_sites()];
        for &s in sites {
            f[s] = value;
        }
        f
    }

    /// The smearing `δ_s / w`, so that `pairing(delta, φ) = φ(s)`.
    pub fn delta(&self, idx: usize) -> Vec<Complex64> {
        self.indicator(&[idx], Complex64::new(1.0 / self.weight, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Interval { t0: usize, t1: usize },
    Diamond { apex: Site, radius: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape_tag", content = "parameters")]
pub enum Shape {
    Interval { t0: usize, t1: usize },
    Diamond { apex_t: usize, apex_x: usize, radius: usize },
    General { sites: Vec<Site> },
}

/// A finite set of lattice sites, sorted by flat index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    sites: Vec<usize>,
    shape: Shape,
}

impl Serialize for Region {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.shape.serialize(serializer)
    }
}

impl Region {
    /// Sentinel used for the support of the zero observable.
    pub fn empty() -> Self {
        Self {
            sites: Vec::new(),
            shape: Shape::General { sites: Vec::new() },
        }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.sites.binary_search(&idx).is_ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|&s| other.contains(s))
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.iter().all(|&s| !other.contains(s))
    }

    pub fn union(&self, other: &Region, lat: &Lattice) -> Region {
        let mut all = self.sites.clone();
        all.extend_from_slice(&other.sites);
        if all.is_empty() {
            return Region::empty();
        }
        lat.general_region(all).expect("union of valid regions")
    }

    pub fn intersection(&self, other: &Region, lat: &Lattice) -> Option<Region> {
        let common: Vec<usize> = self.sites.iter().copied().filter(|&s| other.contains(s)).collect();
        lat.general_region(common).ok()
    }

    pub fn min_t(&self, lat: &Lattice) -> Option<usize> {
        self.sites.first().map(|&s| lat.site(s).t)
    }

    pub fn max_t(&self, lat: &Lattice) -> Option<usize> {
        self.sites.last().map(|&s| lat.site(s).t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegionRelations {
    pub spacelike_separated: bool,
    pub causally_convex_1: bool,
    pub causally_convex_2: bool,
    pub r1_precedes_r2: bool,
    pub r2_precedes_r1: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1d(n: usize) -> Lattice {
        Lattice::new(LatticeSpec::time1d(n, 0.05, 1.0)).unwrap()
    }

    fn m2d(nt: usize, nx: usize) -> Lattice {
        Lattice::new(LatticeSpec::minkowski2d(nt, nx, 0.1, 0.125, 1.0)).unwrap()
    }

    #[test]
    fn build_examples() {
        assert_eq!(t1d(100).n_sites(), 100);
        let l = Lattice::new(LatticeSpec::minkowski2d(40, 16, 0.1, 0.2, 1.0)).unwrap();
        assert_eq!(l.n_sites(), 640);
        let bad = Lattice::new(LatticeSpec::minkowski2d(40, 16, 0.3, 0.2, 1.0));
        assert!(matches!(bad, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn build_rejects_bad_specs() {
        assert!(Lattice::new(LatticeSpec::time1d(10, 0.1, 0.0)).is_err());
        assert!(Lattice::new(LatticeSpec::time1d(10, -0.1, 1.0)).is_err());
        assert!(Lattice::new(LatticeSpec::minkowski2d(100, 64, 0.05, 0.1, 1.0)).is_err());
        // dt = dx leaves no room for a real top-mode frequency
        assert!(Lattice::new(LatticeSpec::minkowski2d(48, 16, 0.1, 0.1, 1.0)).is_err());
    }

    #[test]
    fn causal_relation_examples() {
        let l = t1d(10);
        assert_eq!(
            l.causal_relation(Site::new(3, 0), Site::new(7, 0)).unwrap(),
            CausalRelation::Past
        );
        let m = m2d(10, 16);
        assert_eq!(
            m.causal_relation(Site::new(0, 0), Site::new(2, 5)).unwrap(),
            CausalRelation::Spacelike
        );
        assert_eq!(
            m.causal_relation(Site::new(4, 4), Site::new(4, 4)).unwrap(),
            CausalRelation::Coincident
        );
        // periodic: x = 15 is one step from x = 0
        assert_eq!(
            m.causal_relation(Site::new(0, 0), Site::new(1, 15)).unwrap(),
            CausalRelation::Past
        );
        assert!(m.causal_relation(Site::new(0, 16), Site::new(1, 1)).is_err());
    }

    #[test]
    fn causal_past_order_is_transitive_and_antisymmetric() {
        let l = m2d(12, 12);
        let n = l.n_sites();
        let rel: Vec<Vec<CausalRelation>> = (0..n)
            .map(|a| (0..n).map(|b| l.relation_unchecked(l.site(a), l.site(b))).collect())
            .collect();
        for a in 0..n {
            for b in 0..n {
                let ab = rel[a][b];
                let ba = rel[b][a];
                match ab {
                    CausalRelation::Past => assert_eq!(ba, CausalRelation::Future),
                    CausalRelation::Future => assert_eq!(ba, CausalRelation::Past),
                    other => assert_eq!(ba, other),
                }
                if ab != CausalRelation::Past {
                    continue;
                }
                for c in 0..n {
                    if rel[b][c] == CausalRelation::Past {
                        assert_eq!(rel[a][c], CausalRelation::Past);
                    }
                }
            }
        }
    }

    #[test]
    fn cone_propagation_matches_pairwise_relation() {
        let l = m2d(9, 7);
        for src in [0, 17, 40] {
            let fut = l.causal_future(&[src]);
            let past = l.causal_past(&[src]);
            for j in 0..l.n_sites() {
                let r = l.relation_unchecked(l.site(src), l.site(j));
                assert_eq!(fut[j], matches!(r, CausalRelation::Past | CausalRelation::Coincident));
                assert_eq!(past[j], matches!(r, CausalRelation::Future | CausalRelation::Coincident));
            }
        }
    }

    #[test]
    fn region_examples() {
        let l = t1d(10);
        let r = l.make_region(RegionKind::Interval { t0: 2, t1: 5 }).unwrap();
        assert_eq!(r.len(), 4);
        assert!(l.make_region(RegionKind::Interval { t0: 5, t1: 2 }).is_err());
        assert!(l.make_region(RegionKind::Interval { t0: 5, t1: 10 }).is_err());

        let m = m2d(20, 16);
        let d = m
            .make_region(RegionKind::Diamond {
                apex: Site::new(10, 8),
                radius: 3,
            })
            .unwrap();
        assert_eq!(d.len(), 25);
        assert!(m.is_causally_convex(d.sites()));
    }

    #[test]
    fn regions_are_causally_convex_exhaustive() {
        let m = m2d(9, 9);
        for t in 0..9 {
            for x in 0..9 {
                for radius in 0..=4 {
                    if let Ok(d) = m.make_region(RegionKind::Diamond {
                        apex: Site::new(t, x),
                        radius,
                    }) {
                        let hull = m.causal_hull(d.sites());
                        assert_eq!(hull, d.sites().to_vec());
                        // brute-force convexity on the definition
                        for &a in d.sites() {
                            for &b in d.sites() {
                                if !m.causally_precedes_or_eq(a, b) {
                                    continue;
                                }
                                for c in 0..m.n_sites() {
                                    if m.causally_precedes_or_eq(a, c) && m.causally_precedes_or_eq(c, b) {
                                        assert!(d.contains(c));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for t0 in 0..9 {
            for t1 in t0..9 {
                let r = m.make_region(RegionKind::Interval { t0, t1 }).unwrap();
                assert!(m.is_causally_convex(r.sites()));
            }
        }
        let two_points = m.general_region([m.index(Site::new(0, 0)), m.index(Site::new(4, 0))]).unwrap();
        assert!(!m.is_causally_convex(two_points.sites()));
    }

    #[test]
    fn region_relation_examples() {
        let m = m2d(20, 16);
        let d1 = m
            .make_region(RegionKind::Diamond { apex: Site::new(10, 3), radius: 2 })
            .unwrap();
        let d2 = m
            .make_region(RegionKind::Diamond { apex: Site::new(10, 11), radius: 2 })
            .unwrap();
        let rel = m.region_relations(&d1, &d2);
        assert!(rel.spacelike_separated);
        assert_eq!(rel.spacelike_separated, m.region_relations(&d2, &d1).spacelike_separated);

        let l = t1d(10);
        let a = l.make_region(RegionKind::Interval { t0: 0, t1: 2 }).unwrap();
        let b = l.make_region(RegionKind::Interval { t0: 5, t1: 8 }).unwrap();
        let rel = l.region_relations(&a, &b);
        assert!(rel.r1_precedes_r2);
        assert!(!rel.r2_precedes_r1);
        assert!(!rel.spacelike_separated);
        let same = l.region_relations(&a, &a);
        assert!(!same.r1_precedes_r2 && !same.r2_precedes_r1);
    }

    #[test]
    fn pairing_examples() {
        let l = Lattice::new(LatticeSpec::time1d(10, 0.1, 1.0)).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let e3 = l.indicator(&[3], one);
        assert!((l.pairing(&e3, &e3).unwrap() - 0.1).norm() < 1e-15);
        let e4 = l.indicator(&[4], one);
        assert_eq!(l.pairing(&e3, &e4).unwrap(), Complex64::new(0.0, 0.0));
        let l = t1d(100);
        let c = vec![one; 100];
        assert!((l.pairing(&c, &c).unwrap() - 5.0).norm() < 1e-12);
        assert!(matches!(
            l.pairing(&c, &c[..99]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cauchy_neighborhood_examples() {
        let l = t1d(100);
        let r = l.cauchy_neighborhood(50, 2).unwrap();
        assert_eq!(r.shape(), &Shape::Interval { t0: 48, t1: 52 });
        assert!(l.cauchy_neighborhood(50, 0).is_err());
        assert!(l.cauchy_neighborhood(1, 2).is_err());
        let m = m2d(40, 16);
        let r = m.cauchy_neighborhood(20, 3).unwrap();
        assert_eq!(r.len(), 7 * 16);
        assert!(m.is_causally_convex(r.sites()));
    }

    #[test]
    fn region_serializes_with_shape_tag() {
        let l = t1d(10);
        let r = l.make_region(RegionKind::Interval { t0: 1, t1: 3 }).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["shape_tag"], "Interval");
        assert_eq!(v["parameters"]["t1"], 3);
    }
}
