//! The discrete Klein-Gordon operator and its propagators.
//!
//! Sign convention: `P = □ + m²` with `□ = ∂_t² − ∂_x²`, discretized by the
//! central second difference in time and the periodic second difference in
//! space. Rows of `P` at the first and last time slice are zero; the grid
//! boundary models a truncation of the time axis, no boundary conditions are
//! imposed.
//!
//! Green identities are normalized against the cell volume `w`:
//! `(P G^R)(a, b) = δ(a, b) / w` on interior rows. The retarded kernel is
//! built by a leapfrog recursion with zero data in the past of the source, so
//! its support lies exactly inside the discrete forward cone.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{CausalRelation, Dimension, Lattice};
use crate::linalg;
use crate::report::{CheckRecord, CheckReport};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// The equation-of-motion operator `P` on a lattice.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    lattice: Lattice,
    /// Stencil row per site, `(column, coefficient)`; empty off the interior.
    rows: Vec<Vec<(usize, f64)>>,
}

impl DiscreteOperator {
    pub fn new(lattice: &Lattice) -> Self {
        let n = lattice.n_sites();
        let (dt, dx, m) = (lattice.dt(), lattice.dx(), lattice.mass());
        let nx = lattice.n_space();
        let mut rows = vec![Vec::new(); n];
        for (s, row) in rows.iter_mut().enumerate() {
            if !lattice.is_interior(s) {
                continue;
            }
            let site = lattice.site(s);
            let mut acc: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut add = |j: usize, v: f64| match acc.iter_mut().find(|(c, _)| *c == j) {
                Some(e) => e.1 += v,
                None => acc.push((j, v)),
            };
            let inv_dt2 = 1.0 / (dt * dt);
            add(s - nx, inv_dt2);
            add(s + nx, inv_dt2);
            add(s, -2.0 * inv_dt2 + m * m);
            if lattice.dimension() == Dimension::Minkowski2D {
                let inv_dx2 = 1.0 / (dx * dx);
                let base = site.t * nx;
                add(base + (site.x + 1) % nx, -inv_dx2);
                add(base + (site.x + nx - 1) % nx, -inv_dx2);
                add(s, 2.0 * inv_dx2);
            }
            acc.retain(|&(_, v)| v != 0.0);
            acc.sort_by_key(|&(c, _)| c);
            *row = acc;
        }
        Self {
            lattice: lattice.clone(),
            rows,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn interior_sites(&self) -> Vec<usize> {
        self.lattice.interior_sites()
    }

    /// Stencil coefficients of row `s`; empty when `s` is not interior.
    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| f[j] * v).sum())
            .collect()
    }

    /// `Pᵀ g`. Agrees with `P g` whenever `g` has a one-site margin inside the
    /// interior.
    pub fn apply_transpose(&self, g: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; g.len()];
        for (s, row) in self.rows.iter().enumerate() {
            if g[s] == ZERO {
                continue;
            }
            for &(j, v) in row {
                out[j] += g[s] * v;
            }
        }
        out
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.lattice.n_sites();
        let mut m = DMatrix::zeros(n, n);
        for (s, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(s, j)] = v;
            }
        }
        m
    }

    /// Spatial mode data `(k, λ_k + m², ω_k)` with
    /// `cos(ω_k dt) = 1 − dt² (λ_k + m²) / 2`.
    pub fn modes(&self) -> Result<Vec<Mode>> {
        let lat = &self.lattice;
        let nx = lat.n_space();
        let dt = lat.dt();
        (0..nx)
            .map(|k| {
                let lambda = match lat.dimension() {
                    Dimension::Time1D => 0.0,
                    Dimension::Minkowski2D => {
                        let s = (PI * k as f64 / nx as f64).sin();
                        4.0 * s * s / (lat.dx() * lat.dx())
                    }
                };
                let k2 = lambda + lat.mass() * lat.mass();
                let c = 1.0 - 0.5 * dt * dt * k2;
                if !(c > -1.0 && c < 1.0) {
                    return Err(Error::ModeSingular(k));
                }
                let omega = c.acos() / dt;
                Ok(Mode {
                    k,
                    k2,
                    omega,
                    s: (omega * dt).sin() / dt,
                })
            })
            .collect()
    }

    /// Spatial normalization `1 / (N_x · dx)` (`1` on the time axis).
    fn spatial_norm(&self) -> f64 {
        let lat = &self.lattice;
        match lat.dimension() {
            Dimension::Time1D => 1.0,
            Dimension::Minkowski2D => 1.0 / (lat.n_space() as f64 * lat.dx()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: usize,
    pub k2: f64,
    pub omega: f64,
    /// `sin(ω dt) / dt`
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum KernelKind {
    Retarded,
    Advanced,
    Causal,
    Dirac,
    HadamardSym,
    HadamardTwoPoint,
    Feynman,
}

impl KernelKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "retarded" | "gr" => Self::Retarded,
            "advanced" | "ga" => Self::Advanced,
            "causal" | "gc" => Self::Causal,
            "dirac" | "gd" => Self::Dirac,
            "hadamard" | "h" => Self::HadamardSym,
            "twopoint" | "gplus" | "wightman" => Self::HadamardTwoPoint,
            "feynman" | "gf" => Self::Feynman,
            _ => return None,
        })
    }
}

/// A dense two-point kernel indexed by `(site, site)`.
#[derive(Debug, Clone)]
pub struct PropagatorKernel {
    pub kind: KernelKind,
    pub matrix: DMatrix<Complex64>,
    pub meta: String,
}

impl PropagatorKernel {
    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.matrix[(a, b)]
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(G · w · f)(a) = w Σ_b G(a, b) f(b)`, the kernel as an integral operator.
    pub fn act(&self, f: &[Complex64], w: f64) -> Vec<Complex64> {
        let n = self.n();
        let mut out = vec![ZERO; n];
        for (b, &fb) in f.iter().enumerate() {
            if fb == ZERO {
                continue;
            }
            let col = self.matrix.column(b);
            for a in 0..n {
                out[a] += col[a] * fb;
            }
        }
        out.iter_mut().for_each(|z| *z *= w);
        out
    }

    /// Double pairing `⟨f, G g⟩_w = w² Σ f(a) G(a, b) g(b)`.
    pub fn pair(&self, f: &[Complex64], g: &[Complex64], w: f64) -> Complex64 {
        let gg = self.act(g, w);
        f.iter().zip(&gg).map(|(a, b)| a * b).sum::<Complex64>() * w
    }

    fn transpose_as(&self, kind: KernelKind, meta: &str) -> Self {
        Self {
            kind,
            matrix: self.matrix.transpose(),
            meta: meta.to_string(),
        }
    }
}

/// Retarded kernel by leapfrog recursion, one source column at a time.
pub fn retarded(op: &DiscreteOperator) -> PropagatorKernel {
    let lat = op.lattice();
    let (nt, nx) = (lat.n_time(), lat.n_space());
    let n = lat.n_sites();
    let dt2 = lat.dt() * lat.dt();
    let w = lat.weight();
    let m2 = lat.mass() * lat.mass();
    let inv_dx2 = 1.0 / (lat.dx() * lat.dx());
    let two_d = lat.dimension() == Dimension::Minkowski2D;
    let mut g = DMatrix::<Complex64>::zeros(n, n);
    let mut prev = vec![0.0; nx];
    let mut cur = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    for b in 0..n {
        let src = lat.site(b);
        if src.t + 1 >= nt {
            continue;
        }
        prev.iter_mut().for_each(|v| *v = 0.0);
        cur.iter_mut().for_each(|v| *v = 0.0);
        // first step off the source slice carries the delta
        cur[src.x] = dt2 / w;
        let mut t = src.t + 1;
        loop {
            for x in 0..nx {
                g[(t * nx + x, b)] = Complex64::new(cur[x], 0.0);
            }
            if t + 1 >= nt {
                break;
            }
            for x in 0..nx {
                let mut k = m2 * cur[x];
                if two_d {
                    let l = cur[(x + nx - 1) % nx];
                    let r = cur[(x + 1) % nx];
                    k -= (l - 2.0 * cur[x] + r) * inv_dx2;
                }
                next[x] = 2.0 * cur[x] - prev[x] - dt2 * k;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            t += 1;
        }
    }
    PropagatorKernel {
        kind: KernelKind::Retarded,
        matrix: g,
        meta: "leapfrog recursion, zero data before the source".to_string(),
    }
}

/// Retarded kernel from the closed-form mode sum; an independent route used to
/// cross-check the recursion.
pub fn retarded_mode_sum(op: &DiscreteOperator) -> Result<PropagatorKernel> {
    let lat = op.lattice();
    let modes = op.modes()?;
    let norm = op.spatial_norm();
    let nx = lat.n_space();
    let n = lat.n_sites();
    let dt = lat.dt();
    let table = mode_table(lat, &modes, |m, dtau| (m.omega * dtau as f64 * dt).sin() / m.s);
    let mut g = DMatrix::<Complex64>::zeros(n, n);
    for a in 0..n {
        let sa = lat.site(a);
        for b in 0..n {
            let sb = lat.site(b);
            if sa.t <= sb.t {
                continue;
            }
            let dtau = sa.t - sb.t;
            let dxi = (sa.x + nx - sb.x) % nx;
            g[(a, b)] = Complex64::new(norm * table[dtau][dxi], 0.0);
        }
    }
    Ok(PropagatorKernel {
        kind: KernelKind::Retarded,
        matrix: g,
        meta: "mode sum".to_string(),
    })
}

/// `table[Δt][Δx] = Σ_k cos(2π k Δx / N) f(mode_k, Δt)`.
fn mode_table(lat: &Lattice, modes: &[Mode], f: impl Fn(&Mode, usize) -> f64) -> Vec<Vec<f64>> {
    let nx = lat.n_space();
    (0..lat.n_time())
        .map(|dtau| {
            let per_mode: Vec<f64> = modes.iter().map(|m| f(m, dtau)).collect();
            (0..nx)
                .map(|dxi| {
                    modes
                        .iter()
                        .zip(&per_mode)
                        .map(|(m, v)| (2.0 * PI * (m.k * dxi) as f64 / nx as f64).cos() * v)
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DerivedKernels {
    pub advanced: PropagatorKernel,
    pub causal: PropagatorKernel,
    pub dirac: PropagatorKernel,
}

pub fn derived_kernels(g_r: &PropagatorKernel) -> Result<DerivedKernels> {
    if g_r.kind != KernelKind::Retarded {
        return Err(Error::KindMismatch {
            expected: "Retarded".into(),
            found: format!("{:?}", g_r.kind),
        });
    }
    let advanced = g_r.transpose_as(KernelKind::Advanced, "transpose of retarded");
    let causal = PropagatorKernel {
        kind: KernelKind::Causal,
        matrix: &g_r.matrix - &advanced.matrix,
        meta: "G^R - G^A".into(),
    };
    let dirac = PropagatorKernel {
        kind: KernelKind::Dirac,
        matrix: (&g_r.matrix + &advanced.matrix) * Complex64::new(0.5, 0.0),
        meta: "(G^R + G^A) / 2".into(),
    };
    Ok(DerivedKernels {
        advanced,
        causal,
        dirac,
    })
}

#[derive(Debug, Clone)]
pub struct HadamardFamily {
    pub h: PropagatorKernel,
    pub g_plus: PropagatorKernel,
    pub g_feynman: PropagatorKernel,
}

/// Builds `H` mode by mode, then `G⁺ = (i/2) G^C + H` and `G^F = i G^D + H`.
pub fn hadamard_family(
    op: &DiscreteOperator,
    g_c: &PropagatorKernel,
    g_d: &PropagatorKernel,
) -> Result<HadamardFamily> {
    let lat = op.lattice();
    let modes = op.modes()?;
    let norm = op.spatial_norm();
    let nx = lat.n_space();
    let n = lat.n_sites();
    let dt = lat.dt();
    let table = mode_table(lat, &modes, |m, dtau| {
        (m.omega * dtau as f64 * dt).cos() / (2.0 * m.s)
    });
    let h = DMatrix::<Complex64>::from_fn(n, n, |a, b| {
        let (sa, sb) = (lat.site(a), lat.site(b));
        let dtau = sa.t.abs_diff(sb.t);
        let dxi = (sa.x + nx - sb.x) % nx;
        Complex64::new(norm * table[dtau][dxi], 0.0)
    });
    let i = Complex64::new(0.0, 1.0);
    let half_i = Complex64::new(0.0, 0.5);
    let g_plus = g_c.matrix.map(|z| z * half_i) + &h;
    let g_feynman = g_d.matrix.map(|z| z * i) + &h;
    Ok(HadamardFamily {
        h: PropagatorKernel {
            kind: KernelKind::HadamardSym,
            matrix: h,
            meta: "per-mode cos(ω Δt)/(2 s_k)".into(),
        },
        g_plus: PropagatorKernel {
            kind: KernelKind::HadamardTwoPoint,
            matrix: g_plus,
            meta: "(i/2) G^C + H".into(),
        },
        g_feynman: PropagatorKernel {
            kind: KernelKind::Feynman,
            matrix: g_feynman,
            meta: "i G^D + H".into(),
        },
    })
}

/// All kernels of one operator.
#[derive(Debug, Clone)]
pub struct Kernels {
    pub retarded: PropagatorKernel,
    pub advanced: PropagatorKernel,
    pub causal: PropagatorKernel,
    pub dirac: PropagatorKernel,
    pub hadamard: PropagatorKernel,
    pub two_point: PropagatorKernel,
    pub feynman: PropagatorKernel,
}

impl Kernels {
    pub fn build(op: &DiscreteOperator) -> Result<Self> {
        let retarded = retarded(op);
        let DerivedKernels {
            advanced,
            causal,
            dirac,
        } = derived_kernels(&retarded)?;
        let HadamardFamily { h, g_plus, g_feynman } = hadamard_family(op, &causal, &dirac)?;
        Ok(Self {
            retarded,
            advanced,
            causal,
            dirac,
            hadamard: h,
            two_point: g_plus,
            feynman: g_feynman,
        })
    }

    pub fn get(&self, kind: KernelKind) -> &PropagatorKernel {
        match kind {
            KernelKind::Retarded => &self.retarded,
            KernelKind::Advanced => &self.advanced,
            KernelKind::Causal => &self.causal,
            KernelKind::Dirac => &self.dirac,
            KernelKind::HadamardSym => &self.hadamard,
            KernelKind::HadamardTwoPoint => &self.two_point,
            KernelKind::Feynman => &self.feynman,
        }
    }
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max_{a interior, b} |(P G)(a,b) − c·δ(a,b)/w|`.
fn green_residual(op: &DiscreteOperator, g: &PropagatorKernel, delta_coeff: f64) -> f64 {
    let lat = op.lattice();
    let w = lat.weight();
    let mut worst: f64 = 0.0;
    for a in op.interior_sites() {
        let row = op.row(a);
        for b in 0..g.n() {
            let mut v: Complex64 = row.iter().map(|&(j, c)| g.matrix[(j, b)] * c).sum();
            if a == b {
                v -= delta_coeff / w;
            }
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// Count of nonzero retarded entries outside the strict discrete forward cone.
fn retarded_support_violations(lat: &Lattice, g_r: &PropagatorKernel) -> usize {
    let n = lat.n_sites();
    let mut bad = 0;
    for a in 0..n {
        for b in 0..n {
            if g_r.matrix[(a, b)] != ZERO
                && lat.relation_unchecked(lat.site(b), lat.site(a)) != CausalRelation::Past
            {
                bad += 1;
            }
        }
    }
    bad
}

/// Tolerances for [`verify_green_identities`].
#[derive(Debug, Clone, Copy)]
pub struct GreenTolerances {
    pub residual: f64,
    pub symmetry: f64,
}

impl Default for GreenTolerances {
    fn default() -> Self {
        Self {
            residual: 1e-9,
            symmetry: 1e-12,
        }
    }
}

pub fn verify_green_identities(op: &DiscreteOperator, k: &Kernels, tol: GreenTolerances) -> CheckReport {
    let lat = op.lattice();
    let mut rep = CheckReport::new("green_identities", serde_json::to_value(lat.spec()).unwrap_or_default());
    // Residuals are measured against the unit delta, i.e. multiplied by w.
    let rel = |r: f64| r * lat.weight();
    rep.push(CheckRecord::numeric(
        "residual.retarded",
        "P∘G^R = δ/w",
        rel(green_residual(op, &k.retarded, 1.0)),
        tol.residual,
    ));
    rep.push(CheckRecord::numeric(
        "residual.advanced",
        "P∘G^A = δ/w",
        rel(green_residual(op, &k.advanced, 1.0)),
        tol.residual,
    ));
    rep.push(CheckRecord::numeric(
        "residual.dirac",
        "P∘G^D = δ/w",
        rel(green_residual(op, &k.dirac, 1.0)),
        tol.residual,
    ));
    rep.push(CheckRecord::numeric(
        "residual.causal",
        "P∘G^C = 0",
        rel(green_residual(op, &k.causal, 0.0)),
        tol.residual,
    ));
    rep.push(CheckRecord::numeric(
        "residual.hadamard",
        "P∘H = 0",
        rel(green_residual(op, &k.hadamard, 0.0)),
        tol.residual,
    ));
    let viol = retarded_support_violations(lat, &k.retarded);
    rep.push(CheckRecord::numeric(
        "support.retarded",
        "G^R(a,b) ≠ 0 ⇒ b ≺ a",
        viol as f64,
        0.0,
    ));
    let adv_viol = {
        let t = k.advanced.transpose_as(KernelKind::Retarded, "");
        retarded_support_violations(lat, &t)
    };
    rep.push(CheckRecord::numeric(
        "support.advanced",
        "G^A(a,b) ≠ 0 ⇒ a ≺ b",
        adv_viol as f64,
        0.0,
    ));
    rep.push(CheckRecord::numeric(
        "symmetry.advanced_transpose",
        "G^A = (G^R)ᵀ",
        max_abs(&(&k.advanced.matrix - k.retarded.matrix.transpose())),
        tol.symmetry,
    ));
    rep.push(CheckRecord::numeric(
        "symmetry.causal",
        "G^C = −(G^C)ᵀ",
        max_abs(&(&k.causal.matrix + k.causal.matrix.transpose())),
        tol.symmetry,
    ));
    rep.push(CheckRecord::numeric(
        "symmetry.dirac",
        "G^D = (G^D)ᵀ",
        max_abs(&(&k.dirac.matrix - k.dirac.matrix.transpose())),
        tol.symmetry,
    ));
    rep.push(CheckRecord::numeric(
        "symmetry.hadamard",
        "H = Hᵀ, H real",
        max_abs(&(&k.hadamard.matrix - k.hadamard.matrix.transpose()))
            .max(k.hadamard.matrix.iter().map(|z| z.im.abs()).fold(0.0, f64::max)),
        tol.symmetry,
    ));
    rep.push(CheckRecord::numeric(
        "symmetry.feynman",
        "G^F = (G^F)ᵀ",
        max_abs(&(&k.feynman.matrix - k.feynman.matrix.transpose())),
        tol.symmetry,
    ));
    rep
}

/// `max |2 Im G⁺ − G^C|`.
pub fn two_point_imaginary_defect(k: &Kernels) -> f64 {
    k.two_point
        .matrix
        .iter()
        .zip(k.causal.matrix.iter())
        .map(|(gp, gc)| (2.0 * gp.im - gc.re).abs().max(gc.im.abs()))
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of the Hermitian part of `w · G⁺`.
pub fn two_point_min_eigenvalue(lat: &Lattice, k: &Kernels) -> f64 {
    let m = &k.two_point.matrix * Complex64::new(lat.weight(), 0.0);
    let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigenvalues();
    eig.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Basis of discrete mode solutions of `P u = 0`.
#[derive(Debug, Clone)]
pub struct SolutionSpace {
    pub basis: Vec<Vec<Complex64>>,
    pub dim: usize,
}

pub fn solution_basis(op: &DiscreteOperator) -> Result<SolutionSpace> {
    let lat = op.lattice();
    let modes = op.modes()?;
    let nx = lat.n_space();
    let dt = lat.dt();
    let mut basis = Vec::with_capacity(2 * nx);
    for m in &modes {
        // one real spatial function per mode: cosines up to N/2, sines beyond
        let spatial = |x: usize| {
            let arg = 2.0 * PI * (m.k * x) as f64 / nx as f64;
            if 2 * m.k <= nx {
                arg.cos()
            } else {
                arg.sin()
            }
        };
        for temporal in [f64::cos as fn(f64) -> f64, f64::sin] {
            let u = (0..lat.n_sites())
                .map(|i| {
                    let s = lat.site(i);
                    Complex64::new(spatial(s.x) * temporal(m.omega * s.t as f64 * dt), 0.0)
                })
                .collect();
            basis.push(u);
        }
    }
    Ok(SolutionSpace {
        dim: basis.len(),
        basis,
    })
}

/// Ranks certifying the discrete sequence `0 → D → D → E → E` with maps
/// `P`, `G^C·w`, `P`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactnessRanks {
    pub interior: usize,
    pub rank_p_interior: usize,
    pub rank_p_margin: usize,
    pub dim_ker_gc_interior: usize,
    pub rank_gc_interior: usize,
    pub dim_ker_p_all: usize,
}

pub fn exactness_ranks(op: &DiscreteOperator, g_c: &PropagatorKernel, rel_tol: f64) -> (ExactnessRanks, f64) {
    let lat = op.lattice();
    let n = lat.n_sites();
    let nt = lat.n_time();
    let w = lat.weight();
    let interior = op.interior_sites();
    let margin: Vec<usize> = interior
        .iter()
        .copied()
        .filter(|&i| {
            let t = lat.site(i).t;
            t >= 2 && t + 3 <= nt
        })
        .collect();
    let p = op.matrix();
    let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| p[(rows[i], cols[j])]);
    let all: Vec<usize> = (0..n).collect();
    let p_int = sub(&interior, &interior);
    let p_margin = sub(&interior, &margin);
    let p_all = sub(&interior, &all);
    let gcw_int = DMatrix::from_fn(n, interior.len(), |i, j| g_c.matrix[(i, interior[j])] * w);
    let rank_gc_interior = linalg::rank(&gcw_int, rel_tol);
    let ranks = ExactnessRanks {
        interior: interior.len(),
        rank_p_interior: linalg::rank_real(&p_int, rel_tol),
        rank_p_margin: linalg::rank_real(&p_margin, rel_tol),
        dim_ker_gc_interior: interior.len() - rank_gc_interior,
        rank_gc_interior,
        dim_ker_p_all: n - linalg::rank_real(&p_all, rel_tol),
    };
    // composites that must vanish: G^C w P on margin functions, P G^C w
    let p_margin_c = p_margin.map(|v| Complex64::new(v, 0.0));
    let comp1 = &gcw_int * &p_margin_c;
    let p_all_c = p_all.map(|v| Complex64::new(v, 0.0));
    let comp2 = &p_all_c * &gcw_int;
    let scale = p.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let defect = max_abs(&comp1).max(max_abs(&comp2) / scale.max(1.0));
    (ranks, defect)
}

pub fn exactness_check(op: &DiscreteOperator, g_c: &PropagatorKernel, rel_tol: f64) -> CheckReport {
    let lat = op.lattice();
    let (r, defect) = exactness_ranks(op, g_c, rel_tol);
    let mut rep = CheckReport::new(
        "exactness",
        serde_json::json!({ "lattice": lat.spec(), "ranks": &r, "rank_threshold": rel_tol }),
    );
    let sol_dim = 2 * lat.n_space();
    rep.push(CheckRecord::boolean(
        "injectivity",
        "0 → D →P D exact: rank P|D_int = |int|",
        r.rank_p_interior == r.interior,
    ));
    rep.push(CheckRecord::boolean(
        "exact_at_middle",
        "image P = ker G^C within compactly supported functions",
        r.dim_ker_gc_interior == r.rank_p_margin,
    ));
    rep.push(CheckRecord::boolean(
        "exact_at_solutions",
        "image G^C = ker P",
        r.rank_gc_interior == r.dim_ker_p_all && r.dim_ker_p_all == sol_dim,
    ));
    rep.push(CheckRecord::numeric(
        "composites_vanish",
        "G^C∘P = 0 and P∘G^C = 0",
        defect,
        1e-9,
    ));
    rep
}
