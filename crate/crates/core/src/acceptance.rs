//! The thirteen acceptance criteria as report-producing functions. The
//! integration test and the command-line suites both run these.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bv::{self, Differential, IdentityConfig};
use crate::comparison::{self, CauchyScenario};
use crate::error::Result;
use crate::lattice::{LatticeSpec, Region, RegionKind, Site};
use crate::models::{self, CoverSpec, ModelTag};
use crate::observables::{random_grid_function, random_observable, PolyObservable, Truncation};
use crate::products::{alpha, exp_product, sigma_unshifted, star, star_commutator, time_ordered};
use crate::propagators::{self, GreenTolerances};
use crate::report::{CheckRecord, CheckReport};
use crate::theory::FreeField;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Inputs shared by all criteria. Heavy checks derive smaller lattices from
/// these specs, keeping `dt`, `dx` and the mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceConfig {
    pub time1d: LatticeSpec,
    pub mink2d: LatticeSpec,
    pub truncation: Truncation,
    pub seed: u64,
    /// Green-identity residual tolerance.
    pub residual_tol: f64,
    /// Relative singular-value threshold for ranks.
    pub rank_tol: f64,
    /// Overwrites one retarded entry outside the cone before criterion 1.
    pub corrupt_kernel: bool,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self {
            time1d: LatticeSpec::time1d(100, 0.05, 1.0),
            mink2d: LatticeSpec::minkowski2d(48, 16, 0.1, 0.125, 1.0),
            truncation: Truncation::default(),
            seed: 1,
            residual_tol: 1e-9,
            rank_tol: 1e-8,
            corrupt_kernel: false,
        }
    }
}

impl AcceptanceConfig {
    fn t1d(&self) -> Result<FreeField> {
        FreeField::new(self.time1d, self.truncation)
    }

    fn t1d_n(&self, n: usize) -> Result<FreeField> {
        FreeField::new(LatticeSpec { n_time: n, ..self.time1d }, self.truncation)
    }

    fn m2d(&self) -> Result<FreeField> {
        FreeField::new(self.mink2d, self.truncation)
    }

    fn m2d_n(&self, nt: usize, nx: usize) -> Result<FreeField> {
        FreeField::new(
            LatticeSpec {
                n_time: nt,
                n_space: nx,
                ..self.mink2d
            },
            self.truncation,
        )
    }
}

pub type CriterionFn = fn(&AcceptanceConfig) -> Result<CheckReport>;

/// `(number, name, function)` for every criterion.
pub const CRITERIA: [(u8, &str, CriterionFn); 13] = [
    (1, "green_identities", criterion_01_green),
    (2, "continuum_convergence", criterion_02_continuum),
    (3, "commutator_relation", criterion_03_commutator),
    (4, "associativity", criterion_04_associativity),
    (5, "einstein_causality", criterion_05_causality),
    (6, "bv_identities", criterion_06_bv),
    (7, "intertwining", criterion_07_intertwining),
    (8, "cohomology", criterion_08_cohomology),
    (9, "hadamard", criterion_09_hadamard),
    (10, "time_slice", criterion_10_time_slice),
    (11, "comparison", criterion_11_comparison),
    (12, "unshifted_bracket", criterion_12_unshifted),
    (13, "weiss_multiplicativity", criterion_13_weiss),
];

/// Runs one criterion and stamps its wall time.
pub fn run(id: u8, cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let (_, _, f) = CRITERIA
        .iter()
        .find(|(n, _, _)| *n == id)
        .ok_or_else(|| crate::Error::UnknownReference(format!("criterion {id}")))?;
    let start = Instant::now();
    let mut rep = f(cfg)?;
    rep.wall_time_s = start.elapsed().as_secs_f64();
    rep.sort();
    Ok(rep)
}

fn prefixed(prefix: &str, rep: CheckReport) -> impl Iterator<Item = CheckRecord> + '_ {
    rep.records.into_iter().map(move |mut r| {
        r.name = format!("{prefix}.{}", r.name);
        r
    })
}

fn new_report(name: &str, cfg: &AcceptanceConfig) -> CheckReport {
    CheckReport::new(name, serde_json::json!({ "seed": cfg.seed, "time1d": cfg.time1d, "mink2d": cfg.mink2d }))
}

fn interval(ff: &FreeField, t0: usize, t1: usize) -> Result<Region> {
    ff.lattice.make_region(RegionKind::Interval { t0, t1 })
}

pub fn criterion_01_green(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let mut rep = new_report("green_identities", cfg);
    let tol = GreenTolerances {
        residual: cfg.residual_tol,
        ..GreenTolerances::default()
    };
    for (label, ff) in [("time1d", cfg.t1d()?), ("mink2d", cfg.m2d()?)] {
        let mut k = ff.kernels.clone();
        if cfg.corrupt_kernel {
            // an acausal entry: source late, target early
            let n = ff.n_sites();
            k.retarded.matrix[(1, n - 2)] += c(1e-3);
        }
        let r = propagators::verify_green_identities(&ff.op, &k, tol);
        rep.records.extend(prefixed(label, r));
    }
    Ok(rep)
}

/// Max `|G^R(a, b) − sin(m(t_a − t_b))/m · θ(t_a − t_b)|` over the time
/// window covered by `n` steps of size `dt`, sampled every `stride` steps.
fn continuum_error(n: usize, dt: f64, mass: f64, stride: usize) -> Result<f64> {
    let ff = FreeField::new(LatticeSpec::time1d(n, dt, mass), Truncation::default())?;
    let g = &ff.kernels.retarded;
    let mut worst: f64 = 0.0;
    for a in (0..n).step_by(stride) {
        for b in (0..n).step_by(stride) {
            let want = if a > b { (mass * (a - b) as f64 * dt).sin() / mass } else { 0.0 };
            worst = worst.max((g.get(a, b) - c(want)).norm());
        }
    }
    Ok(worst)
}

pub fn criterion_02_continuum(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let spec = cfg.time1d;
    let n = spec.n_time;
    let coarse = continuum_error(n, spec.dt, spec.mass, 1)?;
    let fine = continuum_error(2 * n - 1, spec.dt / 2.0, spec.mass, 2)?;
    let ratio = coarse / fine;
    let mut rep = new_report("continuum_convergence", cfg);
    rep.scenario["errors"] = serde_json::json!({ "dt": coarse, "dt_half": fine, "ratio": ratio });
    rep.push(CheckRecord::numeric(
        "convergence.ratio",
        "halving dt divides the error by 4 (ratio within [3.5, 4.5])",
        (ratio - 4.0).abs(),
        0.5,
    ));
    rep.push(CheckRecord::numeric(
        "convergence.coarse_error",
        "G^R approaches sin(m(t−s))/m θ(t−s)",
        coarse,
        1e-2,
    ));
    Ok(rep)
}

pub fn criterion_03_commutator(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d()?;
    let lat = &ff.lattice;
    let w = ff.weight();
    let nt = lat.n_time();
    let mut worst: f64 = 0.0;
    let mut stray: f64 = 0.0;
    for p in 0..100u64 {
        let seed = cfg.seed.wrapping_mul(10_007).wrapping_add(p);
        let pick = |s: u64| -> Vec<usize> {
            let mut v: Vec<usize> = (0..4).map(|i| 1 + ((s.wrapping_mul(2_654_435_761).wrapping_add(i * 40_503)) % (nt as u64 - 2)) as usize).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let f = random_grid_function(lat, &pick(seed), seed);
        let g = random_grid_function(lat, &pick(seed ^ 0x5555), seed + 1);
        let comm = star_commutator(&ff.kernels, &ff.linear(&f)?, &ff.linear(&g)?)?;
        let want = I * ff.kernels.causal.pair(&f, &g, w);
        let got = comm.coefficient(&crate::observables::Monomial::one());
        worst = worst.max((got.coeff(1) - want).norm() / (1.0 + want.norm()));
        stray = stray.max(comm.sub(&PolyObservable::constant(lat, ff.trunc, crate::hbar::HbarPoly::monomial(got.coeff(1), 1))).max_abs());
    }
    let mut rep = new_report("commutator_relation", cfg);
    rep.push(CheckRecord::numeric(
        "commutator.value",
        "[O_f, O_g]_⋆ = iℏ⟨f, G^C g⟩_w",
        worst,
        1e-12,
    ));
    rep.push(CheckRecord::numeric(
        "commutator.no_other_terms",
        "the commutator of linear observables is central and ℏ-linear",
        stray,
        1e-12,
    ));
    Ok(rep)
}

pub fn criterion_04_associativity(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d_n(60)?;
    let lat = &ff.lattice;
    let mid = interval(&ff, 20, 34)?;
    let early = interval(&ff, 10, 16)?;
    let late = interval(&ff, 40, 46)?;
    let rel = |a: &PolyObservable, b: &PolyObservable| a.distance(b) / (1.0 + a.max_abs());
    let (mut s_assoc, mut t_assoc, mut t_star, mut t_opp): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for s in 0..50u64 {
        let seed = cfg.seed.wrapping_mul(7_777).wrapping_add(3 * s);
        let a = random_observable(lat, ff.trunc, &mid, seed, 2, 0)?;
        let b = random_observable(lat, ff.trunc, &mid, seed + 1, 1, 0)?;
        let d = random_observable(lat, ff.trunc, &mid, seed + 2, 1, 0)?;
        let k = &ff.kernels;
        s_assoc = s_assoc.max(rel(&star(k, &star(k, &a, &b)?, &d)?, &star(k, &a, &star(k, &b, &d)?)?));
        t_assoc = t_assoc.max(rel(
            &time_ordered(k, &time_ordered(k, &a, &b)?, &d)?,
            &time_ordered(k, &a, &time_ordered(k, &b, &d)?)?,
        ));
        let x = random_observable(lat, ff.trunc, &late, seed, 2, 0)?;
        let y = random_observable(lat, ff.trunc, &early, seed + 1, 2, 0)?;
        t_star = t_star.max(rel(&time_ordered(k, &x, &y)?, &star(k, &x, &y)?));
        t_opp = t_opp.max(rel(&time_ordered(k, &y, &x)?, &star(k, &x, &y)?));
    }
    let mut rep = new_report("associativity", cfg);
    rep.push(CheckRecord::numeric("assoc.star", "(a⋆b)⋆c = a⋆(b⋆c)", s_assoc, 1e-12));
    rep.push(CheckRecord::numeric("assoc.time_ordered", "(a·_T b)·_T c = a·_T(b·_T c)", t_assoc, 1e-12));
    rep.push(CheckRecord::numeric(
        "ordered.later_first",
        "F₁ later than F₂: F₁ ·_T F₂ = F₁ ⋆ F₂",
        t_star,
        1e-12,
    ));
    rep.push(CheckRecord::numeric(
        "ordered.earlier_first",
        "F₁ earlier than F₂: F₁ ·_T F₂ = F₂ ⋆ F₁",
        t_opp,
        1e-12,
    ));
    Ok(rep)
}

pub fn criterion_05_causality(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.m2d()?;
    let lat = &ff.lattice;
    let (nt, nx) = (lat.n_time(), lat.n_space());
    let r = 2.min(nx / 8).max(1);
    let d = |x| {
        lat.make_region(RegionKind::Diamond {
            apex: Site::new(nt / 2, x),
            radius: r,
        })
    };
    let r1 = d(nx / 4)?;
    let r2 = d(3 * nx / 4)?;
    let mut rep = new_report("einstein_causality", cfg);
    for tag in ModelTag::ALL {
        let h = models::instantiate(tag, &ff);
        let sub = h.einstein_causality_check(&r1, &r2, cfg.seed, 10)?;
        rep.records.extend(prefixed(&format!("{tag:?}"), sub));
    }
    Ok(rep)
}

pub fn criterion_06_bv(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d_n(60)?;
    let r = bv::verify_algebraic_identities(
        &ff,
        cfg.seed,
        IdentityConfig {
            samples: 50,
            ..Default::default()
        },
    )?;
    let control = bv::verify_algebraic_identities(
        &ff,
        cfg.seed,
        IdentityConfig {
            samples: 5,
            corrupt_laplacian: true,
            ..Default::default()
        },
    )?;
    let mut rep = new_report("bv_identities", cfg);
    rep.records.extend(r.records);
    rep.push(CheckRecord::boolean(
        "control.corrupt_laplacian_detected",
        "a sign error in △ breaks the BV Leibniz rule",
        control.find("leibniz.bv").is_some_and(|r| !r.passed()),
    ));
    Ok(rep)
}

pub fn criterion_07_intertwining(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d_n(60)?;
    let ok = bv::intertwine_check(&ff, &ff.kernels.dirac, cfg.seed, 50, 1e-10)?;
    let bad = bv::intertwine_check(&ff, &ff.kernels.causal, cfg.seed, 10, 1e-10)?;
    let mut rep = new_report("intertwining", cfg);
    rep.records.extend(ok.records);
    rep.push(CheckRecord::boolean(
        "control.causal_kernel_fails",
        "with G^C in place of G^D the intertwining fails",
        bad.find("intertwine.random").is_some_and(|r| !r.passed()),
    ));
    Ok(rep)
}

fn cohomology_records(rep: &mut CheckReport, label: &str, ff: &FreeField, region: &Region, sol: usize, up_to: usize, rank_tol: f64) -> Result<()> {
    let cl = bv::cohomology(ff, region, Differential::Classical, up_to, 0, rank_tol)?;
    let want: Vec<usize> = (0..=up_to).map(|n| bv::sym_power_dim(sol, n)).collect();
    rep.scenario[label] = serde_json::json!({ "classical": cl.h0_dims(), "expected": want });
    rep.push(CheckRecord::boolean(
        format!("{label}.classical_h0"),
        "dim H⁰ at degree n = dim Sym^n(ℂ^{2·n_space})",
        cl.h0_dims() == want,
    ));
    rep.push(CheckRecord::boolean(
        format!("{label}.classical_negative"),
        "H^{<0} = 0",
        cl.negative_degrees_vanish(),
    ));
    for h in 1..=2usize {
        let q = bv::cohomology(ff, region, Differential::Quantum, up_to, h, rank_tol)?;
        let expect: Vec<usize> = (0..=up_to)
            .map(|w| (0..=h).filter(|j| 2 * j <= w).map(|j| want[w - 2 * j]).sum())
            .collect();
        rep.push(CheckRecord::boolean(
            format!("{label}.quantum_h{h}"),
            "quantum H⁰ matches classical H⁰ at every ℏ-order",
            q.h0_dims() == expect && q.negative_degrees_vanish(),
        ));
    }
    Ok(())
}

pub fn criterion_08_cohomology(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let mut rep = new_report("cohomology", cfg);
    let t = cfg.t1d_n(20)?;
    let r = interval(&t, 5, 10)?;
    cohomology_records(&mut rep, "time1d", &t, &r, 2, 3, cfg.rank_tol)?;
    let m = cfg.m2d_n(8, 4)?;
    let slab = m.lattice.cauchy_neighborhood(3, 1)?;
    cohomology_records(&mut rep, "mink2d", &m, &slab, 8, 3, cfg.rank_tol)?;
    Ok(rep)
}

pub fn criterion_09_hadamard(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let mut rep = new_report("hadamard", cfg);
    for (label, ff) in [("time1d", cfg.t1d()?), ("mink2d", cfg.m2d_n(24, 16)?)] {
        let k = &ff.kernels;
        rep.push(CheckRecord::numeric(
            format!("{label}.imaginary_part"),
            "2 Im G⁺ = G^C",
            propagators::two_point_imaginary_defect(k),
            0.0,
        ));
        let lam = propagators::two_point_min_eigenvalue(&ff.lattice, k);
        rep.push(CheckRecord::numeric(
            format!("{label}.positivity"),
            "the Hermitian part of w·G⁺ has eigenvalues ≥ −1e−10",
            (-lam).max(0.0),
            1e-10,
        ));
    }
    let ff = cfg.t1d_n(40)?;
    let lat = &ff.lattice;
    let r = interval(&ff, 8, 30)?;
    let k = &ff.kernels;
    let mut twist: f64 = 0.0;
    for s in 0..20u64 {
        let a = random_observable(lat, ff.trunc, &r, cfg.seed.wrapping_add(2 * s), 2, 0)?;
        let b = random_observable(lat, ff.trunc, &r, cfg.seed.wrapping_add(2 * s + 1), 2, 0)?;
        let lhs = alpha(&k.hadamard, c(1.0), &star(k, &a, &b)?);
        let rhs = exp_product(&k.two_point, c(1.0), &alpha(&k.hadamard, c(1.0), &a), &alpha(&k.hadamard, c(1.0), &b))?;
        twist = twist.max(lhs.distance(&rhs) / (1.0 + lhs.max_abs()));
    }
    rep.push(CheckRecord::numeric(
        "twist.star_to_two_point",
        "α_H(a ⋆ b) = α_H a ⋆_{G⁺} α_H b",
        twist,
        1e-10,
    ));
    Ok(rep)
}

pub fn criterion_10_time_slice(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d_n(16)?;
    let lat = &ff.lattice;
    let o = models::bulk_region(lat)?;
    let mut rep = new_report("time_slice", cfg);
    for hw in [2usize, 3] {
        let n = lat.cauchy_neighborhood(8, hw)?;
        let chi = models::make_cutoff(lat, &n, 8 + 1 - hw, 8, 8 + hw - 1)?;
        let r = models::time_slice_check(&ff, &o, &chi, false)?;
        rep.records.extend(prefixed(&format!("halfwidth{hw}"), r));
    }
    let n = lat.cauchy_neighborhood(8, 2)?;
    let chi = models::make_cutoff(lat, &n, 7, 8, 9)?;
    let bad = models::time_slice_check(&ff, &o, &chi, true)?;
    rep.push(CheckRecord::boolean(
        "control.dropped_cutoff_fails",
        "without the cutoff the transport leaves N",
        !bad.passed(),
    ));
    Ok(rep)
}

pub fn criterion_11_comparison(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let mut rep = new_report("comparison", cfg);
    let ff = cfg.t1d_n(40)?;
    let lat = &ff.lattice;
    let n = lat.cauchy_neighborhood(26, 3)?;
    let chi = models::make_cutoff(lat, &n, 24, 26, 28)?;
    let mut explicit: f64 = 0.0;
    let mut solver: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for s in 0..10u64 {
        let seed = cfg.seed.wrapping_mul(101).wrapping_add(2 * s);
        let f = random_grid_function(lat, &[12, 13, 15, 17], seed);
        let g = random_grid_function(lat, &[6, 8, 9], seed + 1);
        let w = comparison::algebra_comparison(&ff, &f, &g, &chi)?;
        explicit = explicit.max(w.explicit_residual);
        solver = solver.max(if w.solver.is_exact() { w.solver.residual() } else { f64::INFINITY });
        oracle = oracle.max(w.hbar1_oracle_gap);
    }
    rep.push(CheckRecord::numeric(
        "time_ordered_vs_star.explicit_witness",
        "m_T(O_{β₊f}, O_g) − O_f ⋆ O_g = δ_S(−O^‡_{χG^R f} · O_g) term by term",
        explicit,
        1e-10,
    ));
    rep.push(CheckRecord::numeric(
        "time_ordered_vs_star.solver_witness",
        "the difference is δ_S-exact (least-squares witness)",
        solver,
        1e-8,
    ));
    rep.push(CheckRecord::numeric(
        "time_ordered_vs_star.hbar1_oracle",
        "ℏ¹: i⟨βf, G^D g⟩ − (i/2)⟨f, G^C g⟩",
        oracle,
        1e-12,
    ));
    let f = random_grid_function(lat, &[14, 16], cfg.seed + 7);
    let g = random_grid_function(lat, &[15, 17], cfg.seed + 8);
    let limit = comparison::one_dim_commutator_limit(&ff, &f, &g, &[24, 30])?;
    rep.records.extend(limit.records);

    let m = cfg.m2d_n(13, 6)?;
    let sc = CauchyScenario {
        pairs: 20,
        ..comparison::default_cauchy_scenario(&m.lattice, cfg.seed)
    };
    let cauchy = comparison::cauchy_algebra_comparison(&m, &sc)?;
    rep.records.extend(cauchy.records);
    Ok(rep)
}

pub fn criterion_12_unshifted(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d()?;
    let lat = &ff.lattice;
    let nt = lat.n_time();
    let mut worst: f64 = 0.0;
    let mut all = true;
    for p in 0..100u64 {
        let seed = cfg.seed.wrapping_mul(4_099).wrapping_add(p);
        let t0 = 1 + (seed as usize % (nt / 2));
        let f = random_grid_function(lat, &[t0, t0 + 3, t0 + 7], seed);
        let g = random_grid_function(lat, &[t0 + 2, t0 + 11], seed + 1);
        let r = sigma_unshifted(&ff, &f, &g)?;
        let scale = r.bracket_value.norm().max(r.peierls_value.norm()).max(1.0);
        worst = worst.max((r.bracket_value - r.peierls_value).norm() / scale);
        all &= r.matches_peierls;
    }
    let mut rep = new_report("unshifted_bracket", cfg);
    rep.push(CheckRecord::numeric(
        "sigma.peierls",
        "{σ(O_f), O_g} = Peierls bracket",
        if all { worst } else { worst.max(f64::INFINITY) },
        1e-12,
    ));
    Ok(rep)
}

pub fn criterion_13_weiss(cfg: &AcceptanceConfig) -> Result<CheckReport> {
    let ff = cfg.t1d_n(20)?;
    let lat = &ff.lattice;
    let h = models::instantiate(ModelTag::CGClassical, &ff);
    let u = interval(&ff, 5, 10)?;
    let mut rep = new_report("weiss_multiplicativity", cfg);
    let cover = CoverSpec::all_but_one(lat, &u, 2)?;
    rep.records.extend(prefixed("all_five_subsets", models::weiss_cosheaf_check(&h, &cover, 2)?));
    let halves = CoverSpec::new(u.clone(), vec![interval(&ff, 5, 7)?, interval(&ff, 8, 10)?], 1)?;
    let bad = models::weiss_cosheaf_check(&h, &halves, 2)?;
    rep.push(CheckRecord::boolean(
        "disjoint_halves.fails",
        "a cover by two halves misses two-point configurations",
        !bad.passed() && bad.find("weiss.surjective").is_some_and(|r| !r.passed()),
    ));
    for tag in ModelTag::ALL {
        let hm = models::instantiate(tag, &ff);
        let m = hm.multiplicativity_check(&interval(&ff, 5, 7)?, &interval(&ff, 8, 10)?, 2)?;
        rep.records.extend(prefixed(&format!("{tag:?}"), m));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupt_kernel_fails_criterion_one() {
        let cfg = AcceptanceConfig {
            time1d: LatticeSpec::time1d(30, 0.05, 1.0),
            mink2d: LatticeSpec::minkowski2d(12, 6, 0.1, 0.125, 1.0),
            corrupt_kernel: true,
            ..Default::default()
        };
        let rep = run(1, &cfg).unwrap();
        assert!(!rep.passed());
        assert!(!rep.find("time1d.support.retarded").unwrap().passed());
    }

    #[test]
    fn unknown_criterion() {
        assert!(run(14, &AcceptanceConfig::default()).is_err());
    }
}
