//! Plot-ready dumps: kernels as CSV, observables and cohomology tables as JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use freefield::bv::{self, Differential};
use freefield::lattice::{Region, RegionKind, Site};
use freefield::models;
use freefield::observables::random_observable;
use freefield::propagators::KernelKind;
use freefield::theory::FreeField;
use freefield::Error;
use serde_json::json;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DumpTarget {
    Kernel(KernelKind),
    Observable(String),
    Cohomology(String),
}

impl DumpTarget {
    pub fn parse(s: &str) -> Result<Self, Error> {
        let unknown = || Error::UnknownReference(s.to_string());
        let (what, arg) = s.split_once(':').ok_or_else(unknown)?;
        match what {
            "kernel" => KernelKind::parse(arg).map(Self::Kernel).ok_or_else(unknown),
            "observable" => Ok(Self::Observable(arg.to_string())),
            "cohomology" => Ok(Self::Cohomology(arg.to_string())),
            _ => Err(unknown()),
        }
    }
}

/// File-name friendly form of a reference.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn num<T: std::str::FromStr>(s: &str, whole: &str) -> Result<T, Error> {
    s.trim().parse().map_err(|_| Error::UnknownReference(whole.to_string()))
}

/// `t` or `t,x`, checked against the lattice.
fn parse_site(ff: &FreeField, s: &str, whole: &str) -> Result<usize, Error> {
    let site = match s.split_once(',') {
        Some((t, x)) => Site::new(num(t, whole)?, num(x, whole)?),
        None => Site::new(num(s, whole)?, 0),
    };
    ff.lattice.check_site(site)?;
    Ok(ff.lattice.index(site))
}

/// `full`, `bulk`, `interval:T0-T1` or `slab:T:HW`.
pub fn parse_region(ff: &FreeField, s: &str) -> Result<Region, Error> {
    let lat = &ff.lattice;
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["full"] => Ok(lat.full_region()),
        ["bulk"] => models::bulk_region(lat),
        ["interval", range] => {
            let (a, b) = range.split_once('-').ok_or_else(|| Error::UnknownReference(s.to_string()))?;
            lat.make_region(RegionKind::Interval {
                t0: num(a, s)?,
                t1: num(b, s)?,
            })
        }
        ["slab", t, hw] => lat.cauchy_neighborhood(num(t, s)?, num(hw, s)?),
        _ => Err(Error::UnknownReference(s.to_string())),
    }
}

fn kernel_csv(ff: &FreeField, kind: KernelKind) -> String {
    let k = ff.kernels.get(kind);
    let n = k.n();
    let mut out = String::with_capacity(n * n * 40);
    out.push_str("row_site,col_site,re,im\n");
    for a in 0..n {
        for b in 0..n {
            let z = k.get(a, b);
            let _ = writeln!(out, "{a},{b},{},{}", z.re, z.im);
        }
    }
    out
}

fn observable_json(ff: &FreeField, id: &str, seed: u64) -> Result<serde_json::Value, Error> {
    let lat = &ff.lattice;
    let whole = format!("observable:{id}");
    let (kind, arg) = id.split_once(':').ok_or_else(|| Error::UnknownReference(whole.clone()))?;
    let obs = match kind {
        "phi" => ff.linear(&lat.delta(parse_site(ff, arg, &whole)?))?,
        "antifield" => ff.vector(&lat.delta(parse_site(ff, arg, &whole)?))?,
        "random" => {
            let bulk = models::bulk_region(lat)?;
            let s: u64 = num(arg, &whole)?;
            random_observable(lat, ff.trunc, &bulk, seed.wrapping_add(s), 2.min(ff.trunc.d_max), 1.min(ff.trunc.a_max))?
        }
        _ => return Err(Error::UnknownReference(whole)),
    };
    Ok(json!({
        "schema": 1,
        "id": id,
        "lattice": lat.spec(),
        "truncation": ff.trunc,
        "terms": obs.to_json_terms(),
    }))
}

/// Classical cohomology dims table. Degrees whose cochain blocks exceed the
/// dense cap are dropped from the top.
pub fn cohomology_table(ff: &FreeField, region_ref: &str, cfg: &RunConfig) -> Result<serde_json::Value, Error> {
    let region = parse_region(ff, region_ref)?;
    let mut degree = cfg.cohomology_degree;
    loop {
        match bv::cohomology(ff, &region, Differential::Classical, degree, 0, cfg.rank_tol) {
            Ok(rep) => {
                return Ok(json!({
                    "schema": 1,
                    "region": region_ref,
                    "lattice": ff.lattice.spec(),
                    "requested_degree": cfg.cohomology_degree,
                    "max_degree": degree,
                    "h0_dims": rep.h0_dims(),
                    "report": rep,
                }))
            }
            Err(Error::SizeCap { .. }) if degree > 0 => degree -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Plain-text rendering of a cohomology table: one row per total degree.
pub fn render_table(v: &serde_json::Value) -> String {
    let mut s = String::from("degree  dim H^0  dim H^-1  dim H^-2\n");
    if let Some(blocks) = v["report"]["blocks"].as_array() {
        for b in blocks {
            let d = |k: usize| b["dims"].get(k).and_then(|x| x.as_u64()).map_or("-".to_string(), |x| x.to_string());
            let _ = writeln!(s, "{:>6}  {:>7}  {:>8}  {:>8}", b["total_degree"], d(0), d(1), d(2));
        }
    }
    s
}

/// Writes one dump into `out` and returns the written path.
pub fn dump(cfg: &RunConfig, target: &DumpTarget, out: &Path) -> Result<PathBuf, DumpError> {
    let ff = cfg.theory()?;
    fs::create_dir_all(out)?;
    let (path, text) = match target {
        DumpTarget::Kernel(kind) => (
            out.join(format!("kernel_{}.csv", format!("{kind:?}").to_lowercase())),
            kernel_csv(&ff, *kind),
        ),
        DumpTarget::Observable(id) => (
            out.join(format!("observable_{}.json", slug(id))),
            serde_json::to_string_pretty(&observable_json(&ff, id, cfg.seed)?)?,
        ),
        DumpTarget::Cohomology(r) => (
            out.join(format!("cohomology_{}.json", slug(r))),
            serde_json::to_string_pretty(&cohomology_table(&ff, r, cfg)?)?,
        ),
    };
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            time1d_n_time: 12,
            ..RunConfig::default()
        }
    }

    #[test]
    fn parse_targets() {
        assert_eq!(DumpTarget::parse("kernel:retarded").unwrap(), DumpTarget::Kernel(KernelKind::Retarded));
        assert!(matches!(DumpTarget::parse("kernel:nope"), Err(Error::UnknownReference(_))));
        assert!(matches!(DumpTarget::parse("plot:x"), Err(Error::UnknownReference(_))));
        assert!(matches!(DumpTarget::parse("kernel"), Err(Error::UnknownReference(_))));
    }

    #[test]
    fn retarded_csv_has_one_row_per_pair() {
        let cfg = small();
        let ff = cfg.theory().unwrap();
        let csv = kernel_csv(&ff, KernelKind::Retarded);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "row_site,col_site,re,im");
        assert_eq!(lines.len() - 1, 144);
        // row 1 sees the source at row 0 one step later: G^R = dt
        let r = lines.iter().find(|l| l.starts_with("1,0,")).unwrap();
        let re: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!((re - 0.05).abs() < 1e-15);
    }

    #[test]
    fn observable_refs() {
        let cfg = small();
        let ff = cfg.theory().unwrap();
        let v = observable_json(&ff, "phi:3", 1).unwrap();
        assert_eq!(v["terms"][0]["n"], 1);
        assert!(observable_json(&ff, "phi:40", 1).is_err());
        assert!(matches!(observable_json(&ff, "psi:1", 1), Err(Error::UnknownReference(_))));
        assert!(observable_json(&ff, "random:2", 1).is_ok());
    }

    #[test]
    fn full_cohomology_table() {
        let cfg = small();
        let ff = cfg.theory().unwrap();
        let v = cohomology_table(&ff, "full", &cfg).unwrap();
        assert_eq!(v["h0_dims"], json!([1, 2, 3]));
        assert!(render_table(&v).lines().count() == 4);
        assert!(matches!(cohomology_table(&ff, "half", &cfg), Err(Error::UnknownReference(_))));
    }
}
