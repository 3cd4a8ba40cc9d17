//! Building, caching and validating the reference solvers.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rsmote::oracles::{load_or_build, validate_oracle, CacheStatus, SolverId, ValidationReport};

#[derive(Debug, Clone)]
pub struct OracleStatus {
    pub solver: SolverId,
    pub cache: CacheStatus,
    /// The stored report was reused because the grid came from the cache.
    pub validation_reused: bool,
    pub report: ValidationReport,
}

/// Loads or builds each solver's cached grid in `cache_dir` and validates it.
/// A report stored in `report_dir` is reused only on a cache hit.
pub fn prebuild_oracles(solvers: &[SolverId], cache_dir: &Path, report_dir: &Path) -> Result<Vec<OracleStatus>> {
    fs::create_dir_all(report_dir)?;
    let mut out = Vec::new();
    for &solver in solvers {
        let (_, cache) = load_or_build(solver, solver.default_resolution(), cache_dir)
            .with_context(|| format!("building {solver}"))?;
        let stored = report_dir.join(format!("{}-validation.json", solver.as_str()));
        let reused = match cache {
            CacheStatus::Hit => fs::read(&stored)
                .ok()
                .and_then(|b| serde_json::from_slice::<ValidationReport>(&b).ok())
                .filter(|r| r.solver == solver),
            _ => None,
        };
        let validation_reused = reused.is_some();
        let report = match reused {
            Some(r) => r,
            None => {
                let r = validate_oracle(solver).with_context(|| format!("validating {solver}"))?;
                r.write_json(report_dir)?;
                r
            }
        };
        out.push(OracleStatus { solver, cache, validation_reused, report });
    }
    Ok(out)
}

pub fn parse_solver(s: &str) -> Result<SolverId, String> {
    SolverId::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
        let names: Vec<&str> = SolverId::ALL.iter().map(SolverId::as_str).collect();
        format!("unknown solver {s:?}; expected one of {}", names.join(", "))
    })
}
