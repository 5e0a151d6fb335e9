//! Run configuration, deterministic manifests, and the CSV/record
//! emitters behind the command-line interface.
//!
//! Configs are flat UTF-8 `key=value` files, one pair per line, `#`
//! comments allowed.  Unknown keys are rejected per subcommand.  Every
//! output begins with a manifest comment block carrying a run id that
//! is a hash of the canonicalized config, so identical configs produce
//! byte-identical outputs (floats are printed with 12 significant
//! digits, `.` decimal separator, `\n` line endings).

use crate::barrier::{certify, CertifyRequest, LemmaId};
use crate::params::{parse_rational, ExponentSet};
use crate::rate::{figure2_sweep, run_rate_experiment, ExperimentPlan, RateReport};
use crate::solver::{build_initial, evolve, BoundaryMode, InitialDataSpec, RadialGrid, Scheme, SolverConfig};
use crate::spectral::{integrate_phi, SpectralProblem};
use crate::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// 12-significant-digit deterministic float formatting.
pub fn fmt_sig(x: f64) -> String {
    crate::util::fmt_sig(x)
}

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit-code contract: 0 pass, 2 precondition failure, 3 certificate or
/// acceptance failure, 4 numerical failure.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) | Error::SingularProfile => 2,
        Error::IntegrationFailure { .. }
        | Error::DtUnderflow { .. }
        | Error::Numerical(_)
        | Error::Io(_) => 4,
    }
}

/// Parsed flat key=value configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
        }
        Ok(RunConfig { map })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        RunConfig {
            map: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; allowed: {}",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let s = self.require(key)?;
        parse_number(s).ok_or_else(|| Error::Config(format!("key {key:?}: bad number {s:?}")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => {
                parse_number(s).ok_or_else(|| Error::Config(format!("key {key:?}: bad number {s:?}")))
            }
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => parse_number(s)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("key {key:?}: bad number {s:?}"))),
        }
    }

    pub fn i64(&self, key: &str) -> Result<i64> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::Config(format!("key {key:?}: expected integer")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("key {key:?}: expected integer"))),
        }
    }

    /// Sorted `key=value` lines; the basis of the run id.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Derives the exponent set from the required `n`, `m` keys, keeping
    /// `m` exact when written as a fraction or decimal.
    pub fn exponents(&self) -> Result<ExponentSet> {
        let n = self.i64("n")?;
        let m = parse_rational(self.require("m")?)?;
        ExponentSet::new(n, m)
    }
}

/// Locale-independent float parsing (decimal or scientific; fractions
/// are resolved exactly).
fn parse_number(s: &str) -> Option<f64> {
    if s.contains('/') {
        let r = parse_rational(s).ok()?;
        return Some(*r.numer() as f64 / *r.denom() as f64);
    }
    let s = s.trim();
    if s.chars().any(|c| !"0123456789+-.eE".contains(c)) {
        return None;
    }
    s.parse().ok()
}

fn manifest_block(subcmd: &str, cfg: &RunConfig, exps: Option<&ExponentSet>) -> String {
    let mut out = format!("# fdlab {subcmd} v{ARTIFACT_VERSION}\n# run_id={}\n", cfg.run_id());
    for line in cfg.canonical().lines() {
        out.push_str("# cfg ");
        out.push_str(line);
        out.push('\n');
    }
    if let Some(e) = exps {
        out.push_str(&format!("# exponents {}\n", exponent_record(e)));
    }
    out
}

fn exponent_record(e: &ExponentSet) -> String {
    format!(
        "n={} m={} mu={} beta={} m_c={} m_star={} l_star={} alpha_star={} k_star={}",
        e.n,
        fmt_sig(e.m),
        fmt_sig(e.mu),
        fmt_sig(e.beta),
        fmt_sig(e.m_c),
        fmt_sig(e.m_star),
        fmt_sig(e.l_star),
        fmt_sig(e.alpha_star),
        fmt_sig(e.k_star)
    )
}

/// Output of one subcommand: files to write plus a stdout record.
#[derive(Debug, Clone, Default)]
pub struct CliOutput {
    /// `(file name, content)`; names derive from `output_path`.
    pub files: Vec<(String, String)>,
    pub stdout: String,
    /// 0 pass, 3 certificate/acceptance failure (precondition and
    /// numerical failures surface as errors instead).
    pub exit: i32,
}

pub fn run_subcommand(name: &str, cfg: &RunConfig) -> Result<CliOutput> {
    match name {
        "exponents" => cmd_exponents(cfg),
        "phi" => cmd_phi(cfg),
        "barrier-check" => cmd_barrier_check(cfg),
        "evolve" => cmd_evolve(cfg),
        "rate-sweep" => cmd_rate_sweep(cfg),
        "figure1" => cmd_figure1(cfg),
        "figure2" => cmd_figure2(cfg),
        other => Err(Error::Config(format!("unknown subcommand {other:?}"))),
    }
}

const COMMON_KEYS: [&str; 4] = ["n", "m", "D", "output_path"];

fn allowed<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    COMMON_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}

fn cmd_exponents(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&[]))?;
    let exps = cfg.exponents()?;
    let _ = cfg.f64("D")?; // required by the config contract
    let record = exponent_record(&exps);
    let mut file = manifest_block("exponents", cfg, Some(&exps));
    file.push_str(&record);
    file.push('\n');
    Ok(CliOutput {
        files: output_file(cfg, file)?,
        stdout: record,
        exit: 0,
    })
}

fn cmd_phi(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&["alpha", "d", "r_max"]))?;
    let exps = cfg.exponents()?;
    let _ = cfg.f64("D")?;
    let alpha = cfg.f64("alpha")?;
    let d = cfg.f64_or("d", 1.0)?;
    let r_max = cfg.f64_or("r_max", 1e4)?;
    let problem = SpectralProblem::new(alpha, d, exps)?;
    let sol = integrate_phi(&problem, r_max, 1e-10)?;

    let mut csv = manifest_block("phi", cfg, Some(&exps));
    csv.push_str("r,phi,dphi\n");
    for i in 0..sol.r.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(sol.r[i]),
            fmt_sig(sol.phi[i]),
            fmt_sig(sol.dphi[i])
        ));
    }
    let summary = match (&sol.first_zero, &sol.tail) {
        (Some(z), _) => format!("first_zero={}", fmt_sig(*z)),
        (None, Some(t)) => format!(
            "first_zero=none tail_exponent={} tail_residual={} window_lo={} window_hi={}",
            fmt_sig(t.exponent),
            fmt_sig(t.residual),
            fmt_sig(t.window.0),
            fmt_sig(t.window.1)
        ),
        (None, None) => "first_zero=none tail_exponent=unfit".to_string(),
    };
    csv.push_str(&format!("# summary {summary}\n"));
    Ok(CliOutput {
        files: output_file(cfg, csv)?,
        stdout: summary,
        exit: 0,
    })
}

fn cmd_barrier_check(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&[
        "lemma", "alpha", "delta", "c", "l", "eta", "b", "t0", "y0", "E",
    ]))?;
    let exps = cfg.exponents()?;
    let profile_d = cfg.f64("D")?;
    let lemma = LemmaId::parse(cfg.require("lemma")?)?;
    let req = match lemma {
        LemmaId::L31 => CertifyRequest::L31 {
            profile_d,
            delta: cfg.f64("delta")?,
            alpha: cfg.opt_f64("alpha")?,
            eta: cfg.opt_f64("eta")?,
            amplitude: cfg.opt_f64("b")?,
        },
        LemmaId::L32 => CertifyRequest::L32 {
            profile_d,
            delta: cfg.f64("delta")?,
            c: cfg.f64_or("c", 0.5)?,
            l: cfg.f64("l")?,
        },
        LemmaId::L33 => CertifyRequest::L33 {
            profile_d,
            c: cfg.f64_or("c", 0.5)?,
            l: cfg.f64("l")?,
        },
        LemmaId::L34 => CertifyRequest::L34 {
            profile_d,
            delta: cfg.f64("delta")?,
            c: cfg.f64_or("c", 0.5)?,
            l: cfg.f64("l")?,
            t0: cfg.f64_or("t0", 1.0)?,
        },
        LemmaId::L41 => CertifyRequest::L41 {
            profile_d,
            e: cfg.opt_f64("E")?,
            c: cfg.f64_or("c", 0.5)?,
            l: cfg.f64("l")?,
        },
        LemmaId::L42 => CertifyRequest::L42 {
            profile_d,
            c: cfg.f64_or("c", 0.5)?,
            l: cfg.f64("l")?,
        },
        LemmaId::T12Upper => CertifyRequest::T12Upper {
            profile_d,
            alpha: cfg.f64("alpha")?,
            y0: cfg.opt_f64("y0")?,
        },
        LemmaId::T12Lower => CertifyRequest::T12Lower {
            profile_d,
            alpha: cfg.f64("alpha")?,
            y0: cfg.opt_f64("y0")?,
        },
    };
    let report = certify(&req, &exps, None)?;
    let record = report.record();
    let mut file = manifest_block("barrier-check", cfg, Some(&exps));
    file.push_str(&record);
    file.push('\n');
    for failure in &report.condition_failures {
        file.push_str(&format!("# condition-failure {failure}\n"));
    }
    Ok(CliOutput {
        files: output_file(cfg, file)?,
        stdout: record,
        exit: if report.pass() { 0 } else { 3 },
    })
}

fn initial_from_config(cfg: &RunConfig, exps: &ExponentSet) -> Result<InitialDataSpec> {
    let d = cfg.f64("D")?;
    let case = cfg.get("case").unwrap_or("i");
    Ok(match case {
        "i" => InitialDataSpec::case_i(
            d,
            cfg.f64_or("delta", 0.5 * d)?,
            cfg.f64_or("c", 0.5)?,
            cfg.f64_or("l", 0.5 * (exps.mu + 2.0 + exps.l_star))?,
        ),
        "ii" => InitialDataSpec::case_ii(
            d,
            cfg.f64_or("c", 0.5)?,
            cfg.f64_or("l", 0.5 * (exps.mu + 2.0 + exps.l_star))?,
        ),
        "iii" => InitialDataSpec::case_iii(
            d,
            cfg.f64_or("c", 0.5)?,
            cfg.f64_or("l", 0.5 * (exps.mu + 2.0 + exps.l_star))?,
        ),
        "custom" => InitialDataSpec::custom(d, cfg.f64_or("amp", -0.5)?),
        other => return Err(Error::Config(format!("unknown case {other:?}"))),
    })
}

fn solver_from_config(cfg: &RunConfig) -> Result<SolverConfig> {
    let mut sc = SolverConfig::default();
    sc.grid_n = cfg.usize_or("grid_n", sc.grid_n)?;
    sc.stretch = cfg.f64_or("stretch", sc.stretch)?;
    sc.r_max = cfg.f64_or("r_max", sc.r_max)?;
    if let Some(c) = cfg.opt_f64("cadence")? {
        sc.cadence = c;
    }
    Ok(sc)
}

fn boundary_is_robin(cfg: &RunConfig) -> Result<bool> {
    match cfg.get("boundary_mode").unwrap_or("robin") {
        "robin" => Ok(true),
        "dirichlet" => Ok(false),
        other => Err(Error::Config(format!(
            "boundary_mode must be robin or dirichlet, got {other:?}"
        ))),
    }
}

fn cmd_evolve(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&[
        "case", "delta", "c", "l", "amp", "r_max", "grid_n", "stretch", "t_end",
        "boundary_mode", "cadence",
    ]))?;
    let exps = cfg.exponents()?;
    let initial = initial_from_config(cfg, &exps)?;
    let t_end = cfg.f64_or("t_end", 10.0)?;
    let mut solver = solver_from_config(cfg)?;
    if cfg.get("cadence").is_none() {
        solver.cadence = t_end / 10.0;
    }
    let profile_d = initial.profile_d;

    let grid = RadialGrid::geometric(solver.grid_n, solver.stretch, solver.r_max)?;
    let mut state = build_initial(&initial, &grid, &exps)?;
    let boundary = if boundary_is_robin(cfg)? {
        let k = match initial.case {
            crate::solver::InitialCase::Custom => (exps.n as f64 - exps.mu - 2.0) / 2.0,
            _ => initial.l - exps.mu - 2.0,
        };
        BoundaryMode::Robin {
            tail_exponent: k,
            target: profile_d,
        }
    } else {
        BoundaryMode::DirichletFrozen {
            value: *state.zeta.last().unwrap(),
        }
    };
    let scheme = Scheme::new(grid, exps, boundary, solver)?;

    let header = manifest_block("evolve", cfg, Some(&exps));
    let mut files = Vec::new();
    let mut snap_idx = 0usize;
    let base = cfg.get("output_path").map(|s| s.to_string());
    let (records, stats) = evolve(&scheme, &mut state, t_end, profile_d, |t, zeta| {
        if let Some(base) = &base {
            let mut csv = header.clone();
            csv.push_str(&format!("# t={}\n", fmt_sig(t)));
            csv.push_str("r,v,zeta\n");
            for (&z, &r) in zeta.iter().zip(&scheme.grid.r) {
                let v = (r * r + z).powf(-exps.mu / 2.0);
                csv.push_str(&format!("{},{},{}\n", fmt_sig(r), fmt_sig(v), fmt_sig(z)));
            }
            files.push((format!("{base}_{snap_idx:04}.csv"), csv));
            snap_idx += 1;
        }
    })?;
    let last = records.last().unwrap();
    let stdout = format!(
        "t_end={} steps={} sup_final={} tail_final={} snapshots={}",
        fmt_sig(last.t),
        stats.steps,
        fmt_sig(last.sup.grid_sup),
        fmt_sig(last.sup.tail_estimate),
        snap_idx
    );
    if let Some(base) = &base {
        let mut manifest = header.clone();
        manifest.push_str(&stdout);
        manifest.push('\n');
        files.push((format!("{base}_manifest.txt"), manifest));
    }
    Ok(CliOutput {
        files,
        stdout,
        exit: 0,
    })
}

fn sweep_exponents(cfg: &RunConfig, exps: &ExponentSet) -> Result<Vec<f64>> {
    if let Some(l) = cfg.opt_f64("l")? {
        return Ok(vec![l]);
    }
    let lo = cfg.f64_or("l_min", exps.mu + 2.2)?;
    let hi = cfg.f64_or("l_max", exps.l_star - 0.2)?;
    let count = cfg.usize_or("l_count", 3)?;
    if count < 1 || hi < lo {
        return Err(Error::Config("bad sweep range".into()));
    }
    Ok((0..count)
        .map(|i| {
            if count == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect())
}

fn cmd_rate_sweep(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&[
        "case", "delta", "c", "l", "l_min", "l_max", "l_count", "r_max", "grid_n",
        "stretch", "t_end", "boundary_mode", "sens",
    ]))?;
    let exps = cfg.exponents()?;
    let ls = sweep_exponents(cfg, &exps)?;
    let solver = solver_from_config(cfg)?;
    let t_end = cfg.f64_or("t_end", 30.0)?;
    let sens = cfg.f64_or("sens", 1.0)? != 0.0;
    let robin = boundary_is_robin(cfg)?;

    let mut csv = manifest_block("rate-sweep", cfg, Some(&exps));
    csv.push_str("l,target_rate,fitted_rate,rel_err,rmax_sensitivity\n");
    let mut stdout = String::new();
    let mut all_ok = true;
    for &l in &ls {
        let mut initial = initial_from_config(cfg, &exps)?;
        initial.l = l;
        let mut plan = ExperimentPlan::new(exps, initial);
        plan.solver = solver;
        plan.t_end = t_end;
        plan.robin_boundary = robin;
        plan.sensitivities = sens;
        let report = run_rate_experiment(&plan)?;
        let row = render_sweep_row(l, &report);
        csv.push_str(&row);
        csv.push('\n');
        stdout.push_str(&render_sweep_record(l, &report));
        stdout.push('\n');
        if !report.accepted() || report.rel_err.map(|e| e >= 0.10).unwrap_or(true) {
            all_ok = false;
        }
    }
    stdout.pop();
    Ok(CliOutput {
        files: output_file(cfg, csv)?,
        stdout,
        exit: if all_ok { 0 } else { 3 },
    })
}

fn render_sweep_row(l: f64, rep: &RateReport) -> String {
    format!(
        "{},{},{},{},{}",
        fmt_sig(l),
        fmt_sig(rep.target.unwrap_or(f64::NAN)),
        fmt_sig(rep.fitted.unwrap_or(f64::NAN)),
        fmt_sig(rep.rel_err.unwrap_or(f64::NAN)),
        fmt_sig(rep.sens_rmax.unwrap_or(f64::NAN))
    )
}

fn render_sweep_record(l: f64, rep: &RateReport) -> String {
    let mut s = format!(
        "l={} target={} fitted={} rel_err={}",
        fmt_sig(l),
        fmt_sig(rep.target.unwrap_or(f64::NAN)),
        fmt_sig(rep.fitted.unwrap_or(f64::NAN)),
        fmt_sig(rep.rel_err.unwrap_or(f64::NAN))
    );
    if let Some((t1, t2)) = rep.window {
        s.push_str(&format!(" window_lo={} window_hi={}", fmt_sig(t1), fmt_sig(t2)));
    }
    if let Some(d) = rep.sens_rmax {
        s.push_str(&format!(" sens_rmax={}", fmt_sig(d)));
    }
    if let Some(d) = rep.sens_n {
        s.push_str(&format!(" sens_n={}", fmt_sig(d)));
    }
    s.push_str(&format!(" tail_final={}", fmt_sig(rep.tail_at_end)));
    s.push_str(&format!(" accepted={}", rep.accepted()));
    if !rep.flags.is_empty() {
        s.push_str(&format!(" flags={}", rep.flags.len()));
    }
    s
}

fn cmd_figure1(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&[]))?;
    let n = cfg.i64("n")?;
    let _ = cfg.f64("D")?;
    let m_lo = cfg.f64("m")?;
    let exps_lo = ExponentSet::from_f64(n, m_lo)?;
    let m_star = exps_lo.m_star;

    let mut csv = manifest_block("figure1", cfg, Some(&exps_lo));
    csv.push_str("m,l_star,mu_plus_2\n");
    const ROWS: usize = 51;
    for i in 0..ROWS {
        let m = m_lo + (m_star - m_lo) * i as f64 / ROWS as f64;
        let e = ExponentSet::from_f64(n, m)?;
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(m),
            fmt_sig(e.l_star),
            fmt_sig(e.mu + 2.0)
        ));
    }
    Ok(CliOutput {
        files: output_file(cfg, csv)?,
        stdout: format!("rows={ROWS} m_lo={} m_star={}", fmt_sig(m_lo), fmt_sig(m_star)),
        exit: 0,
    })
}

fn cmd_figure2(cfg: &RunConfig) -> Result<CliOutput> {
    cfg.check_keys(&allowed(&["l_count"]))?;
    let exps = cfg.exponents()?;
    let _ = cfg.f64("D")?;
    let count = cfg.usize_or("l_count", 100)?;
    if count < 2 {
        return Err(Error::Config("l_count must be >= 2".into()));
    }
    let lo = exps.mu + 2.0;
    let ls: Vec<f64> = (1..=count)
        .map(|i| lo + (exps.l_star - lo) * i as f64 / count as f64)
        .collect();
    let rows = figure2_sweep(&exps, &ls)?;
    let mut csv = manifest_block("figure2", cfg, Some(&exps));
    csv.push_str("l,rate\n");
    for (l, rate) in &rows {
        csv.push_str(&format!("{},{}\n", fmt_sig(*l), fmt_sig(*rate)));
    }
    csv.push_str(&format!("# alpha_star={}\n", fmt_sig(exps.alpha_star)));
    Ok(CliOutput {
        files: output_file(cfg, csv)?,
        stdout: format!("rows={} alpha_star={}", rows.len(), fmt_sig(exps.alpha_star)),
        exit: 0,
    })
}

fn output_file(cfg: &RunConfig, content: String) -> Result<Vec<(String, String)>> {
    Ok(match cfg.get("output_path") {
        Some(path) => vec![(path.to_string(), content)],
        None => Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_sig_reference_cases() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(5.0), "5");
        assert_eq!(fmt_sig(0.25), "0.25");
        assert_eq!(fmt_sig(-4.0), "-4");
        assert_eq!(fmt_sig(1e-7), "0.0000001");
        assert_eq!(fmt_sig(733.5), "733.5");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_sig(1e20), "1e20");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }

    #[test]
    fn config_parsing_and_rejection() {
        let cfg = RunConfig::parse("# comment\nn=6\nm = 0\nD=1\n\n").unwrap();
        assert_eq!(cfg.get("m"), Some("0"));
        assert_eq!(cfg.i64("n").unwrap(), 6);
        assert!(cfg.check_keys(&["n", "m", "D"]).is_ok());
        assert!(cfg.check_keys(&["n", "m"]).is_err());

        assert!(RunConfig::parse("n 6").is_err());
        assert!(RunConfig::parse("n=6\nn=7").is_err());
    }

    #[test]
    fn run_id_is_order_independent_and_stable() {
        let a = RunConfig::parse("n=6\nm=0\nD=1").unwrap();
        let b = RunConfig::parse("D=1\nm=0\nn=6").unwrap();
        assert_eq!(a.run_id(), b.run_id());
        let c = RunConfig::parse("n=6\nm=0\nD=2").unwrap();
        assert_ne!(a.run_id(), c.run_id());
    }

    #[test]
    fn exponent_command_prints_reference_record() {
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1")]);
        let out = cmd_exponents(&cfg).unwrap();
        assert!(out.stdout.contains("mu=2"));
        assert!(out.stdout.contains("beta=0.25"));
        assert!(out.stdout.contains("l_star=5"));
        assert!(out.stdout.contains("alpha_star=1"));
        assert_eq!(out.exit, 0);
    }

    #[test]
    fn exponent_command_rejects_bad_regimes() {
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0.5"), ("D", "1")]);
        let err = cmd_exponents(&cfg).unwrap_err();
        assert!(err.to_string().contains("m must be < m_star=0.5"));
        assert_eq!(exit_code_for(&err), 2);

        let cfg = RunConfig::from_pairs(&[("n", "2"), ("m", "0"), ("D", "1")]);
        assert_eq!(exit_code_for(&cmd_exponents(&cfg).unwrap_err()), 2);
    }

    #[test]
    fn figure1_rows_and_asymptote() {
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1"), ("output_path", "f1.csv")]);
        let out = cmd_figure1(&cfg).unwrap();
        let content = &out.files[0].1;
        let first_row = content
            .lines()
            .skip_while(|l| l.starts_with('#') || l.starts_with('m'))
            .next()
            .unwrap();
        assert_eq!(first_row, "0,5,4");
        let last_row = content.lines().last().unwrap();
        let cols: Vec<f64> = last_row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(cols[1] > 5.9 && cols[1] < 6.0, "l_star -> n: {last_row}");
        assert!(cols[2] > 5.9 && cols[2] < 6.0, "mu+2 -> n: {last_row}");
    }

    #[test]
    fn figure2_contains_peak_row_and_footer() {
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1"), ("output_path", "f2.csv")]);
        let out = cmd_figure2(&cfg).unwrap();
        let content = &out.files[0].1;
        assert!(content.lines().any(|l| l == "5,1"), "peak row missing");
        assert!(content.lines().any(|l| l == "4.5,0.75"));
        assert!(content.trim_end().ends_with("# alpha_star=1"));
        // deterministic re-run
        let again = cmd_figure2(&cfg).unwrap();
        assert_eq!(content, &again.files[0].1);
    }

    #[test]
    fn phi_command_reports_sign_change_and_rejects_zero_rate() {
        let cfg = RunConfig::from_pairs(&[
            ("n", "6"),
            ("m", "0"),
            ("D", "1"),
            ("alpha", "1.2"),
            ("d", "1"),
            ("r_max", "1e6"),
        ]);
        let out = cmd_phi(&cfg).unwrap();
        assert!(out.stdout.starts_with("first_zero="));
        assert!(!out.stdout.contains("none"));

        let bad = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1"), ("alpha", "0")]);
        assert_eq!(exit_code_for(&cmd_phi(&bad).unwrap_err()), 2);
    }

    #[test]
    fn unknown_keys_are_rejected_per_subcommand() {
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1"), ("bogus", "1")]);
        assert!(cmd_exponents(&cfg).is_err());
        let cfg = RunConfig::from_pairs(&[("n", "6"), ("m", "0"), ("D", "1"), ("lemma", "L3.1")]);
        assert!(cmd_exponents(&cfg).is_err());
    }
}
