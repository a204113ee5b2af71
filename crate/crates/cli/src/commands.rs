use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use qdspec::criteria::{brinck_constant, classify_discreteness, molchanov_profile, Classification};
use qdspec::forms::{default_cuts, form_lower_bound_check, potential_energy, FormReport, LowerBoundMargins};
use qdspec::lab::{run_suite, SuiteReport, SUITES, TOLERANCE};
use qdspec::measure::{AlphaRule, GeneratorSpec};
use qdspec::quasi_ode::Propagator;
use qdspec::spectral::{spectrum_scan, ScanSettings, SpectralError, WindowRule};
use qdspec::{
    BrinckReport, BvPotential, GridFunction, MolchanovProfile, PotentialSpec, PrueferState, SpectrumReport, Tolerances,
};
use serde::Serialize;

use crate::output::{config_digest, csv_table, emit, num, Artifact};
use crate::{Command, Failure, RunConfig};

type Outcome = Result<(), Failure>;

trait OrFail<T> {
    fn or_input(self) -> Result<T, Failure>;
    fn or_numeric(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn or_input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
    fn or_numeric(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Numeric(e.into()))
    }
}

fn spectral_failure(e: SpectralError) -> Failure {
    match e {
        SpectralError::LowerBoundBreach { .. } => Failure::Violation(e.to_string()),
        SpectralError::BadTolerance | SpectralError::Measure(_) => Failure::Input(e.into()),
        _ => Failure::Numeric(e.into()),
    }
}

pub fn run(config: &RunConfig) -> Outcome {
    check_config(config)?;
    match &config.command {
        Command::Brinck => brinck(config),
        Command::Molchanov { n_starts } => molchanov(config, *n_starts),
        Command::Shoot { lambda, points } => shoot(config, *lambda, *points),
        Command::Spectrum { e_ref, half_line } => spectrum(config, *e_ref, *half_line),
        Command::Form { u, cuts } => form(config, u, *cuts),
        Command::Verify { suite } => verify(config, suite.as_deref()),
        Command::Reproduce { rho, alpha, length, e_ref } => reproduce(config, *rho, *alpha, *length, *e_ref),
    }
}

fn check_config(config: &RunConfig) -> Outcome {
    let positive = |name: &str, x: f64| {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Failure::Input(anyhow!("--{name} must be positive and finite, got {x}")))
        }
    };
    positive("tol-lambda", config.tol_lambda)?;
    positive("tol-ode", config.tol_ode)?;
    if let Some(h) = config.h {
        positive("h", h)?;
    }
    for &l in &config.l_list {
        positive("L", l)?;
    }
    if config.l_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Input(anyhow!("--L values must be strictly increasing")));
    }
    Ok(())
}

fn tolerances(config: &RunConfig) -> Tolerances {
    Tolerances { tol_lambda: config.tol_lambda, tol_ode: config.tol_ode }
}

/// Reads and builds `--spec`, returning the potential and the raw bytes.
fn load_spec(config: &RunConfig) -> Result<(BvPotential, Vec<u8>), Failure> {
    let path = config.spec.as_ref().ok_or_else(|| Failure::Input(anyhow!("--spec is required")))?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display())).or_input()?;
    let text =
        String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display())).or_input()?;
    let spec = PotentialSpec::from_json(&text).with_context(|| format!("parsing {}", path.display())).or_input()?;
    let p = spec.build().with_context(|| format!("building {}", path.display())).or_input()?;
    Ok((p, bytes))
}

fn brinck_csv(r: &BrinckReport) -> String {
    csv_table(
        &["cap", "sup_neg", "sup_neg_half_open", "c", "lower_bound", "witness_a", "witness_b"],
        [vec![
            num(r.cap),
            num(r.sup_neg),
            num(r.sup_neg_half_open),
            num(r.c),
            num(r.lower_bound),
            num(r.witness.a),
            num(r.witness.b),
        ]],
    )
}

fn brinck(config: &RunConfig) -> Outcome {
    let (p, bytes) = load_spec(config)?;
    let report = brinck_constant(&p, config.h.unwrap_or(1.0)).or_input()?;
    let digest = config_digest(config, &[&bytes]);
    let md = format!(
        "| C | bound -2C² | sup of negative mass | half-open sup |\n|---|---|---|---|\n| {} | {} | {} | {} |\n",
        report.c, report.lower_bound, report.sup_neg, report.sup_neg_half_open
    );
    let art = Artifact::new("brinck", config, &digest, &report).with_csv(brinck_csv(&report)).with_md(md);
    emit(config, &[art]).or_input()
}

#[derive(Serialize)]
struct MolchanovReport {
    profile: MolchanovProfile,
    classification: Classification,
}

fn profile_csv(p: &MolchanovProfile) -> String {
    let rows =
        p.starts.iter().zip(&p.window_integrals).map(|(&a, &m)| vec![num(a), num(m), num(p.running_inf_at(a.abs()))]);
    csv_table(&["start", "window_integral", "running_inf"], rows)
}

fn molchanov(config: &RunConfig, n_starts: usize) -> Outcome {
    let (p, bytes) = load_spec(config)?;
    let profile = molchanov_profile(&p, config.h.unwrap_or(1.0), n_starts).or_input()?;
    let classification = classify_discreteness(&profile, 2.0, 0.1);
    let digest = config_digest(config, &[&bytes]);
    let csv = profile_csv(&profile);
    let report = MolchanovReport { profile, classification };
    let art = Artifact::new("molchanov", config, &digest, &report).with_csv(csv);
    emit(config, &[art]).or_input()
}

#[derive(Serialize)]
struct ShootSample {
    x: f64,
    theta: f64,
    rho: f64,
    u: f64,
    quasi: f64,
}

#[derive(Serialize)]
struct ShootReport {
    lambda: f64,
    theta_end: f64,
    samples: Vec<ShootSample>,
}

fn shoot(config: &RunConfig, lambda: f64, points: usize) -> Outcome {
    let (p, bytes) = load_spec(config)?;
    if points < 2 {
        return Err(Failure::Input(anyhow!("--points must be at least 2")));
    }
    let (lo, hi) = (p.lo(), p.hi());
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let prop = Propagator::new(&p, lambda, config.tol_ode).or_input()?;
    let mut samples = Vec::with_capacity(points);
    let end = prop
        .propagate_sampled(PrueferState::dirichlet(&p, lo), hi, &xs, |i, s| {
            samples.push(ShootSample { x: xs[i], theta: s.theta, rho: s.rho, u: s.u(), quasi: s.quasi() })
        })
        .or_numeric()?;
    let csv = csv_table(
        &["x", "theta", "rho", "u", "quasi"],
        samples.iter().map(|s| vec![num(s.x), num(s.theta), num(s.rho), num(s.u), num(s.quasi)]),
    );
    let report = ShootReport { lambda, theta_end: end.theta, samples };
    let digest = config_digest(config, &[&bytes]);
    emit(config, &[Artifact::new("shoot", config, &digest, &report).with_csv(csv)]).or_input()
}

fn spectrum_csv(r: &SpectrumReport) -> String {
    csv_table(&["k", "L", "lambda"], r.rows().into_iter().map(|(k, l, lam)| vec![k.to_string(), num(l), num(lam)]))
}

fn run_scan(
    p: &BvPotential,
    rule: WindowRule,
    l_list: Vec<f64>,
    k_max: usize,
    e_ref: f64,
    tols: Tolerances,
) -> Result<SpectrumReport, Failure> {
    let dom = p.domain();
    for &l in &l_list {
        let w = rule.window(l).or_input()?;
        if w.a < dom.a || w.b > dom.b {
            return Err(Failure::Input(anyhow!(
                "window [{}, {}] for L = {l} leaves the domain [{}, {}]",
                w.a,
                w.b,
                dom.a,
                dom.b
            )));
        }
    }
    let settings = ScanSettings { l_list, k_max, e_ref, tols };
    spectrum_scan(p, rule, &settings).map_err(spectral_failure)
}

/// Exit status of a finished scan: a breach of the lower bound is a defect,
/// solver failures on individual levels are numeric failures.
fn scan_status(r: &SpectrumReport) -> Outcome {
    if !r.lower_bound_ok {
        let bad: Vec<String> = r.windows.iter().filter(|w| !w.lower_bound_ok).map(|w| num(w.l)).collect();
        return Err(Failure::Violation(format!("eigenvalue below -2C² for L in [{}]", bad.join(", "))));
    }
    if let Some(f) = r.failures.first() {
        return Err(Failure::Numeric(anyhow!(
            "{} level(s) failed, first at L = {} k = {}: {}",
            r.failures.len(),
            f.l,
            f.k,
            f.message
        )));
    }
    Ok(())
}

fn spectrum(config: &RunConfig, e_ref: f64, half_line: bool) -> Outcome {
    let (p, bytes) = load_spec(config)?;
    if config.l_list.is_empty() {
        return Err(Failure::Input(anyhow!("--L is required")));
    }
    let rule = if half_line {
        WindowRule::HalfLine { origin: p.lo() }
    } else {
        WindowRule::Symmetric { center: 0.5 * (p.lo() + p.hi()) }
    };
    let report = run_scan(&p, rule, config.l_list.clone(), config.k_max, e_ref, tolerances(config))?;
    let digest = config_digest(config, &[&bytes]);
    let art = Artifact::new("spectrum", config, &digest, &report).with_csv(spectrum_csv(&report));
    emit(config, &[art]).or_input()?;
    scan_status(&report)
}

/// Two numeric columns `x, value`; a non-numeric first row is a header.
fn read_function(path: &Path) -> anyhow::Result<(GridFunction, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(bytes.as_slice());
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if rec.len() != 2 {
            anyhow::bail!("{}: row {} has {} fields, expected 2", path.display(), i + 1, rec.len());
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(v)) => {
                xs.push(x);
                vs.push(v);
            }
            _ if i == 0 => continue,
            _ => anyhow::bail!("{}: row {} is not numeric", path.display(), i + 1),
        }
    }
    let u = GridFunction::new(xs, vs).with_context(|| format!("{}: bad grid", path.display()))?;
    Ok((u, bytes))
}

#[derive(Serialize)]
struct FormOutput {
    energy: FormReport,
    lower_bound: Option<LowerBoundMargins>,
}

fn form(config: &RunConfig, u_path: &Path, cuts: usize) -> Outcome {
    let (p, spec_bytes) = load_spec(config)?;
    let (u, u_bytes) = read_function(u_path).or_input()?;
    let (m_grid, n_grid) = default_cuts(&p, cuts);
    let energy = potential_energy(&p, &u, &m_grid, &n_grid).or_input()?;
    let lower_bound = match config.h {
        Some(h) => Some(form_lower_bound_check(&p, &u, h).or_input()?),
        None => None,
    };
    let digest = config_digest(config, &[&spec_bytes, &u_bytes]);
    let out = FormOutput { energy, lower_bound };
    emit(config, &[Artifact::new("form", config, &digest, &out)]).or_input()?;
    if let Some(m) = &out.lower_bound {
        let worst = m.margin1.min(m.margin2) / m.scale;
        if worst < -TOLERANCE {
            return Err(Failure::Violation(format!("form lower bound margin {worst:e}")));
        }
    }
    Ok(())
}

fn suites_csv(reports: &[SuiteReport]) -> String {
    csv_table(
        &["suite", "seed", "n_cases", "violations", "worst_margin", "digest"],
        reports.iter().map(|r| {
            vec![
                r.suite.clone(),
                r.seed.to_string(),
                r.n_cases.to_string(),
                r.violations.len().to_string(),
                num(r.worst_margin),
                r.digest.clone(),
            ]
        }),
    )
}

fn verify(config: &RunConfig, suite: Option<&str>) -> Outcome {
    let names: Vec<&str> = match suite {
        Some(s) => vec![s],
        None => SUITES.to_vec(),
    };
    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let r = run_suite(name, config.seed, config.cases).map_err(|e| match e {
            qdspec::lab::LabError::UnknownSuite(_) => Failure::Input(e.into()),
            _ => Failure::Numeric(e.into()),
        })?;
        reports.push(r);
    }
    let digest = config_digest(config, &[]);
    let csv = suites_csv(&reports);
    emit(config, &[Artifact::new("verify", config, &digest, &reports).with_csv(csv)]).or_input()?;
    let failed: Vec<String> =
        reports.iter().filter(|r| !r.passed()).map(|r| format!("{} ({} cases)", r.suite, r.violations.len())).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("margins below -{TOLERANCE:e} in {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct Variant {
    label: &'static str,
    spec: PotentialSpec,
    brinck: BrinckReport,
    profile_verdict: Classification,
    spectrum: SpectrumReport,
}

#[derive(Serialize)]
struct ReproduceReport {
    rho: f64,
    alpha: f64,
    variants: Vec<Variant>,
}

fn variant(
    config: &RunConfig,
    label: &'static str,
    rule: AlphaRule,
    (rho, alpha, length, e_ref): (f64, f64, f64, f64),
    l_list: &[f64],
) -> Result<(Variant, MolchanovProfile), Failure> {
    let spec = PotentialSpec::with_generator(
        0.0,
        length,
        GeneratorSpec::SqrtComb { rho, alpha_rule: rule, alpha, n_max: None },
    );
    let p = spec.build().or_input()?;
    let h = config.h.unwrap_or(1.0);
    let brinck = brinck_constant(&p, h).or_input()?;
    let profile = molchanov_profile(&p, h, 2000).or_input()?;
    let profile_verdict = classify_discreteness(&profile, 2.0, 0.1);
    let spectrum =
        run_scan(&p, WindowRule::HalfLine { origin: 0.0 }, l_list.to_vec(), config.k_max, e_ref, tolerances(config))?;
    Ok((Variant { label, spec, brinck, profile_verdict, spectrum }, profile))
}

fn summary(r: &ReproduceReport, e_ref: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Square-root comb, rho = {}, alpha = {}\n", r.rho, r.alpha);
    let _ = writeln!(
        s,
        "Atoms sit at x_n = sqrt(n) with weight rho + alpha_(2n-1) at odd n and -rho at even n. \
         The negative part has bounded mass on unit windows, so the lower bound holds for both variants. \
         Whether the spectrum is discrete depends on whether window sums of the extra weights grow.\n"
    );
    let _ = writeln!(s, "| variant | C | -2C² | min λ_0 | N({e_ref}, L) | scan verdict | window profile |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for v in &r.variants {
        let min0 = v
            .spectrum
            .windows
            .iter()
            .filter_map(|w| w.eigenvalues.first().copied().flatten())
            .fold(f64::INFINITY, f64::min);
        let counts: Vec<String> =
            v.spectrum.windows.iter().map(|w| format!("{}: {}", w.l, w.count_below_ref)).collect();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.6} | {} | {} | {} |",
            v.label,
            v.brinck.c,
            v.brinck.lower_bound,
            min0,
            counts.join(", "),
            verdict_name(&v.spectrum.verdict),
            verdict_name(&v.profile_verdict.verdict),
        );
    }
    let bounds_ok = r.variants.iter().all(|v| v.spectrum.lower_bound_ok);
    let _ = writeln!(
        s,
        "\nLower bound -2C² respected on every truncation: {}.\n\n\
         Verdicts come from finite truncations and are evidence, not proof.",
        if bounds_ok { "yes" } else { "NO" }
    );
    s
}

fn verdict_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

fn reproduce(config: &RunConfig, rho: f64, alpha: f64, length: f64, e_ref: f64) -> Outcome {
    if !(rho >= 0.0 && rho.is_finite() && alpha.is_finite() && length > 1.0 && length.is_finite()) {
        return Err(Failure::Input(anyhow!("need rho >= 0, finite alpha and length > 1")));
    }
    let l_list =
        if config.l_list.is_empty() { vec![length / 3.0, 2.0 * length / 3.0, length] } else { config.l_list.clone() };
    let params = (rho, alpha, length, e_ref);
    let (constant, p_const) = variant(config, "alpha constant", AlphaRule::Const, params, &l_list)?;
    let (inverse, p_inv) = variant(config, "alpha 1/n", AlphaRule::InvN, params, &l_list)?;

    let digest = config_digest(config, &[]);
    let mut arts = Vec::new();
    for (stem, v, prof) in [("comb_const", &constant, &p_const), ("comb_inv_n", &inverse, &p_inv)] {
        arts.push(Artifact::new(&format!("{stem}_brinck"), config, &digest, &v.brinck).with_csv(brinck_csv(&v.brinck)));
        arts.push(Artifact::new(&format!("{stem}_molchanov"), config, &digest, prof).with_csv(profile_csv(prof)));
        arts.push(
            Artifact::new(&format!("{stem}_spectrum"), config, &digest, &v.spectrum)
                .with_csv(spectrum_csv(&v.spectrum)),
        );
    }
    let report = ReproduceReport { rho, alpha, variants: vec![constant, inverse] };
    let md = summary(&report, e_ref);
    let rows = report.variants.iter().flat_map(|v| {
        v.spectrum.windows.iter().map(move |w| {
            vec![v.label.to_string(), num(w.l), w.count_below_ref.to_string(), num(w.brinck_c), num(w.lower_bound)]
        })
    });
    let csv = csv_table(&["variant", "L", "count_below_ref", "c", "lower_bound"], rows.collect::<Vec<_>>());
    arts.insert(0, Artifact::new("summary", config, &digest, &report).with_csv(csv).with_md(md));
    emit(config, &arts).or_input()?;
    for v in &report.variants {
        scan_status(&v.spectrum)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[test]
    fn lower_bound_breach_maps_to_violation() {
        let e = SpectralError::LowerBoundBreach { count: 1, bound: -8.0, a: 0.0, b: 1.0 };
        assert!(matches!(spectral_failure(e), Failure::Violation(_)));
        assert!(matches!(spectral_failure(SpectralError::BadTolerance), Failure::Input(_)));
        let e = SpectralError::BracketFailure { k: 0, hi: 1.0, count: 0 };
        assert!(matches!(spectral_failure(e), Failure::Numeric(_)));
    }

    #[test]
    fn config_checks() {
        let parse = |args: &[&str]| RunConfig::try_parse_from(std::iter::once("qdspec").chain(args.iter().copied()));
        assert!(check_config(&parse(&["brinck", "--L", "1,2,3"]).unwrap()).is_ok());
        assert!(check_config(&parse(&["brinck", "--L", "1,1"]).unwrap()).is_err());
        assert!(check_config(&parse(&["brinck", "--h=-1"]).unwrap()).is_err());
        assert!(check_config(&parse(&["brinck", "--tol-lambda", "nan"]).unwrap()).is_err());
        assert!(parse(&["brinck", "--L", "x"]).is_err());
    }
}
