//! Command-line runner: configuration parsing, seeded batch runs of the
//! verification suites, fixture catalog, and machine-readable reports.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use parcoh::bar::{PairingContext, PAIRING_ORIENTATION};
use parcoh::cohomology::{
    build_absolute, build_homology_absolute, build_parabolic, build_relative,
    build_trivial_absolute, build_trivial_system, cohomology_dims, null_space_basis,
    Cochain1,
};
use parcoh::conjclass::{
    verify_orbit_two_form, verify_form_differential, ClassConfig, ClassParameter, ConjError, ConjugacyClassSpec,
    OrbitPoint, RealClassType,
};
use parcoh::fox::{GeneratorSymbol, SurfaceData};
use parcoh::lie::{exp, Backend, BackendId, GroupElement};
use parcoh::moduli::{
    extend_auto, fixture_su2_commutator_l1n1, project_to_relator_level,
    random_parabolic_cocycle, sample_hom_fc, verify_closedness_and_momentum, verify_pairing_agreement, RepresentationPoint,
    TangentVector,
};
use parcoh::tol;

#[derive(Parser)]
#[command(
    name = "parcoh",
    version,
    about = "Parabolic cohomology of surface group systems: verification suites and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured verification suites and write a JSON report.
    Report(RunArgs),
    /// Print the named solution-point catalog as JSON.
    Fixtures {
        /// Write the catalog to this path as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single verification suite.
    Verify {
        /// Suite to run.
        suite: SuiteId,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backend id: su2, sl2r, u1, or u1x<k>.
    #[arg(long)]
    backend: Option<String>,
    /// Surface genus.
    #[arg(long)]
    genus: Option<usize>,
    /// Number of boundary circles.
    #[arg(long)]
    boundary: Option<usize>,
    /// Class parameters, one per circle, separated by ';'.
    /// su2: angle. sl2r: kind:value (e.g. elliptic-positive:1.0).
    /// u1/u1xk: comma-separated coordinates.
    #[arg(long)]
    classes: Option<String>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count per randomized check.
    #[arg(long)]
    trials: Option<usize>,
    /// Multiplies every residual tolerance (dimensions stay exact).
    #[arg(long)]
    tol_scale: Option<f64>,
    /// Comma-separated suite list.
    #[arg(long)]
    suites: Option<String>,
    /// Write the JSON report to this path as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
enum SuiteId {
    Complexes,
    Pairing,
    Conjclass,
    Extended,
    Duality,
    All,
}

impl SuiteId {
    fn expand(self) -> Vec<SuiteId> {
        match self {
            SuiteId::All => vec![
                SuiteId::Complexes,
                SuiteId::Pairing,
                SuiteId::Conjclass,
                SuiteId::Extended,
                SuiteId::Duality,
            ],
            other => vec![other],
        }
    }

    fn name(self) -> &'static str {
        match self {
            SuiteId::Complexes => "complexes",
            SuiteId::Pairing => "pairing",
            SuiteId::Conjclass => "conjclass",
            SuiteId::Extended => "extended",
            SuiteId::Duality => "duality",
            SuiteId::All => "all",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    backend: String,
    genus: usize,
    boundary: usize,
    classes: Vec<ClassParameter>,
    seed: u64,
    trials: usize,
    tol_scale: f64,
    suites: Vec<SuiteId>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: "su2".to_string(),
            genus: 1,
            boundary: 1,
            classes: vec![ClassParameter::Angle(1.0)],
            seed: 7,
            trials: 10,
            tol_scale: 1.0,
            suites: vec![SuiteId::All],
        }
    }
}

/// Config with its derived objects, validated at parse time.
struct Resolved {
    config: RunConfig,
    surface: SurfaceData,
    backend: Backend,
    classes: Vec<ConjugacyClassSpec>,
}

#[derive(Clone, Debug, Serialize)]
struct CheckResult {
    name: String,
    value: f64,
    tolerance: f64,
    /// "<=", ">=", "==" (exact), or "info".
    comparator: String,
    pass: bool,
}

impl CheckResult {
    fn le(name: &str, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            value,
            tolerance,
            comparator: "<=".to_string(),
            pass: value <= tolerance,
        }
    }

    fn ge(name: &str, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            value,
            tolerance,
            comparator: ">=".to_string(),
            pass: value >= tolerance,
        }
    }

    fn exact(name: &str, value: usize, expected: usize) -> Self {
        CheckResult {
            name: name.to_string(),
            value: value as f64,
            tolerance: expected as f64,
            comparator: "==".to_string(),
            pass: value == expected,
        }
    }

    fn info(name: &str, value: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            value,
            tolerance: 0.0,
            comparator: "info".to_string(),
            pass: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct SuiteResult {
    suite: String,
    seed: u64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    checks: Vec<CheckResult>,
}

impl SuiteResult {
    fn from_checks(suite: &str, seed: u64, checks: Vec<CheckResult>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        SuiteResult {
            suite: suite.to_string(),
            seed,
            pass,
            error: None,
            checks,
        }
    }

    fn failed(suite: &str, seed: u64, error: String) -> Self {
        SuiteResult {
            suite: suite.to_string(),
            seed,
            pass: false,
            error: Some(error),
            checks: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct RunReport {
    tool: String,
    version: String,
    /// Unix timestamp in seconds; excluded from determinism comparisons,
    /// as is wall_clock_seconds.
    timestamp: u64,
    wall_clock_seconds: f64,
    config: RunConfig,
    suites: Vec<SuiteResult>,
    pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Report(args) => run_report(args, None),
        Command::Verify { suite, args } => run_report(args, Some(suite)),
        Command::Fixtures { out } => run_fixtures(out),
    }
}

fn run_report(args: RunArgs, only: Option<SuiteId>) -> ExitCode {
    let out = args.out.clone();
    let resolved = match resolve_config(args, only) {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(2);
        }
    };

    let start = Instant::now();
    let mut suites = Vec::new();
    let mut expanded = Vec::new();
    for s in &resolved.config.suites {
        for e in s.expand() {
            if !expanded.contains(&e) {
                expanded.push(e);
            }
        }
    }
    for (offset, suite) in expanded.iter().enumerate() {
        let seed = resolved.config.seed.wrapping_add(1000 * offset as u64);
        let result = run_suite(*suite, &resolved, seed);
        for check in &result.checks {
            println!(
                "[{}] {}/{}: value={:.6e} {} {:.6e}",
                if check.pass { "PASS" } else { "FAIL" },
                result.suite,
                check.name,
                check.value,
                check.comparator,
                check.tolerance
            );
        }
        if let Some(err) = &result.error {
            println!("[FAIL] {}: {err}", result.suite);
        }
        suites.push(result);
    }

    let pass = suites.iter().all(|s| s.pass);
    let report = RunReport {
        tool: "parcoh".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config: resolved.config,
        suites,
        pass,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, &json) {
            eprintln!("cannot write report to {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    println!("{json}");
    println!("overall: {}", if pass { "PASS" } else { "FAIL" });
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn resolve_config(args: RunArgs, only: Option<SuiteId>) -> Result<Resolved, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| format!("cannot parse {}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(backend) = args.backend {
        config.backend = backend;
        // A backend change invalidates default class parameters; they
        // must be re-supplied unless the config file set them.
        if args.config.is_none() && args.classes.is_none() {
            config.classes = default_classes(&config.backend, config.boundary)?;
        }
    }
    if let Some(genus) = args.genus {
        config.genus = genus;
    }
    if let Some(boundary) = args.boundary {
        config.boundary = boundary;
        if args.config.is_none() && args.classes.is_none() {
            config.classes = default_classes(&config.backend, config.boundary)?;
        }
    }
    if let Some(spec) = args.classes {
        config.classes = parse_classes(&config.backend, &spec)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials.max(1);
    }
    if let Some(scale) = args.tol_scale {
        if !(scale.is_finite() && scale > 0.0) {
            return Err("tol-scale must be positive".to_string());
        }
        config.tol_scale = scale;
    }
    if let Some(list) = args.suites {
        let mut suites = Vec::new();
        for part in list.split(',') {
            let id = SuiteId::from_str(part.trim(), true)
                .map_err(|_| format!("unknown suite {part:?}"))?;
            suites.push(id);
        }
        config.suites = suites;
    }
    if let Some(one) = only {
        config.suites = vec![one];
    }

    let surface = SurfaceData::new(config.genus, config.boundary)
        .map_err(|e| format!("invalid surface: {e}"))?;
    let id = BackendId::from_str(&config.backend)
        .map_err(|e| format!("invalid backend {:?}: {e}", config.backend))?;
    let backend = Backend::from_id(id);
    if config.classes.len() != config.boundary {
        return Err(format!(
            "need {} class parameters, got {}",
            config.boundary,
            config.classes.len()
        ));
    }
    let classes = config
        .classes
        .iter()
        .map(|p| {
            ConjugacyClassSpec::from_config(&ClassConfig {
                backend: config.backend.clone(),
                parameter: p.clone(),
            })
            .map_err(|e| format!("invalid class parameter: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Resolved {
        config,
        surface,
        backend,
        classes,
    })
}

fn default_classes(backend: &str, boundary: usize) -> Result<Vec<ClassParameter>, String> {
    let id = BackendId::from_str(backend)
        .map_err(|e| format!("invalid backend {backend:?}: {e}"))?;
    let one = match id {
        BackendId::Su2 => ClassParameter::Angle(1.0),
        BackendId::Sl2r => ClassParameter::Real {
            kind: RealClassType::EllipticPositive,
            value: 1.0,
        },
        BackendId::U1(k) => ClassParameter::Point(vec![0.0; k]),
    };
    Ok(vec![one; boundary])
}

fn parse_classes(backend: &str, spec: &str) -> Result<Vec<ClassParameter>, String> {
    let id = BackendId::from_str(backend)
        .map_err(|e| format!("invalid backend {backend:?}: {e}"))?;
    spec.split(';')
        .map(|part| {
            let part = part.trim();
            match id {
                BackendId::Su2 => part
                    .parse::<f64>()
                    .map(ClassParameter::Angle)
                    .map_err(|e| format!("bad su2 angle {part:?}: {e}")),
                BackendId::Sl2r => {
                    let (kind, value) = part
                        .split_once(':')
                        .ok_or_else(|| format!("sl2r class needs kind:value, got {part:?}"))?;
                    let kind: RealClassType =
                        serde_json::from_value(serde_json::Value::String(kind.to_string()))
                            .map_err(|e| format!("bad sl2r class kind {kind:?}: {e}"))?;
                    let value = value
                        .parse::<f64>()
                        .map_err(|e| format!("bad sl2r class value {value:?}: {e}"))?;
                    Ok(ClassParameter::Real { kind, value })
                }
                BackendId::U1(k) => {
                    let coords = part
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(|e| format!("bad torus point {part:?}: {e}"))?;
                    if coords.len() != k {
                        return Err(format!(
                            "torus point needs {k} coordinates, got {}",
                            coords.len()
                        ));
                    }
                    Ok(ClassParameter::Point(coords))
                }
            }
        })
        .collect()
}

fn run_suite(suite: SuiteId, resolved: &Resolved, seed: u64) -> SuiteResult {
    let name = suite.name();
    let outcome = match suite {
        SuiteId::Complexes => suite_complexes(resolved, seed),
        SuiteId::Pairing => suite_pairing(resolved, seed),
        SuiteId::Conjclass => suite_conjclass(resolved, seed),
        SuiteId::Extended => suite_extended(resolved, seed),
        SuiteId::Duality => suite_duality(resolved, seed),
        SuiteId::All => unreachable!("expanded before dispatch"),
    };
    match outcome {
        Ok(checks) => SuiteResult::from_checks(name, seed, checks),
        Err(msg) => SuiteResult::failed(name, seed, msg),
    }
}

/// A class-constrained point moved onto the relator level set. Abelian
/// backends sit on the level set iff the class points multiply to the
/// identity; other class tuples report the obstruction.
fn level_point(resolved: &Resolved, seed: u64) -> Result<RepresentationPoint, String> {
    let point = sample_hom_fc(resolved.surface, &resolved.classes, seed)
        .map_err(|e| e.to_string())?;
    if point.is_relator_level() {
        return Ok(point);
    }
    project_to_relator_level(&point, &resolved.backend.identity()).map_err(|e| e.to_string())
}

fn suite_complexes(resolved: &Resolved, seed: u64) -> Result<Vec<CheckResult>, String> {
    let s = resolved.surface;
    let scale = resolved.config.tol_scale;
    let mut checks = Vec::new();

    let sys = cohomology_dims(&build_trivial_system(&s).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    checks.push(CheckResult::exact("trivial-system-h0", sys.h0, 0));
    checks.push(CheckResult::exact(
        "trivial-system-h1",
        sys.h1,
        2 * s.genus + s.boundary - 1,
    ));
    checks.push(CheckResult::exact("trivial-system-h2", sys.h2, 1));
    let abs = cohomology_dims(&build_trivial_absolute(&s)).map_err(|e| e.to_string())?;
    checks.push(CheckResult::exact("trivial-absolute-h2", abs.h2, 0));

    let point = level_point(resolved, seed)?;
    let complexes = [
        ("absolute", build_absolute(&s, &point)),
        ("relative", build_relative(&s, &point)),
        ("parabolic", build_parabolic(&s, &point)),
    ];
    for (label, c) in complexes {
        let c = c.map_err(|e| e.to_string())?;
        checks.push(CheckResult::le(
            &format!("{label}-d1-d0"),
            c.complex_defect(),
            tol::COMPLEX_CONTRACT * scale,
        ));
    }
    Ok(checks)
}

fn suite_pairing(resolved: &Resolved, seed: u64) -> Result<Vec<CheckResult>, String> {
    if resolved.surface.boundary == 0 {
        return Err("the pairing suite needs at least one boundary circle".to_string());
    }
    let scale = resolved.config.tol_scale;
    let trials = resolved.config.trials;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let point = level_point(resolved, seed)?;
    let ctx =
        PairingContext::new(resolved.surface, point.clone()).map_err(|e| e.to_string())?;

    let mut dual_gap = 0.0f64;
    let mut shift_gap = 0.0f64;
    for _ in 0..trials {
        let u = random_parabolic_cocycle(&point, &mut rng).map_err(|e| e.to_string())?;
        let v = random_parabolic_cocycle(&point, &mut rng).map_err(|e| e.to_string())?;
        let closed = ctx
            .pairing_closed_form(&u.u, &v.u)
            .map_err(|e| e.to_string())?;
        let chain = ctx
            .pairing_groupoid(&u.u, &v.u)
            .map_err(|e| e.to_string())?;
        dual_gap = dual_gap.max((closed - chain).abs());

        // Class invariance: shift u by a coboundary and X_1 by a kernel
        // element of Ad(z_1) - I.
        let x0 = resolved.backend.random_algebra(&mut rng, 1.0);
        let shift = parcoh::cohomology::coboundary(&resolved.surface, &point, &x0)
            .map_err(|e| e.to_string())?;
        let shifted = TangentVector::new(u.u.add(&shift), &point).map_err(|e| e.to_string())?;
        let moved = ctx
            .pairing_closed_form(&shifted.u, &v.u)
            .map_err(|e| e.to_string())?;
        shift_gap = shift_gap.max((moved - closed).abs());

        let z1 = point.value_at(GeneratorSymbol::z(1));
        let d = resolved.backend.dim;
        let kernel = null_space_basis(
            &(z1.adjoint_matrix() - DMatrix::<f64>::identity(d, d)),
            tol::RANK_RELATIVE,
        );
        if kernel.ncols() > 0 {
            let mut tweaked = u.u.clone();
            if let Some(data) = tweaked.boundary_data.as_mut() {
                let k = resolved.backend.from_coords(&kernel.column(0).into_owned());
                data[0] = data[0].add(&k);
            }
            let moved = ctx
                .pairing_closed_form(&tweaked, &v.u)
                .map_err(|e| e.to_string())?;
            shift_gap = shift_gap.max((moved - closed).abs());
        }
    }
    checks.push(CheckResult::le(
        "dual-path-gap",
        dual_gap,
        tol::PAIRING_DUAL_PATH * scale,
    ));
    checks.push(CheckResult::le(
        "class-invariance",
        shift_gap,
        tol::PAIRING_DUAL_PATH * scale,
    ));

    let report = verify_pairing_agreement(&point, trials, &mut rng).map_err(|e| e.to_string())?;
    checks.push(CheckResult::le(
        "extended-vs-chain",
        report.max_pointwise_gap,
        tol::GRAM_AGREEMENT * scale,
    ));
    checks.push(CheckResult::le(
        "gram-agreement",
        report.max_gram_gap,
        tol::GRAM_AGREEMENT * scale,
    ));
    checks.push(CheckResult::info("h1-parabolic-dim", report.dim as f64));
    checks.push(CheckResult::info(
        "stabilizer-dim",
        report.stabilizer_dim as f64,
    ));
    if report.stabilizer_dim == 0 && report.dim > 0 {
        checks.push(CheckResult::ge(
            "nondegeneracy",
            report.smallest_singular / report.largest_singular,
            tol::NONDEGENERACY,
        ));
    }

    if let BackendId::U1(k) = resolved.backend.id {
        let (dim, gap) = abelian_intersection_gap(&point, k).map_err(|e| e.to_string())?;
        checks.push(CheckResult::exact(
            "abelian-h1-dim",
            dim,
            2 * resolved.surface.genus * k,
        ));
        checks.push(CheckResult::le(
            "abelian-intersection-form",
            gap,
            tol::INTERSECTION_EXACT,
        ));
    }
    Ok(checks)
}

/// The Gram matrix of the pairing on the coordinate cocycle basis of an
/// abelian backend, compared entrywise against the intersection form with
/// the recorded global sign. Returns (basis size, max gap).
fn abelian_intersection_gap(
    point: &RepresentationPoint,
    k: usize,
) -> Result<(usize, f64), parcoh::moduli::ModuliError> {
    let s = point.surface;
    let ctx = PairingContext::new(s, point.clone())?;
    let mut basis = Vec::new();
    for sym in s.xy_generators() {
        for e in point.backend.basis() {
            let mut u = Cochain1::zero(s, point.backend);
            u.set_value(sym, e.clone());
            basis.push(TangentVector::new(u, point)?.u);
        }
    }
    let m = basis.len();
    debug_assert_eq!(m, 2 * s.genus * k);
    let mut gap = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let value = ctx.pairing_closed_form(&basis[i], &basis[j])?;
            // Slot order interleaves x and y blocks of k coordinates:
            // x_i^a pairs with y_i^a only.
            let (bi, ci) = (i / k, i % k);
            let (bj, cj) = (j / k, j % k);
            let expected = if ci == cj && bi / 2 == bj / 2 && bi % 2 == 0 && bj % 2 == 1 {
                PAIRING_ORIENTATION
            } else if ci == cj && bi / 2 == bj / 2 && bi % 2 == 1 && bj % 2 == 0 {
                -PAIRING_ORIENTATION
            } else {
                0.0
            };
            gap = gap.max((value - expected).abs());
        }
    }
    Ok((m, gap))
}

fn suite_conjclass(resolved: &Resolved, seed: u64) -> Result<Vec<CheckResult>, String> {
    let scale = resolved.config.tol_scale;
    let trials = resolved.config.trials;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    for (j, class) in resolved.classes.iter().enumerate() {
        let tag = format!("class-{}", j + 1);
        match OrbitPoint::from_class(class) {
            Ok(orbit) => {
                let report = verify_orbit_two_form(&orbit, trials, &mut rng);
                checks.push(CheckResult::le(
                    &format!("{tag}-beta-closed-vs-quadrature"),
                    report.max_beta_gap,
                    tol::BETA_CLOSED_FORM * scale,
                ));
                checks.push(CheckResult::le(
                    &format!("{tag}-pullback-identity"),
                    report.max_pullback_residual,
                    tol::BETA_CLOSED_FORM * scale,
                ));
                checks.push(CheckResult::le(
                    &format!("{tag}-dexp-image"),
                    report.max_dexp_image_residual,
                    tol::BETA_CLOSED_FORM * scale,
                ));
            }
            Err(ConjError::UnsupportedOrbit(_)) => {
                checks.push(CheckResult::info(&format!("{tag}-orbit-skipped"), 0.0));
            }
            Err(e) => return Err(e.to_string()),
        }

        let report = verify_form_differential(class, trials, &mut rng).map_err(|e| e.to_string())?;
        if report.tangent_dim > 0 {
            checks.push(CheckResult::le(
                &format!("{tag}-dtau-fd"),
                report.dtau_residual_coarse,
                tol::DTAU_RESIDUAL * scale,
            ));
            if let Some(ratio) = report.ratio {
                checks.push(CheckResult::ge(
                    &format!("{tag}-dtau-fd-ratio"),
                    ratio,
                    tol::FD_RATIO,
                ));
            } else {
                checks.push(CheckResult::info(
                    &format!("{tag}-dtau-fd-at-roundoff"),
                    report.dtau_residual_fine,
                ));
            }
            checks.push(CheckResult::le(
                &format!("{tag}-lambda-contraction"),
                report.max_lambda,
                tol::THETA_CONTRACTION * scale,
            ));
        } else {
            checks.push(CheckResult::info(&format!("{tag}-tangent-dim-zero"), 0.0));
        }
        checks.push(CheckResult::le(
            &format!("{tag}-theta-contraction"),
            report.max_theta_residual,
            tol::THETA_CONTRACTION * scale,
        ));
    }
    Ok(checks)
}

fn suite_extended(resolved: &Resolved, seed: u64) -> Result<Vec<CheckResult>, String> {
    let scale = resolved.config.tol_scale;
    let trials = resolved.config.trials;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Sample until the relator value admits a principal logarithm (the
    // split backend can land outside the exponential image); the attempt
    // count keeps this deterministic.
    let mut point = None;
    for attempt in 0..32u64 {
        let candidate = sample_hom_fc(
            resolved.surface,
            &resolved.classes,
            seed.wrapping_add(attempt),
        )
        .map_err(|e| e.to_string())?;
        if let Ok(ext) = extend_auto(&candidate) {
            point = Some(ext);
            break;
        }
    }
    let ext = point.ok_or("no sampled point had a regular relator logarithm")?;

    let report =
        verify_closedness_and_momentum(&ext, trials, tol::FD_STEP, &mut rng).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    match report.ratio {
        Some(ratio) => checks.push(CheckResult::ge("closedness-fd-ratio", ratio, tol::FD_RATIO)),
        None => checks.push(CheckResult::info(
            "closedness-fd-at-roundoff",
            report.closedness_fine,
        )),
    }
    checks.push(CheckResult::le(
        "momentum-identity",
        report.momentum_residual,
        tol::MOMENTUM_RESIDUAL * scale,
    ));
    Ok(checks)
}

fn suite_duality(resolved: &Resolved, seed: u64) -> Result<Vec<CheckResult>, String> {
    let s = resolved.surface;
    if s.boundary == 0 {
        return Err("the duality suite back-solves a boundary value".to_string());
    }
    let trials = resolved.config.trials;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for _ in 0..trials {
        let point = back_solved_point(s, resolved.backend, &mut rng).map_err(|e| e.to_string())?;
        let rel = cohomology_dims(&build_relative(&s, &point).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let hom =
            cohomology_dims(&build_homology_absolute(&s, &point).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        if rel.h0 != hom.h2 || rel.h1 != hom.h1 || rel.h2 != hom.h0 {
            mismatches += 1;
        }
    }
    Ok(vec![CheckResult::exact("duality-rank-mismatches", mismatches, 0)])
}

/// A relator-level point without class constraints: all slots random, the
/// last boundary value back-solved.
fn back_solved_point<R: rand::Rng + ?Sized>(
    s: SurfaceData,
    backend: Backend,
    rng: &mut R,
) -> Result<RepresentationPoint, parcoh::moduli::ModuliError> {
    let count = 2 * s.genus + s.boundary;
    let mut values: Vec<GroupElement> = (0..count - 1).map(|_| backend.random_group(rng)).collect();
    let mut prefix = backend.identity();
    for i in 0..s.genus {
        let x = &values[2 * i];
        let y = &values[2 * i + 1];
        let comm = x.mul(y).mul(&x.inverse()).mul(&y.inverse());
        prefix = prefix.mul(&comm);
    }
    for v in values.iter().take(count - 1).skip(2 * s.genus) {
        prefix = prefix.mul(v);
    }
    values.push(prefix.inverse());
    RepresentationPoint::from_values(s, backend, values)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct FixtureEntry {
    name: String,
    backend: String,
    genus: usize,
    boundary: usize,
    /// Construction parameters, for reproducing the point by hand.
    parameters: serde_json::Value,
    classes: Vec<ClassConfig>,
    relator_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct FixtureCatalog {
    fixtures: Vec<FixtureEntry>,
}

fn fixture_catalog() -> FixtureCatalog {
    let mut fixtures = Vec::new();

    let (phi, classes) = fixture_su2_commutator_l1n1();
    fixtures.push(FixtureEntry {
        name: "su2-commutator-l1n1".to_string(),
        backend: "su2".to_string(),
        genus: 1,
        boundary: 1,
        parameters: serde_json::json!({
            "x": "exp(1.1 e1)",
            "y": "exp(0.9 e2)",
            "z1": "inverse of [x, y]",
        }),
        classes: classes.iter().map(|c| c.to_config()).collect(),
        relator_residual: phi.relator_residual_to(&phi.backend.identity()),
    });

    let backend = Backend::u1(1);
    let e1 = backend.basis().remove(0);
    let x = exp(&e1.scale(0.31));
    let y = exp(&e1.scale(-0.7));
    let z = backend.identity();
    let class = ConjugacyClassSpec::new(z.clone());
    let phi = RepresentationPoint::from_values(
        SurfaceData::new(1, 1).expect("valid surface"),
        backend,
        vec![x, y, z],
    )
    .expect("torus fixture");
    fixtures.push(FixtureEntry {
        name: "u1-torus-l1n1".to_string(),
        backend: "u1".to_string(),
        genus: 1,
        boundary: 1,
        parameters: serde_json::json!({
            "x": "exp(0.31 i)",
            "y": "exp(-0.7 i)",
            "z1": "identity",
        }),
        classes: vec![class.to_config()],
        relator_residual: phi.relator_residual_to(&backend.identity()),
    });

    let backend = Backend::su2();
    let basis = backend.basis();
    let z1 = exp(&basis[0].scale(1.0));
    let z2 = exp(&basis[1].scale(0.8));
    let z3 = z1.mul(&z2).inverse();
    let classes = [
        ConjugacyClassSpec::new(z1.clone()),
        ConjugacyClassSpec::new(z2.clone()),
        ConjugacyClassSpec::new(z3.clone()),
    ];
    let phi = RepresentationPoint::from_values(
        SurfaceData::new(0, 3).expect("valid surface"),
        backend,
        vec![z1, z2, z3],
    )
    .expect("pants fixture");
    fixtures.push(FixtureEntry {
        name: "su2-pants-l0n3".to_string(),
        backend: "su2".to_string(),
        genus: 0,
        boundary: 3,
        parameters: serde_json::json!({
            "z1": "exp(1.0 e1)",
            "z2": "exp(0.8 e2)",
            "z3": "inverse of z1 z2",
        }),
        classes: classes.iter().map(|c| c.to_config()).collect(),
        relator_residual: phi.relator_residual_to(&backend.identity()),
    });

    FixtureCatalog { fixtures }
}

fn run_fixtures(out: Option<PathBuf>) -> ExitCode {
    let catalog = fixture_catalog();
    let mut ok = true;
    for entry in &catalog.fixtures {
        if entry.relator_residual > tol::RELATOR_LEVEL {
            eprintln!(
                "fixture {} fails relator validation: residual {:.3e}",
                entry.name, entry.relator_residual
            );
            ok = false;
        }
    }
    let json = serde_json::to_string_pretty(&catalog).expect("catalog serializes");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, &json) {
            eprintln!("cannot write catalog to {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    println!("{json}");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_string_parsing() {
        let su2 = parse_classes("su2", "1.0; 0.5").unwrap();
        assert_eq!(su2.len(), 2);
        assert!(matches!(su2[0], ClassParameter::Angle(a) if a == 1.0));

        let sl2r = parse_classes("sl2r", "elliptic-positive:1.0;hyperbolic:0.8").unwrap();
        assert!(matches!(
            sl2r[0],
            ClassParameter::Real {
                kind: RealClassType::EllipticPositive,
                ..
            }
        ));

        let u1 = parse_classes("u1x2", "0.4,-0.6").unwrap();
        assert!(matches!(&u1[0], ClassParameter::Point(p) if p.len() == 2));

        assert!(parse_classes("u1x2", "0.4").is_err());
        assert!(parse_classes("sl2r", "1.0").is_err());
        assert!(parse_classes("su2", "abc").is_err());
    }

    #[test]
    fn fixture_catalog_round_trips_and_validates() {
        let catalog = fixture_catalog();
        assert!(catalog
            .fixtures
            .iter()
            .any(|f| f.name == "su2-commutator-l1n1"));
        for f in &catalog.fixtures {
            assert!(
                f.relator_residual <= tol::RELATOR_LEVEL,
                "{} residual {:.3e}",
                f.name,
                f.relator_residual
            );
        }
        let json = serde_json::to_string(&catalog).unwrap();
        let parsed: FixtureCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, catalog);
    }

    #[test]
    fn config_resolution_validates_counts() {
        let args = RunArgs {
            config: None,
            backend: Some("su2".to_string()),
            genus: Some(1),
            boundary: Some(2),
            classes: Some("1.0".to_string()),
            seed: None,
            trials: None,
            tol_scale: None,
            suites: None,
            out: None,
        };
        assert!(resolve_config(args, None).is_err());
    }
}
