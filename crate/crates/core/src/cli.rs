//! Command-line front end: JSON run configuration, subcommands and CSV output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{CMatrix, C64};
use crate::coherent::{
    berry_connection, berry_connection_exact, build_closed_form, build_oracle, overlap, wigner_d, wigner_d_oracle,
    CoherentError, CoherentParams, GroupId,
};
use crate::dynamics::{
    classical_energy, compare_methods, eom_rhs, grad_h, grad_h_exact, integrate, reduce_check, symplectic_form,
    DynamicsError, EomMethod, HamiltonianSpec, Term, Trajectory,
};
use crate::generators::{spin_rep, Generator};
use crate::observables::{compatibility_report, paper_average, sample_params, spin_vector};
use crate::quantum::{compare, unity_check, QuantumError};

pub const EXIT_INVALID_CONFIG: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Singular(String),
    #[error("verification failed: {0} check(s)")]
    Verify(usize),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_INVALID_CONFIG,
            CliError::Singular(_) => EXIT_SINGULAR,
            CliError::Verify(_) => EXIT_VERIFY_FAILED,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Singular(msg) => CliError::Singular(format!("singular initial point: {msg}")),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CoherentError> for CliError {
    fn from(e: CoherentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<QuantumError> for CliError {
    fn from(e: QuantumError) -> Self {
        match e {
            QuantumError::Dynamics(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// One Hamiltonian term as written in the config: `{"coeff": [re, im], "factors": [[site, ["Sz", ...]], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coeff: [f64; 2],
    pub factors: Vec<(usize, Vec<String>)>,
}

fn default_sites() -> usize {
    1
}

fn default_hbar() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupId,
    #[serde(default = "default_sites")]
    pub sites: usize,
    pub hamiltonian: Vec<TermConfig>,
    /// One parameter array per site, in group order.
    pub initial: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub method: EomMethod,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<(HamiltonianSpec, Vec<CoherentParams>), CliError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(CliError::Config(format!("hbar must be positive, got {}", self.hbar)));
        }
        if self.initial.len() != self.sites {
            return Err(CliError::Config(format!(
                "{} initial points for {} sites",
                self.initial.len(),
                self.sites
            )));
        }
        let h = parse_hamiltonian(self.group, self.sites, &self.hamiltonian)?;
        let points = self
            .initial
            .iter()
            .map(|v| CoherentParams::new(self.group, v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((h, points))
    }
}

/// Builds and validates a Hamiltonian from config terms.
pub fn parse_hamiltonian(group: GroupId, sites: usize, terms: &[TermConfig]) -> Result<HamiltonianSpec, CliError> {
    let terms = terms
        .iter()
        .map(|t| {
            let factors = t
                .factors
                .iter()
                .map(|(site, names)| {
                    let gens = names
                        .iter()
                        .map(|n| n.parse::<Generator>().map_err(|e| CliError::Config(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok((*site, gens))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(Term::new(C64::new(t.coeff[0], t.coeff[1]), factors))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    HamiltonianSpec::new(group, sites, terms).map_err(|e| CliError::Config(e.to_string()))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(group: GroupId, sites: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for s in 0..sites {
        h.extend(group.param_names().iter().map(|n| format!("{n}_{s}")));
    }
    for s in 0..sites {
        h.extend(["Sx", "Sy", "Sz"].iter().map(|n| format!("{n}_{s}")));
    }
    h.push("energy".into());
    h
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<(), CliError> {
    let to_io = |e: csv::Error| CliError::Io(io::Error::other(e));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(trajectory_header(traj.group, traj.n_sites())).map_err(to_io)?;
    for k in 0..traj.len() {
        let mut rec = vec![fmt_f64(traj.times[k])];
        for p in &traj.points[k] {
            rec.extend(p.values().iter().map(|&x| fmt_f64(x)));
        }
        for s in &traj.observables[k] {
            rec.extend(s.iter().map(|&x| fmt_f64(x)));
        }
        rec.push(fmt_f64(traj.energies[k]));
        w.write_record(rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV written by [`write_trajectory_csv`]; the site count comes from the header.
pub fn read_trajectory_csv<R: io::Read>(group: GroupId, reader: R) -> Result<Trajectory, CliError> {
    let bad = |msg: String| CliError::Config(format!("trajectory csv: {msg}"));
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let per_site = group.n_params() + 3;
    if header.len() < 2 || (header.len() - 2) % per_site != 0 {
        return Err(bad(format!("{} columns do not fit {group}", header.len())));
    }
    let sites = (header.len() - 2) / per_site;
    if header != trajectory_header(group, sites) {
        return Err(bad("unexpected column names".into()));
    }
    let n = group.n_params();
    let mut traj = Trajectory {
        group,
        method: EomMethod::Berry,
        times: Vec::new(),
        points: Vec::new(),
        energies: Vec::new(),
        observables: Vec::new(),
        singular: None,
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        traj.times.push(v[0]);
        let params = &v[1..1 + sites * n];
        traj.points.push(
            params
                .chunks(n)
                .map(|c| CoherentParams::new(group, c.to_vec()))
                .collect::<Result<_, _>>()?,
        );
        let obs = &v[1 + sites * n..1 + sites * per_site];
        traj.observables.push(obs.chunks(3).map(|c| [c[0], c[1], c[2]]).collect());
        traj.energies.push(v[v.len() - 1]);
    }
    Ok(traj)
}

#[derive(Debug, Parser)]
#[command(name = "multispin", version, about = "Classical multipolar spin dynamics from SU(N) coherent states")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; overrides the config. Defaults to stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Vector field; overrides the config.
    #[arg(long, global = true)]
    pub method: Option<EomMethod>,
    /// Sampling seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the classical equations and write a trajectory CSV.
    Simulate,
    /// Observables at the initial point, as JSON.
    Expect,
    /// ω and both vector fields at the initial point, as JSON.
    Derive,
    /// Classical vs exact quantum spin expectations, as CSV.
    Compare,
    /// Run the invariant suite; exits with 3 when a check fails.
    Verify,
    /// Printed-formula compatibility report for one group, as CSV.
    Report {
        group: GroupId,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Context {
    config: RunConfig,
    h: HamiltonianSpec,
    points: Vec<CoherentParams>,
    output: Option<PathBuf>,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(m) = cli.method {
        config.method = m;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let (h, points) = config.validate()?;
    let output = cli.output.clone().or_else(|| config.output.clone());
    Ok(Context {
        config,
        h,
        points,
        output,
    })
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    let c = &ctx.config;
    let traj = integrate(&ctx.h, &ctx.points, c.dt, c.steps, c.method, c.hbar)?;
    write_trajectory_csv(&traj, open_output(ctx.output.as_deref())?)?;
    if let Some(stop) = &traj.singular {
        eprintln!("warning: stopped at t = {} ({})", stop.time, stop.detail);
    }
    Ok(())
}

#[derive(Serialize)]
struct SiteExpectation {
    site: usize,
    params: String,
    spin: [f64; 3],
    paper_s_plus: [f64; 2],
    paper_s_minus: [f64; 2],
    paper_s_z: f64,
}

#[derive(Serialize)]
struct ExpectOutput {
    group: GroupId,
    energy: f64,
    sites: Vec<SiteExpectation>,
}

fn expect(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    let sites = ctx
        .points
        .iter()
        .enumerate()
        .map(|(site, p)| {
            let avg = paper_average(p);
            SiteExpectation {
                site,
                params: p.to_string(),
                spin: spin_vector(&build_oracle(p)),
                paper_s_plus: [avg.s_plus.re, avg.s_plus.im],
                paper_s_minus: [avg.s_minus.re, avg.s_minus.im],
                paper_s_z: avg.s_z,
            }
        })
        .collect();
    let out = ExpectOutput {
        group: ctx.config.group,
        energy: classical_energy(&ctx.h, &ctx.points)?,
        sites,
    };
    write_json(&out, ctx.output.as_deref())
}

#[derive(Serialize)]
struct DeriveSite {
    site: usize,
    omega: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct DeriveOutput {
    group: GroupId,
    params: Vec<String>,
    grad_h: Vec<f64>,
    sites: Vec<DeriveSite>,
    /// Velocities or the reason the field is undefined at this point.
    berry: Result<Vec<f64>, String>,
    paper: Result<Vec<f64>, String>,
}

fn derive(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    let hbar = ctx.config.hbar;
    let field = |m| eom_rhs(&ctx.h, &ctx.points, m, hbar).map_err(|e| e.to_string());
    let out = DeriveOutput {
        group: ctx.config.group,
        params: ctx.points.iter().map(ToString::to_string).collect(),
        grad_h: grad_h(&ctx.h, &ctx.points)?,
        sites: ctx
            .points
            .iter()
            .enumerate()
            .map(|(site, p)| DeriveSite {
                site,
                omega: symplectic_form(p, hbar),
            })
            .collect(),
        berry: field(EomMethod::Berry),
        paper: field(EomMethod::Paper),
    };
    write_json(&out, ctx.output.as_deref())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn compare_cmd(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    let c = &ctx.config;
    let metrics = compare(&ctx.h, &ctx.points, c.dt * c.steps as f64, c.dt, c.hbar)?;
    metrics.write_csv(open_output(ctx.output.as_deref())?)?;
    eprintln!("max deviation {:e}", metrics.max_deviation());
    if let Some(stop) = &metrics.singular {
        eprintln!("warning: classical run stopped at t = {} ({})", stop.time, stop.detail);
    }
    Ok(())
}

fn report(cli: &Cli, group: GroupId, samples: usize) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let rep = compatibility_report(group, samples, seed);
    rep.write_csv(open_output(cli.output.as_deref())?)
        .map_err(|e| CliError::Io(io::Error::other(e)))?;
    for note in &rep.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

/// Outcome of one invariant in the `verify` suite.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// The invariants the implementation guarantees, at reduced sample sizes.
pub fn verify_suite(seed: u64) -> Vec<Check> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for group in GroupId::ALL {
        for _ in 0..100 {
            worst = worst.max((build_oracle(&sample_params(group, &mut rng)).amplitudes.norm() - 1.0).abs());
        }
    }
    out.push(check("oracle states are normalized", worst < 1e-12, format!("max |norm-1| = {worst:e}")));

    let mut worst = 0.0f64;
    for two_s in 1..=4 {
        let rep = spin_rep(two_s).expect("supported spin");
        let comm = |a: &CMatrix, b: &CMatrix| a.commutator(b).expect("same dimension");
        let i = C64::new(0.0, 1.0);
        worst = worst
            .max(comm(&rep.sx, &rep.sy).max_abs_diff(&rep.sz.scale(i)))
            .max(comm(&rep.sy, &rep.sz).max_abs_diff(&rep.sx.scale(i)))
            .max(comm(&rep.sz, &rep.sx).max_abs_diff(&rep.sy.scale(i)));
        let s = rep.spin();
        worst = worst.max(rep.casimir().max_abs_diff(&CMatrix::identity(rep.dim()).scale_real(s * (s + 1.0))));
    }
    out.push(check("su(2) relations and Casimir", worst < 1e-12, format!("max dev = {worst:e}")));

    let mut worst = 0.0f64;
    for group in [GroupId::SU2, GroupId::SU3] {
        for _ in 0..100 {
            let p = sample_params(group, &mut rng);
            let cf = build_closed_form(&p);
            worst = worst.max(cf.state.amplitudes.max_abs_diff(&build_oracle(&p).amplitudes));
        }
    }
    out.push(check("SU2/SU3 closed forms match oracle", worst < 1e-10, format!("max dev = {worst:e}")));

    let mut worst = 0.0f64;
    for two_s in 1..=3 {
        let rep = spin_rep(two_s).expect("supported spin");
        for k in 0..=20 {
            let th = -std::f64::consts::PI + k as f64 * std::f64::consts::PI / 10.0;
            worst = worst.max(wigner_d(&rep, th).matrix.max_abs_diff(&wigner_d_oracle(&rep, th)));
        }
    }
    out.push(check("Wigner d closed forms, dims 2-4", worst < 1e-12, format!("max dev = {worst:e}")));

    let mut worst = 0.0f64;
    for group in GroupId::ALL {
        for _ in 0..20 {
            let p = sample_params(group, &mut rng);
            let fd = berry_connection(&p, 1.0);
            let ex = berry_connection_exact(&p, 1.0);
            worst = fd.iter().zip(&ex).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    out.push(check("Berry connection FD vs exact", worst < 1e-6, format!("max dev = {worst:e}")));

    let mut worst = 0.0f64;
    for group in GroupId::ALL {
        let h = HamiltonianSpec::single_site(group, &[(0.6, Generator::Sx), (-0.9, Generator::Sz)]).expect("valid");
        for _ in 0..20 {
            let p = [sample_params(group, &mut rng)];
            let (Ok(v), Ok(g)) = (eom_rhs(&h, &p, EomMethod::Berry, 1.0), grad_h_exact(&h, &p)) else {
                continue;
            };
            let dot: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
            worst = worst.max(dot.abs());
        }
    }
    out.push(check("Berry field conserves energy pointwise", worst < 1e-9, format!("max |∇H·q̇| = {worst:e}")));

    let h = HamiltonianSpec::single_site(GroupId::SU2, &[(1.0, Generator::Sz)]).expect("valid");
    let p0 = CoherentParams::new(GroupId::SU2, vec![1.0, 0.25]).expect("finite");
    let traj = integrate(&h, &[p0], 1e-3, 10_000, EomMethod::Berry, 1.0);
    let (passed, detail) = match traj {
        Ok(t) => {
            let phi = t.final_point()[0].values()[1];
            let freq = (phi - 0.25) / 10.0;
            let drift = t.max_relative_energy_drift();
            (
                (freq - 1.0).abs() < 1e-8 && drift < 1e-10,
                format!("frequency {freq}, drift {drift:e}"),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    out.push(check("Larmor precession", passed, detail));

    let (passed, detail) = match (
        overlap(
            &CoherentParams::new(GroupId::SU2, vec![0.7, 0.0]).expect("finite"),
            &CoherentParams::new(GroupId::SU2, vec![0.7, 0.0]).expect("finite"),
        ),
        unity_check(64, 64),
    ) {
        (Ok(o), Ok(u)) => ((o - C64::new(1.0, 0.0)).norm() < 1e-12 && u < 1e-12, format!("self-overlap {o}, unity dev {u:e}")),
        _ => (false, "evaluation failed".into()),
    };
    out.push(check("self-overlap and resolution of unity", passed, detail));

    let (passed, detail) = match reduce_check(GroupId::SU4, GroupId::SU3, 20, seed, 1.0) {
        Ok(r) => (r.passes(1e-8), format!("{r:?}")),
        Err(e) => (false, e.to_string()),
    };
    out.push(check("SU4 -> SU3 reduction", passed, detail));

    let run = || GroupId::ALL.map(|g| compatibility_report(g, 10, seed).to_csv_string());
    let (passed, detail) = (run() == run(), "two runs with the same seed");
    out.push(check("compatibility reports are deterministic", passed, detail));

    let (passed, detail) = {
        let h = HamiltonianSpec::single_site(GroupId::SU3, &[(0.4, Generator::Sx), (1.0, Generator::Sz)]).expect("valid");
        let p = CoherentParams::new(GroupId::SU3, vec![1.0, 0.2, 0.3, 0.4]).expect("finite");
        match compare(&h, &[p], 0.5, 1e-3, 1.0) {
            Ok(m) => (m.max_deviation() < 1e-6, format!("max deviation {:e}", m.max_deviation())),
            Err(e) => (false, e.to_string()),
        }
    };
    out.push(check("SU3 classical = quantum", passed, detail));
    out
}

/// Known deviations between the printed formulas and the oracles; reported, never counted.
pub fn verify_diagnostics(seed: u64) -> Vec<String> {
    let mut lines = Vec::new();
    let rep = spin_rep(4).expect("spin 2");
    let dev = wigner_d(&rep, std::f64::consts::FRAC_PI_2).series_deviation.unwrap_or(f64::NAN);
    lines.push(format!("spin-2 printed d-series at θ = π/2 deviates by {dev:e}"));
    match reduce_check(GroupId::SU5, GroupId::SU4, 20, seed, 1.0) {
        Ok(r) => lines.push(format!(
            "SU5 -> SU4 reduction: restricted ω degenerate at {}/{} points",
            r.restricted_singular, r.n_points
        )),
        Err(e) => lines.push(format!("SU5 -> SU4 reduction: {e}")),
    }
    for group in GroupId::ALL {
        let Ok(h) = HamiltonianSpec::single_site(group, &[(1.0, Generator::Sz)]) else {
            continue;
        };
        if let Ok(cmp) = compare_methods(group, &h, 20, seed, 1.0) {
            let worst = cmp.per_coordinate.iter().map(|c| c.1).fold(0.0, f64::max);
            lines.push(format!("{group}: printed equations vs Berry field, max |Δq̇| = {worst:e}"));
        }
    }
    for group in [GroupId::SU4, GroupId::SU5] {
        let worst = compatibility_report(group, 20, seed)
            .entries
            .iter()
            .map(|e| e.abs_dev)
            .fold(0.0, f64::max);
        lines.push(format!("{group}: printed closed forms vs oracle, max deviation {worst:e}"));
    }
    lines
}

fn verify(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let checks = verify_suite(seed);
    let mut w = open_output(cli.output.as_deref())?;
    for c in &checks {
        writeln!(w, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    for line in verify_diagnostics(seed) {
        writeln!(w, "INFO {line}")?;
    }
    w.flush()?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Expect => expect(cli),
        Command::Derive => derive(cli),
        Command::Compare => compare_cmd(cli),
        Command::Verify => verify(cli),
        Command::Report { group, samples } => report(cli, *group, *samples),
    }
}

/// Parses arguments, runs, prints errors and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LARMOR: &str = r#"{
        "group": "su2",
        "hamiltonian": [{"coeff": [1.0, 0.0], "factors": [[0, ["Sz"]]]}],
        "initial": [[1.0, 0.5]],
        "dt": 0.001,
        "steps": 2000
    }"#;

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::from_json(LARMOR).unwrap();
        assert_eq!(c.sites, 1);
        assert_eq!(c.hbar, 1.0);
        assert_eq!(c.method, EomMethod::Berry);
        assert!(c.validate().is_ok());
        let bad = LARMOR.replace("\"Sz\"", "\"Sq\"");
        let err = RunConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INVALID_CONFIG);
        let bad = LARMOR.replace("[[1.0, 0.5]]", "[[1.0]]");
        assert!(RunConfig::from_json(&bad).unwrap().validate().is_err());
        assert!(RunConfig::from_json("{\"group\": \"su7\"}").is_err());
    }

    #[test]
    fn hamiltonian_parsing_examples() {
        let t = |c: [f64; 2], site, names: &[&str]| TermConfig {
            coeff: c,
            factors: vec![(site, names.iter().map(|s| s.to_string()).collect())],
        };
        let h = parse_hamiltonian(GroupId::SU2, 1, &[t([-1.0, 0.0], 0, &["Sz"])]).unwrap();
        let sz = GroupId::SU2.operators().matrix(Generator::Sz).unwrap();
        assert!(h.assemble().unwrap().max_abs_diff(&sz.scale_real(-1.0)) < 1e-15);
        let h = parse_hamiltonian(GroupId::SU3, 1, &[t([1.0, 0.0], 0, &["Sz", "Sz"])]).unwrap();
        let sz3 = GroupId::SU3.operators().matrix(Generator::Sz).unwrap();
        assert!(h.assemble().unwrap().max_abs_diff(&(&sz3 * &sz3)) < 1e-15);
        assert!(parse_hamiltonian(GroupId::SU2, 1, &[t([0.5, 0.1], 0, &["Sp"])]).is_err());
        assert!(parse_hamiltonian(GroupId::SU2, 1, &[t([1.0, 0.0], 1, &["Sz"])]).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let c = RunConfig::from_json(LARMOR).unwrap();
        let (h, p) = c.validate().unwrap();
        let traj = integrate(&h, &p, c.dt, 50, c.method, c.hbar).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,theta_0,phi_0,Sx_0,Sy_0,Sz_0,energy\n"));
        let back = read_trajectory_csv(GroupId::SU2, buf.as_slice()).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.energies, traj.energies);
        assert_eq!(back.observables, traj.observables);
        assert_eq!(back.points, traj.points);
        assert!(read_trajectory_csv(GroupId::SU3, buf.as_slice()).is_err());
    }

    #[test]
    fn verify_suite_passes() {
        let checks = verify_suite(0);
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
