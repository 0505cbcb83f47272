//! Command-line front end.
//!
//! Every subcommand prints `key = value` lines to stdout. Commands that
//! produce a grid also write a CSV trace, into `--out <dir>` when given and
//! after a blank line on stdout otherwise. Exit status is 0 when every checked
//! margin is at least `-tol`, 1 on a violated margin or an undetermined
//! constant, and 2 on bad input.

pub mod format;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apps::{self, EPIInput, RankOneVerdict};
use crate::datum::{self, BLDatum};
use crate::entropy::{self, SystemKind};
use crate::error::{Error, Result};
use crate::flow;
use crate::linalg;
use crate::random;
use crate::solver::{self, Constant, ConstantOptions, InfiniteReason, Method};
use crate::symplectic;

use format::num;

#[derive(Debug, Parser)]
#[command(name = "qbl", version, about = "Brascamp-Lieb constants and Gaussian entropy inequalities")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunConfig {
    /// Margin tolerance; each command has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Iteration cap of the fixed-point solver.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Largest time of the flow or evolution grid.
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// Number of grid points.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Directory for CSV traces.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report entropies in bits.
    #[arg(long, global = true)]
    pub bits: bool,
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} must be positive")));
        if self.tol.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("--tol");
        }
        if self.t_max.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("--t-max");
        }
        if self.max_iter == Some(0) {
            return bad("--max-iter");
        }
        if self.grid.is_some_and(|g| g < 3) {
            return Err(Error::InvalidArgument("--grid needs at least 3 points".into()));
        }
        Ok(())
    }

    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn constant_options(&self) -> ConstantOptions {
        let mut opts = ConstantOptions { seed: self.seed, ..ConstantOptions::default() };
        if let Some(it) = self.max_iter {
            opts.solve.max_iter = it;
        }
        opts
    }

    /// Converts an entropy in nats to the requested unit.
    fn ent(&self, x: f64) -> String {
        num(if self.bits { x / std::f64::consts::LN_2 } else { x })
    }

    fn units(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Brascamp-Lieb constant of a datum.
    Constant { datum: PathBuf },
    /// Entropy inequality `S(X|M) <= sum p_i S(Y_i|M) + f` for a Gaussian state.
    VerifySsa {
        datum: PathBuf,
        state: PathBuf,
        /// Use this constant instead of computing it.
        #[arg(long, allow_hyphen_values = true)]
        f: Option<f64>,
    },
    /// Entropy combination along the heat flow generated by the extremizer.
    Flow { datum: PathBuf, state: PathBuf },
    /// Fisher information gap for every map, with a random seeded heat direction.
    Stam { datum: PathBuf, state: PathBuf },
    /// Constant of an uncertainty datum, with a finiteness certificate when
    /// every map is a single row.
    Eur { datum: PathBuf },
    /// Lower bound on the output entropy of a two-input beam combiner.
    Epi {
        #[arg(long)]
        lambda1: f64,
        #[arg(long)]
        lambda2: f64,
        #[arg(long, allow_hyphen_values = true)]
        s1: f64,
        #[arg(long, allow_hyphen_values = true)]
        s2: f64,
        #[arg(long, allow_hyphen_values = true)]
        s_y: f64,
        #[arg(long)]
        modes: usize,
    },
    /// Growth rate of `ln f(t)` under a quadratic Hamiltonian.
    EntRate { hamiltonian: PathBuf },
    /// Gaussian Brascamp-Lieb integral inequality on random inputs.
    BlIntegral {
        datum: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Entropies and symplectic spectrum of a state.
    Entropy { state: PathBuf },
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Violation,
}

impl Outcome {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Violation
        }
    }
}

/// Exit status for a finished run.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Violation) => 1,
        Err(Error::NumericalFailure(_) | Error::UnknownCapacity(_) | Error::DegeneratePushforward { .. }) => 1,
        Err(_) => 2,
    }
}

/// Accumulates `key = value` lines and CSV traces.
struct Report<'a> {
    out: &'a mut dyn Write,
    dir: Option<&'a Path>,
    text: String,
    traces: Vec<(String, String)>,
}

impl<'a> Report<'a> {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    fn trace(&mut self, name: &str, csv: String) {
        self.traces.push((name.to_string(), csv));
    }

    fn finish(self) -> Result<()> {
        self.out.write_all(self.text.as_bytes())?;
        for (name, csv) in &self.traces {
            match self.dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(name);
                    std::fs::write(&path, csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                    writeln!(self.out, "trace = {}", path.display())?;
                }
                None => write!(self.out, "\n{csv}")?,
            }
        }
        Ok(())
    }
}

fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::FixedPoint => "fixed-point",
        Method::Newton => "newton",
        Method::MultiStart => "multi-start",
        Method::Regularized => "regularized",
    }
}

fn report_constant(r: &mut Report, cfg: &RunConfig, c: &Constant) {
    match c {
        Constant::Finite { value, method, .. } => {
            r.kv("f", cfg.ent(*value));
            r.kv("method", method_name(*method));
        }
        Constant::Infinite(reason) => {
            r.kv("f", "inf");
            match reason {
                InfiniteReason::ScalingCondition { defect } => {
                    r.kv("reason", format!("scaling condition fails by {}", num(*defect)))
                }
                InfiniteReason::Supercritical { dim, weighted_image_dim } => r.kv(
                    "reason",
                    format!("subspace of dimension {dim} has weighted image dimension {}", num(*weighted_image_dim)),
                ),
            }
        }
        Constant::Unknown { lower_bound, diagnostics } => {
            r.kv("f", "unknown");
            r.kv("lower_bound", cfg.ent(*lower_bound));
            for d in diagnostics {
                r.kv("diagnostic", d);
            }
        }
    }
}

fn load_datum(path: &Path) -> Result<BLDatum> {
    Ok(format::parse_datum(path)?.datum)
}

/// Parses the arguments and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = run(&cli, out);
    if let Err(e) = &result {
        let _ = writeln!(err, "error: {e}");
    }
    exit_code(&result)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = &cli.config;
    cfg.validate()?;
    let mut r = Report { out, dir: cfg.out.as_deref(), text: String::new(), traces: Vec::new() };
    r.kv("units", cfg.units());
    let outcome = match &cli.command {
        Command::Constant { datum } => cmd_constant(&mut r, cfg, datum)?,
        Command::VerifySsa { datum, state, f } => cmd_verify_ssa(&mut r, cfg, datum, state, *f)?,
        Command::Flow { datum, state } => cmd_flow(&mut r, cfg, datum, state)?,
        Command::Stam { datum, state } => cmd_stam(&mut r, cfg, datum, state)?,
        Command::Eur { datum } => cmd_eur(&mut r, cfg, datum)?,
        Command::Epi { lambda1, lambda2, s1, s2, s_y, modes } => {
            let input = EPIInput::new(*lambda1, *lambda2, *s1, *s2, *s_y, *modes)?;
            r.kv("triangle", input.triangle());
            r.kv("bound", cfg.ent(apps::epi_bound(&input)));
            Outcome::Pass
        }
        Command::EntRate { hamiltonian } => cmd_ent_rate(&mut r, cfg, hamiltonian)?,
        Command::BlIntegral { datum, samples } => cmd_bl_integral(&mut r, cfg, datum, *samples)?,
        Command::Entropy { state } => cmd_entropy(&mut r, cfg, state)?,
    };
    r.kv("status", if outcome == Outcome::Pass { "ok" } else { "violated" });
    r.finish()?;
    Ok(outcome)
}

fn cmd_constant(r: &mut Report, cfg: &RunConfig, path: &Path) -> Result<Outcome> {
    let d = load_datum(path)?;
    let c = solver::bl_constant(&d, &cfg.constant_options());
    report_constant(r, cfg, &c);
    if let Constant::Finite { alpha: Some(alpha), .. } = &c {
        r.kv("stationarity_residual", num(datum::stationarity_residual(&d, alpha)?));
    }
    Ok(Outcome::from_ok(!matches!(c, Constant::Unknown { .. })))
}

fn cmd_verify_ssa(r: &mut Report, cfg: &RunConfig, dpath: &Path, spath: &Path, f: Option<f64>) -> Result<Outcome> {
    let d = load_datum(dpath)?;
    let joint = format::parse_state(spath)?;
    let f = match f {
        Some(f) => {
            r.kv("f", cfg.ent(f));
            f
        }
        None => {
            let c = solver::bl_constant(&d, &cfg.constant_options());
            report_constant(r, cfg, &c);
            match c {
                Constant::Finite { value, .. } => value,
                Constant::Infinite(_) => {
                    r.kv("margin", "inf");
                    return Ok(Outcome::Pass);
                }
                Constant::Unknown { .. } => return Ok(Outcome::Violation),
            }
        }
    };
    r.kv("S(X|M)", cfg.ent(entropy::conditional_entropy(&joint)?));
    for (i, map) in d.maps().iter().enumerate() {
        let kind = solver::output_kind(map, joint.kind_x(), i)?;
        let pushed = joint.pushforward(map.matrix(), kind)?;
        r.kv(&format!("S(Y_{}|M)", i + 1), cfg.ent(entropy::conditional_entropy(&pushed)?));
    }
    let margin = solver::verify_ssa_gaussian(&d, &joint, f)?;
    r.kv("margin", cfg.ent(margin));
    Ok(Outcome::from_ok(margin >= -cfg.tol_or(1e-9)))
}

fn flow_grid(cfg: &RunConfig) -> Vec<f64> {
    let points = cfg.grid.unwrap_or(40);
    match cfg.t_max {
        None => flow::default_grid(points),
        Some(t_max) => {
            let (lo, hi) = ((t_max * 1e-6).ln(), t_max.ln());
            let mut grid = vec![0.0];
            grid.extend((0..points).map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()));
            grid
        }
    }
}

fn cmd_flow(r: &mut Report, cfg: &RunConfig, dpath: &Path, spath: &Path) -> Result<Outcome> {
    let d = load_datum(dpath)?;
    let joint = format::parse_state(spath)?;
    let c = solver::bl_constant(&d, &cfg.constant_options());
    report_constant(r, cfg, &c);
    let (value, alpha) = match c {
        Constant::Finite { value, alpha: Some(alpha), .. } => (value, alpha),
        Constant::Finite { .. } => {
            return Err(Error::NumericalFailure("constant is not attained, so no extremizer drives the flow".into()))
        }
        Constant::Infinite(_) => return Err(Error::InvalidArgument("constant is infinite; the flow is undefined".into())),
        Constant::Unknown { .. } => return Ok(Outcome::Violation),
    };
    let trace = flow::flow_trace(&d, &joint, &alpha, &flow_grid(cfg))?;
    let tol = cfg.tol_or(1e-7);
    r.kv("phi_start", cfg.ent(trace.phi[0]));
    r.kv("phi_end", cfg.ent(trace.final_value()));
    r.kv("limit_estimate", cfg.ent(trace.limit_estimate));
    r.kv("limit_gap", cfg.ent((trace.limit_estimate - value).abs()));
    r.kv("max_decrease", cfg.ent(trace.max_decrease));

    let mut csv = String::from("t,phi,phi_X");
    for i in 0..d.len() {
        let _ = write!(csv, ",phi_Y_{}", i + 1);
    }
    csv.push('\n');
    let scale = if cfg.bits { 1.0 / std::f64::consts::LN_2 } else { 1.0 };
    for k in 0..trace.t_grid.len() {
        let mut row = vec![trace.t_grid[k], trace.phi[k] * scale, trace.phi_x[k] * scale];
        row.extend(trace.phi_y.iter().map(|y| y[k] * scale));
        let _ = writeln!(csv, "{}", csv_row(&row));
    }
    r.trace("flow.csv", csv);
    Ok(Outcome::from_ok(trace.is_nondecreasing(tol)))
}

fn cmd_stam(r: &mut Report, cfg: &RunConfig, dpath: &Path, spath: &Path) -> Result<Outcome> {
    let d = load_datum(dpath)?;
    let joint = format::parse_state(spath)?;
    if joint.x_dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has an X block of size {}, datum acts on {}",
            joint.x_dim(),
            d.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alpha = random::pd_matrix(d.dim(), &mut rng);
    let tol = cfg.tol_or(1e-6);
    let mut ok = true;
    for (i, map) in d.maps().iter().enumerate() {
        let gap = flow::stam_check(&joint, map, &alpha)?;
        ok &= gap >= -tol;
        r.kv(&format!("gap_{}", i + 1), num(gap));
    }
    Ok(Outcome::from_ok(ok))
}

fn cmd_eur(r: &mut Report, cfg: &RunConfig, path: &Path) -> Result<Outcome> {
    let d = load_datum(path)?;
    let rank_one = d.maps().iter().all(|m| m.output_dim() == 1);
    r.kv("rank_one", rank_one);
    match if rank_one { Some(apps::rank_one_finiteness(&d)?) } else { None } {
        None => {}
        Some(RankOneVerdict::Finite { certificate }) => {
            r.kv("finite", true);
            for bw in &certificate {
                let basis: Vec<String> = bw.basis.iter().map(|i| (i + 1).to_string()).collect();
                r.kv("basis", format!("{{{}}} weight {}", basis.join(","), num(bw.weight)));
            }
        }
        Some(RankOneVerdict::Infinite { distance }) => {
            r.kv("finite", false);
            r.kv("distance", num(distance));
            return Ok(Outcome::Pass);
        }
    }
    let c = solver::bl_constant(&d, &cfg.constant_options());
    report_constant(r, cfg, &c);
    Ok(Outcome::from_ok(!matches!(c, Constant::Unknown { .. })))
}

fn cmd_ent_rate(r: &mut Report, cfg: &RunConfig, path: &Path) -> Result<Outcome> {
    let h = format::parse_hamiltonian(path)?;
    let norm = linalg::singular_values(h.matrix()).iter().copied().fold(0.0, f64::max);
    let t_max = cfg.t_max.unwrap_or(if norm > 0.0 { 100.0 / norm } else { 1.0 });
    let samples = cfg.grid.unwrap_or(60);
    let mut csv = String::from("t,ln_f\n");
    if !h.is_symmetric() {
        let (lo, hi) = ((t_max * 1e-3).ln(), t_max.ln());
        let grid: Vec<f64> =
            (0..samples).map(|k| (lo + (hi - lo) * k as f64 / (samples - 1) as f64).exp()).collect();
        let trace = apps::log_block_det_trace(&h, &grid)?;
        for (t, v) in &trace {
            let _ = writeln!(csv, "{}", csv_row(&[*t, *v]));
        }
        r.kv("symmetric", false);
        r.kv("lambda", "not claimed");
        r.trace("ent_rate.csv", csv);
        return Ok(Outcome::Pass);
    }
    let rate = apps::entanglement_rate(&h, t_max, samples)?;
    r.kv("symmetric", true);
    r.kv("lambda", num(rate.lambda));
    r.kv("r_squared", num(rate.r_squared));
    r.kv("asymptotic", rate.asymptotic);
    r.kv("t_max", num(rate.t_max));
    r.kv("reduced", rate.reduced);
    r.kv("symmetry_defect", num(rate.symmetry_defect));
    for (t, v) in &rate.trace {
        let _ = writeln!(csv, "{}", csv_row(&[*t, *v]));
    }
    r.trace("ent_rate.csv", csv);
    let tol = cfg.tol_or(1e-8);
    Ok(Outcome::from_ok(rate.symmetry_defect <= tol && rate.lambda >= -tol))
}

fn cmd_bl_integral(r: &mut Report, cfg: &RunConfig, path: &Path, samples: usize) -> Result<Outcome> {
    let d = load_datum(path)?;
    let c = solver::bl_constant(&d, &cfg.constant_options());
    report_constant(r, cfg, &c);
    let (f, alpha) = match c {
        Constant::Finite { value, alpha, .. } => (value, alpha),
        Constant::Infinite(_) => return Ok(Outcome::Pass),
        Constant::Unknown { .. } => return Ok(Outcome::Violation),
    };
    let tol = cfg.tol_or(1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = String::from("sample,gap\n");
    let mut min_gap = f64::INFINITY;
    for k in 0..samples {
        let a: Vec<DMatrix<f64>> =
            d.maps().iter().map(|m| random::pd_matrix(m.output_dim(), &mut rng).into_inner()).collect();
        let gap = solver::verify_bl_integral_gaussian(&d, &a, f)?;
        min_gap = min_gap.min(gap);
        let _ = writeln!(csv, "{},{}", k, num(gap));
    }
    r.kv("min_gap", cfg.ent(min_gap));
    if let Some(alpha) = alpha {
        let a: Vec<DMatrix<f64>> = d
            .maps()
            .iter()
            .map(|m| linalg::inv_pd(&(m.matrix() * alpha.matrix() * m.matrix().transpose())))
            .collect::<Option<_>>()
            .ok_or(Error::NumericalFailure("extremal pushforward is singular".into()))?;
        r.kv("extremal_gap", cfg.ent(solver::verify_bl_integral_gaussian(&d, &a, f)?));
    }
    r.trace("bl_integral.csv", csv);
    Ok(Outcome::from_ok(min_gap >= -tol))
}

fn cmd_entropy(r: &mut Report, cfg: &RunConfig, path: &Path) -> Result<Outcome> {
    let joint = format::parse_state(path)?;
    let gamma = joint.cov();
    let sg = entropy::shannon_gaussian(gamma)?;
    r.kv("S_G", cfg.ent(sg));
    r.kv("S(X|M)", cfg.ent(entropy::conditional_entropy(&joint)?));
    if joint.kind_x() != SystemKind::Quantum {
        return Ok(Outcome::Pass);
    }
    let nus = symplectic::symplectic_eigenvalues(gamma)?;
    r.kv("symplectic_eigenvalues", csv_row(&nus));
    let sq = entropy::von_neumann_gaussian(gamma)?;
    r.kv("S_Q", cfg.ent(sq));
    let modes = (gamma.dim() / 2) as f64;
    let upper = sg - sq;
    let lower = sq - (sg - modes * (std::f64::consts::E / 2.0).ln());
    r.kv("upper_margin", cfg.ent(upper));
    r.kv("lower_margin", cfg.ent(lower));
    let tol = cfg.tol_or(1e-10);
    Ok(Outcome::from_ok(upper >= -tol && lower >= -tol))
}
