//! The `beamgap` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::bloch::{band_structure_with, grid_gaps, QuasiMomentum, Spectrum};
use crate::error::{Error, Result};
use crate::homogenization::{appendix_tensor_closed_form, homogenized_tensor};
use crate::lattice::{build_square_example, load_config, Component, MaterialParams, ScalingParams, UnitCellGraph};
use crate::limit::validate_limit;
use crate::resonance::scan::{single_segment, ClosedFormResponse, Response};
use crate::resonance::{scan_gaps, BetaMatrix, ScanMode, SoftProblem};

#[derive(Debug, Parser)]
#[command(name = "beamgap", version, about = "Band gaps of high-contrast periodic beam lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective stiffness tensor of the stiff part, in Voigt form.
    Homogenize(Common),
    /// The 2x2 frequency-dependent density matrix on a lambda grid.
    Beta(Common),
    /// Band, weak-gap and full-gap intervals of the limit model.
    Gaps(Common),
    /// Bloch band structure along a Brillouin zone path.
    Bloch(Common),
    /// Scaled Bloch eigenvalues against the limit prediction.
    Validate(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    ClosedForm,
    Fe,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("expected a positive number, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("expected a non-negative number, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

fn count(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("expected a positive integer".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn float_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|t| positive(t.trim())).collect()
}

fn pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [a, b] if a.is_finite() && b.is_finite() => Ok([*a, *b]),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Lattice config (JSON).
    #[arg(long, conflicts_with = "builtin")]
    pub config: Option<PathBuf>,
    /// Built-in lattice.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Inclination of the soft segment in degrees (built-in lattice).
    #[arg(long, default_value_t = 45.0)]
    pub alpha: f64,
    /// Half length of the soft segment (built-in lattice).
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    pub a: f64,
    /// Element size [default: shortest beam / 64].
    #[arg(long, value_parser = positive)]
    pub h: Option<f64>,
    #[arg(long = "lambda-min", default_value_t = 0.0, value_parser = non_negative, allow_negative_numbers = true)]
    pub lambda_min: f64,
    #[arg(long = "lambda-max", default_value_t = 200.0, value_parser = positive, allow_negative_numbers = true)]
    pub lambda_max: f64,
    /// Lambda samples.
    #[arg(long, default_value_t = 2000, value_parser = count)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Mode::ClosedForm)]
    pub mode: Mode,
    /// Comma-separated scale ratios, decreasing; `bloch` uses the first one.
    #[arg(long, value_parser = float_list)]
    pub epsilons: Option<Vec<f64>>,
    /// Brillouin zone corners.
    #[arg(long, default_value = "GXMG")]
    pub path: String,
    /// Samples per path leg.
    #[arg(long, default_value_t = 16, value_parser = count)]
    pub points: usize,
    #[arg(long, default_value_t = 8, value_parser = count)]
    pub bands: usize,
    /// Also sample an N x N grid over the whole zone for gaps.
    #[arg(long, value_parser = count)]
    pub grid: Option<usize>,
    /// Macroscopic quasi-momentum for `validate`.
    #[arg(long, default_value = "2,0", value_parser = pair)]
    pub k: [f64; 2],
    /// Output file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const GRAMMAR: &str = "beamgap <command> [--config PATH | --builtin square --alpha DEG --a HALFLEN] [--h H] \
[--lambda-min X --lambda-max Y --samples N] [--mode closed-form|fe] [--epsilons CSV-list] [--path GXMG] \
[--points N] [--bands N] [--out PATH]";

const DEFAULT_EPSILONS: [f64; 3] = [0.25, 0.125, 0.0625];

impl Common {
    fn graph(&self) -> Result<UnitCellGraph> {
        match &self.config {
            Some(p) => load_config(p),
            // the square example is the only builtin
            None => build_square_example(self.alpha, self.a, MaterialParams::unit(), MaterialParams::unit()),
        }
    }

    fn mesh_size(&self, g: &UnitCellGraph) -> Result<f64> {
        match self.h {
            Some(h) => Ok(h),
            None => g.shortest_beam().map(|l| l / 64.0).ok_or_else(|| Error::Validation("lattice has no beams".into())),
        }
    }
}

/// Hash of the canonical config of `g`.
pub fn config_hash(g: &UnitCellGraph) -> String {
    let text = serde_json::to_string(&g.to_config()).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn header(argv: &[String], g: &UnitCellGraph, h: f64) -> String {
    format!("# command: {}\n# config_sha256: {}\n# h: {h}\n", argv.join(" "), config_hash(g))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn homogenize(c: &Common, g: &UnitCellGraph, h: f64, out: &mut String) -> Result<()> {
    let t = homogenized_tensor(&g.stiff_subgraph(), h)?;
    let v = t.voigt();
    // closed form of the square cross, when the stiff part is one
    let reference = match c.config {
        None => {
            let m = g.beams_of(Component::Stiff).next().map(|b| b.material).unwrap_or_else(MaterialParams::unit);
            Some(appendix_tensor_closed_form(m.gamma, m.eta, m.kappa)?)
        }
        Some(_) => None,
    };
    out.push_str("row,col,fe,closed_form\n");
    let rv = reference.as_ref().map(|r| r.voigt());
    for i in 0..3 {
        for j in 0..3 {
            writeln!(out, "{},{},{},{}", i + 1, j + 1, v[i][j], fmt_opt(rv.map(|r| r[i][j]))).unwrap();
        }
    }
    if let Some(r) = reference {
        writeln!(out, "# max_rel_error {}", t.max_rel_error(&r)).unwrap();
    }
    Ok(())
}

fn response<'a>(
    c: &Common,
    g: &UnitCellGraph,
    soft: Option<&'a SoftProblem>,
) -> Result<Box<dyn Fn(f64) -> Result<BetaMatrix> + 'a>> {
    match (c.mode, soft) {
        (Mode::Fe, Some(p)) => Ok(Box::new(move |l| p.beta(l))),
        _ => {
            let (a, alpha) = single_segment(g)?;
            let r = ClosedFormResponse { a, alpha_deg: alpha };
            Ok(Box::new(move |l| r.beta(l)))
        }
    }
}

fn beta(c: &Common, g: &UnitCellGraph, h: f64, out: &mut String) -> Result<()> {
    if c.lambda_min >= c.lambda_max {
        return Err(Error::Domain("lambda-min must be below lambda-max".into()));
    }
    let soft = match c.mode {
        Mode::Fe => Some(SoftProblem::new(g, h)?),
        Mode::ClosedForm => None,
    };
    let f = response(c, g, soft.as_ref())?;
    out.push_str("lambda,beta11,beta12,beta22,eig1,eig2,classification\n");
    let n = c.samples;
    for i in 0..n {
        let l = if n == 1 {
            c.lambda_min
        } else {
            c.lambda_min + (c.lambda_max - c.lambda_min) * i as f64 / (n - 1) as f64
        };
        match f(l) {
            Ok(b) => {
                let e = b.entries;
                writeln!(
                    out,
                    "{l},{},{},{},{},{},{}",
                    e[0][0], e[0][1], e[1][1], b.eigenvalues[0], b.eigenvalues[1], b.classification
                )
                .unwrap()
            }
            Err(Error::Pole { .. } | Error::NearResonance { .. }) => writeln!(out, "{l},,,,,,resonance").unwrap(),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn gaps(c: &Common, g: &UnitCellGraph, h: f64, out: &mut String) -> Result<()> {
    let mode = match c.mode {
        Mode::ClosedForm => ScanMode::ClosedForm,
        Mode::Fe => ScanMode::FiniteElement { h },
    };
    let iv = scan_gaps(g, c.lambda_max, c.samples, mode)?;
    out.push_str("lambda_lo,lambda_hi,classification,boundary_type\n");
    for i in iv.iter().filter(|i| i.hi > c.lambda_min) {
        writeln!(out, "{},{},{},{}", i.lo, i.hi, i.classification, i.boundary_type.as_str()).unwrap();
    }
    Ok(())
}

fn bloch(c: &Common, g: &UnitCellGraph, h: f64, out: &mut String) -> Result<()> {
    let spec = match c.epsilons.as_ref().and_then(|e| e.first()) {
        Some(&eps) => Spectrum::Scaled(ScalingParams::new(eps)?),
        None => Spectrum::Physical,
    };
    let bs = band_structure_with(g, spec, &c.path, c.points, c.bands, h)?;
    let mut buf = Vec::new();
    bs.write_csv(&mut buf).map_err(|e| Error::Io { path: "<buffer>".into(), source: e })?;
    out.push_str(&String::from_utf8(buf).expect("csv is utf-8"));
    if let Some(n) = c.grid {
        for gap in grid_gaps(g, spec, n, c.bands, h)? {
            writeln!(out, "# gap {} {} ({})", gap.lo, gap.hi, gap.annotation).unwrap();
        }
    }
    Ok(())
}

fn validate(c: &Common, g: &UnitCellGraph, h: f64, out: &mut String) -> Result<()> {
    let eps = c.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let r = validate_limit(g, &eps, QuasiMomentum::new(c.k[0], c.k[1]), h)?;
    out.push_str("epsilon,lambda_bloch,lambda_limit,rel_dev,order_estimate\n");
    for row in &r.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.epsilon,
            row.lambda_bloch,
            row.lambda_limit,
            row.rel_dev,
            fmt_opt(row.order_estimate)
        )
        .unwrap();
    }
    writeln!(
        out,
        "# empirical; deviations {}",
        if r.monotone() { "decrease monotonically" } else { "are not monotone" }
    )
    .unwrap();
    Ok(())
}

fn execute(cli: &Cli, argv: &[String]) -> Result<String> {
    let c = match &cli.command {
        Command::Homogenize(c) | Command::Beta(c) | Command::Gaps(c) | Command::Bloch(c) | Command::Validate(c) => c,
    };
    let g = c.graph()?;
    for w in &g.warnings {
        log::warn!("{w}");
    }
    let h = c.mesh_size(&g)?;
    let mut out = header(argv, &g, h);
    match &cli.command {
        Command::Homogenize(_) => homogenize(c, &g, h, &mut out)?,
        Command::Beta(_) => beta(c, &g, h, &mut out)?,
        Command::Gaps(_) => gaps(c, &g, h, &mut out)?,
        Command::Bloch(_) => bloch(c, &g, h, &mut out)?,
        Command::Validate(_) => validate(c, &g, h, &mut out)?,
    }
    Ok(out)
}

fn configure_threads() {
    if let Some(n) = std::env::var("BEAMGAP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        // fails only if a pool already exists, which then stays as is
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Run with `argv` (program name first). Returns the process exit code:
/// 0 on success, 1 on domain errors, 2 on usage errors.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = write!(stderr, "{text}\nUsage: {GRAMMAR}\n");
            }
            return code;
        }
    };
    configure_threads();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let out_path = match &cli.command {
        Command::Homogenize(c) | Command::Beta(c) | Command::Gaps(c) | Command::Bloch(c) | Command::Validate(c) => {
            c.out.clone()
        }
    };
    match execute(&cli, &argv) {
        Ok(text) => {
            let written = match &out_path {
                Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.clone(), source: e }),
                None => stdout.write_all(text.as_bytes()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e }),
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("beamgap").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn negative_lambda_is_a_usage_error() {
        let (code, _, err) = run_str(&["beta", "--builtin", "square", "--lambda-min", "-1"]);
        assert_eq!(code, 2, "{err}");
        assert!(err.contains("Usage"));
    }

    #[test]
    fn geometry_overflow_is_a_domain_error() {
        let (code, _, err) =
            run_str(&["homogenize", "--builtin", "square", "--alpha", "0.5", "--a", "0.6", "--h", "0.0625"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn closed_form_gaps_table() {
        let (code, out, _) =
            run_str(&["gaps", "--builtin", "square", "--a", "0.5", "--lambda-max", "200", "--mode", "closed-form"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("# command: beamgap gaps"));
        assert!(out.contains("\nlambda_lo,lambda_hi,classification,boundary_type\n"));
        assert!(out.lines().any(|l| l.ends_with(",full_gap,zero") || l.ends_with(",full_gap,pole")));
    }

    #[test]
    fn homogenize_reports_comparison() {
        let (code, out, _) =
            run_str(&["homogenize", "--builtin", "square", "--alpha", "45", "--a", "0.25", "--h", "0.015625"]);
        assert_eq!(code, 0);
        let err: f64 = out.lines().find_map(|l| l.strip_prefix("# max_rel_error ")).unwrap().parse().unwrap();
        assert!(err < 1e-6);
    }

    #[test]
    fn identical_runs_are_identical() {
        let args = ["beta", "--builtin", "square", "--lambda-max", "20", "--samples", "50"];
        assert_eq!(run_str(&args).1, run_str(&args).1);
    }
}
