//! Command-line front end: validate, certify and measure assemblage
//! documents, generate the bundled examples, and evaluate CHSH on a
//! realization document.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pqsteer::bell::{chsh, chsh_maximal, correlations_from_realization, evaluate};
use pqsteer::certify::{
    certify_with, lambda_relaxation_with, lambda_sdpa, lhs_membership_with,
    outer_hierarchy_membership_with, CertifyError, LhsOutcome, Membership, Verdict,
};
use pqsteer::construct::{load_fixture, noise_assemblage, FixtureName, NoiseKind};
use pqsteer::document::{AssemblageDocument, RealizationDocument};
use pqsteer::model::{Assemblage, ScenarioSpec};
use pqsteer::robustness::{robustness_with, RobustnessError};
use pqsteer::sdp::SolverConfig;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "pqsteer",
    version,
    about = "Certify steering assemblages with multiple characterised parties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural and physical validation of an assemblage document.
    Validate { file: PathBuf },
    /// Full certification: parent-state relaxation plus (for two or more
    /// uncharacterised parties) the NPA screen on their correlations.
    Certify {
        file: PathBuf,
        /// NPA hierarchy level for the correlation screen.
        #[arg(long, default_value_t = 1)]
        npa_level: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Minimum-eigenvalue slack of the parent-state program.
    Lambda {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Classical (local-hidden-state) membership.
    Lhs {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimum noise weight restoring parent-state feasibility.
    Robustness {
        file: PathBuf,
        /// Noise model: white | ghz | w | PATH to an assemblage document.
        #[arg(long)]
        noise: String,
        /// Feasibility tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Outer (operator-valued) moment hierarchy membership.
    Hierarchy {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Write a bundled example to an assemblage document.
    Gen {
        kind: GenKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate CHSH on a realization document (with measurement choices for
    /// the characterised parties).
    Chsh { file: PathBuf },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Write a machine-readable report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Dump the SDP in SDPA sparse format to this path.
    #[arg(long)]
    dump_sdpa: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Pr,
    Abb1,
    AbbPqnl,
    AbbPtp1,
    White,
    GhzNoise,
    WNoise,
}

/// Machine-readable result written by `--json`. Optional fields are omitted
/// when the command does not produce them.
#[derive(Serialize, Default)]
struct Report {
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_condition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    npa_level_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    npa: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent_min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent_marginal_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent_signalling: Option<f64>,
    eps_feas: f64,
    elapsed_ms: f64,
    exit_code: u8,
}

enum CliError {
    /// Malformed input: document, noise spec, unreadable file.
    Usage(String),
    /// The solver could not decide, or an engine limitation was hit.
    Inconclusive(String),
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        CliError::Inconclusive(e.to_string())
    }
}

impl From<RobustnessError> for CliError {
    fn from(e: RobustnessError) -> Self {
        match e {
            RobustnessError::Construct(c) => CliError::Usage(c.to_string()),
            RobustnessError::Model(m) => CliError::Usage(m.to_string()),
            other => CliError::Inconclusive(other.to_string()),
        }
    }
}

fn read_assemblage(path: &Path) -> Result<Assemblage, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {}", path.display(), e)))?;
    let doc = AssemblageDocument::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))?;
    doc.to_assemblage().map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {}", path.display(), e)))
}

fn finish(report: &mut Report, json: &Option<PathBuf>, start: Instant, code: u8) -> Result<u8, CliError> {
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    report.exit_code = code;
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| CliError::Inconclusive(e.to_string()))?;
        write_file(path, &text)?;
    }
    Ok(code)
}

fn membership_name(m: &Membership) -> String {
    match m {
        Membership::Feasible { .. } => "feasible".into(),
        Membership::Infeasible { .. } => "infeasible".into(),
        Membership::Unknown { .. } => "unknown".into(),
    }
}

fn parse_noise(spec: &str) -> Result<NoiseKind, CliError> {
    match spec.to_ascii_lowercase().as_str() {
        "white" => Ok(NoiseKind::White),
        "ghz" => Ok(NoiseKind::Ghz),
        "w" => Ok(NoiseKind::W),
        path => Ok(NoiseKind::Custom(Box::new(read_assemblage(Path::new(path))?))),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    match cli.command {
        Command::Validate { file } => {
            let asm = read_assemblage(&file)?;
            let rep = asm.validate();
            if rep.is_valid() {
                println!("valid: {} element(s), {} characterised part(y/ies)",
                    asm.elements.len(), asm.scenario.num_bobs);
                Ok(EXIT_OK)
            } else {
                for v in &rep.violations {
                    println!(
                        "violation [{}] {}: magnitude {:.3e} (tolerance {:.3e})",
                        v.check, v.context, v.magnitude, v.tolerance
                    );
                }
                Ok(EXIT_NEGATIVE)
            }
        }
        Command::Certify { file, npa_level, common } => {
            let asm = read_assemblage(&file)?;
            if let Some(path) = &common.dump_sdpa {
                write_file(path, &lambda_sdpa(&asm)?)?;
            }
            let rep = certify_with(&asm, npa_level, &cfg)?;
            let code = match rep.verdict {
                Verdict::QuantumCertified => EXIT_OK,
                Verdict::PostquantumCertified => EXIT_NEGATIVE,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            };
            println!("verdict: {:?}", rep.verdict);
            if let Some(f) = rep.failed_condition {
                println!("failed condition: {:?}", f);
            }
            println!("lambda_star: {:.9}", rep.lambda.lambda_star);
            if let Some(npa) = &rep.npa {
                println!("npa (level {}): {}", rep.npa_level_used, membership_name(npa));
            }
            let mut report = Report {
                command: "certify".into(),
                verdict: Some(format!("{:?}", rep.verdict)),
                failed_condition: rep.failed_condition.map(|f| format!("{:?}", f)),
                lambda_star: Some(rep.lambda.lambda_star),
                feasible: Some(rep.lambda.feasible),
                npa_level_used: Some(rep.npa_level_used),
                npa: rep.npa.as_ref().map(membership_name),
                eps_feas: cfg.eps_feas,
                ..Default::default()
            };
            if let Some(parent) = &rep.lambda.parent {
                report.parent_min_eigenvalue = Some(parent.min_eigenvalue());
                report.parent_marginal_residual = Some(parent.max_marginal_residual(&asm));
                report.parent_signalling = Some(parent.max_signalling());
            }
            finish(&mut report, &common.json, start, code)
        }
        Command::Lambda { file, common } => {
            let asm = read_assemblage(&file)?;
            if let Some(path) = &common.dump_sdpa {
                write_file(path, &lambda_sdpa(&asm)?)?;
            }
            let rep = lambda_relaxation_with(&asm, &cfg)?;
            println!("lambda_star: {:.9}", rep.lambda_star);
            println!("feasible: {}", rep.feasible);
            let code = if rep.feasible { EXIT_OK } else { EXIT_NEGATIVE };
            let mut report = Report {
                command: "lambda".into(),
                lambda_star: Some(rep.lambda_star),
                feasible: Some(rep.feasible),
                eps_feas: rep.eps_feas,
                ..Default::default()
            };
            if let Some(parent) = &rep.parent {
                report.parent_min_eigenvalue = Some(parent.min_eigenvalue());
                report.parent_marginal_residual = Some(parent.max_marginal_residual(&asm));
                report.parent_signalling = Some(parent.max_signalling());
            }
            finish(&mut report, &common.json, start, code)
        }
        Command::Lhs { file, common } => {
            let asm = read_assemblage(&file)?;
            let out = lhs_membership_with(&asm, &cfg)?;
            let (code, slack, name) = match &out {
                LhsOutcome::Feasible { slack, .. } => (EXIT_OK, Some(*slack), "feasible"),
                LhsOutcome::Infeasible { slack } => (EXIT_NEGATIVE, *slack, "infeasible"),
                LhsOutcome::Unknown { .. } => (EXIT_INCONCLUSIVE, None, "unknown"),
            };
            println!("lhs: {}", name);
            if let Some(s) = slack {
                println!("slack: {:.9}", s);
            }
            let mut report = Report {
                command: "lhs".into(),
                verdict: Some(name.into()),
                slack,
                eps_feas: cfg.eps_feas,
                ..Default::default()
            };
            finish(&mut report, &common.json, start, code)
        }
        Command::Robustness { file, noise, tol, common } => {
            let asm = read_assemblage(&file)?;
            let kind = parse_noise(&noise)?;
            let cfg = SolverConfig { eps_feas: tol.unwrap_or(cfg.eps_feas), ..cfg };
            let res = robustness_with(&asm, kind, &cfg)?;
            println!("r_star: {:.9}", res.r_star);
            if res.diagnostics.lower_bound_only {
                println!("note: lower bound (necessary-condition relaxation for several uncharacterised parties)");
            }
            let code = if res.r_star <= cfg.eps_feas { EXIT_OK } else { EXIT_NEGATIVE };
            let mut report = Report {
                command: "robustness".into(),
                r_star: Some(res.r_star),
                noise: Some(noise),
                eps_feas: cfg.eps_feas,
                ..Default::default()
            };
            if let Some(parent) = &res.parent_at_optimum {
                report.parent_min_eigenvalue = Some(parent.min_eigenvalue());
                report.parent_marginal_residual = Some(res.diagnostics.marginal_residual);
                report.parent_signalling = Some(parent.max_signalling());
            }
            finish(&mut report, &common.json, start, code)
        }
        Command::Hierarchy { file, level, common } => {
            let asm = read_assemblage(&file)?;
            let out = outer_hierarchy_membership_with(&asm, level, &cfg)?;
            println!("hierarchy level {}: {}", level, membership_name(&out));
            let code = match &out {
                Membership::Feasible { .. } => EXIT_OK,
                Membership::Infeasible { .. } => EXIT_NEGATIVE,
                Membership::Unknown { .. } => EXIT_INCONCLUSIVE,
            };
            let slack = match &out {
                Membership::Feasible { slack } => Some(*slack),
                Membership::Infeasible { slack } => *slack,
                Membership::Unknown { .. } => None,
            };
            let mut report = Report {
                command: "hierarchy".into(),
                verdict: Some(membership_name(&out)),
                npa_level_used: Some(level),
                slack,
                eps_feas: cfg.eps_feas,
                ..Default::default()
            };
            finish(&mut report, &common.json, start, code)
        }
        Command::Gen { kind, out } => {
            let asm = match kind {
                GenKind::Pr => load_fixture(FixtureName::Pr),
                GenKind::Abb1 => load_fixture(FixtureName::Abb1),
                GenKind::AbbPqnl => load_fixture(FixtureName::AbbPqnl),
                GenKind::AbbPtp1 => load_fixture(FixtureName::AbbPtp1),
                GenKind::White | GenKind::GhzNoise | GenKind::WNoise => {
                    let scenario = ScenarioSpec::uniform(1, 2, 2, vec![2, 2])
                        .expect("static scenario");
                    let noise = match kind {
                        GenKind::White => NoiseKind::White,
                        GenKind::GhzNoise => NoiseKind::Ghz,
                        _ => NoiseKind::W,
                    };
                    noise_assemblage(&noise, &scenario)
                        .map_err(|e| CliError::Inconclusive(e.to_string()))?
                }
            };
            let doc = AssemblageDocument::from_assemblage(&asm);
            write_file(&out, &doc.to_json().map_err(|e| CliError::Inconclusive(e.to_string()))?)?;
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Chsh { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {}", file.display(), e)))?;
            let doc = RealizationDocument::from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", file.display(), e)))?;
            let (qr, bob_meas) = doc
                .to_parts()
                .map_err(|e| CliError::Usage(format!("{}: {}", file.display(), e)))?;
            if bob_meas.is_empty() {
                return Err(CliError::Usage(
                    "realization document carries no measurements for the characterised parties"
                        .into(),
                ));
            }
            let d = correlations_from_realization(&qr, &bob_meas)
                .map_err(|e| CliError::Inconclusive(e.to_string()))?;
            let two_party = d.alice_settings.len() + d.bob_settings.len() == 2;
            let data = if two_party {
                d
            } else {
                println!("evaluating on the characterised parties' marginal");
                d.bob_marginal().map_err(|e| CliError::Inconclusive(e.to_string()))?
            };
            let std_f = chsh(data.alice_settings.len(), data.bob_settings.len())
                .map_err(|e| CliError::Inconclusive(e.to_string()))?;
            let std_v = evaluate(&std_f, &data);
            let (max_v, _) =
                chsh_maximal(&data).map_err(|e| CliError::Inconclusive(e.to_string()))?;
            println!("chsh (standard signs): {:.9}", std_v);
            println!("chsh (best sign variant): {:.9}", max_v);
            println!("classical bound: {}", std_f.classical_bound);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Inconclusive(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(EXIT_INCONCLUSIVE)
        }
    }
}
