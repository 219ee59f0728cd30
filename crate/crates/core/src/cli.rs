//! Command line front end. Every command prints JSON (samples: CSV) and
//! reports failures on stderr as `{"error": {"code": ..., "message": ...}}`.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dependence::dependence_report;
use crate::error::Error;
use crate::exchangeable::{
    a_from_b, a_from_p, b_from_a, beta_from_ptilde, p_from_b, ptilde_from_beta, ExchangeableSeq, ExchangeableSurvival,
    SeqRole,
};
use crate::extendibility::{classify_family_with_tol, extend_one_narrow, extend_one_wide, laplace_moments, InfDivLaw};
use crate::samplers::SamplerRegistry;
use crate::sequences::{check_lm_with_tol, classify_sequence_with_tol};
use crate::shock_models::{narrow_from_wide_2d, pmf, wide_from_narrow, FillPolicy, GeneralLaw, ParamDocument, SurvivalFunction};
use crate::tol;
use crate::verify::{run_suite, Suite};

pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "geomlaw", version, about = "Multivariate geometric laws with the lack-of-memory property")]
pub struct Cli {
    /// Override every numeric membership and eigenvalue tolerance.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Treat missing narrow shock parameters as 1 (shock absent).
    #[arg(long, global = true)]
    pub fill_narrow_ones: bool,
    /// Treat missing wide outcome probabilities as 0.
    #[arg(long, global = true)]
    pub fill_wide_zeros: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Input JSON file, `-` for stdin.
    #[arg(long = "json", value_name = "FILE")]
    pub json: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Class memberships (M, LM, SM, Hankel) of a real sequence.
    #[command(after_help = "Example:\n  geomlaw classify-seq --values 1,0.5,0.2\n  -> in_m: true, hankel_extendible: false")]
    ClassifySeq {
        /// Comma-separated entries.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "json", required_unless_present = "json")]
        values: Option<Vec<f64>>,
        /// JSON array or sequence document.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Family of an exchangeable law given by a b or beta sequence.
    #[command(after_help = "Example:\n  echo '{\"role\":\"beta\",\"values\":[1,0.5,0.2]}' > beta.json\n  geomlaw classify --json beta.json\n  -> {\"family\": \"G^{W,X}\", \"hankel_extendible\": false, ...}")]
    Classify(InputArgs),
    /// Joint survival probability P(tau > n).
    #[command(after_help = "Example:\n  echo '{\"family\":\"narrow\",\"d\":2,\"params\":{\"1\":0.5,\"2\":0.6,\"3\":0.9}}' > narrow.json\n  geomlaw survival --params narrow.json --at 1,2\n  -> survival 0.1458 (= 0.5 * 0.6^2 * 0.9^2)")]
    Survival(PointArgs),
    /// Probability mass P(tau = n), entries at least 1.
    #[command(after_help = "Example:\n  geomlaw pmf --params narrow.json --at 1,1\n  -> value = P(tau_1 = 1, tau_2 = 1)")]
    Pmf(PointArgs),
    /// Draw samples; CSV with header tau1..taud plus a <out>.meta.json sidecar.
    #[command(after_help = "Example:\n  echo '{\"law\":{\"kind\":\"gamma\",\"shape\":2,\"rate\":3},\"d\":3}' > gamma.json\n  geomlaw sample --model definetti --params gamma.json --n 1000000 --seed 42 --workers 4 --out samples.csv")]
    Sample(SampleArgs),
    /// Correlation matrix and MRTI verdict of a general law.
    #[command(after_help = "Example:\n  geomlaw dependence --params narrow.json\n  -> corr, mrti, family_notes")]
    Dependence {
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
    },
    /// Exponential moments (1, E[e^-X], ..., E[e^-dX]) of a law on [0, inf].
    #[command(after_help = "Example:\n  geomlaw moments --law gamma --shape 2 --rate 3 --d 3\n  -> {\"role\": \"b\", \"values\": [1, 0.5625, 0.36, 0.25]}")]
    Moments(MomentArgs),
    /// Interval of admissible new parameters when adding one dimension.
    #[command(after_help = "Example:\n  echo '{\"role\":\"ptilde\",\"values\":[0.2,0.3]}' > row.json\n  geomlaw extend --json row.json\n  -> lower 0, upper 0.1")]
    Extend(InputArgs),
    /// Run the oracle harnesses; exit code 0 iff every check passes.
    #[command(after_help = "Example:\n  geomlaw verify --suite quick")]
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        suite: Suite,
        #[arg(long, env = "GEOMLAW_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Convert between parameterizations.
    #[command(after_help = "Example:\n  echo '{\"role\":\"p\",\"values\":[0.5,0.8]}' > p.json\n  geomlaw convert --from p --to beta --json p.json\n  -> {\"role\": \"beta\", \"values\": [1, 0.4, 0.2]}")]
    Convert {
        #[arg(long, value_enum)]
        from: Form,
        #[arg(long, value_enum)]
        to: Form,
        #[arg(long = "json", value_name = "FILE")]
        json: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct PointArgs {
    /// General law document, or a b / beta sequence document.
    #[arg(long, value_name = "FILE")]
    pub params: PathBuf,
    /// Comma-separated argument, e.g. 1,2,0.
    #[arg(long, value_delimiter = ',', required = true)]
    pub at: Vec<u64>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_name = "FILE")]
    pub params: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, env = "GEOMLAW_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// CSV destination; stdout when absent (no sidecar).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    Degenerate,
    Gamma,
    CompoundPoissonExp,
    GeometricKilled,
    KilledDegenerate,
    Bernoulli,
}

#[derive(Args, Debug)]
pub struct MomentArgs {
    #[arg(long, value_enum, required_unless_present = "json")]
    pub law: Option<LawKind>,
    /// Law document, e.g. {"kind": "gamma", "shape": 2, "rate": 3}.
    #[arg(long, value_name = "FILE", conflicts_with = "law")]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub shape: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub jump_rate: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    /// Location; omit for the point mass at infinity.
    #[arg(long)]
    pub at: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Form {
    P,
    A,
    B,
    Ptilde,
    Beta,
    Narrow,
    Wide,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(Error::Json(e))
    }
}

type CliResult = std::result::Result<String, Failure>;

fn read_input(path: &Path) -> Result<String, Error> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&read_input(path)?)?)
}

fn pretty<T: Serialize>(v: &T) -> CliResult {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn fill_policy(cli: &Cli) -> FillPolicy {
    if cli.fill_narrow_ones {
        FillPolicy::NarrowOnes
    } else if cli.fill_wide_zeros {
        FillPolicy::WideZeros
    } else {
        FillPolicy::Strict
    }
}

// A general law document, or a leading-1 exchangeable sequence.
fn load_survival(path: &Path, fill: FillPolicy) -> Result<Box<dyn SurvivalFunction>, Error> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("family").is_some() {
        let doc: ParamDocument = serde_json::from_value(value)?;
        return Ok(Box::new(doc.validate(fill)?));
    }
    let seq: ExchangeableSeq = serde_json::from_value(value)?;
    Ok(Box::new(ExchangeableSurvival::from_seq(&seq)?))
}

fn load_law(path: &Path, fill: FillPolicy) -> Result<GeneralLaw, Error> {
    let doc: ParamDocument = read_json(path)?;
    doc.validate(fill)
}

fn membership_tols(cli: &Cli) -> (f64, f64) {
    match cli.tolerance {
        Some(t) => (t, t),
        None => (tol::MEMBERSHIP, tol::EIGEN),
    }
}

fn law_from_flags(args: &MomentArgs) -> std::result::Result<InfDivLaw, Failure> {
    if let Some(path) = &args.json {
        return Ok(read_json(path)?);
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::Usage(format!("--{name} is required for this law")));
    Ok(match args.law.expect("clap enforces --law or --json") {
        LawKind::Degenerate => InfDivLaw::Degenerate { at: args.at },
        LawKind::Gamma => InfDivLaw::Gamma { shape: need(args.shape, "shape")?, rate: need(args.rate, "rate")? },
        LawKind::CompoundPoissonExp => InfDivLaw::CompoundPoissonExp {
            intensity: need(args.intensity, "intensity")?,
            jump_rate: need(args.jump_rate, "jump-rate")?,
        },
        LawKind::GeometricKilled => InfDivLaw::GeometricKilled { p: need(args.p, "p")?, mass: args.mass.unwrap_or(1.0) },
        LawKind::KilledDegenerate => InfDivLaw::KilledDegenerate { at: need(args.at, "at")?, mass: need(args.mass, "mass")? },
        LawKind::Bernoulli => InfDivLaw::Bernoulli { q: need(args.q, "q")?, level: need(args.level, "level")? },
    })
}

fn role_of(form: Form) -> Option<SeqRole> {
    match form {
        Form::P => Some(SeqRole::P),
        Form::A => Some(SeqRole::A),
        Form::B => Some(SeqRole::B),
        Form::Ptilde => Some(SeqRole::Ptilde),
        Form::Beta => Some(SeqRole::Beta),
        Form::Narrow | Form::Wide => None,
    }
}

fn refuse(reason: String) -> Failure {
    Failure::Lib(Error::NotRepresentable { reason })
}

fn convert_sequence(seq: ExchangeableSeq, to: SeqRole, tolerance: f64) -> std::result::Result<ExchangeableSeq, Failure> {
    let d = seq.dim();
    // Bring everything to b (narrow) or beta (wide) first.
    let hub = match seq.role() {
        SeqRole::P => b_from_a(&a_from_p(&seq)?)?,
        SeqRole::A => b_from_a(&seq)?,
        SeqRole::B | SeqRole::Beta => seq,
        SeqRole::Ptilde => beta_from_ptilde(&seq)?,
    };
    let as_b = |hub: &ExchangeableSeq| -> std::result::Result<ExchangeableSeq, Failure> {
        if hub.role() == SeqRole::B {
            return Ok(hub.clone());
        }
        let positive = hub.values().iter().all(|&v| v > 0.0);
        if !positive || !check_lm_with_tol(hub.values(), tolerance)?.member {
            return Err(refuse("beta is not d-log-monotone, so the wide law has no narrow representation".into()));
        }
        Ok(ExchangeableSeq::new(SeqRole::B, d, hub.values().to_vec())?)
    };
    Ok(match to {
        SeqRole::Beta => ExchangeableSeq::new(SeqRole::Beta, d, hub.values().to_vec())?,
        SeqRole::B => as_b(&hub)?,
        SeqRole::A => a_from_b(&as_b(&hub)?)?,
        SeqRole::P => {
            let inv = p_from_b(&as_b(&hub)?)?;
            if !inv.admissible {
                return Err(refuse(format!("p leaves (0, 1] at positions {:?}: not narrow-sense", inv.offending)));
            }
            inv.seq
        }
        SeqRole::Ptilde => {
            let beta = ExchangeableSeq::new(SeqRole::Beta, d, hub.values().to_vec())?;
            let inv = ptilde_from_beta(&beta)?;
            if !inv.admissible {
                return Err(refuse(format!("ptilde leaves [0, 1] at positions {:?}: not a wide-sense law", inv.offending)));
            }
            inv.seq
        }
    })
}

fn convert(cli: &Cli, from: Form, to: Form, path: &Path) -> CliResult {
    match (role_of(from), role_of(to)) {
        (Some(_), Some(to_role)) => {
            let seq: ExchangeableSeq = read_json(path)?;
            if Some(seq.role()) != role_of(from) {
                return Err(Failure::Usage(format!("document role is {:?}, --from says {from:?}", seq.role())));
            }
            pretty(&convert_sequence(seq, to_role, membership_tols(cli).0)?)
        }
        (None, None) => {
            let law = load_law(path, fill_policy(cli))?;
            let out = match (law, to) {
                (GeneralLaw::Narrow(p), Form::Wide) => GeneralLaw::Wide(wide_from_narrow(&p)),
                (GeneralLaw::Wide(w), Form::Narrow) => {
                    if w.dim() >= 3 {
                        return Err(refuse(
                            "wide to narrow is only supported for d = 2; for d >= 3 a wide-sense law need not be narrow-sense"
                                .into(),
                        ));
                    }
                    GeneralLaw::Narrow(narrow_from_wide_2d(&w)?)
                }
                (law, _) if law.family() == crate::shock_models::Family::Narrow && from == Form::Narrow => law,
                (law, _) if law.family() == crate::shock_models::Family::Wide && from == Form::Wide => law,
                _ => return Err(Failure::Usage("--from does not match the document family".into())),
            };
            pretty(&out.to_document())
        }
        _ => Err(Failure::Usage("cannot convert between a sequence and a general law".into())),
    }
}

#[derive(Serialize)]
struct PointValue<'a> {
    at: &'a [u64],
    survival: f64,
}

#[derive(Serialize)]
struct MomentsOutput {
    #[serde(flatten)]
    seq: ExchangeableSeq,
    law: InfDivLaw,
    infinitely_divisible: bool,
}

#[derive(Serialize)]
struct PmfOutput<'a> {
    at: &'a [u64],
    #[serde(flatten)]
    value: crate::shock_models::PmfValue,
}

fn dispatch(cli: &Cli) -> CliResult {
    let fill = fill_policy(cli);
    let (mtol, etol) = membership_tols(cli);
    match &cli.command {
        Command::ClassifySeq { values, json } => {
            let x: Vec<f64> = match (values, json) {
                (Some(v), _) => v.clone(),
                (None, Some(path)) => {
                    let value: serde_json::Value = read_json(path)?;
                    if value.is_array() {
                        serde_json::from_value(value)?
                    } else {
                        serde_json::from_value::<ExchangeableSeq>(value)?.values().to_vec()
                    }
                }
                (None, None) => return Err(Failure::Usage("give --values or --json".into())),
            };
            pretty(&classify_sequence_with_tol(&x, mtol, etol)?)
        }
        Command::Classify(input) => {
            let seq: ExchangeableSeq = read_json(&input.json)?;
            pretty(&classify_family_with_tol(&seq, mtol, etol)?)
        }
        Command::Survival(args) => {
            let sf = load_survival(&args.params, fill)?;
            check_arity(sf.dim(), &args.at)?;
            pretty(&PointValue { at: &args.at, survival: sf.survival(&args.at) })
        }
        Command::Pmf(args) => {
            let sf = load_survival(&args.params, fill)?;
            check_arity(sf.dim(), &args.at)?;
            pretty(&PmfOutput { at: &args.at, value: pmf(sf.as_ref(), &args.at)? })
        }
        Command::Sample(args) => {
            let doc: serde_json::Value = read_json(&args.params)?;
            let sampler = SamplerRegistry::default().build(&args.model, &doc, fill)?;
            let batch = crate::samplers::sample_batch(sampler.as_ref(), args.n, args.seed, args.workers)?;
            match &args.out {
                Some(path) => {
                    batch.write(path)?;
                    pretty(&batch.provenance)
                }
                None => Ok(batch.to_csv()),
            }
        }
        Command::Dependence { params } => pretty(&dependence_report(&load_law(params, fill)?)?),
        Command::Moments(args) => {
            let law = law_from_flags(args)?;
            let seq = laplace_moments(&law, args.d)?;
            pretty(&MomentsOutput { seq, infinitely_divisible: law.infinitely_divisible(), law })
        }
        Command::Extend(input) => {
            let row: ExchangeableSeq = read_json(&input.json)?;
            let iv = match row.role() {
                SeqRole::P => extend_one_narrow(&row)?,
                SeqRole::Ptilde => extend_one_wide(&row)?,
                other => return Err(Failure::Usage(format!("extend needs a p or ptilde row, got {other:?}"))),
            };
            pretty(&iv)
        }
        Command::Verify { suite, seed, workers } => {
            let report = run_suite(*suite, *seed, *workers);
            let text = serde_json::to_string_pretty(&report)? + "\n";
            if report.passed {
                Ok(text)
            } else {
                Err(Failure::Verify(text))
            }
        }
        Command::Convert { from, to, json } => convert(cli, *from, *to, json),
    }
}

fn check_arity(d: usize, at: &[u64]) -> std::result::Result<(), Failure> {
    if at.len() != d {
        return Err(Failure::Lib(Error::DimensionMismatch { expected: d, got: at.len() }));
    }
    Ok(())
}

fn error_json(code: &str, message: String) -> String {
    serde_json::to_string(&ErrorDoc { error: ErrorBody { code, message } }).expect("plain data") + "\n"
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = err.write_all(error_json("usage", e.to_string().trim_end().to_string()).as_bytes());
            return EXIT_USAGE;
        }
    };
    if cli.fill_narrow_ones && cli.fill_wide_zeros {
        let msg = "--fill-narrow-ones and --fill-wide-zeros are mutually exclusive".to_string();
        let _ = err.write_all(error_json("usage", msg).as_bytes());
        return EXIT_USAGE;
    }
    match dispatch(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(Failure::Usage(msg)) => {
            let _ = err.write_all(error_json("usage", msg).as_bytes());
            EXIT_USAGE
        }
        Err(Failure::Lib(e)) => {
            let _ = err.write_all(error_json(e.code(), e.to_string()).as_bytes());
            e.exit_code()
        }
        Err(Failure::Verify(report)) => {
            let _ = out.write_all(report.as_bytes());
            let _ = err.write_all(error_json("verification-failed", "at least one check failed".into()).as_bytes());
            EXIT_VERIFY_FAILED
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
