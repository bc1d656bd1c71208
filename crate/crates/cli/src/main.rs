//! `pawmark`: watermark autoregressive token streams with probabilistic
//! automata.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags or parameter
//! values), 3 on data errors (unreadable or malformed files). Failures
//! print a one-line machine-readable JSON object to stderr:
//! `{"kind":"usage"|"data","error":"..."}`.

mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pawmark::attacks::{corrupt, AttackKind, AttackSpec};
use pawmark::automata::suffix_automaton_cyclic;
use pawmark::bench::{scaling_report, ScalingConfig};
use pawmark::decode::{generate_watermarked, GenerationTrace};
use pawmark::detect::{detect, CostParams};
use pawmark::lm::{generate_plain, train_markov_bytes, ModelSpec, DEFAULT_ALPHA};
use pawmark::lpn::{default_theta, entropy_threshold, lpn_detect, lpn_gen, lpn_generate};
use pawmark::seed::{rng_for_index, rng_from_seed};
use pawmark::wkey::{gen_key, Bitwidth, KeyAutomaton};

#[derive(Parser)]
#[command(
    name = "pawmark",
    version,
    about = "Watermark autoregressive token streams with probabilistic automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a watermark key automaton and write it as JSON.
    GenKey {
        /// Number of key states.
        #[arg(long)]
        lambda: usize,
        /// Out-degree of every state.
        #[arg(long, default_value_t = 1)]
        degree: usize,
        /// Vocabulary size the key scores.
        #[arg(long)]
        vocab: usize,
        /// Fixed noise bits per value: a count, or "float" for full
        /// machine precision.
        #[arg(long, default_value = "float", value_parser = parse_bitwidth)]
        bitwidth: Bitwidth,
        /// Total grid precision in bits; defaults to the bitwidth (no free
        /// bits), or 53 in float mode.
        #[arg(long)]
        precision: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a byte-level Markov model to a UTF-8 corpus.
    TrainModel {
        /// Context length in bytes.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Additive smoothing mass per byte value.
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Corpus file.
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample tokens from a model: a watermarked trace by default, or a
    /// plain token array with --plain.
    Generate {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// JSON array of prompt tokens to condition on.
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        /// Number of tokens to sample.
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample from the model alone, without the watermark.
        #[arg(long)]
        plain: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score a token sequence against a key; prints a detection report.
    Detect {
        #[arg(long)]
        key: PathBuf,
        /// Token file: a JSON array of tokens or a generation trace.
        #[arg(long)]
        input: PathBuf,
        /// Null keys sampled for the empirical p-value.
        #[arg(long, default_value_t = 199)]
        null_samples: usize,
        /// Token deletion cost.
        #[arg(long, default_value_t = 0.0)]
        gamma_d: f64,
        /// Key-state insertion cost.
        #[arg(long, default_value_t = 2.0)]
        gamma_i: f64,
        /// Flag the input when the p-value is at or below this.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Seed for the null-key draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Corrupt a token sequence with random edits.
    Attack {
        /// One of: substitute, delete, insert.
        #[arg(long, value_parser = parse_attack_kind)]
        kind: AttackKind,
        /// Fraction of tokens to corrupt.
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        input: PathBuf,
        /// Vocabulary size substitutions and insertions draw from.
        #[arg(long)]
        vocab: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a detection-quality grid and write a CSV of p-value quantiles
    /// and ROC summaries.
    Sweep {
        /// Sweep configuration JSON; see `sweep --explain-config`.
        #[arg(long, required_unless_present = "explain_config")]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print a commented example configuration and exit.
        #[arg(long)]
        explain_config: bool,
    },
    /// Time the detector and the block-alignment baseline over size
    /// grids; writes CSV with fitted log-log slopes in the header.
    Bench {
        /// Sequence lengths for the detector sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![512, 1024, 2048, 4096])]
        ms: Vec<usize>,
        /// Key length used while sweeping sequence length.
        #[arg(long, default_value_t = 512)]
        lambda_for_m: usize,
        /// Key lengths for the detector sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![512, 1024, 2048])]
        lambdas: Vec<usize>,
        /// Sequence length used while sweeping key length.
        #[arg(long, default_value_t = 1024)]
        m_for_lambda: usize,
        /// Block sizes for the baseline sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32])]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 256)]
        baseline_m: usize,
        #[arg(long, default_value_t = 256)]
        baseline_lambda: usize,
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, default_value_t = 64)]
        vocab: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Timing samples per point; the median is reported.
        #[arg(long, default_value_t = 5)]
        samples: usize,
        /// Minimum nanoseconds per timing sample (repetitions are
        /// calibrated up to this).
        #[arg(long, default_value_t = 10_000_000)]
        min_sample_ns: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Demonstrate the binary parity channel end to end: embed, detect,
    /// and compare against unwatermarked bits.
    LpnDemo {
        /// Parity dimension.
        #[arg(long, default_value_t = 8)]
        lambda: usize,
        /// Parity noise level, in (0, 1/2).
        #[arg(long, default_value_t = 0.25)]
        q: f64,
        /// Embedded positions to generate; the bit stream is
        /// positions * (lambda + 1) long.
        #[arg(long, default_value_t = 400)]
        positions: usize,
        /// Match-rate margin over 1/2; defaults to 1/(2*lambda).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the cyclic suffix automaton of a string and run membership
    /// checks against it.
    SamDemo {
        /// The string whose repetitions define the language (bytes are
        /// the symbols).
        #[arg(long)]
        string: String,
        /// Extra strings to test for membership; repeatable.
        #[arg(long)]
        check: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<pawmark::Error> for CliError {
    fn from(e: pawmark::Error) -> Self {
        match e {
            pawmark::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn parse_bitwidth(s: &str) -> Result<Bitwidth, String> {
    if s == "float" {
        Ok(Bitwidth::Float)
    } else {
        s.parse::<u32>()
            .map(Bitwidth::Bits)
            .map_err(|_| format!("expected a bit count or \"float\", got {s:?}"))
    }
}

fn parse_attack_kind(s: &str) -> Result<AttackKind, String> {
    match s {
        "substitute" => Ok(AttackKind::Substitute),
        "delete" => Ok(AttackKind::Delete),
        "insert" => Ok(AttackKind::Insert),
        _ => Err(format!(
            "expected one of substitute, delete, insert; got {s:?}"
        )),
    }
}

fn resolve_precision(bitwidth: Bitwidth, precision: Option<u32>) -> u32 {
    precision.unwrap_or(match bitwidth {
        Bitwidth::Bits(b) => b,
        Bitwidth::Float => 53,
    })
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Token files are either a bare JSON array of tokens or a full
/// generation trace.
#[derive(Deserialize)]
#[serde(untagged)]
enum TokenInput {
    Tokens(Vec<u32>),
    Trace(GenerationTrace),
}

fn load_tokens(path: &Path) -> Result<Vec<u32>, CliError> {
    Ok(match load_json::<TokenInput>(path)? {
        TokenInput::Tokens(t) => t,
        TokenInput::Trace(tr) => tr.tokens,
    })
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    emit_text(&text, output)
}

fn emit_text(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, message, code) = match &e {
                CliError::Usage(m) => ("usage", m, 2),
                CliError::Data(m) => ("data", m, 3),
            };
            eprintln!(
                "{}",
                serde_json::json!({ "kind": kind, "error": message })
            );
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenKey {
            lambda,
            degree,
            vocab,
            bitwidth,
            precision,
            seed,
            output,
        } => {
            let precision = resolve_precision(bitwidth, precision);
            let key = gen_key(lambda, degree, vocab, bitwidth, precision, seed)?;
            emit_json(&key, output.as_deref())
        }
        Command::TrainModel {
            order,
            alpha,
            input,
            output,
        } => {
            let text = fs::read(&input)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            let model = train_markov_bytes(&text, order, alpha)?;
            emit_json(&model, output.as_deref())
        }
        Command::Generate {
            key,
            model,
            prompt_file,
            length,
            seed,
            plain,
            output,
        } => {
            let model: ModelSpec = load_json(&model)?;
            model.validate().map_err(|e| CliError::Data(e.to_string()))?;
            let prompt: Vec<u32> = match prompt_file {
                Some(p) => load_tokens(&p)?,
                None => Vec::new(),
            };
            if plain {
                let tokens = generate_plain(&model, &prompt, length, seed);
                emit_json(&tokens, output.as_deref())
            } else {
                let key: KeyAutomaton = load_json(&key)?;
                let mut rng = rng_from_seed(seed);
                let trace = generate_watermarked(&model, &key, &prompt, length, &mut rng)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                emit_json(&trace, output.as_deref())
            }
        }
        Command::Detect {
            key,
            input,
            null_samples,
            gamma_d,
            gamma_i,
            threshold,
            seed,
        } => {
            let key: KeyAutomaton = load_json(&key)?;
            let tokens = load_tokens(&input)?;
            let costs = CostParams::new(gamma_d, gamma_i)?;
            let report = detect(&tokens, &key, &costs, threshold, null_samples, seed)?;
            emit_json(&report, None)
        }
        Command::Attack {
            kind,
            epsilon,
            seed,
            input,
            vocab,
            output,
        } => {
            let tokens = load_tokens(&input)?;
            let spec = AttackSpec::new(kind, epsilon, seed)?;
            let corrupted = corrupt(&tokens, &spec, vocab)?;
            emit_json(&corrupted, output.as_deref())
        }
        Command::Sweep {
            config,
            output,
            explain_config,
        } => {
            if explain_config {
                emit_text(sweep::EXAMPLE_CONFIG, output.as_deref())
            } else {
                let cfg: sweep::SweepConfig = load_json(&config.expect("required by clap"))?;
                let csv = sweep::run(&cfg)?;
                emit_text(&csv, output.as_deref())
            }
        }
        Command::Bench {
            ms,
            lambda_for_m,
            lambdas,
            m_for_lambda,
            ks,
            baseline_m,
            baseline_lambda,
            degree,
            vocab,
            seed,
            samples,
            min_sample_ns,
            output,
        } => {
            let cfg = ScalingConfig {
                ms,
                lambda_for_m,
                lambdas,
                m_for_lambda,
                ks,
                baseline_m,
                baseline_lambda,
                degree,
                vocab_size: vocab,
                seed,
                samples,
                min_sample_ns,
            };
            let report = scaling_report(&cfg)?;
            let mut csv = String::new();
            csv.push_str(&format!(
                "# pawmark bench seed={} samples={} min_sample_ns={} degree={} vocab={}\n",
                cfg.seed, cfg.samples, cfg.min_sample_ns, cfg.degree, cfg.vocab_size
            ));
            csv.push_str(&format!(
                "# lev_dp_slope_m={:.4} lev_dp_slope_lambda={:.4} baseline_slope_k={:.4}\n",
                report.lev_dp_slope_m, report.lev_dp_slope_lambda, report.baseline_slope_k
            ));
            csv.push_str("detector,m,lambda,d,k,median_ns");
            for i in 0..cfg.samples {
                csv.push_str(&format!(",sample_ns_{i}"));
            }
            csv.push('\n');
            for p in &report.points {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}",
                    p.detector, p.m, p.lambda, p.d, p.k, p.median_ns
                ));
                for s in &p.samples {
                    csv.push_str(&format!(",{s}"));
                }
                csv.push('\n');
            }
            emit_text(&csv, output.as_deref())
        }
        Command::LpnDemo {
            lambda,
            q,
            positions,
            theta,
            seed,
            output,
        } => {
            let theta = theta.unwrap_or_else(|| default_theta(lambda));
            let key = lpn_gen(lambda, q, seed)?;
            let m = positions * (lambda + 1);
            let model = ModelSpec::Uniform { vocab_size: 2 };
            let mut rng = rng_for_index(seed, 1);
            let marked = lpn_generate(&model, &key, m, &mut rng)?;
            let unmarked = generate_plain(&model, &[], m, seed.wrapping_add(0x5EED));
            let out = serde_json::json!({
                "lambda": lambda,
                "q": q,
                "theta": theta,
                "positions": positions,
                "length": m,
                "entropy_threshold": entropy_threshold(q)?,
                "watermarked": lpn_detect(&marked, &key, theta)?,
                "unwatermarked": lpn_detect(&unmarked, &key, theta)?,
            });
            emit_json(&out, output.as_deref())
        }
        Command::SamDemo {
            string,
            check,
            output,
        } => {
            let symbols: Vec<u32> = string.bytes().map(u32::from).collect();
            if symbols.is_empty() {
                return Err(CliError::Usage("--string must be nonempty".into()));
            }
            let sam = suffix_automaton_cyclic(&symbols)?;
            // Every rotation is a substring of the repetition, so they all
            // must be accepted; a failure here would mean a broken build.
            let rotations_accepted = (0..symbols.len()).all(|r| {
                let rotated: Vec<u32> = symbols[r..]
                    .iter()
                    .chain(&symbols[..r])
                    .copied()
                    .collect();
                sam.accepts(&rotated)
            });
            let checks: Vec<serde_json::Value> = check
                .iter()
                .map(|query| {
                    let qsyms: Vec<u32> = query.bytes().map(u32::from).collect();
                    serde_json::json!({
                        "query": query,
                        "accepted": sam.accepts(&qsyms),
                    })
                })
                .collect();
            let out = serde_json::json!({
                "string": string,
                "state_count": sam.nodes.len(),
                "rotations_accepted": rotations_accepted,
                "checks": checks,
                "automaton": sam,
            });
            emit_json(&out, output.as_deref())
        }
    }
}
