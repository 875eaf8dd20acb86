//! Command-line front end: spec parsing, subcommand dispatch, and CSV or
//! text output for external plotting, with bit-reproducible results.
//!
//! Exit codes: 0 success, 2 spec/parameter validation failure, 3 budget
//! exhaustion. Every output carries a provenance comment line with the
//! spec digest, tool version, and seed, and is written atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::MoranError;
use crate::estimators::{
    covering_number, empirical_assouad, greedy_packing, packing_exponent_test, EstimatorBudget,
    PackingRecord,
};
use crate::examples::{
    ArbitraryValuesParams, KSequence, ScalingFunction, UnboundedExampleParams,
};
use crate::geometry::{
    condition_report, geometric_schedule, limit_point, max_neighbourhood, neighbourhood_count,
    BncClause, BncStatus, ExtremeSide, MaxNbhdStrategy, OscStatus,
};
use crate::ifs_core::{validate_spec, ValidatedSpec, Word};
use crate::pressure::{assouad_symbolic, ThetaTable};
use crate::schema::{
    parse_spec_str, AmbientJson, GeneratorJson, KSequenceJson, ScalingJson, SpecFile, TailJson,
    UnboundedParamsJson,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "moran-dim", version, about = "Non-autonomous IFS dimension toolkit")]
struct Cli {
    /// Seed recorded in outputs (all sampling is deterministic).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct SpecArg {
    /// Path to the IFS spec JSON file.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Tabulate pressure zeros theta(n, m) as CSV.
    Theta {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = 5)]
        n_max: usize,
        #[arg(long, default_value_t = 5)]
        m_max: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the symbolic Assouad-dimension formula.
    Dima {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = 8)]
        m_max: usize,
        /// Override the n-range the sup is taken over.
        #[arg(long)]
        n_window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the separation/regularity condition checkers.
    Check {
        #[command(flatten)]
        spec: SpecArg,
        /// Scale schedule reaches down to 2^-k for this k.
        #[arg(long, default_value_t = 8)]
        schedule_max: usize,
        /// Also write a CSV of (r, beta, M_lower, M_upper).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bracket the neighbourhood count at one point and scale.
    Nbhd {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 0.0)]
        y: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 12)]
        refine: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covering-based psi/Psi estimates over geometric schedules.
    Estimate {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = 1e-3)]
        delta_min: f64,
        #[arg(long, default_value_t = 1e-2)]
        r_min: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy disc packings and the exponent statistic per depth.
    Pack {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        alpha: f64,
        /// Depth range "a:b".
        #[arg(long, default_value = "1:8")]
        depths: String,
        #[arg(long, default_value_t = 0.5)]
        x: f64,
        #[arg(long, default_value_t = 0.0)]
        y: f64,
        #[arg(long = "radius", default_value_t = 0.5)]
        big_r: f64,
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a generated counterexample spec file.
    Example {
        #[command(subcommand)]
        which: ExampleCmd,
    },
    /// Dump limit-set approximation points with error radii.
    Render {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ExampleCmd {
    /// Unbounded neighbourhood growth with small per-level dimension.
    Unbounded {
        #[arg(long)]
        eps: f64,
        /// Divergence profile: "log" or "power:<p>".
        #[arg(long, default_value = "log")]
        f: String,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Homogeneous spec with pressure zeros s and tangent dimension t.
    Arbitrary {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        /// "linear" for k_n = n, or a comma-separated table.
        #[arg(long, default_value = "linear")]
        k: String,
        #[arg(long, default_value_t = 24)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// 12-significant-digit scientific notation, locale-free.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp-write");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}

fn emit(out: Option<&Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(p) => write_atomic(p, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

struct LoadedSpec {
    spec: ValidatedSpec,
    hash: String,
}

fn load_spec(path: &Path) -> Result<LoadedSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let hash = digest16(text.as_bytes());
    let raw = parse_spec_str(&text)?;
    let spec = validate_spec(&raw)?;
    Ok(LoadedSpec { spec, hash })
}

fn digest16(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn provenance(hash: &str, seed: u64) -> String {
    format!("#spec-hash={hash} #version={VERSION} #seed={seed}\n")
}

#[derive(Debug)]
enum CliError {
    Moran(MoranError),
    Io(String),
}

impl From<MoranError> for CliError {
    fn from(e: MoranError) -> Self {
        CliError::Moran(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Moran(
                MoranError::BudgetExceeded { .. } | MoranError::LevelBudget { .. },
            ) => 3,
            CliError::Moran(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Moran(e) => e.to_string(),
            CliError::Io(m) => m.clone(),
        }
    }
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints its own help/version through this path
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.cmd {
        Cmd::Theta {
            spec,
            n_max,
            m_max,
            tol,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let table = ThetaTable::compute(&loaded.spec, 1..=n_max, 1..=m_max, tol)?;
            let mut s = provenance(&loaded.hash, seed);
            s.push_str("n,m,theta,residual\n");
            for (&(n, m), e) in &table.entries {
                let _ = writeln!(s, "{n},{m},{},{}", num(e.theta), num(e.residual));
            }
            emit(out.as_deref(), &s).map_err(io_err)
        }
        Cmd::Dima {
            spec,
            m_max,
            n_window,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let bnc = crate::geometry::bnc_verdict(&loaded.spec, &geometric_schedule(8), 400_000)?;
            let rep = assouad_symbolic(&loaded.spec, m_max, n_window, bnc.flag)?;
            let mut s = provenance(&loaded.hash, seed);
            let _ = writeln!(s, "#estimate={}", num(rep.estimate));
            let _ = writeln!(s, "#bnc={}", bnc_str(rep.bnc));
            let _ = writeln!(s, "#window_limited={}", rep.window_limited);
            s.push_str("m,sup_theta\n");
            for &(m, v) in &rep.s_by_m {
                let _ = writeln!(s, "{m},{}", num(v));
            }
            emit(out.as_deref(), &s).map_err(io_err)
        }
        Cmd::Check {
            spec,
            schedule_max,
            csv,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let schedule = geometric_schedule(schedule_max);
            let rep = condition_report(&loaded.spec, &schedule, 400_000)?;
            let mut s = provenance(&loaded.hash, seed);
            let _ = writeln!(s, "osc: {}", osc_str(rep.osc.status));
            if let Some(w) = &rep.osc.witness {
                let _ = writeln!(
                    s,
                    "osc-witness: level {} maps {} and {} overlap ({}, {})",
                    w.level,
                    w.first,
                    w.second,
                    num(w.overlap.0),
                    num(w.overlap.1)
                );
            }
            match rep.cone_constant {
                Some(c) => {
                    let _ = writeln!(s, "cone-constant: {}", num(c));
                }
                None => s.push_str("cone-constant: none\n"),
            }
            let _ = writeln!(s, "r-min: {}", num(rep.r_min));
            for &(r, b) in &rep.branching {
                let _ = writeln!(s, "branching r={}: {b}", num(r));
            }
            let _ = writeln!(s, "bnc: {}", bnc_str(rep.bnc.flag));
            for c in &rep.bnc.clauses {
                let _ = writeln!(s, "bnc-clause: {}", clause_str(*c));
            }
            if let Some(b) = rep.bnc.bound {
                let _ = writeln!(s, "bnc-bound: {}", num(b));
            }
            for n in &rep.bnc.notes {
                let _ = writeln!(s, "note: {n}");
            }
            emit(out.as_deref(), &s).map_err(io_err)?;
            if let Some(csv_path) = csv {
                let strategy = MaxNbhdStrategy::default();
                let mut c = provenance(&loaded.hash, seed);
                c.push_str("r,beta,m_lower,m_upper\n");
                for &(r, beta) in &rep.branching {
                    let m = max_neighbourhood(&loaded.spec, r, &strategy)?;
                    let _ = writeln!(c, "{},{beta},{},{}", num(r), m.m_lower, m.m_upper);
                }
                write_atomic(&csv_path, &c).map_err(io_err)?;
            }
            Ok(())
        }
        Cmd::Nbhd {
            spec,
            x,
            y,
            r,
            refine,
            cap,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let c = neighbourhood_count(&loaded.spec, &[x, y], r, refine, cap)?;
            let mut s = provenance(&loaded.hash, seed);
            s.push_str("x,y,r,refine,lower,upper\n");
            let _ = writeln!(
                s,
                "{},{},{},{refine},{},{}",
                num(x),
                num(y),
                num(r),
                c.lower,
                c.upper
            );
            emit(out.as_deref(), &s).map_err(io_err)
        }
        Cmd::Estimate {
            spec,
            delta_min,
            r_min,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let mut r_schedule = vec![1.0f64];
            while *r_schedule.last().unwrap() / 2.0 >= r_min {
                r_schedule.push(r_schedule.last().unwrap() / 2.0);
            }
            let mut delta_schedule = vec![0.5f64];
            while *delta_schedule.last().unwrap() / 2.0 >= delta_min {
                delta_schedule.push(delta_schedule.last().unwrap() / 2.0);
            }
            let est = empirical_assouad(
                &loaded.spec,
                &r_schedule,
                &delta_schedule,
                &EstimatorBudget::default(),
            )?;
            let mut s = provenance(&loaded.hash, seed);
            let _ = writeln!(s, "#assouad-lo={}", num(est.lo));
            let _ = writeln!(s, "#assouad-hi={}", num(est.hi));
            let _ = writeln!(s, "#caveat={}", est.caveat);
            s.push_str("r,delta,psi_lo,psi_hi,Psi_lo,Psi_hi\n");
            for p in &est.samples {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    num(p.r),
                    num(p.delta),
                    p.psi_lo,
                    p.psi_hi,
                    num(p.big_psi_lo),
                    num(p.big_psi_hi)
                );
            }
            emit(out.as_deref(), &s).map_err(io_err)
        }
        Cmd::Pack {
            spec,
            alpha,
            depths,
            x,
            y,
            big_r,
            margin,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let (d_lo, d_hi) = parse_range(&depths)?;
            let mut s = provenance(&loaded.hash, seed);
            s.push_str("alpha,depth,balls,max_ratio\n");
            for depth in d_lo..=d_hi {
                let pack: PackingRecord =
                    greedy_packing(&loaded.spec, &[x, y], big_r, depth, margin, 2_000_000)?;
                if !pack.verified {
                    return Err(CliError::Moran(MoranError::InvalidParameter(format!(
                        "packing at depth {depth} failed the disjointness check"
                    ))));
                }
                let ratio = packing_exponent_test(alpha, std::slice::from_ref(&pack));
                let _ = writeln!(
                    s,
                    "{},{depth},{},{}",
                    num(alpha),
                    pack.balls.len(),
                    num(ratio)
                );
            }
            emit(out.as_deref(), &s).map_err(io_err)
        }
        Cmd::Example { which } => run_example(which, seed),
        Cmd::Render {
            spec,
            depth,
            cap,
            out,
        } => {
            let loaded = load_spec(&spec.spec)?;
            let v = &loaded.spec;
            let diam = v.ambient.diameter(v.dimension);
            let mut words = vec![Word::root()];
            for _ in 0..depth {
                let mut next = Vec::new();
                for w in &words {
                    let level = v.level(w.depth() + 1)?;
                    for j in 0..level.len() {
                        next.push(v.child_word(w, j)?);
                        if next.len() > cap {
                            return Err(CliError::Moran(MoranError::BudgetExceeded {
                                used: next.len(),
                                cap,
                            }));
                        }
                    }
                }
                words = next;
            }
            let mut s = provenance(&loaded.hash, seed);
            if v.dimension == 1 {
                s.push_str("x,error\n");
            } else {
                s.push_str("x,y,error\n");
            }
            for w in &words {
                let p = limit_point(v, w, ExtremeSide::First, 1e-15)?;
                let err = w.rho() * diam;
                if v.dimension == 1 {
                    let _ = writeln!(s, "{},{}", num(p.point[0]), num(err));
                } else {
                    let _ = writeln!(s, "{},{},{}", num(p.point[0]), num(p.point[1]), num(err));
                }
            }
            emit(out.as_deref(), &s).map_err(io_err)
        }
    }
}

fn run_example(which: ExampleCmd, _seed: u64) -> Result<(), CliError> {
    match which {
        ExampleCmd::Unbounded {
            eps,
            f,
            depth,
            budget,
            out,
        } => {
            let scaling = parse_scaling(&f)?;
            let params = UnboundedExampleParams {
                eps,
                f: scaling.clone(),
                depth,
                level_budget: budget,
            };
            // validate now so bad parameters fail before anything is written
            let raw = crate::examples::unbounded_example_spec(params);
            let v = validate_spec(&raw)?;
            let meta = match v.generator_meta() {
                Some(crate::ifs_core::GeneratorMeta::Unbounded(m)) => m.clone(),
                _ => unreachable!(),
            };
            let file = SpecFile {
                dimension: 1,
                ambient: AmbientJson::Box {
                    lo: vec![0.0],
                    hi: vec![1.0],
                },
                prefix: vec![],
                tail: TailJson::Generator(GeneratorJson {
                    name: "unbounded".into(),
                    params: serde_json::to_value(UnboundedParamsJson {
                        eps,
                        f: match scaling {
                            ScalingFunction::Log => ScalingJson::Log,
                            ScalingFunction::Power(p) => ScalingJson::Power(p),
                        },
                        depth: Some(depth),
                        level_budget: Some(budget),
                    })
                    .unwrap(),
                }),
                provenance: Some(serde_json::json!({
                    "generator": "unbounded",
                    "blocks_completed": meta.blocks_completed,
                    "levels": v.materialized_len(),
                    "truncated": meta.truncated,
                    "max_level_dimension": meta.max_level_dimension,
                })),
            };
            let text = serde_json::to_string_pretty(&file)
                .map_err(|e| CliError::Io(e.to_string()))?
                + "\n";
            write_atomic(&out, &text).map_err(io_err)
        }
        ExampleCmd::Arbitrary {
            s,
            t,
            k,
            budget,
            out,
        } => {
            let kseq = parse_kseq(&k)?;
            let params = ArbitraryValuesParams {
                s,
                t,
                k: kseq.clone(),
                level_budget: budget,
            };
            let raw = crate::examples::arbitrary_values_spec(params);
            let v = validate_spec(&raw)?;
            let meta = match v.generator_meta() {
                Some(crate::ifs_core::GeneratorMeta::Arbitrary(m)) => m.clone(),
                _ => unreachable!(),
            };
            let file = SpecFile {
                dimension: 1,
                ambient: AmbientJson::Box {
                    lo: vec![0.0],
                    hi: vec![1.0],
                },
                prefix: vec![],
                tail: TailJson::Generator(GeneratorJson {
                    name: "arbitrary_values".into(),
                    params: serde_json::to_value(crate::schema::ArbitraryParamsJson {
                        s,
                        t,
                        k: match kseq {
                            KSequence::Linear => KSequenceJson::Linear,
                            KSequence::Table(v) => KSequenceJson::Table(v),
                        },
                        level_budget: Some(budget),
                    })
                    .unwrap(),
                }),
                provenance: Some(serde_json::json!({
                    "generator": "arbitrary_values",
                    "r1": meta.r1,
                    "r2": meta.r2,
                    "blocks": meta.blocks.len(),
                    "levels": v.materialized_len(),
                })),
            };
            let text = serde_json::to_string_pretty(&file)
                .map_err(|e| CliError::Io(e.to_string()))?
                + "\n";
            write_atomic(&out, &text).map_err(io_err)
        }
    }
}

fn parse_scaling(s: &str) -> Result<ScalingFunction, CliError> {
    if s == "log" {
        return Ok(ScalingFunction::Log);
    }
    if let Some(p) = s.strip_prefix("power:") {
        let p: f64 = p
            .parse()
            .map_err(|_| CliError::Moran(MoranError::InvalidParameter(format!(
                "bad power exponent in '{s}'"
            ))))?;
        return Ok(ScalingFunction::Power(p));
    }
    Err(CliError::Moran(MoranError::InvalidParameter(format!(
        "scaling function must be 'log' or 'power:<p>', got '{s}'"
    ))))
}

fn parse_kseq(s: &str) -> Result<KSequence, CliError> {
    if s == "linear" {
        return Ok(KSequence::Linear);
    }
    let table: Result<Vec<u64>, _> = s.split(',').map(|x| x.trim().parse()).collect();
    match table {
        Ok(t) if !t.is_empty() => Ok(KSequence::Table(t)),
        _ => Err(CliError::Moran(MoranError::InvalidParameter(format!(
            "k sequence must be 'linear' or a comma list, got '{s}'"
        )))),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::Moran(MoranError::InvalidParameter(format!(
            "depth range must be 'a:b', got '{s}'"
        )))
    };
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok((a, b))
}

fn osc_str(s: OscStatus) -> &'static str {
    match s {
        OscStatus::Pass => "pass",
        OscStatus::Fail => "fail",
        OscStatus::Unknown => "unknown",
    }
}

fn bnc_str(s: BncStatus) -> &'static str {
    match s {
        BncStatus::Verified => "verified",
        BncStatus::Falsified => "falsified",
        BncStatus::Unknown => "unknown",
    }
}

fn clause_str(c: BncClause) -> &'static str {
    match c {
        BncClause::ConeBranching => "cone+branching",
        BncClause::HomogeneousBranching => "homogeneous+branching",
        BncClause::RatioLowerBound => "ratio-lower-bound",
    }
}

/// Certified covering bracket for one (x, R, r); exposed for tests of the
/// CSV layer.
pub fn covering_line(spec: &ValidatedSpec, x: f64, big_r: f64, r: f64) -> crate::error::Result<(usize, usize)> {
    let c = covering_number(spec, &[x, 0.0], big_r, r, 1_000_000)?;
    Ok((c.lower.count, c.upper.count))
}
