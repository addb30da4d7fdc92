//! `mcsp`: solve, check and generate CSP instances over multisorted cores.
//!
//! Exit codes: 0 for SAT (or success), 1 for UNSAT (or a negative answer),
//! 2 for errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcsp_core::affine::prepare_binary;
use mcsp_core::algebra::coloured_graph;
use mcsp_core::compare::{compare, BatchSummary, Verdict};
use mcsp_core::format::{parse_algebra, parse_instance, parse_template, serialize_algebra, serialize_instance};
use mcsp_core::generate::{generate, Family, GeneratorConfig, Planted};
use mcsp_core::oracle::{brute_force_solve, Mode};
use mcsp_core::structures::{is_core, Assignment};
use mcsp_core::{binarize, run_12_consistency, solve, type_reduce, Algebras, Instance, Limits, Outcome, SolveOptions, Value};

#[derive(Parser)]
#[command(name = "mcsp", version, about = "CSP solver for multisorted cores with a Maltsev polymorphism")]
struct Cli {
    /// Search-node cap for the brute-force oracle
    #[arg(long, global = true, env = "MCSP_CAP")]
    cap: Option<u64>,
    /// Maximum term depth when looking for colour witnesses
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Skip the core check and treat the instance as a multisorted core
    #[arg(long, global = true)]
    assume_core: bool,
    /// Seed for `gen`
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InstanceArgs {
    instance: PathBuf,
    /// Template defining the relations named by `constraint` lines
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(Args)]
struct AlgebraArgs {
    /// Algebra shared by every variable
    #[arg(long, visible_alias = "algebras")]
    algebra: PathBuf,
    /// Per-variable algebra, `VAR=FILE` with VAR counted from 1
    #[arg(long = "override", value_name = "VAR=FILE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide an instance; prints `var value` lines when satisfiable
    Solve {
        #[command(flatten)]
        input: InstanceArgs,
        #[command(flatten)]
        algebras: AlgebraArgs,
        /// Print the refutation when unsatisfiable
        #[arg(long)]
        certificate: bool,
        /// Block index used as group zero
        #[arg(long, default_value_t = 0)]
        seed_zero: usize,
    },
    /// Brute-force search
    Oracle {
        #[command(flatten)]
        input: InstanceArgs,
        /// Print the number of solutions
        #[arg(long, conflicts_with = "all")]
        count: bool,
        /// Print every solution
        #[arg(long)]
        all: bool,
    },
    /// Run the solver and the oracle side by side
    Compare {
        /// Instance file (with --algebra), unless --batch is given
        #[arg(required_unless_present = "batch")]
        instance: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, visible_alias = "algebras", required_unless_present = "batch")]
        algebra: Option<PathBuf>,
        #[arg(long = "override", value_name = "VAR=FILE")]
        overrides: Vec<String>,
        /// Directory of `NAME.inst` files with `NAME.alg` algebras beside them
        #[arg(long, conflicts_with = "instance")]
        batch: Option<PathBuf>,
    },
    /// Rewrite an instance as a binary one
    Binarize {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run (1,2)-consistency on the binarized instance
    Propagate {
        #[command(flatten)]
        input: InstanceArgs,
        /// Print every removal with its reason
        #[arg(long)]
        trace: bool,
    },
    /// Run type reduction on the binarized instance
    Reduce {
        #[command(flatten)]
        input: InstanceArgs,
        #[command(flatten)]
        algebras: AlgebraArgs,
        /// Explain why VALUE left the domain of VAR
        #[arg(long, value_name = "VAR=VALUE")]
        explain: Option<String>,
    },
    /// Colour every pair of elements of an algebra
    Colour { algebra: PathBuf },
    /// Decide whether the binarized instance is a multisorted core
    CoreCheck {
        #[command(flatten)]
        input: InstanceArgs,
    },
    /// Write a random instance and its algebras
    Gen {
        #[arg(long, default_value = "affine-linear")]
        family: Family,
        #[arg(long, short = 'q', default_value_t = 2)]
        modulus: usize,
        #[arg(long, short = 'n', default_value_t = 6)]
        vars: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Writes PREFIX.inst, PREFIX.alg and PREFIX.varK.alg for overrides
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_instance(path: &Path, template: Option<&Path>) -> Result<Instance> {
    let template = template
        .map(|t| parse_template(&read(t)?).with_context(|| format!("in {}", t.display())))
        .transpose()?;
    parse_instance(&read(path)?, template.as_ref()).with_context(|| format!("in {}", path.display()))
}

fn load_algebra(path: &Path) -> Result<mcsp_core::FiniteAlgebra> {
    parse_algebra(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_algebras(default: &Path, overrides: &[String]) -> Result<Algebras> {
    let mut algebras = Algebras::uniform(load_algebra(default)?);
    for spec in overrides {
        let Some((var, file)) = spec.split_once('=') else { bail!("override `{spec}` is not VAR=FILE") };
        let var: usize = var.parse().with_context(|| format!("override variable `{var}`"))?;
        if var == 0 {
            bail!("variables are counted from 1");
        }
        algebras.overrides.insert(var - 1, load_algebra(Path::new(file))?);
    }
    Ok(algebras)
}

fn limits(cli: &Cli) -> Limits {
    let mut l = Limits::default();
    if let Some(c) = cli.cap {
        l.oracle_cap = c;
    }
    if let Some(d) = cli.depth {
        l.term_depth = d;
    }
    l
}

fn print_assignment(a: &Assignment) {
    for (x, v) in a.iter() {
        println!("{} {v}", x + 1);
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let limits = limits(cli);
    match &cli.command {
        Command::Solve { input, algebras, certificate, seed_zero } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let algs = load_algebras(&algebras.algebra, &algebras.overrides)?;
            let opts = SolveOptions { assume_core: cli.assume_core, zero: *seed_zero, limits };
            match solve(&inst, &algs, &opts)? {
                Outcome::Sat(a) => {
                    println!("SAT");
                    print_assignment(&a);
                    Ok(0)
                }
                Outcome::Unsat(c) => {
                    println!("UNSAT");
                    if *certificate {
                        println!("{c}");
                    }
                    Ok(1)
                }
            }
        }
        Command::Oracle { input, count, all } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let mode = if *count {
                Mode::Count
            } else if *all {
                Mode::All
            } else {
                Mode::First
            };
            let r = brute_force_solve(&inst, mode, limits.oracle_cap)?;
            if *count {
                println!("{}", r.count);
            } else {
                println!("{}", if r.is_satisfiable() { "SAT" } else { "UNSAT" });
                for (i, s) in r.solutions.iter().enumerate() {
                    if *all {
                        let vals: Vec<String> = s.iter().map(|(_, v)| v.to_string()).collect();
                        println!("{}", vals.join(" "));
                    } else if i == 0 {
                        print_assignment(s);
                    }
                }
            }
            Ok(u8::from(!r.is_satisfiable()))
        }
        Command::Compare { instance, template, algebra, overrides, batch } => {
            let opts = SolveOptions { assume_core: cli.assume_core, zero: 0, limits };
            if let Some(dir) = batch {
                return compare_batch(dir, &opts);
            }
            let (Some(instance), Some(algebra)) = (instance, algebra) else { bail!("compare needs an instance and --algebra") };
            let inst = load_instance(instance, template.as_deref())?;
            let algs = load_algebras(algebra, overrides)?;
            let v = compare(&inst, &algs, &opts, limits.oracle_cap);
            println!("{v}");
            Ok(verdict_code(&v))
        }
        Command::Binarize { input, output } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let bin = binarize(&inst, limits.tuple_cap)?;
            let names: Vec<String> = bin
                .mapping
                .tuples
                .iter()
                .map(|t| {
                    let parts: Vec<String> = t.iter().map(|x| format!("x{}", x + 1)).collect();
                    format!("({})", parts.join(","))
                })
                .collect();
            let text = serialize_instance(&bin.graph.to_instance(), Some(&names));
            match output {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Propagate { input, trace } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let bin = binarize(&inst, limits.tuple_cap)?;
            let r = run_12_consistency(&bin.graph)?;
            if *trace {
                for e in &r.removal_log {
                    println!("remove {} from x{}: no support in x{}", e.value, e.var + 1, e.support + 1);
                }
            }
            if r.is_empty() {
                println!("EMPTY");
                return Ok(1);
            }
            println!("SAT-POSSIBLE");
            print_domains(r.reduced.domains());
            Ok(0)
        }
        Command::Reduce { input, algebras, explain } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let algs = load_algebras(&algebras.algebra, &algebras.overrides)?;
            let (bin, domain_algebras) = prepare_binary(&inst, &algs, &limits)?;
            let r = type_reduce(&bin.graph, &domain_algebras)?;
            for (i, p) in r.passes.iter().enumerate() {
                println!(
                    "pass {}: propagation {}, yellow {}, red {}, shrink {}",
                    i + 1,
                    p.propagation,
                    p.yellow,
                    p.red,
                    p.shrink
                );
            }
            if let Some(spec) = explain {
                let (var, value) = spec
                    .split_once('=')
                    .and_then(|(x, v)| Some((x.parse::<usize>().ok()?, v.parse::<Value>().ok()?)))
                    .filter(|&(x, _)| x > 0)
                    .with_context(|| format!("`{spec}` is not VAR=VALUE"))?;
                let events = r.explain(var - 1, value);
                if events.is_empty() {
                    println!("{value} was not removed from x{var}");
                }
                for e in events {
                    println!("remove {value} from x{var}: {}", e.reason);
                }
            }
            if r.unsat {
                println!("UNSAT");
                return Ok(1);
            }
            print_domains(r.graph.domains());
            Ok(0)
        }
        Command::Colour { algebra } => {
            let alg = load_algebra(algebra)?;
            let g = coloured_graph(&alg, limits.term_depth, limits.congruence_cap)?;
            for e in &g.edges {
                let witness = e.witness.as_ref().map_or_else(|| "-".to_string(), ToString::to_string);
                println!("{} {} {} {}{}", e.a, e.b, e.colour, witness, if e.thin { " thin" } else { "" });
            }
            println!("{}", if g.connected { "connected" } else { "not connected" });
            Ok(0)
        }
        Command::CoreCheck { input } => {
            let inst = load_instance(&input.instance, input.template.as_deref())?;
            let bin = binarize(&inst, limits.tuple_cap)?;
            let c = is_core(&bin.graph, limits.core_cap)?;
            if c.is_core {
                println!("core");
                return Ok(0);
            }
            println!("not a core");
            if let Some(w) = c.witness {
                for (x, (map, dom)) in w.iter().zip(bin.graph.domains()).enumerate() {
                    let pairs: Vec<String> = dom.iter().zip(map).map(|(a, b)| format!("{a}->{b}")).collect();
                    println!("x{}: {}", x + 1, pairs.join(" "));
                }
            }
            Ok(1)
        }
        Command::Gen { family, modulus, vars, density, output } => {
            let g = generate(&GeneratorConfig {
                family: *family,
                modulus: *modulus,
                num_variables: *vars,
                density: *density,
                seed: cli.seed,
            })?;
            let with_ext = |ext: &str| {
                let mut s = output.clone().into_os_string();
                s.push(ext);
                PathBuf::from(s)
            };
            fs::write(with_ext(".inst"), serialize_instance(&g.instance, None))?;
            fs::write(with_ext(".alg"), serialize_algebra(&g.algebras.default))?;
            for (x, a) in &g.algebras.overrides {
                fs::write(with_ext(&format!(".var{}.alg", x + 1)), serialize_algebra(a))?;
            }
            match g.planted {
                Some(Planted::Semilattice { var }) => println!("planted semilattice domain at x{}", var + 1),
                Some(Planted::Majority { var }) => println!("planted majority domain at x{}", var + 1),
                None => {}
            }
            Ok(0)
        }
    }
}

fn print_domains(domains: &[BTreeSet<Value>]) {
    for (x, d) in domains.iter().enumerate() {
        let vals: Vec<String> = d.iter().map(ToString::to_string).collect();
        println!("x{}: {}", x + 1, vals.join(" "));
    }
}

fn verdict_code(v: &Verdict) -> u8 {
    match v {
        Verdict::Agree { .. } | Verdict::OracleSkipped { .. } => 0,
        Verdict::Disagree { .. } => 1,
        Verdict::PreconditionFailed(_) | Verdict::SolverError(_) => 2,
    }
}

/// Runs `compare` on every `NAME.inst` in `dir`, in name order. Algebras
/// come from `NAME.alg` (or `default.alg`), overrides from `NAME.varK.alg`,
/// and a `NAME.tmpl` template is used when present.
fn compare_batch(dir: &Path, opts: &SolveOptions) -> Result<u8> {
    let mut stems: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "inst").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        bail!("no .inst files in {}", dir.display());
    }
    let mut summary = BatchSummary::default();
    for stem in &stems {
        let path = |ext: &str| dir.join(format!("{stem}{ext}"));
        let verdict = (|| -> Result<Verdict> {
            let tmpl = path(".tmpl");
            let inst = load_instance(&path(".inst"), tmpl.exists().then_some(tmpl.as_path()))?;
            let alg_path = if path(".alg").exists() { path(".alg") } else { dir.join("default.alg") };
            let mut algs = Algebras::uniform(load_algebra(&alg_path)?);
            let mut overrides = BTreeMap::new();
            for x in 0..inst.num_vars() {
                let p = path(&format!(".var{}.alg", x + 1));
                if p.exists() {
                    overrides.insert(x, load_algebra(&p)?);
                }
            }
            algs.overrides = overrides;
            Ok(compare(&inst, &algs, opts, opts.limits.oracle_cap))
        })()
        .unwrap_or_else(|e| Verdict::SolverError(format!("{e:#}")));
        println!("{stem}: {verdict}");
        summary.add(&verdict);
    }
    println!("{summary}");
    Ok(if summary.all_agree() { 0 } else { 1 })
}
