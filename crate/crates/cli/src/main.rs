//! `qhedge`: batch front end for exact quantile hedging and shortfall-risk
//! minimization on scenario trees.
//!
//! Exit status: 0 on success or a "yes" answer, 1 on a "no"/"none" answer,
//! 2 on input errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhedge::cone::{check_ef, liquidation_value};
use qhedge::consistency::{find_strict_cps, write_price_system_csv};
use qhedge::frictionless::{has_strict_emm, is_frictionless, verify_fl_correspondence, FlOptions};
use qhedge::hedge::{hedging_feasible, min_hedging_capital_with_strategy};
use qhedge::market::{load_claim, load_market, parse_claim, parse_market, validate};
use qhedge::quantile::{gamma_eps_member, maximize_effectiveness, write_phi_csv, PartialHedge};
use qhedge::rat::parse_vector;
use qhedge::shortfall::{gamma_alpha_member, load_loss, minimize_shortfall_risk};
use qhedge::success::{effectiveness, success_function, write_profile_csv};
use qhedge::wealth::{is_admissible, load_strategy, run_strategy, serialize_strategy, Strategy};
use qhedge::{Claim, Error, Rat, ScenarioTree};

#[derive(Parser)]
#[command(name = "qhedge", version, about = "Exact quantile hedging under proportional transaction costs")]
struct Cli {
    /// Worker threads for per-leaf computations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MarketArgs {
    #[arg(long)]
    market: PathBuf,
}

#[derive(Args)]
struct ClaimArgs {
    #[arg(long)]
    market: PathBuf,
    /// Claim file; defaults to the claim embedded in the market file.
    #[arg(long)]
    claim: Option<PathBuf>,
}

#[derive(Clone)]
struct RatVec(Vec<Rat>);

fn rat_vec(s: &str) -> Result<RatVec, String> {
    parse_vector(s).map(RatVec).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Check a market (and claim) file. Exit 1 on invariant violations.
    Validate {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        claim: Option<PathBuf>,
    },
    /// Efficient friction at every node. Exit 1 if it fails anywhere.
    CheckEf(MarketArgs),
    /// Strict no-arbitrage: find a strictly consistent price system.
    /// Requires efficient friction. Exit 1 if none exists.
    CheckNas {
        #[command(flatten)]
        market: MarketArgs,
        /// Certify a frictionless market by a strictly positive martingale measure instead.
        #[arg(long)]
        strict_emm: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Whether `v0` super-hedges the claim. Exit 1 if not.
    HedgeCheck {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Least capital along a direction that super-hedges the claim.
    HedgePrice {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        direction: RatVec,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Maximal probability of successful hedging from `v0`.
    Quantile {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Whether `v0` reaches success probability at least `1 − eps`. Exit 1 if not.
    GammaEps {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        eps: Rat,
    },
    /// Minimal expected loss of the shortfall from `v0`.
    ShortfallMin {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        loss: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Whether `v0` keeps the expected loss at most `alpha`. Exit 1 if not.
    GammaAlpha {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        loss: PathBuf,
        #[arg(long)]
        alpha: Rat,
    },
    /// Success function of a given strategy.
    Success {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Value of a position when everything is moved into one asset.
    Liquidate {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, value_parser = rat_vec)]
        position: RatVec,
        /// Target asset, 1-based.
        #[arg(long)]
        asset: usize,
        /// Node whose costs apply; defaults to the root.
        #[arg(long)]
        node: Option<String>,
    },
    /// Compare the frictionless market with its scalar equivalent. Exit 1 if a check fails.
    FrictionlessVerify {
        #[command(flatten)]
        input: ClaimArgs,
        #[arg(long, value_parser = rat_vec)]
        v0: RatVec,
        #[arg(long, default_value = "1/4")]
        eps: Rat,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also require a martingale measure charging every leaf.
        #[arg(long)]
        strict_emm: bool,
    },
}

enum Failure {
    Input(String),
    Domain(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::EfViolated { .. } | Error::EmmViolated | Error::NotLiquidatable | Error::NoProportionalTransfer => {
                Failure::Domain(e.to_string())
            }
            e => Failure::Input(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn market(path: &Path) -> Result<(ScenarioTree, Option<Claim>), Failure> {
    Ok(load_market(&read(path)?)?)
}

fn market_and_claim(args: &ClaimArgs) -> Result<(ScenarioTree, Claim), Failure> {
    let (tree, embedded) = market(&args.market)?;
    let claim = match &args.claim {
        Some(p) => load_claim(&tree, &read(p)?)?,
        None => embedded.ok_or_else(|| Failure::Input("no claim: pass --claim or embed one in the market file".into()))?,
    };
    Ok((tree, claim))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_strategy(tree: &ScenarioTree, strategy: &Strategy, path: Option<&PathBuf>) -> Result<(), Failure> {
    if let Some(p) = path {
        fs::write(p, serialize_strategy(tree, strategy) + "\n").map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn print_phi(tree: &ScenarioTree, phi: &[Rat]) {
    println!("{:<12} {:>12} {:>12}", "leaf", "probability", "phi");
    for (&l, f) in tree.leaves().iter().zip(phi) {
        println!("{:<12} {:>12} {:>12}", tree.node(l).id, tree.path_prob(l).to_string(), f.to_string());
    }
}

fn report_partial(tree: &ScenarioTree, label: &str, hedge: &PartialHedge, csv: Option<&PathBuf>, out: Option<&PathBuf>) -> Outcome {
    println!("{label}: {}", hedge.value);
    print_phi(tree, &hedge.phi);
    if let Some(p) = csv {
        write_phi_csv(tree, &hedge.phi, create(p)?)?;
    }
    write_strategy(tree, &hedge.strategy, out)?;
    Ok(true)
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { market, claim } => {
            let (tree, embedded) = parse_market(&read(&market)?)?;
            let claim = match claim {
                Some(p) => Some(parse_claim(&tree, &read(&p)?)?),
                None => embedded,
            };
            let violations = validate(&tree, claim.as_ref())?;
            if violations.is_empty() {
                println!("valid: {} nodes, {} leaves, dimension {}", tree.len(), tree.leaves().len(), tree.dimension());
                return Ok(true);
            }
            for v in &violations {
                println!("{v}");
            }
            Ok(false)
        }
        Command::CheckEf(args) => {
            let (tree, _) = market(&args.market)?;
            let mut ok = true;
            for node in tree.nodes() {
                if !check_ef(&node.costs)? {
                    println!("efficient friction fails at node {}", node.id);
                    ok = false;
                }
            }
            if ok {
                println!("efficient friction holds at all {} nodes", tree.len());
            }
            Ok(ok)
        }
        Command::CheckNas { market: args, strict_emm, csv } => {
            let (tree, _) = market(&args.market)?;
            if strict_emm {
                if !is_frictionless(&tree) {
                    return Err(Failure::Input("--strict-emm needs a market without transaction costs".into()));
                }
                let ok = has_strict_emm(&tree)?;
                println!("{}", if ok { "strict martingale measure exists" } else { "no strict martingale measure" });
                return Ok(ok);
            }
            for node in tree.nodes() {
                if !check_ef(&node.costs)? {
                    println!("efficient friction fails at node {}; strict no-arbitrage not certified", node.id);
                    return Ok(false);
                }
            }
            match find_strict_cps(&tree)? {
                Some(z) => {
                    println!("strictly consistent price system found");
                    println!("{:<12} Z", "node");
                    for (node, row) in tree.nodes().iter().zip(&z.values) {
                        println!("{:<12} {}", node.id, row.iter().map(Rat::to_string).collect::<Vec<_>>().join(" "));
                    }
                    if let Some(p) = csv {
                        write_price_system_csv(&tree, &z, create(&p)?)?;
                    }
                    Ok(true)
                }
                None => {
                    println!("no strictly consistent price system");
                    Ok(false)
                }
            }
        }
        Command::HedgeCheck { input, v0, strategy_out } => {
            let (tree, claim) = market_and_claim(&input)?;
            let (ok, strategy) = hedging_feasible(&tree, &claim, &v0.0)?;
            println!("{}", if ok { "hedgeable" } else { "not hedgeable" });
            if let Some(s) = strategy {
                write_strategy(&tree, &s, strategy_out.as_ref())?;
            }
            Ok(ok)
        }
        Command::HedgePrice { input, direction, strategy_out } => {
            let (tree, claim) = market_and_claim(&input)?;
            let (capital, strategy) = min_hedging_capital_with_strategy(&tree, &claim, &direction.0)?;
            println!("{capital}");
            write_strategy(&tree, &strategy, strategy_out.as_ref())?;
            Ok(true)
        }
        Command::Quantile { input, v0, csv, strategy_out } => {
            let (tree, claim) = market_and_claim(&input)?;
            let best = maximize_effectiveness(&tree, &claim, &v0.0)?;
            report_partial(&tree, "value", &best, csv.as_ref(), strategy_out.as_ref())
        }
        Command::GammaEps { input, v0, eps } => {
            let (tree, claim) = market_and_claim(&input)?;
            let ok = gamma_eps_member(&tree, &claim, &v0.0, &eps)?;
            println!("{}", ok);
            Ok(ok)
        }
        Command::ShortfallMin { input, v0, loss, csv, strategy_out } => {
            let (tree, claim) = market_and_claim(&input)?;
            let u = load_loss(&read(&loss)?)?;
            let best = minimize_shortfall_risk(&tree, &claim, &v0.0, &u)?;
            report_partial(&tree, "risk", &best, csv.as_ref(), strategy_out.as_ref())
        }
        Command::GammaAlpha { input, v0, loss, alpha } => {
            let (tree, claim) = market_and_claim(&input)?;
            let u = load_loss(&read(&loss)?)?;
            let ok = gamma_alpha_member(&tree, &claim, &v0.0, &u, &alpha)?;
            println!("{}", ok);
            Ok(ok)
        }
        Command::Success { input, v0, strategy, csv } => {
            let (tree, claim) = market_and_claim(&input)?;
            let strategy = load_strategy(&tree, &read(&strategy)?)?;
            let path = run_strategy(&tree, &v0.0, &strategy)?;
            if !is_admissible(&tree, &path)? {
                return Err(Failure::Input("strategy is not admissible".into()));
            }
            let profile = success_function(&tree, &path, &claim)?;
            println!("effectiveness: {}", effectiveness(&tree, &profile));
            println!("{:<12} {:>12} {:>7} {:>12} {:>12}", "leaf", "probability", "hedged", "phi", "shortfall");
            for l in &profile.leaves {
                println!(
                    "{:<12} {:>12} {:>7} {:>12} {:>12}",
                    tree.node(l.leaf).id,
                    tree.path_prob(l.leaf).to_string(),
                    l.hedged,
                    l.phi.to_string(),
                    (Rat::one() - &l.phi).to_string()
                );
            }
            if let Some(p) = csv {
                write_profile_csv(&tree, &profile, create(&p)?)?;
            }
            Ok(true)
        }
        Command::Liquidate { market: args, position, asset, node } => {
            let (tree, _) = market(&args.market)?;
            let k = match node {
                Some(id) => tree.find(&id).ok_or_else(|| Failure::Input(format!("unknown node {id}")))?,
                None => 0,
            };
            if asset == 0 || asset > tree.dimension() {
                return Err(Failure::Input(format!("asset must be between 1 and {}", tree.dimension())));
            }
            println!("{}", liquidation_value(&position.0, &tree.node(k).costs, asset - 1)?);
            Ok(true)
        }
        Command::FrictionlessVerify { input, v0, eps, samples, seed, strict_emm } => {
            let (tree, claim) = market_and_claim(&input)?;
            if strict_emm && !has_strict_emm(&tree)? {
                println!("no strict martingale measure");
                return Ok(false);
            }
            let report = verify_fl_correspondence(&tree, &claim, &v0.0, &FlOptions { eps, samples, seed })?;
            println!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("qhedge: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Domain(msg)) => {
            eprintln!("qhedge: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("qhedge: {msg}");
            ExitCode::from(2)
        }
    }
}
