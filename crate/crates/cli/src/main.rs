//! `ospcheck`: verify, measure and search auction mechanisms from files.
//!
//! Exit status: 0 when everything passes (or no counterexample is found),
//! 1 when a property fails or a counterexample is found, 2 on usage, input
//! or parse errors.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ospcheck::checks::{audit_payment_bounds, scan_bad_leaf_good_leaf, Property};
use ospcheck::format::{parse_domain, parse_mechanism, serialize_bundle, serialize_domain};
use ospcheck::mechanisms::{
    ascending_single_item, default_clock_cap, first_price_single_item, grand_bundle_ascending,
    second_price_single_item, serial_posted_price,
};
use ospcheck::search::{default_grid, falsify_impossibility, SearchOptions, SearchSpace};
use ospcheck::structure::audit_ascending_structure;
use ospcheck::{
    adversarial_domain, restricted_additive_domain, AdversarialFamily, AuctionSetting, Domain,
    Rational, SettingKind,
};
use serde::Deserialize;

use report::{InputDigest, ReportDocument, SearchSummary, Section};

#[derive(Debug, Parser)]
#[command(
    name = "ospcheck",
    version,
    about = "Verify obviously strategy-proof auction mechanisms"
)]
struct Cli {
    /// Report rendering.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text, global = true)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run property checks on a mechanism with strategies.
    Verify {
        #[command(flatten)]
        input: MechanismInput,
        /// Comma-separated subset of osp, dsic, ir, nnt.
        #[arg(long, value_delimiter = ',', default_value = "osp,dsic,ir,nnt")]
        checks: Vec<Property>,
    },
    /// Worst-case welfare ratio of a mechanism over its domain.
    Ratio {
        #[command(flatten)]
        input: MechanismInput,
    },
    /// Structure audit; with strategies and a domain also the
    /// bad-leaf/good-leaf scan.
    Analyze {
        #[command(flatten)]
        input: MechanismInput,
        /// Also audit the payment bounds of the multi-unit adversarial domain.
        #[arg(long)]
        payment_bounds: bool,
    },
    /// Write adversarial domains, reference mechanisms and a search config.
    Fixtures {
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
    },
    /// Look for an OSP+IR+NNT normalized mechanism beating a welfare ratio.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
struct MechanismInput {
    /// Mechanism file (JSON).
    #[arg(long)]
    mechanism: PathBuf,
    /// Domain file; defaults to the domain embedded in the mechanism file.
    #[arg(long)]
    domain: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Search configuration file (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain file, instead of the config's domain.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Strict ratio bound to beat, as "p/q" (default 2).
    #[arg(long)]
    target_ratio: Option<Rational>,
    /// Comma-separated payment grid; defaults to the adversarial thresholds.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<Rational>>,
    /// Cap on nested splits; defaults to the total number of valuations.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Time budget in seconds (default unlimited).
    #[arg(long)]
    budget: Option<f64>,
    /// Check only complete trees instead of pruning partial ones.
    #[arg(long)]
    no_pruning: bool,
    /// Worker threads; defaults to the environment variable OSPCHECK_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
}

/// Search configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchConfig {
    domain: Option<DomainSource>,
    target_ratio: Option<Rational>,
    grid: Option<Vec<Rational>>,
    max_depth: Option<usize>,
    budget_seconds: Option<f64>,
    pruning: Option<bool>,
    workers: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DomainSource {
    /// Path relative to the config file.
    File(PathBuf),
    Fixture {
        family: AdversarialFamily,
        kind: SettingKind,
        n: usize,
        m: usize,
    },
}

struct Loaded {
    inputs: Vec<InputDigest>,
}

impl Loaded {
    fn read(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs
            .push(InputDigest::of(role, &path.display().to_string(), &bytes));
        Ok(bytes)
    }

    fn bundle(&mut self, input: &MechanismInput) -> Result<ospcheck::mechanisms::MechanismBundle> {
        let bytes = self.read("mechanism", &input.mechanism)?;
        let file = parse_mechanism(&bytes)
            .with_context(|| format!("parsing {}", input.mechanism.display()))?;
        let domain = match &input.domain {
            Some(p) => Some(self.domain(p)?),
            None => None,
        };
        Ok(file.into_bundle(domain)?)
    }

    fn domain(&mut self, path: &Path) -> Result<Domain> {
        let bytes = self.read("domain", path)?;
        parse_domain(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}

fn run(cli: Cli) -> Result<ReportDocument> {
    let mut loaded = Loaded { inputs: Vec::new() };
    let (name, sections) = match cli.command {
        Command::Verify { input, checks } => {
            let b = loaded.bundle(&input)?;
            let sections = b
                .check_all(&checks)?
                .into_iter()
                .map(Section::Verdict)
                .collect();
            ("verify", sections)
        }
        Command::Ratio { input } => {
            let b = loaded.bundle(&input)?;
            ("ratio", vec![Section::Ratio(b.welfare_ratio()?)])
        }
        Command::Analyze {
            input,
            payment_bounds,
        } => {
            let bytes = loaded.read("mechanism", &input.mechanism)?;
            let file = parse_mechanism(&bytes)
                .with_context(|| format!("parsing {}", input.mechanism.display()))?;
            let mut sections = vec![Section::Structure(audit_ascending_structure(&file.tree))];
            let domain = match &input.domain {
                Some(p) => Some(loaded.domain(p)?),
                None => file.domain.clone(),
            };
            if file.strategies.is_some() && domain.is_some() {
                let b = file.into_bundle(domain)?;
                sections.push(Section::BadLeafGoodLeaf {
                    triples: scan_bad_leaf_good_leaf(&b.tree, &b.strategies, &b.domain)?,
                });
                if payment_bounds {
                    sections.push(Section::PaymentBounds(audit_payment_bounds(
                        &b.tree,
                        &b.strategies,
                        &b.domain,
                    )?));
                }
            } else if payment_bounds {
                bail!("payment bounds need strategies and a domain");
            }
            ("analyze", sections)
        }
        Command::Fixtures { out, n, m } => ("fixtures", write_fixtures(&out, n, m)?),
        Command::Search(args) => ("search", vec![search(args, &mut loaded)?]),
    };
    Ok(ReportDocument::new(name, loaded.inputs, sections))
}

fn search(args: SearchArgs, loaded: &mut Loaded) -> Result<Section> {
    let (config, base) = match &args.config {
        Some(p) => {
            let bytes = loaded.read("config", p)?;
            let config: SearchConfig = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", p.display()))?;
            (
                config,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            )
        }
        None => (SearchConfig::default(), PathBuf::new()),
    };
    let (domain, family) = match (&args.domain, config.domain) {
        (Some(p), _) => (loaded.domain(p)?, None),
        (None, Some(DomainSource::File(p))) => (loaded.domain(&base.join(p))?, None),
        (None, Some(DomainSource::Fixture { family, kind, n, m })) => {
            let setting = AuctionSetting::new(kind, n, m)?;
            (adversarial_domain(&setting, family)?, Some(family))
        }
        (None, None) => bail!("search needs a domain: pass --domain or a config with one"),
    };
    let grid = match args.grid.or(config.grid) {
        Some(g) => g,
        None => default_grid(
            domain.setting(),
            family.unwrap_or(AdversarialFamily::MuSingleMinded),
        ),
    };
    let space = SearchSpace::new(domain, &grid, args.max_depth.or(config.max_depth))?;
    let budget = args.budget.or(config.budget_seconds);
    if budget.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
        bail!("budget must be a positive number of seconds");
    }
    let options = SearchOptions {
        pruning: !args.no_pruning && config.pruning.unwrap_or(true),
        workers: args.workers.or(config.workers),
        budget: budget.map(Duration::from_secs_f64),
    };
    let target = args
        .target_ratio
        .or(config.target_ratio)
        .unwrap_or(Rational::integer(2));
    let verdict = falsify_impossibility(&space, target, &options)?;
    Ok(Section::Search(SearchSummary::new(&verdict)?))
}

fn write_fixtures(out: &Path, n: usize, m: usize) -> Result<Vec<Section>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut sections = Vec::new();
    let mut write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        sections.push(Section::Fixture {
            path: path.display().to_string(),
        });
        Ok(())
    };

    let mu = AuctionSetting::multi_unit(n, m)?;
    let ca = AuctionSetting::combinatorial(n, m)?;
    for (setting, family) in [
        (mu, AdversarialFamily::MuSingleMinded),
        (ca, AdversarialFamily::CaSingleMinded),
        (ca, AdversarialFamily::Additive),
        (ca, AdversarialFamily::UnitDemand),
    ] {
        let d = adversarial_domain(&setting, family)?;
        write(
            &format!("domain-{}.json", family.name()),
            serialize_domain(&d)?,
        )?;
    }
    let (xl, xh) = (Rational::integer(1), Rational::integer(3));
    write(
        "domain-restricted-additive.json",
        serialize_domain(&restricted_additive_domain(xl, xh, &ca)?)?,
    )?;

    write(
        "figure1.json",
        serialize_bundle(&second_price_single_item(2, 0, 1)?)?,
    )?;
    write(
        "first-price.json",
        serialize_bundle(&first_price_single_item(2)?)?,
    )?;
    write(
        "ascending.json",
        serialize_bundle(&ascending_single_item(3, n)?)?,
    )?;
    write(
        "grand-bundle-mu.json",
        serialize_bundle(&grand_bundle_ascending(&mu, default_clock_cap(&mu))?)?,
    )?;
    write(
        "posted-price.json",
        serialize_bundle(&serial_posted_price(xl, xh, &ca)?)?,
    )?;
    let config = serde_json::json!({
        "domain": {"family": AdversarialFamily::MuSingleMinded, "kind": "multi-unit", "n": n, "m": m},
        "target_ratio": "2",
        "budget_seconds": 1800,
    });
    write("search-mu.json", serde_json::to_string_pretty(&config)?)?;
    Ok(sections)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let format = cli.format;
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let rendered = match format {
        OutputFormat::Text => Ok(report.text()),
        OutputFormat::Machine => report.machine(),
    };
    match rendered {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
