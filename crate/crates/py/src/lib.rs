//! Python bindings: mechanisms, domains, property checks and the search.

use std::time::Duration;

use ospcheck::checks::Property;
use ospcheck::format;
use ospcheck::mechanisms::{self, MechanismBundle};
use ospcheck::search::{self, SearchOptions, SearchOutcome, SearchSpace};
use ospcheck::{AdversarialFamily, AuctionSetting, Rational, SettingKind};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: ospcheck::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rational(s: &str) -> PyResult<Rational> {
    s.parse().map_err(err)
}

fn setting(kind: &str, n: usize, m: usize) -> PyResult<AuctionSetting> {
    let kind = match kind {
        "combinatorial" | "ca" => SettingKind::Combinatorial,
        "multi-unit" | "mu" => SettingKind::MultiUnit,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown setting kind {other:?}"
            )))
        }
    };
    AuctionSetting::new(kind, n, m).map_err(err)
}

/// Outcome of one property check.
#[pyclass(frozen, get_all)]
struct Verdict {
    property: String,
    passed: bool,
    /// JSON description of the violation, when there is one.
    witness: Option<String>,
}

#[pymethods]
impl Verdict {
    fn __repr__(&self) -> String {
        format!("Verdict({}, passed={})", self.property, self.passed)
    }
}

/// A finite valuation domain.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Domain(ospcheck::Domain);

#[pymethods]
impl Domain {
    /// The adversarial fixture domain of `family` for the given setting.
    #[staticmethod]
    fn adversarial(family: &str, kind: &str, n: usize, m: usize) -> PyResult<Self> {
        let family: AdversarialFamily = family.parse().map_err(err)?;
        Ok(Domain(
            ospcheck::adversarial_domain(&setting(kind, n, m)?, family).map_err(err)?,
        ))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        format::parse_domain(text.as_bytes())
            .map(Domain)
            .map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        format::serialize_domain(&self.0).map_err(err)
    }

    fn labels(&self, player: usize) -> PyResult<Vec<String>> {
        let list = self
            .0
            .players()
            .get(player)
            .ok_or_else(|| PyValueError::new_err(format!("no player {player}")))?;
        Ok(list.iter().map(|v| v.label.clone()).collect())
    }

    #[getter]
    fn profile_count(&self) -> usize {
        self.0.profile_count()
    }
}

/// A protocol tree with strategies over a domain.
#[pyclass(frozen)]
struct Mechanism(MechanismBundle);

#[pymethods]
impl Mechanism {
    /// Parses a mechanism file; `domain` replaces an embedded one.
    #[staticmethod]
    #[pyo3(signature = (text, domain=None))]
    fn from_json(text: &str, domain: Option<&Domain>) -> PyResult<Self> {
        let file = format::parse_mechanism(text.as_bytes()).map_err(err)?;
        file.into_bundle(domain.map(|d| d.0.clone()))
            .map(Mechanism)
            .map_err(err)
    }

    /// Sequential second-price auction over values 1..=k.
    #[staticmethod]
    #[pyo3(signature = (k, first=0, tie_winner=1))]
    fn second_price(k: u32, first: usize, tie_winner: usize) -> PyResult<Self> {
        mechanisms::second_price_single_item(k, first, tie_winner)
            .map(Mechanism)
            .map_err(err)
    }

    #[staticmethod]
    fn ascending(k: u32, n: usize) -> PyResult<Self> {
        mechanisms::ascending_single_item(k, n)
            .map(Mechanism)
            .map_err(err)
    }

    /// Clock auction for the grand bundle; the cap defaults to k^4 + 1.
    #[staticmethod]
    #[pyo3(signature = (kind, n, m, cap=None))]
    fn grand_bundle(kind: &str, n: usize, m: usize, cap: Option<u32>) -> PyResult<Self> {
        let s = setting(kind, n, m)?;
        let cap = cap.unwrap_or_else(|| mechanisms::default_clock_cap(&s));
        mechanisms::grand_bundle_ascending(&s, cap)
            .map(Mechanism)
            .map_err(err)
    }

    #[staticmethod]
    fn posted_price(x_low: &str, x_high: &str, n: usize, m: usize) -> PyResult<Self> {
        let s = setting("combinatorial", n, m)?;
        mechanisms::serial_posted_price(rational(x_low)?, rational(x_high)?, &s)
            .map(Mechanism)
            .map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        format::serialize_bundle(&self.0).map_err(err)
    }

    #[getter]
    fn domain(&self) -> Domain {
        Domain(self.0.domain.clone())
    }

    #[getter]
    fn leaf_count(&self) -> usize {
        self.0.tree.leaves().count()
    }

    /// One of "osp", "dsic", "ir", "nnt".
    fn check(&self, property: &str) -> PyResult<Verdict> {
        let p: Property = property.parse().map_err(err)?;
        let v = self.0.check(p).map_err(err)?;
        let witness = v
            .witness
            .as_ref()
            .map(serde_json::to_string)
            .transpose()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Verdict {
            property: p.name().to_string(),
            passed: v.pass,
            witness,
        })
    }

    /// Worst-case welfare ratio as "p/q", or "unbounded".
    fn welfare_ratio(&self) -> PyResult<String> {
        Ok(self.0.welfare_ratio().map_err(err)?.ratio.to_string())
    }

    /// Leaf and node path (display names) reached by a valuation profile.
    fn run(&self, profile: Vec<String>) -> PyResult<(String, Vec<String>)> {
        let b = &self.0;
        if profile.len() != b.strategies.len() {
            return Err(PyValueError::new_err("one valuation label per player"));
        }
        let behaviors = profile
            .iter()
            .zip(&b.strategies)
            .map(|(label, s)| {
                s.get(label)
                    .cloned()
                    .ok_or_else(|| PyValueError::new_err(format!("unknown valuation {label:?}")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let play = ospcheck::run(&b.tree, &behaviors).map_err(err)?;
        let names = play.path.iter().map(|&n| b.tree.display_name(n)).collect();
        Ok((b.tree.display_name(play.leaf), names))
    }
}

/// Searches normalized mechanisms for an OSP+IR+NNT one with ratio below
/// `target`. Returns (outcome, examined count, counterexample JSON or None).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (domain, grid, target, max_depth=None, budget_seconds=None, pruning=true, workers=None))]
fn falsify(
    py: Python<'_>,
    domain: &Domain,
    grid: Vec<String>,
    target: &str,
    max_depth: Option<usize>,
    budget_seconds: Option<f64>,
    pruning: bool,
    workers: Option<usize>,
) -> PyResult<(String, u64, Option<String>)> {
    let grid = grid
        .iter()
        .map(|g| rational(g))
        .collect::<PyResult<Vec<_>>>()?;
    let space = SearchSpace::new(domain.0.clone(), &grid, max_depth).map_err(err)?;
    let target = rational(target)?;
    let options = SearchOptions {
        pruning,
        workers,
        budget: budget_seconds.map(Duration::from_secs_f64),
    };
    let verdict = py
        .detach(|| search::falsify_impossibility(&space, target, &options))
        .map_err(err)?;
    let bundle = match &verdict.outcome {
        SearchOutcome::Counterexample { bundle, .. } => {
            Some(format::serialize_bundle(bundle).map_err(err)?)
        }
        _ => None,
    };
    Ok((verdict.outcome.name().to_string(), verdict.examined, bundle))
}

/// The default payment grid for an adversarial family, as "p/q" strings.
#[pyfunction]
fn default_grid(family: &str, kind: &str, n: usize, m: usize) -> PyResult<Vec<String>> {
    let family: AdversarialFamily = family.parse().map_err(err)?;
    Ok(search::default_grid(&setting(kind, n, m)?, family)
        .iter()
        .map(Rational::to_string)
        .collect())
}

#[pymodule]
fn ospcheck_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Verdict>()?;
    m.add_class::<Domain>()?;
    m.add_class::<Mechanism>()?;
    m.add_function(wrap_pyfunction!(falsify, m)?)?;
    m.add_function(wrap_pyfunction!(default_grid, m)?)?;
    Ok(())
}
