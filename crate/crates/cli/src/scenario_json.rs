//! Path-aware scenario parsing.
//!
//! The scenario schema uses an internal `variant` tag; serde buffers
//! the content of internally tagged enums, which destroys field paths
//! in error messages. Parsing through flat mirror structs keeps the
//! paths, so a bad value under `p.c` is reported as `p.c`.

use anyhow::{anyhow, bail, Result};
use serde::Deserialize;

use bclab::scenarios::{MarginSpec, Scenario};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginRaw {
    kind: String,
    c: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRaw {
    variant: String,
    p: Option<MarginRaw>,
    e: Option<MarginRaw>,
    #[serde(rename = "pE")]
    p_e: Option<f64>,
    #[serde(rename = "C")]
    c: Option<f64>,
}

fn margin(raw: MarginRaw, field: &str) -> Result<MarginSpec> {
    let need_c = |c: Option<f64>| {
        c.ok_or_else(|| anyhow!("margin '{field}' of kind '{}' requires 'c'", raw.kind))
    };
    match raw.kind.as_str() {
        "constant" => Ok(MarginSpec::Constant { c: need_c(raw.c)? }),
        "harmonic" => Ok(MarginSpec::Harmonic { c: need_c(raw.c)? }),
        "reciprocal_log" => Ok(MarginSpec::ReciprocalLog { c: need_c(raw.c)? }),
        "table" => Ok(MarginSpec::Table {
            values: raw
                .values
                .ok_or_else(|| anyhow!("margin '{field}' of kind 'table' requires 'values'"))?,
        }),
        other => bail!(
            "margin '{field}': unknown kind '{other}' \
             (expected constant, harmonic, reciprocal_log or table)"
        ),
    }
}

/// Parses a scenario document, reporting schema errors with their field
/// path, then validates it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: ScenarioRaw = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        anyhow!(
            "invalid scenario schema at field path '{}': {}",
            e.path(),
            e.inner()
        )
    })?;
    from_raw(raw)
}

/// Same, from an already-parsed JSON value (config files).
pub fn scenario_from_value(value: serde_json::Value) -> Result<Scenario> {
    let raw: ScenarioRaw = serde_path_to_error::deserialize(value).map_err(|e| {
        anyhow!(
            "invalid scenario schema at field path '{}': {}",
            e.path(),
            e.inner()
        )
    })?;
    from_raw(raw)
}

fn from_raw(raw: ScenarioRaw) -> Result<Scenario> {
    let variant = raw.variant.clone();
    let need_p = |p: Option<MarginRaw>| {
        p.ok_or_else(|| anyhow!("variant '{variant}' requires margin 'p'"))
            .and_then(|m| margin(m, "p"))
    };
    let scenario = match raw.variant.as_str() {
        "independent_contamination" => Scenario::IndependentContamination {
            p: need_p(raw.p)?,
            e: raw
                .e
                .ok_or_else(|| anyhow!("variant 'independent_contamination' requires margin 'e'"))
                .and_then(|m| margin(m, "e"))?,
        },
        "fixed_contaminator" => Scenario::FixedContaminator {
            p: need_p(raw.p)?,
            p_e: raw
                .p_e
                .ok_or_else(|| anyhow!("variant 'fixed_contaminator' requires 'pE'"))?,
        },
        "absorbing" => Scenario::Absorbing { p: need_p(raw.p)? },
        "bounded_dependence" => Scenario::BoundedDependence {
            p: need_p(raw.p)?,
            e: raw
                .e
                .ok_or_else(|| anyhow!("variant 'bounded_dependence' requires margin 'e'"))
                .and_then(|m| margin(m, "e"))?,
            c: raw
                .c
                .ok_or_else(|| anyhow!("variant 'bounded_dependence' requires 'C'"))?,
        },
        other => bail!(
            "unknown scenario variant '{other}' (expected independent_contamination, \
             fixed_contaminator, absorbing or bounded_dependence)"
        ),
    };
    scenario
        .validate()
        .map_err(|e| anyhow!("invalid scenario: {e}"))?;
    Ok(scenario)
}
