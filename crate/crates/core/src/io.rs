//! Scenario and plan files (JSON, units in field names) and environment overrides for
//! configuration values.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::network::{DistanceMode, Edge, Node, RoadNetwork};
use crate::plan::{ChargingPlan, Depot};
use crate::scenario::Scenario;

/// Prefix of environment variables that override configuration fields, e.g.
/// `CHARGEPLAN_BUDGET_CNY=1e6` or `CHARGEPLAN_CHARGER_TYPES='[{"power_kw":7,"fee_cny":2700}]'`.
pub const ENV_PREFIX: &str = "CHARGEPLAN_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub distance_mode: DistanceMode,
    pub demand: DemandMatrix,
    #[serde(default)]
    pub depots: Vec<Depot>,
    #[serde(default)]
    pub config: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_plan: Option<ChargingPlan>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            nodes: s.network.nodes().to_vec(),
            edges: s.network.edges().to_vec(),
            distance_mode: s.network.mode(),
            demand: s.demand.clone(),
            depots: s.depots.clone(),
            config: s.config.clone(),
            reference_plan: s.reference_plan.clone(),
        }
    }

    /// Validates everything the in-memory types would have rejected on construction.
    pub fn into_scenario(self) -> Result<Scenario> {
        let network = RoadNetwork::with_mode(self.nodes, self.edges, self.distance_mode)?;
        let demand = DemandMatrix::new(self.demand.slot_minutes, self.demand.rows().to_vec())?;
        if (demand.slot_minutes - self.config.slot_minutes).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "demand slots last {} min but the config says {} min",
                demand.slot_minutes, self.config.slot_minutes
            )));
        }
        Scenario::new(network, demand, self.depots, self.config, self.reference_plan)
    }
}

pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioFile::from_scenario(s))?)
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    serde_json::from_str::<ScenarioFile>(text)?.into_scenario()
}

pub fn plan_to_json(plan: &ChargingPlan) -> Result<String> {
    Ok(serde_json::to_string_pretty(plan)?)
}

/// Parses a plan and brings it in line with `scenario` (depots, horizon, trajectories).
pub fn plan_from_json(text: &str, scenario: &Scenario) -> Result<ChargingPlan> {
    let mut plan: ChargingPlan = serde_json::from_str(text)?;
    scenario.prepare_plan(&mut plan)?;
    Ok(plan)
}

/// Applies `CHARGEPLAN_<FIELD>` overrides from `vars` to `cfg`. Values are parsed as JSON
/// where possible (numbers, booleans, arrays), otherwise taken as strings. Unknown
/// `CHARGEPLAN_` variables are an error so typos do not pass silently.
pub fn apply_overrides<I, K, V>(cfg: &ScenarioConfig, vars: I) -> Result<ScenarioConfig>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut value = serde_json::to_value(cfg)?;
    let Value::Object(map) = &mut value else {
        return Err(Error::Serde("configuration is not an object".into()));
    };
    let mut touched = false;
    for (key, raw) in vars {
        let Some(field) = key.as_ref().strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let field = field.to_ascii_lowercase();
        if !map.contains_key(&field) {
            return Err(Error::InvalidConfig(format!(
                "{} does not name a configuration field",
                key.as_ref()
            )));
        }
        let raw = raw.as_ref();
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(field, parsed);
        touched = true;
    }
    if !touched {
        return Ok(cfg.clone());
    }
    let out: ScenarioConfig = serde_json::from_value(value)?;
    out.validate()?;
    Ok(out)
}

/// [`apply_overrides`] with the process environment.
pub fn apply_env_overrides(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    apply_overrides(cfg, std::env::vars())
}
