//! Weighted plan collections and the constraint configuration that produced
//! them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Plan;
use crate::metrics::MmdDefinition;

/// Hard and soft constraints shared by both samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Maximum allowed deviation from parity, as a fraction.
    pub pop_tolerance: f64,
    /// Cap on the number of counties touching more than one district.
    pub max_county_splits: Option<u32>,
    /// Penalty per cut edge.
    pub compactness_weight: f64,
    /// Penalty per majority-minority district short of the target.
    pub vra_weight: f64,
    pub vra_target_mmds: Option<u32>,
    pub mmd_definition: MmdDefinition,
}

impl ConstraintConfig {
    /// A configuration with only a population constraint.
    pub fn with_tolerance(pop_tolerance: f64) -> Self {
        ConstraintConfig {
            pop_tolerance,
            max_county_splits: None,
            compactness_weight: 0.0,
            vra_weight: 0.0,
            vra_target_mmds: None,
            mmd_definition: MmdDefinition::black(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pop_tolerance.is_finite() || self.pop_tolerance < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "population tolerance {} must be a nonnegative fraction",
                self.pop_tolerance
            )));
        }
        for (name, w) in [
            ("compactness_weight", self.compactness_weight),
            ("vra_weight", self.vra_weight),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} {w} must be finite and nonnegative"
                )));
            }
        }
        self.mmd_definition.validate()
    }

    /// The VRA hinge: how many MMDs short of the target a plan falls.
    pub(crate) fn mmd_shortfall(&self, mmds: u32) -> u32 {
        self.vra_target_mmds.map_or(0, |t| t.saturating_sub(mmds))
    }

    pub(crate) fn uses_vra(&self) -> bool {
        self.vra_weight > 0.0 && self.vra_target_mmds.is_some()
    }
}

/// Where an ensemble came from; enough to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub scenario_id: String,
    pub n_districts: u32,
    pub tolerance: f64,
    pub constraints: ConstraintConfig,
    pub seed: u64,
    /// Sampler-specific settings (chain length, thinning, diagnostics).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Plans with normalized importance weights.
#[derive(Debug, Clone)]
pub struct PlanEnsemble {
    plans: Vec<Plan>,
    weights: Vec<f64>,
    pub provenance: Provenance,
}

impl PlanEnsemble {
    /// Builds an ensemble, normalizing `weights` to sum to one.
    pub fn new(plans: Vec<Plan>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if plans.is_empty() {
            return Err(Error::InvalidConfig("ensemble has no plans".into()));
        }
        if plans.len() != weights.len() {
            return Err(Error::LengthMismatch(plans.len(), weights.len()));
        }
        let n_d = plans[0].n_districts();
        let len = plans[0].len();
        if plans.iter().any(|p| p.n_districts() != n_d || p.len() != len) {
            return Err(Error::InvalidPlan(
                "ensemble plans disagree on district count or precinct count".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(PlanEnsemble {
            plans,
            weights,
            provenance,
        })
    }

    pub fn uniform(plans: Vec<Plan>, provenance: Provenance) -> Result<Self> {
        let w = vec![1.0; plans.len()];
        PlanEnsemble::new(plans, w, provenance)
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn n_districts(&self) -> u32 {
        self.plans[0].n_districts()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Plan, f64)> {
        self.plans.iter().zip(self.weights.iter().copied())
    }

    /// Kish effective sample size of the weights.
    pub fn effective_sample_size(&self) -> f64 {
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        1.0 / sq
    }

    /// Concatenates ensembles (e.g. independent chains), weighting each
    /// input equally in the merged distribution.
    pub fn merge(parts: Vec<PlanEnsemble>, provenance: Provenance) -> Result<Self> {
        let k = parts.len() as f64;
        let mut plans = Vec::new();
        let mut weights = Vec::new();
        for part in parts {
            weights.extend(part.weights.iter().map(|w| w / k));
            plans.extend(part.plans);
        }
        PlanEnsemble::new(plans, weights, provenance)
    }
}

#[cfg(test)]
pub(crate) fn test_provenance(n_districts: u32) -> Provenance {
    Provenance {
        sampler: "test".into(),
        scenario_id: "census".into(),
        n_districts,
        tolerance: 0.0,
        constraints: ConstraintConfig::with_tolerance(0.0),
        seed: 0,
        extra: BTreeMap::new(),
    }
}
