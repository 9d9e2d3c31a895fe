use serde::{Deserialize, Serialize};

use crate::dynamics::DEFAULT_WINDOW;
use crate::error::{Error, Result};

/// Population over which the three rank sets are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentilePopulation {
    /// Rank within the candidate pool only.
    #[default]
    Candidates,
    /// Rank within the whole confident subset, then keep hits that are also
    /// candidates.
    ConfidentSubset,
}

/// Early Cutting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutConfig {
    /// Early cutting rate: the earliest `1 / gamma` of the confident subset
    /// forms the candidate pool.
    pub gamma: f64,
    pub loss_top_frac: f64,
    pub conf_top_frac: f64,
    pub grad_bottom_frac: f64,
    /// Selection rounds.
    pub i_rate: usize,
    /// Overall fraction of the training set to keep after all rounds. When
    /// unset, callers fill in `1 - noise rate`.
    pub target_retain: Option<f64>,
    /// Consecutive-epoch window for learning times.
    pub window: usize,
    pub population: PercentilePopulation,
    /// Also run the identical pipeline with Early Cutting disabled.
    pub compare_base: bool,
}

impl Default for CutConfig {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            loss_top_frac: 0.10,
            conf_top_frac: 0.20,
            grad_bottom_frac: 0.20,
            i_rate: 3,
            target_retain: None,
            window: DEFAULT_WINDOW,
            population: PercentilePopulation::Candidates,
            compare_base: false,
        }
    }
}

impl CutConfig {
    /// Same settings with every cut fraction at zero, so no sample is ever
    /// flagged and each round reduces to base selection.
    pub fn without_cutting(&self) -> Self {
        Self {
            loss_top_frac: 0.0,
            conf_top_frac: 0.0,
            grad_bottom_frac: 0.0,
            compare_base: false,
            ..self.clone()
        }
    }

    pub fn target_retain(&self) -> Result<f64> {
        self.target_retain
            .ok_or_else(|| Error::InvalidConfig("cut.target_retain is not set".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad(format!("early cutting rate {} must be >= 1", self.gamma));
        }
        for (name, v) in [
            ("loss_top_frac", self.loss_top_frac),
            ("conf_top_frac", self.conf_top_frac),
            ("grad_bottom_frac", self.grad_bottom_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.i_rate == 0 {
            return bad("i_rate must be at least 1".into());
        }
        if let Some(r) = self.target_retain {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("target_retain = {r} outside (0, 1]"));
            }
        }
        if !(2..=3).contains(&self.window) {
            return bad(format!("window = {} must be 2 or 3", self.window));
        }
        Ok(())
    }
}
