use serde::{Deserialize, Serialize};

use super::GenError;
use crate::tvl::VisType;

/// Target share of each chart type in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartMix {
    pub map: f64,
    pub bar: f64,
    pub line: f64,
    pub pie: f64,
}

impl ChartMix {
    pub fn share(&self, vis: VisType) -> f64 {
        match vis {
            VisType::Map => self.map,
            VisType::Bar => self.bar,
            VisType::Line => self.line,
            VisType::Pie => self.pie,
        }
    }
}

impl Default for ChartMix {
    fn default() -> ChartMix {
        ChartMix { map: 0.697, bar: 0.113, line: 0.104, pie: 0.086 }
    }
}

fn default_intervals() -> usize {
    4
}

fn default_depth() -> usize {
    2
}

fn default_quantiles() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_max() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default = "default_intervals")]
    pub intervals_per_area: usize,
    #[serde(default)]
    pub chart_mix: ChartMix,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_max")]
    pub max_tvls: usize,
    /// Maximum number of distinct attributes conjoined in one constraint.
    #[serde(default = "default_depth")]
    pub tree_depth: usize,
    #[serde(default = "default_quantiles")]
    pub altitude_quantiles: Vec<f64>,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            intervals_per_area: default_intervals(),
            chart_mix: ChartMix::default(),
            rng_seed: 0,
            max_tvls: default_max(),
            tree_depth: default_depth(),
            altitude_quantiles: default_quantiles(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Config(m));
        if !(3..=5).contains(&self.intervals_per_area) {
            return bad(format!("intervals_per_area must be in [3, 5], got {}", self.intervals_per_area));
        }
        let m = &self.chart_mix;
        let parts = [m.map, m.bar, m.line, m.pie];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("chart_mix shares must be non-negative".into());
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("chart_mix shares sum to {sum}, not 1"));
        }
        if self.tree_depth == 0 {
            return bad("tree_depth must be at least 1".into());
        }
        if self.altitude_quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return bad("altitude_quantiles must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(GenConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_mix_and_interval_count() {
        let mut c = GenConfig::default();
        c.chart_mix.map = 0.5;
        assert!(c.validate().is_err());
        let c = GenConfig { intervals_per_area: 6, ..GenConfig::default() };
        assert!(c.validate().is_err());
    }
}
