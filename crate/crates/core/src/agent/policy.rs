use serde::{Deserialize, Serialize};

/// Knobs governing one session's turn loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    /// Suspend `station.apply_config` until an operator approves it.
    pub require_approval: bool,
    pub max_iterations: usize,
    /// Relative drop in attach success rate or throughput that triggers rollback.
    pub regression_threshold: f64,
    pub max_retries: u32,
    /// First provider retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
    /// Chunks injected from the knowledge base for each user message.
    pub retrieval_k: usize,
    /// Ticks read when the loop verifies a change on its own.
    pub verify_ticks: u32,
    pub verify_dt_s: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            require_approval: true,
            max_iterations: 8,
            regression_threshold: 0.5,
            max_retries: 2,
            backoff_base_ms: 200,
            retrieval_k: 3,
            verify_ticks: 5,
            verify_dt_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_approval: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_ticks: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_dt_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid policy override {field}: {reason}")]
pub struct PolicyError {
    pub field: &'static str,
    pub reason: String,
}

impl Policy {
    pub fn with_overrides(&self, o: &PolicyOverrides) -> Result<Policy, PolicyError> {
        let merged = Policy {
            require_approval: o.require_approval.unwrap_or(self.require_approval),
            max_iterations: o.max_iterations.unwrap_or(self.max_iterations),
            regression_threshold: o.regression_threshold.unwrap_or(self.regression_threshold),
            max_retries: o.max_retries.unwrap_or(self.max_retries),
            backoff_base_ms: o.backoff_base_ms.unwrap_or(self.backoff_base_ms),
            retrieval_k: o.retrieval_k.unwrap_or(self.retrieval_k),
            verify_ticks: o.verify_ticks.unwrap_or(self.verify_ticks),
            verify_dt_s: o.verify_dt_s.unwrap_or(self.verify_dt_s),
        };
        merged.check()?;
        Ok(merged)
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        let fail = |field, reason: &str| {
            Err(PolicyError {
                field,
                reason: reason.to_string(),
            })
        };
        if !(1..=64).contains(&self.max_iterations) {
            return fail("max_iterations", "must be in 1..=64");
        }
        if !(self.regression_threshold > 0.0 && self.regression_threshold <= 1.0) {
            return fail("regression_threshold", "must be in (0, 1]");
        }
        if self.max_retries > 10 {
            return fail("max_retries", "must be at most 10");
        }
        if !(1..=20).contains(&self.retrieval_k) {
            return fail("retrieval_k", "must be in 1..=20");
        }
        if !(1..=60).contains(&self.verify_ticks) {
            return fail("verify_ticks", "must be in 1..=60");
        }
        if !(self.verify_dt_s > 0.0 && self.verify_dt_s.is_finite()) {
            return fail("verify_dt_s", "must be positive");
        }
        Ok(())
    }
}
