use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calculus::CellConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: String,
    pub old_value: Value,
    pub new_value: Value,
}

/// One entry per differing field, in canonical field order.
pub fn diff_configs(old: &CellConfig, new: &CellConfig) -> Vec<FieldChange> {
    old.field_values()
        .into_iter()
        .zip(new.field_values())
        .filter(|((_, a), (_, b))| a != b)
        .map(|((field, a), (_, b))| FieldChange {
            field: field.to_string(),
            old_value: a,
            new_value: b,
        })
        .collect()
}

/// Like [`diff_configs`], but a missing old config reports every field with
/// a null old value.
pub fn diff_against(old: Option<&CellConfig>, new: &CellConfig) -> Vec<FieldChange> {
    match old {
        Some(old) => diff_configs(old, new),
        None => new
            .field_values()
            .into_iter()
            .map(|(field, v)| FieldChange {
                field: field.to_string(),
                old_value: Value::Null,
                new_value: v,
            })
            .collect(),
    }
}
