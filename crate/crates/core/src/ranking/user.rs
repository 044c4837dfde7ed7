use serde::{Deserialize, Serialize};

use super::{AttrValue, UserProfile};
use crate::error::{BiasError, Result};

/// A non-protected attribute that participates in the user distance.
/// Numeric attributes need a declared `range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantAttribute {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
}

impl RelevantAttribute {
    pub fn categorical(name: impl Into<String>) -> Self {
        RelevantAttribute {
            name: name.into(),
            range: None,
        }
    }

    pub fn numeric(name: impl Into<String>, range: f64) -> Self {
        RelevantAttribute {
            name: name.into(),
            range: Some(range),
        }
    }
}

fn lookup<'a>(u: &'a UserProfile, name: &str) -> Result<&'a AttrValue> {
    u.other().get(name).ok_or_else(|| {
        BiasError::Profile(format!(
            "user {:?} has no non-protected attribute {name:?}",
            u.user_id()
        ))
    })
}

/// Gower-style mean dissimilarity over `relevant` attributes.
///
/// Categorical attributes contribute 0 on a match and 1 otherwise; numeric
/// ones contribute `|x - y| / range`, capped at 1. Only non-protected
/// attributes are ever read.
pub fn user_distance(
    u1: &UserProfile,
    u2: &UserProfile,
    relevant: &[RelevantAttribute],
) -> Result<f64> {
    if relevant.is_empty() {
        return Err(BiasError::Parameter(
            "user distance needs at least one relevant attribute".into(),
        ));
    }
    let mut total = 0.0;
    for attr in relevant {
        let a = lookup(u1, &attr.name)?;
        let b = lookup(u2, &attr.name)?;
        total += match (a, b) {
            (AttrValue::Number(x), AttrValue::Number(y)) => {
                let range = attr.range.ok_or_else(|| {
                    BiasError::Parameter(format!(
                        "numeric attribute {:?} has no declared range",
                        attr.name
                    ))
                })?;
                if !(range > 0.0 && range.is_finite()) {
                    return Err(BiasError::Parameter(format!(
                        "attribute {:?}: range must be positive, got {range}",
                        attr.name
                    )));
                }
                ((x - y).abs() / range).min(1.0)
            }
            (AttrValue::Text(x), AttrValue::Text(y)) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            _ => {
                return Err(BiasError::Profile(format!(
                    "attribute {:?} mixes numeric and categorical values",
                    attr.name
                )))
            }
        };
    }
    Ok(total / relevant.len() as f64)
}
