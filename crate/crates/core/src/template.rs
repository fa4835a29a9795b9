//! Templated production recipes: `${name}` placeholders, `$$` for a
//! literal dollar, nothing else. Parsing and instantiation are pure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::types::ParamValue;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeTemplate {
    pub text: String,
    /// Placeholder names in order of first appearance, deduplicated.
    pub placeholders: Vec<String>,
}

#[derive(Debug, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

fn is_name_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric()
}

fn scan(text: &str) -> Result<Vec<Segment>, VdcError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        if c != '$' {
            literal.push(c);
            continue;
        }
        match chars.peek().copied() {
            Some((_, '$')) => {
                chars.next();
                literal.push('$');
            }
            Some((_, '{')) => {
                chars.next();
                let mut name = String::new();
                let mut closed = false;
                for (npos, nc) in chars.by_ref() {
                    if nc == '}' {
                        closed = true;
                        break;
                    }
                    let ok = if name.is_empty() {
                        is_name_start(nc)
                    } else {
                        is_name_char(nc)
                    };
                    if !ok {
                        return Err(VdcError::BadPlaceholder {
                            position: npos,
                            detail: format!("invalid character {nc:?} in placeholder name"),
                        });
                    }
                    name.push(nc);
                }
                if !closed {
                    return Err(VdcError::UnterminatedPlaceholder(pos));
                }
                if name.is_empty() {
                    return Err(VdcError::BadPlaceholder {
                        position: pos,
                        detail: "empty placeholder name".to_string(),
                    });
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(name));
            }
            other => {
                return Err(VdcError::BadPlaceholder {
                    position: pos,
                    detail: match other {
                        Some((_, c)) => format!("`$` followed by {c:?}"),
                        None => "`$` at end of input".to_string(),
                    },
                });
            }
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

pub fn parse_template(text: &str) -> Result<RecipeTemplate, VdcError> {
    let segments = scan(text)?;
    let mut placeholders = Vec::new();
    for seg in &segments {
        if let Segment::Placeholder(name) = seg {
            if !placeholders.contains(name) {
                placeholders.push(name.clone());
            }
        }
    }
    Ok(RecipeTemplate {
        text: text.to_string(),
        placeholders,
    })
}

pub fn render_value(value: &ParamValue) -> String {
    match value {
        ParamValue::Int(i) => i.to_string(),
        ParamValue::Bool(b) => b.to_string(),
        ParamValue::Str(s) | ParamValue::Decimal(s) => s.clone(),
    }
}

/// Substitute every placeholder. Bindings beyond the template's
/// placeholders are permitted (they may be consumed internally by the
/// transformation); missing ones are an error listing all unbound names.
pub fn instantiate(
    template: &RecipeTemplate,
    bindings: &BTreeMap<String, ParamValue>,
) -> Result<String, VdcError> {
    let unbound: Vec<String> = template
        .placeholders
        .iter()
        .filter(|p| !bindings.contains_key(*p))
        .cloned()
        .collect();
    if !unbound.is_empty() {
        return Err(VdcError::UnboundPlaceholder(unbound));
    }
    let segments = scan(&template.text).expect("template text was validated at parse time");
    let mut out = String::with_capacity(template.text.len());
    for seg in segments {
        match seg {
            Segment::Literal(s) => out.push_str(&s),
            Segment::Placeholder(name) => out.push_str(&render_value(&bindings[&name])),
        }
    }
    Ok(out)
}
