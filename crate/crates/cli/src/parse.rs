//! Problem files: one JSON object with a `family` tag.

use std::fmt;
use std::path::Path;

use tnsolve::{Error, ProblemSpec};

/// A spec file that could not be turned into a valid [`ProblemSpec`].
#[derive(Debug)]
pub struct ParseError {
    pub origin: String,
    /// 1-based line and column, when known.
    pub position: Option<(usize, usize)>,
    /// Offending field path such as `weights[1]`, for validation errors.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some((line, col)) = self.position {
            write!(f, ":{line}:{col}")?;
        }
        match &self.field {
            Some(field) => write!(f, ": field `{field}`: {}", self.message),
            None => write!(f, ": {}", self.message),
        }
    }
}

impl std::error::Error for ParseError {}

pub fn parse_spec(path: &Path) -> Result<ProblemSpec, ParseError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ParseError {
        origin: origin.clone(),
        position: None,
        field: None,
        message: e.to_string(),
    })?;
    parse_spec_str(&text, &origin)
}

/// Parses and validates `text`; `origin` names the source in errors.
pub fn parse_spec_str(text: &str, origin: &str) -> Result<ProblemSpec, ParseError> {
    let spec = match deserialize(text) {
        Ok(spec) => spec,
        Err(_) if !family_leads(text) => {
            // Out-of-order objects are buffered and lose error positions, so
            // retry with `family` in front and point at the key instead.
            let rewritten = family_first(text).map_err(|e| from_json(origin, e, None))?;
            deserialize(&rewritten).map_err(|(e, field)| {
                let mut err = from_json(origin, e, field);
                err.position = err.field.as_deref().and_then(|f| locate_field(text, f));
                err
            })?
        }
        Err((e, field)) => return Err(from_json(origin, e, field)),
    };
    spec.normalize().map_err(|e| match e {
        Error::Spec { field, reason } => ParseError {
            origin: origin.to_string(),
            position: locate_field(text, &field),
            field: Some(field),
            message: reason,
        },
        other => ParseError {
            origin: origin.to_string(),
            position: None,
            field: None,
            message: other.to_string(),
        },
    })
}

fn family_leads(text: &str) -> bool {
    text.trim_start()
        .strip_prefix('{')
        .is_some_and(|rest| rest.trim_start().starts_with("\"family\""))
}

/// The error comes with the path of the offending field, if any.
fn deserialize(text: &str) -> Result<ProblemSpec, (serde_json::Error, Option<String>)> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let path = e.path().to_string();
        (e.into_inner(), (path != ".").then_some(path))
    })?;
    de.end().map_err(|e| (e, None))?;
    Ok(spec)
}

fn from_json(origin: &str, e: serde_json::Error, field: Option<String>) -> ParseError {
    let mut message = e.to_string();
    if let Some(i) = message.rfind(" at line ") {
        message.truncate(i);
    }
    ParseError {
        origin: origin.to_string(),
        position: (e.line() > 0).then(|| (e.line(), e.column())),
        field,
        message,
    }
}

/// The same object with `family` moved to the front.
fn family_first(text: &str) -> Result<String, serde_json::Error> {
    let value: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    let mut out = String::from("{");
    if let Some(family) = value.get("family") {
        out.push_str(&format!("\"family\":{family}"));
    }
    for (key, v) in value.iter().filter(|(k, _)| k.as_str() != "family") {
        if out.len() > 1 {
            out.push(',');
        }
        out.push_str(&format!("{}:{v}", serde_json::Value::from(key.as_str())));
    }
    out.push('}');
    Ok(out)
}

/// Position of the key that a field path like `weights[1]` starts with.
/// Only a hint: nested objects can reuse key names.
fn locate_field(text: &str, field: &str) -> Option<(usize, usize)> {
    let key = field.split(['[', '.']).next()?;
    let offset = text.find(&format!("\"{key}\""))?;
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    Some((line, col))
}

/// Canonical JSON for a spec; [`parse_spec_str`] reads it back unchanged.
pub fn emit_spec(spec: &ProblemSpec) -> String {
    serde_json::to_string_pretty(spec).expect("specs serialize")
}
