//! FHIR REST path grammar.
//!
//! Accepted forms, relative to a FHIR base URL:
//!
//! * `Type/id` (read)
//! * `Type/id/_history/vid` (vread)
//! * `Type?name=value(&name=value)*` (search)
//!
//! `Type` must be in the validator's resource-type list. Ids follow the FHIR
//! id rule (`[A-Za-z0-9\-\.]{1,64}`); `..` is refused anywhere in the path.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static R4_TYPES: &str = include_str!("r4_resource_types.txt");

static ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9\-.]{1,64}$").unwrap());
static PARAM_NAME_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_\-.:]{0,63}$").unwrap());
static PARAM_VALUE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[A-Za-z0-9\-._~:,|@!$'()*+/]|%[0-9A-Fa-f]{2})+$").unwrap()
});

static R4_VALIDATOR: LazyLock<PathValidator> =
    LazyLock::new(|| PathValidator::new(r4_resource_types().iter().copied()));

/// The FHIR R4 resource type names.
pub fn r4_resource_types() -> Vec<&'static str> {
    R4_TYPES.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid FHIR path at byte {position}: {reason}")]
pub struct InvalidPath {
    pub position: usize,
    pub reason: String,
}

impl InvalidPath {
    fn at(position: usize, reason: impl Into<String>) -> Self {
        InvalidPath {
            position,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParam {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    Read { id: String },
    VRead { id: String, version: String },
    Search { params: Vec<SearchParam> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPath {
    pub resource_type: String,
    pub interaction: Interaction,
}

impl ParsedPath {
    pub fn id(&self) -> Option<&str> {
        match &self.interaction {
            Interaction::Read { id } | Interaction::VRead { id, .. } => Some(id),
            Interaction::Search { .. } => None,
        }
    }

    pub fn search_params(&self) -> Option<&[SearchParam]> {
        match &self.interaction {
            Interaction::Search { params } => Some(params),
            _ => None,
        }
    }

    pub fn is_search(&self) -> bool {
        matches!(self.interaction, Interaction::Search { .. })
    }
}

impl fmt::Display for ParsedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.interaction {
            Interaction::Read { id } => write!(f, "{}/{}", self.resource_type, id),
            Interaction::VRead { id, version } => {
                write!(f, "{}/{}/_history/{}", self.resource_type, id, version)
            }
            Interaction::Search { params } => {
                write!(f, "{}?", self.resource_type)?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str("&")?;
                    }
                    write!(f, "{}={}", p.name, p.value)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathValidator {
    types: BTreeSet<String>,
}

impl PathValidator {
    pub fn new<I, S>(types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PathValidator {
            types: types.into_iter().map(Into::into).collect(),
        }
    }

    /// Shared validator over the full R4 type list.
    pub fn r4() -> &'static PathValidator {
        &R4_VALIDATOR
    }

    /// Restricts the R4 list to `allowed`. An empty list means no restriction.
    pub fn r4_restricted(allowed: &[String]) -> Result<Self, String> {
        if allowed.is_empty() {
            return Ok(Self::r4().clone());
        }
        if let Some(unknown) = allowed.iter().find(|t| !Self::r4().allows(t)) {
            return Err(format!("{unknown} is not an R4 resource type"));
        }
        Ok(PathValidator::new(allowed.iter().cloned()))
    }

    pub fn allows(&self, resource_type: &str) -> bool {
        self.types.contains(resource_type)
    }

    pub fn resource_types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }

    pub fn validate(&self, path: &str) -> Result<ParsedPath, InvalidPath> {
        validate_reference_path(self, path)
    }
}

pub fn validate_reference_path(validator: &PathValidator, path: &str) -> Result<ParsedPath, InvalidPath> {
    if path.is_empty() {
        return Err(InvalidPath::at(0, "empty path"));
    }
    if let Some(pos) = path.find("..") {
        return Err(InvalidPath::at(pos, "'..' is not allowed"));
    }

    let type_end = path
        .find(['/', '?'])
        .unwrap_or(path.len());
    let resource_type = &path[..type_end];
    if resource_type.is_empty() {
        return Err(InvalidPath::at(0, "missing resource type"));
    }
    if !validator.allows(resource_type) {
        return Err(InvalidPath::at(0, format!("unknown resource type '{resource_type}'")));
    }
    if type_end == path.len() {
        return Err(InvalidPath::at(type_end, "expected '/' or '?' after resource type"));
    }

    let rest_start = type_end + 1;
    let rest = &path[rest_start..];
    let interaction = if path.as_bytes()[type_end] == b'/' {
        parse_instance(rest, rest_start)?
    } else {
        parse_search(rest, rest_start)?
    };
    Ok(ParsedPath {
        resource_type: resource_type.to_string(),
        interaction,
    })
}

fn check_id(segment: &str, offset: usize, what: &str) -> Result<(), InvalidPath> {
    if ID_RE.is_match(segment) && segment != "." {
        Ok(())
    } else {
        Err(InvalidPath::at(offset, format!("invalid {what} '{segment}'")))
    }
}

fn parse_instance(rest: &str, offset: usize) -> Result<Interaction, InvalidPath> {
    let segments: Vec<&str> = rest.split('/').collect();
    let mut starts = Vec::with_capacity(segments.len());
    let mut pos = offset;
    for s in &segments {
        starts.push(pos);
        pos += s.len() + 1;
    }
    let id = segments[0];
    check_id(id, starts[0], "resource id")?;
    match segments.len() {
        1 => Ok(Interaction::Read { id: id.to_string() }),
        2 => Err(InvalidPath::at(starts[1], "expected '_history/<version>'")),
        3 => {
            if segments[1] != "_history" {
                return Err(InvalidPath::at(starts[1], "expected '_history'"));
            }
            check_id(segments[2], starts[2], "version id")?;
            Ok(Interaction::VRead {
                id: id.to_string(),
                version: segments[2].to_string(),
            })
        }
        _ => Err(InvalidPath::at(starts[3], "unexpected trailing segment")),
    }
}

fn parse_search(query: &str, offset: usize) -> Result<Interaction, InvalidPath> {
    if query.is_empty() {
        return Err(InvalidPath::at(offset, "empty search query"));
    }
    let mut params = Vec::new();
    let mut pos = offset;
    for pair in query.split('&') {
        let Some(eq) = pair.find('=') else {
            return Err(InvalidPath::at(pos, "search parameter without '='"));
        };
        let (name, value) = (&pair[..eq], &pair[eq + 1..]);
        if !PARAM_NAME_RE.is_match(name) {
            return Err(InvalidPath::at(pos, format!("invalid search parameter name '{name}'")));
        }
        if !PARAM_VALUE_RE.is_match(value) {
            return Err(InvalidPath::at(pos + eq + 1, format!("invalid value for '{name}'")));
        }
        params.push(SearchParam {
            name: name.to_string(),
            value: value.to_string(),
        });
        pos += pair.len() + 1;
    }
    Ok(Interaction::Search { params })
}
