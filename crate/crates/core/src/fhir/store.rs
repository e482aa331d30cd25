//! In-process FHIR store backing the embedded test endpoints.

use std::path::Path;

use parking_lot::RwLock;
use serde_json::{json, Value};

use super::path::{Interaction, ParsedPath, SearchParam};
use super::pointer::FhirResource;
use super::FhirError;

/// Read-mostly list of resources in fixture order. Mutation exists for tests
/// that change the source after a share.
#[derive(Debug, Default)]
pub struct MockStore {
    resources: RwLock<Vec<FhirResource>>,
}

impl MockStore {
    /// Loads a fixture file: either a JSON array of resources or a Bundle
    /// whose entries carry resources.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FhirError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| FhirError::BadFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes).map_err(|e| match e {
            FhirError::BadFixture(msg) => FhirError::BadFixture(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FhirError> {
        let value: Value =
            serde_json::from_slice(bytes).map_err(|e| FhirError::BadFixture(e.to_string()))?;
        let items = match value {
            Value::Array(items) => items,
            Value::Object(ref obj) if obj.get("resourceType").and_then(Value::as_str) == Some("Bundle") => obj
                .get("entry")
                .and_then(Value::as_array)
                .map(|entries| {
                    entries
                        .iter()
                        .filter_map(|e| e.get("resource").cloned())
                        .collect()
                })
                .unwrap_or_default(),
            _ => return Err(FhirError::BadFixture("expected an array of resources or a Bundle".into())),
        };
        Self::from_resources(items)
    }

    pub fn from_resources(items: Vec<Value>) -> Result<Self, FhirError> {
        let store = MockStore::default();
        for item in items {
            let res = FhirResource::from_body(item).map_err(|e| FhirError::BadFixture(e.to_string()))?;
            if res.id.is_none() {
                return Err(FhirError::BadFixture(format!("{} without id", res.resource_type)));
            }
            store.upsert_resource(res);
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.resources.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read(&self, resource_type: &str, id: &str) -> Option<FhirResource> {
        self.resources
            .read()
            .iter()
            .find(|r| r.resource_type == resource_type && r.id.as_deref() == Some(id))
            .cloned()
    }

    /// Resources without `meta.versionId` are treated as version "1".
    pub fn vread(&self, resource_type: &str, id: &str, version: &str) -> Option<FhirResource> {
        self.read(resource_type, id).filter(|r| {
            let current = r
                .body
                .pointer("/meta/versionId")
                .and_then(Value::as_str)
                .unwrap_or("1");
            current == version
        })
    }

    /// A `searchset` Bundle of the matching resources, in store order.
    pub fn search(&self, resource_type: &str, params: &[SearchParam]) -> FhirResource {
        let matches: Vec<Value> = self
            .resources
            .read()
            .iter()
            .filter(|r| r.resource_type == resource_type && params.iter().all(|p| matches_param(r, p)))
            .map(|r| {
                json!({
                    "fullUrl": format!("{}/{}", r.resource_type, r.id.as_deref().unwrap_or("")),
                    "resource": r.body,
                })
            })
            .collect();
        let body = json!({
            "resourceType": "Bundle",
            "type": "searchset",
            "total": matches.len(),
            "entry": matches,
        });
        FhirResource::from_body(body).expect("bundle literal is a resource")
    }

    /// Answers a validated path the way a FHIR server would.
    pub fn get(&self, path: &ParsedPath) -> Option<FhirResource> {
        match &path.interaction {
            Interaction::Read { id } => self.read(&path.resource_type, id),
            Interaction::VRead { id, version } => self.vread(&path.resource_type, id, version),
            Interaction::Search { params } => Some(self.search(&path.resource_type, params)),
        }
    }

    /// Inserts or replaces by (type, id).
    pub fn upsert(&self, body: Value) -> Result<(), FhirError> {
        let res = FhirResource::from_body(body)?;
        if res.id.is_none() {
            return Err(FhirError::MalformedResource("resource without id".into()));
        }
        self.upsert_resource(res);
        Ok(())
    }

    fn upsert_resource(&self, res: FhirResource) {
        let mut all = self.resources.write();
        match all
            .iter_mut()
            .find(|r| r.resource_type == res.resource_type && r.id == res.id)
        {
            Some(slot) => *slot = res,
            None => all.push(res),
        }
    }

    pub fn remove(&self, resource_type: &str, id: &str) -> bool {
        let mut all = self.resources.write();
        let before = all.len();
        all.retain(|r| !(r.resource_type == resource_type && r.id.as_deref() == Some(id)));
        all.len() != before
    }
}

/// Search matching: `_id` compares ids; other `_` parameters are ignored;
/// `patient` looks in `patient` and `subject`; any other name matches when a string somewhere under the field of that
/// name equals the value or is a reference ending in `/value`. A
/// comma-separated value matches any of its alternatives.
fn matches_param(res: &FhirResource, param: &SearchParam) -> bool {
    let name = param.name.split(':').next().unwrap_or("");
    let alternatives: Vec<&str> = param.value.split(',').collect();
    if name == "_id" {
        return res.id.as_deref().is_some_and(|id| alternatives.contains(&id));
    }
    if name.starts_with('_') {
        return true;
    }
    // Chained names (subject.name) are matched on their first element only.
    let field = name.split('.').next().unwrap_or(name);
    let fields = match field {
        "patient" => vec!["patient", "subject"],
        other => vec![other],
    };
    fields.iter().filter_map(|f| res.body.get(*f)).any(|value| {
        alternatives.iter().any(|alt| any_string_matches(value, alt))
    })
}

fn any_string_matches(value: &Value, wanted: &str) -> bool {
    match value {
        Value::String(s) => s == wanted || s.strip_suffix(wanted).is_some_and(|head| head.ends_with('/')),
        Value::Array(items) => items.iter().any(|v| any_string_matches(v, wanted)),
        Value::Object(map) => map.values().any(|v| any_string_matches(v, wanted)),
        Value::Bool(b) => wanted == if *b { "true" } else { "false" },
        Value::Number(n) => n.to_string() == wanted,
        Value::Null => false,
    }
}
