use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::path::{ParsedPath, PathValidator};
use super::FhirError;
use crate::canonical::{canonical_value_bytes, sha256, to_canonical_vec, Digest};
use crate::crypto::EncryptionPublicKey;

/// A FHIR resource as fetched from a source system.
#[derive(Debug, Clone, PartialEq)]
pub struct FhirResource {
    pub resource_type: String,
    pub id: Option<String>,
    pub body: Value,
}

impl FhirResource {
    /// Builds a resource from its JSON body; `resourceType` is required and
    /// `id`, when present, must be a string.
    pub fn from_body(body: Value) -> Result<Self, FhirError> {
        let obj = body
            .as_object()
            .ok_or_else(|| FhirError::MalformedResource("resource body is not an object".into()))?;
        let resource_type = obj
            .get("resourceType")
            .and_then(Value::as_str)
            .ok_or_else(|| FhirError::MalformedResource("missing resourceType".into()))?
            .to_string();
        let id = match obj.get("id") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(FhirError::MalformedResource("id is not a string".into())),
        };
        Ok(FhirResource {
            resource_type,
            id,
            body,
        })
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_value_bytes(&self.body)
    }

    /// Digest of the canonical body.
    pub fn digest(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }

    /// Whether this resource is what `path` addresses: the same type and id
    /// for reads, a Bundle for searches.
    pub fn answers(&self, path: &ParsedPath) -> bool {
        if path.is_search() {
            return self.resource_type == "Bundle";
        }
        self.resource_type == path.resource_type && self.id.as_deref() == path.id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrity {
    Verified,
    HashMismatch,
}

/// Locator for off-chain data plus the digest of what was shared. Its
/// serialized size does not depend on the size of the resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePointer {
    pub base_url: String,
    pub path: String,
    pub data_hash: Digest,
    pub created_at: u64,
    pub expires_at: Option<u64>,
    pub created_by: EncryptionPublicKey,
}

impl ReferencePointer {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("pointer serialization is infallible")
    }

    pub fn is_expired(&self, now: u64) -> bool {
        self.expires_at.is_some_and(|at| now >= at)
    }

    pub fn check_well_formed(&self, validator: &PathValidator) -> Result<ParsedPath, FhirError> {
        check_base_url(&self.base_url)?;
        if let Some(at) = self.expires_at {
            if at <= self.created_at {
                return Err(FhirError::InvalidExpiry);
            }
        }
        Ok(validator.validate(&self.path)?)
    }

    pub fn integrity_of(&self, resource: &FhirResource) -> Integrity {
        if resource.digest() == self.data_hash {
            Integrity::Verified
        } else {
            Integrity::HashMismatch
        }
    }
}

/// Absolute http(s) URL without query or fragment. Returns it with any
/// trailing slash removed.
pub fn check_base_url(base_url: &str) -> Result<String, FhirError> {
    let url = reqwest::Url::parse(base_url)
        .map_err(|e| FhirError::InvalidBaseUrl(format!("{base_url}: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") || !url.has_host() {
        return Err(FhirError::InvalidBaseUrl(format!("{base_url}: expected an http(s) URL")));
    }
    if url.query().is_some() || url.fragment().is_some() {
        return Err(FhirError::InvalidBaseUrl(format!("{base_url}: query and fragment not allowed")));
    }
    Ok(base_url.trim_end_matches('/').to_string())
}

/// Builds a pointer to an already-fetched `resource`.
pub fn make_reference_pointer(
    validator: &PathValidator,
    base_url: &str,
    path: &str,
    resource: &FhirResource,
    expires_at: Option<u64>,
    created_by: EncryptionPublicKey,
    now: u64,
) -> Result<ReferencePointer, FhirError> {
    let parsed = validator.validate(path)?;
    if !resource.answers(&parsed) {
        return Err(FhirError::MalformedResource(format!(
            "resource {}/{} does not answer {path}",
            resource.resource_type,
            resource.id.as_deref().unwrap_or("-")
        )));
    }
    let rp = ReferencePointer {
        base_url: check_base_url(base_url)?,
        path: path.to_string(),
        data_hash: resource.digest(),
        created_at: now,
        expires_at,
        created_by,
    };
    rp.check_well_formed(validator)?;
    Ok(rp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_key_material;
    use serde_json::json;

    fn patient(name: &str) -> FhirResource {
        FhirResource::from_body(json!({"resourceType": "Patient", "id": "pt-1", "name": [{"family": name}]})).unwrap()
    }

    #[test]
    fn resource_requires_resource_type() {
        assert!(FhirResource::from_body(json!({"id": "x"})).is_err());
        assert!(FhirResource::from_body(json!([1])).is_err());
        assert!(FhirResource::from_body(json!({"resourceType": "Patient", "id": 3})).is_err());
    }

    #[test]
    fn hash_is_deterministic_and_key_order_independent() {
        let a = patient("Smith");
        let b = FhirResource::from_body(
            serde_json::from_str(r#"{"name":[{"family":"Smith"}],"id":"pt-1","resourceType":"Patient"}"#).unwrap(),
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), patient("Smyth").digest());
    }

    #[test]
    fn pointer_checks() {
        let who = generate_key_material().unwrap().encryption_public();
        let v = PathValidator::r4();
        let res = patient("Smith");
        let rp = make_reference_pointer(v, "http://fhir.example/r4/", "Patient/pt-1", &res, None, who, 10).unwrap();
        assert_eq!(rp.base_url, "http://fhir.example/r4");
        assert_eq!(rp.integrity_of(&res), Integrity::Verified);
        assert_eq!(rp.integrity_of(&patient("Other")), Integrity::HashMismatch);

        assert!(matches!(
            make_reference_pointer(v, "http://fhir.example", "Patient/pt-2", &res, None, who, 10),
            Err(FhirError::MalformedResource(_))
        ));
        assert!(matches!(
            make_reference_pointer(v, "ftp://fhir.example", "Patient/pt-1", &res, None, who, 10),
            Err(FhirError::InvalidBaseUrl(_))
        ));
        assert!(matches!(
            make_reference_pointer(v, "http://fhir.example", "Patient/pt-1", &res, Some(10), who, 10),
            Err(FhirError::InvalidExpiry)
        ));
        assert!(matches!(
            make_reference_pointer(v, "http://fhir.example", "Nope/pt-1", &res, None, who, 10),
            Err(FhirError::InvalidPath(_))
        ));
    }

    #[test]
    fn expiry() {
        let who = generate_key_material().unwrap().encryption_public();
        let rp = make_reference_pointer(
            PathValidator::r4(),
            "http://fhir.example",
            "Patient/pt-1",
            &patient("x"),
            Some(20),
            who,
            10,
        )
        .unwrap();
        assert!(!rp.is_expired(19));
        assert!(rp.is_expired(20));
    }
}
