//! Database connector: fetches resources for pointers, from embedded stores
//! or from remote FHIR servers over HTTP.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::Value;

use super::path::PathValidator;
use super::pointer::{check_base_url, make_reference_pointer, FhirResource, Integrity, ReferencePointer};
use super::store::MockStore;
use super::{FetchCause, FhirError};
use crate::crypto::EncryptionPublicKey;

pub const DEFAULT_FHIR_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Clone)]
pub struct FetchedResource {
    pub resource: FhirResource,
    pub integrity: Integrity,
}

pub struct FhirConnector {
    validator: PathValidator,
    embedded: HashMap<String, Arc<MockStore>>,
    http: reqwest::Client,
}

impl FhirConnector {
    pub fn new(validator: PathValidator, timeout_ms: u64) -> Result<Self, FhirError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| FhirError::FetchFailed(FetchCause::Unreachable(e.to_string())))?;
        Ok(FhirConnector {
            validator,
            embedded: HashMap::new(),
            http,
        })
    }

    /// Requests for `base_url` are answered by `store` in-process instead of
    /// going over the network.
    pub fn with_embedded(mut self, base_url: &str, store: Arc<MockStore>) -> Result<Self, FhirError> {
        self.embedded.insert(check_base_url(base_url)?, store);
        Ok(self)
    }

    pub fn validator(&self) -> &PathValidator {
        &self.validator
    }

    pub fn embedded_store(&self, base_url: &str) -> Option<&Arc<MockStore>> {
        self.embedded.get(base_url.trim_end_matches('/'))
    }

    pub async fn fetch(&self, base_url: &str, path: &str) -> Result<FhirResource, FhirError> {
        let parsed = self.validator.validate(path)?;
        let base = check_base_url(base_url)?;
        let resource = if let Some(store) = self.embedded.get(&base) {
            store
                .get(&parsed)
                .ok_or(FhirError::FetchFailed(FetchCause::NotFound))?
        } else {
            self.fetch_http(&base, path).await?
        };
        if !resource.answers(&parsed) {
            return Err(FhirError::FetchFailed(FetchCause::BadBody(format!(
                "{} does not answer {path}",
                resource.resource_type
            ))));
        }
        Ok(resource)
    }

    async fn fetch_http(&self, base: &str, path: &str) -> Result<FhirResource, FhirError> {
        let url = format!("{base}/{path}");
        let response = self
            .http
            .get(&url)
            .header(reqwest::header::ACCEPT, "application/fhir+json")
            .send()
            .await
            .map_err(|e| FhirError::FetchFailed(FetchCause::Unreachable(e.to_string())))?;
        match response.status() {
            s if s.is_success() => {}
            StatusCode::NOT_FOUND | StatusCode::GONE => return Err(FhirError::FetchFailed(FetchCause::NotFound)),
            s => return Err(FhirError::FetchFailed(FetchCause::Status(s.as_u16()))),
        }
        let body: Value = response
            .json()
            .await
            .map_err(|e| FhirError::FetchFailed(FetchCause::BadBody(e.to_string())))?;
        FhirResource::from_body(body).map_err(|e| FhirError::FetchFailed(FetchCause::BadBody(e.to_string())))
    }

    /// Fetches the resource at (`base_url`, `path`) now and builds a pointer
    /// carrying its digest.
    pub async fn make_reference_pointer(
        &self,
        base_url: &str,
        path: &str,
        expires_at: Option<u64>,
        created_by: EncryptionPublicKey,
        now: u64,
    ) -> Result<ReferencePointer, FhirError> {
        if expires_at.is_some_and(|at| at <= now) {
            return Err(FhirError::InvalidExpiry);
        }
        let resource = self.fetch(base_url, path).await?;
        make_reference_pointer(&self.validator, base_url, path, &resource, expires_at, created_by, now)
    }

    /// Fetches what `rp` points at and compares it to the shared digest. A
    /// mismatch is reported, not treated as an error.
    pub async fn fetch_resource(&self, rp: &ReferencePointer, now: u64) -> Result<FetchedResource, FhirError> {
        rp.check_well_formed(&self.validator)?;
        if rp.is_expired(now) {
            return Err(FhirError::Expired {
                expires_at: rp.expires_at.unwrap_or_default(),
            });
        }
        let resource = self.fetch(&rp.base_url, &rp.path).await?;
        let integrity = rp.integrity_of(&resource);
        Ok(FetchedResource { resource, integrity })
    }
}
