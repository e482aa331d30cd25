#![allow(dead_code)]

use fhirchain_core::crypto::{create_access_token, generate_key_material, AccessToken, KeyMaterial};
use fhirchain_core::fhir::{make_reference_pointer, FhirResource, PathValidator, ReferencePointer};
use serde_json::json;

pub const BASE: &str = "http://oncology-a.test/fhir";

pub struct Provider {
    pub handle: String,
    pub keys: KeyMaterial,
}

impl Provider {
    pub fn new(handle: &str) -> Provider {
        Provider {
            handle: handle.to_string(),
            keys: generate_key_material().unwrap(),
        }
    }

    pub fn pointer(&self, id: &str, now: u64, expires_at: Option<u64>) -> ReferencePointer {
        let resource = FhirResource::from_body(json!({"resourceType": "Patient", "id": id})).unwrap();
        make_reference_pointer(
            PathValidator::r4(),
            BASE,
            &format!("Patient/{id}"),
            &resource,
            expires_at,
            self.keys.encryption_public(),
            now,
        )
        .unwrap()
    }

    pub fn token_for(&self, to: &Provider, name: &str, now: u64) -> AccessToken {
        let rp = self.pointer("pt-1", now, None);
        create_access_token(&rp, name, &self.keys.signing, &to.keys.encryption_public(), now).unwrap()
    }
}
