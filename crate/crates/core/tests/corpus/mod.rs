//! FHIR path corpora shared by the grammar tests and the acceptance suite.

pub const POSITIVE: [&str; 40] = [
    "Patient/pt-1",
    "Patient/123",
    "Patient/a.b-c",
    "Observation/obs-1",
    "Condition/cond-2",
    "DiagnosticReport/dr-1",
    "MedicationRequest/med-1",
    "Encounter/enc.2019-04-01",
    "Procedure/PROC42",
    "AllergyIntolerance/ai-7",
    "ImagingStudy/1.2.840.113619",
    "Specimen/spec-001",
    "CarePlan/cp1",
    "Practitioner/dr-smith",
    "Organization/vumc",
    "Patient/pt-1/_history/1",
    "Observation/obs-3/_history/2a",
    "DocumentReference/doc-9/_history/v.3",
    "Patient/x/_history/1-2",
    "Bundle/b1",
    "Patient?name=smith",
    "Patient?_id=pt-1",
    "Patient?_id=pt-1,pt-2",
    "Observation?patient=pt-1",
    "Observation?patient=Patient/pt-1",
    "Observation?subject=Patient/pt-1&code=http://loinc.org|2160-0",
    "Observation?code=21908-9&_count=10",
    "Observation?date=ge2019-01-01&date=le2019-12-31",
    "Observation?value-quantity=gt5.4|http://unitsofmeasure.org|mg",
    "Condition?clinical-status=active",
    "Condition?patient=pt-2&category=problem-list-item",
    "DiagnosticReport?patient=pt-1&_sort=-date",
    "MedicationRequest?status=active&intent=order",
    "Patient?name:exact=O'Brien",
    "Patient?family:contains=van%20der",
    "Patient?birthdate=1970-01-01",
    "Patient?identifier=urn:oid:1.2.36|12345",
    "Encounter?subject.name=peter",
    "Observation?_lastUpdated=gt2020-01-01T00:00:00Z",
    "Procedure?_include=Procedure:patient",
];

pub const NEGATIVE: [&str; 40] = [
    "",
    "/",
    "Patient",
    "Patient/",
    "Patient?",
    "NotAType/5",
    "patient/pt-1",
    "PATIENT/pt-1",
    "../Patient/pt-1",
    "Patient/../Observation/obs-1",
    "Patient/pt-1/..",
    "Patient/..",
    "Patient/%2e%2e",
    "Patient/pt-1/../../etc/passwd",
    "http://evil.example/Patient/1",
    "https://oncology-a.test/fhir/Patient/pt-1",
    "//evil.example/Patient/1",
    "/Patient/pt-1",
    "Patient/pt 1",
    "Patient/pt_1",
    "Patient/pt-1/",
    "Patient/pt-1/Observation",
    "Patient/pt-1/_history",
    "Patient/pt-1/_history/",
    "Patient/pt-1/history/1",
    "Patient/pt-1/_history/1/extra",
    "Patient/aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa",
    "Patient?name",
    "Patient?=smith",
    "Patient?name=",
    "Patient?name=smith&",
    "Patient?&name=smith",
    "Patient?name=a b",
    "Patient?na me=x",
    "Patient?name=x#frag",
    "Patient?name=<script>",
    "Patient?name=%zz",
    "Observation?patient=\"pt-1\"",
    "Patient/pt-1?name=x",
    "Patient\\pt-1",
];
