//! HTTP record and device-profile types, the line-oriented record format,
//! and the payload check that splits traffic into suspicious and normal
//! groups.
//!
//! A record captures one observed HTTP GET/POST request: where it went
//! (IP, port, host) and what it carried (request line, cookie, body).
//! Labeling scans the three content fields for the device profile's
//! identifier values, including their MD5/SHA1 hex digests in both cases.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use md5::Md5;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::bytes::{contains_subslice, contains_token_ci};

/// One observed HTTP request. Immutable after labeling; `labels` is the
/// only field written post-parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRecord {
    /// Opaque identifier of the generating application.
    pub app_id: String,
    /// Destination IPv4 address.
    pub dst_ip: Ipv4Addr,
    /// Destination port.
    pub dst_port: u16,
    /// FQDN from the HTTP Host header, lowercased. Non-empty, no whitespace.
    pub host: String,
    /// Method + URI + version bytes. Non-empty.
    pub request_line: Vec<u8>,
    /// Cookie header bytes, possibly empty.
    pub cookie: Vec<u8>,
    /// Message body bytes, possibly empty.
    pub body: Vec<u8>,
    /// Sensitive-information kinds found by labeling. Empty until labeled.
    pub labels: BTreeSet<SensitiveKind>,
}

/// The identifier values (and carrier) whose presence makes a record
/// sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub android_id: String,
    pub imei: String,
    pub imsi: String,
    pub sim_serial: String,
    pub carrier: String,
}

/// The kinds of sensitive information a record can carry. Each variant
/// maps to exactly one (profile field, digest) pair.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveKind {
    AndroidId,
    AndroidIdMd5,
    AndroidIdSha1,
    Imei,
    ImeiMd5,
    ImeiSha1,
    Imsi,
    SimSerial,
    Carrier,
}

impl SensitiveKind {
    pub const ALL: [SensitiveKind; 9] = [
        SensitiveKind::AndroidId,
        SensitiveKind::AndroidIdMd5,
        SensitiveKind::AndroidIdSha1,
        SensitiveKind::Imei,
        SensitiveKind::ImeiMd5,
        SensitiveKind::ImeiSha1,
        SensitiveKind::Imsi,
        SensitiveKind::SimSerial,
        SensitiveKind::Carrier,
    ];
}

impl fmt::Display for SensitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SensitiveKind::AndroidId => "android_id",
            SensitiveKind::AndroidIdMd5 => "android_id_md5",
            SensitiveKind::AndroidIdSha1 => "android_id_sha1",
            SensitiveKind::Imei => "imei",
            SensitiveKind::ImeiMd5 => "imei_md5",
            SensitiveKind::ImeiSha1 => "imei_sha1",
            SensitiveKind::Imsi => "imsi",
            SensitiveKind::SimSerial => "sim_serial",
            SensitiveKind::Carrier => "carrier",
        };
        f.write_str(s)
    }
}

/// Tag for one entry of an identifier's variant set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantTag {
    Raw,
    Md5,
    Sha1,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed record line: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("dst_port {0} out of range 0..=65535")]
    PortOutOfRange(i64),
    #[error("invalid field {field}: {reason}")]
    InvalidField {
        field: &'static str,
        reason: String,
    },
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
}

/// Wire form of a record: one JSON object per line. Byte-string fields are
/// base64; an empty string stands for an empty component. `labels` is
/// optional on input and always written on output.
#[derive(Serialize, Deserialize)]
struct WireRecord {
    app_id: String,
    dst_ip: String,
    dst_port: i64,
    host: String,
    request_line_b64: String,
    cookie_b64: String,
    body_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<SensitiveKind>>,
}

fn decode_b64(field: &'static str, s: &str) -> Result<Vec<u8>, RecordError> {
    BASE64.decode(s).map_err(|e| RecordError::InvalidField {
        field,
        reason: format!("invalid base64: {e}"),
    })
}

impl HttpRecord {
    /// Builds a record, checking the field invariants. `labels` starts
    /// empty.
    pub fn new(
        app_id: impl Into<String>,
        dst_ip: Ipv4Addr,
        dst_port: u16,
        host: impl Into<String>,
        request_line: Vec<u8>,
        cookie: Vec<u8>,
        body: Vec<u8>,
    ) -> Result<Self, RecordError> {
        let host = host.into();
        if host.is_empty() {
            return Err(RecordError::InvalidField {
                field: "host",
                reason: "must be non-empty".into(),
            });
        }
        if host.chars().any(char::is_whitespace) {
            return Err(RecordError::InvalidField {
                field: "host",
                reason: "must not contain whitespace".into(),
            });
        }
        if request_line.is_empty() {
            return Err(RecordError::InvalidField {
                field: "request_line",
                reason: "must be non-empty".into(),
            });
        }
        Ok(HttpRecord {
            app_id: app_id.into(),
            dst_ip,
            dst_port,
            host,
            request_line,
            cookie,
            body,
            labels: BTreeSet::new(),
        })
    }

    /// A record is suspicious iff labeling found any sensitive kind.
    pub fn is_suspicious(&self) -> bool {
        !self.labels.is_empty()
    }

    /// Serializes to one JSON line (no trailing newline). Field bytes
    /// round-trip exactly through `parse_record`.
    pub fn to_json_line(&self) -> String {
        let wire = WireRecord {
            app_id: self.app_id.clone(),
            dst_ip: self.dst_ip.to_string(),
            dst_port: i64::from(self.dst_port),
            host: self.host.clone(),
            request_line_b64: BASE64.encode(&self.request_line),
            cookie_b64: BASE64.encode(&self.cookie),
            body_b64: BASE64.encode(&self.body),
            labels: Some(self.labels.iter().copied().collect()),
        };
        serde_json::to_string(&wire).expect("record serialization cannot fail")
    }
}

/// Parses one line of the JSONL record format.
pub fn parse_record(line: &str) -> Result<HttpRecord, RecordError> {
    let wire: WireRecord = serde_json::from_str(line)?;
    if !(0..=65535).contains(&wire.dst_port) {
        return Err(RecordError::PortOutOfRange(wire.dst_port));
    }
    let dst_ip: Ipv4Addr = wire.dst_ip.parse().map_err(|_| RecordError::InvalidField {
        field: "dst_ip",
        reason: format!("not a dotted-quad IPv4 address: {:?}", wire.dst_ip),
    })?;
    let mut record = HttpRecord::new(
        wire.app_id,
        dst_ip,
        wire.dst_port as u16,
        wire.host,
        decode_b64("request_line_b64", &wire.request_line_b64)?,
        decode_b64("cookie_b64", &wire.cookie_b64)?,
        decode_b64("body_b64", &wire.body_b64)?,
    )?;
    record.labels = wire.labels.unwrap_or_default().into_iter().collect();
    Ok(record)
}

/// Parses a whole JSONL document, one record per non-empty line.
pub fn read_jsonl(input: &str) -> Result<Vec<HttpRecord>, RecordError> {
    input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_record)
        .collect()
}

/// Serializes records to JSONL, one line each, with a trailing newline
/// when non-empty.
pub fn write_jsonl(records: &[HttpRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

impl DeviceProfile {
    /// Checks the profile invariants: all fields non-empty, the four
    /// identifiers pairwise distinct.
    pub fn validate(&self) -> Result<(), RecordError> {
        let fields = [
            ("android_id", &self.android_id),
            ("imei", &self.imei),
            ("imsi", &self.imsi),
            ("sim_serial", &self.sim_serial),
            ("carrier", &self.carrier),
        ];
        for (name, value) in &fields {
            if value.is_empty() {
                return Err(RecordError::InvalidProfile(format!("{name} is empty")));
            }
        }
        let ids = [
            ("android_id", &self.android_id),
            ("imei", &self.imei),
            ("imsi", &self.imsi),
            ("sim_serial", &self.sim_serial),
        ];
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if ids[i].1 == ids[j].1 {
                    return Err(RecordError::InvalidProfile(format!(
                        "{} and {} must be distinct",
                        ids[i].0, ids[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a profile from JSON.
    pub fn from_json(s: &str) -> Result<Self, RecordError> {
        let profile: DeviceProfile = serde_json::from_str(s)?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Expands an identifier value into its matchable variant set: the raw
/// bytes plus MD5 and SHA1 hex digests in both lowercase and uppercase.
/// Five byte strings total.
pub fn expand_identifier_variants(value: &str) -> Vec<(VariantTag, Vec<u8>)> {
    let md5_hex = hex::encode(Md5::digest(value.as_bytes()));
    let sha1_hex = hex::encode(Sha1::digest(value.as_bytes()));
    vec![
        (VariantTag::Raw, value.as_bytes().to_vec()),
        (VariantTag::Md5, md5_hex.as_bytes().to_vec()),
        (VariantTag::Md5, md5_hex.to_ascii_uppercase().into_bytes()),
        (VariantTag::Sha1, sha1_hex.as_bytes().to_vec()),
        (VariantTag::Sha1, sha1_hex.to_ascii_uppercase().into_bytes()),
    ]
}

fn kind_present(kind: SensitiveKind, profile: &DeviceProfile, record: &HttpRecord) -> bool {
    let contents: [&[u8]; 3] = [&record.request_line, &record.cookie, &record.body];
    // Carrier names are free text: case-insensitive whole-token match.
    if kind == SensitiveKind::Carrier {
        return contents
            .iter()
            .any(|c| contains_token_ci(c, profile.carrier.as_bytes()));
    }
    let (value, tag) = match kind {
        SensitiveKind::AndroidId => (&profile.android_id, VariantTag::Raw),
        SensitiveKind::AndroidIdMd5 => (&profile.android_id, VariantTag::Md5),
        SensitiveKind::AndroidIdSha1 => (&profile.android_id, VariantTag::Sha1),
        SensitiveKind::Imei => (&profile.imei, VariantTag::Raw),
        SensitiveKind::ImeiMd5 => (&profile.imei, VariantTag::Md5),
        SensitiveKind::ImeiSha1 => (&profile.imei, VariantTag::Sha1),
        SensitiveKind::Imsi => (&profile.imsi, VariantTag::Raw),
        SensitiveKind::SimSerial => (&profile.sim_serial, VariantTag::Raw),
        SensitiveKind::Carrier => unreachable!(),
    };
    expand_identifier_variants(value)
        .iter()
        .filter(|(t, _)| *t == tag)
        .any(|(_, pattern)| contents.iter().any(|c| contains_subslice(c, pattern)))
}

/// The payload check: scans request line, cookie, and body for every
/// profile identifier variant and returns the record with its labels set.
/// Idempotent; labels are recomputed from scratch.
pub fn label_sensitive(mut record: HttpRecord, profile: &DeviceProfile) -> HttpRecord {
    record.labels = SensitiveKind::ALL
        .into_iter()
        .filter(|&kind| kind_present(kind, profile, &record))
        .collect();
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_profile() -> DeviceProfile {
        DeviceProfile {
            android_id: "a3f1c44e90b2d871".into(),
            imei: "352099001761481".into(),
            imsi: "440101234567890".into(),
            sim_serial: "8981100012345678901".into(),
            carrier: "NTT DOCOMO".into(),
        }
    }

    fn record_with(request_line: &[u8], cookie: &[u8], body: &[u8]) -> HttpRecord {
        HttpRecord::new(
            "app-001",
            Ipv4Addr::new(10, 0, 0, 1),
            80,
            "admob.com",
            request_line.to_vec(),
            cookie.to_vec(),
            body.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn parse_record_maps_fields() {
        let line = r#"{"app_id":"app-7","dst_ip":"173.194.33.5","dst_port":80,"host":"admob.com","request_line_b64":"R0VUIC8gSFRUUC8xLjE=","cookie_b64":"","body_b64":""}"#;
        let r = parse_record(line).unwrap();
        assert_eq!(r.app_id, "app-7");
        assert_eq!(r.dst_ip, Ipv4Addr::new(173, 194, 33, 5));
        assert_eq!(r.dst_port, 80);
        assert_eq!(r.host, "admob.com");
        assert_eq!(r.request_line, b"GET / HTTP/1.1");
        assert!(r.cookie.is_empty());
        assert!(r.body.is_empty());
        assert!(r.labels.is_empty());
    }

    #[test]
    fn parse_record_missing_host_names_field() {
        let line = r#"{"app_id":"a","dst_ip":"10.0.0.1","dst_port":80,"request_line_b64":"R0VUIC8gSFRUUC8xLjE=","cookie_b64":"","body_b64":""}"#;
        let err = parse_record(line).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing field"), "got: {msg}");
        assert!(msg.contains("host"), "got: {msg}");
    }

    #[test]
    fn parse_record_rejects_out_of_range_port() {
        let line = r#"{"app_id":"a","dst_ip":"10.0.0.1","dst_port":70000,"host":"admob.com","request_line_b64":"R0VUIC8gSFRUUC8xLjE=","cookie_b64":"","body_b64":""}"#;
        match parse_record(line).unwrap_err() {
            RecordError::PortOutOfRange(70000) => {}
            other => panic!("expected PortOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn parse_record_rejects_bad_ip_and_bad_base64() {
        let bad_ip = r#"{"app_id":"a","dst_ip":"10.0.0","dst_port":80,"host":"h.com","request_line_b64":"R0VUIC8gSFRUUC8xLjE=","cookie_b64":"","body_b64":""}"#;
        assert!(matches!(
            parse_record(bad_ip).unwrap_err(),
            RecordError::InvalidField { field: "dst_ip", .. }
        ));
        let bad_b64 = r#"{"app_id":"a","dst_ip":"10.0.0.1","dst_port":80,"host":"h.com","request_line_b64":"!!!","cookie_b64":"","body_b64":""}"#;
        assert!(matches!(
            parse_record(bad_b64).unwrap_err(),
            RecordError::InvalidField { field: "request_line_b64", .. }
        ));
    }

    #[test]
    fn record_invariants_enforced() {
        assert!(matches!(
            HttpRecord::new("a", Ipv4Addr::LOCALHOST, 80, "", b"GET".to_vec(), vec![], vec![]),
            Err(RecordError::InvalidField { field: "host", .. })
        ));
        assert!(matches!(
            HttpRecord::new("a", Ipv4Addr::LOCALHOST, 80, "a b.com", b"GET".to_vec(), vec![], vec![]),
            Err(RecordError::InvalidField { field: "host", .. })
        ));
        assert!(matches!(
            HttpRecord::new("a", Ipv4Addr::LOCALHOST, 80, "ok.com", vec![], vec![], vec![]),
            Err(RecordError::InvalidField { field: "request_line", .. })
        ));
    }

    #[test]
    fn round_trips_byte_exactly() {
        let mut r = record_with(b"POST /x HTTP/1.1", b"sid=\x01\x02\xff", b"k=v&bin=\x00\x7f");
        r.labels.insert(SensitiveKind::Imei);
        let line = r.to_json_line();
        let back = parse_record(&line).unwrap();
        assert_eq!(r, back);
        // Serializing again yields the identical line.
        assert_eq!(line, back.to_json_line());
    }

    #[test]
    fn variants_of_abc_match_reference_digests() {
        // Reference vectors for MD5 ("abc") and SHA1 ("abc").
        let variants = expand_identifier_variants("abc");
        assert_eq!(variants.len(), 5);
        let bytes: Vec<&[u8]> = variants.iter().map(|(_, v)| v.as_slice()).collect();
        assert!(bytes.contains(&b"abc".as_slice()));
        assert!(bytes.contains(&b"900150983cd24fb0d6963f7d28e17f72".as_slice()));
        assert!(bytes.contains(&b"900150983CD24FB0D6963F7D28E17F72".as_slice()));
        assert!(bytes.contains(&b"a9993e364706816aba3e25717850c26c9cd0d89d".as_slice()));
        assert!(bytes.contains(&b"A9993E364706816ABA3E25717850C26C9CD0D89D".as_slice()));
    }

    #[test]
    fn variants_are_distinct_and_disjoint_across_inputs() {
        let v1: BTreeSet<Vec<u8>> = expand_identifier_variants("x")
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        assert_eq!(v1.len(), 5);
        let v2: BTreeSet<Vec<u8>> = expand_identifier_variants("y")
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        assert!(v1.is_disjoint(&v2));
    }

    #[test]
    fn labels_raw_imei_in_body() {
        let p = test_profile();
        let r = record_with(
            b"POST /adcall HTTP/1.1",
            b"",
            b"device_id=352099001761481&lang=ja",
        );
        let labeled = label_sensitive(r, &p);
        assert!(labeled.labels.contains(&SensitiveKind::Imei));
        assert!(labeled.is_suspicious());
    }

    #[test]
    fn labels_android_id_md5_in_request_line() {
        let p = test_profile();
        let digest = hex::encode(Md5::digest(p.android_id.as_bytes()));
        let rline = format!("GET /ad?udid={digest} HTTP/1.1");
        let labeled = label_sensitive(record_with(rline.as_bytes(), b"", b""), &p);
        assert_eq!(
            labeled.labels.iter().copied().collect::<Vec<_>>(),
            vec![SensitiveKind::AndroidIdMd5]
        );
    }

    #[test]
    fn labels_uppercase_sha1_variant() {
        let p = test_profile();
        let digest = hex::encode(Sha1::digest(p.imei.as_bytes())).to_ascii_uppercase();
        let body = format!("guid={digest}&z=1");
        let labeled = label_sensitive(record_with(b"GET / HTTP/1.1", b"", body.as_bytes()), &p);
        assert!(labeled.labels.contains(&SensitiveKind::ImeiSha1));
    }

    #[test]
    fn labels_carrier_case_insensitive_whole_token() {
        let p = test_profile();
        let hit = label_sensitive(
            record_with(b"POST / HTTP/1.1", b"", b"net=ntt docomo&x=1"),
            &p,
        );
        assert!(hit.labels.contains(&SensitiveKind::Carrier));
        // Carrier embedded in a longer alphanumeric token does not match.
        let miss = label_sensitive(
            record_with(b"POST / HTTP/1.1", b"", b"net=xNTT DOCOMO9&x=1"),
            &p,
        );
        assert!(!miss.labels.contains(&SensitiveKind::Carrier));
    }

    #[test]
    fn clean_record_gets_no_labels() {
        let p = test_profile();
        let labeled = label_sensitive(
            record_with(b"GET /img/logo.png HTTP/1.1", b"sid=xyz", b""),
            &p,
        );
        assert!(labeled.labels.is_empty());
        assert!(!labeled.is_suspicious());
    }

    #[test]
    fn labeling_is_idempotent() {
        let p = test_profile();
        let r = record_with(b"GET / HTTP/1.1", b"", b"aid=a3f1c44e90b2d871");
        let once = label_sensitive(r, &p);
        let twice = label_sensitive(once.clone(), &p);
        assert_eq!(once, twice);
    }

    #[test]
    fn labeling_is_monotone_on_appended_variant() {
        let p = test_profile();
        let base = record_with(b"GET / HTTP/1.1", b"", b"q=1");
        let before = label_sensitive(base.clone(), &p).labels;
        let mut extended = base;
        extended.body.extend_from_slice(b"&sim=8981100012345678901");
        let after = label_sensitive(extended, &p).labels;
        assert!(after.is_superset(&before));
        assert!(after.contains(&SensitiveKind::SimSerial));
    }

    #[test]
    fn profile_validation_catches_empty_and_duplicate_fields() {
        let mut p = test_profile();
        p.carrier = String::new();
        assert!(p.validate().is_err());
        let mut p = test_profile();
        p.imsi = p.imei.clone();
        assert!(p.validate().is_err());
        assert!(test_profile().validate().is_ok());
    }
}
