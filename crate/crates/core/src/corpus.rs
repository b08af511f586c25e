//! Seeded synthetic corpus generator: ad-module-style HTTP records with
//! controlled embedding of device identifiers, used to exercise the whole
//! pipeline at desk scale.
//!
//! A corpus spec lists weighted request templates. Sensitive templates
//! embed identifier placeholders (`{imei}`, `{android_id_md5}`, ...);
//! every template may also use noise placeholders (`{rand}`, `{nonce}`,
//! `{ts}`) so that no two generated records are byte-identical. The number
//! of sensitive records is exact: `round(n_records * sensitive_fraction)`
//! records are drawn from sensitive templates, the rest from benign ones,
//! and the ground-truth labels attached at generation agree with what the
//! payload check finds.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use md5::Md5;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::record::{DeviceProfile, HttpRecord, SensitiveKind};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus spec: {0}")]
    Invalid(String),
    #[error("corpus spec: unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("unparseable corpus spec: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Record(#[from] crate::record::RecordError),
}

/// One weighted request shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub host: String,
    pub port: u16,
    /// First three octets of the destination; the last octet is drawn per
    /// record.
    pub ip_prefix: String,
    pub request_line: String,
    /// Empty string means no body (GET-style traffic).
    pub body: String,
    /// The sensitive kinds this template embeds; empty for benign traffic.
    pub kinds: Vec<SensitiveKind>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub templates: Vec<Template>,
    pub n_records: usize,
    pub sensitive_fraction: f64,
    pub seed: u64,
    pub profile: DeviceProfile,
}

impl Template {
    fn is_sensitive(&self) -> bool {
        !self.kinds.is_empty()
    }
}

/// The placeholder that must appear in a template embedding `kind`.
fn placeholder_for(kind: SensitiveKind) -> &'static str {
    match kind {
        SensitiveKind::AndroidId => "android_id",
        SensitiveKind::AndroidIdMd5 => "android_id_md5",
        SensitiveKind::AndroidIdSha1 => "android_id_sha1",
        SensitiveKind::Imei => "imei",
        SensitiveKind::ImeiMd5 => "imei_md5",
        SensitiveKind::ImeiSha1 => "imei_sha1",
        SensitiveKind::Imsi => "imsi",
        SensitiveKind::SimSerial => "sim_serial",
        SensitiveKind::Carrier => "carrier",
    }
}

/// Identifier placeholders and the kind each one implies. `carrier_lower`
/// also labels Carrier; matching is case-insensitive anyway.
fn kind_for_placeholder(name: &str) -> Option<SensitiveKind> {
    match name {
        "android_id" => Some(SensitiveKind::AndroidId),
        "android_id_md5" => Some(SensitiveKind::AndroidIdMd5),
        "android_id_sha1" => Some(SensitiveKind::AndroidIdSha1),
        "imei" => Some(SensitiveKind::Imei),
        "imei_md5" => Some(SensitiveKind::ImeiMd5),
        "imei_sha1" => Some(SensitiveKind::ImeiSha1),
        "imsi" => Some(SensitiveKind::Imsi),
        "sim_serial" => Some(SensitiveKind::SimSerial),
        "carrier" | "carrier_lower" => Some(SensitiveKind::Carrier),
        _ => None,
    }
}

const NOISE_PLACEHOLDERS: &[&str] = &["rand", "nonce", "ts"];

fn placeholder_names(template_text: &str) -> Result<Vec<String>, CorpusError> {
    let mut names = Vec::new();
    let mut rest = template_text;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        let close = tail
            .find('}')
            .ok_or_else(|| CorpusError::Invalid(format!("unclosed placeholder in {rest:?}")))?;
        names.push(tail[..close].to_string());
        rest = &tail[close + 1..];
    }
    Ok(names)
}

impl CorpusSpec {
    /// Parses a spec from JSON and validates it.
    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        let spec: CorpusSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.templates.is_empty() {
            return Err(CorpusError::Invalid("templates must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.sensitive_fraction) {
            return Err(CorpusError::Invalid(format!(
                "sensitive_fraction {} not in 0..=1",
                self.sensitive_fraction
            )));
        }
        self.profile.validate()?;
        let n_sensitive = self.sensitive_count();
        if n_sensitive > 0 && !self.templates.iter().any(Template::is_sensitive) {
            return Err(CorpusError::Invalid(
                "sensitive_fraction > 0 but no sensitive templates".into(),
            ));
        }
        if n_sensitive < self.n_records && self.templates.iter().all(Template::is_sensitive) {
            return Err(CorpusError::Invalid(
                "sensitive_fraction < 1 but no benign templates".into(),
            ));
        }
        for (i, t) in self.templates.iter().enumerate() {
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(CorpusError::Invalid(format!(
                    "template {i}: weight must be positive"
                )));
            }
            let octets: Vec<&str> = t.ip_prefix.split('.').collect();
            if octets.len() != 3 || octets.iter().any(|o| o.parse::<u8>().is_err()) {
                return Err(CorpusError::Invalid(format!(
                    "template {i}: ip_prefix {:?} must be three dotted octets",
                    t.ip_prefix
                )));
            }
            let mut identifier_kinds = BTreeSet::new();
            for text in [&t.request_line, &t.body] {
                for name in placeholder_names(text)? {
                    match kind_for_placeholder(&name) {
                        Some(kind) => {
                            identifier_kinds.insert(kind);
                        }
                        None if NOISE_PLACEHOLDERS.contains(&name.as_str()) => {}
                        None => return Err(CorpusError::UnknownPlaceholder(name)),
                    }
                }
            }
            let declared: BTreeSet<SensitiveKind> = t.kinds.iter().copied().collect();
            if declared != identifier_kinds {
                return Err(CorpusError::Invalid(format!(
                    "template {i}: declared kinds {:?} do not match embedded placeholders {:?} \
                     (every kind needs its {{{}}}-style placeholder and vice versa)",
                    declared,
                    identifier_kinds,
                    t.kinds.first().map(|k| placeholder_for(*k)).unwrap_or("imei"),
                )));
            }
        }
        Ok(())
    }

    fn sensitive_count(&self) -> usize {
        (self.n_records as f64 * self.sensitive_fraction).round() as usize
    }

    /// The stock corpus: ten templates over well-known ad and content
    /// hosts, six of them leaking identifiers with prevalence-ordered
    /// weights, 22% sensitive records overall.
    pub fn default_spec() -> CorpusSpec {
        let t = |host: &str,
                 port: u16,
                 ip_prefix: &str,
                 request_line: &str,
                 body: &str,
                 kinds: &[SensitiveKind],
                 weight: f64| Template {
            host: host.into(),
            port,
            ip_prefix: ip_prefix.into(),
            request_line: request_line.into(),
            body: body.into(),
            kinds: kinds.to_vec(),
            weight,
        };
        CorpusSpec {
            templates: vec![
                t(
                    "admob.com",
                    80,
                    "173.194.33",
                    "GET /ad/v2/fetch?client=ca-app-{rand}&udid={android_id_md5}&fmt=banner&osv=2.3.4 HTTP/1.1",
                    "",
                    &[SensitiveKind::AndroidIdMd5],
                    100.0,
                ),
                t(
                    "googlesyndication.com",
                    80,
                    "74.125.113",
                    "GET /pagead/ads?aid={android_id}&slotname={rand}&output=html&u_w=480&u_h=800 HTTP/1.1",
                    "",
                    &[SensitiveKind::AndroidId],
                    76.0,
                ),
                t(
                    "ad-maker.info",
                    80,
                    "203.174.65",
                    "POST /adcall/v3/deliver HTTP/1.1",
                    "device_id={imei}&pkg=jp.app.{rand}&ts={ts}&lang=ja",
                    &[SensitiveKind::Imei],
                    33.0,
                ),
                t(
                    "mydas.mobi",
                    80,
                    "216.58.192",
                    "POST /getAd.php5 HTTP/1.1",
                    "apid={rand}&carrier={carrier}&auid={nonce}&ua=Android2.3",
                    &[SensitiveKind::Carrier],
                    21.0,
                ),
                t(
                    "medibaad.com",
                    8080,
                    "61.120.144",
                    "GET /sdk/v2/imp?guid={imei_sha1}&zone={rand}&seq={ts} HTTP/1.1",
                    "",
                    &[SensitiveKind::ImeiSha1],
                    11.0,
                ),
                t(
                    "adlantis.jp",
                    80,
                    "219.94.128",
                    "POST /sp/deliver HTTP/1.1",
                    "sim={sim_serial}&net={carrier_lower}&sdk=adl-{rand}&fmt=320x50",
                    &[SensitiveKind::SimSerial, SensitiveKind::Carrier],
                    8.0,
                ),
                t(
                    "google-analytics.com",
                    80,
                    "72.14.213",
                    "GET /__utm.gif?utmn={ts}&utmsr=480x800&utmac=UA-{rand}&utmcc=__utma%3D{nonce} HTTP/1.1",
                    "",
                    &[],
                    40.0,
                ),
                t(
                    "gstatic.com",
                    80,
                    "74.125.235",
                    "GET /android/market/image/{nonce}.png HTTP/1.1",
                    "",
                    &[],
                    25.0,
                ),
                t(
                    "yahoo.co.jp",
                    80,
                    "124.83.187",
                    "POST /v1/jsonrpc HTTP/1.1",
                    "method=news.fetch&q={rand}&reqid={nonce}&results=20",
                    &[],
                    20.0,
                ),
                t(
                    "ggpht.com",
                    80,
                    "74.125.31",
                    "GET /photos/public/{nonce}?sz=64&v={ts} HTTP/1.1",
                    "",
                    &[],
                    15.0,
                ),
            ],
            n_records: 2000,
            sensitive_fraction: 0.22,
            seed: 42,
            profile: DeviceProfile {
                android_id: "a3f1c44e90b2d871".into(),
                imei: "352099001761481".into(),
                imsi: "440101234567890".into(),
                sim_serial: "8981100012345678901".into(),
                carrier: "NTT DOCOMO".into(),
            },
        }
    }
}

fn fill_placeholders(
    text: &str,
    profile: &DeviceProfile,
    rng: &mut ChaCha8Rng,
) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let close = tail
            .find('}')
            .ok_or_else(|| CorpusError::Invalid(format!("unclosed placeholder in {text:?}")))?;
        let name = &tail[..close];
        match name {
            "android_id" => out.push_str(&profile.android_id),
            "android_id_md5" => out.push_str(&hex::encode(Md5::digest(profile.android_id.as_bytes()))),
            "android_id_sha1" => out.push_str(&hex::encode(Sha1::digest(profile.android_id.as_bytes()))),
            "imei" => out.push_str(&profile.imei),
            "imei_md5" => out.push_str(&hex::encode(Md5::digest(profile.imei.as_bytes()))),
            "imei_sha1" => out.push_str(&hex::encode(Sha1::digest(profile.imei.as_bytes()))),
            "imsi" => out.push_str(&profile.imsi),
            "sim_serial" => out.push_str(&profile.sim_serial),
            "carrier" => out.push_str(&profile.carrier),
            "carrier_lower" => out.push_str(&profile.carrier.to_lowercase()),
            "nonce" => {
                for _ in 0..16 {
                    out.push(char::from_digit(rng.gen_range(0..16), 16).unwrap());
                }
            }
            "rand" => {
                const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
                for _ in 0..8 {
                    out.push(ALNUM[rng.gen_range(0..ALNUM.len())] as char);
                }
            }
            // Millisecond-scale timestamps from early 2012, 13 digits.
            "ts" => out.push_str(&format!(
                "{}",
                1_326_000_000_000u64 + rng.gen_range(0..7_776_000_000u64)
            )),
            other => return Err(CorpusError::UnknownPlaceholder(other.to_string())),
        }
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Generates the corpus: `n_records` records, an exact
/// `round(n_records * sensitive_fraction)` of them from sensitive
/// templates, interleaved pseudo-randomly. Deterministic per seed, with
/// ground-truth labels attached.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<HttpRecord>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_sensitive = spec.sensitive_count();
    let mut draw_sensitive = vec![false; spec.n_records];
    draw_sensitive[..n_sensitive].fill(true);
    draw_sensitive.shuffle(&mut rng);

    let group: Vec<(Vec<&Template>, Option<WeightedIndex<f64>>)> = [false, true]
        .iter()
        .map(|&sensitive| {
            let members: Vec<&Template> = spec
                .templates
                .iter()
                .filter(|t| t.is_sensitive() == sensitive)
                .collect();
            let weights = WeightedIndex::new(members.iter().map(|t| t.weight)).ok();
            (members, weights)
        })
        .collect();

    let mut records = Vec::with_capacity(spec.n_records);
    for &sensitive in &draw_sensitive {
        let (members, weights) = &group[usize::from(sensitive)];
        let template = members[weights
            .as_ref()
            .expect("validated: group is non-empty")
            .sample(&mut rng)];

        let app_id = format!("app-{:03}", rng.gen_range(1..=40));
        let last_octet: u8 = rng.gen_range(1..=254);
        let dst_ip: Ipv4Addr = format!("{}.{last_octet}", template.ip_prefix)
            .parse()
            .expect("validated ip prefix");
        let request_line = fill_placeholders(&template.request_line, &spec.profile, &mut rng)?;
        let body = fill_placeholders(&template.body, &spec.profile, &mut rng)?;

        let mut record = HttpRecord::new(
            app_id,
            dst_ip,
            template.port,
            template.host.clone(),
            request_line.into_bytes(),
            Vec::new(),
            body.into_bytes(),
        )?;
        record.labels = template.kinds.iter().copied().collect();
        records.push(record);
    }
    Ok(records)
}
