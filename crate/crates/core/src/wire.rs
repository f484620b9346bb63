//! JSON wire format for trial submission and retrieval.
//!
//! A submission is an envelope `{"schema_version": 1, "payload": {...}}`.
//! Byte-exactness is defined on the canonical encoding: object keys sorted,
//! no insignificant whitespace, UTF-8.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use uuid::Uuid;

use crate::acquisition::{Mode, TrialPacket};
use crate::sensor::{Calibration, ChannelId, ChannelStream, PerChannel, RawSample, SampleRate};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("{0}")]
    SchemaViolation(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported schema_version {0}")]
    UnsupportedVersion(u64),
}

fn violation<T>(msg: impl Into<String>) -> Result<T, WireError> {
    Err(WireError::SchemaViolation(msg.into()))
}

/// Writes `value` canonically: sorted keys, compact separators.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Payload object for a packet.
pub fn payload_value(packet: &TrialPacket) -> Value {
    let mut calibration = Map::new();
    let mut channels = Map::new();
    for c in ChannelId::ALL {
        let cal = &packet.calibration[c];
        calibration.insert(
            c.key().into(),
            serde_json::json!({
                "tare_counts": cal.tare_counts,
                "scale_counts_per_kg": cal.scale_counts_per_kg,
            }),
        );
        channels.insert(
            c.key().into(),
            Value::Array(
                packet.channels[c]
                    .iter()
                    .map(|s| serde_json::json!([s.t_ms, s.counts]))
                    .collect(),
            ),
        );
    }
    serde_json::json!({
        "trial_id": packet.trial_id.to_string(),
        "user_id": packet.user_id,
        "mode": packet.mode.as_str(),
        "label": packet.label,
        "started_at": packet.started_at,
        "nominal_rate_hz": packet.nominal_rate.hz(),
        "calibration": calibration,
        "channels": channels,
    })
}

pub fn envelope_value(packet: &TrialPacket) -> Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "payload": payload_value(packet),
    })
}

/// Canonical envelope bytes.
pub fn serialize(packet: &TrialPacket) -> Vec<u8> {
    canonical_json(&envelope_value(packet)).into_bytes()
}

/// Parses and validates an envelope.
pub fn parse(bytes: &[u8]) -> Result<TrialPacket, WireError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| WireError::Json(e.to_string()))?;
    parse_envelope(&value)
}

const SERVER_FIELDS: [&str; 3] = ["received_at", "revision", "status"];

pub fn parse_envelope(value: &Value) -> Result<TrialPacket, WireError> {
    let obj = match value.as_object() {
        Some(o) => o,
        None => return violation("envelope is not an object"),
    };
    for k in obj.keys() {
        if k != "schema_version" && k != "payload" && !SERVER_FIELDS.contains(&k.as_str()) {
            return violation(format!("{k} is not a known envelope field"));
        }
    }
    let version = match obj.get("schema_version") {
        None => return violation("schema_version missing"),
        Some(v) => match v.as_u64() {
            Some(n) => n,
            None => return violation("schema_version not a non-negative integer"),
        },
    };
    if version != SCHEMA_VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    match obj.get("payload") {
        None => violation("payload missing"),
        Some(p) => parse_payload(p),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, WireError> {
    obj.get(key)
        .ok_or_else(|| WireError::SchemaViolation(format!("{}{key} missing", prefix(path))))
}

fn prefix(path: &str) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!("{path}.")
    }
}

fn string<'a>(v: &'a Value, path: &str) -> Result<&'a str, WireError> {
    v.as_str()
        .ok_or_else(|| WireError::SchemaViolation(format!("{path} not a string")))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, WireError> {
    v.as_object()
        .ok_or_else(|| WireError::SchemaViolation(format!("{path} not an object")))
}

fn exact_channel_keys(obj: &Map<String, Value>, path: &str) -> Result<(), WireError> {
    for c in ChannelId::ALL {
        if !obj.contains_key(c.key()) {
            return violation(format!("{path}.{} missing", c.key()));
        }
    }
    if let Some(k) = obj.keys().find(|k| ChannelId::from_key(k).is_none()) {
        return violation(format!("{path}.{k} is not a channel"));
    }
    Ok(())
}

pub fn parse_payload(value: &Value) -> Result<TrialPacket, WireError> {
    let obj = object(value, "payload")?;
    const KNOWN: [&str; 8] = [
        "trial_id",
        "user_id",
        "mode",
        "label",
        "started_at",
        "nominal_rate_hz",
        "calibration",
        "channels",
    ];
    if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return violation(format!("{k} is not a known payload field"));
    }

    let trial_id_str = string(field(obj, "", "trial_id")?, "trial_id")?;
    let trial_id = Uuid::parse_str(trial_id_str)
        .map_err(|_| WireError::SchemaViolation(format!("trial_id {trial_id_str:?} not a UUID")))?;

    let user_id = string(field(obj, "", "user_id")?, "user_id")?.to_owned();
    if user_id.is_empty() {
        return violation("user_id empty");
    }

    let mode_str = string(field(obj, "", "mode")?, "mode")?;
    let mode = Mode::parse(mode_str)
        .ok_or_else(|| WireError::SchemaViolation(format!("mode {mode_str:?} not \"train\" or \"test\"")))?;

    let label = match field(obj, "", "label")? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        _ => return violation("label not a string or null"),
    };
    if mode == Mode::Test && label.is_some() {
        return violation("label must be null for test-mode trials");
    }

    let started_at = string(field(obj, "", "started_at")?, "started_at")?.to_owned();
    if chrono::DateTime::parse_from_rfc3339(&started_at).is_err() {
        return violation(format!("started_at {started_at:?} not RFC 3339"));
    }

    let rate = field(obj, "", "nominal_rate_hz")?
        .as_u64()
        .ok_or_else(|| WireError::SchemaViolation("nominal_rate_hz not an integer".into()))?;
    let nominal_rate = u32::try_from(rate)
        .ok()
        .and_then(|r| SampleRate::try_from(r).ok())
        .ok_or_else(|| WireError::SchemaViolation(format!("nominal_rate_hz {rate} not 10 or 80")))?;

    let cal_obj = object(field(obj, "", "calibration")?, "calibration")?;
    exact_channel_keys(cal_obj, "calibration")?;
    let mut calibration = PerChannel([Calibration::default(); 4]);
    for c in ChannelId::ALL {
        let path = format!("calibration.{}", c.key());
        let entry = object(&cal_obj[c.key()], &path)?;
        let tare = field(entry, &path, "tare_counts")?
            .as_i64()
            .ok_or_else(|| WireError::SchemaViolation(format!("{path}.tare_counts not an integer")))?;
        let scale = field(entry, &path, "scale_counts_per_kg")?
            .as_f64()
            .ok_or_else(|| WireError::SchemaViolation(format!("{path}.scale_counts_per_kg not a number")))?;
        if entry.len() != 2 {
            return violation(format!("{path} has unknown fields"));
        }
        calibration[c] = Calibration::new(tare, scale)
            .map_err(|_| WireError::SchemaViolation(format!("{path}.scale_counts_per_kg must be positive")))?;
    }

    let ch_obj = object(field(obj, "", "channels")?, "channels")?;
    exact_channel_keys(ch_obj, "channels")?;
    let mut channels = PerChannel::<ChannelStream>::default();
    for c in ChannelId::ALL {
        let path = format!("channels.{}", c.key());
        let arr = ch_obj[c.key()]
            .as_array()
            .ok_or_else(|| WireError::SchemaViolation(format!("{path} not an array")))?;
        if arr.is_empty() {
            return violation(format!("{path} empty"));
        }
        let mut stream = Vec::with_capacity(arr.len());
        for (i, pair) in arr.iter().enumerate() {
            let p = match pair.as_array() {
                Some(p) if p.len() == 2 => p,
                _ => return violation(format!("{path}[{i}] not a [t_ms, counts] pair")),
            };
            let t = p[0]
                .as_u64()
                .ok_or_else(|| WireError::SchemaViolation(format!("{path}[{i}][0] not an integer")))?;
            let counts = p[1]
                .as_i64()
                .ok_or_else(|| WireError::SchemaViolation(format!("{path}[{i}][1] not an integer")))?;
            if let Some(prev) = stream.last().map(|s: &RawSample| s.t_ms) {
                if t <= prev {
                    return violation(format!("{path}[{i}][0] not after the previous timestamp"));
                }
            }
            stream.push(RawSample::new(t, counts));
        }
        channels[c] = stream;
    }

    Ok(TrialPacket {
        trial_id,
        user_id,
        mode,
        label,
        started_at,
        nominal_rate,
        calibration,
        channels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Unlabeled,
    Labeled,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Unlabeled => "unlabeled",
            TrialStatus::Labeled => "labeled",
        }
    }
}

/// A trial as held by the ingestion service.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrial {
    pub packet: TrialPacket,
    pub received_at: String,
    pub revision: u64,
}

impl StoredTrial {
    pub fn status(&self) -> TrialStatus {
        if self.packet.label.is_some() {
            TrialStatus::Labeled
        } else {
            TrialStatus::Unlabeled
        }
    }

    /// Envelope plus `received_at`, `revision`, and `status`.
    pub fn to_value(&self) -> Value {
        let mut v = envelope_value(&self.packet);
        let obj = v.as_object_mut().expect("envelope is an object");
        obj.insert("received_at".into(), Value::String(self.received_at.clone()));
        obj.insert("revision".into(), Value::from(self.revision));
        obj.insert("status".into(), Value::String(self.status().as_str().into()));
        v
    }

    pub fn from_value(value: &Value) -> Result<Self, WireError> {
        let packet = parse_envelope(value)?;
        let obj = value.as_object().expect("checked by parse_envelope");
        let received_at = match obj.get("received_at").and_then(Value::as_str) {
            Some(s) => s.to_owned(),
            None => return violation("received_at missing"),
        };
        let revision = match obj.get("revision").and_then(Value::as_u64) {
            Some(r) if r >= 1 => r,
            _ => return violation("revision missing or < 1"),
        };
        Ok(Self {
            packet,
            received_at,
            revision,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> TrialPacket {
        TrialPacket {
            trial_id: Uuid::parse_str("0b0e8f1c-1d7e-4c9a-9f55-8d1f0f0a2b3c").unwrap(),
            user_id: "U2".into(),
            mode: Mode::Train,
            label: Some("weak".into()),
            started_at: "2024-05-01T09:30:00Z".into(),
            nominal_rate: SampleRate::Hz10,
            calibration: PerChannel::from_fn(|c| Calibration::new(c.index() as i64 * 10 - 7, 335_544.0).unwrap()),
            channels: PerChannel::from_fn(|c| vec![RawSample::new(c.index() as u64, -(c.index() as i64) * 1000)]),
        }
    }

    #[test]
    fn minimal_packet_round_trips() {
        let p = minimal();
        let bytes = serialize(&p);
        assert_eq!(parse(&bytes).unwrap(), p);
        assert_eq!(serialize(&parse(&bytes).unwrap()), bytes);
    }

    #[test]
    fn canonical_form_is_sorted_and_compact() {
        let s = String::from_utf8(serialize(&minimal())).unwrap();
        assert!(s.starts_with(r#"{"payload":{"calibration":{"front_left":{"scale_counts_per_kg":335544.0,"tare_counts":-7}"#));
        assert!(s.ends_with(r#""user_id":"U2"},"schema_version":1}"#));
        assert!(!s.contains(' '));
    }

    fn mutate(f: impl FnOnce(&mut Value)) -> Result<TrialPacket, WireError> {
        let mut v = envelope_value(&minimal());
        f(&mut v);
        parse(v.to_string().as_bytes())
    }

    #[test]
    fn missing_channel_is_named() {
        let err = mutate(|v| {
            v["payload"]["channels"].as_object_mut().unwrap().remove("rear_left");
        })
        .unwrap_err();
        assert_eq!(err, WireError::SchemaViolation("channels.rear_left missing".into()));
    }

    #[test]
    fn non_integer_sample_has_field_path() {
        let err = mutate(|v| v["payload"]["channels"]["front_left"][0][0] = serde_json::json!(1.5)).unwrap_err();
        assert_eq!(
            err,
            WireError::SchemaViolation("channels.front_left[0][0] not an integer".into())
        );
    }

    #[test]
    fn rejects_bad_versions_and_fields() {
        assert_eq!(
            mutate(|v| v["schema_version"] = serde_json::json!(2)).unwrap_err(),
            WireError::UnsupportedVersion(2)
        );
        assert!(mutate(|v| v["payload"]["mode"] = serde_json::json!("eval")).is_err());
        assert!(mutate(|v| v["payload"]["nominal_rate_hz"] = serde_json::json!(20)).is_err());
        assert!(mutate(|v| v["payload"]["extra"] = serde_json::json!(1)).is_err());
        assert!(mutate(|v| v["payload"]["channels"]["left"] = serde_json::json!([])).is_err());
        assert!(mutate(|v| v["payload"]["started_at"] = serde_json::json!("yesterday")).is_err());
        assert!(mutate(|v| {
            v["payload"]["mode"] = serde_json::json!("test");
        })
        .is_err());
        assert!(mutate(|v| v["payload"]["channels"]["rear_right"] = serde_json::json!([[5, 1], [5, 2]])).is_err());
        assert!(matches!(parse(b"{not json"), Err(WireError::Json(_))));
    }

    #[test]
    fn stored_trial_round_trips() {
        let st = StoredTrial {
            packet: minimal(),
            received_at: "2024-05-01T09:31:00.000001Z".into(),
            revision: 2,
        };
        let v = st.to_value();
        assert_eq!(v["status"], "labeled");
        assert_eq!(StoredTrial::from_value(&v).unwrap(), st);
    }
}
