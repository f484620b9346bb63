//! Blocking HTTP client for the ingestion service.

use serde_json::{json, Value};
use sts_core::wire::{self, StoredTrial};
use sts_core::{Calibration, ChannelId, Mode, PerChannel, TrialPacket};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{method} {url}: {source}")]
    Transport {
        method: &'static str,
        url: String,
        #[source]
        source: Box<ureq::Error>,
    },
    #[error("{method} {url}: HTTP {status}: {body}")]
    Status {
        method: &'static str,
        url: String,
        status: u16,
        body: String,
    },
    #[error("{url}: unexpected response: {reason}")]
    Decode { url: String, reason: String },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Raw response: status code plus body text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    /// Sends a request and returns whatever status came back.
    pub fn send(&self, method: &'static str, path: &str, body: Option<&[u8]>) -> Result<Reply, ClientError> {
        let url = self.url(path);
        let transport = |source| ClientError::Transport {
            method,
            url: url.clone(),
            source: Box::new(source),
        };
        let resp = match (method, body) {
            ("GET", _) => self.agent.get(&url).call(),
            ("DELETE", _) => self.agent.delete(&url).call(),
            ("POST", b) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(b.unwrap_or_default()),
            ("PUT", b) => self
                .agent
                .put(&url)
                .header("content-type", "application/json")
                .send(b.unwrap_or_default()),
            _ => unreachable!("unsupported method {method}"),
        }
        .map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.into_body().read_to_string().map_err(transport)?;
        Ok(Reply { status, body })
    }

    fn expect_ok(&self, method: &'static str, path: &str, body: Option<&[u8]>) -> Result<Value, ClientError> {
        let reply = self.send(method, path, body)?;
        if !(200..300).contains(&reply.status) {
            return Err(ClientError::Status {
                method,
                url: self.url(path),
                status: reply.status,
                body: reply.body,
            });
        }
        serde_json::from_str(&reply.body).map_err(|e| ClientError::Decode {
            url: self.url(path),
            reason: e.to_string(),
        })
    }

    /// POSTs to the service matching the packet's mode. Returns the HTTP
    /// status (201 or 200) and the revision.
    pub fn submit(&self, packet: &TrialPacket) -> Result<(u16, u64), ClientError> {
        self.submit_to(packet.mode, packet)
    }

    pub fn submit_to(&self, endpoint: Mode, packet: &TrialPacket) -> Result<(u16, u64), ClientError> {
        let path = format!("/api/v1/{endpoint}/trials");
        let reply = self.send("POST", &path, Some(&wire::serialize(packet)))?;
        if !(200..300).contains(&reply.status) {
            return Err(ClientError::Status {
                method: "POST",
                url: self.url(&path),
                status: reply.status,
                body: reply.body,
            });
        }
        let v: Value = serde_json::from_str(&reply.body).map_err(|e| ClientError::Decode {
            url: self.url(&path),
            reason: e.to_string(),
        })?;
        let revision = v.get("revision").and_then(Value::as_u64).ok_or_else(|| ClientError::Decode {
            url: self.url(&path),
            reason: "missing revision".into(),
        })?;
        Ok((reply.status, revision))
    }

    /// One page of a pull. `query` is a pre-encoded query string without `?`.
    pub fn list(&self, mode: Mode, query: &str) -> Result<Vec<StoredTrial>, ClientError> {
        let path = if query.is_empty() {
            format!("/api/v1/{mode}/trials")
        } else {
            format!("/api/v1/{mode}/trials?{query}")
        };
        let v = self.expect_ok("GET", &path, None)?;
        let items = v.as_array().ok_or_else(|| ClientError::Decode {
            url: self.url(&path),
            reason: "expected an array".into(),
        })?;
        items
            .iter()
            .map(|item| {
                StoredTrial::from_value(item).map_err(|e| ClientError::Decode {
                    url: self.url(&path),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Every trial of a mode, paging until a short page.
    pub fn pull_all(&self, mode: Mode) -> Result<Vec<StoredTrial>, ClientError> {
        const PAGE: usize = 100;
        let mut out = Vec::new();
        loop {
            let page = self.list(mode, &format!("limit={PAGE}&offset={}", out.len()))?;
            let n = page.len();
            out.extend(page);
            if n < PAGE {
                return Ok(out);
            }
        }
    }

    pub fn get(&self, mode: Mode, id: Uuid) -> Result<StoredTrial, ClientError> {
        let path = format!("/api/v1/{mode}/trials/{id}");
        let v = self.expect_ok("GET", &path, None)?;
        StoredTrial::from_value(&v).map_err(|e| ClientError::Decode {
            url: self.url(&path),
            reason: e.to_string(),
        })
    }

    /// Looks a trial up in either service.
    pub fn find(&self, id: Uuid) -> Result<StoredTrial, ClientError> {
        match self.get(Mode::Train, id) {
            Err(e) if e.status() == Some(404) => self.get(Mode::Test, id),
            other => other,
        }
    }

    pub fn label(&self, id: Uuid, label: &str) -> Result<StoredTrial, ClientError> {
        let path = format!("/api/v1/train/trials/{id}/label");
        let body = json!({ "label": label }).to_string();
        let v = self.expect_ok("PUT", &path, Some(body.as_bytes()))?;
        StoredTrial::from_value(&v).map_err(|e| ClientError::Decode {
            url: self.url(&path),
            reason: e.to_string(),
        })
    }

    pub fn measure_tare(&self, samples: usize, seed: u64) -> Result<PerChannel<i64>, ClientError> {
        let path = "/api/v1/device/calibration/tare";
        let body = json!({"samples": samples, "seed": seed}).to_string();
        let v = self.expect_ok("POST", path, Some(body.as_bytes()))?;
        let mut out = PerChannel([0i64; 4]);
        for c in ChannelId::ALL {
            out[c] = v["tare_counts"][c.key()].as_i64().ok_or_else(|| ClientError::Decode {
                url: self.url(path),
                reason: format!("tare_counts.{} missing", c.key()),
            })?;
        }
        Ok(out)
    }

    pub fn measure_scale(
        &self,
        channel: ChannelId,
        tare_counts: i64,
        known_mass_kg: f64,
        samples: usize,
        seed: u64,
    ) -> Result<f64, ClientError> {
        let path = "/api/v1/device/calibration/scale";
        let body = json!({
            "channel": channel.key(),
            "tare_counts": tare_counts,
            "known_mass_kg": known_mass_kg,
            "samples": samples,
            "seed": seed,
        })
        .to_string();
        let v = self.expect_ok("POST", path, Some(body.as_bytes()))?;
        v["scale_counts_per_kg"].as_f64().ok_or_else(|| ClientError::Decode {
            url: self.url(path),
            reason: "scale_counts_per_kg missing".into(),
        })
    }

    pub fn set_calibration(&self, cal: &PerChannel<Calibration>) -> Result<(), ClientError> {
        let mut map = serde_json::Map::new();
        for (c, k) in cal.iter() {
            map.insert(c.key().into(), serde_json::to_value(k).expect("serializable"));
        }
        let body = Value::Object(map).to_string();
        self.expect_ok("PUT", "/api/v1/device/calibration", Some(body.as_bytes()))?;
        Ok(())
    }
}
