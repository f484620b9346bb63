#![allow(dead_code)]

use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use sts_core::{Calibration, Mode, PerChannel, RawSample, SampleRate, TrialPacket};
use sts_service::api::{self, AppState};
use sts_service::{Client, Device, Store};
use uuid::Uuid;

/// Service running on a private runtime inside the test process.
pub struct InProcess {
    pub url: String,
    pub state: AppState,
    _rt: tokio::runtime::Runtime,
}

impl InProcess {
    pub fn start(dir: &Path) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        let state = AppState::new(Store::open(dir).unwrap(), Device::new(1));
        let (addr, _task) = rt
            .block_on(api::spawn("127.0.0.1:0".parse().unwrap(), state.clone()))
            .unwrap();
        Self {
            url: format!("http://{addr}"),
            state,
            _rt: rt,
        }
    }

    pub fn client(&self) -> Client {
        Client::new(self.url.clone())
    }
}

fn free_addr() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

/// `sts serve` as a child process, so it can be killed without warning.
pub struct ServeProcess {
    pub url: String,
    child: Child,
}

impl ServeProcess {
    pub fn start(store: &Path) -> Self {
        let addr = free_addr();
        let child = Command::new(env!("CARGO_BIN_EXE_sts"))
            .args(["serve", "--addr", &addr.to_string(), "--store"])
            .arg(store)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn sts serve");
        let url = format!("http://{addr}");
        let client = Client::new(url.clone());
        let deadline = Instant::now() + Duration::from_secs(30);
        while client.send("GET", "/api/v1/train/trials?limit=0", None).is_err() {
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(50));
        }
        Self { url, child }
    }

    pub fn client(&self) -> Client {
        Client::new(self.url.clone())
    }

    /// SIGKILL: no shutdown hooks, no flushing.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn small_packet(n: u128, mode: Mode, user: &str, label: Option<&str>) -> TrialPacket {
    TrialPacket {
        trial_id: Uuid::from_u128(n),
        user_id: user.into(),
        mode,
        label: label.map(str::to_owned),
        started_at: "2024-06-03T09:00:00Z".into(),
        nominal_rate: SampleRate::Hz10,
        calibration: PerChannel([Calibration::default(); 4]),
        channels: PerChannel::from_fn(|c| {
            (0..5)
                .map(|i| RawSample::new(i * 100 + c.index() as u64, (n as i64) * 1000 + i as i64))
                .collect()
        }),
    }
}
