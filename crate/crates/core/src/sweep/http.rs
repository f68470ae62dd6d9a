//! External text-generation server paired with a user-captured power trace.

use std::io::BufReader;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use futures::StreamExt;

use super::{Backend, BackendLease, BenchmarkConfig, Measurement, SweepError};
use crate::meter;
use crate::simulator::{LlmRequest, SimWorkload};
use crate::telemetry::{IterationLog, Phase, RequestRecord, ServingLog};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendSpec {
    /// Generation endpoint receiving `{prompt, max_tokens, stream: true}`.
    pub url: String,
    /// POSTed before every run when set; must return 2xx once the server is fresh.
    pub reset_url: Option<String>,
    /// Power trace path; `{config_id}` is substituted.
    pub power_trace: String,
    /// `unix` for wall-clock seconds, anything else for seconds since run start.
    pub clock_origin: String,
    /// Environment variable holding a bearer token.
    pub bearer_token_env: Option<String>,
    pub timeout_s: f64,
}

pub struct HttpBackend {
    pub spec: HttpBackendSpec,
    client: reqwest::Client,
    runtime: tokio::runtime::Runtime,
    lease: BackendLease,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("spec", &self.spec)
            .finish()
    }
}

/// Client-side view of one streamed request.
#[derive(Debug, Clone, PartialEq)]
struct Stream {
    submit_t: f64,
    token_times: Vec<f64>,
    complete_t: f64,
}

impl HttpBackend {
    pub fn new(spec: HttpBackendSpec) -> Result<Self, SweepError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let client = {
            let _guard = runtime.enter();
            reqwest::Client::builder()
                .timeout(Duration::from_secs_f64(spec.timeout_s.max(0.001)))
                .build()
                .map_err(|e| SweepError::BackendUnavailable(e.to_string()))?
        };
        Ok(Self {
            spec,
            client,
            runtime,
            lease: BackendLease::default(),
        })
    }

    fn bearer(&self) -> Option<String> {
        self.spec
            .bearer_token_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok())
    }

    fn post(&self, url: &str, body: Vec<u8>) -> reqwest::RequestBuilder {
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(token) = self.bearer() {
            req = req.bearer_auth(token);
        }
        req
    }

    fn trace_path(&self, config: &BenchmarkConfig) -> std::path::PathBuf {
        self.spec
            .power_trace
            .replace("{config_id}", &config.config_id)
            .into()
    }

    async fn stream_one(&self, req: &LlmRequest, clock: &Clock) -> Result<Stream, String> {
        let prompt = vec!["hello"; req.input_tokens as usize].join(" ");
        let body = serde_json::json!({
            "prompt": prompt,
            "max_tokens": req.output_tokens,
            "stream": true,
        });
        let submit_t = clock.now();
        let resp = self
            .post(&self.spec.url, body.to_string().into_bytes())
            .send()
            .await
            .map_err(|e| format!("request {}: {e}", req.id))?;
        if !resp.status().is_success() {
            return Err(format!("request {}: HTTP {}", req.id, resp.status()));
        }
        let mut token_times = Vec::new();
        let mut buf: Vec<u8> = Vec::new();
        let mut chunks = resp.bytes_stream();
        let mut done = false;
        while let Some(chunk) = chunks.next().await {
            let chunk = chunk.map_err(|e| format!("request {}: {e}", req.id))?;
            let t = clock.now();
            buf.extend_from_slice(&chunk);
            while let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = buf.drain(..=pos).collect();
                match classify(&line) {
                    Line::Token => token_times.push(t),
                    Line::Done => done = true,
                    Line::Blank => {}
                }
            }
            if done {
                break;
            }
        }
        if !done && matches!(classify(&buf), Line::Token) {
            token_times.push(clock.now());
        }
        Ok(Stream {
            submit_t,
            token_times,
            complete_t: clock.now(),
        })
    }
}

enum Line {
    Token,
    Done,
    Blank,
}

fn classify(raw: &[u8]) -> Line {
    let text = String::from_utf8_lossy(raw);
    let text = text.trim();
    let payload = text.strip_prefix("data:").map(str::trim).unwrap_or(text);
    if payload.is_empty() {
        Line::Blank
    } else if payload == "[DONE]" {
        Line::Done
    } else {
        Line::Token
    }
}

struct Clock {
    start: Instant,
    offset: f64,
}

impl Clock {
    fn new(unix: bool) -> Self {
        let offset = if unix {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0)
        } else {
            0.0
        };
        Self {
            start: Instant::now(),
            offset,
        }
    }

    fn now(&self) -> f64 {
        self.offset + self.start.elapsed().as_secs_f64()
    }
}

/// Reconstructs decode iterations from client-observed token arrivals.
///
/// A request is decoding between its first and last token. The run is cut at
/// every such boundary; each piece becomes one iteration whose batch size is
/// the number of decoding requests and whose tokens are the arrivals inside
/// it, excluding each request's first token. Pieces with nobody decoding are
/// gaps and produce no iteration.
pub fn derive_decode_iterations(token_times: &[Vec<f64>]) -> Vec<IterationLog> {
    let spans: Vec<(f64, f64)> = token_times
        .iter()
        .filter_map(|ts| Some((*ts.first()?, *ts.last()?)))
        .collect();
    let mut cuts: Vec<f64> = spans.iter().flat_map(|&(a, b)| [a, b]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut arrivals: Vec<f64> = token_times
        .iter()
        .flat_map(|ts| ts.iter().skip(1).copied())
        .collect();
    arrivals.sort_by(f64::total_cmp);

    let mut out = Vec::new();
    let mut next = 0usize;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let batch = spans
            .iter()
            .filter(|&&(s, e)| s <= a && e >= b && s < e)
            .count() as u32;
        let start = next;
        while next < arrivals.len() && arrivals[next] <= b {
            next += 1;
        }
        if batch == 0 {
            continue;
        }
        out.push(IterationLog {
            t_start: a,
            t_end: b,
            batch_size: batch,
            tokens_emitted: (next - start) as u64,
            phase: Phase::Decode,
        });
    }
    out
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn check_available(&self) -> Result<(), SweepError> {
        // Any HTTP response, even an error status, means the server is up.
        self.runtime
            .block_on(async { self.client.get(&self.spec.url).send().await })
            .map(|_| ())
            .map_err(|e| SweepError::BackendUnavailable(format!("{}: {e}", self.spec.url)))
    }

    fn reset(&self, config: &BenchmarkConfig) -> Result<(), SweepError> {
        let Some(url) = &self.spec.reset_url else {
            return Ok(());
        };
        let body = serde_json::to_vec(config).map_err(std::io::Error::other)?;
        let resp = self
            .runtime
            .block_on(async { self.post(url, body).send().await })
            .map_err(|e| SweepError::BackendUnavailable(format!("reset {url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(SweepError::BackendUnavailable(format!(
                "reset {url}: HTTP {}",
                resp.status()
            )));
        }
        Ok(())
    }

    fn execute(
        &self,
        config: &BenchmarkConfig,
        workload: &SimWorkload,
        _seed: u64,
    ) -> Result<Measurement, SweepError> {
        let SimWorkload::Llm(requests) = workload else {
            return Err(SweepError::InvalidConfig(
                "the http backend serves text generation only".into(),
            ));
        };
        let clock = Clock::new(self.spec.clock_origin == "unix");
        let streams = self.runtime.block_on(futures::future::join_all(
            requests.iter().map(|r| self.stream_one(r, &clock)),
        ));

        let mut records = Vec::new();
        let mut incomplete = Vec::new();
        let mut times = Vec::new();
        for (req, s) in requests.iter().zip(streams) {
            match s {
                Ok(s) if !s.token_times.is_empty() => {
                    records.push(RequestRecord {
                        request_id: req.id.clone(),
                        submit_t: s.submit_t,
                        first_token_t: s.token_times.first().copied(),
                        complete_t: s.complete_t,
                        input_tokens: req.input_tokens,
                        output_tokens: s.token_times.len() as u64,
                        preemptions: 0,
                        batch_id: None,
                    });
                    times.push(s.token_times);
                }
                Ok(_) => {
                    log::warn!("request {} produced no tokens", req.id);
                    incomplete.push(req.id.clone());
                }
                Err(e) => {
                    log::warn!("{e}");
                    incomplete.push(req.id.clone());
                }
            }
        }
        let log = ServingLog {
            records,
            iterations: derive_decode_iterations(&times),
            batches: Vec::new(),
            preemptions: Vec::new(),
            incomplete,
        };

        let path = self.trace_path(config);
        if !path.exists() {
            return Err(SweepError::MissingArtifact(path));
        }
        let set = meter::parse_power_trace(BufReader::new(std::fs::File::open(&path)?))?;
        set.check_clock_origin(&self.spec.clock_origin)?;
        Ok(Measurement {
            traces: set.traces,
            log,
            clock_origin: self.spec.clock_origin.clone(),
            tdp_w: set.tdp_w,
        })
    }

    fn lease(&self) -> &BackendLease {
        &self.lease
    }
}
