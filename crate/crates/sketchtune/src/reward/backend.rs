//! Answering backends. The contract is transport-agnostic: a request is
//! (PNG bytes, question text) and the response is answer text. Mock
//! backends (oracle, constant, scripted table) ship for tests and desk
//! runs; the HTTP adapter speaks a one-endpoint JSON protocol for real
//! models. A synchronized memo cache keeps rollout cost linear in unique
//! queries.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::normalize::normalize_answer;
use super::RewardError;
use crate::data::DatasetManifest;
use crate::fsutil::sha256_bytes;

/// A visual question answering model.
pub trait VqaBackend: Send + Sync {
    fn name(&self) -> String;

    /// Answers a question about a PNG image. Deterministic per
    /// (image, question) within a session.
    fn answer(&self, image_png: &[u8], question: &str) -> Result<String, RewardError>;

    /// Maximum concurrent queries the backend tolerates.
    fn max_in_flight(&self) -> usize {
        1
    }
}

/// Always returns the same answer.
pub struct ConstantBackend {
    pub answer: String,
}

impl VqaBackend for ConstantBackend {
    fn name(&self) -> String {
        format!("constant({})", self.answer)
    }

    fn answer(&self, _image_png: &[u8], _question: &str) -> Result<String, RewardError> {
        Ok(self.answer.clone())
    }
}

/// Table-driven backend: per-(image digest, question) entries take priority,
/// then per-question entries, then the default.
#[derive(Default, Serialize, Deserialize)]
pub struct ScriptedBackend {
    #[serde(default)]
    pub by_image_question: HashMap<String, String>,
    #[serde(default)]
    pub by_question: HashMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_question(mut self, question: &str, answer: &str) -> Self {
        self.by_question
            .insert(normalize_answer(question), answer.to_string());
        self
    }

    pub fn with_image_answer(mut self, image_png: &[u8], question: &str, answer: &str) -> Self {
        self.by_image_question.insert(
            Self::key(&sha256_bytes(image_png), question),
            answer.to_string(),
        );
        self
    }

    pub fn with_default(mut self, answer: &str) -> Self {
        self.default = Some(answer.to_string());
        self
    }

    fn key(digest: &str, question: &str) -> String {
        format!("{digest}:{}", normalize_answer(question))
    }

    pub fn from_json(text: &str) -> Result<Self, RewardError> {
        let mut b: ScriptedBackend = serde_json::from_str(text)
            .map_err(|e| RewardError::BackendFailure(format!("scripted table: {e}")))?;
        // Normalize the question keys once at load.
        b.by_question = b
            .by_question
            .into_iter()
            .map(|(k, v)| (normalize_answer(&k), v))
            .collect();
        Ok(b)
    }
}

impl VqaBackend for ScriptedBackend {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn answer(&self, image_png: &[u8], question: &str) -> Result<String, RewardError> {
        let digest = sha256_bytes(image_png);
        if let Some(a) = self.by_image_question.get(&Self::key(&digest, question)) {
            return Ok(a.clone());
        }
        if let Some(a) = self.by_question.get(&normalize_answer(question)) {
            return Ok(a.clone());
        }
        self.default
            .clone()
            .ok_or_else(|| RewardError::BackendFailure(format!("no scripted answer for {question:?}")))
    }
}

/// Answers from the gold QA of a corpus, keyed by image digest: the
/// "perfect model" used to pin reward arithmetic in tests.
pub struct OracleBackend {
    answers: HashMap<String, String>,
}

impl OracleBackend {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self, RewardError> {
        let mut answers = HashMap::new();
        for rec in &manifest.records {
            let bytes = std::fs::read(manifest.resolve_image(rec))
                .map_err(|e| RewardError::BackendFailure(format!("oracle image {}: {e}", rec.id)))?;
            let digest = sha256_bytes(&bytes);
            for qa in &rec.qa_pairs {
                answers.insert(
                    ScriptedBackend::key(&digest, &qa.question),
                    qa.answer.clone(),
                );
            }
        }
        Ok(Self { answers })
    }

    pub fn from_pairs(pairs: &[(&[u8], &crate::data::QaPair)]) -> Self {
        let mut answers = HashMap::new();
        for (png, qa) in pairs {
            answers.insert(
                ScriptedBackend::key(&sha256_bytes(png), &qa.question),
                qa.answer.clone(),
            );
        }
        Self { answers }
    }
}

impl VqaBackend for OracleBackend {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn answer(&self, image_png: &[u8], question: &str) -> Result<String, RewardError> {
        let digest = sha256_bytes(image_png);
        self.answers
            .get(&ScriptedBackend::key(&digest, question))
            .cloned()
            .ok_or_else(|| RewardError::BackendFailure(format!("oracle has no entry for {question:?}")))
    }
}

/// Memoizing wrapper: (image digest, question) -> answer within a run.
pub struct CachedBackend<B: VqaBackend> {
    inner: B,
    cache: Mutex<HashMap<(String, String), String>>,
}

impl<B: VqaBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl<B: VqaBackend> VqaBackend for CachedBackend<B> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn answer(&self, image_png: &[u8], question: &str) -> Result<String, RewardError> {
        let key = (sha256_bytes(image_png), normalize_answer(question));
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let answer = self.inner.answer(image_png, question)?;
        self.cache.lock().unwrap().insert(key, answer.clone());
        Ok(answer)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    image_png_base64: String,
    question: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    answer: String,
}

/// Minimal HTTP/1.1 adapter for an external answering service.
///
/// Wire format: POST `path` with JSON `{"image_png_base64", "question"}`;
/// the service replies `{"answer": "..."}`. Retries with the configured
/// budget; socket timeouts bound each attempt.
pub struct HttpVqaBackend {
    pub host: String,
    pub port: u16,
    pub path: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl HttpVqaBackend {
    /// Parses `host:port/path`.
    pub fn from_addr(addr: &str, timeout: Duration, retries: u32) -> Result<Self, RewardError> {
        let (hostport, path) = match addr.find('/') {
            Some(i) => (&addr[..i], addr[i..].to_string()),
            None => (addr, "/vqa".to_string()),
        };
        let (host, port) = hostport
            .rsplit_once(':')
            .ok_or_else(|| RewardError::BackendFailure(format!("bad backend address {addr:?}")))?;
        let port: u16 = port
            .parse()
            .map_err(|_| RewardError::BackendFailure(format!("bad port in {addr:?}")))?;
        Ok(Self {
            host: host.to_string(),
            port,
            path,
            timeout,
            retries,
        })
    }

    fn attempt(&self, body: &str) -> Result<String, RewardError> {
        let err = |e: std::io::Error| RewardError::BackendFailure(format!("http: {e}"));
        let mut stream =
            TcpStream::connect((self.host.as_str(), self.port)).map_err(err)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(err)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(err)?;
        let req = format!(
            "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            self.path,
            self.host,
            body.len(),
            body
        );
        stream.write_all(req.as_bytes()).map_err(err)?;
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).map_err(err)?;
        let text = String::from_utf8_lossy(&raw);
        let (head, payload) = text
            .split_once("\r\n\r\n")
            .ok_or_else(|| RewardError::BackendFailure("http: malformed response".into()))?;
        let status = head.lines().next().unwrap_or("");
        if !status.contains(" 200") {
            return Err(RewardError::BackendFailure(format!("http status {status:?}")));
        }
        Ok(payload.to_string())
    }
}

impl VqaBackend for HttpVqaBackend {
    fn name(&self) -> String {
        format!("http({}:{}{})", self.host, self.port, self.path)
    }

    fn answer(&self, image_png: &[u8], question: &str) -> Result<String, RewardError> {
        use base64::Engine as _;
        let body = serde_json::to_string(&HttpRequest {
            image_png_base64: base64::engine::general_purpose::STANDARD.encode(image_png),
            question,
        })
        .expect("request serializes");
        let mut last = RewardError::BackendFailure("no attempts made".into());
        for _ in 0..=self.retries {
            match self.attempt(&body) {
                Ok(payload) => {
                    let parsed: HttpResponse = serde_json::from_str(payload.trim()).map_err(|e| {
                        RewardError::BackendFailure(format!("http payload: {e}"))
                    })?;
                    return Ok(parsed.answer);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn max_in_flight(&self) -> usize {
        4
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn scripted_lookup_priority() {
        let png = crate::raster::encode_png(&crate::raster::filled(4, image::Rgb([1, 2, 3])));
        let b = ScriptedBackend::new()
            .with_question("What is it?", "generic")
            .with_image_answer(&png, "What is it?", "specific");
        assert_eq!(b.answer(&png, "What is it?").unwrap(), "specific");
        let other = crate::raster::encode_png(&crate::raster::filled(4, image::Rgb([9, 9, 9])));
        assert_eq!(b.answer(&other, "What is it?").unwrap(), "generic");
        assert!(b.answer(&other, "Unknown?").is_err());
    }

    #[test]
    fn scripted_json_roundtrip() {
        let b = ScriptedBackend::from_json(
            r#"{"by_question": {"Is it simple?": "Yes"}, "default": "unknown"}"#,
        )
        .unwrap();
        let png = crate::raster::encode_png(&crate::raster::filled(2, image::Rgb([0, 0, 0])));
        assert_eq!(b.answer(&png, "is it simple?").unwrap(), "Yes");
        assert_eq!(b.answer(&png, "other").unwrap(), "unknown");
    }

    struct CountingBackend(AtomicUsize);
    impl VqaBackend for CountingBackend {
        fn name(&self) -> String {
            "counting".into()
        }
        fn answer(&self, _i: &[u8], _q: &str) -> Result<String, RewardError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok("x".into())
        }
    }

    #[test]
    fn cache_memoizes_per_image_question() {
        let b = CachedBackend::new(CountingBackend(AtomicUsize::new(0)));
        let png = crate::raster::encode_png(&crate::raster::filled(2, image::Rgb([5, 5, 5])));
        for _ in 0..5 {
            b.answer(&png, "q1").unwrap();
        }
        b.answer(&png, "q2").unwrap();
        assert_eq!(b.cache_len(), 2);
        assert_eq!(b.inner.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn http_adapter_against_local_stub() {
        use std::net::TcpListener;
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let handle = std::thread::spawn(move || {
            // Serve two requests: first fails, then answers.
            for (i, stream) in listener.incoming().take(2).enumerate() {
                let mut stream = stream.unwrap();
                let mut buf = [0u8; 65536];
                let mut read = 0;
                loop {
                    let n = stream.read(&mut buf[read..]).unwrap();
                    read += n;
                    let text = String::from_utf8_lossy(&buf[..read]).to_string();
                    if let Some(pos) = text.find("\r\n\r\n") {
                        let need: usize = text
                            .lines()
                            .find_map(|l| l.strip_prefix("Content-Length: "))
                            .and_then(|v| v.parse().ok())
                            .unwrap_or(0);
                        if read >= pos + 4 + need {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let body = String::from_utf8_lossy(&buf[..read]);
                assert!(body.contains("question"));
                let reply = if i == 0 {
                    "HTTP/1.1 500 ERR\r\nContent-Length: 0\r\n\r\n".to_string()
                } else {
                    let payload = r#"{"answer": "Fish"}"#;
                    format!(
                        "HTTP/1.1 200 OK\r\nContent-Length: {}\r\n\r\n{}",
                        payload.len(),
                        payload
                    )
                };
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });

        let backend = HttpVqaBackend::from_addr(
            &format!("127.0.0.1:{port}/vqa"),
            Duration::from_secs(5),
            2,
        )
        .unwrap();
        let png = crate::raster::encode_png(&crate::raster::filled(2, image::Rgb([1, 1, 1])));
        // First attempt 500s, retry succeeds.
        assert_eq!(backend.answer(&png, "What animal?").unwrap(), "Fish");
        handle.join().unwrap();
    }
}
