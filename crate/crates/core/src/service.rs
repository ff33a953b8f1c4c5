//! Line-delimited JSON clients for external router, embedding and
//! generator services.
//!
//! Endpoints are written `exec:<program> [args...]` (a long-lived child
//! process, one JSON object per line on stdin/stdout) or `http:<url>`
//! (one JSON object per POST body).

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};

/// Sends one request line and returns one reply line.
pub trait LineService: Send + Sync {
    fn call(&self, request: &str) -> Result<String>;
}

impl<T: LineService + ?Sized> LineService for Box<T> {
    fn call(&self, request: &str) -> Result<String> {
        (**self).call(request)
    }
}

impl<T: LineService + ?Sized> LineService for &T {
    fn call(&self, request: &str) -> Result<String> {
        (**self).call(request)
    }
}

/// In-process service backed by a closure. Mostly for tests and mocks.
pub struct FnService<F>(pub F);

impl<F> LineService for FnService<F>
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    fn call(&self, request: &str) -> Result<String> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Exec { program: String, args: Vec<String> },
    Http { url: String },
}

impl Endpoint {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("exec:") {
            let mut parts = rest.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| Error::invalid("exec endpoint without a program"))?;
            return Ok(Endpoint::Exec {
                program,
                args: parts.collect(),
            });
        }
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(Endpoint::Http { url: spec.to_string() });
        }
        if let Some(rest) = spec.strip_prefix("http:") {
            let url = if rest.starts_with("http://") || rest.starts_with("https://") {
                rest.to_string()
            } else {
                format!("http://{}", rest.trim_start_matches('/'))
            };
            return Ok(Endpoint::Http { url });
        }
        Err(Error::invalid(format!(
            "endpoint {spec:?} must start with exec: or http:"
        )))
    }

    pub fn connect(&self) -> Box<dyn LineService> {
        match self {
            Endpoint::Exec { program, args } => Box::new(ExecService::new(program.clone(), args.clone())),
            Endpoint::Http { url } => Box::new(HttpService::new(url.clone())),
        }
    }
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for ChildIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Child process speaking one JSON object per line. Spawned lazily and
/// respawned after a transport failure.
pub struct ExecService {
    program: String,
    args: Vec<String>,
    io: Mutex<Option<ChildIo>>,
}

impl ExecService {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            io: Mutex::new(None),
        }
    }

    fn spawn(&self) -> Result<ChildIo> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("spawn {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ChildIo { child, stdin, stdout })
    }

    fn exchange(io: &mut ChildIo, request: &str) -> Result<String> {
        let line = request.replace('\n', " ");
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.write_all(b"\n"))
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Transport(format!("write: {e}")))?;
        let mut reply = String::new();
        let n = io
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Transport(format!("read: {e}")))?;
        if n == 0 {
            return Err(Error::Transport("service closed its output".into()));
        }
        Ok(reply.trim_end_matches(['\r', '\n']).to_string())
    }
}

impl LineService for ExecService {
    fn call(&self, request: &str) -> Result<String> {
        let mut guard = self.io.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let result = Self::exchange(guard.as_mut().unwrap(), request);
        if matches!(result, Err(Error::Transport(_))) {
            *guard = None;
        }
        result
    }
}

pub struct HttpService {
    url: String,
    agent: ureq::Agent,
}

impl HttpService {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(120))
                .build(),
        }
    }
}

impl LineService for HttpService {
    fn call(&self, request: &str) -> Result<String> {
        let response = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(request)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let body = response
            .into_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(body.trim().to_string())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    op: &'static str,
    text: &'a str,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbedReply {
    vec: Vec<f32>,
}

/// [`Embedder`] backed by an external embedding service.
pub struct ServiceEmbedder<S> {
    service: S,
}

impl<S: LineService> ServiceEmbedder<S> {
    pub fn new(service: S) -> Self {
        Self { service }
    }
}

impl<S: LineService> Embedder for ServiceEmbedder<S> {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f32>> {
        let request = serde_json::to_string(&EmbedRequest { op: "embed", text, dim })
            .map_err(|e| Error::json("embed request", e))?;
        let reply = self
            .service
            .call(&request)
            .map_err(|e| Error::Embedder(e.to_string()))?;
        let parsed: EmbedReply =
            serde_json::from_str(&reply).map_err(|e| Error::Embedder(format!("bad reply: {e}")))?;
        if parsed.vec.len() != dim {
            return Err(Error::Embedder(format!(
                "service returned {} values, expected {dim}",
                parsed.vec.len()
            )));
        }
        Ok(parsed.vec)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::path::{Path, PathBuf};

    /// Writes an executable shell script into `dir`.
    pub(crate) fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let path = dir.join(name);
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            Endpoint::parse("exec:/bin/mock --flag").unwrap(),
            Endpoint::Exec {
                program: "/bin/mock".into(),
                args: vec!["--flag".into()]
            }
        );
        assert_eq!(
            Endpoint::parse("http:localhost:8080/route").unwrap(),
            Endpoint::Http {
                url: "http://localhost:8080/route".into()
            }
        );
        assert_eq!(
            Endpoint::parse("http:https://x.test/r").unwrap(),
            Endpoint::Http {
                url: "https://x.test/r".into()
            }
        );
        assert!(Endpoint::parse("ftp://x").is_err());
        assert!(Endpoint::parse("exec:").is_err());
    }

    #[test]
    fn exec_service_line_framing() {
        let dir = tempfile::tempdir().unwrap();
        let path = script(dir.path(), "echo.sh", "while IFS= read -r line; do echo \"$line\"; done");
        let svc = ExecService::new(path.display().to_string(), vec![]);
        assert_eq!(svc.call("{\"a\":1}").unwrap(), "{\"a\":1}");
        assert_eq!(svc.call("{\"b\":2}").unwrap(), "{\"b\":2}");
    }

    #[test]
    fn exec_service_reports_dead_child() {
        let dir = tempfile::tempdir().unwrap();
        let path = script(dir.path(), "dead.sh", "exit 0");
        let svc = ExecService::new(path.display().to_string(), vec![]);
        assert!(matches!(svc.call("{}"), Err(Error::Transport(_))));
        let missing = ExecService::new("/nonexistent/prog", vec![]);
        assert!(matches!(missing.call("{}"), Err(Error::Transport(_))));
    }

    #[test]
    fn http_service_unreachable_is_transport_error() {
        let svc = HttpService::new("http://127.0.0.1:9/none");
        assert!(matches!(svc.call("{}"), Err(Error::Transport(_))));
    }

    #[test]
    fn http_service_posts_body() {
        use std::io::Read;
        use std::net::TcpListener;
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(pos) = text.find("\r\n\r\n") {
                    let len: usize = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= pos + 4 + len {
                        let body = String::from_utf8_lossy(&buf[pos + 4..pos + 4 + len]).to_string();
                        let reply = format!("{{\"label\":\"Image\",\"echo\":{body}}}");
                        write!(
                            stream,
                            "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                            reply.len(),
                            reply
                        )
                        .unwrap();
                        break;
                    }
                }
            }
        });
        let svc = Endpoint::parse(&format!("http:{addr}/route")).unwrap().connect();
        let reply = svc.call("{\"op\":\"route\"}").unwrap();
        server.join().unwrap();
        assert_eq!(reply, "{\"label\":\"Image\",\"echo\":{\"op\":\"route\"}}");
    }

    #[test]
    fn service_embedder_validates_length() {
        let good = ServiceEmbedder::new(FnService(|req: &str| {
            let v: serde_json::Value = serde_json::from_str(req).unwrap();
            assert_eq!(v["op"], "embed");
            let dim = v["dim"].as_u64().unwrap() as usize;
            Ok(serde_json::json!({ "vec": vec![0.5; dim] }).to_string())
        }));
        assert_eq!(good.embed("hi", 3).unwrap(), vec![0.5; 3]);
        let bad = ServiceEmbedder::new(FnService(|_: &str| Ok("{\"vec\":[1.0]}".to_string())));
        assert!(matches!(bad.embed("hi", 3), Err(Error::Embedder(_))));
    }
}
