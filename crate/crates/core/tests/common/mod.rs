#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use jargon::llm::Reply;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

/// Copies the bundled fixture's input files (not its out/ or cache/) into a
/// fresh temporary directory.
pub fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    dir
}

/// Rewrites `key = ...` lines of the `[section]` table in a TOML file.
pub fn edit_toml(path: &Path, section: &str, edits: &[(&str, &str)]) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut current = String::new();
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').to_string();
        }
        let key = line.split('=').next().unwrap_or("").trim();
        match edits.iter().find(|(k, _)| current == section && *k == key) {
            Some((k, v)) => out.push_str(&format!("{k} = {v}")),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str], stdin: &str) -> Output {
    let mut input = std::io::Cursor::new(stdin.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("jargon").chain(args.iter().copied());
    let code = jargon::cli::run_with_io(argv, &mut input, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

#[derive(Debug, Default)]
pub struct ServerLog {
    pub prompts: Vec<String>,
    pub authorization: Vec<String>,
}

/// A chat-completions endpoint on a loopback port. Each request's first
/// message is passed to the responder, whose `(status, content)` is returned.
pub struct MockServer {
    pub url: String,
    log: Arc<Mutex<ServerLog>>,
}

type Responder = Arc<dyn Fn(&str) -> (u16, String) + Send + Sync>;

impl MockServer {
    pub fn start(respond: impl Fn(&str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(ServerLog::default()));
        let respond: Responder = Arc::new(respond);
        let shared = log.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (log, respond) = (shared.clone(), respond.clone());
                std::thread::spawn(move || serve(stream, &log, &respond));
            }
        });
        Self { url, log }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().prompts.len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().prompts.clone()
    }

    pub fn authorization(&self) -> Vec<String> {
        self.log.lock().unwrap().authorization.clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<ServerLog>, respond: &Responder) {
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut length = 0;
        let mut auth = String::new();
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some((name, value)) = l.split_once(':') {
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = value.trim().to_string(),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let prompt = request["messages"][0]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let (status, content) = respond(&prompt);
        {
            let mut log = log.lock().unwrap();
            log.prompts.push(prompt);
            log.authorization.push(auth);
        }
        let body = if status == 200 {
            Reply::ok(&content).body
        } else {
            String::new()
        };
        let head = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            body.len()
        );
        if writer
            .write_all(head.as_bytes())
            .and_then(|_| writer.write_all(body.as_bytes()))
            .is_err()
        {
            return;
        }
    }
}

/// Answers 1 for prompts of even length and a sentence containing 0 otherwise.
pub fn parity_answer(prompt: &str) -> (u16, String) {
    let text = if prompt.len().is_multiple_of(2) {
        "1"
    } else {
        "The familiarity score is 0."
    };
    (200, text.to_string())
}

/// Standard-normal design with labels drawn from the logistic model with
/// weights `w` and intercept `b`.
pub fn logistic_instance(seed: u64, n: usize, w: &[f64], b: f64) -> (jargon::model::Matrix, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        y.push((rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64);
        rows.push(x);
    }
    (jargon::model::Matrix::from_rows(&rows).unwrap(), y)
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// `|a - b| <= tol * |b|`, with an exact match required when `b` is zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}
