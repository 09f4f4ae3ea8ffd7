//! Subprocess and HTTP transport shared by secondary classifiers and model
//! backends.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable whose value is sent as a bearer token on HTTP calls.
pub const AUTH_TOKEN_ENV: &str = "FREB_HTTP_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{command}` timed out after {timeout:?}")]
    Timeout { command: String, timeout: Duration },
    #[error("`{command}` exited with {status}: {stderr}")]
    Failed {
        command: String,
        status: std::process::ExitStatus,
        stderr: String,
    },
    #[error("http request to {url} failed: {message}")]
    Http { url: String, message: String },
    #[error("malformed response: {0}")]
    Response(String),
}

/// Runs `command` through `sh -c`, feeding `input` on stdin, and returns its
/// stdout. The child is killed once `timeout` elapses.
pub fn run_with_stdin(
    command: &str,
    input: &str,
    timeout: Duration,
) -> Result<String, ExternalError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ExternalError::Spawn {
            command: command.to_string(),
            source,
        })?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let payload = input.to_string();
    let writer = thread::spawn(move || {
        // the child may exit without reading; a broken pipe is not an error here
        let _ = stdin.write_all(payload.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        buf
    });
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalError::Timeout {
                    command: command.to_string(),
                    timeout,
                });
            }
            Ok(None) => thread::sleep(Duration::from_millis(2)),
            Err(source) => {
                return Err(ExternalError::Spawn {
                    command: command.to_string(),
                    source,
                })
            }
        }
    };
    let _ = writer.join();
    let out = reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(ExternalError::Failed {
            command: command.to_string(),
            status,
            stderr: err.trim().to_string(),
        });
    }
    Ok(out)
}

/// POSTs `body` as JSON and decodes a JSON response. The bearer token from
/// [`AUTH_TOKEN_ENV`] is attached when set.
pub fn post_json<B: Serialize, T: DeserializeOwned>(
    url: &str,
    body: &B,
    timeout: Duration,
) -> Result<T, ExternalError> {
    let http_err = |message: String| ExternalError::Http {
        url: url.to_string(),
        message,
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let mut request = agent.post(url);
    if let Ok(token) = std::env::var(AUTH_TOKEN_ENV) {
        request = request.header("Authorization", &format!("Bearer {token}"));
    }
    let mut response = request
        .send_json(body)
        .map_err(|e| http_err(e.to_string()))?;
    response
        .body_mut()
        .read_json::<T>()
        .map_err(|e| ExternalError::Response(e.to_string()))
}

/// Calls `f` up to `retries + 1` times, returning the first success or the
/// last error.
pub fn with_retries<T, E>(retries: usize, mut f: impl FnMut() -> Result<T, E>) -> Result<T, E> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if attempt >= retries => return Err(e),
            Err(_) => attempt += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subprocess_roundtrip() {
        let out = run_with_stdin("tr a-z A-Z", "hello\n", Duration::from_secs(5)).unwrap();
        assert_eq!(out, "HELLO\n");
    }

    #[test]
    fn subprocess_failure_and_timeout() {
        let err = run_with_stdin("echo oops >&2; exit 3", "", Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, ExternalError::Failed { .. }), "{err}");
        let err = run_with_stdin("sleep 5", "", Duration::from_millis(100)).unwrap_err();
        assert!(matches!(err, ExternalError::Timeout { .. }), "{err}");
    }

    #[test]
    fn retries_stop_on_success() {
        let mut calls = 0;
        let r: Result<u32, ()> = with_retries(3, || {
            calls += 1;
            if calls < 3 {
                Err(())
            } else {
                Ok(7)
            }
        });
        assert_eq!(r, Ok(7));
        assert_eq!(calls, 3);
        let mut calls = 0;
        let r: Result<u32, u32> = with_retries(1, || {
            calls += 1;
            Err(calls)
        });
        assert_eq!(r, Err(2));
    }
}
