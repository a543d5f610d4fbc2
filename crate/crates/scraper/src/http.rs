//! Blocking GET with timeout and bounded retries.

use std::io;
use std::thread;

use ureq::Agent;

use crate::FetchConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Failure {
    Timeout,
    Status(u16),
    Transport(String),
}

impl Failure {
    fn retryable(&self) -> bool {
        match self {
            Failure::Timeout | Failure::Transport(_) => true,
            Failure::Status(s) => *s == 429 || *s >= 500,
        }
    }
}

pub(crate) struct Client {
    agent: Agent,
    config: FetchConfig,
}

impl Client {
    pub fn new(config: &FetchConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .user_agent(config.user_agent.as_str())
            .http_status_as_error(false)
            .build()
            .into();
        Client {
            agent,
            config: config.clone(),
        }
    }

    fn get_once(&self, url: &str) -> Result<String, Failure> {
        let mut resp = self.agent.get(url).call().map_err(classify)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(Failure::Status(status));
        }
        let bytes = resp.body_mut().read_to_vec().map_err(classify)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Body of a 2xx response, or the last failure and the number of
    /// attempts made.
    pub fn get(&self, url: &str) -> Result<String, (Failure, u32)> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.get_once(url) {
                Ok(body) => return Ok(body),
                Err(f) if f.retryable() && attempt <= self.config.retry_count => {
                    log::debug!("{url}: {f:?}, retrying ({attempt}/{})", self.config.retry_count);
                    thread::sleep(self.config.backoff());
                }
                Err(f) => return Err((f, attempt)),
            }
        }
    }
}

fn classify(e: ureq::Error) -> Failure {
    match e {
        ureq::Error::Timeout(_) => Failure::Timeout,
        ureq::Error::Io(io) if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
            Failure::Timeout
        }
        ureq::Error::StatusCode(s) => Failure::Status(s),
        other => Failure::Transport(other.to_string()),
    }
}
