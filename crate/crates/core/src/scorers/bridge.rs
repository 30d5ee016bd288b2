//! Client side of the out-of-process scorer protocol.
//!
//! Each request is one JSON header line
//! `{"id":u64,"op":"score","x":u32,"h":u32,"w":u32,"bytes":u64}\n` followed by
//! exactly `bytes = x·h·w·3·4` bytes of little-endian `f32` in video layout.
//! The host answers with one JSON line, `{"id":u64,"score":f64}` or
//! `{"id":u64,"error":string}`. One request is outstanding at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::ScorerOracle;
use crate::error::{Error, Result};
use crate::video::VideoTensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequestHeader {
    pub id: u64,
    pub op: String,
    pub x: u32,
    pub h: u32,
    pub w: u32,
    pub bytes: u64,
}

impl ScoreRequestHeader {
    pub fn for_video(id: u64, video: &VideoTensor) -> Self {
        Self {
            id,
            op: "score".into(),
            x: video.frames() as u32,
            h: video.height() as u32,
            w: video.width() as u32,
            bytes: video.len() as u64 * 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct BridgeScorer {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    next_id: u64,
    queries: u64,
}

impl std::fmt::Debug for BridgeScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeScorer")
            .field("next_id", &self.next_id)
            .field("queries", &self.queries)
            .finish_non_exhaustive()
    }
}

impl BridgeScorer {
    pub fn from_streams(reader: Box<dyn Read + Send>, writer: Box<dyn Write + Send>) -> Self {
        Self {
            reader: BufReader::new(reader),
            writer: Some(writer),
            child: None,
            next_id: 1,
            queries: 0,
        }
    }

    /// Connect to a host listening on `address` (`host:port`).
    pub fn connect_tcp(address: &str) -> Result<Self> {
        let stream = TcpStream::connect(address)
            .map_err(|e| Error::Protocol(format!("cannot reach bridge at {address}: {e}")))?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(Box::new(reader), Box::new(stream)))
    }

    /// Spawn a host process and speak the protocol over its stdio.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot spawn bridge `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut scorer = Self::from_streams(Box::new(stdout), Box::new(stdin));
        scorer.child = Some(child);
        Ok(scorer)
    }

    fn request(&mut self, video: &VideoTensor) -> Result<f64> {
        let id = self.next_id;
        self.next_id += 1;
        let header = ScoreRequestHeader::for_video(id, video);
        let mut line = serde_json::to_vec(&header).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push(b'\n');
        let mut payload = Vec::with_capacity(video.len() * 4);
        for &v in video.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let writer = self
            .writer
            .as_mut()
            .ok_or_else(|| Error::Protocol("bridge connection closed".into()))?;
        writer.write_all(&line)?;
        writer.write_all(&payload)?;
        writer.flush()?;

        let mut response = String::new();
        if self.reader.read_line(&mut response)? == 0 {
            return Err(Error::Protocol("bridge closed the connection".into()));
        }
        let response: ScoreResponse = serde_json::from_str(response.trim_end())
            .map_err(|e| Error::Protocol(format!("malformed response: {e}")))?;
        if response.id != id {
            return Err(Error::Protocol(format!(
                "response id {} does not echo request id {id}",
                response.id
            )));
        }
        match (response.score, response.error) {
            (_, Some(message)) => Err(Error::Scorer {
                query: self.queries,
                message,
            }),
            (Some(score), None) => Ok(score),
            (None, None) => Err(Error::Protocol("response carries neither score nor error".into())),
        }
    }
}

impl ScorerOracle for BridgeScorer {
    fn score(&mut self, video: &VideoTensor) -> Result<f64> {
        self.queries += 1;
        self.request(video)
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

impl Drop for BridgeScorer {
    fn drop(&mut self) {
        drop(self.writer.take());
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_field_order_matches_wire_format() {
        let v = VideoTensor::filled(2, 3, 4, 0.0).unwrap();
        let json = serde_json::to_string(&ScoreRequestHeader::for_video(7, &v)).unwrap();
        assert_eq!(json, r#"{"id":7,"op":"score","x":2,"h":3,"w":4,"bytes":288}"#);
    }

    #[test]
    fn response_variants_parse() {
        let ok: ScoreResponse = serde_json::from_str(r#"{"id":1,"score":0.5}"#).unwrap();
        assert_eq!(ok.score, Some(0.5));
        let err: ScoreResponse = serde_json::from_str(r#"{"id":2,"error":"boom"}"#).unwrap();
        assert_eq!(err.error.as_deref(), Some("boom"));
    }
}
