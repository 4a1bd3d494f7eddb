//! Gateway edge layer: validate and decode frames from the star network,
//! convert them to JSON, and push them to the uplink sink.
//!
//! Invalid frames are not errors: they become [`Rejection`] values carrying
//! the decode error and the raw bytes for abnormal-frame analysis. The
//! uplink queue gives at-least-once enqueue and deduplicates on flush, so a
//! sink that fails mid-flush can be retried without loss or duplication.

use std::collections::{HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::frame::{decode_frame, frame_to_json, FrameError, RxMeta};

/// Fixed gateway parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub gateway_id: u8,
    pub accepted_node_ids: std::ops::RangeInclusive<u8>,
    /// UART rate toward the uplink modem, recorded constant.
    pub serial_baud: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            gateway_id: crate::frame::NODE_GATEWAY_ID,
            accepted_node_ids: crate::frame::NODE_ID_MIN..=crate::frame::NODE_ID_MAX,
            serial_baud: crate::phy::GATEWAY_SERIAL_BAUD,
        }
    }
}

/// One record waiting for (or written to) the uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkRecord {
    pub topic: String,
    /// Single-line JSON payload from [`frame_to_json`].
    pub payload: String,
    pub enqueued_at_ms: Option<u64>,
}

impl UplinkRecord {
    /// The NDJSON sink line: the payload object plus a trailing `topic` key.
    pub fn ndjson_line(&self) -> String {
        let body = &self.payload[..self.payload.len() - 1];
        format!("{body},\"topic\":\"{}\"}}", self.topic)
    }

    fn dedup_key(&self) -> (String, Option<u64>) {
        (self.topic.clone(), self.enqueued_at_ms)
    }
}

/// A frame the gateway refused, kept as data for abnormal identification.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub error: FrameError,
    pub raw: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Accepted(UplinkRecord),
    Rejected(Rejection),
}

/// Topic scheme: one telemetry topic per node.
pub fn topic_for_node(node_id: u8) -> String {
    format!("rail/track/{node_id}/telemetry")
}

/// Validate, decode and convert one received frame.
pub fn gateway_ingest(cfg: &GatewayConfig, wire: &[u8], meta: &RxMeta) -> IngestOutcome {
    let frame = match decode_frame(wire) {
        Ok(frame) => frame,
        Err(error) => {
            return IngestOutcome::Rejected(Rejection {
                error,
                raw: wire.to_vec(),
            })
        }
    };
    if !cfg.accepted_node_ids.contains(&frame.node_id) {
        return IngestOutcome::Rejected(Rejection {
            error: FrameError::InvalidNodeId {
                node_id: frame.node_id,
            },
            raw: wire.to_vec(),
        });
    }
    IngestOutcome::Accepted(UplinkRecord {
        topic: topic_for_node(frame.node_id),
        payload: frame_to_json(&frame, meta),
        enqueued_at_ms: meta.rx_timestamp_ms,
    })
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("SinkUnavailable: {0}")]
    SinkUnavailable(String),
}

/// Destination for uplink NDJSON lines. The default is an append-only file;
/// an MQTT client would implement the same contract.
pub trait UplinkSink {
    fn append_line(&mut self, line: &str) -> Result<(), SinkError>;
}

/// Append-only NDJSON file sink.
pub struct NdjsonFileSink {
    path: PathBuf,
    file: File,
}

impl NdjsonFileSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, SinkError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SinkError::SinkUnavailable(format!("{}: {e}", path.display())))?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl UplinkSink for NdjsonFileSink {
    fn append_line(&mut self, line: &str) -> Result<(), SinkError> {
        self.file
            .write_all(format!("{line}\n").as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| SinkError::SinkUnavailable(format!("{}: {e}", self.path.display())))
    }
}

/// In-memory sink, used by tests and the simulator's internal plumbing.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl UplinkSink for MemorySink {
    fn append_line(&mut self, line: &str) -> Result<(), SinkError> {
        self.lines.push(line.to_string());
        Ok(())
    }
}

/// Ordered, loss-free handoff between the ingest producer and the flush
/// consumer. Records flow out in arrival order; records whose
/// (topic, timestamp) key was already flushed are dropped instead of
/// re-written.
#[derive(Debug, Default)]
pub struct UplinkQueue {
    pending: VecDeque<UplinkRecord>,
    flushed: HashSet<(String, Option<u64>)>,
}

impl UplinkQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, record: UplinkRecord) {
        self.pending.push_back(record);
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

/// Write every pending record to the sink, one NDJSON line each, in arrival
/// order. On sink failure the unwritten records stay queued and the error
/// propagates; a later retry resumes where the flush stopped. Returns the
/// number of lines written.
pub fn uplink_flush(
    queue: &mut UplinkQueue,
    sink: &mut dyn UplinkSink,
) -> Result<usize, SinkError> {
    let mut written = 0;
    while let Some(record) = queue.pending.front() {
        let key = record.dedup_key();
        if queue.flushed.contains(&key) {
            queue.pending.pop_front();
            continue;
        }
        sink.append_line(&record.ndjson_line())?;
        queue.flushed.insert(key);
        queue.pending.pop_front();
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::frame::{encode_frame, TelemetryFrame, FRAME_LEN};

    /// Sink that fails a fixed set of append attempts, then recovers.
    struct FlakySink {
        inner: MemorySink,
        attempts: usize,
        fail_on: Vec<usize>,
    }

    impl UplinkSink for FlakySink {
        fn append_line(&mut self, line: &str) -> Result<(), SinkError> {
            self.attempts += 1;
            if self.fail_on.contains(&self.attempts) {
                return Err(SinkError::SinkUnavailable("injected fault".to_string()));
            }
            self.inner.append_line(line)
        }
    }

    #[test]
    fn valid_frame_becomes_uplink_record() {
        let cfg = GatewayConfig::default();
        let wire = encode_frame(&TelemetryFrame::zero(6)).unwrap();
        let meta = RxMeta::new(1000, -80.0);
        match gateway_ingest(&cfg, wire.as_ref(), &meta) {
            IngestOutcome::Accepted(record) => {
                assert_eq!(record.topic, "rail/track/6/telemetry");
                assert_eq!(
                    record.payload,
                    frame_to_json(&TelemetryFrame::zero(6), &meta)
                );
                assert_eq!(record.enqueued_at_ms, Some(1000));
            }
            IngestOutcome::Rejected(r) => panic!("rejected: {:?}", r.error),
        }
    }

    #[test]
    fn invalid_node_id_rejected_with_raw_bytes() {
        let cfg = GatewayConfig::default();
        let mut bytes = *encode_frame(&TelemetryFrame::zero(6)).unwrap().as_bytes();
        bytes[3] = 11;
        match gateway_ingest(&cfg, &bytes, &RxMeta::absent()) {
            IngestOutcome::Rejected(r) => {
                assert_eq!(r.error, FrameError::InvalidNodeId { node_id: 11 });
                assert_eq!(r.raw, bytes.to_vec());
            }
            IngestOutcome::Accepted(_) => panic!("accepted invalid node id"),
        }
    }

    #[test]
    fn truncated_frame_rejected_as_bad_length() {
        let cfg = GatewayConfig::default();
        let wire = encode_frame(&TelemetryFrame::zero(6)).unwrap();
        let truncated = &wire.as_ref()[..FRAME_LEN - 1];
        match gateway_ingest(&cfg, truncated, &RxMeta::absent()) {
            IngestOutcome::Rejected(r) => {
                assert_eq!(r.error, FrameError::BadLength { actual: 20 });
            }
            IngestOutcome::Accepted(_) => panic!("accepted truncated frame"),
        }
    }

    #[test]
    fn every_presented_frame_is_accepted_or_rejected() {
        let cfg = GatewayConfig::default();
        let valid = encode_frame(&TelemetryFrame::zero(6)).unwrap();
        let mut bad_node = *valid.as_bytes();
        bad_node[3] = 0x20;
        let mut bad_header = *valid.as_bytes();
        bad_header[0] = 0x00;

        let presented: Vec<&[u8]> = vec![
            valid.as_ref(),
            &bad_node,
            valid.as_ref(),
            &bad_header,
            &bad_header[..10],
        ];
        let mut accepted = 0;
        let mut rejected = 0;
        for wire in &presented {
            match gateway_ingest(&cfg, wire, &RxMeta::absent()) {
                IngestOutcome::Accepted(_) => accepted += 1,
                IngestOutcome::Rejected(_) => rejected += 1,
            }
        }
        assert_eq!(accepted + rejected, presented.len());
        assert_eq!(accepted, 2);
        assert_eq!(rejected, 3);
    }

    #[test]
    fn ndjson_line_appends_topic_key() {
        let record = UplinkRecord {
            topic: topic_for_node(6),
            payload: "{\"gateway_id\":16,\"node_id\":6}".to_string(),
            enqueued_at_ms: Some(0),
        };
        assert_eq!(
            record.ndjson_line(),
            "{\"gateway_id\":16,\"node_id\":6,\"topic\":\"rail/track/6/telemetry\"}"
        );
        // the line parses and carries both the payload keys and the topic
        let value: serde_json::Value = serde_json::from_str(&record.ndjson_line()).unwrap();
        assert_eq!(value["topic"], "rail/track/6/telemetry");
        assert_eq!(value["node_id"], 6);
    }

    fn record(node: u8, ts: u64) -> UplinkRecord {
        let frame = TelemetryFrame::zero(node);
        let meta = RxMeta::new(ts, -80.0);
        UplinkRecord {
            topic: topic_for_node(node),
            payload: frame_to_json(&frame, &meta),
            enqueued_at_ms: Some(ts),
        }
    }

    #[test]
    fn flush_preserves_order_and_is_idempotent() {
        let mut queue = UplinkQueue::new();
        for ts in [10, 20, 30] {
            queue.enqueue(record(6, ts));
        }
        let mut sink = MemorySink::default();
        assert_eq!(uplink_flush(&mut queue, &mut sink).unwrap(), 3);
        assert_eq!(sink.lines.len(), 3);
        assert!(sink.lines[0].contains("\"rx_timestamp_ms\":10"));
        assert!(sink.lines[2].contains("\"rx_timestamp_ms\":30"));

        // flushing an empty queue is a no-op
        assert_eq!(uplink_flush(&mut queue, &mut sink).unwrap(), 0);
        assert_eq!(sink.lines.len(), 3);
    }

    #[test]
    fn duplicate_enqueue_flushes_once() {
        let mut queue = UplinkQueue::new();
        queue.enqueue(record(7, 42));
        queue.enqueue(record(7, 42)); // at-least-once delivery upstream
        let mut sink = MemorySink::default();
        assert_eq!(uplink_flush(&mut queue, &mut sink).unwrap(), 1);
        assert_eq!(sink.lines.len(), 1);
    }

    #[test]
    fn transient_sink_failure_loses_nothing() {
        let mut queue = UplinkQueue::new();
        for ts in 0..1000u64 {
            queue.enqueue(record(6 + (ts % 4) as u8, ts));
        }
        let mut sink = FlakySink {
            inner: MemorySink::default(),
            attempts: 0,
            fail_on: vec![250, 251, 700],
        };

        let mut flushes = 0;
        loop {
            match uplink_flush(&mut queue, &mut sink) {
                Ok(_) => break,
                Err(SinkError::SinkUnavailable(_)) => {
                    flushes += 1;
                    assert!(flushes < 10, "flush never recovered");
                }
            }
        }
        assert_eq!(sink.inner.lines.len(), 1000);
        assert_eq!(queue.pending_len(), 0);
        // no gaps: every timestamp appears exactly once, in order
        for (i, line) in sink.inner.lines.iter().enumerate() {
            assert!(
                line.contains(&format!("\"rx_timestamp_ms\":{i},")),
                "line {i}: {line}"
            );
        }
    }

    #[test]
    fn concurrent_producer_and_consumer_hand_off_in_order() {
        use std::sync::{Arc, Mutex};

        let queue = Arc::new(Mutex::new(UplinkQueue::new()));
        let total = 500u64;

        let producer = {
            let queue = Arc::clone(&queue);
            std::thread::spawn(move || {
                for ts in 0..total {
                    queue
                        .lock()
                        .unwrap()
                        .enqueue(record(6 + (ts % 4) as u8, ts));
                    if ts % 64 == 0 {
                        std::thread::yield_now();
                    }
                }
            })
        };

        let consumer = {
            let queue = Arc::clone(&queue);
            std::thread::spawn(move || {
                let mut sink = MemorySink::default();
                let mut written = 0;
                while written < total as usize {
                    written += uplink_flush(&mut queue.lock().unwrap(), &mut sink).unwrap();
                    std::thread::yield_now();
                }
                sink.lines
            })
        };

        producer.join().unwrap();
        let lines = consumer.join().unwrap();
        assert_eq!(lines.len(), total as usize);
        for (i, line) in lines.iter().enumerate() {
            assert!(
                line.contains(&format!("\"rx_timestamp_ms\":{i},")),
                "line {i} out of order: {line}"
            );
        }
    }

    #[test]
    fn file_sink_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uplink.ndjson");
        let mut sink = NdjsonFileSink::create(&path).unwrap();
        let mut queue = UplinkQueue::new();
        queue.enqueue(record(6, 1));
        queue.enqueue(record(9, 2));
        uplink_flush(&mut queue, &mut sink).unwrap();
        let contents = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = contents.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("rail/track/9/telemetry"));
    }
}
