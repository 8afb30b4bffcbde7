//! Length-prefixed framing for the four server/client messages.
//!
//! Frame: `u32` big-endian payload length, `u8` message type, payload.
//! Payload: `u32` round, `u16` tensor count, then per tensor a `u8` rank,
//! `rank` `u32` dims and the f32 data. Fit results append `u64` samples and
//! an `f64` loss; eval results append `u64` samples and six `f64` metrics.
//! Multi-byte payload fields are little-endian.

use std::io::{self, Read, Write};

use crate::bytes::{put_f32_block, ByteReader, Truncation};
use crate::error::{Error, Result};
use crate::models::Tensor;

pub const MAX_FRAME_LEN: usize = 1 << 30;

const GLOBAL_MODEL: u8 = 0x01;
const FIT_RESULT: u8 = 0x02;
const EVAL_REQUEST: u8 = 0x03;
const EVAL_RESULT: u8 = 0x04;
const HEADER_LEN: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    GlobalModel {
        round: u32,
        tensors: Vec<Tensor>,
    },
    FitResult {
        round: u32,
        tensors: Vec<Tensor>,
        n_samples: u64,
        loss: f64,
    },
    EvalRequest {
        round: u32,
        tensors: Vec<Tensor>,
    },
    /// Metrics in the order macro P, R, F1 then micro P, R, F1.
    EvalResult {
        round: u32,
        tensors: Vec<Tensor>,
        n_samples: u64,
        metrics: [f64; 6],
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::GlobalModel { .. } => "global model",
            Message::FitResult { .. } => "fit result",
            Message::EvalRequest { .. } => "eval request",
            Message::EvalResult { .. } => "eval result",
        }
    }

    fn type_byte(&self) -> u8 {
        match self {
            Message::GlobalModel { .. } => GLOBAL_MODEL,
            Message::FitResult { .. } => FIT_RESULT,
            Message::EvalRequest { .. } => EVAL_REQUEST,
            Message::EvalResult { .. } => EVAL_RESULT,
        }
    }

    fn parts(&self) -> (u32, &[Tensor]) {
        match self {
            Message::GlobalModel { round, tensors }
            | Message::FitResult { round, tensors, .. }
            | Message::EvalRequest { round, tensors }
            | Message::EvalResult { round, tensors, .. } => (*round, tensors),
        }
    }
}

fn too_big(what: &str) -> Error {
    Error::param(format!("{what} does not fit the wire format"))
}

/// Encodes a complete frame. Tensor values are narrowed to f32.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>> {
    let (round, tensors) = msg.parts();
    let mut payload = Vec::new();
    payload.extend_from_slice(&round.to_le_bytes());
    let count = u16::try_from(tensors.len()).map_err(|_| too_big("tensor count"))?;
    payload.extend_from_slice(&count.to_le_bytes());
    for t in tensors {
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::param("tensor dims disagree with its data length"));
        }
        payload.push(u8::try_from(t.dims.len()).map_err(|_| too_big("tensor rank"))?);
        for &d in &t.dims {
            let d = u32::try_from(d).map_err(|_| too_big("tensor dim"))?;
            payload.extend_from_slice(&d.to_le_bytes());
        }
        put_f32_block(&mut payload, t.data.iter().copied());
    }
    match msg {
        Message::FitResult { n_samples, loss, .. } => {
            payload.extend_from_slice(&n_samples.to_le_bytes());
            payload.extend_from_slice(&loss.to_le_bytes());
        }
        Message::EvalResult { n_samples, metrics, .. } => {
            payload.extend_from_slice(&n_samples.to_le_bytes());
            for m in metrics {
                payload.extend_from_slice(&m.to_le_bytes());
            }
        }
        _ => {}
    }
    if payload.len() > MAX_FRAME_LEN {
        return Err(too_big("payload"));
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.type_byte());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn check_header(header: &[u8]) -> Result<(usize, u8)> {
    let len = u32::from_be_bytes(header[..4].try_into().expect("sized")) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::length(0, format!("declared payload of {len} bytes exceeds the frame limit")));
    }
    let kind = header[4];
    if !(GLOBAL_MODEL..=EVAL_RESULT).contains(&kind) {
        return Err(Error::format(4, format!("unknown message type 0x{kind:02x}")));
    }
    Ok((len, kind))
}

/// Decodes exactly one frame.
pub fn decode_message(frame: &[u8]) -> Result<Message> {
    if frame.len() < HEADER_LEN {
        return Err(Error::length(0, format!("frame header needs {HEADER_LEN} bytes, got {}", frame.len())));
    }
    let (len, kind) = check_header(frame)?;
    let body = &frame[HEADER_LEN..];
    if body.len() != len {
        return Err(Error::length(
            HEADER_LEN,
            format!("header declares {len} payload bytes, frame carries {}", body.len()),
        ));
    }
    decode_payload(kind, body)
}

fn decode_payload(kind: u8, body: &[u8]) -> Result<Message> {
    let mut r = ByteReader::new(body, Truncation::Corruption);
    let round = r.u32_le("round")?;
    let count = r.u16_le("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut size: usize = 1;
        for _ in 0..rank {
            let d = r.u32_le("tensor dim")? as usize;
            size = size
                .checked_mul(d)
                .filter(|s| s.saturating_mul(4) <= r.remaining())
                .ok_or_else(|| Error::corrupt(HEADER_LEN + r.position(), "tensor larger than the payload"))?;
            dims.push(d);
        }
        let data = r.f32_block(size, "tensor data")?;
        tensors.push(Tensor::new(dims, data));
    }
    let msg = match kind {
        GLOBAL_MODEL => Message::GlobalModel { round, tensors },
        EVAL_REQUEST => Message::EvalRequest { round, tensors },
        FIT_RESULT => Message::FitResult {
            round,
            tensors,
            n_samples: r.u64_le("sample count")?,
            loss: r.f64_le("loss")?,
        },
        EVAL_RESULT => {
            let n_samples = r.u64_le("sample count")?;
            let mut metrics = [0.0; 6];
            for m in &mut metrics {
                *m = r.f64_le("metric")?;
            }
            Message::EvalResult {
                round,
                tensors,
                n_samples,
                metrics,
            }
        }
        _ => unreachable!("type checked in header"),
    };
    if r.remaining() != 0 {
        return Err(Error::corrupt(
            HEADER_LEN + r.position(),
            format!("{} unread bytes after {}", r.remaining(), msg.kind()),
        ));
    }
    Ok(msg)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_message(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream before any header byte.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::length(got, "stream ended inside a frame header")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (len, kind) = check_header(&header)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::length(HEADER_LEN, format!("stream ended inside a {len}-byte payload")),
        _ => e.into(),
    })?;
    decode_payload(kind, &body).map(Some)
}
