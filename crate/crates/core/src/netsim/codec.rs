//! Length-prefixed JSON frames.
//!
//! ```text
//! +----------------+--------------------------------------+
//! | u32 BE length  | [msg_type,msg_id,content]  (UTF-8)   |
//! +----------------+--------------------------------------+
//! ```
//!
//! The payload is canonical: no whitespace, object keys in the order
//! `sender, round, value`, floats in shortest round-trip form.

use std::io::{self, Read, Write};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::consensus::StateMsg;

pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "u8")]
pub enum MsgType {
    /// State broadcast / request.
    Request = 0,
    /// Result or acknowledgement.
    Result = 1,
}

impl From<MsgType> for u8 {
    fn from(t: MsgType) -> u8 {
        t as u8
    }
}

impl TryFrom<u64> for MsgType {
    type Error = DecodeError;

    fn try_from(v: u64) -> Result<Self, DecodeError> {
        match v {
            0 => Ok(MsgType::Request),
            1 => Ok(MsgType::Result),
            other => Err(DecodeError::UnknownType(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Content {
    Scalar(f64),
    State(StateMsg),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub msg_type: MsgType,
    pub msg_id: u64,
    pub content: Content,
}

impl Envelope {
    pub fn state(msg_id: u64, msg: StateMsg) -> Self {
        Self { msg_type: MsgType::Request, msg_id, content: Content::State(msg) }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes does not fit a 4-byte length header")]
    Oversized(usize),
    #[error("content value {0} is not finite and has no JSON form")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("header declares {declared} payload bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("unknown message type {0}")]
    UnknownType(u64),
}

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn check_finite(content: &Content) -> Result<(), EncodeError> {
    let v = match content {
        Content::Scalar(v) => *v,
        Content::State(s) => s.value,
    };
    if v.is_finite() {
        Ok(())
    } else {
        Err(EncodeError::NonFinite(v))
    }
}

/// Canonical JSON payload without the length header.
pub fn encode_payload(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    check_finite(&env.content)?;
    Ok(serde_json::to_vec(&(env.msg_type, env.msg_id, env.content)).expect("plain data serializes"))
}

pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    let payload = encode_payload(env)?;
    let len = u32::try_from(payload.len()).map_err(|_| EncodeError::Oversized(payload.len()))?;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&len.to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Decodes exactly one frame; trailing or missing bytes are errors.
pub fn decode_frame(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let declared = u32::from_be_bytes(bytes[..HEADER_LEN].try_into().expect("4 bytes")) as usize;
    let actual = bytes.len() - HEADER_LEN;
    if actual < declared {
        return Err(DecodeError::Truncated { needed: HEADER_LEN + declared, available: bytes.len() });
    }
    if actual > declared {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    decode_payload(&bytes[HEADER_LEN..])
}

pub fn decode_payload(payload: &[u8]) -> Result<Envelope, DecodeError> {
    let value: Value = serde_json::from_slice(payload).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(DecodeError::Malformed("payload is not a JSON array".into()));
    };
    let [msg_type, msg_id, content]: [Value; 3] = items
        .try_into()
        .map_err(|v: Vec<Value>| DecodeError::Malformed(format!("expected 3 elements, found {}", v.len())))?;
    let msg_type = msg_type
        .as_u64()
        .ok_or_else(|| DecodeError::Malformed("message type is not a non-negative integer".into()))?;
    let msg_type = MsgType::try_from(msg_type)?;
    let msg_id = msg_id
        .as_u64()
        .ok_or_else(|| DecodeError::Malformed("message id is not a non-negative integer".into()))?;
    let content = decode_content(content)?;
    Ok(Envelope { msg_type, msg_id, content })
}

fn decode_content(content: Value) -> Result<Content, DecodeError> {
    match content {
        Value::Number(n) => n
            .as_f64()
            .map(Content::Scalar)
            .ok_or_else(|| DecodeError::Malformed("content number out of range".into())),
        Value::Object(map) => {
            if map.len() != 3 {
                return Err(DecodeError::Malformed(format!("state object has {} keys, expected 3", map.len())));
            }
            let field = |key: &str| map.get(key).ok_or_else(|| DecodeError::Malformed(format!("missing key {key:?}")));
            let sender = field("sender")?
                .as_u64()
                .and_then(|s| usize::try_from(s).ok())
                .ok_or_else(|| DecodeError::Malformed("sender is not a node index".into()))?;
            let round = field("round")?
                .as_u64()
                .ok_or_else(|| DecodeError::Malformed("round is not a non-negative integer".into()))?;
            let value = field("value")?
                .as_f64()
                .ok_or_else(|| DecodeError::Malformed("value is not a number".into()))?;
            Ok(Content::State(StateMsg { sender, round, value }))
        }
        other => Err(DecodeError::Malformed(format!("unsupported content {other}"))),
    }
}

pub fn write_frame<W: Write>(w: &mut W, env: &Envelope) -> Result<(), FrameIoError> {
    w.write_all(&encode_frame(env)?)?;
    Ok(())
}

/// Reads one frame from a stream. `Ok(None)` on a clean end of stream at a
/// frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Envelope>, FrameIoError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(DecodeError::Truncated { needed: HEADER_LEN, available: got }.into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            FrameIoError::Decode(DecodeError::Truncated { needed: HEADER_LEN + len, available: HEADER_LEN })
        }
        _ => e.into(),
    })?;
    Ok(Some(decode_payload(&payload)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> Envelope {
        Envelope { msg_type: MsgType::Request, msg_id: 1, content: Content::Scalar(0.5) }
    }

    #[test]
    fn scalar_frame_bytes() {
        let frame = encode_frame(&scalar()).unwrap();
        assert_eq!(&frame[..4], &[0, 0, 0, 9]);
        assert_eq!(&frame[4..], b"[0,1,0.5]");
        assert_eq!(decode_frame(&frame).unwrap(), scalar());
    }

    #[test]
    fn state_payload_key_order() {
        let env = Envelope::state(7, StateMsg { sender: 3, round: 12, value: -0.0125 });
        let payload = encode_payload(&env).unwrap();
        assert_eq!(
            std::str::from_utf8(&payload).unwrap(),
            r#"[0,7,{"sender":3,"round":12,"value":-0.0125}]"#
        );
        let result = Envelope { msg_type: MsgType::Result, ..env };
        assert!(encode_payload(&result).unwrap().starts_with(b"[1,7,"));
    }

    #[test]
    fn decode_errors_are_classified() {
        assert_eq!(
            decode_frame(&[0, 0, 0, 5, b'[', b'0', b',']),
            Err(DecodeError::Truncated { needed: 9, available: 7 })
        );
        assert!(matches!(decode_frame(&[0, 0]), Err(DecodeError::Truncated { .. })));

        let mut long = encode_frame(&scalar()).unwrap();
        long.push(b' ');
        assert_eq!(decode_frame(&long), Err(DecodeError::LengthMismatch { declared: 9, actual: 10 }));

        let frame = |p: &[u8]| {
            let mut f = (p.len() as u32).to_be_bytes().to_vec();
            f.extend_from_slice(p);
            f
        };
        assert_eq!(decode_frame(&frame(b"[9,1,0.5]")), Err(DecodeError::UnknownType(9)));
        assert!(matches!(decode_frame(&frame(b"[0,1]")), Err(DecodeError::Malformed(_))));
        assert!(matches!(decode_frame(&frame(b"{}")), Err(DecodeError::Malformed(_))));
        assert!(matches!(decode_frame(&frame(b"[0,1,\"x\"]")), Err(DecodeError::Malformed(_))));
        assert!(matches!(decode_frame(&frame(b"[0,-1,0.5]")), Err(DecodeError::Malformed(_))));
        assert!(matches!(
            decode_frame(&frame(br#"[0,1,{"sender":1,"round":2}]"#)),
            Err(DecodeError::Malformed(_))
        ));
        assert!(matches!(decode_frame(&frame(b"\xff\xfe")), Err(DecodeError::Malformed(_))));
    }

    #[test]
    fn non_finite_content_is_rejected() {
        let env = Envelope { content: Content::Scalar(f64::NAN), ..scalar() };
        assert!(matches!(encode_frame(&env), Err(EncodeError::NonFinite(_))));
    }

    #[test]
    fn stream_read_write() {
        let a = scalar();
        let b = Envelope::state(2, StateMsg { sender: 0, round: 1, value: 2.5 });
        let mut buf = Vec::new();
        write_frame(&mut buf, &a).unwrap();
        write_frame(&mut buf, &b).unwrap();
        let mut r = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap(), Some(a));
        assert_eq!(read_frame(&mut r).unwrap(), Some(b));
        assert_eq!(read_frame(&mut r).unwrap(), None);

        let mut cut = io::Cursor::new(vec![0, 0, 0, 9, b'[']);
        assert!(matches!(
            read_frame(&mut cut),
            Err(FrameIoError::Decode(DecodeError::Truncated { .. }))
        ));
    }
}
