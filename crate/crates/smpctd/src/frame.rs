//! Wire framing shared by the TCP transport, the dealer protocol and the
//! loopback accounting: a one-byte message type, a little-endian u64 word
//! count, then the payload as little-endian u64 words. A frame carrying
//! `len` words therefore costs exactly `9 + 8 * len` bytes.

use std::io::{self, Read, Write};

pub const HEADER_BYTES: u64 = 9;

/// Sanity cap on a single frame (2^24 words = 128 MiB payload).
const MAX_WORDS: u64 = 1 << 24;

#[inline]
pub fn frame_bytes(words: usize) -> u64 {
    HEADER_BYTES + 8 * words as u64
}

pub fn write_frame<W: Write>(w: &mut W, msg_type: u8, words: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(9 + 8 * words.len());
    buf.push(msg_type);
    buf.extend_from_slice(&(words.len() as u64).to_le_bytes());
    for &word in words {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<(u8, Vec<u64>)> {
    let mut header = [0u8; 9];
    r.read_exact(&mut header)?;
    let msg_type = header[0];
    let len = u64::from_le_bytes(header[1..9].try_into().unwrap());
    if len > MAX_WORDS {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame claims {len} words"),
        ));
    }
    let mut body = vec![0u8; 8 * len as usize];
    r.read_exact(&mut body)?;
    let words = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((msg_type, words))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, 0x02, &[1, u64::MAX, 0x0123_4567_89ab_cdef]).unwrap();
        assert_eq!(buf.len() as u64, frame_bytes(3));
        let (t, words) = read_frame(&mut Cursor::new(buf)).unwrap();
        assert_eq!(t, 0x02);
        assert_eq!(words, vec![1, u64::MAX, 0x0123_4567_89ab_cdef]);
    }

    #[test]
    fn byte_cost_examples() {
        // Sixteen ring elements cost 137 bytes on the wire.
        assert_eq!(frame_bytes(16), 137);
        assert_eq!(frame_bytes(0), 9);
    }

    #[test]
    fn truncated_stream_errors() {
        let mut buf = Vec::new();
        write_frame(&mut buf, 0x03, &[7, 8]).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_frame(&mut Cursor::new(buf)).is_err());
    }

    #[test]
    fn absurd_length_rejected() {
        let mut buf = vec![0x02];
        buf.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_frame(&mut Cursor::new(buf)).is_err());
    }
}
