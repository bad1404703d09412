//! MSB-first bit buffers for the payload stream.

use crate::error::{Error, Result};

/// Append-only bit buffer. Bits fill each byte from the most significant end;
/// the unused tail of the final byte stays zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of bits written so far.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: bool) {
        let offset = (self.len % 8) as u32;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.len += 1;
    }

    /// Writes the low `count` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        for i in (0..count).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn extend_from(&mut self, other: &BitWriter) {
        let reader = BitReader::new(&other.bytes, other.len);
        for i in 0..other.len {
            self.push(reader.bit(i).unwrap());
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_parts(self) -> (Vec<u8>, u64) {
        (self.bytes, self.len)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        let reader = BitReader::new(&self.bytes, self.len);
        (0..self.len).map(|i| reader.bit(i).unwrap()).collect()
    }
}

/// Read-only view over a bit payload of declared length. Reads never go past
/// `len`, even if the byte slice holds padding beyond it.
#[derive(Debug, Clone, Copy)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], len: u64) -> Self {
        let len = len.min(bytes.len() as u64 * 8);
        Self { bytes, len }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at 0-based offset `pos`.
    pub fn bit(&self, pos: u64) -> Result<bool> {
        if pos >= self.len {
            return Err(Error::TruncatedStream { position: pos });
        }
        let byte = self.bytes[(pos / 8) as usize];
        Ok(byte & (0x80 >> (pos % 8)) != 0)
    }

    /// Up to 64 bits starting at `pos`, left-aligned in the returned word,
    /// together with how many of them lie inside the payload.
    pub fn peek64(&self, pos: u64) -> (u64, u32) {
        if pos >= self.len {
            return (0, 0);
        }
        let avail = (self.len - pos).min(64) as u32;
        let start = (pos / 8) as usize;
        let shift = (pos % 8) as u32;
        let mut buf = [0u8; 16];
        let end = (start + 9).min(self.bytes.len());
        buf[..end - start].copy_from_slice(&self.bytes[start..end]);
        let hi = u64::from_be_bytes(buf[..8].try_into().unwrap());
        let lo = buf[8] as u64;
        let mut word = if shift == 0 {
            hi
        } else {
            (hi << shift) | (lo >> (8 - shift))
        };
        if avail < 64 {
            word &= !(u64::MAX >> avail);
        }
        (word, avail)
    }
}

/// A forward-only cursor into a [`BitReader`].
#[derive(Debug, Clone, Copy)]
pub struct BitCursor<'a> {
    reader: BitReader<'a>,
    pos: u64,
}

impl<'a> BitCursor<'a> {
    pub fn new(reader: BitReader<'a>) -> Self {
        Self { reader, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.reader.len() - self.pos
    }

    pub fn reader(&self) -> BitReader<'a> {
        self.reader
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let bit = self.reader.bit(self.pos)?;
        self.pos += 1;
        Ok(bit)
    }

    pub fn advance(&mut self, bits: u64) -> Result<()> {
        if bits > self.remaining() {
            return Err(Error::TruncatedStream {
                position: self.reader.len(),
            });
        }
        self.pos += bits;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_read_back() {
        let mut w = BitWriter::new();
        w.push_bits(0b1011, 4);
        w.push(true);
        w.push_bits(0x1234_5678_9abc_def0, 64);
        assert_eq!(w.len(), 69);
        assert_eq!(w.as_bytes().len(), 9);
        let r = BitReader::new(w.as_bytes(), w.len());
        let bits: Vec<bool> = (0..5).map(|i| r.bit(i).unwrap()).collect();
        assert_eq!(bits, [true, false, true, true, true]);
        let (word, avail) = r.peek64(5);
        assert_eq!(avail, 64);
        assert_eq!(word, 0x1234_5678_9abc_def0);
    }

    #[test]
    fn peek_masks_past_end() {
        let r = BitReader::new(&[0xff, 0xff], 11);
        let (word, avail) = r.peek64(3);
        assert_eq!(avail, 8);
        assert_eq!(word, 0xff00_0000_0000_0000);
        assert_eq!(r.peek64(11), (0, 0));
        assert!(r.bit(11).is_err());
    }

    #[test]
    fn cursor_refuses_overrun() {
        let r = BitReader::new(&[0xa0], 3);
        let mut c = BitCursor::new(r);
        assert!(c.read_bit().unwrap());
        assert!(c.advance(3).is_err());
        c.advance(2).unwrap();
        assert!(matches!(c.read_bit(), Err(Error::TruncatedStream { .. })));
    }
}
