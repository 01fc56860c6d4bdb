//! Reading and writing the numpy `.npy` format.
//!
//! Only version 1.0, C order and the dtypes `<f4`, `<i4` and `|u1` are
//! accepted. Any other header content is an error rather than a silent
//! conversion.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::I32(v) => v.len(),
            NpyData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::I32(_) => "<i4",
            NpyData::U8(_) => "|u1",
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "float32",
            NpyData::I32(_) => "int32",
            NpyData::U8(_) => "uint8",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "npy shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = match self.shape.len() {
            1 => format!("({},)", self.shape[0]),
            _ => format!(
                "({})",
                self.shape
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let mut header = format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
            self.data.descr(),
            shape
        );
        let unpadded = PREAMBLE_LEN + header.len() + 1;
        header.push_str(&" ".repeat((ALIGN - unpadded % ALIGN) % ALIGN));
        header.push('\n');

        let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        match &self.data {
            NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn write_to(&self, writer: &mut impl Write) -> Result<()> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(reader: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: &str| Error::NpyParse {
            offset,
            message: message.to_string(),
        };
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(err(0, "missing \\x93NUMPY magic"));
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(err(bytes.len(), "truncated preamble"));
        }
        if bytes[6..8] != [1, 0] {
            return Err(err(
                6,
                &format!("unsupported format version {}.{}", bytes[6], bytes[7]),
            ));
        }
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let data_start = PREAMBLE_LEN + header_len;
        if bytes.len() < data_start {
            return Err(err(bytes.len(), "header runs past end of file"));
        }
        let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
            .map_err(|e| err(PREAMBLE_LEN + e.valid_up_to(), "header is not valid text"))?;
        let dict = HeaderParser::new(header, PREAMBLE_LEN).parse()?;

        let count: usize = dict.shape.iter().product();
        let width = match dict.descr.as_str() {
            "<f4" | "<i4" => 4,
            "|u1" => 1,
            _ => unreachable!(),
        };
        let payload = &bytes[data_start..];
        if payload.len() != count * width {
            return Err(err(
                data_start,
                &format!(
                    "payload has {} bytes, shape {:?} needs {}",
                    payload.len(),
                    dict.shape,
                    count * width
                ),
            ));
        }
        let data = match dict.descr.as_str() {
            "<f4" => NpyData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            "<i4" => NpyData::I32(
                payload
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            _ => NpyData::U8(payload.to_vec()),
        };
        Ok(Self {
            shape: dict.shape,
            data,
        })
    }
}

struct HeaderDict {
    descr: String,
    shape: Vec<usize>,
}

/// Parser for the Python-literal dict in the header.
struct HeaderParser<'a> {
    text: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(text: &'a str, base: usize) -> Self {
        Self {
            text: text.as_bytes(),
            pos: 0,
            base,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::NpyParse {
            offset: self.base + self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() != Some(c) {
            return Err(self.error(format!("expected '{}'", c as char)));
        }
        self.pos += 1;
        Ok(())
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.error("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.text.len() {
            return Err(self.error("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn boolean(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.word() {
            b"True" => Ok(true),
            b"False" => Ok(false),
            _ => {
                self.pos = at;
                Err(self.error("expected True or False"))
            }
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(dims);
            }
            let at = self.pos;
            let digits = self.word();
            let dim = std::str::from_utf8(digits)
                .ok()
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse::<usize>().ok());
            match dim {
                Some(d) => dims.push(d),
                None => {
                    self.pos = at;
                    return Err(self.error("expected a non-negative integer dimension"));
                }
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(self.error("expected ',' or ')' in shape")),
            }
        }
    }

    fn parse(mut self) -> Result<HeaderDict> {
        self.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key_at = self.pos;
            let key = self.string()?;
            self.expect(b':')?;
            match key.as_str() {
                "descr" => {
                    let value_at = self.pos;
                    let d = self.string()?;
                    if !matches!(d.as_str(), "<f4" | "<i4" | "|u1") {
                        self.pos = value_at;
                        self.skip_ws();
                        return Err(self.error(format!("unsupported dtype '{d}'")));
                    }
                    descr = Some(d);
                }
                "fortran_order" => fortran = Some(self.boolean()?),
                "shape" => shape = Some(self.tuple()?),
                other => {
                    self.pos = key_at;
                    self.skip_ws();
                    return Err(self.error(format!("unexpected header key '{other}'")));
                }
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.error("expected ',' or '}'")),
            }
        }
        if self.text[self.pos..]
            .iter()
            .any(|b| !b.is_ascii_whitespace())
        {
            return Err(self.error("trailing characters after header dict"));
        }
        if self.text.last() != Some(&b'\n') {
            return Err(self.error("header must end with a newline"));
        }
        let (Some(descr), Some(fortran), Some(shape)) = (descr, fortran, shape) else {
            return Err(self.error("header lacks one of descr, fortran_order, shape"));
        };
        if fortran {
            return Err(Error::Unsupported(
                "Fortran-order npy arrays are not supported".into(),
            ));
        }
        Ok(HeaderDict { descr, shape })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(dict: &str) -> Vec<u8> {
        let mut h = dict.to_string();
        let unpadded = PREAMBLE_LEN + h.len() + 1;
        h.push_str(&" ".repeat((ALIGN - unpadded % ALIGN) % ALIGN));
        h.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(h.len() as u16).to_le_bytes());
        out.extend_from_slice(h.as_bytes());
        out
    }

    #[test]
    fn header_is_aligned_and_numpy_shaped() {
        let a = NpyArray::new(vec![2, 3], NpyData::F32(vec![0.0; 6])).unwrap();
        let bytes = a.to_bytes();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((PREAMBLE_LEN + header_len) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }"));
        assert!(header.ends_with('\n'));

        let v = NpyArray::new(vec![4], NpyData::U8(vec![1, 2, 3, 4])).unwrap();
        let header = String::from_utf8_lossy(&v.to_bytes()[10..64]).into_owned();
        assert!(header.contains("'shape': (4,)"));
    }

    #[test]
    fn known_bytes_decode() {
        let mut bytes = header_bytes("{'descr': '<i4', 'fortran_order': False, 'shape': (2,), }");
        bytes.extend_from_slice(&(-7i32).to_le_bytes());
        bytes.extend_from_slice(&(300i32).to_le_bytes());
        let a = NpyArray::from_bytes(&bytes).unwrap();
        assert_eq!(a.shape, vec![2]);
        assert_eq!(a.data, NpyData::I32(vec![-7, 300]));
    }

    #[test]
    fn round_trip_each_dtype() {
        for data in [
            NpyData::F32(vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25e7, f32::NAN, 1.0]),
            NpyData::I32(vec![i32::MIN, -1, 0, 1, i32::MAX, 42]),
            NpyData::U8(vec![0, 1, 2, 3, 254, 255]),
        ] {
            let a = NpyArray::new(vec![3, 2], data).unwrap();
            let b = NpyArray::from_bytes(&a.to_bytes()).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
    }

    #[test]
    fn missing_magic() {
        let e = NpyArray::from_bytes(b"NUMPY\x01\x00").unwrap_err();
        assert!(matches!(e, Error::NpyParse { offset: 0, .. }));
    }

    #[test]
    fn fortran_order_rejected() {
        let bytes = header_bytes("{'descr': '|u1', 'fortran_order': True, 'shape': (0,), }");
        assert!(matches!(NpyArray::from_bytes(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn unsupported_dtype_reports_offset() {
        let bytes = header_bytes("{'descr': '>f8', 'fortran_order': False, 'shape': (0,), }");
        match NpyArray::from_bytes(&bytes) {
            Err(Error::NpyParse { offset, message }) => {
                assert_eq!(offset, 10 + 10);
                assert!(message.contains(">f8"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_other_profiles() {
        let mut v2 = header_bytes("{'descr': '|u1', 'fortran_order': False, 'shape': (0,), }");
        v2[6] = 2;
        assert!(NpyArray::from_bytes(&v2).is_err());
        for dict in [
            "{'descr': '<f4', 'fortran_order': False, 'shape': (2,), 'extra': 1, }",
            "{'descr': '<f4', 'shape': (2,), }",
            "{'descr': '<f4', 'fortran_order': Maybe, 'shape': (2,), }",
            "{'descr': '<f4', 'fortran_order': False, 'shape': (2, -1), }",
        ] {
            assert!(NpyArray::from_bytes(&header_bytes(dict)).is_err(), "{dict}");
        }
        let mut short = header_bytes("{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }");
        let data_start = short.len();
        short.extend_from_slice(&[0; 7]);
        match NpyArray::from_bytes(&short) {
            Err(Error::NpyParse { offset, .. }) => assert_eq!(offset, data_start),
            other => panic!("unexpected {other:?}"),
        }
    }
}
