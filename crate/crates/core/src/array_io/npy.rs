use std::fs;
use std::path::Path;

use super::{ArrayData, ArrayError, DenseArray, Dtype};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Accept NaN and infinities in float payloads.
    pub allow_non_finite: bool,
}

pub fn read_array(path: impl AsRef<Path>) -> Result<DenseArray, ArrayError> {
    read_array_with(path, ReadOptions::default())
}

pub fn read_array_with(
    path: impl AsRef<Path>,
    opts: ReadOptions,
) -> Result<DenseArray, ArrayError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ArrayError::io(path, e))?;
    decode_npy(&bytes, opts)
}

pub fn write_array(array: &DenseArray, path: impl AsRef<Path>) -> Result<(), ArrayError> {
    let path = path.as_ref();
    fs::write(path, encode_npy(array)).map_err(|e| ArrayError::io(path, e))
}

/// Serializes an array in the exact layout numpy itself produces: the header
/// dict is space-padded so the payload starts on a 64-byte boundary.
pub fn encode_npy(array: &DenseArray) -> Vec<u8> {
    let shape = match array.shape() {
        [n] => format!("({n},)"),
        [r, c] => format!("({r}, {c})"),
        _ => unreachable!("DenseArray is 1-D or 2-D"),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.dtype().descr(),
        shape
    );
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');

    let mut out =
        Vec::with_capacity(PREAMBLE_LEN + header.len() + array.len() * array.dtype().size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match array.data() {
        ArrayData::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::F64(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::I64(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode_npy(bytes: &[u8], opts: ReadOptions) -> Result<DenseArray, ArrayError> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(ArrayError::Format("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(ArrayError::Unsupported(format!(
            "format version {major}.{minor} (only 1.0)"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_start = PREAMBLE_LEN + header_len;
    if bytes.len() < payload_start {
        return Err(ArrayError::Format("header runs past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..payload_start])
        .map_err(|_| ArrayError::Format("header is not ASCII".into()))?;
    let header = Header::parse(header)?;

    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| ArrayError::Format("shape overflows".into()))?;
    let payload = &bytes[payload_start..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(ArrayError::Format(format!(
            "payload has {} bytes, shape {:?} of {} needs {}",
            payload.len(),
            header.shape,
            header.dtype,
            expected
        )));
    }

    let data = match header.dtype {
        Dtype::F32 => ArrayData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => ArrayData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::I64 => ArrayData::I64(
            payload
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    let array = DenseArray::new(header.shape, data)?;
    if !opts.allow_non_finite {
        if let Some(index) = array.first_non_finite() {
            return Err(ArrayError::NonFinite { index });
        }
    }
    Ok(array)
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Debug)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl Header {
    fn parse(text: &str) -> Result<Self, ArrayError> {
        let mut p = Parser {
            s: text.trim_end_matches(['\n', ' ', '\0']).as_bytes(),
            pos: 0,
        };
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;

        p.expect(b'{')?;
        loop {
            p.skip_ws();
            if p.eat(b'}') {
                break;
            }
            let key = p.string()?;
            p.expect(b':')?;
            let value = p.literal()?;
            match (key.as_str(), value) {
                ("descr", Literal::Str(s)) if descr.is_none() => descr = Some(s),
                ("fortran_order", Literal::Bool(b)) if fortran.is_none() => fortran = Some(b),
                ("shape", Literal::Tuple(t)) if shape.is_none() => shape = Some(t),
                (k, v) => {
                    return Err(ArrayError::Format(format!(
                        "unexpected header entry {k:?}: {v:?}"
                    )))
                }
            }
            p.skip_ws();
            if !p.eat(b',') {
                p.expect(b'}')?;
                break;
            }
        }
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(ArrayError::Format(
                "trailing bytes after header dict".into(),
            ));
        }

        let descr = descr.ok_or_else(|| ArrayError::Format("header lacks 'descr'".into()))?;
        let fortran =
            fortran.ok_or_else(|| ArrayError::Format("header lacks 'fortran_order'".into()))?;
        let shape = shape.ok_or_else(|| ArrayError::Format("header lacks 'shape'".into()))?;

        let dtype = Dtype::from_descr(&descr)
            .ok_or_else(|| ArrayError::Unsupported(format!("dtype {descr:?}")))?;
        if fortran {
            return Err(ArrayError::Unsupported("Fortran-ordered payload".into()));
        }
        if shape.is_empty() || shape.len() > 2 {
            return Err(ArrayError::Unsupported(format!(
                "{}-dimensional array",
                shape.len()
            )));
        }
        Ok(Header { dtype, shape })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.s.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), ArrayError> {
        self.skip_ws();
        if self.eat(b) {
            Ok(())
        } else {
            Err(ArrayError::Format(format!(
                "expected '{}' at header offset {}",
                b as char, self.pos
            )))
        }
    }

    fn string(&mut self) -> Result<String, ArrayError> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => {
                return Err(ArrayError::Format(format!(
                    "expected string at header offset {}",
                    self.pos
                )))
            }
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(ArrayError::Format("unterminated string in header".into()));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn literal(&mut self) -> Result<Literal, ArrayError> {
        self.skip_ws();
        match self.s.get(self.pos) {
            Some(b'\'' | b'"') => self.string().map(Literal::Str),
            Some(b'(') => self.tuple().map(Literal::Tuple),
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Literal::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Literal::Bool(false))
                } else {
                    Err(ArrayError::Format(format!(
                        "unsupported header value at offset {}",
                        self.pos
                    )))
                }
            }
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, ArrayError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(b')') {
                break;
            }
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
            let dim = digits
                .parse::<usize>()
                .map_err(|_| ArrayError::Format(format!("bad shape entry at offset {start}")))?;
            dims.push(dim);
            self.skip_ws();
            if !self.eat(b',') {
                self.expect(b')')?;
                break;
            }
        }
        Ok(dims)
    }
}
