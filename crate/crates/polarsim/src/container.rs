//! Binary artifact formats: a named-tensor weight container and a packed
//! per-fragment sign bitmap sidecar.
//!
//! Both formats are little-endian with fixed magic + version headers so a
//! stale or corrupt artifact fails loudly instead of being misread.
//!
//! # Weight container (`*.wts`)
//!
//! ```text
//! magic   4 bytes  "XBWC"
//! version u32      1
//! count   u32      number of tensors
//! entry:
//!   name_len u32, name utf-8 bytes
//!   dtype    u8   0 = f32
//!   rank     u32
//!   dims     rank x u32
//!   payload  prod(dims) x f32
//! ```
//!
//! # Sign bitmap (`*.sgn`)
//!
//! ```text
//! magic   4 bytes  "XBSG"
//! version u32      1
//! count   u32      number of layers
//! entry:
//!   name_len u32, name utf-8 bytes
//!   fragment_size u32, frags_per_col u32, cols u32
//!   bitmap ceil(cols * frags_per_col / 8) bytes
//! ```
//!
//! Bitmap bit `slot * frags_per_col + frag` (LSB-first within each byte) is
//! `1` for a negative fragment, `0` for positive.
//!
//! # Cell-code matrices (`*.cells`)
//!
//! ```text
//! magic   4 bytes  "XBCC"
//! version u32      1
//! count   u32      number of matrices
//! entry:
//!   name_len u32, name utf-8 bytes
//!   rank     u32
//!   dims     rank x u32
//!   payload  prod(dims) x u8
//! ```
//!
//! One unsigned cell code per byte, row-major over `dims`; used for the
//! mapped-layer dump alongside its JSON manifest and sign bitmap.

use std::io::{Cursor, Read, Write as _};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::compress::layout::FragmentLayout;
use crate::compress::Sign;
use crate::error::{Error, Result};
use crate::model::tensor::Matrix;

const TENSOR_MAGIC: &[u8; 4] = b"XBWC";
const SIGN_MAGIC: &[u8; 4] = b"XBSG";
const CELL_MAGIC: &[u8; 4] = b"XBCC";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const MAX_NAME_LEN: u32 = 1 << 16;
const MAX_ELEMENTS: u64 = 1 << 31;

/// A named n-dimensional f32 tensor as stored in the container.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    /// Unique name, e.g. `conv1/w`.
    pub name: String,
    /// Dimensions, outermost first.
    pub dims: Vec<u32>,
    /// Row-major payload; length is the product of `dims`.
    pub data: Vec<f32>,
}

impl NamedTensor {
    /// Wrap a matrix as a rank-2 tensor.
    #[must_use]
    pub fn from_matrix(name: &str, m: &Matrix) -> Self {
        NamedTensor {
            name: name.to_string(),
            dims: vec![m.rows() as u32, m.cols() as u32],
            data: m.as_slice().to_vec(),
        }
    }

    /// Interpret a rank-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.dims.len() != 2 {
            return Err(Error::Container(format!(
                "tensor {} has rank {}, expected 2",
                self.name,
                self.dims.len()
            )));
        }
        Matrix::from_vec(self.dims[0] as usize, self.dims[1] as usize, self.data.clone())
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    let mut n: u64 = 1;
    for &d in dims {
        n = n
            .checked_mul(u64::from(d))
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Container("tensor element count overflows".into()))?;
    }
    Ok(n as usize)
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.write_u32::<LittleEndian>(name.len() as u32).expect("vec write");
    out.extend_from_slice(name.as_bytes());
}

fn read_name(cur: &mut Cursor<&[u8]>, what: &str) -> Result<String> {
    let len = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Container(format!("truncated {what} name length")))?;
    if len > MAX_NAME_LEN {
        return Err(Error::Container(format!("{what} name length {len} out of range")));
    }
    let mut buf = vec![0u8; len as usize];
    cur.read_exact(&mut buf)
        .map_err(|_| Error::Container(format!("truncated {what} name")))?;
    String::from_utf8(buf).map_err(|_| Error::Container(format!("{what} name is not utf-8")))
}

fn check_header(cur: &mut Cursor<&[u8]>, magic: &[u8; 4], what: &str) -> Result<u32> {
    let mut m = [0u8; 4];
    cur.read_exact(&mut m)
        .map_err(|_| Error::Container(format!("{what} shorter than its header")))?;
    if &m != magic {
        return Err(Error::Container(format!("bad {what} magic {m:02x?}")));
    }
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Container(format!("truncated {what} version")))?;
    if version != FORMAT_VERSION {
        return Err(Error::Container(format!(
            "unsupported {what} version {version} (expected {FORMAT_VERSION})"
        )));
    }
    cur.read_u32::<LittleEndian>()
        .map_err(|_| Error::Container(format!("truncated {what} count")))
}

fn check_consumed(cur: &Cursor<&[u8]>, what: &str) -> Result<()> {
    let remaining = cur.get_ref().len() as u64 - cur.position();
    if remaining != 0 {
        return Err(Error::Container(format!(
            "{remaining} trailing bytes after last {what} entry"
        )));
    }
    Ok(())
}

/// Serialize tensors to the container byte format.
#[must_use]
pub fn encode_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(tensors.len() as u32).expect("vec write");
    for t in tensors {
        write_name(&mut out, &t.name);
        out.write_u8(DTYPE_F32).expect("vec write");
        out.write_u32::<LittleEndian>(t.dims.len() as u32).expect("vec write");
        for &d in &t.dims {
            out.write_u32::<LittleEndian>(d).expect("vec write");
        }
        for &v in &t.data {
            out.write_f32::<LittleEndian>(v).expect("vec write");
        }
    }
    out
}

/// Parse the container byte format.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut cur = Cursor::new(bytes);
    let count = check_header(&mut cur, TENSOR_MAGIC, "tensor container")?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_name(&mut cur, "tensor")?;
        let dtype = cur
            .read_u8()
            .map_err(|_| Error::Container(format!("truncated dtype for {name}")))?;
        if dtype != DTYPE_F32 {
            return Err(Error::Container(format!("tensor {name} has unknown dtype {dtype}")));
        }
        let rank = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Container(format!("truncated rank for {name}")))?;
        if rank > 8 {
            return Err(Error::Container(format!("tensor {name} rank {rank} out of range")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(
                cur.read_u32::<LittleEndian>()
                    .map_err(|_| Error::Container(format!("truncated dims for {name}")))?,
            );
        }
        let n = element_count(&dims)?;
        let mut data = vec![0f32; n];
        cur.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|_| Error::Container(format!("truncated payload for {name}")))?;
        tensors.push(NamedTensor { name, dims, data });
    }
    check_consumed(&cur, "tensor")?;
    Ok(tensors)
}

/// Write tensors to a container file.
pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode_tensors(tensors);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read tensors from a container file.
pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path)?;
    decode_tensors(&bytes)
}

/// Packed per-fragment signs for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignBitmap {
    /// Layer name.
    pub name: String,
    /// Rows per fragment.
    pub fragment_size: u32,
    /// Fragments per kept column.
    pub frags_per_col: u32,
    /// Number of kept columns (sign slots).
    pub cols: u32,
    /// Packed bits, bit `slot * frags_per_col + frag` LSB-first.
    pub packed: Vec<u8>,
}

impl SignBitmap {
    /// Capture the stored signs of a fragment layout.
    #[must_use]
    pub fn from_layout(name: &str, layout: &FragmentLayout) -> Self {
        let fpc = layout.frags_per_col();
        let cols = layout.kept_cols.len();
        let nbits = cols * fpc;
        let mut packed = vec![0u8; nbits.div_ceil(8)];
        for slot in 0..cols {
            for frag in 0..fpc {
                if layout.sign(slot, frag) == Sign::Minus {
                    let bit = slot * fpc + frag;
                    packed[bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        SignBitmap {
            name: name.to_string(),
            fragment_size: layout.fragment_size as u32,
            frags_per_col: fpc as u32,
            cols: cols as u32,
            packed,
        }
    }

    /// Sign of fragment `frag` in kept-column slot `slot`.
    #[must_use]
    pub fn sign(&self, slot: usize, frag: usize) -> Sign {
        let bit = slot * self.frags_per_col as usize + frag;
        Sign::from_bit((self.packed[bit / 8] >> (bit % 8)) & 1)
    }

    /// True when this bitmap stores exactly the layout's signs and geometry.
    #[must_use]
    pub fn matches(&self, layout: &FragmentLayout) -> bool {
        if self.fragment_size as usize != layout.fragment_size
            || self.frags_per_col as usize != layout.frags_per_col()
            || self.cols as usize != layout.kept_cols.len()
        {
            return false;
        }
        (0..self.cols as usize).all(|slot| {
            (0..self.frags_per_col as usize).all(|frag| self.sign(slot, frag) == layout.sign(slot, frag))
        })
    }
}

/// Serialize sign bitmaps to the sidecar byte format.
#[must_use]
pub fn encode_signs(layers: &[SignBitmap]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SIGN_MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(layers.len() as u32).expect("vec write");
    for l in layers {
        write_name(&mut out, &l.name);
        out.write_u32::<LittleEndian>(l.fragment_size).expect("vec write");
        out.write_u32::<LittleEndian>(l.frags_per_col).expect("vec write");
        out.write_u32::<LittleEndian>(l.cols).expect("vec write");
        out.extend_from_slice(&l.packed);
    }
    out
}

/// Parse the sign sidecar byte format.
pub fn decode_signs(bytes: &[u8]) -> Result<Vec<SignBitmap>> {
    let mut cur = Cursor::new(bytes);
    let count = check_header(&mut cur, SIGN_MAGIC, "sign sidecar")?;
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_name(&mut cur, "sign layer")?;
        let fragment_size = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Container(format!("truncated fragment size for {name}")))?;
        let frags_per_col = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Container(format!("truncated fragment count for {name}")))?;
        let cols = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Container(format!("truncated column count for {name}")))?;
        let nbits = element_count(&[cols, frags_per_col])?;
        let mut packed = vec![0u8; nbits.div_ceil(8)];
        cur.read_exact(&mut packed)
            .map_err(|_| Error::Container(format!("truncated sign bitmap for {name}")))?;
        layers.push(SignBitmap {
            name,
            fragment_size,
            frags_per_col,
            cols,
            packed,
        });
    }
    check_consumed(&cur, "sign")?;
    Ok(layers)
}

/// Write sign bitmaps to a sidecar file.
pub fn write_signs(path: &Path, layers: &[SignBitmap]) -> Result<()> {
    let bytes = encode_signs(layers);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read sign bitmaps from a sidecar file.
pub fn read_signs(path: &Path) -> Result<Vec<SignBitmap>> {
    let bytes = std::fs::read(path)?;
    decode_signs(&bytes)
}

/// A named n-dimensional array of unsigned cell codes (one byte each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMatrix {
    /// Unique name, e.g. `conv1/cells`.
    pub name: String,
    /// Dimensions, outermost first.
    pub dims: Vec<u32>,
    /// Row-major payload; length is the product of `dims`.
    pub data: Vec<u8>,
}

/// Serialize cell matrices to the container byte format.
#[must_use]
pub fn encode_cells(cells: &[CellMatrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CELL_MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(cells.len() as u32).expect("vec write");
    for c in cells {
        write_name(&mut out, &c.name);
        out.write_u32::<LittleEndian>(c.dims.len() as u32).expect("vec write");
        for &d in &c.dims {
            out.write_u32::<LittleEndian>(d).expect("vec write");
        }
        out.extend_from_slice(&c.data);
    }
    out
}

/// Parse the cell-matrix byte format.
pub fn decode_cells(bytes: &[u8]) -> Result<Vec<CellMatrix>> {
    let mut cur = Cursor::new(bytes);
    let count = check_header(&mut cur, CELL_MAGIC, "cell container")?;
    let mut cells = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_name(&mut cur, "cell matrix")?;
        let rank = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Container(format!("truncated rank for {name}")))?;
        if rank > 8 {
            return Err(Error::Container(format!("cell matrix {name} rank {rank} out of range")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(
                cur.read_u32::<LittleEndian>()
                    .map_err(|_| Error::Container(format!("truncated dims for {name}")))?,
            );
        }
        let n = element_count(&dims)?;
        let mut data = vec![0u8; n];
        cur.read_exact(&mut data)
            .map_err(|_| Error::Container(format!("truncated payload for {name}")))?;
        cells.push(CellMatrix { name, dims, data });
    }
    check_consumed(&cur, "cell")?;
    Ok(cells)
}

/// Write cell matrices to a container file.
pub fn write_cells(path: &Path, cells: &[CellMatrix]) -> Result<()> {
    let bytes = encode_cells(cells);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read cell matrices from a container file.
pub fn read_cells(path: &Path) -> Result<Vec<CellMatrix>> {
    let bytes = std::fs::read(path)?;
    decode_cells(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::config::PolarizationOrder;
    use crate::model::tensor::WeightShape;

    fn sample_tensors() -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: "conv1/w".into(),
                dims: vec![2, 3],
                data: vec![1.0, -2.5, 0.0, 3.25, f32::MIN_POSITIVE, -0.0],
            },
            NamedTensor {
                name: "fc/b".into(),
                dims: vec![4],
                data: vec![0.1, 0.2, 0.3, 0.4],
            },
        ]
    }

    #[test]
    fn tensor_round_trip_is_bitwise() {
        let tensors = sample_tensors();
        let decoded = decode_tensors(&encode_tensors(&tensors)).unwrap();
        assert_eq!(decoded.len(), tensors.len());
        for (a, b) in tensors.iter().zip(&decoded) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.dims, b.dims);
            let abits: Vec<u32> = a.data.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn tensor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.wts");
        let tensors = sample_tensors();
        write_tensors(&path, &tensors).unwrap();
        assert_eq!(read_tensors(&path).unwrap(), tensors);
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_tensors(&[]);
        assert_eq!(&bytes[0..4], b"XBWC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &0u32.to_le_bytes());
        assert_eq!(bytes.len(), 12);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_tensors(&sample_tensors());
        bytes[0] = b'Z';
        let err = decode_tensors(&bytes).unwrap_err();
        assert!(matches!(err, Error::Container(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode_tensors(&sample_tensors());
        let err = decode_tensors(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Container(_)), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_tensors(&sample_tensors());
        bytes.push(0);
        let err = decode_tensors(&bytes).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = NamedTensor::from_matrix("m", &m);
        let back = t.to_matrix().unwrap();
        assert_eq!(back.as_slice(), m.as_slice());
    }

    fn sample_cells() -> Vec<CellMatrix> {
        vec![
            CellMatrix {
                name: "conv1/cells".into(),
                dims: vec![2, 4, 3],
                data: (0u8..24).collect(),
            },
            CellMatrix {
                name: "fc/cells".into(),
                dims: vec![5],
                data: vec![3, 0, 1, 2, 3],
            },
        ]
    }

    #[test]
    fn cell_round_trip_is_exact() {
        let cells = sample_cells();
        assert_eq!(decode_cells(&encode_cells(&cells)).unwrap(), cells);
    }

    #[test]
    fn cell_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mapped.cells");
        let cells = sample_cells();
        write_cells(&path, &cells).unwrap();
        assert_eq!(read_cells(&path).unwrap(), cells);
    }

    #[test]
    fn cell_header_and_corruption_are_detected() {
        let bytes = encode_cells(&sample_cells());
        assert_eq!(&bytes[0..4], b"XBCC");
        let err = decode_cells(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Container(_)), "{err}");
        // a tensor container is not a cell container
        let err = decode_cells(&encode_tensors(&sample_tensors())).unwrap_err();
        assert!(matches!(err, Error::Container(_)), "{err}");
    }

    fn sample_layout() -> FragmentLayout {
        let view = Matrix::from_vec(
            4,
            2,
            vec![1.0, -1.0, 2.0, -0.5, -0.25, 0.75, 1.5, -2.0],
        )
        .unwrap();
        let shape = WeightShape::Conv {
            filters: 2,
            channels: 1,
            height: 4,
            width: 1,
        };
        let mut layout = FragmentLayout::full(&view, &shape, PolarizationOrder::WMajor, 2).unwrap();
        layout.update_signs(&view);
        layout
    }

    #[test]
    fn sign_bitmap_matches_layout() {
        let layout = sample_layout();
        let bm = SignBitmap::from_layout("l", &layout);
        assert!(bm.matches(&layout));
        for slot in 0..layout.kept_cols.len() {
            for frag in 0..layout.frags_per_col() {
                assert_eq!(bm.sign(slot, frag), layout.sign(slot, frag));
            }
        }
    }

    #[test]
    fn sign_bit_packing_is_lsb_first() {
        // col 0 frags: [+, +]; col 1 frags: [-, -] for the sample view
        let layout = sample_layout();
        let bm = SignBitmap::from_layout("l", &layout);
        // bit order: (slot0,frag0)=+, (slot0,frag1)=+, (slot1,frag0)=-, (slot1,frag1)=-
        assert_eq!(bm.packed, vec![0b1100]);
    }

    #[test]
    fn sign_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("signs.sgn");
        let layers = vec![SignBitmap::from_layout("l", &sample_layout())];
        write_signs(&path, &layers).unwrap();
        assert_eq!(read_signs(&path).unwrap(), layers);
    }

    #[test]
    fn sign_sidecar_rejects_truncation() {
        let bytes = encode_signs(&[SignBitmap::from_layout("l", &sample_layout())]);
        let err = decode_signs(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Container(_)), "{err}");
    }
}
