//! FTB v1 tensor container.
//!
//! Layout (little-endian):
//! ```text
//! [0..4)   magic "FTB1"
//! [4]      dtype code (1 = f32, 2 = f64)
//! [5]      rank
//! [6..)    rank x u64 dimensions
//! [..]     payload, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tensorstore::FeatureDump;

pub const FTB_MAGIC: &[u8; 4] = b"FTB1";
const FIXED_HEADER: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(data.len()) {
            return Err(Error::Shape(format!("shape {shape:?} does not match {} values", data.len())));
        }
        if shape.is_empty() || shape.len() > usize::from(u8::MAX) {
            return Err(Error::Shape(format!("unsupported rank {}", shape.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn into_matrix(self) -> Result<Matrix<T>> {
        match self.shape[..] {
            [rows, cols] => Matrix::new(rows, cols, self.data),
            _ => Err(Error::Shape(format!("expected a rank-2 tensor, got shape {:?}", self.shape))),
        }
    }
}

pub fn encode_tensor<T: Scalar>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * tensor.shape.len() + T::BYTES * tensor.data.len());
    out.extend_from_slice(FTB_MAGIC);
    out.push(T::FTB_DTYPE);
    out.push(tensor.shape.len() as u8);
    for &d in &tensor.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in &tensor.data {
        v.write_le(&mut out);
    }
    out
}

pub fn decode_tensor<T: Scalar>(bytes: &[u8], source: &str) -> Result<Tensor<T>> {
    let fail = |offset: usize, message: String| Error::Format {
        path: source.to_string(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < FIXED_HEADER {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != FTB_MAGIC {
        return Err(fail(0, format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != T::FTB_DTYPE {
        return Err(fail(4, format!("dtype code {} (expected {})", bytes[4], T::FTB_DTYPE)));
    }
    let rank = usize::from(bytes[5]);
    if rank == 0 {
        return Err(fail(5, "rank 0".into()));
    }
    let header = FIXED_HEADER + 8 * rank;
    if bytes.len() < header {
        return Err(fail(bytes.len(), format!("truncated dimensions (rank {rank})")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let at = FIXED_HEADER + 8 * i;
        let d = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let d = usize::try_from(d).map_err(|_| fail(at, format!("dimension {d} too large")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| fail(at, "element count overflows".into()))?;
        shape.push(d);
    }
    let payload = &bytes[header..];
    let expected = count
        .checked_mul(T::BYTES)
        .ok_or_else(|| fail(header, "payload size overflows".into()))?;
    if payload.len() < expected {
        return Err(fail(
            bytes.len(),
            format!("truncated payload: shape {shape:?} needs {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(fail(
            header + expected,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok(Tensor { shape, data })
}

pub fn write_tensor<T: Scalar>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, &path.display().to_string())
}

/// Reads a rank-2 feature matrix. Sample ids live in the manifest.
pub fn read_dump(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    read_tensor::<f32>(path)?.into_matrix()
}

pub fn write_dump(dump: &FeatureDump, path: impl AsRef<Path>) -> Result<()> {
    if dump.is_empty() {
        return Err(Error::invalid("empty dump"));
    }
    let tensor = Tensor::new(
        vec![dump.data.rows(), dump.data.cols()],
        dump.data.as_slice().to_vec(),
    )?;
    write_tensor(&tensor, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::DepthRatio;
    use proptest::prelude::*;

    fn dump(rows: usize, cols: usize, data: Vec<f32>) -> FeatureDump {
        let ids = (0..rows).map(|i| format!("s{i}")).collect();
        FeatureDump::new(DepthRatio::LAST, ids, Matrix::new(rows, cols, data).unwrap()).unwrap()
    }

    #[test]
    fn payload_size_is_rows_times_cols_times_four() {
        let d = dump(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = Tensor::new(vec![3, 2], d.data.as_slice().to_vec()).unwrap();
        let bytes = encode_tensor(&t);
        assert_eq!(bytes.len() - (6 + 2 * 8), 24);
        assert_eq!(&bytes[..4], b"FTB1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[22..26].try_into().unwrap()), 1.0);
    }

    #[test]
    fn minimal_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.ftb");
        write_dump(&dump(1, 1, vec![2.5]), &path).unwrap();
        let m = read_dump(&path).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.row(0), &[2.5]);
    }

    #[test]
    fn identical_dumps_give_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let d = dump(2, 3, vec![0.1, -0.2, 0.3, 1e-30, 7.0, -0.0]);
        write_dump(&d, dir.path().join("a.ftb")).unwrap();
        write_dump(&d, dir.path().join("b.ftb")).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a.ftb")).unwrap(),
            fs::read(dir.path().join("b.ftb")).unwrap()
        );
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let t = Tensor::new(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_tensor(&t);
        bytes.truncate(bytes.len() - 3);
        let err = decode_tensor::<f32>(&bytes, "mem").unwrap_err();
        match err {
            Error::Format { offset, message, .. } => {
                assert_eq!(offset as usize, bytes.len());
                assert!(message.contains("truncated payload"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_magic_and_dtype_are_reported_with_offset() {
        let t = Tensor::new(vec![1], vec![1.0f32]).unwrap();
        let mut bytes = encode_tensor(&t);
        bytes[0] = b'X';
        assert!(matches!(decode_tensor::<f32>(&bytes, "m"), Err(Error::Format { offset: 0, .. })));
        let bytes = encode_tensor(&t);
        assert!(matches!(decode_tensor::<f64>(&bytes, "m"), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(decode_tensor::<f32>(&bytes[..4], "m"), Err(Error::Format { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let t = Tensor::new(vec![1], vec![1.0f32]).unwrap();
        let mut bytes = encode_tensor(&t);
        bytes.push(0);
        assert!(matches!(decode_tensor::<f32>(&bytes, "m"), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_dump_is_rejected_on_write() {
        let d = FeatureDump {
            layer: DepthRatio::LAST,
            sample_ids: vec![],
            data: Matrix::new(0, 2, vec![]).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let err = write_dump(&d, dir.path().join("e.ftb")).unwrap_err();
        assert!(err.to_string().contains("empty dump"));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(any::<u32>(), 36),
        ) {
            // any finite bit pattern must survive
            let data: Vec<f32> = seed
                .iter()
                .take(rows * cols)
                .map(|&b| {
                    let v = f32::from_bits(b);
                    if v.is_finite() { v } else { 0.5 }
                })
                .collect();
            let t = Tensor::new(vec![rows, cols], data.clone()).unwrap();
            let back = decode_tensor::<f32>(&encode_tensor(&t), "mem").unwrap();
            prop_assert_eq!(back.shape, vec![rows, cols]);
            let bits: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }
}
