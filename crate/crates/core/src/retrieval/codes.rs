use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::HashCodeMatrix;

pub const CODE_MAGIC: &[u8; 4] = b"VDSB";
pub const CODE_VERSION: u32 = 1;

/// Number of bits that differ between two {-1,+1} codes.
pub fn hamming_distance(a: &[i8], b: &[i8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "cannot compare a {}-bit code with a {}-bit code",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Codes packed 64 bits per word. Bit `k` of a code lives in bit `k % 64`
/// of word `k / 64`; a set bit means +1. Padding bits are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedCodes {
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

pub fn pack_code(code: &[i8]) -> Vec<u64> {
    let mut words = vec![0u64; words_for(code.len())];
    for (k, &b) in code.iter().enumerate() {
        if b > 0 {
            words[k / 64] |= 1u64 << (k % 64);
        }
    }
    words
}

#[inline]
pub fn packed_distance(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

impl PackedCodes {
    pub fn from_matrix(codes: &HashCodeMatrix) -> Self {
        let bits = codes.bits();
        let words_per_code = words_for(bits);
        let mut words = Vec::with_capacity(words_per_code * codes.len());
        for c in codes.iter() {
            words.extend(pack_code(c));
        }
        PackedCodes {
            bits,
            words_per_code,
            words,
        }
    }

    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("codes need at least one bit".into()));
        }
        let words_per_code = words_for(bits);
        if !words.len().is_multiple_of(words_per_code) {
            return Err(Error::dim(format!(
                "{} words is not a multiple of {words_per_code} words per code",
                words.len()
            )));
        }
        let tail = bits % 64;
        if tail != 0 {
            let mask = !0u64 << tail;
            if let Some(j) = words
                .chunks(words_per_code)
                .position(|c| c[words_per_code - 1] & mask != 0)
            {
                return Err(Error::Shape {
                    what: "packed codes",
                    detail: format!("code {j} has padding bits set beyond bit {bits}"),
                });
            }
        }
        Ok(PackedCodes {
            bits,
            words_per_code,
            words,
        })
    }

    pub fn to_matrix(&self) -> HashCodeMatrix {
        let mut flat = Vec::with_capacity(self.bits * self.len());
        for c in self.iter() {
            flat.extend((0..self.bits).map(|k| if c[k / 64] >> (k % 64) & 1 == 1 { 1i8 } else { -1 }));
        }
        HashCodeMatrix::new(self.bits, flat).expect("unpacked codes are valid")
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.words_per_code
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn code(&self, j: usize) -> &[u64] {
        &self.words[j * self.words_per_code..(j + 1) * self.words_per_code]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u64]> {
        self.words.chunks(self.words_per_code)
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    /// Distances from `query` to every code, in index order.
    pub fn distances(&self, query: &[u64]) -> Result<Vec<usize>> {
        if query.len() != self.words_per_code {
            return Err(Error::dim(format!(
                "query has {} words, database codes have {}",
                query.len(),
                self.words_per_code
            )));
        }
        Ok(self.iter().map(|c| packed_distance(query, c)).collect())
    }
}

pub fn save_codes(path: &Path, codes: &PackedCodes) -> Result<()> {
    write_atomic(path, |w| write_codes(w, codes))
}

pub fn load_codes(path: &Path) -> Result<PackedCodes> {
    let mut r = BufReader::new(File::open(path)?);
    read_codes(&mut r)
}

pub fn write_codes(w: &mut dyn Write, codes: &PackedCodes) -> Result<()> {
    let bits = u32::try_from(codes.bits())
        .map_err(|_| Error::InvalidArgument(format!("{} bits does not fit the code file", codes.bits())))?;
    w.write_all(CODE_MAGIC)?;
    w.write_u32::<LittleEndian>(CODE_VERSION)?;
    w.write_u32::<LittleEndian>(bits)?;
    w.write_u64::<LittleEndian>(codes.len() as u64)?;
    for &word in codes.as_words() {
        w.write_u64::<LittleEndian>(word)?;
    }
    Ok(())
}

pub fn read_codes(r: &mut dyn Read) -> Result<PackedCodes> {
    const WHAT: &str = "code file";
    let trunc = |e: io::Error, at: &str| -> Error {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                what: WHAT,
                detail: format!("ended while reading {at}"),
            }
        } else {
            Error::Io(e)
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| trunc(e, "magic"))?;
    if &magic != CODE_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: format!("{:?}", String::from_utf8_lossy(CODE_MAGIC)),
            found: format!("{magic:02x?}"),
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "version"))?;
    if version != CODE_VERSION {
        return Err(Error::UnsupportedVersion {
            what: WHAT,
            expected: CODE_VERSION,
            found: version,
        });
    }
    let bits = r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "bit count"))? as usize;
    if bits == 0 {
        return Err(Error::Shape {
            what: WHAT,
            detail: "zero-bit codes".into(),
        });
    }
    let n = r.read_u64::<LittleEndian>().map_err(|e| trunc(e, "code count"))?;
    let total = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(words_for(bits)))
        .ok_or_else(|| Error::Shape {
            what: WHAT,
            detail: format!("{n} codes is too many"),
        })?;
    let mut words = Vec::new();
    for j in 0..total {
        words.push(
            r.read_u64::<LittleEndian>()
                .map_err(|e| trunc(e, &format!("code {}", j / words_for(bits))))?,
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Shape {
            what: WHAT,
            detail: "trailing bytes after the last code".into(),
        });
    }
    PackedCodes::from_words(bits, words).map_err(|e| match e {
        Error::Shape { detail, .. } => Error::Shape { what: WHAT, detail },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn random_code(rng: &mut Rng, bits: usize) -> Vec<i8> {
        (0..bits).map(|_| if rng.index(2) == 0 { -1 } else { 1 }).collect()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(hamming_distance(&[1, -1, 1], &[1, 1, -1]).unwrap(), 2);
        let mut rng = Rng::new(3);
        let a = random_code(&mut rng, 16);
        let neg: Vec<i8> = a.iter().map(|b| -b).collect();
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &neg).unwrap(), 16);
        assert!(hamming_distance(&[1, 1], &[1]).is_err());
    }

    #[test]
    fn bit_order_is_little_endian() {
        let mut code = vec![-1i8; 70];
        code[0] = 1;
        code[3] = 1;
        code[64] = 1;
        code[69] = 1;
        assert_eq!(pack_code(&code), vec![0b1001, 0b100001]);
    }

    #[test]
    fn file_round_trip_and_size() {
        let mut rng = Rng::new(1);
        for bits in [1usize, 16, 64, 65, 130] {
            let codes: Vec<Vec<i8>> = (0..5).map(|_| random_code(&mut rng, bits)).collect();
            let m = HashCodeMatrix::from_codes(bits, &codes).unwrap();
            let packed = PackedCodes::from_matrix(&m);
            let mut buf = Vec::new();
            write_codes(&mut buf, &packed).unwrap();
            assert_eq!(buf.len(), 20 + 5 * 8 * words_for(bits));
            let back = read_codes(&mut buf.as_slice()).unwrap();
            assert_eq!(back, packed);
            assert_eq!(back.to_matrix(), m);
        }
    }

    #[test]
    fn file_errors() {
        let m = HashCodeMatrix::from_codes(3, &[[1i8, -1, 1]]).unwrap();
        let mut buf = Vec::new();
        write_codes(&mut buf, &PackedCodes::from_matrix(&m)).unwrap();

        let mut bad = buf.clone();
        bad[..4].copy_from_slice(b"VDSH");
        assert!(matches!(read_codes(&mut bad.as_slice()), Err(Error::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            read_codes(&mut bad.as_slice()),
            Err(Error::UnsupportedVersion { .. })
        ));
        assert!(matches!(
            read_codes(&mut &buf[..buf.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_codes(&mut bad.as_slice()), Err(Error::Shape { .. })));
        let mut bad = buf.clone();
        *bad.last_mut().unwrap() = 0x80;
        assert!(matches!(read_codes(&mut bad.as_slice()), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(bits in 1usize..200, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = random_code(&mut rng, bits);
            let b = random_code(&mut rng, bits);
            let c = random_code(&mut rng, bits);
            let d = |x: &[i8], y: &[i8]| hamming_distance(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            prop_assert!(d(&a, &b) <= bits);
            prop_assert_eq!(packed_distance(&pack_code(&a), &pack_code(&b)), d(&a, &b));
        }
    }
}
