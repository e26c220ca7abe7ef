//! Bias-free deep ReLU network, sign encoding and the binary weight file.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::numerics::{random_matrix, Matrix, Rng};

pub const WEIGHT_MAGIC: &[u8; 4] = b"VDSH";
pub const WEIGHT_VERSION: u32 = 1;

/// Layer widths of the network. The last hidden width is the code length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>) -> Result<Self> {
        let cfg = NetworkConfig { input_dim, hidden_dims };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `depth` hidden layers of `width` nodes, the last one `code_bits` wide.
    pub fn uniform(input_dim: usize, depth: usize, width: usize, code_bits: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("network needs at least one hidden layer".into()));
        }
        let mut dims = vec![width; depth];
        dims[depth - 1] = code_bits;
        NetworkConfig::new(input_dim, dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all layer widths must be positive: d={}, hidden={:?}",
                self.input_dim, self.hidden_dims
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.hidden_dims.len()
    }

    pub fn code_bits(&self) -> usize {
        *self.hidden_dims.last().expect("validated non-empty")
    }

    /// Width of layer `m`, with layer 0 the input.
    pub fn dim(&self, m: usize) -> usize {
        if m == 0 {
            self.input_dim
        } else {
            self.hidden_dims[m - 1]
        }
    }

    /// Total number of weights (edges) in the network.
    pub fn num_weights(&self) -> usize {
        (1..=self.depth()).map(|m| self.dim(m) * self.dim(m - 1)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    config: NetworkConfig,
    layers: Vec<Matrix>,
}

impl NetworkWeights {
    pub fn new(config: NetworkConfig, layers: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.depth() {
            return Err(Error::Shape {
                what: "network weights",
                detail: format!("{} layers for depth {}", layers.len(), config.depth()),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            let m = i + 1;
            if l.shape() != (config.dim(m), config.dim(m - 1)) {
                return Err(Error::Shape {
                    what: "network weights",
                    detail: format!(
                        "layer {m} is {:?}, expected ({}, {})",
                        l.shape(),
                        config.dim(m),
                        config.dim(m - 1)
                    ),
                });
            }
            if !l.is_finite() {
                return Err(Error::InvalidArgument(format!("layer {m} has non-finite weights")));
            }
        }
        Ok(NetworkWeights { config, layers })
    }

    /// Uniform random initialization. With `scale = None` each layer uses
    /// `sqrt(6 / fan_in)`, which keeps ReLU activations from shrinking with
    /// depth.
    pub fn random(config: NetworkConfig, rng: &mut Rng, scale: Option<f64>) -> Result<Self> {
        config.validate()?;
        let layers = (1..=config.depth())
            .map(|m| {
                let fan_in = config.dim(m - 1);
                let s = scale.unwrap_or_else(|| (6.0 / fan_in as f64).sqrt());
                random_matrix(rng, config.dim(m), fan_in, s)
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkWeights::new(config, layers)
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let layers = (1..=config.depth())
            .map(|m| Matrix::zeros(config.dim(m), config.dim(m - 1)))
            .collect();
        NetworkWeights::new(config, layers)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn code_bits(&self) -> usize {
        self.config.code_bits()
    }

    /// Weight matrix θ⁽ᵐ⁾ for `m` in `1..=depth`.
    pub fn layer(&self, m: usize) -> &Matrix {
        &self.layers[m - 1]
    }

    pub(crate) fn layer_mut(&mut self, m: usize) -> &mut Matrix {
        &mut self.layers[m - 1]
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        forward_all(x, self)
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<i8>> {
        encode(x, self)
    }

    /// Encodes every column of `features` (d x N).
    pub fn encode_columns(&self, features: &Matrix) -> Result<HashCodeMatrix> {
        let n = features.cols();
        let mut codes = Vec::with_capacity(n * self.code_bits());
        for j in 0..n {
            codes.extend(self.encode(&features.col(j))?);
        }
        HashCodeMatrix::new(self.code_bits(), codes)
    }
}

/// `max(0, θ z)` entry-wise.
pub fn relu_layer(z: &[f64], theta: &Matrix) -> Result<Vec<f64>> {
    let mut out = theta.matvec(z)?;
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(out)
}

/// Returns `[F₀(x), F₁(x), …, F_M(x)]` with `F₀(x) = x`.
pub fn forward_all(x: &[f64], weights: &NetworkWeights) -> Result<Vec<Vec<f64>>> {
    if x.len() != weights.config.input_dim {
        return Err(Error::dim(format!(
            "input has length {}, network expects {}",
            x.len(),
            weights.config.input_dim
        )));
    }
    let mut out = Vec::with_capacity(weights.depth() + 1);
    out.push(x.to_vec());
    for theta in &weights.layers {
        let next = relu_layer(out.last().expect("non-empty"), theta)?;
        out.push(next);
    }
    Ok(out)
}

/// Sign with `sign(0) = -1`.
#[inline]
pub fn sign_bit(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Hash code of `x`: entry-wise sign of the final layer output.
pub fn encode(x: &[f64], weights: &NetworkWeights) -> Result<Vec<i8>> {
    let f = forward_all(x, weights)?;
    Ok(f.last().expect("non-empty").iter().map(|&v| sign_bit(v)).collect())
}

/// K-bit {-1,+1} codes for N samples, stored code after code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashCodeMatrix {
    bits: usize,
    codes: Vec<i8>,
}

impl HashCodeMatrix {
    pub fn new(bits: usize, codes: Vec<i8>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("codes need at least one bit".into()));
        }
        if !codes.len().is_multiple_of(bits) {
            return Err(Error::dim(format!(
                "{} entries is not a multiple of {bits} bits",
                codes.len()
            )));
        }
        if let Some(bad) = codes.iter().find(|&&b| b != 1 && b != -1) {
            return Err(Error::InvalidArgument(format!("code entry {bad} is not -1 or +1")));
        }
        Ok(HashCodeMatrix { bits, codes })
    }

    pub fn from_codes<C: AsRef<[i8]>>(bits: usize, codes: &[C]) -> Result<Self> {
        let mut flat = Vec::with_capacity(bits * codes.len());
        for c in codes {
            if c.as_ref().len() != bits {
                return Err(Error::dim(format!(
                    "code of length {} in a {bits}-bit matrix",
                    c.as_ref().len()
                )));
            }
            flat.extend_from_slice(c.as_ref());
        }
        HashCodeMatrix::new(bits, flat)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.codes.len() / self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, j: usize) -> &[i8] {
        &self.codes[j * self.bits..(j + 1) * self.bits]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i8]> {
        self.codes.chunks(self.bits)
    }
}

pub fn save_weights(path: &Path, weights: &NetworkWeights, classifier: Option<&Matrix>) -> Result<()> {
    write_atomic(path, |w| write_weights(w, weights, classifier))
}

pub fn load_weights(path: &Path) -> Result<(NetworkWeights, Option<Matrix>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_weights(&mut r)
}

pub fn write_weights(w: &mut dyn Write, weights: &NetworkWeights, classifier: Option<&Matrix>) -> Result<()> {
    let cfg = weights.config();
    w.write_all(WEIGHT_MAGIC)?;
    w.write_u32::<LittleEndian>(WEIGHT_VERSION)?;
    w.write_u32::<LittleEndian>(to_u32(cfg.depth())?)?;
    for m in 0..=cfg.depth() {
        w.write_u32::<LittleEndian>(to_u32(cfg.dim(m))?)?;
    }
    for layer in weights.layers() {
        for &v in layer.as_slice() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    match classifier {
        None => w.write_u8(0)?,
        Some(cls) => {
            if cls.rows() != cfg.code_bits() {
                return Err(Error::Shape {
                    what: "classifier",
                    detail: format!("{} rows for {} code bits", cls.rows(), cfg.code_bits()),
                });
            }
            w.write_u8(1)?;
            w.write_u32::<LittleEndian>(to_u32(cls.cols())?)?;
            for &v in cls.as_slice() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    Ok(())
}

pub fn read_weights(r: &mut dyn Read) -> Result<(NetworkWeights, Option<Matrix>)> {
    const WHAT: &str = "weight file";
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
    if &magic != WEIGHT_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: format!("{:?}", String::from_utf8_lossy(WEIGHT_MAGIC)),
            found: format!("{magic:02x?}"),
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "version"))?;
    if version != WEIGHT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: WHAT,
            expected: WEIGHT_VERSION,
            found: version,
        });
    }
    let depth = r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "depth"))? as usize;
    if depth == 0 {
        return Err(Error::Shape {
            what: WHAT,
            detail: "zero hidden layers".into(),
        });
    }
    let mut dims = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        dims.push(r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "layer dims"))? as usize);
    }
    let config = NetworkConfig {
        input_dim: dims[0],
        hidden_dims: dims[1..].to_vec(),
    };
    config.validate().map_err(|e| Error::Shape {
        what: WHAT,
        detail: e.to_string(),
    })?;
    let mut layers = Vec::with_capacity(depth);
    for m in 1..=depth {
        let (rows, cols) = (dims[m], dims[m - 1]);
        let data = read_f64s(r, rows * cols).map_err(|e| trunc(e, &format!("layer {m}")))?;
        layers.push(Matrix::from_vec(rows, cols, data)?);
    }
    let weights = NetworkWeights::new(config, layers).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Shape {
            what: WHAT,
            detail: msg,
        },
        other => other,
    })?;
    let flag = r.read_u8().map_err(|e| trunc(e, "classifier flag"))?;
    let classifier = match flag {
        0 => None,
        1 => {
            let classes = r.read_u32::<LittleEndian>().map_err(|e| trunc(e, "class count"))? as usize;
            if classes == 0 {
                return Err(Error::Shape {
                    what: WHAT,
                    detail: "classifier with zero classes".into(),
                });
            }
            let k = weights.code_bits();
            let data = read_f64s(r, k * classes).map_err(|e| trunc(e, "classifier"))?;
            Some(Matrix::from_vec(k, classes, data)?)
        }
        other => {
            return Err(Error::Shape {
                what: WHAT,
                detail: format!("classifier flag {other} is not 0 or 1"),
            })
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Shape {
            what: WHAT,
            detail: "trailing bytes after classifier block".into(),
        });
    }
    Ok((weights, classifier))
}

fn read_f64s(r: &mut dyn Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(input_dim: usize, layers: Vec<Matrix>) -> NetworkWeights {
        let dims = layers.iter().map(|l| l.rows()).collect();
        NetworkWeights::new(NetworkConfig::new(input_dim, dims).unwrap(), layers).unwrap()
    }

    #[test]
    fn relu_layer_examples() {
        assert_eq!(relu_layer(&[2.0, -3.0], &Matrix::identity(2)).unwrap(), vec![2.0, 0.0]);
        assert_eq!(
            relu_layer(&[1.0, 2.0], &Matrix::from_rows(&[[1.0, 1.0]])).unwrap(),
            vec![3.0]
        );
        assert_eq!(relu_layer(&[5.0], &Matrix::from_rows(&[[-1.0]])).unwrap(), vec![0.0]);
        assert!(relu_layer(&[1.0], &Matrix::identity(2)).is_err());
    }

    #[test]
    fn forward_all_examples() {
        let w = net(2, vec![Matrix::identity(2)]);
        assert_eq!(
            w.forward_all(&[1.0, -1.0]).unwrap(),
            vec![vec![1.0, -1.0], vec![1.0, 0.0]]
        );

        let w = net(1, vec![Matrix::from_rows(&[[2.0]]), Matrix::from_rows(&[[3.0]])]);
        assert_eq!(w.forward_all(&[1.0]).unwrap(), vec![vec![1.0], vec![2.0], vec![6.0]]);

        let w = net(1, vec![Matrix::from_rows(&[[-1.0]]), Matrix::from_rows(&[[5.0]])]);
        assert_eq!(w.forward_all(&[1.0]).unwrap(), vec![vec![1.0], vec![0.0], vec![0.0]]);

        assert!(w.forward_all(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn encode_maps_zero_to_minus_one() {
        // F_M(x) = [0.5, 0, 2]
        let w = net(
            3,
            vec![Matrix::from_rows(&[[0.5, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])],
        );
        assert_eq!(w.encode(&[1.0, 1.0, 1.0]).unwrap(), vec![1, -1, 1]);
    }

    #[test]
    fn zero_weights_encode_all_minus_one() {
        let cfg = NetworkConfig::new(4, vec![3, 5]).unwrap();
        let w = NetworkWeights::zeros(cfg).unwrap();
        assert_eq!(w.encode(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![-1; 5]);
    }

    #[test]
    fn config_rejects_bad_dims() {
        assert!(NetworkConfig::new(3, vec![]).is_err());
        assert!(NetworkConfig::new(0, vec![2]).is_err());
        assert!(NetworkConfig::new(3, vec![2, 0]).is_err());
        let c = NetworkConfig::uniform(784, 4, 64, 16).unwrap();
        assert_eq!(c.hidden_dims, vec![64, 64, 64, 16]);
        assert_eq!(c.num_weights(), 784 * 64 + 64 * 64 * 2 + 64 * 16);
    }

    #[test]
    fn weights_shape_checked() {
        let cfg = NetworkConfig::new(2, vec![3]).unwrap();
        assert!(NetworkWeights::new(cfg.clone(), vec![Matrix::zeros(2, 3)]).is_err());
        assert!(NetworkWeights::new(cfg, vec![]).is_err());
    }

    #[test]
    fn hash_code_matrix_rejects_non_sign_entries() {
        assert!(HashCodeMatrix::new(2, vec![1, -1, 1, 0]).is_err());
        assert!(HashCodeMatrix::new(2, vec![1, -1, 1]).is_err());
        let h = HashCodeMatrix::new(2, vec![1, -1, -1, 1]).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.code(1), &[-1, 1]);
    }

    fn sample_weights() -> (NetworkWeights, Matrix) {
        let mut rng = Rng::new(3);
        let cfg = NetworkConfig::new(5, vec![4, 3]).unwrap();
        let w = NetworkWeights::random(cfg, &mut rng, None).unwrap();
        let cls = random_matrix(&mut rng, 3, 2, 1.0).unwrap();
        (w, cls)
    }

    #[test]
    fn weight_file_round_trip() {
        let (w, cls) = sample_weights();
        for classifier in [None, Some(&cls)] {
            let mut buf = Vec::new();
            write_weights(&mut buf, &w, classifier).unwrap();
            let (w2, c2) = read_weights(&mut buf.as_slice()).unwrap();
            assert_eq!(w2, w);
            assert_eq!(c2.as_ref(), classifier);
            for (a, b) in w.layers().iter().zip(w2.layers()) {
                let bits_a: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn weight_file_layout() {
        let (w, cls) = sample_weights();
        let mut buf = Vec::new();
        write_weights(&mut buf, &w, Some(&cls)).unwrap();
        let header = 4 + 4 + 4 + 3 * 4;
        let body = 8 * (4 * 5 + 3 * 4);
        let tail = 1 + 4 + 8 * 3 * 2;
        assert_eq!(buf.len(), header + body + tail);
        assert_eq!(&buf[..4], b"VDSH");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &5u32.to_le_bytes());
    }

    #[test]
    fn weight_file_errors() {
        let (w, cls) = sample_weights();
        let mut buf = Vec::new();
        write_weights(&mut buf, &w, Some(&cls)).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&mut bad.as_slice()), Err(Error::BadMagic { .. })));

        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            read_weights(&mut bad.as_slice()),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));

        // cut in the middle of the first matrix
        let cut = &buf[..24 + 8 * 7];
        assert!(matches!(read_weights(&mut &cut[..]), Err(Error::Truncated { .. })));

        let mut bad = buf.clone();
        bad[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(read_weights(&mut bad.as_slice()), Err(Error::Shape { .. })));

        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_weights(&mut bad.as_slice()), Err(Error::Shape { .. })));
    }
}
