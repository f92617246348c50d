//! IDX image datasets (MNIST, Fashion-MNIST): parsing, normalization,
//! subsetting and a binary cache.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parsed IDX tensor of unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX buffer (gzip-compressed input is detected by its magic
/// bytes). Only the unsigned-byte element type `0x08` is accepted.
pub fn parse_idx(raw: &[u8]) -> Result<IdxTensor> {
    let owned;
    let bytes: &[u8] = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw).read_to_end(&mut out).map_err(|e| Error::Parse {
            offset: 0,
            message: format!("gzip stream: {e}"),
        })?;
        owned = out;
        &owned
    } else {
        raw
    };

    let word = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
            .ok_or(Error::Parse {
                offset: off as u64,
                message: "header truncated".into(),
            })
    };
    let magic = word(0)?;
    if magic >> 16 != 0 || (magic >> 8) & 0xff != 0x08 {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {magic:#010x}: expected unsigned-byte IDX (0x000008nn)"),
        });
    }
    let ndim = (magic & 0xff) as usize;
    if ndim == 0 {
        return Err(Error::Parse {
            offset: 3,
            message: "zero-dimensional IDX tensor".into(),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut count: usize = 1;
    for k in 0..ndim {
        let v = word(4 + 4 * k)? as usize;
        count = count.checked_mul(v).ok_or(Error::Parse {
            offset: (4 + 4 * k) as u64,
            message: "dimension product overflows".into(),
        })?;
        dims.push(v);
    }
    let header = 4 + 4 * ndim;
    let payload = bytes.len() - header.min(bytes.len());
    if payload != count {
        return Err(Error::Parse {
            offset: (header + payload.min(count)) as u64,
            message: format!("payload holds {payload} bytes, header promises {count}"),
        });
    }
    Ok(IdxTensor {
        magic,
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxTensor> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&raw)
}

/// Labelled inputs with every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `n × d`, row-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub d: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Vec<f64>, labels: Vec<usize>, d: usize, n_classes: usize) -> Result<Self> {
        if d == 0 || inputs.len() != labels.len() * d {
            return Err(Error::dim("dataset inputs", labels.len() * d, inputs.len()));
        }
        if let Some(v) = inputs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("input value {v} outside [0, 1]")));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid(format!("label {y} out of range for {n_classes} classes")));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            labels,
            d,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        Dataset {
            name: self.name.clone(),
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            d: self.d,
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }
}

/// Builds a dataset from an image tensor and a label tensor, flattening
/// images row-major and scaling bytes by `1/255`.
pub fn dataset_from_idx(name: &str, images: &IdxTensor, labels: &IdxTensor, n_classes: usize) -> Result<Dataset> {
    if images.magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("image file magic {:#010x}, expected {IDX_IMAGES_MAGIC:#010x}", images.magic),
        });
    }
    if labels.magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("label file magic {:#010x}, expected {IDX_LABELS_MAGIC:#010x}", labels.magic),
        });
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::dim("label count", n, labels.dims[0]));
    }
    let d = images.dims[1..].iter().product();
    let inputs = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let labels = labels.data.iter().map(|&b| b as usize).collect();
    Dataset::new(name, inputs, labels, d, n_classes)
}

pub const FASHION_MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [dir.join(format!("{stem}.gz")), dir.join(stem)] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::io(
        dir.join(format!("{stem}[.gz]")),
        std::io::Error::new(std::io::ErrorKind::NotFound, format!("missing dataset file {stem}")),
    ))
}

/// Loads the canonical four-file layout (raw or `.gz`) used by MNIST and
/// Fashion-MNIST.
pub fn load_idx_pair_dir(dir: &Path, name: &str) -> Result<(Dataset, Dataset)> {
    let load = |stem: &str| load_idx(&locate(dir, stem)?);
    let train = dataset_from_idx(&format!("{name}-train"), &load(FASHION_MNIST_FILES[0])?, &load(FASHION_MNIST_FILES[1])?, 10)?;
    let test = dataset_from_idx(&format!("{name}-test"), &load(FASHION_MNIST_FILES[2])?, &load(FASHION_MNIST_FILES[3])?, 10)?;
    Ok((train, test))
}

pub fn load_fashion_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    load_idx_pair_dir(dir, "fashion-mnist")
}

/// Seeded subsample without replacement. Unstratified draws keep the
/// original row order of the chosen indices; stratified draws take
/// `floor(n_keep·share)` per class plus remainders by largest fraction.
pub fn subset(ds: &Dataset, n_keep: usize, seed: u64, stratified: bool) -> Result<Dataset> {
    if n_keep == 0 || n_keep > ds.len() {
        return Err(Error::invalid(format!("subset size {n_keep} outside 1..={}", ds.len())));
    }
    if n_keep == ds.len() {
        return Ok(ds.clone());
    }
    let mut rng = seeded(seed, stream::SUBSET);
    let mut chosen = if stratified {
        let counts = ds.class_counts();
        let n = ds.len() as f64;
        let mut quota: Vec<(usize, f64)> = counts
            .iter()
            .map(|&c| {
                let exact = n_keep as f64 * c as f64 / n;
                (exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let mut left = n_keep - quota.iter().map(|q| q.0).sum::<usize>();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| quota[b].1.partial_cmp(&quota[a].1).unwrap().then(a.cmp(&b)));
        for &k in &order {
            if left == 0 {
                break;
            }
            if quota[k].0 < counts[k] {
                quota[k].0 += 1;
                left -= 1;
            }
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
        for (i, &y) in ds.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let mut picked = Vec::with_capacity(n_keep);
        for (k, idx) in by_class.iter_mut().enumerate() {
            idx.shuffle(&mut rng);
            picked.extend_from_slice(&idx[..quota[k].0]);
        }
        picked
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n_keep);
        idx
    };
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}

/// Seeded permutation of the rows.
pub fn shuffled(ds: &Dataset, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut seeded(seed, stream::SUBSET));
    ds.select(&idx)
}

/// First `n_first` rows and the rest.
pub fn split(ds: &Dataset, n_first: usize) -> Result<(Dataset, Dataset)> {
    if n_first > ds.len() {
        return Err(Error::invalid(format!("split point {n_first} beyond {} rows", ds.len())));
    }
    let first: Vec<usize> = (0..n_first).collect();
    let rest: Vec<usize> = (n_first..ds.len()).collect();
    Ok((ds.select(&first), ds.select(&rest)))
}

/// Gaussian blobs around `n_classes` random centers in `[0.2, 0.8]^d`,
/// clamped to `[0, 1]`. Train and test share the centers; labels cycle
/// through the classes.
pub fn synthetic_pair(n_train: usize, n_test: usize, d: usize, n_classes: usize, spread: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if d == 0 || n_classes == 0 || !(spread >= 0.0) {
        return Err(Error::invalid("synthetic data needs d >= 1, at least one class and spread >= 0"));
    }
    let mut rng = seeded(seed, stream::TEST_DATA);
    let centers: Vec<f64> = (0..n_classes * d).map(|_| rng.gen_range(0.2..0.8)).collect();
    let mut make = |name: &str, n: usize| {
        let mut inputs = Vec::with_capacity(n * d);
        let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        for &y in &labels {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                inputs.push((centers[y * d + k] + spread * z).clamp(0.0, 1.0));
            }
        }
        Dataset::new(name, inputs, labels, d, n_classes)
    };
    let train = make("synthetic-train", n_train)?;
    let test = make("synthetic-test", n_test)?;
    Ok((train, test))
}

/// Cache layout, all integers little-endian:
///
/// | bytes | field                                  |
/// |-------|----------------------------------------|
/// | 4     | magic `QRFD`                            |
/// | 1     | version (1)                            |
/// | 8     | n rows (u64)                           |
/// | 8     | d (u64)                                |
/// | 8     | class count (u64)                      |
/// | 8     | name length (u64), then UTF-8 name     |
/// | 8·n·d | inputs as f64                          |
/// | 8·n   | labels as u64                          |
pub const CACHE_MAGIC: &[u8; 4] = b"QRFD";
pub const CACHE_VERSION: u8 = 1;

pub fn encode_cache(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(45 + ds.name.len() + 8 * (ds.inputs.len() + ds.labels.len()));
    out.extend_from_slice(CACHE_MAGIC);
    out.push(CACHE_VERSION);
    for v in [ds.len() as u64, ds.d as u64, ds.n_classes as u64, ds.name.len() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(ds.name.as_bytes());
    for v in &ds.inputs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &y in &ds.labels {
        out.extend_from_slice(&(y as u64).to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<Dataset> {
    let perr = |offset: usize, message: &str| Error::Parse {
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < 5 || &bytes[..4] != CACHE_MAGIC {
        return Err(perr(0, "not a dataset cache (bad magic)"));
    }
    if bytes[4] != CACHE_VERSION {
        return Err(perr(4, &format!("unsupported cache version {}", bytes[4])));
    }
    let mut pos = 5;
    let u64_at = |pos: &mut usize| -> Result<u64> {
        let b = bytes.get(*pos..*pos + 8).ok_or_else(|| perr(*pos, "truncated"))?;
        *pos += 8;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    };
    let n = u64_at(&mut pos)? as usize;
    let d = u64_at(&mut pos)? as usize;
    let c = u64_at(&mut pos)? as usize;
    let name_len = u64_at(&mut pos)? as usize;
    let name_bytes = bytes.get(pos..pos + name_len).ok_or_else(|| perr(pos, "truncated name"))?;
    let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| perr(pos, "name is not UTF-8"))?;
    pos += name_len;
    let need = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|k| k.checked_mul(8))
        .ok_or_else(|| perr(pos, "size overflow"))?;
    if bytes.len() - pos != need {
        return Err(perr(pos, &format!("payload is {} bytes, expected {need}", bytes.len() - pos)));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let inputs = bytes[pos..pos + 8 * n * d].chunks_exact(8).map(f).collect();
    pos += 8 * n * d;
    let labels = bytes[pos..]
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
        .collect();
    Dataset::new(name, inputs, labels, d, c)
}

pub fn write_cache(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_cache(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Dataset> {
    decode_cache(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// MD5 digests of the published gzip files.
pub const FASHION_MNIST_MD5: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte.gz", "8d4fb7e6c68d591d4c3dfef9ec88bf0d"),
    ("train-labels-idx1-ubyte.gz", "25c81989df183df01b3e8a0aad5dffbe"),
    ("t10k-images-idx3-ubyte.gz", "bef4ecab320f06d8554ea6380940ec79"),
    ("t10k-labels-idx1-ubyte.gz", "bb300cfdad3c16e7a12a480ee83cd310"),
];

pub const FASHION_MNIST_URL: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com";

pub fn md5_hex(bytes: &[u8]) -> String {
    use md5::{Digest, Md5};
    Md5::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Downloads the four gzip files into `dir`, verifying each MD5 before the
/// file is written. Existing files with a matching digest are kept.
pub fn fetch_fashion_mnist(base_url: &str, dir: &Path, verify: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (file, digest) in FASHION_MNIST_MD5 {
        let path = dir.join(file);
        if let Ok(existing) = std::fs::read(&path) {
            if !verify || md5_hex(&existing) == digest {
                log::info!("{} already present", path.display());
                written.push(path);
                continue;
            }
        }
        let url = format!("{}/{file}", base_url.trim_end_matches('/'));
        log::info!("fetching {url}");
        let resp = ureq::get(&url).call().map_err(|e| Error::Fetch(format!("{url}: {e}")))?;
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .map_err(|e| Error::Fetch(format!("{url}: {e}")))?;
        if verify {
            let got = md5_hex(&body);
            if got != digest {
                return Err(Error::Fetch(format!("{file}: md5 {got} does not match {digest}")));
            }
        }
        std::fs::write(&path, &body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn magic_numbers() {
        assert_eq!(IDX_IMAGES_MAGIC, 2051);
        assert_eq!(IDX_LABELS_MAGIC, 2049);
    }

    #[test]
    fn parses_raw_and_gzip() {
        let raw = idx_bytes(IDX_IMAGES_MAGIC, &[2, 2, 3], &[0, 255, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        let t = parse_idx(&raw).unwrap();
        assert_eq!(t.dims, vec![2, 2, 3]);
        assert_eq!(t.data.len(), 12);

        let mut gz = Vec::new();
        {
            use std::io::Write;
            let mut enc = flate2::write::GzEncoder::new(&mut gz, flate2::Compression::fast());
            enc.write_all(&raw).unwrap();
        }
        assert_eq!(parse_idx(&gz).unwrap(), t);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let raw = idx_bytes(IDX_LABELS_MAGIC, &[5], &[1, 2, 3, 4]);
        match parse_idx(&raw) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_idx(&[0, 0, 8]).is_err());
        assert!(parse_idx(&idx_bytes(0x0000_0D01, &[1], &[0])).is_err());
        let huge = idx_bytes(IDX_IMAGES_MAGIC, &[u32::MAX, u32::MAX, u32::MAX], &[]);
        assert!(parse_idx(&huge).is_err());
    }

    fn toy(n_per_class: usize) -> Dataset {
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class * 10 {
            inputs.extend_from_slice(&[(i % 7) as f64 / 6.0, (i % 3) as f64 / 2.0]);
            labels.push(i % 10);
        }
        Dataset::new("toy", inputs, labels, 2, 10).unwrap()
    }

    #[test]
    fn subset_rules() {
        let ds = toy(300);
        assert_eq!(subset(&ds, ds.len(), 1, false).unwrap(), ds);
        let s = subset(&ds, 1000, 4, true).unwrap();
        assert_eq!(s.class_counts(), vec![100; 10]);
        assert_eq!(subset(&ds, 123, 9, false).unwrap(), subset(&ds, 123, 9, false).unwrap());
        assert_ne!(subset(&ds, 123, 9, false).unwrap(), subset(&ds, 123, 10, false).unwrap());
        assert!(subset(&ds, 0, 1, false).is_err());
        assert!(subset(&ds, ds.len() + 1, 1, false).is_err());

        let s = subset(&ds, 37, 2, true).unwrap();
        assert_eq!(s.len(), 37);
        assert!(s.class_counts().iter().all(|&c| c == 3 || c == 4));
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let ds = toy(5);
        let bytes = encode_cache(&ds);
        let back = decode_cache(&bytes).unwrap();
        assert_eq!(back, ds);
        assert!(back.inputs.iter().zip(&ds.inputs).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode_cache(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(decode_cache(&wrong).is_err());
    }

    #[test]
    fn normalization_is_exact() {
        for b in 0..=255u8 {
            let v = b as f64 / 255.0;
            assert_eq!((v * 255.0).round() as u8, b);
        }
    }

    #[test]
    fn missing_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_fashion_mnist(dir.path()).unwrap_err();
        assert!(err.to_string().contains("train-images-idx3-ubyte"), "{err}");
    }

    #[test]
    fn synthetic_is_seeded_and_bounded() {
        let (a, b) = synthetic_pair(50, 20, 6, 3, 0.1, 4).unwrap();
        assert_eq!((a.len(), b.len(), a.d), (50, 20, 6));
        assert!(a.inputs.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(synthetic_pair(50, 20, 6, 3, 0.1, 4).unwrap().0, a);
        assert_ne!(synthetic_pair(50, 20, 6, 3, 0.1, 5).unwrap().0, a);
    }

    #[test]
    fn md5_known_value() {
        assert_eq!(md5_hex(b"abc"), "900150983cd24fb0d6963f7d28e17f72");
    }
}
