//! Little-endian binary model file.
//!
//! ```text
//! "MGMDL" | version u32 | input u32 | hidden u32 | n_labels u32
//! n_labels × (len u32, UTF-8 bytes)
//! dropout_p f64 | learning_rate f64 | batch_size u32 | epochs u32 | seed u64
//! means f32×input | stds f32×input | W1 | b1 | W2 | b2   (row-major f32)
//! CRC32 of every preceding byte
//! ```

use super::{ClassifierConfig, ClassifierError, ClassifierModel, Mlp, NormStats};
use crate::signal::StateLabel;

pub const MODEL_MAGIC: &[u8; 5] = b"MGMDL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const MAX_DIM: u32 = 1 << 20;

pub fn save_model(model: &ClassifierModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    for v in [MODEL_FORMAT_VERSION, c.input_dim as u32, c.hidden_units as u32, c.label_set.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for label in &c.label_set {
        out.extend_from_slice(&(label.as_str().len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_str().as_bytes());
    }
    out.extend_from_slice(&c.dropout_p.to_le_bytes());
    out.extend_from_slice(&c.learning_rate.to_le_bytes());
    out.extend_from_slice(&(c.batch_size as u32).to_le_bytes());
    out.extend_from_slice(&(c.epochs as u32).to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    for v in model.norm.mean.iter().chain(&model.norm.std).chain(model.network().params()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ClassifierError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, ClassifierError> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect())
    }

    fn dim(&mut self, what: &str) -> Result<usize, ClassifierError> {
        let v = self.u32()?;
        if v == 0 || v > MAX_DIM {
            return Err(ClassifierError::CorruptWeights(format!("{what} = {v}")));
        }
        Ok(v as usize)
    }
}

fn truncated(pos: usize) -> ClassifierError {
    ClassifierError::CorruptWeights(format!("file ends early at byte {pos}"))
}

pub fn load_model(bytes: &[u8]) -> Result<ClassifierModel, ClassifierError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MODEL_MAGIC.len())? != MODEL_MAGIC {
        return Err(ClassifierError::CorruptWeights("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion(version));
    }
    let input = r.dim("input_dim")?;
    let hidden = r.dim("hidden")?;
    let n_labels = r.dim("n_labels")?;
    let mut label_set = Vec::with_capacity(n_labels.min(64));
    for _ in 0..n_labels {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ClassifierError::CorruptWeights("label is not UTF-8".into()))?;
        label_set.push(StateLabel::new(name));
    }
    let dropout_p = r.f64()?;
    let learning_rate = r.f64()?;
    let batch_size = r.u32()? as usize;
    let epochs = r.u32()? as usize;
    let seed = r.u64()?;

    let n_params = Mlp::param_count(input, hidden, n_labels);
    let expected = r.pos + 4 * (2 * input + n_params) + 4;
    if bytes.len() != expected {
        return Err(ClassifierError::CorruptWeights(format!(
            "shapes {input}x{hidden}x{n_labels} need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(ClassifierError::CorruptWeights("checksum mismatch".into()));
    }
    let mean = r.f32s(input)?;
    let std = r.f32s(input)?;
    let params = r.f32s(n_params)?;
    if mean.iter().chain(&std).chain(&params).any(|v| !v.is_finite()) {
        return Err(ClassifierError::CorruptWeights("non-finite value".into()));
    }
    if std.iter().any(|&s| s < 0.0) {
        return Err(ClassifierError::CorruptWeights("negative standard deviation".into()));
    }
    let config = ClassifierConfig {
        input_dim: input,
        hidden_units: hidden,
        dropout_p,
        learning_rate,
        batch_size,
        epochs,
        label_set,
        seed,
    };
    let net = Mlp::from_parts(input, hidden, n_labels, params).expect("length checked above");
    ClassifierModel::new(config, NormStats { mean, std }, net).map_err(|e| match e {
        ClassifierError::InvalidConfig(m) => ClassifierError::CorruptWeights(m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> ClassifierModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::init(14, 64, 4, &mut rng);
        net.round_to_f32();
        let mean = (0..14).map(|_| rng.random::<f32>() as f64).collect();
        let std = (0..14).map(|i| if i == 3 { 0.0 } else { rng.random::<f32>() as f64 }).collect();
        ClassifierModel::new(ClassifierConfig::with_seed(seed), NormStats { mean, std }, net).unwrap()
    }

    fn header_len(bytes: &[u8]) -> usize {
        bytes.len() - 4 - 4 * (28 + Mlp::param_count(14, 64, 4))
    }

    #[test]
    fn round_trip_is_lossless() {
        let m = model(4);
        let loaded = load_model(&save_model(&m)).unwrap();
        assert_eq!(loaded, m);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let x: Vec<f64> = (0..14).map(|_| rng.random()).collect();
            assert_eq!(loaded.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
        }
        assert_eq!(save_model(&loaded), save_model(&m));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = save_model(&model(1));
        for cut in [0, 3, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(load_model(&bytes[..cut]), Err(ClassifierError::CorruptWeights(_))), "cut {cut}");
        }
    }

    #[test]
    fn missing_bias_entry_is_corrupt() {
        // drop one float from the b1 block and re-checksum, so only the shape is wrong
        let bytes = save_model(&model(2));
        let b1_start = header_len(&bytes) + 4 * (28 + 64 * 14);
        let mut body = bytes[..bytes.len() - 4].to_vec();
        body.drain(b1_start..b1_start + 4);
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(load_model(&body), Err(ClassifierError::CorruptWeights(_))));
    }

    #[test]
    fn version_is_checked() {
        let mut bytes = save_model(&model(3));
        bytes[5..9].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(load_model(&bytes), Err(ClassifierError::UnsupportedVersion(2)));
    }

    #[test]
    fn flipped_bit_fails_checksum() {
        let mut bytes = save_model(&model(5));
        let i = bytes.len() - 100;
        bytes[i] ^= 0x10;
        assert!(matches!(load_model(&bytes), Err(ClassifierError::CorruptWeights(_))));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = save_model(&model(6));
        bytes[0] = b'X';
        assert!(matches!(load_model(&bytes), Err(ClassifierError::CorruptWeights(_))));
    }
}
