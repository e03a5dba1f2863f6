//! Fitted-model artifact and its binary file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "TCMODEL\0" | u16 format version | metadata | payload | sha256 of all preceding bytes
//! ```
//!
//! Reals are stored as `f64` bit patterns, which is exact for `f32` and `f64`.

use std::io::{Read, Write};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::num::Real;
use crate::numkit::{ParamKind, ParamSet, Tensor};
use crate::study::{HorizonIndex, TargetKind};

use super::forest::Forest;
use super::lstm::Lstm;
use super::mlp::Mlp;
use super::standardize::Standardizer;
use super::tree::{Node, RegressionTree};
use super::{Algorithm, ModelError};

pub const MAGIC: &[u8; 8] = b"TCMODEL\0";
pub const FORMAT_VERSION: u16 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactMeta<T> {
    pub algorithm: Algorithm,
    pub target_kind: TargetKind,
    pub horizon: HorizonIndex,
    pub schema_hash: String,
    /// Seed the fit was drawn from.
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// Input statistics, computed on the training rows only.
    pub standardizer: Option<Standardizer<T>>,
    /// Networks fit `y / target_scale`.
    pub target_scale: T,
    /// Days whose rows were used to fit (and standardize).
    pub train_days: Vec<NaiveDate>,
    pub train_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel<T> {
    Persistence,
    Forest(Forest<T>),
    Mlp(Mlp<T>),
    Lstm { net: Lstm<T>, lookback: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact<T> {
    pub meta: ArtifactMeta<T>,
    pub model: FittedModel<T>,
}

impl<T: Real> ModelArtifact<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Enc(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u16(FORMAT_VERSION);
        let m = &self.meta;
        w.u8(m.algorithm.tag());
        w.str(m.target_kind.code());
        w.u8(m.horizon.get());
        w.str(&m.schema_hash);
        w.u64(m.seed);
        w.u32(m.feature_names.len() as u32);
        m.feature_names.iter().for_each(|f| w.str(f));
        match &m.standardizer {
            None => w.u8(0),
            Some(s) => {
                w.u8(1);
                w.reals(&s.mean);
                w.reals(&s.std);
            }
        }
        w.real(m.target_scale);
        w.u32(m.train_days.len() as u32);
        for d in &m.train_days {
            w.str(&d.to_string());
        }
        w.u64(m.train_rows as u64);

        match &self.model {
            FittedModel::Persistence => {}
            FittedModel::Forest(f) => {
                w.u32(f.trees.len() as u32);
                for t in &f.trees {
                    w.u32(t.nodes.len() as u32);
                    for n in &t.nodes {
                        match n {
                            Node::Leaf { value } => {
                                w.u8(0);
                                w.real(*value);
                            }
                            Node::Split { feature, threshold, left, right } => {
                                w.u8(1);
                                w.u32(*feature as u32);
                                w.real(*threshold);
                                w.u32(*left as u32);
                                w.u32(*right as u32);
                            }
                        }
                    }
                }
            }
            FittedModel::Mlp(net) => w.params(&net.params),
            FittedModel::Lstm { net, lookback } => {
                w.u32(*lookback as u32);
                w.params(&net.params);
            }
        }
        let sum = Sha256::digest(&w.0);
        w.0.extend_from_slice(&sum);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < MAGIC.len() + 2 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelError::Magic { expected_version: FORMAT_VERSION });
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != FORMAT_VERSION {
            return Err(ModelError::Version { found: version, expected: FORMAT_VERSION });
        }
        if bytes.len() < MAGIC.len() + 2 + CHECKSUM_LEN {
            return Err(ModelError::Checksum { expected_version: FORMAT_VERSION });
        }
        let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != sum {
            return Err(ModelError::Checksum { expected_version: FORMAT_VERSION });
        }
        let mut r = Dec { buf: body, at: MAGIC.len() + 2 };
        let algorithm = Algorithm::from_tag(r.u8()?).ok_or_else(|| bad("algorithm tag"))?;
        let target_kind: TargetKind = r.str()?.parse().map_err(|_| bad("target kind"))?;
        let horizon = HorizonIndex::new(r.u8()?).map_err(|e| bad(&e.to_string()))?;
        let schema_hash = r.str()?;
        let seed = r.u64()?;
        let nf = r.u32()? as usize;
        let feature_names = (0..nf).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let standardizer = match r.u8()? {
            0 => None,
            1 => Some(Standardizer { mean: r.reals()?, std: r.reals()? }),
            _ => return Err(bad("standardizer flag")),
        };
        let target_scale = r.real()?;
        let nd = r.u32()? as usize;
        let train_days = (0..nd)
            .map(|_| r.str()?.parse::<NaiveDate>().map_err(|_| bad("train day")))
            .collect::<Result<Vec<_>, _>>()?;
        let train_rows = r.u64()? as usize;
        let meta = ArtifactMeta {
            algorithm,
            target_kind,
            horizon,
            schema_hash,
            seed,
            feature_names,
            standardizer,
            target_scale,
            train_days,
            train_rows,
        };

        let model = match algorithm {
            Algorithm::Persistence => FittedModel::Persistence,
            Algorithm::RandomForest => {
                let nt = r.u32()? as usize;
                let mut trees = Vec::with_capacity(nt);
                for _ in 0..nt {
                    let nn = r.u32()? as usize;
                    let mut nodes = Vec::with_capacity(nn);
                    for _ in 0..nn {
                        nodes.push(match r.u8()? {
                            0 => Node::Leaf { value: r.real()? },
                            1 => Node::Split {
                                feature: r.u32()? as usize,
                                threshold: r.real()?,
                                left: r.u32()? as usize,
                                right: r.u32()? as usize,
                            },
                            _ => return Err(bad("tree node tag")),
                        });
                    }
                    let ok = nodes.iter().all(|n| match n {
                        Node::Leaf { .. } => true,
                        Node::Split { feature, left, right, .. } => {
                            *feature < nf && *left < nn && *right < nn
                        }
                    });
                    if nodes.is_empty() || !ok {
                        return Err(bad("tree structure"));
                    }
                    trees.push(RegressionTree { nodes });
                }
                FittedModel::Forest(Forest { trees })
            }
            Algorithm::Mlp => FittedModel::Mlp(Mlp::from_params(r.params()?)?),
            Algorithm::Lstm => {
                let lookback = r.u32()? as usize;
                FittedModel::Lstm { net: Lstm::from_params(r.params()?)?, lookback }
            }
        };
        if r.at != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ModelArtifact { meta, model })
    }

    pub fn save(&self, mut sink: impl Write) -> Result<(), ModelError> {
        sink.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(mut source: impl Read) -> Result<Self, ModelError> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn bad(what: &str) -> ModelError {
    ModelError::Format(format!("corrupt artifact: {what}"))
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn real<T: Real>(&mut self, v: T) {
        self.u64(v.as_f64().to_bits());
    }
    fn reals<T: Real>(&mut self, v: &[T]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|&x| self.real(x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn params<T: Real>(&mut self, p: &ParamSet<T>) {
        self.u32(p.len() as u32);
        for e in p.iter() {
            self.str(&e.name);
            self.u8(e.kind.code());
            self.u32(e.value.shape().len() as u32);
            e.value.shape().iter().for_each(|&d| self.u32(d as u32));
            e.value.data().iter().for_each(|&x| self.real(x));
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Dec<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated field"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn real<T: Real>(&mut self) -> Result<T, ModelError> {
        let v = f64::from_bits(self.u64()?);
        if !v.is_finite() {
            return Err(bad("non-finite real"));
        }
        Ok(T::lit(v))
    }
    fn reals<T: Real>(&mut self) -> Result<Vec<T>, ModelError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.real()).collect()
    }
    fn str(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("utf-8 string"))
    }
    fn params<T: Real>(&mut self) -> Result<ParamSet<T>, ModelError> {
        let n = self.u32()? as usize;
        let mut p = ParamSet::new();
        for _ in 0..n {
            let name = self.str()?;
            let kind = ParamKind::from_code(self.u8()?).ok_or_else(|| bad("parameter kind"))?;
            let nd = self.u32()? as usize;
            let shape = (0..nd).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            if len > self.buf.len() {
                return Err(bad("parameter size"));
            }
            let data = (0..len).map(|_| self.real()).collect::<Result<Vec<T>, _>>()?;
            let t = Tensor::from_vec(&shape, data).map_err(|e| bad(&e.to_string()))?;
            p.add(name, kind, t).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_forest, ForestParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta<T: Real>(algorithm: Algorithm, standardizer: Option<Standardizer<T>>) -> ArtifactMeta<T> {
        ArtifactMeta {
            algorithm,
            target_kind: TargetKind::TollPrice,
            horizon: HorizonIndex::new(3).unwrap(),
            schema_hash: "0123456789abcdef".into(),
            seed: 99,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            standardizer,
            target_scale: T::lit(250.0),
            train_days: vec![NaiveDate::from_ymd_opt(2018, 7, 2).unwrap(), NaiveDate::from_ymd_opt(2018, 7, 3).unwrap()],
            train_rows: 40,
        }
    }

    fn artifacts<T: Real>() -> Vec<ModelArtifact<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<T>> = (0..60).map(|_| (0..3).map(|_| T::lit(rng.random_range(-2.0..2.0))).collect()).collect();
        let y: Vec<T> = x.iter().map(|r| r[0] * T::lit(3.0) - r[2]).collect();
        let rows: Vec<usize> = (0..60).collect();
        let params = ForestParams { n_trees: 5, ..Default::default() };
        let forest = fit_forest(&x, &y, &rows, &params, 1).unwrap();
        let st = || Some(Standardizer { mean: vec![T::lit(0.5); 3], std: vec![T::lit(2.0); 3] });
        vec![
            ModelArtifact { meta: meta(Algorithm::Persistence, None), model: FittedModel::Persistence },
            ModelArtifact { meta: meta(Algorithm::RandomForest, None), model: FittedModel::Forest(forest) },
            ModelArtifact {
                meta: meta(Algorithm::Mlp, st()),
                model: FittedModel::Mlp(Mlp::new(3, [4, 4, 3, 2], T::one(), &mut rng)),
            },
            ModelArtifact {
                meta: meta(Algorithm::Lstm, st()),
                model: FittedModel::Lstm { net: Lstm::new(3, 4, [3, 3, 2], T::one(), &mut rng), lookback: 4 },
            },
        ]
    }

    #[test]
    fn round_trip_every_algorithm() {
        for a in artifacts::<f64>() {
            let bytes = a.to_bytes();
            assert_eq!(&bytes[..8], MAGIC);
            let back = ModelArtifact::<f64>::from_bytes(&bytes).unwrap();
            assert_eq!(back, a, "{}", a.meta.algorithm);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn f32_round_trip_and_cross_width_load() {
        for a in artifacts::<f32>() {
            let mut file = Vec::new();
            a.save(&mut file).unwrap();
            assert_eq!(ModelArtifact::<f32>::load(file.as_slice()).unwrap(), a);
            let wide = ModelArtifact::<f64>::from_bytes(&file).unwrap();
            assert_eq!(wide.meta.target_scale, 250.0);
        }
    }

    #[test]
    fn truncation_and_corruption_fail_the_checksum() {
        let bytes = artifacts::<f64>()[1].to_bytes();
        for cut in [bytes.len() - 1, bytes.len() - 33, bytes.len() / 2, 12] {
            let err = ModelArtifact::<f64>::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, ModelError::Checksum { expected_version: FORMAT_VERSION }), "cut {cut}: {err}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x10;
        assert!(matches!(ModelArtifact::<f64>::from_bytes(&flipped), Err(ModelError::Checksum { .. })));
    }

    #[test]
    fn wrong_magic_or_version_names_the_expected_version() {
        let mut bytes = artifacts::<f64>()[0].to_bytes();
        bytes[8] = 7;
        let err = ModelArtifact::<f64>::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, ModelError::Version { found: 7, expected: FORMAT_VERSION }));
        assert!(err.to_string().contains("expected version 1"), "{err}");

        let err = ModelArtifact::<f64>::from_bytes(b"PK\x03\x04 not a model").unwrap_err();
        assert!(matches!(err, ModelError::Magic { .. }));
        assert!(err.to_string().contains("version 1"));
    }

    #[test]
    fn rejects_out_of_range_tree_links_even_with_a_valid_checksum() {
        let a = &artifacts::<f64>()[1];
        let mut bad_forest = a.clone();
        if let FittedModel::Forest(f) = &mut bad_forest.model {
            let n = f.trees[0].nodes.len();
            f.trees[0].nodes[0] = Node::Split { feature: 0, threshold: 0.0, left: n + 5, right: 0 };
        }
        let err = ModelArtifact::<f64>::from_bytes(&bad_forest.to_bytes()).unwrap_err();
        assert!(matches!(err, ModelError::Format(_)), "{err}");
    }
}
