//! Model checkpoints.
//!
//! ```text
//! magic        b"VRDM"
//! version      u32 (= 1)
//! kind         u32 (1 = relationship, 2 = attribute)
//! num_classes  u32
//! feature_dim  u32
//! n_branches   u32
//! per branch:  tag u32, n_layers u32, then n_layers × (in u32, out u32, activation u32)
//! parameters   f64, branch order, per layer weights (row-major in × out) then bias
//! ```
//!
//! Branch tags: 0 spatial, 1 visual, 2 subject head, 3 object head, 4 attribute head.
//! All values little-endian.

use std::path::Path;

use crate::attribute::AttributeModel;
use crate::error::{Error, Result};
use crate::fusion::FusionModel;
use crate::nn::{Activation, Dense, Mlp};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"VRDM";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_RELATIONSHIP: u32 = 1;
const KIND_ATTRIBUTE: u32 = 2;

const TAG_SPATIAL: u32 = 0;
const TAG_VISUAL: u32 = 1;
const TAG_SUBJECT: u32 = 2;
const TAG_OBJECT: u32 = 3;
const TAG_ATTRIBUTE: u32 = 4;

fn put(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode(kind: u32, num_classes: usize, feature_dim: usize, branches: &[(u32, &Mlp)]) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    put(&mut out, CHECKPOINT_VERSION);
    put(&mut out, kind);
    put(&mut out, num_classes as u32);
    put(&mut out, feature_dim as u32);
    put(&mut out, branches.len() as u32);
    for (tag, mlp) in branches {
        put(&mut out, *tag);
        put(&mut out, mlp.layers().len() as u32);
        for l in mlp.layers() {
            put(&mut out, l.input_dim() as u32);
            put(&mut out, l.output_dim() as u32);
            put(&mut out, l.activation.code());
        }
    }
    for (_, mlp) in branches {
        for v in mlp.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

struct Decoded {
    kind: u32,
    num_classes: usize,
    feature_dim: usize,
    branches: Vec<(u32, Mlp)>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, expected \"VRDM\"".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u32()?;
    let num_classes = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let n_branches = r.u32()?;
    if n_branches > 16 {
        return Err(Error::Checkpoint(format!("implausible branch count {n_branches}")));
    }
    let mut shapes = Vec::new();
    for _ in 0..n_branches {
        let tag = r.u32()?;
        let n_layers = r.u32()?;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let input = r.u32()? as usize;
            let output = r.u32()? as usize;
            let act = Activation::from_code(r.u32()?)
                .ok_or_else(|| Error::Checkpoint("unknown activation".into()))?;
            layers.push((input, output, act));
        }
        shapes.push((tag, layers));
    }
    let mut branches = Vec::new();
    for (tag, layers) in shapes {
        let mut dense = Vec::new();
        for (input, output, act) in layers {
            let mut l = Dense::zeros(input, output, act);
            for w in l.weights.iter_mut() {
                *w = r.f64()?;
            }
            for b in l.bias.iter_mut() {
                *b = r.f64()?;
            }
            dense.push(l);
        }
        branches.push((tag, Mlp::new(dense).map_err(|e| Error::Checkpoint(e.to_string()))?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Decoded {
        kind,
        num_classes,
        feature_dim,
        branches,
    })
}

impl FusionModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut branches = Vec::new();
        if let Some(m) = self.spatial_branch() {
            branches.push((TAG_SPATIAL, m));
        }
        branches.push((TAG_VISUAL, self.visual_branch()));
        if let Some(m) = self.subject_head() {
            branches.push((TAG_SUBJECT, m));
        }
        if let Some(m) = self.object_head() {
            branches.push((TAG_OBJECT, m));
        }
        encode(KIND_RELATIONSHIP, self.num_classes(), self.feature_dim(), &branches)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let d = decode(bytes)?;
        if d.kind != KIND_RELATIONSHIP {
            return Err(Error::Checkpoint(format!("expected a relationship model, found kind {}", d.kind)));
        }
        let (mut spatial, mut visual, mut subject, mut object) = (None, None, None, None);
        for (tag, mlp) in d.branches {
            let slot = match tag {
                TAG_SPATIAL => &mut spatial,
                TAG_VISUAL => &mut visual,
                TAG_SUBJECT => &mut subject,
                TAG_OBJECT => &mut object,
                other => return Err(Error::Checkpoint(format!("unexpected branch tag {other}"))),
            };
            if slot.replace(mlp).is_some() {
                return Err(Error::Checkpoint(format!("duplicate branch tag {tag}")));
            }
        }
        let visual = visual.ok_or_else(|| Error::Checkpoint("missing visual branch".into()))?;
        FusionModel::from_parts(d.num_classes, d.feature_dim, spatial, visual, subject, object)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

impl AttributeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(
            KIND_ATTRIBUTE,
            self.num_classes(),
            self.feature_dim(),
            &[(TAG_ATTRIBUTE, self.head())],
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let d = decode(bytes)?;
        if d.kind != KIND_ATTRIBUTE {
            return Err(Error::Checkpoint(format!("expected an attribute model, found kind {}", d.kind)));
        }
        let mut branches = d.branches;
        if branches.len() != 1 || branches[0].0 != TAG_ATTRIBUTE {
            return Err(Error::Checkpoint("attribute checkpoint must hold exactly one head".into()));
        }
        let head = branches.remove(0).1;
        if head.input_dim() != d.feature_dim || head.output_dim() != d.num_classes {
            return Err(Error::Checkpoint("attribute head dims disagree with header".into()));
        }
        Ok(AttributeModel::from_head(head))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionConfig;

    #[test]
    fn fusion_round_trip_all_layouts() {
        for (use_spatial, use_solo_heads) in [(true, true), (false, true), (true, false), (false, false)] {
            let cfg = FusionConfig {
                spatial_hidden: vec![5, 4],
                visual_hidden: vec![6],
                use_spatial,
                use_solo_heads,
            };
            let m = FusionModel::init(4, 3, &cfg, 8).unwrap();
            let back = FusionModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn header_layout() {
        let m = AttributeModel::init(3, 2, &[4], 0).unwrap();
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"VRDM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), KIND_ATTRIBUTE);
        let n_params = 2 * 4 + 4 + 4 * 3 + 3;
        assert_eq!(b.len(), 24 + 8 + 2 * 12 + 8 * n_params);
        assert_eq!(AttributeModel::from_bytes(&b).unwrap(), m);
    }

    #[test]
    fn kind_mismatch_and_truncation() {
        let a = AttributeModel::init(3, 2, &[4], 0).unwrap().to_bytes();
        assert!(FusionModel::from_bytes(&a).is_err());
        assert!(AttributeModel::from_bytes(&a[..a.len() - 1]).is_err());
        let mut extra = a.clone();
        extra.push(0);
        assert!(AttributeModel::from_bytes(&extra).is_err());
    }
}
