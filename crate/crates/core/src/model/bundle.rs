//! Binary model bundle.
//!
//! Little-endian layout:
//!
//! ```text
//! offset size field
//!      0    4 magic "CVXA"
//!      4    2 format_version (u16)
//!      6    2 K classes (u16)
//!      8    2 C input channels (u16)
//!     10    2 T frames (u16)
//!     12    2 P patches (u16)
//!     14    2 m feature dimension (u16)
//!     16    1 loss kind (0 hinge, 1 squared)
//!     17    1 real width in bytes (8 or 4)
//!     18    1 flags (bit 0 trained, bit 1 electrode differentials)
//!     19    1 reserved, zero
//!     20    8 gamma (f64)
//!     28      norm means (C reals), norm stddevs (C reals),
//!             b (m reals), W (patch_dim x m, row-major), A (K x P x m)
//! ```
//!
//! Payload reals use the width from the header. 64-bit bundles round-trip
//! exactly; 32-bit bundles are the compact export.

use crate::dataio::NormStats;
use crate::error::{Error, FormatError, Result};
use crate::features::{FrameLayout, PatchSpec, RffMap};
use crate::losses::LossKind;
use crate::numkernel::Mat;

use super::{ModelBundle, WeightTensor};

pub const MAGIC: [u8; 4] = *b"CVXA";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;

const FLAG_TRAINED: u8 = 1;
const FLAG_DIFFERENTIALS: u8 = 2;
/// Upper bound on payload reals; anything larger is not a model of this family.
const MAX_PAYLOAD_REALS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            64 => Ok(Precision::F64),
            32 => Ok(Precision::F32),
            other => Err(Error::invalid(format!(
                "precision must be 32 or 64, got {other}"
            ))),
        }
    }
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v)
        .map_err(|_| FormatError::DimensionOverflow(format!("{what} = {v} exceeds u16")).into())
}

pub fn serialize(bundle: &ModelBundle, precision: Precision) -> Result<Vec<u8>> {
    bundle.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * bundle.weights.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (v, what) in [
        (bundle.classes(), "K"),
        (bundle.input_channels, "C"),
        (bundle.spec.frames, "T"),
        (bundle.spec.patches, "P"),
        (bundle.rff.dim(), "m"),
    ] {
        out.extend_from_slice(&to_u16(v, what)?.to_le_bytes());
    }
    out.push(bundle.loss_kind.code());
    out.push(precision.width() as u8);
    let mut flags = 0u8;
    if bundle.trained {
        flags |= FLAG_TRAINED;
    }
    if bundle.layout == FrameLayout::ElectrodeDifferentials {
        flags |= FLAG_DIFFERENTIALS;
    }
    out.push(flags);
    out.push(0);
    out.extend_from_slice(&bundle.rff.gamma().to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);

    let mut put = |v: f64| match precision {
        Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
        Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
    };
    bundle.norm_stats.mean().iter().for_each(|&v| put(v));
    bundle.norm_stats.std().iter().for_each(|&v| put(v));
    bundle.rff.b().iter().for_each(|&v| put(v));
    bundle.rff.w().as_slice().iter().for_each(|&v| put(v));
    bundle.weights.as_slice().iter().for_each(|&v| put(v));
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize, width: usize) -> std::result::Result<Vec<f64>, FormatError> {
        let bytes = self.take(n * width)?;
        Ok(match width {
            8 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            _ => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        })
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let k = r.u16()? as usize;
    let c = r.u16()? as usize;
    let t = r.u16()? as usize;
    let p = r.u16()? as usize;
    let m = r.u16()? as usize;
    let loss_code = r.u8()?;
    let width = r.u8()? as usize;
    let flags = r.u8()?;
    let _reserved = r.u8()?;
    let gamma = r.f64()?;

    let loss_kind = LossKind::from_code(loss_code)
        .ok_or_else(|| FormatError::InvalidField(format!("loss kind code {loss_code}")))?;
    if width != 8 && width != 4 {
        return Err(FormatError::InvalidField(format!("real width {width}")).into());
    }
    if flags & !(FLAG_TRAINED | FLAG_DIFFERENTIALS) != 0 {
        return Err(FormatError::InvalidField(format!("unknown flags {flags:#04x}")).into());
    }
    let layout = if flags & FLAG_DIFFERENTIALS != 0 {
        FrameLayout::ElectrodeDifferentials
    } else {
        FrameLayout::Raw
    };
    if k < 2 || c == 0 || t == 0 || p == 0 || m == 0 || t % p != 0 {
        return Err(FormatError::InvalidField(format!(
            "inconsistent dimensions K={k} C={c} T={t} P={p} m={m}"
        ))
        .into());
    }
    let feat_channels = layout
        .feature_channels(c)
        .map_err(|e| FormatError::InvalidField(e.to_string()))?;
    let spec = PatchSpec::new(feat_channels, t, p)
        .map_err(|e| FormatError::InvalidField(e.to_string()))?;
    let patch_dim = spec.patch_dim();

    let counts = [
        Some(2 * c),
        Some(m),
        patch_dim.checked_mul(m),
        k.checked_mul(p).and_then(|v| v.checked_mul(m)),
    ];
    let mut total = 0usize;
    for n in counts {
        total = n
            .and_then(|n| total.checked_add(n))
            .filter(|&n| n <= MAX_PAYLOAD_REALS)
            .ok_or_else(|| {
                FormatError::DimensionOverflow(format!(
                    "payload for K={k} C={c} T={t} P={p} m={m} is too large"
                ))
            })?;
    }

    let mean = r.reals(c, width)?;
    let std = r.reals(c, width)?;
    let b = r.reals(m, width)?;
    let w = r.reals(patch_dim * m, width)?;
    let a = r.reals(k * p * m, width)?;
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
    }

    let bundle = ModelBundle {
        rff: RffMap::from_parts(Mat::from_vec(patch_dim, m, w)?, b, gamma)?,
        weights: WeightTensor::from_vec(k, p, m, a)?,
        spec,
        input_channels: c,
        layout,
        norm_stats: NormStats::new(mean, std)?,
        loss_kind,
        trained: flags & FLAG_TRAINED != 0,
    };
    bundle.validate()?;
    Ok(bundle)
}
