// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::FieldValue;
use super::{BufBatch, PacketError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModifierKind {
    RandomUniform,
    WrappingCounter,
}

/// Per-packet rewrite of one header field over an inclusive range.
///
/// The counter position survives across batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldModifier {
    pub kind: ModifierKind,
    pub field: String,
    pub range: [FieldValue; 2],
    #[serde(skip)]
    position: u128,
}

impl FieldModifier {
    pub fn new(
        kind: ModifierKind,
        field: &str,
        lo: impl Into<FieldValue>,
        hi: impl Into<FieldValue>,
    ) -> Self {
        FieldModifier {
            kind,
            field: field.to_string(),
            range: [lo.into(), hi.into()],
            position: 0,
        }
    }

    pub fn counter(field: &str, lo: impl Into<FieldValue>, hi: impl Into<FieldValue>) -> Self {
        Self::new(ModifierKind::WrappingCounter, field, lo, hi)
    }

    pub fn random(field: &str, lo: impl Into<FieldValue>, hi: impl Into<FieldValue>) -> Self {
        Self::new(ModifierKind::RandomUniform, field, lo, hi)
    }

    fn bounds(&self) -> Result<(u128, u128), PacketError> {
        let lo = self.range[0].as_uint();
        let hi = self.range[1].as_uint();
        if lo > hi {
            return Err(PacketError::EmptyRange);
        }
        Ok((lo, hi))
    }

    /// Number of distinct values; `None` when the range spans all of u128.
    fn span(&self) -> Result<Option<u128>, PacketError> {
        let (lo, hi) = self.bounds()?;
        Ok((hi - lo).checked_add(1))
    }

    fn next_value<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<u128, PacketError> {
        let (lo, hi) = self.bounds()?;
        Ok(match self.kind {
            ModifierKind::RandomUniform => rng.gen_range(lo..=hi),
            ModifierKind::WrappingCounter => {
                let v = lo + self.position;
                self.position = match self.span()? {
                    Some(m) => (self.position + 1) % m,
                    None => self.position.wrapping_add(1),
                };
                v
            }
        })
    }
}

/// Rewrites the modifier's field in every buffer of the batch.
pub fn apply_modifier<R: Rng + ?Sized>(
    batch: &mut BufBatch,
    modifier: &mut FieldModifier,
    rng: &mut R,
) -> Result<(), PacketError> {
    for buf in batch.iter_mut() {
        let field = buf.layout().resolve(&modifier.field)?;
        let value = modifier.next_value(rng)?;
        field.write(buf.bytes_mut(), value)?;
    }
    Ok(())
}
