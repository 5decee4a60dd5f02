use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{Canonical, DecodeError, Decoder, Encoder};

/// Logical time. Maturities and timestamps are tick numbers, never wall clock.
pub type Tick = u64;

/// Integer minor currency units (and FT minor units, which convert 1:1).
pub type Amount = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl Canonical for $name {
            fn encode(&self, enc: &mut Encoder) {
                enc.str(&self.0);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
                dec.string().map(Self)
            }
        }
    };
}

string_id!(
    /// A network participant: stakeholder, SPV, investor, financier or observer.
    /// Also names FT accounts, including contract escrow accounts.
    ActorId
);
string_id!(ReceivableId);
string_id!(DealId);
string_id!(OfferId);
string_id!(AssignmentId);

impl DealId {
    /// FT account holding a deal's collections until distribution.
    pub fn escrow_account(&self) -> ActorId {
        ActorId(format!("escrow:{}", self.0))
    }
}
