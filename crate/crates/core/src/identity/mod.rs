//! Persistent identity store: identifiers, device records, anchors, profiles,
//! retention, licensing counts and persistence.

mod audit;
mod pdid;
mod record;
mod snapshot;
mod store;

pub use audit::{read_events, AuditEvent, AuditLog, AuditOp};
pub use pdid::{generate_pdid, EntropyUnavailable, Pdid, PdidParseError};
pub use record::{
    AnchorKind, AttributeSource, ContextEntry, DeviceRecord, Fingerprint, HistoricalOui, HistoryEntry, MacEntry,
    NetworkContext, ObservationKind, ProfileEntry, CONTEXT_HISTORY_LEN, FINGERPRINT_HISTORY_LEN,
    PROFILE_HISTORY_DEPTH,
};
pub use snapshot::{MAGIC as SNAPSHOT_MAGIC, VERSION as SNAPSHOT_VERSION};
pub use store::{
    AnchorConflict, AttachOutcome, ConfigError, IdentityStore, InsertOutcome, LegacyRecord, LicenseCount, NewAnchor,
    NewRecord, StoreConfig, StoreError,
};
