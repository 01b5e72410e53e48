//! Persistent device identity for network access control.
//!
//! Devices that rotate their MAC addresses are tracked under a stable
//! identifier (a version-4 UUID) that is minted on first contact, correlated
//! on later authentications through certificates, MDM enrollment, posture
//! agents, usernames and behavioral fingerprints, and returned to the network
//! in a RADIUS vendor attribute.

pub mod admin;
pub mod correlator;
pub mod identity;
pub mod mac;
pub mod profiler;
pub mod radius;
pub mod service;
pub mod sim;
pub mod time;
