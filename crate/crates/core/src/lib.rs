//! Worldvolume geometry, deformations, conserved charges, stress tensors and
//! conformal-gauge evolution for strings and membranes in a Kaluza-Klein
//! extended background.

pub mod background;
pub mod charges;
pub mod config;
pub mod deformations;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod report;
pub mod stress;

pub use background::{KKBackground, Signature};
pub use embedding::{ExtendedEmbedding, WorldvolumePatch};
pub use error::{Error, Result};
pub use geometry::{FrameField, PointFrame, Tolerances};
pub use grid::{Layout, Offset, WorldvolumeGrid};
