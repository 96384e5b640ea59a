//! Skill-focused policy optimization for hierarchical policies with a
//! discrete skill selector and a continuous command head.

pub mod ad;
pub mod policy;
pub mod dsfpo;
pub mod world;
pub mod curriculum;
pub mod train;
