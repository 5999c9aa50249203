//! Compiles every chapter of the guide in `book/src` as rustdoc, so that
//! `cargo test -p coreplan-book` runs each code block as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/mdp.md")]
pub mod mdp {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/corelp.md")]
pub mod corelp {}
#[doc = include_str!("../../../book/src/saddle.md")]
pub mod saddle {}
#[doc = include_str!("../../../book/src/corestomp.md")]
pub mod corestomp {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("../../../book/src/bench.md")]
pub mod bench {}
