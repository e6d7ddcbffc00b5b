//! Model components: parameter storage, layers, the disentanglement model,
//! and the convolutional baseline.

pub mod discriminator;
pub mod drsc;
pub mod encoder;
pub mod generator;
pub mod layers;
pub mod params;
pub mod speechic;

pub use discriminator::Discriminator;
pub use drsc::{argmax, DomainKind, DrscModel, ForwardPass};
pub use encoder::{Encoder, LatentPair};
pub use generator::Generator;
pub use params::{role_of, BoundParams, ParamStore, Role};
pub use speechic::{speechic_forward, SpeechicMode, SpeechicModel};
