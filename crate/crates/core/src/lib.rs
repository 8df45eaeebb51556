//! Voxel-sequence toolkit.
//!
//! * [`sfc`]: 2D/3D Hilbert and Morton codecs.
//! * [`ordering`]: whole-grid 3D → 1D orders, including height-prioritized
//!   column expansion along a 2D curve.
//! * [`locality`]: neighbor-distance statistics for comparing orders.
//! * [`ssm`], [`mamba`]: selective state-space scan and the Mamba block,
//!   with analytic gradients.
//! * [`hierarchy`]: multi-scale encoder/decoder of Mamba block groups.
//! * [`head`]: channel fusion, coarse-to-fine interpolation, voxel classifier.
//! * [`loss`], [`metrics`]: cross-entropy, Lovász-softmax, IoU/mIoU.
//! * [`synth`], [`io`]: synthetic scenes and the VOXG/VORD file formats.
//! * [`train`], [`bench`]: toy training loop and scaling benchmark.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod bench;
pub mod error;
pub mod head;
pub mod hierarchy;
pub mod io;
pub mod locality;
pub mod loss;
pub mod mamba;
pub mod metrics;
pub mod nn;
pub mod ordering;
pub mod sfc;
pub mod ssm;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use ordering::{apply_ordering, build_ordering, invert_ordering, Ordering, OrderingScheme, Scheme};
pub use tensor::{FeatureGrid, GridDims, SequenceTensor};
