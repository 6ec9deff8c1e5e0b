//! End-to-end coding: frames, synthetic data, sequence coding with a GoP
//! structure, the bitstream container and quality/rate metrics.

pub mod codec;
pub mod config;
pub mod container;
pub mod frame;
pub mod metrics;
pub mod sequence;
pub mod synth;

pub use codec::{decode_frame_chunks, encode_frame, payload_bits, EncodedFrame};
pub use config::KeyValues;
pub use container::{BitstreamContainer, ContainerHeader, FrameRecord, FrameType, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use frame::{read_dataset, read_pgm, read_sequence, write_pgm, write_sequence};
pub use metrics::{bd_metrics, bitrate_error, format_db, psnr, RdCurve};
pub use sequence::{decode_sequence, encode_sequence, FrameStats, RoutePolicy, SequenceStats, DEFAULT_GOP, STATS_VERSION};
pub use synth::{gen_sequence, gen_synthetic, write_synthetic, MotionProfile};
