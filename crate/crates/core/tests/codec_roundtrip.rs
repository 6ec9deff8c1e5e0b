use routecodec::dra::{DraModel, RouteSpec};
use routecodec::pipeline::{
    decode_sequence, encode_sequence, gen_sequence, BitstreamContainer, FrameType, MotionProfile, RoutePolicy,
};
use routecodec::rca::OracleEstimator;

fn model() -> DraModel {
    DraModel::new(RouteSpec::default(), 77).unwrap()
}

#[test]
fn serialized_stream_decodes_like_the_in_memory_one() {
    let model = model();
    let frames = gen_sequence(3, 1, 6, 64, 32, MotionProfile::Mixed).unwrap();
    let mut oracle = OracleEstimator { model: &model };
    let policy = RoutePolicy::Controlled { estimator: &mut oracle, target_bpp: 0.3, window: 30 };
    let (container, stats, recon) = encode_sequence(&frames, &model, policy, 4).unwrap();
    assert_eq!(stats.total_bits(), container.payload_bits());
    assert_eq!(container.frames[0].frame_type, FrameType::I);
    assert_eq!(container.frames[4].frame_type, FrameType::I);
    let bytes = container.to_bytes().unwrap();
    let parsed = BitstreamContainer::from_bytes(&bytes).unwrap();
    let a = decode_sequence(&container, &model).unwrap();
    let b = decode_sequence(&parsed, &model).unwrap();
    for ((x, y), r) in a.iter().zip(&b).zip(&recon) {
        assert!(x.bit_eq(y) && x.bit_eq(r));
    }
}

#[test]
fn corrupted_bytes_never_decode_to_the_original() {
    let model = model();
    let frames = gen_sequence(4, 0, 3, 32, 32, MotionProfile::Mixed).unwrap();
    let (container, _, recon) = encode_sequence(&frames, &model, RoutePolicy::Fixed(2), 8).unwrap();
    let bytes = container.to_bytes().unwrap();
    for i in (0..bytes.len()).step_by(3) {
        let mut b = bytes.clone();
        b[i] ^= 0x5a;
        let silent = BitstreamContainer::from_bytes(&b)
            .and_then(|c| decode_sequence(&c, &model))
            .map(|d| d.iter().zip(&recon).all(|(x, y)| x.bit_eq(y)))
            .unwrap_or(false);
        assert!(!silent, "corrupting byte {i} went unnoticed");
    }
}

#[test]
fn streams_from_another_layout_are_rejected() {
    let model = model();
    let frames = gen_sequence(5, 0, 1, 32, 32, MotionProfile::Static).unwrap();
    let (container, _, _) = encode_sequence(&frames, &model, RoutePolicy::Fixed(0), 8).unwrap();
    let other = DraModel::new(RouteSpec::new(vec![4, 8, 12, 16], vec![8, 16, 24, 32], 8).unwrap(), 1).unwrap();
    assert!(decode_sequence(&container, &other).is_err());
}
