//! Code one P-frame through every route: coded size, the model's own rate
//! estimate, reconstruction quality and the decoder's bitwise agreement.
//!
//! Usage: `cargo run --release --example single_frame -- [model.drnw]`
//! (a freshly initialized model is used when no checkpoint is given)

use routecodec::dra::{DraModel, QuantMode, RouteSpec};
use routecodec::entropy::{entropy_params, rate_bits};
use routecodec::numerics::SeedStream;
use routecodec::pipeline::{decode_frame_chunks, encode_frame, gen_sequence, psnr, MotionProfile};

fn main() -> routecodec::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => DraModel::from_checkpoint(&std::fs::read(path)?)?,
        None => DraModel::new(RouteSpec::default(), 1)?,
    };
    let frames = gen_sequence(5, 0, 2, 64, 64, MotionProfile::Mixed)?;
    let (x_ref, x_t) = (&frames[0], &frames[1]);

    println!("route  chunks  bits  rate_bits   bpp    PSNR");
    for k in 0..model.spec.routes() {
        let coded = encode_frame(&model, x_t, x_ref, k)?;
        let decoded = decode_frame_chunks(&model, &coded.chunks, x_ref)?;
        assert!(decoded.bit_eq(&coded.reconstruction), "decoder disagrees with encoder");

        let y = model.encode_latent(x_t, x_ref, k)?;
        let z_hat = model.hyper.hyper_encode(&y)?.z_hat;
        let y_hat = y.quantize(QuantMode::Round, &mut SeedStream::new(0).stream("unused"));
        let params = entropy_params(&model, &y_hat, &z_hat)?;
        let ideal = rate_bits(&y_hat, &params.groups, &z_hat, &model.hyper.prior)?;

        println!(
            "{k:>5}  {:>6}  {:>4}  {ideal:>9.1}  {:.3}  {:>6.2}",
            coded.chunks.len(),
            coded.bits(),
            coded.bpp(),
            psnr(&coded.reconstruction, x_t)?
        );
    }
    Ok(())
}
