//! Sequence coding with a GoP structure, route policies and per-frame stats.

use std::io::{Read, Write};
use std::time::Instant;

use super::codec::{decode_frame_chunks, encode_frame};
use super::container::{BitstreamContainer, ContainerHeader, FrameRecord, FrameType};
use super::metrics::{bitrate_error, format_db, psnr};
use crate::dra::{DraModel, MID_GRAY};
use crate::numerics::Tensor;
use crate::rca::{allocate_bits, block_motion, select_route, update_state, ControllerState, EstimatorInput, RateEstimator, BLOCK_SIZE, SEARCH_RANGE};
use crate::{Error, Result};

/// Default GoP length in frames.
pub const DEFAULT_GOP: usize = 32;
/// Version of the stats CSV layout.
pub const STATS_VERSION: u32 = 1;

/// How each frame's route is chosen.
pub enum RoutePolicy<'a> {
    /// Every frame, intra frames included, uses this route.
    Fixed(usize),
    /// Route per frame index.
    PerFrame(Vec<usize>),
    /// Rate control: intra frames use the top route, P-frames follow the
    /// estimator and the sliding-window controller.
    Controlled {
        estimator: &'a mut dyn RateEstimator,
        target_bpp: f64,
        window: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub index: usize,
    pub frame_type: FrameType,
    pub route: usize,
    pub bits: usize,
    pub bpp: f64,
    /// Estimated bpp per route; empty when no estimate was made.
    pub estimates: Vec<f64>,
    /// Per-frame target from the controller, if any.
    pub target_alloc: Option<f64>,
    pub psnr: f64,
    pub time_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceStats {
    pub width: usize,
    pub height: usize,
    pub routes: usize,
    pub gop: usize,
    pub target_bpp: Option<f64>,
    pub frames: Vec<FrameStats>,
}

impl SequenceStats {
    pub fn total_bits(&self) -> usize {
        self.frames.iter().map(|f| f.bits).sum()
    }

    /// Total bits over total pixels.
    pub fn mean_bpp(&self) -> f64 {
        self.total_bits() as f64 / (self.frames.len() * self.width * self.height) as f64
    }

    pub fn mean_psnr(&self) -> f64 {
        self.frames.iter().map(|f| f.psnr).sum::<f64>() / self.frames.len() as f64
    }

    /// Bitrate error against the recorded target.
    pub fn delta_r(&self) -> Result<f64> {
        let t = self.target_bpp.ok_or_else(|| Error::invalid("stats carry no target rate"))?;
        bitrate_error(self.mean_bpp(), t)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# stats_version={STATS_VERSION} width={} height={} routes={} gop={} target={}",
            self.width,
            self.height,
            self.routes,
            self.gop,
            self.target_bpp.map(|t| t.to_string()).unwrap_or_default()
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["frame", "type", "route", "bits", "bpp", "psnr", "target_alloc"].map(String::from).to_vec();
        header.extend((0..self.routes).map(|k| format!("est_{k}")));
        header.push("time_ms".into());
        w.write_record(&header).map_err(csv_err)?;
        for f in &self.frames {
            let mut row = vec![
                f.index.to_string(),
                f.frame_type.as_str().to_string(),
                f.route.to_string(),
                f.bits.to_string(),
                f.bpp.to_string(),
                format_db(f.psnr),
                f.target_alloc.map(|t| t.to_string()).unwrap_or_default(),
            ];
            row.extend((0..self.routes).map(|k| f.estimates.get(k).map(|e| e.to_string()).unwrap_or_default()));
            row.push(format!("{:.3}", f.time_ms));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let meta_line = text.lines().next().unwrap_or("");
        let meta = meta_line
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("stats file lacks its metadata line".into()))?;
        let field = |name: &str| {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Format(format!("stats metadata lacks {name}")))
        };
        let num = |name: &str| -> Result<usize> { field(name)?.parse().map_err(|_| Error::Format(format!("bad {name} in stats metadata"))) };
        if num("stats_version")? != STATS_VERSION as usize {
            return Err(Error::Format("unsupported stats version".into()));
        }
        let routes = num("routes")?;
        let target = field("target")?;
        let target_bpp = if target.is_empty() {
            None
        } else {
            Some(target.parse().map_err(|_| Error::Format("bad target in stats metadata".into()))?)
        };
        let body = &text[meta_line.len()..];
        let mut rdr = csv::Reader::from_reader(body.trim_start().as_bytes());
        let mut frames = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let cell = |i: usize| rec.get(i).unwrap_or("").trim();
            let bad = |what: &str| Error::Format(format!("bad {what} in stats row {:?}", rec));
            let opt = |i: usize| -> Result<Option<f64>> {
                match cell(i) {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|_| bad("number")),
                }
            };
            let psnr = match cell(5) {
                "inf" => f64::INFINITY,
                s => s.parse().map_err(|_| bad("psnr"))?,
            };
            let estimates: Vec<f64> = (0..routes).filter_map(|k| opt(7 + k).transpose()).collect::<Result<_>>()?;
            frames.push(FrameStats {
                index: cell(0).parse().map_err(|_| bad("frame"))?,
                frame_type: match cell(1) {
                    "I" => FrameType::I,
                    "P" => FrameType::P,
                    _ => return Err(bad("type")),
                },
                route: cell(2).parse().map_err(|_| bad("route"))?,
                bits: cell(3).parse().map_err(|_| bad("bits"))?,
                bpp: cell(4).parse().map_err(|_| bad("bpp"))?,
                psnr,
                target_alloc: opt(6)?,
                estimates,
                time_ms: opt(7 + routes)?.unwrap_or(0.0),
            });
        }
        Ok(SequenceStats {
            width: num("width")?,
            height: num("height")?,
            routes,
            gop: num("gop")?,
            target_bpp,
            frames,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn check_frames(model: &DraModel, frames: &[Tensor]) -> Result<(usize, usize)> {
    let first = frames.first().ok_or_else(|| Error::EmptyDataset("no frames to encode".into()))?;
    let [_, _, h, w] = first.shape();
    for (t, f) in frames.iter().enumerate() {
        if f.shape() != [1, 1, h, w] {
            return Err(Error::shape(format!("frame {t} is {:?}, frame 0 is [1, 1, {h}, {w}]", f.shape())));
        }
    }
    model.spec.check_frame_dims(h, w)?;
    if h % BLOCK_SIZE != 0 || w % BLOCK_SIZE != 0 {
        return Err(Error::shape(format!("frame {w}x{h} is not a multiple of the {BLOCK_SIZE}-pixel motion block")));
    }
    Ok((h, w))
}

/// Encode a sequence. Frame 0 and every `gop`-th frame are intra frames,
/// coded against mid-gray; P-frames reference the previous reconstruction.
/// Returns the container, the per-frame stats and the encoder-side
/// reconstructions.
pub fn encode_sequence(frames: &[Tensor], model: &DraModel, policy: RoutePolicy, gop: usize) -> Result<(BitstreamContainer, SequenceStats, Vec<Tensor>)> {
    if gop == 0 {
        return Err(Error::invalid("GoP length must be positive"));
    }
    let (h, w) = check_frames(model, frames)?;
    let k_max = model.spec.top_route();
    let mut policy = policy;
    let (mut controller, target_bpp) = match &policy {
        RoutePolicy::Controlled { estimator, target_bpp, window } => {
            if estimator.routes() != model.spec.routes() {
                return Err(Error::invalid(format!("estimator covers {} routes, model has {}", estimator.routes(), model.spec.routes())));
            }
            (Some(ControllerState::new(*target_bpp, *window)?), Some(*target_bpp))
        }
        RoutePolicy::PerFrame(r) if r.len() < frames.len() => {
            return Err(Error::invalid(format!("{} routes given for {} frames", r.len(), frames.len())));
        }
        _ => (None, None),
    };
    let mut records = Vec::with_capacity(frames.len());
    let mut stats = Vec::with_capacity(frames.len());
    let mut recons: Vec<Tensor> = Vec::with_capacity(frames.len());
    for (t, x) in frames.iter().enumerate() {
        let start = Instant::now();
        let intra = t % gop == 0;
        let x_ref = match recons.last() {
            Some(r) if !intra => r.clone(),
            _ => Tensor::full(x.shape(), MID_GRAY),
        };
        let mut estimates = Vec::new();
        let mut target_alloc = None;
        let route = match &mut policy {
            RoutePolicy::Fixed(k) => *k,
            RoutePolicy::PerFrame(r) => r[t],
            RoutePolicy::Controlled { estimator, .. } => {
                let state = controller.as_ref().expect("controller exists for controlled policy");
                if intra {
                    k_max
                } else {
                    let motion = block_motion(x, &x_ref, BLOCK_SIZE, SEARCH_RANGE)?;
                    let est = estimator.estimate(&EstimatorInput { x_t: x, x_ref: &x_ref, motion: &motion })?;
                    let t_tar = allocate_bits(state);
                    let k = select_route(&est, t_tar, state);
                    estimates = est.0;
                    target_alloc = Some(t_tar);
                    k
                }
            }
        };
        model.spec.check_route(route)?;
        let enc = encode_frame(model, x, &x_ref, route)?;
        let bpp = enc.bpp();
        if let Some(state) = controller.as_mut() {
            update_state(state, bpp, intra)?;
        }
        stats.push(FrameStats {
            index: t,
            frame_type: if intra { FrameType::I } else { FrameType::P },
            route,
            bits: enc.bits(),
            bpp,
            estimates,
            target_alloc,
            psnr: psnr(x, &enc.reconstruction)?,
            time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        records.push(FrameRecord {
            frame_type: if intra { FrameType::I } else { FrameType::P },
            route,
            chunks: enc.chunks,
        });
        recons.push(enc.reconstruction);
    }
    let header = ContainerHeader {
        width: w,
        height: h,
        latent_channels: model.spec.latent_channels.clone(),
        downsample_factor: model.spec.downsample_factor,
        gop,
    };
    let stats = SequenceStats {
        width: w,
        height: h,
        routes: model.spec.routes(),
        gop,
        target_bpp,
        frames: stats,
    };
    Ok((BitstreamContainer { header, frames: records }, stats, recons))
}

/// Decode every frame record in order.
pub fn decode_sequence(stream: &BitstreamContainer, model: &DraModel) -> Result<Vec<Tensor>> {
    let h = &stream.header;
    h.check_model(&model.spec)?;
    let gray = Tensor::full([1, 1, h.height, h.width], MID_GRAY);
    let mut out: Vec<Tensor> = Vec::with_capacity(stream.frames.len());
    for (t, rec) in stream.frames.iter().enumerate() {
        let x_ref = match (rec.frame_type, out.last()) {
            (FrameType::I, _) => &gray,
            (FrameType::P, Some(prev)) => prev,
            (FrameType::P, None) => return Err(Error::Format("stream starts with a P-frame".into())),
        };
        if rec.chunks.len() != rec.route + 2 {
            return Err(Error::Format(format!("frame {t}: route {} with {} chunks", rec.route, rec.chunks.len())));
        }
        let frame = decode_frame_chunks(model, &rec.chunks, x_ref).map_err(|e| match e {
            Error::Corrupt { position, reason } => Error::Corrupt {
                position,
                reason: format!("frame {t}: {reason}"),
            },
            other => other,
        })?;
        out.push(frame);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::RouteSpec;
    use crate::pipeline::synth::{gen_sequence, MotionProfile};
    use crate::rca::OracleEstimator;

    fn setup(frames: usize) -> (DraModel, Vec<Tensor>) {
        let model = DraModel::new(RouteSpec::default(), 5).unwrap();
        (model, gen_sequence(6, 0, frames, 32, 32, MotionProfile::Mixed).unwrap())
    }

    #[test]
    fn single_frame_is_intra_at_the_top_route() {
        let (model, frames) = setup(1);
        let mut oracle = OracleEstimator { model: &model };
        let policy = RoutePolicy::Controlled { estimator: &mut oracle, target_bpp: 0.5, window: 30 };
        let (c, s, rec) = encode_sequence(&frames, &model, policy, DEFAULT_GOP).unwrap();
        assert_eq!(c.frames.len(), 1);
        assert_eq!((c.frames[0].frame_type, c.frames[0].route), (FrameType::I, 3));
        assert!(decode_sequence(&c, &model).unwrap()[0].bit_eq(&rec[0]));
        assert_eq!(s.total_bits(), c.payload_bits());
    }

    #[test]
    fn forced_routes_are_echoed_and_decoding_is_closed_loop() {
        let (model, frames) = setup(5);
        let routes = vec![2, 0, 3, 1, 1];
        let (c, s, rec) = encode_sequence(&frames, &model, RoutePolicy::PerFrame(routes.clone()), 3).unwrap();
        assert_eq!(c.frames.iter().map(|f| f.route).collect::<Vec<_>>(), routes);
        let types: Vec<_> = c.frames.iter().map(|f| f.frame_type).collect();
        assert_eq!(types, [FrameType::I, FrameType::P, FrameType::P, FrameType::I, FrameType::P]);
        let bytes = c.to_bytes().unwrap();
        let dec = decode_sequence(&BitstreamContainer::from_bytes(&bytes).unwrap(), &model).unwrap();
        assert!(dec.iter().zip(&rec).all(|(a, b)| a.bit_eq(b)));
        let mut prefix = c.clone();
        prefix.frames.truncate(2);
        let dec2 = decode_sequence(&prefix, &model).unwrap();
        assert!(dec2.iter().zip(&rec).all(|(a, b)| a.bit_eq(b)));
        let exact = s.total_bits() as f64 / (5.0 * 32.0 * 32.0);
        assert_eq!(s.mean_bpp(), exact);
    }

    #[test]
    fn stats_csv_round_trip() {
        let (model, frames) = setup(3);
        let mut oracle = OracleEstimator { model: &model };
        let policy = RoutePolicy::Controlled { estimator: &mut oracle, target_bpp: 0.4, window: 30 };
        let (_, s, _) = encode_sequence(&frames, &model, policy, DEFAULT_GOP).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SequenceStats::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.total_bits(), s.total_bits());
        assert_eq!(back.frames[1].estimates.len(), 4);
        assert_eq!(back.target_bpp, Some(0.4));
        assert!((back.delta_r().unwrap() - s.delta_r().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mismatched_frame_sizes_are_rejected() {
        let (model, mut frames) = setup(2);
        frames.push(Tensor::zeros([1, 1, 32, 64]));
        assert!(encode_sequence(&frames, &model, RoutePolicy::Fixed(0), 8).is_err());
    }
}
