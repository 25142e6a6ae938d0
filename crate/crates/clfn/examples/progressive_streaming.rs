//! Walks the progressive stream format: encode a model, replay its bytes at
//! a fixed bandwidth, and decode prefixes as they become renderable.
//!
//! ```bash
//! cargo run -p clfn --example progressive_streaming
//! ```

use clfn::codec::{decode_prefix, encode, stream_simulate, StreamMode};
use clfn::lod::{model_bytes, ArchConfig};
use clfn::mlp::VariableWidthMlp;

fn main() -> clfn::Result<()> {
    let arch = ArchConfig {
        input_dim: 6,
        output_dim: 4,
        layers: 5,
        min_width: 16,
        max_width: 64,
    };
    let model = VariableWidthMlp::<f32>::init(&arch, 42)?;
    let stream = encode(&model);
    let bytes = stream.to_bytes();
    println!(
        "encoded widths {}..={}: {} payload bytes, {} on the wire",
        stream.base.width,
        stream.top_width(),
        stream.payload_bytes(),
        bytes.len()
    );
    println!(
        "base segment {} B, deltas {} B..{} B per width step",
        stream.base.payload_bytes(),
        stream.deltas.first().map_or(0, |s| s.payload_bytes()),
        stream.deltas.last().map_or(0, |s| s.payload_bytes()),
    );

    // Continuous streaming at 64 KiB/s: width grows one neuron at a time.
    let bandwidth = 64.0 * 1024.0;
    println!("\ncontinuous client at {bandwidth} B/s:");
    println!("{:>8} {:>6} {:>10} {:>8}", "time", "width", "received", "new");
    for e in stream_simulate(&stream, bandwidth, StreamMode::Continuous)?
        .iter()
        .step_by(8)
    {
        println!(
            "{:>7.3}s {:>6} {:>10} {:>8}",
            e.time_s, e.width, e.bytes_received, e.delta_payload_bytes
        );
    }

    // A 4-level discrete client downloads the same bytes but can only jump.
    println!("\n4-level discrete client at the same bandwidth:");
    for e in stream_simulate(&stream, bandwidth, StreamMode::Discrete(4))? {
        println!(
            "{:>7.3}s width {:>2}, {:>6} newly usable payload bytes",
            e.time_s, e.width, e.delta_payload_bytes
        );
    }

    // Any complete prefix decodes to a working truncated model.
    let cut = bytes.len() / 2;
    match clfn::codec::ProgressiveStream::from_bytes(&bytes[..cut]) {
        Err(clfn::Error::PartialStream {
            usable_width: Some(w),
        }) => {
            let truncated = decode_prefix(&bytes[..cut], w)?;
            println!(
                "\ncut at byte {cut}: greatest usable width {w} -> model with {} of {} parameters",
                truncated.param_count(),
                model.param_count()
            );
            assert_eq!(
                truncated.param_count() * 4,
                model_bytes(&arch, w as usize)?
            );
        }
        other => println!("\ncut at byte {cut}: unexpected result {other:?}"),
    }
    Ok(())
}
