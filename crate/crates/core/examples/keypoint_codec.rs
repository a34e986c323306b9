//! Per-frame keypoint packets: 80 bytes for ten points, against 240 bytes
//! when every point also carries a 2x2 Jacobian.

use thc::bitstream::{
    decode_keypoints, encode_handshake, encode_keypoints, encode_keypoints_with_jacobians, parse_stream,
    stream_to_bytes, Packet,
};
use thc::{synthetic, RateLedger, StreamConfig};

fn main() -> thc::Result<()> {
    let kps = synthetic::nonlinear_trajectories(8).pop().unwrap();
    let pkt = encode_keypoints(&kps)?;
    let jac = encode_keypoints_with_jacobians(&kps, &vec![[1.0, 0.0, 0.0, 1.0]; kps.len()])?;
    println!("payload: {} bytes (with Jacobians {}), {} on the wire", pkt.payload.len(), jac.len(), pkt.wire_bytes());

    let back = decode_keypoints(&pkt, kps.len())?;
    assert_eq!(back, kps);
    for (i, p) in back.points().iter().enumerate().take(3) {
        println!("  kp{i}: ({:+.5}, {:+.5})", p.x, p.y);
    }

    let mut packets = vec![encode_handshake(&StreamConfig::default())];
    packets.extend(synthetic::linear_trajectories(25).iter().skip(1).map(|k| encode_keypoints(k).unwrap()));
    packets.push(Packet::end_of_stream(25));
    let bytes = stream_to_bytes(&packets)?;
    assert_eq!(parse_stream(&bytes)?, packets);
    let ledger = RateLedger::from_packets(&packets);
    println!(
        "stream of {} packets: {} bytes; keypoint bits {}, header bits {}",
        packets.len(),
        bytes.len(),
        ledger.keypoint_payload_bits,
        ledger.header_bits
    );

    match parse_stream(&bytes[..bytes.len() - 30]) {
        Err(e) => println!("truncated: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
