//! When a new pivot frame is sent: head pose drift or background change.

use thc::pivot::{background_embedding, Decision, PivotState};
use thc::{synthetic, PivotPolicy, PivotThresholds};

fn main() -> thc::Result<()> {
    let trace = synthetic::policy_trace(120, 64, 64);
    let emb = |i: usize| background_embedding(&trace.frames[i], &trace.masks[i]);

    for (gamma, d_bg, cooldown) in [(15.0, 0.05, None), (30.0, 0.05, None), (15.0, 0.2, None), (15.0, 0.05, Some(30))] {
        let policy = PivotPolicy { thresholds: PivotThresholds::uniform(gamma, d_bg), cooldown };
        let mut state = PivotState {
            pivot_frame: trace.frames[0].clone(),
            pivot_pose: trace.poses[0],
            pivot_bg: emb(0)?,
            established_at: 0,
        };
        let (mut replaced, mut deferred) = (Vec::new(), 0);
        for i in 1..trace.frames.len() {
            let bg = emb(i)?;
            match policy.decide(&state, i as u32, &trace.poses[i], &bg) {
                Decision::Replace => {
                    state = PivotState {
                        pivot_frame: trace.frames[i].clone(),
                        pivot_pose: trace.poses[i],
                        pivot_bg: bg,
                        established_at: i as u32,
                    };
                    replaced.push(i);
                }
                Decision::Deferred => deferred += 1,
                Decision::Keep => {}
            }
        }
        println!("gamma={gamma:>4} d_bg={d_bg:<4} cooldown={cooldown:?}: replaced at {replaced:?}, {deferred} deferred");
    }
    Ok(())
}
