//! The plain-array boundary used by language bindings: arrays in, arrays
//! and an opaque context handle out, explicit release.
//!
//! cargo run --example interop_handles

use mdn::interop::{bound_vote_backward, bound_vote_forward, release_ctx, RawArray};
use mdn::{KernelSpec, VoteMode};

fn main() -> mdn::Result<()> {
    let (h, w) = (4, 4);
    let c = RawArray::f64(vec![1, h, w], (0..h * w).map(|i| i as f64 / 20.0).collect());
    let ox = RawArray::f64(vec![1, h, w], vec![0.75; h * w]);
    let oy = RawArray::f64(vec![1, h, w], vec![0.25; h * w]);

    let (m, ctx) = bound_vote_forward(&c, &ox, &oy, KernelSpec::bilinear(), VoteMode::NoisyOr, &[(0, 0)])?;
    println!("m shape {:?}, handle {}", m.shape, ctx.raw());
    let ones = RawArray::f64(m.shape.clone(), vec![1.0; h * w]);
    let (gc, gx, _gy) = bound_vote_backward(ctx, &ones)?;
    println!("grad_c[0..4] {:?}", &gc.as_f64().expect("f64")[..4]);
    println!("grad_ox[0..4] {:?}", &gx.as_f64().expect("f64")[..4]);
    release_ctx(ctx)?;

    // a released handle is rejected, and errors name the bad argument
    println!("{}", bound_vote_backward(ctx, &ones).unwrap_err());
    let bad = RawArray::f64(vec![1, h, w], vec![1.5; h * w]);
    println!("{}", bound_vote_forward(&bad, &ox, &oy, KernelSpec::bilinear(), VoteMode::NoisyOr, &[(0, 0)]).unwrap_err());
    Ok(())
}
