//! Single-threaded reference pass against the chunked multi-threaded pass on
//! a 128x128 map.
//!
//! cargo run --release --example parallel_scatter -- [threads]

use std::time::Instant;

use mdn::verify::{random_vote_instance, relative_linf_error};
use mdn::{KernelSpec, VoteGraph, VoteMode, Voting};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mdn::Result<()> {
    let threads = std::env::args().nth(1).map_or(Ok(4), |s| s.parse()).expect("threads");
    let graph = VoteGraph::chain(3)?;
    let inst = random_vote_instance(&mut ChaCha8Rng::seed_from_u64(7), 128, 128, &graph, 6.0)?;
    for mode in VoteMode::ALL {
        let v = Voting::new(KernelSpec::gaussian(7)?, mode, graph.clone());
        let t = Instant::now();
        let (m_ref, ctx) = v.forward(&inst.c, &inst.o)?;
        let g_ref = v.backward(&inst.grad_m, &inst.c, &inst.o, &ctx)?;
        let t_ref = t.elapsed();
        let t = Instant::now();
        let (m_par, ctx) = v.forward_threads(&inst.c, &inst.o, threads)?;
        let g_par = v.backward_threads(&inst.grad_m, &inst.c, &inst.o, &ctx, threads)?;
        let t_par = t.elapsed();
        println!(
            "{mode:<9} m rel diff {:.2e}  grad_ox rel diff {:.2e}  {:.1} ms -> {:.1} ms",
            relative_linf_error(m_par.data(), m_ref.data()),
            relative_linf_error(g_par.ox.data(), g_ref.ox.data()),
            t_ref.as_secs_f64() * 1e3,
            t_par.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
