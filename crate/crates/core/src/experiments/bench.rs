//! Throughput of the voting operator per mode and kernel.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::verify::random_vote_instance;
use crate::vote::{VoteGraph, VoteMode, Voting};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub mode: String,
    pub kernel: String,
    pub threads: usize,
    pub iterations: usize,
    pub forward_ms: f64,
    pub backward_ms: f64,
    pub forward_mpix_per_s: f64,
}

pub fn bench_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::gaussian(5).expect("supported support"),
        KernelSpec::bilinear(),
    ]
}

/// Times `iterations` forward and backward passes on a random `size x size`
/// single-joint instance for every mode and kernel.
pub fn run_bench(
    sizes: &[usize],
    iterations: usize,
    threads: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let graph = VoteGraph::within_part(1);
    let iterations = iterations.max(1);
    let mut rows = Vec::new();
    for &size in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_vote_instance(&mut rng, size, size, &graph, 3.0)?;
        for mode in VoteMode::ALL {
            for kernel in bench_kernels() {
                let voting = Voting::new(kernel, mode, graph.clone());
                let t = Instant::now();
                let mut out = None;
                for _ in 0..iterations {
                    out = Some(voting.forward_threads(&inst.c, &inst.o, threads)?);
                }
                let fwd = t.elapsed().as_secs_f64() / iterations as f64;
                let (_, ctx) = out.expect("at least one iteration");
                let t = Instant::now();
                for _ in 0..iterations {
                    voting.backward_threads(&inst.grad_m, &inst.c, &inst.o, &ctx, threads)?;
                }
                let bwd = t.elapsed().as_secs_f64() / iterations as f64;
                rows.push(BenchRow {
                    size,
                    mode: mode.name().to_string(),
                    kernel: kernel.label(),
                    threads,
                    iterations,
                    forward_ms: fwd * 1e3,
                    backward_ms: bwd * 1e3,
                    forward_mpix_per_s: (size * size) as f64 / fwd / 1e6,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    write_bench_csv(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_size_mode_kernel() {
        let rows = run_bench(&[8, 12], 1, 1, 0).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2);
        assert!(rows
            .iter()
            .all(|r| r.forward_ms >= 0.0 && r.backward_ms >= 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("size,mode,kernel,threads"));
        assert_eq!(text.lines().count(), 13);
    }
}
