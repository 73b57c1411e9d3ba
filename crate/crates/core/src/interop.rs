//! Plain-array entry points for embedding the operator in a foreign
//! training framework.
//!
//! Arrays are contiguous, row-major, with an explicit shape: confidences are
//! `(joints, height, width)`, offsets and gradients per edge are
//! `(edges, height, width)`. Inputs are copied on the way in. A forward call
//! returns an opaque [`CtxHandle`] that keeps everything backward needs
//! alive until it is released.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock, Mutex};

use crate::error::{MdnError, Result};
use crate::field::{DisplacementField, ScalarField};
use crate::kernel::KernelSpec;
use crate::vote::{Edge, VoteContext, VoteGraph, VoteMode, Voting};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64,
    F32,
    I64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I64(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl RawArray {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            shape,
            data: ArrayData::F64(data),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            ArrayData::F64(_) => DType::F64,
            ArrayData::F32(_) => DType::F32,
            ArrayData::I64(_) => DType::I64,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            ArrayData::F64(v) => Some(v),
            _ => None,
        }
    }

    fn from_field(f: &ScalarField) -> Self {
        Self::f64(vec![f.channels(), f.height(), f.width()], f.data().to_vec())
    }
}

fn boundary(argument: &str, message: impl Into<String>) -> MdnError {
    MdnError::Boundary {
        argument: argument.into(),
        message: message.into(),
    }
}

/// Checks dtype, rank and element count, then copies into a field.
fn to_field(name: &str, a: &RawArray, expect: Option<[usize; 3]>) -> Result<ScalarField> {
    let data = a
        .as_f64()
        .ok_or_else(|| boundary(name, format!("expected float64, got {:?}", a.dtype())))?;
    let [c, h, w] = <[usize; 3]>::try_from(a.shape.as_slice())
        .map_err(|_| boundary(name, format!("expected a rank-3 shape, got {:?}", a.shape)))?;
    if let Some(e) = expect {
        if [c, h, w] != e {
            return Err(boundary(
                name,
                format!("expected shape {e:?}, got {:?}", a.shape),
            ));
        }
    }
    let len = c.checked_mul(h).and_then(|v| v.checked_mul(w));
    if len != Some(data.len()) {
        return Err(boundary(
            name,
            format!("shape {:?} does not match {} elements", a.shape, data.len()),
        ));
    }
    ScalarField::from_vec(h, w, c, data.to_vec()).map_err(|e| boundary(name, e.to_string()))
}

/// Opaque reference to a forward pass kept alive for backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CtxHandle(u64);

impl CtxHandle {
    pub fn raw(self) -> u64 {
        self.0
    }

    /// Rebuilds a handle from an integer received across the boundary.
    pub fn from_raw(raw: u64) -> Self {
        Self(raw)
    }
}

#[derive(Debug)]
struct Saved {
    voting: Voting,
    c: ScalarField,
    o: DisplacementField,
    ctx: VoteContext,
}

/// Live contexts. Handles are never reused within a registry.
#[derive(Debug)]
pub struct Registry {
    next: AtomicU64,
    live: Mutex<HashMap<u64, Arc<Saved>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self {
            next: AtomicU64::new(1),
            live: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<u64, Arc<Saved>>> {
        // a panic while holding the lock cannot leave the map inconsistent
        self.live.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn live_handles(&self) -> usize {
        self.lock().len()
    }

    fn get(&self, h: CtxHandle) -> Result<Arc<Saved>> {
        self.lock().get(&h.0).cloned().ok_or_else(|| {
            boundary(
                "ctx",
                format!("handle {} is not live (released or unknown)", h.0),
            )
        })
    }

    pub fn vote_forward(
        &self,
        c: &RawArray,
        ox: &RawArray,
        oy: &RawArray,
        kernel: KernelSpec,
        mode: VoteMode,
        edges: &[(usize, usize)],
    ) -> Result<(RawArray, CtxHandle)> {
        let cf = to_field("c", c, None)?;
        let joints = cf.channels();
        let graph = VoteGraph::from_edges(
            joints,
            edges.iter().map(|&(s, t)| Edge::new(s, t)).collect(),
        )
        .map_err(|e| boundary("edges", e.to_string()))?;
        let eshape = Some([graph.num_edges(), cf.height(), cf.width()]);
        let o = DisplacementField::new(to_field("ox", ox, eshape)?, to_field("oy", oy, eshape)?)?;
        let voting = Voting::new(kernel, mode, graph);
        let (m, ctx) = voting.forward(&cf, &o).map_err(|e| match e {
            MdnError::Domain(msg) => boundary("c", msg),
            other => other,
        })?;
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.lock().insert(
            id,
            Arc::new(Saved {
                voting,
                c: cf,
                o,
                ctx,
            }),
        );
        Ok((RawArray::from_field(&m), CtxHandle(id)))
    }

    /// Returns `(grad_c, grad_ox, grad_oy)`.
    pub fn vote_backward(
        &self,
        h: CtxHandle,
        grad_m: &RawArray,
    ) -> Result<(RawArray, RawArray, RawArray)> {
        let saved = self.get(h)?;
        let expect = saved.ctx.output_shape();
        let g = to_field(
            "grad_m",
            grad_m,
            Some([expect.channels, expect.height, expect.width]),
        )?;
        let grads = saved.voting.backward(&g, &saved.c, &saved.o, &saved.ctx)?;
        Ok((
            RawArray::from_field(&grads.c),
            RawArray::from_field(&grads.ox),
            RawArray::from_field(&grads.oy),
        ))
    }

    /// Frees a context. Releasing twice or releasing an unknown handle is an
    /// error.
    pub fn release(&self, h: CtxHandle) -> Result<()> {
        self.lock().remove(&h.0).map(|_| ()).ok_or_else(|| {
            boundary(
                "ctx",
                format!("handle {} was already released or never issued", h.0),
            )
        })
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

static GLOBAL: LazyLock<Registry> = LazyLock::new(Registry::new);

/// Process-wide registry used by the free functions below.
pub fn global() -> &'static Registry {
    &GLOBAL
}

pub fn bound_vote_forward(
    c: &RawArray,
    ox: &RawArray,
    oy: &RawArray,
    kernel: KernelSpec,
    mode: VoteMode,
    edges: &[(usize, usize)],
) -> Result<(RawArray, CtxHandle)> {
    global().vote_forward(c, ox, oy, kernel, mode, edges)
}

pub fn bound_vote_backward(
    h: CtxHandle,
    grad_m: &RawArray,
) -> Result<(RawArray, RawArray, RawArray)> {
    global().vote_backward(h, grad_m)
}

pub fn release_ctx(h: CtxHandle) -> Result<()> {
    global().release(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrays(j: usize, e: usize, n: usize, cval: f64) -> (RawArray, RawArray, RawArray) {
        (
            RawArray::f64(vec![j, n, n], vec![cval; j * n * n]),
            RawArray::f64(vec![e, n, n], vec![0.0; e * n * n]),
            RawArray::f64(vec![e, n, n], vec![0.0; e * n * n]),
        )
    }

    #[test]
    fn zero_confidence_gives_zero_mass() {
        let reg = Registry::new();
        let (c, ox, oy) = arrays(1, 1, 4, 0.0);
        let (m, h) = reg
            .vote_forward(
                &c,
                &ox,
                &oy,
                KernelSpec::bilinear(),
                VoteMode::NoisyOr,
                &[(0, 0)],
            )
            .unwrap();
        assert!(m.as_f64().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(m.shape, vec![1, 4, 4]);
        reg.release(h).unwrap();
    }

    #[test]
    fn wrong_dtype_names_the_argument() {
        let reg = Registry::new();
        let (_, ox, oy) = arrays(1, 1, 4, 0.0);
        let c = RawArray {
            shape: vec![1, 4, 4],
            data: ArrayData::F32(vec![0.0; 16]),
        };
        let err = reg
            .vote_forward(
                &c,
                &ox,
                &oy,
                KernelSpec::bilinear(),
                VoteMode::Additive,
                &[(0, 0)],
            )
            .unwrap_err();
        assert!(
            matches!(&err, MdnError::Boundary { argument, .. } if argument == "c"),
            "{err}"
        );
    }

    #[test]
    fn shape_errors_name_the_argument() {
        let reg = Registry::new();
        let (c, ox, _) = arrays(1, 1, 4, 0.5);
        let bad = RawArray::f64(vec![1, 4, 3], vec![0.0; 12]);
        let err = reg
            .vote_forward(
                &c,
                &ox,
                &bad,
                KernelSpec::bilinear(),
                VoteMode::Additive,
                &[(0, 0)],
            )
            .unwrap_err();
        assert!(err.to_string().contains("`oy`"), "{err}");
        let lying = RawArray::f64(vec![1, 4, 4], vec![0.0; 15]);
        let err = reg
            .vote_forward(
                &lying,
                &ox,
                &ox,
                KernelSpec::bilinear(),
                VoteMode::Additive,
                &[(0, 0)],
            )
            .unwrap_err();
        assert!(err.to_string().contains("`c`"), "{err}");
    }

    #[test]
    fn released_handles_are_rejected() {
        let reg = Registry::new();
        let (c, ox, oy) = arrays(1, 1, 4, 0.5);
        let (m, h) = reg
            .vote_forward(
                &c,
                &ox,
                &oy,
                KernelSpec::bilinear(),
                VoteMode::Max,
                &[(0, 0)],
            )
            .unwrap();
        let g = RawArray::f64(m.shape.clone(), vec![0.0; 16]);
        let (gc, gx, gy) = reg.vote_backward(h, &g).unwrap();
        for a in [gc, gx, gy] {
            assert!(a.as_f64().unwrap().iter().all(|&v| v == 0.0));
        }
        reg.release(h).unwrap();
        assert_eq!(reg.live_handles(), 0);
        assert!(matches!(reg.release(h), Err(MdnError::Boundary { .. })));
        assert!(matches!(
            reg.vote_backward(h, &g),
            Err(MdnError::Boundary { .. })
        ));
        assert!(reg.vote_backward(CtxHandle::from_raw(9999), &g).is_err());
    }

    #[test]
    fn out_of_range_confidence_is_a_boundary_error() {
        let reg = Registry::new();
        let (c, ox, oy) = arrays(1, 1, 4, 1.5);
        let err = reg
            .vote_forward(
                &c,
                &ox,
                &oy,
                KernelSpec::bilinear(),
                VoteMode::NoisyOr,
                &[(0, 0)],
            )
            .unwrap_err();
        assert!(matches!(&err, MdnError::Boundary { argument, .. } if argument == "c"));
    }
}
