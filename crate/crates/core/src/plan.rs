//! Chain rewriting (operator fusion) and op placement for the two-pool
//! executor: which ops run on the host pool and which on the offload pool.

use alloc::vec::Vec;

use crate::augment::{AugmentChain, AugmentOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolTag {
    Host,
    Offload,
}

/// Where augmentation work may run. `Shared` models a CPU+accelerator
/// split with a second host-resident worker pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationPolicy {
    HostOnly,
    Shared { offload_workers: u32 },
}

impl AllocationPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AllocationPolicy::HostOnly => "hostonly",
            AllocationPolicy::Shared { .. } => "shared",
        }
    }
}

/// Pool tag per op position in the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpPlacement {
    tags: Vec<PoolTag>,
}

/// A maximal run of same-pool ops: chain positions `start..end` on `pool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub pool: PoolTag,
    pub start: usize,
    pub end: usize,
}

impl OpPlacement {
    pub fn from_tags(tags: Vec<PoolTag>) -> Self {
        OpPlacement { tags }
    }

    pub fn tags(&self) -> &[PoolTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Split into maximal same-pool runs, in chain order. The executor hands
    /// a sample from pool to pool once per segment boundary.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.tags.len() {
            let pool = self.tags[start];
            let mut end = start + 1;
            while end < self.tags.len() && self.tags[end] == pool {
                end += 1;
            }
            out.push(Segment { pool, start, end });
            start = end;
        }
        out
    }
}

/// Fuse adjacent RandomCrop + Normalize into the single-pass op. Disabled
/// (or no adjacent pair) → the chain is returned unchanged. Idempotent: the
/// fused op never matches the pattern again.
pub fn optimize_chain(chain: &AugmentChain, fuse: bool) -> AugmentChain {
    if !fuse {
        return chain.clone();
    }
    let ops = chain.ops();
    let mut out: Vec<AugmentOp> = Vec::with_capacity(ops.len());
    let mut i = 0;
    while i < ops.len() {
        if i + 1 < ops.len() {
            if let (
                AugmentOp::RandomCrop { out_h, out_w },
                AugmentOp::Normalize { mean, std },
            ) = (ops[i], ops[i + 1])
            {
                out.push(AugmentOp::FusedCropNormalize { out_h, out_w, mean, std });
                i += 2;
                continue;
            }
        }
        out.push(ops[i]);
        i += 1;
    }
    AugmentChain::new(out).expect("rewrite preserves chain validity")
}

/// Place each op on a pool. HostOnly → everything Host. Shared → geometric
/// ops (resize, crop, flip) on Host; ColorJitter, Normalize, and the fused
/// crop-normalize (which moves as one unit, its crop stage included) on
/// Offload. If the rule lands everything on one pool, the final op is moved
/// to Offload so Shared engages both pools.
pub fn assign_ops(chain: &AugmentChain, policy: &AllocationPolicy) -> OpPlacement {
    let ops = chain.ops();
    match policy {
        AllocationPolicy::HostOnly => {
            OpPlacement::from_tags(alloc::vec![PoolTag::Host; ops.len()])
        }
        AllocationPolicy::Shared { .. } => {
            let mut tags: Vec<PoolTag> = ops
                .iter()
                .map(|op| match op {
                    AugmentOp::ResizeShortSide { .. }
                    | AugmentOp::RandomCrop { .. }
                    | AugmentOp::RandomHFlip { .. } => PoolTag::Host,
                    AugmentOp::ColorJitter { .. }
                    | AugmentOp::Normalize { .. }
                    | AugmentOp::FusedCropNormalize { .. } => PoolTag::Offload,
                })
                .collect();
            if !tags.is_empty() && tags.iter().all(|&t| t == tags[0]) {
                *tags.last_mut().expect("non-empty") = PoolTag::Offload;
            }
            OpPlacement::from_tags(tags)
        }
    }
}
