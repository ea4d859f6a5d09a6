//! Counter-based random streams.
//!
//! Every variate is a pure function of a 64-bit key and a 128-bit address
//! `(tag, t, i, k)`, computed with the Philox4x32-10 block function. Streams can
//! be forked into child streams and perturbed with a Crank–Nicolson move for
//! correlated pseudo-marginal chains.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::special::{std_normal_cdf, std_normal_quantile};

/// Fixed purpose tags for the first address word.
pub mod tag {
    pub const PROPOSE: u32 = 1;
    pub const RESAMPLE: u32 = 2;
    pub const RESAMPLE_REF: u32 = 3;
    pub const TRAJECTORY: u32 = 4;
    pub const SIMULATE: u32 = 5;
    pub const MH: u32 = 6;
    pub const MH_ACCEPT: u32 = 7;
    pub const PM_SEED: u32 = 8;
    pub const REPLICATE: u32 = 9;
    pub const ISLAND: u32 = 10;
    pub const NODE: u32 = 11;
    pub const NODE_SELECT: u32 = 12;
    pub const SWEEP: u32 = 13;
    pub const REFERENCE: u32 = 14;
    pub const OPTIMIZE: u32 = 15;
    pub const ORACLE: u32 = 16;
    pub const NESTED: u32 = 17;
    pub const FORK: u32 = 0xF0F0_0001;
    pub const USER: u32 = 0x1000;
}

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for r in 0..10 {
        if r > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Address {
    pub tag: u32,
    pub t: u32,
    pub i: u32,
    pub k: u32,
}

impl Address {
    pub const fn new(tag: u32, t: u32, i: u32, k: u32) -> Self {
        Address { tag, t, i, k }
    }
    fn words(self) -> [u32; 4] {
        [self.tag, self.t, self.i, self.k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawKind {
    Uniform,
    StandardNormal,
}

#[inline]
fn uniform_from(w0: u32, w1: u32) -> f64 {
    let m = ((w0 as u64) << 21) | ((w1 as u64) >> 11);
    (m as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

#[inline]
fn normal_from(b: [u32; 4]) -> f64 {
    let u1 = uniform_from(b[0], b[1]);
    let u2 = uniform_from(b[2], b[3]);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn split(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

/// A deterministic source of uniforms and normals addressed by counters.
///
/// A plain stream is a single key. A correlated stream is a linear combination
/// of the standard-normal fields of several keys (coefficients with unit sum
/// of squares); its uniforms are the normal CDF of the combined field.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedStream {
    key: [u32; 2],
    mix: Option<Arc<[([u32; 2], f64)]>>,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { key: split(seed), mix: None }
    }

    /// Master key (first component for correlated streams).
    pub fn key(&self) -> u64 {
        (self.key[0] as u64) | ((self.key[1] as u64) << 32)
    }

    pub fn is_correlated(&self) -> bool {
        self.mix.is_some()
    }

    /// Components `(key, coefficient)` of the normal field.
    pub fn components(&self) -> Vec<(u64, f64)> {
        match &self.mix {
            None => alloc::vec![(self.key(), 1.0)],
            Some(m) => m.iter().map(|(k, c)| ((k[0] as u64) | ((k[1] as u64) << 32), *c)).collect(),
        }
    }

    #[inline]
    pub fn block(&self, a: Address) -> [u32; 4] {
        philox4x32(a.words(), self.key)
    }

    #[inline]
    pub fn uniform(&self, a: Address) -> f64 {
        match &self.mix {
            None => {
                let b = self.block(a);
                uniform_from(b[0], b[1])
            }
            Some(m) => {
                let z: f64 = m
                    .iter()
                    .map(|(k, c)| {
                        let b = philox4x32(a.words(), *k);
                        c * std_normal_quantile(uniform_from(b[0], b[1]))
                    })
                    .sum();
                let u = std_normal_cdf(z);
                u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
        }
    }

    #[inline]
    pub fn normal(&self, a: Address) -> f64 {
        match &self.mix {
            None => normal_from(self.block(a)),
            Some(m) => m.iter().map(|(k, c)| c * normal_from(philox4x32(a.words(), *k))).sum(),
        }
    }

    pub fn draw(&self, a: Address, kind: DrawKind) -> f64 {
        match kind {
            DrawKind::Uniform => self.uniform(a),
            DrawKind::StandardNormal => self.normal(a),
        }
    }

    fn fork_key(key: [u32; 2], tag: u32, a: u32, b: u32) -> [u32; 2] {
        let w = philox4x32([tag::FORK, tag, a, b], key);
        [w[0], w[1]]
    }

    /// Child stream for a nested or per-node computation.
    pub fn fork(&self, tag: u32, a: u32, b: u32) -> SeedStream {
        SeedStream {
            key: Self::fork_key(self.key, tag, a, b),
            mix: self.mix.as_ref().map(|m| {
                m.iter().map(|(k, c)| (Self::fork_key(*k, tag, a, b), *c)).collect::<Vec<_>>().into()
            }),
        }
    }

    /// Crank–Nicolson move: the normal field becomes `rho * self + sqrt(1 - rho^2) * fresh`.
    /// `fresh` must be a plain stream.
    pub fn crank_nicolson(&self, rho: f64, fresh: &SeedStream) -> SeedStream {
        let s = libm::sqrt((1.0 - rho * rho).max(0.0));
        let mut comps: Vec<([u32; 2], f64)> = match &self.mix {
            None => alloc::vec![(self.key, rho)],
            Some(m) => m.iter().map(|(k, c)| (*k, c * rho)).collect(),
        };
        // components whose weight has decayed below 1e-10 are dropped
        comps.retain(|(_, c)| libm::fabs(*c) >= 1e-10);
        comps.push((fresh.key, s));
        let key = comps[0].0;
        if comps.len() == 1 && comps[0].1 == 1.0 {
            return SeedStream { key, mix: None };
        }
        SeedStream { key, mix: Some(comps.into()) }
    }

    /// Sequential cursor over draw index `k` at a fixed `(tag, t, i)`.
    pub fn draws(&self, tag: u32, t: u32, i: u32) -> Draws<'_> {
        Draws { stream: self, tag, t, i, k: 0 }
    }
}

/// Cursor that hands out successive draws at `(tag, t, i, 0), (tag, t, i, 1), ...`.
#[derive(Debug)]
pub struct Draws<'a> {
    stream: &'a SeedStream,
    tag: u32,
    t: u32,
    i: u32,
    k: u32,
}

impl<'a> Draws<'a> {
    #[inline]
    fn next_address(&mut self) -> Address {
        let a = Address::new(self.tag, self.t, self.i, self.k);
        self.k = self.k.wrapping_add(1);
        a
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let a = self.next_address();
        self.stream.uniform(a)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        let a = self.next_address();
        self.stream.normal(a)
    }

    /// Child stream owned by this cursor position, for nested samplers.
    pub fn substream(&mut self) -> SeedStream {
        let a = self.next_address();
        let mut s = self.stream.fork(tag::NESTED, a.tag, a.t);
        s = s.fork(tag::NESTED, a.i, a.k);
        s
    }

    pub fn position(&self) -> u32 {
        self.k
    }
}
