//! Waksman permutation networks of arbitrary size.
//!
//! A network for N wires is built recursively: a column of input swappers
//! feeds a top subnetwork of floor(N/2) wires and a bottom subnetwork of
//! ceil(N/2) wires, whose outputs meet a column of output swappers. For even
//! N the last output swapper is fixed straight and omitted; for odd N the
//! last wire bypasses both columns and runs through the bottom subnetwork.
//! Control bits for a target permutation are found by the classic
//! alternating-cycle 2-coloring, walking constraints from the forced wires.
//!
//! Gate count satisfies W(1) = 0, W(2) = 1, W(N) = N - 1 + W(floor(N/2)) +
//! W(ceil(N/2)), which is N log2 N - N + 1 at powers of two.

use rand::{CryptoRng, Rng, RngCore};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WaksmanError {
    #[error("input is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("network size {expected} does not match input length {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("gate touches wire {wire} outside 0..{size}")]
    WireOutOfRange { wire: usize, size: usize },
}

/// Controlled swapper acting on two wire positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapGate {
    pub a: usize,
    pub b: usize,
    pub cross: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationNetwork {
    size: usize,
    gates: Vec<SwapGate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Half {
    Top,
    Bottom,
}

impl Half {
    fn flip(self) -> Half {
        match self {
            Half::Top => Half::Bottom,
            Half::Bottom => Half::Top,
        }
    }
}

impl PermutationNetwork {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn gates(&self) -> &[SwapGate] {
        &self.gates
    }

    /// Reassemble a network from raw gates, e.g. received over the wire.
    /// Bounds are checked here; whether it routes the permutation a broker
    /// claims is checked by applying it.
    pub fn from_gates(size: usize, gates: Vec<SwapGate>) -> Result<Self, WaksmanError> {
        for g in &gates {
            if g.a >= size {
                return Err(WaksmanError::WireOutOfRange { wire: g.a, size });
            }
            if g.b >= size {
                return Err(WaksmanError::WireOutOfRange { wire: g.b, size });
            }
        }
        Ok(PermutationNetwork { size, gates })
    }

    /// Route items through the network.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Result<Vec<T>, WaksmanError> {
        if items.len() != self.size {
            return Err(WaksmanError::SizeMismatch { expected: self.size, got: items.len() });
        }
        let mut out = items.to_vec();
        for g in &self.gates {
            if g.cross {
                out.swap(g.a, g.b);
            }
        }
        Ok(out)
    }

    /// The permutation this network realizes: output j carries input `perm[j]`.
    pub fn permutation(&self) -> Vec<usize> {
        self.apply(&(0..self.size).collect::<Vec<_>>()).expect("size matches")
    }
}

/// Smallest number of swappers a Waksman network of the given size needs.
pub fn gate_bound(n: usize) -> usize {
    match n {
        0 | 1 => 0,
        2 => 1,
        _ => n - 1 + gate_bound(n / 2) + gate_bound(n - n / 2),
    }
}

/// Build the network realizing `perm`, i.e. applying the result to
/// [0, 1, .., N) yields exactly `perm`.
pub fn build_network(perm: &[usize]) -> Result<PermutationNetwork, WaksmanError> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(WaksmanError::NotAPermutation(n));
        }
        seen[p] = true;
    }
    let mut gates = Vec::with_capacity(gate_bound(n));
    let wires: Vec<usize> = (0..n).collect();
    route(perm, &wires, &mut gates);
    Ok(PermutationNetwork { size: n, gates })
}

/// Sample a uniformly random permutation (Fisher-Yates) and route it.
pub fn sample_uniform_network<R: RngCore + CryptoRng>(
    n: usize,
    rng: &mut R,
) -> PermutationNetwork {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    build_network(&perm).expect("sampled permutation is valid")
}

/// One recursion level. `wires[local]` is the global position of this
/// level's local wire; gates are emitted against global positions.
fn route(perm: &[usize], wires: &[usize], gates: &mut Vec<SwapGate>) {
    let n = perm.len();
    if n <= 1 {
        return;
    }
    if n == 2 {
        gates.push(SwapGate { a: wires[0], b: wires[1], cross: perm[0] == 1 });
        return;
    }

    let mut inv = vec![0usize; n];
    for (j, &i) in perm.iter().enumerate() {
        inv[i] = j;
    }

    let mate = |w: usize| -> Option<usize> {
        if n % 2 == 1 && w == n - 1 {
            None
        } else {
            Some(w ^ 1)
        }
    };

    let mut in_color: Vec<Option<Half>> = vec![None; n];
    let mut out_color: Vec<Option<Half>> = vec![None; n];

    // Walk the alternating constraint chain starting at an output wire.
    // A connection (input perm[j] -> output j) must route through a single
    // subnetwork, so both endpoints share a color; paired wires of one
    // swapper take opposite colors.
    let walk_output = |j0: usize,
                           c0: Half,
                           in_color: &mut Vec<Option<Half>>,
                           out_color: &mut Vec<Option<Half>>| {
        // Each pass around the loop flips the color twice (once at the
        // input pair, once at the output pair), so the entry color is the
        // same every iteration.
        let mut j = j0;
        let color = c0;
        loop {
            out_color[j] = Some(color);
            let i = perm[j];
            in_color[i] = Some(color);
            let Some(im) = mate(i) else { break };
            if in_color[im].is_some() {
                break;
            }
            let nc = color.flip();
            in_color[im] = Some(nc);
            let j2 = inv[im];
            out_color[j2] = Some(nc);
            let Some(jm) = mate(j2) else { break };
            if out_color[jm].is_some() {
                break;
            }
            j = jm;
        }
    };

    if n.is_multiple_of(2) {
        // The omitted last output swapper forces its wires straight: output
        // n-2 from the top subnetwork, output n-1 from the bottom.
        walk_output(n - 1, Half::Bottom, &mut in_color, &mut out_color);
        if out_color[n - 2].is_none() {
            walk_output(n - 2, Half::Top, &mut in_color, &mut out_color);
        }
        debug_assert_eq!(out_color[n - 2], Some(Half::Top));
    } else {
        // The odd wire passes straight through the bottom subnetwork on
        // both sides.
        walk_output(n - 1, Half::Bottom, &mut in_color, &mut out_color);
        if in_color[n - 1].is_none() {
            // Forced input constraint; propagate it from the output it feeds.
            let j = inv[n - 1];
            debug_assert!(out_color[j].is_none());
            walk_output(j, Half::Bottom, &mut in_color, &mut out_color);
        }
        debug_assert_eq!(in_color[n - 1], Some(Half::Bottom));
    }
    for j in 0..n {
        if out_color[j].is_none() {
            walk_output(j, Half::Top, &mut in_color, &mut out_color);
        }
    }

    // Input column. Control bit set = crossed = even wire routed bottom.
    let half = n / 2;
    let mut in_ctrl = vec![false; half];
    for (k, ctrl) in in_ctrl.iter_mut().enumerate() {
        *ctrl = in_color[2 * k] == Some(Half::Bottom);
        gates.push(SwapGate { a: wires[2 * k], b: wires[2 * k + 1], cross: *ctrl });
    }

    // Sub-permutations in port order; input port of wire i is i/2, output
    // port of wire j is j/2 (the odd straight wire lands on the bottom's
    // last port either way).
    let mut top_perm = Vec::with_capacity(half);
    let mut bottom_perm = Vec::with_capacity(n - half);
    for j in 0..n {
        match out_color[j].expect("all outputs colored") {
            Half::Top => top_perm.push(perm[j] / 2),
            Half::Bottom => bottom_perm.push(perm[j] / 2),
        }
    }

    // Global positions backing each subnetwork port: after the input column,
    // top port k sits at wires[2k] and bottom port k at wires[2k+1].
    let mut top_wires = Vec::with_capacity(half);
    let mut bottom_wires = Vec::with_capacity(n - half);
    for k in 0..half {
        top_wires.push(wires[2 * k]);
        bottom_wires.push(wires[2 * k + 1]);
    }
    if n % 2 == 1 {
        bottom_wires.push(wires[n - 1]);
    }

    route(&top_perm, &top_wires, gates);
    route(&bottom_perm, &bottom_wires, gates);

    // Output column; the last swapper is omitted for even n.
    let out_switches = if n.is_multiple_of(2) { half - 1 } else { half };
    for k in 0..out_switches {
        let cross = out_color[2 * k] == Some(Half::Bottom);
        gates.push(SwapGate { a: wires[2 * k], b: wires[2 * k + 1], cross });
    }
}
