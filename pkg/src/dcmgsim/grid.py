"""Electrical model of a DC microgrid of DGUs coupled by resistive lines.

Each DGU is a DC source + converter + RLC filter feeding its point of
common coupling (PCC).  Per-DGU state is x = [V, I_t, v]:

    V    PCC voltage (V)
    I_t  converter terminal current (A)
    v    integrator state of the primary voltage loop (V s)

The continuous dynamics of DGU i are

    x' = A_ii x + B u + G alpha + M d + sum_j A_ij x_j + w,   y = x + rho

with d = [I_L, V_ref], u the primary input, alpha the secondary
(consensus) input, and w / rho bounded process / measurement noise.
"""

from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------- types

@dataclass
class DguParams:
    """Electrical parameters and primary gain of one DGU."""

    R_t: float          # filter resistance (ohm)
    L_t: float          # filter inductance (H)
    C_t: float          # shunt capacitance (F)
    V_ref: float        # voltage reference (V)
    I_t_s: float        # current-sharing rating (A), > 0
    K: np.ndarray       # primary gain row [k1, k2, k3]

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        if self.K.shape != (3,):
            raise ValueError(f"K must have 3 entries, got shape {self.K.shape}")
        for name in ("R_t", "L_t", "C_t", "I_t_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class Line:
    """Resistive power line between two DGUs; activates at t_activate."""

    a: int
    b: int
    resistance: float
    t_activate: float = 0.0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"self-loop on DGU {self.a}")
        if self.resistance <= 0:
            raise ValueError(f"line ({self.a},{self.b}): resistance must be > 0")


@dataclass
class MicrogridTopology:
    """Undirected weighted graph of DGUs; communication shares the topology."""

    dgu_ids: list
    lines: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for ln in self.lines:
            if ln.a not in self.dgu_ids or ln.b not in self.dgu_ids:
                raise ValueError(f"line ({ln.a},{ln.b}) references unknown DGU")
            key = frozenset((ln.a, ln.b))
            if key in seen:
                raise ValueError(f"duplicate line between {ln.a} and {ln.b}")
            seen.add(key)

    def neighbors(self, i, at_time=None):
        """Map neighbor id -> line resistance; optionally only active lines."""
        out = {}
        for ln in self.lines:
            if at_time is not None and ln.t_activate > at_time:
                continue
            if ln.a == i:
                out[ln.b] = ln.resistance
            elif ln.b == i:
                out[ln.a] = ln.resistance
        return out

    def directed_links(self):
        """All ordered (src, dst) pairs, one per direction of each line."""
        out = []
        for ln in self.lines:
            out.append((ln.a, ln.b))
            out.append((ln.b, ln.a))
        return out


@dataclass
class NoiseBounds:
    """Component-wise bounds on process and measurement noise."""

    w_bar: np.ndarray
    rho_bar: np.ndarray
    hold_dt: float = 1e-4   # noise sample-and-hold interval (s)

    def __post_init__(self):
        self.w_bar = np.asarray(self.w_bar, dtype=float)
        self.rho_bar = np.asarray(self.rho_bar, dtype=float)
        if self.w_bar.shape != (3,) or self.rho_bar.shape != (3,):
            raise ValueError("noise bounds must be 3-vectors")
        if (self.w_bar < 0).any() or (self.rho_bar < 0).any():
            raise ValueError("noise bounds must be >= 0")
        if self.hold_dt <= 0:
            raise ValueError("hold_dt must be > 0")


@dataclass
class LoadSchedule:
    """Piecewise-constant load current, given as sorted (time, amps) breakpoints."""

    breakpoints: list

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("empty load schedule")
        times = [t for t, _ in self.breakpoints]
        if times[0] != 0.0:
            raise ValueError("first load breakpoint must be at t=0")
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError("load breakpoints must be strictly increasing")
        self._times = np.array(times)
        self._values = np.array([v for _, v in self.breakpoints], dtype=float)

    def value(self, t):
        """Load current at time t (vectorized over array t)."""
        idx = np.searchsorted(self._times, t, side="right") - 1
        return self._values[np.maximum(idx, 0)]


def toggle_breakpoints(a, b, period, horizon):
    """Expand "toggle between a and b every `period` seconds" into breakpoints.

    The load is `a` on [0, period), `b` on [period, 2*period), and so on.
    """
    if period <= 0:
        raise ValueError("toggle period must be > 0")
    pts = [(0.0, a)]
    t, level = period, b
    while t < horizon:
        pts.append((t, level))
        level = a if level == b else b
        t += period
    return pts


@dataclass
class DguMatrices:
    """State-space matrices of one DGU for the active neighbor set."""

    A_ii: np.ndarray            # 3x3
    B: np.ndarray               # 3,
    G: np.ndarray               # 3,  (second column of M)
    M: np.ndarray               # 3x2, maps d = [I_L, V_ref]
    C: np.ndarray               # 3x3 identity
    A_ij: dict                  # neighbor id -> 3x3 coupling matrix


# ------------------------------------------------------------ operations

def build_matrices(params: DguParams, topology: MicrogridTopology, dgu,
                   at_time=None) -> DguMatrices:
    """State-space matrices of one DGU given its (active) neighbor lines.

    A_ii's (0,0) entry carries the total line conductance -sum_j 1/(R_ij C_t);
    each A_ij has 1/(R_ij C_t) at (0,0) and zeros elsewhere.
    """
    if dgu not in topology.dgu_ids:
        raise ValueError(f"unknown DGU id {dgu}")
    C_t, L_t, R_t = params.C_t, params.L_t, params.R_t
    nb = topology.neighbors(dgu, at_time)
    g_total = sum(1.0 / r for r in nb.values())
    A_ii = np.array([
        [-g_total / C_t, 1.0 / C_t, 0.0],
        [-1.0 / L_t, -R_t / L_t, 0.0],
        [-1.0, 0.0, 0.0],
    ])
    B = np.array([0.0, 1.0 / L_t, 0.0])
    M = np.array([[-1.0 / C_t, 0.0], [0.0, 0.0], [0.0, 1.0]])
    G = M[:, 1].copy()
    A_ij = {}
    for j, r in nb.items():
        Aij = np.zeros((3, 3))
        Aij[0, 0] = 1.0 / (r * C_t)
        A_ij[j] = Aij
    return DguMatrices(A_ii=A_ii, B=B, G=G, M=M, C=np.eye(3), A_ij=A_ij)


def closed_loop_matrix(mats: DguMatrices, K) -> np.ndarray:
    """A_K = A_ii + B K, the primary closed loop of one DGU."""
    return mats.A_ii + np.outer(mats.B, np.asarray(K, dtype=float))


def dgu_vector_field(x, u, alpha, d, neighbor_states, mats: DguMatrices, w=None):
    """Continuous-time derivative of one DGU's state.

    Args:
        x: 3-vector state [V, I_t, v]
        u: scalar primary input (V)
        alpha: scalar secondary input (V)
        d: 2-vector known input [I_L, V_ref]
        neighbor_states: map neighbor id -> 3-vector state, one per active line
        mats: matrices from build_matrices for the same active neighbor set
        w: optional 3-vector process noise sample
    """
    if set(neighbor_states) != set(mats.A_ij):
        missing = set(mats.A_ij) - set(neighbor_states)
        extra = set(neighbor_states) - set(mats.A_ij)
        raise ValueError(f"neighbor states mismatch: missing {missing}, extra {extra}")
    dx = mats.A_ii @ np.asarray(x, dtype=float)
    dx = dx + mats.B * float(u) + mats.G * float(alpha)
    dx = dx + mats.M @ np.asarray(d, dtype=float)
    for j, Aij in mats.A_ij.items():
        dx = dx + Aij @ np.asarray(neighbor_states[j], dtype=float)
    if w is not None:
        dx = dx + np.asarray(w, dtype=float)
    return dx


def sample_noise(bounds: NoiseBounds, rng):
    """One (w, rho) draw, each component uniform on [-bound, +bound]."""
    w = rng.uniform(-1.0, 1.0, 3) * bounds.w_bar
    rho = rng.uniform(-1.0, 1.0, 3) * bounds.rho_bar
    return w, rho


def measure(x, rho):
    """Measurement y = C x + rho with C = I."""
    return np.asarray(x, dtype=float) + np.asarray(rho, dtype=float)


def hurwitz_margin(A) -> float:
    """Largest real part of the eigenvalues of A (< 0 means Hurwitz)."""
    return float(np.linalg.eigvals(np.asarray(A, dtype=float)).real.max())
