"""Per-neighbor Unknown Input Observers: synthesis, thresholds, detection.

Each DGU runs one UIO per neighbor on the decoded communicated measurement
yhat.  The observer

    z' = F z + K_hat yhat,     x_hat = z + H yhat

is decoupled from every input unknown to the receiver (loads, references,
the secondary input and electrical coupling of the observed DGU) through
S E_bar = 0 with S = I - H.  The residual r = yhat - x_hat is compared
component-wise against a time-varying threshold r_bar = e_bar + rho_bar;
a crossing latches an alarm.

With C = I the bundle is synthesized as an orthogonal projector:
H = E_bar E_bar^T, S = I - H, F = -lambda I, which gives the decay
certificate ||exp(F t)|| = exp(-lambda t) exactly (kappa = 1, mu = lambda)
and makes the error-bound integral available in closed form.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import orth

from .comm import ReplayAttackConfig, WatermarkConfig, delta_breakpoints, replay_delta
from .grid import DguMatrices, NoiseBounds


# ---------------------------------------------------------------- synthesis

@dataclass
class UioBundle:
    """Observer matrices and decay constants for one (owner, neighbor) pair."""

    F: np.ndarray        # 3x3 Hurwitz
    S: np.ndarray        # 3x3, S E_bar = 0
    H: np.ndarray        # 3x3 output injection, S = I - H C
    K_hat: np.ndarray    # 3x3 observer gain
    K1: np.ndarray       # 3x3, K_hat = K1 + F H
    E_bar: np.ndarray    # 3xm unknown-input matrix, full column rank
    kappa: float         # ||exp(F t)|| <= kappa exp(-mu t)
    mu: float


def build_unknown_input_matrix(mats: DguMatrices) -> np.ndarray:
    """Orthonormal basis of the unknown-input directions of the observed DGU.

    Stacks [M | G | A_jk for k in N_j]; for the RLC model this span is
    {e1, e3} (loads and coupling act on V', references and alpha on v'),
    so E_bar has rank 2.
    """
    cols = [mats.M, mats.G.reshape(3, 1)]
    cols.extend(mats.A_ij[j] for j in sorted(mats.A_ij))
    return orth(np.hstack(cols))


def synthesize_uio(A_K, E_bar, lam) -> UioBundle:
    """Observer bundle for a neighbor with closed-loop matrix A_K.

    H is the orthogonal projector onto span(E_bar), so S E_bar = 0 holds to
    machine precision; F = -lam*I leaves K1 free to absorb S A_K.
    """
    if lam <= 0:
        raise ValueError("observer decay rate lambda must be > 0")
    A_K = np.asarray(A_K, dtype=float)
    E_bar = np.asarray(E_bar, dtype=float)
    H = E_bar @ E_bar.T
    S = np.eye(3) - H
    F = -lam * np.eye(3)
    K1 = S @ A_K - F
    K_hat = K1 + F @ H
    return UioBundle(F=F, S=S, H=H, K_hat=K_hat, K1=K1, E_bar=E_bar,
                     kappa=1.0, mu=float(lam))


# ---------------------------------------------------------------- thresholds

def threshold_constants(uio: UioBundle, bounds: NoiseBounds, B, K):
    """(h_rho, s_const) with h_rho = |H| rho_bar and
    s_const = |S| w_bar + |S B K - K_hat| rho_bar, the constant integrand of
    the estimation-error bound."""
    SBK = np.outer(uio.S @ np.asarray(B, dtype=float), np.asarray(K, dtype=float))
    h_rho = np.abs(uio.H) @ bounds.rho_bar
    s_const = np.abs(uio.S) @ bounds.w_bar + np.abs(SBK - uio.K_hat) @ bounds.rho_bar
    return h_rho, s_const


def threshold_value(t, uio: UioBundle, bounds: NoiseBounds, e_bar0, B, K):
    """Estimation-error bound e_bar(t) and detection threshold r_bar(t).

    Closed form of the constant-integrand bound

        e_bar(t) = kappa e^{-mu t} [e_bar(0) + |H| rho_bar] + |H| rho_bar
                   + (kappa/mu)(1 - e^{-mu t}) (|S| w_bar + |S B K - K_hat| rho_bar)

    where t is elapsed time since the observer started.  Accepts scalar or
    array t; returns (e_bar, r_bar) with r_bar = e_bar + rho_bar.
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("threshold is defined for t >= 0")
    h_rho, s_const = threshold_constants(uio, bounds, B, K)
    e_bar0 = np.asarray(e_bar0, dtype=float)
    dec = np.exp(-uio.mu * t)[..., None]
    e_bar = (uio.kappa * dec * (e_bar0 + h_rho)
             + h_rho
             + (uio.kappa / uio.mu) * (1.0 - dec) * s_const)
    return e_bar, e_bar + bounds.rho_bar


# ---------------------------------------------------------------- detection

@dataclass
class DetectorState:
    """Online state of one observer, advanced once per communication step."""

    z: np.ndarray
    x_hat: np.ndarray
    e_bar0: np.ndarray
    elapsed: float = 0.0
    alarm: bool = False
    alarm_time: float = None
    alarm_component: int = None


@dataclass
class ResidualRecord:
    """Residual and threshold emitted by one detector step."""

    t_elapsed: float
    r: np.ndarray
    r_bar: np.ndarray
    alarm: bool


def init_detector(uio: UioBundle, y_hat0, bounds: NoiseBounds,
                  startup_margin=0.0) -> DetectorState:
    """Start an observer on its first decoded frame.

    z = S yhat makes x_hat(0) = yhat(0), so |e(0)| <= rho_bar and
    e_bar(0) = |yhat - x_hat| + rho_bar is a valid bound.  startup_margin
    adds that many extra rho_bar to e_bar(0) to absorb sampled-data effects
    during the cold-start transient; the surcharge decays like e^{-mu t}.
    """
    y_hat0 = np.asarray(y_hat0, dtype=float)
    z = uio.S @ y_hat0
    x_hat = z + uio.H @ y_hat0
    e_bar0 = np.abs(y_hat0 - x_hat) + (1.0 + startup_margin) * bounds.rho_bar
    return DetectorState(z=z, x_hat=x_hat, e_bar0=e_bar0)


def rk4_scalar_maps(a, dt):
    """One-step maps (phi, psi) of RK4 on z' = a z + const input."""
    x = a * dt
    phi = 1.0 + x + x * x / 2 + x ** 3 / 6 + x ** 4 / 24
    psi = dt * (1.0 + x / 2 + x * x / 6 + x ** 3 / 24)
    return phi, psi


def detector_step(state: DetectorState, uio: UioBundle, bounds: NoiseBounds,
                  y_hat, dt, B, K):
    """Evaluate the residual on a fresh decoded frame, then advance z by dt.

    The record refers to the frame's arrival time (state.elapsed before the
    update); z is integrated by one RK4 step of z' = F z + K_hat yhat with
    the frame held constant, the same scheme the engine applies to the plant.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    y_hat = np.asarray(y_hat, dtype=float)
    x_hat = state.z + uio.H @ y_hat
    r = y_hat - x_hat
    _, r_bar = threshold_value(state.elapsed, uio, bounds, state.e_bar0, B, K)
    if not state.alarm:
        cross = np.abs(r) > r_bar
        if cross.any():
            state.alarm = True
            state.alarm_time = state.elapsed
            state.alarm_component = int(np.argmax(cross))
    record = ResidualRecord(t_elapsed=state.elapsed, r=r, r_bar=r_bar,
                            alarm=state.alarm)
    phi, psi = rk4_scalar_maps(-uio.mu, dt)
    state.z = phi * state.z + psi * (uio.K_hat @ y_hat)
    state.x_hat = x_hat
    state.elapsed += dt
    return state, record


def stealth_check(e_a_Ta, e_bar_Ta) -> bool:
    """Replay-stealthiness test: |e_a(Ta)| <= e_bar(Ta) component-wise.

    e_a(Ta) = x(Ta - T) - x_hat(Ta), evaluated with simulator ground truth.
    True guarantees no alarm on [Ta, Ta + T) in a watermark-free run.
    """
    return bool(np.all(np.abs(np.asarray(e_a_Ta)) <= np.asarray(e_bar_Ta)))


# ------------------------------------------------- detectability (Prop. 2 side)

def _require_isotropic(uio: UioBundle):
    if not np.allclose(uio.F, -uio.mu * np.eye(3), rtol=0, atol=1e-12):
        raise NotImplementedError("detectability integral assumes F = -mu*I")


def detectability_lhs(t, uio: UioBundle, atk: ReplayAttackConfig,
                      wm: WatermarkConfig):
    """|S delta(t) - int_Ta^t e^{F(t-tau)} K_hat delta(tau) dtau|, exactly.

    delta is piecewise constant, so each segment contributes
    (1 - e^{-mu dtau})/mu * K_hat delta_seg to the convolution.
    """
    _require_isotropic(uio)
    if t < atk.t_attack:
        raise ValueError("detectability is evaluated for t >= t_attack")
    mu = uio.mu
    pts = [p for p in delta_breakpoints(atk, wm, t) if p < t] + [t]
    integral = np.zeros(3)
    for s0, s1 in zip(pts, pts[1:]):
        d = replay_delta(0.5 * (s0 + s1), atk, wm)
        decay = np.exp(-mu * (s1 - s0))
        integral = integral * decay + (1.0 - decay) / mu * (uio.K_hat @ d)
    return np.abs(uio.S @ replay_delta(t, atk, wm) - integral)


def guaranteed_detection_time(uio: UioBundle, atk: ReplayAttackConfig,
                              wm: WatermarkConfig, r_bar_fn, horizon,
                              grid_dt=1e-3):
    """Smallest grid time with any component of the Prop.-2 lhs above 2 r_bar.

    Returns None when the condition is never met on [Ta, horizon]; absence
    means detection is not guaranteed, not that it will not occur.  r_bar_fn
    maps absolute time to the 3-vector threshold of the monitored link.
    """
    _require_isotropic(uio)
    Ta = atk.t_attack
    if horizon <= Ta or wm.slope == 0.0:
        return None
    mu = uio.mu
    pts = delta_breakpoints(atk, wm, horizon)
    integral = np.zeros(3)
    for s0, s1 in zip(pts, pts[1:]):
        d_seg = replay_delta(0.5 * (s0 + s1), atk, wm)
        Kd = uio.K_hat @ d_seg
        n_sub = max(int(np.ceil((s1 - s0) / grid_dt)), 1)
        tau = np.linspace(0.0, s1 - s0, n_sub + 1)[1:]
        dec = np.exp(-mu * tau)[:, None]
        lhs = np.abs((uio.S @ d_seg)[None, :]
                     - (integral[None, :] * dec + (1.0 - dec) / mu * Kd[None, :]))
        r_bar = np.stack([r_bar_fn(s0 + v) for v in tau])
        hit = (lhs > 2.0 * r_bar).any(axis=1)
        if hit.any():
            return float(s0 + tau[np.argmax(hit)])
        decay = np.exp(-mu * (s1 - s0))
        integral = integral * decay + (1.0 - decay) / mu * Kd
    return None
