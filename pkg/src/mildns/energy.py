"""Energy bookkeeping on computed trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fixed_point import Trajectory
from .noise import mc_summary
from .spectral import derivative_norm


@dataclass
class EnergyLedger:
    """Per-step energy terms of one trajectory.

    ``kinetic`` has one entry per time node, the increments one per step.
    Dissipation uses a mode-wise trapezoidal rule weighted by
    ``(2/x) tanh(x/2)``, ``x = 2 c lambda dt``, which integrates pure viscous
    decay exactly.
    """

    times: np.ndarray
    kinetic: np.ndarray
    dissipation: np.ndarray
    noise_input: np.ndarray
    martingale: np.ndarray

    @property
    def audited(self) -> np.ndarray:
        """``kinetic(t) + cumulative dissipation - cumulative noise input``."""
        cum = np.concatenate([[0.0], np.cumsum(self.dissipation - self.noise_input)])
        return self.kinetic + cum

    def rows(self) -> list[tuple]:
        d = np.concatenate([self.dissipation, [0.0]])
        n = np.concatenate([self.noise_input, [0.0]])
        m = np.concatenate([self.martingale, [0.0]])
        return [(float(t), float(k), float(a), float(b), float(c), float(x))
                for t, k, a, b, c, x in zip(self.times, self.kinetic, d, n, m, self.audited)]

    CSV_HEADER = ("t", "kinetic", "dissipation_increment", "noise_input_increment",
                  "martingale_increment", "audited")


def _fitted_weight(x: np.ndarray) -> np.ndarray:
    out = np.ones_like(x)
    big = x > 1e-8
    out[big] = 2.0 / x[big] * np.tanh(0.5 * x[big])
    return out


def dissipation_increments(traj: Trajectory) -> np.ndarray:
    """``mu int |grad u|^2`` over each step with the exponentially fitted rule."""
    g = traj.grid
    cfg = traj.cfg
    lam = g.eigenvalues
    dt = np.diff(traj.times)
    out = np.empty(dt.size)
    for j0 in range(0, dt.size, 64):
        j1 = min(dt.size, j0 + 64)
        spectrum = np.sum(np.abs(g.fft(traj.u[j0:j1 + 1])) ** 2, axis=1) / g.npoints**2
        rho_mean = cfg.rho_bar * (1.0 + np.mean(traj.a[j0:j1], axis=g.axes))
        c = cfg.mu / rho_mean
        for i in range(j1 - j0):
            w = _fitted_weight(2.0 * c[i] * lam * dt[j0 + i])
            out[j0 + i] = cfg.mu * dt[j0 + i] * np.sum(lam * w * 0.5 * (spectrum[i] + spectrum[i + 1]))
    return out


def build_ledger(traj: Trajectory) -> EnergyLedger:
    g = traj.grid
    cfg = traj.cfg
    rho = cfg.rho_bar * (1.0 + traj.a)
    kinetic = 0.5 * np.mean(rho * np.sum(traj.u**2, axis=1), axis=g.axes)
    dt = np.diff(traj.times)
    dissipation = dissipation_increments(traj)
    J = traj.times.size - 1
    noise_input = np.zeros(J)
    martingale = np.zeros(J)
    if traj.noise is not None and traj.increments is not None and not traj.noise.is_zero:
        var = traj.noise.pointwise_variance()
        noise_input = dt * 0.5 * np.mean(rho[:-1] * var, axis=g.axes)
        forcing = traj.noise.forcing(traj.increments[:J])
        martingale = np.mean(rho[:-1] * np.sum(traj.u[:-1] * forcing, axis=1), axis=g.axes)
    return EnergyLedger(traj.times.copy(), kinetic, dissipation, noise_input, martingale)


@dataclass
class AuditVerdict:
    passed: bool
    tolerance_rate: float
    worst_rate: float
    offending_interval: tuple | None
    nonincreasing: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["offending_interval"] = list(self.offending_interval) if self.offending_interval else None
        return out


def energy_audit(traj: Trajectory, rel_tol: float = 1e-6) -> tuple[EnergyLedger, AuditVerdict]:
    """Deterministic balance check on every interval ``[t_i, t_j]``.

    The balance defect ``K(t_j) + sum D - K(t_i)`` must stay within
    ``rel_tol * K(0) * (t_j - t_i)``. The check is exhaustive over pairs of
    time nodes through cumulative sums.
    """
    ledger = build_ledger(traj)
    aud = ledger.audited
    k0 = float(ledger.kinetic[0])
    tol_rate = rel_tol * k0
    t = ledger.times
    worst, where = 0.0, None
    for i in range(t.size - 1):
        span = t[i + 1:] - t[i]
        rate = np.abs(aud[i + 1:] - aud[i]) / span
        j = int(np.argmax(rate))
        if rate[j] > worst:
            worst, where = float(rate[j]), (float(t[i]), float(t[i + 1 + j]))
    passed = worst <= tol_rate if k0 > 0 else worst == 0.0
    diffs = np.diff(ledger.kinetic)
    nonincr = bool(np.all(diffs <= 1e-14 * max(k0, 1e-300)))
    return ledger, AuditVerdict(bool(passed), tol_rate, worst, None if passed else where, nonincr,
                                {"kinetic0": k0})


def stochastic_energy_audit(ledgers: list[EnergyLedger]) -> dict:
    """Mean drift of the audited combination across samples with a 95% interval."""
    drift = np.array([l.audited[-1] - l.audited[0] for l in ledgers])
    mean, se, ci = mc_summary(drift)
    return {
        "estimate": mean,
        "exact_or_bound": 0.0,
        "rel_error": abs(mean) / max(np.mean([l.kinetic[0] + np.sum(l.noise_input) for l in ledgers]), 1e-300),
        "ci_95": [ci[0], ci[1]],
        "samples": len(ledgers),
        "standard_error": se,
        "passed": bool(ci[0] <= 0.0 <= ci[1]),
    }


@dataclass
class EnvelopeReport:
    k: int
    sup_norm: float
    dissipation_integral: float
    initial_norm: float
    envelope: np.ndarray
    fitted_constant: float
    linear_slope: float
    finite: bool
    monotone_envelope: bool
    nonincreasing_norm: bool

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["envelope"] = [float(x) for x in self.envelope]
        return out


def high_order_envelope(traj: Trajectory, k: int) -> EnvelopeReport:
    """Envelope ``sup_{s<=t} ||grad^k u||^2 + int_0^t ||grad^{k+1} u||^2``.

    ``fitted_constant`` is the envelope at the final time divided by
    ``||grad^k u0||^2`` (or the raw envelope when the data vanish);
    ``linear_slope`` is the least-squares slope of ``||grad^k u(t)||^2``.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    g = traj.grid
    u_hat = g.fft(traj.u)
    nk = derivative_norm(g, u_hat, k, components=True)
    nk1 = derivative_norm(g, u_hat, k + 1, components=True)
    t = traj.times
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (nk1[:-1] ** 2 + nk1[1:] ** 2))])
    env = np.maximum.accumulate(nk**2) + integ
    init = float(nk[0])
    c_fit = float(env[-1] / init**2) if init > 0 else float(env[-1])
    slope = float(np.polyfit(t, nk**2, 1)[0]) if t.size > 1 else 0.0
    return EnvelopeReport(
        k=k,
        sup_norm=float(nk.max()),
        dissipation_integral=float(integ[-1]),
        initial_norm=init,
        envelope=env,
        fitted_constant=c_fit,
        linear_slope=slope,
        finite=bool(np.all(np.isfinite(env))),
        monotone_envelope=bool(np.all(np.diff(env) >= 0)),
        nonincreasing_norm=bool(np.all(np.diff(nk) <= 1e-12 * max(init, 1e-300))),
    )
