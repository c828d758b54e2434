"""SNR-family training objectives with analytic gradients.

Every loss takes the estimate first and returns a :class:`LossValue` whose
gradient is taken with respect to the estimate only. Estimates may carry
leading batch axes (``(..., T)``); references and mixtures broadcast against
them. This is what lets :func:`check_gradient` evaluate all perturbed points
in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import as_samples

_DB = 10.0 / np.log(10.0)
SI_SNR_CAP_DB = 120.0


class LossDomainError(ValueError):
    """The loss is undefined for the given inputs."""


@dataclass(frozen=True)
class LossConfig:
    tau_active: float = 1e-3
    tau_inactive: float = 1e-2
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        for name in ("tau_active", "tau_inactive", "epsilon_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.tau_active >= 1 or self.tau_inactive >= 1:
            raise ValueError("thresholds must be below 1")


@dataclass(frozen=True, eq=False)
class LossValue:
    value: float | np.ndarray
    gradient: np.ndarray


def _energy(x):
    return np.einsum("...t,...t->...", x, x)


def _check_lengths(est, other, what):
    if est.shape[-1] != other.shape[-1]:
        raise ValueError(f"estimate has {est.shape[-1]} samples, {what} has {other.shape[-1]}")


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def loss_active(estimate, reference, cfg: LossConfig = LossConfig()) -> LossValue:
    """Negative thresholded SNR.

    ``-10 log10(|s|^2 / (|s - e|^2 + tau |s|^2))``; bounded below by
    ``-10 log10(1 / tau)`` which is reached at ``e == s``.
    """
    est, ref = as_samples(estimate), as_samples(reference)
    _check_lengths(est, ref, "reference")
    ref_energy = _energy(ref)
    if np.any(ref_energy <= 0):
        raise LossDomainError("active loss undefined for zero reference")
    diff = est - ref
    denom = np.maximum(_energy(diff) + cfg.tau_active * ref_energy, cfg.epsilon_floor)
    value = _DB * (np.log(denom) - np.log(ref_energy))
    grad = 2.0 * _DB * diff / denom[..., None]
    return LossValue(_scalar(value), grad)


def loss_inactive(estimate, mixture, cfg: LossConfig = LossConfig()) -> LossValue:
    """``10 log10(|e|^2 + tau_inactive |y|^2)``, pushing the estimate towards zero."""
    est, mix = as_samples(estimate), as_samples(mixture)
    _check_lengths(est, mix, "mixture")
    mix_energy = _energy(mix)
    if np.any(mix_energy <= 0):
        raise LossDomainError("inactive loss undefined for zero mixture")
    arg = np.maximum(_energy(est) + cfg.tau_inactive * mix_energy, cfg.epsilon_floor)
    value = _DB * np.log(arg)
    grad = 2.0 * _DB * est / arg[..., None]
    return LossValue(_scalar(value), grad)


def is_absent(reference) -> bool:
    """True for the inactive-speaker marker: ``None`` or an all-zero signal."""
    return reference is None or not np.any(as_samples(reference))


def loss_composite(estimate, reference, mixture, cfg: LossConfig = LossConfig()) -> LossValue:
    """Active loss when the target is present, inactive loss when it is absent."""
    if is_absent(reference):
        return loss_inactive(estimate, mixture, cfg)
    return loss_active(estimate, reference, cfg)


def loss_si_snr(estimate, reference) -> LossValue:
    """Negative scale-invariant SNR after zero-mean centering.

    Values are clipped to ``[-120, 120]`` dB; the gradient is zero where the
    clip is active.
    """
    est, ref = as_samples(estimate), as_samples(reference)
    _check_lengths(est, ref, "reference")
    ref = ref - ref.mean(axis=-1, keepdims=True)
    est_c = est - est.mean(axis=-1, keepdims=True)
    ref_energy = _energy(ref)
    if np.any(ref_energy <= 0):
        raise LossDomainError("SI-SNR undefined for zero reference")
    if np.any(_energy(est_c) <= 0):
        raise LossDomainError("SI-SNR undefined for zero estimate")

    alpha = np.einsum("...t,...t->...", est_c, ref) / ref_energy
    target = alpha[..., None] * ref
    resid = est_c - target
    t_energy, r_energy = _energy(target), _energy(resid)
    tiny = np.finfo(np.float64).tiny
    with np.errstate(divide="ignore"):
        raw = _DB * (np.log(np.maximum(r_energy, tiny)) - np.log(np.maximum(t_energy, tiny)))
    value = np.clip(raw, -SI_SNR_CAP_DB, SI_SNR_CAP_DB)
    inside = (raw > -SI_SNR_CAP_DB) & (raw < SI_SNR_CAP_DB)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = 2.0 * _DB * (resid / r_energy[..., None] - target / t_energy[..., None])
    grad = np.where(inside[..., None], grad, 0.0)
    return LossValue(_scalar(value), grad)


def check_gradient(loss_op, estimate, *args, step: float | None = None, **kwargs) -> float:
    """Worst per-coordinate relative error between analytic and numeric gradients.

    Central differences with step ``1e-6 * max(rms(estimate), 1e-12)`` unless
    ``step`` is given. Each coordinate's error is divided by
    ``max(|g_analytic|, |g_numeric|, floor)`` where ``floor`` is the larger of
    ``1e-3 * max|g_analytic|`` and ``1e-4 * (1 + |loss|) / rms``; the floor keeps
    coordinates whose true gradient is ~0 from reporting pure rounding noise.
    """
    x = as_samples(estimate)
    n = x.shape[-1]
    rms = max(float(np.sqrt(np.mean(x * x))), 1e-12)
    h = step if step is not None else 1e-6 * rms
    base = loss_op(x, *args, **kwargs)
    perturb = np.eye(n) * h
    plus = loss_op(x + perturb, *args, **kwargs).value
    minus = loss_op(x - perturb, *args, **kwargs).value
    numeric = (np.asarray(plus) - np.asarray(minus)) / (2.0 * h)
    analytic = np.asarray(base.gradient)
    floor = max(1e-3 * float(np.max(np.abs(analytic))), 1e-4 * (1.0 + abs(float(base.value))) / rms)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
