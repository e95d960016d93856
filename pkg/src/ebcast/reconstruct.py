"""Partial-to-whole channel reconstruction: subspace projection and LMMSE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import ChannelMatrix, flatten, unflatten
from .errors import ConditioningError, InvalidInputError, RankDeficiencyError
from .observation import ObservationMask
from .subspace import EbBasis

PROJECTION_MODES = ("zero-fill", "masked-ls")


@dataclass(frozen=True)
class ReconstructionResult:
    channel: ChannelMatrix
    method: str
    coefficients: np.ndarray | None = None


def project(h0_flat: np.ndarray, basis: EbBasis, mode: str = "zero-fill",
            mask: ObservationMask | None = None) -> np.ndarray:
    """Basis coefficients of a flattened partial observation.

    zero-fill treats unsampled entries as zeros and takes the plain inner
    products conj(U).T @ h0. masked-ls solves the least-squares fit of the
    basis restricted to the sampled entries and needs the mask; it raises
    RankDeficiencyError when the sampled rows cannot determine every
    coefficient.
    """
    vec = np.asarray(h0_flat, dtype=np.complex128)
    if vec.shape != (basis.n_flat,):
        raise InvalidInputError(
            f"observation length {vec.shape} does not match basis rows ({basis.n_flat},)"
        )
    if mode == "zero-fill":
        return basis.basis.conj().T @ vec
    if mode == "masked-ls":
        if mask is None:
            raise InvalidInputError("masked-ls projection requires the observation mask")
        sel = mask.flat_bool()
        if sel.shape != (basis.n_flat,):
            raise InvalidInputError("mask size does not match the basis rows")
        rows = basis.basis[sel]
        if rows.shape[0] < basis.n_basis:
            raise RankDeficiencyError(
                f"{rows.shape[0]} sampled entries cannot determine "
                f"{basis.n_basis} coefficients"
            )
        coeff, _, rank, _ = np.linalg.lstsq(rows, vec[sel], rcond=None)
        if rank < basis.n_basis:
            raise RankDeficiencyError(
                f"masked basis rank {rank} < n_basis {basis.n_basis}"
            )
        return coeff
    raise InvalidInputError(f"unknown projection mode {mode!r}")


def synthesize(coefficients: np.ndarray, basis: EbBasis) -> np.ndarray:
    """Flat channel spanned by the basis at the given coefficients."""
    coeff = np.asarray(coefficients, dtype=np.complex128)
    if coeff.shape != (basis.n_basis,):
        raise InvalidInputError(
            f"expected {basis.n_basis} coefficients, got shape {coeff.shape}"
        )
    return basis.basis @ coeff


def project_reconstruct(h0: ChannelMatrix, basis: EbBasis, mode: str = "zero-fill",
                        mask: ObservationMask | None = None,
                        method: str | None = None) -> ReconstructionResult:
    """Project a partial observation onto a cell basis and synthesize the
    whole matrix. The method tag defaults to EB-PR for noisy-snapshot bases
    and IEB-PR for ideal ones."""
    coeff = project(flatten(h0), basis, mode=mode, mask=mask)
    h_hat = unflatten(synthesize(coeff, basis), h0.array, h0.ofdm,
                      coords=h0.coords, time_s=h0.time_s)
    if method is None:
        method = "EB-PR" if basis.noisy else "IEB-PR"
    return ReconstructionResult(h_hat, method, coeff)


def zero_fill(h0: ChannelMatrix) -> ReconstructionResult:
    """Identity baseline: the partial observation itself is the estimate."""
    return ReconstructionResult(h0, "zero-fill", None)


def hold_last(history) -> ChannelMatrix:
    """Future-prediction baseline: repeat the most recent channel."""
    items = list(history)
    if not items:
        raise InvalidInputError("hold_last needs at least one historical channel")
    return items[-1]


@dataclass
class LmmseModel:
    """Second-order statistics of (whole, observed) flattened channel pairs.

    cross_corr is E[h h0^H]; auto_corr_reg is E[h0 h0^H] + sigma2 * I, kept
    positive definite by the sigma2 > 0 requirement. mask_sha256
    fingerprints the pilot mask the observed samples were produced with
    (None when unknown). The Cholesky factor is cached after the first
    solve.
    """

    cross_corr: np.ndarray
    auto_corr_reg: np.ndarray
    sigma2: float
    mask_sha256: str | None = None
    _cho: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cross = np.ascontiguousarray(self.cross_corr, dtype=np.complex128)
        auto = np.ascontiguousarray(self.auto_corr_reg, dtype=np.complex128)
        if cross.ndim != 2 or cross.shape[0] != cross.shape[1]:
            raise InvalidInputError("cross_corr must be square")
        if auto.shape != cross.shape:
            raise InvalidInputError("auto_corr_reg must match cross_corr's shape")
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        self.cross_corr = cross
        self.auto_corr_reg = auto

    @property
    def n_flat(self) -> int:
        return self.cross_corr.shape[0]


def lmmse_fit(truth: np.ndarray, observed: np.ndarray, sigma2: float,
              mask: ObservationMask | None = None) -> LmmseModel:
    """Fit sample statistics from rows of (whole, observed) flat channels:
    cross = mean(h h0^H), auto = mean(h0 h0^H) + sigma2 * I."""
    h = np.ascontiguousarray(truth, dtype=np.complex128)
    h0 = np.ascontiguousarray(observed, dtype=np.complex128)
    if h.ndim != 2 or h.shape != h0.shape or h.shape[0] < 1:
        raise InvalidInputError(
            f"need matching non-empty sample stacks, got {h.shape} and {h0.shape}"
        )
    n = h.shape[0]
    cross = h.T @ h0.conj() / n
    auto = h0.T @ h0.conj() / n
    auto[np.diag_indices_from(auto)] += sigma2
    fingerprint = None
    if mask is not None:
        from .tensorio import sha256_bytes
        fingerprint = sha256_bytes(mask.data.tobytes())
    return LmmseModel(cross, auto, float(sigma2), fingerprint)


def _cholesky(model: LmmseModel):
    if model._cho is None:
        try:
            model._cho = scipy.linalg.cho_factor(model.auto_corr_reg, lower=True)
        except scipy.linalg.LinAlgError as exc:
            cond = float(np.linalg.cond(model.auto_corr_reg))
            raise ConditioningError(
                f"regularized autocorrelation is not positive definite "
                f"(condition estimate {cond:.3e})", cond
            ) from exc
    return model._cho


def lmmse_predict(h0_flat: np.ndarray, model: LmmseModel) -> np.ndarray:
    """Linear MMSE estimate cross_corr @ solve(auto_corr_reg, h0)."""
    vec = np.asarray(h0_flat, dtype=np.complex128)
    if vec.shape != (model.n_flat,):
        raise InvalidInputError(
            f"observation length {vec.shape} does not match model ({model.n_flat},)"
        )
    x = scipy.linalg.cho_solve(_cholesky(model), vec)
    return model.cross_corr @ x


def lmmse_reconstruct(h0: ChannelMatrix, model: LmmseModel) -> ReconstructionResult:
    h_hat = unflatten(lmmse_predict(flatten(h0), model), h0.array, h0.ofdm,
                      coords=h0.coords, time_s=h0.time_s)
    return ReconstructionResult(h_hat, "LMMSE", None)
