"""Poisson-weighted Gaussian dip/peak fits of HOM scans."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailureError, InvalidParameterError
from .quantum import C_MM_PER_PS, HomScan

SHAPES = ("dip", "peak")
V_FLAG_RANGE = (-0.05, 1.05)
GRAD_TOL = 1e-10  # on |J^T r| / (|J| max(|r|, 1)), normalized parameters
PARAMS = ("baseline", "visibility", "tau_c", "center")


@dataclass
class FitResult:
    visibility: float
    tau_c: float  # 1/e half-width of the Gaussian feature, ps
    length_c: float  # C_MM_PER_PS * tau_c, mm
    baseline: float
    center: float  # ps
    std_errors: dict
    shape: str
    covariance: np.ndarray = field(repr=False)
    flagged: bool = False  # visibility outside V_FLAG_RANGE
    shape_ambiguous: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["covariance"] = np.asarray(self.covariance).tolist()
        return d


def model(tau, baseline, visibility, tau_c, center, shape="dip"):
    s = -1.0 if shape == "dip" else 1.0
    return baseline * (1.0 + s * visibility * np.exp(-((tau - center) ** 2) / tau_c**2))


def _initial_guess(x, y, shape):
    order = np.argsort(x)
    x, y = x[order], y[order]
    n_out = max(1, int(round(0.1 * len(x))))
    base = float(np.mean(np.r_[y[:n_out], y[-n_out:]]))
    if base <= 0:
        base = float(np.max(y)) or 1.0
    k = int(np.argmin(y) if shape == "dip" else np.argmax(y))
    depth = abs(y[k] - base)
    vis = depth / base
    if depth <= 1e-9 * abs(base):
        return np.array([base, 0.0, 0.25 * np.ptp(x), float(np.mean(x))])
    # half-depth crossing on either side of the extremum
    dev = np.abs(y - base)
    half = dev >= 0.5 * depth
    lo, hi = k, k
    while lo > 0 and half[lo - 1]:
        lo -= 1
    while hi < len(x) - 1 and half[hi + 1]:
        hi += 1
    hw = 0.5 * (x[hi] - x[lo]) if hi > lo else 0.5 * np.min(np.diff(x))
    tau_c = max(hw, 0.5 * np.min(np.diff(x))) / np.sqrt(np.log(2.0))
    return np.array([base, vis, tau_c, x[k]])


def _grad_norm(J, r) -> float:
    """Scale-free gradient of chi^2 / 2; zero at a stationary point."""
    return float(np.linalg.norm(J.T @ r) / (np.linalg.norm(J) * max(np.linalg.norm(r), 1.0)))


def fit_scan(scan: HomScan, shape: str = "dip", max_nfev: int = 2000) -> FitResult:
    """Weighted least squares of B (1 -+ V exp(-(tau - tau0)^2 / tau_c^2)).

    With counts present the data are counts with sigma = sqrt(max(counts, 1));
    otherwise the noiseless rates are fitted with unit weights.
    """
    if shape not in SHAPES:
        raise InvalidParameterError(f"shape must be 'dip' or 'peak', got {shape!r}")
    x = np.asarray(scan.delays, dtype=float)
    if len(x) < 7:
        raise InvalidParameterError("need at least 7 delay points")
    if scan.counts is not None:
        y = np.asarray(scan.counts, dtype=float)
        sig = np.sqrt(np.maximum(y, 1.0))
    else:
        y = np.asarray(scan.rates, dtype=float)
        sig = np.ones_like(y)
    p0 = _initial_guess(x, y, shape)

    # normalized parameters keep the problem well scaled
    scale = np.array([p0[0], 1.0, p0[2], p0[2]])

    def unpack(z):
        return z * scale

    def resid(z):
        b, v, tc, c = unpack(z)
        return (model(x, b, v, tc, c, shape) - y) / sig

    def jac(z):
        b, v, tc, c = unpack(z)
        s = -1.0 if shape == "dip" else 1.0
        g = np.exp(-((x - c) ** 2) / tc**2)
        J = np.empty((len(x), 4))
        J[:, 0] = 1.0 + s * v * g
        J[:, 1] = b * s * g
        J[:, 2] = b * s * v * g * 2.0 * (x - c) ** 2 / tc**3
        J[:, 3] = b * s * v * g * 2.0 * (x - c) / tc**2
        return J * scale / sig[:, None]

    z0 = p0 / scale
    sol = least_squares(resid, z0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_nfev)
    z = sol.x
    # Gauss-Newton polish to push the gradient to round-off
    for _ in range(50):
        r, J = resid(z), jac(z)
        if _grad_norm(J, r) < 1e-3 * GRAD_TOL:
            break
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        z_new = z + step
        if np.sum(resid(z_new) ** 2) > np.sum(r**2) * (1 + 1e-12):
            break
        z = z_new
    r, J = resid(z), jac(z)
    grad_norm = _grad_norm(J, r)
    chi2 = float(np.sum(r**2))
    diagnostics = {
        "status": int(sol.status),
        "nfev": int(sol.nfev),
        "gradient_norm": grad_norm,
        "chi2": chi2,
        "dof": int(len(x) - 4),
        "initial": dict(zip(PARAMS, map(float, p0))),
    }

    JtJ = J.T @ J
    cov_z = np.linalg.pinv(JtJ, rcond=1e-13)
    if scan.counts is None:
        # unit weights carry no noise scale; use the residual variance instead
        cov_z = cov_z * (chi2 / max(len(x) - 4, 1))
    cov = cov_z * np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    singular = np.linalg.cond(JtJ) > 1e13
    if singular:
        se = np.where(np.arange(4) == 0, se, np.inf)

    b, v, tc, c = map(float, unpack(z))
    tc = abs(tc)
    ambiguous = bool(singular or not np.isfinite(se[1]) or abs(v) < 3.0 * se[1] or v < 0)
    if grad_norm >= GRAD_TOL and not ambiguous:
        raise FitFailureError(
            f"fit did not converge: gradient norm {grad_norm:.3e} after {sol.nfev} evaluations",
            diagnostics,
        )
    # a window narrower than two widths cannot pin baseline and width separately
    if not ambiguous and np.ptp(x) < 2.0 * tc:
        raise InvalidParameterError(
            f"delays span {np.ptp(x):.4g} ps, less than two fitted widths ({2 * tc:.4g} ps)"
        )
    flagged = not (V_FLAG_RANGE[0] <= v <= V_FLAG_RANGE[1])
    return FitResult(
        visibility=v,
        tau_c=tc,
        length_c=C_MM_PER_PS * tc,
        baseline=b,
        center=c,
        std_errors={
            "baseline": float(se[0]),
            "visibility": float(se[1]),
            "tau_c": float(se[2]),
            "center": float(se[3]),
            "length_c": float(C_MM_PER_PS * se[2]),
        },
        shape=shape,
        covariance=cov,
        flagged=flagged,
        shape_ambiguous=ambiguous,
        diagnostics=diagnostics,
    )
