"""Bucket-select curve fitting of the nonlinear analog bitline.

Each pixel's analog contribution depends weakly on the cumulative state of
every other activated pixel, which makes a single closed-form model of N
simultaneously driven pixels inaccurate.  The model here uses six bivariate
polynomial surfaces over (current, weight):

* a *generic* surface fitted with all N pixels driven identically, used only
  to place the output coarsely within the full range, and
* five *bucket* surfaces, each fitted with a small subset of m pixels swept
  while the remaining N - m sit at an anchor point chosen so the output
  lands inside that bucket's fifth of the range.

Prediction evaluates the generic surface per pixel to select a bucket, then
sums per-pixel bucket-surface corrections around the anchor level.  A
sigmoid-weighted blend over all buckets replaces the hard selection with a
predictor that is differentiable everywhere, suitable for gradient-based
training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import EstimateOutOfRange, SingularFit, UnreachableBucket

# Step-1 estimates may exceed [0, v_max] by fit noise; clamp up to this
# fraction of v_max, raise beyond it.
ESTIMATE_CLAMP_TOL = 0.02

_ANCHOR_TOL = 1e-6  # bisection stop, fraction of v_max


def _exponents(degree: int) -> list[tuple[int, int]]:
    """(a, b) powers of I^a * W^b with total degree <= degree, fixed order."""
    return [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]


def _design(currents, weights, degree):
    return np.stack([currents**a * weights**b for a, b in _exponents(degree)],
                    axis=-1)


@dataclass
class Surface2D:
    """Bivariate polynomial over normalized (current, weight) in [0, 1]^2."""

    degree: int
    coeffs: np.ndarray          # ordered per _exponents(degree)
    residual_rms: float = 0.0   # RMS misfit on the training grid

    def evaluate(self, currents, weights):
        currents = np.asarray(currents, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        return _design(currents, weights, self.degree) @ self.coeffs

    def grad(self, currents, weights):
        """(d/dI, d/dW) at each point."""
        currents = np.asarray(currents, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        d_i = np.zeros(np.broadcast(currents, weights).shape)
        d_w = np.zeros_like(d_i)
        for c, (a, b) in zip(self.coeffs, _exponents(self.degree)):
            if a > 0:
                d_i += c * a * currents ** (a - 1) * weights**b
            if b > 0:
                d_w += c * b * currents**a * weights ** (b - 1)
        return d_i, d_w

    def to_dict(self) -> dict:
        return {"degree": self.degree, "coeffs": self.coeffs.tolist(),
                "residual_rms": self.residual_rms}

    @classmethod
    def from_dict(cls, doc: dict) -> "Surface2D":
        return cls(degree=int(doc["degree"]),
                   coeffs=np.asarray(doc["coeffs"], dtype=np.float64),
                   residual_rms=float(doc["residual_rms"]))


def fit_surface(currents, weights, targets, degree: int) -> Surface2D:
    """Ordinary least squares fit of targets over scattered (I, W) points."""
    currents = np.asarray(currents, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    matrix = _design(currents, weights, degree)
    coeffs, _, rank, _ = np.linalg.lstsq(matrix, targets, rcond=None)
    if rank < matrix.shape[1]:
        raise SingularFit(
            f"design matrix rank {rank} < {matrix.shape[1]} unknowns")
    residual = matrix @ coeffs - targets
    return Surface2D(degree=degree, coeffs=coeffs,
                     residual_rms=float(np.sqrt(np.mean(residual**2))))


def _sweep_grid(grid_size: int):
    axis = np.linspace(0.0, 1.0, grid_size)
    gi, gw = np.meshgrid(axis, axis, indexing="ij")
    return gi.ravel(), gw.ravel()


def fit_generic(oracle, n_pixels: int, grid_size: int = 21,
                degree: int = 3) -> Surface2D:
    """Fit the homogeneous-drive surface: all N pixels share one (I, W)."""
    gi, gw = _sweep_grid(grid_size)
    targets = oracle.evaluate(np.repeat(gi[:, None], n_pixels, axis=1),
                              np.repeat(gw[:, None], n_pixels, axis=1))
    return fit_surface(gi, gw, targets, degree)


def _homogeneous(oracle, n_pixels, value):
    full = np.full((1, n_pixels), float(value))
    return float(oracle.evaluate(full, full)[0])


def find_anchor(oracle, n_pixels: int, bucket: int,
                n_buckets: int = 5) -> tuple[float, float]:
    """Bisect along I = W = t for the bucket-center output level.

    Relies on the oracle being monotone along the diagonal.
    """
    if not 1 <= bucket <= n_buckets:
        raise ValueError(f"bucket {bucket} not in [1, {n_buckets}]")
    v_max = oracle.v_max
    target = (2 * bucket - 1) / (2 * n_buckets) * v_max
    top = _homogeneous(oracle, n_pixels, 1.0)
    if top < target - 1e-4 * v_max:
        raise UnreachableBucket(
            f"bucket {bucket} center {target:.4g} above oracle maximum {top:.4g}")
    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        out = _homogeneous(oracle, n_pixels, mid)
        if abs(out - target) <= _ANCHOR_TOL * v_max or hi - lo < 1e-14:
            return mid, mid
        if out < target:
            lo = mid
        else:
            hi = mid


def fit_bucket(oracle, anchor: tuple[float, float], n_pixels: int,
               subset_size: int, grid_size: int = 21,
               degree: int = 3) -> Surface2D:
    """Fit one bucket surface: m pixels swept, N - m held at the anchor."""
    if not subset_size < n_pixels:
        raise ValueError("subset_size must be smaller than n_pixels")
    gi, gw = _sweep_grid(grid_size)
    rest = n_pixels - subset_size
    currents = np.concatenate(
        [np.repeat(gi[:, None], subset_size, axis=1),
         np.full((gi.size, rest), anchor[0])], axis=1)
    weights = np.concatenate(
        [np.repeat(gw[:, None], subset_size, axis=1),
         np.full((gw.size, rest), anchor[1])], axis=1)
    targets = oracle.evaluate(currents, weights)
    return fit_surface(gi, gw, targets, degree)


@dataclass
class BucketModel:
    """One range-specific surface with its anchor operating point.

    ``anchor_output`` is the oracle's homogeneous output with every pixel at
    the anchor (the bucket center, by construction).  Using the oracle level
    rather than the fitted generic surface's value matters: the constant is
    amplified by (N/m - 1) in the predictor, so fit error there would
    dominate the result.
    """

    index: int                  # 1-based
    surface: Surface2D
    anchor_current: float       # I_C
    anchor_weight: float        # W_C
    anchor_output: float        # homogeneous oracle output at the anchor
    reachable: bool = True

    def to_dict(self) -> dict:
        return {"index": self.index, "surface": self.surface.to_dict(),
                "anchor_current": self.anchor_current,
                "anchor_weight": self.anchor_weight,
                "anchor_output": self.anchor_output,
                "reachable": self.reachable}

    @classmethod
    def from_dict(cls, doc: dict) -> "BucketModel":
        return cls(index=int(doc["index"]),
                   surface=Surface2D.from_dict(doc["surface"]),
                   anchor_current=float(doc["anchor_current"]),
                   anchor_weight=float(doc["anchor_weight"]),
                   anchor_output=float(doc["anchor_output"]),
                   reachable=bool(doc["reachable"]))


@dataclass
class SurrogateModel:
    """Fitted generic + bucket surfaces; immutable once built."""

    generic: Surface2D
    buckets: list[BucketModel]
    pixel_count: int            # N contributions per bitline
    subset_size: int            # m swept pixels per bucket fit
    slope: float                # sigmoid steepness
    v_max: float
    oracle_info: dict = field(default_factory=dict)

    @property
    def n_buckets(self) -> int:
        return len(self.buckets)

    # -- step 1: coarse estimate ------------------------------------------

    def estimate(self, currents, weights):
        """Mean of the generic surface over per-pixel evaluations (V_est)."""
        currents, weights = self._check(currents, weights)
        return self.generic.evaluate(currents, weights).mean(axis=-1)

    def select_bucket(self, estimate):
        """0-based bucket index for a (clamped) estimate; boundaries go up."""
        x = np.asarray(estimate, dtype=np.float64) / self.v_max
        if np.any(x < -ESTIMATE_CLAMP_TOL) or np.any(x > 1 + ESTIMATE_CLAMP_TOL):
            bad = x[(x < -ESTIMATE_CLAMP_TOL) | (x > 1 + ESTIMATE_CLAMP_TOL)]
            raise EstimateOutOfRange(
                f"normalized estimate {bad[0]:.4f} outside [0, 1] "
                f"beyond tolerance {ESTIMATE_CLAMP_TOL}")
        x = np.clip(x, 0.0, 1.0)
        return np.minimum(self.n_buckets - 1,
                          np.floor(x * self.n_buckets).astype(np.intp))

    # -- step 2: bucket-corrected predictions ------------------------------

    def _check(self, currents, weights):
        currents = np.atleast_2d(np.asarray(currents, dtype=np.float64))
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        if currents.shape[-1] != self.pixel_count:
            raise ValueError(
                f"expected {self.pixel_count} contributions, "
                f"got {currents.shape[-1]}")
        if currents.shape != weights.shape:
            raise ValueError("currents and weights shapes differ")
        return currents, weights

    def _bucket_predictions(self, currents, weights):
        """Per-bucket refined outputs, shape (n_buckets, batch)."""
        n, m = self.pixel_count, self.subset_size
        preds = np.empty((self.n_buckets, currents.shape[0]))
        for bi, bucket in enumerate(self.buckets):
            total = bucket.surface.evaluate(currents, weights).sum(axis=-1)
            preds[bi] = (total - n * bucket.anchor_output) / m + bucket.anchor_output
        return preds

    def predict_step(self, currents, weights):
        """Hard bucket selection: correction from the chosen surface only."""
        currents, weights = self._check(currents, weights)
        sel = self.select_bucket(self.estimate(currents, weights))
        preds = self._bucket_predictions(currents, weights)
        out = preds[sel, np.arange(currents.shape[0])]
        return out if out.size > 1 else float(out[0])

    def _sigmoid_weights(self, x):
        """Per-bucket window weights; approximately one-hot away from edges."""
        edges = np.arange(self.n_buckets + 1) / self.n_buckets
        lo = edges[:-1][:, None]
        hi = edges[1:][:, None]
        z = x[None, :]
        return expit(self.slope * (z - lo)) + expit(self.slope * (hi - z)) - 1.0

    def predict_sigmoid(self, currents, weights):
        """Differentiable blend of all bucket predictions."""
        currents, weights = self._check(currents, weights)
        x = self.estimate(currents, weights) / self.v_max
        preds = self._bucket_predictions(currents, weights)
        out = (self._sigmoid_weights(x) * preds).sum(axis=0)
        return out if out.size > 1 else float(out[0])

    def gradient(self, currents, weights):
        """Analytic (dV/dI_j, dV/dW_j) of predict_sigmoid, one vector each.

        The estimate x depends on every contribution through the generic
        surface, so the chain rule carries both the surface terms and the
        reweighting of buckets.
        """
        currents = np.asarray(currents, dtype=np.float64).reshape(-1)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if currents.shape != (self.pixel_count,):
            raise ValueError(f"expected {self.pixel_count} contributions")
        n, m = self.pixel_count, self.subset_size
        x = float(np.squeeze(self.estimate(currents, weights))) / self.v_max
        # d x / d(I_j, W_j) through the generic surface mean
        gen_di, gen_dw = self.generic.grad(currents, weights)
        dx_di = gen_di / (n * self.v_max)
        dx_dw = gen_dw / (n * self.v_max)
        preds = self._bucket_predictions(currents[None, :], weights[None, :])[:, 0]
        # window weights and their x-derivatives
        edges = np.arange(self.n_buckets + 1) / self.n_buckets
        z_lo = self.slope * (x - edges[:-1])
        z_hi = self.slope * (edges[1:] - x)
        wgt = expit(z_lo) + expit(z_hi) - 1.0
        sig_d = lambda z: expit(z) * (1.0 - expit(z))
        wgt_dx = self.slope * (sig_d(z_lo) - sig_d(z_hi))
        reweight = float(wgt_dx @ preds)
        d_i = dx_di * reweight
        d_w = dx_dw * reweight
        for bi, bucket in enumerate(self.buckets):
            sur_di, sur_dw = bucket.surface.grad(currents, weights)
            d_i += wgt[bi] * sur_di / m
            d_w += wgt[bi] * sur_dw / m
        return d_i, d_w

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "v_max": self.v_max, "pixel_count": self.pixel_count,
            "subset_size": self.subset_size, "slope": self.slope,
            "generic": self.generic.to_dict(),
            "buckets": [b.to_dict() for b in self.buckets],
            "oracle_info": self.oracle_info,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SurrogateModel":
        return cls(generic=Surface2D.from_dict(doc["generic"]),
                   buckets=[BucketModel.from_dict(b) for b in doc["buckets"]],
                   pixel_count=int(doc["pixel_count"]),
                   subset_size=int(doc["subset_size"]),
                   slope=float(doc["slope"]), v_max=float(doc["v_max"]),
                   oracle_info=dict(doc.get("oracle_info", {})))

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_surrogate(oracle, n_pixels: int = 75, subset_size: int = 5,
                  n_buckets: int = 5, degree: int = 3, grid_size: int = 21,
                  slope: float = 100.0) -> SurrogateModel:
    """Fit all surfaces against an oracle.

    Buckets whose center lies above the oracle's output range reuse the
    nearest reachable bucket's anchor and are flagged unreachable.
    """
    generic = fit_generic(oracle, n_pixels, grid_size, degree)
    anchors: list[tuple[float, float] | None] = []
    for bucket in range(1, n_buckets + 1):
        try:
            anchors.append(find_anchor(oracle, n_pixels, bucket, n_buckets))
        except UnreachableBucket:
            anchors.append(None)
    if all(a is None for a in anchors):
        raise UnreachableBucket("oracle range reaches no bucket center")
    buckets = []
    for bucket in range(1, n_buckets + 1):
        anchor = anchors[bucket - 1]
        reachable = anchor is not None
        if not reachable:
            # nearest reachable bucket by index distance, lower on ties
            order = sorted(range(n_buckets),
                           key=lambda k: (abs(k - (bucket - 1)), k))
            anchor = next(anchors[k] for k in order if anchors[k] is not None)
        surface = fit_bucket(oracle, anchor, n_pixels, subset_size,
                             grid_size, degree)
        buckets.append(BucketModel(
            index=bucket, surface=surface,
            anchor_current=anchor[0], anchor_weight=anchor[1],
            anchor_output=_homogeneous(oracle, n_pixels, anchor[0]),
            reachable=reachable))
    info = {"type": type(oracle).__name__,
            "params": getattr(oracle, "params", {}),
            "n_pixels": n_pixels, "grid_size": grid_size, "degree": degree}
    return SurrogateModel(generic=generic, buckets=buckets,
                          pixel_count=n_pixels, subset_size=subset_size,
                          slope=slope, v_max=oracle.v_max, oracle_info=info)


@dataclass
class ErrorReport:
    """Prediction-error statistics over random contribution vectors."""

    trials: int
    seed: int
    mean_abs_step: float = 0.0
    max_abs_step: float = 0.0
    mean_abs_sigmoid: float = 0.0
    max_abs_sigmoid: float = 0.0
    mean_rel_step: float = 0.0        # relative to |oracle output|
    mean_rel_sigmoid: float = 0.0
    v_max: float = 1.0
    bucket_counts: list = field(default_factory=list)
    bucket_mean_abs_step: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials, "seed": self.seed, "v_max": self.v_max,
            "step": {"mean_abs": self.mean_abs_step,
                     "max_abs": self.max_abs_step,
                     "mean_abs_over_vmax": self.mean_abs_step / self.v_max,
                     "mean_rel_to_output": self.mean_rel_step},
            "sigmoid": {"mean_abs": self.mean_abs_sigmoid,
                        "max_abs": self.max_abs_sigmoid,
                        "mean_abs_over_vmax": self.mean_abs_sigmoid / self.v_max,
                        "mean_rel_to_output": self.mean_rel_sigmoid},
            "bucket_counts": self.bucket_counts,
            "bucket_mean_abs_step": self.bucket_mean_abs_step,
        }


def error_report(model: SurrogateModel, oracle, trials: int,
                 seed: int = 0) -> ErrorReport:
    """Evaluate both predictors against the oracle on uniform random inputs."""
    if trials == 0:
        return ErrorReport(trials=0, seed=seed, v_max=model.v_max)
    rng = np.random.default_rng(seed)
    currents = rng.uniform(0.0, 1.0, (trials, model.pixel_count))
    weights = rng.uniform(0.0, 1.0, (trials, model.pixel_count))
    truth = np.asarray(oracle.evaluate(currents, weights))
    step = np.atleast_1d(model.predict_step(currents, weights))
    smooth = np.atleast_1d(model.predict_sigmoid(currents, weights))
    err_step = np.abs(step - truth)
    err_sig = np.abs(smooth - truth)
    sel = model.select_bucket(model.estimate(currents, weights))
    counts, bucket_means = [], []
    for b in range(model.n_buckets):
        hits = sel == b
        counts.append(int(hits.sum()))
        bucket_means.append(float(err_step[hits].mean()) if hits.any() else 0.0)
    safe = np.abs(truth) > 1e-12
    return ErrorReport(
        trials=trials, seed=seed, v_max=model.v_max,
        mean_abs_step=float(err_step.mean()),
        max_abs_step=float(err_step.max()),
        mean_abs_sigmoid=float(err_sig.mean()),
        max_abs_sigmoid=float(err_sig.max()),
        mean_rel_step=float((err_step[safe] / np.abs(truth[safe])).mean()),
        mean_rel_sigmoid=float((err_sig[safe] / np.abs(truth[safe])).mean()),
        bucket_counts=counts, bucket_mean_abs_step=bucket_means)
