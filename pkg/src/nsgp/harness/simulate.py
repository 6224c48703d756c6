"""Per-timestep sensing simulation.

Each train timestep is paired index-wise with the test timestep of the
same rank, so offset protocols (train on days 1, 11, ... and score on
days 5, 15, ...) work as long as both splits expose the same number of
distinct timesteps. At every round the train points of the current
timestep are the candidate sensor sites; k of them are picked by the
greedy mutual-information rule under the model covariance, conditioned
on their true values, and the paired test points are predicted from
that conditioning set alone (plus the last ``history_window`` rounds'
picks when enabled).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from ..errors import StageError, ValidationError
from ..gp_core import ObservationSet, posterior
from ..selection import SelectionProblem, greedy_mi_select
from .dataio import Standardizer

__all__ = ["SensingRound", "SimulationReport", "iter_sensing_rounds", "simulate_sensing"]

MEAN_RMSE_TOL = 1e-12


@dataclass(frozen=True)
class SensingRound:
    """What happened at one timestep of the simulation."""

    index: int
    train_t: float
    test_t: float
    selected_points: np.ndarray
    conditioning: ObservationSet
    rmse_std: float


@dataclass(frozen=True)
class SimulationReport:
    """Simulation results, RMSE in the data's original units.

    ``mean_rmse`` must equal the mean of ``rmse`` to within
    ``MEAN_RMSE_TOL``. Wall-clock timings are carried on the object but
    deliberately left out of :meth:`to_doc`, so result files stay
    reproducible byte for byte across re-runs.
    """

    train_timesteps: Tuple[float, ...]
    test_timesteps: Tuple[float, ...]
    rmse: Tuple[float, ...]
    mean_rmse: float
    k: int
    history_window: int
    per_iteration: tuple = None
    wall_clock: Mapping[str, float] = None
    config_echo: Mapping = None

    def __post_init__(self):
        for name in ("train_timesteps", "test_timesteps", "rmse"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.rmse:
            raise ValidationError("a simulation report needs at least one timestep")
        if len(self.train_timesteps) != len(self.rmse) or len(self.test_timesteps) != len(self.rmse):
            raise ValidationError("timestep lists and rmse list must align")
        if abs(self.mean_rmse - float(np.mean(self.rmse))) > MEAN_RMSE_TOL:
            raise ValidationError(
                f"mean_rmse {self.mean_rmse} disagrees with the per-timestep mean"
            )
        if self.per_iteration is not None:
            rows = tuple((str(s), float(v)) for s, v in self.per_iteration)
            object.__setattr__(self, "per_iteration", rows)
        if self.wall_clock is not None:
            object.__setattr__(
                self, "wall_clock", {str(s): float(v) for s, v in dict(self.wall_clock).items()}
            )

    def to_doc(self) -> dict:
        """JSON-ready dict, excluding wall-clock (see class docstring)."""
        doc = {
            "train_timesteps": list(self.train_timesteps),
            "test_timesteps": list(self.test_timesteps),
            "rmse": list(self.rmse),
            "mean_rmse": self.mean_rmse,
            "k": self.k,
            "history_window": self.history_window,
        }
        if self.per_iteration is not None:
            doc["per_iteration"] = [
                {"stage": s, "mean_rmse": v} for s, v in self.per_iteration
            ]
        if self.config_echo is not None:
            doc["config"] = dict(self.config_echo)
        return doc


def _paired_timesteps(train: ObservationSet, test: ObservationSet):
    if train.n == 0 or test.n == 0:
        raise ValidationError("simulation needs non-empty train and test splits")
    train_ts = np.unique(train.points[:, 2])
    test_ts = np.unique(test.points[:, 2])
    if len(train_ts) != len(test_ts):
        raise ValidationError(
            f"cannot pair timesteps rank by rank: {len(train_ts)} train vs "
            f"{len(test_ts)} test"
        )
    return train_ts, test_ts


def iter_sensing_rounds(model, train: ObservationSet, test: ObservationSet, k: int, history_window: int = 0):
    """Yield one :class:`SensingRound` per paired timestep.

    The model only enters through ``cov_matrix`` and ``globals.sigma_n``,
    so stationary and nonstationary fits run through the same code. No
    randomness: for a fixed model and data the rounds are deterministic.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    if history_window < 0:
        raise ValidationError("history_window must be non-negative")
    train_ts, test_ts = _paired_timesteps(train, test)
    noise_sd = model.globals.sigma_n
    history = []
    for i, (tt, qt) in enumerate(zip(train_ts, test_ts)):
        try:
            mask = train.points[:, 2] == tt
            cand_pts = train.points[mask]
            cand_vals = train.values[mask]
            if len(cand_pts) < k:
                raise ValidationError(
                    f"k={k} exceeds the {len(cand_pts)} candidates at t={tt}"
                )
            if history:
                hist_pts = np.vstack([h[0] for h in history])
                hist_vals = np.concatenate([h[1] for h in history])
            else:
                hist_pts = np.zeros((0, 3))
                hist_vals = np.zeros(0)
            problem = SelectionProblem(
                candidates=np.vstack([hist_pts, cand_pts]),
                kernel=model.cov_matrix,
                noise_sd=noise_sd,
                budget=k,
                preselected=tuple(range(len(hist_pts))),
            )
            chosen = np.asarray(greedy_mi_select(problem), dtype=int) - len(hist_pts)
            cond = ObservationSet(
                np.vstack([hist_pts, cand_pts[chosen]]),
                np.concatenate([hist_vals, cand_vals[chosen]]),
            )
            q_mask = test.points[:, 2] == qt
            mean, _ = posterior(cond, model.cov_matrix, noise_sd, test.points[q_mask])
            resid = mean - test.values[q_mask]
            rmse_std = float(np.sqrt(np.mean(resid * resid)))
            if history_window > 0:
                history.append((cand_pts[chosen], cand_vals[chosen]))
                history = history[-history_window:]
            yield SensingRound(i, float(tt), float(qt), cand_pts[chosen], cond, rmse_std)
        except Exception as exc:
            raise StageError(f"timestep-{i}", exc, None) from exc


def simulate_sensing(
    model,
    train: ObservationSet,
    test: ObservationSet,
    k: int,
    history_window: int = 0,
    standardizer: Standardizer = None,
) -> SimulationReport:
    """Run the full simulation and report RMSE per timestep.

    ``train`` and ``test`` must be in the units the model was fitted on;
    passing the fit's standardizer converts the reported RMSE back to
    original units (residuals only scale, so the mean shift drops out).
    """
    scale = 1.0 if standardizer is None else standardizer.sd
    train_t, test_t, rmse = [], [], []
    for round_ in iter_sensing_rounds(model, train, test, k, history_window):
        train_t.append(round_.train_t)
        test_t.append(round_.test_t)
        rmse.append(round_.rmse_std * scale)
    return SimulationReport(
        train_timesteps=tuple(train_t),
        test_timesteps=tuple(test_t),
        rmse=tuple(rmse),
        mean_rmse=float(np.mean(rmse)),
        k=k,
        history_window=history_window,
    )
