"""Feynman-Kac estimation of the partition function by chain sampling.

Independent oracle for the SDE route: the point-to-point partition values
satisfy

    Z_T(1, y) = E[ exp(b H_T - b^2 T / 2) ; omega(T) = y ],

where omega is the rate-1 symmetric Markov chain on {1, 2} started at 1
and H_T integrates the environment increments along the occupied site.
The environment is a fixed Gaussian grid (two independent sites, one
increment of variance dt_env per cell).  Averaging the exponential weight
over freshly sampled chains in a FIXED environment estimates that
environment's partition values, which can be compared against the SDE
engine driven by the same increments.

Hamiltonian evaluation is exact relative to the grid: within a constant
occupation interval the increments enter through linearly interpolated
prefix sums, and cells containing a jump are refined by Brownian-bridge
conditioning (sub-increments sampled conditionally on the cell total),
which makes H exact in law for the piecewise-constant path.  A cheaper
"midpoint" mode assigns whole cells to the site occupied at the cell
midpoint (O(dt_env) bias) and is kept as a fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

from .rng import DOMAIN_CHAIN_BATCH, DOMAIN_ENVIRONMENT, stream

if TYPE_CHECKING:  # pragma: no cover
    from .ensemble import ModelParams

__all__ = [
    "ChainPath",
    "EnvironmentGrid",
    "PartitionEstimate",
    "sample_chain",
    "hamiltonian",
    "estimate_partition",
]


@dataclass(frozen=True)
class ChainPath:
    """A chain trajectory on {1, 2}: start site plus sorted jump times."""

    start: int
    jump_times: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        if self.start not in (1, 2):
            raise ValueError(f"start must be 1 or 2, got {self.start}")
        jt = np.asarray(self.jump_times, dtype=float)
        if jt.ndim != 1 or (len(jt) and (np.diff(jt) <= 0).any()):
            raise ValueError("jump_times must be a strictly increasing 1-d array")
        if len(jt) and (jt[0] <= 0.0 or jt[-1] > self.horizon):
            raise ValueError("jump_times must lie in (0, horizon]")
        object.__setattr__(self, "jump_times", jt)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t: float) -> int:
        """Site occupied at time t (cadlag: the post-jump site at a jump time)."""
        flips = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.start if flips % 2 == 0 else 3 - self.start

    @property
    def terminal_state(self) -> int:
        return self.state_at(self.horizon)


@dataclass(frozen=True)
class EnvironmentGrid:
    """Discretized two-site environment: increments[site, cell] ~ N(0, dt_env).

    Reproducible from (master_seed, env_index); the chain batch used by
    estimate_partition derives its own stream from the same pair, so each
    environment gets fresh, independent chains.
    """

    dt_env: float
    horizon: float
    increments: np.ndarray
    master_seed: int
    env_index: int

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] != 2:
            raise ValueError(f"increments must have shape (2, n_cells), got {inc.shape}")
        n_cells = inc.shape[1]
        if abs(n_cells * self.dt_env - self.horizon) > 1e-9 * max(self.horizon, 1.0):
            raise ValueError(
                f"{n_cells} cells of dt_env={self.dt_env} do not cover horizon={self.horizon}"
            )
        object.__setattr__(self, "increments", inc)

    @classmethod
    def generate(
        cls, master_seed: int, env_index: int, dt_env: float, horizon: float
    ) -> "EnvironmentGrid":
        if dt_env <= 0.0 or horizon <= 0.0:
            raise ValueError("dt_env and horizon must be > 0")
        n_cells = round(horizon / dt_env)
        if n_cells < 1 or abs(n_cells * dt_env - horizon) > 1e-9 * max(horizon, 1.0):
            raise ValueError(f"horizon {horizon} is not an integer multiple of dt_env {dt_env}")
        rng = stream(master_seed, DOMAIN_ENVIRONMENT, env_index)
        inc = rng.standard_normal((2, n_cells)) * math.sqrt(dt_env)
        return cls(
            dt_env=dt_env,
            horizon=horizon,
            increments=inc,
            master_seed=master_seed,
            env_index=env_index,
        )

    @property
    def n_cells(self) -> int:
        return self.increments.shape[1]

    @cached_property
    def _prefix_diff(self) -> np.ndarray:
        """Prefix sums of increments[0] - increments[1], length n_cells + 1."""
        out = np.empty(self.n_cells + 1)
        out[0] = 0.0
        np.cumsum(self.increments[0] - self.increments[1], out=out[1:])
        return out

    @cached_property
    def _site2_total(self) -> float:
        return float(self.increments[1].sum())


@dataclass(frozen=True)
class PartitionEstimate:
    """Monte Carlo partition estimate for one environment.

    z_total is defined as z_to[0] + z_to[1], so the terminal-state
    decomposition holds exactly by construction.  degenerate flags a
    weight sample with zero spread at b > 0 (n_chains far too small to
    carry any information).
    """

    z_to: tuple[float, float]
    n_paths: int
    std_err: float
    degenerate: bool = False
    z_total: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "z_total", self.z_to[0] + self.z_to[1])
        if self.z_total <= 0.0:
            raise ValueError(f"partition estimate must be positive, got {self.z_to}")


def sample_chain(horizon: float, rng: np.random.Generator | int) -> ChainPath:
    """One chain on {1, 2} from site 1 with exponential(1) holding times."""
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    times = []
    t = rng.exponential(1.0)
    while t <= horizon:
        times.append(t)
        t += rng.exponential(1.0)
    return ChainPath(start=1, jump_times=np.array(times), horizon=horizon)


def _sample_jump_matrix(
    rng: np.random.Generator, n_chains: int, horizon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative jump-time matrix (n_chains, M) plus the J <= horizon mask.

    Column count is generous enough that topping off is rare; rows whose
    running total has not yet passed the horizon get extra columns until
    every row terminates.
    """
    cols = max(8, int(horizon + 10.0 * math.sqrt(horizon) + 10.0))
    J = rng.exponential(1.0, size=(n_chains, cols)).cumsum(axis=1)
    while J[:, -1].min() <= horizon:
        extra = rng.exponential(1.0, size=(n_chains, 8)).cumsum(axis=1)
        J = np.concatenate([J, extra + J[:, -1][:, None]], axis=1)
    return J, J <= horizon


def _alternating_sum(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row sums of values with signs +, -, +, ... over the masked entries."""
    signs = np.where(np.arange(values.shape[1]) % 2 == 0, 1.0, -1.0)
    return np.where(mask, values * signs, 0.0).sum(axis=1)


def _hbar_batch(
    J: np.ndarray, mask: np.ndarray, env: EnvironmentGrid
) -> tuple[np.ndarray, np.ndarray]:
    """Proportional-allocation Hamiltonians for all chains (start site 1).

    Writing D(t) for the linear interpolation of the prefix sums of
    (site1 - site2) increments, the integral along a piecewise-constant
    path telescopes to an alternating sum of D at the jump times:

        H = B2_total + sum_i (-1)^(i+1) D(t_i) + [K even] D(horizon).

    Returns (H, K) where K is the jump count per chain.
    """
    h = env.dt_env
    n_cells = env.n_cells
    PD = env._prefix_diff
    dD = env.increments[0] - env.increments[1]
    k = np.minimum((J / h).astype(np.int64), n_cells - 1)
    frac = J / h - k
    Dt = PD[k] + frac * dD[k]
    K = mask.sum(axis=1)
    H = env._site2_total + _alternating_sum(Dt, mask)
    H += np.where(K % 2 == 0, PD[n_cells], 0.0)
    return H, K


def _hmid_batch(
    J: np.ndarray, mask: np.ndarray, env: EnvironmentGrid
) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint-assignment Hamiltonians: whole cells follow the site
    occupied at the cell midpoint.  Same alternating structure as
    _hbar_batch but with D evaluated at snapped prefix indices."""
    h = env.dt_env
    n_cells = env.n_cells
    PD = env._prefix_diff
    # first cell whose midpoint is at or after the jump
    c = np.minimum(np.floor(J / h + 0.5).astype(np.int64), n_cells)
    Dc = PD[c]
    K = mask.sum(axis=1)
    H = env._site2_total + _alternating_sum(Dc, mask)
    H += np.where(K % 2 == 0, PD[n_cells], 0.0)
    return H, K


def _bridge_refine(
    rng: np.random.Generator, total: float, length: float, pieces: np.ndarray
) -> list[float]:
    """Split one Gaussian increment over sub-lengths by sequential
    Brownian-bridge conditioning."""
    out = []
    rem_total, rem_len = total, length
    for ell in pieces[:-1]:
        mean = ell / rem_len * rem_total
        sd = math.sqrt(ell * (rem_len - ell) / rem_len)
        d = mean + sd * rng.standard_normal()
        out.append(d)
        rem_total -= d
        rem_len -= ell
    out.append(rem_total)
    return out


def _bridge_corrections(
    J: np.ndarray,
    mask: np.ndarray,
    env: EnvironmentGrid,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-chain corrections turning proportional allocation into
    bridge-refined (exact in law) Hamiltonians.

    For a cell holding a single jump at offset u the correction is the
    difference of the two sites' bridge fluctuations, i.e. a centered
    Gaussian of variance 2 u (h - u) / h; those are drawn in one vectorized
    pass.  Cells containing several jumps (rare, O(dt_env) fraction of
    chains) are recomputed exactly with sequential bridge refinement of
    both sites.  Draw order is fixed (bulk first, then flagged rows in
    ascending index) so results are reproducible.
    """
    h = env.dt_env
    n_cells = env.n_cells
    k = np.minimum((J / h).astype(np.int64), n_cells - 1)
    u = J - k * h
    var1 = np.where(mask, 2.0 * u * (h - u) / h, 0.0)
    eta = rng.standard_normal(J.shape)
    corr = np.where(mask, eta * np.sqrt(var1), 0.0).sum(axis=1)

    dup = (k[:, 1:] == k[:, :-1]) & mask[:, 1:] & mask[:, :-1]
    for row in np.flatnonzero(dup.any(axis=1)):
        jumps_u = u[row][mask[row]]
        cells = k[row][mask[row]]
        total = 0.0
        i = 0
        while i < len(cells):
            jend = i
            while jend + 1 < len(cells) and cells[jend + 1] == cells[i]:
                jend += 1
            offs = jumps_u[i : jend + 1]
            if jend == i:
                total += rng.standard_normal() * math.sqrt(
                    2.0 * offs[0] * (h - offs[0]) / h
                )
            else:
                cell = cells[i]
                pieces = np.diff(np.concatenate([[0.0], offs, [h]]))
                refined = [
                    _bridge_refine(rng, env.increments[site, cell], h, pieces)
                    for site in (0, 1)
                ]
                site = 0 if i % 2 == 0 else 1  # site entering the cell
                exact = prop = 0.0
                for piece_idx, ell in enumerate(pieces):
                    exact += refined[site][piece_idx]
                    prop += ell / h * env.increments[site, cell]
                    site = 1 - site
                total += exact - prop
            i = jend + 1
        corr[row] = total
    return corr


def hamiltonian(
    path: ChainPath,
    env: EnvironmentGrid,
    rng: np.random.Generator | None = None,
    refine: str = "bridge",
) -> float:
    """Environment energy collected along one chain path.

    refine="bridge" (default) is exact in law and needs an rng whenever
    the path jumps; refine="midpoint" is deterministic given (path, env)
    with O(dt_env) bias.
    """
    if path.horizon > env.horizon + 1e-12:
        raise ValueError(
            f"path horizon {path.horizon} exceeds environment coverage {env.horizon}"
        )
    if path.start != 1:
        raise ValueError("environment pairing assumes chains started at site 1")
    m = max(1, path.n_jumps)
    J = np.full((1, m), env.horizon * 2.0)
    J[0, : path.n_jumps] = path.jump_times
    mask = J <= env.horizon
    if refine == "midpoint":
        return float(_hmid_batch(J, mask, env)[0][0])
    if refine != "bridge":
        raise ValueError(f"unknown refine mode {refine!r}")
    H, _ = _hbar_batch(J, mask, env)
    if path.n_jumps:
        if rng is None:
            raise ValueError("bridge refinement of a jumping path needs an rng")
        H = H + _bridge_corrections(J, mask, env, rng)
    return float(H[0])


def estimate_partition(
    params: "ModelParams",
    n_chains: int,
    env: EnvironmentGrid,
    refine: str = "bridge",
) -> PartitionEstimate:
    """Monte Carlo partition estimate over n_chains fresh chains.

    Chains come from the stream (env.master_seed, DOMAIN_CHAIN_BATCH,
    env.env_index): resampled per environment, never reused across
    environments.  Weight accumulation uses numpy's pairwise summation in
    a fixed order, so the estimate is reproducible and order-robust.
    """
    if n_chains < 2:
        raise ValueError(f"need at least 2 chains, got {n_chains}")
    if abs(params.horizon - env.horizon) > 1e-9 * max(env.horizon, 1.0):
        raise ValueError(
            f"params.horizon={params.horizon} does not match environment "
            f"horizon={env.horizon}"
        )
    beta = params.beta.value
    T = env.horizon
    rng = stream(env.master_seed, DOMAIN_CHAIN_BATCH, env.env_index)
    J, mask = _sample_jump_matrix(rng, n_chains, T)
    if refine == "bridge":
        H, K = _hbar_batch(J, mask, env)
        H = H + _bridge_corrections(J, mask, env, rng)
    elif refine == "midpoint":
        H, K = _hmid_batch(J, mask, env)
    else:
        raise ValueError(f"unknown refine mode {refine!r}")
    w = np.exp(beta * H - 0.5 * beta * beta * T)
    ends_at_2 = K % 2 == 1
    z1 = float(np.sum(w[~ends_at_2])) / n_chains
    z2 = float(np.sum(w[ends_at_2])) / n_chains
    spread = float(np.ptp(w))
    std_err = float(np.std(w, ddof=1)) / math.sqrt(n_chains)
    return PartitionEstimate(
        z_to=(z1, z2),
        n_paths=n_chains,
        std_err=std_err,
        degenerate=bool(beta > 0.0 and spread == 0.0),
    )
