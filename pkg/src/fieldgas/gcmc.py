"""Grand-canonical Metropolis sampling of interacting charge gases.

The chain targets the finite-volume Gibbs measure with weight
z^n / n! * exp(-beta * U_Lambda(eta)) over marked configurations in a box,
where U_Lambda integrates an energy density of the superposed field over
the box.  Energies are tracked incrementally:

* pointwise densities use a fixed Gauss panel mesh, so a move only touches
  the nodes inside the particle's truncation ball;
* the renormalized quadratic density reduces to pair sums over Phi = G*G;
* hard cores skip energy bookkeeping entirely and auto-reject overlaps.

Estimators (correlation functional by Widom insertion, characteristic
functional by free-sample reweighting, moments of the interacting noise)
report batch-means errors and effective sample sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import (
    ChargeDistribution,
    MarkedConfiguration,
    Region,
    sample_free,
)
from .kernels import Kernel, KernelSpec, get_kernel, pair_potential_object
from .potentials import EnergyDensity, min_enclosing_radius, stability_bound
from .quadrature import NodeMesh
from .streams import stream

_MOVES = ("birth", "death", "displace")
_POINTWISE = ("trigonometric", "threshold", "lipschitz_custom")


@dataclass(frozen=True)
class GcmcParams:
    """Target measure and chain tuning for one grand-canonical run."""

    z: float
    beta: float
    region: Region
    kernel: KernelSpec
    density: EnergyDensity
    r: ChargeDistribution
    move_weights: tuple = (0.35, 0.35, 0.30)
    displacement_scale: float | None = None
    seed: int = 0
    burn_in: int = 2000
    thinning: int = 10
    mesh_cell: float | None = None
    resync_every: int = 10_000
    drift_tol: float = 1e-8

    def __post_init__(self):
        if self.z <= 0.0:
            raise ValueError("activity z must be positive")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        w = np.asarray(self.move_weights, dtype=float)
        if w.shape != (3,) or np.any(w <= 0.0):
            raise ValueError("need three positive move weights")
        object.__setattr__(self, "move_weights", tuple(w / w.sum()))
        if self.burn_in < 0 or self.thinning < 1 or self.resync_every < 1:
            raise ValueError("bad chain schedule")
        if self.displacement_scale is not None and self.displacement_scale <= 0:
            raise ValueError("displacement scale must be positive")

    @property
    def step_scale(self) -> float:
        if self.displacement_scale is not None:
            return self.displacement_scale
        return 0.25 * float(np.min(self.region.sides))


@dataclass(frozen=True)
class EstimatorResult:
    """Monte Carlo estimate with batch-means error bars."""

    mean: complex | float
    stderr: complex | float
    ess: float
    count: int
    flags: dict = field(default_factory=dict)


def batch_stats(values, n_batches: int = 32):
    """Mean, batch-means standard error, and effective sample size.

    Complex inputs get component-wise errors (stored as a complex number).
    """
    vals = np.asarray(values)
    n = len(vals)
    nb = min(n_batches, n)
    if nb < 16:
        raise ValueError("need at least 16 samples for batch-means errors")
    cut = n - n % nb
    batches = vals[:cut].reshape(nb, -1).mean(axis=1)
    mean = vals[:cut].mean()
    if np.iscomplexobj(vals):
        se = (batches.real.std(ddof=1) + 1j * batches.imag.std(ddof=1)) / math.sqrt(nb)
        var = vals[:cut].real.var(ddof=1) + vals[:cut].imag.var(ddof=1)
        se_sq = abs(se.real) ** 2 + abs(se.imag) ** 2
    else:
        se = batches.std(ddof=1) / math.sqrt(nb)
        var = vals[:cut].var(ddof=1)
        se_sq = se * se
    ess = cut if se_sq == 0.0 else min(float(cut), var / se_sq)
    return mean, se, ess, cut


# ---------------------------------------------------------------------------
# incremental energy backends
# ---------------------------------------------------------------------------


class _MeshEnergy:
    """Cutoff potential on a fixed Gauss panel mesh with a cached field."""

    def __init__(self, params: GcmcParams, ker: Kernel):
        self.ker = ker
        self.density = params.density
        cell = params.mesh_cell if params.mesh_cell is not None else ker.scale / 4.0
        self.mesh = NodeMesh(params.region.lo, params.region.hi, cell)
        self.trunc = ker.truncation_radius
        self.shifts = params.region.image_shifts(self.trunc)
        self.field = np.zeros(self.mesh.size)
        self.U = self.mesh.integrate(self.density(self.field))

    def particle_delta(self, pos, charge):
        """Sparse node-field contribution (indices, values) of one particle."""
        chunks = []
        for shift in self.shifts:
            center = np.asarray(pos, dtype=float) + shift
            idx = self.mesh.within(center, self.trunc)
            if idx.size:
                rho = np.linalg.norm(self.mesh.nodes[idx] - center, axis=1)
                chunks.append((idx, charge * self.ker(rho)))
        if not chunks:
            return np.empty(0, dtype=np.intp), np.empty(0)
        if len(chunks) == 1:
            return chunks[0]
        idx = np.concatenate([c[0] for c in chunks])
        val = np.concatenate([c[1] for c in chunks])
        uidx, inverse = np.unique(idx, return_inverse=True)
        uval = np.zeros(len(uidx))
        np.add.at(uval, inverse, val)
        return uidx, uval

    def _du(self, idx, dval) -> float:
        if idx.size == 0:
            return 0.0
        f = self.field[idx]
        w = self.mesh.weights[idx]
        return float(np.dot(w, self.density(f + dval) - self.density(f)))

    def propose_add(self, pos, charge, state):
        idx, val = self.particle_delta(pos, charge)
        du = self._du(idx, val)
        return du, (idx, val, du)

    def propose_remove(self, i, state):
        idx, val = self.particle_delta(state.positions[i], -state.charges[i])
        du = self._du(idx, val)
        return du, (idx, val, du)

    def propose_move(self, i, new_pos, state):
        i0, v0 = self.particle_delta(state.positions[i], -state.charges[i])
        i1, v1 = self.particle_delta(new_pos, state.charges[i])
        idx = np.concatenate([i0, i1])
        val = np.concatenate([v0, v1])
        uidx, inverse = np.unique(idx, return_inverse=True)
        uval = np.zeros(len(uidx))
        np.add.at(uval, inverse, val)
        du = self._du(uidx, uval)
        return du, (uidx, uval, du)

    def commit(self, token):
        idx, val, du = token
        self.field[idx] += val
        self.U += du

    def field_of(self, positions, charges) -> np.ndarray:
        out = np.zeros(self.mesh.size)
        for pos, s in zip(positions, charges):
            idx, val = self.particle_delta(pos, s)
            out[idx] += val
        return out

    def energy_of(self, positions, charges) -> float:
        return self.mesh.integrate(self.density(self.field_of(positions, charges)))

    def resync(self, state) -> float:
        fresh_field = self.field_of(state.positions, state.charges)
        fresh_u = self.mesh.integrate(self.density(fresh_field))
        drift = abs(fresh_u - self.U)
        self.field = fresh_field
        self.U = fresh_u
        return drift


class _PairEnergy:
    """Pair-sum potential for the renormalized quadratic density."""

    def __init__(self, params: GcmcParams):
        if params.region.periodic:
            raise ValueError("pair-sum sampling supports open regions only")
        self.phi = pair_potential_object(params.kernel)
        self.U = 0.0

    def _interaction(self, pos, charge, state, skip: int | None = None) -> float:
        n = len(state.positions)
        if n == 0:
            return 0.0
        d = np.linalg.norm(state.positions - np.asarray(pos), axis=1)
        s = state.charges
        if skip is not None:
            keep = np.arange(n) != skip
            d, s = d[keep], s[keep]
        if d.size == 0:
            return 0.0
        return 2.0 * charge * float(np.dot(s, self.phi(d)))

    def propose_add(self, pos, charge, state):
        du = self._interaction(pos, charge, state)
        return du, du

    def propose_remove(self, i, state):
        du = -self._interaction(state.positions[i], state.charges[i], state, skip=i)
        return du, du

    def propose_move(self, i, new_pos, state):
        s = state.charges[i]
        du = (self._interaction(new_pos, s, state, skip=i)
              - self._interaction(state.positions[i], s, state, skip=i))
        return du, du

    def commit(self, token):
        self.U += token

    def resync(self, state) -> float:
        n = len(state.positions)
        fresh = 0.0
        for i in range(n):
            fresh += self._interaction(
                state.positions[i], state.charges[i], state, skip=i
            )
        fresh *= 0.5
        drift = abs(fresh - self.U)
        self.U = fresh
        return drift


class _HardCoreEnergy:
    """Overlap bookkeeping: energies are 0, forbidden moves are +infinity."""

    def __init__(self, params: GcmcParams):
        spec = params.kernel
        if spec.variant != "indicator_ball":
            raise ValueError("hard-core sampling needs an indicator-ball kernel")
        if not np.all(params.r.values == 1.0):
            raise ValueError("hard-core sampling needs unit charges")
        self.radius = spec.radius
        self.order = params.density.order
        self.shifts = params.region.image_shifts(2.0 * spec.radius)
        self.U = 0.0

    def _violates(self, pos, state, skip: int | None = None) -> bool:
        n = len(state.positions)
        if n == 0:
            return False
        keep = np.arange(n) != skip if skip is not None else slice(None)
        others = state.positions[keep]
        if others.shape[0] == 0:
            return False
        dmin = np.full(others.shape[0], np.inf)
        for shift in self.shifts:
            d = np.linalg.norm(others + shift - np.asarray(pos), axis=1)
            dmin = np.minimum(dmin, d)
        close = others[dmin < 2.0 * self.radius]
        if self.order == 2:
            return close.shape[0] > 0
        if close.shape[0] < self.order - 1:
            return False
        for combo in itertools.combinations(range(close.shape[0]), self.order - 1):
            cluster = np.vstack([close[list(combo)], np.asarray(pos)[None, :]])
            if min_enclosing_radius(cluster) < self.radius:
                return True
        return False

    def propose_add(self, pos, charge, state):
        du = math.inf if self._violates(pos, state) else 0.0
        return du, None

    def propose_remove(self, i, state):
        return 0.0, None

    def propose_move(self, i, new_pos, state):
        du = math.inf if self._violates(new_pos, state, skip=i) else 0.0
        return du, None

    def commit(self, token):
        pass

    def resync(self, state) -> float:
        for i in range(len(state.positions)):
            if self._violates(state.positions[i], state, skip=i):
                raise RuntimeError("hard-core invariant broken: overlap in chain")
        return 0.0


def _make_backend(params: GcmcParams, ker: Kernel):
    if params.beta == 0.0:
        return None
    v = params.density.variant
    if v == "hard_core":
        return _HardCoreEnergy(params)
    if v == "quadratic_renormalized":
        return _PairEnergy(params)
    return _MeshEnergy(params, ker)


# ---------------------------------------------------------------------------
# the chain
# ---------------------------------------------------------------------------


class ChainState:
    """Mutable sampler state: particle arrays, cached energy, rng stream."""

    __slots__ = ("positions", "charges", "backend", "rng", "steps",
                 "proposed", "accepted", "max_drift", "last_move")

    def __init__(self, dim: int, backend, rng):
        self.positions = np.empty((0, dim))
        self.charges = np.empty(0)
        self.backend = backend
        self.rng = rng
        self.steps = 0
        self.proposed = {m: 0 for m in _MOVES}
        self.accepted = {m: 0 for m in _MOVES}
        self.max_drift = 0.0
        self.last_move = None

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def energy(self) -> float:
        return self.backend.U if self.backend is not None else 0.0

    def snapshot(self) -> MarkedConfiguration:
        return MarkedConfiguration(
            self.positions.copy(), self.charges.copy(), self.positions.shape[1]
        )

    def _add(self, pos, s):
        self.positions = np.vstack([self.positions, np.asarray(pos)[None, :]])
        self.charges = np.append(self.charges, s)

    def _remove(self, i):
        self.positions = np.delete(self.positions, i, axis=0)
        self.charges = np.delete(self.charges, i)

    def _move(self, i, pos):
        self.positions = self.positions.copy()
        self.positions[i] = pos


def init_chain(params: GcmcParams) -> ChainState:
    ker = get_kernel(params.kernel)
    if params.beta > 0.0 and params.density.variant in _POINTWISE:
        if not math.isfinite(params.density.sup + params.density.growth_b):
            raise ValueError("sampling needs a bounded or Lipschitz density")
    backend = _make_backend(params, ker)
    return ChainState(params.region.dim, backend, stream(params.seed, 0))


def _boltzmann(beta: float, du: float) -> float:
    if du == math.inf:
        return 0.0
    if beta == 0.0:
        return 1.0
    return math.exp(min(-beta * du, 700.0))


def step(state: ChainState, params: GcmcParams) -> ChainState:
    """Advance the chain by one proposal (birth, death, or displacement)."""
    rng = state.rng
    w_birth, w_death, _ = params.move_weights
    u = rng.random()
    kind = "birth" if u < w_birth else ("death" if u < w_birth + w_death else
                                        "displace")
    n = len(state)
    zvol = params.z * params.region.volume
    accepted = False

    if kind == "birth":
        pos = params.region.sample_uniform(rng, 1)[0]
        s = float(params.r.sample(rng, 1)[0])
        du, token = (state.backend.propose_add(pos, s, state)
                     if state.backend is not None else (0.0, None))
        ratio = zvol / (n + 1) * _boltzmann(params.beta, du)
        if rng.random() < min(1.0, ratio):
            state._add(pos, s)
            if state.backend is not None:
                state.backend.commit(token)
            accepted = True
    elif kind == "death":
        if n > 0:
            i = int(rng.integers(n))
            du, token = (state.backend.propose_remove(i, state)
                         if state.backend is not None else (0.0, None))
            ratio = n / zvol * _boltzmann(params.beta, du)
            if rng.random() < min(1.0, ratio):
                state._remove(i)
                if state.backend is not None:
                    state.backend.commit(token)
                accepted = True
    else:
        if n > 0:
            i = int(rng.integers(n))
            shifted = state.positions[i] + params.step_scale * rng.normal(
                size=params.region.dim
            )
            if params.region.periodic:
                lo = np.asarray(params.region.lo)
                shifted = lo + np.mod(shifted - lo, params.region.sides)
                inside = True
            else:
                inside = bool(params.region.contains(shifted[None, :])[0])
            if inside:
                du, token = (state.backend.propose_move(i, shifted, state)
                             if state.backend is not None else (0.0, None))
                if rng.random() < _boltzmann(params.beta, du):
                    state._move(i, shifted)
                    if state.backend is not None:
                        state.backend.commit(token)
                    accepted = True

    state.proposed[kind] += 1
    state.accepted[kind] += accepted
    state.steps += 1
    state.last_move = (kind, n, accepted)

    if state.backend is not None and state.steps % params.resync_every == 0:
        drift = state.backend.resync(state)
        state.max_drift = max(state.max_drift, drift)
        if drift > params.drift_tol:
            raise RuntimeError(
                f"energy cache drifted by {drift:.3e} "
                f"(tolerance {params.drift_tol:.1e})"
            )
    return state


def sample_stream(params: GcmcParams, n_samples: int):
    """Yield the live chain state at each retained (burned-in, thinned) step."""
    state = init_chain(params)
    for _ in range(params.burn_in):
        step(state, params)
    for _ in range(n_samples):
        for _ in range(params.thinning):
            step(state, params)
        yield state


def configuration_energy(params: GcmcParams, config: MarkedConfiguration) -> float:
    """Recompute the target energy of one configuration from scratch."""
    v = params.density.variant
    if v == "hard_core":
        helper = _HardCoreEnergy.__new__(_HardCoreEnergy)
        helper.radius = params.kernel.radius
        helper.order = params.density.order
        helper.shifts = params.region.image_shifts(2.0 * params.kernel.radius)
        for i in range(len(config)):
            if helper._violates(config.positions[i], config, skip=i):
                return math.inf
        return 0.0
    if v == "quadratic_renormalized":
        from .potentials import quadratic_renormalized_U

        return quadratic_renormalized_U(config, params.kernel).value
    helper = _MeshEnergy(params, get_kernel(params.kernel))
    return helper.energy_of(config.positions, config.charges)


def run(params: GcmcParams, n_samples: int):
    """Collect thinned configuration snapshots plus a run summary.

    The summary always reports the mean energy of the retained samples; at
    beta = 0 (free chain, no cached energy) it is recomputed per snapshot.
    """
    samples = []
    counts = []
    energies = []
    state = None
    free_probe = None
    for state in sample_stream(params, n_samples):
        snap = state.snapshot()
        samples.append(snap)
        counts.append(len(state))
        if state.backend is not None:
            energies.append(state.energy)
        else:
            if free_probe is None:
                v = params.density.variant
                if v in _POINTWISE:
                    free_probe = _MeshEnergy(params, get_kernel(params.kernel))
            if free_probe is not None:
                energies.append(
                    free_probe.energy_of(snap.positions, snap.charges)
                )
            else:
                energies.append(configuration_energy(params, snap))
    acceptance = {
        m: (state.accepted[m] / state.proposed[m] if state.proposed[m] else 0.0)
        for m in _MOVES
    }
    summary = {
        "seed": params.seed,
        "steps": state.steps,
        "mean_count": float(np.mean(counts)) if counts else 0.0,
        "mean_energy": float(np.mean(energies)) if energies else 0.0,
        "acceptance": acceptance,
        "max_drift": state.max_drift,
    }
    return samples, summary


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _require_lipschitz(params: GcmcParams):
    if params.density.variant not in _POINTWISE or not math.isfinite(
        params.density.growth_b
    ):
        raise ValueError("this estimator needs a Lipschitz pointwise density")


def estimate_rho(eta: MarkedConfiguration, params: GcmcParams,
                 budget: int = 2000) -> EstimatorResult:
    """Correlation functional rho(eta) by Widom insertion.

    rho(eta) = exp(-beta U(eta)) * <exp(-beta W(eta, sample))> over Gibbs
    samples, which equals E[exp(-beta U(eta+F))]/Xi.  The result flags
    whether the estimate respects the uniform bound exp(beta*B*#eta).
    """
    if len(eta) and not np.all(params.region.contains(eta.positions)):
        raise ValueError("the probe configuration must live inside the region")
    B = stability_bound(params.density, params.kernel, params.r)
    bound = math.exp(params.beta * B * len(eta))
    if params.beta == 0.0:
        return EstimatorResult(1.0, 0.0, float(budget), budget,
                               {"ruelle_ok": True, "ruelle_bound": bound})
    _require_lipschitz(params)
    ker = get_kernel(params.kernel)
    helper = _MeshEnergy(params, ker)
    f_eta = helper.field_of(eta.positions, eta.charges)
    u_eta = helper.mesh.integrate(helper.density(f_eta))
    vals = np.empty(budget)
    for k, state in enumerate(sample_stream(params, budget)):
        backend = state.backend
        mixed = backend.mesh.integrate(backend.density(f_eta + backend.field))
        w_mutual = mixed - backend.U - u_eta
        vals[k] = math.exp(-params.beta * w_mutual)
    mean, se, ess, cut = batch_stats(vals)
    scale = math.exp(-params.beta * u_eta)
    est = scale * mean
    stderr = scale * se
    flags = {
        "ruelle_ok": bool(abs(est) <= bound + 3.0 * stderr),
        "ruelle_bound": bound,
    }
    return EstimatorResult(est, stderr, ess, cut, flags)


def estimate_char_functional(probe: MarkedConfiguration, params: GcmcParams,
                             budget: int = 10_000) -> EstimatorResult:
    """Characteristic functional of the interacting noise at a probe.

    Ratio estimator over independent free samples gamma:
    mean(e^{i X_gamma(probe)} w) / mean(w) with w = exp(-beta U(gamma)).
    The probe's charges are the Fourier coefficients alpha_j.
    """
    if params.beta > 0.0:
        _require_lipschitz(params)
    rng = stream(params.seed, 7)
    ker = get_kernel(params.kernel)
    helper = (_MeshEnergy(params, ker) if params.beta > 0.0 else None)
    shifts = params.region.image_shifts(ker.truncation_radius)
    phases = np.empty(budget, dtype=complex)
    weights = np.empty(budget)
    for k in range(budget):
        g = sample_free(params.region, params.z, params.r, rng)
        x_eta = 0.0
        if len(g) and len(probe):
            for shift in shifts:
                diff = probe.positions[:, None, :] - (g.positions + shift)[None, :, :]
                rho = np.sqrt(np.sum(diff * diff, axis=2))
                x_eta += float(probe.charges @ ker(rho.ravel()).reshape(rho.shape)
                               @ g.charges)
        phases[k] = complex(math.cos(x_eta), math.sin(x_eta))
        if helper is None:
            weights[k] = 1.0
        else:
            weights[k] = math.exp(
                -params.beta
                * helper.mesh.integrate(
                    helper.density(helper.field_of(g.positions, g.charges))
                )
            )
    nb = 32
    cut = budget - budget % nb
    num = (phases[:cut] * weights[:cut]).reshape(nb, -1).mean(axis=1)
    den = weights[:cut].reshape(nb, -1).mean(axis=1)
    ratios = num / den
    mean = complex(num.mean() / den.mean())
    se = (ratios.real.std(ddof=1) + 1j * ratios.imag.std(ddof=1)) / math.sqrt(nb)
    wsum = weights[:cut].sum()
    ess = float(wsum * wsum / np.dot(weights[:cut], weights[:cut]))
    flags = {"low_ess": bool(ess < 0.05 * cut)}
    return EstimatorResult(mean, se, ess, cut, flags)


def estimate_moments(profiles, params: GcmcParams,
                     budget: int = 2000) -> list:
    """Estimates of E[prod_{j<=m} <F, f_j>] for every prefix m of the profiles.

    <F, f> = sum_l s_l f(y_l) pairs the marked configuration with a profile.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    n_prof = len(profiles)
    prods = np.empty((budget, n_prof))
    for k, state in enumerate(sample_stream(params, budget)):
        acc = 1.0
        for j, f in enumerate(profiles):
            if len(state):
                pairing = float(np.dot(state.charges, f(state.positions)))
            else:
                pairing = 0.0
            acc *= pairing
            prods[k, j] = acc
    out = []
    for j in range(n_prof):
        mean, se, ess, cut = batch_stats(prods[:, j])
        out.append(EstimatorResult(mean, se, ess, cut, {}))
    return out
