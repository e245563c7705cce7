"""Ground-truth scenarios, samplers, exact coefficients and Monte Carlo risk.

Truths are either finite mixtures of tensor products of univariate laws
(Beta on an interval, uniform on an interval) or mixtures of bivariate
Archimedean copulas (Frank, Clayton). Both expose exact rectangle masses
through their joint distribution function, which gives exact Haar
coefficients.

Archimedean formulas used (theta > 0):

* Frank CDF ``-log(1 + (e^{-t u} - 1)(e^{-t v} - 1)/(e^{-t} - 1)) / t``,
  density ``t (1 - e^{-t}) e^{-t(u+v)} / ((1 - e^{-t}) - (1 - e^{-t u})(1 - e^{-t v}))**2``,
  sampled by inverting the conditional law of ``v`` given ``u``.
* Clayton CDF ``(u^{-t} + v^{-t} - 1)^{-1/t}``,
  density ``(1 + t)(u v)^{-t-1}(u^{-t} + v^{-t} - 1)^{-2-1/t}``,
  sampled with a Gamma(1/t) frailty.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from .frameworks import (
    CoefficientTable,
    FrameworkData,
    default_max_level,
    empirical_coefficients,
    ingest,
    sup_norm_proxy,
)
from .hyperbolic import Domain, layout_for
from .pyramid_models import PyramidModel, SparsitySchedule
from .selection import PenaltyConfig, select_pyramid, select_within
from .uniwavelet import HaarBasis, UnivariateBasis


def make_rng(seed) -> np.random.Generator:
    """Philox counter-based generator; ``seed`` may be an int, a sequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# --- univariate factors -----------------------------------------------------


@dataclass(frozen=True)
class BetaFactor:
    """Beta(a, b) law shifted and rescaled to ``[lo, hi]``."""

    lo: float
    hi: float
    a: float
    b: float

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        w = self.hi - self.lo
        t = (x - self.lo) / w
        inside = (t >= 0) & (t <= 1)
        tt = np.where(inside, t, 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (self.a - 1) * np.log(tt) + (self.b - 1) * np.log1p(-tt) - special.betaln(self.a, self.b)
            return np.where(inside, np.exp(logp), 0.0) / w

    def cdf(self, x):
        t = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return special.betainc(self.a, self.b, np.clip(t, 0.0, 1.0))

    def sample(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.beta(self.a, self.b, size=n)

    @property
    def breakpoints(self):
        return (self.lo, self.hi)

    def to_json(self):
        return {"law": "beta", "interval": [self.lo, self.hi], "a": self.a, "b": self.b}


@dataclass(frozen=True)
class UniformFactor:
    lo: float
    hi: float

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=n)

    @property
    def breakpoints(self):
        return (self.lo, self.hi)

    def to_json(self):
        return {"law": "uniform", "interval": [self.lo, self.hi]}


def _factor_from_json(obj):
    lo, hi = obj["interval"]
    if obj["law"] == "beta":
        return BetaFactor(lo, hi, obj["a"], obj["b"])
    if obj["law"] == "uniform":
        return UniformFactor(lo, hi)
    raise ValueError(f"unknown univariate law {obj['law']!r}")


# --- truths -----------------------------------------------------------------


@dataclass(frozen=True)
class TensorMixture:
    """``mass * sum_c weight_c prod_i law_{c,i}(x_i)``."""

    weights: tuple
    components: tuple
    mass: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if len(self.components) != len(self.weights):
            raise ValueError("one component per weight")
        if len({len(c) for c in self.components}) != 1:
            raise ValueError("components must share the dimension")

    @property
    def dim(self) -> int:
        return len(self.components[0])

    def pdf(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for w, comp in zip(self.weights, self.components):
            val = np.full(pts.shape[0], w)
            for i, f in enumerate(comp):
                val *= f.pdf(pts[:, i])
            out += val
        return self.mass * out

    def cell_masses(self, edges: Sequence[np.ndarray]) -> np.ndarray:
        out = 0.0
        for w, comp in zip(self.weights, self.components):
            term = np.array(w)
            for f, e in zip(comp, edges):
                term = np.multiply.outer(term, np.diff(f.cdf(e)))
            out = out + term
        return self.mass * out

    def sample(self, rng, n) -> np.ndarray:
        """Draws from the normalized law (component, then coordinates)."""
        labels = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights, dtype=float))
        out = np.empty((n, self.dim))
        for c, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == c)
            for i, f in enumerate(comp):
                out[idx, i] = f.sample(rng, idx.size)
        return out

    def envelope(self, domain: Domain) -> float:
        """Exact sup of the density over Q when every factor is uniform."""
        if not all(isinstance(f, UniformFactor) for comp in self.components for f in comp):
            raise NotImplementedError("exact envelope only for piecewise-constant mixtures")
        mids = []
        for i in range(self.dim):
            bps = {domain.lower[i], domain.upper[i]}
            for comp in self.components:
                bps.update(comp[i].breakpoints)
            bps = np.array(sorted(b for b in bps if domain.lower[i] <= b <= domain.upper[i]))
            mids.append((bps[:-1] + bps[1:]) / 2)
        grid = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.max(self.pdf(grid)))

    def l2_norm_sq(self, domain: Domain) -> float:
        """``int_Q s**2`` by one-dimensional adaptive quadrature per factor pair."""
        total = 0.0
        for wa, ca in zip(self.weights, self.components):
            for wb, cb in zip(self.weights, self.components):
                term = wa * wb
                for i, (fa, fb) in enumerate(zip(ca, cb)):
                    lo, hi = domain.lower[i], domain.upper[i]
                    pts = sorted({p for p in fa.breakpoints + fb.breakpoints if lo < p < hi})
                    val, _ = integrate.quad(lambda x: float(fa.pdf(x) * fb.pdf(x)), lo, hi,
                                            points=pts or None, limit=200, epsabs=1e-13, epsrel=1e-12)
                    term *= val
                total += term
        return self.mass**2 * total

    def to_json(self):
        return {
            "type": "tensor_mixture",
            "mass": self.mass,
            "weights": list(self.weights),
            "components": [[f.to_json() for f in comp] for comp in self.components],
        }


def frank_cdf(u, v, theta):
    num = np.expm1(-theta * u) * np.expm1(-theta * v)
    return -np.log1p(num / np.expm1(-theta)) / theta


def frank_pdf(u, v, theta):
    g = -np.expm1(-theta)
    den = g - (-np.expm1(-theta * u)) * (-np.expm1(-theta * v))
    return theta * g * np.exp(-theta * (u + v)) / den**2


def clayton_cdf(u, v, theta):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        s = u**-theta + v**-theta - 1.0
        out = s ** (-1.0 / theta)
    return np.where((u <= 0) | (v <= 0), 0.0, out)


def clayton_pdf(u, v, theta):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = u**-theta + v**-theta - 1.0
        out = (1 + theta) * (u * v) ** (-theta - 1) * s ** (-2 - 1 / theta)
    return np.where((u <= 0) | (v <= 0), 0.0, out)


_FAMILIES = {
    "frank": (frank_cdf, frank_pdf),
    "clayton": (clayton_cdf, clayton_pdf),
}


@dataclass(frozen=True)
class CopulaMixture:
    """Mixture of bivariate Archimedean copulas, ``(weight, family, theta)`` triples."""

    weights: tuple
    families: tuple
    thetas: tuple
    mass: float = 1.0

    dim = 2

    def __post_init__(self):
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-12) or min(self.weights) < 0:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        for fam, th in zip(self.families, self.thetas):
            if fam not in _FAMILIES:
                raise ValueError(f"unknown copula family {fam!r}")
            if th <= 0:
                raise ValueError("copula parameters must be positive")

    def pdf(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for w, fam, th in zip(self.weights, self.families, self.thetas):
            out += w * _FAMILIES[fam][1](pts[:, 0], pts[:, 1], th)
        return out

    def cdf_grid(self, eu, ev):
        U, V = np.meshgrid(eu, ev, indexing="ij")
        out = np.zeros(U.shape)
        for w, fam, th in zip(self.weights, self.families, self.thetas):
            out += w * _FAMILIES[fam][0](U, V, th)
        return out

    def cell_masses(self, edges):
        eu, ev = (np.clip(np.asarray(e, dtype=float), 0.0, 1.0) for e in edges)
        grid = self.cdf_grid(eu, ev)
        return self.mass * np.diff(np.diff(grid, axis=0), axis=1)

    def sample(self, rng, n):
        labels = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights, dtype=float))
        out = np.empty((n, 2))
        for c, (fam, th) in enumerate(zip(self.families, self.thetas)):
            idx = np.flatnonzero(labels == c)
            out[idx] = sample_frank(rng, idx.size, th) if fam == "frank" else sample_clayton(rng, idx.size, th, 2)
        return out

    def to_json(self):
        return {"type": "copula_mixture", "weights": list(self.weights), "families": list(self.families),
                "thetas": list(self.thetas)}


def sample_frank(rng, n, theta):
    u = rng.random(n)
    w = rng.random(n)
    v = -np.log1p(w * np.expm1(-theta) / (w + (1 - w) * np.exp(-theta * u))) / theta
    return np.column_stack([u, np.clip(v, 0.0, 1.0)])


def sample_clayton(rng, n, theta, d=2):
    frailty = rng.gamma(1.0 / theta, 1.0, size=n)
    e = rng.exponential(size=(n, d))
    return (1.0 + e / frailty[:, None]) ** (-1.0 / theta)


def truth_from_json(obj):
    if obj["type"] == "tensor_mixture":
        comps = tuple(tuple(_factor_from_json(f) for f in comp) for comp in obj["components"])
        return TensorMixture(tuple(obj["weights"]), comps, obj.get("mass", 1.0))
    if obj["type"] == "copula_mixture":
        return CopulaMixture(tuple(obj["weights"]), tuple(obj["families"]), tuple(obj["thetas"]))
    raise ValueError(f"unknown truth type {obj['type']!r}")


# --- scenarios --------------------------------------------------------------

Truth = Union[TensorMixture, CopulaMixture]


@dataclass(frozen=True)
class Scenario:
    """A target intensity with its framework.

    ``truth`` is the target ``s`` itself except for ``poisson``, where it is
    the shape density ``g`` on Q: a sample of size ``n`` is a Poisson
    process with mean measure ``n g(x) dx``, so the target is
    ``s = n g / Vol(Q)``. For the Levy kinds ``truth`` is the jump-size
    law times the jump rate, i.e. the Levy density, and ``delta`` is the
    sampling step of the discrete kind.
    """

    name: str
    kind: str
    truth: Truth
    domain: Domain
    delta: Optional[float] = None
    description: str = ""

    @property
    def dim(self) -> int:
        return self.domain.dim

    def target_scale(self, n: float) -> float:
        return n / self.domain.volume if self.kind == "poisson" else 1.0

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "domain": self.domain.to_json(),
               "truth": self.truth.to_json(), "description": self.description}
        if self.delta is not None:
            out["delta"] = self.delta
        return out

    @classmethod
    def from_json(cls, obj) -> "Scenario":
        if isinstance(obj, str):
            obj = json.loads(obj)
        dom = Domain(tuple(obj["domain"]["lower"]), tuple(obj["domain"]["upper"]))
        return cls(obj["name"], obj["kind"], truth_from_json(obj["truth"]), dom, obj.get("delta"),
                   obj.get("description", ""))

    def ingest(self, raw, n) -> FrameworkData:
        if self.kind == "copula":
            return ingest("copula", raw)
        if self.kind == "levy-continuous":
            return ingest(self.kind, raw, self.domain, T=float(n))
        if self.kind == "levy-discrete":
            return ingest(self.kind, raw, self.domain, delta=self.delta)
        return ingest(self.kind, raw, self.domain)


MIXTURE4_WEIGHTS = (3 / 5, 1 / 10, 1 / 40, 11 / 40)


def _mixture4() -> Scenario:
    comps = (
        (BetaFactor(0.0, 0.6, 4, 4), BetaFactor(0.0, 0.4, 4, 4)),
        (BetaFactor(0.4, 1.0, 100, 100), BetaFactor(0.4, 1.0, 20, 20)),
        (UniformFactor(0.0, 1.0), UniformFactor(0.0, 1.0)),
        (BetaFactor(0.6, 1.0, 8, 4), UniformFactor(0.4, 1.0)),
    )
    return Scenario("mixture4", "density", TensorMixture(MIXTURE4_WEIGHTS, comps), Domain.unit(2),
                    description="four-component Beta/uniform product mixture")


@lru_cache(maxsize=None)
def _builtins() -> tuple:
    unit2 = Domain.unit(2)
    uniform = TensorMixture((1.0,), ((UniformFactor(0.0, 1.0), UniformFactor(0.0, 1.0)),))
    frank_clayton = CopulaMixture((0.5, 0.5), ("frank", "clayton"), (4.0, 2.0))
    blocks = TensorMixture(
        (0.5, 0.3, 0.2),
        (
            (UniformFactor(0.0, 1.0), UniformFactor(0.0, 1.0)),
            (UniformFactor(0.0, 0.5), UniformFactor(0.5, 1.0)),
            (UniformFactor(0.75, 1.0), UniformFactor(0.0, 0.25)),
        ),
    )
    jumps = TensorMixture(
        (0.6, 0.4),
        (
            (BetaFactor(0.0, 2.5, 2, 3), BetaFactor(0.0, 2.5, 2, 3)),
            (BetaFactor(1.0, 2.5, 4, 4), UniformFactor(0.5, 2.5)),
        ),
        mass=5.0,
    )
    levy_q = Domain((0.5, 0.5), (2.0, 2.0))
    return (
        _mixture4(),
        Scenario("frank_clayton", "copula", frank_clayton, unit2,
                 description="equal mixture of Frank(4) and Clayton(2) copulas"),
        Scenario("uniform2d", "density", uniform, unit2, description="uniform density on the unit square"),
        Scenario("poisson_blocks", "poisson", blocks, unit2,
                 description="piecewise-constant Poisson intensity, n points expected"),
        Scenario("levy_cpp", "levy-continuous", jumps, levy_q,
                 description="compound Poisson, rate 5, jumps observed up to horizon n"),
        Scenario("levy_cpp_discrete", "levy-discrete", jumps, levy_q, delta=0.01,
                 description="same compound Poisson sampled every 0.01 time units, n increments"),
    )


def builtin_scenarios() -> list:
    return list(_builtins())


def get_scenario(name: str) -> Scenario:
    for sc in _builtins():
        if sc.name == name:
            return sc
    names = ", ".join(s.name for s in _builtins())
    raise KeyError(f"unknown scenario {name!r}; built-ins: {names}")


def sample(scenario: Scenario, n, rng_seed, path: bool = False) -> np.ndarray:
    """Raw observations for ``scenario``.

    ``n`` is the sample size (density, copula), the expected point count
    (poisson), the horizon T (levy-continuous) or the number of increments
    (levy-discrete). With ``path=True`` the discrete kind returns the
    positions ``X_0, X_delta, ...`` instead of the increments.
    """
    rng = make_rng(rng_seed)
    truth = scenario.truth
    if n <= 0:
        raise ValueError("n must be positive")
    if scenario.kind in ("density", "copula"):
        return truth.sample(rng, int(n))
    if scenario.kind == "poisson":
        return _poisson_rejection(rng, truth, scenario.domain, float(n))
    rate = truth.mass
    if scenario.kind == "levy-continuous":
        count = rng.poisson(rate * n)
        return truth.sample(rng, count)
    if scenario.kind == "levy-discrete":
        n = int(n)
        horizon = n * scenario.delta
        count = rng.poisson(rate * horizon)
        times = rng.uniform(0.0, horizon, size=count)
        jumps = truth.sample(rng, count)
        window = np.minimum((times / scenario.delta).astype(np.int64), n - 1)
        incr = np.zeros((n, scenario.dim))
        np.add.at(incr, window, jumps)
        if path:
            return np.vstack([np.zeros((1, scenario.dim)), np.cumsum(incr, axis=0)])
        return incr
    raise ValueError(f"unknown kind {scenario.kind!r}")


def _poisson_rejection(rng, shape: TensorMixture, domain: Domain, expected: float) -> np.ndarray:
    count = rng.poisson(expected)
    env = shape.envelope(domain)
    lo, hi = np.array(domain.lower), np.array(domain.upper)
    out = []
    need = count
    while need > 0:
        prop = lo + (hi - lo) * rng.random((2 * need + 16, domain.dim))
        keep = rng.random(prop.shape[0]) * env <= shape.pdf(prop)
        acc = prop[keep][:need]
        out.append(acc)
        need -= acc.shape[0]
    return np.vstack(out) if out else np.zeros((0, domain.dim))


# --- exact coefficients -----------------------------------------------------


def true_coefficients(scenario: Scenario, basis: UnivariateBasis, L_bullet: int, n: float = 1.0) -> CoefficientTable:
    """Exact ``<Psi_lambda, s>`` for every index up to ``L_bullet``.

    The ``sigma2`` column holds what the variance estimator targets:
    ``Var(Psi(Y))`` for density and copula kinds, ``int Psi**2 s`` for
    point-process kinds. ``n`` only matters for the Poisson scale.
    """
    if not basis.piecewise_constant:
        raise NotImplementedError("exact coefficients need a piecewise-constant basis")
    beta, second = _exact_moments(scenario, basis, L_bullet)
    scale = scenario.target_scale(n)
    beta = scale * beta
    second = scale * second
    if scenario.kind in ("density", "copula"):
        sigma2 = np.maximum(second - beta**2, 0.0)
    else:
        sigma2 = second
    return CoefficientTable(layout_for(basis, scenario.dim, L_bullet), beta, sigma2)


@lru_cache(maxsize=32)
def _exact_moments(scenario: Scenario, basis: UnivariateBasis, L: int):
    dom = scenario.domain
    layout = layout_for(basis, dom.dim, L)
    vol = dom.volume
    beta = np.empty(layout.size)
    second = np.empty(layout.size)
    for jv, off, shape in zip(layout.level_vectors, layout.offsets, layout.shapes):
        edges = [dom.lower[i] + (dom.upper[i] - dom.lower[i]) * np.linspace(0.0, 1.0, basis.fine_cells(j) + 1)
                 for i, j in enumerate(jv)]
        masses = scenario.truth.cell_masses(edges)
        b, s = masses, masses
        for axis, j in enumerate(jv):
            b = basis.apply_cells(j, b, axis)
            s = basis.apply_cells(j, s, axis, square=True)
        size = math.prod(shape)
        beta[off:off + size] = b.ravel() / math.sqrt(vol)
        second[off:off + size] = s.ravel() / vol
    beta.setflags(write=False)
    second.setflags(write=False)
    return beta, second


def tail_energy(scenario: Scenario, basis: UnivariateBasis, L_bullet: int, n: float = 1.0, extra: int = 2) -> float:
    """Energy of the true coefficients with level in ``(L, L + extra]``."""
    beta, _ = _exact_moments(scenario, basis, L_bullet + extra)
    start = layout_for(basis, scenario.dim, L_bullet).size
    return scenario.target_scale(n) ** 2 * math.fsum((beta[start:] ** 2).tolist())


# --- pipeline and Monte Carlo risk -----------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """How one replication is estimated.

    ``estimator`` is ``"selected"`` (penalized pyramid selection),
    ``"full"`` (every index up to ``L``), ``"pyramid:<ell1>"`` (all indices
    below ``ell1``) or ``"cut:<ell1>"`` (best model with cut level ``ell1``).
    ``L`` overrides ``lmode``; ``rbar`` overrides the sup-norm proxy.
    """

    j0: int = 0
    lmode: str = "practice"
    L: Optional[int] = None
    c1: float = 1.5
    c2: float = 0.5
    rbar: Optional[float] = None
    per_axis_level: Optional[int] = None
    budgets: Optional[dict] = None
    estimator: str = "selected"

    @property
    def basis(self) -> UnivariateBasis:
        return HaarBasis(j0=self.j0)


@dataclass
class PipelineOutput:
    data: FrameworkData
    table: CoefficientTable
    schedule: SparsitySchedule
    config: PenaltyConfig
    positions: np.ndarray
    ell1: int
    result: object = None


def run_pipeline(data: FrameworkData, cfg: PipelineConfig, threads: int = 1) -> PipelineOutput:
    basis = cfg.basis
    L = cfg.L if cfg.L is not None else default_max_level(data, cfg.lmode, cfg.j0)
    table = empirical_coefficients(data, basis, L, threads=threads)
    if cfg.budgets is None:
        schedule = SparsitySchedule.combinatorial(basis, data.dim, L)
    else:
        schedule = SparsitySchedule.custom(basis, data.dim, L, cfg.budgets)
    rbar = cfg.rbar if cfg.rbar is not None else sup_norm_proxy(table, basis, data.domain, cfg.per_axis_level)
    pen = PenaltyConfig(data.n_bar, max(rbar, 1.0), cfg.c1, cfg.c2)
    est = cfg.estimator
    result = None
    if est == "selected":
        result = select_pyramid(table, schedule, pen, data.kind, data.domain)
        positions, ell1 = np.array(result.positions, dtype=np.int64), result.ell_hat
    elif est == "full":
        positions, ell1 = np.arange(table.layout.size), L + 1
    elif est.startswith("pyramid:"):
        ell1 = int(est.split(":")[1])
        positions = np.arange(PyramidModel(ell1, L, ()).mandatory_size(table.layout))
    elif est.startswith("cut:"):
        ell1 = int(est.split(":")[1])
        model, _ = select_within(ell1, table, schedule, pen)
        positions = np.array(model.positions(table.layout), dtype=np.int64)
    else:
        raise ValueError(f"unknown estimator {est!r}")
    return PipelineOutput(data, table, schedule, pen, positions, ell1, result)


def estimate_coefficients(out: PipelineOutput) -> np.ndarray:
    coef = np.zeros(out.table.layout.size)
    coef[out.positions] = out.table.beta[out.positions]
    return coef


def psi_risk(scenario: Scenario, out: PipelineOutput, n: float, basis: UnivariateBasis) -> float:
    """``||s - s_tilde||_Psi**2`` over the full index set plus the two-level tail."""
    L = out.table.layout.L
    truth = true_coefficients(scenario, basis, L, n).beta
    diff = truth - estimate_coefficients(out)
    return math.fsum((diff**2).tolist()) + tail_energy(scenario, basis, L, n)


@dataclass
class RiskReport:
    scenario: str
    n: float
    replications: int
    seed: int
    mean_risk: float
    std_error: float
    risks: list = field(default_factory=list)
    ell_hats: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "risk", "ell_hat"])
        for i, (r, e) in enumerate(zip(self.risks, self.ell_hats)):
            w.writerow([i, repr(r), e])
        return buf.getvalue()


def replication_seed(seed: int, rep: int) -> list:
    return [int(seed), int(rep)]


def monte_carlo_risk(scenario: Scenario, cfg: PipelineConfig, n, replications: int, rng_seed: int,
                     workers: int = 1) -> RiskReport:
    """Monte Carlo Psi-norm risk of the pipeline on ``scenario`` at size ``n``.

    Replication ``r`` draws from seed ``(rng_seed, r)``, so results do not
    depend on ``workers``.
    """
    basis = cfg.basis

    def one(rep):
        raw = sample(scenario, n, replication_seed(rng_seed, rep))
        out = run_pipeline(scenario.ingest(raw, n), cfg)
        return psi_risk(scenario, out, n, basis), out.ell1

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, range(replications)))
    else:
        res = [one(r) for r in range(replications)]
    risks = [r for r, _ in res]
    arr = np.asarray(risks)
    se = float(arr.std(ddof=1) / math.sqrt(replications)) if replications > 1 else float("nan")
    return RiskReport(scenario.name, n, replications, rng_seed, float(arr.mean()), se, risks,
                      [e for _, e in res], asdict(cfg))


def risk_curve(scenario: Scenario, cfg: PipelineConfig, ns: Sequence, replications: int, rng_seed: int,
               workers: int = 1) -> list:
    """Reports for each ``n``; replication seeds are shared across ``n`` (paired design)."""
    return [monte_carlo_risk(scenario, cfg, n, replications, rng_seed, workers) for n in ns]


def loglog_slope(ns, risks) -> float:
    x, y = np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(risks, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# --- mode analysis on regular grids ----------------------------------------


def grid_midpoints(domain: Domain, cells: int) -> np.ndarray:
    """Cell midpoints of a ``cells**d`` grid on the domain, C order."""
    axes = [lo + (hi - lo) * (np.arange(cells) + 0.5) / cells for lo, hi in zip(domain.lower, domain.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)


def local_maxima(values: np.ndarray, top: Optional[int] = None) -> list:
    """Plateau local maxima of a grid, largest first.

    A plateau (8-connected set of equal values, generalized to all
    neighbours in d dimensions) is a local maximum when no neighbour is
    larger. Returns ``(value, cells)`` pairs with ``cells`` an ``(m, d)``
    integer array.
    """
    from scipy import ndimage

    footprint = np.ones((3,) * values.ndim, dtype=bool)
    peak = values == ndimage.maximum_filter(values, footprint=footprint, mode="constant", cval=-np.inf)
    # label equal-value regions, then keep those made only of peak cells
    out = []
    labels, count = ndimage.label(peak, structure=footprint)
    for i in range(1, count + 1):
        comp = labels == i
        val = values[comp][0]
        ring = ndimage.binary_dilation(comp, structure=footprint) & ~comp
        if np.any(values[ring] == val):
            continue
        out.append((float(val), np.argwhere(comp)))
    out.sort(key=lambda t: (-t[0], tuple(t[1][0])))
    return out[:top] if top is not None else out


def mode_regions(values: np.ndarray, count: int, fraction: float = 0.5) -> list:
    """Boolean masks around the ``count`` largest local maxima of ``values``.

    Each region is the connected component of ``{v >= fraction * peak}``
    containing the peak's plateau.
    """
    from scipy import ndimage

    footprint = np.ones((3,) * values.ndim, dtype=bool)
    regions = []
    for val, cells in local_maxima(values, count):
        labels, _ = ndimage.label(values >= fraction * val, structure=footprint)
        regions.append(labels == labels[tuple(cells[0])])
    return regions


def modes_recovered(estimate: np.ndarray, regions: Sequence[np.ndarray]) -> bool:
    """True when the largest local maxima of ``estimate`` hit distinct regions.

    Each of the ``len(regions)`` largest plateau maxima must touch a
    different region.
    """
    peaks = local_maxima(estimate, len(regions))
    if len(peaks) < len(regions):
        return False
    hit = set()
    for _, cells in peaks:
        inside = [r for r, mask in enumerate(regions) if np.any(mask[tuple(cells.T)])]
        fresh = [r for r in inside if r not in hit]
        if not fresh:
            return False
        hit.add(fresh[0])
    return True
