#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.book import (
    LABEL_DTYPE,
    BookSolution,
    Partition,
    RegionLabel,
    compute_spread,
    label_mask,
    resample,
    write_book_csv,
)
from screenbook.errors import OracleError, ParameterError, SolverError
from screenbook.model import ModelSpec, matching_arrays
from screenbook.numerics import panel_integrals
from sklearn.isotonic import IsotonicRegression
from screenbook.families import PricePair
from scipy.optimize import minimize
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple
import numpy as np
import logging
import torch

logger = logging.getLogger(__name__)

_oracle_cache: Dict[Tuple[ModelSpec, PricePair, "OracleConfig"], "OracleSolution"] = {}


def clear_cache():
    """Clear the cache of oracle solutions."""
    global _oracle_cache
    _oracle_cache = {}


@dataclass(frozen=True)
class OracleConfig:
    """Controls of the direct optimizer.

    Attrs:
        n_grid (int): odd number of nodes, zero is the middle node
        step_tol (float): relative objective decrease that stops a stage
        max_sweeps (int): quasi-Newton iterations per stage
        penalties (Tuple[float, ...]): participation penalty weights, increasing
        violation_tol (float): largest participation violation accepted
        label_tol (float): gap v - u0 still labelled as binding
    """

    n_grid: int = 2001
    step_tol: float = 1e-13
    max_sweeps: int = 20000
    penalties: Tuple[float, ...] = (1e2, 1e4, 1e6, 1e8)
    violation_tol: float = 1e-6
    label_tol: float = 1e-7

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: even or too small grid, empty penalty schedule
        """
        if self.n_grid < 101 or self.n_grid % 2 == 0:
            raise ParameterError(f"n_grid must be odd and >= 101, got {self.n_grid}")
        if not self.penalties or any(p <= 0 for p in self.penalties):
            raise ParameterError("penalties must be a non empty sequence of positive weights")
        if not self.step_tol > 0 or self.max_sweeps < 1:
            raise ParameterError("step_tol must be positive and max_sweeps >= 1")


@dataclass(eq=False)
class OracleSolution:
    """Direct discretised solution of the dealer problem.

    v is the welfare of every type, u0 on types left to the crossing network.

    Attrs:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        grid (np.ndarray): nodes, two uniform halves meeting at zero
        v (np.ndarray): indirect utility at the nodes
        q (np.ndarray): quantity at the nodes, average of the adjacent cells
        tau (np.ndarray): transfers u(θ, q) - v
        labels (np.ndarray): region of every node, assigned after the solve
        objective (float): expected dealer profit
        cell_q (np.ndarray): quantity on every cell
        max_violation (float): largest participation violation
        stages (List[Dict[str, Any]]): one record per penalty stage
    """

    spec: ModelSpec
    pi: PricePair
    grid: np.ndarray
    v: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    labels: np.ndarray
    objective: float
    cell_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_violation: float = 0.0
    stages: List[Dict[str, Any]] = field(default_factory=list)


class _Discretisation:
    """Cells of the oracle grid, listed outward from zero on each side."""

    def __init__(self, spec: ModelSpec, pi: PricePair, n_grid: int):
        lo, hi = spec.theta.lo, spec.theta.hi
        if not lo < 0 < hi:
            raise ParameterError(f"the oracle needs 0 inside ({lo}, {hi})")
        m = (n_grid - 1) // 2
        self.m = m
        self.grid = np.concatenate((np.linspace(lo, 0.0, m + 1)[:-1], np.linspace(0.0, hi, m + 1)))
        self.zero = m
        # inner and outer node of every cell, right side first
        self.inner = np.concatenate((self.grid[m : 2 * m], self.grid[m : 0 : -1]))
        self.outer = np.concatenate((self.grid[m + 1 :], self.grid[m - 1 :: -1]))
        F = spec.density.cdf
        self.mass = np.abs(F(self.outer) - F(self.inner))
        edges = np.stack((self.inner, self.outer), axis=1).ravel()
        first = panel_integrals(lambda s: s * spec.density.pdf(s), edges, 8)[::2] * np.sign(self.outer - self.inner)
        self.mean = np.where(self.mass > 0, first / np.where(self.mass > 0, self.mass, 1.0), 0.5 * (self.inner + self.outer))
        u0_cell = spec.u0(self.mean, pi)
        self.cell_finite = np.isfinite(u0_cell)
        self.cell_active = self.cell_finite & (u0_cell > 0)
        self.u0_cell = np.where(self.cell_finite, u0_cell, 0.0)
        u0_node = spec.u0(self.grid, pi)
        self.node_finite = np.isfinite(u0_node)
        self.floor = np.where(self.node_finite, np.maximum(u0_node, 0.0), 0.0)
        self.u0_node = u0_node
        self.h = np.abs(self.outer - self.inner)
        self.q0 = float(spec.psi1_inverse(0.0))

    def quantities(self, delta: torch.Tensor) -> torch.Tensor:
        """Cell quantities from the outward increments, right cells then left cells."""
        m = self.m
        right = self.q0 + torch.cumsum(delta[:m], 0)
        left = self.q0 - torch.cumsum(delta[m:], 0)
        return torch.cat((right, left))

    def node_values(self, psi1_q: torch.Tensor) -> torch.Tensor:
        """v at the nodes from the cell slopes, v(0) = 0."""
        m = self.m
        h = torch.as_tensor(self.h)
        right = torch.cumsum(h[:m] * psi1_q[:m], 0)
        left = torch.cumsum(-h[m:] * psi1_q[m:], 0)
        zero = torch.zeros(1, dtype=torch.float64)
        return torch.cat((torch.flip(left, (0,)), zero, right))

    def inner_values(self, v_nodes: torch.Tensor) -> torch.Tensor:
        """v at the inner node of every cell."""
        m = self.m
        return torch.cat((v_nodes[m : 2 * m], torch.flip(v_nodes[1 : m + 1], (0,))))


def _poly(coefficients: Sequence[float], x: torch.Tensor) -> torch.Tensor:
    result = torch.zeros_like(x)
    for c in reversed(coefficients):
        result = result * x + c
    return result


def _starting_increments(spec: ModelSpec, disc: _Discretisation) -> np.ndarray:
    m = disc.m
    right = np.maximum(spec.virtual_quantity_array(disc.mean[:m], 1.0), disc.q0)
    left = np.minimum(spec.virtual_quantity_array(disc.mean[m:], 0.0), disc.q0)
    theta = np.concatenate((disc.mean[m:][::-1], disc.mean[:m]))
    q = np.concatenate((left[::-1], right))
    weights = np.concatenate((disc.mass[m:][::-1], disc.mass[:m])) + 1e-300
    try:
        q = IsotonicRegression(increasing=True).fit_transform(theta, q, sample_weight=weights)
    except ValueError as exc:
        raise SolverError(f"starting point of the direct optimisation failed: {exc}") from exc
    left, right = q[:m][::-1], q[m:]
    d_right = np.diff(np.concatenate(([disc.q0], right)))
    d_left = -np.diff(np.concatenate(([disc.q0], left)))
    return np.maximum(np.concatenate((d_right, d_left)), 0.0)


class _Objective:
    """Penalised negative dealer profit as a function of the increments."""

    def __init__(self, spec: ModelSpec, disc: _Discretisation):
        self.disc = disc
        self.psi1 = spec.prefs.psi1.coefficients
        self.psi2 = spec.prefs.psi2.coefficients
        self.cost = spec.cost.c.coefficients
        self.mass = torch.as_tensor(disc.mass)
        self.inner = torch.as_tensor(disc.inner)
        self.offset = torch.as_tensor(disc.mean - disc.inner)
        self.u0_cell = torch.as_tensor(disc.u0_cell)
        self.active = torch.as_tensor(disc.cell_active)
        self.finite = torch.as_tensor(disc.cell_finite)
        self.floor = torch.as_tensor(disc.floor)
        self.node_finite = torch.as_tensor(disc.node_finite)
        self.node_h = torch.as_tensor(np.gradient(disc.grid))

    def profit_terms(self, delta: torch.Tensor, temperature: float) -> Tuple[torch.Tensor, torch.Tensor]:
        """Per cell profit and node values; temperature 0 takes the exact max."""
        q = self.disc.quantities(delta)
        p1 = _poly(self.psi1, q)
        v_nodes = self.disc.node_values(p1)
        v_in = self.disc.inner_values(v_nodes)
        serve = self.inner * p1 + _poly(self.psi2, q) - _poly(self.cost, q) - v_in
        leave = self.u0_cell - (v_in + p1 * self.offset)
        if temperature > 0:
            combined = temperature * torch.logaddexp(serve / temperature, leave / temperature)
        else:
            combined = torch.maximum(serve, leave)
        profit = torch.where(self.active, combined, serve)
        profit = torch.where(self.finite, profit, torch.zeros_like(profit))
        return profit, v_nodes

    def __call__(self, x: np.ndarray, rho: float) -> Tuple[float, np.ndarray]:
        delta = torch.tensor(x, dtype=torch.float64, requires_grad=True)
        profit, v_nodes = self.profit_terms(delta, 1.0 / rho)
        violation = torch.clamp(self.floor - v_nodes, min=0.0)
        violation = torch.where(self.node_finite, violation, torch.zeros_like(violation))
        loss = -torch.sum(self.mass * profit) + 0.5 * rho * torch.sum(self.node_h * violation**2)
        loss.backward()
        return float(loss.detach()), delta.grad.numpy().copy()


def _node_quantities(disc: _Discretisation, cell_q: np.ndarray) -> np.ndarray:
    m = disc.m
    ordered = np.concatenate((cell_q[m:][::-1], cell_q[:m]))
    q = np.empty(disc.grid.size)
    q[0], q[-1] = ordered[0], ordered[-1]
    q[1:-1] = 0.5 * (ordered[:-1] + ordered[1:])
    q[m] = 0.5 * (cell_q[m] + cell_q[0])
    return q


def _labels(spec: ModelSpec, pi: PricePair, disc: _Discretisation, v: np.ndarray, cell_q: np.ndarray, tol: float) -> np.ndarray:
    m = disc.m
    ordered = np.concatenate((cell_q[m:][::-1], cell_q[:m]))
    # a node is reserved when both adjacent cells keep the no-trade quantity
    flat = np.abs(ordered - disc.q0) <= 1e-12 * max(1.0, float(np.max(np.abs(ordered))))
    reserved = np.concatenate((flat[:1], flat)) & np.concatenate((flat, flat[-1:]))
    reserved[m] = True
    labels = np.full(disc.grid.size, RegionLabel.FULL_SERVICE.value, dtype=LABEL_DTYPE)
    labels[reserved & (np.abs(v) <= tol * max(1.0, float(np.max(np.abs(v)))))] = RegionLabel.RESERVED.value
    binding = ~reserved & disc.node_finite & (disc.u0_node > 0) & (v - np.where(disc.node_finite, disc.u0_node, 0.0) <= tol)
    for direction, side in ((-1, disc.grid < 0), (1, disc.grid > 0)):
        index = np.flatnonzero(binding & side)
        if index.size:
            _, _, margin = matching_arrays(spec, pi, disc.grid[index], direction)
            labels[index] = np.where(margin >= 0, RegionLabel.MATCHED.value, RegionLabel.EXCLUDED.value)
    labels[~disc.node_finite] = RegionLabel.EXCLUDED.value
    return labels


def oracle_solve(spec: ModelSpec, pi: Optional[PricePair] = None, cfg: Optional[OracleConfig] = None) -> OracleSolution:
    """Maximise the discretised dealer profit directly over convex indirect utilities.

    Quantities are constant on the cells of the grid and parametrised by their
    nonnegative increments outward from zero, which makes v convex, v(0) = 0 and
    v >= 0 simple bounds. Participation v >= u0 is imposed by a quadratic penalty
    with increasing weights; types may be left to the crossing network, in which
    case they earn u0 and the dealer earns nothing.

    Args:
        spec (ModelSpec): the problem
        pi (Optional[PricePair], optional): crossing network prices. Defaults to (0, 0).
        cfg (Optional[OracleConfig], optional): optimizer controls. Defaults to None.

    Raises:
        OracleError: a stage ran out of iterations, ``best`` holds the last iterate

    Returns:
        OracleSolution: the discretised optimum with post hoc labels
    """
    pi = pi or PricePair()
    cfg = cfg or OracleConfig()
    key = (spec, pi, cfg)
    if key in _oracle_cache:
        return _oracle_cache[key]
    spec.outside.check_price(pi)
    disc = _Discretisation(spec, pi, cfg.n_grid)
    objective = _Objective(spec, disc)
    x = _starting_increments(spec, disc)
    bounds = [(0.0, None)] * x.size
    stages = []
    for rho in cfg.penalties:
        try:
            res = minimize(
                objective,
                x,
                args=(rho,),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": cfg.max_sweeps, "ftol": cfg.step_tol, "gtol": 1e-12, "maxcor": 30},
            )
        except (ValueError, RuntimeError) as exc:
            raise OracleError(f"oracle stage with penalty {rho:g} failed: {exc}", best=x) from exc
        x = np.maximum(res.x, 0.0)
        stages.append({"penalty": rho, "loss": float(res.fun), "iterations": int(res.nit), "message": str(res.message)})
        logger.info("oracle stage rho=%.0e: loss=%.12g after %d iterations (%s)", rho, res.fun, res.nit, res.message)
        if res.status == 1:
            raise OracleError(f"oracle stage with penalty {rho:g} hit the iteration limit {cfg.max_sweeps}", best=x)

    with torch.no_grad():
        delta = torch.as_tensor(x)
        profit, v_nodes = objective.profit_terms(delta, 0.0)
        cell_q = disc.quantities(delta).numpy()
        total = float(torch.sum(objective.mass * profit))
    v = v_nodes.numpy().copy()
    gap = np.where(disc.node_finite, disc.floor - v, 0.0)
    violation = float(max(np.max(gap), 0.0))
    if violation > cfg.violation_tol:
        logger.warning("oracle participation violation %.3e above %.1e", violation, cfg.violation_tol)
    q = _node_quantities(disc, cell_q)
    sol = OracleSolution(
        spec=spec,
        pi=pi,
        grid=disc.grid,
        v=v,
        q=q,
        tau=spec.utility(disc.grid, q) - v,
        labels=_labels(spec, pi, disc, v, cell_q, cfg.label_tol),
        objective=total,
        cell_q=cell_q,
        max_violation=violation,
        stages=stages,
    )
    _oracle_cache[key] = sol
    return sol


def _label_changes(grid: np.ndarray, labels: np.ndarray) -> np.ndarray:
    change = np.flatnonzero(labels[1:] != labels[:-1])
    return 0.5 * (grid[change] + grid[change + 1])


def oracle_to_book(ora: OracleSolution) -> BookSolution:
    """Convert an oracle solution into a book for the structural checks.

    Multipliers are unknown and every node is flagged reporting-only.
    """
    grid, labels = ora.grid, ora.labels
    cuts = [grid[0], *_label_changes(grid, labels), grid[-1]]
    firsts = [0, *(np.flatnonzero(labels[1:] != labels[:-1]) + 1)]
    pieces = [(cuts[i], cuts[i + 1], RegionLabel(str(labels[j]))) for i, j in enumerate(firsts)]
    excluded = label_mask(labels, RegionLabel.EXCLUDED)
    profit = np.where(excluded, 0.0, ora.tau - ora.spec.cost.c(ora.q))
    book = BookSolution(
        spec=ora.spec,
        pi=ora.pi,
        grid=grid,
        q=ora.q,
        tau=ora.tau,
        v=ora.v,
        gamma=np.full(grid.size, np.nan),
        u0=ora.spec.u0(grid, ora.pi),
        labels=labels,
        partition=Partition.from_pieces(pieces),
        dealer_profit=ora.objective,
        per_type_profit=profit,
        plateau=(float("nan"), float("nan")),
        gamma_reporting_only=np.ones(grid.size, dtype=bool),
        flags={"oracle": True},
    )
    return replace(book, spread=compute_spread(ora.spec, book))


@dataclass(frozen=True)
class OracleComparison:
    """Agreement between a book and the oracle.

    Attrs:
        v_sup (float): sup |welfare(book) - v(oracle)| on the oracle grid
        objective_gap (float): oracle objective minus book dealer profit
        relative_gap (float): |objective_gap| over the larger profit
        boundary_steps (float): largest distance of a book region boundary to an oracle label change, in grid steps
        v_tol (float): tolerance on v_sup
        steps_tol (float): tolerance on boundary_steps
    """

    v_sup: float
    objective_gap: float
    relative_gap: float
    boundary_steps: float
    v_tol: float
    steps_tol: float

    @property
    def passed(self) -> bool:
        """Return True if v and the partition agree within tolerance."""
        return self.v_sup <= self.v_tol and self.boundary_steps <= self.steps_tol

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "v_sup": self.v_sup,
            "objective_gap": self.objective_gap,
            "relative_gap": self.relative_gap,
            "boundary_steps": self.boundary_steps,
            "v_tol": self.v_tol,
            "steps_tol": self.steps_tol,
            "passed": self.passed,
        }


def oracle_compare(sol: BookSolution, ora: OracleSolution, v_tol: float = 5e-3, steps_tol: float = 2.0) -> OracleComparison:
    """Compare a semi-analytic book with the oracle on the oracle grid.

    Args:
        sol (BookSolution): the book
        ora (OracleSolution): the oracle solution of the same problem
        v_tol (float, optional): tolerance on the sup-norm of the welfare gap. Defaults to 5e-3.
        steps_tol (float, optional): tolerance on boundary offsets in grid steps. Defaults to 2.0.

    Raises:
        GridError: the book does not cover the oracle grid

    Returns:
        OracleComparison: the quantitative report
    """
    book = resample(sol, ora.grid)
    welfare = book.welfare()
    finite = np.isfinite(welfare) & np.isfinite(ora.spec.u0(ora.grid, ora.pi))
    v_sup = float(np.max(np.abs(welfare[finite] - ora.v[finite])))
    gap = ora.objective - sol.dealer_profit
    relative = abs(gap) / max(abs(ora.objective), abs(sol.dealer_profit), 1e-300)
    lo, hi = ora.grid[0], ora.grid[-1]
    boundaries = [b for iv in sol.partition.intervals for b in iv[:2] if lo < b < hi]
    changes = _label_changes(ora.grid, ora.labels)
    step = float(np.max(np.diff(ora.grid)))
    if boundaries and changes.size:
        worst = max(float(np.min(np.abs(changes - b))) for b in set(boundaries))
        steps = worst / step
    else:
        steps = 0.0 if not boundaries and not changes.size else float("inf")
    logger.info("oracle comparison: v_sup=%.3e objective gap=%.3e boundary steps=%.2f", v_sup, gap, steps)
    return OracleComparison(v_sup, gap, relative, steps, v_tol, steps_tol)


def write_oracle_csv(ora: OracleSolution, path: str) -> None:
    """Write the oracle solution, 12 significant digits.

    Args:
        ora (OracleSolution): the solution
        path (str): target file
    """
    write_book_csv(oracle_to_book(ora), path)
