#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.model import CostSpec, ModelSpec, PreferenceSpec, TypeSpace
from screenbook.equilibrium import EquilibriumConfig, EquilibriumMode
from screenbook.families import PolynomialFunction, PricePair, build_density, build_outside
from screenbook.errors import ConfigError, ParameterError
from screenbook.numerics import QuadratureConfig, RootConfig
from screenbook.darkpool import DarkPoolParams, darkpool_spec
from screenbook.benchmark import BenchmarkConfig
from screenbook.screening import CnConfig
from screenbook.oracle import OracleConfig
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple
import logging
import sys
import os
import re

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

_TABLES = {
    "types": {"lo", "hi"},
    "density": None,
    "preferences": {"psi1", "psi2"},
    "cost": {"c"},
    "outside": None,
    "price": {"minus", "plus"},
    "solver": {
        "grid_n",
        "order",
        "profit_panels",
        "strict",
        "root_tol",
        "root_max_iter",
        "quad_tol",
        "touch_tol",
        "binding_scan_n",
        "gamma_scan_n",
        "gamma_tol",
    },
    "equilibrium": {"mode", "pi0", "sup_norm_tol", "max_iters", "cycle_window", "cycle_tol", "damping"},
    "oracle": {"n_grid", "step_tol", "max_sweeps", "penalties", "violation_tol", "label_tol"},
    "darkpool": {"alpha", "beta", "eps", "p", "kappa", "pi0"},
    "task": {"name", "description", "runs"},
    "check": {"name", "quantity", "expected", "tol"},
}

RUNS = ("validate", "benchmark", "cn", "equilibrium", "darkpool", "dp_equilibrium", "oracle")


@dataclass(frozen=True)
class CheckSpec:
    """An acceptance anchor: a named quantity and its expected value.

    Attrs:
        name (str): label in the summary
        quantity (str): quantity path, e.g. ``cn.t_plus`` or ``equilibrium.pi_plus[1]``
        expected (float): expected value
        tol (float): absolute tolerance
    """

    name: str
    quantity: str
    expected: float
    tol: float


@dataclass(frozen=True)
class TaskSpec:
    """What a configuration is meant to run.

    Attrs:
        name (str): short identifier, used for output directories
        description (str): one line description
        runs (Tuple[str, ...]): computations performed by ``reproduce``
    """

    name: str
    description: str = ""
    runs: Tuple[str, ...] = ("benchmark", "cn")


@dataclass(frozen=True)
class ProblemConfig:
    """A parsed problem configuration.

    Attrs:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        solver (CnConfig): book solver controls
        equilibrium (EquilibriumConfig): price iteration controls
        oracle (OracleConfig): direct optimizer controls
        darkpool (Optional[DarkPoolParams]): liquidation parameters, if the problem is a dark pool one
        darkpool_pi0 (float): starting pool price
        task (TaskSpec): what to run
        checks (Tuple[CheckSpec, ...]): acceptance anchors
        path (Optional[str]): source file
    """

    spec: ModelSpec
    pi: PricePair = field(default_factory=PricePair)
    solver: CnConfig = field(default_factory=CnConfig)
    equilibrium: EquilibriumConfig = field(default_factory=EquilibriumConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    darkpool: Optional[DarkPoolParams] = None
    darkpool_pi0: float = 0.0
    task: TaskSpec = field(default_factory=lambda: TaskSpec("problem"))
    checks: Tuple[CheckSpec, ...] = ()
    path: Optional[str] = None


class _Reader:
    """Typed access to a configuration mapping with key paths in the errors."""

    def __init__(self, path: Optional[str], text: Optional[str]):
        self.path = path
        self.text = text

    def line_of(self, key: str) -> Optional[int]:
        if self.text is None:
            return None
        table, _, leaf = key.rpartition(".")
        table = re.sub(r"\[\d+\]$", "", table)
        header = re.compile(r"^\s*\[\[?\s*" + re.escape(table) + r"\s*\]\]?\s*$") if table else None
        inside = header is None
        top = re.compile(r"^\s*\[\[?\s*" + re.escape(leaf) + r"\s*\]\]?\s*$") if not table else None
        for number, line in enumerate(self.text.splitlines(), start=1):
            if header is not None and header.match(line):
                inside = True
                if not leaf:
                    return number
                continue
            if top is not None and top.match(line):
                return number
            if inside and re.match(r"^\s*" + re.escape(leaf) + r"\s*=", line):
                return number
        return None

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, path=self.path, key=key, line=self.line_of(key))

    def table(self, data: Mapping[str, Any], name: str, required: bool = False) -> Dict[str, Any]:
        if name not in data:
            if required:
                raise self.error("missing table", name)
            return {}
        value = data[name]
        if not isinstance(value, dict):
            raise self.error("expected a table", name)
        allowed = _TABLES[name]
        if allowed is not None:
            unknown = sorted(set(value) - allowed)
            if unknown:
                raise self.error(f"unknown keys {unknown}, expected a subset of {sorted(allowed)}", f"{name}.{unknown[0]}")
        return value

    def number(self, table: Mapping[str, Any], key: str, default: Any = None, kind: Callable = float) -> Any:
        leaf = key.rpartition(".")[2]
        if leaf not in table:
            if default is None:
                raise self.error("missing key", key)
            return default
        value = table[leaf]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {type(value).__name__}", key)
        if kind is int and not isinstance(value, int):
            raise self.error("expected an integer", key)
        return kind(value)

    def flag(self, table: Mapping[str, Any], key: str, default: bool) -> bool:
        leaf = key.rpartition(".")[2]
        value = table.get(leaf, default)
        if not isinstance(value, bool):
            raise self.error("expected a boolean", key)
        return value

    def string(self, table: Mapping[str, Any], key: str, default: Optional[str] = None) -> str:
        leaf = key.rpartition(".")[2]
        if leaf not in table:
            if default is None:
                raise self.error("missing key", key)
            return default
        value = table[leaf]
        if not isinstance(value, str):
            raise self.error(f"expected a string, got {type(value).__name__}", key)
        return value

    def numbers(self, table: Mapping[str, Any], key: str, default: Optional[Tuple[float, ...]] = None) -> Tuple[float, ...]:
        leaf = key.rpartition(".")[2]
        if leaf not in table:
            if default is None:
                raise self.error("missing key", key)
            return default
        value = table[leaf]
        if not isinstance(value, list) or not value:
            raise self.error("expected a non empty array of numbers", key)
        if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
            raise self.error("expected an array of numbers", key)
        return tuple(float(x) for x in value)


def _family_params(reader: _Reader, table: Mapping[str, Any], name: str) -> Tuple[str, Dict[str, Any]]:
    kind = reader.string(table, f"{name}.kind")
    params = {}
    for key, value in table.items():
        if key == "kind":
            continue
        if isinstance(value, list):
            params[key] = reader.numbers(table, f"{name}.{key}")
        else:
            params[key] = reader.number(table, f"{name}.{key}")
    return kind, params


def _model(reader: _Reader, data: Mapping[str, Any]) -> ModelSpec:
    types = reader.table(data, "types", required=True)
    theta = TypeSpace(reader.number(types, "types.lo"), reader.number(types, "types.hi"))
    kind, params = _family_params(reader, reader.table(data, "density", required=True), "density")
    try:
        density = build_density(kind, params)
    except ParameterError as exc:
        raise reader.error(str(exc), "density.kind") from exc
    prefs = reader.table(data, "preferences", required=True)
    psi1 = PolynomialFunction(reader.numbers(prefs, "preferences.psi1"))
    psi2 = PolynomialFunction(reader.numbers(prefs, "preferences.psi2", (0.0,)))
    cost = reader.table(data, "cost", required=True)
    c = PolynomialFunction(reader.numbers(cost, "cost.c"))
    outside_table = reader.table(data, "outside")
    if outside_table:
        kind, params = _family_params(reader, outside_table, "outside")
    else:
        kind, params = "trivial", {}
    try:
        outside = build_outside(kind, params)
    except ParameterError as exc:
        raise reader.error(str(exc), "outside.kind") from exc
    return ModelSpec(theta, density, PreferenceSpec(psi1, psi2), CostSpec(c), outside)


def _solver(reader: _Reader, table: Mapping[str, Any]) -> CnConfig:
    root = RootConfig(
        abs_tol=reader.number(table, "solver.root_tol", 1e-10),
        max_iter=reader.number(table, "solver.root_max_iter", 200, int),
    )
    bench = BenchmarkConfig(
        grid_n=reader.number(table, "solver.grid_n", 2001, int),
        order=reader.number(table, "solver.order", 8, int),
        profit_panels=reader.number(table, "solver.profit_panels", 64, int),
        root=root,
        quadrature=QuadratureConfig(abs_tol=reader.number(table, "solver.quad_tol", 1e-9)),
        strict=reader.flag(table, "solver.strict", False),
    )
    return CnConfig(
        benchmark=bench,
        gamma_search=RootConfig(abs_tol=reader.number(table, "solver.gamma_tol", 1e-11)),
        binding_scan_n=reader.number(table, "solver.binding_scan_n", 512, int),
        touch_tol=reader.number(table, "solver.touch_tol", 1e-9),
        gamma_scan_n=reader.number(table, "solver.gamma_scan_n", 33, int),
    )


def _equilibrium(reader: _Reader, table: Mapping[str, Any], pi: PricePair, solver: CnConfig) -> EquilibriumConfig:
    mode = reader.string(table, "equilibrium.mode", EquilibriumMode.BEST_BID_ASK.value)
    try:
        mode = EquilibriumMode(mode)
    except ValueError:
        raise reader.error(f"unknown mode '{mode}', expected 'best' or 'mid'", "equilibrium.mode") from None
    pi0 = reader.numbers(table, "equilibrium.pi0", pi.as_tuple())
    if len(pi0) != 2:
        raise reader.error("expected [minus, plus]", "equilibrium.pi0")
    return EquilibriumConfig(
        mode=mode,
        pi0=PricePair(*pi0),
        sup_norm_tol=reader.number(table, "equilibrium.sup_norm_tol", 1e-5),
        max_iters=reader.number(table, "equilibrium.max_iters", 50, int),
        cycle_window=reader.number(table, "equilibrium.cycle_window", 8, int),
        cycle_tol=reader.number(table, "equilibrium.cycle_tol", 1e-9),
        damping=reader.number(table, "equilibrium.damping", 1.0),
        solver=solver,
    )


def _oracle(reader: _Reader, table: Mapping[str, Any]) -> OracleConfig:
    defaults = OracleConfig()
    return OracleConfig(
        n_grid=reader.number(table, "oracle.n_grid", defaults.n_grid, int),
        step_tol=reader.number(table, "oracle.step_tol", defaults.step_tol),
        max_sweeps=reader.number(table, "oracle.max_sweeps", defaults.max_sweeps, int),
        penalties=reader.numbers(table, "oracle.penalties", defaults.penalties),
        violation_tol=reader.number(table, "oracle.violation_tol", defaults.violation_tol),
        label_tol=reader.number(table, "oracle.label_tol", defaults.label_tol),
    )


def _checks(reader: _Reader, data: Mapping[str, Any]) -> Tuple[CheckSpec, ...]:
    entries = data.get("check", [])
    if not isinstance(entries, list):
        raise reader.error("expected an array of tables [[check]]", "check")
    checks: List[CheckSpec] = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise reader.error("expected a table", f"check[{i}]")
        unknown = sorted(set(entry) - _TABLES["check"])
        if unknown:
            raise reader.error(f"unknown keys {unknown}", f"check[{i}].{unknown[0]}")
        checks.append(
            CheckSpec(
                name=reader.string(entry, f"check[{i}].name"),
                quantity=reader.string(entry, f"check[{i}].quantity"),
                expected=reader.number(entry, f"check[{i}].expected"),
                tol=reader.number(entry, f"check[{i}].tol"),
            )
        )
    return tuple(checks)


def parse_config(data: Mapping[str, Any], path: Optional[str] = None, text: Optional[str] = None) -> ProblemConfig:
    """Build a problem configuration from a parsed mapping.

    Args:
        data (Mapping[str, Any]): the TOML document as a dict
        path (Optional[str], optional): source file, for messages. Defaults to None.
        text (Optional[str], optional): source text, for line numbers. Defaults to None.

    Raises:
        ConfigError: unknown table or key, wrong type, invalid value

    Returns:
        ProblemConfig: the configuration
    """
    reader = _Reader(path, text)
    unknown = sorted(set(data) - set(_TABLES))
    if unknown:
        raise reader.error(f"unknown table, expected one of {sorted(_TABLES)}", unknown[0])
    try:
        dp_table = reader.table(data, "darkpool")
        darkpool = None
        dp_pi0 = 0.0
        if dp_table:
            darkpool = DarkPoolParams(
                alpha=reader.number(dp_table, "darkpool.alpha"),
                beta=reader.number(dp_table, "darkpool.beta"),
                eps=reader.number(dp_table, "darkpool.eps", 0.0),
                p=reader.number(dp_table, "darkpool.p"),
                kappa=reader.number(dp_table, "darkpool.kappa"),
            )
            dp_pi0 = reader.number(dp_table, "darkpool.pi0", 0.0)
            spec = darkpool_spec(darkpool)
        else:
            spec = _model(reader, data)
        price = reader.table(data, "price")
        pi = PricePair(reader.number(price, "price.minus", 0.0), reader.number(price, "price.plus", 0.0))
        solver = _solver(reader, reader.table(data, "solver"))
        equilibrium = _equilibrium(reader, reader.table(data, "equilibrium"), pi, solver)
        oracle = _oracle(reader, reader.table(data, "oracle"))
        task_table = reader.table(data, "task")
        default_name = os.path.splitext(os.path.basename(path))[0] if path else "problem"
        runs = task_table.get("runs", ["benchmark", "cn"])
        if not isinstance(runs, list) or any(r not in RUNS for r in runs):
            raise reader.error(f"expected an array with entries among {list(RUNS)}", "task.runs")
        task = TaskSpec(
            name=reader.string(task_table, "task.name", default_name),
            description=reader.string(task_table, "task.description", ""),
            runs=tuple(runs),
        )
        checks = _checks(reader, data)
    except ParameterError as exc:
        raise ConfigError(str(exc), path=path) from exc
    logger.debug("parsed configuration '%s' with %d checks", task.name, len(checks))
    return ProblemConfig(
        spec=spec,
        pi=pi,
        solver=solver,
        equilibrium=equilibrium,
        oracle=oracle,
        darkpool=darkpool,
        darkpool_pi0=dp_pi0,
        task=task,
        checks=checks,
        path=path,
    )


def load_config(path: str) -> ProblemConfig:
    """Read a TOML problem configuration.

    Args:
        path (str): configuration file

    Raises:
        ConfigError: unreadable file, TOML syntax error or schema violation

    Returns:
        ProblemConfig: the configuration
    """
    try:
        with open(path, "rb") as fp:
            raw = fp.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path=path) from exc
    text = raw.decode("utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path=path, line=int(match.group(1)) if match else None) from exc
    return parse_config(data, path=path, text=text)


def bundled_configs() -> Dict[str, str]:
    """Return the bundled configurations by name."""
    if not os.path.isdir(CONFIG_DIR):
        return {}
    return {
        os.path.splitext(name)[0]: os.path.join(CONFIG_DIR, name)
        for name in sorted(os.listdir(CONFIG_DIR))
        if name.endswith(".toml")
    }


def resolve_config(name_or_path: str) -> str:
    """Return the path of a configuration given either a path or a bundled name.

    Raises:
        ConfigError: neither an existing file nor a bundled name
    """
    if os.path.isfile(name_or_path):
        return name_or_path
    bundled = bundled_configs()
    if name_or_path in bundled:
        return bundled[name_or_path]
    raise ConfigError(f"no such file or bundled configuration, bundled ones are {sorted(bundled)}", path=name_or_path)
