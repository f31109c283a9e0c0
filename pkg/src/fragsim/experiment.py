"""Environments, built-in experiments, seeding, and the resumable batch runner."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .metrics import RunResult, aggregate_run
from .simulation import SimulationConfig, run_reference
from .traders import STRATEGIES, GreedyVariant

log = logging.getLogger(__name__)

PROFILES_SHA256 = "db31dda1942b08d71307d6b159fdab2032fba95ec64a6d63761b131170e7c823"
RESULTS_FILE = "results.csv"
MANIFEST_FILE = "manifest.json"

MARKETS = ("cda", "2mnola", "2mla")


@dataclass(frozen=True)
class Environment:
    name: str
    n_zi: int
    arrival_rate: float
    kappa: float
    horizon: int
    latencies: tuple[int, ...]


ENVIRONMENTS: dict[str, Environment] = {
    "1": Environment("1", 24, 0.05, 0.05, 15_000, (0, 100, 200, 300, 400, 600, 700, 900)),
    "2": Environment("2", 238, 0.005, 0.02, 10_000, (0, 50, 100)),
    "3": Environment("3", 58, 0.005, 0.02, 5_000, (0, 25, 50, 75, 100)),
}


class ConfigError(ValueError):
    """A malformed experiment or run description; the message names the field."""


class ResumeConflict(RuntimeError):
    """Existing output was produced by a different spec or code version."""


def _data_bytes(name: str) -> bytes:
    return resources.files("fragsim").joinpath("data").joinpath(name).read_bytes()


@lru_cache(maxsize=2)
def load_profiles(verify: bool = True) -> dict[str, tuple[float, ...]]:
    """Built-in strategy profiles keyed by experiment id, exactly as tabulated.

    Rows that do not sum to one are renormalized (with a warning) when used.
    """
    raw = _data_bytes("profiles.json")
    if verify and hashlib.sha256(raw).hexdigest() != PROFILES_SHA256:
        raise RuntimeError("profiles.json does not match its recorded checksum")
    doc = json.loads(raw)
    return {key: tuple(float(p) for p in probs) for key, probs in doc["profiles"].items()}


def normalize_profile(probs: Sequence[float], label: str = "profile") -> tuple[float, ...]:
    probs = [float(p) for p in probs]
    if len(probs) != len(STRATEGIES):
        raise ConfigError(f"{label}: expected {len(STRATEGIES)} probabilities, got {len(probs)}")
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise ConfigError(f"{label}: probabilities must be finite and non-negative")
    total = math.fsum(probs)
    if total <= 0:
        raise ConfigError(f"{label}: all-zero profile")
    if abs(total - 1.0) > 1e-9:
        log.warning("profile %s sums to %s; renormalizing to 1", label, total)
        probs = [p / total for p in probs]
    return tuple(probs)


def load_targets(path: Optional[os.PathLike] = None) -> dict[tuple[str, str], float]:
    """(experiment id, metric) -> target mean. Defaults to the bundled table."""
    if path is None:
        text = _data_bytes("targets.csv").decode()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(text.splitlines())
    return {(r["experiment_id"], r["metric"]): float(r["target"]) for r in rows}


def builtin_ids() -> list[str]:
    ids = []
    for env in ENVIRONMENTS.values():
        ids.append(f"env{env.name}-cda")
        ids.extend(f"env{env.name}-2mnola-d{d}" for d in env.latencies)
        ids.extend(f"env{env.name}-2mla-d{d}" for d in env.latencies if d > 0)
    return ids


def parse_experiment_id(experiment_id: str) -> tuple[Environment, str, int]:
    """``env3-2mla-d25`` -> (Env3, "2mla", 25)."""
    parts = experiment_id.split("-")
    try:
        env = ENVIRONMENTS[parts[0].removeprefix("env")]
        market = parts[1]
        latency = int(parts[2].removeprefix("d")) if len(parts) > 2 else 0
    except (KeyError, IndexError, ValueError):
        raise ConfigError(f"experiment: unknown id {experiment_id!r}") from None
    if experiment_id not in builtin_ids():
        raise ConfigError(f"experiment: unknown id {experiment_id!r}")
    return env, market, latency


def market_config(
    n_zi: int,
    arrival_rate: float,
    kappa: float,
    horizon: int,
    market: str,
    latency: int = 0,
    variant: GreedyVariant | str = GreedyVariant.BESTGUESS,
    **overrides,
) -> SimulationConfig:
    if market not in MARKETS:
        raise ConfigError(f"config: expected one of {', '.join(MARKETS)}, got {market!r}")
    if market == "cda" and latency != 0:
        raise ConfigError("latency: a single-exchange market has no SIP delay")
    try:
        return SimulationConfig(
            n_zi=n_zi,
            arrival_rate=arrival_rate,
            kappa=kappa,
            horizon=horizon,
            n_exchanges=1 if market == "cda" else 2,
            latency=latency,
            la=market == "2mla",
            variant=GreedyVariant(variant),
            **overrides,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# seeds and mixtures


def run_seed(master: int, mixture_idx: int, run_idx: int) -> int:
    """Seed of one (mixture, run) cell; no dependence on any other cell."""
    return int(np.random.SeedSequence([master, 1, mixture_idx, run_idx]).generate_state(1, np.uint64)[0])


def mixture_rng(master: int, mixture_idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, 0, mixture_idx]))


def sample_mixture(profile: Sequence[float], n_zi: int, rng: np.random.Generator) -> np.ndarray:
    """``n_zi`` independent strategy rows (0-based) drawn from ``profile``."""
    p = np.asarray(normalize_profile(profile))
    return rng.choice(len(STRATEGIES), size=n_zi, p=p)


def run_simulation(
    config: SimulationConfig,
    mixture: Sequence[int],
    seed: int,
    meta: Optional[dict] = None,
    backend: str = "kernel",
    exec_time_mode: str = "all",
) -> RunResult:
    rng = np.random.default_rng(seed)
    if backend == "kernel":
        from .kernel import run_kernel

        logs = run_kernel(config, mixture, rng).logs
    elif backend == "reference":
        logs = run_reference(config, mixture, rng).logs
    else:
        raise ValueError(f"unknown backend {backend!r}")
    meta = dict(meta or {})
    meta.setdefault("seed", seed)
    meta.setdefault("latency", config.latency)
    return aggregate_run(logs, meta, exec_time_mode)


# --------------------------------------------------------------------------
# experiment specs


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to regenerate one results file."""

    experiment_id: str
    env: str
    market: str
    latency: int
    n_zi: int
    arrival_rate: float
    kappa: float
    horizon: int
    profile: tuple[float, ...]
    mixtures: int
    runs: int
    seed: int = 0
    variant: str = GreedyVariant.BESTGUESS.value
    exec_time_mode: str = "all"
    params: dict = field(default_factory=dict)  # r_bar, shock_var, pv_var, alpha, q_max overrides

    def __post_init__(self):
        if self.mixtures < 1:
            raise ConfigError("mixtures: must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs: must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if self.exec_time_mode not in ("all", "zi-only"):
            raise ConfigError("exec_time_mode: expected 'all' or 'zi-only'")
        try:
            GreedyVariant(self.variant)
        except ValueError:
            raise ConfigError(f"variant: unknown {self.variant!r}") from None
        unknown = set(self.params) - {"r_bar", "shock_var", "pv_var", "alpha", "q_max"}
        if unknown:
            raise ConfigError(f"params: unknown keys {sorted(unknown)}")
        object.__setattr__(self, "profile", normalize_profile(self.profile, f"{self.experiment_id} profile"))
        self.sim_config()

    def sim_config(self) -> SimulationConfig:
        return market_config(
            self.n_zi, self.arrival_rate, self.kappa, self.horizon, self.market, self.latency, self.variant, **self.params
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = list(self.profile)
        d["params"] = dict(sorted(self.params.items()))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def checksum(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        """Accepts either the full form written by :meth:`to_dict` or a short form
        naming a built-in ``experiment`` id plus ``mixtures``/``runs``/``seed``.
        """
        d = dict(d)
        if "experiment" in d:
            base = builtin_spec(d.pop("experiment"), mixtures=d.get("mixtures", 1), runs=d.get("runs", 1))
            merged = base.to_dict()
            for key in ("mixtures", "runs", "seed", "variant", "exec_time_mode", "params", "profile"):
                if key in d:
                    merged[key] = d.pop(key)
            d.pop("out", None)
            if d:
                raise ConfigError(f"unexpected fields with a built-in experiment: {sorted(d)}")
            d = merged
        d.pop("out", None)
        missing = [f for f in ("experiment_id", "env", "market", "n_zi", "arrival_rate", "kappa", "horizon",
                               "profile", "mixtures", "runs") if f not in d]
        if missing:
            raise ConfigError(f"missing field(s): {', '.join(missing)}")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown field(s): {', '.join(sorted(extra))}")
        try:
            return cls(
                experiment_id=str(d["experiment_id"]),
                env=str(d["env"]),
                market=str(d["market"]),
                latency=int(d.get("latency", 0)),
                n_zi=int(d["n_zi"]),
                arrival_rate=float(d["arrival_rate"]),
                kappa=float(d["kappa"]),
                horizon=int(d["horizon"]),
                profile=tuple(d["profile"]),
                mixtures=int(d["mixtures"]),
                runs=int(d["runs"]),
                seed=int(d.get("seed", 0)),
                variant=str(d.get("variant", GreedyVariant.BESTGUESS.value)),
                exec_time_mode=str(d.get("exec_time_mode", "all")),
                params=dict(d.get("params", {})),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: os.PathLike) -> "ExperimentSpec":
        return cls.from_json(Path(path).read_text())


def builtin_spec(
    experiment_id: str,
    mixtures: int = 500,
    runs: int = 100,
    seed: int = 0,
    variant: str = GreedyVariant.BESTGUESS.value,
    exec_time_mode: str = "all",
) -> ExperimentSpec:
    env, market, latency = parse_experiment_id(experiment_id)
    return ExperimentSpec(
        experiment_id=experiment_id,
        env=env.name,
        market=market,
        latency=latency,
        n_zi=env.n_zi,
        arrival_rate=env.arrival_rate,
        kappa=env.kappa,
        horizon=env.horizon,
        profile=normalize_profile(load_profiles()[experiment_id], experiment_id),
        mixtures=mixtures,
        runs=runs,
        seed=seed,
        variant=GreedyVariant(variant).value,
        exec_time_mode=exec_time_mode,
    )


def spec_mixture(spec: ExperimentSpec, mixture_idx: int) -> np.ndarray:
    return sample_mixture(spec.profile, spec.n_zi, mixture_rng(spec.seed, mixture_idx))


def run_cell(spec: ExperimentSpec, mixture_idx: int, run_idx: int, backend: str = "kernel") -> RunResult:
    """One (mixture, run) cell, reproducible in isolation."""
    seed = run_seed(spec.seed, mixture_idx, run_idx)
    meta = {
        "experiment_id": spec.experiment_id,
        "env": spec.env,
        "config": spec.market,
        "latency": spec.latency,
        "mixture_idx": mixture_idx,
        "run_idx": run_idx,
        "seed": seed,
    }
    return run_simulation(spec.sim_config(), spec_mixture(spec, mixture_idx), seed, meta, backend, spec.exec_time_mode)


# --------------------------------------------------------------------------
# batch runner


def code_hash() -> str:
    """Digest of the package sources and data files, recorded in manifests."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.suffix in (".py", ".json", ".csv") and "__pycache__" not in path.parts:
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def _mixture_task(args) -> list[list[str]]:
    spec_dict, mixture_idx, run_ids, backend = args
    spec = ExperimentSpec.from_dict(spec_dict)
    return [run_cell(spec, mixture_idx, r, backend).to_row() for r in run_ids]


def read_results(path: os.PathLike) -> list[RunResult]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RunResult.columns():
            raise ConfigError(f"{path}: columns do not match the results schema")
        return [RunResult.from_row(row) for row in reader]


def _read_rows(path: Path) -> dict[tuple[int, int], list[str]]:
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if header != RunResult.columns():
            raise ResumeConflict(f"{path}: unexpected header")
        for row in reader:
            if len(row) != len(header):
                continue  # torn final line from an interrupted write
            rows[(int(row[4]), int(row[5]))] = row
    return rows


def run_experiment(
    spec: ExperimentSpec,
    out_dir: os.PathLike,
    jobs: int = 1,
    backend: str = "kernel",
    progress: bool = True,
) -> Path:
    """Run every (mixture, run) cell of ``spec`` into ``out_dir``.

    Cells already present in the output are skipped. The finished file is
    sorted by (mixture, run), so its bytes do not depend on ``jobs``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / RESULTS_FILE
    manifest_path = out / MANIFEST_FILE
    digest = code_hash()

    manifest = {
        "spec": spec.to_dict(),
        "spec_sha256": spec.checksum(),
        "code_sha256": digest,
        "profiles_sha256": PROFILES_SHA256,
        "backend": backend,
        "variant": spec.variant,
    }
    done: dict[tuple[int, int], list[str]] = {}
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        for key in ("spec_sha256", "code_sha256"):
            if old.get(key) != manifest[key]:
                raise ResumeConflict(f"{out}: existing output has a different {key}; refusing to resume")
        if results_path.exists():
            done = _read_rows(results_path)
    elif results_path.exists():
        raise ResumeConflict(f"{out}: results without a manifest; refusing to resume")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    tasks = []
    for m in range(spec.mixtures):
        todo = [r for r in range(spec.runs) if (m, r) not in done]
        if todo:
            tasks.append((spec.to_dict(), m, todo, backend))
    total = spec.mixtures * spec.runs
    if tasks:
        log.info("%s: %d of %d runs to do", spec.experiment_id, sum(len(t[2]) for t in tasks), total)
        # rewrite what we have (dropping any torn line) and append as results arrive
        with open(results_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RunResult.columns())
            writer.writerows(done.values())
        with open(results_path, "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for rows in _map(tasks, jobs):
                try:
                    writer.writerows(rows)
                    fh.flush()
                except OSError as exc:
                    m, r = int(rows[0][4]), int(rows[0][5])
                    raise OSError(f"writing mixture {m} run {r} failed: {exc}") from exc
                for row in rows:
                    done[(int(row[4]), int(row[5]))] = row
                if progress:
                    log.info("%s: %d/%d runs", spec.experiment_id, len(done), total)

    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RunResult.columns())
        for key in sorted(done):
            writer.writerow(done[key])
    manifest["complete"] = len(done) == total
    manifest["results_sha256"] = hashlib.sha256(results_path.read_bytes()).hexdigest()
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return results_path


def _map(tasks: list, jobs: int) -> Iterable[list[list[str]]]:
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield _mixture_task(task)
        return
    import multiprocessing

    with multiprocessing.get_context("spawn").Pool(jobs) as pool:
        yield from pool.imap_unordered(_mixture_task, tasks)
