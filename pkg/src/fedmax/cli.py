"""Command-line experiment runner.

``fedmax run config.json`` trains one model and writes the trace CSV named
by ``output_path`` together with ``<output_path>.summary.json``.
``fedmax sweep config.json --i 1,32,64 --seeds 0,1,2`` repeats the run for
every (algorithm, window, seed) combination and writes one summary table.

Config schema (JSON object)::

    algorithm        "npa" | "coda_plus" | "codasca"
    k_clients        int >= 1
    partition        "homogeneous" | "heterogeneous"
    data             {"source": "synthetic", "n", "d", "imratio", ...SynthSpec fields}
                     or {"source": "csv", "path": "train.csv"}
    test_fraction    float in (0, 1)
    scorer           {"kind": "linear"} or {"kind": "mlp1", "hidden_dim", "activation"}
    schedule_mode    "practical" | "theory"
    practical        {"eta0", "decay_every_t0", "decay_factor", "window_i", "total_iters",
                      "prox_coeff", "eta_global", "batch_m"}
    theory           {"ell", "big_l", "mu", "mu2", "stages", plus "eta0" (npa, coda_plus)
                      or "eta_tilde" and "i0" (codasca)}
    seed             int >= 0 (data, partition, split and training)
    eval_every       int >= 1
    output_path      trace CSV path
    codasca_output   "random_round" | "last"

Exit codes: 0 success, 2 invalid config or input file, 3 divergence,
4 file system error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .algorithms import OUTPUT_MODES, RUNNERS, RunConfig, RunResult
from .core import ConfigError, DivergenceError, FedmaxError, IoError, ParseError
from .data import (
    SynthSpec,
    generate_synthetic,
    load_csv,
    partition_heterogeneous,
    partition_homogeneous,
    train_test_split,
)
from .models import ScorerSpec
from .schedules import (
    StageSchedule,
    TheoryConstants,
    practical_schedule,
    theory_schedule_coda_plus,
    theory_schedule_codasca,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
SWEEP_COLUMNS = ("algorithm", "I", "seed", "final_auc", "comm_rounds")


@dataclass(frozen=True)
class PracticalParams:
    eta0: float
    decay_every_t0: int
    decay_factor: float
    window_i: int
    total_iters: int
    prox_coeff: float = 0.0
    eta_global: float = 1.0
    batch_m: int = 1


@dataclass(frozen=True)
class TheoryParams:
    ell: float
    big_l: float
    mu: float
    mu2: float
    stages: int
    eta0: float | None = None
    eta_tilde: float | None = None
    i0: int | None = None


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{where}' must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"'{where}': {exc}") from None


def _check_type(value, types, name):
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigError(f"'{name}' has the wrong type ({type(value).__name__})")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    k_clients: int
    partition: str
    data: dict
    schedule_mode: str
    output_path: str
    practical: PracticalParams | None = None
    theory: TheoryParams | None = None
    scorer: dict = field(default_factory=lambda: {"kind": "linear"})
    test_fraction: float = 0.2
    seed: int = 0
    eval_every: int = 100
    codasca_output: str = "random_round"

    def __post_init__(self):
        if self.algorithm not in RUNNERS:
            raise ConfigError(f"algorithm must be one of {sorted(RUNNERS)}")
        _check_type(self.k_clients, int, "k_clients")
        if self.k_clients < 1:
            raise ConfigError("k_clients must be >= 1")
        if self.partition not in ("homogeneous", "heterogeneous"):
            raise ConfigError("partition must be 'homogeneous' or 'heterogeneous'")
        if self.schedule_mode not in ("practical", "theory"):
            raise ConfigError("schedule_mode must be 'practical' or 'theory'")
        if self.codasca_output not in OUTPUT_MODES:
            raise ConfigError(f"codasca_output must be one of {OUTPUT_MODES}")
        _check_type(self.seed, int, "seed")
        _check_type(self.eval_every, int, "eval_every")
        if self.seed < 0 or self.eval_every < 1:
            raise ConfigError("seed must be >= 0 and eval_every >= 1")
        _check_type(self.test_fraction, (int, float), "test_fraction")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not isinstance(self.output_path, str) or not self.output_path:
            raise ConfigError("output_path must be a non-empty string")
        source = self.data.get("source") if isinstance(self.data, dict) else None
        if source == "synthetic":
            self.synth_spec()
        elif source == "csv":
            if not isinstance(self.data.get("path"), str) or set(self.data) != {"source", "path"}:
                raise ConfigError("csv data needs exactly 'source' and 'path'")
        else:
            raise ConfigError("data.source must be 'synthetic' or 'csv'")
        self.scorer_spec(1)
        if self.schedule_mode == "practical" and self.practical is None:
            raise ConfigError("schedule_mode 'practical' needs a 'practical' block")
        if self.schedule_mode == "theory":
            th = self.theory
            if th is None:
                raise ConfigError("schedule_mode 'theory' needs a 'theory' block")
            if self.algorithm == "codasca" and (th.eta_tilde is None or th.i0 is None):
                raise ConfigError("theory codasca needs 'eta_tilde' and 'i0'")
            if self.algorithm != "codasca" and th.eta0 is None:
                raise ConfigError(f"theory {self.algorithm} needs 'eta0'")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        if "practical" in raw and raw["practical"] is not None:
            raw["practical"] = _build(PracticalParams, raw["practical"], "practical")
        if "theory" in raw and raw["theory"] is not None:
            raw["theory"] = _build(TheoryParams, raw["theory"], "theory")
        return _build(cls, raw, "config")

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("practical", "theory"):
            if out[key] is None:
                del out[key]
        return out

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def synth_spec(self) -> SynthSpec:
        params = {k: v for k, v in self.data.items() if k != "source"}
        spec = _build(SynthSpec, params, "data")
        spec.validate()
        return spec

    def scorer_spec(self, input_dim: int) -> ScorerSpec:
        sc = dict(self.scorer) if isinstance(self.scorer, dict) else None
        if sc is None:
            raise ConfigError("'scorer' must be an object")
        kind = sc.pop("kind", "linear")
        if kind == "linear" and not sc:
            return ScorerSpec.linear(input_dim)
        if kind == "mlp1" and set(sc) <= {"hidden_dim", "activation"} and "hidden_dim" in sc:
            try:
                return ScorerSpec("mlp1", input_dim, sc["hidden_dim"], sc.get("activation", "tanh"))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad scorer: {exc}") from None
        raise ConfigError("scorer must be {'kind': 'linear'} or {'kind': 'mlp1', 'hidden_dim': H}")

    def schedule(self, window: int | None = None) -> StageSchedule:
        """Stage schedule, with the window optionally overridden (for sweeps)."""
        if self.schedule_mode == "practical":
            pr = self.practical
            sched = practical_schedule(
                pr.eta0, pr.decay_every_t0, pr.decay_factor, pr.window_i if window is None else window,
                pr.total_iters, prox_coeff=pr.prox_coeff, eta_global=pr.eta_global, batch_m=pr.batch_m,
            )
            return sched
        th = self.theory
        tc = TheoryConstants(th.ell, th.big_l, th.mu, th.mu2)
        if self.algorithm == "codasca":
            return theory_schedule_codasca(tc, th.eta_tilde, th.i0 if window is None else window,
                                           self.k_clients, th.stages)
        sched = theory_schedule_coda_plus(tc, th.eta0, self.k_clients, self.partition == "heterogeneous",
                                          th.stages)
        return sched if window is None else sched.with_window(window)

    def replace(self, **changes) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update(changes)
        return ExperimentConfig.from_dict(raw)


def prepare(config: ExperimentConfig):
    """Load or draw the data, split it and partition the training part."""
    if config.data["source"] == "synthetic":
        data = generate_synthetic(config.synth_spec(), config.seed)
    else:
        data = load_csv(config.data["path"])
    train, test = train_test_split(data, config.test_fraction, config.seed)
    if config.partition == "heterogeneous":
        shards = partition_heterogeneous(train, config.k_clients, config.seed)
    else:
        shards = partition_homogeneous(train, config.k_clients, config.seed)
    return shards, test


def execute(config: ExperimentConfig, window: int | None = None) -> RunResult:
    shards, test = prepare(config)
    run_cfg = RunConfig(
        config.scorer_spec(test.d), seed=config.seed, eval_every=config.eval_every,
        codasca_output=config.codasca_output,
    )
    return RUNNERS[config.algorithm](shards, config.schedule(window), run_cfg, test)


def summarize(config: ExperimentConfig, result: RunResult) -> dict:
    final = result.trace.final
    return {
        "algorithm": config.algorithm,
        "seed": config.seed,
        "final_auc": final.test_auc,
        "final_train_objective": final.train_objective,
        "final_duality_gap": final.duality_gap,
        "comm_rounds": result.ledger.rounds,
        "setup_rounds": result.ledger.setup_rounds,
        "vectors_sent": result.ledger.vectors_sent,
        "bytes_sent": result.ledger.bytes_sent,
        "total_iters": result.total_iters,
        "total_samples": result.total_samples,
    }


def _guard(fn):
    """Run ``fn`` and map library errors onto exit codes."""
    try:
        fn()
    except DivergenceError as exc:
        print(f"fedmax: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IoError, OSError) as exc:
        print(f"fedmax: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ParseError, FedmaxError, ValueError) as exc:
        print(f"fedmax: invalid configuration or input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def summary_path(output_path) -> Path:
    return Path(str(output_path) + ".summary.json")


def run_experiment(config_path) -> int:
    """Run the experiment described by a JSON config; return the exit status."""

    def go():
        config = ExperimentConfig.load(config_path)
        result = execute(config)
        result.trace.write_csv(config.output_path)
        with open(summary_path(config.output_path), "w", encoding="utf-8") as fh:
            json.dump(summarize(config, result), fh, indent=2)
            fh.write("\n")

    return _guard(go)


def sweep_rows(config: ExperimentConfig, i_values, seeds, algorithms=None) -> list[dict]:
    rows = []
    for algorithm in algorithms or [config.algorithm]:
        for window in i_values:
            for seed in seeds:
                cfg = config.replace(algorithm=algorithm, seed=seed)
                result = execute(cfg, window=window)
                rows.append({
                    "algorithm": algorithm,
                    "I": window,
                    "seed": seed,
                    "final_auc": result.trace.final.test_auc,
                    "comm_rounds": result.ledger.rounds,
                })
    return rows


def sweep_path(output_path) -> Path:
    return Path(str(output_path) + ".sweep.csv")


def run_sweep(config_path, i_values, seeds, algorithms=None, out_path=None) -> int:
    """One run per (algorithm, I, seed); the table goes to ``out_path``
    (default ``<output_path>.sweep.csv``)."""

    def go():
        config = ExperimentConfig.load(config_path)
        if not i_values or not seeds or min(i_values) < 1 or min(seeds) < 0:
            raise ConfigError("sweep needs non-empty I values >= 1 and seeds >= 0")
        rows = sweep_rows(config, i_values, seeds, algorithms)
        target = sweep_path(config.output_path) if out_path is None else Path(out_path)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for row in rows:
                writer.writerow([row["algorithm"], row["I"], row["seed"], repr(float(row["final_auc"])),
                                 row["comm_rounds"]])

    return _guard(go)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in RUNNERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithms {bad}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedmax", description="Federated min-max AUC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config", help="JSON config file")
    sweep = sub.add_parser("sweep", help="sweep communication windows and seeds")
    sweep.add_argument("config", help="JSON config file")
    sweep.add_argument("--i", type=_int_list, required=True, help="windows, e.g. 1,32,64")
    sweep.add_argument("--seeds", type=_int_list, default=[0], help="seeds, e.g. 0,1,2")
    sweep.add_argument("--algorithms", type=_name_list, default=None,
                       help="comma-separated algorithms (default: the config's)")
    sweep.add_argument("--out", default=None, help="table path (default: <output_path>.sweep.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "run":
        return run_experiment(args.config)
    return run_sweep(args.config, args.i, args.seeds, args.algorithms, args.out)


if __name__ == "__main__":
    sys.exit(main())
