"""Command-line entry point.

Subcommands: gen-data, augment-dump, train, eval, experiment, oracle-check.
Every run resolves its configuration (JSON file plus flag overrides, unknown
keys fatal) and writes the resolved config into the output directory before
doing any work, so any output directory is self-reproducing.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 training/experiment failure, 5 oracle-check verdict failed.
"""

from __future__ import annotations

import argparse
import difflib
import json
import os
import sys
from dataclasses import replace

from . import __version__
from .data import (
    Dataset,
    Vocabulary,
    build_vocab,
    gen_minigrammar,
    gen_reversal,
    load_scan_file,
    load_tsv,
    make_primitive_split,
    save_scan_file,
)
from .errors import ConfigError, ParameterError, ParseError, SeqmixError
from .mixer import augment_batch, dump_mixed_example
from .model import load_checkpoint, save_checkpoint
from .oracle import run_oracle_check
from .sampling import Method, MethodConfig, RngStream
from .trainer import (
    METHOD_ORDER,
    TrainConfig,
    encode_dataset,
    evaluate_bleu,
    evaluate_exact_match,
    greedy_decode_batch,
    reference_tokens,
    run_experiment,
    train,
)

# key -> (type, default); the single source of truth for config files
SCHEMA: dict[str, tuple[type, object]] = {
    "seed": (int, 0),
    "out": (str, None),
    "data": (str, None),
    "data_format": (str, "scan"),
    "eval_data": (str, None),
    "checkpoint": (str, None),
    "dataset": (str, "minigrammar"),
    "split": (str, "jump"),
    "method": (str, "seqmix"),
    "alpha": (float, 1.0),
    "eta": (float, 1.0),
    "rho": (float, 0.1),
    "p_mix": (float, 1.0),
    "worddrop_source_only": (bool, False),
    "lr": (float, 1e-3),
    "batch_size": (int, 32),
    "epochs": (int, 30),
    "clip_norm": (float, 5.0),
    "hidden_size": (int, 64),
    "embed_size": (int, 32),
    "eval_every": (int, 1),
    "val_fraction": (float, 0.1),
    "max_decode_len": (int, 64),
    "expansion_factor": (int, 1),
    "attention": (bool, False),
    "methods": (list, [m.value for m in METHOD_ORDER]),
    "seeds": (list, [0, 1, 2]),
    "oracle_trials": (int, 100),
    "mc_samples": (int, 10_000),
    "dump_limit": (int, 100),
    "n_pairs": (int, 2000),
    "vocab_size": (int, 20),
    "min_len": (int, 3),
    "max_len": (int, 8),
}


def parse_config(config_path: str | None, overrides: dict) -> dict:
    """Resolve file values, defaults, and flag overrides (flags win)."""
    resolved = {key: default for key, (_, default) in SCHEMA.items()}
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config {config_path} must be a JSON object")
        for key, value in file_cfg.items():
            if key == "task":
                continue  # the subcommand names the task
            if key not in SCHEMA:
                near = difflib.get_close_matches(key, SCHEMA, n=1)
                hint = f"; did you mean {near[0]!r}?" if near else ""
                raise ConfigError(f"unknown config key {key!r}{hint}")
            typ, _ = SCHEMA[key]
            if value is not None:
                if typ is float and isinstance(value, int) and not isinstance(value, bool):
                    value = float(value)
                if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
                    raise ConfigError(f"config key {key!r} expects {typ.__name__}, got {value!r}")
            resolved[key] = value
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


def method_config(cfg: dict) -> MethodConfig:
    try:
        method = Method(cfg["method"])
    except ValueError:
        raise ConfigError(
            f"unknown method {cfg['method']!r}; known: {[m.value for m in Method]}"
        ) from None
    return MethodConfig(
        method=method,
        alpha=cfg["alpha"],
        eta=cfg["eta"],
        rho=cfg["rho"],
        p_mix=cfg["p_mix"],
        worddrop_source_only=cfg["worddrop_source_only"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        method=method_config(cfg),
        seed=cfg["seed"],
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        clip_norm=cfg["clip_norm"],
        hidden_size=cfg["hidden_size"],
        embed_size=cfg["embed_size"],
        eval_every=cfg["eval_every"],
        val_fraction=cfg["val_fraction"],
        max_decode_len=cfg["max_decode_len"],
        expansion_factor=cfg["expansion_factor"],
        attention=cfg["attention"],
    )


def load_dataset(cfg: dict) -> Dataset:
    if cfg["data"]:
        if cfg["data_format"] == "tsv":
            return load_tsv(cfg["data"])
        return load_scan_file(cfg["data"])
    if cfg["dataset"] == "minigrammar":
        return gen_minigrammar()
    if cfg["dataset"] == "reversal":
        return gen_reversal(
            n_pairs=cfg["n_pairs"],
            vocab_size=cfg["vocab_size"],
            min_len=cfg["min_len"],
            max_len=cfg["max_len"],
            seed=cfg["seed"],
        )
    raise ConfigError(f"unknown builtin dataset {cfg['dataset']!r}")


def split_dataset(data: Dataset, cfg: dict) -> tuple[Dataset, Dataset | None]:
    if cfg["split"]:
        return make_primitive_split(data, cfg["split"])
    return data, None


def atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def prepare_out(cfg: dict, task: str) -> str:
    out = cfg["out"]
    if not out:
        raise ConfigError("missing required key 'out'")
    os.makedirs(out, exist_ok=True)
    resolved = dict(cfg, task=task, version=__version__)
    atomic_write(os.path.join(out, "resolved_config.json"), json.dumps(resolved, indent=2) + "\n")
    return out


def write_dataset_hash(out: str, data: Dataset) -> None:
    atomic_write(os.path.join(out, "dataset_hash.txt"), f"{data.content_hash:016x}\n")


def save_vocab(vocab: Vocabulary, path: str) -> None:
    atomic_write(path, "\n".join(vocab.tokens) + "\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        return Vocabulary.from_ordered_tokens(line.rstrip("\n") for line in fh if line)


def cmd_gen_data(cfg: dict) -> int:
    out = prepare_out(cfg, "gen-data")
    data = load_dataset(cfg)
    write_dataset_hash(out, data)
    save_scan_file(data, os.path.join(out, "data.scan"))
    train_data, test_data = split_dataset(data, cfg)
    if test_data is not None:
        save_scan_file(train_data, os.path.join(out, "train.scan"))
        save_scan_file(test_data, os.path.join(out, "test.scan"))
    print(f"wrote {len(data)} examples to {out} (hash {data.content_hash:016x})")
    return 0


def cmd_augment_dump(cfg: dict) -> int:
    out = prepare_out(cfg, "augment-dump")
    data = load_dataset(cfg)
    write_dataset_hash(out, data)
    vocab = build_vocab(data)
    pairs = encode_dataset(data, vocab)[: cfg["dump_limit"]]
    m_cfg = method_config(cfg)
    rng = RngStream(cfg["seed"], ("augment",))
    lines = []
    for b0 in range(0, len(pairs), cfg["batch_size"]):
        for ex in augment_batch(m_cfg, pairs[b0:b0 + cfg["batch_size"]], len(vocab), rng):
            lines.append(dump_mixed_example(ex))
    atomic_write(os.path.join(out, "augmented.tsv"), "\n".join(lines) + "\n")
    print(f"dumped {len(lines)} augmented examples to {out}/augmented.tsv")
    return 0


def cmd_train(cfg: dict) -> int:
    out = prepare_out(cfg, "train")
    data = load_dataset(cfg)
    write_dataset_hash(out, data)
    train_data, test_data = split_dataset(data, cfg)
    t_cfg = train_config(cfg)
    params, vocab, records = train(train_data, t_cfg)
    atomic_write(os.path.join(out, "metrics.jsonl"), "\n".join(r.to_json() for r in records) + "\n")
    save_checkpoint(params, os.path.join(out, "checkpoint.bin"))
    save_vocab(vocab, os.path.join(out, "vocab.txt"))
    result = {"final_loss": records[-1].loss, "val_exact_match": records[-1].exact_match}
    if test_data is not None:
        test_pairs = encode_dataset(test_data, vocab)
        result["test_exact_match"] = evaluate_exact_match(params, test_pairs, t_cfg.max_decode_len)
    atomic_write(os.path.join(out, "results.json"), json.dumps(result, indent=2) + "\n")
    print(json.dumps(result))
    return 0


def cmd_eval(cfg: dict) -> int:
    out = prepare_out(cfg, "eval")
    if not cfg["checkpoint"]:
        raise ConfigError("missing required key 'checkpoint'")
    ckpt_dir = os.path.dirname(cfg["checkpoint"])
    params = load_checkpoint(cfg["checkpoint"])
    vocab = load_vocab(os.path.join(ckpt_dir, "vocab.txt"))
    data = load_scan_file(cfg["eval_data"]) if cfg["eval_data"] else split_dataset(load_dataset(cfg), cfg)[1]
    if data is None:
        raise ConfigError("eval needs 'eval_data' or a split to evaluate on")
    pairs = encode_dataset(data, vocab)
    decoded = greedy_decode_batch([p.source for p in pairs], params, cfg["max_decode_len"])
    refs = [reference_tokens(p) for p in pairs]
    exact = sum(1 for h, r in zip(decoded, refs) if h == r) / len(pairs)
    bleu = evaluate_bleu(decoded, refs)
    result = {"exact_match": exact, "bleu": bleu, "examples": len(pairs)}
    atomic_write(os.path.join(out, "eval.json"), json.dumps(result, indent=2) + "\n")
    print(json.dumps(result))
    return 0


def cmd_experiment(cfg: dict) -> int:
    out = prepare_out(cfg, "experiment")
    data = load_dataset(cfg)
    write_dataset_hash(out, data)
    train_data, test_data = split_dataset(data, cfg)
    if test_data is None:
        raise ConfigError("experiment requires a 'split'")
    methods = tuple(Method(m) for m in cfg["methods"])
    report = run_experiment(
        train_data,
        test_data,
        train_config(cfg),
        methods=methods,
        seeds=tuple(cfg["seeds"]),
    )
    atomic_write(os.path.join(out, "report.tsv"), report.render_tsv())
    atomic_write(os.path.join(out, "report.txt"), report.render_text())
    for cell in report.cells:
        name = f"metrics_{cell.method.value}_{cell.seed}.jsonl"
        body = "\n".join(r.to_json() for r in cell.records)
        atomic_write(os.path.join(out, name), body + "\n" if body else "")
    print(report.render_text())
    failed = [c for c in report.cells if c.error is not None]
    for cell in failed:
        print(f"FAILED cell {cell.method.value}/seed={cell.seed}: {cell.error}", file=sys.stderr)
    return 4 if failed else 0


def cmd_oracle_check(cfg: dict) -> int:
    out = prepare_out(cfg, "oracle-check")
    report = run_oracle_check(
        n_trials=cfg["oracle_trials"], mc_samples=cfg["mc_samples"], seed=cfg["seed"]
    )
    lines = [
        json.dumps(
            {
                "lambda": t.lam,
                "log_marginal": t.log_marginal,
                "expected_logprob": t.expected_logprob,
                "mc_estimate": t.mc_estimate,
                "mc_stderr": t.mc_stderr,
                "jensen_holds": t.jensen_holds,
                "mc_within_3se": t.mc_within_3se,
            }
        )
        for t in report.trials
    ]
    atomic_write(os.path.join(out, "oracle.jsonl"), "\n".join(lines) + "\n")
    verdict = "PASS" if report.passed() else "FAIL"
    summary = (
        f"{verdict}: jensen {report.jensen_count}/{len(report.trials)}, "
        f"mc-within-3se {report.mc_count}/{len(report.trials)}, "
        f"endpoint gap {report.endpoint_gap:.3e}\n"
    )
    atomic_write(os.path.join(out, "verdict.txt"), summary)
    print(summary, end="")
    return 0 if report.passed() else 5


COMMANDS = {
    "gen-data": cmd_gen_data,
    "augment-dump": cmd_augment_dump,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqmix", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="task", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int)
        p.add_argument("--method", choices=[m.value for m in Method])
        p.add_argument("--alpha", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--out")
        p.add_argument("--data")
        p.add_argument("--split")
        p.add_argument("--epochs", type=int)
        p.add_argument("--checkpoint")
        p.add_argument("--dataset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key.replace("-", "_"))
        for key in ("seed", "method", "alpha", "eta", "rho", "out", "data", "split",
                    "epochs", "checkpoint", "dataset")
    }
    try:
        cfg = parse_config(args.config, overrides)
        return COMMANDS[args.task](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ParameterError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SeqmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
