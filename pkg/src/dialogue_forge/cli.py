"""Command-line entry point: simulate, analyze, compare, serve.

Every command is reproducible from its flags and input files.  Flag
precedence is flags over ``--config`` file over defaults.  Exit codes:
0 success, 1 validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path
from typing import Any

from .analyzer import CorpusMismatchError, analyze, compare
from .ontology import GoalConfig, bundled_pack_path, load_domain_pack
from .pipeline import NoiseConfig
from .session import (
    DEFAULT_MAX_TURNS,
    CorpusParseError,
    DialogueCorpus,
    SystemConfig,
    UserConfig,
    run_episodes,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _load_config_file(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file {p} does not exist")
    return json.loads(p.read_text(encoding="utf-8"))


def _flag(args: argparse.Namespace, file_cfg: dict, name: str, default):
    """flags > config file > default"""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in file_cfg:
        return file_cfg[name]
    return default


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        file_cfg = _load_config_file(args.config)
        pack = str(_flag(args, file_cfg, "pack", bundled_pack_path()))
        episodes = int(_flag(args, file_cfg, "episodes", 100))
        base_seed = int(_flag(args, file_cfg, "base_seed", 0))
        max_turns = int(_flag(args, file_cfg, "max_turns", DEFAULT_MAX_TURNS))
        workers = int(_flag(args, file_cfg, "workers", 1))
        out_dir = Path(_flag(args, file_cfg, "out", "."))
        if episodes < 1:
            print("error: --episodes must be at least 1", file=sys.stderr)
            return EXIT_VALIDATION

        noise = None
        rates = {
            "domain_confusion_rate": _flag(args, file_cfg, "domain_confusion_rate", 0.0),
            "slot_confusion_rate": _flag(args, file_cfg, "slot_confusion_rate", 0.0),
            "drop_rate": _flag(args, file_cfg, "drop_rate", 0.0),
        }
        if any(float(v) > 0 for v in rates.values()):
            noise = NoiseConfig(**{k: float(v) for k, v in rates.items()})
        system_config = SystemConfig(
            noise=noise,
            withhold_slots=tuple(args.withhold_slot or file_cfg.get("withhold_slots", [])),
        )
        goal_cfg = GoalConfig.from_dict(file_cfg.get("goal", {}))
        user_config = UserConfig(
            goal=goal_cfg,
            max_acts_per_turn=int(_flag(args, file_cfg, "max_acts_per_turn", 2)),
        )
        load_domain_pack(pack)  # fail fast with a clear message
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        corpus = run_episodes(
            pack, system_config, user_config, episodes, base_seed,
            max_turns=max_turns, workers=workers,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus_path = out_dir / "corpus.jsonl"
        corpus.save(corpus_path)
        evaluated = [log.evaluation for log in corpus.logs if log.evaluation is not None]
        n = max(1, len(corpus.logs))
        success_rate = sum(e.success for e in evaluated) / n
        f1 = sum(e.inform_f1 for e in evaluated) / n
        turns = sum(e.turn_count for e in evaluated) / n
        print(f"wrote {corpus_path} ({len(corpus.logs)} episodes)")
        print(
            f"success_rate={success_rate:.3f} inform_f1={f1:.3f} avg_turns={turns:.2f}"
        )
        return EXIT_OK
    except Exception as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        corpus = DialogueCorpus.load(args.corpus)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CorpusParseError as exc:
        print(f"error: corrupt corpus: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    pack = args.pack or corpus.pack_path
    try:
        _, db = load_domain_pack(pack)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: cannot load pack {pack!r}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        from .report import render_report, report_figures

        report = analyze(corpus, db)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        figures = report_figures(report)
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
            + "\n",
            encoding="utf-8",
        )
        (out_dir / "report.html").write_text(
            render_report(report, figures), encoding="utf-8"
        )
        figure_dir = out_dir / "figures"
        figure_dir.mkdir(exist_ok=True)
        for name, svg in figures.items():
            (figure_dir / f"{name}.svg").write_text(svg, encoding="utf-8")
        print(f"wrote {out_dir / 'report.html'}, {out_dir / 'report.json'} and "
              f"{len(figures)} figures")
        return EXIT_OK
    except Exception as exc:
        print(f"error: analysis failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.corpora) < 2:
        print("error: compare needs at least two corpora", file=sys.stderr)
        return EXIT_VALIDATION
    reports = []
    labels = []
    for path in args.corpora:
        try:
            corpus = DialogueCorpus.load(path)
            pack = args.pack or corpus.pack_path
            _, db = load_domain_pack(pack)
            reports.append(analyze(corpus, db))
        except (FileNotFoundError, CorpusParseError, ValueError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        labels.append(Path(path).stem)
    if args.labels:
        if len(args.labels) != len(reports):
            print("error: one --label per corpus required", file=sys.stderr)
            return EXIT_VALIDATION
        labels = args.labels

    try:
        comparison = compare(reports, labels)
    except CorpusMismatchError as exc:
        print(f"error: corpus mismatch: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        from .report import render_comparison

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.json").write_text(
            json.dumps(comparison, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        (out_dir / "comparison.html").write_text(
            render_comparison(comparison), encoding="utf-8"
        )
        print(f"wrote {out_dir / 'comparison.html'} and {out_dir / 'comparison.json'}")
        return EXIT_OK
    except Exception as exc:
        print(f"error: comparison failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import RegistryError, create_app, load_registry

    try:
        registry = load_registry(args.registry)
    except RegistryError as exc:
        print(f"error: invalid registry: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        ui_dir = str(candidate) if candidate.is_dir() else None
    app = create_app(registry, ui_dir=ui_dir)

    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    host, port = sock.getsockname()[:2]
    print(f"serving on http://{host}:{port}", flush=True)

    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run(sockets=[sock])
    except KeyboardInterrupt:
        pass
    finally:
        sock.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialogue-forge",
        description="Simulate, diagnose, and interactively debug task-oriented "
        "dialogue systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded batch simulations")
    sim.add_argument("--pack", help="domain pack directory (default: bundled pack)")
    sim.add_argument("--episodes", type=int, help="number of dialogues (default 100)")
    sim.add_argument("--base-seed", type=int, help="seed of episode 0 (default 0)")
    sim.add_argument("--max-turns", type=int, help="user-turn ceiling (default 20)")
    sim.add_argument("--max-acts-per-turn", type=int, help="user acts per turn (default 2)")
    sim.add_argument("--domain-confusion-rate", type=float,
                     help="understanding noise: domain confusion probability")
    sim.add_argument("--slot-confusion-rate", type=float,
                     help="understanding noise: slot confusion probability")
    sim.add_argument("--drop-rate", type=float,
                     help="understanding noise: act drop probability")
    sim.add_argument("--withhold-slot", action="append",
                     help="policy never informs this slot (repeatable; diagnostic)")
    sim.add_argument("--workers", type=int, help="parallel episode workers (default 1)")
    sim.add_argument("--out", help="output directory (default .)")
    sim.add_argument("--config", help="JSON config file; flags take precedence")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="compute the statistics report for a corpus")
    ana.add_argument("--corpus", required=True, help="corpus.jsonl path")
    ana.add_argument("--out", default=".", help="output directory")
    ana.add_argument("--pack", help="override the pack path recorded in the corpus")
    ana.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare", help="compare systems evaluated on shared goals")
    cmp_.add_argument("corpora", nargs="+", help="two or more corpus.jsonl paths")
    cmp_.add_argument("--out", default=".", help="output directory")
    cmp_.add_argument("--label", dest="labels", action="append",
                      help="display label per corpus (repeatable)")
    cmp_.add_argument("--pack", help="override the pack path recorded in the corpora")
    cmp_.set_defaults(func=cmd_compare)

    srv = sub.add_parser("serve", help="host the interactive debugging service")
    srv.add_argument("--registry", help="component registry file "
                     "(default: $DIALOGUE_FORGE_REGISTRY or the bundled registry)")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8810)
    srv.add_argument("--ui-dir", help="directory of built frontend assets")
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
