#!/usr/bin/env python3
"""
Contract Market Simulator - Main Entry Point

Simulates hiring markets where principals screen agents through noisy
ability and effort signals, with and without generative-AI assistance.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import config
from utils.errors import SimulationError
from utils.logging_setup import setup_logging

logger = logging.getLogger(__name__)


def parse_sweep_values(text: str) -> List:
    """Split 'v1,v2,...' and read each item as a JSON scalar where possible."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def parse_arguments(argv: Optional[List[str]] = None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description='Contract Market Simulator - principal-agent hiring markets with AI-sharpened signals',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --config configs/baseline.json
  %(prog)s simulate --config configs/baseline.json --seed 7 --out runs/seed7
  %(prog)s sweep --config configs/baseline.json --param sigma_theta --values 0.3,0.1,0.05
  %(prog)s report --in runs/default --format md
        """
    )

    parser.add_argument(
        '--log-level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
        default=config.LOG_LEVEL,
        help=f'Logging level (default: {config.LOG_LEVEL})'
    )

    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Run an experiment config')
    simulate.add_argument('--config', type=Path, required=True, help='Path to experiment JSON config')
    simulate.add_argument('--seed', type=int, default=None, help='Override market.master_seed')
    simulate.add_argument('--out', type=Path, default=None, help='Output directory (default: from config)')

    sweep = commands.add_parser('sweep', help='Run an experiment over a parameter grid')
    sweep.add_argument('--config', type=Path, required=True, help='Path to experiment JSON config')
    sweep.add_argument('--param', required=True, help='Market parameter to vary, e.g. sigma_theta')
    sweep.add_argument('--values', type=parse_sweep_values, required=True, help='Comma-separated values')
    sweep.add_argument('--seed', type=int, default=None, help='Override market.master_seed')
    sweep.add_argument('--out', type=Path, default=None, help='Output directory (default: from config)')

    report = commands.add_parser('report', help='Render the report of a finished run')
    report.add_argument('--in', dest='input', type=Path, required=True, help='Run output directory')
    report.add_argument('--format', choices=['csv', 'json', 'md'], default='md', help='Report format (default: md)')

    return parser.parse_args(argv)


def _fail(error_msg: str, code: int) -> int:
    print(f"\n✗ ОШИБКА: {error_msg}")
    return code


def run_experiment(args) -> int:
    """simulate / sweep: parse config, run, print the output location."""
    from services.experiment_runner import parse_config, run, with_sweep

    steps = 3
    print(f"\n[1/{steps}] Чтение конфигурации: {args.config}")
    logger.info("Step 1: Parsing experiment config")
    seed = args.seed if args.seed is not None else config.seed_override()
    try:
        spec = parse_config(args.config, seed_override=seed)
        if args.command == 'sweep':
            spec = with_sweep(spec, args.param, args.values)
        if args.out is not None:
            spec = spec.model_copy(update={"output_dir": args.out})
        elif not spec.output_dir.is_absolute():
            spec = spec.model_copy(update={"output_dir": config.OUTPUT_DIR / spec.output_dir})
    except SimulationError as e:
        logger.error(f"Config rejected: {e}", exc_info=True)
        return _fail(str(e), e.exit_code)

    points = len(spec.resolved_markets())
    print(f"✓ Конфигурация принята: {points} точк(и), структуры: "
          f"{', '.join(s.value for s in spec.structures)}")
    print(f"  Seed: {spec.market.master_seed}, репликаций: {spec.market.replications}, "
          f"агентов: {spec.market.n_agents}")

    print(f"\n[2/{steps}] Симуляция рынка...")
    logger.info("Step 2: Running simulation")
    code = run(spec, workers=spec.workers or config.worker_count())
    if code != 0:
        return _fail(f"симуляция завершилась с кодом {code}. Подробности в {spec.output_dir}/run.log", code)
    print("✓ Симуляция завершена")

    print(f"\n[3/{steps}] Результаты")
    out_dir = Path(spec.output_dir)
    print("\n" + "=" * 60)
    print("ГОТОВО!")
    print("=" * 60)
    print(f"Каталог: {out_dir.absolute()}")
    for name in sorted(p.name for p in out_dir.iterdir() if p.is_file()):
        print(f"  {name}")
    print("=" * 60)
    logger.info("Experiment completed successfully")
    return 0


def run_report(args) -> int:
    """report: render or print the summary of a finished run."""
    from services.report_builder import build_report

    print(f"\n[1/1] Формирование отчёта ({args.format}): {args.input}")
    logger.info(f"Building {args.format} report for {args.input}")
    try:
        result = build_report(args.input, args.format)
    except SimulationError as e:
        logger.error(f"Report failed: {e}", exc_info=True)
        return _fail(str(e), e.exit_code)
    if args.format == 'md':
        print(f"✓ Отчёт создан: {result}")
    else:
        print(result)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    args = parse_arguments(argv)

    setup_logging(log_level=args.log_level)

    logger.info("=" * 60)
    logger.info(f"Contract Market Simulator - {args.command}")
    logger.info("=" * 60)
    logger.info(f"Log level: {args.log_level}")

    try:
        config.validate_config()

        if args.command == 'report':
            return run_report(args)
        return run_experiment(args)

    except KeyboardInterrupt:
        print("\n\n✗ Прервано пользователем")
        logger.warning("Process interrupted by user")
        return 130

    except Exception as e:
        error_msg = f"Неожиданная ошибка: {e}"
        logger.error(error_msg, exc_info=True)
        print(f"\n✗ КРИТИЧЕСКАЯ ОШИБКА: {error_msg}")
        print("Проверьте logs/app.log для подробной информации.")
        return 1


if __name__ == '__main__':
    sys.exit(main())
