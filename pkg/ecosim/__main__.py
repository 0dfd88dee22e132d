from argparse import ArgumentParser
import asyncio
from concurrent.futures import ProcessPoolExecutor
import dataclasses
import json
import logging
import re
import sys

from ecosim import config, ecosystem, evolution, metrics, output
from ecosim.exception import CommandError, EXIT_OK, EXIT_USAGE, reraise_command_error
from ecosim.model import Agent, validate_description, validate_request


log = logging.getLogger(__name__)


def init_logging(debug=False):
    formatter = logging.Formatter('%(asctime)s.%(msecs)03d %(levelname)s %(threadName)s: '
                                  '[%(name)s] %(message)s', datefmt="%Y-%m-%d %H:%M:%S")
    handler = logging.StreamHandler()
    handler.setFormatter(formatter)
    root_logger = logging.getLogger()
    if debug:
        handler.setLevel(logging.DEBUG)
        root_logger.setLevel(logging.DEBUG)
    else:
        handler.setLevel(logging.INFO)
        root_logger.setLevel(logging.INFO)
    root_logger.addHandler(handler)


def parse_args(args=None):
    '''Parse command line'''

    parser = ArgumentParser(prog='ecosim')
    parser.add_argument('--debug', action='store_true', default=False,
                        help='Enable debugging output')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run one simulation and write its artifacts')
    run.add_argument('--config', default=None,
                     help='Configuration file (key = value). Default: built-in defaults')
    run.add_argument('--seed', type=int, default=0,
                     help='Root random seed. default: 0')
    run.add_argument('--rounds', type=parse_positive, default=200,
                     help='Number of rounds. default: 200')
    run.add_argument('--out', required=True,
                     help='Output directory for events.jsonl, metrics.csv and summary.json')
    run.add_argument('--migration-enabled', type=config.parse_bool, default=None,
                     help='Enable agent migration (true/false). default: from config')
    run.add_argument('--force', action='store_true', default=False,
                     help='Overwrite outputs of a previous run')
    run.set_defaults(func=cmd_run)

    oracle = subparsers.add_parser('oracle', help='Exhaustively solve a small instance')
    oracle.add_argument('--agent', action='append', default=[], type=config.parse_tokens,
                        help='Agent description as comma-separated tokens (repeatable)')
    oracle.add_argument('--request', type=config.parse_tokens, default=None,
                        help='Request as comma-separated tokens')
    oracle.add_argument('--fixture', default=None,
                        help='JSON file with "agents", "request" and optional "l_bound"')
    oracle.add_argument('--l-bound', type=int, default=None,
                        help='Longest sequence to enumerate. default: 4')
    oracle.add_argument('--config', default=None,
                        help='Configuration file supplying GA parameters')
    oracle.set_defaults(func=cmd_oracle)

    compare = subparsers.add_parser('compare', help='Paired runs with migration on and off')
    compare.add_argument('--config', default=None,
                         help='Configuration file (key = value)')
    compare.add_argument('--seeds', type=parse_seeds, required=True,
                         help='Seeds as "1,2,3" or "1-20"')
    compare.add_argument('--rounds', type=parse_positive, default=150,
                         help='Rounds per run. default: 150')
    compare.add_argument('--warmup', type=int, default=50,
                         help='Rounds excluded from the measurement. default: 50')
    compare.add_argument('--jobs', type=parse_positive, default=1,
                         help='Runs to execute in parallel processes. default: 1')
    compare.set_defaults(func=cmd_compare)
    return parser.parse_args(args)


def parse_positive(value):
    number = int(value)
    if number < 1:
        raise ValueError(f'Expected a positive integer: {value}')
    return number


def parse_seeds(value):
    seeds = []
    for part in value.split(','):
        part = part.strip()
        m = re.match(r'^(-?\d+)-(-?\d+)$', part)
        if m:
            seeds.extend(range(int(m.group(1)), int(m.group(2)) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def load(options, **overrides):
    cfg = config.load_config(options.config)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides).validate()
    return cfg


def cmd_run(options):
    cfg = load(options, migration_enabled=options.migration_enabled)
    threads = config.threads_from_env()
    output.prepare_out_dir(options.out, force=options.force)
    result = ecosystem.run_simulation(cfg, options.seed, options.rounds, threads=threads)
    summary = metrics.summarize(result.ecosystem)
    summary['config'] = config.flatten(cfg)
    asyncio.run(output.write_run(options.out, result.event_log.to_jsonl(),
                                 metrics.format_csv(result.metrics), summary,
                                 force=options.force))
    return EXIT_OK


def oracle_instance(options):
    agents, request, l_bound = options.agent, options.request, options.l_bound
    if options.fixture is not None:
        with open(options.fixture, 'r', encoding='utf-8') as f:
            fixture = json.load(f)
        agents = [tuple(a) for a in fixture['agents']]
        request = tuple(fixture['request'])
        l_bound = l_bound if l_bound is not None else fixture.get('l_bound')
    if not agents or not request:
        raise CommandError(EXIT_USAGE, 'oracle needs at least one --agent and a --request')
    return agents, request, l_bound if l_bound is not None else evolution.ORACLE_LENGTH_MAX


def cmd_oracle(options):
    cfg = load(options)
    descriptions, request_tokens, l_bound = oracle_instance(options)
    agents = [Agent(i, validate_description(tokens, cfg.alphabet_size), 0, [0])
              for i, tokens in enumerate(descriptions)]
    req = validate_request(request_tokens, 0, 0, cfg.alphabet_size)
    fitness, seq = evolution.brute_force_oracle(agents, req, cfg.ga, l_bound)
    print(json.dumps({'fitness': fitness, 'sequence': list(seq.agents)}))
    return EXIT_OK


def compare_runs(cfg, seeds, rounds, warmup, threads=1, jobs=1):
    arms = [(dataclasses.replace(cfg, migration_enabled=enabled), seed, rounds, warmup, threads)
            for seed in seeds for enabled in (True, False)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            measured = list(executor.map(ecosystem.measure_run, arms))
    else:
        measured = [ecosystem.measure_run(arm) for arm in arms]
    pairs = []
    for on, off in zip(measured[0::2], measured[1::2]):
        pair = {
            'seed': on['seed'],
            'on': on['mean'],
            'off': off['mean'],
            'on_executed': on['executed_mean'],
            'off_executed': off['executed_mean'],
            'off_links_created': off['links_created'],
        }
        log.info(f'compare: seed={pair["seed"]}, on={pair["on"]}, off={pair["off"]}')
        pairs.append(pair)
    complete = [p for p in pairs if p['on'] is not None and p['off'] is not None]
    on = sum(p['on'] for p in complete) / len(complete) if complete else None
    off = sum(p['off'] for p in complete) / len(complete) if complete else None
    return {
        'seeds': list(seeds),
        'pairs': pairs,
        'migration_on': on,
        'migration_off': off,
        'ratio': on / off if on is not None and off else None,
    }


def cmd_compare(options):
    if len(options.seeds) < 2:
        raise CommandError(EXIT_USAGE, 'compare needs at least two seeds')
    cfg = load(options)
    report = compare_runs(cfg, options.seeds, options.rounds, options.warmup,
                          threads=config.threads_from_env(), jobs=options.jobs)
    print(json.dumps(report))
    return EXIT_OK


def main(args=None):
    options = parse_args(args)
    init_logging(options.debug)
    try:
        try:
            return options.func(options)
        except Exception as e:
            reraise_command_error(e)
    except CommandError as e:
        sys.exit(e.status)


if __name__ == '__main__':
    sys.exit(main())
