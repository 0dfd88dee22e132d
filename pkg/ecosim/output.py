import json
import logging
import os
from typing import Any, Dict

from aiofile import async_open


log = logging.getLogger(__name__)
EVENTS_FILE = 'events.jsonl'
METRICS_FILE = 'metrics.csv'
SUMMARY_FILE = 'summary.json'
RUN_FILES = (EVENTS_FILE, METRICS_FILE, SUMMARY_FILE)


async def write_text(path: str, text: str):
    async with async_open(path, 'w', encoding='utf-8') as afp:
        await afp.write(text)
    log.debug(f'written: path={path}, size={len(text)}')


def dump_json(value: Dict[str, Any]) -> str:
    return json.dumps(value, indent=2, sort_keys=True, ensure_ascii=False) + '\n'


def prepare_out_dir(out_dir: str, force: bool = False):
    """Create out_dir; refuse to overwrite a previous run unless forced."""
    os.makedirs(out_dir, exist_ok=True)
    existing = [name for name in RUN_FILES if os.path.exists(os.path.join(out_dir, name))]
    if existing and not force:
        raise FileExistsError(f'Run outputs already exist in {out_dir}: {", ".join(existing)}')


async def write_run(out_dir: str, events_jsonl: str, metrics_csv: str,
                    summary: Dict[str, Any], force: bool = False):
    prepare_out_dir(out_dir, force=force)
    for name, text in ((EVENTS_FILE, events_jsonl), (METRICS_FILE, metrics_csv),
                       (SUMMARY_FILE, dump_json(summary))):
        path = os.path.join(out_dir, name)
        await write_text(path, text)
        log.info(f'wrote {path}')
