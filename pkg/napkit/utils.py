"""Utility functions for napkit"""

import functools
import importlib.util
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Union

import click
import pandas as pd
from pandera.errors import SchemaError as FrameSchemaError
from schema import SchemaError


def ensure_path_exists(path):
    """Make sure a directory exists and is a Path object."""
    path_obj = Path(path)
    path_obj.mkdir(exist_ok=True, parents=True)
    return path_obj


def resolve_rel_path(file_rel_path) -> Path:
    """Resolve the full path from a potential relative path to the local or parent directory."""
    full_path = (Path.cwd() / file_rel_path).resolve()
    if not full_path.exists():
        full_path = (Path.cwd().parent / file_rel_path).resolve()
    return full_path


def load_module_from_path(file_path):
    """Use importlib to load a module from a .py file path."""
    module_path = resolve_rel_path(file_path)
    assert module_path.suffix == ".py", (
        f"Inappropriate file type: {module_path.suffix} ({file_path})")
    module_name = module_path.stem

    spec = importlib.util.spec_from_file_location(module_name, module_path)
    module = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


def load_module_dict(module_path) -> Dict:
    """Load a dict of the public variables defined in a python module, ``{var_name:value}``."""
    module = load_module_from_path(module_path)
    return {
        key: value for key, value in module.__dict__.items()
        if not key.startswith("_") and not callable(value)
        and not isinstance(value, type(sys))
    }


def load_config(filename):
    """Load variable names (lower case) and their values as a dict from a .py file."""
    try:
        return {k.lower(): v for k, v in load_module_dict(filename).items()}
    except FileNotFoundError:
        return {}


def make_list(value):
    """Turn a string, list or other collection into a list.

    Split a string on comma.
    """
    if isinstance(value, list):
        return value
    if isinstance(value, str):
        return [v.strip(" ") for v in value.split(",") if v.strip(" ")]
    return list(value)


def parse_fractions(value: Union[str, Iterable]) -> List[float]:
    """Parse a comma separated grid of fractions, or a ``start:stop:step`` range."""
    if isinstance(value, str) and value.count(":") == 2:
        start, stop, step = (float(v) for v in value.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(v) for v in make_list(value)]


def write_jsonl(output_file: Union[str, Path], rows: Iterable[dict]):
    """Write one json object per line, with sorted keys."""
    logging.info("Write records to %s", output_file)
    with open(output_file, "w", encoding="utf-8", newline="\n") as jsonl_file:
        for row in rows:
            jsonl_file.write(json.dumps(row, sort_keys=True, allow_nan=False))
            jsonl_file.write("\n")


def read_jsonl(input_file: Union[str, Path]) -> List[dict]:
    """Read a file with one json object per line. Blank lines are skipped."""
    logging.debug("Read records from %s", input_file)
    with open(input_file, encoding="utf-8") as jsonl_file:
        return [json.loads(line) for line in jsonl_file if line.strip()]


def write_frame(output_file: Union[str, Path], data: pd.DataFrame, mode: str = "w"):
    """Write a DataFrame as csv with full float precision."""
    logging.info("Write table to %s", output_file)
    header = mode == "w" or not Path(output_file).exists()
    data.to_csv(output_file, index=False, mode=mode, header=header,
                lineterminator="\n")


def data_errors(f):
    """Turn library errors into click errors with exit code 1."""
    @functools.wraps(f)
    def new_func(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ValueError, SchemaError, FrameSchemaError, KeyError) as error:
            logging.error("%s: %s", type(error).__name__, error)
            raise click.ClickException(str(error)) from error
    return new_func


def time_process(f):
    """Take the time of the process"""
    def new_func(*args, **kwargs):

        start = datetime.now()
        result = f(*args, **kwargs)
        end = datetime.now()
        click.secho(f"Processing time: {str(end - start)}", fg="blue", err=True)
        return result

    functools.update_wrapper(new_func, f)
    return new_func


def log_level(verbosity: int):
    """Calculate the log level given by the number of -v flags.

    0 = logging.WARNING (30)
    1 = logging.INFO (20)
    2 = logging.DEBUG (10)
    """
    return {0: 30, 1: 20, 2: 10}.get(verbosity, 10)


def set_logging_config(verbose=0, logfile="log.txt"):
    """Configure logging level and destination based on user input."""
    logging.basicConfig(
        level=logging.DEBUG,
        format=(
            "%(asctime)s | %(levelname)s "
            "| %(module)s-%(funcName)s-%(lineno)04d | %(message)s"),
        datefmt='%Y-%m-%d %H:%M',
        filename=logfile,
        filemode='a')

    if verbose:
        # define a Handler which writes log messages to stderr
        console = logging.StreamHandler()
        console.setLevel(log_level(verbose))
        # set a format which is simpler for console use
        formatter = logging.Formatter(
            '%(asctime)-10s | %(levelname)s | %(message)s')
        console.setFormatter(formatter)
        logging.getLogger('').addHandler(console)

    return verbose
