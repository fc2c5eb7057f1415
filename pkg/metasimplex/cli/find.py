# PYTHON_ARGCOMPLETE_OK
"""
Implements :ref:`cli_metasimplex_find`
"""

import argparse
import collections
import glob
import os
import sys
from typing import Iterable, List, Sequence, Tuple

import argcomplete
from argcomplete.completers import ChoicesCompleter, FilesCompleter

import metasimplex
from metasimplex.config import CONFIG_DIR, ExperimentConfig, load_config
from metasimplex.errors import ConfigError, SelectionError
from metasimplex.selection import LABEL_FIELDS, Selectable, Selection, parse_selection, select
from metasimplex.verify import CHECKS, Check

__all__ = ['main', 'selection_argument']


def main():  # pragma: no cover
    argcomplete.autocomplete(parser)

    args = parser.parse_args()
    args.func(args)


def list_checks(args):
    checks = select(CHECKS, args.selection)
    if args.long:
        _print_rows([(f'{c.suite}/{c.name}', f'{c.tolerance:g}', _largest_meta_size(c)) for c in checks],
                    header=('check', 'tolerance', 'largest N'))
    else:
        _print_rows([(f'{c.suite}/{c.name}',) for c in checks])


def list_configs(args):
    configs = _selected_configs(args)
    if args.long:
        _print_rows([(path, config.payoff.kind, config.integrator.scheme, str(config.dims.n), str(config.dims.c),
                      str(config.dims.c ** config.dims.n)) for config, path in configs],
                    header=('config', 'kind', 'scheme', 'n', 'c', 'N'))
    else:
        _print_rows([(path,) for config, path in configs])


def list_labels(args):
    items: Sequence[Selectable] = select(CHECKS, args.selection) if args.checks else \
        [config for config, path in _selected_configs(args)]
    counter = collections.Counter()
    for item in items:
        counter.update(item.selection_labels().get(args.field, ()))

    if args.count:
        ranked = sorted(counter.items(), key=lambda pair: (-pair[1], pair[0].casefold()))
        _print_rows([(str(count), label) for label, count in ranked])
    else:
        _print_rows([(label,) for label in sorted(counter, key=str.casefold)])


def _largest_meta_size(check: Check) -> str:
    sizes = check.selection_values()['N']
    return str(max(sizes)) if sizes else '-'


def _selected_configs(args) -> List[Tuple[ExperimentConfig, str]]:
    selected = []
    for path in sorted(glob.glob(os.path.join(args.folder, '**', '*.json'), recursive=True)):
        if path.endswith('.schema.json'):
            continue
        relative = os.path.relpath(path, args.folder)
        try:
            config = load_config(path)
        except ConfigError as e:
            if not args.no_messages:
                print(f'Skipping {relative}: {e}', file=sys.stderr)
            continue
        if args.selection is None or args.selection.matches(config):
            selected.append((config, relative))
    return selected


def _print_rows(rows: Iterable[Tuple[str, ...]], header: Tuple[str, ...] = ()):
    rows = [header, *rows] if header else list(rows)
    if not rows:
        return
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    for row in rows:
        print('  '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())


def _folder(path: str) -> str:
    if not os.path.isdir(path):
        raise argparse.ArgumentTypeError(f'"{path}" is not a folder')
    return path


def selection_argument(text: str) -> Selection:
    """Argument type for selection expressions."""
    try:
        return parse_selection(text)
    except SelectionError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_folder_argument(subparser: argparse.ArgumentParser):
    subparser.add_argument(
        'folder', type=_folder, nargs='?', default=CONFIG_DIR,
        help='folder searched recursively for experiment configs (default: the bundled configs)'
    ).completer = FilesCompleter(allowednames="*.7CA0B927-3B02-48EA-97A9-CB557E061992")  # type: ignore


# parser is on module level for sphinx-autoprogram
parser = argparse.ArgumentParser(description='Find verification checks and experiment configs by selection '
                                             'expression')

parser.add_argument('-v', '--version', action='version', version=f"%(prog)s ({metasimplex.__version__})")
parser.add_argument(
    '-e', '--expression', dest='selection', type=selection_argument,
    help='selection expression, e.g. "kind:egn and N <= 27" or "suite:geometry or tag:slow"'
)
parser.add_argument('-s', '--no-messages', action='store_true', default=False,
                    help='do not report invalid configs')

subparsers = parser.add_subparsers(metavar="action", required=True)

# checks
parser_checks = subparsers.add_parser('checks', help='list verification checks as suite/name')
parser_checks.set_defaults(func=list_checks)
parser_checks.add_argument('-l', '--long', action='store_true',
                           help='also show the tolerance and the largest meta-simplex dimension')

# configs
parser_configs = subparsers.add_parser('configs', help='list experiment config paths')
parser_configs.set_defaults(func=list_configs)
parser_configs.add_argument('-l', '--long', action='store_true',
                            help='also show payoff kind, scheme and dimensions')
_add_folder_argument(parser_configs)

# labels
parser_labels = subparsers.add_parser('labels', help='list the labels of one field of configs or checks')
parser_labels.set_defaults(func=list_labels)
parser_labels.add_argument(
    'field', choices=LABEL_FIELDS, help='label field'
).completer = ChoicesCompleter(LABEL_FIELDS)  # type: ignore
parser_labels.add_argument('-c', '--count', action='store_true', help='prefix every label with its number of uses')
parser_labels.add_argument('--checks', action='store_true', help='list labels of verification checks instead')
_add_folder_argument(parser_labels)


if __name__ == "__main__":
    main()
