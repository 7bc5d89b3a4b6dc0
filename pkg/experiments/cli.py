"""
Command-line entry point.

    python -m experiments <subcommand> [options]

Subcommands map onto the experiment management commands; `verify-bound`
is the dashed spelling of `verify_bound`. Exit codes: 0 success, 1 domain
failure, 2 usage or config error.
"""

import os
import sys

SUBCOMMANDS = {
    "split": "split",
    "train": "train",
    "augment": "augment",
    "eval": "eval",
    "verify-bound": "verify_bound",
    "verify_bound": "verify_bound",
}

USAGE = (
    "usage: votegcl {split,train,augment,eval,verify-bound} [--config run.json] [options]\n"
)


def setup_django():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "votegcl.settings")
    import django

    django.setup()


def run_cli(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        sys.stderr.write(USAGE)
        return 2
    if argv[0] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0

    name = SUBCOMMANDS.get(argv[0])
    if name is None:
        sys.stderr.write(f"Unknown subcommand: {argv[0]!r}\n{USAGE}")
        return 2

    setup_django()
    from django.core.management import load_command_class

    command = load_command_class("experiments", name)
    try:
        command.run_from_argv(["votegcl", name, *argv[1:]])
    except SystemExit as exc:
        # argparse errors exit 2; CommandError exits with its returncode
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
